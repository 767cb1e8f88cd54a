//! Conversion between numbers/coordinates and the spoken-style text used
//! in radio chatter, in both directions: rendering values into contexts
//! and recognizing them again inside generated dialogue.

use std::fmt::Write as _;

use thiserror::Error;

use crate::geo::GeoPoint;

#[derive(Debug, Error, PartialEq)]
pub enum VerbalizeError {
    #[error("non-digit character {0:?}")]
    NonDigit(char),
    #[error("empty number")]
    Empty,
    #[error("number {0} out of range (must be below 1000000)")]
    OutOfRange(u64),
    #[error("unrecognized number word {0:?}")]
    UnknownWord(String),
    #[error("number overflows u64")]
    Overflow,
}

/// How numbers are spoken: digit by digit ("one two three") or as full
/// cardinals ("one hundred twenty-three").
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NumberStyle {
    pub digit_by_digit: bool,
}

const DIGITS: [&str; 10] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
];

const TEENS: [&str; 10] = [
    "ten",
    "eleven",
    "twelve",
    "thirteen",
    "fourteen",
    "fifteen",
    "sixteen",
    "seventeen",
    "eighteen",
    "nineteen",
];

const TENS: [&str; 8] = [
    "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];

/// NATO phonetic alphabet as spoken in the source dialogues.
const NATO: [&str; 26] = [
    "Alfa", "Bravo", "Charlie", "Delta", "Echo", "Foxtrot", "Golf", "Hotel", "India", "Juliet",
    "Kilo", "Lima", "Mike", "November", "Oscar", "Papa", "Quebec", "Romeo", "Sierra", "Tango",
    "Uniform", "Victor", "Whisky", "Xray", "Yankee", "Zulu",
];

/// Renders a digit string one word per digit: "123" -> "one two three".
pub fn digits_to_words(digits: &str) -> Result<String, VerbalizeError> {
    if digits.is_empty() {
        return Err(VerbalizeError::Empty);
    }
    let mut words = Vec::with_capacity(digits.len());
    for c in digits.chars() {
        match c.to_digit(10) {
            Some(d) => words.push(DIGITS[d as usize]),
            None => return Err(VerbalizeError::NonDigit(c)),
        }
    }
    Ok(words.join(" "))
}

/// Standard English cardinal below one million, hyphenated tens-units
/// and no "and": 123 -> "one hundred twenty-three".
pub fn number_to_words(n: u64) -> Result<String, VerbalizeError> {
    if n >= 1_000_000 {
        return Err(VerbalizeError::OutOfRange(n));
    }
    if n == 0 {
        return Ok("zero".to_string());
    }
    let mut out = String::new();
    let thousands = n / 1000;
    let rest = n % 1000;
    if thousands > 0 {
        write!(out, "{} thousand", three_digits(thousands)).unwrap();
    }
    if rest > 0 {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&three_digits(rest));
    }
    Ok(out)
}

fn three_digits(n: u64) -> String {
    debug_assert!(n > 0 && n < 1000);
    let mut out = String::new();
    let hundreds = n / 100;
    let rest = n % 100;
    if hundreds > 0 {
        write!(out, "{} hundred", DIGITS[hundreds as usize]).unwrap();
    }
    if rest > 0 {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&two_digits(rest));
    }
    out
}

fn two_digits(n: u64) -> String {
    match n {
        1..=9 => DIGITS[n as usize].to_string(),
        10..=19 => TEENS[(n - 10) as usize].to_string(),
        _ => {
            let tens = TENS[(n / 10 - 2) as usize];
            if n % 10 == 0 {
                tens.to_string()
            } else {
                format!("{}-{}", tens, DIGITS[(n % 10) as usize])
            }
        }
    }
}

/// Parses a spoken number back to its value. Accepts digit-by-digit
/// sequences ("one two three" -> 123), cardinals with either hyphenated
/// or spaced compounds ("fifty-two", "fifty two"), and plain numerals.
pub fn words_to_value(text: &str) -> Result<u64, VerbalizeError> {
    let tokens: Vec<String> = text
        .split(|c: char| c.is_whitespace() || c == '-')
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect();
    if tokens.is_empty() {
        return Err(VerbalizeError::Empty);
    }
    if tokens.len() == 1 && tokens[0].bytes().all(|b| b.is_ascii_digit()) {
        return tokens[0].parse().map_err(|_| VerbalizeError::Overflow);
    }
    if tokens.iter().all(|t| digit_value(t).is_some()) {
        let mut value: u64 = 0;
        for t in &tokens {
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add(digit_value(t).unwrap()))
                .ok_or(VerbalizeError::Overflow)?;
        }
        return Ok(value);
    }
    let mut total: u64 = 0;
    let mut current: u64 = 0;
    for t in &tokens {
        if let Some(d) = digit_value(t) {
            current += d;
        } else if let Some(teen) = teen_value(t) {
            current += teen;
        } else if let Some(tens) = tens_value(t) {
            current += tens;
        } else {
            match t.as_str() {
                "hundred" => current = current.max(1) * 100,
                "thousand" => {
                    total = total
                        .checked_add(current.max(1).checked_mul(1000).ok_or(VerbalizeError::Overflow)?)
                        .ok_or(VerbalizeError::Overflow)?;
                    current = 0;
                }
                "million" => {
                    total = total
                        .checked_add(
                            current
                                .max(1)
                                .checked_mul(1_000_000)
                                .ok_or(VerbalizeError::Overflow)?,
                        )
                        .ok_or(VerbalizeError::Overflow)?;
                    current = 0;
                }
                other => return Err(VerbalizeError::UnknownWord(other.to_string())),
            }
        }
    }
    Ok(total + current)
}

fn digit_value(t: &str) -> Option<u64> {
    DIGITS.iter().position(|d| *d == t).map(|v| v as u64)
}

fn teen_value(t: &str) -> Option<u64> {
    TEENS.iter().position(|d| *d == t).map(|v| v as u64 + 10)
}

fn tens_value(t: &str) -> Option<u64> {
    TENS.iter().position(|d| *d == t).map(|v| (v as u64 + 2) * 10)
}

/// Spells a call sign the way it is spoken: letters become NATO words,
/// digits become digit words; anything else is dropped.
pub fn call_sign_words(raw: &str) -> String {
    let mut words = Vec::new();
    for c in raw.chars() {
        if c.is_ascii_alphabetic() {
            words.push(NATO[(c.to_ascii_uppercase() as u8 - b'A') as usize].to_string());
        } else if let Some(d) = c.to_digit(10) {
            words.push(DIGITS[d as usize].to_string());
        }
    }
    words.join(" ")
}

/// Renders a position in spoken degree-minutes form, e.g.
/// "three eight degrees three seven minutes North, one degrees three two
/// point one five minutes East". The plural "degrees"/"minutes" is used
/// for every value, matching the seed dialogues.
pub fn format_coordinate(
    p: &GeoPoint,
    style: NumberStyle,
    include_minutes: bool,
    include_decimal_minutes: bool,
) -> String {
    let lat = format_axis(
        p.lat().abs(),
        if p.lat() >= 0.0 { "North" } else { "South" },
        style,
        include_minutes,
        include_decimal_minutes,
    );
    let lon = format_axis(
        p.lon().abs(),
        if p.lon() >= 0.0 { "East" } else { "West" },
        style,
        include_minutes,
        include_decimal_minutes,
    );
    format!("{lat}, {lon}")
}

fn format_axis(
    value: f64,
    hemisphere: &str,
    style: NumberStyle,
    include_minutes: bool,
    include_decimal_minutes: bool,
) -> String {
    let render = |n: u64| -> String {
        if style.digit_by_digit {
            digits_to_words(&n.to_string()).expect("decimal digits")
        } else {
            number_to_words(n).expect("coordinate degrees/minutes are small")
        }
    };
    if !include_minutes {
        return format!("{} degrees {}", render(value.round() as u64), hemisphere);
    }
    let mut degrees = value.floor() as u64;
    let minutes = (value - value.floor()) * 60.0;
    if include_decimal_minutes {
        // Hundredths of minutes, carried into degrees when rounding tops out.
        let mut cents = (minutes * 100.0).round() as u64;
        if cents >= 6000 {
            cents -= 6000;
            degrees += 1;
        }
        let whole = cents / 100;
        let frac = cents % 100;
        if frac == 0 {
            return format!(
                "{} degrees {} minutes {}",
                render(degrees),
                render(whole),
                hemisphere
            );
        }
        let frac_words = digits_to_words(&format!("{frac:02}")).expect("two digits");
        format!(
            "{} degrees {} point {} minutes {}",
            render(degrees),
            render(whole),
            frac_words,
            hemisphere
        )
    } else {
        let mut whole = minutes.round() as u64;
        if whole >= 60 {
            whole -= 60;
            degrees += 1;
        }
        format!(
            "{} degrees {} minutes {}",
            render(degrees),
            render(whole),
            hemisphere
        )
    }
}

/// A byte range inside the scanned text plus the covered text itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TokenKind {
    Numeral,
    DigitWord,
    LexiconWord,
    Other,
}

fn token_kind(token: &str) -> TokenKind {
    if token.bytes().all(|b| b.is_ascii_digit()) {
        return TokenKind::Numeral;
    }
    let lower = token.to_lowercase();
    if digit_value(&lower).is_some() {
        return TokenKind::DigitWord;
    }
    if teen_value(&lower).is_some()
        || tens_value(&lower).is_some()
        || matches!(lower.as_str(), "hundred" | "thousand" | "million")
    {
        return TokenKind::LexiconWord;
    }
    // Hyphenated compounds like "twenty-three" count as lexicon words.
    if let Some((a, b)) = lower.split_once('-') {
        if tens_value(a).is_some() && digit_value(b).is_some() {
            return TokenKind::LexiconWord;
        }
    }
    TokenKind::Other
}

fn tokenize(text: &str) -> Vec<(usize, usize, String)> {
    let mut tokens = Vec::new();
    let mut start: Option<usize> = None;
    let push = |from: usize, to: usize, tokens: &mut Vec<(usize, usize, String)>| {
        let tok = text[from..to].trim_matches('-');
        if !tok.is_empty() {
            let offset = text[from..to].find(tok).unwrap();
            tokens.push((from + offset, from + offset + tok.len(), tok.to_string()));
        }
    };
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() || c == '-' {
            if start.is_none() {
                start = Some(i);
            }
        } else if let Some(s) = start.take() {
            push(s, i, &mut tokens);
        }
    }
    if let Some(s) = start {
        push(s, text.len(), &mut tokens);
    }
    tokens
}

/// Finds numbers that are not spoken digit by digit: Arabic numerals of
/// any length and cardinal number words ("hundred", "fifty", teens and
/// hyphenated compounds). Standalone digit words are fine; digit words
/// only extend a span that a cardinal word already opened.
pub fn find_non_digit_numbers(text: &str) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, usize)> = None;
    let close = |open: &mut Option<(usize, usize)>, spans: &mut Vec<Span>| {
        if let Some((s, e)) = open.take() {
            spans.push(Span {
                start: s,
                end: e,
                text: text[s..e].to_string(),
            });
        }
    };
    for (start, end, token) in tokenize(text) {
        match token_kind(&token) {
            TokenKind::Numeral => {
                close(&mut open, &mut spans);
                spans.push(Span {
                    start,
                    end,
                    text: token,
                });
            }
            TokenKind::LexiconWord => match &mut open {
                Some((_, e)) => *e = end,
                None => open = Some((start, end)),
            },
            TokenKind::DigitWord => {
                if let Some((_, e)) = &mut open {
                    *e = end;
                }
            }
            TokenKind::Other => close(&mut open, &mut spans),
        }
    }
    close(&mut open, &mut spans);
    spans
}

/// A distance stated in the text, as `<number phrase> nautical mile(s)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatedDistance {
    pub value: u64,
    pub span: Span,
}

/// Extracts every stated `<number> nautical mile(s)` occurrence. The
/// number phrase may be digit words, cardinal words or a numeral;
/// occurrences whose phrase cannot be parsed are skipped.
pub fn extract_stated_distances(text: &str) -> Vec<StatedDistance> {
    let tokens = tokenize(text);
    let mut out = Vec::new();
    for i in 0..tokens.len() {
        if !tokens[i].2.eq_ignore_ascii_case("nautical") {
            continue;
        }
        let Some(next) = tokens.get(i + 1) else {
            continue;
        };
        if !(next.2.eq_ignore_ascii_case("mile") || next.2.eq_ignore_ascii_case("miles")) {
            continue;
        }
        let mut j = i;
        while j > 0 && token_kind(&tokens[j - 1].2) != TokenKind::Other {
            j -= 1;
        }
        if j == i {
            continue;
        }
        let phrase_tokens = &tokens[j..i];
        let phrase: Vec<&str> = phrase_tokens.iter().map(|t| t.2.as_str()).collect();
        if let Ok(value) = words_to_value(&phrase.join(" ")) {
            let (start, end) = (phrase_tokens[0].0, phrase_tokens[phrase_tokens.len() - 1].1);
            out.push(StatedDistance {
                value,
                span: Span {
                    start,
                    end,
                    text: text[start..end].to_string(),
                },
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn digits_examples() {
        assert_eq!(digits_to_words("123").unwrap(), "one two three");
        assert_eq!(digits_to_words("0").unwrap(), "zero");
        assert_eq!(digits_to_words("90").unwrap(), "nine zero");
        assert_eq!(digits_to_words("12a"), Err(VerbalizeError::NonDigit('a')));
        assert_eq!(digits_to_words(""), Err(VerbalizeError::Empty));
    }

    #[test]
    fn cardinal_examples() {
        assert_eq!(number_to_words(123).unwrap(), "one hundred twenty-three");
        assert_eq!(number_to_words(129).unwrap(), "one hundred twenty-nine");
        assert_eq!(number_to_words(0).unwrap(), "zero");
        assert_eq!(number_to_words(100).unwrap(), "one hundred");
        assert_eq!(number_to_words(54).unwrap(), "fifty-four");
        assert_eq!(number_to_words(97).unwrap(), "ninety-seven");
        assert_eq!(number_to_words(1000).unwrap(), "one thousand");
        assert_eq!(
            number_to_words(123_456).unwrap(),
            "one hundred twenty-three thousand four hundred fifty-six"
        );
        assert_eq!(number_to_words(1_000_000), Err(VerbalizeError::OutOfRange(1_000_000)));
    }

    #[test]
    fn digit_round_trip_random_strings() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let len = rng.gen_range(1..=15);
            let digits: String = (0..len)
                .map(|_| char::from(b'0' + rng.gen_range(0..10u8)))
                .collect();
            let words = digits_to_words(&digits).unwrap();
            let value = words_to_value(&words).unwrap();
            assert_eq!(value, digits.parse::<u64>().unwrap(), "digits {digits}");
        }
    }

    #[test]
    fn words_parser_accepts_spaced_and_hyphenated() {
        assert_eq!(words_to_value("fifty two").unwrap(), 52);
        assert_eq!(words_to_value("fifty-two").unwrap(), 52);
        assert_eq!(words_to_value("one hundred fifty two").unwrap(), 152);
        assert_eq!(words_to_value("two two").unwrap(), 22);
        assert_eq!(words_to_value("12").unwrap(), 12);
        assert!(words_to_value("fish").is_err());
    }

    #[test]
    fn call_sign_spelling() {
        assert_eq!(
            call_sign_words("WDL5755"),
            "Whisky Delta Lima five seven five five"
        );
        assert_eq!(call_sign_words("wdg2769"), "Whisky Delta Golf two seven six nine");
    }

    #[test]
    fn coordinate_digit_style_with_decimal_minutes() {
        let p = GeoPoint::new(38.0 + 37.0 / 60.0, 1.0 + 32.15 / 60.0).unwrap();
        let text = format_coordinate(&p, NumberStyle { digit_by_digit: true }, true, true);
        assert_eq!(
            text,
            "three eight degrees three seven minutes North, one degrees three two point one five minutes East"
        );
    }

    #[test]
    fn coordinate_word_style_degrees_only() {
        let p = GeoPoint::new(-37.0, 138.0).unwrap();
        let text = format_coordinate(&p, NumberStyle { digit_by_digit: false }, false, false);
        assert_eq!(text, "thirty-seven degrees South, one hundred thirty-eight degrees East");
    }

    #[test]
    fn coordinate_origin_ties_north_east() {
        let p = GeoPoint::new(0.0, 0.0).unwrap();
        let text = format_coordinate(&p, NumberStyle { digit_by_digit: true }, false, false);
        assert_eq!(text, "zero degrees North, zero degrees East");
    }

    /// Independent re-parse of the formatter output, used as its oracle.
    fn reparse_axis(text: &str) -> f64 {
        let (body, _) = text.rsplit_once(' ').unwrap();
        let sign = if text.ends_with("South") || text.ends_with("West") {
            -1.0
        } else {
            1.0
        };
        let (deg_part, min_part) = match body.split_once(" degrees") {
            Some((d, rest)) => (d, rest.trim()),
            None => (body, ""),
        };
        let degrees = words_to_value(deg_part).unwrap() as f64;
        if min_part.is_empty() {
            return sign * degrees;
        }
        let min_body = min_part.trim_end_matches(" minutes");
        let minutes = match min_body.split_once(" point ") {
            Some((whole, frac)) => {
                let frac_digits: String = frac
                    .split_whitespace()
                    .map(|w| char::from(b'0' + words_to_value(w).unwrap() as u8))
                    .collect();
                words_to_value(whole).unwrap() as f64
                    + frac_digits.parse::<f64>().unwrap() / 10f64.powi(frac_digits.len() as i32)
            }
            None => words_to_value(min_body).unwrap() as f64,
        };
        sign * (degrees + minutes / 60.0)
    }

    #[test]
    fn coordinate_reparses_within_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..500 {
            let p = GeoPoint::new(rng.gen_range(-89.9..89.9), rng.gen_range(-179.9..179.9)).unwrap();
            let style = NumberStyle { digit_by_digit: rng.gen_bool(0.5) };
            let text = format_coordinate(&p, style, true, true);
            let (lat_text, lon_text) = split_coordinate(&text);
            let lat = reparse_axis(lat_text);
            let lon = reparse_axis(lon_text);
            // 0.01 minutes of tolerance, in degrees.
            let tol = 0.01 / 60.0 + 1e-9;
            assert!((lat - p.lat()).abs() < tol, "{text} vs {p}");
            assert!((lon - p.lon()).abs() < tol, "{text} vs {p}");
        }
    }

    fn split_coordinate(text: &str) -> (&str, &str) {
        for hemi in [" North, ", " South, "] {
            if let Some(pos) = text.find(hemi) {
                return (&text[..pos + hemi.len() - 2], &text[pos + hemi.len()..]);
            }
        }
        panic!("no latitude hemisphere in {text}");
    }

    #[test]
    fn non_digit_numbers_examples() {
        let spans = find_non_digit_numbers("MMSI 454");
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].text, "454");

        let spans = find_non_digit_numbers("one hundred fifty two nautical miles");
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].text, "hundred fifty two");

        assert!(find_non_digit_numbers("three zero minutes").is_empty());
        assert_eq!(find_non_digit_numbers("twenty-eight crew").len(), 1);
    }

    #[test]
    fn stated_distance_examples() {
        let d = extract_stated_distances("five nautical miles south east of the island");
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].value, 5);

        let d = extract_stated_distances("about two two nautical miles off");
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].value, 22);

        assert!(extract_stated_distances("no distances here").is_empty());
        assert!(extract_stated_distances("a nautical mile away").is_empty());

        let d = extract_stated_distances("Port Vila, one hundred fifty two nautical miles.");
        assert_eq!(d[0].value, 152);
    }

    #[test]
    fn stated_distance_round_trip_full_range() {
        for n in 0..=100_000u64 {
            let text = format!("{} nautical miles", number_to_words(n).unwrap());
            let got = extract_stated_distances(&text);
            assert_eq!(got.len(), 1, "failed at {n}");
            assert_eq!(got[0].value, n, "failed at {n}");
        }
    }
}
