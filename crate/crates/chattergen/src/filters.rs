//! The 26-filter verification gate. Each filter inspects one aspect of a
//! generated dialogue against its context: SMCP structure (Mayday
//! opening, Coast Guard response, completeness), required context values
//! stated verbatim, hallucinated identifiers, category keywords,
//! duplicate sentences, spoken-number style and Rouge-L uniqueness.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::context::{DistressCategory, DistressContext};
use crate::rouge::max_similarity;
use crate::verbalize::{extract_stated_distances, find_non_digit_numbers, words_to_value};

/// Rouge-L threshold above which a candidate counts as a duplicate.
pub const UNIQUENESS_THRESHOLD: f64 = 0.7;

/// Identifiers of the 26 verification filters.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum FilterId {
    Parentheses,
    Bracket,
    Incomplete,
    WrongCategory,
    VesselName,
    VesselMMSI,
    VesselCallSign,
    VesselType,
    VesselCoordinates,
    CollidedVesselName,
    CollidedVesselType,
    HallucinatedMMSI,
    HallucinatedCallSign,
    UnknownInformation,
    Mayday,
    VesselNameNotAfterMayday,
    DuplicateSentences,
    CargoLogic,
    HallucinatedVesselType,
    BothPortAndHarbor,
    NoCoastGuard,
    DigitByDigit,
    WrongDistanceClosestPlace,
    WrongDistanceNearestPort,
    WrongDistanceNearestHarbor,
    Uniqueness,
}

impl FilterId {
    pub const ALL: [FilterId; 26] = [
        FilterId::Parentheses,
        FilterId::Bracket,
        FilterId::Incomplete,
        FilterId::WrongCategory,
        FilterId::VesselName,
        FilterId::VesselMMSI,
        FilterId::VesselCallSign,
        FilterId::VesselType,
        FilterId::VesselCoordinates,
        FilterId::CollidedVesselName,
        FilterId::CollidedVesselType,
        FilterId::HallucinatedMMSI,
        FilterId::HallucinatedCallSign,
        FilterId::UnknownInformation,
        FilterId::Mayday,
        FilterId::VesselNameNotAfterMayday,
        FilterId::DuplicateSentences,
        FilterId::CargoLogic,
        FilterId::HallucinatedVesselType,
        FilterId::BothPortAndHarbor,
        FilterId::NoCoastGuard,
        FilterId::DigitByDigit,
        FilterId::WrongDistanceClosestPlace,
        FilterId::WrongDistanceNearestPort,
        FilterId::WrongDistanceNearestHarbor,
        FilterId::Uniqueness,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FilterId::Parentheses => "Parentheses",
            FilterId::Bracket => "Bracket",
            FilterId::Incomplete => "Incomplete",
            FilterId::WrongCategory => "WrongCategory",
            FilterId::VesselName => "VesselName",
            FilterId::VesselMMSI => "VesselMMSI",
            FilterId::VesselCallSign => "VesselCallSign",
            FilterId::VesselType => "VesselType",
            FilterId::VesselCoordinates => "VesselCoordinates",
            FilterId::CollidedVesselName => "CollidedVesselName",
            FilterId::CollidedVesselType => "CollidedVesselType",
            FilterId::HallucinatedMMSI => "HallucinatedMMSI",
            FilterId::HallucinatedCallSign => "HallucinatedCallSign",
            FilterId::UnknownInformation => "UnknownInformation",
            FilterId::Mayday => "Mayday",
            FilterId::VesselNameNotAfterMayday => "VesselNameNotAfterMayday",
            FilterId::DuplicateSentences => "DuplicateSentences",
            FilterId::CargoLogic => "CargoLogic",
            FilterId::HallucinatedVesselType => "HallucinatedVesselType",
            FilterId::BothPortAndHarbor => "BothPortAndHarbor",
            FilterId::NoCoastGuard => "NoCoastGuard",
            FilterId::DigitByDigit => "DigitByDigit",
            FilterId::WrongDistanceClosestPlace => "WrongDistanceClosestPlace",
            FilterId::WrongDistanceNearestPort => "WrongDistanceNearestPort",
            FilterId::WrongDistanceNearestHarbor => "WrongDistanceNearestHarbor",
            FilterId::Uniqueness => "Uniqueness",
        }
    }
}

impl fmt::Display for FilterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FilterId::ALL
            .iter()
            .find(|id| id.name() == s)
            .copied()
            .ok_or_else(|| format!("unknown filter {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

/// One (instruction, context, chatter) unit flowing through the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticInstance {
    pub category: DistressCategory,
    pub instruction: String,
    pub context: DistressContext,
    #[serde(deserialize_with = "deserialize_chatter")]
    pub chatter: String,
}

/// Chatter may arrive as one newline-joined string or a list of turns.
fn deserialize_chatter<'de, D: serde::Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Text(String),
        Turns(Vec<String>),
    }
    Ok(match Raw::deserialize(d)? {
        Raw::Text(s) => s,
        Raw::Turns(turns) => turns.join("\n"),
    })
}

/// Per-filter verdicts for one instance; `valid` iff nothing failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub verdicts: BTreeMap<FilterId, Verdict>,
    pub valid: bool,
}

impl FilterReport {
    pub fn failed(&self) -> Vec<FilterId> {
        self.verdicts
            .iter()
            .filter(|(_, v)| **v == Verdict::Fail)
            .map(|(id, _)| *id)
            .collect()
    }

    pub fn verdict(&self, id: FilterId) -> Verdict {
        self.verdicts[&id]
    }
}

/// Keywords whose presence marks a chatter as belonging to a category.
/// Matching is case-insensitive substring search.
pub fn category_keywords(category: DistressCategory) -> &'static [&'static str] {
    match category {
        DistressCategory::FireExplosion => &["fire", "explosion"],
        DistressCategory::Flooding => &[
            "flood",
            "taking on water",
            "taken on water",
            "took on water",
        ],
        DistressCategory::Collision => &["collide", "collision"],
        DistressCategory::Grounding => &["grounding", "grounded", "aground"],
        DistressCategory::ListDangerOfCapsizing => &["list", "danger of capsiz"],
        DistressCategory::Sinking => &["sink"],
        DistressCategory::ArmedAttackPiracy => {
            &["attack", "armed", "pirate", "armament", "weapon", "gun"]
        }
        DistressCategory::PersonOverboard => &["overboard", "over board", "fell", "fall"],
        DistressCategory::DisabledAndAdrift => &["disabled", "drift"],
        DistressCategory::UndesignatedDistress => &[],
    }
}

/// Splits a chatter into turns: one per line, surrounding quotation
/// marks and trailing commas stripped, empty turns dropped.
pub fn split_turns(chatter: &str) -> Vec<String> {
    chatter
        .lines()
        .map(|line| {
            let mut t = line.trim();
            t = t.strip_suffix(',').unwrap_or(t).trim();
            t = t.strip_suffix('"').unwrap_or(t);
            t = t.strip_prefix('"').unwrap_or(t);
            t.trim().to_string()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

/// Lowercase and collapse whitespace; punctuation untouched.
fn norm_ws(text: &str) -> String {
    text.to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Lowercase, replace every non-alphanumeric run with a single space.
fn norm_alnum(text: &str) -> String {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Case-insensitive, whitespace-normalized containment.
fn contains_value(haystack: &str, needle: &str) -> bool {
    norm_ws(haystack).contains(&norm_ws(needle))
}

/// Replaces case-insensitive occurrences of `needle` (whitespace
/// normalized) with a space, so later keyword scans cannot match inside
/// it.
fn mask_out(haystack_norm: &str, needle: &str) -> String {
    let needle = norm_ws(needle);
    if needle.is_empty() {
        return haystack_norm.to_string();
    }
    haystack_norm.replace(&needle, " ")
}

/// Sentences of a chatter: per turn, split on `.`/`?`/`!`, trimmed.
fn sentences(chatter: &str) -> Vec<String> {
    let mut out = Vec::new();
    for turn in split_turns(chatter) {
        for s in turn.split(['.', '?', '!']) {
            let s = s.trim();
            if !s.is_empty() {
                out.push(s.to_string());
            }
        }
    }
    out
}

const MAYDAY_PHRASE: &str = "mayday, mayday, mayday";

const COAST_GUARD_PHRASES: [&str; 3] = [
    "this is coast guard",
    "coast guard here",
    "coast guard responding",
];

const NATO_WORDS: [&str; 30] = [
    "alfa", "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india",
    "juliet", "juliett", "kilo", "lima", "mike", "november", "oscar", "papa", "quebec", "romeo",
    "sierra", "tango", "uniform", "victor", "whiskey", "whisky", "xray", "yankee", "zulu", "x-ray",
];

const DIGIT_WORDS: [&str; 10] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
];

/// The closed vessel-type vocabulary the hallucination check knows,
/// with synonyms mapping onto a canonical form.
const VESSEL_TYPE_LEXICON: [(&str, &str); 11] = [
    ("passenger vessel", "passenger vessel"),
    ("cargo vessel", "cargo vessel"),
    ("tanker", "tanker"),
    ("fishing vessel", "fishing vessel"),
    ("motor vessel", "motor vessel"),
    ("sailing vessel", "sailing vessel"),
    ("sailboat", "sailing vessel"),
    ("pleasure craft", "pleasure craft"),
    ("tug", "tug"),
    ("military vessel", "military vessel"),
    ("dredger", "dredger"),
];

/// The verification engine. The vessel-type vocabulary can be extended
/// through configuration; everything else is fixed.
#[derive(Debug, Clone, Default)]
pub struct FilterEngine {
    extra_vessel_types: Vec<String>,
}

impl FilterEngine {
    pub fn new() -> Self {
        FilterEngine::default()
    }

    pub fn with_extra_vessel_types(types: Vec<String>) -> Self {
        FilterEngine {
            extra_vessel_types: types.into_iter().map(|t| t.to_lowercase()).collect(),
        }
    }

    fn type_lexicon(&self) -> Vec<(String, String)> {
        let mut lex: Vec<(String, String)> = VESSEL_TYPE_LEXICON
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        for t in &self.extra_vessel_types {
            lex.push((t.clone(), t.clone()));
        }
        lex
    }

    /// Which filters apply to this instance. Identity filters gate on
    /// their context field being present, hallucination filters on it
    /// being absent; collided checks only exist for collisions.
    pub fn applicable_filters(&self, instance: &SyntheticInstance) -> BTreeSet<FilterId> {
        let ctx = &instance.context;
        let collision = instance.category == DistressCategory::Collision;
        let mut set = BTreeSet::new();
        for id in FilterId::ALL {
            let applicable = match id {
                FilterId::VesselMMSI => ctx.vessel_mmsi.is_some(),
                FilterId::HallucinatedMMSI => ctx.vessel_mmsi.is_none(),
                FilterId::VesselCallSign => ctx.vessel_call_sign.is_some(),
                FilterId::HallucinatedCallSign => ctx.vessel_call_sign.is_none(),
                FilterId::VesselType => ctx.vessel_type.is_some(),
                FilterId::CollidedVesselName => collision && ctx.collided_name().is_some(),
                FilterId::CollidedVesselType => collision && ctx.collided_type().is_some(),
                FilterId::CargoLogic => ctx.can_have_cargo.is_none(),
                FilterId::BothPortAndHarbor => {
                    ctx.nearest_port.is_some() && ctx.nearest_harbor.is_some()
                }
                FilterId::DigitByDigit => ctx.digit_by_digit,
                FilterId::WrongDistanceClosestPlace => ctx.closest_place_name.is_some(),
                FilterId::WrongDistanceNearestPort => ctx.nearest_port.is_some(),
                FilterId::WrongDistanceNearestHarbor => ctx.nearest_harbor.is_some(),
                _ => true,
            };
            if applicable {
                set.insert(id);
            }
        }
        set
    }

    /// Applies one filter, assuming it is applicable to the instance.
    pub fn apply_filter(
        &self,
        id: FilterId,
        instance: &SyntheticInstance,
        pool: &[String],
    ) -> Verdict {
        let ctx = &instance.context;
        let chatter = &instance.chatter;
        let fail_if = |cond: bool| if cond { Verdict::Fail } else { Verdict::Pass };
        match id {
            FilterId::Parentheses => fail_if(chatter.contains('(') || chatter.contains(')')),
            FilterId::Bracket => fail_if(chatter.contains('[') || chatter.contains(']')),
            FilterId::Incomplete => {
                let turns = split_turns(chatter);
                fail_if(!turns.last().map(|t| t.ends_with('.')).unwrap_or(false))
            }
            FilterId::WrongCategory => self.wrong_category(instance),
            FilterId::VesselName => fail_if(!contains_value(chatter, &ctx.vessel_name)),
            FilterId::VesselMMSI => {
                fail_if(!contains_value(chatter, ctx.vessel_mmsi.as_deref().unwrap_or("")))
            }
            FilterId::VesselCallSign => fail_if(!contains_value(
                chatter,
                ctx.vessel_call_sign.as_deref().unwrap_or(""),
            )),
            FilterId::VesselType => {
                fail_if(!contains_value(chatter, ctx.vessel_type.as_deref().unwrap_or("")))
            }
            FilterId::VesselCoordinates => {
                fail_if(!contains_value(chatter, &ctx.vessel_coordinate_dms))
            }
            FilterId::CollidedVesselName => {
                fail_if(!contains_value(chatter, ctx.collided_name().unwrap_or("")))
            }
            FilterId::CollidedVesselType => {
                fail_if(!contains_value(chatter, ctx.collided_type().unwrap_or("")))
            }
            FilterId::HallucinatedMMSI => self.hallucinated_mmsi(instance),
            FilterId::HallucinatedCallSign => self.hallucinated_call_sign(instance),
            FilterId::UnknownInformation => {
                let norm = norm_ws(chatter);
                let mmsi_leak = ctx.vessel_mmsi.is_none() && norm.contains("mmsi");
                let sign_leak = ctx.vessel_call_sign.is_none() && norm.contains("call sign");
                fail_if(mmsi_leak || sign_leak)
            }
            FilterId::Mayday => {
                let turns = split_turns(chatter);
                fail_if(
                    !turns
                        .first()
                        .map(|t| norm_ws(t).starts_with(MAYDAY_PHRASE))
                        .unwrap_or(false),
                )
            }
            FilterId::VesselNameNotAfterMayday => self.name_after_mayday(instance),
            FilterId::DuplicateSentences => {
                let mut counts: HashMap<String, usize> = HashMap::new();
                for s in sentences(chatter) {
                    let normalized = norm_ws(&s);
                    if normalized.split_whitespace().count() > 3 {
                        *counts.entry(normalized).or_default() += 1;
                    }
                }
                fail_if(counts.values().any(|&n| n >= 2))
            }
            FilterId::CargoLogic => fail_if(norm_ws(chatter).contains("cargo")),
            FilterId::HallucinatedVesselType => self.hallucinated_vessel_type(instance),
            FilterId::BothPortAndHarbor => {
                let port = ctx.nearest_port.as_deref().unwrap_or("");
                let harbor = ctx.nearest_harbor.as_deref().unwrap_or("");
                fail_if(contains_value(chatter, port) && contains_value(chatter, harbor))
            }
            FilterId::NoCoastGuard => {
                let turns = split_turns(chatter);
                let responded = turns.get(1).is_some_and(|turn| {
                    let t = norm_alnum(turn);
                    COAST_GUARD_PHRASES.iter().any(|p| t.contains(p))
                });
                fail_if(!responded)
            }
            FilterId::DigitByDigit => fail_if(!find_non_digit_numbers(chatter).is_empty()),
            FilterId::WrongDistanceClosestPlace => self.wrong_distance(
                instance,
                ctx.closest_place_name.as_deref(),
                ctx.distance_to_nearest_place.as_deref(),
            ),
            FilterId::WrongDistanceNearestPort => self.wrong_distance(
                instance,
                ctx.nearest_port.as_deref(),
                ctx.distance_to_nearest_port.as_deref(),
            ),
            FilterId::WrongDistanceNearestHarbor => self.wrong_distance(
                instance,
                ctx.nearest_harbor.as_deref(),
                ctx.distance_to_nearest_harbor.as_deref(),
            ),
            FilterId::Uniqueness => {
                if pool.is_empty() {
                    Verdict::Pass
                } else {
                    let (score, _) = max_similarity(chatter, pool).expect("non-empty pool");
                    fail_if(score > UNIQUENESS_THRESHOLD)
                }
            }
        }
    }

    /// Runs every applicable filter once; the rest are marked
    /// not-applicable. Valid iff no filter failed.
    pub fn run_all(&self, instance: &SyntheticInstance, pool: &[String]) -> FilterReport {
        let applicable = self.applicable_filters(instance);
        let mut verdicts = BTreeMap::new();
        for id in FilterId::ALL {
            let verdict = if applicable.contains(&id) {
                self.apply_filter(id, instance, pool)
            } else {
                Verdict::NotApplicable
            };
            verdicts.insert(id, verdict);
        }
        let valid = !verdicts.values().any(|v| *v == Verdict::Fail);
        FilterReport { verdicts, valid }
    }

    fn wrong_category(&self, instance: &SyntheticInstance) -> Verdict {
        let ctx = &instance.context;
        // Names may legitimately contain keywords, so they are blanked
        // out before scanning.
        let mut hay = norm_ws(&instance.chatter);
        for name in [
            Some(ctx.vessel_name.as_str()),
            ctx.closest_place_name.as_deref(),
            ctx.nearest_port.as_deref(),
            ctx.nearest_harbor.as_deref(),
        ]
        .into_iter()
        .flatten()
        {
            hay = mask_out(&hay, name);
        }
        if instance.category == DistressCategory::UndesignatedDistress {
            // Undesignated chatters must avoid every other category's
            // keywords, except those of Disabled and Adrift.
            for cat in DistressCategory::ALL {
                if matches!(
                    cat,
                    DistressCategory::UndesignatedDistress | DistressCategory::DisabledAndAdrift
                ) {
                    continue;
                }
                if category_keywords(cat).iter().any(|k| hay.contains(k)) {
                    return Verdict::Fail;
                }
            }
            Verdict::Pass
        } else {
            let keywords = category_keywords(instance.category);
            if keywords.iter().any(|k| hay.contains(k)) {
                Verdict::Pass
            } else {
                Verdict::Fail
            }
        }
    }

    fn name_after_mayday(&self, instance: &SyntheticInstance) -> Verdict {
        let norm = norm_ws(&instance.chatter);
        let Some(pos) = norm.find(MAYDAY_PHRASE) else {
            return Verdict::Fail;
        };
        let after = &norm[pos + MAYDAY_PHRASE.len()..];
        let after = after.trim_start_matches(|c: char| !c.is_alphanumeric());
        let sentence = after
            .split(['.', '?', '!'])
            .next()
            .unwrap_or("");
        if sentence.contains(&norm_ws(&instance.context.vessel_name)) {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    /// Text with the context coordinate blanked, for identifier scans
    /// that must ignore the digits inside the position statement.
    fn chatter_without_coordinates(&self, instance: &SyntheticInstance) -> String {
        mask_out(
            &norm_ws(&instance.chatter),
            &instance.context.vessel_coordinate_dms,
        )
    }

    fn hallucinated_mmsi(&self, instance: &SyntheticInstance) -> Verdict {
        let hay = self.chatter_without_coordinates(instance);
        // A numeral of nine or more digits looks like an MMSI.
        let mut run = 0usize;
        for c in hay.chars() {
            if c.is_ascii_digit() {
                run += 1;
                if run >= 9 {
                    return Verdict::Fail;
                }
            } else {
                run = 0;
            }
        }
        // So does a run of nine or more consecutive digit words.
        let mut word_run = 0usize;
        for token in norm_alnum(&hay).split_whitespace() {
            if DIGIT_WORDS.contains(&token) {
                word_run += 1;
                if word_run >= 9 {
                    return Verdict::Fail;
                }
            } else {
                word_run = 0;
            }
        }
        Verdict::Pass
    }

    fn hallucinated_call_sign(&self, instance: &SyntheticInstance) -> Verdict {
        let hay = self.chatter_without_coordinates(instance);
        let mut nato_run = 0usize;
        for token in norm_alnum(&hay).split_whitespace() {
            if NATO_WORDS.contains(&token) {
                nato_run += 1;
            } else if DIGIT_WORDS.contains(&token) && nato_run >= 3 {
                return Verdict::Fail;
            } else {
                nato_run = 0;
            }
        }
        Verdict::Pass
    }

    fn hallucinated_vessel_type(&self, instance: &SyntheticInstance) -> Verdict {
        let ctx = &instance.context;
        let hay = norm_alnum(&instance.chatter);
        let lexicon = self.type_lexicon();
        // "We are a <type>" / "I am a <type>" phrasing is rejected even
        // for the context's own type.
        for (phrase, _) in &lexicon {
            if hay.contains(&format!("we are a {phrase}"))
                || hay.contains(&format!("i am a {phrase}"))
            {
                return Verdict::Fail;
            }
        }
        let mut allowed: Vec<String> = Vec::new();
        for t in [ctx.vessel_type.as_deref(), ctx.collided_type()]
            .into_iter()
            .flatten()
        {
            let canon = t.to_lowercase();
            for (phrase, canonical) in &lexicon {
                if *canonical == canon {
                    allowed.push(phrase.clone());
                }
            }
        }
        // Mentions of any other type from the vocabulary are treated as
        // hallucinated, but only when the context names a type at all.
        if ctx.vessel_type.is_some() {
            let tokens: Vec<&str> = hay.split_whitespace().collect();
            for (phrase, _) in &lexicon {
                if allowed.iter().any(|a| a == phrase) {
                    continue;
                }
                let phrase_tokens: Vec<&str> = phrase.split_whitespace().collect();
                let hit = tokens
                    .windows(phrase_tokens.len().max(1))
                    .any(|w| w == phrase_tokens.as_slice());
                if hit {
                    return Verdict::Fail;
                }
            }
        }
        Verdict::Pass
    }

    /// Every distance stated in a sentence that mentions `name` must
    /// equal the context distance for that entity.
    fn wrong_distance(
        &self,
        instance: &SyntheticInstance,
        name: Option<&str>,
        context_distance: Option<&str>,
    ) -> Verdict {
        let Some(name) = name else {
            return Verdict::Pass;
        };
        let Some(expected) = context_distance.and_then(|d| parse_distance(d)) else {
            return Verdict::Pass;
        };
        for sentence in sentences(&instance.chatter) {
            if !contains_value(&sentence, name) {
                continue;
            }
            for stated in extract_stated_distances(&sentence) {
                if stated.value != expected {
                    return Verdict::Fail;
                }
            }
        }
        Verdict::Pass
    }
}

fn parse_distance(text: &str) -> Option<u64> {
    words_to_value(text).ok().or_else(|| text.trim().parse().ok())
}
