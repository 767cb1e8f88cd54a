//! Rouge-L similarity over word tokens, used both by the uniqueness
//! filter and the uniqueness evaluation metric.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RougeError {
    #[error("similarity pool is empty")]
    EmptyPool,
}

/// Lowercased word tokens, split on any non-alphanumeric run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    tokens: Vec<String>,
}

impl TokenSeq {
    pub fn new(text: &str) -> Self {
        let tokens = text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(|t| t.to_lowercase())
            .collect();
        TokenSeq { tokens }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Longest-common-subsequence length over tokens; O(|a|*|b|) time with a
/// rolling row so memory stays O(min(|a|,|b|)).
pub fn lcs_len(a: &TokenSeq, b: &TokenSeq) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return 0;
    }
    let mut row = vec![0usize; short.len() + 1];
    for long_tok in long.tokens() {
        let mut diag = 0usize;
        for (j, short_tok) in short.tokens().iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if long_tok == short_tok {
                diag + 1
            } else {
                up.max(row[j])
            };
            diag = up;
        }
    }
    row[short.len()]
}

/// Rouge-L F-score, which reduces to `2L / (|a| + |b|)`. Two empty
/// sequences count as identical (1.0); exactly one empty scores 0.0.
pub fn rouge_l(a: &TokenSeq, b: &TokenSeq) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        (false, false) => 2.0 * lcs_len(a, b) as f64 / (a.len() + b.len()) as f64,
    }
}

pub fn rouge_l_text(a: &str, b: &str) -> f64 {
    rouge_l(&TokenSeq::new(a), &TokenSeq::new(b))
}

/// Maximum Rouge-L of `candidate` over the pool, with the argmax index.
/// Ties resolve to the lowest index.
pub fn max_similarity(candidate: &str, pool: &[String]) -> Result<(f64, usize), RougeError> {
    if pool.is_empty() {
        return Err(RougeError::EmptyPool);
    }
    let cand = TokenSeq::new(candidate);
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (idx, text) in pool.iter().enumerate() {
        let score = rouge_l(&cand, &TokenSeq::new(text));
        if score > best.0 {
            best = (score, idx);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Exponential-time subsequence oracle, fine for short inputs.
    fn lcs_oracle(a: &[String], b: &[String]) -> usize {
        if a.is_empty() || b.is_empty() {
            0
        } else if a[a.len() - 1] == b[b.len() - 1] {
            1 + lcs_oracle(&a[..a.len() - 1], &b[..b.len() - 1])
        } else {
            lcs_oracle(&a[..a.len() - 1], b).max(lcs_oracle(a, &b[..b.len() - 1]))
        }
    }

    #[test]
    fn lcs_identity_and_disjoint() {
        let a = TokenSeq::new("the cat sat on the mat");
        assert_eq!(lcs_len(&a, &a), a.len());
        let b = TokenSeq::new("dogs bark loudly");
        assert_eq!(lcs_len(&a, &b), 0);
    }

    #[test]
    fn lcs_mixed_example() {
        let a = TokenSeq::new("the cat sat on the mat");
        let b = TokenSeq::new("the cat ran to the mat");
        let expected = lcs_oracle(a.tokens(), b.tokens());
        assert_eq!(expected, 4);
        assert_eq!(lcs_len(&a, &b), expected);
    }

    #[test]
    fn rouge_examples() {
        assert_eq!(rouge_l_text("Same text here.", "Same text here."), 1.0);
        assert_eq!(rouge_l_text("alpha beta", "gamma delta"), 0.0);
        let score = rouge_l_text("the cat sat", "the cat ran");
        assert!((score - 2.0 * 2.0 / 6.0).abs() < 1e-9);
        assert_eq!(rouge_l_text("", ""), 1.0);
        assert_eq!(rouge_l_text("", "words"), 0.0);
    }

    #[test]
    fn rouge_symmetry_and_bounds_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let vocab = ["sea", "fire", "vessel", "over", "mayday", "port", "north"];
        let mut random_text = |rng: &mut ChaCha8Rng| {
            let n = rng.gen_range(0..10);
            (0..n)
                .map(|_| vocab[rng.gen_range(0..vocab.len())])
                .collect::<Vec<_>>()
                .join(" ")
        };
        for _ in 0..200 {
            let a = random_text(&mut rng);
            let b = random_text(&mut rng);
            let ab = rouge_l_text(&a, &b);
            assert_eq!(ab, rouge_l_text(&b, &a));
            assert!((0.0..=1.0).contains(&ab));
            let ta = TokenSeq::new(&a);
            let tb = TokenSeq::new(&b);
            if ab == 1.0 {
                assert_eq!(ta.tokens(), tb.tokens());
            }
        }
    }

    #[test]
    fn max_similarity_rules() {
        let pool = vec!["one two three".to_string(), "unrelated words".to_string()];
        let (score, idx) = max_similarity("one two three", &pool).unwrap();
        assert_eq!((score, idx), (1.0, 0));

        let (score, idx) = max_similarity("zebra", &pool[1..2].to_vec()).unwrap();
        assert_eq!((score, idx), (0.0, 0));

        assert_eq!(max_similarity("x", &[]), Err(RougeError::EmptyPool));
    }

    #[test]
    fn max_similarity_matches_linear_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let vocab = ["a", "b", "c", "d", "e", "f"];
        let mut random_text = |rng: &mut ChaCha8Rng| {
            let n = rng.gen_range(1..8);
            (0..n)
                .map(|_| vocab[rng.gen_range(0..vocab.len())])
                .collect::<Vec<_>>()
                .join(" ")
        };
        for _ in 0..50 {
            let pool: Vec<String> = (0..10).map(|_| random_text(&mut rng)).collect();
            let cand = random_text(&mut rng);
            let got = max_similarity(&cand, &pool).unwrap();
            let mut expected = (f64::NEG_INFINITY, 0usize);
            for (i, t) in pool.iter().enumerate() {
                let s = rouge_l_text(&cand, t);
                if s > expected.0 {
                    expected = (s, i);
                }
            }
            assert_eq!(got, expected);
        }
    }
}
