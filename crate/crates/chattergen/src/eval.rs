//! Dataset evaluation: the four quality metrics (format accuracy,
//! information accuracy, uniqueness, expert-annotated coherence),
//! per-category reporting and similarity histograms.

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::index::sample as index_sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{DistressCategory, COMPASS_WINDS};
use crate::filters::{FilterEngine, FilterId, FilterReport, SyntheticInstance, Verdict};
use crate::rouge::max_similarity;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("no weight assigned to check {0}")]
    MissingWeight(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
}

/// One scored check: a verification filter or the evaluation-only
/// compass consistency check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CheckId {
    Filter(FilterId),
    Compass,
}

impl fmt::Display for CheckId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckId::Filter(id) => id.fmt(f),
            CheckId::Compass => f.write_str("Compass"),
        }
    }
}

/// Coefficients of the format-accuracy metric. They sum to 10.
pub const FORMAT_WEIGHTS: [(FilterId, u32); 8] = [
    (FilterId::Parentheses, 1),
    (FilterId::Bracket, 1),
    (FilterId::Mayday, 1),
    (FilterId::Incomplete, 2),
    (FilterId::VesselNameNotAfterMayday, 1),
    (FilterId::DuplicateSentences, 2),
    (FilterId::NoCoastGuard, 1),
    (FilterId::DigitByDigit, 1),
];

/// Coefficients of the information-accuracy metric. They sum to 23 when
/// every check applies.
pub const INFO_WEIGHTS: [(CheckId, u32); 16] = [
    (CheckId::Filter(FilterId::WrongCategory), 2),
    (CheckId::Filter(FilterId::UnknownInformation), 1),
    (CheckId::Filter(FilterId::VesselName), 2),
    (CheckId::Filter(FilterId::VesselMMSI), 2),
    (CheckId::Filter(FilterId::VesselCallSign), 2),
    (CheckId::Filter(FilterId::VesselType), 2),
    (CheckId::Filter(FilterId::VesselCoordinates), 2),
    (CheckId::Filter(FilterId::HallucinatedMMSI), 1),
    (CheckId::Filter(FilterId::HallucinatedCallSign), 1),
    (CheckId::Filter(FilterId::CargoLogic), 1),
    (CheckId::Filter(FilterId::HallucinatedVesselType), 1),
    (CheckId::Compass, 2),
    (CheckId::Filter(FilterId::BothPortAndHarbor), 1),
    (CheckId::Filter(FilterId::WrongDistanceNearestPort), 1),
    (CheckId::Filter(FilterId::WrongDistanceNearestHarbor), 1),
    (CheckId::Filter(FilterId::WrongDistanceClosestPlace), 1),
];

/// Weighted pass ratio over applicable checks: passes count their
/// coefficient in the numerator, applicable checks count theirs in the
/// denominator, not-applicable checks drop out of both sums, and an
/// empty denominator scores 1.0.
pub fn score_weighted(items: &[(Verdict, u32)]) -> f64 {
    let mut numerator = 0u64;
    let mut denominator = 0u64;
    for (verdict, weight) in items {
        match verdict {
            Verdict::Pass => {
                numerator += *weight as u64;
                denominator += *weight as u64;
            }
            Verdict::Fail => denominator += *weight as u64,
            Verdict::NotApplicable => {}
        }
    }
    if denominator == 0 {
        1.0
    } else {
        numerator as f64 / denominator as f64
    }
}

/// Scores a verdict map against a weight table, rejecting verdicts the
/// table does not know about.
pub fn score_with_table(
    verdicts: &BTreeMap<CheckId, Verdict>,
    table: &[(CheckId, u32)],
) -> Result<f64, EvalError> {
    let mut items = Vec::with_capacity(verdicts.len());
    for (check, verdict) in verdicts {
        let weight = table
            .iter()
            .find(|(c, _)| c == check)
            .map(|(_, w)| *w)
            .ok_or_else(|| EvalError::MissingWeight(check.to_string()))?;
        items.push((*verdict, weight));
    }
    Ok(score_weighted(&items))
}

/// Format accuracy of one filter report.
pub fn format_accuracy(report: &FilterReport) -> f64 {
    let items: Vec<(Verdict, u32)> = FORMAT_WEIGHTS
        .iter()
        .map(|(id, w)| (report.verdict(*id), *w))
        .collect();
    score_weighted(&items)
}

/// Information accuracy of one filter report plus the compass verdict.
pub fn information_accuracy(report: &FilterReport, compass: Verdict) -> f64 {
    let items: Vec<(Verdict, u32)> = INFO_WEIGHTS
        .iter()
        .map(|(check, w)| {
            let verdict = match check {
                CheckId::Filter(id) => report.verdict(*id),
                CheckId::Compass => compass,
            };
            (verdict, *w)
        })
        .collect();
    score_weighted(&items)
}

/// Compass consistency: in sentences that mention the closest place, any
/// stated eight-wind direction must match the context's. Not applicable
/// when the context has no direction or the chatter never pairs a
/// direction with the place name.
pub fn compass_check(instance: &SyntheticInstance) -> Verdict {
    let ctx = &instance.context;
    let (Some(expected), Some(place)) = (&ctx.compass_direction, &ctx.closest_place_name) else {
        return Verdict::NotApplicable;
    };
    let expected_norm = normalize_winds(&normalize_words(expected));
    let expected = expected_norm.trim();
    let mut any_mention = false;
    for sentence in sentences_lower(&instance.chatter) {
        let place_lower = normalize_words(place);
        if place_lower.is_empty() || !sentence.contains(&place_lower) {
            continue;
        }
        let masked = sentence.replace(&place_lower, " ");
        for wind in winds_in(&masked) {
            any_mention = true;
            if wind != expected {
                return Verdict::Fail;
            }
        }
    }
    if any_mention {
        Verdict::Pass
    } else {
        Verdict::NotApplicable
    }
}

fn sentences_lower(chatter: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in chatter.lines() {
        for s in line.split(['.', '?', '!']) {
            let s = normalize_words(s);
            if !s.is_empty() {
                out.push(normalize_winds(&s));
            }
        }
    }
    out
}

fn normalize_words(text: &str) -> String {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Expands compact compass spellings so "southeast" and "south east"
/// compare equal.
fn normalize_winds(text: &str) -> String {
    let mut t = text.to_string();
    for (compact, spaced) in [
        ("northeast", "north east"),
        ("northwest", "north west"),
        ("southeast", "south east"),
        ("southwest", "south west"),
    ] {
        t = t.replace(compact, spaced);
    }
    t
}

/// Eight-wind phrases in a normalized sentence, longest match first so
/// "south east" is not double counted as "south" plus "east".
fn winds_in(sentence: &str) -> Vec<&'static str> {
    let tokens: Vec<&str> = sentence.split_whitespace().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let two = if i + 1 < tokens.len() {
            format!("{} {}", tokens[i], tokens[i + 1])
        } else {
            String::new()
        };
        if let Some(w) = COMPASS_WINDS.iter().find(|w| **w == two) {
            out.push(*w);
            i += 2;
            continue;
        }
        if let Some(w) = COMPASS_WINDS.iter().find(|w| **w == tokens[i]) {
            out.push(*w);
        }
        i += 1;
    }
    out
}

/// Uniqueness metric: `1 - s` for a highest similarity `s` up to the
/// 0.7 threshold, zero beyond it.
pub fn uniqueness_metric(chatter: &str, training_set: &[String]) -> Result<f64, EvalError> {
    if training_set.is_empty() {
        return Err(EvalError::EmptyTrainingSet);
    }
    let (s, _) = max_similarity(chatter, training_set).expect("non-empty training set");
    Ok(if s <= crate::filters::UNIQUENESS_THRESHOLD {
        1.0 - s
    } else {
        0.0
    })
}

/// Four metric scores plus the validity flag for one chatter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub format_accuracy: f64,
    pub information_accuracy: f64,
    pub uniqueness: f64,
    pub coherence: Option<f64>,
    pub valid: bool,
}

/// Evaluation of one dataset instance, with its position in the input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceEvaluation {
    pub index: usize,
    pub category: DistressCategory,
    pub record: EvaluationRecord,
    /// Whether the uniqueness filter itself passed (similarity <= 0.7).
    pub passes_uniqueness: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySummary {
    pub count: usize,
    pub format_accuracy: f64,
    pub information_accuracy: f64,
    pub uniqueness: f64,
    pub coherence: Option<f64>,
    pub valid_count: usize,
    pub unique_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetEvaluation {
    pub rows: Vec<InstanceEvaluation>,
    pub per_category: BTreeMap<String, CategorySummary>,
}

/// Expert coherence annotations: 1-5 rubric scores normalized to [0, 1].
#[derive(Debug, Default, Clone)]
pub struct AnnotationSet {
    pub coherence: BTreeMap<usize, f64>,
    pub rejected: Vec<String>,
}

/// Reads a `id,score,note` CSV (header optional). Scores outside 1..=5
/// are rejected with a message and do not enter the set.
pub fn ingest_annotations(path: &Path) -> Result<AnnotationSet, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut set = AnnotationSet::default();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.to_lowercase().starts_with("id,")) {
            continue;
        }
        let mut parts = line.splitn(3, ',');
        let id = parts.next().unwrap_or("").trim();
        let score = parts.next().unwrap_or("").trim();
        let (Ok(id), Ok(score)) = (id.parse::<usize>(), score.parse::<i64>()) else {
            set.rejected
                .push(format!("line {}: unparseable row {line:?}", lineno + 1));
            continue;
        };
        if !(1..=5).contains(&score) {
            set.rejected.push(format!(
                "line {}: score {score} outside the 1-5 rubric",
                lineno + 1
            ));
            continue;
        }
        set.coherence.insert(id, score as f64 / 5.0);
    }
    Ok(set)
}

/// Picks up to `per_category` instance indices per category for manual
/// annotation, deterministically for a seed.
pub fn sample_annotation_ids(
    instances: &[SyntheticInstance],
    per_category: usize,
    seed: u64,
) -> Vec<usize> {
    let mut by_category: BTreeMap<DistressCategory, Vec<usize>> = BTreeMap::new();
    for (i, inst) in instances.iter().enumerate() {
        by_category.entry(inst.category).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (_, indices) in by_category {
        let k = per_category.min(indices.len());
        let mut picked: Vec<usize> = index_sample(&mut rng, indices.len(), k)
            .into_iter()
            .map(|j| indices[j])
            .collect();
        picked.sort_unstable();
        out.extend(picked);
    }
    out
}

/// Scores every instance against the training set (which also serves as
/// the uniqueness pool for the filters) and aggregates per category.
pub fn evaluate_dataset(
    instances: &[SyntheticInstance],
    training_set: &[String],
    annotations: &AnnotationSet,
) -> Result<DatasetEvaluation, EvalError> {
    if training_set.is_empty() {
        return Err(EvalError::EmptyTrainingSet);
    }
    let engine = FilterEngine::new();
    let mut rows = Vec::with_capacity(instances.len());
    for (index, instance) in instances.iter().enumerate() {
        let report = engine.run_all(instance, training_set);
        let compass = compass_check(instance);
        let record = EvaluationRecord {
            format_accuracy: format_accuracy(&report),
            information_accuracy: information_accuracy(&report, compass),
            uniqueness: uniqueness_metric(&instance.chatter, training_set)?,
            coherence: annotations.coherence.get(&index).copied(),
            valid: report.valid,
        };
        rows.push(InstanceEvaluation {
            index,
            category: instance.category,
            record,
            passes_uniqueness: report.verdict(FilterId::Uniqueness) != Verdict::Fail,
        });
    }
    let mut per_category = BTreeMap::new();
    let mut by_category: BTreeMap<DistressCategory, Vec<&InstanceEvaluation>> = BTreeMap::new();
    for row in &rows {
        by_category.entry(row.category).or_default().push(row);
    }
    for (category, group) in by_category {
        let n = group.len() as f64;
        let coherence_values: Vec<f64> =
            group.iter().filter_map(|r| r.record.coherence).collect();
        per_category.insert(
            category.name().to_string(),
            CategorySummary {
                count: group.len(),
                format_accuracy: group.iter().map(|r| r.record.format_accuracy).sum::<f64>() / n,
                information_accuracy: group
                    .iter()
                    .map(|r| r.record.information_accuracy)
                    .sum::<f64>()
                    / n,
                uniqueness: group.iter().map(|r| r.record.uniqueness).sum::<f64>() / n,
                coherence: if coherence_values.is_empty() {
                    None
                } else {
                    Some(coherence_values.iter().sum::<f64>() / coherence_values.len() as f64)
                },
                valid_count: group.iter().filter(|r| r.record.valid).count(),
                unique_count: group.iter().filter(|r| r.passes_uniqueness).count(),
            },
        );
    }
    Ok(DatasetEvaluation { rows, per_category })
}

pub const HISTOGRAM_BINS: usize = 20;

/// Fixed-width similarity histogram: 20 bins of 0.05 over [0, 1], the
/// last bin closed so a similarity of exactly 1.0 lands in [0.95, 1.0].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub counts: [u64; HISTOGRAM_BINS],
}

impl Default for Histogram {
    fn default() -> Self {
        Histogram {
            counts: [0; HISTOGRAM_BINS],
        }
    }
}

impl Histogram {
    pub fn add(&mut self, value: f64) {
        let bin = ((value / 0.05).floor() as usize).min(HISTOGRAM_BINS - 1);
        self.counts[bin] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimilarityHistograms {
    /// Highest similarity of each generated chatter to any seed chatter.
    pub vs_seeds: Histogram,
    /// Highest similarity of each generated chatter to the training set.
    pub vs_training: Histogram,
    /// Highest similarity of each generated chatter to its peers.
    pub among_generated: Histogram,
}

/// Builds the three similarity histograms. Self comparisons are
/// excluded by position: a chatter is never compared with itself even
/// when duplicates exist.
pub fn similarity_histograms(
    generated: &[String],
    seeds: &[String],
    training_set: &[String],
) -> SimilarityHistograms {
    let mut out = SimilarityHistograms::default();
    for (i, chatter) in generated.iter().enumerate() {
        if !seeds.is_empty() {
            let (s, _) = max_similarity(chatter, seeds).expect("non-empty seeds");
            out.vs_seeds.add(s);
        }
        if !training_set.is_empty() {
            let (s, _) = max_similarity(chatter, training_set).expect("non-empty training");
            out.vs_training.add(s);
        }
        let peers: Vec<String> = generated
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, c)| c.clone())
            .collect();
        if !peers.is_empty() {
            let (s, _) = max_similarity(chatter, &peers).expect("non-empty peers");
            out.among_generated.add(s);
        }
    }
    out
}

/// Writes one histogram as CSV: `bin_lo,bin_hi,count`.
pub fn write_histogram_csv(path: &Path, histogram: &Histogram) -> Result<(), EvalError> {
    let mut out = String::from("bin_lo,bin_hi,count\n");
    for (i, count) in histogram.counts.iter().enumerate() {
        out.push_str(&format!(
            "{:.2},{:.2},{}\n",
            i as f64 * 0.05,
            (i + 1) as f64 * 0.05,
            count
        ));
    }
    std::fs::write(path, out).map_err(|e| EvalError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Writes the per-instance table as CSV.
pub fn write_instance_csv(path: &Path, rows: &[InstanceEvaluation]) -> Result<(), EvalError> {
    let to_err = |source: csv::Error| EvalError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = csv::Writer::from_path(path).map_err(to_err)?;
    writer
        .write_record([
            "index",
            "category",
            "format_accuracy",
            "information_accuracy",
            "uniqueness",
            "coherence",
            "valid",
            "passes_uniqueness",
        ])
        .map_err(to_err)?;
    for row in rows {
        writer
            .write_record([
                row.index.to_string(),
                row.category.name().to_string(),
                format!("{:.12}", row.record.format_accuracy),
                format!("{:.12}", row.record.information_accuracy),
                format!("{:.12}", row.record.uniqueness),
                row.record
                    .coherence
                    .map(|c| format!("{c:.12}"))
                    .unwrap_or_default(),
                row.record.valid.to_string(),
                row.passes_uniqueness.to_string(),
            ])
            .map_err(to_err)?;
    }
    writer.flush().map_err(|e| EvalError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Writes the per-category summary as CSV.
pub fn write_category_csv(
    path: &Path,
    per_category: &BTreeMap<String, CategorySummary>,
) -> Result<(), EvalError> {
    let to_err = |source: csv::Error| EvalError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = csv::Writer::from_path(path).map_err(to_err)?;
    writer
        .write_record([
            "category",
            "count",
            "format_accuracy",
            "information_accuracy",
            "uniqueness",
            "coherence",
            "valid_count",
            "unique_count",
        ])
        .map_err(to_err)?;
    for (name, s) in per_category {
        writer
            .write_record([
                name.clone(),
                s.count.to_string(),
                format!("{:.12}", s.format_accuracy),
                format!("{:.12}", s.information_accuracy),
                format!("{:.12}", s.uniqueness),
                s.coherence.map(|c| format!("{c:.12}")).unwrap_or_default(),
                s.valid_count.to_string(),
                s.unique_count.to_string(),
            ])
            .map_err(to_err)?;
    }
    writer.flush().map_err(|e| EvalError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}
