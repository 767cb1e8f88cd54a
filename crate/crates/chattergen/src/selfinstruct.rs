//! The iterative bootstrap loop: sample few-shot examples from the
//! instance pool, build a prompt around a fresh context, call the
//! backend, run the verification filters, and grow the pool with the
//! survivors. Also renders the prompt/training templates and exports
//! the training dataset.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::index::sample as index_sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{build_context, ContextConfig, DistressCategory, DistressContext};
use crate::filters::{split_turns, FilterEngine, FilterId, SyntheticInstance};
use crate::gateway::{GenerationRequest, TextBackend};
use crate::geo::GeoData;

/// Seed count required per category.
pub const SEEDS_PER_CATEGORY: usize = 10;
/// Few-shot examples per prompt: three seeds and two synthetic
/// instances, with seeds standing in while synthetic ones are scarce.
pub const EXAMPLES_PER_PROMPT: usize = 5;
/// Generation stops when the model starts a seventh context block.
pub const STOP_SEQUENCE: &str = "Context 7:";

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {source}")]
    BadInstance {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("category {category}: expected {expected} seed instances, found {found}")]
    WrongSeedCount {
        category: String,
        expected: usize,
        found: usize,
    },
    #[error("no synthetic instances to export")]
    NothingToExport,
    #[error(transparent)]
    Context(#[from] crate::context::ContextError),
}

/// Per-category store of fixed seed instances and accepted synthetic
/// instances. Synthetic lists only grow.
#[derive(Debug, Default, Clone)]
pub struct InstancePool {
    seeds: BTreeMap<DistressCategory, Vec<SyntheticInstance>>,
    synthetic: BTreeMap<DistressCategory, Vec<SyntheticInstance>>,
}

impl InstancePool {
    /// Loads the seed file (JSONL of instances) and enforces exactly
    /// [`SEEDS_PER_CATEGORY`] seeds for every category. Chatters are
    /// canonicalized to newline-joined unquoted turns.
    pub fn load_seeds(path: &Path) -> Result<Self, PoolError> {
        let text = fs::read_to_string(path).map_err(|e| PoolError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut pool = InstancePool::default();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut instance: SyntheticInstance =
                serde_json::from_str(line).map_err(|e| PoolError::BadInstance {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    source: e,
                })?;
            instance.chatter = canonicalize_chatter(&instance.chatter);
            pool.seeds.entry(instance.category).or_default().push(instance);
        }
        for category in DistressCategory::ALL {
            let found = pool.seeds.get(&category).map(|v| v.len()).unwrap_or(0);
            if found != SEEDS_PER_CATEGORY {
                return Err(PoolError::WrongSeedCount {
                    category: category.name().to_string(),
                    expected: SEEDS_PER_CATEGORY,
                    found,
                });
            }
        }
        Ok(pool)
    }

    pub fn seeds(&self, category: DistressCategory) -> &[SyntheticInstance] {
        self.seeds.get(&category).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn synthetic(&self, category: DistressCategory) -> &[SyntheticInstance] {
        self.synthetic
            .get(&category)
            .map(|v| v.as_slice())
            .unwrap_or(&[])
    }

    pub fn push_synthetic(&mut self, instance: SyntheticInstance) {
        self.synthetic
            .entry(instance.category)
            .or_default()
            .push(instance);
    }

    pub fn set_synthetic(&mut self, category: DistressCategory, instances: Vec<SyntheticInstance>) {
        self.synthetic.insert(category, instances);
    }

    /// Seed plus synthetic chatters of one category, in admission order;
    /// the uniqueness pool for new candidates.
    pub fn pool_chatters(&self, category: DistressCategory) -> Vec<String> {
        self.seeds(category)
            .iter()
            .chain(self.synthetic(category).iter())
            .map(|i| i.chatter.clone())
            .collect()
    }

    pub fn total_synthetic(&self) -> usize {
        self.synthetic.values().map(|v| v.len()).sum()
    }
}

/// Normalizes a raw completion or seed chatter into newline-joined,
/// unquoted turns.
pub fn canonicalize_chatter(raw: &str) -> String {
    split_turns(raw).join("\n")
}

/// Uniformly samples `count` distinct indices below `len`.
fn sample_distinct<R: Rng>(rng: &mut R, len: usize, count: usize) -> Vec<usize> {
    index_sample(rng, len, count.min(len)).into_vec()
}

/// Picks the five few-shot examples: three seeds and two synthetic
/// instances, topping up with extra seeds while fewer than two
/// synthetic instances exist.
pub fn sample_examples<'a, R: Rng>(
    pool: &'a InstancePool,
    category: DistressCategory,
    rng: &mut R,
) -> Vec<&'a SyntheticInstance> {
    let seeds = pool.seeds(category);
    let synthetic = pool.synthetic(category);
    let synth_take = synthetic.len().min(2);
    let seed_take = EXAMPLES_PER_PROMPT - synth_take;
    let mut out: Vec<&SyntheticInstance> = sample_distinct(rng, seeds.len(), seed_take)
        .into_iter()
        .map(|i| &seeds[i])
        .collect();
    out.extend(
        sample_distinct(rng, synthetic.len(), synth_take)
            .into_iter()
            .map(|i| &synthetic[i]),
    );
    out
}

/// Per-category flavour text for the prompt template.
struct CategoryPromptSlots {
    expertise: &'static str,
    tips: &'static str,
    help: &'static str,
}

fn prompt_slots(category: DistressCategory) -> CategoryPromptSlots {
    match category {
        DistressCategory::FireExplosion => CategoryPromptSlots {
            expertise: "shipboard fires and explosions",
            tips: "Vary where the fire starts, such as the engine room, the galley, a cabin or the deck, and how far it has spread.",
            help: "fire fighting boats, helicopters with medical teams or evacuation support.",
        },
        DistressCategory::Flooding => CategoryPromptSlots {
            expertise: "hull damage and flooding at sea",
            tips: "Vary the source of the water ingress, such as a failed shaft seal, a cracked hull plate or heavy weather damage, and how well the pumps keep up.",
            help: "portable pumps, damage control teams or evacuation support.",
        },
        DistressCategory::Collision => CategoryPromptSlots {
            expertise: "vessel collisions",
            tips: "Vary what the vessel collided with, the damage sustained by each party and whether anyone is injured.",
            help: "tugs, damage assessment teams or medical aid.",
        },
        DistressCategory::Grounding => CategoryPromptSlots {
            expertise: "vessel groundings",
            tips: "Vary the seabed, the state of the tide and whether the hull is breached.",
            help: "tugs for refloating, hull inspection divers or salvage coordination.",
        },
        DistressCategory::ListDangerOfCapsizing => CategoryPromptSlots {
            expertise: "cargo shifts and vessel stability",
            tips: "Vary the cause of the list, such as shifted cargo, water on one side or icing, and how quickly it worsens.",
            help: "stability advice, escort vessels or evacuation on standby.",
        },
        DistressCategory::Sinking => CategoryPromptSlots {
            expertise: "foundering vessels",
            tips: "Vary how fast the vessel is going down, the number of people aboard and the survival equipment available.",
            help: "immediate rescue coordination, life raft drops or helicopters.",
        },
        DistressCategory::DisabledAndAdrift => CategoryPromptSlots {
            expertise: "machinery failures at sea",
            tips: "Vary the failed system, such as the main engine, the rudder or electrical power, and the weather pushing the vessel.",
            help: "towing, spare parts delivery or navigation warnings to nearby traffic.",
        },
        DistressCategory::ArmedAttackPiracy => CategoryPromptSlots {
            expertise: "maritime security incidents",
            tips: "Vary the number of attackers, their boats and how the crew protects itself.",
            help: "naval or law enforcement interception, escort vessels or medical aid.",
        },
        DistressCategory::UndesignatedDistress => CategoryPromptSlots {
            expertise: "unusual emergencies at sea",
            tips: "Vary the nature of the emergency, such as a medical case or an unidentified hazard, without describing any other distress category.",
            help: "medical evacuation, technical advice or escort.",
        },
        DistressCategory::PersonOverboard => CategoryPromptSlots {
            expertise: "man overboard recoveries",
            tips: "Vary how the person went over, the sea state and what the crew can still see from deck.",
            help: "search aircraft, rescue swimmers or diverting nearby vessels.",
        },
    }
}

/// The category-specific instruction block that opens every instance
/// generation prompt.
pub fn instruction_block(category: DistressCategory) -> String {
    let slots = prompt_slots(category);
    let report = category
        .instruction()
        .rsplit_once("reports ")
        .map(|(_, r)| r.trim_end_matches('.'))
        .unwrap_or("a distress");
    format!(
        "Task: You are a creative expert of maritime industry and {expertise}. Generate a maritime radio chatter which complies with the IMO Standard marine Communication Phrases. A vessel makes a distress call and reports {report}.\n\
        Tips about creating original scenarios:\n\
        - {tips}\n\
        - Provide ETAs which match with the vessel coordinate and the destination. Provide various types of help available from the Coast Guard, such as {help}\n\
        - Make the conversation flow naturally. Do not make people say same phrases repeatedly.\n\
        - Do not generate any other text but the radio chatter. Keep the generation limited to the radio chatter.\n\
        - All distress calls must start with \"Mayday, Mayday, Mayday\". Ship gives its location in terms of degrees and tells the nature of disaster and the help needed.\n\
        - Do not generate any other phrases in brackets or parentheses.\n\
        - Do not generate repetitive statements. For example, do not make the same party speak consecutively.\n\
        - The vessel and the coast guard should speak in turns. Do not make the vessel or the coast guard speak multiple times consecutively. Turns of each party should be separated by \"\\n\".\n\
        - Coast Guard should answer the distress call with one of the following phrases: \"This is Coast Guard\", \"Coast Guard here\", \"Coast Guard responding\".\n\
        \n\
        Below are some example outputs and contexts. Contexts are dictionaries with keys \"vessel_name\", \"vessel_MMSI\", \"vessel_call_sign\", \"vessel_coordinate_dms\", \"digit_by_digit\", \"compass_direction\", \"closest_place_name\", \"distance_to_nearest_place\", \"closest_place_country\", \"distance_to_nearest_port\", \"nearest_port\", \"distance_to_nearest_harbor\", \"nearest_harbor\", \"closest_water_body\" and \"can_have_cargo\".\n\
        \n\
        THIS PART IS VERY IMPORTANT:\n\
        - You must use \"vessel_name\" and \"vessel_coordinate_dms\".\n\
        - You must use \"vessel_MMSI\", \"vessel_call_sign\" and \"vessel_type\", as long as they are not null. Omit the null ones.\n\
        - \"vessel_type\" should be indicated in the format \"[vessel_type] [vessel_name]\". For example, \"motor vessel [vessel_name]\". Do not use phrases \"I am a [vessel_type]\" or \"We are a [vessel_type]\" to indicate the vessel_type.\n\
        - If \"vessel_MMSI\" is null, the vessel should not indicate its' MMSI number. If it is not null, the vessel's MMSI should be indicated in the chatter.\n\
        - If \"vessel_call_sign\" is null, the vessel should not indicate its' call sign or any other call sign in the chatter. If it is not null, the vessel's call sign should be indicated in the chatter.\n\
        - If \"can_have_cargo\" is null, do not mention any cargo or cargo hold in the chatter. If it is 'True', then you can optionally mention cargo and/or cargo hold. Make the cargo suitable to the vessel type in that case.\n\
        - If \"digit_by_digit\" is true, all numbers in the chatter should be expressed in digits, for example 454 as \"four five four\". If digit_by_digit is False, use full numbers.\n\
        - Usage of the rest of the keys are optional.\n\
        - Do not use both of the information about harbors and ports if they are both present. Use one of them only.\n\
        - Do not use port and harbor when the vessel gives information about the its position at the beginning of the chatter, instead use them later in chatter optionally.",
        expertise = slots.expertise,
        report = report,
        tips = slots.tips,
        help = slots.help,
    )
}

fn context_json(context: &DistressContext) -> String {
    serde_json::to_string(context).expect("context serializes")
}

fn quoted_turns(chatter: &str) -> String {
    split_turns(chatter)
        .iter()
        .map(|t| format!("\"{t}\""))
        .collect::<Vec<_>>()
        .join("\n")
}

/// The full instance-generation prompt: instruction block, five worked
/// context/chatter examples, then the fresh context with an unfilled
/// sixth chatter slot.
pub fn render_instance_prompt(
    category: DistressCategory,
    examples: &[&SyntheticInstance],
    new_context: &DistressContext,
) -> String {
    debug_assert_eq!(examples.len(), EXAMPLES_PER_PROMPT);
    let mut out = instruction_block(category);
    out.push_str("\n\n");
    for (i, example) in examples.iter().enumerate() {
        out.push_str(&format!(
            "Context {n}: {ctx}\nRadio Chatter {n}: {chatter}\n\n",
            n = i + 1,
            ctx = context_json(&example.context),
            chatter = quoted_turns(&example.chatter),
        ));
    }
    out.push_str(&format!(
        "Context 6: {}\nRadio Chatter 6:",
        context_json(new_context)
    ));
    out
}

const TRAINING_PREAMBLE: &str = "Below is an instruction that describes a task, paired with an \
input that provides further context. Write a response that appropriately completes the request.";

/// The text a fine-tuning run is taught for one instance. Note the bare
/// "Input:" header; only the instruction and output headers carry the
/// "###" marker in this template.
pub fn render_training_record(instance: &SyntheticInstance) -> String {
    format!(
        "{TRAINING_PREAMBLE}\n\n### Instruction:\n{}\n\nInput:\n{}\n\n### Output:\n{}",
        instance.instruction,
        context_json(&instance.context),
        instance.chatter
    )
}

/// The context-only prompt used when probing a trained model without
/// examples. Unlike the training text this one uses "### Input:" and
/// leaves the output empty.
pub fn render_context_only_prompt(category: DistressCategory, context: &DistressContext) -> String {
    format!(
        "{TRAINING_PREAMBLE}\n\n### Instruction:\n{}\n\n### Input:\n{}\n\n### Output:\n",
        category.instruction(),
        context_json(context)
    )
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExportManifest {
    pub records: usize,
    pub per_category: BTreeMap<String, usize>,
}

/// Writes the synthetic pool as training JSONL ({"text": ...} records)
/// plus a sidecar manifest with record counts.
pub fn export_training_dataset(pool: &InstancePool, path: &Path) -> Result<ExportManifest, PoolError> {
    if pool.total_synthetic() == 0 {
        return Err(PoolError::NothingToExport);
    }
    let io_err = |e: io::Error| PoolError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut out = String::new();
    let mut per_category = BTreeMap::new();
    let mut records = 0usize;
    for category in DistressCategory::ALL {
        let instances = pool.synthetic(category);
        if instances.is_empty() {
            continue;
        }
        per_category.insert(category.name().to_string(), instances.len());
        for instance in instances {
            let record = serde_json::json!({ "text": render_training_record(instance) });
            out.push_str(&serde_json::to_string(&record).expect("record serializes"));
            out.push('\n');
            records += 1;
        }
    }
    fs::write(path, out).map_err(io_err)?;
    let manifest = ExportManifest {
        records,
        per_category,
    };
    let manifest_path = sidecar_manifest_path(path);
    fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
    .map_err(|e| PoolError::Io {
        path: manifest_path.clone(),
        source: e,
    })?;
    Ok(manifest)
}

pub fn sidecar_manifest_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("export");
    path.with_file_name(format!("{stem}.manifest.json"))
}

/// Run settings for the bootstrap loop.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub target_per_category: usize,
    /// Attempt ceiling = factor * target; stops degenerate loops.
    pub attempt_ceiling_factor: usize,
    /// Persist the pool every this many accepted instances.
    pub checkpoint_every: usize,
    pub seed: u64,
    pub context: ContextConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            target_per_category: 500,
            attempt_ceiling_factor: 20,
            checkpoint_every: 1,
            seed: 0,
            context: ContextConfig::default(),
        }
    }
}

/// Mutable per-category loop counters, persisted with each checkpoint.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryState {
    pub attempts: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub backend_calls: u64,
    pub backend_errors: u64,
    pub empty_completions: u64,
    pub rejections: BTreeMap<FilterId, u64>,
}

/// Final per-category statistics of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub category: String,
    pub attempts: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub backend_errors: u64,
    pub success_rate: f64,
    pub rejections: BTreeMap<FilterId, u64>,
    pub hit_ceiling: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunStats {
    pub categories: Vec<CategoryStats>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Independent random stream for one attempt, derived from the run
/// seed, the category and the attempt index. Makes every attempt
/// reproducible in isolation, which checkpoint resume relies on.
pub fn attempt_rng(seed: u64, category: DistressCategory, attempt: u64) -> ChaCha8Rng {
    let mixed = splitmix64(splitmix64(seed ^ (category.index() as u64 + 1)) ^ attempt);
    ChaCha8Rng::seed_from_u64(mixed)
}

pub enum IterationOutcome {
    Accepted,
    Rejected(Vec<FilterId>),
    EmptyCompletion,
    BackendError { message: String, exhausted: bool },
}

/// One loop iteration: fresh context, five examples, prompt, completion,
/// filter verdicts. The context is drawn first from the attempt stream,
/// then the examples.
pub fn run_iteration(
    category: DistressCategory,
    pool: &InstancePool,
    geodata: &GeoData,
    backend: &dyn TextBackend,
    engine: &FilterEngine,
    config: &RunConfig,
    attempt: u64,
) -> Result<(IterationOutcome, Option<SyntheticInstance>), PoolError> {
    let mut rng = attempt_rng(config.seed, category, attempt);
    let context = build_context(category, &mut rng, geodata, &config.context)?;
    let examples = sample_examples(pool, category, &mut rng);
    let prompt = render_instance_prompt(category, &examples, &context);
    let request = GenerationRequest::instance_generation(prompt).with_stop(&[STOP_SEQUENCE]);
    let result = backend.generate(&request);
    if result.is_error() {
        return Ok((
            IterationOutcome::BackendError {
                message: result.error.clone().unwrap_or_default(),
                exhausted: result.is_replay_exhausted(),
            },
            None,
        ));
    }
    let chatter = canonicalize_chatter(&result.text);
    if chatter.trim().is_empty() {
        return Ok((IterationOutcome::EmptyCompletion, None));
    }
    let instance = SyntheticInstance {
        category,
        instruction: category.instruction().to_string(),
        context,
        chatter,
    };
    let report = engine.run_all(&instance, &pool.pool_chatters(category));
    if report.valid {
        Ok((IterationOutcome::Accepted, Some(instance)))
    } else {
        Ok((IterationOutcome::Rejected(report.failed()), None))
    }
}

fn category_dir(out_dir: &Path, category: DistressCategory) -> PathBuf {
    out_dir.join(category.slug())
}

/// Atomically writes the category checkpoint: the synthetic instances
/// as JSONL plus the loop counters.
pub fn save_checkpoint(
    out_dir: &Path,
    category: DistressCategory,
    instances: &[SyntheticInstance],
    state: &CategoryState,
) -> Result<(), PoolError> {
    let dir = category_dir(out_dir, category);
    fs::create_dir_all(&dir).map_err(|e| PoolError::Io {
        path: dir.clone(),
        source: e,
    })?;
    let mut jsonl = String::new();
    for instance in instances {
        jsonl.push_str(&serde_json::to_string(instance).expect("instance serializes"));
        jsonl.push('\n');
    }
    atomic_write(&dir.join("synthetic.jsonl"), jsonl.as_bytes())?;
    let state_json = serde_json::to_string_pretty(state).expect("state serializes");
    atomic_write(&dir.join("state.json"), state_json.as_bytes())
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), PoolError> {
    let io_err = |e: io::Error| PoolError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}

/// Loads a category checkpoint if one exists.
pub fn load_checkpoint(
    out_dir: &Path,
    category: DistressCategory,
) -> Result<Option<(Vec<SyntheticInstance>, CategoryState)>, PoolError> {
    let dir = category_dir(out_dir, category);
    let state_path = dir.join("state.json");
    if !state_path.exists() {
        return Ok(None);
    }
    let read = |path: &Path| -> Result<String, PoolError> {
        fs::read_to_string(path).map_err(|e| PoolError::Io {
            path: path.to_path_buf(),
            source: e,
        })
    };
    let state: CategoryState =
        serde_json::from_str(&read(&state_path)?).map_err(|e| PoolError::BadInstance {
            path: state_path.clone(),
            line: 0,
            source: e,
        })?;
    let jsonl_path = dir.join("synthetic.jsonl");
    let mut instances = Vec::new();
    if jsonl_path.exists() {
        for (lineno, line) in read(&jsonl_path)?.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            instances.push(serde_json::from_str(line).map_err(|e| PoolError::BadInstance {
                path: jsonl_path.clone(),
                line: lineno + 1,
                source: e,
            })?);
        }
    }
    Ok(Some((instances, state)))
}

/// Runs one category until the synthetic target or the attempt ceiling
/// is reached, checkpointing accepted instances as it goes. The loop
/// also stops when a replay script runs dry, so a scripted run does not
/// burn its whole ceiling on exhaustion errors.
#[allow(clippy::too_many_arguments)]
pub fn run_category(
    category: DistressCategory,
    pool: &mut InstancePool,
    state: &mut CategoryState,
    geodata: &GeoData,
    backend: &dyn TextBackend,
    engine: &FilterEngine,
    config: &RunConfig,
    out_dir: &Path,
) -> Result<CategoryStats, PoolError> {
    let target = config.target_per_category as u64;
    let ceiling = (config.target_per_category * config.attempt_ceiling_factor) as u64;
    let mut hit_ceiling = false;
    while state.accepted < target {
        if state.attempts >= ceiling {
            hit_ceiling = true;
            log::warn!(
                "{}: attempt ceiling {} reached with {}/{} accepted",
                category.name(),
                ceiling,
                state.accepted,
                target
            );
            break;
        }
        let attempt = state.attempts;
        state.attempts += 1;
        let (outcome, instance) =
            run_iteration(category, pool, geodata, backend, engine, config, attempt)?;
        state.backend_calls += 1;
        match outcome {
            IterationOutcome::Accepted => {
                pool.push_synthetic(instance.expect("accepted instance"));
                state.accepted += 1;
                if state.accepted % config.checkpoint_every.max(1) as u64 == 0 {
                    save_checkpoint(out_dir, category, pool.synthetic(category), state)?;
                }
            }
            IterationOutcome::Rejected(failed) => {
                state.rejected += 1;
                for id in failed {
                    *state.rejections.entry(id).or_default() += 1;
                }
            }
            IterationOutcome::EmptyCompletion => {
                state.empty_completions += 1;
                state.rejected += 1;
            }
            IterationOutcome::BackendError { message, exhausted } => {
                state.backend_errors += 1;
                if exhausted {
                    log::warn!("{}: replay script exhausted, stopping", category.name());
                    break;
                }
                log::warn!("{}: backend error: {message}", category.name());
            }
        }
    }
    save_checkpoint(out_dir, category, pool.synthetic(category), state)?;
    Ok(CategoryStats {
        category: category.name().to_string(),
        attempts: state.attempts,
        accepted: state.accepted,
        rejected: state.rejected,
        backend_errors: state.backend_errors,
        success_rate: if state.attempts == 0 {
            0.0
        } else {
            state.accepted as f64 / state.attempts as f64
        },
        rejections: state.rejections.clone(),
        hit_ceiling,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed_instance(category: DistressCategory, n: usize) -> SyntheticInstance {
        SyntheticInstance {
            category,
            instruction: category.instruction().to_string(),
            context: DistressContext {
                vessel_name: format!("VESSEL {n}"),
                vessel_mmsi: None,
                vessel_call_sign: None,
                vessel_type: None,
                vessel_coordinate_dms: "zero degrees North, zero degrees East".into(),
                compass_direction: None,
                closest_place_name: None,
                distance_to_nearest_place: None,
                closest_place_country: None,
                distance_to_nearest_port: None,
                nearest_port: None,
                distance_to_nearest_harbor: None,
                nearest_harbor: None,
                digit_by_digit: false,
                can_have_cargo: None,
                closest_water_body: None,
                distance_to_closest_water_body: None,
                collided_vessel_name: None,
                collided_vessel_type: None,
            },
            chatter: format!("Mayday, Mayday, Mayday. This is VESSEL {n}. Over.\nVESSEL {n}, this is Coast Guard. Over."),
        }
    }

    fn pool_with_seeds() -> InstancePool {
        let mut pool = InstancePool::default();
        for category in DistressCategory::ALL {
            for n in 0..SEEDS_PER_CATEGORY {
                pool.seeds
                    .entry(category)
                    .or_default()
                    .push(seed_instance(category, n));
            }
        }
        pool
    }

    #[test]
    fn seed_file_round_trip_and_count_enforcement() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seeds.jsonl");
        let pool = pool_with_seeds();
        let mut text = String::new();
        for category in DistressCategory::ALL {
            for inst in pool.seeds(category) {
                text.push_str(&serde_json::to_string(inst).unwrap());
                text.push('\n');
            }
        }
        std::fs::write(&path, &text).unwrap();
        let loaded = InstancePool::load_seeds(&path).unwrap();
        for category in DistressCategory::ALL {
            assert_eq!(loaded.seeds(category).len(), SEEDS_PER_CATEGORY);
        }

        // Drop one seed line: the load must name the short category.
        let short: Vec<&str> = text.lines().skip(1).collect();
        std::fs::write(&path, short.join("\n")).unwrap();
        match InstancePool::load_seeds(&path) {
            Err(PoolError::WrongSeedCount { category, found, .. }) => {
                assert_eq!(category, "Fire, Explosion");
                assert_eq!(found, 9);
            }
            other => panic!("expected WrongSeedCount, got {other:?}"),
        }
    }

    #[test]
    fn example_sampling_mix() {
        let mut pool = pool_with_seeds();
        let category = DistressCategory::Flooding;
        let mut rng = ChaCha8Rng::seed_from_u64(1);

        let seeds_only = sample_examples(&pool, category, &mut rng);
        assert_eq!(seeds_only.len(), 5);

        let mut synth = seed_instance(category, 90);
        synth.chatter = "Mayday, Mayday, Mayday. Synthetic one. Over.".into();
        pool.push_synthetic(synth.clone());
        let four_one = sample_examples(&pool, category, &mut rng);
        assert_eq!(four_one.len(), 5);
        assert_eq!(
            four_one.iter().filter(|i| i.chatter == synth.chatter).count(),
            1
        );

        let mut synth2 = synth.clone();
        synth2.chatter = "Mayday, Mayday, Mayday. Synthetic two. Over.".into();
        pool.push_synthetic(synth2);
        let three_two = sample_examples(&pool, category, &mut rng);
        assert_eq!(three_two.len(), 5);
        let synth_count = three_two
            .iter()
            .filter(|i| pool.synthetic(category).iter().any(|s| s == **i))
            .count();
        assert_eq!(synth_count, 2);
    }

    #[test]
    fn prompt_has_six_context_blocks() {
        let pool = pool_with_seeds();
        let category = DistressCategory::FireExplosion;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let examples = sample_examples(&pool, category, &mut rng);
        let context = seed_instance(category, 99).context;
        let prompt = render_instance_prompt(category, &examples, &context);
        for n in 1..=6 {
            assert!(prompt.contains(&format!("Context {n}: ")), "missing context {n}");
            assert!(prompt.contains(&format!("Radio Chatter {n}:")), "missing chatter {n}");
        }
        assert!(!prompt.contains("Context 7:"));
        assert!(prompt.ends_with("Radio Chatter 6:"));
        assert!(prompt.contains("must start with \"Mayday, Mayday, Mayday\""));
    }

    #[test]
    fn training_and_context_only_templates_differ_in_input_header() {
        let inst = seed_instance(DistressCategory::Grounding, 1);
        let training = render_training_record(&inst);
        assert!(training.contains("\n\nInput:\n"));
        assert!(!training.contains("### Input:"));
        assert_eq!(training.matches("### Output:").count(), 1);
        assert!(training.ends_with(&inst.chatter));

        let prompt = render_context_only_prompt(inst.category, &inst.context);
        assert!(prompt.contains("\n\n### Input:\n"));
        assert!(prompt.ends_with("### Output:\n"));
    }

    #[test]
    fn export_writes_records_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut pool = pool_with_seeds();
        assert!(matches!(
            export_training_dataset(&pool, &dir.path().join("train.jsonl")),
            Err(PoolError::NothingToExport)
        ));
        pool.push_synthetic(seed_instance(DistressCategory::Sinking, 50));
        pool.push_synthetic(seed_instance(DistressCategory::Sinking, 51));
        let path = dir.path().join("train.jsonl");
        let manifest = export_training_dataset(&pool, &path).unwrap();
        assert_eq!(manifest.records, 2);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        for line in text.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            let body = v["text"].as_str().unwrap();
            assert_eq!(body.matches("### Output:").count(), 1);
        }
        assert!(sidecar_manifest_path(&path).exists());
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let category = DistressCategory::Collision;
        let instances = vec![seed_instance(category, 1), seed_instance(category, 2)];
        let mut state = CategoryState::default();
        state.attempts = 5;
        state.accepted = 2;
        state.rejections.insert(FilterId::Mayday, 3);
        save_checkpoint(dir.path(), category, &instances, &state).unwrap();
        let (loaded, loaded_state) = load_checkpoint(dir.path(), category).unwrap().unwrap();
        assert_eq!(loaded, instances);
        assert_eq!(loaded_state, state);
        assert!(load_checkpoint(dir.path(), DistressCategory::Sinking)
            .unwrap()
            .is_none());
    }

    #[test]
    fn attempt_rng_is_stable_and_distinct() {
        let a = attempt_rng(7, DistressCategory::FireExplosion, 0);
        let b = attempt_rng(7, DistressCategory::FireExplosion, 0);
        assert_eq!(a.get_seed(), b.get_seed());
        let c = attempt_rng(7, DistressCategory::FireExplosion, 1);
        assert_ne!(a.get_seed(), c.get_seed());
        let d = attempt_rng(7, DistressCategory::Flooding, 0);
        assert_ne!(a.get_seed(), d.get_seed());
    }

    #[test]
    fn canonicalize_strips_quotes() {
        let raw = "\"Mayday. Over.\",\n\"Roger. Over.\"\n";
        assert_eq!(canonicalize_chatter(raw), "Mayday. Over.\nRoger. Over.");
    }
}
