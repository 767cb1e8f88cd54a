//! Command-line entry point wiring the modules together: dataset
//! ingest, context sampling, the generation loop, standalone filtering,
//! evaluation, annotation, training export and stats reporting.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context as _};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{parse_drop, write_manifest, PipelineConfig};
use crate::context::{build_context, ContextConfig, DistressCategory};
use crate::eval::{
    evaluate_dataset, ingest_annotations, sample_annotation_ids, similarity_histograms,
    write_category_csv, write_histogram_csv, write_instance_csv, AnnotationSet,
};
use crate::filters::{FilterEngine, SyntheticInstance};
use crate::gateway::{backend_from_spec, ReplayBackend, TextBackend};
use crate::geo::{
    drop_random_of_type, load_vessels, Gazetteer, GeoData, ShorelineSet, VesselRecord,
};
use crate::selfinstruct::{
    attempt_rng, export_training_dataset, load_checkpoint, run_category, CategoryState,
    InstancePool, RunConfig, RunStats,
};

#[derive(Parser)]
#[command(
    name = "chattergen",
    version,
    about = "Synthetic maritime distress-call generation, filtering and evaluation"
)]
struct Cli {
    /// Flat key = value configuration file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default, Clone)]
struct DataArgs {
    /// Shoreline dataset path.
    #[arg(long)]
    shorelines: Option<PathBuf>,
    /// Shoreline format: gshhg-binary or polygon-text.
    #[arg(long)]
    shoreline_format: Option<String>,
    /// Gazetteer TSV path.
    #[arg(long)]
    geonames: Option<PathBuf>,
    /// Comma-separated vessel CSV paths.
    #[arg(long)]
    vessels: Option<String>,
    /// Seed instance JSONL path.
    #[arg(long)]
    seeds: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Load and clean the datasets, report counts, optionally write the
    /// cleaned vessel table.
    Ingest {
        #[command(flatten)]
        data: DataArgs,
        /// Vessel records to drop, e.g. "Pleasure Craft:5000".
        #[arg(long)]
        drop: Option<String>,
        /// Seed for the random drop selection.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the cleaned vessels as CSV here.
        #[arg(long)]
        out_vessels: Option<PathBuf>,
        /// Machine-readable summary.
        #[arg(long)]
        json: bool,
    },
    /// Sample distress contexts and emit them as JSONL.
    SampleContext {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        category: String,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the bootstrap loop until each category hits its target.
    Generate {
        #[command(flatten)]
        data: DataArgs,
        /// A category name or "all".
        #[arg(long)]
        category: String,
        #[arg(long)]
        target: Option<usize>,
        #[arg(long)]
        seed: u64,
        /// Backend: replay:<script.jsonl> or http:<base url>.
        #[arg(long)]
        backend: Option<String>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Filter instances against a pool and emit verdict reports.
    Filter {
        /// Instance JSONL to verify.
        #[arg(long)]
        instances: PathBuf,
        /// Pool JSONL providing the uniqueness reference chatters.
        #[arg(long)]
        pool: Option<PathBuf>,
        /// Report JSONL output.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a dataset with the four-metric framework.
    Evaluate {
        /// Instance JSONL to score.
        #[arg(long)]
        dataset: PathBuf,
        /// Training instances (uniqueness reference).
        #[arg(long)]
        training: PathBuf,
        /// Seed instances for the seed-similarity histogram.
        #[arg(long)]
        seeds: Option<PathBuf>,
        /// Coherence annotation CSV (id,score,note).
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Interactively rate sampled chatters for logical coherence.
    Annotate {
        #[arg(long)]
        dataset: PathBuf,
        /// Chatters to sample per category.
        #[arg(long, default_value_t = 10)]
        sample: usize,
        #[arg(long)]
        seed: u64,
        /// Output CSV (id,score,note).
        #[arg(long)]
        out: PathBuf,
    },
    /// Export the synthetic pool as fine-tuning text records.
    ExportTrain {
        /// Generation output directory or a single instance JSONL.
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretty-print run statistics.
    Report {
        #[arg(long)]
        stats: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

/// Runs the CLI and maps outcomes onto exit codes: 0 success, 1 domain
/// error, 2 usage error.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    match cli.command {
        Command::Ingest {
            data,
            drop,
            seed,
            out_vessels,
            json,
        } => {
            apply_data_args(&mut config, &data)?;
            if let Some(spec) = drop {
                config.drop = parse_drop(&spec).map_err(|e| anyhow!(e))?;
            }
            if let Some(s) = seed {
                config.seed = Some(s);
            }
            cmd_ingest(&config, out_vessels, json)
        }
        Command::SampleContext {
            data,
            category,
            n,
            seed,
            out,
        } => {
            apply_data_args(&mut config, &data)?;
            config.seed = Some(seed);
            cmd_sample_context(&config, &category, n, seed, out)
        }
        Command::Generate {
            data,
            category,
            target,
            seed,
            backend,
            out_dir,
        } => {
            apply_data_args(&mut config, &data)?;
            config.seed = Some(seed);
            if let Some(t) = target {
                config.target = t;
            }
            if let Some(b) = backend {
                config.backend = Some(b);
            }
            if let Some(dir) = out_dir {
                config.out_dir = dir;
            }
            cmd_generate(&config, &category)
        }
        Command::Filter {
            instances,
            pool,
            out,
        } => cmd_filter(&instances, pool.as_deref(), &out),
        Command::Evaluate {
            dataset,
            training,
            seeds,
            annotations,
            out,
        } => cmd_evaluate(&dataset, &training, seeds.as_deref(), annotations.as_deref(), &out),
        Command::Annotate {
            dataset,
            sample,
            seed,
            out,
        } => {
            let stdin = std::io::stdin();
            let stdout = std::io::stdout();
            cmd_annotate(&dataset, sample, seed, &out, stdin.lock(), stdout.lock())
        }
        Command::ExportTrain { pool, out } => cmd_export_train(&pool, &out),
        Command::Report { stats, json } => cmd_report(&stats, json),
    }
}

fn apply_data_args(config: &mut PipelineConfig, data: &DataArgs) -> anyhow::Result<()> {
    if let Some(p) = &data.shorelines {
        config.shorelines = Some(p.clone());
    }
    if let Some(f) = &data.shoreline_format {
        config.set("shoreline_format", f)?;
    }
    if let Some(p) = &data.geonames {
        config.geonames = Some(p.clone());
    }
    if let Some(v) = &data.vessels {
        config.set("vessels", v)?;
    }
    if let Some(p) = &data.seeds {
        config.seeds = Some(p.clone());
    }
    Ok(())
}

/// Loads the three datasets referenced by the configuration, applying
/// the vessel drop rule when configured.
fn load_geodata(config: &PipelineConfig) -> anyhow::Result<GeoData> {
    config.validate_paths()?;
    let shorelines_path = config
        .shorelines
        .as_ref()
        .ok_or_else(|| anyhow!("no shorelines dataset configured"))?;
    let load = ShorelineSet::load(shorelines_path, config.shoreline_format)?;
    if load.rejected_polygons > 0 {
        log::warn!("{} degenerate polygons skipped", load.rejected_polygons);
    }
    let geonames_path = config
        .geonames
        .as_ref()
        .ok_or_else(|| anyhow!("no gazetteer dataset configured"))?;
    let gazetteer_load = Gazetteer::load(geonames_path)?;
    if config.vessels.is_empty() {
        bail!("no vessel dataset configured");
    }
    let mut vessel_load = load_vessels(&config.vessels)?;
    apply_drop(&mut vessel_load.records, config);
    Ok(GeoData {
        shorelines: load.set,
        gazetteer: gazetteer_load.gazetteer,
        vessels: vessel_load.records,
    })
}

fn apply_drop(records: &mut Vec<VesselRecord>, config: &PipelineConfig) {
    if config.drop.is_empty() {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.unwrap_or(0));
    for (ty, count) in &config.drop {
        let removed = drop_random_of_type(records, *ty, *count, &mut rng);
        log::info!("dropped {removed} {} records", ty.name());
    }
}

fn cmd_ingest(
    config: &PipelineConfig,
    out_vessels: Option<PathBuf>,
    json: bool,
) -> anyhow::Result<()> {
    config.validate_paths()?;
    let mut summary = BTreeMap::new();
    if let Some(path) = &config.shorelines {
        let load = ShorelineSet::load(path, config.shoreline_format)?;
        summary.insert(
            "shoreline_polygons".to_string(),
            load.set.polygons().len() as u64,
        );
        summary.insert(
            "shoreline_rejected".to_string(),
            load.rejected_polygons as u64,
        );
    }
    if let Some(path) = &config.geonames {
        let load = Gazetteer::load(path)?;
        summary.insert(
            "gazetteer_features".to_string(),
            load.gazetteer.features().len() as u64,
        );
        summary.insert("gazetteer_skipped_rows".to_string(), load.skipped_rows as u64);
    }
    if !config.vessels.is_empty() {
        let mut load = load_vessels(&config.vessels)?;
        summary.insert("vessels_dropped_no_name".to_string(), load.dropped_no_name as u64);
        summary.insert("vessels_invalid_mmsi".to_string(), load.invalid_mmsi as u64);
        summary.insert(
            "vessels_duplicates_collapsed".to_string(),
            load.duplicates_collapsed as u64,
        );
        apply_drop(&mut load.records, config);
        summary.insert("vessels".to_string(), load.records.len() as u64);
        if let Some(out) = &out_vessels {
            write_vessel_csv(out, &load.records)?;
            if let Some(dir) = out.parent() {
                write_manifest(dir, "ingest", config)?;
            }
        }
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        for (key, value) in &summary {
            println!("{key}: {value}");
        }
    }
    Ok(())
}

fn write_vessel_csv(path: &Path, records: &[VesselRecord]) -> anyhow::Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("writing {}", path.display()))?;
    writer.write_record(["VesselName", "MMSI", "CallSign", "VesselType"])?;
    for r in records {
        writer.write_record([
            r.name.as_str(),
            r.mmsi.as_deref().unwrap_or(""),
            r.call_sign.as_deref().unwrap_or(""),
            r.vessel_type.name(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

fn cmd_sample_context(
    config: &PipelineConfig,
    category: &str,
    n: usize,
    seed: u64,
    out: Option<PathBuf>,
) -> anyhow::Result<()> {
    let category: DistressCategory = category.parse().map_err(|e: String| anyhow!(e))?;
    let geodata = load_geodata(config)?;
    let mut lines = String::new();
    for i in 0..n {
        let mut rng = attempt_rng(seed, category, i as u64);
        let context = build_context(category, &mut rng, &geodata, &config.context)?;
        lines.push_str(&serde_json::to_string(&context)?);
        lines.push('\n');
    }
    match out {
        Some(path) => {
            fs::write(&path, lines).with_context(|| format!("writing {}", path.display()))?;
            if let Some(dir) = path.parent() {
                write_manifest(dir, "sample-context", config)?;
            }
        }
        None => print!("{lines}"),
    }
    Ok(())
}

fn parse_categories(spec: &str) -> anyhow::Result<Vec<DistressCategory>> {
    if spec.eq_ignore_ascii_case("all") {
        Ok(DistressCategory::ALL.to_vec())
    } else {
        Ok(vec![spec.parse().map_err(|e: String| anyhow!(e))?])
    }
}

fn cmd_generate(config: &PipelineConfig, category_spec: &str) -> anyhow::Result<()> {
    let categories = parse_categories(category_spec)?;
    let geodata = load_geodata(config)?;
    let seeds_path = config
        .seeds
        .as_ref()
        .ok_or_else(|| anyhow!("no seed instances configured"))?;
    let mut pool = InstancePool::load_seeds(seeds_path)?;
    let backend_spec = config
        .backend
        .as_ref()
        .ok_or_else(|| anyhow!("no backend configured"))?;
    let run_config = RunConfig {
        target_per_category: config.target,
        attempt_ceiling_factor: config.attempt_ceiling_factor,
        checkpoint_every: config.checkpoint_every,
        seed: config.seed.unwrap_or(0),
        context: config.context.clone(),
    };

    // Resume: restore per-category checkpoints and count the backend
    // calls already spent so a replay script can fast-forward.
    let mut states: BTreeMap<DistressCategory, CategoryState> = BTreeMap::new();
    let mut prior_backend_calls = 0u64;
    for &category in &categories {
        if let Some((instances, state)) = load_checkpoint(&config.out_dir, category)? {
            prior_backend_calls += state.backend_calls;
            pool.set_synthetic(category, instances);
            states.insert(category, state);
        } else {
            states.insert(category, CategoryState::default());
        }
    }
    let backend: Box<dyn TextBackend> = match backend_spec.strip_prefix("replay:") {
        Some(path) => {
            let replay = ReplayBackend::load(Path::new(path))
                .map_err(|e| anyhow!("replay backend: {e}"))?;
            replay.skip(prior_backend_calls as usize);
            Box::new(replay)
        }
        None => backend_from_spec(backend_spec, config.http_backend_config())
            .map_err(|e| anyhow!(e))?,
    };

    let engine = FilterEngine::new();
    let mut stats = RunStats::default();
    for &category in &categories {
        let state = states.get_mut(&category).expect("state initialized");
        let category_stats = run_category(
            category,
            &mut pool,
            state,
            &geodata,
            backend.as_ref(),
            &engine,
            &run_config,
            &config.out_dir,
        )?;
        println!(
            "{}: accepted {} of {} attempts (success rate {:.4})",
            category_stats.category,
            category_stats.accepted,
            category_stats.attempts,
            category_stats.success_rate
        );
        stats.categories.push(category_stats);
    }
    let stats_path = config.out_dir.join("stats.json");
    fs::write(&stats_path, serde_json::to_string_pretty(&stats)?)
        .with_context(|| format!("writing {}", stats_path.display()))?;
    write_manifest(&config.out_dir, "generate", config)?;
    Ok(())
}

fn read_instances(path: &Path) -> anyhow::Result<Vec<SyntheticInstance>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let instance: SyntheticInstance = serde_json::from_str(line)
            .with_context(|| format!("{}:{}", path.display(), lineno + 1))?;
        out.push(instance);
    }
    Ok(out)
}

fn cmd_filter(instances: &Path, pool: Option<&Path>, out: &Path) -> anyhow::Result<()> {
    let instances = read_instances(instances)?;
    let pool_chatters: Vec<String> = match pool {
        Some(path) => read_instances(path)?
            .into_iter()
            .map(|i| i.chatter)
            .collect(),
        None => Vec::new(),
    };
    let engine = FilterEngine::new();
    let mut lines = String::new();
    for (index, instance) in instances.iter().enumerate() {
        let report = engine.run_all(instance, &pool_chatters);
        let record = serde_json::json!({
            "index": index,
            "valid": report.valid,
            "verdicts": report.verdicts,
        });
        lines.push_str(&serde_json::to_string(&record)?);
        lines.push('\n');
    }
    fs::write(out, lines).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

fn cmd_evaluate(
    dataset: &Path,
    training: &Path,
    seeds: Option<&Path>,
    annotations: Option<&Path>,
    out: &Path,
) -> anyhow::Result<()> {
    let instances = read_instances(dataset)?;
    let training_chatters: Vec<String> = read_instances(training)?
        .into_iter()
        .map(|i| i.chatter)
        .collect();
    let seed_chatters: Vec<String> = match seeds {
        Some(path) => read_instances(path)?.into_iter().map(|i| i.chatter).collect(),
        None => Vec::new(),
    };
    let annotation_set = match annotations {
        Some(path) => {
            let set = ingest_annotations(path)?;
            for message in &set.rejected {
                eprintln!("annotation rejected: {message}");
            }
            set
        }
        None => AnnotationSet::default(),
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let evaluation = evaluate_dataset(&instances, &training_chatters, &annotation_set)?;
    write_instance_csv(&out.join("per_instance.csv"), &evaluation.rows)?;
    write_category_csv(&out.join("per_category.csv"), &evaluation.per_category)?;
    let generated: Vec<String> = instances.iter().map(|i| i.chatter.clone()).collect();
    let histograms = similarity_histograms(&generated, &seed_chatters, &training_chatters);
    write_histogram_csv(&out.join("hist_vs_seeds.csv"), &histograms.vs_seeds)?;
    write_histogram_csv(&out.join("hist_vs_training.csv"), &histograms.vs_training)?;
    write_histogram_csv(&out.join("hist_among_generated.csv"), &histograms.among_generated)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&evaluation.per_category)?
    );
    Ok(())
}

/// Terminal rating loop, parametrized over the streams for testability.
pub fn annotate_stream<R: BufRead, W: Write>(
    instances: &[SyntheticInstance],
    ids: &[usize],
    mut input: R,
    mut output: W,
) -> anyhow::Result<Vec<(usize, u8)>> {
    let mut ratings = Vec::new();
    for &id in ids {
        let instance = &instances[id];
        writeln!(output, "--- instance {id} ({}) ---", instance.category)?;
        writeln!(output, "{}", instance.chatter)?;
        loop {
            write!(output, "coherence 1-5 (s to skip): ")?;
            output.flush()?;
            let mut line = String::new();
            if input.read_line(&mut line)? == 0 {
                return Ok(ratings);
            }
            let trimmed = line.trim();
            if trimmed.eq_ignore_ascii_case("s") {
                break;
            }
            match trimmed.parse::<u8>() {
                Ok(score) if (1..=5).contains(&score) => {
                    ratings.push((id, score));
                    break;
                }
                _ => writeln!(output, "please enter 1-5 or s")?,
            }
        }
    }
    Ok(ratings)
}

fn cmd_annotate<R: BufRead, W: Write>(
    dataset: &Path,
    sample: usize,
    seed: u64,
    out: &Path,
    input: R,
    output: W,
) -> anyhow::Result<()> {
    let instances = read_instances(dataset)?;
    let ids = sample_annotation_ids(&instances, sample, seed);
    let ratings = annotate_stream(&instances, &ids, input, output)?;
    let mut csv_text = String::from("id,score,note\n");
    for (id, score) in &ratings {
        csv_text.push_str(&format!("{id},{score},\n"));
    }
    fs::write(out, csv_text).with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {} ratings to {}", ratings.len(), out.display());
    Ok(())
}

fn cmd_export_train(pool_path: &Path, out: &Path) -> anyhow::Result<()> {
    let mut pool = InstancePool::default();
    if pool_path.is_dir() {
        for category in DistressCategory::ALL {
            if let Some((instances, _)) = load_checkpoint(pool_path, category)? {
                pool.set_synthetic(category, instances);
            }
        }
    } else {
        for instance in read_instances(pool_path)? {
            pool.push_synthetic(instance);
        }
    }
    let manifest = export_training_dataset(&pool, out)?;
    println!(
        "exported {} records across {} categories",
        manifest.records,
        manifest.per_category.len()
    );
    Ok(())
}

fn cmd_report(stats_path: &Path, json: bool) -> anyhow::Result<()> {
    let text = fs::read_to_string(stats_path)
        .with_context(|| format!("reading {}", stats_path.display()))?;
    let stats: RunStats = serde_json::from_str(&text)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&stats)?);
        return Ok(());
    }
    println!("{:<28} {:>10} {:>12}", "Category", "Rejected", "Success %");
    for cat in &stats.categories {
        println!(
            "{:<28} {:>10} {:>12.2}",
            cat.category,
            cat.rejected,
            cat.success_rate * 100.0
        );
    }
    let mut rejections: BTreeMap<String, u64> = BTreeMap::new();
    for cat in &stats.categories {
        for (id, count) in &cat.rejections {
            *rejections.entry(id.to_string()).or_default() += count;
        }
    }
    if !rejections.is_empty() {
        println!("\nRejections by filter:");
        for (id, count) in rejections {
            println!("{id:<28} {count:>10}");
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_subcommand_is_usage_error() {
        assert_eq!(dispatch(["chattergen", "frobnicate"]), 2);
    }

    #[test]
    fn missing_input_is_domain_error() {
        assert_eq!(
            dispatch([
                "chattergen",
                "report",
                "--stats",
                "/nonexistent/stats.json"
            ]),
            1
        );
    }

    #[test]
    fn category_spec_parsing() {
        assert_eq!(parse_categories("all").unwrap().len(), 10);
        assert_eq!(
            parse_categories("grounding").unwrap(),
            vec![DistressCategory::Grounding]
        );
        assert!(parse_categories("hurricane").is_err());
    }

    #[test]
    fn annotate_stream_accepts_and_skips() {
        let instances: Vec<SyntheticInstance> = (0..2)
            .map(|n| SyntheticInstance {
                category: DistressCategory::Sinking,
                instruction: DistressCategory::Sinking.instruction().into(),
                context: crate::context::DistressContext {
                    vessel_name: format!("V{n}"),
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
                chatter: "Mayday. Over.".into(),
            })
            .collect();
        let input = b"7\n4\ns\n" as &[u8];
        let mut output = Vec::new();
        let ratings = annotate_stream(&instances, &[0, 1], input, &mut output).unwrap();
        assert_eq!(ratings, vec![(0, 4)]);
        let text = String::from_utf8(output).unwrap();
        assert!(text.contains("please enter 1-5"));
    }
}
