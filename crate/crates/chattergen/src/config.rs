//! Pipeline configuration: a flat `key = value` text file with CLI-flag
//! overrides, plus the run manifest (config hash, seed, dataset
//! checksums) written next to every command's outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::context::ContextConfig;
use crate::gateway::HttpBackendConfig;
use crate::geo::{ShorelineFormat, VesselType};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: expected `key = value`, got {text:?}")]
    BadLine {
        path: PathBuf,
        line: usize,
        text: String,
    },
    #[error("{key}: {reason}")]
    BadValue { key: String, reason: String },
    #[error("unknown configuration key {0:?}")]
    UnknownKey(String),
    #[error("required path for {key} does not exist: {path}")]
    MissingPath { key: String, path: PathBuf },
}

/// Everything a pipeline run needs to know. Defaults are usable for
/// tests; dataset paths must be supplied via file or flags.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub shorelines: Option<PathBuf>,
    pub shoreline_format: ShorelineFormat,
    pub geonames: Option<PathBuf>,
    pub vessels: Vec<PathBuf>,
    pub seeds: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub backend: Option<String>,
    pub model: String,
    pub timeout_ms: u64,
    pub retries: u32,
    pub backoff_ms: u64,
    pub max_concurrency: usize,
    pub seed: Option<u64>,
    pub target: usize,
    pub checkpoint_every: usize,
    pub attempt_ceiling_factor: usize,
    /// `Type:count` pairs removed from the vessel set at ingest.
    pub drop: Vec<(VesselType, usize)>,
    pub context: ContextConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            shorelines: None,
            shoreline_format: ShorelineFormat::GshhgBinary,
            geonames: None,
            vessels: Vec::new(),
            seeds: None,
            out_dir: PathBuf::from("out"),
            backend: None,
            model: "local".into(),
            timeout_ms: 30_000,
            retries: 3,
            backoff_ms: 250,
            max_concurrency: 4,
            seed: None,
            target: 500,
            checkpoint_every: 1,
            attempt_ceiling_factor: 20,
            drop: Vec::new(),
            context: ContextConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut config = PipelineConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::BadLine {
                path: path.to_path_buf(),
                line: lineno + 1,
                text: raw.to_string(),
            })?;
            config.set(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    /// Applies one `key = value` assignment; shared by the file parser
    /// and `--set key=value` style overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |reason: String| ConfigError::BadValue {
            key: key.to_string(),
            reason,
        };
        match key {
            "shorelines" => self.shorelines = Some(PathBuf::from(value)),
            "shoreline_format" => {
                self.shoreline_format = value.parse().map_err(|e| bad(format!("{e}")))?
            }
            "geonames" => self.geonames = Some(PathBuf::from(value)),
            "vessels" => {
                self.vessels = value
                    .split(',')
                    .map(|v| PathBuf::from(v.trim()))
                    .filter(|p| !p.as_os_str().is_empty())
                    .collect()
            }
            "seeds" => self.seeds = Some(PathBuf::from(value)),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "backend" => self.backend = Some(value.to_string()),
            "model" => self.model = value.to_string(),
            "timeout_ms" => self.timeout_ms = parse_num(key, value)?,
            "retries" => self.retries = parse_num(key, value)?,
            "backoff_ms" => self.backoff_ms = parse_num(key, value)?,
            "max_concurrency" => self.max_concurrency = parse_num(key, value)?,
            "seed" => self.seed = Some(parse_num(key, value)?),
            "target" => self.target = parse_num(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse_num(key, value)?,
            "attempt_ceiling_factor" => self.attempt_ceiling_factor = parse_num(key, value)?,
            "drop" => self.drop = parse_drop(value).map_err(bad)?,
            "p_mmsi_null" => self.context.p_mmsi_null = parse_num(key, value)?,
            "p_call_sign_null" => self.context.p_call_sign_null = parse_num(key, value)?,
            "p_type_replaced" => self.context.p_type_replaced = parse_num(key, value)?,
            "p_minutes_omitted" => self.context.p_minutes_omitted = parse_num(key, value)?,
            "p_decimal_minutes_omitted" => {
                self.context.p_decimal_minutes_omitted = parse_num(key, value)?
            }
            "p_digit_by_digit" => self.context.p_digit_by_digit = parse_num(key, value)?,
            "p_collided_null" => self.context.p_collided_null = parse_num(key, value)?,
            "sampling_cap" => self.context.sampling_cap = parse_num(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Checks that every referenced dataset path exists.
    pub fn validate_paths(&self) -> Result<(), ConfigError> {
        let check = |key: &str, path: &Path| -> Result<(), ConfigError> {
            if path.exists() {
                Ok(())
            } else {
                Err(ConfigError::MissingPath {
                    key: key.to_string(),
                    path: path.to_path_buf(),
                })
            }
        };
        if let Some(p) = &self.shorelines {
            check("shorelines", p)?;
        }
        if let Some(p) = &self.geonames {
            check("geonames", p)?;
        }
        for p in &self.vessels {
            check("vessels", p)?;
        }
        if let Some(p) = &self.seeds {
            check("seeds", p)?;
        }
        Ok(())
    }

    pub fn http_backend_config(&self) -> HttpBackendConfig {
        HttpBackendConfig {
            base_url: String::new(),
            model: self.model.clone(),
            timeout_ms: self.timeout_ms,
            retries: self.retries,
            backoff_ms: self.backoff_ms,
            max_concurrency: self.max_concurrency,
        }
    }

    /// Canonical text form of the resolved configuration; hashing this
    /// pins the exact settings a run used.
    pub fn canonical_lines(&self) -> String {
        let mut out = String::new();
        let path_str = |p: &PathBuf| p.display().to_string();
        let mut line = |k: &str, v: String| writeln!(out, "{k} = {v}").unwrap();
        line(
            "shorelines",
            self.shorelines.as_ref().map(&path_str).unwrap_or_default(),
        );
        line(
            "shoreline_format",
            match self.shoreline_format {
                ShorelineFormat::GshhgBinary => "gshhg-binary".into(),
                ShorelineFormat::PolygonText => "polygon-text".into(),
            },
        );
        line(
            "geonames",
            self.geonames.as_ref().map(&path_str).unwrap_or_default(),
        );
        line(
            "vessels",
            self.vessels
                .iter()
                .map(|p| path_str(p))
                .collect::<Vec<_>>()
                .join(","),
        );
        line("seeds", self.seeds.as_ref().map(&path_str).unwrap_or_default());
        line("out_dir", path_str(&self.out_dir));
        line("backend", self.backend.clone().unwrap_or_default());
        line("model", self.model.clone());
        line("timeout_ms", self.timeout_ms.to_string());
        line("retries", self.retries.to_string());
        line("backoff_ms", self.backoff_ms.to_string());
        line("max_concurrency", self.max_concurrency.to_string());
        line("seed", self.seed.map(|s| s.to_string()).unwrap_or_default());
        line("target", self.target.to_string());
        line("checkpoint_every", self.checkpoint_every.to_string());
        line(
            "attempt_ceiling_factor",
            self.attempt_ceiling_factor.to_string(),
        );
        line(
            "drop",
            self.drop
                .iter()
                .map(|(t, n)| format!("{}:{}", t.name(), n))
                .collect::<Vec<_>>()
                .join(","),
        );
        let c = &self.context;
        line("p_mmsi_null", c.p_mmsi_null.to_string());
        line("p_call_sign_null", c.p_call_sign_null.to_string());
        line("p_type_replaced", c.p_type_replaced.to_string());
        line("p_minutes_omitted", c.p_minutes_omitted.to_string());
        line(
            "p_decimal_minutes_omitted",
            c.p_decimal_minutes_omitted.to_string(),
        );
        line("p_digit_by_digit", c.p_digit_by_digit.to_string());
        line("p_collided_null", c.p_collided_null.to_string());
        line("sampling_cap", c.sampling_cap.to_string());
        out
    }

    pub fn config_hash(&self) -> String {
        sha256_hex(self.canonical_lines().as_bytes())
    }

    pub fn dataset_paths(&self) -> Vec<PathBuf> {
        let mut out = Vec::new();
        if let Some(p) = &self.shorelines {
            out.push(p.clone());
        }
        if let Some(p) = &self.geonames {
            out.push(p.clone());
        }
        out.extend(self.vessels.iter().cloned());
        if let Some(p) = &self.seeds {
            out.push(p.clone());
        }
        out
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| ConfigError::BadValue {
        key: key.to_string(),
        reason: format!("{e}"),
    })
}

/// Parses `Type:count[,Type:count...]`, e.g.
/// `Pleasure Craft:5000,Sailing Vessel:5000`.
pub fn parse_drop(value: &str) -> Result<Vec<(VesselType, usize)>, String> {
    let mut out = Vec::new();
    for part in value.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (ty, count) = part
            .rsplit_once(':')
            .ok_or_else(|| format!("expected Type:count, got {part:?}"))?;
        let ty: VesselType = ty.trim().parse().map_err(|e| format!("{e}"))?;
        let count: usize = count
            .trim()
            .parse()
            .map_err(|e| format!("bad count in {part:?}: {e}"))?;
        out.push((ty, count));
    }
    Ok(out)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        write!(out, "{b:02x}").unwrap();
    }
    out
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: Option<u64>,
    pub config_hash: String,
    pub datasets: BTreeMap<String, String>,
}

/// Writes `manifest.json` into `out_dir`: the command, seed, config
/// hash and a checksum per dataset file. Deliberately carries no
/// timestamps so reruns with identical inputs are byte-identical.
pub fn write_manifest(
    out_dir: &Path,
    command: &str,
    config: &PipelineConfig,
) -> Result<PathBuf, ConfigError> {
    let mut datasets = BTreeMap::new();
    for path in config.dataset_paths() {
        let bytes = fs::read(&path).map_err(|e| ConfigError::Io {
            path: path.clone(),
            source: e,
        })?;
        datasets.insert(path.display().to_string(), sha256_hex(&bytes));
    }
    let manifest = RunManifest {
        command: command.to_string(),
        seed: config.seed,
        config_hash: config.config_hash(),
        datasets,
    };
    fs::create_dir_all(out_dir).map_err(|e| ConfigError::Io {
        path: out_dir.to_path_buf(),
        source: e,
    })?;
    let path = out_dir.join("manifest.json");
    fs::write(
        &path,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
    .map_err(|e| ConfigError::Io {
        path: path.clone(),
        source: e,
    })?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn parses_flat_key_value_file() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "# comment").unwrap();
        writeln!(f, "seeds = data/seeds.jsonl").unwrap();
        writeln!(f, "vessels = a.csv, b.csv").unwrap();
        writeln!(f, "seed = 42").unwrap();
        writeln!(f, "p_digit_by_digit = 0.75").unwrap();
        writeln!(f, "shoreline_format = polygon-text").unwrap();
        writeln!(f, "drop = Pleasure Craft:5000,Sailing Vessel:5000").unwrap();
        let config = PipelineConfig::load(f.path()).unwrap();
        assert_eq!(config.seeds.as_deref(), Some(Path::new("data/seeds.jsonl")));
        assert_eq!(config.vessels.len(), 2);
        assert_eq!(config.seed, Some(42));
        assert_eq!(config.context.p_digit_by_digit, 0.75);
        assert_eq!(config.shoreline_format, ShorelineFormat::PolygonText);
        assert_eq!(config.drop.len(), 2);
        assert_eq!(config.drop[0].0, VesselType::PleasureCraft);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_lines() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "nonsense_key = 1").unwrap();
        assert!(matches!(
            PipelineConfig::load(f.path()),
            Err(ConfigError::UnknownKey(_))
        ));
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "just some text").unwrap();
        assert!(matches!(
            PipelineConfig::load(f.path()),
            Err(ConfigError::BadLine { .. })
        ));
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = PipelineConfig::default();
        let mut b = PipelineConfig::default();
        assert_eq!(a.config_hash(), b.config_hash());
        b.seed = Some(1);
        assert_ne!(a.config_hash(), b.config_hash());
    }

    #[test]
    fn validate_paths_reports_missing() {
        let mut config = PipelineConfig::default();
        config.seeds = Some(PathBuf::from("/definitely/not/here.jsonl"));
        assert!(matches!(
            config.validate_paths(),
            Err(ConfigError::MissingPath { .. })
        ));
    }

    #[test]
    fn manifest_written_without_timestamps() {
        let dir = tempfile::tempdir().unwrap();
        let seeds = dir.path().join("seeds.jsonl");
        std::fs::write(&seeds, "{}\n").unwrap();
        let mut config = PipelineConfig::default();
        config.seeds = Some(seeds);
        config.seed = Some(9);
        let p1 = write_manifest(dir.path(), "generate", &config).unwrap();
        let first = std::fs::read(&p1).unwrap();
        let p2 = write_manifest(dir.path(), "generate", &config).unwrap();
        let second = std::fs::read(&p2).unwrap();
        assert_eq!(first, second);
        let manifest: serde_json::Value = serde_json::from_slice(&first).unwrap();
        assert_eq!(manifest["seed"], 9);
        assert!(manifest["config_hash"].as_str().unwrap().len() == 64);
    }
}
