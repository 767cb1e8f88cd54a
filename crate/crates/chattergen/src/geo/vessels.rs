//! AIS vessel record ingestion: comma-separated extracts with
//! VesselName, MMSI, CallSign and VesselType columns, cleaned and
//! deduplicated into a closed vessel-type vocabulary.

use std::collections::HashSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VesselError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: missing required column {column}")]
    MissingColumn { path: PathBuf, column: &'static str },
    #[error("unknown vessel type {0:?}")]
    UnknownType(String),
}

/// Closed vessel-type vocabulary. Source values outside the list
/// (including "UNKNOWN" and "Other") are mapped to `MotorVessel`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VesselType {
    PassengerVessel,
    CargoVessel,
    Tanker,
    FishingVessel,
    MotorVessel,
    SailingVessel,
    PleasureCraft,
    Tug,
    MilitaryVessel,
    Dredger,
}

impl VesselType {
    pub const ALL: [VesselType; 10] = [
        VesselType::PassengerVessel,
        VesselType::CargoVessel,
        VesselType::Tanker,
        VesselType::FishingVessel,
        VesselType::MotorVessel,
        VesselType::SailingVessel,
        VesselType::PleasureCraft,
        VesselType::Tug,
        VesselType::MilitaryVessel,
        VesselType::Dredger,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            VesselType::PassengerVessel => "Passenger Vessel",
            VesselType::CargoVessel => "Cargo Vessel",
            VesselType::Tanker => "Tanker",
            VesselType::FishingVessel => "Fishing Vessel",
            VesselType::MotorVessel => "Motor Vessel",
            VesselType::SailingVessel => "Sailing Vessel",
            VesselType::PleasureCraft => "Pleasure Craft",
            VesselType::Tug => "Tug",
            VesselType::MilitaryVessel => "Military Vessel",
            VesselType::Dredger => "Dredger",
        }
    }

    /// Vessel types that plausibly carry cargo.
    pub fn can_have_cargo(&self) -> bool {
        matches!(
            self,
            VesselType::PassengerVessel | VesselType::CargoVessel | VesselType::Tanker
        )
    }

    /// Source-data mapping: unknown and "Other" types become Motor Vessel.
    pub fn parse_or_motor(raw: &str) -> VesselType {
        VesselType::from_str(raw).unwrap_or(VesselType::MotorVessel)
    }
}

impl fmt::Display for VesselType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VesselType {
    type Err = VesselError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let needle = s.trim().to_ascii_lowercase();
        VesselType::ALL
            .iter()
            .find(|t| t.name().to_ascii_lowercase() == needle)
            .copied()
            .ok_or_else(|| VesselError::UnknownType(s.to_string()))
    }
}

/// Cleaned AIS-derived vessel identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VesselRecord {
    pub name: String,
    /// Exactly nine decimal digits when present.
    pub mmsi: Option<String>,
    pub call_sign: Option<String>,
    pub vessel_type: VesselType,
}

pub struct VesselLoad {
    pub records: Vec<VesselRecord>,
    pub dropped_no_name: usize,
    pub invalid_mmsi: usize,
    pub duplicates_collapsed: usize,
}

/// Loads and merges vessel extracts. Rows without a usable name are
/// dropped; names keep only `A-Z`, `0-9`, space and hyphen; duplicate
/// MMSIs collapse to the first occurrence across all files, which also
/// pins the first-seen vessel type for that MMSI.
pub fn load_vessels(paths: &[PathBuf]) -> Result<VesselLoad, VesselError> {
    let mut records = Vec::new();
    let mut seen_mmsi: HashSet<String> = HashSet::new();
    let mut dropped_no_name = 0usize;
    let mut invalid_mmsi = 0usize;
    let mut duplicates = 0usize;
    for path in paths {
        let mut reader = csv::ReaderBuilder::new()
            .flexible(true)
            .from_path(path)
            .map_err(|e| VesselError::Io {
                path: path.clone(),
                source: e,
            })?;
        let headers = reader
            .headers()
            .map_err(|e| VesselError::Io {
                path: path.clone(),
                source: e,
            })?
            .clone();
        let col = |name: &'static str| -> Result<usize, VesselError> {
            headers
                .iter()
                .position(|h| h.trim().eq_ignore_ascii_case(name))
                .ok_or(VesselError::MissingColumn { path: path.clone(), column: name })
        };
        let name_col = col("VesselName")?;
        let mmsi_col = col("MMSI")?;
        let call_col = col("CallSign")?;
        let type_col = col("VesselType")?;
        for row in reader.records() {
            let row = row.map_err(|e| VesselError::Io {
                path: path.clone(),
                source: e,
            })?;
            let name = clean_vessel_name(row.get(name_col).unwrap_or(""));
            if name.is_empty() {
                dropped_no_name += 1;
                continue;
            }
            let mmsi_raw = row.get(mmsi_col).unwrap_or("").trim();
            let mmsi = if mmsi_raw.len() == 9 && mmsi_raw.bytes().all(|b| b.is_ascii_digit()) {
                Some(mmsi_raw.to_string())
            } else {
                if !mmsi_raw.is_empty() {
                    invalid_mmsi += 1;
                }
                None
            };
            if let Some(id) = &mmsi {
                if !seen_mmsi.insert(id.clone()) {
                    duplicates += 1;
                    continue;
                }
            }
            let call_sign = match row.get(call_col).unwrap_or("").trim() {
                "" => None,
                s => Some(s.to_string()),
            };
            records.push(VesselRecord {
                name,
                mmsi,
                call_sign,
                vessel_type: VesselType::parse_or_motor(row.get(type_col).unwrap_or("")),
            });
        }
    }
    Ok(VesselLoad {
        records,
        dropped_no_name,
        invalid_mmsi,
        duplicates_collapsed: duplicates,
    })
}

/// Uppercases and keeps only `A-Z`, `0-9`, space and hyphen, collapsing
/// the whitespace that cleaning leaves behind.
pub fn clean_vessel_name(raw: &str) -> String {
    let upper = raw.to_ascii_uppercase();
    let kept: String = upper
        .chars()
        .map(|c| match c {
            'A'..='Z' | '0'..='9' | '-' => c,
            _ => ' ',
        })
        .collect();
    kept.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Removes up to `count` records of the given type, chosen uniformly at
/// random. Used to rebalance over-represented types at ingest.
pub fn drop_random_of_type<R: Rng>(
    records: &mut Vec<VesselRecord>,
    vessel_type: VesselType,
    count: usize,
    rng: &mut R,
) -> usize {
    let mut matching: Vec<usize> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.vessel_type == vessel_type)
        .map(|(i, _)| i)
        .collect();
    matching.shuffle(rng);
    let mut doomed: Vec<usize> = matching.into_iter().take(count).collect();
    doomed.sort_unstable_by(|a, b| b.cmp(a));
    let removed = doomed.len();
    for idx in doomed {
        records.remove(idx);
    }
    removed
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::io::Write;

    fn csv_file(rows: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "VesselName,MMSI,CallSign,VesselType").unwrap();
        for r in rows {
            writeln!(f, "{r}").unwrap();
        }
        f
    }

    #[test]
    fn cleans_special_characters_and_maps_other() {
        let f = csv_file(&["EVER GIVEN*,123456789,ABCD,Other"]);
        let load = load_vessels(&[f.path().to_path_buf()]).unwrap();
        assert_eq!(load.records.len(), 1);
        assert_eq!(load.records[0].name, "EVER GIVEN");
        assert_eq!(load.records[0].vessel_type, VesselType::MotorVessel);
    }

    #[test]
    fn drops_unnamed_rows() {
        let f = csv_file(&[",123456789,ABCD,Tanker", "** **,987654321,,Tug"]);
        let load = load_vessels(&[f.path().to_path_buf()]).unwrap();
        assert!(load.records.is_empty());
        assert_eq!(load.dropped_no_name, 2);
    }

    #[test]
    fn first_occurrence_wins_for_duplicate_mmsi() {
        let f = csv_file(&[
            "ALPHA,123456789,,Tanker",
            "ALPHA TWO,123456789,,Cargo Vessel",
        ]);
        let load = load_vessels(&[f.path().to_path_buf()]).unwrap();
        assert_eq!(load.records.len(), 1);
        assert_eq!(load.records[0].vessel_type, VesselType::Tanker);
        assert_eq!(load.duplicates_collapsed, 1);
    }

    #[test]
    fn bad_mmsi_kept_without_mmsi() {
        let f = csv_file(&["BRAVO,12345,WX1234,Fishing Vessel"]);
        let load = load_vessels(&[f.path().to_path_buf()]).unwrap();
        assert_eq!(load.records[0].mmsi, None);
        assert_eq!(load.invalid_mmsi, 1);
        assert_eq!(load.records[0].call_sign.as_deref(), Some("WX1234"));
    }

    #[test]
    fn drop_random_of_type_is_seeded() {
        let make = || {
            (0..20)
                .map(|i| VesselRecord {
                    name: format!("V{i}"),
                    mmsi: None,
                    call_sign: None,
                    vessel_type: if i % 2 == 0 {
                        VesselType::PleasureCraft
                    } else {
                        VesselType::Tug
                    },
                })
                .collect::<Vec<_>>()
        };
        let mut a = make();
        let mut b = make();
        let removed_a =
            drop_random_of_type(&mut a, VesselType::PleasureCraft, 5, &mut ChaCha8Rng::seed_from_u64(9));
        let removed_b =
            drop_random_of_type(&mut b, VesselType::PleasureCraft, 5, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(removed_a, 5);
        assert_eq!(a, b);
        assert_eq!(a.iter().filter(|r| r.vessel_type == VesselType::PleasureCraft).count(), 5);
    }
}
