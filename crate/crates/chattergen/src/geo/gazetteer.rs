//! Gazetteer of named geographic features, loaded from the tab-separated
//! dump layout (name in column 2, lat/lon in columns 5-6, feature class,
//! feature code and country code in columns 7-9, 1-indexed).

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{haversine_nm, initial_bearing_deg, nearest_in_grid, point_cell, GeoError, GeoPoint};

/// A named feature: landmark, port, harbor, water body and so on.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoFeature {
    pub name: String,
    pub position: GeoPoint,
    pub feature_class: char,
    pub feature_code: String,
    /// ISO-3166 alpha-2 country code; may be empty in the source data.
    pub country: String,
}

/// Selects which features a nearest-neighbour query considers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodeSet {
    /// Any feature class except H (hydrographic): the "closest place".
    ClosestPlace,
    /// Feature code PRT.
    Port,
    /// Feature code HBR.
    Harbor,
    /// H-class water bodies: seas, oceans, bays, coves, gulfs, straits,
    /// sounds and lagoons.
    WaterBody,
}

const WATER_BODY_CODES: [&str; 8] = ["SEA", "OCN", "BAY", "COVE", "GULF", "STRT", "SD", "LGN"];

impl CodeSet {
    pub fn matches(&self, feature: &GeoFeature) -> bool {
        match self {
            CodeSet::ClosestPlace => feature.feature_class != 'H',
            CodeSet::Port => feature.feature_code == "PRT",
            CodeSet::Harbor => feature.feature_code == "HBR",
            CodeSet::WaterBody => {
                feature.feature_class == 'H'
                    && WATER_BODY_CODES.contains(&feature.feature_code.as_str())
            }
        }
    }
}

/// Nearest-feature query result. The bearing is the initial great-circle
/// bearing from the feature toward the query point, so it describes
/// where the query point lies relative to the feature.
#[derive(Debug, Clone)]
pub struct NearestFeature {
    pub feature: GeoFeature,
    pub distance_nm: f64,
    pub bearing_deg: f64,
}

pub struct GazetteerLoad {
    pub gazetteer: Gazetteer,
    pub skipped_rows: usize,
}

/// Immutable feature collection with a 1-degree grid index. Small
/// collections fall back to a linear scan, which is both faster at that
/// scale and trivially exact.
pub struct Gazetteer {
    features: Vec<GeoFeature>,
    grid: HashMap<(i32, i32), Vec<usize>>,
}

/// Below this many features a linear scan beats the grid walk.
const LINEAR_SCAN_LIMIT: usize = 64;

impl Gazetteer {
    pub fn from_features(features: Vec<GeoFeature>) -> Self {
        let mut grid: HashMap<(i32, i32), Vec<usize>> = HashMap::new();
        for (idx, f) in features.iter().enumerate() {
            grid.entry(point_cell(&f.position)).or_default().push(idx);
        }
        Gazetteer { features, grid }
    }

    /// Parses the tab-separated gazetteer dump. Rows with missing
    /// columns, unparseable coordinates or empty names are skipped and
    /// counted; a missing file is fatal.
    pub fn load(path: &Path) -> Result<GazetteerLoad, GeoError> {
        let text = fs::read_to_string(path).map_err(|e| GeoError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut features = Vec::new();
        let mut skipped = 0usize;
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() < 9 {
                skipped += 1;
                continue;
            }
            let name = clean_name(cols[1]);
            if name.is_empty() {
                skipped += 1;
                continue;
            }
            let (Ok(lat), Ok(lon)) = (cols[4].trim().parse::<f64>(), cols[5].trim().parse::<f64>())
            else {
                skipped += 1;
                continue;
            };
            let Ok(position) = GeoPoint::new(lat, lon) else {
                skipped += 1;
                continue;
            };
            let Some(feature_class) = cols[6].trim().chars().next() else {
                skipped += 1;
                continue;
            };
            features.push(GeoFeature {
                name,
                position,
                feature_class,
                feature_code: cols[7].trim().to_string(),
                country: cols[8].trim().to_string(),
            });
        }
        if skipped > 0 {
            log::warn!("{}: skipped {} malformed gazetteer rows", path.display(), skipped);
        }
        Ok(GazetteerLoad {
            gazetteer: Gazetteer::from_features(features),
            skipped_rows: skipped,
        })
    }

    pub fn features(&self) -> &[GeoFeature] {
        &self.features
    }

    /// Minimum-distance feature in `set`, or `None` when nothing
    /// matches. Distance ties resolve to the lowest feature index, the
    /// same rule a first-wins linear scan applies.
    pub fn nearest(&self, p: &GeoPoint, set: &CodeSet) -> Option<NearestFeature> {
        let best = if self.features.len() < LINEAR_SCAN_LIMIT {
            self.nearest_linear(p, set)
        } else {
            let mut best: Option<(f64, usize)> = None;
            nearest_in_grid(&self.grid, p, |candidates| {
                for &idx in candidates {
                    let f = &self.features[idx];
                    if !set.matches(f) {
                        continue;
                    }
                    let d = haversine_nm(p, &f.position);
                    let better = match best {
                        None => true,
                        Some((bd, bi)) => d < bd || (d == bd && idx < bi),
                    };
                    if better {
                        best = Some((d, idx));
                    }
                }
                best.map(|(d, _)| d).unwrap_or(f64::INFINITY)
            });
            best
        };
        best.map(|(distance_nm, idx)| {
            let feature = self.features[idx].clone();
            let bearing_deg = initial_bearing_deg(&feature.position, p);
            NearestFeature {
                feature,
                distance_nm,
                bearing_deg,
            }
        })
    }

    fn nearest_linear(&self, p: &GeoPoint, set: &CodeSet) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for (idx, f) in self.features.iter().enumerate() {
            if !set.matches(f) {
                continue;
            }
            let d = haversine_nm(p, &f.position);
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, idx));
            }
        }
        best
    }
}

/// Strips parentheses and brackets from a feature name and tidies the
/// whitespace left behind.
fn clean_name(raw: &str) -> String {
    let stripped: String = raw
        .chars()
        .filter(|c| !matches!(c, '(' | ')' | '[' | ']'))
        .collect();
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::io::Write;

    fn feature(name: &str, lat: f64, lon: f64, class: char, code: &str) -> GeoFeature {
        GeoFeature {
            name: name.to_string(),
            position: GeoPoint::new(lat, lon).unwrap(),
            feature_class: class,
            feature_code: code.to_string(),
            country: "ES".to_string(),
        }
    }

    fn row(name: &str, lat: f64, lon: f64, class: &str, code: &str, cc: &str) -> String {
        format!("1\t{name}\t{name}\t\t{lat}\t{lon}\t{class}\t{code}\t{cc}\t\t\t\t\t\t0\t\t0\tUTC\t2024-01-01")
    }

    #[test]
    fn cleans_parentheses_from_names() {
        assert_eq!(clean_name("Port (old)"), "Port old");
        assert_eq!(clean_name("Cala [Nova]"), "Cala Nova");
    }

    #[test]
    fn loads_rows_and_counts_skips() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "{}", row("Port (old)", 1.5, 2.5, "P", "PPL", "ES")).unwrap();
        writeln!(file, "{}", row("Bad Coord", 1.0, 2.0, "P", "PPL", "ES").replace("\t1\t", "\tabc\t")).unwrap();
        writeln!(file, "{}", row("Harbor", -3.25, 9.75, "H", "HBR", "PT")).unwrap();
        writeln!(file, "short\trow").unwrap();
        let load = Gazetteer::load(file.path()).unwrap();
        // The "Bad Coord" replace targets the latitude column value.
        assert_eq!(load.gazetteer.features().len(), 2);
        assert_eq!(load.skipped_rows, 2);
        assert_eq!(load.gazetteer.features()[0].name, "Port old");
        assert_eq!(load.gazetteer.features()[1].position.lat(), -3.25);
    }

    #[test]
    fn missing_file_is_fatal() {
        assert!(Gazetteer::load(Path::new("/nonexistent/gazetteer.tsv")).is_err());
    }

    #[test]
    fn nearest_single_feature_distance_and_bearing() {
        let gaz = Gazetteer::from_features(vec![feature("Origin", 0.0, 0.0, 'T', "PT")]);
        let p = GeoPoint::new(0.0, 1.0).unwrap();
        let hit = gaz.nearest(&p, &CodeSet::ClosestPlace).unwrap();
        assert_eq!(hit.feature.name, "Origin");
        assert!((hit.distance_nm - 60.0).abs() < 0.1);
        assert!((hit.bearing_deg - 90.0).abs() < 1e-9);
    }

    #[test]
    fn nearest_empty_code_set_match_is_absent() {
        let gaz = Gazetteer::from_features(vec![feature("Land", 0.0, 0.0, 'T', "MT")]);
        let p = GeoPoint::new(0.0, 1.0).unwrap();
        assert!(gaz.nearest(&p, &CodeSet::Port).is_none());
    }

    #[test]
    fn grid_nearest_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut features = Vec::new();
        for i in 0..500 {
            features.push(feature(
                &format!("F{i}"),
                rng.gen_range(-80.0..80.0),
                rng.gen_range(-180.0..180.0),
                if i % 3 == 0 { 'H' } else { 'P' },
                if i % 7 == 0 { "PRT" } else { "PPL" },
            ));
        }
        let gaz = Gazetteer::from_features(features.clone());
        assert!(features.len() >= LINEAR_SCAN_LIMIT, "grid path must be exercised");
        for _ in 0..300 {
            let p = GeoPoint::new(rng.gen_range(-89.0..89.0), rng.gen_range(-180.0..180.0)).unwrap();
            for set in [CodeSet::ClosestPlace, CodeSet::Port] {
                let grid_hit = gaz.nearest(&p, &set);
                let mut lin: Option<(f64, usize)> = None;
                for (idx, f) in features.iter().enumerate() {
                    if !set.matches(f) {
                        continue;
                    }
                    let d = haversine_nm(&p, &f.position);
                    if lin.map_or(true, |(bd, _)| d < bd) {
                        lin = Some((d, idx));
                    }
                }
                match (grid_hit, lin) {
                    (None, None) => {}
                    (Some(g), Some((ld, li))) => {
                        assert_eq!(g.feature.name, features[li].name, "argmin differs at {p}");
                        assert!((g.distance_nm - ld).abs() < 1e-12);
                    }
                    (g, l) => panic!("presence mismatch: {:?} vs {:?}", g.map(|x| x.feature.name), l),
                }
            }
        }
    }
}
