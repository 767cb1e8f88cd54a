//! Geospatial backing data: shoreline polygons, a gazetteer of named
//! features and AIS vessel records, plus the query structures used by
//! context generation. All distances are nautical miles on a sphere.

mod gazetteer;
pub mod gshhg;
mod vessels;

pub use gazetteer::{CodeSet, Gazetteer, GazetteerLoad, GeoFeature, NearestFeature};
pub use gshhg::RawGshhgPolygon;
pub use vessels::{drop_random_of_type, load_vessels, VesselLoad, VesselRecord, VesselType};

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

/// Mean Earth radius in nautical miles; fixes the sphere model used by
/// every distance computation in the crate.
pub const EARTH_RADIUS_NM: f64 = 3440.065;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("latitude {0} out of range [-90, 90]")]
    InvalidLatitude(f64),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed shoreline data at byte offset {offset}: {reason}")]
    MalformedShoreline { offset: u64, reason: String },
    #[error("malformed polygon text, line {line}: {reason}")]
    MalformedPolygonText { line: usize, reason: String },
    #[error("unknown shoreline format {0:?} (expected gshhg-binary or polygon-text)")]
    UnknownFormat(String),
    #[error("no shoreline polygons loaded")]
    NoShorelines,
    #[error("coincident points")]
    CoincidentPoints,
}

/// A position on the sphere. Longitude is kept normalized to
/// `[-180, 180)`; latitude must lie in `[-90, 90]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !(-90.0..=90.0).contains(&lat) || !lat.is_finite() {
            return Err(GeoError::InvalidLatitude(lat));
        }
        Ok(GeoPoint {
            lat,
            lon: normalize_lon(lon),
        })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

impl fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.6}, {:.6})", self.lat, self.lon)
    }
}

/// Wrap a longitude into `[-180, 180)`.
pub fn normalize_lon(lon: f64) -> f64 {
    let mut l = (lon + 180.0) % 360.0;
    if l < 0.0 {
        l += 360.0;
    }
    l - 180.0
}

/// Great-circle distance in nautical miles (haversine formula).
pub fn haversine_nm(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = (b.lat - a.lat).to_radians();
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_NM * h.sqrt().min(1.0).asin()
}

/// Initial great-circle bearing from `from` toward `to`, in degrees
/// clockwise from north, normalized to `[0, 360)`.
pub fn initial_bearing_deg(from: &GeoPoint, to: &GeoPoint) -> f64 {
    let phi1 = from.lat.to_radians();
    let phi2 = to.lat.to_radians();
    let dlambda = (to.lon - from.lon).to_radians();
    let y = dlambda.sin() * phi2.cos();
    let x = phi1.cos() * phi2.sin() - phi1.sin() * phi2.cos() * dlambda.cos();
    let theta = y.atan2(x).to_degrees();
    (theta + 360.0) % 360.0
}

/// Point reached by travelling `distance_nm` from `start` along the
/// given initial bearing.
pub fn destination(start: &GeoPoint, bearing_deg: f64, distance_nm: f64) -> GeoPoint {
    let delta = distance_nm / EARTH_RADIUS_NM;
    let theta = bearing_deg.to_radians();
    let phi1 = start.lat.to_radians();
    let lambda1 = start.lon.to_radians();
    let phi2 = (phi1.sin() * delta.cos() + phi1.cos() * delta.sin() * theta.cos()).asin();
    let lambda2 = lambda1
        + (theta.sin() * delta.sin() * phi1.cos()).atan2(delta.cos() - phi1.sin() * phi2.sin());
    GeoPoint {
        lat: phi2.to_degrees().clamp(-90.0, 90.0),
        lon: normalize_lon(lambda2.to_degrees()),
    }
}

/// Axis-aligned lat/lon bounding box (degrees, `west <= east`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub west: f64,
    pub east: f64,
    pub south: f64,
    pub north: f64,
}

impl BoundingBox {
    pub fn from_points(points: &[GeoPoint]) -> Self {
        let mut bbox = BoundingBox {
            west: f64::INFINITY,
            east: f64::NEG_INFINITY,
            south: f64::INFINITY,
            north: f64::NEG_INFINITY,
        };
        for p in points {
            bbox.west = bbox.west.min(p.lon);
            bbox.east = bbox.east.max(p.lon);
            bbox.south = bbox.south.min(p.lat);
            bbox.north = bbox.north.max(p.lat);
        }
        bbox
    }

    pub fn contains(&self, p: &GeoPoint) -> bool {
        p.lon >= self.west && p.lon <= self.east && p.lat >= self.south && p.lat <= self.north
    }
}

/// Closed shoreline ring. `level` 1 marks land in the GSHHG hierarchy.
#[derive(Debug, Clone)]
pub struct ShorelinePolygon {
    ring: Vec<GeoPoint>,
    level: i32,
    bbox: BoundingBox,
}

impl ShorelinePolygon {
    /// Builds a polygon from at least three distinct points, closing the
    /// ring when the input does not already repeat the first point.
    pub fn new(mut ring: Vec<GeoPoint>, level: i32) -> Option<Self> {
        if ring.len() > 1 && ring.first() == ring.last() {
            ring.pop();
        }
        if ring.len() < 3 {
            return None;
        }
        let first = ring[0];
        ring.push(first);
        let bbox = BoundingBox::from_points(&ring);
        Some(ShorelinePolygon { ring, level, bbox })
    }

    pub fn ring(&self) -> &[GeoPoint] {
        &self.ring
    }

    pub fn level(&self) -> i32 {
        self.level
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    /// Even-odd containment test in lon/lat coordinates. Points exactly
    /// on a boundary edge count as inside (land).
    pub fn contains(&self, p: &GeoPoint) -> bool {
        if !self.bbox.contains(p) {
            return false;
        }
        let (px, py) = (p.lon, p.lat);
        let mut inside = false;
        for seg in self.ring.windows(2) {
            let (ax, ay) = (seg[0].lon, seg[0].lat);
            let (bx, by) = (seg[1].lon, seg[1].lat);
            if on_segment(px, py, ax, ay, bx, by) {
                return true;
            }
            if (ay > py) != (by > py) {
                let x_cross = ax + (py - ay) * (bx - ax) / (by - ay);
                if px < x_cross {
                    inside = !inside;
                }
            }
        }
        inside
    }
}

fn on_segment(px: f64, py: f64, ax: f64, ay: f64, bx: f64, by: f64) -> bool {
    let cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax);
    cross == 0.0
        && px >= ax.min(bx)
        && px <= ax.max(bx)
        && py >= ay.min(by)
        && py <= ay.max(by)
}

/// Shoreline dataset format accepted by [`ShorelineSet::load`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShorelineFormat {
    /// Big-endian GSHHG binary records.
    GshhgBinary,
    /// One polygon per line: `level;lon,lat lon,lat ...` (test fixtures).
    PolygonText,
}

impl FromStr for ShorelineFormat {
    type Err = GeoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gshhg-binary" => Ok(ShorelineFormat::GshhgBinary),
            "polygon-text" => Ok(ShorelineFormat::PolygonText),
            other => Err(GeoError::UnknownFormat(other.to_string())),
        }
    }
}

/// Result of loading a shoreline file: the queryable set plus counts of
/// rejected degenerate polygons and any warnings.
pub struct ShorelineLoad {
    pub set: ShorelineSet,
    pub rejected_polygons: usize,
    pub warnings: Vec<String>,
}

/// Immutable collection of land polygons with a 1-degree grid index over
/// polygon bounding boxes. Queries only consider level-1 polygons.
pub struct ShorelineSet {
    polygons: Vec<ShorelinePolygon>,
    grid: HashMap<(i32, i32), Vec<usize>>,
}

impl ShorelineSet {
    pub fn from_polygons(polygons: Vec<ShorelinePolygon>) -> Self {
        let mut grid: HashMap<(i32, i32), Vec<usize>> = HashMap::new();
        for (idx, poly) in polygons.iter().enumerate() {
            if poly.level != 1 {
                continue;
            }
            let b = poly.bbox;
            let (lon_lo, lon_hi) = (cell_coord(b.west, -180, 179), cell_coord(b.east, -180, 179));
            let (lat_lo, lat_hi) = (cell_coord(b.south, -90, 89), cell_coord(b.north, -90, 89));
            for clon in lon_lo..=lon_hi {
                for clat in lat_lo..=lat_hi {
                    grid.entry((clon, clat)).or_default().push(idx);
                }
            }
        }
        ShorelineSet { polygons, grid }
    }

    /// Loads level-1 polygons from `path`. Degenerate polygons (fewer
    /// than three points) are counted and skipped rather than failing
    /// the whole load.
    pub fn load(path: &Path, format: ShorelineFormat) -> Result<ShorelineLoad, GeoError> {
        let mut warnings = Vec::new();
        let mut rejected = 0usize;
        let mut polygons = Vec::new();
        match format {
            ShorelineFormat::GshhgBinary => {
                let raw = gshhg::read_file(path)?;
                for rec in raw {
                    if rec.level() != 1 {
                        continue;
                    }
                    if rec.points.len() <= 2 {
                        rejected += 1;
                        log::warn!("skipping degenerate polygon id {} ({} points)", rec.id, rec.points.len());
                        continue;
                    }
                    let ring: Result<Vec<GeoPoint>, GeoError> = rec
                        .points
                        .iter()
                        .map(|&(x, y)| GeoPoint::new(y as f64 * 1e-6, x as f64 * 1e-6))
                        .collect();
                    match ShorelinePolygon::new(ring?, rec.level()) {
                        Some(p) => polygons.push(p),
                        None => rejected += 1,
                    }
                }
            }
            ShorelineFormat::PolygonText => {
                let text = std::fs::read_to_string(path).map_err(|e| GeoError::Io {
                    path: path.to_path_buf(),
                    source: e,
                })?;
                for (lineno, line) in text.lines().enumerate() {
                    let line = line.trim();
                    if line.is_empty() {
                        continue;
                    }
                    let (level_s, points_s) =
                        line.split_once(';')
                            .ok_or_else(|| GeoError::MalformedPolygonText {
                                line: lineno + 1,
                                reason: "missing ';' separator".into(),
                            })?;
                    let level: i32 =
                        level_s
                            .trim()
                            .parse()
                            .map_err(|_| GeoError::MalformedPolygonText {
                                line: lineno + 1,
                                reason: format!("bad level {level_s:?}"),
                            })?;
                    let mut ring = Vec::new();
                    for pair in points_s.split_whitespace() {
                        let (lon_s, lat_s) =
                            pair.split_once(',')
                                .ok_or_else(|| GeoError::MalformedPolygonText {
                                    line: lineno + 1,
                                    reason: format!("bad point {pair:?}"),
                                })?;
                        let lon: f64 =
                            lon_s.parse().map_err(|_| GeoError::MalformedPolygonText {
                                line: lineno + 1,
                                reason: format!("bad longitude {lon_s:?}"),
                            })?;
                        let lat: f64 =
                            lat_s.parse().map_err(|_| GeoError::MalformedPolygonText {
                                line: lineno + 1,
                                reason: format!("bad latitude {lat_s:?}"),
                            })?;
                        ring.push(GeoPoint::new(lat, lon)?);
                    }
                    if ring.len() <= 2 {
                        rejected += 1;
                        log::warn!("line {}: degenerate polygon skipped", lineno + 1);
                        continue;
                    }
                    if level != 1 {
                        continue;
                    }
                    match ShorelinePolygon::new(ring, level) {
                        Some(p) => polygons.push(p),
                        None => rejected += 1,
                    }
                }
            }
        }
        if polygons.is_empty() {
            let msg = format!("{}: no land polygons loaded", path.display());
            log::warn!("{msg}");
            warnings.push(msg);
        }
        Ok(ShorelineLoad {
            set: ShorelineSet::from_polygons(polygons),
            rejected_polygons: rejected,
            warnings,
        })
    }

    pub fn polygons(&self) -> &[ShorelinePolygon] {
        &self.polygons
    }

    pub fn is_empty(&self) -> bool {
        self.polygons.iter().all(|p| p.level != 1)
    }

    /// True iff `p` lies inside no level-1 land polygon. Boundary points
    /// count as land.
    pub fn is_at_sea(&self, p: &GeoPoint) -> bool {
        let cell = point_cell(p);
        match self.grid.get(&cell) {
            None => true,
            Some(candidates) => !candidates.iter().any(|&i| self.polygons[i].contains(p)),
        }
    }

    /// Minimum distance from `p` to any shoreline segment. Segment
    /// distance is approximated by the minimum over the endpoints and 9
    /// uniformly spaced interior samples.
    pub fn distance_to_land_nm(&self, p: &GeoPoint) -> Result<f64, GeoError> {
        if self.is_empty() {
            return Err(GeoError::NoShorelines);
        }
        let mut best = f64::INFINITY;
        for poly in &self.polygons {
            if poly.level != 1 {
                continue;
            }
            if rect_min_distance_nm(p, poly.bbox.west, poly.bbox.east, poly.bbox.south, poly.bbox.north)
                >= best
            {
                continue;
            }
            for seg in poly.ring.windows(2) {
                for step in 0..=10 {
                    let t = step as f64 / 10.0;
                    let sample = GeoPoint {
                        lat: seg[0].lat + (seg[1].lat - seg[0].lat) * t,
                        lon: normalize_lon(seg[0].lon + (seg[1].lon - seg[0].lon) * t),
                    };
                    best = best.min(haversine_nm(p, &sample));
                }
            }
        }
        Ok(best)
    }
}

fn cell_coord(v: f64, lo: i32, hi: i32) -> i32 {
    (v.floor() as i32).clamp(lo, hi)
}

pub(crate) fn point_cell(p: &GeoPoint) -> (i32, i32) {
    (cell_coord(p.lon, -180, 179), cell_coord(p.lat, -90, 89))
}

pub(crate) fn cell_neighbors(cell: (i32, i32)) -> Vec<(i32, i32)> {
    let mut out = Vec::with_capacity(8);
    for dlon in -1..=1i32 {
        for dlat in -1..=1i32 {
            if dlon == 0 && dlat == 0 {
                continue;
            }
            let lat = cell.1 + dlat;
            if !(-90..=89).contains(&lat) {
                continue;
            }
            let mut lon = cell.0 + dlon;
            if lon < -180 {
                lon += 360;
            }
            if lon > 179 {
                lon -= 360;
            }
            out.push((lon, lat));
        }
    }
    out
}

/// Lower bound on the distance from `p` to any point of the lat/lon
/// rectangle, exact on the sphere. Used for grid pruning, so it must
/// never overestimate.
pub(crate) fn rect_min_distance_nm(p: &GeoPoint, west: f64, east: f64, south: f64, north: f64) -> f64 {
    let lon_inside = p.lon >= west && p.lon <= east;
    let lat_inside = p.lat >= south && p.lat <= north;
    if lon_inside && lat_inside {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    if lon_inside {
        let dlat = if p.lat < south {
            south - p.lat
        } else {
            p.lat - north
        };
        best = best.min(dlat.to_radians() * EARTH_RADIUS_NM);
    }
    for edge_lon in [west, east] {
        best = best.min(meridian_arc_distance_nm(p, edge_lon, south, north));
    }
    best
}

/// Distance from `p` to the meridian arc at longitude `lon` spanning
/// latitudes `[south, north]`.
fn meridian_arc_distance_nm(p: &GeoPoint, lon: f64, south: f64, north: f64) -> f64 {
    let phi_p = p.lat.to_radians();
    let mut dlambda = (p.lon - lon).abs() % 360.0;
    if dlambda > 180.0 {
        dlambda = 360.0 - dlambda;
    }
    let dlambda = dlambda.to_radians();
    let mut candidates = vec![south.to_radians(), north.to_radians()];
    // cos(d) = sin(phi_p) sin(phi) + cos(phi_p) cos(dlambda) cos(phi) peaks at
    // phi_hat; the peak is the closest point when it falls inside the arc.
    let phi_hat = phi_p.sin().atan2(phi_p.cos() * dlambda.cos());
    if phi_hat >= south.to_radians() && phi_hat <= north.to_radians() {
        candidates.push(phi_hat);
    }
    let mut best = f64::INFINITY;
    for phi in candidates {
        let cos_d = phi_p.sin() * phi.sin() + phi_p.cos() * phi.cos() * dlambda.cos();
        best = best.min(cos_d.clamp(-1.0, 1.0).acos() * EARTH_RADIUS_NM);
    }
    best
}

/// Best-first search over grid cells in increasing order of their exact
/// lower-bound distance. Yields candidate indices from `grid`; the
/// caller keeps its own running best and the iteration stops once no
/// unvisited cell can beat `best`.
pub(crate) fn nearest_in_grid<F>(
    grid: &HashMap<(i32, i32), Vec<usize>>,
    p: &GeoPoint,
    mut visit: F,
) where
    // Returns the current best distance after considering the candidates.
    F: FnMut(&[usize]) -> f64,
{
    let start = point_cell(p);
    let mut heap: BinaryHeap<Reverse<(u64, (i32, i32))>> = BinaryHeap::new();
    let mut seen: HashSet<(i32, i32)> = HashSet::new();
    seen.insert(start);
    heap.push(Reverse((0u64, start)));
    let mut best = f64::INFINITY;
    while let Some(Reverse((bits, cell))) = heap.pop() {
        let bound = f64::from_bits(bits);
        if bound > best {
            break;
        }
        if let Some(candidates) = grid.get(&cell) {
            best = visit(candidates);
        }
        for n in cell_neighbors(cell) {
            if seen.insert(n) {
                let b = rect_min_distance_nm(
                    p,
                    n.0 as f64,
                    (n.0 + 1) as f64,
                    n.1 as f64,
                    (n.1 + 1) as f64,
                );
                heap.push(Reverse((b.to_bits(), n)));
            }
        }
    }
}

/// Loaded datasets bundled for context generation.
pub struct GeoData {
    pub shorelines: ShorelineSet,
    pub gazetteer: Gazetteer,
    pub vessels: Vec<VesselRecord>,
}
