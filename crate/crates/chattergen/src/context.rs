//! Distress-context generation: sampling mutually consistent scenario
//! facts (vessel, position, nearby places, distances) from the loaded
//! geodata, rendered in the spoken style the dialogues use.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{
    destination, initial_bearing_deg, CodeSet, GeoData, GeoError, GeoPoint,
    VesselRecord,
};
use crate::verbalize::{
    call_sign_words, digits_to_words, number_to_words, NumberStyle,
};

#[derive(Debug, Error)]
pub enum ContextError {
    #[error("vessel dataset is empty")]
    EmptyVesselDataset,
    #[error("position sampling gave up after {0} attempts (degenerate shoreline data?)")]
    SamplingCapExceeded(u32),
    #[error("coincident points have no compass direction")]
    CoincidentPoints,
    #[error(transparent)]
    Geo(#[from] GeoError),
}

/// The ten SMCP distress categories a dialogue can report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DistressCategory {
    FireExplosion,
    Flooding,
    Collision,
    Grounding,
    ListDangerOfCapsizing,
    Sinking,
    DisabledAndAdrift,
    ArmedAttackPiracy,
    UndesignatedDistress,
    PersonOverboard,
}

impl DistressCategory {
    pub const ALL: [DistressCategory; 10] = [
        DistressCategory::FireExplosion,
        DistressCategory::Flooding,
        DistressCategory::Collision,
        DistressCategory::Grounding,
        DistressCategory::ListDangerOfCapsizing,
        DistressCategory::Sinking,
        DistressCategory::DisabledAndAdrift,
        DistressCategory::ArmedAttackPiracy,
        DistressCategory::UndesignatedDistress,
        DistressCategory::PersonOverboard,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DistressCategory::FireExplosion => "Fire, Explosion",
            DistressCategory::Flooding => "Flooding",
            DistressCategory::Collision => "Collision",
            DistressCategory::Grounding => "Grounding",
            DistressCategory::ListDangerOfCapsizing => "List, Danger of Capsizing",
            DistressCategory::Sinking => "Sinking",
            DistressCategory::DisabledAndAdrift => "Disabled and Adrift",
            DistressCategory::ArmedAttackPiracy => "Armed Attack, Piracy",
            DistressCategory::UndesignatedDistress => "Undesignated Distress",
            DistressCategory::PersonOverboard => "Person Overboard",
        }
    }

    /// File/CLI identifier: "fire-explosion", "person-overboard", ...
    pub fn slug(&self) -> &'static str {
        match self {
            DistressCategory::FireExplosion => "fire-explosion",
            DistressCategory::Flooding => "flooding",
            DistressCategory::Collision => "collision",
            DistressCategory::Grounding => "grounding",
            DistressCategory::ListDangerOfCapsizing => "list-danger-of-capsizing",
            DistressCategory::Sinking => "sinking",
            DistressCategory::DisabledAndAdrift => "disabled-and-adrift",
            DistressCategory::ArmedAttackPiracy => "armed-attack-piracy",
            DistressCategory::UndesignatedDistress => "undesignated-distress",
            DistressCategory::PersonOverboard => "person-overboard",
        }
    }

    /// The fixed one-line task instruction for this category.
    pub fn instruction(&self) -> &'static str {
        match self {
            DistressCategory::FireExplosion => {
                "Generate a maritime radio chatter. A vessel makes a distress call and reports a fire."
            }
            DistressCategory::Flooding => {
                "Generate a maritime radio chatter. A vessel makes a distress call and reports flooding."
            }
            DistressCategory::Collision => {
                "Generate a maritime radio chatter. A vessel makes a distress call and reports collision."
            }
            DistressCategory::Grounding => {
                "Generate a maritime radio chatter. A vessel makes a distress call and reports grounding."
            }
            DistressCategory::ListDangerOfCapsizing => {
                "Generate a maritime radio chatter. A vessel makes a distress call and reports list-danger of capsizing."
            }
            DistressCategory::Sinking => {
                "Generate a maritime radio chatter. A vessel makes a distress call and reports sinking."
            }
            DistressCategory::DisabledAndAdrift => {
                "Generate a maritime radio chatter. A vessel makes a distress call and reports being disabled and adrift."
            }
            DistressCategory::ArmedAttackPiracy => {
                "Generate a maritime radio chatter. A vessel makes a distress call and reports armed attack/piracy."
            }
            DistressCategory::UndesignatedDistress => {
                "Generate a maritime radio chatter. A vessel makes a distress call and reports an undesignated distress."
            }
            DistressCategory::PersonOverboard => {
                "Generate a maritime radio chatter. A vessel makes a distress call and reports person overboard."
            }
        }
    }

    pub fn index(&self) -> usize {
        DistressCategory::ALL.iter().position(|c| c == self).unwrap()
    }
}

impl fmt::Display for DistressCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistressCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let needle = s.trim().to_lowercase();
        DistressCategory::ALL
            .iter()
            .find(|c| {
                c.name().to_lowercase() == needle
                    || c.slug() == needle
                    || c.name().to_lowercase().replace(',', "") == needle.replace(',', "")
            })
            .copied()
            .ok_or_else(|| format!("unknown distress category {s:?}"))
    }
}

impl Serialize for DistressCategory {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for DistressCategory {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        DistressCategory::from_str(&s).map_err(serde::de::Error::custom)
    }
}

/// Serde helper distinguishing a missing key from an explicit null, for
/// fields that only appear at all in the collision category.
mod double_option {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<T, S>(value: &Option<Option<T>>, serializer: S) -> Result<S::Ok, S::Error>
    where
        T: Serialize,
        S: Serializer,
    {
        match value {
            Some(inner) => inner.serialize(serializer),
            None => serializer.serialize_none(),
        }
    }

    pub fn deserialize<'de, T, D>(deserializer: D) -> Result<Option<Option<T>>, D::Error>
    where
        T: Deserialize<'de>,
        D: Deserializer<'de>,
    {
        Option::<T>::deserialize(deserializer).map(Some)
    }
}

/// The key/value scenario facts handed to the model and checked by the
/// filters. Field order is the canonical key order of the emitted JSON.
/// Distances are integers rendered in the spoken style; the collided
/// fields only exist for the collision category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistressContext {
    pub vessel_name: String,
    #[serde(rename = "vessel_MMSI", default)]
    pub vessel_mmsi: Option<String>,
    #[serde(default)]
    pub vessel_call_sign: Option<String>,
    #[serde(default)]
    pub vessel_type: Option<String>,
    pub vessel_coordinate_dms: String,
    #[serde(default)]
    pub compass_direction: Option<String>,
    #[serde(default)]
    pub closest_place_name: Option<String>,
    #[serde(default)]
    pub distance_to_nearest_place: Option<String>,
    #[serde(default)]
    pub closest_place_country: Option<String>,
    #[serde(default)]
    pub distance_to_nearest_port: Option<String>,
    #[serde(default)]
    pub nearest_port: Option<String>,
    #[serde(default)]
    pub distance_to_nearest_harbor: Option<String>,
    #[serde(default)]
    pub nearest_harbor: Option<String>,
    pub digit_by_digit: bool,
    #[serde(default)]
    pub can_have_cargo: Option<String>,
    #[serde(default)]
    pub closest_water_body: Option<String>,
    #[serde(default)]
    pub distance_to_closest_water_body: Option<String>,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        with = "double_option"
    )]
    pub collided_vessel_name: Option<Option<String>>,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        with = "double_option"
    )]
    pub collided_vessel_type: Option<Option<String>>,
}

impl DistressContext {
    pub fn collided_name(&self) -> Option<&str> {
        self.collided_vessel_name.as_ref().and_then(|v| v.as_deref())
    }

    pub fn collided_type(&self) -> Option<&str> {
        self.collided_vessel_type.as_ref().and_then(|v| v.as_deref())
    }

    /// Checks the structural invariants generated contexts must satisfy.
    pub fn validate(&self, category: DistressCategory) -> Result<(), String> {
        if self.vessel_name.trim().is_empty() {
            return Err("vessel_name empty".into());
        }
        if self.nearest_harbor.is_some() != self.distance_to_nearest_harbor.is_some() {
            return Err("harbor name/distance presence mismatch".into());
        }
        if self.closest_water_body.is_some() != self.distance_to_closest_water_body.is_some() {
            return Err("water body name/distance presence mismatch".into());
        }
        let cargo_types = ["Passenger Vessel", "Cargo Vessel", "Tanker"];
        let cargo_expected = self
            .vessel_type
            .as_deref()
            .map(|t| cargo_types.contains(&t))
            .unwrap_or(false);
        match (&self.can_have_cargo, cargo_expected) {
            (Some(v), true) if v == "True" => {}
            (None, false) => {}
            other => return Err(format!("can_have_cargo inconsistent: {other:?}")),
        }
        if category == DistressCategory::Collision {
            if self.collided_vessel_name.is_none() || self.collided_vessel_type.is_none() {
                return Err("collision context must carry collided keys".into());
            }
            if self.collided_name().is_none() && self.collided_type().is_some() {
                return Err("collided type without collided name".into());
            }
        } else if self.collided_vessel_name.is_some() || self.collided_vessel_type.is_some() {
            return Err("collided keys outside collision category".into());
        }
        for dist in [
            &self.distance_to_nearest_place,
            &self.distance_to_nearest_port,
            &self.distance_to_nearest_harbor,
            &self.distance_to_closest_water_body,
        ]
        .into_iter()
        .flatten()
        {
            crate::verbalize::words_to_value(dist)
                .map_err(|e| format!("unparseable distance {dist:?}: {e}"))?;
        }
        Ok(())
    }
}

/// Probabilities for optional context fields. The defaults exercise all
/// filter branches; every rate is config-overridable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextConfig {
    pub p_mmsi_null: f64,
    pub p_call_sign_null: f64,
    /// Probability the vessel type is replaced (half null, half "Motor
    /// Vessel").
    pub p_type_replaced: f64,
    pub p_minutes_omitted: f64,
    pub p_decimal_minutes_omitted: f64,
    pub p_digit_by_digit: f64,
    pub p_collided_null: f64,
    /// Rejection-sampling attempt cap for position sampling.
    pub sampling_cap: u32,
}

impl Default for ContextConfig {
    fn default() -> Self {
        ContextConfig {
            p_mmsi_null: 0.3,
            p_call_sign_null: 0.3,
            p_type_replaced: 0.3,
            p_minutes_omitted: 0.2,
            p_decimal_minutes_omitted: 0.5,
            p_digit_by_digit: 0.5,
            p_collided_null: 0.3,
            sampling_cap: 10_000,
        }
    }
}

/// Maximum distance (nm) a grounding position may sit from land.
pub const GROUNDING_MAX_NM: f64 = 1.0;
/// Harbors and water bodies farther than this are dropped from contexts.
pub const FEATURE_CUTOFF_NM: f64 = 200.0;

/// Samples a position at sea; grounding positions additionally lie
/// within [`GROUNDING_MAX_NM`] of a shoreline. Rejection sampling with a
/// hard attempt cap so degenerate fixtures fail loudly.
pub fn sample_sea_position<R: Rng>(
    category: DistressCategory,
    rng: &mut R,
    geodata: &GeoData,
    config: &ContextConfig,
) -> Result<GeoPoint, ContextError> {
    let mut attempts = 0u32;
    if category == DistressCategory::Grounding {
        let polygons = geodata.shorelines.polygons();
        if polygons.is_empty() {
            return Err(ContextError::Geo(GeoError::NoShorelines));
        }
        while attempts < config.sampling_cap {
            attempts += 1;
            let poly = &polygons[rng.gen_range(0..polygons.len())];
            let ring = poly.ring();
            let seg = rng.gen_range(0..ring.len() - 1);
            let t: f64 = rng.gen();
            let base = GeoPoint::new(
                ring[seg].lat() + (ring[seg + 1].lat() - ring[seg].lat()) * t,
                ring[seg].lon() + (ring[seg + 1].lon() - ring[seg].lon()) * t,
            )?;
            let bearing = rng.gen_range(0.0..360.0);
            let dist = rng.gen_range(0.02..0.98);
            let p = destination(&base, bearing, dist);
            if geodata.shorelines.is_at_sea(&p)
                && geodata.shorelines.distance_to_land_nm(&p)? <= GROUNDING_MAX_NM
            {
                return Ok(p);
            }
        }
    } else {
        while attempts < config.sampling_cap {
            attempts += 1;
            let u: f64 = rng.gen();
            let lat = (2.0 * u - 1.0).asin().to_degrees();
            let lon = rng.gen_range(-180.0..180.0);
            let p = GeoPoint::new(lat, lon)?;
            if geodata.shorelines.is_at_sea(&p) {
                return Ok(p);
            }
        }
    }
    Err(ContextError::SamplingCapExceeded(attempts))
}

pub const COMPASS_WINDS: [&str; 8] = [
    "north",
    "north east",
    "east",
    "south east",
    "south",
    "south west",
    "west",
    "north west",
];

/// Eight-wind direction of `vessel` as seen from `place`: the initial
/// great-circle bearing quantized into 45-degree sectors, half-open
/// `[d - 22.5, d + 22.5)`.
pub fn compass_direction(place: &GeoPoint, vessel: &GeoPoint) -> Result<&'static str, ContextError> {
    if (place.lat() - vessel.lat()).abs() < 1e-12
        && (place.lon() - vessel.lon()).abs() < 1e-12
    {
        return Err(ContextError::CoincidentPoints);
    }
    let bearing = initial_bearing_deg(place, vessel);
    let sector = (((bearing + 22.5) % 360.0) / 45.0).floor() as usize % 8;
    Ok(COMPASS_WINDS[sector])
}

fn verbalize_distance(nm: f64, digit_by_digit: bool) -> String {
    let n = nm.round() as u64;
    if digit_by_digit {
        digits_to_words(&n.to_string()).expect("decimal digits")
    } else {
        number_to_words(n).unwrap_or_else(|_| n.to_string())
    }
}

/// Builds one full distress context. Draw order from `rng` is part of
/// the determinism contract: style, position, coordinate flags, vessel,
/// identity nulling, then collision fields.
pub fn build_context<R: Rng>(
    category: DistressCategory,
    rng: &mut R,
    geodata: &GeoData,
    config: &ContextConfig,
) -> Result<DistressContext, ContextError> {
    if geodata.vessels.is_empty() {
        return Err(ContextError::EmptyVesselDataset);
    }
    let digit_by_digit = rng.gen::<f64>() < config.p_digit_by_digit;
    let position = sample_sea_position(category, rng, geodata, config)?;
    let include_minutes = rng.gen::<f64>() >= config.p_minutes_omitted;
    let include_decimals = include_minutes && rng.gen::<f64>() >= config.p_decimal_minutes_omitted;
    let coordinate = crate::verbalize::format_coordinate(
        &position,
        NumberStyle { digit_by_digit },
        include_minutes,
        include_decimals,
    );

    let vessel: &VesselRecord = &geodata.vessels[rng.gen_range(0..geodata.vessels.len())];
    let mmsi = match &vessel.mmsi {
        Some(id) if rng.gen::<f64>() >= config.p_mmsi_null => {
            Some(digits_to_words(id).expect("mmsi digits"))
        }
        _ => None,
    };
    let call_sign = match &vessel.call_sign {
        Some(cs) if rng.gen::<f64>() >= config.p_call_sign_null => {
            let words = call_sign_words(cs);
            if words.is_empty() {
                None
            } else {
                Some(words)
            }
        }
        _ => None,
    };
    let vessel_type = if rng.gen::<f64>() < config.p_type_replaced {
        if rng.gen::<f64>() < 0.5 {
            None
        } else {
            Some("Motor Vessel".to_string())
        }
    } else {
        Some(vessel.vessel_type.name().to_string())
    };

    let place = geodata.gazetteer.nearest(&position, &CodeSet::ClosestPlace);
    let port = geodata.gazetteer.nearest(&position, &CodeSet::Port);
    let harbor = geodata
        .gazetteer
        .nearest(&position, &CodeSet::Harbor)
        .filter(|n| n.distance_nm <= FEATURE_CUTOFF_NM);
    let water = geodata
        .gazetteer
        .nearest(&position, &CodeSet::WaterBody)
        .filter(|n| n.distance_nm <= FEATURE_CUTOFF_NM);

    let compass = place.as_ref().and_then(|n| {
        compass_direction(&n.feature.position, &position)
            .ok()
            .map(|w| w.to_string())
    });

    let cargo_types = ["Passenger Vessel", "Cargo Vessel", "Tanker"];
    let can_have_cargo = match &vessel_type {
        Some(t) if cargo_types.contains(&t.as_str()) => Some("True".to_string()),
        _ => None,
    };

    let (collided_vessel_name, collided_vessel_type) = if category == DistressCategory::Collision {
        let other = pick_other_vessel(rng, geodata, &vessel.name);
        if rng.gen::<f64>() < config.p_collided_null {
            (Some(None), Some(None))
        } else {
            match other {
                Some(record) => (
                    Some(Some(record.name.clone())),
                    Some(Some(record.vessel_type.name().to_string())),
                ),
                None => (Some(None), Some(None)),
            }
        }
    } else {
        (None, None)
    };

    Ok(DistressContext {
        vessel_name: vessel.name.clone(),
        vessel_mmsi: mmsi,
        vessel_call_sign: call_sign,
        vessel_type,
        vessel_coordinate_dms: coordinate,
        compass_direction: compass,
        closest_place_name: place.as_ref().map(|n| n.feature.name.clone()),
        distance_to_nearest_place: place
            .as_ref()
            .map(|n| verbalize_distance(n.distance_nm, digit_by_digit)),
        closest_place_country: place.as_ref().and_then(|n| {
            if n.feature.country.is_empty() {
                None
            } else {
                Some(n.feature.country.clone())
            }
        }),
        distance_to_nearest_port: port
            .as_ref()
            .map(|n| verbalize_distance(n.distance_nm, digit_by_digit)),
        nearest_port: port.as_ref().map(|n| n.feature.name.clone()),
        distance_to_nearest_harbor: harbor
            .as_ref()
            .map(|n| verbalize_distance(n.distance_nm, digit_by_digit)),
        nearest_harbor: harbor.as_ref().map(|n| n.feature.name.clone()),
        digit_by_digit,
        can_have_cargo,
        closest_water_body: water.as_ref().map(|n| n.feature.name.clone()),
        distance_to_closest_water_body: water
            .as_ref()
            .map(|n| verbalize_distance(n.distance_nm, digit_by_digit)),
        collided_vessel_name,
        collided_vessel_type,
    })
}

fn pick_other_vessel<'a, R: Rng>(
    rng: &mut R,
    geodata: &'a GeoData,
    own_name: &str,
) -> Option<&'a VesselRecord> {
    // A handful of draws is enough; a fleet of one has no one to hit.
    for _ in 0..8 {
        let record = &geodata.vessels[rng.gen_range(0..geodata.vessels.len())];
        if record.name != own_name {
            return Some(record);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{Gazetteer, GeoFeature, ShorelinePolygon, ShorelineSet, VesselType};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pt(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    fn feature(name: &str, lat: f64, lon: f64, class: char, code: &str, cc: &str) -> GeoFeature {
        GeoFeature {
            name: name.into(),
            position: pt(lat, lon),
            feature_class: class,
            feature_code: code.into(),
            country: cc.into(),
        }
    }

    pub(crate) fn fixture_geodata() -> GeoData {
        let island = ShorelinePolygon::new(
            vec![pt(0.0, 0.0), pt(1.0, 0.0), pt(1.0, 1.0), pt(0.0, 1.0)],
            1,
        )
        .unwrap();
        let gazetteer = Gazetteer::from_features(vec![
            feature("Cape Example", 0.5, 0.0, 'T', "CAPE", "ES"),
            feature("Puerto Norte", 1.0, 0.5, 'L', "PRT", "ES"),
            feature("Cala Vieja", 0.0, 0.5, 'H', "HBR", "ES"),
            feature("Mar Chica", 0.2, 0.2, 'H', "SEA", "ES"),
        ]);
        let vessels = vec![
            crate::geo::VesselRecord {
                name: "NORD PIONEER".into(),
                mmsi: Some("219014370".into()),
                call_sign: Some("OU2190".into()),
                vessel_type: VesselType::CargoVessel,
            },
            crate::geo::VesselRecord {
                name: "BALTIC ROSE".into(),
                mmsi: None,
                call_sign: None,
                vessel_type: VesselType::FishingVessel,
            },
        ];
        GeoData {
            shorelines: ShorelineSet::from_polygons(vec![island]),
            gazetteer,
            vessels,
        }
    }

    #[test]
    fn compass_examples() {
        assert_eq!(compass_direction(&pt(0.0, 0.0), &pt(1.0, 0.0)).unwrap(), "north");
        assert_eq!(compass_direction(&pt(0.0, 0.0), &pt(-1.0, 1.0)).unwrap(), "south east");
        assert!(compass_direction(&pt(2.0, 2.0), &pt(2.0, 2.0)).is_err());
    }

    #[test]
    fn compass_sector_boundary_rounds_up() {
        // A bearing of exactly 22.5 degrees belongs to "north east".
        let sector = (((22.5f64 + 22.5) % 360.0) / 45.0).floor() as usize % 8;
        assert_eq!(COMPASS_WINDS[sector], "north east");
    }

    #[test]
    fn grounding_positions_hug_the_shore() {
        let geodata = fixture_geodata();
        let config = ContextConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..25 {
            let p = sample_sea_position(DistressCategory::Grounding, &mut rng, &geodata, &config)
                .unwrap();
            assert!(geodata.shorelines.is_at_sea(&p));
            assert!(geodata.shorelines.distance_to_land_nm(&p).unwrap() <= GROUNDING_MAX_NM);
        }
    }

    #[test]
    fn sinking_positions_are_at_sea() {
        let geodata = fixture_geodata();
        let config = ContextConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = sample_sea_position(DistressCategory::Sinking, &mut rng, &geodata, &config).unwrap();
        assert!(geodata.shorelines.is_at_sea(&p));
    }

    #[test]
    fn sampling_is_deterministic_for_a_seed() {
        let geodata = fixture_geodata();
        let config = ContextConfig::default();
        let a = sample_sea_position(
            DistressCategory::Grounding,
            &mut ChaCha8Rng::seed_from_u64(77),
            &geodata,
            &config,
        )
        .unwrap();
        let b = sample_sea_position(
            DistressCategory::Grounding,
            &mut ChaCha8Rng::seed_from_u64(77),
            &geodata,
            &config,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn context_invariants_hold_across_categories() {
        let geodata = fixture_geodata();
        let config = ContextConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..300 {
            let category = DistressCategory::ALL[i % 10];
            let ctx = build_context(category, &mut rng, &geodata, &config).unwrap();
            ctx.validate(category).unwrap();
        }
    }

    #[test]
    fn context_stream_is_byte_identical_for_a_seed() {
        let geodata = fixture_geodata();
        let config = ContextConfig::default();
        let render = || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            (0..20)
                .map(|i| {
                    let ctx = build_context(
                        DistressCategory::ALL[i % 10],
                        &mut rng,
                        &geodata,
                        &config,
                    )
                    .unwrap();
                    serde_json::to_string(&ctx).unwrap()
                })
                .collect::<Vec<_>>()
                .join("\n")
        };
        assert_eq!(render(), render());
    }

    #[test]
    fn collision_context_carries_collided_keys() {
        let geodata = fixture_geodata();
        let config = ContextConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ctx = build_context(DistressCategory::Collision, &mut rng, &geodata, &config).unwrap();
        let json = serde_json::to_string(&ctx).unwrap();
        assert!(json.contains("collided_vessel_name"));

        let other = build_context(DistressCategory::Flooding, &mut rng, &geodata, &config).unwrap();
        let json = serde_json::to_string(&other).unwrap();
        assert!(!json.contains("collided_vessel_name"));
    }

    #[test]
    fn tanker_context_sets_cargo_flag() {
        let geodata = fixture_geodata();
        let mut config = ContextConfig::default();
        config.p_type_replaced = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let ctx = build_context(DistressCategory::Sinking, &mut rng, &geodata, &config).unwrap();
            if ctx.vessel_type.as_deref() == Some("Cargo Vessel") {
                assert_eq!(ctx.can_have_cargo.as_deref(), Some("True"));
                return;
            }
        }
        panic!("cargo vessel never sampled");
    }

    #[test]
    fn context_round_trips_through_json() {
        let geodata = fixture_geodata();
        let config = ContextConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ctx = build_context(DistressCategory::Collision, &mut rng, &geodata, &config).unwrap();
        let json = serde_json::to_string(&ctx).unwrap();
        let back: DistressContext = serde_json::from_str(&json).unwrap();
        assert_eq!(ctx, back);
    }

    #[test]
    fn category_names_parse_back() {
        for c in DistressCategory::ALL {
            assert_eq!(DistressCategory::from_str(c.name()).unwrap(), c);
            assert_eq!(DistressCategory::from_str(c.slug()).unwrap(), c);
        }
        assert!(DistressCategory::from_str("Tsunami").is_err());
    }
}
