//! GSHHG binary shoreline reader/writer.
//!
//! Records are big-endian: an 11-field header of 4-byte integers
//! (id, point count, flag, west, east, south, north, area, area_full,
//! container, ancestor) followed by `point count` pairs of 4-byte
//! micro-degree integers (lon, lat). The west/east/south/north header
//! fields are micro-degrees as well. The hierarchy level sits in the low
//! byte of `flag`; level 1 is land.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::GeoError;

/// One record exactly as stored on disk, preserved so a read/write round
/// trip is byte-identical.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawGshhgPolygon {
    pub id: i32,
    pub flag: i32,
    pub west: i32,
    pub east: i32,
    pub south: i32,
    pub north: i32,
    pub area: i32,
    pub area_full: i32,
    pub container: i32,
    pub ancestor: i32,
    /// (lon, lat) pairs in micro-degrees.
    pub points: Vec<(i32, i32)>,
}

impl RawGshhgPolygon {
    pub fn level(&self) -> i32 {
        self.flag & 0xff
    }
}

pub fn read_file(path: &Path) -> Result<Vec<RawGshhgPolygon>, GeoError> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| GeoError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
    read(&bytes)
}

pub fn read(bytes: &[u8]) -> Result<Vec<RawGshhgPolygon>, GeoError> {
    let mut polygons = Vec::new();
    let mut offset = 0usize;
    while offset < bytes.len() {
        let header_end = offset + 44;
        if header_end > bytes.len() {
            return Err(GeoError::MalformedShoreline {
                offset: offset as u64,
                reason: format!("truncated header: {} bytes remain", bytes.len() - offset),
            });
        }
        let mut fields = [0i32; 11];
        for (i, field) in fields.iter_mut().enumerate() {
            let at = offset + i * 4;
            *field = i32::from_be_bytes(bytes[at..at + 4].try_into().unwrap());
        }
        let n = fields[1];
        if n < 0 {
            return Err(GeoError::MalformedShoreline {
                offset: offset as u64,
                reason: format!("negative point count {n}"),
            });
        }
        let points_end = header_end + n as usize * 8;
        if points_end > bytes.len() {
            return Err(GeoError::MalformedShoreline {
                offset: header_end as u64,
                reason: format!(
                    "truncated point block: need {} bytes, {} remain",
                    n as usize * 8,
                    bytes.len() - header_end
                ),
            });
        }
        let mut points = Vec::with_capacity(n as usize);
        for i in 0..n as usize {
            let at = header_end + i * 8;
            let x = i32::from_be_bytes(bytes[at..at + 4].try_into().unwrap());
            let y = i32::from_be_bytes(bytes[at + 4..at + 8].try_into().unwrap());
            points.push((x, y));
        }
        polygons.push(RawGshhgPolygon {
            id: fields[0],
            flag: fields[2],
            west: fields[3],
            east: fields[4],
            south: fields[5],
            north: fields[6],
            area: fields[7],
            area_full: fields[8],
            container: fields[9],
            ancestor: fields[10],
            points,
        });
        offset = points_end;
    }
    Ok(polygons)
}

pub fn write(polygons: &[RawGshhgPolygon]) -> Vec<u8> {
    let mut out = Vec::new();
    for p in polygons {
        for field in [
            p.id,
            p.points.len() as i32,
            p.flag,
            p.west,
            p.east,
            p.south,
            p.north,
            p.area,
            p.area_full,
            p.container,
            p.ancestor,
        ] {
            out.extend_from_slice(&field.to_be_bytes());
        }
        for &(x, y) in &p.points {
            out.extend_from_slice(&x.to_be_bytes());
            out.extend_from_slice(&y.to_be_bytes());
        }
    }
    out
}

pub fn write_file(path: &Path, polygons: &[RawGshhgPolygon]) -> Result<(), GeoError> {
    let bytes = write(polygons);
    File::create(path)
        .and_then(|mut f| f.write_all(&bytes))
        .map_err(|e| GeoError::Io {
            path: path.to_path_buf(),
            source: e,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RawGshhgPolygon {
        RawGshhgPolygon {
            id: 7,
            flag: 1,
            west: 10_000_000,
            east: 11_000_000,
            south: -400_000,
            north: 200_000,
            area: 1234,
            area_full: 1234,
            container: -1,
            ancestor: -1,
            points: vec![
                (10_000_000, 0),
                (10_500_000, 200_000),
                (11_000_000, 0),
                (10_800_000, -400_000),
                (10_200_000, -400_000),
            ],
        }
    }

    #[test]
    fn round_trip_bytes() {
        let bytes = write(&[sample()]);
        let decoded = read(&bytes).unwrap();
        assert_eq!(decoded, vec![sample()]);
        assert_eq!(write(&decoded), bytes);
    }

    #[test]
    fn truncated_header_reports_offset() {
        let mut bytes = write(&[sample()]);
        bytes.extend_from_slice(&[0u8; 20]);
        let err = read(&bytes).unwrap_err();
        match err {
            GeoError::MalformedShoreline { offset, .. } => {
                assert_eq!(offset, (44 + 5 * 8) as u64);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn truncated_points_reports_offset() {
        let bytes = write(&[sample()]);
        let err = read(&bytes[..60]).unwrap_err();
        assert!(matches!(err, GeoError::MalformedShoreline { offset: 44, .. }));
    }
}
