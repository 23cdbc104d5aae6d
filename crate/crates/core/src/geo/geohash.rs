//! Geohash tessellation.
//!
//! A [`TileId`] packs the geohash bits into a `u64` left-aligned to 60 bits,
//! together with the precision. Ordering on `(bits, precision)` is identical to
//! lexicographic ordering of the base-32 strings, because the alphabet is
//! sorted in ASCII order and shorter prefixes compare first.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::LatLon;
use crate::error::{Error, Result};

pub const BASE32: &[u8; 32] = b"0123456789bcdefghjkmnpqrstuvwxyz";
pub const MAX_PRECISION: u8 = 12;
const ALIGN_BITS: u32 = 5 * MAX_PRECISION as u32;

fn decode_symbol(c: u8) -> Option<u64> {
    BASE32.iter().position(|&b| b == c).map(|i| i as u64)
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TileId {
    bits: u64,
    precision: u8,
}

/// Closed bounding box of a geohash cell, in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TileBounds {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

impl TileBounds {
    pub fn contains(&self, p: LatLon) -> bool {
        p.lat >= self.min_lat && p.lat <= self.max_lat && p.lon >= self.min_lon && p.lon <= self.max_lon
    }

    pub fn center(&self) -> LatLon {
        LatLon {
            lat: (self.min_lat + self.max_lat) / 2.0,
            lon: (self.min_lon + self.max_lon) / 2.0,
        }
    }
}

/// Encodes a coordinate as a geohash tile of the given precision.
pub fn encode_geohash(lat: f64, lon: f64, precision: u8) -> Result<TileId> {
    if !(1..=MAX_PRECISION).contains(&precision) {
        return Err(Error::invalid(format!("geohash precision {precision} outside 1..=12")));
    }
    if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
        return Err(Error::invalid(format!("coordinate ({lat}, {lon}) out of range")));
    }
    let (mut lat_lo, mut lat_hi) = (-90.0_f64, 90.0_f64);
    let (mut lon_lo, mut lon_hi) = (-180.0_f64, 180.0_f64);
    let n_bits = 5 * precision as u32;
    let mut bits = 0u64;
    for i in 0..n_bits {
        bits <<= 1;
        if i % 2 == 0 {
            let mid = (lon_lo + lon_hi) / 2.0;
            if lon >= mid {
                bits |= 1;
                lon_lo = mid;
            } else {
                lon_hi = mid;
            }
        } else {
            let mid = (lat_lo + lat_hi) / 2.0;
            if lat >= mid {
                bits |= 1;
                lat_lo = mid;
            } else {
                lat_hi = mid;
            }
        }
    }
    Ok(TileId {
        bits: bits << (ALIGN_BITS - n_bits),
        precision,
    })
}

/// Width and height of a cell at `precision`, in degrees of longitude and latitude.
pub fn cell_size_deg(precision: u8) -> (f64, f64) {
    let n = 5 * precision as i32;
    let lon_bits = (n + 1) / 2;
    let lat_bits = n / 2;
    (360.0 / 2f64.powi(lon_bits), 180.0 / 2f64.powi(lat_bits))
}

impl TileId {
    pub fn precision(&self) -> u8 {
        self.precision
    }

    fn raw_bits(&self) -> u64 {
        self.bits >> (ALIGN_BITS - 5 * self.precision as u32)
    }

    pub fn bounds(&self) -> TileBounds {
        let n_bits = 5 * self.precision as u32;
        let raw = self.raw_bits();
        let (mut lat_lo, mut lat_hi) = (-90.0_f64, 90.0_f64);
        let (mut lon_lo, mut lon_hi) = (-180.0_f64, 180.0_f64);
        for i in 0..n_bits {
            let bit = (raw >> (n_bits - 1 - i)) & 1 == 1;
            if i % 2 == 0 {
                let mid = (lon_lo + lon_hi) / 2.0;
                if bit {
                    lon_lo = mid
                } else {
                    lon_hi = mid
                }
            } else {
                let mid = (lat_lo + lat_hi) / 2.0;
                if bit {
                    lat_lo = mid
                } else {
                    lat_hi = mid
                }
            }
        }
        TileBounds {
            min_lat: lat_lo,
            max_lat: lat_hi,
            min_lon: lon_lo,
            max_lon: lon_hi,
        }
    }

    pub fn center(&self) -> LatLon {
        self.bounds().center()
    }

    /// The cell `dlat` rows north and `dlon` columns east of this one.
    ///
    /// Longitude wraps around the antimeridian; stepping past a pole yields `None`.
    pub fn offset(&self, dlat: i64, dlon: i64) -> Option<TileId> {
        let (w, h) = cell_size_deg(self.precision);
        let c = self.center();
        let lat = c.lat + dlat as f64 * h;
        if !(-90.0..=90.0).contains(&lat) {
            return None;
        }
        let mut lon = c.lon + dlon as f64 * w;
        while lon >= 180.0 {
            lon -= 360.0;
        }
        while lon < -180.0 {
            lon += 360.0;
        }
        encode_geohash(lat, lon, self.precision).ok()
    }

    /// Edge-sharing neighbours (N, S, E, W).
    pub fn rook_neighbors(&self) -> Vec<TileId> {
        [(1, 0), (-1, 0), (0, 1), (0, -1)]
            .iter()
            .filter_map(|&(a, b)| self.offset(a, b))
            .collect()
    }

    /// Edge- and corner-sharing neighbours.
    pub fn queen_neighbors(&self) -> Vec<TileId> {
        let mut out = Vec::with_capacity(8);
        for dlat in -1..=1 {
            for dlon in -1..=1 {
                if dlat == 0 && dlon == 0 {
                    continue;
                }
                if let Some(t) = self.offset(dlat, dlon) {
                    if t != *self && !out.contains(&t) {
                        out.push(t);
                    }
                }
            }
        }
        out
    }
}

impl fmt::Display for TileId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut buf = [0u8; MAX_PRECISION as usize];
        for (i, slot) in buf.iter_mut().take(self.precision as usize).enumerate() {
            let shift = ALIGN_BITS - 5 * (i as u32 + 1);
            *slot = BASE32[((self.bits >> shift) & 0x1f) as usize];
        }
        // BASE32 is ASCII
        f.write_str(std::str::from_utf8(&buf[..self.precision as usize]).unwrap())
    }
}

impl fmt::Debug for TileId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TileId({self})")
    }
}

impl FromStr for TileId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bytes = s.as_bytes();
        if bytes.is_empty() || bytes.len() > MAX_PRECISION as usize {
            return Err(Error::invalid(format!("geohash '{s}' must have 1..=12 symbols")));
        }
        let mut bits = 0u64;
        for &c in bytes {
            let v = decode_symbol(c).ok_or_else(|| Error::invalid(format!("invalid geohash symbol in '{s}'")))?;
            bits = (bits << 5) | v;
        }
        let precision = bytes.len() as u8;
        Ok(TileId {
            bits: bits << (ALIGN_BITS - 5 * precision as u32),
            precision,
        })
    }
}

impl Serialize for TileId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TileId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
