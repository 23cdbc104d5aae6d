//! Spatial primitives: geohash tiles, great-circle distance and stop detection.

mod geohash;
mod stops;

pub use geohash::{cell_size_deg, encode_geohash, TileBounds, TileId, BASE32, MAX_PRECISION};
pub use stops::{dbscan_labels, detect_stops, stay_points, to_daily_trajectories, GpsPing, StayPoint, Stop, StopParams};

use serde::{Deserialize, Serialize};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub const fn new(lat: f64, lon: f64) -> Self {
        LatLon { lat, lon }
    }
}

/// A visit to a tile at a point in time (seconds since the epoch).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpatioTemporalPoint {
    pub tile: TileId,
    pub time: i64,
}

/// Great-circle distance on a sphere of radius 6371 km.
pub fn haversine_km(a: LatLon, b: LatLon) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Distance between two tile centroids.
pub fn tile_distance_km(a: TileId, b: TileId) -> f64 {
    if a == b {
        return 0.0;
    }
    haversine_km(a.center(), b.center())
}
