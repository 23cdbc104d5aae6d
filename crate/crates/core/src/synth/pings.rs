use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geo::GpsPing;
use crate::model::Trajectory;
use crate::rng::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PingConfig {
    /// Time spent at each stop.
    pub dwell_s: i64,
    pub interval_s: i64,
    /// Maximum offset of a ping from the tile centre, per axis.
    pub jitter_m: f64,
}

impl Default for PingConfig {
    fn default() -> Self {
        PingConfig {
            dwell_s: 1200,
            interval_s: 60,
            jitter_m: 20.0,
        }
    }
}

const M_PER_DEG_LAT: f64 = 111_195.0;

/// Expands trajectory points into GPS pings scattered around each tile centre,
/// one burst per stop starting at the point's time.
pub fn scatter_pings(trajectories: &[Trajectory], cfg: &PingConfig, seed: u64) -> Vec<GpsPing> {
    let mut out = Vec::new();
    for t in trajectories {
        let mut rng = rng_for(seed, format!("pings|{}|{}", t.user_id, t.day).as_bytes());
        for p in &t.points {
            let c = p.tile.center();
            let m_per_deg_lon = M_PER_DEG_LAT * c.lat.to_radians().cos();
            let mut time = p.time;
            while time <= p.time + cfg.dwell_s {
                let dy = rng.random_range(-cfg.jitter_m..=cfg.jitter_m);
                let dx = rng.random_range(-cfg.jitter_m..=cfg.jitter_m);
                out.push(GpsPing {
                    user_id: t.user_id.clone(),
                    lat: c.lat + dy / M_PER_DEG_LAT,
                    lon: c.lon + dx / m_per_deg_lon,
                    timestamp: time,
                });
                time += cfg.interval_s;
            }
        }
    }
    out
}
