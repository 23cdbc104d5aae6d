//! POI proximity split, travel-distance histograms and power-law fits.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{cell_size_deg, haversine_km, tile_distance_km, LatLon, TileId};
use crate::model::OdCounts;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiSplit {
    pub anchor: TileId,
    pub d_km: f64,
    pub near: BTreeSet<TileId>,
    pub far: BTreeSet<TileId>,
}

impl PoiSplit {
    pub fn is_near(&self, tile: TileId) -> bool {
        self.near.contains(&tile)
    }
}

/// Splits `tiles` by centroid distance to the POI-richest tile.
///
/// The anchor is the tile with the largest count, ties going to the smallest
/// tile id, and it is always part of the near set.
pub fn poi_split(poi_counts: &BTreeMap<TileId, u64>, tiles: impl IntoIterator<Item = TileId>, d_km: f64) -> Result<PoiSplit> {
    let mut anchor: Option<(TileId, u64)> = None;
    for (&t, &w) in poi_counts {
        if anchor.map_or(true, |(_, best)| w > best) {
            anchor = Some((t, w));
        }
    }
    let anchor = match anchor {
        Some((t, w)) if w > 0 => t,
        Some(_) => return Err(Error::invalid("all POI counts are zero")),
        None => return Err(Error::invalid("no POI counts")),
    };
    let centre = anchor.center();
    let mut near = BTreeSet::from([anchor]);
    let mut far = BTreeSet::new();
    for t in tiles {
        if t == anchor || haversine_km(t.center(), centre) <= d_km {
            near.insert(t);
        } else {
            far.insert(t);
        }
    }
    Ok(PoiSplit { anchor, d_km, near, far })
}

/// Length of a cell's diagonal, the smallest distance treated as a real move.
pub fn tile_diagonal_km(precision: u8, lat: f64) -> f64 {
    let (w, h) = cell_size_deg(precision);
    haversine_km(LatLon::new(lat - h / 2.0, -w / 2.0), LatLon::new(lat + h / 2.0, w / 2.0))
}

/// Empirical distance density over log-spaced bins.
///
/// Zero distances are counted separately as a point mass; densities are
/// normalized so `zero_count / total + sum(density * width) == 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub density: Vec<f64>,
    pub zero_count: u64,
    pub total: u64,
}

impl DistanceHistogram {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|e| (e[0] * e[1]).sqrt()).collect()
    }

    /// Total probability mass, including the zero-distance point mass.
    pub fn mass(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let binned: f64 = self.density.iter().zip(self.edges.windows(2)).map(|(d, e)| d * (e[1] - e[0])).sum();
        binned + self.zero_count as f64 / self.total as f64
    }
}

fn log_edges(lo: f64, hi: f64, n_bins: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    let mut edges: Vec<f64> = (0..=n_bins).map(|k| (a + (b - a) * k as f64 / n_bins as f64).exp()).collect();
    edges[0] = lo;
    edges[n_bins] = hi;
    edges
}

fn bin_index(edges: &[f64], r: f64) -> Option<usize> {
    let n = edges.len() - 1;
    if r < edges[0] || r > edges[n] {
        return None;
    }
    // right edge belongs to the last bin
    Some(edges.partition_point(|&e| e <= r).saturating_sub(1).min(n - 1))
}

/// Log-binned histogram over the span of the positive samples.
pub fn log_histogram(samples: &[f64], n_bins: usize) -> DistanceHistogram {
    let n_bins = n_bins.max(1);
    let positive: Vec<f64> = samples.iter().copied().filter(|&r| r > 0.0).collect();
    let zero_count = (samples.len() - positive.len()) as u64;
    let total = samples.len() as u64;
    if positive.is_empty() {
        return DistanceHistogram {
            edges: Vec::new(),
            counts: Vec::new(),
            density: Vec::new(),
            zero_count,
            total,
        };
    }
    let lo = positive.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = positive.iter().copied().fold(0.0, f64::max);
    let edges = if hi > lo {
        log_edges(lo, hi, n_bins)
    } else {
        vec![lo * 0.95, hi * 1.05]
    };
    let mut counts = vec![0u64; edges.len() - 1];
    for &r in &positive {
        if let Some(k) = bin_index(&edges, r) {
            counts[k] += 1;
        }
    }
    let density = counts
        .iter()
        .zip(edges.windows(2))
        .map(|(&c, e)| c as f64 / (total as f64 * (e[1] - e[0])))
        .collect();
    DistanceHistogram {
        edges,
        counts,
        density,
        zero_count,
        total,
    }
}

/// Centroid distance of every counted transition whose origin passes `keep`.
pub fn transition_distances(counts: &OdCounts, keep: impl Fn(TileId) -> bool) -> Vec<f64> {
    let mut out = Vec::new();
    for (o, d, n) in counts.entries() {
        if keep(o) {
            let r = tile_distance_km(o, d);
            out.extend(std::iter::repeat(r).take(n as usize));
        }
    }
    out
}

/// Distance histograms for transitions leaving near and far origins.
pub fn distance_distribution(counts: &OdCounts, split: &PoiSplit, n_bins: usize) -> (DistanceHistogram, DistanceHistogram) {
    let near = transition_distances(counts, |o| split.is_near(o));
    let far = transition_distances(counts, |o| !split.is_near(o));
    (log_histogram(&near, n_bins), log_histogram(&far, n_bins))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    /// Weighted least squares of log density on log distance.
    #[default]
    Binned,
    /// Maximum likelihood for a power law truncated to the range.
    Mle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowerLawConfig {
    pub r_min_km: f64,
    pub r_max_km: f64,
    pub n_bins: usize,
    pub method: FitMethod,
}

impl Default for PowerLawConfig {
    fn default() -> Self {
        PowerLawConfig {
            r_min_km: tile_diagonal_km(6, 0.0),
            r_max_km: 10.0,
            n_bins: 12,
            method: FitMethod::Binned,
        }
    }
}

/// `P(r) ∝ r^-gamma` with the standard error of `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub gamma: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub n_bins: usize,
}

pub const MIN_FIT_SAMPLES: usize = 30;

/// Weighted least-squares line through `(x, y, w)` on log-log axes.
///
/// Returns `(slope, intercept, stderr)`. The standard error assumes
/// `Var(ln y_k) = 1 / w_k`, inflated by the square root of the reduced
/// chi-square when the scatter exceeds that.
pub fn fit_log_log(points: &[(f64, f64, f64)]) -> Result<(f64, f64, f64)> {
    let pts: Vec<(f64, f64, f64)> = points
        .iter()
        .filter(|&&(x, y, w)| x > 0.0 && y > 0.0 && w > 0.0)
        .map(|&(x, y, w)| (x.ln(), y.ln(), w))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData { needed: 3, got: pts.len() });
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::UndefinedStatistic("log-log fit: all x equal".into()));
    }
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let chi2: f64 = pts.iter().map(|p| p.2 * (p.1 - intercept - slope * p.0).powi(2)).sum();
    let reduced = chi2 / (pts.len() - 2) as f64;
    let stderr = (reduced.max(1.0) / sxx).sqrt();
    Ok((slope, intercept, stderr))
}

fn in_range(samples: &[f64], cfg: &PowerLawConfig) -> Result<Vec<f64>> {
    if !(cfg.r_min_km > 0.0 && cfg.r_max_km > cfg.r_min_km) {
        return Err(Error::invalid(format!("bad fit range [{}, {}]", cfg.r_min_km, cfg.r_max_km)));
    }
    let kept: Vec<f64> = samples.iter().copied().filter(|&r| r >= cfg.r_min_km && r <= cfg.r_max_km).collect();
    if kept.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientData {
            needed: MIN_FIT_SAMPLES,
            got: kept.len(),
        });
    }
    Ok(kept)
}

/// Fits a power-law exponent to distance samples within the configured range.
pub fn power_law_fit(samples: &[f64], cfg: &PowerLawConfig) -> Result<PowerLawFit> {
    let kept = in_range(samples, cfg)?;
    match cfg.method {
        FitMethod::Binned => binned_fit(&kept, cfg),
        FitMethod::Mle => mle_fit(&kept, cfg),
    }
}

fn binned_fit(kept: &[f64], cfg: &PowerLawConfig) -> Result<PowerLawFit> {
    let edges = log_edges(cfg.r_min_km, cfg.r_max_km, cfg.n_bins.max(3));
    let mut counts = vec![0u64; edges.len() - 1];
    for &r in kept {
        if let Some(k) = bin_index(&edges, r) {
            counts[k] += 1;
        }
    }
    let n = kept.len() as f64;
    let points: Vec<(f64, f64, f64)> = counts
        .iter()
        .zip(edges.windows(2))
        .filter(|(&c, _)| c > 0)
        .map(|(&c, e)| ((e[0] * e[1]).sqrt(), c as f64 / (n * (e[1] - e[0])), c as f64))
        .collect();
    let (slope, _, stderr) = fit_log_log(&points)?;
    Ok(PowerLawFit {
        gamma: -slope,
        stderr,
        n_samples: kept.len(),
        n_bins: points.len(),
    })
}

/// Per-sample log-likelihood of a power law truncated to `[a, b]`.
fn truncated_loglik(gamma: f64, a: f64, b: f64, mean_ln: f64) -> f64 {
    let s = 1.0 - gamma;
    let norm = if s.abs() < 1e-9 {
        (b / a).ln()
    } else {
        (b.powf(s) - a.powf(s)) / s
    };
    -norm.ln() - gamma * mean_ln
}

fn mle_fit(kept: &[f64], cfg: &PowerLawConfig) -> Result<PowerLawFit> {
    let (a, b) = (cfg.r_min_km, cfg.r_max_km);
    let mean_ln = kept.iter().map(|r| r.ln()).sum::<f64>() / kept.len() as f64;
    let f = |g: f64| truncated_loglik(g, a, b, mean_ln);
    // golden-section search; the log-likelihood is concave in gamma
    let (mut lo, mut hi) = (-5.0f64, 8.0f64);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1);
        }
    }
    let gamma = (lo + hi) / 2.0;
    let h = 1e-3;
    let curvature = (f(gamma + h) - 2.0 * f(gamma) + f(gamma - h)) / (h * h);
    if curvature >= 0.0 {
        return Err(Error::UndefinedStatistic("power-law likelihood is flat".into()));
    }
    Ok(PowerLawFit {
        gamma,
        stderr: 1.0 / (-curvature * kept.len() as f64).sqrt(),
        n_samples: kept.len(),
        n_bins: 0,
    })
}

/// Inverse-CDF draw from `r^-gamma` truncated to `[a, b]`.
pub fn truncated_pareto_quantile(u: f64, gamma: f64, a: f64, b: f64) -> f64 {
    let s = 1.0 - gamma;
    if s.abs() < 1e-12 {
        return a * (b / a).powf(u);
    }
    (a.powf(s) + u * (b.powf(s) - a.powf(s))).powf(1.0 / s)
}
