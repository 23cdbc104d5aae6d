//! Synthetic routine-plus-exploration mobility over a POI-weighted tile grid.
//!
//! Every user owns a small set of routine tiles (home first) and a routine
//! transition matrix over it. Each move follows the routine with the user's
//! probability `beta`, and otherwise explores: the next tile is drawn with
//! weight `W_j^bias * exp(-d_ij / lambda)`. A day opens at home with the same
//! probability `beta`, otherwise at an exploration draw around home.

mod pings;

pub use pings::{scatter_pings, PingConfig};

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Duration, NaiveDate};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{encode_geohash, haversine_km, LatLon, SpatioTemporalPoint, TileId};
use crate::model::Trajectory;
use crate::rng::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub rows: usize,
    pub cols: usize,
    /// South-west corner of the grid.
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub precision: u8,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            rows: 24,
            cols: 16,
            origin_lat: 45.40,
            origin_lon: 9.10,
            precision: 6,
        }
    }
}

/// POI counts: a log-normal background of scattered hotspots plus an
/// exponential bump around the anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoiConfig {
    pub background_median: f64,
    pub background_sigma: f64,
    pub anchor_peak: f64,
    pub anchor_scale_km: f64,
    /// Grid cell of the anchor; defaults to the grid centre.
    pub anchor_row: Option<usize>,
    pub anchor_col: Option<usize>,
}

impl Default for PoiConfig {
    fn default() -> Self {
        PoiConfig {
            background_median: 3.0,
            background_sigma: 1.0,
            anchor_peak: 200.0,
            anchor_scale_km: 1.5,
            anchor_row: None,
            anchor_col: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftConfig {
    pub day: NaiveDate,
    pub severity: f64,
    /// Fraction of active days lost by re-drawn users after their switch.
    pub trip_reduction: f64,
}

impl Default for ShiftConfig {
    fn default() -> Self {
        ShiftConfig {
            day: NaiveDate::from_ymd_opt(2020, 3, 11).unwrap(),
            severity: 0.7,
            trip_reduction: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub grid: GridConfig,
    pub poi: PoiConfig,
    pub n_users: usize,
    pub start_date: NaiveDate,
    pub n_days: usize,
    /// Per-user routine strength is drawn from `Beta(beta_a, beta_b)` ...
    pub beta_a: f64,
    pub beta_b: f64,
    /// ... unless fixed here for every user.
    pub routine_strength: Option<f64>,
    pub lambda_km: f64,
    pub exploration_bias: f64,
    /// Like `exploration_bias` and `lambda_km`, for the non-home tiles of a
    /// routine; the length scale defaults to `lambda_km`.
    pub routine_bias: f64,
    pub routine_lambda_km: Option<f64>,
    pub routine_tiles_min: usize,
    pub routine_tiles_max: usize,
    /// Dirichlet concentration of each routine row.
    pub routine_concentration: f64,
    pub min_points: usize,
    pub max_points: usize,
    /// Per-user probability of recording a trajectory on a given day is drawn
    /// from `Beta(activity_a, activity_b)` ...
    pub activity_a: f64,
    pub activity_b: f64,
    /// ... unless fixed here for every user.
    pub p_active: Option<f64>,
    pub shift: Option<ShiftConfig>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 42,
            grid: GridConfig::default(),
            poi: PoiConfig::default(),
            n_users: 500,
            start_date: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
            n_days: 90,
            beta_a: 5.0,
            beta_b: 2.0,
            routine_strength: None,
            lambda_km: 2.0,
            exploration_bias: 1.0,
            routine_bias: 1.0,
            routine_lambda_km: None,
            routine_tiles_min: 3,
            routine_tiles_max: 5,
            routine_concentration: 0.3,
            min_points: 4,
            max_points: 8,
            activity_a: 1.5,
            activity_b: 2.5,
            p_active: None,
            shift: None,
        }
    }
}

fn unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} = {v} outside [0, 1]")))
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} = {v} must be positive")))
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.rows < 3 || g.cols < 3 {
            return Err(Error::invalid(format!("grid {}x{} smaller than 3x3", g.rows, g.cols)));
        }
        if !(1..=12).contains(&g.precision) {
            return Err(Error::invalid(format!("precision {} outside 1..=12", g.precision)));
        }
        if self.n_users < 10 {
            return Err(Error::invalid(format!("n_users = {} below 10", self.n_users)));
        }
        if self.n_days == 0 {
            return Err(Error::invalid("n_days must be positive"));
        }
        positive("beta_a", self.beta_a)?;
        positive("beta_b", self.beta_b)?;
        positive("lambda_km", self.lambda_km)?;
        positive("routine_concentration", self.routine_concentration)?;
        if !(self.exploration_bias >= 0.0) {
            return Err(Error::invalid("exploration_bias must be non-negative"));
        }
        if !(self.routine_bias >= 0.0) {
            return Err(Error::invalid("routine_bias must be non-negative"));
        }
        if let Some(l) = self.routine_lambda_km {
            positive("routine_lambda_km", l)?;
        }
        if let Some(b) = self.routine_strength {
            unit("routine_strength", b)?;
        }
        positive("activity_a", self.activity_a)?;
        positive("activity_b", self.activity_b)?;
        if let Some(p) = self.p_active {
            unit("p_active", p)?;
        }
        if self.routine_tiles_min < 2 || self.routine_tiles_min > self.routine_tiles_max {
            return Err(Error::invalid("need 2 <= routine_tiles_min <= routine_tiles_max"));
        }
        if self.routine_tiles_max > g.rows * g.cols {
            return Err(Error::invalid("more routine tiles than grid cells"));
        }
        if self.min_points < 2 || self.min_points > self.max_points {
            return Err(Error::invalid("need 2 <= min_points <= max_points"));
        }
        if self.poi.anchor_row.is_some_and(|r| r >= g.rows) || self.poi.anchor_col.is_some_and(|c| c >= g.cols) {
            return Err(Error::invalid("anchor cell outside the grid"));
        }
        positive("poi.anchor_scale_km", self.poi.anchor_scale_km)?;
        positive("poi.background_median", self.poi.background_median)?;
        if !(self.poi.background_sigma >= 0.0) {
            return Err(Error::invalid("poi.background_sigma must be non-negative"));
        }
        if self.poi.anchor_peak < 0.0 {
            return Err(Error::invalid("poi.anchor_peak must be non-negative"));
        }
        if let Some(s) = &self.shift {
            unit("shift.severity", s.severity)?;
            unit("shift.trip_reduction", s.trip_reduction)?;
        }
        Ok(())
    }

    pub fn end_date(&self) -> NaiveDate {
        self.start_date + Duration::days(self.n_days as i64 - 1)
    }
}

/// The tile grid, its POI field and the exploration kernel.
#[derive(Debug, Clone)]
pub struct World {
    pub tiles: Vec<TileId>,
    pub centers: Vec<LatLon>,
    pub poi: Vec<u64>,
    pub anchor: usize,
    /// `W_j^bias`, the attraction term of the exploration kernel.
    attraction: Vec<f64>,
    routine_attraction: Vec<f64>,
    lambda_km: f64,
    routine_lambda_km: f64,
}

impl World {
    pub fn new(cfg: &SynthConfig) -> Result<Self> {
        cfg.validate()?;
        let g = &cfg.grid;
        let corner = encode_geohash(g.origin_lat, g.origin_lon, g.precision)?;
        let mut tiles = Vec::with_capacity(g.rows * g.cols);
        for r in 0..g.rows {
            for c in 0..g.cols {
                let t = corner
                    .offset(r as i64, c as i64)
                    .ok_or_else(|| Error::invalid("grid runs past a pole"))?;
                tiles.push(t);
            }
        }
        if tiles.iter().collect::<BTreeSet<_>>().len() != tiles.len() {
            return Err(Error::invalid("grid wraps onto itself"));
        }
        let centers: Vec<LatLon> = tiles.iter().map(|t| t.center()).collect();
        let anchor = cfg.poi.anchor_row.unwrap_or(g.rows / 2) * g.cols + cfg.poi.anchor_col.unwrap_or(g.cols / 2);

        let mut rng = rng_for(cfg.seed, b"poi");
        let background = LogNormal::new(cfg.poi.background_median.ln(), cfg.poi.background_sigma).expect("validated background");
        let mut poi: Vec<u64> = centers
            .iter()
            .map(|&c| {
                let bump = cfg.poi.anchor_peak * (-haversine_km(c, centers[anchor]) / cfg.poi.anchor_scale_km).exp();
                (background.sample(&mut rng) + bump).round() as u64
            })
            .collect();
        // the anchor must be the unique maximum
        let best_other = poi.iter().enumerate().filter(|&(i, _)| i != anchor).map(|(_, &w)| w).max().unwrap_or(0);
        poi[anchor] = poi[anchor].max(best_other + 1);

        let attraction = poi.iter().map(|&w| (w as f64).max(0.5).powf(cfg.exploration_bias)).collect();
        let routine_attraction = poi.iter().map(|&w| (w as f64).max(0.5).powf(cfg.routine_bias)).collect();
        Ok(World {
            tiles,
            centers,
            poi,
            anchor,
            attraction,
            routine_attraction,
            lambda_km: cfg.lambda_km,
            routine_lambda_km: cfg.routine_lambda_km.unwrap_or(cfg.lambda_km),
        })
    }

    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    pub fn poi_counts(&self) -> BTreeMap<TileId, u64> {
        self.tiles.iter().copied().zip(self.poi.iter().copied()).collect()
    }

    pub fn distance_km(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            haversine_km(self.centers[i], self.centers[j])
        }
    }

    /// Unnormalized exploration weight of moving from `i` to `j` (zero for `j == i`).
    pub fn kernel_weight(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.attraction[j] * (-self.distance_km(i, j) / self.lambda_km).exp()
        }
    }

    fn routine_weight(&self, home: usize, j: usize) -> f64 {
        if home == j {
            0.0
        } else {
            self.routine_attraction[j] * (-self.distance_km(home, j) / self.routine_lambda_km).exp()
        }
    }

    /// Exact mean exploration distance from `i` under the kernel.
    pub fn mean_exploration_km(&self, i: usize) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for j in 0..self.len() {
            let w = self.kernel_weight(i, j);
            num += w * self.distance_km(i, j);
            den += w;
        }
        num / den
    }

    /// Draws an exploration destination from `i`.
    pub fn explore<R: Rng>(&self, i: usize, rng: &mut R) -> usize {
        let weights: Vec<f64> = (0..self.len()).map(|j| self.kernel_weight(i, j)).collect();
        sample_weighted(&weights, rng)
    }
}

fn sample_weighted<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if x < w {
            return i;
        }
        x -= w;
    }
    // rounding fallback: last positive weight
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// A user's routine: tiles (home first) and a row-stochastic matrix over them.
#[derive(Debug, Clone, PartialEq)]
pub struct Routine {
    pub tiles: Vec<usize>,
    pub matrix: Vec<Vec<f64>>,
}

impl Routine {
    pub fn home(&self) -> usize {
        self.tiles[0]
    }

    fn draw<R: Rng>(world: &World, cfg: &SynthConfig, rng: &mut R) -> Routine {
        let n = rng.random_range(cfg.routine_tiles_min..=cfg.routine_tiles_max);
        let home = rng.random_range(0..world.len());
        let mut tiles = vec![home];
        while tiles.len() < n {
            let weights: Vec<f64> = (0..world.len())
                .map(|j| if tiles.contains(&j) { 0.0 } else { world.routine_weight(home, j) })
                .collect();
            tiles.push(sample_weighted(&weights, rng));
        }
        let gamma = Gamma::new(cfg.routine_concentration, 1.0).expect("validated concentration");
        let matrix = (0..n)
            .map(|a| {
                let mut row: Vec<f64> = (0..n).map(|b| if a == b { 0.0 } else { gamma.sample(rng).max(1e-12) }).collect();
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|p| *p /= s);
                row
            })
            .collect();
        Routine { tiles, matrix }
    }

    fn next<R: Rng>(&self, current: usize, rng: &mut R) -> usize {
        match self.tiles.iter().position(|&t| t == current) {
            Some(a) => self.tiles[sample_weighted(&self.matrix[a], rng)],
            None => self.home(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserProfile {
    pub user_id: String,
    pub beta: f64,
    /// Daily probability of recording a trajectory.
    pub activity: f64,
    pub routine: Routine,
    /// Re-drawn routine and the first day it applies, when shifted.
    pub shifted: Option<(NaiveDate, Routine)>,
}

pub fn user_id(u: usize) -> String {
    format!("u{u:04}")
}

fn draw_profile(world: &World, cfg: &SynthConfig, u: usize) -> UserProfile {
    let id = user_id(u);
    let mut rng = rng_for(cfg.seed, format!("profile|{id}").as_bytes());
    let beta = match cfg.routine_strength {
        Some(b) => b,
        None => Beta::new(cfg.beta_a, cfg.beta_b).expect("validated beta").sample(&mut rng),
    };
    let activity = match cfg.p_active {
        Some(p) => p,
        None => Beta::new(cfg.activity_a, cfg.activity_b).expect("validated activity").sample(&mut rng),
    };
    let routine = Routine::draw(world, cfg, &mut rng);
    UserProfile {
        user_id: id,
        beta,
        activity,
        routine,
        shifted: None,
    }
}

/// Decides whether user `u` is re-drawn under `shift`, and from which day.
fn draw_shift(world: &World, cfg: &SynthConfig, shift: &ShiftConfig, profile: &UserProfile) -> Option<(NaiveDate, Routine)> {
    let mut rng = rng_for(cfg.seed, format!("shift|{}", profile.user_id).as_bytes());
    let redraw = rng.random::<f64>() < shift.severity;
    let span = (cfg.end_date() - shift.day).num_days().max(0);
    let offset = rng.random_range(0..=span);
    if !redraw {
        return None;
    }
    Some((shift.day + Duration::days(offset), Routine::draw(world, cfg, &mut rng)))
}

fn day_trajectory(world: &World, cfg: &SynthConfig, profile: &UserProfile, day: NaiveDate, p_active: f64) -> Option<Trajectory> {
    let mut rng: ChaCha8Rng = rng_for(cfg.seed, format!("day|{}|{day}", profile.user_id).as_bytes());
    let routine = match &profile.shifted {
        Some((from, r)) if day >= *from => r,
        _ => &profile.routine,
    };
    if rng.random::<f64>() >= p_active {
        return None;
    }
    let len = rng.random_range(cfg.min_points..=cfg.max_points);
    let midnight = day.and_hms_opt(0, 0, 0).expect("valid midnight").and_utc().timestamp();
    let mut time = midnight + 7 * 3600 + rng.random_range(0..7200);
    // routine days open at home, the others somewhere around it
    let mut current = if rng.random::<f64>() < profile.beta {
        routine.home()
    } else {
        world.explore(routine.home(), &mut rng)
    };
    let mut points = Vec::with_capacity(len);
    for step in 0..len {
        if step > 0 {
            current = if rng.random::<f64>() < profile.beta {
                routine.next(current, &mut rng)
            } else {
                world.explore(current, &mut rng)
            };
        }
        points.push(SpatioTemporalPoint {
            tile: world.tiles[current],
            time,
        });
        time += rng.random_range(1200..3600) + rng.random_range(600..1800);
    }
    Some(Trajectory::new(profile.user_id.clone(), day, points))
}

fn user_trajectories(world: &World, cfg: &SynthConfig, profile: &UserProfile, trip_reduction: f64) -> Vec<Trajectory> {
    (0..cfg.n_days)
        .filter_map(|d| {
            let day = cfg.start_date + Duration::days(d as i64);
            let p = match &profile.shifted {
                Some((from, _)) if day >= *from => profile.activity * (1.0 - trip_reduction),
                _ => profile.activity,
            };
            day_trajectory(world, cfg, profile, day, p)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SynthData {
    /// Sorted by user, then day.
    pub trajectories: Vec<Trajectory>,
    pub poi: BTreeMap<TileId, u64>,
    pub profiles: Vec<UserProfile>,
}

impl SynthData {
    /// Users whose routine was re-drawn by a shift.
    pub fn redrawn(&self) -> BTreeSet<&str> {
        self.profiles.iter().filter(|p| p.shifted.is_some()).map(|p| p.user_id.as_str()).collect()
    }
}

/// Generates every user's daily trajectories; deterministic per seed.
///
/// A configured shift is applied as by [`inject_shift`].
pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    let world = World::new(cfg)?;
    let profiles: Vec<UserProfile> = (0..cfg.n_users).into_par_iter().map(|u| draw_profile(&world, cfg, u)).collect();
    let data = build(&world, cfg, profiles, 0.0);
    match &cfg.shift {
        Some(s) => inject_shift(cfg, &data, s),
        None => Ok(data),
    }
}

fn build(world: &World, cfg: &SynthConfig, profiles: Vec<UserProfile>, trip_reduction: f64) -> SynthData {
    let trajectories = profiles
        .par_iter()
        .map(|p| user_trajectories(world, cfg, p, trip_reduction))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    SynthData {
        trajectories,
        poi: world.poi_counts(),
        profiles,
    }
}

/// Re-draws each user's routine with probability `severity`, effective from a
/// day drawn uniformly between the shift day and the end of the data, and
/// thins their later trips. Users not re-drawn keep their trajectories; the
/// POI field and exploration kernel are untouched.
pub fn inject_shift(cfg: &SynthConfig, data: &SynthData, shift: &ShiftConfig) -> Result<SynthData> {
    unit("shift.severity", shift.severity)?;
    unit("shift.trip_reduction", shift.trip_reduction)?;
    if shift.day < cfg.start_date || shift.day > cfg.end_date() {
        return Err(Error::invalid(format!("shift day {} outside the generated range", shift.day)));
    }
    let world = World::new(cfg)?;
    let profiles: Vec<UserProfile> = data
        .profiles
        .iter()
        .map(|p| UserProfile {
            shifted: draw_shift(&world, cfg, shift, p),
            ..p.clone()
        })
        .collect();
    let mut by_user: BTreeMap<&str, Vec<Trajectory>> = BTreeMap::new();
    for t in &data.trajectories {
        by_user.entry(t.user_id.as_str()).or_default().push(t.clone());
    }
    let regenerated: Vec<Vec<Trajectory>> = profiles
        .par_iter()
        .map(|p| match p.shifted {
            None => by_user.get(p.user_id.as_str()).cloned().unwrap_or_default(),
            Some((from, _)) => {
                let mut kept: Vec<Trajectory> = by_user
                    .get(p.user_id.as_str())
                    .map(|v| v.iter().filter(|t| t.day < from).cloned().collect())
                    .unwrap_or_default();
                kept.extend(user_trajectories(&world, cfg, p, shift.trip_reduction).into_iter().filter(|t| t.day >= from));
                kept
            }
        })
        .collect();
    Ok(SynthData {
        trajectories: regenerated.into_iter().flatten().collect(),
        poi: data.poi.clone(),
        profiles,
    })
}
