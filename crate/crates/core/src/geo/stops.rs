//! Stop detection from raw GPS pings.
//!
//! Pass 1 finds stay points: maximal temporal runs whose pings all lie within
//! `radius_m` of the run's first ping (the anchor), with no gap above
//! `max_gap_s`, and that last at least `min_duration_s`. Pass 2 runs DBSCAN (`min_samples = 1`) over the stay-point
//! centroids; each cluster is one stop location, and temporally consecutive
//! stay points of the same cluster are merged into a single stop unless more
//! than `max_gap_s` apart.

use std::collections::BTreeMap;

use chrono::{DateTime, FixedOffset, NaiveDate};
use serde::{Deserialize, Serialize};

use super::{encode_geohash, haversine_km, LatLon, SpatioTemporalPoint, TileId};
use crate::error::{Error, Result};
use crate::model::Trajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpsPing {
    pub user_id: String,
    pub lat: f64,
    pub lon: f64,
    pub timestamp: i64,
}

impl GpsPing {
    pub fn position(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }

    pub fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.lat) || !(-180.0..=180.0).contains(&self.lon) {
            return Err(Error::invalid(format!("ping ({}, {}) out of range", self.lat, self.lon)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopParams {
    pub radius_m: f64,
    pub min_duration_s: i64,
    pub dbscan_eps_m: f64,
    /// Pings or stay points further apart in time than this never share a stop.
    pub max_gap_s: i64,
    pub precision: u8,
}

impl Default for StopParams {
    fn default() -> Self {
        StopParams::with_radius(65.0)
    }
}

impl StopParams {
    /// DBSCAN radius follows the stay-point radius minus five metres.
    pub fn with_radius(radius_m: f64) -> Self {
        StopParams {
            radius_m,
            min_duration_s: 300,
            dbscan_eps_m: radius_m - 5.0,
            max_gap_s: 3600,
            precision: 6,
        }
    }
}

/// Output of the first pass.
#[derive(Debug, Clone, PartialEq)]
pub struct StayPoint {
    /// Index of the anchor ping in the input.
    pub seed: usize,
    /// Indices of member pings (a contiguous range starting at `seed`).
    pub members: std::ops::Range<usize>,
    pub centroid: LatLon,
    pub start: i64,
    pub end: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stop {
    pub centroid_lat: f64,
    pub centroid_lon: f64,
    pub start: i64,
    pub end: i64,
    pub tile: TileId,
}

fn centroid(pings: &[GpsPing]) -> LatLon {
    let n = pings.len() as f64;
    let (lat, lon) = pings.iter().fold((0.0, 0.0), |(a, b), p| (a + p.lat, b + p.lon));
    LatLon::new(lat / n, lon / n)
}

/// Pass 1: anchor-based stay-point extraction.
pub fn stay_points(pings: &[GpsPing], radius_m: f64, min_duration_s: i64, max_gap_s: i64) -> Vec<StayPoint> {
    let radius_km = radius_m / 1000.0;
    let mut out = Vec::new();
    let n = pings.len();
    let mut i = 0;
    while i < n {
        let anchor = pings[i].position();
        let mut j = i + 1;
        while j < n
            && pings[j].timestamp - pings[j - 1].timestamp <= max_gap_s
            && haversine_km(anchor, pings[j].position()) <= radius_km
        {
            j += 1;
        }
        let span = pings[j - 1].timestamp - pings[i].timestamp;
        if span >= min_duration_s {
            out.push(StayPoint {
                seed: i,
                members: i..j,
                centroid: centroid(&pings[i..j]),
                start: pings[i].timestamp,
                end: pings[j - 1].timestamp,
            });
            i = j;
        } else {
            i += 1;
        }
    }
    out
}

/// DBSCAN cluster labels for `points` with great-circle radius `eps_m`.
///
/// With `min_samples <= 1` every point is a core point, so clusters are the
/// connected components of the eps-neighbourhood graph. Labels are assigned in
/// order of first appearance.
pub fn dbscan_labels(points: &[LatLon], eps_m: f64, min_samples: usize) -> Vec<Option<usize>> {
    let eps_km = eps_m / 1000.0;
    let n = points.len();
    let neighbours = |i: usize| -> Vec<usize> { (0..n).filter(|&j| haversine_km(points[i], points[j]) <= eps_km).collect() };
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut next = 0;
    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let seeds = neighbours(i);
        if seeds.len() < min_samples.max(1) {
            continue; // noise, unless later reached from a core point
        }
        let label = next;
        next += 1;
        labels[i] = Some(label);
        let mut queue = seeds;
        while let Some(j) = queue.pop() {
            if labels[j].is_none() {
                labels[j] = Some(label);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let nb = neighbours(j);
            if nb.len() >= min_samples.max(1) {
                // unvisited points, plus earlier noise that becomes a border point
                queue.extend(nb.into_iter().filter(|&k| !visited[k] || labels[k].is_none()));
            }
        }
    }
    labels
}

/// Turns one user's time-sorted pings into stops.
pub fn detect_stops(pings: &[GpsPing], params: &StopParams) -> Result<Vec<Stop>> {
    if pings.is_empty() {
        return Ok(Vec::new());
    }
    for w in pings.windows(2) {
        if w[1].timestamp < w[0].timestamp {
            return Err(Error::invalid("pings must be sorted by timestamp"));
        }
    }
    for p in pings {
        p.validate()?;
    }
    let candidates = stay_points(pings, params.radius_m, params.min_duration_s, params.max_gap_s);
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let centroids: Vec<LatLon> = candidates.iter().map(|c| c.centroid).collect();
    let labels = dbscan_labels(&centroids, params.dbscan_eps_m, 1);

    // Cluster centroid weighted by member pings.
    let mut sums: BTreeMap<usize, (f64, f64, f64)> = BTreeMap::new();
    for (c, label) in candidates.iter().zip(&labels) {
        let w = c.members.len() as f64;
        let e = sums.entry(label.expect("min_samples = 1 labels every point")).or_default();
        e.0 += c.centroid.lat * w;
        e.1 += c.centroid.lon * w;
        e.2 += w;
    }

    let mut stops: Vec<Stop> = Vec::new();
    let mut last_label = None;
    for (c, label) in candidates.iter().zip(&labels) {
        let label = label.unwrap();
        if last_label == Some(label) {
            let s = stops.last_mut().unwrap();
            if c.start - s.end <= params.max_gap_s {
                s.end = c.end;
                continue;
            }
        }
        let (slat, slon, w) = sums[&label];
        let (lat, lon) = (slat / w, slon / w);
        stops.push(Stop {
            centroid_lat: lat,
            centroid_lon: lon,
            start: c.start,
            end: c.end,
            tile: encode_geohash(lat, lon, params.precision)?,
        });
        last_label = Some(label);
    }
    Ok(stops)
}

fn local_day(time: i64, offset: FixedOffset) -> Result<NaiveDate> {
    DateTime::from_timestamp(time, 0)
        .map(|t| t.with_timezone(&offset).date_naive())
        .ok_or_else(|| Error::invalid(format!("timestamp {time} out of range")))
}

/// Partitions time-ordered points into per-calendar-day trajectories.
///
/// The day of a point is its local date under `utc_offset_s`.
pub fn to_daily_trajectories(user_id: &str, points: &[SpatioTemporalPoint], utc_offset_s: i32) -> Result<Vec<Trajectory>> {
    let offset = FixedOffset::east_opt(utc_offset_s).ok_or_else(|| Error::invalid(format!("invalid UTC offset {utc_offset_s}")))?;
    let mut out: Vec<Trajectory> = Vec::new();
    for p in points {
        let day = local_day(p.time, offset)?;
        match out.last_mut() {
            Some(t) if t.day == day => t.points.push(*p),
            _ => out.push(Trajectory {
                user_id: user_id.to_string(),
                day,
                points: vec![*p],
            }),
        }
    }
    for t in &mut out {
        t.points.sort_by_key(|p| p.time);
    }
    Ok(out)
}

impl Stop {
    pub fn point(&self) -> SpatioTemporalPoint {
        SpatioTemporalPoint {
            tile: self.tile,
            time: self.start,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // ~1 m of latitude
    const M: f64 = 1.0 / 111_195.0;

    fn ping(lat: f64, lon: f64, t: i64) -> GpsPing {
        GpsPing {
            user_id: "u".into(),
            lat,
            lon,
            timestamp: t,
        }
    }

    #[test]
    fn dense_pings_make_one_stop() {
        let pings = vec![ping(45.0, 9.0, 0), ping(45.0 + 5.0 * M, 9.0, 180), ping(45.0 + 10.0 * M, 9.0, 360)];
        let stops = detect_stops(&pings, &StopParams::default()).unwrap();
        assert_eq!(stops.len(), 1);
        assert_eq!(stops[0].start, 0);
        assert_eq!(stops[0].end, 360);
        assert_eq!(stops[0].tile, encode_geohash(stops[0].centroid_lat, stops[0].centroid_lon, 6).unwrap());
    }

    #[test]
    fn sparse_pings_make_no_stop() {
        let pings = vec![ping(45.0, 9.0, 0), ping(45.0 + 1000.0 * M, 9.0, 180)];
        assert!(detect_stops(&pings, &StopParams::default()).unwrap().is_empty());
        assert!(detect_stops(&[], &StopParams::default()).unwrap().is_empty());
    }

    #[test]
    fn long_silence_splits_stops() {
        let mut pings: Vec<GpsPing> = (0..4).map(|i| ping(45.0, 9.0, i * 120)).collect();
        pings.extend((0..4).map(|i| ping(45.0, 9.0, 36_000 + i * 120)));
        let stops = detect_stops(&pings, &StopParams::default()).unwrap();
        assert_eq!(stops.len(), 2);
        assert_eq!(stops[1].start, 36_000);
    }

    #[test]
    fn nearby_candidates_merge() {
        // two stay points 30 m apart, interrupted by a single far ping
        let mut pings: Vec<GpsPing> = (0..4).map(|i| ping(45.0, 9.0, i * 120)).collect();
        pings.push(ping(45.0 + 500.0 * M, 9.0, 500));
        pings.extend((0..4).map(|i| ping(45.0 + 30.0 * M, 9.0, 600 + i * 120)));
        let cands = stay_points(&pings, 65.0, 300, 3600);
        assert_eq!(cands.len(), 2);
        let labels = dbscan_labels(&cands.iter().map(|c| c.centroid).collect::<Vec<_>>(), 60.0, 1);
        assert_eq!(labels[0], labels[1]);
        let stops = detect_stops(&pings, &StopParams::with_radius(65.0)).unwrap();
        assert_eq!(stops.len(), 1);
        assert_eq!((stops[0].start, stops[0].end), (0, 960));
    }

    #[test]
    fn dbscan_separates_far_points() {
        let pts = vec![LatLon::new(0.0, 0.0), LatLon::new(0.0, 0.001), LatLon::new(1.0, 1.0)];
        let labels = dbscan_labels(&pts, 200.0, 1);
        assert_eq!(labels[0], labels[1]);
        assert_ne!(labels[0], labels[2]);
        let strict = dbscan_labels(&pts, 200.0, 2);
        assert_eq!(strict[2], None);
    }

    #[test]
    fn unsorted_pings_rejected() {
        let pings = vec![ping(0.0, 0.0, 10), ping(0.0, 0.0, 5)];
        assert!(detect_stops(&pings, &StopParams::default()).is_err());
    }

    #[test]
    fn daily_partition() {
        let t: TileId = "s00000".parse().unwrap();
        let pts = |times: &[i64]| times.iter().map(|&time| SpatioTemporalPoint { tile: t, time }).collect::<Vec<_>>();
        let day = 86_400;
        assert_eq!(to_daily_trajectories("u", &pts(&[100, 200, 300]), 0).unwrap().len(), 1);
        let split = to_daily_trajectories("u", &pts(&[day - 60, day + 60]), 0).unwrap();
        assert_eq!(split.len(), 2);
        assert_eq!(split[1].day, NaiveDate::from_ymd_opt(1970, 1, 2).unwrap());
        // one hour east of UTC moves 23:30 UTC into the next local day
        let shifted = to_daily_trajectories("u", &pts(&[day - 1800, day + 60]), 3600).unwrap();
        assert_eq!(shifted.len(), 1);
        assert!(to_daily_trajectories("u", &[], 0).unwrap().is_empty());
    }

    fn walk() -> impl Strategy<Value = Vec<GpsPing>> {
        prop::collection::vec((-200.0f64..200.0, -200.0f64..200.0, 10i64..400), 1..60).prop_map(|steps| {
            let (mut lat, mut lon, mut t) = (45.0, 9.0, 0);
            steps
                .into_iter()
                .map(|(dy, dx, dt)| {
                    lat += dy * M;
                    lon += dx * M;
                    t += dt;
                    ping(lat, lon, t)
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn stay_point_members_near_seed(pings in walk()) {
            for sp in stay_points(&pings, 65.0, 300, 3600) {
                prop_assert!(sp.end - sp.start >= 300);
                for i in sp.members.clone() {
                    prop_assert!(haversine_km(pings[sp.seed].position(), pings[i].position()) <= 0.065);
                }
            }
        }

        #[test]
        fn stops_disjoint_and_long_enough(pings in walk()) {
            let stops = detect_stops(&pings, &StopParams::default()).unwrap();
            for s in &stops {
                prop_assert!(s.end - s.start >= 300);
            }
            for w in stops.windows(2) {
                prop_assert!(w[0].end < w[1].start);
            }
        }
    }
}
