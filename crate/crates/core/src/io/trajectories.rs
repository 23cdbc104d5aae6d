use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::create_writer;
use crate::error::{Error, Result};
use crate::experiment::TrajectoryOverlap;
use crate::geo::{SpatioTemporalPoint, Stop, TileId};
use crate::model::Trajectory;
use crate::overlap::{OverlapBin, OverlapScore};

#[derive(Debug, Serialize, Deserialize)]
struct PointRow {
    user_id: String,
    day: NaiveDate,
    seq: usize,
    tile: TileId,
    time: i64,
}

/// Writes `user_id,day,seq,tile,time`, one row per point.
pub fn write_trajectories_csv(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    let mut w = create_writer(path)?;
    w.write_record(["user_id", "day", "seq", "tile", "time"])?;
    for t in trajectories {
        for (seq, p) in t.points.iter().enumerate() {
            w.serialize(PointRow {
                user_id: t.user_id.clone(),
                day: t.day,
                seq,
                tile: p.tile,
                time: p.time,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a trajectory store; trajectories come back sorted by user then day.
pub fn read_trajectories_csv(path: &Path) -> Result<Vec<Trajectory>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut grouped: BTreeMap<(String, NaiveDate), Vec<(usize, SpatioTemporalPoint)>> = BTreeMap::new();
    for (line, row) in r.deserialize::<PointRow>().enumerate() {
        let row = row.map_err(|e| Error::data(format!("{}: row {}: {e}", path.display(), line + 2)))?;
        grouped
            .entry((row.user_id, row.day))
            .or_default()
            .push((row.seq, SpatioTemporalPoint { tile: row.tile, time: row.time }));
    }
    let mut out = Vec::with_capacity(grouped.len());
    for ((user, day), mut pts) in grouped {
        pts.sort_by_key(|&(seq, _)| seq);
        if pts.iter().enumerate().any(|(i, &(seq, _))| seq != i) {
            return Err(Error::data(format!("{}: {user} {day}: sequence numbers are not 0..n", path.display())));
        }
        if pts.windows(2).any(|w| w[1].1.time < w[0].1.time) {
            return Err(Error::data(format!("{}: {user} {day}: times go backwards", path.display())));
        }
        out.push(Trajectory::new(user, day, pts.into_iter().map(|(_, p)| p).collect()));
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct StopRow {
    user_id: String,
    tile: TileId,
    time_start: i64,
    time_end: i64,
}

pub fn write_stops_csv<'a>(path: &Path, stops: impl IntoIterator<Item = (&'a str, &'a Stop)>) -> Result<()> {
    let mut w = create_writer(path)?;
    w.write_record(["user_id", "tile", "time_start", "time_end"])?;
    for (user, s) in stops {
        w.serialize(StopRow {
            user_id: user.to_string(),
            tile: s.tile,
            time_start: s.start,
            time_end: s.end,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// `(user_id, tile, time_start, time_end)` rows in file order.
pub fn read_stops_csv(path: &Path) -> Result<Vec<(String, TileId, i64, i64)>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize::<StopRow>()
        .map(|row| {
            let row = row?;
            Ok((row.user_id, row.tile, row.time_start, row.time_end))
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct OverlapRow {
    user_id: String,
    day: NaiveDate,
    lcst_raw: usize,
    lcst_norm: f64,
    bin: String,
}

pub fn write_overlap_csv(path: &Path, overlaps: &[TrajectoryOverlap]) -> Result<()> {
    let mut w = create_writer(path)?;
    w.write_record(["user_id", "day", "lcst_raw", "lcst_norm", "bin"])?;
    for o in overlaps {
        w.serialize(OverlapRow {
            user_id: o.user_id.clone(),
            day: o.day,
            lcst_raw: o.score.raw,
            lcst_norm: o.score.normalized,
            bin: o.score.bin.label().to_string(),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_overlap_csv(path: &Path) -> Result<Vec<TrajectoryOverlap>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize::<OverlapRow>()
        .map(|row| {
            let row = row?;
            let bin: OverlapBin = row.bin.parse()?;
            Ok(TrajectoryOverlap {
                user_id: row.user_id,
                day: row.day,
                score: OverlapScore {
                    raw: row.lcst_raw,
                    normalized: row.lcst_norm,
                    bin,
                },
            })
        })
        .collect()
}
