use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};

use super::create_writer;
use crate::error::{Error, Result};
use crate::geo::{GpsPing, SpatioTemporalPoint, TileId};

/// Raw input grouped by user, each user's rows sorted by time.
#[derive(Debug, Clone, PartialEq)]
pub enum RawInput {
    /// `user_id,lat,lon,timestamp`: stop detection still has to run.
    Pings(BTreeMap<String, Vec<GpsPing>>),
    /// A `tile` column is present: rows are already stop points.
    Points(BTreeMap<String, Vec<SpatioTemporalPoint>>),
}

impl RawInput {
    pub fn n_users(&self) -> usize {
        match self {
            RawInput::Pings(m) => m.len(),
            RawInput::Points(m) => m.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RawReadStats {
    pub rows: usize,
    pub malformed: usize,
}

impl RawReadStats {
    pub fn malformed_fraction(&self) -> f64 {
        if self.rows == 0 {
            0.0
        } else {
            self.malformed as f64 / self.rows as f64
        }
    }
}

/// Epoch seconds (integer or decimal) or an ISO-8601 date-time; values
/// without an offset are read as UTC.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    if let Ok(v) = s.parse::<f64>() {
        return v.is_finite().then(|| v.floor() as i64);
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.timestamp());
    }
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|t| t.and_utc().timestamp())
}

enum Layout {
    LatLon { user: usize, lat: usize, lon: usize, ts: usize },
    Tile { user: usize, tile: usize, ts: usize },
}

fn layout(headers: &csv::StringRecord) -> Result<Layout> {
    let col = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
    let need = |name: &str| col(name).ok_or_else(|| Error::data(format!("input header lacks a '{name}' column")));
    let user = need("user_id")?;
    let ts = col("timestamp")
        .or_else(|| col("time"))
        .ok_or_else(|| Error::data("input header lacks a 'timestamp' column"))?;
    Ok(match col("tile") {
        Some(tile) => Layout::Tile { user, tile, ts },
        None => Layout::LatLon {
            user,
            lat: need("lat")?,
            lon: need("lon")?,
            ts,
        },
    })
}

/// Reads raw input, skipping and counting malformed rows.
///
/// An empty file yields an empty ping set. A header without the needed
/// columns is a data error.
pub fn read_raw_input(path: &Path) -> Result<(RawInput, RawReadStats)> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.is_empty() {
        return Ok((RawInput::Pings(BTreeMap::new()), RawReadStats::default()));
    }
    let layout = layout(&headers)?;
    let mut stats = RawReadStats::default();
    let mut pings: BTreeMap<String, Vec<GpsPing>> = BTreeMap::new();
    let mut points: BTreeMap<String, Vec<SpatioTemporalPoint>> = BTreeMap::new();
    let mut record = csv::StringRecord::new();
    loop {
        let line = r.position().line();
        match r.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                stats.rows += 1;
                stats.malformed += 1;
                log::debug!("{}: line {line}: {e}", path.display());
                continue;
            }
        }
        stats.rows += 1;
        let ok = match layout {
            Layout::LatLon { user, lat, lon, ts } => parse_ping(&record, user, lat, lon, ts).map(|p| pings.entry(p.user_id.clone()).or_default().push(p)),
            Layout::Tile { user, tile, ts } => parse_point(&record, user, tile, ts).map(|(u, p)| points.entry(u).or_default().push(p)),
        };
        if ok.is_none() {
            stats.malformed += 1;
            log::debug!("{}: line {line}: malformed row {:?}", path.display(), record);
        }
    }
    let input = match layout {
        Layout::LatLon { .. } => {
            pings.values_mut().for_each(|v| v.sort_by_key(|p| p.timestamp));
            RawInput::Pings(pings)
        }
        Layout::Tile { .. } => {
            points.values_mut().for_each(|v| v.sort_by_key(|p| p.time));
            RawInput::Points(points)
        }
    };
    Ok((input, stats))
}

fn field<'a>(record: &'a csv::StringRecord, i: usize) -> Option<&'a str> {
    record.get(i).map(str::trim).filter(|s| !s.is_empty())
}

fn parse_ping(record: &csv::StringRecord, user: usize, lat: usize, lon: usize, ts: usize) -> Option<GpsPing> {
    let p = GpsPing {
        user_id: field(record, user)?.to_string(),
        lat: field(record, lat)?.parse().ok()?,
        lon: field(record, lon)?.parse().ok()?,
        timestamp: parse_timestamp(field(record, ts)?)?,
    };
    p.validate().ok().map(|_| p)
}

fn parse_point(record: &csv::StringRecord, user: usize, tile: usize, ts: usize) -> Option<(String, SpatioTemporalPoint)> {
    let tile: TileId = field(record, tile)?.parse().ok()?;
    let time = parse_timestamp(field(record, ts)?)?;
    Some((field(record, user)?.to_string(), SpatioTemporalPoint { tile, time }))
}

pub fn write_pings_csv(path: &Path, pings: &[GpsPing]) -> Result<()> {
    let mut w = create_writer(path)?;
    w.write_record(["user_id", "lat", "lon", "timestamp"])?;
    for p in pings {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timestamps_in_both_notations() {
        assert_eq!(parse_timestamp("1577836800"), Some(1_577_836_800));
        assert_eq!(parse_timestamp("1577836800.9"), Some(1_577_836_800));
        assert_eq!(parse_timestamp("2020-01-01T00:00:00Z"), Some(1_577_836_800));
        assert_eq!(parse_timestamp("2020-01-01T01:00:00+01:00"), Some(1_577_836_800));
        assert_eq!(parse_timestamp("2020-01-01 00:00:00"), Some(1_577_836_800));
        assert_eq!(parse_timestamp("yesterday"), None);
    }

    #[test]
    fn malformed_rows_are_counted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("in.csv");
        std::fs::write(
            &path,
            "user_id,lat,lon,timestamp\nu,45.0,9.0,100\nu,abc,9.0,160\nu,45.0,9.0\nu,95.0,9.0,200\nv,45.0,9.0,2020-01-01T00:00:00Z\nu,45.0,9.0,50\n",
        )
        .unwrap();
        let (input, stats) = read_raw_input(&path).unwrap();
        assert_eq!(stats, RawReadStats { rows: 6, malformed: 3 });
        let RawInput::Pings(p) = input else { panic!("expected pings") };
        assert_eq!(p["u"].iter().map(|x| x.timestamp).collect::<Vec<_>>(), vec![50, 100]);
        assert_eq!(p["v"].len(), 1);
    }

    #[test]
    fn tile_column_selects_points() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("in.csv");
        std::fs::write(&path, "user_id,tile,timestamp\nu,u0nd25,100\nu,u0nd2?,100\n").unwrap();
        let (input, stats) = read_raw_input(&path).unwrap();
        assert_eq!(stats.malformed, 1);
        assert!(matches!(input, RawInput::Points(ref m) if m["u"].len() == 1));
    }

    #[test]
    fn empty_file_is_empty_input() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("in.csv");
        std::fs::write(&path, "").unwrap();
        let (input, stats) = read_raw_input(&path).unwrap();
        assert_eq!(input.n_users(), 0);
        assert_eq!(stats.rows, 0);
    }

    #[test]
    fn missing_columns_are_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("in.csv");
        std::fs::write(&path, "who,where\nu,x\n").unwrap();
        assert!(matches!(read_raw_input(&path), Err(Error::Data(_))));
    }
}
