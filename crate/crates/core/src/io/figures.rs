//! Plot-ready report tables. Column layouts are listed in the README.

use std::collections::BTreeMap;
use std::path::Path;

use super::create_writer;
use crate::error::Result;
use crate::eval::{Accuracy, DistanceHistogram, EvalReport, MoranResult, PredictionRecord, ShiftReport, TileAccuracy};
use crate::experiment::PoiAnalysis;
use crate::geo::TileId;
use crate::model::ModelKind;
use crate::robustness::EnsembleTile;

fn acc_str(a: &Accuracy) -> String {
    a.value().map(|v| v.to_string()).unwrap_or_default()
}

/// `model,k,acc,hits,total`
pub fn write_fig2a(path: &Path, report: &EvalReport) -> Result<()> {
    let mut w = create_writer(path)?;
    w.write_record(["model", "k", "acc", "hits", "total"])?;
    for (kind, a) in &report.overall {
        w.write_record([kind.as_str(), &report.k.to_string(), &acc_str(a), &a.hits.to_string(), &a.total.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `bin,model,acc,hits,total`
pub fn write_fig2b(path: &Path, report: &EvalReport) -> Result<()> {
    let mut w = create_writer(path)?;
    w.write_record(["bin", "model", "acc", "hits", "total"])?;
    for (bin, models) in &report.per_bin {
        for (kind, a) in models {
            w.write_record([bin.label(), kind.as_str(), &acc_str(a), &a.hits.to_string(), &a.total.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `bin,user_id,origin,confidence`, one row per test transition.
pub fn write_fig2c(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    let mut w = create_writer(path)?;
    w.write_record(["bin", "user_id", "origin", "confidence"])?;
    for r in records {
        w.write_record([r.bin.label(), &r.user_id, &r.origin.to_string(), &r.confidence.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `group,model,tile,lat,lon,acc,n,below_min`
pub fn write_fig3<'a>(path: &Path, rows: impl IntoIterator<Item = (&'a str, ModelKind, &'a BTreeMap<TileId, TileAccuracy>)>) -> Result<()> {
    let mut w = create_writer(path)?;
    w.write_record(["group", "model", "tile", "lat", "lon", "acc", "n", "below_min"])?;
    for (group, kind, tiles) in rows {
        for (tile, a) in tiles {
            let c = tile.center();
            w.write_record([
                group,
                kind.as_str(),
                &tile.to_string(),
                &c.lat.to_string(),
                &c.lon.to_string(),
                &a.acc.to_string(),
                &a.n.to_string(),
                &a.below_min.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `group,model,moran_i,expected,p_value,permutations,n_tiles,note`; `note`
/// carries the reason when the statistic is undefined.
pub fn write_fig3_moran<'a>(
    path: &Path,
    rows: impl IntoIterator<Item = (&'a str, ModelKind, Option<&'a MoranResult>, Option<&'a str>)>,
) -> Result<()> {
    let mut w = create_writer(path)?;
    w.write_record(["group", "model", "moran_i", "expected", "p_value", "permutations", "n_tiles", "note"])?;
    for (group, kind, moran, note) in rows {
        match moran {
            Some(m) => w.write_record([
                group,
                kind.as_str(),
                &m.statistic.to_string(),
                &m.expected.to_string(),
                &m.p_value.to_string(),
                &m.permutations.to_string(),
                &m.n.to_string(),
                note.unwrap_or(""),
            ])?,
            None => w.write_record([group, kind.as_str(), "", "", "", "", "", note.unwrap_or("")])?,
        }
    }
    w.flush()?;
    Ok(())
}

/// `tile,lat,lon,entropy,acc,n,below_min,poi_count,near`; `acc` and `n`
/// are empty for tiles without low-overlap transitions.
pub fn write_fig4a(path: &Path, analysis: &PoiAnalysis, poi: &BTreeMap<TileId, u64>) -> Result<()> {
    let mut w = create_writer(path)?;
    w.write_record(["tile", "lat", "lon", "entropy", "acc", "n", "below_min", "poi_count", "near"])?;
    for (tile, s) in &analysis.collective_entropy {
        let c = tile.center();
        let (acc, n, below) = match analysis.low_overlap_acc.get(tile) {
            Some(a) => (a.acc.to_string(), a.n.to_string(), a.below_min.to_string()),
            None => (String::new(), String::new(), String::new()),
        };
        w.write_record([
            &tile.to_string(),
            &c.lat.to_string(),
            &c.lon.to_string(),
            &s.to_string(),
            &acc,
            &n,
            &below,
            &poi.get(tile).copied().unwrap_or(0).to_string(),
            &analysis.split.is_near(*tile).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn histogram_rows<W: std::io::Write>(w: &mut csv::Writer<W>, area: &str, h: &DistanceHistogram) -> Result<()> {
    let zero = if h.total == 0 { 0.0 } else { h.zero_count as f64 / h.total as f64 };
    w.write_record([area, "0", "0", &h.zero_count.to_string(), &zero.to_string()])?;
    for (i, (&count, &density)) in h.counts.iter().zip(&h.density).enumerate() {
        w.write_record([area, &h.edges[i].to_string(), &h.edges[i + 1].to_string(), &count.to_string(), &density.to_string()])?;
    }
    Ok(())
}

/// `area,r_lo_km,r_hi_km,count,density`. The `0,0` row of each area is the
/// same-tile point mass, its `density` the fraction of transitions.
pub fn write_fig4c(path: &Path, analysis: &PoiAnalysis) -> Result<()> {
    let mut w = create_writer(path)?;
    w.write_record(["area", "r_lo_km", "r_hi_km", "count", "density"])?;
    histogram_rows(&mut w, "near", &analysis.near_histogram)?;
    histogram_rows(&mut w, "far", &analysis.far_histogram)?;
    w.flush()?;
    Ok(())
}

/// `month,model,acc,hits,total`
pub fn write_table3(path: &Path, report: &ShiftReport) -> Result<()> {
    let mut w = create_writer(path)?;
    w.write_record(["month", "model", "acc", "hits", "total"])?;
    for m in &report.months {
        for (kind, a) in &m.accuracy {
            w.write_record([m.month.as_str(), kind.as_str(), &acc_str(a), &a.hits.to_string(), &a.total.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `tile,mean_acc,std_acc,n_samples`
pub fn write_ensemble_csv(path: &Path, tiles: &BTreeMap<TileId, EnsembleTile>) -> Result<()> {
    let mut w = create_writer(path)?;
    w.write_record(["tile", "mean_acc", "std_acc", "n_samples"])?;
    for (tile, e) in tiles {
        w.write_record([&tile.to_string(), &e.mean_acc.to_string(), &e.std_acc.to_string(), &e.n_samples.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
