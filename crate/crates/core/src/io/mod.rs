//! File formats: raw pings, stops, trajectory stores, POI fields, the model
//! store and the report tables.

mod figures;
mod pings;
mod poi;
mod store;
mod trajectories;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

pub use figures::{
    write_ensemble_csv, write_fig2a, write_fig2b, write_fig2c, write_fig3, write_fig3_moran, write_fig4a, write_fig4c,
    write_table3,
};
pub use pings::{parse_timestamp, read_raw_input, write_pings_csv, RawInput, RawReadStats};
pub use poi::{count_amenities, read_poi, read_poi_csv, read_poi_json, write_poi_csv, AMENITIES};
pub use store::{read_store, write_od_csv, write_store, ModelMeta, ModelStore};
pub use trajectories::{
    read_overlap_csv, read_stops_csv, read_trajectories_csv, write_overlap_csv, write_stops_csv, write_trajectories_csv,
};

use crate::error::Result;

/// Headers are written explicitly so that empty tables still carry one.
pub(crate) fn create_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(File::create(path)?)))
}

/// Writes `value` as pretty JSON with a trailing newline.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
}
