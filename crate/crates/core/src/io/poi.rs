use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::create_writer;
use crate::error::{Error, Result};
use crate::geo::{encode_geohash, TileId};

/// Amenity values counted as points of interest.
pub const AMENITIES: [&str; 15] = [
    "cafe",
    "college",
    "library",
    "university",
    "restaurant",
    "pub",
    "fast_food",
    "bar",
    "bank",
    "pharmacy",
    "arts_centre",
    "cinema",
    "community_centre",
    "post_office",
    "marketplace",
];

fn is_counted(amenity: &str) -> bool {
    let norm = amenity.trim().to_ascii_lowercase().replace(' ', "_");
    AMENITIES.contains(&norm.as_str())
}

#[derive(Debug, Serialize, Deserialize)]
struct PoiRow {
    tile: TileId,
    poi_count: u64,
}

pub fn read_poi_csv(path: &Path) -> Result<BTreeMap<TileId, u64>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = BTreeMap::new();
    for row in r.deserialize::<PoiRow>() {
        let row = row?;
        if out.insert(row.tile, row.poi_count).is_some() {
            return Err(Error::data(format!("{}: tile {} listed twice", path.display(), row.tile)));
        }
    }
    Ok(out)
}

pub fn write_poi_csv(path: &Path, poi: &BTreeMap<TileId, u64>) -> Result<()> {
    let mut w = create_writer(path)?;
    w.write_record(["tile", "poi_count"])?;
    for (&tile, &poi_count) in poi {
        w.serialize(PoiRow { tile, poi_count })?;
    }
    w.flush()?;
    Ok(())
}

/// Counts matching amenities per tile from `(lat, lon, amenity)` features.
pub fn count_amenities<'a>(features: impl IntoIterator<Item = (f64, f64, &'a str)>, precision: u8) -> Result<BTreeMap<TileId, u64>> {
    let mut out = BTreeMap::new();
    for (lat, lon, amenity) in features {
        if is_counted(amenity) {
            *out.entry(encode_geohash(lat, lon, precision)?).or_insert(0) += 1;
        }
    }
    Ok(out)
}

/// Point features from a GeoJSON feature collection or an Overpass export.
fn features(doc: &Value) -> Result<Vec<(f64, f64, String)>> {
    let mut out = Vec::new();
    if let Some(fs) = doc.get("features").and_then(Value::as_array) {
        for f in fs {
            let amenity = f.pointer("/properties/amenity").and_then(Value::as_str);
            let coords = f.pointer("/geometry/coordinates").and_then(Value::as_array);
            let is_point = f.pointer("/geometry/type").and_then(Value::as_str) == Some("Point");
            if let (Some(a), Some(c), true) = (amenity, coords, is_point) {
                match (c.first().and_then(Value::as_f64), c.get(1).and_then(Value::as_f64)) {
                    (Some(lon), Some(lat)) => out.push((lat, lon, a.to_string())),
                    _ => return Err(Error::data("GeoJSON point without numeric coordinates")),
                }
            }
        }
    } else if let Some(es) = doc.get("elements").and_then(Value::as_array) {
        for e in es {
            let Some(a) = e.pointer("/tags/amenity").and_then(Value::as_str) else { continue };
            // nodes carry lat/lon, ways and relations a centre
            let pos = e.get("lat").and_then(Value::as_f64).zip(e.get("lon").and_then(Value::as_f64)).or_else(|| {
                e.pointer("/center/lat")
                    .and_then(Value::as_f64)
                    .zip(e.pointer("/center/lon").and_then(Value::as_f64))
            });
            if let Some((lat, lon)) = pos {
                out.push((lat, lon, a.to_string()));
            }
        }
    } else {
        return Err(Error::data("POI JSON has neither 'features' nor 'elements'"));
    }
    Ok(out)
}

pub fn read_poi_json(path: &Path, precision: u8) -> Result<BTreeMap<TileId, u64>> {
    let doc: Value = super::read_json(path)?;
    let fs = features(&doc)?;
    count_amenities(fs.iter().map(|(lat, lon, a)| (*lat, *lon, a.as_str())), precision)
}

/// JSON map features when the extension is `.json` or `.geojson`, otherwise `tile,poi_count` CSV.
pub fn read_poi(path: &Path, precision: u8) -> Result<BTreeMap<TileId, u64>> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("json") | Some("geojson") => read_poi_json(path, precision),
        _ => read_poi_csv(path),
    }
}
