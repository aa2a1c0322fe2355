//! CSV/JSON persistence. Every file is written to a temporary sibling and renamed
//! into place, so readers never observe a truncated file.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::grid::{LatentPath, Point, Telemetry};

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    write_atomic(path, &out)
}

fn fmt(x: f64) -> String {
    // shortest representation that round-trips
    format!("{x:?}")
}

/// `time,x,y` with a header row.
pub fn telemetry_to_csv(data: &Telemetry) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["time", "x", "y"])?;
    for (t, p) in data.times().iter().zip(data.locations()) {
        w.write_record([fmt(*t), fmt(p.x), fmt(p.y)])?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

pub fn write_telemetry(path: &Path, data: &Telemetry) -> Result<()> {
    write_atomic(path, &telemetry_to_csv(data)?)
}

/// `time,x,y` or `time,x,y,vx,vy` when velocities are present.
pub fn write_path(path: &Path, lp: &LatentPath) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    match &lp.velocities {
        Some(v) => {
            w.write_record(["time", "x", "y", "vx", "vy"])?;
            for ((t, p), v) in lp.grid.times().iter().zip(&lp.positions).zip(v) {
                w.write_record([fmt(*t), fmt(p.x), fmt(p.y), fmt(v.x), fmt(v.y)])?;
            }
        }
        None => {
            w.write_record(["time", "x", "y"])?;
            for (t, p) in lp.grid.times().iter().zip(&lp.positions) {
                w.write_record([fmt(*t), fmt(p.x), fmt(p.y)])?;
            }
        }
    }
    write_atomic(path, &w.into_inner().map_err(|e| e.into_error())?)
}

/// Parse telemetry CSV: header required, columns `time,x,y`, strictly increasing time.
pub fn read_telemetry_csv<R: std::io::Read>(reader: R) -> Result<Telemetry> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(ti), Some(xi), Some(yi)) = (col("time"), col("x"), col("y")) else {
        return invalid("telemetry CSV needs a header with columns time,x,y");
    };
    let mut times = Vec::new();
    let mut locs = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            let field = rec.get(i).unwrap_or("");
            field
                .parse::<f64>()
                .map_err(|_| crate::Error::Validation(format!("row {}: cannot parse `{field}` as a number", row + 2)))
        };
        times.push(parse(ti)?);
        locs.push(Point::new(parse(xi)?, parse(yi)?));
    }
    Telemetry::new(times, locs)
}

pub fn read_telemetry(path: &Path) -> Result<Telemetry> {
    read_telemetry_csv(std::fs::File::open(path)?)
}
