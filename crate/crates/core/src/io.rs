//! Trajectory CSV files and JSON sidecars.
//!
//! CSV layout: a header row, then one row per sample with the time in the
//! first column and the state coordinates after it. Floats are written in
//! shortest round-trip form, so a write/read cycle is lossless.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;
use crate::simulate::{IntegratorConfig, NoiseSpec, SystemSpec};

pub fn write_trajectory<W: Write>(data: &TimeSeries, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=data.dim()).map(|d| format!("x{d}")));
    wtr.write_record(&header)?;
    let mut rec = Vec::with_capacity(data.dim() + 1);
    for (m, &t) in data.times().iter().enumerate() {
        rec.clear();
        rec.push(t.to_string());
        rec.extend(data.values().row(m).iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_trajectory<R: Read>(input: R) -> Result<TimeSeries> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let width = rdr.headers()?.len();
    if width < 2 {
        return Err(Error::Parse("need a time column and at least one state column".into()));
    }
    let mut times = Vec::new();
    let mut flat = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != width {
            return Err(Error::Parse(format!("row {} has {} fields, expected {width}", i + 2, rec.len())));
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Parse(format!("row {}, column {}: {field:?} is not a number", i + 2, j + 1)))?;
            if j == 0 {
                times.push(v);
            } else {
                flat.push(v);
            }
        }
    }
    let values = DMatrix::from_row_slice(times.len(), width - 1, &flat);
    TimeSeries::new(times, values)
}

pub fn write_trajectory_file(data: &TimeSeries, path: &Path) -> Result<()> {
    write_trajectory(data, BufWriter::new(File::create(path)?))
}

pub fn read_trajectory_file(path: &Path) -> Result<TimeSeries> {
    read_trajectory(BufReader::new(File::open(path)?))
}

/// Provenance stored next to a simulated trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMetadata {
    pub schema_version: u32,
    pub system: SystemSpec,
    pub integrator: IntegratorConfig,
    pub noise: Option<NoiseSpec>,
    /// Index of the noise stream used for this realization.
    pub realization: u64,
    /// Initial state at `system.t0`, which need not be a sample.
    pub x0: Vec<f64>,
}

/// Sidecar path: `traj.csv` becomes `traj.meta.json`.
pub fn metadata_path(csv_path: &Path) -> std::path::PathBuf {
    csv_path.with_extension("meta.json")
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_lossless() {
        let y = DMatrix::from_fn(50, 3, |i, j| ((i * 7 + j) as f64).sin() / 3.0);
        let data = TimeSeries::uniform(0.001, 0.001, y).unwrap();
        let mut buf = Vec::new();
        write_trajectory(&data, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,x1,x2,x3\n"));
        assert_eq!(read_trajectory(buf.as_slice()).unwrap(), data);
    }

    #[test]
    fn malformed_input() {
        assert!(matches!(read_trajectory("t,x1\n0,1\n1,abc\n".as_bytes()), Err(Error::Parse(_))));
        assert!(read_trajectory("t,x1\n0,1\n1\n".as_bytes()).is_err());
        assert!(read_trajectory("t\n0\n1\n".as_bytes()).is_err());
        assert!(matches!(read_trajectory("t,x1\n0,1\n1,2\n3,3\n".as_bytes()), Err(Error::NonUniformGrid { .. })));
    }

    #[test]
    fn sidecar_path() {
        assert_eq!(metadata_path(Path::new("out/traj.csv")), Path::new("out/traj.meta.json"));
    }
}
