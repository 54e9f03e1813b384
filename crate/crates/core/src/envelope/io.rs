//! Trace serialisation: CSV with a `t` column, or raw little-endian f64 with a
//! JSON sidecar. Values are printed in shortest round-trip form so identical
//! runs produce byte-identical files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::envelope::{EnvelopeSample, TimeSeries};
use crate::error::{Error, Result};

/// A scalar type that can be stored in a trace file.
pub trait TraceSample: Copy {
    const KIND: &'static str;
    const WIDTH: usize;
    fn column_names(name: &str) -> Vec<String>;
    fn write_fields(&self, out: &mut impl Write) -> std::io::Result<()>;
    fn write_le(&self, out: &mut impl Write) -> std::io::Result<()>;
    fn from_values(values: &[f64]) -> Self;
}

impl TraceSample for f64 {
    const KIND: &'static str = "real";
    const WIDTH: usize = 1;

    fn column_names(name: &str) -> Vec<String> {
        vec![name.to_string()]
    }

    fn write_fields(&self, out: &mut impl Write) -> std::io::Result<()> {
        write!(out, ",{self:?}")
    }

    fn write_le(&self, out: &mut impl Write) -> std::io::Result<()> {
        out.write_all(&self.to_le_bytes())
    }

    fn from_values(values: &[f64]) -> Self {
        values[0]
    }
}

impl TraceSample for EnvelopeSample {
    const KIND: &'static str = "complex";
    const WIDTH: usize = 2;

    fn column_names(name: &str) -> Vec<String> {
        vec![format!("{name}_re"), format!("{name}_im")]
    }

    fn write_fields(&self, out: &mut impl Write) -> std::io::Result<()> {
        write!(out, ",{:?},{:?}", self.re, self.im)
    }

    fn write_le(&self, out: &mut impl Write) -> std::io::Result<()> {
        out.write_all(&self.re.to_le_bytes())?;
        out.write_all(&self.im.to_le_bytes())
    }

    fn from_values(values: &[f64]) -> Self {
        EnvelopeSample::new(values[0], values[1])
    }
}

/// Writes `t,<name>` (complex as `<name>_re,<name>_im`).
pub fn write_csv<T: TraceSample>(out: impl Write, name: &str, s: &TimeSeries<T>) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "t,{}", T::column_names(name).join(","))?;
    for (i, x) in s.data().iter().enumerate() {
        write!(w, "{:?}", s.time(i))?;
        x.write_fields(&mut w)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file<T: TraceSample>(path: &Path, name: &str, s: &TimeSeries<T>) -> Result<()> {
    write_csv(File::create(path)?, name, s)
}

/// Several real columns sharing one time base.
pub fn write_columns_csv(path: &Path, dt: f64, t0: f64, columns: &[(&str, &[f64])]) -> Result<()> {
    let len = columns.first().map_or(0, |c| c.1.len());
    if columns.iter().any(|c| c.1.len() != len) {
        return Err(Error::config("columns", "all columns must have equal length"));
    }
    let mut w = BufWriter::new(File::create(path)?);
    let names: Vec<&str> = columns.iter().map(|c| c.0).collect();
    writeln!(w, "t,{}", names.join(","))?;
    for i in 0..len {
        write!(w, "{:?}", t0 + i as f64 * dt)?;
        for (_, col) in columns {
            write!(w, ",{:?}", col[i])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Parsed CSV: header plus column-major values.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.header
            .iter()
            .position(|h| h == name)
            .map(|i| self.columns[i].as_slice())
    }
}

pub fn read_csv(input: impl Read) -> Result<CsvTable> {
    let mut lines = BufReader::new(input).lines();
    let header: Vec<String> = match lines.next() {
        Some(line) => line?.split(',').map(str::to_string).collect(),
        None => return Err(Error::EmptySeries),
    };
    let mut columns = vec![Vec::new(); header.len()];
    for (row, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(Error::config(
                format!("csv row {}", row + 2),
                format!("expected {} fields, found {}", header.len(), fields.len()),
            ));
        }
        for (col, field) in columns.iter_mut().zip(fields) {
            let v = field.parse::<f64>().map_err(|e| {
                Error::config(format!("csv row {}", row + 2), format!("`{field}`: {e}"))
            })?;
            col.push(v);
        }
    }
    Ok(CsvTable { header, columns })
}

/// Reads a single-signal CSV produced by [`write_csv`].
pub fn read_series_csv<T: TraceSample>(input: impl Read) -> Result<TimeSeries<T>> {
    let table = read_csv(input)?;
    if table.header.first().map(String::as_str) != Some("t") || table.header.len() != 1 + T::WIDTH {
        return Err(Error::config("csv header", format!("unexpected header {:?}", table.header)));
    }
    let t = &table.columns[0];
    if t.is_empty() {
        return Err(Error::EmptySeries);
    }
    let dt = if t.len() > 1 { t[1] - t[0] } else { 1.0 };
    let data = (0..t.len())
        .map(|i| {
            let vals: Vec<f64> = table.columns[1..].iter().map(|c| c[i]).collect();
            T::from_values(&vals)
        })
        .collect();
    TimeSeries::new(dt, t[0], data)
}

/// JSON sidecar describing a raw binary trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinarySidecar {
    pub dt: f64,
    pub t0: f64,
    pub length: usize,
    pub kind: String,
}

fn sidecar_path(data_path: &Path) -> PathBuf {
    data_path.with_extension("json")
}

/// Writes `path` (little-endian f64, complex interleaved re/im) and a sidecar
/// next to it with the `.json` extension.
pub fn write_binary<T: TraceSample>(path: &Path, s: &TimeSeries<T>) -> Result<PathBuf> {
    let mut w = BufWriter::new(File::create(path)?);
    for x in s.data() {
        x.write_le(&mut w)?;
    }
    w.flush()?;
    let sidecar = BinarySidecar {
        dt: s.dt(),
        t0: s.t0(),
        length: s.len(),
        kind: T::KIND.to_string(),
    };
    let side = sidecar_path(path);
    serde_json::to_writer_pretty(File::create(&side)?, &sidecar)?;
    Ok(side)
}

pub fn read_binary<T: TraceSample>(path: &Path) -> Result<TimeSeries<T>> {
    let sidecar: BinarySidecar = serde_json::from_reader(File::open(sidecar_path(path))?)?;
    if sidecar.kind != T::KIND {
        return Err(Error::config(
            "kind",
            format!("sidecar says `{}`, expected `{}`", sidecar.kind, T::KIND),
        ));
    }
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let expected = sidecar.length * T::WIDTH * 8;
    if bytes.len() != expected {
        return Err(Error::InsufficientLength {
            reason: format!("{} bytes on disk, sidecar implies {expected}", bytes.len()),
        });
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let data = values.chunks_exact(T::WIDTH).map(T::from_values).collect();
    TimeSeries::new(sidecar.dt, sidecar.t0, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn csv_header_and_layout() {
        let s = TimeSeries::new(0.5, 1.0, vec![EnvelopeSample::new(1.0, -0.1), EnvelopeSample::new(0.0, 2.5)]).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, "u", &s).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "t,u_re,u_im\n1.0,1.0,-0.1\n1.5,0.0,2.5\n");
    }

    #[test]
    fn binary_round_trip_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.f64");
        let s = TimeSeries::new(1e-7, 0.25, (0..100).map(|k| EnvelopeSample::new(k as f64, -1.0 / (k as f64 + 1.0))).collect()).unwrap();
        write_binary(&path, &s).unwrap();
        let side: BinarySidecar = serde_json::from_reader(File::open(dir.path().join("trace.json")).unwrap()).unwrap();
        assert_eq!(side.kind, "complex");
        assert_eq!(side.length, 100);
        assert_eq!(read_binary::<EnvelopeSample>(&path).unwrap(), s);
        assert!(read_binary::<f64>(&path).is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trips_values_exactly(values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO, 1..200)) {
            let s = TimeSeries::new(0.125, 0.0, values).unwrap();
            let mut buf = Vec::new();
            write_csv(&mut buf, "x", &s).unwrap();
            let back: TimeSeries<f64> = read_series_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(back.data(), s.data());
        }
    }
}
