//! Dataset files.
//!
//! CSV: the first line holds `n,channels,length,C` as integers (a literal
//! `n,channels,length,C` line before it is accepted and skipped). Then each
//! sample is one row of `C` labels followed by `channels` rows of `length`
//! values. Values are written with shortest round-trip formatting, so a
//! save/load cycle is bit-exact.
//!
//! raw_f32: four little-endian u32 (`n`, `channels`, `length`, `C`), then per
//! sample `C` f32 labels and `channels·length` f32 signal values, channel-major.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{default_class_names, Dataset};
use crate::error::{Error, Result};
use crate::signal::SignalMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    Csv,
    RawF32,
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(DataFormat::Csv),
            "raw_f32" | "raw" => Ok(DataFormat::RawF32),
            other => Err(Error::Config(format!(
                "unknown data format {other:?}; use csv or raw_f32"
            ))),
        }
    }
}

impl DataFormat {
    /// Guess from the file extension: `.csv` or anything else as raw_f32.
    pub fn from_path(path: &Path) -> DataFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => DataFormat::Csv,
            _ => DataFormat::RawF32,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Header {
    n: usize,
    channels: usize,
    length: usize,
    classes: usize,
}

/// Load a dataset; its id is the file stem.
pub fn load_dataset(path: &Path, format: DataFormat) -> Result<Dataset> {
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string();
    let origin = path.display().to_string();
    let file = File::open(path)?;
    match format {
        DataFormat::Csv => read_csv(BufReader::new(file), &origin, id),
        DataFormat::RawF32 => read_raw(BufReader::new(file), &origin, id),
    }
}

pub fn save_dataset(ds: &Dataset, path: &Path, format: DataFormat) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        DataFormat::Csv => write_csv(ds, &mut w)?,
        DataFormat::RawF32 => write_raw(ds, &mut w)?,
    }
    w.flush()?;
    Ok(())
}

fn header_of(ds: &Dataset) -> Result<Header> {
    let first = ds
        .signals()
        .first()
        .ok_or_else(|| Error::Contract("cannot save an empty dataset".into()))?;
    let h = Header {
        n: ds.len(),
        channels: first.channels(),
        length: first.length(),
        classes: ds.num_classes(),
    };
    if ds
        .signals()
        .iter()
        .any(|s| s.channels() != h.channels || s.length() != h.length)
    {
        return Err(Error::Contract(
            "all signals must share one shape to be saved".into(),
        ));
    }
    Ok(h)
}

pub(crate) fn write_csv(ds: &Dataset, mut w: impl Write) -> Result<()> {
    let h = header_of(ds)?;
    writeln!(w, "{},{},{},{}", h.n, h.channels, h.length, h.classes)?;
    let join = |it: &mut dyn Iterator<Item = &f64>| {
        it.map(|v| v.to_string()).collect::<Vec<_>>().join(",")
    };
    for (sig, y) in ds.signals().iter().zip(ds.labels().rows()) {
        writeln!(w, "{}", join(&mut y.iter()))?;
        for ch in sig.data().rows() {
            writeln!(w, "{}", join(&mut ch.iter()))?;
        }
    }
    Ok(())
}

fn parse_row(line: &str, expected: usize, loc: &str) -> Result<Vec<f64>> {
    let values: Vec<f64> = line
        .split(',')
        .enumerate()
        .map(|(j, tok)| {
            tok.trim().parse::<f64>().map_err(|_| {
                Error::parse(
                    loc,
                    format!("field {} is not a number: {:?}", j + 1, tok.trim()),
                )
            })
        })
        .collect::<Result<_>>()?;
    if values.len() != expected {
        return Err(Error::parse(
            loc,
            format!("expected {expected} fields, found {}", values.len()),
        ));
    }
    Ok(values)
}

fn parse_header(line: &str, loc: &str) -> Result<Header> {
    let parts: Vec<&str> = line.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(Error::parse(loc, "header must be `n,channels,length,C`"));
    }
    let mut v = [0usize; 4];
    for (slot, p) in v.iter_mut().zip(&parts) {
        *slot = p.parse().map_err(|_| {
            Error::parse(
                loc,
                format!("header field {p:?} is not a non-negative integer"),
            )
        })?;
    }
    if v.contains(&0) {
        return Err(Error::parse(loc, "header fields must all be positive"));
    }
    Ok(Header {
        n: v[0],
        channels: v[1],
        length: v[2],
        classes: v[3],
    })
}

pub(crate) fn read_csv(r: impl BufRead, origin: &str, id: String) -> Result<Dataset> {
    let mut lines = r
        .lines()
        .enumerate()
        .map(|(i, l)| l.map(|l| (i + 1, l)))
        .filter(|res| res.as_ref().map_or(true, |(_, l)| !l.trim().is_empty()));
    let mut next = |what: &str| -> Result<(usize, String)> {
        lines.next().transpose()?.ok_or_else(|| {
            Error::parse(format!("{origin}: end of file"), format!("missing {what}"))
        })
    };
    let (mut lineno, mut line) = next("header")?;
    if line.trim().eq_ignore_ascii_case("n,channels,length,C") {
        (lineno, line) = next("header values")?;
    }
    let h = parse_header(&line, &format!("{origin}:{lineno}"))?;
    let mut signals = Vec::with_capacity(h.n);
    let mut labels = Array2::zeros((h.n, h.classes));
    for i in 0..h.n {
        let (ln, line) = next(&format!("label row of sample {i}"))?;
        let loc = format!("{origin}:{ln}");
        let y = parse_row(&line, h.classes, &loc)?;
        if let Some(bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::parse(loc, format!("label {bad} is not binary")));
        }
        labels.row_mut(i).assign(&ndarray::ArrayView1::from(&y));
        let mut rows = Vec::with_capacity(h.channels);
        for ch in 0..h.channels {
            let (ln, line) = next(&format!("channel {ch} of sample {i}"))?;
            rows.push(parse_row(&line, h.length, &format!("{origin}:{ln}"))?);
        }
        signals
            .push(SignalMatrix::from_rows(&rows).map_err(|e| Error::parse(&loc, e.to_string()))?);
    }
    if let Some(Ok((ln, _))) = lines.next() {
        return Err(Error::parse(
            format!("{origin}:{ln}"),
            format!("trailing data after {} samples", h.n),
        ));
    }
    Dataset::new(signals, labels, id, default_class_names(h.classes))
}

pub(crate) fn write_raw(ds: &Dataset, mut w: impl Write) -> Result<()> {
    let h = header_of(ds)?;
    for v in [h.n, h.channels, h.length, h.classes] {
        let v = u32::try_from(v)
            .map_err(|_| Error::Contract(format!("{v} does not fit the u32 header")))?;
        w.write_all(&v.to_le_bytes())?;
    }
    for (sig, y) in ds.signals().iter().zip(ds.labels().rows()) {
        for &v in y.iter().chain(sig.data().iter()) {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub(crate) fn read_raw(mut r: impl Read, origin: &str, id: String) -> Result<Dataset> {
    let mut offset = 0usize;
    let mut read_word = |r: &mut dyn Read, what: &str| -> Result<[u8; 4]> {
        let mut buf = [0u8; 4];
        r.read_exact(&mut buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::parse(
                    format!("{origin}: byte {offset}"),
                    format!("file ends inside {what}"),
                )
            } else {
                Error::Io(e)
            }
        })?;
        offset += 4;
        Ok(buf)
    };
    let mut hv = [0usize; 4];
    for slot in hv.iter_mut() {
        *slot = u32::from_le_bytes(read_word(&mut r, "header")?) as usize;
    }
    if hv.contains(&0) {
        return Err(Error::parse(
            format!("{origin}: byte 0"),
            "header fields must all be positive",
        ));
    }
    let h = Header {
        n: hv[0],
        channels: hv[1],
        length: hv[2],
        classes: hv[3],
    };
    let mut labels = Array2::zeros((h.n, h.classes));
    let mut signals = Vec::with_capacity(h.n);
    for i in 0..h.n {
        for c in 0..h.classes {
            let v = f32::from_le_bytes(read_word(&mut r, "labels")?) as f64;
            if v != 0.0 && v != 1.0 {
                return Err(Error::parse(
                    format!(
                        "{origin}: byte {}",
                        16 + 4 * (i * (h.classes + h.channels * h.length) + c)
                    ),
                    format!("label {v} is not binary"),
                ));
            }
            labels[[i, c]] = v;
        }
        let mut data = Array2::zeros((h.channels, h.length));
        for v in data.iter_mut() {
            *v = f32::from_le_bytes(read_word(&mut r, "signal")?) as f64;
        }
        signals.push(SignalMatrix::new(data).map_err(|e| Error::parse(origin, e.to_string()))?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::parse(
            format!("{origin}: byte {offset}"),
            "trailing bytes after last sample",
        ));
    }
    Dataset::new(signals, labels, id, default_class_names(h.classes))
}
