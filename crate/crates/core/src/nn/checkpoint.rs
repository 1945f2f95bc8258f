//! Flat binary matrix checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! u64 count
//! count × (u64 rows, u64 cols)
//! count × rows·cols f64 values, row-major, in header order
//! ```
//!
//! A parameter set is written as `weight, bias(1×cols)` per layer.

use std::io::{Read, Write};

use ndarray::Array2;

use crate::error::{Error, Result};

const MAX_ENTRIES: u64 = 1 << 32;

pub fn write_matrices<W: Write>(w: &mut W, mats: &[Array2<f64>]) -> Result<()> {
    w.write_all(&(mats.len() as u64).to_le_bytes())?;
    for m in mats {
        w.write_all(&(m.nrows() as u64).to_le_bytes())?;
        w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    }
    for m in mats {
        for v in m.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R, what: &str) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)
        .map_err(|e| Error::parse(what.to_string(), e.to_string()))?;
    Ok(u64::from_le_bytes(buf))
}

pub fn read_matrices<R: Read>(r: &mut R) -> Result<Vec<Array2<f64>>> {
    let count = read_u64(r, "header count")?;
    if count > MAX_ENTRIES {
        return Err(Error::parse(
            "header count",
            format!("implausible count {count}"),
        ));
    }
    let mut shapes = Vec::with_capacity(count as usize);
    for i in 0..count {
        let rows = read_u64(r, &format!("shape {i} rows"))?;
        let cols = read_u64(r, &format!("shape {i} cols"))?;
        if rows.saturating_mul(cols) > MAX_ENTRIES {
            return Err(Error::parse(format!("shape {i}"), "implausible size"));
        }
        shapes.push((rows as usize, cols as usize));
    }
    let mut out = Vec::with_capacity(shapes.len());
    for (i, &(rows, cols)) in shapes.iter().enumerate() {
        let mut bytes = vec![0u8; rows * cols * 8];
        r.read_exact(&mut bytes)
            .map_err(|e| Error::parse(format!("matrix {i} data"), e.to_string()))?;
        let vals: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        out.push(Array2::from_shape_vec((rows, cols), vals).expect("length matches shape"));
    }
    Ok(out)
}
