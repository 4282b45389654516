//! Binary field snapshots and CSV helpers.
//!
//! Snapshot layout (little endian): magic `NNFS`, u32 version, u32 d, u32 n,
//! u32 rank code (0 scalar, 1 vector, 2 tensor), f64 time, then every
//! component in turn as n^d row-major f64 values.

use super::field::{Field, Rank};
use super::grid::Grid;
use crate::error::{Error, Result};
use std::io::{Read, Write};

const MAGIC: &[u8; 4] = b"NNFS";
const VERSION: u32 = 1;

pub fn write_snapshot<W: Write>(mut w: W, field: &Field, time: f64) -> Result<()> {
    let g = field.grid();
    w.write_all(MAGIC)?;
    for v in [VERSION, g.d() as u32, g.n() as u32, field.rank().code()] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&time.to_le_bytes())?;
    for c in field.components() {
        for x in c {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<(Field, f64)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut word = [0u8; 4];
    let mut read_u32 = |r: &mut R| -> Result<u32> {
        r.read_exact(&mut word)?;
        Ok(u32::from_le_bytes(word))
    };
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let d = read_u32(&mut r)? as usize;
    let n = read_u32(&mut r)? as usize;
    let rank = Rank::from_code(read_u32(&mut r)?)
        .ok_or_else(|| Error::Format("bad rank code".into()))?;
    let mut dw = [0u8; 8];
    r.read_exact(&mut dw)?;
    let time = f64::from_le_bytes(dw);
    let grid = Grid::new(d, n)?;
    let mut comps = Vec::new();
    for _ in 0..rank.components(d) {
        let mut c = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            r.read_exact(&mut dw)?;
            c.push(f64::from_le_bytes(dw));
        }
        comps.push(c);
    }
    Ok((Field::from_components(&grid, rank, comps)?, time))
}

/// 17-significant-digit rendering used for every CSV value.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Line through the grid along `axis` with all other indices zero.
pub fn slice_csv(field: &Field, axis: usize, comp: usize) -> String {
    let g = field.grid();
    let mut s = String::from("x,value\n");
    for i in 0..g.n() {
        let mut idx = [0usize; 3];
        idx[axis] = i;
        let p = g.flat_index(&idx);
        s.push_str(&format!("{},{}\n", fmt_f64(g.point(p)[axis]), fmt_f64(field.comp(comp)[p])));
    }
    s
}

/// Time series of named scalar diagnostics, one column per name.
pub fn series_csv(times: &[f64], names: &[&str], columns: &[Vec<f64>]) -> String {
    let mut s = String::from("t");
    for n in names {
        s.push(',');
        s.push_str(n);
    }
    s.push('\n');
    for (i, t) in times.iter().enumerate() {
        s.push_str(&fmt_f64(*t));
        for c in columns {
            s.push(',');
            s.push_str(&fmt_f64(c[i]));
        }
        s.push('\n');
    }
    s
}
