//! Binary snapshot of a [`VidalMps`].
//!
//! Layout (all integers `u64`, all reals `f64`, little-endian):
//!
//! ```text
//! magic   8 bytes  "VIDALMPS"
//! version u32      1
//! n, d
//! n + 1 times:  len, then len lambda entries
//! n times:      left, phys, right, then left·phys·right (re, im) pairs
//!               in row-major (left, phys, right) order
//! ```
//!
//! Doubles are written bit for bit, so a round trip is exact.

use std::io::{Read, Write};

use super::VidalMps;
use crate::error::{Result, TebdError};
use crate::kernel::{DenseTensor3, C64};

const MAGIC: &[u8; 8] = b"VIDALMPS";
const VERSION: u32 = 1;

/// Sanity limit on any single dimension read from a file.
const MAX_DIM: u64 = 1 << 24;

impl VidalMps {
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        write_u64(&mut w, self.n() as u64)?;
        write_u64(&mut w, self.d as u64)?;
        for lam in &self.lambdas {
            write_u64(&mut w, lam.len() as u64)?;
            for x in lam {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        for g in &self.gammas {
            let (l, p, r) = g.dims();
            for dim in [l, p, r] {
                write_u64(&mut w, dim as u64)?;
            }
            for z in g.as_slice() {
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(TebdError::Snapshot("bad magic".into()));
        }
        let mut version = [0u8; 4];
        r.read_exact(&mut version)?;
        let version = u32::from_le_bytes(version);
        if version != VERSION {
            return Err(TebdError::Snapshot(format!("unsupported version {version}")));
        }
        let n = read_dim(&mut r)?;
        let d = read_dim(&mut r)?;
        let mut lambdas = Vec::with_capacity(n + 1);
        for _ in 0..=n {
            let len = read_dim(&mut r)?;
            lambdas.push((0..len).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?);
        }
        let mut gammas = Vec::with_capacity(n);
        for _ in 0..n {
            let dims = (read_dim(&mut r)?, read_dim(&mut r)?, read_dim(&mut r)?);
            let count = dims.0 * dims.1 * dims.2;
            let mut data = Vec::with_capacity(count);
            for _ in 0..count {
                let re = read_f64(&mut r)?;
                let im = read_f64(&mut r)?;
                data.push(C64::new(re, im));
            }
            gammas.push(DenseTensor3::from_vec(dims, data)?);
        }
        Self::from_parts(d, gammas, lambdas)
    }

    pub fn to_snapshot_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_snapshot(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn from_snapshot_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_snapshot(bytes)
    }
}

fn write_u64<W: Write>(w: &mut W, x: u64) -> Result<()> {
    w.write_all(&x.to_le_bytes())?;
    Ok(())
}

fn read_dim<R: Read>(r: &mut R) -> Result<usize> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    let x = u64::from_le_bytes(buf);
    if x > MAX_DIM {
        return Err(TebdError::Snapshot(format!("dimension {x} is implausibly large")));
    }
    Ok(x as usize)
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}
