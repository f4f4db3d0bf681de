//! Flat binary field layout.
//!
//! ```text
//! offset  size  content
//! 0       4     magic "MNFB"
//! 4       1     layout version (1)
//! 5       1     domain kind (0 periodic box, 1 radial shell)
//! 6       1     dtype (1 = f64 little endian)
//! 7       1     frame (0 Euler, 1 Lagrange)
//! 8       4     component count (u32 LE)
//! 12      12    grid dims, 3 x u32 LE (radial: [n, 1, 1])
//! 24      8     time (f64 LE)
//! 32      4*c   per-component sample counts (u32 LE)
//! ...           payload, component-major, each row-major, f64 LE
//! ```
//! Component 0 is the density perturbation, the rest are velocity components.

use std::io::{Read, Write};

use super::domain::DomainSpec;
use super::field::{FieldState, Frame};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MNFB";
pub const VERSION: u8 = 1;
const DTYPE_F64: u8 = 1;

/// Header information recovered from a field file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldHeader {
    pub kind: u8,
    pub dims: [u32; 3],
}

pub fn write_field<W: Write>(mut w: W, state: &FieldState, domain: &DomainSpec) -> Result<()> {
    state.check_shape(domain)?;
    let (kind, dims) = match *domain {
        DomainSpec::PeriodicBox { n, .. } => (0u8, [n as u32; 3]),
        DomainSpec::RadialShell { n, .. } => (1u8, [n as u32, 1, 1]),
    };
    let comps = state.components();
    let mut head = Vec::with_capacity(32 + 4 * comps.len());
    head.extend_from_slice(MAGIC);
    head.push(VERSION);
    head.push(kind);
    head.push(DTYPE_F64);
    head.push(match state.frame {
        Frame::Euler => 0,
        Frame::Lagrange => 1,
    });
    head.extend_from_slice(&(comps.len() as u32).to_le_bytes());
    for d in dims {
        head.extend_from_slice(&d.to_le_bytes());
    }
    head.extend_from_slice(&state.time.to_le_bytes());
    for c in &comps {
        head.extend_from_slice(&(c.len() as u32).to_le_bytes());
    }
    w.write_all(&head)?;
    let mut buf = Vec::new();
    for c in comps {
        buf.clear();
        buf.reserve(8 * c.len());
        for v in c {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_field<R: Read>(mut r: R) -> Result<(FieldState, FieldHeader)> {
    let mut head = [0u8; 32];
    r.read_exact(&mut head)?;
    if &head[0..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    if head[4] != VERSION {
        return Err(Error::Format(format!("unsupported layout version {}", head[4])));
    }
    let kind = head[5];
    if kind > 1 {
        return Err(Error::Format(format!("unknown domain kind {kind}")));
    }
    if head[6] != DTYPE_F64 {
        return Err(Error::Format(format!("unsupported dtype {}", head[6])));
    }
    let frame = match head[7] {
        0 => Frame::Euler,
        1 => Frame::Lagrange,
        f => return Err(Error::Format(format!("unknown frame tag {f}"))),
    };
    let u32_at = |o: usize| u32::from_le_bytes(head[o..o + 4].try_into().unwrap());
    let ncomp = u32_at(8) as usize;
    if ncomp == 0 || ncomp > 16 {
        return Err(Error::Format(format!("implausible component count {ncomp}")));
    }
    let dims = [u32_at(12), u32_at(16), u32_at(20)];
    let time = f64::from_le_bytes(head[24..32].try_into().unwrap());
    let mut lens = vec![0u8; 4 * ncomp];
    r.read_exact(&mut lens)?;
    let cap = dims.iter().map(|&d| d as usize).product::<usize>().max(1);
    let mut comps = Vec::with_capacity(ncomp);
    for c in 0..ncomp {
        let len = u32::from_le_bytes(lens[4 * c..4 * c + 4].try_into().unwrap()) as usize;
        if len > cap {
            return Err(Error::Format(format!("component {c} longer than the grid")));
        }
        let mut raw = vec![0u8; 8 * len];
        r.read_exact(&mut raw)?;
        comps.push(raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect::<Vec<f64>>());
    }
    let theta = comps.remove(0);
    Ok((FieldState { theta, vel: comps, frame, time }, FieldHeader { kind, dims }))
}
