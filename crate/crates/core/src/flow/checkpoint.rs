//! Binary model checkpoints.
//!
//! ```text
//! magic "SGFLOW01" | version u32 | n_bins u32 | n_layers u32 | embed_dim u32
//! | lstm_hidden u32 | n_cond_hidden u32 | cond_hidden[..] u32 | tail_bound f64
//! | n_params u64 | params f64...
//! ```
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use super::{FlowArch, FlowError, FlowModel};

const MAGIC: &[u8; 8] = b"SGFLOW01";
/// Version of the checkpoint layout.
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn to_bytes(model: &FlowModel) -> Vec<u8> {
    let a = model.arch();
    let mut out = Vec::with_capacity(64 + 8 * model.n_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for v in [a.n_bins, a.n_layers, a.embed_dim, a.lstm_hidden, a.cond_hidden.len()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for &h in &a.cond_hidden {
        out.extend_from_slice(&(h as u32).to_le_bytes());
    }
    out.extend_from_slice(&a.tail_bound.to_le_bytes());
    out.extend_from_slice(&(model.n_params() as u64).to_le_bytes());
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], FlowError> {
        if self.buf.len() < N {
            return Err(FlowError::Format("truncated checkpoint".into()));
        }
        let (head, rest) = self.buf.split_at(N);
        self.buf = rest;
        Ok(head.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<usize, FlowError> {
        Ok(u32::from_le_bytes(self.take()?) as usize)
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<FlowModel, FlowError> {
    let mut r = Reader { buf: bytes };
    if &r.take::<8>()? != MAGIC {
        return Err(FlowError::Format("bad magic".into()));
    }
    let version = r.u32()? as u32;
    if version != CHECKPOINT_VERSION {
        return Err(FlowError::Format(format!("unsupported version {version}")));
    }
    let (n_bins, n_layers, embed_dim, lstm_hidden, n_hidden) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?, r.u32()?);
    if n_hidden > 64 {
        return Err(FlowError::Format(format!("{n_hidden} conditioner layers")));
    }
    let cond_hidden = (0..n_hidden).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
    let tail_bound = f64::from_le_bytes(r.take()?);
    let n_params = u64::from_le_bytes(r.take()?) as usize;
    if r.buf.len() != 8 * n_params {
        return Err(FlowError::Format(format!(
            "expected {n_params} parameters, found {} bytes",
            r.buf.len()
        )));
    }
    let params = r
        .buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let arch = FlowArch {
        n_bins,
        n_layers,
        embed_dim,
        lstm_hidden,
        cond_hidden,
        tail_bound,
    };
    FlowModel::from_params(arch, params)
}

pub fn save(path: &Path, model: &FlowModel) -> Result<(), FlowError> {
    fs::write(path, to_bytes(model))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<FlowModel, FlowError> {
    from_bytes(&fs::read(path)?)
}
