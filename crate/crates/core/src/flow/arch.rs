//! Architecture hyperparameters and the flat parameter layout.

use serde::{Deserialize, Serialize};

use super::spline::{raw_len, MAX_BINS};
use super::FlowError;
use crate::featurize::CONTEXT_DIM;

/// Shape of a [`super::FlowModel`]; everything needed to rebuild the
/// parameter layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowArch {
    /// Spline bins per transformed coordinate.
    pub n_bins: usize,
    /// Coupling layers.
    pub n_layers: usize,
    /// Context embedding width.
    pub embed_dim: usize,
    /// Hidden width of each LSTM direction.
    pub lstm_hidden: usize,
    /// Hidden layer widths of every conditioner network.
    pub cond_hidden: Vec<usize>,
    /// Spline domain is `[-tail_bound, tail_bound]`.
    pub tail_bound: f64,
}

impl Default for FlowArch {
    fn default() -> Self {
        Self {
            n_bins: 8,
            n_layers: 4,
            embed_dim: 64,
            lstm_hidden: 32,
            cond_hidden: vec![64, 64],
            tail_bound: 4.0,
        }
    }
}

impl FlowArch {
    pub fn validate(&self) -> Result<(), FlowError> {
        let bad = |m: &str| Err(FlowError::Param(m.to_string()));
        if self.n_bins == 0 || self.n_bins > MAX_BINS {
            return bad("n_bins must be in 1..=32");
        }
        if self.n_layers == 0 {
            return bad("n_layers must be positive");
        }
        if self.embed_dim == 0 || self.lstm_hidden == 0 {
            return bad("embed_dim and lstm_hidden must be positive");
        }
        if self.cond_hidden.contains(&0) {
            return bad("conditioner hidden widths must be positive");
        }
        if !(self.tail_bound > 0.0 && self.tail_bound.is_finite()) {
            return bad("tail_bound must be positive");
        }
        Ok(())
    }

    /// `(conditioning, transformed)` coordinates of coupling layer `k`. The
    /// cycle alternates 1/2 and 2/1 splits so every coordinate is transformed.
    pub fn split(k: usize) -> (&'static [usize], &'static [usize]) {
        const SPLITS: [(&[usize], &[usize]); 4] = [
            (&[0], &[1, 2]),
            (&[1, 2], &[0]),
            (&[2], &[0, 1]),
            (&[0, 1], &[2]),
        ];
        SPLITS[k % 4]
    }
}

/// Offsets of one affine layer `y = W x + b`, `W` row-major `n_out × n_in`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Dense {
    pub w: usize,
    pub b: usize,
    pub n_in: usize,
    pub n_out: usize,
}

/// Offsets of one LSTM direction: `W` is `4H × (D + H)` acting on `[x; h]`,
/// gates ordered input, forget, cell, output.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LstmLayout {
    pub w: usize,
    pub b: usize,
    pub n_in: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub fwd: LstmLayout,
    pub bwd: LstmLayout,
    pub proj: Dense,
    pub cond: Vec<Vec<Dense>>,
    pub total: usize,
}

impl Layout {
    pub fn new(arch: &FlowArch) -> Layout {
        let mut off = 0;
        let lstm = |off: &mut usize| {
            let h = arch.lstm_hidden;
            let l = LstmLayout {
                w: *off,
                b: *off + 4 * h * (CONTEXT_DIM + h),
                n_in: CONTEXT_DIM,
                hidden: h,
            };
            *off = l.b + 4 * h;
            l
        };
        let fwd = lstm(&mut off);
        let bwd = lstm(&mut off);
        let dense = |off: &mut usize, n_in: usize, n_out: usize| {
            let d = Dense {
                w: *off,
                b: *off + n_in * n_out,
                n_in,
                n_out,
            };
            *off = d.b + n_out;
            d
        };
        let proj = dense(&mut off, 2 * arch.lstm_hidden, arch.embed_dim);
        let mut cond = Vec::with_capacity(arch.n_layers);
        for k in 0..arch.n_layers {
            let (c, t) = FlowArch::split(k);
            let mut widths = vec![arch.embed_dim + c.len()];
            widths.extend(&arch.cond_hidden);
            widths.push(t.len() * raw_len(arch.n_bins));
            let layers = widths.windows(2).map(|w| dense(&mut off, w[0], w[1])).collect();
            cond.push(layers);
        }
        Layout {
            fwd,
            bwd,
            proj,
            cond,
            total: off,
        }
    }
}
