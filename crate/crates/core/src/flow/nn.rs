//! Dense and LSTM kernels over the flat parameter vector, with their
//! reverse-mode passes.

use super::arch::{Dense, LstmLayout};

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn dense_forward(p: &[f64], l: &Dense, x: &[f64], y: &mut [f64]) {
    let w = &p[l.w..l.w + l.n_in * l.n_out];
    let b = &p[l.b..l.b + l.n_out];
    for (o, yo) in y.iter_mut().enumerate().take(l.n_out) {
        let row = &w[o * l.n_in..(o + 1) * l.n_in];
        *yo = b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// Accumulates parameter gradients; if `gx` is given it is overwritten with
/// `Wᵀ gy`.
pub(crate) fn dense_backward(
    p: &[f64],
    l: &Dense,
    x: &[f64],
    gy: &[f64],
    grad: &mut [f64],
    gx: Option<&mut [f64]>,
) {
    let n_in = l.n_in;
    {
        let gw = &mut grad[l.w..l.w + n_in * l.n_out];
        for (o, g) in gy.iter().enumerate() {
            if *g != 0.0 {
                for (gwi, xi) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
                    *gwi += g * xi;
                }
            }
        }
    }
    for (gb, g) in grad[l.b..l.b + l.n_out].iter_mut().zip(gy) {
        *gb += g;
    }
    if let Some(gx) = gx {
        let w = &p[l.w..l.w + n_in * l.n_out];
        gx[..n_in].fill(0.0);
        for (o, g) in gy.iter().enumerate() {
            for (gxi, wi) in gx[..n_in].iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                *gxi += g * wi;
            }
        }
    }
}

/// Activations of one LSTM pass, kept for backpropagation.
#[derive(Debug, Default, Clone)]
pub(crate) struct LstmCache {
    pub n: usize,
    /// `[x_t; h_t]` inputs, `n × (D + H)`.
    xh: Vec<f64>,
    /// Activated gates, `n × 4H`.
    gates: Vec<f64>,
    /// Cell states, `(n + 1) × H` starting from zero.
    c: Vec<f64>,
    /// `tanh(c_{t+1})`, `n × H`.
    tc: Vec<f64>,
    /// Final hidden state.
    pub h: Vec<f64>,
    z: Vec<f64>,
}

/// Runs one direction over `rows` and returns the final hidden state in
/// `cache.h`.
pub(crate) fn lstm_forward<'a>(
    p: &[f64],
    l: &LstmLayout,
    rows: impl ExactSizeIterator<Item = &'a [f64]>,
    cache: &mut LstmCache,
) {
    let (d, h) = (l.n_in, l.hidden);
    let dh = d + h;
    let n = rows.len();
    cache.n = n;
    cache.xh.resize(n * dh, 0.0);
    cache.gates.resize(n * 4 * h, 0.0);
    cache.c.resize((n + 1) * h, 0.0);
    cache.c[..h].fill(0.0);
    cache.tc.resize(n * h, 0.0);
    cache.h.resize(h, 0.0);
    cache.h.fill(0.0);
    cache.z.resize(4 * h, 0.0);
    let w = &p[l.w..l.w + 4 * h * dh];
    let b = &p[l.b..l.b + 4 * h];
    for (t, x) in rows.enumerate() {
        let xh = &mut cache.xh[t * dh..(t + 1) * dh];
        xh[..d].copy_from_slice(&x[..d]);
        xh[d..].copy_from_slice(&cache.h);
        let xh = &cache.xh[t * dh..(t + 1) * dh];
        for (r, zr) in cache.z.iter_mut().enumerate() {
            let row = &w[r * dh..(r + 1) * dh];
            *zr = b[r] + row.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>();
        }
        let g = &mut cache.gates[t * 4 * h..(t + 1) * 4 * h];
        for j in 0..h {
            g[j] = sigmoid(cache.z[j]);
            g[h + j] = sigmoid(cache.z[h + j]);
            g[2 * h + j] = cache.z[2 * h + j].tanh();
            g[3 * h + j] = sigmoid(cache.z[3 * h + j]);
        }
        let (c_prev, c_next) = cache.c[t * h..(t + 2) * h].split_at_mut(h);
        let tc = &mut cache.tc[t * h..(t + 1) * h];
        for j in 0..h {
            c_next[j] = g[h + j] * c_prev[j] + g[j] * g[2 * h + j];
            tc[j] = c_next[j].tanh();
            cache.h[j] = g[3 * h + j] * tc[j];
        }
    }
}

/// Backpropagates `gh` (gradient of the final hidden state) through time.
pub(crate) fn lstm_backward(p: &[f64], l: &LstmLayout, cache: &LstmCache, gh: &[f64], grad: &mut [f64], scratch: &mut Vec<f64>) {
    let (d, h) = (l.n_in, l.hidden);
    let dh = d + h;
    scratch.resize(2 * h + 4 * h + dh, 0.0);
    let (dhc, rest) = scratch.split_at_mut(2 * h);
    let (dz, dxh) = rest.split_at_mut(4 * h);
    let (dh_t, dc) = dhc.split_at_mut(h);
    dh_t.copy_from_slice(&gh[..h]);
    dc.fill(0.0);
    let w = &p[l.w..l.w + 4 * h * dh];
    for t in (0..cache.n).rev() {
        let g = &cache.gates[t * 4 * h..(t + 1) * 4 * h];
        let tc = &cache.tc[t * h..(t + 1) * h];
        let c_prev = &cache.c[t * h..(t + 1) * h];
        for j in 0..h {
            let (i, f, gg, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
            let dct = dc[j] + dh_t[j] * o * (1.0 - tc[j] * tc[j]);
            dz[j] = dct * gg * i * (1.0 - i);
            dz[h + j] = dct * c_prev[j] * f * (1.0 - f);
            dz[2 * h + j] = dct * i * (1.0 - gg * gg);
            dz[3 * h + j] = dh_t[j] * tc[j] * o * (1.0 - o);
            dc[j] = dct * f;
        }
        let xh = &cache.xh[t * dh..(t + 1) * dh];
        let gw = &mut grad[l.w..l.w + 4 * h * dh];
        for (r, g) in dz.iter().enumerate() {
            for (gwi, xi) in gw[r * dh..(r + 1) * dh].iter_mut().zip(xh) {
                *gwi += g * xi;
            }
        }
        for (gb, g) in grad[l.b..l.b + 4 * h].iter_mut().zip(dz.iter()) {
            *gb += g;
        }
        if t > 0 {
            dxh.fill(0.0);
            for (r, g) in dz.iter().enumerate() {
                for (o, wi) in dxh[d..].iter_mut().zip(&w[r * dh + d..(r + 1) * dh]) {
                    *o += g * wi;
                }
            }
            dh_t.copy_from_slice(&dxh[d..]);
        }
    }
}
