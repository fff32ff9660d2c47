//! Monotone rational-quadratic splines on `[-B, B]` with identity tails.

use super::FlowError;

/// Largest supported number of bins.
pub const MAX_BINS: usize = 32;
/// Lower bound on normalized bin widths and heights.
pub const MIN_BIN: f64 = 1e-3;
/// Lower bound on knot derivatives.
pub const MIN_DERIVATIVE: f64 = 1e-3;

/// Raw-parameter count for one transformed coordinate.
pub const fn raw_len(n_bins: usize) -> usize {
    3 * n_bins - 1
}

/// Offset added to raw derivative parameters so that zero raw values give
/// unit derivatives.
pub fn derivative_offset() -> f64 {
    ((1.0 - MIN_DERIVATIVE).exp() - 1.0).ln()
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softmax(raw: &[f64], out: &mut [f64]) {
    let m = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, r) in out.iter_mut().zip(raw) {
        *o = (r - m).exp();
        s += *o;
    }
    for o in out.iter_mut() {
        *o /= s;
    }
}

/// Knot representation of a spline: `n_bins + 1` knots in x and y, and the
/// derivative at every knot (the outer two are 1 to match the tails).
#[derive(Debug, Clone, Copy)]
pub struct SplineParams {
    n_bins: usize,
    tail_bound: f64,
    kx: [f64; MAX_BINS + 1],
    ky: [f64; MAX_BINS + 1],
    d: [f64; MAX_BINS + 1],
    // Normalized (pre-scaling) widths and heights, kept for the backward pass.
    pw: [f64; MAX_BINS],
    ph: [f64; MAX_BINS],
    // Slope of the softplus at each interior derivative.
    dslope: [f64; MAX_BINS + 1],
}

impl SplineParams {
    /// Builds the spline from unconstrained parameters laid out as
    /// `[widths (S), heights (S), interior derivatives (S-1)]`.
    pub fn from_raw(raw: &[f64], n_bins: usize, tail_bound: f64) -> Result<Self, FlowError> {
        if n_bins == 0 || n_bins > MAX_BINS || raw.len() != raw_len(n_bins) {
            return Err(FlowError::Param(format!(
                "expected {} raw spline values for {n_bins} bins, got {}",
                raw_len(n_bins),
                raw.len()
            )));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::Param("non-finite raw spline parameter".into()));
        }
        let s = n_bins;
        let mut sp = SplineParams {
            n_bins,
            tail_bound,
            kx: [0.0; MAX_BINS + 1],
            ky: [0.0; MAX_BINS + 1],
            d: [1.0; MAX_BINS + 1],
            pw: [0.0; MAX_BINS],
            ph: [0.0; MAX_BINS],
            dslope: [0.0; MAX_BINS + 1],
        };
        softmax(&raw[..s], &mut sp.pw[..s]);
        softmax(&raw[s..2 * s], &mut sp.ph[..s]);
        let scale = 1.0 - MIN_BIN * s as f64;
        fill_knots(&sp.pw[..s], scale, tail_bound, &mut sp.kx[..=s]);
        fill_knots(&sp.ph[..s], scale, tail_bound, &mut sp.ky[..=s]);
        let c0 = derivative_offset();
        for i in 1..s {
            let z = raw[2 * s + i - 1] + c0;
            sp.d[i] = MIN_DERIVATIVE + softplus(z);
            sp.dslope[i] = sigmoid(z);
        }
        Ok(sp)
    }

    /// Builds the spline from explicit bin widths, heights (each summing to
    /// `2B`) and interior knot derivatives. Rejects non-monotone input.
    pub fn from_knots(
        widths: &[f64],
        heights: &[f64],
        derivatives: &[f64],
        tail_bound: f64,
    ) -> Result<Self, FlowError> {
        let s = widths.len();
        if s == 0 || s > MAX_BINS || heights.len() != s || derivatives.len() + 1 != s {
            return Err(FlowError::Param("inconsistent knot counts".into()));
        }
        if !(tail_bound > 0.0 && tail_bound.is_finite()) {
            return Err(FlowError::Param(format!("tail bound {tail_bound}")));
        }
        let positive = |v: &f64| *v > 0.0 && v.is_finite();
        if !widths.iter().all(positive) || !heights.iter().all(positive) || !derivatives.iter().all(positive) {
            return Err(FlowError::Param("spline is not strictly monotone".into()));
        }
        let total = 2.0 * tail_bound;
        let sw: f64 = widths.iter().sum();
        let sh: f64 = heights.iter().sum();
        if (sw - total).abs() > 1e-9 * total || (sh - total).abs() > 1e-9 * total {
            return Err(FlowError::Param("bins do not span [-B, B]".into()));
        }
        let mut sp = SplineParams {
            n_bins: s,
            tail_bound,
            kx: [0.0; MAX_BINS + 1],
            ky: [0.0; MAX_BINS + 1],
            d: [1.0; MAX_BINS + 1],
            pw: [0.0; MAX_BINS],
            ph: [0.0; MAX_BINS],
            dslope: [0.0; MAX_BINS + 1],
        };
        for i in 0..s {
            sp.pw[i] = widths[i] / total;
            sp.ph[i] = heights[i] / total;
        }
        fill_knots(&sp.pw[..s], 1.0, tail_bound, &mut sp.kx[..=s]);
        fill_knots(&sp.ph[..s], 1.0, tail_bound, &mut sp.ky[..=s]);
        sp.d[1..s].copy_from_slice(derivatives);
        Ok(sp)
    }

    /// Identity spline with uniform bins.
    pub fn identity(n_bins: usize, tail_bound: f64) -> Result<Self, FlowError> {
        Self::from_raw(&vec![0.0; raw_len(n_bins)], n_bins, tail_bound)
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    fn bin_of(knots: &[f64], v: f64) -> usize {
        // Largest i with knots[i] <= v, restricted to a valid bin.
        let s = knots.len() - 1;
        knots[1..s].partition_point(|k| *k <= v)
    }

    /// `(y, log|dy/dx|)`.
    pub fn forward(&self, x: f64) -> (f64, f64) {
        let b = self.tail_bound;
        if !(-b..=b).contains(&x) {
            return (x, 0.0);
        }
        let s = self.n_bins;
        let k = Self::bin_of(&self.kx[..=s], x);
        let w = self.kx[k + 1] - self.kx[k];
        let h = self.ky[k + 1] - self.ky[k];
        let sl = h / w;
        let (d0, d1) = (self.d[k], self.d[k + 1]);
        let xi = (x - self.kx[k]) / w;
        let t = xi * (1.0 - xi);
        let den = sl + (d1 + d0 - 2.0 * sl) * t;
        let y = self.ky[k] + h * (sl * xi * xi + d0 * t) / den;
        let q = d1 * xi * xi + 2.0 * sl * t + d0 * (1.0 - xi) * (1.0 - xi);
        let ld = (sl * sl * q).ln() - 2.0 * den.ln();
        (y, ld)
    }

    /// `(x, log|dx/dy|)` for the inverse map.
    pub fn inverse(&self, y: f64) -> (f64, f64) {
        let b = self.tail_bound;
        if !(-b..=b).contains(&y) {
            return (y, 0.0);
        }
        let s = self.n_bins;
        let k = Self::bin_of(&self.ky[..=s], y);
        let w = self.kx[k + 1] - self.kx[k];
        let h = self.ky[k + 1] - self.ky[k];
        let sl = h / w;
        let (d0, d1) = (self.d[k], self.d[k + 1]);
        let dy = y - self.ky[k];
        let c2 = d1 + d0 - 2.0 * sl;
        let qa = h * (sl - d0) + dy * c2;
        let qb = h * d0 - dy * c2;
        let qc = -sl * dy;
        let disc = (qb * qb - 4.0 * qa * qc).max(0.0);
        let xi = ((2.0 * qc) / (-qb - disc.sqrt())).clamp(0.0, 1.0);
        let x = self.kx[k] + xi * w;
        let t = xi * (1.0 - xi);
        let den = sl + c2 * t;
        let q = d1 * xi * xi + 2.0 * sl * t + d0 * (1.0 - xi) * (1.0 - xi);
        let ld = (sl * sl * q).ln() - 2.0 * den.ln();
        (x, -ld)
    }

    /// Derivative `dy/dx` at `x` (1 on the tails).
    pub fn derivative(&self, x: f64) -> f64 {
        self.forward(x).1.exp()
    }
}

fn fill_knots(p: &[f64], scale: f64, b: f64, knots: &mut [f64]) {
    let s = p.len();
    let mut acc = 0.0;
    knots[0] = -b;
    for i in 1..s {
        acc += MIN_BIN + scale * p[i - 1];
        knots[i] = -b + 2.0 * b * acc;
    }
    knots[s] = b;
}

/// Applies the spline or its inverse, returning the value and log-derivative.
pub fn rqs_transform(x: f64, params: &SplineParams, inverse: bool) -> (f64, f64) {
    if inverse {
        params.inverse(x)
    } else {
        params.forward(x)
    }
}

/// Reverse-mode pass of the forward spline. Given upstream gradients `gy` of
/// the output and `gld` of the log-derivative, accumulates the gradient with
/// respect to the raw parameters into `graw` and returns the gradient with
/// respect to `x`.
pub fn rqs_backward(sp: &SplineParams, x: f64, gy: f64, gld: f64, graw: &mut [f64]) -> f64 {
    let b = sp.tail_bound;
    if !(-b..=b).contains(&x) {
        return gy;
    }
    let s = sp.n_bins;
    let k = SplineParams::bin_of(&sp.kx[..=s], x);
    let w = sp.kx[k + 1] - sp.kx[k];
    let h = sp.ky[k + 1] - sp.ky[k];
    let sl = h / w;
    let (d0, d1) = (sp.d[k], sp.d[k + 1]);
    let xi = (x - sp.kx[k]) / w;
    let t = xi * (1.0 - xi);
    let c2 = d1 + d0 - 2.0 * sl;
    let den = sl + c2 * t;
    let num = h * (sl * xi * xi + d0 * t);
    let r = num / den;
    let q = d1 * xi * xi + 2.0 * sl * t + d0 * (1.0 - xi) * (1.0 - xi);
    let rd = r / den;

    // Partials of r = y - ky[k] and of the log-derivative.
    let r_h = (sl * xi * xi + d0 * t) / den;
    let r_s = h * xi * xi / den - rd * (1.0 - 2.0 * t);
    let r_d0 = h * t / den - rd * t;
    let r_d1 = -rd * t;
    let r_xi = h * (2.0 * sl * xi + d0 * (1.0 - 2.0 * xi)) / den - rd * c2 * (1.0 - 2.0 * xi);
    let l_s = 2.0 / sl + 2.0 * t / q - 2.0 * (1.0 - 2.0 * t) / den;
    let l_d1 = xi * xi / q - 2.0 * t / den;
    let l_d0 = (1.0 - xi) * (1.0 - xi) / q - 2.0 * t / den;
    let l_xi = (2.0 * d1 * xi + 2.0 * sl * (1.0 - 2.0 * xi) - 2.0 * d0 * (1.0 - xi)) / q
        - 2.0 * c2 * (1.0 - 2.0 * xi) / den;

    let g_xi = gy * r_xi + gld * l_xi;
    let g_s = gy * r_s + gld * l_s;
    let g_h = gy * r_h + g_s / w;
    let g_w = -g_s * sl / w - g_xi * xi / w;
    let g_d0 = gy * r_d0 + gld * l_d0;
    let g_d1 = gy * r_d1 + gld * l_d1;
    let gx = g_xi / w;

    // Knot gradients: kx[k] also enters through xi.
    let mut gkx = [0.0; MAX_BINS + 1];
    let mut gky = [0.0; MAX_BINS + 1];
    gkx[k + 1] += g_w;
    gkx[k] -= g_w;
    gkx[k] -= g_xi / w;
    gky[k + 1] += g_h;
    gky[k] -= g_h;
    gky[k] += gy;

    let scale = 1.0 - MIN_BIN * s as f64;
    knots_backward(&sp.pw[..s], scale, b, &gkx[..=s], &mut graw[..s]);
    knots_backward(&sp.ph[..s], scale, b, &gky[..=s], &mut graw[s..2 * s]);

    let d_raw = &mut graw[2 * s..];
    if k >= 1 {
        d_raw[k - 1] += g_d0 * sp.dslope[k];
    }
    if k + 1 < s {
        d_raw[k] += g_d1 * sp.dslope[k + 1];
    }
    gx
}

fn knots_backward(p: &[f64], scale: f64, b: f64, gknots: &[f64], graw: &mut [f64]) {
    let s = p.len();
    // knots[i] = -b + 2b * sum_{j<i} (MIN_BIN + scale * p[j]) for 1 <= i < s.
    let mut gp = [0.0; MAX_BINS];
    let mut suffix = 0.0;
    for j in (0..s).rev() {
        if j + 1 < s {
            suffix += gknots[j + 1];
        }
        gp[j] = 2.0 * b * scale * suffix;
    }
    let dot: f64 = (0..s).map(|j| p[j] * gp[j]).sum();
    for j in 0..s {
        graw[j] += p[j] * (gp[j] - dot);
    }
}
