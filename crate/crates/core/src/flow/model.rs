use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::arch::{Dense, FlowArch, Layout};
use super::nn::{dense_backward, dense_forward, lstm_backward, lstm_forward, LstmCache};
use super::spline::{raw_len, rqs_backward, SplineParams};
use super::FlowError;
use crate::featurize::{ActionVec, Context, ACTION_DIM};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Samples per gradient chunk. Chunks are reduced in index order, so results
/// do not depend on the number of worker threads.
pub const GRAD_CHUNK: usize = 32;

/// Log-density of the standard normal on ℝ³.
pub fn std_normal_log_prob(u: &[f64; ACTION_DIM]) -> f64 {
    u.iter().map(|v| -0.5 * v * v - HALF_LN_2PI).sum()
}

/// Conditional density `p(a | s)` of encoded actions given a context.
#[derive(Debug, Clone)]
pub struct FlowModel {
    arch: FlowArch,
    layout: Layout,
    params: Vec<f64>,
}

#[derive(Debug, Default, Clone)]
struct CouplingCache {
    z_in: [f64; ACTION_DIM],
    /// Input followed by every layer output of the conditioner.
    acts: Vec<Vec<f64>>,
    splines: Vec<SplineParams>,
}

/// Reusable buffers for one forward/backward pass.
#[derive(Debug, Default, Clone)]
pub struct Workspace {
    fwd: LstmCache,
    bwd: LstmCache,
    hcat: Vec<f64>,
    emb: Vec<f64>,
    layers: Vec<CouplingCache>,
    g_a: Vec<f64>,
    g_b: Vec<f64>,
    g_emb: Vec<f64>,
    g_hcat: Vec<f64>,
    scratch: Vec<f64>,
}

impl FlowModel {
    /// Randomly initialized model whose coupling layers start as the identity
    /// (the last layer of every conditioner is zero).
    pub fn new<R: Rng + ?Sized>(arch: FlowArch, rng: &mut R) -> Result<Self, FlowError> {
        arch.validate()?;
        let layout = Layout::new(&arch);
        let mut params = vec![0.0; layout.total];
        for l in [&layout.fwd, &layout.bwd] {
            let bound = 1.0 / (l.hidden as f64).sqrt();
            for v in &mut params[l.w..l.b + 4 * l.hidden] {
                *v = rng.random_range(-bound..bound);
            }
        }
        let mut init_dense = |d: &Dense, params: &mut [f64]| {
            let bound = 1.0 / (d.n_in as f64).sqrt();
            for v in &mut params[d.w..d.b + d.n_out] {
                *v = rng.random_range(-bound..bound);
            }
        };
        init_dense(&layout.proj, &mut params);
        for layers in &layout.cond {
            let (last, hidden) = layers.split_last().expect("conditioner has an output layer");
            for d in hidden {
                init_dense(d, &mut params);
            }
            params[last.w..last.b + last.n_out].fill(0.0);
        }
        Ok(Self { arch, layout, params })
    }

    /// Model with the given flat parameters.
    pub fn from_params(arch: FlowArch, params: Vec<f64>) -> Result<Self, FlowError> {
        arch.validate()?;
        let layout = Layout::new(&arch);
        if params.len() != layout.total {
            return Err(FlowError::Param(format!(
                "expected {} parameters, got {}",
                layout.total,
                params.len()
            )));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::Param("non-finite parameter".into()));
        }
        Ok(Self { arch, layout, params })
    }

    pub fn arch(&self) -> &FlowArch {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Zeroes every LSTM and projection weight matrix, leaving the biases.
    pub fn zero_encoder_weights(&mut self) {
        let l = &self.layout;
        for lstm in [&l.fwd, &l.bwd] {
            self.params[lstm.w..lstm.b].fill(0.0);
        }
        self.params[l.proj.w..l.proj.b].fill(0.0);
    }

    /// Offsets `(start, end)` of the projection bias inside the parameters.
    pub fn embedding_bias_range(&self) -> (usize, usize) {
        let p = &self.layout.proj;
        (p.b, p.b + p.n_out)
    }

    fn encode_into(&self, ctx: &Context, ws: &mut Workspace) -> Result<(), FlowError> {
        if ctx.is_empty() {
            return Err(FlowError::EmptyContext);
        }
        let l = &self.layout;
        let p = &self.params;
        lstm_forward(p, &l.fwd, ctx.rows.iter().map(|r| &r[..]), &mut ws.fwd);
        lstm_forward(p, &l.bwd, ctx.rows.iter().rev().map(|r| &r[..]), &mut ws.bwd);
        let h = self.arch.lstm_hidden;
        ws.hcat.resize(2 * h, 0.0);
        ws.hcat[..h].copy_from_slice(&ws.fwd.h);
        ws.hcat[h..].copy_from_slice(&ws.bwd.h);
        ws.emb.resize(self.arch.embed_dim, 0.0);
        dense_forward(p, &l.proj, &ws.hcat, &mut ws.emb);
        Ok(())
    }

    /// Fixed-size embedding of a context.
    pub fn encode_context(&self, ctx: &Context) -> Result<Vec<f64>, FlowError> {
        let mut ws = Workspace::default();
        self.encode_into(ctx, &mut ws)?;
        Ok(ws.emb)
    }

    fn conditioner(&self, k: usize, emb: &[f64], z: &[f64; ACTION_DIM], cache: &mut CouplingCache) {
        let layers = &self.layout.cond[k];
        let (cset, _) = FlowArch::split(k);
        cache.acts.resize(layers.len() + 1, Vec::new());
        let input = &mut cache.acts[0];
        input.clear();
        input.extend_from_slice(emb);
        input.extend(cset.iter().map(|&j| z[j]));
        for (i, d) in layers.iter().enumerate() {
            let (head, tail) = cache.acts.split_at_mut(i + 1);
            let out = &mut tail[0];
            out.resize(d.n_out, 0.0);
            dense_forward(&self.params, d, &head[i], out);
            if i + 1 < layers.len() {
                for v in out.iter_mut() {
                    *v = v.tanh();
                }
            }
        }
    }

    fn splines_of(&self, raw: &[f64], n: usize, out: &mut Vec<SplineParams>) -> Result<(), FlowError> {
        let r = raw_len(self.arch.n_bins);
        out.clear();
        for i in 0..n {
            out.push(SplineParams::from_raw(&raw[i * r..(i + 1) * r], self.arch.n_bins, self.arch.tail_bound)?);
        }
        Ok(())
    }

    /// Data-to-noise pass on a precomputed embedding (held in `ws.emb`).
    fn normalize(&self, a: &[f64; ACTION_DIM], ws: &mut Workspace) -> Result<([f64; ACTION_DIM], f64), FlowError> {
        ws.layers.resize(self.arch.n_layers, CouplingCache::default());
        let mut z = *a;
        let mut ld = 0.0;
        for k in 0..self.arch.n_layers {
            let (_, tset) = FlowArch::split(k);
            let cache = &mut ws.layers[k];
            cache.z_in = z;
            self.conditioner(k, &ws.emb, &z, cache);
            let raw = cache.acts.last().expect("output layer");
            self.splines_of(raw, tset.len(), &mut cache.splines)?;
            for (sp, &j) in cache.splines.iter().zip(tset) {
                let (y, l) = sp.forward(z[j]);
                z[j] = y;
                ld += l;
            }
        }
        Ok((z, ld))
    }

    /// Noise-to-data pass: `a = T(u)` given the embedding in `ws.emb`.
    fn generate(&self, u: &[f64; ACTION_DIM], ws: &mut Workspace) -> Result<[f64; ACTION_DIM], FlowError> {
        ws.layers.resize(self.arch.n_layers, CouplingCache::default());
        let mut z = *u;
        for k in (0..self.arch.n_layers).rev() {
            let (_, tset) = FlowArch::split(k);
            let cache = &mut ws.layers[k];
            self.conditioner(k, &ws.emb, &z, cache);
            let raw = cache.acts.last().expect("output layer");
            self.splines_of(raw, tset.len(), &mut cache.splines)?;
            for (sp, &j) in cache.splines.iter().zip(tset) {
                z[j] = sp.inverse(z[j]).0;
            }
        }
        Ok(z)
    }

    /// `u = T⁻¹(a | s)` and `log|det J_{T⁻¹}(a)|`.
    pub fn to_noise(&self, a: &ActionVec, ctx: &Context) -> Result<([f64; ACTION_DIM], f64), FlowError> {
        let mut ws = Workspace::default();
        self.encode_into(ctx, &mut ws)?;
        self.normalize(&a.0, &mut ws)
    }

    /// `a = T(u | s)`.
    pub fn from_noise(&self, u: &[f64; ACTION_DIM], ctx: &Context) -> Result<ActionVec, FlowError> {
        let mut ws = Workspace::default();
        self.encode_into(ctx, &mut ws)?;
        Ok(ActionVec(self.generate(u, &mut ws)?))
    }

    /// `log p(a | s)`.
    pub fn log_prob(&self, a: &ActionVec, ctx: &Context) -> Result<f64, FlowError> {
        let mut ws = Workspace::default();
        self.log_prob_with(a, ctx, &mut ws)
    }

    /// [`Self::log_prob`] reusing caller-owned buffers.
    pub fn log_prob_with(&self, a: &ActionVec, ctx: &Context, ws: &mut Workspace) -> Result<f64, FlowError> {
        check_finite(&a.0)?;
        self.encode_into(ctx, ws)?;
        self.log_prob_encoded(a, ws)
    }

    /// Log-densities of many actions under one context.
    pub fn log_prob_many(&self, actions: &[ActionVec], ctx: &Context) -> Result<Vec<f64>, FlowError> {
        let mut ws = Workspace::default();
        self.encode_into(ctx, &mut ws)?;
        actions.iter().map(|a| {
            check_finite(&a.0)?;
            self.log_prob_encoded(a, &mut ws)
        }).collect()
    }

    fn log_prob_encoded(&self, a: &ActionVec, ws: &mut Workspace) -> Result<f64, FlowError> {
        let (u, ld) = self.normalize(&a.0, ws)?;
        let lp = std_normal_log_prob(&u) + ld;
        if !lp.is_finite() {
            return Err(FlowError::Numerical {
                sample: None,
                msg: format!("log-density {lp} for action {:?} (u = {u:?}, logdet = {ld})", a.0),
            });
        }
        Ok(lp)
    }

    /// `n` draws from `p(· | s)`.
    pub fn sample<R: Rng + ?Sized>(&self, ctx: &Context, n: usize, rng: &mut R) -> Result<Vec<ActionVec>, FlowError> {
        let mut ws = Workspace::default();
        self.encode_into(ctx, &mut ws)?;
        (0..n)
            .map(|_| {
                let u = [0; ACTION_DIM].map(|_| StandardNormal.sample(rng));
                self.generate(&u, &mut ws).map(ActionVec)
            })
            .collect()
    }

    /// Adds `∂(-log p(a|s))/∂θ` into `grad` and returns `-log p(a|s)`.
    fn nll_backward(&self, a: &[f64; ACTION_DIM], ctx: &Context, ws: &mut Workspace, grad: &mut [f64]) -> Result<f64, FlowError> {
        self.encode_into(ctx, ws)?;
        let (u, ld) = self.normalize(a, ws)?;
        let nll = -(std_normal_log_prob(&u) + ld);
        if !nll.is_finite() {
            return Err(FlowError::Numerical {
                sample: None,
                msg: format!("loss {nll} for action {a:?}"),
            });
        }
        let p = &self.params;
        let e = self.arch.embed_dim;
        ws.g_emb.resize(e, 0.0);
        ws.g_emb.fill(0.0);
        let mut gz = u;
        for k in (0..self.arch.n_layers).rev() {
            let (cset, tset) = FlowArch::split(k);
            let cache = &ws.layers[k];
            let layers = &self.layout.cond[k];
            let r = raw_len(self.arch.n_bins);
            let out_len = layers.last().expect("output layer").n_out;
            ws.g_a.resize(out_len, 0.0);
            ws.g_a[..out_len].fill(0.0);
            for (i, (sp, &j)) in cache.splines.iter().zip(tset).enumerate() {
                gz[j] = rqs_backward(sp, cache.z_in[j], gz[j], -1.0, &mut ws.g_a[i * r..(i + 1) * r]);
            }
            for (i, d) in layers.iter().enumerate().rev() {
                if i + 1 < layers.len() {
                    for (g, act) in ws.g_a[..d.n_out].iter_mut().zip(&cache.acts[i + 1]) {
                        *g *= 1.0 - act * act;
                    }
                }
                ws.g_b.resize(d.n_in.max(ws.g_b.len()), 0.0);
                dense_backward(p, d, &cache.acts[i], &ws.g_a[..d.n_out], grad, Some(&mut ws.g_b[..d.n_in]));
                std::mem::swap(&mut ws.g_a, &mut ws.g_b);
            }
            for (ge, g) in ws.g_emb.iter_mut().zip(&ws.g_a[..e]) {
                *ge += g;
            }
            for (i, &j) in cset.iter().enumerate() {
                gz[j] += ws.g_a[e + i];
            }
        }
        let h = self.arch.lstm_hidden;
        ws.g_hcat.resize(2 * h, 0.0);
        dense_backward(p, &self.layout.proj, &ws.hcat, &ws.g_emb, grad, Some(&mut ws.g_hcat));
        lstm_backward(p, &self.layout.fwd, &ws.fwd, &ws.g_hcat[..h], grad, &mut ws.scratch);
        lstm_backward(p, &self.layout.bwd, &ws.bwd, &ws.g_hcat[h..], grad, &mut ws.scratch);
        Ok(nll)
    }

    /// Summed negative log-likelihood and its gradient over `batch`, computed
    /// in fixed chunks of [`GRAD_CHUNK`] samples and reduced in order.
    pub fn nll_sum_and_grad(&self, batch: &[([f64; ACTION_DIM], &Context)]) -> Result<(f64, Vec<f64>), FlowError> {
        let chunks: Vec<Result<(f64, Vec<f64>), FlowError>> = batch
            .par_chunks(GRAD_CHUNK)
            .enumerate()
            .map(|(c, chunk)| {
                let mut ws = Workspace::default();
                let mut grad = vec![0.0; self.params.len()];
                let mut loss = 0.0;
                for (i, (a, ctx)) in chunk.iter().enumerate() {
                    loss += self.nll_backward(a, ctx, &mut ws, &mut grad).map_err(|e| e.at_sample(c * GRAD_CHUNK + i))?;
                }
                Ok((loss, grad))
            })
            .collect();
        let mut total = 0.0;
        let mut grad = vec![0.0; self.params.len()];
        for r in chunks {
            let (l, g) = r?;
            total += l;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(FlowError::Numerical {
                sample: None,
                msg: format!("non-finite gradient at parameter {i}"),
            });
        }
        Ok((total, grad))
    }

    /// Mean negative log-likelihood of `batch` and its gradient.
    pub fn nll_loss_and_grad(&self, batch: &[(ActionVec, &Context)]) -> Result<(f64, Vec<f64>), FlowError> {
        if batch.is_empty() {
            return Err(FlowError::Param("empty batch".into()));
        }
        let items: Vec<([f64; ACTION_DIM], &Context)> = batch.iter().map(|(a, c)| (a.0, *c)).collect();
        let (sum, mut grad) = self.nll_sum_and_grad(&items)?;
        let n = batch.len() as f64;
        for g in &mut grad {
            *g /= n;
        }
        Ok((sum / n, grad))
    }

    /// Mean negative log-likelihood only.
    pub fn nll_loss(&self, batch: &[(ActionVec, &Context)]) -> Result<f64, FlowError> {
        if batch.is_empty() {
            return Err(FlowError::Param("empty batch".into()));
        }
        let mut ws = Workspace::default();
        let mut total = 0.0;
        for (i, (a, ctx)) in batch.iter().enumerate() {
            total -= self.log_prob_with(a, ctx, &mut ws).map_err(|e| e.at_sample(i))?;
        }
        Ok(total / batch.len() as f64)
    }
}

fn check_finite(a: &[f64; ACTION_DIM]) -> Result<(), FlowError> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(FlowError::Numerical {
            sample: None,
            msg: format!("non-finite action {a:?}"),
        })
    }
}
