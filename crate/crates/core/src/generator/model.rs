//! Conditional generator `G(H_i, z)` and its variational encoder.
//!
//! Operators are flattened row-major and standardised with a fixed
//! per-entry centre and a global scale. Three dense networks share the work:
//!
//! * the inference encoder maps `[x_i ‖ x_f]` to a diagonal Gaussian over z.
//!   Its mean is taken relative to the response on `[x_i ‖ x_i]`, so an
//!   error-free pair always lands on the prior mean;
//! * the conditioning encoder maps `x_i` through the same widths and exposes
//!   every layer's activation;
//! * the decoder climbs back from z, concatenating the conditioning
//!   activation of the matching depth at each layer, and adds its output to
//!   `x_i`. The prior operator therefore reaches the output unchanged unless
//!   the decoder learns a residual.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::posterior::{GaussianPosterior, LatentCode, LOG_VARIANCE_BOUND};
use crate::autodiff::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::forge::ForwardOperator;
use crate::{rng, Error, Matrix, Result};

/// Shape of the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub rows: usize,
    pub cols: usize,
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
}

impl Architecture {
    pub fn entries(&self) -> usize {
        self.rows * self.cols
    }
}

/// Affine map from operator space to the network's working scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    /// Per-entry centre, row-major.
    pub center: Vec<f64>,
    pub scale: f64,
}

impl Normalization {
    pub fn identity(entries: usize) -> Self {
        Normalization {
            center: vec![0.0; entries],
            scale: 1.0,
        }
    }

    /// Centre at the mean operator of the pairs; scale so that the mean
    /// squared residual `H_f − H_i` is one.
    pub fn fit(pairs: &[(&Matrix, &Matrix)]) -> Result<Self> {
        let Some((first, _)) = pairs.first() else {
            return Err(Error::Empty("normalization pairs"));
        };
        let entries = first.len();
        let mut center = vec![0.0; entries];
        let mut sq = 0.0;
        for (hi, hf) in pairs {
            if hi.shape() != first.shape() || hf.shape() != first.shape() {
                return Err(Error::shape("normalization pair", first.shape(), hf.shape()));
            }
            for ((c, a), b) in center.iter_mut().zip(flatten(hi)).zip(flatten(hf)) {
                *c += 0.5 * (a + b);
                sq += (b - a) * (b - a);
            }
        }
        let n = pairs.len() as f64;
        center.iter_mut().for_each(|c| *c /= n);
        let rms = libm::sqrt(sq / (n * entries as f64));
        let scale = if rms > 0.0 {
            1.0 / rms
        } else {
            let var = pairs
                .iter()
                .flat_map(|(hi, _)| flatten(hi).zip(&center).map(|(a, c)| (a - c) * (a - c)).collect::<Vec<_>>())
                .sum::<f64>()
                / (n * entries as f64);
            if var > 0.0 {
                1.0 / libm::sqrt(var)
            } else {
                1.0
            }
        };
        Ok(Normalization { center, scale })
    }

    pub fn forward(&self, h: &Matrix) -> Vec<f64> {
        flatten(h).zip(&self.center).map(|(v, c)| (v - c) * self.scale).collect()
    }

    pub fn inverse(&self, x: &[f64], rows: usize, cols: usize) -> Matrix {
        Matrix::from_row_iterator(rows, cols, x.iter().zip(&self.center).map(|(v, c)| v / self.scale + c))
    }
}

/// Row-major iteration over a matrix.
pub fn flatten(m: &Matrix) -> impl Iterator<Item = f64> + '_ {
    (0..m.nrows()).flat_map(move |r| (0..m.ncols()).map(move |c| m[(r, c)]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dense {
    w: ParamId,
    b: ParamId,
}

impl Dense {
    fn register(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, gain: f64, r: &mut rng::Rng) -> Self {
        let bound = gain * libm::sqrt(6.0 / (fan_in + fan_out) as f64);
        let w = (0..fan_in * fan_out).map(|_| r.random_range(-bound..=bound)).collect();
        let w = store.add(format!("{name}.w"), Tensor::new(vec![fan_in, fan_out], w).expect("sized"));
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[fan_out]));
        Dense { w, b }
    }

    fn lookup(store: &ParamStore, name: &str, fan_in: usize, fan_out: usize) -> Result<Self> {
        let get = |suffix: &str, shape: &[usize]| {
            let full = format!("{name}.{suffix}");
            let id = store
                .find(&full)
                .ok_or_else(|| Error::param("checkpoint", format!("missing tensor {full}")))?;
            if store.get(id).shape() != shape {
                return Err(Error::shape("checkpoint tensor", shape, store.get(id).shape()));
            }
            Ok(id)
        };
        Ok(Dense {
            w: get("w", &[fan_in, fan_out])?,
            b: get("b", &[fan_out])?,
        })
    }

    fn apply(self, g: &mut Graph, x: Var) -> Result<Var> {
        let (w, b) = (g.param(self.w), g.param(self.b));
        g.affine(x, w, b)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    inference: Vec<Dense>,
    mean_head: Dense,
    log_variance_head: Dense,
    condition: Vec<Dense>,
    // decoder[0] consumes z; decoder[k] consumes [d_{k-1} ‖ c_{depth-k}]
    decoder: Vec<Dense>,
}

impl Layout {
    /// (name, fan_in, fan_out, init gain) for every dense layer.
    fn plan(arch: &Architecture) -> Vec<(alloc::string::String, usize, usize, f64)> {
        let p = arch.entries();
        let h = &arch.hidden;
        let depth = h.len();
        let mut plan = Vec::new();
        let mut fan_in = 2 * p;
        for (k, &w) in h.iter().enumerate() {
            plan.push((format!("inference.{k}"), fan_in, w, 1.0));
            fan_in = w;
        }
        plan.push(("mean".into(), fan_in, arch.latent_dim, 1.0));
        plan.push(("log_variance".into(), fan_in, arch.latent_dim, 0.1));
        let mut fan_in = p;
        for (k, &w) in h.iter().enumerate() {
            plan.push((format!("condition.{k}"), fan_in, w, 1.0));
            fan_in = w;
        }
        plan.push(("decoder.0".into(), arch.latent_dim, h[depth - 1], 1.0));
        for k in 1..=depth {
            // previous decoder width equals the width of the skip it meets
            let width = h[depth - k];
            let out = if k == depth { p } else { h[depth - k - 1] };
            // the output layer starts near zero so the untrained model
            // reproduces its prior operator
            let gain = if k == depth { 0.01 } else { 1.0 };
            plan.push((format!("decoder.{k}"), 2 * width, out, gain));
        }
        plan
    }

    fn build(arch: &Architecture, store: &ParamStore) -> Result<Self> {
        let depth = arch.hidden.len();
        let mut dense = Vec::new();
        for (name, fan_in, fan_out, _) in Self::plan(arch) {
            dense.push(Dense::lookup(store, &name, fan_in, fan_out)?);
        }
        let mut it = dense.into_iter();
        let inference = it.by_ref().take(depth).collect();
        let mean_head = it.next().expect("planned");
        let log_variance_head = it.next().expect("planned");
        let condition = it.by_ref().take(depth).collect();
        let decoder = it.collect();
        Ok(Layout {
            inference,
            mean_head,
            log_variance_head,
            condition,
            decoder,
        })
    }
}

/// Trained or trainable conditional generator.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorModel {
    arch: Architecture,
    norm: Normalization,
    params: ParamStore,
    layout: Layout,
}

/// Conditioning activations for one prior operator, reusable across many
/// latent codes.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditioned {
    x_i: Tensor,
    skips: Vec<Tensor>,
}

impl GeneratorModel {
    /// Freshly initialised model (seeded Glorot-uniform weights, zero biases).
    pub fn new(arch: Architecture, norm: Normalization, seed: u64) -> Result<Self> {
        validate_arch(&arch, &norm)?;
        let mut r = rng::stream(seed, 0x6d6f64656c);
        let mut params = ParamStore::new();
        for (name, fan_in, fan_out, gain) in Layout::plan(&arch) {
            Dense::register(&mut params, &name, fan_in, fan_out, gain, &mut r);
        }
        let layout = Layout::build(&arch, &params)?;
        Ok(GeneratorModel {
            arch,
            norm,
            params,
            layout,
        })
    }

    /// Model with every weight and bias zero.
    pub fn zeros(arch: Architecture, norm: Normalization) -> Result<Self> {
        let mut m = Self::new(arch, norm, 0)?;
        for t in m.params.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(m)
    }

    /// Reassembles a model from stored parts, checking every tensor.
    pub fn from_parts(arch: Architecture, norm: Normalization, params: ParamStore) -> Result<Self> {
        validate_arch(&arch, &norm)?;
        let layout = Layout::build(&arch, &params)?;
        Ok(GeneratorModel {
            arch,
            norm,
            params,
            layout,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn normalization(&self) -> &Normalization {
        &self.norm
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent_dim
    }

    pub(crate) fn check_operator(&self, h: &Matrix) -> Result<()> {
        if h.shape() != (self.arch.rows, self.arch.cols) {
            return Err(Error::shape("operator", (self.arch.rows, self.arch.cols), h.shape()));
        }
        Ok(())
    }

    pub(crate) fn standardize(&self, h: &Matrix) -> Result<Vec<f64>> {
        self.check_operator(h)?;
        Ok(self.norm.forward(h))
    }

    /// Encoder heads for `[x_i ‖ x_f]` (rank-1 or batched rank-2 inputs).
    pub(crate) fn encoder_graph(&self, g: &mut Graph, x_i: Var, x_f: Var) -> Result<(Var, Var)> {
        let h = self.inference_features(g, x_i, x_f)?;
        let h_id = self.inference_features(g, x_i, x_i)?;
        let raw = self.layout.mean_head.apply(g, h)?;
        let raw_id = self.layout.mean_head.apply(g, h_id)?;
        let mean = g.sub(raw, raw_id)?;
        let lv = self.layout.log_variance_head.apply(g, h)?;
        let lv = g.clamp(lv, -LOG_VARIANCE_BOUND, LOG_VARIANCE_BOUND);
        Ok((mean, lv))
    }

    fn inference_features(&self, g: &mut Graph, x_i: Var, x_f: Var) -> Result<Var> {
        let axis = g.shape(x_i).len() - 1;
        let mut h = g.concat(x_i, x_f, axis)?;
        for layer in &self.layout.inference {
            let a = layer.apply(g, h)?;
            h = g.tanh(a);
        }
        Ok(h)
    }

    /// Activations of every conditioning layer, outermost first.
    pub(crate) fn condition_graph(&self, g: &mut Graph, x_i: Var) -> Result<Vec<Var>> {
        let mut skips = Vec::with_capacity(self.layout.condition.len());
        let mut h = x_i;
        for layer in &self.layout.condition {
            let a = layer.apply(g, h)?;
            h = g.tanh(a);
            skips.push(h);
        }
        Ok(skips)
    }

    /// Standardised output `x_i + residual(z, skips)`.
    pub(crate) fn decoder_graph(&self, g: &mut Graph, z: Var, skips: &[Var], x_i: Var) -> Result<Var> {
        let depth = skips.len();
        let axis = g.shape(z).len() - 1;
        let a = self.layout.decoder[0].apply(g, z)?;
        let mut d = g.tanh(a);
        for k in 1..=depth {
            let joined = g.concat(d, skips[depth - k], axis)?;
            let a = self.layout.decoder[k].apply(g, joined)?;
            d = if k == depth { a } else { g.tanh(a) };
        }
        g.add(x_i, d)
    }

    /// Posterior `q(z | H_i, H_f)`.
    pub fn encode(&self, h_i: &ForwardOperator, h_f: &ForwardOperator) -> Result<GaussianPosterior> {
        self.encode_matrices(h_i.matrix(), h_f.matrix())
    }

    pub fn encode_matrices(&self, h_i: &Matrix, h_f: &Matrix) -> Result<GaussianPosterior> {
        let (xi, xf) = (self.standardize(h_i)?, self.standardize(h_f)?);
        let mut g = Graph::with_params(&self.params);
        let (vi, vf) = (g.input(Tensor::vector(xi)), g.input(Tensor::vector(xf)));
        let (mean, lv) = self.encoder_graph(&mut g, vi, vf)?;
        GaussianPosterior::new(g.value(mean).data().to_vec(), g.value(lv).data().to_vec())
    }

    /// Runs the conditioning encoder once for `h_i`.
    pub fn condition(&self, h_i: &Matrix) -> Result<Conditioned> {
        let xi = self.standardize(h_i)?;
        let mut g = Graph::with_params(&self.params);
        let vi = g.input(Tensor::vector(xi));
        let skips = self.condition_graph(&mut g, vi)?;
        Ok(Conditioned {
            skips: skips.iter().map(|&s| g.value(s).clone()).collect(),
            x_i: g.value(vi).clone(),
        })
    }

    /// Decoder mean for a pre-conditioned prior operator.
    pub fn generate_conditioned(&self, cond: &Conditioned, z: &LatentCode) -> Result<Matrix> {
        if z.dim() != self.arch.latent_dim {
            return Err(Error::shape("latent code", self.arch.latent_dim, z.dim()));
        }
        let mut g = Graph::with_params(&self.params);
        let vz = g.input(Tensor::vector(z.as_slice().to_vec()));
        let skips: Vec<Var> = cond.skips.iter().map(|s| g.input(s.clone())).collect();
        let vi = g.input(cond.x_i.clone());
        let out = self.decoder_graph(&mut g, vz, &skips, vi)?;
        Ok(self.norm.inverse(g.value(out).data(), self.arch.rows, self.arch.cols))
    }

    /// Corrected operator `G(H_i, z)`, the decoder mean.
    pub fn generate(&self, h_i: &ForwardOperator, z: &LatentCode) -> Result<ForwardOperator> {
        let cond = self.condition(h_i.matrix())?;
        ForwardOperator::new(self.generate_conditioned(&cond, z)?, h_i.id(), None)
    }
}

fn validate_arch(arch: &Architecture, norm: &Normalization) -> Result<()> {
    if arch.rows == 0 || arch.cols == 0 {
        return Err(Error::param("architecture", "operator shape must be non-empty"));
    }
    if arch.latent_dim == 0 {
        return Err(Error::param("latent_dim", "must be at least 1"));
    }
    if arch.hidden.is_empty() || arch.hidden.contains(&0) {
        return Err(Error::param("hidden", "need at least one non-empty layer"));
    }
    if norm.center.len() != arch.entries() {
        return Err(Error::shape("normalization centre", arch.entries(), norm.center.len()));
    }
    if !(norm.scale.is_finite() && norm.scale > 0.0) {
        return Err(Error::param("normalization scale", "must be positive"));
    }
    Ok(())
}
