use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{axpy, dot, Mat, Real};
use crate::{FpMode, LspcError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

/// Output head. A Gaussian head emits `[mean | log_std]`, each half of the
/// raw output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Linear,
    Gaussian,
}

/// Dense affine layer, weights row-major `(out_dim, in_dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<F> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<F>,
    pub b: Vec<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<F> {
    layers: Vec<Layer<F>>,
    activation: Activation,
    head: Head,
}

/// Activations recorded by [`Mlp::forward_batch`]: the input to every layer.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache<F> {
    inputs: Vec<Mat<F>>,
}

impl<F> ForwardCache<F> {
    pub fn empty() -> Self {
        ForwardCache { inputs: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Parameter gradients, one `(dW, db)` pair per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<F> {
    pub layers: Vec<(Vec<F>, Vec<F>)>,
}

impl<F: Real> Grads<F> {
    pub fn zeros_like(net: &Mlp<F>) -> Self {
        Grads {
            layers: net
                .layers
                .iter()
                .map(|l| (vec![F::zero(); l.w.len()], vec![F::zero(); l.b.len()]))
                .collect(),
        }
    }

    pub fn flat(&self) -> Vec<F> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.layers
            .iter()
            .all(|(w, b)| w.iter().chain(b).all(|x| *x == F::zero()))
    }

    /// Name of the first tensor holding a non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<String> {
        for (k, (w, b)) in self.layers.iter().enumerate() {
            if w.iter().any(|x| !x.is_finite()) {
                return Some(format!("L{k}.w"));
            }
            if b.iter().any(|x| !x.is_finite()) {
                return Some(format!("L{k}.b"));
            }
        }
        None
    }
}

fn fp_mode() -> FpMode {
    static MODE: OnceLock<FpMode> = OnceLock::new();
    *MODE.get_or_init(FpMode::from_env)
}

impl<F: Real> Mlp<F> {
    /// Builds a network with Glorot-uniform weights and zero biases.
    /// `sizes` lists every layer width including input and raw output.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        activation: Activation,
        head: Head,
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(LspcError::Config(format!("bad layer sizes {sizes:?}")));
        }
        if head == Head::Gaussian && sizes[sizes.len() - 1] % 2 != 0 {
            return Err(LspcError::Config("gaussian head needs an even output width".into()));
        }
        let layers = sizes
            .windows(2)
            .map(|p| {
                let (fan_in, fan_out) = (p[0], p[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).expect("valid range");
                Layer {
                    in_dim: fan_in,
                    out_dim: fan_out,
                    w: (0..fan_in * fan_out).map(|_| F::lit(dist.sample(rng))).collect(),
                    b: vec![F::zero(); fan_out],
                }
            })
            .collect();
        Ok(Mlp { layers, activation, head })
    }

    /// Assembles a network from explicit layers.
    pub fn from_layers(layers: Vec<Layer<F>>, activation: Activation, head: Head) -> Result<Self> {
        if layers.is_empty() {
            return Err(LspcError::Config("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(LspcError::Config("consecutive layer dimensions differ".into()));
            }
        }
        for l in &layers {
            if l.w.len() != l.in_dim * l.out_dim || l.b.len() != l.out_dim {
                return Err(LspcError::Config("layer tensor sizes do not match dims".into()));
            }
            if l.w.iter().chain(&l.b).any(|x| !x.is_finite()) {
                return Err(LspcError::numeric("non-finite parameter"));
            }
        }
        let out = layers[layers.len() - 1].out_dim;
        if head == Head::Gaussian && out % 2 != 0 {
            return Err(LspcError::Config("gaussian head needs an even output width".into()));
        }
        Ok(Mlp { layers, activation, head })
    }

    pub fn layers(&self) -> &[Layer<F>] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].in_dim];
        s.extend(self.layers.iter().map(|l| l.out_dim));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    /// Width of the raw output (both halves for a Gaussian head).
    pub fn raw_output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    /// Dimension of the modelled quantity: raw width, or half of it for a
    /// Gaussian head.
    pub fn output_dim(&self) -> usize {
        match self.head {
            Head::Linear => self.raw_output_dim(),
            Head::Gaussian => self.raw_output_dim() / 2,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn same_architecture(&self, other: &Mlp<F>) -> bool {
        self.sizes() == other.sizes() && self.activation == other.activation && self.head == other.head
    }

    /// Flat parameter access in `L0.w, L0.b, L1.w, ...` order.
    pub fn param(&self, mut idx: usize) -> F {
        for l in &self.layers {
            if idx < l.w.len() {
                return l.w[idx];
            }
            idx -= l.w.len();
            if idx < l.b.len() {
                return l.b[idx];
            }
            idx -= l.b.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, mut idx: usize, v: F) {
        for l in &mut self.layers {
            if idx < l.w.len() {
                l.w[idx] = v;
                return;
            }
            idx -= l.w.len();
            if idx < l.b.len() {
                l.b[idx] = v;
                return;
            }
            idx -= l.b.len();
        }
        panic!("parameter index out of range");
    }

    pub fn flat_params(&self) -> Vec<F> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer<F>] {
        &mut self.layers
    }

    /// Converts every parameter to another scalar width.
    pub fn cast<G: Real>(&self) -> Mlp<G> {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    in_dim: l.in_dim,
                    out_dim: l.out_dim,
                    w: l.w.iter().map(|x| G::lit(x.as_f64())).collect(),
                    b: l.b.iter().map(|x| G::lit(x.as_f64())).collect(),
                })
                .collect(),
            activation: self.activation,
            head: self.head,
        }
    }

    #[inline]
    fn activate(&self, z: &mut [F]) {
        match self.activation {
            Activation::Relu => z.iter_mut().for_each(|v| {
                if *v < F::zero() {
                    *v = F::zero();
                }
            }),
            Activation::Tanh => z.iter_mut().for_each(|v| *v = v.tanh()),
        }
    }

    /// Single-sample evaluation. For a Gaussian head the second half of the
    /// result is the clamped log standard deviation.
    pub fn forward(&self, x: &[F]) -> Result<Vec<F>> {
        let out = self.predict_batch(&Mat::from_vec(1, x.len(), x.to_vec())?)?;
        let mut v = out.data;
        if self.head == Head::Gaussian {
            let k = v.len() / 2;
            for s in &mut v[k..] {
                *s = super::gaussian::clamp_log_std(*s);
            }
        }
        Ok(v)
    }

    /// Batched raw forward pass without recording activations.
    pub fn predict_batch(&self, x: &Mat<F>) -> Result<Mat<F>> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut next = affine(layer, &cur);
            if k + 1 < self.layers.len() {
                self.activate(&mut next.data);
            }
            cur = next;
        }
        Ok(cur)
    }

    /// Batched raw forward pass that records what [`Mlp::backward`] needs.
    pub fn forward_batch(&self, x: &Mat<F>) -> Result<(Mat<F>, ForwardCache<F>)> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut next = affine(layer, &cur);
            if k + 1 < self.layers.len() {
                self.activate(&mut next.data);
            }
            inputs.push(cur);
            cur = next;
        }
        Ok((cur, ForwardCache { inputs }))
    }

    fn check_input(&self, x: &Mat<F>) -> Result<()> {
        if x.cols != self.input_dim() {
            return Err(LspcError::Shape(format!(
                "network expects input width {}, got {}",
                self.input_dim(),
                x.cols
            )));
        }
        Ok(())
    }

    fn check_cache(&self, cache: &ForwardCache<F>, upstream: &Mat<F>) -> Result<()> {
        if cache.inputs.is_empty() {
            return Err(LspcError::Usage("backward pass without a forward cache".into()));
        }
        let ok = cache.inputs.len() == self.layers.len()
            && cache
                .inputs
                .iter()
                .zip(&self.layers)
                .all(|(m, l)| m.cols == l.in_dim && m.rows == upstream.rows);
        if !ok {
            return Err(LspcError::Usage("forward cache does not belong to this network/batch".into()));
        }
        if upstream.cols != self.raw_output_dim() {
            return Err(LspcError::Shape(format!(
                "upstream gradient width {} != output width {}",
                upstream.cols,
                self.raw_output_dim()
            )));
        }
        Ok(())
    }

    /// Gradients of `sum_ij upstream_ij * out_ij` with respect to the
    /// parameters and the input.
    pub fn backward(&self, cache: &ForwardCache<F>, upstream: &Mat<F>) -> Result<(Grads<F>, Mat<F>)> {
        self.backprop(cache, upstream, true).map(|(g, dx)| (g.expect("requested"), dx))
    }

    /// Input gradient only, for networks that are held frozen.
    pub fn backward_input(&self, cache: &ForwardCache<F>, upstream: &Mat<F>) -> Result<Mat<F>> {
        self.backprop(cache, upstream, false).map(|(_, dx)| dx)
    }

    fn backprop(
        &self,
        cache: &ForwardCache<F>,
        upstream: &Mat<F>,
        want_params: bool,
    ) -> Result<(Option<Grads<F>>, Mat<F>)> {
        self.check_cache(cache, upstream)?;
        let n = self.layers.len();
        let mut grads = want_params.then(|| Grads::zeros_like(self));
        let mut dy = upstream.clone();
        for k in (0..n).rev() {
            let layer = &self.layers[k];
            let x = &cache.inputs[k];
            if let Some(g) = grads.as_mut() {
                let (dw, db) = &mut g.layers[k];
                param_grads(x, &dy, dw, db, layer.in_dim, layer.out_dim);
            }
            let mut dx = Mat::zeros(dy.rows, layer.in_dim);
            for i in 0..dy.rows {
                let dxi = dx.row_mut(i);
                for (o, &g) in dy.row(i).iter().enumerate() {
                    if g != F::zero() {
                        axpy(dxi, g, &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim]);
                    }
                }
            }
            if k > 0 {
                // x is the post-activation output of layer k-1.
                match self.activation {
                    Activation::Relu => {
                        for (d, a) in dx.data.iter_mut().zip(&x.data) {
                            if *a <= F::zero() {
                                *d = F::zero();
                            }
                        }
                    }
                    Activation::Tanh => {
                        for (d, a) in dx.data.iter_mut().zip(&x.data) {
                            *d *= F::one() - *a * *a;
                        }
                    }
                }
            }
            dy = dx;
        }
        Ok((grads, dy))
    }

    /// Named tensors `prefix.Lk.w` / `prefix.Lk.b` with their shapes.
    pub fn named_tensors(&self, prefix: &str) -> Vec<(String, Vec<usize>, &[F])> {
        let mut out = Vec::new();
        for (k, l) in self.layers.iter().enumerate() {
            out.push((format!("{prefix}.L{k}.w"), vec![l.out_dim, l.in_dim], l.w.as_slice()));
            out.push((format!("{prefix}.L{k}.b"), vec![l.out_dim], l.b.as_slice()));
        }
        out
    }
}

fn affine<F: Real>(layer: &Layer<F>, x: &Mat<F>) -> Mat<F> {
    let mut out = Mat::zeros(x.rows, layer.out_dim);
    for i in 0..x.rows {
        let xi = x.row(i);
        let oi = out.row_mut(i);
        for (o, v) in oi.iter_mut().enumerate() {
            *v = layer.b[o] + dot(&layer.w[o * layer.in_dim..(o + 1) * layer.in_dim], xi);
        }
    }
    out
}

fn accumulate<F: Real>(x: &Mat<F>, dy: &Mat<F>, rows: std::ops::Range<usize>, dw: &mut [F], db: &mut [F], in_dim: usize) {
    for i in rows {
        let xi = x.row(i);
        for (o, &g) in dy.row(i).iter().enumerate() {
            if g != F::zero() {
                db[o] += g;
                axpy(&mut dw[o * in_dim..(o + 1) * in_dim], g, xi);
            }
        }
    }
}

fn param_grads<F: Real>(x: &Mat<F>, dy: &Mat<F>, dw: &mut [F], db: &mut [F], in_dim: usize, out_dim: usize) {
    let threads = rayon::current_num_threads();
    if fp_mode() == FpMode::Fast && threads > 1 && x.rows >= 64 {
        let chunk = x.rows.div_ceil(threads);
        let partials: Vec<(Vec<F>, Vec<F>)> = (0..x.rows)
            .step_by(chunk)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|start| {
                let mut pw = vec![F::zero(); dw.len()];
                let mut pb = vec![F::zero(); out_dim];
                accumulate(x, dy, start..(start + chunk).min(x.rows), &mut pw, &mut pb, in_dim);
                (pw, pb)
            })
            .collect();
        for (pw, pb) in partials {
            axpy(dw, F::one(), &pw);
            axpy(db, F::one(), &pb);
        }
    } else {
        accumulate(x, dy, 0..x.rows, dw, db, in_dim);
    }
}

/// `target <- (1 - tau) * target + tau * online`, element-wise.
pub fn soft_update<F: Real>(target: &mut Mlp<F>, online: &Mlp<F>, tau: F) -> Result<()> {
    if !target.same_architecture(online) {
        return Err(LspcError::Shape("soft update between different architectures".into()));
    }
    if !(tau >= F::zero() && tau <= F::one()) {
        return Err(LspcError::Config(format!("tau {tau} outside [0, 1]")));
    }
    if tau == F::zero() {
        return Ok(());
    }
    if tau == F::one() {
        target.layers.clone_from(&online.layers);
        return Ok(());
    }
    let keep = F::one() - tau;
    for (t, o) in target.layers.iter_mut().zip(&online.layers) {
        for (a, b) in t.w.iter_mut().zip(&o.w) {
            *a = keep * *a + tau * *b;
        }
        for (a, b) in t.b.iter_mut().zip(&o.b) {
            *a = keep * *a + tau * *b;
        }
    }
    Ok(())
}
