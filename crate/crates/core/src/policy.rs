//! Cost-weighted CVAE policy (LSPC-S) and latent safety encoder (LSPC-O).

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::critics::CriticSet;
use crate::dataset::Batch;
use crate::nn::checkpoint::TensorStore;
use crate::nn::{log_prob_1d, Activation, GaussianBatch, Grads, Head, Mat, Mlp, Real};
use crate::rng::Rng;
use crate::{LspcError, Result};

/// How LSPC-S draws its restricted latent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentSampler {
    /// Standard-normal draw clipped to `[-eps, eps]`.
    #[default]
    Clip,
    /// Standard normal conditioned on `[-eps, eps]`, by rejection.
    TruncatedNormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    /// Latent restriction radius.
    pub epsilon: f64,
    /// Inverse temperature on the cost advantage.
    pub lambda: f64,
    /// Inverse temperature on the reward advantage.
    pub zeta: f64,
    pub kl_coef: f64,
    pub w_max: f64,
    /// Zero the cost weight when `Qc` or `Vc` exceeds this.
    pub c_zero_thresh: Option<f64>,
    pub sampler: LatentSampler,
    pub action_bound: f64,
}

impl Default for PolicyParams {
    fn default() -> Self {
        PolicyParams {
            epsilon: 0.25,
            lambda: 2.0,
            zeta: 2.0,
            kl_coef: 0.5,
            w_max: 200.0,
            c_zero_thresh: None,
            sampler: LatentSampler::Clip,
            action_bound: 1.0,
        }
    }
}

impl PolicyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) {
            return Err(LspcError::Config(format!("epsilon {} must be non-negative", self.epsilon)));
        }
        if !(self.lambda >= 0.0) || !(self.zeta >= 0.0) {
            return Err(LspcError::Config("inverse temperatures must be non-negative".into()));
        }
        if !(self.w_max > 0.0) || !(self.kl_coef >= 0.0) || !(self.action_bound > 0.0) {
            return Err(LspcError::Config("need w_max > 0, kl_coef >= 0, action_bound > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyKind {
    #[serde(rename = "lspc-s")]
    LspcS,
    #[serde(rename = "lspc-o")]
    LspcO,
    #[serde(rename = "cvae")]
    Cvae,
}

impl FromStr for PolicyKind {
    type Err = LspcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lspc-s" => Ok(PolicyKind::LspcS),
            "lspc-o" => Ok(PolicyKind::LspcO),
            "cvae" => Ok(PolicyKind::Cvae),
            other => Err(LspcError::Usage(format!("unknown policy {other:?}; expected lspc-s, lspc-o or cvae"))),
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::LspcS => "lspc-s",
            PolicyKind::LspcO => "lspc-o",
            PolicyKind::Cvae => "cvae",
        })
    }
}

/// `min(exp(-lambda * a_c), w_max)`, or zero when the optional threshold
/// is exceeded by either cost value.
pub fn cost_awr_weight(a_c: f64, lambda: f64, w_max: f64, thresh: Option<(f64, f64, f64)>) -> f64 {
    if let Some((t, qc, vc)) = thresh {
        if qc > t || vc > t {
            return 0.0;
        }
    }
    (-lambda * a_c).exp().min(w_max)
}

/// `min(exp(zeta * a_r), w_max)`
pub fn reward_awr_weight(a_r: f64, zeta: f64, w_max: f64) -> f64 {
    (zeta * a_r).exp().min(w_max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyBundle<F> {
    /// `(s, a) -> N(z)`
    pub cvae_enc: Mlp<F>,
    /// `(s, z) -> N(a)`
    pub cvae_dec: Mlp<F>,
    /// `s -> N(raw z)`; its mean is squashed by `eps * tanh`.
    pub lat_enc: Mlp<F>,
    pub d_z: usize,
    pub params: PolicyParams,
}

#[derive(Debug, Clone)]
pub struct AwrWeights<F> {
    pub cost: Vec<F>,
    pub reward: Vec<F>,
}

#[derive(Debug, Clone)]
pub struct CvaeLoss<F> {
    pub loss: f64,
    pub enc_grads: Grads<F>,
    pub dec_grads: Grads<F>,
    pub mean_weight: f64,
}

#[derive(Debug, Clone)]
pub struct EncoderLoss<F> {
    pub loss: f64,
    pub grads: Grads<F>,
    pub mean_weight: f64,
}

/// One row of an action scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub ax: f64,
    pub ay: f64,
    pub q: f64,
    pub source: String,
}

fn check_finite<F: Real>(xs: &[F], what: &str) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(LspcError::numeric(what))
    }
}

/// `d/d mean` and `d/d log_std` of `-c * log N(a; mean, sigma)`, per element.
fn neg_log_prob_grads<F: Real>(g: &GaussianBatch<F>, a: &Mat<F>, coef: &[F]) -> (Mat<F>, Mat<F>) {
    let mut dm = Mat::zeros(a.rows, a.cols);
    let mut dl = Mat::zeros(a.rows, a.cols);
    for i in 0..a.rows {
        for j in 0..a.cols {
            let k = i * a.cols + j;
            let inv_var = (F::lit(-2.0) * g.log_std.data[k]).exp();
            let diff = a.data[k] - g.mean.data[k];
            dm.data[k] = -coef[i] * diff * inv_var;
            dl.data[k] = -coef[i] * (diff * diff * inv_var - F::one());
        }
    }
    (dm, dl)
}

fn row_log_probs<F: Real>(g: &GaussianBatch<F>, a: &Mat<F>) -> Vec<F> {
    (0..a.rows)
        .map(|i| {
            (0..a.cols)
                .map(|j| {
                    let k = i * a.cols + j;
                    log_prob_1d(g.mean.data[k], g.log_std.data[k], a.data[k])
                })
                .fold(F::zero(), |x, y| x + y)
        })
        .collect()
}

pub fn standard_normal_mat<F: Real>(rows: usize, cols: usize, rng: &mut Rng) -> Mat<F> {
    Mat {
        rows,
        cols,
        data: (0..rows * cols).map(|_| F::lit(rng.sample::<f64, _>(StandardNormal))).collect(),
    }
}

impl<F: Real> PolicyBundle<F> {
    pub fn new<R: rand::Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        d_z: usize,
        hidden: &[usize],
        params: PolicyParams,
        rng: &mut R,
    ) -> Result<Self> {
        params.validate()?;
        if d_z == 0 {
            return Err(LspcError::Config("latent dimension must be positive".into()));
        }
        let sizes = |input: usize, out: usize| {
            let mut s = vec![input];
            s.extend_from_slice(hidden);
            s.push(2 * out);
            s
        };
        let cvae_enc = Mlp::new(&sizes(state_dim + action_dim, d_z), Activation::Relu, Head::Gaussian, rng)?;
        let cvae_dec = Mlp::new(&sizes(state_dim + d_z, action_dim), Activation::Relu, Head::Gaussian, rng)?;
        let lat_enc = Mlp::new(&sizes(state_dim, d_z), Activation::Relu, Head::Gaussian, rng)?;
        Ok(PolicyBundle { cvae_enc, cvae_dec, lat_enc, d_z, params })
    }

    pub fn state_dim(&self) -> usize {
        self.lat_enc.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.cvae_dec.output_dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let (s, z) = (self.state_dim(), self.d_z);
        let a = self.action_dim();
        let ok = self.cvae_enc.input_dim() == s + a
            && self.cvae_enc.output_dim() == z
            && self.cvae_dec.input_dim() == s + z
            && self.lat_enc.output_dim() == z
            && [&self.cvae_enc, &self.cvae_dec, &self.lat_enc].iter().all(|n| n.head() == Head::Gaussian);
        if !ok {
            return Err(LspcError::Shape("policy networks disagree on state, action or latent width".into()));
        }
        Ok(())
    }

    /// Cost and reward AWR weights of the batch's data actions.
    pub fn awr_weights(&self, critics: &CriticSet<F>, batch: &Batch<F>) -> Result<AwrWeights<F>> {
        let adv = critics.advantages(&batch.states, &batch.actions)?;
        let p = &self.params;
        let n = batch.len();
        let cost: Vec<F> = (0..n)
            .map(|i| {
                let thresh = p.c_zero_thresh.map(|t| (t, adv.q_cost[i].as_f64(), adv.v_cost[i].as_f64()));
                F::lit(cost_awr_weight(adv.cost[i].as_f64(), p.lambda, p.w_max, thresh))
            })
            .collect();
        check_finite(&cost, "cost awr weight")?;
        let reward: Vec<F> = (0..n).map(|i| F::lit(reward_awr_weight(adv.reward[i].as_f64(), p.zeta, p.w_max))).collect();
        check_finite(&reward, "reward awr weight")?;
        Ok(AwrWeights { cost, reward })
    }

    /// Cost-advantage-weighted negative ELBO with one reparameterized latent
    /// per sample. `noise` is `n x d_z` standard normal.
    pub fn cvae_loss_with_noise(&self, critics: &CriticSet<F>, batch: &Batch<F>, noise: &Mat<F>) -> Result<CvaeLoss<F>> {
        let w = self.awr_weights(critics, batch)?;
        self.weighted_elbo(batch, noise, &w.cost)
    }

    pub fn cvae_loss(&self, critics: &CriticSet<F>, batch: &Batch<F>, rng: &mut Rng) -> Result<CvaeLoss<F>> {
        let noise = standard_normal_mat(batch.len(), self.d_z, rng);
        self.cvae_loss_with_noise(critics, batch, &noise)
    }

    /// Negative ELBO with explicit per-sample weights.
    pub fn weighted_elbo(&self, batch: &Batch<F>, noise: &Mat<F>, w: &[F]) -> Result<CvaeLoss<F>> {
        let n = batch.len();
        if n == 0 {
            return Err(LspcError::Config("empty batch".into()));
        }
        if noise.rows != n || noise.cols != self.d_z || w.len() != n {
            return Err(LspcError::Shape("noise or weights do not match the batch".into()));
        }
        let nf = F::lit(n as f64);
        let k = F::lit(self.params.kl_coef);
        let half = F::lit(0.5);

        let (enc_raw, enc_cache) = self.cvae_enc.forward_batch(&Mat::hcat(&batch.states, &batch.actions)?)?;
        let enc = GaussianBatch::from_raw(&enc_raw);
        let sigma_e: Vec<F> = enc.log_std.data.iter().map(|l| l.exp()).collect();
        let mut z = enc.mean.clone();
        for (j, zj) in z.data.iter_mut().enumerate() {
            *zj += sigma_e[j] * noise.data[j];
        }
        let (dec_raw, dec_cache) = self.cvae_dec.forward_batch(&Mat::hcat(&batch.states, &z)?)?;
        let dec = GaussianBatch::from_raw(&dec_raw);

        let log_p = row_log_probs(&dec, &batch.actions);
        check_finite(&log_p, "cvae reconstruction log-prob")?;
        let kl: Vec<F> = (0..n)
            .map(|i| {
                (0..self.d_z)
                    .map(|j| {
                        let q = i * self.d_z + j;
                        let (m, l) = (enc.mean.data[q], enc.log_std.data[q]);
                        half * (m * m + sigma_e[q] * sigma_e[q] - F::one()) - l
                    })
                    .fold(F::zero(), |a, b| a + b)
            })
            .collect();
        check_finite(&kl, "cvae kl term")?;
        let loss = (0..n).map(|i| -w[i] * (log_p[i] - k * kl[i])).fold(F::zero(), |a, b| a + b) / nf;
        let loss = loss.as_f64();
        if !loss.is_finite() {
            return Err(LspcError::numeric("cvae loss"));
        }

        let coef: Vec<F> = w.iter().map(|wi| *wi / nf).collect();
        let (dm, dl) = neg_log_prob_grads(&dec, &batch.actions, &coef);
        let (dec_grads, dx) = self.cvae_dec.backward(&dec_cache, &dec.raw_grad(&dm, &dl))?;
        let s_dim = batch.states.cols;
        let mut d_mean = Mat::zeros(n, self.d_z);
        let mut d_log_std = Mat::zeros(n, self.d_z);
        for i in 0..n {
            for j in 0..self.d_z {
                let q = i * self.d_z + j;
                let dz = dx.get(i, s_dim + j);
                let ck = coef[i] * k;
                d_mean.data[q] = dz + ck * enc.mean.data[q];
                d_log_std.data[q] = dz * sigma_e[q] * noise.data[q] + ck * (sigma_e[q] * sigma_e[q] - F::one());
            }
        }
        let (enc_grads, _) = self.cvae_enc.backward(&enc_cache, &enc.raw_grad(&d_mean, &d_log_std))?;
        let mean_weight = w.iter().map(|x| x.as_f64()).sum::<f64>() / n as f64;
        Ok(CvaeLoss { loss, enc_grads, dec_grads, mean_weight })
    }

    /// Reward-weighted decoder likelihood of the data action at the latent
    /// `eps * tanh(mean + sigma * noise)` from `lat_enc`. Gradients flow
    /// through the frozen decoder into `lat_enc` only.
    pub fn encoder_loss_for(
        &self,
        lat_enc: &Mlp<F>,
        epsilon: f64,
        critics: &CriticSet<F>,
        batch: &Batch<F>,
        noise: &Mat<F>,
    ) -> Result<EncoderLoss<F>> {
        let n = batch.len();
        if n == 0 {
            return Err(LspcError::Config("empty batch".into()));
        }
        if noise.rows != n || noise.cols != self.d_z {
            return Err(LspcError::Shape("noise does not match the batch".into()));
        }
        let w = self.awr_weights(critics, batch)?;
        self.weighted_encoder_loss(lat_enc, epsilon, batch, noise, &w.reward)
    }

    /// Encoder loss with explicit per-sample weights.
    pub fn weighted_encoder_loss(
        &self,
        lat_enc: &Mlp<F>,
        epsilon: f64,
        batch: &Batch<F>,
        noise: &Mat<F>,
        w: &[F],
    ) -> Result<EncoderLoss<F>> {
        let n = batch.len();
        if n == 0 {
            return Err(LspcError::Config("empty batch".into()));
        }
        if noise.rows != n || noise.cols != self.d_z || w.len() != n {
            return Err(LspcError::Shape("noise or weights do not match the batch".into()));
        }
        let nf = F::lit(n as f64);
        let eps = F::lit(epsilon);
        let (raw, cache) = lat_enc.forward_batch(&batch.states)?;
        let head = GaussianBatch::from_raw(&raw);
        let sigma: Vec<F> = head.log_std.data.iter().map(|l| l.exp()).collect();
        let th: Vec<F> = (0..n * self.d_z)
            .map(|q| (head.mean.data[q] + sigma[q] * noise.data[q]).tanh())
            .collect();
        let z = Mat { rows: n, cols: self.d_z, data: th.iter().map(|t| eps * *t).collect() };
        let (dec_raw, dec_cache) = self.cvae_dec.forward_batch(&Mat::hcat(&batch.states, &z)?)?;
        let dec = GaussianBatch::from_raw(&dec_raw);
        let log_p = row_log_probs(&dec, &batch.actions);
        check_finite(&log_p, "encoder decoder log-prob")?;
        let loss = (0..n).map(|i| -w[i] * log_p[i]).fold(F::zero(), |a, b| a + b) / nf;
        let loss = loss.as_f64();
        if !loss.is_finite() {
            return Err(LspcError::numeric("encoder loss"));
        }
        let coef: Vec<F> = w.iter().map(|wi| *wi / nf).collect();
        let (dm, dl) = neg_log_prob_grads(&dec, &batch.actions, &coef);
        let dx = self.cvae_dec.backward_input(&dec_cache, &dec.raw_grad(&dm, &dl))?;
        let s_dim = batch.states.cols;
        let mut d_mean = Mat::zeros(n, self.d_z);
        let mut d_log_std = Mat::zeros(n, self.d_z);
        for i in 0..n {
            for j in 0..self.d_z {
                let q = i * self.d_z + j;
                let du = dx.get(i, s_dim + j) * eps * (F::one() - th[q] * th[q]);
                d_mean.data[q] = du;
                d_log_std.data[q] = du * sigma[q] * noise.data[q];
            }
        }
        let (grads, _) = lat_enc.backward(&cache, &head.raw_grad(&d_mean, &d_log_std))?;
        let mean_weight = w.iter().map(|x| x.as_f64()).sum::<f64>() / n as f64;
        Ok(EncoderLoss { loss, grads, mean_weight })
    }

    pub fn encoder_loss_with_noise(&self, critics: &CriticSet<F>, batch: &Batch<F>, noise: &Mat<F>) -> Result<EncoderLoss<F>> {
        self.encoder_loss_for(&self.lat_enc, self.params.epsilon, critics, batch, noise)
    }

    pub fn encoder_loss(&self, critics: &CriticSet<F>, batch: &Batch<F>, rng: &mut Rng) -> Result<EncoderLoss<F>> {
        let noise = standard_normal_mat(batch.len(), self.d_z, rng);
        self.encoder_loss_with_noise(critics, batch, &noise)
    }

    fn check_state(&self, s: &[f64]) -> Result<Vec<F>> {
        if s.len() != self.state_dim() {
            return Err(LspcError::Shape(format!("policy expects {}-d states, got {}", self.state_dim(), s.len())));
        }
        Ok(s.iter().map(|x| F::lit(*x)).collect())
    }

    /// Decoder mean at `(s, z)`, clipped to the action box.
    pub fn decode(&self, s: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.check_state(s)?;
        if z.len() != self.d_z {
            return Err(LspcError::Shape(format!("latent must have {} dims", self.d_z)));
        }
        x.extend(z.iter().map(|v| F::lit(*v)));
        let out = self.cvae_dec.forward(&x)?;
        let b = self.params.action_bound;
        Ok(out[..self.action_dim()].iter().map(|v| v.as_f64().clamp(-b, b)).collect())
    }

    /// Restricted prior draw used by LSPC-S.
    pub fn restricted_latent(&self, rng: &mut Rng) -> Vec<f64> {
        let eps = self.params.epsilon;
        (0..self.d_z)
            .map(|_| match self.params.sampler {
                LatentSampler::Clip => rng.sample::<f64, _>(StandardNormal).clamp(-eps, eps),
                LatentSampler::TruncatedNormal => {
                    if eps <= 0.0 {
                        return 0.0;
                    }
                    for _ in 0..10_000 {
                        let x: f64 = rng.sample(StandardNormal);
                        if x.abs() <= eps {
                            return x;
                        }
                    }
                    // Nearly flat density on a tiny box.
                    rng.random_range(-eps..=eps)
                }
            })
            .collect()
    }

    pub fn lspc_o_latent_for(&self, lat_enc: &Mlp<F>, epsilon: f64, s: &[f64]) -> Result<Vec<f64>> {
        let x = self.check_state(s)?;
        let out = lat_enc.forward(&x)?;
        Ok(out[..self.d_z].iter().map(|r| epsilon * r.as_f64().tanh()).collect())
    }

    pub fn act_lspc_s(&self, s: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        let z = self.restricted_latent(rng);
        self.decode(s, &z)
    }

    pub fn act_lspc_o(&self, s: &[f64]) -> Result<Vec<f64>> {
        let z = self.lspc_o_latent_for(&self.lat_enc, self.params.epsilon, s)?;
        self.decode(s, &z)
    }

    pub fn act_cvae(&self, s: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        let z: Vec<f64> = (0..self.d_z).map(|_| rng.sample(StandardNormal)).collect();
        self.decode(s, &z)
    }

    pub fn act(&self, kind: PolicyKind, s: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        if s.iter().any(|x| !x.is_finite()) {
            return Err(LspcError::Shape("state contains a non-finite value".into()));
        }
        match kind {
            PolicyKind::LspcS => self.act_lspc_s(s, rng),
            PolicyKind::LspcO => self.act_lspc_o(s),
            PolicyKind::Cvae => self.act_cvae(s, rng),
        }
    }

    /// `n_samples` CVAE and LSPC-S actions plus the LSPC-O action, each with
    /// `min(Q1, Q2)`. Requires a 2-d action space.
    pub fn action_scan(&self, critics: &CriticSet<F>, s: &[f64], n_samples: usize, rng: &mut Rng) -> Result<Vec<ScanPoint>> {
        if self.action_dim() != 2 {
            return Err(LspcError::Shape("action scan needs a 2-d action space".into()));
        }
        let mut actions = Vec::with_capacity(2 * n_samples + 1);
        for _ in 0..n_samples {
            actions.push((self.act_cvae(s, rng)?, "cvae"));
        }
        for _ in 0..n_samples {
            actions.push((self.act_lspc_s(s, rng)?, "lspc_s"));
        }
        actions.push((self.act_lspc_o(s)?, "lspc_o"));
        let x = self.check_state(s)?;
        let states = Mat { rows: actions.len(), cols: x.len(), data: actions.iter().flat_map(|_| x.iter().copied()).collect() };
        let acts = Mat {
            rows: actions.len(),
            cols: 2,
            data: actions.iter().flat_map(|(a, _)| a.iter().map(|v| F::lit(*v))).collect(),
        };
        let q = critics.q_reward(&states, &acts)?;
        Ok(actions
            .into_iter()
            .zip(q)
            .map(|((a, src), q)| ScanPoint { ax: a[0], ay: a[1], q: q.as_f64(), source: src.into() })
            .collect())
    }

    pub fn store(&self, store: &mut TensorStore) -> Result<()> {
        store.insert_net("cvae_enc", &self.cvae_enc)?;
        store.insert_net("cvae_dec", &self.cvae_dec)?;
        store.insert_net("lat_enc", &self.lat_enc)
    }

    pub fn restore(store: &TensorStore, d_z: usize, params: PolicyParams) -> Result<Self> {
        let get = |name: &str| store.get_net::<F>(name, Activation::Relu, Head::Gaussian);
        let b = PolicyBundle { cvae_enc: get("cvae_enc")?, cvae_dec: get("cvae_dec")?, lat_enc: get("lat_enc")?, d_z, params };
        b.validate()?;
        Ok(b)
    }

    pub fn cast<G: Real>(&self) -> PolicyBundle<G> {
        PolicyBundle {
            cvae_enc: self.cvae_enc.cast(),
            cvae_dec: self.cvae_dec.cast(),
            lat_enc: self.lat_enc.cast(),
            d_z: self.d_z,
            params: self.params,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critics::CriticParams;
    use crate::dataset::OfflineDataset;
    use crate::rng;

    fn setup(params: PolicyParams) -> (PolicyBundle<f64>, CriticSet<f64>, Batch<f64>) {
        let mut r = rng::stream(3, "p", 0);
        let b = PolicyBundle::new(2, 2, 2, &[8], params, &mut r).unwrap();
        let cs = CriticSet::new(2, 2, &[8], Activation::Relu, CriticParams::default(), &mut r).unwrap();
        let mut ds = OfflineDataset::empty(2, 2);
        for i in 0..6 {
            let x = i as f64 * 0.1;
            ds.push(&[x, -x], &[0.05 * x, 0.1], x, 0.0, &[x, x], i == 5);
        }
        let batch = ds.gather(&[0, 1, 2, 3, 4, 5]);
        (b, cs, batch)
    }

    #[test]
    fn weight_rules() {
        assert_eq!(cost_awr_weight(5.0, 0.0, 200.0, None), 1.0);
        assert_eq!(cost_awr_weight(-(200f64.ln()) / 2.0 - 1e-9, 2.0, 200.0, None), 200.0);
        assert_eq!(cost_awr_weight(-1.0, 2.0, 200.0, Some((0.02, 0.05, 0.0))), 0.0);
        assert_eq!(cost_awr_weight(0.0, 2.0, 200.0, Some((0.02, 0.01, 0.0))), 1.0);
    }

    #[test]
    fn zero_weights_give_zero_loss_and_grads() {
        let (b, _, batch) = setup(PolicyParams::default());
        let noise = standard_normal_mat(6, 2, &mut rng::stream(1, "n", 0));
        let out = b.weighted_elbo(&batch, &noise, &[0.0; 6]).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.enc_grads.is_zero() && out.dec_grads.is_zero());
    }

    #[test]
    fn lambda_zero_is_plain_elbo() {
        let (b, cs, batch) = setup(PolicyParams { lambda: 0.0, ..Default::default() });
        let noise = standard_normal_mat(6, 2, &mut rng::stream(1, "n", 0));
        let weighted = b.cvae_loss_with_noise(&cs, &batch, &noise).unwrap();
        let plain = b.weighted_elbo(&batch, &noise, &[1.0; 6]).unwrap();
        assert_eq!(weighted.loss.to_bits(), plain.loss.to_bits());
        assert_eq!(weighted.enc_grads.flat(), plain.enc_grads.flat());
    }

    #[test]
    fn latent_containment() {
        let (b, _, _) = setup(PolicyParams { epsilon: 0.3, ..Default::default() });
        let mut r = rng::stream(0, "z", 0);
        for _ in 0..1000 {
            assert!(b.restricted_latent(&mut r).iter().all(|z| z.abs() <= 0.3));
        }
        let tb = PolicyBundle { params: PolicyParams { sampler: LatentSampler::TruncatedNormal, ..b.params }, ..b.clone() };
        for _ in 0..1000 {
            assert!(tb.restricted_latent(&mut r).iter().all(|z| z.abs() <= 0.3));
        }
        let z = b.lspc_o_latent_for(&b.lat_enc, 0.3, &[5.0, -5.0]).unwrap();
        assert!(z.iter().all(|v| v.abs() < 0.3));
    }

    #[test]
    fn zero_epsilon_is_prior_mode() {
        let (b, _, _) = setup(PolicyParams { epsilon: 0.0, ..Default::default() });
        let s = [0.2, 0.4];
        let mode = b.decode(&s, &[0.0, 0.0]).unwrap();
        assert_eq!(b.act_lspc_s(&s, &mut rng::stream(0, "a", 0)).unwrap(), mode);
        assert_eq!(b.act_lspc_o(&s).unwrap(), mode);
    }

    #[test]
    fn infinite_epsilon_matches_cvae() {
        let (b, _, _) = setup(PolicyParams { epsilon: f64::INFINITY, ..Default::default() });
        let s = [0.2, 0.4];
        let a = b.act_lspc_s(&s, &mut rng::stream(0, "a", 7)).unwrap();
        let c = b.act_cvae(&s, &mut rng::stream(0, "a", 7)).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn encoder_step_leaves_decoder_untouched() {
        let (mut b, cs, batch) = setup(PolicyParams::default());
        let before = (b.cvae_enc.clone(), b.cvae_dec.clone());
        let out = b.encoder_loss(&cs, &batch, &mut rng::stream(0, "e", 0)).unwrap();
        let mut opt = crate::nn::AdamState::new(&b.lat_enc);
        opt.step(&mut b.lat_enc, &out.grads, 1e-3).unwrap();
        assert_eq!((b.cvae_enc.clone(), b.cvae_dec.clone()), before);
    }

    #[test]
    fn scan_shape() {
        let (b, cs, _) = setup(PolicyParams::default());
        let mut r = rng::stream(0, "s", 0);
        assert_eq!(b.action_scan(&cs, &[0.0, 0.0], 0, &mut r).unwrap().len(), 1);
        let pts = b.action_scan(&cs, &[0.0, 0.0], 5, &mut r).unwrap();
        assert_eq!(pts.len(), 11);
        assert!(pts.iter().all(|p| p.ax.abs() <= 1.0 && p.ay.abs() <= 1.0));
        assert_eq!(pts[10].source, "lspc_o");
    }
}
