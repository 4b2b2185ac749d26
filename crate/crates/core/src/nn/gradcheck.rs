//! Central finite-difference checks of every training loss.
//!
//! All checks run in `f64` on small nets (hidden width 8, 2-d states,
//! actions and latents). Batch rows that sit within `KINK_MARGIN` of a
//! non-differentiable point (relu pre-activation at zero, expectile
//! residual at zero, log-std clamp boundary) are dropped before checking
//! and reported as skipped.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Activation, GaussianBatch, Grads, Mat, Mlp};
use crate::critics::{CriticParams, CriticSet};
use crate::dataset::{Batch, OfflineDataset};
use crate::policy::{standard_normal_mat, PolicyBundle, PolicyParams};
use crate::rng;
use crate::Result;

pub const STEP: f64 = 1e-5;
pub const KINK_MARGIN: f64 = 1e-3;
pub const TOLERANCE: f64 = 1e-4;
const BATCH_ROWS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckEntry {
    pub loss: String,
    pub network: String,
    pub seed: u64,
    pub params_checked: usize,
    pub rows_used: usize,
    pub rows_skipped: usize,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub step: f64,
    pub tolerance: f64,
    pub entries: Vec<GradCheckEntry>,
    pub max_rel_err: f64,
    pub passed: bool,
}

/// `|a - n| / max(|a|, |n|, 1e-4)`
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

/// Largest relative error between `analytic` and central differences of
/// `eval` around `net`.
pub fn compare(net: &Mlp<f64>, analytic: &Grads<f64>, eval: impl Fn(&Mlp<f64>) -> Result<f64>) -> Result<f64> {
    let flat = analytic.flat();
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    for (p, &g) in flat.iter().enumerate() {
        let x = net.param(p);
        probe.set_param(p, x + STEP);
        let up = eval(&probe)?;
        probe.set_param(p, x - STEP);
        let down = eval(&probe)?;
        probe.set_param(p, x);
        worst = worst.max(rel_err(g, (up - down) / (2.0 * STEP)));
    }
    Ok(worst)
}

/// Smallest absolute relu pre-activation over all hidden layers.
pub fn relu_margin(net: &Mlp<f64>, x: &[f64]) -> f64 {
    if net.activation() != Activation::Relu {
        return f64::INFINITY;
    }
    let layers = net.layers();
    let mut cur = x.to_vec();
    let mut margin = f64::INFINITY;
    for l in &layers[..layers.len() - 1] {
        let pre: Vec<f64> = (0..l.out_dim)
            .map(|o| l.b[o] + l.w[o * l.in_dim..(o + 1) * l.in_dim].iter().zip(&cur).map(|(w, v)| w * v).sum::<f64>())
            .collect();
        margin = pre.iter().fold(margin, |m, v| m.min(v.abs()));
        cur = pre.into_iter().map(|v| v.max(0.0)).collect();
    }
    margin
}

fn random_batch(seed: u64) -> Batch<f64> {
    let mut r = rng::stream(seed, "gradcheck-data", 0);
    let mut ds = OfflineDataset::empty(2, 2);
    for i in 0..BATCH_ROWS {
        let mut u = || r.random_range(-1.0f64..1.0);
        let (s, a, s2) = ([u(), u()], [u(), u()], [u(), u()]);
        let rew = u();
        let cost = u().abs();
        ds.push(&s, &a, rew, cost, &s2, i % 3 == 2 || i + 1 == BATCH_ROWS);
    }
    ds.gather(&(0..BATCH_ROWS).collect::<Vec<_>>())
}

fn perturbed_targets(cs: &mut CriticSet<f64>, seed: u64) {
    let mut r = rng::stream(seed, "gradcheck-targets", 0);
    for net in [&mut cs.q1_target, &mut cs.q2_target, &mut cs.qc1_target, &mut cs.qc2_target] {
        for p in 0..net.param_count() {
            let v = net.param(p) + 0.3 * r.sample::<f64, _>(StandardNormal);
            net.set_param(p, v);
        }
    }
}

struct Case<'a> {
    seed: u64,
    entries: &'a mut Vec<GradCheckEntry>,
}

impl Case<'_> {
    fn record(&mut self, loss: &str, network: &str, params: usize, used: usize, err: f64) {
        self.entries.push(GradCheckEntry {
            loss: loss.into(),
            network: network.into(),
            seed: self.seed,
            params_checked: params,
            rows_used: used,
            rows_skipped: BATCH_ROWS - used,
            max_rel_err: err,
        });
    }
}

fn keep_rows(batch: &Batch<f64>, keep: impl Fn(usize) -> bool) -> Batch<f64> {
    let rows: Vec<usize> = (0..batch.len()).filter(|&i| keep(i)).collect();
    Batch {
        indices: rows.iter().map(|&i| batch.indices[i]).collect(),
        states: batch.states.select_rows(&rows),
        actions: batch.actions.select_rows(&rows),
        rewards: rows.iter().map(|&i| batch.rewards[i]).collect(),
        costs: rows.iter().map(|&i| batch.costs[i]).collect(),
        next_states: batch.next_states.select_rows(&rows),
        dones: rows.iter().map(|&i| batch.dones[i]).collect(),
    }
}

fn sa_row(batch: &Batch<f64>, i: usize) -> Vec<f64> {
    [batch.states.row(i), batch.actions.row(i)].concat()
}

fn check_critics(cs: &CriticSet<f64>, batch: &Batch<f64>, case: &mut Case) -> Result<()> {
    // reward value loss
    let b = keep_rows(batch, |i| {
        let sa = sa_row(batch, i);
        let t = cs.q1_target.forward(&sa).unwrap()[0].min(cs.q2_target.forward(&sa).unwrap()[0]);
        let v = cs.v.forward(batch.states.row(i)).unwrap()[0];
        relu_margin(&cs.v, batch.states.row(i)) > KINK_MARGIN && (t - v).abs() > KINK_MARGIN
    });
    if !b.is_empty() {
        let g = cs.reward_value_loss(&b)?;
        let err = compare(&cs.v, &g.grads[0], |net| {
            let mut c = cs.clone();
            c.v = net.clone();
            Ok(c.reward_value_loss(&b)?.loss)
        })?;
        case.record("reward_value", "v", cs.v.param_count(), b.len(), err);
    }

    let b = keep_rows(batch, |i| {
        let sa = sa_row(batch, i);
        let t = cs.qc1_target.forward(&sa).unwrap()[0].max(cs.qc2_target.forward(&sa).unwrap()[0]);
        let v = cs.vc.forward(batch.states.row(i)).unwrap()[0];
        relu_margin(&cs.vc, batch.states.row(i)) > KINK_MARGIN && (t - v).abs() > KINK_MARGIN
    });
    if !b.is_empty() {
        let g = cs.cost_value_loss(&b)?;
        let err = compare(&cs.vc, &g.grads[0], |net| {
            let mut c = cs.clone();
            c.vc = net.clone();
            Ok(c.cost_value_loss(&b)?.loss)
        })?;
        case.record("cost_value", "vc", cs.vc.param_count(), b.len(), err);
    }

    for cost in [false, true] {
        let b = keep_rows(batch, |i| {
            let sa = sa_row(batch, i);
            let (a, c) = if cost { (&cs.qc1, &cs.qc2) } else { (&cs.q1, &cs.q2) };
            relu_margin(a, &sa) > KINK_MARGIN && relu_margin(c, &sa) > KINK_MARGIN
        });
        if b.is_empty() {
            continue;
        }
        let g = if cost { cs.cost_q_loss(&b)? } else { cs.reward_q_loss(&b)? };
        for k in 0..2 {
            let eval = |net: &Mlp<f64>| {
                let mut c = cs.clone();
                match (cost, k) {
                    (false, 0) => c.q1 = net.clone(),
                    (false, _) => c.q2 = net.clone(),
                    (true, 0) => c.qc1 = net.clone(),
                    (true, _) => c.qc2 = net.clone(),
                }
                Ok(if cost { c.cost_q_loss(&b)?.loss } else { c.reward_q_loss(&b)?.loss })
            };
            let net = match (cost, k) {
                (false, 0) => &cs.q1,
                (false, _) => &cs.q2,
                (true, 0) => &cs.qc1,
                (true, _) => &cs.qc2,
            };
            let err = compare(net, &g.grads[k], eval)?;
            let (loss, name) = if cost { ("cost_q", ["qc1", "qc2"][k]) } else { ("reward_q", ["q1", "q2"][k]) };
            case.record(loss, name, net.param_count(), b.len(), err);
        }
    }
    Ok(())
}

fn gaussian_row_ok(net: &Mlp<f64>, x: &[f64]) -> bool {
    let raw = net.predict_batch(&Mat::from_vec(1, x.len(), x.to_vec()).unwrap()).unwrap();
    relu_margin(net, x) > KINK_MARGIN && GaussianBatch::from_raw(&raw).clamp_margin(0) > KINK_MARGIN
}

fn check_policy(pb: &PolicyBundle<f64>, cs: &CriticSet<f64>, batch: &Batch<f64>, seed: u64, case: &mut Case) -> Result<()> {
    let dz = pb.d_z;
    let noise = standard_normal_mat::<f64>(batch.len(), dz, &mut rng::stream(seed, "gradcheck-noise", 0));

    // cvae: encoder at (s, a), decoder at (s, z)
    let keep: Vec<bool> = (0..batch.len())
        .map(|i| {
            let sa = sa_row(batch, i);
            let e = pb.cvae_enc.forward(&sa).unwrap();
            let z: Vec<f64> = (0..dz).map(|j| e[j] + e[dz + j].exp() * noise.get(i, j)).collect();
            let sz = [batch.states.row(i), &z[..]].concat();
            gaussian_row_ok(&pb.cvae_enc, &sa) && gaussian_row_ok(&pb.cvae_dec, &sz)
        })
        .collect();
    let b = keep_rows(batch, |i| keep[i]);
    let rows: Vec<usize> = (0..batch.len()).filter(|&i| keep[i]).collect();
    let nz = noise.select_rows(&rows);
    if !b.is_empty() {
        let g = pb.cvae_loss_with_noise(cs, &b, &nz)?;
        let err = compare(&pb.cvae_enc, &g.enc_grads, |net| {
            let mut p = pb.clone();
            p.cvae_enc = net.clone();
            Ok(p.cvae_loss_with_noise(cs, &b, &nz)?.loss)
        })?;
        case.record("cvae", "cvae_enc", pb.cvae_enc.param_count(), b.len(), err);
        let err = compare(&pb.cvae_dec, &g.dec_grads, |net| {
            let mut p = pb.clone();
            p.cvae_dec = net.clone();
            Ok(p.cvae_loss_with_noise(cs, &b, &nz)?.loss)
        })?;
        case.record("cvae", "cvae_dec", pb.cvae_dec.param_count(), b.len(), err);
    }

    // encoder: latent encoder at s, decoder at (s, eps * tanh(.))
    let eps = pb.params.epsilon;
    let keep: Vec<bool> = (0..batch.len())
        .map(|i| {
            let s = batch.states.row(i);
            let e = pb.lat_enc.forward(s).unwrap();
            let z: Vec<f64> = (0..dz).map(|j| eps * (e[j] + e[dz + j].exp() * noise.get(i, j)).tanh()).collect();
            let sz = [s, &z[..]].concat();
            gaussian_row_ok(&pb.lat_enc, s) && gaussian_row_ok(&pb.cvae_dec, &sz)
        })
        .collect();
    let b = keep_rows(batch, |i| keep[i]);
    let rows: Vec<usize> = (0..batch.len()).filter(|&i| keep[i]).collect();
    let nz = noise.select_rows(&rows);
    if !b.is_empty() {
        let g = pb.encoder_loss_with_noise(cs, &b, &nz)?;
        let err = compare(&pb.lat_enc, &g.grads, |net| {
            let mut p = pb.clone();
            p.lat_enc = net.clone();
            Ok(p.encoder_loss_with_noise(cs, &b, &nz)?.loss)
        })?;
        case.record("encoder", "lat_enc", pb.lat_enc.param_count(), b.len(), err);
    }
    Ok(())
}

/// Runs every loss check for seeds `0..seeds`.
pub fn run(seeds: u64) -> Result<GradCheckReport> {
    let mut entries = Vec::new();
    for seed in 0..seeds {
        let mut r = rng::stream(seed, "gradcheck-init", 0);
        let mut cs = CriticSet::<f64>::new(2, 2, &[8], Activation::Relu, CriticParams::default(), &mut r)?;
        perturbed_targets(&mut cs, seed);
        // Moderate temperatures keep the weights away from the clip.
        let params = PolicyParams { epsilon: 0.8, lambda: 0.5, zeta: 0.5, ..Default::default() };
        let pb = PolicyBundle::<f64>::new(2, 2, 2, &[8], params, &mut r)?;
        let batch = random_batch(seed);
        let mut case = Case { seed, entries: &mut entries };
        check_critics(&cs, &batch, &mut case)?;
        check_policy(&pb, &cs, &batch, seed, &mut case)?;
    }
    let max_rel_err = entries.iter().map(|e| e.max_rel_err).fold(0.0, f64::max);
    Ok(GradCheckReport { step: STEP, tolerance: TOLERANCE, passed: max_rel_err < TOLERANCE && !entries.is_empty(), entries, max_rel_err })
}
