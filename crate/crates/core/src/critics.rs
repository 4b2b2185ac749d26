//! IQL reward and cost critics.
//!
//! The reward pathway reduces its double-Q ensemble with `min`, the cost
//! pathway with `max`. Value networks are fit by expectile regression
//! against the target ensembles; Q networks regress onto one-step TD
//! targets that bootstrap from the online value networks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Batch;
use crate::nn::checkpoint::TensorStore;
use crate::nn::{expectile_grad, expectile_loss, soft_update, Activation, Grads, Head, Mat, Mlp, Real};
use crate::{LspcError, Result};

/// Scalar critic hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticParams {
    pub xi: f64,
    pub gamma: f64,
    pub tau: f64,
    /// Permits `xi = 0.5` (plain mean regression).
    pub ablation: bool,
}

impl Default for CriticParams {
    fn default() -> Self {
        CriticParams { xi: 0.7, gamma: 0.99, tau: 0.005, ablation: false }
    }
}

impl CriticParams {
    pub fn validate(&self) -> Result<()> {
        let xi_ok = if self.ablation { (0.5..1.0).contains(&self.xi) } else { self.xi > 0.5 && self.xi < 1.0 };
        if !xi_ok {
            return Err(LspcError::Config(format!(
                "xi {} outside (0.5, 1){}",
                self.xi,
                if self.ablation { "" } else { "; 0.5 needs ablation mode" }
            )));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(LspcError::Config(format!("gamma {} outside (0, 1)", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(LspcError::Config(format!("tau {} outside [0, 1]", self.tau)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticSet<F> {
    pub q1: Mlp<F>,
    pub q2: Mlp<F>,
    pub q1_target: Mlp<F>,
    pub q2_target: Mlp<F>,
    pub v: Mlp<F>,
    pub qc1: Mlp<F>,
    pub qc2: Mlp<F>,
    pub qc1_target: Mlp<F>,
    pub qc2_target: Mlp<F>,
    pub vc: Mlp<F>,
    pub params: CriticParams,
}

/// Loss value and the gradients of the networks it trains.
#[derive(Debug, Clone)]
pub struct LossGrads<F> {
    pub loss: f64,
    pub grads: Vec<Grads<F>>,
}

/// Per-sample critic readouts on online networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Advantages<F> {
    /// `min(Q1, Q2) - V`
    pub reward: Vec<F>,
    /// `max(Qc1, Qc2) - Vc`
    pub cost: Vec<F>,
    pub q_cost: Vec<F>,
    pub v_cost: Vec<F>,
}

const NAMES: [&str; 10] =
    ["q1", "q2", "q1_target", "q2_target", "v", "qc1", "qc2", "qc1_target", "qc2_target", "vc"];

fn finite<F: Real>(loss: F, what: &str) -> Result<f64> {
    let l = loss.as_f64();
    if l.is_finite() {
        Ok(l)
    } else {
        Err(LspcError::numeric(what))
    }
}

/// `min` that propagates NaN instead of discarding it.
fn min_nan<F: Real>(a: F, b: F) -> F {
    if a.is_nan() || b.is_nan() {
        F::nan()
    } else {
        a.min(b)
    }
}

fn max_nan<F: Real>(a: F, b: F) -> F {
    if a.is_nan() || b.is_nan() {
        F::nan()
    } else {
        a.max(b)
    }
}

fn mean<F: Real>(xs: impl Iterator<Item = F>, n: usize) -> F {
    xs.fold(F::zero(), |a, b| a + b) / F::lit(n as f64)
}

fn non_empty<F: Real>(batch: &Batch<F>) -> Result<usize> {
    if batch.is_empty() {
        Err(LspcError::Config("empty batch".into()))
    } else {
        Ok(batch.len())
    }
}

impl<F: Real> CriticSet<F> {
    /// Fresh critics with hidden widths `hidden`. Targets start as copies.
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        activation: Activation,
        params: CriticParams,
        rng: &mut R,
    ) -> Result<Self> {
        params.validate()?;
        let sizes = |input: usize| {
            let mut s = vec![input];
            s.extend_from_slice(hidden);
            s.push(1);
            s
        };
        let q = sizes(state_dim + action_dim);
        let v = sizes(state_dim);
        let q1 = Mlp::new(&q, activation, Head::Linear, rng)?;
        let q2 = Mlp::new(&q, activation, Head::Linear, rng)?;
        let v_net = Mlp::new(&v, activation, Head::Linear, rng)?;
        let qc1 = Mlp::new(&q, activation, Head::Linear, rng)?;
        let qc2 = Mlp::new(&q, activation, Head::Linear, rng)?;
        let vc = Mlp::new(&v, activation, Head::Linear, rng)?;
        Ok(CriticSet {
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            qc1_target: qc1.clone(),
            qc2_target: qc2.clone(),
            q1,
            q2,
            v: v_net,
            qc1,
            qc2,
            vc,
            params,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let pairs = [(&self.q1, &self.q1_target), (&self.q2, &self.q2_target), (&self.qc1, &self.qc1_target), (&self.qc2, &self.qc2_target)];
        if pairs.iter().any(|(a, b)| !a.same_architecture(b)) {
            return Err(LspcError::Config("target architecture differs from online network".into()));
        }
        let s = self.v.input_dim();
        if self.vc.input_dim() != s || [&self.q1, &self.q2, &self.qc1, &self.qc2].iter().any(|q| q.input_dim() <= s) {
            return Err(LspcError::Shape("critic input widths are inconsistent".into()));
        }
        Ok(())
    }

    pub fn nets(&self) -> [&Mlp<F>; 10] {
        [
            &self.q1, &self.q2, &self.q1_target, &self.q2_target, &self.v, &self.qc1, &self.qc2, &self.qc1_target,
            &self.qc2_target, &self.vc,
        ]
    }

    fn nets_mut(&mut self) -> [&mut Mlp<F>; 10] {
        [
            &mut self.q1,
            &mut self.q2,
            &mut self.q1_target,
            &mut self.q2_target,
            &mut self.v,
            &mut self.qc1,
            &mut self.qc2,
            &mut self.qc1_target,
            &mut self.qc2_target,
            &mut self.vc,
        ]
    }

    pub fn gamma(&self) -> F {
        F::lit(self.params.gamma)
    }

    fn xi(&self) -> F {
        F::lit(self.params.xi)
    }

    /// `L_xi(min_i Qtarget_i(s, a) - V(s))`, gradients for `v`.
    pub fn reward_value_loss(&self, batch: &Batch<F>) -> Result<LossGrads<F>> {
        let n = non_empty(batch)?;
        let sa = Mat::hcat(&batch.states, &batch.actions)?;
        let t1 = self.q1_target.predict_batch(&sa)?;
        let t2 = self.q2_target.predict_batch(&sa)?;
        let (v, cache) = self.v.forward_batch(&batch.states)?;
        let u: Vec<F> = (0..n).map(|i| min_nan(t1.data[i], t2.data[i]) - v.data[i]).collect();
        let xi = self.xi();
        let loss = finite(mean(u.iter().map(|&x| expectile_loss(x, xi)), n), "reward value loss")?;
        let nf = F::lit(n as f64);
        let up = Mat::column(&u.iter().map(|&x| -expectile_grad(x, xi) / nf).collect::<Vec<_>>());
        let (g, _) = self.v.backward(&cache, &up)?;
        Ok(LossGrads { loss, grads: vec![g] })
    }

    /// `L_xi(Vc(s) - max_i Qctarget_i(s, a))`, gradients for `vc`.
    pub fn cost_value_loss(&self, batch: &Batch<F>) -> Result<LossGrads<F>> {
        let n = non_empty(batch)?;
        let sa = Mat::hcat(&batch.states, &batch.actions)?;
        let t1 = self.qc1_target.predict_batch(&sa)?;
        let t2 = self.qc2_target.predict_batch(&sa)?;
        let (vc, cache) = self.vc.forward_batch(&batch.states)?;
        let u: Vec<F> = (0..n).map(|i| vc.data[i] - max_nan(t1.data[i], t2.data[i])).collect();
        let xi = self.xi();
        let loss = finite(mean(u.iter().map(|&x| expectile_loss(x, xi)), n), "cost value loss")?;
        let nf = F::lit(n as f64);
        let up = Mat::column(&u.iter().map(|&x| expectile_grad(x, xi) / nf).collect::<Vec<_>>());
        let (g, _) = self.vc.backward(&cache, &up)?;
        Ok(LossGrads { loss, grads: vec![g] })
    }

    /// `sum_i mean (r + gamma (1 - done) V(s') - Q_i(s, a))^2`, gradients
    /// for `q1`, `q2`.
    pub fn reward_q_loss(&self, batch: &Batch<F>) -> Result<LossGrads<F>> {
        self.q_loss(batch, false)
    }

    /// Cost counterpart of [`CriticSet::reward_q_loss`], gradients for
    /// `qc1`, `qc2`.
    pub fn cost_q_loss(&self, batch: &Batch<F>) -> Result<LossGrads<F>> {
        self.q_loss(batch, true)
    }

    fn q_loss(&self, batch: &Batch<F>, cost: bool) -> Result<LossGrads<F>> {
        let n = non_empty(batch)?;
        let (value, qa, qb, signal, what) = if cost {
            (&self.vc, &self.qc1, &self.qc2, &batch.costs, "cost q loss")
        } else {
            (&self.v, &self.q1, &self.q2, &batch.rewards, "reward q loss")
        };
        let v_next = value.predict_batch(&batch.next_states)?;
        let gamma = self.gamma();
        let y: Vec<F> = (0..n)
            .map(|i| signal[i] + gamma * (F::one() - batch.dones[i]) * v_next.data[i])
            .collect();
        let sa = Mat::hcat(&batch.states, &batch.actions)?;
        let nf = F::lit(n as f64);
        let mut total = F::zero();
        let mut grads = Vec::with_capacity(2);
        for q in [qa, qb] {
            let (out, cache) = q.forward_batch(&sa)?;
            let diff: Vec<F> = (0..n).map(|i| out.data[i] - y[i]).collect();
            total += mean(diff.iter().map(|d| *d * *d), n);
            let up = Mat::column(&diff.iter().map(|d| F::lit(2.0) * *d / nf).collect::<Vec<_>>());
            grads.push(q.backward(&cache, &up)?.0);
        }
        Ok(LossGrads { loss: finite(total, what)?, grads })
    }

    /// Advantages on the online networks.
    pub fn advantages(&self, states: &Mat<F>, actions: &Mat<F>) -> Result<Advantages<F>> {
        let sa = Mat::hcat(states, actions)?;
        let q1 = self.q1.predict_batch(&sa)?;
        let q2 = self.q2.predict_batch(&sa)?;
        let v = self.v.predict_batch(states)?;
        let qc1 = self.qc1.predict_batch(&sa)?;
        let qc2 = self.qc2.predict_batch(&sa)?;
        let vc = self.vc.predict_batch(states)?;
        let n = states.rows;
        let q_cost: Vec<F> = (0..n).map(|i| max_nan(qc1.data[i], qc2.data[i])).collect();
        Ok(Advantages {
            reward: (0..n).map(|i| min_nan(q1.data[i], q2.data[i]) - v.data[i]).collect(),
            cost: (0..n).map(|i| q_cost[i] - vc.data[i]).collect(),
            q_cost,
            v_cost: vc.data,
        })
    }

    /// `min(Q1, Q2)` on the online networks.
    pub fn q_reward(&self, states: &Mat<F>, actions: &Mat<F>) -> Result<Vec<F>> {
        let sa = Mat::hcat(states, actions)?;
        let q1 = self.q1.predict_batch(&sa)?;
        let q2 = self.q2.predict_batch(&sa)?;
        Ok(q1.data.iter().zip(&q2.data).map(|(a, b)| min_nan(*a, *b)).collect())
    }

    /// `max(Qc1, Qc2)` on the online networks.
    pub fn q_cost(&self, states: &Mat<F>, actions: &Mat<F>) -> Result<Vec<F>> {
        let sa = Mat::hcat(states, actions)?;
        let q1 = self.qc1.predict_batch(&sa)?;
        let q2 = self.qc2.predict_batch(&sa)?;
        Ok(q1.data.iter().zip(&q2.data).map(|(a, b)| max_nan(*a, *b)).collect())
    }

    /// Polyak-averages all four targets toward their online networks.
    pub fn soft_update_targets(&mut self) -> Result<()> {
        let tau = F::lit(self.params.tau);
        soft_update(&mut self.q1_target, &self.q1, tau)?;
        soft_update(&mut self.q2_target, &self.q2, tau)?;
        soft_update(&mut self.qc1_target, &self.qc1, tau)?;
        soft_update(&mut self.qc2_target, &self.qc2, tau)?;
        Ok(())
    }

    pub fn store(&self, store: &mut TensorStore) -> Result<()> {
        for (name, net) in NAMES.iter().zip(self.nets()) {
            store.insert_net(name, net)?;
        }
        Ok(())
    }

    pub fn restore(store: &TensorStore, activation: Activation, params: CriticParams) -> Result<Self> {
        let get = |name: &str| store.get_net::<F>(name, activation, Head::Linear);
        let cs = CriticSet {
            q1: get("q1")?,
            q2: get("q2")?,
            q1_target: get("q1_target")?,
            q2_target: get("q2_target")?,
            v: get("v")?,
            qc1: get("qc1")?,
            qc2: get("qc2")?,
            qc1_target: get("qc1_target")?,
            qc2_target: get("qc2_target")?,
            vc: get("vc")?,
            params,
        };
        cs.validate()?;
        Ok(cs)
    }

    pub fn cast<G: Real>(&self) -> CriticSet<G> {
        CriticSet {
            q1: self.q1.cast(),
            q2: self.q2.cast(),
            q1_target: self.q1_target.cast(),
            q2_target: self.q2_target.cast(),
            v: self.v.cast(),
            qc1: self.qc1.cast(),
            qc2: self.qc2.cast(),
            qc1_target: self.qc1_target.cast(),
            qc2_target: self.qc2_target.cast(),
            vc: self.vc.cast(),
            params: self.params,
        }
    }

    /// Sets every network to output the constant `value[k]`, in the order
    /// of [`CriticSet::nets`]. Useful for constructing exact test cases.
    pub fn set_constant_outputs(&mut self, values: [f64; 10]) {
        for (net, v) in self.nets_mut().into_iter().zip(values) {
            let last = net.layers_mut().len() - 1;
            let layers = net.layers_mut();
            layers[last].w.iter_mut().for_each(|w| *w = F::zero());
            layers[last].b.iter_mut().for_each(|b| *b = F::lit(v));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::OfflineDataset;
    use crate::rng;

    fn set(values: [f64; 10]) -> CriticSet<f64> {
        let mut cs = CriticSet::new(2, 1, &[4], Activation::Relu, CriticParams::default(), &mut rng::stream(0, "c", 0)).unwrap();
        cs.set_constant_outputs(values);
        cs
    }

    fn batch(reward: f64, cost: f64, done: bool) -> Batch<f64> {
        let mut ds = OfflineDataset::empty(2, 1);
        ds.push(&[0.1, 0.2], &[0.3], reward, cost, &[0.4, 0.5], true);
        let mut b = ds.gather::<f64>(&[0]);
        b.dones[0] = if done { 1.0 } else { 0.0 };
        b
    }

    // order: q1 q2 q1t q2t v qc1 qc2 qc1t qc2t vc
    #[test]
    fn value_losses() {
        assert_eq!(set([0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).reward_value_loss(&batch(0.0, 0.0, true)).unwrap().loss, 0.0);
        let l = set([0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).reward_value_loss(&batch(0.0, 0.0, true)).unwrap().loss;
        assert!((l - 0.7).abs() < 1e-12);
        // min selection: u = 2 - 0
        let l = set([0.0, 0.0, 2.0, 5.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).reward_value_loss(&batch(0.0, 0.0, true)).unwrap().loss;
        assert!((l - 0.7 * 4.0).abs() < 1e-12);
        let l = set([0.0; 5].into_iter().chain([0.0, 0.0, 0.0, 0.0, 1.0]).collect::<Vec<_>>().try_into().unwrap())
            .cost_value_loss(&batch(0.0, 0.0, true))
            .unwrap()
            .loss;
        assert!((l - 0.7).abs() < 1e-12);
        // max selection: u = 0 - 3, weight 0.3
        let l = set([0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 3.0, 0.0]).cost_value_loss(&batch(0.0, 0.0, true)).unwrap().loss;
        assert!((l - 0.3 * 9.0).abs() < 1e-12);
    }

    #[test]
    fn q_losses() {
        let cs = set([1.0, 1.0, 0.0, 0.0, 7.0, 1.0, 1.0, 0.0, 0.0, 7.0]);
        assert_eq!(cs.reward_q_loss(&batch(1.0, 1.0, true)).unwrap().loss, 0.0);
        assert_eq!(cs.cost_q_loss(&batch(1.0, 1.0, true)).unwrap().loss, 0.0);
        let cs = set([0.99, 0.99, 0.0, 0.0, 1.0, 0.99, 0.99, 0.0, 0.0, 1.0]);
        assert!(cs.reward_q_loss(&batch(0.0, 0.0, false)).unwrap().loss < 1e-24);
        assert!(cs.cost_q_loss(&batch(0.0, 0.0, false)).unwrap().loss < 1e-24);
    }

    #[test]
    fn advantage_reductions() {
        let cs = set([1.0, 3.0, 0.0, 0.0, 1.0, 1.0, 3.0, 0.0, 0.0, 1.0]);
        let b = batch(0.0, 0.0, true);
        let a = cs.advantages(&b.states, &b.actions).unwrap();
        assert_eq!(a.reward, vec![0.0]);
        assert_eq!(a.cost, vec![2.0]);
        let cs = set([2.0, 2.0, 0.0, 0.0, 2.0, 0.5, 0.5, 0.0, 0.0, 0.5]);
        let a = cs.advantages(&b.states, &b.actions).unwrap();
        assert_eq!((a.reward[0], a.cost[0]), (0.0, 0.0));
    }

    #[test]
    fn xi_bounds() {
        let p = CriticParams { xi: 0.5, ..Default::default() };
        assert!(p.validate().is_err());
        assert!(CriticParams { ablation: true, ..p }.validate().is_ok());
        assert!(CriticParams { xi: 1.0, ablation: true, ..p }.validate().is_err());
    }

    #[test]
    fn nan_loss_aborts() {
        let mut cs = set([0.0; 10]);
        cs.set_constant_outputs([0.0, 0.0, f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let err = cs.reward_value_loss(&batch(0.0, 0.0, true)).unwrap_err();
        assert!(err.to_string().contains("reward value loss"));
    }

    #[test]
    fn zero_tau_keeps_targets() {
        let mut cs = CriticSet::<f32>::new(2, 1, &[4], Activation::Relu, CriticParams { tau: 0.0, ..Default::default() }, &mut rng::stream(0, "c", 0)).unwrap();
        cs.q1.set_param(0, 3.0);
        let before = cs.q1_target.clone();
        cs.soft_update_targets().unwrap();
        assert_eq!(cs.q1_target, before);
    }
}
