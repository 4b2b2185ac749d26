//! Policy rollouts, restriction sweeps and tabular bound checks.

pub mod sweep;
pub mod theory;

pub use sweep::{log_log_slope, spearman, sweep_epsilon, SweepRow, SweepTable};
pub use theory::{bound_check, theory_check, BoundCheck, TheoryReport, THEORY_TOL};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{normalized_cost, normalized_reward, MetricDef};
use crate::env::{AnyEnv, CategoricalPolicy, GridHazard};
use crate::nn::Real;
use crate::policy::{PolicyBundle, PolicyKind};
use crate::rng::{self, Rng};
use crate::{LspcError, Result};

/// Anything that maps a state to an action.
pub trait Actor: Sync {
    fn name(&self) -> String;
    fn act(&self, state: &[f64], rng: &mut Rng) -> Result<Vec<f64>>;
}

pub struct BundleActor<'a, F> {
    pub bundle: &'a PolicyBundle<F>,
    pub kind: PolicyKind,
}

impl<F: Real> Actor for BundleActor<'_, F> {
    fn name(&self) -> String {
        self.kind.to_string()
    }
    fn act(&self, state: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        self.bundle.act(self.kind, state, rng)
    }
}

/// A tabular policy acting on `grid-hazard` through move embeddings.
pub struct TabularActor<'a> {
    pub grid: &'a GridHazard,
    pub policy: &'a CategoricalPolicy,
}

impl Actor for TabularActor<'_> {
    fn name(&self) -> String {
        "tabular".into()
    }
    fn act(&self, state: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        use rand::Rng as _;
        let s = self.grid.state_index(state)?;
        let u: f64 = rng.random();
        let row = self.policy.row(s);
        let mut acc = 0.0;
        let mut a = row.iter().rposition(|p| *p > 0.0).unwrap_or(0);
        for (i, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                a = i;
                break;
            }
        }
        Ok(GridHazard::embedding(a).to_vec())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub index: usize,
    pub reward: f64,
    pub cost: f64,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub policy: String,
    pub env: String,
    pub seed: u64,
    pub n_episodes: usize,
    pub mean_reward: f64,
    pub mean_cost: f64,
    pub std_reward: f64,
    pub std_cost: f64,
    pub mean_normalized_reward: f64,
    pub mean_normalized_cost: f64,
    pub metric: MetricDef,
    pub episodes: Vec<EpisodeResult>,
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs one episode with the `(seed, eval, index)` stream.
pub fn run_episode<A: Actor + ?Sized>(actor: &A, env: &AnyEnv, seed: u64, index: usize) -> Result<EpisodeResult> {
    let e = env.as_env();
    let mut r = rng::stream(seed, rng::EVAL, index as u64);
    let mut s = e.reset(&mut r);
    let (mut reward, mut cost, mut length) = (0.0, 0.0, 0);
    for _ in 0..e.horizon() {
        let mut a = actor.act(&s, &mut r)?;
        e.clip_action(&mut a);
        let st = e.step(&s, &a, &mut r)?;
        reward += st.reward;
        cost += st.cost;
        length += 1;
        s = st.next_state;
        if st.done {
            break;
        }
    }
    Ok(EpisodeResult { index, reward, cost, length })
}

/// Undiscounted episode returns, averaged. Episodes run in parallel and are
/// reported in index order, so the result is independent of thread count.
pub fn evaluate<A: Actor>(actor: &A, env: &AnyEnv, n_episodes: usize, metric: &MetricDef, seed: u64) -> Result<EvalReport> {
    if n_episodes == 0 {
        return Err(LspcError::Config("need at least one evaluation episode".into()));
    }
    metric.validate()?;
    let episodes: Vec<EpisodeResult> =
        (0..n_episodes).into_par_iter().map(|i| run_episode(actor, env, seed, i)).collect::<Result<_>>()?;
    let (mean_reward, std_reward) = mean_std(episodes.iter().map(|e| e.reward));
    let (mean_cost, std_cost) = mean_std(episodes.iter().map(|e| e.cost));
    let mut nr = 0.0;
    let mut nc = 0.0;
    for e in &episodes {
        nr += normalized_reward(e.reward, metric)?;
        nc += normalized_cost(e.cost, metric)?;
    }
    Ok(EvalReport {
        policy: actor.name(),
        env: env.describe(),
        seed,
        n_episodes,
        mean_reward,
        mean_cost,
        std_reward,
        std_cost,
        mean_normalized_reward: nr / n_episodes as f64,
        mean_normalized_cost: nc / n_episodes as f64,
        metric: *metric,
        episodes,
    })
}

pub const DISCRETIZE: &str = "discretize";

/// Empirical move frequencies of a continuous policy on every grid state.
pub fn discretize_policy<F: Real>(
    bundle: &PolicyBundle<F>,
    kind: PolicyKind,
    grid: &GridHazard,
    n_samples: usize,
    seed: u64,
) -> Result<CategoricalPolicy> {
    if n_samples == 0 {
        return Err(LspcError::Config("need at least one sample per state".into()));
    }
    let ns = grid.cmdp.n_states;
    let na = grid.cmdp.n_actions;
    let mut probs = vec![0.0; ns * na];
    for s in 0..ns {
        let mut r = rng::stream(seed, DISCRETIZE, s as u64);
        let state = grid.one_hot(s);
        for _ in 0..n_samples {
            let a = bundle.act(kind, &state, &mut r)?;
            probs[s * na + GridHazard::action_index(&a)] += 1.0;
        }
        for p in &mut probs[s * na..(s + 1) * na] {
            *p /= n_samples as f64;
        }
    }
    CategoricalPolicy::new(ns, na, probs)
}
