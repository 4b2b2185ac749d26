//! Restriction-radius sweeps and dataset-size trends.

use serde::{Deserialize, Serialize};

use super::{discretize_policy, evaluate, BundleActor};
use crate::dataset::{collect, BehaviorSpec, MetricDef, OfflineDataset};
use crate::env::{constrained_optimal, values_at_rho0, AnyEnv};
use crate::policy::{PolicyBundle, PolicyKind};
use crate::trainer::{train, TrainConfig, TrainOutput};
use crate::{Float, LspcError, Result};

/// Ranks with ties averaged, 1-based.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Spearman rank correlation. NaN when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    if x.len() != y.len() || x.len() < 2 {
        return f64::NAN;
    }
    pearson(&ranks(x), &ranks(y))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(LspcError::Shape("need at least two matching points".into()));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(LspcError::numeric("log-log slope of non-positive values"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub seed: u64,
    pub policy: String,
    pub mean_reward: f64,
    pub mean_cost: f64,
    pub normalized_reward: f64,
    pub normalized_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub epsilons: Vec<f64>,
    pub rows: Vec<SweepRow>,
    /// LSPC-O mean cost per radius, averaged over seeds.
    pub lspc_o_cost: Vec<f64>,
    /// Rank correlation between radius and `lspc_o_cost`.
    pub spearman: f64,
    pub spearman_per_seed: Vec<f64>,
}

/// The policy bundle for radius index `i` of a multi-radius run; index 0 is
/// the main encoder.
pub fn bundle_for(out: &TrainOutput, i: usize) -> PolicyBundle<Float> {
    if i == 0 {
        return out.policy.clone();
    }
    let x = &out.extra[i - 1];
    let mut b = out.policy.clone();
    b.lat_enc = x.net.clone();
    b.params.epsilon = x.epsilon;
    b
}

/// Trains once per seed with one latent encoder per radius (critics and
/// CVAE are shared) and evaluates LSPC-S and LSPC-O at every radius.
pub fn sweep_epsilon(
    base: &TrainConfig,
    ds: &OfflineDataset,
    epsilons: &[f64],
    seeds: &[u64],
    n_episodes: usize,
    kappa: f64,
) -> Result<SweepTable> {
    if epsilons.len() < 2 || seeds.is_empty() {
        return Err(LspcError::Config("a sweep needs two radii and one seed".into()));
    }
    let env = AnyEnv::from_id(&base.env)?;
    let metric = MetricDef::from_dataset(ds, kappa)?;
    let mut rows = Vec::new();
    let mut per_seed = Vec::new();
    let mut o_cost = vec![0.0; epsilons.len()];
    for &seed in seeds {
        let cfg = TrainConfig { seed, epsilon: epsilons[0], extra_epsilons: epsilons[1..].to_vec(), ..base.clone() };
        let out = train(cfg, ds)?;
        let mut seed_cost = Vec::new();
        for (i, &eps) in epsilons.iter().enumerate() {
            let b = bundle_for(&out, i);
            for kind in [PolicyKind::LspcS, PolicyKind::LspcO] {
                let rep = evaluate(&BundleActor { bundle: &b, kind }, &env, n_episodes, &metric, seed)?;
                if kind == PolicyKind::LspcO {
                    seed_cost.push(rep.mean_cost);
                    o_cost[i] += rep.mean_cost / seeds.len() as f64;
                }
                rows.push(SweepRow {
                    epsilon: eps,
                    seed,
                    policy: kind.to_string(),
                    mean_reward: rep.mean_reward,
                    mean_cost: rep.mean_cost,
                    normalized_reward: rep.mean_normalized_reward,
                    normalized_cost: rep.mean_normalized_cost,
                });
            }
        }
        per_seed.push(spearman(epsilons, &seed_cost));
    }
    Ok(SweepTable {
        epsilons: epsilons.to_vec(),
        rows,
        spearman: spearman(epsilons, &o_cost),
        lspc_o_cost: o_cost,
        spearman_per_seed: per_seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendPoint {
    pub size: usize,
    pub seed: u64,
    /// `V_r(pi*) - V_r(pi)` at the start distribution.
    pub gap: f64,
    pub v_r: f64,
    pub v_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub sizes: Vec<usize>,
    pub points: Vec<TrendPoint>,
    /// Median absolute gap per size.
    pub median_gap: Vec<f64>,
    pub slope: f64,
    pub non_increasing: bool,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Exact reward gap of the discretized LSPC-O policy on `grid-hazard` as
/// the dataset grows. Data for every size and seed comes from `collector`
/// with `behavior`; the gap is measured on the CMDP of `base.env`.
pub fn sample_size_trend(
    base: &TrainConfig,
    collector: &AnyEnv,
    behavior: &BehaviorSpec,
    sizes: &[usize],
    seeds: &[u64],
    n_samples: usize,
) -> Result<TrendReport> {
    let AnyEnv::Grid(grid) = AnyEnv::from_id(&base.env)? else {
        return Err(LspcError::Config("the size trend needs grid-hazard".into()));
    };
    if sizes.len() < 2 || seeds.is_empty() {
        return Err(LspcError::Config("a trend needs two sizes and one seed".into()));
    }
    let (v_opt, _) = values_at_rho0(&grid.cmdp, &constrained_optimal(&grid.cmdp)?)?;
    let mut points = Vec::new();
    let mut median_gap = Vec::new();
    for &size in sizes {
        let mut gaps = Vec::new();
        for &seed in seeds {
            let ds = collect(collector, behavior, size, seed)?;
            let out = train(TrainConfig { seed, ..base.clone() }, &ds)?;
            let pi = discretize_policy(&out.policy, PolicyKind::LspcO, &grid, n_samples, seed)?;
            let (v_r, v_c) = values_at_rho0(&grid.cmdp, &pi)?;
            let gap = v_opt - v_r;
            gaps.push(gap.abs());
            points.push(TrendPoint { size, seed, gap, v_r, v_c });
        }
        median_gap.push(median(gaps));
    }
    let xs: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    let slope = log_log_slope(&xs, &median_gap.iter().map(|g| g.max(f64::MIN_POSITIVE)).collect::<Vec<_>>())?;
    let non_increasing = median_gap.windows(2).all(|w| w[1] <= w[0]);
    Ok(TrendReport { sizes: sizes.to_vec(), points, median_gap, slope, non_increasing })
}
