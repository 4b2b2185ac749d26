//! Exact solvers for small tabular CMDPs.

use serde::{Deserialize, Serialize};

use crate::{LspcError, Result};

/// Which per-step signal a value function accumulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signal {
    Reward,
    Cost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularCmdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// `p[(s * A + a) * S + s2]`
    pub p: Vec<f64>,
    /// `r[s * A + a]`
    pub r: Vec<f64>,
    pub c: Vec<f64>,
    pub gamma: f64,
    pub kappa: f64,
    pub rho0: Vec<f64>,
    pub absorbing: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalPolicy {
    pub n_states: usize,
    pub n_actions: usize,
    /// Row-major `probs[s * A + a]`.
    pub probs: Vec<f64>,
}

impl CategoricalPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(LspcError::Shape(format!("policy needs {} entries", n_states * n_actions)));
        }
        for s in 0..n_states {
            let row = &probs[s * n_actions..(s + 1) * n_actions];
            if row.iter().any(|p| !(*p >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(LspcError::Config(format!("policy row {s} is not a distribution: {row:?}")));
            }
        }
        Ok(CategoricalPolicy { n_states, n_actions, probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        CategoricalPolicy { n_states, n_actions, probs: vec![1.0 / n_actions as f64; n_states * n_actions] }
    }

    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Self {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            probs[s * n_actions + a] = 1.0;
        }
        CategoricalPolicy { n_states: actions.len(), n_actions, probs }
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// State-wise blend `(1 - w) * self + w * other`.
    pub fn mix(&self, other: &CategoricalPolicy, w: f64) -> CategoricalPolicy {
        CategoricalPolicy {
            n_states: self.n_states,
            n_actions: self.n_actions,
            probs: self.probs.iter().zip(&other.probs).map(|(a, b)| (1.0 - w) * a + w * b).collect(),
        }
    }
}

impl TabularCmdp {
    pub fn validate(&self) -> Result<()> {
        let (s, a) = (self.n_states, self.n_actions);
        if self.p.len() != s * a * s || self.r.len() != s * a || self.c.len() != s * a || self.rho0.len() != s {
            return Err(LspcError::Shape("tabular CMDP tensors have inconsistent sizes".into()));
        }
        if self.absorbing.len() != s {
            return Err(LspcError::Shape("absorbing flags must cover every state".into()));
        }
        for sa in 0..s * a {
            let row = &self.p[sa * s..(sa + 1) * s];
            if row.iter().any(|x| *x < 0.0) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(LspcError::Config(format!("transition row {sa} is not stochastic")));
            }
        }
        if (self.rho0.iter().sum::<f64>() - 1.0).abs() > 1e-12 || self.rho0.iter().any(|x| *x < 0.0) {
            return Err(LspcError::Config("rho0 is not a distribution".into()));
        }
        if self.c.iter().any(|x| *x < 0.0) {
            return Err(LspcError::Config("costs must be non-negative".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(LspcError::Config(format!("gamma {} outside (0, 1)", self.gamma)));
        }
        Ok(())
    }

    #[inline]
    pub fn trans(&self, s: usize, a: usize) -> &[f64] {
        let n = self.n_states;
        &self.p[(s * self.n_actions + a) * n..(s * self.n_actions + a + 1) * n]
    }

    fn signal(&self, signal: Signal) -> &[f64] {
        match signal {
            Signal::Reward => &self.r,
            Signal::Cost => &self.c,
        }
    }

    /// Largest absolute immediate reward.
    pub fn max_reward(&self) -> f64 {
        self.r.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Largest immediate cost.
    pub fn max_cost(&self) -> f64 {
        self.c.iter().fold(0.0, |m, x| m.max(*x))
    }

    /// Expected value under the start distribution.
    pub fn at_rho0(&self, v: &[f64]) -> f64 {
        self.rho0.iter().zip(v).map(|(p, x)| p * x).sum()
    }

    fn check_policy(&self, pol: &CategoricalPolicy) -> Result<()> {
        if pol.n_states != self.n_states || pol.n_actions != self.n_actions {
            return Err(LspcError::Shape(format!(
                "policy is {}x{}, CMDP {}x{}",
                pol.n_states, pol.n_actions, self.n_states, self.n_actions
            )));
        }
        Ok(())
    }

    /// `(P_pi, h_pi)` for a policy.
    fn induced(&self, pol: &CategoricalPolicy, h: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n_states;
        let mut p = vec![0.0; n * n];
        let mut hp = vec![0.0; n];
        for s in 0..n {
            for (a, &pa) in pol.row(s).iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                hp[s] += pa * h[s * self.n_actions + a];
                for (s2, q) in self.trans(s, a).iter().enumerate() {
                    p[s * n + s2] += pa * q;
                }
            }
        }
        (p, hp)
    }
}

/// Dense solve of `A x = b` by Gaussian elimination with partial pivoting.
pub(crate) fn solve_linear(mut a: Vec<f64>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().partial_cmp(&a[j * n + col].abs()).unwrap())
            .unwrap();
        if a[piv * n + col].abs() < 1e-300 {
            return Err(LspcError::numeric("singular linear system"));
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            b.swap(piv, col);
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row * n + k] * x[k];
        }
        x[row] = acc / a[row * n + row];
    }
    Ok(x)
}

/// Exact discounted value by solving `(I - gamma P_pi) V = h_pi`.
pub fn policy_eval(m: &TabularCmdp, pol: &CategoricalPolicy, signal: Signal) -> Result<Vec<f64>> {
    m.check_policy(pol)?;
    let n = m.n_states;
    let (p, h) = m.induced(pol, m.signal(signal));
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = f64::from(u8::from(i == j)) - m.gamma * p[i * n + j];
        }
    }
    solve_linear(a, h)
}

/// Iterative evaluation, sweeping until the sup-norm change is below `tol`.
pub fn policy_eval_iterative(m: &TabularCmdp, pol: &CategoricalPolicy, signal: Signal, tol: f64) -> Result<Vec<f64>> {
    m.check_policy(pol)?;
    let n = m.n_states;
    let (p, h) = m.induced(pol, m.signal(signal));
    let mut v = vec![0.0; n];
    loop {
        let next: Vec<f64> = (0..n)
            .map(|s| h[s] + m.gamma * (0..n).map(|s2| p[s * n + s2] * v[s2]).sum::<f64>())
            .collect();
        let delta = next.iter().zip(&v).fold(0.0f64, |d, (a, b)| d.max((a - b).abs()));
        v = next;
        if delta < tol {
            return Ok(v);
        }
    }
}

/// Action values `Q(s, a) = h(s, a) + gamma * sum_s' P(s'|s,a) V(s')`.
pub fn q_values(m: &TabularCmdp, v: &[f64], signal: Signal) -> Vec<f64> {
    let h = m.signal(signal);
    let mut q = vec![0.0; m.n_states * m.n_actions];
    for s in 0..m.n_states {
        for a in 0..m.n_actions {
            q[s * m.n_actions + a] =
                h[s * m.n_actions + a] + m.gamma * m.trans(s, a).iter().zip(v).map(|(p, x)| p * x).sum::<f64>();
        }
    }
    q
}

/// Normalized discounted state visitation and the matching state-action
/// distribution `d(s) * pi(a|s)`.
pub fn stationary_distribution(m: &TabularCmdp, pol: &CategoricalPolicy) -> Result<(Vec<f64>, Vec<f64>)> {
    m.check_policy(pol)?;
    let n = m.n_states;
    let (p, _) = m.induced(pol, &m.r);
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            // (I - gamma P^T)
            a[i * n + j] = f64::from(u8::from(i == j)) - m.gamma * p[j * n + i];
        }
    }
    let b: Vec<f64> = m.rho0.iter().map(|x| (1.0 - m.gamma) * x).collect();
    let d = solve_linear(a, b)?;
    let mut sa = vec![0.0; n * m.n_actions];
    for s in 0..n {
        for (k, pa) in pol.row(s).iter().enumerate() {
            sa[s * m.n_actions + k] = d[s] * pa;
        }
    }
    Ok((d, sa))
}

/// Optimal deterministic policy for the scalarized signal `r - lambda * c`,
/// found by policy iteration.
pub fn lagrangian_optimal(m: &TabularCmdp, lambda: f64) -> Result<Vec<usize>> {
    let mut scalar = m.clone();
    scalar.r = m.r.iter().zip(&m.c).map(|(r, c)| r - lambda * c).collect();
    let (n, na) = (m.n_states, m.n_actions);
    let mut actions = vec![0usize; n];
    for s in 0..n {
        actions[s] = argmax(&scalar.r[s * na..(s + 1) * na], None);
    }
    for _ in 0..10_000 {
        let pol = CategoricalPolicy::deterministic(na, &actions);
        let v = policy_eval(&scalar, &pol, Signal::Reward)?;
        let q = q_values(&scalar, &v, Signal::Reward);
        let mut changed = false;
        for s in 0..n {
            let best = argmax(&q[s * na..(s + 1) * na], Some(actions[s]));
            if best != actions[s] {
                actions[s] = best;
                changed = true;
            }
        }
        if !changed {
            return Ok(actions);
        }
    }
    Err(LspcError::numeric("policy iteration did not converge"))
}

/// Unconstrained optimum by value iteration, used as a cross-check.
pub fn value_iteration(m: &TabularCmdp, tol: f64) -> Vec<usize> {
    let (n, na) = (m.n_states, m.n_actions);
    let mut v = vec![0.0; n];
    loop {
        let q = q_values(m, &v, Signal::Reward);
        let next: Vec<f64> = (0..n).map(|s| q[s * na..(s + 1) * na].iter().cloned().fold(f64::MIN, f64::max)).collect();
        let delta = next.iter().zip(&v).fold(0.0f64, |d, (a, b)| d.max((a - b).abs()));
        v = next;
        if delta < tol {
            let q = q_values(m, &v, Signal::Reward);
            return (0..n).map(|s| argmax(&q[s * na..(s + 1) * na], None)).collect();
        }
    }
}

/// Index of the largest entry; `keep` wins ties within 1e-12.
fn argmax(xs: &[f64], keep: Option<usize>) -> usize {
    let mut best = keep.unwrap_or(0);
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] + 1e-12 {
            best = i;
        }
    }
    best
}

/// Returns `(V_r(rho0), V_c(rho0))`.
pub fn values_at_rho0(m: &TabularCmdp, pol: &CategoricalPolicy) -> Result<(f64, f64)> {
    Ok((
        m.at_rho0(&policy_eval(m, pol, Signal::Reward)?),
        m.at_rho0(&policy_eval(m, pol, Signal::Cost)?),
    ))
}

/// Enumeration is used for the deterministic search when `A^S` is at most this.
const ENUMERATION_LIMIT: u64 = 1 << 16;
const MIX_TOL: f64 = 1e-6;

/// Reward-maximal policy among those with `V_c(rho0) <= kappa`.
///
/// Deterministic candidates come from full enumeration when the policy
/// space is small and from a Lagrangian bisection otherwise. The result is
/// the better of the best feasible deterministic policy and a state-wise
/// mixture of a feasible/infeasible pair whose weight is placed on the
/// feasibility boundary.
pub fn constrained_optimal(m: &TabularCmdp) -> Result<CategoricalPolicy> {
    m.validate()?;
    if m.n_states > 30 || m.n_actions > 4 {
        return Err(LspcError::Config(format!(
            "constrained search supports S <= 30 and A <= 4, got S={} A={}",
            m.n_states, m.n_actions
        )));
    }
    let kappa = m.kappa;
    let feasible = |v: (f64, f64)| v.1 <= kappa + 1e-12;
    let mut candidates: Vec<(CategoricalPolicy, f64)> = Vec::new();

    // Lagrangian pair around the critical multiplier.
    let free = CategoricalPolicy::deterministic(m.n_actions, &lagrangian_optimal(m, 0.0)?);
    let free_v = values_at_rho0(m, &free)?;
    let mut pair: Option<(CategoricalPolicy, CategoricalPolicy)> = None;
    if feasible(free_v) {
        candidates.push((free, free_v.0));
    } else {
        let mut hi = 1.0;
        let mut hi_pol = None;
        for _ in 0..60 {
            let pol = CategoricalPolicy::deterministic(m.n_actions, &lagrangian_optimal(m, hi)?);
            if feasible(values_at_rho0(m, &pol)?) {
                hi_pol = Some(pol);
                break;
            }
            hi *= 4.0;
        }
        if let Some(mut feas) = hi_pol {
            let (mut lo, mut infeas) = (0.0, free);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let pol = CategoricalPolicy::deterministic(m.n_actions, &lagrangian_optimal(m, mid)?);
                if feasible(values_at_rho0(m, &pol)?) {
                    hi = mid;
                    feas = pol;
                } else {
                    lo = mid;
                    infeas = pol;
                }
            }
            let fv = values_at_rho0(m, &feas)?;
            candidates.push((feas.clone(), fv.0));
            pair = Some((feas, infeas));
        }
    }

    // Exact deterministic search when small enough.
    let space = (m.n_actions as u64).checked_pow(m.n_states as u32);
    if let Some(total) = space.filter(|t| *t <= ENUMERATION_LIMIT) {
        let mut best_feasible: Option<(Vec<usize>, f64)> = None;
        let mut best_infeasible: Option<(Vec<usize>, f64)> = None;
        let mut actions = vec![0usize; m.n_states];
        for code in 0..total {
            let mut c = code;
            for a in actions.iter_mut() {
                *a = (c % m.n_actions as u64) as usize;
                c /= m.n_actions as u64;
            }
            let v = values_at_rho0(m, &CategoricalPolicy::deterministic(m.n_actions, &actions))?;
            let slot = if feasible(v) { &mut best_feasible } else { &mut best_infeasible };
            if slot.as_ref().is_none_or(|(_, r)| v.0 > *r) {
                *slot = Some((actions.clone(), v.0));
            }
        }
        if let Some((a, r)) = &best_feasible {
            candidates.push((CategoricalPolicy::deterministic(m.n_actions, a), *r));
            if pair.is_none() {
                if let Some((b, rb)) = &best_infeasible {
                    if rb > r {
                        pair = Some((
                            CategoricalPolicy::deterministic(m.n_actions, a),
                            CategoricalPolicy::deterministic(m.n_actions, b),
                        ));
                    }
                }
            }
        }
    }

    if let Some((feas, infeas)) = pair {
        if let Some((mix, r)) = boundary_mixture(m, &feas, &infeas)? {
            candidates.push((mix, r));
        }
    }

    candidates
        .into_iter()
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .map(|(p, _)| p)
        .ok_or_else(|| LspcError::Infeasible(format!("no policy meets V_c(rho0) <= {kappa}")))
}

/// Mixture weight by bisection onto `V_c = kappa`, then a golden-section
/// search for the reward-best weight inside the feasible bracket.
fn boundary_mixture(
    m: &TabularCmdp,
    feas: &CategoricalPolicy,
    infeas: &CategoricalPolicy,
) -> Result<Option<(CategoricalPolicy, f64)>> {
    let eval = |w: f64| values_at_rho0(m, &feas.mix(infeas, w));
    if eval(0.0)?.1 > m.kappa {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > MIX_TOL * 1e-3 {
        let mid = 0.5 * (lo + hi);
        if eval(mid)?.1 <= m.kappa {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let boundary = lo;
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, boundary);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let (mut f1, mut f2) = (eval(x1)?.0, eval(x2)?.0);
    while b - a > MIX_TOL {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = eval(x2)?.0;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = eval(x1)?.0;
        }
    }
    let best = [boundary, 0.5 * (a + b)]
        .into_iter()
        .map(|w| eval(w).map(|v| (w, v)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|(_, v)| v.1 <= m.kappa)
        .max_by(|x, y| x.1 .0.partial_cmp(&y.1 .0).unwrap());
    Ok(best.map(|(w, v)| (feas.mix(infeas, w), v.0)))
}

/// Per-state `KL(p || q)`; infinite when `p` puts mass where `q` has none.
pub fn kl_categorical(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&a, &b)| {
            if a <= 0.0 {
                0.0
            } else if b <= 0.0 {
                f64::INFINITY
            } else {
                a * (a / b).ln()
            }
        })
        .sum::<f64>()
        .max(0.0)
}

pub fn tv_categorical(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// `(E_s[KL(p(.|s) || q(.|s))], E_s[TV(p(.|s), q(.|s))])` under `weighting`.
/// States with zero weight contribute nothing, even with infinite KL.
pub fn policy_divergences(
    m: &TabularCmdp,
    p: &CategoricalPolicy,
    q: &CategoricalPolicy,
    weighting: &[f64],
) -> Result<(f64, f64)> {
    m.check_policy(p)?;
    m.check_policy(q)?;
    if weighting.len() != m.n_states {
        return Err(LspcError::Shape("weighting must cover every state".into()));
    }
    let (mut kl, mut tv) = (0.0, 0.0);
    for (s, &w) in weighting.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        kl += w * kl_categorical(p.row(s), q.row(s));
        tv += w * tv_categorical(p.row(s), q.row(s));
    }
    Ok((kl, tv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::grid::GridHazardSpec;
    use crate::rng;
    use rand::Rng;

    fn single_absorbing(r: f64) -> TabularCmdp {
        TabularCmdp {
            n_states: 1,
            n_actions: 1,
            p: vec![1.0],
            r: vec![r],
            c: vec![0.0],
            gamma: 0.99,
            kappa: 1.0,
            rho0: vec![1.0],
            absorbing: vec![true],
        }
    }

    /// Two states, two actions: action 1 pays more but costs.
    fn two_state() -> TabularCmdp {
        TabularCmdp {
            n_states: 2,
            n_actions: 2,
            p: vec![
                0.9, 0.1, // s0 a0
                0.2, 0.8, // s0 a1
                0.7, 0.3, // s1 a0
                0.1, 0.9, // s1 a1
            ],
            r: vec![0.1, 0.5, 0.2, 1.0],
            c: vec![0.0, 0.3, 0.1, 1.0],
            gamma: 0.9,
            kappa: 3.0,
            rho0: vec![1.0, 0.0],
            absorbing: vec![false, false],
        }
    }

    #[test]
    fn geometric_series_value() {
        let m = single_absorbing(1.0);
        let v = policy_eval(&m, &CategoricalPolicy::uniform(1, 1), Signal::Reward).unwrap();
        assert!((v[0] - 100.0).abs() < 1e-9);
        let v = policy_eval(&single_absorbing(0.0), &CategoricalPolicy::uniform(1, 1), Signal::Reward).unwrap();
        assert_eq!(v, vec![0.0]);
    }

    #[test]
    fn linear_solve_matches_iteration_on_grid() {
        let m = GridHazardSpec::default().build();
        let pol = CategoricalPolicy::uniform(m.n_states, m.n_actions);
        for sig in [Signal::Reward, Signal::Cost] {
            let exact = policy_eval(&m, &pol, sig).unwrap();
            let iter = policy_eval_iterative(&m, &pol, sig, 1e-12).unwrap();
            for (a, b) in exact.iter().zip(&iter) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn stationary_distribution_fixed_point() {
        let m = GridHazardSpec::default().build();
        let pol = CategoricalPolicy::uniform(m.n_states, m.n_actions);
        let (d, sa) = stationary_distribution(&m, &pol).unwrap();
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((sa.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let (p, _) = m.induced(&pol, &m.r);
        let n = m.n_states;
        for s in 0..n {
            let rhs = (1.0 - m.gamma) * m.rho0[s] + m.gamma * (0..n).map(|j| p[j * n + s] * d[j]).sum::<f64>();
            assert!((d[s] - rhs).abs() < 1e-9);
        }
    }

    #[test]
    fn stationary_edge_cases() {
        let m = single_absorbing(0.0);
        let (d, _) = stationary_distribution(&m, &CategoricalPolicy::uniform(1, 1)).unwrap();
        assert!((d[0] - 1.0).abs() < 1e-12);
        let mut g = GridHazardSpec::default().build();
        g.gamma = 0.01;
        let (d, _) = stationary_distribution(&g, &CategoricalPolicy::uniform(g.n_states, g.n_actions)).unwrap();
        let gap = d.iter().zip(&g.rho0).map(|(a, b)| (a - b).abs()).sum::<f64>();
        assert!(gap <= 2.0 * 0.01 + 1e-12);
    }

    #[test]
    fn unconstrained_when_kappa_infinite() {
        let mut m = GridHazardSpec::default().build();
        m.kappa = f64::INFINITY;
        let pol = constrained_optimal(&m).unwrap();
        let vi = CategoricalPolicy::deterministic(m.n_actions, &value_iteration(&m, 1e-12));
        let a = values_at_rho0(&m, &pol).unwrap().0;
        let b = values_at_rho0(&m, &vi).unwrap().0;
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn zero_budget_avoids_hazard_without_slip() {
        let mut m = GridHazardSpec { p_slip: 0.0, ..Default::default() }.build();
        m.kappa = 0.0;
        let pol = constrained_optimal(&m).unwrap();
        let (vr, vc) = values_at_rho0(&m, &pol).unwrap();
        assert_eq!(vc, 0.0);
        assert!(vr > 0.0);
    }

    #[test]
    fn two_state_matches_simplex_grid() {
        let m = two_state();
        let pol = constrained_optimal(&m).unwrap();
        let (vr, vc) = values_at_rho0(&m, &pol).unwrap();
        assert!(vc <= m.kappa + 1e-9);
        let n = 400;
        let mut best = f64::NEG_INFINITY;
        for i in 0..=n {
            for j in 0..=n {
                let (p, q) = (i as f64 / n as f64, j as f64 / n as f64);
                let cand = CategoricalPolicy::new(2, 2, vec![1.0 - p, p, 1.0 - q, q]).unwrap();
                let (r, c) = values_at_rho0(&m, &cand).unwrap();
                if c <= m.kappa {
                    best = best.max(r);
                }
            }
        }
        assert!(vr >= best - 1e-6, "solver {vr} vs grid {best}");
        // The grid resolution bounds how far below the solver it can sit.
        assert!(vr - best < 0.05, "solver {vr} vs grid {best}");
    }

    #[test]
    fn dominates_every_feasible_deterministic_policy() {
        let m = two_state();
        let pol = constrained_optimal(&m).unwrap();
        let vr = values_at_rho0(&m, &pol).unwrap().0;
        for code in 0..4 {
            let det = CategoricalPolicy::deterministic(2, &[code % 2, code / 2]);
            let (r, c) = values_at_rho0(&m, &det).unwrap();
            if c <= m.kappa {
                assert!(vr >= r - 1e-12);
            }
        }
    }

    #[test]
    fn infeasible_budget_is_reported() {
        let mut m = two_state();
        m.c = vec![1.0; 4];
        m.kappa = 1.0;
        assert!(matches!(constrained_optimal(&m), Err(LspcError::Infeasible(_))));
    }

    #[test]
    fn enumeration_limits_are_enforced() {
        let mut m = GridHazardSpec::default().build();
        m.n_actions = 5;
        assert!(constrained_optimal(&m).is_err());
    }

    #[test]
    fn divergence_closed_forms() {
        let m = single_absorbing(0.0);
        let mut m2 = m.clone();
        m2.n_actions = 2;
        let p = CategoricalPolicy::new(1, 2, vec![1.0, 0.0]).unwrap();
        let q = CategoricalPolicy::new(1, 2, vec![0.5, 0.5]).unwrap();
        let (kl, tv) = policy_divergences(&m2, &p, &q, &[1.0]).unwrap();
        assert!((tv - 0.5).abs() < 1e-15);
        assert!((kl - 2f64.ln()).abs() < 1e-15);
        assert_eq!(policy_divergences(&m2, &p, &p, &[1.0]).unwrap(), (0.0, 0.0));
        assert_eq!(policy_divergences(&m2, &q, &p, &[1.0]).unwrap().0, f64::INFINITY);
    }

    #[test]
    fn pinsker_on_random_pairs() {
        let mut r = rng::stream(3, "pinsker", 0);
        for _ in 0..1000 {
            let k = r.random_range(2..6);
            let mut draw = || {
                let v: Vec<f64> = (0..k).map(|_| r.random::<f64>() + 1e-9).collect();
                let s: f64 = v.iter().sum();
                v.into_iter().map(|x| x / s).collect::<Vec<_>>()
            };
            let (p, q) = (draw(), draw());
            assert!(tv_categorical(&p, &q) <= (kl_categorical(&p, &q) / 2.0).sqrt() + 1e-12);
        }
    }
}
