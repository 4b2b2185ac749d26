//! Exact verification of the tabular performance and safety bounds.
//!
//! For a learned policy `pi`, a restricted policy `pi_s` and a reference
//! `pi_ref` (by default the constrained optimum), with `d` the normalized
//! discounted state visitation of `pi_ref`:
//!
//! - occupancy: `TV(d_pi, d) <= g/(1-g) * E_d[TV(pi, pi_ref)]`
//! - reward gap: `|V_r(pi) - V_r(pi_ref)| <= 2 R/(1-g)^2 * E_d[TV]`
//! - cost gap: `|V_c(pi) - V_c(pi_ref)| <= 2 C/(1-g)^2 * E_d[TV]`
//! - split: `E_d[TV] <= sqrt(e1/2) + sqrt(e2/2)` with
//!   `e1 = E_d[KL(pi || pi_s)]`, `e2 = E_d[KL(pi_s || pi_ref)]`
//! - performance: `V_r(pi_ref) - V_r(pi) <= 2 R/(1-g)^2 * (sqrt(e1/2) + sqrt(e2/2))`
//! - safety: `max(V_c(pi) - kappa, 0) <= 2 C/(1-g)^2 * (sqrt(e1/2) + sqrt(e2/2))`
//!
//! The safety bound needs `V_c(pi_ref) <= kappa`. An infinite divergence
//! makes the corresponding check hold vacuously; it is flagged as such.

use serde::{Deserialize, Serialize};

use crate::env::tabular::{kl_categorical, tv_categorical};
use crate::env::{constrained_optimal, policy_divergences, stationary_distribution, values_at_rho0, CategoricalPolicy, TabularCmdp};
use crate::{LspcError, Result};

pub const THEORY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    /// The right-hand side is infinite.
    pub vacuous: bool,
}

impl BoundCheck {
    fn new(name: &str, lhs: f64, rhs: f64) -> Self {
        let vacuous = rhs.is_infinite();
        BoundCheck { name: name.into(), lhs, rhs, holds: vacuous || lhs <= rhs + THEORY_TOL, vacuous }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub reference: String,
    pub gamma: f64,
    pub kappa: f64,
    pub max_reward: f64,
    pub max_cost: f64,
    pub v_r: f64,
    pub v_c: f64,
    pub v_r_ref: f64,
    pub v_c_ref: f64,
    pub eps1: f64,
    pub eps2: f64,
    /// Largest per-state divergences over the support of the reference visitation.
    pub eps1_sup: f64,
    pub eps2_sup: f64,
    pub expected_tv: f64,
    pub occupancy_tv: f64,
    pub checks: Vec<BoundCheck>,
    pub finite_kl: bool,
    pub all_hold: bool,
}

impl TheoryReport {
    pub fn check(&self, name: &str) -> Option<&BoundCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const CHECK_NAMES: [&str; 6] = ["occupancy", "reward_gap", "cost_gap", "tv_split", "performance", "safety"];

fn scaled(coef: f64, x: f64) -> f64 {
    if x.is_infinite() {
        f64::INFINITY
    } else {
        coef * x
    }
}

/// Checks every bound against an arbitrary reference policy whose cost
/// value does not exceed `kappa`.
pub fn bound_check(
    m: &TabularCmdp,
    pi: &CategoricalPolicy,
    pi_s: &CategoricalPolicy,
    reference: &CategoricalPolicy,
    kappa: f64,
    label: &str,
) -> Result<TheoryReport> {
    m.validate()?;
    let (v_r_ref, v_c_ref) = values_at_rho0(m, reference)?;
    if v_c_ref > kappa + THEORY_TOL {
        return Err(LspcError::Infeasible(format!("reference cost {v_c_ref} exceeds kappa {kappa}")));
    }
    let (v_r, v_c) = values_at_rho0(m, pi)?;
    let (d_ref, _) = stationary_distribution(m, reference)?;
    let (d_pi, _) = stationary_distribution(m, pi)?;

    let (eps1, _) = policy_divergences(m, pi, pi_s, &d_ref)?;
    let (eps2, _) = policy_divergences(m, pi_s, reference, &d_ref)?;
    let (_, expected_tv) = policy_divergences(m, pi, reference, &d_ref)?;
    let (mut eps1_sup, mut eps2_sup) = (0.0f64, 0.0f64);
    for (s, &w) in d_ref.iter().enumerate() {
        if w > 0.0 {
            eps1_sup = eps1_sup.max(kl_categorical(pi.row(s), pi_s.row(s)));
            eps2_sup = eps2_sup.max(kl_categorical(pi_s.row(s), reference.row(s)));
        }
    }
    let occupancy_tv = tv_categorical(&d_pi, &d_ref);

    let g = m.gamma;
    let r_max = m.max_reward();
    let c_max = m.max_cost();
    let horizon2 = (1.0 - g).powi(2);
    let split = (eps1 / 2.0).sqrt() + (eps2 / 2.0).sqrt();
    let checks = vec![
        BoundCheck::new("occupancy", occupancy_tv, g / (1.0 - g) * expected_tv),
        BoundCheck::new("reward_gap", (v_r - v_r_ref).abs(), 2.0 * r_max / horizon2 * expected_tv),
        BoundCheck::new("cost_gap", (v_c - v_c_ref).abs(), 2.0 * c_max / horizon2 * expected_tv),
        BoundCheck::new("tv_split", expected_tv, split),
        BoundCheck::new("performance", v_r_ref - v_r, scaled(2.0 * r_max / horizon2, split)),
        BoundCheck::new("safety", (v_c - kappa).max(0.0), scaled(2.0 * c_max / horizon2, split)),
    ];
    let all_hold = checks.iter().all(|c| c.holds);
    Ok(TheoryReport {
        reference: label.into(),
        gamma: g,
        kappa,
        max_reward: r_max,
        max_cost: c_max,
        v_r,
        v_c,
        v_r_ref,
        v_c_ref,
        eps1,
        eps2,
        eps1_sup,
        eps2_sup,
        expected_tv,
        occupancy_tv,
        checks,
        finite_kl: eps1.is_finite() && eps2.is_finite(),
        all_hold,
    })
}

/// Bound checks against the exact constrained optimum of `m`.
pub fn theory_check(m: &TabularCmdp, pi: &CategoricalPolicy, pi_s: &CategoricalPolicy) -> Result<TheoryReport> {
    let opt = constrained_optimal(m)?;
    bound_check(m, pi, pi_s, &opt, m.kappa, "constrained_optimal")
}

/// Bound checks against the constrained optimum blended with the uniform
/// policy at weight `delta`, with `kappa` raised to that blend's cost if
/// needed. Full support keeps both divergences finite.
pub fn theory_check_smoothed(
    m: &TabularCmdp,
    pi: &CategoricalPolicy,
    pi_s: &CategoricalPolicy,
    delta: f64,
) -> Result<TheoryReport> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(LspcError::Config("smoothing weight must be in (0, 1]".into()));
    }
    let opt = constrained_optimal(m)?;
    let reference = opt.mix(&CategoricalPolicy::uniform(m.n_states, m.n_actions), delta);
    let (_, vc) = values_at_rho0(m, &reference)?;
    bound_check(m, pi, pi_s, &reference, m.kappa.max(vc), "smoothed_optimal")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{GridHazard, GridHazardSpec};
    use crate::rng;
    use rand::Rng as _;
    use rand_distr::Exp1;

    fn random_policy(m: &TabularCmdp, r: &mut rng::Rng) -> CategoricalPolicy {
        let mut probs: Vec<f64> = (0..m.n_states * m.n_actions).map(|_| r.sample(Exp1)).collect();
        for row in probs.chunks_mut(m.n_actions) {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= s);
        }
        CategoricalPolicy::new(m.n_states, m.n_actions, probs).unwrap()
    }

    #[test]
    fn identical_policies_give_zero_everywhere() {
        let m = GridHazard::new(GridHazardSpec::default()).cmdp;
        let opt = constrained_optimal(&m).unwrap();
        let rep = theory_check(&m, &opt, &opt).unwrap();
        assert!(rep.all_hold && rep.finite_kl);
        for c in &rep.checks {
            assert!(c.lhs.abs() < 1e-9 && c.rhs.abs() < 1e-9, "{c:?}");
        }
    }

    #[test]
    fn random_pairs_hold_against_smoothed_reference() {
        let m = GridHazard::new(GridHazardSpec::default()).cmdp;
        let mut r = rng::stream(5, "test", 0);
        for _ in 0..5 {
            let pi = random_policy(&m, &mut r);
            let pi_s = random_policy(&m, &mut r);
            let rep = theory_check_smoothed(&m, &pi, &pi_s, 0.1).unwrap();
            assert!(rep.finite_kl);
            assert!(rep.all_hold, "{rep:?}");
            assert!(rep.checks.iter().all(|c| !c.vacuous));
        }
    }

    #[test]
    fn deterministic_reference_is_flagged_vacuous() {
        let m = GridHazard::new(GridHazardSpec::default()).cmdp;
        let mut r = rng::stream(6, "test", 0);
        let pi = random_policy(&m, &mut r);
        let rep = theory_check(&m, &pi, &pi).unwrap();
        assert!(!rep.finite_kl);
        assert!(rep.check("performance").unwrap().vacuous);
        assert!(!rep.check("occupancy").unwrap().vacuous);
        assert!(rep.all_hold);
    }

    #[test]
    fn infeasible_reference_is_rejected() {
        let m = GridHazard::new(GridHazardSpec::default()).cmdp;
        let u = CategoricalPolicy::uniform(m.n_states, m.n_actions);
        let (_, vc) = values_at_rho0(&m, &u).unwrap();
        assert!(bound_check(&m, &u, &u, &u, vc - 0.1, "uniform").is_err());
    }
}
