mod common;

use lspc::env::tabular::{kl_categorical, tv_categorical};
use lspc::env::{constrained_optimal, CategoricalPolicy, GridHazard, GridHazardSpec, TabularCmdp};
use lspc::eval::theory::{bound_check, theory_check_smoothed, THEORY_TOL};
use lspc::eval::theory_check;
use lspc::rng;

fn grid() -> TabularCmdp {
    GridHazard::new(GridHazardSpec::default()).cmdp
}

/// Recomputes every bound from scratch and compares with the report.
fn independent_bounds(m: &TabularCmdp, pi: &CategoricalPolicy, pi_s: &CategoricalPolicy, reference: &CategoricalPolicy, kappa: f64) -> Vec<(f64, f64)> {
    let d = common::visitation(m, reference);
    let d_pi = common::visitation(m, pi);
    let (mut e1, mut e2, mut etv) = (0.0, 0.0, 0.0);
    for s in 0..m.n_states {
        if d[s] > 0.0 {
            e1 += d[s] * kl_categorical(pi.row(s), pi_s.row(s));
            e2 += d[s] * kl_categorical(pi_s.row(s), reference.row(s));
            etv += d[s] * tv_categorical(pi.row(s), reference.row(s));
        }
    }
    let vr = common::at_start(m, &common::iterate_values(m, pi, &m.r));
    let vc = common::at_start(m, &common::iterate_values(m, pi, &m.c));
    let vr_ref = common::at_start(m, &common::iterate_values(m, reference, &m.r));
    let vc_ref = common::at_start(m, &common::iterate_values(m, reference, &m.c));
    let g = m.gamma;
    let rm = m.r.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let cm = m.c.iter().fold(0.0f64, |a, b| a.max(*b));
    let split = (e1 / 2.0).sqrt() + (e2 / 2.0).sqrt();
    let k = 2.0 / (1.0 - g).powi(2);
    vec![
        (0.5 * d_pi.iter().zip(&d).map(|(a, b)| (a - b).abs()).sum::<f64>(), g / (1.0 - g) * etv),
        ((vr - vr_ref).abs(), k * rm * etv),
        ((vc - vc_ref).abs(), k * cm * etv),
        (etv, split),
        (vr_ref - vr, k * rm * split),
        ((vc - kappa).max(0.0), k * cm * split),
    ]
}

#[test]
fn identical_policies_are_tight() {
    let m = grid();
    let opt = constrained_optimal(&m).unwrap();
    let rep = theory_check(&m, &opt, &opt).unwrap();
    assert!(rep.all_hold);
    assert_eq!(rep.checks.len(), 6);
    for c in &rep.checks {
        assert!(c.lhs.abs() <= 1e-9 && c.rhs.abs() <= 1e-9, "{c:?}");
    }
}

#[test]
fn perturbed_optimum_holds_with_slack() {
    let m = grid();
    let opt = constrained_optimal(&m).unwrap();
    let pi = opt.mix(&CategoricalPolicy::uniform(m.n_states, m.n_actions), 0.01);
    let rep = theory_check(&m, &pi, &opt).unwrap();
    assert!(rep.all_hold);
    for c in &rep.checks {
        assert!(c.vacuous || c.rhs - c.lhs > 0.0, "{c:?}");
    }
    // KL(pi || pi*) is infinite wherever pi* is deterministic.
    assert!(!rep.finite_kl);
    assert!(!rep.check("occupancy").unwrap().vacuous);
    assert!(!rep.check("reward_gap").unwrap().vacuous);
}

#[test]
fn dirichlet_pairs_never_violate() {
    let m = grid();
    let mut r = rng::stream(9, "theory-test", 0);
    for _ in 0..10 {
        let pi = common::dirichlet_policy(m.n_states, m.n_actions, &mut r);
        let pi_s = common::dirichlet_policy(m.n_states, m.n_actions, &mut r);
        let reference = common::dirichlet_policy(m.n_states, m.n_actions, &mut r);
        let vc_ref = common::at_start(&m, &common::iterate_values(&m, &reference, &m.c));
        let rep = bound_check(&m, &pi, &pi_s, &reference, vc_ref, "dirichlet").unwrap();
        assert!(rep.finite_kl);
        let oracle = independent_bounds(&m, &pi, &pi_s, &reference, vc_ref);
        for (c, (lhs, rhs)) in rep.checks.iter().zip(&oracle) {
            assert!((c.lhs - lhs).abs() < 1e-8 && (c.rhs - rhs).abs() < 1e-8 * rhs.max(1.0), "{c:?} vs {lhs} {rhs}");
            assert!(c.holds && *lhs <= rhs + THEORY_TOL, "{c:?}");
        }
        let smoothed = theory_check_smoothed(&m, &pi, &pi_s, 0.05).unwrap();
        assert!(smoothed.all_hold && smoothed.finite_kl);
        let opt = theory_check(&m, &pi, &pi_s).unwrap();
        assert!(opt.all_hold);
    }
}

#[test]
fn pinsker_holds_per_state() {
    let m = grid();
    let mut r = rng::stream(10, "theory-test", 0);
    for _ in 0..20 {
        let p = common::dirichlet_policy(m.n_states, m.n_actions, &mut r);
        let q = common::dirichlet_policy(m.n_states, m.n_actions, &mut r);
        for s in 0..m.n_states {
            assert!(tv_categorical(p.row(s), q.row(s)) <= (kl_categorical(p.row(s), q.row(s)) / 2.0).sqrt() + 1e-12);
        }
    }
}
