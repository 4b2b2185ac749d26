//! Reference computations written independently of the library solvers.
#![allow(dead_code)]

use lspc::env::{CategoricalPolicy, TabularCmdp};

/// Fixed-policy evaluation by repeated Bellman backups.
pub fn iterate_values(m: &TabularCmdp, pol: &CategoricalPolicy, signal: &[f64]) -> Vec<f64> {
    let (ns, na) = (m.n_states, m.n_actions);
    let mut v = vec![0.0; ns];
    loop {
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            for a in 0..na {
                let p = pol.probs[s * na + a];
                if p == 0.0 {
                    continue;
                }
                let row = &m.p[(s * na + a) * ns..(s * na + a + 1) * ns];
                let cont: f64 = row.iter().zip(&v).map(|(x, y)| x * y).sum();
                next[s] += p * (signal[s * na + a] + m.gamma * cont);
            }
        }
        let diff = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if diff < 1e-13 {
            return v;
        }
    }
}

/// `Q(s, a) = h(s, a) + gamma * sum_s' P(s'|s,a) V(s')`.
pub fn q_from_v(m: &TabularCmdp, v: &[f64], signal: &[f64]) -> Vec<f64> {
    let (ns, na) = (m.n_states, m.n_actions);
    (0..ns * na)
        .map(|k| signal[k] + m.gamma * m.p[k * ns..(k + 1) * ns].iter().zip(v).map(|(x, y)| x * y).sum::<f64>())
        .collect()
}

pub fn at_start(m: &TabularCmdp, v: &[f64]) -> f64 {
    m.rho0.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Normalized discounted state visitation by summing `gamma^t rho_t`.
pub fn visitation(m: &TabularCmdp, pol: &CategoricalPolicy) -> Vec<f64> {
    let (ns, na) = (m.n_states, m.n_actions);
    let mut rho = m.rho0.clone();
    let mut d = vec![0.0; ns];
    let mut disc = 1.0 - m.gamma;
    while disc > 1e-16 {
        for s in 0..ns {
            d[s] += disc * rho[s];
        }
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            for a in 0..na {
                let w = rho[s] * pol.probs[s * na + a];
                if w == 0.0 {
                    continue;
                }
                for (s2, p) in m.p[(s * na + a) * ns..(s * na + a + 1) * ns].iter().enumerate() {
                    next[s2] += w * p;
                }
            }
        }
        rho = next;
        disc *= m.gamma;
    }
    d
}

/// Row-normalized exponential draws, i.e. a flat Dirichlet per state.
pub fn dirichlet_policy(ns: usize, na: usize, rng: &mut impl rand::Rng) -> CategoricalPolicy {
    let mut probs: Vec<f64> = (0..ns * na).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    for row in probs.chunks_mut(na) {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= s);
    }
    CategoricalPolicy::new(ns, na, probs).unwrap()
}
