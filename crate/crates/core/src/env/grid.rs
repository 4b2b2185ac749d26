//! `grid-hazard`: a 5x5 slippery gridworld with a hazardous middle row.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::tabular::TabularCmdp;
use super::{CmdpStep, Environment};
use crate::rng::Rng;
use crate::{LspcError, Result};

/// Move directions as `(d_col, d_row)`: up, down, right, left.
pub const MOVES: [(i64, i64); 4] = [(0, 1), (0, -1), (1, 0), (-1, 0)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridHazardSpec {
    pub size: usize,
    pub p_slip: f64,
    pub gamma: f64,
    /// Budget on the discounted cost value at the start distribution.
    pub kappa: f64,
    /// `(col, row)`, row 0 at the bottom.
    pub start: (usize, usize),
    pub goal: (usize, usize),
    pub hazards: Vec<(usize, usize)>,
    pub horizon: usize,
    /// Start episodes uniformly over all cells instead of at `start`.
    /// Used for data collection with broad coverage.
    pub uniform_start: bool,
}

impl Default for GridHazardSpec {
    fn default() -> Self {
        GridHazardSpec {
            size: 5,
            p_slip: 0.1,
            gamma: 0.99,
            kappa: 0.2,
            start: (2, 0),
            goal: (2, 4),
            hazards: vec![(1, 2), (2, 2), (3, 2)],
            horizon: 200,
            uniform_start: false,
        }
    }
}

impl GridHazardSpec {
    pub fn n_cells(&self) -> usize {
        self.size * self.size
    }

    /// Index of the absorbing sink entered after the goal.
    pub fn sink(&self) -> usize {
        self.n_cells()
    }

    pub fn cell(&self, col: usize, row: usize) -> usize {
        row * self.size + col
    }

    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell % self.size, cell / self.size)
    }

    pub fn is_hazard(&self, cell: usize) -> bool {
        cell < self.n_cells() && self.hazards.iter().any(|&(c, r)| self.cell(c, r) == cell)
    }

    pub(crate) fn shift(&self, cell: usize, dir: usize) -> usize {
        let (c, r) = self.coords(cell);
        let (dc, dr) = MOVES[dir];
        let nc = c as i64 + dc;
        let nr = r as i64 + dr;
        if nc < 0 || nr < 0 || nc >= self.size as i64 || nr >= self.size as i64 {
            cell
        } else {
            self.cell(nc as usize, nr as usize)
        }
    }

    /// Goal pays 1 on its single exit into the sink; hazard cells cost 1
    /// under every action.
    pub fn build(&self) -> TabularCmdp {
        let ns = self.n_cells() + 1;
        let na = MOVES.len();
        let sink = self.sink();
        let goal = self.cell(self.goal.0, self.goal.1);
        let mut p = vec![0.0; ns * na * ns];
        let mut r = vec![0.0; ns * na];
        let mut c = vec![0.0; ns * na];
        for s in 0..ns {
            for a in 0..na {
                let row = &mut p[(s * na + a) * ns..(s * na + a + 1) * ns];
                if s == sink || s == goal {
                    row[sink] = 1.0;
                    if s == goal {
                        r[s * na + a] = 1.0;
                    }
                    continue;
                }
                row[self.shift(s, a)] += 1.0 - self.p_slip;
                for other in (0..na).filter(|&o| o != a) {
                    row[self.shift(s, other)] += self.p_slip / (na - 1) as f64;
                }
                if self.is_hazard(s) {
                    c[s * na + a] = 1.0;
                }
            }
        }
        let mut rho0 = vec![0.0; ns];
        rho0[self.cell(self.start.0, self.start.1)] = 1.0;
        let mut absorbing = vec![false; ns];
        absorbing[sink] = true;
        TabularCmdp { n_states: ns, n_actions: na, p, r, c, gamma: self.gamma, kappa: self.kappa, rho0, absorbing }
    }
}

/// Continuous-interface wrapper: one-hot states and 2-d action embeddings.
/// A continuous action is mapped to the move with the largest dot product.
#[derive(Debug, Clone)]
pub struct GridHazard {
    pub spec: GridHazardSpec,
    pub cmdp: TabularCmdp,
}

impl GridHazard {
    pub fn new(spec: GridHazardSpec) -> Self {
        let cmdp = spec.build();
        GridHazard { spec, cmdp }
    }

    pub fn one_hot(&self, s: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.cmdp.n_states];
        v[s] = 1.0;
        v
    }

    pub fn state_index(&self, state: &[f64]) -> Result<usize> {
        if state.len() != self.cmdp.n_states {
            return Err(LspcError::Shape(format!("grid state needs {} dims", self.cmdp.n_states)));
        }
        if state.iter().any(|x| x.is_nan()) {
            return Err(LspcError::Shape("NaN state".into()));
        }
        Ok(state
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap())
    }

    pub fn embedding(a: usize) -> [f64; 2] {
        [MOVES[a].0 as f64, MOVES[a].1 as f64]
    }

    /// Nearest move by dot product; ties resolve to the lower index.
    pub fn action_index(action: &[f64]) -> usize {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for a in 0..MOVES.len() {
            let e = Self::embedding(a);
            let score = e[0] * action[0] + e[1] * action[1];
            if score > best_score {
                best = a;
                best_score = score;
            }
        }
        best
    }

    /// Samples a successor from the transition row.
    pub fn sample_next(&self, s: usize, a: usize, rng: &mut Rng) -> usize {
        let u: f64 = rng.random();
        let row = self.cmdp.trans(s, a);
        let mut acc = 0.0;
        for (s2, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return s2;
            }
        }
        row.iter().rposition(|p| *p > 0.0).unwrap()
    }
}

impl Environment for GridHazard {
    fn id(&self) -> &str {
        "grid-hazard"
    }
    fn state_dim(&self) -> usize {
        self.cmdp.n_states
    }
    fn action_dim(&self) -> usize {
        2
    }
    fn action_bound(&self) -> f64 {
        1.0
    }
    fn horizon(&self) -> usize {
        self.spec.horizon
    }
    fn max_reward(&self) -> f64 {
        self.cmdp.max_reward()
    }
    fn max_cost(&self) -> f64 {
        self.cmdp.max_cost()
    }

    fn reset(&self, rng: &mut Rng) -> Vec<f64> {
        let s = if self.spec.uniform_start {
            rng.random_range(0..self.spec.n_cells())
        } else {
            self.spec.cell(self.spec.start.0, self.spec.start.1)
        };
        self.one_hot(s)
    }

    fn step(&self, state: &[f64], action: &[f64], rng: &mut Rng) -> Result<CmdpStep> {
        if action.len() != 2 || action.iter().any(|x| x.is_nan()) {
            return Err(LspcError::Shape("grid action must be 2 finite values".into()));
        }
        let s = self.state_index(state)?;
        let a = Self::action_index(action);
        let na = self.cmdp.n_actions;
        let next = self.sample_next(s, a, rng);
        Ok(CmdpStep {
            next_state: self.one_hot(next),
            reward: self.cmdp.r[s * na + a],
            cost: self.cmdp.c[s * na + a],
            done: next == self.spec.sink(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::tabular::{policy_eval, CategoricalPolicy, Signal};
    use crate::rng;

    #[test]
    fn no_slip_transitions_are_one_hot() {
        let m = GridHazardSpec { p_slip: 0.0, ..Default::default() }.build();
        assert!(m.p.iter().all(|p| *p == 0.0 || *p == 1.0));
        m.validate().unwrap();
    }

    #[test]
    fn rows_are_stochastic_and_hazards_cost() {
        let spec = GridHazardSpec::default();
        let m = spec.build();
        m.validate().unwrap();
        for &(c, r) in &spec.hazards {
            let s = spec.cell(c, r);
            for a in 0..4 {
                assert_eq!(m.c[s * 4 + a], 1.0);
            }
        }
        assert_eq!(m.gamma, 0.99);
        assert_eq!(m.n_states, 26);
    }

    #[test]
    fn action_embedding_round_trip() {
        for a in 0..4 {
            assert_eq!(GridHazard::action_index(&GridHazard::embedding(a)), a);
        }
    }

    #[test]
    fn uniform_policy_value_matches_monte_carlo() {
        let env = GridHazard::new(GridHazardSpec::default());
        let m = &env.cmdp;
        let pol = CategoricalPolicy::uniform(m.n_states, m.n_actions);
        let exact_r = m.at_rho0(&policy_eval(m, &pol, Signal::Reward).unwrap());
        let exact_c = m.at_rho0(&policy_eval(m, &pol, Signal::Cost).unwrap());
        let episodes = 100_000;
        let start = env.spec.cell(env.spec.start.0, env.spec.start.1);
        let sink = env.spec.sink();
        let mut r = rng::stream(17, "grid-mc", 0);
        let (mut sr, mut sr2, mut sc, mut sc2) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..episodes {
            let (mut s, mut disc, mut gr, mut gc) = (start, 1.0, 0.0, 0.0);
            while s != sink && disc > 1e-10 {
                let a = r.random_range(0..4);
                gr += disc * m.r[s * 4 + a];
                gc += disc * m.c[s * 4 + a];
                s = env.sample_next(s, a, &mut r);
                disc *= m.gamma;
            }
            sr += gr;
            sr2 += gr * gr;
            sc += gc;
            sc2 += gc * gc;
        }
        let n = episodes as f64;
        for (sum, sq, exact) in [(sr, sr2, exact_r), (sc, sc2, exact_c)] {
            let mean = sum / n;
            let se = ((sq / n - mean * mean) / n).sqrt();
            assert!((mean - exact).abs() < 3.0 * se, "mc {mean} exact {exact} se {se}");
        }
    }
}
