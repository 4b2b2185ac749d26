//! `point-hazard`: a 2-d point mass that must reach a goal past a hazard disk.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{CmdpStep, Environment};
use crate::rng::Rng;
use crate::{LspcError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointHazardSpec {
    /// Half-width of the square state box.
    pub state_bound: f64,
    /// Half-width of the square action box.
    pub action_bound: f64,
    pub goal: [f64; 2],
    pub goal_radius: f64,
    pub goal_bonus: f64,
    pub hazard_center: [f64; 2],
    pub hazard_radius: f64,
    pub start_mean: [f64; 2],
    pub start_jitter: f64,
    pub horizon: usize,
    /// Standard deviation of additive Gaussian dynamics noise.
    pub sigma_dyn: f64,
}

impl Default for PointHazardSpec {
    fn default() -> Self {
        PointHazardSpec {
            state_bound: 1.0,
            action_bound: 0.2,
            goal: [0.8, 0.8],
            goal_radius: 0.1,
            goal_bonus: 10.0,
            hazard_center: [0.0, 0.0],
            hazard_radius: 0.3,
            start_mean: [-0.8, -0.8],
            start_jitter: 0.05,
            horizon: 100,
            sigma_dyn: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PointHazard {
    pub spec: PointHazardSpec,
}

impl PointHazard {
    pub fn new(spec: PointHazardSpec) -> Self {
        PointHazard { spec }
    }

    pub fn in_hazard(&self, s: &[f64]) -> bool {
        let c = self.spec.hazard_center;
        ((s[0] - c[0]).powi(2) + (s[1] - c[1]).powi(2)).sqrt() < self.spec.hazard_radius
    }

    pub fn goal_distance(&self, s: &[f64]) -> f64 {
        let g = self.spec.goal;
        ((s[0] - g[0]).powi(2) + (s[1] - g[1]).powi(2)).sqrt()
    }
}

impl Environment for PointHazard {
    fn id(&self) -> &str {
        "point-hazard"
    }
    fn state_dim(&self) -> usize {
        2
    }
    fn action_dim(&self) -> usize {
        2
    }
    fn action_bound(&self) -> f64 {
        self.spec.action_bound
    }
    fn horizon(&self) -> usize {
        self.spec.horizon
    }
    fn max_reward(&self) -> f64 {
        // Distances inside the box are at most the diagonal.
        (8.0f64).sqrt() * self.spec.state_bound + self.spec.goal_bonus
    }
    fn max_cost(&self) -> f64 {
        1.0
    }

    fn reset(&self, rng: &mut Rng) -> Vec<f64> {
        let j = self.spec.start_jitter;
        let m = self.spec.start_mean;
        if j > 0.0 {
            vec![m[0] + rng.random_range(-j..=j), m[1] + rng.random_range(-j..=j)]
        } else {
            m.to_vec()
        }
    }

    fn step(&self, state: &[f64], action: &[f64], rng: &mut Rng) -> Result<CmdpStep> {
        if state.len() != 2 || action.len() != 2 {
            return Err(LspcError::Shape("point-hazard states and actions are 2-d".into()));
        }
        if state.iter().chain(action).any(|x| x.is_nan()) {
            return Err(LspcError::Shape("NaN state or action".into()));
        }
        let (ab, sb) = (self.spec.action_bound, self.spec.state_bound);
        let mut next = [0.0; 2];
        for d in 0..2 {
            let noise = if self.spec.sigma_dyn > 0.0 {
                self.spec.sigma_dyn * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            next[d] = (state[d] + action[d].clamp(-ab, ab) + noise).clamp(-sb, sb);
        }
        let dist = self.goal_distance(&next);
        let reached = dist < self.spec.goal_radius;
        Ok(CmdpStep {
            next_state: next.to_vec(),
            reward: -dist + if reached { self.spec.goal_bonus } else { 0.0 },
            cost: if self.in_hazard(&next) { 1.0 } else { 0.0 },
            done: reached,
        })
    }
}
