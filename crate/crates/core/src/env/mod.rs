//! Toy constrained MDPs.

pub mod grid;
pub mod point;
pub mod tabular;

pub use grid::{GridHazard, GridHazardSpec};
pub use point::{PointHazard, PointHazardSpec};
pub use tabular::{
    constrained_optimal, policy_divergences, policy_eval, stationary_distribution, values_at_rho0,
    CategoricalPolicy, Signal, TabularCmdp,
};

use crate::rng::Rng;
use crate::{LspcError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CmdpStep {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub cost: f64,
    pub done: bool,
}

/// Episodic CMDP with a symmetric box action space `[-b, b]^d`.
pub trait Environment: Send + Sync {
    fn id(&self) -> &str;
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn action_bound(&self) -> f64;
    fn horizon(&self) -> usize;
    /// Upper bound on `|r|` per step.
    fn max_reward(&self) -> f64;
    /// Upper bound on `c` per step.
    fn max_cost(&self) -> f64;
    fn reset(&self, rng: &mut Rng) -> Vec<f64>;
    /// Advances one step. `done` reports true termination only; callers
    /// truncate at the horizon.
    fn step(&self, state: &[f64], action: &[f64], rng: &mut Rng) -> Result<CmdpStep>;

    fn clip_action(&self, action: &mut [f64]) {
        let b = self.action_bound();
        action.iter_mut().for_each(|a| *a = a.clamp(-b, b));
    }
}

/// Any of the built-in environments.
#[derive(Debug, Clone)]
pub enum AnyEnv {
    Point(PointHazard),
    Grid(GridHazard),
}

impl AnyEnv {
    /// Parses `point-hazard` or `grid-hazard`, optionally followed directly
    /// by a JSON object overriding spec fields, e.g.
    /// `grid-hazard{"p_slip":0.0}`.
    pub fn from_id(id: &str) -> Result<Self> {
        let (name, overrides) = match id.find('{') {
            Some(at) => (&id[..at], Some(&id[at..])),
            None => (id, None),
        };
        let parse_err = |e: serde_json::Error| LspcError::Config(format!("bad overrides for {name}: {e}"));
        match name.trim() {
            "point-hazard" => {
                let spec = match overrides {
                    Some(js) => serde_json::from_str(js).map_err(parse_err)?,
                    None => PointHazardSpec::default(),
                };
                Ok(AnyEnv::Point(PointHazard::new(spec)))
            }
            "grid-hazard" => {
                let spec = match overrides {
                    Some(js) => serde_json::from_str(js).map_err(parse_err)?,
                    None => GridHazardSpec::default(),
                };
                Ok(AnyEnv::Grid(GridHazard::new(spec)))
            }
            other => Err(LspcError::Config(format!("unknown environment {other:?}"))),
        }
    }

    /// Round-trippable id including every spec field.
    pub fn describe(&self) -> String {
        match self {
            AnyEnv::Point(e) => format!("point-hazard{}", serde_json::to_string(&e.spec).expect("serializable")),
            AnyEnv::Grid(e) => format!("grid-hazard{}", serde_json::to_string(&e.spec).expect("serializable")),
        }
    }

    pub fn as_env(&self) -> &dyn Environment {
        match self {
            AnyEnv::Point(e) => e,
            AnyEnv::Grid(e) => e,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_with_overrides_round_trip() {
        let e = AnyEnv::from_id(r#"grid-hazard{"p_slip":0.0}"#).unwrap();
        match &e {
            AnyEnv::Grid(g) => assert_eq!(g.spec.p_slip, 0.0),
            _ => panic!("wrong env"),
        }
        let again = AnyEnv::from_id(&e.describe()).unwrap();
        assert_eq!(again.describe(), e.describe());
        assert!(AnyEnv::from_id("cart-pole").is_err());
        assert!(AnyEnv::from_id(r#"point-hazard{"bogus":1}"#).is_err());
    }
}
