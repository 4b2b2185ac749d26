//! Scripted behavior policies and episode rollouts.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::StandardNormal;

use super::OfflineDataset;
use crate::env::grid::MOVES;
use crate::env::{AnyEnv, CategoricalPolicy, Environment, GridHazard, PointHazard};
use crate::rng::{self, Rng};
use crate::{LspcError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BehaviorKind {
    /// Reward-greedy route through the hazard.
    Straight,
    /// Route around the hazard.
    Detour,
    /// Per-episode choice: detour with probability `w_safe`.
    Mixture,
}

/// Behavior policy. Written as `kind[:key=value,...]`, e.g.
/// `mixture:w_safe=0.5,noise=0.01`. A bare number after `mixture:` is read
/// as `w_safe`.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorSpec {
    pub kind: BehaviorKind,
    pub w_safe: f64,
    /// Point: per-step Gaussian action noise.
    pub noise: f64,
    /// Point: per-episode speed range.
    pub speed_min: f64,
    pub speed_max: f64,
    /// Point: the detour keeps this clearance from the hazard edge, drawn
    /// per episode. Small margins graze the hazard once noise is added.
    pub margin_min: f64,
    pub margin_max: f64,
    /// Grid: probability of a uniformly random move.
    pub eps: f64,
}

impl BehaviorSpec {
    pub fn new(kind: BehaviorKind) -> Self {
        BehaviorSpec {
            kind,
            w_safe: 0.5,
            noise: 0.01,
            speed_min: 0.03,
            speed_max: 0.05,
            margin_min: 0.05,
            margin_max: 0.3,
            eps: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.w_safe) || !unit(self.eps) {
            return Err(LspcError::Config("w_safe and eps must lie in [0, 1]".into()));
        }
        if !(self.noise >= 0.0) || !(0.0 < self.speed_min && self.speed_min <= self.speed_max) {
            return Err(LspcError::Config("need noise >= 0 and 0 < speed_min <= speed_max".into()));
        }
        if !(0.0 <= self.margin_min && self.margin_min <= self.margin_max) {
            return Err(LspcError::Config("need 0 <= margin_min <= margin_max".into()));
        }
        Ok(())
    }

    /// Stationary Markov policy on the grid, for non-mixture kinds.
    pub fn grid_policy(&self, env: &GridHazard) -> Option<CategoricalPolicy> {
        let greedy = match self.kind {
            BehaviorKind::Straight => grid_route(env, false),
            BehaviorKind::Detour => grid_route(env, true),
            BehaviorKind::Mixture => return None,
        };
        let n = env.cmdp.n_states;
        let na = env.cmdp.n_actions;
        Some(CategoricalPolicy::deterministic(na, &greedy).mix(&CategoricalPolicy::uniform(n, na), self.eps))
    }
}

impl FromStr for BehaviorSpec {
    type Err = LspcError;

    fn from_str(s: &str) -> Result<Self> {
        let (name, params) = match s.split_once(':') {
            Some((n, p)) => (n, Some(p)),
            None => (s, None),
        };
        let kind = match name.trim() {
            "straight" => BehaviorKind::Straight,
            "detour" => BehaviorKind::Detour,
            "mixture" => BehaviorKind::Mixture,
            other => return Err(LspcError::Config(format!("unknown behavior {other:?}"))),
        };
        let mut b = BehaviorSpec::new(kind);
        for item in params.into_iter().flat_map(|p| p.split(',')).map(str::trim).filter(|x| !x.is_empty()) {
            let (key, value) = match item.split_once('=') {
                Some(kv) => kv,
                None if kind == BehaviorKind::Mixture => ("w_safe", item),
                None => return Err(LspcError::Config(format!("expected key=value, got {item:?}"))),
            };
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| LspcError::Config(format!("bad number {value:?} for {key}")))?;
            match key.trim() {
                "w_safe" => b.w_safe = v,
                "noise" => b.noise = v,
                "speed_min" => b.speed_min = v,
                "speed_max" => b.speed_max = v,
                "margin_min" => b.margin_min = v,
                "margin_max" => b.margin_max = v,
                "eps" => b.eps = v,
                other => return Err(LspcError::Config(format!("unknown behavior parameter {other:?}"))),
            }
        }
        b.validate()?;
        Ok(b)
    }
}

impl fmt::Display for BehaviorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.kind {
            BehaviorKind::Straight => "straight",
            BehaviorKind::Detour => "detour",
            BehaviorKind::Mixture => "mixture",
        };
        write!(
            f,
            "{name}:w_safe={},noise={},speed_min={},speed_max={},margin_min={},margin_max={},eps={}",
            self.w_safe, self.noise, self.speed_min, self.speed_max, self.margin_min, self.margin_max, self.eps
        )
    }
}

/// Greedy move per state along shortest paths to the goal. With `avoid`,
/// paths may not enter hazard cells.
fn grid_route(env: &GridHazard, avoid: bool) -> Vec<usize> {
    let spec = &env.spec;
    let cells = spec.n_cells();
    let goal = spec.cell(spec.goal.0, spec.goal.1);
    let blocked = |c: usize| avoid && spec.is_hazard(c);
    let mut dist = vec![usize::MAX; cells];
    dist[goal] = 0;
    let mut changed = true;
    while changed {
        changed = false;
        for u in 0..cells {
            if u == goal {
                continue;
            }
            let best = (0..MOVES.len())
                .map(|a| spec.shift(u, a))
                .filter(|&v| v != u && !blocked(v) && dist[v] != usize::MAX)
                .map(|v| dist[v] + 1)
                .min();
            if let Some(d) = best {
                if d < dist[u] {
                    dist[u] = d;
                    changed = true;
                }
            }
        }
    }
    let mut out = vec![0; env.cmdp.n_states];
    for (u, slot) in out.iter_mut().enumerate().take(cells) {
        let mut best = (usize::MAX, 0);
        for a in 0..MOVES.len() {
            let v = spec.shift(u, a);
            if v == u || blocked(v) {
                continue;
            }
            if dist[v] < best.0 {
                best = (dist[v], a);
            }
        }
        *slot = best.1;
    }
    out
}

enum Actor {
    /// `clearance` is the radius of the circle the detour skirts; `None`
    /// heads straight for the goal.
    Point { speed: f64, noise: f64, clearance: Option<f64> },
    Grid { route: Vec<usize>, eps: f64 },
}

impl Actor {
    fn draw(env: &AnyEnv, b: &BehaviorSpec, routes: &[Vec<usize>; 2], rng: &mut Rng) -> Actor {
        let safe = match b.kind {
            BehaviorKind::Straight => false,
            BehaviorKind::Detour => true,
            BehaviorKind::Mixture => rng.random::<f64>() < b.w_safe,
        };
        match env {
            AnyEnv::Point(_) => {
                let speed = if b.speed_max > b.speed_min { rng.random_range(b.speed_min..b.speed_max) } else { b.speed_min };
                let clearance = safe.then(|| if b.margin_max > b.margin_min { rng.random_range(b.margin_min..b.margin_max) } else { b.margin_min });
                Actor::Point { speed, noise: b.noise, clearance }
            }
            AnyEnv::Grid(_) => Actor::Grid { route: routes[safe as usize].clone(), eps: b.eps },
        }
    }

    fn act(&mut self, env: &AnyEnv, state: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        match (self, env) {
            (Actor::Point { speed, noise, clearance }, AnyEnv::Point(p)) => Ok(point_action(p, state, *speed, *noise, *clearance, rng)),
            (Actor::Grid { route, eps }, AnyEnv::Grid(g)) => {
                let s = g.state_index(state)?;
                let a = if rng.random::<f64>() < *eps { rng.random_range(0..MOVES.len()) } else { route[s] };
                Ok(GridHazard::embedding(a).to_vec())
            }
            _ => unreachable!("actor drawn for a different environment"),
        }
    }
}

/// Heading toward the goal, bent around the hazard when a margin is set.
/// The bend depends only on the current state: if the segment to the goal
/// cuts the circle of radius `hazard + margin`, head for the tangent point
/// on the upper-left side; inside the circle, move along it and outward.
fn heading(p: &PointHazard, s: &[f64], margin: Option<f64>) -> [f64; 2] {
    let g = p.spec.goal;
    let to_goal = [g[0] - s[0], g[1] - s[1]];
    let Some(m) = margin else { return to_goal };
    let c = p.spec.hazard_center;
    let r = p.spec.hazard_radius + m;
    let rel = [c[0] - s[0], c[1] - s[1]];
    let dist = (rel[0] * rel[0] + rel[1] * rel[1]).sqrt();
    let len = (to_goal[0] * to_goal[0] + to_goal[1] * to_goal[1]).sqrt().max(1e-12);
    let u = [to_goal[0] / len, to_goal[1] / len];
    let along = rel[0] * u[0] + rel[1] * u[1];
    let miss = (rel[0] * u[1] - rel[1] * u[0]).abs();
    if along <= 0.0 || (along >= len && dist > r) || miss >= r {
        return to_goal;
    }
    if dist <= r {
        // Clockwise about the centre, i.e. over the upper-left side.
        let out = [-rel[0] / dist.max(1e-12), -rel[1] / dist.max(1e-12)];
        let tan = [out[1], -out[0]];
        let push = 1.0 - dist / r;
        return [tan[0] + push * out[0], tan[1] + push * out[1]];
    }
    // Rotate the direction to the centre counter-clockwise by asin(r / dist).
    let th = (r / dist).asin();
    let (sn, cs) = th.sin_cos();
    let v = [rel[0] / dist, rel[1] / dist];
    [cs * v[0] - sn * v[1], sn * v[0] + cs * v[1]]
}

fn point_action(p: &PointHazard, s: &[f64], speed: f64, noise: f64, margin: Option<f64>, rng: &mut Rng) -> Vec<f64> {
    let d = heading(p, s, margin);
    let norm = (d[0] * d[0] + d[1] * d[1]).sqrt().max(1e-12);
    let g = p.spec.goal;
    let step = speed.min(((g[0] - s[0]).powi(2) + (g[1] - s[1]).powi(2)).sqrt());
    let mut a = vec![d[0] / norm * step, d[1] / norm * step];
    if noise > 0.0 {
        for x in a.iter_mut() {
            *x += noise * rng.sample::<f64, _>(StandardNormal);
        }
    }
    p.clip_action(&mut a);
    a
}

/// Rolls whole episodes until at least `n_transitions` are stored.
/// Episode `i` draws from `stream(seed, "collect", i)`.
pub fn collect(env: &AnyEnv, behavior: &BehaviorSpec, n_transitions: usize, seed: u64) -> Result<OfflineDataset> {
    if n_transitions == 0 {
        return Err(LspcError::Config("n_transitions must be positive".into()));
    }
    behavior.validate()?;
    let e = env.as_env();
    let routes = match env {
        AnyEnv::Grid(g) => [grid_route(g, false), grid_route(g, true)],
        AnyEnv::Point(_) => [Vec::new(), Vec::new()],
    };
    let mut ds = OfflineDataset::empty(e.state_dim(), e.action_dim());
    let mut episode = 0u64;
    while ds.n < n_transitions {
        let mut r = rng::stream(seed, rng::COLLECT, episode);
        let mut actor = Actor::draw(env, behavior, &routes, &mut r);
        let mut s = e.reset(&mut r);
        for t in 0..e.horizon() {
            let a = actor.act(env, &s, &mut r)?;
            let st = e.step(&s, &a, &mut r)?;
            let done = st.done || t + 1 == e.horizon();
            ds.push(&s, &a, st.reward, st.cost, &st.next_state, done);
            if done {
                break;
            }
            s = st.next_state;
        }
        episode += 1;
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::GridHazardSpec;

    #[test]
    fn parse_and_display() {
        let b: BehaviorSpec = "mixture:0.25".parse().unwrap();
        assert_eq!(b.kind, BehaviorKind::Mixture);
        assert_eq!(b.w_safe, 0.25);
        let b: BehaviorSpec = "straight:noise=0.05,speed_min=0.1,speed_max=0.1".parse().unwrap();
        assert_eq!(b.noise, 0.05);
        let again: BehaviorSpec = b.to_string().parse().unwrap();
        assert_eq!(again, b);
        assert!("teleport".parse::<BehaviorSpec>().is_err());
        assert!("mixture:w_safe=2".parse::<BehaviorSpec>().is_err());
        assert!("straight:0.5".parse::<BehaviorSpec>().is_err());
    }

    #[test]
    fn zero_transitions_rejected() {
        let env = AnyEnv::from_id("point-hazard").unwrap();
        assert!(collect(&env, &BehaviorSpec::new(BehaviorKind::Detour), 0, 1).is_err());
    }

    #[test]
    fn point_routes() {
        let env = AnyEnv::from_id("point-hazard").unwrap();
        let quiet = |kind: &str| format!("{kind}:noise=0").parse::<BehaviorSpec>().unwrap();
        let detour = collect(&env, &quiet("detour"), 3000, 2).unwrap();
        let straight = collect(&env, &quiet("straight"), 3000, 2).unwrap();
        for e in detour.episodes() {
            assert_eq!(e.cost, 0.0);
            assert!(e.len < 100, "detour timed out");
        }
        for e in straight.episodes() {
            assert!(e.cost >= 10.0);
            assert!(e.len < 100);
        }
        let mean = |ds: &OfflineDataset| ds.episodes().iter().map(|e| e.reward).sum::<f64>() / ds.episodes().len() as f64;
        assert!(mean(&straight) > mean(&detour));
    }

    #[test]
    fn detour_heading_depends_only_on_state() {
        let AnyEnv::Point(p) = AnyEnv::from_id("point-hazard").unwrap() else { unreachable!() };
        let s = [-0.35, 0.0];
        let h = heading(&p, &s, Some(0.1));
        assert_eq!(h, heading(&p, &s, Some(0.1)));
        // Left of the hazard, inside the clearance circle: move up and away.
        assert!(h[1] > 0.0 && h[0] < 0.0);
        // Past the hazard the goal is approached directly.
        let past = [0.2, 0.6];
        assert_eq!(heading(&p, &past, Some(0.1)), [0.8 - 0.2, 0.8 - 0.6]);
        assert_eq!(heading(&p, &[-0.8, -0.8], None), [1.6, 1.6]);
    }

    #[test]
    fn grid_routes_reach_goal() {
        let g = GridHazard::new(GridHazardSpec { p_slip: 0.0, ..Default::default() });
        for avoid in [false, true] {
            let route = grid_route(&g, avoid);
            let goal = g.spec.cell(2, 4);
            let mut s = g.spec.cell(2, 0);
            let mut hits = 0;
            for _ in 0..20 {
                if s == goal {
                    break;
                }
                s = g.spec.shift(s, route[s]);
                hits += g.spec.is_hazard(s) as usize;
            }
            assert_eq!(s, goal);
            assert_eq!(hits > 0, !avoid);
        }
    }
}
