//! Offline transition data.

mod collect;
mod format;
mod metrics;

pub use collect::{collect, BehaviorKind, BehaviorSpec};
pub use format::{load, read_from, save, write_to};
pub use metrics::{normalized_cost, normalized_reward, MetricDef};

use rand::Rng as _;

use crate::nn::{Mat, Real};
use crate::rng::Rng;
use crate::{LspcError, Result};

/// Flat transition arrays with episode boundaries. Values are stored as
/// `f32`, matching the on-disk format.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    pub n: usize,
    pub state_dim: usize,
    pub action_dim: usize,
    pub states: Vec<f32>,
    pub actions: Vec<f32>,
    pub rewards: Vec<f32>,
    pub costs: Vec<f32>,
    pub next_states: Vec<f32>,
    /// 0.0 or 1.0.
    pub dones: Vec<f32>,
    pub episode_starts: Vec<usize>,
}

/// Summary of one stored episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeStats {
    pub start: usize,
    pub len: usize,
    pub reward: f64,
    pub cost: f64,
}

impl OfflineDataset {
    pub fn empty(state_dim: usize, action_dim: usize) -> Self {
        OfflineDataset {
            n: 0,
            state_dim,
            action_dim,
            states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            costs: Vec::new(),
            next_states: Vec::new(),
            dones: Vec::new(),
            episode_starts: Vec::new(),
        }
    }

    /// Appends one transition; a new episode starts after every `done`.
    pub fn push(&mut self, s: &[f64], a: &[f64], r: f64, c: f64, s2: &[f64], done: bool) {
        if self.n == 0 || self.dones[self.n - 1] == 1.0 {
            self.episode_starts.push(self.n);
        }
        self.states.extend(s.iter().map(|x| *x as f32));
        self.actions.extend(a.iter().map(|x| *x as f32));
        self.rewards.push(r as f32);
        self.costs.push(c as f32);
        self.next_states.extend(s2.iter().map(|x| *x as f32));
        self.dones.push(if done { 1.0 } else { 0.0 });
        self.n += 1;
    }

    /// Checks array lengths, cost signs and the done/episode structure.
    pub fn validate(&self) -> Result<()> {
        let (n, s, a) = (self.n, self.state_dim, self.action_dim);
        if self.states.len() != n * s
            || self.next_states.len() != n * s
            || self.actions.len() != n * a
            || self.rewards.len() != n
            || self.costs.len() != n
            || self.dones.len() != n
        {
            return Err(LspcError::Parse("length mismatch between dataset arrays".into()));
        }
        if self.costs.iter().any(|c| !(*c >= 0.0)) {
            return Err(LspcError::Parse("negative or NaN cost".into()));
        }
        if n == 0 {
            return if self.episode_starts.is_empty() {
                Ok(())
            } else {
                Err(LspcError::Parse("episode starts in an empty dataset".into()))
            };
        }
        if self.episode_starts.first() != Some(&0)
            || self.episode_starts.windows(2).any(|w| w[0] >= w[1])
            || self.episode_starts.last().is_some_and(|&l| l >= n)
        {
            return Err(LspcError::Parse("episode_starts must be strictly increasing from 0".into()));
        }
        for (k, &start) in self.episode_starts.iter().enumerate() {
            let end = self.episode_starts.get(k + 1).copied().unwrap_or(n);
            for i in start..end {
                let want = if i + 1 == end { 1.0 } else { 0.0 };
                if self.dones[i] != want {
                    return Err(LspcError::Parse(format!("done flag at {i} inconsistent with episode boundaries")));
                }
            }
        }
        Ok(())
    }

    pub fn episodes(&self) -> Vec<EpisodeStats> {
        self.episode_starts
            .iter()
            .enumerate()
            .map(|(k, &start)| {
                let end = self.episode_starts.get(k + 1).copied().unwrap_or(self.n);
                EpisodeStats {
                    start,
                    len: end - start,
                    reward: self.rewards[start..end].iter().map(|x| f64::from(*x)).sum(),
                    cost: self.costs[start..end].iter().map(|x| f64::from(*x)).sum(),
                }
            })
            .collect()
    }

    /// Fraction of episodes whose undiscounted cost is within `kappa`.
    pub fn safe_fraction(&self, kappa: f64) -> f64 {
        let eps = self.episodes();
        if eps.is_empty() {
            return 0.0;
        }
        eps.iter().filter(|e| e.cost <= kappa).count() as f64 / eps.len() as f64
    }

    /// Smallest and largest episode return.
    pub fn return_range(&self) -> Option<(f64, f64)> {
        let eps = self.episodes();
        if eps.is_empty() {
            return None;
        }
        Some(eps.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(e.reward), hi.max(e.reward))))
    }

    pub fn state(&self, i: usize) -> &[f32] {
        &self.states[i * self.state_dim..(i + 1) * self.state_dim]
    }

    pub fn action(&self, i: usize) -> &[f32] {
        &self.actions[i * self.action_dim..(i + 1) * self.action_dim]
    }

    pub fn gather<F: Real>(&self, idx: &[usize]) -> Batch<F> {
        let rows = |src: &[f32], w: usize| {
            let mut data = Vec::with_capacity(idx.len() * w);
            for &i in idx {
                data.extend(src[i * w..(i + 1) * w].iter().map(|x| F::lit(f64::from(*x))));
            }
            Mat { rows: idx.len(), cols: w, data }
        };
        let col = |src: &[f32]| idx.iter().map(|&i| F::lit(f64::from(src[i]))).collect::<Vec<F>>();
        Batch {
            indices: idx.to_vec(),
            states: rows(&self.states, self.state_dim),
            actions: rows(&self.actions, self.action_dim),
            rewards: col(&self.rewards),
            costs: col(&self.costs),
            next_states: rows(&self.next_states, self.state_dim),
            dones: col(&self.dones),
        }
    }
}

/// Gathered mini-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<F> {
    pub indices: Vec<usize>,
    pub states: Mat<F>,
    pub actions: Mat<F>,
    pub rewards: Vec<F>,
    pub costs: Vec<F>,
    pub next_states: Mat<F>,
    pub dones: Vec<F>,
}

impl<F: Real> Batch<F> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Uniform sampling with replacement.
pub fn sample_batch<F: Real>(ds: &OfflineDataset, batch_size: usize, rng: &mut Rng) -> Result<Batch<F>> {
    if ds.n == 0 {
        return Err(LspcError::Config("cannot sample from an empty dataset".into()));
    }
    if batch_size == 0 {
        return Err(LspcError::Config("batch size must be at least 1".into()));
    }
    let idx: Vec<usize> = (0..batch_size).map(|_| rng.random_range(0..ds.n)).collect();
    Ok(ds.gather(&idx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    pub(crate) fn tiny(n: usize) -> OfflineDataset {
        let mut ds = OfflineDataset::empty(2, 1);
        for i in 0..n {
            let x = i as f64;
            ds.push(&[x, -x], &[0.5 * x], 1.0 + x, 0.25 * x, &[x + 1.0, -x - 1.0], i % 2 == 1 || i + 1 == n);
        }
        ds
    }

    #[test]
    fn single_transition_batch() {
        let ds = tiny(1);
        let b: Batch<f64> = sample_batch(&ds, 1, &mut rng::stream(0, "b", 0)).unwrap();
        assert_eq!(b.indices, vec![0]);
        let b: Batch<f64> = sample_batch(&ds, 5, &mut rng::stream(0, "b", 0)).unwrap();
        assert!(b.indices.iter().all(|i| *i == 0));
    }

    #[test]
    fn batches_are_reproducible() {
        let ds = tiny(7);
        let a: Batch<f32> = sample_batch(&ds, 32, &mut rng::stream(4, "b", 2)).unwrap();
        let b: Batch<f32> = sample_batch(&ds, 32, &mut rng::stream(4, "b", 2)).unwrap();
        assert_eq!(a.indices, b.indices);
    }

    #[test]
    fn empty_dataset_cannot_be_sampled() {
        let ds = OfflineDataset::empty(2, 1);
        assert!(sample_batch::<f64>(&ds, 1, &mut rng::stream(0, "b", 0)).is_err());
    }

    #[test]
    fn sampler_frequencies_are_uniform() {
        let ds = tiny(10);
        let mut counts = [0usize; 10];
        let mut r = rng::stream(8, "freq", 0);
        for _ in 0..10 {
            let b: Batch<f32> = sample_batch(&ds, 100_000, &mut r).unwrap();
            for i in b.indices {
                counts[i] += 1;
            }
        }
        for c in counts {
            assert!((c as f64 - 1e5).abs() < 1e3, "count {c}");
        }
    }

    #[test]
    fn episode_bookkeeping() {
        let ds = tiny(5);
        ds.validate().unwrap();
        assert_eq!(ds.episode_starts, vec![0, 2, 4]);
        let eps = ds.episodes();
        assert_eq!(eps.len(), 3);
        assert_eq!(eps[1].reward, 3.0 + 4.0);
        let (lo, hi) = ds.return_range().unwrap();
        assert!(eps.iter().all(|e| lo <= e.reward && e.reward <= hi));
        assert!((ds.safe_fraction(0.3) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn inconsistent_dones_fail_validation() {
        let mut ds = tiny(4);
        ds.dones[0] = 1.0;
        assert!(ds.validate().is_err());
    }
}
