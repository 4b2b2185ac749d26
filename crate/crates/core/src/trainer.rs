//! Training loop, configuration and checkpoints.
//!
//! Each iteration samples one batch and then, in order, updates the reward
//! value net, both reward Q nets, the cost value net, both cost Q nets,
//! the CVAE, every latent encoder, and finally soft-updates the four
//! targets. All randomness comes from step-indexed streams, so a resumed
//! run reproduces an uninterrupted one exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::critics::{CriticParams, CriticSet};
use crate::dataset::{sample_batch, MetricDef, OfflineDataset};
use crate::env::AnyEnv;
use crate::eval::{evaluate, BundleActor};
use crate::nn::checkpoint::TensorStore;
use crate::nn::{Activation, AdamState, Grads, Mlp, Real};
use crate::policy::{standard_normal_mat, LatentSampler, PolicyBundle, PolicyKind, PolicyParams};
use crate::rng;
use crate::{Float, LspcError, Result};

pub const MODEL_FILE: &str = "model.ckpt";
pub const META_FILE: &str = "model.json";
pub const OPTIM_FILE: &str = "optim.ckpt";
pub const STATE_FILE: &str = "train_state.json";
pub const LOG_FILE: &str = "log.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    /// Hidden widths shared by every network.
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub tau: f64,
    pub xi: f64,
    /// Allows `xi = 0.5`.
    pub ablation: bool,
    pub lambda: f64,
    pub zeta: f64,
    pub lr: f64,
    pub w_max: f64,
    pub kl_coef: f64,
    pub d_z: usize,
    pub epsilon: f64,
    /// Additional latent encoders trained in the same loop, one per radius.
    pub extra_epsilons: Vec<f64>,
    pub c_zero_thresh: Option<f64>,
    pub sampler: LatentSampler,
    /// Iterations that update only the critics.
    pub critic_warmup_steps: usize,
    pub seed: u64,
    /// Log interval in steps; 0 disables logging.
    pub eval_every: usize,
    /// Rollouts per policy at each log interval; 0 skips them.
    pub eval_episodes: usize,
    /// Cost threshold used to normalize interval rollouts.
    pub kappa: f64,
    pub env: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::paper()
    }
}

impl TrainConfig {
    /// Full-size hyperparameters.
    pub fn paper() -> Self {
        TrainConfig {
            steps: 100_000,
            batch_size: 1024,
            hidden: vec![256, 256],
            gamma: 0.99,
            tau: 0.005,
            xi: 0.7,
            ablation: false,
            lambda: 2.0,
            zeta: 2.0,
            lr: 3e-4,
            w_max: 200.0,
            kl_coef: 0.5,
            d_z: 32,
            epsilon: 0.25,
            extra_epsilons: Vec::new(),
            c_zero_thresh: None,
            sampler: LatentSampler::Clip,
            critic_warmup_steps: 0,
            seed: 0,
            eval_every: 1000,
            eval_episodes: 0,
            kappa: 5.0,
            env: "point-hazard".into(),
        }
    }

    /// Small networks and batches for single-core machines.
    pub fn desk() -> Self {
        TrainConfig { batch_size: 256, hidden: vec![64, 64], d_z: 8, steps: 6_000, ..TrainConfig::paper() }
    }

    /// Parses a flat JSON object. An optional `"profile"` key (`"paper"` or
    /// `"desk"`) picks the base values that the other keys override.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| LspcError::Parse(format!("config: {e}")))?;
        let Value::Object(mut obj) = value else {
            return Err(LspcError::Config("config must be a JSON object".into()));
        };
        let base = match obj.remove("profile") {
            None => TrainConfig::paper(),
            Some(Value::String(p)) if p == "paper" => TrainConfig::paper(),
            Some(Value::String(p)) if p == "desk" => TrainConfig::desk(),
            Some(other) => return Err(LspcError::Config(format!("unknown profile {other}"))),
        };
        Self::overlay(base, obj)
    }

    /// Applies `overrides` on top of `base`; unknown keys are rejected.
    pub fn overlay(base: TrainConfig, overrides: Map<String, Value>) -> Result<Self> {
        let Value::Object(mut merged) = serde_json::to_value(&base)? else {
            unreachable!("config serializes to an object")
        };
        for (k, v) in overrides {
            if !merged.contains_key(&k) {
                return Err(LspcError::Config(format!("unknown config key {k:?}")));
            }
            merged.insert(k, v);
        }
        let cfg: TrainConfig =
            serde_json::from_value(Value::Object(merged)).map_err(|e| LspcError::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn critic_params(&self) -> CriticParams {
        CriticParams { xi: self.xi, gamma: self.gamma, tau: self.tau, ablation: self.ablation }
    }

    pub fn policy_params(&self, action_bound: f64) -> PolicyParams {
        PolicyParams {
            epsilon: self.epsilon,
            lambda: self.lambda,
            zeta: self.zeta,
            kl_coef: self.kl_coef,
            w_max: self.w_max,
            c_zero_thresh: self.c_zero_thresh,
            sampler: self.sampler,
            action_bound,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.critic_params().validate()?;
        self.policy_params(1.0).validate()?;
        if self.batch_size == 0 || self.d_z == 0 || self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(LspcError::Config("batch_size, d_z and hidden widths must be positive".into()));
        }
        if !(self.lr > 0.0) {
            return Err(LspcError::Config("learning rate must be positive".into()));
        }
        if self.extra_epsilons.iter().any(|e| !(*e >= 0.0 && e.is_finite())) || !self.epsilon.is_finite() {
            return Err(LspcError::Config("training radii must be finite and non-negative".into()));
        }
        if !(self.kappa >= 0.0) {
            return Err(LspcError::Config("kappa must be non-negative".into()));
        }
        Ok(())
    }
}

/// Mean undiscounted returns of one policy at a log interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalEval {
    pub policy: String,
    pub mean_reward: f64,
    pub mean_cost: f64,
    pub normalized_reward: f64,
    pub normalized_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    /// Completed iterations.
    pub step: usize,
    pub v_loss: f64,
    pub q_loss: f64,
    pub vc_loss: f64,
    pub qc_loss: f64,
    /// Absent during critic warm-up.
    pub cvae_loss: Option<f64>,
    pub encoder_loss: Option<f64>,
    pub mean_cost_weight: Option<f64>,
    pub mean_reward_weight: Option<f64>,
    pub eval: Vec<IntervalEval>,
}

/// Parameter mutation tags, recorded when tracing is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Update {
    RewardValue,
    RewardQ,
    CostValue,
    CostQ,
    Cvae,
    Encoder,
    Targets,
}

/// Latent encoder trained alongside the main one with its own radius.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtraEncoder {
    pub epsilon: f64,
    pub net: Mlp<Float>,
    pub opt: AdamState<Float>,
}

#[derive(Debug, Clone, PartialEq)]
struct Optimizers {
    v: AdamState<Float>,
    q1: AdamState<Float>,
    q2: AdamState<Float>,
    vc: AdamState<Float>,
    qc1: AdamState<Float>,
    qc2: AdamState<Float>,
    cvae_enc: AdamState<Float>,
    cvae_dec: AdamState<Float>,
    lat_enc: AdamState<Float>,
}

/// Model metadata written next to the tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub config: TrainConfig,
    pub env: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub policy: PolicyParams,
    pub d_z: usize,
    pub metric: Option<MetricDef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrainState {
    step: usize,
    adam_steps: Vec<(String, u64)>,
}

#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    pub env: AnyEnv,
    pub critics: CriticSet<Float>,
    pub policy: PolicyBundle<Float>,
    pub extra: Vec<ExtraEncoder>,
    pub step: usize,
    pub log: Vec<LogRecord>,
    pub trace: Option<Vec<Update>>,
    pub metric: Option<MetricDef>,
    opt: Optimizers,
}

fn tag_numeric(e: LspcError, step: usize, what: &str) -> LspcError {
    match e {
        LspcError::Numeric { what: inner } => LspcError::numeric(format!("{what} at step {step} ({inner})")),
        other => other,
    }
}

impl Trainer {
    pub fn new(config: TrainConfig, ds: &OfflineDataset) -> Result<Self> {
        config.validate()?;
        ds.validate()?;
        if ds.n == 0 {
            return Err(LspcError::Config("cannot train on an empty dataset".into()));
        }
        let env = AnyEnv::from_id(&config.env)?;
        let e = env.as_env();
        if e.state_dim() != ds.state_dim || e.action_dim() != ds.action_dim {
            return Err(LspcError::Shape(format!(
                "dataset is {}x{} but {} is {}x{}",
                ds.state_dim,
                ds.action_dim,
                e.id(),
                e.state_dim(),
                e.action_dim()
            )));
        }
        let mut r = rng::stream(config.seed, rng::INIT, 0);
        let critics = CriticSet::new(ds.state_dim, ds.action_dim, &config.hidden, Activation::Relu, config.critic_params(), &mut r)?;
        let policy = PolicyBundle::new(
            ds.state_dim,
            ds.action_dim,
            config.d_z,
            &config.hidden,
            config.policy_params(e.action_bound()),
            &mut r,
        )?;
        let extra = config
            .extra_epsilons
            .iter()
            .map(|&eps| ExtraEncoder { epsilon: eps, net: policy.lat_enc.clone(), opt: AdamState::new(&policy.lat_enc) })
            .collect();
        let opt = Optimizers {
            v: AdamState::new(&critics.v),
            q1: AdamState::new(&critics.q1),
            q2: AdamState::new(&critics.q2),
            vc: AdamState::new(&critics.vc),
            qc1: AdamState::new(&critics.qc1),
            qc2: AdamState::new(&critics.qc2),
            cvae_enc: AdamState::new(&policy.cvae_enc),
            cvae_dec: AdamState::new(&policy.cvae_dec),
            lat_enc: AdamState::new(&policy.lat_enc),
        };
        let metric = MetricDef::from_dataset(ds, config.kappa).ok();
        Ok(Trainer { config, env, critics, policy, extra, step: 0, log: Vec::new(), trace: None, metric, opt })
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    fn mark(&mut self, u: Update) {
        if let Some(t) = self.trace.as_mut() {
            t.push(u);
        }
    }

    /// One full iteration.
    pub fn step_once(&mut self, ds: &OfflineDataset) -> Result<()> {
        let k = self.step;
        let lr = self.config.lr;
        let seed = self.config.seed;
        let batch = sample_batch::<Float>(ds, self.config.batch_size, &mut rng::stream(seed, rng::BATCH, k as u64))?;

        let g = self.critics.reward_value_loss(&batch).map_err(|e| tag_numeric(e, k, "reward value loss"))?;
        let v_loss = g.loss;
        self.opt.v.step(&mut self.critics.v, &g.grads[0], lr).map_err(|e| tag_numeric(e, k, "reward value loss"))?;
        self.mark(Update::RewardValue);

        let g = self.critics.reward_q_loss(&batch).map_err(|e| tag_numeric(e, k, "reward q loss"))?;
        let q_loss = g.loss;
        self.opt.q1.step(&mut self.critics.q1, &g.grads[0], lr).map_err(|e| tag_numeric(e, k, "reward q loss"))?;
        self.opt.q2.step(&mut self.critics.q2, &g.grads[1], lr).map_err(|e| tag_numeric(e, k, "reward q loss"))?;
        self.mark(Update::RewardQ);

        let g = self.critics.cost_value_loss(&batch).map_err(|e| tag_numeric(e, k, "cost value loss"))?;
        let vc_loss = g.loss;
        self.opt.vc.step(&mut self.critics.vc, &g.grads[0], lr).map_err(|e| tag_numeric(e, k, "cost value loss"))?;
        self.mark(Update::CostValue);

        let g = self.critics.cost_q_loss(&batch).map_err(|e| tag_numeric(e, k, "cost q loss"))?;
        let qc_loss = g.loss;
        self.opt.qc1.step(&mut self.critics.qc1, &g.grads[0], lr).map_err(|e| tag_numeric(e, k, "cost q loss"))?;
        self.opt.qc2.step(&mut self.critics.qc2, &g.grads[1], lr).map_err(|e| tag_numeric(e, k, "cost q loss"))?;
        self.mark(Update::CostQ);

        let mut policy_stats = None;
        if k >= self.config.critic_warmup_steps {
            let w = self.policy.awr_weights(&self.critics, &batch).map_err(|e| tag_numeric(e, k, "awr weights"))?;
            let noise = standard_normal_mat::<Float>(batch.len(), self.policy.d_z, &mut rng::stream(seed, rng::CVAE_NOISE, k as u64));
            let c = self.policy.weighted_elbo(&batch, &noise, &w.cost).map_err(|e| tag_numeric(e, k, "cvae loss"))?;
            self.opt.cvae_enc.step(&mut self.policy.cvae_enc, &c.enc_grads, lr).map_err(|e| tag_numeric(e, k, "cvae loss"))?;
            self.opt.cvae_dec.step(&mut self.policy.cvae_dec, &c.dec_grads, lr).map_err(|e| tag_numeric(e, k, "cvae loss"))?;
            self.mark(Update::Cvae);

            let noise = standard_normal_mat::<Float>(batch.len(), self.policy.d_z, &mut rng::stream(seed, rng::ENC_NOISE, k as u64));
            let e = self
                .policy
                .weighted_encoder_loss(&self.policy.lat_enc, self.policy.params.epsilon, &batch, &noise, &w.reward)
                .map_err(|e| tag_numeric(e, k, "encoder loss"))?;
            self.opt.lat_enc.step(&mut self.policy.lat_enc, &e.grads, lr).map_err(|e| tag_numeric(e, k, "encoder loss"))?;
            for x in self.extra.iter_mut() {
                let g = self
                    .policy
                    .weighted_encoder_loss(&x.net, x.epsilon, &batch, &noise, &w.reward)
                    .map_err(|e| tag_numeric(e, k, "encoder loss"))?;
                x.opt.step(&mut x.net, &g.grads, lr).map_err(|e| tag_numeric(e, k, "encoder loss"))?;
            }
            self.mark(Update::Encoder);
            policy_stats = Some((c.loss, e.loss, c.mean_weight, e.mean_weight));
        }

        self.critics.soft_update_targets()?;
        self.mark(Update::Targets);
        self.step += 1;

        let every = self.config.eval_every;
        if every > 0 && self.step % every == 0 {
            let eval = self.interval_eval()?;
            self.log.push(LogRecord {
                step: self.step,
                v_loss,
                q_loss,
                vc_loss,
                qc_loss,
                cvae_loss: policy_stats.map(|p| p.0),
                encoder_loss: policy_stats.map(|p| p.1),
                mean_cost_weight: policy_stats.map(|p| p.2),
                mean_reward_weight: policy_stats.map(|p| p.3),
                eval,
            });
        }
        Ok(())
    }

    fn interval_eval(&self) -> Result<Vec<IntervalEval>> {
        let (n, Some(metric)) = (self.config.eval_episodes, self.metric) else {
            return Ok(Vec::new());
        };
        if n == 0 {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for kind in [PolicyKind::LspcS, PolicyKind::LspcO] {
            let actor = BundleActor { bundle: &self.policy, kind };
            let rep = evaluate(&actor, &self.env, n, &metric, self.config.seed ^ self.step as u64)?;
            out.push(IntervalEval {
                policy: kind.to_string(),
                mean_reward: rep.mean_reward,
                mean_cost: rep.mean_cost,
                normalized_reward: rep.mean_normalized_reward,
                normalized_cost: rep.mean_normalized_cost,
            });
        }
        Ok(out)
    }

    /// Runs until `config.steps` iterations are complete.
    pub fn run(&mut self, ds: &OfflineDataset) -> Result<()> {
        self.run_until(ds, self.config.steps)
    }

    pub fn run_until(&mut self, ds: &OfflineDataset, total: usize) -> Result<()> {
        while self.step < total {
            self.step_once(ds)?;
        }
        Ok(())
    }

    /// Policy bundle using extra encoder `i` and its radius.
    pub fn bundle_for_extra(&self, i: usize) -> PolicyBundle<Float> {
        let x = &self.extra[i];
        let mut b = self.policy.clone();
        b.lat_enc = x.net.clone();
        b.params.epsilon = x.epsilon;
        b
    }

    pub fn meta(&self) -> ModelMeta {
        ModelMeta {
            config: self.config.clone(),
            env: self.env.describe(),
            state_dim: self.policy.state_dim(),
            action_dim: self.policy.action_dim(),
            policy: self.policy.params,
            d_z: self.policy.d_z,
            metric: self.metric,
        }
    }

    fn adam_entries(&self) -> Vec<(String, &AdamState<Float>, &Mlp<Float>)> {
        let o = &self.opt;
        let mut v = vec![
            ("v".to_string(), &o.v, &self.critics.v),
            ("q1".into(), &o.q1, &self.critics.q1),
            ("q2".into(), &o.q2, &self.critics.q2),
            ("vc".into(), &o.vc, &self.critics.vc),
            ("qc1".into(), &o.qc1, &self.critics.qc1),
            ("qc2".into(), &o.qc2, &self.critics.qc2),
            ("cvae_enc".into(), &o.cvae_enc, &self.policy.cvae_enc),
            ("cvae_dec".into(), &o.cvae_dec, &self.policy.cvae_dec),
            ("lat_enc".into(), &o.lat_enc, &self.policy.lat_enc),
        ];
        for (i, x) in self.extra.iter().enumerate() {
            v.push((format!("lat_enc_{}", i + 1), &x.opt, &x.net));
        }
        v
    }

    /// Writes tensors, metadata, optimizer moments and the step counter.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        save_model(dir, &self.critics, &self.policy, &self.extra.iter().map(|x| (x.epsilon, &x.net)).collect::<Vec<_>>(), &self.meta())?;
        let mut opt = TensorStore::new();
        let mut steps = Vec::new();
        for (name, st, _) in self.adam_entries() {
            insert_grads(&mut opt, &format!("{name}.m"), &st.m)?;
            insert_grads(&mut opt, &format!("{name}.v"), &st.v)?;
            steps.push((name, st.t));
        }
        opt.save(&dir.join(OPTIM_FILE))?;
        let state = TrainState { step: self.step, adam_steps: steps };
        fs::write(dir.join(STATE_FILE), serde_json::to_string_pretty(&state)?)?;
        Ok(())
    }

    /// Restores a trainer saved by [`Trainer::save`]. The dataset must be
    /// the one training started with.
    pub fn resume(dir: &Path, ds: &OfflineDataset) -> Result<Self> {
        let model = load_model(dir)?;
        let mut t = Trainer::new(model.meta.config.clone(), ds)?;
        t.critics = model.critics;
        t.policy = model.policy;
        if model.extra.len() != t.extra.len() {
            return Err(LspcError::Parse("checkpoint encoder count differs from its config".into()));
        }
        for (x, (eps, net)) in t.extra.iter_mut().zip(model.extra) {
            x.epsilon = eps;
            x.net = net;
        }
        t.metric = model.meta.metric;
        let opt = TensorStore::load(&dir.join(OPTIM_FILE))?;
        let state: TrainState = serde_json::from_str(&fs::read_to_string(dir.join(STATE_FILE))?)
            .map_err(|e| LspcError::Parse(format!("train state: {e}")))?;
        let names: Vec<String> = t.adam_entries().into_iter().map(|(n, _, _)| n).collect();
        let mut restored = Vec::new();
        for (name, _, net) in t.adam_entries() {
            let m = read_grads(&opt, &format!("{name}.m"), net)?;
            let v = read_grads(&opt, &format!("{name}.v"), net)?;
            let steps = state
                .adam_steps
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, s)| *s)
                .ok_or_else(|| LspcError::Parse(format!("missing optimizer step count for {name}")))?;
            restored.push((m, v, steps));
        }
        for (name, (m, v, steps)) in names.iter().zip(restored) {
            let st = t.adam_mut(name);
            st.m = m;
            st.v = v;
            st.t = steps;
        }
        t.step = state.step;
        Ok(t)
    }

    fn adam_mut(&mut self, name: &str) -> &mut AdamState<Float> {
        match name {
            "v" => &mut self.opt.v,
            "q1" => &mut self.opt.q1,
            "q2" => &mut self.opt.q2,
            "vc" => &mut self.opt.vc,
            "qc1" => &mut self.opt.qc1,
            "qc2" => &mut self.opt.qc2,
            "cvae_enc" => &mut self.opt.cvae_enc,
            "cvae_dec" => &mut self.opt.cvae_dec,
            "lat_enc" => &mut self.opt.lat_enc,
            other => {
                let i: usize = other.trim_start_matches("lat_enc_").parse().expect("known optimizer name");
                &mut self.extra[i - 1].opt
            }
        }
    }

    /// Appends the log records after index `from` to `path` as JSON lines.
    pub fn write_log(&self, path: &Path, from: usize) -> Result<()> {
        let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
        for rec in &self.log[from.min(self.log.len())..] {
            writeln!(f, "{}", serde_json::to_string(rec)?)?;
        }
        Ok(())
    }
}

fn insert_grads<F: Real>(store: &mut TensorStore, prefix: &str, g: &Grads<F>) -> Result<()> {
    for (k, (w, b)) in g.layers.iter().enumerate() {
        store.insert(format!("{prefix}.L{k}.w"), vec![w.len()], w.iter().map(|x| x.as_f64() as f32).collect())?;
        store.insert(format!("{prefix}.L{k}.b"), vec![b.len()], b.iter().map(|x| x.as_f64() as f32).collect())?;
    }
    Ok(())
}

fn read_grads<F: Real>(store: &TensorStore, prefix: &str, like: &Mlp<F>) -> Result<Grads<F>> {
    let mut g = Grads::zeros_like(like);
    for (k, (w, b)) in g.layers.iter_mut().enumerate() {
        for (suffix, dst) in [("w", w), ("b", b)] {
            let name = format!("{prefix}.L{k}.{suffix}");
            let (_, data) = store.get(&name)?;
            if data.len() != dst.len() {
                return Err(LspcError::Parse(format!("tensor {name} has {} values, expected {}", data.len(), dst.len())));
            }
            for (d, s) in dst.iter_mut().zip(data) {
                *d = F::lit(f64::from(*s));
            }
        }
    }
    Ok(g)
}

/// Trained networks read back from a checkpoint directory.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub critics: CriticSet<Float>,
    pub policy: PolicyBundle<Float>,
    /// `(epsilon, latent encoder)` for each extra radius.
    pub extra: Vec<(f64, Mlp<Float>)>,
    pub meta: ModelMeta,
}

impl LoadedModel {
    pub fn env(&self) -> Result<AnyEnv> {
        AnyEnv::from_id(&self.meta.env)
    }
}

pub fn save_model(
    dir: &Path,
    critics: &CriticSet<Float>,
    policy: &PolicyBundle<Float>,
    extra: &[(f64, &Mlp<Float>)],
    meta: &ModelMeta,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut store = TensorStore::new();
    critics.store(&mut store)?;
    policy.store(&mut store)?;
    for (i, (_, net)) in extra.iter().enumerate() {
        store.insert_net(&format!("lat_enc_{}", i + 1), *net)?;
    }
    store.save(&dir.join(MODEL_FILE))?;
    let mut meta = meta.clone();
    meta.config.extra_epsilons = extra.iter().map(|(e, _)| *e).collect();
    fs::write(dir.join(META_FILE), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn load_model(dir: &Path) -> Result<LoadedModel> {
    let meta: ModelMeta = serde_json::from_str(&fs::read_to_string(dir.join(META_FILE))?)
        .map_err(|e| LspcError::Parse(format!("model metadata: {e}")))?;
    let store = TensorStore::load(&dir.join(MODEL_FILE))?;
    let critics = CriticSet::restore(&store, Activation::Relu, meta.config.critic_params())?;
    let policy = PolicyBundle::restore(&store, meta.d_z, meta.policy)?;
    let extra = meta
        .config
        .extra_epsilons
        .iter()
        .enumerate()
        .map(|(i, &eps)| {
            store
                .get_net::<Float>(&format!("lat_enc_{}", i + 1), Activation::Relu, crate::nn::Head::Gaussian)
                .map(|n| (eps, n))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LoadedModel { critics, policy, extra, meta })
}

/// Output of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub critics: CriticSet<Float>,
    pub policy: PolicyBundle<Float>,
    pub extra: Vec<ExtraEncoder>,
    pub log: Vec<LogRecord>,
    pub metric: Option<MetricDef>,
}

pub fn train(config: TrainConfig, ds: &OfflineDataset) -> Result<TrainOutput> {
    let mut t = Trainer::new(config, ds)?;
    t.run(ds)?;
    Ok(TrainOutput { critics: t.critics, policy: t.policy, extra: t.extra, log: t.log, metric: t.metric })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{collect, BehaviorSpec};

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            steps: 6,
            batch_size: 16,
            hidden: vec![8],
            d_z: 2,
            eval_every: 2,
            ..TrainConfig::desk()
        }
    }

    fn data() -> OfflineDataset {
        let env = AnyEnv::from_id("point-hazard").unwrap();
        collect(&env, &"mixture".parse::<BehaviorSpec>().unwrap(), 300, 1).unwrap()
    }

    #[test]
    fn profiles_and_overrides() {
        let c = TrainConfig::from_json(r#"{"profile":"desk","steps":5}"#).unwrap();
        assert_eq!((c.batch_size, c.d_z, c.steps), (256, 8, 5));
        let p = TrainConfig::from_json("{}").unwrap();
        assert_eq!(p, TrainConfig::paper());
        assert!(TrainConfig::from_json(r#"{"stepz":5}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"profile":"huge"}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"xi":0.5}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"xi":0.5,"ablation":true}"#).is_ok());
        assert!(TrainConfig::from_json("[1]").is_err());
    }

    #[test]
    fn update_order_and_warmup() {
        let ds = data();
        let mut t = Trainer::new(TrainConfig { critic_warmup_steps: 1, ..tiny_config() }, &ds).unwrap();
        t.enable_trace();
        t.run_until(&ds, 2).unwrap();
        use Update::*;
        assert_eq!(
            t.trace.unwrap(),
            vec![RewardValue, RewardQ, CostValue, CostQ, Targets, RewardValue, RewardQ, CostValue, CostQ, Cvae, Encoder, Targets]
        );
        assert_eq!(t.log.len(), 1);
        assert!(t.log[0].cvae_loss.is_some());
    }

    #[test]
    fn extra_encoder_matches_a_separate_run() {
        let ds = data();
        let multi = train(TrainConfig { extra_epsilons: vec![0.6], ..tiny_config() }, &ds).unwrap();
        let single = train(TrainConfig { epsilon: 0.6, ..tiny_config() }, &ds).unwrap();
        assert_eq!(multi.extra[0].net, single.policy.lat_enc);
        assert_eq!(multi.critics.nets(), single.critics.nets());
    }

    #[test]
    fn nan_reports_step_and_loss() {
        let mut ds = data();
        ds.rewards[3] = f32::NAN;
        let mut t = Trainer::new(TrainConfig { batch_size: 256, ..tiny_config() }, &ds).unwrap();
        let err = t.run(&ds).unwrap_err().to_string();
        assert!(err.contains("reward q loss at step "), "{err}");
        assert_eq!(t.step, err.split("at step ").nth(1).unwrap().split(' ').next().unwrap().parse::<usize>().unwrap());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let ds = data();
        let cfg = TrainConfig { env: "grid-hazard".into(), ..tiny_config() };
        assert!(matches!(Trainer::new(cfg, &ds), Err(LspcError::Shape(_))));
    }
}
