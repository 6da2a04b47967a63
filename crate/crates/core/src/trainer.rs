//! Training loop: batch sampling through the prefix schedule, reward scoring,
//! gradient ascent with linear warm-up, per-step snapshotting, training-
//! dynamics log rows, and plain-text checkpoints.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{EnvConfig, ExperimentConfig};
use crate::env::{init_policy, make_task, PolicyParams, SyntheticTask, TaskKnobs};
use crate::error::{Error, Result};
use crate::metrics::EvalRecord;
use crate::optimizer::{objective_gradient, score_group, RolloutGroup};
use crate::persist;
use crate::prefix::{
    build_prefix_bank, hybrid_rollout, schedule, AnchorCandidate, PrefixEntry, Snapshots,
};
use crate::Scalar;

/// Independent randomness streams derived from one experiment seed.
#[derive(Debug, Clone, Copy)]
pub enum RngStream {
    Pool = 0,
    Bank = 1,
    Train = 2,
    Eval = 3,
    Analysis = 4,
    /// Evaluation of the untrained policy at the start of a run.
    InitEval = 5,
}

/// Seeds one generator per purpose so that, for example, evaluating a
/// checkpoint never perturbs the stream that rebuilt its task pool.
pub fn stream_rng(seed: u64, stream: RngStream) -> ChaCha8Rng {
    let mut bytes = Vec::with_capacity(16);
    bytes.extend_from_slice(&seed.to_le_bytes());
    bytes.extend_from_slice(&(stream as u64).to_le_bytes());
    ChaCha8Rng::seed_from_u64(persist::fnv64(&bytes))
}

/// Builds the task pool for a run; a pure function of (env config, seed).
pub fn build_pool<S: Scalar>(env: &EnvConfig<S>, seed: u64) -> Result<Vec<SyntheticTask>> {
    let mut rng = stream_rng(seed, RngStream::Pool);
    let mut pool = Vec::with_capacity(env.task_count);
    for _ in 0..env.task_count {
        let l_star = rng.random_range(env.l_star_min..=env.l_star_max);
        pool.push(make_task(
            &TaskKnobs { l_star, vocab_size: env.vocab_size, max_len: env.max_len },
            &mut rng,
        )?);
    }
    Ok(pool)
}

/// Rejection-samples anchors for every task from the given frozen policy.
pub fn build_bank<S: Scalar>(
    pool: &[SyntheticTask],
    anchor_policy: &PolicyParams<S>,
    samples: usize,
    temperature: S,
    rng: &mut ChaCha8Rng,
) -> Result<BTreeMap<String, PrefixEntry>> {
    let sampling = anchor_policy.with_temperature(temperature)?;
    let snapshots = Snapshots::all(&sampling);
    let mut bank = BTreeMap::new();
    for task in pool {
        let mut candidates = Vec::with_capacity(samples);
        for _ in 0..samples {
            let rollout = hybrid_rollout(task, None, 0, &snapshots, rng)?;
            candidates.push(AnchorCandidate {
                tokens: rollout.tokens,
                correct: rollout.correct,
                length: rollout.length,
            });
        }
        let entry = build_prefix_bank(task, &candidates)?;
        bank.insert(entry.task_id.clone(), entry);
    }
    Ok(bank)
}

/// One row of the training-dynamics log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainLogRow<S> {
    pub step: usize,
    pub train_acc: S,
    pub mean_len: S,
    pub grad_norm: S,
    pub entropy: S,
    pub mean_alpha: S,
    pub mean_pass_rate: S,
    pub shortcut_flags: usize,
}

pub const TRAIN_LOG_COLUMNS: &str =
    "step,train_acc,mean_len,grad_norm,entropy,mean_alpha,mean_pass_rate,shortcut_flags";

impl<S: Scalar> TrainLogRow<S> {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            self.step,
            self.train_acc,
            self.mean_len,
            self.grad_norm,
            self.entropy,
            self.mean_alpha,
            self.mean_pass_rate,
            self.shortcut_flags
        )
    }
}

/// Mutable state of one training run.
pub struct TrainerState<S> {
    pub config: ExperimentConfig<S>,
    pub pool: Vec<SyntheticTask>,
    pub bank: BTreeMap<String, PrefixEntry>,
    pub policy: PolicyParams<S>,
    /// Snapshot taken at the start of the current step.
    pub old_policy: PolicyParams<S>,
    /// Frozen anchor-sampling policy.
    pub prefix_policy: PolicyParams<S>,
    /// Frozen divergence reference.
    pub reference_policy: PolicyParams<S>,
    pub step: usize,
    pub seed: u64,
    rng: ChaCha8Rng,
}

impl<S: Scalar> TrainerState<S> {
    /// Builds pool, initial policy, and (when prefix protection is active)
    /// the anchor bank, all derived deterministically from the seed.
    pub fn new(config: ExperimentConfig<S>, seed: u64) -> Result<Self> {
        let pool = build_pool(&config.env, seed)?;
        Self::with_pool(config, pool, seed)
    }

    /// Same as [`TrainerState::new`] but over a caller-supplied task pool,
    /// for experiment designs the uniform `l_star` range cannot express
    /// (bimodal difficulty mixes and the like).
    pub fn with_pool(
        config: ExperimentConfig<S>,
        pool: Vec<SyntheticTask>,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let n_states = config.env.l_star_max + 1;
        for task in &pool {
            if task.l_star() > config.env.l_star_max || task.vocab_size() != config.env.vocab_size
            {
                return Err(Error::Config(format!(
                    "pool task {} ({} steps, vocab {}) does not fit env bounds",
                    task.id(),
                    task.l_star(),
                    task.vocab_size()
                )));
            }
        }
        let policy = init_policy(n_states, config.env.vocab_size, &config.env.init);
        let bank = if config.schedule.initial_len > 0 {
            let mut bank_rng = stream_rng(seed, RngStream::Bank);
            build_bank(
                &pool,
                &policy,
                config.prefix.samples,
                config.prefix.temperature,
                &mut bank_rng,
            )?
        } else {
            BTreeMap::new()
        };
        Ok(TrainerState {
            old_policy: policy.clone(),
            prefix_policy: policy.clone(),
            reference_policy: policy.clone(),
            policy,
            pool,
            bank,
            step: 0,
            seed,
            rng: stream_rng(seed, RngStream::Train),
            config,
        })
    }

    /// Learning rate at the current step under linear warm-up.
    fn effective_lr(&self) -> S {
        let lr = self.config.optimizer.learning_rate;
        let warmup = self.config.optimizer.warmup_steps;
        if warmup > 0 && self.step < warmup {
            lr * S::from_usize(self.step + 1).unwrap() / S::from_usize(warmup).unwrap()
        } else {
            lr
        }
    }

    /// One optimization step: snapshot, sample a batch of groups at the
    /// scheduled prefix length, score, ascend, log.
    pub fn train_step(&mut self) -> Result<TrainLogRow<S>> {
        self.old_policy = self.policy.clone();
        let prefix_len = schedule(self.step, &self.config.schedule);
        let entropy = crate::env::policy_entropy(&self.policy);

        let batch = self.sample_batch(prefix_len)?;

        let mut correct = 0usize;
        let mut rollouts = 0usize;
        let mut length_total = S::zero();
        let mut alpha_total = S::zero();
        let mut pass_total = S::zero();
        let mut shortcut_flags = 0usize;
        for group in &batch {
            for rollout in &group.rollouts {
                rollouts += 1;
                correct += rollout.correct as usize;
                length_total += S::from_usize(rollout.length).unwrap();
                shortcut_flags += rollout.shortcut_exposed() as usize;
            }
            alpha_total += group.alpha_used;
            pass_total += group.stats.pass_rate;
        }

        let grad = objective_gradient(&self.policy, &batch, &self.config.optimizer)?;
        if !grad.is_finite() {
            return Err(Error::NonFiniteGradient {
                step: self.step,
                dump: dump_offending_group(&batch),
            });
        }
        let lr = self.effective_lr();
        for state in 0..self.policy.n_states() {
            for action in 0..self.policy.n_actions() {
                *self.policy.logit_mut(state, action) += lr * grad.get(state, action);
            }
        }

        let groups = S::from_usize(batch.len()).unwrap();
        let row = TrainLogRow {
            step: self.step,
            train_acc: S::from_usize(correct).unwrap() / S::from_usize(rollouts).unwrap(),
            mean_len: length_total / S::from_usize(rollouts).unwrap(),
            grad_norm: grad.l2_norm(),
            entropy,
            mean_alpha: alpha_total / groups,
            mean_pass_rate: pass_total / groups,
            shortcut_flags,
        };
        self.step += 1;
        Ok(row)
    }

    fn sample_batch(&mut self, prefix_len: usize) -> Result<Vec<RolloutGroup<S>>> {
        let snapshots = Snapshots {
            theta: &self.policy,
            old: &self.old_policy,
            prefix: &self.prefix_policy,
            reference: &self.reference_policy,
        };
        let mut batch = Vec::with_capacity(self.config.train.batch_size);
        for _ in 0..self.config.train.batch_size {
            let task = &self.pool[self.rng.random_range(0..self.pool.len())];
            let entry = self.bank.get(task.id());
            let mut group = Vec::with_capacity(self.config.optimizer.group_size);
            for _ in 0..self.config.optimizer.group_size {
                group.push(hybrid_rollout(task, entry, prefix_len, &snapshots, &mut self.rng)?);
            }
            batch.push(score_group(
                task.clone(),
                group,
                &self.config.penalty,
                self.config.optimizer.adv_eps,
            )?);
        }
        Ok(batch)
    }

    /// Runs all configured steps, returning every log row.
    pub fn run_to_completion(&mut self) -> Result<Vec<TrainLogRow<S>>> {
        let mut rows = Vec::with_capacity(self.config.train.steps);
        while self.step < self.config.train.steps {
            rows.push(self.train_step()?);
        }
        Ok(rows)
    }
}

fn dump_offending_group<S: Scalar>(batch: &[RolloutGroup<S>]) -> String {
    let bad = batch
        .iter()
        .find(|g| {
            g.rewards.iter().any(|r| !r.is_finite())
                || g.advantages.advantages.iter().any(|a| !a.is_finite())
        })
        .or_else(|| batch.first());
    match bad {
        Some(group) => format!(
            "task={} pass_rate={} len=[{},{}] rewards={:?} advantages={:?}",
            group.task.id(),
            group.stats.pass_rate,
            group.stats.len_min,
            group.stats.len_max,
            group.rewards,
            group.advantages.advantages
        ),
        None => "empty batch".to_string(),
    }
}

/// Evaluates a policy over the pool without prefix assistance: `runs`
/// temperature-scaled samples per task.
pub fn evaluate_policy<S: Scalar>(
    policy: &PolicyParams<S>,
    pool: &[SyntheticTask],
    runs: usize,
    temperature: S,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<EvalRecord>> {
    let scaled = policy.with_temperature(temperature)?;
    let snapshots = Snapshots::all(&scaled);
    let mut records = Vec::with_capacity(pool.len());
    for task in pool {
        let mut corrects = Vec::with_capacity(runs);
        let mut lengths = Vec::with_capacity(runs);
        for _ in 0..runs {
            let rollout = hybrid_rollout(task, None, 0, &snapshots, rng)?;
            corrects.push(rollout.correct);
            lengths.push(rollout.length);
        }
        records.push(EvalRecord { task_id: task.id().to_string(), corrects, lengths });
    }
    Ok(records)
}

/// Checkpoint metadata from the manifest line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub step: usize,
    pub seed: u64,
}

/// Writes the logits table state-major in fixed decimal format beneath the
/// standard header and a manifest line.
pub fn save_checkpoint<S: Scalar>(
    policy: &PolicyParams<S>,
    step: usize,
    seed: u64,
    config_hash: &str,
    path: &Path,
) -> Result<()> {
    let mut lines = vec![
        persist::header_line(config_hash, seed),
        format!(
            "step={} states={} actions={}",
            step,
            policy.n_states(),
            policy.n_actions()
        ),
    ];
    for state in 0..policy.n_states() {
        let row: Vec<String> =
            policy.row(state).iter().map(|v| format!("{v:.12}")).collect();
        lines.push(row.join(" "));
    }
    persist::write_lines(path, &lines)
}

/// Reads a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint<S: Scalar>(path: &Path) -> Result<(PolicyParams<S>, CheckpointMeta)> {
    let text = persist::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_err(path, "empty checkpoint"))?;
    let seed = persist::header_seed(path, header)?;
    let manifest = lines
        .next()
        .ok_or_else(|| parse_err(path, "missing manifest line"))?;
    let mut step = None;
    let mut states = None;
    let mut actions = None;
    for field in manifest.split_whitespace() {
        let Some((key, value)) = field.split_once('=') else {
            return Err(parse_err(path, &format!("bad manifest field {field:?}")));
        };
        let parsed: usize = value
            .parse()
            .map_err(|_| parse_err(path, &format!("bad manifest value {value:?}")))?;
        match key {
            "step" => step = Some(parsed),
            "states" => states = Some(parsed),
            "actions" => actions = Some(parsed),
            _ => return Err(parse_err(path, &format!("unknown manifest key {key:?}"))),
        }
    }
    let (step, states, actions) = match (step, states, actions) {
        (Some(k), Some(s), Some(a)) => (k, s, a),
        _ => return Err(parse_err(path, "manifest must carry step, states, actions")),
    };
    let mut logits = Vec::with_capacity(states * actions);
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        for field in line.split_whitespace() {
            let value: f64 = field
                .parse()
                .map_err(|_| parse_err(path, &format!("bad logit {field:?}")))?;
            logits.push(S::from_f64_lossy(value));
        }
    }
    let policy = PolicyParams::from_logits(states, actions, logits)?;
    Ok((policy, CheckpointMeta { step, seed }))
}

fn parse_err(path: &Path, message: &str) -> Error {
    Error::Parse { path: path.display().to_string(), message: message.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use crate::env::Token;

    fn tiny_config() -> ExperimentConfig<f64> {
        let mut cfg = ExperimentConfig::default();
        cfg.env.task_count = 4;
        cfg.env.l_star_min = 1;
        cfg.env.l_star_max = 2;
        cfg.env.vocab_size = 2;
        cfg.env.max_len = 8;
        cfg.schedule.initial_len = 4;
        cfg.schedule.decay_steps = 5;
        cfg.train.steps = 6;
        cfg.train.batch_size = 3;
        cfg.optimizer.group_size = 4;
        cfg.prefix.samples = 4;
        cfg
    }

    #[test]
    fn pool_is_deterministic_and_sized() {
        let cfg = tiny_config();
        let a = build_pool(&cfg.env, 9).unwrap();
        let b = build_pool(&cfg.env, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        let c = build_pool(&cfg.env, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn trainer_runs_and_decays_prefix() {
        let cfg = tiny_config();
        let mut state = TrainerState::new(cfg, 3).unwrap();
        let rows = state.run_to_completion().unwrap();
        assert_eq!(rows.len(), 6);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.step, i);
            assert!(row.train_acc.is_finite());
            assert!(row.grad_norm.is_finite());
        }
        // After decay_steps the schedule is pinned at zero.
        assert_eq!(schedule(5, &state.config.schedule), 0);
    }

    #[test]
    fn identical_seeds_reproduce_identical_rows() {
        let cfg = tiny_config();
        let rows_a = TrainerState::new(cfg.clone(), 7).unwrap().run_to_completion().unwrap();
        let rows_b = TrainerState::new(cfg, 7).unwrap().run_to_completion().unwrap();
        let csv_a: Vec<String> = rows_a.iter().map(TrainLogRow::to_csv_row).collect();
        let csv_b: Vec<String> = rows_b.iter().map(TrainLogRow::to_csv_row).collect();
        assert_eq!(csv_a, csv_b);
    }

    #[test]
    fn warmup_scales_learning_rate_linearly() {
        let mut cfg = tiny_config();
        cfg.optimizer.learning_rate = 0.8;
        cfg.optimizer.warmup_steps = 10;
        let mut state = TrainerState::new(cfg, 1).unwrap();
        state.step = 0;
        assert!((state.effective_lr() - 0.08).abs() < 1e-12);
        state.step = 4;
        assert!((state.effective_lr() - 0.4).abs() < 1e-12);
        state.step = 9;
        assert!((state.effective_lr() - 0.8).abs() < 1e-12);
        state.step = 500;
        assert!((state.effective_lr() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn prefix_boundary_is_zero_after_decay_window() {
        let mut cfg = tiny_config();
        cfg.schedule.initial_len = 6;
        cfg.schedule.decay_steps = 3;
        let mut state = TrainerState::new(cfg, 2).unwrap();
        state.step = 3;
        let prefix_len = schedule(state.step, &state.config.schedule);
        assert_eq!(prefix_len, 0);
        let batch = state.sample_batch(prefix_len).unwrap();
        for group in &batch {
            for rollout in &group.rollouts {
                assert_eq!(rollout.prefix_boundary, 0);
            }
        }
    }

    #[test]
    fn non_finite_gradient_aborts_with_dump() {
        let mut cfg = tiny_config();
        cfg.schedule.initial_len = 0;
        let mut state = TrainerState::new(cfg, 8).unwrap();
        *state.policy.logit_mut(0, 0) = f64::NAN;
        let err = state.train_step().unwrap_err();
        match err {
            Error::NonFiniteGradient { step, dump } => {
                assert_eq!(step, 0);
                assert!(dump.contains("task="), "dump should name the group: {dump}");
            }
            other => panic!("expected a non-finite gradient error, got {other}"),
        }
    }

    #[test]
    fn ratios_are_exactly_one_at_each_snapshot() {
        let cfg = tiny_config();
        let mut state = TrainerState::new(cfg, 11).unwrap();
        state.old_policy = state.policy.clone();
        let batch = state.sample_batch(0).unwrap();
        for group in &batch {
            for rollout in &group.rollouts {
                for t in rollout.prefix_boundary..rollout.length {
                    assert_eq!(crate::optimizer::importance_ratio(rollout, t).unwrap(), 1.0);
                }
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut policy: PolicyParams<f64> = PolicyParams::uniform(3, 4);
        *policy.logit_mut(1, 2) = -1.25;
        *policy.logit_mut(2, 0) = 0.5;
        let dir = std::env::temp_dir().join(format!("ckpt_rt_{}", std::process::id()));
        let path = dir.join("checkpoint.txt");
        save_checkpoint(&policy, 42, 7, "0123456789abcdef", &path).unwrap();
        let (loaded, meta) = load_checkpoint::<f64>(&path).unwrap();
        assert_eq!(meta, CheckpointMeta { step: 42, seed: 7 });
        assert_eq!(loaded.n_states(), 3);
        for s in 0..3 {
            for a in 0..4 {
                assert!((loaded.logit(s, a) - policy.logit(s, a)).abs() < 1e-12);
            }
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn eval_records_cover_pool() {
        let cfg = tiny_config();
        let state = TrainerState::new(cfg, 5).unwrap();
        let mut rng = stream_rng(5, RngStream::Eval);
        let records =
            evaluate_policy(&state.policy, &state.pool, 3, 1.0, &mut rng).unwrap();
        assert_eq!(records.len(), state.pool.len());
        for r in &records {
            assert_eq!(r.runs(), 3);
        }
    }

    #[test]
    fn anchors_prefer_correct_samples() {
        let cfg = tiny_config();
        let state = TrainerState::new(cfg, 13).unwrap();
        // With the verbose-competent default init most tasks find a correct
        // anchor ending in stop.
        assert_eq!(state.bank.len(), state.pool.len());
        for entry in state.bank.values() {
            assert!(!entry.anchor_tokens.is_empty());
            assert_eq!(entry.source_length, entry.anchor_tokens.len());
            if entry.source_correct {
                assert_eq!(*entry.anchor_tokens.last().unwrap(), Token::STOP);
            }
        }
    }
}
