//! Experiment configuration: a flat `key=value` text format with dotted
//! section prefixes (for example `schedule.L_init=64`), strict unknown-key
//! rejection, and validation that reports every violation at once.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::env::PolicyInit;
use crate::error::{Error, Result};
use crate::optimizer::{OptimizerConfig, RatioLevel};
use crate::penalty::{AlphaMode, PenaltyConfig, PenaltyMode};
use crate::persist;
use crate::prefix::ScheduleConfig;
use crate::Scalar;

/// Environment knobs: the task pool shape and the initial policy.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig<S> {
    pub task_count: usize,
    pub l_star_min: usize,
    pub l_star_max: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    pub init: PolicyInit<S>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainConfig {
    pub steps: usize,
    /// Task groups sampled per training step.
    pub batch_size: usize,
    /// Checkpoint cadence in steps; 0 keeps only the final checkpoint.
    pub eval_every: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig<S> {
    /// Independent runs per task.
    pub runs: usize,
    pub temperature: S,
}

/// Rejection-sampling settings for anchor construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrefixSamplingConfig<S> {
    pub samples: usize,
    pub temperature: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig<S> {
    pub alphas: Vec<S>,
    pub l_stars: Vec<usize>,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominanceConfig<S> {
    pub cut_lengths: Vec<usize>,
    pub instances: usize,
    /// Logit boost applied when constructing the solution-seeking anchor policy.
    pub sharpness: S,
}

/// Complete experiment description; every output file records its hash.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig<S> {
    pub env: EnvConfig<S>,
    pub schedule: ScheduleConfig,
    pub penalty: PenaltyConfig<S>,
    pub optimizer: OptimizerConfig<S>,
    pub train: TrainConfig,
    pub eval: EvalConfig<S>,
    pub prefix: PrefixSamplingConfig<S>,
    pub sweep: SweepConfig<S>,
    pub dominance: DominanceConfig<S>,
    pub out_dir: String,
}

impl<S: Scalar> Default for ExperimentConfig<S> {
    fn default() -> Self {
        let f = S::from_f64_lossy;
        ExperimentConfig {
            env: EnvConfig {
                task_count: 200,
                l_star_min: 2,
                l_star_max: 8,
                vocab_size: 4,
                max_len: 64,
                init: PolicyInit::Biased {
                    advance: f(2.0),
                    distractor: f(1.0),
                    stop: f(-4.0),
                    terminal_stop: f(2.5),
                },
            },
            schedule: ScheduleConfig { initial_len: 64, decay_steps: 100 },
            penalty: PenaltyConfig {
                mode: PenaltyMode::MinMax,
                alpha_mode: AlphaMode::CosineDifficulty,
            },
            optimizer: OptimizerConfig {
                eps_clip: f(0.2),
                kl_coeff: f(0.001),
                adv_eps: f(1e-8),
                learning_rate: f(0.5),
                group_size: 8,
                warmup_steps: 10,
                ratio_level: RatioLevel::Token,
                mask_prefix_loss: true,
            },
            train: TrainConfig { steps: 1000, batch_size: 64, eval_every: 100, seed: 0 },
            eval: EvalConfig { runs: 16, temperature: f(0.6) },
            prefix: PrefixSamplingConfig { samples: 8, temperature: f(1.0) },
            sweep: SweepConfig {
                alphas: vec![f(0.0625), f(0.25), f(1.0)],
                l_stars: vec![2, 4, 8],
                seeds: 5,
            },
            dominance: DominanceConfig {
                cut_lengths: vec![1, 2, 3],
                instances: 20,
                sharpness: f(4.0),
            },
            out_dir: "runs".to_string(),
        }
    }
}

impl<S: Scalar> ExperimentConfig<S> {
    /// Canonical dump: one sorted `key=value` line per setting. Hashing this
    /// string fingerprints the semantics rather than the file formatting.
    pub fn canonical(&self) -> String {
        let mut lines = Vec::new();
        let mut put = |k: &str, v: String| lines.push(format!("{k}={v}"));
        put("dominance.cut_lengths", join_usizes(&self.dominance.cut_lengths));
        put("dominance.instances", self.dominance.instances.to_string());
        put("dominance.sharpness", fmt_scalar(self.dominance.sharpness));
        put("env.init", init_kind(&self.env.init).to_string());
        let (a, d, st, ts) = init_logits(&self.env.init);
        put("env.init_advance_logit", fmt_scalar(a));
        put("env.init_distractor_logit", fmt_scalar(d));
        put("env.init_stop_logit", fmt_scalar(st));
        put("env.init_terminal_stop_logit", fmt_scalar(ts));
        put("env.l_star_max", self.env.l_star_max.to_string());
        put("env.l_star_min", self.env.l_star_min.to_string());
        put("env.max_len", self.env.max_len.to_string());
        put("env.task_count", self.env.task_count.to_string());
        put("env.vocab_size", self.env.vocab_size.to_string());
        put("eval.runs", self.eval.runs.to_string());
        put("eval.temperature", fmt_scalar(self.eval.temperature));
        put("optimizer.adv_eps", fmt_scalar(self.optimizer.adv_eps));
        put("optimizer.eps_clip", fmt_scalar(self.optimizer.eps_clip));
        put("optimizer.group_size", self.optimizer.group_size.to_string());
        put("optimizer.kl_coeff", fmt_scalar(self.optimizer.kl_coeff));
        put("optimizer.learning_rate", fmt_scalar(self.optimizer.learning_rate));
        put(
            "optimizer.ratio_level",
            match self.optimizer.ratio_level {
                RatioLevel::Token => "token".into(),
                RatioLevel::Sequence => "sequence".into(),
            },
        );
        put("optimizer.warmup_steps", self.optimizer.warmup_steps.to_string());
        put("out.dir", self.out_dir.clone());
        put(
            "penalty.alpha_mode",
            match self.penalty.alpha_mode {
                AlphaMode::CosineDifficulty => "cosine".into(),
                AlphaMode::Uniform(_) => "uniform".into(),
            },
        );
        let alpha_uniform = match self.penalty.alpha_mode {
            AlphaMode::Uniform(a) => a,
            AlphaMode::CosineDifficulty => S::zero(),
        };
        put("penalty.alpha_uniform", fmt_scalar(alpha_uniform));
        put(
            "penalty.mode",
            match self.penalty.mode {
                PenaltyMode::MinMax => "minmax".into(),
                PenaltyMode::Sigmoid => "sigmoid".into(),
                PenaltyMode::Linear => "linear".into(),
            },
        );
        put("prefix.samples", self.prefix.samples.to_string());
        put("prefix.temperature", fmt_scalar(self.prefix.temperature));
        put("schedule.K", self.schedule.decay_steps.to_string());
        put("schedule.L_init", self.schedule.initial_len.to_string());
        put("sweep.alphas", join_scalars(&self.sweep.alphas));
        put("sweep.l_stars", join_usizes(&self.sweep.l_stars));
        put("sweep.seeds", self.sweep.seeds.to_string());
        put("train.batch_size", self.train.batch_size.to_string());
        put("train.eval_every", self.train.eval_every.to_string());
        put(
            "train.mask_prefix_loss",
            self.optimizer.mask_prefix_loss.to_string(),
        );
        put("train.seed", self.train.seed.to_string());
        put("train.steps", self.train.steps.to_string());
        lines.join("\n")
    }

    /// 16-hex fingerprint of the canonical dump.
    pub fn hash(&self) -> String {
        format!("{:016x}", persist::fnv64(self.canonical().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.env.task_count == 0 {
            problems.push("env.task_count must be >= 1".to_string());
        }
        if self.env.l_star_min < 1 {
            problems.push("env.l_star_min must be >= 1".to_string());
        }
        if self.env.l_star_min > self.env.l_star_max {
            problems.push("env.l_star_min must not exceed env.l_star_max".to_string());
        }
        if self.env.l_star_max > self.env.max_len {
            problems.push("env.l_star_max must not exceed env.max_len (L* exceeds max_len)".to_string());
        }
        if self.env.vocab_size < 1 {
            problems.push("env.vocab_size must be >= 1".to_string());
        }
        if let Err(e) = self.schedule.validate() {
            problems.push(e.to_string());
        }
        if let Err(e) = self.penalty.validate() {
            problems.push(e.to_string());
        }
        if let Err(e) = self.optimizer.validate() {
            problems.push(e.to_string());
        }
        if self.optimizer.group_size < 1 {
            problems.push("optimizer.group_size must be >= 1".to_string());
        }
        if self.train.batch_size < 1 {
            problems.push("train.batch_size must be >= 1".to_string());
        }
        if self.eval.runs < 1 {
            problems.push("eval.runs must be >= 1".to_string());
        }
        if !(self.eval.temperature > S::zero()) {
            problems.push("eval.temperature must be > 0".to_string());
        }
        if self.prefix.samples < 1 {
            problems.push("prefix.samples must be >= 1".to_string());
        }
        if !(self.prefix.temperature > S::zero()) {
            problems.push("prefix.temperature must be > 0".to_string());
        }
        if self.sweep.seeds < 1 {
            problems.push("sweep.seeds must be >= 1".to_string());
        }
        if self.dominance.instances < 1 {
            problems.push("dominance.instances must be >= 1".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

fn fmt_scalar<S: Scalar>(v: S) -> String {
    format!("{:?}", v.to_f64().unwrap_or(f64::NAN))
}

fn join_scalars<S: Scalar>(values: &[S]) -> String {
    values.iter().map(|&v| fmt_scalar(v)).collect::<Vec<_>>().join(",")
}

fn join_usizes(values: &[usize]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn init_kind<S>(init: &PolicyInit<S>) -> &'static str {
    match init {
        PolicyInit::Uniform => "uniform",
        PolicyInit::Biased { .. } => "verbose",
    }
}

fn init_logits<S: Scalar>(init: &PolicyInit<S>) -> (S, S, S, S) {
    match *init {
        PolicyInit::Uniform => (S::zero(), S::zero(), S::zero(), S::zero()),
        PolicyInit::Biased { advance, distractor, stop, terminal_stop } => {
            (advance, distractor, stop, terminal_stop)
        }
    }
}

/// Parses a config text, starting from defaults. Unknown keys, duplicate
/// keys, type errors, and invariant violations are all collected and
/// reported together.
pub fn parse_config<S: Scalar>(text: &str) -> Result<ExperimentConfig<S>> {
    let mut entries: BTreeMap<String, String> = BTreeMap::new();
    let mut problems: Vec<String> = Vec::new();

    for (number, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            problems.push(format!("line {}: expected key=value, got {line:?}", number + 1));
            continue;
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if entries.contains_key(&key) {
            problems.push(format!("duplicate key: {key}"));
            continue;
        }
        entries.insert(key, value);
    }

    let mut cfg = ExperimentConfig::<S>::default();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    {
        let mut reader = Reader { entries: &entries, seen: &mut seen, problems: &mut problems };

        reader.usize_into("env.task_count", &mut cfg.env.task_count);
        reader.usize_into("env.l_star_min", &mut cfg.env.l_star_min);
        reader.usize_into("env.l_star_max", &mut cfg.env.l_star_max);
        reader.usize_into("env.vocab_size", &mut cfg.env.vocab_size);
        reader.usize_into("env.max_len", &mut cfg.env.max_len);

        let (mut adv, mut dis, mut stop, mut term) = init_logits(&cfg.env.init);
        let mut kind = init_kind(&cfg.env.init).to_string();
        reader.choice_into("env.init", &["uniform", "verbose"], &mut kind);
        reader.scalar_into("env.init_advance_logit", &mut adv);
        reader.scalar_into("env.init_distractor_logit", &mut dis);
        reader.scalar_into("env.init_stop_logit", &mut stop);
        reader.scalar_into("env.init_terminal_stop_logit", &mut term);
        cfg.env.init = if kind == "uniform" {
            PolicyInit::Uniform
        } else {
            PolicyInit::Biased { advance: adv, distractor: dis, stop, terminal_stop: term }
        };

        reader.usize_into("schedule.L_init", &mut cfg.schedule.initial_len);
        reader.usize_into("schedule.K", &mut cfg.schedule.decay_steps);

        let mut mode = "minmax".to_string();
        reader.choice_into("penalty.mode", &["minmax", "sigmoid", "linear"], &mut mode);
        cfg.penalty.mode = match mode.as_str() {
            "sigmoid" => PenaltyMode::Sigmoid,
            "linear" => PenaltyMode::Linear,
            _ => PenaltyMode::MinMax,
        };
        let mut alpha_mode = "cosine".to_string();
        let mut alpha_uniform = S::zero();
        reader.choice_into("penalty.alpha_mode", &["cosine", "uniform"], &mut alpha_mode);
        reader.scalar_into("penalty.alpha_uniform", &mut alpha_uniform);
        cfg.penalty.alpha_mode = if alpha_mode == "uniform" {
            AlphaMode::Uniform(alpha_uniform)
        } else {
            AlphaMode::CosineDifficulty
        };

        reader.scalar_into("optimizer.eps_clip", &mut cfg.optimizer.eps_clip);
        reader.scalar_into("optimizer.kl_coeff", &mut cfg.optimizer.kl_coeff);
        reader.scalar_into("optimizer.adv_eps", &mut cfg.optimizer.adv_eps);
        reader.scalar_into("optimizer.learning_rate", &mut cfg.optimizer.learning_rate);
        reader.usize_into("optimizer.group_size", &mut cfg.optimizer.group_size);
        reader.usize_into("optimizer.warmup_steps", &mut cfg.optimizer.warmup_steps);
        let mut ratio = "token".to_string();
        reader.choice_into("optimizer.ratio_level", &["token", "sequence"], &mut ratio);
        cfg.optimizer.ratio_level =
            if ratio == "sequence" { RatioLevel::Sequence } else { RatioLevel::Token };

        reader.usize_into("train.steps", &mut cfg.train.steps);
        reader.usize_into("train.batch_size", &mut cfg.train.batch_size);
        reader.usize_into("train.eval_every", &mut cfg.train.eval_every);
        reader.bool_into("train.mask_prefix_loss", &mut cfg.optimizer.mask_prefix_loss);
        reader.u64_into("train.seed", &mut cfg.train.seed);

        reader.usize_into("eval.runs", &mut cfg.eval.runs);
        reader.scalar_into("eval.temperature", &mut cfg.eval.temperature);
        reader.usize_into("prefix.samples", &mut cfg.prefix.samples);
        reader.scalar_into("prefix.temperature", &mut cfg.prefix.temperature);

        reader.scalar_list_into("sweep.alphas", &mut cfg.sweep.alphas);
        reader.usize_list_into("sweep.l_stars", &mut cfg.sweep.l_stars);
        reader.usize_into("sweep.seeds", &mut cfg.sweep.seeds);

        reader.usize_list_into("dominance.cut_lengths", &mut cfg.dominance.cut_lengths);
        reader.usize_into("dominance.instances", &mut cfg.dominance.instances);
        reader.scalar_into("dominance.sharpness", &mut cfg.dominance.sharpness);

        reader.string_into("out.dir", &mut cfg.out_dir);
    }

    for key in entries.keys() {
        if !seen.contains(key) {
            problems.push(format!("unknown key: {key}"));
        }
    }

    if let Err(Error::Validation(more)) = cfg.validate() {
        problems.extend(more);
    }

    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Validation(problems))
    }
}

/// Reads and parses a config file.
pub fn parse_config_file<S: Scalar>(path: &Path) -> Result<ExperimentConfig<S>> {
    let text = persist::read_to_string(path)?;
    parse_config(&text)
}

struct Reader<'a> {
    entries: &'a BTreeMap<String, String>,
    seen: &'a mut BTreeSet<String>,
    problems: &'a mut Vec<String>,
}

impl Reader<'_> {
    fn raw(&mut self, key: &str) -> Option<String> {
        self.seen.insert(key.to_string());
        self.entries.get(key).cloned()
    }

    fn usize_into(&mut self, key: &str, slot: &mut usize) {
        if let Some(raw) = self.raw(key) {
            match raw.parse::<usize>() {
                Ok(v) => *slot = v,
                Err(_) => self
                    .problems
                    .push(format!("{key} expects a nonnegative integer, got {raw:?}")),
            }
        }
    }

    fn u64_into(&mut self, key: &str, slot: &mut u64) {
        if let Some(raw) = self.raw(key) {
            match raw.parse::<u64>() {
                Ok(v) => *slot = v,
                Err(_) => self
                    .problems
                    .push(format!("{key} expects a nonnegative integer, got {raw:?}")),
            }
        }
    }

    fn scalar_into<S: Scalar>(&mut self, key: &str, slot: &mut S) {
        if let Some(raw) = self.raw(key) {
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => *slot = S::from_f64_lossy(v),
                _ => self.problems.push(format!("{key} expects a finite number, got {raw:?}")),
            }
        }
    }

    fn bool_into(&mut self, key: &str, slot: &mut bool) {
        if let Some(raw) = self.raw(key) {
            match raw.as_str() {
                "true" | "1" => *slot = true,
                "false" | "0" => *slot = false,
                _ => self.problems.push(format!("{key} expects true or false, got {raw:?}")),
            }
        }
    }

    fn string_into(&mut self, key: &str, slot: &mut String) {
        if let Some(raw) = self.raw(key) {
            *slot = raw;
        }
    }

    fn choice_into(&mut self, key: &str, allowed: &[&str], slot: &mut String) {
        if let Some(raw) = self.raw(key) {
            if allowed.contains(&raw.as_str()) {
                *slot = raw;
            } else {
                self.problems.push(format!(
                    "{key} expects one of {}, got {raw:?}",
                    allowed.join("|")
                ));
            }
        }
    }

    fn scalar_list_into<S: Scalar>(&mut self, key: &str, slot: &mut Vec<S>) {
        if let Some(raw) = self.raw(key) {
            let mut out = Vec::new();
            let mut ok = true;
            for part in raw.split(',') {
                match part.trim().parse::<f64>() {
                    Ok(v) if v.is_finite() => out.push(S::from_f64_lossy(v)),
                    _ => {
                        self.problems.push(format!(
                            "{key} expects comma-separated numbers, got {part:?}"
                        ));
                        ok = false;
                    }
                }
            }
            if ok {
                *slot = out;
            }
        }
    }

    fn usize_list_into(&mut self, key: &str, slot: &mut Vec<usize>) {
        if let Some(raw) = self.raw(key) {
            let mut out = Vec::new();
            let mut ok = true;
            for part in raw.split(',') {
                match part.trim().parse::<usize>() {
                    Ok(v) => out.push(v),
                    Err(_) => {
                        self.problems.push(format!(
                            "{key} expects comma-separated integers, got {part:?}"
                        ));
                        ok = false;
                    }
                }
            }
            if ok {
                *slot = out;
            }
        }
    }
}
