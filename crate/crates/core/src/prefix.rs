//! Prefix anchoring: rejection-sampled anchor bank, the linear decay schedule
//! of the protected prefix length, hybrid rollout generation, and the loss
//! mask that keeps copied tokens out of the policy-gradient objective.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;

use crate::env::{sample_step, Action, PolicyParams, Rollout, SyntheticTask, Token};
use crate::error::{Error, Result};
use crate::persist;
use crate::Scalar;

/// Stored anchor for one task: the best rollout rejection sampling found.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefixEntry {
    pub task_id: String,
    pub anchor_tokens: Vec<Token>,
    /// Whether the selected sample was correct.
    pub source_correct: bool,
    pub source_length: usize,
}

/// One rejection sample offered to the bank builder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorCandidate {
    pub tokens: Vec<Token>,
    pub correct: bool,
    pub length: usize,
}

/// Selects the shortest correct sample, or the shortest overall when none is
/// correct. Ties keep the first occurrence in input order.
pub fn build_prefix_bank(
    task: &SyntheticTask,
    samples: &[AnchorCandidate],
) -> Result<PrefixEntry> {
    if samples.is_empty() {
        return Err(Error::Config(format!(
            "prefix bank for task {} needs at least one sample",
            task.id()
        )));
    }
    let mut best: Option<&AnchorCandidate> = None;
    for sample in samples {
        let better = match best {
            None => true,
            Some(current) => {
                (sample.correct && !current.correct)
                    || (sample.correct == current.correct && sample.length < current.length)
            }
        };
        if better {
            best = Some(sample);
        }
    }
    let chosen = best.expect("nonempty sample list");
    Ok(PrefixEntry {
        task_id: task.id().to_string(),
        anchor_tokens: chosen.tokens.clone(),
        source_correct: chosen.correct,
        source_length: chosen.length,
    })
}

/// Linear decay schedule of the protected prefix length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleConfig {
    /// Prefix length at step 0.
    pub initial_len: usize,
    /// Steps over which protection decays to zero and stays there.
    pub decay_steps: usize,
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.decay_steps < 1 {
            return Err(Error::Config("schedule decay steps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Protected prefix length at training step `k`:
/// `floor(initial_len * (1 - k / decay_steps))`, zero from `decay_steps` on.
pub fn schedule(step: usize, cfg: &ScheduleConfig) -> usize {
    if step >= cfg.decay_steps {
        return 0;
    }
    // Integer form of floor(initial_len * (1 - k/K)).
    (cfg.initial_len as u64 * (cfg.decay_steps - step) as u64 / cfg.decay_steps as u64) as usize
}

/// The four policy snapshots every rollout is scored against.
#[derive(Debug, Clone, Copy)]
pub struct Snapshots<'a, S> {
    /// Current training policy; generates the unprotected suffix.
    pub theta: &'a PolicyParams<S>,
    /// Policy snapshot taken at the start of the step (ratio denominator).
    pub old: &'a PolicyParams<S>,
    /// Frozen prefix policy the anchors were sampled from.
    pub prefix: &'a PolicyParams<S>,
    /// Frozen divergence reference.
    pub reference: &'a PolicyParams<S>,
}

impl<'a, S: Scalar> Snapshots<'a, S> {
    /// All four snapshots point at the same table; used for plain sampling.
    pub fn all(params: &'a PolicyParams<S>) -> Self {
        Snapshots { theta: params, old: params, prefix: params, reference: params }
    }
}

/// Generates one rollout whose first `prefix_len` tokens are copied verbatim
/// from the anchor (clamped to the anchor length) and whose remainder is
/// sampled from the current policy. All four log-probability tracks are
/// evaluated for every emitted token, copied or sampled.
pub fn hybrid_rollout<S: Scalar>(
    task: &SyntheticTask,
    entry: Option<&PrefixEntry>,
    prefix_len: usize,
    policies: &Snapshots<'_, S>,
    rng: &mut impl Rng,
) -> Result<Rollout<S>> {
    policies.theta.compatible_with(task)?;
    for other in [policies.old, policies.prefix, policies.reference] {
        if other.n_states() != policies.theta.n_states()
            || other.n_actions() != policies.theta.n_actions()
        {
            return Err(Error::Config(
                "policy snapshots must share one table shape".into(),
            ));
        }
    }
    let anchor: &[Token] = match entry {
        Some(e) if prefix_len > 0 => &e.anchor_tokens,
        _ => &[],
    };
    let copy_len = prefix_len.min(anchor.len()).min(task.max_len());

    let capacity = task.max_len();
    let mut tokens = Vec::with_capacity(capacity);
    let mut lp_theta = Vec::with_capacity(capacity);
    let mut lp_old = Vec::with_capacity(capacity);
    let mut lp_p = Vec::with_capacity(capacity);
    let mut lp_ref = Vec::with_capacity(capacity);

    let vocab = task.vocab_size();
    let mut progress = 0usize;
    let mut copied = 0usize;
    while tokens.len() < task.max_len() {
        let position = tokens.len();
        let row = policies.theta.row_for(task, progress);
        let (token, action_index) = if position < copy_len {
            let token = anchor[position];
            let action = task.action_for_token(progress, token)?;
            copied += 1;
            (token, action.index(vocab))
        } else {
            let (action_index, _) = sample_step(policies.theta, row, rng);
            let token = task.emit(progress, Action::from_index(action_index, vocab));
            (token, action_index)
        };
        lp_theta.push(policies.theta.action_logprob(row, action_index));
        lp_old.push(policies.old.action_logprob(row, action_index));
        lp_p.push(policies.prefix.action_logprob(row, action_index));
        lp_ref.push(policies.reference.action_logprob(row, action_index));
        progress = task.next_progress(progress, token);
        let stop = token.is_stop();
        tokens.push(token);
        if stop {
            break;
        }
    }

    let length = tokens.len();
    let correct = crate::env::verify(&tokens, task);
    Ok(Rollout {
        tokens,
        logprobs_theta: lp_theta,
        logprobs_old: lp_old,
        logprobs_p: lp_p,
        logprobs_ref: lp_ref,
        length,
        correct,
        prefix_boundary: copied,
    })
}

/// Per-token trainability mask: false for copied prefix tokens, true for the
/// tokens the policy chose.
pub fn loss_mask<S: Scalar>(rollout: &Rollout<S>) -> Vec<bool> {
    (0..rollout.length).map(|t| t >= rollout.prefix_boundary).collect()
}

/// Serializes a bank as one record per task:
/// `task_id source_correct_flag token token ...`.
pub fn save_bank(
    bank: &BTreeMap<String, PrefixEntry>,
    path: &Path,
    header: &str,
) -> Result<()> {
    let mut lines = vec![header.to_string()];
    for entry in bank.values() {
        let toks: Vec<String> = entry.anchor_tokens.iter().map(|t| t.to_string()).collect();
        lines.push(format!(
            "{} {} {}",
            entry.task_id,
            if entry.source_correct { 1 } else { 0 },
            toks.join(" ")
        ));
    }
    persist::write_lines(path, &lines)
}

/// Reads a bank file written by [`save_bank`]; the leading header line is
/// skipped after a sanity check.
pub fn load_bank(path: &Path) -> Result<BTreeMap<String, PrefixEntry>> {
    let text = persist::read_to_string(path)?;
    let mut bank = BTreeMap::new();
    for (number, line) in text.lines().enumerate() {
        if number == 0 {
            persist::check_header(path, line)?;
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let task_id = fields
            .next()
            .ok_or_else(|| parse_err(path, number, "missing task id"))?
            .to_string();
        let flag = fields
            .next()
            .ok_or_else(|| parse_err(path, number, "missing correctness flag"))?;
        let source_correct = match flag {
            "1" => true,
            "0" => false,
            other => return Err(parse_err(path, number, &format!("bad flag {other:?}"))),
        };
        let mut anchor_tokens = Vec::new();
        for field in fields {
            let id: u32 = field
                .parse()
                .map_err(|_| parse_err(path, number, &format!("bad token {field:?}")))?;
            anchor_tokens.push(Token(id));
        }
        if anchor_tokens.is_empty() {
            return Err(parse_err(path, number, "anchor must be nonempty"));
        }
        let source_length = anchor_tokens.len();
        bank.insert(
            task_id.clone(),
            PrefixEntry { task_id, anchor_tokens, source_correct, source_length },
        );
    }
    Ok(bank)
}

fn parse_err(path: &Path, line: usize, message: &str) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        message: format!("line {}: {message}", line + 1),
    }
}
