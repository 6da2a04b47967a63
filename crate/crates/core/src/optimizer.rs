//! Group-relative policy optimization for the tabular softmax policy:
//! within-group standardized advantages, the clipped surrogate objective with
//! a divergence penalty, its exact analytic gradient, and a central finite
//! difference oracle for checking that gradient.

use log::warn;

use crate::env::{PolicyParams, Rollout, SyntheticTask};
use crate::error::{Error, Result};
use crate::penalty::{self, GroupStats, PenaltyConfig};
use crate::Scalar;

/// Whether the importance ratio is formed per token or once per sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatioLevel {
    Token,
    Sequence,
}

/// Optimization hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig<S> {
    /// Symmetric clip range of the importance ratio.
    pub eps_clip: S,
    /// Weight of the divergence penalty against the frozen reference.
    pub kl_coeff: S,
    /// Guard added to the reward standard deviation before dividing.
    pub adv_eps: S,
    pub learning_rate: S,
    /// Rollouts per task group.
    pub group_size: usize,
    /// Steps of linear learning-rate warm-up.
    pub warmup_steps: usize,
    pub ratio_level: RatioLevel,
    /// When true (default) copied prefix tokens are excluded from the
    /// surrogate and divergence terms.
    pub mask_prefix_loss: bool,
}

impl<S: Scalar> OptimizerConfig<S> {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_clip > S::zero() && self.eps_clip < S::one()) {
            return Err(Error::Config("eps_clip must be in (0,1)".into()));
        }
        if !(self.kl_coeff >= S::zero()) {
            return Err(Error::Config("kl_coeff must be >= 0".into()));
        }
        if !(self.adv_eps > S::zero()) {
            return Err(Error::Config("adv_eps must be > 0".into()));
        }
        if !(self.learning_rate > S::zero()) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if self.group_size < 1 {
            return Err(Error::Config("group_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Standardized advantages of one group, with the reward moments they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageSet<S> {
    pub advantages: Vec<S>,
    pub reward_mean: S,
    /// Population standard deviation of the rewards.
    pub reward_std: S,
}

/// Standardizes rewards within a group: `(r - mean) / (std + adv_eps)` with
/// the population standard deviation. Identical rewards yield all zeros; the
/// output is recentered so its mean is exactly zero.
pub fn group_advantages<S: Scalar>(rewards: &[S], adv_eps: S) -> Result<AdvantageSet<S>> {
    if rewards.is_empty() {
        return Err(Error::Config("advantages need at least one reward".into()));
    }
    if !(adv_eps > S::zero()) {
        return Err(Error::Config("adv_eps must be > 0".into()));
    }
    let n = S::from_usize(rewards.len()).unwrap();
    let mean = rewards.iter().cloned().sum::<S>() / n;
    let variance = rewards.iter().map(|&r| (r - mean) * (r - mean)).sum::<S>() / n;
    let std = variance.sqrt();

    if rewards.iter().all(|&r| r == rewards[0]) {
        return Ok(AdvantageSet {
            advantages: vec![S::zero(); rewards.len()],
            reward_mean: rewards[0],
            reward_std: S::zero(),
        });
    }

    let mut advantages: Vec<S> =
        rewards.iter().map(|&r| (r - mean) / (std + adv_eps)).collect();
    // Recenter the rounding residue, then close the sum exactly: the last
    // element becomes the negation of the running sum of the others, so the
    // sequential total is bit-exact zero.
    let residue = advantages.iter().cloned().sum::<S>() / n;
    for a in &mut advantages {
        *a -= residue;
    }
    let partial: S = advantages[..advantages.len() - 1].iter().cloned().sum();
    *advantages.last_mut().unwrap() = -partial;
    Ok(AdvantageSet { advantages, reward_mean: mean, reward_std: std })
}

fn require_unmasked<S: Scalar>(rollout: &Rollout<S>, t: usize) -> Result<()> {
    if t >= rollout.length {
        return Err(Error::Contract(format!(
            "token index {t} out of range for rollout of length {}",
            rollout.length
        )));
    }
    if t < rollout.prefix_boundary {
        return Err(Error::Contract(format!(
            "token index {t} is masked (prefix boundary {})",
            rollout.prefix_boundary
        )));
    }
    Ok(())
}

/// Per-token importance ratio from the stored log-probability tracks.
pub fn importance_ratio<S: Scalar>(rollout: &Rollout<S>, t: usize) -> Result<S> {
    require_unmasked(rollout, t)?;
    Ok((rollout.logprobs_theta[t] - rollout.logprobs_old[t]).exp())
}

/// Pessimistic clipped surrogate term:
/// `min(ratio * adv, clamp(ratio, 1-eps, 1+eps) * adv)`.
pub fn clipped_term<S: Scalar>(ratio: S, advantage: S, eps_clip: S) -> S {
    let clipped = ratio.max(S::one() - eps_clip).min(S::one() + eps_clip);
    (ratio * advantage).min(clipped * advantage)
}

fn kl_from_logprobs<S: Scalar>(logprob_ref: S, logprob_theta: S) -> S {
    let r = (logprob_ref - logprob_theta).exp();
    r - r.ln() - S::one()
}

/// Nonnegative per-token divergence estimator `r - ln r - 1` with
/// `r = exp(logprob_ref - logprob_theta)`.
pub fn kl_term<S: Scalar>(rollout: &Rollout<S>, t: usize) -> Result<S> {
    require_unmasked(rollout, t)?;
    Ok(kl_from_logprobs(rollout.logprobs_ref[t], rollout.logprobs_theta[t]))
}

/// One task's scored rollout group: the rollouts, their length/pass-rate
/// statistics, shaped rewards, standardized advantages, and the penalty
/// coefficient that was applied.
#[derive(Debug, Clone)]
pub struct RolloutGroup<S> {
    pub task: SyntheticTask,
    pub rollouts: Vec<Rollout<S>>,
    pub stats: GroupStats<S>,
    pub rewards: Vec<S>,
    pub advantages: AdvantageSet<S>,
    /// Effective penalty coefficient for this group.
    pub alpha_used: S,
}

/// Computes stats, shaped rewards, and advantages for a sampled group.
pub fn score_group<S: Scalar>(
    task: SyntheticTask,
    rollouts: Vec<Rollout<S>>,
    penalty_cfg: &PenaltyConfig<S>,
    adv_eps: S,
) -> Result<RolloutGroup<S>> {
    let corrects: Vec<bool> = rollouts.iter().map(|r| r.correct).collect();
    let lengths: Vec<usize> = rollouts.iter().map(|r| r.length).collect();
    let stats = GroupStats::from_outcomes(&corrects, &lengths)?;
    let mut rewards = Vec::with_capacity(rollouts.len());
    for rollout in &rollouts {
        let p = penalty::rollout_penalty(rollout.length, &stats, penalty_cfg.mode)?;
        rewards.push(penalty::total_reward(rollout.correct, stats.pass_rate, p, penalty_cfg)?);
    }
    let advantages = group_advantages(&rewards, adv_eps)?;
    let alpha_used = match penalty_cfg.alpha_mode {
        penalty::AlphaMode::CosineDifficulty => penalty::alpha(stats.pass_rate)?,
        penalty::AlphaMode::Uniform(a) => a,
    };
    Ok(RolloutGroup { task, rollouts, stats, rewards, advantages, alpha_used })
}

fn effective_boundary<S: Scalar>(rollout: &Rollout<S>, cfg: &OptimizerConfig<S>) -> usize {
    if cfg.mask_prefix_loss {
        rollout.prefix_boundary
    } else {
        0
    }
}

/// Surrogate-with-divergence objective of the current policy on a frozen
/// batch: the mean over groups of the mean over rollouts of the token-mean
/// (or sequence-level) clipped term minus the weighted divergence term.
///
/// Log-probabilities of the evaluated policy are recomputed from `theta`;
/// the old and reference tracks stay frozen in the rollouts, which makes
/// this a pure function of `theta` suitable for finite differencing.
pub fn objective<S: Scalar>(
    theta: &PolicyParams<S>,
    batch: &[RolloutGroup<S>],
    cfg: &OptimizerConfig<S>,
) -> Result<S> {
    if batch.is_empty() {
        return Err(Error::Contract("objective needs a nonempty batch".into()));
    }
    let mut total = S::zero();
    for group in batch {
        total += group_objective(theta, group, cfg)?;
    }
    Ok(total / S::from_usize(batch.len()).unwrap())
}

#[allow(clippy::needless_range_loop)] // t indexes three parallel per-token tracks
fn group_objective<S: Scalar>(
    theta: &PolicyParams<S>,
    group: &RolloutGroup<S>,
    cfg: &OptimizerConfig<S>,
) -> Result<S> {
    let mut group_value = S::zero();
    let mut any_unmasked = false;
    for (rollout, &advantage) in group.rollouts.iter().zip(&group.advantages.advantages) {
        let boundary = effective_boundary(rollout, cfg);
        let steps = rollout.steps(&group.task)?;
        let m = rollout.length - boundary;
        if m == 0 {
            continue;
        }
        any_unmasked = true;
        let m_s = S::from_usize(m).unwrap();
        let mut kl_sum = S::zero();
        let mut surrogate = S::zero();
        let mut log_ratio_sum = S::zero();
        for t in boundary..rollout.length {
            let (progress, action) = steps[t];
            let logprob = theta.action_logprob(theta.row_for(&group.task, progress), action);
            kl_sum += kl_from_logprobs(rollout.logprobs_ref[t], logprob);
            match cfg.ratio_level {
                RatioLevel::Token => {
                    let ratio = (logprob - rollout.logprobs_old[t]).exp();
                    surrogate += clipped_term(ratio, advantage, cfg.eps_clip);
                }
                RatioLevel::Sequence => {
                    log_ratio_sum += logprob - rollout.logprobs_old[t];
                }
            }
        }
        let value = match cfg.ratio_level {
            RatioLevel::Token => surrogate / m_s - cfg.kl_coeff * kl_sum / m_s,
            RatioLevel::Sequence => {
                clipped_term(log_ratio_sum.exp(), advantage, cfg.eps_clip)
                    - cfg.kl_coeff * kl_sum / m_s
            }
        };
        group_value += value;
    }
    if !any_unmasked {
        warn!(
            "group for task {} has no unmasked tokens; contributes zero objective",
            group.task.id()
        );
        return Ok(S::zero());
    }
    Ok(group_value / S::from_usize(group.rollouts.len()).unwrap())
}

/// Dense gradient of [`objective`] with respect to every policy logit.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveGradient<S> {
    n_states: usize,
    n_actions: usize,
    values: Vec<S>,
}

impl<S: Scalar> ObjectiveGradient<S> {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        ObjectiveGradient { n_states, n_actions, values: vec![S::zero(); n_states * n_actions] }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, state: usize, action: usize) -> S {
        self.values[state * self.n_actions + action]
    }

    fn add(&mut self, state: usize, action: usize, delta: S) {
        self.values[state * self.n_actions + action] += delta;
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn l2_norm(&self) -> S {
        self.values.iter().map(|&v| v * v).sum::<S>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Exact analytic gradient of the objective for the tabular softmax policy.
///
/// Logits of states never visited by unmasked tokens receive exactly zero;
/// tokens at which the pessimistic min selects the clipped constant branch
/// contribute zero surrogate gradient.
#[allow(clippy::needless_range_loop)] // t indexes three parallel per-token tracks
pub fn objective_gradient<S: Scalar>(
    theta: &PolicyParams<S>,
    batch: &[RolloutGroup<S>],
    cfg: &OptimizerConfig<S>,
) -> Result<ObjectiveGradient<S>> {
    if batch.is_empty() {
        return Err(Error::Contract("gradient needs a nonempty batch".into()));
    }
    let mut grad = ObjectiveGradient::zeros(theta.n_states(), theta.n_actions());
    let outer = S::one() / S::from_usize(batch.len()).unwrap();
    for group in batch {
        let per_rollout = outer / S::from_usize(group.rollouts.len()).unwrap();
        if group.rollouts.iter().all(|r| r.length == effective_boundary(r, cfg)) {
            warn!(
                "group for task {} has no unmasked tokens; contributes zero gradient",
                group.task.id()
            );
            continue;
        }
        for (rollout, &advantage) in group.rollouts.iter().zip(&group.advantages.advantages) {
            let boundary = effective_boundary(rollout, cfg);
            let m = rollout.length - boundary;
            if m == 0 {
                continue;
            }
            let m_s = S::from_usize(m).unwrap();
            let steps = rollout.steps(&group.task)?;

            // Sequence-level ratio needs a first pass over the tokens.
            let seq_surrogate_slope = if cfg.ratio_level == RatioLevel::Sequence {
                let mut log_ratio_sum = S::zero();
                for t in boundary..rollout.length {
                    let (progress, action) = steps[t];
                    let row = theta.row_for(&group.task, progress);
                    log_ratio_sum += theta.action_logprob(row, action) - rollout.logprobs_old[t];
                }
                let ratio = log_ratio_sum.exp();
                Some(surrogate_slope(ratio, advantage, cfg.eps_clip))
            } else {
                None
            };

            for t in boundary..rollout.length {
                let (progress, action) = steps[t];
                let row = theta.row_for(&group.task, progress);
                let logprob = theta.action_logprob(row, action);
                let surr = match seq_surrogate_slope {
                    Some(slope) => slope,
                    None => {
                        let ratio = (logprob - rollout.logprobs_old[t]).exp();
                        surrogate_slope(ratio, advantage, cfg.eps_clip) / m_s
                    }
                };
                let r_ref = (rollout.logprobs_ref[t] - logprob).exp();
                let kl_part = cfg.kl_coeff * (r_ref - S::one()) / m_s;
                let weight = (surr + kl_part) * per_rollout;

                // Chain rule through log softmax: d logprob / d z[row][b]
                // is (1{b == a} - pi(b|row)).
                let probs = theta.probs(row);
                grad.add(row, action, weight);
                for (b, &p) in probs.iter().enumerate() {
                    grad.add(row, b, -weight * p);
                }
            }
        }
    }
    Ok(grad)
}

/// Derivative of the pessimistic clipped term with respect to the log-prob
/// behind the ratio: the unclipped branch slopes with `ratio * advantage`,
/// the clipped constant branch is flat.
fn surrogate_slope<S: Scalar>(ratio: S, advantage: S, eps_clip: S) -> S {
    let clipped = ratio.max(S::one() - eps_clip).min(S::one() + eps_clip);
    if ratio * advantage <= clipped * advantage {
        ratio * advantage
    } else {
        S::zero()
    }
}

/// Central finite differences of an arbitrary scalar function of the policy,
/// evaluated logit by logit on frozen inputs.
pub fn finite_diff_gradient<S: Scalar>(
    objective_fn: &dyn Fn(&PolicyParams<S>) -> S,
    params: &PolicyParams<S>,
    h: S,
) -> ObjectiveGradient<S> {
    assert!(h > S::zero(), "finite difference step must be positive");
    let mut grad = ObjectiveGradient::zeros(params.n_states(), params.n_actions());
    let mut scratch = params.clone();
    let two_h = h + h;
    for state in 0..params.n_states() {
        for action in 0..params.n_actions() {
            let original = scratch.logit(state, action);
            *scratch.logit_mut(state, action) = original + h;
            let up = objective_fn(&scratch);
            *scratch.logit_mut(state, action) = original - h;
            let down = objective_fn(&scratch);
            *scratch.logit_mut(state, action) = original;
            grad.add(state, action, (up - down) / two_h);
        }
    }
    grad
}

/// Largest elementwise relative disagreement between two gradient tables,
/// with the usual `max(|a|, |b|, floor)` denominator.
pub fn max_relative_error<S: Scalar>(
    a: &ObjectiveGradient<S>,
    b: &ObjectiveGradient<S>,
    floor: S,
) -> S {
    debug_assert_eq!(a.values.len(), b.values.len());
    let mut worst = S::zero();
    for (&x, &y) in a.values.iter().zip(&b.values) {
        let denom = x.abs().max(y.abs()).max(floor);
        worst = worst.max((x - y).abs() / denom);
    }
    worst
}
