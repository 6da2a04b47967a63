//! Exact enumeration analyses: the distribution of policy-generated prefixes,
//! conditional continuation values, the dominance gap between anchored and
//! plain rollout objectives computed along two independent routes, and the
//! uniform-penalty solvability sweep.

use std::collections::BTreeMap;

use rand::Rng;

use crate::config::ExperimentConfig;
use crate::env::{
    enumerate_expected_return, enumerate_from, make_task, verify, EnumerationBudget,
    PolicyParams, SyntheticTask, TaskKnobs, Token,
};
use crate::error::{Error, Result};
use crate::metrics;
use crate::penalty::{solvability_bound, AlphaMode, PenaltyMode};
use crate::trainer::{evaluate_policy, stream_rng, RngStream, TrainerState};
use crate::Scalar;

/// One atom of a prefix distribution: a token sequence the policy can have
/// produced by the cut point, with its exact probability. Sequences that
/// stopped before the cut stay as absorbing atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixAtom<S> {
    pub tokens: Vec<Token>,
    pub end_progress: usize,
    pub probability: S,
    pub stopped: bool,
}

/// Exact distribution over prefixes of length `cut` (plus earlier-terminated
/// atoms); probabilities sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixDistribution<S> {
    pub cut: usize,
    pub atoms: Vec<PrefixAtom<S>>,
}

impl<S: Scalar> PrefixDistribution<S> {
    pub fn total_probability(&self) -> S {
        self.atoms.iter().map(|a| a.probability).sum()
    }
}

/// Enumerates every prefix the policy can emit up to the cut length.
pub fn prefix_distribution<S: Scalar>(
    params: &PolicyParams<S>,
    task: &SyntheticTask,
    cut: usize,
    budget: EnumerationBudget,
) -> Result<PrefixDistribution<S>> {
    params.compatible_with(task)?;
    if cut == 0 {
        return Ok(PrefixDistribution {
            cut,
            atoms: vec![PrefixAtom {
                tokens: Vec::new(),
                end_progress: 0,
                probability: S::one(),
                stopped: false,
            }],
        });
    }
    let policy =
        |_depth: usize, progress: usize| params.probs(params.row_for(task, progress));
    let mut atoms = Vec::new();
    enumerate_from(task, &policy, 0, 0, cut, budget, &mut |leaf| {
        atoms.push(PrefixAtom {
            tokens: leaf.tokens.to_vec(),
            end_progress: leaf.end_progress,
            probability: leaf.probability,
            stopped: leaf.stopped,
        });
    })?;
    atoms.sort_by(|a, b| a.tokens.cmp(&b.tokens));
    let dist = PrefixDistribution { cut, atoms };
    let drift = (dist.total_probability() - S::one()).abs();
    if drift > S::from_f64_lossy(1e-9) {
        return Err(Error::Internal(format!(
            "prefix probabilities sum off by {drift}"
        )));
    }
    Ok(dist)
}

/// Exact expected reward of continuations of `atom` under `theta`. Atoms
/// that already terminated (stop token or truncation at `max_len`) evaluate
/// the reward of their own trajectory.
pub fn conditional_value<S: Scalar>(
    theta: &PolicyParams<S>,
    task: &SyntheticTask,
    atom: &PrefixAtom<S>,
    reward_fn: &dyn Fn(&[Token], bool) -> S,
    budget: EnumerationBudget,
) -> Result<S> {
    if atom.stopped {
        return Ok(reward_fn(&atom.tokens, verify(&atom.tokens, task)));
    }
    if atom.tokens.len() >= task.max_len() {
        // Truncated trajectory: terminal and incorrect by construction.
        return Ok(reward_fn(&atom.tokens, false));
    }
    theta.compatible_with(task)?;
    let policy =
        |_depth: usize, progress: usize| theta.probs(theta.row_for(task, progress));
    let mut value = S::zero();
    let mut total = S::zero();
    enumerate_from(
        task,
        &policy,
        atom.end_progress,
        atom.tokens.len(),
        task.max_len(),
        budget,
        &mut |leaf| {
            let mut full = atom.tokens.clone();
            full.extend_from_slice(leaf.tokens);
            let correct = leaf.stopped && verify(&full, task);
            value += leaf.probability * reward_fn(&full, correct);
            total += leaf.probability;
        },
    )?;
    let drift = (total - S::one()).abs();
    if drift > S::from_f64_lossy(1e-9) {
        return Err(Error::Internal(format!(
            "continuation probabilities sum off by {drift}"
        )));
    }
    Ok(value)
}

/// Joint view of one prefix atom under two policies, with its value.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomComparison<S> {
    pub tokens: Vec<Token>,
    pub prob_anchor: S,
    pub prob_theta: S,
    pub value: S,
}

/// Merges the prefix distributions of the anchor policy and the training
/// policy over their shared support and attaches the conditional value of
/// every atom under the training policy.
pub fn compare_prefix_distributions<S: Scalar>(
    params_anchor: &PolicyParams<S>,
    theta: &PolicyParams<S>,
    task: &SyntheticTask,
    cut: usize,
    reward_fn: &dyn Fn(&[Token], bool) -> S,
    budget: EnumerationBudget,
) -> Result<Vec<AtomComparison<S>>> {
    let d_anchor = prefix_distribution(params_anchor, task, cut, budget)?;
    let d_theta = prefix_distribution(theta, task, cut, budget)?;
    let mut merged: BTreeMap<Vec<Token>, (S, S, PrefixAtom<S>)> = BTreeMap::new();
    for atom in d_anchor.atoms {
        merged.insert(atom.tokens.clone(), (atom.probability, S::zero(), atom));
    }
    for atom in d_theta.atoms {
        merged
            .entry(atom.tokens.clone())
            .and_modify(|slot| slot.1 = atom.probability)
            .or_insert_with(|| (S::zero(), atom.probability, atom.clone()));
    }
    let mut rows = Vec::with_capacity(merged.len());
    for (tokens, (prob_anchor, prob_theta, atom)) in merged {
        let value = conditional_value(theta, task, &atom, reward_fn, budget)?;
        rows.push(AtomComparison { tokens, prob_anchor, prob_theta, value });
    }
    Ok(rows)
}

/// Dominance gap via the value decomposition: the sum over prefix atoms of
/// the probability shift times the conditional value.
pub fn dominance_gap<S: Scalar>(
    params_anchor: &PolicyParams<S>,
    theta: &PolicyParams<S>,
    task: &SyntheticTask,
    cut: usize,
    reward_fn: &dyn Fn(&[Token], bool) -> S,
    budget: EnumerationBudget,
) -> Result<S> {
    let rows =
        compare_prefix_distributions(params_anchor, theta, task, cut, reward_fn, budget)?;
    Ok(rows
        .iter()
        .map(|row| (row.prob_anchor - row.prob_theta) * row.value)
        .sum())
}

/// Dominance gap via two direct full-trajectory enumerations: the anchored
/// objective (anchor policy before the cut, training policy after) minus the
/// plain objective. Cross-checks [`dominance_gap`].
pub fn dominance_gap_direct<S: Scalar>(
    params_anchor: &PolicyParams<S>,
    theta: &PolicyParams<S>,
    task: &SyntheticTask,
    cut: usize,
    reward_fn: &dyn Fn(&[Token], bool) -> S,
    budget: EnumerationBudget,
) -> Result<S> {
    params_anchor.compatible_with(task)?;
    theta.compatible_with(task)?;
    let hybrid = |depth: usize, progress: usize| {
        if depth < cut {
            params_anchor.probs(params_anchor.row_for(task, progress))
        } else {
            theta.probs(theta.row_for(task, progress))
        }
    };
    let mut anchored = S::zero();
    let mut total = S::zero();
    enumerate_from(task, &hybrid, 0, 0, task.max_len(), budget, &mut |leaf| {
        let correct = leaf.stopped && verify(leaf.tokens, task);
        anchored += leaf.probability * reward_fn(leaf.tokens, correct);
        total += leaf.probability;
    })?;
    let drift = (total - S::one()).abs();
    if drift > S::from_f64_lossy(1e-9) {
        return Err(Error::Internal(format!("hybrid probabilities sum off by {drift}")));
    }
    let base = enumerate_expected_return(theta, task, reward_fn, budget)?;
    Ok(anchored - base)
}

/// First-order stochastic dominance of the anchor prefix distribution over
/// the training one with respect to the value ordering: at every value level,
/// the anchor policy puts at least as much mass on atoms of that value or
/// higher. This is the constructive reading of "shifts mass toward good
/// prefixes"; when it holds the decomposition gap is nonnegative.
pub fn premise_holds<S: Scalar>(rows: &[AtomComparison<S>]) -> bool {
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| {
        rows[b].value.partial_cmp(&rows[a].value).unwrap_or(std::cmp::Ordering::Equal)
    });
    let tol = S::from_f64_lossy(1e-12);
    let mut cum_anchor = S::zero();
    let mut cum_theta = S::zero();
    let mut i = 0;
    while i < order.len() {
        // Consume a block of equal values before comparing.
        let v = rows[order[i]].value;
        while i < order.len() && rows[order[i]].value == v {
            cum_anchor += rows[order[i]].prob_anchor;
            cum_theta += rows[order[i]].prob_theta;
            i += 1;
        }
        if cum_anchor < cum_theta - tol {
            return false;
        }
    }
    true
}

/// Sharpened copy of a policy that seeks the solution: the advance logit is
/// boosted at unsaturated states and the stop logit at the saturated state.
pub fn solution_seeking_policy<S: Scalar>(
    base: &PolicyParams<S>,
    task: &SyntheticTask,
    sharpness: S,
) -> PolicyParams<S> {
    let mut sharp = base.clone();
    let stop_index = task.action_count() - 1;
    for state in 0..task.state_count() {
        if state < task.l_star() {
            *sharp.logit_mut(state, 0) += sharpness;
        } else {
            *sharp.logit_mut(state, stop_index) += sharpness;
        }
    }
    sharp
}

/// One row of the dominance report.
#[derive(Debug, Clone, PartialEq)]
pub struct DominanceRow<S> {
    pub task_id: String,
    pub cut: usize,
    pub gap_decomposition: Option<S>,
    pub gap_direct: Option<S>,
    pub premise_satisfied: Option<bool>,
    pub error: Option<String>,
}

/// Builds the dominance report over freshly constructed instances: a noisy
/// near-uniform training policy against its solution-seeking sharpening.
/// Budget failures are surfaced per row rather than aborting the report.
pub fn dominance_report<S: Scalar>(
    cfg: &ExperimentConfig<S>,
    seed: u64,
) -> Result<Vec<DominanceRow<S>>> {
    let mut rng = stream_rng(seed, RngStream::Analysis);
    let budget = EnumerationBudget::default();
    // Correctness minus a normalized length penalty, weighted by the
    // uniform coefficient when one is configured.
    let lambda = match cfg.penalty.alpha_mode {
        AlphaMode::Uniform(a) => a,
        AlphaMode::CosineDifficulty => S::zero(),
    };
    let max_len = S::from_usize(cfg.env.max_len).unwrap();
    let reward = move |tokens: &[Token], correct: bool| {
        let acc = if correct { S::one() } else { S::zero() };
        acc - lambda * S::from_usize(tokens.len()).unwrap() / max_len
    };

    let mut rows = Vec::new();
    for _ in 0..cfg.dominance.instances {
        let l_star = rng.random_range(cfg.env.l_star_min..=cfg.env.l_star_max);
        let task = make_task(
            &TaskKnobs {
                l_star,
                vocab_size: cfg.env.vocab_size,
                max_len: cfg.env.max_len,
            },
            &mut rng,
        )?;
        let mut theta: PolicyParams<S> =
            PolicyParams::uniform(task.state_count(), task.action_count());
        for state in 0..theta.n_states() {
            for action in 0..theta.n_actions() {
                *theta.logit_mut(state, action) +=
                    S::from_f64_lossy(rng.random_range(-0.5..0.5));
            }
        }
        let anchor = solution_seeking_policy(&theta, &task, cfg.dominance.sharpness);

        for &cut in &cfg.dominance.cut_lengths {
            let row = (|| -> Result<DominanceRow<S>> {
                let comparisons =
                    compare_prefix_distributions(&anchor, &theta, &task, cut, &reward, budget)?;
                let decomposition: S = comparisons
                    .iter()
                    .map(|r| (r.prob_anchor - r.prob_theta) * r.value)
                    .sum();
                let direct =
                    dominance_gap_direct(&anchor, &theta, &task, cut, &reward, budget)?;
                Ok(DominanceRow {
                    task_id: task.id().to_string(),
                    cut,
                    gap_decomposition: Some(decomposition),
                    gap_direct: Some(direct),
                    premise_satisfied: Some(premise_holds(&comparisons)),
                    error: None,
                })
            })();
            rows.push(row.unwrap_or_else(|e| DominanceRow {
                task_id: task.id().to_string(),
                cut,
                gap_decomposition: None,
                gap_direct: None,
                premise_satisfied: None,
                error: Some(e.to_string()),
            }));
        }
    }
    Ok(rows)
}

/// One cell outcome of the solvability sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell<S> {
    pub alpha: S,
    pub l_star: usize,
    /// The survival bound `1 / l_star`.
    pub bound: S,
    pub final_acc: S,
    pub final_len: S,
    pub seed: u64,
}

/// Trains a uniform linear-penalty run per (alpha, L*, seed) cell and
/// records terminal accuracy and mean length from a prefix-free evaluation.
pub fn solvability_sweep<S: Scalar>(
    alphas: &[S],
    l_stars: &[usize],
    base: &ExperimentConfig<S>,
    seeds: &[u64],
) -> Result<Vec<SweepCell<S>>> {
    let mut cells = Vec::with_capacity(alphas.len() * l_stars.len() * seeds.len());
    for &l_star in l_stars {
        for &alpha in alphas {
            for &seed in seeds {
                let mut cfg = base.clone();
                cfg.env.l_star_min = l_star;
                cfg.env.l_star_max = l_star;
                cfg.penalty.mode = PenaltyMode::Linear;
                cfg.penalty.alpha_mode = AlphaMode::Uniform(alpha);
                cfg.schedule.initial_len = 0;
                let mut state = TrainerState::new(cfg, seed)?;
                state.run_to_completion()?;
                let mut eval_rng = stream_rng(seed, RngStream::Eval);
                let records = evaluate_policy(
                    &state.policy,
                    &state.pool,
                    state.config.eval.runs,
                    state.config.eval.temperature,
                    &mut eval_rng,
                )?;
                cells.push(SweepCell {
                    alpha,
                    l_star,
                    bound: solvability_bound(l_star),
                    final_acc: metrics::pass_at_1(&records)?,
                    final_len: metrics::mean_length(&records)?,
                    seed,
                });
            }
        }
    }
    Ok(cells)
}
