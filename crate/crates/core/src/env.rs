//! Synthetic reasoning environment: subsequence-completion tasks, the tabular
//! softmax policy over solution progress, sampling, verification, and exact
//! trajectory enumeration.
//!
//! A task hides an ordered solution of `l_star` distinct tokens inside a
//! vocabulary of distractors. A rollout is correct when the solution tokens
//! appear in order and the rollout ends with the stop token within `max_len`.
//! The policy state is the number of solution steps completed (saturating),
//! so correctness needs at least `l_star` deliberate actions and the whole
//! trajectory space stays small enough to enumerate exactly.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::Scalar;

/// One emitted symbol. `Token(0)` is the reserved stop token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Token(pub u32);

impl Token {
    pub const STOP: Token = Token(0);

    pub fn is_stop(self) -> bool {
        self == Token::STOP
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Difficulty knobs for task construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskKnobs {
    /// Number of solution tokens; the minimum action count a correct rollout
    /// spends before stopping.
    pub l_star: usize,
    /// Number of distractor tokens available to the policy.
    pub vocab_size: usize,
    /// Hard cap on rollout length, stop token included.
    pub max_len: usize,
}

/// A toy reasoning problem with a known minimal solution and a verifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticTask {
    id: String,
    solution: Vec<Token>,
    distractors: Vec<Token>,
    max_len: usize,
}

impl SyntheticTask {
    pub fn id(&self) -> &str {
        &self.id
    }

    /// The ordered list of required tokens; also the ground-truth answer.
    pub fn solution(&self) -> &[Token] {
        &self.solution
    }

    pub fn ground_truth(&self) -> &[Token] {
        &self.solution
    }

    pub fn distractors(&self) -> &[Token] {
        &self.distractors
    }

    /// Minimal number of solution tokens a correct rollout must emit.
    pub fn l_star(&self) -> usize {
        self.solution.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.distractors.len()
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    /// Number of policy states a task of this size visits: progress 0..=l_star.
    pub fn state_count(&self) -> usize {
        self.l_star() + 1
    }

    /// Number of actions: advance, each distractor, stop.
    pub fn action_count(&self) -> usize {
        self.vocab_size() + 2
    }

    /// Solution progress after consuming `tokens` from progress 0.
    pub fn progress_after(&self, tokens: &[Token]) -> usize {
        let mut progress = 0;
        for &token in tokens {
            progress = self.next_progress(progress, token);
        }
        progress
    }

    /// Progress update for a single emitted token; saturates at `l_star`.
    pub fn next_progress(&self, progress: usize, token: Token) -> usize {
        if progress < self.l_star() && token == self.solution[progress] {
            progress + 1
        } else {
            progress
        }
    }

    /// Concrete token produced by an action taken at `progress`.
    pub fn emit(&self, progress: usize, action: Action) -> Token {
        match action {
            // At saturation "advance" re-emits the final solution token,
            // which cannot change progress or correctness.
            Action::Advance => self.solution[progress.min(self.l_star() - 1)],
            Action::Distractor(j) => self.distractors[j],
            Action::Stop => Token::STOP,
        }
    }

    /// Recovers the action that emits `token` at `progress`. Fails for
    /// tokens no action of this task can produce there.
    pub fn action_for_token(&self, progress: usize, token: Token) -> Result<Action> {
        if token.is_stop() {
            return Ok(Action::Stop);
        }
        if token == self.solution[progress.min(self.l_star() - 1)] {
            return Ok(Action::Advance);
        }
        if let Some(j) = self.distractors.iter().position(|&d| d == token) {
            return Ok(Action::Distractor(j));
        }
        Err(Error::Internal(format!(
            "token {token} is not reachable at progress {progress} of task {}",
            self.id
        )))
    }
}

/// Abstract action of the tabular policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    /// Emit the next unmatched solution token.
    Advance,
    /// Emit distractor `j`.
    Distractor(usize),
    /// Emit the stop token and terminate.
    Stop,
}

impl Action {
    /// Row-index encoding: 0 = advance, 1..=vocab = distractors, vocab+1 = stop.
    pub fn index(self, vocab_size: usize) -> usize {
        match self {
            Action::Advance => 0,
            Action::Distractor(j) => {
                debug_assert!(j < vocab_size);
                1 + j
            }
            Action::Stop => vocab_size + 1,
        }
    }

    pub fn from_index(index: usize, vocab_size: usize) -> Action {
        if index == 0 {
            Action::Advance
        } else if index <= vocab_size {
            Action::Distractor(index - 1)
        } else {
            Action::Stop
        }
    }
}

/// Builds a task with a random distinct solution drawn from a token universe
/// of size `l_star + vocab_size`; deterministic given the generator state.
pub fn make_task(knobs: &TaskKnobs, rng: &mut impl Rng) -> Result<SyntheticTask> {
    if knobs.l_star < 1 {
        return Err(Error::Config("L* must be at least 1".into()));
    }
    if knobs.l_star > knobs.max_len {
        return Err(Error::Config(format!(
            "L* exceeds max_len ({} > {})",
            knobs.l_star, knobs.max_len
        )));
    }
    if knobs.vocab_size < 1 {
        return Err(Error::Config("vocab_size must be at least 1".into()));
    }

    let id = format!("t{:016x}", rng.random::<u64>());
    // Universe ids 1..=l_star+vocab; id 0 is the stop token.
    let mut universe: Vec<Token> = (1..=(knobs.l_star + knobs.vocab_size) as u32)
        .map(Token)
        .collect();
    // Partial Fisher-Yates: the first l_star entries become the solution.
    for i in 0..knobs.l_star {
        let j = rng.random_range(i..universe.len());
        universe.swap(i, j);
    }
    let distractors = universe.split_off(knobs.l_star);
    Ok(SyntheticTask {
        id,
        solution: universe,
        distractors,
        max_len: knobs.max_len,
    })
}

/// Correctness indicator: the solution appears in order as a subsequence and
/// the rollout terminates with exactly one stop token within `max_len`.
pub fn verify(tokens: &[Token], task: &SyntheticTask) -> bool {
    if tokens.is_empty() || tokens.len() > task.max_len() {
        return false;
    }
    let (last, body) = tokens.split_last().expect("nonempty");
    if !last.is_stop() || body.iter().any(|t| t.is_stop()) {
        return false;
    }
    task.progress_after(body) == task.l_star()
}

/// Logits table of the tabular softmax policy, indexed by
/// (progress state, action).
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams<S> {
    n_states: usize,
    n_actions: usize,
    logits: Vec<S>,
}

impl<S: Scalar> PolicyParams<S> {
    /// Uniform policy: all logits zero.
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        PolicyParams {
            n_states,
            n_actions,
            logits: vec![S::zero(); n_states * n_actions],
        }
    }

    pub fn from_logits(n_states: usize, n_actions: usize, logits: Vec<S>) -> Result<Self> {
        if logits.len() != n_states * n_actions {
            return Err(Error::Config(format!(
                "logit table needs {} entries, got {}",
                n_states * n_actions,
                logits.len()
            )));
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("logits must all be finite".into()));
        }
        Ok(PolicyParams { n_states, n_actions, logits })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn vocab_size(&self) -> usize {
        self.n_actions - 2
    }

    pub fn logit(&self, state: usize, action: usize) -> S {
        self.logits[state * self.n_actions + action]
    }

    pub fn logit_mut(&mut self, state: usize, action: usize) -> &mut S {
        &mut self.logits[state * self.n_actions + action]
    }

    pub fn logits(&self) -> &[S] {
        &self.logits
    }

    pub fn row(&self, state: usize) -> &[S] {
        let start = state * self.n_actions;
        &self.logits[start..start + self.n_actions]
    }

    /// Softmax probabilities of the given state, computed stably.
    pub fn probs(&self, state: usize) -> Vec<S> {
        let row = self.row(state);
        let max = row.iter().cloned().fold(S::neg_infinity(), S::max);
        let exps: Vec<S> = row.iter().map(|&z| (z - max).exp()).collect();
        let total: S = exps.iter().cloned().sum();
        exps.into_iter().map(|e| e / total).collect()
    }

    /// Exact log-probability of one action at one state.
    pub fn action_logprob(&self, state: usize, action: usize) -> S {
        let row = self.row(state);
        let max = row.iter().cloned().fold(S::neg_infinity(), S::max);
        let log_norm = row
            .iter()
            .map(|&z| (z - max).exp())
            .sum::<S>()
            .ln()
            + max;
        row[action] - log_norm
    }

    /// Same table with logits divided by a sampling temperature.
    pub fn with_temperature(&self, temperature: S) -> Result<Self> {
        if !(temperature > S::zero()) {
            return Err(Error::Domain("temperature must be positive".into()));
        }
        Ok(PolicyParams {
            n_states: self.n_states,
            n_actions: self.n_actions,
            logits: self.logits.iter().map(|&z| z / temperature).collect(),
        })
    }

    /// The policy can drive `task` when it covers its states and actions.
    pub fn compatible_with(&self, task: &SyntheticTask) -> Result<()> {
        if self.n_states < task.state_count() || self.n_actions != task.action_count() {
            return Err(Error::Config(format!(
                "policy table {}x{} cannot drive task {} needing {}x{}",
                self.n_states,
                self.n_actions,
                task.id(),
                task.state_count(),
                task.action_count()
            )));
        }
        Ok(())
    }

    /// Table row for a task's progress state. Unsaturated progress indexes
    /// rows directly; every task's saturated state shares the last row, so
    /// one table can drive a pool of mixed solution lengths without the
    /// "time to stop" signal colliding across tasks.
    pub fn row_for(&self, task: &SyntheticTask, progress: usize) -> usize {
        if progress < task.l_star() {
            progress
        } else {
            self.n_states - 1
        }
    }
}

/// Draws one action from the softmax at `state`, returning its index and its
/// exact log-probability.
pub fn sample_step<S: Scalar>(
    params: &PolicyParams<S>,
    state: usize,
    rng: &mut impl Rng,
) -> (usize, S) {
    let probs = params.probs(state);
    // The draw happens in f64 so the RNG stream is identical for f32 and f64
    // instantiations of the same logits.
    let u: f64 = rng.random();
    let mut cumulative = 0.0f64;
    let mut chosen = probs.len() - 1;
    for (action, &p) in probs.iter().enumerate() {
        cumulative += p.to_f64().expect("probability fits in f64");
        if u < cumulative {
            chosen = action;
            break;
        }
    }
    (chosen, params.action_logprob(state, chosen))
}

/// Mean Shannon entropy (nats) of the per-state action distributions.
pub fn policy_entropy<S: Scalar>(params: &PolicyParams<S>) -> S {
    let mut total = S::zero();
    for state in 0..params.n_states() {
        let mut h = S::zero();
        for p in params.probs(state) {
            if p > S::zero() {
                h -= p * p.ln();
            }
        }
        total += h;
    }
    total / S::from_usize(params.n_states()).unwrap()
}

/// How the trainer initializes the policy table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyInit<S> {
    /// All logits zero.
    Uniform,
    /// Competent-but-verbose starting point: the policy tends to complete
    /// solutions yet pads them with distractors, leaving room for length
    /// compression without a capability gap.
    Biased {
        advance: S,
        distractor: S,
        /// Stop logit at states that still miss solution tokens.
        stop: S,
        /// Stop logit at the saturated state.
        terminal_stop: S,
    },
}

/// Builds the initial policy table for `n_states` progress states over a
/// vocabulary of `vocab_size` distractors.
pub fn init_policy<S: Scalar>(
    n_states: usize,
    vocab_size: usize,
    init: &PolicyInit<S>,
) -> PolicyParams<S> {
    let n_actions = vocab_size + 2;
    let mut params = PolicyParams::uniform(n_states, n_actions);
    if let PolicyInit::Biased { advance, distractor, stop, terminal_stop } = *init {
        for state in 0..n_states {
            *params.logit_mut(state, 0) = advance;
            for j in 0..vocab_size {
                *params.logit_mut(state, 1 + j) = distractor;
            }
            let stop_logit = if state + 1 == n_states { terminal_stop } else { stop };
            *params.logit_mut(state, vocab_size + 1) = stop_logit;
        }
    }
    params
}

/// One sampled trajectory with per-token log-probabilities under the four
/// policy snapshots the trainer tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout<S> {
    pub tokens: Vec<Token>,
    pub logprobs_theta: Vec<S>,
    pub logprobs_old: Vec<S>,
    pub logprobs_p: Vec<S>,
    pub logprobs_ref: Vec<S>,
    /// Token count including the stop token (or `max_len` when truncated).
    pub length: usize,
    pub correct: bool,
    /// Tokens at positions `< prefix_boundary` were copied from the anchor.
    pub prefix_boundary: usize,
}

impl<S: Scalar> Rollout<S> {
    /// Number of tokens the policy chose itself.
    pub fn unmasked_len(&self) -> usize {
        self.length - self.prefix_boundary
    }

    /// True when the copied prefix already contained the stop token, i.e.
    /// the anchor exposed a complete answer.
    pub fn shortcut_exposed(&self) -> bool {
        self.prefix_boundary > 0 && self.tokens[self.prefix_boundary - 1].is_stop()
    }

    /// Per-token (progress, action-index) pairs reconstructed against
    /// `task`; map progress to a table row with [`PolicyParams::row_for`].
    pub fn steps(&self, task: &SyntheticTask) -> Result<Vec<(usize, usize)>> {
        let vocab = task.vocab_size();
        let mut out = Vec::with_capacity(self.tokens.len());
        let mut progress = 0;
        for &token in &self.tokens {
            let action = task.action_for_token(progress, token)?;
            out.push((progress, action.index(vocab)));
            progress = task.next_progress(progress, token);
        }
        Ok(out)
    }
}

/// Leaf budget for exact enumeration; exceeding it is an error, never a
/// silent truncation.
#[derive(Debug, Clone, Copy)]
pub struct EnumerationBudget {
    pub max_leaves: usize,
}

impl Default for EnumerationBudget {
    fn default() -> Self {
        EnumerationBudget { max_leaves: 4_000_000 }
    }
}

/// A visited leaf of the enumeration tree. When `stopped` is false the walk
/// was cut by the depth limit: a truncated trajectory in full-trajectory
/// enumeration, or an open prefix in prefix enumeration.
pub struct EnumLeaf<'a, S> {
    pub tokens: &'a [Token],
    pub end_progress: usize,
    pub probability: S,
    pub stopped: bool,
}

/// Depth-first exact enumeration of every trajectory continuation.
///
/// Starts from `start_progress` with `start_len` tokens already emitted and
/// explores until the stop token, the task's `max_len`, or `limit` total
/// tokens. `policy_at(depth, progress)` supplies the action distribution for
/// a task progress state, where `depth` counts tokens emitted so far (prefix
/// included); callers map progress to their table rows and may switch
/// policies at a cut point.
pub fn enumerate_from<S: Scalar>(
    task: &SyntheticTask,
    policy_at: &dyn Fn(usize, usize) -> Vec<S>,
    start_progress: usize,
    start_len: usize,
    limit: usize,
    budget: EnumerationBudget,
    visit: &mut dyn FnMut(EnumLeaf<'_, S>),
) -> Result<()> {
    let limit = limit.min(task.max_len());
    if start_len >= limit {
        return Err(Error::Contract(format!(
            "enumeration start length {start_len} leaves no room under limit {limit}"
        )));
    }
    let mut suffix: Vec<Token> = Vec::new();
    let mut leaves = 0usize;
    walk(
        task,
        policy_at,
        start_progress,
        start_len,
        limit,
        budget.max_leaves,
        S::one(),
        &mut suffix,
        &mut leaves,
        visit,
    )
}

#[allow(clippy::too_many_arguments)]
fn walk<S: Scalar>(
    task: &SyntheticTask,
    policy_at: &dyn Fn(usize, usize) -> Vec<S>,
    progress: usize,
    len: usize,
    limit: usize,
    max_leaves: usize,
    prob: S,
    suffix: &mut Vec<Token>,
    leaves: &mut usize,
    visit: &mut dyn FnMut(EnumLeaf<'_, S>),
) -> Result<()> {
    let probs = policy_at(len, progress);
    let vocab = task.vocab_size();
    for (index, &p) in probs.iter().enumerate() {
        let action = Action::from_index(index, vocab);
        let token = task.emit(progress, action);
        suffix.push(token);
        let next = task.next_progress(progress, token);
        let branch_prob = prob * p;
        let stopped = token.is_stop();
        if stopped || len + 1 >= limit {
            *leaves += 1;
            if *leaves > max_leaves {
                return Err(Error::Budget { visited: *leaves, budget: max_leaves });
            }
            visit(EnumLeaf {
                tokens: suffix,
                end_progress: next,
                probability: branch_prob,
                stopped,
            });
        } else {
            walk(
                task, policy_at, next, len + 1, limit, max_leaves, branch_prob, suffix,
                leaves, visit,
            )?;
        }
        suffix.pop();
    }
    Ok(())
}

/// Exact expected reward over all terminating trajectories of `params`.
///
/// The reward function sees the full token sequence and its correctness flag;
/// trajectories cut at `max_len` without a stop token count as incorrect.
pub fn enumerate_expected_return<S: Scalar>(
    params: &PolicyParams<S>,
    task: &SyntheticTask,
    reward_fn: &dyn Fn(&[Token], bool) -> S,
    budget: EnumerationBudget,
) -> Result<S> {
    params.compatible_with(task)?;
    let policy = |_depth: usize, progress: usize| params.probs(params.row_for(task, progress));
    let mut value = S::zero();
    let mut total_prob = S::zero();
    enumerate_from(task, &policy, 0, 0, task.max_len(), budget, &mut |leaf| {
        let correct = leaf.stopped && verify(leaf.tokens, task);
        value += leaf.probability * reward_fn(leaf.tokens, correct);
        total_prob += leaf.probability;
    })?;
    let drift = (total_prob - S::one()).abs();
    if drift > S::from_f64_lossy(1e-9) {
        return Err(Error::Internal(format!(
            "enumerated probabilities sum to {total_prob}, drift {drift}"
        )));
    }
    Ok(value)
}
