//! Reward arithmetic: group pass rates, length penalties (within-group
//! min-max, logistic z-score, and raw length), the cosine difficulty scaling
//! factor, total reward composition, and the solvability bound on uniform
//! penalty coefficients.

use crate::error::{Error, Result};
use crate::Scalar;

/// Summary statistics of one rollout group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupStats<S> {
    pub pass_rate: S,
    pub len_min: usize,
    pub len_max: usize,
    pub len_mean: S,
    /// Population standard deviation of the lengths.
    pub len_std: S,
    pub group_size: usize,
}

impl<S: Scalar> GroupStats<S> {
    /// Computes the statistics from parallel correctness and length lists.
    pub fn from_outcomes(corrects: &[bool], lengths: &[usize]) -> Result<Self> {
        if corrects.is_empty() {
            return Err(Error::Config("rollout group must be nonempty".into()));
        }
        if corrects.len() != lengths.len() {
            return Err(Error::Internal(format!(
                "group fields disagree: {} corrects vs {} lengths",
                corrects.len(),
                lengths.len()
            )));
        }
        let g = corrects.len();
        let g_s = S::from_usize(g).unwrap();
        let mean = lengths.iter().map(|&l| S::from_usize(l).unwrap()).sum::<S>() / g_s;
        let var = lengths
            .iter()
            .map(|&l| {
                let d = S::from_usize(l).unwrap() - mean;
                d * d
            })
            .sum::<S>()
            / g_s;
        Ok(GroupStats {
            pass_rate: pass_rate(corrects, g)?,
            len_min: *lengths.iter().min().unwrap(),
            len_max: *lengths.iter().max().unwrap(),
            len_mean: mean,
            len_std: var.sqrt(),
            group_size: g,
        })
    }
}

/// Which length penalty the trainer applies within a group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyMode {
    /// Affine within-group normalization of length to [0, 1].
    MinMax,
    /// Logistic of the within-group length z-score.
    Sigmoid,
    /// Raw length, unnormalized. Exists for the uniform-coefficient
    /// solvability analysis, where total reward is `1 - alpha * L`.
    Linear,
}

/// How the penalty coefficient is chosen per group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaMode<S> {
    /// Difficulty-aware: `alpha(pass_rate)` via the cosine scaling factor.
    CosineDifficulty,
    /// Fixed coefficient for every group.
    Uniform(S),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyConfig<S> {
    pub mode: PenaltyMode,
    pub alpha_mode: AlphaMode<S>,
}

impl<S: Scalar> PenaltyConfig<S> {
    pub fn validate(&self) -> Result<()> {
        if let AlphaMode::Uniform(a) = self.alpha_mode {
            if !(a >= S::zero()) {
                return Err(Error::Config("uniform penalty coefficient must be >= 0".into()));
            }
        }
        Ok(())
    }
}

/// Fraction of correct rollouts in a group of exactly `group_size` entries.
pub fn pass_rate<S: Scalar>(corrects: &[bool], group_size: usize) -> Result<S> {
    if group_size == 0 || corrects.is_empty() {
        return Err(Error::Config("pass rate needs a nonempty group".into()));
    }
    if corrects.len() != group_size {
        return Err(Error::Config(format!(
            "pass rate expected {} outcomes, got {}",
            group_size,
            corrects.len()
        )));
    }
    let hits = corrects.iter().filter(|&&c| c).count();
    Ok(S::from_usize(hits).unwrap() / S::from_usize(group_size).unwrap())
}

/// Min-max length penalty: 0 at the group minimum, 1 at the maximum, affine
/// between. A degenerate group (all lengths equal) carries no length signal
/// and yields 0.
pub fn minmax_penalty<S: Scalar>(length: usize, stats: &GroupStats<S>) -> Result<S> {
    if length < stats.len_min || length > stats.len_max {
        return Err(Error::Internal(format!(
            "length {length} outside group range [{}, {}]",
            stats.len_min, stats.len_max
        )));
    }
    if stats.len_max == stats.len_min {
        return Ok(S::zero());
    }
    let num = S::from_usize(length - stats.len_min).unwrap();
    let den = S::from_usize(stats.len_max - stats.len_min).unwrap();
    Ok(num / den)
}

/// Logistic penalty of the within-group length z-score; a zero-variance
/// group takes z = 0 and yields 0.5.
pub fn sigmoid_penalty<S: Scalar>(length: usize, stats: &GroupStats<S>) -> S {
    let z = if stats.len_std > S::zero() {
        (S::from_usize(length).unwrap() - stats.len_mean) / stats.len_std
    } else {
        S::zero()
    };
    S::one() / (S::one() + (-z).exp())
}

/// Penalty of one rollout under the configured mode.
pub fn rollout_penalty<S: Scalar>(
    length: usize,
    stats: &GroupStats<S>,
    mode: PenaltyMode,
) -> Result<S> {
    match mode {
        PenaltyMode::MinMax => minmax_penalty(length, stats),
        PenaltyMode::Sigmoid => Ok(sigmoid_penalty(length, stats)),
        PenaltyMode::Linear => Ok(S::from_usize(length).unwrap()),
    }
}

/// Difficulty scaling factor `1 - cos(pi/2 * pass_rate)`: zero for groups
/// that never pass, one for groups that always pass, monotone between.
pub fn alpha<S: Scalar>(pass_rate: S) -> Result<S> {
    if !(pass_rate >= S::zero() && pass_rate <= S::one()) {
        return Err(Error::Domain(format!("pass rate {pass_rate} outside [0, 1]")));
    }
    let half_pi = S::FRAC_PI_2();
    Ok(S::one() - (half_pi * pass_rate).cos())
}

/// Total reward: the correctness indicator minus the scaled length penalty.
pub fn total_reward<S: Scalar>(
    correct: bool,
    pass_rate: S,
    penalty: S,
    cfg: &PenaltyConfig<S>,
) -> Result<S> {
    let coefficient = match cfg.alpha_mode {
        AlphaMode::CosineDifficulty => alpha(pass_rate)?,
        AlphaMode::Uniform(a) => a,
    };
    let acc = if correct { S::one() } else { S::zero() };
    Ok(acc - coefficient * penalty)
}

/// Largest uniform penalty coefficient under which a minimal correct
/// solution of `l_star` tokens keeps positive total reward: `1 / l_star`.
pub fn solvability_bound<S: Scalar>(l_star: usize) -> S {
    debug_assert!(l_star >= 1);
    S::one() / S::from_usize(l_star).unwrap()
}

/// Whether `1 - alpha * l_star > 0`, the survival condition of the minimal
/// correct solution under a uniform linear penalty.
pub fn is_solvable<S: Scalar>(alpha: S, l_star: usize) -> bool {
    S::one() - alpha * S::from_usize(l_star).unwrap() > S::zero()
}
