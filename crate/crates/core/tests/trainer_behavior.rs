//! End-to-end trainer properties: the critic-free baseline sanity floor, the
//! vanilla reduction when every shaping feature is disabled, and the generic
//! scalar instantiation.

use laconic_core::config::{parse_config, ExperimentConfig};
use laconic_core::optimizer::score_group;
use laconic_core::penalty::{AlphaMode, PenaltyConfig, PenaltyMode};
use laconic_core::prefix::{hybrid_rollout, Snapshots};
use laconic_core::trainer::TrainerState;

/// All shaping off (uniform zero penalty, no prefix, no divergence term):
/// plain group-relative training must solve single-step tasks from a uniform
/// start almost surely within 500 steps.
#[test]
fn vanilla_baseline_masters_single_step_tasks() {
    let cfg: ExperimentConfig<f64> = parse_config(
        "env.task_count=20\nenv.l_star_min=1\nenv.l_star_max=1\nenv.vocab_size=4\nenv.max_len=8\n\
         env.init=uniform\nschedule.L_init=0\n\
         penalty.alpha_mode=uniform\npenalty.alpha_uniform=0.0\n\
         optimizer.kl_coeff=0.0\noptimizer.learning_rate=2.0\n\
         train.steps=500\ntrain.batch_size=8\ntrain.eval_every=0\n",
    )
    .unwrap();
    let mut state = TrainerState::new(cfg, 7).unwrap();
    let rows = state.run_to_completion().unwrap();
    let tail = &rows[400..];
    let tail_acc: f64 = tail.iter().map(|r| r.train_acc).sum::<f64>() / tail.len() as f64;
    assert!(tail_acc >= 0.99, "late training accuracy {tail_acc:.4} below the sanity floor");
}

/// With a zero uniform coefficient the shaped reward equals the bare
/// correctness indicator on every rollout.
#[test]
fn zero_coefficient_reduces_to_correctness_reward() {
    let cfg: ExperimentConfig<f64> =
        parse_config("env.task_count=4\nenv.max_len=16\ntrain.batch_size=2\n").unwrap();
    let state = TrainerState::new(cfg, 3).unwrap();
    let task = state.pool[0].clone();
    let snaps = Snapshots::all(&state.policy);
    let mut rng = laconic_core::trainer::stream_rng(3, laconic_core::trainer::RngStream::Train);
    let rollouts: Vec<_> = (0..8)
        .map(|_| hybrid_rollout(&task, None, 0, &snaps, &mut rng).unwrap())
        .collect();
    let pcfg = PenaltyConfig { mode: PenaltyMode::MinMax, alpha_mode: AlphaMode::Uniform(0.0) };
    let group = score_group(task, rollouts, &pcfg, 1e-8).unwrap();
    for (rollout, &reward) in group.rollouts.iter().zip(&group.rewards) {
        assert_eq!(reward, if rollout.correct { 1.0 } else { 0.0 });
    }
}

/// The whole trainer instantiates and runs at single precision.
#[test]
fn trainer_runs_in_f32() {
    let cfg: ExperimentConfig<f32> = parse_config(
        "env.task_count=6\nenv.l_star_min=1\nenv.l_star_max=3\nenv.vocab_size=2\nenv.max_len=12\n\
         schedule.L_init=4\nschedule.K=10\ntrain.steps=20\ntrain.batch_size=4\n\
         optimizer.group_size=4\nprefix.samples=4\n",
    )
    .unwrap();
    let mut state = TrainerState::new(cfg, 5).unwrap();
    let rows = state.run_to_completion().unwrap();
    assert_eq!(rows.len(), 20);
    for row in &rows {
        assert!(row.train_acc.is_finite());
        assert!(row.grad_norm.is_finite());
        assert!(row.entropy.is_finite());
    }
}
