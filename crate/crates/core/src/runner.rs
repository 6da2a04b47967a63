//! Run orchestration: each subcommand maps to one function here that builds
//! the deterministic state, executes, and writes plain-text artifacts into
//! the run directory. Every output file starts with the standard header line.

use std::path::{Path, PathBuf};

use crate::analysis::{dominance_report, solvability_sweep, DominanceRow, SweepCell};
use crate::config::ExperimentConfig;
use crate::env::init_policy;
use crate::error::Result;
use crate::metrics::{
    self, difficulty_buckets, mean_length, pass_at_1, token_reduction, BucketReport, EvalRecord,
};
use crate::persist;
use crate::prefix::save_bank;
use crate::trainer::{
    build_bank, build_pool, evaluate_policy, load_checkpoint, save_checkpoint, stream_rng,
    RngStream, TrainLogRow, TrainerState, TRAIN_LOG_COLUMNS,
};
use crate::Scalar;

/// Everything a training run produced, with the rows and evaluations kept in
/// memory for downstream analysis.
pub struct TrainArtifacts<S> {
    pub dir: PathBuf,
    pub rows: Vec<TrainLogRow<S>>,
    /// Prefix-free evaluation of the initial policy.
    pub initial_records: Vec<EvalRecord>,
    /// Prefix-free evaluation of the final policy.
    pub final_records: Vec<EvalRecord>,
    pub final_acc: S,
    pub final_len: S,
}

/// Trains per the config and writes `train_log.csv`, the prefix bank when
/// protection is active, periodic and final checkpoints, and `summary.csv`.
pub fn run_train<S: Scalar>(
    cfg: &ExperimentConfig<S>,
    seed: u64,
    out_dir: &Path,
) -> Result<TrainArtifacts<S>> {
    cfg.validate()?;
    let hash = cfg.hash();
    let header = persist::header_line(&hash, seed);
    let mut state = TrainerState::new(cfg.clone(), seed)?;

    if !state.bank.is_empty() {
        save_bank(&state.bank, &out_dir.join("prefix_bank.txt"), &header)?;
    }

    let mut initial_rng = stream_rng(seed, RngStream::InitEval);
    let initial_records = evaluate_policy(
        &state.policy,
        &state.pool,
        cfg.eval.runs,
        cfg.eval.temperature,
        &mut initial_rng,
    )?;

    let mut log_lines = vec![header.clone(), TRAIN_LOG_COLUMNS.to_string()];
    let mut rows = Vec::with_capacity(cfg.train.steps);
    while state.step < cfg.train.steps {
        let row = state.train_step()?;
        log_lines.push(row.to_csv_row());
        rows.push(row);
        let completed = state.step;
        if cfg.train.eval_every > 0 && completed % cfg.train.eval_every == 0 {
            save_checkpoint(
                &state.policy,
                completed,
                seed,
                &hash,
                &out_dir.join(format!("checkpoint_step_{completed:05}.txt")),
            )?;
        }
    }
    persist::write_lines(&out_dir.join("train_log.csv"), &log_lines)?;
    save_checkpoint(
        &state.policy,
        state.step,
        seed,
        &hash,
        &out_dir.join("checkpoint_final.txt"),
    )?;

    let mut eval_rng = stream_rng(seed, RngStream::Eval);
    let final_records = evaluate_policy(
        &state.policy,
        &state.pool,
        cfg.eval.runs,
        cfg.eval.temperature,
        &mut eval_rng,
    )?;
    let final_acc = pass_at_1(&final_records)?;
    let final_len = mean_length(&final_records)?;
    persist::write_lines(
        &out_dir.join("summary.csv"),
        &[
            header,
            "steps,final_acc,final_len".to_string(),
            format!("{},{:.6},{:.6}", state.step, final_acc, final_len),
        ],
    )?;

    Ok(TrainArtifacts {
        dir: out_dir.to_path_buf(),
        rows,
        initial_records,
        final_records,
        final_acc,
        final_len,
    })
}

/// Evaluation outcome kept in memory alongside the emitted CSVs.
pub struct EvalArtifacts<S> {
    pub records: Vec<EvalRecord>,
    pub acc: S,
    pub mean_len: S,
    pub token_reduction: Option<S>,
    pub buckets: BucketReport<S>,
}

/// Evaluates a checkpoint on the pool it was trained against (rebuilt from
/// its manifest seed) and writes `eval_records.csv` and `eval_summary.csv`.
/// Token reduction is reported against the optional baseline checkpoint.
pub fn run_eval<S: Scalar>(
    cfg: &ExperimentConfig<S>,
    checkpoint: &Path,
    baseline: Option<&Path>,
    seed: u64,
    out_dir: &Path,
) -> Result<EvalArtifacts<S>> {
    cfg.validate()?;
    let hash = cfg.hash();
    let header = persist::header_line(&hash, seed);

    let (policy, meta) = load_checkpoint::<S>(checkpoint)?;
    let pool = build_pool(&cfg.env, meta.seed)?;
    let mut rng = stream_rng(seed, RngStream::Eval);
    let records = evaluate_policy(&policy, &pool, cfg.eval.runs, cfg.eval.temperature, &mut rng)?;

    let acc = pass_at_1(&records)?;
    let mean_len = mean_length(&records)?;
    let tr = match baseline {
        None => None,
        Some(path) => {
            let (base_policy, base_meta) = load_checkpoint::<S>(path)?;
            let base_pool = build_pool(&cfg.env, base_meta.seed)?;
            let mut base_rng = stream_rng(seed, RngStream::Eval);
            let base_records = evaluate_policy(
                &base_policy,
                &base_pool,
                cfg.eval.runs,
                cfg.eval.temperature,
                &mut base_rng,
            )?;
            Some(token_reduction(mean_length::<S>(&base_records)?, mean_len)?)
        }
    };
    let per_task: Vec<S> = records.iter().map(EvalRecord::pass_rate).collect();
    let buckets = difficulty_buckets(&per_task, S::from_f64_lossy(0.75))?;

    metrics::write_eval_records(&records, &out_dir.join("eval_records.csv"), &header)?;
    let fmt_opt = |v: Option<S>| match v {
        Some(x) => format!("{x:.6}"),
        None => "NA".to_string(),
    };
    persist::write_lines(
        &out_dir.join("eval_summary.csv"),
        &[
            header,
            "acc,mean_len,token_reduction,simple_acc,hard_acc,simple_count,hard_count"
                .to_string(),
            format!(
                "{:.6},{:.6},{},{},{},{},{}",
                acc,
                mean_len,
                fmt_opt(tr),
                fmt_opt(buckets.simple_acc),
                fmt_opt(buckets.hard_acc),
                buckets.simple_count,
                buckets.hard_count
            ),
        ],
    )?;

    Ok(EvalArtifacts { records, acc, mean_len, token_reduction: tr, buckets })
}

/// Runs the dominance report and writes `dominance.csv`.
pub fn run_dominance<S: Scalar>(
    cfg: &ExperimentConfig<S>,
    seed: u64,
    out_dir: &Path,
) -> Result<Vec<DominanceRow<S>>> {
    cfg.validate()?;
    let header = persist::header_line(&cfg.hash(), seed);
    let rows = dominance_report(cfg, seed)?;
    let mut lines = vec![
        header,
        "task_id,cut,gap_decomposition,gap_direct,premise_satisfied,error".to_string(),
    ];
    for row in &rows {
        let gap_d = row
            .gap_decomposition
            .map(|g| format!("{g:.12}"))
            .unwrap_or_else(|| "NA".into());
        let gap_j = row
            .gap_direct
            .map(|g| format!("{g:.12}"))
            .unwrap_or_else(|| "NA".into());
        let premise = row
            .premise_satisfied
            .map(|p| if p { "1".to_string() } else { "0".to_string() })
            .unwrap_or_else(|| "NA".into());
        lines.push(format!(
            "{},{},{},{},{},{}",
            row.task_id,
            row.cut,
            gap_d,
            gap_j,
            premise,
            row.error.clone().unwrap_or_default()
        ));
    }
    persist::write_lines(&out_dir.join("dominance.csv"), &lines)?;
    Ok(rows)
}

/// Runs the solvability sweep over the configured grid and writes
/// `sweep.csv` with one row per (alpha, L*, seed) cell.
pub fn run_sweep<S: Scalar>(
    cfg: &ExperimentConfig<S>,
    base_seed: u64,
    out_dir: &Path,
) -> Result<Vec<SweepCell<S>>> {
    cfg.validate()?;
    let header = persist::header_line(&cfg.hash(), base_seed);
    let seeds: Vec<u64> = (0..cfg.sweep.seeds as u64).map(|i| base_seed + i).collect();
    let cells = solvability_sweep(&cfg.sweep.alphas, &cfg.sweep.l_stars, cfg, &seeds)?;
    let mut lines = vec![header, "alpha,L_star,bound,final_acc,final_len,seed".to_string()];
    for cell in &cells {
        lines.push(format!(
            "{:.6},{},{:.6},{:.6},{:.6},{}",
            cell.alpha, cell.l_star, cell.bound, cell.final_acc, cell.final_len, cell.seed
        ));
    }
    persist::write_lines(&out_dir.join("sweep.csv"), &lines)?;
    Ok(cells)
}

/// Builds the anchor bank for the configured pool and writes
/// `prefix_bank.txt` without training.
pub fn run_prefix_build<S: Scalar>(
    cfg: &ExperimentConfig<S>,
    seed: u64,
    out_dir: &Path,
) -> Result<PathBuf> {
    cfg.validate()?;
    let header = persist::header_line(&cfg.hash(), seed);
    let pool = build_pool(&cfg.env, seed)?;
    let policy = init_policy(cfg.env.l_star_max + 1, cfg.env.vocab_size, &cfg.env.init);
    let mut rng = stream_rng(seed, RngStream::Bank);
    let bank = build_bank(&pool, &policy, cfg.prefix.samples, cfg.prefix.temperature, &mut rng)?;
    let path = out_dir.join("prefix_bank.txt");
    save_bank(&bank, &path, &header)?;
    Ok(path)
}
