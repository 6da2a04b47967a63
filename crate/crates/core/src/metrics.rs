//! Evaluation statistics: pass@1, token reduction, difficulty bucketing at a
//! pass-rate threshold, and reasoning-behavior proportions, together with the
//! CSV formats that carry them.

use std::path::Path;

use crate::error::{Error, Result};
use crate::persist;
use crate::Scalar;

/// Per-task evaluation outcomes over n independent runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalRecord {
    pub task_id: String,
    pub corrects: Vec<bool>,
    pub lengths: Vec<usize>,
}

impl EvalRecord {
    pub fn runs(&self) -> usize {
        self.corrects.len()
    }

    pub fn pass_rate<S: Scalar>(&self) -> S {
        let hits = self.corrects.iter().filter(|&&c| c).count();
        S::from_usize(hits).unwrap() / S::from_usize(self.corrects.len()).unwrap()
    }

    pub fn mean_length<S: Scalar>(&self) -> S {
        self.lengths.iter().map(|&l| S::from_usize(l).unwrap()).sum::<S>()
            / S::from_usize(self.lengths.len()).unwrap()
    }

    fn validate(&self) -> Result<()> {
        if self.corrects.is_empty() || self.corrects.len() != self.lengths.len() {
            return Err(Error::Internal(format!(
                "eval record {} has {} corrects and {} lengths",
                self.task_id,
                self.corrects.len(),
                self.lengths.len()
            )));
        }
        Ok(())
    }
}

/// Mean over tasks of the per-task mean run correctness.
pub fn pass_at_1<S: Scalar>(records: &[EvalRecord]) -> Result<S> {
    if records.is_empty() {
        return Err(Error::Config("pass@1 needs at least one record".into()));
    }
    let mut total = S::zero();
    for record in records {
        record.validate()?;
        total += record.pass_rate();
    }
    Ok(total / S::from_usize(records.len()).unwrap())
}

/// Mean generated length across all runs of all records.
pub fn mean_length<S: Scalar>(records: &[EvalRecord]) -> Result<S> {
    if records.is_empty() {
        return Err(Error::Config("mean length needs at least one record".into()));
    }
    let mut total = S::zero();
    let mut count = 0usize;
    for record in records {
        record.validate()?;
        total += record.lengths.iter().map(|&l| S::from_usize(l).unwrap()).sum::<S>();
        count += record.lengths.len();
    }
    Ok(total / S::from_usize(count).unwrap())
}

/// Fractional reduction of average output length against a baseline.
pub fn token_reduction<S: Scalar>(base_len: S, new_len: S) -> Result<S> {
    if !(base_len > S::zero()) {
        return Err(Error::Domain(format!("baseline length {base_len} must be > 0")));
    }
    Ok((base_len - new_len) / base_len)
}

/// Bucketed accuracy report; an empty bucket stays `None` rather than zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BucketReport<S> {
    pub simple_acc: Option<S>,
    pub hard_acc: Option<S>,
    pub simple_count: usize,
    pub hard_count: usize,
}

/// Splits tasks into Simple (pass rate strictly above the threshold) and
/// Hard (at or below) and reports each bucket's mean pass rate.
pub fn difficulty_buckets<S: Scalar>(
    per_task_pass: &[S],
    threshold: S,
) -> Result<BucketReport<S>> {
    if !(threshold >= S::zero() && threshold <= S::one()) {
        return Err(Error::Domain(format!("threshold {threshold} outside [0, 1]")));
    }
    let mut simple = Vec::new();
    let mut hard = Vec::new();
    for &p in per_task_pass {
        if p > threshold {
            simple.push(p);
        } else {
            hard.push(p);
        }
    }
    let mean = |bucket: &[S]| {
        if bucket.is_empty() {
            None
        } else {
            Some(bucket.iter().cloned().sum::<S>() / S::from_usize(bucket.len()).unwrap())
        }
    };
    Ok(BucketReport {
        simple_acc: mean(&simple),
        hard_acc: mean(&hard),
        simple_count: simple.len(),
        hard_count: hard.len(),
    })
}

/// Occurrence counts of the four reasoning behaviors in one sample.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BehaviorCounts {
    pub advance: u64,
    pub reflect: u64,
    pub verify: u64,
    pub refine: u64,
}

impl BehaviorCounts {
    pub fn total(&self) -> u64 {
        self.advance + self.reflect + self.verify + self.refine
    }
}

/// Normalized behavior frequencies; the four fields sum to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BehaviorMix<S> {
    pub advance: S,
    pub reflect: S,
    pub verify: S,
    pub refine: S,
}

/// Aggregates counts across samples and normalizes by the grand total.
pub fn behavior_proportions<S: Scalar>(counts: &[BehaviorCounts]) -> Result<BehaviorMix<S>> {
    let mut sums = BehaviorCounts::default();
    for c in counts {
        sums.advance += c.advance;
        sums.reflect += c.reflect;
        sums.verify += c.verify;
        sums.refine += c.refine;
    }
    let total = sums.total();
    if total == 0 {
        return Err(Error::Domain("behavior proportions need at least one occurrence".into()));
    }
    let t = S::from_u64(total).unwrap();
    let f = |v: u64| S::from_u64(v).unwrap() / t;
    Ok(BehaviorMix {
        advance: f(sums.advance),
        reflect: f(sums.reflect),
        verify: f(sums.verify),
        refine: f(sums.refine),
    })
}

pub const EVAL_RECORD_COLUMNS: &str = "task_id,run_idx,correct,length";

/// Writes per-run evaluation rows: `task_id,run_idx,correct,length`.
pub fn write_eval_records(records: &[EvalRecord], path: &Path, header: &str) -> Result<()> {
    let mut lines = vec![header.to_string(), EVAL_RECORD_COLUMNS.to_string()];
    for record in records {
        record.validate()?;
        for (run, (&correct, &length)) in
            record.corrects.iter().zip(&record.lengths).enumerate()
        {
            lines.push(format!(
                "{},{},{},{}",
                record.task_id,
                run,
                if correct { 1 } else { 0 },
                length
            ));
        }
    }
    persist::write_lines(path, &lines)
}

/// Reads a file written by [`write_eval_records`], regrouping rows per task.
pub fn read_eval_records(path: &Path) -> Result<Vec<EvalRecord>> {
    let text = persist::read_to_string(path)?;
    let mut records: Vec<EvalRecord> = Vec::new();
    for (number, line) in text.lines().enumerate() {
        if number == 0 {
            persist::check_header(path, line)?;
            continue;
        }
        if number == 1 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(parse_err(path, number, "expected 4 columns"));
        }
        let correct = match fields[2] {
            "1" => true,
            "0" => false,
            other => return Err(parse_err(path, number, &format!("bad correct flag {other:?}"))),
        };
        let length: usize = fields[3]
            .parse()
            .map_err(|_| parse_err(path, number, &format!("bad length {:?}", fields[3])))?;
        match records.last_mut() {
            Some(last) if last.task_id == fields[0] => {
                last.corrects.push(correct);
                last.lengths.push(length);
            }
            _ => records.push(EvalRecord {
                task_id: fields[0].to_string(),
                corrects: vec![correct],
                lengths: vec![length],
            }),
        }
    }
    Ok(records)
}

pub const BEHAVIOR_COLUMNS: &str = "sample_id,advance,reflect,verify,refine";

/// Reads per-sample behavior counts: `sample_id,advance,reflect,verify,refine`.
pub fn read_behavior_counts(path: &Path) -> Result<Vec<(String, BehaviorCounts)>> {
    let text = persist::read_to_string(path)?;
    let mut out = Vec::new();
    for (number, line) in text.lines().enumerate() {
        if number == 0 {
            persist::check_header(path, line)?;
            continue;
        }
        if number == 1 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(parse_err(path, number, "expected 5 columns"));
        }
        let mut values = [0u64; 4];
        for (slot, raw) in values.iter_mut().zip(&fields[1..]) {
            *slot = raw
                .parse()
                .map_err(|_| parse_err(path, number, &format!("bad count {raw:?}")))?;
        }
        out.push((
            fields[0].to_string(),
            BehaviorCounts {
                advance: values[0],
                reflect: values[1],
                verify: values[2],
                refine: values[3],
            },
        ));
    }
    Ok(out)
}

pub fn write_behavior_counts(
    rows: &[(String, BehaviorCounts)],
    path: &Path,
    header: &str,
) -> Result<()> {
    let mut lines = vec![header.to_string(), BEHAVIOR_COLUMNS.to_string()];
    for (sample_id, c) in rows {
        lines.push(format!(
            "{},{},{},{},{}",
            sample_id, c.advance, c.reflect, c.verify, c.refine
        ));
    }
    persist::write_lines(path, &lines)
}

fn parse_err(path: &Path, line: usize, message: &str) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        message: format!("line {}: {message}", line + 1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(id: &str, corrects: &[bool], length: usize) -> EvalRecord {
        EvalRecord {
            task_id: id.into(),
            corrects: corrects.to_vec(),
            lengths: vec![length; corrects.len()],
        }
    }

    #[test]
    fn pass_at_1_examples() {
        let all = record("a", &[true; 16], 10);
        assert_eq!(pass_at_1::<f64>(&[all]).unwrap(), 1.0);

        let mut runs = vec![true; 12];
        runs.extend([false; 4]);
        let mixed = record("b", &runs, 10);
        assert_eq!(pass_at_1::<f64>(&[mixed]).unwrap(), 0.75);
    }

    #[test]
    fn pass_at_1_is_order_invariant() {
        let a = record("a", &[true, false], 5);
        let b = record("b", &[true, true], 7);
        let fwd = pass_at_1::<f64>(&[a.clone(), b.clone()]).unwrap();
        let rev = pass_at_1::<f64>(&[b, a]).unwrap();
        assert_eq!(fwd, rev);
    }

    #[test]
    fn token_reduction_matches_reported_ratio() {
        let tr = token_reduction(7431.0f64, 3293.0).unwrap();
        assert!((tr - 0.557).abs() < 5e-4, "tr {tr}");
        assert_eq!(token_reduction(100.0f64, 100.0).unwrap(), 0.0);
        // Regressions produce negative reduction rates.
        let worse = token_reduction(687.0f64, 1389.0).unwrap();
        assert!((worse - (-1.022)).abs() < 5e-4, "tr {worse}");
        assert!(token_reduction(0.0f64, 5.0).is_err());
    }

    #[test]
    fn buckets_partition_at_threshold() {
        let report = difficulty_buckets(&[0.9f64, 0.8, 0.3], 0.75).unwrap();
        assert!((report.simple_acc.unwrap() - 0.85).abs() < 1e-12);
        assert!((report.hard_acc.unwrap() - 0.3).abs() < 1e-12);
        assert_eq!((report.simple_count, report.hard_count), (2, 1));
    }

    #[test]
    fn bucket_boundary_goes_hard_and_empty_is_none() {
        let report = difficulty_buckets(&[0.75f64, 0.76], 0.75).unwrap();
        assert_eq!(report.hard_count, 1, "exactly 0.75 lands in the hard bucket");
        let none = difficulty_buckets(&[0.9f64, 1.0], 0.75).unwrap();
        assert_eq!(none.hard_count, 0);
        assert!(none.hard_acc.is_none());
        assert!(none.simple_acc.is_some());
    }

    #[test]
    fn behavior_proportions_examples() {
        let one = BehaviorCounts { advance: 3, reflect: 1, verify: 0, refine: 0 };
        let mix = behavior_proportions::<f64>(&[one]).unwrap();
        assert_eq!(mix.advance, 0.75);
        assert_eq!(mix.reflect, 0.25);

        let only = BehaviorCounts { advance: 0, reflect: 0, verify: 5, refine: 0 };
        let mix = behavior_proportions::<f64>(&[only]).unwrap();
        assert_eq!(mix.verify, 1.0);

        assert!(behavior_proportions::<f64>(&[BehaviorCounts::default()]).is_err());
    }

    #[test]
    fn eval_records_round_trip() {
        let records = vec![
            record("t01", &[true, false, true], 9),
            record("t02", &[false, false, false], 3),
        ];
        let dir = std::env::temp_dir().join(format!("metrics_rt_{}", std::process::id()));
        let path = dir.join("records.csv");
        write_eval_records(&records, &path, &persist::header_line("feedface", 1)).unwrap();
        let loaded = read_eval_records(&path).unwrap();
        assert_eq!(loaded, records);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn behavior_counts_round_trip() {
        let rows = vec![
            ("s0".to_string(), BehaviorCounts { advance: 4, reflect: 2, verify: 1, refine: 0 }),
            ("s1".to_string(), BehaviorCounts { advance: 1, reflect: 0, verify: 0, refine: 3 }),
        ];
        let dir = std::env::temp_dir().join(format!("behavior_rt_{}", std::process::id()));
        let path = dir.join("behavior.csv");
        write_behavior_counts(&rows, &path, &persist::header_line("feedface", 1)).unwrap();
        let loaded = read_behavior_counts(&path).unwrap();
        assert_eq!(loaded, rows);
        std::fs::remove_dir_all(&dir).ok();
    }

    proptest! {
        #[test]
        fn proportions_sum_to_one_and_ignore_order(
            raw in proptest::collection::vec((0u64..50, 0u64..50, 0u64..50, 0u64..50), 1..20)
        ) {
            let counts: Vec<BehaviorCounts> = raw
                .iter()
                .map(|&(a, r, v, f)| BehaviorCounts { advance: a, reflect: r, verify: v, refine: f })
                .collect();
            prop_assume!(counts.iter().map(BehaviorCounts::total).sum::<u64>() > 0);
            let mix = behavior_proportions::<f64>(&counts).unwrap();
            let total = mix.advance + mix.reflect + mix.verify + mix.refine;
            prop_assert!((total - 1.0).abs() < 1e-12);
            let mut rev = counts.clone();
            rev.reverse();
            let mix_rev = behavior_proportions::<f64>(&rev).unwrap();
            prop_assert_eq!(mix, mix_rev);
        }

        #[test]
        fn token_reduction_strictly_decreasing(base in 1.0f64..10_000.0, a in 0.0f64..10_000.0, b in 0.0f64..10_000.0) {
            prop_assume!(a != b);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let tr_lo = token_reduction(base, lo).unwrap();
            let tr_hi = token_reduction(base, hi).unwrap();
            prop_assert!(tr_lo > tr_hi);
        }

        #[test]
        fn buckets_counts_partition(passes in proptest::collection::vec(0.0f64..=1.0, 0..40)) {
            let report = difficulty_buckets(&passes, 0.75).unwrap();
            prop_assert_eq!(report.simple_count + report.hard_count, passes.len());
        }
    }
}
