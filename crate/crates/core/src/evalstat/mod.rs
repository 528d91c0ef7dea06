//! Experiment harness: seeded 80/10/10 splits, repeated cross-validation,
//! confidence intervals and the corrected resampled t-test.

pub mod dist;
pub mod fixture;
pub mod manifest;
pub mod runner;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fixture::gen_fixture;

/// Number of blocks documents are dealt into; each fold uses one block for
/// testing and one for validation.
pub const BLOCKS: usize = 10;
pub const FOLDS: usize = 5;
/// Test-to-train size ratio of an 80/10/10 split.
pub const DEFAULT_RHO: f64 = 0.125;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatError {
    #[error("need at least {need} documents, got {got}")]
    TooFewDocuments { need: usize, got: usize },
    #[error("need at least 2 scores, got {0}")]
    TooFewScores(usize),
    #[error("score lists differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("rho must be positive, got {0}")]
    BadRho(f64),
    #[error("repeat {repeat}, fold {fold}: {message}")]
    Trainer {
        repeat: usize,
        fold: usize,
        message: String,
    },
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub folds: Vec<Fold>,
}

/// Sorts the ids, shuffles them with `seed`, deals them into 10 near-equal
/// blocks, and builds fold `k` from test block `2k` and validation block
/// `2k + 1`.
pub fn make_splits(ids: &[String], seed: u64) -> Result<SplitPlan, StatError> {
    if ids.len() < BLOCKS {
        return Err(StatError::TooFewDocuments {
            need: BLOCKS,
            got: ids.len(),
        });
    }
    let mut order = ids.to_vec();
    order.sort();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = order.len();
    let blocks: Vec<&[String]> = (0..BLOCKS)
        .map(|b| &order[b * n / BLOCKS..(b + 1) * n / BLOCKS])
        .collect();
    let folds = (0..FOLDS)
        .map(|k| Fold {
            test: blocks[2 * k].to_vec(),
            val: blocks[2 * k + 1].to_vec(),
            train: blocks
                .iter()
                .enumerate()
                .filter(|(b, _)| *b != 2 * k && *b != 2 * k + 1)
                .flat_map(|(_, blk)| blk.iter().cloned())
                .collect(),
        })
        .collect();
    Ok(SplitPlan { seed, folds })
}

/// Deterministic per-run seed derived from the repeat seed and fold index.
pub fn run_seed(repeat_seed: u64, fold: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = repeat_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(fold as u64 + 1);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// What the trainer callback sees for one (repeat, fold) run.
#[derive(Clone, Debug)]
pub struct RunContext<'a> {
    pub repeat: usize,
    pub fold: usize,
    pub seed: u64,
    pub split: &'a Fold,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub repeat: usize,
    pub fold: usize,
    pub seed: u64,
    pub scores: Vec<(String, f64)>,
}

/// Runs `n_repeats × 5` train/test cycles. Repeat `r` splits with seed
/// `base_seed + r`. Runs execute on `jobs` threads; results are ordered by
/// (repeat, fold) whatever the thread count.
pub fn repeat_cv<F>(
    ids: &[String],
    n_repeats: usize,
    base_seed: u64,
    jobs: usize,
    trainer: F,
) -> Result<Vec<RunResult>, StatError>
where
    F: Fn(&RunContext) -> Result<Vec<(String, f64)>, String> + Sync,
{
    let plans: Vec<SplitPlan> = (0..n_repeats)
        .map(|r| make_splits(ids, base_seed.wrapping_add(r as u64)))
        .collect::<Result<_, _>>()?;
    let runs: Vec<(usize, usize)> = (0..n_repeats)
        .flat_map(|r| (0..FOLDS).map(move |f| (r, f)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| StatError::Pool(e.to_string()))?;
    pool.install(|| {
        runs.par_iter()
            .map(|&(repeat, fold)| {
                let plan = &plans[repeat];
                let ctx = RunContext {
                    repeat,
                    fold,
                    seed: run_seed(plan.seed, fold),
                    split: &plan.folds[fold],
                };
                trainer(&ctx)
                    .map(|scores| RunResult {
                        repeat,
                        fold,
                        seed: ctx.seed,
                        scores,
                    })
                    .map_err(|message| StatError::Trainer {
                        repeat,
                        fold,
                        message,
                    })
            })
            .collect()
    })
}

/// Mean and sample variance, computed around the first value so that
/// constant inputs give an exact mean and zero variance.
fn mean_var(xs: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let x0 = xs[0];
    let shift = xs.iter().map(|x| x - x0).sum::<f64>() / k;
    let var = xs.iter().map(|x| (x - x0 - shift).powi(2)).sum::<f64>() / (k - 1.0);
    (x0 + shift, var)
}

/// Mean and half-width of the two-sided 95% t interval.
pub fn mean_ci(scores: &[f64]) -> Result<(f64, f64), StatError> {
    let k = scores.len();
    if k < 2 {
        return Err(StatError::TooFewScores(k));
    }
    let (mean, var) = mean_var(scores);
    let half = dist::t_critical(0.05, (k - 1) as f64) * var.sqrt() / (k as f64).sqrt();
    Ok((mean, half))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub k: usize,
    pub mean_diff: f64,
    pub var_diff: f64,
    pub rho: f64,
    pub t: f64,
    pub df: usize,
    pub p: f64,
}

/// Corrected resampled t-test on paired scores:
/// `t = d̄ / sqrt((1/k + ρ)·s²)`. Zero variance gives `t = 0, p = 1` when
/// `d̄ = 0` and `t = ±∞, p = 0` otherwise.
pub fn corrected_t(a: &[f64], b: &[f64], rho: f64) -> Result<TTestResult, StatError> {
    if a.len() != b.len() {
        return Err(StatError::LengthMismatch(a.len(), b.len()));
    }
    let k = a.len();
    if k < 2 {
        return Err(StatError::TooFewScores(k));
    }
    if !(rho > 0.0) {
        return Err(StatError::BadRho(rho));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (mean, s2) = mean_var(&d);
    let df = k - 1;
    let (t, p) = if s2 == 0.0 {
        if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(mean), 0.0)
        }
    } else {
        let t = mean / ((1.0 / k as f64 + rho) * s2).sqrt();
        (t, dist::t_two_sided_p(t, df as f64))
    };
    Ok(TTestResult {
        k,
        mean_diff: mean,
        var_diff: s2,
        rho,
        t,
        df,
        p,
    })
}

/// One CSV row per run: `repeat,fold,seed,<metric>...`.
pub fn results_csv(results: &[RunResult]) -> String {
    let mut s = String::from("repeat,fold,seed");
    if let Some(first) = results.first() {
        for (name, _) in &first.scores {
            s.push(',');
            s.push_str(name);
        }
    }
    s.push('\n');
    for r in results {
        s.push_str(&format!("{},{},{}", r.repeat, r.fold, r.seed));
        for (_, v) in &r.scores {
            s.push_str(&format!(",{v}"));
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("results csv line {line}: {message}")]
pub struct CsvError {
    pub line: usize,
    pub message: String,
}

/// Parses `results_csv` output back.
pub fn parse_results_csv(text: &str) -> Result<Vec<RunResult>, CsvError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(CsvError {
        line: 1,
        message: "empty file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[..3] != ["repeat", "fold", "seed"] {
        return Err(CsvError {
            line: 1,
            message: "header must start with repeat,fold,seed".into(),
        });
    }
    let mut out = Vec::new();
    for (i, l) in lines {
        let err = |message: String| CsvError {
            line: i + 1,
            message,
        };
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != cols.len() {
            return Err(err(format!(
                "expected {} fields, got {}",
                cols.len(),
                f.len()
            )));
        }
        let int = |s: &str| {
            s.trim()
                .parse::<u64>()
                .map_err(|e| err(format!("`{s}`: {e}")))
        };
        let mut scores = Vec::new();
        for (name, v) in cols[3..].iter().zip(&f[3..]) {
            let x = v
                .trim()
                .parse::<f64>()
                .map_err(|e| err(format!("`{v}`: {e}")))?;
            scores.push((name.to_string(), x));
        }
        out.push(RunResult {
            repeat: int(f[0])? as usize,
            fold: int(f[1])? as usize,
            seed: int(f[2])?,
            scores,
        });
    }
    Ok(out)
}

/// Scores of one metric across runs, in run order.
pub fn column(results: &[RunResult], metric: &str) -> Option<Vec<f64>> {
    results
        .iter()
        .map(|r| r.scores.iter().find(|(n, _)| n == metric).map(|(_, v)| *v))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    pub mean: f64,
    pub ci95: f64,
}

pub fn summarize(results: &[RunResult]) -> Result<Vec<MetricSummary>, StatError> {
    let Some(first) = results.first() else {
        return Ok(Vec::new());
    };
    first
        .scores
        .iter()
        .map(|(name, _)| {
            let col = column(results, name).unwrap_or_default();
            let (mean, ci95) = mean_ci(&col)?;
            Ok(MetricSummary {
                metric: name.clone(),
                mean,
                ci95,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("doc{i:03}")).collect()
    }

    #[test]
    fn ten_docs_split_8_1_1() {
        let p = make_splits(&ids(10), 3).unwrap();
        assert_eq!(p.folds.len(), 5);
        for f in &p.folds {
            assert_eq!((f.train.len(), f.val.len(), f.test.len()), (8, 1, 1));
        }
        assert_eq!(p, make_splits(&ids(10), 3).unwrap());
        assert!(make_splits(&ids(9), 3).is_err());
    }

    #[test]
    fn folds_partition_and_tests_disjoint() {
        let all = ids(203);
        let p = make_splits(&all, 9).unwrap();
        let mut tests = HashSet::new();
        for f in &p.folds {
            let mut u: Vec<&String> = f.train.iter().chain(&f.val).chain(&f.test).collect();
            u.sort();
            u.dedup();
            assert_eq!(u.len(), all.len());
            assert_eq!(f.train.len() + f.val.len() + f.test.len(), all.len());
            assert!(f.test.len().abs_diff(all.len() / 10) <= 1);
            for t in &f.test {
                assert!(tests.insert(t.clone()));
            }
        }
    }

    #[test]
    fn cv_shapes_and_seeds() {
        let r = repeat_cv(&ids(20), 10, 100, 4, |_| Ok(vec![("x".into(), 0.5)])).unwrap();
        assert_eq!(r.len(), 50);
        assert!(r.iter().all(|x| x.scores[0].1 == 0.5));
        let one = repeat_cv(&ids(20), 1, 100, 1, |c| {
            Ok(vec![("fold".into(), c.fold as f64)])
        })
        .unwrap();
        assert_eq!(one.len(), 5);
        assert_eq!(one[0].seed, run_seed(100, 0));
        let err = repeat_cv(&ids(20), 2, 0, 2, |c| {
            if c.repeat == 1 && c.fold == 3 {
                Err("boom".into())
            } else {
                Ok(vec![])
            }
        });
        assert!(matches!(
            err,
            Err(StatError::Trainer {
                repeat: 1,
                fold: 3,
                ..
            })
        ));
    }

    #[test]
    fn ci_cases() {
        assert_eq!(mean_ci(&[0.7, 0.7, 0.7]).unwrap(), (0.7, 0.0));
        let (m, h) = mean_ci(&[0.0, 1.0]).unwrap();
        assert_eq!(m, 0.5);
        assert!((h - 6.3531).abs() < 1e-3);
        assert!(mean_ci(&[1.0]).is_err());
    }

    #[test]
    fn t_cases() {
        let r = corrected_t(&[2.0, 0.0, 1.0, 1.0], &[0.0; 4], 0.125).unwrap();
        assert!((r.t - 2.0).abs() < 1e-9);
        assert!((r.var_diff - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.df, 3);
        let z = corrected_t(&[0.5; 4], &[0.5; 4], 0.125).unwrap();
        assert_eq!((z.t, z.p), (0.0, 1.0));
        let c = corrected_t(&[0.6; 4], &[0.5; 4], 0.125).unwrap();
        assert_eq!((c.t, c.p), (f64::INFINITY, 0.0));
        assert!(corrected_t(&[1.0], &[1.0], 0.125).is_err());
        assert!(corrected_t(&[1.0, 2.0], &[1.0], 0.125).is_err());
    }

    #[test]
    fn t_is_antisymmetric() {
        let a = [0.8, 0.82, 0.79, 0.85, 0.81];
        let b = [0.78, 0.8, 0.8, 0.82, 0.77];
        let x = corrected_t(&a, &b, 0.125).unwrap();
        let y = corrected_t(&b, &a, 0.125).unwrap();
        assert_eq!(x.t, -y.t);
        assert_eq!(x.p, y.p);
    }

    #[test]
    fn csv_roundtrip() {
        let r = repeat_cv(&ids(10), 1, 0, 1, |c| {
            Ok(vec![("a".into(), 1.0 / (c.fold as f64 + 3.0))])
        })
        .unwrap();
        let back = parse_results_csv(&results_csv(&r)).unwrap();
        assert_eq!(back, r);
    }
}
