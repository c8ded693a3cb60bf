//! Hold-out benchmarking against naive baselines.
//!
//! Each benchmark subset is a random principal submatrix. Within it a fixed
//! number of entries per row is hidden, the model is fit on the rest, and
//! predictions for the hidden entries are scored by RMSE and by exact
//! Poisson NLL. Two baselines are scored alongside: the global mean of the
//! training entries (Pred-Avg) and the constant zero (Pred-0).

use std::fmt::Write as _;

use ndarray::Array2;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::SimilarityMatrix;
use crate::error::{Error, Result};
use crate::model::{fit_masked, poisson_log_pmf, FitResult, Hyperparameters};
use crate::seed::derive_seed;

pub const BNMF: &str = "BNMF";
pub const PRED_AVG: &str = "Pred-Avg";
pub const PRED_ZERO: &str = "Pred-0";

/// Principal submatrix on `size` indices sampled uniformly without
/// replacement, in sampled order.
pub fn subsample(x: &SimilarityMatrix, size: usize, seed: u64) -> Result<SimilarityMatrix> {
    if size > x.n() {
        return Err(Error::contract(format!(
            "subset size {size} exceeds N = {}",
            x.n()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices = index::sample(&mut rng, x.n(), size).into_vec();
    x.principal_submatrix(&indices)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoldoutSplit {
    pub x: SimilarityMatrix,
    /// `true` where the entry is used for training.
    pub train_mask: Array2<bool>,
    /// Hidden entries in row-major order.
    pub test_indices: Vec<(usize, usize)>,
}

/// Entries hidden per row: `floor(fraction · N)`, at least one.
pub fn holdout_count(n: usize, fraction: f64) -> usize {
    // The small slack keeps 0.1 · 50 at 5 despite representation error.
    ((fraction * n as f64 + 1e-9).floor() as usize).max(1)
}

/// Hides `holdout_count(N, fraction)` uniformly chosen entries in every row,
/// independently per row. With `symmetric`, hiding `(i, j)` also hides
/// `(j, i)`, so rows may lose more entries than the nominal count.
pub fn holdout_split(
    x: &SimilarityMatrix,
    fraction: f64,
    seed: u64,
    symmetric: bool,
) -> Result<HoldoutSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::contract(format!("fraction must be in (0, 1), got {fraction}")));
    }
    let n = x.n();
    let per_row = holdout_count(n, fraction);
    if per_row >= n {
        return Err(Error::contract(format!(
            "hiding {per_row} of {n} entries per row leaves nothing to train on"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_mask = Array2::from_elem((n, n), true);
    for i in 0..n {
        for j in index::sample(&mut rng, n, per_row) {
            train_mask[[i, j]] = false;
            if symmetric {
                train_mask[[j, i]] = false;
            }
        }
    }
    if let Some(i) = train_mask.rows().into_iter().position(|r| !r.iter().any(|&t| t)) {
        return Err(Error::contract(format!(
            "row {i} has no training entries left after symmetric masking"
        )));
    }
    let test_indices = train_mask
        .indexed_iter()
        .filter(|(_, &t)| !t)
        .map(|(ij, _)| ij)
        .collect();
    Ok(HoldoutSplit {
        x: x.clone(),
        train_mask,
        test_indices,
    })
}

/// Fits on the training entries only; hidden counts have no influence.
pub fn masked_fit(split: &HoldoutSplit, hp: &Hyperparameters, seed: u64) -> Result<FitResult> {
    fit_masked(&split.x, &split.train_mask, hp, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeldoutScore {
    pub rmse: f64,
    /// Summed exact Poisson NLL of the hidden entries; `None` when any
    /// predicted rate is exactly zero.
    pub nll: Option<f64>,
}

/// RMSE and Poisson NLL of `predictions` on the hidden entries only.
pub fn evaluate_heldout(split: &HoldoutSplit, predictions: &Array2<f64>) -> Result<HeldoutScore> {
    if predictions.dim() != split.train_mask.dim() {
        return Err(Error::contract(format!(
            "predictions are {:?}, expected {:?}",
            predictions.dim(),
            split.train_mask.dim()
        )));
    }
    if split.test_indices.is_empty() {
        return Err(Error::contract("split has no held-out entries"));
    }
    let mut sq = 0.0;
    let mut nll = Some(0.0);
    for &(i, j) in &split.test_indices {
        let rate = predictions[[i, j]];
        if !rate.is_finite() || rate < 0.0 {
            return Err(Error::contract(format!(
                "prediction at ({i}, {j}) is {rate}; rates must be finite and >= 0"
            )));
        }
        let truth = split.x.get(i, j);
        sq += (f64::from(truth) - rate).powi(2);
        nll = match nll {
            Some(acc) if rate > 0.0 => Some(acc - poisson_log_pmf(truth, rate)),
            _ => None,
        };
    }
    Ok(HeldoutScore {
        rmse: (sq / split.test_indices.len() as f64).sqrt(),
        nll,
    })
}

/// Fills every cell with the mean of the training entries.
pub fn pred_avg(split: &HoldoutSplit) -> Array2<f64> {
    let (sum, count) = split
        .x
        .counts()
        .iter()
        .zip(split.train_mask.iter())
        .filter(|(_, &t)| t)
        .fold((0.0, 0usize), |(s, c), (&v, _)| (s + f64::from(v), c + 1));
    Array2::from_elem(split.train_mask.raw_dim(), sum / count.max(1) as f64)
}

pub fn pred_zero(split: &HoldoutSplit) -> Array2<f64> {
    Array2::zeros(split.train_mask.raw_dim())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchmarkConfig {
    pub n_subsets: usize,
    pub subset_size: usize,
    pub fraction: f64,
    pub symmetric_mask: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            n_subsets: 20,
            subset_size: 50,
            fraction: 0.1,
            symmetric_mask: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelScore {
    pub model_name: String,
    /// Mean over subsets.
    pub rmse: f64,
    /// Mean over subsets; `None` when undefined on any subset.
    pub nll: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetScores {
    pub subset: usize,
    pub seed: u64,
    pub k_star: usize,
    pub bnmf: HeldoutScore,
    pub pred_avg: HeldoutScore,
    pub pred_zero: HeldoutScore,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub models: Vec<ModelScore>,
    pub n_subsets: usize,
    pub subset_size: usize,
    pub fraction: f64,
    pub seed: u64,
    pub per_subset: Vec<SubsetScores>,
}

impl EvalReport {
    pub fn model(&self, name: &str) -> Option<&ModelScore> {
        self.models.iter().find(|m| m.model_name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Models as columns, RMSE and NLL as rows; undefined NLL prints `--`.
    pub fn to_table(&self) -> String {
        let width = self
            .models
            .iter()
            .map(|m| m.model_name.len())
            .max()
            .unwrap_or(0)
            .max(10);
        let mut out = format!("{:<6}", "");
        for m in &self.models {
            let _ = write!(out, "  {:>width$}", m.model_name);
        }
        out.push('\n');
        let _ = write!(out, "{:<6}", "RMSE");
        for m in &self.models {
            let _ = write!(out, "  {:>width$.4}", m.rmse);
        }
        out.push('\n');
        let _ = write!(out, "{:<6}", "NLL");
        for m in &self.models {
            match m.nll {
                Some(v) => {
                    let _ = write!(out, "  {v:>width$.2}");
                }
                None => {
                    let _ = write!(out, "  {:>width$}", "--");
                }
            }
        }
        out.push('\n');
        out
    }
}

fn score_subset(
    x: &SimilarityMatrix,
    cfg: &BenchmarkConfig,
    hp: &Hyperparameters,
    subset: usize,
    seed: u64,
) -> Result<SubsetScores> {
    let sub_seed = derive_seed(seed, subset as u64);
    let sub = subsample(x, cfg.subset_size, derive_seed(sub_seed, 0))?;
    let split = holdout_split(&sub, cfg.fraction, derive_seed(sub_seed, 1), cfg.symmetric_mask)?;
    let fitted = masked_fit(&split, hp, derive_seed(sub_seed, 2))?;
    let bnmf_pred = if fitted.is_empty() {
        pred_zero(&split)
    } else {
        fitted.model.rates()
    };
    Ok(SubsetScores {
        subset,
        seed: sub_seed,
        k_star: fitted.k_star,
        bnmf: evaluate_heldout(&split, &bnmf_pred)?,
        pred_avg: evaluate_heldout(&split, &pred_avg(&split))?,
        pred_zero: evaluate_heldout(&split, &pred_zero(&split))?,
    })
}

fn mean_score(scores: impl Iterator<Item = HeldoutScore> + Clone) -> (f64, Option<f64>) {
    let n = scores.clone().count() as f64;
    let rmse = scores.clone().map(|s| s.rmse).sum::<f64>() / n;
    let nll = scores
        .map(|s| s.nll)
        .sum::<Option<f64>>()
        .map(|total| total / n);
    (rmse, nll)
}

/// Runs the full protocol on `n_subsets` independent subsets and reports
/// per-model arithmetic means. Subsets run in parallel; results are ordered
/// by subset index, so the report is reproducible from `seed`.
pub fn benchmark(
    x: &SimilarityMatrix,
    cfg: &BenchmarkConfig,
    hp: &Hyperparameters,
    seed: u64,
) -> Result<EvalReport> {
    if cfg.n_subsets < 1 {
        return Err(Error::contract("n_subsets must be at least 1"));
    }
    if cfg.subset_size > x.n() {
        return Err(Error::contract(format!(
            "subset size {} exceeds N = {}",
            cfg.subset_size,
            x.n()
        )));
    }
    hp.validate()?;
    let per_subset: Vec<SubsetScores> = (0..cfg.n_subsets)
        .into_par_iter()
        .map(|s| score_subset(x, cfg, hp, s, seed))
        .collect::<Result<_>>()?;

    let models = [
        (BNMF, mean_score(per_subset.iter().map(|s| s.bnmf))),
        (PRED_AVG, mean_score(per_subset.iter().map(|s| s.pred_avg))),
        (PRED_ZERO, mean_score(per_subset.iter().map(|s| s.pred_zero))),
    ]
    .into_iter()
    .map(|(name, (rmse, nll))| ModelScore {
        model_name: name.to_string(),
        rmse,
        nll,
    })
    .collect();

    Ok(EvalReport {
        models,
        n_subsets: cfg.n_subsets,
        subset_size: cfg.subset_size,
        fraction: cfg.fraction,
        seed,
        per_subset,
    })
}
