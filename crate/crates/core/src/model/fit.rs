use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::objective::{data_nll, hyperprior_unchecked, log_factorial_sum, prior_unchecked};
use super::updates::{beta_step, h_step, prune, w_step, Observed};
use super::{FactorModel, Hyperparameters};
use crate::data::SimilarityMatrix;
use crate::error::{Error, Result};

/// Outcome of one MAP inference run.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Factors after pruning. Empty when every component was pruned.
    pub model: FactorModel,
    pub k_star: usize,
    /// Energy at initialisation followed by one value per iteration.
    pub energy_trace: Vec<f64>,
    /// Exact Poisson NLL of the observed entries under the pruned `WH`.
    pub final_data_nll: f64,
    pub iterations_run: usize,
    pub seed: u64,
}

impl FitResult {
    pub fn is_empty(&self) -> bool {
        self.model.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&FitResultJson::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: FitResultJson = serde_json::from_str(text)?;
        raw.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct FitResultJson {
    k_star: usize,
    seed: u64,
    iterations_run: usize,
    final_data_nll: f64,
    energy_trace: Vec<f64>,
    w: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
    beta: Vec<f64>,
}

fn rows_of(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn from_rows(rows: Vec<Vec<f64>>, ncols: usize) -> Result<Array2<f64>> {
    let nrows = rows.len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::validation("ragged factor matrix in fit JSON"));
    }
    Array2::from_shape_vec((nrows, ncols), rows.into_iter().flatten().collect())
        .map_err(|e| Error::validation(e.to_string()))
}

impl From<&FitResult> for FitResultJson {
    fn from(r: &FitResult) -> Self {
        Self {
            k_star: r.k_star,
            seed: r.seed,
            iterations_run: r.iterations_run,
            final_data_nll: r.final_data_nll,
            energy_trace: r.energy_trace.clone(),
            w: rows_of(r.model.w()),
            h: rows_of(r.model.h()),
            beta: r.model.beta().to_vec(),
        }
    }
}

impl TryFrom<FitResultJson> for FitResult {
    type Error = Error;

    fn try_from(raw: FitResultJson) -> Result<Self> {
        let k = raw.beta.len();
        let n = raw.w.len();
        let w = from_rows(raw.w, k)?;
        let h = from_rows(raw.h, n)?;
        let model = FactorModel::new(w, h, Array1::from(raw.beta))
            .map_err(|e| Error::validation(e.to_string()))?;
        if raw.k_star != k {
            return Err(Error::validation(format!(
                "k_star {} disagrees with {k} components",
                raw.k_star
            )));
        }
        Ok(Self {
            model,
            k_star: k,
            energy_trace: raw.energy_trace,
            final_data_nll: raw.final_data_nll,
            iterations_run: raw.iterations_run,
            seed: raw.seed,
        })
    }
}

/// MAP inference on the full similarity matrix.
///
/// Runs H, W, β updates in that order from a seeded random start until
/// `n_iter` sweeps or the relative energy change drops below `rel_tol`,
/// then prunes dead components. Deterministic in `(x, hp, seed)`.
pub fn fit(x: &SimilarityMatrix, hp: &Hyperparameters, seed: u64) -> Result<FitResult> {
    run(&x.to_f64(), None, hp, seed)
}

/// MAP inference using only entries where `mask` is true. Masked-out
/// counts never influence the result. An all-true mask is identical to
/// [`fit`].
pub fn fit_masked(
    x: &SimilarityMatrix,
    mask: &Array2<bool>,
    hp: &Hyperparameters,
    seed: u64,
) -> Result<FitResult> {
    if mask.dim() != x.counts().dim() {
        return Err(Error::contract(format!(
            "mask is {:?} but data is {n}×{n}",
            mask.dim(),
            n = x.n()
        )));
    }
    if let Some(i) = mask.rows().into_iter().position(|r| !r.iter().any(|&o| o)) {
        return Err(Error::contract(format!("row {i} has no observed entries")));
    }
    if mask.iter().all(|&o| o) {
        return fit(x, hp, seed);
    }
    let weights = mask.mapv(|o| if o { 1.0 } else { 0.0 });
    // Zero hidden counts so nothing downstream can read them.
    let xf = x.to_f64() * &weights;
    run(&xf, Some(&weights), hp, seed)
}

fn run(
    x: &Array2<f64>,
    mask: Option<&Array2<f64>>,
    hp: &Hyperparameters,
    seed: u64,
) -> Result<FitResult> {
    hp.validate()?;
    let n = x.nrows();
    if n == 0 {
        return Err(Error::contract("cannot fit an empty matrix"));
    }
    let k0 = hp.k0;
    let obs = Observed { x, mask };
    let log_fact = log_factorial_sum(x, mask);

    let observed_mean = match mask {
        None => x.mean().unwrap_or(0.0),
        Some(m) => x.sum() / m.sum(),
    };
    let scale = (observed_mean / k0 as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Uniform on (0, 1].
    let draw = |rng: &mut ChaCha8Rng| (1.0 - rng.random::<f64>()) * scale;
    let mut w = Array2::from_shape_simple_fn((n, k0), || draw(&mut rng));
    let mut h = Array2::from_shape_simple_fn((k0, n), || draw(&mut rng));
    let mut beta = Array1::<f64>::ones(k0);

    let energy_of = |w: &Array2<f64>, h: &Array2<f64>, beta: &Array1<f64>, rate: &Array2<f64>| {
        data_nll(x, rate, mask, hp.eps, log_fact)
            + prior_unchecked(w, h, beta)
            + hyperprior_unchecked(beta, hp)
    };

    let mut rate = w.dot(&h);
    let mut trace = Vec::with_capacity(hp.n_iter + 1);
    trace.push(energy_of(&w, &h, &beta, &rate));

    let mut iterations_run = 0;
    for _ in 0..hp.n_iter {
        h = h_step(obs, &w, &h, &beta, &rate, hp.eps);
        rate = w.dot(&h);
        w = w_step(obs, &w, &h, &beta, &rate, hp.eps);
        beta = beta_step(&w, &h, hp);
        debug_assert!(w.iter().chain(h.iter()).all(|&v| v >= 0.0 && v.is_finite()));
        debug_assert!(beta.iter().all(|&b| b > 0.0 && b.is_finite()));

        rate = w.dot(&h);
        let u = energy_of(&w, &h, &beta, &rate);
        let prev = *trace.last().expect("trace starts non-empty");
        trace.push(u);
        iterations_run += 1;
        if !u.is_finite() {
            return Err(Error::Numerical(format!(
                "energy became {u} at iteration {iterations_run}"
            )));
        }
        if (prev - u).abs() < hp.rel_tol * prev.abs() {
            break;
        }
    }

    let model = prune(&FactorModel::from_parts_unchecked(w, h, beta), hp.prune_tol);
    let final_data_nll = data_nll(x, &model.rates(), mask, hp.eps, log_fact);
    Ok(FitResult {
        k_star: model.k(),
        model,
        energy_trace: trace,
        final_data_nll,
        iterations_run,
        seed,
    })
}
