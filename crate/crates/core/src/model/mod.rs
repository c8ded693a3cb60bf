//! Poisson NMF with automatic relevance determination.
//!
//! The similarity counts are modelled as `x_ij ~ Poisson((WH)_ij)` with
//! half-normal priors on column `k` of `W` and row `k` of `H` sharing the
//! precision `beta_k`, and a Gamma(shape `a`, rate `b`) hyperprior on each
//! `beta_k`. MAP estimates are found with multiplicative fixed-point updates
//! that never increase the negative log posterior (the *energy*). Components
//! whose precision blows up are driven to zero and pruned afterwards.

mod fit;
mod objective;
mod updates;

pub use fit::{fit, fit_masked, FitResult};
pub use objective::{
    energy, energy_parts, neg_log_hyperprior, neg_log_prior, poisson_log_pmf, poisson_nll,
    EnergyParts,
};
pub use updates::{prune, update_beta, update_h, update_w};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_A: f64 = 5.0;
pub const DEFAULT_B: f64 = 2.0;
pub const DEFAULT_MAX_K0: usize = 100;
pub const DEFAULT_ITERS: usize = 2000;
pub const DEFAULT_REL_TOL: f64 = 1e-9;
pub const DEFAULT_EPS: f64 = 1e-12;
pub const DEFAULT_PRUNE_TOL: f64 = 1e-6;

/// Prior and optimiser settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    /// Gamma shape of the precision hyperprior.
    pub a: f64,
    /// Gamma rate of the precision hyperprior.
    pub b: f64,
    /// Number of components at initialisation.
    pub k0: usize,
    pub n_iter: usize,
    /// Stop once `|U_t - U_{t-1}| < rel_tol * |U_{t-1}|`. Zero disables.
    pub rel_tol: f64,
    /// Floor applied to every denominator and every rate inside a log.
    pub eps: f64,
    /// Components whose `W` column and `H` row both stay below this are pruned.
    pub prune_tol: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            a: DEFAULT_A,
            b: DEFAULT_B,
            k0: DEFAULT_MAX_K0,
            n_iter: DEFAULT_ITERS,
            rel_tol: DEFAULT_REL_TOL,
            eps: DEFAULT_EPS,
            prune_tol: DEFAULT_PRUNE_TOL,
        }
    }
}

impl Hyperparameters {
    /// Defaults with `k0 = min(n, 100)`.
    pub fn for_size(n: usize) -> Self {
        Self {
            k0: n.clamp(1, DEFAULT_MAX_K0),
            ..Self::default()
        }
    }

    pub fn with_k0(self, k0: usize) -> Self {
        Self { k0, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.a) {
            return Err(Error::contract(format!("a must be > 0, got {}", self.a)));
        }
        if !positive(self.b) {
            return Err(Error::contract(format!("b must be > 0, got {}", self.b)));
        }
        if self.k0 < 1 {
            return Err(Error::contract("k0 must be at least 1"));
        }
        if self.n_iter < 1 {
            return Err(Error::contract("n_iter must be at least 1"));
        }
        if self.rel_tol.is_nan() || self.rel_tol < 0.0 {
            return Err(Error::contract(format!("rel_tol must be >= 0, got {}", self.rel_tol)));
        }
        if !positive(self.eps) {
            return Err(Error::contract(format!("eps must be > 0, got {}", self.eps)));
        }
        if !positive(self.prune_tol) {
            return Err(Error::contract(format!(
                "prune_tol must be > 0, got {}",
                self.prune_tol
            )));
        }
        Ok(())
    }
}

/// Nonnegative factors `W` (N×K), `H` (K×N) and ARD precisions `beta` (K).
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    w: Array2<f64>,
    h: Array2<f64>,
    beta: Array1<f64>,
}

impl FactorModel {
    pub fn new(w: Array2<f64>, h: Array2<f64>, beta: Array1<f64>) -> Result<Self> {
        let k = beta.len();
        if w.ncols() != k || h.nrows() != k {
            return Err(Error::contract(format!(
                "inconsistent K: W is {:?}, H is {:?}, beta has {k}",
                w.dim(),
                h.dim()
            )));
        }
        if w.nrows() != h.ncols() {
            return Err(Error::contract(format!(
                "W has {} rows but H has {} columns",
                w.nrows(),
                h.ncols()
            )));
        }
        if w.iter().chain(h.iter()).any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::contract("factor entries must be finite and >= 0"));
        }
        if beta.iter().any(|&v| !v.is_finite() || v <= 0.0) {
            return Err(Error::contract("beta entries must be finite and > 0"));
        }
        Ok(Self { w, h, beta })
    }

    pub(crate) fn from_parts_unchecked(w: Array2<f64>, h: Array2<f64>, beta: Array1<f64>) -> Self {
        debug_assert_eq!(w.ncols(), beta.len());
        debug_assert_eq!(h.nrows(), beta.len());
        Self { w, h, beta }
    }

    pub fn w(&self) -> &Array2<f64> {
        &self.w
    }

    pub fn h(&self) -> &Array2<f64> {
        &self.h
    }

    pub fn beta(&self) -> &Array1<f64> {
        &self.beta
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn k(&self) -> usize {
        self.beta.len()
    }

    /// True when every component has been pruned away.
    pub fn is_empty(&self) -> bool {
        self.k() == 0
    }

    /// Poisson rates `WH`.
    pub fn rates(&self) -> Array2<f64> {
        self.w.dot(&self.h)
    }

    pub fn into_parts(self) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
        (self.w, self.h, self.beta)
    }
}
