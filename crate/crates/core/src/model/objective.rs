use ndarray::{Array1, Array2, Zip};
use statrs::function::factorial::ln_factorial;

use super::{FactorModel, Hyperparameters};
use crate::data::SimilarityMatrix;
use crate::error::{Error, Result};

/// `log P(X = x)` for `X ~ Poisson(rate)`. A zero rate is a point mass at 0.
pub fn poisson_log_pmf(x: u32, rate: f64) -> f64 {
    if rate == 0.0 {
        return if x == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let x64 = f64::from(x);
    let xlogr = if x == 0 { 0.0 } else { x64 * rate.ln() };
    xlogr - rate - ln_factorial(u64::from(x))
}

/// `Σ log(x_ij!)` over observed entries.
pub(crate) fn log_factorial_sum(x: &Array2<f64>, mask: Option<&Array2<f64>>) -> f64 {
    let lf = |v: f64| ln_factorial(v as u64);
    match mask {
        None => x.iter().map(|&v| lf(v)).sum(),
        Some(m) => x
            .iter()
            .zip(m.iter())
            .filter(|(_, &o)| o != 0.0)
            .map(|(&v, _)| lf(v))
            .sum(),
    }
}

/// Exact Poisson NLL `Σ [r - x log r + log x!]` with `r = max(rate, eps)`,
/// summed over observed entries. `log_fact` is the precomputed
/// [`log_factorial_sum`].
pub(crate) fn data_nll(
    x: &Array2<f64>,
    rate: &Array2<f64>,
    mask: Option<&Array2<f64>>,
    eps: f64,
    log_fact: f64,
) -> f64 {
    let term = |xv: f64, rv: f64| {
        let r = rv.max(eps);
        if xv == 0.0 {
            r
        } else {
            r - xv * r.ln()
        }
    };
    let sum = match mask {
        None => Zip::from(x)
            .and(rate)
            .fold(0.0, |acc, &xv, &rv| acc + term(xv, rv)),
        Some(m) => Zip::from(x).and(rate).and(m).fold(0.0, |acc, &xv, &rv, &o| {
            if o != 0.0 {
                acc + term(xv, rv)
            } else {
                acc
            }
        }),
    };
    sum + log_fact
}

/// Exact negative Poisson log-likelihood of `x` under rates `WH`, with
/// every rate floored at `eps`.
pub fn poisson_nll(x: &SimilarityMatrix, model: &FactorModel, eps: f64) -> Result<f64> {
    check_dims(x, model)?;
    let xf = x.to_f64();
    let lf = log_factorial_sum(&xf, None);
    Ok(data_nll(&xf, &model.rates(), None, eps, lf))
}

fn check_dims(x: &SimilarityMatrix, model: &FactorModel) -> Result<()> {
    if x.n() != model.n() {
        return Err(Error::contract(format!(
            "data is {0}×{0} but the model has N={1}",
            x.n(),
            model.n()
        )));
    }
    Ok(())
}

fn check_beta(beta: &Array1<f64>) -> Result<()> {
    if beta.iter().any(|&b| b.is_nan() || b <= 0.0) {
        return Err(Error::contract("beta must be strictly positive"));
    }
    Ok(())
}

/// Half-normal negative log prior on the columns of `W` and rows of `H`,
/// constants dropped:
/// `Σ_k ½β_k(Σ_i w_ik² + Σ_j h_kj²) - (N_w/2 + N_h/2) Σ_k log β_k`.
pub fn neg_log_prior(w: &Array2<f64>, h: &Array2<f64>, beta: &Array1<f64>) -> Result<f64> {
    if w.ncols() != beta.len() || h.nrows() != beta.len() {
        return Err(Error::contract("prior shapes disagree on K"));
    }
    check_beta(beta)?;
    Ok(prior_unchecked(w, h, beta))
}

pub(crate) fn prior_unchecked(w: &Array2<f64>, h: &Array2<f64>, beta: &Array1<f64>) -> f64 {
    let half_count = 0.5 * (w.nrows() + h.ncols()) as f64;
    let sq = squared_norms(w, h);
    beta.iter()
        .zip(sq.iter())
        .map(|(&b, &s)| 0.5 * b * s - half_count * b.ln())
        .sum()
}

/// `Σ_i w_ik² + Σ_j h_kj²` per component.
pub(crate) fn squared_norms(w: &Array2<f64>, h: &Array2<f64>) -> Array1<f64> {
    let mut sq = Array1::<f64>::zeros(w.ncols());
    for row in w.rows() {
        Zip::from(&mut sq).and(&row).for_each(|s, &v| *s += v * v);
    }
    for (s, row) in sq.iter_mut().zip(h.rows()) {
        *s += row.iter().map(|&v| v * v).sum::<f64>();
    }
    sq
}

/// Gamma(shape `a`, rate `b`) negative log hyperprior, constants dropped:
/// `Σ_k [β_k b - (a - 1) log β_k]`.
pub fn neg_log_hyperprior(beta: &Array1<f64>, hp: &Hyperparameters) -> Result<f64> {
    check_beta(beta)?;
    Ok(hyperprior_unchecked(beta, hp))
}

pub(crate) fn hyperprior_unchecked(beta: &Array1<f64>, hp: &Hyperparameters) -> f64 {
    beta.iter()
        .map(|&b| b * hp.b - (hp.a - 1.0) * b.ln())
        .sum()
}

/// The additive pieces of the energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParts {
    pub data_nll: f64,
    pub prior: f64,
    pub hyperprior: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.data_nll + self.prior + self.hyperprior
    }
}

pub fn energy_parts(
    x: &SimilarityMatrix,
    m: &FactorModel,
    hp: &Hyperparameters,
) -> Result<EnergyParts> {
    Ok(EnergyParts {
        data_nll: poisson_nll(x, m, hp.eps)?,
        prior: neg_log_prior(m.w(), m.h(), m.beta())?,
        hyperprior: neg_log_hyperprior(m.beta(), hp)?,
    })
}

/// Negative log posterior `U` (up to constants): data NLL + prior + hyperprior.
pub fn energy(x: &SimilarityMatrix, m: &FactorModel, hp: &Hyperparameters) -> Result<f64> {
    energy_parts(x, m, hp).map(|p| p.total())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn one(x: u32) -> SimilarityMatrix {
        SimilarityMatrix::with_generated_ids("s", array![[x]]).unwrap()
    }

    fn scalar_model(w: f64, h: f64, beta: f64) -> FactorModel {
        FactorModel::new(array![[w]], array![[h]], array![beta]).unwrap()
    }

    #[test]
    fn nll_scalar_examples() {
        let eps = 1e-12;
        assert_abs_diff_eq!(poisson_nll(&one(0), &scalar_model(1.0, 1.0, 1.0), eps).unwrap(), 1.0);
        assert_abs_diff_eq!(poisson_nll(&one(1), &scalar_model(1.0, 1.0, 1.0), eps).unwrap(), 1.0);
        // 3 - 2 ln 3 + ln 2, evaluated with mpmath at 50 digits.
        assert_abs_diff_eq!(
            poisson_nll(&one(2), &scalar_model(1.0, 3.0, 1.0), eps).unwrap(),
            1.4959226032237258,
            epsilon = 1e-14
        );
    }

    #[test]
    fn nll_dimension_mismatch() {
        let x = SimilarityMatrix::with_generated_ids("s", array![[1, 0], [0, 1]]).unwrap();
        assert!(matches!(
            poisson_nll(&x, &scalar_model(1.0, 1.0, 1.0), 1e-12),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn log_pmf_zero_rate() {
        assert_eq!(poisson_log_pmf(0, 0.0), 0.0);
        assert_eq!(poisson_log_pmf(3, 0.0), f64::NEG_INFINITY);
    }

    #[test]
    fn prior_examples() {
        let z = Array2::<f64>::zeros((2, 1));
        assert_abs_diff_eq!(neg_log_prior(&z, &z.t().to_owned(), &array![1.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(
            neg_log_prior(&array![[2.0]], &array![[0.0]], &array![1.0]).unwrap(),
            2.0
        );
        // 2 + 2 - ln 4
        assert_abs_diff_eq!(
            neg_log_prior(&array![[1.0]], &array![[1.0]], &array![4.0]).unwrap(),
            2.6137056388801094,
            epsilon = 1e-14
        );
        assert!(neg_log_prior(&array![[1.0]], &array![[1.0]], &array![0.0]).is_err());
    }

    #[test]
    fn hyperprior_examples() {
        let hp = |a, b| Hyperparameters { a, b, ..Hyperparameters::default() };
        assert_abs_diff_eq!(neg_log_hyperprior(&array![1.0], &hp(1.0, 1.0)).unwrap(), 1.0);
        // 2 - 2 ln 2
        assert_abs_diff_eq!(
            neg_log_hyperprior(&array![2.0], &hp(3.0, 1.0)).unwrap(),
            0.6137056388801094,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(neg_log_hyperprior(&array![1.0, 1.0], &hp(2.0, 0.5)).unwrap(), 1.0);
        assert!(neg_log_hyperprior(&array![-1.0], &hp(2.0, 0.5)).is_err());
    }

    #[test]
    fn energy_is_additive() {
        let parts = EnergyParts { data_nll: 1.0, prior: 2.0, hyperprior: 0.5 };
        assert_eq!(parts.total(), 3.5);
    }

    #[test]
    fn energy_of_empty_scalar() {
        let hp = Hyperparameters { a: 1.0, b: 1.0, eps: 1e-12, ..Hyperparameters::default() };
        let u = energy(&one(0), &scalar_model(0.0, 0.0, 1.0), &hp).unwrap();
        assert_abs_diff_eq!(u, 1.0, epsilon = 1e-11);
        assert!(u > 1.0);
    }
}
