use ndarray::{Array1, Array2, Axis, Zip};

use super::objective::squared_norms;
use super::{FactorModel, Hyperparameters};
use crate::data::SimilarityMatrix;
use crate::error::{Error, Result};

/// Observed counts plus an optional 0/1 observation mask.
#[derive(Clone, Copy)]
pub(crate) struct Observed<'a> {
    pub x: &'a Array2<f64>,
    pub mask: Option<&'a Array2<f64>>,
}

impl Observed<'_> {
    /// `M∘X / max(rate, eps)`.
    fn ratio(&self, rate: &Array2<f64>, eps: f64) -> Array2<f64> {
        let mut out = Array2::<f64>::zeros(rate.raw_dim());
        match self.mask {
            None => Zip::from(&mut out)
                .and(self.x)
                .and(rate)
                .for_each(|o, &x, &r| {
                    if x != 0.0 {
                        *o = x / r.max(eps);
                    }
                }),
            Some(m) => Zip::from(&mut out)
                .and(self.x)
                .and(rate)
                .and(m)
                .for_each(|o, &x, &r, &keep| {
                    if keep != 0.0 && x != 0.0 {
                        *o = x / r.max(eps);
                    }
                }),
        }
        out
    }
}

/// `H ← H / (WᵀM + diag(β)H) ∘ Wᵀ(M∘X / WH)`; with no mask `WᵀM` is the
/// broadcast column sum `Wᵀ1`.
pub(crate) fn h_step(
    obs: Observed<'_>,
    w: &Array2<f64>,
    h: &Array2<f64>,
    beta: &Array1<f64>,
    rate: &Array2<f64>,
    eps: f64,
) -> Array2<f64> {
    let numer = w.t().dot(&obs.ratio(rate, eps));
    let mut out = h.clone();
    match obs.mask {
        None => {
            let col_sums = w.sum_axis(Axis(0));
            for (k, mut row) in out.rows_mut().into_iter().enumerate() {
                let (base, bk) = (col_sums[k], beta[k]);
                Zip::from(&mut row)
                    .and(numer.row(k))
                    .for_each(|hv, &num| *hv *= num / (base + bk * *hv).max(eps));
            }
        }
        Some(m) => {
            let base = w.t().dot(m);
            for (k, mut row) in out.rows_mut().into_iter().enumerate() {
                let bk = beta[k];
                Zip::from(&mut row)
                    .and(numer.row(k))
                    .and(base.row(k))
                    .for_each(|hv, &num, &b| *hv *= num / (b + bk * *hv).max(eps));
            }
        }
    }
    out
}

/// `W ← W / (MHᵀ + W diag(β)) ∘ (M∘X / WH)Hᵀ`; with no mask `MHᵀ` is the
/// broadcast row sum `1Hᵀ`.
pub(crate) fn w_step(
    obs: Observed<'_>,
    w: &Array2<f64>,
    h: &Array2<f64>,
    beta: &Array1<f64>,
    rate: &Array2<f64>,
    eps: f64,
) -> Array2<f64> {
    let numer = obs.ratio(rate, eps).dot(&h.t());
    let mut out = w.clone();
    match obs.mask {
        None => {
            let row_sums = h.sum_axis(Axis(1));
            for mut row in out.rows_mut() {
                Zip::from(&mut row)
                    .and(&row_sums)
                    .and(beta)
                    .for_each(|wv, &base, &bk| {
                        let d = (base + bk * *wv).max(eps);
                        *wv /= d;
                    });
            }
            out *= &numer;
        }
        Some(m) => {
            let base = m.dot(&h.t());
            for (i, mut row) in out.rows_mut().into_iter().enumerate() {
                Zip::from(&mut row)
                    .and(base.row(i))
                    .and(beta)
                    .for_each(|wv, &b, &bk| {
                        let d = (b + bk * *wv).max(eps);
                        *wv /= d;
                    });
            }
            out *= &numer;
        }
    }
    out
}

/// Closed-form minimiser of the energy in each `β_k` with `W`, `H` fixed:
/// `β_k = (N + a - 1) / (½(Σ_i w_ik² + Σ_j h_kj²) + b)`.
pub(crate) fn beta_step(w: &Array2<f64>, h: &Array2<f64>, hp: &Hyperparameters) -> Array1<f64> {
    let numer = w.nrows() as f64 + hp.a - 1.0;
    squared_norms(w, h).mapv(|s| numer / (0.5 * s + hp.b))
}

fn dense(x: &SimilarityMatrix, m: &FactorModel) -> Result<Array2<f64>> {
    if x.n() != m.n() {
        return Err(Error::contract(format!(
            "data is {0}×{0} but the model has N={1}",
            x.n(),
            m.n()
        )));
    }
    Ok(x.to_f64())
}

/// One multiplicative `H` update on the full (unmasked) data.
pub fn update_h(x: &SimilarityMatrix, m: &FactorModel, hp: &Hyperparameters) -> Result<Array2<f64>> {
    let xf = dense(x, m)?;
    let obs = Observed { x: &xf, mask: None };
    Ok(h_step(obs, m.w(), m.h(), m.beta(), &m.rates(), hp.eps))
}

/// One multiplicative `W` update on the full (unmasked) data.
pub fn update_w(x: &SimilarityMatrix, m: &FactorModel, hp: &Hyperparameters) -> Result<Array2<f64>> {
    let xf = dense(x, m)?;
    let obs = Observed { x: &xf, mask: None };
    Ok(w_step(obs, m.w(), m.h(), m.beta(), &m.rates(), hp.eps))
}

pub fn update_beta(m: &FactorModel, hp: &Hyperparameters) -> Array1<f64> {
    beta_step(m.w(), m.h(), hp)
}

/// Drops every component whose `W` column and `H` row both have max below
/// `prune_tol`, keeping survivors in order. May return an empty model; check
/// [`FactorModel::is_empty`].
pub fn prune(m: &FactorModel, prune_tol: f64) -> FactorModel {
    let col_max = |k: usize| m.w().column(k).iter().fold(0.0f64, |a, &v| a.max(v));
    let row_max = |k: usize| m.h().row(k).iter().fold(0.0f64, |a, &v| a.max(v));
    let keep: Vec<usize> = (0..m.k())
        .filter(|&k| col_max(k) >= prune_tol || row_max(k) >= prune_tol)
        .collect();
    FactorModel::from_parts_unchecked(
        m.w().select(Axis(1), &keep),
        m.h().select(Axis(0), &keep),
        m.beta().select(Axis(0), &keep),
    )
}
