//! Seeded synthetic similarity data.
//!
//! [`sample_generative`] draws from the full Bayesian model; [`sample_planted`]
//! plants community structure directly through within/between Poisson rates
//! and serves as a recovery oracle that does not depend on the priors.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::data::SimilarityMatrix;
use crate::error::{Error, Result};
use crate::model::{FactorModel, Hyperparameters};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub n: usize,
    pub k: usize,
    pub sizes: Vec<usize>,
    pub within_rate: f64,
    pub between_rate: f64,
    pub seed: u64,
}

impl PlantedSpec {
    /// `k` communities of as-equal-as-possible size, larger ones first.
    pub fn balanced(n: usize, k: usize, within_rate: f64, between_rate: f64, seed: u64) -> Self {
        let sizes = (0..k)
            .map(|c| n / k.max(1) + usize::from(c < n % k.max(1)))
            .collect();
        Self {
            n,
            k,
            sizes,
            within_rate,
            between_rate,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n == 0 {
            return Err(Error::contract("planted spec needs n >= 1 and k >= 1"));
        }
        if self.sizes.len() != self.k || self.sizes.iter().sum::<usize>() != self.n {
            return Err(Error::contract(format!(
                "community sizes {:?} must have {} entries summing to {}",
                self.sizes, self.k, self.n
            )));
        }
        if !(self.between_rate >= 0.0 && self.within_rate > self.between_rate)
            || !self.within_rate.is_finite()
        {
            return Err(Error::contract(format!(
                "need within_rate > between_rate >= 0, got {} and {}",
                self.within_rate, self.between_rate
            )));
        }
        Ok(())
    }

    /// Planted label of every learner, in block order.
    pub fn labels(&self) -> Vec<usize> {
        self.sizes
            .iter()
            .enumerate()
            .flat_map(|(c, &s)| std::iter::repeat_n(c, s))
            .collect()
    }
}

fn poisson<R: Rng>(rng: &mut R, rate: f64) -> u32 {
    if rate <= 0.0 {
        return 0;
    }
    let draw: f64 = Poisson::new(rate).expect("positive finite rate").sample(rng);
    draw as u32
}

/// Symmetric count matrix with `x_ij ~ Poisson(rate(i, j))` drawn for `i <= j`
/// in row-major order and mirrored.
fn symmetric_poisson<R: Rng>(
    rng: &mut R,
    n: usize,
    rate: impl Fn(usize, usize) -> f64,
) -> Array2<u32> {
    let mut counts = Array2::<u32>::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = poisson(rng, rate(i, j));
            counts[[i, j]] = v;
            counts[[j, i]] = v;
        }
    }
    counts
}

/// Planted-partition counts: `Poisson(within_rate)` for same-community pairs
/// (including the diagonal), `Poisson(between_rate)` otherwise.
pub fn sample_planted(spec: &PlantedSpec) -> Result<(Vec<usize>, SimilarityMatrix)> {
    spec.validate()?;
    let labels = spec.labels();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let counts = symmetric_poisson(&mut rng, spec.n, |i, j| {
        if labels[i] == labels[j] {
            spec.within_rate
        } else {
            spec.between_rate
        }
    });
    Ok((labels, SimilarityMatrix::with_generated_ids("s", counts)?))
}

/// Draws `(W, H, β)` from the priors and counts from the Poisson likelihood.
///
/// `β_k ~ Gamma(shape a, rate b)`, `w_ik, h_kj ~ |Normal(0, 1/β_k)|`, then
/// `x_ij ~ Poisson((WH)_ij)` for `i <= j`, mirrored to keep `X` symmetric.
pub fn sample_generative(
    n: usize,
    k: usize,
    hp: &Hyperparameters,
    seed: u64,
) -> Result<(FactorModel, SimilarityMatrix)> {
    if n == 0 || k == 0 {
        return Err(Error::contract("sample_generative needs n >= 1 and k >= 1"));
    }
    hp.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = Gamma::new(hp.a, 1.0 / hp.b)
        .map_err(|e| Error::contract(format!("invalid Gamma(a, b): {e}")))?;
    let beta = Array1::from_shape_simple_fn(k, || gamma.sample(&mut rng));
    let normals: Vec<Normal<f64>> = beta
        .iter()
        .map(|&b| Normal::new(0.0, b.recip().sqrt()))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Numerical(format!("precision out of range: {e}")))?;
    let w = Array2::from_shape_fn((n, k), |(_, c)| normals[c].sample(&mut rng).abs());
    let h = Array2::from_shape_fn((k, n), |(c, _)| normals[c].sample(&mut rng).abs());
    let model = FactorModel::new(w, h, beta)?;
    let rates = model.rates();
    let counts = symmetric_poisson(&mut rng, n, |i, j| rates[[i, j]]);
    Ok((model, SimilarityMatrix::with_generated_ids("s", counts)?))
}
