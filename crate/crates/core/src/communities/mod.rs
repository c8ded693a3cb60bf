//! From fitted factors to communities.
//!
//! Each learner's row of `W` is normalised into a soft membership
//! distribution; the hard label is its argmax (lowest index on ties).
//! [`best_of_restarts`] repeats inference from independent seeds and keeps
//! the run with the highest data likelihood. Communities with fewer than two
//! members are set aside at reporting time.

mod crosstab;
mod stats;

pub use crosstab::{
    group_crosstab, AttributeSummary, AttributeTable, CategoricalGroup, CrosstabReport, RealGroup,
};
pub use stats::{adjusted_rand_index, chi_square_sf, kruskal_wallis, KruskalWallis};

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::data::SimilarityMatrix;
use crate::error::{Error, Result};
use crate::model::{fit, FactorModel, FitResult, Hyperparameters};
use crate::seed::derive_seed;

/// Communities need at least this many members to be analysed.
pub const MIN_COMMUNITY_SIZE: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MembershipProfile {
    pub learner_id: String,
    /// Normalised `W` row; all zeros when the learner is unassigned.
    pub distribution: Vec<f64>,
    /// `None` when the raw `W` row is entirely zero.
    pub hard_label: Option<usize>,
    /// Raw `W` row.
    pub degree_of_participation: Vec<f64>,
}

impl MembershipProfile {
    pub fn is_unassigned(&self) -> bool {
        self.hard_label.is_none()
    }
}

/// Index of the largest entry, first index on exact ties.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// Soft membership of every learner from the rows of `W`.
pub fn soft_membership(m: &FactorModel, learner_ids: &[String]) -> Result<Vec<MembershipProfile>> {
    if m.is_empty() {
        return Err(Error::contract("cannot assign communities from an empty model"));
    }
    if learner_ids.len() != m.n() {
        return Err(Error::contract(format!(
            "{} learner ids for a model with N={}",
            learner_ids.len(),
            m.n()
        )));
    }
    Ok(m.w()
        .rows()
        .into_iter()
        .zip(learner_ids)
        .map(|(row, id)| {
            let raw = row.to_vec();
            let total: f64 = raw.iter().sum();
            let (distribution, hard_label) = if total > 0.0 {
                let dist: Vec<f64> = raw.iter().map(|&v| v / total).collect();
                let label = argmax(&dist);
                (dist, Some(label))
            } else {
                (vec![0.0; raw.len()], None)
            };
            MembershipProfile {
                learner_id: id.clone(),
                distribution,
                hard_label,
                degree_of_participation: raw,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommunityReport {
    pub assignments: Vec<MembershipProfile>,
    /// Hard-assigned members per community, over all `K*` communities.
    pub community_sizes: Vec<usize>,
    /// Learners whose community has fewer than [`MIN_COMMUNITY_SIZE`] members.
    pub filtered_singletons: Vec<String>,
    /// Learners with an all-zero `W` row.
    pub unassigned: Vec<String>,
    pub restarts_used: usize,
    pub best_seed: u64,
    /// Exact data NLL per restart, in restart order. `None` for restarts
    /// that pruned every community.
    pub restart_nlls: Vec<Option<f64>>,
}

impl CommunityReport {
    pub fn k_star(&self) -> usize {
        self.community_sizes.len()
    }

    /// Communities with at least [`MIN_COMMUNITY_SIZE`] members.
    pub fn analysed_communities(&self) -> Vec<usize> {
        (0..self.k_star())
            .filter(|&k| self.community_sizes[k] >= MIN_COMMUNITY_SIZE)
            .collect()
    }

    /// Hard labels with unassigned learners as `None`.
    pub fn hard_labels(&self) -> Vec<Option<usize>> {
        self.assignments.iter().map(|a| a.hard_label).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Flat CSV: `learner_id,hard_label,unassigned_flag,p0,p1,...`.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(sink);
        let mut header = vec![
            "learner_id".to_string(),
            "hard_label".to_string(),
            "unassigned_flag".to_string(),
        ];
        header.extend((0..self.k_star()).map(|k| format!("p{k}")));
        writer.write_record(&header)?;
        for a in &self.assignments {
            let mut record = vec![
                a.learner_id.clone(),
                a.hard_label.map(|k| k.to_string()).unwrap_or_default(),
                u8::from(a.is_unassigned()).to_string(),
            ];
            record.extend(a.distribution.iter().map(f64::to_string));
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Assignment report for a single fit.
pub fn assign(fit: &FitResult, learner_ids: &[String]) -> Result<CommunityReport> {
    let assignments = soft_membership(&fit.model, learner_ids)?;
    let mut community_sizes = vec![0usize; fit.model.k()];
    for label in assignments.iter().filter_map(|a| a.hard_label) {
        community_sizes[label] += 1;
    }
    let filtered_singletons = assignments
        .iter()
        .filter(|a| matches!(a.hard_label, Some(k) if community_sizes[k] < MIN_COMMUNITY_SIZE))
        .map(|a| a.learner_id.clone())
        .collect();
    let unassigned = assignments
        .iter()
        .filter(|a| a.is_unassigned())
        .map(|a| a.learner_id.clone())
        .collect();
    Ok(CommunityReport {
        assignments,
        community_sizes,
        filtered_singletons,
        unassigned,
        restarts_used: 1,
        best_seed: fit.seed,
        restart_nlls: vec![Some(fit.final_data_nll)],
    })
}

/// Seed used by restart `index` of an outer `seed`.
pub fn restart_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, index as u64)
}

/// The selected restart and its assignment report.
#[derive(Debug, Clone, PartialEq)]
pub struct RestartSelection {
    pub report: CommunityReport,
    pub fit: FitResult,
}

struct Best {
    index: usize,
    nll: f64,
    fit: FitResult,
}

/// Partial reduction over restarts: every NLL seen plus the best fit so far.
#[derive(Default)]
struct Restarts {
    nlls: Vec<(usize, Option<f64>)>,
    best: Option<Best>,
}

fn better(a: Option<Best>, b: Option<Best>) -> Option<Best> {
    match (a, b) {
        (Some(a), Some(b)) => {
            let a_wins = a.nll < b.nll || (a.nll == b.nll && a.index < b.index);
            Some(if a_wins { a } else { b })
        }
        (a, None) => a,
        (None, b) => b,
    }
}

/// Fits `n_restarts` times with seeds [`restart_seed`]`(seed, r)` and keeps
/// the restart with the lowest exact data NLL (likelihood term only, lowest
/// restart index on ties). Restarts run in parallel; the outcome does not
/// depend on scheduling.
pub fn best_of_restarts(
    x: &SimilarityMatrix,
    hp: &Hyperparameters,
    n_restarts: usize,
    seed: u64,
) -> Result<RestartSelection> {
    if n_restarts < 1 {
        return Err(Error::contract("n_restarts must be at least 1"));
    }
    hp.validate()?;
    let merged = (0..n_restarts)
        .into_par_iter()
        .map(|r| -> Result<Restarts> {
            let result = fit(x, hp, restart_seed(seed, r))?;
            if result.is_empty() {
                return Ok(Restarts { nlls: vec![(r, None)], best: None });
            }
            let nll = result.final_data_nll;
            Ok(Restarts {
                nlls: vec![(r, Some(nll))],
                best: Some(Best { index: r, nll, fit: result }),
            })
        })
        .try_reduce(Restarts::default, |mut a, b| {
            a.nlls.extend(b.nlls);
            a.best = better(a.best, b.best);
            Ok(a)
        })?;
    let mut nlls = merged.nlls;
    nlls.sort_by_key(|&(r, _)| r);
    let restart_nlls: Vec<Option<f64>> = nlls.into_iter().map(|(_, nll)| nll).collect();
    let best = merged.best.ok_or_else(|| {
        Error::Numerical(format!("all {n_restarts} restarts pruned every community"))
    })?;
    let mut report = assign(&best.fit, x.learner_ids())?;
    report.restarts_used = n_restarts;
    report.restart_nlls = restart_nlls;
    Ok(RestartSelection { report, fit: best.fit })
}
