//! Per-community summaries of learner attributes.

use std::collections::{BTreeSet, HashMap};
use std::io::Read;

use serde::Serialize;

use super::stats::{kruskal_wallis, KruskalWallis};
use super::CommunityReport;
use crate::error::{Error, Result};

/// Attribute values keyed by learner id, read from a CSV whose first column
/// is `learner_id`. A column whose non-empty cells all parse as numbers is
/// real-valued; anything else is categorical. Empty cells are missing.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeTable {
    columns: Vec<String>,
    learner_ids: Vec<String>,
    values: Vec<Vec<String>>,
}

impl AttributeTable {
    pub fn new(columns: Vec<String>, rows: Vec<(String, Vec<String>)>) -> Result<Self> {
        let mut learner_ids = Vec::with_capacity(rows.len());
        let mut values = Vec::with_capacity(rows.len());
        let mut seen = BTreeSet::new();
        for (id, row) in rows {
            if row.len() != columns.len() {
                return Err(Error::validation(format!(
                    "attribute row {id:?} has {} values for {} columns",
                    row.len(),
                    columns.len()
                )));
            }
            if !seen.insert(id.clone()) {
                return Err(Error::validation(format!("duplicate learner id {id:?}")));
            }
            learner_ids.push(id);
            values.push(row);
        }
        Ok(Self { columns, learner_ids, values })
    }

    pub fn read_csv<R: Read>(source: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(source);
        let headers = reader.headers()?.clone();
        if headers.get(0) != Some("learner_id") {
            return Err(Error::Parse {
                line: 1,
                message: "first header must be \"learner_id\"".to_string(),
            });
        }
        let columns = headers.iter().skip(1).map(str::to_string).collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            rows.push((
                record[0].to_string(),
                record.iter().skip(1).map(str::to_string).collect(),
            ));
        }
        Self::new(columns, rows)
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    fn is_real(&self, col: usize) -> bool {
        let mut any = false;
        for row in &self.values {
            let cell = row[col].as_str();
            if cell.is_empty() {
                continue;
            }
            if cell.parse::<f64>().map_or(true, |v| !v.is_finite()) {
                return false;
            }
            any = true;
        }
        any
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoricalGroup {
    pub community: usize,
    pub n: usize,
    /// Counts aligned with the attribute's `levels`.
    pub counts: Vec<usize>,
    pub proportions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RealGroup {
    pub community: usize,
    pub n: usize,
    /// `None` when no member of the community has a value.
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttributeSummary {
    Categorical {
        name: String,
        levels: Vec<String>,
        groups: Vec<CategoricalGroup>,
    },
    Real {
        name: String,
        groups: Vec<RealGroup>,
        /// Across communities with at least one value; `None` when fewer
        /// than two such communities or fewer than three values exist.
        kruskal_wallis: Option<KruskalWallis>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrosstabReport {
    pub communities: Vec<usize>,
    pub attributes: Vec<AttributeSummary>,
    /// Attribute rows whose learner id does not appear in the report.
    pub skipped_count: usize,
    /// Attribute rows for known learners outside every analysed community
    /// (unassigned or in a filtered singleton community).
    pub excluded_count: usize,
}

/// Summarises every attribute column per analysed community.
pub fn group_crosstab(report: &CommunityReport, table: &AttributeTable) -> Result<CrosstabReport> {
    let communities = report.analysed_communities();
    let label_of: HashMap<&str, Option<usize>> = report
        .assignments
        .iter()
        .map(|a| (a.learner_id.as_str(), a.hard_label))
        .collect();

    let mut skipped_count = 0;
    let mut excluded_count = 0;
    // (row index, community position)
    let mut members = Vec::new();
    for (row, id) in table.learner_ids.iter().enumerate() {
        match label_of.get(id.as_str()) {
            None => skipped_count += 1,
            Some(label) => match label.and_then(|k| communities.iter().position(|&c| c == k)) {
                Some(pos) => members.push((row, pos)),
                None => excluded_count += 1,
            },
        }
    }
    if members.is_empty() {
        return Err(Error::validation(
            "no attribute rows match learners in an analysed community",
        ));
    }

    let attributes = (0..table.columns.len())
        .map(|col| {
            if table.is_real(col) {
                summarise_real(table, col, &communities, &members)
            } else {
                Ok(summarise_categorical(table, col, &communities, &members))
            }
        })
        .collect::<Result<_>>()?;

    Ok(CrosstabReport {
        communities,
        attributes,
        skipped_count,
        excluded_count,
    })
}

fn summarise_real(
    table: &AttributeTable,
    col: usize,
    communities: &[usize],
    members: &[(usize, usize)],
) -> Result<AttributeSummary> {
    let mut samples = vec![Vec::new(); communities.len()];
    for &(row, pos) in members {
        let cell = &table.values[row][col];
        if !cell.is_empty() {
            samples[pos].push(cell.parse::<f64>().expect("column checked numeric"));
        }
    }
    let groups = communities
        .iter()
        .zip(&samples)
        .map(|(&community, s)| RealGroup {
            community,
            n: s.len(),
            mean: (!s.is_empty()).then(|| s.iter().sum::<f64>() / s.len() as f64),
        })
        .collect();
    let present: Vec<&Vec<f64>> = samples.iter().filter(|s| !s.is_empty()).collect();
    let total: usize = present.iter().map(|s| s.len()).sum();
    let kruskal_wallis = if present.len() >= 2 && total >= 3 {
        Some(kruskal_wallis(&present.iter().map(|s| s.as_slice()).collect::<Vec<_>>())?)
    } else {
        None
    };
    Ok(AttributeSummary::Real {
        name: table.columns[col].clone(),
        groups,
        kruskal_wallis,
    })
}

fn summarise_categorical(
    table: &AttributeTable,
    col: usize,
    communities: &[usize],
    members: &[(usize, usize)],
) -> AttributeSummary {
    let levels: Vec<String> = members
        .iter()
        .map(|&(row, _)| table.values[row][col].clone())
        .filter(|v| !v.is_empty())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut counts = vec![vec![0usize; levels.len()]; communities.len()];
    for &(row, pos) in members {
        let cell = &table.values[row][col];
        if let Ok(level) = levels.binary_search(cell) {
            counts[pos][level] += 1;
        }
    }
    let groups = communities
        .iter()
        .zip(counts)
        .map(|(&community, counts)| {
            let n: usize = counts.iter().sum();
            let proportions = counts
                .iter()
                .map(|&c| if n == 0 { 0.0 } else { c as f64 / n as f64 })
                .collect();
            CategoricalGroup { community, n, counts, proportions }
        })
        .collect();
    AttributeSummary::Categorical {
        name: table.columns[col].clone(),
        levels,
        groups,
    }
}
