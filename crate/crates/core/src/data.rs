//! Learner × category input data and its weighted one-mode projection.
//!
//! A [`LearnerCategoryMatrix`] is the binary bipartite incidence between
//! learners and content labels. Projecting it onto the learner side gives a
//! [`SimilarityMatrix`] whose entry `(i, j)` counts the labels learners `i`
//! and `j` have in common. The diagonal holds each learner's label count.

use std::collections::HashSet;
use std::io::{Read, Write};

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

const ID_HEADER: &str = "learner_id";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputFormat {
    #[default]
    Csv,
}

/// Binary N×D matrix of learners × content categories.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LearnerCategoryMatrix {
    learner_ids: Vec<String>,
    category_ids: Vec<String>,
    entries: Array2<u8>,
}

impl LearnerCategoryMatrix {
    pub fn new(
        learner_ids: Vec<String>,
        category_ids: Vec<String>,
        entries: Array2<u8>,
    ) -> Result<Self> {
        let (n, d) = entries.dim();
        if learner_ids.len() != n || category_ids.len() != d {
            return Err(Error::validation(format!(
                "matrix is {n}×{d} but {} learner ids and {} category ids were given",
                learner_ids.len(),
                category_ids.len()
            )));
        }
        ensure_unique(&learner_ids, "learner")?;
        ensure_unique(&category_ids, "category")?;
        if let Some(v) = entries.iter().find(|&&v| v > 1) {
            return Err(Error::validation(format!("non-binary entry {v}")));
        }
        for (row, id) in entries.axis_iter(Axis(0)).zip(&learner_ids) {
            if row.iter().all(|&v| v == 0) {
                return Err(Error::validation(format!(
                    "learner {id:?} has no category labels"
                )));
            }
        }
        Ok(Self {
            learner_ids,
            category_ids,
            entries,
        })
    }

    pub fn n_learners(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n_categories(&self) -> usize {
        self.entries.ncols()
    }

    pub fn learner_ids(&self) -> &[String] {
        &self.learner_ids
    }

    pub fn category_ids(&self) -> &[String] {
        &self.category_ids
    }

    pub fn entries(&self) -> &Array2<u8> {
        &self.entries
    }
}

fn ensure_unique(ids: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::validation(format!("duplicate {what} id {id:?}")));
        }
    }
    Ok(())
}

/// Reads a learner × category table. The first header must be `learner_id`;
/// every other header names a category and every cell is a literal `0` or `1`.
pub fn load_learner_category_matrix<R: Read>(
    source: R,
    format: InputFormat,
) -> Result<LearnerCategoryMatrix> {
    match format {
        InputFormat::Csv => read_category_csv(source),
    }
}

fn read_category_csv<R: Read>(source: R) -> Result<LearnerCategoryMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let category_ids = parse_id_header(&headers)?;
    let d = category_ids.len();

    let mut learner_ids = Vec::new();
    let mut cells = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        learner_ids.push(record[0].to_string());
        for field in record.iter().skip(1) {
            let v = match field {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(Error::validation(format!(
                        "line {line}: cell {other:?} is not 0 or 1"
                    )))
                }
            };
            cells.push(v);
        }
    }
    let entries = Array2::from_shape_vec((learner_ids.len(), d), cells)
        .map_err(|e| Error::validation(e.to_string()))?;
    LearnerCategoryMatrix::new(learner_ids, category_ids, entries)
}

fn parse_id_header(headers: &csv::StringRecord) -> Result<Vec<String>> {
    match headers.get(0) {
        Some(ID_HEADER) => Ok(headers.iter().skip(1).map(str::to_string).collect()),
        other => Err(Error::Parse {
            line: 1,
            message: format!("first header must be {ID_HEADER:?}, found {other:?}"),
        }),
    }
}

/// Symmetric N×N matrix of nonnegative integer similarity counts.
///
/// Matrices built by [`one_mode_projection`] additionally satisfy
/// `x_ij <= min(x_ii, x_jj)`; synthetic Poisson draws and zero-diagonal
/// variants need not, so that bound is checked separately by
/// [`SimilarityMatrix::check_projection_bounds`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimilarityMatrix {
    learner_ids: Vec<String>,
    counts: Array2<u32>,
}

impl SimilarityMatrix {
    pub fn new(learner_ids: Vec<String>, counts: Array2<u32>) -> Result<Self> {
        let (n, m) = counts.dim();
        if n != m {
            return Err(Error::validation(format!("similarity matrix is {n}×{m}")));
        }
        if learner_ids.len() != n {
            return Err(Error::validation(format!(
                "{} learner ids for a {n}×{n} matrix",
                learner_ids.len()
            )));
        }
        ensure_unique(&learner_ids, "learner")?;
        for i in 0..n {
            for j in (i + 1)..n {
                if counts[[i, j]] != counts[[j, i]] {
                    return Err(Error::validation(format!(
                        "not symmetric at ({i}, {j}): {} vs {}",
                        counts[[i, j]],
                        counts[[j, i]]
                    )));
                }
            }
        }
        Ok(Self {
            learner_ids,
            counts,
        })
    }

    /// Builds a matrix with generated ids `prefix0`, `prefix1`, ...
    pub fn with_generated_ids(prefix: &str, counts: Array2<u32>) -> Result<Self> {
        let ids = (0..counts.nrows()).map(|i| format!("{prefix}{i}")).collect();
        Self::new(ids, counts)
    }

    pub fn n(&self) -> usize {
        self.counts.nrows()
    }

    pub fn learner_ids(&self) -> &[String] {
        &self.learner_ids
    }

    pub fn counts(&self) -> &Array2<u32> {
        &self.counts
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.counts[[i, j]]
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.counts.mapv(f64::from)
    }

    /// Checks `x_ij <= min(x_ii, x_jj)` for all off-diagonal pairs.
    pub fn check_projection_bounds(&self) -> Result<()> {
        let n = self.n();
        for i in 0..n {
            for j in 0..n {
                if i != j && self.counts[[i, j]] > self.counts[[i, i]].min(self.counts[[j, j]]) {
                    return Err(Error::validation(format!(
                        "entry ({i}, {j}) exceeds a diagonal count"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Copy with every diagonal entry set to zero.
    pub fn zero_diagonal(&self) -> Self {
        let mut counts = self.counts.clone();
        counts.diag_mut().fill(0);
        Self {
            learner_ids: self.learner_ids.clone(),
            counts,
        }
    }

    /// Principal submatrix on `indices`, in the given order.
    pub fn principal_submatrix(&self, indices: &[usize]) -> Result<Self> {
        let n = self.n();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::contract(format!("index {bad} out of range for N={n}")));
        }
        let k = indices.len();
        let counts = Array2::from_shape_fn((k, k), |(a, b)| self.counts[[indices[a], indices[b]]]);
        let learner_ids = indices.iter().map(|&i| self.learner_ids[i].clone()).collect();
        Self::new(learner_ids, counts)
    }

    /// Writes the `learner_id,<id>,<id>,...` CSV layout.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(sink);
        let mut header = Vec::with_capacity(self.n() + 1);
        header.push(ID_HEADER);
        header.extend(self.learner_ids.iter().map(String::as_str));
        writer.write_record(&header)?;
        for (id, row) in self.learner_ids.iter().zip(self.counts.axis_iter(Axis(0))) {
            let mut record = Vec::with_capacity(self.n() + 1);
            record.push(id.clone());
            record.extend(row.iter().map(u32::to_string));
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }

    /// Reads the layout produced by [`SimilarityMatrix::write_csv`]. Column
    /// headers must repeat the row ids in the same order.
    pub fn read_csv<R: Read>(source: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(source);
        let headers = reader.headers()?.clone();
        let column_ids = parse_id_header(&headers)?;
        let n = column_ids.len();
        let mut row_ids = Vec::with_capacity(n);
        let mut cells = Vec::with_capacity(n * n);
        for record in reader.records() {
            let record = record?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            row_ids.push(record[0].to_string());
            for field in record.iter().skip(1) {
                let v: u32 = field.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("cell {field:?} is not a nonnegative integer"),
                })?;
                cells.push(v);
            }
        }
        if row_ids != column_ids {
            return Err(Error::validation(
                "row ids do not match column headers".to_string(),
            ));
        }
        let counts = Array2::from_shape_vec((n, n), cells)
            .map_err(|e| Error::validation(e.to_string()))?;
        Self::new(row_ids, counts)
    }
}

/// Weighted one-mode projection `x_ij = Σ_d c_id · c_jd`.
pub fn one_mode_projection(c: &LearnerCategoryMatrix) -> SimilarityMatrix {
    let entries = c.entries().mapv(u32::from);
    let counts = entries.dot(&entries.t());
    SimilarityMatrix {
        learner_ids: c.learner_ids().to_vec(),
        counts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn lcm(rows: Array2<u8>) -> LearnerCategoryMatrix {
        let n = rows.nrows();
        let d = rows.ncols();
        LearnerCategoryMatrix::new(
            (0..n).map(|i| format!("u{i}")).collect(),
            (0..d).map(|j| format!("dim:c{j}")).collect(),
            rows,
        )
        .unwrap()
    }

    #[test]
    fn loads_identity_csv() {
        let csv = "learner_id,learning:none,dialogue:elicit\nu1,1,0\nu2,0,1\n";
        let c = load_learner_category_matrix(csv.as_bytes(), InputFormat::Csv).unwrap();
        assert_eq!(c.n_learners(), 2);
        assert_eq!(c.n_categories(), 2);
        assert_eq!(c.entries(), &array![[1, 0], [0, 1]]);
        assert_eq!(c.category_ids()[1], "dialogue:elicit");
    }

    #[test]
    fn rejects_non_binary_cell() {
        let csv = "learner_id,a,b\nu1,1,2\n";
        let err = load_learner_category_matrix(csv.as_bytes(), InputFormat::Csv).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn rejects_duplicate_learner() {
        let csv = "learner_id,a,b\nu1,1,0\nu1,0,1\n";
        let err = load_learner_category_matrix(csv.as_bytes(), InputFormat::Csv).unwrap_err();
        assert!(err.to_string().contains("duplicate learner"), "{err}");
    }

    #[test]
    fn rejects_duplicate_category() {
        let csv = "learner_id,a,a\nu1,1,0\n";
        let err = load_learner_category_matrix(csv.as_bytes(), InputFormat::Csv).unwrap_err();
        assert!(err.to_string().contains("duplicate category"), "{err}");
    }

    #[test]
    fn rejects_empty_row_by_name() {
        let csv = "learner_id,a,b\nu1,1,0\nghost,0,0\n";
        let err = load_learner_category_matrix(csv.as_bytes(), InputFormat::Csv).unwrap_err();
        assert!(err.to_string().contains("ghost"), "{err}");
    }

    #[test]
    fn ragged_row_reports_line() {
        let csv = "learner_id,a,b\nu1,1,0\nu2,1\n";
        let err = load_learner_category_matrix(csv.as_bytes(), InputFormat::Csv).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn bad_first_header() {
        let csv = "id,a\nu1,1\n";
        let err = load_learner_category_matrix(csv.as_bytes(), InputFormat::Csv).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn projection_examples() {
        let x = one_mode_projection(&lcm(array![[1, 0], [0, 1]]));
        assert_eq!(x.counts(), &array![[1, 0], [0, 1]]);

        let x = one_mode_projection(&lcm(array![[1, 1, 0], [1, 0, 1], [0, 1, 1]]));
        assert_eq!(x.counts(), &array![[2, 1, 1], [1, 2, 1], [1, 1, 2]]);

        let x = one_mode_projection(&lcm(array![[1, 1, 1], [1, 1, 1]]));
        assert_eq!(x.counts(), &array![[3, 3], [3, 3]]);
        x.check_projection_bounds().unwrap();
    }

    #[test]
    fn similarity_rejects_asymmetry() {
        let err = SimilarityMatrix::with_generated_ids("s", array![[1, 2], [0, 1]]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn csv_round_trip() {
        let x = one_mode_projection(&lcm(array![[1, 1, 0], [1, 0, 1], [0, 1, 1]]));
        let mut buf = Vec::new();
        x.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("learner_id,u0,u1,u2\nu0,2,1,1\n"));
        assert_eq!(SimilarityMatrix::read_csv(buf.as_slice()).unwrap(), x);
    }

    #[test]
    fn zero_diagonal_and_submatrix() {
        let x = SimilarityMatrix::with_generated_ids("s", array![[3, 1, 0], [1, 2, 1], [0, 1, 4]])
            .unwrap();
        assert_eq!(x.zero_diagonal().counts().diag().sum(), 0);
        let sub = x.principal_submatrix(&[2, 0]).unwrap();
        assert_eq!(sub.counts(), &array![[4, 0], [0, 3]]);
        assert_eq!(sub.learner_ids(), &["s2".to_string(), "s0".to_string()]);
        assert!(x.principal_submatrix(&[3]).is_err());
    }
}
