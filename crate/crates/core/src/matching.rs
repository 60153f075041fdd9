//! Dense prototype ↔ query correspondence: inner-product scores,
//! Sinkhorn with an optional dustbin, mutual-argmax extraction and the NLL
//! matching diagnostic.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rgbd::FeatureCloud;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchingError {
    #[error("descriptor dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("score matrix has non-finite entries")]
    NonFiniteScores,
    #[error("index ({0}, {1}) out of range")]
    IndexOutOfRange(usize, usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SinkhornParams {
    pub iterations: usize,
    pub use_dustbin: bool,
    pub dustbin_score: f64,
    pub temperature: f64,
    pub match_threshold: f64,
}

impl Default for SinkhornParams {
    fn default() -> Self {
        SinkhornParams {
            iterations: 50,
            use_dustbin: true,
            dustbin_score: 0.0,
            temperature: 0.1,
            match_threshold: 0.01,
        }
    }
}

/// `M × N` prototype-by-query scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub scores: DMatrix<f64>,
}

/// Soft assignment. With a dustbin the matrix is `(M+1) × (N+1)`, the last
/// row and column being the dustbin.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub probs: DMatrix<f64>,
    pub dustbin: bool,
}

impl Assignment {
    pub fn real_rows(&self) -> usize {
        self.probs.nrows() - usize::from(self.dustbin)
    }

    pub fn real_cols(&self) -> usize {
        self.probs.ncols() - usize::from(self.dustbin)
    }

    /// Row and column sums the solver targets.
    pub fn target_marginals(&self) -> (DVector<f64>, DVector<f64>) {
        marginals(self.real_rows(), self.real_cols(), self.dustbin)
    }

    /// Largest absolute deviation of row/column sums from their targets.
    pub fn marginal_error(&self) -> f64 {
        let (a, b) = self.target_marginals();
        let rows = self.probs.column_sum();
        let cols = self.probs.row_sum().transpose();
        (rows - a).abs().max().max((cols - b).abs().max())
    }
}

fn marginals(m: usize, n: usize, dustbin: bool) -> (DVector<f64>, DVector<f64>) {
    if dustbin {
        let mut a = DVector::from_element(m + 1, 1.0);
        let mut b = DVector::from_element(n + 1, 1.0);
        a[m] = n as f64;
        b[n] = m as f64;
        (a, b)
    } else {
        // square: doubly stochastic; otherwise columns share the row mass
        (DVector::from_element(m, 1.0), DVector::from_element(n, m as f64 / n as f64))
    }
}

/// `scores[i][j] = ⟨P(i), Q(j)⟩ / τ`.
pub fn score_matrix(
    prototypes: &FeatureCloud,
    queries: &FeatureCloud,
    temperature: f64,
) -> Result<ScoreMatrix, MatchingError> {
    if prototypes.dim() != queries.dim() {
        return Err(MatchingError::DimensionMismatch(prototypes.dim(), queries.dim()));
    }
    if !(temperature > 0.0) {
        return Err(MatchingError::InvalidParameter(format!("temperature {temperature}")));
    }
    let mut scores = &prototypes.descriptors * queries.descriptors.transpose();
    if temperature != 1.0 {
        scores /= temperature;
    }
    Ok(ScoreMatrix { scores })
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Sinkhorn normalization: `iterations` rounds of row then column
/// scaling, in the exponential domain when it is representable and in the
/// log domain otherwise. The dustbin row and column (score `dustbin_score`)
/// absorb `N` and `M` units of mass respectively.
pub fn sinkhorn(scores: &ScoreMatrix, iterations: usize, dustbin: Option<f64>) -> Result<Assignment, MatchingError> {
    if iterations == 0 {
        return Err(MatchingError::InvalidParameter("iterations must be >= 1".into()));
    }
    let s = &scores.scores;
    if s.iter().any(|v| !v.is_finite()) || dustbin.is_some_and(|d| !d.is_finite()) {
        return Err(MatchingError::NonFiniteScores);
    }
    let (m, n) = s.shape();
    if m == 0 || n == 0 {
        return Err(MatchingError::InvalidParameter("empty score matrix".into()));
    }
    let z = match dustbin {
        Some(bin) => {
            let mut z = DMatrix::from_element(m + 1, n + 1, bin);
            z.view_mut((0, 0), (m, n)).copy_from(s);
            z
        }
        None => s.clone(),
    };
    let (a, b) = marginals(m, n, dustbin.is_some());
    let probs = scaling_sinkhorn(&z, &a, &b, iterations).unwrap_or_else(|| log_sinkhorn(&z, &a, &b, iterations));
    Ok(Assignment { probs, dustbin: dustbin.is_some() })
}

/// Matrix-scaling form on `exp(z − max z)`. Gives up (`None`) when the
/// kernel or the scalings leave the floating-point range.
fn scaling_sinkhorn(z: &DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>, iterations: usize) -> Option<DMatrix<f64>> {
    let top = z.max();
    let k = z.map(|v| (v - top).exp());
    let mut u = DVector::from_element(z.nrows(), 1.0);
    let mut v = DVector::from_element(z.ncols(), 1.0);
    for _ in 0..iterations {
        let kv = &k * &v;
        u = a.component_div(&kv);
        let ktu = k.tr_mul(&u);
        v = b.component_div(&ktu);
        if !(u.iter().chain(v.iter()).all(|x| x.is_finite() && *x > 0.0)) {
            return None;
        }
    }
    let mut p = k;
    for (j, mut col) in p.column_iter_mut().enumerate() {
        col.component_mul_assign(&u);
        col *= v[j];
    }
    p.iter().all(|x| x.is_finite()).then_some(p)
}

fn log_sinkhorn(z: &DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>, iterations: usize) -> DMatrix<f64> {
    let (rows, cols) = z.shape();
    let log_a: Vec<f64> = a.iter().map(|v| v.ln()).collect();
    let log_b: Vec<f64> = b.iter().map(|v| v.ln()).collect();
    let zt = z.transpose();
    let mut f = vec![0.0; rows];
    let mut g = vec![0.0; cols];
    for _ in 0..iterations {
        for i in 0..rows {
            let row = zt.column(i);
            f[i] = log_a[i] - log_sum_exp((0..cols).map(|j| row[j] + g[j]));
        }
        for j in 0..cols {
            let col = z.column(j);
            g[j] = log_b[j] - log_sum_exp((0..rows).map(|i| col[i] + f[i]));
        }
    }
    DMatrix::from_fn(rows, cols, |i, j| (z[(i, j)] + f[i] + g[j]).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub prototype: usize,
    pub query: usize,
    pub confidence: f64,
}

/// One-to-one matches, ordered by prototype index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchSet {
    pub matches: Vec<Match>,
}

impl MatchSet {
    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), MatchingError> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["i", "j", "confidence"]).map_err(|e| MatchingError::Csv(e.to_string()))?;
        for m in &self.matches {
            wtr.write_record([m.prototype.to_string(), m.query.to_string(), m.confidence.to_string()])
                .map_err(|e| MatchingError::Csv(e.to_string()))?;
        }
        wtr.flush().map_err(|e| MatchingError::Csv(e.to_string()))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, MatchingError> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut matches = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| MatchingError::Csv(e.to_string()))?;
            let field = |k: usize| rec.get(k).ok_or_else(|| MatchingError::Csv(format!("missing column {k}")));
            let parse_err = |e: &dyn std::fmt::Display| MatchingError::Csv(e.to_string());
            matches.push(Match {
                prototype: field(0)?.parse().map_err(|e| parse_err(&e))?,
                query: field(1)?.parse().map_err(|e| parse_err(&e))?,
                confidence: field(2)?.parse().map_err(|e| parse_err(&e))?,
            });
        }
        Ok(MatchSet { matches })
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Pairs `(i, j)` that are each other's argmax over the real cells, with
/// assignment value at least `confidence_threshold`. Ties resolve to the
/// lowest index; dustbin cells are never matched.
pub fn extract_matches(assignment: &Assignment, confidence_threshold: f64) -> MatchSet {
    let (m, n) = (assignment.real_rows(), assignment.real_cols());
    let p = &assignment.probs;
    let col_best: Vec<Option<usize>> = (0..n).map(|j| argmax((0..m).map(|i| p[(i, j)]))).collect();
    let mut matches = Vec::new();
    for i in 0..m {
        let Some(j) = argmax((0..n).map(|j| p[(i, j)])) else {
            continue;
        };
        let value = p[(i, j)];
        if col_best[j] == Some(i) && value >= confidence_threshold {
            matches.push(Match { prototype: i, query: j, confidence: value.clamp(0.0, 1.0) });
        }
    }
    MatchSet { matches }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NllLoss {
    pub value: f64,
    /// Some ground-truth cell was below 1e-12 and got clamped.
    pub clamped: bool,
}

/// `-(1/|gt|) Σ log assignment[i][j]`, probabilities clamped at 1e-12.
pub fn matching_nll_loss(assignment: &Assignment, gt_pairs: &[(usize, usize)]) -> Result<NllLoss, MatchingError> {
    let p = &assignment.probs;
    let mut sum = 0.0;
    let mut clamped = false;
    for &(i, j) in gt_pairs {
        if i >= p.nrows() || j >= p.ncols() {
            return Err(MatchingError::IndexOutOfRange(i, j));
        }
        let v = p[(i, j)];
        if v < 1e-12 {
            clamped = true;
        }
        sum -= v.max(1e-12).ln();
    }
    let value = if gt_pairs.is_empty() { 0.0 } else { (sum / gt_pairs.len() as f64).max(0.0) };
    Ok(NllLoss { value, clamped })
}
