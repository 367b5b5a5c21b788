//! Optimal bipartite edge matching and confidence targets.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};
use crate::geometry::Segment;
use crate::similarity::{similarity_matrix, SimilarityMatrix, SimilarityWeights};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub pred: usize,
    pub gt: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchResult {
    /// Sorted by prediction index.
    pub pairs: Vec<MatchPair>,
    pub unmatched_preds: Vec<usize>,
    pub unmatched_gts: Vec<usize>,
}

impl MatchResult {
    pub fn total_cost(&self) -> f64 {
        self.pairs.iter().map(|p| p.cost).sum()
    }

    pub fn num_positives(&self) -> usize {
        self.pairs.len()
    }

    /// `gt` index matched to each prediction, if any.
    pub fn gt_for_pred(&self, num_preds: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; num_preds];
        for p in &self.pairs {
            out[p.pred] = Some(p.gt);
        }
        out
    }
}

/// Square Hungarian solver with potentials. Returns the column of each row
/// plus the row and column duals (reduced costs `c - u - v` are >= 0).
fn hungarian_square(n: usize, cost: &[f64]) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    // 1-based arrays; index 0 is the virtual root.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut col_of = vec![0usize; n];
    for j in 1..=n {
        col_of[row_of[j] - 1] = j - 1;
    }
    (col_of, u[1..].to_vec(), v[1..].to_vec())
}

/// Perfect matching over the tight edges of an optimal dual solution, with
/// rows fixed greedily in index order to their smallest feasible column.
struct TightMatching<'a> {
    n: usize,
    tight: &'a [bool],
    col_of: Vec<usize>,
    row_of: Vec<usize>,
    fixed_row: Vec<bool>,
    fixed_col: Vec<bool>,
}

impl TightMatching<'_> {
    fn augment(&mut self, r: usize, target: usize, banned: usize, seen: &mut [bool]) -> bool {
        for c in 0..self.n {
            if c == banned || seen[c] || self.fixed_col[c] || !self.tight[r * self.n + c] {
                continue;
            }
            seen[c] = true;
            if c == target {
                self.col_of[r] = c;
                self.row_of[c] = r;
                return true;
            }
            let r2 = self.row_of[c];
            if !self.fixed_row[r2] && self.augment(r2, target, banned, seen) {
                self.col_of[r] = c;
                self.row_of[c] = r;
                return true;
            }
        }
        false
    }

    /// Fixes `row -> col` if a tight perfect matching containing it exists.
    fn try_fix(&mut self, row: usize, col: usize) -> bool {
        if self.fixed_col[col] || !self.tight[row * self.n + col] {
            return false;
        }
        let old_col = self.col_of[row];
        if old_col != col {
            let old_row = self.row_of[col];
            let (saved_cols, saved_rows) = (self.col_of.clone(), self.row_of.clone());
            self.col_of[row] = col;
            self.row_of[col] = row;
            self.fixed_row[row] = true;
            let mut seen = vec![false; self.n];
            if !self.augment(old_row, old_col, col, &mut seen) {
                self.col_of = saved_cols;
                self.row_of = saved_rows;
                self.fixed_row[row] = false;
                return false;
            }
        }
        self.fixed_row[row] = true;
        self.fixed_col[col] = true;
        true
    }
}

/// Minimum-cost injective assignment of the smaller side into the larger.
///
/// Among optimal assignments the one whose pair list (sorted by prediction
/// index) is lexicographically smallest is returned.
pub fn hungarian_assign(cost: &SimilarityMatrix) -> Result<MatchResult> {
    if cost.values.len() != cost.rows * cost.cols {
        return Err(invalid_arg("cost matrix shape mismatch"));
    }
    if let Some(v) = cost.values.iter().find(|v| !v.is_finite()) {
        return Err(invalid_arg(format!("non-finite cost {v}")));
    }
    let (rows, cols) = (cost.rows, cost.cols);
    if rows == 0 || cols == 0 {
        return Ok(MatchResult {
            pairs: Vec::new(),
            unmatched_preds: (0..rows).collect(),
            unmatched_gts: (0..cols).collect(),
        });
    }

    // Pad to square with zero-cost dummies; every full matching uses the same
    // number of dummies, so optima of the padded problem are optima here.
    let n = rows.max(cols);
    let mut padded = vec![0.0; n * n];
    for i in 0..rows {
        padded[i * n..i * n + cols].copy_from_slice(cost.row(i));
    }
    let (col_of, u, v) = hungarian_square(n, &padded);

    let scale = 1.0 + padded.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let tol = 1e-9 * scale;
    let mut tight = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            tight[i * n + j] = (padded[i * n + j] - u[i] - v[j]).abs() <= tol;
        }
        tight[i * n + col_of[i]] = true;
    }
    let mut row_of = vec![0usize; n];
    for (i, &j) in col_of.iter().enumerate() {
        row_of[j] = i;
    }
    let mut tm = TightMatching {
        n,
        tight: &tight,
        col_of,
        row_of,
        fixed_row: vec![false; n],
        fixed_col: vec![false; n],
    };
    for r in 0..rows {
        // Real columns first (in index order), then any dummy column.
        let fixed = (0..n).any(|c| tm.try_fix(r, c));
        debug_assert!(fixed, "current matching is always feasible");
    }

    let mut pairs = Vec::with_capacity(rows.min(cols));
    let mut gt_used = vec![false; cols];
    let mut unmatched_preds = Vec::new();
    for r in 0..rows {
        let c = tm.col_of[r];
        if c < cols {
            pairs.push(MatchPair {
                pred: r,
                gt: c,
                cost: cost.get(r, c),
            });
            gt_used[c] = true;
        } else {
            unmatched_preds.push(r);
        }
    }
    let unmatched_gts = (0..cols).filter(|&c| !gt_used[c]).collect();
    Ok(MatchResult {
        pairs,
        unmatched_preds,
        unmatched_gts,
    })
}

/// Similarity matrix and its optimal matching.
pub fn match_edges_with_matrix(
    preds: &[Segment],
    gts: &[Segment],
    w: &SimilarityWeights,
) -> Result<(MatchResult, SimilarityMatrix)> {
    let sims = similarity_matrix(preds, gts, w)?;
    let m = hungarian_assign(&sims)?;
    Ok((m, sims))
}

pub fn match_edges(
    preds: &[Segment],
    gts: &[Segment],
    w: &SimilarityWeights,
) -> Result<MatchResult> {
    Ok(match_edges_with_matrix(preds, gts, w)?.0)
}

/// Per-prediction confidence targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftLabels {
    pub g_con: Vec<f64>,
}

/// How confidence targets are derived from a matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// `1 - Edge_sim` for matched predictions closer than 1, else 0.
    #[default]
    Soft,
    /// 1 for every matched prediction, 0 otherwise.
    Hard,
}

fn check_match(
    num_preds: usize,
    num_gts: usize,
    m: &MatchResult,
    sims: &SimilarityMatrix,
) -> Result<()> {
    if sims.rows != num_preds || sims.cols != num_gts {
        return Err(invalid_arg(format!(
            "similarity matrix is {}x{}, expected {num_preds}x{num_gts}",
            sims.rows, sims.cols
        )));
    }
    for p in &m.pairs {
        if p.pred >= num_preds || p.gt >= num_gts {
            return Err(invalid_arg(format!(
                "match pair ({}, {}) out of range",
                p.pred, p.gt
            )));
        }
    }
    Ok(())
}

pub fn soft_confidence_labels(
    preds: &[Segment],
    gts: &[Segment],
    m: &MatchResult,
    sims: &SimilarityMatrix,
) -> Result<SoftLabels> {
    confidence_labels(LabelMode::Soft, preds.len(), gts.len(), m, sims)
}

pub fn confidence_labels(
    mode: LabelMode,
    num_preds: usize,
    num_gts: usize,
    m: &MatchResult,
    sims: &SimilarityMatrix,
) -> Result<SoftLabels> {
    check_match(num_preds, num_gts, m, sims)?;
    let mut g_con = vec![0.0; num_preds];
    for p in &m.pairs {
        g_con[p.pred] = match mode {
            LabelMode::Hard => 1.0,
            LabelMode::Soft => {
                let s = sims.get(p.pred, p.gt);
                if s < 1.0 {
                    1.0 - s
                } else {
                    0.0
                }
            }
        };
    }
    Ok(SoftLabels { g_con })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;

    fn mat(rows: &[&[f64]]) -> SimilarityMatrix {
        SimilarityMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn pairs(m: &MatchResult) -> Vec<(usize, usize)> {
        m.pairs.iter().map(|p| (p.pred, p.gt)).collect()
    }

    #[test]
    fn two_by_two() {
        let m = hungarian_assign(&mat(&[&[1.0, 2.0], &[3.0, 0.0]])).unwrap();
        assert_eq!(pairs(&m), vec![(0, 0), (1, 1)]);
        assert_eq!(m.total_cost(), 1.0);
    }

    #[test]
    fn zero_diagonal_gives_identity() {
        let m = hungarian_assign(&mat(&[
            &[0.0, 1.0, 2.0, 3.0],
            &[1.0, 0.0, 1.0, 2.0],
            &[2.0, 1.0, 0.0, 1.0],
            &[3.0, 2.0, 1.0, 0.0],
        ]))
        .unwrap();
        assert_eq!(pairs(&m), vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
    }

    #[test]
    fn rectangular_both_orientations() {
        let tall = hungarian_assign(&mat(&[&[5.0], &[1.0], &[3.0]])).unwrap();
        assert_eq!(pairs(&tall), vec![(1, 0)]);
        assert_eq!(tall.unmatched_preds, vec![0, 2]);
        assert!(tall.unmatched_gts.is_empty());

        let wide = hungarian_assign(&mat(&[&[5.0, 1.0, 3.0]])).unwrap();
        assert_eq!(pairs(&wide), vec![(0, 1)]);
        assert_eq!(wide.unmatched_gts, vec![0, 2]);
    }

    #[test]
    fn ties_break_lexicographically() {
        let all_equal = hungarian_assign(&mat(&[&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]])).unwrap();
        assert_eq!(pairs(&all_equal), vec![(0, 0), (1, 1)]);

        // Both (0,1),(1,0) and (0,0),(1,1) cost 2; the latter is smaller.
        let m = hungarian_assign(&mat(&[&[1.0, 1.0], &[1.0, 1.0]])).unwrap();
        assert_eq!(pairs(&m), vec![(0, 0), (1, 1)]);

        // Pred 0 can only be used at extra cost, so it stays unmatched.
        let m = hungarian_assign(&mat(&[&[2.0], &[1.0], &[1.0]])).unwrap();
        assert_eq!(pairs(&m), vec![(1, 0)]);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(hungarian_assign(&mat(&[&[f64::NAN]])).is_err());
        assert!(hungarian_assign(&mat(&[&[f64::INFINITY, 1.0]])).is_err());
    }

    fn seg(a: [f64; 3], b: [f64; 3]) -> Segment {
        Segment::new(Point3::from_array(a), Point3::from_array(b)).unwrap()
    }

    #[test]
    fn permuted_predictions_are_recovered() {
        let gts = vec![
            seg([0.0, 0.0, 0.0], [4.0, 0.0, 0.0]),
            seg([0.0, 0.0, 0.0], [0.0, 3.0, 1.0]),
            seg([4.0, 0.0, 0.0], [4.0, 3.0, 1.0]),
            seg([0.0, 3.0, 1.0], [4.0, 3.0, 1.0]),
        ];
        let perm = [2, 0, 3, 1];
        let preds: Vec<_> = perm.iter().map(|&i| gts[i].reversed()).collect();
        let m = match_edges(&preds, &gts, &SimilarityWeights::default()).unwrap();
        for p in &m.pairs {
            assert_eq!(p.gt, perm[p.pred]);
            assert_eq!(p.cost, 0.0);
        }
    }

    #[test]
    fn single_prediction_takes_argmin() {
        let w = SimilarityWeights::default();
        let pred = seg([0.0, 0.1, 0.0], [2.0, 0.1, 0.0]);
        let gts = vec![
            seg([0.0, 5.0, 0.0], [2.0, 5.0, 0.0]),
            seg([0.0, 0.0, 0.0], [2.0, 0.0, 0.0]),
            seg([0.0, 0.0, 0.0], [0.0, 2.0, 0.0]),
        ];
        let m = match_edges(&[pred], &gts, &w).unwrap();
        assert_eq!(pairs(&m), vec![(0, 1)]);
        assert_eq!(m.unmatched_gts, vec![0, 2]);
    }

    #[test]
    fn labels() {
        let sims = mat(&[&[0.3, 2.0], &[1.5, 2.0], &[0.0, 0.9]]);
        let m = MatchResult {
            pairs: vec![
                MatchPair {
                    pred: 0,
                    gt: 0,
                    cost: 0.3,
                },
                MatchPair {
                    pred: 1,
                    gt: 1,
                    cost: 2.0,
                },
            ],
            unmatched_preds: vec![2],
            unmatched_gts: vec![],
        };
        let soft = confidence_labels(LabelMode::Soft, 3, 2, &m, &sims).unwrap();
        assert!((soft.g_con[0] - 0.7).abs() < 1e-15);
        assert_eq!(soft.g_con[1..], [0.0, 0.0]);
        let hard = confidence_labels(LabelMode::Hard, 3, 2, &m, &sims).unwrap();
        assert_eq!(hard.g_con, vec![1.0, 1.0, 0.0]);

        let exact = MatchResult {
            pairs: vec![MatchPair {
                pred: 2,
                gt: 0,
                cost: 0.0,
            }],
            ..Default::default()
        };
        let sims = mat(&[&[1.0], &[1.0], &[0.0]]);
        assert_eq!(
            confidence_labels(LabelMode::Soft, 3, 1, &exact, &sims)
                .unwrap()
                .g_con[2],
            1.0
        );

        let bad = MatchResult {
            pairs: vec![MatchPair {
                pred: 7,
                gt: 0,
                cost: 0.0,
            }],
            ..Default::default()
        };
        assert!(confidence_labels(LabelMode::Soft, 3, 1, &bad, &sims).is_err());
    }
}
