//! Edge similarity: sampled Hausdorff distance, direction and length terms.
//!
//! All measures are dissimilarities: 0 means the edges coincide. Distances
//! stay in input units.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};
use crate::geometry::{sample_edge_points, Point3, Segment};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityWeights {
    /// Hausdorff distance weight.
    pub alpha: f64,
    /// Direction weight.
    pub beta: f64,
    /// Length ratio weight.
    pub gamma: f64,
    pub samples_per_edge: usize,
}

impl Default for SimilarityWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            samples_per_edge: 64,
        }
    }
}

impl SimilarityWeights {
    pub fn validate(&self) -> Result<()> {
        let ws = [self.alpha, self.beta, self.gamma];
        if ws.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid_arg(
                "similarity weights must be finite and non-negative",
            ));
        }
        if ws.iter().sum::<f64>() <= 0.0 {
            return Err(invalid_arg("similarity weights must not all be zero"));
        }
        if self.samples_per_edge < 2 {
            return Err(invalid_arg("samples_per_edge must be at least 2"));
        }
        Ok(())
    }
}

/// Dense row-major matrix of pairwise costs (predictions × ground truth).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(invalid_arg(format!(
                "{} values for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(invalid_arg("ragged cost rows"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }
}

fn coincident(e_i: &Segment, e_j: &Segment) -> bool {
    (e_i.a == e_j.a && e_i.b == e_j.b) || (e_i.a == e_j.b && e_i.b == e_j.a)
}

/// `|d_i . d_j| / (|d_i| |d_j|)`, exact for parallel vectors.
fn abs_cosine(di: Point3, dj: Point3) -> f64 {
    let denom = (di.norm_squared() * dj.norm_squared()).sqrt();
    (di.dot(dj).abs() / denom).min(1.0)
}

/// Largest distance from the `k` samples of `src` to the continuous `dst`,
/// together with the index of the first sample achieving it.
fn directed_hausdorff(src: &Segment, dst: &Segment, k: usize) -> Result<(f64, usize)> {
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    for (i, p) in sample_edge_points(src, k)?.into_iter().enumerate() {
        let d = dst.distance_to_point(p);
        if d > best {
            best = d;
            arg = i;
        }
    }
    Ok((best, arg))
}

/// Symmetric Hausdorff distance between two edges, sampling `k` points on
/// the source edge of each direction and measuring exact point-to-segment
/// distance to the other edge.
pub fn hausdorff_distance(e_i: &Segment, e_j: &Segment, k: usize) -> Result<f64> {
    e_i.validate()?;
    e_j.validate()?;
    if k < 2 {
        return Err(invalid_arg(format!(
            "need at least 2 samples per edge, got {k}"
        )));
    }
    if coincident(e_i, e_j) {
        return Ok(0.0);
    }
    let (h_ij, _) = directed_hausdorff(e_i, e_j, k)?;
    let (h_ji, _) = directed_hausdorff(e_j, e_i, k)?;
    Ok(h_ij.max(h_ji))
}

/// `1 - |cos θ|` between edge directions.
pub fn direction_similarity(e_i: &Segment, e_j: &Segment) -> Result<f64> {
    e_i.validate()?;
    e_j.validate()?;
    Ok(1.0 - abs_cosine(e_i.direction(), e_j.direction()))
}

/// `1 - min(len) / max(len)`.
pub fn length_similarity(e_i: &Segment, e_j: &Segment) -> Result<f64> {
    e_i.validate()?;
    e_j.validate()?;
    let (li, lj) = (e_i.length(), e_j.length());
    Ok(1.0 - li.min(lj) / li.max(lj))
}

pub fn edge_similarity(e_i: &Segment, e_j: &Segment, w: &SimilarityWeights) -> Result<f64> {
    let h = hausdorff_distance(e_i, e_j, w.samples_per_edge)?;
    let d = direction_similarity(e_i, e_j)?;
    let l = length_similarity(e_i, e_j)?;
    Ok(w.alpha * h + w.beta * d + w.gamma * l)
}

/// All-pairs edge similarity, predictions as rows.
pub fn similarity_matrix(
    preds: &[Segment],
    gts: &[Segment],
    w: &SimilarityWeights,
) -> Result<SimilarityMatrix> {
    if preds.is_empty() || gts.is_empty() {
        return Err(invalid_arg("similarity matrix needs non-empty edge lists"));
    }
    w.validate()?;
    let rows: Vec<Vec<f64>> = preds
        .par_iter()
        .map(|p| gts.iter().map(|g| edge_similarity(p, g, w)).collect())
        .collect::<Result<_>>()?;
    SimilarityMatrix::new(preds.len(), gts.len(), rows.concat())
}

/// Edge similarity and its (sub)gradient with respect to the endpoints of
/// `pred`; `gt` is held fixed.
///
/// The Hausdorff term differentiates through the sample that attains the
/// max (first one on ties) with the closest point on the other edge held
/// fixed. `|x|` and `min/max` use the zero subgradient at their kinks.
pub fn edge_similarity_grad(
    pred: &Segment,
    gt: &Segment,
    w: &SimilarityWeights,
) -> Result<(f64, Point3, Point3)> {
    pred.validate()?;
    gt.validate()?;
    let k = w.samples_per_edge;
    let mut ga = Point3::ORIGIN;
    let mut gb = Point3::ORIGIN;

    // Hausdorff.
    let (h_pg, i_pg) = directed_hausdorff(pred, gt, k)?;
    let (h_gp, i_gp) = directed_hausdorff(gt, pred, k)?;
    let h = if coincident(pred, gt) {
        0.0
    } else {
        h_pg.max(h_gp)
    };
    if h > 0.0 {
        let denom = (k - 1) as f64;
        if h_pg >= h_gp {
            let t = i_pg as f64 / denom;
            let x = pred.point_at(t);
            let unit = (x - gt.closest_point(x)) / h_pg;
            ga += unit * (w.alpha * (1.0 - t));
            gb += unit * (w.alpha * t);
        } else {
            let q = gt.point_at(i_gp as f64 / denom);
            let s = pred.closest_param(q);
            let unit = (pred.point_at(s) - q) / h_gp;
            ga += unit * (w.alpha * (1.0 - s));
            gb += unit * (w.alpha * s);
        }
    }

    // Direction: f = 1 - |d_p . d_g| / (|d_p| |d_g|), d_p = b - a.
    let (dp, dg) = (pred.direction(), gt.direction());
    let (np, ng) = (dp.norm(), dg.norm());
    let dot = dp.dot(dg);
    let dir = 1.0 - abs_cosine(dp, dg);
    let sgn = if dot > 0.0 {
        1.0
    } else if dot < 0.0 {
        -1.0
    } else {
        0.0
    };
    let d_dir = (dg / (np * ng) - dp * (dot / (np * np * np * ng))) * (-sgn * w.beta);
    ga += -d_dir;
    gb += d_dir;

    // Length ratio.
    let len = 1.0 - np.min(ng) / np.max(ng);
    let dl = if np < ng {
        -1.0 / ng
    } else if np > ng {
        ng / (np * np)
    } else {
        0.0
    };
    let d_len = dp * (w.gamma * dl / np);
    ga += -d_len;
    gb += d_len;

    Ok((w.alpha * h + w.beta * dir + w.gamma * len, ga, gb))
}
