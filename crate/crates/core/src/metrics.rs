//! Corner and edge precision/recall against a reference wireframe.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};
use crate::geometry::Wireframe;
use crate::matching::hungarian_assign;
use crate::similarity::SimilarityMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Corners farther apart than this (meters) never count as matched.
    pub corner_match_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            corner_match_threshold: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    /// Average corner offset over matched corners, meters.
    pub aco: f64,
    pub cp: f64,
    pub cr: f64,
    pub cf1: f64,
    pub ep: f64,
    pub er: f64,
    pub ef1: f64,
    pub matched_corners: usize,
    pub matched_edges: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CornerMatch {
    pub pred: usize,
    pub gt: usize,
    pub distance: f64,
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Minimum-total-distance corner assignment, keeping pairs within the
/// threshold.
pub fn match_corners(
    pred: &Wireframe,
    gt: &Wireframe,
    cfg: &EvalConfig,
) -> Result<Vec<CornerMatch>> {
    if !(cfg.corner_match_threshold > 0.0) {
        return Err(invalid_arg("corner match threshold must be positive"));
    }
    if pred.vertices.is_empty() || gt.vertices.is_empty() {
        return Ok(Vec::new());
    }
    let values = pred
        .vertices
        .iter()
        .flat_map(|p| gt.vertices.iter().map(move |g| p.distance(*g)))
        .collect();
    let cost = SimilarityMatrix::new(pred.vertices.len(), gt.vertices.len(), values)?;
    Ok(hungarian_assign(&cost)?
        .pairs
        .into_iter()
        .filter(|p| p.cost <= cfg.corner_match_threshold)
        .map(|p| CornerMatch {
            pred: p.pred,
            gt: p.gt,
            distance: p.cost,
        })
        .collect())
}

/// Corner metrics from the thresholded assignment; an edge counts when both
/// of its corners map onto the two corners of one reference edge.
pub fn evaluate(pred: &Wireframe, gt: &Wireframe, cfg: &EvalConfig) -> Result<EvalReport> {
    pred.validate()?;
    gt.validate()?;
    let corners = match_corners(pred, gt, cfg)?;

    let matched_corners = corners.len();
    let aco = if corners.is_empty() {
        0.0
    } else {
        corners.iter().map(|c| c.distance).sum::<f64>() / corners.len() as f64
    };

    let mut to_gt = vec![None; pred.vertices.len()];
    for c in &corners {
        to_gt[c.pred] = Some(c.gt);
    }
    let gt_edges: HashSet<(usize, usize)> = gt
        .edges
        .iter()
        .map(|&(i, j)| (i.min(j), i.max(j)))
        .collect();
    let matched_edges = pred
        .edges
        .iter()
        .filter(|&&(i, j)| match (to_gt[i], to_gt[j]) {
            (Some(a), Some(b)) => gt_edges.contains(&(a.min(b), a.max(b))),
            _ => false,
        })
        .count();

    let cp = ratio(matched_corners, pred.vertices.len());
    let cr = ratio(matched_corners, gt.vertices.len());
    let ep = ratio(matched_edges, pred.edges.len());
    let er = ratio(matched_edges, gt.edges.len());
    Ok(EvalReport {
        aco,
        cp,
        cr,
        cf1: f1(cp, cr),
        ep,
        er,
        ef1: f1(ep, er),
        matched_corners,
        matched_edges,
    })
}
