//! Set-prediction losses over matched edges and their analytic gradients.
//!
//! Geometric terms (midpoint, component, quadrant, similarity) average over
//! the matched ("positive") predictions. The confidence term is a soft-target
//! binary cross-entropy averaged over every prediction. Gradients treat the
//! matching and the confidence targets as constants.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};
use crate::geometry::{quadrant_signs, ParamEdge, Point3, Segment, NUM_QUADRANTS};
use crate::matching::{
    confidence_labels, match_edges_with_matrix, LabelMode, MatchResult, SoftLabels,
};
use crate::similarity::{edge_similarity, edge_similarity_grad, SimilarityWeights};

/// Clamp applied to confidences before taking logs.
pub const CONFIDENCE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_mid: f64,
    pub lambda_comp: f64,
    pub lambda_con: f64,
    pub lambda_quad: f64,
    pub lambda_sim: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_mid: 1.0,
            lambda_comp: 1.0,
            lambda_con: 1.0,
            lambda_quad: 1.0,
            lambda_sim: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda_mid,
            self.lambda_comp,
            self.lambda_con,
            self.lambda_quad,
            self.lambda_sim,
        ];
        if all.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(invalid_arg("loss weights must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub mid: f64,
    pub comp: f64,
    pub con: f64,
    pub quad: f64,
    pub sim: f64,
    pub total: f64,
    pub n_pos: usize,
    /// Set when nothing was matched; the positive-averaged terms are then 0.
    pub no_positives: bool,
}

/// Predicted edges plus raw quadrant scores.
///
/// `edges[i].quadrant` is the class used to decode geometry; the logits are
/// what the quadrant loss trains.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PredictionSet {
    pub edges: Vec<ParamEdge>,
    pub quadrant_logits: Vec<[f64; NUM_QUADRANTS]>,
}

impl PredictionSet {
    /// Uses a one-hot-ish logit vector matching each edge's quadrant.
    pub fn from_edges(edges: Vec<ParamEdge>) -> Self {
        let quadrant_logits = edges
            .iter()
            .map(|e| {
                let mut l = [0.0; NUM_QUADRANTS];
                if let Some(v) = l.get_mut(e.quadrant as usize) {
                    *v = 1.0;
                }
                l
            })
            .collect();
        Self {
            edges,
            quadrant_logits,
        }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.quadrant_logits.len() != self.edges.len() {
            return Err(invalid_arg(format!(
                "{} logit rows for {} edges",
                self.quadrant_logits.len(),
                self.edges.len()
            )));
        }
        if self
            .quadrant_logits
            .iter()
            .flatten()
            .any(|l| !l.is_finite())
        {
            return Err(invalid_arg("non-finite quadrant logit"));
        }
        if let Some(e) = self
            .edges
            .iter()
            .find(|e| !(0.0..=1.0).contains(&e.confidence))
        {
            return Err(invalid_arg(format!(
                "confidence {} outside [0, 1]",
                e.confidence
            )));
        }
        Ok(())
    }

    pub fn segments(&self) -> Result<Vec<Segment>> {
        self.edges.iter().map(ParamEdge::to_segment).collect()
    }

    /// Keeps the listed edges, in the given order.
    pub fn select(&self, idx: &[usize]) -> PredictionSet {
        PredictionSet {
            edges: idx.iter().map(|&i| self.edges[i]).collect(),
            quadrant_logits: idx.iter().map(|&i| self.quadrant_logits[i]).collect(),
        }
    }
}

/// Gradient of the loss for one predicted edge.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EdgeGrad {
    pub midpoint: [f64; 3],
    pub comp: [f64; 3],
    /// With respect to the unconstrained logit of the confidence.
    pub confidence_logit: f64,
    pub quadrant_logits: [f64; NUM_QUADRANTS],
}

impl EdgeGrad {
    pub fn norm_squared(&self) -> f64 {
        self.midpoint
            .iter()
            .chain(&self.comp)
            .chain(&self.quadrant_logits)
            .map(|g| g * g)
            .sum::<f64>()
            + self.confidence_logit * self.confidence_logit
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    let p = p.clamp(CONFIDENCE_EPS, 1.0 - CONFIDENCE_EPS);
    (p / (1.0 - p)).ln()
}

fn log_softmax(logits: &[f64; NUM_QUADRANTS]) -> [f64; NUM_QUADRANTS] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.map(|l| l - lse)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn gt_params(gts: &[Segment]) -> Result<Vec<ParamEdge>> {
    gts.iter().map(ParamEdge::from_segment).collect()
}

fn check_pairs(m: &MatchResult, num_preds: usize, num_gts: usize) -> Result<()> {
    for p in &m.pairs {
        if p.pred >= num_preds || p.gt >= num_gts {
            return Err(invalid_arg(format!(
                "match pair ({}, {}) out of range for {num_preds} predictions, {num_gts} targets",
                p.pred, p.gt
            )));
        }
    }
    Ok(())
}

fn positive_mean(
    m: &MatchResult,
    mut per_pair: impl FnMut(usize, usize) -> Result<f64>,
) -> Result<f64> {
    if m.pairs.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for p in &m.pairs {
        sum += per_pair(p.pred, p.gt)?;
    }
    Ok(sum / m.pairs.len() as f64)
}

/// Mean ℓ1 midpoint error over matched pairs.
pub fn loss_midpoint(preds: &PredictionSet, gts: &[Segment], m: &MatchResult) -> Result<f64> {
    check_pairs(m, preds.len(), gts.len())?;
    positive_mean(m, |i, j| {
        let d = preds.edges[i].midpoint - gts[j].midpoint();
        Ok(d.x.abs() + d.y.abs() + d.z.abs())
    })
}

/// Mean ℓ1 error of the absolute components over matched pairs.
pub fn loss_component(preds: &PredictionSet, gts: &[Segment], m: &MatchResult) -> Result<f64> {
    check_pairs(m, preds.len(), gts.len())?;
    positive_mean(m, |i, j| {
        let g = (gts[j].a - gts[j].b).abs().to_array();
        let p = preds.edges[i].comp;
        Ok((0..3).map(|k| (p[k] - g[k]).abs()).sum())
    })
}

/// Binary cross-entropy with soft targets, averaged over all predictions.
pub fn loss_confidence(preds: &PredictionSet, labels: &SoftLabels) -> Result<f64> {
    if labels.g_con.len() != preds.len() {
        return Err(invalid_arg(format!(
            "{} labels for {} predictions",
            labels.g_con.len(),
            preds.len()
        )));
    }
    if preds.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = preds
        .edges
        .iter()
        .zip(&labels.g_con)
        .map(|(e, &g)| {
            let p = e.confidence.clamp(CONFIDENCE_EPS, 1.0 - CONFIDENCE_EPS);
            -(g * p.ln() + (1.0 - g) * (1.0 - p).ln())
        })
        .sum();
    Ok(sum / preds.len() as f64)
}

/// Mean 4-way cross-entropy of the quadrant logits against the target class.
pub fn loss_quadrant(preds: &PredictionSet, gts: &[Segment], m: &MatchResult) -> Result<f64> {
    check_pairs(m, preds.len(), gts.len())?;
    if preds.quadrant_logits.len() != preds.len() {
        return Err(invalid_arg("quadrant logits length mismatch"));
    }
    positive_mean(m, |i, j| {
        let q = ParamEdge::from_segment(&gts[j])?.quadrant as usize;
        Ok(-log_softmax(&preds.quadrant_logits[i])[q])
    })
}

/// Mean edge similarity over matched pairs, recomputed on current geometry.
pub fn loss_similarity(
    pred_segments: &[Segment],
    gts: &[Segment],
    m: &MatchResult,
    w: &SimilarityWeights,
) -> Result<f64> {
    check_pairs(m, pred_segments.len(), gts.len())?;
    positive_mean(m, |i, j| edge_similarity(&pred_segments[i], &gts[j], w))
}

/// All five terms for a given matching and confidence targets.
pub fn loss_with_labels(
    preds: &PredictionSet,
    gts: &[Segment],
    m: &MatchResult,
    labels: &SoftLabels,
    w: &SimilarityWeights,
    lw: &LossWeights,
) -> Result<LossBreakdown> {
    preds.validate()?;
    let segs = preds.segments()?;
    let mid = loss_midpoint(preds, gts, m)?;
    let comp = loss_component(preds, gts, m)?;
    let con = loss_confidence(preds, labels)?;
    let quad = loss_quadrant(preds, gts, m)?;
    let sim = loss_similarity(&segs, gts, m, w)?;
    let total = lw.lambda_mid * mid
        + lw.lambda_comp * comp
        + lw.lambda_con * con
        + lw.lambda_quad * quad
        + lw.lambda_sim * sim;
    Ok(LossBreakdown {
        mid,
        comp,
        con,
        quad,
        sim,
        total,
        n_pos: m.pairs.len(),
        no_positives: m.pairs.is_empty(),
    })
}

/// Matches predictions to `gts`, derives targets with `mode`, and returns
/// the matching with its targets.
pub fn assign_targets(
    preds: &PredictionSet,
    gts: &[Segment],
    w: &SimilarityWeights,
    mode: LabelMode,
) -> Result<(MatchResult, SoftLabels)> {
    preds.validate()?;
    let segs = preds.segments()?;
    let (m, sims) = match_edges_with_matrix(&segs, gts, w)?;
    let labels = confidence_labels(mode, preds.len(), gts.len(), &m, &sims)?;
    Ok((m, labels))
}

/// Matches, builds soft confidence targets and evaluates the weighted loss.
pub fn total_loss(
    preds: &PredictionSet,
    gts: &[Segment],
    w: &SimilarityWeights,
    lw: &LossWeights,
) -> Result<LossBreakdown> {
    lw.validate()?;
    let (m, labels) = assign_targets(preds, gts, w, LabelMode::Soft)?;
    loss_with_labels(preds, gts, &m, &labels, w, lw)
}

/// Gradient of [`loss_with_labels`] with the matching and targets frozen.
pub fn grad_with_labels(
    preds: &PredictionSet,
    gts: &[Segment],
    m: &MatchResult,
    labels: &SoftLabels,
    w: &SimilarityWeights,
    lw: &LossWeights,
) -> Result<(LossBreakdown, Vec<EdgeGrad>)> {
    let loss = loss_with_labels(preds, gts, m, labels, w, lw)?;
    let segs = preds.segments()?;
    let gparams = gt_params(gts)?;
    let mut grads = vec![EdgeGrad::default(); preds.len()];

    let n_all = preds.len() as f64;
    for ((g, e), &target) in grads.iter_mut().zip(&preds.edges).zip(&labels.g_con) {
        let p = e.confidence;
        if p > CONFIDENCE_EPS && p < 1.0 - CONFIDENCE_EPS {
            g.confidence_logit = lw.lambda_con * (p - target) / n_all;
        }
    }

    if m.pairs.is_empty() {
        return Ok((loss, grads));
    }
    let inv_pos = 1.0 / m.pairs.len() as f64;
    for pair in &m.pairs {
        let (i, j) = (pair.pred, pair.gt);
        let e = &preds.edges[i];
        let gp = &gparams[j];
        let g = &mut grads[i];

        let dm = (e.midpoint - gp.midpoint).to_array();
        for k in 0..3 {
            g.midpoint[k] += lw.lambda_mid * inv_pos * sign(dm[k]);
            g.comp[k] += lw.lambda_comp * inv_pos * sign(e.comp[k] - gp.comp[k]);
        }

        let logp = log_softmax(&preds.quadrant_logits[i]);
        for (q, lp) in logp.iter().enumerate() {
            let onehot = if q == gp.quadrant as usize { 1.0 } else { 0.0 };
            g.quadrant_logits[q] += lw.lambda_quad * inv_pos * (lp.exp() - onehot);
        }

        if lw.lambda_sim != 0.0 {
            // a = m + u⊙c/2, b = m - u⊙c/2
            let (_, ga, gb) = edge_similarity_grad(&segs[i], &gts[j], w)?;
            let scale = lw.lambda_sim * inv_pos;
            let u = quadrant_signs(e.quadrant);
            let d_mid = (ga + gb) * scale;
            let d_comp = u.hadamard(ga - gb) * (0.5 * scale);
            add3(&mut g.midpoint, d_mid);
            add3(&mut g.comp, d_comp);
        }
    }
    Ok((loss, grads))
}

fn add3(dst: &mut [f64; 3], v: Point3) {
    dst[0] += v.x;
    dst[1] += v.y;
    dst[2] += v.z;
}

/// Loss and gradient with a fresh soft-label matching held fixed.
pub fn grad_total_loss(
    preds: &PredictionSet,
    gts: &[Segment],
    w: &SimilarityWeights,
    lw: &LossWeights,
) -> Result<(LossBreakdown, Vec<EdgeGrad>)> {
    lw.validate()?;
    let (m, labels) = assign_targets(preds, gts, w, LabelMode::Soft)?;
    grad_with_labels(preds, gts, &m, &labels, w, lw)
}
