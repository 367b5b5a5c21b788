//! Direct optimization of query edges against a ground-truth wireframe,
//! followed by confidence filtering and edge non-maximum suppression.
//!
//! This replaces a trained regressor: queries start at farthest-point
//! samples of the cloud and are moved by plain gradient descent on the
//! matched-set loss. The matching (and the confidence targets derived from
//! it) is refreshed every `rematch_every` steps and held fixed in between.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_wireframe, DbscanParams};
use crate::error::{invalid_arg, Result};
use crate::geometry::{
    farthest_point_sampling, ParamEdge, PointCloud, Segment, Wireframe, NUM_QUADRANTS,
};
use crate::losses::{
    assign_targets, grad_with_labels, logit, loss_with_labels, sigmoid, LossWeights, PredictionSet,
};
use crate::matching::LabelMode;
use crate::similarity::{edge_similarity, SimilarityWeights};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub num_queries: usize,
    pub iterations: usize,
    pub step_size: f64,
    pub rematch_every: usize,
    pub conf_threshold: f64,
    pub nms_threshold: f64,
    /// Length of the initial query edges, meters.
    pub init_length: f64,
    pub seed: u64,
    #[serde(default)]
    pub label_mode: LabelMode,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            num_queries: 128,
            iterations: 2000,
            step_size: 0.3,
            rematch_every: 1,
            conf_threshold: 0.7,
            nms_threshold: 0.5,
            init_length: 1.0,
            seed: 0,
            label_mode: LabelMode::Soft,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_queries == 0 {
            return Err(invalid_arg("num_queries must be at least 1"));
        }
        if self.iterations == 0 {
            return Err(invalid_arg("iterations must be at least 1"));
        }
        if self.rematch_every == 0 {
            return Err(invalid_arg("rematch_every must be at least 1"));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(invalid_arg("step_size must be positive"));
        }
        if !(0.0..=1.0).contains(&self.conf_threshold) {
            return Err(invalid_arg("conf_threshold must lie in [0, 1]"));
        }
        if !(self.nms_threshold > 0.0) {
            return Err(invalid_arg("nms_threshold must be positive"));
        }
        if !(self.init_length > 0.0 && self.init_length.is_finite()) {
            return Err(invalid_arg("init_length must be positive"));
        }
        Ok(())
    }

    /// Step size after halving every quarter of the run.
    pub fn step_at(&self, iteration: usize) -> f64 {
        let quarter = self.iterations / 4;
        if quarter == 0 {
            return self.step_size;
        }
        self.step_size * 0.5f64.powi((iteration / quarter).min(3) as i32)
    }
}

/// `M` x-aligned query edges centered on farthest-point samples.
pub fn init_queries(cloud: &PointCloud, cfg: &FitConfig) -> Result<PredictionSet> {
    cfg.validate()?;
    if cloud.len() < cfg.num_queries {
        return Err(invalid_arg(format!(
            "cloud has {} points, need at least {} queries",
            cloud.len(),
            cfg.num_queries
        )));
    }
    let centers = farthest_point_sampling(cloud, cfg.num_queries)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, 0.1 * cfg.init_length).map_err(|e| invalid_arg(e.to_string()))?;
    let edges = centers
        .into_iter()
        .map(|midpoint| {
            let mut comp = [cfg.init_length, 0.0, 0.0];
            for c in &mut comp {
                *c = (*c + noise.sample(&mut rng)).abs();
            }
            ParamEdge {
                midpoint,
                comp,
                quadrant: 0,
                confidence: 0.5,
            }
        })
        .collect::<Vec<_>>();
    let quadrant_logits = vec![[0.0; NUM_QUADRANTS]; edges.len()];
    Ok(PredictionSet {
        edges,
        quadrant_logits,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutput {
    pub predictions: PredictionSet,
    /// Total loss before each step, then once more after the last step.
    pub trace: Vec<f64>,
}

fn argmax(logits: &[f64; NUM_QUADRANTS]) -> u8 {
    let mut best = 0;
    for (i, &l) in logits.iter().enumerate() {
        if l > logits[best] {
            best = i;
        }
    }
    best as u8
}

/// Runs gradient descent starting from `initial`.
pub fn fit_from(
    initial: PredictionSet,
    gts: &[Segment],
    cfg: &FitConfig,
    w: &SimilarityWeights,
    lw: &LossWeights,
) -> Result<FitOutput> {
    cfg.validate()?;
    w.validate()?;
    lw.validate()?;
    initial.validate()?;
    if gts.is_empty() {
        return Err(invalid_arg("ground truth has no edges"));
    }
    if initial.len() < gts.len() {
        return Err(invalid_arg(format!(
            "{} queries cannot cover {} ground-truth edges",
            initial.len(),
            gts.len()
        )));
    }

    let mut preds = initial;
    let mut conf_logits: Vec<f64> = preds.edges.iter().map(|e| logit(e.confidence)).collect();
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    let mut targets = None;

    for it in 0..cfg.iterations {
        if it % cfg.rematch_every == 0 || targets.is_none() {
            targets = Some(assign_targets(&preds, gts, w, cfg.label_mode)?);
        }
        let (m, labels) = targets.as_ref().expect("targets assigned above");
        let (loss, grads) = grad_with_labels(&preds, gts, m, labels, w, lw)?;
        trace.push(loss.total);

        let step = cfg.step_at(it);
        for (i, g) in grads.iter().enumerate() {
            let e = &mut preds.edges[i];
            let mut mid = e.midpoint.to_array();
            let mut comp = e.comp;
            for k in 0..3 {
                mid[k] -= step * g.midpoint[k];
                comp[k] = (comp[k] - step * g.comp[k]).max(0.0);
            }
            e.midpoint = crate::geometry::Point3::from_array(mid);
            if comp.iter().any(|&c| c > 0.0) {
                e.comp = comp;
            }
            let logits = &mut preds.quadrant_logits[i];
            for (l, d) in logits.iter_mut().zip(&g.quadrant_logits) {
                *l -= step * d;
            }
            e.quadrant = argmax(logits);
            conf_logits[i] -= step * g.confidence_logit;
            e.confidence = sigmoid(conf_logits[i]);
        }
    }

    let (m, labels) = assign_targets(&preds, gts, w, cfg.label_mode)?;
    trace.push(loss_with_labels(&preds, gts, &m, &labels, w, lw)?.total);
    Ok(FitOutput {
        predictions: preds,
        trace,
    })
}

/// Initializes queries from `cloud` and fits them to the edges of `gt`.
pub fn fit(
    cloud: &PointCloud,
    gt: &Wireframe,
    cfg: &FitConfig,
    w: &SimilarityWeights,
    lw: &LossWeights,
) -> Result<FitOutput> {
    gt.validate()?;
    let gts = gt.segments()?;
    if gts.is_empty() {
        return Err(invalid_arg("ground truth has no edges"));
    }
    if cfg.num_queries < gts.len() {
        return Err(invalid_arg(format!(
            "{} queries cannot cover {} ground-truth edges",
            cfg.num_queries,
            gts.len()
        )));
    }
    let initial = init_queries(cloud, cfg)?;
    fit_from(initial, &gts, cfg, w, lw)
}

/// Keeps edges with confidence at or above `threshold`, in order.
pub fn filter_by_confidence(preds: &PredictionSet, threshold: f64) -> PredictionSet {
    let keep: Vec<usize> = (0..preds.len())
        .filter(|&i| preds.edges[i].confidence >= threshold)
        .collect();
    preds.select(&keep)
}

/// Greedy edge NMS.
///
/// Edges are visited by descending confidence (ties by index) and kept only
/// if their edge similarity to every edge kept so far exceeds `tau`. The
/// output is ordered by descending confidence.
pub fn edge_nms(preds: &PredictionSet, w: &SimilarityWeights, tau: f64) -> Result<PredictionSet> {
    if !(tau > 0.0) {
        return Err(invalid_arg("nms threshold must be positive"));
    }
    let segs = preds.segments()?;
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        preds.edges[b]
            .confidence
            .total_cmp(&preds.edges[a].confidence)
    });

    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let mut keep = true;
        for &k in &kept {
            if edge_similarity(&segs[i], &segs[k], w)? <= tau {
                keep = false;
                break;
            }
        }
        if keep {
            kept.push(i);
        }
    }
    Ok(preds.select(&kept))
}

/// Confidence filter, edge NMS and corner merging in one go.
pub fn reconstruct(
    preds: &PredictionSet,
    conf_threshold: f64,
    nms_threshold: f64,
    w: &SimilarityWeights,
    dbscan: &DbscanParams,
) -> Result<Wireframe> {
    let confident = filter_by_confidence(preds, conf_threshold);
    let survivors = edge_nms(&confident, w, nms_threshold)?;
    assemble_wireframe(&survivors.segments()?, dbscan)
}
