//! Text formats: XYZ point clouds, OBJ line wireframes, JSON run config.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::assembly::DbscanParams;
use crate::error::{Error, Result};
use crate::fitter::FitConfig;
use crate::geometry::{Point3, PointCloud, Wireframe};
use crate::losses::LossWeights;
use crate::metrics::EvalConfig;
use crate::similarity::SimilarityWeights;
use crate::synthetic::RoofSpec;

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| parse_err(line, format!("not a number: {tok:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite value {tok:?}")));
    }
    Ok(v)
}

/// Whitespace-separated rows of `x y z` or `x y z r g b reflectance`.
/// Blank lines and `#` comments are skipped; all rows must share an arity.
pub fn parse_xyz(text: &str) -> Result<PointCloud> {
    let mut points = Vec::new();
    let mut attrs = Vec::new();
    let mut arity = None;
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals = line
            .split_whitespace()
            .map(|t| parse_f64(t, line_no))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != 3 && vals.len() != 7 {
            return Err(parse_err(
                line_no,
                format!("expected 3 or 7 fields, got {}", vals.len()),
            ));
        }
        match arity {
            None => arity = Some(vals.len()),
            Some(a) if a != vals.len() => {
                return Err(parse_err(
                    line_no,
                    format!("row has {} fields, earlier rows {a}", vals.len()),
                ))
            }
            _ => {}
        }
        points.push(Point3::new(vals[0], vals[1], vals[2]));
        if vals.len() == 7 {
            attrs.push([vals[3], vals[4], vals[5], vals[6]]);
        }
    }
    Ok(PointCloud {
        points,
        attrs: (arity == Some(7)).then_some(attrs),
    })
}

pub fn write_xyz(cloud: &PointCloud) -> String {
    let mut out = String::new();
    for (i, p) in cloud.points.iter().enumerate() {
        let _ = write!(out, "{:.6} {:.6} {:.6}", p.x, p.y, p.z);
        if let Some(a) = cloud.attrs.as_ref().and_then(|a| a.get(i)) {
            let _ = write!(out, " {} {} {} {}", a[0], a[1], a[2], a[3]);
        }
        out.push('\n');
    }
    out
}

fn parse_index(tok: &str, n_vertices: usize, line: usize) -> Result<usize> {
    // "i/t" style references keep only the vertex index.
    let head = tok.split('/').next().unwrap_or(tok);
    let idx: usize = head
        .parse()
        .map_err(|_| parse_err(line, format!("bad vertex index {tok:?}")))?;
    if idx == 0 || idx > n_vertices {
        return Err(parse_err(
            line,
            format!("vertex index {idx} out of range (1..={n_vertices})"),
        ));
    }
    Ok(idx - 1)
}

/// Reads `v x y z` vertices and `l i j ...` polylines (1-based). Other
/// directives are ignored. Edges are stored as `(min, max)` and repeats are
/// dropped.
pub fn parse_obj_wireframe(text: &str) -> Result<Wireframe> {
    let mut vertices = Vec::new();
    let mut pending = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let mut toks = raw.split_whitespace();
        match toks.next() {
            Some("v") => {
                let vals = toks
                    .map(|t| parse_f64(t, line_no))
                    .collect::<Result<Vec<_>>>()?;
                // Extra columns (w or colors) are tolerated.
                if vals.len() < 3 {
                    return Err(parse_err(line_no, "vertex needs 3 coordinates"));
                }
                vertices.push(Point3::new(vals[0], vals[1], vals[2]));
            }
            Some("l") => pending.push((line_no, toks.map(str::to_owned).collect::<Vec<_>>())),
            _ => {}
        }
    }

    let mut seen = HashSet::new();
    let mut edges = Vec::new();
    for (line_no, toks) in pending {
        if toks.len() < 2 {
            return Err(parse_err(line_no, "line element needs at least 2 vertices"));
        }
        let idx = toks
            .iter()
            .map(|t| parse_index(t, vertices.len(), line_no))
            .collect::<Result<Vec<_>>>()?;
        for w in idx.windows(2) {
            let (i, j) = (w[0], w[1]);
            if i == j {
                return Err(parse_err(line_no, format!("self-loop on vertex {}", i + 1)));
            }
            if seen.insert((i.min(j), i.max(j))) {
                edges.push((i.min(j), i.max(j)));
            }
        }
    }
    Ok(Wireframe { vertices, edges })
}

/// Vertices in index order with six decimals, then edges as sorted
/// `(min, max)` pairs.
pub fn write_obj_wireframe(wf: &Wireframe) -> String {
    let mut out = String::new();
    for v in &wf.vertices {
        let _ = writeln!(out, "v {:.6} {:.6} {:.6}", v.x, v.y, v.z);
    }
    for (i, j) in wf.canonical_edges() {
        let _ = writeln!(out, "l {} {}", i + 1, j + 1);
    }
    out
}

/// Filesystem locations used by a pipeline run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunPaths {
    pub cloud: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    pub pred_raw: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub pred: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

/// Every tunable of the pipeline in one JSON document. Missing sections
/// fall back to their defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub similarity: SimilarityWeights,
    pub loss: LossWeights,
    pub fit: FitConfig,
    pub dbscan: DbscanParams,
    pub eval: EvalConfig,
    pub roof: RoofSpec,
    pub paths: RunPaths,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| parse_err(e.line(), e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.similarity.validate()?;
        self.loss.validate()?;
        self.fit.validate()?;
        self.dbscan.validate()?;
        if !(self.eval.corner_match_threshold > 0.0) {
            return Err(Error::InvalidArgument(
                "corner_match_threshold must be positive".into(),
            ));
        }
        self.roof.validate()
    }
}
