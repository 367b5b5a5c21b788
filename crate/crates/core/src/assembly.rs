//! Turns a loose set of predicted segments into a connected wireframe by
//! merging nearby endpoints with DBSCAN.

use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};
use crate::geometry::{Point3, Segment, Wireframe};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    /// Neighborhood radius in meters (inclusive).
    pub eps: f64,
    /// Neighbors, the point itself included, needed for a core point.
    pub min_points: usize,
}

impl Default for DbscanParams {
    fn default() -> Self {
        Self {
            eps: 0.05,
            min_points: 2,
        }
    }
}

impl DbscanParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(invalid_arg(format!(
                "dbscan eps must be positive, got {}",
                self.eps
            )));
        }
        if self.min_points == 0 {
            return Err(invalid_arg("dbscan min_points must be at least 1"));
        }
        Ok(())
    }
}

/// Cluster label per point; `None` marks noise.
///
/// Points are visited in index order, and a border point reachable from
/// several clusters joins whichever reaches it first.
pub fn dbscan_cluster(points: &[Point3], params: &DbscanParams) -> Result<Vec<Option<usize>>> {
    params.validate()?;
    let n = points.len();
    let eps2 = params.eps * params.eps;
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| points[i].distance_squared(points[j]) <= eps2)
                .collect()
        })
        .collect();
    let is_core: Vec<bool> = neighbors
        .iter()
        .map(|nb| nb.len() >= params.min_points)
        .collect();

    let mut labels = vec![None; n];
    let mut next_label = 0;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if labels[start].is_some() || !is_core[start] {
            continue;
        }
        let label = next_label;
        next_label += 1;
        labels[start] = Some(label);
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbors[p] {
                if labels[q].is_none() {
                    labels[q] = Some(label);
                    if is_core[q] {
                        queue.push_back(q);
                    }
                }
            }
        }
    }
    Ok(labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AssemblyStats {
    pub clusters: usize,
    /// Edges whose endpoints merged into one vertex.
    pub collapsed_edges: usize,
    pub duplicate_edges: usize,
}

fn key(p: Point3) -> [u64; 3] {
    // +0.0 and -0.0 are the same vertex.
    p.to_array().map(|c| (c + 0.0).to_bits())
}

pub fn assemble_wireframe(segments: &[Segment], params: &DbscanParams) -> Result<Wireframe> {
    Ok(assemble_wireframe_with_stats(segments, params)?.0)
}

/// Merges clustered endpoints into their cluster centroid and rebuilds the
/// edge list. No edge is ever added; edges that collapse or repeat are
/// dropped.
pub fn assemble_wireframe_with_stats(
    segments: &[Segment],
    params: &DbscanParams,
) -> Result<(Wireframe, AssemblyStats)> {
    params.validate()?;
    for s in segments {
        s.validate()?;
    }
    let endpoints: Vec<Point3> = segments.iter().flat_map(|s| [s.a, s.b]).collect();
    let labels = dbscan_cluster(&endpoints, params)?;

    let clusters = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut sums = vec![(Point3::ORIGIN, 0usize); clusters];
    for (p, l) in endpoints.iter().zip(&labels) {
        if let Some(l) = l {
            sums[*l].0 += *p;
            sums[*l].1 += 1;
        }
    }
    let centroids: Vec<Point3> = sums.iter().map(|(s, n)| *s / *n as f64).collect();

    let mut vertices = Vec::new();
    let mut index_of: HashMap<[u64; 3], usize> = HashMap::new();
    let mut vertex_ids = Vec::with_capacity(endpoints.len());
    for (p, l) in endpoints.iter().zip(&labels) {
        let pos = l.map_or(*p, |l| centroids[l]);
        let id = *index_of.entry(key(pos)).or_insert_with(|| {
            vertices.push(pos);
            vertices.len() - 1
        });
        vertex_ids.push(id);
    }

    let mut stats = AssemblyStats {
        clusters,
        ..Default::default()
    };
    let mut seen = HashSet::new();
    let mut edges = Vec::new();
    for pair in vertex_ids.chunks_exact(2) {
        let (i, j) = (pair[0], pair[1]);
        if i == j {
            stats.collapsed_edges += 1;
            continue;
        }
        if !seen.insert((i.min(j), i.max(j))) {
            stats.duplicate_edges += 1;
            continue;
        }
        edges.push((i, j));
    }

    // Vertices only referenced by collapsed edges are dropped.
    let mut used = vec![false; vertices.len()];
    for &(i, j) in &edges {
        used[i] = true;
        used[j] = true;
    }
    let mut remap = vec![usize::MAX; vertices.len()];
    let mut kept = Vec::new();
    for (i, v) in vertices.into_iter().enumerate() {
        if used[i] {
            remap[i] = kept.len();
            kept.push(v);
        }
    }
    let edges = edges
        .into_iter()
        .map(|(i, j)| (remap[i], remap[j]))
        .collect();
    Ok((
        Wireframe {
            vertices: kept,
            edges,
        },
        stats,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64, z: f64) -> Point3 {
        Point3::new(x, y, z)
    }

    fn seg(a: Point3, b: Point3) -> Segment {
        Segment::new(a, b).unwrap()
    }

    #[test]
    fn pairs_at_the_radius() {
        let params = DbscanParams::default();
        let close = dbscan_cluster(&[Point3::ORIGIN, p(0.04, 0.0, 0.0)], &params).unwrap();
        assert_eq!(close, vec![Some(0), Some(0)]);
        let far = dbscan_cluster(&[Point3::ORIGIN, p(0.06, 0.0, 0.0)], &params).unwrap();
        assert_eq!(far, vec![None, None]);
    }

    /// Connected components of the "within eps" graph restricted to core
    /// points, with borders attached, computed by brute-force closure.
    fn reachability_oracle(points: &[Point3], eps: f64, min_pts: usize) -> Vec<Vec<bool>> {
        let n = points.len();
        let near = |i: usize, j: usize| points[i].distance(points[j]) <= eps;
        let core: Vec<bool> = (0..n)
            .map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts)
            .collect();
        let mut reach = vec![vec![false; n]; n];
        for i in 0..n {
            for j in 0..n {
                reach[i][j] = i == j || (core[i] && near(i, j));
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if reach[i][k] && reach[k][j] && core[k] {
                        reach[i][j] = true;
                    }
                }
            }
        }
        reach
    }

    #[test]
    fn chain_is_one_cluster() {
        let pts: Vec<_> = (0..12).map(|i| p(0.04 * i as f64, 0.0, 0.0)).collect();
        let params = DbscanParams::default();
        let labels = dbscan_cluster(&pts, &params).unwrap();
        let reach = reachability_oracle(&pts, params.eps, params.min_points);
        assert!(reach[0].iter().all(|&r| r));
        assert!(labels.iter().all(|l| *l == Some(0)));
    }

    #[test]
    fn clusters_match_oracle_on_scattered_points() {
        let pts = vec![
            p(0.0, 0.0, 0.0),
            p(0.03, 0.0, 0.0),
            p(1.0, 1.0, 0.0),
            p(1.0, 1.04, 0.0),
            p(1.0, 1.08, 0.0),
            p(5.0, 5.0, 5.0),
            p(0.03, 0.04, 0.0),
        ];
        let params = DbscanParams::default();
        let labels = dbscan_cluster(&pts, &params).unwrap();
        let reach = reachability_oracle(&pts, params.eps, params.min_points);
        let n = pts.len();
        let core: Vec<bool> = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| pts[i].distance(pts[j]) <= params.eps)
                    .count()
                    >= params.min_points
            })
            .collect();
        for i in 0..n {
            for j in 0..n {
                if core[i] && core[j] {
                    assert_eq!(labels[i] == labels[j], reach[i][j], "{i} {j}");
                }
            }
            if !core[i] {
                let has_core_nb = (0..n).any(|j| core[j] && reach[j][i]);
                assert_eq!(labels[i].is_some(), has_core_nb, "{i}");
            }
        }
        assert_eq!(labels[5], None);
        assert_eq!(labels[0], labels[6]);
        assert_eq!(labels[2], labels[4]);
        assert_ne!(labels[0], labels[2]);
    }

    #[test]
    fn shared_corner_is_merged_to_centroid() {
        let a = seg(p(1.0, 0.0, 0.0), p(0.0, 0.0, 0.0));
        let b = seg(p(0.04, 0.0, 0.0), p(0.0, 1.0, 0.0));
        let wf = assemble_wireframe(&[a, b], &DbscanParams::default()).unwrap();
        assert_eq!(wf.vertices.len(), 3);
        assert_eq!(wf.edges.len(), 2);
        assert!(wf.vertices.contains(&p(0.02, 0.0, 0.0)));
        wf.validate().unwrap();
    }

    #[test]
    fn far_apart_segments_pass_through() {
        let a = seg(p(0.0, 0.0, 0.0), p(1.0, 0.0, 0.0));
        let b = seg(p(5.0, 5.0, 0.0), p(5.0, 6.0, 0.0));
        let wf = assemble_wireframe(&[a, b], &DbscanParams::default()).unwrap();
        assert_eq!(wf.vertices, vec![a.a, a.b, b.a, b.b]);
        assert_eq!(wf.edges, vec![(0, 1), (2, 3)]);
    }

    #[test]
    fn duplicates_and_collapses_are_dropped() {
        let a = seg(p(0.0, 0.0, 0.0), p(1.0, 0.0, 0.0));
        let tiny = seg(p(3.0, 0.0, 0.0), p(3.01, 0.0, 0.0));
        let (wf, stats) =
            assemble_wireframe_with_stats(&[a, a.reversed(), tiny], &DbscanParams::default())
                .unwrap();
        assert_eq!(wf.edges.len(), 1);
        assert_eq!(wf.vertices.len(), 2);
        assert_eq!(stats.collapsed_edges, 1);
        assert_eq!(stats.duplicate_edges, 1);
        assert!(assemble_wireframe(&[], &DbscanParams::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn bad_params_rejected() {
        assert!(dbscan_cluster(
            &[],
            &DbscanParams {
                eps: 0.0,
                min_points: 2
            }
        )
        .is_err());
        assert!(dbscan_cluster(
            &[],
            &DbscanParams {
                eps: 0.1,
                min_points: 0
            }
        )
        .is_err());
    }
}
