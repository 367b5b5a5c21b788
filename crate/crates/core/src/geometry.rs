//! Geometric primitives and the midpoint/component/quadrant edge encoding.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, invalid_edge, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Point3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn distance(self, o: Point3) -> f64 {
        (self - o).norm()
    }

    pub fn distance_squared(self, o: Point3) -> f64 {
        (self - o).norm_squared()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Elementwise product.
    pub fn hadamard(self, o: Point3) -> Point3 {
        Point3::new(self.x * o.x, self.y * o.y, self.z * o.z)
    }

    pub fn abs(self) -> Point3 {
        Point3::new(self.x.abs(), self.y.abs(), self.z.abs())
    }

    pub fn lerp(self, o: Point3, t: f64) -> Point3 {
        self + (o - self) * t
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Point3 {
    fn add_assign(&mut self, o: Point3) {
        *self = *self + o;
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Point3 {
    type Output = Point3;
    fn div(self, s: f64) -> Point3 {
        Point3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Point3 {
    type Output = Point3;
    fn neg(self) -> Point3 {
        Point3::new(-self.x, -self.y, -self.z)
    }
}

/// Points plus optional per-point RGB + reflectance.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attrs: Option<Vec<[f64; 4]>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self {
            points,
            attrs: None,
        }
    }

    pub fn with_attrs(points: Vec<Point3>, attrs: Vec<[f64; 4]>) -> Result<Self> {
        if attrs.len() != points.len() {
            return Err(invalid_arg(format!(
                "{} attribute rows for {} points",
                attrs.len(),
                points.len()
            )));
        }
        Ok(Self {
            points,
            attrs: Some(attrs),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Option<Point3> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self.points.iter().fold(Point3::ORIGIN, |acc, &p| acc + p);
        Some(sum / self.points.len() as f64)
    }
}

/// An undirected line segment between two distinct finite points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Point3,
    pub b: Point3,
}

impl Segment {
    pub fn new(a: Point3, b: Point3) -> Result<Self> {
        let s = Segment { a, b };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.a.is_finite() || !self.b.is_finite() {
            return Err(invalid_edge("non-finite endpoint"));
        }
        if self.a == self.b {
            return Err(invalid_edge("zero-length segment"));
        }
        Ok(())
    }

    /// `b - a`.
    pub fn direction(&self) -> Point3 {
        self.b - self.a
    }

    pub fn length(&self) -> f64 {
        self.direction().norm()
    }

    pub fn midpoint(&self) -> Point3 {
        (self.a + self.b) * 0.5
    }

    pub fn point_at(&self, t: f64) -> Point3 {
        self.a.lerp(self.b, t)
    }

    /// Parameter in [0, 1] of the point on the segment closest to `p`.
    pub fn closest_param(&self, p: Point3) -> f64 {
        let d = self.direction();
        let len2 = d.norm_squared();
        if len2 == 0.0 {
            return 0.0;
        }
        ((p - self.a).dot(d) / len2).clamp(0.0, 1.0)
    }

    pub fn closest_point(&self, p: Point3) -> Point3 {
        self.point_at(self.closest_param(p))
    }

    pub fn distance_to_point(&self, p: Point3) -> f64 {
        p.distance(self.closest_point(p))
    }

    pub fn reversed(&self) -> Segment {
        Segment {
            a: self.b,
            b: self.a,
        }
    }

    /// True when both segments denote the same undirected edge within `tol`
    /// per coordinate.
    pub fn approx_eq(&self, o: &Segment, tol: f64) -> bool {
        let close = |p: Point3, q: Point3| {
            (p.x - q.x).abs() <= tol && (p.y - q.y).abs() <= tol && (p.z - q.z).abs() <= tol
        };
        (close(self.a, o.a) && close(self.b, o.b)) || (close(self.a, o.b) && close(self.b, o.a))
    }
}

/// Number of sign classes for a directionless 3D vector.
pub const NUM_QUADRANTS: usize = 4;

/// Edge encoded as midpoint, absolute per-axis components and a sign class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamEdge {
    pub midpoint: Point3,
    pub comp: [f64; 3],
    pub quadrant: u8,
    pub confidence: f64,
}

/// Sign vector for a quadrant class. Bit 1 flips y, bit 0 flips z; x is
/// always positive in the canonical representative.
pub fn quadrant_signs(quadrant: u8) -> Point3 {
    Point3::new(
        1.0,
        if quadrant & 2 != 0 { -1.0 } else { 1.0 },
        if quadrant & 1 != 0 { -1.0 } else { 1.0 },
    )
}

/// Splits a direction into its sign class and absolute components.
///
/// `v` and `-v` describe the same undirected edge, so `v` is first flipped
/// so that its first nonzero coordinate (x, then y, then z) is positive. Zero
/// coordinates count as positive. The class is then `2*[y<0] + [z<0]`.
pub fn canonical_quadrant(v: Point3) -> Result<(u8, [f64; 3])> {
    if !v.is_finite() {
        return Err(invalid_edge("non-finite direction"));
    }
    let flip = if v.x != 0.0 {
        v.x < 0.0
    } else if v.y != 0.0 {
        v.y < 0.0
    } else if v.z != 0.0 {
        v.z < 0.0
    } else {
        return Err(invalid_edge("zero direction vector"));
    };
    let c = if flip { -v } else { v };
    let quadrant = 2 * u8::from(c.y < 0.0) + u8::from(c.z < 0.0);
    Ok((quadrant, v.abs().to_array()))
}

impl ParamEdge {
    /// Encodes a segment. Confidence is set to 1.
    pub fn from_segment(s: &Segment) -> Result<ParamEdge> {
        s.validate()?;
        let (quadrant, comp) = canonical_quadrant(s.a - s.b)?;
        Ok(ParamEdge {
            midpoint: s.midpoint(),
            comp,
            quadrant,
            confidence: 1.0,
        })
    }

    /// Signed direction vector `u ⊙ comp`.
    pub fn direction(&self) -> Point3 {
        quadrant_signs(self.quadrant).hadamard(Point3::from_array(self.comp))
    }

    /// Decodes the endpoints `(midpoint + v/2, midpoint - v/2)`.
    pub fn to_segment(&self) -> Result<Segment> {
        if self.quadrant as usize >= NUM_QUADRANTS {
            return Err(invalid_edge(format!(
                "quadrant {} out of range",
                self.quadrant
            )));
        }
        if self.comp.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(invalid_edge("components must be finite and non-negative"));
        }
        if self.comp.iter().all(|&c| c == 0.0) {
            return Err(invalid_edge("all components zero"));
        }
        let half = self.direction() * 0.5;
        Segment::new(self.midpoint + half, self.midpoint - half)
    }
}

/// Free-function form of [`ParamEdge::to_segment`].
pub fn endpoints_from_params(p: &ParamEdge) -> Result<Segment> {
    p.to_segment()
}

/// Free-function form of [`ParamEdge::from_segment`].
pub fn params_from_segment(s: &Segment) -> Result<ParamEdge> {
    ParamEdge::from_segment(s)
}

/// `k` evenly spaced points from `s.a` to `s.b`, both included.
pub fn sample_edge_points(s: &Segment, k: usize) -> Result<Vec<Point3>> {
    if k < 2 {
        return Err(invalid_arg(format!(
            "need at least 2 samples per edge, got {k}"
        )));
    }
    let denom = (k - 1) as f64;
    Ok((0..k).map(|i| s.point_at(i as f64 / denom)).collect())
}

/// Indices chosen by farthest point sampling.
///
/// The first pick is the point farthest from the centroid; every later pick
/// maximizes the distance to the already chosen set. Ties go to the lower
/// index.
pub fn farthest_point_indices(cloud: &PointCloud, m: usize) -> Result<Vec<usize>> {
    let n = cloud.len();
    if n == 0 {
        return Err(invalid_arg("empty point cloud"));
    }
    if m == 0 || m > n {
        return Err(invalid_arg(format!("cannot sample {m} of {n} points")));
    }
    let pts = &cloud.points;
    let centroid = cloud.centroid().unwrap_or(Point3::ORIGIN);

    let mut first = 0;
    let mut best = f64::NEG_INFINITY;
    for (i, p) in pts.iter().enumerate() {
        let d = p.distance_squared(centroid);
        if d > best {
            best = d;
            first = i;
        }
    }

    let mut chosen = Vec::with_capacity(m);
    let mut min_dist = vec![f64::INFINITY; n];
    let mut next = first;
    while chosen.len() < m {
        chosen.push(next);
        let c = pts[next];
        min_dist[next] = f64::NEG_INFINITY;
        let mut best = f64::NEG_INFINITY;
        for (i, p) in pts.iter().enumerate() {
            if min_dist[i] == f64::NEG_INFINITY {
                continue;
            }
            let d = p.distance_squared(c);
            if d < min_dist[i] {
                min_dist[i] = d;
            }
            if min_dist[i] > best {
                best = min_dist[i];
                next = i;
            }
        }
    }
    Ok(chosen)
}

pub fn farthest_point_sampling(cloud: &PointCloud, m: usize) -> Result<Vec<Point3>> {
    Ok(farthest_point_indices(cloud, m)?
        .into_iter()
        .map(|i| cloud.points[i])
        .collect())
}

/// Vertex list plus undirected index edges.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Wireframe {
    pub vertices: Vec<Point3>,
    pub edges: Vec<(usize, usize)>,
}

impl Wireframe {
    pub fn new(vertices: Vec<Point3>, edges: Vec<(usize, usize)>) -> Result<Self> {
        let wf = Wireframe { vertices, edges };
        wf.validate()?;
        Ok(wf)
    }

    /// Checks index range, self-loops and order-insensitive duplicates.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if let Some(p) = self.vertices.iter().find(|p| !p.is_finite()) {
            return Err(invalid_arg(format!("non-finite vertex {p:?}")));
        }
        let mut seen = std::collections::HashSet::new();
        for &(i, j) in &self.edges {
            if i >= n || j >= n {
                return Err(invalid_arg(format!(
                    "edge ({i}, {j}) out of range for {n} vertices"
                )));
            }
            if i == j {
                return Err(invalid_arg(format!("self-loop at vertex {i}")));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(invalid_arg(format!("duplicate edge ({i}, {j})")));
            }
        }
        Ok(())
    }

    pub fn segments(&self) -> Result<Vec<Segment>> {
        self.edges
            .iter()
            .map(|&(i, j)| Segment::new(self.vertices[i], self.vertices[j]))
            .collect()
    }

    /// Edges as `(min, max)` pairs in sorted order.
    pub fn canonical_edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<_> = self
            .edges
            .iter()
            .map(|&(i, j)| (i.min(j), i.max(j)))
            .collect();
        e.sort_unstable();
        e
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty() && self.edges.is_empty()
    }
}
