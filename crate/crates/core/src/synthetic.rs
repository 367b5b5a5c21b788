//! Synthetic roof fixtures: exact wireframes plus sampled, noisy clouds.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};
use crate::geometry::{Point3, PointCloud, Segment, Wireframe};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoofKind {
    Flat,
    Gable,
    Hip,
    LShaped,
}

impl std::str::FromStr for RoofKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(RoofKind::Flat),
            "gable" => Ok(RoofKind::Gable),
            "hip" => Ok(RoofKind::Hip),
            "l_shaped" | "l-shaped" => Ok(RoofKind::LShaped),
            other => Err(invalid_arg(format!("unknown roof kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoofSpec {
    pub kind: RoofKind,
    pub width: f64,
    pub depth: f64,
    pub eave_height: f64,
    pub ridge_height: f64,
    pub point_count: usize,
    pub noise_sigma: f64,
    pub dropout_fraction: f64,
    pub seed: u64,
}

impl Default for RoofSpec {
    fn default() -> Self {
        Self {
            kind: RoofKind::Gable,
            width: 10.0,
            depth: 6.0,
            eave_height: 3.0,
            ridge_height: 5.0,
            point_count: 2560,
            noise_sigma: 0.02,
            dropout_fraction: 0.1,
            seed: 0,
        }
    }
}

impl RoofSpec {
    pub fn new(kind: RoofKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.width, self.depth];
        if dims.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(invalid_arg("roof width and depth must be positive"));
        }
        if !self.eave_height.is_finite() || !self.ridge_height.is_finite() {
            return Err(invalid_arg("roof heights must be finite"));
        }
        if self.kind != RoofKind::Flat && self.ridge_height < self.eave_height {
            return Err(invalid_arg("ridge below eave"));
        }
        if self.kind == RoofKind::Hip && self.width == self.depth {
            return Err(invalid_arg(
                "hip roof needs a rectangular (non-square) footprint",
            ));
        }
        if self.point_count == 0 {
            return Err(invalid_arg("point_count must be positive"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(invalid_arg("noise_sigma must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.dropout_fraction) {
            return Err(invalid_arg("dropout_fraction must lie in [0, 1)"));
        }
        Ok(())
    }
}

struct RoofModel {
    wireframe: Wireframe,
    /// Planar convex roof faces as vertex index loops.
    faces: Vec<Vec<usize>>,
}

fn p(x: f64, y: f64, z: f64) -> Point3 {
    Point3::new(x, y, z)
}

fn eave_cycle(n: usize) -> Vec<(usize, usize)> {
    (0..n).map(|i| (i, (i + 1) % n)).collect()
}

fn build_model(spec: &RoofSpec) -> Result<RoofModel> {
    let (w, d, e, r) = (spec.width, spec.depth, spec.eave_height, spec.ridge_height);
    let (vertices, edges, faces) = match spec.kind {
        RoofKind::Flat => (
            vec![p(0.0, 0.0, e), p(w, 0.0, e), p(w, d, e), p(0.0, d, e)],
            eave_cycle(4),
            vec![vec![0, 1, 2, 3]],
        ),
        RoofKind::Gable => {
            let mut edges = eave_cycle(4);
            edges.extend([(4, 5), (0, 4), (3, 4), (1, 5), (2, 5)]);
            (
                vec![
                    p(0.0, 0.0, e),
                    p(w, 0.0, e),
                    p(w, d, e),
                    p(0.0, d, e),
                    p(0.0, d / 2.0, r),
                    p(w, d / 2.0, r),
                ],
                edges,
                vec![vec![0, 1, 5, 4], vec![3, 2, 5, 4]],
            )
        }
        RoofKind::Hip => {
            // Ridge runs along the longer side, inset by half the shorter.
            let (long, short) = (w.max(d), w.min(d));
            let inset = short / 2.0;
            let mut v = vec![
                p(0.0, 0.0, e),
                p(long, 0.0, e),
                p(long, short, e),
                p(0.0, short, e),
                p(inset, short / 2.0, r),
                p(long - inset, short / 2.0, r),
            ];
            if d > w {
                // Mirror across x = y; the edge graph is unchanged.
                for q in &mut v {
                    std::mem::swap(&mut q.x, &mut q.y);
                }
            }
            let mut edges = eave_cycle(4);
            edges.extend([(4, 5), (0, 4), (3, 4), (1, 5), (2, 5)]);
            (
                v,
                edges,
                vec![
                    vec![0, 1, 5, 4],
                    vec![3, 2, 5, 4],
                    vec![0, 4, 3],
                    vec![1, 2, 5],
                ],
            )
        }
        RoofKind::LShaped => {
            // Two gabled wings of thickness t meeting over the corner square,
            // joined by a hip at the outer corner and a valley at the inner one.
            let t = w.min(d) / 2.0;
            let h = t / 2.0;
            let v = vec![
                p(0.0, 0.0, e), // 0 outer corner
                p(w, 0.0, e),   // 1
                p(w, t, e),     // 2
                p(t, t, e),     // 3 inner corner
                p(t, d, e),     // 4
                p(0.0, d, e),   // 5
                p(h, h, r),     // 6 ridge junction
                p(w, h, r),     // 7 gable peak, x wing
                p(h, d, r),     // 8 gable peak, y wing
            ];
            let mut edges = eave_cycle(6);
            edges.extend([
                (6, 7),
                (6, 8),
                (0, 6),
                (3, 6),
                (1, 7),
                (2, 7),
                (4, 8),
                (5, 8),
            ]);
            let faces = vec![
                vec![0, 1, 7, 6],
                vec![2, 3, 6, 7],
                vec![0, 6, 8, 5],
                vec![3, 4, 8, 6],
            ];
            (v, edges, faces)
        }
    };
    Ok(RoofModel {
        wireframe: Wireframe::new(vertices, edges)?,
        faces,
    })
}

/// Ground-truth wireframe for a spec, without sampling a cloud.
pub fn roof_wireframe(spec: &RoofSpec) -> Result<Wireframe> {
    spec.validate()?;
    Ok(build_model(spec)?.wireframe)
}

fn triangle_area(a: Point3, b: Point3, c: Point3) -> f64 {
    let (u, v) = (b - a, c - a);
    let cross = Point3::new(
        u.y * v.z - u.z * v.y,
        u.z * v.x - u.x * v.z,
        u.x * v.y - u.y * v.x,
    );
    0.5 * cross.norm()
}

/// Noise vector with i.i.d. Gaussian axes, resampled until its norm is
/// within four sigma.
fn bounded_noise(rng: &mut ChaCha8Rng, normal: &Normal<f64>, sigma: f64) -> Point3 {
    if sigma == 0.0 {
        return Point3::ORIGIN;
    }
    loop {
        let n = Point3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng));
        if n.norm() <= 4.0 * sigma {
            return n;
        }
    }
}

/// Samples `point_count` points uniformly by area over the roof faces, adds
/// bounded Gaussian noise, then removes `dropout_fraction` of them.
pub fn generate_roof(spec: &RoofSpec) -> Result<(PointCloud, Wireframe)> {
    spec.validate()?;
    let model = build_model(spec)?;
    let verts = &model.wireframe.vertices;

    let mut tris = Vec::new();
    for face in &model.faces {
        for k in 1..face.len() - 1 {
            tris.push([verts[face[0]], verts[face[k]], verts[face[k + 1]]]);
        }
    }
    let mut cumulative = Vec::with_capacity(tris.len());
    let mut total = 0.0;
    for t in &tris {
        total += triangle_area(t[0], t[1], t[2]);
        cumulative.push(total);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| invalid_arg(e.to_string()))?;
    let mut points = Vec::with_capacity(spec.point_count);
    for _ in 0..spec.point_count {
        let pick = rng.gen::<f64>() * total;
        let ti = cumulative
            .partition_point(|&c| c < pick)
            .min(tris.len() - 1);
        let [a, b, c] = tris[ti];
        let (r1, r2): (f64, f64) = (rng.gen(), rng.gen());
        let s = r1.sqrt();
        let q = a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2);
        points.push(q + bounded_noise(&mut rng, &normal, spec.noise_sigma));
    }

    let drop = (spec.dropout_fraction * points.len() as f64).round() as usize;
    if drop > 0 {
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.shuffle(&mut rng);
        let mut keep: Vec<usize> = order[drop..].to_vec();
        keep.sort_unstable();
        points = keep.into_iter().map(|i| points[i]).collect();
    }
    Ok((PointCloud::new(points), model.wireframe))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentOp {
    /// Mirror across the YZ plane (x -> -x).
    FlipYz,
    /// Mirror across the XZ plane (y -> -y).
    FlipXz,
    /// Rotate about the Z axis by the given degrees, or by a seeded draw in
    /// [-5, 5] when `None`.
    RotateZ(Option<f64>),
}

/// Maximum random Z rotation, degrees.
pub const MAX_ROTATION_DEG: f64 = 5.0;

/// Applies the same flip or rotation to the cloud and the wireframe.
pub fn augment(
    cloud: &PointCloud,
    wf: &Wireframe,
    op: AugmentOp,
    seed: u64,
) -> (PointCloud, Wireframe) {
    let f: Box<dyn Fn(Point3) -> Point3> = match op {
        AugmentOp::FlipYz => Box::new(|q: Point3| Point3::new(-q.x, q.y, q.z)),
        AugmentOp::FlipXz => Box::new(|q: Point3| Point3::new(q.x, -q.y, q.z)),
        AugmentOp::RotateZ(deg) => {
            let deg = deg.unwrap_or_else(|| {
                ChaCha8Rng::seed_from_u64(seed).gen_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG)
            });
            let (s, c) = deg.to_radians().sin_cos();
            Box::new(move |q: Point3| Point3::new(c * q.x - s * q.y, s * q.x + c * q.y, q.z))
        }
    };
    let cloud = PointCloud {
        points: cloud.points.iter().map(|&q| f(q)).collect(),
        attrs: cloud.attrs.clone(),
    };
    let wf = Wireframe {
        vertices: wf.vertices.iter().map(|&q| f(q)).collect(),
        edges: wf.edges.clone(),
    };
    (cloud, wf)
}

/// One segment per wireframe edge with each endpoint independently jittered
/// by N(0, sigma^2) per axis.
pub fn perturb_wireframe(wf: &Wireframe, sigma: f64, seed: u64) -> Result<Vec<Segment>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(invalid_arg("sigma must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal =
        Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).map_err(|e| invalid_arg(e.to_string()))?;
    let jitter = |q: Point3, rng: &mut ChaCha8Rng| {
        if sigma == 0.0 {
            q
        } else {
            q + Point3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng))
        }
    };
    wf.edges
        .iter()
        .map(|&(i, j)| {
            let a = jitter(wf.vertices[i], &mut rng);
            let b = jitter(wf.vertices[j], &mut rng);
            Segment::new(a, b)
        })
        .collect()
}
