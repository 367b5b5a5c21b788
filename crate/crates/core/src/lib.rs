//! Parametric 3D edge regression toolkit for building roof wireframes.
//!
//! Edges are encoded as a midpoint, per-axis absolute components and a
//! four-way sign class. On top of that representation this crate provides
//! an edge similarity measure (sampled Hausdorff distance plus direction and
//! length terms), optimal bipartite edge matching, a set-prediction loss
//! stack with analytic gradients, edge non-maximum suppression, DBSCAN
//! corner merging, and corner/edge precision-recall metrics.
//!
//! The [`fitter`] module stands in for a learned regressor: it optimizes a
//! set of query edges directly against a ground-truth wireframe so that the
//! whole post-processing pipeline can be exercised end to end on the
//! synthetic roofs from [`synthetic`].

pub mod assembly;
pub mod error;
pub mod fitter;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod matching;
pub mod metrics;
pub mod similarity;
pub mod synthetic;

pub use error::{Error, Result};
pub use geometry::{ParamEdge, Point3, PointCloud, Segment, Wireframe};
