//! Wasserstein barycenters on the model spaces of constant curvature and
//! numerical checks of their regularity.

// `!(x <= bound)` style checks are deliberate: NaN must fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod barycenter;
pub mod error;
pub mod frechet;
pub mod gauge;
pub mod gaussian;
pub mod geometry;
pub mod lp;
pub mod measures;
pub mod mmot;
pub mod quadrature;
pub mod regularity;
pub mod rng;

pub use error::{Error, Result};
pub use geometry::{ManifoldKind, ModelManifold, Point, SelfAdjointOperator, TangentVector};
pub use measures::{DiscreteMeasure, MeasureEnsemble, TransportPlan};
