//! Deformed diffeomorphism groups on chart-local Riemannian and affine
//! manifolds: geodesics, logarithm-map jets, finite and infinitesimal
//! parallel transport, and numerical verification of the identities that tie
//! them together.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod action;
pub mod error;
pub mod expr;
pub mod fit;
pub mod geodesic;
pub mod group;
pub mod jet;
pub mod manifold;
pub mod numfmt;
pub mod taylor;
pub mod transport;
pub mod verify;

pub use error::{Error, Result};
pub use geodesic::{connect, shoot, ConnectOptions, GeodesicPath, GeodesicSample};
pub use jet::{deformation_jet, DeformationJet, JetRecurrence, JetSource};
pub use manifold::{
    load_manifold, ChartPoint, ConnectionCoefficients, CurvatureTensor, Displacement, FrameKind, FrameTag,
    ManifoldSpec, MetricModel, ScaleRule, TangentVector, VielbeinFrame,
};
pub use transport::{TransportKind, TransportMatrix};
