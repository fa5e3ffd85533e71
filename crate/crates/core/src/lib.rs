//! Multi-view 3D reconstruction from a few accurate correspondences.
//!
//! Two stages:
//!
//! 1. Joint recovery of world points and 3x4 projection matrices from an
//!    M-point / N-image correspondence table, with the projective ambiguity
//!    fixed by pinning five world points to a canonical configuration
//!    ([`wpfc`]). Both a closed-form solver and an iterative refinement built
//!    on 2-D absolute orientation are provided.
//! 2. Densification: growing point clouds along the image segments joining two
//!    known surface points, by detecting correlated intensity windows across
//!    views ([`crpc`]), with metric seeding, leveled growth and refinement
//!    tooling in [`pipeline`].
//!
//! The numerical core is generic over the scalar type via `num-traits`; the
//! projective-transform paths additionally run over exact rational scalars
//! (see [`scalar::Field`]). Concrete `f64` aliases are exported below.

// index loops mirror the matrix algebra; iterator forms read worse here
#![allow(clippy::needless_range_loop)]
#![allow(clippy::manual_memcpy)]

pub mod crpc;
pub mod evaluation;
pub mod geometry;
pub mod image;
pub mod jenks;
pub mod linalg;
pub mod mds;
pub mod pipeline;
pub mod scalar;
pub mod synth;
pub mod wpfc;

pub use scalar::{Field, Real};

/// Default concrete scalar for end-to-end workflows.
pub type Scalar64 = f64;

pub type WorldPoint64 = geometry::WorldPoint<f64>;
pub type ImagePoint64 = geometry::ImagePoint<f64>;
pub type ProjectionMatrix64 = geometry::ProjectionMatrix<f64>;
pub type ProjectiveTransform64 = geometry::ProjectiveTransform<f64>;
pub type CorrespondenceSet64 = geometry::CorrespondenceSet<f64>;
pub type SolutionGroup64 = geometry::SolutionGroup<f64>;
pub type GrayImage64 = image::GrayImage<f64>;
pub type CloudPoint64 = crpc::CloudPoint<f64>;
pub type PointCloud64 = crpc::PointCloud<f64>;
