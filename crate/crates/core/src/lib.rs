//! Core of the toolsmith pipeline: scene interpretation, triangle meshes,
//! slicing to G-code, a simulated 7-DoF control loop, episode recording and
//! the evaluation harness.
//!
//! Geometry is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix it to `f64`, which every other module uses.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod action;
pub mod episodes;
pub mod evaluation;
pub mod geom;
pub mod mesh;
pub mod scalar;
pub mod scene;
pub mod slicer;
#[cfg(any(test, feature = "testkit"))]
pub mod testkit;

pub use scalar::Scalar;

pub type Vec3d = geom::Vec3<f64>;
pub type Aabb3d = geom::Aabb<f64>;
pub type Mesh = mesh::TriangleMesh<f64>;
pub type Mesh32 = mesh::TriangleMesh<f32>;
