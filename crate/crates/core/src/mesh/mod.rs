//! Triangle meshes in the plain-text `v`/`f` format.
//!
//! Coordinates are millimeters. Faces are stored zero-based and always
//! triangles; polygon faces are fan-triangulated on parse.

mod text;
mod transform;
mod validate;

pub use text::{parse_mesh_text, serialize_mesh};
pub use transform::{scale_factor, scale_mesh_to_target, weld_vertices, WeldOutcome, DEFAULT_FIT_RATIO, WELD_TOLERANCE_MM};
pub use validate::{
    orient_outward, validate_mesh, Defect, DefectKind, DefectRef, ValidationReport,
    DEGENERATE_AREA_MM2,
};

use thiserror::Error;

use crate::geom::{Aabb, Vec3};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("line {line}: face index {index} out of bounds for {count} vertices")]
    IndexOutOfBounds { line: usize, index: i64, count: usize },
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("mesh has no vertices or no faces")]
    EmptyMesh,
    #[error("mesh has zero extent along every axis")]
    DegenerateMesh,
    #[error("target size and fit ratio must be positive (got {0})")]
    NonPositiveTarget(f64),
    #[error("face {face} is invalid: {reason}")]
    InvalidFace { face: usize, reason: String },
    #[error("vertex {0} has a non-finite coordinate")]
    NonFiniteVertex(usize),
}

/// Vertices plus zero-based triangle faces.
///
/// Construction through [`TriangleMesh::new`] enforces the invariants: at
/// least one vertex and one face, all coordinates finite, all indices in
/// range and pairwise distinct within a face.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh<T> {
    vertices: Vec<Vec3<T>>,
    faces: Vec<[usize; 3]>,
}

impl<T: Scalar> TriangleMesh<T> {
    pub fn new(vertices: Vec<Vec3<T>>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        if vertices.is_empty() || faces.is_empty() {
            return Err(MeshError::EmptyMesh);
        }
        if let Some(i) = vertices.iter().position(|v| !v.is_finite()) {
            return Err(MeshError::NonFiniteVertex(i));
        }
        let n = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&i| i >= n) {
                return Err(MeshError::InvalidFace {
                    face: fi,
                    reason: format!("index {bad} >= vertex count {n}"),
                });
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(MeshError::InvalidFace {
                    face: fi,
                    reason: format!("repeated vertex index in {f:?}"),
                });
            }
        }
        Ok(Self { vertices, faces })
    }

    pub fn vertices(&self) -> &[Vec3<T>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn triangle(&self, face: usize) -> [Vec3<T>; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangles(&self) -> impl Iterator<Item = [Vec3<T>; 3]> + '_ {
        (0..self.faces.len()).map(move |i| self.triangle(i))
    }

    pub fn bounding_box(&self) -> Aabb<T> {
        Aabb::from_points(self.vertices.iter().copied()).expect("mesh has vertices")
    }

    /// Signed volume by the divergence theorem; positive for outward winding.
    pub fn signed_volume(&self) -> T {
        let six = T::lit(6.0);
        self.triangles().map(|[a, b, c]| a.dot(b.cross(c))).sum::<T>() / six
    }

    pub fn surface_area(&self) -> T {
        self.triangles().map(|[a, b, c]| (b - a).cross(c - a).norm() * T::half()).sum()
    }

    /// Applies `f` to every vertex. Fails if the result is non-finite.
    pub fn map_vertices(&self, f: impl Fn(Vec3<T>) -> Vec3<T>) -> Result<Self, MeshError> {
        Self::new(self.vertices.iter().map(|&v| f(v)).collect(), self.faces.clone())
    }

    pub fn translated(&self, t: Vec3<T>) -> Result<Self, MeshError> {
        self.map_vertices(|v| v + t)
    }

    /// Reverses the winding of every face.
    pub fn flipped(&self) -> Self {
        Self {
            vertices: self.vertices.clone(),
            faces: self.faces.iter().map(|&[a, b, c]| [a, c, b]).collect(),
        }
    }

    /// Translates so the box sits on z = 0 centered on the bed's XY midpoint.
    pub fn placed_on_bed(&self, bed_size: Vec3<T>) -> Result<Self, MeshError> {
        let bb = self.bounding_box();
        let c = bb.center();
        let t = Vec3::new(
            bed_size.x * T::half() - c.x,
            bed_size.y * T::half() - c.y,
            -bb.min.z,
        );
        self.translated(t)
    }

    /// Applies a vertex permutation: new vertex `i` is old vertex `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self, MeshError> {
        let mut inverse = vec![usize::MAX; order.len()];
        for (new, &old) in order.iter().enumerate() {
            inverse[old] = new;
        }
        Self::new(
            order.iter().map(|&o| self.vertices[o]).collect(),
            self.faces.iter().map(|f| f.map(|i| inverse[i])).collect(),
        )
    }

    pub fn cast<U: Scalar>(&self) -> Result<TriangleMesh<U>, MeshError> {
        TriangleMesh::new(self.vertices.iter().map(|v| v.cast()).collect(), self.faces.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn unit_cube() -> TriangleMesh<f64> {
        parse_mesh_text(
            "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 0 0 1\nv 1 0 1\nv 1 1 1\nv 0 1 1\n\
             f 1 4 3 2\nf 5 6 7 8\nf 1 2 6 5\nf 2 3 7 6\nf 3 4 8 7\nf 4 1 5 8\n",
        )
        .unwrap()
    }

    #[test]
    fn constructor_rejects_invariant_violations() {
        let v = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        assert_eq!(TriangleMesh::new(v.clone(), vec![]), Err(MeshError::EmptyMesh));
        assert!(matches!(TriangleMesh::new(v.clone(), vec![[0, 1, 3]]), Err(MeshError::InvalidFace { .. })));
        assert!(matches!(TriangleMesh::new(v.clone(), vec![[0, 1, 1]]), Err(MeshError::InvalidFace { .. })));
        let mut bad = v;
        bad[1].y = f64::NAN;
        assert_eq!(TriangleMesh::new(bad, vec![[0, 1, 2]]), Err(MeshError::NonFiniteVertex(1)));
    }

    #[test]
    fn unit_cube_bbox_and_volume() {
        let m = unit_cube();
        let bb = m.bounding_box();
        assert_eq!(bb.min, Vec3::new(0.0, 0.0, 0.0));
        assert_eq!(bb.max, Vec3::new(1.0, 1.0, 1.0));
        assert!((m.signed_volume() - 1.0).abs() < 1e-12);
        assert!((m.surface_area() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn repeated_point_bbox_collapses() {
        let p = Vec3::new(2.0, 3.0, 4.0);
        let m = TriangleMesh::new(vec![p, p, p], vec![[0, 1, 2]]).unwrap();
        let bb = m.bounding_box();
        assert_eq!(bb.min, p);
        assert_eq!(bb.max, p);
    }

    #[test]
    fn bbox_is_translation_equivariant() {
        let m = unit_cube();
        let t = Vec3::new(3.5, -2.0, 10.0);
        let moved = m.translated(t).unwrap();
        assert_eq!(moved.bounding_box(), m.bounding_box().translate(t));
    }

    #[test]
    fn placed_on_bed_centers_the_part() {
        let m = unit_cube().placed_on_bed(Vec3::new(220.0, 220.0, 250.0)).unwrap();
        let bb = m.bounding_box();
        assert_eq!(bb.min.z, 0.0);
        assert_eq!(bb.center().x, 110.0);
        assert_eq!(bb.center().y, 110.0);
    }

    #[test]
    fn flipping_negates_volume() {
        let m = unit_cube();
        assert!((m.flipped().signed_volume() + 1.0).abs() < 1e-12);
    }
}
