use std::collections::HashMap;

use super::{MeshError, TriangleMesh};
use crate::geom::Vec3;
use crate::scalar::Scalar;

/// Tool's longest extent relative to the target item's size.
pub const DEFAULT_FIT_RATIO: f64 = 1.5;

/// Vertices closer than this (mm) are merged before validation.
pub const WELD_TOLERANCE_MM: f64 = 1e-6;

/// `fit_ratio * target_size_mm / max_extent`.
pub fn scale_factor<T: Scalar>(
    mesh: &TriangleMesh<T>,
    target_size_mm: T,
    fit_ratio: T,
) -> Result<T, MeshError> {
    for v in [target_size_mm, fit_ratio] {
        if !(v > T::zero()) || !v.is_finite() {
            return Err(MeshError::NonPositiveTarget(v.to_f64_lossy()));
        }
    }
    let extent = mesh.bounding_box().max_extent();
    if !(extent > T::zero()) {
        return Err(MeshError::DegenerateMesh);
    }
    Ok(fit_ratio * target_size_mm / extent)
}

/// Uniformly scales about the bounding-box center so the longest extent
/// becomes `fit_ratio * target_size_mm`.
pub fn scale_mesh_to_target<T: Scalar>(
    mesh: &TriangleMesh<T>,
    target_size_mm: T,
    fit_ratio: T,
) -> Result<TriangleMesh<T>, MeshError> {
    let s = scale_factor(mesh, target_size_mm, fit_ratio)?;
    if s == T::one() {
        return Ok(mesh.clone());
    }
    let c = mesh.bounding_box().center();
    mesh.map_vertices(|v| c + (v - c) * s)
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeldOutcome<T> {
    pub mesh: TriangleMesh<T>,
    pub merged_vertices: usize,
    /// Faces that collapsed to fewer than three distinct vertices.
    pub dropped_faces: usize,
}

/// Merges vertices within `tolerance` of an earlier vertex, drops unused
/// vertices and faces that collapse. Earlier vertices win, so the result
/// depends only on input order.
pub fn weld_vertices<T: Scalar>(
    mesh: &TriangleMesh<T>,
    tolerance: T,
) -> Result<WeldOutcome<T>, MeshError> {
    let cell_of = |v: Vec3<T>| -> [i64; 3] {
        let q = |c: T| (c / tolerance).floor().to_f64_lossy() as i64;
        [q(v.x), q(v.y), q(v.z)]
    };

    let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    let mut representative = Vec::with_capacity(mesh.vertices().len());
    let mut kept: Vec<Vec3<T>> = Vec::new();
    let mut merged = 0;

    for &v in mesh.vertices() {
        let cell = cell_of(v);
        let mut found = None;
        'search: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let key = [cell[0].saturating_add(dx), cell[1].saturating_add(dy), cell[2].saturating_add(dz)];
                    if let Some(bucket) = grid.get(&key) {
                        if let Some(&k) = bucket.iter().find(|&&k| kept[k].distance(v) <= tolerance) {
                            found = Some(k);
                            break 'search;
                        }
                    }
                }
            }
        }
        let idx = match found {
            Some(k) => {
                merged += 1;
                k
            }
            None => {
                kept.push(v);
                grid.entry(cell).or_default().push(kept.len() - 1);
                kept.len() - 1
            }
        };
        representative.push(idx);
    }

    let mut faces = Vec::with_capacity(mesh.faces().len());
    let mut dropped = 0;
    for f in mesh.faces() {
        let g = f.map(|i| representative[i]);
        if g[0] == g[1] || g[1] == g[2] || g[0] == g[2] {
            dropped += 1;
        } else {
            faces.push(g);
        }
    }

    // compact away vertices no face references any more
    let mut used = vec![usize::MAX; kept.len()];
    let mut vertices = Vec::new();
    for f in &mut faces {
        for i in f.iter_mut() {
            if used[*i] == usize::MAX {
                used[*i] = vertices.len();
                vertices.push(kept[*i]);
            }
            *i = used[*i];
        }
    }

    Ok(WeldOutcome {
        mesh: TriangleMesh::new(vertices, faces)?,
        merged_vertices: merged,
        dropped_faces: dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{parse_mesh_text, validate_mesh};
    use super::*;

    fn box_mesh(a: f64, b: f64, c: f64) -> TriangleMesh<f64> {
        let text = format!(
            "v 0 0 0\nv {a} 0 0\nv {a} {b} 0\nv 0 {b} 0\nv 0 0 {c}\nv {a} 0 {c}\nv {a} {b} {c}\nv 0 {b} {c}\n\
             f 1 4 3 2\nf 5 6 7 8\nf 1 2 6 5\nf 2 3 7 6\nf 3 4 8 7\nf 4 1 5 8\n"
        );
        parse_mesh_text(&text).unwrap()
    }

    #[test]
    fn scale_to_sixty_percent() {
        let m = box_mesh(100.0, 20.0, 10.0);
        assert!((scale_factor(&m, 40.0, 1.5).unwrap() - 0.6).abs() < 1e-15);
        let s = scale_mesh_to_target(&m, 40.0, 1.5).unwrap();
        assert!((s.bounding_box().max_extent() - 60.0).abs() <= 60.0 * 1e-9);
        // center is preserved
        let (c0, c1) = (m.bounding_box().center(), s.bounding_box().center());
        assert!(c0.distance(c1) < 1e-12);
    }

    #[test]
    fn unit_factor_is_identity() {
        let m = box_mesh(30.0, 20.0, 10.0);
        let s = scale_mesh_to_target(&m, 20.0, 1.5).unwrap();
        assert_eq!(s, m);
    }

    #[test]
    fn scale_errors() {
        let p = Vec3::new(1.0, 1.0, 1.0);
        let flat = TriangleMesh::new(vec![p, p, p], vec![[0, 1, 2]]).unwrap();
        assert_eq!(scale_mesh_to_target(&flat, 10.0, 1.5), Err(MeshError::DegenerateMesh));
        let m = box_mesh(1.0, 1.0, 1.0);
        assert!(matches!(scale_mesh_to_target(&m, 0.0, 1.5), Err(MeshError::NonPositiveTarget(_))));
        assert!(matches!(scale_mesh_to_target(&m, -3.0, 1.5), Err(MeshError::NonPositiveTarget(_))));
        assert!(matches!(scale_mesh_to_target(&m, 3.0, 0.0), Err(MeshError::NonPositiveTarget(_))));
    }

    #[test]
    fn volume_scales_cubically() {
        let m = box_mesh(3.0, 5.0, 7.0);
        let v0 = m.signed_volume();
        assert!((v0 - 105.0).abs() <= 105.0 * 1e-9);
        let s = scale_factor(&m, 11.0, 1.5).unwrap();
        let v1 = scale_mesh_to_target(&m, 11.0, 1.5).unwrap().signed_volume();
        assert!((v1 - v0 * s * s * s).abs() <= v1.abs() * 1e-9);
    }

    #[test]
    fn welding_joins_split_shells() {
        // triangle soup cube: every face owns its own vertices
        let m = box_mesh(2.0, 2.0, 2.0);
        let mut verts = Vec::new();
        let mut faces = Vec::new();
        for tri in m.triangles() {
            let base = verts.len();
            for v in tri {
                verts.push(v + Vec3::splat(1e-8));
            }
            faces.push([base, base + 1, base + 2]);
        }
        let soup = TriangleMesh::new(verts, faces).unwrap();
        assert!(!validate_mesh(&soup).watertight);
        let out = weld_vertices(&soup, WELD_TOLERANCE_MM).unwrap();
        assert_eq!(out.mesh.vertices().len(), 8);
        assert_eq!(out.dropped_faces, 0);
        assert_eq!(out.merged_vertices, 36 - 8);
        assert!(validate_mesh(&out.mesh).passes());
    }

    #[test]
    fn welding_drops_collapsed_faces() {
        let m: TriangleMesh<f64> =
            parse_mesh_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 0.0000001\nf 1 2 3\nf 1 4 2\n").unwrap();
        let out = weld_vertices(&m, WELD_TOLERANCE_MM).unwrap();
        assert_eq!(out.dropped_faces, 1);
        assert_eq!(out.mesh.faces().len(), 1);
        assert_eq!(out.mesh.vertices().len(), 3);
    }
}
