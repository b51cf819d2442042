use std::fmt::Write as _;

use super::{MeshError, TriangleMesh};
use crate::geom::Vec3;
use crate::scalar::Scalar;

/// Parses `v x y z` and `f i j k [l ...]` lines.
///
/// Face indices are one-based on input. A face token may carry `/`-separated
/// texture or normal references, which are dropped. Polygons are
/// fan-triangulated from their first vertex. Lines with any other leading
/// token (`vn`, `vt`, `o`, `g`, comments, ...) are ignored.
pub fn parse_mesh_text<T: Scalar>(text: &str) -> Result<TriangleMesh<T>, MeshError> {
    let mut vertices = Vec::new();
    // (line number, one-based index) per corner, checked once all vertices are known
    let mut faces: Vec<(usize, [i64; 3])> = Vec::new();

    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let mut tokens = raw.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<&str> = tokens.collect();
                if coords.len() != 3 {
                    return Err(MeshError::MalformedLine {
                        line,
                        reason: format!("vertex needs 3 coordinates, found {}", coords.len()),
                    });
                }
                let mut xyz = [T::zero(); 3];
                for (slot, tok) in xyz.iter_mut().zip(&coords) {
                    *slot = parse_coord(tok, line)?;
                }
                vertices.push(Vec3::from(xyz));
            }
            Some("f") => {
                let idx = tokens
                    .map(|tok| parse_index(tok, line))
                    .collect::<Result<Vec<_>, _>>()?;
                if idx.len() < 3 {
                    return Err(MeshError::MalformedLine {
                        line,
                        reason: format!("face needs at least 3 indices, found {}", idx.len()),
                    });
                }
                for w in 1..idx.len() - 1 {
                    faces.push((line, [idx[0], idx[w], idx[w + 1]]));
                }
            }
            _ => {}
        }
    }

    if vertices.is_empty() || faces.is_empty() {
        return Err(MeshError::EmptyMesh);
    }
    let count = vertices.len();
    let mut zero_based = Vec::with_capacity(faces.len());
    for (line, f) in faces {
        let mut tri = [0usize; 3];
        for (slot, &one_based) in tri.iter_mut().zip(&f) {
            if one_based < 1 || one_based as u64 > count as u64 {
                return Err(MeshError::IndexOutOfBounds { line, index: one_based, count });
            }
            *slot = (one_based - 1) as usize;
        }
        if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
            return Err(MeshError::MalformedLine {
                line,
                reason: format!("face repeats a vertex: {f:?}"),
            });
        }
        zero_based.push(tri);
    }
    TriangleMesh::new(vertices, zero_based)
}

fn parse_coord<T: Scalar>(tok: &str, line: usize) -> Result<T, MeshError> {
    match tok.parse::<T>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(MeshError::MalformedLine {
            line,
            reason: format!("invalid coordinate {tok:?}"),
        }),
    }
}

fn parse_index(tok: &str, line: usize) -> Result<i64, MeshError> {
    let head = tok.split('/').next().unwrap_or_default();
    head.parse::<i64>().map_err(|_| MeshError::MalformedLine {
        line,
        reason: format!("invalid face index {tok:?}"),
    })
}

/// Emits all `v` lines, then all `f` lines with one-based indices.
///
/// Coordinates use the shortest decimal form that parses back to the same
/// value, so `parse_mesh_text(&serialize_mesh(m)) == m` exactly.
pub fn serialize_mesh<T: Scalar>(mesh: &TriangleMesh<T>) -> String {
    let mut out = String::with_capacity(mesh.vertices().len() * 32 + mesh.faces().len() * 16);
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_triangle() {
        let m: TriangleMesh<f64> = parse_mesh_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        assert_eq!(m.vertices().len(), 3);
        assert_eq!(m.faces(), &[[0, 1, 2]]);
    }

    #[test]
    fn quad_is_fan_triangulated() {
        let m: TriangleMesh<f64> =
            parse_mesh_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4").unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn out_of_range_index() {
        let err = parse_mesh_text::<f64>("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9").unwrap_err();
        assert_eq!(err, MeshError::IndexOutOfBounds { line: 4, index: 9, count: 3 });
        let err = parse_mesh_text::<f64>("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2").unwrap_err();
        assert!(matches!(err, MeshError::IndexOutOfBounds { index: 0, .. }));
    }

    #[test]
    fn malformed_lines() {
        for text in [
            "v 0 0\nf 1 2 3",
            "v 0 0 0 1\nf 1 2 3",
            "v 0 zero 0\nf 1 2 3",
            "v 0 nan 0\nf 1 2 3",
            "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2",
            "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 x",
            "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 2",
        ] {
            assert!(
                matches!(parse_mesh_text::<f64>(text), Err(MeshError::MalformedLine { .. })),
                "{text:?}"
            );
        }
    }

    #[test]
    fn empty_inputs() {
        assert_eq!(parse_mesh_text::<f64>(""), Err(MeshError::EmptyMesh));
        assert_eq!(parse_mesh_text::<f64>("v 0 0 0\n"), Err(MeshError::EmptyMesh));
        assert_eq!(parse_mesh_text::<f64>("# only a comment\no knife\n"), Err(MeshError::EmptyMesh));
    }

    #[test]
    fn ignores_unknown_prefixes_and_slash_tokens() {
        let text = "# tool\no knife\nvn 0 0 1\nvt 0 0\nv 0 0 0\nv 1 0 0\nv 0 1 0\ns off\nf 1/1/1 2/2/1 3//1\n";
        let m: TriangleMesh<f64> = parse_mesh_text(text).unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2]]);
    }

    #[test]
    fn forward_references_are_resolved() {
        let m: TriangleMesh<f64> = parse_mesh_text("f 1 2 3\nv 0 0 0\nv 1 0 0\nv 0 1 0\n").unwrap();
        assert_eq!(m.faces().len(), 1);
    }

    #[test]
    fn decimal_point_only() {
        assert!(parse_mesh_text::<f64>("v 0,5 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3").is_err());
        let m: TriangleMesh<f64> = parse_mesh_text("v 0.5 -1e-3 +2\nv 1 0 0\nv 0 1 0\nf 1 2 3").unwrap();
        assert_eq!(m.vertices()[0], Vec3::new(0.5, -0.001, 2.0));
    }

    #[test]
    fn serializes_one_based() {
        let m: TriangleMesh<f64> = parse_mesh_text("v 0 0 0\nv 1.5 0 0\nv 0 1 0\nf 1 2 3").unwrap();
        assert_eq!(serialize_mesh(&m), "v 0 0 0\nv 1.5 0 0\nv 0 1 0\nf 1 2 3\n");
    }

    #[test]
    fn f32_round_trip() {
        let m: TriangleMesh<f32> = parse_mesh_text("v 0.1 0.2 0.3\nv 1 0 0\nv 0 1 0\nf 1 2 3").unwrap();
        let back: TriangleMesh<f32> = parse_mesh_text(&serialize_mesh(&m)).unwrap();
        assert_eq!(back, m);
    }
}
