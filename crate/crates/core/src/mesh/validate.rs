use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::TriangleMesh;
use crate::scalar::Scalar;

/// Faces with area below this (mm²) are reported as degenerate.
pub const DEGENERATE_AREA_MM2: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectKind {
    NonFiniteCoordinate,
    DegenerateFace,
    NonManifoldEdge,
    BoundaryEdge,
    InconsistentWinding,
    InvertedOrientation,
}

impl fmt::Display for DefectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::NonFiniteCoordinate => "non_finite_coordinate",
            Self::DegenerateFace => "degenerate_face",
            Self::NonManifoldEdge => "non_manifold_edge",
            Self::BoundaryEdge => "boundary_edge",
            Self::InconsistentWinding => "inconsistent_winding",
            Self::InvertedOrientation => "inverted_orientation",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectRef {
    Vertex(usize),
    Face(usize),
    /// Undirected edge, smaller vertex index first.
    Edge(usize, usize),
    Mesh,
}

impl fmt::Display for DefectRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Vertex(v) => write!(f, "vertex {v}"),
            Self::Face(i) => write!(f, "face {i}"),
            Self::Edge(a, b) => write!(f, "edge {a}-{b}"),
            Self::Mesh => f.write_str("mesh"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Defect {
    pub kind: DefectKind,
    pub at: DefectRef,
    pub detail: String,
}

impl fmt::Display for Defect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}: {}", self.kind, self.at, self.detail)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Every edge borders exactly two faces.
    pub watertight: bool,
    /// No edge borders more than two faces.
    pub edge_manifold: bool,
    /// No directed edge is used by more than one face.
    pub oriented_consistently: bool,
    pub signed_volume_mm3: f64,
    pub defects: Vec<Defect>,
    /// Defects that were repaired before this report was produced.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fixes: Vec<Defect>,
}

impl ValidationReport {
    pub fn passes(&self) -> bool {
        self.defects.is_empty()
    }

    pub fn count(&self, kind: DefectKind) -> usize {
        self.defects.iter().filter(|d| d.kind == kind).count()
    }
}

/// Runs every check and lists each defect found. Never fails.
pub fn validate_mesh<T: Scalar>(mesh: &TriangleMesh<T>) -> ValidationReport {
    let mut defects = Vec::new();

    for (i, v) in mesh.vertices().iter().enumerate() {
        if !v.is_finite() {
            defects.push(Defect {
                kind: DefectKind::NonFiniteCoordinate,
                at: DefectRef::Vertex(i),
                detail: format!("({}, {}, {})", v.x, v.y, v.z),
            });
        }
    }

    let min_area = T::lit(DEGENERATE_AREA_MM2);
    for (i, [a, b, c]) in mesh.triangles().enumerate() {
        let area = (b - a).cross(c - a).norm() * T::half();
        if !(area >= min_area) {
            defects.push(Defect {
                kind: DefectKind::DegenerateFace,
                at: DefectRef::Face(i),
                detail: format!("area {area:e} mm²"),
            });
        }
    }

    // undirected edge -> (face count, forward uses a->b with a<b, backward uses)
    let mut edges: HashMap<(usize, usize), (usize, usize, usize)> = HashMap::new();
    for f in mesh.faces() {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            let e = edges.entry((a.min(b), a.max(b))).or_default();
            e.0 += 1;
            if a < b {
                e.1 += 1;
            } else {
                e.2 += 1;
            }
        }
    }
    let mut sorted: Vec<_> = edges.into_iter().collect();
    sorted.sort_unstable_by_key(|(k, _)| *k);

    let (mut watertight, mut manifold, mut consistent) = (true, true, true);
    for ((a, b), (count, fwd, bwd)) in sorted {
        let at = DefectRef::Edge(a, b);
        match count {
            1 => {
                watertight = false;
                defects.push(Defect {
                    kind: DefectKind::BoundaryEdge,
                    at,
                    detail: "edge borders a single face".into(),
                });
            }
            2 => {}
            n => {
                watertight = false;
                manifold = false;
                defects.push(Defect {
                    kind: DefectKind::NonManifoldEdge,
                    at,
                    detail: format!("edge borders {n} faces"),
                });
            }
        }
        if fwd > 1 || bwd > 1 {
            consistent = false;
            defects.push(Defect {
                kind: DefectKind::InconsistentWinding,
                at,
                detail: format!("traversed {fwd} times forward and {bwd} times backward"),
            });
        }
    }

    let volume = mesh.signed_volume().to_f64_lossy();
    if watertight && consistent && volume < 0.0 {
        defects.push(Defect {
            kind: DefectKind::InvertedOrientation,
            at: DefectRef::Mesh,
            detail: format!("signed volume {volume:e} mm³"),
        });
    }

    ValidationReport {
        watertight,
        edge_manifold: manifold,
        oriented_consistently: consistent,
        signed_volume_mm3: volume,
        defects,
        fixes: Vec::new(),
    }
}

/// Flips all windings of a closed, consistently wound mesh whose signed
/// volume is negative. The returned report describes the returned mesh and
/// lists the flip under `fixes`.
pub fn orient_outward<T: Scalar>(mesh: &TriangleMesh<T>) -> (TriangleMesh<T>, ValidationReport) {
    let report = validate_mesh(mesh);
    let inverted: Vec<Defect> = report
        .defects
        .iter()
        .filter(|d| d.kind == DefectKind::InvertedOrientation)
        .cloned()
        .collect();
    if inverted.is_empty() {
        return (mesh.clone(), report);
    }
    let flipped = mesh.flipped();
    let mut fixed = validate_mesh(&flipped);
    fixed.fixes = inverted;
    (flipped, fixed)
}
