use std::cmp::Ordering;
use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{PrinterProfile, SliceError};
use crate::geom::{Vec2, Vec3};
use crate::mesh::{validate_mesh, DefectKind, TriangleMesh};
use crate::scalar::Scalar;

/// Maximum gap tolerated between consecutive segment endpoints of a loop.
pub const SNAP_TOLERANCE_MM: f64 = 1e-6;
/// Plane offset used when a slicing plane passes through a vertex.
pub const COPLANAR_NUDGE_MM: f64 = 1e-7;

/// Closed contours of one slicing plane.
///
/// Each loop repeats its first point at the end. Outer boundaries run
/// counter-clockwise seen from +z, holes clockwise; loops are ordered by
/// descending signed area so outer boundaries come first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerContours<T> {
    pub index: usize,
    pub z_mm: T,
    pub loops: Vec<Vec<Vec2<T>>>,
}

impl<T: Scalar> LayerContours<T> {
    /// Net enclosed area (holes subtract).
    pub fn area(&self) -> T {
        self.loops.iter().map(|l| signed_area(l)).sum()
    }

    pub fn perimeter(&self) -> T {
        self.loops.iter().map(|l| polyline_length(l)).sum()
    }
}

pub(crate) fn signed_area<T: Scalar>(closed: &[Vec2<T>]) -> T {
    closed.windows(2).map(|w| w[0].perp_dot(w[1])).sum::<T>() * T::half()
}

pub(crate) fn polyline_length<T: Scalar>(pts: &[Vec2<T>]) -> T {
    pts.windows(2).map(|w| w[0].distance(w[1])).sum()
}

/// Cuts the mesh with horizontal planes at `z_min + (k + 1/2) * layer_height`
/// for every plane below `z_max`, and stitches each plane's intersection
/// segments into closed loops.
pub fn slice_mesh<T: Scalar>(
    mesh: &TriangleMesh<T>,
    profile: &PrinterProfile<T>,
) -> Result<Vec<LayerContours<T>>, SliceError> {
    profile.validate()?;
    let report = validate_mesh(mesh);
    if !report.watertight {
        let bad = report.count(DefectKind::BoundaryEdge) + report.count(DefectKind::NonManifoldEdge);
        return Err(SliceError::NotWatertight(bad));
    }
    if report.count(DefectKind::InvertedOrientation) > 0 {
        return Err(SliceError::InwardOrientation(report.signed_volume_mm3));
    }

    let bb = mesh.bounding_box();
    let h = profile.layer_height_mm;
    let mut planes = Vec::new();
    loop {
        let z = bb.min.z + (T::lit(planes.len() as f64) + T::half()) * h;
        if !(z < bb.max.z) {
            break;
        }
        planes.push(z);
    }

    // layers are independent; collect preserves plane order
    let results: Vec<Result<LayerContours<T>, SliceError>> = planes
        .par_iter()
        .enumerate()
        .map(|(index, &z)| {
            slice_plane(mesh, z).map(|loops| LayerContours { index, z_mm: z, loops }).map_err(|detail| {
                SliceError::OpenContour { layer: index, z_mm: z.to_f64_lossy(), detail }
            })
        })
        .collect();
    results.into_iter().collect()
}

struct Segment<T> {
    start_edge: (usize, usize),
    end_edge: (usize, usize),
    start: Vec2<T>,
    end: Vec2<T>,
}

fn effective_plane<T: Scalar>(vertices: &[Vec3<T>], z: T) -> T {
    let nudge = T::lit(COPLANAR_NUDGE_MM);
    let near = T::lit(COPLANAR_NUDGE_MM * 1e-2);
    let mut zc = z;
    for _ in 0..16 {
        if vertices.iter().all(|v| (v.z - zc).abs() > near) {
            break;
        }
        zc += nudge;
    }
    zc
}

/// Intersection of edge (u, v) with the plane, computed from the
/// lexicographically smaller endpoint so both adjacent faces get the same bits.
fn edge_point<T: Scalar>(vertices: &[Vec3<T>], u: usize, v: usize, zc: T) -> Vec2<T> {
    let (mut p, mut q) = (vertices[u], vertices[v]);
    if q.lex_cmp(&p) == Ordering::Less {
        std::mem::swap(&mut p, &mut q);
    }
    let t = (zc - p.z) / (q.z - p.z);
    p.xy().lerp(q.xy(), t)
}

fn slice_plane<T: Scalar>(mesh: &TriangleMesh<T>, z: T) -> Result<Vec<Vec<Vec2<T>>>, String> {
    let vertices = mesh.vertices();
    let zc = effective_plane(vertices, z);

    let mut segments = Vec::new();
    for f in mesh.faces() {
        let above = f.map(|i| vertices[i].z >= zc);
        if above[0] == above[1] && above[1] == above[2] {
            continue;
        }
        let (mut down, mut up) = (None, None);
        for k in 0..3 {
            let (i, j) = (f[k], f[(k + 1) % 3]);
            let (ai, aj) = (above[k], above[(k + 1) % 3]);
            if ai && !aj {
                down = Some((i, j));
            } else if !ai && aj {
                up = Some((i, j));
            }
        }
        // exactly one downward and one upward crossing per straddling triangle
        let (d, u) = (down.expect("straddling face crosses down"), up.expect("straddling face crosses up"));
        let key = |(a, b): (usize, usize)| (a.min(b), a.max(b));
        segments.push(Segment {
            start_edge: key(d),
            end_edge: key(u),
            start: edge_point(vertices, d.0, d.1, zc),
            end: edge_point(vertices, u.0, u.1, zc),
        });
    }

    let mut by_start: HashMap<(usize, usize), usize> = HashMap::with_capacity(segments.len());
    for (i, s) in segments.iter().enumerate() {
        if by_start.insert(s.start_edge, i).is_some() {
            return Err(format!("edge {:?} starts two segments", s.start_edge));
        }
    }

    let snap = T::lit(SNAP_TOLERANCE_MM);
    let mut used = vec![false; segments.len()];
    let mut loops = Vec::new();
    for first in 0..segments.len() {
        if used[first] {
            continue;
        }
        let mut pts = Vec::new();
        let mut cur = first;
        loop {
            used[cur] = true;
            let seg = &segments[cur];
            pts.push(seg.start);
            let next = *by_start
                .get(&seg.end_edge)
                .ok_or_else(|| format!("no segment continues from edge {:?}", seg.end_edge))?;
            if seg.end.distance(segments[next].start) > snap {
                return Err(format!("gap of {} mm at edge {:?}", seg.end.distance(segments[next].start), seg.end_edge));
            }
            if next == first {
                break;
            }
            if used[next] {
                return Err(format!("chain through edge {:?} revisits a segment", seg.end_edge));
            }
            cur = next;
        }
        if let Some(closed) = normalize_loop(pts) {
            loops.push(closed);
        }
    }

    loops.sort_by(|a, b| {
        signed_area(b)
            .partial_cmp(&signed_area(a))
            .unwrap_or(Ordering::Equal)
            .then_with(|| cmp_point(&a[0], &b[0]))
    });
    Ok(loops)
}

fn cmp_point<T: Scalar>(a: &Vec2<T>, b: &Vec2<T>) -> Ordering {
    a.x.partial_cmp(&b.x)
        .unwrap_or(Ordering::Equal)
        .then(a.y.partial_cmp(&b.y).unwrap_or(Ordering::Equal))
}

/// Drops repeated points, rotates the loop to start at its lexicographically
/// smallest point and closes it. Loops with fewer than 3 distinct points
/// are discarded.
fn normalize_loop<T: Scalar>(pts: Vec<Vec2<T>>) -> Option<Vec<Vec2<T>>> {
    let tiny = T::lit(1e-12);
    let mut clean: Vec<Vec2<T>> = Vec::with_capacity(pts.len());
    for p in pts {
        if clean.last().is_none_or(|q| q.distance(p) > tiny) {
            clean.push(p);
        }
    }
    while clean.len() > 1 && clean[0].distance(clean[clean.len() - 1]) <= tiny {
        clean.pop();
    }
    if clean.len() < 3 {
        return None;
    }
    let start = (0..clean.len()).min_by(|&i, &j| cmp_point(&clean[i], &clean[j]))?;
    clean.rotate_left(start);
    clean.push(clean[0]);
    Some(clean)
}
