//! Reference shapes, random generators and brute-force oracles for tests.
//! Every oracle here is written independently of the code it checks.

use std::collections::BTreeMap;

use rand::Rng;

use crate::geom::Vec2;
use crate::{Mesh, Vec3d};

/// Axis-aligned box `[0,a]x[0,b]x[0,c]` with outward winding.
pub fn axis_box(a: f64, b: f64, c: f64) -> Mesh {
    let v = |x: f64, y: f64, z: f64| Vec3d::new(x, y, z);
    let vertices = vec![
        v(0.0, 0.0, 0.0),
        v(a, 0.0, 0.0),
        v(a, b, 0.0),
        v(0.0, b, 0.0),
        v(0.0, 0.0, c),
        v(a, 0.0, c),
        v(a, b, c),
        v(0.0, b, c),
    ];
    let faces = vec![
        [0, 2, 1],
        [0, 3, 2],
        [4, 5, 6],
        [4, 6, 7],
        [0, 1, 5],
        [0, 5, 4],
        [1, 2, 6],
        [1, 6, 5],
        [2, 3, 7],
        [2, 7, 6],
        [3, 0, 4],
        [3, 4, 7],
    ];
    Mesh::new(vertices, faces).expect("valid box")
}

pub fn cube(size: f64) -> Mesh {
    axis_box(size, size, size)
}

/// Regular tetrahedron with outward winding.
pub fn tetrahedron() -> Mesh {
    let vertices = vec![
        Vec3d::new(1.0, 1.0, 1.0),
        Vec3d::new(1.0, -1.0, -1.0),
        Vec3d::new(-1.0, 1.0, -1.0),
        Vec3d::new(-1.0, -1.0, 1.0),
    ];
    let faces = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
    Mesh::new(vertices, faces).expect("valid tetrahedron")
}

/// Convex hull of `points` by testing every triple as a candidate face.
/// Assumes general position. Faces are wound outward.
pub fn brute_force_hull(points: &[Vec3d]) -> Option<Mesh> {
    let n = points.len();
    let mut faces = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                let (a, b, c) = (points[i], points[j], points[k]);
                let normal = (b - a).cross(c - a);
                if normal.norm() < 1e-12 {
                    continue;
                }
                let mut pos = 0;
                let mut neg = 0;
                for (m, p) in points.iter().enumerate() {
                    if m == i || m == j || m == k {
                        continue;
                    }
                    let s = normal.dot(*p - a);
                    if s > 1e-9 {
                        pos += 1;
                    } else if s < -1e-9 {
                        neg += 1;
                    }
                }
                if pos == 0 {
                    faces.push([i, j, k]);
                } else if neg == 0 {
                    faces.push([i, k, j]);
                }
            }
        }
    }
    let used: Vec<usize> = {
        let mut u: Vec<usize> = faces.iter().flatten().copied().collect();
        u.sort_unstable();
        u.dedup();
        u
    };
    let remap: BTreeMap<usize, usize> = used.iter().enumerate().map(|(new, &old)| (old, new)).collect();
    let vertices = used.iter().map(|&i| points[i]).collect();
    let faces = faces.into_iter().map(|f| f.map(|i| remap[&i])).collect();
    Mesh::new(vertices, faces).ok()
}

/// Random convex polyhedron: hull of random points on a sphere, stretched
/// and offset by a random affine map. Extent is tens of millimeters.
pub fn random_convex_polyhedron(rng: &mut impl Rng, n_points: usize) -> Mesh {
    loop {
        let scale = Vec3d::new(rng.gen_range(5.0..30.0), rng.gen_range(5.0..30.0), rng.gen_range(5.0..30.0));
        let shear = rng.gen_range(-0.3..0.3);
        let offset = Vec3d::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0), rng.gen_range(0.0..20.0));
        let points: Vec<Vec3d> = (0..n_points)
            .map(|_| {
                let z: f64 = rng.gen_range(-1.0..1.0);
                let t: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let r = (1.0 - z * z).sqrt();
                let u = Vec3d::new(r * t.cos(), r * t.sin(), z);
                Vec3d::new(u.x * scale.x + shear * u.z * scale.z, u.y * scale.y, u.z * scale.z) + offset
            })
            .collect();
        if let Some(m) = brute_force_hull(&points) {
            if m.vertices().len() >= 4 && oracle_watertight(m.faces()) {
                return m;
            }
        }
    }
}

/// Number of faces touching each undirected edge.
pub fn edge_incidence(faces: &[[usize; 3]]) -> BTreeMap<(usize, usize), usize> {
    let mut counts = BTreeMap::new();
    for f in faces {
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    counts
}

pub fn oracle_watertight(faces: &[[usize; 3]]) -> bool {
    edge_incidence(faces).values().all(|&c| c == 2)
}

pub fn oracle_edge_manifold(faces: &[[usize; 3]]) -> bool {
    edge_incidence(faces).values().all(|&c| c <= 2)
}

/// Cross-section area of a convex mesh at height `z`: collect the points
/// where edges cross the plane, take their 2D hull, apply the shoelace rule.
pub fn convex_section_area(mesh: &Mesh, z: f64) -> f64 {
    let v = mesh.vertices();
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for &(a, b) in edge_incidence(mesh.faces()).keys() {
        let (p, q) = (v[a], v[b]);
        if (p.z - z) * (q.z - z) < 0.0 {
            let t = (z - p.z) / (q.z - p.z);
            pts.push((p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)));
        }
    }
    let hull = hull_2d(pts);
    let n = hull.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n).map(|i| hull[i].0 * hull[(i + 1) % n].1 - hull[(i + 1) % n].0 * hull[i].1).sum();
    0.5 * twice.abs()
}

/// Monotone-chain convex hull, counter-clockwise.
fn hull_2d(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Even-odd containment: a rightward ray from `p` crosses an odd number of
/// edges across all loops.
pub fn point_in_polygon(p: Vec2<f64>, loops: &[Vec<Vec2<f64>>]) -> bool {
    let mut inside = false;
    for ring in loops {
        let n = ring.len();
        for i in 0..n {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
    }
    inside
}

/// Star-shaped simple polygon around `center`, counter-clockwise.
pub fn random_star_polygon(rng: &mut impl Rng, n: usize, center: Vec2<f64>, r_min: f64, r_max: f64) -> Vec<Vec2<f64>> {
    let step = std::f64::consts::TAU / n as f64;
    let angles: Vec<f64> = (0..n).map(|k| step * (k as f64 + rng.gen_range(0.0..0.8))).collect();
    angles
        .into_iter()
        .map(|t| {
            let r = rng.gen_range(r_min..r_max);
            Vec2::new(center.x + r * t.cos(), center.y + r * t.sin())
        })
        .collect()
}

/// Removes one face, leaving three boundary edges.
pub fn punch_hole(mesh: &Mesh, face: usize) -> Mesh {
    let mut faces = mesh.faces().to_vec();
    faces.remove(face);
    Mesh::new(mesh.vertices().to_vec(), faces).expect("still valid")
}

/// Adds a third face on one edge of `face`, making that edge non-manifold.
pub fn add_fin(mesh: &Mesh, face: usize) -> Mesh {
    let f = mesh.faces()[face];
    let [a, b, c] = mesh.triangle(face);
    let normal = (b - a).cross(c - a);
    let apex = (a + b) * 0.5 + normal * (1.0 / normal.norm().max(1e-12));
    let mut vertices = mesh.vertices().to_vec();
    vertices.push(apex);
    let mut faces = mesh.faces().to_vec();
    faces.push([f[0], f[1], vertices.len() - 1]);
    Mesh::new(vertices, faces).expect("still valid")
}

/// Adds a zero-area sliver face whose corners are collinear.
pub fn add_degenerate_face(mesh: &Mesh) -> Mesh {
    let [a, b, _] = mesh.triangle(0);
    let mut vertices = mesh.vertices().to_vec();
    vertices.push((a + b) * 0.5);
    let f = mesh.faces()[0];
    let mut faces = mesh.faces().to_vec();
    faces.push([f[0], f[1], vertices.len() - 1]);
    Mesh::new(vertices, faces).expect("still valid")
}

/// Reverses the winding of a single face.
pub fn flip_one_face(mesh: &Mesh, face: usize) -> Mesh {
    let mut faces = mesh.faces().to_vec();
    faces[face].swap(1, 2);
    Mesh::new(mesh.vertices().to_vec(), faces).expect("still valid")
}

/// Shoelace area of a closed loop, positive when counter-clockwise.
pub fn shoelace(ring: &[Vec2<f64>]) -> f64 {
    let n = ring.len();
    0.5 * (0..n).map(|i| ring[i].x * ring[(i + 1) % n].y - ring[(i + 1) % n].x * ring[i].y).sum::<f64>()
}

/// Re-indexes a mesh through a random vertex permutation and shuffles faces.
pub fn shuffled(rng: &mut impl Rng, mesh: &Mesh) -> Mesh {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..mesh.vertices().len()).collect();
    order.shuffle(rng);
    let permuted = mesh.permuted(&order).expect("permutation");
    let mut faces = permuted.faces().to_vec();
    faces.shuffle(rng);
    let faces = faces
        .into_iter()
        .map(|f| {
            let r = rng.gen_range(0..3);
            [f[r], f[(r + 1) % 3], f[(r + 2) % 3]]
        })
        .collect();
    Mesh::new(permuted.vertices().to_vec(), faces).expect("valid")
}

