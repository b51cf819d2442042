use std::cmp::Ordering;

use super::LayerContours;
use crate::geom::Vec2;
use crate::scalar::Scalar;

/// Open polyline in a layer plane.
pub type Polyline<T> = Vec<Vec2<T>>;

/// Rectilinear infill alternates between 0° and 90° on successive layers.
pub fn infill_angle_for_layer(index: usize) -> f64 {
    if index.is_multiple_of(2) {
        0.0
    } else {
        90.0
    }
}

/// Parallel lines at `angle_deg`, `spacing_mm` apart, clipped to the region
/// enclosed by the layer loops under the even-odd rule.
///
/// Scan lines sit at half a spacing from the region's lower edge (in the
/// rotated frame) so a region narrower than the spacing yields at most one
/// line. Successive lines alternate direction.
pub fn generate_infill<T: Scalar>(layer: &LayerContours<T>, spacing_mm: T, angle_deg: T) -> Vec<Polyline<T>> {
    if !(spacing_mm > T::zero()) || layer.loops.is_empty() {
        return Vec::new();
    }
    let angle = angle_deg.to_radians();
    // rotate the region so scan lines become horizontal
    let loops: Vec<Vec<Vec2<T>>> = layer
        .loops
        .iter()
        .map(|l| l.iter().map(|p| p.rotate(-angle)).collect())
        .collect();

    let (mut y_min, mut y_max) = (T::infinity(), T::neg_infinity());
    for p in loops.iter().flatten() {
        y_min = y_min.min(p.y);
        y_max = y_max.max(p.y);
    }

    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let y = y_min + (T::lit(k as f64) + T::half()) * spacing_mm;
        if !(y < y_max) {
            break;
        }
        let mut xs = scan_crossings(&loops, y);
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
        let mut row: Vec<Polyline<T>> = xs
            .chunks_exact(2)
            .filter(|pair| pair[1] > pair[0])
            .map(|pair| vec![Vec2::new(pair[0], y).rotate(angle), Vec2::new(pair[1], y).rotate(angle)])
            .collect();
        if k % 2 == 1 {
            row.reverse();
            for seg in &mut row {
                seg.reverse();
            }
        }
        out.extend(row);
        k += 1;
    }
    out
}

/// x-coordinates where the horizontal line at `y` crosses loop edges,
/// using the half-open rule so shared vertices count once.
fn scan_crossings<T: Scalar>(loops: &[Vec<Vec2<T>>], y: T) -> Vec<T> {
    let mut xs = Vec::new();
    for l in loops {
        for w in l.windows(2) {
            let (a, b) = (w[0], w[1]);
            if (a.y > y) != (b.y > y) {
                xs.push(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
    }
    xs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(size: f64) -> LayerContours<f64> {
        let pts = [(0.0, 0.0), (size, 0.0), (size, size), (0.0, size), (0.0, 0.0)];
        LayerContours { index: 0, z_mm: 0.1, loops: vec![pts.iter().map(|&(x, y)| Vec2::new(x, y)).collect()] }
    }

    #[test]
    fn square_gets_five_lines() {
        let lines = generate_infill(&square(10.0), 2.0, 0.0);
        assert_eq!(lines.len(), 5);
        for (i, l) in lines.iter().enumerate() {
            assert_eq!(l.len(), 2);
            assert!((l[0].distance(l[1]) - 10.0).abs() < 1e-12);
            assert_eq!(l[0].y, 1.0 + 2.0 * i as f64);
        }
        // zig-zag ordering
        assert!(lines[0][0].x < lines[0][1].x);
        assert!(lines[1][0].x > lines[1][1].x);
    }

    #[test]
    fn rotated_lines_are_vertical() {
        let lines = generate_infill(&square(10.0), 2.0, 90.0);
        assert_eq!(lines.len(), 5);
        for l in &lines {
            assert!((l[0].x - l[1].x).abs() < 1e-9);
            assert!((l[0].distance(l[1]) - 10.0).abs() < 1e-9);
        }
    }

    #[test]
    fn wide_spacing_gives_at_most_one_line() {
        assert!(generate_infill(&square(10.0), 20.0, 0.0).len() <= 1);
        assert_eq!(generate_infill(&square(10.0), 15.0, 0.0).len(), 1);
    }

    #[test]
    fn hole_splits_lines() {
        let mut layer = square(10.0);
        let hole = [(3.0, 3.0), (3.0, 7.0), (7.0, 7.0), (7.0, 3.0), (3.0, 3.0)];
        layer.loops.push(hole.iter().map(|&(x, y)| Vec2::new(x, y)).collect());
        let lines = generate_infill(&layer, 2.0, 0.0);
        // half-open crossings: rows y = 3 and y = 5 are split by the hole, y = 7 is not
        let total: f64 = lines.iter().map(|l| l[0].distance(l[1])).sum();
        assert!((total - (10.0 * 3.0 + 6.0 * 2.0)).abs() < 1e-9, "{total}");
    }

    #[test]
    fn empty_and_degenerate_inputs() {
        let empty = LayerContours::<f64> { index: 0, z_mm: 0.0, loops: vec![] };
        assert!(generate_infill(&empty, 2.0, 0.0).is_empty());
        assert!(generate_infill(&square(10.0), 0.0, 0.0).is_empty());
        assert!(generate_infill(&square(10.0), -1.0, 0.0).is_empty());
    }

    #[test]
    fn alternates_angle() {
        assert_eq!(infill_angle_for_layer(0), 0.0);
        assert_eq!(infill_angle_for_layer(1), 90.0);
        assert_eq!(infill_angle_for_layer(2), 0.0);
    }
}
