use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toolsmith_core::geom::Vec2;
use toolsmith_core::slicer::{
    emit_gcode, extrusion_per_mm, gcode_stats, generate_infill, slice_mesh, GcodeCommand, LayerContours,
    PrinterProfile, SliceError,
};
use toolsmith_core::testkit::{
    axis_box, convex_section_area, point_in_polygon, random_convex_polyhedron, random_star_polygon, shoelace, shuffled,
};
use toolsmith_core::Vec3d;

fn profile() -> PrinterProfile<f64> {
    PrinterProfile::default()
}

fn canonical(layer: &LayerContours<f64>) -> Vec<Vec<(u64, u64)>> {
    let mut loops: Vec<Vec<(u64, u64)>> = layer
        .loops
        .iter()
        .map(|l| {
            let mut pts: Vec<(u64, u64)> = l[..l.len() - 1].iter().map(|p| (p.x.to_bits(), p.y.to_bits())).collect();
            pts.sort_unstable();
            pts
        })
        .collect();
    loops.sort();
    loops
}

#[test]
fn cube_layers_are_square_loops() {
    let layers = slice_mesh(&axis_box(20.0, 20.0, 20.0), &profile()).unwrap();
    assert_eq!(layers.len(), 100);
    for l in &layers {
        assert_eq!(l.loops.len(), 1);
        assert!((l.perimeter() - 80.0).abs() < 1e-6);
    }
}

#[test]
fn cross_section_area_matches_convex_oracle() {
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let n = rng.gen_range(8..20);
        let mesh = random_convex_polyhedron(&mut rng, n);
        let layers = slice_mesh(&mesh, &profile()).unwrap();
        assert!(!layers.is_empty(), "seed {seed}");
        for l in &layers {
            let oracle = convex_section_area(&mesh, l.z_mm);
            let got = l.area();
            assert!((got - oracle).abs() <= 1e-6 * oracle.max(1e-3), "seed {seed} z {} got {got} oracle {oracle}", l.z_mm);
        }
    }
}

#[test]
fn loops_close_and_stay_inside_the_bounding_box() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mesh = random_convex_polyhedron(&mut rng, 12);
        let bb = mesh.bounding_box().inflate(1e-6);
        let layers = slice_mesh(&mesh, &profile()).unwrap();
        for w in layers.windows(2) {
            assert!((w[1].z_mm - w[0].z_mm - 0.2).abs() < 1e-9);
            assert!(w[1].z_mm > w[0].z_mm);
        }
        for l in &layers {
            for ring in &l.loops {
                assert!(ring.len() >= 4);
                assert!(ring[0].distance(*ring.last().unwrap()) <= 1e-6);
                for p in ring {
                    assert!(bb.contains(Vec3d::new(p.x, p.y, l.z_mm)));
                }
            }
        }
    }
}

#[test]
fn slicing_ignores_vertex_and_face_order() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(77 + seed);
        let mesh = random_convex_polyhedron(&mut rng, 14);
        let other = shuffled(&mut rng, &mesh);
        let a = slice_mesh(&mesh, &profile()).unwrap();
        let b = slice_mesh(&other, &profile()).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.z_mm.to_bits(), y.z_mm.to_bits());
            assert_eq!(canonical(x), canonical(y), "seed {seed}");
        }
    }
}

#[test]
fn parallel_slicing_matches_single_threaded() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mesh = random_convex_polyhedron(&mut rng, 18);
    let parallel = slice_mesh(&mesh, &profile()).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let serial = pool.install(|| slice_mesh(&mesh, &profile()).unwrap());
    let text = |layers: &[LayerContours<f64>]| {
        let infill: Vec<_> = layers.iter().map(|l| generate_infill(l, 2.0, 0.0)).collect();
        let mut centered = layers.to_vec();
        for l in &mut centered {
            for ring in &mut l.loops {
                for p in ring.iter_mut() {
                    *p = Vec2::new(p.x + 110.0, p.y + 110.0);
                }
            }
        }
        let infill: Vec<Vec<Vec<Vec2<f64>>>> = infill
            .into_iter()
            .map(|ls| ls.into_iter().map(|l| l.into_iter().map(|p| Vec2::new(p.x + 110.0, p.y + 110.0)).collect()).collect())
            .collect();
        emit_gcode(&centered, &infill, &profile()).unwrap().to_text()
    };
    assert_eq!(text(&parallel), text(&serial));
}

#[test]
fn infill_midpoints_lie_inside_random_polygons() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(5..20);
        let mut ring = random_star_polygon(&mut rng, n, Vec2::new(0.0, 0.0), 3.0, 25.0);
        assert!(shoelace(&ring) > 0.0);
        ring.push(ring[0]);
        let layer = LayerContours { index: 0, z_mm: 0.1, loops: vec![ring.clone()] };
        let spacing = rng.gen_range(0.5..4.0);
        let angle = if seed % 2 == 0 { 0.0 } else { rng.gen_range(0.0..180.0) };
        let lines = generate_infill(&layer, spacing, angle);
        assert!(!lines.is_empty(), "seed {seed}");
        for line in &lines {
            for w in line.windows(2) {
                let mid = Vec2::new(0.5 * (w[0].x + w[1].x), 0.5 * (w[0].y + w[1].y));
                assert!(point_in_polygon(mid, &[ring.clone()]), "seed {seed}");
            }
        }
    }
}

#[test]
fn wide_spacing_gives_at_most_one_line() {
    let square: Vec<Vec2<f64>> = vec![
        Vec2::new(0.0, 0.0),
        Vec2::new(10.0, 0.0),
        Vec2::new(10.0, 10.0),
        Vec2::new(0.0, 10.0),
        Vec2::new(0.0, 0.0),
    ];
    let layer = LayerContours { index: 0, z_mm: 0.1, loops: vec![square] };
    assert!(generate_infill(&layer, 25.0, 0.0).len() <= 1);
    let five = generate_infill(&layer, 2.0, 0.0);
    assert_eq!(five.len(), 5);
    for l in &five {
        assert!((l[0].distance(*l.last().unwrap()) - 10.0).abs() < 1e-9);
    }
}

#[test]
fn extrusion_is_conserved_between_geometry_and_program() {
    let mesh = axis_box(30.0, 12.0, 6.0).translated(Vec3d::new(95.0, 100.0, 0.0)).unwrap();
    let p = profile();
    let layers = slice_mesh(&mesh, &p).unwrap();
    let infill: Vec<_> = layers.iter().map(|l| generate_infill(l, p.infill_spacing_mm, 90.0 * (l.index % 2) as f64)).collect();
    let program = emit_gcode(&layers, &infill, &p).unwrap();
    let stats = gcode_stats(&program);

    let geometric: f64 = layers
        .iter()
        .zip(&infill)
        .map(|(l, fill)| {
            let len = |pts: &[Vec2<f64>]| pts.windows(2).map(|w| w[0].distance(w[1])).sum::<f64>();
            l.loops.iter().map(|r| len(r)).sum::<f64>() + fill.iter().map(|r| len(r)).sum::<f64>()
        })
        .sum();
    assert!((stats.extruded_path_mm - geometric).abs() <= 1e-9 * geometric);
    let expected_e = geometric * (0.2 * 0.4) / (std::f64::consts::PI * 1.75 * 1.75 / 4.0);
    assert!((stats.filament_mm - expected_e).abs() <= 1e-9 * expected_e);
    assert!((extrusion_per_mm(&p) - 0.08 / (std::f64::consts::PI * 1.75 * 1.75 / 4.0)).abs() < 1e-15);

    let mut last_z = f64::NEG_INFINITY;
    for c in &program.commands {
        match c {
            GcodeCommand::Extrude { to, e_mm, .. } => {
                assert!(*e_mm > 0.0);
                assert!(to.z >= last_z);
                last_z = to.z;
            }
            GcodeCommand::Travel { to, .. } => assert!(to.z >= last_z),
            GcodeCommand::Setup { .. } => {}
        }
    }
    assert_eq!(stats.layer_count, layers.len());
}

#[test]
fn square_loop_extrusion_hand_value() {
    let square = vec![
        Vec2::new(10.0, 10.0),
        Vec2::new(30.0, 10.0),
        Vec2::new(30.0, 30.0),
        Vec2::new(10.0, 30.0),
        Vec2::new(10.0, 10.0),
    ];
    let layer = LayerContours { index: 0, z_mm: 0.1, loops: vec![square] };
    let stats = gcode_stats(&emit_gcode(&[layer], &[], &profile()).unwrap());
    assert!((stats.filament_mm - 2.6607).abs() < 1e-3);
    assert!((stats.extruded_path_mm - 80.0).abs() < 1e-12);
}

#[test]
fn program_errors() {
    assert_eq!(emit_gcode::<f64>(&[], &[], &profile()), Err(SliceError::EmptyLayers));
    let off_bed = LayerContours {
        index: 0,
        z_mm: 0.1,
        loops: vec![vec![Vec2::new(-1.0, 0.0), Vec2::new(5.0, 0.0), Vec2::new(5.0, 5.0), Vec2::new(-1.0, 0.0)]],
    };
    assert!(matches!(emit_gcode(&[off_bed], &[], &profile()), Err(SliceError::ExceedsBed { .. })));
    let thin = axis_box(10.0, 10.0, 0.05);
    assert!(slice_mesh(&thin, &profile()).unwrap().is_empty());
}

#[test]
fn stats_arithmetic() {
    use toolsmith_core::slicer::GcodeProgram;
    let empty: GcodeProgram<f64> = GcodeProgram { header: vec!["; h".into()], commands: vec![], footer: vec![] };
    let s = gcode_stats(&empty);
    assert_eq!((s.extruded_path_mm, s.travel_path_mm, s.filament_mm, s.layer_count, s.estimated_seconds), (0.0, 0.0, 0.0, 0, 0.0));
    let one = GcodeProgram {
        header: vec![],
        commands: vec![GcodeCommand::Extrude { to: Vec3d::new(10.0, 0.0, 0.0), e_mm: 0.3, feed: 600.0 }],
        footer: vec![],
    };
    let s = gcode_stats(&one);
    assert!((s.estimated_seconds - 1.0).abs() < 1e-12);
    assert_eq!(s.filament_mm, 0.3);
}
