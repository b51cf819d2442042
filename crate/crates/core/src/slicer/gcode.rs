use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{LayerContours, Polyline, PrinterProfile, SliceError};
use crate::geom::{Vec2, Vec3};
use crate::scalar::Scalar;

/// Fixed machine-setup lines emitted after the profile echo.
pub const GCODE_PREAMBLE: &[&str] = &[
    "G21 ; units: millimeters",
    "G90 ; absolute XYZ positioning",
    "M83 ; relative extrusion",
    "M104 S210 ; hotend temperature placeholder",
    "M140 S60 ; bed temperature placeholder",
    "G28 ; home all axes",
];

pub const GCODE_FOOTER: &[&str] = &[
    "; end of program",
    "M104 S0 ; hotend off",
    "M140 S0 ; bed off",
    "M84 ; motors off",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GcodeCommand<T> {
    /// Non-motion line emitted verbatim (comments, layer markers).
    Setup { line: String },
    /// Extrusion-free move.
    Travel { to: Vec3<T>, feed: T },
    /// Printing move; `e_mm` is relative filament length, always positive.
    Extrude { to: Vec3<T>, e_mm: T, feed: T },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcodeProgram<T> {
    pub header: Vec<String>,
    pub commands: Vec<GcodeCommand<T>>,
    pub footer: Vec<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GcodeStats<T> {
    pub extruded_path_mm: T,
    pub travel_path_mm: T,
    pub filament_mm: T,
    pub layer_count: usize,
    pub estimated_seconds: T,
}

/// Filament length per millimeter of deposited line:
/// `(layer_height * line_width) / (pi * d^2 / 4)`.
pub fn extrusion_per_mm<T: Scalar>(profile: &PrinterProfile<T>) -> T {
    let d = profile.filament_diameter_mm;
    let filament_area = T::PI() * d * d / T::lit(4.0);
    profile.layer_height_mm * profile.line_width_mm / filament_area
}

/// Turns per-layer perimeters and infill into a program: for each layer the
/// loops are printed first, then the infill polylines. `infill[k]` belongs to
/// `layers[k]`; missing entries mean no infill.
pub fn emit_gcode<T: Scalar>(
    layers: &[LayerContours<T>],
    infill: &[Vec<Polyline<T>>],
    profile: &PrinterProfile<T>,
) -> Result<GcodeProgram<T>, SliceError> {
    profile.validate()?;
    if layers.is_empty() {
        return Err(SliceError::EmptyLayers);
    }
    let per_mm = extrusion_per_mm(profile);
    let bed = profile.bed_size_mm;
    let check = |p: Vec3<T>| -> Result<Vec3<T>, SliceError> {
        let inside = (0..3).all(|i| p[i] >= T::zero() && p[i] <= bed[i]);
        if inside {
            Ok(p)
        } else {
            Err(SliceError::ExceedsBed { x: p.x.to_f64_lossy(), y: p.y.to_f64_lossy(), z: p.z.to_f64_lossy() })
        }
    };

    let mut commands = Vec::new();
    for (k, layer) in layers.iter().enumerate() {
        let z = layer.z_mm + profile.layer_height_mm * T::half();
        commands.push(GcodeCommand::Setup { line: format!(";LAYER:{k} Z{}", fixed(z, 3)) });
        let paths = layer
            .loops
            .iter()
            .map(Vec::as_slice)
            .chain(infill.get(k).into_iter().flatten().map(Vec::as_slice));
        for path in paths {
            let Some((first, rest)) = path.split_first() else { continue };
            let lift = |p: &Vec2<T>| Vec3::new(p.x, p.y, z);
            let mut at = check(lift(first))?;
            commands.push(GcodeCommand::Travel { to: at, feed: profile.travel_feed_mm_per_min });
            for p in rest {
                let to = check(lift(p))?;
                let len = to.distance(at);
                if len > T::zero() {
                    commands.push(GcodeCommand::Extrude {
                        to,
                        e_mm: len * per_mm,
                        feed: profile.print_feed_mm_per_min,
                    });
                }
                at = to;
            }
        }
    }

    Ok(GcodeProgram { header: header_lines(profile), commands, footer: GCODE_FOOTER.iter().map(|s| s.to_string()).collect() })
}

fn header_lines<T: Scalar>(p: &PrinterProfile<T>) -> Vec<String> {
    let mut h = vec![
        "; toolsmith G-code (marlin dialect)".to_string(),
        format!("; layer_height_mm = {}", p.layer_height_mm),
        format!("; line_width_mm = {}", p.line_width_mm),
        format!("; filament_diameter_mm = {}", p.filament_diameter_mm),
        format!("; print_feed_mm_per_min = {}", p.print_feed_mm_per_min),
        format!("; travel_feed_mm_per_min = {}", p.travel_feed_mm_per_min),
        format!("; infill_spacing_mm = {}", p.infill_spacing_mm),
        format!("; bed_size_mm = {} {} {}", p.bed_size_mm.x, p.bed_size_mm.y, p.bed_size_mm.z),
    ];
    h.extend(GCODE_PREAMBLE.iter().map(|s| s.to_string()));
    h
}

/// Fixed-point rendering without a negative zero.
fn fixed<T: Scalar>(v: T, decimals: usize) -> String {
    let s = format!("{:.*}", decimals, v);
    match s.strip_prefix('-') {
        Some(rest) if rest.chars().all(|c| c == '0' || c == '.') => rest.to_string(),
        _ => s,
    }
}

impl<T: Scalar> GcodeProgram<T> {
    /// Renders newline-terminated G-code text. Coordinates use three
    /// decimals, extrusion five, feeds none.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for line in &self.header {
            out.push_str(line);
            out.push('\n');
        }
        for c in &self.commands {
            let _ = match c {
                GcodeCommand::Setup { line } => writeln!(out, "{line}"),
                GcodeCommand::Travel { to, feed } => writeln!(
                    out,
                    "G0 X{} Y{} Z{} F{}",
                    fixed(to.x, 3),
                    fixed(to.y, 3),
                    fixed(to.z, 3),
                    fixed(*feed, 0)
                ),
                GcodeCommand::Extrude { to, e_mm, feed } => writeln!(
                    out,
                    "G1 X{} Y{} E{} F{}",
                    fixed(to.x, 3),
                    fixed(to.y, 3),
                    fixed(*e_mm, 5),
                    fixed(*feed, 0)
                ),
            };
        }
        for line in &self.footer {
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}

/// Path lengths per move kind, filament use, distinct print heights and a
/// feed-rate time estimate. The head starts at the origin (after homing).
pub fn gcode_stats<T: Scalar>(program: &GcodeProgram<T>) -> GcodeStats<T> {
    let sixty = T::lit(60.0);
    let mut stats = GcodeStats {
        extruded_path_mm: T::zero(),
        travel_path_mm: T::zero(),
        filament_mm: T::zero(),
        layer_count: 0,
        estimated_seconds: T::zero(),
    };
    let mut at = Vec3::zero();
    let mut last_print_z: Option<T> = None;
    for c in &program.commands {
        match c {
            GcodeCommand::Setup { .. } => {}
            GcodeCommand::Travel { to, feed } => {
                let len = to.distance(at);
                stats.travel_path_mm += len;
                stats.estimated_seconds += len / *feed * sixty;
                at = *to;
            }
            GcodeCommand::Extrude { to, e_mm, feed } => {
                let len = to.distance(at);
                stats.extruded_path_mm += len;
                stats.filament_mm += *e_mm;
                stats.estimated_seconds += len / *feed * sixty;
                if last_print_z != Some(to.z) {
                    stats.layer_count += 1;
                    last_print_z = Some(to.z);
                }
                at = *to;
            }
        }
    }
    stats
}
