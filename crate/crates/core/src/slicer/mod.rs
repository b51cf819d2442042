//! Mesh slicing, rectilinear infill and G-code emission.

mod contour;
mod gcode;
mod infill;

pub use contour::{slice_mesh, LayerContours, COPLANAR_NUDGE_MM, SNAP_TOLERANCE_MM};
pub use gcode::{
    emit_gcode, extrusion_per_mm, gcode_stats, GcodeCommand, GcodeProgram, GcodeStats,
    GCODE_FOOTER, GCODE_PREAMBLE,
};
pub use infill::{generate_infill, infill_angle_for_layer, Polyline};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec3;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SliceError {
    #[error("mesh is not watertight ({0} defective edges)")]
    NotWatertight(usize),
    #[error("mesh faces point inward (signed volume {0})")]
    InwardOrientation(f64),
    #[error("layer {layer} at z={z_mm}: contour does not close ({detail})")]
    OpenContour { layer: usize, z_mm: f64, detail: String },
    #[error("no layers to emit")]
    EmptyLayers,
    #[error("point ({x}, {y}, {z}) lies outside the printer bed")]
    ExceedsBed { x: f64, y: f64, z: f64 },
    #[error("invalid printer profile: {0}")]
    InvalidProfile(String),
}

/// Fabrication parameters. Lengths in millimeters, feeds in mm/min.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrinterProfile<T> {
    pub layer_height_mm: T,
    pub line_width_mm: T,
    pub filament_diameter_mm: T,
    pub print_feed_mm_per_min: T,
    pub travel_feed_mm_per_min: T,
    pub bed_size_mm: Vec3<T>,
    pub infill_spacing_mm: T,
}

impl<T: Scalar> Default for PrinterProfile<T> {
    fn default() -> Self {
        Self {
            layer_height_mm: T::lit(0.2),
            line_width_mm: T::lit(0.4),
            filament_diameter_mm: T::lit(1.75),
            print_feed_mm_per_min: T::lit(1800.0),
            travel_feed_mm_per_min: T::lit(6000.0),
            bed_size_mm: Vec3::new(T::lit(220.0), T::lit(220.0), T::lit(250.0)),
            infill_spacing_mm: T::lit(2.0),
        }
    }
}

impl<T: Scalar> PrinterProfile<T> {
    pub fn validate(&self) -> Result<(), SliceError> {
        let fields = [
            ("layer_height_mm", self.layer_height_mm),
            ("line_width_mm", self.line_width_mm),
            ("filament_diameter_mm", self.filament_diameter_mm),
            ("print_feed_mm_per_min", self.print_feed_mm_per_min),
            ("travel_feed_mm_per_min", self.travel_feed_mm_per_min),
            ("bed_size_mm.x", self.bed_size_mm.x),
            ("bed_size_mm.y", self.bed_size_mm.y),
            ("bed_size_mm.z", self.bed_size_mm.z),
            ("infill_spacing_mm", self.infill_spacing_mm),
        ];
        for (name, v) in fields {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(SliceError::InvalidProfile(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.layer_height_mm < self.line_width_mm * T::two()) {
            return Err(SliceError::InvalidProfile(format!(
                "layer_height_mm {} must be below twice line_width_mm {}",
                self.layer_height_mm, self.line_width_mm
            )));
        }
        Ok(())
    }
}
