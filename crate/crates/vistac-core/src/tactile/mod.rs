//! Gel-sensor tactile processing: calibration of the RGB-to-gradient
//! mapping from known-radius ball presses, normal computation, Poisson
//! depth integration, and contact extraction.
//!
//! Conventions (sensor frame): x along image columns, y along image rows,
//! both in meters from the gel center; `f` is the indentation height field
//! (positive where the object presses in, zero on the free gel). Surface
//! normals are `(df/dx, df/dy, -1)` normalized, so their z component is
//! always negative: they point from the gel into the object.

mod calibrate;
mod contact;
mod poisson;
mod reflectance;

pub use calibrate::{calibrate, rgb_to_gradients, BallPress, CalibrationModel};
pub use contact::{
    extract_contact, gradients_to_normals, process_frame, to_world, TactilePatch,
    CONTACT_THRESHOLD,
};
pub use poisson::poisson_integrate;
pub use reflectance::{reflectance_rgb, render_tactile_rgb};

use crate::img::{GrayImage, RgbImage};
use crate::math::Iso3;
use crate::{Error, Result};

/// Tactile image width in pixels.
pub const TACTILE_W: usize = 320;
/// Tactile image height in pixels.
pub const TACTILE_H: usize = 240;

/// Physical gel patch geometry.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SensorSpec {
    /// Meters per pixel.
    pub pixel_pitch: f64,
}

impl Default for SensorSpec {
    fn default() -> Self {
        // 20 mm x 15 mm patch at 320 x 240.
        Self { pixel_pitch: 62.5e-6 }
    }
}

impl SensorSpec {
    pub fn width_m(&self) -> f64 {
        self.pixel_pitch * TACTILE_W as f64
    }

    pub fn height_m(&self) -> f64 {
        self.pixel_pitch * TACTILE_H as f64
    }

    /// Sensor-frame (x, y) of a pixel center.
    pub fn pixel_to_sensor(&self, row: usize, col: usize) -> (f64, f64) {
        (
            (col as f64 + 0.5 - TACTILE_W as f64 / 2.0) * self.pixel_pitch,
            (row as f64 + 0.5 - TACTILE_H as f64 / 2.0) * self.pixel_pitch,
        )
    }
}

/// One raw tactile capture: RGB image plus the sensor pose.
#[derive(Debug, Clone)]
pub struct TactileFrame {
    pub rgb: RgbImage,
    /// Rigid transform world -> sensor.
    pub pose: Iso3,
    pub spec: SensorSpec,
}

impl TactileFrame {
    pub fn new(rgb: RgbImage, pose: Iso3, spec: SensorSpec) -> Result<Self> {
        if rgb.w != TACTILE_W || rgb.h != TACTILE_H {
            return Err(Error::DimensionMismatch(format!(
                "tactile frame must be {TACTILE_W}x{TACTILE_H}, got {}x{}",
                rgb.w, rgb.h
            )));
        }
        Ok(Self { rgb, pose, spec })
    }
}

/// Per-pixel surface gradient fields (df/dx, df/dy), dimensionless slope.
#[derive(Debug, Clone)]
pub struct GradientMap {
    pub gx: GrayImage,
    pub gy: GrayImage,
}

impl GradientMap {
    pub fn zeros(w: usize, h: usize) -> Self {
        Self { gx: GrayImage::new(w, h, 0.0), gy: GrayImage::new(w, h, 0.0) }
    }

    pub fn w(&self) -> usize {
        self.gx.w
    }

    pub fn h(&self) -> usize {
        self.gx.h
    }
}
