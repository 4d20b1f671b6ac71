//! Plane-level execution: geometry, ADC, programmed cell state and the
//! CAM-gated compute cycle.

mod dimension;
mod engine;
mod image;
mod plane;

use serde::{Deserialize, Serialize};

use crate::encoding::CodeSpace;
use crate::error::{Error, Result};

pub use dimension::{max_input_dimension, DimensionSearch, MIN_TRIALS};
pub use engine::{execute_cycle, run_gemv, BitlineSense, CycleCommand, GemvResult, SenseResult};
pub use image::{read_image, write_image, IMAGE_MAGIC, IMAGE_VERSION};
pub use plane::{Divergence, Plane};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlaneGeometry {
    pub layers_total: u32,
    pub ssls_per_gsl: u32,
    pub num_blocks: u32,
    /// Bitlines per page.
    pub page_size: u32,
    pub cam_layers: u32,
}

impl Default for PlaneGeometry {
    fn default() -> Self {
        Self {
            layers_total: 64,
            ssls_per_gsl: 4,
            num_blocks: 1024,
            page_size: 131_072,
            cam_layers: 0,
        }
    }
}

impl PlaneGeometry {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("layers_total", self.layers_total),
            ("ssls_per_gsl", self.ssls_per_gsl),
            ("num_blocks", self.num_blocks),
            ("page_size", self.page_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Geometry(format!("{name} must be positive")));
            }
        }
        if self.cam_layers >= self.layers_total {
            return Err(Error::Geometry(format!(
                "{} CAM layers leave no CIM layers out of {}",
                self.cam_layers, self.layers_total
            )));
        }
        if !self.num_blocks.is_multiple_of(2) {
            return Err(Error::Geometry(format!(
                "{} blocks cannot be paired for signed weights",
                self.num_blocks
            )));
        }
        Ok(())
    }

    pub fn cim_layers(&self) -> u32 {
        self.layers_total - self.cam_layers
    }

    pub fn block_pairs(&self) -> u32 {
        self.num_blocks / 2
    }

    pub fn with_cam_layers(mut self, cam_layers: u32) -> Self {
        self.cam_layers = cam_layers;
        self
    }

    pub fn cell_count(&self) -> u64 {
        u64::from(self.num_blocks)
            * u64::from(self.ssls_per_gsl)
            * u64::from(self.page_size)
            * u64::from(self.layers_total)
    }
}

/// Bitline ADC. Codes are signed; `LSB = full_scale / 2^bits` and codes clamp
/// to `[-2^bits, 2^bits]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdcModel {
    pub bits: u32,
    /// Full-scale current in unit currents.
    pub full_scale: f64,
    pub energy_per_conversion: f64,
    pub latency_per_conversion: f64,
}

impl Default for AdcModel {
    fn default() -> Self {
        Self::unit_lsb(8)
    }
}

impl AdcModel {
    /// An ADC whose LSB is exactly one unit current.
    pub fn unit_lsb(bits: u32) -> Self {
        Self {
            bits,
            full_scale: f64::from(1u32 << bits),
            energy_per_conversion: 1.0,
            latency_per_conversion: 0.0,
        }
    }

    /// 8-bit ADC spanning the largest unidirectional bitline current the plane
    /// can carry: every block at full drive with all its SSL strings on.
    pub fn for_plane(geom: &PlaneGeometry, space: &CodeSpace) -> Self {
        Self {
            bits: 8,
            full_scale: f64::from(space.input_levels * geom.ssls_per_gsl * geom.num_blocks),
            ..Self::unit_lsb(8)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=24).contains(&self.bits) {
            return Err(Error::Unsupported(format!("{}-bit ADC", self.bits)));
        }
        if !(self.full_scale.is_finite() && self.full_scale > 0.0) {
            return Err(Error::contract("ADC full scale must be positive"));
        }
        if self.energy_per_conversion < 0.0 || self.latency_per_conversion < 0.0 {
            return Err(Error::contract(
                "ADC energy and latency must be non-negative",
            ));
        }
        Ok(())
    }

    pub fn lsb(&self) -> f64 {
        self.full_scale / f64::from(1u32 << self.bits)
    }

    pub fn max_code(&self) -> i64 {
        1i64 << self.bits
    }

    pub fn quantize(&self, raw: f64) -> i64 {
        let code = round_half_away(raw / self.lsb());
        code.clamp(-self.max_code(), self.max_code())
    }

    /// Largest number of simultaneously driven inputs whose worst-case
    /// per-pulse current stays within full scale.
    pub fn input_capacity(&self, space: &CodeSpace) -> usize {
        (self.full_scale / f64::from(space.input_levels * space.ssls)).floor() as usize
    }
}

pub(crate) fn round_half_away(v: f64) -> i64 {
    let r = v.abs() + 0.5;
    (r.floor() * v.signum()) as i64
}
