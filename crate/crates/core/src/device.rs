//! Floating-gate cell and NAND string behavior.
//!
//! Currents are dimensionless multiples of a unit string current. A cell
//! programmed to level `l` conducts under read pulse `j` iff `l <= j`, so the
//! lowest threshold state conducts on every pulse and the highest never does.
//! Per-cell mismatch is a static multiplicative Gaussian term drawn from a
//! counter-based generator keyed on `(seed, coordinates)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of threshold states a cell may be programmed to.
pub const MAX_CELL_STATES: u8 = 16;

/// Programmed threshold-voltage state of one cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellState {
    level: u8,
    states: u8,
}

impl CellState {
    pub fn new(level: u8, states: u8) -> Result<Self> {
        if !(2..=MAX_CELL_STATES).contains(&states) {
            return Err(Error::Unsupported(format!(
                "cell with {states} states (supported: 2..={MAX_CELL_STATES})"
            )));
        }
        if level >= states {
            return Err(Error::contract(format!(
                "level {level} does not exist in a {states}-state cell"
            )));
        }
        Ok(Self { level, states })
    }

    pub fn level(self) -> u8 {
        self.level
    }

    pub fn states(self) -> u8 {
        self.states
    }

    /// Number of read pulses this cell contributes current on across a full
    /// `states - 1` pulse schedule.
    pub fn pulse_sum(self) -> u32 {
        u32::from(self.states - 1 - self.level)
    }
}

/// Word-line read levels applied within one computation cycle.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadPulseSchedule {
    pulse_levels: Vec<u8>,
}

impl ReadPulseSchedule {
    /// The full schedule for `states`-level cells: pulses `0..states-1`.
    pub fn for_states(states: u8) -> Result<Self> {
        if !(2..=MAX_CELL_STATES).contains(&states) {
            return Err(Error::Unsupported(format!("{states}-state read schedule")));
        }
        Ok(Self {
            pulse_levels: (0..states - 1).collect(),
        })
    }

    pub fn from_levels(pulse_levels: Vec<u8>, states: u8) -> Result<Self> {
        let full = Self::for_states(states)?;
        if pulse_levels != full.pulse_levels {
            return Err(Error::contract(format!(
                "pulse schedule {pulse_levels:?} must be strictly increasing with {} entries",
                states - 1
            )));
        }
        Ok(full)
    }

    pub fn levels(&self) -> &[u8] {
        &self.pulse_levels
    }

    pub fn len(&self) -> usize {
        self.pulse_levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pulse_levels.is_empty()
    }

    /// Cell states this schedule reads out completely.
    pub fn cell_states(&self) -> u8 {
        self.pulse_levels.len() as u8 + 1
    }
}

/// Physical position of one cell in a plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellCoord {
    pub block: u32,
    pub ssl: u32,
    pub bitline: u32,
    pub layer: u32,
}

/// Relative on-current mismatch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationModel {
    pub sigma: f64,
    pub seed: u64,
}

impl VariationModel {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::Range {
                what: "sigma",
                value: sigma as i64,
                min: 0,
                max: i64::MAX,
            });
        }
        Ok(Self { sigma, seed })
    }

    pub fn ideal() -> Self {
        Self {
            sigma: 0.0,
            seed: 0,
        }
    }

    pub fn is_ideal(&self) -> bool {
        self.sigma == 0.0
    }

    /// Relative current deviation of the cell at `coord`.
    pub fn epsilon(&self, coord: CellCoord) -> f64 {
        if self.is_ideal() {
            return 0.0;
        }
        let key = mix(
            mix(
                mix(mix(self.seed, coord.block as u64), coord.ssl as u64),
                coord.bitline as u64,
            ),
            coord.layer as u64,
        );
        let z: f64 = StandardNormal.sample(&mut ChaCha8Rng::seed_from_u64(key));
        self.sigma * z
    }
}

// splitmix64 finalizer over a running key.
fn mix(acc: u64, v: u64) -> u64 {
    let mut z = acc ^ v.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(acc << 6);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn cell_conducts(cell: CellState, pulse_index: u8) -> Result<bool> {
    if pulse_index >= cell.states - 1 {
        return Err(Error::contract(format!(
            "pulse {pulse_index} out of range for a {}-state cell",
            cell.states
        )));
    }
    Ok(cell.level <= pulse_index)
}

/// Current through one cell's string assuming every other series cell is on.
pub(crate) fn cell_current(
    conducts: bool,
    drive: f64,
    variation: &VariationModel,
    coord: CellCoord,
) -> f64 {
    if !conducts || drive == 0.0 {
        return 0.0;
    }
    drive * (1.0 + variation.epsilon(coord))
}

/// One vertical string: CAM cells on top, CIM cells below.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StringImage {
    pub cam_cells: Vec<CellState>,
    pub cim_cells: Vec<CellState>,
    pub block: u32,
    pub ssl: u32,
    pub bitline: u32,
}

impl StringImage {
    pub fn layer_count(&self) -> usize {
        self.cam_cells.len() + self.cim_cells.len()
    }

    /// Current sensed from this string when CIM layer `cim_layer` is read with
    /// pulse `wl_pulse`. Unselected layers are driven with pass voltage, so the
    /// string is gated only by the CAM result and the selected cell.
    pub fn current(
        &self,
        cim_layer: usize,
        wl_pulse: u8,
        drive: f64,
        variation: &VariationModel,
        cam_pass: bool,
    ) -> Result<f64> {
        if !drive.is_finite() || drive < 0.0 {
            return Err(Error::contract(format!("negative SL drive {drive}")));
        }
        let cell = *self.cim_cells.get(cim_layer).ok_or_else(|| {
            Error::contract(format!(
                "CIM layer {cim_layer} out of range ({} layers)",
                self.cim_cells.len()
            ))
        })?;
        let conducts = cell_conducts(cell, wl_pulse)?;
        let coord = CellCoord {
            block: self.block,
            ssl: self.ssl,
            bitline: self.bitline,
            layer: (self.cam_cells.len() + cim_layer) as u32,
        };
        Ok(cell_current(cam_pass && conducts, drive, variation, coord))
    }
}

/// Free-function form of [`StringImage::current`].
pub fn string_current(
    s: &StringImage,
    cim_layer: usize,
    wl_pulse: u8,
    drive: f64,
    variation: &VariationModel,
    cam_pass: bool,
) -> Result<f64> {
    s.current(cim_layer, wl_pulse, drive, variation, cam_pass)
}
