//! Run configuration, read from JSON. Unknown keys are rejected.
//!
//! Every field has a default, so `{}` is a valid configuration:
//!
//! ```json
//! {
//!   "geometry": { "layers_total": 64, "ssls_per_gsl": 4, "num_blocks": 1024,
//!                 "page_size": 131072, "cam_layers": 0 },
//!   "code_space": { "ssls": 4, "cell_states": 3, "input_levels": 2 },
//!   "moe": { "num_experts": 4, "top_k": 1, "in_dim": 128, "out_dim": 128 },
//!   "sigma": 0.15,
//!   "seed": 0,
//!   "stages": ["Base", "T1", "T1+T2", "T1+T2+T3"],
//!   "routing": { "kind": "uniform" },
//!   "tokens": 64,
//!   "granularity": null,
//!   "mc_trials": 10000,
//!   "confidence": 0.99,
//!   "calibration": null,
//!   "functional": { "in_dim": 24, "out_dim": 8, "units_per_expert": 2,
//!                   "granularity": 1, "tokens": 8 }
//! }
//! ```
//!
//! `geometry.cam_layers = 0` lets the gated stages use the fewest 2-bit CAM
//! layers that hold the expert ids. `granularity` bounds how many chunks
//! of one expert run side by side; `null` is the finest interleave.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::array::{AdcModel, PlaneGeometry};
use crate::cam::entry_plan;
use crate::device::VariationModel;
use crate::encoding::CodeSpace;
use crate::error::{Error, Result};
use crate::mapping::cam_plan_for;
use crate::perf::{AblationConfig, Calibration, Stage};
use crate::workload::{MoESpec, Routing};

/// Small plane used to exercise the functional path on real cell state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FunctionalConfig {
    pub in_dim: u32,
    pub out_dim: u32,
    /// Interleave units owned by each expert.
    pub units_per_expert: u32,
    /// Block pairs per interleave unit.
    pub granularity: u32,
    pub tokens: usize,
}

impl Default for FunctionalConfig {
    fn default() -> Self {
        Self {
            in_dim: 24,
            out_dim: 8,
            units_per_expert: 2,
            granularity: 1,
            tokens: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: PlaneGeometry,
    pub code_space: CodeSpace,
    pub moe: MoESpec,
    pub sigma: f64,
    pub seed: u64,
    pub stages: Vec<Stage>,
    pub routing: Routing,
    pub tokens: usize,
    pub granularity: Option<u32>,
    pub mc_trials: usize,
    pub confidence: f64,
    pub calibration: Option<Calibration>,
    pub functional: FunctionalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            geometry: PlaneGeometry::default(),
            code_space: CodeSpace {
                ssls: 4,
                cell_states: 3,
                input_levels: 2,
            },
            moe: MoESpec::default(),
            sigma: 0.15,
            seed: 0,
            stages: Stage::ALL.to_vec(),
            routing: Routing::Uniform,
            tokens: 64,
            granularity: None,
            mc_trials: 10_000,
            confidence: 0.99,
            calibration: None,
            functional: FunctionalConfig::default(),
        }
    }
}

fn field(name: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Config { .. } => e,
        other => Error::config(name, other.to_string()),
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.moe.validate()?;
        self.code_space.validate().map_err(field("code_space"))?;
        self.geometry.validate().map_err(field("geometry"))?;
        if self.geometry.ssls_per_gsl != self.code_space.ssls {
            return Err(Error::config(
                "code_space.ssls",
                format!(
                    "must equal geometry.ssls_per_gsl = {}",
                    self.geometry.ssls_per_gsl
                ),
            ));
        }
        if self.geometry.cam_layers != 0 {
            cam_plan_for(self.moe.num_experts, self.geometry.cam_layers)
                .map_err(field("geometry.cam_layers"))?;
        }
        VariationModel::new(self.sigma, self.seed).map_err(field("sigma"))?;
        if self.stages.is_empty() {
            return Err(Error::config("stages", "list at least one stage"));
        }
        if self.stages.contains(&Stage::T1T2T3) && self.code_space.cell_states < 3 {
            return Err(Error::InconsistentStage(format!(
                "{} needs code_space.cell_states >= 3",
                Stage::T1T2T3
            )));
        }
        if self.tokens == 0 {
            return Err(Error::config("tokens", "must be at least 1"));
        }
        if self.granularity == Some(0) {
            return Err(Error::config("granularity", "must be positive"));
        }
        if self.mc_trials < crate::array::MIN_TRIALS {
            return Err(Error::config(
                "mc_trials",
                format!("must be at least {}", crate::array::MIN_TRIALS),
            ));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::config(
                "confidence",
                "must lie strictly between 0 and 1",
            ));
        }
        if let Routing::Zipf { s } = self.routing {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::config(
                    "routing.s",
                    "must be finite and non-negative",
                ));
            }
        }
        if let Some(c) = &self.calibration {
            c.validate().map_err(field("calibration"))?;
        }
        let f = &self.functional;
        if f.in_dim == 0
            || f.out_dim == 0
            || f.units_per_expert == 0
            || f.granularity == 0
            || f.tokens == 0
        {
            return Err(Error::config("functional", "all sizes must be positive"));
        }
        self.functional_geometry().map_err(field("functional"))?;
        Ok(())
    }

    pub fn calibration(&self) -> Calibration {
        self.calibration.unwrap_or_default()
    }

    pub fn variation(&self) -> VariationModel {
        VariationModel {
            sigma: self.sigma,
            seed: self.seed,
        }
    }

    /// ADC assumed by the input-dimension search.
    pub fn sense_adc(&self) -> AdcModel {
        AdcModel::for_plane(&self.geometry, &self.code_space)
    }

    pub fn ablation(&self, d_max: usize) -> AblationConfig {
        AblationConfig {
            spec: self.moe,
            space: self.code_space,
            layers_total: self.geometry.layers_total,
            page_size: self.geometry.page_size,
            d_max,
            chunk_parallelism: self.granularity,
            cam_layers: (self.geometry.cam_layers != 0).then_some(self.geometry.cam_layers),
        }
    }

    /// MoE shape of the functional check.
    pub fn functional_spec(&self) -> MoESpec {
        MoESpec {
            in_dim: self.functional.in_dim,
            out_dim: self.functional.out_dim,
            ..self.moe
        }
    }

    /// Smallest plane holding the functional check with an interleaved layout.
    pub fn functional_geometry(&self) -> Result<PlaneGeometry> {
        let f = &self.functional;
        let cam_layers = entry_plan(self.moe.num_experts.next_power_of_two())?.len() as u32;
        let pairs_per_expert = f.units_per_expert * f.granularity;
        let pairs = self.moe.num_experts * pairs_per_expert;
        let geom = PlaneGeometry {
            layers_total: cam_layers + f.in_dim.div_ceil(pairs_per_expert),
            ssls_per_gsl: self.code_space.ssls,
            num_blocks: 2 * pairs,
            page_size: f.out_dim,
            cam_layers,
        };
        geom.validate()?;
        if geom.cell_count() > 1 << 24 {
            return Err(Error::Capacity(format!(
                "functional plane of {} cells is too large",
                geom.cell_count()
            )));
        }
        Ok(geom)
    }
}
