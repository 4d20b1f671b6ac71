//! Analytical throughput, energy and area model for the ablation stages.
//!
//! Everything is evaluated per bitline column and scaled by the page width,
//! so absolute page size cancels out of every stage-to-stage ratio.
//!
//! * `Base` drives every expert (useful fraction `k/N`), reads one bit of
//!   a signed input per cycle and serializes an expert's rows in chunks of
//!   `D_max`.
//! * `T1` adds CAM gating: only routed experts compute, and chunks of one
//!   expert held in different interleave units run side by side.
//! * `T1T2` applies the whole multilevel input on the source lines in one
//!   cycle with thermometer-coded signed weights.
//! * `T1T2T3` stores `m`-state cells and reads them with `m-1` pulses.

use serde::{Deserialize, Serialize};

use crate::encoding::CodeSpace;
use crate::error::{Error, Result};
use crate::mapping::{cam_plan_for, encoding_density};
use crate::workload::MoESpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    Base,
    T1,
    #[serde(rename = "T1+T2")]
    T1T2,
    #[serde(rename = "T1+T2+T3")]
    T1T2T3,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Base, Stage::T1, Stage::T1T2, Stage::T1T2T3];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Base => "Base",
            Stage::T1 => "T1",
            Stage::T1T2 => "T1+T2",
            Stage::T1T2T3 => "T1+T2+T3",
        }
    }

    fn gated(self) -> bool {
        self != Stage::Base
    }

    fn multilevel_input(self) -> bool {
        matches!(self, Stage::T1T2 | Stage::T1T2T3)
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| {
                st.name().eq_ignore_ascii_case(s) || format!("{st:?}").eq_ignore_ascii_case(s)
            })
            .ok_or_else(|| Error::config("stages", format!("unknown stage `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingModel {
    /// Fixed precharge and settling delay per cycle.
    pub t1: f64,
    /// Extra delay per read pulse.
    pub t2: f64,
}

impl TimingModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.t1.is_finite() && self.t1 > 0.0 && self.t2.is_finite() && self.t2 > 0.0) {
            return Err(Error::contract("t1 and t2 must be positive"));
        }
        Ok(())
    }

    pub fn cycle_time(&self, pulses: u32) -> f64 {
        self.t1 + f64::from(pulses) * self.t2
    }

    /// Throughput gain of `m`-state readout over single-pulse readout.
    pub fn multipulse_speedup(&self, cell_states: u8) -> f64 {
        let p = f64::from(cell_states - 1);
        p * (self.t1 + self.t2) / (self.t1 + p * self.t2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyModel {
    /// Bitline and word-line precharge per cycle.
    pub precharge: f64,
    /// Per unit of string current per pulse.
    pub string_pulse: f64,
    pub cam_search: f64,
    /// One conversion at `adc_reference_bits`.
    pub adc_conversion: f64,
    pub adc_reference_bits: u32,
    /// Conversion energy grows as `2^(exponent * (bits - reference))`.
    pub adc_bits_exponent: f64,
    /// Mean string current per driven row for one-bit inputs.
    pub bit_serial_string_activity: f64,
}

impl EnergyModel {
    pub fn validate(&self) -> Result<()> {
        let terms = [
            self.precharge,
            self.string_pulse,
            self.cam_search,
            self.adc_conversion,
            self.adc_bits_exponent,
            self.bit_serial_string_activity,
        ];
        if terms.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::contract("energy terms must be non-negative"));
        }
        Ok(())
    }

    pub fn conversion(&self, bits: u32) -> f64 {
        self.adc_conversion
            * 2f64.powf(
                self.adc_bits_exponent * (f64::from(bits) - f64::from(self.adc_reference_bits)),
            )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub timing: TimingModel,
    pub energy: EnergyModel,
}

const DEFAULT_CALIBRATION: &str = include_str!("../data/calibration.json");

impl Default for Calibration {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_CALIBRATION).expect("bundled calibration parses")
    }
}

impl Calibration {
    pub fn validate(&self) -> Result<()> {
        self.timing.validate()?;
        self.energy.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerfInputs {
    pub stage: Stage,
    pub spec: MoESpec,
    pub space: CodeSpace,
    pub layers_total: u32,
    pub cam_layers: u32,
    /// Bitlines computing in parallel.
    pub page_size: u32,
    /// Allowed input dimension per conversion.
    pub d_max: usize,
    /// How many `D_max`-row chunks of one expert can run in the same cycle.
    /// `None` is the finest interleave: every chunk has its own unit.
    pub chunk_parallelism: Option<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub array: f64,
    pub adc: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.array + self.adc
    }

    pub fn array_share(&self) -> f64 {
        self.array / self.total()
    }

    pub fn adc_share(&self) -> f64 {
        self.adc / self.total()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    pub stage: Stage,
    /// Useful MACs per time unit.
    pub throughput: f64,
    pub latency_per_token: f64,
    pub energy_per_token: f64,
    pub breakdown: EnergyBreakdown,
    /// Useful MACs per energy unit.
    pub energy_efficiency: f64,
    pub area_efficiency: f64,
    pub aedp: f64,
    pub cycles_per_pass: u32,
    pub adc_bits: u32,
    pub cycle_time: f64,
}

impl PerfReport {
    pub fn aedp(&self) -> f64 {
        self.aedp
    }
}

/// Ratios of a stage over a baseline report.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub throughput: f64,
    pub energy_efficiency: f64,
    pub aedp_reduction: f64,
}

pub fn gains(base: &PerfReport, stage: &PerfReport) -> Gains {
    Gains {
        throughput: stage.throughput / base.throughput,
        energy_efficiency: stage.energy_efficiency / base.energy_efficiency,
        aedp_reduction: base.aedp / stage.aedp,
    }
}

fn ceil_log2(v: f64) -> u32 {
    if v <= 1.0 {
        0
    } else {
        v.log2().ceil() as u32
    }
}

fn check_stage(i: &PerfInputs) -> Result<()> {
    let m = i.space.cell_states;
    match i.stage {
        Stage::Base if i.cam_layers != 0 => Err(Error::InconsistentStage(format!(
            "Base has no CAM, but {} CAM layers are configured",
            i.cam_layers
        ))),
        Stage::T1T2T3 if m < 3 => Err(Error::InconsistentStage(format!(
            "multi-state readout needs at least 3 cell states, got {m}"
        ))),
        s if s != Stage::T1T2T3 && m != 2 => Err(Error::InconsistentStage(format!(
            "{s} stores single-bit cells, got {m} states"
        ))),
        s if s.gated() && i.spec.num_experts > 1 => {
            let plan = cam_plan_for(i.spec.num_experts, i.cam_layers).map_err(|e| {
                Error::InconsistentStage(format!("{s} needs CAM layers for the expert ids: {e}"))
            })?;
            debug_assert_eq!(plan.len() as u32, i.cam_layers);
            Ok(())
        }
        _ => Ok(()),
    }
}

pub fn evaluate(i: &PerfInputs, cal: &Calibration) -> Result<PerfReport> {
    i.spec.validate()?;
    i.space.validate()?;
    cal.validate()?;
    if i.d_max == 0 {
        return Err(Error::Capacity("allowed input dimension is zero".into()));
    }
    if i.page_size == 0 || i.cam_layers >= i.layers_total {
        return Err(Error::Geometry(
            "page size and CIM layers must be positive".into(),
        ));
    }
    if i.chunk_parallelism == Some(0) {
        return Err(Error::config(
            "granularity",
            "chunk parallelism must be positive",
        ));
    }
    check_stage(i)?;

    let stage = i.stage;
    let (n, k) = (f64::from(i.spec.num_experts), f64::from(i.spec.top_k));
    let in_dim = i.spec.in_dim as usize;
    let chunks = in_dim.div_ceil(i.d_max) as u32;
    let cycles_per_pass = if stage.gated() {
        let p = i.chunk_parallelism.map_or(chunks, |g| g.min(chunks));
        chunks.div_ceil(p)
    } else {
        chunks
    };
    let rows = in_dim as f64 / f64::from(cycles_per_pass);
    let useful = if stage.gated() { 1.0 } else { k / n };
    let l = i.space.input_levels;
    let serial = if stage.multilevel_input() {
        1
    } else {
        ceil_log2(f64::from(l) + 1.0) + 1
    };
    let (pulses, weight_scale) = if stage == Stage::T1T2T3 {
        let p = u32::from(i.space.cell_states - 1);
        (p, f64::from(p))
    } else {
        (1, 1.0)
    };
    let cycle_time = cal.timing.cycle_time(pulses);

    let e = &cal.energy;
    let lf = f64::from(l);
    let (activity, levels) = if stage.multilevel_input() {
        let mean_abs_x = lf * (lf + 1.0) / (2.0 * lf + 1.0);
        (f64::from(i.space.ssls) * mean_abs_x, i.space.ssls * l)
    } else {
        (e.bit_serial_string_activity, 1)
    };
    let sensed_rows = i.d_max.min(in_dim) as f64;
    let mut adc_bits = 1 + ceil_log2(sensed_rows * f64::from(levels));
    if stage == Stage::T1T2T3 {
        adc_bits += ceil_log2(f64::from(pulses));
    }
    let cam = if stage.gated() && i.cam_layers > 0 {
        e.cam_search
    } else {
        0.0
    };
    let array_cycle = e.precharge + cam + f64::from(pulses) * e.string_pulse * rows * activity;
    let adc_cycle = f64::from(pulses) * e.conversion(adc_bits);

    let w = f64::from(i.page_size);
    let macs_per_cycle = rows * weight_scale;
    let throughput = w * useful * macs_per_cycle / (f64::from(serial) * cycle_time);
    let energy_efficiency =
        useful * macs_per_cycle / (f64::from(serial) * (array_cycle + adc_cycle));
    let token_macs = k * in_dim as f64 * f64::from(i.spec.out_dim);
    let latency_per_token = token_macs * f64::from(serial) * cycle_time / (w * macs_per_cycle);
    let energy_per_token = token_macs / energy_efficiency;
    let scale = energy_per_token / (array_cycle + adc_cycle);
    let breakdown = EnergyBreakdown {
        array: array_cycle * scale,
        adc: adc_cycle * scale,
    };
    let mut area_efficiency = 1.0;
    if stage.gated() {
        area_efficiency -= f64::from(i.cam_layers) / f64::from(i.layers_total);
    }
    if stage.multilevel_input() {
        area_efficiency *= encoding_density(&i.space);
    }
    Ok(PerfReport {
        stage,
        throughput,
        latency_per_token,
        energy_per_token,
        breakdown,
        energy_efficiency,
        area_efficiency,
        aedp: energy_per_token * latency_per_token / area_efficiency,
        cycles_per_pass,
        adc_bits,
        cycle_time,
    })
}

/// Shared settings for a Base-to-T3 sweep. `space` is the T3 code space;
/// earlier stages use the same SSL count and input levels with SLC cells.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub spec: MoESpec,
    pub space: CodeSpace,
    pub layers_total: u32,
    pub page_size: u32,
    pub d_max: usize,
    pub chunk_parallelism: Option<u32>,
    /// CAM layers for the gated stages; `None` uses the fewest that hold
    /// the expert ids in 2-bit cells.
    pub cam_layers: Option<u32>,
}

impl AblationConfig {
    /// Stage-consistent inputs: no CAM for Base, the configured CAM depth for
    /// the gated stages, SLC cells below T3.
    pub fn inputs(&self, stage: Stage) -> Result<PerfInputs> {
        let cam_layers = match (stage.gated(), self.cam_layers) {
            (false, _) => 0,
            (true, Some(c)) => c,
            (true, None) => {
                crate::cam::entry_plan(self.spec.num_experts.next_power_of_two())?.len() as u32
            }
        };
        let space = if stage == Stage::T1T2T3 {
            self.space
        } else {
            CodeSpace::new(self.space.ssls, 2, self.space.input_levels)?
        };
        Ok(PerfInputs {
            stage,
            spec: self.spec,
            space,
            layers_total: self.layers_total,
            cam_layers,
            page_size: self.page_size,
            d_max: self.d_max,
            chunk_parallelism: self.chunk_parallelism,
        })
    }

    pub fn evaluate(&self, stage: Stage, cal: &Calibration) -> Result<PerfReport> {
        evaluate(&self.inputs(stage)?, cal)
    }
}

/// Energy split of one stage.
pub fn energy_breakdown(i: &PerfInputs, cal: &Calibration) -> Result<EnergyBreakdown> {
    Ok(evaluate(i, cal)?.breakdown)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> AblationConfig {
        AblationConfig {
            spec: MoESpec::default(),
            space: CodeSpace::new(4, 3, 2).unwrap(),
            layers_total: 64,
            page_size: 131_072,
            d_max: 300,
            chunk_parallelism: None,
            cam_layers: None,
        }
    }

    fn all(c: &AblationConfig, cal: &Calibration) -> Vec<PerfReport> {
        Stage::ALL
            .iter()
            .map(|&s| c.evaluate(s, cal).unwrap())
            .collect()
    }

    #[test]
    fn bundled_calibration_loads() {
        let c = Calibration::default();
        assert!(c.validate().is_ok());
        assert_eq!(c.energy.conversion(8), c.energy.adc_conversion);
    }

    #[test]
    fn gating_gain_is_expert_ratio() {
        let cal = Calibration::default();
        for (n, k) in [(4, 1), (8, 2), (16, 1), (6, 3)] {
            let mut c = config();
            c.spec.num_experts = n;
            c.spec.top_k = k;
            let r = all(&c, &cal);
            let g = gains(&r[0], &r[1]).throughput;
            assert!(
                (g - f64::from(n) / f64::from(k)).abs() < 1e-12,
                "{n} {k} {g}"
            );
        }
    }

    #[test]
    fn gain_grows_as_dimension_shrinks() {
        let cal = Calibration::default();
        let mut c = config();
        c.spec.in_dim = 512;
        let mut last = 0.0;
        for d in [1024, 512, 300, 256, 200, 128] {
            c.d_max = d;
            let r = all(&c, &cal);
            let g = gains(&r[0], &r[1]).throughput;
            assert!(g >= last);
            last = g;
        }
        assert_eq!(last, 16.0);
    }

    #[test]
    fn multipulse_speedup_closed_form() {
        let cal = Calibration::default();
        let c = config();
        let t2 = c.evaluate(Stage::T1T2, &cal).unwrap();
        let t3 = c.evaluate(Stage::T1T2T3, &cal).unwrap();
        let (a, b) = (cal.timing.t1, cal.timing.t2);
        assert!((t3.throughput / t2.throughput - 2.0 * (a + b) / (a + 2.0 * b)).abs() < 1e-9);
        for m in 3..=8 {
            let s = cal.timing.multipulse_speedup(m);
            assert!(s > 1.0 && s < f64::from(m - 1));
        }
    }

    #[test]
    fn calibrated_ratios_and_shares() {
        let cal = Calibration::default();
        let r = all(&config(), &cal);
        for s in &r[1..] {
            let g = gains(&r[0], s);
            assert!(
                (3.9..=5.1).contains(&g.energy_efficiency),
                "{:?} {g:?}",
                s.stage
            );
            assert!(
                (3.5..=8.3).contains(&g.aedp_reduction),
                "{:?} {g:?}",
                s.stage
            );
        }
        assert!(r[1].breakdown.array_share() > 0.5);
        assert!(r[3].breakdown.adc > r[3].breakdown.array);
        for x in &r {
            assert!((x.breakdown.array_share() + x.breakdown.adc_share() - 1.0).abs() < 1e-12);
            assert!((x.breakdown.total() - x.energy_per_token).abs() < 1e-9 * x.energy_per_token);
        }
    }

    #[test]
    fn more_states_cost_efficiency() {
        let cal = Calibration::default();
        let mut c = config();
        c.space = CodeSpace::new(4, 4, 2).unwrap();
        let m4 = c.evaluate(Stage::T1T2T3, &cal).unwrap();
        c.space = CodeSpace::new(4, 8, 2).unwrap();
        let m8 = c.evaluate(Stage::T1T2T3, &cal).unwrap();
        assert!(m8.energy_efficiency < m4.energy_efficiency);
        assert!(m8.throughput > m4.throughput);
    }

    #[test]
    fn inconsistent_stages() {
        let cal = Calibration::default();
        let mut i = config().inputs(Stage::Base).unwrap();
        i.cam_layers = 1;
        assert!(matches!(
            evaluate(&i, &cal),
            Err(Error::InconsistentStage(_))
        ));
        let mut i = config().inputs(Stage::T1T2T3).unwrap();
        i.space = CodeSpace::new(4, 2, 2).unwrap();
        assert!(matches!(
            evaluate(&i, &cal),
            Err(Error::InconsistentStage(_))
        ));
        let mut i = config().inputs(Stage::T1).unwrap();
        i.cam_layers = 0;
        assert!(matches!(
            evaluate(&i, &cal),
            Err(Error::InconsistentStage(_))
        ));
    }

    #[test]
    fn free_adc_and_linearity() {
        let mut cal = Calibration::default();
        cal.energy.adc_conversion = 0.0;
        let r = config().evaluate(Stage::T1T2T3, &cal).unwrap();
        assert_eq!(r.breakdown.adc_share(), 0.0);
        let base = config()
            .evaluate(Stage::Base, &Calibration::default())
            .unwrap();
        let mut doubled = base.clone();
        doubled.energy_per_token *= 2.0;
        doubled.aedp =
            doubled.energy_per_token * doubled.latency_per_token / doubled.area_efficiency;
        assert!((doubled.aedp / base.aedp - 2.0).abs() < 1e-12);
        assert_eq!(gains(&base, &base).aedp_reduction, 1.0);
    }

    #[test]
    fn stage_names_parse() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert!("T4".parse::<Stage>().is_err());
    }
}
