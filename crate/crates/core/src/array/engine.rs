use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{round_half_away, AdcModel, Plane};
use crate::cam::CamQuery;
use crate::device::{cell_current, CellCoord, ReadPulseSchedule, VariationModel};
use crate::encoding::{encode_input, InputDrive};
use crate::error::{Error, Result};
use crate::mapping::{ExpertLayout, Strategy};

/// Everything applied to the plane in one computation cycle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleCommand {
    pub query: CamQuery,
    /// SL drive per block pair. Pairs not listed are grounded.
    pub sl_drives: BTreeMap<u32, InputDrive>,
    pub selected_cim_layer: u32,
    pub pulses: ReadPulseSchedule,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BitlineSense {
    /// Differential current summed over all pulses.
    pub raw_current: f64,
    /// Sum of the per-pulse ADC codes.
    pub quantized: i64,
}

impl BitlineSense {
    /// Signed dot product: the accumulated code with the dual-block factor
    /// of two removed.
    pub fn value(&self) -> i64 {
        round_half_away(self.quantized as f64 / 2.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SenseResult {
    pub per_bitline: Vec<BitlineSense>,
}

impl SenseResult {
    pub fn values(&self) -> Vec<i64> {
        self.per_bitline.iter().map(BitlineSense::value).collect()
    }
}

fn check_command(plane: &Plane, cmd: &CycleCommand) -> Result<()> {
    let g = plane.geometry();
    if cmd.query.plan() != plane.cam_plan() {
        return Err(Error::Geometry(format!(
            "query plan {:?} does not match CAM plan {:?}",
            cmd.query.plan(),
            plane.cam_plan()
        )));
    }
    if cmd.selected_cim_layer >= g.cim_layers() {
        return Err(Error::Geometry(format!(
            "CIM layer {} outside {} CIM layers",
            cmd.selected_cim_layer,
            g.cim_layers()
        )));
    }
    if cmd.pulses.cell_states() != plane.space().cell_states {
        return Err(Error::Geometry(format!(
            "pulse schedule for {}-state cells on a {}-state plane",
            cmd.pulses.cell_states(),
            plane.space().cell_states
        )));
    }
    if let Some(p) = cmd.sl_drives.keys().find(|&&p| p >= g.block_pairs()) {
        return Err(Error::Geometry(format!(
            "drive on block pair {p} outside the plane"
        )));
    }
    let max = plane.space().max_input() as u32;
    if let Some(d) = cmd.sl_drives.values().find(|d| d.magnitude > max) {
        return Err(Error::Range {
            what: "input magnitude",
            value: d.magnitude.into(),
            min: 0,
            max: max.into(),
        });
    }
    Ok(())
}

fn string_matches(plane: &Plane, query: &CamQuery, block: u32, ssl: u32, bitline: u32) -> bool {
    query
        .layers
        .iter()
        .enumerate()
        .all(|(layer, q)| plane.level(block, ssl, bitline, layer as u32) == q.value)
}

fn sense(
    plane: &Plane,
    cmd: &CycleCommand,
    bitlines: Range<u32>,
    variation: &VariationModel,
    adc: &AdcModel,
) -> Vec<BitlineSense> {
    let g = plane.geometry();
    let layer = g.cam_layers + cmd.selected_cim_layer;
    let driven: Vec<(u32, InputDrive)> = cmd
        .sl_drives
        .iter()
        .filter(|(_, d)| d.magnitude > 0)
        .map(|(&p, &d)| (p, d))
        .collect();
    bitlines
        .map(|bl| {
            let mut raw_total = 0.0;
            let mut code = 0i64;
            for &pulse in cmd.pulses.levels() {
                let mut raw = 0.0;
                for &(pair, drive) in &driven {
                    let mut diff = 0.0;
                    for (block, sign) in [(2 * pair, 1.0), (2 * pair + 1, -1.0)] {
                        for ssl in 0..g.ssls_per_gsl {
                            let conducts = plane.level(block, ssl, bl, layer) <= pulse
                                && string_matches(plane, &cmd.query, block, ssl, bl);
                            let coord = CellCoord {
                                block,
                                ssl,
                                bitline: bl,
                                layer,
                            };
                            diff += sign
                                * cell_current(
                                    conducts,
                                    f64::from(drive.magnitude),
                                    variation,
                                    coord,
                                );
                        }
                    }
                    raw += f64::from(drive.polarity.sign()) * diff;
                }
                raw_total += raw;
                code += adc.quantize(raw);
            }
            BitlineSense {
                raw_current: raw_total,
                quantized: code,
            }
        })
        .collect()
}

/// Apply one cycle to every bitline of the plane.
pub fn execute_cycle(
    plane: &Plane,
    cmd: &CycleCommand,
    variation: &VariationModel,
    adc: &AdcModel,
) -> Result<SenseResult> {
    adc.validate()?;
    check_command(plane, cmd)?;
    Ok(SenseResult {
        per_bitline: sense(plane, cmd, 0..plane.geometry().page_size, variation, adc),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GemvResult {
    pub y: Vec<i64>,
    pub cycles: usize,
}

/// `y = W_e x` for expert `e`, read back from a programmed plane.
///
/// Each CIM layer takes at least one cycle. Within a layer, the expert's
/// rows are driven in chunks of at most `d_max` (capped by what the ADC can
/// take without clipping); every other pair on the layer is driven with
/// its own row's input and left to the CAM to gate off.
pub fn run_gemv(
    plane: &Plane,
    layout: &ExpertLayout,
    expert: u32,
    x: &[i32],
    variation: &VariationModel,
    adc: &AdcModel,
    d_max: Option<usize>,
) -> Result<GemvResult> {
    adc.validate()?;
    let spec = &layout.spec;
    if x.len() != spec.in_dim as usize {
        return Err(Error::Geometry(format!(
            "input of length {} for in_dim {}",
            x.len(),
            spec.in_dim
        )));
    }
    if layout.cam_plan != plane.cam_plan() {
        return Err(Error::Geometry("layout and plane CAM plans differ".into()));
    }
    if layout.strategy == Strategy::InterleavedUngated && spec.num_experts > 1 {
        return Err(Error::Unsupported(
            "ungated interleaved layouts mix experts on shared bitlines".into(),
        ));
    }
    let space = plane.space();
    let drives = x
        .iter()
        .map(|&v| encode_input(v, space))
        .collect::<Result<Vec<_>>>()?;
    let cap = adc.input_capacity(space).min(d_max.unwrap_or(usize::MAX));
    if cap == 0 {
        return Err(Error::Capacity(
            "ADC admits no driven inputs per cycle".into(),
        ));
    }
    let bitlines = layout.bitlines(expert)?;
    if bitlines.end > plane.geometry().page_size {
        return Err(Error::Geometry("layout bitlines outside the plane".into()));
    }
    let query = layout.query(expert)?;
    let pulses = ReadPulseSchedule::for_states(space.cell_states)?;
    let mut acc = vec![0i64; bitlines.len()];
    let mut cycles = 0;
    for layer in 0..layout.expert(expert)?.layers_used {
        let rows = layout.rows_on_layer(expert, layer)?;
        let mut others = BTreeMap::new();
        if layout.strategy.is_gated() {
            for e in (0..spec.num_experts).filter(|&e| e != expert) {
                for (r, pair) in layout.rows_on_layer(e, layer)? {
                    others.insert(pair, drives[r as usize]);
                }
            }
        }
        for chunk in rows.chunks(cap) {
            let mut sl_drives = others.clone();
            sl_drives.extend(chunk.iter().map(|&(r, pair)| (pair, drives[r as usize])));
            let cmd = CycleCommand {
                query: query.clone(),
                sl_drives,
                selected_cim_layer: layer,
                pulses: pulses.clone(),
            };
            check_command(plane, &cmd)?;
            for (a, s) in acc
                .iter_mut()
                .zip(sense(plane, &cmd, bitlines.clone(), variation, adc))
            {
                *a += s.quantized;
            }
            cycles += 1;
        }
    }
    Ok(GemvResult {
        y: acc
            .iter()
            .map(|&c| round_half_away(c as f64 / 2.0))
            .collect(),
        cycles,
    })
}
