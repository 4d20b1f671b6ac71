//! `nasic sweep`: one ablation per axis value, rows merged in input order.

use std::str::FromStr;

use anyhow::{bail, Context, Result};
use nasic_core::perf::Stage;
use nasic_core::{CodeSpace, RunConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::run::{ablation_rows, input_dimension};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Sigma,
    CellStates,
    Granularity,
    NumExperts,
}

impl FromStr for Axis {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "sigma" => Axis::Sigma,
            "m" => Axis::CellStates,
            "granularity" => Axis::Granularity,
            "num_experts" => Axis::NumExperts,
            other => {
                bail!("unknown axis `{other}` (expected sigma, m, granularity or num_experts)")
            }
        })
    }
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Sigma => "sigma",
            Axis::CellStates => "m",
            Axis::Granularity => "granularity",
            Axis::NumExperts => "num_experts",
        }
    }

    fn apply(self, base: &RunConfig, value: &str) -> Result<RunConfig> {
        let mut cfg = base.clone();
        let bad = || format!("bad {} value `{value}`", self.name());
        match self {
            Axis::Sigma => cfg.sigma = value.parse().with_context(bad)?,
            Axis::CellStates => {
                let m: u8 = value.parse().with_context(bad)?;
                cfg.code_space =
                    CodeSpace::new(cfg.code_space.ssls, m, cfg.code_space.input_levels)?;
                if m < 3 {
                    // Single-pulse cells: the top stage is T1+T2.
                    cfg.stages.retain(|&s| s != Stage::T1T2T3);
                }
            }
            Axis::Granularity => {
                cfg.granularity = match value {
                    "finest" => None,
                    v => Some(v.parse().with_context(bad)?),
                }
            }
            Axis::NumExperts => {
                cfg.moe.num_experts = value.parse().with_context(bad)?;
                cfg.geometry.cam_layers = 0;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub axis: &'static str,
    pub value: String,
    pub stage: &'static str,
    pub d_max: usize,
    pub throughput: f64,
    pub energy_efficiency: f64,
    pub aedp: f64,
    pub array_share: f64,
    pub throughput_gain: f64,
    pub efficiency_gain: f64,
    pub aedp_reduction: f64,
}

pub fn sweep(base: &RunConfig, axis: Axis, values: &[String]) -> Result<Vec<SweepRow>> {
    let per_value: Vec<Vec<SweepRow>> = values
        .par_iter()
        .map(|v| {
            let cfg = axis.apply(base, v)?;
            let d_max = input_dimension(&cfg)?;
            Ok(ablation_rows(&cfg, d_max)?
                .into_iter()
                .map(|row| SweepRow {
                    axis: axis.name(),
                    value: v.clone(),
                    stage: row.stage.name(),
                    d_max,
                    throughput: row.report.throughput,
                    energy_efficiency: row.report.energy_efficiency,
                    aedp: row.report.aedp,
                    array_share: row.report.breakdown.array_share(),
                    throughput_gain: row.gains.throughput,
                    efficiency_gain: row.gains.energy_efficiency,
                    aedp_reduction: row.gains.aedp_reduction,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(per_value.into_iter().flatten().collect())
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))
}
