//! `nasic run`: input-dimension search, stage ablation, a functional check
//! on a small programmed plane, and the artifacts for all three.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use nasic_core::array::{run_gemv, write_image, AdcModel, DimensionSearch, Plane, PlaneGeometry};
use nasic_core::mapping::{
    cam_plan_for, place, utilization, ExpertLayout, Strategy, UtilizationReport,
};
use nasic_core::perf::{gains, Gains, PerfReport, Stage};
use nasic_core::verify::reference_gemv;
use nasic_core::workload::{generate_trace, generate_weights, Routing, TokenTrace};
use nasic_core::{RunConfig, VariationModel};
use serde::Serialize;

/// Weights of the functional check come from their own stream.
const WEIGHT_STREAM: u64 = 0x5745_4947_4854_5321;

pub const ARTIFACTS: [&str; 6] = [
    "report.csv",
    "report.json",
    "functional.json",
    "layout.json",
    "plane.img",
    "trace.txt",
];

#[derive(Clone, Debug, Serialize)]
pub struct StageRow {
    pub stage: Stage,
    pub report: PerfReport,
    pub gains: Gains,
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceSummary {
    pub tokens: usize,
    pub activated_fraction: f64,
    pub expert_histogram: Vec<u64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub sigma: f64,
    pub seed: u64,
    pub d_max: usize,
    pub stages: Vec<StageRow>,
    pub utilization_contiguous: UtilizationReport,
    pub utilization_interleaved: UtilizationReport,
    pub trace: TraceSummary,
}

#[derive(Clone, Debug, Serialize)]
pub struct FunctionalSummary {
    pub gemvs: usize,
    pub exact_at_zero_sigma: usize,
    pub cycles: usize,
    pub sigma: f64,
    pub max_abs_error: i64,
    pub mean_abs_error: f64,
}

impl FunctionalSummary {
    pub fn passed(&self) -> bool {
        self.exact_at_zero_sigma == self.gemvs
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub report: Report,
    pub functional: FunctionalSummary,
}

pub fn input_dimension(cfg: &RunConfig) -> Result<usize> {
    let d = DimensionSearch {
        space: cfg.code_space,
        adc: cfg.sense_adc(),
        variation: cfg.variation(),
        confidence: cfg.confidence,
        trials: cfg.mc_trials,
    }
    .run()?;
    anyhow::ensure!(
        d > 0,
        "no input dimension meets the error target at sigma = {}",
        cfg.sigma
    );
    Ok(d)
}

/// Every configured stage plus Base, evaluated at `d_max`.
pub fn ablation_rows(cfg: &RunConfig, d_max: usize) -> Result<Vec<StageRow>> {
    let ab = cfg.ablation(d_max);
    let cal = cfg.calibration();
    let base = ab.evaluate(Stage::Base, &cal)?;
    cfg.stages
        .iter()
        .map(|&stage| {
            let report = ab.evaluate(stage, &cal)?;
            Ok(StageRow {
                stage,
                gains: gains(&base, &report),
                report,
            })
        })
        .collect()
}

fn plane_utilization(cfg: &RunConfig) -> Result<(UtilizationReport, UtilizationReport)> {
    let flat = PlaneGeometry {
        cam_layers: 0,
        ..cfg.geometry
    };
    let contiguous =
        place(&cfg.moe, &flat, Strategy::Contiguous, 1).context("contiguous placement")?;
    let cam = match cfg.geometry.cam_layers {
        0 => nasic_core::entry_plan(cfg.moe.num_experts.next_power_of_two())?.len() as u32,
        c => c,
    };
    cam_plan_for(cfg.moe.num_experts, cam)?;
    let tagged = PlaneGeometry {
        cam_layers: cam,
        ..cfg.geometry
    };
    let interleaved =
        place(&cfg.moe, &tagged, Strategy::Interleaved, 1).context("interleaved placement")?;
    let space = cfg.code_space;
    Ok((
        utilization(&contiguous, &flat, &space),
        utilization(&interleaved, &tagged, &space),
    ))
}

/// Small interleaved plane holding random weights for every expert.
pub fn functional_plane(
    cfg: &RunConfig,
) -> Result<(Plane, ExpertLayout, Vec<nasic_core::workload::Matrix>)> {
    let spec = cfg.functional_spec();
    let geom = cfg.functional_geometry()?;
    let layout = place(
        &spec,
        &geom,
        Strategy::Interleaved,
        cfg.functional.granularity,
    )?;
    let weights = generate_weights(&spec, &cfg.code_space, cfg.seed ^ WEIGHT_STREAM)?;
    let plane = layout.build_plane(&geom, &cfg.code_space, &weights)?;
    Ok((plane, layout, weights))
}

fn functional_check(
    cfg: &RunConfig,
    plane: &Plane,
    layout: &ExpertLayout,
    weights: &[nasic_core::workload::Matrix],
) -> Result<FunctionalSummary> {
    let routing = match cfg.routing {
        Routing::File { .. } => Routing::Uniform,
        ref r => r.clone(),
    };
    let trace = generate_trace(
        &layout.spec,
        &cfg.code_space,
        cfg.functional.tokens,
        &routing,
        cfg.seed,
    )?;
    let adc = AdcModel::default();
    let noisy = cfg.variation();
    let mut s = FunctionalSummary {
        gemvs: 0,
        exact_at_zero_sigma: 0,
        cycles: 0,
        sigma: cfg.sigma,
        max_abs_error: 0,
        mean_abs_error: 0.0,
    };
    let mut err_sum = 0i64;
    let mut outputs = 0usize;
    for tok in &trace.tokens {
        for &e in &tok.experts {
            let want = reference_gemv(&weights[e as usize], &tok.input);
            let ideal = run_gemv(
                plane,
                layout,
                e,
                &tok.input,
                &VariationModel::ideal(),
                &adc,
                None,
            )?;
            s.gemvs += 1;
            s.cycles += ideal.cycles;
            if ideal.y == want {
                s.exact_at_zero_sigma += 1;
            }
            let got = run_gemv(plane, layout, e, &tok.input, &noisy, &adc, None)?;
            for (a, b) in got.y.iter().zip(&want) {
                let d = (a - b).abs();
                err_sum += d;
                s.max_abs_error = s.max_abs_error.max(d);
                outputs += 1;
            }
        }
    }
    s.mean_abs_error = if outputs == 0 {
        0.0
    } else {
        err_sum as f64 / outputs as f64
    };
    Ok(s)
}

fn trace_summary(cfg: &RunConfig, trace: &TokenTrace) -> TraceSummary {
    TraceSummary {
        tokens: trace.len(),
        activated_fraction: trace.mean_activated_fraction(&cfg.moe),
        expert_histogram: trace.expert_histogram(&cfg.moe),
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    stage: &'a str,
    sigma: f64,
    d_max: usize,
    throughput: f64,
    latency_per_token: f64,
    energy_per_token: f64,
    energy_array: f64,
    energy_adc: f64,
    array_share: f64,
    energy_efficiency: f64,
    area_efficiency: f64,
    aedp: f64,
    cycles_per_pass: u32,
    adc_bits: u32,
    throughput_gain: f64,
    efficiency_gain: f64,
    aedp_reduction: f64,
}

pub fn report_csv(report: &Report) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &report.stages {
        let r = &row.report;
        w.serialize(CsvRow {
            stage: row.stage.name(),
            sigma: report.sigma,
            d_max: report.d_max,
            throughput: r.throughput,
            latency_per_token: r.latency_per_token,
            energy_per_token: r.energy_per_token,
            energy_array: r.breakdown.array,
            energy_adc: r.breakdown.adc,
            array_share: r.breakdown.array_share(),
            energy_efficiency: r.energy_efficiency,
            area_efficiency: r.area_efficiency,
            aedp: r.aedp,
            cycles_per_pass: r.cycles_per_pass,
            adc_bits: r.adc_bits,
            throughput_gain: row.gains.throughput,
            efficiency_gain: row.gains.energy_efficiency,
            aedp_reduction: row.gains.aedp_reduction,
        })?;
    }
    w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))
}

/// Load `config`, apply the seed override and run.
pub fn cmd_run(config: &Path, seed: Option<u64>, out: &Path) -> Result<RunOutcome> {
    let mut cfg =
        RunConfig::load(config).with_context(|| format!("loading {}", config.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    run(&cfg, out)
}

pub fn run(cfg: &RunConfig, out: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    let d_max = input_dimension(cfg)?;
    let stages = ablation_rows(cfg, d_max)?;
    let (utilization_contiguous, utilization_interleaved) = plane_utilization(cfg)?;
    let trace = generate_trace(
        &cfg.moe,
        &cfg.code_space,
        cfg.tokens,
        &cfg.routing,
        cfg.seed,
    )?;
    let (plane, layout, weights) = functional_plane(cfg)?;
    let functional = functional_check(cfg, &plane, &layout, &weights)?;
    let report = Report {
        sigma: cfg.sigma,
        seed: cfg.seed,
        d_max,
        stages,
        utilization_contiguous,
        utilization_interleaved,
        trace: trace_summary(cfg, &trace),
    };

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let write = |name: &str, bytes: &[u8]| {
        fs::write(out.join(name), bytes).with_context(|| format!("writing {name}"))
    };
    write("report.csv", &report_csv(&report)?)?;
    write(
        "report.json",
        serde_json::to_string_pretty(&report)?.as_bytes(),
    )?;
    write(
        "functional.json",
        serde_json::to_string_pretty(&functional)?.as_bytes(),
    )?;
    write("layout.json", layout.to_json()?.as_bytes())?;
    let mut img = Vec::new();
    write_image(&plane, &mut img)?;
    write("plane.img", &img)?;
    write("trace.txt", trace.to_text().as_bytes())?;
    Ok(RunOutcome { report, functional })
}
