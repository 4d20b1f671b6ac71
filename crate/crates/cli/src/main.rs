use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use nasic_cli::check::{cmd_verify, render, VerifyOptions};
use nasic_cli::run::cmd_run;
use nasic_cli::sweep::{sweep, sweep_csv, Axis};
use nasic_cli::tables::{codec_text, parse_list, truth_table_text};
use nasic_core::{CodeSpace, RunConfig};

#[derive(Parser)]
#[command(
    name = "nasic",
    version,
    about = "3D NAND CAM-gated compute-in-memory simulator for MoE inference"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the dimension search, stage ablation and functional check.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run the ablation for each value of one parameter.
    Sweep {
        #[arg(long)]
        axis: String,
        /// Comma-separated values. `finest` is accepted for granularity.
        #[arg(long, default_value = "", allow_hyphen_values = true)]
        values: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// CSV destination; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the CAM, codec and GEMV self-checks.
    Verify {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Plane image to compare with the plane `run` would write.
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print the match table of a CAM plan such as `1,2`.
    TruthTable {
        #[arg(long)]
        plan: String,
    },
    /// Print the weight and input codes of a code space `S,m,L`.
    Codec {
        #[arg(long)]
        space: String,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    let mut stdout = std::io::stdout().lock();
    match cli.cmd {
        Cmd::Run { config, seed, out } => {
            let o = cmd_run(&config, seed, &out)?;
            for row in &o.report.stages {
                writeln!(
                    stdout,
                    "{:<9} throughput x{:.3}  efficiency x{:.3}  AEDP /{:.3}",
                    row.stage.name(),
                    row.gains.throughput,
                    row.gains.energy_efficiency,
                    row.gains.aedp_reduction
                )?;
            }
            writeln!(
                stdout,
                "D_max {}; functional {}/{} exact at sigma 0; wrote {}",
                o.report.d_max,
                o.functional.exact_at_zero_sigma,
                o.functional.gemvs,
                out.display()
            )?;
            Ok(if o.functional.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Cmd::Sweep {
            axis,
            values,
            config,
            seed,
            out,
        } => {
            let axis: Axis = axis.parse()?;
            let values: Vec<String> = parse_list(&values)?;
            if values.is_empty() {
                eprintln!("no values given; nothing to sweep");
                return Ok(ExitCode::SUCCESS);
            }
            let mut cfg = match config {
                Some(p) => {
                    RunConfig::load(&p).with_context(|| format!("loading {}", p.display()))?
                }
                None => RunConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let csv = sweep_csv(&sweep(&cfg, axis, &values)?)?;
            match out {
                Some(p) => {
                    std::fs::write(&p, csv).with_context(|| format!("writing {}", p.display()))?
                }
                None => stdout.write_all(&csv)?,
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Verify {
            instances,
            seed,
            image,
            config,
        } => {
            if instances == 0 {
                eprintln!("warning: --instances 0 skips the GEMV oracle check");
            }
            let reports = cmd_verify(&VerifyOptions {
                seed,
                instances,
                image: image.as_deref(),
                config: config.as_deref(),
            })?;
            stdout.write_all(render(&reports).as_bytes())?;
            Ok(if reports.iter().all(|r| r.passed()) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Cmd::TruthTable { plan } => {
            stdout.write_all(truth_table_text(&parse_list::<u8>(&plan)?)?.as_bytes())?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Codec { space } => {
            let v: Vec<u32> = parse_list(&space)?;
            anyhow::ensure!(v.len() == 3, "--space takes S,m,L");
            let m = u8::try_from(v[1]).context("m out of range")?;
            stdout.write_all(codec_text(&CodeSpace::new(v[0], m, v[2])?)?.as_bytes())?;
            Ok(ExitCode::SUCCESS)
        }
    }
}
