//! `nasic verify`.

use std::path::Path;

use anyhow::{Context, Result};
use nasic_core::array::read_image;
use nasic_core::verify::{cam_suite, codec_suite, gemv_suite, image_suite, SuiteReport};
use nasic_core::RunConfig;

use crate::run::functional_plane;

/// CAM plans up to this many bits are checked exhaustively.
const CAM_BITS: u32 = 6;

pub struct VerifyOptions<'a> {
    pub seed: u64,
    pub instances: usize,
    /// Plane image to compare against the plane `config` and `seed` produce.
    pub image: Option<&'a Path>,
    pub config: Option<&'a Path>,
}

pub fn cmd_verify(opts: &VerifyOptions) -> Result<Vec<SuiteReport>> {
    let mut reports = vec![
        cam_suite(CAM_BITS)?,
        codec_suite()?,
        gemv_suite(opts.seed, opts.instances)?,
    ];
    if let Some(path) = opts.image {
        let mut cfg = match opts.config {
            Some(c) => RunConfig::load(c).with_context(|| format!("loading {}", c.display()))?,
            None => RunConfig::default(),
        };
        cfg.seed = opts.seed;
        let (expected, _, _) = functional_plane(&cfg)?;
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let found = read_image(bytes.as_slice())?;
        reports.push(image_suite(&expected, &found)?);
    }
    Ok(reports)
}

pub fn render(reports: &[SuiteReport]) -> String {
    let mut out = String::new();
    for r in reports {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        out.push_str(&format!(
            "{status} {} ({} cases, {} failed)\n",
            r.suite, r.cases, r.failures
        ));
        if let Some(f) = &r.first_failure {
            out.push_str(&format!("  first failure: {f}\n"));
        }
    }
    out
}
