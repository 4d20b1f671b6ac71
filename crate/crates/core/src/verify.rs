//! Self-check suites: CAM truth tables, codec round trips, random GEMV
//! instances against integer arithmetic, and plane image comparison.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::array::{run_gemv, AdcModel, Plane, PlaneGeometry};
use crate::cam::{entry_plan, truth_table, MAX_CAM_BITS};
use crate::device::VariationModel;
use crate::encoding::{decode_weight, encode_input, encode_weight, CodeSpace};
use crate::error::Result;
use crate::mapping::{place, Strategy};
use crate::workload::{Matrix, MoESpec};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub cases: usize,
    pub failures: usize,
    /// Reproducer for the first failing case.
    pub first_failure: Option<String>,
}

impl SuiteReport {
    fn new(suite: &str) -> Self {
        Self {
            suite: suite.into(),
            cases: 0,
            failures: 0,
            first_failure: None,
        }
    }

    fn record(&mut self, ok: bool, reproducer: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok {
            self.failures += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(reproducer());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Every ordered CAM plan of 1..=3-bit layers with at most `max_bits` bits.
pub fn cam_plans(max_bits: u32) -> Vec<Vec<u8>> {
    fn extend(prefix: &mut Vec<u8>, left: u32, out: &mut Vec<Vec<u8>>) {
        for w in 1..=MAX_CAM_BITS {
            if u32::from(w) <= left {
                prefix.push(w);
                out.push(prefix.clone());
                extend(prefix, left - u32::from(w), out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    extend(&mut Vec::new(), max_bits, &mut out);
    out
}

/// Each truth table row must match iff every bit pair is equal.
pub fn cam_suite(max_bits: u32) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("cam truth tables");
    for plan in cam_plans(max_bits) {
        for (entry, query, m) in truth_table(&plan)? {
            let xnor_and = entry
                .bits()
                .chars()
                .zip(query.bits().chars())
                .all(|(a, b)| a == b);
            report.record(m.is_match() == xnor_and, || {
                format!(
                    "plan {plan:?}: entry {} query {} gave m={}",
                    entry.bits(),
                    query.bits(),
                    m.m()
                )
            });
        }
    }
    Ok(report)
}

/// Round trip every weight and input of every small code space.
pub fn codec_suite() -> Result<SuiteReport> {
    let mut report = SuiteReport::new("codec round trips");
    for ssls in 1..=8u32 {
        for states in 2..=8u8 {
            for levels in 1..=3u32 {
                let Ok(space) = CodeSpace::new(ssls, states, levels) else {
                    continue;
                };
                for w in space.weight_range() {
                    let code = encode_weight(w, &space)?;
                    let ok = decode_weight(&code)? == w
                        && code.pos_pulse_sum() + code.neg_pulse_sum() == space.full_scale_pulses();
                    report.record(ok, || format!("weight {w} in {space:?}"));
                }
                for x in space.input_range() {
                    let ok = encode_input(x, &space)?.value() == x;
                    report.record(ok, || format!("input {x} in {space:?}"));
                }
            }
        }
    }
    Ok(report)
}

pub fn reference_gemv(w: &Matrix, x: &[i32]) -> Vec<i64> {
    w.iter()
        .map(|row| {
            row.iter()
                .zip(x)
                .map(|(&a, &b)| i64::from(a) * i64::from(b))
                .sum()
        })
        .collect()
}

/// One MoE token on a freshly programmed interleaved plane.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GemvInstance {
    pub spec: MoESpec,
    pub space: CodeSpace,
    pub units_per_expert: u32,
    pub weights: Vec<Matrix>,
    pub input: Vec<i32>,
    pub experts: Vec<u32>,
}

impl GemvInstance {
    /// Up to 8 experts and 32x32 matrices with 4 SSLs and 2 to 4 cell
    /// states, values drawn uniformly over the full code ranges.
    pub fn random(rng: &mut impl Rng) -> Self {
        let n = rng.random_range(1..=8u32);
        let spec = MoESpec {
            num_experts: n,
            top_k: rng.random_range(1..=n),
            grouping: None,
            in_dim: rng.random_range(1..=32),
            out_dim: rng.random_range(1..=32),
        };
        let space = CodeSpace::new(4, rng.random_range(2..=4), rng.random_range(1..=3))
            .expect("valid space");
        let (wmax, xmax) = (space.max_weight(), space.max_input());
        let weights = (0..n)
            .map(|_| {
                (0..spec.out_dim)
                    .map(|_| {
                        (0..spec.in_dim)
                            .map(|_| rng.random_range(-wmax..=wmax))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let input = (0..spec.in_dim)
            .map(|_| rng.random_range(-xmax..=xmax))
            .collect();
        let mut experts = rand::seq::index::sample(rng, n as usize, spec.top_k as usize)
            .into_iter()
            .map(|e| e as u32)
            .collect::<Vec<_>>();
        experts.sort_unstable();
        Self {
            spec,
            space,
            units_per_expert: rng.random_range(1..=4),
            weights,
            input,
            experts,
        }
    }

    pub fn geometry(&self) -> Result<PlaneGeometry> {
        let cam_layers = entry_plan(self.spec.num_experts.next_power_of_two())?.len() as u32;
        Ok(PlaneGeometry {
            layers_total: cam_layers + self.spec.in_dim.div_ceil(self.units_per_expert),
            ssls_per_gsl: self.space.ssls,
            num_blocks: 2 * self.spec.num_experts * self.units_per_expert,
            page_size: self.spec.out_dim,
            cam_layers,
        })
    }

    pub fn plane(&self) -> Result<(Plane, crate::mapping::ExpertLayout)> {
        let geom = self.geometry()?;
        let layout = place(&self.spec, &geom, Strategy::Interleaved, 1)?;
        let plane = layout.build_plane(&geom, &self.space, &self.weights)?;
        Ok((plane, layout))
    }

    /// Outputs of each routed expert at sigma = 0.
    pub fn simulate(&self) -> Result<Vec<Vec<i64>>> {
        let (plane, layout) = self.plane()?;
        self.experts
            .iter()
            .map(|&e| {
                run_gemv(
                    &plane,
                    &layout,
                    e,
                    &self.input,
                    &VariationModel::ideal(),
                    &AdcModel::default(),
                    None,
                )
                .map(|r| r.y)
            })
            .collect()
    }

    pub fn reference(&self) -> Vec<Vec<i64>> {
        self.experts
            .iter()
            .map(|&e| reference_gemv(&self.weights[e as usize], &self.input))
            .collect()
    }
}

pub fn gemv_suite(seed: u64, instances: usize) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("gemv oracle");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..instances {
        let inst = GemvInstance::random(&mut rng);
        let got = inst.simulate()?;
        report.record(got == inst.reference(), || {
            serde_json::to_string(&inst).unwrap_or_else(|e| format!("unserializable instance: {e}"))
        });
    }
    Ok(report)
}

/// Compare a plane read back from storage against the expected one.
pub fn image_suite(expected: &Plane, found: &Plane) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("plane image");
    let d = expected.first_divergence(found)?;
    report.record(d.is_none(), || {
        format!("first divergence at {}", d.expect("divergence"))
    });
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_enumeration() {
        let plans = cam_plans(3);
        assert_eq!(
            plans,
            vec![
                vec![1],
                vec![1, 1],
                vec![1, 1, 1],
                vec![1, 2],
                vec![2],
                vec![2, 1],
                vec![3]
            ]
        );
        assert!(cam_plans(6)
            .iter()
            .all(|p| p.iter().map(|&w| u32::from(w)).sum::<u32>() <= 6));
    }

    #[test]
    fn suites_pass() {
        assert!(cam_suite(4).unwrap().passed());
        assert!(codec_suite().unwrap().passed());
        let g = gemv_suite(1, 20).unwrap();
        assert!(g.passed(), "{:?}", g.first_failure);
        assert_eq!(g.cases, 20);
    }

    #[test]
    fn corrupted_plane_is_located() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (plane, _) = GemvInstance::random(&mut rng).plane().unwrap();
        let mut bad = plane.clone();
        let c = crate::device::CellCoord {
            block: 1,
            ssl: 0,
            bitline: 0,
            layer: plane.geometry().layers_total - 1,
        };
        let level = plane.cell(c).unwrap().level();
        bad.set_cell(c, if level == 0 { 1 } else { 0 }).unwrap();
        let r = image_suite(&plane, &bad).unwrap();
        assert!(!r.passed());
        assert!(r.first_failure.unwrap().contains("block 1 ssl 0 bitline 0"));
    }
}
