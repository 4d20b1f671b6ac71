use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nasic_core::array::{run_gemv, AdcModel, DimensionSearch};
use nasic_core::cam::{cam_match, CamEntry};
use nasic_core::mapping::{place, Strategy};
use nasic_core::perf::{AblationConfig, Calibration, Stage};
use nasic_core::{CodeSpace, MoESpec, PlaneGeometry, RunConfig, VariationModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gemv(c: &mut Criterion) {
    let mut group = c.benchmark_group("gemv");
    for &(n, dim) in &[(4u32, 32u32), (8, 64)] {
        let spec = MoESpec {
            num_experts: n,
            top_k: 1,
            grouping: None,
            in_dim: dim,
            out_dim: dim,
        };
        let space = CodeSpace::new(4, 3, 2).unwrap();
        let geom = PlaneGeometry {
            layers_total: 2 + dim / 2,
            ssls_per_gsl: 4,
            num_blocks: 4 * n,
            page_size: dim,
            cam_layers: 2,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let weights: Vec<Vec<Vec<i32>>> = (0..n)
            .map(|_| {
                (0..dim)
                    .map(|_| (0..dim).map(|_| rng.random_range(-4..=4)).collect())
                    .collect()
            })
            .collect();
        let layout = place(&spec, &geom, Strategy::Interleaved, 1).unwrap();
        let plane = layout.build_plane(&geom, &space, &weights).unwrap();
        let x: Vec<i32> = (0..dim).map(|_| rng.random_range(-2..=2)).collect();
        for sigma in [0.0, 0.15] {
            let var = VariationModel::new(sigma, 1).unwrap();
            let id = BenchmarkId::new(format!("{n}x{dim}x{dim}"), sigma);
            group.bench_with_input(id, &var, |b, var| {
                b.iter(|| {
                    run_gemv(
                        &plane,
                        &layout,
                        1,
                        black_box(&x),
                        var,
                        &AdcModel::default(),
                        None,
                    )
                    .unwrap()
                })
            });
        }
    }
    group.finish();
}

fn cam(c: &mut Criterion) {
    let plan = [2u8, 3];
    let entries: Vec<CamEntry> = (0..32)
        .map(|id| CamEntry::from_id(id, &plan).unwrap())
        .collect();
    let query = CamEntry::from_id(17, &plan).unwrap();
    c.bench_function("cam/32 entries [2,3]", |b| {
        b.iter(|| {
            entries
                .iter()
                .filter(|e| cam_match(e, black_box(&query)).unwrap().is_match())
                .count()
        })
    });
}

fn monte_carlo(c: &mut Criterion) {
    let cfg = RunConfig::default();
    let mut group = c.benchmark_group("dimension_search");
    group.sample_size(10);
    for sigma in [0.15, 0.3] {
        let search = DimensionSearch {
            space: cfg.code_space,
            adc: cfg.sense_adc(),
            variation: VariationModel::new(sigma, 0).unwrap(),
            confidence: cfg.confidence,
            trials: 2000,
        };
        group.bench_with_input(BenchmarkId::from_parameter(sigma), &search, |b, s| {
            b.iter(|| s.run().unwrap())
        });
    }
    group.finish();
}

fn ablation(c: &mut Criterion) {
    let a: AblationConfig = RunConfig::default().ablation(301);
    let cal = Calibration::default();
    c.bench_function("perf/all stages", |b| {
        b.iter(|| {
            Stage::ALL
                .iter()
                .map(|&s| a.evaluate(s, &cal).unwrap().aedp)
                .sum::<f64>()
        })
    });
}

criterion_group!(benches, gemv, cam, monte_carlo, ablation);
criterion_main!(benches);
