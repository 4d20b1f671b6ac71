use std::collections::BTreeMap;

use nasic_core::array::{execute_cycle, run_gemv, AdcModel, CycleCommand, PlaneGeometry};
use nasic_core::mapping::{place, ExpertLayout, Strategy as Layout};
use nasic_core::workload::MoESpec;
use nasic_core::{encode_input, CamEntry, CodeSpace, Plane, ReadPulseSchedule, VariationModel};
use proptest::prelude::*;

fn dot(w: &[Vec<i32>], x: &[i32]) -> Vec<i64> {
    let mut y = vec![0i64; w.len()];
    for (b, row) in w.iter().enumerate() {
        for (r, &xr) in x.iter().enumerate() {
            y[b] += i64::from(row[r]) * i64::from(xr);
        }
    }
    y
}

fn setup(
    n: u32,
    in_dim: u32,
    out_dim: u32,
    units: u32,
    space: CodeSpace,
) -> (PlaneGeometry, ExpertLayout) {
    let spec = MoESpec {
        num_experts: n,
        top_k: 1,
        grouping: None,
        in_dim,
        out_dim,
    };
    let cam = nasic_core::entry_plan(n.next_power_of_two()).unwrap().len() as u32;
    let geom = PlaneGeometry {
        layers_total: cam + in_dim.div_ceil(units),
        ssls_per_gsl: space.ssls,
        num_blocks: 2 * n * units,
        page_size: out_dim,
        cam_layers: cam,
    };
    let layout = place(&spec, &geom, Layout::Interleaved, 1).unwrap();
    (geom, layout)
}

fn ideal(plane: &Plane, layout: &ExpertLayout, e: u32, x: &[i32]) -> Vec<i64> {
    run_gemv(
        plane,
        layout,
        e,
        x,
        &VariationModel::ideal(),
        &AdcModel::default(),
        None,
    )
    .unwrap()
    .y
}

#[test]
fn identity_passes_input_through() {
    let space = CodeSpace::new(4, 3, 2).unwrap();
    let (geom, layout) = setup(1, 6, 6, 2, space);
    let eye: Vec<Vec<i32>> = (0..6)
        .map(|i| (0..6).map(|j| i32::from(i == j)).collect())
        .collect();
    let plane = layout.build_plane(&geom, &space, &[eye]).unwrap();
    let x = [2, -2, 0, 1, -1, 2];
    assert_eq!(ideal(&plane, &layout, 0, &x), vec![2, -2, 0, 1, -1, 2]);
}

#[test]
fn hand_worked_dot_product() {
    let space = CodeSpace::new(4, 3, 2).unwrap();
    let (geom, layout) = setup(2, 2, 1, 1, space);
    let plane = layout
        .build_plane(&geom, &space, &[vec![vec![3, -1]], vec![vec![-4, 4]]])
        .unwrap();
    assert_eq!(ideal(&plane, &layout, 0, &[1, -2]), vec![5]);
    assert_eq!(ideal(&plane, &layout, 1, &[1, -2]), vec![-12]);
}

#[test]
fn serialization_cycle_count() {
    let space = CodeSpace::default();
    // 40 rows on 20 pairs: two CIM layers of 20 rows each.
    let (geom, layout) = setup(1, 40, 3, 20, space);
    let w: Vec<Vec<i32>> = (0..3)
        .map(|b| (0..40).map(|r| ((r + b) % 5) - 2).collect())
        .collect();
    let plane = layout
        .build_plane(&geom, &space, std::slice::from_ref(&w))
        .unwrap();
    let x: Vec<i32> = (0..40).map(|r| (r % 5) - 2).collect();
    let v = VariationModel::ideal();
    let adc = AdcModel::default();
    for (d, cycles) in [(None, 2), (Some(20), 2), (Some(7), 6), (Some(1), 40)] {
        let r = run_gemv(&plane, &layout, 0, &x, &v, &adc, d).unwrap();
        assert_eq!(r.cycles, cycles, "d_max {d:?}");
        assert_eq!(r.y, dot(&w, &x));
    }
    // A unit-LSB 8-bit ADC takes 256 / (L*S) = 32 rows; 4 bits take 2.
    let small = AdcModel::unit_lsb(4);
    let r = run_gemv(&plane, &layout, 0, &x, &v, &small, None).unwrap();
    assert_eq!((r.cycles, r.y), (20, dot(&w, &x)));
}

#[test]
fn superposition_of_disjoint_drives() {
    let space = CodeSpace::new(4, 4, 3).unwrap();
    let (geom, layout) = setup(2, 8, 4, 4, space);
    let ws: Vec<Vec<Vec<i32>>> = (0..2)
        .map(|e| {
            (0..4)
                .map(|b| (0..8).map(|r| ((r * 7 + b * 3 + e) % 13) - 6).collect())
                .collect()
        })
        .collect();
    let plane = layout.build_plane(&geom, &space, &ws).unwrap();
    let drive = |pairs: &[u32]| -> BTreeMap<u32, _> {
        pairs
            .iter()
            .map(|&p| (p, encode_input((p as i32 % 7) - 3, &space).unwrap()))
            .collect()
    };
    let run = |pairs: &[u32], query: u32| {
        let cmd = CycleCommand {
            query: CamEntry::from_id(query, &layout.cam_plan).unwrap(),
            sl_drives: drive(pairs),
            selected_cim_layer: 1,
            pulses: ReadPulseSchedule::for_states(4).unwrap(),
        };
        execute_cycle(&plane, &cmd, &VariationModel::ideal(), &AdcModel::default()).unwrap()
    };
    for q in 0..2 {
        let a = run(&[0, 2, 5], q);
        let b = run(&[1, 3, 4, 6, 7], q);
        let both = run(&[0, 1, 2, 3, 4, 5, 6, 7], q);
        for i in 0..4 {
            assert_eq!(
                both.per_bitline[i].quantized,
                a.per_bitline[i].quantized + b.per_bitline[i].quantized
            );
            assert_eq!(
                both.per_bitline[i].raw_current,
                a.per_bitline[i].raw_current + b.per_bitline[i].raw_current
            );
        }
    }
}

#[test]
fn unmatched_query_reads_all_zero() {
    let space = CodeSpace::default();
    let (geom, layout) = setup(2, 4, 3, 2, space);
    let w = vec![vec![2, 2, 2, 2]; 3];
    let plane = layout.build_plane(&geom, &space, &[w.clone(), w]).unwrap();
    let pairs: Vec<u32> = layout.experts[0].pairs.clone();
    let cmd = CycleCommand {
        query: CamEntry::from_id(1, &layout.cam_plan).unwrap(),
        sl_drives: pairs
            .iter()
            .map(|&p| (p, encode_input(2, &space).unwrap()))
            .collect(),
        selected_cim_layer: 0,
        pulses: ReadPulseSchedule::for_states(2).unwrap(),
    };
    let s = execute_cycle(&plane, &cmd, &VariationModel::ideal(), &AdcModel::default()).unwrap();
    assert!(s
        .per_bitline
        .iter()
        .all(|b| b.raw_current == 0.0 && b.quantized == 0));
}

#[test]
fn noisy_reads_are_deterministic_and_close() {
    let space = CodeSpace::new(4, 3, 2).unwrap();
    let (geom, layout) = setup(2, 16, 8, 4, space);
    let w: Vec<Vec<i32>> = (0..8)
        .map(|b| (0..16).map(|r| ((r + 2 * b) % 9) - 4).collect())
        .collect();
    let plane = layout
        .build_plane(&geom, &space, &[w.clone(), w.clone()])
        .unwrap();
    let x: Vec<i32> = (0..16).map(|r| (r % 5) - 2).collect();
    let v = VariationModel::new(0.05, 11).unwrap();
    let a = run_gemv(&plane, &layout, 1, &x, &v, &AdcModel::default(), None).unwrap();
    let b = run_gemv(&plane, &layout, 1, &x, &v, &AdcModel::default(), None).unwrap();
    assert_eq!(a, b);
    let exact = dot(&w, &x);
    let worst =
        a.y.iter()
            .zip(&exact)
            .map(|(p, q)| (p - q).abs())
            .max()
            .unwrap();
    assert!(worst <= 8, "{worst}");
}

#[test]
fn gemv_shape_errors() {
    let space = CodeSpace::default();
    let (geom, layout) = setup(2, 4, 3, 2, space);
    let w = vec![vec![0; 4]; 3];
    assert!(layout
        .build_plane(&geom, &space, std::slice::from_ref(&w))
        .is_err());
    assert!(layout
        .build_plane(&geom, &space, &[w.clone(), vec![vec![0; 3]; 3]])
        .is_err());
    let plane = layout.build_plane(&geom, &space, &[w.clone(), w]).unwrap();
    let v = VariationModel::ideal();
    assert!(run_gemv(
        &plane,
        &layout,
        0,
        &[1, 2, 3],
        &v,
        &AdcModel::default(),
        None
    )
    .is_err());
    assert!(run_gemv(
        &plane,
        &layout,
        0,
        &[1, 2, 3, 9],
        &v,
        &AdcModel::default(),
        None
    )
    .is_err());
    assert!(run_gemv(
        &plane,
        &layout,
        2,
        &[1, 2, 3, 0],
        &v,
        &AdcModel::default(),
        None
    )
    .is_err());
}

fn instance() -> impl Strategy<Value = (u32, u32, u32, u32, u8, u32, Vec<i32>, Vec<i32>, u32)> {
    (1..=4u32, 1..=32u32, 1..=32u32, 1..=3u32, 2..=4u8, 1..=3u32).prop_flat_map(
        |(n, i, o, u, m, l)| {
            let wmax = 2 * i32::from(m - 1);
            let xmax = l as i32;
            (
                Just(n),
                Just(i),
                Just(o),
                Just(u),
                Just(m),
                Just(l),
                prop::collection::vec(-wmax..=wmax, (n * i * o) as usize),
                prop::collection::vec(-xmax..=xmax, i as usize),
                0..n,
            )
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ideal_gemv_matches_integer_reference((n, i, o, u, m, l, flat, x, e) in instance()) {
        let space = CodeSpace::new(4, m, l).unwrap();
        let (geom, layout) = setup(n, i, o, u, space);
        let ws: Vec<Vec<Vec<i32>>> = flat
            .chunks((i * o) as usize)
            .map(|c| c.chunks(i as usize).map(<[i32]>::to_vec).collect())
            .collect();
        let plane = layout.build_plane(&geom, &space, &ws).unwrap();
        prop_assert_eq!(ideal(&plane, &layout, e, &x), dot(&ws[e as usize], &x));
    }
}
