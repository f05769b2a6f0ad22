use adroop::plant::{self, ConverterParams, LineParams, LoadModel, PlantParams, PlantState};
use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn system(v_ref: &[f64], r_d: &[f64], r_line: &[f64], ohms: f64) -> PlantParams {
    let converters = v_ref
        .iter()
        .zip(r_d)
        .map(|(&v, &r)| ConverterParams::new(v, 5e-3, 10.0, r).unwrap())
        .collect();
    let lines = r_line.iter().map(|&r| LineParams::new(r, 3e-3).unwrap()).collect();
    PlantParams::new(converters, lines, LoadModel::Resistive { ohms }).unwrap()
}

/// Modified nodal analysis of the DC circuit: unknowns are the converter
/// terminal voltages, the bus voltage and the feeder currents.
fn mna(v_ref: &[f64], r_d: &[f64], r_line: &[f64], ohms: f64) -> (Vec<f64>, f64) {
    let n = v_ref.len();
    let size = 2 * n + 1;
    let bus = n;
    let cur = |k: usize| n + 1 + k;
    let mut a = DMatrix::<f64>::zeros(size, size);
    let mut b = DVector::<f64>::zeros(size);
    for k in 0..n {
        // V_k = v_ref - R_d i_k
        a[(k, k)] = 1.0;
        a[(k, cur(k))] = r_d[k];
        b[k] = v_ref[k];
        // V_k - V_bus = r i_k
        a[(cur(k), k)] = 1.0;
        a[(cur(k), bus)] = -1.0;
        a[(cur(k), cur(k))] = -r_line[k];
        // KCL at the bus
        a[(bus, cur(k))] = 1.0;
    }
    a[(bus, bus)] = -1.0 / ohms;
    let x = a.lu().solve(&b).expect("nonsingular circuit");
    ((0..n).map(|k| x[cur(k)]).collect(), x[bus])
}

#[test]
fn reference_system_matches_nodal_solution() {
    let params = PlantParams::reference_system(LoadModel::resistive_at(3000.0, 400.0).unwrap());
    let droops = params.initial_droops();
    let op = plant::operating_point(&params, &droops).unwrap();
    let (i, v_bus) = mna(&[400.0; 2], &droops, &[0.5; 2], 160.0 / 3.0);
    assert_relative_eq!(op.i_line[0], i[0], max_relative = 1e-10);
    assert_relative_eq!(op.i_line[1], i[1], max_relative = 1e-10);
    assert_relative_eq!(op.v_bus, v_bus, max_relative = 1e-12);
    assert_relative_eq!(op.i_line[0] / op.i_line[1], 5.0 / 3.0, max_relative = 1e-10);
}

#[test]
fn transient_settles_to_nodal_solution() {
    let params = system(&[400.0, 400.0, 396.0], &[1.0, 2.0, 0.5], &[0.5, 0.3, 0.8], 40.0);
    let droops = params.initial_droops();
    let (i, v_bus) = mna(&[400.0, 400.0, 396.0], &droops, &[0.5, 0.3, 0.8], 40.0);
    let mut state = PlantState::from_dynamic(vec![380.0, 390.0, 400.0], vec![0.0; 3], &params.load).unwrap();
    for _ in 0..5000 {
        state = plant::step(&state, &droops, &params, 1e-4).unwrap().state;
    }
    for k in 0..3 {
        assert_relative_eq!(state.i_line[k], i[k], max_relative = 1e-6);
    }
    assert_relative_eq!(state.v_bus, v_bus, max_relative = 1e-8);
}

fn run_for(params: &PlantParams, droops: &[f64], dt: f64, t_end: f64) -> PlantState {
    let mut state = PlantState::from_dynamic(vec![300.0, 420.0], vec![0.0, 5.0], &params.load).unwrap();
    for _ in 0..(t_end / dt).round() as usize {
        state = plant::step(&state, droops, params, dt).unwrap().state;
    }
    state
}

#[test]
fn rk4_converges_at_fourth_order() {
    // slow enough feeders that no step is split into sub-steps
    let mut params = system(&[400.0, 400.0], &[1.0, 2.0], &[0.5, 0.5], 53.0);
    for line in &mut params.lines {
        line.l = 0.5;
    }
    let droops = params.initial_droops();
    let h = 1e-3;
    let a = run_for(&params, &droops, h, 1.0);
    let b = run_for(&params, &droops, h / 2.0, 1.0);
    let c = run_for(&params, &droops, h / 4.0, 1.0);
    let diff = |x: &PlantState, y: &PlantState| {
        x.v_conv
            .iter()
            .chain(&x.i_line)
            .zip(y.v_conv.iter().chain(&y.i_line))
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max)
    };
    let order = (diff(&a, &b) / diff(&b, &c)).log2();
    assert!(order >= 3.9, "observed order {order}");
}

#[test]
fn load_step_conserves_kcl_through_transient() {
    let mut params = PlantParams::reference_system(LoadModel::resistive_at(3000.0, 400.0).unwrap());
    let droops = params.initial_droops();
    let mut state = plant::operating_point(&params, &droops).unwrap();
    params.load = LoadModel::ConstantPower { watts: 6000.0 };
    state = PlantState::from_dynamic(state.v_conv, state.i_line, &params.load).unwrap();
    for _ in 0..2000 {
        state = plant::step(&state, &droops, &params, 1e-4).unwrap().state;
        assert_eq!(state.i_load, state.i_line.iter().sum::<f64>());
        assert_relative_eq!(state.v_bus * state.i_load, 6000.0, max_relative = 1e-12);
    }
}

proptest! {
    #[test]
    fn droop_sharing_follows_resistance_ratio(
        r_d1 in 0.05f64..5.0,
        r_d2 in 0.05f64..5.0,
        r1 in 0.05f64..1.0,
        r2 in 0.05f64..1.0,
        ohms in 10.0f64..200.0,
    ) {
        let params = system(&[400.0, 400.0], &[r_d1, r_d2], &[r1, r2], ohms);
        let op = plant::operating_point(&params, &[r_d1, r_d2]).unwrap();
        let ratio = plant::steady_state_ratio(r_d1, r_d2, r1, r2).unwrap();
        prop_assert!((op.i_line[0] / op.i_line[1] / ratio - 1.0).abs() < 1e-9);
        let (i, v) = mna(&[400.0, 400.0], &[r_d1, r_d2], &[r1, r2], ohms);
        prop_assert!((op.v_bus - v).abs() < 1e-9 * v);
        prop_assert!((op.i_line[0] - i[0]).abs() < 1e-9 * i[0].abs().max(1.0));
    }

    #[test]
    fn swapping_converters_swaps_currents(
        r_d1 in 0.1f64..4.0,
        r_d2 in 0.1f64..4.0,
        v1 in 390.0f64..410.0,
        v2 in 390.0f64..410.0,
    ) {
        let a = system(&[v1, v2], &[r_d1, r_d2], &[0.5, 0.5], 50.0);
        let b = system(&[v2, v1], &[r_d2, r_d1], &[0.5, 0.5], 50.0);
        let sa = plant::operating_point(&a, &[r_d1, r_d2]).unwrap();
        let sb = plant::operating_point(&b, &[r_d2, r_d1]).unwrap();
        prop_assert!((sa.i_line[0] - sb.i_line[1]).abs() < 1e-9);
        prop_assert!((sa.i_line[1] - sb.i_line[0]).abs() < 1e-9);
        prop_assert!((sa.v_bus - sb.v_bus).abs() < 1e-9);
    }

    #[test]
    fn operating_point_is_stationary(
        r_d1 in -0.3f64..4.0,
        r_d2 in -0.3f64..4.0,
        watts in 500.0f64..8000.0,
    ) {
        let mut params = system(&[400.0, 400.0], &[r_d1, r_d2], &[0.5, 0.5], 50.0);
        params.load = LoadModel::ConstantPower { watts };
        let op = plant::operating_point(&params, &[r_d1, r_d2]).unwrap();
        let d = plant::derivatives(&op, &[r_d1, r_d2], &params).unwrap();
        for k in 0..2 {
            prop_assert!(d.dv_conv[k].abs() < 1e-6, "dv {:?}", d.dv_conv);
            prop_assert!(d.di_line[k].abs() < 1e-6, "di {:?}", d.di_line);
        }
    }
}
