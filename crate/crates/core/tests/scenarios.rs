use std::path::PathBuf;

use adroop::{run, ControllerKind, Scenario};

fn bundled(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.toml"));
    Scenario::load(&path).unwrap()
}

fn close(x: f64, target: f64, rel: f64) -> bool {
    ((x - target) / target).abs() <= rel
}

#[test]
fn every_bundled_scenario_validates() {
    for name in ["droop", "activation", "loadstep", "cyclic"] {
        bundled(name).validate().unwrap();
    }
}

#[test]
fn droop_scenario_holds_its_initial_equilibrium() {
    let out = run(&bundled("droop")).unwrap();
    let recs = out.trace.records();
    let first = &recs[0];
    for rec in recs {
        assert!((rec.v_bus - first.v_bus).abs() < 1e-9);
        for k in 0..2 {
            assert!((rec.i_line[k] - first.i_line[k]).abs() < 1e-9);
        }
    }
    // (R_d2 + r2) / (R_d1 + r1) = 2.5 / 1.5
    assert!(close(first.i_line[0] / first.i_line[1], 5.0 / 3.0, 1e-9));
    assert!(out.summary.faults.is_empty());
}

#[test]
fn activation_shares_in_proportion_to_rating() {
    let out = run(&bundled("activation")).unwrap();
    let s = &out.summary.steady;
    assert!(close(s.i_line[0], 5.0, 0.02), "{:?}", s.i_line);
    assert!(close(s.i_line[1], 2.5, 0.02), "{:?}", s.i_line);
    assert!((s.v_bus - 400.0).abs() < 2.0, "{}", s.v_bus);
}

#[test]
fn load_step_doubles_shared_currents() {
    let out = run(&bundled("loadstep")).unwrap();
    let s = &out.summary.steady;
    assert!(close(s.i_line[0], 10.0, 0.02), "{:?}", s.i_line);
    assert!(close(s.i_line[1], 5.0, 0.02), "{:?}", s.i_line);
    assert!(out.summary.faults.is_empty());
}

#[test]
fn pi_baseline_runs_the_cyclic_scenario() {
    let mut sc = bundled("cyclic");
    sc.controller = ControllerKind::Pi;
    let out = run(&sc).unwrap();
    assert!(out.summary.bounds.is_none());
    assert_eq!(out.summary.ise.len(), 10);
    assert!(out.summary.ise.iter().all(|w| w.ise_v >= 0.0 && w.ise_i >= 0.0));
}

#[test]
fn symmetric_system_without_events_stays_flat() {
    let sc = Scenario::from_toml_str(
        r#"
name = "symmetric"
duration = 1.0

[plant]
load = { type = "resistive", ohms = 40.0 }

[[plant.converters]]
rated_power = 3000.0
r_d0 = 1.5
line = { r = 0.4, l = 0.003 }

[[plant.converters]]
rated_power = 3000.0
r_d0 = 1.5
line = { r = 0.4, l = 0.003 }
"#,
    )
    .unwrap();
    let out = run(&sc).unwrap();
    let first = out.trace.records()[0].clone();
    for rec in out.trace.records() {
        assert!((rec.i_line[0] - rec.i_line[1]).abs() < 1e-12);
        assert!((rec.v_conv[0] - rec.v_conv[1]).abs() < 1e-10);
        assert!((rec.v_bus - first.v_bus).abs() < 1e-9);
    }
    assert!(close(first.i_line[0], first.v_bus / 40.0 / 2.0, 1e-12));
}
