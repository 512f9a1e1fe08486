mod common;

use num_complex::Complex64;
use voltreg::netmodel::{load_feeder, FeederModel};
use voltreg::powerflow::{
    assemble_ybus, solve_powerflow, voltage_magnitudes, FactorizedNetwork, InjectionSpec, PfError, PowerFlow,
    TapRatioSet,
};

fn two_bus(r: f64, x: f64) -> FeederModel {
    let json = format!(
        r#"{{
      "bases": {{"s_base_kva": 1000.0}},
      "source": {{"bus": "s", "v_pu": [1.0], "angle_deg": [0.0]}},
      "buses": [
        {{"id": "s", "phases": ["A"], "v_base_kv": 1.0}},
        {{"id": "l", "phases": ["A"], "v_base_kv": 1.0}}
      ],
      "branches": [{{"id": "ln", "from": "s", "to": "l", "phases": ["A"], "z_ohm": [[[{r}, {x}]]]}}]
    }}"#
    );
    FeederModel::from_json(&json).unwrap()
}

/// Receiving-end voltage of a stiff source feeding `p + jq` through `z`,
/// from the real root of `|V|⁴ + (2(rp + xq) - E²)|V|² + |z|²|S|² = 0`.
fn closed_form(e: f64, z: Complex64, p: f64, q: f64) -> Complex64 {
    let b = 2.0 * (z.re * p + z.im * q) - e * e;
    let c = z.norm_sqr() * (p * p + q * q);
    let v2 = (-b + (b * b - 4.0 * c).sqrt()) / 2.0;
    ((Complex64::new(v2, 0.0) + z * Complex64::new(p, -q)) / e).conj()
}

#[test]
fn two_bus_agrees_with_closed_form() {
    let cases = [((0.01, 0.02), (0.1, 0.05)), ((0.05, 0.05), (0.6, 0.2)), ((0.02, 0.08), (-0.4, 0.1)), ((0.1, 0.03), (0.0, -0.3))];
    for ((r, x), (p, q)) in cases {
        let model = two_bus(r, x);
        let mut inj = InjectionSpec::zeros(2);
        inj.s[1] = Complex64::new(-p, -q);
        let op = solve_powerflow::<f64>(&model, &TapRatioSet::neutral(&model), &inj, None).unwrap();
        let expect = closed_form(1.0, Complex64::new(r, x), p, q);
        assert!((op.v[1] - expect).norm() < 1e-8, "z=({r},{x}) s=({p},{q}): {} vs {expect}", op.v[1]);
        assert!(op.mismatch <= 1e-8);
    }
}

#[test]
fn overload_is_reported_as_collapse_or_nonconvergence() {
    let model = two_bus(0.1, 0.3);
    let mut inj = InjectionSpec::zeros(2);
    inj.s[1] = Complex64::new(-5.0, -2.0);
    let err = solve_powerflow::<f64>(&model, &TapRatioSet::neutral(&model), &inj, None).unwrap_err();
    assert!(matches!(err, PfError::VoltageCollapse { .. } | PfError::NonConvergence { .. }), "{err}");
}

#[test]
fn ieee37_solves_to_tolerance_across_loading() {
    let model = load_feeder(common::data("ieee37.json")).unwrap();
    let mut pf = PowerFlow::<f64>::new(&model);
    for (load, pv) in [(0.3, 0.0), (1.0, 0.0), (0.4, 1.0), (1.2, 0.5)] {
        let lm = vec![load; model.loads.len()];
        let kw: Vec<f64> = model.pv_units.iter().map(|u| (u.dc_kw * pv).min(u.si_kva)).collect();
        let inj = InjectionSpec::from_devices(&model, &lm, &kw, &vec![0.0; kw.len()]);
        for tau in [-8, 0, 8] {
            let taps = TapRatioSet::from_positions(&model, &[tau]).unwrap();
            let op = pf.solve(&taps, &inj, None).unwrap();
            assert!(op.mismatch <= 1e-8);
            // independent residual check from the assembled admittance matrix
            let net = FactorizedNetwork::<f64>::new(&model, &taps).unwrap();
            assert!(net.mismatch(&op.v, &inj) <= 1e-8);
            let vm = voltage_magnitudes(&op);
            assert!(vm.iter().all(|v| (0.7..1.2).contains(v)), "load {load} pv {pv} tau {tau}");
        }
    }
}

#[test]
fn admittance_matrix_is_symmetric_with_zero_row_sums_at_neutral_tap() {
    let model = load_feeder(common::data("ieee37.json")).unwrap();
    let y = assemble_ybus::<f64>(&model, &TapRatioSet::neutral(&model)).unwrap();
    let n = y.dim();
    for i in 0..n {
        let mut sum = Complex64::new(0.0, 0.0);
        for j in 0..n {
            assert!((y.y[(i, j)] - y.y[(j, i)]).norm() < 1e-9);
            sum += y.y[(i, j)];
        }
        // no shunts: a flat voltage profile draws no current
        assert!(sum.norm() < 1e-6 * y.y[(i, i)].norm().max(1.0), "row {i}: {sum}");
    }
}

#[test]
fn warm_start_reaches_the_same_point() {
    let model = load_feeder(common::data("ieee37.json")).unwrap();
    let lm = vec![0.8; model.loads.len()];
    let kw = vec![0.0; model.pv_units.len()];
    let inj = InjectionSpec::from_devices(&model, &lm, &kw, &kw);
    let taps = TapRatioSet::from_positions(&model, &[4]).unwrap();
    let mut pf = PowerFlow::<f64>::new(&model);
    let cold = pf.solve(&taps, &inj, None).unwrap();
    let warm = pf.solve(&taps, &inj, Some(&cold.v)).unwrap();
    assert!(warm.iterations <= 1);
    for (a, b) in cold.v.iter().zip(&warm.v) {
        assert!((a - b).norm() < 1e-8);
    }
}

#[test]
fn tap_range_and_lengths_are_checked() {
    let model = load_feeder(common::data("ieee37.json")).unwrap();
    assert!(matches!(TapRatioSet::from_positions(&model, &[17]), Err(PfError::TapRange { .. })));
    assert!(matches!(TapRatioSet::from_positions(&model, &[1, 2]), Err(PfError::TapCount { .. })));
    let taps = TapRatioSet::neutral(&model);
    let err = PowerFlow::<f64>::new(&model).solve(&taps, &InjectionSpec::zeros(3), None).unwrap_err();
    assert!(matches!(err, PfError::InjectionLength { .. }));
}
