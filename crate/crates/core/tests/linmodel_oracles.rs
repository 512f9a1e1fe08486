use num_complex::Complex64;
use voltreg::linmodel::{build_sensitivity, delta_pq, SensitivityModel};
use voltreg::netmodel::{load_feeder, FeederModel};
use voltreg::powerflow::{assemble_ybus, voltage_magnitudes, InjectionSpec, OperatingPoint, PowerFlow, TapRatioSet};

fn feeder() -> FeederModel {
    load_feeder(concat!(env!("CARGO_MANIFEST_DIR"), "/data/ieee37.json")).unwrap()
}

fn injection(model: &FeederModel, load: f64, pv: f64) -> InjectionSpec {
    let lm = vec![load; model.loads.len()];
    let kw: Vec<f64> = model.pv_units.iter().map(|u| u.dc_kw * pv).collect();
    InjectionSpec::from_devices(model, &lm, &kw, &vec![0.0; kw.len()])
}

fn base(model: &FeederModel) -> (OperatingPoint<f64>, SensitivityModel<f64>, InjectionSpec) {
    let inj = injection(model, 0.6, 0.4);
    let taps = TapRatioSet::from_positions(model, &[3]).unwrap();
    let op = PowerFlow::<f64>::new(model).solve(&taps, &inj, None).unwrap();
    let sm = build_sensitivity(model, &op).unwrap();
    (op, sm, inj)
}

/// Injection change at the PV nodes: `eps` times the unit ratings, half of it reactive.
fn pv_delta(model: &FeederModel, eps: f64) -> Vec<Complex64> {
    let mut ds = vec![Complex64::new(0.0, 0.0); model.n_nodes()];
    for u in &model.pv_units {
        let s = model.kw_to_pu(u.dc_kw) * eps;
        ds[u.node.index] += Complex64::new(s, -0.5 * s);
    }
    ds
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn tap_stamp_residual_is_exactly_quadratic() {
    let model = feeder();
    let dev = &model.oltcs[0];
    let (t0, t1) = (2, 7);
    let y0 = assemble_ybus::<f64>(&model, &TapRatioSet::from_positions(&model, &[t0]).unwrap()).unwrap();
    let y1 = assemble_ybus::<f64>(&model, &TapRatioSet::from_positions(&model, &[t1]).unwrap()).unwrap();
    let (a0, a1) = (dev.ratio(t0 as f64), dev.ratio(t1 as f64));
    let yt = 1.0 / dev.z_t;
    let n = model.n_nodes();
    for r in 0..n {
        for c in 0..n {
            let mut g = Complex64::new(0.0, 0.0);
            let mut quad = Complex64::new(0.0, 0.0);
            for (&i, &j) in dev.primary_nodes.iter().zip(&dev.secondary_nodes) {
                if r == i && c == i {
                    g += yt * 2.0 * a0;
                    quad += yt * (a1 - a0) * (a1 - a0);
                }
                if (r == i && c == j) || (r == j && c == i) {
                    g -= yt;
                }
            }
            let resid = y1.y[(r, c)] - y0.y[(r, c)] - g * (a1 - a0);
            assert!((resid - quad).norm() < 1e-9, "entry ({r},{c}): {resid} vs {quad}");
        }
    }
}

#[test]
fn zero_perturbation_gives_zero_response() {
    let model = feeder();
    let (_, sm, _) = base(&model);
    let resp = sm.injection_response().unwrap();
    let p = resp.solve(&[0.0], &vec![Complex64::new(0.0, 0.0); model.n_nodes()]);
    assert!(p.dv.iter().chain(&p.di).all(|z| z.norm() < 1e-14));
}

#[test]
fn response_superposes() {
    let model = feeder();
    let (_, sm, _) = base(&model);
    let resp = sm.injection_response().unwrap();
    let da = 0.01;
    let ds1 = pv_delta(&model, 0.1);
    let mut ds2 = vec![Complex64::new(0.0, 0.0); model.n_nodes()];
    for l in &model.loads {
        ds2[l.node.index] -= Complex64::new(0.3 * l.p_pu, 0.1 * l.q_pu);
    }
    let sum: Vec<Complex64> = ds1.iter().zip(&ds2).map(|(a, b)| a + b).collect();
    let whole = resp.solve(&[da], &sum);
    let a = resp.solve(&[da], &ds1);
    let b = resp.solve(&[0.0], &ds2);
    for k in 0..model.n_nodes() {
        assert!((whole.dv[k] - a.dv[k] - b.dv[k]).norm() < 1e-12);
        assert!((whole.di[k] - a.di[k] - b.di[k]).norm() < 1e-11);
    }
}

#[test]
fn response_satisfies_first_order_power_identity() {
    let model = feeder();
    let (_, sm, _) = base(&model);
    let resp = sm.injection_response().unwrap();
    let ds = pv_delta(&model, 0.2);
    let p = resp.solve(&[0.0125], &ds);
    let (dp, dq) = delta_pq(&sm.injection_linearization(), &p.dv, &p.di);
    for k in model.non_slack_nodes() {
        assert!((dp[k] - ds[k].re).abs() < 1e-10, "node {k}: dP {} vs {}", dp[k], ds[k].re);
        assert!((dq[k] - ds[k].im).abs() < 1e-10, "node {k}: dQ {} vs {}", dq[k], ds[k].im);
    }
    for k in 0..model.n_nodes() {
        if model.is_slack(k) {
            assert!(p.dv[k].norm() < 1e-15);
        }
    }
}

/// Largest |V| error of the affine prediction against a re-solved power flow.
fn magnitude_error(model: &FeederModel, taps: &[f64], eps: f64) -> f64 {
    let (op, sm, inj) = base(model);
    let resp = sm.injection_response().unwrap();
    let new_taps = TapRatioSet::from_relaxed(model, taps).unwrap();
    let ds = pv_delta(model, eps);
    let p = resp.solve(&sm.tap_deltas(&new_taps), &ds);
    let pred = sm.magnitudes(&p.dv);
    let mut inj2 = inj.clone();
    for (s, d) in inj2.s.iter_mut().zip(&ds) {
        *s += d;
    }
    let truth = PowerFlow::<f64>::new(model).solve(&new_taps, &inj2, Some(&op.v)).unwrap();
    max_abs_diff(&pred, &voltage_magnitudes(&truth))
}

#[test]
fn injection_error_decays_quadratically() {
    let model = feeder();
    let e1 = magnitude_error(&model, &[3.0], 0.08);
    let e2 = magnitude_error(&model, &[3.0], 0.04);
    let e3 = magnitude_error(&model, &[3.0], 0.02);
    assert!(e1 < 5e-3, "{e1}");
    for (big, small) in [(e1, e2), (e2, e3)] {
        let ratio = big / small;
        assert!((3.0..5.0).contains(&ratio), "halving the step should quarter the error: {big} / {small} = {ratio}");
    }
}

#[test]
fn tap_error_decays_quadratically() {
    let model = feeder();
    let e1 = magnitude_error(&model, &[5.0], 0.0);
    let e2 = magnitude_error(&model, &[4.0], 0.0);
    let e3 = magnitude_error(&model, &[3.5], 0.0);
    assert!(e1 < 1e-3, "{e1}");
    for (big, small) in [(e1, e2), (e2, e3)] {
        let ratio = big / small;
        assert!((3.0..5.0).contains(&ratio), "{big} / {small} = {ratio}");
    }
}

#[test]
fn single_precision_model_tracks_double() {
    let model = feeder();
    let inj = injection(&model, 0.6, 0.4);
    let taps = TapRatioSet::from_positions(&model, &[3]).unwrap();
    let op64 = PowerFlow::<f64>::new(&model).solve(&taps, &inj, None).unwrap();
    let mut pf32 = PowerFlow::<f32>::new(&model);
    pf32.options.tolerance = 1e-4;
    let op32 = pf32.solve(&taps, &inj, None).unwrap();
    let m64 = voltage_magnitudes(&op64);
    let m32: Vec<f64> = voltage_magnitudes(&op32).iter().map(|v| *v as f64).collect();
    assert!(max_abs_diff(&m64, &m32) < 1e-4);
    let sm32 = build_sensitivity(&model, &op32).unwrap();
    assert_eq!(sm32.tap_sens.len(), 1);
}
