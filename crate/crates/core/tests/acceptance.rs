//! End-to-end acceptance checks on the bundled data. Every criterion prints
//! one PASS/FAIL line. Criteria in `KNOWN_RED` are reported but do not fail
//! the test; the test does fail if one of them starts passing, so the list
//! cannot go stale.

mod common;

use num_complex::Complex64;
use std::io::Write;
use std::time::Instant;
use voltreg::harness::{
    compute_metrics, plan_first_horizon, run_with_data, sweep_alpha, validate_linearization, Metrics, Scenario,
    ScenarioData, SimulationResult,
};
use voltreg::optimizer::{solve_lp, solve_lp_dense, solve_milp, DispatchOptions, DispatchStatus};
use voltreg::powerflow::{solve_powerflow, InjectionSpec, TapRatioSet};

const KNOWN_RED: &[u32] = &[3, 5];

const LIN_MAX: f64 = 0.012;
const LIN_MEAN: f64 = 0.005;
const LIN_RUNTIME_S: f64 = 300.0;
const TAP_RATIO: f64 = 0.5;
const W2_GRID: [f64; 4] = [0.001, 0.01, 0.05, 0.15];
const ALPHAS: [f64; 4] = [0.0, 0.1, 0.2, 0.3];
const DEV_LIMIT: f64 = 0.05;
const ORACLE_TOL: f64 = 1e-6;
const N_ORACLE: u64 = 100;
const PF_TOL: f64 = 1e-8;
const BIG_HORIZON_S: f64 = 600.0;

struct Report {
    results: Vec<(u32, bool)>,
}

impl Report {
    fn check(&mut self, id: u32, name: &str, pass: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        // bypasses the test harness capture so the lines land in the log
        let mut out = std::io::stdout().lock();
        if self.results.is_empty() {
            writeln!(out).unwrap();
        }
        writeln!(out, "acceptance {id} {tag}  {name}: {detail}").unwrap();
        out.flush().unwrap();
        self.results.push((id, pass));
    }
}

fn load(file: &str) -> (Scenario, ScenarioData) {
    let s = Scenario::from_path(common::data(file)).unwrap();
    let d = s.load_data().unwrap();
    (s, d)
}

fn overvoltage_steps(r: &SimulationResult, from: usize, to: usize) -> usize {
    r.steps
        .iter()
        .zip(&r.vmag)
        .filter(|(s, v)| (from..to).contains(*s) && r.non_slack.iter().any(|&k| v[k] > 1.05))
        .count()
}

fn two_bus_error() -> f64 {
    let mut worst = 0.0f64;
    for ((r, x), (p, q)) in [((0.01, 0.02), (0.1, 0.05)), ((0.05, 0.05), (0.6, 0.2)), ((0.02, 0.08), (-0.4, 0.1))] {
        let json = format!(
            r#"{{"bases": {{"s_base_kva": 1000.0}},
              "source": {{"bus": "s", "v_pu": [1.0], "angle_deg": [0.0]}},
              "buses": [{{"id": "s", "phases": ["A"], "v_base_kv": 1.0}}, {{"id": "l", "phases": ["A"], "v_base_kv": 1.0}}],
              "branches": [{{"id": "ln", "from": "s", "to": "l", "phases": ["A"], "z_ohm": [[[{r}, {x}]]]}}]}}"#
        );
        let model = voltreg::netmodel::FeederModel::from_json(&json).unwrap();
        let mut inj = InjectionSpec::zeros(2);
        inj.s[1] = Complex64::new(-p, -q);
        let op = solve_powerflow::<f64>(&model, &TapRatioSet::neutral(&model), &inj, None).unwrap();
        let z = Complex64::new(r, x);
        let b = 2.0 * (r * p + x * q) - 1.0;
        let v2 = (-b + (b * b - 4.0 * z.norm_sqr() * (p * p + q * q)).sqrt()) / 2.0;
        let expect = (Complex64::new(v2, 0.0) + z * Complex64::new(p, -q)).conj();
        worst = worst.max((op.v[1] - expect).norm());
    }
    worst
}

#[test]
fn acceptance() {
    let mut rep = Report { results: Vec::new() };
    let mut mismatches: Vec<(String, f64)> = Vec::new();

    let (ovr_scn, data) = load("ieee37_cloudy_ovr.json");
    let (avr_scn, _) = load("ieee37_cloudy_avr.json");

    // 1: linearization error along the day, timed like the CLI command
    let clock = Instant::now();
    let ovr = run_with_data(&ovr_scn, &data).unwrap();
    let lin = validate_linearization(&data, &ovr, 1).unwrap().summary();
    let lin_s = clock.elapsed().as_secs_f64();
    rep.check(
        1,
        "linearization accuracy",
        lin.max_abs <= LIN_MAX && lin.mean_abs <= LIN_MEAN && lin_s < LIN_RUNTIME_S,
        format!(
            "{} cases, max |E| {:.6} (<= {LIN_MAX}), mean |E| {:.6} (<= {LIN_MEAN}), {lin_s:.0} s (< {LIN_RUNTIME_S})",
            lin.cases, lin.max_abs, lin.mean_abs
        ),
    );

    let avr = run_with_data(&avr_scn, &data).unwrap();
    let (ma, mo) = (compute_metrics(&avr), compute_metrics(&ovr));
    mismatches.push(("avr day".into(), avr.max_mismatch));
    mismatches.push(("ovr day".into(), ovr.max_mismatch));

    // 2: over-voltage near noon under local control, none with the optimizer
    let noon_ov = overvoltage_steps(&avr, 1200, 1680);
    rep.check(
        2,
        "over-voltage elimination",
        ma.overvoltage_node_minutes > 0.0 && noon_ov > 0 && mo.overvoltage_node_minutes == 0.0 && mo.failed_steps == 0,
        format!(
            "avr {:.1} node-min ({noon_ov} steps over 1.05 between 10:00 and 14:00), ovr {:.1} node-min",
            ma.overvoltage_node_minutes, mo.overvoltage_node_minutes
        ),
    );

    // 3: tap operations
    rep.check(
        3,
        "tap-operation reduction",
        mo.tap_operations as f64 <= TAP_RATIO * ma.tap_operations as f64,
        format!("ovr {} vs avr {} (need <= {TAP_RATIO} x avr)", mo.tap_operations, ma.tap_operations),
    );

    // 4: J2 against w2 on planned horizons
    let mut mono = true;
    let mut trail = Vec::new();
    for start in [1200, 1440, 1680] {
        let mut s = ovr_scn.clone();
        s.start_step = start;
        s.weights.w1 = 1.0;
        let mut prob = plan_first_horizon(&s, &data).unwrap();
        let mut last = f64::INFINITY;
        let mut row = Vec::new();
        for w2 in W2_GRID {
            prob.weights.w2 = w2;
            let sol = solve_milp(&prob, &DispatchOptions::default());
            mono &= sol.status == DispatchStatus::Optimal && sol.j2 <= last + 1e-9;
            last = sol.j2;
            row.push(format!("{}", sol.j2));
        }
        trail.push(format!("step {start}: [{}]", row.join(", ")));
    }
    rep.check(4, "weight monotonicity", mono, format!("J2 over w2 {W2_GRID:?}: {}", trail.join("; ")));

    // 5: forecast error sweep; the alpha = 0 row is the day already run
    let mut rows: Vec<(f64, Metrics)> = vec![(0.0, mo.clone())];
    for r in sweep_alpha(&ovr_scn, &data, &ALPHAS[1..]).unwrap() {
        rows.push((r.alpha, r.metrics));
    }
    for (a, m) in &rows[1..] {
        mismatches.push((format!("sweep alpha {a}"), m.max_mismatch));
    }
    let all_within = rows.iter().all(|(_, m)| m.max_deviation < DEV_LIMIT && m.failed_steps == 0);
    let best = rows.iter().map(|(_, m)| m.mean_deviation).fold(f64::INFINITY, f64::min);
    let zero_best = rows[0].1.mean_deviation <= best;
    rep.check(
        5,
        "forecast robustness",
        all_within && zero_best,
        rows.iter()
            .map(|(a, m)| format!("alpha {a}: max {:.5} mean {:.6}", m.max_deviation, m.mean_deviation))
            .collect::<Vec<_>>()
            .join("; "),
    );

    // 6: optimizer oracles
    let mut milp_worst = 0.0f64;
    let mut milp_ok = true;
    for seed in 0..N_ORACLE {
        let prob = common::small_dispatch(10_000 + seed);
        let sol = solve_milp(&prob, &DispatchOptions::default());
        milp_ok &= sol.status == DispatchStatus::Optimal;
        milp_worst = milp_worst.max((sol.objective - common::enumerate_taps(&prob)).abs());
    }
    let mut lp_worst = 0.0f64;
    for seed in 0..N_ORACLE {
        let lp = common::random_lp(20_000 + seed, 3 + (seed as usize % 9), 2 + (seed as usize * 5 % 8));
        let (a, b) = (solve_lp(&lp).unwrap(), solve_lp_dense(&lp).unwrap());
        lp_worst = lp_worst.max((a.objective - b.objective).abs());
    }
    rep.check(
        6,
        "MILP and LP exactness",
        milp_ok && milp_worst <= ORACLE_TOL && lp_worst <= ORACLE_TOL,
        format!("{N_ORACLE} MILPs worst {milp_worst:.2e}, {N_ORACLE} LPs worst {lp_worst:.2e} (<= {ORACLE_TOL:e})"),
    );

    // 8 runs before 7 so its solves are covered by the mismatch check
    let (big_scn, big_data) = load("synthetic1k_ovr.json");
    let mut one = big_scn.clone();
    one.n_steps = Some(one.horizon_steps);
    let clock = Instant::now();
    let big = run_with_data(&one, &big_data).unwrap();
    let big_s = clock.elapsed().as_secs_f64();
    mismatches.push(("synthetic horizon".into(), big.max_mismatch));
    rep.check(
        8,
        "large-feeder horizon",
        big_data.model.n_nodes() >= 1000 && big.failures.is_empty() && big_s < BIG_HORIZON_S,
        format!("{} nodes, {} steps in {big_s:.1} s (< {BIG_HORIZON_S})", big_data.model.n_nodes(), big.steps.len()),
    );

    // 7: power flow
    let tb = two_bus_error();
    let worst = mismatches.iter().map(|(_, m)| *m).fold(0.0, f64::max);
    rep.check(
        7,
        "power-flow correctness",
        tb <= PF_TOL && mismatches.iter().all(|(_, m)| *m <= PF_TOL),
        format!("two-bus error {tb:.2e}, worst mismatch {worst:.2e} over {} runs (<= {PF_TOL:e})", mismatches.len()),
    );

    rep.results.sort();
    let unexpected: Vec<u32> =
        rep.results.iter().filter(|(id, pass)| *pass == KNOWN_RED.contains(id)).map(|(id, _)| *id).collect();
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "acceptance summary: {} of {} pass; known red {KNOWN_RED:?}",
        rep.results.iter().filter(|r| r.1).count(),
        rep.results.len()
    )
    .unwrap();
    assert!(unexpected.is_empty(), "criteria with unexpected outcome: {unexpected:?}");
}
