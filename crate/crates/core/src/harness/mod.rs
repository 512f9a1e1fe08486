//! Time-series simulation of both control schemes, metrics and result files.

pub mod scenario;

pub use scenario::{Method, ProfileRef, Scenario, ScenarioData, ScenarioError, Weights};

use crate::controllers::{avr_step, ovr_step, AvrState, StepInputs};
use crate::linmodel::{build_sensitivity_with, linearization_error_report, LinCase, LinError, LinearizationReport};
use crate::netmodel::{FeederModel, TimeSeriesProfile};
use crate::optimizer::{
    extract_setpoints, solve_milp_from, DispatchError, DispatchOptions, DispatchProblem, DispatchStatus, MipOptions,
    NodeLog,
};
use crate::powerflow::{voltage_magnitudes, InjectionSpec, OperatingPoint, PfError, PowerFlow, TapRatioSet};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

pub const V_UPPER: f64 = 1.05;
pub const V_LOWER: f64 = 0.95;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    PowerFlow(#[from] PfError),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error(transparent)]
    Lin(#[from] LinError),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid run: {0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.display().to_string(), source }
}

/// Perturbed copy of a profile: `y = (1 + α ε) y_true` with `ε ~ U[-1, 1]`
/// drawn per step; negative values are clipped to zero.
pub fn make_forecast(profile: &TimeSeriesProfile, alpha: f64, seed: u64) -> TimeSeriesProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = profile
        .values
        .iter()
        .map(|y| {
            let e: f64 = rng.gen_range(-1.0..=1.0);
            ((1.0 + alpha * e) * y).max(0.0)
        })
        .collect();
    TimeSeriesProfile { id: profile.id.clone(), start_s: profile.start_s, dt_s: profile.dt_s, values }
}

/// Forecasts of every profile, each from its own stream of the run seed.
pub fn make_forecasts(
    profiles: &BTreeMap<String, TimeSeriesProfile>,
    alpha: f64,
    seed: u64,
) -> BTreeMap<String, TimeSeriesProfile> {
    profiles
        .iter()
        .enumerate()
        .map(|(i, (id, p))| {
            let s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64 + 1);
            (id.clone(), make_forecast(p, alpha, s))
        })
        .collect()
}

/// Device inputs at a profile step.
pub fn step_inputs(model: &FeederModel, profiles: &BTreeMap<String, TimeSeriesProfile>, step: usize) -> StepInputs {
    let at = |id: &str| profiles.get(id).map_or(0.0, |p| p.at(step));
    StepInputs {
        load_mult: model.loads.iter().map(|l| at(&l.profile_id)).collect(),
        pv_kw: model.pv_units.iter().map(|u| at(&u.profile_id).clamp(0.0, u.si_kva)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepFailure {
    pub step: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonRecord {
    pub start: usize,
    pub status: DispatchStatus,
    pub objective: f64,
    pub lp_bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub solve_s: f64,
    /// Largest gap between realized and predicted magnitudes over the
    /// applied steps.
    pub max_prediction_error: f64,
}

#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub method: Method,
    pub dt_s: f64,
    pub node_names: Vec<String>,
    pub oltc_ids: Vec<String>,
    pub pv_ids: Vec<String>,
    pub non_slack: Vec<usize>,
    /// Node groups of each multi-phase non-slack bus.
    pub bus_groups: Vec<Vec<usize>>,
    pub steps: Vec<usize>,
    /// `[step][node]`; NaN where no power flow could be solved.
    pub vmag: Vec<Vec<f64>>,
    pub taps: Vec<Vec<i32>>,
    pub si_q_kvar: Vec<Vec<f64>>,
    pub initial_taps: Vec<i32>,
    pub max_mismatch: f64,
    pub failures: Vec<StepFailure>,
    pub horizons: Vec<HorizonRecord>,
    pub solver_log: Vec<(usize, NodeLog)>,
    pub clipped_setpoints: usize,
    pub runtime_s: f64,
}

impl SimulationResult {
    pub fn degraded(&self) -> bool {
        !self.failures.is_empty()
    }

    fn new(method: Method, model: &FeederModel, dt_s: f64, initial_taps: Vec<i32>) -> Self {
        let non_slack = model.non_slack_nodes();
        let bus_groups = model
            .buses
            .iter()
            .filter(|b| b.nodes.len() > 1 && b.nodes.iter().all(|&k| !model.is_slack(k)))
            .map(|b| b.nodes.clone())
            .collect();
        Self {
            method,
            dt_s,
            node_names: model.nodes.iter().map(|n| n.to_string()).collect(),
            oltc_ids: model.oltcs.iter().map(|o| o.id.clone()).collect(),
            pv_ids: model.pv_units.iter().map(|u| u.id.clone()).collect(),
            non_slack,
            bus_groups,
            steps: Vec::new(),
            vmag: Vec::new(),
            taps: Vec::new(),
            si_q_kvar: Vec::new(),
            initial_taps,
            max_mismatch: 0.0,
            failures: Vec::new(),
            horizons: Vec::new(),
            solver_log: Vec::new(),
            clipped_setpoints: 0,
            runtime_s: 0.0,
        }
    }

    fn record(&mut self, step: usize, op: Option<&OperatingPoint<f64>>, taps: &[i32], q: &[f64]) {
        let n = self.node_names.len();
        match op {
            Some(op) => {
                self.vmag.push(voltage_magnitudes(op));
                self.max_mismatch = self.max_mismatch.max(op.mismatch);
            }
            None => self.vmag.push(vec![f64::NAN; n]),
        }
        self.steps.push(step);
        self.taps.push(taps.to_vec());
        self.si_q_kvar.push(q.to_vec());
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub method: String,
    pub steps: usize,
    pub dt_s: f64,
    /// Σ over steps and non-slack nodes above 1.05 p.u., in node-minutes.
    pub overvoltage_node_minutes: f64,
    pub undervoltage_node_minutes: f64,
    /// Minutes in which any node is outside [0.95, 1.05].
    pub violation_minutes: f64,
    pub max_vmag: f64,
    pub min_vmag: f64,
    pub max_deviation: f64,
    pub mean_deviation: f64,
    /// Largest phase-to-phase magnitude spread on one bus.
    pub max_unbalance: f64,
    pub mean_unbalance: f64,
    pub tap_operations: u64,
    pub failed_steps: usize,
    pub max_mismatch: f64,
}

/// Total tap movement of a trajectory `[step][oltc]` starting from `initial`.
pub fn count_tap_operations(initial: &[i32], taps: &[Vec<i32>]) -> u64 {
    let mut ops = 0u64;
    let mut prev = initial;
    for t in taps {
        ops += t.iter().zip(prev).map(|(a, b)| (a - b).unsigned_abs() as u64).sum::<u64>();
        prev = t;
    }
    ops
}

pub fn compute_metrics(r: &SimulationResult) -> Metrics {
    let minutes = r.dt_s / 60.0;
    let (mut over, mut under, mut viol) = (0.0, 0.0, 0.0);
    let (mut vmax, mut vmin) = (f64::NEG_INFINITY, f64::INFINITY);
    let (mut dmax, mut dsum, mut dn) = (0.0f64, 0.0, 0usize);
    let (mut umax, mut usum, mut un) = (0.0f64, 0.0, 0usize);
    for row in &r.vmag {
        if row.iter().any(|v| v.is_nan()) {
            continue;
        }
        let mut bad = false;
        for &k in &r.non_slack {
            let v = row[k];
            if v > V_UPPER {
                over += minutes;
                bad = true;
            }
            if v < V_LOWER {
                under += minutes;
                bad = true;
            }
            vmax = vmax.max(v);
            vmin = vmin.min(v);
            let d = (v - 1.0).abs();
            dmax = dmax.max(d);
            dsum += d;
            dn += 1;
        }
        if bad {
            viol += minutes;
        }
        for g in &r.bus_groups {
            let hi = g.iter().map(|&k| row[k]).fold(f64::NEG_INFINITY, f64::max);
            let lo = g.iter().map(|&k| row[k]).fold(f64::INFINITY, f64::min);
            umax = umax.max(hi - lo);
            usum += hi - lo;
            un += 1;
        }
    }
    let ops = count_tap_operations(&r.initial_taps, &r.taps);
    Metrics {
        method: r.method.to_string(),
        steps: r.steps.len(),
        dt_s: r.dt_s,
        overvoltage_node_minutes: over,
        undervoltage_node_minutes: under,
        violation_minutes: viol,
        max_vmag: vmax,
        min_vmag: vmin,
        max_deviation: dmax,
        mean_deviation: if dn > 0 { dsum / dn as f64 } else { 0.0 },
        max_unbalance: umax,
        mean_unbalance: if un > 0 { usum / un as f64 } else { 0.0 },
        tap_operations: ops,
        failed_steps: r.failures.len(),
        max_mismatch: r.max_mismatch,
    }
}

/// Simulation window `[start, end)` in profile steps.
pub fn window(scn: &Scenario, data: &ScenarioData) -> Result<(usize, usize), HarnessError> {
    let len = data.profile_len();
    if scn.start_step >= len {
        return Err(HarnessError::Invalid(format!("start_step {} beyond profile length {len}", scn.start_step)));
    }
    let end = scn.n_steps.map_or(len, |n| (scn.start_step + n).min(len));
    Ok((scn.start_step, end))
}

/// Initial taps: given, or settled by the local rule on the first step's
/// inputs without counting the moves.
pub fn initial_taps(scn: &Scenario, data: &ScenarioData, pf: &mut PowerFlow<'_, f64>, step: usize) -> Vec<i32> {
    if let Some(t) = &scn.initial_taps {
        return t.clone();
    }
    let model = &data.model;
    let mut state = AvrState::new(model, vec![0; model.oltcs.len()]);
    let inputs = step_inputs(model, &data.profiles, step);
    let range = model.oltcs.iter().map(|o| (o.tau_max - o.tau_min) as u32).max().unwrap_or(0);
    let dt = scn.avr.time_delay_s + scn.dt_s;
    match avr_step(pf, &scn.avr, &scn.volt_var, &mut state, &inputs, dt, Some(range)) {
        Ok(out) => out.taps,
        Err(e) => {
            log::warn!("initial tap settle failed ({e}); starting at neutral");
            vec![0; model.oltcs.len()]
        }
    }
}

pub fn run_scenario(scn: &Scenario) -> Result<SimulationResult, HarnessError> {
    let data = scn.load_data()?;
    run_with_data(scn, &data)
}

pub fn run_with_data(scn: &Scenario, data: &ScenarioData) -> Result<SimulationResult, HarnessError> {
    scn.validate()?;
    match scn.method {
        Method::Avr => run_avr(scn, data),
        Method::Ovr => run_ovr(scn, data),
    }
}

fn run_avr(scn: &Scenario, data: &ScenarioData) -> Result<SimulationResult, HarnessError> {
    let clock = Instant::now();
    let model = &data.model;
    let (start, end) = window(scn, data)?;
    let mut pf = PowerFlow::<f64>::new(model);
    let init = initial_taps(scn, data, &mut pf, start);
    let mut res = SimulationResult::new(Method::Avr, model, scn.dt_s, init.clone());
    let mut state = AvrState::new(model, init);
    for step in start..end {
        let inputs = step_inputs(model, &data.profiles, step);
        match avr_step(&mut pf, &scn.avr, &scn.volt_var, &mut state, &inputs, scn.dt_s, None) {
            Ok(out) => res.record(step, Some(&out.op), &out.taps, &out.q_kvar),
            Err(e) => {
                res.failures.push(StepFailure { step, message: e.to_string() });
                let held = ovr_step(&mut pf, &state.taps, &state.q_kvar, &inputs, state.v.as_deref()).ok();
                let (taps, q) = (state.taps.clone(), state.q_kvar.clone());
                res.record(step, held.as_ref(), &taps, &q);
            }
        }
    }
    res.runtime_s = clock.elapsed().as_secs_f64();
    Ok(res)
}

fn clip_to_capability(q: &[f64], q_max: &[f64]) -> (Vec<f64>, usize) {
    let mut n = 0;
    let out = q
        .iter()
        .zip(q_max)
        .map(|(v, m)| {
            let c = v.clamp(-m, *m);
            if (c - v).abs() > 1e-9 {
                n += 1;
            }
            c
        })
        .collect();
    (out, n)
}

struct HorizonPlan {
    problem: DispatchProblem,
    v_last: Vec<Complex64>,
}

fn plan_horizon(
    scn: &Scenario,
    model: &FeederModel,
    pf: &mut PowerFlow<'_, f64>,
    forecasts: &BTreeMap<String, TimeSeriesProfile>,
    steps: std::ops::Range<usize>,
    tau_prev: &[i32],
    q_held: &[f64],
    v_warm: Option<&[Complex64]>,
) -> Result<HorizonPlan, HarnessError> {
    let ratios = TapRatioSet::from_positions(model, tau_prev)?;
    let net = pf.network(&ratios)?;
    let mut sms = Vec::with_capacity(steps.len());
    let mut q_max = Vec::with_capacity(steps.len());
    let mut q_base = Vec::with_capacity(steps.len());
    let mut warm = v_warm.map(|v| v.to_vec());
    for s in steps {
        let f = step_inputs(model, forecasts, s);
        let cap = f.q_max_kvar(model);
        let (q0, _) = clip_to_capability(q_held, &cap);
        let inj = InjectionSpec::from_devices(model, &f.load_mult, &f.pv_kw, &q0);
        let op = pf.solve(&ratios, &inj, warm.as_deref())?;
        warm = Some(op.v.clone());
        sms.push(build_sensitivity_with(model, net.clone(), &op)?);
        q_max.push(cap);
        q_base.push(q0);
    }
    let problem =
        DispatchProblem::from_linearizations(model, sms, &q_max, &q_base, tau_prev, scn.weights, scn.dt_s)?;
    Ok(HorizonPlan { problem, v_last: warm.unwrap_or_default() })
}

/// Dispatch problem of the first horizon of a scenario, with initial taps
/// settled as in a run.
pub fn plan_first_horizon(scn: &Scenario, data: &ScenarioData) -> Result<DispatchProblem, HarnessError> {
    let model = &data.model;
    let (start, _) = window(scn, data)?;
    let h = scn.horizon_steps.min(data.profile_len() - start);
    let mut pf = PowerFlow::<f64>::new(model);
    let taps = initial_taps(scn, data, &mut pf, start);
    let forecasts = make_forecasts(&data.profiles, scn.forecast_alpha, scn.rng_seed);
    let q0 = vec![0.0; model.pv_units.len()];
    Ok(plan_horizon(scn, model, &mut pf, &forecasts, start..start + h, &taps, &q0, None)?.problem)
}

fn run_ovr(scn: &Scenario, data: &ScenarioData) -> Result<SimulationResult, HarnessError> {
    let clock = Instant::now();
    let model = &data.model;
    let (start, end) = window(scn, data)?;
    let len = data.profile_len();
    let mut pf = PowerFlow::<f64>::new(model);
    let init = initial_taps(scn, data, &mut pf, start);
    let mut res = SimulationResult::new(Method::Ovr, model, scn.dt_s, init.clone());
    let forecasts = make_forecasts(&data.profiles, scn.forecast_alpha, scn.rng_seed);
    let opts = DispatchOptions {
        mip: MipOptions { time_budget: Some(Duration::from_secs_f64(scn.milp_time_budget_s)), ..Default::default() },
    };
    let mut taps = init;
    let mut q_held = vec![0.0; model.pv_units.len()];
    let mut v_warm: Option<Vec<Complex64>> = None;
    let mut basis_warm = None;
    let mut t = start;
    while t < end {
        let h = scn.horizon_steps.min(len - t);
        let apply = scn.replan().min(end - t).min(h);
        let solve_clock = Instant::now();
        let plan = plan_horizon(scn, model, &mut pf, &forecasts, t..t + h, &taps, &q_held, v_warm.as_deref());
        let (commands, predicted) = match plan {
            Ok(plan) => {
                let mut sol = solve_milp_from(&plan.problem, &opts, basis_warm.as_ref());
                basis_warm = sol.root_basis.take();
                let cmds = extract_setpoints(&plan.problem, &sol);
                res.horizons.push(HorizonRecord {
                    start: t,
                    status: sol.status,
                    objective: sol.objective,
                    lp_bound: sol.lp_bound,
                    gap: sol.gap,
                    nodes: sol.nodes,
                    solve_s: solve_clock.elapsed().as_secs_f64(),
                    max_prediction_error: 0.0,
                });
                res.solver_log.extend(sol.log.iter().cloned().map(|l| (t, l)));
                if v_warm.is_none() {
                    v_warm = Some(plan.v_last);
                }
                (Some(cmds), Some((plan.problem.monitored, sol.predicted_vmag)))
            }
            Err(e) => {
                log::warn!("horizon at step {t} could not be planned: {e}");
                res.failures.push(StepFailure { step: t, message: format!("planning failed: {e}") });
                (None, None)
            }
        };
        let mut pred_err = 0.0f64;
        for a in 0..apply {
            let step = t + a;
            let inputs = step_inputs(model, &data.profiles, step);
            let q_max = inputs.q_max_kvar(model);
            let (cmd_taps, cmd_q) = match &commands {
                Some(c) => (c[a].taps.clone(), c[a].q_kvar.clone()),
                None => (taps.clone(), q_held.clone()),
            };
            let (q, clipped) = clip_to_capability(&cmd_q, &q_max);
            res.clipped_setpoints += clipped;
            match ovr_step(&mut pf, &cmd_taps, &q, &inputs, v_warm.as_deref()) {
                Ok(op) => {
                    if let Some((mon, pred)) = &predicted {
                        for (j, &k) in mon.iter().enumerate() {
                            pred_err = pred_err.max((op.v[k].norm() - pred[a][j]).abs());
                        }
                    }
                    v_warm = Some(op.v.clone());
                    res.record(step, Some(&op), &cmd_taps, &q);
                    taps = cmd_taps;
                    q_held = q;
                }
                Err(e) => {
                    res.failures.push(StepFailure { step, message: e.to_string() });
                    let (hq, _) = clip_to_capability(&q_held, &q_max);
                    let held = ovr_step(&mut pf, &taps, &hq, &inputs, v_warm.as_deref()).ok();
                    let tp = taps.clone();
                    res.record(step, held.as_ref(), &tp, &hq);
                    q_held = hq;
                }
            }
        }
        if predicted.is_some() {
            if let Some(h) = res.horizons.last_mut() {
                h.max_prediction_error = pred_err;
            }
        }
        t += apply;
    }
    res.runtime_s = clock.elapsed().as_secs_f64();
    Ok(res)
}

/// Linearization error along a simulated run. For each recorded step the
/// network is linearized at the true inputs with the previous step's taps and
/// inverter reactive outputs, as a planner would; the case applies the step's
/// realized taps and reactive outputs. `stride` thins the steps. Case ids are
/// profile steps.
pub fn validate_linearization(
    data: &ScenarioData,
    result: &SimulationResult,
    stride: usize,
) -> Result<LinearizationReport, HarnessError> {
    let model = &data.model;
    let mut pf = PowerFlow::<f64>::new(model);
    let mut cases = Vec::new();
    let mut prev = result.initial_taps.clone();
    let mut prev_q = vec![0.0; model.pv_units.len()];
    let mut warm: Option<Vec<Complex64>> = None;
    for (idx, &step) in result.steps.iter().enumerate() {
        let taps = &result.taps[idx];
        if idx % stride.max(1) == 0 {
            let inputs = step_inputs(model, &data.profiles, step);
            let base = TapRatioSet::from_positions(model, &prev)?;
            let inj = InjectionSpec::from_devices(model, &inputs.load_mult, &inputs.pv_kw, &prev_q);
            let op = pf.solve(&base, &inj, warm.as_deref())?;
            let mut ds = vec![Complex64::new(0.0, 0.0); model.n_nodes()];
            for ((u, q), q0) in model.pv_units.iter().zip(&result.si_q_kvar[idx]).zip(&prev_q) {
                ds[u.node.index].im += model.kw_to_pu(q - q0);
            }
            let case = LinCase { taps: TapRatioSet::from_positions(model, taps)?, delta_s: ds };
            let mut rep = linearization_error_report(model, &op, &[case])?;
            let mut c = rep.cases.remove(0);
            c.case_id = step;
            cases.push(c);
            warm = Some(op.v);
        }
        prev.clone_from(taps);
        prev_q.clone_from(&result.si_q_kvar[idx]);
    }
    Ok(LinearizationReport { cases })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub metrics: Metrics,
}

/// Runs the optimizer-based scheme once per forecast error level with a
/// common seed.
pub fn sweep_alpha(scn: &Scenario, data: &ScenarioData, alphas: &[f64]) -> Result<Vec<SweepRow>, HarnessError> {
    alphas
        .iter()
        .map(|&alpha| {
            let mut s = scn.clone();
            s.method = Method::Ovr;
            s.forecast_alpha = alpha;
            let r = run_with_data(&s, data)?;
            Ok(SweepRow { alpha, metrics: compute_metrics(&r) })
        })
        .collect()
}

pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<(), HarnessError> {
    let mut f = std::fs::File::create(path).map_err(io_err(path))?;
    let mut text = String::from("alpha,max_deviation,mean_deviation,overvoltage_node_minutes,tap_operations,failed_steps\n");
    for r in rows {
        let m = &r.metrics;
        text.push_str(&format!(
            "{},{:.6},{:.6},{:.3},{},{}\n",
            r.alpha, m.max_deviation, m.mean_deviation, m.overvoltage_node_minutes, m.tap_operations, m.failed_steps
        ));
    }
    f.write_all(text.as_bytes()).map_err(io_err(path))
}

/// Writes voltages.csv, taps.csv, si_q.csv, metrics.json and summary.txt,
/// plus horizon and solver logs for the optimizer run.
pub fn write_results(r: &SimulationResult, m: &Metrics, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let csv_err = |p: &Path, e: csv::Error| HarnessError::Io {
        path: p.display().to_string(),
        source: std::io::Error::new(std::io::ErrorKind::Other, e),
    };

    let p = dir.join("voltages.csv");
    let mut w = csv::Writer::from_path(&p).map_err(|e| csv_err(&p, e))?;
    w.write_record(["step", "node", "vmag"]).map_err(|e| csv_err(&p, e))?;
    for (s, row) in r.steps.iter().zip(&r.vmag) {
        for (name, v) in r.node_names.iter().zip(row) {
            w.write_record([s.to_string(), name.clone(), format!("{v:.8}")]).map_err(|e| csv_err(&p, e))?;
        }
    }
    w.flush().map_err(io_err(&p))?;

    let p = dir.join("taps.csv");
    let mut w = csv::Writer::from_path(&p).map_err(|e| csv_err(&p, e))?;
    let mut head = vec!["step".to_string()];
    head.extend(r.oltc_ids.iter().cloned());
    w.write_record(&head).map_err(|e| csv_err(&p, e))?;
    for (s, row) in r.steps.iter().zip(&r.taps) {
        let mut rec = vec![s.to_string()];
        rec.extend(row.iter().map(|t| t.to_string()));
        w.write_record(&rec).map_err(|e| csv_err(&p, e))?;
    }
    w.flush().map_err(io_err(&p))?;

    let p = dir.join("si_q.csv");
    let mut w = csv::Writer::from_path(&p).map_err(|e| csv_err(&p, e))?;
    let mut head = vec!["step".to_string()];
    head.extend(r.pv_ids.iter().cloned());
    w.write_record(&head).map_err(|e| csv_err(&p, e))?;
    for (s, row) in r.steps.iter().zip(&r.si_q_kvar) {
        let mut rec = vec![s.to_string()];
        rec.extend(row.iter().map(|q| format!("{q:.4}")));
        w.write_record(&rec).map_err(|e| csv_err(&p, e))?;
    }
    w.flush().map_err(io_err(&p))?;

    if !r.horizons.is_empty() {
        let p = dir.join("horizons.csv");
        let mut w = csv::Writer::from_path(&p).map_err(|e| csv_err(&p, e))?;
        w.write_record(["start", "status", "objective", "lp_bound", "gap", "nodes", "solve_s", "max_prediction_error"])
            .map_err(|e| csv_err(&p, e))?;
        for h in &r.horizons {
            w.write_record([
                h.start.to_string(),
                serde_json::to_value(h.status).map(|v| v.as_str().unwrap_or("").to_string()).unwrap_or_default(),
                format!("{:e}", h.objective),
                format!("{:e}", h.lp_bound),
                format!("{:e}", h.gap),
                h.nodes.to_string(),
                format!("{:.4}", h.solve_s),
                format!("{:e}", h.max_prediction_error),
            ])
            .map_err(|e| csv_err(&p, e))?;
        }
        w.flush().map_err(io_err(&p))?;

        let p = dir.join("solver_log.csv");
        let mut w = csv::Writer::from_path(&p).map_err(|e| csv_err(&p, e))?;
        w.write_record(["horizon", "node", "depth", "bound", "incumbent", "gap"]).map_err(|e| csv_err(&p, e))?;
        for (h, l) in &r.solver_log {
            w.write_record([
                h.to_string(),
                l.node.to_string(),
                l.depth.to_string(),
                format!("{:e}", l.bound),
                format!("{:e}", l.incumbent),
                format!("{:e}", l.gap),
            ])
            .map_err(|e| csv_err(&p, e))?;
        }
        w.flush().map_err(io_err(&p))?;
    }

    let p = dir.join("metrics.json");
    let text = serde_json::to_string_pretty(m).expect("metrics serialize");
    std::fs::write(&p, text + "\n").map_err(io_err(&p))?;

    let p = dir.join("summary.txt");
    let mut text = summary_text(m);
    for f in &r.failures {
        text.push_str(&format!("failure at step {}: {}\n", f.step, f.message));
    }
    std::fs::write(&p, text).map_err(io_err(&p))?;
    Ok(())
}

pub fn summary_text(m: &Metrics) -> String {
    format!(
        "method                     {}\n\
         steps                      {}\n\
         over-voltage node-minutes  {:.2}\n\
         under-voltage node-minutes {:.2}\n\
         violation minutes          {:.2}\n\
         max |V| (p.u.)             {:.5}\n\
         min |V| (p.u.)             {:.5}\n\
         max deviation (p.u.)       {:.5}\n\
         mean deviation (p.u.)      {:.5}\n\
         max unbalance (p.u.)       {:.5}\n\
         tap operations             {}\n\
         failed steps               {}\n\
         max power-flow mismatch    {:.2e}\n",
        m.method,
        m.steps,
        m.overvoltage_node_minutes,
        m.undervoltage_node_minutes,
        m.violation_minutes,
        m.max_vmag,
        m.min_vmag,
        m.max_deviation,
        m.mean_deviation,
        m.max_unbalance,
        m.tap_operations,
        m.failed_steps,
        m.max_mismatch,
    )
}

pub fn read_metrics(path: &Path) -> Result<Metrics, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Invalid(format!("{}: {e}", path.display())))
}

/// Side-by-side table of two metric sets.
pub fn compare(a: &Metrics, b: &Metrics) -> String {
    let rows: [(&str, f64, f64); 8] = [
        ("over-voltage node-minutes", a.overvoltage_node_minutes, b.overvoltage_node_minutes),
        ("violation minutes", a.violation_minutes, b.violation_minutes),
        ("max |V|", a.max_vmag, b.max_vmag),
        ("max deviation", a.max_deviation, b.max_deviation),
        ("mean deviation", a.mean_deviation, b.mean_deviation),
        ("max unbalance", a.max_unbalance, b.max_unbalance),
        ("tap operations", a.tap_operations as f64, b.tap_operations as f64),
        ("failed steps", a.failed_steps as f64, b.failed_steps as f64),
    ];
    let mut s = format!("{:<28}{:>14}{:>14}{:>14}\n", "metric", a.method, b.method, "difference");
    for (name, x, y) in rows {
        s.push_str(&format!("{name:<28}{x:>14.5}{y:>14.5}{:>14.5}\n", y - x));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forecast_is_reproducible_and_bounded() {
        let p = TimeSeriesProfile::new("x", 0.0, 30.0, vec![1.0, 2.0, 0.0, 4.0]).unwrap();
        let a = make_forecast(&p, 0.2, 9);
        let b = make_forecast(&p, 0.2, 9);
        assert_eq!(a, b);
        for (f, y) in a.values.iter().zip(&p.values) {
            assert!((f - y).abs() <= 0.2 * y + 1e-15);
        }
        assert_eq!(make_forecast(&p, 0.0, 3).values, p.values);
    }

    #[test]
    fn clipping_counts() {
        let (q, n) = clip_to_capability(&[5.0, -5.0, 1.0], &[4.0, 6.0, 0.5]);
        assert_eq!(q, vec![4.0, -5.0, 0.5]);
        assert_eq!(n, 2);
    }
}
