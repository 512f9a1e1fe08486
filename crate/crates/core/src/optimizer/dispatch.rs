//! Receding-horizon dispatch of OLTC taps and inverter reactive power as a
//! mixed-integer linear program over a linearized network.

use super::bnb::{branch_and_bound_from, MipOptions, MipStatus, NodeLog};
use super::lp::{LpBuilder, LpInstance};
use super::simplex::{BasisState, LpError};
use crate::linmodel::{InjectionResponse, LinError, SensitivityModel};
use crate::netmodel::FeederModel;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use std::time::Duration;

/// Objective weights: `w1` on voltage deviation, `w2` on tap operations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    pub w1: f64,
    pub w2: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self { w1: 1.0, w2: 0.15 }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DispatchError {
    #[error(transparent)]
    Lin(#[from] LinError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("step {0} carries no network linearization")]
    MissingLinearization(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OltcLimits {
    pub id: String,
    pub tau_prev: i32,
    pub tau_min: i32,
    pub tau_max: i32,
    /// Ratio change per tap step.
    pub kappa: f64,
    /// Tap moves allowed per horizon step.
    pub ramp: u32,
}

impl OltcLimits {
    pub fn ratio(&self, tau: f64) -> f64 {
        1.0 + self.kappa * tau
    }
}

/// Per-30-s tap limit scaled to a coarser step length, capped at 10.
pub fn ramp_limit(delta_to_max: u32, dt_s: f64) -> u32 {
    let k = (dt_s / 30.0).round().max(1.0) as u32;
    (delta_to_max.saturating_mul(k)).min(10)
}

/// Network linearization kept alongside the reduced coefficients.
#[derive(Debug, Clone)]
pub struct StepLinearization {
    pub sm: SensitivityModel<f64>,
    pub resp: InjectionResponse<f64>,
}

#[derive(Debug, Clone)]
pub struct StepData {
    /// Base magnitudes on the monitored nodes.
    pub vmag0: Vec<f64>,
    /// `[pv][node]`: magnitude change per p.u. of reactive injection.
    pub q_coeff: Vec<Vec<f64>>,
    /// `[oltc][node]`: magnitude change per unit of tap ratio.
    pub tap_coeff: Vec<Vec<f64>>,
    /// Ratio of each OLTC at the linearization point.
    pub a0: Vec<f64>,
    pub q_max_pu: Vec<f64>,
    /// Reactive output of each unit at the linearization point. The decision
    /// is the absolute output; the linear model sees `q - q0_pu`.
    pub q0_pu: Vec<f64>,
    pub linear: Option<Arc<StepLinearization>>,
}

#[derive(Debug, Clone)]
pub struct DispatchProblem {
    pub dt_s: f64,
    pub weights: Weights,
    pub s_base_kva: f64,
    pub oltcs: Vec<OltcLimits>,
    /// Feeder node index of every PV unit.
    pub pv_nodes: Vec<usize>,
    /// Feeder node index of every monitored node.
    pub monitored: Vec<usize>,
    pub steps: Vec<StepData>,
}

impl DispatchProblem {
    /// Builds the horizon from per-step linearizations. `q_max_kvar[t][k]` is
    /// the forecast reactive capability of PV unit `k`.
    pub fn from_linearizations(
        model: &FeederModel,
        sms: Vec<SensitivityModel<f64>>,
        q_max_kvar: &[Vec<f64>],
        q_base_kvar: &[Vec<f64>],
        tau_prev: &[i32],
        weights: Weights,
        dt_s: f64,
    ) -> Result<Self, DispatchError> {
        if sms.len() != q_max_kvar.len() || sms.len() != q_base_kvar.len() {
            return Err(DispatchError::Dimension("one capability vector per step required".into()));
        }
        if tau_prev.len() != model.oltcs.len() {
            return Err(DispatchError::Dimension("one previous tap per OLTC required".into()));
        }
        let monitored = model.non_slack_nodes();
        let pv_nodes: Vec<usize> = model.pv_units.iter().map(|u| u.node.index).collect();
        let oltcs = model
            .oltcs
            .iter()
            .zip(tau_prev)
            .map(|(d, &t)| OltcLimits {
                id: d.id.clone(),
                tau_prev: t,
                tau_min: d.tau_min,
                tau_max: d.tau_max,
                kappa: d.step_ratio(),
                ramp: ramp_limit(d.delta_to_max, dt_s),
            })
            .collect();
        let n = model.n_nodes();
        let no = model.oltcs.len();
        let mut steps = Vec::with_capacity(sms.len());
        for ((sm, qm), q0) in sms.into_iter().zip(q_max_kvar).zip(q_base_kvar) {
            if qm.len() != pv_nodes.len() || q0.len() != pv_nodes.len() {
                return Err(DispatchError::Dimension("capability vector length".into()));
            }
            let resp = sm.injection_response()?;
            let project = |dv: &[Complex64]| -> Vec<f64> {
                monitored
                    .iter()
                    .map(|&i| {
                        let (cd, cq) = sm.vmag_coeff[i];
                        cd * dv[i].re + cq * dv[i].im
                    })
                    .collect()
            };
            let zero_taps = vec![0.0; no];
            let mut by_node: Vec<(usize, Vec<f64>)> = Vec::new();
            let mut q_coeff = Vec::with_capacity(pv_nodes.len());
            for &k in &pv_nodes {
                if let Some((_, c)) = by_node.iter().find(|(node, _)| *node == k) {
                    q_coeff.push(c.clone());
                    continue;
                }
                let mut ds = vec![Complex64::new(0.0, 0.0); n];
                ds[k] = Complex64::new(0.0, 1.0);
                let c = project(&resp.solve(&zero_taps, &ds).dv);
                by_node.push((k, c.clone()));
                q_coeff.push(c);
            }
            let zero_s = vec![Complex64::new(0.0, 0.0); n];
            let tap_coeff = (0..no)
                .map(|p| {
                    let mut da = vec![0.0; no];
                    da[p] = 1.0;
                    project(&resp.solve(&da, &zero_s).dv)
                })
                .collect();
            steps.push(StepData {
                vmag0: monitored.iter().map(|&i| sm.vmag0[i]).collect(),
                q_coeff,
                tap_coeff,
                a0: sm.tap_sens.iter().map(|s| s.a0).collect(),
                q_max_pu: qm.iter().map(|q| model.kw_to_pu(*q)).collect(),
                q0_pu: q0.iter().map(|q| model.kw_to_pu(*q)).collect(),
                linear: Some(Arc::new(StepLinearization { sm, resp })),
            });
        }
        Ok(Self { dt_s, weights, s_base_kva: model.s_base_kva, oltcs, pv_nodes, monitored, steps })
    }

    /// Random coefficient-level instance without a network behind it.
    pub fn random(seed: u64, n_nodes: usize, n_pv: usize, n_oltc: usize, horizon: usize, tau_span: i32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let oltcs = (0..n_oltc)
            .map(|p| OltcLimits {
                id: format!("t{p}"),
                tau_prev: rng.gen_range(-tau_span.min(4)..=tau_span.min(4)),
                tau_min: -tau_span,
                tau_max: tau_span,
                kappa: 0.1 / 16.0,
                ramp: 1,
            })
            .collect();
        let pv_nodes: Vec<usize> = (0..n_pv).map(|_| rng.gen_range(0..n_nodes)).collect();
        let tap_base: Vec<Vec<f64>> =
            (0..n_oltc).map(|_| (0..n_nodes).map(|_| rng.gen_range(0.8..1.0)).collect()).collect();
        let steps = (0..horizon)
            .map(|_| StepData {
                vmag0: (0..n_nodes).map(|_| rng.gen_range(0.96..1.07)).collect(),
                q_coeff: (0..n_pv).map(|_| (0..n_nodes).map(|_| rng.gen_range(0.0..0.05)).collect()).collect(),
                tap_coeff: tap_base.clone(),
                a0: vec![1.0; n_oltc],
                q_max_pu: (0..n_pv).map(|_| rng.gen_range(0.0..0.3)).collect(),
                q0_pu: vec![0.0; n_pv],
                linear: None,
            })
            .collect();
        Self {
            dt_s: 30.0,
            weights: Weights::default(),
            s_base_kva: 1000.0,
            oltcs,
            pv_nodes,
            monitored: (0..n_nodes).collect(),
            steps,
        }
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn n_pv(&self) -> usize {
        self.pv_nodes.len()
    }

    /// Linearized magnitudes for a schedule; `taps[t][p]`, `q[t][k]` in p.u.
    pub fn predict(&self, taps: &[Vec<f64>], q: &[Vec<f64>]) -> Vec<Vec<f64>> {
        self.steps
            .iter()
            .enumerate()
            .map(|(t, s)| {
                let mut v = s.vmag0.clone();
                for (k, c) in s.q_coeff.iter().enumerate() {
                    for (vi, ci) in v.iter_mut().zip(c) {
                        *vi += ci * (q[t][k] - s.q0_pu[k]);
                    }
                }
                for (p, c) in s.tap_coeff.iter().enumerate() {
                    let da = self.oltcs[p].ratio(taps[t][p]) - s.a0[p];
                    for (vi, ci) in v.iter_mut().zip(c) {
                        *vi += ci * da;
                    }
                }
                v
            })
            .collect()
    }

    /// `(J1, J2)` of a schedule: summed deviation and summed tap movement,
    /// the latter counted from the previous taps.
    pub fn costs(&self, taps: &[Vec<f64>], q: &[Vec<f64>]) -> (f64, f64) {
        let j1 = self.predict(taps, q).iter().flatten().map(|v| (v - 1.0).abs()).sum();
        let mut j2 = 0.0;
        for (p, o) in self.oltcs.iter().enumerate() {
            let mut prev = o.tau_prev as f64;
            for row in taps {
                j2 += (row[p] - prev).abs();
                prev = row[p];
            }
        }
        (j1, j2)
    }
}

/// Variable positions of the reduced program.
#[derive(Debug, Clone)]
pub struct ReducedLayout {
    /// `[p][t]`
    pub tau: Vec<Vec<usize>>,
    /// `[t][k]`
    pub q: Vec<Vec<usize>>,
}

/// MILP over reactive setpoints, integer taps and absolute-value splits.
/// Magnitudes enter as affine functions of the controls, so the nodal
/// equations are eliminated.
pub fn reduced_instance(prob: &DispatchProblem) -> (LpInstance<f64>, ReducedLayout) {
    let h = prob.horizon();
    let mut b = LpBuilder::new();
    let tau: Vec<Vec<usize>> = prob
        .oltcs
        .iter()
        .map(|o| {
            (0..h)
                .map(|t| b.add_var(format!("tau_{}_{t}", o.id), o.tau_min as f64, o.tau_max as f64, 0.0, true))
                .collect()
        })
        .collect();
    let q: Vec<Vec<usize>> = prob
        .steps
        .iter()
        .enumerate()
        .map(|(t, s)| {
            s.q_max_pu.iter().enumerate().map(|(k, qm)| b.add_var(format!("q_{k}_{t}"), -qm, *qm, 0.0, false)).collect()
        })
        .collect();
    let w = prob.weights;
    for (p, o) in prob.oltcs.iter().enumerate() {
        let r = o.ramp as f64;
        for t in 0..h {
            let up = b.add_var(format!("mup_{}_{t}", o.id), 0.0, r, w.w2, false);
            let dn = b.add_var(format!("mdn_{}_{t}", o.id), 0.0, r, w.w2, false);
            let mut c = vec![(tau[p][t], 1.0), (up, -1.0), (dn, 1.0)];
            let rhs = if t == 0 {
                o.tau_prev as f64
            } else {
                c.push((tau[p][t - 1], -1.0));
                0.0
            };
            b.add_row(format!("move_{}_{t}", o.id), rhs, rhs, &c);
        }
    }
    for (t, s) in prob.steps.iter().enumerate() {
        for (a, &node) in prob.monitored.iter().enumerate() {
            let ep = b.add_var(format!("ep_{node}_{t}"), 0.0, f64::INFINITY, w.w1, false);
            let em = b.add_var(format!("em_{node}_{t}"), 0.0, f64::INFINITY, w.w1, false);
            let mut c = vec![(ep, -1.0), (em, 1.0)];
            let mut rhs = 1.0 - s.vmag0[a];
            for (k, qc) in s.q_coeff.iter().enumerate() {
                c.push((q[t][k], qc[a]));
                rhs += qc[a] * s.q0_pu[k];
            }
            for (p, hc) in s.tap_coeff.iter().enumerate() {
                let o = &prob.oltcs[p];
                c.push((tau[p][t], hc[a] * o.kappa));
                rhs -= hc[a] * (1.0 - s.a0[p]);
            }
            b.add_row(format!("vdev_{node}_{t}"), rhs, rhs, &c);
        }
    }
    (b.build(), ReducedLayout { tau, q })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DispatchStatus {
    Optimal,
    Budget,
    /// Previous taps held and no reactive support; the program failed.
    Fallback,
}

#[derive(Debug, Clone)]
pub struct DispatchSolution {
    /// `[t][p]`
    pub taps: Vec<Vec<i32>>,
    /// `[t][k]`, p.u.
    pub q_pu: Vec<Vec<f64>>,
    /// `[t][node]` over the monitored nodes.
    pub predicted_vmag: Vec<Vec<f64>>,
    pub objective: f64,
    pub j1: f64,
    pub j2: f64,
    pub status: DispatchStatus,
    pub gap: f64,
    pub lp_bound: f64,
    pub nodes: usize,
    pub log: Vec<NodeLog>,
    /// Root relaxation basis; a warm start for the next horizon.
    pub root_basis: Option<BasisState<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispatchOptions {
    pub mip: MipOptions,
}

impl Default for DispatchOptions {
    fn default() -> Self {
        Self { mip: MipOptions { time_budget: Some(Duration::from_secs(30)), ..Default::default() } }
    }
}

fn hold_schedule(prob: &DispatchProblem) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let taps = vec![prob.oltcs.iter().map(|o| o.tau_prev as f64).collect::<Vec<_>>(); prob.horizon()];
    let q = vec![vec![0.0; prob.n_pv()]; prob.horizon()];
    (taps, q)
}

fn package(
    prob: &DispatchProblem,
    taps: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    status: DispatchStatus,
    gap: f64,
    lp_bound: f64,
    nodes: usize,
    log: Vec<NodeLog>,
) -> DispatchSolution {
    let (j1, j2) = prob.costs(&taps, &q);
    DispatchSolution {
        predicted_vmag: prob.predict(&taps, &q),
        taps: taps.iter().map(|r| r.iter().map(|v| v.round() as i32).collect()).collect(),
        q_pu: q,
        objective: prob.weights.w1 * j1 + prob.weights.w2 * j2,
        j1,
        j2,
        status,
        gap,
        lp_bound,
        nodes,
        log,
        root_basis: None,
    }
}

/// Solves the horizon program. Never fails: when the program cannot be
/// solved the previous taps are held with zero reactive support.
pub fn solve_milp(prob: &DispatchProblem, opts: &DispatchOptions) -> DispatchSolution {
    solve_milp_from(prob, opts, None)
}

/// As [`solve_milp`], starting the root relaxation from `warm` (typically the
/// previous horizon's [`DispatchSolution::root_basis`]).
pub fn solve_milp_from(
    prob: &DispatchProblem,
    opts: &DispatchOptions,
    warm: Option<&BasisState<f64>>,
) -> DispatchSolution {
    let (lp, layout) = reduced_instance(prob);
    let h = prob.horizon();
    let mut fb = vec![0.0; lp.n_vars()];
    for (p, o) in prob.oltcs.iter().enumerate() {
        for t in 0..h {
            fb[layout.tau[p][t]] = o.tau_prev as f64;
        }
    }
    let key = |x: &[f64]| -> Vec<i64> {
        let mut moves = 0i64;
        let mut lex = Vec::with_capacity(h * prob.oltcs.len());
        for (p, o) in prob.oltcs.iter().enumerate() {
            let mut prev = o.tau_prev as i64;
            for t in 0..h {
                let v = x[layout.tau[p][t]].round() as i64;
                moves += (v - prev).abs();
                prev = v;
            }
        }
        for t in 0..h {
            for p in 0..prob.oltcs.len() {
                lex.push(x[layout.tau[p][t]].round() as i64);
            }
        }
        let mut k = vec![moves];
        k.extend(lex);
        k
    };
    match branch_and_bound_from(&lp, &opts.mip, Some(&fb), &key, warm) {
        Ok(r) => {
            let taps: Vec<Vec<f64>> =
                (0..h).map(|t| (0..prob.oltcs.len()).map(|p| r.x[layout.tau[p][t]].round()).collect()).collect();
            let q: Vec<Vec<f64>> = layout.q.iter().map(|row| row.iter().map(|&j| r.x[j]).collect()).collect();
            let status = match r.status {
                MipStatus::Optimal => DispatchStatus::Optimal,
                MipStatus::Budget => DispatchStatus::Budget,
                MipStatus::Fallback => DispatchStatus::Fallback,
            };
            let mut sol = package(prob, taps, q, status, r.gap, r.root_relaxation, r.nodes, r.log);
            sol.root_basis = r.root_basis;
            sol
        }
        Err(e) => {
            log::warn!("dispatch program failed ({e}); holding taps");
            let (taps, q) = hold_schedule(prob);
            package(prob, taps, q, DispatchStatus::Fallback, f64::INFINITY, f64::NAN, 0, Vec::new())
        }
    }
}

/// Commands for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Setpoint {
    pub taps: Vec<i32>,
    pub q_kvar: Vec<f64>,
    /// Units whose reconstructed setpoint was clipped to capability.
    pub clipped: Vec<usize>,
}

/// Turns the schedule into inverter setpoints. With a linearization at hand
/// the second-order reactive term `ΔV_q ΔI_d − ΔV_d ΔI_q` is added at each
/// PV node and shared among its units in proportion to capability.
pub fn extract_setpoints(prob: &DispatchProblem, sol: &DispatchSolution) -> Vec<Setpoint> {
    let no = prob.oltcs.len();
    prob.steps
        .iter()
        .enumerate()
        .map(|(t, s)| {
            let mut q = sol.q_pu[t].clone();
            if let Some(lin) = &s.linear {
                let n = lin.sm.n_nodes();
                let mut ds = vec![Complex64::new(0.0, 0.0); n];
                for (k, &node) in prob.pv_nodes.iter().enumerate() {
                    ds[node].im += q[k] - s.q0_pu[k];
                }
                let da: Vec<f64> =
                    (0..no).map(|p| prob.oltcs[p].ratio(sol.taps[t][p] as f64) - s.a0[p]).collect();
                let pert = lin.resp.solve(&da, &ds);
                let mut done: Vec<usize> = Vec::new();
                for &node in &prob.pv_nodes {
                    if done.contains(&node) {
                        continue;
                    }
                    done.push(node);
                    let (dv, di) = (pert.dv[node], pert.di[node]);
                    let q_err = dv.im * di.re - dv.re * di.im;
                    let units: Vec<usize> = (0..prob.n_pv()).filter(|&k| prob.pv_nodes[k] == node).collect();
                    let cap: f64 = units.iter().map(|&k| s.q_max_pu[k]).sum();
                    for &k in &units {
                        let share = if cap > 0.0 { s.q_max_pu[k] / cap } else { 1.0 / units.len() as f64 };
                        q[k] += q_err * share;
                    }
                }
            }
            let mut clipped = Vec::new();
            let q_kvar = q
                .iter()
                .enumerate()
                .map(|(k, v)| {
                    let m = s.q_max_pu[k];
                    let c = v.clamp(-m, m);
                    if (c - v).abs() > 1e-12 {
                        clipped.push(k);
                    }
                    c * prob.s_base_kva
                })
                .collect();
            if !clipped.is_empty() {
                log::debug!("step {t}: {} setpoints clipped to capability", clipped.len());
            }
            Setpoint { taps: sol.taps[t].clone(), q_kvar, clipped }
        })
        .collect()
}

/// Positions in the full program; see [`assemble`].
#[derive(Debug, Clone)]
pub struct FullLayout {
    /// Non-slack nodes, in feeder order.
    pub free: Vec<usize>,
    pub step_base: Vec<usize>,
    pub n_oltc: usize,
}

impl FullLayout {
    /// `c`: 0..4 for ΔV_d, ΔV_q, ΔI_d, ΔI_q.
    pub fn node_var(&self, t: usize, a: usize, c: usize) -> usize {
        self.step_base[t] + 4 * a + c
    }
    pub fn dev_var(&self, t: usize, a: usize) -> usize {
        self.step_base[t] + 4 * self.free.len() + a
    }
    /// `c`: 0 ratio, 1 tap, 2 movement.
    pub fn oltc_var(&self, t: usize, p: usize, c: usize) -> usize {
        self.step_base[t] + 5 * self.free.len() + 3 * p + c
    }
}

/// The program with linearized nodal equations kept explicit: voltage and
/// current perturbations per non-slack node, the linearized power balance,
/// absolute-deviation and tap-movement rows.
pub fn assemble(prob: &DispatchProblem) -> Result<(LpInstance<f64>, FullLayout), DispatchError> {
    let lins: Vec<&Arc<StepLinearization>> = prob
        .steps
        .iter()
        .enumerate()
        .map(|(t, s)| s.linear.as_ref().ok_or(DispatchError::MissingLinearization(t)))
        .collect::<Result<_, _>>()?;
    let Some(first) = lins.first() else {
        return Err(DispatchError::Dimension("empty horizon".into()));
    };
    let free = first.sm.network.free.clone();
    if prob.monitored != free {
        return Err(DispatchError::Dimension("monitored set must equal the non-slack nodes".into()));
    }
    let no = prob.oltcs.len();
    let w = prob.weights;
    let mut b = LpBuilder::new();
    let mut step_base = Vec::new();
    let mut q_cap = vec![0.0; first.sm.n_nodes()];
    let mut q_at0 = vec![0.0; first.sm.n_nodes()];
    for (t, (s, lin)) in prob.steps.iter().zip(&lins).enumerate() {
        step_base.push(b.n_vars());
        for &i in &free {
            b.add_var(format!("dvd_{i}_{t}"), -1.0, 1.0, 0.0, false);
            b.add_var(format!("dvq_{i}_{t}"), -1.0, 1.0, 0.0, false);
            b.add_var(format!("did_{i}_{t}"), -10.0, 10.0, 0.0, false);
            b.add_var(format!("diq_{i}_{t}"), -10.0, 10.0, 0.0, false);
        }
        for &i in &free {
            b.add_var(format!("d_{i}_{t}"), 0.0, 10.0, w.w1, false);
        }
        for o in &prob.oltcs {
            b.add_var(format!("a_{}_{t}", o.id), o.ratio(o.tau_min as f64), o.ratio(o.tau_max as f64), 0.0, false);
            b.add_var(format!("tau_{}_{t}", o.id), o.tau_min as f64, o.tau_max as f64, 0.0, true);
            b.add_var(format!("m_{}_{t}", o.id), 0.0, (o.tau_max - o.tau_min) as f64, w.w2, false);
        }
        let lay = FullLayout { free: free.clone(), step_base: step_base.clone(), n_oltc: no };
        let y = &lin.sm.network.ybus.y;
        let v0 = &lin.sm.v0;
        let i0 = &lin.sm.i0;
        q_cap.iter_mut().for_each(|c| *c = 0.0);
        q_at0.iter_mut().for_each(|c| *c = 0.0);
        for (k, &node) in prob.pv_nodes.iter().enumerate() {
            q_cap[node] += s.q_max_pu[k];
            q_at0[node] += s.q0_pu[k];
        }
        for (a, &i) in free.iter().enumerate() {
            let mut re = Vec::new();
            let mut im = Vec::new();
            for (bb, &j) in free.iter().enumerate() {
                let c = y[(i, j)];
                if c.re == 0.0 && c.im == 0.0 {
                    continue;
                }
                re.push((lay.node_var(t, bb, 0), c.re));
                re.push((lay.node_var(t, bb, 1), -c.im));
                im.push((lay.node_var(t, bb, 0), c.im));
                im.push((lay.node_var(t, bb, 1), c.re));
            }
            re.push((lay.node_var(t, a, 2), -1.0));
            im.push((lay.node_var(t, a, 3), -1.0));
            let (mut rhs_re, mut rhs_im) = (0.0, 0.0);
            for (p, ts) in lin.sm.tap_sens.iter().enumerate() {
                let g = ts.g_v0[i];
                re.push((lay.oltc_var(t, p, 0), g.re));
                im.push((lay.oltc_var(t, p, 0), g.im));
                rhs_re += g.re * ts.a0;
                rhs_im += g.im * ts.a0;
            }
            b.add_row(format!("kcl_re_{i}_{t}"), rhs_re, rhs_re, &re);
            b.add_row(format!("kcl_im_{i}_{t}"), rhs_im, rhs_im, &im);
            let (vd, vq, id, iq) = (v0[i].re, v0[i].im, i0[i].re, i0[i].im);
            let dvd = lay.node_var(t, a, 0);
            let dvq = lay.node_var(t, a, 1);
            let did = lay.node_var(t, a, 2);
            let diq = lay.node_var(t, a, 3);
            b.add_row(format!("dp_{i}_{t}"), 0.0, 0.0, &[(did, vd), (diq, vq), (dvd, id), (dvq, iq)]);
            let (qc, q0) = (q_cap[i], q_at0[i]);
            b.add_row(format!("dq_{i}_{t}"), -qc - q0, qc - q0, &[(did, vq), (diq, -vd), (dvq, id), (dvd, -iq)]);
            let (cd, cq) = lin.sm.vmag_coeff[i];
            let m0 = lin.sm.vmag0[i];
            let d = lay.dev_var(t, a);
            b.add_row(format!("dev_hi_{i}_{t}"), m0 - 1.0, f64::INFINITY, &[(d, 1.0), (dvd, -cd), (dvq, -cq)]);
            b.add_row(format!("dev_lo_{i}_{t}"), 1.0 - m0, f64::INFINITY, &[(d, 1.0), (dvd, cd), (dvq, cq)]);
        }
        for (p, o) in prob.oltcs.iter().enumerate() {
            let (av, tv, mv) = (lay.oltc_var(t, p, 0), lay.oltc_var(t, p, 1), lay.oltc_var(t, p, 2));
            b.add_row(format!("ratio_{}_{t}", o.id), 1.0, 1.0, &[(av, 1.0), (tv, -o.kappa)]);
            let r = o.ramp as f64;
            if t == 0 {
                let tp = o.tau_prev as f64;
                b.add_row(format!("mv_hi_{}_{t}", o.id), -tp, f64::INFINITY, &[(mv, 1.0), (tv, -1.0)]);
                b.add_row(format!("mv_lo_{}_{t}", o.id), tp, f64::INFINITY, &[(mv, 1.0), (tv, 1.0)]);
                b.add_row(format!("ramp_{}_{t}", o.id), tp - r, tp + r, &[(tv, 1.0)]);
            } else {
                let prev = lay.oltc_var(t - 1, p, 1);
                b.add_row(format!("mv_hi_{}_{t}", o.id), 0.0, f64::INFINITY, &[(mv, 1.0), (tv, -1.0), (prev, 1.0)]);
                b.add_row(format!("mv_lo_{}_{t}", o.id), 0.0, f64::INFINITY, &[(mv, 1.0), (tv, 1.0), (prev, -1.0)]);
                b.add_row(format!("ramp_{}_{t}", o.id), -r, r, &[(tv, 1.0), (prev, -1.0)]);
            }
        }
    }
    Ok((b.build(), FullLayout { free, step_base, n_oltc: no }))
}

/// Maps a schedule into the variables of [`assemble`].
pub fn full_solution(prob: &DispatchProblem, layout: &FullLayout, sol: &DispatchSolution) -> Result<Vec<f64>, DispatchError> {
    let nvar = layout.step_base.last().map_or(0, |b| b + 5 * layout.free.len() + 3 * layout.n_oltc);
    let mut x = vec![0.0; nvar];
    for (t, s) in prob.steps.iter().enumerate() {
        let lin = s.linear.as_ref().ok_or(DispatchError::MissingLinearization(t))?;
        let n = lin.sm.n_nodes();
        let mut ds = vec![Complex64::new(0.0, 0.0); n];
        for (k, &node) in prob.pv_nodes.iter().enumerate() {
            ds[node].im += sol.q_pu[t][k] - s.q0_pu[k];
        }
        let da: Vec<f64> = prob
            .oltcs
            .iter()
            .enumerate()
            .map(|(p, o)| o.ratio(sol.taps[t][p] as f64) - s.a0[p])
            .collect();
        let pert = lin.resp.solve(&da, &ds);
        let mags = lin.sm.magnitudes(&pert.dv);
        for (a, &i) in layout.free.iter().enumerate() {
            x[layout.node_var(t, a, 0)] = pert.dv[i].re;
            x[layout.node_var(t, a, 1)] = pert.dv[i].im;
            x[layout.node_var(t, a, 2)] = pert.di[i].re;
            x[layout.node_var(t, a, 3)] = pert.di[i].im;
            x[layout.dev_var(t, a)] = (mags[i] - 1.0).abs();
        }
        for (p, o) in prob.oltcs.iter().enumerate() {
            let tau = sol.taps[t][p];
            let prev = if t == 0 { o.tau_prev } else { sol.taps[t - 1][p] };
            x[layout.oltc_var(t, p, 0)] = o.ratio(tau as f64);
            x[layout.oltc_var(t, p, 1)] = tau as f64;
            x[layout.oltc_var(t, p, 2)] = (tau - prev).abs() as f64;
        }
    }
    Ok(x)
}
