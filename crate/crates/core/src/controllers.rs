//! Autonomous (Volt-Var + local OLTC) control and the optimal-command applier.

use crate::netmodel::FeederModel;
use crate::powerflow::{InjectionSpec, OperatingPoint, PfError, PowerFlow, TapRatioSet};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Piecewise-linear Volt-Var characteristic: `(v p.u., q fraction of Q_max)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VoltVarCurve {
    pub breakpoints: Vec<(f64, f64)>,
}

impl Default for VoltVarCurve {
    fn default() -> Self {
        Self { breakpoints: vec![(0.92, 1.0), (0.98, 0.0), (1.02, 0.0), (1.08, -1.0)] }
    }
}

impl VoltVarCurve {
    pub fn new(breakpoints: Vec<(f64, f64)>) -> Result<Self, String> {
        let c = Self { breakpoints };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), String> {
        let b = &self.breakpoints;
        if b.is_empty() {
            return Err("volt-var curve needs at least one breakpoint".into());
        }
        for (v, q) in b {
            if !v.is_finite() || !(-1.0..=1.0).contains(q) {
                return Err(format!("volt-var breakpoint ({v}, {q}) out of range"));
            }
        }
        for w in b.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err("volt-var voltages must be strictly increasing".into());
            }
            if w[1].1 > w[0].1 {
                return Err("volt-var output must be non-increasing in voltage".into());
            }
        }
        Ok(())
    }

    /// Output fraction at `v`, saturating beyond the end breakpoints.
    pub fn fraction(&self, v: f64) -> f64 {
        let b = &self.breakpoints;
        if v <= b[0].0 {
            return b[0].1;
        }
        for w in b.windows(2) {
            let ((v0, q0), (v1, q1)) = (w[0], w[1]);
            if v <= v1 {
                return q0 + (q1 - q0) * (v - v0) / (v1 - v0);
            }
        }
        b[b.len() - 1].1
    }
}

/// Reactive output in kvar for a PCC voltage and available `q_max`.
pub fn volt_var_q(curve: &VoltVarCurve, v_pcc: f64, q_max: f64) -> f64 {
    let q_max = q_max.max(0.0);
    (curve.fraction(v_pcc) * q_max).clamp(-q_max, q_max)
}

/// Local OLTC controller settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AvrOltcSettings {
    pub v_ref: f64,
    pub bandwidth: f64,
    #[serde(default)]
    pub time_delay_s: f64,
    /// Fixed-point tolerance of the Volt-Var iteration, kvar.
    #[serde(default = "default_q_tol")]
    pub q_tolerance_kvar: f64,
    #[serde(default = "default_inner")]
    pub max_inner_iterations: usize,
}

fn default_q_tol() -> f64 {
    0.1
}
fn default_inner() -> usize {
    20
}

impl Default for AvrOltcSettings {
    fn default() -> Self {
        Self { v_ref: 1.03, bandwidth: 0.0167, time_delay_s: 0.0, q_tolerance_kvar: 0.1, max_inner_iterations: 20 }
    }
}

impl AvrOltcSettings {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.bandwidth > 0.0) {
            return Err("AVR bandwidth must be positive".into());
        }
        if !(self.v_ref > 0.0) || self.time_delay_s < 0.0 {
            return Err("AVR v_ref must be positive and time delay non-negative".into());
        }
        Ok(())
    }
}

/// Uncontrollable inputs of one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInputs {
    /// Multiplier per load (indexed like `model.loads`).
    pub load_mult: Vec<f64>,
    /// Real output per PV unit, kW, already limited to the SI rating.
    pub pv_kw: Vec<f64>,
}

impl StepInputs {
    pub fn q_max_kvar(&self, model: &FeederModel) -> Vec<f64> {
        model.pv_units.iter().zip(&self.pv_kw).map(|(u, p)| u.q_available_kvar(*p)).collect()
    }
}

/// Controller state carried between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct AvrState {
    pub taps: Vec<i32>,
    pub q_kvar: Vec<f64>,
    /// Seconds each OLTC has been out of band.
    pub out_of_band_s: Vec<f64>,
    pub v: Option<Vec<Complex64>>,
}

impl AvrState {
    pub fn new(model: &FeederModel, taps: Vec<i32>) -> Self {
        Self {
            out_of_band_s: vec![0.0; taps.len()],
            taps,
            q_kvar: vec![0.0; model.pv_units.len()],
            v: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AvrOutcome {
    pub op: OperatingPoint<f64>,
    pub q_kvar: Vec<f64>,
    pub taps: Vec<i32>,
    pub tap_ops: u32,
    pub inner_converged: bool,
    /// A (tap, q) state repeated and the controller froze.
    pub frozen: bool,
}

/// Phase-average voltage magnitude at each OLTC's secondary bus.
pub fn monitored_voltages(model: &FeederModel, op: &OperatingPoint<f64>) -> Vec<f64> {
    model
        .oltcs
        .iter()
        .map(|d| d.secondary_nodes.iter().map(|&k| op.v[k].norm()).sum::<f64>() / d.secondary_nodes.len() as f64)
        .collect()
}

fn settle_inverters(
    pf: &mut PowerFlow<'_, f64>,
    settings: &AvrOltcSettings,
    curve: &VoltVarCurve,
    taps: &TapRatioSet,
    inputs: &StepInputs,
    q_start: &[f64],
    v_init: Option<&[Complex64]>,
) -> Result<(OperatingPoint<f64>, Vec<f64>, bool), PfError> {
    let model = pf.model();
    let q_max = inputs.q_max_kvar(model);
    let mut q = q_start.to_vec();
    let mut v_warm = v_init.map(|v| v.to_vec());
    let mut damping = 1.0;
    let mut last_gap = f64::INFINITY;
    for _ in 0..settings.max_inner_iterations.max(1) {
        let inj = InjectionSpec::from_devices(model, &inputs.load_mult, &inputs.pv_kw, &q);
        let op = pf.solve(taps, &inj, v_warm.as_deref())?;
        let target: Vec<f64> = model
            .pv_units
            .iter()
            .zip(&q_max)
            .map(|(u, qm)| volt_var_q(curve, op.v[u.node.index].norm(), *qm))
            .collect();
        let gap = q.iter().zip(&target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if gap <= settings.q_tolerance_kvar {
            return Ok((op, q, true));
        }
        if gap >= last_gap {
            damping = (damping * 0.5f64).max(0.05);
        }
        last_gap = gap;
        for (qi, t) in q.iter_mut().zip(&target) {
            *qi += damping * (t - *qi);
        }
        v_warm = Some(op.v);
    }
    let inj = InjectionSpec::from_devices(model, &inputs.load_mult, &inputs.pv_kw, &q);
    let op = pf.solve(taps, &inj, v_warm.as_deref())?;
    log::debug!("volt-var iteration did not settle within {} iterations", settings.max_inner_iterations);
    Ok((op, q, false))
}

/// One step of autonomous control: inverters settle on their Volt-Var
/// curves, then each OLTC moves one step toward `v_ref` while its monitored
/// voltage is outside the band, up to its per-step limit.
pub fn avr_step(
    pf: &mut PowerFlow<'_, f64>,
    settings: &AvrOltcSettings,
    curve: &VoltVarCurve,
    state: &mut AvrState,
    inputs: &StepInputs,
    dt_s: f64,
    max_moves: Option<u32>,
) -> Result<AvrOutcome, PfError> {
    let model = pf.model();
    let mut taps = state.taps.clone();
    let mut ops = 0u32;
    let mut moves = vec![0u32; taps.len()];
    let mut seen: Vec<(Vec<i32>, Vec<i64>)> = Vec::new();
    let mut frozen = false;
    let mut q_start = state.q_kvar.clone();
    let mut v_init = state.v.clone();
    loop {
        let ratios = TapRatioSet::from_positions(model, &taps)?;
        let (op, q, conv) = settle_inverters(pf, settings, curve, &ratios, inputs, &q_start, v_init.as_deref())?;
        let key = (taps.clone(), q.iter().map(|x| (x * 10.0).round() as i64).collect::<Vec<_>>());
        if seen.contains(&key) {
            frozen = true;
            log::warn!("OLTC/inverter state repeated at taps {taps:?}; freezing");
        }
        seen.push(key);
        let vm = monitored_voltages(model, &op);
        let mut moved = false;
        if !frozen {
            for (p, dev) in model.oltcs.iter().enumerate() {
                let err = vm[p] - settings.v_ref;
                if err.abs() <= settings.bandwidth / 2.0 {
                    state.out_of_band_s[p] = 0.0;
                    continue;
                }
                if moves[p] == 0 {
                    state.out_of_band_s[p] += dt_s;
                }
                if state.out_of_band_s[p] < settings.time_delay_s {
                    continue;
                }
                let limit = max_moves.unwrap_or(dev.delta_to_max);
                if moves[p] >= limit {
                    continue;
                }
                let next = dev.clamp_tap(taps[p] + if err > 0.0 { -1 } else { 1 });
                if next != taps[p] {
                    taps[p] = next;
                    moves[p] += 1;
                    ops += 1;
                    moved = true;
                }
            }
        }
        if !moved {
            for (p, m) in moves.iter().enumerate() {
                if *m > 0 {
                    state.out_of_band_s[p] = 0.0;
                }
            }
            state.taps = taps.clone();
            state.q_kvar = q.clone();
            state.v = Some(op.v.clone());
            return Ok(AvrOutcome { op, q_kvar: q, taps, tap_ops: ops, inner_converged: conv, frozen });
        }
        q_start = q;
        v_init = Some(op.v);
    }
}

/// Applies commanded taps and SI reactive outputs and solves the resulting
/// power flow.
pub fn ovr_step(
    pf: &mut PowerFlow<'_, f64>,
    taps: &[i32],
    q_kvar: &[f64],
    inputs: &StepInputs,
    v_init: Option<&[Complex64]>,
) -> Result<OperatingPoint<f64>, PfError> {
    let model = pf.model();
    let ratios = TapRatioSet::from_positions(model, taps)?;
    let inj = InjectionSpec::from_devices(model, &inputs.load_mult, &inputs.pv_kw, q_kvar);
    pf.solve(&ratios, &inj, v_init)
}
