//! Affine sensitivity model around a power-flow operating point.
//!
//! Voltage perturbations are expressed as
//! `ΔV = Σ_p (a_p - a_p0) w_p + Z0 ΔI`, where `w_p = -Y0⁻¹ G_p V0` captures a
//! tap-ratio change of OLTC `p` through the linearized admittance change
//! `ΔY = (a - a0) G_p` (`G_ii = 2 a0 / z_T`, `G_ij = G_ji = -1 / z_T`).
//! Voltage magnitudes are linearized as
//! `|V| = |V0| + (V_d0 ΔV_d + V_q0 ΔV_q) / |V0|`.

use crate::linalg::{DenseMatrix, LuFactor};
use crate::netmodel::FeederModel;
use crate::powerflow::{
    voltage_magnitudes, FactorizedNetwork, InjectionSpec, OperatingPoint, PfError, PowerFlow, TapRatioSet,
};
use crate::scalar::{cast_complex, Real};
use num_complex::{Complex, Complex64};
use num_traits::Zero;
use serde::Serialize;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

/// Threshold below which the magnitude linearization is undefined.
pub const DEGENERATE_VOLTAGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinError {
    #[error("operating point has |V| = {magnitude:e} p.u. at node {node}; magnitude linearization is undefined")]
    DegenerateVoltage { node: String, magnitude: f64 },
    #[error("operating point is not converged")]
    NotConverged,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("linearized injection system is singular")]
    Singular,
    #[error(transparent)]
    PowerFlow(#[from] PfError),
}

/// Voltage response of the feeder to a unit tap-ratio change of one OLTC.
#[derive(Debug, Clone)]
pub struct TapSensitivity<T: Real> {
    /// Complex per-node sensitivity, zero on slack nodes.
    pub w: Vec<Complex<T>>,
    pub a0: f64,
    /// `G_p V0`: linearized admittance change per unit ratio, applied to V0.
    pub g_v0: Vec<Complex<T>>,
}

/// Rectangular components of the operating point, per node.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionLinearization<T: Real> {
    pub v_d0: Vec<T>,
    pub v_q0: Vec<T>,
    pub i_d0: Vec<T>,
    pub i_q0: Vec<T>,
}

impl<T: Real> InjectionLinearization<T> {
    pub fn from_operating_point(op: &OperatingPoint<T>) -> Self {
        Self {
            v_d0: op.v.iter().map(|v| v.re).collect(),
            v_q0: op.v.iter().map(|v| v.im).collect(),
            i_d0: op.i.iter().map(|i| i.re).collect(),
            i_q0: op.i.iter().map(|i| i.im).collect(),
        }
    }
}

/// First-order real and reactive power change per node, with the bilinear
/// `ΔV·ΔI` terms dropped:
///
/// `ΔP = V_d0 ΔI_d + ΔV_d I_d0 + V_q0 ΔI_q + ΔV_q I_q0`
/// `ΔQ = V_q0 ΔI_d + ΔV_q I_d0 - V_d0 ΔI_q - ΔV_d I_q0`
pub fn delta_pq<T: Real>(lin: &InjectionLinearization<T>, dv: &[Complex<T>], di: &[Complex<T>]) -> (Vec<T>, Vec<T>) {
    let n = lin.v_d0.len();
    let mut dp = Vec::with_capacity(n);
    let mut dq = Vec::with_capacity(n);
    for k in 0..n {
        let (vd, vq, id, iq) = (lin.v_d0[k], lin.v_q0[k], lin.i_d0[k], lin.i_q0[k]);
        let (dvd, dvq, did, diq) = (dv[k].re, dv[k].im, di[k].re, di[k].im);
        dp.push(vd * did + dvd * id + vq * diq + dvq * iq);
        dq.push(vq * did + dvq * id - vd * diq - dvd * iq);
    }
    (dp, dq)
}

/// Linear map from tap ratios and injection-current perturbations to node
/// voltages, built at one operating point.
#[derive(Debug, Clone)]
pub struct SensitivityModel<T: Real> {
    /// Factorized `Y0`; applying `Z0` is a solve against it.
    pub network: Arc<FactorizedNetwork<T>>,
    pub v0: Vec<Complex<T>>,
    pub i0: Vec<Complex<T>>,
    pub vmag0: Vec<T>,
    pub tap_sens: Vec<TapSensitivity<T>>,
    /// `(V_d0 / |V0|, V_q0 / |V0|)` per node.
    pub vmag_coeff: Vec<(T, T)>,
}

pub fn build_sensitivity<T: Real>(model: &FeederModel, op: &OperatingPoint<T>) -> Result<SensitivityModel<T>, LinError> {
    let net = Arc::new(FactorizedNetwork::new(model, &op.taps)?);
    build_sensitivity_with(model, net, op)
}

/// Same as [`build_sensitivity`] but reuses an existing factorization of the
/// admittance matrix at the operating point's tap ratios.
pub fn build_sensitivity_with<T: Real>(
    model: &FeederModel,
    network: Arc<FactorizedNetwork<T>>,
    op: &OperatingPoint<T>,
) -> Result<SensitivityModel<T>, LinError> {
    if !op.converged {
        return Err(LinError::NotConverged);
    }
    let n = model.n_nodes();
    if op.v.len() != n || op.i.len() != n {
        return Err(LinError::Dimension(format!("operating point has {} nodes, feeder {n}", op.v.len())));
    }
    if network.ybus.ratios != op.taps.ratios {
        return Err(LinError::Dimension("factorization and operating point use different tap ratios".into()));
    }
    let vmag0 = voltage_magnitudes(op);
    let thr = T::lit(DEGENERATE_VOLTAGE);
    let mut vmag_coeff = Vec::with_capacity(n);
    for (k, (v, m)) in op.v.iter().zip(&vmag0).enumerate() {
        if *m < thr {
            return Err(LinError::DegenerateVoltage { node: model.nodes[k].to_string(), magnitude: m.as_f64() });
        }
        vmag_coeff.push((v.re / *m, v.im / *m));
    }
    let mut tap_sens = Vec::with_capacity(model.oltcs.len());
    for (dev, &a0) in model.oltcs.iter().zip(&op.taps.ratios) {
        let yt: Complex<T> = cast_complex(1.0 / dev.z_t);
        let two_a0 = T::lit(2.0 * a0);
        let mut g_v0 = vec![Complex::zero(); n];
        for (&i, &j) in dev.primary_nodes.iter().zip(&dev.secondary_nodes) {
            g_v0[i] += yt * op.v[i] * two_a0 - yt * op.v[j];
            g_v0[j] -= yt * op.v[i];
        }
        let rhs: Vec<Complex<T>> = network.free.iter().map(|&k| g_v0[k]).collect();
        let x = network.lu_nn.solve(&rhs);
        let mut w = vec![Complex::zero(); n];
        for (a, &k) in network.free.iter().enumerate() {
            w[k] = -x[a];
        }
        tap_sens.push(TapSensitivity { w, a0, g_v0 });
    }
    Ok(SensitivityModel { network, v0: op.v.clone(), i0: op.i.clone(), vmag0, tap_sens, vmag_coeff })
}

impl<T: Real> SensitivityModel<T> {
    pub fn n_nodes(&self) -> usize {
        self.v0.len()
    }

    /// `Z0 ΔI` with slack voltages held fixed.
    pub fn apply_z0(&self, di: &[Complex<T>]) -> Vec<Complex<T>> {
        let rhs: Vec<Complex<T>> = self.network.free.iter().map(|&k| di[k]).collect();
        let x = self.network.lu_nn.solve(&rhs);
        let mut out = vec![Complex::zero(); self.n_nodes()];
        for (a, &k) in self.network.free.iter().enumerate() {
            out[k] = x[a];
        }
        out
    }

    /// Linearized magnitudes `|V0| + (V_d0 ΔV_d + V_q0 ΔV_q)/|V0|`.
    pub fn magnitudes(&self, dv: &[Complex<T>]) -> Vec<T> {
        self.vmag0
            .iter()
            .zip(&self.vmag_coeff)
            .zip(dv)
            .map(|((m, (cd, cq)), d)| *m + *cd * d.re + *cq * d.im)
            .collect()
    }

    pub fn tap_deltas(&self, taps: &TapRatioSet) -> Vec<T> {
        self.tap_sens.iter().zip(&taps.ratios).map(|(s, a)| T::lit(a - s.a0)).collect()
    }

    /// Rectangular components of the linearization point.
    pub fn injection_linearization(&self) -> InjectionLinearization<T> {
        InjectionLinearization {
            v_d0: self.v0.iter().map(|v| v.re).collect(),
            v_q0: self.v0.iter().map(|v| v.im).collect(),
            i_d0: self.i0.iter().map(|i| i.re).collect(),
            i_q0: self.i0.iter().map(|i| i.im).collect(),
        }
    }

    /// Factorizes the linear system that ties voltage perturbations to
    /// prescribed first-order power-injection changes at every non-slack node.
    pub fn injection_response(&self) -> Result<InjectionResponse<T>, LinError> {
        InjectionResponse::new(self)
    }
}

/// Voltage perturbation and the resulting voltages.
pub fn predict_voltage<T: Real>(
    sm: &SensitivityModel<T>,
    taps: &TapRatioSet,
    di: &[Complex<T>],
) -> Result<(Vec<Complex<T>>, Vec<T>), LinError> {
    let n = sm.n_nodes();
    if di.len() != n {
        return Err(LinError::Dimension(format!("ΔI has {} entries, expected {n}", di.len())));
    }
    if taps.ratios.len() != sm.tap_sens.len() {
        return Err(LinError::Dimension("tap count".into()));
    }
    let mut dv = sm.apply_z0(di);
    for (s, da) in sm.tap_sens.iter().zip(sm.tap_deltas(taps)) {
        if da.is_zero() {
            continue;
        }
        for (d, w) in dv.iter_mut().zip(&s.w) {
            *d += *w * da;
        }
    }
    let mag = sm.magnitudes(&dv);
    Ok((dv, mag))
}

/// Perturbation of voltages and injection currents.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation<T: Real> {
    pub dv: Vec<Complex<T>>,
    pub di: Vec<Complex<T>>,
}

/// Solves the linearized nodal equations together with
/// `V0 conj(ΔI) + ΔV conj(I0) = ΔS` on every non-slack node.
#[derive(Debug, Clone)]
pub struct InjectionResponse<T: Real> {
    lu: LuFactor<T>,
    free: Vec<usize>,
    v0: Vec<Complex<T>>,
    y: Arc<FactorizedNetwork<T>>,
    g_v0: Vec<Vec<Complex<T>>>,
    a0: Vec<f64>,
}

impl<T: Real> InjectionResponse<T> {
    fn new(sm: &SensitivityModel<T>) -> Result<Self, LinError> {
        let net = &sm.network;
        let free = net.free.clone();
        let nf = free.len();
        let mut m = DenseMatrix::<T>::zeros(2 * nf, 2 * nf);
        for (a, &i) in free.iter().enumerate() {
            let v0 = sm.v0[i];
            for (b, &j) in free.iter().enumerate() {
                let c = net.ybus.y[(i, j)];
                if c.is_zero() {
                    continue;
                }
                // V0 conj(c x) = α conj(x), α = V0 conj(c)
                let al = v0 * c.conj();
                m[(2 * a, 2 * b)] += al.re;
                m[(2 * a, 2 * b + 1)] += al.im;
                m[(2 * a + 1, 2 * b)] += al.im;
                m[(2 * a + 1, 2 * b + 1)] -= al.re;
            }
            // ΔV conj(I0)
            let be = sm.i0[i].conj();
            m[(2 * a, 2 * a)] += be.re;
            m[(2 * a, 2 * a + 1)] -= be.im;
            m[(2 * a + 1, 2 * a)] += be.im;
            m[(2 * a + 1, 2 * a + 1)] += be.re;
        }
        let lu = LuFactor::new(m).map_err(|_| LinError::Singular)?;
        Ok(Self {
            lu,
            free,
            v0: sm.v0.clone(),
            y: sm.network.clone(),
            g_v0: sm.tap_sens.iter().map(|s| s.g_v0.clone()).collect(),
            a0: sm.tap_sens.iter().map(|s| s.a0).collect(),
        })
    }

    /// Response to tap-ratio deltas `a - a0` and first-order injection
    /// changes `ΔS` (p.u., generation positive; slack entries ignored).
    pub fn solve(&self, tap_deltas: &[T], ds: &[Complex<T>]) -> Perturbation<T> {
        let n = self.v0.len();
        let mut rhs = vec![T::zero(); 2 * self.free.len()];
        for (a, &i) in self.free.iter().enumerate() {
            let mut r = ds[i];
            for (g, &da) in self.g_v0.iter().zip(tap_deltas) {
                if !da.is_zero() {
                    r -= self.v0[i] * (g[i] * da).conj();
                }
            }
            rhs[2 * a] = r.re;
            rhs[2 * a + 1] = r.im;
        }
        let x = self.lu.solve(&rhs);
        let mut dv = vec![Complex::zero(); n];
        for (a, &i) in self.free.iter().enumerate() {
            dv[i] = Complex::new(x[2 * a], x[2 * a + 1]);
        }
        let mut di = self.y.currents(&dv);
        for (g, &da) in self.g_v0.iter().zip(tap_deltas) {
            if !da.is_zero() {
                for (d, gk) in di.iter_mut().zip(g) {
                    *d += *gk * da;
                }
            }
        }
        Perturbation { dv, di }
    }

    pub fn linearization_ratios(&self) -> &[f64] {
        &self.a0
    }
}

/// A perturbation scenario around an operating point: new tap ratios plus a
/// change of complex power injection per node (p.u., generation positive).
#[derive(Debug, Clone, PartialEq)]
pub struct LinCase {
    pub taps: TapRatioSet,
    pub delta_s: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseError {
    pub case_id: usize,
    /// Predicted minus re-solved magnitude, per node (zero on slack nodes).
    pub errors: Vec<f64>,
    pub max_abs: f64,
    pub mean_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorSummary {
    pub cases: usize,
    pub max_abs: f64,
    pub mean_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearizationReport {
    pub cases: Vec<CaseError>,
}

impl LinearizationReport {
    pub fn summary(&self) -> ErrorSummary {
        let max_abs = self.cases.iter().map(|c| c.max_abs).fold(0.0, f64::max);
        let mean_abs = if self.cases.is_empty() {
            0.0
        } else {
            self.cases.iter().map(|c| c.mean_abs).sum::<f64>() / self.cases.len() as f64
        };
        ErrorSummary { cases: self.cases.len(), max_abs, mean_abs }
    }

    /// Writes `case_id,node,E` rows.
    pub fn write_csv(&self, model: &FeederModel, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "case_id,node,E")?;
        for c in &self.cases {
            for (k, e) in c.errors.iter().enumerate() {
                if model.is_slack(k) {
                    continue;
                }
                writeln!(out, "{},{},{:e}", c.case_id, model.nodes[k], e)?;
            }
        }
        out.flush()
    }

    pub fn write_summary_json(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(&self.summary()).expect("summary serializes");
        std::fs::write(path, text)
    }
}

impl CaseError {
    pub fn from_errors(case_id: usize, model: &FeederModel, errors: Vec<f64>) -> Self {
        let free = model.non_slack_nodes();
        let max_abs = free.iter().map(|&k| errors[k].abs()).fold(0.0, f64::max);
        let mean_abs = if free.is_empty() {
            0.0
        } else {
            free.iter().map(|&k| errors[k].abs()).sum::<f64>() / free.len() as f64
        };
        Self { case_id, errors, max_abs, mean_abs }
    }
}

/// Compares the linear prediction of each case against a full nonlinear
/// re-solve. Base injections are recovered from the operating point as
/// `S0 = V0 conj(I0)`.
pub fn linearization_error_report(
    model: &FeederModel,
    op: &OperatingPoint<f64>,
    cases: &[LinCase],
) -> Result<LinearizationReport, LinError> {
    if cases.is_empty() {
        return Ok(LinearizationReport { cases: Vec::new() });
    }
    let sm = build_sensitivity(model, op)?;
    let resp = sm.injection_response()?;
    let s0: Vec<Complex64> = op.v.iter().zip(&op.i).map(|(v, i)| v * i.conj()).collect();
    let mut pf = PowerFlow::<f64>::new(model);
    let mut out = Vec::with_capacity(cases.len());
    for (id, case) in cases.iter().enumerate() {
        if case.delta_s.len() != model.n_nodes() {
            return Err(LinError::Dimension(format!("case {id}: ΔS length")));
        }
        let p = resp.solve(&sm.tap_deltas(&case.taps), &case.delta_s);
        let predicted = sm.magnitudes(&p.dv);
        let inj = InjectionSpec { s: s0.iter().zip(&case.delta_s).map(|(a, b)| a + b).collect() };
        let real = pf.solve(&case.taps, &inj, Some(&op.v))?;
        let actual = voltage_magnitudes(&real);
        let errors: Vec<f64> = predicted
            .iter()
            .zip(&actual)
            .enumerate()
            .map(|(k, (p, a))| if model.is_slack(k) { 0.0 } else { p - a })
            .collect();
        out.push(CaseError::from_errors(id, model, errors));
    }
    Ok(LinearizationReport { cases: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::powerflow::solve_powerflow;

    fn single_node_sm(v0: Complex64) -> SensitivityModel<f64> {
        let json = r#"{
          "bases": {"s_base_kva": 1000.0},
          "source": {"bus": "s", "v_pu": [1.0], "angle_deg": [0.0]},
          "buses": [{"id": "s", "phases": ["A"], "v_base_kv": 1.0}, {"id": "l", "phases": ["A"], "v_base_kv": 1.0}],
          "branches": [{"id": "ln", "from": "s", "to": "l", "phases": ["A"], "z_ohm": [[[0.01, 0.02]]]}]
        }"#;
        let model = FeederModel::from_json(json).unwrap();
        let op = solve_powerflow::<f64>(&model, &TapRatioSet::neutral(&model), &InjectionSpec::zeros(2), None).unwrap();
        let mut sm = build_sensitivity(&model, &op).unwrap();
        sm.v0[1] = v0;
        sm.vmag0[1] = v0.norm();
        sm.vmag_coeff[1] = (v0.re / v0.norm(), v0.im / v0.norm());
        sm
    }

    #[test]
    fn axis_aligned_magnitude() {
        let sm = single_node_sm(Complex64::new(1.0, 0.0));
        let m = sm.magnitudes(&[Complex64::zero(), Complex64::new(0.01, 0.0)]);
        assert!((m[1] - 1.01).abs() < 1e-15);
    }

    #[test]
    fn delta_pq_examples() {
        let lin = InjectionLinearization { v_d0: vec![1.0], v_q0: vec![0.0], i_d0: vec![0.0], i_q0: vec![0.0] };
        let (p, q) = delta_pq(&lin, &[Complex64::zero()], &[Complex64::zero()]);
        assert_eq!((p[0], q[0]), (0.0, 0.0));
        let (p, q) = delta_pq(&lin, &[Complex64::new(0.3, -0.7)], &[Complex64::new(0.1, 0.0)]);
        assert!((p[0] - 0.1).abs() < 1e-15 && q[0].abs() < 1e-15);
    }

    #[test]
    fn empty_report() {
        let json = r#"{
          "bases": {"s_base_kva": 1000.0},
          "source": {"bus": "s", "v_pu": [1.0], "angle_deg": [0.0]},
          "buses": [{"id": "s", "phases": ["A"], "v_base_kv": 1.0}, {"id": "l", "phases": ["A"], "v_base_kv": 1.0}],
          "branches": [{"id": "ln", "from": "s", "to": "l", "phases": ["A"], "z_ohm": [[[0.01, 0.02]]]}]
        }"#;
        let model = FeederModel::from_json(json).unwrap();
        let op = solve_powerflow::<f64>(&model, &TapRatioSet::neutral(&model), &InjectionSpec::zeros(2), None).unwrap();
        let r = linearization_error_report(&model, &op, &[]).unwrap();
        assert!(r.cases.is_empty());
        assert_eq!(r.summary().max_abs, 0.0);
    }
}
