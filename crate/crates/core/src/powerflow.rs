//! Unbalanced multi-phase power flow.
//!
//! The feeder is solved with a fixed-point current-injection iteration on the
//! factorized non-slack block of the admittance matrix:
//! `Y_nn V_n = conj(S_n / V_n) - Y_ns V_s`, starting from the no-load profile.

use crate::linalg::{DenseMatrix, LuFactor};
use crate::netmodel::FeederModel;
use crate::scalar::{cast_complex, Real};
use num_complex::{Complex, Complex64};
use num_traits::Zero;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

/// Tap position and resulting ratio per OLTC, `a = 1 + (tau/tau_max)(a_max - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TapRatioSet {
    pub positions: Vec<f64>,
    pub ratios: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PfError {
    #[error("tap set has {got} entries, feeder has {expected} OLTCs")]
    TapCount { expected: usize, got: usize },
    #[error("tap position {tau} of `{device}` is outside [{min}, {max}]")]
    TapRange { device: String, tau: f64, min: i32, max: i32 },
    #[error("injection vector has {got} entries, feeder has {expected} nodes")]
    InjectionLength { expected: usize, got: usize },
    #[error("admittance matrix is singular at node {node} (isolated node)")]
    Singular { node: String },
    #[error("power flow did not converge after {iterations} iterations (mismatch {mismatch:.3e} p.u.)")]
    NonConvergence { iterations: usize, mismatch: f64 },
    #[error("voltage collapse at node {node}: |V| = {magnitude:.4} p.u. in iteration {iteration}")]
    VoltageCollapse { node: String, magnitude: f64, iteration: usize },
}

impl TapRatioSet {
    /// All devices at their neutral position.
    pub fn neutral(model: &FeederModel) -> Self {
        Self { positions: vec![0.0; model.oltcs.len()], ratios: vec![1.0; model.oltcs.len()] }
    }

    pub fn from_positions(model: &FeederModel, taps: &[i32]) -> Result<Self, PfError> {
        let relaxed: Vec<f64> = taps.iter().map(|&t| t as f64).collect();
        Self::from_relaxed(model, &relaxed)
    }

    /// Tap positions that may be fractional (LP relaxation).
    pub fn from_relaxed(model: &FeederModel, taps: &[f64]) -> Result<Self, PfError> {
        if taps.len() != model.oltcs.len() {
            return Err(PfError::TapCount { expected: model.oltcs.len(), got: taps.len() });
        }
        let mut ratios = Vec::with_capacity(taps.len());
        for (dev, &tau) in model.oltcs.iter().zip(taps) {
            if !(tau >= dev.tau_min as f64 - 1e-9 && tau <= dev.tau_max as f64 + 1e-9) {
                return Err(PfError::TapRange { device: dev.id.clone(), tau, min: dev.tau_min, max: dev.tau_max });
            }
            ratios.push(dev.ratio(tau));
        }
        Ok(Self { positions: taps.to_vec(), ratios })
    }

    /// Integer positions, rounded.
    pub fn integer_positions(&self) -> Vec<i32> {
        self.positions.iter().map(|t| t.round() as i32).collect()
    }
}

/// Complex power injection per node, p.u.; generation positive.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionSpec {
    pub s: Vec<Complex64>,
}

impl InjectionSpec {
    pub fn zeros(n: usize) -> Self {
        Self { s: vec![Complex64::zero(); n] }
    }

    /// Loads scaled by `load_mult[k]`, PV real output `pv_kw[k]` and SI
    /// reactive output `pv_q_kvar[k]` (indexed like `model.loads` / `model.pv_units`).
    pub fn from_devices(model: &FeederModel, load_mult: &[f64], pv_kw: &[f64], pv_q_kvar: &[f64]) -> Self {
        let mut s = vec![Complex64::zero(); model.n_nodes()];
        for (l, m) in model.loads.iter().zip(load_mult) {
            s[l.node.index] -= Complex64::new(l.p_pu * m, l.q_pu * m);
        }
        for ((pv, p), q) in model.pv_units.iter().zip(pv_kw).zip(pv_q_kvar) {
            s[pv.node.index] += Complex64::new(model.kw_to_pu(*p), model.kw_to_pu(*q));
        }
        Self { s }
    }
}

/// Full nodal admittance matrix at a given set of tap ratios, per-unit.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix<T: Real> {
    pub y: DenseMatrix<Complex<T>>,
    pub ratios: Vec<f64>,
}

impl<T: Real> AdmittanceMatrix<T> {
    pub fn dim(&self) -> usize {
        self.y.rows()
    }

    /// Non-zero entries as `(row, col, value)`.
    pub fn triplets(&self) -> Vec<(usize, usize, Complex<T>)> {
        let n = self.dim();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let v = self.y[(i, j)];
                if !v.is_zero() {
                    out.push((i, j, v));
                }
            }
        }
        out
    }

    /// Debug dump as `row,col,re,im` CSV.
    pub fn write_triplet_csv(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "row,col,re,im")?;
        for (i, j, v) in self.triplets() {
            writeln!(out, "{i},{j},{:e},{:e}", v.re, v.im)?;
        }
        out.flush()
    }
}

fn invert_small(m: &[Vec<Complex64>]) -> Option<Vec<Vec<Complex64>>> {
    let n = m.len();
    let lu = DenseMatrix::from_rows(m).lu().ok()?;
    let mut inv = vec![vec![Complex64::zero(); n]; n];
    for j in 0..n {
        let mut e = vec![Complex64::zero(); n];
        e[j] = Complex64::new(1.0, 0.0);
        let col = lu.solve(&e);
        for i in 0..n {
            inv[i][j] = col[i];
        }
    }
    Some(inv)
}

/// Stamps lines and tap changers into the nodal admittance matrix.
///
/// Each regulated phase of an OLTC between primary node `i` and secondary
/// node `j` contributes `a²/z_T` to `Y_ii`, `-a/z_T` to `Y_ij`/`Y_ji` and
/// `1/z_T` to `Y_jj`.
pub fn assemble_ybus<T: Real>(model: &FeederModel, taps: &TapRatioSet) -> Result<AdmittanceMatrix<T>, PfError> {
    if taps.ratios.len() != model.oltcs.len() {
        return Err(PfError::TapCount { expected: model.oltcs.len(), got: taps.ratios.len() });
    }
    for (dev, &tau) in model.oltcs.iter().zip(&taps.positions) {
        if !(tau >= dev.tau_min as f64 - 1e-9 && tau <= dev.tau_max as f64 + 1e-9) {
            return Err(PfError::TapRange { device: dev.id.clone(), tau, min: dev.tau_min, max: dev.tau_max });
        }
    }
    let n = model.n_nodes();
    let mut y = vec![vec![Complex64::zero(); n]; n];
    for br in &model.branches {
        let z_pu: Vec<Vec<Complex64>> =
            br.z_ohm.iter().map(|r| r.iter().map(|z| z / br.z_base_ohm).collect()).collect();
        let ys = invert_small(&z_pu).ok_or_else(|| PfError::Singular { node: format!("{}.{}", br.to, br.phases[0]) })?;
        let k = br.phases.len();
        for a in 0..k {
            for b in 0..k {
                let (fa, fb) = (br.from_nodes[a], br.from_nodes[b]);
                let (ta, tb) = (br.to_nodes[a], br.to_nodes[b]);
                y[fa][fb] += ys[a][b];
                y[ta][tb] += ys[a][b];
                y[fa][tb] -= ys[a][b];
                y[ta][fb] -= ys[a][b];
                if let Some(sh) = &br.y_shunt_s {
                    let half = sh[a][b] * br.z_base_ohm * 0.5;
                    y[fa][fb] += half;
                    y[ta][tb] += half;
                }
            }
        }
    }
    for (dev, &a) in model.oltcs.iter().zip(&taps.ratios) {
        let yt = 1.0 / dev.z_t;
        for (&i, &j) in dev.primary_nodes.iter().zip(&dev.secondary_nodes) {
            y[i][i] += yt * a * a;
            y[i][j] -= yt * a;
            y[j][i] -= yt * a;
            y[j][j] += yt;
        }
    }
    let mut m = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = cast_complex(y[i][j]);
        }
    }
    Ok(AdmittanceMatrix { y: m, ratios: taps.ratios.clone() })
}

/// Converged (or last-iterate) feeder state.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint<T: Real> {
    /// Node voltages, p.u.
    pub v: Vec<Complex<T>>,
    /// Net injection currents `Y V`, p.u.; source current on slack nodes.
    pub i: Vec<Complex<T>>,
    pub taps: TapRatioSet,
    pub converged: bool,
    /// Largest complex-power mismatch over non-slack nodes, p.u.
    pub mismatch: T,
    pub iterations: usize,
}

/// `|V|` per node.
pub fn voltage_magnitudes<T: Real>(op: &OperatingPoint<T>) -> Vec<T> {
    op.v.iter().map(|v| (v.re * v.re + v.im * v.im).sqrt()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFlowOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub collapse_threshold: f64,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iterations: 200, collapse_threshold: 0.5 }
    }
}

/// Factorized network at one tap setting.
#[derive(Debug, Clone)]
pub struct FactorizedNetwork<T: Real> {
    pub ybus: AdmittanceMatrix<T>,
    /// Non-slack node indices; row `k` of the reduced system is node `free[k]`.
    pub free: Vec<usize>,
    pub slack: Vec<usize>,
    pub v_slack: Vec<Complex<T>>,
    pub lu_nn: LuFactor<Complex<T>>,
    /// `-Y_ns V_s` for each free node.
    pub slack_rhs: Vec<Complex<T>>,
    /// Voltages with every injection at zero.
    pub no_load: Vec<Complex<T>>,
}

impl<T: Real> FactorizedNetwork<T> {
    pub fn new(model: &FeederModel, taps: &TapRatioSet) -> Result<Self, PfError> {
        let ybus = assemble_ybus::<T>(model, taps)?;
        let slack = model.source.nodes.clone();
        let free = model.non_slack_nodes();
        let v_slack: Vec<Complex<T>> = model.source.phasors().into_iter().map(cast_complex).collect();
        let nf = free.len();
        let mut ynn = DenseMatrix::zeros(nf, nf);
        for (a, &i) in free.iter().enumerate() {
            for (b, &j) in free.iter().enumerate() {
                ynn[(a, b)] = ybus.y[(i, j)];
            }
        }
        let lu_nn = LuFactor::new(ynn).map_err(|e| PfError::Singular { node: model.nodes[free[e.step]].to_string() })?;
        let slack_rhs: Vec<Complex<T>> = free
            .iter()
            .map(|&i| {
                let mut acc = Complex::zero();
                for (s, &k) in slack.iter().enumerate() {
                    acc -= ybus.y[(i, k)] * v_slack[s];
                }
                acc
            })
            .collect();
        let vn = lu_nn.solve(&slack_rhs);
        let mut no_load = vec![Complex::zero(); model.n_nodes()];
        for (s, &k) in slack.iter().enumerate() {
            no_load[k] = v_slack[s];
        }
        for (a, &i) in free.iter().enumerate() {
            no_load[i] = vn[a];
        }
        Ok(Self { ybus, free, slack, v_slack, lu_nn, slack_rhs, no_load })
    }

    pub fn currents(&self, v: &[Complex<T>]) -> Vec<Complex<T>> {
        self.ybus.y.mul_vec(v)
    }

    /// Max |V conj(YV) - S| over non-slack nodes.
    pub fn mismatch(&self, v: &[Complex<T>], inj: &InjectionSpec) -> T {
        let i = self.currents(v);
        self.free
            .iter()
            .map(|&k| {
                let s = v[k] * i[k].conj() - cast_complex::<T>(inj.s[k]);
                s.norm()
            })
            .fold(T::zero(), T::max)
    }
}

/// Power-flow engine with a small cache of factorizations keyed by tap ratios.
#[derive(Debug)]
pub struct PowerFlow<'m, T: Real> {
    model: &'m FeederModel,
    pub options: PowerFlowOptions,
    cache: Vec<Arc<FactorizedNetwork<T>>>,
}

const CACHE_SIZE: usize = 8;

impl<'m, T: Real> PowerFlow<'m, T> {
    pub fn new(model: &'m FeederModel) -> Self {
        Self { model, options: PowerFlowOptions::default(), cache: Vec::new() }
    }

    pub fn with_options(model: &'m FeederModel, options: PowerFlowOptions) -> Self {
        Self { model, options, cache: Vec::new() }
    }

    pub fn model(&self) -> &'m FeederModel {
        self.model
    }

    pub fn network(&mut self, taps: &TapRatioSet) -> Result<Arc<FactorizedNetwork<T>>, PfError> {
        if let Some(pos) = self.cache.iter().position(|f| f.ybus.ratios == taps.ratios) {
            let hit = self.cache.remove(pos);
            self.cache.push(hit.clone());
            return Ok(hit);
        }
        let f = Arc::new(FactorizedNetwork::new(self.model, taps)?);
        if self.cache.len() == CACHE_SIZE {
            self.cache.remove(0);
        }
        self.cache.push(f.clone());
        Ok(f)
    }

    pub fn solve(
        &mut self,
        taps: &TapRatioSet,
        inj: &InjectionSpec,
        v_init: Option<&[Complex<T>]>,
    ) -> Result<OperatingPoint<T>, PfError> {
        let n = self.model.n_nodes();
        if inj.s.len() != n {
            return Err(PfError::InjectionLength { expected: n, got: inj.s.len() });
        }
        let net = self.network(taps)?;
        let tol = T::lit(self.options.tolerance);
        let collapse = T::lit(self.options.collapse_threshold);
        let mut v = match v_init {
            Some(v0) if v0.len() == n => {
                let mut v = v0.to_vec();
                for (s, &k) in net.slack.iter().enumerate() {
                    v[k] = net.v_slack[s];
                }
                v
            }
            _ => net.no_load.clone(),
        };
        let s_spec: Vec<Complex<T>> = net.free.iter().map(|&k| cast_complex(inj.s[k])).collect();
        let mut mismatch = net.mismatch(&v, inj);
        let mut iterations = 0;
        while mismatch > tol {
            if iterations == self.options.max_iterations {
                return Err(PfError::NonConvergence { iterations, mismatch: mismatch.as_f64() });
            }
            iterations += 1;
            let rhs: Vec<Complex<T>> = net
                .free
                .iter()
                .zip(&s_spec)
                .zip(&net.slack_rhs)
                .map(|((&k, s), r)| (*s / v[k]).conj() + *r)
                .collect();
            let vn = net.lu_nn.solve(&rhs);
            for (a, &k) in net.free.iter().enumerate() {
                let m = vn[a].norm();
                if !(m >= collapse) {
                    return Err(PfError::VoltageCollapse {
                        node: self.model.nodes[k].to_string(),
                        magnitude: m.as_f64(),
                        iteration: iterations,
                    });
                }
                v[k] = vn[a];
            }
            mismatch = net.mismatch(&v, inj);
        }
        let i = net.currents(&v);
        Ok(OperatingPoint { v, i, taps: taps.clone(), converged: true, mismatch, iterations })
    }
}

/// One-shot solve without caching.
pub fn solve_powerflow<T: Real>(
    model: &FeederModel,
    taps: &TapRatioSet,
    inj: &InjectionSpec,
    v_init: Option<&[Complex<T>]>,
) -> Result<OperatingPoint<T>, PfError> {
    PowerFlow::new(model).solve(taps, inj, v_init)
}
