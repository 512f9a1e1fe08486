#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;
use voltreg::optimizer::{reduced_instance, solve_lp_dense, DispatchProblem, LpBuilder, LpInstance};

pub fn data(file: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(file)
}

/// Random LP that is feasible by construction (a known point satisfies every
/// row) and bounded (every variable has a finite bound on the side its cost
/// pushes toward). Mixes boxed, one-sided and free variables with ranged,
/// one-sided and equality rows.
pub fn random_lp(seed: u64, n: usize, m: usize) -> LpInstance<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = LpBuilder::new();
    let mut x0 = Vec::with_capacity(n);
    let mut free = Vec::new();
    for j in 0..n {
        let v: f64 = rng.gen_range(-2.0..2.0);
        x0.push(v);
        let cost = rng.gen_range(-1.0..1.0);
        let (lo, hi) = match rng.gen_range(0..4) {
            0 => (v - rng.gen_range(0.0..2.0), v + rng.gen_range(0.0..2.0)),
            1 if cost >= 0.0 => (v - rng.gen_range(0.0..2.0), f64::INFINITY),
            1 => (f64::NEG_INFINITY, v + rng.gen_range(0.0..2.0)),
            2 => {
                free.push(j);
                (f64::NEG_INFINITY, f64::INFINITY)
            }
            _ => (v.floor() - 1.0, v.ceil() + 1.0),
        };
        b.add_var(format!("x{j}"), lo, hi, cost, false);
    }
    for i in 0..m {
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.4) {
                coeffs.push((j, (rng.gen_range(-3.0..3.0_f64) * 4.0).round() / 4.0));
            }
        }
        if coeffs.is_empty() {
            coeffs.push((rng.gen_range(0..n), 1.0));
        }
        let act: f64 = coeffs.iter().map(|(j, a)| a * x0[*j]).sum();
        let (lo, hi) = match rng.gen_range(0..4) {
            0 => (act, act),
            1 => (act - rng.gen_range(0.0..1.0), f64::INFINITY),
            2 => (f64::NEG_INFINITY, act + rng.gen_range(0.0..1.0)),
            _ => (act - rng.gen_range(0.0..1.0), act + rng.gen_range(0.0..1.0)),
        };
        b.add_row(format!("r{i}"), lo, hi, &coeffs);
    }
    // free variables are boxed in by a pair of rows each
    for &j in &free {
        let v = x0[j];
        b.add_row(format!("box{j}"), v - 3.0, v + 3.0, &[(j, 1.0)]);
    }
    b.build()
}

/// Small coefficient-level dispatch instance: up to two OLTCs, up to three
/// steps and taps in ±2.
pub fn small_dispatch(seed: u64) -> DispatchProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let n_nodes = rng.gen_range(3..=6);
    let n_pv = rng.gen_range(1..=3);
    let n_oltc = rng.gen_range(1..=2);
    let horizon = rng.gen_range(1..=3);
    let mut prob = DispatchProblem::random(seed, n_nodes, n_pv, n_oltc, horizon, 2);
    for o in &mut prob.oltcs {
        o.ramp = rng.gen_range(1..=4);
        o.kappa = rng.gen_range(0.005..0.03);
    }
    prob.weights.w2 = rng.gen_range(0.001..0.3);
    // linearized away from zero reactive output
    for st in &mut prob.steps {
        st.q0_pu = st.q_max_pu.iter().map(|m| m * rng.gen_range(-1.0..1.0)).collect();
    }
    prob
}

/// Objective of the best tap schedule found by trying every schedule within
/// the limits and solving the remaining LP with the dense reference solver.
pub fn enumerate_taps(prob: &DispatchProblem) -> f64 {
    let (lp, layout) = reduced_instance(prob);
    let h = prob.horizon();
    let np = prob.oltcs.len();
    let mut sched = vec![0i32; h * np];
    let mut best = f64::INFINITY;
    enumerate_rec(prob, &lp, &layout.tau, 0, &mut sched, &mut best);
    best
}

fn enumerate_rec(
    prob: &DispatchProblem,
    lp: &LpInstance<f64>,
    tau: &[Vec<usize>],
    slot: usize,
    sched: &mut Vec<i32>,
    best: &mut f64,
) {
    let np = prob.oltcs.len();
    if slot == sched.len() {
        let mut l = lp.clone();
        for (k, v) in sched.iter().enumerate() {
            let j = tau[k % np][k / np];
            l.lower[j] = *v as f64;
            l.upper[j] = *v as f64;
            l.integer[j] = false;
        }
        if let Ok(s) = solve_lp_dense(&l) {
            *best = best.min(s.objective);
        }
        return;
    }
    let (t, p) = (slot / np, slot % np);
    let o = &prob.oltcs[p];
    let prev = if t == 0 { o.tau_prev } else { sched[slot - np] };
    let r = o.ramp as i32;
    for v in (prev - r).max(o.tau_min)..=(prev + r).min(o.tau_max) {
        sched[slot] = v;
        enumerate_rec(prob, lp, tau, slot + 1, sched, best);
    }
}
