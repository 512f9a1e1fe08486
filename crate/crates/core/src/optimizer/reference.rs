//! Dense two-phase tableau simplex with Bland's rule. Slow and simple; used
//! only to cross-check the revised solver.

use super::lp::LpInstance;
use super::simplex::LpError;

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

enum Map {
    /// x = shift + sign · col
    Single { col: usize, shift: f64, sign: f64 },
    /// x = plus - minus
    Split { plus: usize, minus: usize },
}

pub fn solve_lp_dense(lp: &LpInstance<f64>) -> Result<ReferenceSolution, LpError> {
    let n = lp.n_vars();
    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0usize;
    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    for j in 0..n {
        let (l, u) = (lp.lower[j], lp.upper[j]);
        if l > u {
            return Err(LpError::InvalidBounds { name: lp.var_names[j].clone() });
        }
        if l.is_finite() {
            maps.push(Map::Single { col: ncols, shift: l, sign: 1.0 });
            if u.is_finite() {
                rows.push((vec![(ncols, 1.0)], u - l));
                // slack added below for "≤" rows
            }
            ncols += 1;
        } else if u.is_finite() {
            maps.push(Map::Single { col: ncols, shift: u, sign: -1.0 });
            ncols += 1;
        } else {
            maps.push(Map::Split { plus: ncols, minus: ncols + 1 });
            ncols += 2;
        }
    }
    // constraints: (coeffs over substituted columns, kind, rhs)
    let mut cons: Vec<(Vec<(usize, f64)>, i8, f64)> = rows.into_iter().map(|(c, b)| (c, -1, b)).collect();
    let mut row_coeffs: Vec<Vec<(usize, f64)>> = vec![Vec::new(); lp.n_rows()];
    for j in 0..n {
        let (r, v) = lp.column(j);
        for (ri, vi) in r.iter().zip(v) {
            row_coeffs[*ri].push((j, *vi));
        }
    }
    for (i, coeffs) in row_coeffs.iter().enumerate() {
        let mut sub = Vec::new();
        let mut constant = 0.0;
        for &(j, a) in coeffs {
            match maps[j] {
                Map::Single { col, shift, sign } => {
                    sub.push((col, a * sign));
                    constant += a * shift;
                }
                Map::Split { plus, minus } => {
                    sub.push((plus, a));
                    sub.push((minus, -a));
                }
            }
        }
        let (lo, hi) = (lp.row_lower[i], lp.row_upper[i]);
        if lo == hi {
            cons.push((sub, 0, lo - constant));
        } else {
            if lo.is_finite() {
                cons.push((sub.clone(), 1, lo - constant));
            }
            if hi.is_finite() {
                cons.push((sub, -1, hi - constant));
            }
        }
    }
    let mut cost = vec![0.0; ncols];
    for j in 0..n {
        let c = lp.cost[j];
        match maps[j] {
            Map::Single { col, sign, .. } => cost[col] += c * sign,
            Map::Split { plus, minus } => {
                cost[plus] += c;
                cost[minus] -= c;
            }
        }
    }
    let n_slack = cons.iter().filter(|c| c.1 != 0).count();
    let m = cons.len();
    let width = ncols + n_slack + m + 1;
    let art0 = ncols + n_slack;
    let mut t = vec![vec![0.0; width]; m];
    let mut basis = vec![0usize; m];
    let mut s = ncols;
    for (i, (coeffs, kind, rhs)) in cons.iter().enumerate() {
        for &(j, a) in coeffs {
            t[i][j] += a;
        }
        match kind {
            1 => {
                t[i][s] = -1.0;
                s += 1;
            }
            -1 => {
                t[i][s] = 1.0;
                s += 1;
            }
            _ => {}
        }
        t[i][width - 1] = *rhs;
        if *rhs < 0.0 {
            for v in t[i].iter_mut() {
                *v = -*v;
            }
        }
        t[i][art0 + i] = 1.0;
        basis[i] = art0 + i;
    }
    let tol = 1e-10;
    // phase 1
    let mut c1 = vec![0.0; width - 1];
    for v in c1.iter_mut().skip(art0) {
        *v = 1.0;
    }
    run_bland(&mut t, &mut basis, &c1, width - 1, tol).map_err(|_| LpError::Unbounded { name: "phase 1".into() })?;
    let infeas: f64 = basis.iter().enumerate().filter(|(_, &b)| b >= art0).map(|(i, _)| t[i][width - 1]).sum();
    if infeas > 1e-7 {
        return Err(LpError::Infeasible { name: "reference phase 1".into(), infeasibility: infeas });
    }
    // drive artificials out
    let mut keep = vec![true; m];
    for i in 0..m {
        if basis[i] >= art0 {
            match (0..art0).find(|&j| t[i][j].abs() > 1e-9) {
                Some(j) => pivot(&mut t, &mut basis, i, j),
                None => keep[i] = false,
            }
        }
    }
    let mut t2: Vec<Vec<f64>> = Vec::new();
    let mut b2 = Vec::new();
    for i in 0..m {
        if keep[i] {
            let mut row = t[i][..art0].to_vec();
            row.push(t[i][width - 1]);
            t2.push(row);
            b2.push(basis[i]);
        }
    }
    let mut c2 = vec![0.0; art0];
    c2[..ncols].copy_from_slice(&cost);
    run_bland(&mut t2, &mut b2, &c2, art0, tol).map_err(|j| LpError::Unbounded {
        name: if j < ncols { format!("column {j}") } else { "slack".into() },
    })?;
    let mut z = vec![0.0; art0];
    for (i, &b) in b2.iter().enumerate() {
        z[b] = t2[i][art0];
    }
    let x: Vec<f64> = maps
        .iter()
        .map(|mp| match *mp {
            Map::Single { col, shift, sign } => shift + sign * z[col],
            Map::Split { plus, minus } => z[plus] - z[minus],
        })
        .collect();
    let objective = lp.cost.iter().zip(&x).map(|(c, v)| c * v).sum::<f64>() + lp.offset;
    Ok(ReferenceSolution { x, objective })
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], r: usize, c: usize) {
    let p = t[r][c];
    for v in t[r].iter_mut() {
        *v /= p;
    }
    let prow = t[r].clone();
    for (i, row) in t.iter_mut().enumerate() {
        if i == r {
            continue;
        }
        let f = row[c];
        if f != 0.0 {
            for (v, pv) in row.iter_mut().zip(&prow) {
                *v -= f * pv;
            }
        }
    }
    basis[r] = c;
}

/// Minimizes `c·z` over the tableau; `Err(col)` if unbounded along `col`.
fn run_bland(t: &mut [Vec<f64>], basis: &mut [usize], c: &[f64], ncols: usize, tol: f64) -> Result<(), usize> {
    let rhs = t.first().map_or(ncols, |r| r.len() - 1);
    loop {
        let mut entering = None;
        for j in 0..ncols {
            if basis.contains(&j) {
                continue;
            }
            let mut d = c[j];
            for (i, &b) in basis.iter().enumerate() {
                d -= c[b] * t[i][j];
            }
            if d < -tol {
                entering = Some(j);
                break;
            }
        }
        let Some(j) = entering else { return Ok(()) };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..t.len() {
            let a = t[i][j];
            if a > tol {
                let ratio = t[i][rhs] / a;
                let better = match leave {
                    None => true,
                    Some((li, lr)) => ratio < lr - 1e-12 || (ratio <= lr + 1e-12 && basis[i] < basis[li]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        match leave {
            None => return Err(j),
            Some((i, _)) => pivot(t, basis, i, j),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::lp::LpBuilder;

    #[test]
    fn classic() {
        let mut b = LpBuilder::new();
        let x = b.add_var("x", 0.0, f64::INFINITY, -3.0, false);
        let y = b.add_var("y", 0.0, f64::INFINITY, -5.0, false);
        b.add_row("a", f64::NEG_INFINITY, 4.0, &[(x, 1.0)]);
        b.add_row("b", f64::NEG_INFINITY, 12.0, &[(y, 2.0)]);
        b.add_row("c", f64::NEG_INFINITY, 18.0, &[(x, 3.0), (y, 2.0)]);
        let s = solve_lp_dense(&b.build()).unwrap();
        assert!((s.objective + 36.0).abs() < 1e-9);
    }

    #[test]
    fn free_and_upper_only() {
        // min x + y, x free, y <= 3, x - y = 1, x >= -4 via row
        let mut b = LpBuilder::new();
        let x = b.add_var("x", f64::NEG_INFINITY, f64::INFINITY, 1.0, false);
        let y = b.add_var("y", f64::NEG_INFINITY, 3.0, 1.0, false);
        b.add_row("e", 1.0, 1.0, &[(x, 1.0), (y, -1.0)]);
        b.add_row("f", -4.0, f64::INFINITY, &[(x, 1.0)]);
        let s = solve_lp_dense(&b.build()).unwrap();
        assert!((s.objective + 9.0).abs() < 1e-9, "{}", s.objective);
    }
}
