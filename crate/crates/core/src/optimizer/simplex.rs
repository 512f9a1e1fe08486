//! Bounded-variable revised primal simplex.
//!
//! Every row gets a logical `s_i` with `a_i·x - s_i = 0` and the row bounds as
//! its bounds, so the working problem has only equality rows and bounded
//! variables. Phase 1 minimizes the sum of infeasibilities from any starting
//! basis; the ratio test is Harris' two-pass rule, pricing is Dantzig with a
//! Bland fallback on long degenerate runs.
//!
//! The basis is factorized by peeling column and row singletons and running
//! a dense LU on the remaining nucleus; updates are product-form etas.

use super::lp::LpInstance;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarStatus {
    Basic,
    Lower,
    Upper,
    /// Nonbasic strictly between its bounds (or free).
    Free,
}

/// Basis and nonbasic values over structurals followed by logicals.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisState<T: Real> {
    pub status: Vec<VarStatus>,
    pub basis: Vec<usize>,
    pub values: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    pub primal_tol: f64,
    pub dual_tol: f64,
    pub pivot_tol: f64,
    pub refactor_every: usize,
    pub max_iterations: Option<usize>,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
}

impl SimplexOptions {
    pub fn for_precision<T: Real>() -> Self {
        let eps = T::epsilon().as_f64();
        let tol = (1e3 * eps).max(1e-9);
        Self {
            primal_tol: tol,
            dual_tol: tol,
            pivot_tol: (1e4 * eps).max(1e-9),
            refactor_every: 50,
            max_iterations: None,
            bland_after: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<T: Real> {
    pub x: Vec<T>,
    pub objective: T,
    pub row_activity: Vec<T>,
    pub basis: BasisState<T>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LpError {
    #[error("infeasible: `{name}` cannot be brought within its bounds (residual {infeasibility:e})")]
    Infeasible { name: String, infeasibility: f64 },
    #[error("unbounded along `{name}`")]
    Unbounded { name: String },
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
    #[error("basis could not be repaired")]
    Singular,
    #[error("invalid bounds on `{name}`")]
    InvalidBounds { name: String },
}

pub fn solve_lp<T: Real>(lp: &LpInstance<T>) -> Result<LpSolution<T>, LpError> {
    solve_lp_with(lp, &SimplexOptions::for_precision::<T>(), None)
}

pub fn solve_lp_with<T: Real>(
    lp: &LpInstance<T>,
    opts: &SimplexOptions,
    warm: Option<&BasisState<T>>,
) -> Result<LpSolution<T>, LpError> {
    let mut s = Simplex::new(lp, opts)?;
    match warm {
        Some(b) if b.status.len() == s.n + s.m && b.basis.len() == s.m => s.load_basis(b),
        _ => s.crash(),
    }
    s.refactor()?;
    s.recompute_basics();
    for _ in 0..4 {
        s.run()?;
        s.refactor()?;
        s.recompute_basics();
        if s.max_infeasibility().0 <= s.ptol * T::lit(10.0) {
            break;
        }
    }
    Ok(s.solution())
}

#[derive(Debug, Clone)]
struct Eta<T> {
    pos: usize,
    pivot: T,
    entries: Vec<(usize, T)>,
}

/// Dense LU of the nucleus with greedy column processing.
#[derive(Debug, Clone)]
struct NucleusLu<T> {
    k: usize,
    a: Vec<T>,
    /// `(row, col)` pivot per elimination step.
    steps: Vec<(usize, usize)>,
}

enum NucleusFailure {
    Deficient { cols: Vec<usize>, rows: Vec<usize> },
}

impl<T: Real> NucleusLu<T> {
    fn factor(mut a: Vec<T>, k: usize) -> Result<Self, NucleusFailure> {
        let mut colmax = vec![T::zero(); k];
        for i in 0..k {
            for j in 0..k {
                let v = a[i * k + j].abs();
                if v > colmax[j] {
                    colmax[j] = v;
                }
            }
        }
        let mut used = vec![false; k];
        let mut steps = Vec::with_capacity(k);
        let mut deficient = Vec::new();
        let rel = T::lit(1e-11);
        for jj in 0..k {
            let mut best = T::zero();
            let mut r = usize::MAX;
            for i in 0..k {
                if !used[i] {
                    let v = a[i * k + jj].abs();
                    if v > best {
                        best = v;
                        r = i;
                    }
                }
            }
            if r == usize::MAX || best <= rel * colmax[jj] || best < T::min_positive_value() {
                deficient.push(jj);
                continue;
            }
            used[r] = true;
            steps.push((r, jj));
            let piv = a[r * k + jj];
            let pivot_row: Vec<T> = a[r * k + jj + 1..r * k + k].to_vec();
            for i in 0..k {
                if used[i] {
                    continue;
                }
                let f = a[i * k + jj] / piv;
                if f.is_zero() {
                    continue;
                }
                a[i * k + jj] = f;
                let row = &mut a[i * k + jj + 1..i * k + k];
                for (dst, u) in row.iter_mut().zip(&pivot_row) {
                    if !u.is_zero() {
                        *dst -= f * *u;
                    }
                }
            }
        }
        if !deficient.is_empty() {
            let rows = (0..k).filter(|i| !used[*i]).collect();
            return Err(NucleusFailure::Deficient { cols: deficient, rows });
        }
        Ok(Self { k, a, steps })
    }

    fn solve(&self, mut b: Vec<T>) -> Vec<T> {
        let k = self.k;
        for (s, &(r, c)) in self.steps.iter().enumerate() {
            let bs = b[r];
            if bs.is_zero() {
                continue;
            }
            for &(i, _) in &self.steps[s + 1..] {
                let l = self.a[i * k + c];
                if !l.is_zero() {
                    b[i] -= l * bs;
                }
            }
        }
        let mut x = vec![T::zero(); k];
        for s in (0..k).rev() {
            let (r, c) = self.steps[s];
            let mut sum = b[r];
            for &(_, c2) in &self.steps[s + 1..] {
                let u = self.a[r * k + c2];
                if !u.is_zero() {
                    sum -= u * x[c2];
                }
            }
            x[c] = sum / self.a[r * k + c];
        }
        x
    }

    fn solve_transpose(&self, c: Vec<T>) -> Vec<T> {
        let k = self.k;
        let mut z = vec![T::zero(); k];
        for s in 0..k {
            let (r, col) = self.steps[s];
            let mut sum = c[col];
            for (s2, &(r2, _)) in self.steps[..s].iter().enumerate() {
                let u = self.a[r2 * k + col];
                if !u.is_zero() {
                    sum -= u * z[s2];
                }
            }
            z[s] = sum / self.a[r * k + col];
        }
        let mut y = vec![T::zero(); k];
        for s in (0..k).rev() {
            let (r, col) = self.steps[s];
            let mut v = z[s];
            for &(r2, _) in &self.steps[s + 1..] {
                let l = self.a[r2 * k + col];
                if !l.is_zero() {
                    v -= l * y[r2];
                }
            }
            y[r] = v;
        }
        y
    }
}

#[derive(Debug, Clone)]
struct BasisFactor<T> {
    m: usize,
    cols: Vec<Vec<(usize, T)>>,
    col_single: Vec<(usize, usize, T)>,
    row_single: Vec<(usize, usize, T)>,
    nuc_rows: Vec<usize>,
    nuc_cols: Vec<usize>,
    nucleus: Option<NucleusLu<T>>,
    etas: Vec<Eta<T>>,
}

struct Deficiency {
    positions: Vec<usize>,
    rows: Vec<usize>,
}

impl<T: Real> BasisFactor<T> {
    fn new(m: usize, cols: Vec<Vec<(usize, T)>>) -> Result<Self, Deficiency> {
        let tiny = T::lit(1e-13);
        let mut row_adj: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (p, c) in cols.iter().enumerate() {
            for &(r, _) in c {
                row_adj[r].push(p);
            }
        }
        let mut row_active = vec![true; m];
        let mut col_active = vec![true; m];
        let mut col_cnt: Vec<usize> = cols.iter().map(|c| c.len()).collect();
        let mut deficient = Vec::new();
        let mut col_single = Vec::new();
        let mut stack: Vec<usize> = (0..m).rev().filter(|&p| col_cnt[p] == 1).collect();
        for p in 0..m {
            if col_cnt[p] == 0 {
                col_active[p] = false;
                deficient.push(p);
            }
        }
        while let Some(p) = stack.pop() {
            if !col_active[p] || col_cnt[p] != 1 {
                continue;
            }
            let Some(&(r, v)) = cols[p].iter().find(|(r, _)| row_active[*r]) else { continue };
            col_active[p] = false;
            if v.abs() <= tiny {
                deficient.push(p);
                continue;
            }
            row_active[r] = false;
            col_single.push((r, p, v));
            for &q in &row_adj[r] {
                if col_active[q] {
                    col_cnt[q] -= 1;
                    if col_cnt[q] == 1 {
                        stack.push(q);
                    } else if col_cnt[q] == 0 {
                        col_active[q] = false;
                        deficient.push(q);
                    }
                }
            }
        }
        let mut row_cnt = vec![0usize; m];
        for r in 0..m {
            if row_active[r] {
                row_cnt[r] = row_adj[r].iter().filter(|&&p| col_active[p]).count();
            }
        }
        let mut row_single = Vec::new();
        let mut stack: Vec<usize> = (0..m).rev().filter(|&r| row_active[r] && row_cnt[r] == 1).collect();
        while let Some(r) = stack.pop() {
            if !row_active[r] || row_cnt[r] != 1 {
                continue;
            }
            let Some(&p) = row_adj[r].iter().find(|&&p| col_active[p]) else { continue };
            let v = cols[p].iter().find(|(i, _)| *i == r).map(|e| e.1).unwrap_or_else(T::zero);
            if v.abs() <= tiny {
                continue;
            }
            row_active[r] = false;
            col_active[p] = false;
            row_single.push((r, p, v));
            for &(i, _) in &cols[p] {
                if row_active[i] {
                    row_cnt[i] -= 1;
                    if row_cnt[i] == 1 {
                        stack.push(i);
                    }
                }
            }
        }
        let nuc_rows: Vec<usize> = (0..m).filter(|&r| row_active[r]).collect();
        let nuc_cols: Vec<usize> = (0..m).filter(|&p| col_active[p]).collect();
        if !deficient.is_empty() || nuc_rows.len() != nuc_cols.len() {
            // rank-deficient outside the nucleus or structurally singular
            let mut positions = deficient;
            let mut rows = Vec::new();
            if nuc_rows.len() >= nuc_cols.len() {
                rows.extend(nuc_rows.iter().copied());
                // nucleus columns are re-examined after repair
            } else {
                positions.extend(nuc_cols.iter().copied());
                rows.extend(nuc_rows.iter().copied());
            }
            return Err(Deficiency { positions, rows });
        }
        let k = nuc_rows.len();
        let nucleus = if k == 0 {
            None
        } else {
            let mut local = vec![usize::MAX; m];
            for (ii, &r) in nuc_rows.iter().enumerate() {
                local[r] = ii;
            }
            let mut a = vec![T::zero(); k * k];
            for (jj, &p) in nuc_cols.iter().enumerate() {
                for &(r, v) in &cols[p] {
                    if local[r] != usize::MAX {
                        a[local[r] * k + jj] = v;
                    }
                }
            }
            match NucleusLu::factor(a, k) {
                Ok(lu) => Some(lu),
                Err(NucleusFailure::Deficient { cols: dc, rows: dr }) => {
                    return Err(Deficiency {
                        positions: dc.iter().map(|&jj| nuc_cols[jj]).collect(),
                        rows: dr.iter().map(|&ii| nuc_rows[ii]).collect(),
                    })
                }
            }
        };
        Ok(Self { m, cols, col_single, row_single, nuc_rows, nuc_cols, nucleus, etas: Vec::new() })
    }

    fn ftran(&self, mut work: Vec<T>) -> Vec<T> {
        let mut x = vec![T::zero(); self.m];
        for &(r, p, v) in &self.row_single {
            let xp = work[r] / v;
            x[p] = xp;
            if !xp.is_zero() {
                for &(i, a) in &self.cols[p] {
                    work[i] -= a * xp;
                }
            }
        }
        if let Some(lu) = &self.nucleus {
            let rhs: Vec<T> = self.nuc_rows.iter().map(|&r| work[r]).collect();
            let sol = lu.solve(rhs);
            for (jj, &p) in self.nuc_cols.iter().enumerate() {
                let xp = sol[jj];
                x[p] = xp;
                if !xp.is_zero() {
                    for &(i, a) in &self.cols[p] {
                        work[i] -= a * xp;
                    }
                }
            }
        }
        for &(r, p, v) in self.col_single.iter().rev() {
            let xp = work[r] / v;
            x[p] = xp;
            if !xp.is_zero() {
                for &(i, a) in &self.cols[p] {
                    work[i] -= a * xp;
                }
            }
        }
        for e in &self.etas {
            let xp = x[e.pos] / e.pivot;
            x[e.pos] = xp;
            if !xp.is_zero() {
                for &(i, a) in &e.entries {
                    x[i] -= a * xp;
                }
            }
        }
        x
    }

    fn btran(&self, mut c: Vec<T>) -> Vec<T> {
        for e in self.etas.iter().rev() {
            let mut s = c[e.pos];
            for &(i, a) in &e.entries {
                s -= a * c[i];
            }
            c[e.pos] = s / e.pivot;
        }
        let dot = |p: usize, y: &[T]| self.cols[p].iter().fold(T::zero(), |acc, &(i, a)| acc + a * y[i]);
        let mut y = vec![T::zero(); self.m];
        for &(r, p, v) in &self.col_single {
            y[r] = (c[p] - dot(p, &y)) / v;
        }
        if let Some(lu) = &self.nucleus {
            let rhs: Vec<T> = self.nuc_cols.iter().map(|&p| c[p] - dot(p, &y)).collect();
            let sol = lu.solve_transpose(rhs);
            for (ii, &r) in self.nuc_rows.iter().enumerate() {
                y[r] = sol[ii];
            }
        }
        for &(r, p, v) in self.row_single.iter().rev() {
            y[r] = (c[p] - dot(p, &y)) / v;
        }
        y
    }

    fn push_eta(&mut self, pos: usize, alpha: &[T]) {
        let drop = T::lit(1e-14);
        let entries =
            alpha.iter().enumerate().filter(|(i, a)| *i != pos && a.abs() > drop).map(|(i, a)| (i, *a)).collect();
        self.etas.push(Eta { pos, pivot: alpha[pos], entries });
    }
}

struct Simplex<'a, T: Real> {
    lp: &'a LpInstance<T>,
    opts: SimplexOptions,
    n: usize,
    m: usize,
    lo: Vec<T>,
    hi: Vec<T>,
    cost: Vec<T>,
    x: Vec<T>,
    status: Vec<VarStatus>,
    basis: Vec<usize>,
    pos_of: Vec<usize>,
    factor: Option<BasisFactor<T>>,
    ptol: T,
    dtol: T,
    pivtol: T,
    iterations: usize,
}

const NONE: usize = usize::MAX;

impl<'a, T: Real> Simplex<'a, T> {
    fn new(lp: &'a LpInstance<T>, opts: &SimplexOptions) -> Result<Self, LpError> {
        let (n, m) = (lp.n_vars(), lp.n_rows());
        let mut lo = lp.lower.clone();
        lo.extend(lp.row_lower.iter().copied());
        let mut hi = lp.upper.clone();
        hi.extend(lp.row_upper.iter().copied());
        for j in 0..n + m {
            if lo[j] > hi[j] || lo[j].is_nan() || hi[j].is_nan() || lo[j] == T::infinity() || hi[j] == T::neg_infinity()
            {
                let name = if j < n { lp.var_names[j].clone() } else { lp.row_names[j - n].clone() };
                return Err(LpError::InvalidBounds { name });
            }
        }
        let mut cost = lp.cost.clone();
        cost.extend(std::iter::repeat(T::zero()).take(m));
        Ok(Self {
            lp,
            opts: *opts,
            n,
            m,
            lo,
            hi,
            cost,
            x: vec![T::zero(); n + m],
            status: vec![VarStatus::Free; n + m],
            basis: Vec::new(),
            pos_of: vec![NONE; n + m],
            factor: None,
            ptol: T::lit(opts.primal_tol),
            dtol: T::lit(opts.dual_tol),
            pivtol: T::lit(opts.pivot_tol),
            iterations: 0,
        })
    }

    fn name(&self, j: usize) -> String {
        if j < self.n {
            self.lp.var_names[j].clone()
        } else {
            self.lp.row_names[j - self.n].clone()
        }
    }

    fn column(&self, j: usize) -> Vec<(usize, T)> {
        if j < self.n {
            let (r, v) = self.lp.column(j);
            r.iter().copied().zip(v.iter().copied()).collect()
        } else {
            vec![(j - self.n, -T::one())]
        }
    }

    /// Places a nonbasic variable at its default position.
    fn park(&mut self, j: usize, prefer: Option<T>) {
        let (l, u) = (self.lo[j], self.hi[j]);
        let target = prefer.unwrap_or_else(T::zero);
        let (st, v) = if l == u {
            (VarStatus::Lower, l)
        } else if target <= l {
            if l.is_finite() {
                (VarStatus::Lower, l)
            } else {
                (VarStatus::Free, target)
            }
        } else if target >= u {
            if u.is_finite() {
                (VarStatus::Upper, u)
            } else {
                (VarStatus::Free, target)
            }
        } else {
            (VarStatus::Free, target)
        };
        self.status[j] = st;
        self.x[j] = v;
    }

    fn crash(&mut self) {
        for j in 0..self.n {
            self.park(j, None);
        }
        self.basis = (self.n..self.n + self.m).collect();
        for (p, &j) in self.basis.iter().enumerate() {
            self.status[j] = VarStatus::Basic;
            self.pos_of[j] = p;
        }
        let act = self.lp.row_activity(&self.x[..self.n]);
        for (i, a) in act.iter().enumerate() {
            self.x[self.n + i] = *a;
        }
        // swap infeasible logicals for singleton structurals that absorb the residual
        let mut used = vec![false; self.m];
        for j in 0..self.n {
            let (rows, vals) = self.lp.column(j);
            if rows.len() != 1 || self.lo[j] == self.hi[j] {
                continue;
            }
            let (i, a) = (rows[0], vals[0]);
            if used[i] || a.abs() < T::lit(1e-9) {
                continue;
            }
            let s = self.n + i;
            let v = self.x[s];
            let target = if v < self.lo[s] {
                self.lo[s]
            } else if v > self.hi[s] {
                self.hi[s]
            } else {
                continue;
            };
            let xj = self.x[j] + (target - v) / a;
            if xj < self.lo[j] || xj > self.hi[j] {
                continue;
            }
            used[i] = true;
            let p = self.pos_of[s];
            self.basis[p] = j;
            self.pos_of[j] = p;
            self.pos_of[s] = NONE;
            self.status[j] = VarStatus::Basic;
            self.x[j] = xj;
            self.x[s] = target;
            self.status[s] = if target == self.lo[s] { VarStatus::Lower } else { VarStatus::Upper };
        }
    }

    fn load_basis(&mut self, b: &BasisState<T>) {
        self.basis = b.basis.clone();
        self.pos_of = vec![NONE; self.n + self.m];
        for (p, &j) in self.basis.iter().enumerate() {
            self.pos_of[j] = p;
        }
        for j in 0..self.n + self.m {
            if self.pos_of[j] != NONE {
                self.status[j] = VarStatus::Basic;
                continue;
            }
            let (l, u) = (self.lo[j], self.hi[j]);
            match b.status[j] {
                VarStatus::Lower if l.is_finite() => {
                    self.status[j] = VarStatus::Lower;
                    self.x[j] = l;
                }
                VarStatus::Upper if u.is_finite() => {
                    self.status[j] = VarStatus::Upper;
                    self.x[j] = u;
                }
                _ => self.park(j, Some(b.values[j])),
            }
        }
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        for _ in 0..=self.m.max(1) {
            let cols: Vec<Vec<(usize, T)>> = self.basis.iter().map(|&j| self.column(j)).collect();
            match BasisFactor::new(self.m, cols) {
                Ok(f) => {
                    self.factor = Some(f);
                    return Ok(());
                }
                Err(d) => {
                    if d.positions.is_empty() || d.rows.is_empty() {
                        return Err(LpError::Singular);
                    }
                    for (&p, &r) in d.positions.iter().zip(&d.rows) {
                        let out = self.basis[p];
                        let s = self.n + r;
                        if self.pos_of[s] != NONE {
                            return Err(LpError::Singular);
                        }
                        self.pos_of[out] = NONE;
                        let v = self.x[out];
                        self.park(out, Some(v));
                        self.basis[p] = s;
                        self.pos_of[s] = p;
                        self.status[s] = VarStatus::Basic;
                    }
                }
            }
        }
        Err(LpError::Singular)
    }

    fn recompute_basics(&mut self) {
        let mut rhs = vec![T::zero(); self.m];
        for j in 0..self.n + self.m {
            if self.status[j] == VarStatus::Basic || self.x[j].is_zero() {
                continue;
            }
            for (i, a) in self.column(j) {
                rhs[i] -= a * self.x[j];
            }
        }
        let xb = self.factor.as_ref().expect("factorized").ftran(rhs);
        for (p, &j) in self.basis.iter().enumerate() {
            self.x[j] = xb[p];
        }
    }

    fn infeasibility(&self, j: usize) -> T {
        let v = self.x[j];
        if v < self.lo[j] {
            self.lo[j] - v
        } else if v > self.hi[j] {
            v - self.hi[j]
        } else {
            T::zero()
        }
    }

    fn max_infeasibility(&self) -> (T, usize) {
        let mut worst = (T::zero(), NONE);
        for &j in &self.basis {
            let f = self.infeasibility(j);
            if f > worst.0 {
                worst = (f, j);
            }
        }
        worst
    }

    fn run(&mut self) -> Result<(), LpError> {
        let limit = self.opts.max_iterations.unwrap_or(50 * (self.n + self.m) + 10_000);
        let mut degenerate = 0usize;
        loop {
            if self.iterations >= limit {
                return Err(LpError::IterationLimit(self.iterations));
            }
            if self.factor.as_ref().map_or(true, |f| f.etas.len() >= self.opts.refactor_every) {
                self.refactor()?;
                self.recompute_basics();
            }
            let bland = degenerate >= self.opts.bland_after;
            let mut phase1 = false;
            let mut cb = vec![T::zero(); self.m];
            for (p, &j) in self.basis.iter().enumerate() {
                let v = self.x[j];
                if v < self.lo[j] - self.ptol {
                    cb[p] = -T::one();
                    phase1 = true;
                } else if v > self.hi[j] + self.ptol {
                    cb[p] = T::one();
                    phase1 = true;
                }
            }
            if !phase1 {
                for (p, &j) in self.basis.iter().enumerate() {
                    cb[p] = self.cost[j];
                }
            }
            let factor = self.factor.as_ref().expect("factorized");
            let y = factor.btran(cb);
            let Some((q, dir)) = self.price(&y, phase1, bland) else {
                if phase1 {
                    let (inf, j) = self.max_infeasibility();
                    return Err(LpError::Infeasible { name: self.name(j), infeasibility: inf.as_f64() });
                }
                return Ok(());
            };
            let mut a = vec![T::zero(); self.m];
            for (i, v) in self.column(q) {
                a[i] = v;
            }
            let alpha = factor.ftran(a);
            let step = self.ratio_test(q, dir, &alpha, bland);
            self.iterations += 1;
            match step {
                Step::Unbounded => {
                    if phase1 {
                        // numerical trouble: rebuild and retry
                        self.refactor()?;
                        self.recompute_basics();
                        degenerate += 1;
                        continue;
                    }
                    return Err(LpError::Unbounded { name: self.name(q) });
                }
                Step::Flip(theta) => {
                    self.apply_move(q, dir, theta, &alpha);
                    let to_upper = dir > 0;
                    self.status[q] = if to_upper { VarStatus::Upper } else { VarStatus::Lower };
                    self.x[q] = if to_upper { self.hi[q] } else { self.lo[q] };
                    degenerate = if theta > T::lit(1e-12) { 0 } else { degenerate + 1 };
                }
                Step::Pivot { pos, theta, to_upper } => {
                    self.apply_move(q, dir, theta, &alpha);
                    let out = self.basis[pos];
                    self.x[out] = if to_upper { self.hi[out] } else { self.lo[out] };
                    self.status[out] = if self.lo[out] == self.hi[out] || !to_upper {
                        VarStatus::Lower
                    } else {
                        VarStatus::Upper
                    };
                    self.pos_of[out] = NONE;
                    self.basis[pos] = q;
                    self.pos_of[q] = pos;
                    self.status[q] = VarStatus::Basic;
                    self.factor.as_mut().expect("factorized").push_eta(pos, &alpha);
                    degenerate = if theta > T::lit(1e-12) { 0 } else { degenerate + 1 };
                }
            }
        }
    }

    fn apply_move(&mut self, q: usize, dir: i8, theta: T, alpha: &[T]) {
        if theta.is_zero() {
            return;
        }
        let d = if dir > 0 { theta } else { -theta };
        for (p, &j) in self.basis.iter().enumerate() {
            if !alpha[p].is_zero() {
                self.x[j] -= d * alpha[p];
            }
        }
        self.x[q] += d;
    }

    fn price(&self, y: &[T], phase1: bool, bland: bool) -> Option<(usize, i8)> {
        let mut best: Option<(usize, i8, T)> = None;
        for j in 0..self.n + self.m {
            let st = self.status[j];
            if st == VarStatus::Basic || self.lo[j] == self.hi[j] {
                continue;
            }
            let c = if phase1 { T::zero() } else { self.cost[j] };
            let d = if j < self.n {
                let (rows, vals) = self.lp.column(j);
                c - rows.iter().zip(vals).fold(T::zero(), |acc, (r, v)| acc + *v * y[*r])
            } else {
                c + y[j - self.n]
            };
            let dir: i8 = match st {
                VarStatus::Lower if d < -self.dtol => 1,
                VarStatus::Upper if d > self.dtol => -1,
                VarStatus::Free if d < -self.dtol && self.x[j] < self.hi[j] => 1,
                VarStatus::Free if d > self.dtol && self.x[j] > self.lo[j] => -1,
                _ => continue,
            };
            if bland {
                return Some((j, dir));
            }
            if best.map_or(true, |(_, _, b)| d.abs() > b) {
                best = Some((j, dir, d.abs()));
            }
        }
        best.map(|(j, d, _)| (j, d))
    }

    fn ratio_test(&self, q: usize, dir: i8, alpha: &[T], bland: bool) -> Step<T> {
        let tol = if bland { T::zero() } else { self.ptol };
        // candidates: (position, exact ratio, |alpha|, leaves at upper)
        let mut cands: Vec<(usize, T, T, bool)> = Vec::new();
        let mut theta_max = T::infinity();
        for (p, &j) in self.basis.iter().enumerate() {
            let a = alpha[p];
            if a.abs() <= self.pivtol {
                continue;
            }
            let delta = if dir > 0 { -a } else { a };
            let v = self.x[j];
            let (l, u) = (self.lo[j], self.hi[j]);
            // an infeasible basic moving further out never blocks
            let (target, upper) = if delta < T::zero() {
                if v > u + self.ptol {
                    (u, true)
                } else if v < l - self.ptol || !l.is_finite() {
                    continue;
                } else {
                    (l, false)
                }
            } else if v < l - self.ptol {
                (l, false)
            } else if v > u + self.ptol || !u.is_finite() {
                continue;
            } else {
                (u, true)
            };
            let dist = if delta < T::zero() { v - target } else { target - v }.max(T::zero());
            let relaxed = (dist + tol) / delta.abs();
            if relaxed < theta_max {
                theta_max = relaxed;
            }
            cands.push((p, dist / delta.abs(), a.abs(), upper));
        }
        let flip = match self.status[q] {
            _ if dir > 0 && self.hi[q].is_finite() => self.hi[q] - self.x[q],
            _ if dir < 0 && self.lo[q].is_finite() => self.x[q] - self.lo[q],
            _ => T::infinity(),
        };
        if flip.is_finite() && flip <= theta_max {
            return Step::Flip(flip.max(T::zero()));
        }
        if cands.is_empty() {
            return Step::Unbounded;
        }
        let mut pick: Option<(usize, T, T, bool)> = None;
        if bland {
            for c in &cands {
                let better = match pick {
                    None => true,
                    Some(b) => {
                        c.1 < b.1 - T::lit(1e-12)
                            || (c.1 <= b.1 + T::lit(1e-12) && self.basis[c.0] < self.basis[b.0])
                    }
                };
                if better {
                    pick = Some(*c);
                }
            }
        } else {
            for c in &cands {
                if c.1 <= theta_max && pick.map_or(true, |b| c.2 > b.2) {
                    pick = Some(*c);
                }
            }
        }
        let (pos, ratio, _, upper) = pick.expect("candidate within the relaxed bound");
        Step::Pivot { pos, theta: ratio.max(T::zero()), to_upper: upper }
    }

    fn solution(&self) -> LpSolution<T> {
        let x = self.x[..self.n].to_vec();
        LpSolution {
            objective: self.lp.objective(&x),
            row_activity: self.x[self.n..].to_vec(),
            x,
            basis: BasisState { status: self.status.clone(), basis: self.basis.clone(), values: self.x.clone() },
            iterations: self.iterations,
        }
    }
}

enum Step<T> {
    Unbounded,
    Flip(T),
    Pivot { pos: usize, theta: T, to_upper: bool },
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::lp::LpBuilder;

    #[test]
    fn box_minimum() {
        let mut b = LpBuilder::new();
        b.add_var("x", 0.0, 1.0, 1.0, false);
        let s = solve_lp(&b.build()).unwrap();
        assert_eq!(s.objective, 0.0);
    }

    #[test]
    fn absolute_value_gadget() {
        // min d, d >= v - 1, d >= 1 - v, v = 0.97
        let mut b = LpBuilder::new();
        let v = b.add_var("v", 0.97, 0.97, 0.0, false);
        let d = b.add_var("d", 0.0, f64::INFINITY, 1.0, false);
        b.add_row("up", -1.0, f64::INFINITY, &[(d, 1.0), (v, -1.0)]);
        b.add_row("dn", 1.0, f64::INFINITY, &[(d, 1.0), (v, 1.0)]);
        let s = solve_lp(&b.build()).unwrap();
        assert!((s.objective - 0.03).abs() < 1e-12);
    }

    #[test]
    fn classic_two_variable() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18
        let mut b = LpBuilder::new();
        let x = b.add_var("x", 0.0, f64::INFINITY, -3.0, false);
        let y = b.add_var("y", 0.0, f64::INFINITY, -5.0, false);
        b.add_row("a", f64::NEG_INFINITY, 4.0, &[(x, 1.0)]);
        b.add_row("b", f64::NEG_INFINITY, 12.0, &[(y, 2.0)]);
        b.add_row("c", f64::NEG_INFINITY, 18.0, &[(x, 3.0), (y, 2.0)]);
        let s = solve_lp(&b.build()).unwrap();
        assert!((s.objective + 36.0).abs() < 1e-9);
        assert!((s.x[0] - 2.0).abs() < 1e-9 && (s.x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut b = LpBuilder::new();
        let x = b.add_var("x", 0.0, 1.0, 0.0, false);
        b.add_row("r", 2.0, 3.0, &[(x, 1.0)]);
        assert!(matches!(solve_lp(&b.build()), Err(LpError::Infeasible { .. })));
        let mut b = LpBuilder::new();
        let x = b.add_var("x", 0.0, f64::INFINITY, -1.0, false);
        b.add_row("r", 0.0, f64::INFINITY, &[(x, 1.0)]);
        assert!(matches!(solve_lp(&b.build()), Err(LpError::Unbounded { .. })));
    }

    #[test]
    fn equality_chain_with_free_variables() {
        // x0 free, x_{k+1} = x_k + 1, minimize x_5 with x_0 >= -2
        let mut b = LpBuilder::new();
        let v: Vec<usize> = (0..6)
            .map(|k| b.add_var(format!("x{k}"), f64::NEG_INFINITY, f64::INFINITY, if k == 5 { 1.0 } else { 0.0 }, false))
            .collect();
        for k in 0..5 {
            b.add_row(format!("e{k}"), 1.0, 1.0, &[(v[k + 1], 1.0), (v[k], -1.0)]);
        }
        b.add_row("floor", -2.0, f64::INFINITY, &[(v[0], 1.0)]);
        let s = solve_lp(&b.build()).unwrap();
        assert!((s.objective - 3.0).abs() < 1e-9);
    }

    #[test]
    fn warm_start_after_bound_change() {
        let mut b = LpBuilder::new();
        let x = b.add_var("x", 0.0, 10.0, -1.0, false);
        let y = b.add_var("y", 0.0, 10.0, -1.0, false);
        b.add_row("c", f64::NEG_INFINITY, 7.5, &[(x, 1.0), (y, 1.0)]);
        b.add_row("d", f64::NEG_INFINITY, 2.5, &[(x, 1.0), (y, -1.0)]);
        let mut lp = b.build();
        let s = solve_lp(&lp).unwrap();
        assert!((s.objective + 7.5).abs() < 1e-9);
        lp.upper[x] = 2.0;
        let opts = SimplexOptions::for_precision::<f64>();
        let w = solve_lp_with(&lp, &opts, Some(&s.basis)).unwrap();
        assert!((w.objective + 7.5).abs() < 1e-9);
        assert!(w.x[x] <= 2.0 + 1e-12);
        lp.upper[y] = 1.0;
        let w2 = solve_lp_with(&lp, &opts, Some(&w.basis)).unwrap();
        assert!((w2.objective + 3.0).abs() < 1e-9);
    }

    #[test]
    fn f32_solve() {
        let mut b = LpBuilder::new();
        let x = b.add_var("x", 0.0, f64::INFINITY, -3.0, false);
        let y = b.add_var("y", 0.0, f64::INFINITY, -5.0, false);
        b.add_row("a", f64::NEG_INFINITY, 4.0, &[(x, 1.0)]);
        b.add_row("b", f64::NEG_INFINITY, 12.0, &[(y, 2.0)]);
        b.add_row("c", f64::NEG_INFINITY, 18.0, &[(x, 3.0), (y, 2.0)]);
        let s = solve_lp(&b.build().cast::<f32>()).unwrap();
        assert!((s.objective + 36.0).abs() < 1e-4);
    }
}
