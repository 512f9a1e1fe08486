//! Sparse linear program in bounded-row form:
//! minimize `c·x + offset` subject to `row_lo ≤ A x ≤ row_hi`, `lo ≤ x ≤ hi`.

use crate::scalar::Real;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct LpInstance<T: Real = f64> {
    pub var_names: Vec<String>,
    pub cost: Vec<T>,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
    pub integer: Vec<bool>,
    pub row_names: Vec<String>,
    pub row_lower: Vec<T>,
    pub row_upper: Vec<T>,
    /// Column-major storage.
    pub col_start: Vec<usize>,
    pub col_rows: Vec<usize>,
    pub col_vals: Vec<T>,
    pub offset: T,
}

/// Incremental row-wise builder; converted to column storage by `build`.
#[derive(Debug, Clone, Default)]
pub struct LpBuilder {
    var_names: Vec<String>,
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    integer: Vec<bool>,
    row_names: Vec<String>,
    row_lower: Vec<f64>,
    row_upper: Vec<f64>,
    entries: Vec<(usize, usize, f64)>,
    offset: f64,
}

impl LpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64, integer: bool) -> usize {
        self.var_names.push(name.into());
        self.lower.push(lower);
        self.upper.push(upper);
        self.cost.push(cost);
        self.integer.push(integer);
        self.var_names.len() - 1
    }

    pub fn add_row(&mut self, name: impl Into<String>, lower: f64, upper: f64, coeffs: &[(usize, f64)]) -> usize {
        let r = self.row_names.len();
        self.row_names.push(name.into());
        self.row_lower.push(lower);
        self.row_upper.push(upper);
        for &(j, v) in coeffs {
            if v != 0.0 {
                self.entries.push((r, j, v));
            }
        }
        r
    }

    pub fn add_offset(&mut self, v: f64) {
        self.offset += v;
    }

    pub fn n_vars(&self) -> usize {
        self.var_names.len()
    }

    pub fn n_rows(&self) -> usize {
        self.row_names.len()
    }

    pub fn build(mut self) -> LpInstance<f64> {
        let n = self.var_names.len();
        self.entries.sort_by_key(|&(r, j, _)| (j, r));
        let mut col_start = vec![0usize; n + 1];
        let mut col_rows = Vec::with_capacity(self.entries.len());
        let mut col_vals = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, j, v) in &self.entries {
            if last == Some((r, j)) {
                *col_vals.last_mut().expect("entry") += v;
                continue;
            }
            col_start[j + 1] += 1;
            col_rows.push(r);
            col_vals.push(v);
            last = Some((r, j));
        }
        for j in 0..n {
            col_start[j + 1] += col_start[j];
        }
        LpInstance {
            var_names: self.var_names,
            cost: self.cost,
            lower: self.lower,
            upper: self.upper,
            integer: self.integer,
            row_names: self.row_names,
            row_lower: self.row_lower,
            row_upper: self.row_upper,
            col_start,
            col_rows,
            col_vals,
            offset: self.offset,
        }
    }
}

/// A constraint or bound the point violates.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub name: String,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

impl<T: Real> LpInstance<T> {
    pub fn n_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn n_rows(&self) -> usize {
        self.row_lower.len()
    }

    pub fn nnz(&self) -> usize {
        self.col_vals.len()
    }

    pub fn column(&self, j: usize) -> (&[usize], &[T]) {
        let (a, b) = (self.col_start[j], self.col_start[j + 1]);
        (&self.col_rows[a..b], &self.col_vals[a..b])
    }

    pub fn n_integer(&self) -> usize {
        self.integer.iter().filter(|b| **b).count()
    }

    pub fn objective(&self, x: &[T]) -> T {
        self.cost.iter().zip(x).map(|(c, v)| *c * *v).sum::<T>() + self.offset
    }

    pub fn row_activity(&self, x: &[T]) -> Vec<T> {
        let mut act = vec![T::zero(); self.n_rows()];
        for (j, xj) in x.iter().enumerate() {
            if xj.is_zero() {
                continue;
            }
            let (rows, vals) = self.column(j);
            for (r, v) in rows.iter().zip(vals) {
                act[*r] += *v * *xj;
            }
        }
        act
    }

    /// Every bound and row violated by more than `tol` (absolute).
    pub fn violations(&self, x: &[T], tol: f64) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |name: &str, v: T, lo: T, hi: T| {
            let (v, lo, hi) = (v.as_f64(), lo.as_f64(), hi.as_f64());
            if v < lo - tol || v > hi + tol || !v.is_finite() {
                out.push(Violation { name: name.to_string(), value: v, lower: lo, upper: hi });
            }
        };
        for j in 0..self.n_vars() {
            push(&self.var_names[j], x[j], self.lower[j], self.upper[j]);
        }
        for (i, a) in self.row_activity(x).into_iter().enumerate() {
            push(&self.row_names[i], a, self.row_lower[i], self.row_upper[i]);
        }
        out
    }

    pub fn cast<U: Real>(&self) -> LpInstance<U> {
        let c = |v: &Vec<T>| v.iter().map(|x| U::lit(x.as_f64())).collect::<Vec<U>>();
        LpInstance {
            var_names: self.var_names.clone(),
            cost: c(&self.cost),
            lower: c(&self.lower),
            upper: c(&self.upper),
            integer: self.integer.clone(),
            row_names: self.row_names.clone(),
            row_lower: c(&self.row_lower),
            row_upper: c(&self.row_upper),
            col_start: self.col_start.clone(),
            col_rows: self.col_rows.clone(),
            col_vals: c(&self.col_vals),
            offset: U::lit(self.offset.as_f64()),
        }
    }

    /// Plain-text dump in CPLEX LP format. Ranged rows are written as two
    /// one-sided rows.
    pub fn to_lp_format(&self) -> String {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.n_rows()];
        for j in 0..self.n_vars() {
            let (r, v) = self.column(j);
            for (ri, vi) in r.iter().zip(v) {
                rows[*ri].push((j, vi.as_f64()));
            }
        }
        let name = |j: usize| lp_name(&self.var_names[j]);
        let mut s = String::new();
        s.push_str("\\ voltreg dispatch instance\nMinimize\n obj:");
        let mut any = false;
        for (j, c) in self.cost.iter().enumerate() {
            let c = c.as_f64();
            if c != 0.0 {
                let _ = write!(s, " {} {}", signed(c), name(j));
                any = true;
            }
        }
        let off = self.offset.as_f64();
        if off != 0.0 || !any {
            let _ = write!(s, " {} constant", signed(off));
        }
        s.push_str("\nSubject To\n");
        for (i, coeffs) in rows.iter().enumerate() {
            let (lo, hi) = (self.row_lower[i].as_f64(), self.row_upper[i].as_f64());
            let mut expr = String::new();
            for (j, v) in coeffs {
                let _ = write!(expr, " {} {}", signed(*v), name(*j));
            }
            if expr.is_empty() {
                expr.push_str(" 0 constant");
            }
            let rn = lp_name(&self.row_names[i]);
            if lo == hi {
                let _ = writeln!(s, " {rn}:{expr} = {}", fmt_num(lo));
            } else {
                if lo.is_finite() {
                    let _ = writeln!(s, " {rn}_lo:{expr} >= {}", fmt_num(lo));
                }
                if hi.is_finite() {
                    let _ = writeln!(s, " {rn}_hi:{expr} <= {}", fmt_num(hi));
                }
            }
        }
        s.push_str("Bounds\n");
        for j in 0..self.n_vars() {
            let (lo, hi) = (self.lower[j].as_f64(), self.upper[j].as_f64());
            let n = name(j);
            match (lo.is_finite(), hi.is_finite()) {
                (false, false) => {
                    let _ = writeln!(s, " {n} free");
                }
                (true, true) => {
                    let _ = writeln!(s, " {} <= {n} <= {}", fmt_num(lo), fmt_num(hi));
                }
                (true, false) => {
                    let _ = writeln!(s, " {n} >= {}", fmt_num(lo));
                }
                (false, true) => {
                    let _ = writeln!(s, " -inf <= {n} <= {}", fmt_num(hi));
                }
            }
        }
        s.push_str(" constant = 1\n");
        let ints: Vec<String> = (0..self.n_vars()).filter(|&j| self.integer[j]).map(name).collect();
        if !ints.is_empty() {
            s.push_str("General\n");
            for n in ints {
                let _ = writeln!(s, " {n}");
            }
        }
        s.push_str("End\n");
        s
    }

    pub fn write_lp_format(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(self.to_lp_format().as_bytes())?;
        f.flush()
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v:e}")
}

fn signed(v: f64) -> String {
    if v < 0.0 {
        format!("- {:e}", -v)
    } else {
        format!("+ {v:e}")
    }
}

fn lp_name(n: &str) -> String {
    let mut s: String = n
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "_.".contains(c) { c } else { '_' })
        .collect();
    if s.chars().next().map_or(true, |c| c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E') {
        s.insert(0, 'x');
    }
    s
}
