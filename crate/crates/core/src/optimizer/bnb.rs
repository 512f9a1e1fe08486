//! Best-bound branch-and-bound over the integer-marked variables of an
//! [`LpInstance`], with warm-started LP relaxations.

use super::lp::LpInstance;
use super::simplex::{solve_lp_with, BasisState, LpError, SimplexOptions};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MipOptions {
    pub rel_gap: f64,
    pub abs_gap: f64,
    pub int_tol: f64,
    pub time_budget: Option<Duration>,
    pub max_nodes: usize,
}

impl Default for MipOptions {
    fn default() -> Self {
        Self { rel_gap: 1e-9, abs_gap: 1e-9, int_tol: 1e-6, time_budget: None, max_nodes: 100_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MipStatus {
    Optimal,
    /// Stopped on time or node budget with the reported gap.
    Budget,
    /// No integer solution found beyond the supplied fallback.
    Fallback,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct NodeLog {
    pub node: usize,
    pub depth: usize,
    pub bound: f64,
    pub incumbent: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MipResult {
    pub x: Vec<f64>,
    pub objective: f64,
    pub bound: f64,
    pub gap: f64,
    pub root_relaxation: f64,
    pub status: MipStatus,
    pub nodes: usize,
    pub log: Vec<NodeLog>,
    /// Final basis of the root relaxation, reusable as a warm start for a
    /// program with the same layout.
    pub root_basis: Option<BasisState<f64>>,
}

pub fn write_node_log(log: &[NodeLog], path: impl AsRef<Path>) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "node,depth,bound,incumbent,gap")?;
    for r in log {
        writeln!(f, "{},{},{:e},{:e},{:e}", r.node, r.depth, r.bound, r.incumbent, r.gap)?;
    }
    f.flush()
}

struct Node {
    id: usize,
    depth: usize,
    bound: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
    basis: Option<BasisState<f64>>,
}

impl PartialEq for Node {
    fn eq(&self, o: &Self) -> bool {
        self.id == o.id
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Node {
    // max-heap: smaller bound first, then smaller id
    fn cmp(&self, o: &Self) -> Ordering {
        o.bound.total_cmp(&self.bound).then_with(|| o.id.cmp(&self.id))
    }
}

struct Incumbent {
    x: Vec<f64>,
    obj: f64,
    key: Vec<i64>,
}

/// Solves the instance to the configured gap. `fallback` gives integer values
/// for the integer variables that are known to be feasible; `tie_key`
/// orders integer solutions of equal objective (smaller wins).
pub fn branch_and_bound(
    lp: &LpInstance<f64>,
    opts: &MipOptions,
    fallback: Option<&[f64]>,
    tie_key: &dyn Fn(&[f64]) -> Vec<i64>,
) -> Result<MipResult, LpError> {
    branch_and_bound_from(lp, opts, fallback, tie_key, None)
}

/// As [`branch_and_bound`], starting the root relaxation from `root_warm`.
pub fn branch_and_bound_from(
    lp: &LpInstance<f64>,
    opts: &MipOptions,
    fallback: Option<&[f64]>,
    tie_key: &dyn Fn(&[f64]) -> Vec<i64>,
    root_warm: Option<&BasisState<f64>>,
) -> Result<MipResult, LpError> {
    let start = Instant::now();
    let sopts = SimplexOptions::for_precision::<f64>();
    let ints: Vec<usize> = (0..lp.n_vars()).filter(|&j| lp.integer[j]).collect();
    let mut work = lp.clone();
    let tie_tol = 1e-9;

    let mut inc: Option<Incumbent> = None;
    let consider = |inc: &mut Option<Incumbent>, x: Vec<f64>, obj: f64| {
        let key = tie_key(&x);
        let better = match inc {
            None => true,
            Some(i) => obj < i.obj - tie_tol || (obj <= i.obj + tie_tol && key < i.key),
        };
        if better {
            *inc = Some(Incumbent { x, obj, key });
        }
    };
    let solve_fixed = |work: &mut LpInstance<f64>, vals: &[f64], warm: Option<&BasisState<f64>>| {
        let saved: Vec<(f64, f64)> = ints.iter().map(|&j| (work.lower[j], work.upper[j])).collect();
        for (&j, v) in ints.iter().zip(vals) {
            work.lower[j] = *v;
            work.upper[j] = *v;
        }
        let r = solve_lp_with(work, &sopts, warm);
        for (&j, (l, u)) in ints.iter().zip(saved) {
            work.lower[j] = l;
            work.upper[j] = u;
        }
        r
    };

    if let Some(fb) = fallback {
        let vals: Vec<f64> = ints.iter().map(|&j| fb[j].round()).collect();
        if let Ok(s) = solve_fixed(&mut work, &vals, root_warm) {
            consider(&mut inc, s.x, s.objective);
        }
    }

    let root = match solve_lp_with(&work, &sopts, root_warm) {
        Err(_) if root_warm.is_some() => solve_lp_with(&work, &sopts, None),
        r => r,
    };
    let root = match root {
        Ok(r) => r,
        Err(e) => {
            return match inc {
                Some(i) => Ok(MipResult {
                    objective: i.obj,
                    x: i.x,
                    bound: f64::NEG_INFINITY,
                    gap: f64::INFINITY,
                    root_relaxation: f64::NAN,
                    status: MipStatus::Fallback,
                    nodes: 0,
                    log: Vec::new(),
                    root_basis: None,
                }),
                None => Err(e),
            }
        }
    };
    let root_relaxation = root.objective;
    let root_basis = Some(root.basis.clone());
    if !ints.is_empty() {
        // rounding heuristic at the root
        let vals: Vec<f64> = ints
            .iter()
            .map(|&j| root.x[j].round().clamp(lp.lower[j].ceil(), lp.upper[j].floor()))
            .collect();
        if let Ok(s) = solve_fixed(&mut work, &vals, Some(&root.basis)) {
            consider(&mut inc, s.x, s.objective);
        }
    }

    let mut heap: BinaryHeap<Node> = BinaryHeap::new();
    let mut next_id = 1usize;
    let mut log = Vec::new();
    let mut nodes = 0usize;
    let mut budget_hit = false;
    let gap_tol = |inc: &Option<Incumbent>| {
        inc.as_ref().map_or(f64::INFINITY, |i| i.obj - (opts.abs_gap.max(opts.rel_gap * i.obj.abs())))
    };
    let mut pending: Option<(Node, super::simplex::LpSolution<f64>)> = Some((
        Node { id: 0, depth: 0, bound: root.objective, lower: lp.lower.clone(), upper: lp.upper.clone(), basis: None },
        root,
    ));

    loop {
        let (node, sol) = match pending.take() {
            Some(p) => p,
            None => {
                let Some(node) = heap.pop() else { break };
                if node.bound >= gap_tol(&inc) {
                    continue;
                }
                if opts.time_budget.is_some_and(|b| start.elapsed() > b) || nodes >= opts.max_nodes {
                    heap.push(node);
                    budget_hit = true;
                    break;
                }
                work.lower.clone_from(&node.lower);
                work.upper.clone_from(&node.upper);
                let r = solve_lp_with(&work, &sopts, node.basis.as_ref());
                match r {
                    Ok(s) => (node, s),
                    Err(LpError::Infeasible { .. }) => {
                        nodes += 1;
                        log.push(NodeLog {
                            node: node.id,
                            depth: node.depth,
                            bound: f64::INFINITY,
                            incumbent: inc.as_ref().map_or(f64::INFINITY, |i| i.obj),
                            gap: f64::NAN,
                        });
                        continue;
                    }
                    Err(e) => return Err(e),
                }
            }
        };
        nodes += 1;
        let obj = sol.objective;
        let inc_obj = inc.as_ref().map_or(f64::INFINITY, |i| i.obj);
        log.push(NodeLog {
            node: node.id,
            depth: node.depth,
            bound: obj,
            incumbent: inc_obj,
            gap: rel_gap(inc_obj, obj),
        });
        if obj >= gap_tol(&inc) {
            continue;
        }
        // most fractional, ties to the lowest index
        let mut branch: Option<(usize, f64)> = None;
        for &j in &ints {
            let v = sol.x[j];
            let f = (v - v.round()).abs();
            if f > opts.int_tol && branch.map_or(true, |(_, bf)| f > bf + 1e-12) {
                branch = Some((j, f));
            }
        }
        match branch {
            None => {
                let vals: Vec<f64> = ints.iter().map(|&j| sol.x[j].round()).collect();
                work.lower.clone_from(&node.lower);
                work.upper.clone_from(&node.upper);
                match solve_fixed(&mut work, &vals, Some(&sol.basis)) {
                    Ok(s) => consider(&mut inc, s.x, s.objective),
                    Err(_) => consider(&mut inc, sol.x.clone(), obj),
                }
            }
            Some((j, _)) => {
                let v = sol.x[j];
                let mut down_hi = node.upper.clone();
                down_hi[j] = v.floor();
                let mut up_lo = node.lower.clone();
                up_lo[j] = v.ceil();
                let basis = Some(sol.basis);
                heap.push(Node {
                    id: next_id,
                    depth: node.depth + 1,
                    bound: obj,
                    lower: node.lower.clone(),
                    upper: down_hi,
                    basis: basis.clone(),
                });
                heap.push(Node { id: next_id + 1, depth: node.depth + 1, bound: obj, lower: up_lo, upper: node.upper, basis });
                next_id += 2;
            }
        }
    }

    let open_bound = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    match inc {
        Some(i) => {
            let bound = if budget_hit { open_bound.min(i.obj) } else { i.obj.min(open_bound).max(root_relaxation) };
            let bound = bound.min(i.obj);
            let status = if budget_hit { MipStatus::Budget } else { MipStatus::Optimal };
            Ok(MipResult {
                gap: rel_gap(i.obj, bound),
                objective: i.obj,
                x: i.x,
                bound,
                root_relaxation,
                status,
                nodes,
                log,
                root_basis,
            })
        }
        None => Err(LpError::Infeasible { name: "integer variables".into(), infeasibility: f64::NAN }),
    }
}

fn rel_gap(inc: f64, bound: f64) -> f64 {
    if !inc.is_finite() {
        return f64::INFINITY;
    }
    ((inc - bound).max(0.0)) / inc.abs().max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::lp::LpBuilder;

    fn no_key(_: &[f64]) -> Vec<i64> {
        Vec::new()
    }

    #[test]
    fn knapsack_like() {
        // max 5x + 4y s.t. 6x + 4y <= 24, x + 2y <= 6, integers -> (4, 0) = 20
        let mut b = LpBuilder::new();
        let x = b.add_var("x", 0.0, 10.0, -5.0, true);
        let y = b.add_var("y", 0.0, 10.0, -4.0, true);
        b.add_row("a", f64::NEG_INFINITY, 24.0, &[(x, 6.0), (y, 4.0)]);
        b.add_row("b", f64::NEG_INFINITY, 6.0, &[(x, 1.0), (y, 2.0)]);
        let lp = b.build();
        let r = branch_and_bound(&lp, &MipOptions::default(), None, &no_key).unwrap();
        assert!((r.objective + 20.0).abs() < 1e-9);
        assert!(r.root_relaxation <= r.objective + 1e-12);
        assert_eq!(r.status, MipStatus::Optimal);
    }

    #[test]
    fn no_integers_equals_lp() {
        let mut b = LpBuilder::new();
        let x = b.add_var("x", 0.0, 10.0, -1.0, false);
        b.add_row("a", f64::NEG_INFINITY, 2.5, &[(x, 1.0)]);
        let lp = b.build();
        let r = branch_and_bound(&lp, &MipOptions::default(), None, &no_key).unwrap();
        let s = crate::optimizer::simplex::solve_lp(&lp).unwrap();
        assert_eq!(r.objective, s.objective);
    }

    #[test]
    fn tie_key_selects_among_equal_optima() {
        // min |x - 0.5| over integer x: 0 and 1 tie; key prefers larger x
        let mut b = LpBuilder::new();
        let x = b.add_var("x", -3.0, 3.0, 0.0, true);
        let d = b.add_var("d", 0.0, f64::INFINITY, 1.0, false);
        b.add_row("p", -0.5, f64::INFINITY, &[(d, 1.0), (x, -1.0)]);
        b.add_row("m", 0.5, f64::INFINITY, &[(d, 1.0), (x, 1.0)]);
        let lp = b.build();
        let key = |v: &[f64]| vec![-(v[0].round() as i64)];
        let r = branch_and_bound(&lp, &MipOptions::default(), Some(&[0.0, 0.0]), &key).unwrap();
        assert!((r.objective - 0.5).abs() < 1e-12);
        assert_eq!(r.x[0].round(), 1.0);
    }
}
