//! Feeder data model: buses, phase nodes, branches, tap changers, loads and
//! PV units, plus ingestion of feeder files and time-series profiles.

mod profile;
pub mod schema;

pub use profile::{load_profile, write_profile, ProfileError, TimeSeriesProfile};
pub use schema::FeederFile;

use num_complex::Complex64;
use schema::*;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    /// Nominal angle of the positive-sequence set, degrees.
    pub fn nominal_angle_deg(self) -> f64 {
        match self {
            Phase::A => 0.0,
            Phase::B => -120.0,
            Phase::C => 120.0,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Phase::A => "A",
            Phase::B => "B",
            Phase::C => "C",
        };
        f.write_str(s)
    }
}

/// One phase conductor of one bus: a row/column of the admittance matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NodeRef {
    pub bus: String,
    pub phase: Phase,
    pub index: usize,
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.bus, self.phase)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: String,
    pub phases: Vec<Phase>,
    pub v_base_kv: f64,
    /// Global node indices, aligned with `phases`.
    pub nodes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub id: String,
    pub from: String,
    pub to: String,
    pub phases: Vec<Phase>,
    pub z_ohm: Vec<Vec<Complex64>>,
    pub y_shunt_s: Option<Vec<Vec<Complex64>>>,
    pub length_km: f64,
    pub from_nodes: Vec<usize>,
    pub to_nodes: Vec<usize>,
    /// Impedance base of the segment, ohms.
    pub z_base_ohm: f64,
}

/// On-load tap changer. A ganged device drives all of its phases with one
/// integer tap position.
#[derive(Debug, Clone, PartialEq)]
pub struct OltcDevice {
    pub id: String,
    pub primary_bus: String,
    pub secondary_bus: String,
    pub phases: Vec<Phase>,
    pub primary_nodes: Vec<usize>,
    pub secondary_nodes: Vec<usize>,
    pub z_t: Complex64,
    pub tau_min: i32,
    pub tau_max: i32,
    pub a_max: f64,
    pub ganged: bool,
    pub delta_to_max: u32,
}

impl OltcDevice {
    /// Tap-ratio gained per tap step.
    pub fn step_ratio(&self) -> f64 {
        (self.a_max - 1.0) / self.tau_max as f64
    }

    /// Ratio for an integer (or relaxed) tap position.
    pub fn ratio(&self, tau: f64) -> f64 {
        1.0 + tau * self.step_ratio()
    }

    pub fn clamp_tap(&self, tau: i32) -> i32 {
        tau.clamp(self.tau_min, self.tau_max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadSpec {
    pub id: String,
    pub node: NodeRef,
    pub profile_id: String,
    pub base_p_kw: f64,
    pub base_q_kvar: f64,
    pub p_pu: f64,
    pub q_pu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PvUnit {
    pub id: String,
    pub node: NodeRef,
    pub dc_kw: f64,
    pub si_kva: f64,
    pub profile_id: String,
    pub allow_curtailment: bool,
}

impl PvUnit {
    /// Available reactive power for a given real output, both kW/kvar.
    /// Real output above the inverter rating is clipped.
    pub fn q_available_kvar(&self, p_kw: f64) -> f64 {
        let p = p_kw.clamp(0.0, self.si_kva);
        (self.si_kva * self.si_kva - p * p).max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Source {
    pub bus: String,
    pub v_pu: Vec<f64>,
    pub angle_deg: Vec<f64>,
    /// Slack node indices aligned with the magnitudes.
    pub nodes: Vec<usize>,
}

impl Source {
    pub fn phasors(&self) -> Vec<Complex64> {
        self.v_pu
            .iter()
            .zip(&self.angle_deg)
            .map(|(&m, &a)| Complex64::from_polar(m, a.to_radians()))
            .collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("cannot read feeder file: {0}")]
    Io(#[from] std::io::Error),
    #[error("feeder file does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("schema violation at `{field}`: {reason}")]
    Schema { field: String, reason: String },
    #[error("duplicate node {bus}.{phase}")]
    DuplicateNode { bus: String, phase: Phase },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("feeder graph is disconnected: bus `{0}` is unreachable from the source")]
    Disconnected(String),
}

fn schema(field: impl Into<String>, reason: impl Into<String>) -> NetError {
    NetError::Schema { field: field.into(), reason: reason.into() }
}

/// Validated, immutable feeder description.
#[derive(Debug, Clone, PartialEq)]
pub struct FeederModel {
    pub name: String,
    pub s_base_kva: f64,
    pub buses: Vec<Bus>,
    pub nodes: Vec<NodeRef>,
    pub branches: Vec<Branch>,
    pub oltcs: Vec<OltcDevice>,
    pub loads: Vec<LoadSpec>,
    pub pv_units: Vec<PvUnit>,
    pub source: Source,
}

/// Reads and validates a feeder JSON file.
pub fn load_feeder(path: impl AsRef<Path>) -> Result<FeederModel, NetError> {
    let text = std::fs::read_to_string(path)?;
    FeederModel::from_json(&text)
}

/// Deterministic node ordering: bus declaration order, phases A<B<C.
pub fn node_ordering(model: &FeederModel) -> Vec<NodeRef> {
    model.nodes.clone()
}

impl FeederModel {
    pub fn from_json(text: &str) -> Result<Self, NetError> {
        let file: FeederFile = serde_json::from_str(text)?;
        Self::from_file(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("feeder serializes")
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn bus(&self, id: &str) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    /// Index of the node `(bus, phase)`.
    pub fn node_index(&self, bus: &str, phase: Phase) -> Option<usize> {
        let b = self.bus(bus)?;
        b.phases.iter().position(|&p| p == phase).map(|k| b.nodes[k])
    }

    pub fn is_slack(&self, node: usize) -> bool {
        self.source.nodes.contains(&node)
    }

    /// Non-slack node indices in global order.
    pub fn non_slack_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&i| !self.is_slack(i)).collect()
    }

    pub fn kw_to_pu(&self, kw: f64) -> f64 {
        kw / self.s_base_kva
    }

    pub fn pu_to_kw(&self, pu: f64) -> f64 {
        pu * self.s_base_kva
    }

    pub fn from_file(file: FeederFile) -> Result<Self, NetError> {
        if !(file.bases.s_base_kva.is_finite() && file.bases.s_base_kva > 0.0) {
            return Err(schema("bases.s_base_kva", "must be positive"));
        }
        let s_base = file.bases.s_base_kva;

        let mut buses = Vec::with_capacity(file.buses.len());
        let mut nodes = Vec::new();
        let mut bus_pos: HashMap<String, usize> = HashMap::new();
        for (k, b) in file.buses.iter().enumerate() {
            if b.id.is_empty() {
                return Err(schema(format!("buses[{k}].id"), "empty id"));
            }
            if bus_pos.insert(b.id.clone(), k).is_some() {
                return Err(NetError::DuplicateId(b.id.clone()));
            }
            if b.phases.is_empty() {
                return Err(schema(format!("buses[{k}].phases"), "no phases"));
            }
            if !(b.v_base_kv.is_finite() && b.v_base_kv > 0.0) {
                return Err(schema(format!("buses[{k}].v_base_kv"), "must be positive"));
            }
            let mut seen = HashSet::new();
            for &p in &b.phases {
                if !seen.insert(p) {
                    return Err(NetError::DuplicateNode { bus: b.id.clone(), phase: p });
                }
            }
            let mut phases = b.phases.clone();
            phases.sort();
            let idx: Vec<usize> = phases
                .iter()
                .map(|&phase| {
                    let index = nodes.len();
                    nodes.push(NodeRef { bus: b.id.clone(), phase, index });
                    index
                })
                .collect();
            buses.push(Bus { id: b.id.clone(), phases, v_base_kv: b.v_base_kv, nodes: idx });
        }

        let lookup = |field: &str, bus: &str, phases: &[Phase]| -> Result<Vec<usize>, NetError> {
            let &k = bus_pos
                .get(bus)
                .ok_or_else(|| schema(field, format!("unknown bus `{bus}`")))?;
            phases
                .iter()
                .map(|&p| {
                    let b = &buses[k];
                    b.phases
                        .iter()
                        .position(|&q| q == p)
                        .map(|i| b.nodes[i])
                        .ok_or_else(|| schema(field, format!("bus `{bus}` has no phase {p}")))
                })
                .collect()
        };
        let check_phase_set = |field: &str, phases: &[Phase]| -> Result<(), NetError> {
            if phases.is_empty() {
                return Err(schema(field, "no phases"));
            }
            let set: HashSet<_> = phases.iter().collect();
            if set.len() != phases.len() {
                return Err(schema(field, "repeated phase"));
            }
            Ok(())
        };

        // source
        let src = &file.source;
        let src_nodes = {
            let &k = bus_pos
                .get(&src.bus)
                .ok_or_else(|| schema("source.bus", format!("unknown bus `{}`", src.bus)))?;
            buses[k].nodes.clone()
        };
        if src.v_pu.len() != src_nodes.len() || src.angle_deg.len() != src_nodes.len() {
            return Err(schema("source", "one magnitude and angle per source-bus phase required"));
        }
        if src.v_pu.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(schema("source.v_pu", "must be positive"));
        }
        let source = Source {
            bus: src.bus.clone(),
            v_pu: src.v_pu.clone(),
            angle_deg: src.angle_deg.clone(),
            nodes: src_nodes,
        };

        let mut ids = HashSet::new();
        let mut branches = Vec::with_capacity(file.branches.len());
        for (k, br) in file.branches.iter().enumerate() {
            let f = format!("branches[{k}]");
            if !ids.insert(br.id.clone()) {
                return Err(NetError::DuplicateId(br.id.clone()));
            }
            check_phase_set(&format!("{f}.phases"), &br.phases)?;
            if br.from == br.to {
                return Err(schema(&f, "branch connects a bus to itself"));
            }
            let n = br.phases.len();
            check_square(&format!("{f}.z_ohm"), &br.z_ohm, n)?;
            if !is_symmetric(&br.z_ohm) {
                return Err(schema(format!("{f}.z_ohm"), "series impedance matrix must be symmetric"));
            }
            if let Some(y) = &br.y_shunt_s {
                check_square(&format!("{f}.y_shunt_s"), y, n)?;
            }
            if br.length_km < 0.0 || !br.length_km.is_finite() {
                return Err(schema(format!("{f}.length_km"), "must be non-negative"));
            }
            let from_nodes = lookup(&format!("{f}.from"), &br.from, &br.phases)?;
            let to_nodes = lookup(&format!("{f}.to"), &br.to, &br.phases)?;
            let vb = buses[bus_pos[&br.from]].v_base_kv;
            let vb_to = buses[bus_pos[&br.to]].v_base_kv;
            if ((vb - vb_to) / vb).abs() > 1e-9 {
                return Err(schema(&f, "line connects buses with different voltage bases"));
            }
            branches.push(Branch {
                id: br.id.clone(),
                from: br.from.clone(),
                to: br.to.clone(),
                phases: br.phases.clone(),
                z_ohm: br.z_ohm.clone(),
                y_shunt_s: br.y_shunt_s.clone(),
                length_km: br.length_km,
                from_nodes,
                to_nodes,
                z_base_ohm: vb * vb * 1000.0 / s_base,
            });
        }

        let mut oltcs = Vec::new();
        for (k, t) in file.transformers.iter().enumerate() {
            let f = format!("transformers[{k}]");
            if !ids.insert(t.id.clone()) {
                return Err(NetError::DuplicateId(t.id.clone()));
            }
            check_phase_set(&format!("{f}.phases"), &t.phases)?;
            if t.tau_max <= 0 {
                return Err(schema(format!("{f}.tau_max"), "must be positive"));
            }
            if t.tau_min > 0 {
                return Err(schema(format!("{f}.tau_min"), "must not be positive"));
            }
            if !(t.a_max.is_finite() && t.a_max > 1.0) {
                return Err(schema(format!("{f}.a_max"), "must exceed 1"));
            }
            if t.z_t_pu.norm() == 0.0 || !t.z_t_pu.norm().is_finite() {
                return Err(schema(format!("{f}.z_t_pu"), "must be non-zero"));
            }
            if t.primary == t.secondary {
                return Err(schema(&f, "primary and secondary are the same bus"));
            }
            let pn = lookup(&format!("{f}.primary"), &t.primary, &t.phases)?;
            let sn = lookup(&format!("{f}.secondary"), &t.secondary, &t.phases)?;
            let make = |id: String, phases: Vec<Phase>, p: Vec<usize>, s: Vec<usize>| OltcDevice {
                id,
                primary_bus: t.primary.clone(),
                secondary_bus: t.secondary.clone(),
                phases,
                primary_nodes: p,
                secondary_nodes: s,
                z_t: t.z_t_pu,
                tau_min: t.tau_min,
                tau_max: t.tau_max,
                a_max: t.a_max,
                ganged: t.ganged,
                delta_to_max: t.delta_to_max,
            };
            if t.ganged || t.phases.len() == 1 {
                oltcs.push(make(t.id.clone(), t.phases.clone(), pn, sn));
            } else {
                // independent phases become separate devices
                for (i, &ph) in t.phases.iter().enumerate() {
                    oltcs.push(make(format!("{}.{}", t.id, ph), vec![ph], vec![pn[i]], vec![sn[i]]));
                }
            }
        }

        let mut loads = Vec::with_capacity(file.loads.len());
        for (k, l) in file.loads.iter().enumerate() {
            let f = format!("loads[{k}]");
            if !ids.insert(l.id.clone()) {
                return Err(NetError::DuplicateId(l.id.clone()));
            }
            if !(l.p_kw.is_finite() && l.q_kvar.is_finite()) {
                return Err(schema(&f, "non-finite power"));
            }
            let node = lookup(&format!("{f}.bus"), &l.bus, &[l.phase])?[0];
            if source.nodes.contains(&node) {
                return Err(schema(&f, "loads cannot sit on the source bus"));
            }
            loads.push(LoadSpec {
                id: l.id.clone(),
                node: nodes[node].clone(),
                profile_id: l.profile.clone(),
                base_p_kw: l.p_kw,
                base_q_kvar: l.q_kvar,
                p_pu: l.p_kw / s_base,
                q_pu: l.q_kvar / s_base,
            });
        }

        let mut pv_units = Vec::with_capacity(file.pv.len());
        for (k, p) in file.pv.iter().enumerate() {
            let f = format!("pv[{k}]");
            if !ids.insert(p.id.clone()) {
                return Err(NetError::DuplicateId(p.id.clone()));
            }
            if !(p.si_kva.is_finite() && p.si_kva >= 0.0) {
                return Err(schema(format!("{f}.si_kva"), "must be non-negative"));
            }
            if !(p.dc_kw.is_finite() && p.dc_kw >= 0.0) {
                return Err(schema(format!("{f}.dc_kw"), "must be non-negative"));
            }
            if p.allow_curtailment {
                return Err(schema(format!("{f}.allow_curtailment"), "real power curtailment is not supported"));
            }
            let node = lookup(&format!("{f}.bus"), &p.bus, &[p.phase])?[0];
            if source.nodes.contains(&node) {
                return Err(schema(&f, "PV units cannot sit on the source bus"));
            }
            pv_units.push(PvUnit {
                id: p.id.clone(),
                node: nodes[node].clone(),
                dc_kw: p.dc_kw,
                si_kva: p.si_kva,
                profile_id: p.profile.clone(),
                allow_curtailment: false,
            });
        }

        let model = FeederModel {
            name: file.name.clone(),
            s_base_kva: s_base,
            buses,
            nodes,
            branches,
            oltcs,
            loads,
            pv_units,
            source,
        };
        model.check_connected()?;
        Ok(model)
    }

    fn check_connected(&self) -> Result<(), NetError> {
        let pos: HashMap<&str, usize> = self.buses.iter().enumerate().map(|(i, b)| (b.id.as_str(), i)).collect();
        let mut adj = vec![Vec::new(); self.buses.len()];
        let edges = self
            .branches
            .iter()
            .map(|b| (&b.from, &b.to))
            .chain(self.oltcs.iter().map(|t| (&t.primary_bus, &t.secondary_bus)));
        for (a, b) in edges {
            let (i, j) = (pos[a.as_str()], pos[b.as_str()]);
            adj[i].push(j);
            adj[j].push(i);
        }
        let start = pos[self.source.bus.as_str()];
        let mut seen = vec![false; self.buses.len()];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(k) => Err(NetError::Disconnected(self.buses[k].id.clone())),
            None => Ok(()),
        }
    }

    /// Serializable form; parsing it back yields an identical model.
    pub fn to_file(&self) -> FeederFile {
        FeederFile {
            name: self.name.clone(),
            bases: BasesRecord { s_base_kva: self.s_base_kva },
            source: SourceRecord {
                bus: self.source.bus.clone(),
                v_pu: self.source.v_pu.clone(),
                angle_deg: self.source.angle_deg.clone(),
            },
            buses: self
                .buses
                .iter()
                .map(|b| BusRecord { id: b.id.clone(), phases: b.phases.clone(), v_base_kv: b.v_base_kv })
                .collect(),
            branches: self
                .branches
                .iter()
                .map(|b| BranchRecord {
                    id: b.id.clone(),
                    from: b.from.clone(),
                    to: b.to.clone(),
                    phases: b.phases.clone(),
                    z_ohm: b.z_ohm.clone(),
                    y_shunt_s: b.y_shunt_s.clone(),
                    length_km: b.length_km,
                })
                .collect(),
            transformers: self
                .oltcs
                .iter()
                .map(|t| TransformerRecord {
                    id: t.id.clone(),
                    primary: t.primary_bus.clone(),
                    secondary: t.secondary_bus.clone(),
                    phases: t.phases.clone(),
                    z_t_pu: t.z_t,
                    tau_min: t.tau_min,
                    tau_max: t.tau_max,
                    a_max: t.a_max,
                    ganged: t.ganged,
                    delta_to_max: t.delta_to_max,
                })
                .collect(),
            loads: self
                .loads
                .iter()
                .map(|l| LoadRecord {
                    id: l.id.clone(),
                    bus: l.node.bus.clone(),
                    phase: l.node.phase,
                    p_kw: l.base_p_kw,
                    q_kvar: l.base_q_kvar,
                    profile: l.profile_id.clone(),
                })
                .collect(),
            pv: self
                .pv_units
                .iter()
                .map(|p| PvRecord {
                    id: p.id.clone(),
                    bus: p.node.bus.clone(),
                    phase: p.node.phase,
                    dc_kw: p.dc_kw,
                    si_kva: p.si_kva,
                    profile: p.profile_id.clone(),
                    allow_curtailment: p.allow_curtailment,
                })
                .collect(),
        }
    }

    /// Total nominal load apparent power, kVA.
    pub fn peak_load_kva(&self) -> f64 {
        let p: f64 = self.loads.iter().map(|l| l.base_p_kw).sum();
        let q: f64 = self.loads.iter().map(|l| l.base_q_kvar).sum();
        p.hypot(q)
    }

    /// Profile ids referenced by loads and PV units, sorted and deduplicated.
    pub fn profile_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .loads
            .iter()
            .map(|l| l.profile_id.clone())
            .chain(self.pv_units.iter().map(|p| p.profile_id.clone()))
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }
}

fn check_square(field: &str, m: &[Vec<Complex64>], n: usize) -> Result<(), NetError> {
    if m.len() != n || m.iter().any(|r| r.len() != n) {
        return Err(schema(field, format!("expected a {n}x{n} matrix matching the phase list")));
    }
    if m.iter().flatten().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(schema(field, "non-finite entry"));
    }
    Ok(())
}

fn is_symmetric(m: &[Vec<Complex64>]) -> bool {
    let n = m.len();
    (0..n).all(|i| {
        (0..i).all(|j| {
            let d = (m[i][j] - m[j][i]).norm();
            d <= 1e-12 * (1.0 + m[i][j].norm())
        })
    })
}
