//! On-disk JSON layout of a feeder description.
//!
//! Complex numbers are written as `[re, im]` pairs. Impedances of lines are
//! total ohms for the segment; transformer impedances are per-unit on the
//! system base.

use super::Phase;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeederFile {
    #[serde(default)]
    pub name: String,
    pub bases: BasesRecord,
    pub source: SourceRecord,
    pub buses: Vec<BusRecord>,
    #[serde(default)]
    pub branches: Vec<BranchRecord>,
    #[serde(default)]
    pub transformers: Vec<TransformerRecord>,
    #[serde(default)]
    pub loads: Vec<LoadRecord>,
    #[serde(default)]
    pub pv: Vec<PvRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasesRecord {
    /// Single-phase power base.
    pub s_base_kva: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceRecord {
    pub bus: String,
    /// Per-phase magnitude, phases of the source bus in A<B<C order.
    pub v_pu: Vec<f64>,
    pub angle_deg: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusRecord {
    pub id: String,
    pub phases: Vec<Phase>,
    /// Line-to-neutral voltage base.
    pub v_base_kv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchRecord {
    pub id: String,
    pub from: String,
    pub to: String,
    pub phases: Vec<Phase>,
    pub z_ohm: Vec<Vec<Complex64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_shunt_s: Option<Vec<Vec<Complex64>>>,
    #[serde(default)]
    pub length_km: f64,
}

fn default_tau_min() -> i32 {
    -16
}
fn default_tau_max() -> i32 {
    16
}
fn default_a_max() -> f64 {
    1.1
}
fn default_true() -> bool {
    true
}
fn default_delta_to() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformerRecord {
    pub id: String,
    pub primary: String,
    pub secondary: String,
    pub phases: Vec<Phase>,
    pub z_t_pu: Complex64,
    #[serde(default = "default_tau_min")]
    pub tau_min: i32,
    #[serde(default = "default_tau_max")]
    pub tau_max: i32,
    #[serde(default = "default_a_max")]
    pub a_max: f64,
    #[serde(default = "default_true")]
    pub ganged: bool,
    #[serde(default = "default_delta_to")]
    pub delta_to_max: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadRecord {
    pub id: String,
    pub bus: String,
    pub phase: Phase,
    pub p_kw: f64,
    pub q_kvar: f64,
    pub profile: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PvRecord {
    pub id: String,
    pub bus: String,
    pub phase: Phase,
    pub dc_kw: f64,
    pub si_kva: f64,
    pub profile: String,
    #[serde(default)]
    pub allow_curtailment: bool,
}
