use crate::controllers::{AvrOltcSettings, VoltVarCurve};
pub use crate::optimizer::Weights;
use crate::netmodel::{load_feeder, load_profile, FeederModel, NetError, ProfileError, TimeSeriesProfile};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Avr,
    Ovr,
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "avr" => Ok(Method::Avr),
            "ovr" => Ok(Method::Ovr),
            other => Err(format!("unknown method `{other}` (expected avr or ovr)")),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Avr => "avr",
            Method::Ovr => "ovr",
        })
    }
}

/// A profile file bound to an id, optionally scaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileRef {
    pub id: String,
    pub file: PathBuf,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

fn default_dt() -> f64 {
    30.0
}
fn default_horizon() -> usize {
    10
}
fn default_budget() -> f64 {
    30.0
}

/// Scenario file. Relative paths resolve against the scenario file's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub feeder: PathBuf,
    pub profiles: Vec<ProfileRef>,
    pub method: Method,
    #[serde(default)]
    pub start_step: usize,
    /// Number of simulated steps; the full profile length when absent.
    #[serde(default)]
    pub n_steps: Option<usize>,
    #[serde(default = "default_dt")]
    pub dt_s: f64,
    #[serde(default = "default_horizon")]
    pub horizon_steps: usize,
    /// Steps applied per optimization; defaults to the horizon.
    #[serde(default)]
    pub replan_steps: Option<usize>,
    #[serde(default)]
    pub weights: Weights,
    #[serde(default)]
    pub forecast_alpha: f64,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub volt_var: VoltVarCurve,
    #[serde(default)]
    pub avr: AvrOltcSettings,
    /// Initial tap per OLTC; settled by the AVR rule at the first step when absent.
    #[serde(default)]
    pub initial_taps: Option<Vec<i32>>,
    #[serde(default = "default_budget")]
    pub milp_time_budget_s: f64,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed scenario {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Feeder(#[from] NetError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

/// Feeder and profiles resolved from a scenario.
#[derive(Debug, Clone)]
pub struct ScenarioData {
    pub model: FeederModel,
    pub profiles: BTreeMap<String, TimeSeriesProfile>,
}

impl Scenario {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let p = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: p.clone(), source })?;
        let mut s: Scenario = serde_json::from_str(&text).map_err(|source| ScenarioError::Parse { path: p, source })?;
        s.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::Invalid(m.into()));
        if !(self.dt_s.is_finite() && self.dt_s > 0.0) {
            return bad("dt_s must be positive");
        }
        if !(self.forecast_alpha.is_finite() && self.forecast_alpha >= 0.0) {
            return bad("forecast_alpha must be non-negative");
        }
        if self.horizon_steps == 0 {
            return bad("horizon_steps must be at least 1");
        }
        if let Some(r) = self.replan_steps {
            if r == 0 || r > self.horizon_steps {
                return bad("replan_steps must lie in 1..=horizon_steps");
            }
        }
        if self.weights.w1 < 0.0 || self.weights.w2 < 0.0 {
            return bad("weights must be non-negative");
        }
        self.volt_var.validate().map_err(ScenarioError::Invalid)?;
        self.avr.validate().map_err(ScenarioError::Invalid)?;
        Ok(())
    }

    pub fn replan(&self) -> usize {
        self.replan_steps.unwrap_or(self.horizon_steps)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Loads the feeder and every referenced profile; checks that all profile
    /// ids used by the feeder are provided.
    pub fn load_data(&self) -> Result<ScenarioData, ScenarioError> {
        let model = load_feeder(self.resolve(&self.feeder))?;
        let mut cache: BTreeMap<PathBuf, TimeSeriesProfile> = BTreeMap::new();
        let mut profiles = BTreeMap::new();
        for r in &self.profiles {
            let path = self.resolve(&r.file);
            let base = match cache.get(&path) {
                Some(p) => p.clone(),
                None => {
                    let p = load_profile(&r.id, &path)?;
                    cache.insert(path, p.clone());
                    p
                }
            };
            if profiles.insert(r.id.clone(), base.scaled(r.id.clone(), r.scale)).is_some() {
                return Err(ScenarioError::Invalid(format!("profile `{}` declared twice", r.id)));
            }
        }
        for id in model.profile_ids() {
            let Some(p) = profiles.get(&id) else {
                return Err(ScenarioError::Invalid(format!("profile `{id}` used by the feeder is not declared")));
            };
            if (p.dt_s - self.dt_s).abs() > 1e-9 {
                return Err(ScenarioError::Invalid(format!(
                    "profile `{id}` has a {} s step, scenario uses {} s",
                    p.dt_s, self.dt_s
                )));
            }
        }
        if let Some(t) = &self.initial_taps {
            if t.len() != model.oltcs.len() {
                return Err(ScenarioError::Invalid("initial_taps must list one tap per OLTC".into()));
            }
        }
        Ok(ScenarioData { model, profiles })
    }
}

impl ScenarioData {
    /// Shortest profile length among profiles the feeder uses.
    pub fn profile_len(&self) -> usize {
        self.model
            .profile_ids()
            .iter()
            .filter_map(|id| self.profiles.get(id))
            .map(|p| p.len())
            .min()
            .unwrap_or(1)
    }
}
