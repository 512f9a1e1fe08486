use serde::Deserialize;
use std::io::Write;
use std::path::Path;

/// Uniformly sampled time series. Load profiles are multipliers on the
/// nominal load; PV profiles are absolute kW.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesProfile {
    pub id: String,
    pub start_s: f64,
    pub dt_s: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum ProfileError {
    #[error("cannot read profile {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed profile {path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("profile {id}: {reason}")]
    Invalid { id: String, reason: String },
}

#[derive(Debug, Deserialize)]
struct Row {
    timestamp: f64,
    value: f64,
}

impl TimeSeriesProfile {
    pub fn new(id: impl Into<String>, start_s: f64, dt_s: f64, values: Vec<f64>) -> Result<Self, ProfileError> {
        let id = id.into();
        if !(dt_s.is_finite() && dt_s > 0.0) {
            return Err(ProfileError::Invalid { id, reason: "time step must be positive".into() });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(ProfileError::Invalid { id, reason: format!("missing or non-finite value at step {k}") });
        }
        Ok(Self { id, start_s, dt_s, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, step: usize) -> f64 {
        self.start_s + step as f64 * self.dt_s
    }

    /// Value at `step`; the last sample is held past the end.
    pub fn at(&self, step: usize) -> f64 {
        match self.values.get(step) {
            Some(v) => *v,
            None => *self.values.last().unwrap_or(&0.0),
        }
    }

    pub fn scaled(&self, id: impl Into<String>, factor: f64) -> Self {
        Self {
            id: id.into(),
            start_s: self.start_s,
            dt_s: self.dt_s,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

/// Reads a `timestamp,value` CSV profile and checks uniform spacing.
pub fn load_profile(id: &str, path: impl AsRef<Path>) -> Result<TimeSeriesProfile, ProfileError> {
    let path_s = path.as_ref().display().to_string();
    let file = std::fs::File::open(path.as_ref()).map_err(|source| ProfileError::Io { path: path_s.clone(), source })?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr
        .headers()
        .map_err(|source| ProfileError::Csv { path: path_s.clone(), source })?
        .clone();
    if headers.len() != 2 || &headers[0] != "timestamp" || &headers[1] != "value" {
        return Err(ProfileError::Invalid { id: id.into(), reason: "header must be `timestamp,value`".into() });
    }
    let mut ts = Vec::new();
    let mut values = Vec::new();
    for row in rdr.deserialize() {
        let row: Row = row.map_err(|source| ProfileError::Csv { path: path_s.clone(), source })?;
        ts.push(row.timestamp);
        values.push(row.value);
    }
    if ts.is_empty() {
        return Err(ProfileError::Invalid { id: id.into(), reason: "no samples".into() });
    }
    let dt = if ts.len() > 1 { ts[1] - ts[0] } else { 1.0 };
    for (k, w) in ts.windows(2).enumerate() {
        let d = w[1] - w[0];
        if d <= 0.0 {
            return Err(ProfileError::Invalid { id: id.into(), reason: format!("timestamps not increasing at row {}", k + 1) });
        }
        if (d - dt).abs() > 1e-6 * dt.abs().max(1.0) {
            return Err(ProfileError::Invalid { id: id.into(), reason: format!("non-uniform spacing at row {}", k + 1) });
        }
    }
    TimeSeriesProfile::new(id, ts[0], dt, values)
}

/// Writes a profile as `timestamp,value` CSV with LF line endings.
pub fn write_profile(profile: &TimeSeriesProfile, path: impl AsRef<Path>) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "timestamp,value")?;
    for (k, v) in profile.values.iter().enumerate() {
        writeln!(out, "{},{}", profile.timestamp(k), v)?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let p = TimeSeriesProfile::new("x", 0.0, 30.0, vec![1.0, 0.5, 0.25]).unwrap();
        let path = dir.path().join("x.csv");
        write_profile(&p, &path).unwrap();
        assert_eq!(load_profile("x", &path).unwrap(), p);

        std::fs::write(&path, "timestamp,value\n0,1\n30,2\n90,3\n").unwrap();
        assert!(matches!(load_profile("x", &path), Err(ProfileError::Invalid { .. })));
        std::fs::write(&path, "timestamp,value\n0,1\n0,2\n").unwrap();
        assert!(matches!(load_profile("x", &path), Err(ProfileError::Invalid { .. })));
        std::fs::write(&path, "t,v\n0,1\n").unwrap();
        assert!(matches!(load_profile("x", &path), Err(ProfileError::Invalid { .. })));
        std::fs::write(&path, "timestamp,value\n0,1\n30,\n").unwrap();
        assert!(load_profile("x", &path).is_err());
    }
}
