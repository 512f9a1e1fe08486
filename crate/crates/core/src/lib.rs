//! Coordinated OLTC and smart-inverter voltage regulation for unbalanced
//! distribution feeders.
//!
//! Numerical code is generic over [`scalar::Real`]; the aliases below fix
//! it to `f64`.

pub mod controllers;
pub mod datasets;
pub mod harness;
pub mod linalg;
pub mod linmodel;
pub mod netmodel;
pub mod optimizer;
pub mod powerflow;
pub mod scalar;

pub use harness::{Method, Scenario};
pub use netmodel::FeederModel;

pub type OperatingPoint = powerflow::OperatingPoint<f64>;
pub type PowerFlow<'m> = powerflow::PowerFlow<'m, f64>;
pub type FactorizedNetwork = powerflow::FactorizedNetwork<f64>;
pub type SensitivityModel = linmodel::SensitivityModel<f64>;
pub type InjectionResponse = linmodel::InjectionResponse<f64>;
pub type LpInstance = optimizer::LpInstance<f64>;
