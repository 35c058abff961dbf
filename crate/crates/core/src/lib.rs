//! Optimal internalisation/externalisation for a broker facing informed and
//! uninformed clients in an infinite-horizon linear-quadratic market model.
//!
//! * [`params`]: exogenous constants, validation, instantaneous state.
//! * [`closed_form`]: stationary strategies, value functions, HJB residuals.
//! * [`simulator`]: Monte Carlo verification of the closed forms.
//! * [`calibrator`]: interval backtest of the four-constant broker rule and
//!   its derivative-free calibration on trade tapes.
//! * [`experiments`]: parameter sweeps of the value functions.
//!
//! Everything numerical is generic over [`Real`] (`f32`/`f64`); the aliases
//! below fix the scalar to `f64`.

pub mod calibrator;
pub mod closed_form;
pub mod error;
pub mod experiments;
pub mod params;
pub mod scalar;
pub mod simulator;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Params = params::ModelParams<f64>;
pub type Validated = params::ValidatedParams<f64>;
pub type State = params::MarketState<f64>;
pub type InformedCoefficients = closed_form::InformedCoefficients<f64>;
pub type BrokerCoefficients = closed_form::BrokerCoefficients<f64>;
pub type Solution = closed_form::Solution<f64>;
pub type SimConfig = simulator::SimConfig<f64>;
pub type Policy = simulator::Policy<f64>;
pub type Estimate = simulator::Estimate<f64>;
pub type StrategyConstants = calibrator::StrategyConstants<f64>;
pub type SessionSet = calibrator::SessionSet<f64>;
pub type SweepSpec = experiments::SweepSpec<f64>;
pub type SurfaceTable = experiments::SurfaceTable<f64>;
