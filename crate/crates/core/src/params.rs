//! Exogenous model constants, their validation, and the instantaneous state.
//!
//! Parameters are addressed by flat string keys (`k_I`, `phi_B`, ...) so that
//! configuration files, command-line overrides and parameter sweeps all share
//! one vocabulary. A single `beta` key sets the common discount rate of both
//! agents.

use std::fmt::Write as _;
use std::ops::Deref;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Midprice and alpha-signal dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarketParams<T> {
    pub s0: T,
    pub alpha0: T,
    pub kappa_alpha: T,
    pub sigma_alpha: T,
    pub sigma_s: T,
}

/// Informed trader's impact, penalties and discount rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InformedParams<T> {
    pub k_i: T,
    pub a_i: T,
    pub phi_i: T,
    pub beta: T,
}

/// Broker's lit-market impact, client quote for uninformed flow, penalties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BrokerParams<T> {
    pub k_b: T,
    pub k_u: T,
    pub a_b: T,
    pub phi_b: T,
    pub b: T,
    pub beta: T,
}

/// Mean-reverting uninformed order flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowParams<T> {
    pub nu_u0: T,
    pub kappa_u: T,
    pub sigma_u: T,
    /// Scale the flow volatility by `(k_B - k_U) / (k_B - k_U_ref)`.
    pub elasticity_enabled: bool,
    pub k_u_ref: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams<T> {
    pub market: MarketParams<T>,
    pub informed: InformedParams<T>,
    pub broker: BrokerParams<T>,
    pub flow: FlowParams<T>,
}

/// Every configuration key, in canonical print order.
pub const PARAM_KEYS: &[&str] = &[
    "S0",
    "alpha0",
    "kappa_alpha",
    "sigma_alpha",
    "sigma_s",
    "k_I",
    "a_I",
    "phi_I",
    "beta",
    "k_B",
    "k_U",
    "a_B",
    "phi_B",
    "b",
    "nu_U0",
    "kappa_u",
    "sigma_U",
    "elasticity_enabled",
    "k_U_ref",
];

impl<T: Real> ModelParams<T> {
    /// Reference market: β = 0.01, κα = 5, σα = σs = 1, k_I = k_U = 1e-3,
    /// k_B = 1.2e-3, a_I = a_B = 1, φ_I = φ_B = 1e-2, κu = 15, σU = 100,
    /// S0 = 100, α0 = νU0 = 0, and b = 0.
    pub fn baseline() -> Self {
        let l = T::lit;
        Self {
            market: MarketParams {
                s0: l(100.0),
                alpha0: l(0.0),
                kappa_alpha: l(5.0),
                sigma_alpha: l(1.0),
                sigma_s: l(1.0),
            },
            informed: InformedParams {
                k_i: l(1.0e-3),
                a_i: l(1.0),
                phi_i: l(1.0e-2),
                beta: l(0.01),
            },
            broker: BrokerParams {
                k_b: l(1.2e-3),
                k_u: l(1.0e-3),
                a_b: l(1.0),
                phi_b: l(1.0e-2),
                b: l(0.0),
                beta: l(0.01),
            },
            flow: FlowParams {
                nu_u0: l(0.0),
                kappa_u: l(15.0),
                sigma_u: l(100.0),
                elasticity_enabled: false,
                k_u_ref: l(1.0e-3),
            },
        }
    }

    /// Common discount rate (the informed one; validation enforces equality).
    pub fn beta(&self) -> T {
        self.informed.beta
    }

    /// Multiplier on the uninformed-flow volatility; 1 unless elasticity is on.
    pub fn flow_scale(&self) -> T {
        if self.flow.elasticity_enabled {
            (self.broker.k_b - self.broker.k_u) / (self.broker.k_b - self.flow.k_u_ref)
        } else {
            T::one()
        }
    }

    /// Effective diffusion coefficient of the uninformed flow.
    pub fn flow_vol(&self) -> T {
        self.flow.sigma_u * self.flow_scale()
    }

    pub fn get(&self, key: &str) -> Option<T> {
        let v = match key {
            "S0" => self.market.s0,
            "alpha0" => self.market.alpha0,
            "kappa_alpha" => self.market.kappa_alpha,
            "sigma_alpha" => self.market.sigma_alpha,
            "sigma_s" => self.market.sigma_s,
            "k_I" => self.informed.k_i,
            "a_I" => self.informed.a_i,
            "phi_I" => self.informed.phi_i,
            "beta" => self.informed.beta,
            "k_B" => self.broker.k_b,
            "k_U" => self.broker.k_u,
            "a_B" => self.broker.a_b,
            "phi_B" => self.broker.phi_b,
            "b" => self.broker.b,
            "nu_U0" => self.flow.nu_u0,
            "kappa_u" => self.flow.kappa_u,
            "sigma_U" => self.flow.sigma_u,
            "elasticity_enabled" => {
                if self.flow.elasticity_enabled {
                    T::one()
                } else {
                    T::zero()
                }
            }
            "k_U_ref" => self.flow.k_u_ref,
            _ => return None,
        };
        Some(v)
    }

    /// Sets a numeric parameter. `elasticity_enabled` treats any non-zero
    /// value as `true`.
    pub fn set(&mut self, key: &str, value: T) -> Result<()> {
        let slot = match key {
            "S0" => &mut self.market.s0,
            "alpha0" => &mut self.market.alpha0,
            "kappa_alpha" => &mut self.market.kappa_alpha,
            "sigma_alpha" => &mut self.market.sigma_alpha,
            "sigma_s" => &mut self.market.sigma_s,
            "k_I" => &mut self.informed.k_i,
            "a_I" => &mut self.informed.a_i,
            "phi_I" => &mut self.informed.phi_i,
            "beta" => {
                self.informed.beta = value;
                self.broker.beta = value;
                return Ok(());
            }
            "k_B" => &mut self.broker.k_b,
            "k_U" => &mut self.broker.k_u,
            "a_B" => &mut self.broker.a_b,
            "phi_B" => &mut self.broker.phi_b,
            "b" => &mut self.broker.b,
            "nu_U0" => &mut self.flow.nu_u0,
            "kappa_u" => &mut self.flow.kappa_u,
            "sigma_U" => &mut self.flow.sigma_u,
            "elasticity_enabled" => {
                self.flow.elasticity_enabled = value != T::zero();
                return Ok(());
            }
            "k_U_ref" => &mut self.flow.k_u_ref,
            _ => return Err(Error::Config(format!("unknown parameter key `{key}`"))),
        };
        *slot = value;
        Ok(())
    }

    /// Sets a parameter from its textual form (`true`/`false` accepted for
    /// the elasticity flag).
    pub fn set_str(&mut self, key: &str, raw: &str) -> Result<()> {
        let raw = raw.trim();
        if key == "elasticity_enabled" {
            let on = match raw {
                "true" | "on" | "yes" | "1" => true,
                "false" | "off" | "no" | "0" => false,
                _ => {
                    return Err(Error::Config(format!(
                        "elasticity_enabled expects true/false, got `{raw}`"
                    )))
                }
            };
            self.flow.elasticity_enabled = on;
            return Ok(());
        }
        let v: f64 = raw
            .parse()
            .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{raw}` as a number")))?;
        self.set(key, T::lit(v))
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            self.set_str(k.trim(), v)?;
        }
        Ok(())
    }

    /// Parses a flat `key = value` file on top of [`ModelParams::baseline`].
    /// `#` starts a comment; blank lines are ignored; repeated keys are an error.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut p = Self::baseline();
        let mut seen: Vec<String> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .or_else(|| line.split_once(':'))
                .ok_or_else(|| Error::Parse {
                    line: i + 1,
                    msg: format!("expected `key = value`, got `{line}`"),
                })?;
            let k = k.trim();
            if seen.iter().any(|s| s == k) {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("duplicate key `{k}`"),
                });
            }
            p.set_str(k, v).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
            seen.push(k.to_string());
        }
        Ok(p)
    }

    /// Flat `key = value` rendering that [`ModelParams::from_config_str`]
    /// reads back exactly.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.key_values() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn key_values(&self) -> Vec<(&'static str, String)> {
        PARAM_KEYS
            .iter()
            .map(|&k| {
                let v = if k == "elasticity_enabled" {
                    self.flow.elasticity_enabled.to_string()
                } else {
                    // shortest round-trip representation
                    format!("{:?}", self.get(k).unwrap().to_f64_lossy())
                };
                (k, v)
            })
            .collect()
    }

    pub fn validate(self) -> Result<ValidatedParams<T>> {
        let zero = T::zero();
        for &k in PARAM_KEYS {
            let v = self.get(k).unwrap();
            if !v.is_finite() {
                return Err(Error::Domain(format!("{k} must be finite, got {v}")));
            }
        }
        if self.broker.beta != self.informed.beta || !self.broker.beta.is_finite() {
            return Err(Error::Domain(format!(
                "broker and informed discount rates must coincide ({} vs {})",
                self.broker.beta, self.informed.beta
            )));
        }
        for (k, v) in [
            ("S0", self.market.s0),
            ("k_I", self.informed.k_i),
            ("k_B", self.broker.k_b),
            ("k_U", self.broker.k_u),
            ("beta", self.informed.beta),
        ] {
            if v <= zero {
                return Err(Error::Domain(format!("{k} must be > 0, got {v}")));
            }
        }
        for (k, v) in [
            ("kappa_alpha", self.market.kappa_alpha),
            ("sigma_alpha", self.market.sigma_alpha),
            ("sigma_s", self.market.sigma_s),
            ("a_I", self.informed.a_i),
            ("phi_I", self.informed.phi_i),
            ("a_B", self.broker.a_b),
            ("phi_B", self.broker.phi_b),
            ("kappa_u", self.flow.kappa_u),
            ("sigma_U", self.flow.sigma_u),
        ] {
            if v < zero {
                return Err(Error::Domain(format!("{k} must be >= 0, got {v}")));
            }
        }

        let two = T::two();
        let (ab, b) = (self.broker.a_b, self.broker.b);
        if two * ab <= b {
            return Err(Error::Regime(format!(
                "closed form requires 2·a_B > b (a_B = {ab}, b = {b})"
            )));
        }
        let broker_radicand = broker_radicand(&self);
        if broker_radicand < zero {
            return Err(Error::Regime(format!(
                "broker radicand 4a_Bβk_B - 2bβk_B + β²k_B² + 2k_Bφ_B is negative ({broker_radicand})"
            )));
        }
        if informed_radicand(&self) < zero {
            return Err(Error::Regime("informed radicand is negative".into()));
        }
        if self.flow.elasticity_enabled {
            if self.flow.k_u_ref >= self.broker.k_b {
                return Err(Error::Regime(format!(
                    "flow elasticity requires k_U_ref < k_B (k_U_ref = {}, k_B = {})",
                    self.flow.k_u_ref, self.broker.k_b
                )));
            }
            if self.broker.k_u > self.broker.k_b {
                return Err(Error::Regime(format!(
                    "flow elasticity requires k_U <= k_B (k_U = {}, k_B = {})",
                    self.broker.k_u, self.broker.k_b
                )));
            }
        }
        Ok(ValidatedParams(self))
    }
}

pub(crate) fn informed_radicand<T: Real>(p: &ModelParams<T>) -> T {
    let (k, a, phi, beta) = (p.informed.k_i, p.informed.a_i, p.informed.phi_i, p.beta());
    T::lit(4.0) * a * beta * k + (beta * k) * (beta * k) + T::two() * k * phi
}

pub(crate) fn broker_radicand<T: Real>(p: &ModelParams<T>) -> T {
    let (k, a, phi, b, beta) = (
        p.broker.k_b,
        p.broker.a_b,
        p.broker.phi_b,
        p.broker.b,
        p.beta(),
    );
    T::lit(4.0) * a * beta * k - T::two() * b * beta * k + beta * beta * k * k + T::two() * k * phi
}

impl<T: Real> Default for ModelParams<T> {
    fn default() -> Self {
        Self::baseline()
    }
}

/// Parameters that passed [`ModelParams::validate`]. Every downstream
/// operation takes this type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ValidatedParams<T>(ModelParams<T>);

impl<T: Real> ValidatedParams<T> {
    pub fn params(&self) -> &ModelParams<T> {
        &self.0
    }

    pub fn into_inner(self) -> ModelParams<T> {
        self.0
    }

    /// Copies the parameters, applies `edit`, and validates the result.
    pub fn with(&self, edit: impl FnOnce(&mut ModelParams<T>)) -> Result<Self> {
        let mut p = self.0;
        edit(&mut p);
        p.validate()
    }
}

impl<T> Deref for ValidatedParams<T> {
    type Target = ModelParams<T>;
    fn deref(&self) -> &ModelParams<T> {
        &self.0
    }
}

/// Instantaneous state of the market and both inventories/cash accounts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct MarketState<T> {
    pub t: T,
    pub s: T,
    pub alpha: T,
    pub nu_u: T,
    pub q_i: T,
    pub q_b: T,
    pub x_i: T,
    pub x_b: T,
}

impl<T: Real> MarketState<T> {
    /// Time zero with flat inventories and cash.
    pub fn initial(p: &ModelParams<T>) -> Self {
        Self {
            t: T::zero(),
            s: p.market.s0,
            alpha: p.market.alpha0,
            nu_u: p.flow.nu_u0,
            q_i: T::zero(),
            q_b: T::zero(),
            x_i: T::zero(),
            x_b: T::zero(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_validates() {
        assert!(ModelParams::<f64>::baseline().validate().is_ok());
        assert!(ModelParams::<f32>::baseline().validate().is_ok());
    }

    #[test]
    fn zero_informed_impact_is_domain_error() {
        let mut p = ModelParams::<f64>::baseline();
        p.informed.k_i = 0.0;
        assert!(matches!(p.validate(), Err(Error::Domain(_))));
    }

    #[test]
    fn penalty_below_half_b_is_regime_error() {
        let mut p = ModelParams::<f64>::baseline();
        p.broker.a_b = 0.4;
        p.broker.b = 1.0;
        p.set("beta", 1e-6).unwrap();
        p.broker.phi_b = 0.0;
        assert!(matches!(p.validate(), Err(Error::Regime(_))));
    }

    #[test]
    fn mismatched_discount_rates_rejected() {
        let mut p = ModelParams::<f64>::baseline();
        p.broker.beta = 0.02;
        assert!(matches!(p.validate(), Err(Error::Domain(_))));
    }

    #[test]
    fn negative_volatility_rejected() {
        let mut p = ModelParams::<f64>::baseline();
        p.market.sigma_s = -1.0;
        assert!(matches!(p.validate(), Err(Error::Domain(_))));
        let mut p = ModelParams::<f64>::baseline();
        p.market.alpha0 = f64::NAN;
        assert!(matches!(p.validate(), Err(Error::Domain(_))));
    }

    #[test]
    fn elasticity_requires_reference_below_lit_cost() {
        let mut p = ModelParams::<f64>::baseline();
        p.flow.elasticity_enabled = true;
        assert!(p.validate().is_ok());
        p.flow.k_u_ref = 1.2e-3;
        assert!(matches!(p.validate(), Err(Error::Regime(_))));
        let mut p = ModelParams::<f64>::baseline();
        p.flow.elasticity_enabled = true;
        p.broker.k_u = 1.3e-3;
        assert!(matches!(p.validate(), Err(Error::Regime(_))));
        // k_U = k_B is the zero-flow limit and is admissible
        p.broker.k_u = 1.2e-3;
        let v = p.validate().unwrap();
        assert_eq!(v.flow_vol(), 0.0);
    }

    #[test]
    fn flow_scale_is_one_at_reference_cost() {
        let mut p = ModelParams::<f64>::baseline();
        p.flow.elasticity_enabled = true;
        p.broker.k_u = p.flow.k_u_ref;
        assert_eq!(p.flow_scale(), 1.0);
        assert_eq!(p.flow_vol(), p.flow.sigma_u);
    }

    #[test]
    fn validation_is_idempotent() {
        let v = ModelParams::<f64>::baseline().validate().unwrap();
        let again = v.into_inner().validate().unwrap();
        assert_eq!(v, again);
    }

    #[test]
    fn config_round_trip() {
        let mut p = ModelParams::<f64>::baseline();
        p.set("k_I", 7.5e-4).unwrap();
        p.set("elasticity_enabled", 1.0).unwrap();
        let text = p.to_config_string();
        let q = ModelParams::<f64>::from_config_str(&text).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn config_parsing_errors() {
        let err = ModelParams::<f64>::from_config_str("k_I = 1e-3\nbogus = 2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = ModelParams::<f64>::from_config_str("k_I = 1e-3\nk_I = 2e-3").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = ModelParams::<f64>::from_config_str("k_I 1e-3").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let p =
            ModelParams::<f64>::from_config_str("# comment\n\nbeta = 0.05 # trailing\n").unwrap();
        assert_eq!(p.informed.beta, 0.05);
        assert_eq!(p.broker.beta, 0.05);
    }

    #[test]
    fn overrides_apply_in_order() {
        let mut p = ModelParams::<f64>::baseline();
        p.apply_overrides(&["k_B=2e-3", "k_B = 3e-3", "elasticity_enabled=true"])
            .unwrap();
        assert_eq!(p.broker.k_b, 3e-3);
        assert!(p.flow.elasticity_enabled);
        assert!(p.apply_overrides(&["nokey"]).is_err());
    }
}
