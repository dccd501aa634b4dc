//! Effect functions `f(t)` for the log hazard ratio of the vaccine arm.
//!
//! Every family is linear in its coefficients: `f(t) = beta0 + beta1 * g(t)`
//! with `g(t)` one of `t`, `ln t`, `sqrt t`, or absent for the constant
//! (proportional hazards) family.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectFamily {
    Constant,
    Linear,
    Log,
    Sqrt,
}

impl EffectFamily {
    pub const ALL: [EffectFamily; 4] = [
        EffectFamily::Constant,
        EffectFamily::Linear,
        EffectFamily::Log,
        EffectFamily::Sqrt,
    ];

    /// Number of free coefficients.
    pub fn n_params(self) -> usize {
        match self {
            EffectFamily::Constant => 1,
            _ => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EffectFamily::Constant => "constant",
            EffectFamily::Linear => "linear",
            EffectFamily::Log => "log",
            EffectFamily::Sqrt => "sqrt",
        }
    }

    /// Time transform `g(t)` multiplying `beta1`. Zero for the constant family.
    ///
    /// Returns a domain error for `t < 0`, non-finite `t`, or `t = 0` under
    /// the log family.
    pub fn time_term(self, t: f64) -> Result<f64> {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::Domain(format!("time must be finite and >= 0, got {t}")));
        }
        match self {
            EffectFamily::Constant => Ok(0.0),
            EffectFamily::Linear => Ok(t),
            EffectFamily::Sqrt => Ok(t.sqrt()),
            EffectFamily::Log => {
                if t == 0.0 {
                    Err(Error::Domain("log effect family is undefined at t = 0".into()))
                } else {
                    Ok(t.ln())
                }
            }
        }
    }
}

impl fmt::Display for EffectFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EffectFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "constant" | "ph" => Ok(EffectFamily::Constant),
            "linear" => Ok(EffectFamily::Linear),
            "log" | "ln" => Ok(EffectFamily::Log),
            "sqrt" => Ok(EffectFamily::Sqrt),
            other => Err(Error::Validation(format!("unknown effect family '{other}'"))),
        }
    }
}

/// An effect family together with its coefficients.
///
/// `beta1` is ignored (and serialized as 0) for the constant family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSpec {
    pub family: EffectFamily,
    pub beta0: f64,
    #[serde(default)]
    pub beta1: f64,
}

impl EffectSpec {
    pub fn constant(beta: f64) -> Self {
        Self { family: EffectFamily::Constant, beta0: beta, beta1: 0.0 }
    }

    pub fn linear(beta0: f64, beta1: f64) -> Self {
        Self { family: EffectFamily::Linear, beta0, beta1 }
    }

    pub fn log(beta0: f64, beta1: f64) -> Self {
        Self { family: EffectFamily::Log, beta0, beta1 }
    }

    pub fn sqrt(beta0: f64, beta1: f64) -> Self {
        Self { family: EffectFamily::Sqrt, beta0, beta1 }
    }

    /// Build from a coefficient vector of length `family.n_params()`.
    pub fn from_coefs(family: EffectFamily, coefs: &[f64]) -> Result<Self> {
        if coefs.len() != family.n_params() {
            return Err(Error::Validation(format!(
                "{family} family takes {} coefficient(s), got {}",
                family.n_params(),
                coefs.len()
            )));
        }
        if coefs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Validation("coefficients must be finite".into()));
        }
        let beta1 = if family == EffectFamily::Constant { 0.0 } else { coefs[1] };
        Ok(Self { family, beta0: coefs[0], beta1 })
    }

    pub fn coefs(&self) -> Vec<f64> {
        match self.family {
            EffectFamily::Constant => vec![self.beta0],
            _ => vec![self.beta0, self.beta1],
        }
    }

    /// Log hazard ratio `f(t)`.
    pub fn log_hr(&self, t: f64) -> Result<f64> {
        let g = self.family.time_term(t)?;
        Ok(match self.family {
            EffectFamily::Constant => self.beta0,
            _ => self.beta0 + self.beta1 * g,
        })
    }

    pub fn hazard_ratio(&self, t: f64) -> Result<f64> {
        Ok(self.log_hr(t)?.exp())
    }

    /// Limit of `exp(f(t))` as `t -> 0+`; `None` when it diverges.
    ///
    /// Only the log family differs from plain evaluation at 0.
    pub fn hazard_ratio_at_zero(&self) -> Option<f64> {
        match self.family {
            EffectFamily::Log => {
                if self.beta1 > 0.0 {
                    Some(0.0)
                } else if self.beta1 == 0.0 {
                    Some(self.beta0.exp())
                } else {
                    None
                }
            }
            _ => Some(self.log_hr(0.0).ok()?.exp()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficient_vector_round_trips() {
        for fam in EffectFamily::ALL {
            let coefs: Vec<f64> = [-1.5, 0.25][..fam.n_params()].to_vec();
            let spec = EffectSpec::from_coefs(fam, &coefs).unwrap();
            assert_eq!(spec.coefs(), coefs);
        }
    }

    #[test]
    fn log_family_rejects_zero() {
        assert!(matches!(EffectSpec::log(-1.0, 0.3).log_hr(0.0), Err(Error::Domain(_))));
        assert_eq!(EffectSpec::log(-1.0, 0.3).hazard_ratio_at_zero(), Some(0.0));
        assert_eq!(EffectSpec::log(-1.0, -0.3).hazard_ratio_at_zero(), None);
    }

    #[test]
    fn parse_family_names() {
        assert_eq!("Linear".parse::<EffectFamily>().unwrap(), EffectFamily::Linear);
        assert!("spline".parse::<EffectFamily>().is_err());
    }

    #[test]
    fn wrong_coefficient_count_is_rejected() {
        assert!(EffectSpec::from_coefs(EffectFamily::Linear, &[1.0]).is_err());
        assert!(EffectSpec::from_coefs(EffectFamily::Constant, &[f64::NAN]).is_err());
    }
}
