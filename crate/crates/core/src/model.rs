//! Model parameters: market, liability (risk process), claims and preferences.
//!
//! Everything downstream takes a [`ModelConfig`], which can only be obtained
//! through [`validate`]. All coefficients are constants.

use serde::{Deserialize, Serialize};

use crate::claims::{ClaimDistribution, RawClaims};
use crate::error::{AlmError, Result, Violation};

/// Black-Scholes market: money market at rate `r`, one stock with drift `mu`
/// and volatility `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    pub r: f64,
    pub mu: f64,
    pub sigma: f64,
}

/// Per-policy risk process `dX = a dt + b (rho dW1 + sqrt(1 - rho^2) dW2) + dJ`,
/// with compound-Poisson claims `J` at intensity `lambda`, and premium rate `premium`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiabilityParams {
    pub a: f64,
    pub b: f64,
    pub rho: f64,
    pub lambda: f64,
    pub premium: f64,
}

/// CRRA power `eta` (log utility at 1), horizon and initial wealth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preferences {
    pub eta: f64,
    pub horizon: f64,
    pub initial_wealth: f64,
}

/// Preferences as they appear in a configuration file. Horizon and initial
/// wealth default to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPreferences {
    pub eta: f64,
    #[serde(default = "one")]
    pub horizon: f64,
    #[serde(default = "one")]
    pub initial_wealth: f64,
}

fn one() -> f64 {
    1.0
}

/// Unvalidated parameter record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawModel {
    pub market: MarketParams,
    pub liability: LiabilityParams,
    pub claims: RawClaims,
    pub preferences: RawPreferences,
}

/// A validated model. Construct with [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub market: MarketParams,
    pub liability: LiabilityParams,
    pub claims: ClaimDistribution,
    pub preferences: Preferences,
    theta: f64,
}

impl ModelConfig {
    /// Market price of risk `(mu - r) / sigma`.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Reverse mapping, so a validated config can be written back out and
    /// validated again.
    pub fn to_raw(&self) -> RawModel {
        RawModel {
            market: self.market,
            liability: self.liability,
            claims: self.claims.to_raw(),
            preferences: RawPreferences {
                eta: self.preferences.eta,
                horizon: self.preferences.horizon,
                initial_wealth: self.preferences.initial_wealth,
            },
        }
    }

    /// Copy with a different correlation and risk aversion, re-validated.
    pub fn with_rho_eta(&self, rho: f64, eta: f64) -> Result<Self> {
        let mut raw = self.to_raw();
        raw.liability.rho = rho;
        raw.preferences.eta = eta;
        validate(&raw)
    }

    /// Copy with a modified raw record, re-validated.
    pub fn modified(&self, edit: impl FnOnce(&mut RawModel)) -> Result<Self> {
        let mut raw = self.to_raw();
        edit(&mut raw);
        validate(&raw)
    }
}

fn check_finite(out: &mut Vec<Violation>, field: &'static str, value: f64) -> bool {
    if value.is_finite() {
        true
    } else {
        out.push(Violation::new(field, format!("must be finite, got {value}")));
        false
    }
}

/// Validate a raw parameter record. Collects every violation rather than
/// stopping at the first.
pub fn validate(raw: &RawModel) -> Result<ModelConfig> {
    let mut v = Vec::new();
    let m = raw.market;
    let l = raw.liability;
    let p = raw.preferences;

    check_finite(&mut v, "r", m.r);
    check_finite(&mut v, "mu", m.mu);
    if check_finite(&mut v, "sigma", m.sigma) && m.sigma <= 0.0 {
        v.push(Violation::new("sigma", format!("must be > 0, got {}", m.sigma)));
    }

    check_finite(&mut v, "a", l.a);
    check_finite(&mut v, "premium", l.premium);
    if check_finite(&mut v, "b", l.b) && l.b < 0.0 {
        v.push(Violation::new("b", format!("must be >= 0, got {}", l.b)));
    }
    if check_finite(&mut v, "rho", l.rho) && !(-1.0..=1.0).contains(&l.rho) {
        v.push(Violation::new("rho", format!("must lie in [-1, 1], got {}", l.rho)));
    }
    if check_finite(&mut v, "lambda", l.lambda) && l.lambda < 0.0 {
        v.push(Violation::new("lambda", format!("must be >= 0, got {}", l.lambda)));
    }

    if check_finite(&mut v, "eta", p.eta) && p.eta <= 0.0 {
        v.push(Violation::new("eta", format!("must be > 0, got {}", p.eta)));
    }
    if check_finite(&mut v, "horizon", p.horizon) && p.horizon <= 0.0 {
        v.push(Violation::new("horizon", format!("must be > 0, got {}", p.horizon)));
    }
    if check_finite(&mut v, "initial_wealth", p.initial_wealth) && p.initial_wealth <= 0.0 {
        v.push(Violation::new(
            "initial_wealth",
            format!("must be > 0, got {}", p.initial_wealth),
        ));
    }

    let claims = match ClaimDistribution::from_raw(&raw.claims) {
        Ok(c) => Some(c),
        Err(AlmError::InvalidParams(mut cv)) => {
            v.append(&mut cv);
            None
        }
        Err(e) => return Err(e),
    };

    let theta = (m.mu - m.r) / m.sigma;
    if v.is_empty() && !theta.is_finite() {
        v.push(Violation::new("sigma", "market price of risk is not finite"));
    }

    match claims {
        Some(claims) if v.is_empty() => Ok(ModelConfig {
            market: m,
            liability: l,
            claims,
            preferences: Preferences {
                eta: p.eta,
                horizon: p.horizon,
                initial_wealth: p.initial_wealth,
            },
            theta,
        }),
        _ => Err(AlmError::InvalidParams(v)),
    }
}

/// `(mu - r) / sigma`.
pub fn market_price_of_risk(config: &ModelConfig) -> f64 {
    config.theta
}
