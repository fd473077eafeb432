//! CRRA solution of the insurer's problem via the dual (deflator) characterization.
//!
//! With constant coefficients the dual collapses to one scalar: the optimal
//! underwriting-to-wealth ratio `κ̂`, the unique zero on `[0, 1/c)` of
//!
//! ```text
//! h(κ) = p − a + b[ρθ − (1−ρ²)ηbκ] − λ E[Y / (1−κY)^η]
//! ```
//!
//! Everything else follows in closed form:
//!
//! * portfolio `π̂ = θ/(ησ) + (ρb/σ) κ̂` (Merton fraction plus a hedge term),
//! * dual controls `φ¹ = −ηbκ̂√(1−ρ²)` and `φ²(y) = (1−κ̂y)^(−η)`,
//! * `E[H_t^q] = exp(Λt)` with `q = 1 − 1/η`, which gives the normalization
//!   `𝒳(1) = ∫₀ᵀ e^(Λt) dt + e^(ΛT)` and consumption `γ̂_t = (x/𝒳(1)) H_t^(−1/η)`.

use crate::claims::Transform;
use crate::error::{AlmError, Result};
use crate::model::ModelConfig;
use crate::quadrature::Quadrature;
use crate::roots::{brent, BrentOptions};

/// Above this value of `κc` the integrand of `h` is steep at `y = c` and the
/// quadrature tolerance is tightened.
const STEEP_KAPPA_C: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Bracket width at convergence.
    pub x_tol: f64,
    /// `|h(κ̂)|` at convergence.
    pub f_tol: f64,
    pub max_iter: usize,
    /// Search `κ < 0` when `h(0) < 0`. No optimality claim is made there.
    pub allow_negative_kappa: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            x_tol: 1e-10,
            f_tol: 1e-9,
            max_iter: 500,
            allow_negative_kappa: false,
        }
    }
}

/// Dual controls `(φ¹, φ²)`; `φ²(y) = (1−κy)^(−η)` is stored as `(κ, η)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualControls {
    pub phi1: f64,
    pub kappa: f64,
    pub eta: f64,
}

impl DualControls {
    pub fn phi2(&self, y: f64) -> f64 {
        (1.0 - self.kappa * y).powf(-self.eta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalStrategy {
    pub kappa: f64,
    pub pi: f64,
    pub pi_merton: f64,
    pub controls: DualControls,
    pub h_at_zero: f64,
    /// `Λ` in `E[H_t^(1−1/η)] = exp(Λt)`.
    pub dual_rate: f64,
    /// `𝒳(1)`.
    pub x_one: f64,
    /// `𝒴(x) = (x/𝒳(1))^(−η)`.
    pub y_of_x: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub strategy: OptimalStrategy,
    pub iterations: usize,
    pub bracket: (f64, f64),
    pub residual: f64,
}

/// Risky proportion split into its Merton part and the liability hedge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Portfolio {
    pub pi: f64,
    pub pi_merton: f64,
}

fn quadrature_for(config: &ModelConfig, kappa: f64) -> Quadrature {
    if kappa * config.claims.limit() > STEEP_KAPPA_C {
        Quadrature::with_tolerance(1e-12)
    } else {
        Quadrature::default()
    }
}

fn check_kappa(config: &ModelConfig, kappa: f64) -> Result<()> {
    let limit = config.claims.limit();
    if kappa.is_finite() && kappa * limit < 1.0 {
        Ok(())
    } else {
        Err(AlmError::DomainError { kappa, limit })
    }
}

/// `h(κ)` for `0 ≤ κ < 1/c`.
pub fn eval_h(config: &ModelConfig, kappa: f64) -> Result<f64> {
    if kappa < 0.0 {
        return Err(AlmError::DomainError {
            kappa,
            limit: config.claims.limit(),
        });
    }
    eval_h_extended(config, kappa)
}

/// `h(κ)` for any `κ < 1/c`, including the negative range.
pub fn eval_h_extended(config: &ModelConfig, kappa: f64) -> Result<f64> {
    check_kappa(config, kappa)?;
    let l = &config.liability;
    let eta = config.preferences.eta;
    let jump = if l.lambda == 0.0 {
        0.0
    } else {
        l.lambda
            * config
                .claims
                .expect_with(Transform::DualPower { kappa, eta }, &quadrature_for(config, kappa))?
    };
    Ok(l.premium - l.a + l.b * (l.rho * config.theta() - (1.0 - l.rho * l.rho) * eta * l.b * kappa) - jump)
}

/// `h(0) = p − a + bρθ − λE[Y]`; positive iff a unique root exists in `(0, 1/c)`.
pub fn existence_margin(config: &ModelConfig) -> Result<f64> {
    eval_h(config, 0.0)
}

/// Solve `h(κ̂) = 0` and assemble the optimal strategy.
pub fn solve_kappa(config: &ModelConfig, opts: &SolverOptions) -> Result<SolveReport> {
    let h0 = existence_margin(config)?;
    let brent_opts = BrentOptions {
        x_tol: opts.x_tol,
        f_tol: opts.f_tol,
        max_iter: opts.max_iter,
    };

    let root = if h0 > 0.0 {
        let c = config.claims.limit();
        let hi = 1.0 / c - 1e-12 * c;
        let h_hi = eval_h(config, hi)?;
        if h_hi >= 0.0 {
            return Err(AlmError::NumericalFailure(format!(
                "h stays non-negative up to the bound: h({hi}) = {h_hi}"
            )));
        }
        brent(|k| eval_h(config, k), 0.0, hi, h0, h_hi, brent_opts)?
    } else if opts.allow_negative_kappa {
        if h0 == 0.0 {
            crate::roots::Root {
                x: 0.0,
                fx: 0.0,
                bracket: (0.0, 0.0),
                iterations: 0,
            }
        } else {
            let mut lo = -0.125;
            let mut h_lo = eval_h_extended(config, lo)?;
            let mut tries = 0;
            while h_lo <= 0.0 {
                tries += 1;
                if tries > 60 {
                    return Err(AlmError::NumericalFailure(
                        "could not bracket a negative root of h".into(),
                    ));
                }
                lo *= 2.0;
                h_lo = eval_h_extended(config, lo)?;
            }
            brent(|k| eval_h_extended(config, k), lo, 0.0, h_lo, h0, brent_opts)?
        }
    } else {
        return Err(AlmError::NoRootInRange { h_at_zero: h0 });
    };

    let strategy = strategy_at(config, root.x, h0)?;
    Ok(SolveReport {
        strategy,
        iterations: root.iterations,
        bracket: root.bracket,
        residual: root.fx,
    })
}

/// Assemble every closed-form quantity at a given `κ` (not necessarily the root).
pub fn strategy_at(config: &ModelConfig, kappa: f64, h_at_zero: f64) -> Result<OptimalStrategy> {
    let port = optimal_pi(config, kappa);
    let controls = dual_controls(config, kappa)?;
    let (dual_rate, x_one) = dual_rate_and_x1(config, kappa)?;
    let x = config.preferences.initial_wealth;
    Ok(OptimalStrategy {
        kappa,
        pi: port.pi,
        pi_merton: port.pi_merton,
        controls,
        h_at_zero,
        dual_rate,
        x_one,
        y_of_x: (x / x_one).powf(-config.preferences.eta),
    })
}

/// `π = (μ−r)/(ησ²) + (ρb/σ)κ`.
pub fn optimal_pi(config: &ModelConfig, kappa: f64) -> Portfolio {
    let m = &config.market;
    let l = &config.liability;
    let pi_merton = (m.mu - m.r) / (config.preferences.eta * m.sigma * m.sigma);
    Portfolio {
        pi: pi_merton + l.rho * l.b / m.sigma * kappa,
        pi_merton,
    }
}

/// `φ¹ = −ηbκ√(1−ρ²)`, `φ² = (1−κy)^(−η)`.
pub fn dual_controls(config: &ModelConfig, kappa: f64) -> Result<DualControls> {
    check_kappa(config, kappa)?;
    let l = &config.liability;
    let eta = config.preferences.eta;
    Ok(DualControls {
        phi1: -eta * l.b * kappa * (1.0 - l.rho * l.rho).max(0.0).sqrt(),
        kappa,
        eta,
    })
}

/// Left-hand side of the dual feasibility condition at `(φ¹, φ²)`:
/// `p − a + b[ρθ + √(1−ρ²)φ¹] − λ ∫ y φ²(y) F(dy)`. Zero for admissible controls.
pub fn feasibility_residual(config: &ModelConfig, controls: &DualControls) -> Result<f64> {
    check_kappa(config, controls.kappa)?;
    let l = &config.liability;
    let jump = if l.lambda == 0.0 {
        0.0
    } else {
        let t = Transform::DualPower {
            kappa: controls.kappa,
            eta: controls.eta,
        };
        l.lambda * config.claims.expect_with(t, &quadrature_for(config, controls.kappa))?
    };
    let diffusion = (1.0 - l.rho * l.rho).max(0.0).sqrt() * controls.phi1;
    Ok(l.premium - l.a + l.b * (l.rho * config.theta() + diffusion) - jump)
}

/// Growth rate `Λ` of `E[H_t^q]`, `q = 1 − 1/η`, and `𝒳(1)`.
///
/// Writing `H` as a stochastic exponential,
/// `log H_t = −(r + ½|ϑ|² + λ∫(φ²−1)dF) t − ϑ·W_t + Σ log φ²(Y_i)` with
/// `ϑ = (θ, φ¹)`, and taking the `q`-th moment gives
///
/// ```text
/// Λ = −qr + ½q(q−1)|ϑ|² − qλ∫(φ²−1)dF + λ∫((φ²)^q − 1)dF.
/// ```
pub fn dual_rate_and_x1(config: &ModelConfig, kappa: f64) -> Result<(f64, f64)> {
    check_kappa(config, kappa)?;
    let eta = config.preferences.eta;
    let horizon = config.preferences.horizon;
    if eta == 1.0 {
        return Ok((0.0, horizon + 1.0));
    }
    let q = 1.0 - 1.0 / eta;
    let controls = dual_controls(config, kappa)?;
    let theta = config.theta();
    let vartheta_sq = theta * theta + controls.phi1 * controls.phi1;
    let lambda = config.liability.lambda;

    let jump = if lambda == 0.0 {
        0.0
    } else {
        let quad = quadrature_for(config, kappa);
        let mass = config.claims.expect_with(Transform::AffineTest, &quad)?;
        let e_phi2 = config
            .claims
            .expect_with(Transform::DeflatorPower { kappa, eta, q: 1.0 }, &quad)?;
        let e_phi2_q = config
            .claims
            .expect_with(Transform::DeflatorPower { kappa, eta, q }, &quad)?;
        -q * lambda * (e_phi2 - mass) + lambda * (e_phi2_q - mass)
    };
    let rate = -q * config.market.r + 0.5 * q * (q - 1.0) * vartheta_sq + jump;
    Ok((rate, x_one_from_rate(rate, horizon)))
}

/// `∫₀ᵀ e^(Λt) dt + e^(ΛT)`.
pub fn x_one_from_rate(rate: f64, horizon: f64) -> f64 {
    let integral = if rate == 0.0 {
        horizon
    } else {
        (rate * horizon).exp_m1() / rate
    };
    integral + (rate * horizon).exp()
}

/// `γ̂_t = (x/𝒳(1)) H_t^(−1/η)`. For log utility the same number equals
/// `V_t^(π̂,κ̂,0)/(T+1)` on a co-simulated path.
pub fn consumption_rate(config: &ModelConfig, strategy: &OptimalStrategy, deflator: f64, _t: f64) -> f64 {
    config.preferences.initial_wealth / strategy.x_one * deflator.powf(-1.0 / config.preferences.eta)
}
