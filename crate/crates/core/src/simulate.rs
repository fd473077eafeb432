//! Monte Carlo for the controlled wealth SDE, the deflator, and the claim
//! arrivals that drive both.
//!
//! Each path owns two ChaCha8 streams derived from `(seed, path index)`: one
//! for Brownian increments and one for claim arrivals and sizes. Wealth and
//! deflator are always co-simulated from the same draws, and two strategies
//! run with the same spec see identical randomness. Antithetic pairs share the
//! streams and flip the sign of the Gaussian draws.
//!
//! Under [`Scheme::LogEuler`] the homogeneous wealth factor `Φ` (the wealth
//! with no consumption, started at 1) and the deflator are advanced through
//! their exact log increments, claim jumps are applied at their exact arrival
//! times, and consumption enters through
//! `V_t = Φ_t (x − ∫₀ᵗ γ_s/Φ_s ds)` with the integral taken by trapezoid on
//! the grid.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::claims::{ClaimSampler, Transform};
use crate::duality::{DualControls, OptimalStrategy};
use crate::error::{AlmError, Result};
use crate::exec::{try_map_indexed, Execution};
use crate::model::ModelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    LogEuler,
    Euler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationSpec {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub scheme: Scheme,
    pub antithetic: bool,
    /// Strategies compared in one run share randomness (see the verify module).
    pub common_random_numbers: bool,
    /// Grid indices (1..=n_steps) at which the deflator is recorded.
    pub checkpoints: Vec<usize>,
    pub execution: Execution,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            n_paths: 100_000,
            n_steps: 256,
            seed: 20_240_601,
            scheme: Scheme::LogEuler,
            antithetic: true,
            common_random_numbers: true,
            checkpoints: Vec::new(),
            execution: Execution::Parallel,
        }
    }
}

impl SimulationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(AlmError::InvalidSpec("n_paths must be >= 1".into()));
        }
        if self.n_steps == 0 {
            return Err(AlmError::InvalidSpec("n_steps must be >= 1".into()));
        }
        if self.antithetic && self.n_paths % 2 != 0 {
            return Err(AlmError::InvalidSpec(
                "antithetic sampling needs an even n_paths".into(),
            ));
        }
        if let Some(&bad) = self.checkpoints.iter().find(|&&k| k == 0 || k > self.n_steps) {
            return Err(AlmError::InvalidSpec(format!(
                "checkpoint {bad} outside 1..={}",
                self.n_steps
            )));
        }
        Ok(())
    }

    /// Number of independent samples after antithetic pairing.
    pub fn n_samples(&self) -> usize {
        if self.antithetic {
            self.n_paths / 2
        } else {
            self.n_paths
        }
    }
}

/// How consumption is chosen along a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConsumptionRule {
    /// No consumption; the objective then only counts terminal wealth.
    Zero,
    /// `γ_t = scale · (x/𝒳(1)) · H_t^(−1/η)` on the co-simulated deflator.
    DualOptimal { x_one: f64, scale: f64 },
    /// `γ_t = scale · V_t^(π,κ,0)/(T+1)`, the log-utility rule.
    LogOptimal { scale: f64 },
}

/// A constant-proportion strategy together with the deflator it is measured against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WealthStrategy {
    pub pi: f64,
    pub kappa: f64,
    pub consumption: ConsumptionRule,
    pub deflator: DualControls,
}

impl WealthStrategy {
    /// `(π̂, κ̂, γ̂)`; log utility uses the wealth-proportional rule.
    pub fn optimal(config: &ModelConfig, s: &OptimalStrategy) -> Self {
        let consumption = if config.preferences.eta == 1.0 {
            ConsumptionRule::LogOptimal { scale: 1.0 }
        } else {
            ConsumptionRule::DualOptimal {
                x_one: s.x_one,
                scale: 1.0,
            }
        };
        Self {
            pi: s.pi,
            kappa: s.kappa,
            consumption,
            deflator: s.controls,
        }
    }

    pub fn without_consumption(mut self) -> Self {
        self.consumption = ConsumptionRule::Zero;
        self
    }

    pub fn scaled_consumption(mut self, factor: f64) -> Self {
        self.consumption = match self.consumption {
            ConsumptionRule::Zero => ConsumptionRule::Zero,
            ConsumptionRule::DualOptimal { x_one, scale } => ConsumptionRule::DualOptimal {
                x_one,
                scale: scale * factor,
            },
            ConsumptionRule::LogOptimal { scale } => ConsumptionRule::LogOptimal {
                scale: scale * factor,
            },
        };
        self
    }
}

/// Per-path results, in path order.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub terminal_wealth: Vec<f64>,
    /// `∫₀ᵀ U(γ_t) dt` by trapezoid; zero under [`ConsumptionRule::Zero`].
    pub consumption_utility: Vec<f64>,
    pub deflator_terminal: Vec<f64>,
    /// `H_T V_T + ∫₀ᵀ H_t γ_t dt`.
    pub budget: Vec<f64>,
    /// `∫₀ᵀ γ_t dt`.
    pub total_consumption: Vec<f64>,
    pub jump_counts: Vec<u32>,
    /// Row-major `[path][checkpoint]` deflator values.
    pub deflator_at: Vec<f64>,
    pub checkpoint_times: Vec<f64>,
    pub antithetic: bool,
    pub eta: f64,
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.terminal_wealth.len()
    }

    /// Deflator values at checkpoint `j` across all paths.
    pub fn deflator_column(&self, j: usize) -> Vec<f64> {
        let k = self.checkpoint_times.len();
        self.deflator_at.iter().skip(j).step_by(k).copied().collect()
    }

    pub fn estimate(&self, values: &[f64]) -> McEstimate {
        McEstimate::from_paths(values, self.antithetic)
    }
}

/// Sample mean with standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl McEstimate {
    /// From per-path values; antithetic pairs `(2i, 2i+1)` are averaged first.
    pub fn from_paths(values: &[f64], antithetic: bool) -> Self {
        if antithetic {
            let pairs: Vec<f64> = values.chunks_exact(2).map(|p| 0.5 * (p[0] + p[1])).collect();
            Self::from_samples(&pairs)
        } else {
            Self::from_samples(values)
        }
    }

    /// From independent samples, summed in index order with compensation.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: f64::NAN, std_error: f64::NAN, n };
        }
        let mean = neumaier_sum(xs.iter().copied()) / n as f64;
        let var = if n > 1 {
            neumaier_sum(xs.iter().map(|x| (x - mean) * (x - mean))) / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            std_error: (var / n as f64).sqrt(),
            n,
        }
    }

    /// Paired difference `a − b` on common random numbers.
    pub fn paired_difference(a: &[f64], b: &[f64], antithetic: bool) -> Self {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        Self::from_paths(&d, antithetic)
    }

    /// `|mean − target| ≤ k · SE`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_error
    }
}

fn neumaier_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// CRRA utility; `η = 1` is log.
pub fn crra_utility(x: f64, eta: f64) -> f64 {
    if eta == 1.0 {
        x.ln()
    } else {
        x.powf(1.0 - eta) / (1.0 - eta)
    }
}

/// Randomness for one path.
struct PathNoise {
    normals: ChaCha8Rng,
    jumps: ChaCha8Rng,
    sign: f64,
    next_jump: f64,
    lambda: f64,
}

impl PathNoise {
    fn new(seed: u64, path: usize, antithetic: bool, lambda: f64) -> Self {
        let (stream, sign) = if antithetic {
            ((path / 2) as u64, if path % 2 == 0 { 1.0 } else { -1.0 })
        } else {
            (path as u64, 1.0)
        };
        let mut normals = ChaCha8Rng::seed_from_u64(seed);
        normals.set_stream(2 * stream);
        let mut jumps = ChaCha8Rng::seed_from_u64(seed);
        jumps.set_stream(2 * stream + 1);
        let mut noise = Self {
            normals,
            jumps,
            sign,
            next_jump: f64::INFINITY,
            lambda,
        };
        if lambda > 0.0 {
            noise.next_jump = noise.arrival_gap();
        }
        noise
    }

    fn arrival_gap(&mut self) -> f64 {
        let e: f64 = self.jumps.sample(Exp1);
        e / self.lambda
    }

    fn gaussian_pair(&mut self) -> (f64, f64) {
        let z1: f64 = self.normals.sample(StandardNormal);
        let z2: f64 = self.normals.sample(StandardNormal);
        (self.sign * z1, self.sign * z2)
    }

    /// Claim sizes arriving in `(.., t_end]`, in arrival order.
    fn claims_until(&mut self, t_end: f64, sampler: &ClaimSampler, mut on_claim: impl FnMut(f64)) {
        while self.next_jump <= t_end {
            let y = sampler.sample(&mut self.jumps);
            on_claim(y);
            self.next_jump += self.arrival_gap();
        }
    }
}

/// Constant coefficients of the log dynamics, shared by all paths.
struct Coefficients {
    dt: f64,
    sqrt_dt: f64,
    horizon: f64,
    x: f64,
    eta: f64,
    // homogeneous wealth factor Φ
    wealth_drift: f64,
    wealth_load: (f64, f64),
    kappa: f64,
    // deflator H
    deflator_drift: f64,
    deflator_load: (f64, f64),
    deflator_kappa: f64,
    deflator_eta: f64,
}

impl Coefficients {
    fn new(config: &ModelConfig, strategy: &WealthStrategy, spec: &SimulationSpec) -> Result<Self> {
        let m = &config.market;
        let l = &config.liability;
        let c = config.claims.support_max();
        for k in [strategy.kappa, strategy.deflator.kappa] {
            if !(k * c < 1.0) {
                return Err(AlmError::DomainError { kappa: k, limit: c });
            }
        }
        let theta = config.theta();
        let rho_perp = (1.0 - l.rho * l.rho).max(0.0).sqrt();
        let s1 = strategy.pi * m.sigma - strategy.kappa * l.rho * l.b;
        let s2 = -strategy.kappa * l.b * rho_perp;
        let d = strategy.deflator;
        // λ ∫ (φ² − 1) dF, the compensator of the deflator's jump part
        let compensator = if l.lambda == 0.0 {
            0.0
        } else {
            let e_phi2 = config.claims.expect(Transform::DeflatorPower {
                kappa: d.kappa,
                eta: d.eta,
                q: 1.0,
            })?;
            l.lambda * (e_phi2 - 1.0)
        };
        let horizon = config.preferences.horizon;
        let dt = horizon / spec.n_steps as f64;
        let (drift, load) = match spec.scheme {
            // Itô correction only enters the log scheme
            Scheme::LogEuler => (0.5, 0.5),
            Scheme::Euler => (0.0, 0.0),
        };
        Ok(Self {
            dt,
            sqrt_dt: dt.sqrt(),
            horizon,
            x: config.preferences.initial_wealth,
            eta: config.preferences.eta,
            wealth_drift: m.r + strategy.pi * (m.mu - m.r) + strategy.kappa * (l.premium - l.a)
                - drift * (s1 * s1 + s2 * s2),
            wealth_load: (s1, s2),
            kappa: strategy.kappa,
            deflator_drift: -m.r - compensator - load * (theta * theta + d.phi1 * d.phi1),
            deflator_load: (-theta, -d.phi1),
            deflator_kappa: d.kappa,
            deflator_eta: d.eta,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
struct PathOutcome {
    terminal_wealth: f64,
    consumption_utility: f64,
    deflator_terminal: f64,
    budget: f64,
    total_consumption: f64,
    jumps: u32,
    deflator_at: Vec<f64>,
}

/// One row of a per-path trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub path: usize,
    pub t: f64,
    pub wealth: f64,
    pub deflator: f64,
    pub consumption_rate: f64,
    pub cumulative_consumption: f64,
}

fn consumption_at(rule: ConsumptionRule, co: &Coefficients, phi: f64, h: f64) -> f64 {
    match rule {
        ConsumptionRule::Zero => 0.0,
        ConsumptionRule::DualOptimal { x_one, scale } => scale * co.x / x_one * h.powf(-1.0 / co.eta),
        ConsumptionRule::LogOptimal { scale } => scale * co.x * phi / (co.horizon + 1.0),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_path(
    path: usize,
    co: &Coefficients,
    rule: ConsumptionRule,
    spec: &SimulationSpec,
    lambda: f64,
    sampler: &ClaimSampler,
    mut trace: Option<&mut Vec<TracePoint>>,
) -> Result<PathOutcome> {
    let mut noise = PathNoise::new(spec.seed, path, spec.antithetic, lambda);
    let consumes = rule != ConsumptionRule::Zero;
    let log_scheme = spec.scheme == Scheme::LogEuler;

    let mut phi = 1.0f64;
    let mut h = 1.0f64;
    let mut log_phi = 0.0f64;
    let mut log_h = 0.0f64;
    // Euler wealth; under LogEuler it is recomputed from Φ and the accumulator
    let mut wealth = co.x;
    let mut accum = 0.0f64; // ∫ γ/Φ
    let mut budget_int = 0.0f64; // ∫ H γ
    let mut util_int = 0.0f64; // ∫ U(γ)
    let mut consumed = 0.0f64; // ∫ γ
    let mut jumps = 0u32;
    let mut deflator_at = Vec::with_capacity(spec.checkpoints.len());
    let mut next_checkpoint = 0usize;

    let mut gamma = consumption_at(rule, co, phi, h);
    let mut util = if consumes { crra_utility(gamma, co.eta) } else { 0.0 };
    if let Some(tr) = trace.as_deref_mut() {
        tr.push(TracePoint {
            path,
            t: 0.0,
            wealth,
            deflator: h,
            consumption_rate: gamma,
            cumulative_consumption: 0.0,
        });
    }

    for k in 1..=spec.n_steps {
        let t = k as f64 * co.dt;
        let t_end = if k == spec.n_steps { co.horizon } else { t };
        let (z1, z2) = noise.gaussian_pair();
        let (dw1, dw2) = (z1 * co.sqrt_dt, z2 * co.sqrt_dt);

        let mut phi_jump = 1.0f64;
        let mut h_jump = 1.0f64;
        let mut log_phi_jump = 0.0f64;
        let mut log_h_jump = 0.0f64;
        noise.claims_until(t_end, sampler, |y| {
            jumps += 1;
            let f_w = 1.0 - co.kappa * y;
            let f_h = 1.0 - co.deflator_kappa * y;
            if log_scheme {
                log_phi_jump += f_w.ln();
                log_h_jump -= co.deflator_eta * f_h.ln();
            } else {
                phi_jump *= f_w;
                h_jump *= f_h.powf(-co.deflator_eta);
            }
        });

        let wealth_shock = co.wealth_load.0 * dw1 + co.wealth_load.1 * dw2;
        let deflator_shock = co.deflator_load.0 * dw1 + co.deflator_load.1 * dw2;
        let prev_phi = phi;
        let prev_h = h;
        if log_scheme {
            log_phi += co.wealth_drift * co.dt + wealth_shock + log_phi_jump;
            log_h += co.deflator_drift * co.dt + deflator_shock + log_h_jump;
            phi = log_phi.exp();
            h = log_h.exp();
        } else {
            let growth = 1.0 + co.wealth_drift * co.dt + wealth_shock;
            phi *= growth * phi_jump;
            h *= (1.0 + co.deflator_drift * co.dt + deflator_shock) * h_jump;
            wealth = (wealth * growth - gamma * co.dt) * phi_jump;
        }
        if !(h > 0.0) || !(phi > 0.0) {
            return Err(AlmError::PositivityBreach { path, time: t });
        }

        let next_gamma = consumption_at(rule, co, phi, h);
        let half = 0.5 * co.dt;
        if consumes {
            let next_util = crra_utility(next_gamma, co.eta);
            util_int += half * (util + next_util);
            util = next_util;
            accum += half * (gamma / prev_phi + next_gamma / phi);
            budget_int += half * (prev_h * gamma + h * next_gamma);
            consumed += half * (gamma + next_gamma);
        }
        gamma = next_gamma;
        if log_scheme {
            wealth = phi * (co.x - accum);
        }
        if !(wealth > 0.0) {
            return Err(AlmError::PositivityBreach { path, time: t });
        }

        while next_checkpoint < spec.checkpoints.len() && spec.checkpoints[next_checkpoint] == k {
            deflator_at.push(h);
            next_checkpoint += 1;
        }
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(TracePoint {
                path,
                t,
                wealth,
                deflator: h,
                consumption_rate: gamma,
                cumulative_consumption: consumed,
            });
        }
    }

    Ok(PathOutcome {
        terminal_wealth: wealth,
        consumption_utility: util_int,
        deflator_terminal: h,
        budget: h * wealth + budget_int,
        total_consumption: consumed,
        jumps,
        deflator_at,
    })
}

fn sorted_checkpoints(spec: &SimulationSpec) -> SimulationSpec {
    let mut s = spec.clone();
    s.checkpoints.sort_unstable();
    s
}

/// Simulate wealth and deflator paths under `strategy`.
pub fn simulate_wealth(
    config: &ModelConfig,
    strategy: &WealthStrategy,
    spec: &SimulationSpec,
) -> Result<PathEnsemble> {
    spec.validate()?;
    let spec = sorted_checkpoints(spec);
    let co = Coefficients::new(config, strategy, &spec)?;
    let sampler = config.claims.sampler()?;
    let lambda = config.liability.lambda;
    let outcomes = try_map_indexed(spec.n_paths, spec.execution, |i| {
        run_path(i, &co, strategy.consumption, &spec, lambda, &sampler, None)
    })?;

    let n = outcomes.len();
    let mut e = PathEnsemble {
        terminal_wealth: Vec::with_capacity(n),
        consumption_utility: Vec::with_capacity(n),
        deflator_terminal: Vec::with_capacity(n),
        budget: Vec::with_capacity(n),
        total_consumption: Vec::with_capacity(n),
        jump_counts: Vec::with_capacity(n),
        deflator_at: Vec::with_capacity(n * spec.checkpoints.len()),
        checkpoint_times: spec.checkpoints.iter().map(|&k| k as f64 * co.dt).collect(),
        antithetic: spec.antithetic,
        eta: config.preferences.eta,
    };
    for o in outcomes {
        e.terminal_wealth.push(o.terminal_wealth);
        e.consumption_utility.push(o.consumption_utility);
        e.deflator_terminal.push(o.deflator_terminal);
        e.budget.push(o.budget);
        e.total_consumption.push(o.total_consumption);
        e.jump_counts.push(o.jumps);
        e.deflator_at.extend(o.deflator_at);
    }
    Ok(e)
}

/// Deflator marginals only: wealth is run at `π = κ = 0` with no consumption.
pub fn simulate_deflator(
    config: &ModelConfig,
    controls: &DualControls,
    spec: &SimulationSpec,
) -> Result<PathEnsemble> {
    let strategy = WealthStrategy {
        pi: 0.0,
        kappa: 0.0,
        consumption: ConsumptionRule::Zero,
        deflator: *controls,
    };
    simulate_wealth(config, &strategy, spec)
}

/// Full trajectories of the first `n_paths` paths (same randomness as
/// [`simulate_wealth`]).
pub fn trace_paths(
    config: &ModelConfig,
    strategy: &WealthStrategy,
    spec: &SimulationSpec,
    n_paths: usize,
) -> Result<Vec<TracePoint>> {
    spec.validate()?;
    let co = Coefficients::new(config, strategy, spec)?;
    let sampler = config.claims.sampler()?;
    let mut out = Vec::with_capacity(n_paths.min(spec.n_paths) * (spec.n_steps + 1));
    for i in 0..n_paths.min(spec.n_paths) {
        run_path(i, &co, strategy.consumption, spec, config.liability.lambda, &sampler, Some(&mut out))?;
    }
    Ok(out)
}

/// Write a trace as CSV: `path,t,wealth,deflator,consumption_rate,cumulative_consumption`.
pub fn write_trace_csv<W: Write>(mut w: W, points: &[TracePoint]) -> std::io::Result<()> {
    writeln!(w, "path,t,wealth,deflator,consumption_rate,cumulative_consumption")?;
    for p in points {
        writeln!(
            w,
            "{},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}",
            p.path, p.t, p.wealth, p.deflator, p.consumption_rate, p.cumulative_consumption
        )?;
    }
    Ok(())
}

/// Per-path realized utility `∫₀ᵀ U(γ_t) dt + U(V_T)`.
pub fn realized_utility(ensemble: &PathEnsemble) -> Result<Vec<f64>> {
    ensemble
        .terminal_wealth
        .iter()
        .zip(&ensemble.consumption_utility)
        .enumerate()
        .map(|(path, (&v, &cu))| {
            let u = cu + crra_utility(v, ensemble.eta);
            if u.is_finite() {
                Ok(u)
            } else {
                Err(AlmError::UtilityOverflow {
                    path,
                    wealth: v,
                    eta: ensemble.eta,
                })
            }
        })
        .collect()
}

/// `J = E[∫₀ᵀ U(γ_t) dt + U(V_T)]`.
pub fn estimate_objective(ensemble: &PathEnsemble) -> Result<McEstimate> {
    Ok(ensemble.estimate(&realized_utility(ensemble)?))
}
