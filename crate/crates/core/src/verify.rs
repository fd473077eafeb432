//! Verification harness for a solved strategy.
//!
//! Three families of checks:
//!
//! 1. the CRRA optimality conditions and dual feasibility, evaluated in closed
//!    form ([`check_conditions`]);
//! 2. the deflator budget `E[H_T V_T + ∫ H γ dt] ≤ x`, with equality at the
//!    optimum ([`budget_identity`]);
//! 3. dominance of the objective over a grid of perturbed strategies, on
//!    common random numbers ([`objective_dominance`]).
//!
//! Dominance on a finite grid is evidence of optimality, not a proof.

use std::fmt::Write as _;
use std::io::Write;

use crate::duality::{feasibility_residual, OptimalStrategy};
use crate::error::{AlmError, Result};
use crate::model::ModelConfig;
use crate::simulate::{estimate_objective, realized_utility, simulate_wealth, McEstimate, SimulationSpec, WealthStrategy};

/// Residual bound for the closed-form conditions.
pub const CONDITION_TOL: f64 = 1e-9;
/// Budget checks use `k · SE` with this `k`.
pub const BUDGET_SE: f64 = 3.0;
/// Dominance allows `J(opt) − J(perturbed) ≥ −k · SE` with this `k`.
pub const DOMINANCE_SE: f64 = 2.0;
/// Floor under the Monte Carlo bands, for estimators whose SE is exactly 0.
const ROUNDING_FLOOR: f64 = 1e-12;

const Y_GRID: usize = 201;

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationGrid {
    /// Relative offsets: `π = π̂ + offset · |π̂|`.
    pub pi_offsets: Vec<f64>,
    /// Relative offsets: `κ = κ̂ (1 + offset)`.
    pub kappa_offsets: Vec<f64>,
    /// Multiplicative scales on `γ̂`.
    pub consumption_scales: Vec<f64>,
}

impl Default for PerturbationGrid {
    fn default() -> Self {
        Self {
            pi_offsets: vec![-0.25, -0.10, 0.10, 0.25],
            kappa_offsets: vec![-0.25, -0.10, 0.10, 0.25],
            consumption_scales: vec![0.75, 1.25],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionResiduals {
    /// `π̂σ − ρbκ̂ − θ/η`
    pub portfolio: f64,
    /// `φ¹ + ηbκ̂√(1−ρ²)`
    pub diffusion_control: f64,
    /// `max_y |(1 − κ̂y) − φ²(y)^(−1/η)|` over a grid of `[0, c]`
    pub jump_control: f64,
    /// dual feasibility at `(φ¹, φ²)`
    pub feasibility: f64,
}

impl ConditionResiduals {
    pub fn max_abs(&self) -> f64 {
        [self.portfolio, self.diffusion_control, self.jump_control, self.feasibility]
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn named(&self) -> [(&'static str, f64); 4] {
        [
            ("portfolio_condition", self.portfolio),
            ("diffusion_control_condition", self.diffusion_control),
            ("jump_control_condition", self.jump_control),
            ("dual_feasibility", self.feasibility),
        ]
    }
}

pub fn check_conditions(config: &ModelConfig, strategy: &OptimalStrategy) -> Result<ConditionResiduals> {
    let m = &config.market;
    let l = &config.liability;
    let eta = config.preferences.eta;
    let kappa = strategy.kappa;
    let rho_perp = (1.0 - l.rho * l.rho).max(0.0).sqrt();
    let controls = &strategy.controls;

    let portfolio = strategy.pi * m.sigma - l.rho * l.b * kappa - config.theta() / eta;
    let diffusion_control = controls.phi1 + eta * l.b * kappa * rho_perp;
    let c = config.claims.limit();
    let jump_control = (0..Y_GRID)
        .map(|i| {
            let y = c * i as f64 / (Y_GRID - 1) as f64;
            ((1.0 - kappa * y) - controls.phi2(y).powf(-1.0 / eta)).abs()
        })
        .fold(0.0f64, f64::max);
    let feasibility = feasibility_residual(config, controls)?;
    Ok(ConditionResiduals {
        portfolio,
        diffusion_control,
        jump_control,
        feasibility,
    })
}

/// `E[H_T V_T + ∫₀ᵀ H_t γ_t dt] − x`.
pub fn budget_identity(config: &ModelConfig, strategy: &WealthStrategy, spec: &SimulationSpec) -> Result<McEstimate> {
    let e = simulate_wealth(config, strategy, spec)?;
    let x = config.preferences.initial_wealth;
    let shifted: Vec<f64> = e.budget.iter().map(|b| b - x).collect();
    Ok(e.estimate(&shifted))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyRow {
    pub label: String,
    pub pi: f64,
    pub kappa: f64,
    pub consumption_scale: f64,
    /// `E[H_T V_T + ∫ H γ] − x`
    pub budget: McEstimate,
    pub objective: McEstimate,
    /// `J(center) − J(this)`; `None` for the center itself.
    pub advantage: Option<McEstimate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub conditions: ConditionResiduals,
    pub rows: Vec<StrategyRow>,
    pub skipped: Vec<String>,
    pub checks: Vec<Check>,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    /// Check rows first, then budget/objective/advantage rows per strategy, then skipped entries.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "kind,name,pi,kappa,consumption_scale,estimate,std_error,threshold,pass"
        )?;
        for c in &self.checks {
            writeln!(w, "check,{},,,,{:.8e},,{:.8e},{}", c.name, c.value, c.threshold, c.pass)?;
        }
        for r in &self.rows {
            let row = |w: &mut W, what: &str, e: &McEstimate| {
                writeln!(
                    w,
                    "{what},{},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},,",
                    r.label, r.pi, r.kappa, r.consumption_scale, e.mean, e.std_error
                )
            };
            row(&mut w, "budget", &r.budget)?;
            row(&mut w, "objective", &r.objective)?;
            if let Some(a) = &r.advantage {
                row(&mut w, "advantage", a)?;
            }
        }
        for s in &self.skipped {
            writeln!(w, "skipped,{s},,,,,,,")?;
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let passed = self.checks.iter().filter(|c| c.pass).count();
        let _ = writeln!(s, "{passed}/{} checks passed", self.checks.len());
        for c in &self.checks {
            let _ = writeln!(
                s,
                "  [{}] {:<40} {:>+.3e}  (threshold {:.3e})",
                if c.pass { "pass" } else { "FAIL" },
                c.name,
                c.value,
                c.threshold
            );
        }
        for k in &self.skipped {
            let _ = writeln!(s, "  [skip] {k}");
        }
        s
    }
}

struct Candidate {
    label: String,
    strategy: WealthStrategy,
    scale: f64,
}

fn perturbations(config: &ModelConfig, center: &WealthStrategy, grid: &PerturbationGrid) -> (Vec<Candidate>, Vec<String>) {
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for &o in &grid.pi_offsets {
        out.push(Candidate {
            label: format!("pi{o:+}"),
            strategy: WealthStrategy {
                pi: center.pi + o * center.pi.abs(),
                ..*center
            },
            scale: 1.0,
        });
    }
    let c = config.claims.support_max();
    for &o in &grid.kappa_offsets {
        let kappa = center.kappa * (1.0 + o);
        let label = format!("kappa{o:+}");
        if kappa * c >= 1.0 {
            skipped.push(format!("{label}: kappa = {kappa} breaks kappa * c < 1"));
            continue;
        }
        out.push(Candidate {
            label,
            strategy: WealthStrategy { kappa, ..*center },
            scale: 1.0,
        });
    }
    for &s in &grid.consumption_scales {
        out.push(Candidate {
            label: format!("consumption*{s}"),
            strategy: center.scaled_consumption(s),
            scale: s,
        });
    }
    (out, skipped)
}

/// Seed used for grid entry `i` when common random numbers are off.
fn entry_seed(base: u64, i: usize) -> u64 {
    base.wrapping_add((i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Simulate `center` and every grid perturbation of it, and compare.
///
/// Rows are returned in grid order: center, π offsets, κ offsets, consumption scales.
/// Perturbations that leave `κc < 1` or drive wealth to zero on some path are
/// not admissible; they are listed in the second return value instead.
pub fn objective_dominance(
    config: &ModelConfig,
    center: &WealthStrategy,
    grid: &PerturbationGrid,
    spec: &SimulationSpec,
) -> Result<(Vec<StrategyRow>, Vec<String>)> {
    let x = config.preferences.initial_wealth;
    let base = simulate_wealth(config, center, spec)?;
    let base_utility = realized_utility(&base)?;
    let centered = |b: &[f64]| b.iter().map(|v| v - x).collect::<Vec<_>>();

    let mut rows = vec![StrategyRow {
        label: "center".into(),
        pi: center.pi,
        kappa: center.kappa,
        consumption_scale: 1.0,
        budget: base.estimate(&centered(&base.budget)),
        objective: estimate_objective(&base)?,
        advantage: None,
    }];

    let (candidates, mut skipped) = perturbations(config, center, grid);
    for (i, cand) in candidates.into_iter().enumerate() {
        let mut entry_spec = spec.clone();
        if !spec.common_random_numbers {
            entry_spec.seed = entry_seed(spec.seed, i);
        }
        // A perturbation that ruins some path is outside the admissible set.
        let simulated = simulate_wealth(config, &cand.strategy, &entry_spec).and_then(|e| {
            let u = realized_utility(&e)?;
            Ok((e, u))
        });
        let (e, utility) = match simulated {
            Ok(v) => v,
            Err(err @ (AlmError::PositivityBreach { .. } | AlmError::UtilityOverflow { .. })) => {
                skipped.push(format!("{}: inadmissible, {err}", cand.label));
                continue;
            }
            Err(err) => return Err(err),
        };
        let objective = e.estimate(&utility);
        let advantage = if spec.common_random_numbers {
            McEstimate::paired_difference(&base_utility, &utility, spec.antithetic)
        } else {
            let b = rows[0].objective;
            McEstimate {
                mean: b.mean - objective.mean,
                std_error: (b.std_error.powi(2) + objective.std_error.powi(2)).sqrt(),
                n: b.n.min(objective.n),
            }
        };
        rows.push(StrategyRow {
            label: cand.label,
            pi: cand.strategy.pi,
            kappa: cand.strategy.kappa,
            consumption_scale: cand.scale,
            budget: e.estimate(&centered(&e.budget)),
            objective,
            advantage: Some(advantage),
        });
    }
    Ok((rows, skipped))
}

/// Run all checks for `strategy` (normally the solved optimum; any other
/// candidate should fail some of them).
pub fn verify_strategy(
    config: &ModelConfig,
    strategy: &OptimalStrategy,
    grid: &PerturbationGrid,
    spec: &SimulationSpec,
) -> Result<VerificationReport> {
    let conditions = check_conditions(config, strategy)?;
    let mut checks: Vec<Check> = conditions
        .named()
        .iter()
        .map(|&(name, v)| Check {
            name: name.into(),
            value: v,
            threshold: CONDITION_TOL,
            pass: v.abs() <= CONDITION_TOL,
        })
        .collect();

    let center = WealthStrategy::optimal(config, strategy);
    let (rows, skipped) = objective_dominance(config, &center, grid, spec)?;
    let floor = ROUNDING_FLOOR * config.preferences.initial_wealth;
    for r in &rows {
        let band = BUDGET_SE * r.budget.std_error + floor;
        match &r.advantage {
            None => checks.push(Check {
                name: "budget_equality:center".into(),
                value: r.budget.mean,
                threshold: band,
                pass: r.budget.mean.abs() <= band,
            }),
            Some(a) => {
                checks.push(Check {
                    name: format!("budget_inequality:{}", r.label),
                    value: r.budget.mean,
                    threshold: band,
                    pass: r.budget.mean <= band,
                });
                let band = DOMINANCE_SE * a.std_error + floor;
                checks.push(Check {
                    name: format!("dominance:{}", r.label),
                    value: a.mean,
                    threshold: -band,
                    pass: a.mean >= -band,
                });
            }
        }
    }
    Ok(VerificationReport {
        conditions,
        rows,
        skipped,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::duality::{eval_h, solve_kappa, strategy_at, DualControls, SolverOptions};
    use crate::model::fixtures;
    use crate::simulate::ConsumptionRule;

    fn solved(cfg: &ModelConfig) -> OptimalStrategy {
        solve_kappa(cfg, &SolverOptions::default()).unwrap().strategy
    }

    #[test]
    fn conditions_hold_at_the_solution() {
        for cfg in [fixtures::gamma(-0.6, 1.5), fixtures::pareto(0.3, 0.5), fixtures::gamma(-0.3, 0.7)] {
            let r = check_conditions(&cfg, &solved(&cfg)).unwrap();
            assert!(r.max_abs() <= CONDITION_TOL, "{r:?}");
        }
    }

    #[test]
    fn corrupted_kappa_shows_in_feasibility() {
        let cfg = fixtures::gamma(-0.6, 1.5);
        let s = solved(&cfg);
        let bad = strategy_at(&cfg, s.kappa + 0.01, s.h_at_zero).unwrap();
        let r = check_conditions(&cfg, &bad).unwrap();
        let slope = (eval_h(&cfg, s.kappa + 1e-6).unwrap() - eval_h(&cfg, s.kappa - 1e-6).unwrap()) / 2e-6;
        assert!(r.portfolio.abs() < 1e-12 && r.diffusion_control.abs() < 1e-12);
        assert!(((r.feasibility - slope * 0.01) / (slope * 0.01)).abs() < 0.05, "{} vs {}", r.feasibility, slope * 0.01);
    }

    #[test]
    fn perfect_correlation_zeroes_diffusion_control() {
        for rho in [-1.0, 1.0] {
            let cfg = fixtures::pareto(rho, 0.7);
            let s = strategy_at(&cfg, 0.1, 0.0).unwrap();
            let r = check_conditions(&cfg, &s).unwrap();
            assert_eq!(s.controls.phi1, 0.0);
            assert_eq!(r.diffusion_control, 0.0);
        }
    }

    #[test]
    fn conditions_ignore_initial_wealth() {
        let cfg = fixtures::gamma(-0.6, 1.5);
        let rich = cfg.modified(|raw| raw.preferences.initial_wealth = 250.0).unwrap();
        let a = check_conditions(&cfg, &solved(&cfg)).unwrap();
        let b = check_conditions(&rich, &solved(&rich)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn budget_is_exact_in_the_riskless_case() {
        let cfg = fixtures::gamma(0.0, 2.0)
            .modified(|raw| {
                raw.liability.lambda = 0.0;
                raw.liability.b = 0.0;
                raw.market.mu = raw.market.r;
            })
            .unwrap();
        let s = WealthStrategy {
            pi: 0.0,
            kappa: 0.0,
            consumption: ConsumptionRule::Zero,
            deflator: DualControls { phi1: 0.0, kappa: 0.0, eta: 2.0 },
        };
        let spec = SimulationSpec { n_paths: 8, n_steps: 16, ..SimulationSpec::default() };
        let b = budget_identity(&cfg, &s, &spec).unwrap();
        assert!(b.mean.abs() < 1e-14);
    }

    #[test]
    fn zero_perturbation_has_zero_advantage() {
        let cfg = fixtures::pareto(0.3, 1.2);
        let s = solved(&cfg);
        let center = WealthStrategy::optimal(&cfg, &s);
        let grid = PerturbationGrid {
            pi_offsets: vec![0.0],
            kappa_offsets: vec![],
            consumption_scales: vec![1.0],
        };
        let spec = SimulationSpec { n_paths: 200, n_steps: 16, ..SimulationSpec::default() };
        let (rows, _) = objective_dominance(&cfg, &center, &grid, &spec).unwrap();
        for r in &rows[1..] {
            let a = r.advantage.unwrap();
            assert_eq!((a.mean, a.std_error), (0.0, 0.0));
        }
    }

    #[test]
    fn infeasible_kappa_offsets_are_skipped() {
        let cfg = fixtures::gamma(-0.6, 0.15);
        let s = solved(&cfg);
        let center = WealthStrategy::optimal(&cfg, &s);
        let (cands, skipped) = perturbations(&cfg, &center, &PerturbationGrid::default());
        assert_eq!(skipped.len(), 2);
        assert_eq!(cands.len(), 8);
    }

    #[test]
    fn ruinous_perturbations_are_skipped() {
        // Against the deflator of an off-optimal κ, consumption is no longer
        // proportional to wealth and some perturbed paths run out of money.
        let cfg = fixtures::pareto(0.3, 1.2);
        let off = strategy_at(&cfg, 0.23, 0.0).unwrap();
        let spec = SimulationSpec { n_paths: 20_000, n_steps: 64, ..SimulationSpec::default() };
        let rep = verify_strategy(&cfg, &off, &PerturbationGrid::default(), &spec).unwrap();
        assert!(rep.skipped.iter().any(|s| s.contains("inadmissible")), "{:?}", rep.skipped);
        assert!(!rep.all_passed());
        assert!(rep.failures().any(|c| c.name.starts_with("dominance:kappa")));
    }

    #[test]
    fn report_csv_and_summary() {
        let cfg = fixtures::pareto(0.3, 1.2);
        let s = solved(&cfg);
        let spec = SimulationSpec { n_paths: 2000, n_steps: 32, ..SimulationSpec::default() };
        let rep = verify_strategy(&cfg, &s, &PerturbationGrid::default(), &spec).unwrap();
        // 4 conditions, center budget, and budget + dominance for 10 entries
        assert_eq!(rep.checks.len(), 4 + 1 + 2 * 10);
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("kind,name,pi,kappa,"));
        assert_eq!(text.lines().filter(|l| l.starts_with("check,")).count(), rep.checks.len());
        assert!(rep.summary().contains("checks passed"));
    }
}
