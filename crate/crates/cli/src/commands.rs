//! The five subcommands. Each writes its CSV files and returns a
//! human-readable message; the caller decides where that goes.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use alm_core::duality::{eval_h, eval_h_extended, existence_margin, optimal_pi, solve_kappa, strategy_at, OptimalStrategy};
use alm_core::error::AlmError;
use alm_core::model::ModelConfig;
use alm_core::simulate::{estimate_objective, simulate_wealth, trace_paths, write_trace_csv, McEstimate, WealthStrategy};
use alm_core::verify::{verify_strategy, PerturbationGrid, VerificationReport};

use crate::config::{ConsumptionChoice, RunConfig, StrategyFile};
use crate::error::CliError;
use crate::format::sig9;

pub const SWEEP_COLUMNS: [&str; 11] = [
    "rho",
    "eta",
    "kappa_hat",
    "pi_hat",
    "pi_merton",
    "phi1",
    "h_at_zero",
    "lambda_rate",
    "x_one",
    "mode",
    "status",
];
pub const CURVE_COLUMNS: [&str; 4] = ["rho", "eta", "kappa", "h"];
pub const SIMULATE_COLUMNS: [&str; 3] = ["statistic", "value", "std_error"];

/// What a command produced.
#[derive(Debug)]
pub struct CommandOutput {
    pub files: Vec<PathBuf>,
    pub message: String,
    /// Set when the command ran to completion but must still exit non-zero.
    pub failure: Option<CliError>,
}

impl CommandOutput {
    fn ok(files: Vec<PathBuf>, message: String) -> Self {
        Self { files, message, failure: None }
    }
}

/// Outcome of solving one `(ρ, η)` cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowStatus {
    Ok,
    /// Root found below zero under `allow_negative_kappa`; not claimed optimal.
    NegativeKappa,
    NoRoot,
    NumericalFailure,
}

impl RowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ok => "ok",
            Self::NegativeKappa => "negative_kappa",
            Self::NoRoot => "no_root",
            Self::NumericalFailure => "numerical_failure",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub rho: f64,
    pub eta: f64,
    pub strategy: Option<OptimalStrategy>,
    pub pi_merton: f64,
    pub h_at_zero: Option<f64>,
    pub status: RowStatus,
}

impl SweepRow {
    fn record(&self, model: &ModelConfig) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(sig9).unwrap_or_default();
        let s = self.strategy.as_ref();
        vec![
            sig9(self.rho),
            sig9(self.eta),
            opt(s.map(|s| s.kappa)),
            opt(s.map(|s| s.pi)),
            sig9(self.pi_merton),
            opt(s.map(|s| s.controls.phi1)),
            opt(self.h_at_zero),
            opt(s.map(|s| s.dual_rate)),
            opt(s.map(|s| s.x_one)),
            model.claims.mode().as_str().to_string(),
            self.status.as_str().to_string(),
        ]
    }
}

fn solve_row(model: &ModelConfig, cfg: &RunConfig) -> Result<SweepRow, AlmError> {
    let rho = model.liability.rho;
    let eta = model.preferences.eta;
    let pi_merton = optimal_pi(model, 0.0).pi_merton;
    let base = SweepRow {
        rho,
        eta,
        strategy: None,
        pi_merton,
        h_at_zero: None,
        status: RowStatus::Ok,
    };
    match solve_kappa(model, &cfg.solver.options()) {
        Ok(rep) => Ok(SweepRow {
            strategy: Some(rep.strategy),
            h_at_zero: Some(rep.strategy.h_at_zero),
            status: if rep.strategy.kappa < 0.0 { RowStatus::NegativeKappa } else { RowStatus::Ok },
            ..base
        }),
        Err(AlmError::NoRootInRange { h_at_zero }) => Ok(SweepRow {
            h_at_zero: Some(h_at_zero),
            status: RowStatus::NoRoot,
            ..base
        }),
        Err(e @ (AlmError::NumericalFailure(_) | AlmError::QuadratureFailure { .. } | AlmError::DomainError { .. })) => {
            // keep h(0) when it is itself computable
            match existence_margin(model) {
                Ok(h0) => Ok(SweepRow {
                    h_at_zero: Some(h0),
                    status: RowStatus::NumericalFailure,
                    ..base
                }),
                Err(_) => Err(e),
            }
        }
        Err(e) => Err(e),
    }
}

fn write_rows(path: &PathBuf, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_solve(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let report = solve_kappa(&cfg.model, &cfg.solver.options())?;
    let s = report.strategy;
    let row = SweepRow {
        rho: cfg.model.liability.rho,
        eta: cfg.model.preferences.eta,
        strategy: Some(s),
        pi_merton: s.pi_merton,
        h_at_zero: Some(s.h_at_zero),
        status: if s.kappa < 0.0 { RowStatus::NegativeKappa } else { RowStatus::Ok },
    };
    let path = cfg.output_path("solve")?;
    write_rows(&path, &SWEEP_COLUMNS, [row.record(&cfg.model)])?;
    let message = format!(
        "kappa_hat   = {}\npi_hat      = {}\npi_merton   = {}\nphi1        = {}\nh(0)        = {}\nlambda_rate = {}\nx_one       = {}\n\
         mode        = {}\nbrent: {} iterations, |h(kappa_hat)| = {:.3e}, bracket [{}, {}]",
        sig9(s.kappa),
        sig9(s.pi),
        sig9(s.pi_merton),
        sig9(s.controls.phi1),
        sig9(s.h_at_zero),
        sig9(s.dual_rate),
        sig9(s.x_one),
        cfg.model.claims.mode(),
        report.iterations,
        report.residual.abs(),
        sig9(report.bracket.0),
        sig9(report.bracket.1),
    );
    Ok(CommandOutput::ok(vec![path], message))
}

/// One row per `(ρ, η)` pair; cells without a root are reported, not fatal.
pub fn sweep_rows(cfg: &RunConfig) -> Result<Vec<SweepRow>, CliError> {
    cfg.sweep
        .pairs()
        .into_iter()
        .map(|(rho, eta)| {
            let model = cfg.model.with_rho_eta(rho, eta)?;
            Ok(solve_row(&model, cfg)?)
        })
        .collect()
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let rows = sweep_rows(cfg)?;
    let path = cfg.output_path("sweep")?;
    write_rows(&path, &SWEEP_COLUMNS, rows.iter().map(|r| r.record(&cfg.model)))?;
    let solved = rows.iter().filter(|r| r.strategy.is_some()).count();
    let message = format!("{} rows ({solved} solved) -> {}", rows.len(), path.display());
    Ok(CommandOutput::ok(vec![path], message))
}

/// `(ρ, η)` pairs for which curves are drawn: the sweep, or the model's own pair.
fn curve_pairs(cfg: &RunConfig) -> Vec<(f64, f64)> {
    let pairs = cfg.sweep.pairs();
    if pairs.is_empty() {
        vec![(cfg.model.liability.rho, cfg.model.preferences.eta)]
    } else {
        pairs
    }
}

/// The `κ` grid of `[curve]`.
pub fn curve_grid(cfg: &RunConfig) -> Result<Vec<f64>, CliError> {
    let c = &cfg.curve;
    let lo = c.kappa_min;
    let hi = c.kappa_max.unwrap_or(1.0 / cfg.model.claims.limit() - 1e-6);
    if c.points < 2 {
        return Err(CliError::Config(format!("curve.points must be >= 2, got {}", c.points)));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(CliError::Config(format!("curve range [{lo}, {hi}] is empty")));
    }
    if lo < 0.0 && !cfg.solver.allow_negative_kappa {
        return Err(CliError::Config(format!(
            "curve.kappa_min = {lo} is negative; pass --allow-negative-kappa to plot there"
        )));
    }
    let n = c.points - 1;
    Ok((0..=n).map(|i| if i == n { hi } else { lo + (hi - lo) * i as f64 / n as f64 }).collect())
}

pub fn cmd_curve(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let grid = curve_grid(cfg)?;
    let mut rows = Vec::with_capacity(grid.len() * curve_pairs(cfg).len());
    for (rho, eta) in curve_pairs(cfg) {
        let model = cfg.model.with_rho_eta(rho, eta)?;
        for &k in &grid {
            let h = if k < 0.0 { eval_h_extended(&model, k)? } else { eval_h(&model, k)? };
            rows.push(vec![sig9(rho), sig9(eta), sig9(k), sig9(h)]);
        }
    }
    let path = cfg.output_path("curve")?;
    let n = rows.len();
    write_rows(&path, &CURVE_COLUMNS, rows)?;
    let message = format!("{n} curve points -> {}", path.display());
    Ok(CommandOutput::ok(vec![path], message))
}

/// The solved optimum, or the strategy described by `file`.
pub fn candidate_strategy(cfg: &RunConfig, file: Option<&StrategyFile>) -> Result<OptimalStrategy, CliError> {
    let model = &cfg.model;
    let mut s = match file.and_then(|f| f.kappa) {
        Some(kappa) => strategy_at(model, kappa, existence_margin(model)?)?,
        None => solve_kappa(model, &cfg.solver.options())?.strategy,
    };
    if let Some(pi) = file.and_then(|f| f.pi) {
        s.pi = pi;
    }
    Ok(s)
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    match sorted.get(i + 1) {
        Some(&next) if frac > 0.0 => sorted[i] + frac * (next - sorted[i]),
        _ => sorted[i],
    }
}

pub fn cmd_simulate(cfg: &RunConfig, file: Option<&StrategyFile>) -> Result<CommandOutput, CliError> {
    let s = candidate_strategy(cfg, file)?;
    let mut strategy = WealthStrategy::optimal(&cfg.model, &s);
    if file.is_some_and(|f| f.consumption == ConsumptionChoice::Zero) {
        strategy = strategy.without_consumption();
    }
    let e = simulate_wealth(&cfg.model, &strategy, &cfg.sim)?;
    let objective = estimate_objective(&e)?;
    let x = cfg.model.preferences.initial_wealth;
    let budget: Vec<f64> = e.budget.iter().map(|b| b - x).collect();
    let jumps: Vec<f64> = e.jump_counts.iter().map(|&j| f64::from(j)).collect();
    let mut sorted = e.terminal_wealth.clone();
    sorted.sort_by(f64::total_cmp);

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut stat = |name: &str, value: f64, se: Option<f64>| {
        rows.push(vec![name.to_string(), sig9(value), se.map(sig9).unwrap_or_default()]);
    };
    let with_se = |m: McEstimate| (m.mean, Some(m.std_error));
    stat("kappa", strategy.kappa, None);
    stat("pi", strategy.pi, None);
    let (m, se) = with_se(e.estimate(&e.terminal_wealth));
    stat("terminal_wealth_mean", m, se);
    for (name, p) in [
        ("terminal_wealth_q01", 0.01),
        ("terminal_wealth_q05", 0.05),
        ("terminal_wealth_q25", 0.25),
        ("terminal_wealth_q50", 0.50),
        ("terminal_wealth_q75", 0.75),
        ("terminal_wealth_q95", 0.95),
        ("terminal_wealth_q99", 0.99),
    ] {
        stat(name, quantile(&sorted, p), None);
    }
    let (m, se) = with_se(e.estimate(&jumps));
    stat("jump_count_mean", m, se);
    stat("jump_count_max", jumps.iter().copied().fold(0.0, f64::max), None);
    let (m, se) = with_se(e.estimate(&e.total_consumption));
    stat("total_consumption_mean", m, se);
    let (m, se) = with_se(objective);
    stat("objective", m, se);
    let (m, se) = with_se(e.estimate(&budget));
    stat("budget_residual", m, se);

    let path = cfg.output_path("simulate")?;
    write_rows(&path, &SIMULATE_COLUMNS, rows)?;
    let mut files = vec![path];
    if cfg.output.trace_paths > 0 {
        let points = trace_paths(&cfg.model, &strategy, &cfg.sim, cfg.output.trace_paths)?;
        let tpath = cfg.output_path("trace")?;
        let mut w = BufWriter::new(File::create(&tpath)?);
        write_trace_csv(&mut w, &points)?;
        std::io::Write::flush(&mut w)?;
        files.push(tpath);
    }
    let message = format!(
        "{} paths x {} steps, seed {}: J = {} +- {} (1 SE), E[V_T] = {}",
        cfg.sim.n_paths,
        cfg.sim.n_steps,
        cfg.sim.seed,
        sig9(objective.mean),
        sig9(objective.std_error),
        sig9(e.estimate(&e.terminal_wealth).mean),
    );
    Ok(CommandOutput::ok(files, message))
}

pub fn verification_report(cfg: &RunConfig, file: Option<&StrategyFile>) -> Result<VerificationReport, CliError> {
    let s = candidate_strategy(cfg, file)?;
    Ok(verify_strategy(&cfg.model, &s, &PerturbationGrid::default(), &cfg.sim)?)
}

pub fn cmd_verify(cfg: &RunConfig, file: Option<&StrategyFile>) -> Result<CommandOutput, CliError> {
    let report = verification_report(cfg, file)?;
    let path = cfg.output_path("verify")?;
    let mut w = BufWriter::new(File::create(&path)?);
    report.write_csv(&mut w)?;
    std::io::Write::flush(&mut w)?;
    let failure = (!report.all_passed()).then(|| {
        CliError::VerificationFailed(report.failures().map(|c| c.name.as_str()).collect::<Vec<_>>().join(", "))
    });
    Ok(CommandOutput {
        files: vec![path],
        message: report.summary(),
        failure,
    })
}
