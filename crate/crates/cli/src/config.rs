//! Run configuration: one TOML document per experiment.
//!
//! ```toml
//! [market]        # r, mu, sigma
//! [liability]     # a, b, rho, lambda, premium
//! [claims]        # family, alpha, beta | gamma | y0, limit, truncation_mode
//! [preferences]   # eta, horizon, initial_wealth
//! [solver]        # x_tol, f_tol, max_iter, allow_negative_kappa
//! [sim]           # n_paths, n_steps, seed, scheme, antithetic, ...
//! [sweep]         # rho = [...], eta = [...]  or  pairs = [[rho, eta], ...]
//! [curve]         # points, kappa_min, kappa_max
//! [output]        # dir, stem, trace_paths
//! ```
//!
//! Only the model sections are required.

use std::path::{Path, PathBuf};

use alm_core::claims::{RawClaims, TruncationMode};
use alm_core::duality::SolverOptions;
use alm_core::model::{validate, LiabilityParams, MarketParams, ModelConfig, RawModel, RawPreferences};
use alm_core::simulate::SimulationSpec;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRunConfig {
    market: MarketParams,
    liability: LiabilityParams,
    claims: RawClaims,
    preferences: RawPreferences,
    #[serde(default)]
    solver: SolverSection,
    #[serde(default)]
    sim: SimulationSpec,
    #[serde(default)]
    sweep: SweepSection,
    #[serde(default)]
    curve: CurveSection,
    #[serde(default)]
    output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub x_tol: f64,
    pub f_tol: f64,
    pub max_iter: usize,
    pub allow_negative_kappa: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self {
            x_tol: d.x_tol,
            f_tol: d.f_tol,
            max_iter: d.max_iter,
            allow_negative_kappa: d.allow_negative_kappa,
        }
    }
}

impl SolverSection {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            x_tol: self.x_tol,
            f_tol: self.f_tol,
            max_iter: self.max_iter,
            allow_negative_kappa: self.allow_negative_kappa,
        }
    }
}

/// Either the cartesian product `rho × eta` or explicit `pairs`.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub rho: Vec<f64>,
    pub eta: Vec<f64>,
    pub pairs: Vec<(f64, f64)>,
}

impl SweepSection {
    /// Pairs in file order; the product is ρ-major.
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        let mut out = self.pairs.clone();
        for &rho in &self.rho {
            for &eta in &self.eta {
                out.push((rho, eta));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveSection {
    pub points: usize,
    pub kappa_min: f64,
    /// Defaults to `1/c − 1e-6`.
    pub kappa_max: Option<f64>,
}

impl Default for CurveSection {
    fn default() -> Self {
        Self {
            points: 200,
            kappa_min: 0.0,
            kappa_max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub stem: String,
    /// Number of full trajectories `simulate` dumps to `<stem>_trace.csv`.
    pub trace_paths: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            stem: "alm".into(),
            trace_paths: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub solver: SolverSection,
    pub sim: SimulationSpec,
    pub sweep: SweepSection,
    pub curve: CurveSection,
    pub output: OutputSection,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub mode: Option<TruncationMode>,
    pub allow_negative_kappa: bool,
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: &Overrides) -> Result<Self, CliError> {
        let mut raw: RawRunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(mode) = overrides.mode {
            raw.claims.truncation_mode = mode;
        }
        if let Some(seed) = overrides.seed {
            raw.sim.seed = seed;
        }
        if let Some(dir) = &overrides.out {
            raw.output.dir = dir.clone();
        }
        raw.solver.allow_negative_kappa |= overrides.allow_negative_kappa;

        let model = validate(&RawModel {
            market: raw.market,
            liability: raw.liability,
            claims: raw.claims,
            preferences: raw.preferences,
        })?;
        raw.sim.validate()?;
        for (rho, eta) in raw.sweep.pairs() {
            model.with_rho_eta(rho, eta)?;
        }
        if raw.output.stem.is_empty() || raw.output.stem.contains(['/', '\\']) {
            return Err(CliError::Config(format!(
                "output.stem must be a plain file-name prefix, got {:?}",
                raw.output.stem
            )));
        }
        Ok(Self {
            model,
            solver: raw.solver,
            sim: raw.sim,
            sweep: raw.sweep,
            curve: raw.curve,
            output: raw.output,
        })
    }

    /// `<dir>/<stem>_<suffix>.csv`, creating `dir` if needed.
    pub fn output_path(&self, suffix: &str) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(&self.output.dir).map_err(|e| {
            CliError::Config(format!("output directory {} is not writable: {e}", self.output.dir.display()))
        })?;
        Ok(self.output.dir.join(format!("{}_{suffix}.csv", self.output.stem)))
    }
}

/// Strategy overrides for `simulate` and `verify`, read from a separate file.
///
/// ```toml
/// kappa = 0.12        # evaluate at this κ instead of solving
/// pi = -0.3           # replaces the portfolio implied by κ
/// consumption = "zero"  # or "optimal" (default); simulate only
/// ```
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyFile {
    pub kappa: Option<f64>,
    pub pi: Option<f64>,
    pub consumption: ConsumptionChoice,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsumptionChoice {
    #[default]
    Optimal,
    Zero,
}

impl StrategyFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let s: Self = toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
        for (name, v) in [("kappa", s.kappa), ("pi", s.pi)] {
            if v.is_some_and(|v| !v.is_finite()) {
                return Err(CliError::Config(format!("strategy {name} must be finite")));
            }
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [market]
        r = 0.07
        mu = 0.09
        sigma = 0.21
        [liability]
        a = 0.3
        b = 2.0
        rho = -0.6
        lambda = 0.1
        premium = 1.0
        [claims]
        family = "pareto"
        alpha = 4.0
        gamma = 2.0
        limit = 3.0
        [preferences]
        eta = 0.7
    "#;

    #[test]
    fn defaults_fill_optional_sections() {
        let cfg = RunConfig::parse(MINIMAL, &Overrides::default()).unwrap();
        assert_eq!(cfg.sim, SimulationSpec::default());
        assert!(cfg.sweep.pairs().is_empty());
        assert_eq!(cfg.output.stem, "alm");
        assert_eq!(cfg.model.claims.mode(), TruncationMode::Atom);
    }

    #[test]
    fn overrides_win() {
        let o = Overrides {
            seed: Some(7),
            mode: Some(TruncationMode::Renormalized),
            out: Some("elsewhere".into()),
            allow_negative_kappa: true,
        };
        let cfg = RunConfig::parse(MINIMAL, &o).unwrap();
        assert_eq!(cfg.sim.seed, 7);
        assert_eq!(cfg.model.claims.mode(), TruncationMode::Renormalized);
        assert_eq!(cfg.output.dir, PathBuf::from("elsewhere"));
        assert!(cfg.solver.allow_negative_kappa);
    }

    #[test]
    fn sweep_pairs_then_product() {
        let text = format!("{MINIMAL}\n[sweep]\npairs = [[0.3, 1.2]]\nrho = [-0.6, -0.3]\neta = [0.7, 0.5]\n");
        let cfg = RunConfig::parse(&text, &Overrides::default()).unwrap();
        assert_eq!(
            cfg.sweep.pairs(),
            vec![(0.3, 1.2), (-0.6, 0.7), (-0.6, 0.5), (-0.3, 0.7), (-0.3, 0.5)]
        );
    }

    #[test]
    fn invalid_inputs_are_config_errors() {
        let bad_sigma = MINIMAL.replace("sigma = 0.21", "sigma = -1.0");
        let bad_pair = format!("{MINIMAL}\n[sweep]\npairs = [[1.5, 0.7]]\n");
        let unknown_key = MINIMAL.replace("[preferences]", "[preferences]\nfoo = 1");
        let odd_paths = format!("{MINIMAL}\n[sim]\nn_paths = 3\n");
        for text in [bad_sigma, bad_pair, unknown_key, odd_paths, "not toml [".into()] {
            let err = RunConfig::parse(&text, &Overrides::default()).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{err}");
        }
    }
}
