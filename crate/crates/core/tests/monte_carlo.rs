use alm_core::claims::{RawClaims, TruncationMode};
use alm_core::duality::{solve_kappa, strategy_at, SolverOptions};
use alm_core::exec::Execution;
use alm_core::model::{validate, LiabilityParams, MarketParams, ModelConfig, RawModel, RawPreferences};
use alm_core::simulate::{simulate_deflator, simulate_wealth, McEstimate, SimulationSpec, WealthStrategy};
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

fn model(claims: RawClaims, rho: f64, eta: f64, lambda: f64) -> ModelConfig {
    validate(&RawModel {
        market: MarketParams { r: 0.07, mu: 0.09, sigma: 0.21 },
        liability: LiabilityParams { a: 0.3, b: 2.0, rho, lambda, premium: 1.0 },
        claims,
        preferences: RawPreferences { eta, horizon: 1.0, initial_wealth: 1.0 },
    })
    .unwrap()
}

fn gamma_claims() -> RawClaims {
    RawClaims {
        family: "gamma".into(),
        alpha: Some(0.6),
        beta: Some(5.0),
        gamma: None,
        y0: None,
        limit: 3.0,
        truncation_mode: TruncationMode::Atom,
    }
}

fn pareto_claims() -> RawClaims {
    RawClaims {
        family: "pareto".into(),
        alpha: Some(4.0),
        beta: None,
        gamma: Some(2.0),
        ..gamma_claims()
    }
}

fn spec(n_paths: usize, n_steps: usize) -> SimulationSpec {
    SimulationSpec { n_paths, n_steps, ..SimulationSpec::default() }
}

#[test]
fn jump_counts_are_poisson() {
    let lambda = 2.0;
    let point = RawClaims { family: "point_mass".into(), y0: Some(0.5), alpha: None, beta: None, ..gamma_claims() };
    let cfg = model(point, -0.3, 0.7, lambda);
    // counts do not depend on the strategy; this config has no root in range
    let strategy = WealthStrategy::optimal(&cfg, &strategy_at(&cfg, 0.1, 0.0).unwrap());
    // antithetic pairs share their jump times, so count one path per pair
    let sp = SimulationSpec { antithetic: false, ..spec(50_000, 8) };
    let e = simulate_wealth(&cfg, &strategy, &sp).unwrap();

    let n = e.jump_counts.len() as f64;
    let top = 8;
    let mut observed = vec![0.0; top + 1];
    for &k in &e.jump_counts {
        observed[(k as usize).min(top)] += 1.0;
    }
    let pois = Poisson::new(lambda).unwrap();
    let mut chi2 = 0.0;
    for (k, &o) in observed.iter().enumerate() {
        let p = if k < top { pois.pmf(k as u64) } else { 1.0 - (0..top).map(|j| pois.pmf(j as u64)).sum::<f64>() };
        chi2 += (o - n * p).powi(2) / (n * p);
    }
    let p_value = 1.0 - ChiSquared::new(top as f64).unwrap().cdf(chi2);
    assert!(p_value > 1e-3, "chi2 = {chi2}, p = {p_value}");
}

#[test]
fn deflator_discounts_at_the_riskless_rate() {
    let cfg = model(pareto_claims(), 0.3, 1.2, 0.1);
    let s = solve_kappa(&cfg, &SolverOptions::default()).unwrap().strategy;
    let sp = SimulationSpec { checkpoints: vec![4, 8, 12, 16], ..spec(200_000, 16) };
    let e = simulate_deflator(&cfg, &s.controls, &sp).unwrap();
    for (j, &t) in e.checkpoint_times.iter().enumerate() {
        let est = e.estimate(&e.deflator_column(j));
        assert!(est.within((-0.07 * t).exp(), 3.0), "t = {t}: {est:?}");
    }
}

#[test]
fn expected_deflated_consumption_matches_dual_rate() {
    let cfg = model(gamma_claims(), -0.6, 1.5, 0.1);
    let s = solve_kappa(&cfg, &SolverOptions::default()).unwrap().strategy;
    let e = simulate_wealth(&cfg, &WealthStrategy::optimal(&cfg, &s), &spec(100_000, 256)).unwrap();
    let deflated: Vec<f64> = e
        .budget
        .iter()
        .zip(e.deflator_terminal.iter().zip(&e.terminal_wealth))
        .map(|(b, (h, v))| b - h * v)
        .collect();
    let est = e.estimate(&deflated);
    // E[H_t γ_t] = (x/𝒳(1)) e^(Λt)
    let lam = s.dual_rate;
    let expected = lam.exp_m1() / lam / s.x_one;
    assert!(est.within(expected, 3.0), "{est:?} vs {expected}");
}

#[test]
fn standard_error_shrinks_like_root_n() {
    let cfg = model(pareto_claims(), -0.6, 0.7, 0.1);
    let s = solve_kappa(&cfg, &SolverOptions::default()).unwrap().strategy;
    let strat = WealthStrategy::optimal(&cfg, &s);
    let se = |n| {
        let e = simulate_wealth(&cfg, &strat, &spec(n, 32)).unwrap();
        e.estimate(&e.terminal_wealth).std_error
    };
    let ratio = se(10_000) / se(40_000);
    assert!((ratio / 2.0 - 1.0).abs() < 0.2, "ratio {ratio}");
}

#[test]
fn execution_mode_does_not_change_results() {
    let cfg = model(gamma_claims(), -0.3, 0.5, 0.1);
    let s = solve_kappa(&cfg, &SolverOptions::default()).unwrap().strategy;
    let strat = WealthStrategy::optimal(&cfg, &s);
    let run = |execution| simulate_wealth(&cfg, &strat, &SimulationSpec { execution, ..spec(2_000, 32) }).unwrap();
    assert_eq!(run(Execution::Sequential), run(Execution::Parallel));
}

#[test]
fn antithetic_pairs_reduce_variance_of_linear_payoffs() {
    let cfg = model(pareto_claims(), 0.3, 1.2, 0.0);
    let s = solve_kappa(&cfg, &SolverOptions::default()).unwrap().strategy;
    let strat = WealthStrategy::optimal(&cfg, &s).without_consumption();
    let plain = simulate_wealth(&cfg, &strat, &SimulationSpec { antithetic: false, ..spec(20_000, 16) }).unwrap();
    let anti = simulate_wealth(&cfg, &strat, &spec(20_000, 16)).unwrap();
    let a = McEstimate::from_paths(&plain.terminal_wealth, false);
    let b = McEstimate::from_paths(&anti.terminal_wealth, true);
    assert!(b.std_error < 0.5 * a.std_error, "{a:?} vs {b:?}");
}
