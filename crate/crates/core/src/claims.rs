//! Claim-size laws with a policy limit `c`.
//!
//! The base variable `Z` is Gamma, Pareto (Lomax form) or a point mass. The
//! limit is applied in one of three ways, which determines what
//! [`ClaimDistribution::expect`] integrates against:
//!
//! | mode           | `E[g(Y)]`                                         |
//! |----------------|---------------------------------------------------|
//! | `Atom`         | `∫₀ᶜ g f_Z dy + g(c) P(Z > c)` (law of `Z ∧ c`)   |
//! | `Restriction`  | `∫₀ᶜ g f_Z dy` (sub-probability)                  |
//! | `Renormalized` | `∫₀ᶜ g f_Z dy / P(Z ≤ c)` (law of `Z` given `Z ≤ c`) |

use std::fmt;

use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{AlmError, Result, Violation};
use crate::quadrature::Quadrature;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TruncationMode {
    #[default]
    Atom,
    Restriction,
    Renormalized,
}

impl TruncationMode {
    pub const ALL: [TruncationMode; 3] = [Self::Atom, Self::Restriction, Self::Renormalized];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Atom => "atom",
            Self::Restriction => "restriction",
            Self::Renormalized => "renormalized",
        }
    }
}

impl fmt::Display for TruncationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TruncationMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "atom" => Ok(Self::Atom),
            "restriction" => Ok(Self::Restriction),
            "renormalized" => Ok(Self::Renormalized),
            other => Err(format!(
                "unknown truncation mode `{other}` (expected atom, restriction or renormalized)"
            )),
        }
    }
}

/// Base claim-size law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    /// Density `y^(shape-1) e^(-y/scale) / (Γ(shape) scale^shape)`.
    Gamma { shape: f64, scale: f64 },
    /// Density `shape scale^shape / (y + scale)^(shape+1)`.
    Pareto { shape: f64, scale: f64 },
    PointMass { at: f64 },
}

/// A function of the claim size whose expectation is needed downstream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    /// `y`
    Identity,
    /// `y / (1 - κy)^η`
    DualPower { kappa: f64, eta: f64 },
    /// `(1 - κy)^(-ηq)`
    DeflatorPower { kappa: f64, eta: f64, q: f64 },
    /// `1`
    AffineTest,
}

impl Transform {
    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        self.eval_with_factor(y, |kappa| 1.0 - kappa * y)
    }

    /// `g(y)` for `y = c − d`, with `1 − κy` formed as `(1 − κc) + κd` so that
    /// it keeps full relative precision when `κc` is close to 1.
    #[inline]
    fn eval_below_cap(&self, c: f64, d: f64) -> f64 {
        self.eval_with_factor(c - d, |kappa| (1.0 - kappa * c) + kappa * d)
    }

    #[inline]
    fn eval_with_factor(&self, y: f64, factor: impl Fn(f64) -> f64) -> f64 {
        match *self {
            Transform::Identity => y,
            Transform::DualPower { kappa, eta } => y * factor(kappa).powf(-eta),
            Transform::DeflatorPower { kappa, eta, q } => factor(kappa).powf(-eta * q),
            Transform::AffineTest => 1.0,
        }
    }

    fn kappa(&self) -> Option<f64> {
        match *self {
            Transform::DualPower { kappa, .. } | Transform::DeflatorPower { kappa, .. } => {
                Some(kappa)
            }
            _ => None,
        }
    }
}

/// Claim law as written in a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawClaims {
    /// `gamma`, `pareto` or `point_mass`.
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<f64>,
    pub limit: f64,
    #[serde(default)]
    pub truncation_mode: TruncationMode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClaimDistribution {
    family: Family,
    limit: f64,
    mode: TruncationMode,
}

fn positive(v: &mut Vec<Violation>, field: &'static str, x: f64) {
    if !(x.is_finite() && x > 0.0) {
        v.push(Violation::new(field, format!("must be finite and > 0, got {x}")));
    }
}

impl ClaimDistribution {
    pub fn new(family: Family, limit: f64, mode: TruncationMode) -> Result<Self> {
        let mut v = Vec::new();
        positive(&mut v, "limit", limit);
        match family {
            Family::Gamma { shape, scale } => {
                positive(&mut v, "alpha", shape);
                positive(&mut v, "beta", scale);
            }
            Family::Pareto { shape, scale } => {
                positive(&mut v, "alpha", shape);
                positive(&mut v, "gamma", scale);
            }
            Family::PointMass { at } => {
                positive(&mut v, "y0", at);
                if at > limit {
                    v.push(Violation::new("y0", format!("must not exceed limit {limit}, got {at}")));
                }
            }
        }
        if v.is_empty() {
            Ok(Self { family, limit, mode })
        } else {
            Err(AlmError::InvalidParams(v))
        }
    }

    pub fn from_raw(raw: &RawClaims) -> Result<Self> {
        let need = |field: &'static str, x: Option<f64>, v: &mut Vec<Violation>| match x {
            Some(x) => x,
            None => {
                v.push(Violation::new(field, format!("required for family `{}`", raw.family)));
                f64::NAN
            }
        };
        let mut v = Vec::new();
        let family = match raw.family.as_str() {
            "gamma" => Family::Gamma {
                shape: need("alpha", raw.alpha, &mut v),
                scale: need("beta", raw.beta, &mut v),
            },
            "pareto" => Family::Pareto {
                shape: need("alpha", raw.alpha, &mut v),
                scale: need("gamma", raw.gamma, &mut v),
            },
            "point_mass" => Family::PointMass {
                at: need("y0", raw.y0, &mut v),
            },
            other => {
                v.push(Violation::new(
                    "family",
                    format!("unknown family `{other}` (expected gamma, pareto or point_mass)"),
                ));
                return Err(AlmError::InvalidParams(v));
            }
        };
        if !v.is_empty() {
            return Err(AlmError::InvalidParams(v));
        }
        Self::new(family, raw.limit, raw.truncation_mode)
    }

    pub fn to_raw(&self) -> RawClaims {
        let mut raw = RawClaims {
            family: String::new(),
            alpha: None,
            beta: None,
            gamma: None,
            y0: None,
            limit: self.limit,
            truncation_mode: self.mode,
        };
        match self.family {
            Family::Gamma { shape, scale } => {
                raw.family = "gamma".into();
                raw.alpha = Some(shape);
                raw.beta = Some(scale);
            }
            Family::Pareto { shape, scale } => {
                raw.family = "pareto".into();
                raw.alpha = Some(shape);
                raw.gamma = Some(scale);
            }
            Family::PointMass { at } => {
                raw.family = "point_mass".into();
                raw.y0 = Some(at);
            }
        }
        raw
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn limit(&self) -> f64 {
        self.limit
    }

    /// Largest claim the law can produce: `y0` for a point mass, else `c`.
    pub fn support_max(&self) -> f64 {
        match self.family {
            Family::PointMass { at } => at,
            _ => self.limit,
        }
    }

    pub fn mode(&self) -> TruncationMode {
        self.mode
    }

    pub fn with_mode(&self, mode: TruncationMode) -> Self {
        Self { mode, ..*self }
    }

    /// Density of the untruncated `Z`.
    pub fn pdf(&self, y: f64) -> Result<f64> {
        if y < 0.0 {
            return Ok(0.0);
        }
        match self.family {
            Family::Gamma { shape, scale } => Ok(gamma_pdf(shape, scale, y)),
            Family::Pareto { shape, scale } => {
                Ok(shape * scale.powf(shape) / (y + scale).powf(shape + 1.0))
            }
            Family::PointMass { .. } => Err(AlmError::UnsupportedForPointMass),
        }
    }

    /// `P(Z > y)` for the untruncated `Z`.
    pub fn tail(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return match self.family {
                Family::PointMass { at } if at <= y => 0.0,
                _ => 1.0,
            };
        }
        match self.family {
            Family::Gamma { shape, scale } => gamma_ur(shape, y / scale).clamp(0.0, 1.0),
            Family::Pareto { shape, scale } => (scale / (y + scale)).powf(shape),
            Family::PointMass { at } => {
                if at > y {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `E[g(Y)]` under the configured truncation mode, relative accuracy 1e-10.
    pub fn expect(&self, transform: Transform) -> Result<f64> {
        self.expect_with(transform, &Quadrature::default())
    }

    /// As [`expect`](Self::expect) with explicit quadrature tolerances.
    ///
    /// The integral over `[0, c]` is split at `c/2`. The upper half is
    /// integrated in the distance to the cap, where the transforms steepen as
    /// `κc → 1`; for Gamma shapes below 1 the lower half uses a power-law
    /// substitution for the singularity at 0.
    pub fn expect_with(&self, transform: Transform, quad: &Quadrature) -> Result<f64> {
        if let Some(kappa) = transform.kappa() {
            if !(kappa * self.support_max() < 1.0) {
                return Err(AlmError::DomainError { kappa, limit: self.support_max() });
            }
        }
        let c = self.limit;
        let split = 0.5 * c;
        let body = match self.family {
            // y0 <= c, so the whole mass sits inside the limit in every mode.
            Family::PointMass { at } => return Ok(transform.eval(at)),
            Family::Gamma { shape, scale } => {
                let lower = |y: f64| transform.eval(y) * gamma_pdf(shape, scale, y);
                let upper = |d: f64| transform.eval_below_cap(c, d) * gamma_pdf(shape, scale, c - d);
                let low = if shape < 1.0 {
                    quad.integrate_power_singular(lower, split, shape)?
                } else {
                    quad.integrate(lower, 0.0, split)?
                };
                low + quad.integrate(upper, 0.0, c - split)?
            }
            Family::Pareto { shape, scale } => {
                let pdf = |y: f64| shape * scale.powf(shape) / (y + scale).powf(shape + 1.0);
                let lower = |y: f64| transform.eval(y) * pdf(y);
                let upper = |d: f64| transform.eval_below_cap(c, d) * pdf(c - d);
                quad.integrate(lower, 0.0, split)? + quad.integrate(upper, 0.0, c - split)?
            }
        };
        Ok(match self.mode {
            TruncationMode::Atom => body + transform.eval_below_cap(c, 0.0) * self.tail(c),
            TruncationMode::Restriction => body,
            TruncationMode::Renormalized => body / (1.0 - self.tail(c)),
        })
    }

    /// Sampler for the truncated law. Fails under `Restriction`, which is not
    /// a probability measure.
    pub fn sampler(&self) -> Result<ClaimSampler> {
        if self.mode == TruncationMode::Restriction {
            return Err(AlmError::UnsupportedMode("restriction"));
        }
        let base = match self.family {
            Family::Gamma { shape, scale } => Base::Gamma(
                rand_distr::Gamma::new(shape, scale)
                    .map_err(|e| AlmError::NumericalFailure(e.to_string()))?,
            ),
            Family::Pareto { shape, scale } => Base::Pareto { shape, scale },
            Family::PointMass { at } => Base::Point(at),
        };
        Ok(ClaimSampler {
            base,
            limit: self.limit,
            mode: self.mode,
            mass_inside: 1.0 - self.tail(self.limit),
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        Ok(self.sampler()?.sample(rng))
    }
}

fn gamma_pdf(shape: f64, scale: f64, y: f64) -> f64 {
    if y == 0.0 {
        return match shape {
            s if s < 1.0 => f64::INFINITY,
            s if s == 1.0 => 1.0 / scale,
            _ => 0.0,
        };
    }
    ((shape - 1.0) * y.ln() - y / scale - ln_gamma(shape) - shape * scale.ln()).exp()
}

#[derive(Debug, Clone, Copy)]
enum Base {
    Gamma(rand_distr::Gamma<f64>),
    Pareto { shape: f64, scale: f64 },
    Point(f64),
}

/// Draws from the truncated claim law (`Atom` or `Renormalized`).
#[derive(Debug, Clone, Copy)]
pub struct ClaimSampler {
    base: Base,
    limit: f64,
    mode: TruncationMode,
    mass_inside: f64,
}

impl ClaimSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match (self.base, self.mode) {
            (Base::Point(y), _) => y,
            (Base::Pareto { shape, scale }, TruncationMode::Renormalized) => {
                // inverse CDF restricted to [0, F(c)]
                let u: f64 = rng.random::<f64>() * self.mass_inside;
                scale * ((1.0 - u).powf(-1.0 / shape) - 1.0)
            }
            (Base::Pareto { shape, scale }, _) => {
                let u: f64 = 1.0 - rng.random::<f64>();
                (scale * (u.powf(-1.0 / shape) - 1.0)).min(self.limit)
            }
            (Base::Gamma(g), TruncationMode::Renormalized) => loop {
                let z = g.sample(rng);
                if z <= self.limit {
                    break z;
                }
            },
            (Base::Gamma(g), _) => g.sample(rng).min(self.limit),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gamma(mode: TruncationMode) -> ClaimDistribution {
        ClaimDistribution::new(Family::Gamma { shape: 0.6, scale: 5.0 }, 3.0, mode).unwrap()
    }

    fn pareto(mode: TruncationMode) -> ClaimDistribution {
        ClaimDistribution::new(Family::Pareto { shape: 4.0, scale: 2.0 }, 3.0, mode).unwrap()
    }

    fn point(at: f64) -> ClaimDistribution {
        ClaimDistribution::new(Family::PointMass { at }, 3.0, TruncationMode::Atom).unwrap()
    }

    // Values below were computed with mpmath at 30 digits.
    const GAMMA_TAIL_3: f64 = 0.331_801_714_183_160_4;
    const GAMMA_PDF_1: f64 = 0.209_318_847_057_821_6;
    const GAMMA_MEAN_CAPPED: f64 = 1.643_770_151_285_890_3;
    const GAMMA_DUAL_02_05: f64 = 2.393_005_927_901_729_9;
    const PARETO_DUAL_02_05: f64 = 0.756_146_812_591_740_2;

    #[test]
    fn pdf_examples() {
        let p = pareto(TruncationMode::Atom);
        assert!((p.pdf(0.0).unwrap() - 2.0).abs() < 1e-15);
        assert!((p.pdf(2.0).unwrap() - 0.0625).abs() < 1e-15);
        let g = gamma(TruncationMode::Atom);
        assert!((g.pdf(1.0).unwrap() - GAMMA_PDF_1).abs() < 1e-14);
        assert_eq!(point(1.0).pdf(1.0), Err(AlmError::UnsupportedForPointMass));
    }

    #[test]
    fn tail_examples() {
        let p = pareto(TruncationMode::Atom);
        assert_eq!(p.tail(0.0), 1.0);
        assert!((p.tail(2.0) - 0.0625).abs() < 1e-15);
        assert!((gamma(TruncationMode::Atom).tail(3.0) - GAMMA_TAIL_3).abs() < 1e-12);
    }

    #[test]
    fn expect_examples() {
        let dual = Transform::DualPower { kappa: 0.5, eta: 1.0 };
        for mode in TruncationMode::ALL {
            let pm = ClaimDistribution::new(Family::PointMass { at: 1.0 }, 3.0, mode).unwrap();
            assert!((pm.expect(dual).unwrap() - 2.0).abs() < 1e-15);
        }
        let p = pareto(TruncationMode::Atom);
        assert!((p.expect(Transform::Identity).unwrap() - 0.624).abs() < 1e-12);
        let d = Transform::DualPower { kappa: 0.2, eta: 0.5 };
        assert!((p.expect(d).unwrap() - PARETO_DUAL_02_05).abs() < 1e-10);
        let g = gamma(TruncationMode::Atom);
        assert!((g.expect(Transform::Identity).unwrap() - GAMMA_MEAN_CAPPED).abs() < 1e-10);
        assert!((g.expect(d).unwrap() - GAMMA_DUAL_02_05).abs() < 1e-10);
    }

    #[test]
    fn expect_rejects_kappa_at_bound() {
        let g = gamma(TruncationMode::Atom);
        let err = g.expect(Transform::DualPower { kappa: 1.0 / 3.0, eta: 1.0 });
        assert!(matches!(err, Err(AlmError::DomainError { .. })));
        let err = g.expect(Transform::DeflatorPower { kappa: 0.5, eta: 1.0, q: 1.0 });
        assert!(matches!(err, Err(AlmError::DomainError { .. })));
    }

    #[test]
    fn affine_test_mass_per_mode() {
        for d in [gamma(TruncationMode::Atom), pareto(TruncationMode::Atom)] {
            let inside = 1.0 - d.tail(3.0);
            let atom = d.expect(Transform::AffineTest).unwrap();
            let ren = d.with_mode(TruncationMode::Renormalized).expect(Transform::AffineTest).unwrap();
            let res = d.with_mode(TruncationMode::Restriction).expect(Transform::AffineTest).unwrap();
            assert!((atom - 1.0).abs() < 1e-10);
            assert!((ren - 1.0).abs() < 1e-10);
            assert!((res - inside).abs() < 1e-10);
        }
    }

    #[test]
    fn dual_power_at_zero_kappa_is_identity() {
        for mode in TruncationMode::ALL {
            for d in [gamma(mode), pareto(mode)] {
                let id = d.expect(Transform::Identity).unwrap();
                for eta in [0.15, 0.5, 1.0, 2.5] {
                    let dp = d.expect(Transform::DualPower { kappa: 0.0, eta }).unwrap();
                    assert!((dp - id).abs() <= 1e-12 * id.abs(), "{mode} {eta}");
                }
            }
        }
    }

    #[test]
    fn dual_power_increasing_in_kappa() {
        for mode in TruncationMode::ALL {
            for d in [gamma(mode), pareto(mode)] {
                for eta in [0.2, 0.7, 1.5] {
                    let mut prev = f64::NEG_INFINITY;
                    for i in 0..100 {
                        let kappa = (1.0 / 3.0 - 1e-6) * i as f64 / 99.0;
                        let v = d.expect(Transform::DualPower { kappa, eta }).unwrap();
                        assert!(v > prev, "{mode} eta={eta} kappa={kappa}");
                        prev = v;
                    }
                }
            }
        }
    }

    #[test]
    fn pdf_integrates_to_one() {
        let q = Quadrature::with_tolerance(1e-12);
        let g = gamma(TruncationMode::Atom);
        let f = |y: f64| g.pdf(y).unwrap();
        let total = q.integrate_power_singular(f, 1.0, 0.6).unwrap() + q.integrate(f, 1.0, 400.0).unwrap();
        assert!((total - 1.0).abs() < 1e-8, "gamma {total}");

        // map [0, inf) onto [0, 1)
        let p = pareto(TruncationMode::Atom);
        let total = q
            .integrate(
                |t: f64| {
                    if t >= 1.0 {
                        return 0.0;
                    }
                    let y = t / (1.0 - t);
                    p.pdf(y).unwrap() / ((1.0 - t) * (1.0 - t))
                },
                0.0,
                1.0,
            )
            .unwrap();
        assert!((total - 1.0).abs() < 1e-8, "pareto {total}");
    }

    #[test]
    fn restriction_cannot_be_sampled() {
        assert_eq!(
            gamma(TruncationMode::Restriction).sampler().unwrap_err(),
            AlmError::UnsupportedMode("restriction")
        );
    }

    #[test]
    fn point_mass_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = point(2.0);
        assert!((0..100).all(|_| d.sample(&mut rng).unwrap() == 2.0));
    }

    fn mean_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    #[test]
    fn sampled_moments_match_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = pareto(TruncationMode::Atom).sampler().unwrap();
        let xs: Vec<f64> = (0..1_000_000).map(|_| s.sample(&mut rng)).collect();
        let (m, se) = mean_se(&xs);
        assert!((m - 0.624).abs() < 3.0 * se, "{m} ± {se}");

        let s = gamma(TruncationMode::Atom).sampler().unwrap();
        let at_cap: Vec<f64> = (0..1_000_000)
            .map(|_| if s.sample(&mut rng) == 3.0 { 1.0 } else { 0.0 })
            .collect();
        let (m, se) = mean_se(&at_cap);
        assert!((m - GAMMA_TAIL_3).abs() < 3.0 * se, "{m} ± {se}");

        for d in [gamma(TruncationMode::Renormalized), pareto(TruncationMode::Renormalized)] {
            let s = d.sampler().unwrap();
            let xs: Vec<f64> = (0..400_000).map(|_| s.sample(&mut rng)).collect();
            assert!(xs.iter().all(|&x| (0.0..=3.0).contains(&x)));
            let (m, se) = mean_se(&xs);
            let exact = d.expect(Transform::Identity).unwrap();
            assert!((m - exact).abs() < 3.0 * se, "{m} ± {se} vs {exact}");
        }
    }

    #[test]
    fn raw_round_trip_and_errors() {
        let raw = RawClaims {
            family: "weibull".into(),
            alpha: None,
            beta: None,
            gamma: None,
            y0: None,
            limit: 3.0,
            truncation_mode: TruncationMode::Atom,
        };
        assert!(matches!(ClaimDistribution::from_raw(&raw), Err(AlmError::InvalidParams(_))));
        let raw = RawClaims { family: "gamma".into(), alpha: Some(0.6), ..raw };
        match ClaimDistribution::from_raw(&raw) {
            Err(AlmError::InvalidParams(v)) => assert_eq!(v[0].field, "beta"),
            other => panic!("{other:?}"),
        }
        let d = pareto(TruncationMode::Renormalized);
        assert_eq!(ClaimDistribution::from_raw(&d.to_raw()).unwrap(), d);
        assert!(ClaimDistribution::new(Family::PointMass { at: 4.0 }, 3.0, TruncationMode::Atom).is_err());
    }

    proptest! {
        #[test]
        fn tail_is_non_increasing(y1 in 0.0f64..50.0, dy in 0.0f64..10.0) {
            for d in [gamma(TruncationMode::Atom), pareto(TruncationMode::Atom), point(1.5)] {
                let (a, b) = (d.tail(y1), d.tail(y1 + dy));
                prop_assert!((0.0..=1.0).contains(&a));
                prop_assert!(b <= a);
            }
        }
    }
}
