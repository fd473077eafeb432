//! Adaptive Gauss-Legendre quadrature by interval bisection.
//!
//! Each panel is integrated with a fixed 15-point rule and compared with the
//! sum of its two halves; the panel with the largest discrepancy is bisected
//! next, until the summed discrepancy meets the tolerance.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

use crate::error::{AlmError, Result};

const ORDER: usize = 15;
const MAX_SPLITS: usize = 20_000;

struct Rule {
    nodes: [f64; ORDER],
    weights: [f64; ORDER],
}

fn rule() -> &'static Rule {
    static RULE: OnceLock<Rule> = OnceLock::new();
    RULE.get_or_init(|| legendre_rule(ORDER))
}

/// Nodes and weights on [-1, 1] by Newton iteration on P_n.
fn legendre_rule(n: usize) -> Rule {
    let mut nodes = [0.0; ORDER];
    let mut weights = [0.0; ORDER];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_and_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    Rule { nodes, weights }
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let r = rule();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    r.nodes
        .iter()
        .zip(r.weights.iter())
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// A panel already compared against its two halves.
struct Segment {
    a: f64,
    b: f64,
    left: f64,
    right: f64,
    fine: f64,
    error: f64,
    depth: u32,
}

impl Segment {
    fn split<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, coarse: f64, depth: u32) -> Self {
        let mid = 0.5 * (a + b);
        let left = panel(f, a, mid);
        let right = panel(f, mid, b);
        let fine = left + right;
        Self {
            a,
            b,
            left,
            right,
            fine,
            error: (fine - coarse).abs(),
            depth,
        }
    }
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Tolerances for [`Quadrature::integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_depth: u32,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_depth: 60,
        }
    }
}

impl Quadrature {
    pub fn with_tolerance(tol: f64) -> Self {
        Self {
            abs_tol: tol,
            rel_tol: tol,
            ..Self::default()
        }
    }

    /// Integrate `f` over `[a, b]`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<f64> {
        if a == b {
            return Ok(0.0);
        }
        let whole = panel(&f, a, b);
        if !whole.is_finite() {
            return Err(AlmError::QuadratureFailure {
                tolerance: self.abs_tol,
                estimate: f64::INFINITY,
            });
        }
        let mut heap = BinaryHeap::new();
        heap.push(Segment::split(&f, a, b, whole, 0));
        let mut value = heap.peek().map_or(0.0, |s| s.fine);
        let mut error = heap.peek().map_or(0.0, |s| s.error);
        let mut splits = 0usize;
        loop {
            // Relative tolerance is measured against the running estimate; the
            // absolute floor covers integrals that vanish. Errors below the
            // rounding level of the sum cannot be reduced further.
            let tol = self.abs_tol.max(self.rel_tol * value.abs());
            let noise = 64.0 * f64::EPSILON * value.abs();
            if !value.is_finite() {
                break;
            }
            if error <= tol.max(noise) {
                return Ok(value);
            }
            let worst = match heap.pop() {
                Some(s) => s,
                None => break,
            };
            if worst.depth >= self.max_depth || splits >= MAX_SPLITS {
                heap.push(worst);
                break;
            }
            splits += 1;
            let mid = 0.5 * (worst.a + worst.b);
            let left = Segment::split(&f, worst.a, mid, worst.left, worst.depth + 1);
            let right = Segment::split(&f, mid, worst.b, worst.right, worst.depth + 1);
            value += left.fine + right.fine - worst.fine;
            error += left.error + right.error - worst.error;
            heap.push(left);
            heap.push(right);
        }
        // recompute from scratch to drop accumulated update error
        let value: f64 = heap.iter().map(|s| s.fine).sum();
        let error: f64 = heap.iter().map(|s| s.error).sum();
        let tol = self.abs_tol.max(self.rel_tol * value.abs());
        if value.is_finite() && error <= tol.max(64.0 * f64::EPSILON * value.abs()) {
            return Ok(value);
        }
        Err(AlmError::QuadratureFailure {
            tolerance: tol,
            estimate: error,
        })
    }

    /// Integrate over `[0, b]` an `f` that behaves like `y^(power - 1)` near
    /// zero with `0 < power < 1`. Substituting `y = b u^(1/power)` removes the
    /// singularity.
    pub fn integrate_power_singular<F: Fn(f64) -> f64>(
        &self,
        f: F,
        b: f64,
        power: f64,
    ) -> Result<f64> {
        let inv = 1.0 / power;
        let g = |u: f64| {
            if u <= 0.0 {
                return 0.0;
            }
            let y = b * u.powf(inv);
            // f(y) * dy/du, with the u^(1/p - 1) factor kept together with
            // f's y^(p-1) behaviour so nothing overflows at small u.
            f(y) * b * inv * u.powf(inv - 1.0)
        };
        self.integrate(g, 0.0, 1.0)
    }
}
