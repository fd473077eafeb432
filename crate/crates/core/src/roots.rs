//! Bracketed root finding (Brent: bisection with secant / inverse quadratic steps).

use crate::error::{AlmError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrentOptions {
    /// Stop once the bracket is narrower than this...
    pub x_tol: f64,
    /// ...and |f| at the best point is below this.
    pub f_tol: f64,
    pub max_iter: usize,
}

impl Default for BrentOptions {
    fn default() -> Self {
        Self {
            x_tol: 1e-10,
            f_tol: 1e-9,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub fx: f64,
    pub bracket: (f64, f64),
    pub iterations: usize,
}

/// Find a root of `f` in `[lo, hi]`, given `f(lo)` and `f(hi)` of opposite sign.
///
/// Iteration continues past `x_tol` while `|f| > f_tol`, until the bracket
/// collapses to adjacent floats.
pub fn brent<F>(mut f: F, lo: f64, hi: f64, f_lo: f64, f_hi: f64, opts: BrentOptions) -> Result<Root>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut a, mut b, mut fa, mut fb) = (lo, hi, f_lo, f_hi);
    if fa == 0.0 {
        return Ok(Root { x: a, fx: 0.0, bracket: (a, a), iterations: 0 });
    }
    if fb == 0.0 {
        return Ok(Root { x: b, fx: 0.0, bracket: (b, b), iterations: 0 });
    }
    if fa.signum() == fb.signum() {
        return Err(AlmError::NumericalFailure(format!(
            "root not bracketed: f({a}) = {fa}, f({b}) = {fb}"
        )));
    }

    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;

    for iter in 1..=opts.max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }

        let width = (c - b).abs();
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * opts.x_tol.min(width);
        let half = 0.5 * (c - b);
        let converged = width <= opts.x_tol && fb.abs() <= opts.f_tol;
        let exhausted = half.abs() <= 2.0 * f64::EPSILON * b.abs().max(f64::MIN_POSITIVE);
        if fb == 0.0 {
            return Ok(Root { x: b, fx: 0.0, bracket: (b, b), iterations: iter });
        }
        if converged || exhausted {
            let bracket = if b < c { (b, c) } else { (c, b) };
            return Ok(Root { x: b, fx: fb, bracket, iterations: iter });
        }

        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * half * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * half * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let bound1 = 3.0 * half * q - (tol1 * q).abs();
            let bound2 = (e * q).abs();
            if 2.0 * p < bound1.min(bound2) {
                e = d;
                d = p / q;
            } else {
                d = half;
                e = d;
            }
        } else {
            d = half;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(half) };
        fb = f(b)?;
    }
    Err(AlmError::NumericalFailure(format!(
        "root finder did not converge in {} iterations",
        opts.max_iter
    )))
}
