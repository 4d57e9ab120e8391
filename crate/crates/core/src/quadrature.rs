//! Adaptive Simpson quadrature on intervals and rectangles, and a fixed
//! composite Gauss–Legendre rule.

use std::sync::OnceLock;

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 48;
/// The interval is first cut into this many panels so narrow features are
/// not missed by the initial five-point sample.
const PANELS: usize = 16;
const ROUNDOFF: f64 = 4.0 * f64::EPSILON;
/// Inner integrals of a nested rule are solved this much tighter than the
/// outer one so their error does not look like structure to the outer rule.
const INNER_MARGIN: f64 = 1e-3;

struct Simpson<'a, F: Fn(f64) -> f64> {
    f: &'a F,
}

impl<F: Fn(f64) -> f64> Simpson<'_, F> {
    #[allow(clippy::too_many_arguments)]
    fn refine(&self, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> Option<f64> {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = ((self.f)(lm), (self.f)(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        // Below a few ulps of the estimate the difference is roundoff.
        let floor = ROUNDOFF * (left.abs() + right.abs());
        if delta.abs() <= (15.0 * tol).max(floor) || m <= a || m >= b {
            return Some(left + right + delta / 15.0);
        }
        if depth == 0 || !delta.is_finite() {
            return None;
        }
        Some(
            self.refine(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
                + self.refine(m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?,
        )
    }
}

/// `∫_a^b f` to absolute error about `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    integrate_panels(f, a, b, tol, PANELS)
}

/// [`integrate`] with the first cut into `panels` pieces. Features narrower
/// than a panel can be missed entirely.
pub fn integrate_panels<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64, panels: usize) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let panels = panels.max(1);
    let s = Simpson { f: &f };
    let h = (b - a) / panels as f64;
    let panel_tol = tol / panels as f64;
    let mut total = 0.0;
    let mut fa = f(a);
    for k in 0..panels {
        let (x0, x1) = (a + k as f64 * h, if k + 1 == panels { b } else { a + (k + 1) as f64 * h });
        let xm = 0.5 * (x0 + x1);
        let (fm, fb) = (f(xm), f(x1));
        let whole = (x1 - x0) / 6.0 * (fa + 4.0 * fm + fb);
        total += s
            .refine(x0, x1, fa, fm, fb, whole, panel_tol, MAX_DEPTH)
            .ok_or(Error::Quadrature { a: x0, b: x1, tol: panel_tol })?;
        fa = fb;
    }
    Ok(total)
}

/// `∫∫ f(x, y)` over `[ax, bx] × [ay, by]` by nested 1-D quadrature.
pub fn integrate_2d<F: Fn(f64, f64) -> f64 + Sync>(f: F, x: (f64, f64), y: (f64, f64), tol: f64) -> Result<f64> {
    integrate_2d_panels(f, x, y, tol, PANELS)
}

/// [`integrate_2d`] with `panels` initial pieces along each axis.
pub fn integrate_2d_panels<F: Fn(f64, f64) -> f64 + Sync>(
    f: F,
    (ax, bx): (f64, f64),
    (ay, by): (f64, f64),
    tol: f64,
    panels: usize,
) -> Result<f64> {
    let inner_tol = INNER_MARGIN * tol / (bx - ax).abs().max(1e-300);
    let failure = std::cell::Cell::new(None);
    let outer = integrate_panels(
        |x| match integrate_panels(|y| f(x, y), ay, by, inner_tol, panels) {
            Ok(v) => v,
            Err(e) => {
                failure.set(Some(e));
                0.0
            }
        },
        ax,
        bx,
        0.5 * tol,
        panels,
    )?;
    match failure.into_inner() {
        Some(e) => Err(e),
        None => Ok(outer),
    }
}

const GL_POINTS: usize = 20;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[−1, 1]`, by
/// Newton iteration on `P_n` from Chebyshev starting guesses.
fn legendre_rule(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let k = k as f64;
                    (p0, p1) = (p1, ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k);
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let step = p1 / dp;
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// `∫_a^b f` by a composite 20-point Gauss–Legendre rule on `panels` equal
/// pieces. The nodes move with `a` and `b`, so the result is a smooth
/// function of the limits when `f` is smooth.
pub fn gauss_legendre<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    let rule = RULE.get_or_init(|| legendre_rule(GL_POINTS));
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|k| {
            let mid = a + (k as f64 + 0.5) * h;
            rule.iter().map(|&(x, w)| w * f(mid + 0.5 * h * x)).sum::<f64>() * 0.5 * h
        })
        .sum()
}
