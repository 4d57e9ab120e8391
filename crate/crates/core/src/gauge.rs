//! Integral functionals `∫ G(f)` of grid densities: the explicit de la
//! Vallée Poussin gauge built from a family's tail profile, the clamped
//! entropy, `B(G, L)` membership and the entropy-type inequality for
//! barycenters.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quadrature;

fn cell_count(res: &[usize]) -> Result<usize> {
    res.iter()
        .try_fold(1usize, |acc, &r| acc.checked_mul(r))
        .ok_or_else(|| Error::GridMismatch("cell count overflows".into()))
}

/// Density sampled at the cell centres of a regular grid on an axis-aligned
/// box in a Euclidean chart.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub res: Vec<usize>,
    /// Row-major over axes, last axis fastest.
    pub values: Vec<f64>,
}

impl GridDensity {
    /// Cell count of a well-formed box and resolution.
    fn check_shape(lo: &[f64], hi: &[f64], res: &[usize]) -> Result<usize> {
        if lo.len() != hi.len() || lo.len() != res.len() || lo.is_empty() {
            return Err(Error::GridMismatch("box and resolution dimensions differ".into()));
        }
        if lo.iter().zip(hi).any(|(a, b)| !(a < b) || !(b - a).is_finite()) || res.contains(&0) {
            return Err(Error::GridMismatch("empty box or zero resolution".into()));
        }
        cell_count(res)
    }

    pub fn new(lo: Vec<f64>, hi: Vec<f64>, res: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let cells = Self::check_shape(&lo, &hi, &res)?;
        if values.len() != cells {
            return Err(Error::GridMismatch(format!("{} values for {cells} cells", values.len())));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidArgument(format!("density value {v} is negative or not finite")));
        }
        Ok(GridDensity { lo, hi, res, values })
    }

    /// Samples `f` at cell centres.
    pub fn from_fn(lo: Vec<f64>, hi: Vec<f64>, res: Vec<usize>, f: impl Fn(&[f64]) -> f64 + Sync) -> Result<Self> {
        let cells = Self::check_shape(&lo, &hi, &res)?;
        let dim = res.len();
        let values = (0..cells)
            .into_par_iter()
            .map(|mut j| {
                let mut x = vec![0.0; dim];
                for k in (0..dim).rev() {
                    let h = (hi[k] - lo[k]) / res[k] as f64;
                    x[k] = lo[k] + ((j % res[k]) as f64 + 0.5) * h;
                    j /= res[k];
                }
                f(&x)
            })
            .collect();
        Self::new(lo, hi, res, values)
    }

    pub fn dim(&self) -> usize {
        self.res.len()
    }

    pub fn cell_volume(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .zip(&self.res)
            .map(|((a, b), r)| (b - a) / *r as f64)
            .product()
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_volume()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Same grid with values scaled to unit Riemann mass.
    pub fn normalized(&self) -> Result<Self> {
        let mass = self.mass();
        if !(mass > 0.0) {
            return Err(Error::InvalidArgument("density has no mass".into()));
        }
        Self::new(self.lo.clone(), self.hi.clone(), self.res.clone(), self.values.iter().map(|v| v / mass).collect())
    }

    pub fn same_grid(&self, other: &GridDensity) -> bool {
        self.lo == other.lo && self.hi == other.hi && self.res == other.res
    }

    /// Riemann sum of `G ∘ f`. Fixed-size chunks keep the summation order,
    /// and so the result, independent of the thread count.
    pub fn integrate(&self, g: impl Fn(f64) -> f64 + Sync) -> f64 {
        let partial: Vec<f64> = self
            .values
            .par_chunks(4096)
            .map(|c| c.iter().map(|&v| g(v)).sum::<f64>())
            .collect();
        partial.iter().sum::<f64>() * self.cell_volume()
    }
}

fn check_family(family: &[GridDensity]) -> Result<()> {
    let first = family.first().ok_or_else(|| Error::InvalidArgument("empty family".into()))?;
    if family.iter().any(|f| !f.same_grid(first)) {
        return Err(Error::GridMismatch("family members use different grids".into()));
    }
    Ok(())
}

/// `sup_f ∫_{f > C} f` for each threshold `C`.
pub fn tail_profile(family: &[GridDensity], thresholds: &[f64]) -> Result<Vec<f64>> {
    check_family(family)?;
    Ok(thresholds
        .iter()
        .map(|&c| {
            family
                .iter()
                .map(|f| f.values.iter().filter(|&&v| v > c).fold(0.0, |a, v| a + v) * f.cell_volume())
                .fold(0.0, f64::max)
        })
        .collect())
}

/// A convex gauge `G` with `G(0) = 0` and `H(y) = G(eʸ)e⁻ʸ` having
/// `0 ≤ H′ ≤ L_H`.
pub trait Integrand: Sync {
    fn g(&self, x: f64) -> f64;
    fn h(&self, y: f64) -> f64;
    fn h_prime(&self, y: f64) -> f64;
    fn lipschitz_h(&self) -> f64;
}

/// `G(x) = 0` on `[0, e⁻¹]` and `x log x + e⁻¹` above, so that
/// `H(y) = y + e^{−1−y}` for `y > −1`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClampedEntropy;

const INV_E: f64 = 0.36787944117144233;

impl Integrand for ClampedEntropy {
    fn g(&self, x: f64) -> f64 {
        if x <= INV_E {
            0.0
        } else {
            x * x.ln() + INV_E
        }
    }

    fn h(&self, y: f64) -> f64 {
        if y <= -1.0 {
            0.0
        } else {
            y + (-1.0 - y).exp()
        }
    }

    fn h_prime(&self, y: f64) -> f64 {
        if y <= -1.0 {
            0.0
        } else {
            1.0 - (-1.0 - y).exp()
        }
    }

    fn lipschitz_h(&self) -> f64 {
        1.0
    }
}

/// `ψ(u) = e^{−1/u}` for `u > 0`, else 0.
fn psi(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else {
        (-1.0 / u).exp()
    }
}

/// `S(u) = ψ(u) / (ψ(u) + ψ(1 − u))`: 0 for `u ≤ 0`, 1 for `u ≥ 1`, C^∞.
fn smoothstep(u: f64) -> f64 {
    let (a, b) = (psi(u), psi(1.0 - u));
    a / (a + b)
}

/// Unit bump on `(0, 1)`: `S(3u)` rising, 1 on `[1/3, 2/3]`, `S(3(1 − u))`
/// falling.
pub fn unit_bump(u: f64) -> f64 {
    if u <= 0.0 || u >= 1.0 {
        0.0
    } else if u < 1.0 / 3.0 {
        smoothstep(3.0 * u)
    } else if u <= 2.0 / 3.0 {
        1.0
    } else {
        smoothstep(3.0 * (1.0 - u))
    }
}

pub const MAX_ALPHA: u32 = 64;
const RAMP_PANELS: usize = 4;

/// `(∫₀ᵘ b, ∫₀ᵘ b(v) eᵛ dv)` for the unit bump `b`: closed forms on the
/// plateau and a fixed Gauss–Legendre rule on the ramps, so the result is
/// smooth in `u` (outer adaptive quadrature of `G` relies on that).
fn bump_integrals(u: f64) -> (f64, f64) {
    let u = u.clamp(0.0, 1.0);
    let (third, two_thirds) = (1.0 / 3.0, 2.0 / 3.0);
    let ramp = |a: f64, b: f64| {
        if b <= a {
            return (0.0, 0.0);
        }
        (
            quadrature::gauss_legendre(unit_bump, a, b, RAMP_PANELS),
            quadrature::gauss_legendre(|v| unit_bump(v) * v.exp(), a, b, RAMP_PANELS),
        )
    };
    let rise = ramp(0.0, u.min(third));
    let fall = ramp(two_thirds, u);
    let top = u.clamp(third, two_thirds);
    (
        rise.0 + (top - third) + fall.0,
        rise.1 + (top.exp() - third.exp()) + fall.1,
    )
}

/// Gauge with `γ = Σ_n b(· − α(n))` and `H(x) = ∫₀ˣ e⁻ˢ ∫₀ˢ γ(t)eᵗ dt ds`.
///
/// Integrating by parts, `H(x) = Γ(x) − e⁻ˣ I(x)` with `Γ = ∫₀ˣ γ` and
/// `I = ∫₀ˣ γ eᵗ`, and `H′ = e⁻ˣ I(x)`. Each bump contributes
/// `e^{α−x} ∫ b(v)eᵛ` to `e⁻ˣ I`, which keeps every term bounded.
#[derive(Debug, Clone)]
pub struct IntegrabilityGauge {
    pub alpha: Vec<u32>,
    /// `(∫₀¹ b, ∫₀¹ b eᵛ)`.
    full: (f64, f64),
}

impl IntegrabilityGauge {
    pub fn from_alpha(alpha: Vec<u32>) -> Result<Self> {
        if alpha.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::GaugeFailure("α must be strictly increasing".into()));
        }
        Ok(IntegrabilityGauge {
            alpha,
            full: bump_integrals(1.0),
        })
    }

    pub fn gamma(&self, x: f64) -> f64 {
        self.alpha.iter().map(|&a| unit_bump(x - a as f64)).sum()
    }

    /// `(Γ(x), e⁻ˣ I(x))`.
    fn parts(&self, x: f64) -> (f64, f64) {
        let mut big_gamma = 0.0;
        let mut damped = 0.0;
        for &a in &self.alpha {
            let a = a as f64;
            if x <= a {
                break;
            }
            let (g, i) = if x >= a + 1.0 {
                self.full
            } else {
                bump_integrals(x - a)
            };
            big_gamma += g;
            damped += (a - x).exp() * i;
        }
        (big_gamma, damped)
    }

    /// `H` evaluated literally as the nested double integral, for checks.
    pub fn h_double_integral(&self, x: f64, tol: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(0.0);
        }
        let inner = |s: f64| quadrature::integrate(|t| self.gamma(t) * (t - s).exp(), 0.0, s, tol / (4.0 * x));
        let mut breaks: Vec<f64> = vec![0.0];
        for &a in &self.alpha {
            for b in [a as f64, a as f64 + 1.0] {
                if b > 0.0 && b < x {
                    breaks.push(b);
                }
            }
        }
        breaks.push(x);
        let mut total = 0.0;
        for w in breaks.windows(2) {
            total += quadrature::integrate(|s| inner(s).unwrap_or(f64::NAN), w[0], w[1], tol / breaks.len() as f64)?;
        }
        if total.is_finite() {
            Ok(total)
        } else {
            Err(Error::Quadrature { a: 0.0, b: x, tol })
        }
    }

    /// `H(α(n) + 1) − H(α(n))` for every represented `n`.
    pub fn gaps(&self) -> Vec<f64> {
        self.alpha.iter().map(|&a| self.h(a as f64 + 1.0) - self.h(a as f64)).collect()
    }

    pub fn verify(&self) -> GaugeInvariants {
        let top = self.alpha.last().map_or(1.0, |&a| a as f64 + 2.0);
        let steps = 4000;
        let mut h_prime_min = f64::INFINITY;
        let mut h_prime_max = f64::NEG_INFINITY;
        for i in 0..=steps {
            let y = -1.0 + (top + 1.0) * i as f64 / steps as f64;
            let d = self.h_prime(y);
            h_prime_min = h_prime_min.min(d);
            h_prime_max = h_prime_max.max(d);
        }
        let g_on_unit = (0..=1000).map(|i| self.g(i as f64 / 1000.0).abs()).fold(0.0, f64::max);
        // Second differences on a log-spaced grid with local step.
        let mut min_second_difference = f64::INFINITY;
        for i in 0..=steps {
            let x = (-1.0 + (top + 1.0) * i as f64 / steps as f64).exp();
            let h = 1e-3 * x;
            let dd = self.g(x - h) - 2.0 * self.g(x) + self.g(x + h);
            min_second_difference = min_second_difference.min(dd);
        }
        GaugeInvariants {
            g_on_unit,
            h_prime_min,
            h_prime_max,
            min_second_difference,
            min_gap: self.gaps().into_iter().fold(f64::INFINITY, f64::min),
        }
    }
}

impl Integrand for IntegrabilityGauge {
    fn g(&self, x: f64) -> f64 {
        if x <= 1.0 {
            0.0
        } else {
            self.h(x.ln()) * x
        }
    }

    fn h(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let (g, d) = self.parts(y);
        g - d
    }

    fn h_prime(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        self.parts(y).1
    }

    fn lipschitz_h(&self) -> f64 {
        1.0
    }
}

/// `(1 − e^{−1/3})²`, the lower bound on the increase of `H` across a bump.
pub fn gap_bound() -> f64 {
    (1.0 - (-1.0f64 / 3.0).exp()).powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaugeInvariants {
    /// `max |G|` on `[0, 1]`; should be 0.
    pub g_on_unit: f64,
    pub h_prime_min: f64,
    pub h_prime_max: f64,
    pub min_second_difference: f64,
    pub min_gap: f64,
}

impl GaugeInvariants {
    pub fn hold(&self) -> bool {
        self.g_on_unit == 0.0
            && self.h_prime_min >= 0.0
            && self.h_prime_max <= 1.0
            && self.min_second_difference >= -1e-9
            && self.min_gap >= gap_bound()
    }
}

/// Least strictly increasing `α(n) ≥ 0` with `sup tail(e^{α(n)}) ≤ 2^{−(n+1)}`,
/// stopping at the first `n` whose tail is exactly zero.
pub fn build_gauge(family: &[GridDensity]) -> Result<IntegrabilityGauge> {
    check_family(family)?;
    let tail = |a: u32| tail_profile(family, &[(a as f64).exp()]).map(|t| t[0]);
    let mut alpha: Vec<u32> = Vec::new();
    let mut n = 0i32;
    loop {
        let mut a = alpha.last().map_or(0, |&p| p + 1);
        let target = 0.5f64.powi(n + 1);
        let mut t = tail(a)?;
        while t > target {
            a += 1;
            if a > MAX_ALPHA {
                return Err(Error::GaugeFailure(format!(
                    "tail {t:e} still above 2^-{} at α = {MAX_ALPHA}",
                    n + 1
                )));
            }
            t = tail(a)?;
        }
        alpha.push(a);
        if t == 0.0 {
            break;
        }
        if a >= MAX_ALPHA {
            return Err(Error::GaugeFailure(format!("tail {t:e} is not zero by α = {MAX_ALPHA}")));
        }
        n += 1;
    }
    IntegrabilityGauge::from_alpha(alpha)
}

/// `∫ G(f)` as a Riemann sum over the grid.
pub fn displacement_functional(f: &GridDensity, g: &dyn Integrand) -> f64 {
    f.integrate(|v| g.g(v))
}

pub fn bgl_membership(f: &GridDensity, g: &dyn Integrand, l: f64) -> bool {
    displacement_functional(f, g) <= l
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniformIntegrabilityReport {
    pub epsilon: f64,
    /// Thresholds on the scan with `G(C)/C ≥ 2/ε`.
    pub qualifying: usize,
    /// `max tail(C)` over qualifying thresholds (0 if none).
    pub worst_tail: f64,
    /// `min_C (sup ∫G(f)) / H(log C) − tail(C)` over thresholds with `H > 0`.
    pub markov_slack: f64,
}

/// The gauge certifies uniform integrability of its family: checks
/// `tail(C) ≤ ε` wherever `G(C)/C ≥ 2/ε`, and `tail(C) ≤ sup∫G(f) / H(log C)`
/// on a log-spaced scan of `C`.
pub fn uniform_integrability(family: &[GridDensity], gauge: &dyn Integrand, epsilon: f64) -> Result<UniformIntegrabilityReport> {
    check_family(family)?;
    let sup_g = family
        .iter()
        .map(|f| displacement_functional(f, gauge))
        .fold(0.0, f64::max);
    let max_v = family.iter().map(GridDensity::max_value).fold(1.0, f64::max);
    let scan: Vec<f64> = (0..=400).map(|i| (max_v.ln() + 1.0) * i as f64 / 400.0).map(f64::exp).collect();
    let tails = tail_profile(family, &scan)?;
    let mut qualifying = 0;
    let mut worst_tail: f64 = 0.0;
    let mut markov_slack = f64::INFINITY;
    for (c, t) in scan.iter().zip(&tails) {
        let ratio = gauge.h(c.ln());
        if ratio >= 2.0 / epsilon {
            qualifying += 1;
            worst_tail = worst_tail.max(*t);
        }
        if ratio > 0.0 {
            markov_slack = markov_slack.min(sup_g / ratio - t);
        }
    }
    Ok(UniformIntegrabilityReport {
        epsilon,
        qualifying,
        worst_tail,
        markov_slack,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyReport {
    /// `∫ G(f̄)`.
    pub lhs: f64,
    /// `Σ_{i≤k} (λ_i/Λ) ∫ G(g_i)`.
    pub weighted: f64,
    /// `(L_H K / 2Λ) 𝕎₂²`.
    pub curvature_term: f64,
    /// `(L_H / 2Λ)(m² + 2m)`.
    pub dimension_term: f64,
}

impl EntropyReport {
    pub fn rhs(&self) -> f64 {
        self.weighted + self.curvature_term + self.dimension_term
    }

    pub fn slack(&self) -> f64 {
        self.rhs() - self.lhs
    }

    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs() + 1e-6
    }
}

/// Both sides of the entropy-type inequality for a barycenter with density
/// `f̄`, given densities of the first `k = densities.len()` marginals, the
/// full weight vector `λ`, and `𝕎₂(ℙ, δ_{μ̄})²`.
pub fn entropy_inequality_check(
    densities: &[GridDensity],
    lambda: &[f64],
    barycenter: &GridDensity,
    curvature: f64,
    g: &dyn Integrand,
    w2sq: f64,
) -> Result<EntropyReport> {
    if densities.is_empty() || densities.len() > lambda.len() {
        return Err(Error::InvalidArgument("need 1 ≤ k ≤ n absolutely continuous marginals".into()));
    }
    if densities.iter().any(|d| !d.same_grid(barycenter)) {
        return Err(Error::GridMismatch("marginal and barycenter grids differ".into()));
    }
    let big_lambda: f64 = lambda[..densities.len()].iter().sum();
    if !(big_lambda > 0.0) {
        return Err(Error::InvalidWeights("Λ must be positive".into()));
    }
    let m = barycenter.dim() as f64;
    let lh = g.lipschitz_h();
    let weighted = densities
        .iter()
        .zip(lambda)
        .map(|(d, l)| l / big_lambda * displacement_functional(d, g))
        .sum();
    Ok(EntropyReport {
        lhs: displacement_functional(barycenter, g),
        weighted,
        curvature_term: lh * curvature / (2.0 * big_lambda) * w2sq,
        dimension_term: lh / (2.0 * big_lambda) * (m * m + 2.0 * m),
    })
}
