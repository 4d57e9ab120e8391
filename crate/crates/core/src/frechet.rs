//! Weighted Fréchet means of finitely many points and the deterministic
//! barycenter selection map.
//!
//! The mean minimizes `V(w) = Σ λ_i d(w, x_i)²`. Descent runs on `V/2`,
//! whose Riemannian gradient is `−Σ λ_i log_w(x_i)`. Steps follow the Newton
//! direction when the Hessian of `V/2` is positive definite and the gradient
//! otherwise, with unit step and Armijo backtracking.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::geometry::{ManifoldKind, ModelManifold, Point, SelfAdjointOperator, TangentVector, CUT_LOCUS_TOL};
use crate::rng;

const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 30;
const MAX_RESTARTS: usize = 5;
/// Candidates whose costs differ by at most this are ties for selection.
pub const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct FrechetOptions {
    /// Gradient-norm tolerance; `None` picks 1e−9 on the sphere and 1e−10
    /// elsewhere.
    pub tol: Option<f64>,
    pub max_iter: usize,
    pub seed: u64,
    /// Seeded starts in addition to the input points.
    pub perturbations: usize,
}

impl Default for FrechetOptions {
    fn default() -> Self {
        FrechetOptions {
            tol: None,
            max_iter: 2000,
            seed: 0,
            perturbations: 4,
        }
    }
}

impl FrechetOptions {
    pub fn tolerance(&self, m: ModelManifold) -> f64 {
        self.tol.unwrap_or(match m.kind() {
            ManifoldKind::Sphere => 1e-9,
            _ => 1e-10,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrechetResult {
    pub mean: Point,
    /// `Σ λ_i d(mean, x_i)²`.
    pub cost: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    /// Largest pairwise distance between converged multistart candidates.
    pub multistart_spread: f64,
}

fn check_inputs(m: ModelManifold, lambda: &[f64], xs: &[Point]) -> Result<()> {
    if xs.is_empty() || lambda.len() != xs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} weights for {} points",
            lambda.len(),
            xs.len()
        )));
    }
    if lambda.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(Error::InvalidWeights("barycentric weights must be positive".into()));
    }
    let total: f64 = lambda.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidWeights(format!("weights sum to {total}")));
    }
    for x in xs {
        m.validate_point(x)?;
    }
    Ok(())
}

/// `V(w) = Σ λ_i d(w, x_i)²`.
pub fn barycentric_cost(m: ModelManifold, lambda: &[f64], xs: &[Point], w: &Point) -> f64 {
    lambda
        .iter()
        .zip(xs)
        .map(|(l, x)| {
            let d = m.dist_unchecked(w, x);
            l * d * d
        })
        .sum()
}

/// `Σ λ_i log_w(x_i)`, the negative gradient of `V/2`.
pub fn balance_vector(m: ModelManifold, lambda: &[f64], xs: &[Point], w: &Point) -> Result<TangentVector> {
    let mut acc = DVector::zeros(m.ambient_dim());
    for (l, x) in lambda.iter().zip(xs) {
        acc += m.log_unchecked(w, x)?.vec * *l;
    }
    Ok(m.project_tangent(w, acc))
}

/// `‖Σ λ_i log_z(x_i)‖`, the first-order optimality residual at `z`.
pub fn first_order_residual(m: ModelManifold, lambda: &[f64], xs: &[Point], z: &Point) -> Result<f64> {
    Ok(m.norm(&balance_vector(m, lambda, xs, z)?))
}

/// `Σ λ_i Hess_z d²_{x_i}/2`, the Hessian of `V/2` at `z`.
pub fn objective_hessian(m: ModelManifold, lambda: &[f64], xs: &[Point], z: &Point) -> Result<SelfAdjointOperator> {
    let dim = m.dim();
    let mut acc = nalgebra::DMatrix::zeros(dim, dim);
    for (l, x) in lambda.iter().zip(xs) {
        acc += m.hess_half_dist_sq(z, x)?.matrix * *l;
    }
    Ok(SelfAdjointOperator {
        base: z.clone(),
        matrix: acc,
    })
}

/// True iff every `x_i` is strictly outside the cut locus of `z`.
pub fn cut_locus_check(m: ModelManifold, xs: &[Point], z: &Point) -> bool {
    match m.kind() {
        ManifoldKind::Sphere => xs
            .iter()
            .all(|x| m.dist_unchecked(z, x) < std::f64::consts::PI - CUT_LOCUS_TOL),
        _ => true,
    }
}

struct Descent {
    point: Point,
    cost: f64,
    grad_norm: f64,
    iterations: usize,
    converged: bool,
}

fn descend(
    m: ModelManifold,
    lambda: &[f64],
    xs: &[Point],
    start: Point,
    tol: f64,
    max_iter: usize,
) -> Result<Descent> {
    let mut w = start;
    let mut cost = barycentric_cost(m, lambda, xs, &w);
    let mut g = balance_vector(m, lambda, xs, &w)?;
    let mut gn = m.norm(&g);
    let mut it = 0;
    while gn > tol && it < max_iter {
        let (dir, slope) = newton_direction(m, lambda, xs, &w, &g).unwrap_or_else(|| (g.vec.clone(), gn * gn));
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial = m.exp_map(&TangentVector {
                base: w.clone(),
                vec: &dir * t,
            });
            let trial_cost = barycentric_cost(m, lambda, xs, &trial);
            let armijo = 0.5 * trial_cost <= 0.5 * cost - ARMIJO_C * t * slope;
            // Near convergence the Armijo decrease falls below the cost's
            // round-off; accept steps that keep the cost flat and shrink
            // the gradient.
            let flat = trial_cost <= cost * (1.0 + 4.0 * f64::EPSILON) + f64::MIN_POSITIVE;
            if armijo || flat {
                match balance_vector(m, lambda, xs, &trial) {
                    Ok(g_new) => {
                        let gn_new = m.norm(&g_new);
                        if armijo || gn_new < gn {
                            w = trial;
                            cost = trial_cost.min(cost);
                            g = g_new;
                            gn = gn_new;
                            accepted = true;
                            break;
                        }
                    }
                    Err(Error::CutLocus { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
            t *= 0.5;
        }
        it += 1;
        if !accepted {
            break;
        }
    }
    Ok(Descent {
        point: w,
        cost,
        grad_norm: gn,
        iterations: it,
        converged: gn <= tol,
    })
}

/// `(Hess⁻¹ g, ⟨g, Hess⁻¹ g⟩)` when the Hessian of `V/2` is positive definite.
fn newton_direction(
    m: ModelManifold,
    lambda: &[f64],
    xs: &[Point],
    w: &Point,
    g: &TangentVector,
) -> Option<(DVector<f64>, f64)> {
    let h = objective_hessian(m, lambda, xs, w).ok()?;
    let chol = h.matrix.cholesky()?;
    let frame = m.frame(w);
    let coords = m.coords_in(&frame, &g.vec);
    let sol = chol.solve(&coords);
    let slope = coords.dot(&sol);
    (slope > 0.0 && sol.iter().all(|v| v.is_finite())).then(|| (&frame * sol, slope))
}

/// Weighted extrinsic mean pulled back to the manifold, when defined.
fn extrinsic_mean(m: ModelManifold, lambda: &[f64], xs: &[Point]) -> Option<Point> {
    let mut acc = DVector::zeros(m.ambient_dim());
    for (l, x) in lambda.iter().zip(xs) {
        acc += &x.coords * *l;
    }
    match m.kind() {
        ManifoldKind::Euclidean => Some(Point { coords: acc }),
        ManifoldKind::Sphere => {
            let n = acc.norm();
            (n > 1e-8).then(|| Point { coords: acc / n })
        }
        ManifoldKind::Hyperbolic => {
            let q = -crate::geometry::minkowski(&acc, &acc);
            (q > 0.0).then(|| m.project(acc / q.sqrt()))
        }
    }
}

fn start_points(m: ModelManifold, lambda: &[f64], xs: &[Point], opts: &FrechetOptions) -> Vec<Point> {
    let mut starts: Vec<Point> = xs.to_vec();
    if opts.perturbations > 0 {
        let center = extrinsic_mean(m, lambda, xs).unwrap_or_else(|| xs[0].clone());
        let radius = xs
            .iter()
            .map(|x| m.dist_unchecked(&center, x))
            .fold(0.0, f64::max);
        let scale = 0.25 * radius.clamp(1e-3, 1.0);
        let mut rng = rng::stream(opts.seed, 0xf2ec);
        for _ in 0..opts.perturbations {
            starts.push(m.random_point_near(&center, scale, &mut rng));
        }
    }
    starts
}

/// Converged local minimizers, one per start, in start order.
fn candidates(m: ModelManifold, lambda: &[f64], xs: &[Point], opts: &FrechetOptions) -> Result<Vec<Descent>> {
    let tol = opts.tolerance(m);
    let mut rng = rng::stream(opts.seed, 0xc07);
    let mut out = Vec::new();
    let mut best_failed: Option<Descent> = None;
    for start in start_points(m, lambda, xs, opts) {
        let mut s = start;
        let mut result = None;
        for _ in 0..=MAX_RESTARTS {
            match descend(m, lambda, xs, s.clone(), tol, opts.max_iter) {
                Ok(d) => {
                    result = Some(d);
                    break;
                }
                Err(Error::CutLocus { .. }) => {
                    s = m.random_point_near(&s, 0.1, &mut rng);
                }
                Err(e) => return Err(e),
            }
        }
        let Some(d) = result else { continue };
        if d.converged {
            out.push(d);
        } else if best_failed.as_ref().is_none_or(|b| d.grad_norm < b.grad_norm) {
            best_failed = Some(d);
        }
    }
    if out.is_empty() {
        return Err(match best_failed {
            Some(d) => Error::FrechetNonconvergence {
                best: d.point,
                grad_norm: d.grad_norm,
                iterations: d.iterations,
            },
            None => Error::FrechetNonconvergence {
                best: xs[0].clone(),
                grad_norm: f64::INFINITY,
                iterations: 0,
            },
        });
    }
    Ok(out)
}

fn spread(m: ModelManifold, cands: &[Descent]) -> f64 {
    let mut s = 0.0f64;
    for (i, a) in cands.iter().enumerate() {
        for b in &cands[i + 1..] {
            s = s.max(m.dist_unchecked(&a.point, &b.point));
        }
    }
    s
}

fn finish(m: ModelManifold, cands: &[Descent], pick: usize) -> FrechetResult {
    let d = &cands[pick];
    FrechetResult {
        mean: d.point.clone(),
        cost: d.cost,
        grad_norm: d.grad_norm,
        iterations: d.iterations,
        multistart_spread: spread(m, cands),
    }
}

/// Multistart Riemannian gradient descent; returns the lowest-cost basin.
pub fn frechet_mean(m: ModelManifold, lambda: &[f64], xs: &[Point], opts: &FrechetOptions) -> Result<FrechetResult> {
    check_inputs(m, lambda, xs)?;
    let cands = candidates(m, lambda, xs, opts)?;
    let pick = (0..cands.len())
        .min_by(|&a, &b| cands[a].cost.total_cmp(&cands[b].cost))
        .expect("nonempty");
    Ok(finish(m, &cands, pick))
}

/// The deterministic barycenter selection map `B(x_1, …, x_n)`.
///
/// Runs [`frechet_mean`] with the default schedule and seed 0, then among
/// candidates within [`TIE_TOL`] of the lowest cost picks the
/// lexicographically smallest embedding coordinates. This rule stands in for
/// a measurable selection of barycenters.
pub fn selection(m: ModelManifold, lambda: &[f64], xs: &[Point]) -> Result<FrechetResult> {
    check_inputs(m, lambda, xs)?;
    if xs.len() == 1 {
        return Ok(FrechetResult {
            mean: xs[0].clone(),
            cost: 0.0,
            grad_norm: 0.0,
            iterations: 0,
            multistart_spread: 0.0,
        });
    }
    let opts = FrechetOptions::default();
    let cands = candidates(m, lambda, xs, &opts)?;
    let best = cands.iter().map(|c| c.cost).fold(f64::INFINITY, f64::min);
    let pick = (0..cands.len())
        .filter(|&i| cands[i].cost <= best + TIE_TOL)
        .min_by(|&a, &b| cands[a].point.lex_cmp(&cands[b].point))
        .expect("nonempty");
    Ok(finish(m, &cands, pick))
}

/// Point part of [`selection`].
pub fn selection_b(m: ModelManifold, lambda: &[f64], xs: &[Point]) -> Result<Point> {
    selection(m, lambda, xs).map(|r| r.mean)
}
