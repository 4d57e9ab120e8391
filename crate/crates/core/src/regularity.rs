//! Numerical checks of the regularity theory for barycenters: semi-discrete
//! transport maps and their differentials, Lipschitz constants, the Hessian
//! equality, the Jacobi-equation bounds, change of variables and density
//! propagation.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frechet;
use crate::gaussian::{self, Gaussian};
use crate::geometry::{ManifoldKind, ModelManifold, Point, SelfAdjointOperator, TangentVector, CUT_LOCUS_TOL};
use crate::measures::DiscreteMeasure;
use crate::quadrature;

/// `g₁(y) = −(1/λ₁) Σ_{i≥2} λ_i d(y, x_i)²/2`, whose map `exp(−∇g₁)` sends a
/// barycenter point back to the first marginal when the others are Dirac.
#[derive(Debug, Clone)]
pub struct SemiDiscretePotential {
    manifold: ModelManifold,
    lambda1: f64,
    anchors: Vec<(f64, Point)>,
}

impl SemiDiscretePotential {
    pub fn new(manifold: ModelManifold, lambda1: f64, anchors: Vec<(f64, Point)>) -> Result<Self> {
        let total = lambda1 + anchors.iter().map(|a| a.0).sum::<f64>();
        if anchors.is_empty() || lambda1 <= 0.0 || anchors.iter().any(|a| !(a.0 > 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidWeights(format!(
                "need positive λ₁ and anchor weights summing to 1, got total {total}"
            )));
        }
        for (_, x) in &anchors {
            manifold.validate_point(x)?;
        }
        Ok(SemiDiscretePotential {
            manifold,
            lambda1,
            anchors,
        })
    }

    pub fn manifold(&self) -> ModelManifold {
        self.manifold
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    pub fn anchors(&self) -> &[(f64, Point)] {
        &self.anchors
    }

    pub fn value(&self, y: &Point) -> f64 {
        let s: f64 = self
            .anchors
            .iter()
            .map(|(l, x)| {
                let d = self.manifold.dist_unchecked(y, x);
                l * d * d / 2.0
            })
            .sum();
        -s / self.lambda1
    }

    /// `∇g₁(z) = (1/λ₁) Σ λ_i log_z x_i`.
    pub fn gradient(&self, z: &Point) -> Result<TangentVector> {
        let m = self.manifold;
        let mut acc = DVector::zeros(m.ambient_dim());
        for (l, x) in &self.anchors {
            acc += m.log_map(z, x)?.vec * (*l / self.lambda1);
        }
        Ok(TangentVector {
            base: z.clone(),
            vec: acc,
        })
    }

    /// `Hess g₁(z) = −(1/λ₁) Σ λ_i Hess d²_{x_i}/2` from the spectral closed form.
    pub fn hessian(&self, z: &Point) -> Result<SelfAdjointOperator> {
        self.hessian_with(z, |x| self.manifold.hess_half_dist_sq(z, x))
    }

    /// Same Hessian through the embedding route.
    pub fn hessian_extrinsic(&self, z: &Point) -> Result<SelfAdjointOperator> {
        self.hessian_with(z, |x| self.manifold.hess_half_dist_sq_extrinsic(z, x))
    }

    fn hessian_with(&self, z: &Point, hess: impl Fn(&Point) -> Result<SelfAdjointOperator>) -> Result<SelfAdjointOperator> {
        let dim = self.manifold.dim();
        let mut acc = DMatrix::zeros(dim, dim);
        for (l, x) in &self.anchors {
            acc -= hess(x)?.matrix * (*l / self.lambda1);
        }
        Ok(SelfAdjointOperator {
            base: z.clone(),
            matrix: acc,
        })
    }
}

/// Euclidean potential `φ(x) = ½xᵀ(I − A)x − bᵀx`, so `x − ∇φ(x) = Ax + b`.
#[derive(Debug, Clone)]
pub struct QuadraticPotential {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl QuadraticPotential {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.shape() != (b.len(), b.len()) {
            return Err(Error::DimensionMismatch {
                expected: b.len(),
                got: a.nrows(),
            });
        }
        if (&a - a.transpose()).amax() > 1e-12 {
            return Err(Error::InvalidArgument("A must be symmetric".into()));
        }
        Ok(QuadraticPotential { a, b })
    }

    pub fn hessian(&self) -> DMatrix<f64> {
        DMatrix::identity(self.b.len(), self.b.len()) - &self.a
    }

    pub fn map(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b
    }
}

#[derive(Debug, Clone)]
pub struct SemiDiscreteMap {
    pub image: Point,
    /// `−∇g₁(z)`, the initial velocity of the geodesic from `z` to the image.
    pub displacement: TangentVector,
    /// `dF(z)` in orthonormal frames at `z` and at the image.
    pub differential: DMatrix<f64>,
    /// `(1/λ₁) Σ_i λ_i Hess d²_{x_i}/2` at `z`, with `x₁` the image.
    pub inner: SelfAdjointOperator,
    pub jac: f64,
    /// Residual of `z` as a barycenter of `λ₁δ_{F(z)} + Σ λ_i δ_{x_i}`.
    pub characterization_residual: f64,
}

/// `F(z) = exp_z(−∇g₁(z))` with `dF = d exp_z|_{−∇g₁} ∘ (Hess d²_{F(z)}/2 − Hess g₁)`.
pub fn semi_discrete_map(pot: &SemiDiscretePotential, z: &Point) -> Result<SemiDiscreteMap> {
    let m = pot.manifold;
    m.validate_point(z)?;
    let grad = pot.gradient(z)?;
    let displacement = TangentVector {
        base: z.clone(),
        vec: -grad.vec,
    };
    let r = m.norm(&displacement);
    if m.kind() == ManifoldKind::Sphere && r >= PI - CUT_LOCUS_TOL {
        return Err(Error::CutLocus { distance: r });
    }
    let image = m.exp_map(&displacement);
    let h_image = m.hess_half_dist_sq(z, &image)?;
    let inner = SelfAdjointOperator {
        base: z.clone(),
        matrix: h_image.matrix - pot.hessian(z)?.matrix,
    };
    let frame_z = m.frame(z);
    let frame_img = m.frame(&image);
    let dim = m.dim();
    let mut differential = DMatrix::zeros(dim, dim);
    for a in 0..dim {
        let w = &frame_z * inner.matrix.column(a);
        let out = m.dexp(&displacement, &w);
        differential.set_column(a, &m.coords_in(&frame_img, &out));
    }
    let jac = m.dexp_det(r) * inner.matrix.determinant();

    let mut lambda = vec![pot.lambda1];
    let mut xs = vec![image.clone()];
    for (l, x) in &pot.anchors {
        lambda.push(*l);
        xs.push(x.clone());
    }
    let characterization_residual = frechet::first_order_residual(m, &lambda, &xs, z)?;
    Ok(SemiDiscreteMap {
        image,
        displacement,
        differential,
        inner,
        jac,
        characterization_residual,
    })
}

fn operator_norm(a: &DMatrix<f64>) -> f64 {
    a.clone().singular_values().max()
}

/// `max_z ‖dF(z)‖` over the region.
pub fn lipschitz_bound(pot: &SemiDiscretePotential, region: &[Point]) -> Result<f64> {
    if region.is_empty() {
        return Err(Error::InvalidArgument("empty region".into()));
    }
    let norms = region
        .par_iter()
        .map(|z| semi_discrete_map(pot, z).map(|f| operator_norm(&f.differential)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(norms.into_iter().fold(0.0, f64::max))
}

/// Comparison-geometry upper bounds for [`lipschitz_bound`] over a region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzComparison {
    /// `(1/λ₁) · max |T(d)|` over observed distances, with `T` the tangential
    /// Hessian eigenvalue (floored at 1). Bounds `‖Hess d²_F/2 − Hess g₁‖`.
    pub hessian_factor: f64,
    /// `max` of the `d exp` singular values over observed displacements.
    pub dexp_factor: f64,
}

impl LipschitzComparison {
    pub fn bound(&self) -> f64 {
        self.hessian_factor * self.dexp_factor
    }
}

pub fn lipschitz_comparison(pot: &SemiDiscretePotential, region: &[Point]) -> Result<LipschitzComparison> {
    let m = pot.manifold;
    let mut t_max: f64 = 1.0;
    let mut dexp_max: f64 = 1.0;
    for z in region {
        let f = semi_discrete_map(pot, z)?;
        let r = m.norm(&f.displacement);
        t_max = t_max.max(m.tangential_eigenvalue(r).abs());
        for (_, x) in &pot.anchors {
            t_max = t_max.max(m.tangential_eigenvalue(m.dist_unchecked(z, x)).abs());
        }
        dexp_max = dexp_max.max(m.dexp_tangential_scale(r).abs());
    }
    Ok(LipschitzComparison {
        hessian_factor: t_max / pot.lambda1,
        dexp_factor: dexp_max,
    })
}

fn sym_norm(a: &DMatrix<f64>) -> f64 {
    a.clone().symmetric_eigen().eigenvalues.amax()
}

/// `max_z ‖λ₁ Hess g₁ + Σ_{i≥2} λ_i Hess d²_{x_i}/2‖` with `Hess g₁` from the
/// embedding route and the other terms from the spectral closed form.
pub fn hessian_equality_semi_discrete(pot: &SemiDiscretePotential, points: &[Point]) -> Result<f64> {
    let m = pot.manifold;
    let mut worst: f64 = 0.0;
    for z in points {
        let mut sum = pot.hessian_extrinsic(z)?.matrix * pot.lambda1;
        for (l, x) in &pot.anchors {
            sum += m.hess_half_dist_sq(z, x)?.matrix * *l;
        }
        worst = worst.max(sym_norm(&sum));
    }
    Ok(worst)
}

#[derive(Debug, Clone)]
pub struct GaussianHessianReport {
    /// `‖Σ λ_i Hess φ_i‖ = ‖I − Σ λ_i A_i‖`.
    pub residual: f64,
    /// In one dimension, `|σ̄ − Σ λ_i σ_i|`.
    pub closed_form_residual: Option<f64>,
    pub potentials: Vec<QuadraticPotential>,
    pub barycenter: Gaussian,
}

/// Potentials `φ_i` of the maps from the Gaussian barycenter to each input.
pub fn hessian_equality_gaussian(lambda: &[f64], gs: &[Gaussian]) -> Result<GaussianHessianReport> {
    let bar = gaussian::barycenter(lambda, gs, 1e-15, 10_000)?;
    let d = bar.barycenter.dim();
    let potentials: Vec<QuadraticPotential> = bar
        .maps
        .iter()
        .zip(gs)
        .map(|(a, g)| QuadraticPotential::new(a.clone(), &g.mean - a * &bar.barycenter.mean))
        .collect::<Result<_>>()?;
    let sum = potentials
        .iter()
        .zip(lambda)
        .fold(DMatrix::zeros(d, d), |acc, (p, l)| acc + p.hessian() * *l);
    let closed_form_residual = (d == 1).then(|| {
        let sigma = bar.barycenter.cov[(0, 0)].sqrt();
        let want: f64 = gs.iter().zip(lambda).map(|(g, l)| l * g.cov[(0, 0)].sqrt()).sum();
        (sigma - want).abs()
    });
    Ok(GaussianHessianReport {
        residual: sym_norm(&sum),
        closed_form_residual,
        potentials,
        barycenter: bar.barycenter,
    })
}

pub const JACOBI_GRID: usize = 32;
const FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct JacobiReport {
    /// `l = −log det J(1)`.
    pub l: f64,
    /// `Δφ(z)` for `φ = g₁`.
    pub laplacian: f64,
    pub grad_norm: f64,
    pub curvature: f64,
    /// `l − (Δφ − K‖∇φ‖²/2)`.
    pub jacobi_slack: f64,
    /// `min_t ℓ̈ − ℓ̇²/m + K‖∇φ‖²` over interior grid points.
    pub riccati_slack: f64,
    pub min_det: f64,
    /// Slacks of `Δφ ≤ Δd²_F/2 ≤ m√K d/tanh(√K d) ≤ m(1 + √K d) ≤ m + m²/2 + K d²/2`.
    pub chain_slacks: [f64; 4],
    /// Smallest eigenvalue of `Hess d²_F/2 − Hess φ`.
    pub psd_min_eigenvalue: f64,
}

impl JacobiReport {
    pub fn min_slack(&self) -> f64 {
        self.chain_slacks
            .iter()
            .copied()
            .fold(self.jacobi_slack.min(self.riccati_slack), f64::min)
    }
}

/// `det J(t)` for `J(t) = d exp_z|_{−t∇φ} ∘ (Hess d²_{γ(t)}/2 − t Hess φ)`.
fn jacobi_det(m: ModelManifold, z: &Point, disp: &TangentVector, hess_phi: &DMatrix<f64>, t: f64) -> Result<f64> {
    let v = TangentVector {
        base: z.clone(),
        vec: &disp.vec * t,
    };
    let gamma = m.exp_map(&v);
    let h = m.hess_half_dist_sq(z, &gamma)?.matrix - hess_phi * t;
    Ok(m.dexp_det(m.norm(&v)) * h.determinant())
}

pub fn jacobi_bound_check(pot: &SemiDiscretePotential, z: &Point) -> Result<JacobiReport> {
    let m = pot.manifold;
    let dim = m.dim() as f64;
    let k = m.curvature_bound();
    let f = semi_discrete_map(pot, z)?;
    let hess_phi = pot.hessian(z)?.matrix;
    let laplacian = hess_phi.trace();
    let grad_norm = m.norm(&f.displacement);
    let ell = |t: f64| -> Result<f64> {
        let det = jacobi_det(m, z, &f.displacement, &hess_phi, t)?;
        if det <= 1e-12 {
            return Err(Error::DegenerateJacobian { t, det });
        }
        Ok(-det.ln())
    };
    let mut min_det = f64::INFINITY;
    for i in 0..JACOBI_GRID {
        let t = i as f64 / (JACOBI_GRID - 1) as f64;
        let det = jacobi_det(m, z, &f.displacement, &hess_phi, t)?;
        if det <= 1e-12 {
            return Err(Error::DegenerateJacobian { t, det });
        }
        min_det = min_det.min(det);
    }
    let mut riccati_slack = f64::INFINITY;
    for i in 1..JACOBI_GRID - 1 {
        let t = i as f64 / (JACOBI_GRID - 1) as f64;
        let (lm, l0, lp) = (ell(t - FD_STEP)?, ell(t)?, ell(t + FD_STEP)?);
        let d1 = (lp - lm) / (2.0 * FD_STEP);
        let d2 = (lp - 2.0 * l0 + lm) / (FD_STEP * FD_STEP);
        riccati_slack = riccati_slack.min(d2 - d1 * d1 / dim + k * grad_norm * grad_norm);
    }
    let l = ell(1.0)?;
    let jacobi_slack = l - (laplacian - k * grad_norm * grad_norm / 2.0);

    let lap_image = f.inner.matrix.trace() + laplacian;
    let comparison = m.laplacian_comparison_bound(grad_norm);
    let linear = dim * (1.0 + k.sqrt() * grad_norm);
    let quadratic = dim + dim * dim / 2.0 + k * grad_norm * grad_norm / 2.0;
    Ok(JacobiReport {
        l,
        laplacian,
        grad_norm,
        curvature: k,
        jacobi_slack,
        riccati_slack,
        min_det,
        chain_slacks: [lap_image - laplacian, comparison - lap_image, linear - comparison, quadratic - linear],
        psd_min_eigenvalue: f.inner.eigenvalues()[0],
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChangeOfVariableReport {
    /// `∫ A(g)`.
    pub lhs: f64,
    /// `∫ A(f / Jac F) Jac F`.
    pub rhs: f64,
    pub jac: f64,
}

impl ChangeOfVariableReport {
    pub fn residual(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }
}

fn integrate_density(g: &Gaussian, h: impl Fn(f64) -> f64 + Sync, tol: f64) -> Result<f64> {
    const HALF_WIDTH: f64 = 12.0;
    // A quarter of a standard deviation per initial panel.
    const PANELS: usize = 96;
    let box_of = |k: usize| {
        let s = g.cov[(k, k)].sqrt() * HALF_WIDTH;
        (g.mean[k] - s, g.mean[k] + s)
    };
    match g.dim() {
        1 => {
            let (a, b) = box_of(0);
            quadrature::integrate_panels(|x| h(g.density(&DVector::from_vec(vec![x]))), a, b, tol, PANELS)
        }
        2 => quadrature::integrate_2d_panels(
            |x, y| h(g.density(&DVector::from_vec(vec![x, y]))),
            box_of(0),
            box_of(1),
            tol,
            PANELS,
        ),
        d => Err(Error::InvalidArgument(format!("change of variables supports dimension 1 or 2, got {d}"))),
    }
}

/// Both sides of `∫ A(g) = ∫ A(f/Jac F) Jac F` for the Brenier map `F` from
/// `source` (density `f`) to `target` (density `g`), each by quadrature.
pub fn change_of_variable_check(
    source: &Gaussian,
    target: &Gaussian,
    a: impl Fn(f64) -> f64 + Sync,
    tol: f64,
) -> Result<ChangeOfVariableReport> {
    if a(0.0) != 0.0 {
        return Err(Error::InvalidArgument("integrand must vanish at 0".into()));
    }
    if source.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: source.dim(),
            got: target.dim(),
        });
    }
    let jac = gaussian::brenier_matrix(&source.cov, &target.cov).determinant();
    let lhs = integrate_density(target, &a, tol)?;
    let rhs = integrate_density(source, |f| a(f / jac) * jac, tol)?;
    Ok(ChangeOfVariableReport { lhs, rhs, jac })
}

/// Bin masses of a measure on a regular grid over the bounding box of its
/// support, in a Euclidean chart.
#[derive(Debug, Clone)]
pub struct DensityHistogram {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub bins: usize,
    /// Row-major over axes, last axis fastest.
    pub masses: Vec<f64>,
}

impl DensityHistogram {
    pub fn from_measure(mu: &DiscreteMeasure, bins: usize) -> Result<Self> {
        if mu.manifold().kind() != ManifoldKind::Euclidean {
            return Err(Error::InvalidArgument("histograms need a Euclidean chart".into()));
        }
        let dim = mu.manifold().dim();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for p in mu.points() {
            for k in 0..dim {
                lo[k] = lo[k].min(p.coords[k]);
                hi[k] = hi[k].max(p.coords[k]);
            }
        }
        let mut masses = vec![0.0; bins.pow(dim as u32)];
        for (p, w) in mu.iter() {
            let mut j = 0;
            for k in 0..dim {
                let width = (hi[k] - lo[k]).max(1e-300);
                let b = (((p.coords[k] - lo[k]) / width * bins as f64) as usize).min(bins - 1);
                j = j * bins + b;
            }
            masses[j] += w;
        }
        Ok(DensityHistogram { lo, hi, bins, masses })
    }

    pub fn bin_volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| (b - a) / self.bins as f64).product()
    }

    pub fn max_density(&self) -> f64 {
        self.masses.iter().copied().fold(0.0, f64::max) / self.bin_volume()
    }
}

pub const HISTOGRAM_BINS: usize = 64;
pub const HISTOGRAM_SLACK: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct DensityBoundReport {
    pub barycenter: DiscreteMeasure,
    pub source_max_density: f64,
    pub barycenter_max_density: f64,
    /// Measured Lipschitz constant of the map from the barycenter to `μ₁`.
    pub lipschitz: f64,
    pub dim: usize,
}

impl DensityBoundReport {
    /// `C^m · max density of μ₁ · (1 + slack)`.
    pub fn bound(&self) -> f64 {
        self.lipschitz.powi(self.dim as i32) * self.source_max_density * (1.0 + HISTOGRAM_SLACK)
    }

    pub fn holds(&self) -> bool {
        self.barycenter_max_density <= self.bound()
    }

    /// Observed density ratio divided by `C^m`.
    pub fn tightness(&self) -> f64 {
        self.barycenter_max_density / self.source_max_density / self.lipschitz.powi(self.dim as i32)
    }
}

const REGION_SAMPLES: usize = 256;

/// Barycenter of `μ₁` with Dirac anchors, pushed atom by atom through the
/// selection map, and its histogram density against `C^m` times that of `μ₁`.
pub fn density_bound_check(lambda1: f64, mu1: &DiscreteMeasure, anchors: &[(f64, Point)]) -> Result<DensityBoundReport> {
    let m = mu1.manifold();
    if m.kind() != ManifoldKind::Euclidean {
        return Err(Error::InvalidArgument("density bounds are checked in Euclidean space".into()));
    }
    let pot = SemiDiscretePotential::new(m, lambda1, anchors.to_vec())?;
    let mut lambda = vec![lambda1];
    lambda.extend(anchors.iter().map(|a| a.0));
    let pushed = mu1
        .points()
        .par_iter()
        .map(|x| {
            let mut xs = vec![x.clone()];
            xs.extend(anchors.iter().map(|a| a.1.clone()));
            frechet::selection_b(m, &lambda, &xs)
        })
        .collect::<Result<Vec<Point>>>()?;
    let barycenter = DiscreteMeasure::normalized(m, pushed, mu1.weights().to_vec(), 1e-9)?;
    let stride = (barycenter.len() / REGION_SAMPLES).max(1);
    let region: Vec<Point> = barycenter.points().iter().step_by(stride).cloned().collect();
    let lipschitz = lipschitz_bound(&pot, &region)?;
    let source_max_density = DensityHistogram::from_measure(mu1, HISTOGRAM_BINS)?.max_density();
    let barycenter_max_density = DensityHistogram::from_measure(&barycenter, HISTOGRAM_BINS)?.max_density();
    Ok(DensityBoundReport {
        barycenter,
        source_max_density,
        barycenter_max_density,
        lipschitz,
        dim: m.dim(),
    })
}

/// Uniform measure on cell centres of a regular grid over `[lo, hi]^dim`.
pub fn grid_uniform(dim: usize, lo: f64, hi: f64, per_axis: usize) -> Result<DiscreteMeasure> {
    let h = (hi - lo) / per_axis as f64;
    let total = u32::try_from(dim)
        .ok()
        .and_then(|d| per_axis.checked_pow(d))
        .ok_or_else(|| Error::InvalidArgument("grid size overflows".into()))?;
    let points = (0..total)
        .map(|mut j| {
            let mut c = vec![0.0; dim];
            for k in (0..dim).rev() {
                c[k] = lo + (j % per_axis) as f64 * h + h / 2.0;
                j /= per_axis;
            }
            Point::new(c)
        })
        .collect();
    DiscreteMeasure::uniform(ModelManifold::euclidean(dim), points)
}
