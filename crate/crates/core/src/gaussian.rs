//! Closed forms for Gaussian measures in Euclidean space: matrix square
//! roots, Brenier maps, the Bures–Wasserstein distance and the barycenter
//! covariance fixed point.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.shape() != (mean.len(), mean.len()) {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: cov.nrows(),
            });
        }
        if cov.clone().cholesky().is_none() || (&cov - cov.transpose()).amax() > 1e-12 {
            return Err(Error::InvalidArgument("covariance must be symmetric positive definite".into()));
        }
        Ok(Gaussian { mean, cov })
    }

    pub fn isotropic(mean: &[f64], var: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(DVector::from_column_slice(mean), DMatrix::identity(d, d) * var)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn density(&self, x: &DVector<f64>) -> f64 {
        let d = self.dim() as f64;
        let chol = self.cov.clone().cholesky().expect("validated covariance");
        let r = x - &self.mean;
        let q = r.dot(&chol.solve(&r));
        (-0.5 * q).exp() / ((2.0 * std::f64::consts::PI).powf(d) * self.cov.determinant()).sqrt()
    }
}

fn spectral(a: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let sym = (a + a.transpose()) * 0.5;
    let e = sym.symmetric_eigen();
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(f));
    &e.eigenvectors * d * e.eigenvectors.transpose()
}

/// Principal square root of a symmetric positive semi-definite matrix.
pub fn sqrtm(a: &DMatrix<f64>) -> DMatrix<f64> {
    spectral(a, |x| x.max(0.0).sqrt())
}

pub fn inv_sqrtm(a: &DMatrix<f64>) -> DMatrix<f64> {
    spectral(a, |x| 1.0 / x.sqrt())
}

/// Linear part `A` of the Brenier map `x ↦ A(x − m₁) + m₂` from `N(·, s1)`
/// to `N(·, s2)`: the unique SPD `A` with `A s1 A = s2`.
pub fn brenier_matrix(s1: &DMatrix<f64>, s2: &DMatrix<f64>) -> DMatrix<f64> {
    let r = sqrtm(s1);
    let ri = inv_sqrtm(s1);
    let a = &ri * sqrtm(&(&r * s2 * &r)) * &ri;
    (&a + a.transpose()) * 0.5
}

/// Squared Bures–Wasserstein distance `|m₁ − m₂|² + tr(Σ₁ + Σ₂ − 2(Σ₁^½Σ₂Σ₁^½)^½)`.
pub fn w2sq(g1: &Gaussian, g2: &Gaussian) -> f64 {
    let r = sqrtm(&g1.cov);
    let cross = sqrtm(&(&r * &g2.cov * &r));
    ((&g1.mean - &g2.mean).norm_squared() + g1.cov.trace() + g2.cov.trace() - 2.0 * cross.trace()).max(0.0)
}

#[derive(Debug, Clone)]
pub struct GaussianBarycenter {
    pub barycenter: Gaussian,
    /// Linear parts of the maps from the barycenter to each input.
    pub maps: Vec<DMatrix<f64>>,
    pub iterations: usize,
}

/// Barycenter of Gaussians by the fixed point
/// `S ← S^{-½} (Σ λ_i (S^½ Σ_i S^½)^½)² S^{-½}`.
pub fn barycenter(lambda: &[f64], gs: &[Gaussian], tol: f64, max_iter: usize) -> Result<GaussianBarycenter> {
    if gs.is_empty() || lambda.len() != gs.len() {
        return Err(Error::InvalidArgument("need one weight per Gaussian".into()));
    }
    let d = gs[0].dim();
    let mean = gs.iter().zip(lambda).fold(DVector::zeros(d), |acc, (g, l)| acc + &g.mean * *l);
    let mut s = gs.iter().zip(lambda).fold(DMatrix::zeros(d, d), |acc, (g, l)| acc + &g.cov * *l);
    for it in 1..=max_iter {
        let r = sqrtm(&s);
        let ri = inv_sqrtm(&s);
        let t = gs
            .iter()
            .zip(lambda)
            .fold(DMatrix::zeros(d, d), |acc, (g, l)| acc + sqrtm(&(&r * &g.cov * &r)) * *l);
        let next = &ri * &t * &t * &ri;
        let next = (&next + next.transpose()) * 0.5;
        let change = (&next - &s).amax();
        s = next;
        if change <= tol * s.amax().max(1.0) {
            let maps = gs.iter().map(|g| brenier_matrix(&s, &g.cov)).collect();
            return Ok(GaussianBarycenter {
                barycenter: Gaussian { mean, cov: s },
                maps,
                iterations: it,
            });
        }
    }
    Err(Error::FixedPoint(format!("no convergence in {max_iter} iterations")))
}
