//! Closed-form Riemannian kernel for the three constant-curvature model spaces.
//!
//! Points are stored in embedding coordinates:
//!
//! - Euclidean `R^m`: plain coordinates, length `m`.
//! - Unit sphere `S^m`: unit vectors of `R^{m+1}`.
//! - Hyperbolic space `H^m` (curvature −1): the upper sheet of the hyperboloid
//!   `⟨x, x⟩_L = −1`, `x_0 ≥ 1`, where `⟨u, v⟩_L = −u_0 v_0 + Σ_{k≥1} u_k v_k`.
//!
//! Tangent vectors live in the same embedding space. Self-adjoint operators on
//! a tangent space are represented in a deterministic orthonormal frame (see
//! [`ModelManifold::frame`]).

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Embedding constraint tolerance.
pub const EMBEDDING_TOL: f64 = 1e-12;
/// Sphere pairs at distance `≥ π − CUT_LOCUS_TOL` are treated as antipodal.
pub const CUT_LOCUS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldKind {
    Euclidean,
    Sphere,
    Hyperbolic,
}

/// One of the three model spaces together with its intrinsic dimension.
///
/// The Ricci lower bound `−K` is derived from `kind` and `dim`: `K = 0` for
/// the Euclidean space and the unit sphere, `K = m − 1` for `H^m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelManifold {
    kind: ManifoldKind,
    dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub coords: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: Point,
    pub vec: DVector<f64>,
}

/// Symmetric operator on `T_x M`, in the orthonormal frame returned by
/// [`ModelManifold::frame`] at `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfAdjointOperator {
    pub base: Point,
    pub matrix: DMatrix<f64>,
}

impl Point {
    pub fn new(coords: impl Into<Vec<f64>>) -> Self {
        Point {
            coords: DVector::from_vec(coords.into()),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        self.coords.as_slice()
    }

    /// Lexicographic comparison of embedding coordinates.
    pub fn lex_cmp(&self, other: &Point) -> std::cmp::Ordering {
        for (a, b) in self.coords.iter().zip(other.coords.iter()) {
            match a.total_cmp(b) {
                std::cmp::Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.coords.len().cmp(&other.coords.len())
    }
}

impl SelfAdjointOperator {
    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .matrix
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn asymmetry(&self) -> f64 {
        (&self.matrix - self.matrix.transpose()).amax()
    }
}

impl ModelManifold {
    pub fn new(kind: ManifoldKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("manifold dimension must be ≥ 1".into()));
        }
        Ok(ModelManifold { kind, dim })
    }

    pub fn euclidean(dim: usize) -> Self {
        Self::new(ManifoldKind::Euclidean, dim).expect("dim ≥ 1")
    }

    pub fn sphere(dim: usize) -> Self {
        Self::new(ManifoldKind::Sphere, dim).expect("dim ≥ 1")
    }

    pub fn hyperbolic(dim: usize) -> Self {
        Self::new(ManifoldKind::Hyperbolic, dim).expect("dim ≥ 1")
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ambient_dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Euclidean => self.dim,
            ManifoldKind::Sphere | ManifoldKind::Hyperbolic => self.dim + 1,
        }
    }

    /// `K ≥ 0` such that `Ric ≥ −K`.
    pub fn curvature_bound(&self) -> f64 {
        match self.kind {
            ManifoldKind::Euclidean | ManifoldKind::Sphere => 0.0,
            ManifoldKind::Hyperbolic => (self.dim - 1) as f64,
        }
    }

    /// The Ricci lower bound `−K`.
    pub fn ricci_lower(&self) -> f64 {
        -self.curvature_bound()
    }

    pub fn injectivity_radius(&self) -> f64 {
        match self.kind {
            ManifoldKind::Sphere => PI,
            _ => f64::INFINITY,
        }
    }

    /// Riemannian inner product of two ambient vectors (Minkowski on `H^m`).
    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        match self.kind {
            ManifoldKind::Hyperbolic => minkowski(u, v),
            _ => u.dot(v),
        }
    }

    pub fn norm(&self, v: &TangentVector) -> f64 {
        self.inner(&v.vec, &v.vec).max(0.0).sqrt()
    }

    /// A canonical base point: the origin, the north pole `e_0`, or the
    /// hyperboloid vertex `e_0`.
    pub fn origin(&self) -> Point {
        let mut c = DVector::zeros(self.ambient_dim());
        if self.kind != ManifoldKind::Euclidean {
            c[0] = 1.0;
        }
        Point { coords: c }
    }

    fn constraint_residual(&self, coords: &DVector<f64>) -> f64 {
        match self.kind {
            ManifoldKind::Euclidean => 0.0,
            ManifoldKind::Sphere => (coords.norm() - 1.0).abs(),
            ManifoldKind::Hyperbolic => {
                let scale = coords[0].abs().max(1.0);
                let r = (minkowski(coords, coords) + 1.0).abs() / (scale * scale);
                if coords[0] <= 0.0 {
                    r.max(1.0)
                } else {
                    r
                }
            }
        }
    }

    pub fn validate_point(&self, p: &Point) -> Result<()> {
        if p.coords.len() != self.ambient_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.ambient_dim(),
                got: p.coords.len(),
            });
        }
        if p.coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::ConstraintViolation {
                residual: f64::INFINITY,
            });
        }
        let residual = self.constraint_residual(&p.coords);
        if residual > EMBEDDING_TOL {
            return Err(Error::ConstraintViolation { residual });
        }
        Ok(())
    }

    /// Validated point from raw embedding coordinates.
    pub fn point(&self, coords: impl Into<Vec<f64>>) -> Result<Point> {
        let p = Point::new(coords);
        self.validate_point(&p)?;
        Ok(p)
    }

    /// Retraction of ambient coordinates onto the manifold (normalization).
    pub fn project(&self, coords: DVector<f64>) -> Point {
        match self.kind {
            ManifoldKind::Euclidean => Point { coords },
            ManifoldKind::Sphere => {
                let n = coords.norm();
                Point { coords: coords / n }
            }
            ManifoldKind::Hyperbolic => {
                let mut c = coords;
                // Recompute the time coordinate from the spatial ones.
                let spatial: f64 = c.iter().skip(1).map(|v| v * v).sum();
                c[0] = (1.0 + spatial).sqrt();
                Point { coords: c }
            }
        }
    }

    /// Orthogonal projection of an ambient vector onto `T_x M`.
    pub fn project_tangent(&self, base: &Point, vec: DVector<f64>) -> TangentVector {
        let x = &base.coords;
        let vec = match self.kind {
            ManifoldKind::Euclidean => vec,
            ManifoldKind::Sphere => {
                let a = x.dot(&vec);
                vec - x * a
            }
            ManifoldKind::Hyperbolic => {
                let a = minkowski(x, &vec);
                vec + x * a
            }
        };
        TangentVector {
            base: base.clone(),
            vec,
        }
    }

    pub fn tangent(&self, base: &Point, vec: impl Into<Vec<f64>>) -> Result<TangentVector> {
        let vec = DVector::from_vec(vec.into());
        if vec.len() != self.ambient_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.ambient_dim(),
                got: vec.len(),
            });
        }
        let residual = match self.kind {
            ManifoldKind::Euclidean => 0.0,
            ManifoldKind::Sphere => base.coords.dot(&vec).abs(),
            ManifoldKind::Hyperbolic => minkowski(&base.coords, &vec).abs(),
        };
        if residual > EMBEDDING_TOL * (1.0 + vec.amax()) * (1.0 + base.coords.amax()) {
            return Err(Error::NotTangent { residual });
        }
        Ok(TangentVector {
            base: base.clone(),
            vec,
        })
    }

    pub fn zero_tangent(&self, base: &Point) -> TangentVector {
        TangentVector {
            base: base.clone(),
            vec: DVector::zeros(self.ambient_dim()),
        }
    }

    /// Geodesic distance.
    pub fn dist(&self, x: &Point, y: &Point) -> Result<f64> {
        self.validate_point(x)?;
        self.validate_point(y)?;
        Ok(self.dist_unchecked(x, y))
    }

    /// Geodesic distance without validating the embedding constraint.
    pub fn dist_unchecked(&self, x: &Point, y: &Point) -> f64 {
        let (x, y) = (&x.coords, &y.coords);
        match self.kind {
            ManifoldKind::Euclidean => (x - y).norm(),
            ManifoldKind::Sphere => {
                // Angle via chord lengths; accurate at both ends of [0, π].
                let a = (x - y).norm();
                let b = (x + y).norm();
                2.0 * a.atan2(b)
            }
            ManifoldKind::Hyperbolic => {
                // cosh d = 1 + q/2 with q the Minkowski square of the chord,
                // so d = 2 asinh(√q / 2).
                let diff = x - y;
                let q = minkowski(&diff, &diff).max(0.0);
                2.0 * (q.sqrt() / 2.0).asinh()
            }
        }
    }

    pub fn exp_map(&self, v: &TangentVector) -> Point {
        let x = &v.base.coords;
        match self.kind {
            ManifoldKind::Euclidean => Point {
                coords: x + &v.vec,
            },
            ManifoldKind::Sphere => {
                let r = v.vec.norm();
                if r == 0.0 {
                    return v.base.clone();
                }
                let c = x * r.cos() + &v.vec * (r.sin() / r);
                self.project(c)
            }
            ManifoldKind::Hyperbolic => {
                let r = minkowski(&v.vec, &v.vec).max(0.0).sqrt();
                if r == 0.0 {
                    return v.base.clone();
                }
                let c = x * r.cosh() + &v.vec * (r.sinh() / r);
                self.project(c)
            }
        }
    }

    /// Inverse of [`exp_map`](Self::exp_map); fails on the sphere's antipode.
    pub fn log_map(&self, x: &Point, y: &Point) -> Result<TangentVector> {
        self.validate_point(x)?;
        self.validate_point(y)?;
        self.log_unchecked(x, y)
    }

    pub(crate) fn log_unchecked(&self, x: &Point, y: &Point) -> Result<TangentVector> {
        let (xc, yc) = (&x.coords, &y.coords);
        let vec = match self.kind {
            ManifoldKind::Euclidean => yc - xc,
            ManifoldKind::Sphere => {
                let d = self.dist_unchecked(x, y);
                if d >= PI - CUT_LOCUS_TOL {
                    return Err(Error::CutLocus { distance: d });
                }
                let diff = yc - xc;
                // y − ⟨x,y⟩x with ⟨x,y⟩ − 1 = −|y − x|²/2.
                let u = &diff + xc * (diff.norm_squared() / 2.0);
                let u = &u - xc * xc.dot(&u);
                let n = u.norm();
                if n == 0.0 || d == 0.0 {
                    DVector::zeros(xc.len())
                } else {
                    u * (d / n)
                }
            }
            ManifoldKind::Hyperbolic => {
                let diff = yc - xc;
                let q = minkowski(&diff, &diff).max(0.0);
                let d = 2.0 * (q.sqrt() / 2.0).asinh();
                // y + ⟨x,y⟩_L x with ⟨x,y⟩_L = −1 − q/2.
                let u = &diff - xc * (q / 2.0);
                let u = &u + xc * minkowski(xc, &u);
                let n = minkowski(&u, &u).max(0.0).sqrt();
                if n == 0.0 || d == 0.0 {
                    DVector::zeros(xc.len())
                } else {
                    u * (d / n)
                }
            }
        };
        Ok(TangentVector {
            base: x.clone(),
            vec,
        })
    }

    /// Deterministic orthonormal frame of `T_x M`, as the columns of an
    /// `ambient × m` matrix.
    ///
    /// Built by Gram–Schmidt over the embedding basis vectors. On the sphere
    /// the basis vectors are visited by increasing `|x_k|` (ties by index)
    /// and the most aligned one is dropped; on the hyperboloid `e_0` is
    /// dropped. Orthonormality is with respect to [`inner`](Self::inner).
    pub fn frame(&self, x: &Point) -> DMatrix<f64> {
        let n = self.ambient_dim();
        let m = self.dim;
        match self.kind {
            ManifoldKind::Euclidean => DMatrix::identity(n, n),
            ManifoldKind::Sphere | ManifoldKind::Hyperbolic => {
                let order: Vec<usize> = match self.kind {
                    ManifoldKind::Sphere => {
                        let mut idx: Vec<usize> = (0..n).collect();
                        idx.sort_by(|&a, &b| {
                            x.coords[a].abs().total_cmp(&x.coords[b].abs()).then(a.cmp(&b))
                        });
                        idx.truncate(m);
                        idx
                    }
                    _ => (1..n).collect(),
                };
                let mut cols: Vec<DVector<f64>> = Vec::with_capacity(m);
                for &k in &order {
                    let mut v = DVector::zeros(n);
                    v[k] = 1.0;
                    // Two passes of modified Gram–Schmidt.
                    for _ in 0..2 {
                        v = self.project_tangent(x, v).vec;
                        for c in &cols {
                            let a = self.inner(c, &v);
                            v -= c * a;
                        }
                    }
                    let nv = self.inner(&v, &v).sqrt();
                    cols.push(v / nv);
                }
                DMatrix::from_columns(&cols)
            }
        }
    }

    /// Frame coordinates of a tangent vector.
    pub fn to_frame(&self, v: &TangentVector) -> DVector<f64> {
        let e = self.frame(&v.base);
        self.coords_in(&e, &v.vec)
    }

    pub(crate) fn coords_in(&self, frame: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            frame.ncols(),
            frame.column_iter().map(|c| self.inner(&c.into_owned(), v)),
        )
    }

    /// Tangent vector from frame coordinates.
    pub fn from_frame(&self, base: &Point, coords: &DVector<f64>) -> TangentVector {
        let e = self.frame(base);
        TangentVector {
            base: base.clone(),
            vec: e * coords,
        }
    }

    /// Eigenvalue of `Hess d²_y/2` orthogonal to the geodesic at distance `d`:
    /// `1`, `d cot d`, or `d coth d`.
    pub fn tangential_eigenvalue(&self, d: f64) -> f64 {
        match self.kind {
            ManifoldKind::Euclidean => 1.0,
            ManifoldKind::Sphere => {
                if d < 1e-8 {
                    1.0 - d * d / 3.0
                } else {
                    d * d.cos() / d.sin()
                }
            }
            ManifoldKind::Hyperbolic => {
                if d < 1e-8 {
                    1.0 + d * d / 3.0
                } else {
                    d / d.tanh()
                }
            }
        }
    }

    /// Hessian of `w ↦ d(w, y)²/2` at `x`, from the closed-form spectrum.
    pub fn hess_half_dist_sq(&self, x: &Point, y: &Point) -> Result<SelfAdjointOperator> {
        let v = self.log_map(x, y)?;
        let frame = self.frame(x);
        Ok(self.hess_from_log(&frame, &v))
    }

    pub(crate) fn hess_from_log(&self, frame: &DMatrix<f64>, v: &TangentVector) -> SelfAdjointOperator {
        let m = self.dim;
        let coords = self.coords_in(frame, &v.vec);
        let d = coords.norm();
        let t = self.tangential_eigenvalue(d);
        let mut h = DMatrix::identity(m, m) * t;
        if d > 0.0 {
            let u = coords / d;
            h += (&u * u.transpose()) * (1.0 - t);
        }
        symmetrize(&mut h);
        SelfAdjointOperator {
            base: v.base.clone(),
            matrix: h,
        }
    }

    /// Hessian of `d²_y/2` at `x` through the embedding: the Euclidean Hessian
    /// of the ambient extension, compressed to the frame, plus the shape
    /// operator term. Shares no code with the spectral route above.
    pub fn hess_half_dist_sq_extrinsic(&self, x: &Point, y: &Point) -> Result<SelfAdjointOperator> {
        self.validate_point(x)?;
        self.validate_point(y)?;
        let m = self.dim;
        let frame = self.frame(x);
        let matrix = match self.kind {
            ManifoldKind::Euclidean => DMatrix::identity(m, m),
            ManifoldKind::Sphere => {
                let theta = self.dist_unchecked(x, y);
                if theta >= PI - CUT_LOCUS_TOL {
                    return Err(Error::CutLocus { distance: theta });
                }
                let (h_prime, shape) = if theta < 1e-3 {
                    (1.0 / 3.0 + 2.0 / 15.0 * theta * theta, 1.0 - theta * theta / 3.0)
                } else {
                    let (s, c) = theta.sin_cos();
                    ((s - theta * c) / (s * s * s), theta * c / s)
                };
                let a = frame.transpose() * &y.coords;
                &a * a.transpose() * h_prime + DMatrix::identity(m, m) * shape
            }
            ManifoldKind::Hyperbolic => {
                let theta = self.dist_unchecked(x, y);
                let (h_prime, shape) = if theta < 1e-3 {
                    (-1.0 / 3.0 + 2.0 / 15.0 * theta * theta, 1.0 + theta * theta / 3.0)
                } else {
                    let (s, c) = (theta.sinh(), theta.cosh());
                    ((s - theta * c) / (s * s * s), theta * c / s)
                };
                let a = DVector::from_iterator(
                    m,
                    frame.column_iter().map(|e| minkowski(&e.into_owned(), &y.coords)),
                );
                &a * a.transpose() * h_prime + DMatrix::identity(m, m) * shape
            }
        };
        let mut matrix = matrix;
        symmetrize(&mut matrix);
        Ok(SelfAdjointOperator {
            base: x.clone(),
            matrix,
        })
    }

    /// `Δ (d²_y/2)` at `x`.
    pub fn laplacian_half_dist_sq(&self, x: &Point, y: &Point) -> Result<f64> {
        Ok(self.hess_half_dist_sq(x, y)?.trace())
    }

    /// Upper bound `m √K d / tanh(√K d)` for the Laplacian of `d²/2` under
    /// `Ric ≥ −K`; equals `m` when `K = 0`.
    pub fn laplacian_comparison_bound(&self, d: f64) -> f64 {
        let m = self.dim as f64;
        let s = self.curvature_bound().sqrt() * d;
        if s < 1e-8 {
            m * (1.0 + s * s / 3.0)
        } else {
            m * s / s.tanh()
        }
    }

    /// Singular value of `d exp_x|_v` orthogonal to `v`, for `|v| = r`:
    /// `1`, `sin r / r`, or `sinh r / r`.
    pub fn dexp_tangential_scale(&self, r: f64) -> f64 {
        match self.kind {
            ManifoldKind::Euclidean => 1.0,
            ManifoldKind::Sphere => {
                if r < 1e-8 {
                    1.0 - r * r / 6.0
                } else {
                    r.sin() / r
                }
            }
            ManifoldKind::Hyperbolic => {
                if r < 1e-8 {
                    1.0 + r * r / 6.0
                } else {
                    r.sinh() / r
                }
            }
        }
    }

    /// `det d exp_x|_v` in orthonormal frames: the tangential scale raised to
    /// `m − 1`.
    pub fn dexp_det(&self, r: f64) -> f64 {
        self.dexp_tangential_scale(r).powi(self.dim as i32 - 1)
    }

    /// Differential of the exponential map, `d exp_x|_v (w)`, as an ambient
    /// vector tangent at `exp_x(v)`. Obtained by differentiating the
    /// embedding formula of `exp_x` in `v`.
    pub fn dexp(&self, v: &TangentVector, w: &DVector<f64>) -> DVector<f64> {
        let x = &v.base.coords;
        match self.kind {
            ManifoldKind::Euclidean => w.clone(),
            ManifoldKind::Sphere => {
                let r = v.vec.norm();
                if r < 1e-12 {
                    return w.clone();
                }
                let (s, c) = r.sin_cos();
                let dr = v.vec.dot(w) / r;
                x * (-s * dr) + &v.vec * ((c - s / r) * dr / r) + w * (s / r)
            }
            ManifoldKind::Hyperbolic => {
                let r = minkowski(&v.vec, &v.vec).max(0.0).sqrt();
                if r < 1e-12 {
                    return w.clone();
                }
                let (s, c) = (r.sinh(), r.cosh());
                let dr = minkowski(&v.vec, w) / r;
                x * (s * dr) + &v.vec * ((c - s / r) * dr / r) + w * (s / r)
            }
        }
    }

    /// Gaussian tangent vector at `base` with per-axis standard deviation
    /// `scale` in frame coordinates.
    pub fn random_tangent<R: Rng + ?Sized>(&self, base: &Point, scale: f64, rng: &mut R) -> TangentVector {
        let coords = DVector::from_iterator(
            self.dim,
            (0..self.dim).map(|_| rng.sample::<f64, _>(StandardNormal) * scale),
        );
        self.from_frame(base, &coords)
    }

    /// `exp_base` of a Gaussian tangent vector; on the sphere the radius is
    /// folded below `π/2` when `scale` is small enough to make this moot.
    pub fn random_point_near<R: Rng + ?Sized>(&self, base: &Point, scale: f64, rng: &mut R) -> Point {
        let v = self.random_tangent(base, scale, rng);
        self.exp_map(&v)
    }

    /// Point at distance `r` from `base` in the direction of frame axis
    /// `axis` (used by examples and fixtures).
    pub fn point_at_distance(&self, base: &Point, axis: usize, r: f64) -> Point {
        let mut c = DVector::zeros(self.dim);
        c[axis] = r;
        self.exp_map(&self.from_frame(base, &c))
    }
}

pub(crate) fn minkowski(u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let mut s = -u[0] * v[0];
    for k in 1..u.len() {
        s += u[k] * v[k];
    }
    s
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let a = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = a;
            m[(j, i)] = a;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn manifolds() -> Vec<ModelManifold> {
        vec![
            ModelManifold::euclidean(2),
            ModelManifold::euclidean(3),
            ModelManifold::sphere(2),
            ModelManifold::sphere(3),
            ModelManifold::hyperbolic(2),
            ModelManifold::hyperbolic(3),
        ]
    }

    #[test]
    fn distance_examples() {
        let e = ModelManifold::euclidean(2);
        let d = e.dist(&Point::new([0.0, 0.0]), &Point::new([3.0, 4.0])).unwrap();
        assert_abs_diff_eq!(d, 5.0, epsilon = 1e-15);

        let s = ModelManifold::sphere(2);
        let d = s
            .dist(&Point::new([1.0, 0.0, 0.0]), &Point::new([0.0, 1.0, 0.0]))
            .unwrap();
        assert_abs_diff_eq!(d, PI / 2.0, epsilon = 1e-15);

        let h = ModelManifold::hyperbolic(2);
        let y = Point::new([1f64.cosh(), 1f64.sinh(), 0.0]);
        let d = h.dist(&Point::new([1.0, 0.0, 0.0]), &y).unwrap();
        assert_abs_diff_eq!(d, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn exp_examples() {
        let e = ModelManifold::euclidean(2);
        let x = Point::new([1.0, 1.0]);
        let p = e.exp_map(&e.tangent(&x, [2.0, 0.0]).unwrap());
        assert_eq!(p.as_slice(), &[3.0, 1.0]);

        let s = ModelManifold::sphere(2);
        let x = Point::new([1.0, 0.0, 0.0]);
        let p = s.exp_map(&s.tangent(&x, [0.0, PI / 2.0, 0.0]).unwrap());
        assert_abs_diff_eq!(p.coords, DVector::from_vec(vec![0.0, 1.0, 0.0]), epsilon = 1e-15);

        let h = ModelManifold::hyperbolic(2);
        let x = Point::new([1.0, 0.0, 0.0]);
        let p = h.exp_map(&h.tangent(&x, [0.0, 1.0, 0.0]).unwrap());
        let want = DVector::from_vec(vec![1f64.cosh(), 1f64.sinh(), 0.0]);
        assert_abs_diff_eq!(p.coords, want, epsilon = 1e-14);
    }

    #[test]
    fn log_examples() {
        let e = ModelManifold::euclidean(2);
        let v = e.log_map(&Point::new([0.0, 0.0]), &Point::new([3.0, 4.0])).unwrap();
        assert_eq!(v.vec.as_slice(), &[3.0, 4.0]);

        let s = ModelManifold::sphere(2);
        let err = s
            .log_map(&Point::new([1.0, 0.0, 0.0]), &Point::new([-1.0, 0.0, 0.0]))
            .unwrap_err();
        assert!(matches!(err, Error::CutLocus { .. }));
    }

    #[test]
    fn invalid_points_are_rejected() {
        let s = ModelManifold::sphere(2);
        assert!(matches!(
            s.point([1.0, 1.0, 0.0]),
            Err(Error::ConstraintViolation { .. })
        ));
        let h = ModelManifold::hyperbolic(2);
        assert!(matches!(
            h.point([-1.0, 0.0, 0.0]),
            Err(Error::ConstraintViolation { .. })
        ));
        assert!(matches!(
            h.point([1.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(ModelManifold::new(ManifoldKind::Sphere, 0).is_err());
    }

    #[test]
    fn ricci_bounds() {
        assert_eq!(ModelManifold::euclidean(3).ricci_lower(), 0.0);
        assert_eq!(ModelManifold::sphere(3).ricci_lower(), 0.0);
        assert_eq!(ModelManifold::hyperbolic(3).ricci_lower(), -2.0);
        assert_eq!(ModelManifold::hyperbolic(2).curvature_bound(), 1.0);
    }

    #[test]
    fn frames_are_orthonormal_and_tangent() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for m in manifolds() {
            for _ in 0..20 {
                let x = m.random_point_near(&m.origin(), 1.0, &mut rng);
                let e = m.frame(&x);
                assert_eq!(e.ncols(), m.dim());
                for a in 0..m.dim() {
                    let ea = e.column(a).into_owned();
                    assert!(m.inner(&ea, &x.coords).abs() < 1e-12 || m.kind() == ManifoldKind::Euclidean);
                    for b in 0..m.dim() {
                        let eb = e.column(b).into_owned();
                        let want = if a == b { 1.0 } else { 0.0 };
                        assert_abs_diff_eq!(m.inner(&ea, &eb), want, epsilon = 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn hessian_examples() {
        let e = ModelManifold::euclidean(3);
        let h = e
            .hess_half_dist_sq(&Point::new([0.0, 0.0, 0.0]), &Point::new([1.0, 2.0, 3.0]))
            .unwrap();
        assert_abs_diff_eq!(h.matrix, DMatrix::identity(3, 3), epsilon = 1e-15);
        assert_eq!(
            e.laplacian_half_dist_sq(&Point::new([0.0, 0.0, 0.0]), &Point::new([1.0, 2.0, 3.0]))
                .unwrap(),
            3.0
        );

        let s = ModelManifold::sphere(2);
        let x = Point::new([1.0, 0.0, 0.0]);
        let y = Point::new([0.0, 1.0, 0.0]);
        let ev = s.hess_half_dist_sq(&x, &y).unwrap().eigenvalues();
        assert_abs_diff_eq!(ev[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ev[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.laplacian_half_dist_sq(&x, &y).unwrap(), 1.0, epsilon = 1e-15);

        let h = ModelManifold::hyperbolic(2);
        let x = h.origin();
        let y = Point::new([1f64.cosh(), 1f64.sinh(), 0.0]);
        let ev = h.hess_half_dist_sq(&x, &y).unwrap().eigenvalues();
        assert_abs_diff_eq!(ev[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(ev[1], 1.0 / 1f64.tanh(), epsilon = 1e-14);
        assert_abs_diff_eq!(
            h.laplacian_half_dist_sq(&x, &y).unwrap(),
            1.0 + 1.0 / 1f64.tanh(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn extrinsic_and_spectral_hessians_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in manifolds() {
            for _ in 0..30 {
                let x = m.random_point_near(&m.origin(), 0.7, &mut rng);
                let y = m.random_point_near(&x, 0.8, &mut rng);
                let a = m.hess_half_dist_sq(&x, &y).unwrap();
                let b = m.hess_half_dist_sq_extrinsic(&x, &y).unwrap();
                assert_abs_diff_eq!(a.matrix, b.matrix, epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn hessian_at_coincident_points_is_identity() {
        for m in manifolds() {
            let x = m.origin();
            let h = m.hess_half_dist_sq(&x, &x).unwrap();
            assert_abs_diff_eq!(h.matrix, DMatrix::identity(m.dim(), m.dim()), epsilon = 1e-15);
        }
    }

    #[test]
    fn dexp_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in manifolds() {
            for _ in 0..10 {
                let x = m.random_point_near(&m.origin(), 0.5, &mut rng);
                let v = m.random_tangent(&x, 0.6, &mut rng);
                let w = m.random_tangent(&x, 1.0, &mut rng);
                let h = 1e-6;
                let plus = m.exp_map(&TangentVector {
                    base: x.clone(),
                    vec: &v.vec + &w.vec * h,
                });
                let minus = m.exp_map(&TangentVector {
                    base: x.clone(),
                    vec: &v.vec - &w.vec * h,
                });
                let fd = (plus.coords - minus.coords) / (2.0 * h);
                let an = m.dexp(&v, &w.vec);
                assert_abs_diff_eq!(fd, an, epsilon = 1e-7);
            }
        }
    }
}
