//! Finitely supported probability measures and exact `W₂`.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{ModelManifold, Point};
use crate::lp::{self, LpOptions};
use crate::rng;

/// Tolerance on `Σ weights = 1`.
pub const WEIGHT_TOL: f64 = 1e-12;
/// Tolerance for plan marginals and plan cost bookkeeping.
pub const PLAN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    manifold: ModelManifold,
    points: Vec<Point>,
    weights: Vec<f64>,
}

/// A coupling between two discrete measures, `mass[i][j]` moving from atom
/// `i` of the source to atom `j` of the target.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub mass: DMatrix<f64>,
    pub cost: f64,
}

/// A finitely supported measure on measures, `Σ λ_i δ_{μ_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureEnsemble {
    manifold: ModelManifold,
    measures: Vec<DiscreteMeasure>,
    weights: Vec<f64>,
}

fn check_weights(weights: &[f64], tol: f64) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::InvalidWeights("no atoms".into()));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::InvalidWeights(format!("weight {w} is negative or not finite")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > tol {
        return Err(Error::InvalidWeights(format!("weights sum to {total}, not 1")));
    }
    Ok(())
}

impl DiscreteMeasure {
    /// Validated measure. Zero-weight atoms are dropped.
    pub fn new(manifold: ModelManifold, points: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::InvalidWeights(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        check_weights(&weights, WEIGHT_TOL)?;
        for p in &points {
            manifold.validate_point(p)?;
        }
        let (points, weights) = points
            .into_iter()
            .zip(weights)
            .filter(|(_, w)| *w > 0.0)
            .unzip();
        Ok(DiscreteMeasure {
            manifold,
            points,
            weights,
        })
    }

    /// Like [`new`](Self::new) but accepts any positive total mass within
    /// `tol` of one and rescales to exactly one.
    pub fn normalized(
        manifold: ModelManifold,
        points: Vec<Point>,
        weights: Vec<f64>,
        tol: f64,
    ) -> Result<Self> {
        check_weights(&weights, tol)?;
        let total: f64 = weights.iter().sum();
        Self::new(manifold, points, weights.into_iter().map(|w| w / total).collect())
    }

    pub fn dirac(manifold: ModelManifold, p: Point) -> Result<Self> {
        Self::new(manifold, vec![p], vec![1.0])
    }

    pub fn uniform(manifold: ModelManifold, points: Vec<Point>) -> Result<Self> {
        let n = points.len().max(1);
        let w = vec![1.0 / n as f64; points.len()];
        Self::normalized(manifold, points, w, 1e-9)
    }

    pub fn manifold(&self) -> ModelManifold {
        self.manifold
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Point, f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }
}

impl TransportPlan {
    pub fn rows(&self) -> usize {
        self.mass.nrows()
    }

    pub fn cols(&self) -> usize {
        self.mass.ncols()
    }

    /// Largest deviation of the plan's marginals from the given weights.
    pub fn marginal_residual(&self, source: &[f64], target: &[f64]) -> f64 {
        let mut r = 0.0f64;
        for (i, w) in source.iter().enumerate() {
            r = r.max((self.mass.row(i).sum() - w).abs());
        }
        for (j, w) in target.iter().enumerate() {
            r = r.max((self.mass.column(j).sum() - w).abs());
        }
        r
    }

    /// `Σ mass[i][j] d(x_i, y_j)²`.
    pub fn evaluate_cost(&self, source: &DiscreteMeasure, target: &DiscreteMeasure) -> f64 {
        let m = source.manifold();
        let mut c = 0.0;
        for (i, x) in source.points().iter().enumerate() {
            for (j, y) in target.points().iter().enumerate() {
                let a = self.mass[(i, j)];
                if a != 0.0 {
                    let d = m.dist_unchecked(x, y);
                    c += a * d * d;
                }
            }
        }
        c
    }
}

impl MeasureEnsemble {
    pub fn new(measures: Vec<DiscreteMeasure>, weights: Vec<f64>) -> Result<Self> {
        if measures.len() != weights.len() {
            return Err(Error::InvalidWeights(format!(
                "{} measures but {} weights",
                measures.len(),
                weights.len()
            )));
        }
        check_weights(&weights, WEIGHT_TOL)?;
        let manifold = measures[0].manifold();
        if measures.iter().any(|m| m.manifold() != manifold) {
            return Err(Error::ManifoldMismatch);
        }
        let (measures, weights) = measures
            .into_iter()
            .zip(weights)
            .filter(|(_, w)| *w > 0.0)
            .unzip();
        Ok(MeasureEnsemble {
            manifold,
            measures,
            weights,
        })
    }

    pub fn dirac(measure: DiscreteMeasure) -> Self {
        MeasureEnsemble {
            manifold: measure.manifold(),
            measures: vec![measure],
            weights: vec![1.0],
        }
    }

    pub fn manifold(&self) -> ModelManifold {
        self.manifold
    }

    pub fn measures(&self) -> &[DiscreteMeasure] {
        &self.measures
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.measures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measures.is_empty()
    }

    /// Same measure on measures with identical members combined (weights
    /// summed, first occurrence order kept).
    pub fn merged(&self) -> MeasureEnsemble {
        let mut measures: Vec<DiscreteMeasure> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for (m, &w) in self.measures.iter().zip(&self.weights) {
            match measures.iter().position(|x| x == m) {
                Some(k) => weights[k] += w,
                None => {
                    measures.push(m.clone());
                    weights.push(w);
                }
            }
        }
        MeasureEnsemble {
            manifold: self.manifold,
            measures,
            weights,
        }
    }
}

fn cost_matrix(m: ModelManifold, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Vec<f64> {
    let mut c = Vec::with_capacity(mu.len() * nu.len());
    for x in mu.points() {
        for y in nu.points() {
            let d = m.dist_unchecked(x, y);
            c.push(d * d);
        }
    }
    c
}

/// Squared Wasserstein-2 distance and an optimal plan, by exact LP.
pub fn w2(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<(f64, TransportPlan)> {
    let m = mu.manifold();
    if nu.manifold() != m {
        return Err(Error::ManifoldMismatch);
    }
    let cost = cost_matrix(m, mu, nu);
    let sol = lp::solve_axial(
        &[mu.weights().to_vec(), nu.weights().to_vec()],
        &cost,
        &LpOptions::default(),
    )?;
    let (r, c) = (mu.len(), nu.len());
    let mut mass = DMatrix::zeros(r, c);
    for &(j, x) in &sol.cells {
        mass[(j / c, j % c)] = x;
    }
    let plan = TransportPlan {
        mass,
        cost: sol.objective,
    };
    let residual = plan.marginal_residual(mu.weights(), nu.weights());
    if residual > PLAN_TOL {
        return Err(Error::Lp(format!("plan marginal residual {residual:e}")));
    }
    Ok((plan.cost, plan))
}

/// Squared `𝕎₂` distance between two ensembles, with the pairwise `W₂²`
/// matrix as ground cost.
pub fn w2_outer(p: &MeasureEnsemble, q: &MeasureEnsemble) -> Result<f64> {
    if p.manifold() != q.manifold() {
        return Err(Error::ManifoldMismatch);
    }
    let pairs: Vec<(usize, usize)> = (0..p.len())
        .flat_map(|i| (0..q.len()).map(move |j| (i, j)))
        .collect();
    let cost = pairs
        .par_iter()
        .map(|&(i, j)| {
            if p.measures()[i] == q.measures()[j] {
                Ok(0.0)
            } else {
                w2(&p.measures()[i], &q.measures()[j]).map(|r| r.0)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let sol = lp::solve_axial(
        &[p.weights().to_vec(), q.weights().to_vec()],
        &cost,
        &LpOptions::default(),
    )?;
    Ok(sol.objective)
}

/// `Σ w_i d(x₀, p_i)²`.
pub fn second_moment(mu: &DiscreteMeasure, x0: &Point) -> Result<f64> {
    let m = mu.manifold();
    m.validate_point(x0)?;
    Ok(mu
        .iter()
        .map(|(p, w)| {
            let d = m.dist_unchecked(x0, p);
            w * d * d
        })
        .sum())
}

/// Empirical ensemble of `j` i.i.d. draws from `p`, each with weight `1/j`.
pub fn empirical_sample(p: &MeasureEnsemble, j: usize, seed: u64) -> Result<MeasureEnsemble> {
    if j == 0 {
        return Err(Error::InvalidArgument("sample size must be ≥ 1".into()));
    }
    let dist = WeightedIndex::new(p.weights())
        .map_err(|e| Error::InvalidWeights(e.to_string()))?;
    let mut rng = rng::stream(seed, 0x5a3e);
    let measures: Vec<DiscreteMeasure> = (0..j)
        .map(|_| p.measures()[dist.sample(&mut rng)].clone())
        .collect();
    Ok(MeasureEnsemble {
        manifold: p.manifold(),
        measures,
        weights: vec![1.0 / j as f64; j],
    })
}

/// Uniform measure on `s` i.i.d. draws from `N(mean, cov)` in Euclidean space.
pub fn gaussian_sample(mean: &DVector<f64>, cov: &DMatrix<f64>, s: usize, seed: u64) -> Result<DiscreteMeasure> {
    let dim = mean.len();
    if cov.shape() != (dim, dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: cov.nrows(),
        });
    }
    let l = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("covariance is not positive definite".into()))?
        .l();
    let mut rng = rng::stream(seed, 0x6a55);
    let points = (0..s)
        .map(|_| {
            let z = DVector::from_iterator(dim, (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
            Point { coords: mean + &l * z }
        })
        .collect();
    DiscreteMeasure::uniform(ModelManifold::euclidean(dim), points)
}
