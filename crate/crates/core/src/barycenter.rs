//! Wasserstein barycenters of finitely supported measures on measures,
//! built by pushing an optimal multi-marginal plan through the selection
//! map `B`, and the law-of-large-numbers harness.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;

use crate::error::Result;
use crate::frechet::{self, FrechetOptions};
use crate::geometry::{ModelManifold, Point};
use crate::measures::{self, w2, DiscreteMeasure, MeasureEnsemble, TransportPlan};
use crate::mmot::{self, MmotOptions, MultiMarginalPlan, PlanEntry};
use crate::rng;

/// Output atoms closer than this are merged.
pub const MERGE_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct BarycenterResult {
    pub barycenter: DiscreteMeasure,
    /// Optimal plan over the distinct members of the ensemble.
    pub plan: MultiMarginalPlan,
    /// `(B, p_i)#γ`, one per member of the input ensemble.
    pub induced_plans: Vec<TransportPlan>,
    /// Independently solved `W₂²(μ̄, μ_i)`, one per member.
    pub w2_costs: Vec<f64>,
    /// `Σ λ_i W₂²(μ̄, μ_i)`.
    pub functional_value: f64,
    /// Largest first-order residual of an output atom for its tuple.
    pub pointwise_residual: f64,
}

fn identity_plan(mu: &DiscreteMeasure) -> MultiMarginalPlan {
    MultiMarginalPlan {
        marginal_sizes: vec![mu.len()],
        entries: mu
            .iter()
            .enumerate()
            .map(|(i, (p, w))| PlanEntry {
                indices: vec![i],
                mass: w,
                barycenter: p.clone(),
                cost: 0.0,
            })
            .collect(),
        cost: 0.0,
    }
}

pub fn wasserstein_barycenter(p: &MeasureEnsemble, opts: &MmotOptions) -> Result<BarycenterResult> {
    let m = p.manifold();
    let merged = p.merged();
    let lambda = merged.weights();
    let plan = if merged.len() == 1 {
        identity_plan(&merged.measures()[0])
    } else {
        mmot::solve_mmot(m, lambda, merged.measures(), opts)?
    };

    let mut points: Vec<Point> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut atom_of = Vec::with_capacity(plan.entries.len());
    let mut pointwise_residual: f64 = 0.0;
    for e in &plan.entries {
        let tuple: Vec<Point> = e
            .indices
            .iter()
            .zip(merged.measures())
            .map(|(&i, mu)| mu.points()[i].clone())
            .collect();
        pointwise_residual = pointwise_residual.max(frechet::first_order_residual(m, lambda, &tuple, &e.barycenter)?);
        match points.iter().position(|q| m.dist_unchecked(q, &e.barycenter) <= MERGE_TOL) {
            Some(k) => {
                weights[k] += e.mass;
                atom_of.push(k);
            }
            None => {
                points.push(e.barycenter.clone());
                weights.push(e.mass);
                atom_of.push(points.len() - 1);
            }
        }
    }
    let barycenter = DiscreteMeasure::normalized(m, points, weights, 1e-9)?;
    // `normalized` drops nothing here: every plan cell carries positive mass.
    let induced: Vec<TransportPlan> = merged
        .measures()
        .iter()
        .enumerate()
        .map(|(k, mu)| {
            let mut mass = DMatrix::zeros(barycenter.len(), mu.len());
            for (e, &a) in plan.entries.iter().zip(&atom_of) {
                mass[(a, e.indices[k])] += e.mass;
            }
            let mut t = TransportPlan { mass, cost: 0.0 };
            t.cost = t.evaluate_cost(&barycenter, mu);
            t
        })
        .collect();
    let merged_costs = merged
        .measures()
        .par_iter()
        .map(|mu| w2(&barycenter, mu).map(|r| r.0))
        .collect::<Result<Vec<f64>>>()?;

    let index_of = |mu: &DiscreteMeasure| merged.measures().iter().position(|x| x == mu).expect("member of merged ensemble");
    let mut induced_plans = Vec::with_capacity(p.len());
    let mut w2_costs = Vec::with_capacity(p.len());
    for mu in p.measures() {
        let k = index_of(mu);
        induced_plans.push(induced[k].clone());
        w2_costs.push(merged_costs[k]);
    }
    let functional_value = lambda.iter().zip(&merged_costs).map(|(l, c)| l * c).sum();
    Ok(BarycenterResult {
        barycenter,
        plan,
        induced_plans,
        w2_costs,
        functional_value,
        pointwise_residual,
    })
}

/// `V(ν) = Σ λ_i W₂²(ν, μ_i)`.
pub fn barycentric_functional(p: &MeasureEnsemble, nu: &DiscreteMeasure) -> Result<f64> {
    let costs = p
        .measures()
        .par_iter()
        .map(|mu| w2(nu, mu).map(|r| r.0))
        .collect::<Result<Vec<f64>>>()?;
    Ok(p.weights().iter().zip(&costs).map(|(l, c)| l * c).sum())
}

#[derive(Debug, Clone)]
pub struct OptimalityReport {
    pub candidate_value: f64,
    pub min_competitor_value: f64,
    /// `min_competitor_value − candidate_value`.
    pub gap: f64,
    pub trials: usize,
}

/// Random competitor: atoms moved by a random tangent step and weights drawn
/// from a Dirichlet law centred on the candidate's weights.
fn perturb(nu: &DiscreteMeasure, rng: &mut rng::Stream) -> Result<DiscreteMeasure> {
    let m = nu.manifold();
    let scale = 10f64.powf(rng.random_range(-3.0..-0.5));
    let concentration = 10f64.powf(rng.random_range(1.0..4.0));
    let points: Vec<Point> = nu.points().iter().map(|x| m.random_point_near(x, scale, rng)).collect();
    let raw: Vec<f64> = nu
        .weights()
        .iter()
        .map(|&w| Gamma::new(concentration * w, 1.0).map(|g| g.sample(rng).max(f64::MIN_POSITIVE)).unwrap_or(w))
        .collect();
    let total: f64 = raw.iter().sum();
    DiscreteMeasure::normalized(m, points, raw.iter().map(|w| w / total).collect(), 1e-9)
}

pub fn verify_optimality(
    p: &MeasureEnsemble,
    candidate: &DiscreteMeasure,
    trials: usize,
    seed: u64,
) -> Result<OptimalityReport> {
    let candidate_value = barycentric_functional(p, candidate)?;
    let values = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(seed, 0x0b71 + t as u64);
            let nu = perturb(candidate, &mut rng)?;
            barycentric_functional(p, &nu)
        })
        .collect::<Result<Vec<f64>>>()?;
    let min_competitor_value = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(OptimalityReport {
        candidate_value,
        min_competitor_value,
        gap: min_competitor_value - candidate_value,
        trials,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlnRow {
    pub j: usize,
    pub seed: u64,
    /// `𝕎₂(ℙ_j, ℙ)`.
    pub outer_w2: f64,
    /// `W₂(μ̄_j, μ̄)`.
    pub barycenter_w2: f64,
}

fn sample_seed(seed: u64, j: usize) -> u64 {
    rng::stream(seed, j as u64).random()
}

fn lln_row(p: &MeasureEnsemble, limit: &DiscreteMeasure, j: usize, seed: u64, opts: &MmotOptions) -> Result<LlnRow> {
    let pj = measures::empirical_sample(p, j, sample_seed(seed, j))?;
    let bar = wasserstein_barycenter(&pj, opts)?;
    let outer = measures::w2_outer(&pj.merged(), p)?;
    let (inner, _) = w2(&bar.barycenter, limit)?;
    Ok(LlnRow {
        j,
        seed,
        outer_w2: outer.max(0.0).sqrt(),
        barycenter_w2: inner.max(0.0).sqrt(),
    })
}

/// Convergence table for one seed, one row per sample size.
pub fn lln_run(p: &MeasureEnsemble, sizes: &[usize], seed: u64, opts: &MmotOptions) -> Result<Vec<LlnRow>> {
    lln_runs(p, sizes, &[seed], opts)
}

/// Rows for every `(j, seed)` pair, sorted by `(j, seed)`.
pub fn lln_runs(p: &MeasureEnsemble, sizes: &[usize], seeds: &[u64], opts: &MmotOptions) -> Result<Vec<LlnRow>> {
    let limit = wasserstein_barycenter(p, opts)?.barycenter;
    let jobs: Vec<(usize, u64)> = sizes.iter().flat_map(|&j| seeds.iter().map(move |&s| (j, s))).collect();
    let mut rows = jobs
        .par_iter()
        .map(|&(j, s)| lln_row(p, &limit, j, s, opts))
        .collect::<Result<Vec<LlnRow>>>()?;
    rows.sort_by_key(|a| (a.j, a.seed));
    Ok(rows)
}

/// Fréchet mean of the atoms of Dirac marginals, for comparison in tests and
/// reports.
pub fn dirac_barycenter(m: ModelManifold, lambda: &[f64], xs: &[Point]) -> Result<Point> {
    Ok(frechet::frechet_mean(m, lambda, xs, &FrechetOptions::default())?.mean)
}
