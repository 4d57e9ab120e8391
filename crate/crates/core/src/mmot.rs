//! Multi-marginal optimal transport with the barycentric cost
//! `c(x_1, …, x_n) = min_w Σ λ_i d(w, x_i)²`.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frechet::{self, FrechetResult};
use crate::geometry::{ModelManifold, Point};
use crate::lp::{self, LpOptions};
use crate::measures::DiscreteMeasure;
use crate::rng;

pub const DEFAULT_CAP: usize = 200_000;

#[derive(Debug, Clone)]
pub struct MmotOptions {
    /// Largest admissible product support `Π s_i`.
    pub cap: usize,
    /// Seed for randomized pivoting; `None` uses deterministic pricing.
    pub pivot_seed: Option<u64>,
}

impl Default for MmotOptions {
    fn default() -> Self {
        MmotOptions {
            cap: DEFAULT_CAP,
            pivot_seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanEntry {
    pub indices: Vec<usize>,
    pub mass: f64,
    /// `B` evaluated on the tuple of support points.
    pub barycenter: Point,
    /// Barycentric cost of the tuple.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiMarginalPlan {
    pub marginal_sizes: Vec<usize>,
    pub entries: Vec<PlanEntry>,
    pub cost: f64,
}

impl MultiMarginalPlan {
    /// Largest deviation of any marginal of the plan from the given weights.
    pub fn marginal_residual(&self, measures: &[DiscreteMeasure]) -> f64 {
        let mut acc: Vec<Vec<f64>> = self.marginal_sizes.iter().map(|&s| vec![0.0; s]).collect();
        for e in &self.entries {
            for (k, &i) in e.indices.iter().enumerate() {
                acc[k][i] += e.mass;
            }
        }
        acc.iter()
            .zip(measures)
            .flat_map(|(a, mu)| a.iter().zip(mu.weights()).map(|(x, w)| (x - w).abs()))
            .fold(0.0, f64::max)
    }
}

/// Barycentric cost tensor, flattened with the last marginal fastest.
#[derive(Debug, Clone)]
pub struct CostTensor {
    pub sizes: Vec<usize>,
    pub costs: Vec<f64>,
    pub minimizers: Vec<Point>,
}

/// `(Σ λ_i d(w*, x_i)², w*)` with `w* = B(x_1, …, x_n)`.
pub fn barycost(m: ModelManifold, lambda: &[f64], xs: &[Point]) -> Result<(f64, Point)> {
    let FrechetResult { mean, cost, .. } = frechet::selection(m, lambda, xs)?;
    Ok((cost, mean))
}

fn check(m: ModelManifold, lambda: &[f64], measures: &[DiscreteMeasure]) -> Result<()> {
    if measures.len() != lambda.len() {
        return Err(Error::InvalidArgument(format!(
            "{} weights for {} marginals",
            lambda.len(),
            measures.len()
        )));
    }
    if measures.iter().any(|mu| mu.manifold() != m) {
        return Err(Error::ManifoldMismatch);
    }
    Ok(())
}

pub fn product_size(measures: &[DiscreteMeasure]) -> usize {
    measures
        .iter()
        .try_fold(1usize, |acc, mu| acc.checked_mul(mu.len()))
        .unwrap_or(usize::MAX)
}

/// Every tuple's barycentric cost and selected barycenter, computed once per
/// index tuple (in parallel, collected in flat order).
pub fn cost_tensor(
    m: ModelManifold,
    lambda: &[f64],
    measures: &[DiscreteMeasure],
    cap: usize,
) -> Result<CostTensor> {
    check(m, lambda, measures)?;
    let size = product_size(measures);
    if size > cap {
        return Err(Error::CapExceeded { size, cap });
    }
    let sizes: Vec<usize> = measures.iter().map(DiscreteMeasure::len).collect();
    let pairs = (0..size)
        .into_par_iter()
        .map(|j| {
            let idx = lp::unflatten(j, &sizes);
            let xs: Vec<Point> = idx
                .iter()
                .zip(measures)
                .map(|(&i, mu)| mu.points()[i].clone())
                .collect();
            barycost(m, lambda, &xs)
        })
        .collect::<Result<Vec<_>>>()?;
    let (costs, minimizers) = pairs.into_iter().unzip();
    Ok(CostTensor {
        sizes,
        costs,
        minimizers,
    })
}

/// Optimal multi-marginal plan for the barycentric cost, by exact LP.
pub fn solve_mmot(
    m: ModelManifold,
    lambda: &[f64],
    measures: &[DiscreteMeasure],
    opts: &MmotOptions,
) -> Result<MultiMarginalPlan> {
    if measures.len() < 2 {
        return Err(Error::InvalidArgument("need at least two marginals".into()));
    }
    let tensor = cost_tensor(m, lambda, measures, opts.cap)?;
    solve_with_tensor(measures, &tensor, opts)
}

pub fn solve_with_tensor(
    measures: &[DiscreteMeasure],
    tensor: &CostTensor,
    opts: &MmotOptions,
) -> Result<MultiMarginalPlan> {
    let marginals: Vec<Vec<f64>> = measures.iter().map(|mu| mu.weights().to_vec()).collect();
    let sol = lp::solve_axial(
        &marginals,
        &tensor.costs,
        &LpOptions {
            pivot_seed: opts.pivot_seed,
            max_iterations: None,
        },
    )?;
    let entries = sol
        .cells
        .iter()
        .map(|&(j, mass)| PlanEntry {
            indices: lp::unflatten(j, &tensor.sizes),
            mass,
            barycenter: tensor.minimizers[j].clone(),
            cost: tensor.costs[j],
        })
        .collect();
    let plan = MultiMarginalPlan {
        marginal_sizes: tensor.sizes.clone(),
        entries,
        cost: sol.objective,
    };
    let residual = plan.marginal_residual(measures);
    if residual > crate::measures::PLAN_TOL {
        return Err(Error::Lp(format!("plan marginal residual {residual:e}")));
    }
    Ok(plan)
}

fn permutations(s: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; s], &mut out);
    out
}

/// Minimum barycentric cost over couplings that match the atoms of the first
/// marginal to the others through permutations. Requires uniform weights,
/// equal support sizes `s ≤ 5`, and `n ≤ 3`.
pub fn mmot_oracle(m: ModelManifold, lambda: &[f64], measures: &[DiscreteMeasure]) -> Result<f64> {
    check(m, lambda, measures)?;
    let n = measures.len();
    let s = measures[0].len();
    if n > 3 || s > 5 || n == 0 {
        return Err(Error::OracleSize(format!("n = {n}, s = {s}; need n ≤ 3, s ≤ 5")));
    }
    for mu in measures {
        if mu.len() != s {
            return Err(Error::OracleSize("support sizes differ".into()));
        }
        if mu.weights().iter().any(|w| (w - 1.0 / s as f64).abs() > 1e-12) {
            return Err(Error::OracleSize("weights are not uniform".into()));
        }
    }
    let tensor = cost_tensor(m, lambda, measures, usize::MAX)?;
    let perms = permutations(s);
    let mut best = f64::INFINITY;
    let mut choice = vec![0usize; n.saturating_sub(1)];
    loop {
        let mut total = 0.0;
        for k in 0..s {
            let mut idx = vec![k];
            idx.extend(choice.iter().map(|&p| perms[p][k]));
            total += tensor.costs[lp::flatten(&idx, &tensor.sizes)];
        }
        best = best.min(total / s as f64);
        // Next combination of permutations.
        let mut k = 0;
        while k < choice.len() {
            choice[k] += 1;
            if choice[k] < perms.len() {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
        if k == choice.len() {
            break;
        }
    }
    Ok(best)
}

/// A random feasible coupling of the marginals: a random positive array is
/// scaled towards the marginals by alternating projections, then rounded to
/// exact feasibility. Returned flattened like [`CostTensor::costs`].
pub fn random_coupling(marginals: &[Vec<f64>], seed: u64) -> Vec<f64> {
    let sizes: Vec<usize> = marginals.iter().map(Vec::len).collect();
    let size: usize = sizes.iter().product();
    let mut rng = rng::stream(seed, 0xc0f1);
    let mut t: Vec<f64> = (0..size).map(|_| rng.random_range(0.01..1.0f64).powi(3)).collect();
    let idx: Vec<Vec<usize>> = (0..size).map(|j| lp::unflatten(j, &sizes)).collect();
    let sums = |t: &[f64], k: usize| {
        let mut s = vec![0.0; sizes[k]];
        for (j, v) in t.iter().enumerate() {
            s[idx[j][k]] += v;
        }
        s
    };
    for _ in 0..20 {
        for k in 0..sizes.len() {
            let s = sums(&t, k);
            for (j, v) in t.iter_mut().enumerate() {
                let i = idx[j][k];
                *v *= marginals[k][i] / s[i];
            }
        }
    }
    // Rounding: shrink overfull slices, then add the product of deficits.
    for k in 0..sizes.len() {
        let s = sums(&t, k);
        for (j, v) in t.iter_mut().enumerate() {
            let i = idx[j][k];
            if s[i] > marginals[k][i] {
                *v *= marginals[k][i] / s[i];
            }
        }
    }
    let deficits: Vec<Vec<f64>> = (0..sizes.len())
        .map(|k| {
            sums(&t, k)
                .iter()
                .zip(&marginals[k])
                .map(|(s, w)| (w - s).max(0.0))
                .collect()
        })
        .collect();
    let delta: f64 = deficits[0].iter().sum();
    if delta > 0.0 {
        for (j, v) in t.iter_mut().enumerate() {
            let mut add = 1.0;
            for (k, d) in deficits.iter().enumerate() {
                add *= d[idx[j][k]];
            }
            *v += add / delta.powi(sizes.len() as i32 - 1);
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::w2;
    use approx::assert_abs_diff_eq;

    fn e2() -> ModelManifold {
        ModelManifold::euclidean(2)
    }

    fn random_uniform(m: ModelManifold, s: usize, rng: &mut rng::Stream, spread: f64) -> DiscreteMeasure {
        let pts = (0..s).map(|_| m.random_point_near(&m.origin(), spread, rng)).collect();
        DiscreteMeasure::uniform(m, pts).unwrap()
    }

    #[test]
    fn barycost_euclidean() {
        let xs = vec![Point::new([0.0, 0.0]), Point::new([2.0, 0.0])];
        let (c, w) = barycost(e2(), &[0.5, 0.5], &xs).unwrap();
        assert_abs_diff_eq!(c, 1.0, epsilon = 1e-14); // d²/4 with d = 2
        assert_abs_diff_eq!(w.coords[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn dirac_marginals_give_the_product_plan() {
        let m = ModelManifold::sphere(2);
        let a = m.point_at_distance(&m.origin(), 0, 0.5);
        let b = m.point_at_distance(&m.origin(), 1, 0.7);
        let c = m.origin();
        let mus: Vec<DiscreteMeasure> = [&a, &b, &c]
            .iter()
            .map(|p| DiscreteMeasure::dirac(m, (*p).clone()).unwrap())
            .collect();
        let lambda = [0.2, 0.3, 0.5];
        let plan = solve_mmot(m, &lambda, &mus, &MmotOptions::default()).unwrap();
        assert_eq!(plan.entries.len(), 1);
        let (want, _) = barycost(m, &lambda, &[a, b, c]).unwrap();
        assert_abs_diff_eq!(plan.cost, want, epsilon = 1e-15);
        assert_abs_diff_eq!(mmot_oracle(m, &lambda, &mus).unwrap(), want, epsilon = 1e-15);
    }

    #[test]
    fn two_marginals_reduce_to_pairwise_w2() {
        let mut rng = rng::stream(1, 0);
        for _ in 0..5 {
            let mu = random_uniform(e2(), 4, &mut rng, 1.0);
            let nu = random_uniform(e2(), 3, &mut rng, 1.0);
            let l1 = rng.random_range(0.1..0.9);
            let lambda = [l1, 1.0 - l1];
            let plan = solve_mmot(e2(), &lambda, &[mu.clone(), nu.clone()], &MmotOptions::default()).unwrap();
            let (c, _) = w2(&mu, &nu).unwrap();
            assert_abs_diff_eq!(plan.cost, lambda[0] * lambda[1] * c, epsilon = 1e-9);
        }
    }

    #[test]
    fn cap_is_enforced() {
        let mut rng = rng::stream(2, 0);
        let mus: Vec<DiscreteMeasure> = (0..3).map(|_| random_uniform(e2(), 10, &mut rng, 1.0)).collect();
        let err = solve_mmot(e2(), &[0.3, 0.3, 0.4], &mus, &MmotOptions { cap: 999, ..Default::default() }).unwrap_err();
        assert!(matches!(err, Error::CapExceeded { size: 1000, cap: 999 }));
    }

    #[test]
    fn oracle_rejects_large_or_nonuniform_instances() {
        let mut rng = rng::stream(4, 0);
        let big: Vec<DiscreteMeasure> = (0..2).map(|_| random_uniform(e2(), 6, &mut rng, 1.0)).collect();
        assert!(matches!(mmot_oracle(e2(), &[0.5, 0.5], &big), Err(Error::OracleSize(_))));
        let nonuni = DiscreteMeasure::new(e2(), vec![Point::new([0.0, 0.0]), Point::new([1.0, 0.0])], vec![0.3, 0.7]).unwrap();
        assert!(matches!(
            mmot_oracle(e2(), &[0.5, 0.5], &[nonuni.clone(), nonuni]),
            Err(Error::OracleSize(_))
        ));
    }

    #[test]
    fn plan_beats_product_and_random_couplings() {
        let mut rng = rng::stream(5, 0);
        let m = ModelManifold::hyperbolic(2);
        let mus = vec![
            random_uniform(m, 3, &mut rng, 0.8),
            random_uniform(m, 2, &mut rng, 0.8),
            DiscreteMeasure::new(
                m,
                vec![m.random_point_near(&m.origin(), 0.8, &mut rng), m.random_point_near(&m.origin(), 0.8, &mut rng)],
                vec![0.25, 0.75],
            )
            .unwrap(),
        ];
        let lambda = [0.2, 0.5, 0.3];
        let tensor = cost_tensor(m, &lambda, &mus, DEFAULT_CAP).unwrap();
        let plan = solve_with_tensor(&mus, &tensor, &MmotOptions::default()).unwrap();
        assert!(plan.marginal_residual(&mus) <= 1e-10);
        let marginals: Vec<Vec<f64>> = mus.iter().map(|mu| mu.weights().to_vec()).collect();
        let product: f64 = (0..tensor.costs.len())
            .map(|j| {
                let idx = lp::unflatten(j, &tensor.sizes);
                let p: f64 = idx.iter().enumerate().map(|(k, &i)| marginals[k][i]).product();
                p * tensor.costs[j]
            })
            .sum();
        assert!(plan.cost <= product + 1e-12);
        for seed in 0..50 {
            let t = random_coupling(&marginals, seed);
            let c: f64 = t.iter().zip(&tensor.costs).map(|(a, b)| a * b).sum();
            assert!(plan.cost <= c + 1e-12);
        }
    }

    #[test]
    fn random_couplings_are_feasible() {
        let marginals = vec![vec![0.2, 0.8], vec![0.1, 0.3, 0.6], vec![0.5, 0.5]];
        let t = random_coupling(&marginals, 3);
        let sizes = [2, 3, 2];
        for k in 0..3 {
            let mut s = vec![0.0; sizes[k]];
            for (j, v) in t.iter().enumerate() {
                assert!(*v >= 0.0);
                s[lp::unflatten(j, &sizes)[k]] += v;
            }
            for (a, b) in s.iter().zip(&marginals[k]) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }
}
