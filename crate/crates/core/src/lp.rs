//! Revised simplex for axial multi-index transportation problems.
//!
//! The variables are the cells of an `s_1 × … × s_n` array (flattened,
//! last index fastest) and the constraints fix every one-dimensional
//! marginal. The constraint system has rank `Σ s_k − n + 1`; the first row
//! of every marginal after the first is dropped to make it full rank. With
//! `n = 2` this is the classical transportation problem.
//!
//! The basis inverse is kept dense. Columns are never materialized: a cell
//! with indices `(i_1, …, i_n)` has a one in row `(k, i_k)` for every `k`.
//! The starting basis comes from the north-west corner rule, which is
//! feasible and nonsingular for any number of marginals.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-11;
const REFACTOR_EVERY: usize = 64;
const STALL_LIMIT: usize = 64;

#[derive(Debug, Clone, Default)]
pub struct LpOptions {
    /// When set, entering columns are chosen by seeded partial pricing
    /// instead of full Dantzig pricing. Different seeds may end at
    /// different optimal vertices.
    pub pivot_seed: Option<u64>,
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct AxialSolution {
    /// Basic cells with positive mass, as `(flat index, mass)`, sorted by index.
    pub cells: Vec<(usize, f64)>,
    pub objective: f64,
    pub iterations: usize,
}

/// Strides for row-major flattening (last index fastest).
pub fn strides(sizes: &[usize]) -> Vec<usize> {
    let mut st = vec![1; sizes.len()];
    for k in (0..sizes.len().saturating_sub(1)).rev() {
        st[k] = st[k + 1] * sizes[k + 1];
    }
    st
}

pub fn unflatten(mut flat: usize, sizes: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; sizes.len()];
    for k in (0..sizes.len()).rev() {
        idx[k] = flat % sizes[k];
        flat /= sizes[k];
    }
    idx
}

pub fn flatten(idx: &[usize], sizes: &[usize]) -> usize {
    idx.iter().zip(sizes).fold(0, |acc, (&i, &s)| acc * s + i)
}

/// Advance a multi-index odometer; returns false on wrap-around.
fn advance(idx: &mut [usize], sizes: &[usize]) -> bool {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < sizes[k] {
            return true;
        }
        idx[k] = 0;
    }
    false
}

struct Layout {
    sizes: Vec<usize>,
    /// `row_of[k][i]`: constraint row of `(marginal k, index i)`, if kept.
    row_of: Vec<Vec<Option<usize>>>,
    rows: usize,
}

impl Layout {
    fn new(sizes: &[usize]) -> Self {
        let mut row_of = Vec::with_capacity(sizes.len());
        let mut next = 0;
        for (k, &s) in sizes.iter().enumerate() {
            let mut r = Vec::with_capacity(s);
            for i in 0..s {
                if k > 0 && i == 0 {
                    r.push(None);
                } else {
                    r.push(Some(next));
                    next += 1;
                }
            }
            row_of.push(r);
        }
        Layout {
            sizes: sizes.to_vec(),
            row_of,
            rows: next,
        }
    }

    fn column_rows(&self, idx: &[usize]) -> impl Iterator<Item = usize> + '_ {
        idx.iter()
            .enumerate()
            .filter_map(move |(k, &i)| self.row_of[k][i])
            .collect::<Vec<_>>()
            .into_iter()
    }
}

/// North-west corner rule generalized to `n` marginals. Returns exactly
/// `Σ s_k − n + 1` cells (possibly some with zero mass).
fn north_west_corner(marginals: &[Vec<f64>]) -> Vec<(Vec<usize>, f64)> {
    let n = marginals.len();
    let sizes: Vec<usize> = marginals.iter().map(Vec::len).collect();
    let steps: usize = sizes.iter().map(|s| s - 1).sum();
    let mut rem: Vec<Vec<f64>> = marginals.to_vec();
    let mut idx = vec![0usize; n];
    let mut out = Vec::with_capacity(steps + 1);
    for step in 0..=steps {
        let mass = (0..n)
            .map(|k| rem[k][idx[k]])
            .fold(f64::INFINITY, f64::min)
            .max(0.0);
        out.push((idx.clone(), mass));
        for k in 0..n {
            rem[k][idx[k]] -= mass;
        }
        if step == steps {
            break;
        }
        let mut best: Option<usize> = None;
        for k in 0..n {
            if idx[k] + 1 < sizes[k] {
                match best {
                    Some(b) if rem[b][idx[b]] <= rem[k][idx[k]] => {}
                    _ => best = Some(k),
                }
            }
        }
        let k = best.expect("steps remain, so some marginal is not exhausted");
        idx[k] += 1;
    }
    out
}

/// Minimizes `Σ cost[j] x[j]` over the axial transportation polytope with the
/// given marginals. Marginals must be nonnegative with equal totals.
pub fn solve_axial(marginals: &[Vec<f64>], cost: &[f64], opts: &LpOptions) -> Result<AxialSolution> {
    if marginals.is_empty() || marginals.iter().any(Vec::is_empty) {
        return Err(Error::Lp("every marginal needs at least one atom".into()));
    }
    let sizes: Vec<usize> = marginals.iter().map(Vec::len).collect();
    let ncols: usize = sizes.iter().product();
    if cost.len() != ncols {
        return Err(Error::Lp(format!(
            "cost has {} entries, expected {ncols}",
            cost.len()
        )));
    }
    let total0: f64 = marginals[0].iter().sum();
    for m in marginals {
        if m.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Lp("marginal weights must be finite and nonnegative".into()));
        }
        let t: f64 = m.iter().sum();
        if (t - total0).abs() > 1e-9 * total0.max(1.0) {
            return Err(Error::Lp(format!("marginal totals differ: {t} vs {total0}")));
        }
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::Lp("cost entries must be finite".into()));
    }

    let layout = Layout::new(&sizes);
    let rows = layout.rows;
    let mut rhs = vec![0.0; rows];
    for (k, m) in marginals.iter().enumerate() {
        for (i, &w) in m.iter().enumerate() {
            if let Some(r) = layout.row_of[k][i] {
                rhs[r] = w;
            }
        }
    }

    let start = north_west_corner(marginals);
    debug_assert_eq!(start.len(), rows);
    let mut basis: Vec<usize> = start.iter().map(|(idx, _)| flatten(idx, &sizes)).collect();
    let mut in_basis = vec![false; ncols];
    for &j in &basis {
        in_basis[j] = true;
    }

    let scale = cost.iter().fold(0.0f64, |a, c| a.max(c.abs())).max(1.0);
    let rc_tol = 1e-11 * scale;

    let mut solver = Simplex {
        layout: &layout,
        rhs: &rhs,
        binv: DMatrix::zeros(rows, rows),
        xb: vec![0.0; rows],
    };
    solver.refactor(&basis)?;

    let max_iter = opts
        .max_iterations
        .unwrap_or(200 * (rows + ncols) + 1000);
    let mut rng = opts.pivot_seed.map(ChaCha8Rng::seed_from_u64);
    let mut stall = 0usize;
    let mut bland = false;
    let mut iterations = 0usize;
    let mut y = vec![0.0; rows];
    let mut duals: Vec<Vec<f64>> = sizes.iter().map(|&s| vec![0.0; s]).collect();

    loop {
        if iterations >= max_iter {
            return Err(Error::Lp(format!("no convergence after {iterations} pivots")));
        }
        if iterations > 0 && iterations.is_multiple_of(REFACTOR_EVERY) {
            solver.refactor(&basis)?;
        }

        // Duals y = B^{-T} c_B.
        for (r, yr) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for (i, &j) in basis.iter().enumerate() {
                s += cost[j] * solver.binv[(i, r)];
            }
            *yr = s;
        }
        for (k, d) in duals.iter_mut().enumerate() {
            for (i, v) in d.iter_mut().enumerate() {
                *v = layout.row_of[k][i].map_or(0.0, |r| y[r]);
            }
        }

        let entering = if bland {
            price_bland(&sizes, cost, &duals, &in_basis, rc_tol)
        } else if let Some(rng) = rng.as_mut() {
            price_partial(&sizes, cost, &duals, &in_basis, rc_tol, rng)
        } else {
            price_dantzig(&sizes, cost, &duals, &in_basis, rc_tol)
        };
        let Some((q, rc)) = entering else {
            break;
        };

        // d = B^{-1} a_q.
        let qidx = unflatten(q, &sizes);
        let qrows: Vec<usize> = layout.column_rows(&qidx).collect();
        let mut d = vec![0.0; rows];
        for (i, di) in d.iter_mut().enumerate() {
            *di = qrows.iter().map(|&r| solver.binv[(i, r)]).sum();
        }

        // Ratio test.
        let mut leave: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for i in 0..rows {
            if d[i] > PIVOT_TOL {
                let ratio = solver.xb[i].max(0.0) / d[i];
                let better = match leave {
                    None => true,
                    Some(l) => {
                        if ratio < best_ratio - 1e-15 {
                            true
                        } else if ratio <= best_ratio + 1e-15 {
                            if bland {
                                basis[i] < basis[l]
                            } else {
                                d[i] > d[l]
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    leave = Some(i);
                    best_ratio = best_ratio.min(ratio);
                }
            }
        }
        let Some(r) = leave else {
            return Err(Error::Lp("unbounded direction in a bounded polytope".into()));
        };
        let theta = solver.xb[r].max(0.0) / d[r];

        // Update primal values and the basis inverse.
        for i in 0..rows {
            if i != r {
                solver.xb[i] -= theta * d[i];
            }
        }
        solver.xb[r] = theta;
        let piv = d[r];
        for c in 0..rows {
            solver.binv[(r, c)] /= piv;
        }
        for i in 0..rows {
            if i != r && d[i] != 0.0 {
                let f = d[i];
                for c in 0..rows {
                    let v = solver.binv[(r, c)];
                    solver.binv[(i, c)] -= f * v;
                }
            }
        }
        in_basis[basis[r]] = false;
        in_basis[q] = true;
        basis[r] = q;
        iterations += 1;

        let gain = -theta * rc;
        if gain > 1e-14 * scale {
            stall = 0;
            bland = false;
        } else {
            stall += 1;
            if stall > STALL_LIMIT {
                bland = true;
            }
        }
    }

    solver.refactor(&basis)?;
    let mut cells = Vec::with_capacity(rows);
    let mut objective = 0.0;
    for (i, &j) in basis.iter().enumerate() {
        let x = solver.xb[i];
        if x < -1e-9 {
            return Err(Error::Lp(format!("basic solution lost feasibility ({x:e})")));
        }
        if x > 1e-15 {
            cells.push((j, x));
            objective += cost[j] * x;
        }
    }
    cells.sort_by_key(|c| c.0);
    Ok(AxialSolution {
        cells,
        objective,
        iterations,
    })
}

struct Simplex<'a> {
    layout: &'a Layout,
    rhs: &'a [f64],
    binv: DMatrix<f64>,
    xb: Vec<f64>,
}

impl Simplex<'_> {
    fn refactor(&mut self, basis: &[usize]) -> Result<()> {
        let rows = self.layout.rows;
        let mut b = DMatrix::zeros(rows, rows);
        for (c, &j) in basis.iter().enumerate() {
            let idx = unflatten(j, &self.layout.sizes);
            for r in self.layout.column_rows(&idx) {
                b[(r, c)] = 1.0;
            }
        }
        self.binv = b
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::Lp("singular basis".into()))?;
        for i in 0..rows {
            let mut s = 0.0;
            for r in 0..rows {
                s += self.binv[(i, r)] * self.rhs[r];
            }
            // Clamp round-off; genuine infeasibility is caught at the end.
            self.xb[i] = if s.abs() < 1e-14 { 0.0 } else { s };
        }
        Ok(())
    }
}

fn reduced_cost(cost: f64, idx: &[usize], duals: &[Vec<f64>]) -> f64 {
    let mut rc = cost;
    for (k, &i) in idx.iter().enumerate() {
        rc -= duals[k][i];
    }
    rc
}

fn price_dantzig(
    sizes: &[usize],
    cost: &[f64],
    duals: &[Vec<f64>],
    in_basis: &[bool],
    tol: f64,
) -> Option<(usize, f64)> {
    let mut idx = vec![0; sizes.len()];
    let mut best: Option<(usize, f64)> = None;
    let mut j = 0;
    loop {
        if !in_basis[j] {
            let rc = reduced_cost(cost[j], &idx, duals);
            if rc < -tol && best.is_none_or(|(_, b)| rc < b) {
                best = Some((j, rc));
            }
        }
        j += 1;
        if !advance(&mut idx, sizes) {
            break;
        }
    }
    best
}

fn price_bland(
    sizes: &[usize],
    cost: &[f64],
    duals: &[Vec<f64>],
    in_basis: &[bool],
    tol: f64,
) -> Option<(usize, f64)> {
    let mut idx = vec![0; sizes.len()];
    let mut j = 0;
    loop {
        if !in_basis[j] {
            let rc = reduced_cost(cost[j], &idx, duals);
            if rc < -tol {
                return Some((j, rc));
            }
        }
        j += 1;
        if !advance(&mut idx, sizes) {
            return None;
        }
    }
}

/// Best improving column within a window of the cyclic column order that
/// starts at a random offset; the window grows until it finds one.
fn price_partial(
    sizes: &[usize],
    cost: &[f64],
    duals: &[Vec<f64>],
    in_basis: &[bool],
    tol: f64,
    rng: &mut ChaCha8Rng,
) -> Option<(usize, f64)> {
    let ncols = cost.len();
    let window = (ncols / 4).max(16).min(ncols);
    let start = rng.random_range(0..ncols);
    let mut idx = unflatten(start, sizes);
    let mut j = start;
    let mut best: Option<(usize, f64)> = None;
    for scanned in 0..ncols {
        if scanned > 0 && scanned % window == 0 && best.is_some() {
            break;
        }
        if !in_basis[j] {
            let rc = reduced_cost(cost[j], &idx, duals);
            if rc < -tol && best.is_none_or(|(_, b)| rc < b) {
                best = Some((j, rc));
            }
        }
        j += 1;
        if !advance(&mut idx, sizes) {
            j = 0;
        }
    }
    best
}
