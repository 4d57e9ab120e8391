//! Acceptance suite: one line per criterion with its measured outcome.
//! Oracles are computed here from closed forms, brute force or finite
//! differences rather than through the library's own solvers.

use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use wbary::schema::{self, DensityBoundConfig, EnsembleFile, FamilyFile};
use wbary_core::barycenter::{lln_runs, wasserstein_barycenter};
use wbary_core::gauge::{self, ClampedEntropy, GridDensity, Integrand};
use wbary_core::gaussian::{self, Gaussian};
use wbary_core::measures::w2;
use wbary_core::mmot::{self, MmotOptions};
use wbary_core::regularity::{self, SemiDiscretePotential};
use wbary_core::rng::{self, Stream};
use wbary_core::{DiscreteMeasure, ManifoldKind, MeasureEnsemble, ModelManifold, Point};

/// Criteria that fail as specified and are kept failing on purpose.
const RECORDED_FAILURES: &[usize] = &[9];

type Outcome = Result<String, String>;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn fixture(name: &str) -> Vec<u8> {
    std::fs::read(fixtures().join(name)).unwrap()
}

fn check(ok: bool, summary: String) -> Outcome {
    if ok {
        Ok(summary)
    } else {
        Err(summary)
    }
}

// ---- independent geometry -------------------------------------------------

fn minkowski(u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    u.dot(v) - 2.0 * u[0] * v[0]
}

fn ambient_norm(m: ModelManifold, v: &DVector<f64>) -> f64 {
    match m.kind() {
        ManifoldKind::Hyperbolic => minkowski(v, v).max(0.0).sqrt(),
        _ => v.norm(),
    }
}

fn dist(m: ModelManifold, x: &Point, y: &Point) -> f64 {
    match m.kind() {
        ManifoldKind::Euclidean => (&x.coords - &y.coords).norm(),
        ManifoldKind::Sphere => {
            // Half-chord form is accurate for nearby points.
            2.0 * ((&x.coords - &y.coords).norm() / 2.0).min(1.0).asin()
        }
        ManifoldKind::Hyperbolic => {
            let d = &x.coords - &y.coords;
            2.0 * (minkowski(&d, &d).max(0.0).sqrt() / 2.0).asinh()
        }
    }
}

fn exp(m: ModelManifold, x: &Point, v: &DVector<f64>) -> Point {
    let r = ambient_norm(m, v);
    let coords = match m.kind() {
        ManifoldKind::Euclidean => &x.coords + v,
        _ if r == 0.0 => x.coords.clone(),
        ManifoldKind::Sphere => &x.coords * r.cos() + v * (r.sin() / r),
        ManifoldKind::Hyperbolic => &x.coords * r.cosh() + v * (r.sinh() / r),
    };
    Point { coords }
}

fn sample_pair(m: ModelManifold, spread: f64, rng: &mut Stream) -> (Point, Point) {
    loop {
        let x = m.random_point_near(&m.origin(), 0.5, rng);
        let y = m.random_point_near(&x, spread, rng);
        let d = dist(m, &x, &y);
        if d > 1e-3 && (m.kind() != ManifoldKind::Sphere || d < 2.5) {
            return (x, y);
        }
    }
}

fn manifolds(dim: usize) -> [ModelManifold; 3] {
    [ModelManifold::euclidean(dim), ModelManifold::sphere(dim), ModelManifold::hyperbolic(dim)]
}

fn simplex(n: usize, rng: &mut Stream) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let t: f64 = raw.iter().sum();
    raw.iter().map(|w| w / t).collect()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..n {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

fn uniform_measure(m: ModelManifold, s: usize, spread: f64, rng: &mut Stream) -> DiscreteMeasure {
    let centre = m.random_point_near(&m.origin(), 0.3, rng);
    let pts = (0..s).map(|_| m.random_point_near(&centre, spread, rng)).collect();
    DiscreteMeasure::uniform(m, pts).unwrap()
}

// ---- criteria --------------------------------------------------------------

fn c1_geometry() -> Outcome {
    let mut rng = rng::stream(101, 0);
    let h = 1e-4;
    let (mut worst_hess, mut worst_trip): (f64, f64) = (0.0, 0.0);
    for m in manifolds(3) {
        for _ in 0..50 {
            let (x, y) = sample_pair(m, 0.8, &mut rng);
            let analytic = m.hess_half_dist_sq(&x, &y).unwrap().matrix;
            let frame = m.frame(&x);
            let f = |a: &DVector<f64>| {
                let v = &frame * a;
                dist(m, &exp(m, &x, &v), &y).powi(2) / 2.0
            };
            let e = |i: usize, s: f64| {
                let mut c = DVector::zeros(m.dim());
                c[i] = s;
                c
            };
            for i in 0..m.dim() {
                for j in 0..m.dim() {
                    let fd = (f(&(e(i, h) + e(j, h))) - f(&(e(i, h) - e(j, h))) - f(&(e(j, h) - e(i, h)))
                        + f(&(-e(i, h) - e(j, h))))
                        / (4.0 * h * h);
                    worst_hess = worst_hess.max((fd - analytic[(i, j)]).abs());
                }
            }
            let v = m.log_map(&x, &y).unwrap();
            worst_trip = worst_trip.max((m.exp_map(&v).coords - &y.coords).amax());
            let w = m.random_tangent(&x, 0.7, &mut rng);
            let back = m.log_map(&x, &m.exp_map(&w)).unwrap();
            worst_trip = worst_trip.max((back.vec - &w.vec).amax());
        }
    }
    check(
        worst_hess <= 1e-5 && worst_trip <= 1e-10,
        format!("max |Hess − FD| = {worst_hess:.2e} (≤ 1e-5), max round-trip error = {worst_trip:.2e} (≤ 1e-10), 150 pairs"),
    )
}

fn c2_w2() -> Outcome {
    let mut rng = rng::stream(102, 0);
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let m = manifolds(2)[k % 3];
        let s = 1 + k % 7;
        let mu = uniform_measure(m, s, 0.6, &mut rng);
        let nu = uniform_measure(m, s, 0.6, &mut rng);
        let brute = permutations(s)
            .iter()
            .map(|p| (0..s).map(|i| dist(m, &mu.points()[i], &nu.points()[p[i]]).powi(2)).sum::<f64>() / s as f64)
            .fold(f64::INFINITY, f64::min);
        let (lp, _) = w2(&mu, &nu).unwrap();
        worst = worst.max((lp - brute).abs());
    }
    check(worst <= 1e-9, format!("max |LP − brute force| = {worst:.2e} over 100 instances, s ≤ 7 (≤ 1e-9)"))
}

/// Barycentric cost of a tuple: closed form in Euclidean space, otherwise
/// the Fréchet objective at the library's minimizer re-evaluated here.
fn tuple_cost(m: ModelManifold, lambda: &[f64], xs: &[Point]) -> f64 {
    let w = match m.kind() {
        ManifoldKind::Euclidean => Point {
            coords: xs.iter().zip(lambda).fold(DVector::zeros(m.dim()), |a, (x, l)| a + &x.coords * *l),
        },
        _ => mmot::barycost(m, lambda, xs).unwrap().1,
    };
    xs.iter().zip(lambda).map(|(x, l)| l * dist(m, &w, x).powi(2)).sum()
}

fn c3_mmot() -> Outcome {
    let mut rng = rng::stream(103, 0);
    let mut worst3: f64 = 0.0;
    let mut worst_lib_oracle: f64 = 0.0;
    for k in 0..50 {
        let m = manifolds(2)[k % 3];
        let s = 1 + k % 3;
        let lambda = simplex(3, &mut rng);
        let mus: Vec<DiscreteMeasure> = (0..3).map(|_| uniform_measure(m, s, 0.5, &mut rng)).collect();
        let perms = permutations(s);
        let mut best = f64::INFINITY;
        for p in &perms {
            for q in &perms {
                let c: f64 = (0..s)
                    .map(|i| {
                        let xs = [mus[0].points()[i].clone(), mus[1].points()[p[i]].clone(), mus[2].points()[q[i]].clone()];
                        tuple_cost(m, &lambda, &xs)
                    })
                    .sum::<f64>()
                    / s as f64;
                best = best.min(c);
            }
        }
        let plan = mmot::solve_mmot(m, &lambda, &mus, &MmotOptions::default()).unwrap();
        worst3 = worst3.max((plan.cost - best).abs());
        let lib = mmot::mmot_oracle(m, &lambda, &mus).unwrap();
        worst_lib_oracle = worst_lib_oracle.max((lib - best).abs());
    }
    let mut worst2: f64 = 0.0;
    let m = ModelManifold::euclidean(2);
    for _ in 0..20 {
        let s = rng.random_range(1..=5);
        let lambda = simplex(2, &mut rng);
        let mus: Vec<DiscreteMeasure> = (0..2).map(|_| uniform_measure(m, s, 1.0, &mut rng)).collect();
        let w2sq = permutations(s)
            .iter()
            .map(|p| (0..s).map(|i| dist(m, &mus[0].points()[i], &mus[1].points()[p[i]]).powi(2)).sum::<f64>() / s as f64)
            .fold(f64::INFINITY, f64::min);
        let plan = mmot::solve_mmot(m, &lambda, &mus, &MmotOptions::default()).unwrap();
        worst2 = worst2.max((plan.cost - lambda[0] * lambda[1] * w2sq).abs());
    }
    check(
        worst3 <= 1e-9 && worst_lib_oracle <= 1e-9 && worst2 <= 1e-9,
        format!(
            "n=3: max |LP − oracle| = {worst3:.2e} (library oracle {worst_lib_oracle:.2e}), 50 seeds; n=2: max |LP − λ₁λ₂W₂²| = {worst2:.2e}, 20 seeds (≤ 1e-9)"
        ),
    )
}

fn c4_construction() -> Outcome {
    let mut rng = rng::stream(104, 0);
    let (mut plan_gap, mut energy_gap, mut pointwise): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for k in 0..30 {
        let m = manifolds(2)[k % 3];
        let n = 2 + k % 2;
        let lambda = simplex(n, &mut rng);
        let mus: Vec<DiscreteMeasure> = (0..n)
            .map(|_| {
                let s = rng.random_range(1..=4);
                let centre = m.random_point_near(&m.origin(), 0.3, &mut rng);
                let pts = (0..s).map(|_| m.random_point_near(&centre, 0.4, &mut rng)).collect();
                DiscreteMeasure::new(m, pts, simplex(s, &mut rng)).unwrap()
            })
            .collect();
        let p = MeasureEnsemble::new(mus.clone(), lambda.clone()).unwrap();
        let bar = wasserstein_barycenter(&p, &MmotOptions::default()).unwrap();
        let mut energy = 0.0;
        for (i, mu) in mus.iter().enumerate() {
            let (independent, _) = w2(&bar.barycenter, mu).unwrap();
            plan_gap = plan_gap.max((bar.induced_plans[i].cost - independent).abs());
            energy += lambda[i] * bar.induced_plans[i].cost;
        }
        energy_gap = energy_gap.max((energy - bar.plan.cost).abs());
        let merged = p.merged();
        for e in &bar.plan.entries {
            let z = &e.barycenter;
            let mut sum = DVector::zeros(z.coords.len());
            for (k, &idx) in e.indices.iter().enumerate() {
                sum += m.log_map(z, &merged.measures()[k].points()[idx]).unwrap().vec * merged.weights()[k];
            }
            pointwise = pointwise.max(ambient_norm(m, &sum));
        }
    }
    check(
        plan_gap <= 1e-8 && energy_gap <= 1e-8 && pointwise <= 1e-8,
        format!(
            "induced vs independent W₂² {plan_gap:.2e}, energy identity {energy_gap:.2e}, pointwise residual {pointwise:.2e} over 30 instances (≤ 1e-8)"
        ),
    )
}

fn random_potential(m: ModelManifold, n: usize, spread: f64, rng: &mut Stream) -> (SemiDiscretePotential, Point) {
    let z = m.random_point_near(&m.origin(), 0.3, rng);
    let mut lambda = simplex(n, rng);
    // A dominant λ₁ keeps F(z) well inside the injectivity radius.
    lambda[0] += 1.0;
    let t: f64 = lambda.iter().sum();
    lambda.iter_mut().for_each(|l| *l /= t);
    let anchors = (1..n).map(|i| (lambda[i], m.random_point_near(&z, spread, rng))).collect();
    (SemiDiscretePotential::new(m, lambda[0], anchors).unwrap(), z)
}

fn random_spd(d: usize, rng: &mut Stream) -> DMatrix<f64> {
    let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &b * b.transpose() + DMatrix::identity(d, d) * 0.3
}

fn c5_hessian() -> Outcome {
    let mut rng = rng::stream(105, 0);
    let mut worst = [0.0f64; 3];
    for (slot, m) in manifolds(2).into_iter().enumerate() {
        for _ in 0..10 {
            let (pot, z) = random_potential(m, 3, 0.7, &mut rng);
            let pts: Vec<Point> = (0..5).map(|_| m.random_point_near(&z, 0.2, &mut rng)).collect();
            let r = regularity::hessian_equality_semi_discrete(&pot, &pts).unwrap();
            worst[slot] = worst[slot].max(r);
        }
    }
    let mut gauss: f64 = 0.0;
    let mut closed: f64 = 0.0;
    for k in 0..12 {
        let d = 1 + k % 3;
        let n = 2 + k % 2;
        let lambda = simplex(n, &mut rng);
        let gs: Vec<Gaussian> = (0..n)
            .map(|_| {
                let mean = DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
                Gaussian::new(mean, random_spd(d, &mut rng)).unwrap()
            })
            .collect();
        let rep = regularity::hessian_equality_gaussian(&lambda, &gs).unwrap();
        gauss = gauss.max(rep.residual);
        if d == 1 {
            let want: f64 = gs.iter().zip(&lambda).map(|(g, l)| l * g.cov[(0, 0)].sqrt()).sum();
            closed = closed.max((rep.barycenter.cov[(0, 0)].sqrt() - want).abs());
        }
    }
    check(
        worst[0] <= 1e-14 && worst[1] <= 1e-8 && worst[2] <= 1e-8 && gauss <= 1e-10 && closed <= 1e-10,
        format!(
            "Euclidean {:.2e} (≤ 1e-14), sphere {:.2e}, hyperbolic {:.2e} (≤ 1e-8), Gaussian {gauss:.2e}, 1-D σ̄ = Σλσ {closed:.2e} (≤ 1e-10)",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn c6_jacobi() -> Outcome {
    let mut rng = rng::stream(106, 0);
    let mut worst = f64::INFINITY;
    let mut psd = f64::INFINITY;
    let mut counts = [0usize; 2];
    for k in 0..60 {
        let m = match k % 4 {
            0 => ModelManifold::euclidean(2),
            1 => ModelManifold::sphere(2),
            _ => ModelManifold::hyperbolic(2),
        };
        counts[(m.curvature_bound() > 0.0) as usize] += 1;
        let (pot, z) = random_potential(m, 2 + k % 3, 0.8, &mut rng);
        let r = regularity::jacobi_bound_check(&pot, &z).unwrap();
        worst = worst.min(r.min_slack());
        psd = psd.min(r.psd_min_eigenvalue);
    }
    check(
        worst >= -1e-6 && psd >= -1e-8,
        format!(
            "min slack {worst:.2e} (≥ -1e-6), min PSD eigenvalue {psd:.2e}; {} instances with K = 0, {} with K = 1",
            counts[0], counts[1]
        ),
    )
}

fn grid_density(g: &Gaussian, lo: f64, hi: f64, res: usize) -> GridDensity {
    let d = g.dim();
    GridDensity::from_fn(vec![lo; d], vec![hi; d], vec![res; d], |x| g.density(&DVector::from_column_slice(x)))
        .unwrap()
        .normalized()
        .unwrap()
}

fn c7_change_of_variable() -> Outcome {
    let pairs = [
        (Gaussian::isotropic(&[0.0], 0.02).unwrap(), Gaussian::isotropic(&[1.0], 0.05).unwrap()),
        (
            Gaussian::new(DVector::from_vec(vec![0.0, 0.0]), DMatrix::from_row_slice(2, 2, &[0.03, 0.01, 0.01, 0.02])).unwrap(),
            Gaussian::new(DVector::from_vec(vec![1.0, -0.5]), DMatrix::from_row_slice(2, 2, &[0.05, -0.01, -0.01, 0.04])).unwrap(),
        ),
    ];
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    let mut gauge_engaged = true;
    for (wide_f, wide_g) in &pairs {
        let res = if wide_f.dim() == 1 { 4000 } else { 300 };
        let gauge = gauge::build_gauge(&[grid_density(wide_f, -2.0, 2.5, res), grid_density(wide_g, -2.0, 2.5, res)]).unwrap();
        // G vanishes below e^{α₁}; a tenth of the covariance puts the peaks above it.
        let narrow = |n: &Gaussian| Gaussian::new(n.mean.clone(), &n.cov * 0.1).unwrap();
        let (f, g) = (narrow(wide_f), narrow(wide_g));
        let integrands: [(&str, &(dyn Fn(f64) -> f64 + Sync)); 3] = [
            ("identity", &|x: f64| x.max(0.0)),
            ("clamped entropy", &|x: f64| ClampedEntropy.g(x)),
            ("gauge", &|x: f64| gauge.g(x)),
        ];
        for (name, a) in integrands {
            let r = regularity::change_of_variable_check(&f, &g, a, 1e-9).unwrap();
            // ∫ of the identity over a density is its mass.
            let oracle = if name == "identity" { (r.lhs - 1.0).abs() } else { 0.0 };
            if name == "gauge" {
                gauge_engaged &= r.lhs > 1e-3;
            }
            worst = worst.max(r.residual()).max(oracle);
            lines.push(format!("{}-D {name} {:.1e}", f.dim(), r.residual()));
        }
    }
    check(
        worst <= 1e-7 && gauge_engaged,
        format!("{} (≤ 1e-7, gauge side nonzero: {gauge_engaged})", lines.join(", ")),
    )
}

fn c8_density_bound() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for name in ["density_1d.json", "density_2d.json"] {
        let cfg: DensityBoundConfig = schema::parse(&fixture(name), name).unwrap();
        let (mu1, anchors) = cfg.build(None).unwrap();
        let r = regularity::density_bound_check(cfg.lambda1, &mu1, &anchors).unwrap();
        // The map is y ↦ λ₁y + λ₂·anchor, so C = 1/λ₁ and the density scales by C^m.
        let c_exact = 1.0 / cfg.lambda1;
        let ratio = r.barycenter_max_density / r.source_max_density;
        let want = c_exact.powi(cfg.dim as i32);
        let dev = (ratio / want - 1.0).abs();
        ok &= dev <= 0.1 && (r.lipschitz - c_exact).abs() <= 1e-9 && r.holds();
        lines.push(format!("{}-D ratio {ratio:.4} vs C^m = {want} (dev {dev:.1e})", cfg.dim));
    }
    check(ok, format!("{} (≤ 10%)", lines.join(", ")))
}

fn c9_lln() -> Outcome {
    let p = schema::parse::<EnsembleFile>(&fixture("gaussian_pair.json"), "pair").unwrap().build().unwrap();
    let seeds = [0u64, 1, 2];
    let rows = lln_runs(&p, &[4, 16, 64], &seeds, &MmotOptions::default()).unwrap();
    let at = |j: usize, s: u64| rows.iter().find(|r| r.j == j && r.seed == s).unwrap().barycenter_w2;
    let decreasing = seeds.iter().filter(|&&s| at(64, s) < at(4, s)).count();
    let below = seeds.iter().filter(|&&s| at(64, s) <= 0.3).count();
    let finals: Vec<String> = seeds.iter().map(|&s| format!("{:.3}", at(64, s))).collect();
    check(
        decreasing == 3 && below == 3,
        format!(
            "W₂(μ̄₆₄, μ̄) = [{}]; below j=4 value for {decreasing}/3 seeds, below 0.3 for {below}/3 seeds",
            finals.join(", ")
        ),
    )
}

fn c10_gauge() -> Outcome {
    let bound = (1.0 - (-1.0f64 / 3.0).exp()).powi(2);
    let mut ok = true;
    let mut lines = Vec::new();
    for name in ["family_uniform.json", "family_gaussians.json", "family_2d.json"] {
        let family = schema::parse::<FamilyFile>(&fixture(name), name).unwrap().build(None).unwrap();
        let g = gauge::build_gauge(&family).unwrap();
        let inv = g.verify();
        let sup = family.iter().map(|f| gauge::displacement_functional(f, &g)).fold(0.0, f64::max);
        let mut h_err: f64 = 0.0;
        for &a in &g.alpha {
            for x in [a as f64 + 0.5, a as f64 + 1.5] {
                h_err = h_err.max((g.h(x) - g.h_double_integral(x, 1e-10).unwrap()).abs());
            }
        }
        let gap = g.gaps().into_iter().fold(f64::INFINITY, f64::min);
        ok &= inv.g_on_unit == 0.0
            && inv.h_prime_min >= 0.0
            && inv.h_prime_max <= 1.0
            && inv.min_second_difference >= -1e-9
            && gap >= bound
            && sup <= 1.0
            && h_err <= 1e-8;
        lines.push(format!("α = {:?}, min gap {gap:.4}, sup ∫G {sup:.3}, |H − nested| {h_err:.0e}", g.alpha));
    }
    check(ok, format!("{}; gap bound {bound:.6}", lines.join("; ")))
}

fn c11_entropy() -> Outcome {
    let mut rng = rng::stream(111, 0);
    let mut worst = f64::INFINITY;
    for k in 0..20 {
        let d = 1 + k % 2;
        let curvature = (k % 4 >= 2) as u8 as f64;
        let lambda = simplex(2, &mut rng);
        let gs: Vec<Gaussian> = (0..2)
            .map(|_| {
                let mean = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
                Gaussian::new(mean, random_spd(d, &mut rng) * 0.05).unwrap()
            })
            .collect();
        let bar = gaussian::barycenter(&lambda, &gs, 1e-14, 10_000).unwrap().barycenter;
        let w2sq: f64 = gs.iter().zip(&lambda).map(|(g, l)| l * gaussian::w2sq(&bar, g)).sum();
        let half = 3.5;
        let res = if d == 1 { 2000 } else { 160 };
        let grid = |g: &Gaussian| {
            GridDensity::from_fn(vec![-half; d], vec![half; d], vec![res; d], |x| g.density(&DVector::from_column_slice(x)))
                .unwrap()
                .normalized()
                .unwrap()
        };
        let densities: Vec<GridDensity> = gs.iter().map(grid).collect();
        let r = gauge::entropy_inequality_check(&densities, &lambda, &grid(&bar), curvature, &ClampedEntropy, w2sq).unwrap();
        worst = worst.min(r.rhs() + 1e-6 - r.lhs);
    }
    let g = Gaussian::isotropic(&[0.0, 0.0], 0.1).unwrap();
    let f = grid_density(&g, -2.0, 2.0, 120);
    let lambda = [0.5, 0.5];
    let r = gauge::entropy_inequality_check(&[f.clone(), f.clone()], &lambda, &f, 0.0, &ClampedEntropy, 0.0).unwrap();
    let m = 2.0;
    let want = 1.0 / (2.0 * 1.0) * (m * m + 2.0 * m);
    let degenerate = (r.slack() - want).abs();
    check(
        worst >= 0.0 && degenerate <= 1e-9,
        format!("min margin {worst:.3} over 20 instances (K ∈ {{0, 1}}); degenerate slack error {degenerate:.1e} (≤ 1e-9)"),
    )
}

fn c12_pipeline() -> Outcome {
    let out = Command::new(env!("CARGO_BIN_EXE_wbary"))
        .arg("pipeline-demo")
        .arg(fixtures().join("pipeline.json"))
        .output()
        .unwrap();
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).map_err(|e| format!("unreadable report: {e}"))?;
    let rec = report["records"]
        .as_array()
        .and_then(|rs| rs.iter().find(|r| r["name"] == "integral_g_barycenter"))
        .ok_or("no integral_g_barycenter record")?;
    let (lhs, rhs) = (rec["value"].as_f64().unwrap(), rec["bound"].as_f64().unwrap());
    check(
        out.status.code() == Some(0) && lhs <= rhs,
        format!("exit {:?}, ∫G(f̄) = {lhs:.4} ≤ RHS {rhs:.4}", out.status.code()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 12] = [
        ("geometry oracle", c1_geometry, Duration::from_secs(5)),
        ("W2 oracle", c2_w2, Duration::from_secs(30)),
        ("MMOT oracle", c3_mmot, Duration::from_secs(60)),
        ("construction identities", c4_construction, Duration::MAX),
        ("Hessian equality", c5_hessian, Duration::MAX),
        ("Jacobi/Laplacian bounds", c6_jacobi, Duration::MAX),
        ("change of variable", c7_change_of_variable, Duration::MAX),
        ("density-bound propagation", c8_density_bound, Duration::MAX),
        ("LLN harness", c9_lln, Duration::from_secs(300)),
        ("gauge construction", c10_gauge, Duration::MAX),
        ("entropy inequality", c11_entropy, Duration::MAX),
        ("pipeline demo", c12_pipeline, Duration::MAX),
    ];
    let mut unexpected = Vec::new();
    for (k, (name, run, budget)) in criteria.iter().enumerate() {
        let id = k + 1;
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let (pass, detail) = match outcome {
            Ok(d) if elapsed <= *budget => (true, d),
            Ok(d) => (false, format!("{d}; runtime over budget {budget:?}")),
            Err(d) => (false, d),
        };
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} [{tag}] {name}: {detail} ({:.2}s)", elapsed.as_secs_f64());
        if pass == RECORDED_FAILURES.contains(&id) {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        println!("unexpected outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
}
