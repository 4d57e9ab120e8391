//! One function per subcommand. Each returns the records and structured
//! output of its report.

use nalgebra::DVector;
use rand::Rng;
use serde_json::{json, Value};
use wbary_core::barycenter::{self, BarycenterResult};
use wbary_core::gauge::{self, GridDensity, Integrand, IntegrabilityGauge};
use wbary_core::gaussian::{self, Gaussian};
use wbary_core::measures::{self, PLAN_TOL};
use wbary_core::mmot::{self, MmotOptions};
use wbary_core::regularity::{self, SemiDiscretePotential, HISTOGRAM_SLACK};
use wbary_core::{rng, DiscreteMeasure, Error, ManifoldKind, MeasureEnsemble};

use crate::report::Record;
use crate::schema::{
    self, DensityBoundConfig, EnsembleFile, EntropyConfig, FamilyFile, HessianCase, HessianConfig, IntegrandChoice,
    MeasureFile, PipelineConfig, SemiDiscreteSpec,
};
use crate::CliError;

/// Flags shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Ctx {
    pub tol: Option<f64>,
    pub seed: u64,
    pub sizes: Option<Vec<usize>>,
    pub grid_res: Option<usize>,
    pub cap: usize,
}

impl Ctx {
    fn tol(&self, default: f64) -> f64 {
        self.tol.unwrap_or(default)
    }

    fn mmot(&self) -> MmotOptions {
        MmotOptions {
            cap: self.cap,
            ..MmotOptions::default()
        }
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub records: Vec<Record>,
    pub output: Option<Value>,
    /// CSV table emitted instead of the records under `--out csv`.
    pub table: Option<String>,
}

pub const IDENTITY_TOL: f64 = 1e-8;
pub const ORACLE_TOL: f64 = 1e-9;
pub const SLACK_TOL: f64 = 1e-6;
pub const PSD_TOL: f64 = 1e-8;
pub const OPTIMALITY_TRIALS: usize = 50;
pub const LLN_SIZES: [usize; 3] = [4, 16, 64];

pub fn w2(mu: &[u8], nu: &[u8], ctx: &Ctx) -> Result<Outcome, CliError> {
    let mu = schema::parse::<MeasureFile>(mu, "first measure")?.build()?;
    let nu = schema::parse::<MeasureFile>(nu, "second measure")?.build()?;
    if mu.manifold() != nu.manifold() {
        return Err(CliError::Schema("measures live on different manifolds".into()));
    }
    let (cost, plan) = measures::w2(&mu, &nu)?;
    let entries: Vec<Value> = (0..plan.rows())
        .flat_map(|i| (0..plan.cols()).map(move |j| (i, j)))
        .filter(|&(i, j)| plan.mass[(i, j)] > 0.0)
        .map(|(i, j)| json!([i, j, plan.mass[(i, j)]]))
        .collect();
    Ok(Outcome {
        records: vec![
            Record::info("w2_squared", cost),
            Record::at_most("plan_marginal_residual", plan.marginal_residual(mu.weights(), nu.weights()), PLAN_TOL),
            Record::at_most("plan_cost_gap", (plan.evaluate_cost(&mu, &nu) - cost).abs(), ctx.tol(PLAN_TOL)),
        ],
        output: Some(json!({ "w2_squared": cost, "plan": entries })),
        table: None,
    })
}

fn ensemble(bytes: &[u8]) -> Result<MeasureEnsemble, CliError> {
    schema::parse::<EnsembleFile>(bytes, "ensemble")?.build()
}

pub fn mmot(bytes: &[u8], ctx: &Ctx) -> Result<Outcome, CliError> {
    let p = ensemble(bytes)?.merged();
    let m = p.manifold();
    let lambda = p.weights();
    let mus = p.measures();
    if mus.len() < 2 {
        return Err(CliError::Schema("mmot needs at least two distinct measures".into()));
    }
    let plan = mmot::solve_mmot(m, lambda, mus, &ctx.mmot())?;
    let mut records = vec![
        Record::info("mmot_cost", plan.cost),
        Record::at_most("plan_marginal_residual", plan.marginal_residual(mus), PLAN_TOL),
    ];
    match mmot::mmot_oracle(m, lambda, mus) {
        Ok(oracle) => records.push(Record::at_most("oracle_gap", (plan.cost - oracle).abs(), ctx.tol(ORACLE_TOL))),
        Err(Error::OracleSize(_)) => {}
        Err(e) => return Err(e.into()),
    }
    if mus.len() == 2 {
        let (w, _) = measures::w2(&mus[0], &mus[1])?;
        let pairwise = lambda[0] * lambda[1] * w;
        records.push(Record::at_most("pairwise_gap", (plan.cost - pairwise).abs(), ctx.tol(ORACLE_TOL)));
    }
    let entries: Vec<Value> = plan
        .entries
        .iter()
        .map(|e| json!({ "indices": e.indices, "mass": e.mass, "cost": e.cost }))
        .collect();
    Ok(Outcome {
        records,
        output: Some(json!({ "cost": plan.cost, "entries": entries })),
        table: None,
    })
}

fn construction_records(p: &MeasureEnsemble, bar: &BarycenterResult, tol: f64) -> Vec<Record> {
    let mut records: Vec<Record> = bar
        .induced_plans
        .iter()
        .zip(&bar.w2_costs)
        .enumerate()
        .map(|(i, (plan, w))| Record::at_most(format!("induced_plan_gap[{i}]"), (plan.cost - w).abs(), tol))
        .collect();
    let energy: f64 = p.weights().iter().zip(&bar.induced_plans).map(|(l, pl)| l * pl.cost).sum();
    records.push(Record::at_most("energy_identity_gap", (energy - bar.plan.cost).abs(), tol));
    records.push(Record::at_most("pointwise_residual", bar.pointwise_residual, tol));
    records
}

pub fn barycenter(bytes: &[u8], ctx: &Ctx) -> Result<Outcome, CliError> {
    let p = ensemble(bytes)?;
    let bar = barycenter::wasserstein_barycenter(&p, &ctx.mmot())?;
    let tol = ctx.tol(IDENTITY_TOL);
    let mut records = vec![Record::info("functional_value", bar.functional_value)];
    records.extend(construction_records(&p, &bar, tol));
    let opt = barycenter::verify_optimality(&p, &bar.barycenter, OPTIMALITY_TRIALS, ctx.seed)?;
    records.push(Record::at_least("optimality_gap", opt.gap, -tol));
    Ok(Outcome {
        records,
        output: Some(json!({
            "barycenter": MeasureFile::from_measure(&bar.barycenter),
            "functional_value": bar.functional_value,
            "w2_costs": bar.w2_costs,
        })),
        table: None,
    })
}

pub fn lln(bytes: &[u8], runs: u64, threshold: f64, ctx: &Ctx) -> Result<Outcome, CliError> {
    let p = ensemble(bytes)?;
    let sizes = ctx.sizes.clone().unwrap_or_else(|| LLN_SIZES.to_vec());
    if sizes.is_empty() || sizes.contains(&0) || runs == 0 {
        return Err(CliError::Schema("sizes and runs must be positive".into()));
    }
    let seeds: Vec<u64> = (0..runs).map(|r| ctx.seed.wrapping_add(r)).collect();
    let rows = barycenter::lln_runs(&p, &sizes, &seeds, &ctx.mmot())?;
    let (first, last) = (sizes[0], *sizes.last().expect("non-empty"));
    let at = |j: usize, s: u64| {
        rows.iter()
            .find(|r| r.j == j && r.seed == s)
            .map(|r| r.barycenter_w2)
            .expect("row for every (j, seed)")
    };
    let mut records = Vec::new();
    for &s in &seeds {
        records.push(Record::at_most(format!("final_vs_first[seed={s}]"), at(last, s), at(first, s)));
        records.push(Record::at_most(format!("final_vs_threshold[seed={s}]"), at(last, s), threshold));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["j", "seed", "outer_w2", "barycenter_w2"]).expect("in-memory write");
    for r in &rows {
        w.write_record([r.j.to_string(), r.seed.to_string(), r.outer_w2.to_string(), r.barycenter_w2.to_string()])
            .expect("in-memory write");
    }
    let table = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv");
    let output: Vec<Value> = rows
        .iter()
        .map(|r| json!({ "j": r.j, "seed": r.seed, "outer_w2": r.outer_w2, "barycenter_w2": r.barycenter_w2 }))
        .collect();
    Ok(Outcome {
        records,
        output: Some(json!({ "sizes": sizes, "threshold": threshold, "rows": output })),
        table: Some(table),
    })
}

pub fn hessian_check(bytes: &[u8], ctx: &Ctx) -> Result<Outcome, CliError> {
    match schema::parse::<HessianConfig>(bytes, "hessian config")?.build()? {
        HessianCase::SemiDiscrete(sd) => {
            let pot = SemiDiscretePotential::new(sd.manifold, sd.lambda1, sd.anchors)?;
            let default = if sd.manifold.kind() == ManifoldKind::Euclidean { 1e-14 } else { 1e-8 };
            let residual = regularity::hessian_equality_semi_discrete(&pot, &sd.points)?;
            let mut characterization: f64 = 0.0;
            for z in &sd.points {
                characterization = characterization.max(regularity::semi_discrete_map(&pot, z)?.characterization_residual);
            }
            Ok(Outcome {
                records: vec![
                    Record::at_most("hessian_residual", residual, ctx.tol(default)),
                    Record::at_most("characterization_residual", characterization, IDENTITY_TOL),
                ],
                output: None,
                table: None,
            })
        }
        HessianCase::Gaussian { lambda, gaussians } => {
            let tol = ctx.tol(1e-10);
            let rep = regularity::hessian_equality_gaussian(&lambda, &gaussians)?;
            let mut records = vec![Record::at_most("hessian_residual", rep.residual, tol)];
            if let Some(c) = rep.closed_form_residual {
                records.push(Record::at_most("closed_form_residual", c, tol));
            }
            let cov: Vec<Vec<f64>> = rep.barycenter.cov.row_iter().map(|r| r.iter().copied().collect()).collect();
            Ok(Outcome {
                records,
                output: Some(json!({ "barycenter": { "mean": rep.barycenter.mean.as_slice(), "cov": cov } })),
                table: None,
            })
        }
    }
}

pub fn jacobi_check(bytes: &[u8], ctx: &Ctx) -> Result<Outcome, CliError> {
    let sd = schema::parse::<SemiDiscreteSpec>(bytes, "jacobi config")?.build()?;
    let pot = SemiDiscretePotential::new(sd.manifold, sd.lambda1, sd.anchors)?;
    let tol = ctx.tol(SLACK_TOL);
    let mut records = Vec::new();
    let mut output = Vec::new();
    for (k, z) in sd.points.iter().enumerate() {
        let rep = regularity::jacobi_bound_check(&pot, z)?;
        records.push(Record::at_least(format!("min_slack[{k}]"), rep.min_slack(), -tol));
        records.push(Record::at_least(format!("psd_min_eigenvalue[{k}]"), rep.psd_min_eigenvalue, -PSD_TOL));
        output.push(json!({
            "l": rep.l,
            "laplacian": rep.laplacian,
            "jacobi_slack": rep.jacobi_slack,
            "riccati_slack": rep.riccati_slack,
            "chain_slacks": rep.chain_slacks,
            "min_det": rep.min_det,
        }));
    }
    Ok(Outcome {
        records,
        output: Some(json!({ "curvature": sd.manifold.curvature_bound(), "points": output })),
        table: None,
    })
}

pub fn density_bound(bytes: &[u8], ctx: &Ctx) -> Result<Outcome, CliError> {
    let cfg = schema::parse::<DensityBoundConfig>(bytes, "density-bound config")?;
    let (mu1, anchors) = cfg.build(ctx.grid_res)?;
    let rep = regularity::density_bound_check(cfg.lambda1, &mu1, &anchors)?;
    let mut records = vec![
        Record::info("lipschitz", rep.lipschitz),
        Record::info("source_max_density", rep.source_max_density),
        Record::at_most("barycenter_max_density", rep.barycenter_max_density, rep.bound()),
    ];
    if cfg.expect_tight {
        records.push(Record::at_most("tightness_deviation", (rep.tightness() - 1.0).abs(), ctx.tol(HISTOGRAM_SLACK)));
    }
    Ok(Outcome {
        records,
        output: Some(json!({ "atoms": mu1.len(), "tightness": rep.tightness(), "bound": rep.bound() })),
        table: None,
    })
}

fn gauge_records(gauge: &IntegrabilityGauge, prefix: &str) -> Vec<Record> {
    let inv = gauge.verify();
    vec![
        Record::at_most(format!("{prefix}g_on_unit_interval"), inv.g_on_unit, 0.0),
        Record::at_least(format!("{prefix}h_prime_min"), inv.h_prime_min, 0.0),
        Record::at_most(format!("{prefix}h_prime_max"), inv.h_prime_max, 1.0),
        Record::at_least(format!("{prefix}min_second_difference"), inv.min_second_difference, -1e-9),
        Record::at_least(format!("{prefix}min_gap"), inv.min_gap, gauge::gap_bound()),
    ]
}

pub fn gauge_build(bytes: &[u8], ctx: &Ctx) -> Result<Outcome, CliError> {
    let family = schema::parse::<FamilyFile>(bytes, "family")?.build(ctx.grid_res)?;
    let g = gauge::build_gauge(&family)?;
    let mut records = gauge_records(&g, "");
    let functionals: Vec<f64> = family.iter().map(|f| gauge::displacement_functional(f, &g)).collect();
    records.push(Record::at_most("sup_integral_g", functionals.iter().copied().fold(0.0, f64::max), 1.0));
    let thresholds: Vec<f64> = g.alpha.iter().map(|&a| (a as f64).exp()).collect();
    for (n, t) in gauge::tail_profile(&family, &thresholds)?.iter().enumerate() {
        records.push(Record::at_most(format!("tail_schedule[{n}]"), *t, 0.5f64.powi(n as i32 + 1)));
    }
    for eps in [0.1, 0.01] {
        let ui = gauge::uniform_integrability(&family, &g, eps)?;
        records.push(Record::at_most(format!("ui_worst_tail[eps={eps}]"), ui.worst_tail, eps));
        records.push(Record::at_least(format!("ui_markov_slack[eps={eps}]"), ui.markov_slack, 0.0));
    }
    Ok(Outcome {
        records,
        output: Some(json!({ "alpha": g.alpha, "gaps": g.gaps(), "functionals": functionals })),
        table: None,
    })
}

fn grid_of(g: &Gaussian, grid: &schema::GridSpec) -> Result<GridDensity, CliError> {
    grid.density(|x| g.density(&DVector::from_column_slice(x)))?
        .normalized()
        .map_err(CliError::from)
}

fn entropy_records(rep: &gauge::EntropyReport, prefix: &str, tol: f64) -> Vec<Record> {
    vec![
        Record::info(format!("{prefix}weighted_term"), rep.weighted),
        Record::info(format!("{prefix}curvature_term"), rep.curvature_term),
        Record::info(format!("{prefix}dimension_term"), rep.dimension_term),
        Record::at_most(format!("{prefix}integral_g_barycenter"), rep.lhs, rep.rhs() + tol),
    ]
}

pub fn entropy_check(bytes: &[u8], ctx: &Ctx) -> Result<Outcome, CliError> {
    let case = schema::parse::<EntropyConfig>(bytes, "entropy config")?.build(ctx.grid_res)?;
    let bar = gaussian::barycenter(&case.lambda, &case.gaussians, 1e-14, 10_000)?.barycenter;
    let w2sq: f64 = case
        .gaussians
        .iter()
        .zip(&case.lambda)
        .map(|(g, l)| l * gaussian::w2sq(&bar, g))
        .sum();
    let densities = case.gaussians[..case.k]
        .iter()
        .map(|g| grid_of(g, &case.grid))
        .collect::<Result<Vec<_>, _>>()?;
    let fbar = grid_of(&bar, &case.grid)?;
    let built;
    let integrand: &dyn Integrand = match case.integrand {
        IntegrandChoice::ClampedEntropy => &gauge::ClampedEntropy,
        IntegrandChoice::Gauge => {
            built = gauge::build_gauge(&densities)?;
            &built
        }
    };
    let rep = gauge::entropy_inequality_check(&densities, &case.lambda, &fbar, case.curvature, integrand, w2sq)?;
    let mut records = vec![Record::info("w2_squared", w2sq)];
    records.extend(entropy_records(&rep, "", ctx.tol(SLACK_TOL)));
    Ok(Outcome {
        records,
        output: Some(json!({ "lhs": rep.lhs, "rhs": rep.rhs(), "slack": rep.slack() })),
        table: None,
    })
}

/// Gaussian kernel estimate on the grid; Silverman's bandwidth by default.
fn kernel_density(mu: &DiscreteMeasure, grid: &schema::GridSpec, bandwidth: Option<f64>) -> Result<(GridDensity, f64), CliError> {
    let d = mu.manifold().dim();
    let h = bandwidth.unwrap_or_else(|| {
        let n = mu.len() as f64;
        let mean: Vec<f64> = (0..d).map(|k| mu.iter().map(|(p, w)| w * p.as_slice()[k]).sum()).collect();
        let sd = (0..d)
            .map(|k| mu.iter().map(|(p, w)| w * (p.as_slice()[k] - mean[k]).powi(2)).sum::<f64>().sqrt())
            .sum::<f64>()
            / d as f64;
        sd * (4.0 / ((d as f64 + 2.0) * n)).powf(1.0 / (d as f64 + 4.0))
    });
    if !(h > 0.0) {
        return Err(CliError::Numeric(Error::InvalidArgument("degenerate kernel bandwidth".into())));
    }
    let norm = (2.0 * std::f64::consts::PI * h * h).powf(d as f64 / 2.0);
    let f = grid.density(|x| {
        mu.iter()
            .map(|(p, w)| {
                let r2: f64 = p.as_slice().iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum();
                w * (-0.5 * r2 / (h * h)).exp() / norm
            })
            .sum()
    })?;
    Ok((f.normalized()?, h))
}

pub fn pipeline_demo(bytes: &[u8], ctx: &Ctx) -> Result<Outcome, CliError> {
    let case = schema::parse::<PipelineConfig>(bytes, "pipeline config")?.build(ctx.grid_res, None)?;
    let tol = ctx.tol(SLACK_TOL);
    let densities = case.gaussians.iter().map(|g| grid_of(g, &case.grid)).collect::<Result<Vec<_>, _>>()?;
    let g = gauge::build_gauge(&densities)?;
    let mut records = gauge_records(&g, "gauge_");
    let sup = densities.iter().map(|f| gauge::displacement_functional(f, &g)).fold(0.0, f64::max);
    records.push(Record::at_most("gauge_sup_integral_g", sup, 1.0));

    let mut seeds = rng::stream(ctx.seed, 0x91e1);
    let marginals = case
        .gaussians
        .iter()
        .map(|gs| measures::gaussian_sample(&gs.mean, &gs.cov, case.samples, seeds.random()))
        .collect::<Result<Vec<_>, _>>()?;
    let p = MeasureEnsemble::new(marginals, case.lambda.clone())?;
    let bar = barycenter::wasserstein_barycenter(&p, &ctx.mmot())?;
    records.extend(construction_records(&p, &bar, IDENTITY_TOL));

    let (fbar, h) = kernel_density(&bar.barycenter, &case.grid, case.bandwidth)?;
    let rep = gauge::entropy_inequality_check(&densities, &case.lambda, &fbar, 0.0, &g, bar.functional_value)?;
    records.extend(entropy_records(&rep, "", tol));
    let clamped = gauge::entropy_inequality_check(&densities, &case.lambda, &fbar, 0.0, &gauge::ClampedEntropy, bar.functional_value)?;
    records.extend(entropy_records(&clamped, "clamped_entropy_", tol));
    Ok(Outcome {
        records,
        output: Some(json!({
            "alpha": g.alpha,
            "barycenter_atoms": bar.barycenter.len(),
            "functional_value": bar.functional_value,
            "bandwidth": h,
            "lhs": rep.lhs,
            "rhs": rep.rhs(),
        })),
        table: None,
    })
}
