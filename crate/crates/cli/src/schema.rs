//! JSON input files and their validation into core types.

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use wbary_core::gauge::GridDensity;
use wbary_core::gaussian::Gaussian;
use wbary_core::{DiscreteMeasure, ManifoldKind, MeasureEnsemble, ModelManifold, Point};

use crate::CliError;

/// Tolerance on the total mass of weights read from a file.
pub const FILE_WEIGHT_TOL: f64 = 1e-9;
/// Largest grid a file may request.
pub const MAX_CELLS: usize = 1 << 24;

fn check_cells(res: impl IntoIterator<Item = usize>) -> Result<(), CliError> {
    let cells = res.into_iter().try_fold(1usize, |acc, r| acc.checked_mul(r));
    match cells {
        Some(c) if c <= MAX_CELLS => Ok(()),
        _ => Err(CliError::Schema(format!("grid exceeds {MAX_CELLS} cells"))),
    }
}

fn schema<E: std::fmt::Display>(what: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Schema(format!("{what}: {e}"))
}

pub fn parse<T: for<'de> Deserialize<'de>>(bytes: &[u8], what: &str) -> Result<T, CliError> {
    serde_json::from_slice(bytes).map_err(schema(what))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldSpec {
    pub kind: ManifoldKind,
    pub dim: usize,
}

impl ManifoldSpec {
    pub fn build(&self) -> Result<ModelManifold, CliError> {
        ModelManifold::new(self.kind, self.dim).map_err(schema("manifold"))
    }
}

fn point(m: ModelManifold, coords: &[f64], what: &str) -> Result<Point, CliError> {
    m.point(coords.to_vec()).map_err(schema(what))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureFile {
    pub manifold: ManifoldSpec,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl MeasureFile {
    pub fn build(&self) -> Result<DiscreteMeasure, CliError> {
        let m = self.manifold.build()?;
        let points = self
            .points
            .iter()
            .map(|c| point(m, c, "measure point"))
            .collect::<Result<Vec<_>, _>>()?;
        DiscreteMeasure::normalized(m, points, self.weights.clone(), FILE_WEIGHT_TOL).map_err(schema("measure"))
    }

    pub fn from_measure(mu: &DiscreteMeasure) -> serde_json::Value {
        let m = mu.manifold();
        serde_json::json!({
            "manifold": { "kind": m.kind(), "dim": m.dim() },
            "points": mu.points().iter().map(|p| p.as_slice().to_vec()).collect::<Vec<_>>(),
            "weights": mu.weights(),
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleFile {
    pub weights: Vec<f64>,
    pub measures: Vec<MeasureFile>,
}

impl EnsembleFile {
    pub fn build(&self) -> Result<MeasureEnsemble, CliError> {
        let measures = self.measures.iter().map(MeasureFile::build).collect::<Result<Vec<_>, _>>()?;
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > FILE_WEIGHT_TOL || self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(CliError::Schema(format!("ensemble weights sum to {total}, not 1")));
        }
        let weights = self.weights.iter().map(|w| w / total).collect();
        MeasureEnsemble::new(measures, weights).map_err(schema("ensemble"))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSpec {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

impl GaussianSpec {
    pub fn build(&self) -> Result<Gaussian, CliError> {
        let d = self.mean.len();
        if d == 0 || self.cov.len() != d || self.cov.iter().any(|r| r.len() != d) {
            return Err(CliError::Schema(format!("gaussian covariance must be {d}×{d}")));
        }
        let cov = DMatrix::from_fn(d, d, |i, j| self.cov[i][j]);
        Gaussian::new(DVector::from_column_slice(&self.mean), cov).map_err(schema("gaussian"))
    }
}

fn gaussians(specs: &[GaussianSpec]) -> Result<Vec<Gaussian>, CliError> {
    let gs = specs.iter().map(GaussianSpec::build).collect::<Result<Vec<_>, _>>()?;
    match gs.first() {
        None => Err(CliError::Schema("need at least one gaussian".into())),
        Some(g) if gs.iter().any(|h| h.dim() != g.dim()) => Err(CliError::Schema("gaussians differ in dimension".into())),
        _ => Ok(gs),
    }
}

fn simplex(lambda: &[f64], n: usize) -> Result<Vec<f64>, CliError> {
    if lambda.len() != n {
        return Err(CliError::Schema(format!("expected {n} weights, got {}", lambda.len())));
    }
    let total: f64 = lambda.iter().sum();
    if lambda.iter().any(|l| !(*l > 0.0)) || (total - 1.0).abs() > FILE_WEIGHT_TOL {
        return Err(CliError::Schema(format!("weights must be positive and sum to 1 (sum {total})")));
    }
    Ok(lambda.iter().map(|l| l / total).collect())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorSpec {
    pub weight: f64,
    pub point: Vec<f64>,
}

/// A semi-discrete configuration: weight `λ₁` on the continuous marginal and
/// Dirac anchors, plus evaluation points.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemiDiscreteSpec {
    pub manifold: ManifoldSpec,
    pub lambda1: f64,
    pub anchors: Vec<AnchorSpec>,
    pub points: Vec<Vec<f64>>,
}

pub struct SemiDiscrete {
    pub manifold: ModelManifold,
    pub lambda1: f64,
    pub anchors: Vec<(f64, Point)>,
    pub points: Vec<Point>,
}

fn anchors(m: ModelManifold, lambda1: f64, specs: &[AnchorSpec]) -> Result<Vec<(f64, Point)>, CliError> {
    let mut lambda = vec![lambda1];
    lambda.extend(specs.iter().map(|a| a.weight));
    simplex(&lambda, specs.len() + 1)?;
    specs
        .iter()
        .map(|a| Ok((a.weight, point(m, &a.point, "anchor")?)))
        .collect()
}

impl SemiDiscreteSpec {
    pub fn build(&self) -> Result<SemiDiscrete, CliError> {
        let m = self.manifold.build()?;
        let anchors = anchors(m, self.lambda1, &self.anchors)?;
        if self.points.is_empty() {
            return Err(CliError::Schema("need at least one evaluation point".into()));
        }
        let points = self
            .points
            .iter()
            .map(|c| point(m, c, "evaluation point"))
            .collect::<Result<_, _>>()?;
        Ok(SemiDiscrete {
            manifold: m,
            lambda1: self.lambda1,
            anchors,
            points,
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "case", rename_all = "kebab-case", deny_unknown_fields)]
pub enum HessianConfig {
    SemiDiscrete {
        manifold: ManifoldSpec,
        lambda1: f64,
        anchors: Vec<AnchorSpec>,
        points: Vec<Vec<f64>>,
    },
    Gaussian {
        lambda: Vec<f64>,
        gaussians: Vec<GaussianSpec>,
    },
}

pub enum HessianCase {
    SemiDiscrete(SemiDiscrete),
    Gaussian { lambda: Vec<f64>, gaussians: Vec<Gaussian> },
}

impl HessianConfig {
    pub fn build(&self) -> Result<HessianCase, CliError> {
        match self {
            HessianConfig::SemiDiscrete {
                manifold,
                lambda1,
                anchors,
                points,
            } => SemiDiscreteSpec {
                manifold: manifold.clone(),
                lambda1: *lambda1,
                anchors: anchors.clone(),
                points: points.clone(),
            }
            .build()
            .map(HessianCase::SemiDiscrete),
            HessianConfig::Gaussian { lambda, gaussians: specs } => {
                let gs = gaussians(specs)?;
                Ok(HessianCase::Gaussian {
                    lambda: simplex(lambda, gs.len())?,
                    gaussians: gs,
                })
            }
        }
    }
}

/// Euclidean density-bound fixture: `μ₁` uniform on a grid over `[lo, hi]^dim`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityBoundConfig {
    pub dim: usize,
    pub lo: f64,
    pub hi: f64,
    pub per_axis: usize,
    pub lambda1: f64,
    pub anchors: Vec<AnchorSpec>,
    /// Also require the observed ratio to match `C^m` within the histogram slack.
    #[serde(default)]
    pub expect_tight: bool,
}

impl DensityBoundConfig {
    pub fn build(&self, per_axis: Option<usize>) -> Result<(DiscreteMeasure, Vec<(f64, Point)>), CliError> {
        if self.dim == 0 || !(self.hi > self.lo) {
            return Err(CliError::Schema("density-bound box must be non-empty".into()));
        }
        let per_axis = per_axis.unwrap_or(self.per_axis);
        if per_axis == 0 {
            return Err(CliError::Schema("per_axis must be positive".into()));
        }
        check_cells(std::iter::repeat_n(per_axis, self.dim))?;
        let mu1 = wbary_core::regularity::grid_uniform(self.dim, self.lo, self.hi, per_axis).map_err(schema("grid"))?;
        let anchors = anchors(ModelManifold::euclidean(self.dim), self.lambda1, &self.anchors)?;
        Ok((mu1, anchors))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub res: Vec<usize>,
}

impl GridSpec {
    fn with_res(&self, res: Option<usize>) -> GridSpec {
        let mut g = self.clone();
        if let Some(r) = res {
            g.res = vec![r; g.res.len()];
        }
        g
    }

    pub fn density(&self, f: impl Fn(&[f64]) -> f64 + Sync) -> Result<GridDensity, CliError> {
        GridDensity::from_fn(self.lo.clone(), self.hi.clone(), self.res.clone(), f).map_err(schema("grid"))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DensitySpec {
    Gaussian { mean: Vec<f64>, cov: Vec<Vec<f64>> },
    /// Uniform on an axis-aligned sub-box.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Explicit cell values, row-major with the last axis fastest.
    Values { values: Vec<f64> },
}

impl DensitySpec {
    pub fn build(&self, grid: &GridSpec) -> Result<GridDensity, CliError> {
        check_cells(grid.res.iter().copied())?;
        let d = grid.lo.len();
        let density = match self {
            DensitySpec::Gaussian { mean, cov } => {
                let g = GaussianSpec {
                    mean: mean.clone(),
                    cov: cov.clone(),
                }
                .build()?;
                if g.dim() != d {
                    return Err(CliError::Schema("density and grid differ in dimension".into()));
                }
                grid.density(|x| g.density(&DVector::from_column_slice(x)))?
            }
            DensitySpec::Box { lo, hi } => {
                if lo.len() != d || hi.len() != d || lo.iter().zip(hi).any(|(a, b)| !(b > a)) {
                    return Err(CliError::Schema("box density needs a non-empty box of the grid's dimension".into()));
                }
                let vol: f64 = lo.iter().zip(hi).map(|(a, b)| b - a).product();
                grid.density(|x| {
                    if x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| v >= a && v < b) {
                        1.0 / vol
                    } else {
                        0.0
                    }
                })?
            }
            DensitySpec::Values { values } => {
                GridDensity::new(grid.lo.clone(), grid.hi.clone(), grid.res.clone(), values.clone()).map_err(schema("grid values"))?
            }
        };
        density.normalized().map_err(schema("density"))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyFile {
    pub grid: GridSpec,
    pub densities: Vec<DensitySpec>,
}

impl FamilyFile {
    pub fn build(&self, res: Option<usize>) -> Result<Vec<GridDensity>, CliError> {
        let grid = self.grid.with_res(res);
        if self.densities.is_empty() {
            return Err(CliError::Schema("family is empty".into()));
        }
        if res.is_some() && self.densities.iter().any(|d| matches!(d, DensitySpec::Values { .. })) {
            return Err(CliError::Schema("--grid-res cannot resample explicit values".into()));
        }
        self.densities.iter().map(|d| d.build(&grid)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntegrandChoice {
    ClampedEntropy,
    /// A gauge built on the input densities.
    Gauge,
}

/// Entropy inequality on Gaussian marginals whose barycenter is the
/// closed-form Gaussian one; `W₂²` terms are Bures distances.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropyConfig {
    pub lambda: Vec<f64>,
    pub gaussians: Vec<GaussianSpec>,
    pub grid: GridSpec,
    /// Number of leading marginals treated as absolutely continuous.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub curvature: f64,
    pub integrand: IntegrandChoice,
}

pub struct EntropyCase {
    pub lambda: Vec<f64>,
    pub gaussians: Vec<Gaussian>,
    pub grid: GridSpec,
    pub k: usize,
    pub curvature: f64,
    pub integrand: IntegrandChoice,
}

fn grid_for(grid: &GridSpec, dim: usize, res: Option<usize>) -> Result<GridSpec, CliError> {
    let g = grid.with_res(res);
    if g.lo.len() != dim || g.hi.len() != dim || g.res.len() != dim {
        return Err(CliError::Schema(format!("grid must be {dim}-dimensional")));
    }
    check_cells(g.res.iter().copied())?;
    Ok(g)
}

impl EntropyConfig {
    pub fn build(&self, res: Option<usize>) -> Result<EntropyCase, CliError> {
        let gs = gaussians(&self.gaussians)?;
        let lambda = simplex(&self.lambda, gs.len())?;
        let k = self.k.unwrap_or(gs.len());
        if k == 0 || k > gs.len() {
            return Err(CliError::Schema(format!("k must lie in 1..={}", gs.len())));
        }
        if !(self.curvature >= 0.0) {
            return Err(CliError::Schema("curvature K must be nonnegative".into()));
        }
        Ok(EntropyCase {
            grid: grid_for(&self.grid, gs[0].dim(), res)?,
            lambda,
            gaussians: gs,
            k,
            curvature: self.curvature,
            integrand: self.integrand,
        })
    }
}

/// Gauge on input densities, i.i.d. discretization, barycenter, density
/// estimate on the grid and the entropy bound.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub lambda: Vec<f64>,
    pub gaussians: Vec<GaussianSpec>,
    pub samples: usize,
    pub grid: GridSpec,
    /// Kernel bandwidth; Silverman's rule when absent.
    #[serde(default)]
    pub bandwidth: Option<f64>,
}

pub struct PipelineCase {
    pub lambda: Vec<f64>,
    pub gaussians: Vec<Gaussian>,
    pub samples: usize,
    pub grid: GridSpec,
    pub bandwidth: Option<f64>,
}

impl PipelineConfig {
    pub fn build(&self, res: Option<usize>, samples: Option<usize>) -> Result<PipelineCase, CliError> {
        let gs = gaussians(&self.gaussians)?;
        if gs.len() < 2 {
            return Err(CliError::Schema("pipeline needs at least two gaussians".into()));
        }
        let samples = samples.unwrap_or(self.samples);
        if samples == 0 {
            return Err(CliError::Schema("samples must be positive".into()));
        }
        if matches!(self.bandwidth, Some(h) if !(h > 0.0)) {
            return Err(CliError::Schema("bandwidth must be positive".into()));
        }
        Ok(PipelineCase {
            lambda: simplex(&self.lambda, gs.len())?,
            grid: grid_for(&self.grid, gs[0].dim(), res)?,
            gaussians: gs,
            samples,
            bandwidth: self.bandwidth,
        })
    }
}
