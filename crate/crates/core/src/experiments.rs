//! Replica ensembles, parameter sweeps and the figure presets.
//!
//! Every replica draws its network, thresholds and seed agent from streams
//! derived from `(base_seed, stream, replica)`, so results do not depend on
//! the number of workers or on scheduling order.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::{self, FormulaVariant, ModelParams, Regime};
use crate::engine::{self, CascadeConfig, Shock};
use crate::rng::{derive_seed, stream_rng, streams};
use crate::thresholds::{ThresholdDistribution, ThresholdSample};
use crate::topology::{Network, TopologyKind, TopologySpec};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

/// A replica failed; the summary covers the replicas that precede it.
#[derive(Debug, Error, Clone)]
#[error("replica {replica} failed: {message} ({completed} replicas completed)")]
pub struct EnsembleError {
    pub replica: usize,
    pub message: String,
    pub completed: usize,
    pub partial: Option<EnsembleSummary>,
}

/// How the seed is shocked in an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum ShockSpec {
    /// Fixed `phi_star`.
    Absolute(f64),
    /// `phi_star = value * Q`, `Q` the network capacity.
    RelativeToCapacity(f64),
    /// Internal event: the seed fails at its own threshold.
    Rie,
}

impl ShockSpec {
    pub fn regime(&self) -> Regime {
        match self {
            ShockSpec::Rie => Regime::Rie,
            _ => Regime::Eee,
        }
    }

    /// Absolute shock size, or `None` for internal events.
    pub fn phi_star(
        &self,
        dist: &ThresholdDistribution,
        n: usize,
        alpha: f64,
    ) -> Result<Option<f64>, ExperimentError> {
        match *self {
            ShockSpec::Absolute(phi) => Ok(Some(phi)),
            ShockSpec::RelativeToCapacity(r) => dist
                .network_capacity(n, alpha)
                .map(|q| Some(r * q))
                .map_err(|e| ExperimentError::Invalid(e.to_string())),
            ShockSpec::Rie => Ok(None),
        }
    }
}

impl fmt::Display for ShockSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShockSpec::Absolute(v) => write!(f, "phi_star={v}"),
            ShockSpec::RelativeToCapacity(v) => write!(f, "phi_star/Q={v}"),
            ShockSpec::Rie => f.write_str("rie"),
        }
    }
}

/// One parameter point of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointParams {
    pub topology: TopologySpec,
    pub dist: ThresholdDistribution,
    pub alpha: f64,
    pub shock: ShockSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicaResult {
    pub x: f64,
    pub total: bool,
    pub stop_time: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub replicas: usize,
    pub x_mean: f64,
    /// Standard error of `x_mean`; zero for a single replica.
    pub x_stderr: f64,
    /// Fraction of replicas with `X = 1`.
    pub frequency_infinite: f64,
    pub t_prime_mean: f64,
    pub results: Vec<ReplicaResult>,
}

impl EnsembleSummary {
    pub fn from_results(results: Vec<ReplicaResult>) -> Option<Self> {
        if results.is_empty() {
            return None;
        }
        let m = results.len() as f64;
        let x_mean = results.iter().map(|r| r.x).sum::<f64>() / m;
        let x_stderr = if results.len() > 1 {
            let var = results.iter().map(|r| (r.x - x_mean).powi(2)).sum::<f64>() / (m - 1.0);
            (var / m).sqrt()
        } else {
            0.0
        };
        Some(EnsembleSummary {
            replicas: results.len(),
            x_mean,
            x_stderr,
            frequency_infinite: results.iter().filter(|r| r.total).count() as f64 / m,
            t_prime_mean: results.iter().map(|r| r.stop_time as f64).sum::<f64>() / m,
            results,
        })
    }
}

/// Thresholds for one replica. Under an external shock the seed must fail,
/// so a seed threshold above `phi_star` is redrawn from the distribution
/// conditioned on `theta <= phi_star`; the seed's threshold plays no other
/// role in the dynamics.
fn replica_thresholds(
    dist: &ThresholdDistribution,
    n: usize,
    seed_agent: usize,
    phi_star: Option<f64>,
    base: u64,
    replica: u64,
) -> Result<ThresholdSample, String> {
    let rng_seed = derive_seed(base, streams::THRESHOLDS, replica);
    let mut sample = dist.sample(n, rng_seed);
    if let Some(phi) = phi_star {
        if sample.values[seed_agent] > phi {
            let mass = dist.cdf(phi);
            if mass <= 0.0 {
                return Err(format!("shock {phi} lies below the threshold support"));
            }
            let u: f64 = stream_rng(base, streams::SEED_AGENT, replica ^ (1 << 63)).random();
            sample.values[seed_agent] = dist.quantile(u * mass).map_err(|e| e.to_string())?;
        }
    }
    Ok(sample)
}

fn run_replica(
    point: &PointParams,
    shared: Option<&Network>,
    phi_star: Option<f64>,
    base: u64,
    replica: usize,
) -> Result<ReplicaResult, String> {
    let r = replica as u64;
    let built;
    let network = match shared {
        Some(net) => net,
        None => {
            let n = point.topology.n;
            let seed_agent = stream_rng(base, streams::SEED_AGENT, r).random_range(0..n);
            built = point
                .topology
                .build(derive_seed(base, streams::NETWORK, r), seed_agent)
                .map_err(|e| e.to_string())?;
            &built
        }
    };
    let thresholds =
        replica_thresholds(&point.dist, network.n(), network.seed(), phi_star, base, r)?;
    let shock = phi_star.map_or(Shock::SeedThreshold, Shock::Explicit);
    let trace = engine::run(
        network,
        &thresholds,
        &CascadeConfig::new(point.alpha, shock),
    )
    .map_err(|e| e.to_string())?;
    Ok(ReplicaResult {
        x: trace.x_final(),
        total: trace.is_total(),
        stop_time: trace.stop_time,
    })
}

/// Run `replicas` cascades in the current rayon context.
///
/// A `paper_tree` is always shocked at its root and shared between
/// replicas; other topologies get a fresh network and a uniformly drawn
/// seed agent per replica.
pub fn ensemble_in_context(
    point: &PointParams,
    replicas: usize,
    base_seed: u64,
) -> Result<EnsembleSummary, ExperimentError> {
    if replicas == 0 {
        return Err(ExperimentError::Invalid("replicas must be >= 1".into()));
    }
    point
        .topology
        .validate()
        .map_err(|e| ExperimentError::Invalid(e.to_string()))?;
    let phi_star = point
        .shock
        .phi_star(&point.dist, point.topology.n, point.alpha)?;
    let shared = match point.topology.kind {
        TopologyKind::PaperTree => Some(
            point
                .topology
                .build(0, 0)
                .map_err(|e| ExperimentError::Invalid(e.to_string()))?,
        ),
        _ => None,
    };
    let outcomes: Vec<Result<ReplicaResult, String>> = (0..replicas)
        .into_par_iter()
        .map(|r| run_replica(point, shared.as_ref(), phi_star, base_seed, r))
        .collect();

    let mut results = Vec::with_capacity(replicas);
    for (replica, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(res) => results.push(res),
            Err(message) => {
                let completed = results.len();
                return Err(EnsembleError {
                    replica,
                    message,
                    completed,
                    partial: EnsembleSummary::from_results(results),
                }
                .into());
            }
        }
    }
    Ok(EnsembleSummary::from_results(results).expect("replicas >= 1"))
}

fn with_workers<T: Send>(
    workers: Option<usize>,
    job: impl FnOnce() -> T + Send,
) -> Result<T, ExperimentError> {
    match workers {
        None => Ok(job()),
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map(|pool| pool.install(job))
            .map_err(|e| ExperimentError::Pool(e.to_string())),
    }
}

/// [`ensemble_in_context`] on a dedicated pool of `workers` threads, or on
/// the global pool when `workers` is `None`.
pub fn run_ensemble(
    point: &PointParams,
    replicas: usize,
    base_seed: u64,
    workers: Option<usize>,
) -> Result<EnsembleSummary, ExperimentError> {
    with_workers(workers, || ensemble_in_context(point, replicas, base_seed))?
}

/// Parameters a sweep axis can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisParam {
    Alpha,
    ShockOverCapacity,
    Shock,
    Gamma,
    Sigma,
    K,
    KOverN,
}

impl AxisParam {
    pub fn as_str(self) -> &'static str {
        match self {
            AxisParam::Alpha => "alpha",
            AxisParam::ShockOverCapacity => "shock_over_capacity",
            AxisParam::Shock => "shock",
            AxisParam::Gamma => "gamma",
            AxisParam::Sigma => "sigma",
            AxisParam::K => "k",
            AxisParam::KOverN => "k_over_n",
        }
    }

    pub const ALL: [AxisParam; 7] = [
        AxisParam::Alpha,
        AxisParam::ShockOverCapacity,
        AxisParam::Shock,
        AxisParam::Gamma,
        AxisParam::Sigma,
        AxisParam::K,
        AxisParam::KOverN,
    ];
}

impl fmt::Display for AxisParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AxisParam {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AxisParam::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| ExperimentError::Invalid(format!("unknown sweep axis {s:?}")))
    }
}

impl PointParams {
    /// Copy with one parameter replaced.
    pub fn with(&self, param: AxisParam, value: f64) -> Result<PointParams, ExperimentError> {
        let invalid = |msg: String| ExperimentError::Invalid(msg);
        let mut p = self.clone();
        match param {
            AxisParam::Alpha => p.alpha = value,
            AxisParam::ShockOverCapacity => p.shock = ShockSpec::RelativeToCapacity(value),
            AxisParam::Shock => p.shock = ShockSpec::Absolute(value),
            AxisParam::Gamma => {
                let theta_min = match p.dist {
                    ThresholdDistribution::PowerLaw { theta_min, .. } => theta_min,
                    _ => return Err(invalid("gamma axis needs power-law thresholds".into())),
                };
                p.dist = ThresholdDistribution::power_law(value, theta_min)
                    .map_err(|e| invalid(e.to_string()))?;
            }
            AxisParam::Sigma => {
                let theta_bar = match p.dist {
                    ThresholdDistribution::Delta { theta_bar }
                    | ThresholdDistribution::Uniform { theta_bar, .. } => theta_bar,
                    _ => {
                        return Err(invalid(
                            "sigma axis needs delta or uniform thresholds".into(),
                        ))
                    }
                };
                p.dist = ThresholdDistribution::uniform(theta_bar, value)
                    .map_err(|e| invalid(e.to_string()))?;
            }
            AxisParam::K | AxisParam::KOverN => {
                let k = if param == AxisParam::K {
                    value.round() as usize
                } else {
                    (value * p.topology.n as f64).round() as usize
                };
                p.topology = match p.topology.kind {
                    TopologyKind::PaperTree => TopologySpec::paper_tree(k, p.topology.depth),
                    TopologyKind::RandomRegular => TopologySpec::random_regular(p.topology.n, k),
                    TopologyKind::SquareLattice => {
                        return Err(invalid("square_lattice has fixed K=4".into()))
                    }
                }
                .map_err(|e| invalid(e.to_string()))?;
            }
        }
        Ok(p)
    }

    /// Closed-form `X` at this point: the extreme-event prediction
    /// for external shocks, the ensemble average for internal events.
    pub fn analytic_x(
        &self,
        variant: FormulaVariant,
        shell_seed: u64,
    ) -> Result<(f64, usize), ExperimentError> {
        let invalid = |msg: String| ExperimentError::Invalid(msg);
        let n = self.topology.n;
        match self.shock.phi_star(&self.dist, n, self.alpha)? {
            None => Ok((
                analytic::mean_x(&self.dist, self.topology.k, self.alpha, variant),
                0,
            )),
            Some(phi) => {
                let net = self
                    .topology
                    .build(shell_seed, 0)
                    .map_err(|e| invalid(e.to_string()))?;
                let params = ModelParams::from_network(&net, self.alpha, phi, self.dist)
                    .map_err(|e| invalid(e.to_string()))?;
                let p = analytic::predict(&params, Regime::Eee, variant)
                    .map_err(|e| invalid(e.to_string()))?;
                Ok((p.x_final, p.clamp_count))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub param: AxisParam,
    pub values: Vec<f64>,
}

impl Axis {
    pub fn new(param: AxisParam, values: Vec<f64>) -> Self {
        Axis { param, values }
    }

    /// `count` evenly spaced values from `lo` to `hi` inclusive.
    pub fn linspace(param: AxisParam, lo: f64, hi: f64, count: usize) -> Self {
        let values = match count {
            0 => Vec::new(),
            1 => vec![lo],
            _ => (0..count)
                .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
                .collect(),
        };
        Axis { param, values }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub label: String,
    pub axis1: Axis,
    pub axis2: Axis,
    pub base: PointParams,
    pub replicas: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub variant: FormulaVariant,
}

impl SweepGrid {
    pub fn points(&self) -> usize {
        self.axis1.values.len() * self.axis2.values.len()
    }

    /// Grid-level checks; per-point domain errors are reported in the
    /// records instead.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.replicas == 0 {
            return Err(ExperimentError::Invalid("replicas must be >= 1".into()));
        }
        if self.axis1.param == self.axis2.param {
            return Err(ExperimentError::Invalid(format!(
                "both axes vary {}",
                self.axis1.param
            )));
        }
        for axis in [&self.axis1, &self.axis2] {
            if axis.values.is_empty() {
                return Err(ExperimentError::Invalid(format!(
                    "axis {} has no values",
                    axis.param
                )));
            }
            if let Some(v) = axis.values.iter().find(|v| !v.is_finite()) {
                return Err(ExperimentError::Invalid(format!(
                    "axis {} has non-finite value {v}",
                    axis.param
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub label: String,
    pub axis1: AxisParam,
    pub axis1_value: f64,
    pub axis2: AxisParam,
    pub axis2_value: f64,
    pub x_sim_mean: Option<f64>,
    pub x_sim_stderr: Option<f64>,
    pub frequency_infinite: Option<f64>,
    pub x_analytic: Option<f64>,
    pub t_prime_mean: Option<f64>,
    pub clamp_count: usize,
    pub error: Option<String>,
}

fn sweep_point(grid: &SweepGrid, index: usize, v1: f64, v2: f64) -> SweepRecord {
    let mut rec = SweepRecord {
        label: grid.label.clone(),
        axis1: grid.axis1.param,
        axis1_value: v1,
        axis2: grid.axis2.param,
        axis2_value: v2,
        x_sim_mean: None,
        x_sim_stderr: None,
        frequency_infinite: None,
        x_analytic: None,
        t_prime_mean: None,
        clamp_count: 0,
        error: None,
    };
    let point = match grid
        .base
        .with(grid.axis1.param, v1)
        .and_then(|p| p.with(grid.axis2.param, v2))
    {
        Ok(p) => p,
        Err(e) => {
            rec.error = Some(e.to_string());
            return rec;
        }
    };
    let point_seed = derive_seed(grid.base_seed, streams::GRID_POINT, index as u64);
    let mut errors = Vec::new();
    match point.analytic_x(grid.variant, derive_seed(point_seed, streams::NETWORK, 0)) {
        Ok((x, clamps)) => {
            rec.x_analytic = Some(x);
            rec.clamp_count = clamps;
        }
        Err(e) => errors.push(format!("analytic: {e}")),
    }
    match ensemble_in_context(&point, grid.replicas, point_seed) {
        Ok(s) => {
            rec.x_sim_mean = Some(s.x_mean);
            rec.x_sim_stderr = Some(s.x_stderr);
            rec.frequency_infinite = Some(s.frequency_infinite);
            rec.t_prime_mean = Some(s.t_prime_mean);
        }
        Err(e) => errors.push(format!("simulation: {e}")),
    }
    if !errors.is_empty() {
        rec.error = Some(errors.join("; "));
    }
    rec
}

/// Evaluate every grid point. Failures are reported per record rather than
/// aborting the sweep.
pub fn sweep(
    grid: &SweepGrid,
    workers: Option<usize>,
) -> Result<Vec<SweepRecord>, ExperimentError> {
    grid.validate()?;
    let n2 = grid.axis2.values.len();
    let jobs: Vec<(usize, f64, f64)> = grid
        .axis1
        .values
        .iter()
        .enumerate()
        .flat_map(|(i, &v1)| {
            grid.axis2
                .values
                .iter()
                .enumerate()
                .map(move |(j, &v2)| (i * n2 + j, v1, v2))
        })
        .collect();
    with_workers(workers, || {
        jobs.par_iter()
            .map(|&(idx, v1, v2)| sweep_point(grid, idx, v1, v2))
            .collect()
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const SWEEP_CSV_HEADER: &str = "label,axis1,axis1_value,axis2,axis2_value,X_sim_mean,X_sim_stderr,frequency_infinite,X_analytic,t_prime_mean,clamp_count,error";

pub fn write_sweep_csv<W: Write>(records: &[SweepRecord], mut w: W) -> io::Result<()> {
    writeln!(w, "{SWEEP_CSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            csv_field(&r.label),
            r.axis1,
            r.axis1_value,
            r.axis2,
            r.axis2_value,
            opt(r.x_sim_mean),
            opt(r.x_sim_stderr),
            opt(r.frequency_infinite),
            opt(r.x_analytic),
            opt(r.t_prime_mean),
            r.clamp_count,
            csv_field(r.error.as_deref().unwrap_or("")),
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub index: usize,
    /// `X_sim_mean - X_analytic`.
    pub residual: f64,
    pub stderr: f64,
    pub beyond_three_stderr: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub rows: Vec<ResidualRow>,
    pub max_abs_residual: Option<f64>,
    pub beyond_three_stderr: usize,
    /// Records missing either the simulated or the analytic value.
    pub not_comparable: usize,
}

pub fn compare(records: &[SweepRecord]) -> ResidualReport {
    let mut rows = Vec::new();
    let mut not_comparable = 0;
    for (index, r) in records.iter().enumerate() {
        match (r.x_sim_mean, r.x_analytic) {
            (Some(sim), Some(an)) => {
                let residual = sim - an;
                let stderr = r.x_sim_stderr.unwrap_or(0.0);
                rows.push(ResidualRow {
                    index,
                    residual,
                    stderr,
                    beyond_three_stderr: residual.abs() > 3.0 * stderr,
                });
            }
            _ => not_comparable += 1,
        }
    }
    ResidualReport {
        max_abs_residual: rows.iter().map(|r| r.residual.abs()).reduce(f64::max),
        beyond_three_stderr: rows.iter().filter(|r| r.beyond_three_stderr).count(),
        rows,
        not_comparable,
    }
}

/// One row of the critical-threshold evolution table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub alpha: f64,
    pub t: u32,
    pub theta_c: f64,
    pub f: f64,
}

/// `theta_c(t)` and the clamped `f(t)` for `t = 1..=t_max` at each `alpha`.
pub fn threshold_evolution(
    dist: &ThresholdDistribution,
    k: usize,
    phi_star: f64,
    alphas: &[f64],
    t_max: u32,
) -> Result<Vec<ThresholdRow>, ExperimentError> {
    let invalid = |e: analytic::AnalyticError| ExperimentError::Invalid(e.to_string());
    let mut rows = Vec::new();
    for &alpha in alphas {
        for t in 1..=t_max {
            let theta_c =
                analytic::eee_critical_threshold(phi_star, k, alpha, t).map_err(invalid)?;
            let f = match dist {
                ThresholdDistribution::Delta { .. } => dist.cdf(theta_c),
                _ => analytic::eee_f_t(dist, phi_star, k, alpha, t).map_err(invalid)?,
            };
            rows.push(ThresholdRow {
                alpha,
                t,
                theta_c,
                f,
            });
        }
    }
    Ok(rows)
}

pub fn write_threshold_csv<W: Write>(rows: &[ThresholdRow], mut w: W) -> io::Result<()> {
    writeln!(w, "alpha,t,theta_c,f_t")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.alpha, r.t, r.theta_c, r.f)?;
    }
    Ok(())
}

/// Threshold-evolution settings behind the `fig2` preset.
pub mod fig2 {
    pub const K: usize = 4;
    pub const THETA_BAR: f64 = 1.0;
    pub const SIGMA: f64 = 0.5;
    pub const PHI_STAR: f64 = 1.0;
    pub const ALPHAS: [f64; 4] = [0.2, 0.5, 0.7, 0.8];
    pub const T_MAX: u32 = 8;
}

/// Shared defaults of the sweep presets.
pub mod defaults {
    pub const GRID: usize = 50;
    pub const REPLICAS: usize = 20;
    pub const TREE_K: usize = 4;
    pub const TREE_DEPTH: usize = 5;
    pub const LATTICE_SIDE: usize = 32;
    pub const THETA_BAR: f64 = 1.0;
    pub const SIGMA: f64 = 0.5;
    pub const THETA_MIN: f64 = 0.5;
    pub const FIG5_SHOCK_OVER_Q: f64 = 0.2;
    pub const FIG6_N: usize = 1000;
    pub const FIG6_ONE_MINUS_ALPHA: f64 = 0.002;
    pub const FIG6_REPLICAS: usize = 50;
    pub const BASE_SEED: u64 = 20_240_601;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    /// Empty for `fig2`, which is a threshold table rather than a sweep.
    pub grids: Vec<SweepGrid>,
}

pub const PRESET_NAMES: [&str; 5] = ["fig2", "fig3", "fig4", "fig5", "fig6"];

fn tree_spec() -> TopologySpec {
    TopologySpec::paper_tree(defaults::TREE_K, defaults::TREE_DEPTH).expect("valid tree")
}

fn lattice_spec() -> TopologySpec {
    TopologySpec::square_lattice(defaults::LATTICE_SIDE, true).expect("valid lattice")
}

fn alpha_shock_grid(label: &str, topology: TopologySpec, dist: ThresholdDistribution) -> SweepGrid {
    SweepGrid {
        label: label.to_string(),
        axis1: Axis::linspace(AxisParam::Alpha, 0.0, 0.98, defaults::GRID),
        axis2: Axis::linspace(AxisParam::ShockOverCapacity, 0.02, 1.0, defaults::GRID),
        base: PointParams {
            topology,
            dist,
            alpha: 0.5,
            shock: ShockSpec::RelativeToCapacity(0.5),
        },
        replicas: defaults::REPLICAS,
        base_seed: defaults::BASE_SEED,
        variant: FormulaVariant::Consistent,
    }
}

/// Named sweep configurations reproducing the figure families.
pub fn preset(name: &str) -> Result<Preset, ExperimentError> {
    use defaults::*;
    let uniform = ThresholdDistribution::uniform(THETA_BAR, SIGMA).expect("valid");
    let pl = |g: f64| ThresholdDistribution::power_law(g, THETA_MIN).expect("valid");
    Ok(match name {
        "fig2" => Preset {
            name: "fig2",
            description: "critical threshold evolution, uniform(1, 0.5), K=4, phi_star=1",
            grids: Vec::new(),
        },
        "fig3" => Preset {
            name: "fig3",
            description: "X over (alpha, phi_star/Q), uniform(1, 0.5), tree and lattice",
            grids: vec![
                alpha_shock_grid("tree", tree_spec(), uniform),
                alpha_shock_grid("lattice", lattice_spec(), uniform),
            ],
        },
        "fig4" => Preset {
            name: "fig4",
            description: "X over (alpha, phi_star/Q), power-law thresholds, tree",
            grids: vec![
                alpha_shock_grid("gamma=1.5", tree_spec(), pl(1.5)),
                alpha_shock_grid("gamma=3", tree_spec(), pl(3.0)),
            ],
        },
        "fig5" => {
            let grid = |label: &str, topology: TopologySpec| SweepGrid {
                label: label.to_string(),
                axis1: Axis::linspace(AxisParam::Alpha, 0.0, 0.98, GRID),
                axis2: Axis::linspace(AxisParam::Gamma, 1.1, 4.0, GRID),
                base: PointParams {
                    topology,
                    dist: pl(2.0),
                    alpha: 0.5,
                    shock: ShockSpec::RelativeToCapacity(FIG5_SHOCK_OVER_Q),
                },
                replicas: REPLICAS,
                base_seed: BASE_SEED,
                variant: FormulaVariant::Consistent,
            };
            Preset {
                name: "fig5",
                description: "X over (alpha, gamma) at phi_star/Q = 0.2, tree and lattice",
                grids: vec![grid("tree", tree_spec()), grid("lattice", lattice_spec())],
            }
        }
        "fig6" => {
            let topology = TopologySpec::random_regular(FIG6_N, 100).expect("valid");
            let k_over_n = Axis::new(
                AxisParam::KOverN,
                (1..=19).map(|i| i as f64 * 0.05).collect(),
            );
            let grid = |label: &str, dist: ThresholdDistribution, axis: Axis| SweepGrid {
                label: label.to_string(),
                axis1: axis,
                axis2: k_over_n.clone(),
                base: PointParams {
                    topology,
                    dist,
                    alpha: 1.0 - FIG6_ONE_MINUS_ALPHA,
                    shock: ShockSpec::Rie,
                },
                replicas: FIG6_REPLICAS,
                base_seed: BASE_SEED,
                variant: FormulaVariant::Consistent,
            };
            Preset {
                name: "fig6",
                description: "internal events on random regular graphs, N=1000, 1-alpha=0.002",
                grids: vec![
                    grid(
                        "uniform",
                        uniform,
                        Axis::new(AxisParam::Sigma, vec![0.0, 0.3, 0.6, 0.9]),
                    ),
                    grid(
                        "power_law",
                        pl(2.0),
                        Axis::new(AxisParam::Gamma, vec![1.1, 2.0, 3.0, 4.0]),
                    ),
                ],
            }
        }
        other => {
            return Err(ExperimentError::Invalid(format!(
                "unknown preset {other:?} (expected one of {})",
                PRESET_NAMES.join(", ")
            )))
        }
    })
}

/// The `fig2` table.
pub fn fig2_rows() -> Vec<ThresholdRow> {
    let dist = ThresholdDistribution::uniform(fig2::THETA_BAR, fig2::SIGMA).expect("valid");
    threshold_evolution(&dist, fig2::K, fig2::PHI_STAR, &fig2::ALPHAS, fig2::T_MAX)
        .expect("fig2 parameters are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn delta_tree_point() -> PointParams {
        PointParams {
            topology: TopologySpec::paper_tree(4, 5).unwrap(),
            dist: ThresholdDistribution::delta(1.0).unwrap(),
            alpha: 0.5,
            shock: ShockSpec::Absolute(10.0),
        }
    }

    #[test]
    fn homogeneous_tree_is_deterministic() {
        let s = run_ensemble(&delta_tree_point(), 5, 1, Some(1)).unwrap();
        assert_eq!(s.x_mean, 21.0 / 1365.0);
        assert_eq!(s.x_stderr, 0.0);
        assert_eq!(s.frequency_infinite, 0.0);
        assert_eq!(s.t_prime_mean, 3.0);
    }

    #[test]
    fn unstable_tree_fails_completely() {
        let mut p = delta_tree_point();
        p.alpha = 0.8;
        let s = run_ensemble(&p, 3, 1, Some(1)).unwrap();
        assert_eq!(s.x_mean, 1.0);
        assert_eq!(s.frequency_infinite, 1.0);
    }

    #[test]
    fn results_independent_of_workers() {
        let p = PointParams {
            topology: TopologySpec::random_regular(200, 6).unwrap(),
            dist: ThresholdDistribution::uniform(1.0, 0.5).unwrap(),
            alpha: 0.7,
            shock: ShockSpec::Absolute(3.0),
        };
        let a = run_ensemble(&p, 8, 42, Some(1)).unwrap();
        let b = run_ensemble(&p, 8, 42, Some(3)).unwrap();
        assert_eq!(a, b);
        let c = run_ensemble(&p, 8, 43, Some(1)).unwrap();
        assert_ne!(a.results, c.results);
    }

    #[test]
    fn replica_is_reproducible_in_isolation() {
        let p = PointParams {
            topology: TopologySpec::random_regular(100, 4).unwrap(),
            dist: ThresholdDistribution::uniform(1.0, 0.5).unwrap(),
            alpha: 0.6,
            shock: ShockSpec::Rie,
        };
        let all = run_ensemble(&p, 6, 9, Some(1)).unwrap();
        let fifth = run_replica(&p, None, None, 9, 5).unwrap();
        assert_eq!(all.results[5], fifth);
    }

    #[test]
    fn seed_threshold_conditioned_below_shock() {
        let dist = ThresholdDistribution::power_law(1.5, 0.5).unwrap();
        for r in 0..200 {
            let s = replica_thresholds(&dist, 50, 7, Some(0.6), 3, r).unwrap();
            assert!(s.values[7] <= 0.6 && s.values[7] >= 0.5);
        }
        assert!(replica_thresholds(&dist, 50, 7, Some(0.4), 3, 0).is_err());
    }

    #[test]
    fn generation_failure_reports_partial_results() {
        let p = PointParams {
            topology: TopologySpec {
                kind: TopologyKind::RandomRegular,
                k: 3,
                n: 7,
                side: 0,
                depth: 0,
                periodic: false,
            },
            ..delta_tree_point()
        };
        let err = run_ensemble(&p, 2, 0, Some(1)).unwrap_err();
        assert!(matches!(err, ExperimentError::Invalid(_)));
        let e = EnsembleError {
            replica: 1,
            message: "x".into(),
            completed: 1,
            partial: None,
        };
        assert!(e.to_string().contains("1 replicas completed"));
    }

    #[test]
    fn zero_replicas_rejected() {
        assert!(run_ensemble(&delta_tree_point(), 0, 0, None).is_err());
    }

    #[test]
    fn point_axis_application() {
        let p = delta_tree_point();
        assert!(p.with(AxisParam::Gamma, 2.0).is_err());
        let s = p.with(AxisParam::Sigma, 0.3).unwrap();
        assert_eq!(s.dist, ThresholdDistribution::uniform(1.0, 0.3).unwrap());
        assert_eq!(p.with(AxisParam::Sigma, 0.0).unwrap().dist, p.dist);
        let k = p.with(AxisParam::K, 3.0).unwrap();
        assert_eq!(k.topology.n, 364);
        let rr = PointParams {
            topology: TopologySpec::random_regular(1000, 100).unwrap(),
            ..p.clone()
        };
        assert_eq!(rr.with(AxisParam::KOverN, 0.25).unwrap().topology.k, 250);
        assert!(PointParams {
            topology: TopologySpec::square_lattice(8, true).unwrap(),
            ..p
        }
        .with(AxisParam::K, 6.0)
        .is_err());
    }

    #[test]
    fn sweep_and_compare_agree_on_homogeneous_tree() {
        let grid = SweepGrid {
            label: "t".into(),
            axis1: Axis::new(AxisParam::Alpha, vec![0.3, 0.5]),
            axis2: Axis::new(AxisParam::Shock, vec![6.0, 10.0]),
            base: delta_tree_point(),
            replicas: 2,
            base_seed: 5,
            variant: FormulaVariant::Consistent,
        };
        let recs = sweep(&grid, Some(1)).unwrap();
        assert_eq!(recs.len(), 4);
        assert_eq!(recs[3].x_analytic, Some(21.0 / 1365.0));
        let report = compare(&recs);
        assert_eq!(report.max_abs_residual, Some(0.0));
        assert_eq!(report.beyond_three_stderr, 0);
        assert_eq!(report.not_comparable, 0);
    }

    #[test]
    fn compare_flags_missing_values() {
        let mut rec = SweepRecord {
            label: "x".into(),
            axis1: AxisParam::Alpha,
            axis1_value: 0.0,
            axis2: AxisParam::Shock,
            axis2_value: 1.0,
            x_sim_mean: Some(0.5),
            x_sim_stderr: Some(0.01),
            frequency_infinite: Some(0.0),
            x_analytic: Some(0.4),
            t_prime_mean: Some(2.0),
            clamp_count: 0,
            error: None,
        };
        let r = compare(std::slice::from_ref(&rec));
        assert!((r.max_abs_residual.unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(r.beyond_three_stderr, 1);
        rec.x_analytic = None;
        assert_eq!(compare(&[rec]).not_comparable, 1);
    }

    #[test]
    fn sweep_records_invalid_points() {
        let grid = SweepGrid {
            label: "bad".into(),
            axis1: Axis::new(AxisParam::Alpha, vec![0.5]),
            axis2: Axis::new(AxisParam::Gamma, vec![2.0]),
            base: delta_tree_point(),
            replicas: 1,
            base_seed: 0,
            variant: FormulaVariant::Consistent,
        };
        let recs = sweep(&grid, Some(1)).unwrap();
        assert!(recs[0].error.as_deref().unwrap().contains("gamma"));
        let mut out = Vec::new();
        write_sweep_csv(&recs, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with(SWEEP_CSV_HEADER));
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn grid_validation() {
        let mut grid = SweepGrid {
            label: "v".into(),
            axis1: Axis::new(AxisParam::Alpha, vec![0.5]),
            axis2: Axis::new(AxisParam::Shock, vec![2.0]),
            base: delta_tree_point(),
            replicas: 0,
            base_seed: 0,
            variant: FormulaVariant::Consistent,
        };
        assert!(sweep(&grid, Some(1)).is_err());
        grid.replicas = 1;
        grid.axis2.values.push(f64::NAN);
        assert!(grid.validate().is_err());
        grid.axis2 = Axis::new(AxisParam::Alpha, vec![0.1]);
        assert!(grid.validate().is_err());
    }

    #[test]
    fn presets_are_well_formed() {
        for name in PRESET_NAMES {
            let p = preset(name).unwrap();
            for g in &p.grids {
                g.validate().unwrap();
                g.base.topology.validate().unwrap();
            }
        }
        assert!(preset("fig9").is_err());
        let fig6 = preset("fig6").unwrap();
        assert_eq!(fig6.grids[0].base.topology.n, 1000);
        assert!((1.0 - fig6.grids[0].base.alpha - 0.002).abs() < 1e-12);
    }

    #[test]
    fn fig2_stops_as_described() {
        let rows = fig2_rows();
        let f_at = |alpha: f64, t: u32| {
            rows.iter()
                .find(|r| r.alpha == alpha && r.t == t)
                .unwrap()
                .f
        };
        // alpha = 0.2, 0.5: theta_c(1) is at or below the support already.
        assert_eq!(f_at(0.2, 1), 0.0);
        assert_eq!(f_at(0.5, 1), 0.0);
        // alpha = 0.7: three failing steps.
        assert!(f_at(0.7, 3) > 0.0 && f_at(0.7, 4) == 0.0);
        // alpha = 0.8: theta_c grows and the whole support fails.
        assert_eq!(f_at(0.8, 3), 1.0);
        let theta_07: Vec<f64> = rows
            .iter()
            .filter(|r| r.alpha == 0.7)
            .map(|r| r.theta_c)
            .collect();
        assert!(theta_07.windows(2).all(|w| w[1] < w[0]));
    }

    /// Ensemble-level behaviour on reduced dense graphs.
    mod ensembles {
        use super::*;
        use crate::rng::{derive_seed, streams};

        fn dense_point(n: usize, k: usize, alpha: f64, dist: ThresholdDistribution) -> PointParams {
            PointParams {
                topology: TopologySpec::random_regular(n, k).unwrap(),
                dist,
                alpha,
                shock: ShockSpec::Rie,
            }
        }

        fn small_grid() -> SweepGrid {
            SweepGrid {
                label: "small".into(),
                axis1: Axis::new(AxisParam::Alpha, vec![0.5, 0.9]),
                axis2: Axis::new(AxisParam::Sigma, vec![0.2, 0.6]),
                base: dense_point(
                    150,
                    8,
                    0.5,
                    ThresholdDistribution::uniform(1.0, 0.2).unwrap(),
                ),
                replicas: 4,
                base_seed: 99,
                variant: FormulaVariant::Consistent,
            }
        }

        #[test]
        fn sweep_is_deterministic_across_worker_counts() {
            let g = small_grid();
            let a = sweep(&g, Some(1)).unwrap();
            let b = sweep(&g, Some(4)).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.len(), 4);
            assert!(a.iter().all(|r| r.error.is_none()));
        }

        #[test]
        fn single_point_sweep_matches_direct_ensemble() {
            let mut g = small_grid();
            g.axis1.values.truncate(1);
            g.axis2.values.truncate(1);
            let rec = &sweep(&g, Some(2)).unwrap()[0];
            let point = g
                .base
                .with(AxisParam::Alpha, 0.5)
                .unwrap()
                .with(AxisParam::Sigma, 0.2)
                .unwrap();
            let direct =
                run_ensemble(&point, 4, derive_seed(99, streams::GRID_POINT, 0), Some(1)).unwrap();
            assert_eq!(rec.x_sim_mean, Some(direct.x_mean));
            assert_eq!(rec.x_sim_stderr, Some(direct.x_stderr));
            assert_eq!(rec.frequency_infinite, Some(direct.frequency_infinite));
        }

        #[test]
        fn compare_of_nothing_is_empty() {
            let r = compare(&[]);
            assert!(r.rows.is_empty());
            assert_eq!(r.max_abs_residual, None);
            assert_eq!(r.beyond_three_stderr, 0);
        }

        #[test]
        fn homogeneous_step_around_unit_margin() {
            let delta = ThresholdDistribution::delta(1.0).unwrap();
            // K(1-alpha) = 0.8: every replica cascades.
            let s = run_ensemble(&dense_point(1000, 400, 0.998, delta), 3, 5, None).unwrap();
            assert_eq!(s.x_mean, 1.0);
            assert_eq!(s.frequency_infinite, 1.0);
            // K(1-alpha) = 1.2: only the seed fails.
            let s = run_ensemble(&dense_point(1000, 600, 0.998, delta), 3, 5, None).unwrap();
            assert_eq!(s.frequency_infinite, 0.0);
            assert!(s.results.iter().all(|r| r.x == 1.0 / 1000.0));
            let s = run_ensemble(&dense_point(1000, 600, 0.998, delta), 1, 5, None).unwrap();
            assert_eq!(s.x_stderr, 0.0);
        }

        fn frequencies(points: impl Iterator<Item = PointParams>, replicas: usize) -> Vec<f64> {
            points
                .enumerate()
                .map(|(i, p)| {
                    run_ensemble(&p, replicas, 1000 + i as u64, None)
                        .unwrap()
                        .frequency_infinite
                })
                .collect()
        }

        // Reduced Fig. 6 axis: N = 200 and 1 - alpha = 0.01 put the unit margin at K = 100.
        const N: usize = 200;
        const ALPHA: f64 = 0.99;

        #[test]
        fn delta_frequency_steps_down_in_k() {
            let ks = [40, 60, 80, 90, 110, 120, 150, 180];
            let delta = ThresholdDistribution::delta(1.0).unwrap();
            let f = frequencies(ks.iter().map(|&k| dense_point(N, k, ALPHA, delta)), 6);
            assert!(f.windows(2).all(|w| w[1] <= w[0]), "{f:?}");
            for (k, fr) in ks.iter().zip(&f) {
                assert_eq!(*fr, if *k < 100 { 1.0 } else { 0.0 }, "K={k}");
            }
        }

        #[test]
        fn broader_uniform_thresholds_cascade_more_often() {
            let f = frequencies(
                [0.0, 0.5, 0.9].iter().map(|&s| {
                    dense_point(
                        N,
                        120,
                        ALPHA,
                        ThresholdDistribution::uniform(1.0, s).unwrap(),
                    )
                }),
                30,
            );
            assert_eq!(f[0], 0.0);
            assert!(f[2] > f[0], "{f:?}");
            assert!(f[2] + 0.15 >= f[1], "{f:?}");
        }

        #[test]
        fn heavier_power_tails_cascade_more_often() {
            let f = frequencies(
                [2.0, 4.0].iter().map(|&g| {
                    dense_point(
                        N,
                        120,
                        ALPHA,
                        ThresholdDistribution::power_law(g, 1.0).unwrap(),
                    )
                }),
                30,
            );
            assert!(f[0] >= f[1], "{f:?}");
        }
    }
}
