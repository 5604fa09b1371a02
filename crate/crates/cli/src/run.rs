//! Subcommand dispatch.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand as ClapSubcommand};
use serde_json::{json, Value};

use cascade_core::analytic::{self, FormulaVariant, ModelParams};
use cascade_core::engine::{self, CascadeConfig, Shock};
use cascade_core::experiments::{
    self, compare, run_ensemble, Axis, ExperimentError, PointParams, ShockSpec, SweepGrid,
};
use cascade_core::rng::{derive_seed, streams};
use cascade_core::ThresholdDistribution;

use crate::config::{help_text, Origin, OutputFormat, RawConfig, RunConfig, Subcommand};
use crate::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "cascade",
    version,
    about = "Failure cascades with threshold load redistribution on regular networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(ClapSubcommand, Debug)]
enum Command {
    /// Run one cascade and write its trace.
    Simulate(Common),
    /// Run M replicas at one parameter point.
    Ensemble(Common),
    /// Evaluate a two-axis grid (custom axes or a figure preset).
    Sweep(Common),
    /// Closed-form prediction table.
    Analytic(Common),
    /// Network capacity Q.
    Capacity(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Flat `key = value` file, or a JSON envelope from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed for every random stream (key rng_seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Output file, written atomically (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["csv", "json"])]
    format: Option<String>,
    /// Cap on parallel worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// Figure preset for `sweep`: fig2 .. fig6.
    #[arg(long)]
    preset: Option<String>,
    /// Use the formulas exactly as originally printed.
    #[arg(long)]
    paper_literal: bool,
    /// Override any config key.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

/// Parse arguments, run, and map the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let help = help_text();
    let cmd = Cli::command().mut_subcommands(|sub| sub.after_help(help.clone()));
    let matches = match cmd.try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return 1;
        }
    };
    match build_config(cli).and_then(|cfg| dispatch(&cfg)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn build_config(cli: Cli) -> Result<RunConfig, CliError> {
    let (sub, common) = match cli.command {
        Command::Simulate(c) => (Subcommand::Simulate, c),
        Command::Ensemble(c) => (Subcommand::Ensemble, c),
        Command::Sweep(c) => (Subcommand::Sweep, c),
        Command::Analytic(c) => (Subcommand::Analytic, c),
        Command::Capacity(c) => (Subcommand::Capacity, c),
    };
    let mut raw = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            RawConfig::from_file_text(&text)?
        }
        None => RawConfig::default(),
    };
    raw.insert("subcommand", sub.as_str(), Origin::Flag("subcommand"))?;
    if let Some(s) = common.seed {
        raw.insert("rng_seed", &s.to_string(), Origin::Flag("--seed"))?;
    }
    if let Some(p) = &common.out {
        raw.insert(
            "output_path",
            &p.display().to_string(),
            Origin::Flag("--out"),
        )?;
    }
    if let Some(f) = &common.format {
        raw.insert("output_format", f, Origin::Flag("--format"))?;
    }
    if let Some(w) = common.workers {
        raw.insert("workers", &w.to_string(), Origin::Flag("--workers"))?;
    }
    if let Some(p) = &common.preset {
        raw.insert("preset", p, Origin::Flag("--preset"))?;
    }
    if common.paper_literal {
        raw.insert("paper_literal", "true", Origin::Flag("--paper-literal"))?;
    }
    for s in &common.set {
        raw.set_flag(s)?;
    }
    RunConfig::from_raw(&raw)
}

fn variant(cfg: &RunConfig) -> FormulaVariant {
    if cfg.paper_literal {
        FormulaVariant::PaperLiteral
    } else {
        FormulaVariant::Consistent
    }
}

fn envelope(cfg: &RunConfig, extra: Value, result: Value) -> Value {
    let mut metadata = json!({
        "tool": "cascade",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": cfg.subcommand.as_str(),
        "config": cfg.to_pairs(),
        "formula_variant": match variant(cfg) {
            FormulaVariant::Consistent => "consistent",
            FormulaVariant::PaperLiteral => "paper_literal",
        },
        "rng_scheme": "ChaCha8 per (rng_seed, stream, index) via splitmix64; \
                       streams network=1 thresholds=2 seed_agent=3 grid_point=4",
    });
    if let (Value::Object(m), Value::Object(e)) = (&mut metadata, extra) {
        m.extend(e);
    }
    json!({ "metadata": metadata, "result": result })
}

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("plain data serializes")
}

/// Write to `path` through a temporary file in the same directory, so an
/// interrupted run never leaves a truncated file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn emit(cfg: &RunConfig, bytes: Vec<u8>) -> Result<(), CliError> {
    match &cfg.output_path {
        Some(path) => {
            write_atomic(path, &bytes)?;
            eprintln!("wrote {}", path.display());
            Ok(())
        }
        None => std::io::stdout()
            .write_all(&bytes)
            .map_err(|e| CliError::Io(format!("stdout: {e}"))),
    }
}

fn emit_json(cfg: &RunConfig, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
    text.push('\n');
    emit(cfg, text.into_bytes())
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

fn experiment_error(e: ExperimentError) -> CliError {
    match e {
        ExperimentError::Invalid(m) => CliError::Validation(m),
        other => CliError::Runtime(other.to_string()),
    }
}

pub fn dispatch(cfg: &RunConfig) -> Result<(), CliError> {
    match cfg.subcommand {
        Subcommand::Simulate => simulate(cfg),
        Subcommand::Ensemble => ensemble(cfg),
        Subcommand::Sweep => sweep(cfg),
        Subcommand::Analytic => analytic_table(cfg),
        Subcommand::Capacity => capacity(cfg),
    }
}

fn model_point(cfg: &RunConfig) -> PointParams {
    PointParams {
        topology: cfg.topology.expect("validated"),
        dist: cfg.dist.expect("validated"),
        alpha: cfg.alpha.unwrap_or(0.0),
        shock: cfg.shock.unwrap_or(ShockSpec::RelativeToCapacity(1.0)),
    }
}

fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let point = model_point(cfg);
    let network = point
        .topology
        .build(
            derive_seed(cfg.rng_seed, streams::NETWORK, 0),
            cfg.seed_agent,
        )
        .map_err(runtime)?;
    let thresholds = point.dist.sample(
        network.n(),
        derive_seed(cfg.rng_seed, streams::THRESHOLDS, 0),
    );
    let shock = match point
        .shock
        .phi_star(&point.dist, network.n(), point.alpha)
        .map_err(experiment_error)?
    {
        Some(phi) => Shock::Explicit(phi),
        None => Shock::SeedThreshold,
    };
    let trace = engine::run(
        &network,
        &thresholds,
        &CascadeConfig::new(point.alpha, shock),
    )
    .map_err(runtime)?;
    eprintln!(
        "simulate: N={} stop={} at t={} X={}",
        network.n(),
        trace.stop_reason,
        trace.stop_time,
        trace.x_final()
    );
    match cfg.output_format {
        OutputFormat::Csv => {
            let mut out = Vec::new();
            trace
                .write_csv(&mut out)
                .map_err(|e| CliError::Io(e.to_string()))?;
            emit(cfg, out)
        }
        OutputFormat::Json => emit_json(cfg, &envelope(cfg, json!({}), to_json(&trace))),
    }
}

fn ensemble(cfg: &RunConfig) -> Result<(), CliError> {
    let point = model_point(cfg);
    let replicas = cfg.replicas.unwrap_or(20);
    eprintln!("ensemble: {replicas} replicas on N={}", point.topology.n);
    let summary = match run_ensemble(&point, replicas, cfg.rng_seed, cfg.workers) {
        Ok(s) => s,
        Err(ExperimentError::Ensemble(e)) => {
            if let Some(p) = &e.partial {
                eprintln!(
                    "partial results over {} replicas: X_mean={} frequency_infinite={}",
                    p.replicas, p.x_mean, p.frequency_infinite
                );
            }
            return Err(CliError::Runtime(e.to_string()));
        }
        Err(e) => return Err(experiment_error(e)),
    };
    match cfg.output_format {
        OutputFormat::Csv => {
            let mut out = String::from("replica,X,total,stop_time\n");
            for (i, r) in summary.results.iter().enumerate() {
                let _ = writeln!(out, "{i},{},{},{}", r.x, r.total, r.stop_time);
            }
            let _ = writeln!(
                out,
                "# X_mean={},X_stderr={},frequency_infinite={},t_prime_mean={},replicas={}",
                summary.x_mean,
                summary.x_stderr,
                summary.frequency_infinite,
                summary.t_prime_mean,
                summary.replicas
            );
            emit(cfg, out.into_bytes())
        }
        OutputFormat::Json => emit_json(cfg, &envelope(cfg, json!({}), to_json(&summary))),
    }
}

fn analytic_table(cfg: &RunConfig) -> Result<(), CliError> {
    let point = model_point(cfg);
    let network = point
        .topology
        .build(derive_seed(cfg.rng_seed, streams::NETWORK, 0), 0)
        .map_err(runtime)?;
    let k = network.degree();
    let phi_star = match point
        .shock
        .phi_star(&point.dist, network.n(), point.alpha)
        .map_err(experiment_error)?
    {
        Some(phi) => phi,
        // Internal event at the critical load, where f(1) = 1/K.
        None => analytic::rie_critical_load(&point.dist, k, point.alpha),
    };
    let params = ModelParams::from_network(&network, point.alpha, phi_star, point.dist)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let regime = point.shock.regime();
    let predict = |v| analytic::predict(&params, regime, v).map_err(runtime);
    let p = predict(variant(cfg))?;
    let consistent = predict(FormulaVariant::Consistent)?.x_final;
    let literal = predict(FormulaVariant::PaperLiteral)?.x_final;
    let mean_x = match point.shock {
        ShockSpec::Rie => Some(analytic::mean_x(&point.dist, k, point.alpha, variant(cfg))),
        _ => None,
    };
    let meta = json!({
        "phi_star": phi_star,
        "x_final_consistent": consistent,
        "x_final_literal": literal,
        "literal_differs": consistent != literal,
        "mean_x": mean_x,
    });
    match cfg.output_format {
        OutputFormat::Csv => {
            let mut out = String::from("t,K_t,theta_c,f_t,X_t\n");
            for t in 0..p.f_series.len() {
                let _ = writeln!(
                    out,
                    "{t},{},{},{},{}",
                    network.shell_size(t),
                    p.theta_c_series[t],
                    p.f_series[t],
                    p.x_series[t]
                );
            }
            let _ = write!(
                out,
                "# regime={},phi_star={phi_star},t_star={},t_circ={},t_prime={},X_final={},\
                 X_final_consistent={consistent},X_final_literal={literal},literal_differs={},\
                 clamp_count={}",
                p.regime,
                p.t_star,
                p.t_circ,
                p.t_prime,
                p.x_final,
                consistent != literal,
                p.clamp_count
            );
            if let Some(m) = mean_x {
                let _ = write!(out, ",mean_X={m}");
            }
            out.push('\n');
            emit(cfg, out.into_bytes())
        }
        OutputFormat::Json => emit_json(cfg, &envelope(cfg, meta, to_json(&p))),
    }
}

fn capacity(cfg: &RunConfig) -> Result<(), CliError> {
    let dist = cfg.dist.expect("validated");
    let alpha = cfg.alpha.expect("validated");
    let q = dist
        .network_capacity(cfg.n, alpha)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    // For gamma <= 2 the closed form grows with N, while the prose claims
    // parity with a homogeneous system of mean 2 theta_min; show both.
    let reference = match dist {
        ThresholdDistribution::PowerLaw { gamma, theta_min } if gamma <= 2.0 => {
            Some(cfg.n as f64 * (1.0 - alpha) * 2.0 * theta_min)
        }
        _ => None,
    };
    match cfg.output_format {
        OutputFormat::Csv => {
            let mut out = format!("N,alpha,dist,Q\n{},{alpha},\"{dist}\",{q}\n", cfg.n);
            if let Some(r) = reference {
                let _ = writeln!(out, "# Q_homogeneous_2theta_min={r}");
            }
            emit(cfg, out.into_bytes())
        }
        OutputFormat::Json => emit_json(
            cfg,
            &envelope(
                cfg,
                json!({}),
                json!({ "n": cfg.n, "alpha": alpha, "q": q, "q_homogeneous_2theta_min": reference }),
            ),
        ),
    }
}

/// Axes with at least this many values are treated as continuous and
/// resampled by `grid_points`.
const CONTINUOUS_AXIS: usize = 5;

fn resample(axis: &mut Axis, points: usize) {
    if axis.values.len() >= CONTINUOUS_AXIS {
        let (lo, hi) = (axis.values[0], *axis.values.last().expect("non-empty"));
        *axis = Axis::linspace(axis.param, lo, hi, points);
    }
}

fn sweep_grids(cfg: &RunConfig) -> Result<Vec<SweepGrid>, CliError> {
    let mut grids = match &cfg.preset {
        Some(name) => experiments::preset(name).map_err(experiment_error)?.grids,
        None => {
            let (axis1, axis2) = cfg.axes.clone().expect("validated");
            vec![SweepGrid {
                label: "custom".into(),
                axis1,
                axis2,
                base: model_point(cfg),
                replicas: cfg.replicas.unwrap_or(20),
                base_seed: cfg.rng_seed,
                variant: variant(cfg),
            }]
        }
    };
    for g in &mut grids {
        if let Some(r) = cfg.replicas {
            g.replicas = r;
        }
        g.base_seed = cfg.rng_seed;
        g.variant = variant(cfg);
        if let Some(points) = cfg.grid_points {
            resample(&mut g.axis1, points);
            resample(&mut g.axis2, points);
        }
    }
    Ok(grids)
}

fn sweep(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.preset.as_deref() == Some("fig2") {
        let rows = experiments::fig2_rows();
        return match cfg.output_format {
            OutputFormat::Csv => {
                let mut out = Vec::new();
                experiments::write_threshold_csv(&rows, &mut out)
                    .map_err(|e| CliError::Io(e.to_string()))?;
                emit(cfg, out)
            }
            OutputFormat::Json => emit_json(cfg, &envelope(cfg, json!({}), to_json(&rows))),
        };
    }
    let grids = sweep_grids(cfg)?;
    let mut records = Vec::new();
    for g in &grids {
        eprintln!(
            "sweep {}: {} x {} points, {} replicas each",
            g.label,
            g.axis1.values.len(),
            g.axis2.values.len(),
            g.replicas
        );
        records.extend(experiments::sweep(g, cfg.workers).map_err(experiment_error)?);
    }
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!("sweep: {failed} points reported errors (see the error column)");
    }
    let report = compare(&records);
    match cfg.output_format {
        OutputFormat::Csv => {
            let mut out = Vec::new();
            experiments::write_sweep_csv(&records, &mut out)
                .map_err(|e| CliError::Io(e.to_string()))?;
            for g in &grids {
                let _ = writeln!(
                    out,
                    "# grid={} axes={}x{} ({}x{}) replicas={} base_seed={}",
                    g.label,
                    g.axis1.param,
                    g.axis2.param,
                    g.axis1.values.len(),
                    g.axis2.values.len(),
                    g.replicas,
                    g.base_seed
                );
            }
            emit(cfg, out)
        }
        OutputFormat::Json => emit_json(
            cfg,
            &envelope(
                cfg,
                json!({ "grids": to_json(&grids), "residuals": to_json(&report) }),
                to_json(&records),
            ),
        ),
    }
}
