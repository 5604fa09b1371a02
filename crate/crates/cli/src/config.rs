//! Flat `key = value` run configuration.
//!
//! Values come from a config file (or a JSON envelope written by an earlier
//! run), then from command-line flags, which win. Every error names the line
//! or flag it came from.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use cascade_core::experiments::{self, Axis, AxisParam, ShockSpec};
use cascade_core::thresholds::ThresholdDistribution;
use cascade_core::topology::{TopologyKind, TopologySpec};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Simulate,
    Ensemble,
    Sweep,
    Analytic,
    Capacity,
}

impl Subcommand {
    pub fn as_str(self) -> &'static str {
        match self {
            Subcommand::Simulate => "simulate",
            Subcommand::Ensemble => "ensemble",
            Subcommand::Sweep => "sweep",
            Subcommand::Analytic => "analytic",
            Subcommand::Capacity => "capacity",
        }
    }
}

impl FromStr for Subcommand {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "simulate" => Subcommand::Simulate,
            "ensemble" => Subcommand::Ensemble,
            "sweep" => Subcommand::Sweep,
            "analytic" => Subcommand::Analytic,
            "capacity" => Subcommand::Capacity,
            _ => {
                return Err(format!(
                    "unknown subcommand {s:?} (simulate, ensemble, sweep, analytic, capacity)"
                ))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(format!("unknown format {s:?} (csv or json)")),
        }
    }
}

/// Where a value came from, for error messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Flag(&'static str),
    Envelope,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::Flag(name) => write!(f, "flag {name}"),
            Origin::Envelope => f.write_str("JSON envelope"),
        }
    }
}

/// Every accepted key with its default (empty: required or optional).
pub const KEYS: &[(&str, &str, &str)] = &[
    (
        "subcommand",
        "",
        "simulate | ensemble | sweep | analytic | capacity",
    ),
    (
        "topology",
        "",
        "paper_tree | square_lattice | random_regular",
    ),
    (
        "k",
        "4",
        "degree (random_regular) or branching factor (paper_tree)",
    ),
    ("depth", "5", "paper_tree depth"),
    ("side", "32", "square_lattice side length"),
    ("periodic", "true", "square_lattice wraps around"),
    (
        "n",
        "1000",
        "random_regular size; capacity N without a topology",
    ),
    ("dist", "", "delta | uniform | power_law"),
    ("theta_bar", "", "delta/uniform mean threshold"),
    ("sigma", "", "uniform half-width"),
    ("gamma", "", "power_law exponent (> 1)"),
    ("theta_min", "", "power_law lower cutoff"),
    ("alpha", "", "initial load fraction, in [0, 1)"),
    ("shock", "", "phi_star, or `rie` for an internal event"),
    (
        "shock_over_capacity",
        "",
        "phi_star as a fraction of the capacity Q",
    ),
    ("seed_agent", "0", "simulate: shocked agent"),
    (
        "replicas",
        "20",
        "ensemble/sweep size M (presets carry their own)",
    ),
    ("rng_seed", "0", "base seed for all random streams"),
    ("workers", "", "worker threads (default: all cores)"),
    ("output_path", "", "output file (default: stdout)"),
    ("output_format", "csv", "csv | json"),
    (
        "paper_literal",
        "false",
        "use the formulas as originally printed",
    ),
    ("preset", "", "sweep: fig2 | fig3 | fig4 | fig5 | fig6"),
    (
        "grid_points",
        "",
        "sweep presets: resample each continuous axis",
    ),
    (
        "axis1",
        "",
        "sweep axis: alpha | shock_over_capacity | shock | gamma | sigma | k | k_over_n",
    ),
    ("axis1_values", "", "comma list, or lin:LO:HI:COUNT"),
    ("axis2", "", "second sweep axis"),
    ("axis2_values", "", "comma list, or lin:LO:HI:COUNT"),
];

pub fn help_text() -> String {
    let mut s = String::from("Config keys (flat `key = value`, `#` comments):\n");
    for (key, default, about) in KEYS {
        if default.is_empty() {
            s.push_str(&format!("  {key:<20} {about}\n"));
        } else {
            s.push_str(&format!("  {key:<20} {about} [default: {default}]\n"));
        }
    }
    s
}

/// Raw key-value pairs with their origin.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (String, Origin)>,
}

impl RawConfig {
    /// Parse `key = value` lines. Unknown keys and duplicates are errors.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut raw = RawConfig::default();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| {
                CliError::Validation(format!(
                    "line {lineno}: expected `key = value`, got {content:?}"
                ))
            })?;
            let key = key.trim();
            if raw.entries.contains_key(key) {
                return Err(CliError::Validation(format!(
                    "line {lineno}: duplicate key {key:?}"
                )));
            }
            raw.insert(key, value.trim(), Origin::Line(lineno))?;
        }
        Ok(raw)
    }

    /// Config embedded in a JSON envelope under `metadata.config`.
    pub fn from_envelope(text: &str) -> Result<Self, CliError> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| CliError::Validation(format!("JSON config: {e}")))?;
        let map = value
            .pointer("/metadata/config")
            .and_then(|v| v.as_object())
            .ok_or_else(|| {
                CliError::Validation("JSON config has no metadata.config object".into())
            })?;
        let mut raw = RawConfig::default();
        for (k, v) in map {
            let s = v
                .as_str()
                .ok_or_else(|| CliError::Validation(format!("JSON config: {k} is not a string")))?;
            raw.insert(k, s, Origin::Envelope)?;
        }
        Ok(raw)
    }

    /// File contents, detecting JSON envelopes by their leading brace.
    pub fn from_file_text(text: &str) -> Result<Self, CliError> {
        if text.trim_start().starts_with('{') {
            Self::from_envelope(text)
        } else {
            Self::parse(text)
        }
    }

    pub fn insert(&mut self, key: &str, value: &str, origin: Origin) -> Result<(), CliError> {
        if !KEYS.iter().any(|(k, _, _)| *k == key) {
            return Err(CliError::Validation(format!(
                "{origin}: unknown key {key:?}"
            )));
        }
        self.entries
            .insert(key.to_string(), (value.to_string(), origin));
        Ok(())
    }

    /// `--set key=value`.
    pub fn set_flag(&mut self, assignment: &str) -> Result<(), CliError> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| {
            CliError::Validation(format!(
                "flag --set: expected key=value, got {assignment:?}"
            ))
        })?;
        self.insert(k.trim(), v.trim(), Origin::Flag("--set"))
    }

    pub fn remove(&mut self, key: &str) {
        self.entries.remove(key);
    }

    fn get(&self, key: &str) -> Option<(&str, &Origin)> {
        self.entries.get(key).map(|(v, o)| (v.as_str(), o))
    }

    fn parsed<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<T>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some((v, origin)) => v.parse().map(Some).map_err(|_| {
                CliError::Validation(format!("{origin}: {key} = {v:?} is not {what}"))
            }),
        }
    }

    fn required<T: FromStr>(&self, key: &str, what: &str, why: &str) -> Result<T, CliError> {
        self.parsed(key, what)?
            .ok_or_else(|| CliError::Validation(format!("missing key {key:?} ({why})")))
    }

    fn origin(&self, key: &str) -> String {
        self.get(key)
            .map(|(_, o)| o.to_string())
            .unwrap_or_else(|| "default".into())
    }

    fn invalid(&self, key: &str, msg: impl fmt::Display) -> CliError {
        CliError::Validation(format!("{}: {key}: {msg}", self.origin(key)))
    }
}

/// A fully validated run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    pub topology: Option<TopologySpec>,
    /// System size: the topology's, or the `n` key when there is none.
    pub n: usize,
    pub dist: Option<ThresholdDistribution>,
    pub alpha: Option<f64>,
    pub shock: Option<ShockSpec>,
    pub seed_agent: usize,
    /// Unset: 20, or the preset's own ensemble size.
    pub replicas: Option<usize>,
    pub rng_seed: u64,
    pub workers: Option<usize>,
    pub output_path: Option<PathBuf>,
    pub output_format: OutputFormat,
    pub paper_literal: bool,
    pub preset: Option<String>,
    pub grid_points: Option<usize>,
    pub axes: Option<(Axis, Axis)>,
}

fn parse_values(raw: &RawConfig, key: &str) -> Result<Vec<f64>, CliError> {
    let text: String = raw.required(key, "a value list", "needed by a custom sweep")?;
    let values: Vec<f64> = if let Some(spec) = text.strip_prefix("lin:") {
        let parts: Vec<&str> = spec.split(':').collect();
        let [lo, hi, count] = parts.as_slice() else {
            return Err(raw.invalid(key, "expected lin:LO:HI:COUNT"));
        };
        let lo: f64 = lo.parse().map_err(|_| raw.invalid(key, "bad LO"))?;
        let hi: f64 = hi.parse().map_err(|_| raw.invalid(key, "bad HI"))?;
        let count: usize = count.parse().map_err(|_| raw.invalid(key, "bad COUNT"))?;
        Axis::linspace(AxisParam::Alpha, lo, hi, count).values
    } else {
        text.split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| {
                raw.invalid(
                    key,
                    format!("{text:?} is not a comma-separated number list"),
                )
            })?
    };
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(raw.invalid(key, "values must be finite and non-empty"));
    }
    Ok(values)
}

fn format_values(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, CliError> {
        let subcommand: Subcommand = raw
            .get("subcommand")
            .ok_or_else(|| CliError::Validation("missing subcommand".into()))?
            .0
            .parse()
            .map_err(|e: String| raw.invalid("subcommand", e))?;
        let preset: Option<String> = raw.parsed("preset", "a preset name")?;
        if let Some(p) = &preset {
            if subcommand != Subcommand::Sweep {
                return Err(raw.invalid("preset", "presets only apply to `sweep`"));
            }
            experiments::preset(p).map_err(|e| raw.invalid("preset", e))?;
        }

        let axes = if subcommand == Subcommand::Sweep && preset.is_none() {
            let a1: String = raw.required("axis1", "an axis name", "needed by a custom sweep")?;
            let a2: String = raw.required("axis2", "an axis name", "needed by a custom sweep")?;
            let p1: AxisParam = a1.parse().map_err(|e| raw.invalid("axis1", e))?;
            let p2: AxisParam = a2.parse().map_err(|e| raw.invalid("axis2", e))?;
            if p1 == p2 {
                return Err(raw.invalid("axis2", "must differ from axis1"));
            }
            Some((
                Axis::new(p1, parse_values(raw, "axis1_values")?),
                Axis::new(p2, parse_values(raw, "axis2_values")?),
            ))
        } else {
            None
        };
        let on_axis = |p: &[AxisParam]| {
            axes.as_ref()
                .is_some_and(|(a, b)| p.contains(&a.param) || p.contains(&b.param))
        };

        let needs_model = preset.is_none();
        let needs_topology = needs_model && subcommand != Subcommand::Capacity;

        let topology = if needs_topology || raw.get("topology").is_some() {
            Some(parse_topology(raw)?)
        } else {
            None
        };
        let dist = if needs_model || raw.get("dist").is_some() {
            Some(parse_dist(raw)?)
        } else {
            None
        };

        let alpha: Option<f64> = raw.parsed("alpha", "a number")?;
        if let Some(a) = alpha {
            if !(0.0..1.0).contains(&a) {
                return Err(raw.invalid("alpha", format!("{a} outside [0, 1)")));
            }
        } else if needs_model && !on_axis(&[AxisParam::Alpha]) {
            return Err(CliError::Validation(
                "missing key \"alpha\" (initial load fraction)".into(),
            ));
        }

        let shock = parse_shock(raw)?;
        let shock_needed = needs_model
            && matches!(
                subcommand,
                Subcommand::Simulate
                    | Subcommand::Ensemble
                    | Subcommand::Analytic
                    | Subcommand::Sweep
            )
            && !on_axis(&[AxisParam::Shock, AxisParam::ShockOverCapacity]);
        if shock.is_none() && shock_needed {
            return Err(CliError::Validation(
                "missing key \"shock\" (a number, `rie`, or shock_over_capacity)".into(),
            ));
        }
        if subcommand == Subcommand::Capacity {
            if dist.is_none() {
                return Err(CliError::Validation("missing key \"dist\"".into()));
            }
            if alpha.is_none() {
                return Err(CliError::Validation("missing key \"alpha\"".into()));
            }
        }

        let replicas: Option<usize> = raw.parsed("replicas", "a whole number")?;
        if replicas == Some(0) {
            return Err(raw.invalid("replicas", "must be >= 1"));
        }
        let workers: Option<usize> = raw.parsed("workers", "a whole number")?;
        if workers == Some(0) {
            return Err(raw.invalid("workers", "must be >= 1"));
        }
        let seed_agent: usize = raw.parsed("seed_agent", "a whole number")?.unwrap_or(0);
        if let Some(t) = &topology {
            if seed_agent >= t.n {
                return Err(raw.invalid("seed_agent", format!("{seed_agent} >= N = {}", t.n)));
            }
        }
        let grid_points: Option<usize> = raw.parsed("grid_points", "a whole number")?;
        if grid_points.is_some_and(|g| g < 2) {
            return Err(raw.invalid("grid_points", "must be >= 2"));
        }

        let n = match &topology {
            Some(t) => t.n,
            None => raw.parsed("n", "a whole number")?.unwrap_or(1000),
        };
        if n == 0 {
            return Err(raw.invalid("n", "must be >= 1"));
        }

        Ok(RunConfig {
            subcommand,
            topology,
            n,
            dist,
            alpha,
            shock,
            seed_agent,
            replicas,
            rng_seed: raw
                .parsed("rng_seed", "a non-negative integer")?
                .unwrap_or(0),
            workers,
            output_path: raw.parsed("output_path", "a path")?,
            output_format: match raw.get("output_format") {
                None => OutputFormat::Csv,
                Some((v, _)) => v
                    .parse()
                    .map_err(|e: String| raw.invalid("output_format", e))?,
            },
            paper_literal: raw
                .parsed("paper_literal", "true or false")?
                .unwrap_or(false),
            preset,
            grid_points,
            axes,
        })
    }

    /// Canonical key-value form; [`RunConfig::from_raw`] on these pairs
    /// reproduces `self`.
    pub fn to_pairs(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("subcommand", self.subcommand.as_str().into());
        if let Some(t) = &self.topology {
            put("topology", t.kind.as_str().into());
            match t.kind {
                TopologyKind::PaperTree => {
                    put("k", t.k.to_string());
                    put("depth", t.depth.to_string());
                }
                TopologyKind::SquareLattice => {
                    put("side", t.side.to_string());
                    put("periodic", t.periodic.to_string());
                }
                TopologyKind::RandomRegular => {
                    put("k", t.k.to_string());
                    put("n", t.n.to_string());
                }
            }
        }
        if self.topology.is_none() {
            put("n", self.n.to_string());
        }
        if let Some(d) = &self.dist {
            put("dist", d.kind_name().into());
            match *d {
                ThresholdDistribution::Delta { theta_bar } => {
                    put("theta_bar", theta_bar.to_string())
                }
                ThresholdDistribution::Uniform { theta_bar, sigma } => {
                    put("theta_bar", theta_bar.to_string());
                    put("sigma", sigma.to_string());
                }
                ThresholdDistribution::PowerLaw { gamma, theta_min } => {
                    put("gamma", gamma.to_string());
                    put("theta_min", theta_min.to_string());
                }
            }
        }
        if let Some(a) = self.alpha {
            put("alpha", a.to_string());
        }
        match self.shock {
            Some(ShockSpec::Absolute(v)) => put("shock", v.to_string()),
            Some(ShockSpec::RelativeToCapacity(v)) => put("shock_over_capacity", v.to_string()),
            Some(ShockSpec::Rie) => put("shock", "rie".into()),
            None => {}
        }
        put("seed_agent", self.seed_agent.to_string());
        if let Some(r) = self.replicas {
            put("replicas", r.to_string());
        }
        put("rng_seed", self.rng_seed.to_string());
        if let Some(w) = self.workers {
            put("workers", w.to_string());
        }
        if let Some(p) = &self.output_path {
            put("output_path", p.display().to_string());
        }
        put("output_format", self.output_format.as_str().into());
        put("paper_literal", self.paper_literal.to_string());
        if let Some(p) = &self.preset {
            put("preset", p.clone());
        }
        if let Some(g) = self.grid_points {
            put("grid_points", g.to_string());
        }
        if let Some((a1, a2)) = &self.axes {
            put("axis1", a1.param.as_str().into());
            put("axis1_values", format_values(&a1.values));
            put("axis2", a2.param.as_str().into());
            put("axis2_values", format_values(&a2.values));
        }
        m
    }

    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self, CliError> {
        let mut raw = RawConfig::default();
        for (k, v) in pairs {
            raw.insert(k, v, Origin::Envelope)?;
        }
        Self::from_raw(&raw)
    }
}

fn parse_topology(raw: &RawConfig) -> Result<TopologySpec, CliError> {
    let kind: String = raw.required("topology", "a topology name", "which network to build")?;
    let kind: TopologyKind = kind.parse().map_err(|e| raw.invalid("topology", e))?;
    let spec = match kind {
        TopologyKind::PaperTree => {
            let k = raw.parsed("k", "a whole number")?.unwrap_or(4);
            let depth = raw.parsed("depth", "a whole number")?.unwrap_or(5);
            TopologySpec::paper_tree(k, depth)
        }
        TopologyKind::SquareLattice => {
            if let Some(k) = raw.parsed::<usize>("k", "a whole number")? {
                if k != 4 {
                    return Err(raw.invalid("k", "square_lattice always has K = 4"));
                }
            }
            let side = raw.parsed("side", "a whole number")?.unwrap_or(32);
            let periodic = raw.parsed("periodic", "true or false")?.unwrap_or(true);
            TopologySpec::square_lattice(side, periodic)
        }
        TopologyKind::RandomRegular => {
            let k = raw.parsed("k", "a whole number")?.unwrap_or(4);
            let n = raw.parsed("n", "a whole number")?.unwrap_or(1000);
            TopologySpec::random_regular(n, k)
        }
    };
    spec.map_err(|e| raw.invalid("topology", e))
}

fn parse_dist(raw: &RawConfig) -> Result<ThresholdDistribution, CliError> {
    let name: String = raw.required("dist", "a distribution name", "threshold distribution")?;
    let num = |key: &str| raw.required::<f64>(key, "a number", &format!("dist = {name} needs it"));
    let made = match name.as_str() {
        "delta" => ThresholdDistribution::delta(num("theta_bar")?),
        "uniform" => ThresholdDistribution::uniform(num("theta_bar")?, num("sigma")?),
        "power_law" => ThresholdDistribution::power_law(num("gamma")?, num("theta_min")?),
        other => {
            return Err(raw.invalid(
                "dist",
                format!("unknown distribution {other:?} (delta, uniform, power_law)"),
            ))
        }
    };
    made.map_err(|e| raw.invalid("dist", e))
}

fn parse_shock(raw: &RawConfig) -> Result<Option<ShockSpec>, CliError> {
    let absolute = raw.get("shock");
    let relative: Option<f64> = raw.parsed("shock_over_capacity", "a number")?;
    match (absolute, relative) {
        (Some(_), Some(_)) => Err(raw.invalid(
            "shock_over_capacity",
            "give either shock or shock_over_capacity, not both",
        )),
        (Some(("rie", _)), None) => Ok(Some(ShockSpec::Rie)),
        (Some((v, _)), None) => {
            let phi: f64 = v.parse().map_err(|_| {
                raw.invalid("shock", format!("{v:?} is neither a number nor `rie`"))
            })?;
            if !(phi > 0.0 && phi.is_finite()) {
                return Err(raw.invalid("shock", "must be positive"));
            }
            Ok(Some(ShockSpec::Absolute(phi)))
        }
        (None, Some(r)) => {
            if !(r > 0.0 && r.is_finite()) {
                return Err(raw.invalid("shock_over_capacity", "must be positive"));
            }
            Ok(Some(ShockSpec::RelativeToCapacity(r)))
        }
        (None, None) => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, CliError> {
        RunConfig::from_raw(&RawConfig::parse(text)?)
    }

    const MINIMAL: &str = "subcommand = simulate\ntopology = paper_tree\ndist = delta\ntheta_bar = 1\nalpha = 0.5\nshock = 10\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.rng_seed, 0);
        assert_eq!(c.output_format, OutputFormat::Csv);
        assert_eq!(c.topology.unwrap().n, 1365);
        assert_eq!(c.shock, Some(ShockSpec::Absolute(10.0)));
    }

    #[test]
    fn alpha_out_of_range_names_the_line() {
        let text = MINIMAL.replace("alpha = 0.5", "alpha = 1.5");
        let err = parse(&text).unwrap_err().to_string();
        assert!(err.contains("line 5") && err.contains("alpha"), "{err}");
    }

    #[test]
    fn unknown_key_and_bad_syntax() {
        let err = parse("subcommand = simulate\nbogus = 1\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 2") && err.contains("bogus"), "{err}");
        let err = parse("subcommand simulate\n").unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
        let err = parse(&format!("{MINIMAL}alpha = 0.1\n"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("duplicate"), "{err}");
    }

    #[test]
    fn type_mismatch() {
        let err = parse(&MINIMAL.replace("shock = 10", "shock = lots"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 6") && err.contains("shock"), "{err}");
    }

    #[test]
    fn comments_and_blank_lines() {
        let text = format!(
            "# a run\n\n{}",
            MINIMAL.replace("alpha = 0.5", "alpha = 0.5 # load")
        );
        assert_eq!(parse(&text).unwrap().alpha, Some(0.5));
    }

    #[test]
    fn missing_distribution_parameter() {
        let err = parse(&MINIMAL.replace("dist = delta", "dist = uniform"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("sigma"), "{err}");
    }

    #[test]
    fn capacity_needs_no_topology_or_shock() {
        let c = parse(
            "subcommand = capacity\ndist = power_law\ngamma = 1.5\ntheta_min = 0.5\nalpha = 0\n",
        )
        .unwrap();
        assert!(c.topology.is_none());
    }

    #[test]
    fn presets_only_for_sweep() {
        let c = parse("subcommand = sweep\npreset = fig6\n").unwrap();
        assert_eq!(c.preset.as_deref(), Some("fig6"));
        assert!(parse(&format!("{MINIMAL}preset = fig3\n")).is_err());
        assert!(parse("subcommand = sweep\npreset = fig9\n").is_err());
    }

    #[test]
    fn custom_sweep_axes() {
        let text = "subcommand = sweep\ntopology = paper_tree\ndist = delta\ntheta_bar = 1\nshock = 10\n\
                    axis1 = alpha\naxis1_values = lin:0:0.5:3\naxis2 = shock\naxis2_values = 2, 5\n";
        let c = parse(text).unwrap();
        let (a1, a2) = c.axes.clone().unwrap();
        assert_eq!(a1.values, vec![0.0, 0.25, 0.5]);
        assert_eq!(a2.values, vec![2.0, 5.0]);
        assert!(parse(&text.replace("axis2 = shock", "axis2 = alpha")).is_err());
    }

    #[test]
    fn pairs_round_trip() {
        let texts = [
            MINIMAL.to_string(),
            "subcommand = ensemble\ntopology = random_regular\nn = 100\nk = 6\ndist = power_law\n\
             gamma = 2.5\ntheta_min = 0.5\nalpha = 0.9\nshock = rie\nreplicas = 7\nrng_seed = 99\n\
             output_format = json\nworkers = 2\n"
                .to_string(),
            "subcommand = sweep\npreset = fig3\ngrid_points = 3\nreplicas = 2\n".to_string(),
            "subcommand = analytic\ntopology = square_lattice\nside = 9\nperiodic = false\n\
             dist = uniform\ntheta_bar = 1\nsigma = 0.5\nalpha = 0.4\nshock_over_capacity = 0.3\n\
             paper_literal = true\n"
                .to_string(),
        ];
        for t in texts {
            let c = parse(&t).unwrap();
            assert_eq!(RunConfig::from_pairs(&c.to_pairs()).unwrap(), c);
        }
    }

    #[test]
    fn help_lists_every_key() {
        let h = help_text();
        for (k, _, _) in KEYS {
            assert!(h.contains(k));
        }
    }
}
