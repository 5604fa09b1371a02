//! Synchronous discrete-time cascade dynamics.
//!
//! At `t = 0` every agent carries `alpha * theta_r` except the seed, which
//! carries the shock `phi_star >= theta_seed` and therefore fails. In each
//! step every agent that failed in the previous step hands its entire load,
//! in shares of `phi / K`, to its redistribution targets. Shares landing on
//! failed agents are absorbed. An operating agent fails once its load reaches
//! its threshold (`phi >= theta`).

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::thresholds::ThresholdSample;
use crate::topology::{Network, UNREACHABLE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("threshold sample has {got} values but the network has {expected} agents")]
    ThresholdLength { expected: usize, got: usize },
    #[error("alpha={0} outside [0, 1)")]
    Alpha(f64),
    #[error("shock {phi} below seed threshold {theta}: the seed would not fail")]
    InvalidShock { phi: f64, theta: f64 },
    #[error(
        "seed agent {requested} differs from the network seed {network}; re-seed the network first"
    )]
    SeedMismatch { requested: usize, network: usize },
}

/// How the seed agent is loaded at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shock {
    /// External shock of fixed size.
    Explicit(f64),
    /// Internal event: the seed is loaded exactly to its own threshold.
    SeedThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadeConfig {
    pub alpha: f64,
    pub shock: Shock,
    /// Defaults to the network's seed.
    pub seed_agent: Option<usize>,
}

impl CascadeConfig {
    pub fn new(alpha: f64, shock: Shock) -> Self {
        CascadeConfig {
            alpha,
            shock,
            seed_agent: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// A step produced no new failure before the shells were exhausted (`t*`).
    NoNewFailures,
    /// The cascade reached the outermost shell and then died out (`t°`).
    SystemCovered,
    /// Every agent failed.
    AllFailed,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::NoNewFailures => "no_new_failures",
            StopReason::SystemCovered => "system_covered",
            StopReason::AllFailed => "all_failed",
        }
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Result of a single [`CascadeState::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub t: usize,
    /// `F(t)`.
    pub new_failures: usize,
    /// Operating agents that received load this step.
    pub hit: usize,
    /// `f(t) = F(t) / K(t)`. Past the last shell (possible on graphs with
    /// loops) the hit count stands in for `K(t)`.
    pub f: f64,
}

#[derive(Debug, Clone)]
pub struct CascadeState {
    pub failed: Vec<bool>,
    pub load: Vec<f64>,
    pub threshold: Vec<f64>,
    pub t: usize,
    /// Agents that failed at step `t`.
    pub frontier: Vec<usize>,
    inbox: Vec<f64>,
    touched: Vec<usize>,
    failed_count: usize,
    max_failed_shell: usize,
}

/// Set up loads and mark the seed as failed.
pub fn init_state(
    network: &Network,
    thresholds: &ThresholdSample,
    config: &CascadeConfig,
) -> Result<CascadeState, EngineError> {
    let n = network.n();
    if thresholds.len() != n {
        return Err(EngineError::ThresholdLength {
            expected: n,
            got: thresholds.len(),
        });
    }
    if !(0.0..1.0).contains(&config.alpha) {
        return Err(EngineError::Alpha(config.alpha));
    }
    let seed = network.seed();
    if let Some(requested) = config.seed_agent {
        if requested != seed {
            return Err(EngineError::SeedMismatch {
                requested,
                network: seed,
            });
        }
    }
    let theta_seed = thresholds.values[seed];
    let phi_star = match config.shock {
        Shock::Explicit(phi) => {
            // NaN shocks are rejected too.
            if phi.is_nan() || phi < theta_seed {
                return Err(EngineError::InvalidShock {
                    phi,
                    theta: theta_seed,
                });
            }
            phi
        }
        Shock::SeedThreshold => theta_seed,
    };
    let mut load: Vec<f64> = thresholds
        .values
        .iter()
        .map(|&th| config.alpha * th)
        .collect();
    load[seed] = phi_star;
    let mut failed = vec![false; n];
    failed[seed] = true;
    Ok(CascadeState {
        failed,
        load,
        threshold: thresholds.values.clone(),
        t: 0,
        frontier: vec![seed],
        inbox: vec![0.0; n],
        touched: Vec::new(),
        failed_count: 1,
        max_failed_shell: 0,
    })
}

impl CascadeState {
    pub fn failed_count(&self) -> usize {
        self.failed_count
    }

    pub fn n(&self) -> usize {
        self.failed.len()
    }

    /// Systemic risk `X(t)`.
    pub fn systemic_risk(&self) -> f64 {
        self.failed_count as f64 / self.n() as f64
    }

    /// Net fragility `z_r = phi_r - theta_r`.
    pub fn net_fragility(&self, agent: usize) -> f64 {
        self.load[agent] - self.threshold[agent]
    }

    /// Deepest shell that contains a failed agent.
    pub fn max_failed_shell(&self) -> usize {
        self.max_failed_shell
    }

    /// Advance one step. An empty result (no new failures) is the normal
    /// stop signal.
    pub fn step(&mut self, network: &Network) -> StepOutcome {
        self.t += 1;
        let k = network.degree() as f64;
        self.touched.clear();
        for &j in &self.frontier {
            let share = self.load[j] / k;
            for &r in network.targets(j) {
                if self.failed[r] {
                    continue;
                }
                if self.inbox[r] == 0.0 {
                    self.touched.push(r);
                }
                self.inbox[r] += share;
            }
        }
        let mut next = Vec::new();
        for &r in &self.touched {
            self.load[r] += self.inbox[r];
            self.inbox[r] = 0.0;
            if !self.failed[r] && self.load[r] >= self.threshold[r] {
                self.failed[r] = true;
                next.push(r);
            }
        }
        for &r in &next {
            let shell = network.shell_of(r);
            if shell != UNREACHABLE {
                self.max_failed_shell = self.max_failed_shell.max(shell);
            }
        }
        self.failed_count += next.len();
        let hit = self.touched.len();
        let shell = network.shell_size(self.t);
        let f = match (next.len(), shell) {
            (0, _) => 0.0,
            (m, 0) => m as f64 / hit as f64,
            (m, s) => m as f64 / s as f64,
        };
        let outcome = StepOutcome {
            t: self.t,
            new_failures: next.len(),
            hit,
            f,
        };
        self.frontier = next;
        outcome
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub k_t: usize,
    pub f_count: usize,
    pub f: f64,
    pub x: f64,
}

/// Time series of one cascade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeTrace {
    pub n: usize,
    pub rows: Vec<TraceRow>,
    /// `t'`.
    pub stop_time: usize,
    pub stop_reason: StopReason,
    pub failed_count: usize,
}

impl CascadeTrace {
    pub fn f_series(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.f).collect()
    }

    pub fn failure_counts(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.f_count).collect()
    }

    pub fn shell_series(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.k_t).collect()
    }

    pub fn x_series(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.x).collect()
    }

    pub fn x_final(&self) -> f64 {
        self.failed_count as f64 / self.n as f64
    }

    /// Every agent failed.
    pub fn is_total(&self) -> bool {
        self.failed_count == self.n
    }

    /// CSV with header `t,K_t,F_t,f_t,X_t` and a trailing `#` summary line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,K_t,F_t,f_t,X_t")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{},{}", r.t, r.k_t, r.f_count, r.f, r.x)?;
        }
        writeln!(
            w,
            "# t_prime={},stop_reason={},X_final={}",
            self.stop_time,
            self.stop_reason,
            self.x_final()
        )
    }
}

/// Run a cascade to completion.
pub fn run(
    network: &Network,
    thresholds: &ThresholdSample,
    config: &CascadeConfig,
) -> Result<CascadeTrace, EngineError> {
    run_with_state(network, thresholds, config).map(|(trace, _)| trace)
}

/// [`run`], also returning the final per-agent state.
pub fn run_with_state(
    network: &Network,
    thresholds: &ThresholdSample,
    config: &CascadeConfig,
) -> Result<(CascadeTrace, CascadeState), EngineError> {
    let mut state = init_state(network, thresholds, config)?;
    let n = network.n();
    let mut rows = vec![TraceRow {
        t: 0,
        k_t: network.shell_size(0),
        f_count: 1,
        f: 1.0,
        x: state.systemic_risk(),
    }];
    let (stop_time, stop_reason) = loop {
        if state.failed_count == n {
            break (state.t, StopReason::AllFailed);
        }
        let out = state.step(network);
        if out.new_failures == 0 && state.max_failed_shell >= network.max_shell() {
            break (state.t - 1, StopReason::SystemCovered);
        }
        rows.push(TraceRow {
            t: out.t,
            k_t: network.shell_size(out.t),
            f_count: out.new_failures,
            f: out.f,
            x: state.systemic_risk(),
        });
        if out.new_failures == 0 {
            break (state.t, StopReason::NoNewFailures);
        }
    };
    let trace = CascadeTrace {
        n,
        rows,
        stop_time,
        stop_reason,
        failed_count: state.failed_count,
    };
    Ok((trace, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thresholds::ThresholdDistribution;
    use crate::topology::{build_paper_tree, build_random_regular, build_square_lattice};

    fn delta_sample(n: usize) -> ThresholdSample {
        ThresholdDistribution::delta(1.0).unwrap().sample(n, 0)
    }

    #[test]
    fn init_sets_fixed_relation() {
        let net = build_paper_tree(4, 2, 0).unwrap();
        let th = delta_sample(net.n());
        let st = init_state(&net, &th, &CascadeConfig::new(0.5, Shock::Explicit(10.0))).unwrap();
        assert_eq!(st.load[0], 10.0);
        assert!(st.load[1..].iter().all(|&l| l == 0.5));
        assert_eq!(st.failed_count(), 1);
        assert_eq!(st.systemic_risk(), 1.0 / net.n() as f64);
    }

    #[test]
    fn seed_threshold_shock_fails_at_equality() {
        let net = build_paper_tree(2, 2, 0).unwrap();
        let mut th = delta_sample(net.n());
        th.values[0] = 1.3;
        let st = init_state(&net, &th, &CascadeConfig::new(0.5, Shock::SeedThreshold)).unwrap();
        assert_eq!(st.load[0], 1.3);
        assert_eq!(st.net_fragility(0), 0.0);
        assert!(st.failed[0]);
    }

    #[test]
    fn zero_alpha_means_zero_load() {
        let net = build_square_lattice(4, true, 0).unwrap();
        let th = delta_sample(net.n());
        let st = init_state(&net, &th, &CascadeConfig::new(0.0, Shock::Explicit(2.0))).unwrap();
        assert!(st.load[1..].iter().all(|&l| l == 0.0));
    }

    #[test]
    fn init_errors() {
        let net = build_paper_tree(2, 2, 0).unwrap();
        let th = delta_sample(net.n());
        assert!(matches!(
            init_state(&net, &th, &CascadeConfig::new(0.5, Shock::Explicit(0.9))),
            Err(EngineError::InvalidShock { .. })
        ));
        assert!(matches!(
            init_state(
                &net,
                &delta_sample(3),
                &CascadeConfig::new(0.5, Shock::SeedThreshold)
            ),
            Err(EngineError::ThresholdLength {
                expected: 7,
                got: 3
            })
        ));
        assert!(matches!(
            init_state(&net, &th, &CascadeConfig::new(1.0, Shock::SeedThreshold)),
            Err(EngineError::Alpha(_))
        ));
        let mut cfg = CascadeConfig::new(0.5, Shock::SeedThreshold);
        cfg.seed_agent = Some(3);
        assert!(matches!(
            init_state(&net, &th, &cfg),
            Err(EngineError::SeedMismatch { .. })
        ));
    }

    #[test]
    fn hand_recursion_on_tree() {
        let net = build_paper_tree(4, 5, 0).unwrap();
        let th = delta_sample(net.n());
        let mut st =
            init_state(&net, &th, &CascadeConfig::new(0.5, Shock::Explicit(10.0))).unwrap();
        let s1 = st.step(&net);
        assert_eq!((s1.new_failures, s1.f), (4, 1.0));
        assert!(st.frontier.iter().all(|&a| st.load[a] == 3.0));
        let s2 = st.step(&net);
        assert_eq!((s2.new_failures, s2.f), (16, 1.0));
        assert!(st.frontier.iter().all(|&a| st.load[a] == 1.25));
        let s3 = st.step(&net);
        assert_eq!((s3.new_failures, s3.f), (0, 0.0));
        assert_eq!(s3.hit, 64);
        let shell3: Vec<_> = (0..net.n()).filter(|&a| net.shell_of(a) == 3).collect();
        assert!(shell3.iter().all(|&a| st.load[a] == 0.8125));
    }

    #[test]
    fn uniform_onset_boundary_gives_no_first_shell_failure() {
        let net = build_paper_tree(4, 3, 0).unwrap();
        let mut th = ThresholdDistribution::uniform(1.0, 0.5)
            .unwrap()
            .sample(net.n(), 8);
        th.values[0] = 0.9;
        let mut st = init_state(&net, &th, &CascadeConfig::new(0.5, Shock::Explicit(1.0))).unwrap();
        let s = st.step(&net);
        assert_eq!(s.f, 0.0);
    }

    #[test]
    fn run_tree_example() {
        let net = build_paper_tree(4, 5, 0).unwrap();
        let th = delta_sample(net.n());
        let tr = run(&net, &th, &CascadeConfig::new(0.5, Shock::Explicit(10.0))).unwrap();
        assert_eq!(tr.failed_count, 21);
        assert_eq!(tr.x_final(), 21.0 / 1365.0);
        assert_eq!(tr.stop_reason, StopReason::NoNewFailures);
        assert_eq!(tr.stop_time, 3);
        assert_eq!(tr.failure_counts(), vec![1, 4, 16, 0]);
        assert_eq!(tr.shell_series(), vec![1, 4, 16, 64]);
    }

    #[test]
    fn run_tree_full_and_covered() {
        let net = build_paper_tree(4, 3, 0).unwrap();
        let th = delta_sample(net.n());
        // K(1-alpha) < 1: everything fails.
        let tr = run(&net, &th, &CascadeConfig::new(0.8, Shock::Explicit(1.0))).unwrap();
        assert_eq!(tr.stop_reason, StopReason::AllFailed);
        assert_eq!(tr.stop_time, 3);
        assert!(tr.is_total());
        // One leaf survives: the cascade still reaches the last shell.
        let mut th = th;
        let leaf = (0..net.n()).find(|&a| net.shell_of(a) == 3).unwrap();
        th.values[leaf] = 100.0;
        let tr = run(&net, &th, &CascadeConfig::new(0.8, Shock::Explicit(1.0))).unwrap();
        assert_eq!(tr.stop_reason, StopReason::SystemCovered);
        assert_eq!(tr.stop_time, 3);
        assert_eq!(tr.failed_count, net.n() - 1);
        assert_eq!(tr.rows.len(), 4);
    }

    #[test]
    fn dense_random_regular_examples() {
        let alpha = 1.0 - 0.002;
        for (k, total) in [(400, true), (600, false)] {
            let net = build_random_regular(1000, k, 1).unwrap();
            let th = delta_sample(1000);
            let tr = run(&net, &th, &CascadeConfig::new(alpha, Shock::SeedThreshold)).unwrap();
            if total {
                assert_eq!(tr.x_final(), 1.0);
                assert_eq!(tr.stop_reason, StopReason::AllFailed);
            } else {
                assert_eq!(tr.failed_count, 1);
                assert_eq!(tr.stop_reason, StopReason::NoNewFailures);
            }
        }
    }

    #[test]
    fn failed_agents_absorb_shares() {
        // On a torus the seed's neighbors send shares back to the seed; those
        // must not change its recorded load.
        let net = build_square_lattice(5, true, 0).unwrap();
        let th = delta_sample(net.n());
        let (_, st) =
            run_with_state(&net, &th, &CascadeConfig::new(0.5, Shock::Explicit(8.0))).unwrap();
        assert_eq!(st.load[0], 8.0);
    }

    #[test]
    fn single_agent_network() {
        let net = Network::from_edge_list("1 2 random_regular\n").unwrap();
        let th = delta_sample(1);
        let tr = run(&net, &th, &CascadeConfig::new(0.5, Shock::SeedThreshold)).unwrap();
        assert_eq!(tr.stop_reason, StopReason::AllFailed);
        assert_eq!(tr.stop_time, 0);
    }

    #[test]
    fn csv_layout() {
        let net = build_paper_tree(4, 5, 0).unwrap();
        let th = delta_sample(net.n());
        let tr = run(&net, &th, &CascadeConfig::new(0.5, Shock::Explicit(10.0))).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,K_t,F_t,f_t,X_t");
        assert_eq!(lines[1], format!("0,1,1,1,{}", 1.0 / 1365.0));
        assert_eq!(
            *lines.last().unwrap(),
            format!(
                "# t_prime=3,stop_reason=no_new_failures,X_final={}",
                21.0 / 1365.0
            )
        );
    }
}
