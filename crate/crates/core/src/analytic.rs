//! Closed-form cascade predictions.
//!
//! Everything here is a pure function of the model parameters. The central
//! quantity is the margin `K(1-alpha)`: for `K(1-alpha) > 1` the critical
//! threshold `theta_c(t)` decays geometrically along the cascade and the
//! cascade stops at a finite `t*`; for `K(1-alpha) <= 1` a cascade that gets
//! past the first shell cannot be stopped.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::thresholds::ThresholdDistribution;
use crate::topology::{Network, TopologyKind};

/// Cap on the number of recursion steps in the internal-event regime.
pub const RIE_MAX_STEPS: usize = 1_000_000;
/// The internal-event recursion exits once `f(t)` drops below this.
pub const RIE_F_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("margin K(1-alpha) = {0} is not positive")]
    SingularMargin(f64),
    #[error("margin K(1-alpha) = {0} <= 1: the cascade has no finite stop time")]
    InfiniteCascade(f64),
    #[error("shock below the cascade onset: no finite stop time")]
    BelowOnset,
    #[error("not applicable: {0}")]
    NotApplicable(&'static str),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Shock regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Extreme exogenous event: the shock is of the order of the capacity `Q`.
    Eee,
    /// Random internal event: the shock equals one agent's threshold.
    Rie,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Eee => "eee",
            Regime::Rie => "rie",
        })
    }
}

/// Selects between the definition-consistent cascade-size formulas (default)
/// and the variants exactly as printed in the original derivation, which are
/// kept for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormulaVariant {
    #[default]
    Consistent,
    PaperLiteral,
}

/// `K(1 - alpha)`.
pub fn margin(k: usize, alpha: f64) -> f64 {
    k as f64 * (1.0 - alpha)
}

fn positive_margin(k: usize, alpha: f64) -> Result<f64, AnalyticError> {
    let m = margin(k, alpha);
    if m > 0.0 {
        Ok(m)
    } else {
        Err(AnalyticError::SingularMargin(m))
    }
}

/// Neighbors of the seed fail iff `theta <= phi_star / (K(1-alpha))`.
pub fn critical_threshold_first(phi_star: f64, k: usize, alpha: f64) -> Result<f64, AnalyticError> {
    Ok(phi_star / positive_margin(k, alpha)?)
}

/// `theta_c(t) = phi_star / [K(1-alpha)]^t` in the extreme-event
/// approximation; `t = 0` returns the shock itself.
pub fn eee_critical_threshold(
    phi_star: f64,
    k: usize,
    alpha: f64,
    t: u32,
) -> Result<f64, AnalyticError> {
    Ok(phi_star / positive_margin(k, alpha)?.powi(t as i32))
}

/// Fraction of the seed's neighbors that fail at `t = 1`.
pub fn f1(
    dist: &ThresholdDistribution,
    phi_star: f64,
    k: usize,
    alpha: f64,
) -> Result<f64, AnalyticError> {
    let m = positive_margin(k, alpha)?;
    let theta_c = phi_star / m;
    Ok(match *dist {
        ThresholdDistribution::Delta { theta_bar } => {
            if theta_c >= theta_bar {
                1.0
            } else {
                0.0
            }
        }
        ThresholdDistribution::Uniform { theta_bar, sigma } => {
            if phi_star / (theta_bar - sigma) >= m {
                ((phi_star / m - (theta_bar - sigma)) / (2.0 * sigma)).min(1.0)
            } else {
                0.0
            }
        }
        ThresholdDistribution::PowerLaw { gamma, theta_min } => {
            if phi_star / theta_min >= m {
                1.0 - (phi_star / theta_min / m).powf(1.0 - gamma)
            } else {
                0.0
            }
        }
    })
}

/// Load on shell `t` of a homogeneous cascade that has failed up to `t-1`:
/// `alpha theta (1 - K^-t)/(1 - K^-1) + phi_star / K^t`.
pub fn homogeneous_load_profile(
    theta_bar: f64,
    k: usize,
    alpha: f64,
    phi_star: f64,
    t: u32,
) -> f64 {
    let kf = k as f64;
    let decay = kf.powi(-(t as i32));
    alpha * theta_bar * (1.0 - decay) / (1.0 - 1.0 / kf) + phi_star * decay
}

/// Real-valued stop time of a homogeneous cascade, solving
/// `phi(t*) = theta_bar` in [`homogeneous_load_profile`].
pub fn t_star_homogeneous(
    theta_bar: f64,
    k: usize,
    alpha: f64,
    phi_star: f64,
) -> Result<f64, AnalyticError> {
    let m = positive_margin(k, alpha)?;
    if m <= 1.0 {
        return Err(AnalyticError::InfiniteCascade(m));
    }
    let kf = k as f64;
    let keep = 1.0 - 1.0 / kf;
    let num = keep * phi_star - alpha * theta_bar;
    let den = keep * theta_bar - alpha * theta_bar;
    if num <= 0.0 {
        return Err(AnalyticError::BelowOnset);
    }
    Ok((num.ln() - den.ln()) / kf.ln())
}

/// Cascade size when every shell up to `last_shell` failed completely.
///
/// The consistent form sums the shells: `(K^(t+1) - 1)/(N(K-1))` on a tree,
/// `(1 + K t(t+1)/2)/N` on a lattice whose shells grow as `K t`. The literal
/// variant returns `(K^(t-1) - 1)/(N(K-1))` and `K t(t+1)/N` respectively.
/// Random regular graphs use the tree form. Results are clamped to `[0, 1]`.
pub fn x_homogeneous(
    kind: TopologyKind,
    k: usize,
    last_shell: usize,
    n: usize,
    variant: FormulaVariant,
) -> f64 {
    let kf = k as f64;
    let t = last_shell as f64;
    let nf = n as f64;
    let x = match (kind, variant) {
        (TopologyKind::SquareLattice, FormulaVariant::Consistent) => {
            (1.0 + kf * t * (t + 1.0) / 2.0) / nf
        }
        (TopologyKind::SquareLattice, FormulaVariant::PaperLiteral) => kf * (t + 1.0) * t / nf,
        (_, FormulaVariant::Consistent) => (kf.powf(t + 1.0) - 1.0) / (nf * (kf - 1.0)),
        (_, FormulaVariant::PaperLiteral) => (kf.powf(t - 1.0) - 1.0) / (nf * (kf - 1.0)),
    };
    x.clamp(0.0, 1.0)
}

/// `sum_{tau <= last_shell} K(tau) / N` from explicit shell sizes.
pub fn x_from_shells(shells: &[usize], last_shell: usize, n: usize) -> f64 {
    let failed: usize = shells.iter().take(last_shell + 1).sum();
    (failed as f64 / n as f64).min(1.0)
}

/// Unclamped extreme-event failure fraction at step `t`.
pub fn eee_f_t_raw(
    dist: &ThresholdDistribution,
    phi_star: f64,
    k: usize,
    alpha: f64,
    t: u32,
) -> Result<f64, AnalyticError> {
    eee_f_continuous(dist, phi_star, k, alpha, t as f64)
}

/// [`eee_f_t_raw`] continued to real `t`.
pub fn eee_f_continuous(
    dist: &ThresholdDistribution,
    phi_star: f64,
    k: usize,
    alpha: f64,
    t: f64,
) -> Result<f64, AnalyticError> {
    let m = positive_margin(k, alpha)?;
    match *dist {
        ThresholdDistribution::Delta { .. } => Err(AnalyticError::NotApplicable(
            "delta thresholds follow the homogeneous recursion",
        )),
        ThresholdDistribution::Uniform { theta_bar, sigma } => {
            Ok(phi_star / (2.0 * sigma * m.powf(t)) - (theta_bar - sigma) / (2.0 * sigma))
        }
        ThresholdDistribution::PowerLaw { gamma, theta_min } => {
            Ok(1.0 - (phi_star / theta_min).powf(1.0 - gamma) * m.powf((gamma - 1.0) * t))
        }
    }
}

/// [`eee_f_t_raw`] clamped to `[0, 1]`.
pub fn eee_f_t(
    dist: &ThresholdDistribution,
    phi_star: f64,
    k: usize,
    alpha: f64,
    t: u32,
) -> Result<f64, AnalyticError> {
    eee_f_t_raw(dist, phi_star, k, alpha, t).map(|f| f.clamp(0.0, 1.0))
}

/// Real-valued extreme-event stop time
/// `[ln phi_star - ln theta_lo] / ln K(1-alpha)`, where `theta_lo` is the
/// lower end of the threshold support.
pub fn t_star_eee(
    dist: &ThresholdDistribution,
    phi_star: f64,
    k: usize,
    alpha: f64,
) -> Result<f64, AnalyticError> {
    let m = positive_margin(k, alpha)?;
    if matches!(dist, ThresholdDistribution::Delta { .. }) {
        return Err(AnalyticError::NotApplicable(
            "delta thresholds follow the homogeneous recursion",
        ));
    }
    if m <= 1.0 {
        return Err(AnalyticError::InfiniteCascade(m));
    }
    Ok((phi_star.ln() - dist.lower_bound().ln()) / m.ln())
}

/// Unclamped pairwise failure fraction in the internal-event regime.
pub fn rie_f_t_raw(
    dist: &ThresholdDistribution,
    k: usize,
    alpha: f64,
    theta_c_prev: f64,
) -> Result<f64, AnalyticError> {
    let m = positive_margin(k, alpha)?;
    match *dist {
        ThresholdDistribution::Delta { .. } => Err(AnalyticError::NotApplicable(
            "delta thresholds follow the homogeneous recursion",
        )),
        ThresholdDistribution::Uniform { theta_bar, sigma } => {
            let lo = theta_bar - sigma;
            if theta_c_prev <= lo {
                return Ok(0.0);
            }
            Ok((theta_c_prev - lo) * (theta_c_prev + (1.0 - 2.0 * m) * lo)
                / (8.0 * sigma * sigma * m))
        }
        ThresholdDistribution::PowerLaw { gamma, theta_min } => {
            if theta_c_prev <= theta_min {
                return Ok(0.0);
            }
            let r = theta_min / theta_c_prev;
            Ok(1.0
                - r.powf(gamma - 1.0)
                - m.powf(gamma - 1.0) / 2.0 * (1.0 - r.powf(2.0 * gamma - 2.0)))
        }
    }
}

/// One step of the internal-event recursion: returns the clamped `f(t)`
/// computed from `theta_c(t-1)`, and `theta_c(t) = theta_c(t-1) / K(1-alpha)`.
pub fn rie_f_t(
    dist: &ThresholdDistribution,
    k: usize,
    alpha: f64,
    theta_c_prev: f64,
) -> Result<(f64, f64), AnalyticError> {
    let f = rie_f_t_raw(dist, k, alpha, theta_c_prev)?.clamp(0.0, 1.0);
    Ok((f, theta_c_prev / positive_margin(k, alpha)?))
}

/// Seed load at which exactly one neighbor is expected to fail, `f(1) = 1/K`.
pub fn rie_critical_load(dist: &ThresholdDistribution, k: usize, alpha: f64) -> f64 {
    let m = margin(k, alpha);
    let kf = k as f64;
    match *dist {
        ThresholdDistribution::Delta { theta_bar } => m * theta_bar,
        ThresholdDistribution::Uniform { theta_bar, sigma } => {
            m * (2.0 * sigma / kf + (theta_bar - sigma))
        }
        ThresholdDistribution::PowerLaw { gamma, theta_min } => {
            theta_min * m * (1.0 - 1.0 / kf).powf(-1.0 / (gamma - 1.0))
        }
    }
}

/// Ensemble-average systemic risk for internal events: the probability that
/// a randomly chosen seed has `theta_i >= phi_c` ([`rie_critical_load`]).
/// Globally unstable systems (`K(1-alpha) <= 1`) give 1.
pub fn mean_x(dist: &ThresholdDistribution, k: usize, alpha: f64, variant: FormulaVariant) -> f64 {
    let m = margin(k, alpha);
    if m <= 1.0 {
        return 1.0;
    }
    let phi_c = rie_critical_load(dist, k, alpha);
    match *dist {
        ThresholdDistribution::Delta { theta_bar } => {
            if theta_bar >= phi_c {
                1.0
            } else {
                0.0
            }
        }
        ThresholdDistribution::Uniform { theta_bar, sigma } => match variant {
            FormulaVariant::Consistent => {
                if phi_c > theta_bar + sigma {
                    0.0
                } else if phi_c < theta_bar - sigma {
                    1.0
                } else {
                    (theta_bar + sigma - phi_c) / (2.0 * sigma)
                }
            }
            FormulaVariant::PaperLiteral => {
                if theta_bar - sigma > phi_c {
                    0.0
                } else if phi_c > theta_bar + sigma {
                    1.0
                } else {
                    uniform_mean_x_literal_middle(theta_bar, sigma, k, alpha).clamp(0.0, 1.0)
                }
            }
        },
        ThresholdDistribution::PowerLaw { gamma, theta_min } => {
            if phi_c >= theta_min {
                ((1.0 - 1.0 / k as f64) / m.powf(gamma - 1.0)).clamp(0.0, 1.0)
            } else {
                1.0
            }
        }
    }
}

/// Middle branch of the uniform `<X>` as originally printed, unclamped:
/// `[(2 alpha - 1) - K(1-alpha)]/2 - theta_bar [K(1-alpha) - 1]/(2 sigma)`.
pub fn uniform_mean_x_literal_middle(theta_bar: f64, sigma: f64, k: usize, alpha: f64) -> f64 {
    let m = margin(k, alpha);
    ((2.0 * alpha - 1.0) - m) / 2.0 - theta_bar * (m - 1.0) / (2.0 * sigma)
}

/// Inputs of [`predict`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub k: usize,
    pub alpha: f64,
    pub phi_star: f64,
    pub dist: ThresholdDistribution,
    pub n: usize,
    pub topology_kind: TopologyKind,
    /// `K(t)` for `t = 0..`; its length bounds the prediction horizon.
    pub shell_sizes: Vec<usize>,
}

impl ModelParams {
    pub fn new(
        k: usize,
        alpha: f64,
        phi_star: f64,
        dist: ThresholdDistribution,
        topology_kind: TopologyKind,
        shell_sizes: Vec<usize>,
    ) -> Result<Self, AnalyticError> {
        if k < 2 {
            return Err(AnalyticError::InvalidParams(format!("K={k} < 2")));
        }
        if !(0.0..1.0).contains(&alpha) {
            return Err(AnalyticError::InvalidParams(format!(
                "alpha={alpha} outside [0, 1)"
            )));
        }
        if !(phi_star > 0.0 && phi_star.is_finite()) {
            return Err(AnalyticError::InvalidParams(format!(
                "phi_star={phi_star} not positive"
            )));
        }
        if shell_sizes.first() != Some(&1) {
            return Err(AnalyticError::InvalidParams(
                "shell_sizes must start with 1".into(),
            ));
        }
        let n = shell_sizes.iter().sum();
        Ok(ModelParams {
            k,
            alpha,
            phi_star,
            dist,
            n,
            topology_kind,
            shell_sizes,
        })
    }

    /// Shells taken from a built network.
    pub fn from_network(
        network: &Network,
        alpha: f64,
        phi_star: f64,
        dist: ThresholdDistribution,
    ) -> Result<Self, AnalyticError> {
        Self::new(
            network.degree(),
            alpha,
            phi_star,
            dist,
            network.kind(),
            network.shell_sizes().to_vec(),
        )
    }

    /// Coverage time `t°` of the shell profile.
    pub fn t_circ(&self) -> usize {
        let mut acc = 0;
        for (t, &s) in self.shell_sizes.iter().enumerate() {
            acc += s;
            if acc >= self.n {
                return t;
            }
        }
        self.shell_sizes.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticPrediction {
    pub regime: Regime,
    /// `f(t)` for `t = 0..`, with `f(0) = 1` for the seed.
    pub f_series: Vec<f64>,
    /// Critical threshold per step (for delta thresholds: the shell load).
    pub theta_c_series: Vec<f64>,
    /// Cumulative `X(t)`.
    pub x_series: Vec<f64>,
    /// Real-valued `t*`; infinite when the cascade cannot stop.
    pub t_star: f64,
    pub t_circ: usize,
    /// `min(t*, t°)`.
    pub t_prime: f64,
    /// First integer step with `f = 0`, if it lies within the shells.
    pub stop_step: Option<usize>,
    pub x_final: f64,
    /// Global instability with a non-vanishing first shell.
    pub infinite: bool,
    /// How many values were clamped into `[0, 1]`.
    pub clamp_count: usize,
}

fn clamp_unit(x: f64, count: &mut usize) -> f64 {
    if x < 0.0 {
        *count += 1;
        0.0
    } else if x > 1.0 {
        *count += 1;
        1.0
    } else {
        x
    }
}

/// Assemble `f(t)`, `t*`, `t°`, `t'` and `X(t')` for the given regime.
///
/// Delta thresholds always use the exact homogeneous recursion. Otherwise
/// the extreme-event regime uses `theta_c(t) = phi_star/[K(1-alpha)]^t` and
/// the internal-event regime the pairwise recursion seeded with
/// `theta_c(1) = phi_star / K(1-alpha)`. Shells with `t < t*` contribute
/// `K(t) f(t)`; the first integer `t >= t*` is the stop step.
pub fn predict(
    params: &ModelParams,
    regime: Regime,
    variant: FormulaVariant,
) -> Result<AnalyticPrediction, AnalyticError> {
    let ModelParams {
        k,
        alpha,
        phi_star,
        dist,
        n,
        ..
    } = params.clone();
    let m = positive_margin(k, alpha)?;
    let t_circ = params.t_circ();
    let mut clamp_count = 0;
    let mut f_series = vec![1.0];
    let mut theta_c_series = vec![phi_star];
    let mut failed = 1.0;
    let mut x_series = vec![failed / n as f64];
    let mut stop_step = None;
    let horizon = t_circ.min(RIE_MAX_STEPS);

    let first = f1(&dist, phi_star, k, alpha)?;
    let infinite = m <= 1.0 && first > 0.0;
    let mut theta_c = phi_star / m;

    for t in 1..=horizon {
        let (f, tc) = match dist {
            ThresholdDistribution::Delta { theta_bar } => {
                let load = homogeneous_load_profile(theta_bar, k, alpha, phi_star, t as u32);
                (if load >= theta_bar { 1.0 } else { 0.0 }, load)
            }
            _ => match regime {
                Regime::Eee => (
                    clamp_unit(
                        eee_f_t_raw(&dist, phi_star, k, alpha, t as u32)?,
                        &mut clamp_count,
                    ),
                    eee_critical_threshold(phi_star, k, alpha, t as u32)?,
                ),
                Regime::Rie => {
                    if t == 1 {
                        (first, theta_c)
                    } else {
                        let raw = rie_f_t_raw(&dist, k, alpha, theta_c)?;
                        theta_c /= m;
                        let f = clamp_unit(raw, &mut clamp_count);
                        (if f < RIE_F_FLOOR { 0.0 } else { f }, theta_c)
                    }
                }
            },
        };
        f_series.push(f);
        theta_c_series.push(tc);
        if f <= 0.0 {
            stop_step = Some(t);
            x_series.push(failed / n as f64);
            break;
        }
        failed += params.shell_sizes.get(t).copied().unwrap_or(0) as f64 * f;
        x_series.push(failed / n as f64);
    }

    let t_star = if infinite {
        f64::INFINITY
    } else {
        match dist {
            ThresholdDistribution::Delta { theta_bar } => {
                match t_star_homogeneous(theta_bar, k, alpha, phi_star) {
                    Ok(v) => v,
                    Err(AnalyticError::InfiniteCascade(_)) => {
                        stop_step.map_or(f64::INFINITY, |s| s as f64)
                    }
                    Err(e) => return Err(e),
                }
            }
            _ => match regime {
                Regime::Eee => match t_star_eee(&dist, phi_star, k, alpha) {
                    Ok(v) => v,
                    Err(AnalyticError::InfiniteCascade(_)) => {
                        stop_step.map_or(f64::INFINITY, |s| s as f64)
                    }
                    Err(e) => return Err(e),
                },
                Regime::Rie => stop_step.map_or(f64::INFINITY, |s| s as f64),
            },
        }
    };
    let t_prime = t_star.min(t_circ as f64);

    let mut x_final = if infinite {
        1.0
    } else {
        clamp_unit(failed / n as f64, &mut clamp_count)
    };
    if variant == FormulaVariant::PaperLiteral
        && matches!(dist, ThresholdDistribution::Delta { .. })
        && !infinite
    {
        let last_shell = stop_step.map_or(t_circ, |s| s - 1);
        x_final = x_homogeneous(params.topology_kind, k, last_shell, n, variant);
    }

    Ok(AnalyticPrediction {
        regime,
        f_series,
        theta_c_series,
        x_series,
        t_star,
        t_circ,
        t_prime,
        stop_step,
        x_final,
        infinite,
        clamp_count,
    })
}
