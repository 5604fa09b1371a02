//! Threshold distributions `P(theta)`: sampling, CDF, quantile and the
//! network capacity `Q`.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::seeded_rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThresholdError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("quantile argument {0} outside [0, 1)")]
    Domain(f64),
    #[error("load fraction alpha={0} outside [0, 1]")]
    Alpha(f64),
}

/// The three threshold families. Construct through [`ThresholdDistribution::delta`],
/// [`ThresholdDistribution::uniform`] and [`ThresholdDistribution::power_law`],
/// which enforce the parameter domains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum ThresholdDistribution {
    /// Every agent has threshold `theta_bar`.
    Delta { theta_bar: f64 },
    /// `U(theta_bar - sigma, theta_bar + sigma)`.
    Uniform { theta_bar: f64, sigma: f64 },
    /// Density `(gamma-1) theta_min^(gamma-1) theta^(-gamma)` on `[theta_min, inf)`.
    PowerLaw { gamma: f64, theta_min: f64 },
}

impl ThresholdDistribution {
    pub fn delta(theta_bar: f64) -> Result<Self, ThresholdError> {
        if !(theta_bar.is_finite() && theta_bar > 0.0) {
            return Err(ThresholdError::InvalidDistribution(format!(
                "delta needs theta_bar > 0 (got {theta_bar})"
            )));
        }
        Ok(ThresholdDistribution::Delta { theta_bar })
    }

    /// `sigma = 0` collapses to [`ThresholdDistribution::Delta`].
    pub fn uniform(theta_bar: f64, sigma: f64) -> Result<Self, ThresholdError> {
        if !(theta_bar.is_finite() && sigma.is_finite() && sigma >= 0.0) {
            return Err(ThresholdError::InvalidDistribution(format!(
                "uniform needs finite theta_bar and sigma >= 0 (got {theta_bar}, {sigma})"
            )));
        }
        if theta_bar - sigma <= 0.0 {
            return Err(ThresholdError::InvalidDistribution(format!(
                "uniform needs theta_bar - sigma > 0 (got {theta_bar} - {sigma})"
            )));
        }
        if sigma == 0.0 {
            return Self::delta(theta_bar);
        }
        Ok(ThresholdDistribution::Uniform { theta_bar, sigma })
    }

    pub fn power_law(gamma: f64, theta_min: f64) -> Result<Self, ThresholdError> {
        if !(gamma.is_finite() && gamma > 1.0) {
            return Err(ThresholdError::InvalidDistribution(format!(
                "power_law needs gamma > 1 (got {gamma})"
            )));
        }
        if !(theta_min.is_finite() && theta_min > 0.0) {
            return Err(ThresholdError::InvalidDistribution(format!(
                "power_law needs theta_min > 0 (got {theta_min})"
            )));
        }
        Ok(ThresholdDistribution::PowerLaw { gamma, theta_min })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ThresholdDistribution::Delta { .. } => "delta",
            ThresholdDistribution::Uniform { .. } => "uniform",
            ThresholdDistribution::PowerLaw { .. } => "power_law",
        }
    }

    /// Lower end of the support: `theta_bar`, `theta_bar - sigma` or `theta_min`.
    pub fn lower_bound(&self) -> f64 {
        match *self {
            ThresholdDistribution::Delta { theta_bar } => theta_bar,
            ThresholdDistribution::Uniform { theta_bar, sigma } => theta_bar - sigma,
            ThresholdDistribution::PowerLaw { theta_min, .. } => theta_min,
        }
    }

    pub fn upper_bound(&self) -> f64 {
        match *self {
            ThresholdDistribution::Delta { theta_bar } => theta_bar,
            ThresholdDistribution::Uniform { theta_bar, sigma } => theta_bar + sigma,
            ThresholdDistribution::PowerLaw { .. } => f64::INFINITY,
        }
    }

    /// Mean threshold, `None` for a power law with `gamma <= 2`.
    pub fn mean(&self) -> Option<f64> {
        match *self {
            ThresholdDistribution::Delta { theta_bar }
            | ThresholdDistribution::Uniform { theta_bar, .. } => Some(theta_bar),
            ThresholdDistribution::PowerLaw { gamma, theta_min } => {
                (gamma > 2.0).then(|| theta_min * (gamma - 1.0) / (gamma - 2.0))
            }
        }
    }

    /// Inverse CDF on `[0, 1)`.
    pub fn quantile(&self, u: f64) -> Result<f64, ThresholdError> {
        if !(0.0..1.0).contains(&u) {
            return Err(ThresholdError::Domain(u));
        }
        Ok(match *self {
            ThresholdDistribution::Delta { theta_bar } => theta_bar,
            ThresholdDistribution::Uniform { theta_bar, sigma } => {
                theta_bar - sigma + 2.0 * sigma * u
            }
            ThresholdDistribution::PowerLaw { gamma, theta_min } => {
                // theta_min * (1-u)^(-1/(gamma-1))
                theta_min * (-(-u).ln_1p() / (gamma - 1.0)).exp()
            }
        })
    }

    /// `P(theta' <= theta)`. The delta family is right-continuous, so its CDF
    /// is already 1 at `theta_bar`.
    pub fn cdf(&self, theta: f64) -> f64 {
        match *self {
            ThresholdDistribution::Delta { theta_bar } => {
                if theta >= theta_bar {
                    1.0
                } else {
                    0.0
                }
            }
            ThresholdDistribution::Uniform { theta_bar, sigma } => {
                ((theta - (theta_bar - sigma)) / (2.0 * sigma)).clamp(0.0, 1.0)
            }
            ThresholdDistribution::PowerLaw { gamma, theta_min } => {
                if theta <= theta_min {
                    0.0
                } else {
                    // 1 - (theta_min/theta)^(gamma-1)
                    (-((gamma - 1.0) * (theta_min / theta).ln()).exp_m1()).clamp(0.0, 1.0)
                }
            }
        }
    }

    /// Density of the continuous families; `None` for delta.
    pub fn pdf(&self, theta: f64) -> Option<f64> {
        match *self {
            ThresholdDistribution::Delta { .. } => None,
            ThresholdDistribution::Uniform { theta_bar, sigma } => {
                Some(if (theta - theta_bar).abs() <= sigma {
                    1.0 / (2.0 * sigma)
                } else {
                    0.0
                })
            }
            ThresholdDistribution::PowerLaw { gamma, theta_min } => Some(if theta < theta_min {
                0.0
            } else {
                (gamma - 1.0) / theta_min * (theta_min / theta).powf(gamma)
            }),
        }
    }

    /// Draw `n` thresholds by inverse transform from `rng`.
    pub fn sample_from<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                self.quantile(u).expect("random f64 lies in [0, 1)")
            })
            .collect()
    }

    pub fn sample(&self, n: usize, rng_seed: u64) -> ThresholdSample {
        let mut rng = seeded_rng(rng_seed);
        ThresholdSample {
            values: self.sample_from(&mut rng, n),
            rng_seed,
        }
    }

    /// Capacity `Q` the network can absorb a priori. For a power law with
    /// `gamma <= 2` the mean diverges and the finite-size expression
    /// `theta_min [(gamma-1)/(gamma-2) + N^(2-gamma)/(2-gamma)]` is used,
    /// with its logarithmic limit `theta_min (1 + ln N)` at `gamma = 2`.
    pub fn network_capacity(&self, n: usize, alpha: f64) -> Result<f64, ThresholdError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(ThresholdError::Alpha(alpha));
        }
        let per_agent = match *self {
            ThresholdDistribution::Delta { theta_bar }
            | ThresholdDistribution::Uniform { theta_bar, .. } => theta_bar,
            ThresholdDistribution::PowerLaw { gamma, theta_min } => {
                if gamma <= 1.0 {
                    return Err(ThresholdError::InvalidDistribution(format!(
                        "power_law needs gamma > 1 (got {gamma})"
                    )));
                }
                if gamma > 2.0 {
                    theta_min * (gamma - 1.0) / (gamma - 2.0)
                } else {
                    // (gamma-1)/(gamma-2) + N^e/e with e = 2-gamma, rewritten
                    // as 1 + (N^e - 1)/e so it stays finite as e -> 0.
                    let e = 2.0 - gamma;
                    let ln_n = (n as f64).ln();
                    let growth = if e == 0.0 {
                        ln_n
                    } else {
                        (e * ln_n).exp_m1() / e
                    };
                    theta_min * (1.0 + growth)
                }
            }
        };
        Ok(n as f64 * (1.0 - alpha) * per_agent)
    }
}

impl fmt::Display for ThresholdDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ThresholdDistribution::Delta { theta_bar } => write!(f, "delta(theta_bar={theta_bar})"),
            ThresholdDistribution::Uniform { theta_bar, sigma } => {
                write!(f, "uniform(theta_bar={theta_bar}, sigma={sigma})")
            }
            ThresholdDistribution::PowerLaw { gamma, theta_min } => {
                write!(f, "power_law(gamma={gamma}, theta_min={theta_min})")
            }
        }
    }
}

/// One realization of `N` thresholds together with the seed that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSample {
    pub values: Vec<f64>,
    pub rng_seed: u64,
}

impl ThresholdSample {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}
