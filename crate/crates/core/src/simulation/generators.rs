//! Lifetime distributions.

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, LogNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma as GammaCdf, LogNormal as LogNormalCdf};

use super::curve::SurvivalCurve;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum LifetimeGenerator {
    Exponential { rate: f64 },
    /// Shape `shape`, scale `scale` (mean `shape * scale`).
    Gamma { shape: f64, scale: f64 },
    /// `exp(N(mu, sigma²))`.
    LogNormal { mu: f64, sigma: f64 },
    Curve { curve: SurvivalCurve },
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

impl LifetimeGenerator {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Exponential { rate } => positive("rate", *rate),
            Self::Gamma { shape, scale } => {
                positive("shape", *shape)?;
                positive("scale", *scale)
            }
            Self::LogNormal { mu, sigma } => {
                if !mu.is_finite() {
                    return Err(Error::InvalidParameter(format!("mu must be finite, got {mu}")));
                }
                positive("sigma", *sigma)
            }
            Self::Curve { curve } => curve.check_samplable(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Exponential { .. } => "exponential",
            Self::Gamma { .. } => "gamma",
            Self::LogNormal { .. } => "log_normal",
            Self::Curve { .. } => "curve",
        }
    }

    /// The same law with its hazard multiplied by `theta`: `S(t)^theta`.
    /// Only available where that stays inside the family.
    pub fn with_hazard_ratio(&self, theta: f64) -> Result<Self> {
        positive("theta", theta)?;
        if theta == 1.0 {
            return Ok(self.clone());
        }
        match self {
            Self::Exponential { rate } => Ok(Self::Exponential { rate: rate * theta }),
            Self::Curve { curve } => Ok(Self::Curve {
                curve: curve.powered(theta),
            }),
            other => Err(Error::InvalidParameter(format!(
                "a hazard ratio other than 1 is not supported for the {} generator",
                other.name()
            ))),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        self.validate()?;
        let bad = |e: &dyn std::fmt::Display| Error::InvalidParameter(e.to_string());
        Ok(match self {
            Self::Exponential { rate } => {
                let d = Exp::new(*rate).map_err(|e| bad(&e))?;
                (0..n).map(|_| d.sample(rng)).collect()
            }
            Self::Gamma { shape, scale } => {
                let d = Gamma::new(*shape, *scale).map_err(|e| bad(&e))?;
                (0..n).map(|_| d.sample(rng)).collect()
            }
            Self::LogNormal { mu, sigma } => {
                let d = LogNormal::new(*mu, *sigma).map_err(|e| bad(&e))?;
                (0..n).map(|_| d.sample(rng)).collect()
            }
            Self::Curve { curve } => curve.sample(n, rng)?,
        })
    }

    /// `∫₀ᵇ P(T > c) dc`, used to calibrate uniform censoring.
    pub(crate) fn integrated_survival(&self, b: f64) -> Result<f64> {
        let bad = |e: &dyn std::fmt::Display| Error::InvalidParameter(e.to_string());
        Ok(match self {
            Self::Exponential { rate } => -(-rate * b).exp_m1() / rate,
            // ∫₀ᵇ S = b S(b) + E[T; T ≤ b]
            Self::Gamma { shape, scale } => {
                let d = GammaCdf::new(*shape, 1.0 / scale).map_err(|e| bad(&e))?;
                let up = GammaCdf::new(shape + 1.0, 1.0 / scale).map_err(|e| bad(&e))?;
                b * d.sf(b) + shape * scale * up.cdf(b)
            }
            Self::LogNormal { mu, sigma } => {
                let d = LogNormalCdf::new(*mu, *sigma).map_err(|e| bad(&e))?;
                let shifted = LogNormalCdf::new(mu + sigma * sigma, *sigma).map_err(|e| bad(&e))?;
                b * d.sf(b) + (mu + 0.5 * sigma * sigma).exp() * shifted.cdf(b)
            }
            Self::Curve { curve } => curve.integrated_survival(b),
        })
    }

    /// Largest value a draw can take, if bounded.
    pub fn support_end(&self) -> Option<f64> {
        match self {
            Self::Curve { curve } => Some(curve.t_max()),
            _ => None,
        }
    }
}
