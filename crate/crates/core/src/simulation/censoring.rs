//! Independent right censoring by a uniform censoring time.

use rand::distr::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::generators::LifetimeGenerator;
use crate::data::{CensoredObservation, CensoredSample};
use crate::error::{Error, Result};

pub const DEFAULT_SUPPORT_MULTIPLIER: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum CensoringModel {
    None,
    /// `C ~ U(0, upper)`.
    Uniform { upper: f64 },
    /// `C ~ U(0, multiplier * tau)` with `tau` the common right end of two
    /// bounded (curve) generators.
    UniformOnSupport {
        #[serde(default = "default_multiplier")]
        multiplier: f64,
    },
    /// `C ~ U(0, b)` with `b` chosen so that the expected censored fraction
    /// over the pooled sample equals `rate`.
    TargetRate { rate: f64 },
}

fn default_multiplier() -> f64 {
    DEFAULT_SUPPORT_MULTIPLIER
}

/// Censoring law after calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CensoringLaw {
    None,
    Uniform { upper: f64 },
}

impl CensoringModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        match *self {
            Self::None => Ok(()),
            Self::Uniform { upper } if !(upper > 0.0 && upper.is_finite()) => {
                bad(format!("censoring upper bound must be positive and finite, got {upper}"))
            }
            Self::UniformOnSupport { multiplier } if !(multiplier > 0.0 && multiplier.is_finite()) => {
                bad(format!("support multiplier must be positive and finite, got {multiplier}"))
            }
            Self::TargetRate { rate } if !(rate > 0.0 && rate < 1.0) => {
                bad(format!("target censoring rate must lie in (0, 1), got {rate}"))
            }
            _ => Ok(()),
        }
    }

    /// Resolves the model for arms drawn from `g0` and `g1` with sizes `n0`, `n1`.
    pub fn calibrate(
        &self,
        g0: &LifetimeGenerator,
        g1: &LifetimeGenerator,
        n0: usize,
        n1: usize,
    ) -> Result<CensoringLaw> {
        self.validate()?;
        match *self {
            Self::None => Ok(CensoringLaw::None),
            Self::Uniform { upper } => Ok(CensoringLaw::Uniform { upper }),
            Self::UniformOnSupport { multiplier } => match (g0.support_end(), g1.support_end()) {
                (Some(a), Some(b)) => Ok(CensoringLaw::Uniform {
                    upper: multiplier * a.min(b),
                }),
                _ => Err(Error::InvalidParameter(
                    "uniform_on_support censoring needs bounded (curve) generators in both arms".into(),
                )),
            },
            Self::TargetRate { rate } => Ok(CensoringLaw::Uniform {
                upper: calibrate_uniform_bound(g0, g1, n0, n1, rate)?,
            }),
        }
    }
}

/// Expected censored fraction `P(C < T)` for `C ~ U(0, b)`, averaged over
/// the two arms in proportion to their sizes.
pub fn expected_censoring(
    g0: &LifetimeGenerator,
    g1: &LifetimeGenerator,
    n0: usize,
    n1: usize,
    b: f64,
) -> Result<f64> {
    let w0 = n0 as f64 / (n0 + n1) as f64;
    let p0 = g0.integrated_survival(b)? / b;
    let p1 = g1.integrated_survival(b)? / b;
    Ok(w0 * p0 + (1.0 - w0) * p1)
}

/// Bisection for the uniform bound giving censoring fraction `rate`.
pub fn calibrate_uniform_bound(
    g0: &LifetimeGenerator,
    g1: &LifetimeGenerator,
    n0: usize,
    n1: usize,
    rate: f64,
) -> Result<f64> {
    g0.validate()?;
    g1.validate()?;
    if n0 + n1 == 0 {
        return Err(Error::InvalidParameter("group sizes must not both be zero".into()));
    }
    let f = |b: f64| expected_censoring(g0, g1, n0, n1, b);
    // the censored fraction falls from 1 (b -> 0) towards 0 (b -> inf)
    let mut lo = 0.5;
    let mut hi = 1.0;
    let mut guard = 0;
    while f(hi)? > rate {
        lo = hi;
        hi *= 2.0;
        guard += 1;
        if guard > 2000 {
            return Err(Error::InvalidParameter(format!("cannot reach censoring rate {rate}")));
        }
    }
    while f(lo)? < rate {
        hi = lo;
        lo /= 2.0;
        guard += 1;
        if guard > 2000 {
            return Err(Error::InvalidParameter(format!("cannot reach censoring rate {rate}")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid)? > rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Observed time `min(T, C)` with event indicator `T <= C`.
pub fn apply_censoring<R: Rng + ?Sized>(
    label: &str,
    lifetimes: &[f64],
    law: CensoringLaw,
    rng: &mut R,
) -> Result<CensoredSample> {
    let obs = match law {
        CensoringLaw::None => lifetimes
            .iter()
            .map(|&t| CensoredObservation::new(t, true))
            .collect::<Result<Vec<_>>>()?,
        CensoringLaw::Uniform { upper } => {
            let u = Uniform::new(0.0, upper).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            lifetimes
                .iter()
                .map(|&t| {
                    let c = u.sample(rng);
                    if t <= c {
                        CensoredObservation::new(t, true)
                    } else {
                        CensoredObservation::new(c, false)
                    }
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    CensoredSample::new(label, obs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::simulation::curve::load_curve;

    const EXP1: LifetimeGenerator = LifetimeGenerator::Exponential { rate: 1.0 };

    #[test]
    fn no_censoring_keeps_everything() {
        let s = apply_censoring("a", &[0.5, 1.0, 7.0], CensoringLaw::None, &mut stream(0, 0)).unwrap();
        assert_eq!(s.n_events(), 3);
        let huge = apply_censoring("a", &[0.5, 1.0, 7.0], CensoringLaw::Uniform { upper: 1e300 }, &mut stream(0, 0)).unwrap();
        assert_eq!(huge.n_events(), 3);
    }

    #[test]
    fn bounds_are_checked() {
        assert!(CensoringModel::Uniform { upper: 0.0 }.validate().is_err());
        assert!(CensoringModel::UniformOnSupport { multiplier: -1.0 }.validate().is_err());
        assert!(CensoringModel::TargetRate { rate: 1.0 }.validate().is_err());
        assert!(CensoringModel::TargetRate { rate: 0.0 }.validate().is_err());
        let err = CensoringModel::UniformOnSupport { multiplier: 3.0 }.calibrate(&EXP1, &EXP1, 5, 5);
        assert!(err.is_err());
    }

    #[test]
    fn exponential_bound_solves_closed_form() {
        let b = calibrate_uniform_bound(&EXP1, &EXP1, 10, 10, 0.3).unwrap();
        let rate = (1.0 - (-b).exp()) / b;
        assert!((rate - 0.3).abs() < 1e-9, "{rate}");
    }

    #[test]
    fn target_rate_is_realized() {
        let law = CensoringModel::TargetRate { rate: 0.3 }.calibrate(&EXP1, &EXP1, 1, 1).unwrap();
        let t = EXP1.sample(100_000, &mut stream(8, 0)).unwrap();
        let s = apply_censoring("a", &t, law, &mut stream(8, 1)).unwrap();
        let frac = 1.0 - s.n_events() as f64 / s.len() as f64;
        assert!((frac - 0.3).abs() < 0.01, "{frac}");
    }

    #[test]
    fn pooled_calibration_with_unequal_arms() {
        let g1 = LifetimeGenerator::Exponential { rate: 2.0 };
        let b = calibrate_uniform_bound(&EXP1, &g1, 30, 10, 0.2).unwrap();
        let p = expected_censoring(&EXP1, &g1, 30, 10, b).unwrap();
        assert!((p - 0.2).abs() < 1e-9);
        let law = CensoringLaw::Uniform { upper: b };
        let n = 200_000;
        let mut censored = 0;
        for (g, k, s) in [(&EXP1, 3 * n, 1), (&g1, n, 2)] {
            let t = g.sample(k, &mut stream(9, s)).unwrap();
            let smp = apply_censoring("a", &t, law, &mut stream(9, 10 + s)).unwrap();
            censored += smp.len() - smp.n_events();
        }
        let frac = censored as f64 / (4 * n) as f64;
        assert!((frac - 0.2).abs() < 0.005, "{frac}");
    }

    #[test]
    fn support_bound_uses_common_end() {
        let a = LifetimeGenerator::Curve { curve: load_curve(&[(0.0, 1.0), (4.0, 0.2)]).unwrap() };
        let b = LifetimeGenerator::Curve { curve: load_curve(&[(0.0, 1.0), (6.0, 0.1)]).unwrap() };
        let law = CensoringModel::UniformOnSupport { multiplier: 3.0 }.calibrate(&a, &b, 5, 5).unwrap();
        assert_eq!(law, CensoringLaw::Uniform { upper: 12.0 });
    }

    #[test]
    fn curve_target_rate() {
        let a = LifetimeGenerator::Curve { curve: load_curve(&[(0.0, 1.0), (2.0, 0.5), (5.0, 0.2)]).unwrap() };
        let law = CensoringModel::TargetRate { rate: 0.25 }.calibrate(&a, &a, 1, 1).unwrap();
        let t = a.sample(100_000, &mut stream(4, 0)).unwrap();
        let s = apply_censoring("a", &t, law, &mut stream(4, 1)).unwrap();
        let frac = 1.0 - s.n_events() as f64 / s.len() as f64;
        assert!((frac - 0.25).abs() < 0.01, "{frac}");
    }
}
