//! Distances and kernels on feature vectors `(time, covariates...)`.
//!
//! Kernels use the σ-parameterization `exp(-(d/σ)²)` and `exp(-d/σ)` where
//! `d = ‖x − y‖`, so a median-heuristic σ plugs in directly. Matérn is
//! restricted to ν ∈ {1/2, 3/2, 5/2}, whose Bessel forms reduce to
//! polynomial-times-exponential closed forms.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[inline]
pub fn euclidean(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    if x.len() == 1 {
        return (x[0] - y[0]).abs();
    }
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

fn check_dims(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    Ok(())
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 2], got {alpha}"
        )))
    }
}

#[inline]
fn pow_alpha(d: f64, alpha: f64) -> f64 {
    if alpha == 1.0 {
        d
    } else if alpha == 2.0 {
        d * d
    } else {
        d.powf(alpha)
    }
}

/// `‖x − y‖^α`.
pub fn eval_distance(x: &[f64], y: &[f64], alpha: f64) -> Result<f64> {
    check_dims(x, y)?;
    check_alpha(alpha)?;
    Ok(pow_alpha(euclidean(x, y), alpha))
}

/// `‖x − o‖^α + ‖y − o‖^α − ‖x − y‖^α`, the kernel whose MMD equals the
/// α-energy distance.
pub fn eval_distance_induced_kernel(alpha: f64, x: &[f64], y: &[f64], origin: &[f64]) -> Result<f64> {
    check_dims(x, y)?;
    check_dims(x, origin)?;
    check_alpha(alpha)?;
    Ok(distance_induced(alpha, x, y, origin))
}

#[inline]
fn distance_induced(alpha: f64, x: &[f64], y: &[f64], origin: &[f64]) -> f64 {
    pow_alpha(euclidean(x, origin), alpha) + pow_alpha(euclidean(y, origin), alpha)
        - pow_alpha(euclidean(x, y), alpha)
}

/// Kernel bandwidth: either given, or chosen from the data by the median heuristic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Auto,
    Fixed(f64),
}

impl Serialize for Bandwidth {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Bandwidth::Auto => s.serialize_str("auto"),
            Bandwidth::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Bandwidth {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(Bandwidth::Fixed(v)),
            Repr::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl std::str::FromStr for Bandwidth {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Bandwidth::Auto);
        }
        s.parse::<f64>()
            .map(Bandwidth::Fixed)
            .map_err(|_| format!("expected 'auto' or a positive number, got '{s}'"))
    }
}

impl fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bandwidth::Auto => f.write_str("auto"),
            Bandwidth::Fixed(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaternNu {
    #[serde(rename = "0.5")]
    Half,
    #[serde(rename = "1.5")]
    ThreeHalves,
    #[serde(rename = "2.5")]
    FiveHalves,
}

impl MaternNu {
    pub fn value(self) -> f64 {
        match self {
            MaternNu::Half => 0.5,
            MaternNu::ThreeHalves => 1.5,
            MaternNu::FiveHalves => 2.5,
        }
    }

    pub fn from_value(nu: f64) -> Result<Self> {
        if nu == 0.5 {
            Ok(MaternNu::Half)
        } else if nu == 1.5 {
            Ok(MaternNu::ThreeHalves)
        } else if nu == 2.5 {
            Ok(MaternNu::FiveHalves)
        } else {
            Err(Error::InvalidParameter(format!(
                "Matérn smoothness must be 0.5, 1.5 or 2.5, got {nu}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Gaussian {
        sigma: Bandwidth,
    },
    Laplacian {
        sigma: Bandwidth,
    },
    RationalQuadratic {
        c: f64,
        beta: f64,
    },
    Matern {
        nu: MaternNu,
        sigma: Bandwidth,
    },
    /// Empty `origin` means the zero vector.
    DistanceInduced {
        alpha: f64,
        #[serde(default)]
        origin: Vec<f64>,
    },
}

impl KernelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Gaussian { .. } => "gaussian",
            KernelSpec::Laplacian { .. } => "laplacian",
            KernelSpec::RationalQuadratic { .. } => "rational_quadratic",
            KernelSpec::Matern { .. } => "matern",
            KernelSpec::DistanceInduced { .. } => "distance_induced",
        }
    }

    pub fn bandwidth(&self) -> Option<Bandwidth> {
        match self {
            KernelSpec::Gaussian { sigma }
            | KernelSpec::Laplacian { sigma }
            | KernelSpec::Matern { sigma, .. } => Some(*sigma),
            _ => None,
        }
    }

    /// Replaces an `Auto` bandwidth with `sigma`; fixed bandwidths are kept.
    pub fn resolve_bandwidth(&self, sigma: f64) -> KernelSpec {
        let fill = |b: Bandwidth| match b {
            Bandwidth::Auto => Bandwidth::Fixed(sigma),
            fixed => fixed,
        };
        match self.clone() {
            KernelSpec::Gaussian { sigma: b } => KernelSpec::Gaussian { sigma: fill(b) },
            KernelSpec::Laplacian { sigma: b } => KernelSpec::Laplacian { sigma: fill(b) },
            KernelSpec::Matern { nu, sigma: b } => KernelSpec::Matern { nu, sigma: fill(b) },
            other => other,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        match self {
            KernelSpec::RationalQuadratic { c, beta } => {
                positive("c", *c)?;
                positive("beta", *beta)
            }
            KernelSpec::DistanceInduced { alpha, origin } => {
                check_alpha(*alpha)?;
                match origin.iter().find(|o| !o.is_finite()) {
                    Some(o) => Err(Error::InvalidParameter(format!("non-finite origin {o}"))),
                    None => Ok(()),
                }
            }
            _ => match self.bandwidth() {
                Some(Bandwidth::Fixed(s)) => positive("sigma", s),
                _ => Ok(()),
            },
        }
    }
}

pub fn eval_kernel(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    check_dims(x, y)?;
    Ok(PairFn::kernel(spec, x.len())?.eval(x, y))
}

/// A pair function with every parameter resolved, evaluated in the inner loops.
#[derive(Debug, Clone, PartialEq)]
pub enum PairFn {
    Power { alpha: f64 },
    Gaussian { inv_sigma: f64 },
    Laplacian { inv_sigma: f64 },
    RationalQuadratic { c: f64, beta: f64 },
    Matern { nu: MaternNu, inv_sigma: f64 },
    DistanceInduced { alpha: f64, origin: Vec<f64> },
}

impl PairFn {
    pub fn energy(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(PairFn::Power { alpha })
    }

    /// `dim` is the feature dimension, used to expand an empty origin.
    pub fn kernel(spec: &KernelSpec, dim: usize) -> Result<Self> {
        spec.validate()?;
        let inv = |b: Bandwidth| match b {
            Bandwidth::Fixed(s) => Ok(1.0 / s),
            Bandwidth::Auto => Err(Error::UnresolvedBandwidth),
        };
        Ok(match spec {
            KernelSpec::Gaussian { sigma } => PairFn::Gaussian {
                inv_sigma: inv(*sigma)?,
            },
            KernelSpec::Laplacian { sigma } => PairFn::Laplacian {
                inv_sigma: inv(*sigma)?,
            },
            KernelSpec::RationalQuadratic { c, beta } => PairFn::RationalQuadratic { c: *c, beta: *beta },
            KernelSpec::Matern { nu, sigma } => PairFn::Matern {
                nu: *nu,
                inv_sigma: inv(*sigma)?,
            },
            KernelSpec::DistanceInduced { alpha, origin } => {
                let origin = if origin.is_empty() {
                    vec![0.0; dim]
                } else if origin.len() == dim {
                    origin.clone()
                } else {
                    return Err(Error::DimensionMismatch {
                        left: dim,
                        right: origin.len(),
                    });
                };
                PairFn::DistanceInduced { alpha: *alpha, origin }
            }
        })
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            PairFn::Power { alpha } => pow_alpha(euclidean(x, y), *alpha),
            PairFn::Gaussian { inv_sigma } => {
                let r = euclidean(x, y) * inv_sigma;
                (-r * r).exp()
            }
            PairFn::Laplacian { inv_sigma } => (-euclidean(x, y) * inv_sigma).exp(),
            PairFn::RationalQuadratic { c, beta } => (euclidean(x, y) + c).powf(-beta),
            PairFn::Matern { nu, inv_sigma } => matern(*nu, euclidean(x, y) * inv_sigma),
            PairFn::DistanceInduced { alpha, origin } => distance_induced(*alpha, x, y, origin),
        }
    }
}

/// Matérn kernel at scaled distance `s = d/σ`, with `r = √(2ν)·s`.
fn matern(nu: MaternNu, s: f64) -> f64 {
    match nu {
        MaternNu::Half => (-s).exp(),
        MaternNu::ThreeHalves => {
            let r = 3f64.sqrt() * s;
            (1.0 + r) * (-r).exp()
        }
        MaternNu::FiveHalves => {
            let r = 5f64.sqrt() * s;
            (1.0 + r + r * r / 3.0) * (-r).exp()
        }
    }
}
