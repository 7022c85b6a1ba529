//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use survdist::{CensoredObservation, CensoredSample, TwoSampleData};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Exponential lifetimes with independent uniform censoring. `censor_scale`
/// of zero disables censoring. Resamples until both groups have an event.
pub fn random_dataset<R: Rng>(rng: &mut R, n0: usize, n1: usize, rate1: f64, censor_scale: f64) -> TwoSampleData {
    loop {
        let mut group = |label: &str, n: usize, rate: f64| {
            let obs: Vec<CensoredObservation> = (0..n)
                .map(|_| {
                    let t = -(1.0 - rng.random::<f64>()).ln() / rate;
                    if censor_scale > 0.0 {
                        let c = rng.random::<f64>() * censor_scale;
                        if c < t {
                            return CensoredObservation::new(c, false).unwrap();
                        }
                    }
                    CensoredObservation::new(t, true).unwrap()
                })
                .collect();
            CensoredSample::new(label, obs).unwrap()
        };
        let g0 = group("x", n0, 1.0);
        let g1 = group("y", n1, rate1);
        if g0.n_events() > 0 && g1.n_events() > 0 {
            return TwoSampleData::new(g0, g1).unwrap();
        }
    }
}

/// Same as [`random_dataset`] with `dim` standard-normal-ish covariates.
pub fn random_dataset_with_covariates<R: Rng>(rng: &mut R, n0: usize, n1: usize, dim: usize, censor_scale: f64) -> TwoSampleData {
    let base = random_dataset(rng, n0, n1, 1.5, censor_scale);
    let mut add = |s: &CensoredSample| {
        let obs = s
            .observations()
            .iter()
            .map(|o| {
                let cov = (0..dim).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
                CensoredObservation::with_covariates(o.time, o.event, cov).unwrap()
            })
            .collect();
        CensoredSample::new(s.label.clone(), obs).unwrap()
    };
    TwoSampleData::new(add(&base.group0), add(&base.group1)).unwrap()
}

/// Product-limit survival just after each observation, by risk-set counting
/// over distinct times. Returns `(time, S(time))` for the sorted sample.
pub fn product_limit(times: &[f64], events: &[bool]) -> Vec<(f64, f64)> {
    let mut distinct: Vec<f64> = times.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut s = 1.0;
    let mut curve = Vec::new();
    for &t in &distinct {
        let at_risk = times.iter().filter(|&&x| x >= t).count() as f64;
        let deaths = times.iter().zip(events).filter(|(x, e)| **x == t && **e).count() as f64;
        s *= 1.0 - deaths / at_risk;
        curve.push((t, s));
    }
    curve
}

pub fn survival_at(curve: &[(f64, f64)], t: f64) -> f64 {
    curve.iter().take_while(|p| p.0 <= t).last().map_or(1.0, |p| p.1)
}

/// Textbook V-statistic energy distance with uniform weights.
pub fn classical_energy(x: &[Vec<f64>], y: &[Vec<f64>], alpha: f64) -> f64 {
    let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt().powf(alpha);
    let mean = |a: &[Vec<f64>], b: &[Vec<f64>]| {
        let mut s = 0.0;
        for p in a {
            for q in b {
                s += d(p, q);
            }
        }
        s / (a.len() * b.len()) as f64
    };
    2.0 * mean(x, y) - mean(x, x) - mean(y, y)
}

/// Textbook V-statistic squared MMD with uniform weights.
pub fn classical_mmd(x: &[Vec<f64>], y: &[Vec<f64>], k: impl Fn(&[f64], &[f64]) -> f64) -> f64 {
    let mean = |a: &[Vec<f64>], b: &[Vec<f64>]| {
        let mut s = 0.0;
        for p in a {
            for q in b {
                s += k(p, q);
            }
        }
        s / (a.len() * b.len()) as f64
    };
    mean(x, x) + mean(y, y) - 2.0 * mean(x, y)
}

pub fn points(s: &CensoredSample) -> Vec<Vec<f64>> {
    s.observations()
        .iter()
        .map(|o| std::iter::once(o.time).chain(o.covariates.iter().copied()).collect())
        .collect()
}

pub fn gaussian(sigma: f64) -> impl Fn(&[f64], &[f64]) -> f64 {
    move |a, b| {
        let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
        (-d2 / (sigma * sigma)).exp()
    }
}

pub fn laplacian(sigma: f64) -> impl Fn(&[f64], &[f64]) -> f64 {
    move |a, b| {
        let d: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        (-d / sigma).exp()
    }
}

/// Antitonic least squares by the min-max formula.
pub fn antitonic_minmax(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    (0..n)
        .map(|i| {
            (0..=i)
                .map(|j| {
                    (i..n)
                        .map(|k| y[j..=k].iter().sum::<f64>() / (k - j + 1) as f64)
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}
