//! Kaplan-Meier jump weights.
//!
//! For an ordered sample of size `n` the weight of the i-th observation
//! (1-based) is
//!
//! ```text
//! W_i = δ_i / (n - i + 1) * Π_{j<i} ((n - j) / (n - j + 1))^δ_j
//! ```
//!
//! which is the jump of the product-limit estimator at `t_(i)`. Censored
//! observations carry zero weight and `Σ W_i = 1 - Ŝ(t_(n))`.

use crate::data::{order_sample, CensoredSample, OrderedSample};
use crate::error::{Error, Result};

/// Streaming form of the weight recurrence. Feed the events of one group in
/// sorted order; each call returns the weight of that observation.
#[derive(Debug, Clone)]
pub(crate) struct KmRecurrence {
    n: f64,
    // number of observations already consumed
    seen: f64,
    // running product; only maintained once a censoring has been seen
    product: f64,
    censored_yet: bool,
}

impl KmRecurrence {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            n: n as f64,
            seen: 0.0,
            product: 1.0,
            censored_yet: false,
        }
    }

    #[inline]
    pub(crate) fn next(&mut self, event: bool) -> f64 {
        // at risk = n - i + 1 with i = seen + 1
        let at_risk = self.n - self.seen;
        self.seen += 1.0;
        match (event, self.censored_yet) {
            // before any censoring the product is (n - i + 1) / n, so the
            // weight is exactly 1/n
            (true, false) => 1.0 / self.n,
            (true, true) => {
                let w = self.product / at_risk;
                self.product *= (at_risk - 1.0) / at_risk;
                w
            }
            (false, false) => {
                self.censored_yet = true;
                self.product = at_risk / self.n;
                0.0
            }
            (false, true) => 0.0,
        }
    }
}

/// An ordered sample with its Kaplan-Meier weights attached.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    pub label: String,
    pub times: Vec<f64>,
    pub events: Vec<bool>,
    pub weights: Vec<f64>,
    pub weight_sum: f64,
    dim: usize,
    // row-major (time, covariates...) points, `dim` values per observation
    features: Vec<f64>,
}

impl WeightedSample {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Length of each feature vector: 1 + number of covariates.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Feature vector of the i-th ordered observation, `(time, covariates...)`.
    pub fn point(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn n_events(&self) -> usize {
        self.events.iter().filter(|&&e| e).count()
    }

    /// Indices of observations with positive weight.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(i, _)| i)
    }

    /// Σ W_i², needed by the diagonal-free normalizer.
    pub fn weight_sq_sum(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }
}

pub fn km_weights(ordered: &OrderedSample) -> Result<WeightedSample> {
    let s = &ordered.sample;
    if s.n_events() == 0 {
        return Err(Error::NoEvents {
            group: s.label.clone(),
        });
    }
    let mut rec = KmRecurrence::new(s.len());
    let weights: Vec<f64> = s.observations().iter().map(|o| rec.next(o.event)).collect();
    let weight_sum = weights.iter().sum();
    let dim = 1 + s.covariate_dim();
    let features = s
        .observations()
        .iter()
        .flat_map(|o| std::iter::once(o.time).chain(o.covariates.iter().copied()))
        .collect();
    Ok(WeightedSample {
        label: s.label.clone(),
        times: s.times(),
        events: s.events(),
        weights,
        weight_sum,
        dim,
        features,
    })
}

/// Orders `sample` by the tie rule and computes its weights.
pub fn weigh(sample: &CensoredSample) -> Result<WeightedSample> {
    km_weights(&order_sample(sample))
}

/// Rescales the weights to sum to one; zero weights stay zero.
pub fn normalize_weights(w: &WeightedSample) -> Result<WeightedSample> {
    if w.weight_sum.is_nan() || w.weight_sum <= 0.0 {
        return Err(Error::ZeroNormalizer("weight normalization"));
    }
    let mut out = w.clone();
    for x in out.weights.iter_mut() {
        *x /= w.weight_sum;
    }
    out.weight_sum = out.weights.iter().sum();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weights(times: &[f64], events: &[bool]) -> WeightedSample {
        weigh(&CensoredSample::from_parts("g", times, events).unwrap()).unwrap()
    }

    fn close(a: &[f64], b: &[f64]) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-15, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn uncensored_weights_are_uniform() {
        for n in 1..60 {
            let t: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let w = weights(&t, &vec![true; n]);
            assert!(w.weights.iter().all(|&x| x == 1.0 / n as f64), "n = {n}");
        }
    }

    #[test]
    fn hand_evaluated_cases() {
        // W1 = 1/3, W2 = 0, W3 = 1/1 * (2/3)^1 * (1/2)^0
        let w = weights(&[1.0, 2.0, 3.0], &[true, false, true]);
        close(&w.weights, &[1.0 / 3.0, 0.0, 2.0 / 3.0]);
        assert!((w.weight_sum - 1.0).abs() < 1e-15);

        let w = weights(&[1.0, 2.0], &[true, false]);
        close(&w.weights, &[0.5, 0.0]);
        assert!((w.weight_sum - 0.5).abs() < 1e-15);
    }

    #[test]
    fn unordered_input_is_sorted_first() {
        let w = weights(&[3.0, 1.0, 2.0], &[true, true, false]);
        assert_eq!(w.times, vec![1.0, 2.0, 3.0]);
        close(&w.weights, &[1.0 / 3.0, 0.0, 2.0 / 3.0]);
    }

    #[test]
    fn all_censored_is_an_error() {
        let s = CensoredSample::from_parts("dead-end", &[1.0, 2.0], &[false, false]).unwrap();
        let err = weigh(&s).unwrap_err();
        assert!(err.to_string().contains("no events"), "{err}");
    }

    #[test]
    fn normalization() {
        let w = weights(&[1.0, 2.0], &[true, false]);
        let n = normalize_weights(&w).unwrap();
        close(&n.weights, &[1.0, 0.0]);

        let w = weights(&[1.0, 2.0, 3.0], &[true, true, true]);
        assert_eq!(normalize_weights(&w).unwrap().weights, w.weights);

        let mut w = weights(&[1.0, 2.0, 3.0], &[true, false, true]);
        w.weights = vec![1.0 / 3.0, 0.0, 1.0 / 3.0];
        w.weight_sum = 2.0 / 3.0;
        close(&normalize_weights(&w).unwrap().weights, &[0.5, 0.0, 0.5]);

        w.weight_sum = 0.0;
        assert!(normalize_weights(&w).is_err());
    }

    #[test]
    fn features_carry_covariates() {
        use crate::data::CensoredObservation;
        let s = CensoredSample::new(
            "c",
            vec![
                CensoredObservation::with_covariates(2.0, true, vec![9.0, 8.0]).unwrap(),
                CensoredObservation::with_covariates(1.0, true, vec![7.0, 6.0]).unwrap(),
            ],
        )
        .unwrap();
        let w = weigh(&s).unwrap();
        assert_eq!(w.dim(), 3);
        assert_eq!(w.point(0), &[1.0, 7.0, 6.0]);
        assert_eq!(w.point(1), &[2.0, 9.0, 8.0]);
    }
}
