//! Median-heuristic bandwidth selection on the pooled sample.

use serde::{Deserialize, Serialize};

use crate::data::TwoSampleData;
use crate::error::{Error, Result};
use crate::metrics::euclidean;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MedianVariant {
    /// All pooled observations.
    MedianOverAll,
    /// Only observations with an observed event; censored rows carry zero
    /// Kaplan-Meier weight and never enter the statistics.
    MedianUncensoredOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthScaling {
    /// σ = √(H/2)
    SqrtHalf,
    /// σ = √H
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandwidthRule {
    pub variant: MedianVariant,
    pub scaling: BandwidthScaling,
}

impl Default for BandwidthRule {
    fn default() -> Self {
        Self {
            variant: MedianVariant::MedianUncensoredOnly,
            scaling: BandwidthScaling::SqrtHalf,
        }
    }
}

/// Median of the squared pairwise distances over the eligible pooled points,
/// turned into σ by `rule.scaling`.
pub fn median_heuristic(data: &TwoSampleData, rule: BandwidthRule) -> Result<f64> {
    let points: Vec<Vec<f64>> = data
        .pooled()
        .filter(|o| match rule.variant {
            MedianVariant::MedianOverAll => true,
            MedianVariant::MedianUncensoredOnly => o.event,
        })
        .map(|o| std::iter::once(o.time).chain(o.covariates.iter().copied()).collect())
        .collect();
    if points.len() < 2 {
        return Err(Error::DegenerateBandwidth(format!(
            "need at least 2 eligible observations, found {}",
            points.len()
        )));
    }
    let mut sq = Vec::with_capacity(points.len() * (points.len() - 1) / 2);
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let d = euclidean(&points[i], &points[j]);
            sq.push(d * d);
        }
    }
    let h = median(&mut sq);
    let sigma = match rule.scaling {
        BandwidthScaling::SqrtHalf => (h / 2.0).sqrt(),
        BandwidthScaling::Sqrt => h.sqrt(),
    };
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::DegenerateBandwidth(format!(
            "median squared pairwise distance is {h}"
        )));
    }
    Ok(sigma)
}

/// Median with the midpoint convention for even counts. Reorders `values`.
pub(crate) fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    debug_assert!(n > 0);
    let mid = n / 2;
    let (lower, upper_mid, _) = values.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let upper_mid = *upper_mid;
    if n % 2 == 1 {
        upper_mid
    } else {
        let lower_mid = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower_mid + upper_mid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CensoredSample;

    fn data(t0: &[f64], e0: &[bool], t1: &[f64], e1: &[bool]) -> TwoSampleData {
        TwoSampleData::new(
            CensoredSample::from_parts("a", t0, e0).unwrap(),
            CensoredSample::from_parts("b", t1, e1).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn hand_enumerated_three_points() {
        // squared distances {1, 9, 4}: median 4
        let d = data(&[0.0, 1.0], &[true, true], &[3.0], &[true]);
        let half = median_heuristic(&d, BandwidthRule::default()).unwrap();
        assert!((half - 2f64.sqrt()).abs() < 1e-15);
        let full = median_heuristic(
            &d,
            BandwidthRule {
                variant: MedianVariant::MedianUncensoredOnly,
                scaling: BandwidthScaling::Sqrt,
            },
        )
        .unwrap();
        assert_eq!(full, 2.0);
    }

    #[test]
    fn identical_points_are_degenerate() {
        let d = data(&[2.0], &[true], &[2.0], &[true]);
        let err = median_heuristic(&d, BandwidthRule::default()).unwrap_err();
        assert!(err.to_string().contains("degenerate bandwidth"));
    }

    #[test]
    fn too_few_uncensored() {
        let d = data(&[1.0, 2.0], &[true, false], &[3.0], &[false]);
        assert!(median_heuristic(&d, BandwidthRule::default()).is_err());
        let all = BandwidthRule {
            variant: MedianVariant::MedianOverAll,
            scaling: BandwidthScaling::Sqrt,
        };
        // pooled {1,2,3}: squared distances {1,4,1}, median 1
        assert_eq!(median_heuristic(&d, all).unwrap(), 1.0);
    }

    #[test]
    fn even_count_uses_midpoint() {
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median(&mut [5.0]), 5.0);
        assert_eq!(median(&mut [2.0, 2.0]), 2.0);
    }

    #[test]
    fn covariates_enter_the_distance() {
        use crate::data::CensoredObservation;
        let mk = |t: f64, c: f64| CensoredObservation::with_covariates(t, true, vec![c]).unwrap();
        let d = TwoSampleData::new(
            CensoredSample::new("a", vec![mk(0.0, 0.0)]).unwrap(),
            CensoredSample::new("b", vec![mk(3.0, 4.0)]).unwrap(),
        )
        .unwrap();
        let rule = BandwidthRule {
            variant: MedianVariant::MedianOverAll,
            scaling: BandwidthScaling::Sqrt,
        };
        assert_eq!(median_heuristic(&d, rule).unwrap(), 5.0);
    }
}
