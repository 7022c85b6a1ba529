//! Kaplan-Meier weighted energy distance and kernel MMD statistics.
//!
//! Every statistic is built from three weighted averages of a pair function
//! `h`: one across the groups and one within each group.
//!
//! * energy: `2·cross − within₀ − within₁` with `h = ‖x − y‖^α`
//! * MMD:    `within₀ + within₁ − 2·cross` with `h = K(x, y)`
//!
//! The V form averages within-group pairs including the diagonal, the U form
//! excludes it, and each average is divided by its own weight mass. The
//! unnormalized V form drops the divisions entirely and is kept to exhibit
//! that it can turn negative when a group's weights sum to less than one.
//!
//! Only observations with positive weight (observed events) contribute.

use serde::{Deserialize, Serialize};

use crate::data::TwoSampleData;
use crate::error::{Error, Result};
use crate::km::{weigh, WeightedSample};
use crate::metrics::{check_alpha, KernelSpec, PairFn};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    U,
    V,
    UnnormalizedV,
}

impl Form {
    pub fn name(self) -> &'static str {
        match self {
            Form::U => "u",
            Form::V => "v",
            Form::UnnormalizedV => "unnormalized_v",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "measure", rename_all = "snake_case")]
pub enum Measure {
    Energy { alpha: f64 },
    Mmd { kernel: KernelSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticSpec {
    pub form: Form,
    #[serde(flatten)]
    pub measure: Measure,
}

impl StatisticSpec {
    pub fn energy(form: Form, alpha: f64) -> Self {
        Self {
            form,
            measure: Measure::Energy { alpha },
        }
    }

    pub fn mmd(form: Form, kernel: KernelSpec) -> Self {
        Self {
            form,
            measure: Measure::Mmd { kernel },
        }
    }

    /// Short name of the distance or kernel, e.g. `energy` or `gaussian`.
    pub fn measure_name(&self) -> &'static str {
        match &self.measure {
            Measure::Energy { .. } => "energy",
            Measure::Mmd { kernel } => kernel.name(),
        }
    }

    /// Parameters as `key=value` pairs joined by `;`, e.g. `alpha=1` or `sigma=auto`.
    pub fn params(&self) -> String {
        match &self.measure {
            Measure::Energy { alpha } => format!("alpha={alpha}"),
            Measure::Mmd { kernel } => match kernel {
                KernelSpec::Gaussian { sigma } | KernelSpec::Laplacian { sigma } => format!("sigma={sigma}"),
                KernelSpec::RationalQuadratic { c, beta } => format!("c={c};beta={beta}"),
                KernelSpec::Matern { nu, sigma } => format!("nu={};sigma={sigma}", nu.value()),
                KernelSpec::DistanceInduced { alpha, origin } if origin.is_empty() => format!("alpha={alpha}"),
                KernelSpec::DistanceInduced { alpha, origin } => {
                    let o: Vec<String> = origin.iter().map(|v| v.to_string()).collect();
                    format!("alpha={alpha};origin={}", o.join(" "))
                }
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.measure {
            Measure::Energy { alpha } => check_alpha(*alpha),
            Measure::Mmd { kernel } => kernel.validate(),
        }
    }

    pub(crate) fn pair_fn(&self, dim: usize) -> Result<PairFn> {
        match &self.measure {
            Measure::Energy { alpha } => PairFn::energy(*alpha),
            Measure::Mmd { kernel } => PairFn::kernel(kernel, dim),
        }
    }

    pub(crate) fn is_energy(&self) -> bool {
        matches!(self.measure, Measure::Energy { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatisticValue {
    pub raw: f64,
    /// `n₀n₁/(n₀+n₁) · raw`
    pub scaled: f64,
}

impl StatisticValue {
    pub fn new(raw: f64, n0: usize, n1: usize) -> Self {
        Self {
            raw,
            scaled: scale_factor(n0, n1) * raw,
        }
    }
}

pub fn scale_factor(n0: usize, n1: usize) -> f64 {
    let (a, b) = (n0 as f64, n1 as f64);
    a * b / (a + b)
}

/// `Σ_i a_i Σ_j b_j h(a_i, b_j)` over the supports of both samples.
fn directed_cross_sum<H>(a: &WeightedSample, b: &WeightedSample, h: &H) -> f64
where
    H: Fn(&[f64], &[f64]) -> f64 + ?Sized,
{
    let b_support: Vec<usize> = b.support().collect();
    a.support()
        .map(|i| {
            let inner: f64 = b_support
                .iter()
                .map(|&j| b.weights[j] * h(a.point(i), b.point(j)))
                .sum();
            a.weights[i] * inner
        })
        .sum()
}

// Both accumulation orders are averaged so the result is bitwise symmetric in
// (a, b) whenever h is.
fn cross_sum<H>(a: &WeightedSample, b: &WeightedSample, h: &H) -> f64
where
    H: Fn(&[f64], &[f64]) -> f64 + ?Sized,
{
    0.5 * (directed_cross_sum(a, b, h) + directed_cross_sum(b, a, h))
}

fn within_sums<H>(w: &WeightedSample, h: &H, exclude_diagonal: bool) -> (f64, f64)
where
    H: Fn(&[f64], &[f64]) -> f64 + ?Sized,
{
    let support: Vec<usize> = w.support().collect();
    let mut num = 0.0;
    let mut den = 0.0;
    for &i in &support {
        let mut inner = 0.0;
        let mut mass = 0.0;
        for &j in &support {
            if exclude_diagonal && i == j {
                continue;
            }
            inner += w.weights[j] * h(w.point(i), w.point(j));
            mass += w.weights[j];
        }
        num += w.weights[i] * inner;
        den += w.weights[i] * mass;
    }
    (num, den)
}

fn check_dims(w0: &WeightedSample, w1: &WeightedSample) -> Result<()> {
    if w0.dim() != w1.dim() {
        return Err(Error::DimensionMismatch {
            left: w0.dim(),
            right: w1.dim(),
        });
    }
    Ok(())
}

/// Weighted average of `h` over the cross product of the two samples, with
/// pair weights `W⁰_i W¹_j`.
pub fn cross_term<H>(w0: &WeightedSample, w1: &WeightedSample, h: H) -> Result<f64>
where
    H: Fn(&[f64], &[f64]) -> f64,
{
    check_dims(w0, w1)?;
    let den = w0.weight_sum * w1.weight_sum;
    if den.is_nan() || den <= 0.0 {
        return Err(Error::ZeroNormalizer("cross term"));
    }
    Ok(cross_sum(w0, w1, &h) / den)
}

/// Weighted average of `h` over pairs within one sample; the diagonal is
/// skipped for the U form.
pub fn within_term<H>(w: &WeightedSample, h: H, exclude_diagonal: bool) -> Result<f64>
where
    H: Fn(&[f64], &[f64]) -> f64,
{
    let (num, den) = within_sums(w, &h, exclude_diagonal);
    if den.is_nan() || den <= 0.0 {
        return Err(Error::ZeroNormalizer(if exclude_diagonal {
            "within term without diagonal (fewer than two events)"
        } else {
            "within term"
        }));
    }
    Ok(num / den)
}

/// The three ingredients of a statistic, before they are combined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Terms {
    pub cross: f64,
    pub within0: f64,
    pub within1: f64,
}

impl Terms {
    pub(crate) fn combine(&self, energy: bool) -> f64 {
        // within0 + within1 commutes exactly, keeping the result symmetric
        let within = self.within0 + self.within1;
        if energy {
            2.0 * self.cross - within
        } else {
            within - 2.0 * self.cross
        }
    }

    /// Size of the quantities that cancel; rounding in `combine` is relative to this.
    pub(crate) fn magnitude(&self) -> f64 {
        2.0 * self.cross.abs() + self.within0.abs() + self.within1.abs()
    }
}

fn terms<H>(form: Form, w0: &WeightedSample, w1: &WeightedSample, h: &H) -> Result<Terms>
where
    H: Fn(&[f64], &[f64]) -> f64,
{
    check_dims(w0, w1)?;
    Ok(match form {
        Form::UnnormalizedV => Terms {
            cross: cross_sum(w0, w1, h),
            within0: within_sums(w0, h, false).0,
            within1: within_sums(w1, h, false).0,
        },
        Form::V | Form::U => {
            let exclude = form == Form::U;
            Terms {
                cross: cross_term(w0, w1, h)?,
                within0: within_term(w0, h, exclude)?,
                within1: within_term(w1, h, exclude)?,
            }
        }
    })
}

/// Evaluates `spec` on two weighted samples. Kernel bandwidths must already
/// be concrete.
pub fn compute_statistic(
    spec: &StatisticSpec,
    w0: &WeightedSample,
    w1: &WeightedSample,
) -> Result<StatisticValue> {
    check_dims(w0, w1)?;
    let pair = spec.pair_fn(w0.dim())?;
    let h = |x: &[f64], y: &[f64]| pair.eval(x, y);
    let t = terms(spec.form, w0, w1, &h)?;
    Ok(StatisticValue::new(
        t.combine(spec.is_energy()),
        w0.len(),
        w1.len(),
    ))
}

/// Statistic on the event times alone; any covariates are ignored.
pub fn compute_statistic_univariate(spec: &StatisticSpec, data: &TwoSampleData) -> Result<StatisticValue> {
    let d = data.without_covariates();
    compute_statistic(spec, &weigh(&d.group0)?, &weigh(&d.group1)?)
}

/// Statistic on `(time, covariates)` vectors. Weights depend only on the
/// censored times.
pub fn compute_statistic_multivariate(spec: &StatisticSpec, data: &TwoSampleData) -> Result<StatisticValue> {
    if data.covariate_dim() == 0 {
        return Err(Error::InvalidInput(
            "multivariate statistic requires covariates".into(),
        ));
    }
    compute_statistic(spec, &weigh(&data.group0)?, &weigh(&data.group1)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CensoredSample;
    use crate::metrics::Bandwidth;

    fn ws(times: &[f64], events: &[bool]) -> WeightedSample {
        weigh(&CensoredSample::from_parts("g", times, events).unwrap()).unwrap()
    }

    fn all(times: &[f64]) -> WeightedSample {
        ws(times, &vec![true; times.len()])
    }

    fn abs_diff(x: &[f64], y: &[f64]) -> f64 {
        (x[0] - y[0]).abs()
    }

    #[test]
    fn cross_term_examples() {
        let a = all(&[0.0, 1.0]);
        let b = all(&[0.0, 2.0]);
        assert_eq!(cross_term(&a, &b, |_, _| 1.0).unwrap(), 1.0);
        // (0 + 2 + 1 + 1) / 4
        assert!((cross_term(&a, &b, abs_diff).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(
            cross_term(&a, &b, abs_diff).unwrap(),
            cross_term(&b, &a, abs_diff).unwrap()
        );
    }

    #[test]
    fn within_term_examples() {
        let a = all(&[0.0, 1.0]);
        assert!((within_term(&a, abs_diff, false).unwrap() - 0.5).abs() < 1e-15);
        assert!((within_term(&a, abs_diff, true).unwrap() - 1.0).abs() < 1e-15);
        let single = all(&[3.0]);
        assert_eq!(within_term(&single, |_, _| 7.0, false).unwrap(), 7.0);
        assert!(matches!(
            within_term(&single, abs_diff, true),
            Err(Error::ZeroNormalizer(_))
        ));
    }

    #[test]
    fn energy_examples() {
        let a = all(&[0.0, 1.0]);
        let b = all(&[0.0, 2.0]);
        let v = compute_statistic(&StatisticSpec::energy(Form::V, 1.0), &a, &b).unwrap();
        assert!((v.raw - 0.5).abs() < 1e-15);
        assert!((v.scaled - 0.5).abs() < 1e-15);
        let u = compute_statistic(&StatisticSpec::energy(Form::U, 1.0), &a, &b).unwrap();
        assert!((u.raw + 1.0).abs() < 1e-15);
    }

    #[test]
    fn identical_samples_give_zero() {
        let a = ws(&[0.5, 1.0, 2.0, 3.5], &[true, false, true, true]);
        let specs = [
            StatisticSpec::energy(Form::V, 1.0),
            StatisticSpec::energy(Form::V, 0.5),
            StatisticSpec::mmd(Form::V, KernelSpec::Gaussian { sigma: Bandwidth::Fixed(1.0) }),
            StatisticSpec::mmd(Form::V, KernelSpec::Laplacian { sigma: Bandwidth::Fixed(0.3) }),
        ];
        for s in specs {
            let v = compute_statistic(&s, &a, &a.clone()).unwrap();
            assert!(v.raw.abs() < 1e-12, "{s:?}: {}", v.raw);
        }
    }

    #[test]
    fn unnormalized_form_has_no_denominators() {
        // W⁰ = (1/2, 0) with mass 1/2, W¹ = (1/2, 1/2)
        let a = ws(&[1.0, 2.0], &[true, false]);
        let b = all(&[1.0, 3.0]);
        let s = StatisticSpec::energy(Form::UnnormalizedV, 1.0);
        // 2·(1/4·0 + 1/4·2) − 1/4·0 − 1/4·(0 + 2 + 2 + 0)
        let v = compute_statistic(&s, &a, &b).unwrap();
        assert!(v.raw.abs() < 1e-15, "{}", v.raw);
    }

    #[test]
    fn u_form_rejects_single_event_group() {
        let a = ws(&[1.0, 2.0], &[true, false]);
        let b = all(&[1.0, 3.0]);
        assert!(compute_statistic(&StatisticSpec::energy(Form::U, 1.0), &a, &b).is_err());
        assert!(compute_statistic(&StatisticSpec::energy(Form::V, 1.0), &a, &b).is_ok());
    }

    #[test]
    fn unresolved_kernel_is_rejected() {
        let a = all(&[1.0, 2.0]);
        let s = StatisticSpec::mmd(Form::V, KernelSpec::Gaussian { sigma: Bandwidth::Auto });
        assert!(matches!(
            compute_statistic(&s, &a, &a),
            Err(Error::UnresolvedBandwidth)
        ));
    }

    #[test]
    fn multivariate_requires_covariates() {
        let d = TwoSampleData::new(
            CensoredSample::from_parts("a", &[1.0, 2.0], &[true, true]).unwrap(),
            CensoredSample::from_parts("b", &[1.5, 2.5], &[true, true]).unwrap(),
        )
        .unwrap();
        let s = StatisticSpec::energy(Form::V, 1.0);
        assert!(compute_statistic_multivariate(&s, &d).is_err());
        assert!(compute_statistic_univariate(&s, &d).is_ok());
    }

    #[test]
    fn spec_serializes_flat() {
        let s = StatisticSpec::mmd(Form::V, KernelSpec::Laplacian { sigma: Bandwidth::Auto });
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(j, r#"{"form":"v","measure":"mmd","kernel":{"kind":"laplacian","sigma":"auto"}}"#);
        let back: StatisticSpec = serde_json::from_str(&j).unwrap();
        assert_eq!(back, s);
    }
}
