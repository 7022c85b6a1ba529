//! Monte Carlo studies of rejection rates and p-value moments.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::censoring::{apply_censoring, CensoringLaw, CensoringModel};
use super::generators::LifetimeGenerator;
use crate::bandwidth::BandwidthRule;
use crate::data::TwoSampleData;
use crate::error::{Error, Result};
use crate::permutation::{permutation_battery, resolve_bandwidths, PermutationPlan, DEFAULT_EXACT_THRESHOLD, DEFAULT_PERMUTATIONS};
use crate::rng::{derive_seed, stream};
use crate::statistics::StatisticSpec;

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_ALPHA_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    #[serde(flatten)]
    pub spec: StatisticSpec,
    #[serde(default)]
    pub bandwidth_rule: BandwidthRule,
}

impl From<StatisticSpec> for TestConfig {
    fn from(spec: StatisticSpec) -> Self {
        Self {
            spec,
            bandwidth_rule: BandwidthRule::default(),
        }
    }
}

/// Optional sweep. Each `theta` multiplies the hazard of group 1; each `n`
/// sets both group sizes. Empty lists keep the scenario's own values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    #[serde(default)]
    pub theta: Vec<f64>,
    #[serde(default)]
    pub n: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub schema_version: u32,
    pub group0: LifetimeGenerator,
    pub group1: LifetimeGenerator,
    pub censoring: CensoringModel,
    pub n0: usize,
    pub n1: usize,
    pub replications: usize,
    #[serde(default = "default_permutations")]
    pub permutations: u64,
    #[serde(default = "default_exact_threshold")]
    pub exact_threshold: u64,
    #[serde(default = "default_alpha_level")]
    pub alpha_level: f64,
    pub seed: u64,
    pub tests: Vec<TestConfig>,
    #[serde(default)]
    pub grid: Grid,
}

fn default_permutations() -> u64 {
    DEFAULT_PERMUTATIONS
}

fn default_exact_threshold() -> u64 {
    DEFAULT_EXACT_THRESHOLD as u64
}

fn default_alpha_level() -> f64 {
    DEFAULT_ALPHA_LEVEL
}

impl ScenarioSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let spec: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            Error::InvalidInput(format!("scenario field `{}`: {}", e.path(), e.inner()))
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.schema_version != SCENARIO_SCHEMA_VERSION {
            return bad(format!(
                "scenario field `schema_version`: unsupported version {}, expected {SCENARIO_SCHEMA_VERSION}",
                self.schema_version
            ));
        }
        if self.n0 < 2 || self.n1 < 2 {
            return bad("scenario fields `n0`, `n1`: group sizes must be at least 2".into());
        }
        if self.replications == 0 {
            return bad("scenario field `replications`: must be at least 1".into());
        }
        if self.permutations == 0 {
            return bad("scenario field `permutations`: must be at least 1".into());
        }
        if !(self.alpha_level > 0.0 && self.alpha_level < 1.0) {
            return bad(format!("scenario field `alpha_level`: must lie in (0, 1), got {}", self.alpha_level));
        }
        if self.tests.is_empty() {
            return bad("scenario field `tests`: at least one test is required".into());
        }
        for (i, t) in self.tests.iter().enumerate() {
            t.spec
                .validate()
                .map_err(|e| Error::InvalidInput(format!("scenario field `tests[{i}]`: {e}")))?;
        }
        let field = |name: &'static str| move |e: Error| Error::InvalidInput(format!("scenario field `{name}`: {e}"));
        self.group0.validate().map_err(field("group0"))?;
        self.group1.validate().map_err(field("group1"))?;
        self.censoring.validate().map_err(field("censoring"))?;
        for &theta in &self.grid.theta {
            self.group1.with_hazard_ratio(theta).map_err(field("grid.theta"))?;
        }
        if self.grid.n.iter().any(|&n| n < 2) {
            return bad("scenario field `grid.n`: group sizes must be at least 2".into());
        }
        Ok(())
    }

    fn cells(&self) -> Vec<(f64, usize, usize)> {
        let thetas = if self.grid.theta.is_empty() { vec![1.0] } else { self.grid.theta.clone() };
        let sizes: Vec<(usize, usize)> = if self.grid.n.is_empty() {
            vec![(self.n0, self.n1)]
        } else {
            self.grid.n.iter().map(|&n| (n, n)).collect()
        };
        thetas
            .iter()
            .flat_map(|&t| sizes.iter().map(move |&(a, b)| (t, a, b)))
            .collect()
    }
}

/// One line of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub test: String,
    pub form: String,
    pub measure: String,
    pub params: String,
    pub theta: f64,
    pub n0: usize,
    pub n1: usize,
    /// Fraction of effective replications with `p <= alpha_level`.
    pub rejection_rate: Option<f64>,
    pub mean_p: Option<f64>,
    /// Sample standard deviation (denominator `n_effective - 1`).
    pub sd_p: Option<f64>,
    pub n_effective: usize,
    /// Replications dropped because the data could not support a statistic,
    /// e.g. a group without events.
    pub n_excluded: usize,
}

/// Errors that make a single replication unusable rather than the study invalid.
fn is_sparse_data(e: &Error) -> bool {
    matches!(
        e,
        Error::NoEvents { .. }
            | Error::ZeroNormalizer(_)
            | Error::DegeneratePermutations { .. }
            | Error::DegenerateBandwidth(_)
    )
}

/// Draws one replication's data. Group 0 uses stream 0 and 2, group 1 streams 1 and 3.
pub fn draw_replication(
    g0: &LifetimeGenerator,
    g1: &LifetimeGenerator,
    n0: usize,
    n1: usize,
    law: CensoringLaw,
    seed: u64,
) -> Result<TwoSampleData> {
    let t0 = g0.sample(n0, &mut stream(seed, 0))?;
    let t1 = g1.sample(n1, &mut stream(seed, 1))?;
    let s0 = apply_censoring("group0", &t0, law, &mut stream(seed, 2))?;
    let s1 = apply_censoring("group1", &t1, law, &mut stream(seed, 3))?;
    TwoSampleData::new(s0, s1)
}

/// p-values of every test on one replication, or `None` when excluded.
fn replicate(
    data: &TwoSampleData,
    tests: &[TestConfig],
    plan: &PermutationPlan,
) -> Result<Option<Vec<f64>>> {
    let run = || -> Result<Vec<f64>> {
        let mut specs = Vec::with_capacity(tests.len());
        for t in tests {
            let (s, _) = resolve_bandwidths(data, std::slice::from_ref(&t.spec), t.bandwidth_rule)?
                .pop()
                .expect("one spec");
            specs.push(s);
        }
        Ok(permutation_battery(data, &specs, plan, BandwidthRule::default())?
            .iter()
            .map(|r| r.p_value)
            .collect())
    };
    match run() {
        Ok(p) => Ok(Some(p)),
        Err(e) if is_sparse_data(&e) => Ok(None),
        Err(e) => Err(e),
    }
}

fn summarize(p: &[f64], alpha_level: f64) -> (Option<f64>, Option<f64>, Option<f64>) {
    let n = p.len();
    if n == 0 {
        return (None, None, None);
    }
    let rejections = p.iter().filter(|&&v| v <= alpha_level).count();
    let mean = p.iter().sum::<f64>() / n as f64;
    let sd = (n > 1).then(|| (p.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
    (Some(rejections as f64 / n as f64), Some(mean), sd)
}

/// Runs every cell of the scenario. Rows are ordered by theta, then group
/// size, then test. Identical scenarios give identical tables.
pub fn run_monte_carlo(s: &ScenarioSpec) -> Result<Vec<McRow>> {
    s.validate()?;
    let mut rows = Vec::new();
    for (cell, (theta, n0, n1)) in s.cells().into_iter().enumerate() {
        let g1 = s.group1.with_hazard_ratio(theta)?;
        let law = s.censoring.calibrate(&s.group0, &g1, n0, n1)?;
        let outcomes = (0..s.replications)
            .into_par_iter()
            .map(|r| {
                let seed = derive_seed(s.seed, cell as u64, r as u64);
                let data = draw_replication(&s.group0, &g1, n0, n1, law, seed)?;
                let plan = PermutationPlan {
                    mode: crate::permutation::PlanMode::Auto {
                        permutations: s.permutations,
                    },
                    seed: derive_seed(seed, u64::MAX, 0),
                    exact_threshold: s.exact_threshold as u128,
                };
                replicate(&data, &s.tests, &plan)
            })
            .collect::<Result<Vec<_>>>()?;
        let kept: Vec<&Vec<f64>> = outcomes.iter().flatten().collect();
        let n_excluded = outcomes.len() - kept.len();
        for (k, t) in s.tests.iter().enumerate() {
            let p: Vec<f64> = kept.iter().map(|v| v[k]).collect();
            let (rejection_rate, mean_p, sd_p) = summarize(&p, s.alpha_level);
            rows.push(McRow {
                test: t.spec.measure_name().to_string(),
                form: t.spec.form.name().to_string(),
                measure: if t.spec.is_energy() { "energy" } else { "mmd" }.to_string(),
                params: t.spec.params(),
                theta,
                n0,
                n1,
                rejection_rate,
                mean_p,
                sd_p,
                n_effective: p.len(),
                n_excluded,
            });
        }
    }
    Ok(rows)
}

pub fn write_table_csv<W: Write>(rows: &[McRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record([
            "test", "form", "measure", "params", "theta", "n0", "n1", "rejection_rate", "mean_p", "sd_p",
            "n_effective", "n_excluded",
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{Bandwidth, KernelSpec};
    use crate::statistics::Form;

    fn scenario() -> ScenarioSpec {
        ScenarioSpec {
            schema_version: 1,
            group0: LifetimeGenerator::Exponential { rate: 1.0 },
            group1: LifetimeGenerator::Exponential { rate: 1.0 },
            censoring: CensoringModel::TargetRate { rate: 0.2 },
            n0: 6,
            n1: 6,
            replications: 12,
            permutations: 99,
            exact_threshold: 0,
            alpha_level: 0.05,
            seed: 17,
            tests: vec![
                StatisticSpec::energy(Form::V, 1.0).into(),
                StatisticSpec::mmd(Form::V, KernelSpec::Gaussian { sigma: Bandwidth::Auto }).into(),
            ],
            grid: Grid::default(),
        }
    }

    #[test]
    fn deterministic_table() {
        let s = scenario();
        let a = run_monte_carlo(&s).unwrap();
        let b = run_monte_carlo(&s).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].n_effective + a[0].n_excluded, 12);
        assert_eq!(a[1].test, "gaussian");
        assert_eq!(a[1].params, "sigma=auto");
    }

    #[test]
    fn grid_rows() {
        let mut s = scenario();
        s.grid.theta = vec![1.0, 1.5, 2.0];
        s.grid.n = vec![4, 5];
        s.replications = 3;
        let rows = run_monte_carlo(&s).unwrap();
        assert_eq!(rows.len(), 3 * 2 * 2);
        assert_eq!((rows[0].theta, rows[0].n0), (1.0, 4));
        assert_eq!((rows[11].theta, rows[11].n1), (2.0, 5));
    }

    #[test]
    fn all_censored_replications_are_excluded() {
        let mut s = scenario();
        s.n0 = 2;
        s.n1 = 2;
        s.censoring = CensoringModel::TargetRate { rate: 0.9 };
        s.replications = 30;
        let rows = run_monte_carlo(&s).unwrap();
        assert!(rows[0].n_excluded > 0);
        assert_eq!(rows[0].n_effective + rows[0].n_excluded, 30);
    }

    #[test]
    fn summaries() {
        let (r, m, sd) = summarize(&[0.01, 0.5, 0.04, 1.0], 0.05);
        assert_eq!(r, Some(0.5));
        assert!((m.unwrap() - 0.3875).abs() < 1e-15);
        let expect = ((0.3775f64.powi(2) + 0.1125f64.powi(2) + 0.3475f64.powi(2) + 0.6125f64.powi(2)) / 3.0).sqrt();
        assert!((sd.unwrap() - expect).abs() < 1e-12);
        assert_eq!(summarize(&[], 0.05), (None, None, None));
        assert_eq!(summarize(&[0.2], 0.05).2, None);
    }

    #[test]
    fn schema_errors_name_fields() {
        let err = ScenarioSpec::from_json(r#"{"schema_version":1,"group0":{"dist":"exponential","rate":"x"}}"#).unwrap_err();
        assert!(err.to_string().contains("group0"), "{err}");
        let mut s = scenario();
        s.replications = 0;
        let text = serde_json::to_string(&s).unwrap();
        let err = ScenarioSpec::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("replications"), "{err}");
        let mut s = scenario();
        s.grid.theta = vec![2.0];
        s.group1 = LifetimeGenerator::Gamma { shape: 2.0, scale: 1.0 };
        let err = ScenarioSpec::from_json(&serde_json::to_string(&s).unwrap()).unwrap_err();
        assert!(err.to_string().contains("grid.theta"), "{err}");
    }

    #[test]
    fn json_round_trip() {
        let s = scenario();
        let back = ScenarioSpec::from_json(&serde_json::to_string_pretty(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn csv_has_header_and_blank_missing_values() {
        let row = McRow {
            test: "energy".into(),
            form: "v".into(),
            measure: "energy".into(),
            params: "alpha=1".into(),
            theta: 1.0,
            n0: 3,
            n1: 3,
            rejection_rate: None,
            mean_p: None,
            sd_p: None,
            n_effective: 0,
            n_excluded: 4,
        };
        let mut out = Vec::new();
        write_table_csv(&[row], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "test,form,measure,params,theta,n0,n1,rejection_rate,mean_p,sd_p,n_effective,n_excluded\nenergy,v,energy,alpha=1,1.0,3,3,,,,0,4\n"
        );
    }
}
