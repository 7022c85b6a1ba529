use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bandwidth::{BandwidthRule, BandwidthScaling, MedianVariant};
use crate::metrics::{Bandwidth, KernelSpec, MaternNu};
use crate::error::{Error, Result};
use crate::statistics::{Form, StatisticSpec};

#[derive(Debug, Parser)]
#[command(name = "survdist", version, about = "Distance and kernel two-sample tests for right-censored data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Worker threads; 0 picks one per core. Output does not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test whether two groups in a CSV file share a survival distribution.
    Test(TestArgs),
    /// Run a Monte Carlo study described by a scenario JSON file.
    Mc(McArgs),
    /// Power study on two digitized survival curves.
    CurveSim(CurveSimArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MeasureArg {
    Energy,
    Gaussian,
    Laplacian,
    RationalQuadratic,
    Matern,
    DistanceInduced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormArg {
    U,
    V,
    Unnormalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    /// Median over all pooled observations.
    All,
    /// Median over uncensored observations only.
    Uncensored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScalingArg {
    SqrtHalf,
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Auto,
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Args)]
pub struct BatteryArgs {
    /// Tests to run, repeatable or comma separated [default: energy,gaussian,laplacian]
    #[arg(long, value_enum, value_delimiter = ',')]
    pub measure: Vec<MeasureArg>,
    /// Distance exponent for energy and distance-induced kernels [default: 1]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Kernel bandwidth, a number or `auto` [default: auto]
    #[arg(long)]
    pub sigma: Option<Bandwidth>,
    /// Rational quadratic offset [default: 1]
    #[arg(long)]
    pub c: Option<f64>,
    /// Rational quadratic exponent [default: 1]
    #[arg(long)]
    pub beta: Option<f64>,
    /// Matérn smoothness: 0.5, 1.5 or 2.5 [default: 1.5]
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long, value_enum, default_value = "v")]
    pub form: FormArg,
    /// Observations entering the median heuristic.
    #[arg(long, value_enum, default_value = "uncensored")]
    pub bandwidth: VariantArg,
    /// σ = √(H/2) or σ = √H for median squared distance H.
    #[arg(long, value_enum, default_value = "sqrt-half")]
    pub scaling: ScalingArg,
}

#[derive(Debug, Clone, Args)]
pub struct PermutationArgs {
    /// Monte Carlo permutations.
    #[arg(long, default_value_t = crate::permutation::DEFAULT_PERMUTATIONS)]
    pub permutations: u64,
    /// Enumerate all assignments when there are at most this many.
    #[arg(long, default_value_t = crate::permutation::DEFAULT_EXACT_THRESHOLD as u64)]
    pub exact_threshold: u64,
    #[arg(long, value_enum, default_value = "auto")]
    pub mode: ModeArg,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Write here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Args)]
pub struct TestArgs {
    /// CSV with time, event and group columns.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "time")]
    pub time_col: String,
    #[arg(long, default_value = "event")]
    pub event_col: String,
    #[arg(long, default_value = "group")]
    pub group_col: String,
    /// Covariate columns appended to the time, comma separated, or `all`
    /// for every other column. Without it only times are compared.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    /// Z-score covariates over the pooled sample.
    #[arg(long)]
    pub standardize: bool,
    /// Censor everything beyond the end of the common support.
    #[arg(long, conflicts_with = "tau")]
    pub truncate: bool,
    /// Censor everything beyond this time.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Treat the largest time in each group as an event.
    #[arg(long)]
    pub last_uncensored: bool,
    /// Seed for all randomness; drawn at random and reported when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub battery: BatteryArgs,
    #[command(flatten)]
    pub permutation: PermutationArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct McArgs {
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Overrides the scenario's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CurveSimArgs {
    /// Survival curve CSV (`t,s`) for group 0.
    #[arg(long)]
    pub curve0: PathBuf,
    /// Survival curve CSV (`t,s`) for group 1.
    #[arg(long)]
    pub curve1: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub n0: usize,
    #[arg(long, default_value_t = 100)]
    pub n1: usize,
    #[arg(long, default_value_t = 500)]
    pub replications: usize,
    /// Censoring bound as a multiple of the common support end.
    #[arg(long, default_value_t = crate::simulation::censoring::DEFAULT_SUPPORT_MULTIPLIER, conflicts_with_all = ["censoring_rate", "no_censoring"])]
    pub multiplier: f64,
    /// Calibrate uniform censoring to this expected censored fraction instead.
    #[arg(long, conflicts_with = "no_censoring")]
    pub censoring_rate: Option<f64>,
    #[arg(long)]
    pub no_censoring: bool,
    /// Level at which rejections are counted.
    #[arg(long, default_value_t = crate::simulation::harness::DEFAULT_ALPHA_LEVEL)]
    pub alpha_level: f64,
    /// Hazard ratios applied to group 1, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub theta: Vec<f64>,
    /// Per-group sample sizes to sweep, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub grid_n: Vec<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub battery: BatteryArgs,
    #[arg(long, default_value_t = crate::permutation::DEFAULT_PERMUTATIONS)]
    pub permutations: u64,
    #[command(flatten)]
    pub out: OutputArgs,
}

impl BatteryArgs {
    pub fn form(&self) -> Form {
        match self.form {
            FormArg::U => Form::U,
            FormArg::V => Form::V,
            FormArg::Unnormalized => Form::UnnormalizedV,
        }
    }

    pub fn rule(&self) -> BandwidthRule {
        BandwidthRule {
            variant: match self.bandwidth {
                VariantArg::All => MedianVariant::MedianOverAll,
                VariantArg::Uncensored => MedianVariant::MedianUncensoredOnly,
            },
            scaling: match self.scaling {
                ScalingArg::SqrtHalf => BandwidthScaling::SqrtHalf,
                ScalingArg::Sqrt => BandwidthScaling::Sqrt,
            },
        }
    }

    fn measures(&self) -> Vec<MeasureArg> {
        if self.measure.is_empty() {
            vec![MeasureArg::Energy, MeasureArg::Gaussian, MeasureArg::Laplacian]
        } else {
            let mut seen = Vec::new();
            for m in &self.measure {
                if !seen.contains(m) {
                    seen.push(*m);
                }
            }
            seen
        }
    }

    /// The requested tests, after checking that every parameter flag is
    /// used by at least one of them.
    pub fn specs(&self) -> Result<Vec<StatisticSpec>> {
        use MeasureArg::*;
        let measures = self.measures();
        let uses = |set: &[MeasureArg]| measures.iter().any(|m| set.contains(m));
        let unused = |flag: &str, who: &str| {
            Err(Error::InvalidParameter(format!("--{flag} only applies to {who}")))
        };
        if self.alpha.is_some() && !uses(&[Energy, DistanceInduced]) {
            return unused("alpha", "energy and distance-induced measures");
        }
        if self.sigma.is_some() && !uses(&[Gaussian, Laplacian, Matern]) {
            return unused("sigma", "gaussian, laplacian and matern kernels");
        }
        if (self.c.is_some() || self.beta.is_some()) && !uses(&[RationalQuadratic]) {
            return unused(if self.c.is_some() { "c" } else { "beta" }, "the rational-quadratic kernel");
        }
        if self.nu.is_some() && !uses(&[Matern]) {
            return unused("nu", "the matern kernel");
        }
        let form = self.form();
        let alpha = self.alpha.unwrap_or(1.0);
        let sigma = self.sigma.unwrap_or(Bandwidth::Auto);
        let specs: Vec<StatisticSpec> = measures
            .iter()
            .map(|m| {
                Ok(match m {
                    Energy => StatisticSpec::energy(form, alpha),
                    Gaussian => StatisticSpec::mmd(form, KernelSpec::Gaussian { sigma }),
                    Laplacian => StatisticSpec::mmd(form, KernelSpec::Laplacian { sigma }),
                    RationalQuadratic => StatisticSpec::mmd(
                        form,
                        KernelSpec::RationalQuadratic {
                            c: self.c.unwrap_or(1.0),
                            beta: self.beta.unwrap_or(1.0),
                        },
                    ),
                    Matern => StatisticSpec::mmd(
                        form,
                        KernelSpec::Matern {
                            nu: MaternNu::from_value(self.nu.unwrap_or(1.5))?,
                            sigma,
                        },
                    ),
                    DistanceInduced => StatisticSpec::mmd(
                        form,
                        KernelSpec::DistanceInduced {
                            alpha,
                            origin: Vec::new(),
                        },
                    ),
                })
            })
            .collect::<Result<_>>()?;
        for s in &specs {
            s.validate()?;
        }
        Ok(specs)
    }
}
