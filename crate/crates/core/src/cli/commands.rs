use serde::Serialize;

use super::args::{CurveSimArgs, McArgs, ModeArg, OutputArgs, OutputFormat, TestArgs};
use crate::bandwidth::BandwidthRule;
use crate::data::{read_csv, truncate, CsvSchema, TwoSampleData};
use crate::error::{Error, Result};
use crate::permutation::{permutation_battery, PermutationPlan, PlanMode, TestResult};
use crate::simulation::curve::{read_curve_csv, truncate_to_common_support};
use crate::simulation::harness::{run_monte_carlo, write_table_csv, Grid, McRow, ScenarioSpec, TestConfig, SCENARIO_SCHEMA_VERSION};
use crate::simulation::{CensoringModel, LifetimeGenerator};

pub const OUTPUT_SCHEMA_VERSION: u32 = 1;
/// Level for the `reject` column of `test` output.
pub const REPORT_LEVEL: f64 = 0.05;

fn seed_or_random(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("seed: {s}");
        s
    })
}

#[derive(Serialize)]
struct Preprocessing {
    covariates: Vec<String>,
    standardize: bool,
    truncated_at: Option<f64>,
    last_uncensored: bool,
}

#[derive(Serialize)]
struct ResultEntry {
    #[serde(flatten)]
    result: TestResult,
    reject: bool,
}

#[derive(Serialize)]
struct TestDocument {
    schema_version: u32,
    command: &'static str,
    seed: u64,
    groups: [String; 2],
    group_sizes: (usize, usize),
    events: (usize, usize),
    preprocessing: Preprocessing,
    bandwidth_rule: BandwidthRule,
    report_level: f64,
    results: Vec<ResultEntry>,
}

#[derive(Serialize)]
struct TestCsvRow<'a> {
    test: &'a str,
    form: &'a str,
    measure: &'a str,
    params: String,
    statistic: f64,
    scaled_statistic: f64,
    p_value: f64,
    sigma_used: Option<f64>,
    mode: &'a str,
    n_permutations: u64,
    exceedances: u64,
    degenerate_permutations: u64,
    reject: bool,
    seed: u64,
}

fn load_test_data(args: &TestArgs) -> Result<(TwoSampleData, Preprocessing)> {
    let all = args.covariates.len() == 1 && args.covariates[0].eq_ignore_ascii_case("all");
    let schema = CsvSchema {
        time: args.time_col.clone(),
        event: args.event_col.clone(),
        group: args.group_col.clone(),
        covariates: if all { None } else { Some(args.covariates.clone()) },
    };
    let mut data = read_csv(&args.input, &schema)?;
    if args.standardize {
        if data.covariate_dim() == 0 {
            return Err(Error::InvalidParameter("--standardize needs --covariates".into()));
        }
        data = data.standardize_covariates();
    }
    let tau = if args.truncate { Some(data.common_support_end()) } else { args.tau };
    if let Some(tau) = tau {
        data = truncate(&data, tau)?;
    }
    if args.last_uncensored {
        data = data.mark_last_uncensored();
    }
    let covariates = if all {
        let header = csv::Reader::from_path(&args.input)?.headers()?.clone();
        header
            .iter()
            .map(str::trim)
            .filter(|h| ![&args.time_col, &args.event_col, &args.group_col].contains(&&h.to_string()))
            .map(String::from)
            .collect()
    } else {
        args.covariates.clone()
    };
    Ok((
        data,
        Preprocessing {
            covariates,
            standardize: args.standardize,
            truncated_at: tau,
            last_uncensored: args.last_uncensored,
        },
    ))
}

pub fn cmd_test(args: &TestArgs) -> Result<String> {
    let specs = args.battery.specs()?;
    let rule = args.battery.rule();
    let (data, preprocessing) = load_test_data(args)?;
    let seed = seed_or_random(args.seed);
    let p = &args.permutation;
    let mode = match p.mode {
        ModeArg::Auto => PlanMode::Auto { permutations: p.permutations },
        ModeArg::Exact => PlanMode::Exact,
        ModeArg::MonteCarlo => PlanMode::MonteCarlo { permutations: p.permutations },
    };
    let plan = PermutationPlan {
        mode,
        seed,
        exact_threshold: p.exact_threshold as u128,
    };
    let results = permutation_battery(&data, &specs, &plan, rule)?;
    match args.out.format {
        OutputFormat::Json => {
            let doc = TestDocument {
                schema_version: OUTPUT_SCHEMA_VERSION,
                command: "test",
                seed,
                groups: [data.group0.label.clone(), data.group1.label.clone()],
                group_sizes: data.sizes(),
                events: (data.group0.n_events(), data.group1.n_events()),
                preprocessing,
                bandwidth_rule: rule,
                report_level: REPORT_LEVEL,
                results: results
                    .into_iter()
                    .map(|r| ResultEntry {
                        reject: r.p_value <= REPORT_LEVEL,
                        result: r,
                    })
                    .collect(),
            };
            Ok(serde_json::to_string_pretty(&doc)? + "\n")
        }
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in &results {
                w.serialize(TestCsvRow {
                    test: r.spec.measure_name(),
                    form: r.spec.form.name(),
                    measure: if r.spec.is_energy() { "energy" } else { "mmd" },
                    params: r.spec.params(),
                    statistic: r.statistic.raw,
                    scaled_statistic: r.statistic.scaled,
                    p_value: r.p_value,
                    sigma_used: r.sigma_used,
                    mode: match r.mode {
                        crate::permutation::ResolvedMode::Exact => "exact",
                        crate::permutation::ResolvedMode::MonteCarlo => "monte_carlo",
                    },
                    n_permutations: r.n_permutations_used,
                    exceedances: r.exceedances,
                    degenerate_permutations: r.degenerate_permutations,
                    reject: r.p_value <= REPORT_LEVEL,
                    seed,
                })?;
            }
            csv_string(w)
        }
    }
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Serialize)]
struct McDocument<'a> {
    schema_version: u32,
    command: &'static str,
    seed: u64,
    scenario: &'a ScenarioSpec,
    rows: Vec<McRow>,
}

fn render_table(command: &'static str, scenario: &ScenarioSpec, rows: Vec<McRow>, format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Json => {
            let doc = McDocument {
                schema_version: OUTPUT_SCHEMA_VERSION,
                command,
                seed: scenario.seed,
                scenario,
                rows,
            };
            Ok(serde_json::to_string_pretty(&doc)? + "\n")
        }
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            write_table_csv(&rows, &mut buf)?;
            Ok(String::from_utf8(buf).expect("csv output is utf-8"))
        }
    }
}

pub fn cmd_mc(args: &McArgs) -> Result<String> {
    let text = std::fs::read_to_string(&args.scenario)?;
    let mut scenario = ScenarioSpec::from_json(&text)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let rows = run_monte_carlo(&scenario)?;
    render_table("mc", &scenario, rows, args.out.format)
}

pub fn cmd_curve_sim(args: &CurveSimArgs) -> Result<String> {
    let specs = args.battery.specs()?;
    let rule = args.battery.rule();
    let c0 = read_curve_csv(&args.curve0)?;
    let c1 = read_curve_csv(&args.curve1)?;
    let (c0, c1) = truncate_to_common_support(&c0, &c1)?;
    let censoring = if args.no_censoring {
        CensoringModel::None
    } else if let Some(rate) = args.censoring_rate {
        CensoringModel::TargetRate { rate }
    } else {
        CensoringModel::UniformOnSupport {
            multiplier: args.multiplier,
        }
    };
    let scenario = ScenarioSpec {
        schema_version: SCENARIO_SCHEMA_VERSION,
        group0: LifetimeGenerator::Curve { curve: c0 },
        group1: LifetimeGenerator::Curve { curve: c1 },
        censoring,
        n0: args.n0,
        n1: args.n1,
        replications: args.replications,
        permutations: args.permutations,
        exact_threshold: crate::permutation::DEFAULT_EXACT_THRESHOLD as u64,
        alpha_level: args.alpha_level,
        seed: seed_or_random(args.seed),
        tests: specs
            .into_iter()
            .map(|spec| TestConfig {
                spec,
                bandwidth_rule: rule,
            })
            .collect(),
        grid: Grid {
            theta: args.theta.clone(),
            n: args.grid_n.clone(),
        },
    };
    scenario.validate()?;
    let rows = run_monte_carlo(&scenario)?;
    render_table("curve-sim", &scenario, rows, args.out.format)
}

/// Writes the finished document, to a file only once it is complete.
pub fn emit(out: &OutputArgs, document: &str) -> Result<()> {
    match &out.output {
        Some(path) => std::fs::write(path, document)?,
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(document.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}
