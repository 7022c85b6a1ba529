//! Censored two-sample data: construction, CSV ingestion, ordering and the
//! preprocessing transforms applied before a test is run.
//!
//! The canonical CSV layout is `time,event,group[,cov1..covk]` with a header
//! row. `event` is `1` for an observed event and `0` for a censored time.
//! Exactly two distinct group labels must appear; the first label seen in the
//! file becomes group 0.

use std::cmp::Ordering;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One subject: observed time `min(T, C)`, event indicator and optional covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensoredObservation {
    pub time: f64,
    pub event: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub covariates: Vec<f64>,
}

impl CensoredObservation {
    pub fn new(time: f64, event: bool) -> Result<Self> {
        Self::with_covariates(time, event, Vec::new())
    }

    pub fn with_covariates(time: f64, event: bool, covariates: Vec<f64>) -> Result<Self> {
        if !time.is_finite() || time < 0.0 {
            return Err(Error::InvalidInput(format!(
                "time must be finite and nonnegative, got {time}"
            )));
        }
        if let Some(c) = covariates.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite covariate {c}")));
        }
        Ok(Self {
            time,
            event,
            covariates,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensoredSample {
    pub label: String,
    observations: Vec<CensoredObservation>,
}

impl CensoredSample {
    pub fn new(label: impl Into<String>, observations: Vec<CensoredObservation>) -> Result<Self> {
        let label = label.into();
        let Some(first) = observations.first() else {
            return Err(Error::InvalidInput(format!("group '{label}' is empty")));
        };
        let dim = first.covariates.len();
        if let Some(bad) = observations.iter().find(|o| o.covariates.len() != dim) {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: bad.covariates.len(),
            });
        }
        Ok(Self {
            label,
            observations,
        })
    }

    /// Builds a univariate sample from parallel time/event slices.
    pub fn from_parts(label: impl Into<String>, times: &[f64], events: &[bool]) -> Result<Self> {
        if times.len() != events.len() {
            return Err(Error::DimensionMismatch {
                left: times.len(),
                right: events.len(),
            });
        }
        let obs = times
            .iter()
            .zip(events)
            .map(|(&t, &e)| CensoredObservation::new(t, e))
            .collect::<Result<Vec<_>>>()?;
        Self::new(label, obs)
    }

    pub fn observations(&self) -> &[CensoredObservation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn covariate_dim(&self) -> usize {
        self.observations[0].covariates.len()
    }

    pub fn n_events(&self) -> usize {
        self.observations.iter().filter(|o| o.event).count()
    }

    pub fn max_time(&self) -> f64 {
        self.observations
            .iter()
            .map(|o| o.time)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn times(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.time).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.observations.iter().map(|o| o.event).collect()
    }

    fn map_observations(&self, f: impl Fn(&CensoredObservation) -> CensoredObservation) -> Self {
        Self {
            label: self.label.clone(),
            observations: self.observations.iter().map(f).collect(),
        }
    }
}

/// Ordering used everywhere a sample is sorted: ascending time, and at equal
/// times events before censorings. Callers rely on the sort being stable.
pub(crate) fn tie_rule(a: (f64, bool), b: (f64, bool)) -> Ordering {
    a.0.total_cmp(&b.0).then_with(|| b.1.cmp(&a.1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderedSample {
    pub sample: CensoredSample,
    /// `original_index[k]` is the position in the input of the k-th ordered observation.
    pub original_index: Vec<usize>,
}

pub fn order_sample(sample: &CensoredSample) -> OrderedSample {
    let obs = sample.observations();
    let mut idx: Vec<usize> = (0..obs.len()).collect();
    idx.sort_by(|&a, &b| tie_rule((obs[a].time, obs[a].event), (obs[b].time, obs[b].event)));
    let observations = idx.iter().map(|&i| obs[i].clone()).collect();
    OrderedSample {
        sample: CensoredSample {
            label: sample.label.clone(),
            observations,
        },
        original_index: idx,
    }
}

/// Sets the event flag of the observation that sorts last, so the
/// Kaplan-Meier weights of the sample sum to one.
pub fn mark_last_uncensored(sample: &CensoredSample) -> CensoredSample {
    let ordered = order_sample(sample);
    let last = *ordered
        .original_index
        .last()
        .expect("CensoredSample is never empty");
    let mut out = sample.clone();
    out.observations[last].event = true;
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoSampleData {
    pub group0: CensoredSample,
    pub group1: CensoredSample,
}

impl TwoSampleData {
    pub fn new(group0: CensoredSample, group1: CensoredSample) -> Result<Self> {
        if group0.covariate_dim() != group1.covariate_dim() {
            return Err(Error::DimensionMismatch {
                left: group0.covariate_dim(),
                right: group1.covariate_dim(),
            });
        }
        Ok(Self { group0, group1 })
    }

    pub fn sizes(&self) -> (usize, usize) {
        (self.group0.len(), self.group1.len())
    }

    pub fn covariate_dim(&self) -> usize {
        self.group0.covariate_dim()
    }

    /// Observations of both groups, group 0 first, each in input order.
    pub fn pooled(&self) -> impl Iterator<Item = &CensoredObservation> {
        self.group0
            .observations()
            .iter()
            .chain(self.group1.observations())
    }

    pub fn without_covariates(&self) -> Self {
        let strip = |o: &CensoredObservation| CensoredObservation {
            time: o.time,
            event: o.event,
            covariates: Vec::new(),
        };
        Self {
            group0: self.group0.map_observations(strip),
            group1: self.group1.map_observations(strip),
        }
    }

    /// Smallest of the two group maxima; the default truncation point.
    pub fn common_support_end(&self) -> f64 {
        self.group0.max_time().min(self.group1.max_time())
    }

    pub fn mark_last_uncensored(&self) -> Self {
        Self {
            group0: mark_last_uncensored(&self.group0),
            group1: mark_last_uncensored(&self.group1),
        }
    }

    /// Z-scores every covariate column over the pooled sample. Columns with
    /// zero spread are only centred.
    pub fn standardize_covariates(&self) -> Self {
        let dim = self.covariate_dim();
        if dim == 0 {
            return self.clone();
        }
        let n = (self.group0.len() + self.group1.len()) as f64;
        let mut mean = vec![0.0; dim];
        for o in self.pooled() {
            for (m, c) in mean.iter_mut().zip(&o.covariates) {
                *m += c / n;
            }
        }
        let mut sd = vec![0.0; dim];
        for o in self.pooled() {
            for ((s, c), m) in sd.iter_mut().zip(&o.covariates).zip(&mean) {
                *s += (c - m) * (c - m);
            }
        }
        for s in sd.iter_mut() {
            *s = if n > 1.0 { (*s / (n - 1.0)).sqrt() } else { 0.0 };
        }
        let scale = |o: &CensoredObservation| CensoredObservation {
            time: o.time,
            event: o.event,
            covariates: o
                .covariates
                .iter()
                .zip(mean.iter().zip(&sd))
                .map(|(c, (m, s))| if *s > 0.0 { (c - m) / s } else { c - m })
                .collect(),
        };
        Self {
            group0: self.group0.map_observations(scale),
            group1: self.group1.map_observations(scale),
        }
    }
}

/// Replaces every time beyond `tau` with a censoring at `tau`.
pub fn truncate(data: &TwoSampleData, tau: f64) -> Result<TwoSampleData> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "truncation point must be positive and finite, got {tau}"
        )));
    }
    let cut = |o: &CensoredObservation| {
        if o.time > tau {
            CensoredObservation {
                time: tau,
                event: false,
                covariates: o.covariates.clone(),
            }
        } else {
            o.clone()
        }
    };
    Ok(TwoSampleData {
        group0: data.group0.map_observations(cut),
        group1: data.group1.map_observations(cut),
    })
}

/// Column mapping for [`read_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    pub time: String,
    pub event: String,
    pub group: String,
    /// `None` takes every remaining column, in header order.
    pub covariates: Option<Vec<String>>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            time: "time".into(),
            event: "event".into(),
            group: "group".into(),
            covariates: None,
        }
    }
}

pub fn read_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<TwoSampleData> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv_from(file, schema)
}

pub fn read_csv_from<R: Read>(reader: R, schema: &CsvSchema) -> Result<TwoSampleData> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidInput(format!("missing column '{name}'")))
    };
    let time_col = column(&schema.time)?;
    let event_col = column(&schema.event)?;
    let group_col = column(&schema.group)?;
    let cov_cols: Vec<usize> = match &schema.covariates {
        Some(names) => names.iter().map(|n| column(n)).collect::<Result<_>>()?,
        None => (0..headers.len())
            .filter(|c| ![time_col, event_col, group_col].contains(c))
            .collect(),
    };

    let mut labels: Vec<String> = Vec::new();
    let mut groups: Vec<Vec<CensoredObservation>> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        // header is line 1
        let row = i + 2;
        let record = record?;
        let field = |c: usize| record.get(c).unwrap_or("");
        let time: f64 = field(time_col).parse().map_err(|_| Error::Parse {
            row,
            message: format!("non-numeric time '{}'", field(time_col)),
        })?;
        if time < 0.0 || !time.is_finite() {
            return Err(Error::Parse {
                row,
                message: format!("time must be finite and nonnegative, got {time}"),
            });
        }
        let event = match field(event_col) {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::Parse {
                    row,
                    message: format!("event must be 0 or 1, got '{other}'"),
                })
            }
        };
        let covariates = cov_cols
            .iter()
            .map(|&c| {
                field(c).parse::<f64>().map_err(|_| Error::Parse {
                    row,
                    message: format!("non-numeric covariate '{}'", field(c)),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let obs = CensoredObservation::with_covariates(time, event, covariates)
            .map_err(|e| Error::Parse {
                row,
                message: e.to_string(),
            })?;
        let label = field(group_col);
        let g = match labels.iter().position(|l| l == label) {
            Some(g) => g,
            None => {
                labels.push(label.to_string());
                groups.push(Vec::new());
                labels.len() - 1
            }
        };
        groups[g].push(obs);
    }
    if labels.len() != 2 {
        return Err(Error::GroupCount {
            found: labels.len(),
            labels,
        });
    }
    let g1 = groups.pop().unwrap();
    let g0 = groups.pop().unwrap();
    TwoSampleData::new(
        CensoredSample::new(labels[0].clone(), g0)?,
        CensoredSample::new(labels[1].clone(), g1)?,
    )
}

/// Writes `data` in the canonical layout, group 0 rows first.
pub fn write_csv<W: Write>(data: &TwoSampleData, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let dim = data.covariate_dim();
    let mut header = vec!["time".to_string(), "event".into(), "group".into()];
    header.extend((1..=dim).map(|k| format!("cov{k}")));
    wtr.write_record(&header)?;
    for g in [&data.group0, &data.group1] {
        for o in g.observations() {
            let mut rec = vec![
                format_float(o.time),
                if o.event { "1" } else { "0" }.to_string(),
                g.label.clone(),
            ];
            rec.extend(o.covariates.iter().map(|&c| format_float(c)));
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

// Rust's Display for f64 is the shortest representation that round-trips.
fn format_float(x: f64) -> String {
    format!("{x}")
}
