//! Permutation calibration of the statistics.
//!
//! The pooled sample is sorted once by the tie rule and the pair function is
//! tabulated once over the pooled events. A permuted assignment then only
//! needs the Kaplan-Meier weights of each group (one O(n) sweep over the
//! sorted pool) followed by three quadratic forms in the tabulated matrix.
//!
//! Permutation `i` draws its assignment from `rng::stream(seed, i)`, and the
//! only merge point is an integer tally, so results are identical for any
//! number of worker threads.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandwidth::{median_heuristic, BandwidthRule};
use crate::data::{tie_rule, TwoSampleData};
use crate::error::{Error, Result};
use crate::km::KmRecurrence;
use crate::metrics::PairFn;
use crate::rng;
use crate::statistics::{Form, Measure, StatisticSpec, StatisticValue, Terms};

/// Permuted statistics within this relative distance of the observed value,
/// measured against the size of the cancelling terms, count as ties.
pub const TIE_RTOL: f64 = 1e-12;

pub const DEFAULT_PERMUTATIONS: u64 = 1000;
pub const DEFAULT_EXACT_THRESHOLD: u128 = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMode {
    /// Every assignment of `n₀` labels among the pooled sample.
    Exact,
    /// `permutations` random assignments.
    MonteCarlo { permutations: u64 },
    /// Exact when the assignment count is within the threshold, otherwise
    /// Monte Carlo with `permutations` draws.
    Auto { permutations: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationPlan {
    pub mode: PlanMode,
    pub seed: u64,
    pub exact_threshold: u128,
}

impl PermutationPlan {
    pub fn exact() -> Self {
        Self {
            mode: PlanMode::Exact,
            ..Self::default()
        }
    }

    pub fn monte_carlo(permutations: u64, seed: u64) -> Self {
        Self {
            mode: PlanMode::MonteCarlo { permutations },
            seed,
            exact_threshold: DEFAULT_EXACT_THRESHOLD,
        }
    }

    pub fn auto(permutations: u64, seed: u64) -> Self {
        Self {
            mode: PlanMode::Auto { permutations },
            seed,
            exact_threshold: DEFAULT_EXACT_THRESHOLD,
        }
    }

    fn resolve(&self, n: usize, n0: usize) -> Result<ResolvedMode> {
        let count = binomial(n, n0);
        match self.mode {
            PlanMode::Exact if count <= self.exact_threshold => Ok(ResolvedMode::Exact),
            PlanMode::Exact => Err(Error::TooManyAssignments {
                n,
                k: n0,
                count,
                threshold: self.exact_threshold,
            }),
            PlanMode::MonteCarlo { permutations } | PlanMode::Auto { permutations }
                if permutations == 0 =>
            {
                Err(Error::InvalidParameter("number of permutations must be at least 1".into()))
            }
            PlanMode::MonteCarlo { .. } => Ok(ResolvedMode::MonteCarlo),
            PlanMode::Auto { .. } if count <= self.exact_threshold => Ok(ResolvedMode::Exact),
            PlanMode::Auto { .. } => Ok(ResolvedMode::MonteCarlo),
        }
    }

    fn permutations(&self) -> u64 {
        match self.mode {
            PlanMode::Exact => 0,
            PlanMode::MonteCarlo { permutations } | PlanMode::Auto { permutations } => permutations,
        }
    }
}

impl Default for PermutationPlan {
    fn default() -> Self {
        Self::auto(DEFAULT_PERMUTATIONS, 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolvedMode {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// The requested spec; an `Auto` bandwidth stays `Auto` here and the value
    /// actually used is in `sigma_used`.
    pub spec: StatisticSpec,
    pub statistic: StatisticValue,
    pub p_value: f64,
    pub n_permutations_used: u64,
    pub mode: ResolvedMode,
    pub sigma_used: Option<f64>,
    pub group_sizes: (usize, usize),
    /// Assignments scored as at least as extreme as the observed one.
    pub exceedances: u64,
    /// Assignments where a group had no computable statistic; these are
    /// included in `exceedances`.
    pub degenerate_permutations: u64,
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        // c * (n - i) is divisible by (i + 1) at every step
        c = match c.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    c
}

/// All `n0`-subsets of `0..n` in lexicographic order.
#[derive(Debug, Clone)]
pub struct Assignments {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Iterator for Assignments {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let mut cur = self.current.take().unwrap();
        if next_combination(&mut cur, self.n) {
            self.current = Some(cur);
        }
        Some(out)
    }
}

pub fn enumerate_assignments(n: usize, n0: usize, threshold: u128) -> Result<Assignments> {
    if n0 == 0 || n0 >= n {
        return Err(Error::InvalidParameter(format!(
            "need 0 < n0 < n, got n0={n0}, n={n}"
        )));
    }
    let count = binomial(n, n0);
    if count > threshold {
        return Err(Error::TooManyAssignments {
            n,
            k: n0,
            count,
            threshold,
        });
    }
    Ok(Assignments {
        n,
        current: Some((0..n0).collect()),
    })
}

/// Advances `c` to the next subset in lexicographic order; false after the last.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in (i + 1)..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Subset with lexicographic rank `rank` among all k-subsets of `0..n`.
fn unrank_combination(n: usize, k: usize, mut rank: u128) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    let mut x = 0;
    for pos in 0..k {
        loop {
            let block = binomial(n - x - 1, k - pos - 1);
            if rank < block {
                break;
            }
            rank -= block;
            x += 1;
        }
        out.push(x);
        x += 1;
    }
    out
}

/// Pooled sample sorted by the tie rule, with event points gathered.
struct Pool {
    n0: usize,
    n1: usize,
    // sorted position -> pooled index (group 0 rows first, input order)
    order: Vec<usize>,
    // sorted position -> event slot, or NO_SLOT when censored
    slot: Vec<u32>,
    m: usize,
    dim: usize,
    // m x dim event points in sorted order
    points: Vec<f64>,
}

const NO_SLOT: u32 = u32::MAX;

impl Pool {
    fn new(data: &TwoSampleData) -> Self {
        let (n0, n1) = data.sizes();
        let obs: Vec<_> = data.pooled().collect();
        let mut order: Vec<usize> = (0..obs.len()).collect();
        order.sort_by(|&a, &b| tie_rule((obs[a].time, obs[a].event), (obs[b].time, obs[b].event)));
        let dim = 1 + data.covariate_dim();
        let mut slot = Vec::with_capacity(order.len());
        let mut points = Vec::new();
        let mut m = 0u32;
        for &i in &order {
            if obs[i].event {
                slot.push(m);
                m += 1;
                points.push(obs[i].time);
                points.extend_from_slice(&obs[i].covariates);
            } else {
                slot.push(NO_SLOT);
            }
        }
        Self {
            n0,
            n1,
            order,
            slot,
            m: m as usize,
            dim,
            points,
        }
    }

    fn n(&self) -> usize {
        self.n0 + self.n1
    }

    fn point(&self, a: usize) -> &[f64] {
        &self.points[a * self.dim..(a + 1) * self.dim]
    }
}

/// Pair function tabulated over the pooled events.
struct Table {
    values: Vec<f64>,
    diag: Vec<f64>,
    form: Form,
    energy: bool,
}

impl Table {
    fn new(pool: &Pool, pair: &PairFn, form: Form, energy: bool) -> Self {
        let m = pool.m;
        let mut values = vec![0.0; m * m];
        for a in 0..m {
            values[a * m + a] = pair.eval(pool.point(a), pool.point(a));
            for b in (a + 1)..m {
                let v = pair.eval(pool.point(a), pool.point(b));
                values[a * m + b] = v;
                values[b * m + a] = v;
            }
        }
        let diag = (0..m).map(|a| values[a * m + a]).collect();
        Self {
            values,
            diag,
            form,
            energy,
        }
    }
}

/// Per-assignment weights, indexed by event slot.
struct Weights {
    w0: Vec<f64>,
    w1: Vec<f64>,
    in0: Vec<bool>,
    sum: [f64; 2],
    sq_sum: [f64; 2],
    events: [usize; 2],
}

impl Weights {
    fn new(m: usize) -> Self {
        Self {
            w0: vec![0.0; m],
            w1: vec![0.0; m],
            in0: vec![false; m],
            sum: [0.0; 2],
            sq_sum: [0.0; 2],
            events: [0; 2],
        }
    }

    /// `member0[i]` says whether pooled index `i` is assigned to group 0.
    fn assign(&mut self, pool: &Pool, member0: &[bool]) {
        let mut rec = [KmRecurrence::new(pool.n0), KmRecurrence::new(pool.n1)];
        self.sum = [0.0; 2];
        self.sq_sum = [0.0; 2];
        self.events = [0; 2];
        for (p, &i) in pool.order.iter().enumerate() {
            let g = if member0[i] { 0 } else { 1 };
            let s = pool.slot[p];
            let w = rec[g].next(s != NO_SLOT);
            if s != NO_SLOT {
                let s = s as usize;
                self.in0[s] = g == 0;
                if g == 0 {
                    self.w0[s] = w;
                    self.w1[s] = 0.0;
                } else {
                    self.w0[s] = 0.0;
                    self.w1[s] = w;
                }
                self.sum[g] += w;
                self.sq_sum[g] += w * w;
                self.events[g] += 1;
            }
        }
    }

    /// Statistic value and cancellation magnitude, or `None` when a group
    /// lacks the events the form needs.
    fn evaluate(&self, table: &Table) -> Option<(f64, f64)> {
        let min_events = if table.form == Form::U { 2 } else { 1 };
        if self.events[0] < min_events || self.events[1] < min_events {
            return None;
        }
        let m = self.w0.len();
        let (mut q00, mut q11, mut cross) = (0.0, 0.0, 0.0);
        for a in 0..m {
            let row = &table.values[a * m..(a + 1) * m];
            let (r0, r1) = dot2(row, &self.w0, &self.w1);
            if self.in0[a] {
                q00 += self.w0[a] * r0;
                cross += self.w0[a] * r1;
            } else {
                q11 += self.w1[a] * r1;
                cross += self.w1[a] * r0;
            }
        }
        // every cross pair was visited from both ends
        let cross = 0.5 * cross;
        let [s0, s1] = self.sum;
        let terms = match table.form {
            Form::UnnormalizedV => Terms {
                cross,
                within0: q00,
                within1: q11,
            },
            Form::V => Terms {
                cross: cross / (s0 * s1),
                within0: q00 / (s0 * s0),
                within1: q11 / (s1 * s1),
            },
            Form::U => {
                let (mut d0, mut d1) = (0.0, 0.0);
                for a in 0..m {
                    d0 += self.w0[a] * self.w0[a] * table.diag[a];
                    d1 += self.w1[a] * self.w1[a] * table.diag[a];
                }
                Terms {
                    cross: cross / (s0 * s1),
                    within0: (q00 - d0) / (s0 * s0 - self.sq_sum[0]),
                    within1: (q11 - d1) / (s1 * s1 - self.sq_sum[1]),
                }
            }
        };
        Some((terms.combine(table.energy), terms.magnitude()))
    }
}

#[inline]
fn dot2(row: &[f64], a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut sa = [0.0; 4];
    let mut sb = [0.0; 4];
    let whole = row.len() / 4 * 4;
    for ((r, x), y) in row[..whole]
        .chunks_exact(4)
        .zip(a[..whole].chunks_exact(4))
        .zip(b[..whole].chunks_exact(4))
    {
        for k in 0..4 {
            sa[k] += r[k] * x[k];
            sb[k] += r[k] * y[k];
        }
    }
    let mut ta = (sa[0] + sa[1]) + (sa[2] + sa[3]);
    let mut tb = (sb[0] + sb[1]) + (sb[2] + sb[3]);
    for i in whole..row.len() {
        ta += row[i] * a[i];
        tb += row[i] * b[i];
    }
    (ta, tb)
}

#[derive(Debug, Clone, Default)]
struct Tally {
    exceed: Vec<u64>,
    degenerate: Vec<u64>,
}

impl Tally {
    fn new(k: usize) -> Self {
        Self {
            exceed: vec![0; k],
            degenerate: vec![0; k],
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        for (a, b) in self.exceed.iter_mut().zip(other.exceed) {
            *a += b;
        }
        for (a, b) in self.degenerate.iter_mut().zip(other.degenerate) {
            *a += b;
        }
        self
    }
}

struct Battery<'a> {
    pool: &'a Pool,
    tables: &'a [Table],
    observed: &'a [(f64, f64)],
}

impl Battery<'_> {
    fn score(&self, weights: &Weights, tally: &mut Tally) {
        for (k, table) in self.tables.iter().enumerate() {
            let (obs, mag) = self.observed[k];
            match weights.evaluate(table) {
                Some((v, _)) => {
                    if v >= obs - TIE_RTOL * mag {
                        tally.exceed[k] += 1;
                    }
                }
                None => {
                    tally.exceed[k] += 1;
                    tally.degenerate[k] += 1;
                }
            }
        }
    }

    fn run_exact(&self) -> Tally {
        let n = self.pool.n();
        let n0 = self.pool.n0;
        let total = binomial(n, n0);
        const CHUNK: u128 = 512;
        let chunks = total.div_ceil(CHUNK) as u64;
        let k = self.tables.len();
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let start = c as u128 * CHUNK;
                let len = CHUNK.min(total - start) as usize;
                let mut comb = unrank_combination(n, n0, start);
                let mut member0 = vec![false; n];
                let mut weights = Weights::new(self.pool.m);
                let mut tally = Tally::new(k);
                for step in 0..len {
                    if step > 0 {
                        next_combination(&mut comb, n);
                    }
                    member0.iter_mut().for_each(|x| *x = false);
                    for &i in &comb {
                        member0[i] = true;
                    }
                    weights.assign(self.pool, &member0);
                    self.score(&weights, &mut tally);
                }
                tally
            })
            .reduce(|| Tally::new(k), Tally::merge)
    }

    fn run_monte_carlo(&self, permutations: u64, seed: u64) -> Tally {
        let n = self.pool.n();
        let n0 = self.pool.n0;
        let k = self.tables.len();
        (0..permutations)
            .into_par_iter()
            .fold(
                || (Tally::new(k), vec![false; n], Weights::new(self.pool.m)),
                |(mut tally, mut member0, mut weights), i| {
                    let mut rng = rng::stream(seed, i);
                    member0.iter_mut().for_each(|x| *x = false);
                    for j in index::sample(&mut rng, n, n0) {
                        member0[j] = true;
                    }
                    weights.assign(self.pool, &member0);
                    self.score(&weights, &mut tally);
                    (tally, member0, weights)
                },
            )
            .map(|(t, _, _)| t)
            .reduce(|| Tally::new(k), Tally::merge)
    }
}

/// Resolves `Auto` kernel bandwidths of `specs` against `data` with `rule`.
/// Returns the concrete specs and, per spec, the σ in use.
pub fn resolve_bandwidths(
    data: &TwoSampleData,
    specs: &[StatisticSpec],
    rule: BandwidthRule,
) -> Result<Vec<(StatisticSpec, Option<f64>)>> {
    let mut auto_sigma: Option<f64> = None;
    specs
        .iter()
        .map(|spec| {
            spec.validate()?;
            match &spec.measure {
                Measure::Energy { .. } => Ok((spec.clone(), None)),
                Measure::Mmd { kernel } => match kernel.bandwidth() {
                    Some(crate::metrics::Bandwidth::Auto) => {
                        let sigma = match auto_sigma {
                            Some(s) => s,
                            None => *auto_sigma.insert(median_heuristic(data, rule)?),
                        };
                        Ok((
                            StatisticSpec::mmd(spec.form, kernel.resolve_bandwidth(sigma)),
                            Some(sigma),
                        ))
                    }
                    Some(crate::metrics::Bandwidth::Fixed(s)) => Ok((spec.clone(), Some(s))),
                    None => Ok((spec.clone(), None)),
                },
            }
        })
        .collect()
}

/// Runs one permutation test.
pub fn permutation_test(
    data: &TwoSampleData,
    spec: &StatisticSpec,
    plan: &PermutationPlan,
    rule: BandwidthRule,
) -> Result<TestResult> {
    Ok(permutation_battery(data, std::slice::from_ref(spec), plan, rule)?
        .pop()
        .expect("one result per spec"))
}

/// Runs several tests on the same permuted assignments. Each result equals
/// what [`permutation_test`] returns for that spec alone.
pub fn permutation_battery(
    data: &TwoSampleData,
    specs: &[StatisticSpec],
    plan: &PermutationPlan,
    rule: BandwidthRule,
) -> Result<Vec<TestResult>> {
    let resolved = resolve_bandwidths(data, specs, rule)?;
    let pool = Pool::new(data);
    let (n0, n1) = data.sizes();
    for g in [&data.group0, &data.group1] {
        if g.n_events() == 0 {
            return Err(Error::NoEvents {
                group: g.label.clone(),
            });
        }
    }
    let mode = plan.resolve(pool.n(), n0)?;

    let tables = resolved
        .iter()
        .map(|(s, _)| Ok(Table::new(&pool, &s.pair_fn(pool.dim)?, s.form, s.is_energy())))
        .collect::<Result<Vec<_>>>()?;

    let mut weights = Weights::new(pool.m);
    let member0: Vec<bool> = (0..pool.n()).map(|i| i < n0).collect();
    weights.assign(&pool, &member0);
    let observed = tables
        .iter()
        .map(|t| {
            weights.evaluate(t).ok_or(Error::ZeroNormalizer(
                "observed statistic (U form needs two events per group)",
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let battery = Battery {
        pool: &pool,
        tables: &tables,
        observed: &observed,
    };
    let (tally, total) = match mode {
        ResolvedMode::Exact => (battery.run_exact(), binomial(pool.n(), n0) as u64),
        ResolvedMode::MonteCarlo => {
            let b = plan.permutations();
            (battery.run_monte_carlo(b, plan.seed), b)
        }
    };

    specs
        .iter()
        .zip(&resolved)
        .enumerate()
        .map(|(k, (spec, (_, sigma)))| {
            let degenerate = tally.degenerate[k];
            if degenerate * 2 > total {
                return Err(Error::DegeneratePermutations { degenerate, total });
            }
            let exceed = tally.exceed[k];
            let p_value = match mode {
                ResolvedMode::Exact => exceed as f64 / total as f64,
                ResolvedMode::MonteCarlo => (1 + exceed) as f64 / (1 + total) as f64,
            };
            Ok(TestResult {
                spec: spec.clone(),
                statistic: StatisticValue::new(observed[k].0, n0, n1),
                p_value,
                n_permutations_used: total,
                mode,
                sigma_used: *sigma,
                group_sizes: (n0, n1),
                exceedances: exceed,
                degenerate_permutations: degenerate,
            })
        })
        .collect()
}
