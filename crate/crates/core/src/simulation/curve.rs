//! Digitized survival curves: antitonic projection, truncation and
//! inverse-transform sampling from the piecewise-linear CDF `F = 1 - S`.

use std::io::Read;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-linear survival function through `knots`, with `t` strictly
/// increasing, starting at 0, and `S` nonincreasing in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCurve", into = "RawCurve")]
pub struct SurvivalCurve {
    t: Vec<f64>,
    s: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawCurve {
    knots: Vec<(f64, f64)>,
}

impl TryFrom<RawCurve> for SurvivalCurve {
    type Error = Error;
    fn try_from(raw: RawCurve) -> Result<Self> {
        load_curve(&raw.knots)
    }
}

impl From<SurvivalCurve> for RawCurve {
    fn from(c: SurvivalCurve) -> Self {
        RawCurve { knots: c.knots() }
    }
}

/// Least-squares nonincreasing fit to `y` by pooling adjacent violators.
pub fn pava_nonincreasing(y: &[f64]) -> Vec<f64> {
    // blocks of (sum, count); block means stay nonincreasing left to right
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(y.len());
    for &v in y {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            if s0 / c0 as f64 >= s1 / c1 as f64 {
                break;
            }
            blocks.pop();
            *blocks.last_mut().unwrap() = (s0 + s1, c0 + c1);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(s, c)| std::iter::repeat_n(s / c as f64, c))
        .collect()
}

/// Builds a curve from digitized `(t, S)` points: sorts by `t`, projects `S`
/// onto nonincreasing sequences and prepends `(0, 1)` when `t = 0` is absent.
pub fn load_curve(points: &[(f64, f64)]) -> Result<SurvivalCurve> {
    if points.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "a survival curve needs at least 2 points, got {}",
            points.len()
        )));
    }
    for &(t, s) in points {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::InvalidInput(format!("curve time must be finite and nonnegative, got {t}")));
        }
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::InvalidInput(format!("survival value must lie in [0, 1], got {s}")));
        }
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some(w) = pts.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidInput(format!("duplicate curve time {}", w[0].0)));
    }
    let mut t: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let mut s = pava_nonincreasing(&pts.iter().map(|p| p.1).collect::<Vec<_>>());
    if t[0] > 0.0 {
        t.insert(0, 0.0);
        s.insert(0, 1.0);
    }
    Ok(SurvivalCurve { t, s })
}

/// Reads a curve CSV with columns `t,s`.
pub fn read_curve_csv(path: impl AsRef<Path>) -> Result<SurvivalCurve> {
    read_curve_from(std::fs::File::open(path)?)
}

pub fn read_curve_from<R: Read>(reader: R) -> Result<SurvivalCurve> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::InvalidInput(format!("curve file is missing column `{name}`")))
    };
    let (ti, si) = (col("t")?, col("s")?);
    let mut points = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = k + 2;
        let num = |i: usize| -> Result<f64> {
            let raw = rec.get(i).unwrap_or("");
            raw.parse().map_err(|_| Error::Parse {
                row,
                message: format!("not a number: `{raw}`"),
            })
        };
        points.push((num(ti)?, num(si)?));
    }
    load_curve(&points)
}

pub fn write_curve_csv<W: std::io::Write>(curve: &SurvivalCurve, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "s"])?;
    for (t, s) in curve.t.iter().zip(&curve.s) {
        w.write_record([t.to_string(), s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

impl SurvivalCurve {
    pub fn knots(&self) -> Vec<(f64, f64)> {
        self.t.iter().copied().zip(self.s.iter().copied()).collect()
    }

    pub fn t_max(&self) -> f64 {
        *self.t.last().unwrap()
    }

    /// Linear interpolation; constant beyond the last knot.
    pub fn survival(&self, t: f64) -> f64 {
        if t <= self.t[0] {
            return self.s[0];
        }
        let k = self.t.partition_point(|&x| x < t);
        if k == self.t.len() {
            return *self.s.last().unwrap();
        }
        if self.t[k] == t {
            return self.s[k];
        }
        let (t0, t1) = (self.t[k - 1], self.t[k]);
        let (s0, s1) = (self.s[k - 1], self.s[k]);
        s0 + (s1 - s0) * (t - t0) / (t1 - t0)
    }

    /// `S(t)^theta` at every knot.
    pub fn powered(&self, theta: f64) -> Self {
        Self {
            t: self.t.clone(),
            s: self.s.iter().map(|s| s.powf(theta)).collect(),
        }
    }

    pub(crate) fn check_samplable(&self) -> Result<()> {
        if self.s.iter().all(|&s| s == 1.0) {
            return Err(Error::InvalidInput("degenerate curve: S is identically 1".into()));
        }
        Ok(())
    }

    /// Draws `n` lifetimes. Draws past the last knot's CDF value land on the
    /// last knot.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        self.check_samplable()?;
        Ok((0..n).map(|_| self.quantile(rng.random::<f64>())).collect())
    }

    /// Inverse of the piecewise-linear `F = 1 - S`, nondecreasing in `u`.
    pub fn quantile(&self, u: f64) -> f64 {
        let f = |k: usize| 1.0 - self.s[k];
        let last = self.t.len() - 1;
        if u >= f(last) {
            return self.t[last];
        }
        // first knot with F > u; F(0) > u means an atom at the first knot
        let k = self.s.partition_point(|&s| 1.0 - s <= u);
        if k == 0 {
            return self.t[0];
        }
        let (f0, f1) = (f(k - 1), f(k));
        self.t[k - 1] + (u - f0) / (f1 - f0) * (self.t[k] - self.t[k - 1])
    }

    /// `∫₀ᵇ P(T > c) dc` for `T` drawn by [`Self::sample`], which never
    /// exceeds the last knot.
    pub fn integrated_survival(&self, b: f64) -> f64 {
        let end = b.min(self.t_max());
        let mut total = 0.0;
        for k in 1..self.t.len() {
            let (t0, t1) = (self.t[k - 1], self.t[k]);
            if t0 >= end {
                break;
            }
            let hi = t1.min(end);
            total += 0.5 * (self.s[k - 1] + self.survival(hi)) * (hi - t0);
        }
        total
    }

    /// The curve restricted to `[0, tau]`, with a knot at `tau`.
    pub fn truncated(&self, tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidParameter(format!("truncation point must be positive, got {tau}")));
        }
        let keep = self.t.partition_point(|&x| x < tau);
        let mut t = self.t[..keep].to_vec();
        let mut s = self.s[..keep].to_vec();
        t.push(tau);
        s.push(self.survival(tau));
        Ok(Self { t, s })
    }
}

/// Both curves truncated to the smaller of their right ends.
pub fn truncate_to_common_support(a: &SurvivalCurve, b: &SurvivalCurve) -> Result<(SurvivalCurve, SurvivalCurve)> {
    let tau = a.t_max().min(b.t_max());
    Ok((a.truncated(tau)?, b.truncated(tau)?))
}

pub fn sample_from_curve<R: Rng + ?Sized>(curve: &SurvivalCurve, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    curve.sample(n, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn projection_examples() {
        let c = load_curve(&[(0.0, 1.0), (1.0, 0.6), (2.0, 0.7), (3.0, 0.2)]).unwrap();
        let s: Vec<f64> = c.knots().iter().map(|k| k.1).collect();
        assert_eq!(s.len(), 4);
        assert!((s[1] - 0.65).abs() < 1e-15 && (s[2] - 0.65).abs() < 1e-15);
        assert_eq!((s[0], s[3]), (1.0, 0.2));

        let c = load_curve(&[(2.0, 0.5), (1.0, 0.8)]).unwrap();
        assert_eq!(c.knots(), vec![(0.0, 1.0), (1.0, 0.8), (2.0, 0.5)]);

        let c = load_curve(&[(0.0, 1.0), (5.0, 0.0)]).unwrap();
        assert_eq!(c.t_max(), 5.0);
    }

    #[test]
    fn invalid_curves() {
        assert!(load_curve(&[]).is_err());
        assert!(load_curve(&[(1.0, 0.5)]).is_err());
        assert!(load_curve(&[(0.0, 1.0), (1.0, 1.2)]).is_err());
        assert!(load_curve(&[(0.0, 1.0), (1.0, 0.5), (1.0, 0.4)]).is_err());
        assert!(load_curve(&[(-1.0, 1.0), (1.0, 0.5)]).is_err());
        let flat = load_curve(&[(0.0, 1.0), (3.0, 1.0)]).unwrap();
        assert!(flat.sample(1, &mut stream(0, 0)).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let c = read_curve_from("t,s\n0,1\n1, 0.5\n2,0.25\n".as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_curve_csv(&c, &mut buf).unwrap();
        assert_eq!(read_curve_from(buf.as_slice()).unwrap(), c);
        assert!(read_curve_from("t,s\n0,1\n".as_bytes()).is_err());
        let err = read_curve_from("t,s\n0,1\n1,x\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains('3'), "{err}");
        assert!(read_curve_from("time,s\n0,1\n1,0\n".as_bytes()).is_err());
    }

    #[test]
    fn serde_goes_through_projection() {
        let c: SurvivalCurve = serde_json::from_str(r#"{"knots":[[1,0.6],[2,0.7]]}"#).unwrap();
        assert_eq!(c.knots().len(), 3);
        let back: SurvivalCurve = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<SurvivalCurve>(r#"{"knots":[[1,0.6]]}"#).is_err());
    }

    #[test]
    fn uniform_curve_mean() {
        let c = load_curve(&[(0.0, 1.0), (1.0, 0.0)]).unwrap();
        let x = c.sample(100_000, &mut stream(5, 0)).unwrap();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        assert!((mean - 0.5).abs() < 0.005, "{mean}");
    }

    #[test]
    fn exponential_curve_kolmogorov() {
        let end = 4.0;
        let pts: Vec<(f64, f64)> = (0..=400).map(|i| {
            let t = i as f64 * end / 400.0;
            (t, (-t).exp())
        }).collect();
        let c = load_curve(&pts).unwrap();
        let mut x = c.sample(100_000, &mut stream(6, 0)).unwrap();
        x.sort_by(f64::total_cmp);
        let n = x.len() as f64;
        // the draws past the grid form an atom at `end`
        let cdf = |t: f64| if t >= end { 1.0 } else { 1.0 - (-t).exp() };
        let cdf_left = |t: f64| if t > end { 1.0 } else { 1.0 - (-t).exp() };
        let mut ks: f64 = 0.0;
        for &v in &x {
            let below = x.partition_point(|&y| y < v) as f64 / n;
            let upto = x.partition_point(|&y| y <= v) as f64 / n;
            ks = ks.max((cdf(v) - upto).abs()).max((cdf_left(v) - below).abs());
        }
        assert!(ks <= 0.01, "{ks}");
    }

    #[test]
    fn quantile_is_monotone_and_reproducible() {
        let c = load_curve(&[(0.5, 0.9), (1.0, 0.9), (2.0, 0.3), (4.0, 0.3), (5.0, 0.1)]).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=1000 {
            let q = c.quantile(i as f64 / 1000.0);
            assert!(q >= prev);
            prev = q;
        }
        assert_eq!(c.quantile(0.95), 5.0);
        let a = c.sample(1, &mut stream(11, 2)).unwrap();
        let b = c.sample(1, &mut stream(11, 2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn truncation_and_integral() {
        let c = load_curve(&[(0.0, 1.0), (2.0, 0.5), (4.0, 0.0)]).unwrap();
        let t = c.truncated(3.0).unwrap();
        assert_eq!(t.knots(), vec![(0.0, 1.0), (2.0, 0.5), (3.0, 0.25)]);
        assert!((c.integrated_survival(4.0) - 2.0).abs() < 1e-15);
        assert!((c.integrated_survival(1.0) - 0.875).abs() < 1e-15);
        assert!((c.integrated_survival(9.0) - 2.0).abs() < 1e-15);
        let other = load_curve(&[(0.0, 1.0), (3.0, 0.2)]).unwrap();
        let (a, b) = truncate_to_common_support(&c, &other).unwrap();
        assert_eq!(a.t_max(), 3.0);
        assert_eq!(b, other);
    }

    #[test]
    fn pava_small_cases() {
        assert_eq!(pava_nonincreasing(&[3.0, 2.0, 1.0]), vec![3.0, 2.0, 1.0]);
        assert_eq!(pava_nonincreasing(&[1.0, 2.0, 3.0]), vec![2.0, 2.0, 2.0]);
        assert_eq!(pava_nonincreasing(&[]), Vec::<f64>::new());
    }
}
