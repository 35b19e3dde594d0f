//! Confidence intervals, pooled moments and goodness-of-fit helpers.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Two-sided standard normal quantile for confidence `level` (e.g. 0.99).
pub fn z_value(level: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    n.inverse_cdf(0.5 + level / 2.0)
}

/// Wilson score interval for `successes` out of `n` trials.
pub fn wilson(successes: u64, n: u64, level: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = z_value(level);
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Count, mean and centred second moment of a sample.
///
/// `merge` is commutative bit for bit; it is associative up to rounding, so
/// callers that need reproducible pooling merge in a fixed key order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut m = Moments::default();
        for &x in xs {
            m.push(x);
        }
        m
    }

    pub fn merge(&self, other: &Moments) -> Moments {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let n = self.n + other.n;
        let (na, nb) = (self.n as f64, other.n as f64);
        let mean = (na * self.mean + nb * other.mean) / n as f64;
        let delta = other.mean - self.mean;
        let m2 = self.m2 + other.m2 + delta * delta * (na * nb / n as f64);
        Moments { n, mean, m2 }
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            f64::INFINITY
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }

    /// Normal-approximation interval for the mean.
    pub fn ci(&self, level: f64) -> (f64, f64) {
        let h = z_value(level) * self.std_error();
        (self.mean - h, self.mean + h)
    }
}

/// Two-sample chi-square homogeneity test on count histograms. Bins are
/// merged from the top until every pooled bin has expected count at least 5
/// in both samples. Returns `(statistic, degrees of freedom, p-value)`.
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> (f64, usize, f64) {
    let len = a.len().max(b.len());
    let get = |v: &[u64], i: usize| v.get(i).copied().unwrap_or(0);
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    if na == 0 || nb == 0 {
        return (0.0, 0, 1.0);
    }
    let total = (na + nb) as f64;
    // pool bins from the left, carrying small tails into the last bin
    let mut bins: Vec<(u64, u64)> = Vec::new();
    let mut cur = (0u64, 0u64);
    for i in 0..len {
        cur.0 += get(a, i);
        cur.1 += get(b, i);
        let pooled = (cur.0 + cur.1) as f64;
        let min_expected = pooled * (na.min(nb) as f64) / total;
        if min_expected >= 5.0 {
            bins.push(cur);
            cur = (0, 0);
        }
    }
    if cur.0 + cur.1 > 0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += cur.0;
                last.1 += cur.1;
            }
            None => bins.push(cur),
        }
    }
    if bins.len() < 2 {
        return (0.0, 0, 1.0);
    }
    let mut stat = 0.0;
    for &(x, y) in &bins {
        let pooled = (x + y) as f64;
        let ea = pooled * na as f64 / total;
        let eb = pooled * nb as f64 / total;
        stat += (x as f64 - ea).powi(2) / ea + (y as f64 - eb).powi(2) / eb;
    }
    let dof = bins.len() - 1;
    let chi = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    (stat, dof, 1.0 - chi.cdf(stat))
}

/// Interval policy of an estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CiKind {
    /// Bernoulli frequency with a Wilson score interval.
    Wilson,
    /// Sample mean with a normal interval.
    Normal,
}

/// Pooled estimate with its seed lineage: the base seed and the half-open
/// replicate ranges whose streams produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub label: String,
    pub kind: CiKind,
    pub seed: u64,
    pub replicates: Vec<(u64, u64)>,
    pub moments: Moments,
    /// Number of ones for Bernoulli records.
    pub successes: u64,
}

impl EstimateRecord {
    pub fn empty(label: impl Into<String>, kind: CiKind, seed: u64) -> Self {
        EstimateRecord { label: label.into(), kind, seed, replicates: Vec::new(), moments: Moments::default(), successes: 0 }
    }

    /// A Bernoulli record from outcomes of replicates `first..first + outcomes.len()`.
    pub fn bernoulli(label: impl Into<String>, seed: u64, first: u64, outcomes: &[bool]) -> Self {
        let xs: Vec<f64> = outcomes.iter().map(|&b| f64::from(u8::from(b))).collect();
        let mut r = EstimateRecord::empty(label, CiKind::Wilson, seed);
        r.moments = Moments::from_slice(&xs);
        r.successes = outcomes.iter().filter(|&&b| b).count() as u64;
        if !outcomes.is_empty() {
            r.replicates.push((first, first + outcomes.len() as u64));
        }
        r
    }

    pub fn from_values(label: impl Into<String>, seed: u64, first: u64, values: &[f64]) -> Self {
        let mut r = EstimateRecord::empty(label, CiKind::Normal, seed);
        r.moments = Moments::from_slice(values);
        if !values.is_empty() {
            r.replicates.push((first, first + values.len() as u64));
        }
        r
    }

    pub fn n(&self) -> u64 {
        self.moments.n
    }

    pub fn mean(&self) -> f64 {
        match self.kind {
            CiKind::Wilson if self.moments.n > 0 => self.successes as f64 / self.moments.n as f64,
            _ => self.moments.mean,
        }
    }

    pub fn variance(&self) -> f64 {
        self.moments.variance()
    }

    pub fn ci(&self, level: f64) -> (f64, f64) {
        match self.kind {
            CiKind::Wilson => wilson(self.successes, self.moments.n, level),
            CiKind::Normal => self.moments.ci(level),
        }
    }

    /// Pools two records of the same experiment drawn from disjoint streams.
    pub fn merge(&self, other: &EstimateRecord) -> Result<EstimateRecord> {
        if self.label != other.label || self.kind != other.kind || self.seed != other.seed {
            return Err(Error::Domain(format!(
                "cannot merge estimates of '{}' and '{}'",
                self.label, other.label
            )));
        }
        let mut ranges: Vec<(u64, u64)> = self.replicates.iter().chain(&other.replicates).copied().collect();
        ranges.sort_unstable();
        if ranges.windows(2).any(|w| w[1].0 < w[0].1) {
            return Err(Error::Domain(format!("replicate ranges of '{}' overlap", self.label)));
        }
        Ok(EstimateRecord {
            label: self.label.clone(),
            kind: self.kind,
            seed: self.seed,
            replicates: ranges,
            moments: self.moments.merge(&other.moments),
            successes: self.successes + other.successes,
        })
    }
}

/// Merges records in a fixed order given by their first replicate index.
pub fn merge_estimates(records: &[EstimateRecord]) -> Result<EstimateRecord> {
    let Some(first) = records.first() else {
        return Err(Error::Domain("no records to merge".into()));
    };
    let mut sorted: Vec<&EstimateRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.replicates.first().copied());
    let mut acc = EstimateRecord::empty(first.label.clone(), first.kind, first.seed);
    for r in sorted {
        acc = acc.merge(r)?;
    }
    Ok(acc)
}
