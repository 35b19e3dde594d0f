//! Excursions of loops between two disjoint sets `A` and `B`.
//!
//! A based loop `(x_1, ..., x_n)` with `x_1` in `A` that visits `B` splits
//! into `k` round trips: `psi_i` is the first `B` time after `phi_i`, and
//! `phi_{i+1}` the first `A` time after `psi_i`. The loops meeting both sets
//! are then a Poisson process built from the endpoint tuples
//! `(a_1, b_1, ..., a_j, b_j)`, with intensity
//! `(alpha / j) prod_i H_AB(a_i, b_i) H_BA(b_i, a_{i+1})`, and from bridges
//! joining consecutive endpoints.

use std::io::Write;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};
use crate::lattice::{Point, PointSet};
use crate::loops::{based_loop_mass, loop_mass, BasedLoop, Loop};
use crate::potential::{HitBridge, HittingKernel, KilledDomain, SolverOptions};
use crate::rng::{stream, tag};
use crate::soup::poisson;
use crate::stats::wilson;

/// Distinct rotations of `l` that start in `A`, visit `B`, and whose last
/// visit to `A ∪ B` is in `B`.
pub fn representatives_lab(l: &Loop, a: &PointSet, b: &PointSet) -> Vec<BasedLoop> {
    let rep = l.rep();
    (0..rep.period())
        .map(|k| rep.rotate(k))
        .filter(|r| {
            let v = r.verts();
            if !a.contains(&v[0]) {
                return false;
            }
            match v.iter().rposition(|x| a.contains(x) || b.contains(x)) {
                Some(i) => b.contains(&v[i]),
                None => false,
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    /// Number of round trips.
    pub k: usize,
    /// Zero-based start times in `A`.
    pub phi: Vec<usize>,
    /// Zero-based first-`B` times.
    pub psi: Vec<usize>,
    /// `(x_{phi_i}, ..., x_{psi_i})`.
    pub inner: Vec<Vec<Point>>,
    /// `(x_{psi_i}, ..., x_{phi_{i+1}})`, the last one closed by `x_1`.
    pub outer: Vec<Vec<Point>>,
}

pub fn decompose(l: &BasedLoop, a: &PointSet, b: &PointSet) -> Result<Decomposition> {
    if let Some(p) = a.intersection(b).next() {
        return domain(format!("the sets overlap at {p}"));
    }
    let v = l.verts();
    if !a.contains(&v[0]) {
        return domain("the based loop does not start in A");
    }
    let n = v.len();
    let mut phi = vec![0usize];
    let mut psi = Vec::new();
    loop {
        let start = *phi.last().unwrap();
        match (start + 1..n).find(|&j| b.contains(&v[j])) {
            Some(s) => psi.push(s),
            None => break,
        }
        let s = *psi.last().unwrap();
        match (s + 1..n).find(|&j| a.contains(&v[j])) {
            Some(f) => phi.push(f),
            None => break,
        }
    }
    if psi.is_empty() {
        return domain("the based loop never visits B");
    }
    // a trailing A time without a later B visit belongs to the last outer leg
    phi.truncate(psi.len());
    let k = psi.len();
    let inner = (0..k).map(|i| v[phi[i]..=psi[i]].to_vec()).collect();
    let outer = (0..k)
        .map(|i| {
            if i + 1 < k {
                v[psi[i]..=phi[i + 1]].to_vec()
            } else {
                let mut tail = v[psi[i]..].to_vec();
                tail.push(v[0].clone());
                tail
            }
        })
        .collect();
    Ok(Decomposition { k, phi, psi, inner, outer })
}

/// Both sides of the per-loop identity
/// `mu(l) = (|l| / k) sum_{rep} mu_based(rep) = (1/k) sum_{x in A} P_x[path in reps, X_n = x]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Claim1 {
    pub k: usize,
    pub representatives: usize,
    pub loop_mass: BigRational,
    pub via_based_mass: BigRational,
    pub via_walk: BigRational,
}

impl Claim1 {
    pub fn holds(&self) -> bool {
        self.loop_mass == self.via_based_mass && self.loop_mass == self.via_walk
    }
}

pub fn claim1_check(l: &Loop, a: &PointSet, b: &PointSet) -> Result<Claim1> {
    if !l.rep().meets(a) || !l.rep().meets(b) {
        return domain("the loop does not meet both sets");
    }
    let reps = representatives_lab(l, a, b);
    let k = decompose(&reps[0], a, b)?.k;
    let n = l.len();
    let d = l.rep().dim();
    let kq = BigInt::from(k);
    let sum_based = reps.iter().fold(BigRational::zero(), |acc, r| acc + based_loop_mass(r));
    let via_based_mass = sum_based * BigRational::new(BigInt::from(n), kq.clone());
    // each representative is one specific n-step path from its own root
    let step = BigRational::new(BigInt::from(1), num_traits::pow(BigInt::from(2 * d), n));
    let walk = reps.iter().fold(BigRational::zero(), |acc, _| acc + step.clone());
    let via_walk = walk / BigRational::from_integer(kq);
    Ok(Claim1 { k, representatives: reps.len(), loop_mass: loop_mass(l), via_based_mass, via_walk })
}

/// `H_AB` and `H_BA` between sorted point lists.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExcursionKernels {
    pub a: Vec<Point>,
    pub b: Vec<Point>,
    /// `|A| x |B|`, `P_a[X_{H_B} = b]`.
    pub hab: Vec<f64>,
    /// `|B| x |A|`, `P_b[X_{H_A} = a]`.
    pub hba: Vec<f64>,
}

impl ExcursionKernels {
    pub fn from_kernels(ab: &HittingKernel, ba: &HittingKernel) -> Result<Self> {
        if ab.sources != ba.targets || ab.targets != ba.sources {
            return domain("kernels do not share the same point sets");
        }
        Ok(ExcursionKernels { a: ab.sources.clone(), b: ab.targets.clone(), hab: ab.values.clone(), hba: ba.values.clone() })
    }

    pub fn hab(&self, i: usize, j: usize) -> f64 {
        self.hab[i * self.b.len() + j]
    }

    pub fn hba(&self, j: usize, i: usize) -> f64 {
        self.hba[j * self.a.len() + i]
    }

    /// `max_{b in B} P_b[H_A < killing time]`.
    pub fn sup_return_to_a(&self) -> f64 {
        let na = self.a.len();
        (0..self.b.len())
            .map(|j| self.hba[j * na..(j + 1) * na].iter().sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `M = H_AB H_BA` on `A`.
    pub fn m_matrix(&self) -> Matrix {
        let (na, nb) = (self.a.len(), self.b.len());
        let mut m = Matrix::zeros(na);
        for i in 0..na {
            for j in 0..nb {
                let h = self.hab(i, j);
                if h == 0.0 {
                    continue;
                }
                for l in 0..na {
                    m.data[i * na + l] += h * self.hba(j, l);
                }
            }
        }
        m
    }

    /// `N = H_BA H_AB` on `B`; `tr(N^j) = tr(M^j)`.
    pub fn n_matrix(&self) -> Matrix {
        let (na, nb) = (self.a.len(), self.b.len());
        let mut m = Matrix::zeros(nb);
        for j in 0..nb {
            for i in 0..na {
                let h = self.hba(j, i);
                if h == 0.0 {
                    continue;
                }
                for l in 0..nb {
                    m.data[j * nb + l] += h * self.hab(i, l);
                }
            }
        }
        m
    }

    /// `(alpha / j) prod_i H_AB(a_i, b_i) H_BA(b_i, a_{i+1})` with `a_{j+1} = a_1`,
    /// for a tuple given as index pairs.
    pub fn endpoint_intensity(&self, alpha: f64, tuple: &[(usize, usize)]) -> f64 {
        let j = tuple.len();
        let mut p = alpha / j as f64;
        for i in 0..j {
            let (a, b) = tuple[i];
            let next = tuple[(i + 1) % j].0;
            p *= self.hab(a, b) * self.hba(b, next);
        }
        p
    }
}

/// Square dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n).map(|i| (0..n).map(|j| self.data[i * n + j] * v[j]).sum()).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.data[i * self.n + i]).sum()
    }

    /// Max row sum, an upper bound on the spectral radius.
    pub fn row_norm(&self) -> f64 {
        (0..self.n)
            .map(|i| self.data[i * self.n..(i + 1) * self.n].iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Perron root of a non-negative matrix by power iteration.
    pub fn spectral_radius(&self) -> f64 {
        let n = self.n;
        if n == 0 {
            return 0.0;
        }
        let mut v = vec![1.0; n];
        let mut rho = 0.0;
        for _ in 0..10_000 {
            let w = self.mul_vec(&v);
            let norm = w.iter().cloned().fold(0.0, f64::max);
            if norm == 0.0 {
                return 0.0;
            }
            let next: Vec<f64> = w.iter().map(|x| x / norm).collect();
            let change = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = next;
            let converged = (norm - rho).abs() <= 1e-14 * norm && change < 1e-12;
            rho = norm;
            if converged {
                break;
            }
        }
        rho
    }
}

/// Intensities below this end the level series.
pub const LEVEL_CUTOFF: f64 = 1e-12;
const LEVEL_GUARD: usize = 100_000;
/// Largest `|A|` for which matrix powers are cached for tuple sampling.
const TUPLE_SIDE_GUARD: usize = 400;

/// Poisson process of endpoint tuples. Level `j` has
/// `Poisson((alpha / j) tr(M^j))` tuples.
#[derive(Clone, Debug)]
pub struct EndpointProcess {
    pub alpha: f64,
    pub kernels: ExcursionKernels,
    /// `lambda_j` for `j = 1..=levels.len()`.
    pub levels: Vec<f64>,
    pub spectral_radius: f64,
    pub row_norm: f64,
    /// Upper bound on the total intensity of the omitted levels.
    pub tail_certificate: f64,
    powers: Option<Vec<Matrix>>,
}

impl EndpointProcess {
    pub fn new(alpha: f64, kernels: ExcursionKernels) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return config("intensity must be finite and non-negative");
        }
        let small = if kernels.a.len() <= kernels.b.len() { kernels.m_matrix() } else { kernels.n_matrix() };
        let rho = small.spectral_radius();
        if rho >= 1.0 - 1e-6 {
            return config(format!("spectral radius {rho} of H_AB H_BA is not below one"));
        }
        let norm = small.row_norm();
        if norm >= 1.0 {
            return config(format!("row norm {norm} of H_AB H_BA cannot certify the level tail"));
        }
        let m = small.n as f64;
        let mut levels = Vec::new();
        let mut power = small.clone();
        let mut certificate;
        let mut j = 1usize;
        loop {
            let lambda = alpha * power.trace() / j as f64;
            levels.push(lambda.max(0.0));
            // sum_{i > j} (alpha / i) m norm^i
            certificate = alpha * m * norm.powi(j as i32 + 1) / ((j + 1) as f64 * (1.0 - norm));
            if lambda < LEVEL_CUTOFF && certificate < LEVEL_CUTOFF {
                break;
            }
            if j >= LEVEL_GUARD {
                return Err(Error::Resource("endpoint level series does not terminate".into()));
            }
            power = power.mul(&small);
            j += 1;
        }
        let powers = if kernels.a.len() <= TUPLE_SIDE_GUARD {
            let mm = kernels.m_matrix();
            let mut ps = vec![Matrix::identity(mm.n)];
            for _ in 0..levels.len() {
                let next = ps.last().unwrap().mul(&mm);
                ps.push(next);
            }
            Some(ps)
        } else {
            None
        };
        Ok(EndpointProcess { alpha, kernels, levels, spectral_radius: rho, row_norm: norm, tail_certificate: certificate, powers })
    }

    pub fn max_level(&self) -> usize {
        self.levels.len()
    }

    /// Number of tuples at each level.
    pub fn sample_counts<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<u64> {
        self.levels.iter().map(|l| poisson(rng, *l)).collect()
    }

    /// `Z = sum_j j * count_j`, the number of round trips from `A` to `B`.
    pub fn sample_z<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.sample_counts(rng).iter().enumerate().map(|(i, c)| (i as u64 + 1) * c).sum()
    }

    /// All tuples of one realisation, as index pairs `(a_i, b_i)`.
    pub fn sample_tuples<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<Vec<(usize, usize)>>> {
        let Some(powers) = &self.powers else {
            return Err(Error::Resource(format!(
                "tuple sampling needs |A| <= {TUPLE_SIDE_GUARD}; got {}",
                self.kernels.a.len()
            )));
        };
        let counts = self.sample_counts(rng);
        let mut out = Vec::new();
        for (jm1, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                out.push(self.sample_tuple(jm1 + 1, powers, rng));
            }
        }
        Ok(out)
    }

    fn sample_tuple<R: Rng + ?Sized>(&self, j: usize, powers: &[Matrix], rng: &mut R) -> Vec<(usize, usize)> {
        let k = &self.kernels;
        let (na, nb) = (k.a.len(), k.b.len());
        let pj = &powers[j];
        let diag: Vec<f64> = (0..na).map(|i| pj.data[i * na + i]).collect();
        let a1 = pick(rng, &diag);
        let mut tuple = Vec::with_capacity(j);
        let mut a = a1;
        for i in 1..=j {
            // (M^{j-i})(., a1)
            let col: Vec<f64> = (0..na).map(|r| powers[j - i].data[r * na + a1]).collect();
            let wb: Vec<f64> = (0..nb)
                .map(|b| k.hab(a, b) * (0..na).map(|r| k.hba(b, r) * col[r]).sum::<f64>())
                .collect();
            let b = pick(rng, &wb);
            tuple.push((a, b));
            if i < j {
                let wa: Vec<f64> = (0..na).map(|r| k.hba(b, r) * col[r]).collect();
                a = pick(rng, &wa);
            }
        }
        tuple
    }
}

fn pick<R: Rng + ?Sized>(rng: &mut R, w: &[f64]) -> usize {
    let total: f64 = w.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, x) in w.iter().enumerate() {
        if u < *x {
            return i;
        }
        u -= x;
    }
    w.iter().rposition(|x| *x > 0.0).unwrap_or(0)
}

/// Samples `L^alpha` restricted to loops meeting both `A` and `B` in a killed
/// domain: endpoint tuples joined by bridges conditioned to enter `B` (inner
/// legs) and `A` (outer legs) at the prescribed points.
#[derive(Clone, Debug)]
pub struct ExcursionSampler {
    pub seed: u64,
    pub process: EndpointProcess,
    inner: Vec<HitBridge>,
    outer: Vec<HitBridge>,
}

impl ExcursionSampler {
    pub fn new(dom: &KilledDomain, a: &PointSet, b: &PointSet, alpha: f64, seed: u64, opts: SolverOptions) -> Result<Self> {
        if a.is_empty() || b.is_empty() {
            return domain("both sets must be non-empty");
        }
        if let Some(p) = a.intersection(b).next() {
            return domain(format!("the sets overlap at {p}"));
        }
        for p in a.iter().chain(b.iter()) {
            if !dom.is_alive(p) {
                return domain(format!("{p} is not alive in the domain"));
            }
        }
        let al: Vec<Point> = a.iter().cloned().collect();
        let bl: Vec<Point> = b.iter().cloned().collect();
        let inner: Vec<HitBridge> = bl
            .iter()
            .map(|t| HitBridge::new(dom, b, t, &al, opts))
            .collect::<Result<_>>()?;
        let outer: Vec<HitBridge> = al
            .iter()
            .map(|t| HitBridge::new(dom, a, t, &bl, opts))
            .collect::<Result<_>>()?;
        let (na, nb) = (al.len(), bl.len());
        let mut hab = vec![0.0; na * nb];
        let mut hba = vec![0.0; nb * na];
        for i in 0..na {
            for j in 0..nb {
                hab[i * nb + j] = inner[j].weight(&al[i]);
                hba[j * na + i] = outer[i].weight(&bl[j]);
            }
        }
        let kernels = ExcursionKernels { a: al, b: bl, hab, hba };
        let process = EndpointProcess::new(alpha, kernels)?;
        Ok(ExcursionSampler { seed, process, inner, outer })
    }

    /// The based loops of one replicate, each starting at `a_1`.
    pub fn sample(&self, replicate: u64) -> Result<Vec<BasedLoop>> {
        let mut rng = stream(self.seed, &[replicate, tag::EXCURSION]);
        let tuples = self.process.sample_tuples(&mut rng)?;
        let k = &self.process.kernels;
        let mut out = Vec::with_capacity(tuples.len());
        for t in tuples {
            let j = t.len();
            let mut verts = Vec::new();
            for i in 0..j {
                let (a, b) = t[i];
                let next = t[(i + 1) % j].0;
                let mut leg = self.inner[b].sample(&k.a[a], &mut rng)?;
                leg.pop();
                verts.extend(leg);
                let mut back = self.outer[next].sample(&k.b[b], &mut rng)?;
                back.pop();
                verts.extend(back);
            }
            out.push(BasedLoop::new(verts)?);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TailRow {
    pub k: u64,
    pub frequency: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `exp(alpha - k)`.
    pub bound: f64,
    pub sigma: f64,
    /// `frequency <= bound + 3 sigma`.
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TailReport {
    pub alpha: f64,
    pub replicates: u64,
    /// `max_{y in B} P_y[H_A < killing time]`.
    pub hypothesis_sup: f64,
    /// `hypothesis_sup <= 1 / (2e)`.
    pub hypothesis_holds: bool,
    pub mean_z: f64,
    pub rows: Vec<TailRow>,
}

/// Empirical tail of the number of round trips `Z` against `exp(alpha - k)`.
pub fn tail_check_z(process: &EndpointProcess, replicates: u64, seed: u64, ks: &[u64]) -> TailReport {
    let sup = process.kernels.sup_return_to_a();
    let mut hist: Vec<u64> = Vec::new();
    let mut total = 0u128;
    for r in 0..replicates {
        let mut rng = stream(seed, &[r, tag::ENDPOINTS]);
        let z = process.sample_z(&mut rng) as usize;
        total += z as u128;
        if z >= hist.len() {
            hist.resize(z + 1, 0);
        }
        hist[z] += 1;
    }
    let rows = ks
        .iter()
        .map(|&k| {
            let hits: u64 = hist.iter().skip(k as usize).sum();
            let f = hits as f64 / replicates as f64;
            let bound = (process.alpha - k as f64).exp();
            let sigma = (bound.min(1.0) * (1.0 - bound.min(1.0)) / replicates as f64).sqrt();
            let (lo, hi) = wilson(hits, replicates, 0.99);
            TailRow { k, frequency: f, ci_low: lo, ci_high: hi, bound, sigma, pass: f <= bound + 3.0 * sigma }
        })
        .collect();
    TailReport {
        alpha: process.alpha,
        replicates,
        hypothesis_sup: sup,
        hypothesis_holds: sup <= 1.0 / (2.0 * std::f64::consts::E),
        mean_z: total as f64 / replicates as f64,
        rows,
    }
}

/// One JSON line per tuple: `{"j": .., "tuple": [[a_1, b_1], ...]}` with coordinates.
pub fn write_tuples_jsonl<W: Write>(kernels: &ExcursionKernels, tuples: &[Vec<(usize, usize)>], mut w: W) -> Result<()> {
    for t in tuples {
        let pairs: Vec<[&[i64]; 2]> = t.iter().map(|(a, b)| [kernels.a[*a].coords(), kernels.b[*b].coords()]).collect();
        let rec = serde_json::json!({ "j": t.len(), "tuple": pairs });
        writeln!(w, "{rec}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loops::canonicalize;

    fn pts(list: &[&[i64]]) -> PointSet {
        list.iter().map(|c| Point::new(c)).collect()
    }

    fn based(list: &[&[i64]]) -> BasedLoop {
        BasedLoop::new(list.iter().map(|c| Point::new(c)).collect()).unwrap()
    }

    #[test]
    fn single_crossing_loop() {
        let a = pts(&[&[0, 0, 0]]);
        let b = pts(&[&[1, 0, 0]]);
        let l = canonicalize(&based(&[&[0, 0, 0], &[1, 0, 0]]));
        let reps = representatives_lab(&l, &a, &b);
        assert_eq!(reps.len(), 1);
        let dec = decompose(&reps[0], &a, &b).unwrap();
        assert_eq!(dec.k, 1);
        assert_eq!(dec.inner[0].len(), 2);
        assert_eq!(dec.outer[0], vec![Point::new(&[1, 0, 0]), Point::new(&[0, 0, 0])]);
        assert!(claim1_check(&l, &a, &b).unwrap().holds());
    }

    #[test]
    fn periodic_loop_keeps_the_identity() {
        // two identical round trips: period 2, k = 2, one distinct representative
        let a = pts(&[&[0, 0, 0]]);
        let b = pts(&[&[1, 0, 0]]);
        let l = canonicalize(&based(&[&[0, 0, 0], &[1, 0, 0], &[0, 0, 0], &[1, 0, 0]]));
        let c = claim1_check(&l, &a, &b).unwrap();
        assert_eq!(c.k, 2);
        assert_eq!(c.representatives, 1);
        assert!(c.holds());
    }

    #[test]
    fn loops_missing_a_set_are_rejected() {
        let a = pts(&[&[0, 0, 0]]);
        let b = pts(&[&[5, 0, 0]]);
        let l = canonicalize(&based(&[&[0, 0, 0], &[1, 0, 0]]));
        assert!(claim1_check(&l, &a, &b).is_err());
        assert!(decompose(l.rep(), &a, &b).is_err());
    }

    #[test]
    fn endpoint_levels_match_traces() {
        let dom = KilledDomain::centered(3, 6);
        let a = pts(&[&[0, 0, 0]]);
        let b = crate::lattice::Ball::new(Point::origin(3), 2).sphere();
        let s = ExcursionSampler::new(&dom, &a, &b, 1.0, 3, SolverOptions::default()).unwrap();
        let k = &s.process.kernels;
        let m = k.m_matrix();
        assert!((s.process.levels[0] - m.trace()).abs() < 1e-14);
        assert!((s.process.levels[1] - m.mul(&m).trace() / 2.0).abs() < 1e-14);
        // the one-point case: H_AB rows sum to one inside the sphere
        assert!((k.hab.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for rep in 0..20 {
            for l in s.sample(rep).unwrap() {
                assert!(l.meets(&a) && l.meets(&b));
                assert!(a.contains(&l.verts()[0]));
            }
        }
    }
}
