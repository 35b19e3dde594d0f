//! Poisson loop soups restricted to loops of length at most `n_max` that meet
//! a window.
//!
//! Two exact samplers are provided.
//!
//! * [`Strategy::Conditioned`] draws the number of loops per (root, length)
//!   class with intensity `alpha * mass(window-visiting bridges)` and samples
//!   each bridge conditioned to visit the window: the first entrance `(t, w)`
//!   is drawn from the exact entrance counts, the walk up to `t` follows the
//!   reversed killed counts and the rest is a free bridge. Nothing is rejected.
//! * [`Strategy::Thinning`] draws free bridges for every root within reach and
//!   discards those that miss the window. This is the Poisson thinning of the
//!   same process and needs no window-dependent tables, so it scales to large
//!   box windows.
//!
//! Classes are pooled into a single Poisson count followed by a categorical
//! class choice, which gives the same process.

use std::io::Write;
use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rand::distributions::Distribution;
use rand::Rng;
use rand_distr::{Poisson, WeightedAliasIndex};
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::lattice::{Ball, Point, PointSet, Rect};
use crate::loops::{canonicalize, BasedLoop, FreeWalkTable, Loop, MassTable};
use crate::rng::{stream, tag, StreamRng};

/// Region whose visiting loops are sampled and where local times are kept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Window {
    Ball(Ball),
    Points(PointSet),
}

impl Window {
    pub fn dim(&self) -> usize {
        match self {
            Window::Ball(b) => b.dim(),
            Window::Points(s) => s.iter().next().map_or(0, |p| p.dim()),
        }
    }

    pub fn rect(&self) -> Option<Rect> {
        match self {
            Window::Ball(b) => Some(b.rect()),
            Window::Points(s) => Rect::bounding(s, 0),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Window::Ball(b) => b.rect().len(),
            Window::Points(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, p: &Point) -> bool {
        match self {
            Window::Ball(b) => b.contains(p),
            Window::Points(s) => s.contains(p),
        }
    }

    pub fn points(&self) -> PointSet {
        match self {
            Window::Ball(b) => b.points(),
            Window::Points(s) => s.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoupConfig {
    pub alpha: f64,
    pub window: Window,
    pub n_max: usize,
    pub seed: u64,
    pub d: usize,
}

impl SoupConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return config(format!("intensity {} must be finite and non-negative", self.alpha));
        }
        if self.n_max < 2 {
            return config("the length cutoff must be at least 2");
        }
        if self.d == 0 {
            return config("dimension must be positive");
        }
        if self.window.is_empty() {
            return config("the window is empty");
        }
        if self.window.dim() != self.d {
            return config("window dimension differs from the soup dimension");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    Conditioned,
    Thinning,
}

#[derive(Clone, Debug)]
enum Mode {
    Conditioned {
        table: Arc<MassTable>,
        classes: Arc<Vec<(u32, u16)>>,
        alias: Option<Arc<WeightedAliasIndex<f64>>>,
        /// Total mass of the classes (intensity per unit alpha).
        mass: f64,
    },
    Thinning {
        free: Arc<FreeWalkTable>,
        roots: Rect,
        /// `(n, expected count per unit alpha)`.
        rates: Vec<(usize, f64)>,
    },
}

/// Sampler for `L^alpha` restricted to loops of length `<= n_max` meeting the window.
#[derive(Clone, Debug)]
pub struct DirectSampler {
    cfg: SoupConfig,
    rect: Rect,
    mask: Option<Arc<Vec<bool>>>,
    mode: Mode,
}

impl DirectSampler {
    pub fn new(cfg: &SoupConfig, strategy: Strategy) -> Result<Self> {
        cfg.validate()?;
        let rect = cfg.window.rect().expect("validated window");
        let mask = match &cfg.window {
            Window::Ball(_) => None,
            Window::Points(s) => {
                let mut m = vec![false; rect.len()];
                for p in s {
                    m[rect.index_of(p).unwrap()] = true;
                }
                Some(Arc::new(m))
            }
        };
        let mode = match strategy {
            Strategy::Conditioned => {
                let table = MassTable::new(&cfg.window.points(), cfg.n_max)?;
                let mut classes = Vec::new();
                let mut weights = Vec::new();
                let base = 2.0 * cfg.d as f64;
                for r in 0..table.roots().len() {
                    for n in 2..=cfg.n_max {
                        let c = table.visit_count(r, n);
                        if c > 0 {
                            classes.push((r as u32, n as u16));
                            weights.push(c as f64 / (n as f64 * base.powi(n as i32)));
                        }
                    }
                }
                let mass: f64 = weights.iter().sum();
                let alias = if weights.is_empty() {
                    None
                } else {
                    Some(Arc::new(
                        WeightedAliasIndex::new(weights).map_err(|e| Error::Numerical(e.to_string()))?,
                    ))
                };
                Mode::Conditioned { table: Arc::new(table), classes: Arc::new(classes), alias, mass }
            }
            Strategy::Thinning => {
                let free = FreeWalkTable::new(cfg.d, cfg.n_max)?;
                let half = (cfg.n_max / 2) as i64;
                let roots = Rect::new(
                    rect.lo.iter().map(|v| v - half).collect(),
                    rect.hi.iter().map(|v| v + half).collect(),
                );
                let base = 2.0 * cfg.d as f64;
                let rates = (2..=cfg.n_max)
                    .step_by(2)
                    .map(|n| (n, roots.len() as f64 * free.returns(n) as f64 / (n as f64 * base.powi(n as i32))))
                    .collect();
                Mode::Thinning { free: Arc::new(free), roots, rates }
            }
        };
        Ok(DirectSampler { cfg: cfg.clone(), rect, mask, mode })
    }

    pub fn config(&self) -> &SoupConfig {
        &self.cfg
    }

    pub fn strategy(&self) -> Strategy {
        match self.mode {
            Mode::Conditioned { .. } => Strategy::Conditioned,
            Mode::Thinning { .. } => Strategy::Thinning,
        }
    }

    /// The same sampler at another intensity; tables are shared.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        let mut s = self.clone();
        s.cfg.alpha = alpha;
        s.cfg.validate()?;
        Ok(s)
    }

    pub fn mass_table(&self) -> Option<&MassTable> {
        match &self.mode {
            Mode::Conditioned { table, .. } => Some(table),
            Mode::Thinning { .. } => None,
        }
    }

    #[inline]
    pub fn in_window(&self, c: &[i64]) -> bool {
        match self.rect.index_of_coords(c) {
            None => false,
            Some(i) => self.mask.as_ref().map_or(true, |m| m[i]),
        }
    }

    /// Generator for a replicate; `layer` separates independent soups used
    /// for superposition.
    pub fn rng(&self, replicate: u64, layer: u64) -> StreamRng {
        stream(self.cfg.seed, &[replicate, layer, tag::SOUP])
    }

    /// Streams every sampled based loop to `sink` as `n * d` flat coordinates.
    /// Returns the number of loops.
    pub fn sample_into(&self, replicate: u64, layer: u64, sink: &mut dyn FnMut(&[i64])) -> usize {
        let mut rng = self.rng(replicate, layer);
        let alpha = self.cfg.alpha;
        let d = self.cfg.d;
        let mut buf: Vec<i64> = Vec::with_capacity(self.cfg.n_max * d);
        let mut emitted = 0;
        match &self.mode {
            Mode::Conditioned { table, classes, alias, mass } => {
                let Some(alias) = alias else { return 0 };
                let count = poisson(&mut rng, alpha * mass);
                for _ in 0..count {
                    let (r, n) = classes[alias.sample(&mut rng)];
                    buf.clear();
                    sample_conditioned(table, r as usize, n as usize, &mut rng, &mut buf);
                    sink(&buf);
                    emitted += 1;
                }
            }
            Mode::Thinning { free, roots, rates } => {
                let mut root = vec![0i64; d];
                for &(n, rate) in rates {
                    let count = poisson(&mut rng, alpha * rate);
                    for _ in 0..count {
                        let idx = rng.gen_range(0..roots.len());
                        roots.coords_at(idx, &mut root);
                        buf.clear();
                        free_bridge(free, &root, &root, n, &mut rng, &mut buf, true);
                        if buf.chunks(d).any(|c| self.in_window(c)) {
                            sink(&buf);
                            emitted += 1;
                        }
                    }
                }
            }
        }
        emitted
    }

    /// A full replicate with canonical loops and window local times.
    pub fn sample(&self, replicate: u64) -> SoupSample {
        self.sample_layer(replicate, 0)
    }

    pub fn sample_layer(&self, replicate: u64, layer: u64) -> SoupSample {
        let d = self.cfg.d;
        let mut lt = LocalTimeField::new(&self.cfg.window);
        let mut loops = Vec::new();
        self.sample_into(replicate, layer, &mut |flat| {
            lt.add_loop(flat);
            loops.push(canonicalize(&BasedLoop::from_flat(d, flat)));
        });
        loops.sort();
        SoupSample { replicate, loops, local_time: lt }
    }
}

pub(crate) fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as u64
}

fn pick<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).expect("some positive weight")
}

/// Appends `m` steps of a walk from `from` conditioned to be at `to` after
/// `m` steps. Pushes `from` (if `include_start`) and the intermediate
/// positions, not the final one.
fn free_bridge<R: Rng + ?Sized>(
    free: &FreeWalkTable,
    from: &[i64],
    to: &[i64],
    m: usize,
    rng: &mut R,
    out: &mut Vec<i64>,
    include_start: bool,
) {
    let d = from.len();
    let mut cur = from.to_vec();
    let mut disp = vec![0i64; d];
    let mut w = vec![0.0f64; 2 * d];
    if include_start {
        out.extend_from_slice(&cur);
    }
    for s in 0..m - 1 {
        let rem = m - s - 1;
        for k in 0..d {
            disp[k] = to[k] - cur[k];
        }
        for k in 0..d {
            disp[k] += 1;
            w[2 * k] = free.count(&disp, rem) as f64;
            disp[k] -= 2;
            w[2 * k + 1] = free.count(&disp, rem) as f64;
            disp[k] += 1;
        }
        let c = pick(rng, &w);
        cur[c / 2] += if c % 2 == 0 { -1 } else { 1 };
        out.extend_from_slice(&cur);
    }
}

fn sample_conditioned<R: Rng + ?Sized>(table: &MassTable, r: usize, n: usize, rng: &mut R, out: &mut Vec<i64>) {
    let d = table.dim();
    let root = table.roots()[r].coords().to_vec();
    let ri = table.region().index_of_coords(&root).expect("root inside region");
    let free = table.free();
    // first entrance (w, t)
    let mut choices = Vec::new();
    let mut weights = Vec::new();
    let mut disp = vec![0i64; d];
    for (wi, w) in table.window().iter().enumerate() {
        for k in 0..d {
            disp[k] = root[k] - w.0[k];
        }
        let dist = disp.iter().map(|v| v.abs()).sum::<i64>() as usize;
        for t in dist..n.min(table.n_max()) {
            let g = table.entrance_at(wi, t, ri);
            if g > 0 {
                let f = free.count(&disp, n - t);
                if f > 0 {
                    choices.push((wi, t));
                    weights.push(g as f64 * f as f64);
                }
            }
        }
    }
    let (wi, t) = choices[pick(rng, &weights)];
    let w = table.window()[wi].coords().to_vec();
    // walk from the root to w, avoiding the window before time t
    let mut cur = root.clone();
    out.extend_from_slice(&cur);
    let mut wts = vec![0.0f64; 2 * d];
    for s in 0..t {
        let rem = t - s - 1;
        for k in 0..d {
            cur[k] -= 1;
            wts[2 * k] = table.entrance_count(wi, &cur, rem) as f64;
            cur[k] += 2;
            wts[2 * k + 1] = table.entrance_count(wi, &cur, rem) as f64;
            cur[k] -= 1;
        }
        let c = pick(rng, &wts);
        cur[c / 2] += if c % 2 == 0 { -1 } else { 1 };
        out.extend_from_slice(&cur);
    }
    debug_assert_eq!(cur, w);
    // free return to the root
    free_bridge(free, &w, &root, n - t, rng, out, false);
}

/// Local times over the window's bounding rectangle.
#[derive(Clone, Debug)]
pub struct LocalTimeField {
    window: Window,
    rect: Rect,
    counts: Vec<u32>,
}

impl LocalTimeField {
    pub fn new(window: &Window) -> Self {
        let rect = window.rect().expect("non-empty window");
        let n = rect.len();
        LocalTimeField { window: window.clone(), rect, counts: vec![0; n] }
    }

    pub fn rect(&self) -> &Rect {
        &self.rect
    }

    pub fn add_loop(&mut self, flat: &[i64]) {
        let d = self.rect.dim();
        for c in flat.chunks(d) {
            if let Some(i) = self.rect.index_of_coords(c) {
                self.counts[i] += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &LocalTimeField) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    /// Local time at `p`; points outside the window read as zero.
    pub fn get(&self, p: &Point) -> u32 {
        if !self.window.contains(p) {
            return 0;
        }
        self.rect.index_of(p).map_or(0, |i| self.counts[i])
    }

    pub fn get_index(&self, idx: usize) -> u32 {
        self.counts[idx]
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    /// Window points with positive local time and their local times.
    pub fn occupied(&self) -> Vec<(Point, u32)> {
        self.rect
            .iter()
            .zip(&self.counts)
            .filter(|(p, c)| **c > 0 && self.window.contains(p))
            .map(|(p, c)| (p, *c))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct SoupSample {
    pub replicate: u64,
    /// Canonical loops, sorted.
    pub loops: Vec<Loop>,
    pub local_time: LocalTimeField,
}

impl SoupSample {
    /// Union with an independent soup on the same window.
    pub fn superpose(&self, other: &SoupSample) -> SoupSample {
        let mut loops = self.loops.clone();
        loops.extend(other.loops.iter().cloned());
        loops.sort();
        let mut lt = self.local_time.clone();
        lt.merge(&other.local_time);
        SoupSample { replicate: self.replicate, loops, local_time: lt }
    }
}

/// `x -> N(x)` on the window.
pub fn local_time_field(sample: &SoupSample) -> &LocalTimeField {
    &sample.local_time
}

/// Window points never visited by the sampled loops.
pub fn vacant_set(sample: &SoupSample) -> PointSet {
    let lt = &sample.local_time;
    lt.rect
        .iter()
        .zip(&lt.counts)
        .filter(|(p, c)| **c == 0 && lt.window.contains(p))
        .map(|(p, _)| p)
        .collect()
}

pub(crate) fn ln_big(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 1000 {
        return x.to_f64().expect("finite").ln();
    }
    let shift = bits - 64;
    ((x >> shift).to_f64().expect("finite")).ln() + shift as f64 * std::f64::consts::LN_2
}

/// `P_0[X_{2k} = 0]` for `k = 0..=kmax`, from the closed-walk count
/// `C(2k, k) S_d(k)` with `S_d(k) = sum_j C(k, j)^2 S_{d-1}(k - j)`.
pub fn return_probabilities(d: usize, kmax: usize) -> Vec<f64> {
    let mut binom: Vec<Vec<BigUint>> = Vec::with_capacity(2 * kmax + 1);
    for n in 0..=2 * kmax {
        let mut row = vec![BigUint::one(); n + 1];
        for j in 1..n {
            row[j] = &binom[n - 1][j - 1] + &binom[n - 1][j];
        }
        binom.push(row);
    }
    let mut s: Vec<BigUint> = vec![BigUint::one(); kmax + 1];
    for _ in 1..d {
        let mut next = vec![BigUint::zero(); kmax + 1];
        for (k, slot) in next.iter_mut().enumerate() {
            for j in 0..=k {
                let c = &binom[k][j];
                *slot += c * c * &s[k - j];
            }
        }
        s = next;
    }
    let ln2d = (2.0 * d as f64).ln();
    (0..=kmax)
        .map(|k| {
            let count = &binom[2 * k][k] * &s[k];
            (ln_big(&count) - 2.0 * k as f64 * ln2d).exp()
        })
        .collect()
}

/// Scan length for the power-law envelope of return probabilities.
const ENVELOPE_SCAN: usize = 150;

/// Upper bound on `alpha * mu(loops meeting the window with length > n_max)`.
///
/// A loop of length `n` through a point `w` has mass at most `(2d)^{-n}` and
/// owns a rotation rooted at `w`, so the mass of such loops is at most
/// `P_w[X_n = w]`. Summing over window points gives `|W| sum_{n > N} p_n`.
/// The tail of `p_{2k}` is bounded by `C k^{-d/2}` with `C` the largest value
/// of `k^{d/2} p_{2k}` over `K < k <= max(K + 1, 150)` and the local limit
/// constant `2 (d / 4 pi)^{d/2}`, then integrated.
pub fn tail_mass_bound(cfg: &SoupConfig) -> Result<f64> {
    cfg.validate()?;
    if cfg.d < 3 {
        return config("the tail bound needs a transient walk (d >= 3)");
    }
    if cfg.alpha == 0.0 {
        return Ok(0.0);
    }
    let d = cfg.d as f64;
    let k0 = cfg.n_max / 2;
    let scan = ENVELOPE_SCAN.max(k0 + 1);
    let p = return_probabilities(cfg.d, scan);
    let limit = 2.0 * (d / (4.0 * std::f64::consts::PI)).powf(d / 2.0);
    let envelope = (k0 + 1..=scan)
        .map(|k| (k as f64).powf(d / 2.0) * p[k])
        .fold(limit, f64::max);
    let kf = k0.max(1) as f64;
    let tail = envelope * kf.powf(1.0 - d / 2.0) / (d / 2.0 - 1.0);
    Ok(cfg.alpha * cfg.window.len() as f64 * tail)
}

#[derive(Serialize)]
struct DumpHeader<'a> {
    kind: &'static str,
    config: &'a SoupConfig,
    replicate: u64,
    loops: usize,
    tail_bound: f64,
}

#[derive(Serialize)]
struct DumpLoop<'a> {
    len: usize,
    verts: Vec<&'a [i64]>,
}

/// Header record followed by one `{"len": n, "verts": [...]}` line per loop.
pub fn write_sample_jsonl<W: Write>(cfg: &SoupConfig, sample: &SoupSample, mut w: W) -> Result<()> {
    let header = DumpHeader {
        kind: "soup",
        config: cfg,
        replicate: sample.replicate,
        loops: sample.loops.len(),
        tail_bound: tail_mass_bound(cfg)?,
    };
    writeln!(w, "{}", serde_json::to_string(&header).map_err(|e| Error::Numerical(e.to_string()))?)?;
    for l in &sample.loops {
        let rec = DumpLoop { len: l.len(), verts: l.rep().verts().iter().map(|p| p.coords()).collect() };
        writeln!(w, "{}", serde_json::to_string(&rec).map_err(|e| Error::Numerical(e.to_string()))?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(d: usize) -> Window {
        Window::Points([Point::origin(d)].into_iter().collect())
    }

    fn cfg(alpha: f64, window: Window, n_max: usize) -> SoupConfig {
        let d = window.dim();
        SoupConfig { alpha, window, n_max, seed: 11, d }
    }

    #[test]
    fn return_probabilities_match_walk_counts() {
        let p = return_probabilities(3, 4);
        let t = FreeWalkTable::new(3, 8).unwrap();
        for k in 0..=4 {
            assert!((p[k] - t.return_probability(2 * k)).abs() < 1e-15);
        }
    }

    #[test]
    fn conditioned_loops_are_valid_and_meet_the_window() {
        let w = Window::Points(Ball::new(Point::origin(3), 1).sphere());
        let s = DirectSampler::new(&cfg(2.0, w.clone(), 8), Strategy::Conditioned).unwrap();
        for rep in 0..50 {
            let sample = s.sample(rep);
            for l in &sample.loops {
                assert!(l.len() <= 8);
                assert!(BasedLoop::new(l.rep().verts().to_vec()).is_ok());
                assert!(l.rep().verts().iter().any(|v| w.contains(v)));
            }
        }
    }

    #[test]
    fn zero_intensity_is_empty() {
        let s = DirectSampler::new(&cfg(0.0, single(3), 4), Strategy::Conditioned).unwrap();
        assert!(s.sample(0).loops.is_empty());
        assert_eq!(tail_mass_bound(&cfg(0.0, single(3), 4)).unwrap(), 0.0);
    }

    #[test]
    fn tail_bound_decreases_with_cutoff() {
        let b: Vec<f64> = [8, 16, 32].iter().map(|n| tail_mass_bound(&cfg(1.0, single(3), *n)).unwrap()).collect();
        assert!(b[0] > b[1] && b[1] > b[2]);
    }

    #[test]
    fn samples_are_reproducible() {
        let s = DirectSampler::new(&cfg(1.0, Window::Ball(Ball::new(Point::origin(3), 1)), 6), Strategy::Thinning).unwrap();
        assert_eq!(s.sample(3).loops, s.sample(3).loops);
    }
}
