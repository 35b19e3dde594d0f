//! Based loops, unrooted loops and their exact masses.
//!
//! A based loop of length `n` is a closed nearest-neighbour walk
//! `(x_0, ..., x_{n-1})` with `x_{n-1} ~ x_0`; it carries mass
//! `1 / (n (2d)^n)`. A loop is the rotation class of a based loop, stored as
//! its lexicographically smallest rotation; its mass is the sum over the
//! distinct rotations, `p / (n (2d)^n)` where `p` is the smallest period.
//!
//! Walk counts are kept as exact `u128` integers, so every mass below is an
//! exact rational as long as `(2d)^n` fits in 127 bits.

use std::io::Write;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::lattice::{Point, PointSet, Rect};

/// Largest length accepted by the exhaustive enumerator.
pub const ENUMERATION_MAX_LEN: usize = 12;

/// Upper bound on stored table entries before a resource error is raised.
pub const TABLE_ENTRY_GUARD: usize = 40_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BasedLoop {
    verts: Vec<Point>,
}

impl BasedLoop {
    /// Validates length at least 2, a common dimension and nearest-neighbour
    /// steps including the closing step.
    pub fn new(verts: Vec<Point>) -> Result<Self> {
        if verts.len() < 2 {
            return domain("a based loop needs at least two vertices");
        }
        let d = verts[0].dim();
        if verts.iter().any(|v| v.dim() != d) {
            return domain("based loop vertices have mixed dimensions");
        }
        let n = verts.len();
        for i in 0..n {
            if !verts[i].is_adjacent(&verts[(i + 1) % n]) {
                return domain(format!(
                    "vertices {} and {} of the based loop are not neighbours",
                    i,
                    (i + 1) % n
                ));
            }
        }
        Ok(BasedLoop { verts })
    }

    /// Builds a loop from `n * d` flat coordinates without validation.
    pub fn from_flat(d: usize, flat: &[i64]) -> Self {
        BasedLoop { verts: flat.chunks(d).map(Point::new).collect() }
    }

    pub fn len(&self) -> usize {
        self.verts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.verts.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.verts[0].dim()
    }

    pub fn verts(&self) -> &[Point] {
        &self.verts
    }

    /// The rotation starting at vertex `k`.
    pub fn rotate(&self, k: usize) -> BasedLoop {
        let n = self.len();
        BasedLoop { verts: (0..n).map(|i| self.verts[(i + k) % n].clone()).collect() }
    }

    /// Number of indices `i` with `x_i = p`.
    pub fn visits(&self, p: &Point) -> usize {
        self.verts.iter().filter(|v| *v == p).count()
    }

    pub fn meets(&self, set: &PointSet) -> bool {
        self.verts.iter().any(|v| set.contains(v))
    }

    /// Smallest `p >= 1` with `x_{i+p} = x_i` for all `i`.
    pub fn period(&self) -> usize {
        let n = self.len();
        (1..=n)
            .find(|p| n % p == 0 && (0..n).all(|i| self.verts[i] == self.verts[(i + p) % n]))
            .unwrap_or(n)
    }

    fn rotation_less(&self, a: usize, b: usize) -> bool {
        let n = self.len();
        for i in 0..n {
            let (x, y) = (&self.verts[(a + i) % n], &self.verts[(b + i) % n]);
            if x != y {
                return x < y;
            }
        }
        false
    }
}

/// A loop, stored as the lexicographically smallest rotation.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Loop(BasedLoop);

impl Loop {
    pub fn rep(&self) -> &BasedLoop {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The distinct based loops in this rotation class.
    pub fn rotations(&self) -> Vec<BasedLoop> {
        (0..self.0.period()).map(|k| self.0.rotate(k)).collect()
    }
}

pub fn canonicalize(l: &BasedLoop) -> Loop {
    let mut best = 0;
    for k in 1..l.len() {
        if l.rotation_less(k, best) {
            best = k;
        }
    }
    Loop(l.rotate(best))
}

fn pow_big(base: u64, exp: usize) -> BigInt {
    num_traits::pow(BigInt::from(base), exp)
}

/// `1 / (n (2d)^n)`.
pub fn based_loop_mass(l: &BasedLoop) -> BigRational {
    let n = l.len();
    BigRational::new(BigInt::from(1), BigInt::from(n) * pow_big(2 * l.dim() as u64, n))
}

/// `p / (n (2d)^n)` with `p` the smallest period.
pub fn loop_mass(l: &Loop) -> BigRational {
    let n = l.len();
    BigRational::new(
        BigInt::from(l.0.period()),
        BigInt::from(n) * pow_big(2 * l.0.dim() as u64, n),
    )
}

/// `count / (n (2d)^n)` as an exact rational.
pub fn count_to_mass(count: u128, n: usize, d: usize) -> BigRational {
    if n == 0 {
        return BigRational::zero();
    }
    BigRational::new(BigInt::from(count), BigInt::from(n) * pow_big(2 * d as u64, n))
}

/// Every loop of length at most `max_len` that visits `x`, each exactly once,
/// paired with its mass.
pub fn enumerate_loops_through(x: &Point, max_len: usize) -> Result<Vec<(Loop, BigRational)>> {
    if max_len > ENUMERATION_MAX_LEN {
        return Err(Error::Resource(format!(
            "exhaustive loop enumeration is limited to length {ENUMERATION_MAX_LEN}"
        )));
    }
    let d = x.dim();
    let mut out = Vec::new();
    let mut walk: Vec<Point> = Vec::with_capacity(max_len);
    for n in (2..=max_len).step_by(2) {
        walk.clear();
        walk.push(x.clone());
        closed_walks(x, n, &mut walk, &mut |w: &[Point]| {
            let l = BasedLoop { verts: w.to_vec() };
            // keep one representative per class: the smallest rotation rooted at x
            let minimal = (1..n).all(|k| w[k] != *x || !l.rotation_less(k, 0));
            if minimal {
                let c = canonicalize(&l);
                let m = loop_mass(&c);
                out.push((c, m));
            }
        });
    }
    debug_assert!(out.iter().all(|(l, _)| l.rep().dim() == d));
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

fn closed_walks(root: &Point, n: usize, walk: &mut Vec<Point>, emit: &mut impl FnMut(&[Point])) {
    let cur = walk.last().expect("walk starts at the root").clone();
    let remaining = n + 1 - walk.len();
    if remaining == 0 {
        return;
    }
    if remaining == 1 {
        if cur.is_adjacent(root) {
            emit(walk);
        }
        return;
    }
    for nb in cur.neighbors() {
        if nb.l1_dist(root) as usize <= remaining - 1 {
            walk.push(nb);
            closed_walks(root, n, walk, emit);
            walk.pop();
        }
    }
}

fn check_count_range(d: usize, n_max: usize) -> Result<()> {
    let fits = (2 * d as u128).checked_pow(n_max as u32 + 1).is_some();
    if !fits {
        return Err(Error::Resource(format!(
            "walk counts of length {n_max} in dimension {d} exceed 128-bit integers"
        )));
    }
    Ok(())
}

/// Numbers of nearest-neighbour walks of length `m <= n_max` from the origin to
/// each displacement.
#[derive(Clone, Debug)]
pub struct FreeWalkTable {
    d: usize,
    n_max: usize,
    rects: Vec<Rect>,
    counts: Vec<Vec<u128>>,
}

impl FreeWalkTable {
    pub fn new(d: usize, n_max: usize) -> Result<Self> {
        check_count_range(d, n_max)?;
        let entries: usize = (0..=n_max).map(|m| (2 * m + 1).pow(d as u32)).sum();
        if entries > TABLE_ENTRY_GUARD {
            return Err(Error::Resource(format!("free walk table would hold {entries} entries")));
        }
        let origin = Point::origin(d);
        let mut rects = Vec::with_capacity(n_max + 1);
        let mut counts: Vec<Vec<u128>> = Vec::with_capacity(n_max + 1);
        let r0 = Rect::around(&origin, 0);
        counts.push(vec![1]);
        rects.push(r0);
        let mut buf = vec![0i64; d];
        for m in 1..=n_max {
            let rect = Rect::around(&origin, m as i64);
            let prev_rect = &rects[m - 1];
            let prev = &counts[m - 1];
            let mut cur = vec![0u128; rect.len()];
            for (idx, slot) in cur.iter_mut().enumerate() {
                rect.coords_at(idx, &mut buf);
                let mut s = 0u128;
                for k in 0..d {
                    for delta in [-1i64, 1] {
                        buf[k] += delta;
                        if let Some(j) = prev_rect.index_of_coords(&buf) {
                            s += prev[j];
                        }
                        buf[k] -= delta;
                    }
                }
                *slot = s;
            }
            rects.push(rect);
            counts.push(cur);
        }
        Ok(FreeWalkTable { d, n_max, rects, counts })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Number of walks of length `m` with total displacement `disp`.
    #[inline]
    pub fn count(&self, disp: &[i64], m: usize) -> u128 {
        match self.rects[m].index_of_coords(disp) {
            Some(i) => self.counts[m][i],
            None => 0,
        }
    }

    /// Number of closed walks of length `m`: `(2d)^m P_0[X_m = 0]`.
    pub fn returns(&self, m: usize) -> u128 {
        self.count(&vec![0; self.d], m)
    }

    /// `P_0[X_m = 0]`.
    pub fn return_probability(&self, m: usize) -> f64 {
        self.returns(m) as f64 / (2.0 * self.d as f64).powi(m as i32)
    }
}

/// Exact masses of based loops per root and length, split by whether the walk
/// visits a finite window.
///
/// For a root `x` and length `n`, the total count is the number of closed
/// walks of length `n` from `x`; the visiting count is computed by a
/// first-entrance decomposition: the walk first enters the window at some
/// `w` at time `t < n` and then returns freely. Entrance counts are obtained
/// from the reversed walk started at `w` and killed on re-entering the window.
#[derive(Clone, Debug)]
pub struct MassTable {
    d: usize,
    n_max: usize,
    window: Vec<Point>,
    region: Rect,
    in_window: Vec<bool>,
    /// `[w][s][region index]` for `s < n_max`.
    entrance: Vec<u128>,
    roots: Vec<Point>,
    /// `[root][n]` for `n <= n_max`.
    visit: Vec<u128>,
    free: FreeWalkTable,
}

impl MassTable {
    pub fn new(window: &PointSet, n_max: usize) -> Result<Self> {
        let Some(first) = window.iter().next() else {
            return domain("the window is empty");
        };
        if n_max < 2 {
            return Err(Error::Config("the length cutoff must be at least 2".into()));
        }
        let d = first.dim();
        let free = FreeWalkTable::new(d, n_max)?;
        let half = (n_max / 2) as i64;
        let region = Rect::bounding(window, half).expect("non-empty window");
        let layers = n_max;
        let entries = window.len().saturating_mul(layers).saturating_mul(region.len());
        if entries > TABLE_ENTRY_GUARD {
            return Err(Error::Resource(format!(
                "entrance table would hold {entries} entries; use the thinning sampler for large windows"
            )));
        }
        let wlist: Vec<Point> = window.iter().cloned().collect();
        let mut in_window = vec![false; region.len()];
        for w in &wlist {
            in_window[region.index_of(w).expect("window inside region")] = true;
        }
        let neighbours = neighbour_offsets(&region);
        let rl = region.len();
        let mut entrance = vec![0u128; wlist.len() * layers * rl];
        for (wi, w) in wlist.iter().enumerate() {
            let base = wi * layers * rl;
            entrance[base + region.index_of(w).unwrap()] = 1;
            for s in 1..layers {
                let (prev, cur) = entrance[base + (s - 1) * rl..base + (s + 1) * rl].split_at_mut(rl);
                for idx in 0..rl {
                    if in_window[idx] {
                        continue;
                    }
                    let mut acc = 0u128;
                    for &(k, off) in &neighbours {
                        if let Some(j) = step_index(&region, idx, k, off) {
                            acc += prev[j];
                        }
                    }
                    cur[idx] = acc;
                }
            }
        }
        let mut roots = Vec::new();
        let mut buf = vec![0i64; d];
        for idx in 0..rl {
            region.coords_at(idx, &mut buf);
            let p = Point::new(&buf);
            if wlist.iter().any(|w| w.l1_dist(&p) <= half) {
                roots.push(p);
            }
        }
        let mut table = MassTable {
            d,
            n_max,
            window: wlist,
            region,
            in_window,
            entrance,
            roots,
            visit: Vec::new(),
            free,
        };
        let mut visit = vec![0u128; table.roots.len() * (n_max + 1)];
        let mut disp = vec![0i64; d];
        for (ri, x) in table.roots.iter().enumerate() {
            let xi = table.region.index_of(x).unwrap();
            for (wi, w) in table.window.iter().enumerate() {
                for k in 0..d {
                    disp[k] = x.0[k] - w.0[k];
                }
                let dist = disp.iter().map(|v| v.abs()).sum::<i64>() as usize;
                for t in dist..n_max {
                    let g = table.entrance_at(wi, t, xi);
                    if g == 0 {
                        continue;
                    }
                    for n in (t + 1).max(2)..=n_max {
                        visit[ri * (n_max + 1) + n] += g * table.free.count(&disp, n - t);
                    }
                }
            }
        }
        table.visit = visit;
        Ok(table)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn window(&self) -> &[Point] {
        &self.window
    }

    pub fn roots(&self) -> &[Point] {
        &self.roots
    }

    pub fn free(&self) -> &FreeWalkTable {
        &self.free
    }

    pub fn region(&self) -> &Rect {
        &self.region
    }

    pub fn in_window_index(&self, region_idx: usize) -> bool {
        self.in_window[region_idx]
    }

    #[inline]
    pub(crate) fn entrance_at(&self, w: usize, s: usize, region_idx: usize) -> u128 {
        let rl = self.region.len();
        self.entrance[(w * self.n_max + s) * rl + region_idx]
    }

    /// Number of walks of length `s` from window point `w` to `z` whose
    /// positions `1..=s` avoid the window.
    pub fn entrance_count(&self, w: usize, z: &[i64], s: usize) -> u128 {
        if s >= self.n_max {
            return 0;
        }
        match self.region.index_of_coords(z) {
            Some(i) => self.entrance_at(w, s, i),
            None => 0,
        }
    }

    /// Closed walks of length `n` from any root.
    pub fn total_count(&self, n: usize) -> u128 {
        self.free.returns(n)
    }

    /// Closed walks of length `n` from `roots()[root]` visiting the window.
    pub fn visit_count(&self, root: usize, n: usize) -> u128 {
        self.visit[root * (self.n_max + 1) + n]
    }

    pub fn avoid_count(&self, root: usize, n: usize) -> u128 {
        self.total_count(n) - self.visit_count(root, n)
    }

    /// Index of `p` among the roots; points farther than `n_max / 2` from the
    /// window carry no visiting mass and are not roots.
    pub fn root_index(&self, p: &Point) -> Option<usize> {
        self.roots.binary_search(p).ok()
    }

    pub fn total_mass(&self, n: usize) -> BigRational {
        count_to_mass(self.total_count(n), n, self.d)
    }

    pub fn visit_mass(&self, root: usize, n: usize) -> BigRational {
        count_to_mass(self.visit_count(root, n), n, self.d)
    }

    pub fn avoid_mass(&self, root: usize, n: usize) -> BigRational {
        count_to_mass(self.avoid_count(root, n), n, self.d)
    }

    /// `mu` of the loops of length `n` that meet the window.
    pub fn window_mass_at(&self, n: usize) -> BigRational {
        let s: u128 = (0..self.roots.len()).map(|r| self.visit_count(r, n)).sum();
        count_to_mass(s, n, self.d)
    }

    /// `mu` of the loops of length at most `n_max` that meet the window.
    pub fn window_mass(&self) -> BigRational {
        (2..=self.n_max).fold(BigRational::zero(), |acc, n| acc + self.window_mass_at(n))
    }

    pub fn window_mass_f64(&self) -> f64 {
        (2..=self.n_max)
            .map(|n| {
                let s: u128 = (0..self.roots.len()).map(|r| self.visit_count(r, n)).sum();
                s as f64 / (n as f64 * (2.0 * self.d as f64).powi(n as i32))
            })
            .sum()
    }

    /// CSV with one row per root and length with non-zero visiting count.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let coord_names: Vec<String> = (0..self.d).map(|k| format!("x{k}")).collect();
        writeln!(w, "{},n,total,visit,avoid", coord_names.join(","))?;
        for (ri, root) in self.roots.iter().enumerate() {
            for n in 2..=self.n_max {
                if self.visit_count(ri, n) == 0 {
                    continue;
                }
                let coords: Vec<String> = root.coords().iter().map(|c| c.to_string()).collect();
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    coords.join(","),
                    n,
                    self.total_mass(n),
                    self.visit_mass(ri, n),
                    self.avoid_mass(ri, n)
                )?;
            }
        }
        Ok(())
    }
}

/// `(axis, delta)` pairs in the neighbour order used throughout.
pub(crate) fn neighbour_offsets(rect: &Rect) -> Vec<(usize, i64)> {
    (0..rect.dim()).flat_map(|k| [(k, -1i64), (k, 1i64)]).collect()
}

/// Index of the neighbour of `idx` along `axis`, if it lies in `rect`.
#[inline]
pub(crate) fn step_index(rect: &Rect, idx: usize, axis: usize, delta: i64) -> Option<usize> {
    let stride = rect.stride(axis);
    let off = (idx / stride) % rect.side(axis);
    if delta < 0 {
        (off > 0).then(|| idx - stride)
    } else {
        (off + 1 < rect.side(axis)).then(|| idx + stride)
    }
}
