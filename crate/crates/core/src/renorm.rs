//! Renormalization geometry: frames of boxes, good and bad boxes, bad
//! `*`-components, dyadic tree embeddings, scale sequences, cascading events
//! and the arithmetic of the seed-event induction.

use std::collections::HashMap;
use std::io::Write;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};
use crate::lattice::{is_connected, Ball, Point, PointSet, Rect};
use crate::rng::{stream, tag};
use crate::soup::{ln_big, LocalTimeField};

/// Width of the band of near-extreme coordinate values that defines a frame.
pub const FRAME_BAND: i64 = 2;

/// The near-edge skeleton `E(x')` of the box `Q(x') = B(x', R)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub center: Point,
    pub radius: i64,
}

impl Frame {
    pub fn new(center: Point, radius: i64) -> Result<Self> {
        if radius < 1 {
            return config(format!("box radius {radius} must be at least 1"));
        }
        Ok(Frame { center, radius })
    }

    /// Side of the coarse lattice whose boxes tile `Z^d`, `2R + 1`.
    pub fn spacing(&self) -> i64 {
        2 * self.radius + 1
    }

    pub fn cube(&self) -> Ball {
        Ball::new(self.center.clone(), self.radius)
    }

    pub fn contains(&self, y: &Point) -> bool {
        frame_offset_member(&y.sub(&self.center), self.radius)
    }

    /// All points of the frame, by a scan of the box.
    pub fn points(&self) -> PointSet {
        self.cube().rect().iter().filter(|y| self.contains(y)).collect()
    }
}

/// Membership of the offset `y - x'` in `E(0)`.
pub fn frame_offset_member(offset: &Point, radius: i64) -> bool {
    let c = offset.coords();
    if c.iter().any(|v| v.abs() > radius) {
        return false;
    }
    c.iter().filter(|v| v.abs() >= radius - FRAME_BAND).count() >= 2
}

pub fn frame_membership(y: &Point, frame: &Frame) -> bool {
    frame.contains(y)
}

/// Connectivity of a frame and of the union of two neighbouring frames.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameConnectivity {
    pub radius: i64,
    pub d: usize,
    pub frame_size: usize,
    pub frame_connected: bool,
    /// One entry per coarse direction `+-e_i`.
    pub pairs_connected: Vec<bool>,
}

impl FrameConnectivity {
    pub fn holds(&self) -> bool {
        self.frame_connected && self.pairs_connected.iter().all(|&b| b)
    }
}

pub fn frame_connectivity(d: usize, radius: i64) -> Result<FrameConnectivity> {
    let frame = Frame::new(Point::origin(d), radius)?;
    let pts = frame.points();
    let mut pairs = Vec::with_capacity(2 * d);
    for axis in 0..d {
        for sign in [-1, 1] {
            let other = Frame::new(Point::axis(d, axis, sign * frame.spacing()), radius)?;
            let mut union = pts.clone();
            union.extend(other.points());
            pairs.push(is_connected(&union));
        }
    }
    Ok(FrameConnectivity {
        radius,
        d,
        frame_size: pts.len(),
        frame_connected: is_connected(&pts),
        pairs_connected: pairs,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoxClass {
    Good,
    Bad,
}

/// Default bound on the boundary local time of a good box, `R^{d-1}`.
pub fn default_threshold(radius: i64, d: usize) -> u64 {
    (radius as u64).pow(d as u32 - 1)
}

/// Good iff the frame is unvisited and the local time summed over the inner
/// boundary of the box is at most `threshold`. `local_time` returns `None`
/// at points it does not cover.
pub fn classify_box(
    center: &Point,
    radius: i64,
    threshold: u64,
    local_time: &dyn Fn(&Point) -> Option<u32>,
) -> Result<BoxClass> {
    let frame = Frame::new(center.clone(), radius)?;
    let mut frame_hit = false;
    let mut boundary: u64 = 0;
    for y in frame.cube().rect().iter() {
        let Some(n) = local_time(&y) else {
            return domain(format!("local times do not cover {y} in the box around {center}"));
        };
        if n > 0 && frame.contains(&y) {
            frame_hit = true;
        }
        if y.sup_dist(center) == radius {
            boundary += n as u64;
        }
    }
    Ok(if frame_hit || boundary > threshold { BoxClass::Bad } else { BoxClass::Good })
}

/// Covered local times of a sampled field.
pub fn field_lookup(field: &LocalTimeField) -> impl Fn(&Point) -> Option<u32> + '_ {
    move |p| field.window().contains(p).then(|| field.get(p))
}

/// Classification of the coarse points `spacing * k`, `k` in a rectangle of
/// coarse indices.
#[derive(Clone, Debug, PartialEq)]
pub struct GoodBadField {
    radius: i64,
    threshold: u64,
    coarse: Rect,
    bad: Vec<bool>,
}

impl GoodBadField {
    pub fn from_local_times(
        coarse: Rect,
        radius: i64,
        threshold: Option<u64>,
        local_time: &dyn Fn(&Point) -> Option<u32>,
    ) -> Result<Self> {
        let threshold = threshold.unwrap_or_else(|| default_threshold(radius, coarse.dim()));
        let spacing = 2 * radius + 1;
        let mut bad = Vec::with_capacity(coarse.len());
        for k in coarse.iter() {
            let class = classify_box(&k.scale(spacing), radius, threshold, local_time)?;
            bad.push(class == BoxClass::Bad);
        }
        Ok(GoodBadField { radius, threshold, coarse, bad })
    }

    /// A field with the given bad coarse points (fine coordinates).
    pub fn from_bad(coarse: Rect, radius: i64, bad_points: &PointSet) -> Result<Self> {
        if radius < 1 {
            return config("box radius must be at least 1");
        }
        let spacing = 2 * radius + 1;
        let mut bad = vec![false; coarse.len()];
        for p in bad_points {
            let k = coarse_index(p, spacing)
                .and_then(|k| coarse.index_of(&k))
                .ok_or_else(|| Error::Domain(format!("{p} is not a coarse point of the window")))?;
            bad[k] = true;
        }
        let threshold = default_threshold(radius, coarse.dim());
        Ok(GoodBadField { radius, threshold, coarse, bad })
    }

    pub fn radius(&self) -> i64 {
        self.radius
    }

    pub fn spacing(&self) -> i64 {
        2 * self.radius + 1
    }

    pub fn threshold(&self) -> u64 {
        self.threshold
    }

    /// Rectangle of coarse indices.
    pub fn coarse(&self) -> &Rect {
        &self.coarse
    }

    pub fn class_of(&self, x: &Point) -> Option<BoxClass> {
        let k = coarse_index(x, self.spacing())?;
        let i = self.coarse.index_of(&k)?;
        Some(if self.bad[i] { BoxClass::Bad } else { BoxClass::Good })
    }

    pub fn bad_points(&self) -> PointSet {
        self.coarse
            .iter()
            .zip(&self.bad)
            .filter(|(_, b)| **b)
            .map(|(k, _)| k.scale(self.spacing()))
            .collect()
    }

    pub fn bad_fraction(&self) -> f64 {
        self.bad.iter().filter(|b| **b).count() as f64 / self.bad.len().max(1) as f64
    }
}

fn coarse_index(x: &Point, spacing: i64) -> Option<Point> {
    if x.coords().iter().any(|c| c.rem_euclid(spacing) != 0) {
        return None;
    }
    Some(Point(x.coords().iter().map(|c| c / spacing).collect()))
}

/// A `*`-connected component of bad coarse points.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StarComponent {
    /// Sorted coarse points in fine coordinates.
    pub points: Vec<Point>,
    /// Largest `N` such that the component meets `S(from, N)` of the coarse lattice.
    pub reach: i64,
}

pub fn bad_star_component(field: &GoodBadField, from: &Point) -> Result<StarComponent> {
    let spacing = field.spacing();
    let class = field
        .class_of(from)
        .ok_or_else(|| Error::Domain(format!("{from} is not a coarse point of the window")))?;
    if class == BoxClass::Good {
        return Ok(StarComponent { points: Vec::new(), reach: 0 });
    }
    let start = coarse_index(from, spacing).expect("checked above");
    let d = start.dim();
    let offsets: Vec<Point> = Rect::around(&Point::origin(d), 1).iter().filter(|o| o.sup_norm() != 0).collect();
    let mut seen = vec![false; field.coarse.len()];
    let s = field.coarse.index_of(&start).expect("inside");
    seen[s] = true;
    let mut stack = vec![start.clone()];
    let mut out = vec![start.clone()];
    while let Some(k) = stack.pop() {
        for o in &offsets {
            let q = k.add(o);
            if let Some(i) = field.coarse.index_of(&q) {
                if field.bad[i] && !seen[i] {
                    seen[i] = true;
                    stack.push(q.clone());
                    out.push(q);
                }
            }
        }
    }
    let reach = out.iter().map(|k| k.sup_dist(&start)).max().unwrap_or(0);
    let mut points: Vec<Point> = out.into_iter().map(|k| k.scale(spacing)).collect();
    points.sort();
    Ok(StarComponent { points, reach })
}

/// `(2r + 1)^d - (2r - 1)^d`, the size of the sup-norm sphere of radius `r`.
pub fn shell_size(d: usize, radius: u64) -> BigUint {
    if radius == 0 {
        return BigUint::one();
    }
    BigUint::from(2 * radius + 1).pow(d as u32) - BigUint::from(2 * radius - 1).pow(d as u32)
}

/// Exact `|Lambda_n|`: each tree edge independently picks a point on a sphere
/// of radius `l` or `2l` of the next finer lattice.
pub fn embedding_count(n: usize, l: u64, d: usize) -> BigUint {
    let per_pair = shell_size(d, l) * shell_size(d, 2 * l);
    per_pair.pow((1u32 << n) - 1)
}

/// `((2d (2l+1)^{d-1}) (2d (4l+1)^{d-1}))^{2^n - 1}`.
pub fn embedding_bound_tight(n: usize, l: u64, d: usize) -> BigUint {
    let two_d = BigUint::from(2 * d as u64);
    let a = &two_d * BigUint::from(2 * l + 1).pow(d as u32 - 1);
    let b = &two_d * BigUint::from(4 * l + 1).pow(d as u32 - 1);
    (a * b).pow((1u32 << n) - 1)
}

/// `((2d)^2 (4l)^{2(d-1)})^{2^n - 1}`.
pub fn embedding_bound_loose(n: usize, l: u64, d: usize) -> BigUint {
    let base = BigUint::from(2 * d as u64).pow(2) * BigUint::from(4 * l).pow(2 * (d as u32 - 1));
    base.pow((1u32 << n) - 1)
}

/// An embedding of the dyadic tree of depth `n`, stored in heap order: the
/// root is node 1 and node `v` has children `2v` (digit 1) and `2v + 1`
/// (digit 2). Index 0 is unused.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeEmbedding {
    pub depth: usize,
    pub l: i64,
    pub big_l0: i64,
    pub images: Vec<Point>,
}

fn node_depth(v: usize) -> usize {
    (usize::BITS - 1 - v.leading_zeros()) as usize
}

impl TreeEmbedding {
    /// `L_k = L0 l^k`.
    pub fn scale(&self, k: usize) -> i64 {
        self.big_l0 * self.l.pow(k as u32)
    }

    pub fn leaves(&self) -> &[Point] {
        &self.images[1 << self.depth..]
    }

    /// Checks the three defining properties.
    pub fn is_valid(&self) -> bool {
        let n = self.depth;
        if self.images.len() != 1 << (n + 1) || self.images[1].sup_norm() != 0 {
            return false;
        }
        for v in 2..self.images.len() {
            let k = node_depth(v);
            let lattice = self.scale(n - k);
            if self.images[v].coords().iter().any(|c| c.rem_euclid(lattice) != 0) {
                return false;
            }
            let digit = 1 + (v & 1) as i64;
            if self.images[v].sup_dist(&self.images[v / 2]) != digit * self.scale(n - k + 1) {
                return false;
            }
        }
        true
    }

    /// For each `k = 0..n`, the largest number of leaves within
    /// `(l - 5) / (l - 1) L_{k+1}` of a leaf.
    pub fn separation_counts(&self) -> Vec<usize> {
        separation_counts(self.leaves(), self.depth, self.l, self.big_l0)
    }

    pub fn separation_holds(&self) -> bool {
        self.separation_counts().iter().enumerate().all(|(k, &c)| c <= 1 << k)
    }
}

fn separation_counts(leaves: &[Point], depth: usize, l: i64, big_l0: i64) -> Vec<usize> {
    let mut out = vec![0usize; depth];
    for (k, slot) in out.iter_mut().enumerate() {
        // |T(m') - T(m)| (l - 1) <= (l - 5) L_{k+1}
        let bound = (l - 5) as i128 * (big_l0 as i128 * (l as i128).pow(k as u32 + 1));
        for a in leaves {
            let c = leaves.iter().filter(|b| a.sup_dist(b) as i128 * (l - 1) as i128 <= bound).count();
            *slot = (*slot).max(c);
        }
    }
    out
}

fn uniform_on_sphere<R: Rng + ?Sized>(d: usize, radius: i64, rng: &mut R) -> Point {
    loop {
        let p = Point((0..d).map(|_| rng.gen_range(-radius..=radius)).collect());
        if p.sup_norm() == radius {
            return p;
        }
    }
}

/// A uniform element of `Lambda_n`.
pub fn sample_embedding<R: Rng + ?Sized>(n: usize, l: i64, d: usize, big_l0: i64, rng: &mut R) -> TreeEmbedding {
    let mut images = vec![Point::origin(d); 1 << (n + 1)];
    for v in 2..images.len() {
        let k = node_depth(v);
        let digit = 1 + (v & 1) as i64;
        let step = big_l0 * l.pow((n - k) as u32);
        images[v] = images[v / 2].add(&uniform_on_sphere(d, digit * l, rng).scale(step));
    }
    TreeEmbedding { depth: n, l, big_l0, images }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum EmbeddingMode {
    /// Enumerate every embedding; refused when the counting bound exceeds `guard`.
    Exhaustive { guard: u64 },
    Sampled { samples: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingReport {
    pub n: usize,
    pub l: u64,
    pub d: usize,
    pub big_l0: i64,
    /// Closed-form count from the sphere sizes.
    pub count: String,
    pub bound_tight: String,
    pub bound_loose: String,
    pub within_bound: bool,
    /// Number of embeddings visited by the enumerator, when exhaustive.
    pub enumerated: Option<u64>,
    pub checked: u64,
    pub invalid: u64,
    pub separation_failures: u64,
    /// Largest leaf count per `k` over all checked embeddings.
    pub max_separation_counts: Vec<usize>,
}

impl EmbeddingReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "key,value")?;
        writeln!(w, "n,{}", self.n)?;
        writeln!(w, "l,{}", self.l)?;
        writeln!(w, "d,{}", self.d)?;
        writeln!(w, "big_l0,{}", self.big_l0)?;
        writeln!(w, "count,{}", self.count)?;
        writeln!(w, "bound_tight,{}", self.bound_tight)?;
        writeln!(w, "bound_loose,{}", self.bound_loose)?;
        writeln!(w, "within_bound,{}", self.within_bound)?;
        writeln!(w, "enumerated,{}", self.enumerated.map_or(String::new(), |e| e.to_string()))?;
        writeln!(w, "checked,{}", self.checked)?;
        writeln!(w, "invalid,{}", self.invalid)?;
        writeln!(w, "separation_failures,{}", self.separation_failures)?;
        let counts: Vec<String> = self.max_separation_counts.iter().map(|c| c.to_string()).collect();
        writeln!(w, "max_separation_counts,{}", counts.join(" "))?;
        Ok(())
    }
}

struct Enumerator {
    n: usize,
    l: i64,
    d: usize,
    big_l0: i64,
    images: Vec<Point>,
    visited: u64,
    separation_failures: u64,
    max_counts: Vec<usize>,
}

impl Enumerator {
    fn scale(&self, k: usize) -> i64 {
        self.big_l0 * self.l.pow(k as u32)
    }

    fn run(&mut self, v: usize) {
        if v == self.images.len() {
            self.visited += 1;
            let counts = separation_counts(&self.images[1 << self.n..], self.n, self.l, self.big_l0);
            if counts.iter().enumerate().any(|(k, &c)| c > 1 << k) {
                self.separation_failures += 1;
            }
            for (m, c) in self.max_counts.iter_mut().zip(counts) {
                *m = (*m).max(c);
            }
            return;
        }
        let k = node_depth(v);
        let digit = 1 + (v & 1) as i64;
        let fine = self.scale(self.n - k);
        let target = digit * self.scale(self.n - k + 1);
        let parent = self.images[v / 2].clone();
        // scan the finer lattice around the parent
        let reach = 2 * self.l;
        for o in Rect::around(&Point::origin(self.d), reach).iter() {
            let p = parent.add(&o.scale(fine));
            if p.sup_dist(&parent) == target {
                self.images[v] = p;
                self.run(v + 1);
            }
        }
    }
}

pub fn embeddings_count_and_separation(
    n: usize,
    l: u64,
    d: usize,
    big_l0: i64,
    mode: EmbeddingMode,
) -> Result<EmbeddingReport> {
    if d == 0 || l < 2 || big_l0 < 1 {
        return config("embeddings need d >= 1, l >= 2 and L0 >= 1");
    }
    if n > 12 {
        return Err(Error::Resource(format!("tree depth {n} is too large")));
    }
    let count = embedding_count(n, l, d);
    let tight = embedding_bound_tight(n, l, d);
    let loose = embedding_bound_loose(n, l, d);
    let mut report = EmbeddingReport {
        n,
        l,
        d,
        big_l0,
        count: count.to_string(),
        bound_tight: tight.to_string(),
        bound_loose: loose.to_string(),
        within_bound: count <= tight && tight <= loose,
        enumerated: None,
        checked: 0,
        invalid: 0,
        separation_failures: 0,
        max_separation_counts: vec![0; n],
    };
    let li = l as i64;
    match mode {
        EmbeddingMode::Exhaustive { guard } => {
            if tight > BigUint::from(guard) {
                return Err(Error::Resource(format!(
                    "exhaustive enumeration of up to {tight} embeddings exceeds the guard {guard}"
                )));
            }
            let mut e = Enumerator {
                n,
                l: li,
                d,
                big_l0,
                images: vec![Point::origin(d); 1 << (n + 1)],
                visited: 0,
                separation_failures: 0,
                max_counts: vec![0; n],
            };
            e.run(2);
            report.enumerated = Some(e.visited);
            report.checked = e.visited;
            report.separation_failures = e.separation_failures;
            report.max_separation_counts = e.max_counts;
        }
        EmbeddingMode::Sampled { samples, seed } => {
            let mut rng = stream(seed, &[tag::EMBEDDING, n as u64, l, d as u64]);
            for _ in 0..samples {
                let t = sample_embedding(n, li, d, big_l0, &mut rng);
                report.checked += 1;
                if !t.is_valid() {
                    report.invalid += 1;
                }
                let counts = t.separation_counts();
                if counts.iter().enumerate().any(|(k, &c)| c > 1 << k) {
                    report.separation_failures += 1;
                }
                for (m, c) in report.max_separation_counts.iter_mut().zip(counts) {
                    *m = (*m).max(c);
                }
            }
        }
    }
    Ok(report)
}

/// `floor(k^theta)`, exact for integral `theta`.
pub fn floor_power(k: u64, theta: f64) -> Result<u64> {
    if theta.fract() == 0.0 && theta >= 0.0 && theta <= 64.0 {
        return k
            .checked_pow(theta as u32)
            .ok_or_else(|| Error::Resource(format!("{k}^{theta} overflows")));
    }
    let v = (k as f64).powf(theta).floor();
    if !(v.is_finite() && v < 1e15) {
        return Err(Error::Resource(format!("{k}^{theta} is too large")));
    }
    Ok(v as u64)
}

/// `l_k = l0 4^{floor(k^theta)}`, `r_k = r0 2^{floor(k^theta)}`,
/// `L_k = l_{k-1} L_{k-1}` for `k = 0..=levels`.
#[derive(Clone, Debug, PartialEq)]
pub struct RenormScales {
    pub theta: f64,
    pub exponents: Vec<u64>,
    pub small: Vec<BigUint>,
    pub sep: Vec<BigUint>,
    pub big: Vec<BigUint>,
}

impl RenormScales {
    pub fn new(big_l0: u64, l0: u64, r0: u64, theta: f64, levels: usize) -> Result<Self> {
        if !(theta > 1.0 && theta.is_finite()) {
            return config(format!("theta = {theta} must exceed 1"));
        }
        if big_l0 < 1 || l0 < 1 || r0 < 1 {
            return config("L0, l0 and r0 must be at least 1");
        }
        let mut exponents = Vec::with_capacity(levels + 1);
        for k in 0..=levels as u64 {
            let e = floor_power(k, theta)?;
            if e > 1 << 20 {
                return Err(Error::Resource(format!("scale exponent {e} at level {k} is too large")));
            }
            exponents.push(e);
        }
        let small: Vec<BigUint> = exponents.iter().map(|&e| BigUint::from(l0) << (2 * e as usize)).collect();
        let sep: Vec<BigUint> = exponents.iter().map(|&e| BigUint::from(r0) << e as usize).collect();
        let mut big = vec![BigUint::from(big_l0)];
        for k in 1..=levels {
            let next = &small[k - 1] * &big[k - 1];
            big.push(next);
        }
        Ok(RenormScales { theta, exponents, small, sep, big })
    }

    pub fn levels(&self) -> usize {
        self.small.len() - 1
    }

    /// `l_k`, `r_k`, `L_k` as machine integers.
    pub fn small_i64(&self, k: usize) -> Result<i64> {
        to_i64(&self.small[k])
    }

    pub fn sep_i64(&self, k: usize) -> Result<i64> {
        to_i64(&self.sep[k])
    }

    pub fn big_i64(&self, k: usize) -> Result<i64> {
        to_i64(&self.big[k])
    }

    /// Whether each of `(l_k)`, `(r_k)`, `(L_k)` is strictly increasing.
    pub fn strictly_increasing(&self) -> [bool; 3] {
        let inc = |v: &[BigUint]| v.windows(2).all(|w| w[0] < w[1]);
        [inc(&self.small), inc(&self.sep), inc(&self.big)]
    }
}

fn to_i64(x: &BigUint) -> Result<i64> {
    x.to_i64().ok_or_else(|| Error::Resource(format!("{x} does not fit a machine integer")))
}

/// Recursive evaluation of cascading events over seed events.
pub struct Cascade<'a> {
    scales: &'a RenormScales,
    seed: &'a mut dyn FnMut(&Point) -> Option<bool>,
    memo: HashMap<(Point, usize), bool>,
}

impl<'a> Cascade<'a> {
    pub fn new(scales: &'a RenormScales, seed: &'a mut dyn FnMut(&Point) -> Option<bool>) -> Self {
        Cascade { scales, seed, memo: HashMap::new() }
    }

    pub fn memo_len(&self) -> usize {
        self.memo.len()
    }

    /// Whether `G_{x,k}` occurs; `x` must lie on `L_k Z^d`.
    pub fn eval(&mut self, x: &Point, k: usize) -> Result<bool> {
        if k > self.scales.levels() {
            return domain(format!("level {k} exceeds the scale table"));
        }
        let lk = self.scales.big_i64(k)?;
        if x.coords().iter().any(|c| c.rem_euclid(lk) != 0) {
            return domain(format!("{x} is not on the level-{k} lattice"));
        }
        self.eval_inner(x, k)
    }

    fn eval_inner(&mut self, x: &Point, k: usize) -> Result<bool> {
        if let Some(&v) = self.memo.get(&(x.clone(), k)) {
            return Ok(v);
        }
        let value = if k == 0 {
            match (self.seed)(x) {
                Some(v) => v,
                None => return domain(format!("the seed configuration does not cover {x}")),
            }
        } else {
            let fine = self.scales.big_i64(k - 1)?;
            let count = self.scales.small_i64(k - 1)?;
            // separation r_{k-1} L_{k-1}
            let sep = self.scales.sep_i64(k - 1)?.checked_mul(fine).ok_or_else(|| {
                Error::Resource("separation overflows a machine integer".into())
            })?;
            let d = x.dim();
            let cells = Rect::new(vec![0; d], vec![count - 1; d]);
            let mut hits: Vec<Point> = Vec::new();
            let mut found = false;
            for c in cells.iter() {
                let y = x.add(&c.scale(fine));
                if self.eval_inner(&y, k - 1)? {
                    if hits.iter().any(|h| h.sup_dist(&y) > sep) {
                        found = true;
                        break;
                    }
                    hits.push(y);
                }
            }
            found
        };
        self.memo.insert((x.clone(), k), value);
        Ok(value)
    }
}

pub fn cascading_eval(
    seed: &mut dyn FnMut(&Point) -> Option<bool>,
    scales: &RenormScales,
    x: &Point,
    k: usize,
) -> Result<bool> {
    Cascade::new(scales, seed).eval(x, k)
}

fn default_big_l0() -> u64 {
    1
}

fn default_dim() -> usize {
    3
}

fn default_horizon() -> usize {
    40
}

/// Parameters of the induction over scales.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerParams {
    pub u: f64,
    pub u_prime: f64,
    pub beta: f64,
    pub gamma: f64,
    pub zeta: f64,
    pub theta: f64,
    pub r0: u64,
    pub l0: u64,
    #[serde(default = "default_big_l0")]
    pub big_l0: u64,
    #[serde(default = "default_dim")]
    pub d: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
}

impl LedgerParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.u, self.u_prime, self.beta, self.gamma, self.zeta, self.theta];
        if finite.iter().any(|v| !v.is_finite()) {
            return config("ledger parameters must be finite");
        }
        if self.u == self.u_prime {
            return config("u and u' must differ");
        }
        if !(self.beta > 0.0 && self.gamma > 0.0 && self.zeta > 0.0) {
            return config("beta, gamma and zeta must be positive");
        }
        if self.theta <= 1.0 {
            return config(format!("theta = {} must exceed 1", self.theta));
        }
        if (self.theta + 1.0) * self.zeta <= 1.0 {
            return config(format!(
                "(theta + 1) zeta = {} must exceed 1",
                (self.theta + 1.0) * self.zeta
            ));
        }
        if self.r0 < 1 || self.l0 < 1 || self.big_l0 < 1 || self.d < 1 {
            return config("r0, l0, L0 and d must be at least 1");
        }
        if self.horizon < 1 || self.horizon > 200 {
            return config("horizon must lie in 1..=200");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
}

impl Verdict {
    fn of(b: bool) -> Self {
        if b {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InductionLedger {
    pub params: LedgerParams,
    pub chi: f64,
    pub xi: f64,
    pub increasing: bool,
    /// `u_k`, `k = 0..=horizon + 1`.
    pub u_seq: Vec<f64>,
    pub u_seq_stays_beyond_u: bool,
    /// Sum of `r_k^{-chi}` over `k <= horizon`.
    pub sep_sum_partial: f64,
    /// Majorant of the remaining terms, `r0^{-chi} 2^{-chi (K+1)} / (1 - 2^{-chi})`.
    pub sep_sum_tail_bound: f64,
    /// Exact rational partial sum plus tail bound, when `chi` is an integer.
    pub sep_sum_exact_upper: Option<String>,
    pub gap: f64,
    pub condr0: Verdict,
    /// `Delta_k`, `k = 0..=horizon + 1`.
    pub delta: Vec<f64>,
    /// Bound on the neglected part of every `Delta_k`.
    pub delta_remainder_bound: f64,
    pub delta_at_least_one: Verdict,
    /// `log10(min{r_k^xi, e^{(log L_k)^zeta}} / (Delta_0 2^{k+1}))`, the largest
    /// admissible constant at level `k`.
    pub rk_log10_margin: Vec<f64>,
    pub rk_log10_min_margin: f64,
    pub rk_min_level: usize,
    /// The margins increase over the last quarter of the horizon, so the
    /// minimum is a constant admissible at every level.
    pub rk_feasible: Verdict,
    pub verdict: Verdict,
}

fn big_rational(x: &BigUint) -> BigRational {
    BigRational::from_integer(BigInt::from(x.clone()))
}

pub fn induction_ledger_run(params: &LedgerParams) -> Result<InductionLedger> {
    params.validate()?;
    let k_max = params.horizon;
    let chi = params.gamma / (2.0 * params.beta);
    let xi = params.gamma / 2.0;
    let scales = RenormScales::new(params.big_l0, params.l0, params.r0, params.theta, k_max + 1)?;
    let increasing = params.u < params.u_prime;
    let gap = (params.u_prime - params.u).abs();

    // separation sum
    let ln2 = std::f64::consts::LN_2;
    let ln_r: Vec<f64> = scales.exponents.iter().map(|&e| (params.r0 as f64).ln() + e as f64 * ln2).collect();
    let terms: Vec<f64> = ln_r.iter().map(|lr| (-chi * lr).exp()).collect();
    let sep_sum_partial: f64 = terms[..=k_max].iter().rev().sum();
    let sep_sum_tail_bound =
        (-chi * (params.r0 as f64).ln()).exp() * (-chi * (k_max + 1) as f64 * ln2).exp() / (1.0 - (-chi * ln2).exp());
    let mut sep_sum_exact_upper = None;
    let condr0_ok = if chi.fract() == 0.0 && chi <= 64.0 {
        let c = chi as u32;
        let mut s = BigRational::zero();
        for r in &scales.sep[..=k_max] {
            s += BigRational::one() / big_rational(&r.pow(c));
        }
        // r0^{-c} 2^{-c(K+1)} / (1 - 2^{-c}) = 2^{c} / (r0^c 2^{c(K+1)} (2^c - 1))
        let two_c = BigUint::one() << c as usize;
        let tail = big_rational(&two_c)
            / (big_rational(&BigUint::from(params.r0).pow(c))
                * big_rational(&(BigUint::one() << (c as usize * (k_max + 1))))
                * big_rational(&(two_c - BigUint::one())));
        let upper = s + tail;
        let gap_exact = BigRational::from_float(gap).ok_or_else(|| Error::Numerical("gap is not finite".into()))?;
        let ok = upper <= gap_exact;
        sep_sum_exact_upper = Some(format!("{}/{}", upper.numer(), upper.denom()));
        ok
    } else {
        sep_sum_partial + sep_sum_tail_bound <= gap
    };
    let sign = if increasing { -1.0 } else { 1.0 };
    let mut u_seq = vec![params.u_prime];
    for t in &terms[..=k_max] {
        let last = *u_seq.last().unwrap();
        u_seq.push(last + sign * t);
    }
    let u_seq_stays_beyond_u =
        u_seq.iter().all(|&v| if increasing { v >= params.u } else { v <= params.u });

    // Delta_k = 1 + sum_{i >= k} log2(2 l_i^{2d}) / 2^{i+1}
    let d = params.d as f64;
    let log2_l0 = (params.l0 as f64).log2();
    let inner = k_max + 200;
    let mut delta_terms = Vec::with_capacity(inner + 1);
    for i in 0..=inner as u64 {
        let e = floor_power(i, params.theta)? as f64;
        let log2_li = log2_l0 + 2.0 * e;
        delta_terms.push((1.0 + 2.0 * d * log2_li) * (-((i + 1) as f64) * ln2).exp());
    }
    let m = (inner + 1) as f64;
    let q = ((m + 1.0) / m).powf(params.theta) / 2.0;
    let delta_remainder_bound = (1.0 + 2.0 * d * log2_l0) * (-(m + 1.0) * ln2).exp()
        + 4.0 * d * (params.theta * m.ln() - (m + 1.0) * ln2).exp() / (1.0 - q);
    let mut suffix = vec![0.0; inner + 2];
    for i in (0..=inner).rev() {
        suffix[i] = suffix[i + 1] + delta_terms[i];
    }
    let delta: Vec<f64> = (0..=k_max + 1).map(|k| 1.0 + suffix[k]).collect();
    let delta_ok = delta.iter().all(|&v| v >= 1.0) && delta.windows(2).all(|w| w[0] >= w[1]);

    // min{r_k^xi, e^{(log L_k)^zeta}} >= C Delta_0 2^{k+1}
    let ln10 = std::f64::consts::LN_10;
    let mut margins = Vec::with_capacity(k_max + 1);
    for (k, ln_rk) in ln_r.iter().enumerate().take(k_max + 1) {
        let ln_big_l = ln_big(&scales.big[k]);
        let lhs = (xi * ln_rk).min(ln_big_l.max(0.0).powf(params.zeta));
        let rhs = delta[0].ln() + (k + 1) as f64 * ln2;
        margins.push((lhs - rhs) / ln10);
    }
    let (rk_min_level, rk_log10_min_margin) = margins
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (k, v)| if v < acc.1 { (k, v) } else { acc });
    let tail_start = k_max - k_max / 4;
    let rk_ok = margins.iter().all(|v| v.is_finite()) && margins[tail_start..].windows(2).all(|w| w[1] > w[0]);

    let verdict = Verdict::of(condr0_ok && delta_ok && rk_ok);
    Ok(InductionLedger {
        params: params.clone(),
        chi,
        xi,
        increasing,
        u_seq,
        u_seq_stays_beyond_u,
        sep_sum_partial,
        sep_sum_tail_bound,
        sep_sum_exact_upper,
        gap,
        condr0: Verdict::of(condr0_ok),
        delta,
        delta_remainder_bound,
        delta_at_least_one: Verdict::of(delta_ok),
        rk_log10_margin: margins,
        rk_log10_min_margin,
        rk_min_level,
        rk_feasible: Verdict::of(rk_ok),
        verdict,
    })
}

pub fn write_ledger_json<W: Write>(ledger: &InductionLedger, mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, ledger).map_err(|e| Error::Numerical(e.to_string()))?;
    writeln!(w)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_membership_examples() {
        let f = Frame::new(Point::origin(3), 4).unwrap();
        assert!(f.contains(&Point::new(&[4, 4, 0])));
        assert!(!f.contains(&Point::new(&[4, 0, 0])));
        assert!(f.contains(&Point::new(&[2, -3, 1])));
        assert!(!f.contains(&Point::new(&[5, 4, 4])));
    }

    #[test]
    fn frames_connected_small_radii() {
        for r in 3..=5 {
            assert!(frame_connectivity(3, r).unwrap().holds(), "R = {r}");
        }
    }

    #[test]
    fn box_classes() {
        let r = 3;
        let zero = |_: &Point| Some(0u32);
        assert_eq!(classify_box(&Point::origin(3), r, 9, &zero).unwrap(), BoxClass::Good);
        let on_frame = |p: &Point| Some(u32::from(p == &Point::new(&[3, 3, 0])));
        assert_eq!(classify_box(&Point::origin(3), r, 9, &on_frame).unwrap(), BoxClass::Bad);
        // face centre, off the frame, ten visits
        let heavy = |p: &Point| Some(if p == &Point::new(&[3, 0, 0]) { 10 } else { 0 });
        assert_eq!(classify_box(&Point::origin(3), r, 9, &heavy).unwrap(), BoxClass::Bad);
        let light = |p: &Point| Some(if p == &Point::new(&[3, 0, 0]) { 9 } else { 0 });
        assert_eq!(classify_box(&Point::origin(3), r, 9, &light).unwrap(), BoxClass::Good);
        let partial = |p: &Point| (p.sup_norm() < 3).then_some(0);
        assert!(classify_box(&Point::origin(3), r, 9, &partial).is_err());
    }

    #[test]
    fn diagonal_chain_reach() {
        let r = 1;
        let s = 3;
        let coarse = Rect::around(&Point::origin(3), 4);
        let bad: PointSet = (0..4).map(|i| Point::new(&[i * s, i * s, i * s])).collect();
        let f = GoodBadField::from_bad(coarse.clone(), r, &bad).unwrap();
        let c = bad_star_component(&f, &Point::origin(3)).unwrap();
        assert_eq!(c.reach, 3);
        assert_eq!(c.points.len(), 4);
        let empty = GoodBadField::from_bad(coarse, r, &PointSet::new()).unwrap();
        let c = bad_star_component(&empty, &Point::origin(3)).unwrap();
        assert_eq!((c.points.len(), c.reach), (0, 0));
    }

    #[test]
    fn lambda_one_closed_form() {
        assert_eq!(embedding_count(1, 6, 3), BigUint::from(2_994_628u64));
        assert_eq!(embedding_bound_tight(1, 6, 3), BigUint::from(3_802_500u64));
        assert_eq!(embedding_bound_loose(1, 6, 3), BigUint::from(11_943_936u64));
        assert_eq!(embedding_count(0, 6, 3), BigUint::one());
    }

    #[test]
    fn ledger_example_passes() {
        let p = LedgerParams {
            u: 0.4,
            u_prime: 0.5,
            beta: 0.5,
            gamma: 1.0,
            zeta: 0.9,
            theta: 2.0,
            r0: 20,
            l0: 4,
            big_l0: 1,
            d: 3,
            horizon: 40,
        };
        let l = induction_ledger_run(&p).unwrap();
        assert_eq!(l.chi, 1.0);
        assert_eq!(l.xi, 0.5);
        assert!((l.sep_sum_partial - 0.078_223).abs() < 1e-5, "{}", l.sep_sum_partial);
        assert_eq!(l.condr0, Verdict::Pass);
        assert_eq!(l.delta_at_least_one, Verdict::Pass);
        let bad = LedgerParams { zeta: 0.3, ..p };
        assert!(matches!(induction_ledger_run(&bad), Err(Error::Config(_))));
    }
}
