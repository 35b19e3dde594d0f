//! Potential theory of the simple random walk killed outside a finite carrier
//! box and on an absorbing set.
//!
//! All quantities solve a Dirichlet problem `u = P u + f` on the free sites,
//! with prescribed values on target sites and zero on killed sites. The solver
//! is red-black successive over-relaxation run until the max-norm residual is
//! below the tolerance. Every result refers to the truncated walk; its
//! distance to the `Z^d` value is `O(R^{2-d})` in the carrier radius `R`.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};
use crate::lattice::{Ball, Point, PointSet, Rect};

const KILLED: u8 = 0;
const FIXED: u8 = 1;
const FREE: u8 = 2;

/// Harmonic weights below this are treated as unreachable by bridges.
pub const BRIDGE_FLOOR: f64 = 1e-300;

/// The walk is killed on leaving `carrier` and on entering `absorbing`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KilledDomain {
    pub carrier: Ball,
    pub absorbing: PointSet,
}

impl KilledDomain {
    pub fn new(carrier: Ball) -> Self {
        KilledDomain { carrier, absorbing: PointSet::new() }
    }

    pub fn centered(d: usize, radius: i64) -> Self {
        KilledDomain::new(Ball::new(Point::origin(d), radius))
    }

    pub fn with_absorbing(mut self, absorbing: PointSet) -> Self {
        self.absorbing = absorbing;
        self
    }

    pub fn dim(&self) -> usize {
        self.carrier.dim()
    }

    /// Whether the walk can stand at `p`.
    pub fn is_alive(&self, p: &Point) -> bool {
        self.carrier.contains(p) && !self.absorbing.contains(p)
    }

    fn check_alive(&self, p: &Point, what: &str) -> Result<()> {
        if p.dim() != self.dim() {
            return domain(format!("{what} {p} has the wrong dimension"));
        }
        if !self.carrier.contains(p) {
            return domain(format!("{what} {p} lies outside the carrier"));
        }
        if self.absorbing.contains(p) {
            return domain(format!("{what} {p} is absorbed"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Max-norm residual at which relaxation stops.
    pub tol: f64,
    /// Number of full sweeps before a numerical error is raised.
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-12, max_iter: 200_000 }
    }
}

/// Values of a solved problem over the carrier; zero elsewhere.
#[derive(Clone, Debug)]
pub struct Field {
    rect: Rect,
    values: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl Field {
    pub fn get(&self, p: &Point) -> f64 {
        self.rect.index_of(p).map_or(0.0, |i| self.values[i])
    }

    pub fn get_coords(&self, c: &[i64]) -> f64 {
        self.rect.index_of_coords(c).map_or(0.0, |i| self.values[i])
    }
}

/// Dense Dirichlet problem on the carrier grown by one killed layer.
struct Problem {
    rect: Rect,
    state: Vec<u8>,
    u: Vec<f64>,
    rhs: BTreeMap<usize, f64>,
}

impl Problem {
    fn new(dom: &KilledDomain) -> Problem {
        let rect = Rect::around(&dom.carrier.center, dom.carrier.radius + 1);
        let mut state = vec![KILLED; rect.len()];
        let inner = dom.carrier.rect();
        let mut buf = vec![0i64; rect.dim()];
        for (idx, s) in state.iter_mut().enumerate() {
            rect.coords_at(idx, &mut buf);
            if inner.contains_coords(&buf) {
                *s = FREE;
            }
        }
        for p in &dom.absorbing {
            if let Some(i) = rect.index_of(p) {
                state[i] = KILLED;
            }
        }
        let n = rect.len();
        Problem { rect, state, u: vec![0.0; n], rhs: BTreeMap::new() }
    }

    fn fix(&mut self, p: &Point, value: f64) {
        if let Some(i) = self.rect.index_of(p) {
            self.state[i] = FIXED;
            self.u[i] = value;
        }
    }

    fn kill(&mut self, p: &Point) {
        if let Some(i) = self.rect.index_of(p) {
            self.state[i] = KILLED;
            self.u[i] = 0.0;
        }
    }

    fn offsets(&self) -> Vec<usize> {
        (0..self.rect.dim()).map(|k| self.rect.stride(k)).collect()
    }

    /// Free sites, restricted to the components containing `sources` if given,
    /// split by parity of the coordinate sum.
    fn active_sites(&self, sources: Option<&[Point]>) -> [Vec<u32>; 2] {
        let strides = self.offsets();
        let mut keep = vec![false; self.rect.len()];
        match sources {
            None => {
                for (i, s) in self.state.iter().enumerate() {
                    keep[i] = *s == FREE;
                }
            }
            Some(src) => {
                let mut queue = VecDeque::new();
                for p in src {
                    if let Some(i) = self.rect.index_of(p) {
                        if self.state[i] == FREE && !keep[i] {
                            keep[i] = true;
                            queue.push_back(i);
                        }
                    }
                    // a fixed source still seeds its free neighbours
                    if let Some(i) = self.rect.index_of(p) {
                        if self.state[i] != FREE {
                            for &st in &strides {
                                for j in [i - st, i + st] {
                                    if self.state[j] == FREE && !keep[j] {
                                        keep[j] = true;
                                        queue.push_back(j);
                                    }
                                }
                            }
                        }
                    }
                }
                while let Some(i) = queue.pop_front() {
                    for &st in &strides {
                        for j in [i - st, i + st] {
                            if self.state[j] == FREE && !keep[j] {
                                keep[j] = true;
                                queue.push_back(j);
                            }
                        }
                    }
                }
            }
        }
        let mut out = [Vec::new(), Vec::new()];
        let mut buf = vec![0i64; self.rect.dim()];
        for (i, k) in keep.iter().enumerate() {
            if *k {
                self.rect.coords_at(i, &mut buf);
                let parity = buf.iter().sum::<i64>().rem_euclid(2) as usize;
                out[parity].push(i as u32);
            }
        }
        out
    }

    fn solve(mut self, sources: Option<&[Point]>, opts: SolverOptions) -> Result<Field> {
        let active = self.active_sites(sources);
        let strides = self.offsets();
        let inv = 1.0 / (2.0 * strides.len() as f64);
        let count = active[0].len() + active[1].len();
        // over-relaxation factor tuned to the extent of the active region
        let mut extent = 1usize;
        if count > 0 {
            let mut lo = vec![i64::MAX; self.rect.dim()];
            let mut hi = vec![i64::MIN; self.rect.dim()];
            let mut buf = vec![0i64; self.rect.dim()];
            for &i in active.iter().flatten() {
                self.rect.coords_at(i as usize, &mut buf);
                for k in 0..buf.len() {
                    lo[k] = lo[k].min(buf[k]);
                    hi[k] = hi[k].max(buf[k]);
                }
            }
            extent = (0..lo.len()).map(|k| (hi[k] - lo[k] + 1) as usize).max().unwrap();
        }
        let omega = 2.0 / (1.0 + (std::f64::consts::PI / (extent as f64 + 1.0)).sin());
        let rhs: [Vec<f64>; 2] = [0, 1].map(|c| {
            active[c]
                .iter()
                .map(|&i| self.rhs.get(&(i as usize)).copied().unwrap_or(0.0))
                .collect()
        });
        let u = &mut self.u;
        let sweep = |u: &mut [f64], relax: f64| -> f64 {
            let mut maxr = 0.0f64;
            for c in 0..2 {
                for (j, &i) in active[c].iter().enumerate() {
                    let i = i as usize;
                    let mut s = 0.0;
                    for &st in &strides {
                        s += u[i - st] + u[i + st];
                    }
                    let r = s * inv + rhs[c][j] - u[i];
                    maxr = maxr.max(r.abs());
                    u[i] += relax * r;
                }
            }
            maxr
        };
        let residual = |u: &[f64]| -> f64 {
            let mut maxr = 0.0f64;
            for c in 0..2 {
                for (j, &i) in active[c].iter().enumerate() {
                    let i = i as usize;
                    let mut s = 0.0;
                    for &st in &strides {
                        s += u[i - st] + u[i + st];
                    }
                    maxr = maxr.max((s * inv + rhs[c][j] - u[i]).abs());
                }
            }
            maxr
        };
        let mut iterations = 0;
        let mut res = if count == 0 { 0.0 } else { f64::INFINITY };
        while res > opts.tol {
            if iterations >= opts.max_iter {
                return Err(Error::Numerical(format!(
                    "relaxation did not reach residual {:e} within {} sweeps (residual {:e})",
                    opts.tol, opts.max_iter, res
                )));
            }
            let r = sweep(u, omega);
            iterations += 1;
            if !r.is_finite() {
                return Err(Error::Numerical("relaxation diverged".into()));
            }
            if r <= opts.tol {
                res = residual(u);
            }
        }
        Ok(Field { rect: self.rect, values: self.u, iterations, residual: res })
    }
}

/// `g(., y)`: expected visits to `y` before killing, as a field of the start.
/// By symmetry this is also `g(y, .)`.
pub fn green_field(dom: &KilledDomain, y: &Point, opts: SolverOptions) -> Result<Field> {
    dom.check_alive(y, "green function pole")?;
    let mut prob = Problem::new(dom);
    prob.rhs.insert(prob.rect.index_of(y).unwrap(), 1.0);
    prob.solve(Some(std::slice::from_ref(y)), opts)
}

/// `g(x, y) = sum_n P_x[X_n = y, n < killing time]`.
pub fn green(dom: &KilledDomain, x: &Point, y: &Point, opts: SolverOptions) -> Result<f64> {
    dom.check_alive(x, "green function argument")?;
    Ok(green_field(dom, y, opts)?.get(x))
}

/// `z -> P_z[H_A < killing time]`, equal to one on `A`.
pub fn hitting_field(dom: &KilledDomain, a: &PointSet, opts: SolverOptions) -> Result<Field> {
    let mut prob = Problem::new(dom);
    for p in a {
        if dom.absorbing.contains(p) {
            return domain(format!("target point {p} is absorbed"));
        }
        if dom.carrier.contains(p) {
            prob.fix(p, 1.0);
        }
    }
    let src: Vec<Point> = a.iter().cloned().collect();
    prob.solve(Some(&src), opts)
}

/// `P_x[H_A < killing time]`.
pub fn hitting_prob(dom: &KilledDomain, x: &Point, a: &PointSet, opts: SolverOptions) -> Result<f64> {
    dom.check_alive(x, "start")?;
    if a.contains(x) {
        return Ok(1.0);
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let mut prob = Problem::new(dom);
    for p in a {
        if dom.absorbing.contains(p) {
            return domain(format!("target point {p} is absorbed"));
        }
        prob.fix(p, 1.0);
    }
    Ok(prob.solve(Some(std::slice::from_ref(x)), opts)?.get(x))
}

/// How a hitting kernel is computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelRoute {
    /// One harmonic solve per target point.
    ByTarget,
    /// One Green-function solve per source point, read off as the flux into
    /// each target point.
    BySource,
    /// Whichever needs fewer solves.
    Auto,
}

/// `H(a, b) = P_a[H_B < killing time, X_{H_B} = b]` for `a` in the sources and
/// `b` in the targets.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HittingKernel {
    pub sources: Vec<Point>,
    pub targets: Vec<Point>,
    /// Row-major, `sources.len() x targets.len()`.
    pub values: Vec<f64>,
}

impl HittingKernel {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.targets.len() + j]
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        let m = self.targets.len();
        self.values[i * m..(i + 1) * m].iter().sum()
    }

    /// CSV rows `source coords, target coords, value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.sources.first().or(self.targets.first()).map_or(0, |p| p.dim());
        let s: Vec<String> = (0..d).map(|k| format!("src{k}")).collect();
        let t: Vec<String> = (0..d).map(|k| format!("dst{k}")).collect();
        writeln!(w, "{},{},value", s.join(","), t.join(","))?;
        for (i, a) in self.sources.iter().enumerate() {
            for (j, b) in self.targets.iter().enumerate() {
                let ac: Vec<String> = a.coords().iter().map(|c| c.to_string()).collect();
                let bc: Vec<String> = b.coords().iter().map(|c| c.to_string()).collect();
                writeln!(w, "{},{},{:e}", ac.join(","), bc.join(","), self.get(i, j))?;
            }
        }
        Ok(())
    }
}

pub fn hitting_kernel(
    dom: &KilledDomain,
    a: &PointSet,
    b: &PointSet,
    route: KernelRoute,
    opts: SolverOptions,
) -> Result<HittingKernel> {
    if let Some(p) = a.intersection(b).next() {
        return domain(format!("source and target sets overlap at {p}"));
    }
    for p in a {
        dom.check_alive(p, "kernel source")?;
    }
    for p in b {
        dom.check_alive(p, "kernel target")?;
    }
    let sources: Vec<Point> = a.iter().cloned().collect();
    let targets: Vec<Point> = b.iter().cloned().collect();
    let (ns, nt) = (sources.len(), targets.len());
    let mut values = vec![0.0; ns * nt];
    let route = match route {
        KernelRoute::Auto if ns < nt => KernelRoute::BySource,
        KernelRoute::Auto => KernelRoute::ByTarget,
        r => r,
    };
    match route {
        KernelRoute::ByTarget => {
            for (j, t) in targets.iter().enumerate() {
                let f = harmonic_measure_field(dom, b, t, &sources, opts)?;
                for (i, s) in sources.iter().enumerate() {
                    values[i * nt + j] = f.get(s);
                }
            }
        }
        KernelRoute::BySource => {
            let killed = dom.clone().with_absorbing(dom.absorbing.union(b).cloned().collect());
            let inv = 1.0 / (2.0 * dom.dim() as f64);
            for (i, s) in sources.iter().enumerate() {
                let g = green_field(&killed, s, opts)?;
                for (j, t) in targets.iter().enumerate() {
                    let flux: f64 = t
                        .neighbors()
                        .filter(|z| killed.is_alive(z))
                        .map(|z| g.get(&z))
                        .sum();
                    values[i * nt + j] = flux * inv;
                }
            }
        }
        KernelRoute::Auto => unreachable!(),
    }
    Ok(HittingKernel { sources, targets, values })
}

/// `z -> P_z[X_{H_B} = target]` on the components of the free region that
/// contain `starts`.
pub fn harmonic_measure_field(
    dom: &KilledDomain,
    b: &PointSet,
    target: &Point,
    starts: &[Point],
    opts: SolverOptions,
) -> Result<Field> {
    if !b.contains(target) {
        return domain(format!("{target} is not in the target set"));
    }
    let mut prob = Problem::new(dom);
    for p in b {
        if p == target {
            prob.fix(p, 1.0);
        } else {
            prob.kill(p);
        }
    }
    prob.solve(Some(starts), opts)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Equilibrium {
    /// `e_A(x) = P_x[no return to A before killing]` for `x` in `A`.
    pub weights: BTreeMap<Point, f64>,
    pub capacity: f64,
}

pub fn equilibrium_measure(dom: &KilledDomain, a: &PointSet, opts: SolverOptions) -> Result<Equilibrium> {
    if a.is_empty() {
        return domain("the equilibrium measure of the empty set is undefined");
    }
    for p in a {
        dom.check_alive(p, "set point")?;
    }
    let h = hitting_field(dom, a, opts)?;
    let inv = 1.0 / (2.0 * dom.dim() as f64);
    let mut weights = BTreeMap::new();
    let mut capacity = 0.0;
    for p in a {
        let back: f64 = p
            .neighbors()
            .map(|z| if a.contains(&z) { 1.0 } else if dom.is_alive(&z) { h.get(&z) } else { 0.0 })
            .sum();
        let e = (1.0 - back * inv).max(0.0);
        weights.insert(p.clone(), e);
        capacity += e;
    }
    Ok(Equilibrium { weights, capacity })
}

/// Two-radius extrapolation of a quantity whose truncation error scales like
/// `R^{2-d}`: values at radii `R` and `2R`.
pub fn extrapolate(at_r: f64, at_2r: f64, d: usize) -> f64 {
    let w = 2f64.powi(d as i32 - 2);
    (w * at_2r - at_r) / (w - 1.0)
}

/// `g(0, 0)` on centred carriers of radii `r` and `2r`, and the extrapolation.
pub fn green_origin_extrapolated(d: usize, r: i64, opts: SolverOptions) -> Result<(f64, f64, f64)> {
    let o = Point::origin(d);
    let g1 = green(&KilledDomain::centered(d, r), &o, &o, opts)?;
    let g2 = green(&KilledDomain::centered(d, 2 * r), &o, &o, opts)?;
    Ok((g1, g2, extrapolate(g1, g2, d)))
}

/// Points of `Q(0) = B(0, R)` having at least two coordinates within two of
/// `+-R`.
pub fn frame_points(d: usize, r: i64) -> PointSet {
    Ball::new(Point::origin(d), r)
        .rect()
        .iter()
        .filter(|p| p.coords().iter().filter(|c| c.abs() >= r - 2).count() >= 2)
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrameCapacity {
    pub radius: i64,
    pub carrier_radius: i64,
    pub frame: f64,
    pub cube: f64,
    /// `cap(frame) / (R^{d-2} / log R)`.
    pub normalised: f64,
}

/// Capacities of the frame `E(0)` and of the whole box `Q(0)`, computed in a
/// carrier of radius `carrier_factor * R`.
pub fn frame_capacity(r: i64, d: usize, carrier_factor: i64, opts: SolverOptions) -> Result<FrameCapacity> {
    if r < 3 {
        return config("frame radius must be at least 3");
    }
    let dom = KilledDomain::centered(d, carrier_factor * r);
    let frame = equilibrium_measure(&dom, &frame_points(d, r), opts)?.capacity;
    let cube = equilibrium_measure(&dom, &Ball::new(Point::origin(d), r).sphere(), opts)?.capacity;
    let scale = (r as f64).powi(d as i32 - 2) / (r as f64).ln();
    Ok(FrameCapacity { radius: r, carrier_radius: carrier_factor * r, frame, cube, normalised: frame / scale })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayCheck {
    pub radius: i64,
    pub distances: Vec<i64>,
    pub probabilities: Vec<f64>,
    /// `P_x[H_{B(0,n)} < inf] / (n / |x|)^{d-2}`.
    pub ratios: Vec<f64>,
    /// max ratio / min ratio.
    pub band: f64,
}

/// Hitting probability of `B(0, n)` from `x = k n e_1` for the given multiples `k`.
pub fn hitting_decay_check(n: i64, d: usize, multiples: &[i64], carrier: i64, opts: SolverOptions) -> Result<DecayCheck> {
    let dom = KilledDomain::centered(d, carrier);
    let ball = Ball::new(Point::origin(d), n).points();
    let field = hitting_field(&dom, &ball, opts)?;
    let mut distances = Vec::new();
    let mut probabilities = Vec::new();
    let mut ratios = Vec::new();
    for &k in multiples {
        let x = Point::axis(d, 0, k * n);
        if !dom.carrier.contains(&x) {
            return domain(format!("{x} lies outside the carrier"));
        }
        let p = field.get(&x);
        distances.push(k * n);
        probabilities.push(p);
        ratios.push(p / (1.0 / k as f64).powi(d as i32 - 2));
    }
    let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
    Ok(DecayCheck { radius: n, distances, probabilities, ratios, band: max / min })
}

/// Sampler for the walk conditioned to enter `set` at `target`, by the
/// h-transform with `h(z) = P_z[X_{H_set} = target]`.
#[derive(Clone, Debug)]
pub struct HitBridge {
    dom: KilledDomain,
    set: PointSet,
    target: Point,
    h: Field,
}

impl HitBridge {
    /// Solves for `h` on the components containing `starts`.
    pub fn new(dom: &KilledDomain, set: &PointSet, target: &Point, starts: &[Point], opts: SolverOptions) -> Result<Self> {
        let h = harmonic_measure_field(dom, set, target, starts, opts)?;
        Ok(HitBridge { dom: dom.clone(), set: set.clone(), target: target.clone(), h })
    }

    pub fn target(&self) -> &Point {
        &self.target
    }

    pub fn weight(&self, z: &Point) -> f64 {
        if self.set.contains(z) {
            if *z == self.target {
                1.0
            } else {
                0.0
            }
        } else if self.dom.is_alive(z) {
            self.h.get(z)
        } else {
            0.0
        }
    }

    /// Path from `x` to the target, stopped at the first visit to the set.
    pub fn sample<R: Rng + ?Sized>(&self, x: &Point, rng: &mut R) -> Result<Vec<Point>> {
        if self.set.contains(x) {
            return if *x == self.target {
                Ok(vec![x.clone()])
            } else {
                domain(format!("{x} already lies in the target set"))
            };
        }
        if self.weight(x) < BRIDGE_FLOOR {
            return domain(format!("{} is unreachable from {x}", self.target));
        }
        let mut path = vec![x.clone()];
        let mut cur = x.clone();
        let mut w = Vec::with_capacity(2 * x.dim());
        loop {
            w.clear();
            let nbs: Vec<Point> = cur.neighbors().collect();
            let mut total = 0.0;
            for z in &nbs {
                let v = self.weight(z);
                let v = if v < BRIDGE_FLOOR { 0.0 } else { v };
                total += v;
                w.push(total);
            }
            if total <= 0.0 {
                return Err(Error::Numerical(format!("bridge stuck at {cur}")));
            }
            let u = rng.gen::<f64>() * total;
            let k = w.iter().position(|c| u < *c).unwrap_or(nbs.len() - 1);
            cur = nbs[k].clone();
            path.push(cur.clone());
            if self.set.contains(&cur) {
                return Ok(path);
            }
        }
    }
}

/// One bridge from `x` to `y` for the set `a`, solving for `h` on the fly.
pub fn bridge_sample<R: Rng + ?Sized>(
    dom: &KilledDomain,
    x: &Point,
    y: &Point,
    a: &PointSet,
    rng: &mut R,
    opts: SolverOptions,
) -> Result<Vec<Point>> {
    HitBridge::new(dom, a, y, std::slice::from_ref(x), opts)?.sample(x, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(pts: &[&[i64]]) -> PointSet {
        pts.iter().map(|c| Point::new(c)).collect()
    }

    #[test]
    fn green_neighbour_relation_and_symmetry() {
        let dom = KilledDomain::centered(3, 10);
        let o = Point::origin(3);
        let f = green_field(&dom, &o, SolverOptions::default()).unwrap();
        let g00 = f.get(&o);
        let g01 = f.get(&Point::axis(3, 0, 1));
        // g(0,0) = 1 + g(e1, 0) by the first step
        assert!((g00 - 1.0 - g01).abs() < 1e-9);
        let x = Point::new(&[2, -1, 3]);
        let y = Point::new(&[-4, 0, 1]);
        let gxy = green(&dom, &x, &y, SolverOptions::default()).unwrap();
        let gyx = green(&dom, &y, &x, SolverOptions::default()).unwrap();
        assert!((gxy - gyx).abs() < 1e-10);
        assert!(green(&dom.clone().with_absorbing(set(&[&[0, 0, 0]])), &o, &x, SolverOptions::default()).is_err());
    }

    #[test]
    fn non_convergence_is_a_numerical_error() {
        let dom = KilledDomain::centered(3, 10);
        let o = Point::origin(3);
        let r = green(&dom, &o, &o, SolverOptions { tol: 1e-12, max_iter: 3 });
        assert!(matches!(r, Err(Error::Numerical(_))));
    }

    #[test]
    fn hitting_edge_cases() {
        let dom = KilledDomain::centered(3, 6);
        let a = set(&[&[0, 0, 0]]);
        let o = Point::origin(3);
        assert_eq!(hitting_prob(&dom, &o, &a, SolverOptions::default()).unwrap(), 1.0);
        assert_eq!(hitting_prob(&dom, &Point::axis(3, 0, 2), &PointSet::new(), SolverOptions::default()).unwrap(), 0.0);
        let p = hitting_prob(&dom, &Point::axis(3, 0, 1), &a, SolverOptions::default()).unwrap();
        assert!(p > 0.2 && p < 0.4);
    }

    #[test]
    fn kernel_routes_agree_and_rows_match_hitting() {
        let dom = KilledDomain::centered(3, 7);
        let a = set(&[&[0, 0, 0], &[1, 0, 0]]);
        let b = Ball::new(Point::origin(3), 3).sphere();
        let opts = SolverOptions::default();
        let k1 = hitting_kernel(&dom, &a, &b, KernelRoute::ByTarget, opts).unwrap();
        let k2 = hitting_kernel(&dom, &a, &b, KernelRoute::BySource, opts).unwrap();
        for (x, y) in k1.values.iter().zip(&k2.values) {
            assert!((x - y).abs() < 1e-9);
        }
        for (i, s) in k1.sources.iter().enumerate() {
            let h = hitting_prob(&dom, s, &b, opts).unwrap();
            assert!((k1.row_sum(i) - h).abs() < 1e-10);
        }
        assert!(hitting_kernel(&dom, &a, &a, KernelRoute::Auto, opts).is_err());
    }

    #[test]
    fn equilibrium_is_supported_on_the_boundary() {
        let dom = KilledDomain::centered(3, 8);
        let ball = Ball::new(Point::origin(3), 2).points();
        let eq = equilibrium_measure(&dom, &ball, SolverOptions::default()).unwrap();
        let sphere = Ball::new(Point::origin(3), 2).sphere();
        for (p, w) in &eq.weights {
            if sphere.contains(p) {
                assert!(*w > 0.0);
            } else {
                assert!(w.abs() < 1e-12);
            }
        }
        assert!(equilibrium_measure(&dom, &PointSet::new(), SolverOptions::default()).is_err());
    }

    #[test]
    fn bridges_end_at_the_target() {
        let dom = KilledDomain::centered(3, 6);
        let b = Ball::new(Point::origin(3), 2).sphere();
        let target = Point::new(&[2, 1, 0]);
        let start = Point::origin(3);
        let br = HitBridge::new(&dom, &b, &target, std::slice::from_ref(&start), SolverOptions::default()).unwrap();
        let mut rng = crate::rng::stream(1, &[0]);
        for _ in 0..200 {
            let path = br.sample(&start, &mut rng).unwrap();
            assert_eq!(path.last().unwrap(), &target);
            assert!(path[..path.len() - 1].iter().all(|p| !b.contains(p)));
            assert!(path.windows(2).all(|w| w[0].is_adjacent(&w[1])));
        }
    }
}
