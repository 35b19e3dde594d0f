//! Box-by-box exploration of a vacant cluster and the deterministic surgery
//! inside a single box: the tunnel from an entry point to the frame and the
//! prescribed simple paths of the crossing bridges.

use std::collections::{HashMap, VecDeque};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};
use crate::lattice::{box_partition_cell, Point, PointSet, Rect};
use crate::renorm::{classify_box, default_threshold, BoxClass, Frame};
use crate::soup::DirectSampler;
use crate::stats::EstimateRecord;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    /// The current box lies on the coarse sphere of radius `floor(N / 30)`.
    ReachedSphere,
    /// The start is not connected to the inner boundary of the explored region.
    Disconnected,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorationStep {
    pub k: usize,
    /// Centre of the box added at this step.
    pub cell: Point,
    /// Boundary point through which the box was entered (`None` at step 0).
    pub entry: Option<Point>,
    /// Number of points of the explored region after the step.
    pub region_size: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorationState {
    pub start: Point,
    pub radius: i64,
    pub n: i64,
    /// Coarse radius at which the exploration stops, `floor(N / 30)`.
    pub target: i64,
    pub steps: Vec<ExplorationStep>,
    pub tau: usize,
    pub stop: StopReason,
    /// Size of the vacant cluster of the start inside the final region.
    pub cluster_size: usize,
    /// Largest sup distance from the start within that cluster.
    pub cluster_extent: i64,
}

impl ExplorationState {
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for s in &self.steps {
            serde_json::to_writer(&mut w, s).map_err(|e| Error::Numerical(e.to_string()))?;
            writeln!(w)?;
        }
        Ok(())
    }
}

struct CachedOracle<'a> {
    vacant: &'a dyn Fn(&Point) -> Option<bool>,
    cache: HashMap<Point, bool>,
}

impl CachedOracle<'_> {
    fn get(&mut self, p: &Point) -> Result<bool> {
        if let Some(&v) = self.cache.get(p) {
            return Ok(v);
        }
        let v = (self.vacant)(p).ok_or_else(|| Error::Domain(format!("the vacant set oracle does not cover {p}")))?;
        self.cache.insert(p.clone(), v);
        Ok(v)
    }
}

/// Runs the exploration from `start` over boxes of radius `radius`.
pub fn explore_run(
    vacant: &dyn Fn(&Point) -> Option<bool>,
    start: &Point,
    n: i64,
    radius: i64,
) -> Result<ExplorationState> {
    if radius < 1 || n < 1 {
        return config("exploration needs R >= 1 and N >= 1");
    }
    let spacing = 2 * radius + 1;
    if start.sup_norm() > spacing * (2 * n / 3) {
        return domain(format!("start {start} lies outside B(0, L0 floor(2N/3))"));
    }
    let target = n / 30;
    let mut oracle = CachedOracle { vacant, cache: HashMap::new() };
    let first = box_partition_cell(start, spacing)?;
    let mut cells = vec![first.clone()];
    let mut region: PointSet = Rect::around(&first, radius).iter().collect();
    let mut steps = vec![ExplorationStep { k: 0, cell: first.clone(), entry: None, region_size: region.len() }];
    loop {
        let k = cells.len() - 1;
        let current = &cells[k];
        let cluster = vacant_cluster(&mut oracle, start, &region)?;
        if current.sup_dist(&first) == spacing * target {
            return Ok(finish(start, radius, n, target, steps, StopReason::ReachedSphere, &cluster));
        }
        let entry = cluster.iter().find(|z| z.neighbors().any(|q| !region.contains(&q))).cloned();
        let Some(entry) = entry else {
            return Ok(finish(start, radius, n, target, steps, StopReason::Disconnected, &cluster));
        };
        let own = box_partition_cell(&entry, spacing)?;
        let mut next: Option<Point> = None;
        for q in entry.neighbors() {
            let c = box_partition_cell(&q, spacing)?;
            if c != own && !cells.contains(&c) && next.as_ref().map_or(true, |b| c < *b) {
                next = Some(c);
            }
        }
        let next = next.expect("a boundary point has an unexplored neighbouring box");
        region.extend(Rect::around(&next, radius).iter());
        cells.push(next.clone());
        steps.push(ExplorationStep { k: k + 1, cell: next, entry: Some(entry), region_size: region.len() });
    }
}

fn finish(
    start: &Point,
    radius: i64,
    n: i64,
    target: i64,
    steps: Vec<ExplorationStep>,
    stop: StopReason,
    cluster: &PointSet,
) -> ExplorationState {
    ExplorationState {
        start: start.clone(),
        radius,
        n,
        target,
        tau: steps.len() - 1,
        steps,
        stop,
        cluster_size: cluster.len(),
        cluster_extent: cluster.iter().map(|z| z.sup_dist(start)).max().unwrap_or(0),
    }
}

fn vacant_cluster(oracle: &mut CachedOracle, start: &Point, region: &PointSet) -> Result<PointSet> {
    let mut seen = PointSet::new();
    if !oracle.get(start)? {
        return Ok(seen);
    }
    seen.insert(start.clone());
    let mut stack = vec![start.clone()];
    while let Some(p) = stack.pop() {
        for q in p.neighbors() {
            if region.contains(&q) && !seen.contains(&q) && oracle.get(&q)? {
                seen.insert(q.clone());
                stack.push(q);
            }
        }
    }
    Ok(seen)
}

const IN_BOUNDARY: u8 = 1;
const IN_FRAME: u8 = 2;
const IN_TUNNEL: u8 = 4;

/// The tunnel `Pi` for an entry point and the remaining interior
/// `Q(x') \ (inner boundary, frame, Pi)`, with breadth-first routing inside it.
#[derive(Clone, Debug)]
pub struct SurgeryGeometry {
    pub center: Point,
    pub radius: i64,
    pub entry: Point,
    /// The unique neighbour of the entry outside the box.
    pub exit: Point,
    /// Tunnel points in order from the entry.
    pub tunnel: Vec<Point>,
    frame: Frame,
    rect: Rect,
    flags: Vec<u8>,
    distances: HashMap<usize, Vec<u32>>,
}

impl SurgeryGeometry {
    pub fn new(center: &Point, entry: &Point, radius: i64) -> Result<Self> {
        if radius < 4 {
            return domain(format!("the surgery needs R >= 4, got {radius}"));
        }
        let frame = Frame::new(center.clone(), radius)?;
        let offset = entry.sub(center);
        if offset.sup_norm() != radius {
            return domain(format!("{entry} is not on the inner boundary of the box around {center}"));
        }
        if frame.contains(entry) {
            return domain(format!("{entry} lies on the frame"));
        }
        let d = center.dim();
        let axis = (0..d).find(|&a| offset.coords()[a].abs() == radius).expect("on the boundary");
        let turn = if axis == 0 { 1 } else { 0 };
        let inward = if offset.coords()[axis] == -radius { 1 } else { -1 };
        let mut tunnel = vec![entry.clone(), entry.shifted(axis, inward), entry.shifted(axis, 2 * inward)];
        let mut p = entry.shifted(axis, 2 * inward).shifted(turn, 1);
        while p.sup_dist(center) <= radius {
            tunnel.push(p.clone());
            p = p.shifted(turn, 1);
        }
        let rect = Rect::around(center, radius);
        let mut flags = vec![0u8; rect.len()];
        for (i, q) in rect.iter().enumerate() {
            if q.sup_dist(center) == radius {
                flags[i] |= IN_BOUNDARY;
            }
            if frame.contains(&q) {
                flags[i] |= IN_FRAME;
            }
        }
        for q in &tunnel {
            flags[rect.index_of(q).expect("tunnel inside the box")] |= IN_TUNNEL;
        }
        let exit = entry.shifted(axis, -inward);
        Ok(SurgeryGeometry {
            center: center.clone(),
            radius,
            entry: entry.clone(),
            exit,
            tunnel,
            frame,
            rect,
            flags,
            distances: HashMap::new(),
        })
    }

    fn interior_index(&self, p: &Point) -> Option<usize> {
        self.rect.index_of(p).filter(|&i| self.flags[i] == 0)
    }

    pub fn in_interior(&self, p: &Point) -> bool {
        self.interior_index(p).is_some()
    }

    pub fn interior(&self) -> PointSet {
        self.rect.iter().zip(&self.flags).filter(|(_, f)| **f == 0).map(|(p, _)| p).collect()
    }

    pub fn tunnel_hits_frame(&self) -> bool {
        self.tunnel.iter().any(|p| self.frame.contains(p))
    }

    pub fn interior_connected(&self) -> bool {
        crate::lattice::is_connected(&self.interior())
    }

    /// Inner boundary points off the frame and other than the entry.
    pub fn admissible_starts(&self) -> Vec<Point> {
        self.rect
            .iter()
            .zip(&self.flags)
            .filter(|(p, f)| **f & IN_BOUNDARY != 0 && **f & IN_FRAME == 0 && p != &self.entry)
            .map(|(p, _)| p)
            .collect()
    }

    /// Outer boundary points other than the exit and not adjacent to the frame.
    pub fn admissible_targets(&self) -> Vec<Point> {
        let mut out = Vec::new();
        for p in self.rect.iter() {
            if p.sup_dist(&self.center) != self.radius {
                continue;
            }
            for q in p.neighbors() {
                if q.sup_dist(&self.center) > self.radius
                    && q != self.exit
                    && !q.neighbors().any(|z| self.frame.contains(&z))
                {
                    out.push(q);
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }

    /// Admissible starts without a neighbour in the interior.
    pub fn boundary_neighbor_failures(&self) -> Vec<Point> {
        self.admissible_starts()
            .into_iter()
            .filter(|z| !z.neighbors().any(|q| self.in_interior(&q)))
            .collect()
    }

    fn unique_interior_neighbor(&self, p: &Point) -> Result<Point> {
        let mut it = p.neighbors().filter(|q| self.in_interior(q));
        match (it.next(), it.next()) {
            (Some(q), None) => Ok(q),
            _ => domain(format!("{p} does not have exactly one interior neighbour")),
        }
    }

    fn distances_to(&mut self, target: usize) -> &Vec<u32> {
        let rect = &self.rect;
        let flags = &self.flags;
        self.distances.entry(target).or_insert_with(|| {
            let mut dist = vec![u32::MAX; rect.len()];
            dist[target] = 0;
            let mut queue = VecDeque::from([target]);
            while let Some(i) = queue.pop_front() {
                let p = rect.point_at(i);
                for q in p.neighbors() {
                    if let Some(j) = rect.index_of(&q) {
                        if flags[j] == 0 && dist[j] == u32::MAX {
                            dist[j] = dist[i] + 1;
                            queue.push_back(j);
                        }
                    }
                }
            }
            dist
        })
    }

    /// Shortest interior route between two interior points; among shortest
    /// routes each step goes to the lexicographically smallest candidate.
    pub fn interior_route(&mut self, from: &Point, to: &Point) -> Result<Vec<Point>> {
        let (Some(a), Some(b)) = (self.interior_index(from), self.interior_index(to)) else {
            return domain("route endpoints must lie in the interior");
        };
        let rect = self.rect.clone();
        let dist = self.distances_to(b).clone();
        if dist[a] == u32::MAX {
            return domain(format!("{to} is not reachable from {from} in the interior"));
        }
        let mut path = vec![from.clone()];
        let mut cur = a;
        while cur != b {
            let p = rect.point_at(cur);
            let mut best: Option<(Point, usize)> = None;
            for q in p.neighbors() {
                if let Some(j) = rect.index_of(&q) {
                    if dist[j] != u32::MAX && dist[j] + 1 == dist[cur] && best.as_ref().map_or(true, |(bq, _)| q < *bq) {
                        best = Some((q, j));
                    }
                }
            }
            let (q, j) = best.expect("a shortest route continues");
            path.push(q);
            cur = j;
        }
        Ok(path)
    }

    /// The prescribed path `(x_i, route, y_i', y_i)`; when `y_i'` equals `x_i`
    /// the path is the single step `(x_i, y_i)`.
    pub fn prescribed_path(&mut self, start: &Point, target: &Point) -> Result<Vec<Point>> {
        let Some(si) = self.rect.index_of(start) else {
            return domain(format!("{start} is outside the box"));
        };
        if self.flags[si] & IN_BOUNDARY == 0 || self.flags[si] & IN_FRAME != 0 || start == &self.entry {
            return domain(format!("{start} is not an admissible bridge start"));
        }
        if target.sup_dist(&self.center) != self.radius + 1 || target == &self.exit {
            return domain(format!("{target} is not an admissible bridge end"));
        }
        let mut inside = target.neighbors().filter(|q| self.rect.contains(q));
        let (Some(last), None) = (inside.next(), inside.next()) else {
            return domain(format!("{target} is not on the outer boundary of the box"));
        };
        if self.frame.contains(&last) {
            return domain(format!("{target} is adjacent to the frame"));
        }
        if &last == start {
            return Ok(vec![start.clone(), target.clone()]);
        }
        let a = self.unique_interior_neighbor(start)?;
        let b = self.unique_interior_neighbor(&last)?;
        let mut path = vec![start.clone()];
        path.extend(self.interior_route(&a, &b)?);
        path.push(last);
        path.push(target.clone());
        Ok(path)
    }

    pub fn plan(&mut self, endpoints: &[(Point, Point)]) -> Result<SurgeryPlan> {
        let d = self.center.dim();
        if 2 * endpoints.len() as u64 > default_threshold(self.radius, d) {
            return domain(format!(
                "{} bridges exceed half of R^(d-1) = {}",
                endpoints.len(),
                default_threshold(self.radius, d)
            ));
        }
        let mut paths = Vec::with_capacity(endpoints.len());
        for (s, t) in endpoints {
            paths.push(self.prescribed_path(s, t)?);
        }
        let boundary_visits = paths
            .iter()
            .map(|p| p.iter().filter(|q| q.sup_dist(&self.center) == self.radius).count())
            .sum();
        Ok(SurgeryPlan {
            center: self.center.clone(),
            radius: self.radius,
            entry: self.entry.clone(),
            exit: self.exit.clone(),
            tunnel: self.tunnel.clone(),
            endpoints: endpoints.to_vec(),
            paths,
            boundary_visits,
        })
    }
}

pub fn surgery_tunnel(center: &Point, entry: &Point, radius: i64) -> Result<(Vec<Point>, PointSet)> {
    let g = SurgeryGeometry::new(center, entry, radius)?;
    let interior = g.interior();
    Ok((g.tunnel, interior))
}

pub fn surgery_paths(
    center: &Point,
    entry: &Point,
    endpoints: &[(Point, Point)],
    radius: i64,
) -> Result<SurgeryPlan> {
    SurgeryGeometry::new(center, entry, radius)?.plan(endpoints)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurgeryPlan {
    pub center: Point,
    pub radius: i64,
    pub entry: Point,
    pub exit: Point,
    pub tunnel: Vec<Point>,
    pub endpoints: Vec<(Point, Point)>,
    pub paths: Vec<Vec<Point>>,
    /// Visits of all paths to the inner boundary of the box.
    pub boundary_visits: usize,
}

impl SurgeryPlan {
    /// Re-checks every property of the plan from its point lists alone.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let frame = Frame { center: self.center.clone(), radius: self.radius };
        let tunnel: PointSet = self.tunnel.iter().cloned().collect();
        let r = self.radius;
        let on_boundary = |p: &Point| p.sup_dist(&self.center) == r;
        for (i, (path, (s, t))) in self.paths.iter().zip(&self.endpoints).enumerate() {
            if path.first() != Some(s) || path.last() != Some(t) {
                out.push(format!("path {i} does not join its endpoints"));
            }
            if path.windows(2).any(|w| !w[0].is_adjacent(&w[1])) {
                out.push(format!("path {i} is not nearest-neighbour"));
            }
            let distinct: PointSet = path.iter().cloned().collect();
            if distinct.len() != path.len() {
                out.push(format!("path {i} is not simple"));
            }
            if path.iter().any(|p| tunnel.contains(p)) {
                out.push(format!("path {i} meets the tunnel"));
            }
            if path.iter().any(|p| frame.contains(p)) {
                out.push(format!("path {i} meets the frame"));
            }
            if path[..path.len() - 1].iter().any(|p| p.sup_dist(&self.center) > r) {
                out.push(format!("path {i} leaves the box before its end"));
            }
            let visits = path.iter().filter(|p| on_boundary(p)).count();
            let expected = if path.len() == 2 { 1 } else { 2 };
            if visits != expected {
                out.push(format!("path {i} visits the inner boundary {visits} times"));
            }
        }
        if !tunnel.contains(&self.entry) || !self.tunnel.iter().any(|p| frame.contains(p)) {
            out.push("the tunnel does not join the entry to the frame".into());
        }
        if self.tunnel.windows(2).any(|w| !w[0].is_adjacent(&w[1])) {
            out.push("the tunnel is not a path".into());
        }
        let total = self.paths.iter().flatten().filter(|p| on_boundary(p)).count();
        if total != self.boundary_visits || total as u64 > default_threshold(r, self.center.dim()) {
            out.push(format!("boundary visits {total} exceed R^(d-1)"));
        }
        out
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, self).map_err(|e| Error::Numerical(e.to_string()))?;
        writeln!(w)?;
        Ok(())
    }
}

/// Outcomes of the local connection event for one replicate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConnectOutcome {
    pub good: bool,
    pub exit_vacant: bool,
    /// `y` is joined to the frame through vacant points of `{y} u Q(x')`.
    pub connected: bool,
}

impl ConnectOutcome {
    pub fn joint(&self) -> bool {
        self.good && self.exit_vacant && self.connected
    }
}

/// Evaluates the connection event on a local time lookup covering `Q(x') u {y}`.
pub fn connect_outcome(
    center: &Point,
    radius: i64,
    exit: &Point,
    threshold: u64,
    local_time: &dyn Fn(&Point) -> Option<u32>,
) -> Result<ConnectOutcome> {
    let good = classify_box(center, radius, threshold, local_time)? == BoxClass::Good;
    let frame = Frame { center: center.clone(), radius };
    let vacant = |p: &Point| -> Result<bool> {
        local_time(p).map(|n| n == 0).ok_or_else(|| Error::Domain(format!("local times do not cover {p}")))
    };
    let exit_vacant = vacant(exit)?;
    let mut connected = false;
    if exit_vacant {
        let mut seen = PointSet::from([exit.clone()]);
        let mut stack = vec![exit.clone()];
        'search: while let Some(p) = stack.pop() {
            for q in p.neighbors() {
                if q.sup_dist(center) <= radius && !seen.contains(&q) && vacant(&q)? {
                    if frame.contains(&q) {
                        connected = true;
                        break 'search;
                    }
                    seen.insert(q.clone());
                    stack.push(q);
                }
            }
        }
    }
    Ok(ConnectOutcome { good, exit_vacant, connected })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConnectStatistic {
    pub alpha: f64,
    /// Frequency of `{y connected to the frame, y vacant, x' good}`.
    pub joint: EstimateRecord,
    /// Frequency of `{y vacant, x' good}`.
    pub base: EstimateRecord,
}

impl ConnectStatistic {
    pub fn conditional(&self) -> Option<f64> {
        (self.base.successes > 0).then(|| self.joint.successes as f64 / self.base.successes as f64)
    }
}

/// Connection frequencies along an increasing intensity grid. Soups at
/// successive grid points are coupled by superposition: layer `i` carries
/// intensity `alphas[i] - alphas[i-1]`, so the events are evaluated on nested
/// loop collections.
pub fn local_connect_sweep(
    sampler: &DirectSampler,
    center: &Point,
    exit: &Point,
    alphas: &[f64],
    replicates: u64,
) -> Result<Vec<ConnectStatistic>> {
    if alphas.windows(2).any(|w| w[1] < w[0]) || alphas.first().map_or(true, |&a| a < 0.0) {
        return config("intensity grid must be non-empty, non-negative and increasing");
    }
    let window = &sampler.config().window;
    let box_radius = infer_box_radius(window, center, exit)?;
    let threshold = default_threshold(box_radius, center.dim());
    let seed = sampler.config().seed;
    let mut joint = vec![Vec::with_capacity(replicates as usize); alphas.len()];
    let mut base = vec![Vec::with_capacity(replicates as usize); alphas.len()];
    let layers: Vec<DirectSampler> = alphas
        .iter()
        .enumerate()
        .map(|(i, &a)| sampler.with_alpha(a - if i == 0 { 0.0 } else { alphas[i - 1] }))
        .collect::<Result<_>>()?;
    for rep in 0..replicates {
        let mut field = crate::soup::LocalTimeField::new(window);
        for (i, layer) in layers.iter().enumerate() {
            layer.sample_into(rep, i as u64, &mut |flat| field.add_loop(flat));
            let lookup = crate::renorm::field_lookup(&field);
            let o = connect_outcome(center, box_radius, exit, threshold, &lookup)?;
            joint[i].push(o.joint());
            base[i].push(o.good && o.exit_vacant);
        }
    }
    Ok(alphas
        .iter()
        .enumerate()
        .map(|(i, &alpha)| ConnectStatistic {
            alpha,
            joint: EstimateRecord::bernoulli(format!("connect alpha={alpha}"), seed, 0, &joint[i]),
            base: EstimateRecord::bernoulli(format!("good-vacant alpha={alpha}"), seed, 0, &base[i]),
        })
        .collect())
}

fn infer_box_radius(window: &crate::soup::Window, center: &Point, exit: &Point) -> Result<i64> {
    let r = exit.sup_dist(center) - 1;
    if r < 1 {
        return domain(format!("{exit} is not on the outer boundary of a box around {center}"));
    }
    for p in Rect::around(center, r).iter().chain(std::iter::once(exit.clone())) {
        if !window.contains(&p) {
            return domain(format!("the sampler window does not cover {p}"));
        }
    }
    Ok(r)
}

pub fn local_connect_statistic(
    sampler: &DirectSampler,
    center: &Point,
    exit: &Point,
    replicates: u64,
) -> Result<ConnectStatistic> {
    let alpha = sampler.config().alpha;
    Ok(local_connect_sweep(sampler, center, exit, &[alpha], replicates)?.remove(0))
}
