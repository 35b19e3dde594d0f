//! Points, boxes and boundaries of the hypercubic lattice with runtime dimension.
//!
//! Boxes are sup-norm balls `B(x, r) = {y : |y - x|_inf <= r}`; adjacency is the
//! nearest-neighbour relation `|x - y|_1 = 1`. Point sets are `BTreeSet`s, so
//! iteration is always lexicographic.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{config, domain, Result};

pub type Coords = SmallVec<[i64; 4]>;

/// A lattice site. Ordering is lexicographic on coordinates.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Coords);

pub type PointSet = BTreeSet<Point>;

impl Point {
    pub fn new(coords: &[i64]) -> Self {
        Point(SmallVec::from_slice(coords))
    }

    pub fn origin(d: usize) -> Self {
        Point(smallvec::smallvec![0; d])
    }

    /// `scale * e_axis`.
    pub fn axis(d: usize, axis: usize, scale: i64) -> Self {
        let mut p = Point::origin(d);
        p.0[axis] = scale;
        p
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn add(&self, other: &Point) -> Point {
        Point(self.0.iter().zip(other.0.iter()).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Point) -> Point {
        Point(self.0.iter().zip(other.0.iter()).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, k: i64) -> Point {
        Point(self.0.iter().map(|a| a * k).collect())
    }

    /// Shift by `delta` along one axis.
    pub fn shifted(&self, axis: usize, delta: i64) -> Point {
        let mut p = self.clone();
        p.0[axis] += delta;
        p
    }

    pub fn sup_norm(&self) -> i64 {
        self.0.iter().map(|a| a.abs()).max().unwrap_or(0)
    }

    pub fn l1_norm(&self) -> i64 {
        self.0.iter().map(|a| a.abs()).sum()
    }

    pub fn sup_dist(&self, other: &Point) -> i64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .max()
            .unwrap_or(0)
    }

    pub fn l1_dist(&self, other: &Point) -> i64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| (a - b).abs()).sum()
    }

    pub fn is_adjacent(&self, other: &Point) -> bool {
        self.l1_dist(other) == 1
    }

    /// The `2d` nearest neighbours, ordered `-e_1, +e_1, -e_2, ...`.
    pub fn neighbors(&self) -> impl Iterator<Item = Point> + '_ {
        (0..2 * self.dim()).map(move |k| self.shifted(k / 2, if k % 2 == 0 { -1 } else { 1 }))
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Sup-norm ball `B(center, radius)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Point,
    pub radius: i64,
}

impl Ball {
    pub fn new(center: Point, radius: i64) -> Self {
        Ball { center, radius }
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.center.sup_dist(p) <= self.radius
    }

    pub fn rect(&self) -> Rect {
        Rect::around(&self.center, self.radius)
    }

    pub fn points(&self) -> PointSet {
        self.rect().iter().collect()
    }

    /// `∂int B`: the points at sup distance exactly `radius` from the centre.
    pub fn sphere(&self) -> PointSet {
        if self.radius == 0 {
            return std::iter::once(self.center.clone()).collect();
        }
        self.rect()
            .iter()
            .filter(|p| self.center.sup_dist(p) == self.radius)
            .collect()
    }
}

/// Axis-aligned rectangle `lo <= x <= hi` with a dense row-major index
/// (first coordinate slowest), so index order is lexicographic order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rect {
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
    strides: Vec<usize>,
    len: usize,
}

impl Rect {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        let d = lo.len();
        let mut strides = vec![0usize; d];
        let mut acc = 1usize;
        for k in (0..d).rev() {
            strides[k] = acc;
            let side = (hi[k] - lo[k] + 1).max(0) as usize;
            acc = acc.saturating_mul(side);
        }
        Rect { lo, hi, strides, len: acc }
    }

    pub fn around(center: &Point, radius: i64) -> Self {
        Rect::new(
            center.coords().iter().map(|c| c - radius).collect(),
            center.coords().iter().map(|c| c + radius).collect(),
        )
    }

    /// Smallest rectangle containing every point of `set`, grown by `margin`.
    pub fn bounding(set: &PointSet, margin: i64) -> Option<Self> {
        let first = set.iter().next()?;
        let d = first.dim();
        let mut lo = first.coords().to_vec();
        let mut hi = lo.clone();
        for p in set {
            for k in 0..d {
                lo[k] = lo[k].min(p.0[k]);
                hi[k] = hi[k].max(p.0[k]);
            }
        }
        Some(Rect::new(
            lo.iter().map(|v| v - margin).collect(),
            hi.iter().map(|v| v + margin).collect(),
        ))
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn side(&self, axis: usize) -> usize {
        (self.hi[axis] - self.lo[axis] + 1) as usize
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.contains_coords(p.coords())
    }

    pub fn contains_coords(&self, c: &[i64]) -> bool {
        c.iter()
            .enumerate()
            .all(|(k, v)| *v >= self.lo[k] && *v <= self.hi[k])
    }

    pub fn index_of(&self, p: &Point) -> Option<usize> {
        self.index_of_coords(p.coords())
    }

    pub fn index_of_coords(&self, c: &[i64]) -> Option<usize> {
        let mut idx = 0usize;
        for (k, v) in c.iter().enumerate() {
            if *v < self.lo[k] || *v > self.hi[k] {
                return None;
            }
            idx += (*v - self.lo[k]) as usize * self.strides[k];
        }
        Some(idx)
    }

    pub fn coords_at(&self, mut idx: usize, out: &mut [i64]) {
        for k in 0..self.dim() {
            out[k] = self.lo[k] + (idx / self.strides[k]) as i64;
            idx %= self.strides[k];
        }
    }

    pub fn point_at(&self, idx: usize) -> Point {
        let mut c: Coords = smallvec::smallvec![0; self.dim()];
        self.coords_at(idx, &mut c);
        Point(c)
    }

    /// Whether the site with this index lies on the rectangle's own boundary.
    pub fn on_face(&self, idx: usize) -> bool {
        let mut rem = idx;
        for k in 0..self.dim() {
            let off = rem / self.strides[k];
            rem %= self.strides[k];
            if off == 0 || off + 1 == self.side(k) {
                return true;
            }
        }
        false
    }

    pub fn iter(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.len).map(move |i| self.point_at(i))
    }
}

/// Points of `set` having at least one neighbour outside `set`.
pub fn interior_boundary(set: &PointSet) -> PointSet {
    set.iter()
        .filter(|p| p.neighbors().any(|q| !set.contains(&q)))
        .cloned()
        .collect()
}

/// Points outside `set` having at least one neighbour in `set`.
pub fn exterior_boundary(set: &PointSet) -> PointSet {
    let mut out = PointSet::new();
    for p in set {
        for q in p.neighbors() {
            if !set.contains(&q) {
                out.insert(q);
            }
        }
    }
    out
}

/// The coarse lattice `spacing * Z^d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenormLattice {
    pub spacing: i64,
}

impl RenormLattice {
    pub fn contains(&self, p: &Point) -> bool {
        p.coords().iter().all(|c| c.rem_euclid(self.spacing) == 0)
    }
}

/// The `3^d - 1` points of the coarse lattice at sup distance one coarse step.
pub fn star_neighbors(x: &Point, lattice: RenormLattice) -> Result<Vec<Point>> {
    if lattice.spacing <= 0 {
        return config("lattice spacing must be positive");
    }
    if !lattice.contains(x) {
        return domain(format!("{x} is not on the lattice of spacing {}", lattice.spacing));
    }
    let d = x.dim();
    let offsets = Rect::around(&Point::origin(d), 1);
    Ok(offsets
        .iter()
        .filter(|o| o.sup_norm() != 0)
        .map(|o| x.add(&o.scale(lattice.spacing)))
        .collect())
}

/// The point of `l0 * Z^d` whose box of radius `(l0 - 1) / 2` contains `x`.
pub fn box_partition_cell(x: &Point, l0: i64) -> Result<Point> {
    if l0 <= 0 || l0 % 2 == 0 {
        return config(format!("cell side {l0} must be a positive odd integer"));
    }
    let r = (l0 - 1) / 2;
    Ok(Point(x.coords().iter().map(|c| l0 * (c + r).div_euclid(l0)).collect()))
}

/// Points of `set` reachable from `start` through `set` (nearest-neighbour moves).
pub fn component_of(set: &PointSet, start: &Point) -> PointSet {
    let mut seen = PointSet::new();
    if !set.contains(start) {
        return seen;
    }
    let mut stack = vec![start.clone()];
    seen.insert(start.clone());
    while let Some(p) = stack.pop() {
        for q in p.neighbors() {
            if set.contains(&q) && !seen.contains(&q) {
                seen.insert(q.clone());
                stack.push(q);
            }
        }
    }
    seen
}

pub fn is_connected(set: &PointSet) -> bool {
    match set.iter().next() {
        None => true,
        Some(p) => component_of(set, p).len() == set.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundaries_of_small_boxes() {
        let b2 = Ball::new(Point::origin(3), 2).points();
        assert_eq!(interior_boundary(&b2).len(), 98);
        let single: PointSet = [Point::origin(3)].into_iter().collect();
        assert_eq!(exterior_boundary(&single).len(), 6);
        let b1 = Ball::new(Point::origin(3), 1).points();
        // faces of the 3x3x3 cube, each a 3x3 grid, no edges or corners
        assert_eq!(exterior_boundary(&b1).len(), 54);
        assert_eq!(Ball::new(Point::origin(3), 2).sphere(), interior_boundary(&b2));
    }

    #[test]
    fn star_neighbours_and_cells() {
        let lat = RenormLattice { spacing: 9 };
        let s = star_neighbors(&Point::new(&[9, 0, -9]), lat).unwrap();
        assert_eq!(s.len(), 26);
        assert!(star_neighbors(&Point::new(&[1, 0, 0]), lat).is_err());
        assert_eq!(box_partition_cell(&Point::new(&[5, 0, 0]), 9).unwrap(), Point::new(&[9, 0, 0]));
        assert_eq!(box_partition_cell(&Point::new(&[4, -4, 4]), 9).unwrap(), Point::origin(3));
        assert_eq!(box_partition_cell(&Point::new(&[-5, 13, 14]), 9).unwrap(), Point::new(&[-9, 9, 18]));
        assert!(box_partition_cell(&Point::origin(3), 8).is_err());
    }

    #[test]
    fn rect_index_is_lexicographic() {
        let r = Rect::new(vec![-1, 0], vec![1, 2]);
        let pts: Vec<Point> = r.iter().collect();
        let mut sorted = pts.clone();
        sorted.sort();
        assert_eq!(pts, sorted);
        for (i, p) in pts.iter().enumerate() {
            assert_eq!(r.index_of(p), Some(i));
        }
    }
}
