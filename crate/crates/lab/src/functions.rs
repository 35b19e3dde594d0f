//! Local indicator functions of the occupied set with a declared monotonicity.

use loopsoup::lattice::{component_of, Ball, Point, PointSet, Rect};
use loopsoup::rng::stream;
use loopsoup::soup::LocalTimeField;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionKind {
    /// The anchor is visited by some loop.
    SiteOccupied,
    /// The anchor is visited by no loop.
    SiteVacant,
    /// At least `fraction` of the anchor box is occupied.
    OccupiedFractionGe { fraction: f64 },
    /// A vacant path inside the anchor box joins its two faces orthogonal to `e_1`.
    VacantCrossing,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Non-decreasing when loops are added.
    Increasing,
    /// Non-increasing when loops are added.
    Decreasing,
}

/// An indicator depending only on the occupation of `B(anchor, radius)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotoneLocalFunction {
    pub kind: FunctionKind,
    pub anchor: Point,
    pub radius: i64,
}

impl MonotoneLocalFunction {
    pub fn new(kind: FunctionKind, anchor: Point, radius: i64) -> Self {
        MonotoneLocalFunction { kind, anchor, radius }
    }

    pub fn direction(&self) -> Direction {
        match self.kind {
            FunctionKind::SiteOccupied | FunctionKind::OccupiedFractionGe { .. } => Direction::Increasing,
            FunctionKind::SiteVacant | FunctionKind::VacantCrossing => Direction::Decreasing,
        }
    }

    pub fn support(&self) -> Ball {
        Ball::new(self.anchor.clone(), self.radius)
    }

    /// Value on an occupation predicate; only points of the support are queried.
    pub fn eval(&self, occupied: &dyn Fn(&Point) -> bool) -> bool {
        match self.kind {
            FunctionKind::SiteOccupied => occupied(&self.anchor),
            FunctionKind::SiteVacant => !occupied(&self.anchor),
            FunctionKind::OccupiedFractionGe { fraction } => {
                let rect = self.support().rect();
                let hits = rect.iter().filter(|p| occupied(p)).count();
                hits as f64 >= fraction * rect.len() as f64
            }
            FunctionKind::VacantCrossing => {
                let rect = self.support().rect();
                let vacant: PointSet = rect.iter().filter(|p| !occupied(p)).collect();
                let lo = self.anchor.coords()[0] - self.radius;
                let hi = self.anchor.coords()[0] + self.radius;
                let mut seen = PointSet::new();
                for p in vacant.iter().filter(|p| p.coords()[0] == lo) {
                    if seen.contains(p) {
                        continue;
                    }
                    let comp = component_of(&vacant, p);
                    if comp.iter().any(|q| q.coords()[0] == hi) {
                        return true;
                    }
                    seen.extend(comp);
                }
                false
            }
        }
    }

    pub fn eval_field(&self, field: &LocalTimeField) -> bool {
        self.eval(&|p| field.get(p) > 0)
    }

    /// Checks the declared direction on random configurations of the support:
    /// occupying one more site never moves the value against the direction.
    pub fn verify_direction(&self, trials: usize, seed: u64) -> bool {
        let rect: Rect = self.support().rect();
        let pts: Vec<Point> = rect.iter().collect();
        let mut rng = stream(seed, &[0x4d4f_4e4f]);
        for _ in 0..trials {
            let density: f64 = rng.gen();
            let base: PointSet = pts.iter().filter(|_| rng.gen::<f64>() < density).cloned().collect();
            let extra = pts[rng.gen_range(0..pts.len())].clone();
            let mut more = base.clone();
            more.insert(extra);
            let before = self.eval(&|p| base.contains(p));
            let after = self.eval(&|p| more.contains(p));
            let ok = match self.direction() {
                Direction::Increasing => after >= before,
                Direction::Decreasing => after <= before,
            };
            if !ok {
                return false;
            }
        }
        true
    }
}
