//! Empirical decoupling defect between two local functions of the soup.
//!
//! The sprinkled soup is realized by superposition: an independent layer of
//! intensity `delta` is added to the soup at `alpha` (increasing case), or
//! the soup at `alpha` is the union of a soup at `(alpha - delta)+` and an
//! independent remainder (decreasing case). Both sides of the inequality are
//! then estimated on the same replicates.

use loopsoup::lattice::{Point, PointSet};
use loopsoup::soup::{DirectSampler, LocalTimeField, SoupConfig, Strategy, Window};
use loopsoup::stats::{z_value, EstimateRecord, Moments};
use loopsoup::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::functions::{Direction, FunctionKind, MonotoneLocalFunction};
use crate::parallel::map_replicates;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecouplingExperiment {
    pub alpha: f64,
    pub delta: f64,
    /// Radius of the anchor boxes.
    pub l: i64,
    /// Separation in units of `l`: `x_2 = s l e_1`, `x_1 = 0`.
    pub s: i64,
    pub d: usize,
    pub f1: FunctionKind,
    pub f2: FunctionKind,
    /// Inequality variant; must match the direction of `f2` when given.
    pub variant: Option<Direction>,
    pub n_max: usize,
    pub replicates: u64,
    pub seed: u64,
    pub level: f64,
}

impl DecouplingExperiment {
    pub fn x1(&self) -> Point {
        Point::origin(self.d)
    }

    pub fn x2(&self) -> Point {
        Point::axis(self.d, 0, self.s * self.l)
    }

    pub fn f1(&self) -> MonotoneLocalFunction {
        MonotoneLocalFunction::new(self.f1, self.x1(), self.l)
    }

    pub fn f2(&self) -> MonotoneLocalFunction {
        MonotoneLocalFunction::new(self.f2, self.x2(), self.l)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta = {} must lie in (0, 1)", self.delta)));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::Config("alpha must be finite and non-negative".into()));
        }
        if self.l < 0 || self.s < 1 || self.d < 1 {
            return Err(Error::Config("need L >= 0, s >= 1, d >= 1".into()));
        }
        if let Some(v) = self.variant {
            if v != self.f2().direction() {
                return Err(Error::Config(format!(
                    "variant {v:?} does not match the direction {:?} of f2",
                    self.f2().direction()
                )));
            }
        }
        if self.replicates < 2 {
            return Err(Error::Config("need at least two replicates".into()));
        }
        Ok(())
    }

    fn window(&self) -> Window {
        let mut pts: PointSet = self.f1().support().points();
        pts.extend(self.f2().support().points());
        Window::Points(pts)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefectReport {
    pub alpha: f64,
    pub delta: f64,
    pub s: i64,
    pub l: i64,
    pub increasing: bool,
    pub replicates: u64,
    /// `E^alpha[f1 f2]`.
    pub lhs: EstimateRecord,
    pub f1: EstimateRecord,
    /// `E^{alpha +- delta}[f2]`.
    pub f2_sprinkled: EstimateRecord,
    pub product: f64,
    /// `lhs - product` with a delta-method interval.
    pub difference: f64,
    pub difference_se: f64,
    pub difference_ci: (f64, f64),
    /// `max(0, difference)` and its interval.
    pub defect: f64,
    pub defect_ci: (f64, f64),
    /// Replicates on which the coupled sprinkled value of `f2` moved against
    /// its direction; zero by construction.
    pub coupling_violations: u64,
}

pub fn decoupling_defect(exp: &DecouplingExperiment) -> Result<DefectReport> {
    exp.validate()?;
    let f1 = exp.f1();
    let f2 = exp.f2();
    let increasing = f2.direction() == Direction::Increasing;
    let (base_alpha, extra_alpha) = if increasing {
        (exp.alpha, exp.delta)
    } else {
        let lower = (exp.alpha - exp.delta).max(0.0);
        (lower, exp.alpha - lower)
    };
    let window = exp.window();
    let cfg = SoupConfig { alpha: base_alpha, window: window.clone(), n_max: exp.n_max, seed: exp.seed, d: exp.d };
    let base = DirectSampler::new(&cfg, Strategy::Conditioned)?;
    let extra = base.with_alpha(extra_alpha)?;
    // (f1 f2 at alpha, f1 at alpha, f2 sprinkled, coupling violation)
    let outcomes = map_replicates(0, exp.replicates, |rep| {
        let mut lower = LocalTimeField::new(&window);
        base.sample_into(rep, 0, &mut |flat| lower.add_loop(flat));
        let mut upper = lower.clone();
        extra.sample_into(rep, 1, &mut |flat| upper.add_loop(flat));
        let (at_alpha, sprinkled) = if increasing { (&lower, &upper) } else { (&upper, &lower) };
        let a1 = f1.eval_field(at_alpha);
        let a2 = f2.eval_field(at_alpha);
        let b2 = f2.eval_field(sprinkled);
        let violation = if increasing { b2 < a2 } else { b2 > a2 };
        Ok((a1 && a2, a1, b2, violation))
    })?;
    let pairs: Vec<bool> = outcomes.iter().map(|o| o.0).collect();
    let ones: Vec<bool> = outcomes.iter().map(|o| o.1).collect();
    let twos: Vec<bool> = outcomes.iter().map(|o| o.2).collect();
    let lhs = EstimateRecord::bernoulli("E[f1 f2]", exp.seed, 0, &pairs);
    let r1 = EstimateRecord::bernoulli("E[f1]", exp.seed, 0, &ones);
    let r2 = EstimateRecord::bernoulli("E[f2 sprinkled]", exp.seed, 0, &twos);
    let (m1, m2) = (r1.mean(), r2.mean());
    let product = m1 * m2;
    let difference = lhs.mean() - product;
    let mut lin = Moments::default();
    for o in &outcomes {
        let v = f64::from(u8::from(o.0)) - m2 * f64::from(u8::from(o.1)) - m1 * f64::from(u8::from(o.2));
        lin.push(v);
    }
    let se = lin.std_error();
    let z = z_value(exp.level);
    let ci = (difference - z * se, difference + z * se);
    Ok(DefectReport {
        alpha: exp.alpha,
        delta: exp.delta,
        s: exp.s,
        l: exp.l,
        increasing,
        replicates: exp.replicates,
        lhs,
        f1: r1,
        f2_sprinkled: r2,
        product,
        difference,
        difference_se: se,
        difference_ci: ci,
        defect: difference.max(0.0),
        defect_ci: (ci.0.max(0.0), ci.1.max(0.0)),
        coupling_violations: outcomes.iter().filter(|o| o.3).count() as u64,
    })
}

/// Defects over all `(s, delta)` pairs, in the given order.
pub fn decoupling_sweep(base: &DecouplingExperiment, s_values: &[i64], deltas: &[f64]) -> Result<Vec<DefectReport>> {
    let mut out = Vec::new();
    for &s in s_values {
        for &delta in deltas {
            let exp = DecouplingExperiment { s, delta, ..base.clone() };
            out.push(decoupling_defect(&exp)?);
        }
    }
    Ok(out)
}

pub fn write_defects_csv<W: std::io::Write>(rows: &[DefectReport], mut w: W) -> Result<()> {
    writeln!(
        w,
        "alpha,delta,s,l,replicates,lhs,f1,f2_sprinkled,product,difference,difference_se,diff_lo,diff_hi,defect,defect_lo,defect_hi,coupling_violations"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.alpha,
            r.delta,
            r.s,
            r.l,
            r.replicates,
            r.lhs.mean(),
            r.f1.mean(),
            r.f2_sprinkled.mean(),
            r.product,
            r.difference,
            r.difference_se,
            r.difference_ci.0,
            r.difference_ci.1,
            r.defect,
            r.defect_ci.0,
            r.defect_ci.1,
            r.coupling_violations
        )?;
    }
    Ok(())
}
