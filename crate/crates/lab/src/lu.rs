//! Local uniqueness statistics of the vacant set.
//!
//! Two events are estimated on `B(0, n)`:
//! - `lu2`: all connected subsets of `V ∩ B(0, n)` with sup-norm diameter at
//!   least `n / 10` are connected to each other inside `V ∩ B(0, 2n)`;
//! - `lu1` (surrogate): some vacant site of `B(0, n)` is joined inside the
//!   sampled window to the inner boundary of `B(0, proxy_factor * n)`. A
//!   finite window cannot witness an infinite cluster; this distant-boundary
//!   connection stands in for it.

use std::collections::{HashMap, HashSet};

use loopsoup::lattice::{Ball, Point, Rect};
use loopsoup::soup::{DirectSampler, SoupConfig, Strategy, Window};
use loopsoup::stats::EstimateRecord;
use loopsoup::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::clusters::GridClusters;
use crate::coupling::{for_each_level, validate_grid};
use crate::parallel::map_replicates;

pub const SURROGATE_NOTE: &str =
    "lu1 is a surrogate: the infinite vacant cluster is replaced by connection to the inner boundary of B(0, proxy_factor * n) within the sampled window";

/// Largest sampled window, in sites.
pub const MAX_WINDOW_SITES: usize = 200_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LuConfig {
    /// Non-decreasing intensity grid; levels are coupled by superposition.
    pub alphas: Vec<f64>,
    pub n: i64,
    pub proxy_factor: i64,
    pub d: usize,
    pub n_max: usize,
    pub replicates: u64,
    pub seed: u64,
    pub level: f64,
    /// Frequency target for the largest-alpha report.
    pub target: f64,
}

impl LuConfig {
    pub fn new(alphas: Vec<f64>, n: i64, replicates: u64, seed: u64) -> Self {
        LuConfig { alphas, n, proxy_factor: 4, d: 3, n_max: 16, replicates, seed, level: 0.99, target: 0.9 }
    }

    pub fn window_radius(&self) -> i64 {
        self.proxy_factor * self.n
    }

    pub fn validate(&self) -> Result<()> {
        validate_grid(&self.alphas)?;
        if self.n < 1 || self.proxy_factor < 2 || self.d < 1 {
            return Err(Error::Config("need n >= 1, proxy_factor >= 2, d >= 1".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Config("need at least one replicate".into()));
        }
        let side = (2 * self.window_radius() + 1) as f64;
        if side.powi(self.d as i32) > MAX_WINDOW_SITES as f64 {
            return Err(Error::Resource(format!(
                "window B(0, {}) in d = {} exceeds {} sites",
                self.window_radius(),
                self.d,
                MAX_WINDOW_SITES
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LuRow {
    pub alpha: f64,
    pub lu1: EstimateRecord,
    pub lu2: EstimateRecord,
    pub lu1_ci: (f64, f64),
    pub lu2_ci: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LuReport {
    pub config: LuConfig,
    pub note: String,
    pub rows: Vec<LuRow>,
    /// Largest grid intensity whose `lu2` frequency is at least the target;
    /// an empirical stand-in for the existential threshold.
    pub largest_alpha_meeting_target: Option<f64>,
}

/// The two events on one occupied mask of the window rectangle.
pub fn lu_events(rect: &Rect, occupied: &[bool], n: i64) -> (bool, bool) {
    let d = rect.dim();
    let vacant: Vec<bool> = occupied.iter().map(|o| !o).collect();
    let mut g = GridClusters::new(rect.clone(), vacant);
    let inner = Rect::around(&Point::origin(d), n);
    let middle = Rect::around(&Point::origin(d), 2 * n);

    g.join_in(&inner);
    let mut spans: HashMap<u32, (Vec<i64>, Vec<i64>, usize)> = HashMap::new();
    let mut c = vec![0i64; d];
    for s in 0..inner.len() {
        inner.coords_at(s, &mut c);
        let idx = rect.index_of_coords(&c).expect("inner ball inside the window");
        if !g.is_vacant(idx) {
            continue;
        }
        let root = g.root(idx);
        let e = spans.entry(root).or_insert_with(|| (c.clone(), c.clone(), idx));
        for k in 0..d {
            e.0[k] = e.0[k].min(c[k]);
            e.1[k] = e.1[k].max(c[k]);
        }
    }
    let big: Vec<usize> = spans
        .values()
        .filter(|(lo, hi, _)| lo.iter().zip(hi).map(|(a, b)| b - a).max().unwrap_or(0) * 10 >= n)
        .map(|e| e.2)
        .collect();
    let inner_vacant: Vec<usize> = spans.values().map(|e| e.2).collect();

    g.join_in(&middle);
    let lu2 = match big.split_first() {
        None => true,
        Some((first, rest)) => {
            let r = g.root(*first);
            rest.iter().all(|&i| g.root(i) == r)
        }
    };

    g.join_in(rect);
    let mut boundary_roots = HashSet::new();
    for idx in 0..rect.len() {
        if g.is_vacant(idx) && rect.on_face(idx) {
            boundary_roots.insert(g.root(idx));
        }
    }
    let lu1 = inner_vacant.iter().any(|&i| boundary_roots.contains(&g.root(i)));
    (lu1, lu2)
}

/// Frequencies of both events at every grid intensity.
pub fn local_uniqueness_sweep(cfg: &LuConfig) -> Result<LuReport> {
    cfg.validate()?;
    let ball = Ball::new(Point::origin(cfg.d), cfg.window_radius());
    let rect = ball.rect();
    let soup = SoupConfig { alpha: 0.0, window: Window::Ball(ball), n_max: cfg.n_max, seed: cfg.seed, d: cfg.d };
    let sampler = DirectSampler::new(&soup, Strategy::Thinning)?;
    let per_rep = map_replicates(0, cfg.replicates, |rep| {
        let mut out = Vec::with_capacity(cfg.alphas.len());
        for_each_level(&sampler, &rect, rep, &cfg.alphas, &mut |_, occ| {
            out.push(lu_events(&rect, occ, cfg.n));
            Ok(())
        })?;
        Ok(out)
    })?;
    let mut rows = Vec::new();
    for (j, &alpha) in cfg.alphas.iter().enumerate() {
        let e1: Vec<bool> = per_rep.iter().map(|r| r[j].0).collect();
        let e2: Vec<bool> = per_rep.iter().map(|r| r[j].1).collect();
        let lu1 = EstimateRecord::bernoulli(format!("lu1 alpha={alpha} n={}", cfg.n), cfg.seed, 0, &e1);
        let lu2 = EstimateRecord::bernoulli(format!("lu2 alpha={alpha} n={}", cfg.n), cfg.seed, 0, &e2);
        rows.push(LuRow { alpha, lu1_ci: lu1.ci(cfg.level), lu2_ci: lu2.ci(cfg.level), lu1, lu2 });
    }
    let largest_alpha_meeting_target =
        rows.iter().filter(|r| r.lu2.mean() >= cfg.target).map(|r| r.alpha).fold(None, |m: Option<f64>, a| {
            Some(m.map_or(a, |m| m.max(a)))
        });
    Ok(LuReport { config: cfg.clone(), note: SURROGATE_NOTE.into(), rows, largest_alpha_meeting_target })
}

/// Estimates of `(lu1, lu2)` at one intensity with the default window settings.
pub fn local_uniqueness_stats(alpha: f64, n: i64, replicates: u64, seed: u64) -> Result<(EstimateRecord, EstimateRecord)> {
    let report = local_uniqueness_sweep(&LuConfig::new(vec![alpha], n, replicates, seed))?;
    let row = report.rows.into_iter().next().expect("one grid point");
    Ok((row.lu1, row.lu2))
}

pub fn write_lu_csv<W: std::io::Write>(report: &LuReport, mut w: W) -> Result<()> {
    writeln!(w, "# {}", report.note)?;
    writeln!(w, "alpha,n,window_radius,replicates,lu1,lu1_lo,lu1_hi,lu2,lu2_lo,lu2_hi")?;
    for r in &report.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.alpha,
            report.config.n,
            report.config.window_radius(),
            r.lu1.n(),
            r.lu1.mean(),
            r.lu1_ci.0,
            r.lu1_ci.1,
            r.lu2.mean(),
            r.lu2_ci.0,
            r.lu2_ci.1
        )?;
    }
    Ok(())
}
