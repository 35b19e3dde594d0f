//! Vacancy curve along an intensity grid on `B(0, n)`.

use loopsoup::lattice::{Ball, Point, PointSet};
use loopsoup::loops::MassTable;
use loopsoup::soup::{DirectSampler, SoupConfig, Strategy, Window};
use loopsoup::stats::EstimateRecord;
use loopsoup::Result;
use serde::{Deserialize, Serialize};

use crate::clusters::GridClusters;
use crate::coupling::{for_each_level, validate_grid};
use crate::parallel::map_replicates;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VacancyConfig {
    pub alphas: Vec<f64>,
    /// Radius of the window `B(0, n)`.
    pub n: i64,
    pub n_max: usize,
    pub d: usize,
    pub replicates: u64,
    pub seed: u64,
    pub strategy: Strategy,
    pub level: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VacancyRow {
    pub alpha: f64,
    /// `P[0 vacant]`.
    pub vacancy: EstimateRecord,
    /// `exp(-alpha m)` with `m` the exact mass of loops through 0 of length `<= n_max`.
    pub vacancy_oracle: f64,
    /// Mean of `|largest vacant cluster of B(0, n)| / |B(0, n)|`.
    pub largest_cluster_fraction: EstimateRecord,
    /// A vacant path in `B(0, n)` joins the faces orthogonal to `e_1`.
    pub crossing: EstimateRecord,
}

/// Whether `occupied` (on the ball's rectangle) leaves the origin vacant, the
/// largest vacant cluster fraction, and the crossing event.
pub fn vacancy_observables(ball: &Ball, occupied: &[bool]) -> (bool, f64, bool) {
    let rect = ball.rect();
    let d = rect.dim();
    let origin = rect.index_of(&Point::origin(d)).expect("origin in window");
    let vacant: Vec<bool> = occupied.iter().map(|o| !o).collect();
    let mut g = GridClusters::new(rect.clone(), vacant);
    g.join_in(&rect);
    let sizes = g.cluster_sizes_in(&rect);
    let largest = sizes.values().copied().max().unwrap_or(0);
    let mut low = std::collections::HashSet::new();
    let mut c = vec![0i64; d];
    for idx in 0..rect.len() {
        if !g.is_vacant(idx) {
            continue;
        }
        rect.coords_at(idx, &mut c);
        if c[0] == rect.lo[0] {
            low.insert(g.root(idx));
        }
    }
    let mut crossing = false;
    for idx in 0..rect.len() {
        if g.is_vacant(idx) {
            rect.coords_at(idx, &mut c);
            if c[0] == rect.hi[0] && low.contains(&g.root(idx)) {
                crossing = true;
                break;
            }
        }
    }
    (!occupied[origin], largest as f64 / rect.len() as f64, crossing)
}

pub fn vacancy_curve(cfg: &VacancyConfig) -> Result<Vec<VacancyRow>> {
    validate_grid(&cfg.alphas)?;
    let ball = Ball::new(Point::origin(cfg.d), cfg.n.max(0));
    let rect = ball.rect();
    let soup = SoupConfig { alpha: 0.0, window: Window::Ball(ball.clone()), n_max: cfg.n_max, seed: cfg.seed, d: cfg.d };
    let sampler = DirectSampler::new(&soup, cfg.strategy)?;
    let origin: PointSet = [Point::origin(cfg.d)].into_iter().collect();
    let m = MassTable::new(&origin, cfg.n_max)?.window_mass_f64();
    let per_rep = map_replicates(0, cfg.replicates, |rep| {
        let mut out = Vec::with_capacity(cfg.alphas.len());
        for_each_level(&sampler, &rect, rep, &cfg.alphas, &mut |_, occ| {
            out.push(vacancy_observables(&ball, occ));
            Ok(())
        })?;
        Ok(out)
    })?;
    let mut rows = Vec::new();
    for (j, &alpha) in cfg.alphas.iter().enumerate() {
        let v: Vec<bool> = per_rep.iter().map(|r| r[j].0).collect();
        let f: Vec<f64> = per_rep.iter().map(|r| r[j].1).collect();
        let x: Vec<bool> = per_rep.iter().map(|r| r[j].2).collect();
        rows.push(VacancyRow {
            alpha,
            vacancy: EstimateRecord::bernoulli(format!("vacancy alpha={alpha}"), cfg.seed, 0, &v),
            vacancy_oracle: (-alpha * m).exp(),
            largest_cluster_fraction: EstimateRecord::from_values(format!("largest cluster alpha={alpha}"), cfg.seed, 0, &f),
            crossing: EstimateRecord::bernoulli(format!("crossing alpha={alpha}"), cfg.seed, 0, &x),
        });
    }
    Ok(rows)
}

pub fn write_vacancy_csv<W: std::io::Write>(rows: &[VacancyRow], level: f64, mut w: W) -> Result<()> {
    writeln!(
        w,
        "alpha,replicates,vacancy,vacancy_lo,vacancy_hi,vacancy_oracle,largest_cluster_fraction,largest_lo,largest_hi,crossing,crossing_lo,crossing_hi"
    )?;
    for r in rows {
        let (vl, vh) = r.vacancy.ci(level);
        let (ll, lh) = r.largest_cluster_fraction.ci(level);
        let (cl, ch) = r.crossing.ci(level);
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.alpha,
            r.vacancy.n(),
            r.vacancy.mean(),
            vl,
            vh,
            r.vacancy_oracle,
            r.largest_cluster_fraction.mean(),
            ll,
            lh,
            r.crossing.mean(),
            cl,
            ch
        )?;
    }
    Ok(())
}
