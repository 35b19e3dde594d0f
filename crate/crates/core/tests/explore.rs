use loopsoup::explore::*;
use loopsoup::lattice::{Ball, Point, PointSet, Rect};
use loopsoup::renorm::{field_lookup, Frame};
use loopsoup::soup::{DirectSampler, LocalTimeField, SoupConfig, Strategy, Window};

fn boundary_entries(center: &Point, radius: i64) -> Vec<Point> {
    let frame = Frame::new(center.clone(), radius).unwrap();
    Rect::around(center, radius).iter().filter(|p| p.sup_dist(center) == radius && !frame.contains(p)).collect()
}

#[test]
fn surgery_geometry_for_every_entry() {
    for radius in [4, 5, 6] {
        let c = Point::origin(3);
        let entries = boundary_entries(&c, radius);
        assert!(!entries.is_empty());
        for e in &entries {
            let g = SurgeryGeometry::new(&c, e, radius).unwrap();
            assert!(g.tunnel_hits_frame(), "R={radius} entry {e}");
            assert!(g.interior_connected(), "R={radius} entry {e}");
            assert!(g.boundary_neighbor_failures().is_empty(), "R={radius} entry {e}");
            assert!(g.tunnel.windows(2).all(|w| w[0].is_adjacent(&w[1])));
            assert_eq!(g.exit.sup_dist(&c), radius + 1);
            assert!(g.exit.is_adjacent(e));
        }
    }
}

#[test]
fn every_single_bridge_is_routed_at_radius_four() {
    let c = Point::origin(3);
    for e in boundary_entries(&c, 4) {
        let mut g = SurgeryGeometry::new(&c, &e, 4).unwrap();
        let starts = g.admissible_starts();
        let targets = g.admissible_targets();
        for s in &starts {
            for t in &targets {
                let plan = g.plan(&[(s.clone(), t.clone())]).unwrap();
                let v = plan.violations();
                assert!(v.is_empty(), "entry {e} start {s} target {t}: {v:?}");
            }
        }
    }
}

#[test]
fn multi_bridge_plans_respect_the_visit_budget() {
    let c = Point::origin(3);
    let e = Point::new(&[0, 0, -5]);
    let mut g = SurgeryGeometry::new(&c, &e, 5).unwrap();
    let starts = g.admissible_starts();
    let targets = g.admissible_targets();
    // R^{d-1} = 25 allows twelve bridges
    let endpoints: Vec<(Point, Point)> =
        (0..12).map(|i| (starts[(i * 7) % starts.len()].clone(), targets[(i * 11) % targets.len()].clone())).collect();
    let plan = g.plan(&endpoints).unwrap();
    assert!(plan.violations().is_empty(), "{:?}", plan.violations());
    assert!(plan.boundary_visits <= 25);
    let too_many: Vec<(Point, Point)> = (0..13).map(|i| endpoints[i % 12].clone()).collect();
    assert!(g.plan(&too_many).is_err());
    // the entry itself and the exit are excluded
    assert!(g.prescribed_path(&e, &targets[0]).is_err());
    assert!(g.prescribed_path(&starts[0], &g.exit.clone()).is_err());
}

#[test]
fn tampered_plans_are_caught() {
    let c = Point::origin(3);
    let mut g = SurgeryGeometry::new(&c, &Point::new(&[5, 0, 1]), 5).unwrap();
    let s = g.admissible_starts()[3].clone();
    let t = g.admissible_targets()[40].clone();
    let plan = g.plan(&[(s, t)]).unwrap();
    assert!(plan.violations().is_empty());
    let mut bad = plan.clone();
    let k = bad.paths[0].len() / 2;
    bad.paths[0][k] = bad.tunnel[2].clone();
    assert!(!bad.violations().is_empty());
    let mut bad = plan.clone();
    bad.paths[0].remove(1);
    assert!(!bad.violations().is_empty());
}

fn soup_field(alpha: f64, radius: i64, seed: u64) -> (DirectSampler, LocalTimeField) {
    let cfg = SoupConfig { alpha, window: Window::Ball(Ball::new(Point::origin(3), radius)), n_max: 8, seed, d: 3 };
    let s = DirectSampler::new(&cfg, Strategy::Thinning).unwrap();
    let mut field = LocalTimeField::new(&cfg.window);
    s.sample_into(0, 0, &mut |flat| field.add_loop(flat));
    (s, field)
}

/// Vacant cluster of `start` within `region`, by plain breadth-first search.
fn bfs_cluster(vacant: &dyn Fn(&Point) -> Option<bool>, start: &Point, region: &PointSet) -> PointSet {
    let mut seen = PointSet::new();
    if vacant(start) != Some(true) {
        return seen;
    }
    let mut queue = std::collections::VecDeque::from([start.clone()]);
    seen.insert(start.clone());
    while let Some(p) = queue.pop_front() {
        for q in p.neighbors() {
            if region.contains(&q) && !seen.contains(&q) && vacant(&q) == Some(true) {
                seen.insert(q.clone());
                queue.push_back(q);
            }
        }
    }
    seen
}

#[test]
fn exploration_replays_and_matches_a_direct_search() {
    let radius = 2;
    let n = 90;
    let (_, field) = soup_field(0.05, 5 * 4 + radius, 7);
    let lookup = field_lookup(&field);
    let vacant = |p: &Point| lookup(p).map(|v| v == 0);
    let a = explore_run(&vacant, &Point::origin(3), n, radius).unwrap();
    let b = explore_run(&vacant, &Point::origin(3), n, radius).unwrap();
    assert_eq!(a, b);
    let cells: Vec<Point> = a.steps.iter().map(|s| s.cell.clone()).collect();
    let distinct: PointSet = cells.iter().cloned().collect();
    assert_eq!(distinct.len(), cells.len());
    let side = (2 * radius + 1) as usize;
    for (k, s) in a.steps.iter().enumerate() {
        assert_eq!(s.region_size, (k + 1) * side.pow(3));
        if let Some(entry) = &s.entry {
            // the entry lies in an earlier box and touches the new one
            assert!(cells[..k].iter().any(|c| c.sup_dist(entry) <= radius));
            assert!(entry.neighbors().any(|q| q.sup_dist(&s.cell) <= radius));
        }
    }
    let region: PointSet = cells.iter().flat_map(|c| Rect::around(c, radius).iter().collect::<Vec<_>>()).collect();
    let cluster = bfs_cluster(&vacant, &Point::origin(3), &region);
    assert_eq!(a.cluster_size, cluster.len());
    match a.stop {
        StopReason::ReachedSphere => assert_eq!(cells.last().unwrap().sup_norm(), 5 * (n / 30)),
        StopReason::Disconnected => assert!(cluster.iter().all(|z| z.neighbors().all(|q| region.contains(&q)))),
    }
}

#[test]
fn exploration_domain_checks() {
    let all = |_: &Point| Some(true);
    assert!(explore_run(&all, &Point::origin(3), 30, 0).is_err());
    assert!(explore_run(&all, &Point::new(&[200, 0, 0]), 30, 2).is_err());
    let partial = |p: &Point| (p.sup_norm() <= 3).then_some(true);
    assert!(explore_run(&partial, &Point::origin(3), 90, 2).is_err());
}

#[test]
fn connect_events_are_monotone_along_the_coupled_grid() {
    let radius = 4;
    let cfg = SoupConfig { alpha: 1.0, window: Window::Ball(Ball::new(Point::origin(3), radius + 1)), n_max: 8, seed: 12, d: 3 };
    let s = DirectSampler::new(&cfg, Strategy::Thinning).unwrap();
    let exit = Point::new(&[-(radius + 1), 0, 0]);
    let alphas = [0.0, 0.02, 0.05, 0.1, 0.3];
    let stats = local_connect_sweep(&s, &Point::origin(3), &exit, &alphas, 300).unwrap();
    assert_eq!(stats[0].joint.successes, 300);
    assert!(stats.windows(2).all(|w| w[1].joint.successes <= w[0].joint.successes));
    assert!(stats.windows(2).all(|w| w[1].base.successes <= w[0].base.successes));
    assert!(stats.iter().all(|st| st.joint.successes <= st.base.successes));
    assert!(local_connect_sweep(&s, &Point::origin(3), &exit, &[0.3, 0.1], 10).is_err());
}

#[test]
fn connect_outcome_examples() {
    let c = Point::origin(3);
    let exit = Point::new(&[5, 0, 0]);
    let empty = |_: &Point| Some(0u32);
    let o = connect_outcome(&c, 4, &exit, 16, &empty).unwrap();
    assert!(o.joint());
    // a wall at x = 3 cuts the exit off from the frame
    let wall = |p: &Point| Some(u32::from(p.coords()[0] == 3 || (p.coords()[0] == 4 && p.coords()[1].abs().max(p.coords()[2].abs()) >= 2)));
    let o = connect_outcome(&c, 4, &exit, 1000, &wall).unwrap();
    assert!(o.exit_vacant && !o.connected && !o.good);
    let blocked = |p: &Point| Some(u32::from(*p == Point::new(&[5, 0, 0])));
    assert!(!connect_outcome(&c, 4, &exit, 16, &blocked).unwrap().exit_vacant);
}
