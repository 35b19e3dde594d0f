use std::collections::HashMap;

use loopsoup::lattice::{Point, PointSet, Rect};
use loopsoup::renorm::*;
use loopsoup::rng::stream;
use loopsoup::Error;
use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn frames_are_connected_for_moderate_radii() {
    for r in 3..=8 {
        let c = frame_connectivity(3, r).unwrap();
        assert!(c.holds(), "R = {r}: {c:?}");
        // points with at least two coordinates in the outer band
        let naive = Rect::around(&Point::origin(3), r)
            .iter()
            .filter(|p| p.coords().iter().filter(|v| v.abs() >= r - FRAME_BAND).count() >= 2)
            .count();
        assert_eq!(c.frame_size, naive);
    }
}

#[test]
fn shell_sizes_by_counting() {
    for d in 1..=3 {
        for r in 0..=5i64 {
            let naive = Rect::around(&Point::origin(d), r).iter().filter(|p| p.sup_norm() == r).count();
            assert_eq!(shell_size(d, r as u64), BigUint::from(naive));
        }
    }
}

/// Transitive closure of `*`-adjacency among bad coarse points.
fn warshall_component(coarse: &Rect, bad: &[bool], from: usize) -> Vec<usize> {
    let n = coarse.len();
    let pts: Vec<Point> = coarse.iter().collect();
    let mut reach = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            reach[i * n + j] = bad[i] && bad[j] && (i == j || pts[i].sup_dist(&pts[j]) == 1);
        }
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i * n + k] {
                for j in 0..n {
                    if reach[k * n + j] {
                        reach[i * n + j] = true;
                    }
                }
            }
        }
    }
    (0..n).filter(|&j| reach[from * n + j]).collect()
}

#[test]
fn star_components_match_the_transitive_closure() {
    let mut rng = stream(21, &[0]);
    for (d, side, trials) in [(2usize, 8i64, 1000), (3, 4, 200)] {
        let coarse = Rect::new(vec![0; d], vec![side - 1; d]);
        let radius = 2;
        let spacing = 2 * radius + 1;
        for _ in 0..trials {
            let p: f64 = rng.gen_range(0.2..0.7);
            let bad: Vec<bool> = (0..coarse.len()).map(|_| rng.gen_bool(p)).collect();
            let points: PointSet = coarse.iter().zip(&bad).filter(|(_, b)| **b).map(|(k, _)| k.scale(spacing)).collect();
            let field = GoodBadField::from_bad(coarse.clone(), radius, &points).unwrap();
            let from = rng.gen_range(0..coarse.len());
            let start = coarse.point_at(from);
            let comp = bad_star_component(&field, &start.scale(spacing)).unwrap();
            if !bad[from] {
                assert!(comp.points.is_empty());
                continue;
            }
            let oracle = warshall_component(&coarse, &bad, from);
            let mut expected: Vec<Point> = oracle.iter().map(|&i| coarse.point_at(i).scale(spacing)).collect();
            expected.sort();
            assert_eq!(comp.points, expected);
            let reach = oracle.iter().map(|&i| coarse.point_at(i).sup_dist(&start)).max().unwrap();
            assert_eq!(comp.reach, reach);
        }
    }
}

#[test]
fn off_lattice_points_are_rejected() {
    let coarse = Rect::new(vec![0; 3], vec![3; 3]);
    let f = GoodBadField::from_bad(coarse, 2, &PointSet::new()).unwrap();
    assert!(matches!(bad_star_component(&f, &Point::new(&[1, 0, 0])), Err(Error::Domain(_))));
    assert!(matches!(bad_star_component(&f, &Point::new(&[-5, 0, 0])), Err(Error::Domain(_))));
}

#[test]
fn exhaustive_enumeration_meets_the_closed_form() {
    let r = embeddings_count_and_separation(1, 6, 3, 1, EmbeddingMode::Exhaustive { guard: 10_000_000 }).unwrap();
    assert_eq!(r.count, "2994628");
    assert_eq!(r.enumerated, Some(2_994_628));
    assert!(r.within_bound);
    assert_eq!(r.separation_failures, 0);
    for (n, l, d) in [(1usize, 6u64, 2usize), (2, 6, 1), (3, 7, 1)] {
        let r = embeddings_count_and_separation(n, l, d, 2, EmbeddingMode::Exhaustive { guard: 10_000_000 }).unwrap();
        assert_eq!(r.enumerated.map(BigUint::from), Some(embedding_count(n, l, d)), "n={n} l={l} d={d}");
        assert!(r.within_bound);
        assert_eq!(r.separation_failures, 0, "n={n} l={l} d={d}");
    }
    assert!(matches!(
        embeddings_count_and_separation(2, 6, 3, 1, EmbeddingMode::Exhaustive { guard: 10_000_000 }),
        Err(Error::Resource(_))
    ));
}

#[test]
fn sampled_embeddings_are_valid_and_separated() {
    let r = embeddings_count_and_separation(2, 10, 3, 1, EmbeddingMode::Sampled { samples: 20_000, seed: 4 }).unwrap();
    assert_eq!(r.invalid, 0);
    assert_eq!(r.separation_failures, 0);
    assert!(r.within_bound);
    assert!(r.max_separation_counts.iter().enumerate().all(|(k, &c)| c <= 1 << k));
    let mut rng = stream(4, &[9]);
    let t = sample_embedding(3, 8, 2, 3, &mut rng);
    assert!(t.is_valid());
    let mut broken = t.clone();
    broken.images[5] = broken.images[5].shifted(0, 1);
    assert!(!broken.is_valid());
}

#[test]
fn scale_sequences() {
    let s = RenormScales::new(1, 4, 20, 2.0, 4).unwrap();
    assert_eq!(s.exponents, vec![0, 1, 4, 9, 16]);
    assert_eq!(s.small_i64(2).unwrap(), 4 * 4i64.pow(4));
    assert_eq!(s.sep_i64(3).unwrap(), 20 << 9);
    // L_k = prod_{i < k} l_i
    assert_eq!(s.big_i64(3).unwrap(), 4 * 16 * 1024);
    assert_eq!(s.strictly_increasing(), [true, true, true]);
    assert_eq!(floor_power(3, 1.5).unwrap(), 5);
    assert!(RenormScales::new(1, 4, 20, 1.0, 4).is_err());
}

fn small_scales() -> RenormScales {
    // l_0 = 3, l_1 = 12, L = 1, 3, 36, separations r_0 L_0 = 1, r_1 L_1 = 6
    RenormScales::new(1, 3, 1, 2.0, 2).unwrap()
}

/// Direct recursion on the definition without memoisation.
fn naive_cascade(seeds: &dyn Fn(&Point) -> bool, s: &RenormScales, x: &Point, k: usize) -> bool {
    if k == 0 {
        return seeds(x);
    }
    let fine = s.big_i64(k - 1).unwrap();
    let count = s.small_i64(k - 1).unwrap();
    let sep = s.sep_i64(k - 1).unwrap() * fine;
    let hits: Vec<Point> = Rect::new(vec![0; x.dim()], vec![count - 1; x.dim()])
        .iter()
        .map(|c| x.add(&c.scale(fine)))
        .filter(|y| naive_cascade(seeds, s, y, k - 1))
        .collect();
    hits.iter().any(|a| hits.iter().any(|b| a.sup_dist(b) > sep))
}

#[test]
fn hand_built_seed_fields() {
    let s = small_scales();
    let o = Point::origin(2);
    let run = |set: &[[i64; 2]], k: usize| {
        let pts: PointSet = set.iter().map(|c| Point::new(c)).collect();
        let mut seed = |p: &Point| Some(pts.contains(p));
        cascading_eval(&mut seed, &s, &o, k).unwrap()
    };
    assert!(!run(&[], 1));
    assert!(!run(&[[0, 0]], 1));
    // adjacent seeds are within the level-1 separation
    assert!(!run(&[[0, 0], [1, 1]], 1));
    assert!(run(&[[0, 0], [2, 2]], 1));
    // level 2 needs two level-1 events more than 6 apart
    assert!(!run(&[[0, 0], [2, 2]], 2));
    assert!(run(&[[0, 0], [2, 2], [21, 0], [23, 2]], 2));
    assert!(!run(&[[0, 0], [2, 2], [6, 0], [8, 2]], 2));
    let mut partial = |p: &Point| (p.sup_norm() < 4).then_some(true);
    assert!(matches!(cascading_eval(&mut partial, &s, &o, 2), Err(Error::Domain(_))));
    let mut all = |_: &Point| Some(true);
    assert!(matches!(cascading_eval(&mut all, &s, &Point::new(&[3, 0]), 2), Err(Error::Domain(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cascade_matches_the_definition_and_is_monotone(bits in prop::collection::vec(prop::bool::weighted(0.1), 1296), extra in 0usize..1296) {
        let s = small_scales();
        let index = |p: &Point| (p.coords()[0] * 36 + p.coords()[1]) as usize;
        let set: HashMap<usize, bool> = bits.iter().copied().enumerate().collect();
        let seeds = |p: &Point| set[&index(p)];
        let mut closure = |p: &Point| Some(set[&index(p)]);
        let value = cascading_eval(&mut closure, &s, &Point::origin(2), 2).unwrap();
        prop_assert_eq!(value, naive_cascade(&seeds, &s, &Point::origin(2), 2));
        let mut more = set.clone();
        more.insert(extra, true);
        let mut grown = |p: &Point| Some(more[&index(p)]);
        let bigger = cascading_eval(&mut grown, &s, &Point::origin(2), 2).unwrap();
        prop_assert!(!value || bigger);
    }
}

fn ledger_params() -> LedgerParams {
    LedgerParams { u: 0.4, u_prime: 0.5, beta: 0.5, gamma: 1.0, zeta: 0.9, theta: 2.0, r0: 20, l0: 4, big_l0: 1, d: 3, horizon: 40 }
}

#[test]
fn ledger_separation_sum() {
    let l = induction_ledger_run(&ledger_params()).unwrap();
    // sum_k 1 / (20 * 2^{k^2})
    let oracle: f64 = (0..=40u32).map(|k| 1.0 / (20.0 * 2f64.powi((k * k) as i32))).sum();
    assert!((l.sep_sum_partial - oracle).abs() < 1e-15);
    let exact = l.sep_sum_exact_upper.as_deref().unwrap();
    let upper = exact.parse::<BigRational>().unwrap().to_f64().unwrap();
    assert!(upper >= oracle && upper - oracle < 1e-12);
    assert_eq!(l.verdict, Verdict::Pass);
    assert!(l.u_seq_stays_beyond_u);
    assert_eq!(l.u_seq.len(), 42);
    // later terms fall below one ulp, so the sequence is only weakly decreasing
    assert!(l.u_seq.windows(2).all(|w| w[1] <= w[0]));
    assert!(l.u_seq[1] < l.u_seq[0]);
}

#[test]
fn ledger_delta_and_margins() {
    let l = induction_ledger_run(&ledger_params()).unwrap();
    assert!(l.delta.iter().all(|v| *v >= 1.0));
    assert!(l.delta.windows(2).all(|w| w[0] >= w[1]));
    // Delta_0 = 1 + sum_i (1 + 6 log2(4 * 4^{i^2})) / 2^{i+1}
    let oracle: f64 = 1.0 + (0..200u32).map(|i| (1.0 + 6.0 * (2.0 + 2.0 * (i * i) as f64)) / 2f64.powi(i as i32 + 1)).sum::<f64>();
    assert!((l.delta[0] - oracle).abs() < 1e-9 + l.delta_remainder_bound, "{} vs {oracle}", l.delta[0]);
    assert!(l.delta_remainder_bound < 1e-30);
    assert_eq!(l.rk_log10_margin.len(), 41);
    assert_eq!(l.rk_feasible, Verdict::Pass);
}

#[test]
fn ledger_failures_and_rejections() {
    let narrow = LedgerParams { u_prime: 0.41, ..ledger_params() };
    let l = induction_ledger_run(&narrow).unwrap();
    assert_eq!(l.condr0, Verdict::Fail);
    assert_eq!(l.verdict, Verdict::Fail);
    assert!(!l.u_seq_stays_beyond_u);
    let decreasing = LedgerParams { u: 0.5, u_prime: 0.4, ..ledger_params() };
    let l = induction_ledger_run(&decreasing).unwrap();
    assert!(!l.increasing && l.u_seq_stays_beyond_u);
    for bad in [
        LedgerParams { zeta: 0.3, ..ledger_params() },
        LedgerParams { theta: 1.0, ..ledger_params() },
        LedgerParams { u_prime: 0.4, ..ledger_params() },
        LedgerParams { beta: 0.0, ..ledger_params() },
        LedgerParams { r0: 0, ..ledger_params() },
        LedgerParams { horizon: 0, ..ledger_params() },
    ] {
        assert!(matches!(induction_ledger_run(&bad), Err(Error::Config(_))), "{bad:?}");
    }
    let json: LedgerParams = serde_json::from_str(r#"{"u":0.4,"u_prime":0.5,"beta":0.5,"gamma":1,"zeta":0.9,"theta":2,"r0":20,"l0":4}"#).unwrap();
    assert_eq!(json, ledger_params());
}
