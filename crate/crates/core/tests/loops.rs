use std::collections::BTreeSet;

use loopsoup::lattice::{Ball, Point, PointSet};
use loopsoup::loops::*;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use proptest::prelude::*;

const STEPS: [[i64; 3]; 6] = [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]];

fn q(a: i64, b: i64) -> BigRational {
    BigRational::new(BigInt::from(a), BigInt::from(b))
}

/// Closed walks of length `n` from `root` that visit the origin, by plain
/// enumeration of all `6^n` step sequences.
fn brute_visiting_closed_walks(root: [i64; 3], n: usize) -> u128 {
    let mut count = 0u128;
    for code in 0..6usize.pow(n as u32) {
        let mut pos = root;
        let mut c = code;
        let mut seen = pos == [0, 0, 0];
        for _ in 0..n {
            let s = STEPS[c % 6];
            c /= 6;
            for k in 0..3 {
                pos[k] += s[k];
            }
            seen |= pos == [0, 0, 0];
        }
        if pos == root && seen {
            count += 1;
        }
    }
    count
}

fn enumeration_total(max_len: usize) -> BigRational {
    enumerate_loops_through(&Point::origin(3), max_len)
        .unwrap()
        .iter()
        .fold(BigRational::zero(), |a, (_, m)| a + m)
}

#[test]
fn enumeration_matches_bridge_dp_to_length_eight() {
    let origin: PointSet = [Point::origin(3)].into_iter().collect();
    let table = MassTable::new(&origin, 8).unwrap();
    assert_eq!(enumeration_total(8), table.window_mass());
}

#[test]
fn enumeration_matches_brute_force_to_length_six() {
    let mut brute = BigRational::zero();
    for n in (2..=6).step_by(2) {
        for root in Ball::new(Point::origin(3), (n / 2) as i64).rect().iter() {
            let c = root.coords();
            let count = brute_visiting_closed_walks([c[0], c[1], c[2]], n);
            brute += count_to_mass(count, n, 3);
        }
    }
    assert_eq!(enumeration_total(6), brute);
}

#[test]
fn odd_lengths_add_nothing() {
    assert_eq!(enumerate_loops_through(&Point::origin(3), 3).unwrap(), enumerate_loops_through(&Point::origin(3), 2).unwrap());
    let origin: PointSet = [Point::origin(3)].into_iter().collect();
    let table = MassTable::new(&origin, 7).unwrap();
    for n in [3, 5, 7] {
        assert_eq!(table.total_count(n), 0);
        assert!(table.window_mass_at(n).is_zero());
    }
}

#[test]
fn enumerated_loops_are_distinct_and_consistent() {
    let loops = enumerate_loops_through(&Point::origin(3), 6).unwrap();
    let distinct: BTreeSet<_> = loops.iter().map(|(l, _)| l.clone()).collect();
    assert_eq!(distinct.len(), loops.len());
    for (l, m) in &loops {
        assert!(l.rep().visits(&Point::origin(3)) > 0);
        let via_based = l.rotations().iter().fold(BigRational::zero(), |a, r| a + based_loop_mass(r));
        assert_eq!(&via_based, m);
        assert_eq!(&loop_mass(l), m);
    }
}

#[test]
fn two_step_masses() {
    let origin: PointSet = [Point::origin(3)].into_iter().collect();
    let table = MassTable::new(&origin, 2).unwrap();
    let r = table.root_index(&Point::origin(3)).unwrap();
    // 6 returns out of 36 two-step paths
    assert_eq!(table.free().returns(2), 6);
    assert_eq!(table.total_mass(2), q(1, 12));
    assert_eq!(table.visit_mass(r, 2), q(1, 12));
    assert_eq!(enumeration_total(2), q(1, 6));
}

#[test]
fn mass_tables_are_translation_invariant() {
    let w: PointSet = Ball::new(Point::origin(3), 1).points();
    let shift = Point::new(&[3, -2, 5]);
    let ws: PointSet = w.iter().map(|p| p.add(&shift)).collect();
    let a = MassTable::new(&w, 6).unwrap();
    let b = MassTable::new(&ws, 6).unwrap();
    assert_eq!(a.window_mass(), b.window_mass());
    for (i, root) in a.roots().iter().enumerate() {
        let j = b.root_index(&root.add(&shift)).unwrap();
        for n in 2..=6 {
            assert_eq!(a.visit_count(i, n), b.visit_count(j, n));
            assert_eq!(a.avoid_count(i, n), b.avoid_count(j, n));
        }
    }
}

#[test]
fn visit_and_avoid_split_the_returns() {
    let w: PointSet = Ball::new(Point::origin(3), 1).points();
    let t = MassTable::new(&w, 8).unwrap();
    for i in 0..t.roots().len() {
        for n in 2..=8 {
            assert_eq!(t.visit_count(i, n) + t.avoid_count(i, n), t.free().returns(n));
        }
    }
}

#[test]
fn enumeration_guard() {
    assert!(matches!(enumerate_loops_through(&Point::origin(3), 13), Err(loopsoup::Error::Resource(_))));
}

fn closed_walk() -> impl Strategy<Value = BasedLoop> {
    (prop::collection::vec(0usize..6, 1..6), 0usize..12).prop_map(|(steps, rot)| {
        let mut verts = vec![[0i64; 3]];
        let mut pos = [0i64; 3];
        let mut path: Vec<usize> = steps.clone();
        path.extend(steps.iter().rev().map(|s| s ^ 1));
        for s in &path[..path.len() - 1] {
            for k in 0..3 {
                pos[k] += STEPS[*s][k];
            }
            verts.push(pos);
        }
        let l = BasedLoop::new(verts.iter().map(|c| Point::new(c)).collect()).unwrap();
        l.rotate(rot % l.len())
    })
}

proptest! {
    #[test]
    fn canonical_form_is_rotation_invariant(l in closed_walk()) {
        let c = canonicalize(&l);
        prop_assert_eq!(canonicalize(c.rep()), c.clone());
        for k in 0..l.len() {
            prop_assert_eq!(canonicalize(&l.rotate(k)), c.clone());
        }
        let distinct: BTreeSet<BasedLoop> = (0..l.len()).map(|k| l.rotate(k)).collect();
        prop_assert_eq!(distinct.len(), c.rotations().len());
        prop_assert_eq!(distinct.len(), l.period());
    }

    #[test]
    fn loop_mass_is_pushforward(l in closed_walk()) {
        let c = canonicalize(&l);
        let sum = c.rotations().iter().fold(BigRational::zero(), |a, r| a + based_loop_mass(r));
        prop_assert_eq!(loop_mass(&c), sum);
    }
}
