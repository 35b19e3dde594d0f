use loopsoup::lattice::*;
use loopsoup::Error;
use proptest::prelude::*;

fn p(c: &[i64]) -> Point {
    Point::new(c)
}

fn naive_int(set: &PointSet) -> PointSet {
    let mut out = PointSet::new();
    for y in set {
        for k in 0..y.dim() {
            for s in [-1, 1] {
                if !set.contains(&y.shifted(k, s)) {
                    out.insert(y.clone());
                }
            }
        }
    }
    out
}

fn naive_ext(set: &PointSet) -> PointSet {
    let mut out = PointSet::new();
    for y in set {
        for k in 0..y.dim() {
            for s in [-1, 1] {
                let z = y.shifted(k, s);
                if !set.contains(&z) {
                    out.insert(z);
                }
            }
        }
    }
    out
}

#[test]
fn boundaries_of_boxes() {
    assert!(interior_boundary(&PointSet::new()).is_empty());
    assert!(exterior_boundary(&PointSet::new()).is_empty());
    let single: PointSet = [p(&[0, 0, 0])].into_iter().collect();
    assert_eq!(interior_boundary(&single), single);
    assert_eq!(exterior_boundary(&single).len(), 6);
    let b2 = Ball::new(Point::origin(3), 2).points();
    assert_eq!(interior_boundary(&b2).len(), 98);
    // B(0,1): the 5^3 - 3^3 shell minus its 8 corners and 36 edge points,
    // i.e. only the 6 * 9 face points are L1-adjacent to the cube.
    let b1 = Ball::new(Point::origin(3), 1).points();
    let ext = exterior_boundary(&b1);
    assert_eq!(ext, naive_ext(&b1));
    assert_eq!(ext.len(), 54);
}

#[test]
fn star_neighbor_examples() {
    let n = star_neighbors(&Point::origin(3), RenormLattice { spacing: 9 }).unwrap();
    assert_eq!(n.len(), 26);
    let n = star_neighbors(&p(&[5, 0]), RenormLattice { spacing: 5 }).unwrap();
    assert_eq!(n.len(), 8);
    assert!(n.iter().all(|q| q.sup_dist(&p(&[5, 0])) == 5));
    assert!(matches!(star_neighbors(&p(&[1, 0, 0]), RenormLattice { spacing: 9 }), Err(Error::Domain(_))));
}

#[test]
fn partition_cell_examples() {
    assert_eq!(box_partition_cell(&Point::origin(3), 9).unwrap(), Point::origin(3));
    assert_eq!(box_partition_cell(&p(&[5, 0, 0]), 9).unwrap(), p(&[9, 0, 0]));
    assert_eq!(box_partition_cell(&p(&[4, -4, 4]), 9).unwrap(), Point::origin(3));
    assert!(matches!(box_partition_cell(&Point::origin(3), 8), Err(Error::Config(_))));
}

#[test]
fn cells_partition_a_test_box() {
    for l0 in [3, 5, 9] {
        let r = (l0 - 1) / 2;
        let test = Ball::new(Point::origin(3), 3 * l0);
        for x in test.rect().iter() {
            let c = box_partition_cell(&x, l0).unwrap();
            assert!(RenormLattice { spacing: l0 }.contains(&c));
            assert!(Ball::new(c.clone(), r).contains(&x));
            // no other cell contains x
            let others = star_neighbors(&c, RenormLattice { spacing: l0 }).unwrap();
            assert!(others.iter().all(|o| !Ball::new(o.clone(), r).contains(&x)));
        }
    }
}

fn small_set(d: usize) -> impl Strategy<Value = PointSet> {
    prop::collection::vec(prop::collection::vec(-3i64..=3, d), 0..25)
        .prop_map(|v| v.into_iter().map(|c| Point::new(&c)).collect())
}

proptest! {
    #[test]
    fn boundaries_match_naive(set in small_set(3)) {
        prop_assert_eq!(interior_boundary(&set), naive_int(&set));
        prop_assert_eq!(exterior_boundary(&set), naive_ext(&set));
    }

    #[test]
    fn boundary_duality(set in small_set(2)) {
        // inside a box W reaching two steps beyond the set, the outer
        // boundary of the set is the inner boundary of its complement in W,
        // minus the faces of W
        let w = Ball::new(Point::origin(2), 6).points();
        let complement: PointSet = w.difference(&set).cloned().collect();
        let faces = interior_boundary(&w);
        let dual: PointSet = interior_boundary(&complement).difference(&faces).cloned().collect();
        prop_assert_eq!(exterior_boundary(&set), dual);
    }

    #[test]
    fn star_adjacency_is_symmetric(c in prop::collection::vec(-4i64..=4, 3), spacing in 1i64..12) {
        let lat = RenormLattice { spacing };
        let x = Point::new(&c).scale(spacing);
        let nb = star_neighbors(&x, lat).unwrap();
        prop_assert_eq!(nb.len(), 26);
        for y in &nb {
            prop_assert!(star_neighbors(y, lat).unwrap().contains(&x));
        }
    }

    #[test]
    fn rect_indices_round_trip(lo in prop::collection::vec(-5i64..5, 3), ext in prop::collection::vec(0i64..4, 3), pick in 0usize..1000) {
        let hi: Vec<i64> = lo.iter().zip(&ext).map(|(a, e)| a + e).collect();
        let r = Rect::new(lo, hi);
        let i = pick % r.len();
        let q = r.point_at(i);
        prop_assert_eq!(r.index_of(&q), Some(i));
        prop_assert!(r.contains(&q));
    }

    #[test]
    fn norms_are_metrics(a in prop::collection::vec(-20i64..20, 3), b in prop::collection::vec(-20i64..20, 3), c in prop::collection::vec(-20i64..20, 3)) {
        let (a, b, c) = (Point::new(&a), Point::new(&b), Point::new(&c));
        prop_assert_eq!(a.sup_dist(&b), b.sup_dist(&a));
        prop_assert!(a.sup_dist(&c) <= a.sup_dist(&b) + b.sup_dist(&c));
        prop_assert!(a.l1_dist(&c) <= a.l1_dist(&b) + b.l1_dist(&c));
        prop_assert!(a.sup_dist(&b) <= a.l1_dist(&b));
    }
}
