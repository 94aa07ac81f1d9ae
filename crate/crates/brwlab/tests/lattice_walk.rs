//! Lattice labels, occupancy and first-hit utilities.

use brwlab::lattice::{hitting_time_radius, intersect_first, label_walk, HitTime, LatticePoint, Srw};
use brwlab::mc::replicate;
use brwlab::offspring::OffspringDistribution;
use brwlab::rng::stream;
use brwlab::tree::{sample_slice, Horizon};
use proptest::prelude::*;
use rustc_hash::FxHashSet;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn labels_step_along_edges_and_occupancy_inverts_them(
        dim in 1usize..=8,
        left in 0u64..200,
        right in 0u64..200,
        seed in any::<u64>(),
    ) {
        let d = OffspringDistribution::geometric();
        let mut rng = stream(seed);
        let s = sample_slice(&d, &mut rng, Horizon::Window { left, right }).unwrap();
        let r = label_walk(&s, dim, &mut rng).unwrap();
        prop_assert_eq!(r.label(&s, 0), Some(LatticePoint::ORIGIN));
        for (pos, v) in s.vertices().iter().enumerate() {
            if let Some(p) = v.parent {
                let step = r.labels[pos].sub(r.labels[p as usize]);
                prop_assert_eq!(step.l1(), 1);
                prop_assert!(step.coords(8)[dim..].iter().all(|&c| c == 0));
            }
        }
        let (lo, hi) = s.window();
        let mut seen = 0usize;
        for (x, zs) in &r.occupancy {
            prop_assert!(zs.windows(2).all(|w| w[0] < w[1]));
            for &z in zs {
                prop_assert_eq!(r.label(&s, z), Some(*x));
            }
            seen += zs.len();
        }
        prop_assert_eq!(seen as i64, hi - lo + 1);
        for z in lo..=hi {
            let x = r.label(&s, z).unwrap();
            prop_assert!(r.visits(x).contains(&z));
        }
    }

    #[test]
    fn first_hit_agrees_with_brute_force(
        a in proptest::collection::vec(proptest::collection::vec(-3i32..=3, 3), 0..40),
        b in proptest::collection::vec(proptest::collection::vec(-3i32..=3, 3), 0..40),
    ) {
        let set: FxHashSet<LatticePoint> = a.iter().map(|p| LatticePoint::from_coords(p).unwrap()).collect();
        let pts: Vec<LatticePoint> = b.iter().map(|p| LatticePoint::from_coords(p).unwrap()).collect();
        let brute = pts.iter().position(|x| set.contains(x));
        let fast = intersect_first(&set, pts.iter().copied());
        prop_assert_eq!(fast.map(|(i, _)| i), brute);
        if let Some((i, x)) = fast {
            prop_assert_eq!(x, pts[i]);
        }
    }

    #[test]
    fn packing_roundtrips(c in proptest::collection::vec(-30000i32..30000, 8)) {
        let x = LatticePoint::from_coords(&c).unwrap();
        prop_assert_eq!(x.coords(8), c.clone());
        let n2: i64 = c.iter().map(|&v| v as i64 * v as i64).sum();
        prop_assert_eq!(x.norm_sq(), n2);
    }
}

#[test]
fn escape_from_a_sphere_is_of_order_one_over_radius() {
    let dim = 8;
    for k in [8u64, 16, 32] {
        let n = 20_000u64;
        let budget = 4 * k * k;
        let returned = replicate(
            51,
            &format!("sphere:{k}"),
            n,
            || 0u64,
            |acc, _, rng| {
                let mut start = vec![0i32; dim];
                start[0] = k as i32;
                let x = LatticePoint::from_coords(&start).unwrap();
                let walk = Srw::new(x, dim, rng).skip(1);
                if let HitTime::Hit(_) = hitting_time_radius(walk, k, budget) {
                    *acc += 1;
                }
            },
            |a, b| *a += b,
        );
        let p = returned as f64 / n as f64;
        let scaled = (1.0 - p) * k as f64;
        assert!((0.1..=10.0).contains(&scaled), "k = {k}: (1 − P)·k = {scaled}");
    }
}
