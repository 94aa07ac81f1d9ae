//! Galton–Watson trees through their depth-first queue walks.

use std::collections::HashMap;

use brwlab::dfqp::{
    count_records, count_right_minima, enumerate_gw, flip, gw_size_pmf, gw_size_pmf_exact, ladder_decompose,
    sample_gw_walk, tree_from_dfqp, DfqpWalk,
};
use brwlab::mc::replicate;
use brwlab::offspring::OffspringDistribution;
use brwlab::rng::stream;
use brwlab::stats::fit_line;
use num_traits::ToPrimitive;
use proptest::prelude::*;

/// Offspring sequences that close into a tree: take the prefix up to the
/// first −1 of the walk, padding with leaves if it never gets there.
fn completed_tree() -> impl Strategy<Value = Vec<usize>> {
    proptest::collection::vec(0usize..4, 1..60).prop_map(|xi| {
        let mut out = Vec::new();
        let mut w = 0i64;
        for k in xi {
            out.push(k);
            w += k as i64 - 1;
            if w == -1 {
                return out;
            }
        }
        while w > -1 {
            out.push(0);
            w -= 1;
        }
        out
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// Depth of k is the number of j < k with W_j ≤ W_i for all j < i ≤ k;
    /// the stack answer must equal this quadratic rescan.
    #[test]
    fn depths_match_a_quadratic_rescan(xi in completed_tree()) {
        let walk = DfqpWalk::from_offspring(&xi);
        prop_assert!(walk.is_completed());
        let w = walk.partial_sums();
        let (depth, parent) = tree_from_dfqp(&walk).unwrap();
        for k in 0..walk.len() {
            let naive = (0..k).filter(|&j| (j + 1..=k).all(|i| w[j] <= w[i])).count();
            prop_assert_eq!(depth[k], naive);
            match parent[k] {
                None => prop_assert_eq!(k, 0),
                Some(p) => {
                    prop_assert!(p < k);
                    prop_assert_eq!(depth[p] + 1, depth[k]);
                }
            }
        }
        // every vertex has exactly ξ children
        let mut kids = vec![0usize; walk.len()];
        for p in parent.iter().flatten() {
            kids[*p] += 1;
        }
        prop_assert_eq!(kids, xi);
    }

    #[test]
    fn partial_sums_stay_nonnegative_until_the_end(xi in completed_tree()) {
        let walk = DfqpWalk::from_offspring(&xi);
        let w = walk.partial_sums();
        prop_assert_eq!(*w.last().unwrap(), -1);
        prop_assert!(w[..w.len() - 1].iter().all(|&x| x >= 0));
    }

    #[test]
    fn ladder_records_increase(seed in 0u64..1000, count in 1usize..40) {
        let d = OffspringDistribution::geometric();
        let l = ladder_decompose(&d, count, &mut stream(seed));
        prop_assert_eq!(l.pairs.len(), count);
        let mut sum = 0;
        for (i, &(lw, _)) in l.pairs.iter().enumerate() {
            prop_assert!(lw >= 1);
            sum += lw;
            prop_assert_eq!(l.records[i], sum);
        }
    }
}

#[test]
fn flipping_turns_right_minima_into_records() {
    for (d, max) in [(OffspringDistribution::binary(), 15), (OffspringDistribution::geometric(), 10)] {
        let walks = enumerate_gw(&d, max).unwrap();
        assert!(!walks.is_empty());
        for e in walks {
            let w = e.walk.partial_sums();
            let k = w.len() - 1;
            // flip over [0, k − 1], the excursion before the final step to −1
            let head = &w[..k];
            assert_eq!(count_right_minima(head), count_records(&flip(head)), "{:?}", e.walk.increments);
        }
    }
}

#[test]
fn enumeration_masses_equal_the_size_law_exactly() {
    let d = OffspringDistribution::binary();
    let exact = gw_size_pmf_exact(&d, 14).unwrap();
    let walks = enumerate_gw(&d, 14).unwrap();
    let mut by_len: HashMap<usize, num_rational::BigRational> = HashMap::new();
    for e in &walks {
        let m = by_len.entry(e.walk.len()).or_insert_with(|| num_rational::BigRational::from_integer(0.into()));
        *m += e.exact.clone().unwrap();
    }
    for (k, p) in exact.iter().enumerate().skip(1) {
        let got = by_len.get(&k).cloned().unwrap_or_else(|| num_rational::BigRational::from_integer(0.into()));
        assert_eq!(&got, p, "k = {k}");
    }
}

#[test]
fn sampling_matches_enumeration() {
    let d = OffspringDistribution::binary();
    let walks = enumerate_gw(&d, 12).unwrap();
    let index: HashMap<Vec<i32>, usize> =
        walks.iter().enumerate().map(|(i, e)| (e.walk.increments.clone(), i)).collect();
    let n = 1_000_000u64;
    let counts = replicate(
        5,
        "enum-vs-sample",
        n,
        || vec![0u64; walks.len()],
        |acc, _, rng| {
            let w = sample_gw_walk(&d, rng, 12);
            if w.is_completed() {
                acc[index[&w.increments]] += 1;
            }
        },
        |a, b| {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        },
    );
    for (e, &c) in walks.iter().zip(&counts) {
        let p = e.probability;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        let f = c as f64 / n as f64;
        assert!((f - p).abs() < 5.0 * se, "{:?}: {f} vs {p}", e.walk.increments);
    }
}

#[test]
fn size_law_tail_exponent_is_three_halves() {
    for d in [OffspringDistribution::geometric(), OffspringDistribution::poisson(), OffspringDistribution::binary()] {
        let pmf = gw_size_pmf(&d, 4200);
        // binary trees have odd sizes only
        let ks: Vec<usize> = (7..=12).map(|j| (1usize << j) + 1).collect();
        let x: Vec<f64> = ks.iter().map(|&k| (k as f64).ln()).collect();
        let y: Vec<f64> = ks.iter().map(|&k| pmf[k].ln()).collect();
        let fit = fit_line(&x, &y, None);
        assert!((fit.slope + 1.5).abs() < 0.05, "{}: slope {}", d.kind(), fit.slope);
    }
}

#[test]
fn exact_and_float_size_laws_agree() {
    let d = OffspringDistribution::binary();
    let f = gw_size_pmf(&d, 40);
    let e = gw_size_pmf_exact(&d, 40).unwrap();
    for k in 1..=40 {
        assert!((f[k] - e[k].to_f64().unwrap()).abs() < 1e-15);
    }
}
