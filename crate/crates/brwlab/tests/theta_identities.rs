//! Generating-function scalars against the size law, ladder sampling and
//! each other.

use brwlab::dfqp::{gw_size_pmf, sample_ladder_pair};
use brwlab::mc::replicate;
use brwlab::offspring::{builtins, OffspringDistribution};
use brwlab::stats::Moments;
use brwlab::theta::{
    ladder_width_pmf, theta_closed, theta_set, theta_tilde, verify_one_sum, Equation, IdentityBudget, TestFunction,
    ThetaBudget,
};
use proptest::prelude::*;

fn budget(mc: u64) -> ThetaBudget {
    ThetaBudget {
        mc_samples: mc,
        seed: 3,
        ..ThetaBudget::default()
    }
}

#[test]
fn theta_tilde_is_the_size_law_transform() {
    for d in builtins() {
        let pmf = gw_size_pmf(&d, 20_000);
        for lambda in [0.3f64, 0.5, 0.75, 0.9, 0.99] {
            let direct: f64 = pmf.iter().enumerate().map(|(k, p)| lambda.powi(k as i32) * p).sum();
            let tt = theta_tilde(&d, lambda);
            assert!((tt - direct).abs() < 1e-12, "{} λ={lambda}: {tt} vs {direct}", d.kind());
        }
    }
}

#[test]
fn theta_is_the_ladder_width_transform() {
    for d in builtins() {
        let lw = ladder_width_pmf(&d, 6000);
        for lambda in [0.5f64, 0.75, 0.9] {
            let direct: f64 = lw.iter().enumerate().map(|(k, p)| lambda.powi(k as i32) * p).sum();
            let s = theta_set(&d, lambda, &budget(0)).unwrap();
            assert!((s.theta - direct).abs() < 1e-10, "{} λ={lambda}: {} vs {direct}", d.kind(), s.theta);
        }
    }
}

#[test]
fn series_and_closed_forms_agree() {
    for d in builtins() {
        for lambda in [0.5, 0.75, 0.9, 0.99] {
            let s = theta_set(&d, lambda, &budget(0)).unwrap();
            let c = theta_closed(&d, lambda).unwrap();
            assert!((s.theta - c.theta).abs() < 1e-12 + s.series_error(), "{} θ", d.kind());
            assert!((s.theta_hat - c.theta_hat).abs() < 1e-12 + s.series_error(), "{} θ̂", d.kind());
        }
    }
}

#[test]
fn monte_carlo_agrees_with_the_series() {
    for d in builtins() {
        for lambda in [0.5, 0.9, 0.99] {
            let s = theta_set(&d, lambda, &budget(400_000)).unwrap();
            for (name, exact, mc) in [("θ", s.theta, s.mc_theta.unwrap()), ("θ̂", s.theta_hat, s.mc_theta_hat.unwrap())] {
                assert!(
                    (mc.mean - exact).abs() <= 4.0 * mc.stderr + mc.bias + s.series_error(),
                    "{} λ={lambda} {name}: mc {} ± {} vs {exact}",
                    d.kind(),
                    mc.mean,
                    mc.stderr
                );
            }
        }
    }
}

/// An independent sampler for θ̂ = E[λ^LW θ̃^LH] straight from ladder pairs.
#[test]
fn theta_hat_from_raw_ladder_pairs() {
    let d = OffspringDistribution::binary();
    let lambda = 0.8;
    let tt = theta_tilde(&d, lambda);
    let m = replicate(
        9,
        "raw-ladder",
        400_000,
        Moments::default,
        |acc, _, rng| {
            let v = match sample_ladder_pair(&d, rng, 400) {
                Some((lw, lh)) => lambda.powi(lw as i32) * tt.powi(lh as i32),
                None => 0.0,
            };
            acc.push(v);
        },
        |a, b| a.merge(&b),
    );
    let s = theta_closed(&d, lambda).unwrap();
    // capped widths contribute at most λ^400
    assert!((m.mean() - s.theta_hat).abs() < 4.0 * m.stderr() + lambda.powi(400));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn exact_relations_and_ordering(which in 0usize..3, lambda in 0.05f64..0.995) {
        let d = builtins().swap_remove(which);
        let s = theta_closed(&d, lambda).unwrap();
        prop_assert!((s.theta0 - s.theta_tilde / lambda).abs() < 1e-12);
        prop_assert!((s.theta1 - (1.0 - s.theta0) / (1.0 - s.theta_tilde)).abs() < 1e-9);
        prop_assert!((1.0 - s.theta - (1.0 - lambda) / (1.0 - s.theta_tilde)).abs() < 1e-12);
        prop_assert!(s.theta_hat <= s.theta + 1e-15 && s.theta <= 1.0);
        for v in [s.theta, s.theta_tilde, s.theta_hat, s.theta_dot, s.theta0, s.theta1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn one_sum_identities_hold_for_constant_h(which in 0usize..2, lambda in 0.2f64..0.9) {
        let d = [OffspringDistribution::binary(), OffspringDistribution::geometric()][which].clone();
        let b = IdentityBudget { mc_trees: 0, ..IdentityBudget::default() };
        for eq in [Equation::OneSumFwd, Equation::OneSumBwd, Equation::OneSumAll] {
            let r = verify_one_sum(&d, lambda, eq, &TestFunction::One, &b).unwrap();
            prop_assert!(r.pass, "{:?}: {} vs {}", eq, r.lhs, r.rhs);
        }
    }
}

#[test]
fn square_root_scaling_near_criticality() {
    let d = OffspringDistribution::geometric();
    let mut rows = Vec::new();
    for k in 6..=16 {
        let n = (1u64 << k) as f64;
        let s = theta_closed(&d, 1.0 - 1.0 / n).unwrap();
        let r = n.sqrt();
        rows.push([(1.0 - s.theta_tilde) * r, (1.0 - s.theta) * r, (1.0 - s.theta0) * r, (1.0 - s.theta1) * r]);
    }
    for j in 0..4 {
        let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let max = col.iter().cloned().fold(f64::MIN, f64::max);
        let min = col.iter().cloned().fold(f64::MAX, f64::min);
        assert!(min > 0.0 && max / min < 1.2, "column {j}: {min} .. {max}");
    }
}
