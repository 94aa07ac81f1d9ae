//! Green tables against independent oracles: exact transition sums,
//! lattice Laplacian identities and direct point quadrature.

use std::sync::OnceLock;

use brwlab::greens::transition::{green_partial, transition_series};
use brwlab::greens::{build_G_table, build_Gg_table, build_tables, point_value, GreensTable, TableKind};
use brwlab::lattice::{neighbours, LatticePoint};
use proptest::prelude::*;

/// g, g⋆g and g⋆g⋆g in d = 8 on a radius-16 box.
fn tables() -> &'static [GreensTable] {
    static T: OnceLock<Vec<GreensTable>> = OnceLock::new();
    T.get_or_init(|| {
        build_tables(8, 16, &[TableKind::Green, TableKind::GreenSq, TableKind::GreenCube], None).unwrap()
    })
}

fn at(t: &GreensTable, c: &[i32]) -> f64 {
    t.at_coords(c).unwrap()
}

fn pad(c: &[i32]) -> Vec<i32> {
    let mut v = c.to_vec();
    v.resize(8, 0);
    v
}

const PROBES: [&[i32]; 6] = [&[0], &[1], &[1, 1], &[2, 1, 1], &[3], &[2, 2, 2, 1]];

#[test]
fn g_matches_summed_transition_probabilities() {
    let g = &tables()[0];
    for p in PROBES {
        let x = pad(p);
        let (partial, tail) = green_partial(&x, 3000);
        let v = at(g, &x);
        assert!(v >= partial - g.truncation_error, "{p:?}: {v} < {partial}");
        assert!((v - partial - tail).abs() <= 0.05 * tail + 1e-12, "{p:?}: {v} vs {partial} + {tail}");
    }
}

#[test]
fn g_star_g_matches_weighted_transition_sums() {
    let gg = &tables()[1];
    let jmax = 4000;
    for p in PROBES {
        let x = pad(p);
        let s = transition_series(&x, jmax);
        let partial: f64 = s.iter().enumerate().map(|(j, v)| (j + 1) as f64 * v).sum();
        // p_j ≈ 2(d/2πj)^{d/2} on the right parity, so Σ_{j>J} (j+1) p_j ≈ (d/2π)^4 / (2J²)
        let tail = (8.0 / (2.0 * std::f64::consts::PI)).powi(4) / (2.0 * (jmax as f64).powi(2));
        let v = at(gg, &x);
        assert!((v - partial - tail).abs() <= 0.1 * tail + 1e-10, "{p:?}: {v} vs {partial} + {tail}");
    }
}

/// f(x) − (1/2d) Σ_{y∼x} f(y) over the interior of the box.
fn laplacian_residual(t: &GreensTable, rhs: impl Fn(&[i32]) -> f64) -> f64 {
    let r = t.radius as i32 - 1;
    let mut worst = 0.0f64;
    for c in t.domain().points() {
        let coords: Vec<i32> = c.iter().map(|&v| v as i32).collect();
        if coords.iter().any(|&v| v > r) {
            continue;
        }
        let x = LatticePoint::from_coords(&coords).unwrap();
        let avg: f64 = neighbours(x, t.dim).map(|y| t.get(y).unwrap()).sum::<f64>() / (2 * t.dim) as f64;
        worst = worst.max((t.get(x).unwrap() - avg - rhs(&coords)).abs());
    }
    worst
}

#[test]
fn g_is_harmonic_off_the_origin() {
    let g = &tables()[0];
    let delta = |c: &[i32]| if c.iter().all(|&v| v == 0) { 1.0 } else { 0.0 };
    let res = laplacian_residual(g, delta);
    assert!(res <= 10.0 * g.truncation_error, "residual {res:e}, error {:e}", g.truncation_error);
}

#[test]
fn laplacian_of_g_star_g_is_g() {
    let (g, gg) = (&tables()[0], &tables()[1]);
    let res = laplacian_residual(gg, |c| at(g, c));
    assert!(res <= 10.0 * (g.truncation_error + gg.truncation_error), "residual {res:e}");
}

#[test]
fn killed_green_function_solves_its_resolvent_equation() {
    let alpha = 0.01;
    let t = build_tables(8, 8, &[TableKind::Killed], Some(alpha)).unwrap().remove(0);
    // g_α(x) = δ₀(x) + (1 − α) (1/2d) Σ_{y∼x} g_α(y)
    let r = t.radius as i32 - 1;
    let mut worst = 0.0f64;
    for c in t.domain().points() {
        let coords: Vec<i32> = c.iter().map(|&v| v as i32).collect();
        if coords.iter().any(|&v| v > r) {
            continue;
        }
        let x = LatticePoint::from_coords(&coords).unwrap();
        let avg: f64 = neighbours(x, 8).map(|y| t.get(y).unwrap()).sum::<f64>() / 16.0;
        let d = if x == LatticePoint::ORIGIN { 1.0 } else { 0.0 };
        worst = worst.max((t.get(x).unwrap() - d - (1.0 - alpha) * avg).abs());
    }
    assert!(worst <= 10.0 * t.truncation_error, "residual {worst:e}");
    let g = &tables()[0];
    assert!(at(&t, &[0; 8]) < at(g, &[0; 8]));
}

#[test]
fn values_decay_along_axes_and_diagonals() {
    for t in tables() {
        for dirs in [1usize, 2, 8] {
            let mut last = f64::INFINITY;
            for k in 0..=t.radius as i32 {
                let mut c = vec![0; 8];
                for v in c.iter_mut().take(dirs) {
                    *v = k;
                }
                let v = at(t, &c);
                assert!(v > 0.0 && v < last, "{:?} along {dirs} axes at {k}", t.kind);
                last = v;
            }
        }
    }
}

#[test]
fn tree_green_convolution_has_an_inverse_square_plateau() {
    let [g, gg, ggg] = tables() else { unreachable!() };
    let gcg = build_Gg_table(g, gg, ggg, 1.0).unwrap();
    // (G⋆g)(x)·‖x‖² over the shell 8 ≤ ‖x‖ ≤ 12
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for c in gcg.domain().points() {
        let r2: f64 = c.iter().map(|&v| (v as f64).powi(2)).sum();
        if (64.0..=144.0).contains(&r2) {
            let v = gcg.at_canonical(&c) * r2;
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    assert!(hi / lo < 1.1, "plateau spread {lo} .. {hi}");
}

#[test]
fn tree_green_combines_the_pure_tables() {
    let (g, gg) = (&tables()[0], &tables()[1]);
    let s = 2.0;
    let big_g = build_G_table(g, gg, s).unwrap();
    for p in PROBES {
        let x = pad(p);
        let d = if p.iter().all(|&v| v == 0) { 1.0 } else { 0.0 };
        let want = s / 2.0 * at(gg, &x) + (1.0 - s) * at(g, &x) + s / 2.0 * d;
        assert!((at(&big_g, &x) - want).abs() < 1e-12 * want.abs().max(1.0));
    }
}

#[test]
fn binary_and_csv_forms() {
    let t = build_tables(6, 4, &[TableKind::Green], None).unwrap().remove(0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.bin");
    t.save(&path).unwrap();
    let back = GreensTable::load(&path).unwrap();
    assert_eq!(back.values, t.values);
    assert_eq!((back.dim, back.radius, back.kind), (t.dim, t.radius, t.kind));
    assert_eq!(back.truncation_error, t.truncation_error);
    let bytes = std::fs::read(&path).unwrap();
    let mut bad = bytes.clone();
    bad[0] ^= 0xff;
    std::fs::write(&path, &bad).unwrap();
    assert!(GreensTable::load(&path).is_err());
    let csv = t.to_csv();
    assert!(csv.starts_with("c1,c2,c3,c4,c5,c6,orbit_size,value\n"));
    assert_eq!(csv.lines().count(), t.values.len() + 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lookups_are_symmetric(c in proptest::collection::vec(-16i32..=16, 8), perm in Just((0..8).collect::<Vec<usize>>()).prop_shuffle(), flips in proptest::collection::vec(any::<bool>(), 8)) {
        let moved: Vec<i32> = perm.iter().zip(&flips).map(|(&i, &f)| if f { -c[i] } else { c[i] }).collect();
        for t in tables() {
            prop_assert_eq!(at(t, &c), at(t, &moved));
        }
    }

    /// Outside the box the far-field model should agree with quadrature at
    /// the point to within its stated relative misfit.
    #[test]
    fn far_field_agrees_with_point_quadrature(c in proptest::collection::vec(0i32..=22, 3), lead in 17i32..=24) {
        let x = vec![lead, c[0], c[1], c[2], 0, 0, 0, 0];
        for t in &tables()[..2] {
            let far = t.far.as_ref().unwrap();
            let rel = far.terms.iter().map(|(_, p)| p.rel_err).fold(0.0, f64::max);
            let (v, err) = point_value(t.kind, &x, None).unwrap();
            let f = at(t, &x);
            prop_assert!((f - v).abs() <= 1.5 * rel * v + err, "{:?} at {:?}: far {} vs {} (rel {})", t.kind, x, f, v, rel);
        }
    }
}
