//! One-sum and two-sum identities for GW-indexed walks, checked by
//! evaluating both sides independently.
//!
//! Right-hand sides are series in p_j(x) = P(X_j = x) with θ-coefficients.
//! Left-hand sides come from prefix enumeration (one-sums), from the size
//! law when h ≡ 1, and from Monte Carlo over lazily generated trees.

use serde::{Deserialize, Serialize};

use super::enumerate::{enumerate_one_sum, DepthWeights, Weighting};
use super::sampler::{Preorder, ReversePreorder};
use super::{theta_set, ThetaBudget, ThetaSet};
use crate::dfqp::gw_size_pmf;
use crate::error::{Error, Result};
use crate::greens::domain::orbit_size;
use crate::greens::transition::transition_series;
use crate::lattice::LatticePoint;
use crate::mc::replicate;
use crate::offspring::OffspringDistribution;
use crate::stats::Moments;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Equation {
    OneSumFwd,
    OneSumBwd,
    OneSumAll,
    TwoSumFwd,
    TwoSumBwd,
}

impl Equation {
    pub const ALL: [Equation; 5] = [
        Equation::OneSumFwd,
        Equation::OneSumBwd,
        Equation::OneSumAll,
        Equation::TwoSumFwd,
        Equation::TwoSumBwd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Equation::OneSumFwd => "one-sum-fwd",
            Equation::OneSumBwd => "one-sum-bwd",
            Equation::OneSumAll => "one-sum-all",
            Equation::TwoSumFwd => "two-sum-fwd",
            Equation::TwoSumBwd => "two-sum-bwd",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Equation::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown identity {s:?}")))
    }

    pub fn is_two_sum(self) -> bool {
        matches!(self, Equation::TwoSumFwd | Equation::TwoSumBwd)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestFunction {
    /// h ≡ 1
    One,
    /// indicator of one lattice point
    Point(Vec<i32>),
}

impl TestFunction {
    pub fn origin(dim: usize) -> Self {
        TestFunction::Point(vec![0; dim])
    }

    pub fn parse(s: &str, dim: usize) -> Result<Self> {
        match s {
            "1" | "one" => Ok(TestFunction::One),
            "origin" | "delta" => Ok(TestFunction::origin(dim)),
            _ => {
                let v: std::result::Result<Vec<i32>, _> = s.split(',').map(|t| t.trim().parse()).collect();
                match v {
                    Ok(v) if v.len() == dim => Ok(TestFunction::Point(v)),
                    _ => Err(Error::Config(format!("test function {s:?} is not 1, origin or a point"))),
                }
            }
        }
    }

    fn is_origin(&self) -> bool {
        matches!(self, TestFunction::Point(p) if p.iter().all(|&c| c == 0))
    }

    fn label(&self) -> String {
        match self {
            TestFunction::One => "1".into(),
            TestFunction::Point(p) => format!("delta({})", p.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")),
        }
    }

    fn target(&self) -> Option<LatticePoint> {
        match self {
            TestFunction::One => None,
            TestFunction::Point(p) => Some(LatticePoint::from_coords(p).expect("point in range")),
        }
    }

    /// E h(X_t) for t ≤ jmax and a bound for all larger t.
    fn depth_weights(&self, jmax: usize) -> DepthWeights {
        match self {
            TestFunction::One => DepthWeights::constant(),
            TestFunction::Point(p) => {
                let vals = transition_series(p, jmax);
                // p_t(x) ≤ p_{2⌊t/2⌋}(0), and p_{2n}(0) decreases
                let z = transition_series(&vec![0; p.len()], jmax);
                let even = if jmax % 2 == 0 { jmax } else { jmax - 1 };
                DepthWeights::new(vals, z[even])
            }
        }
    }
}

#[inline]
fn eval(h: &Option<LatticePoint>, x: LatticePoint) -> f64 {
    match h {
        None => 1.0,
        Some(p) => (x == *p) as u8 as f64,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdentityReport {
    pub equation: String,
    pub lhs: f64,
    pub lhs_bracket: f64,
    pub rhs: f64,
    pub rhs_bracket: f64,
    pub pass: bool,
    pub mu: String,
    pub lambda: f64,
    pub h1: String,
    pub h2: Option<String>,
    /// how `lhs` was obtained
    pub lhs_method: String,
    pub mc_lhs: Option<f64>,
    pub mc_stderr: Option<f64>,
    pub mc_bias: Option<f64>,
    pub mc_pass: Option<bool>,
    pub nodes: Option<u64>,
    /// backward two-sum only: the right-hand side with the coefficients as
    /// usually printed (see `two_sum_shape`)
    pub rhs_printed: Option<f64>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct IdentityBudget {
    pub dim: usize,
    /// per-prefix cut for the enumeration
    pub eps: f64,
    pub node_guard: u64,
    /// Monte Carlo trees (0 to skip)
    pub mc_trees: u64,
    /// largest vertex count generated per tree; tails beyond are bounded
    pub mc_cut: usize,
    pub seed: u64,
    /// Monte Carlo agreement is |mc − rhs| ≤ z·stderr + brackets
    pub z: f64,
}

impl Default for IdentityBudget {
    fn default() -> Self {
        IdentityBudget {
            dim: 8,
            eps: 1e-12,
            node_guard: 20_000_000,
            mc_trees: 100_000,
            mc_cut: 0,
            seed: 1,
            z: 4.0,
        }
    }
}

impl IdentityBudget {
    /// Smallest cut J with Σ_{j ≥ J} j λ^j below 1e-13.
    fn cut(&self, lambda: f64) -> usize {
        if self.mc_cut > 0 {
            return self.mc_cut;
        }
        let mut j = 1usize;
        while pair_tail(lambda, j) > 1e-13 {
            j += 1;
        }
        j
    }
}

/// Σ_{j ≥ J} j λ^j.
fn pair_tail(lambda: f64, j0: usize) -> f64 {
    let j = j0 as f64;
    let l = lambda;
    l.powf(j) * (j / (1.0 - l) + l / (1.0 - l).powi(2))
}

fn theta_for(dist: &OffspringDistribution, lambda: f64) -> Result<ThetaSet> {
    theta_set(
        dist,
        lambda,
        &ThetaBudget {
            tolerance: 1e-15,
            max_terms: 20_000,
            ..ThetaBudget::default()
        },
    )
}

/// Σ_{j ≥ start} a^j p_j(y) up to jmax.
fn weighted(series: &[f64], a: f64, start: usize) -> f64 {
    let mut s = 0.0;
    let mut pw = a.powi(start as i32);
    for v in &series[start..] {
        s += pw * v;
        pw *= a;
    }
    s
}

fn series_cut(a: f64) -> usize {
    // a^{J+1}/(1 − a) < 1e-17
    ((1e-17 * (1.0 - a)).ln() / a.ln()).ceil().max(4.0) as usize
}

pub fn verify_one_sum(
    dist: &OffspringDistribution,
    lambda: f64,
    equation: Equation,
    h: &TestFunction,
    budget: &IdentityBudget,
) -> Result<IdentityReport> {
    if equation.is_two_sum() {
        return Err(Error::Config("verify_one_sum takes a one-sum identity".into()));
    }
    if let TestFunction::Point(p) = h {
        if p.len() != budget.dim {
            return Err(Error::Config("test point has the wrong dimension".into()));
        }
    }
    let th = theta_for(dist, lambda)?;
    let (coef, rate) = match equation {
        Equation::OneSumFwd => (1.0, th.theta),
        Equation::OneSumBwd => (th.theta_tilde, th.theta_dot),
        _ => (th.theta_tilde, th.theta_hat),
    };
    // RHS = coef Σ_j E h(X_j) rate^j
    let jmax = series_cut(rate);
    let (rhs, trunc) = match h {
        TestFunction::One => (coef / (1.0 - rate), 0.0),
        TestFunction::Point(p) => {
            let s = transition_series(p, jmax);
            (coef * weighted(&s, rate, 0), coef * rate.powi(jmax as i32 + 1) / (1.0 - rate))
        }
    };
    // θ-errors move the series by at most coef Σ j r^{j−1} δ = coef δ/(1−r)²
    let rhs_bracket = trunc + coef * th.series_error() / (1.0 - rate).powi(2) + 1e-14 * rhs.abs();

    let weighting = match equation {
        Equation::OneSumFwd => Weighting::Forward,
        Equation::OneSumBwd => Weighting::Backward,
        _ => Weighting::Whole,
    };
    let (lhs, lhs_bracket, method, nodes) = match h {
        TestFunction::One => {
            let (v, b) = one_sum_size_law(dist, lambda, weighting);
            (v, b, "size-law", None)
        }
        TestFunction::Point(_) => {
            let dw = h.depth_weights(400);
            // tighten the cut while the next round is likely to fit the guard
            let mut eps = 1e-7f64.max(budget.eps);
            let mut e = enumerate_one_sum(dist, lambda, th.theta_tilde, weighting, &dw, eps, budget.node_guard)?;
            while eps / 10.0 >= budget.eps * 0.999 && e.nodes.saturating_mul(12) < budget.node_guard {
                eps /= 10.0;
                e = enumerate_one_sum(dist, lambda, th.theta_tilde, weighting, &dw, eps, budget.node_guard)?;
            }
            // the true value is in [value, value + residual]; report the midpoint
            (e.value + e.residual / 2.0, e.residual / 2.0 + 1e-14, "prefix-enumeration", Some(e.nodes))
        }
    };
    let pass = (lhs - rhs).abs() <= lhs_bracket + rhs_bracket;

    let mut report = IdentityReport {
        equation: equation.name().into(),
        lhs,
        lhs_bracket,
        rhs,
        rhs_bracket,
        pass,
        mu: dist.kind().into(),
        lambda,
        h1: h.label(),
        h2: None,
        lhs_method: method.into(),
        mc_lhs: None,
        mc_stderr: None,
        mc_bias: None,
        mc_pass: None,
        nodes,
        rhs_printed: None,
    };
    if budget.mc_trees > 0 {
        let (m, bias) = mc_one_sum(dist, lambda, weighting, h, budget);
        attach_mc(&mut report, &m, bias, budget.z);
    }
    Ok(report)
}

fn attach_mc(report: &mut IdentityReport, m: &Moments, bias: f64, z: f64) {
    let ok = (m.mean() - report.rhs).abs() <= z * m.stderr() + bias + report.rhs_bracket;
    report.mc_lhs = Some(m.mean());
    report.mc_stderr = Some(m.stderr());
    report.mc_bias = Some(bias);
    report.mc_pass = Some(ok);
    report.pass &= ok;
}

/// h ≡ 1: the one-sums are functionals of |GW| alone.
fn one_sum_size_law(dist: &OffspringDistribution, lambda: f64, w: Weighting) -> (f64, f64) {
    let k = series_cut(lambda).max(64) * 4;
    let pmf = gw_size_pmf(dist, k);
    let mut above = 1.0f64; // P(N > j) for the current j
    let mut v = 0.0;
    match w {
        Weighting::Forward | Weighting::Backward => {
            // Σ_j λ^j P(N > j), and λ Σ_j λ^j P(N > j)
            let mut lp = 1.0;
            for (j, p) in pmf.iter().enumerate() {
                above -= p;
                if j == 0 {
                    continue;
                }
                v += lp * (above + p);
                lp *= lambda;
            }
            let mult = if w == Weighting::Backward { lambda } else { 1.0 };
            (mult * v, lambda.powi(k as i32) / (1.0 - lambda) + 1e-14)
        }
        Weighting::Whole => {
            for (n, p) in pmf.iter().enumerate() {
                v += p * n as f64 * lambda.powi(n as i32);
            }
            (v, pair_tail(lambda, k + 1) + 1e-14)
        }
    }
}

fn mc_one_sum(
    dist: &OffspringDistribution,
    lambda: f64,
    w: Weighting,
    h: &TestFunction,
    budget: &IdentityBudget,
) -> (Moments, f64) {
    let cut = budget.cut(lambda);
    let target = h.target();
    let dim = budget.dim;
    let tag = format!("one-sum-{w:?}-{}-{lambda}-{}", dist.kind(), h.label());
    let m = replicate(
        budget.seed,
        &tag,
        budget.mc_trees,
        Moments::default,
        |acc, _, rng| {
            let mut s = 0.0;
            match w {
                Weighting::Forward => {
                    let mut lp = 1.0;
                    for (x, _) in Preorder::new(dist, dim, rng).take(cut) {
                        s += lp * eval(&target, x);
                        lp *= lambda;
                    }
                }
                Weighting::Backward => {
                    let mut lp = lambda;
                    for (x, _) in ReversePreorder::new(dist, dim, rng).take(cut) {
                        s += lp * eval(&target, x);
                        lp *= lambda;
                    }
                }
                Weighting::Whole => {
                    let mut n = 0usize;
                    let mut hits = 0.0;
                    for (x, _) in Preorder::new(dist, dim, rng).take(cut + 1) {
                        n += 1;
                        hits += eval(&target, x);
                    }
                    if n <= cut {
                        s = lambda.powi(n as i32) * hits;
                    }
                }
            }
            acc.push(s);
        },
        |a, b| a.merge(&b),
    );
    let bias = match w {
        Weighting::Whole => pair_tail(lambda, cut + 1),
        _ => lambda.powi(cut as i32) / (1.0 - lambda),
    };
    (m, bias)
}

/// Coefficients of a two-sum right-hand side:
/// c1 Σ_y A(y) B(y) C(y) + c2 Σ_ℓ,k a^ℓ c^k E[h1(X_ℓ) h2(X_ℓ + X̂_k)],
/// with A = Σ_{ℓ≥0} a^ℓ p_ℓ, B = Σ_{r≥1} b^r p_r, C = Σ_{k≥1} c^k p_k.
struct TwoSumShape {
    c1: f64,
    a: f64,
    b: f64,
    c: f64,
    c2: f64,
}

/// `printed` selects the backward coefficients exactly as usually stated,
/// θ^{k−1} θ̇^{k+ℓ+r−2} θ̃ E[LH θ̃^LH] and θ^{k−1} θ̇^{k+ℓ−1} θ̃ θ̂. A first-
/// generation decomposition gives θ̂^{k−1} θ̇^{ℓ+r−1} θ̃ E[LH θ̃^LH] and
/// θ̂^k θ̇^ℓ θ̃ instead: the two agree only if LW and LH were independent.
fn two_sum_shape(eq: Equation, th: &ThetaSet, printed: bool) -> TwoSumShape {
    let (t, tt, that, tdot) = (th.theta, th.theta_tilde, th.theta_hat, th.theta_dot);
    match eq {
        Equation::TwoSumBwd if !printed => TwoSumShape {
            c1: tt * th.lh_moment / (that * tdot),
            a: tdot,
            b: tdot,
            c: that,
            c2: tt,
        },
        Equation::TwoSumFwd => TwoSumShape {
            c1: tt * (t - that) / (t * that * (1.0 - tt)),
            a: t,
            b: that,
            c: t,
            c2: 1.0,
        },
        _ => TwoSumShape {
            // θ^{k−1} θ̇^{k+ℓ+r−2} = (θθ̇)^k θ̇^ℓ θ̇^r / (θ θ̇²)
            c1: tt * th.lh_moment / (t * tdot * tdot),
            a: tdot,
            b: tdot,
            c: t * tdot,
            // θ^{k−1} θ̇^{k+ℓ−1} = (θθ̇)^k θ̇^ℓ / (θ θ̇)
            c2: tt * that / (t * tdot),
        },
    }
}

pub fn verify_two_sum(
    dist: &OffspringDistribution,
    lambda: f64,
    equation: Equation,
    h1: &TestFunction,
    h2: &TestFunction,
    budget: &IdentityBudget,
) -> Result<IdentityReport> {
    if !equation.is_two_sum() {
        return Err(Error::Config("verify_two_sum takes a two-sum identity".into()));
    }
    let th = theta_for(dist, lambda)?;
    let rhs_of = |sh: &TwoSumShape| -> Result<(f64, f64)> {
        match (h1, h2) {
            (TestFunction::One, TestFunction::One) => {
                let (a, b, c) = (sh.a, sh.b, sh.c);
                let v = sh.c1 / (1.0 - a) * b / (1.0 - b) * c / (1.0 - c) + sh.c2 / (1.0 - a) * c / (1.0 - c);
                Ok((v, 1e-12 * v.abs() + 1e3 * th.series_error()))
            }
            (x, y) if x.is_origin() && y.is_origin() => Ok(two_sum_origin_rhs(sh, budget.dim, th.series_error())),
            _ => Err(Error::Config(
                "two-sum identities support h1 = h2 = 1 or h1 = h2 = origin indicator".into(),
            )),
        }
    };
    let (rhs, rhs_bracket) = rhs_of(&two_sum_shape(equation, &th, false))?;
    let rhs_printed = if equation == Equation::TwoSumBwd {
        Some(rhs_of(&two_sum_shape(equation, &th, true))?.0)
    } else {
        None
    };
    let weighting = match equation {
        Equation::TwoSumFwd => Weighting::Forward,
        _ => Weighting::Backward,
    };
    let (lhs, lhs_bracket, method) = if matches!(h1, TestFunction::One) {
        let (v, b) = two_sum_size_law(dist, lambda, weighting);
        (v, b, "size-law")
    } else {
        (f64::NAN, f64::NAN, "monte-carlo")
    };
    let mut report = IdentityReport {
        equation: equation.name().into(),
        lhs,
        lhs_bracket,
        rhs,
        rhs_bracket,
        pass: if lhs.is_nan() { true } else { (lhs - rhs).abs() <= lhs_bracket + rhs_bracket },
        mu: dist.kind().into(),
        lambda,
        h1: h1.label(),
        h2: Some(h2.label()),
        lhs_method: method.into(),
        mc_lhs: None,
        mc_stderr: None,
        mc_bias: None,
        mc_pass: None,
        nodes: None,
        rhs_printed,
    };
    if budget.mc_trees > 0 {
        let (m, bias) = mc_two_sum(dist, lambda, weighting, h1, h2, budget);
        attach_mc(&mut report, &m, bias, budget.z);
        if report.lhs.is_nan() {
            report.lhs = m.mean();
            report.lhs_bracket = budget.z * m.stderr() + bias;
        }
    } else if report.lhs.is_nan() {
        return Err(Error::Config("two-sum with point test functions needs Monte Carlo trees".into()));
    }
    Ok(report)
}

/// h1 = h2 = 1 from the size law: Σ_{i<j<N} λ^j = Σ_j j λ^j P(N > j) and
/// Σ_{i<j<N} λ^{N−i} = Σ_{t≥1} (t−1) λ^t P(N ≥ t).
fn two_sum_size_law(dist: &OffspringDistribution, lambda: f64, w: Weighting) -> (f64, f64) {
    let mut k = 64;
    while pair_tail(lambda, k) > 1e-15 {
        k *= 2;
    }
    let pmf = gw_size_pmf(dist, k);
    let mut ge = 1.0f64; // P(N ≥ t)
    let mut v = 0.0;
    for t in 1..=k {
        let gt = ge - pmf[t]; // P(N > t)
        v += match w {
            Weighting::Forward => t as f64 * lambda.powi(t as i32) * gt,
            _ => (t as f64 - 1.0) * lambda.powi(t as i32) * ge,
        };
        ge = gt;
    }
    (v, pair_tail(lambda, k) + 1e-14)
}

/// h1 = h2 = δ₀: E[h1(X_ℓ + X̃_r) h2(X_ℓ + X̂_k)] = Σ_y p_ℓ(y) p_r(y) p_k(y)
/// by symmetry, so the first part is c1 Σ_y A(y) B(y) C(y), summed over the
/// ℓ¹-ball |y|₁ ≤ M by orbits. The second part is c2 A(0) C(0).
fn two_sum_origin_rhs(sh: &TwoSumShape, dim: usize, theta_err: f64) -> (f64, f64) {
    let amax = sh.a.max(sh.b).max(sh.c);
    let jmax = series_cut(amax);
    // Σ_{|y|₁>M} ABC ≤ sup(BC) Σ_y A ≤ b^{M+1} c^{M+1} / ((1−a)(1−b)(1−c))
    let mut m = 1usize;
    let denom = (1.0 - sh.a) * (1.0 - sh.b) * (1.0 - sh.c);
    while sh.c1.abs() * (sh.b * sh.c).powi(m as i32 + 1) / denom > 1e-16 {
        m += 1;
    }
    let mut total = 0.0;
    let mut count = 0usize;
    let mut y = vec![0i32; dim];
    let mut at_origin = (0.0, 0.0);
    // canonical points: nondecreasing coordinates with sum ≤ m
    fn walk(
        i: usize,
        lo: i32,
        left: i32,
        y: &mut Vec<i32>,
        f: &mut dyn FnMut(&[i32]),
    ) {
        if i == y.len() {
            f(y);
            return;
        }
        let rest = (y.len() - i) as i32;
        let mut v = lo;
        while v * rest <= left {
            y[i] = v;
            walk(i + 1, v, left - v, y, f);
            v += 1;
        }
    }
    walk(0, 0, m as i32, &mut y, &mut |c: &[i32]| {
        let p = transition_series(c, jmax);
        let a = weighted(&p, sh.a, 0);
        let b = weighted(&p, sh.b, 1);
        let cc = weighted(&p, sh.c, 1);
        let cu: Vec<u16> = c.iter().map(|&v| v as u16).collect();
        total += orbit_size(&cu) as f64 * a * b * cc;
        count += 1;
        if c.iter().all(|&v| v == 0) {
            at_origin = (a, cc);
        }
    });
    let v = sh.c1 * total + sh.c2 * at_origin.0 * at_origin.1;
    let tail = sh.c1.abs() * (sh.b * sh.c).powi(m as i32 + 1) / denom;
    let trunc = 3.0 * amax.powi(jmax as i32 + 1) / (1.0 - amax) * (sh.c1.abs() + sh.c2.abs()) / denom;
    let _ = count;
    (v, tail + trunc + 1e3 * theta_err + 1e-13 * v.abs())
}

fn mc_two_sum(
    dist: &OffspringDistribution,
    lambda: f64,
    w: Weighting,
    h1: &TestFunction,
    h2: &TestFunction,
    budget: &IdentityBudget,
) -> (Moments, f64) {
    let cut = budget.cut(lambda);
    let (t1, t2) = (h1.target(), h2.target());
    let dim = budget.dim;
    let tag = format!("two-sum-{w:?}-{}-{lambda}-{}-{}", dist.kind(), h1.label(), h2.label());
    let m = replicate(
        budget.seed,
        &tag,
        budget.mc_trees,
        Moments::default,
        |acc, _, rng| {
            let mut s = 0.0;
            match w {
                Weighting::Forward => {
                    // Σ_j λ^j h2(S_j) Σ_{i<j} h1(S_i)
                    let mut run = 0.0;
                    let mut lp = 1.0;
                    for (x, _) in Preorder::new(dist, dim, rng).take(cut) {
                        s += lp * eval(&t2, x) * run;
                        run += eval(&t1, x);
                        lp *= lambda;
                    }
                }
                _ => {
                    // emission e is vertex N−1−e; pairs i<j are emitted j first
                    let mut run = 0.0;
                    let mut lp = lambda;
                    for (x, _) in ReversePreorder::new(dist, dim, rng).take(cut) {
                        s += lp * eval(&t1, x) * run;
                        run += eval(&t2, x);
                        lp *= lambda;
                    }
                }
            }
            acc.push(s);
        },
        |a, b| a.merge(&b),
    );
    (m, pair_tail(lambda, cut))
}
