//! Generating-function scalars of the ladder and size laws:
//!
//! θ = E[λ^LW], θ̃ = E[λ^|GW|], θ̂ = E[λ^LW θ̃^LH], θ̇ = E[θ̃^LH],
//! θ₀ = E[θ̃^{d₀⁺}], θ₁ = E[θ̃^{d₁⁺}]
//!
//! where d₀⁺ ~ μ is the root's offspring and d₁⁺ has P(d₁⁺ = k) = μ(≥ k+1).
//! The identities built on them live in [`identities`].

pub mod enumerate;
pub mod identities;
pub mod sampler;

use serde::{Deserialize, Serialize};

use crate::dfqp::{gw_size_pmf, sample_ladder_pair};
use crate::error::{Error, Result};
use crate::mc::replicate;
use crate::offspring::OffspringDistribution;
use crate::stats::Moments;

pub use identities::{verify_one_sum, verify_two_sum, Equation, IdentityBudget, IdentityReport, TestFunction};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "method")]
pub enum Method {
    /// truncated series with a bound on the omitted mass
    ExactSeries { tail: f64 },
    FixedPoint,
    /// finite sum over the offspring support
    FiniteSum,
    /// from other members through exact relations
    ClosedForm,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    /// largest possible bias from capping the ladder width
    pub bias: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaSet {
    pub lambda: f64,
    pub theta: f64,
    pub theta_tilde: f64,
    pub theta_hat: f64,
    pub theta_dot: f64,
    pub theta0: f64,
    pub theta1: f64,
    /// E[LH θ̃^LH]
    pub lh_moment: f64,
    pub method_theta: Method,
    pub method_theta_hat: Method,
    /// θ from the series when the series was used, else from the relation
    /// 1 − θ = (1 − λ)/(1 − θ̃)
    pub theta_relation: f64,
    pub mc_theta: Option<McEstimate>,
    pub mc_theta_hat: Option<McEstimate>,
}

impl ThetaSet {
    /// Bound on the error of θ and θ̂.
    pub fn series_error(&self) -> f64 {
        let t = |m: Method| match m {
            Method::ExactSeries { tail } => tail,
            _ => 0.0,
        };
        t(self.method_theta).max(t(self.method_theta_hat)) + 1e-15
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ThetaBudget {
    /// largest ladder width kept in the series
    pub max_terms: usize,
    /// wanted bound on the series tail
    pub tolerance: f64,
    /// ladder samples for the Monte Carlo cross-check (0 to skip)
    pub mc_samples: u64,
    pub seed: u64,
}

impl Default for ThetaBudget {
    fn default() -> Self {
        ThetaBudget {
            max_terms: 4096,
            tolerance: 1e-13,
            mc_samples: 0,
            seed: 0,
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::Config(format!("λ = {lambda} outside (0, 1]")));
    }
    Ok(())
}

/// Smallest fixed point of s ↦ λ f(s) on [0, 1], by Newton's method from 0.
/// φ(s) = λ f(s) − s is convex and positive left of the root, so the iterates
/// increase monotonically.
pub fn theta_tilde(dist: &OffspringDistribution, lambda: f64) -> f64 {
    if lambda >= 1.0 {
        return 1.0;
    }
    let mut s = 0.0f64;
    for _ in 0..500 {
        let phi = lambda * dist.pgf_unchecked(s) - s;
        let dphi = lambda * dist.pgf_derivative(s) - 1.0;
        let next = (s - phi / dphi).min(1.0);
        if !(next > s) || next - s < 1e-17 {
            return next.max(s);
        }
        s = next;
    }
    s
}

/// Σ_ℓ μ(≥ ℓ+1) s^ℓ and Σ_ℓ ℓ μ(≥ ℓ+1) s^ℓ.
fn lh_sums(dist: &OffspringDistribution, s: f64) -> (f64, f64) {
    let mut a = 0.0;
    let mut b = 0.0;
    let mut pw = 1.0;
    for l in 0..dist.support_len() {
        let t = dist.tail(l + 1);
        a += t * pw;
        b += l as f64 * t * pw;
        pw *= s;
    }
    (a, b)
}

/// All members from θ̃ through exact relations; usable for any λ ∈ (0, 1).
pub fn theta_closed(dist: &OffspringDistribution, lambda: f64) -> Result<ThetaSet> {
    check_lambda(lambda)?;
    let tt = theta_tilde(dist, lambda);
    let (theta_dot, lh_moment) = lh_sums(dist, tt);
    let theta = if lambda < 1.0 { 1.0 - (1.0 - lambda) / (1.0 - tt) } else { 1.0 };
    Ok(ThetaSet {
        lambda,
        theta,
        theta_tilde: tt,
        theta_hat: lambda * dist.pgf_derivative(tt),
        theta_dot,
        theta0: dist.pgf_unchecked(tt),
        theta1: theta_dot,
        lh_moment,
        method_theta: Method::ClosedForm,
        method_theta_hat: Method::ClosedForm,
        theta_relation: theta,
        mc_theta: None,
        mc_theta_hat: None,
    })
}

/// P(LW = k) for k = 0..=k_max (index 0 is 0), from
/// P(LW = k, LH = ℓ) = Σ_{m ≥ ℓ+1} μ(m) P(sum of m−ℓ−1 GW sizes = k−1).
pub fn ladder_width_pmf(dist: &OffspringDistribution, k_max: usize) -> Vec<f64> {
    let powers = size_powers(dist, k_max);
    let mut out = vec![0.0; k_max + 1];
    for (m, &pm) in dist.pmf().iter().enumerate().skip(1) {
        for pj in powers.iter().take(m) {
            for (k, v) in pj.iter().enumerate() {
                if k < k_max {
                    out[k + 1] += pm * v;
                }
            }
        }
    }
    out
}

/// Distributions of the sum of j iid GW sizes, j < max offspring, truncated
/// to totals ≤ k_max − 1.
fn size_powers(dist: &OffspringDistribution, k_max: usize) -> Vec<Vec<f64>> {
    let len = k_max.max(1);
    let size = gw_size_pmf(dist, len);
    let jmax = dist.max_offspring().max(1);
    let mut powers = Vec::with_capacity(jmax);
    let mut cur = vec![0.0; len];
    cur[0] = 1.0;
    for _ in 0..jmax {
        powers.push(cur.clone());
        let mut next = vec![0.0; len];
        for (a, &va) in cur.iter().enumerate() {
            if va == 0.0 {
                continue;
            }
            for (b, &vb) in size.iter().enumerate().take(len - a) {
                next[a + b] += va * vb;
            }
        }
        cur = next;
    }
    powers
}

/// θ and θ̂ by the ladder series, θ̃ by fixed point, θ̇, θ₀, θ₁ and E[LH θ̃^LH]
/// as finite sums; optional Monte Carlo over ladder pairs for θ and θ̂.
pub fn theta_set(dist: &OffspringDistribution, lambda: f64, budget: &ThetaBudget) -> Result<ThetaSet> {
    check_lambda(lambda)?;
    if lambda >= 1.0 {
        return Err(Error::Config("the ladder series needs λ < 1".into()));
    }
    let mut set = theta_closed(dist, lambda)?;
    let tt = set.theta_tilde;
    let k = (budget.tolerance.ln() / lambda.ln()).ceil().max(8.0) as usize;
    if k > budget.max_terms {
        return Err(Error::Numeric(format!(
            "ladder series needs {k} terms for tail {:e}, budget is {}",
            budget.tolerance, budget.max_terms
        )));
    }
    let powers = size_powers(dist, k);
    // Q_j = Σ_{t < k} λ^t P(S_j = t), with the mass left out
    let mut q = Vec::with_capacity(powers.len());
    let mut missing = Vec::with_capacity(powers.len());
    for pj in &powers {
        let mut acc = 0.0;
        let mut lp = 1.0;
        let mut mass = 0.0;
        for v in pj {
            acc += lp * v;
            mass += v;
            lp *= lambda;
        }
        q.push(acc);
        missing.push((1.0 - mass).max(0.0));
    }
    let (mut theta, mut theta_hat, mut tail) = (0.0, 0.0, 0.0);
    for (m, &pm) in dist.pmf().iter().enumerate().skip(1) {
        let mut tl = 1.0;
        for l in 0..m {
            let j = m - 1 - l;
            theta += pm * q[j];
            theta_hat += pm * tl * q[j];
            tail += pm * missing[j];
            tl *= tt;
        }
    }
    let bound = lambda.powi(k as i32 + 1) * tail + 1e-15;
    set.theta = lambda * theta;
    set.theta_hat = lambda * theta_hat;
    set.method_theta = Method::ExactSeries { tail: bound };
    set.method_theta_hat = Method::ExactSeries { tail: bound };
    if budget.mc_samples > 0 {
        let (a, b) = mc_theta(dist, lambda, tt, k as u64, budget.mc_samples, budget.seed);
        set.mc_theta = Some(a);
        set.mc_theta_hat = Some(b);
    }
    Ok(set)
}

/// Monte Carlo of θ and θ̂ from capped ladder pairs.
fn mc_theta(dist: &OffspringDistribution, lambda: f64, tt: f64, cap: u64, n: u64, seed: u64) -> (McEstimate, McEstimate) {
    let (m1, m2) = replicate(
        seed,
        "theta-ladder",
        n,
        || (Moments::default(), Moments::default()),
        |acc, _, rng| match sample_ladder_pair(dist, rng, cap) {
            Some((lw, lh)) => {
                let w = lambda.powi(lw as i32);
                acc.0.push(w);
                acc.1.push(w * tt.powi(lh as i32));
            }
            None => {
                acc.0.push(0.0);
                acc.1.push(0.0);
            }
        },
        |a, b| {
            a.0.merge(&b.0);
            a.1.merge(&b.1);
        },
    );
    let bias = lambda.powi(cap as i32 + 1);
    (
        McEstimate {
            mean: m1.mean(),
            stderr: m1.stderr(),
            bias,
        },
        McEstimate {
            mean: m2.mean(),
            stderr: m2.stderr(),
            bias,
        },
    )
}
