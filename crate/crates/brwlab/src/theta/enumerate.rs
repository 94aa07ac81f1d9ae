//! Exact enumeration of the one-sum functionals over depth-first queue
//! prefixes.
//!
//! A prefix fixes the offspring of the first vertices; its probability is the
//! product of μ over them. Each vertex contributes (probability of its prefix)
//! × (its weight) × h_t, where h_t = E h(X_t) at its depth t. A prefix whose
//! remaining contribution is provably below ε is cut, and that bound goes
//! into the residual. Bounds use only θ̃ = E[λ^|GW|]: pending subtrees are
//! independent GW trees, vertices inside a subtree rooted at depth t have
//! depth ≥ t, and E[(1 − λ^|GW|)/(1 − λ)] = (1 − θ̃)/(1 − λ).

use crate::error::{Error, Result};
use crate::offspring::OffspringDistribution;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Weighting {
    /// Σ_i λ^i h(S_i)
    Forward,
    /// Σ_i λ^{|GW|−i} h(S_i)
    Backward,
    /// λ^{|GW|} Σ_i h(S_i)
    Whole,
}

/// h_t for t < len, and sup bounds over t ≥ s.
#[derive(Clone, Debug)]
pub struct DepthWeights {
    vals: Vec<f64>,
    suffix_sup: Vec<f64>,
    beyond: f64,
    /// h_t = beyond exactly for t past the table
    exact_beyond: bool,
}

impl DepthWeights {
    /// `beyond` must bound h_t for every t ≥ vals.len().
    pub fn new(vals: Vec<f64>, beyond: f64) -> Self {
        let mut suffix_sup = vals.clone();
        let mut run = beyond;
        for v in suffix_sup.iter_mut().rev() {
            run = run.max(*v);
            *v = run;
        }
        DepthWeights {
            vals,
            suffix_sup,
            beyond,
            exact_beyond: false,
        }
    }

    pub fn constant() -> Self {
        DepthWeights {
            exact_beyond: true,
            ..DepthWeights::new(vec![1.0], 1.0)
        }
    }

    /// (value, exact?)
    fn at(&self, t: usize) -> (f64, bool) {
        match self.vals.get(t) {
            Some(&v) => (v, true),
            None => (self.beyond, self.exact_beyond),
        }
    }

    fn sup_from(&self, t: usize) -> f64 {
        self.suffix_sup.get(t).copied().unwrap_or(self.beyond)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Enumeration {
    pub value: f64,
    /// the true value lies in [value, value + residual]
    pub residual: f64,
    pub nodes: u64,
}

struct Ctx<'a> {
    pmf: &'a [f64],
    lambda: f64,
    tt: f64,
    /// λ d/dλ E[λ^|GW|]
    size_moment: f64,
    h: &'a DepthWeights,
    eps: f64,
    guard: u64,
    value: f64,
    residual: f64,
    nodes: u64,
    tt_pow: Vec<f64>,
}

impl Ctx<'_> {
    fn tick(&mut self) -> Result<()> {
        self.nodes += 1;
        if self.nodes > self.guard {
            return Err(Error::ResourceGuard {
                what: "enumerated prefixes".into(),
                limit: self.guard,
                generated: self.nodes,
            });
        }
        Ok(())
    }

    /// Exact vertex term; depths past the table go to the residual.
    fn vertex(&mut self, weight: f64, t: usize) {
        let (v, exact) = self.h.at(t);
        if exact {
            self.value += weight * v;
        } else {
            self.residual += weight * v;
        }
    }

    fn geo(&self, r: usize) -> f64 {
        // (1 − θ̃^r)/(1 − θ̃)
        (1.0 - self.tt_pow[r]) / (1.0 - self.tt)
    }
}

/// Enumerate E[Σ weighted h] for a GW(μ) tree. `theta_tilde` must be
/// E[λ^|GW|]; `eps` is the per-prefix cut.
pub fn enumerate_one_sum(
    dist: &OffspringDistribution,
    lambda: f64,
    theta_tilde: f64,
    weighting: Weighting,
    h: &DepthWeights,
    eps: f64,
    guard: u64,
) -> Result<Enumeration> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Config("enumeration needs λ in (0, 1)".into()));
    }
    let tt = theta_tilde;
    let kmax = dist.support_len() + 4096;
    let mut tt_pow = Vec::with_capacity(kmax);
    let mut p = 1.0;
    for _ in 0..kmax {
        tt_pow.push(p);
        p *= tt;
    }
    let size_moment = lambda * dist.pgf_unchecked(tt) / (1.0 - lambda * dist.pgf_derivative(tt));
    let mut ctx = Ctx {
        pmf: dist.pmf(),
        lambda,
        tt,
        size_moment,
        h,
        eps,
        guard,
        value: 0.0,
        residual: 0.0,
        nodes: 0,
        tt_pow,
    };
    match weighting {
        Weighting::Forward | Weighting::Whole => {
            // the root: a virtual slot at depth 0
            let mut stack = vec![(0u32, 1u32)];
            preorder(&mut ctx, weighting, 0, 1.0, &mut stack)?;
        }
        Weighting::Backward => {
            // the root's offspring are drawn when it is created
            for (k, &pk) in dist.pmf().iter().enumerate() {
                if pk > 0.0 {
                    mirror(&mut ctx, pk, vec![(0, k as u32)], 0)?;
                }
            }
        }
    }
    Ok(Enumeration {
        value: ctx.value,
        residual: ctx.residual,
        nodes: ctx.nodes,
    })
}

/// Visit vertex i (the next pending slot), branching on its offspring.
fn preorder(
    ctx: &mut Ctx,
    weighting: Weighting,
    i: i32,
    prob: f64,
    stack: &mut Vec<(u32, u32)>,
) -> Result<()> {
    ctx.tick()?;
    let (t, rem) = *stack.last().unwrap();
    if rem == 1 {
        stack.pop();
    } else {
        stack.last_mut().unwrap().1 -= 1;
    }
    let pending: usize = stack.iter().map(|s| s.1 as usize).sum();
    let t = t as usize;
    let li = ctx.lambda.powi(i);
    let li1 = li * ctx.lambda;
    if weighting == Weighting::Forward {
        ctx.vertex(prob * li, t);
    }
    // summaries of the pending slots, top first
    let mut s_old = 0.0; // Σ_c θ̃^c H(t_c), c counted from the top
    let mut sum_h = 0.0; // Σ_c H(t_c)
    {
        let mut c = 0usize;
        for &(d, r) in stack.iter().rev() {
            let hs = ctx.h.sup_from(d as usize);
            s_old += ctx.tt_pow[c.min(ctx.tt_pow.len() - 1)] * hs * ctx.geo((r as usize).min(ctx.tt_pow.len() - 1));
            sum_h += r as f64 * hs;
            c += r as usize;
        }
    }
    let h_next = ctx.h.sup_from(t + 1);
    let scale = (1.0 - ctx.tt) / (1.0 - ctx.lambda);
    for k in 0..ctx.pmf.len() {
        let pk = ctx.pmf[k];
        if pk == 0.0 {
            continue;
        }
        let pp = prob * pk;
        let w = pending + k;
        if weighting == Weighting::Whole {
            // E[λ^|GW| | prefix] = λ^{i+1} θ̃^{pending}
            let tw = ctx.tt_pow.get(w).copied().unwrap_or(0.0);
            ctx.vertex(pp * li1 * tw, t);
        }
        if w == 0 {
            continue;
        }
        let bound = match weighting {
            Weighting::Forward => {
                let s_new = h_next * ctx.geo(k) + ctx.tt_pow[k] * s_old;
                pp * li1 * scale * s_new
            }
            Weighting::Whole => {
                let tw = ctx.tt_pow.get(w - 1).copied().unwrap_or(0.0);
                pp * li1 * tw * ctx.size_moment * (sum_h + k as f64 * h_next)
            }
            Weighting::Backward => unreachable!(),
        };
        if bound < ctx.eps {
            ctx.residual += bound;
            continue;
        }
        if k > 0 {
            stack.push((t as u32 + 1, k as u32));
        }
        preorder(ctx, weighting, i + 1, pp, stack)?;
        if k > 0 {
            stack.pop();
        }
    }
    // restore the slot taken at the top
    if rem == 1 {
        stack.push((t as u32, 1));
    } else {
        stack.last_mut().unwrap().1 += 1;
    }
    Ok(())
}

/// Reverse-order generation: frames are (depth, children not yet created);
/// `e` vertices have been emitted.
fn mirror(ctx: &mut Ctx, prob: f64, mut frames: Vec<(u32, u32)>, mut e: i32) -> Result<()> {
    ctx.tick()?;
    loop {
        let Some(&(d, r)) = frames.last() else {
            return Ok(());
        };
        if r == 0 {
            frames.pop();
            let w = prob * ctx.lambda.powi(e + 1);
            ctx.vertex(w, d as usize);
            e += 1;
            continue;
        }
        frames.last_mut().unwrap().1 -= 1;
        let cd = d as usize + 1;
        // what is left below the new child, with E[λ^offset] starting at 1
        let (mut rest_exact, mut rest_bound, mut f) = (0.0, 0.0, 1.0);
        for &(fd, fr) in frames.iter().rev() {
            let fr = fr as usize;
            rest_bound += f * ctx.lambda * ctx.h.sup_from(fd as usize + 1) * (1.0 - ctx.tt_pow[fr]) / (1.0 - ctx.lambda);
            f *= ctx.tt_pow[fr];
            let (hv, exact) = ctx.h.at(fd as usize);
            if exact {
                rest_exact += f * ctx.lambda * hv;
            } else {
                rest_bound += f * ctx.lambda * hv;
            }
            f *= ctx.lambda;
        }
        let le = ctx.lambda.powi(e);
        let h_child_sub = ctx.h.sup_from(cd + 1);
        let (h_child, child_exact) = ctx.h.at(cd);
        for k in 0..ctx.pmf.len() {
            let pk = ctx.pmf[k];
            if pk == 0.0 {
                continue;
            }
            let pp = prob * pk;
            let tk = ctx.tt_pow[k];
            let mut bound = le * ctx.lambda * h_child_sub * (1.0 - tk) / (1.0 - ctx.lambda);
            let mut exact = 0.0;
            let own = le * tk * ctx.lambda * h_child;
            if child_exact {
                exact += own;
            } else {
                bound += own;
            }
            let after = le * tk * ctx.lambda;
            exact += after * rest_exact;
            bound += after * rest_bound;
            if pp * bound < ctx.eps {
                ctx.value += pp * exact;
                ctx.residual += pp * bound;
                continue;
            }
            let mut next = frames.clone();
            next.push((cd as u32, k as u32));
            mirror(ctx, pp, next, e)?;
        }
        return Ok(());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dfqp::gw_size_pmf;
    use crate::theta::theta_tilde;

    /// With h ≡ 1 every weighting has a closed form in the size law.
    fn size_law_value(dist: &OffspringDistribution, lambda: f64, w: Weighting) -> f64 {
        let pmf = gw_size_pmf(dist, 4000);
        // trees above the table have λ^n ≈ 0
        let rest = 1.0 - pmf.iter().sum::<f64>();
        let mut v = match w {
            Weighting::Forward => rest / (1.0 - lambda),
            Weighting::Backward => rest * lambda / (1.0 - lambda),
            Weighting::Whole => 0.0,
        };
        for (n, p) in pmf.iter().enumerate() {
            let n = n as i32;
            v += p * match w {
                Weighting::Forward | Weighting::Backward => {
                    let s = (1.0 - lambda.powi(n)) / (1.0 - lambda);
                    if w == Weighting::Forward { s } else { lambda * s }
                }
                Weighting::Whole => n as f64 * lambda.powi(n),
            };
        }
        v
    }

    #[test]
    fn constant_h_matches_size_law() {
        for dist in [OffspringDistribution::binary(), OffspringDistribution::geometric()] {
            let lambda = 0.5;
            let tt = theta_tilde(&dist, lambda);
            for w in [Weighting::Forward, Weighting::Backward, Weighting::Whole] {
                let e = enumerate_one_sum(&dist, lambda, tt, w, &DepthWeights::constant(), 1e-8, 10_000_000).unwrap();
                let want = size_law_value(&dist, lambda, w);
                assert!(
                    want >= e.value - 1e-9 && want <= e.value + e.residual + 1e-9,
                    "{w:?} {} {} {want}",
                    e.value,
                    e.residual
                );
                assert!(e.residual < 0.05, "{w:?} residual {}", e.residual);
            }
        }
    }
}
