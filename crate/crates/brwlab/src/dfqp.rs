//! Galton–Watson trees through their depth-first queue process.
//!
//! The tree is never built as a pointer structure. Vertex k has ξ_k children,
//! the walk W has increments ξ_k − 1, and the tree ends when W first hits −1.
//! Depths and parents come from the right minima of W.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;

use crate::error::{Error, Result};
use crate::offspring::OffspringDistribution;

pub const ENUMERATION_GUARD: u64 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Terminal {
    Completed,
    Truncated,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DfqpWalk {
    /// ξ_j − 1 for each visited vertex, in depth-first order.
    pub increments: Vec<i32>,
    pub terminal: Terminal,
}

impl DfqpWalk {
    pub fn from_offspring(xi: &[usize]) -> Self {
        let increments: Vec<i32> = xi.iter().map(|&k| k as i32 - 1).collect();
        let mut w = 0i64;
        let mut terminal = Terminal::Truncated;
        for (j, inc) in increments.iter().enumerate() {
            w += *inc as i64;
            if w == -1 {
                assert_eq!(j + 1, increments.len(), "walk continues past −1");
                terminal = Terminal::Completed;
            }
        }
        DfqpWalk {
            increments,
            terminal,
        }
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn is_completed(&self) -> bool {
        self.terminal == Terminal::Completed
    }

    /// W_0 = 0, W_1, ..., W_len.
    pub fn partial_sums(&self) -> Vec<i64> {
        let mut w = Vec::with_capacity(self.len() + 1);
        let mut s = 0i64;
        w.push(0);
        for &inc in &self.increments {
            s += inc as i64;
            w.push(s);
        }
        w
    }

    pub fn offspring(&self) -> impl Iterator<Item = usize> + '_ {
        self.increments.iter().map(|&i| (i + 1) as usize)
    }
}

pub fn sample_gw_walk<R: Rng + ?Sized>(
    dist: &OffspringDistribution,
    rng: &mut R,
    cap: usize,
) -> DfqpWalk {
    assert!(cap >= 1, "cap must be positive");
    let mut increments = Vec::new();
    let mut w = 0i64;
    while increments.len() < cap {
        let inc = dist.sample(rng) as i32 - 1;
        increments.push(inc);
        w += inc as i64;
        if w == -1 {
            return DfqpWalk {
                increments,
                terminal: Terminal::Completed,
            };
        }
    }
    DfqpWalk {
        increments,
        terminal: Terminal::Truncated,
    }
}

/// Incremental right-minima stack. Feed W_0, W_1, ... one at a time; each
/// call returns the number of right minima of [0, k] other than k itself,
/// which is the depth of vertex k, plus the index of its parent.
#[derive(Clone, Debug, Default)]
pub struct RightMinima {
    stack: Vec<(i64, usize)>,
    next: usize,
}

impl RightMinima {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, w: i64) -> (usize, Option<usize>) {
        while let Some(&(top, _)) = self.stack.last() {
            if top > w {
                self.stack.pop();
            } else {
                break;
            }
        }
        let depth = self.stack.len();
        let parent = self.stack.last().map(|&(_, j)| j);
        self.stack.push((w, self.next));
        self.next += 1;
        (depth, parent)
    }
}

pub fn depths_from_dfqp(walk: &DfqpWalk) -> Result<Vec<usize>> {
    Ok(tree_from_dfqp(walk)?.0)
}

/// Depths and parents of all vertices of a completed walk.
pub fn tree_from_dfqp(walk: &DfqpWalk) -> Result<(Vec<usize>, Vec<Option<usize>>)> {
    if !walk.is_completed() {
        return Err(Error::Config("depths need a completed walk".into()));
    }
    let w = walk.partial_sums();
    let mut rm = RightMinima::new();
    let mut depth = Vec::with_capacity(walk.len());
    let mut parent = Vec::with_capacity(walk.len());
    for &wk in &w[..walk.len()] {
        let (d, p) = rm.push(wk);
        depth.push(d);
        parent.push(p);
    }
    Ok((depth, parent))
}

/// Records of W on [0, k] (W_j = max over [0, j]), excluding 0.
pub fn count_records(w: &[i64]) -> usize {
    let mut best = w[0];
    let mut count = 0;
    for &x in &w[1..] {
        if x >= best {
            best = x;
            count += 1;
        }
    }
    count
}

/// Right minima of W on [0, k] (W_j = min over [j, k]), excluding k.
pub fn count_right_minima(w: &[i64]) -> usize {
    let k = w.len() - 1;
    let mut best = w[k];
    let mut count = 0;
    for &x in w[..k].iter().rev() {
        if x <= best {
            best = x;
            count += 1;
        }
    }
    count
}

/// W flipped on [0, k]: j ↦ W_k − W_{k−j}.
pub fn flip(w: &[i64]) -> Vec<i64> {
    let k = w.len() - 1;
    (0..=k).map(|j| w[k] - w[k - j]).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LadderDecomposition {
    /// (LW_j, LH_j)
    pub pairs: Vec<(u64, u64)>,
    /// R_1, R_2, ... (R_0 = 0 is implicit)
    pub records: Vec<u64>,
}

/// Cut a walk into ladder segments. A record is a time where W reaches its
/// running maximum (ties count), so ladder heights can be zero.
pub fn ladder_decompose_stream<I>(increments: I, count: usize) -> LadderDecomposition
where
    I: IntoIterator<Item = i64>,
{
    assert!(count >= 1);
    let mut pairs = Vec::with_capacity(count);
    let mut records = Vec::with_capacity(count);
    let (mut w, mut best, mut t) = (0i64, 0i64, 0u64);
    let (mut last_t, mut last_w) = (0u64, 0i64);
    for inc in increments {
        w += inc;
        t += 1;
        if w >= best {
            best = w;
            pairs.push((t - last_t, (w - last_w) as u64));
            records.push(t);
            last_t = t;
            last_w = w;
            if pairs.len() == count {
                break;
            }
        }
    }
    LadderDecomposition { pairs, records }
}

pub fn ladder_decompose<R: Rng + ?Sized>(
    dist: &OffspringDistribution,
    count: usize,
    rng: &mut R,
) -> LadderDecomposition {
    let steps = std::iter::repeat_with(|| dist.sample(rng) as i64 - 1);
    ladder_decompose_stream(steps, count)
}

/// One ladder pair, sampled directly. Ladder widths have infinite mean, so
/// callers pass a cap and get `None` for the (rare) widths beyond it.
pub fn sample_ladder_pair<R: Rng + ?Sized>(
    dist: &OffspringDistribution,
    rng: &mut R,
    cap: u64,
) -> Option<(u64, u64)> {
    let mut w = 0i64;
    for t in 1..=cap {
        w += dist.sample(rng) as i64 - 1;
        if w >= 0 {
            return Some((t, w as u64));
        }
    }
    None
}

#[derive(Clone, Debug)]
pub struct EnumeratedWalk {
    pub walk: DfqpWalk,
    pub probability: f64,
    pub exact: Option<BigRational>,
}

impl EnumeratedWalk {
    /// (numerator, denominator) when both fit in 128 bits.
    pub fn exact_i128(&self) -> Option<(i128, i128)> {
        let e = self.exact.as_ref()?;
        Some((e.numer().to_i128()?, e.denom().to_i128()?))
    }
}

/// Every completed walk of length ≤ max_size, each with its exact probability.
pub fn enumerate_gw(dist: &OffspringDistribution, max_size: usize) -> Result<Vec<EnumeratedWalk>> {
    if max_size > 16 {
        return Err(Error::Config("enumeration is limited to max_size ≤ 16".into()));
    }
    let exact = dist.exact_pmf();
    let mut out = Vec::new();
    let mut xi = Vec::with_capacity(max_size);
    let mut visited = 0u64;
    enum_rec(dist, exact, max_size, 0, 1.0, exact.map(|_| one()), &mut xi, &mut out, &mut visited)?;
    Ok(out)
}

fn one() -> BigRational {
    BigRational::from_integer(BigInt::from(1))
}

#[allow(clippy::too_many_arguments)]
fn enum_rec(
    dist: &OffspringDistribution,
    exact: Option<&[BigRational]>,
    max_size: usize,
    w: i64,
    p: f64,
    q: Option<BigRational>,
    xi: &mut Vec<usize>,
    out: &mut Vec<EnumeratedWalk>,
    visited: &mut u64,
) -> Result<()> {
    *visited += 1;
    if *visited > ENUMERATION_GUARD {
        return Err(Error::ResourceGuard {
            what: "enumerated walks".into(),
            limit: ENUMERATION_GUARD,
            generated: out.len() as u64,
        });
    }
    let remaining = max_size - xi.len();
    for k in 0..dist.support_len() {
        let pk = dist.prob(k);
        if pk == 0.0 {
            continue;
        }
        let nw = w + k as i64 - 1;
        // closing the walk needs nw + 1 more down-steps
        if nw >= 0 && (nw + 1) as usize > remaining - 1 {
            break;
        }
        let nq = match (&q, exact) {
            (Some(q), Some(e)) => Some(q * &e[k]),
            _ => None,
        };
        xi.push(k);
        if nw == -1 {
            out.push(EnumeratedWalk {
                walk: DfqpWalk::from_offspring(xi),
                probability: p * pk,
                exact: nq,
            });
        } else {
            enum_rec(dist, exact, max_size, nw, p * pk, nq, xi, out, visited)?;
        }
        xi.pop();
    }
    Ok(())
}

/// P(|GW| = k) for k = 0..=k_max (index 0 is always 0), from
/// P(|GW| = k) = P(W_k = −1)/k.
pub fn gw_size_pmf(dist: &OffspringDistribution, k_max: usize) -> Vec<f64> {
    if dist.kind() == "geometric" {
        return geometric_size_pmf(k_max);
    }
    size_pmf_dp(dist.pmf(), k_max, 0.0, 1.0, |a, b| a * b, |a, b| a + b)
        .into_iter()
        .enumerate()
        .map(|(k, p)| if k == 0 { 0.0 } else { p / k as f64 })
        .collect()
}

/// Same DP in exact arithmetic, for laws that have an exact pmf.
pub fn gw_size_pmf_exact(dist: &OffspringDistribution, k_max: usize) -> Option<Vec<BigRational>> {
    let pmf = dist.exact_pmf()?;
    let hits = size_pmf_dp(
        pmf,
        k_max,
        BigRational::zero(),
        one(),
        |a: &BigRational, b: &BigRational| a * b,
        |a: &BigRational, b: &BigRational| a + b,
    );
    Some(
        hits.into_iter()
            .enumerate()
            .map(|(k, p)| {
                if k == 0 {
                    BigRational::zero()
                } else {
                    p / BigRational::from_integer(BigInt::from(k))
                }
            })
            .collect(),
    )
}

/// P(W_k = −1) for k ≤ k_max, W the free walk (no absorption; the
/// hitting-time theorem supplies the 1/k). Heights above k_max − k − 1 can
/// never come back to −1 in time, so the state space is capped there.
fn size_pmf_dp<T: Clone + PartialEq>(
    pmf: &[T],
    k_max: usize,
    zero: T,
    one: T,
    mul: impl Fn(&T, &T) -> T,
    add: impl Fn(&T, &T) -> T,
) -> Vec<T> {
    let mut out = vec![zero.clone(); k_max + 1];
    // state[h + off] = P(W_k = h), h ∈ [−k_max, k_max]
    let off = k_max as i64;
    let mut state = vec![zero.clone(); 2 * k_max + 1];
    state[off as usize] = one;
    let (mut lo, mut hi) = (0i64, 0i64);
    for k in 1..=k_max {
        let cap = (k_max - k) as i64 - 1;
        let mut next = vec![zero.clone(); state.len()];
        let (mut nlo, mut nhi) = (i64::MAX, i64::MIN);
        for h in lo..=hi {
            let s = &state[(h + off) as usize];
            if *s == zero {
                continue;
            }
            for (j, p) in pmf.iter().enumerate() {
                let nh = h + j as i64 - 1;
                if nh > cap.max(-1) {
                    break;
                }
                if *p == zero {
                    continue;
                }
                let idx = (nh + off) as usize;
                next[idx] = add(&next[idx], &mul(s, p));
                nlo = nlo.min(nh);
                nhi = nhi.max(nh);
            }
        }
        out[k] = next[(off - 1) as usize].clone();
        state = next;
        lo = nlo;
        hi = nhi;
        if lo > hi {
            break;
        }
    }
    out
}

/// P(|GW| = k) for the geometric law: C(2k−2, k−1) / (k 2^{2k−1}).
fn geometric_size_pmf(k_max: usize) -> Vec<f64> {
    let mut out = vec![0.0; k_max + 1];
    if k_max == 0 {
        return out;
    }
    out[1] = 0.5;
    for k in 1..k_max {
        out[k + 1] = out[k] * (2 * k - 1) as f64 / (2 * (k + 1)) as f64;
    }
    out
}

/// P(|GW| > k) for every k ≤ k_max given the pmf table.
pub fn size_tail(pmf: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    pmf.iter()
        .map(|p| {
            acc += p;
            (1.0 - acc).max(0.0)
        })
        .collect()
}
