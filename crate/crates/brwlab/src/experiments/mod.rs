//! Monte Carlo estimators built on a pair of independent two-sided trees:
//! 𝒯 seen through a window [−ξ^ℓ, ξ^r] and 𝒯̃ seen from its root.
//!
//! The past 𝒯̃(−∞,0) is infinite, so it is explored outward from the origin
//! and cut in two ways. A hanging subtree is not expanded past a vertex that
//! is far from the window's point cloud, and the spine is followed until it
//! is far from the cloud. Whatever was not explored enters a bracket through
//! its expected number of hits on the cloud, which the Green tables give in
//! closed form. The same tables give U_n's spine sum beyond the cut exactly
//! in expectation.

pub mod estimators;
pub mod registry;

use rand::Rng;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::greens::{build_tables, GreensTable, RadialEnvelope, TableKind};
use crate::lattice::{label_walk, random_step, LatticePoint, Occupied};
use crate::offspring::OffspringDistribution;
use crate::tree::{sample_slice_guarded, Horizon, DEFAULT_VERTEX_GUARD};

pub use estimators::*;
pub use registry::{Context, Experiment, ExperimentRegistry};

/// g and g⋆g on a common box with their envelopes. Everything the
/// estimators need is a combination of these two.
#[derive(Clone, Debug)]
pub struct Kernels {
    pub dim: usize,
    pub sigma_sq: f64,
    pub g: GreensTable,
    pub gg: GreensTable,
    env_g: RadialEnvelope,
    env_gg: RadialEnvelope,
    /// relative accuracy of far-field values
    far_rel: f64,
}

impl Kernels {
    pub fn build(dim: usize, radius: usize, sigma_sq: f64) -> Result<Self> {
        let mut t = build_tables(dim, radius, &[TableKind::Green, TableKind::GreenSq], None)?;
        let gg = t.pop().unwrap();
        let g = t.pop().unwrap();
        Self::from_tables(g, gg, sigma_sq)
    }

    pub fn from_tables(g: GreensTable, gg: GreensTable, sigma_sq: f64) -> Result<Self> {
        if g.kind != TableKind::Green || gg.kind != TableKind::GreenSq || g.dim != gg.dim {
            return Err(Error::Config("kernels need g and g⋆g tables of one dimension".into()));
        }
        let (Some(fg), Some(fgg)) = (&g.far, &gg.far) else {
            return Err(Error::Config("kernels need far-field fits (d ≥ 5)".into()));
        };
        let far_rel = fg
            .terms
            .iter()
            .chain(&fgg.terms)
            .map(|(_, t)| t.rel_err)
            .fold(0.0, f64::max);
        Ok(Kernels {
            dim: g.dim,
            sigma_sq,
            env_g: g.envelope(),
            env_gg: gg.envelope(),
            g,
            gg,
            far_rel,
        })
    }

    /// Value of g at x and a bound on its error.
    #[inline]
    fn g_err(&self, x: LatticePoint) -> (f64, f64) {
        match self.g.get(x) {
            Some(v) => (v, self.g.truncation_error),
            None => {
                let v = self.g.lookup(x);
                (v, v.abs() * self.far_rel)
            }
        }
    }

    #[inline]
    fn gg_err(&self, x: LatticePoint) -> (f64, f64) {
        match self.gg.get(x) {
            Some(v) => (v, self.gg.truncation_error),
            None => {
                let v = self.gg.lookup(x);
                (v, v.abs() * self.far_rel)
            }
        }
    }

    /// G(z) = Σ_k P(𝒯_k = z) = (σ²/2) g⋆g + (1 − σ²) g + (σ²/2) δ₀.
    pub fn tree_green(&self, z: LatticePoint) -> f64 {
        let h = self.sigma_sq / 2.0;
        let d = if z == LatticePoint::ORIGIN { h } else { 0.0 };
        h * self.gg.lookup(z) + (1.0 - self.sigma_sq) * self.g.lookup(z) + d
    }

    /// Upper bound on g over ‖x‖ ≥ r.
    pub fn g_beyond(&self, r: f64) -> f64 {
        self.env_g.at(r)
    }

    /// Upper bound on g⋆g over ‖x‖ ≥ r.
    pub fn gg_beyond(&self, r: f64) -> f64 {
        self.env_gg.at(r)
    }

    /// Smallest integer distance D at which `mass` points at distance ≥ D
    /// receive fewer than `tol` expected hits from a whole two-sided past.
    pub fn cut_distance(&self, mass: f64, tol: f64) -> f64 {
        let h = self.sigma_sq / 2.0;
        let mut d = 1.0;
        while mass * (self.g_beyond(d) + h * self.gg_beyond(d)) > tol && d < 1e6 {
            d += 1.0;
        }
        d
    }

    /// Smallest integer distance at which one vertex with one child
    /// contributes fewer than `tol` expected hits on `mass` points.
    pub fn prune_distance(&self, mass: f64, tol: f64) -> f64 {
        let mut d = 1.0;
        while mass * self.g_beyond(d) > tol && d < 1e6 {
            d += 1.0;
        }
        d
    }
}

/// A finite multiset of lattice points, with its distinct points indexed.
#[derive(Clone, Debug)]
pub struct Cloud {
    pub points: Vec<(LatticePoint, u32)>,
    set: FxHashMap<LatticePoint, u32>,
    pub total: u64,
    /// max Euclidean norm
    pub rho: f64,
}

impl Cloud {
    pub fn new<I: IntoIterator<Item = LatticePoint>>(pts: I) -> Self {
        let mut set: FxHashMap<LatticePoint, u32> = FxHashMap::default();
        let mut order = Vec::new();
        for p in pts {
            let e = set.entry(p).or_insert(0);
            if *e == 0 {
                order.push(p);
            }
            *e += 1;
        }
        let points: Vec<(LatticePoint, u32)> = order.iter().map(|p| (*p, set[p])).collect();
        let total = points.iter().map(|p| p.1 as u64).sum();
        let rho = points.iter().map(|p| p.0.norm()).fold(0.0, f64::max);
        Cloud {
            points,
            set,
            total,
            rho,
        }
    }

    /// The same multiset seen from `x` (every point shifted by −x).
    pub fn shifted(&self, x: LatticePoint) -> Cloud {
        Cloud::new(
            self.points
                .iter()
                .flat_map(|&(p, c)| std::iter::repeat_n(p.sub(x), c as usize)),
        )
    }

    pub fn distinct(&self) -> usize {
        self.points.len()
    }

    pub fn count(&self, x: LatticePoint) -> u32 {
        self.set.get(&x).copied().unwrap_or(0)
    }

    /// Σ_y c_y g(y − x) and its error bound.
    fn g_sum(&self, k: &Kernels, x: LatticePoint) -> (f64, f64) {
        let (mut s, mut e) = (0.0, 0.0);
        for &(y, c) in &self.points {
            let (v, err) = k.g_err(y.sub(x));
            s += c as f64 * v;
            e += c as f64 * err;
        }
        (s, e)
    }

    /// Σ_y c_y (g, g⋆g)(y − x) and the combined error bound (unit weights).
    fn g_gg_sum(&self, k: &Kernels, x: LatticePoint) -> (f64, f64, f64) {
        let (mut a, mut b, mut e) = (0.0, 0.0, 0.0);
        for &(y, c) in &self.points {
            let z = y.sub(x);
            let (v, ev) = k.g_err(z);
            let (w, ew) = k.gg_err(z);
            a += c as f64 * v;
            b += c as f64 * w;
            e += c as f64 * (ev + ew);
        }
        (a, b, e)
    }
}

impl Occupied for Cloud {
    fn hits(&self, x: LatticePoint) -> bool {
        self.set.contains_key(&x)
    }
}

/// How far to follow 𝒯̃'s past.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    /// Expected hits allowed from everything beyond the spine cut.
    pub spine_tol: f64,
    /// Expected hits allowed per pruned subtree vertex.
    pub prune_tol: f64,
    /// Fixed spine cut radius; overrides `spine_tol`.
    pub r_cut: Option<f64>,
    pub vertex_guard: usize,
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation {
            spine_tol: 1e-3,
            prune_tol: 1e-5,
            r_cut: None,
            vertex_guard: 50_000_000,
        }
    }
}

/// Where the explored past first met the cloud.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    /// Spine rank of the vertex or of the spine vertex its subtree hangs from.
    pub spine_rank: u32,
    pub on_spine: bool,
    pub point: LatticePoint,
}

/// What to do on each side of 𝒯̃'s spine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sides {
    /// Test the past against the cloud, stopping at the first hit.
    pub past: bool,
    /// Count visits of the future to the cloud.
    pub future: bool,
}

/// Result of walking 𝒯̃'s spine and the requested sides.
#[derive(Clone, Debug)]
pub struct SpineRun {
    /// (X̃_i, d̃⁺_i) for i = 0..=I
    pub spine: Vec<(LatticePoint, u32)>,
    pub witness: Option<Witness>,
    /// Expected past hits in the unexplored part (a bound on P(hit there)).
    pub missed_past: f64,
    /// Cloud points visited by the explored future, with repetition.
    pub future_visits: Vec<LatticePoint>,
    /// Bound on the expected visits of pruned future vertices.
    pub missed_future: f64,
    pub explored: u64,
    pub cut_radius: f64,
}

struct Grower<'a> {
    dist: &'a OffspringDistribution,
    kernels: &'a Kernels,
    cloud: &'a Cloud,
    prune_at: f64,
    guard: usize,
    explored: u64,
    stack: Vec<(LatticePoint, u32)>,
}

impl Grower<'_> {
    /// Grow `k` subtrees hanging at x. Stops at the first hit when
    /// `first_hit`, otherwise records every visit. Returns the first hit
    /// and the bound for the pruned part.
    fn grow<R: Rng + ?Sized>(
        &mut self,
        x: LatticePoint,
        k: u32,
        first_hit: bool,
        visits: &mut Vec<LatticePoint>,
        rng: &mut R,
    ) -> Result<(Option<LatticePoint>, f64)> {
        let mass = self.cloud.total as f64;
        let rho = self.cloud.rho;
        if k == 0 {
            return Ok((None, 0.0));
        }
        let r = x.norm();
        if r >= self.prune_at {
            return Ok((None, k as f64 * mass * self.kernels.g_beyond(r - rho)));
        }
        let dim = self.kernels.dim;
        let mut missed = 0.0;
        self.stack.clear();
        self.stack.push((x, k));
        while let Some(top) = self.stack.last_mut() {
            if top.1 == 0 {
                self.stack.pop();
                continue;
            }
            top.1 -= 1;
            let c = top.0.step(random_step(rng, dim))?;
            let kc = self.dist.sample(rng) as u32;
            self.explored += 1;
            if self.explored as usize > self.guard {
                return Err(Error::ResourceGuard {
                    what: "explored tree vertices".into(),
                    limit: self.guard as u64,
                    generated: self.explored,
                });
            }
            if self.cloud.hits(c) {
                if first_hit {
                    return Ok((Some(c), missed));
                }
                visits.push(c);
            }
            if kc == 0 {
                continue;
            }
            let rc = c.norm();
            if rc >= self.prune_at {
                missed += kc as f64 * mass * self.kernels.g_beyond(rc - rho);
            } else {
                self.stack.push((c, kc));
            }
        }
        Ok((None, missed))
    }
}

/// Follow 𝒯̃ out from the origin along its spine until the spine is far
/// from the cloud, growing the hanging subtrees each side asks for. The past
/// is u_1, u_2, ... with their left-side subtrees; the future is the root,
/// its subtrees and the right-side subtrees of u_1, u_2, ...
pub fn explore_tilde<R: Rng + ?Sized>(
    dist: &OffspringDistribution,
    kernels: &Kernels,
    cloud: &Cloud,
    trunc: &Truncation,
    sides: Sides,
    rng: &mut R,
) -> Result<SpineRun> {
    let dim = kernels.dim;
    let mass = cloud.total as f64;
    let cut = match trunc.r_cut {
        Some(r) => r.max(cloud.rho + 1.0),
        None => cloud.rho + kernels.cut_distance(mass, trunc.spine_tol),
    };
    let mut grower = Grower {
        dist,
        kernels,
        cloud,
        prune_at: cloud.rho + kernels.prune_distance(mass, trunc.prune_tol),
        guard: trunc.vertex_guard,
        explored: 0,
        stack: Vec::new(),
    };
    let d0 = dist.sample(rng) as u32;
    let mut spine = vec![(LatticePoint::ORIGIN, d0)];
    let mut run = SpineRun {
        spine: Vec::new(),
        witness: None,
        missed_past: 0.0,
        future_visits: Vec::new(),
        missed_future: 0.0,
        explored: 0,
        cut_radius: cut,
    };
    let mut future = sides.future;
    if future {
        if cloud.hits(LatticePoint::ORIGIN) {
            run.future_visits.push(LatticePoint::ORIGIN);
        }
        let (_, m) = grower.grow(LatticePoint::ORIGIN, d0, false, &mut run.future_visits, rng)?;
        run.missed_future += m;
    }
    let mut past = sides.past;
    let mut x = LatticePoint::ORIGIN;
    let mut rank = 0u32;
    loop {
        rank += 1;
        x = x.step(random_step(rng, dim))?;
        let (dp, dm) = dist.sample_spine_pair(rng);
        spine.push((x, dp as u32));
        if past {
            grower.explored += 1;
            let hit = if cloud.hits(x) {
                Some((x, true))
            } else {
                let (h, m) = grower.grow(x, dm as u32, true, &mut Vec::new(), rng)?;
                run.missed_past += m;
                h.map(|p| (p, false))
            };
            if let Some((p, on_spine)) = hit {
                run.witness = Some(Witness {
                    spine_rank: rank,
                    on_spine,
                    point: p,
                });
                past = false;
                // the future only matters while the past is clean
                if sides.past {
                    future = false;
                }
            }
        }
        if future {
            let (_, m) = grower.grow(x, dp as u32, false, &mut run.future_visits, rng)?;
            run.missed_future += m;
        }
        if x.norm() >= cut {
            break;
        }
        if rank as usize > trunc.vertex_guard {
            return Err(Error::ResourceGuard {
                what: "spine steps".into(),
                limit: trunc.vertex_guard as u64,
                generated: rank as u64,
            });
        }
    }
    if past {
        // everything past rank I: spine vertices give g, their left sides (σ²/2)(g⋆g − 2g)
        let (a, b, e) = cloud.g_gg_sum(kernels, x);
        let h = kernels.sigma_sq / 2.0;
        run.missed_past += ((1.0 - kernels.sigma_sq) * a + h * b).max(0.0) + (1.0 + kernels.sigma_sq) * e;
    }
    run.explored = grower.explored;
    run.spine = spine;
    Ok(run)
}

/// U_n over the explored spine plus the expected rest, and an error bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UParts {
    /// root term plus Σ_{i ≤ I} d̃⁺_i Σ_k [g(𝒯_k − X̃_i) − 1{𝒯_k = X̃_i}]
    pub head: f64,
    /// E[Σ_{i > I} ... | X̃_I] = (σ²/2) Σ_k (g⋆g − 2g)(𝒯_k − X̃_I)
    pub tail: f64,
    /// table error carried by head and tail
    pub error: f64,
}

impl UParts {
    pub fn value(&self) -> f64 {
        self.head + self.tail
    }
}

pub fn u_parts(kernels: &Kernels, cloud: &Cloud, spine: &[(LatticePoint, u32)]) -> UParts {
    let mut head = cloud.count(LatticePoint::ORIGIN) as f64;
    let mut error = 0.0;
    for &(x, dp) in spine {
        if dp == 0 {
            continue;
        }
        let (s, e) = cloud.g_sum(kernels, x);
        head += dp as f64 * (s - cloud.count(x) as f64);
        error += dp as f64 * e;
    }
    let (tail, terr) = match spine.last() {
        Some(&(x, _)) if spine.len() > 1 => {
            let (a, b, e) = cloud.g_gg_sum(kernels, x);
            let d = cloud.count(x) as f64;
            (kernels.sigma_sq / 2.0 * (b - 2.0 * a + d), kernels.sigma_sq / 2.0 * 2.0 * e)
        }
        _ => (0.0, 0.0),
    };
    UParts {
        head,
        tail,
        error: error + terr,
    }
}

/// ℒ_n = Σ_k ℒ⁺(𝒯_k) counted on the explored future.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LParts {
    pub count: u64,
    /// bound on the expected visits of pruned future subtrees
    pub missed: f64,
    /// expected visits of the future beyond the spine cut
    pub tail: f64,
}

/// Window kind for 𝒯.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PairHorizon {
    /// [−n, n]
    Fixed(u64),
    /// [−ξ^ℓ, ξ^r] with Geom₀(1 − 1/n) lengths
    Geometric(f64),
}

/// What a replica needs computed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairNeeds {
    pub a: bool,
    pub u: bool,
    /// ℒ_n from the explored future (only kept when 𝒜 holds)
    pub l: bool,
    /// Only compute what survives multiplication by 1_𝒜 1_ℬ: skip the
    /// past when ℬ fails and U when 𝒜 fails.
    pub on_event: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntersectionFunctionals {
    /// 𝒜 on the explored past (exact 𝒜 implies it)
    pub a_holds: bool,
    pub b_holds: bool,
    /// Window length ξ^ℓ + ξ^r + 1 (number of 𝒯 points)
    pub window_len: u64,
    pub u: Option<UParts>,
    pub l: Option<LParts>,
    /// G_n = Σ_j G(𝒮_j)
    pub g_sum: f64,
    /// Expected hits missed by the truncated past, a bound on P(𝒜 ≠ explored 𝒜).
    pub truncation_bias_bracket: f64,
    pub witness: Option<Witness>,
    pub explored: u64,
    pub spine_len: u32,
}

/// One draw of (𝒯 window, 𝒯̃) and the functionals of the magic formula.
pub fn simulate_pair<R: Rng + ?Sized>(
    dist: &OffspringDistribution,
    kernels: &Kernels,
    horizon: PairHorizon,
    needs: PairNeeds,
    trunc: &Truncation,
    rng: &mut R,
) -> Result<IntersectionFunctionals> {
    let h = match horizon {
        PairHorizon::Fixed(n) => Horizon::Window { left: n, right: n },
        PairHorizon::Geometric(n) => Horizon::Geometric { n },
    };
    let slice = sample_slice_guarded(dist, rng, h, DEFAULT_VERTEX_GUARD)?;
    let brw = label_walk(&slice, kernels.dim, rng)?;
    let (lo, hi) = slice.window();
    let b_holds = brw.visits(LatticePoint::ORIGIN).iter().all(|&z| z <= 0);
    let cloud = Cloud::new((lo..=hi).map(|z| brw.label(&slice, z).unwrap()));
    let g_sum: f64 = cloud
        .points
        .iter()
        .map(|&(y, c)| c as f64 * kernels.tree_green(y))
        .sum();
    let mut out = IntersectionFunctionals {
        a_holds: true,
        b_holds,
        window_len: cloud.total,
        u: None,
        l: None,
        g_sum,
        truncation_bias_bracket: 0.0,
        witness: None,
        explored: 0,
        spine_len: 0,
    };
    if (needs.on_event && !b_holds) || !(needs.a || needs.u || needs.l) {
        return Ok(out);
    }
    let sides = Sides {
        past: needs.a,
        future: needs.l,
    };
    let run = explore_tilde(dist, kernels, &cloud, trunc, sides, rng)?;
    out.a_holds = run.witness.is_none();
    out.witness = run.witness;
    out.truncation_bias_bracket = run.missed_past;
    out.explored = run.explored;
    out.spine_len = run.spine.len() as u32;
    if (needs.u || needs.l) && !(needs.on_event && !out.a_holds) {
        let u = u_parts(kernels, &cloud, &run.spine);
        if needs.l && out.a_holds {
            let count: u64 = run.future_visits.iter().map(|&p| cloud.count(p) as u64).sum();
            out.l = Some(LParts {
                count,
                missed: run.missed_future,
                tail: u.tail,
            });
        }
        if needs.u && !(needs.on_event && !out.a_holds) {
            out.u = Some(u);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use std::sync::OnceLock;

    pub(crate) fn small_kernels() -> &'static Kernels {
        static K: OnceLock<Kernels> = OnceLock::new();
        K.get_or_init(|| Kernels::build(8, 8, 2.0).unwrap())
    }

    #[test]
    fn cloud_counts_and_radius() {
        let a = LatticePoint::from_coords(&[3, 4]).unwrap();
        let c = Cloud::new([LatticePoint::ORIGIN, a, a]);
        assert_eq!(c.distinct(), 2);
        assert_eq!(c.total, 3);
        assert_eq!(c.count(a), 2);
        assert!((c.rho - 5.0).abs() < 1e-12);
        let s = c.shifted(a);
        assert_eq!(s.count(LatticePoint::ORIGIN), 2);
    }

    #[test]
    fn tree_green_at_origin_exceeds_one() {
        let k = small_kernels();
        let g0 = k.tree_green(LatticePoint::ORIGIN);
        assert!(g0 > 1.0 && g0 < 2.0, "{g0}");
    }

    #[test]
    fn root_only_window() {
        let k = small_kernels();
        let mut rng = stream(3);
        let dist = OffspringDistribution::geometric();
        let needs = PairNeeds {
            a: true,
            u: true,
            l: false,
            on_event: false,
        };
        let f = simulate_pair(&dist, k, PairHorizon::Fixed(0), needs, &Truncation::default(), &mut rng).unwrap();
        assert!(f.b_holds);
        assert_eq!(f.window_len, 1);
        let u = f.u.unwrap();
        assert!(u.head >= 1.0);
    }

    #[test]
    fn witness_lies_in_the_window() {
        let k = small_kernels();
        let dist = OffspringDistribution::binary();
        let needs = PairNeeds {
            a: true,
            u: false,
            l: false,
            on_event: false,
        };
        let mut seen = 0;
        for s in 0..200 {
            let mut rng = stream(100 + s);
            let f = simulate_pair(&dist, k, PairHorizon::Fixed(20), needs, &Truncation::default(), &mut rng).unwrap();
            if let Some(w) = f.witness {
                assert!(!f.a_holds);
                assert!(w.spine_rank >= 1);
                seen += 1;
            }
        }
        assert!(seen > 10);
    }
}
