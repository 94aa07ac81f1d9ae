//! Estimators for the magic formula, U_n moments, non-intersection
//! probabilities, branching capacity and the tree Green function.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{explore_tilde, simulate_pair, Cloud, Kernels, PairHorizon, PairNeeds, Sides, Truncation};
use crate::error::{Error, Result};
use crate::greens::orbit_size;
use crate::lattice::{label_walk, LatticePoint, Occupied};
use crate::mc::{map_replicas, replicate};
use crate::offspring::OffspringDistribution;
use crate::rng::{replica_stream, Stream};
use crate::stats::{fit_line, spread_ratio, Moments};
use crate::tree::{sample_slice, Horizon};

/// One line of output. `wall_time` is kept out of the JSON form so that
/// reruns give identical bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub name: String,
    pub n: f64,
    pub replicas: u64,
    pub seed: u64,
    pub estimate: f64,
    pub stderr: f64,
    pub bias_bracket: f64,
    #[serde(skip)]
    pub wall_time: f64,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, f64>,
}

impl ExperimentResult {
    pub fn new(name: &str, n: f64, s: &McSettings) -> Self {
        ExperimentResult {
            name: name.to_string(),
            n,
            replicas: s.replicas,
            seed: s.seed,
            estimate: 0.0,
            stderr: 0.0,
            bias_bracket: 0.0,
            wall_time: 0.0,
            config_hash: s.config_hash.clone(),
            extra: BTreeMap::new(),
        }
    }

    fn with(mut self, estimate: f64, stderr: f64, bias_bracket: f64) -> Self {
        self.estimate = estimate;
        self.stderr = stderr;
        self.bias_bracket = bias_bracket;
        self
    }

    fn note(mut self, key: &str, v: f64) -> Self {
        self.extra.insert(key.to_string(), v);
        self
    }

    /// |estimate − target| ≤ k·stderr + bias_bracket
    pub fn covers(&self, target: f64, k: f64) -> bool {
        (self.estimate - target).abs() <= k * self.stderr + self.bias_bracket
    }
}

/// Replica count, master seed and truncation shared by the estimators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    pub replicas: u64,
    pub seed: u64,
    pub trunc: Truncation,
    pub config_hash: String,
}

impl McSettings {
    pub fn new(replicas: u64, seed: u64) -> Self {
        McSettings {
            replicas,
            seed,
            trunc: Truncation::default(),
            config_hash: String::new(),
        }
    }
}

/// Accumulator that also remembers the first failure.
struct Acc<const K: usize> {
    m: [Moments; K],
    failure: Option<Error>,
}

impl<const K: usize> Acc<K> {
    fn new() -> Self {
        Acc {
            m: [Moments::default(); K],
            failure: None,
        }
    }

    fn merge(&mut self, other: Acc<K>) {
        for (a, b) in self.m.iter_mut().zip(&other.m) {
            a.merge(b);
        }
        if self.failure.is_none() {
            self.failure = other.failure;
        }
    }

    fn finish(self) -> Result<[Moments; K]> {
        match self.failure {
            Some(e) => Err(e),
            None => Ok(self.m),
        }
    }
}

/// Run `f` per replica and collect K running moments.
fn run_moments<const K: usize, F>(seed: u64, tag: &str, n: u64, f: F) -> Result<[Moments; K]>
where
    F: Fn(&mut Stream) -> Result<[f64; K]> + Sync + Send,
{
    replicate(
        seed,
        tag,
        n,
        Acc::<K>::new,
        |acc, _, rng| {
            if acc.failure.is_some() {
                return;
            }
            match f(rng) {
                Ok(v) => {
                    for (m, x) in acc.m.iter_mut().zip(v) {
                        m.push(x);
                    }
                }
                Err(e) => acc.failure = Some(e),
            }
        },
        |a, b| a.merge(b),
    )
    .finish()
}

fn check_replicas(s: &McSettings) -> Result<()> {
    if s.replicas == 0 {
        return Err(Error::Config("replicas must be positive".into()));
    }
    Ok(())
}

fn check_n(n: f64) -> Result<()> {
    if !(n >= 1.0 && n.is_finite()) {
        return Err(Error::Config(format!("n must be ≥ 1, got {n}")));
    }
    Ok(())
}

/// E[1_𝒜 1_ℬ U_n] with geometric windows at scale n, which should be 1.
/// The result's bracket bounds the bias of the truncated past and of the
/// tables; it passes when the estimate covers 1 at 4 stderr plus bracket.
/// With `with_l` a second result does the same for ℒ_n (reported, not gated).
pub fn verify_magic_formula(
    dist: &OffspringDistribution,
    kernels: &Kernels,
    n: f64,
    with_l: bool,
    s: &McSettings,
) -> Result<Vec<ExperimentResult>> {
    check_n(n)?;
    check_replicas(s)?;
    let needs = PairNeeds {
        a: true,
        u: true,
        l: with_l,
        on_event: true,
    };
    let tag = format!("magic:{}:{n}", dist.kind());
    let [y, br, ab, yl, brl] = run_moments::<5, _>(s.seed, &tag, s.replicas, |rng| {
        let f = simulate_pair(dist, kernels, PairHorizon::Geometric(n), needs, &s.trunc, rng)?;
        if !(f.a_holds && f.b_holds) {
            return Ok([0.0; 5]);
        }
        let u = f.u.expect("U computed on the event");
        let h = f.truncation_bias_bracket;
        let bracket = u.head.abs() * h + u.tail.abs() + u.error;
        let (lv, lb) = match f.l {
            Some(l) => {
                let c = l.count as f64;
                (c + l.tail, c * h + 2.0 * l.missed + l.tail.abs() + u.error)
            }
            None => (0.0, 0.0),
        };
        Ok([u.value(), bracket, 1.0, lv, lb])
    })?;
    let mut out = Vec::new();
    let r = ExperimentResult::new("magic-u", n, s)
        .with(y.mean(), y.stderr(), br.mean())
        .note("p_ab", ab.mean());
    let pass = r.covers(1.0, 4.0);
    out.push(r.note("pass", pass as u8 as f64));
    if with_l {
        let r = ExperimentResult::new("magic-l", n, s).with(yl.mean(), yl.stderr(), brl.mean());
        let pass = r.covers(1.0, 4.0);
        out.push(r.note("pass", pass as u8 as f64));
    }
    Ok(out)
}

/// Moments of U_n at each n. Rows per n: `un-mean` and `un-var` from
/// direct samples of U_n, and `un-mean-rb` from `mean_replicas` samples of
/// G_n = E[U_n | 𝒯, 𝒮], which has the same mean and costs only one table
/// lookup per window point. Two summary rows follow: `un-slope`, the
/// weighted fit of the G_n-based means against log n (extra: t statistic,
/// and the same fit on the direct means), and `un-var-ratio`, max/min of
/// Var̂[U_n]/log n.
pub fn estimate_un_moments(
    dist: &OffspringDistribution,
    kernels: &Kernels,
    ns: &[f64],
    mean_replicas: u64,
    s: &McSettings,
) -> Result<Vec<ExperimentResult>> {
    check_replicas(s)?;
    if mean_replicas == 0 {
        return Err(Error::Config("mean_replicas must be positive".into()));
    }
    let needs = PairNeeds {
        a: false,
        u: true,
        l: false,
        on_event: false,
    };
    let window_only = PairNeeds {
        a: false,
        u: false,
        l: false,
        on_event: false,
    };
    let mut out = Vec::new();
    let mut xs = Vec::new();
    let (mut rb, mut rb_w, mut direct, mut direct_w, mut ratios) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for &n in ns {
        check_n(n)?;
        let tag = format!("un:{}:{n}", dist.kind());
        let [u, err, uerr] = run_moments::<3, _>(s.seed, &tag, s.replicas, |rng| {
            let f = simulate_pair(dist, kernels, PairHorizon::Geometric(n), needs, &s.trunc, rng)?;
            let u = f.u.expect("U requested");
            Ok([u.value(), u.error, u.value().abs() * u.error])
        })?;
        let rb_tag = format!("un-rb:{}:{n}", dist.kind());
        let [g] = run_moments::<1, _>(s.seed, &rb_tag, mean_replicas, |rng| {
            let f = simulate_pair(dist, kernels, PairHorizon::Geometric(n), window_only, &s.trunc, rng)?;
            Ok([f.g_sum])
        })?;
        let g_err = kernels.g.truncation_error + kernels.gg.truncation_error;
        let m = ExperimentResult::new("un-mean", n, s).with(u.mean(), u.stderr(), err.mean());
        let v = ExperimentResult::new("un-var", n, s).with(u.variance(), u.variance_stderr(), 2.0 * uerr.mean());
        let mut gm = ExperimentResult::new("un-mean-rb", n, s).with(g.mean(), g.stderr(), 0.0);
        gm.replicas = mean_replicas;
        // every G lookup carries at most the table errors
        let window_mean = if n > 1.0 { 2.0 * (n - 1.0) + 1.0 } else { 1.0 };
        gm.bias_bracket = g_err * kernels.sigma_sq.max(1.0) * window_mean;
        let ln = n.ln();
        xs.push(ln);
        rb.push(g.mean());
        rb_w.push(1.0 / (g.stderr() * g.stderr()).max(1e-300));
        direct.push(u.mean());
        direct_w.push(1.0 / (u.stderr() * u.stderr()).max(1e-300));
        ratios.push(u.variance() / ln.max(f64::MIN_POSITIVE));
        out.extend([m, v, gm]);
    }
    if ns.len() >= 2 {
        let fit = fit_line(&xs, &rb, Some(&rb_w));
        let fit_direct = fit_line(&xs, &direct, Some(&direct_w));
        let nmax = ns.iter().cloned().fold(0.0, f64::max);
        out.push(
            ExperimentResult::new("un-slope", nmax, s)
                .with(fit.slope, fit.slope_stderr, 0.0)
                .note("t_stat", fit.t_stat())
                .note("intercept", fit.intercept)
                .note("slope_direct", fit_direct.slope)
                .note("t_stat_direct", fit_direct.t_stat()),
        );
        out.push(ExperimentResult::new("un-var-ratio", nmax, s).with(spread_ratio(&ratios), 0.0, 0.0));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// 𝒜 ∩ ℬ over [−n, n]
    WithNoZero,
    /// 𝒜 over [−n, n]
    Plain,
    /// 𝒜 ∩ ℬ over geometric windows
    Geometric,
    /// 𝒯̃[−n, 0) instead of the whole past, over [−n, n]
    FinitePast,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::WithNoZero => "with-nozero",
            Variant::Plain => "plain",
            Variant::Geometric => "geometric",
            Variant::FinitePast => "finite-past",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "with-nozero" => Variant::WithNoZero,
            "plain" => Variant::Plain,
            "geometric" => Variant::Geometric,
            "finite-past" => Variant::FinitePast,
            _ => return Err(Error::Config(format!("unknown variant {s:?}"))),
        })
    }
}

/// Non-intersection probability at n. `Plain` and `WithNoZero` are always
/// produced together from the same replicas; the extra field
/// `containment_violations` counts replicas where the smaller event held and
/// the larger did not.
pub fn estimate_nonintersection(
    dist: &OffspringDistribution,
    kernels: &Kernels,
    variant: Variant,
    n: u64,
    s: &McSettings,
) -> Result<Vec<ExperimentResult>> {
    check_replicas(s)?;
    check_n(n as f64)?;
    let ln = (n as f64).ln();
    let named = |name: &str, m: &Moments, br: f64| {
        ExperimentResult::new(&format!("prob-{name}"), n as f64, s)
            .with(m.mean(), m.stderr(), br)
            .note("log_n_p", ln * m.mean())
    };
    match variant {
        Variant::Plain | Variant::WithNoZero => {
            let needs = PairNeeds {
                a: true,
                u: false,
                l: false,
                on_event: false,
            };
            let tag = format!("prob:{}:{n}", dist.kind());
            let [plain, nozero, bp, bn, viol] = run_moments::<5, _>(s.seed, &tag, s.replicas, |rng| {
                let f = simulate_pair(dist, kernels, PairHorizon::Fixed(n), needs, &s.trunc, rng)?;
                let a = f.a_holds as u8 as f64;
                let ab = (f.a_holds && f.b_holds) as u8 as f64;
                let h = f.truncation_bias_bracket.min(1.0);
                Ok([a, ab, a * h, ab * h, (ab > a) as u8 as f64])
            })?;
            let v = viol.mean() * viol.count() as f64;
            Ok(vec![
                named("plain", &plain, bp.mean()).note("containment_violations", v),
                named("with-nozero", &nozero, bn.mean()).note("containment_violations", v),
            ])
        }
        Variant::Geometric => {
            let needs = PairNeeds {
                a: true,
                u: false,
                l: false,
                on_event: true,
            };
            let tag = format!("prob-geo:{}:{n}", dist.kind());
            let [p, b] = run_moments::<2, _>(s.seed, &tag, s.replicas, |rng| {
                let f = simulate_pair(dist, kernels, PairHorizon::Geometric(n as f64), needs, &s.trunc, rng)?;
                let ab = (f.a_holds && f.b_holds) as u8 as f64;
                Ok([ab, ab * f.truncation_bias_bracket.min(1.0)])
            })?;
            Ok(vec![named("geometric", &p, b.mean())])
        }
        Variant::FinitePast => {
            let tag = format!("prob-fp:{}:{n}", dist.kind());
            let dim = kernels.dim;
            let [p] = run_moments::<1, _>(s.seed, &tag, s.replicas, |rng| {
                let t = sample_slice(dist, rng, Horizon::Window { left: n, right: n })?;
                let tb = label_walk(&t, dim, rng)?;
                let tt = sample_slice(dist, rng, Horizon::Window { left: n, right: 0 })?;
                let ttb = label_walk(&tt, dim, rng)?;
                let (lo, _) = tt.window();
                let hit = (lo..0).any(|z| tb.occupancy.hits(ttb.label(&tt, z).unwrap()));
                Ok([(!hit) as u8 as f64])
            })?;
            Ok(vec![named("finite-past", &p, 0.0)])
        }
    }
}

/// Escape estimate for one site: P[(x + 𝒯̃(−∞,0)) ∩ A = ∅] with A given
/// relative to x.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Escape {
    pub p: f64,
    /// variance of the estimate p
    pub var: f64,
    pub bracket: f64,
}

pub fn escape_probability<R: Rng + ?Sized>(
    dist: &OffspringDistribution,
    kernels: &Kernels,
    rel: &Cloud,
    m: u64,
    trunc: &Truncation,
    rng: &mut R,
) -> Result<Escape> {
    let sides = Sides {
        past: true,
        future: false,
    };
    let mut mo = Moments::default();
    let mut br = 0.0;
    for _ in 0..m {
        let run = explore_tilde(dist, kernels, rel, trunc, sides, rng)?;
        let esc = run.witness.is_none() as u8 as f64;
        mo.push(esc);
        br += esc * run.missed_past.min(1.0);
    }
    let p = mo.mean();
    // a Bernoulli mean: use p(1−p)/m, which stays positive when m is 1
    let var = (p * (1.0 - p)).max(mo.variance()) / m as f64;
    Ok(Escape {
        p,
        var,
        bracket: br / m as f64,
    })
}

/// BCap(A) = Σ_{x∈A} P[(x + 𝒯̃(−∞,0)) ∩ A = ∅]. With `sample` below |A|,
/// that many distinct sites are drawn without replacement and the sum is
/// reweighted by |A|/k; the stderr then covers both sampling stages.
pub fn estimate_bcap(
    dist: &OffspringDistribution,
    kernels: &Kernels,
    set: &[LatticePoint],
    m: u64,
    sample: Option<usize>,
    tag: &str,
    s: &McSettings,
) -> Result<ExperimentResult> {
    if set.is_empty() {
        return Err(Error::Config("branching capacity of an empty set".into()));
    }
    if m == 0 {
        return Err(Error::Config("inner replicas must be positive".into()));
    }
    let cloud = Cloud::new(set.iter().copied());
    let sites: Vec<LatticePoint> = cloud.points.iter().map(|p| p.0).collect();
    let big_n = sites.len();
    let k = sample.unwrap_or(big_n).clamp(1, big_n);
    let chosen: Vec<LatticePoint> = if k < big_n {
        let mut rng = replica_stream(s.seed, &format!("{tag}:subsample"), 0);
        let mut idx = rand::seq::index::sample(&mut rng, big_n, k).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| sites[i]).collect()
    } else {
        sites
    };
    let unit = Cloud::new(cloud.points.iter().map(|p| p.0));
    let per_site = map_replicas(s.seed, &format!("bcap:{tag}"), chosen.len() as u64, |i, rng| {
        let rel = unit.shifted(chosen[i as usize]);
        escape_probability(dist, kernels, &rel, m, &s.trunc, rng)
    });
    let per_site: Vec<Escape> = per_site.into_iter().collect::<Result<_>>()?;
    let w = big_n as f64 / k as f64;
    let mut between = Moments::default();
    let (mut sum, mut inner_var, mut bracket) = (0.0, 0.0, 0.0);
    for e in &per_site {
        sum += e.p;
        inner_var += e.var;
        bracket += e.bracket;
        between.push(e.p);
    }
    let f = k as f64 / big_n as f64;
    let var = if k < big_n {
        (big_n as f64).powi(2) * (1.0 - f) * between.variance() / k as f64 + w * w * inner_var
    } else {
        inner_var
    };
    let mut r = ExperimentResult::new("bcap", big_n as f64, s).with(w * sum, var.sqrt(), w * bracket);
    r.replicas = m;
    Ok(r.note("sites", k as f64).note("set_size", big_n as f64))
}

/// (log n / n)·BCap(𝒯[0,n]) over independent tree samples: the row's
/// estimate is the mean over trees, `spread` is the relative standard
/// deviation across trees.
pub fn bcap_scaling(
    dist: &OffspringDistribution,
    kernels: &Kernels,
    n: u64,
    trees: u64,
    m: u64,
    sample: Option<usize>,
    s: &McSettings,
) -> Result<ExperimentResult> {
    check_n(n as f64)?;
    if trees == 0 {
        return Err(Error::Config("need at least one tree sample".into()));
    }
    let scale = (n as f64).ln() / n as f64;
    let mut vals = Moments::default();
    let mut inner = 0.0;
    let mut bracket = 0.0;
    for t in 0..trees {
        let mut rng = replica_stream(s.seed, &format!("bcap-tree:{}:{n}", dist.kind()), t);
        let slice = sample_slice(dist, &mut rng, Horizon::Window { left: 0, right: n })?;
        let brw = label_walk(&slice, kernels.dim, &mut rng)?;
        let range = brw.range_points(&slice, 0, n as i64);
        let r = estimate_bcap(dist, kernels, &range, m, sample, &format!("{}:{n}:{t}", dist.kind()), s)?;
        vals.push(scale * r.estimate);
        inner += (scale * r.stderr).powi(2);
        bracket += scale * r.bias_bracket;
    }
    let tn = trees as f64;
    let spread = if vals.mean() > 0.0 {
        vals.variance().sqrt() / vals.mean()
    } else {
        f64::NAN
    };
    // between-tree scatter already contains the inner noise; fall back to it for one tree
    let se = if trees > 1 { vals.stderr() } else { inner.sqrt() };
    let mut r = ExperimentResult::new("bcap-scaling", n as f64, s).with(vals.mean(), se, bracket / tn);
    r.replicas = trees;
    Ok(r.note("spread", spread)
        .note("inner_stderr", (inner / (tn * tn)).sqrt())
        .note("inner_replicas", m as f64))
}

/// All sign changes and coordinate permutations of a point in Z^dim.
pub fn orbit(coords: &[i32], dim: usize) -> Result<Vec<LatticePoint>> {
    if coords.len() > dim {
        return Err(Error::Config("point has more coordinates than the dimension".into()));
    }
    let mut abs: Vec<i32> = coords.iter().map(|c| c.abs()).collect();
    abs.resize(dim, 0);
    abs.sort_unstable();
    let mut out = Vec::new();
    let mut cur = vec![0i32; dim];
    let mut used = vec![false; dim];
    fn place(
        pos: usize,
        abs: &[i32],
        used: &mut [bool],
        cur: &mut [i32],
        out: &mut Vec<LatticePoint>,
    ) -> Result<()> {
        if pos == abs.len() {
            out.push(LatticePoint::from_coords(cur)?);
            return Ok(());
        }
        let mut last = None;
        for i in 0..abs.len() {
            if used[i] || last == Some(abs[i]) {
                continue;
            }
            last = Some(abs[i]);
            used[i] = true;
            let signs: &[i32] = if abs[i] == 0 { &[1] } else { &[1, -1] };
            for &sg in signs {
                cur[pos] = sg * abs[i];
                place(pos + 1, abs, used, cur, out)?;
            }
            used[i] = false;
        }
        Ok(())
    }
    place(0, &abs, &mut used, &mut cur, &mut out)?;
    Ok(out)
}

/// Direct Monte Carlo of G(z) = Σ_{k≥0} P(𝒯_k = z) by counting visits of
/// the future of a two-sided tree, averaged over the symmetry orbit of each
/// z. One row per point; the bracket bounds the unexplored future.
pub fn tree_green_mc(
    dist: &OffspringDistribution,
    kernels: &Kernels,
    points: &[Vec<i32>],
    s: &McSettings,
) -> Result<Vec<ExperimentResult>> {
    check_replicas(s)?;
    let dim = kernels.dim;
    let orbits: Vec<Vec<LatticePoint>> = points.iter().map(|p| orbit(p, dim)).collect::<Result<_>>()?;
    let cloud = Cloud::new(orbits.iter().flatten().copied());
    let owner: rustc_hash::FxHashMap<LatticePoint, usize> = orbits
        .iter()
        .enumerate()
        .flat_map(|(i, o)| o.iter().map(move |p| (*p, i)))
        .collect();
    let sizes: Vec<f64> = orbits.iter().map(|o| o.len() as f64).collect();
    let sides = Sides {
        past: false,
        future: true,
    };
    let k = points.len();
    let h = kernels.sigma_sq / 2.0;
    let acc = replicate(
        s.seed,
        &format!("tree-green:{}", dist.kind()),
        s.replicas,
        || (vec![Moments::default(); k], Moments::default(), None::<Error>),
        |acc, _, rng| {
            if acc.2.is_some() {
                return;
            }
            match explore_tilde(dist, kernels, &cloud, &s.trunc, sides, rng) {
                Ok(run) => {
                    let mut counts = vec![0.0; k];
                    for p in &run.future_visits {
                        counts[owner[p]] += 1.0;
                    }
                    for i in 0..k {
                        acc.0[i].push(counts[i] / sizes[i]);
                    }
                    // beyond the cut, each point gets at most (σ²/2) sup g⋆g
                    let tail = h * kernels.gg_beyond(run.cut_radius - cloud.rho);
                    acc.1.push(run.missed_future + tail);
                }
                Err(e) => acc.2 = Some(e),
            }
        },
        |a, b| {
            for (x, y) in a.0.iter_mut().zip(&b.0) {
                x.merge(y);
            }
            a.1.merge(&b.1);
            if a.2.is_none() {
                a.2 = b.2;
            }
        },
    );
    if let Some(e) = acc.2 {
        return Err(e);
    }
    let bracket = acc.1.mean();
    Ok(points
        .iter()
        .zip(&acc.0)
        .map(|(p, m)| {
            let x = LatticePoint::from_coords(p).expect("orbit built");
            let mut canon: Vec<u16> = p.iter().map(|c| c.unsigned_abs() as u16).collect();
            canon.resize(dim, 0);
            canon.sort_unstable();
            ExperimentResult::new(&format!("tree-green {p:?}"), 0.0, s)
                .with(m.mean(), m.stderr(), bracket)
                .note("table", kernels.tree_green(x))
                .note("orbit", orbit_size(&canon) as f64)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::tests::small_kernels;

    #[test]
    fn orbit_sizes_match_the_formula() {
        for p in [vec![0], vec![1], vec![1, 1], vec![2, 1], vec![1, 1, 1, 1], vec![3, 2, 2]] {
            let o = orbit(&p, 8).unwrap();
            let mut c: Vec<u16> = p.iter().map(|&v| v as u16).collect();
            c.resize(8, 0);
            c.sort_unstable();
            assert_eq!(o.len() as u64, orbit_size(&c), "{p:?}");
            let set: std::collections::HashSet<_> = o.iter().collect();
            assert_eq!(set.len(), o.len());
        }
    }

    #[test]
    fn zero_replicas_is_a_config_error() {
        let k = small_kernels();
        let d = OffspringDistribution::geometric();
        let s = McSettings::new(0, 1);
        assert!(matches!(verify_magic_formula(&d, k, 10.0, false, &s), Err(Error::Config(_))));
        assert!(matches!(
            estimate_nonintersection(&d, k, Variant::Plain, 8, &s),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn empty_set_has_no_capacity() {
        let k = small_kernels();
        let d = OffspringDistribution::geometric();
        let s = McSettings::new(1, 1);
        assert!(estimate_bcap(&d, k, &[], 1, None, "t", &s).is_err());
    }

    #[test]
    fn magic_formula_at_tiny_n() {
        let k = small_kernels();
        let d = OffspringDistribution::geometric();
        let s = McSettings::new(20_000, 5);
        let r = verify_magic_formula(&d, k, 1.0, true, &s).unwrap();
        assert!(r[0].covers(1.0, 4.0), "{:?}", r[0]);
        assert!(r[1].covers(1.0, 4.0), "{:?}", r[1]);
    }
}
