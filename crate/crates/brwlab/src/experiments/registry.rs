//! Named Monte Carlo experiments behind one trait, so the runner and the
//! command line dispatch on a string and new studies plug in by registering.

use std::collections::HashMap;
use std::path::Path;

use super::estimators::{
    bcap_scaling, estimate_bcap, estimate_nonintersection, estimate_un_moments, tree_green_mc, verify_magic_formula,
    ExperimentResult, Variant,
};
use super::Kernels;
use crate::error::{Error, Result};
use crate::greens::{build_tables, GreensTable, TableKind};
use crate::lattice::LatticePoint;
use crate::offspring::{OffspringDistribution, OffspringFamilies};
use crate::runner::RunConfig;
use crate::stats::spread_ratio;

/// Shared state for one run: the offspring families and a cache of the g
/// and g⋆g tables, optionally persisted in `tables_dir`.
pub struct Context {
    families: OffspringFamilies,
    tables: HashMap<(usize, usize), (GreensTable, GreensTable)>,
}

impl Default for Context {
    fn default() -> Self {
        Context {
            families: OffspringFamilies::standard(),
            tables: HashMap::new(),
        }
    }
}

impl Context {
    pub fn distribution(&self, cfg: &RunConfig) -> Result<OffspringDistribution> {
        self.families.make(&cfg.mu)
    }

    /// Kernels for the configured dimension and table radius. Tables are
    /// read from `tables_dir` when present there and written back after a
    /// fresh build.
    pub fn kernels(&mut self, cfg: &RunConfig, sigma_sq: f64) -> Result<Kernels> {
        let key = (cfg.dim, cfg.table_radius);
        if !self.tables.contains_key(&key) {
            let pair = match &cfg.tables_dir {
                Some(dir) => load_or_build(dir, cfg.dim, cfg.table_radius)?,
                None => build_pair(cfg.dim, cfg.table_radius)?,
            };
            self.tables.insert(key, pair);
        }
        let (g, gg) = &self.tables[&key];
        Kernels::from_tables(g.clone(), gg.clone(), sigma_sq)
    }
}

fn build_pair(dim: usize, radius: usize) -> Result<(GreensTable, GreensTable)> {
    let mut t = build_tables(dim, radius, &[TableKind::Green, TableKind::GreenSq], None)?;
    let gg = t.pop().expect("two tables");
    let g = t.pop().expect("two tables");
    Ok((g, gg))
}

fn load_or_build(dir: &Path, dim: usize, radius: usize) -> Result<(GreensTable, GreensTable)> {
    let gp = dir.join(format!("g_d{dim}_r{radius}.bin"));
    let ggp = dir.join(format!("gg_d{dim}_r{radius}.bin"));
    if gp.exists() && ggp.exists() {
        return Ok((GreensTable::load(&gp)?, GreensTable::load(&ggp)?));
    }
    let (g, gg) = build_pair(dim, radius)?;
    std::fs::create_dir_all(dir)?;
    g.save(&gp)?;
    gg.save(&ggp)?;
    Ok((g, gg))
}

pub trait Experiment: Send + Sync {
    fn name(&self) -> &'static str;
    fn describe(&self) -> &'static str;
    /// n grid used when the config leaves `n` empty
    fn default_n(&self) -> Vec<f64>;
    fn run(&self, cfg: &RunConfig, ctx: &mut Context) -> Result<Vec<ExperimentResult>>;
    /// Acceptance verdict on the results, or None if the experiment only reports.
    fn gate(&self, cfg: &RunConfig, results: &[ExperimentResult]) -> Option<bool>;
}

fn dyadic(a: u32, b: u32) -> Vec<f64> {
    (a..=b).map(|k| (1u64 << k) as f64).collect()
}

fn grid(e: &dyn Experiment, cfg: &RunConfig) -> Vec<f64> {
    if cfg.n.is_empty() {
        e.default_n()
    } else {
        cfg.n.clone()
    }
}

fn as_u64(n: f64) -> Result<u64> {
    if n.fract() != 0.0 {
        return Err(Error::Config(format!("n = {n} must be an integer here")));
    }
    Ok(n as u64)
}

fn rows<'a>(results: &'a [ExperimentResult], name: &'a str) -> impl Iterator<Item = &'a ExperimentResult> + 'a {
    results.iter().filter(move |r| r.name == name)
}

pub struct MagicFormula;

impl Experiment for MagicFormula {
    fn name(&self) -> &'static str {
        "verify-magic"
    }
    fn describe(&self) -> &'static str {
        "E[1_A 1_B U_n] against 1 over geometric windows"
    }
    fn default_n(&self) -> Vec<f64> {
        vec![50.0, 200.0]
    }
    fn run(&self, cfg: &RunConfig, ctx: &mut Context) -> Result<Vec<ExperimentResult>> {
        let dist = ctx.distribution(cfg)?;
        let k = ctx.kernels(cfg, dist.sigma_sq())?;
        let s = cfg.settings();
        let mut out = Vec::new();
        for n in grid(self, cfg) {
            out.extend(verify_magic_formula(&dist, &k, n, cfg.with_l, &s)?);
        }
        Ok(out)
    }
    fn gate(&self, _: &RunConfig, results: &[ExperimentResult]) -> Option<bool> {
        Some(rows(results, "magic-u").all(|r| r.covers(1.0, 4.0)))
    }
}

pub struct NonIntersection;

/// max/min of (log n)·P̂ over the rows of one variant
pub fn log_n_p_ratio(results: &[ExperimentResult], variant: &str) -> Option<f64> {
    let v: Vec<f64> = rows(results, &format!("prob-{variant}"))
        .map(|r| r.extra.get("log_n_p").copied().unwrap_or(f64::NAN))
        .collect();
    (v.len() >= 2).then(|| spread_ratio(&v))
}

fn containment_ok(results: &[ExperimentResult]) -> bool {
    results
        .iter()
        .filter_map(|r| r.extra.get("containment_violations"))
        .all(|&v| v == 0.0)
}

impl Experiment for NonIntersection {
    fn name(&self) -> &'static str {
        "estimate-prob"
    }
    fn describe(&self) -> &'static str {
        "non-intersection probabilities and the (log n)·P series"
    }
    fn default_n(&self) -> Vec<f64> {
        dyadic(8, 13)
    }
    fn run(&self, cfg: &RunConfig, ctx: &mut Context) -> Result<Vec<ExperimentResult>> {
        let variant = Variant::parse(&cfg.variant)?;
        let dist = ctx.distribution(cfg)?;
        let k = ctx.kernels(cfg, dist.sigma_sq())?;
        let s = cfg.settings();
        let mut out = Vec::new();
        for n in grid(self, cfg) {
            out.extend(estimate_nonintersection(&dist, &k, variant, as_u64(n)?, &s)?);
        }
        Ok(out)
    }
    fn gate(&self, cfg: &RunConfig, results: &[ExperimentResult]) -> Option<bool> {
        let trend = log_n_p_ratio(results, &cfg.variant).is_none_or(|r| r < 3.0);
        Some(trend && containment_ok(results))
    }
}

pub struct UnMoments;

fn un_gate(results: &[ExperimentResult]) -> bool {
    let slope = rows(results, "un-slope").all(|r| r.extra.get("t_stat").is_some_and(|&t| t > 5.0));
    let var = rows(results, "un-var-ratio").all(|r| r.estimate < 10.0);
    slope && var
}

impl Experiment for UnMoments {
    fn name(&self) -> &'static str {
        "estimate-un"
    }
    fn describe(&self) -> &'static str {
        "mean and variance of U_n against log n"
    }
    fn default_n(&self) -> Vec<f64> {
        dyadic(8, 13)
    }
    fn run(&self, cfg: &RunConfig, ctx: &mut Context) -> Result<Vec<ExperimentResult>> {
        let dist = ctx.distribution(cfg)?;
        let k = ctx.kernels(cfg, dist.sigma_sq())?;
        let mean_replicas = cfg.mean_replicas.unwrap_or(cfg.replicas.saturating_mul(20));
        estimate_un_moments(&dist, &k, &grid(self, cfg), mean_replicas, &cfg.settings())
    }
    fn gate(&self, _: &RunConfig, results: &[ExperimentResult]) -> Option<bool> {
        Some(un_gate(results))
    }
}

pub struct BranchingCapacity;

impl Experiment for BranchingCapacity {
    fn name(&self) -> &'static str {
        "estimate-bcap"
    }
    fn describe(&self) -> &'static str {
        "branching capacity of a point set, or (log n/n)·BCap of tree ranges"
    }
    fn default_n(&self) -> Vec<f64> {
        dyadic(10, 13)
    }
    fn run(&self, cfg: &RunConfig, ctx: &mut Context) -> Result<Vec<ExperimentResult>> {
        let dist = ctx.distribution(cfg)?;
        let k = ctx.kernels(cfg, dist.sigma_sq())?;
        let s = cfg.settings();
        if let Some(points) = &cfg.points {
            let set: Vec<LatticePoint> =
                points.iter().map(|p| LatticePoint::from_coords(p)).collect::<Result<_>>()?;
            return Ok(vec![estimate_bcap(&dist, &k, &set, cfg.inner, cfg.sites, "bcap-set", &s)?]);
        }
        let mut out = Vec::new();
        for n in grid(self, cfg) {
            out.push(bcap_scaling(&dist, &k, as_u64(n)?, cfg.trees, cfg.inner, cfg.sites, &s)?);
        }
        Ok(out)
    }
    fn gate(&self, cfg: &RunConfig, results: &[ExperimentResult]) -> Option<bool> {
        if cfg.points.is_some() {
            return None;
        }
        let v: Vec<f64> = rows(results, "bcap-scaling").map(|r| r.estimate).collect();
        Some(v.len() < 2 || spread_ratio(&v) < 2.0)
    }
}

/// Non-intersection and U_n over one grid, plus the product P̂·Ê[U_n],
/// which the magic formula says should stay of order one as n grows.
pub struct ScalingStudy;

impl Experiment for ScalingStudy {
    fn name(&self) -> &'static str {
        "scaling-study"
    }
    fn describe(&self) -> &'static str {
        "non-intersection and U_n side by side with their product"
    }
    fn default_n(&self) -> Vec<f64> {
        dyadic(8, 13)
    }
    fn run(&self, cfg: &RunConfig, ctx: &mut Context) -> Result<Vec<ExperimentResult>> {
        let mut cfg = cfg.clone();
        cfg.n = grid(self, &cfg);
        let mut out = NonIntersection.run(&cfg, ctx)?;
        let un = UnMoments.run(&cfg, ctx)?;
        for &n in &cfg.n {
            let p = out.iter().find(|r| r.name == format!("prob-{}", cfg.variant) && r.n == n);
            let u = un.iter().find(|r| r.name == "un-mean-rb" && r.n == n);
            if let (Some(p), Some(u)) = (p, u) {
                let mut r = ExperimentResult::new("p-times-un", n, &cfg.settings());
                r.estimate = p.estimate * u.estimate;
                r.stderr = ((p.stderr * u.estimate).powi(2) + (u.stderr * p.estimate).powi(2)).sqrt();
                r.bias_bracket = p.bias_bracket * u.estimate + u.bias_bracket * p.estimate;
                out.push(r);
            }
        }
        out.extend(un);
        Ok(out)
    }
    fn gate(&self, cfg: &RunConfig, results: &[ExperimentResult]) -> Option<bool> {
        Some(NonIntersection.gate(cfg, results)? && un_gate(results))
    }
}

pub struct TreeGreen;

/// default points: the origin and the first few shells
pub const TREE_GREEN_POINTS: [&[i32]; 8] = [&[0], &[1], &[1, 1], &[2], &[1, 1, 1], &[2, 1], &[1, 1, 1, 1], &[3]];

impl Experiment for TreeGreen {
    fn name(&self) -> &'static str {
        "tree-green"
    }
    fn describe(&self) -> &'static str {
        "expected future visits G(z) by direct simulation against the table"
    }
    fn default_n(&self) -> Vec<f64> {
        Vec::new()
    }
    fn run(&self, cfg: &RunConfig, ctx: &mut Context) -> Result<Vec<ExperimentResult>> {
        let dist = ctx.distribution(cfg)?;
        let k = ctx.kernels(cfg, dist.sigma_sq())?;
        let points: Vec<Vec<i32>> = match &cfg.points {
            Some(p) => p.clone(),
            None => TREE_GREEN_POINTS.iter().map(|p| p.to_vec()).collect(),
        };
        tree_green_mc(&dist, &k, &points, &cfg.settings())
    }
    fn gate(&self, _: &RunConfig, results: &[ExperimentResult]) -> Option<bool> {
        Some(results.iter().all(|r| r.extra.get("table").is_some_and(|&t| r.covers(t, 4.0))))
    }
}

pub struct ExperimentRegistry {
    entries: Vec<Box<dyn Experiment>>,
}

impl ExperimentRegistry {
    pub fn empty() -> Self {
        ExperimentRegistry { entries: Vec::new() }
    }

    pub fn standard() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(MagicFormula));
        r.register(Box::new(NonIntersection));
        r.register(Box::new(UnMoments));
        r.register(Box::new(BranchingCapacity));
        r.register(Box::new(ScalingStudy));
        r.register(Box::new(TreeGreen));
        r
    }

    /// Later registrations replace earlier ones of the same name.
    pub fn register(&mut self, e: Box<dyn Experiment>) {
        self.entries.retain(|x| x.name() != e.name());
        self.entries.push(e);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name()).collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn Experiment> {
        self.entries
            .iter()
            .find(|e| e.name() == name)
            .map(|e| e.as_ref())
            .ok_or_else(|| Error::Config(format!("unknown experiment {name:?}; known: {}", self.names().join(", "))))
    }
}
