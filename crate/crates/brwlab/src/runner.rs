//! Run configuration, hashing and result files.
//!
//! Config files are either JSON (first non-blank character `{`) or plain
//! `key = value` lines. In the plain form `#` starts a comment, lists are
//! comma separated, and the offspring law is `mu = geometric` (or `binary`,
//! `poisson`) or `mu = table:0:0.25,1:0.5,2:0.25`. Unknown keys are errors.
//!
//! Keys: experiment, dim, mu, n (list), replicas, seed, threads,
//! table_radius, tables_dir, spine_tol, prune_tol, r_cut, vertex_guard,
//! variant, inner, sites, trees, with_l, mean_replicas, points, out_dir.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::experiments::{Context, ExperimentRegistry, ExperimentResult, McSettings, Truncation};
use crate::offspring::OffspringSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: String,
    pub dim: usize,
    pub mu: OffspringSpec,
    pub n: Vec<f64>,
    pub replicas: u64,
    pub seed: u64,
    pub threads: Option<usize>,
    pub table_radius: usize,
    pub tables_dir: Option<PathBuf>,
    pub spine_tol: f64,
    pub prune_tol: f64,
    pub r_cut: Option<f64>,
    pub vertex_guard: usize,
    /// non-intersection variant
    pub variant: String,
    /// inner replicas per site for branching capacity
    pub inner: u64,
    /// sites sampled per set for branching capacity (all when absent)
    pub sites: Option<usize>,
    /// independent tree samples for the capacity scaling study
    pub trees: u64,
    pub with_l: bool,
    /// replicas for the G_n-based mean of U_n (defaults to 20 × replicas)
    pub mean_replicas: Option<u64>,
    /// explicit point set for branching capacity
    pub points: Option<Vec<Vec<i32>>>,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = Truncation::default();
        RunConfig {
            experiment: String::new(),
            dim: 8,
            mu: OffspringSpec::named("geometric"),
            n: Vec::new(),
            replicas: 1000,
            seed: 1,
            threads: None,
            table_radius: 12,
            tables_dir: None,
            spine_tol: t.spine_tol,
            prune_tol: t.prune_tol,
            r_cut: t.r_cut,
            vertex_guard: t.vertex_guard,
            variant: "with-nozero".into(),
            inner: 1,
            sites: None,
            trees: 8,
            with_l: false,
            mean_replicas: None,
            points: None,
            out_dir: None,
        }
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(|t| t.trim())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<T>().map_err(|_| Error::Config(format!("{key}: cannot parse {t:?}"))))
        .collect()
}

fn parse_one<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse::<T>()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

/// "geometric" or "table:k:p,k:p,..."
pub fn parse_mu(v: &str) -> Result<OffspringSpec> {
    let v = v.trim();
    match v.strip_prefix("table:") {
        Some(rest) => {
            let mut entries = Vec::new();
            for item in rest.split(',') {
                let (k, p) = item
                    .split_once(':')
                    .ok_or_else(|| Error::Config(format!("mu table entry {item:?} is not k:p")))?;
                entries.push((parse_one::<u32>("mu", k)?, parse_one::<f64>("mu", p)?));
            }
            Ok(OffspringSpec::table(&entries))
        }
        None => Ok(OffspringSpec::named(v)),
    }
}

/// Dyadic grid 2^a, ..., 2^b written as "2^a..2^b".
fn parse_grid(v: &str) -> Result<Vec<f64>> {
    if let Some((a, b)) = v.split_once("..") {
        let exp = |s: &str| -> Result<i32> {
            let s = s.trim();
            let e = s
                .strip_prefix("2^")
                .ok_or_else(|| Error::Config(format!("grid end {s:?} must look like 2^k")))?;
            parse_one("n", e)
        };
        let (a, b) = (exp(a)?, exp(b)?);
        if a > b || b > 40 {
            return Err(Error::Config(format!("bad grid {v:?}")));
        }
        return Ok((a..=b).map(|k| 2f64.powi(k)).collect());
    }
    parse_list("n", v)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            return serde_json::from_str(text).map_err(|e| Error::Config(format!("config json: {e}")));
        }
        let mut c = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            c.set(k.trim(), v.trim())?;
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Set one key from its text form (also used for command-line overrides).
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "experiment" => self.experiment = v.to_string(),
            "dim" => self.dim = parse_one(key, v)?,
            "mu" => self.mu = parse_mu(v)?,
            "n" => self.n = parse_grid(v)?,
            "replicas" => self.replicas = parse_one(key, v)?,
            "seed" => self.seed = parse_one(key, v)?,
            "threads" => self.threads = Some(parse_one(key, v)?),
            "table_radius" => self.table_radius = parse_one(key, v)?,
            "tables_dir" => self.tables_dir = Some(PathBuf::from(v)),
            "spine_tol" => self.spine_tol = parse_one(key, v)?,
            "prune_tol" => self.prune_tol = parse_one(key, v)?,
            "r_cut" => self.r_cut = Some(parse_one(key, v)?),
            "vertex_guard" => self.vertex_guard = parse_one(key, v)?,
            "variant" => self.variant = v.to_string(),
            "inner" => self.inner = parse_one(key, v)?,
            "sites" => self.sites = Some(parse_one(key, v)?),
            "trees" => self.trees = parse_one(key, v)?,
            "with_l" => self.with_l = parse_one(key, v)?,
            "mean_replicas" => self.mean_replicas = Some(parse_one(key, v)?),
            "points" => {
                // "0,0;1,0;2,1"
                let pts = v
                    .split(';')
                    .filter(|p| !p.trim().is_empty())
                    .map(|p| parse_list::<i32>(key, p))
                    .collect::<Result<Vec<_>>>()?;
                self.points = Some(pts);
            }
            "out_dir" => self.out_dir = Some(PathBuf::from(v)),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicas == 0 {
            return Err(Error::Config("replicas must be positive".into()));
        }
        if self.dim == 0 || self.dim > crate::lattice::MAX_DIM {
            return Err(Error::Config(format!("dim must be in 1..={}", crate::lattice::MAX_DIM)));
        }
        if self.n.iter().any(|&n| !(n >= 1.0 && n.is_finite())) {
            return Err(Error::Config("every n must be ≥ 1".into()));
        }
        if !(self.spine_tol > 0.0 && self.prune_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        Ok(())
    }

    pub fn truncation(&self) -> Truncation {
        Truncation {
            spine_tol: self.spine_tol,
            prune_tol: self.prune_tol,
            r_cut: self.r_cut,
            vertex_guard: self.vertex_guard,
        }
    }

    pub fn settings(&self) -> McSettings {
        McSettings {
            replicas: self.replicas,
            seed: self.seed,
            trunc: self.truncation(),
            config_hash: self.hash(),
        }
    }

    /// SHA-256 over the canonical JSON of everything that affects results
    /// (so not the seed, thread count or paths). Keys are sorted, which
    /// makes the hash independent of the order they were given in.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let serde_json::Value::Object(m) = &mut v {
            for k in ["seed", "threads", "out_dir", "tables_dir"] {
                m.remove(k);
            }
        }
        let canon = canonical_json(&v);
        let digest = Sha256::digest(canon.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

fn canonical_json(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::Object(m) => {
            let sorted: BTreeMap<&String, String> = m.iter().map(|(k, v)| (k, canonical_json(v))).collect();
            let body: Vec<String> = sorted
                .iter()
                .map(|(k, v)| format!("{}:{v}", serde_json::to_string(k).unwrap()))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        serde_json::Value::Array(a) => {
            format!("[{}]", a.iter().map(canonical_json).collect::<Vec<_>>().join(","))
        }
        other => other.to_string(),
    }
}

/// One JSON object per line; no wall time, so reruns match byte for byte.
pub fn jsonl_line(r: &ExperimentResult) -> String {
    serde_json::to_string(r).expect("result serializes")
}

pub const CSV_HEADER: &str = "name,n,replicas,seed,estimate,stderr,bias_bracket,wall_time";

pub fn csv_line(r: &ExperimentResult) -> String {
    let name = if r.name.contains(',') || r.name.contains('"') {
        format!("\"{}\"", r.name.replace('"', "\"\""))
    } else {
        r.name.clone()
    };
    format!(
        "{name},{},{},{},{:e},{:e},{:e},{:.3}",
        r.n, r.replicas, r.seed, r.estimate, r.stderr, r.bias_bracket, r.wall_time
    )
}

/// Append results to `results.jsonl` and `summary.csv` in `dir`.
pub fn append_results(dir: &Path, results: &[ExperimentResult]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut j = OpenOptions::new().create(true).append(true).open(dir.join("results.jsonl"))?;
    for r in results {
        writeln!(j, "{}", jsonl_line(r))?;
    }
    let csv_path = dir.join("summary.csv");
    let fresh = !csv_path.exists();
    let mut c = OpenOptions::new().create(true).append(true).open(&csv_path)?;
    if fresh {
        writeln!(c, "{CSV_HEADER}")?;
    }
    for r in results {
        writeln!(c, "{}", csv_line(r))?;
    }
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<ExperimentResult>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Format(format!("{}: {e}", path.display()))))
        .collect()
}

/// Plot-ready series from a results file: one `x,y,yerr` CSV per series.
/// Returns (file name, contents) pairs.
pub fn plot_series(results: &[ExperimentResult]) -> Vec<(String, String)> {
    let mut series: BTreeMap<String, Vec<(f64, f64, f64)>> = BTreeMap::new();
    for r in results {
        let ln = r.n.ln();
        if let Some(name) = r.name.strip_prefix("prob-") {
            series
                .entry(format!("logn_p_{name}.csv"))
                .or_default()
                .push((r.n, ln * r.estimate, ln * (r.stderr + r.bias_bracket)));
        } else if r.name == "un-mean" || r.name == "un-mean-rb" {
            series
                .entry(format!("{}_vs_logn.csv", r.name.replace('-', "_")))
                .or_default()
                .push((ln, r.estimate, r.stderr + r.bias_bracket));
        } else if r.name == "bcap-scaling" {
            series
                .entry("bcap_scaling.csv".to_string())
                .or_default()
                .push((r.n, r.estimate, r.stderr + r.bias_bracket));
        }
    }
    series
        .into_iter()
        .map(|(file, mut pts)| {
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut s = String::from("x,y,yerr\n");
            for (x, y, e) in pts {
                s.push_str(&format!("{x},{y:e},{e:e}\n"));
            }
            (file, s)
        })
        .collect()
}

/// Results of one run and the experiment's acceptance verdict.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub results: Vec<ExperimentResult>,
    pub gate: Option<bool>,
}

/// Thread count: `BRWLAB_THREADS` wins over the config, which wins over
/// rayon's default.
pub fn thread_count(cfg: &RunConfig) -> Result<Option<usize>> {
    match std::env::var("BRWLAB_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(t) if t > 0 => Ok(Some(t)),
            _ => Err(Error::Config(format!("BRWLAB_THREADS must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(cfg.threads),
    }
}

/// Validate, run the named experiment on its own thread pool, stamp wall
/// times and write results to `out_dir` when one is set.
pub fn run_config(cfg: &RunConfig, registry: &ExperimentRegistry, ctx: &mut Context) -> Result<RunOutcome> {
    cfg.validate()?;
    let exp = registry.get(&cfg.experiment)?;
    let mut cfg = cfg.clone();
    if cfg.n.is_empty() {
        cfg.n = exp.default_n();
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = thread_count(&cfg)? {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let start = std::time::Instant::now();
    let mut results = pool.install(|| exp.run(&cfg, ctx))?;
    let wall = start.elapsed().as_secs_f64();
    for r in &mut results {
        r.wall_time = wall;
    }
    if let Some(dir) = &cfg.out_dir {
        append_results(dir, &results)?;
    }
    let gate = exp.gate(&cfg, &results);
    Ok(RunOutcome { results, gate })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_and_json_agree() {
        let plain = "experiment = verify-magic\n# comment\nn = 50, 200\nreplicas = 10\nmu = binary\n";
        let a = RunConfig::parse(plain).unwrap();
        let json = r#"{"experiment":"verify-magic","n":[50,200],"replicas":10,"mu":{"kind":"binary","table":null}}"#;
        let b = RunConfig::parse(json).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn hash_ignores_order_seed_and_paths() {
        let a = RunConfig::parse("n = 8\nreplicas = 5\nseed = 1").unwrap();
        let b = RunConfig::parse("seed = 2\nout_dir = /tmp/x\nreplicas = 5\nn = 8").unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig::parse("n = 8\nreplicas = 6").unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn dyadic_grid() {
        let c = RunConfig::parse("n = 2^8..2^10").unwrap();
        assert_eq!(c.n, vec![256.0, 512.0, 1024.0]);
    }

    #[test]
    fn bad_input_is_a_config_error() {
        assert!(matches!(RunConfig::parse("bogus = 1"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("replicas = -3"), Err(Error::Config(_))));
        assert!(RunConfig::parse("replicas = 0").unwrap().validate().is_err());
        assert!(RunConfig::parse("{\"bogus\": 1}").is_err());
    }

    #[test]
    fn table_mu() {
        let c = RunConfig::parse("mu = table:0:0.25,1:0.5,2:0.25").unwrap();
        assert_eq!(c.mu, OffspringSpec::table(&[(0, 0.25), (1, 0.5), (2, 0.25)]));
    }
}
