//! Command line front end for brwlab.
//!
//! Exit codes: 0 success, 1 failed acceptance gate (with --gate), 2 invalid
//! configuration, 3 resource guard, 4 anything else.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use brwlab::experiments::{Context, ExperimentRegistry, ExperimentResult};
use brwlab::greens::{build_G_table, build_Gg_table, build_tables, GreensTable, TableKind};
use brwlab::offspring::OffspringFamilies;
use brwlab::runner::{self, RunConfig};
use brwlab::theta::{verify_one_sum, verify_two_sum, Equation, IdentityBudget, IdentityReport, TestFunction};
use brwlab::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "brwlab", version, about = "Branching random walk experiments on Z^d")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a Green table and write it as binary (or CSV with --csv)
    GreensTable(TableArgs),
    /// Check the generating-function identities and write a JSON report
    VerifyIdentities(IdentityArgs),
    /// E[1_A 1_B U_n] against 1
    VerifyMagic(ExpArgs),
    /// Non-intersection probabilities
    EstimateProb(ExpArgs),
    /// Branching capacity of a set or of tree ranges
    EstimateBcap(ExpArgs),
    /// Moments of U_n
    EstimateUn(ExpArgs),
    /// Non-intersection and U_n over one grid
    ScalingStudy(ExpArgs),
    /// Run whatever experiment the config names
    Run(ExpArgs),
    /// Plot-ready CSV series from a results file
    Report(ReportArgs),
}

#[derive(Args)]
struct TableArgs {
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long, default_value_t = 12)]
    radius: usize,
    /// g, gg, ggg, G, Gg or g_alpha
    #[arg(long, default_value = "g")]
    kind: String,
    /// offspring variance, for G and Gg
    #[arg(long)]
    sigma_sq: Option<f64>,
    /// killing rate, for g_alpha
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// write CSV instead of the binary format
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct IdentityArgs {
    #[arg(long, default_value = "geometric")]
    mu: String,
    #[arg(long, default_value_t = 0.75)]
    lambda: f64,
    /// comma separated identities (default: all)
    #[arg(long)]
    which: Option<String>,
    /// comma separated test functions: 1, origin, or a point like "1;0;0;0;0;0;0;0"
    #[arg(long, default_value = "1,origin")]
    h: String,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    /// Monte Carlo trees for the two-sum identities
    #[arg(long, default_value_t = 100_000)]
    mc_trees: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
    #[arg(long)]
    gate: bool,
}

#[derive(Args)]
struct ExpArgs {
    /// config file (key = value lines, or JSON)
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// n grid, e.g. "50,200" or "2^8..2^13"
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    replicas: Option<u64>,
    #[arg(long)]
    mu: Option<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// exit 1 when the acceptance check fails
    #[arg(long)]
    gate: bool,
    /// any other config key, as key=value (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// results.jsonl written by an experiment
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 2,
                Error::ResourceGuard { .. } => 3,
                _ => 4,
            })
        }
    }
}

/// Ok(false) means a gate was requested and failed.
fn dispatch(cmd: Cmd) -> brwlab::Result<bool> {
    match cmd {
        Cmd::GreensTable(a) => greens_table(a).map(|_| true),
        Cmd::VerifyIdentities(a) => verify_identities(a),
        Cmd::VerifyMagic(a) => experiment(Some("verify-magic"), a),
        Cmd::EstimateProb(a) => experiment(Some("estimate-prob"), a),
        Cmd::EstimateBcap(a) => experiment(Some("estimate-bcap"), a),
        Cmd::EstimateUn(a) => experiment(Some("estimate-un"), a),
        Cmd::ScalingStudy(a) => experiment(Some("scaling-study"), a),
        Cmd::Run(a) => experiment(None, a),
        Cmd::Report(a) => report(a).map(|_| true),
    }
}

fn greens_table(a: TableArgs) -> brwlab::Result<()> {
    let kind = TableKind::parse(&a.kind)?;
    let need_sigma = || {
        a.sigma_sq
            .ok_or_else(|| Error::Config(format!("--sigma-sq is required for kind {}", a.kind)))
    };
    let table: GreensTable = match kind {
        TableKind::TreeGreen => {
            let s = need_sigma()?;
            let t = build_tables(a.dim, a.radius, &[TableKind::Green, TableKind::GreenSq], None)?;
            build_G_table(&t[0], &t[1], s)?
        }
        TableKind::TreeGreenConv => {
            let s = need_sigma()?;
            let kinds = [TableKind::Green, TableKind::GreenSq, TableKind::GreenCube];
            let t = build_tables(a.dim, a.radius, &kinds, None)?;
            build_Gg_table(&t[0], &t[1], &t[2], s)?
        }
        TableKind::Killed => {
            let alpha = a.alpha.ok_or_else(|| Error::Config("--alpha is required for g_alpha".into()))?;
            build_tables(a.dim, a.radius, &[kind], Some(alpha))?.remove(0)
        }
        TableKind::Convolution => return Err(Error::Config("conv tables come from convolve, not a build".into())),
        _ => build_tables(a.dim, a.radius, &[kind], None)?.remove(0),
    };
    if a.csv {
        std::fs::write(&a.out, table.to_csv())?;
    } else {
        table.save(&a.out)?;
    }
    println!(
        "{} table, d = {}, radius {}: value at origin {:.12}, truncation error {:.2e} -> {}",
        kind.name(),
        table.dim,
        table.radius,
        table.values[0],
        table.truncation_error,
        a.out.display()
    );
    Ok(())
}

fn verify_identities(a: IdentityArgs) -> brwlab::Result<bool> {
    let dist = OffspringFamilies::standard().make(&runner::parse_mu(&a.mu)?)?;
    if !(a.lambda > 0.0 && a.lambda < 1.0) {
        return Err(Error::Config("lambda must lie in (0, 1)".into()));
    }
    let equations: Vec<Equation> = match &a.which {
        Some(w) => w.split(',').map(|s| Equation::parse(s.trim())).collect::<brwlab::Result<_>>()?,
        None => Equation::ALL.to_vec(),
    };
    let hs: Vec<TestFunction> = a
        .h
        .split(',')
        .map(|s| TestFunction::parse(&s.trim().replace(';', ","), a.dim))
        .collect::<brwlab::Result<_>>()?;
    let budget = IdentityBudget {
        dim: a.dim,
        mc_trees: a.mc_trees,
        seed: a.seed,
        ..IdentityBudget::default()
    };
    let mut reports: Vec<IdentityReport> = Vec::new();
    for &eq in &equations {
        for h in &hs {
            let r = if eq.is_two_sum() {
                verify_two_sum(&dist, a.lambda, eq, h, h, &budget)?
            } else {
                verify_one_sum(&dist, a.lambda, eq, h, &budget)?
            };
            println!(
                "{:<12} h = {:<18} lhs {:.10} ± {:.1e}  rhs {:.10} ± {:.1e}  {}",
                r.equation,
                r.h1,
                r.lhs,
                r.lhs_bracket,
                r.rhs,
                r.rhs_bracket,
                if r.pass { "pass" } else { "FAIL" }
            );
            reports.push(r);
        }
    }
    let text = serde_json::to_string_pretty(&reports).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(&a.out, text + "\n")?;
    Ok(!a.gate || reports.iter().all(|r| r.pass))
}

fn build_config(fixed: Option<&str>, a: &ExpArgs) -> brwlab::Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for kv in &a.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects key=value, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(name) = fixed {
        cfg.experiment = name.to_string();
    }
    if cfg.experiment.is_empty() {
        return Err(Error::Config("no experiment named (config key `experiment`)".into()));
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = &a.n {
        cfg.set("n", n)?;
    }
    if let Some(r) = a.replicas {
        cfg.replicas = r;
    }
    if let Some(mu) = &a.mu {
        cfg.set("mu", mu)?;
    }
    if let Some(d) = &a.out_dir {
        cfg.out_dir = Some(d.clone());
    }
    Ok(cfg)
}

fn experiment(fixed: Option<&str>, a: ExpArgs) -> brwlab::Result<bool> {
    let cfg = build_config(fixed, &a)?;
    let registry = ExperimentRegistry::standard();
    let outcome = runner::run_config(&cfg, &registry, &mut Context::default())?;
    print_summary(&cfg, &outcome.results);
    match outcome.gate {
        Some(ok) => {
            println!("gate: {}", if ok { "pass" } else { "FAIL" });
            Ok(!a.gate || ok)
        }
        None => Ok(true),
    }
}

fn print_summary(cfg: &RunConfig, results: &[ExperimentResult]) {
    println!("{} (config {}, seed {})", cfg.experiment, cfg.settings().config_hash, cfg.seed);
    for r in results {
        let extra: Vec<String> = r.extra.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
        println!(
            "  {:<24} n = {:<8} {:>12.6} ± {:<10.3e} bracket {:<10.3e} {}",
            r.name,
            r.n,
            r.estimate,
            r.stderr,
            r.bias_bracket,
            extra.join(" ")
        );
    }
    if let Some(dir) = &cfg.out_dir {
        println!("results appended to {}", dir.display());
    }
}

fn report(a: ReportArgs) -> brwlab::Result<()> {
    let results = runner::read_jsonl(&a.input)?;
    std::fs::create_dir_all(&a.out_dir)?;
    let series = runner::plot_series(&results);
    if series.is_empty() {
        println!("no plottable series in {}", a.input.display());
    }
    for (file, body) in series {
        let path: PathBuf = Path::new(&a.out_dir).join(&file);
        std::fs::write(&path, body)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
