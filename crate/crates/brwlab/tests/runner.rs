//! Run configuration, result files and reproducibility of whole runs.

use brwlab::experiments::{Context, ExperimentRegistry};
use brwlab::runner::{read_jsonl, run_config, thread_count, RunConfig};
use brwlab::Error;
use proptest::prelude::*;

/// Held by every test that reads or writes `BRWLAB_THREADS`.
static ENV: std::sync::Mutex<()> = std::sync::Mutex::new(());

const KEYS: [(&str, &str); 6] = [
    ("experiment", "estimate-prob"),
    ("n", "16, 32"),
    ("replicas", "40"),
    ("mu", "binary"),
    ("variant", "geometric"),
    ("table_radius", "6"),
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hash_does_not_depend_on_key_order(order in Just((0..KEYS.len()).collect::<Vec<_>>()).prop_shuffle(), seed in any::<u64>(), threads in 1usize..64) {
        let text: String = order.iter().map(|&i| format!("{} = {}\n", KEYS[i].0, KEYS[i].1)).collect();
        let a = RunConfig::parse(&text).unwrap();
        let reference: String = KEYS.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        let mut b = RunConfig::parse(&reference).unwrap();
        b.set("seed", &seed.to_string()).unwrap();
        b.set("threads", &threads.to_string()).unwrap();
        b.set("out_dir", "/somewhere/else").unwrap();
        prop_assert_eq!(a.hash(), b.hash());
    }
}

#[test]
fn unknown_keys_and_bad_values_are_config_errors() {
    for text in ["nonsense = 3", "replicas = many", "n = 0", "replicas = 0", "dim = 99", "just text"] {
        let r = RunConfig::parse(text).and_then(|c| c.validate());
        assert!(matches!(r, Err(Error::Config(_))), "{text}: {r:?}");
    }
}

fn small_run(dir: &std::path::Path) -> RunConfig {
    let mut cfg = RunConfig::parse(&KEYS.iter().map(|(k, v)| format!("{k} = {v}\n")).collect::<String>()).unwrap();
    cfg.out_dir = Some(dir.to_path_buf());
    cfg
}

#[test]
fn reruns_write_identical_result_lines() {
    let _env = ENV.lock().unwrap_or_else(|e| e.into_inner());
    let registry = ExperimentRegistry::standard();
    let mut ctx = Context::default();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut ca = small_run(a.path());
    ca.threads = Some(1);
    let mut cb = small_run(b.path());
    cb.threads = Some(3);
    let ra = run_config(&ca, &registry, &mut ctx).unwrap();
    run_config(&cb, &registry, &mut ctx).unwrap();
    let ja = std::fs::read(a.path().join("results.jsonl")).unwrap();
    let jb = std::fs::read(b.path().join("results.jsonl")).unwrap();
    assert!(!ja.is_empty());
    assert_eq!(ja, jb);

    let back = read_jsonl(&a.path().join("results.jsonl")).unwrap();
    assert_eq!(back.len(), ra.results.len());
    for (x, y) in back.iter().zip(&ra.results) {
        assert_eq!((&x.name, x.n, x.estimate, x.stderr, &x.config_hash), (&y.name, y.n, y.estimate, y.stderr, &y.config_hash));
        assert_eq!(x.config_hash, ca.hash());
    }
    let csv = std::fs::read_to_string(a.path().join("summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), ra.results.len() + 1);
}

#[test]
fn unknown_experiment_is_rejected() {
    let cfg = RunConfig {
        experiment: "no-such-thing".into(),
        ..RunConfig::default()
    };
    let r = run_config(&cfg, &ExperimentRegistry::standard(), &mut Context::default());
    assert!(matches!(r, Err(Error::Config(_))));
}

#[test]
fn thread_variable_overrides_the_config() {
    let _env = ENV.lock().unwrap_or_else(|e| e.into_inner());
    let cfg = RunConfig {
        threads: Some(2),
        ..RunConfig::default()
    };
    std::env::remove_var("BRWLAB_THREADS");
    assert_eq!(thread_count(&cfg).unwrap(), Some(2));
    std::env::set_var("BRWLAB_THREADS", "5");
    assert_eq!(thread_count(&cfg).unwrap(), Some(5));
    for bad in ["0", "lots", ""] {
        std::env::set_var("BRWLAB_THREADS", bad);
        assert!(matches!(thread_count(&cfg), Err(Error::Config(_))));
    }
    std::env::remove_var("BRWLAB_THREADS");
}
