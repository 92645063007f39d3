//! End-to-end runs of the `ulab` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ulab_cli::report::sha256_hex;
use ulab_core::gowers::inductive_work;

fn ulab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ulab"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove("ULAB_SIEVE_CACHE")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn counterexample_csv_has_one_row_per_n() {
    let dir = tempfile::tempdir().unwrap();
    let o = ulab(dir.path(), &["counterexample", "--set", "n_max=300"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("counterexample.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# tool=ulab-0.1.0 subcommand=counterexample n_max=300"));
    assert_eq!(lines[1], "n,parity,measure");
    assert_eq!(lines.len(), 302);
    assert!(lines[2].starts_with("1,odd,"));
}

#[test]
fn gowers_of_all_ones_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = ulab(dir.path(), &["gowers", "--set", "sequence=ones", "--set", "m=32", "--set", "d=3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("gowers.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 1);
    let value: f64 = rows[0].split(',').nth(4).unwrap().parse().unwrap();
    assert_eq!(value, 1.0);
}

#[test]
fn manifest_hashes_match_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = ulab(dir.path(), &["mangoldt-scan", "--set", "n=2^8..2^10", "--threads", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = manifest(dir.path());
    assert_eq!(m["precision_bits"], 128);
    assert_eq!(m["threads"], 2);
    assert!(m["error"].is_null());
    let outputs = m["outputs"].as_array().unwrap();
    let names: Vec<&str> = outputs.iter().map(|e| e["file"].as_str().unwrap()).collect();
    assert_eq!(names, ["scan.csv", "scan.svg"]);
    for e in outputs {
        let bytes = fs::read(dir.path().join(e["file"].as_str().unwrap())).unwrap();
        assert_eq!(e["sha256"].as_str().unwrap(), sha256_hex(&bytes));
    }
    let csv = fs::read_to_string(dir.path().join("scan.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 9);
}

#[test]
fn csv_bytes_do_not_depend_on_threads() {
    let runs: Vec<Vec<u8>> = ["1", "4", "4"]
        .iter()
        .map(|t| {
            let dir = tempfile::tempdir().unwrap();
            let o = ulab(
                dir.path(),
                &["average", "--set", "n=400", "--set", "index=primes", "--set", "grid=256", "--threads", t],
            );
            assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
            fs::read(dir.path().join("average.csv")).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[1], runs[2]);
}

#[test]
fn validation_lists_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let o = ulab(
        dir.path(),
        &["average", "--set", "k=1", "--set", "interval=0.4:0.9", "--set", "colour=red", "--validate-only"],
    );
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("(k+1)!"), "{err}");
    assert!(err.contains("colour"), "{err}");
    assert!(!dir.path().join("manifest.json").exists());
}

#[test]
fn w4_is_normalized_with_a_note() {
    let dir = tempfile::tempdir().unwrap();
    let o = ulab(dir.path(), &["mangoldt-scan", "--set", "w=4", "--set", "n=256", "--validate-only"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("note:"), "{}", stderr(&o));
}

#[test]
fn large_prime_runs_need_a_sieve_limit() {
    let dir = tempfile::tempdir().unwrap();
    let o = ulab(dir.path(), &["average", "--set", "n=10^6", "--set", "index=primes", "--validate-only"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("1000000"), "{}", stderr(&o));
    let o = ulab(
        dir.path(),
        &["average", "--set", "n=10^6", "--set", "index=primes", "--set", "sieve.limit=10^6", "--validate-only"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn budget_overrun_flushes_partial_rows() {
    let dir = tempfile::tempdir().unwrap();
    let budget = (inductive_work(64, 2) + inductive_work(64, 3)) / 2.0;
    let b = format!("budget={budget}");
    let o = ulab(dir.path(), &["gowers", "--set", "m=64", "--set", "d=2,3", "--set", &b]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("gowers.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("ones,64,2,"));
    assert!(manifest(dir.path())["error"].is_string());
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("occupied");
    fs::write(&file, b"x").unwrap();
    let o = ulab(&file, &["counterexample", "--set", "n_max=10"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn config_file_and_subcommand_must_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "subcommand = gowers\n[params]\nm = 16\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let o = ulab(dir.path(), &["gowers", "--config", cfg, "--validate-only"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = ulab(dir.path(), &["vdc", "--config", cfg, "--validate-only"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sieve_cache_is_reused() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("sieve.bin");
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let o = Command::new(env!("CARGO_BIN_EXE_ulab"))
            .args(["recur", "--set", "n=500", "--set", "weight=modified-mangoldt", "--out"])
            .arg(&out)
            .env("ULAB_SIEVE_CACHE", &cache)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        fs::read(out.join("recur.csv")).unwrap()
    };
    let a = run("first");
    assert!(cache.exists());
    let b = run("second");
    assert_eq!(a, b);
}
