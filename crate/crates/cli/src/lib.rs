//! `ulab`: batch runner for the experiments in `ulab-core`.
//!
//! `ulab <subcommand> --config <file> [--out DIR] [--threads K] [--validate-only]`

pub mod config;
pub mod report;
pub mod run;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::Parser;

use ulab_core::averages::Fingerprint;
use ulab_core::primes::{build_tables, PrimeTables};
use ulab_core::Error;

use config::{Config, Reader};
use report::{Manifest, Outputs};
use run::{Ctx, Plan, AUTO_SIEVE_LIMIT, SUBCOMMANDS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_IO: i32 = 4;

pub const SIEVE_CACHE_ENV: &str = "ULAB_SIEVE_CACHE";

#[derive(Parser, Debug)]
#[command(name = "ulab", version, about = "Uniformity and recurrence experiments")]
pub struct Cli {
    #[arg(value_parser = SUBCOMMANDS)]
    pub subcommand: String,
    /// Flat key = value file with optional [section] headers.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "ulab-out")]
    pub out: PathBuf,
    /// Worker threads (default: logical cores).
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub validate_only: bool,
    /// Extra `key=value` entries, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

/// A plan that passed validation, with its sieve requirement resolved.
pub struct Validated {
    pub plan: Plan,
    pub sieve_limit: Option<u64>,
    pub svg: bool,
    pub notes: Vec<String>,
}

/// Checks every parameter without computing anything.
pub fn validate(subcommand: &str, cfg: &Config) -> std::result::Result<Validated, Vec<String>> {
    let mut r = Reader::new(cfg, subcommand);
    if let Some(s) = r.raw("subcommand") {
        if s != subcommand {
            r.error(format!("config is for subcommand {s:?}, invoked as {subcommand:?}"));
        }
    }
    let limit = r.optional::<u64>("sieve.limit");
    let svg = r.boolean("output.svg", true);
    let plan = run::build(subcommand, &mut r);
    let mut sieve_limit = None;
    if let Some(plan) = &plan {
        let need = plan.sieve_need();
        match limit {
            _ if need == 0 => sieve_limit = limit,
            Some(l) if l < need => r.error(format!(
                "sieve limit {l} is too small: this run needs at least {need}"
            )),
            Some(l) => sieve_limit = Some(l),
            None if need <= AUTO_SIEVE_LIMIT => sieve_limit = Some(need),
            None => r.error(format!(
                "missing sieve limit: this run needs primes up to {need}; set limit = {need} under [sieve]"
            )),
        }
    }
    match plan {
        Some(plan) if r.errors.is_empty() => Ok(Validated {
            plan,
            sieve_limit,
            svg,
            notes: r.notes,
        }),
        _ => {
            if r.errors.is_empty() {
                r.error("invalid configuration");
            }
            Err(r.errors)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Resource(_) => EXIT_BUDGET,
        Error::Io(_) | Error::Format(_) => EXIT_IO,
        _ => EXIT_VALIDATION,
    }
}

/// Result of one invocation.
#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    pub messages: Vec<String>,
    pub manifest: Option<PathBuf>,
}

fn sieve(limit: u64) -> ulab_core::Result<PrimeTables> {
    match std::env::var_os(SIEVE_CACHE_ENV) {
        Some(p) if !p.is_empty() => PrimeTables::load_or_build(Path::new(&p), limit),
        _ => build_tables(limit),
    }
}

fn fingerprint(subcommand: &str, cfg: &Config, sieve_limit: Option<u64>) -> Fingerprint {
    let mut fp = Fingerprint::new()
        .with("tool", format!("ulab-{}", env!("CARGO_PKG_VERSION")))
        .with("subcommand", subcommand);
    for (k, v) in cfg.entries() {
        if !k.starts_with("output.") {
            fp = fp.with(k, v);
        }
    }
    if let Some(l) = sieve_limit {
        fp = fp.with("sieve_limit", l);
    }
    fp
}

/// Validates, computes and writes outputs plus `manifest.json` into `out`.
pub fn run_experiment(
    subcommand: &str,
    cfg: &Config,
    out: &Path,
    threads: Option<usize>,
    validate_only: bool,
) -> Outcome {
    let v = match validate(subcommand, cfg) {
        Ok(v) => v,
        Err(errors) => {
            return Outcome {
                code: EXIT_VALIDATION,
                messages: errors.into_iter().map(|e| format!("error: {e}")).collect(),
                manifest: None,
            }
        }
    };
    let mut messages: Vec<String> = v.notes.iter().map(|n| format!("note: {n}")).collect();
    if validate_only {
        messages.push("configuration is valid".into());
        return Outcome {
            code: EXIT_OK,
            messages,
            manifest: None,
        };
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t.max(1));
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            messages.push(format!("error: cannot start worker pool: {e}"));
            return Outcome {
                code: EXIT_IO,
                messages,
                manifest: None,
            };
        }
    };
    let mut outputs = Outputs::default();
    let mut stages = Vec::new();
    let result = pool.install(|| {
        let t = std::time::Instant::now();
        let tables = match v.sieve_limit.filter(|_| v.plan.sieve_need() > 0) {
            Some(l) => Some(sieve(l)?),
            None => None,
        };
        stages.push(("sieve".to_string(), t.elapsed().as_millis()));
        let mut ctx = Ctx {
            fp: fingerprint(subcommand, cfg, v.sieve_limit),
            tables: tables.as_ref(),
            out: &mut outputs,
            svg: v.svg,
            stages: Vec::new(),
        };
        let r = run::execute(&v.plan, &mut ctx);
        stages.extend(ctx.stages);
        r
    });
    let mut code = EXIT_OK;
    let error = result.err().map(|e| {
        code = exit_code(&e);
        e.to_string()
    });
    if let Some(e) = &error {
        messages.push(format!("error: {e}"));
    }
    let entries = match outputs.write_all(out) {
        Ok(e) => e,
        Err(e) => {
            messages.push(format!("error: writing outputs to {}: {e}", out.display()));
            return Outcome {
                code: EXIT_IO,
                messages,
                manifest: None,
            };
        }
    };
    let manifest = Manifest {
        tool: "ulab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: subcommand.into(),
        config: cfg.entries().clone(),
        sieve_limit: v.sieve_limit,
        precision_bits: 128,
        threads: pool.current_num_threads(),
        wall_ms: stages.into_iter().collect(),
        notes: v.notes,
        outputs: entries,
        error,
    };
    match manifest.write(out) {
        Ok(p) => Outcome {
            code,
            messages,
            manifest: Some(p),
        },
        Err(e) => {
            messages.push(format!("error: writing manifest: {e}"));
            Outcome {
                code: EXIT_IO,
                messages,
                manifest: None,
            }
        }
    }
}

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let mut cfg = match &cli.config {
        None => Config::default(),
        Some(path) => match std::fs::read_to_string(path) {
            Err(e) => {
                eprintln!("error: cannot read {}: {e}", path.display());
                return EXIT_IO;
            }
            Ok(text) => match Config::parse(&text) {
                Ok(c) => c,
                Err(errors) => {
                    for e in errors {
                        eprintln!("error: {e}");
                    }
                    return EXIT_VALIDATION;
                }
            },
        },
    };
    for o in &cli.overrides {
        match o.split_once('=') {
            Some((k, v)) if !k.trim().is_empty() => cfg.set(k.trim(), v.trim()),
            _ => {
                eprintln!("error: --set expects KEY=VALUE, got {o:?}");
                return EXIT_VALIDATION;
            }
        }
    }
    let outcome = run_experiment(&cli.subcommand, &cfg, &cli.out, cli.threads, cli.validate_only);
    for m in &outcome.messages {
        eprintln!("{m}");
    }
    if let Some(p) = &outcome.manifest {
        eprintln!("wrote {}", p.display());
    }
    outcome.code
}
