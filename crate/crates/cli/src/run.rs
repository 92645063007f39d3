//! Subcommand plans: built and validated from a config, then executed.

use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ulab_core::averages::{
    cauchy_profile, cube_average, cube_bound_check, cube_recurrence, multi_average, nilweighted_average,
    recurrence_average, recurrence_average_grid, vdc_check, write_bound_csv, write_grid_summary_csv,
    write_profile_csv, AverageSpec, CubeIndex, Fingerprint, IndexMode, ProfilePoint, Weight,
};
use ulab_core::gowers::{
    gowers_norm_boxproduct, gowers_norm_fast, gowers_norm_with_budget, gowers_u2_spectral, mangoldt_uniformity_scan,
    write_scan_csv, CyclicSequence, ScanConfig, ScanRow, ScanWeight, SequenceWindow, DEFAULT_BUDGET,
};
use ulab_core::patterns::{
    counterexample_scan, find_pattern, pattern_census, upper_density_profile, write_census_csv,
    write_counterexample_csv, IntegerSet,
};
use ulab_core::primes::{canonical_w, modified_mangoldt, primorial_below, PrimeTables, WTrickParams};
use ulab_core::sequences::{
    identity_verifier, write_violations_csv, BracketKind, BracketPattern, IntervalWeight, Irrational, Partition,
};
use ulab_core::systems::{
    nilsequence_sample, CircleSet, DynamicalSystem, HeisenbergSystem, NilsequenceKind, Observable, Real,
    RotationSystem, DEFAULT_GRID,
};
use ulab_core::{Error, Phase, Result};

use crate::config::Reader;
use crate::report::{line_chart_svg, Outputs, Series};

pub const SUBCOMMANDS: [&str; 10] = [
    "gowers",
    "mangoldt-scan",
    "average",
    "recur",
    "cube",
    "nilweight",
    "vdc",
    "identity",
    "pattern",
    "counterexample",
];

/// Sieve limit built without an explicit `[sieve] limit`.
pub const AUTO_SIEVE_LIMIT: u64 = 500_000;

pub enum Plan {
    Gowers(GowersPlan),
    Scan(ScanConfig),
    Average(AveragePlan),
    Recur(RecurPlan),
    Cube(CubePlan),
    Nilweight(NilPlan),
    Vdc(VdcPlan),
    Identity(IdentityPlan),
    Pattern(PatternPlan),
    Counterexample { n_max: u64 },
}

pub struct GowersPlan {
    sequence: String,
    values: CyclicSequence,
    d_list: Vec<usize>,
    method: String,
    budget: f64,
}

pub struct AveragePlan {
    spec: AverageSpec,
    windows: Vec<usize>,
}

pub struct RecurPlan {
    system: RotationSystem,
    set: CircleSet,
    pattern: BracketPattern,
    n_list: Vec<usize>,
    weight: Weight,
    grid: Option<usize>,
}

pub enum CubePlan {
    Average {
        system: DynamicalSystem,
        observables: Vec<Observable>,
        k: usize,
        n: usize,
        index: CubeIndex,
        grid: usize,
        budget: f64,
    },
    Recurrence {
        system: RotationSystem,
        set: CircleSet,
        k: usize,
        n: usize,
        shift: i64,
        wn: Vec<u64>,
    },
    Bound {
        system: DynamicalSystem,
        observables: Vec<Observable>,
        k: usize,
        n_list: Vec<usize>,
        params: WTrickParams,
        j: usize,
        grid: usize,
    },
}

pub struct NilPlan {
    system: DynamicalSystem,
    observables: Vec<Observable>,
    kind: NilsequenceKind,
    n: usize,
    index: IndexMode,
    grid: usize,
    compare: bool,
}

pub struct VdcPlan {
    instances: usize,
    n_max: usize,
    dim_max: usize,
    seed: u64,
    constant: f64,
}

pub struct IdentityPlan {
    pattern: BracketPattern,
    weights: Vec<IntervalWeight>,
    n_max: i64,
    h_max: i64,
}

pub struct PatternPlan {
    set: IntegerSet,
    pattern: BracketPattern,
    shift: i64,
    n_max: u64,
    census: bool,
    windows: Vec<usize>,
}

impl Plan {
    /// Sieve limit the run needs; 0 when no primes are involved.
    pub fn sieve_need(&self) -> u64 {
        match self {
            Plan::Scan(cfg) => cfg.required_limit().unwrap_or(0),
            Plan::Average(p) => {
                let n = p.windows.iter().copied().max().unwrap_or(p.spec.n).max(p.spec.n) as u64;
                let mut need = match p.spec.index {
                    IndexMode::Primes => n,
                    IndexMode::Progression { modulus, offset } => (modulus * n).saturating_add_signed(offset),
                    IndexMode::Integers => 0,
                };
                if weight_uses_primes(&p.spec.weight) {
                    need = need.max(match p.spec.index {
                        IndexMode::Progression { modulus, offset } => (modulus * n).saturating_add_signed(offset),
                        _ => n,
                    });
                    if let Some(wp) = modified_params(&p.spec.weight) {
                        need = need.max(wp.modulus() * n + wp.residue());
                    }
                }
                need
            }
            Plan::Recur(p) => {
                let n = p.n_list.iter().copied().max().unwrap_or(0) as u64;
                match modified_params(&p.weight) {
                    Some(wp) => wp.modulus() * n + wp.residue(),
                    None if weight_uses_primes(&p.weight) => n,
                    None => 0,
                }
            }
            Plan::Cube(CubePlan::Average { index, n, .. }) => match index {
                CubeIndex::Integers => 0,
                _ => *n as u64,
            },
            Plan::Cube(CubePlan::Recurrence { n, .. }) => *n as u64,
            Plan::Cube(CubePlan::Bound { n_list, params, .. }) => {
                let n = n_list.iter().copied().max().unwrap_or(0) as u64;
                params.modulus() * n + params.residue()
            }
            Plan::Nilweight(p) => {
                if p.index == IndexMode::Primes || p.compare {
                    p.n as u64
                } else {
                    0
                }
            }
            Plan::Pattern(p) => (p.n_max as i64 - p.shift).max(2) as u64,
            _ => 0,
        }
    }
}

fn weight_uses_primes(w: &Weight) -> bool {
    match w {
        Weight::VonMangoldtPrime | Weight::ModifiedMangoldt(_) => true,
        Weight::Interval(_, inner) => weight_uses_primes(inner),
        Weight::Product(ws) => ws.iter().any(weight_uses_primes),
        _ => false,
    }
}

fn modified_params(w: &Weight) -> Option<WTrickParams> {
    match w {
        Weight::ModifiedMangoldt(p) => Some(*p),
        Weight::Interval(_, inner) => modified_params(inner),
        Weight::Product(ws) => ws.iter().find_map(modified_params),
        _ => None,
    }
}

/// Collects a core error into the reader.
fn keep<T>(r: &mut Reader, what: &str, v: Result<T>) -> Option<T> {
    match v {
        Ok(x) => Some(x),
        Err(e) => {
            r.error(format!("{what}: {e}"));
            None
        }
    }
}

fn irrational(r: &mut Reader, key: &str, default: &str) -> Option<Irrational> {
    let label = r.string(key, default);
    keep(r, key, Irrational::parse(&label))
}

/// An irrational label or a decimal.
fn real(r: &mut Reader, key: &str, default: &str) -> Option<Real> {
    let s = r.string(key, default);
    if let Ok(a) = Irrational::parse(&s) {
        return Some(Real::from_irrational(&a));
    }
    match s.parse::<f64>() {
        Ok(x) if x.is_finite() => Some(Real::from_f64(x)),
        _ => {
            r.error(format!("{key}: expected an irrational label or a number, got {s:?}"));
            None
        }
    }
}

fn w_param(r: &mut Reader, key: &str, default: u64) -> u64 {
    let w = r.parsed::<u64>(key, default);
    let c = canonical_w(w);
    if w > 2 && c != w {
        let same = primorial_below(w).ok();
        r.note(format!(
            "{key} = {w} is not prime; W = {} is the same as for w = {c}, normalized to w = {c}",
            same.map_or("?".into(), |x| x.to_string())
        ));
    }
    c
}

fn pattern(r: &mut Reader, k_default: usize) -> Option<BracketPattern> {
    let kind_s = r.string("kind", "floor-scaled");
    let kind = match kind_s.parse::<BracketKind>() {
        Ok(k) => k,
        Err(e) => {
            r.error(format!("kind: {e}"));
            return None;
        }
    };
    let k = r.parsed::<usize>("k", k_default);
    let alpha = if kind == BracketKind::Linear {
        None
    } else {
        Some(irrational(r, "alpha", "sqrt2")?)
    };
    keep(r, "pattern", BracketPattern::new(kind, k, alpha))
}

fn partition(r: &mut Reader) -> Partition {
    match r.string("partition", "factorial").as_str() {
        "factorial" => Partition::Factorial,
        "coarse" => Partition::Coarse,
        other => {
            r.error(format!("partition: expected factorial or coarse, got {other:?}"));
            Partition::Factorial
        }
    }
}

/// `weight`, `w`, `r`, optional `interval = lo:hi`.
fn weight(r: &mut Reader, k: usize) -> Option<Weight> {
    let base = match r.string("weight", "unit").as_str() {
        "unit" => Weight::Unit,
        "von-mangoldt" => Weight::VonMangoldtPrime,
        "modified-mangoldt" => {
            let w = w_param(r, "w", 5);
            let res = r.parsed::<u64>("r", 1);
            Weight::ModifiedMangoldt(keep(r, "modified-mangoldt weight", WTrickParams::new(w, res))?)
        }
        other => {
            r.error(format!("weight: expected unit, von-mangoldt or modified-mangoldt, got {other:?}"));
            return None;
        }
    };
    let part = partition(r);
    match r.raw("interval") {
        None => Some(base),
        Some(s) => match crate::config::parse_arcs(&s).as_deref() {
            Ok([(lo, hi)]) => {
                let iw = keep(r, "interval", IntervalWeight::with_partition(k, *lo, *hi, part))?;
                Some(Weight::Interval(iw, Box::new(base)))
            }
            _ => {
                r.error(format!("interval: expected one lo:hi pair, got {s:?}"));
                None
            }
        },
    }
}

fn rotation(r: &mut Reader) -> Option<RotationSystem> {
    let s = r.string("beta", "sqrt5");
    let mut alphas = Vec::new();
    for label in s.split(',').map(str::trim) {
        alphas.push(keep(r, "beta", Irrational::parse(label))?);
    }
    keep(r, "beta", RotationSystem::new(alphas))
}

fn circle_set(r: &mut Reader, default: &[(f64, f64)]) -> Option<CircleSet> {
    let arcs = r.arcs("set", default);
    keep(r, "set", CircleSet::from_arcs(&arcs))
}

/// The system and one observable per slot.
fn system_and_observables(r: &mut Reader, slots: usize) -> Option<(DynamicalSystem, Vec<Observable>)> {
    let system = match r.string("system", "rotation").as_str() {
        "rotation" => DynamicalSystem::Rotation(rotation(r)?),
        "heisenberg" => {
            let a = real(r, "heis_a", "sqrt2")?;
            let b = real(r, "heis_b", "sqrt3")?;
            let c = real(r, "heis_c", "0")?;
            DynamicalSystem::Heisenberg(HeisenbergSystem::new(a, b, c))
        }
        "cyclic" => DynamicalSystem::CyclicShift(r.parsed::<u64>("modulus", 1024)),
        other => {
            r.error(format!("system: expected rotation, heisenberg or cyclic, got {other:?}"));
            return None;
        }
    };
    let obs = match r.string("observable", "arc").as_str() {
        "arc" => Observable::ArcIndicator(circle_set(r, &[(0.0, 0.3)])?),
        "character" => {
            let f = r.list_u64("frequency", &[1]);
            let mut k = [0i64; 3];
            for (slot, v) in k.iter_mut().zip(&f) {
                *slot = *v as i64;
            }
            Observable::character(k)
        }
        "bump" => Observable::HeisenbergBump,
        "constant" => Observable::constant(1.0),
        other => {
            r.error(format!("observable: expected arc, character, bump or constant, got {other:?}"));
            return None;
        }
    };
    Some((system, vec![obs; slots]))
}

fn grid(r: &mut Reader, dims: usize) -> usize {
    let default = match dims {
        1 => DEFAULT_GRID,
        2 => 256,
        _ => 64,
    };
    let g = r.parsed::<usize>("grid", default);
    if g < 1 {
        r.error("grid must be at least 1");
    }
    g
}

fn index_mode(r: &mut Reader) -> Option<IndexMode> {
    match r.string("index", "integers").as_str() {
        "integers" => Some(IndexMode::Integers),
        "primes" => Some(IndexMode::Primes),
        "progression" => {
            let w = w_param(r, "w", 5);
            let res = r.parsed::<u64>("r", 1);
            let p = keep(r, "progression", WTrickParams::new(w, res))?;
            Some(IndexMode::Progression {
                modulus: p.modulus(),
                offset: p.residue() as i64,
            })
        }
        other => {
            r.error(format!("index: expected integers, primes or progression, got {other:?}"));
            None
        }
    }
}

pub fn build(sub: &str, r: &mut Reader) -> Option<Plan> {
    let plan = match sub {
        "gowers" => build_gowers(r),
        "mangoldt-scan" => build_scan(r),
        "average" => build_average(r),
        "recur" => build_recur(r),
        "cube" => build_cube(r),
        "nilweight" => build_nil(r),
        "vdc" => build_vdc(r),
        "identity" => build_identity(r),
        "pattern" => build_pattern(r),
        "counterexample" => {
            let n_max = r.parsed::<u64>("n_max", 10_000);
            if n_max < 1 {
                r.error("n_max must be at least 1");
            }
            Some(Plan::Counterexample { n_max })
        }
        other => {
            r.error(format!("unknown subcommand {other:?}; expected one of {}", SUBCOMMANDS.join(", ")));
            None
        }
    };
    for k in r.unused() {
        r.error(format!("unknown parameter {k:?} for {sub}"));
    }
    plan
}

fn build_gowers(r: &mut Reader) -> Option<Plan> {
    let m = r.parsed::<usize>("m", 64);
    let d_list = r.list_usize("d", &[2]);
    let seed = r.parsed::<u64>("seed", 0);
    let method = r.string("method", "inductive");
    let budget = r.parsed::<f64>("budget", DEFAULT_BUDGET);
    if !["inductive", "boxproduct", "spectral", "fast"].contains(&method.as_str()) {
        r.error(format!("method: expected inductive, boxproduct, spectral or fast, got {method:?}"));
    }
    if method == "spectral" && d_list.iter().any(|&d| d != 2) {
        r.error("method = spectral computes U^2 only; set d = 2");
    }
    for &d in &d_list {
        if !(1..=5).contains(&d) {
            r.error(format!("d = {d} outside 1..=5"));
        }
    }
    let sequence = r.string("sequence", "ones");
    let values: Vec<Complex64> = match sequence.as_str() {
        "ones" => vec![Complex64::new(1.0, 0.0); m],
        "random" => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..m).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
        }
        "quadratic" => {
            let a = irrational(r, "alpha", "sqrt2")?.phase();
            (0..m as i64).map(|j| ulab_core::systems::e(a.mul_int(j * j))).collect()
        }
        other => {
            r.error(format!("sequence: expected ones, random or quadratic, got {other:?}"));
            return None;
        }
    };
    let values = keep(r, "sequence", CyclicSequence::new(values))?;
    Some(Plan::Gowers(GowersPlan { sequence, values, d_list, method, budget }))
}

fn build_scan(r: &mut Reader) -> Option<Plan> {
    let w_list: Vec<u64> = r.list_u64("w", &[3, 5, 7]);
    let w_list: Vec<u64> = w_list
        .into_iter()
        .map(|w| {
            let c = canonical_w(w);
            if w > 2 && c != w {
                r.note(format!("w = {w} gives the same W as w = {c}; normalized to w = {c}"));
            }
            c
        })
        .collect();
    let n_list = r.list_usize("n", &[1 << 10, 1 << 11, 1 << 12, 1 << 13, 1 << 14]);
    let d = r.parsed::<usize>("d", 2);
    let mut cfg = ScanConfig::new(w_list, n_list, d);
    cfg.factor = r.parsed::<usize>("factor", cfg.factor);
    cfg.budget = r.parsed::<f64>("budget", cfg.budget);
    cfg.timing = r.boolean("timing", false);
    cfg.along_progression = r.boolean("along_progression", false);
    cfg.weight = match r.string("weight", "all-ones").as_str() {
        "all-ones" => ScanWeight::AllOnes,
        "rotation" => ScanWeight::RotationIndicator {
            alpha: irrational(r, "alpha", "sqrt2")?,
            set: circle_set(r, &[(0.0, 0.5)])?,
            x0: Phase::ZERO,
        },
        "polynomial" => {
            let a = irrational(r, "alpha", "sqrt2")?.phase();
            ScanWeight::Nilsequence(keep(r, "weight", NilsequenceKind::polynomial(vec![Phase::ZERO, Phase::ZERO, a]))?)
        }
        other => {
            r.error(format!("weight: expected all-ones, rotation or polynomial, got {other:?}"));
            return None;
        }
    };
    keep(r, "scan", cfg.validate())?;
    Some(Plan::Scan(cfg))
}

fn build_average(r: &mut Reader) -> Option<Plan> {
    let pat = pattern(r, 2)?;
    let (system, observables) = system_and_observables(r, pat.k())?;
    let g = grid(r, system.dim());
    let n = r.parsed::<usize>("n", 1000);
    let w = weight(r, pat.k())?;
    let index = index_mode(r)?;
    let windows = r.list_usize("windows", &[]);
    let f0 = r.boolean("f0", false);
    let mut spec = AverageSpec::new(system, observables, pat, n, g);
    spec.weight = w;
    spec.index = index;
    spec.budget = r.parsed::<f64>("budget", DEFAULT_BUDGET);
    if f0 {
        spec.f0 = Some(spec.observables[0].clone());
    }
    keep(r, "grid", spec.system.grid(g));
    if !windows.is_empty() && (windows.len() < 2 || windows.windows(2).any(|p| p[0] >= p[1])) {
        r.error("windows must list at least two strictly increasing N");
    }
    let biggest = windows.iter().copied().max().unwrap_or(n).max(n);
    let work = biggest as f64 * spec.pattern.k() as f64 * spec.system.grid(g).map_or(0, |g| g.len()) as f64;
    if work > spec.budget {
        r.error(format!("average needs about {work:.3e} evaluations, above budget {:.3e}", spec.budget));
    }
    Some(Plan::Average(AveragePlan { spec, windows }))
}

fn build_recur(r: &mut Reader) -> Option<Plan> {
    let pat = pattern(r, 2)?;
    let system = rotation(r)?;
    if system.dim() != 1 {
        r.error("recur needs a circle rotation (one beta)");
    }
    let set = circle_set(r, &[(0.0, 0.3)])?;
    let n_list = r.list_usize("n", &[100, 1000, 10_000]);
    let weight = weight(r, pat.k())?;
    let grid = r.optional::<usize>("grid");
    if n_list.contains(&0) {
        r.error("n values must be positive");
    }
    Some(Plan::Recur(RecurPlan { system, set, pattern: pat, n_list, weight, grid }))
}

fn cube_index(r: &mut Reader) -> Option<CubeIndex> {
    match r.string("index", "primes").as_str() {
        "integers" => Some(CubeIndex::Integers),
        "primes" => Some(CubeIndex::Primes),
        "shifted-primes" => {
            let shift = r.parsed::<i64>("shift", -1);
            let scale = r.parsed::<u64>("wn", 2);
            Some(CubeIndex::ShiftedPrimes { shift, scale })
        }
        other => {
            r.error(format!("index: expected integers, primes or shifted-primes, got {other:?}"));
            None
        }
    }
}

fn build_cube(r: &mut Reader) -> Option<Plan> {
    let k = r.parsed::<usize>("k", 2);
    let mode = r.string("mode", "average");
    match mode.as_str() {
        "average" => {
            if !(1..=3).contains(&k) {
                r.error(format!("k = {k} outside 1..=3"));
                return None;
            }
            let (system, observables) = system_and_observables(r, (1 << k) - 1)?;
            let g = grid(r, system.dim());
            let n = r.parsed::<usize>("n", 500);
            let index = cube_index(r)?;
            let budget = r.parsed::<f64>("budget", DEFAULT_BUDGET);
            Some(Plan::Cube(CubePlan::Average { system, observables, k, n, index, grid: g, budget }))
        }
        "recurrence" => {
            let system = rotation(r)?;
            let set = circle_set(r, &[(0.0, 0.3)])?;
            let n = r.parsed::<usize>("n", 500);
            let shift = r.parsed::<i64>("shift", -1);
            let wn = r.list_u64("wn", &[2, 6, 30]);
            if shift != 1 && shift != -1 {
                r.error("shift must be +1 or -1");
            }
            if !(1..=3).contains(&k) {
                r.error(format!("k = {k} outside 1..=3"));
            }
            Some(Plan::Cube(CubePlan::Recurrence { system, set, k, n, shift, wn }))
        }
        "bound" => {
            if !(1..=2).contains(&k) {
                r.error(format!("bound mode supports k = 1 or 2, got {k}"));
                return None;
            }
            let (system, observables) = system_and_observables(r, (1 << k) - 1)?;
            let g = grid(r, system.dim());
            let n_list = r.list_usize("n", &[1 << 9, 1 << 10, 1 << 11, 1 << 12]);
            let w = w_param(r, "w", 5);
            let res = r.parsed::<u64>("r", 1);
            let params = keep(r, "bound weight", WTrickParams::new(w, res))?;
            let j = r.parsed::<usize>("j", 1);
            if j < 1 || j > k {
                r.error(format!("j = {j} outside 1..={k}"));
            }
            Some(Plan::Cube(CubePlan::Bound { system, observables, k, n_list, params, j, grid: g }))
        }
        other => {
            r.error(format!("mode: expected average, recurrence or bound, got {other:?}"));
            None
        }
    }
}

fn build_nil(r: &mut Reader) -> Option<Plan> {
    let k = r.parsed::<usize>("k", 1);
    let (system, observables) = system_and_observables(r, k)?;
    let g = grid(r, system.dim());
    let n = r.parsed::<usize>("n", 1000);
    let index = match r.string("index", "integers").as_str() {
        "integers" => IndexMode::Integers,
        "primes" => IndexMode::Primes,
        other => {
            r.error(format!("index: expected integers or primes, got {other:?}"));
            return None;
        }
    };
    let kind = match r.string("nil", "polynomial").as_str() {
        "polynomial" => {
            let s = r.string("coeffs", "0,0,sqrt2");
            let mut coeffs = Vec::new();
            for c in s.split(',').map(str::trim) {
                let ph = match Irrational::parse(c) {
                    Ok(a) => a.phase(),
                    Err(_) => match c.parse::<f64>() {
                        Ok(x) if x.is_finite() => Phase::from_f64(x),
                        _ => {
                            r.error(format!("coeffs: {c:?} is neither an irrational label nor a number"));
                            return None;
                        }
                    },
                };
                coeffs.push(ph);
            }
            keep(r, "coeffs", NilsequenceKind::polynomial(coeffs))?
        }
        "heisenberg" => {
            let a = real(r, "nil_a", "sqrt2")?;
            let b = real(r, "nil_b", "sqrt3")?;
            let c = real(r, "nil_c", "0")?;
            NilsequenceKind::HeisenbergLipschitz {
                system: HeisenbergSystem::new(a, b, c),
                x0: [Phase::ZERO; 3],
            }
        }
        other => {
            r.error(format!("nil: expected polynomial or heisenberg, got {other:?}"));
            return None;
        }
    };
    let compare = r.boolean("compare", false);
    Some(Plan::Nilweight(NilPlan { system, observables, kind, n, index, grid: g, compare }))
}

fn build_vdc(r: &mut Reader) -> Option<Plan> {
    let p = VdcPlan {
        instances: r.parsed("instances", 1000),
        n_max: r.parsed("n_max", 256),
        dim_max: r.parsed("dim_max", 8),
        seed: r.parsed("seed", 0),
        constant: r.parsed("constant", 4.0),
    };
    if p.n_max < 2 || p.dim_max < 1 || p.dim_max > 64 {
        r.error("vdc needs n_max ≥ 2 and dim_max in 1..=64");
    }
    Some(Plan::Vdc(p))
}

fn build_identity(r: &mut Reader) -> Option<Plan> {
    let pat = pattern(r, 2)?;
    let part = partition(r);
    let n_max = r.parsed::<i64>("n_max", 10_000);
    let h_max = r.parsed::<i64>("h_max", 1000);
    let cells = keep(
        r,
        "partition",
        match part {
            Partition::Factorial => IntervalWeight::factorial_cells(pat.k()),
            Partition::Coarse => Ok(2),
        },
    )?;
    let wanted: Vec<u64> = match r.raw("cells").as_deref() {
        None | Some("all") => (1..=cells).collect(),
        Some(s) => match crate::config::parse_list(s) {
            Ok(v) => v,
            Err(e) => {
                r.error(format!("cells: {e}"));
                return None;
            }
        },
    };
    let mut weights = Vec::new();
    for i in wanted {
        weights.push(keep(r, "cells", IntervalWeight::cell(pat.k(), i, part))?);
    }
    if let Some(s) = r.raw("interval") {
        match crate::config::parse_arcs(&s).as_deref() {
            Ok([(lo, hi)]) => {
                weights = vec![keep(r, "interval", IntervalWeight::with_partition(pat.k(), *lo, *hi, part))?];
            }
            _ => r.error(format!("interval: expected one lo:hi pair, got {s:?}")),
        }
    }
    if n_max < 1 || h_max < 1 {
        r.error("n_max and h_max must be at least 1");
    }
    Some(Plan::Identity(IdentityPlan { pattern: pat, weights, n_max, h_max }))
}

fn build_pattern(r: &mut Reader) -> Option<Plan> {
    let pat = pattern(r, 3)?;
    let n = r.parsed::<usize>("n", 100_000);
    let seed = r.parsed::<u64>("seed", 0);
    let set = match r.string("source", "bernoulli").as_str() {
        "bernoulli" => {
            let density = r.parsed::<f64>("density", 0.2);
            keep(r, "density", IntegerSet::bernoulli(n, density, seed))?
        }
        "full" => IntegerSet::full(n),
        "evens" => IntegerSet::evens(n),
        "rotation" => {
            let beta = irrational(r, "beta", "inv2sqrt2")?;
            let arcs = circle_set(r, &[(-0.125, 0.125)])?;
            keep(r, "rotation set", IntegerSet::rotation_discretization(n, &beta, &arcs))?
        }
        "file" => {
            let path = r.string("set_file", "");
            if path.is_empty() {
                r.error("source = file needs set_file");
                return None;
            }
            keep(r, "set_file", IntegerSet::read_file(std::path::Path::new(&path)))?
        }
        other => {
            r.error(format!("source: expected bernoulli, full, evens, rotation or file, got {other:?}"));
            return None;
        }
    };
    let shift = r.parsed::<i64>("shift", -1);
    if shift != 1 && shift != -1 {
        r.error("shift must be +1 or -1");
    }
    let n_max = r.parsed::<u64>("n_max", 100_000);
    let census = r.boolean("census", false);
    let windows = r.list_usize("windows", &[]);
    if windows.iter().any(|&l| l < 1 || l > set.window()) {
        r.error(format!("windows must lie in [1, {}]", set.window()));
    }
    Some(Plan::Pattern(PatternPlan { set, pattern: pat, shift, n_max, census, windows }))
}

/// Shared state for execution.
pub struct Ctx<'a> {
    pub fp: Fingerprint,
    pub tables: Option<&'a PrimeTables>,
    pub out: &'a mut Outputs,
    pub svg: bool,
    pub stages: Vec<(String, u128)>,
}

impl<'a> Ctx<'a> {
    fn csv(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.out.add(name, buf);
        Ok(())
    }

    fn header(&self, buf: &mut Vec<u8>, cols: &str) -> Result<()> {
        writeln!(buf, "{}", self.fp.line())?;
        writeln!(buf, "{cols}")?;
        Ok(())
    }

    fn svg(&mut self, name: &str, title: &str, x: &str, y: &str, series: &[Series]) {
        if self.svg {
            self.out.add(name, line_chart_svg(title, x, y, series).into_bytes());
        }
    }

    fn tables(&self) -> Result<&'a PrimeTables> {
        self.tables.ok_or_else(|| Error::Resource("prime tables were not built".into()))
    }

    fn timed<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let t = std::time::Instant::now();
        let v = f(self);
        self.stages.push((stage.to_string(), t.elapsed().as_millis()));
        v
    }
}

pub fn execute(plan: &Plan, ctx: &mut Ctx) -> Result<()> {
    match plan {
        Plan::Gowers(p) => ctx.timed("gowers", |c| exec_gowers(p, c)),
        Plan::Scan(cfg) => ctx.timed("mangoldt-scan", |c| exec_scan(cfg, c)),
        Plan::Average(p) => ctx.timed("average", |c| exec_average(p, c)),
        Plan::Recur(p) => ctx.timed("recur", |c| exec_recur(p, c)),
        Plan::Cube(p) => ctx.timed("cube", |c| exec_cube(p, c)),
        Plan::Nilweight(p) => ctx.timed("nilweight", |c| exec_nil(p, c)),
        Plan::Vdc(p) => ctx.timed("vdc", |c| exec_vdc(p, c)),
        Plan::Identity(p) => ctx.timed("identity", |c| exec_identity(p, c)),
        Plan::Pattern(p) => ctx.timed("pattern", |c| exec_pattern(p, c)),
        Plan::Counterexample { n_max } => ctx.timed("counterexample", |c| {
            let rep = counterexample_scan(*n_max)?;
            let fp = c.fp.clone();
            c.csv("counterexample.csv", |b| write_counterexample_csv(b, &fp, &rep))
        }),
    }
}

/// Writes the rows computed so far, then passes the error on.
fn flush_partial<T>(ctx: &mut Ctx, name: &str, rows: Vec<u8>, res: Result<T>) -> Result<T> {
    if res.is_err() {
        ctx.out.add(name, rows);
    }
    res
}

fn exec_gowers(p: &GowersPlan, ctx: &mut Ctx) -> Result<()> {
    let mut buf = Vec::new();
    ctx.header(&mut buf, "sequence,M,d,method,value,work")?;
    for &d in &p.d_list {
        let res = match p.method.as_str() {
            "boxproduct" => gowers_norm_boxproduct(&p.values, d),
            "spectral" => gowers_u2_spectral(&p.values),
            "fast" => gowers_norm_fast(&p.values, d, p.budget),
            _ => gowers_norm_with_budget(&p.values, d, p.budget),
        };
        let g = flush_partial(ctx, "gowers.csv", buf.clone(), res)?;
        writeln!(buf, "{},{},{},{},{},{}", p.sequence, g.m, g.d, p.method, g.value, g.work)?;
    }
    ctx.out.add("gowers.csv", buf);
    Ok(())
}

fn exec_scan(cfg: &ScanConfig, ctx: &mut Ctx) -> Result<()> {
    let tables = ctx.tables()?;
    let mut rows: Vec<ScanRow> = Vec::new();
    let mut n_sorted = cfg.n_list.clone();
    n_sorted.sort_unstable();
    n_sorted.dedup();
    for n in n_sorted {
        let mut one = cfg.clone();
        one.n_list = vec![n];
        match mangoldt_uniformity_scan(tables, &one) {
            Ok(r) => rows.extend(r),
            Err(e) => {
                let mut buf = Vec::new();
                ctx.header_only(&mut buf)?;
                write_scan_csv(&mut buf, &rows)?;
                ctx.out.add("scan.csv", buf);
                return Err(e);
            }
        }
    }
    rows.sort_by_key(|r| (r.w, r.n));
    let mut buf = Vec::new();
    ctx.header_only(&mut buf)?;
    write_scan_csv(&mut buf, &rows)?;
    ctx.out.add("scan.csv", buf);
    let series: Vec<Series> = cfg
        .w_list
        .iter()
        .map(|&w| Series {
            name: format!("w={w}"),
            points: rows.iter().filter(|r| r.w == w).map(|r| (r.n as f64, r.sup_norm)).collect(),
        })
        .collect();
    ctx.svg("scan.svg", &format!("sup_r U^{} norm of (Λ'_{{w,r}} − 1)", cfg.d), "N", "norm", &series);
    Ok(())
}

impl Ctx<'_> {
    fn header_only(&self, buf: &mut Vec<u8>) -> Result<()> {
        writeln!(buf, "{}", self.fp.line())?;
        Ok(())
    }
}

fn exec_average(p: &AveragePlan, ctx: &mut Ctx) -> Result<()> {
    let tables = ctx.tables;
    if p.windows.is_empty() {
        let f = multi_average(&p.spec, tables)?;
        let fp = ctx.fp.clone();
        return ctx.csv("average.csv", |b| write_grid_summary_csv(b, &fp, &f));
    }
    let prof = cauchy_profile(&p.spec, &p.windows, tables)?;
    let fp = ctx.fp.clone();
    ctx.csv("profile.csv", |b| write_profile_csv(b, &fp, &prof))?;
    let pts = prof.iter().map(|q| (q.n as f64, q.value)).collect();
    ctx.svg("profile.svg", "Cauchy profile ‖A(N_j+1) − A(N_j)‖", "N", "L2 distance", &[Series { name: "profile".into(), points: pts }]);
    Ok(())
}

fn exec_recur(p: &RecurPlan, ctx: &mut Ctx) -> Result<()> {
    let tables = ctx.tables;
    let mut points = Vec::new();
    for &n in &p.n_list {
        let v = match p.grid {
            None => recurrence_average(&p.system, &p.set, &p.pattern, n, &p.weight, tables),
            Some(g) => recurrence_average_grid(&p.system, &p.set, &p.pattern, n, &p.weight, g, tables),
        };
        let mut partial = Vec::new();
        write_profile_csv(&mut partial, &ctx.fp, &points)?;
        let v = flush_partial(ctx, "recur.csv", partial, v)?;
        points.push(ProfilePoint {
            n: n as u64,
            value: v,
            meta: if p.grid.is_some() { "grid".into() } else { "exact".into() },
        });
    }
    let fp = ctx.fp.clone();
    ctx.csv("recur.csv", |b| write_profile_csv(b, &fp, &points))?;
    let pts = points.iter().map(|q| (q.n as f64, q.value)).collect();
    ctx.svg("recur.svg", "recurrence average", "N", "value", &[Series { name: p.pattern.kind().name().into(), points: pts }]);
    Ok(())
}

fn exec_cube(p: &CubePlan, ctx: &mut Ctx) -> Result<()> {
    let tables = ctx.tables;
    let fp = ctx.fp.clone();
    match p {
        CubePlan::Average { system, observables, k, n, index, grid, budget } => {
            let f = cube_average(system, observables, *k, *n, *index, *grid, *budget, tables)?;
            ctx.csv("cube.csv", |b| write_grid_summary_csv(b, &fp, &f))
        }
        CubePlan::Recurrence { system, set, k, n, shift, wn } => {
            let mut rows = Vec::new();
            for &w in wn {
                let v = cube_recurrence(system, set, *k, *n, CubeIndex::ShiftedPrimes { shift: *shift, scale: w }, tables)?;
                rows.push((w, v));
            }
            ctx.csv("cube.csv", |b| {
                writeln!(b, "{}", fp.line())?;
                writeln!(b, "W_N,k,N,value,positive")?;
                for (w, v) in &rows {
                    writeln!(b, "{w},{k},{n},{v},{}", *v > 0.0)?;
                }
                Ok(())
            })
        }
        CubePlan::Bound { system, observables, k, n_list, params, j, grid } => {
            let t = ctx.tables()?;
            let mut rows = Vec::new();
            for &n in n_list {
                let b = mangoldt_minus_one(t, params, n)?;
                let res = cube_bound_check(&vec![b; *k], system, observables, n, *j, *grid);
                let mut partial = Vec::new();
                write_bound_csv(&mut partial, &fp, &rows)?;
                rows.push(flush_partial(ctx, "bound.csv", partial, res)?);
            }
            ctx.csv("bound.csv", |b| write_bound_csv(b, &fp, &rows))?;
            let pts = rows.iter().map(|q| (q.n as f64, q.ratio)).collect();
            ctx.svg("bound.svg", "cube bound ratio", "N", "lhs / rhs", &[Series { name: format!("j={j}"), points: pts }]);
            Ok(())
        }
    }
}

/// `Λ'_{w,r}(n) − 1` for `n = 1..=N`.
pub fn mangoldt_minus_one(tables: &PrimeTables, params: &WTrickParams, n: usize) -> Result<SequenceWindow> {
    let v: Vec<f64> = (1..=n as u64)
        .map(|m| Ok(modified_mangoldt(tables, params, m)? - 1.0))
        .collect::<Result<_>>()?;
    SequenceWindow::from_real(&v)
}

fn exec_nil(p: &NilPlan, ctx: &mut Ctx) -> Result<()> {
    let tables = ctx.tables;
    let win = nilsequence_sample(&p.kind, p.n)?;
    let f = nilweighted_average(&p.system, &p.observables, &win, p.n, p.index, p.grid, tables)?;
    let fp = ctx.fp.clone();
    ctx.csv("nilweight.csv", |b| write_grid_summary_csv(b, &fp, &f))?;
    if p.compare {
        let pattern = BracketPattern::linear(p.observables.len())?;
        let mut spec = AverageSpec::new(p.system.clone(), p.observables.clone(), pattern, p.n, p.grid);
        spec.weight = Weight::Product(vec![Weight::VonMangoldtPrime, Weight::Nilsequence(win.clone())]);
        let g = multi_average(&spec, tables)?;
        let prime = nilweighted_average(&p.system, &p.observables, &win, p.n, IndexMode::Primes, p.grid, tables)?;
        let dist = ulab_core::systems::grid_l2_distance(&prime, &g)?;
        ctx.csv("nilweight_compare.csv", |b| {
            writeln!(b, "{}", fp.line())?;
            writeln!(b, "N,prime_indexed_vs_mangoldt_l2")?;
            writeln!(b, "{},{dist}", p.n)?;
            Ok(())
        })?;
    }
    Ok(())
}

fn exec_vdc(p: &VdcPlan, ctx: &mut Ctx) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut buf = Vec::new();
    ctx.header(&mut buf, "instance,N,dim,lhs,rhs,pass")?;
    for i in 0..p.instances {
        let n = rng.gen_range(2..=p.n_max);
        let dim = rng.gen_range(1..=p.dim_max);
        let v: Vec<Vec<Complex64>> = (0..n)
            .map(|_| (0..dim).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect())
            .collect();
        let rep = vdc_check(&v, p.constant)?;
        writeln!(buf, "{i},{n},{dim},{},{},{}", rep.lhs, rep.rhs, rep.pass)?;
    }
    ctx.out.add("vdc.csv", buf);
    Ok(())
}

fn exec_identity(p: &IdentityPlan, ctx: &mut Ctx) -> Result<()> {
    let mut summary = Vec::new();
    ctx.header(&mut summary, "cell,cells,lo,hi,checks,checks_t2,violations")?;
    let mut viol = Vec::new();
    writeln!(viol, "{}", ctx.fp.line())?;
    let mut first = true;
    for w in &p.weights {
        let rep = identity_verifier(&p.pattern, w, p.n_max, p.h_max)?;
        writeln!(
            summary,
            "{},{},{},{},{},{},{}",
            w.index(),
            w.cells(),
            w.lo(),
            w.hi(),
            rep.checks,
            rep.checks_t2,
            rep.violations.len()
        )?;
        let mut part = Vec::new();
        write_violations_csv(&mut part, &rep)?;
        let text = String::from_utf8_lossy(&part).into_owned();
        let mut lines = text.lines();
        let head = lines.next().unwrap_or("");
        if first {
            writeln!(viol, "cell,{head}")?;
            first = false;
        }
        for l in lines {
            writeln!(viol, "{},{l}", w.index())?;
        }
    }
    ctx.out.add("identity.csv", summary);
    ctx.out.add("violations.csv", viol);
    Ok(())
}

fn exec_pattern(p: &PatternPlan, ctx: &mut Ctx) -> Result<()> {
    let t = ctx.tables()?;
    let w = find_pattern(&p.set, &p.pattern, p.shift, p.n_max, t)?;
    let mut buf = Vec::new();
    ctx.header(&mut buf, "found,m,n,p,positions,set_density")?;
    match &w {
        Some(w) => {
            let pos: Vec<String> = w.positions.iter().map(|x| x.to_string()).collect();
            writeln!(buf, "true,{},{},{},{},{}", w.m, w.n, w.p, pos.join(";"), p.set.density())?;
        }
        None => writeln!(buf, "false,,,,not found in range,{}", p.set.density())?,
    }
    ctx.out.add("pattern.csv", buf);
    if p.census {
        let rows = pattern_census(&p.set, &p.pattern, p.shift, p.n_max, t)?;
        let fp = ctx.fp.clone();
        ctx.csv("census.csv", |b| write_census_csv(b, &fp, &rows))?;
    }
    if !p.windows.is_empty() {
        let prof = upper_density_profile(&p.set, &p.windows)?;
        let mut buf = Vec::new();
        ctx.header(&mut buf, "window,max_window_density")?;
        for (l, d) in prof {
            writeln!(buf, "{l},{d}")?;
        }
        ctx.out.add("density.csv", buf);
    }
    Ok(())
}
