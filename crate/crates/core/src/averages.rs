//! Multiple ergodic averages along integers, primes and W-tricked
//! progressions, evaluated on a quadrature grid; exact recurrence measures for
//! circle rotations; cube averages and the accompanying diagnostics.
//!
//! Every average is a list of terms `w_t · Π_s f_s(T^{e_{t,s}} x)` summed by
//! a fixed tree at each grid point and divided by a normalizer. Grid points are
//! processed in parallel; the per-point sum is serial, so outputs do not depend
//! on the thread count.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{invalid, Error, Result};
use crate::gowers::{embed_window, gowers_u2_spectral, SequenceWindow, DEFAULT_BUDGET};
use crate::primes::{modified_mangoldt, PrimeTables, WTrickParams};
use crate::reduce::{par_tree_sum, tree_sum};
use crate::sequences::{BracketPattern, IntervalWeight};
use crate::systems::{
    intersection_measure, rotate_set, CircleSet, DynamicalSystem, Grid, GridFunction, Observable,
    RotationSystem, SystemPower,
};

/// Per-term weight.
///
/// `ModifiedMangoldt` is a function of the progression index `n`; every other
/// weight is evaluated at the pattern argument `m` (for instance `m = Wn + r`).
#[derive(Clone, Debug, PartialEq)]
pub enum Weight {
    Unit,
    /// `Λ'(m)`.
    VonMangoldtPrime,
    /// `Λ'_{w,r}(n) = (φ(W)/W) Λ'(Wn + r)`.
    ModifiedMangoldt(WTrickParams),
    /// `ξ({mα}) · inner`, with `α` taken from the pattern.
    Interval(IntervalWeight, Box<Weight>),
    /// `a(m)` from a sampled window (`m` is 1-based).
    Nilsequence(SequenceWindow),
    Product(Vec<Weight>),
}

impl Weight {
    pub fn label(&self) -> String {
        match self {
            Weight::Unit => "unit".into(),
            Weight::VonMangoldtPrime => "von-mangoldt-prime".into(),
            Weight::ModifiedMangoldt(p) => format!("modified-mangoldt(w={};r={})", p.w(), p.residue()),
            Weight::Interval(iw, inner) => format!(
                "interval(k={};cell={}/{};[{};{}))*{}",
                iw.k(),
                iw.index(),
                iw.cells(),
                iw.lo(),
                iw.hi(),
                inner.label()
            ),
            Weight::Nilsequence(w) => format!("nilsequence(len={})", w.len()),
            Weight::Product(ws) => ws.iter().map(|w| w.label()).collect::<Vec<_>>().join("*"),
        }
    }

    fn is_real(&self) -> bool {
        match self {
            Weight::Nilsequence(w) => w.values().iter().all(|v| v.im == 0.0),
            Weight::Interval(_, inner) => inner.is_real(),
            Weight::Product(ws) => ws.iter().all(|w| w.is_real()),
            _ => true,
        }
    }

    fn eval(&self, n: u64, m: i64, pattern: &BracketPattern, tables: Option<&PrimeTables>) -> Result<Complex64> {
        let one = Complex64::new(1.0, 0.0);
        Ok(match self {
            Weight::Unit => one,
            Weight::VonMangoldtPrime => {
                let t = need_tables(tables, "von Mangoldt weight")?;
                if m < 1 {
                    return invalid(format!("Λ' evaluated at m = {m} < 1"));
                }
                t.require(m as u64, "von Mangoldt weight")?;
                Complex64::new(t.lambda_prime_unchecked(m as u64), 0.0)
            }
            Weight::ModifiedMangoldt(p) => {
                let t = need_tables(tables, "modified von Mangoldt weight")?;
                Complex64::new(modified_mangoldt(t, p, n)?, 0.0)
            }
            Weight::Interval(iw, inner) => {
                let alpha = pattern.alpha().ok_or_else(|| {
                    Error::InvalidArgument("interval weight needs a pattern with an irrational α".into())
                })?;
                if iw.contains(alpha.frac_phase(m)?) {
                    inner.eval(n, m, pattern, tables)?
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }
            Weight::Nilsequence(w) => {
                if m < 1 || m as usize > w.len() {
                    return invalid(format!(
                        "nilsequence weight of length {} evaluated at m = {m}",
                        w.len()
                    ));
                }
                w.values()[m as usize - 1]
            }
            Weight::Product(ws) => {
                let mut acc = one;
                for w in ws {
                    acc *= w.eval(n, m, pattern, tables)?;
                    if acc == Complex64::new(0.0, 0.0) {
                        break;
                    }
                }
                acc
            }
        })
    }
}

fn need_tables<'a>(tables: Option<&'a PrimeTables>, what: &str) -> Result<&'a PrimeTables> {
    tables.ok_or_else(|| Error::Resource(format!("{what} needs prime tables")))
}

/// Which indices are summed and how they map to the pattern argument.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IndexMode {
    /// `n = 1..=N`, `m = n`, normalizer `N`.
    Integers,
    /// primes `p ≤ N`, `m = p`, normalizer `π(N)`.
    Primes,
    /// `n = 1..=N`, `m = modulus·n + offset`, normalizer `N`.
    Progression { modulus: u64, offset: i64 },
}

impl IndexMode {
    pub fn label(&self) -> String {
        match self {
            IndexMode::Integers => "integers".into(),
            IndexMode::Primes => "primes".into(),
            IndexMode::Progression { modulus, offset } => format!("progression({modulus}n{offset:+})"),
        }
    }

    /// `(n, m)` pairs and the normalizer.
    fn indices(&self, n: usize, tables: Option<&PrimeTables>) -> Result<(Vec<(u64, i64)>, f64)> {
        if n < 1 {
            return invalid("window length N must be at least 1");
        }
        match *self {
            IndexMode::Integers => Ok(((1..=n as u64).map(|k| (k, k as i64)).collect(), n as f64)),
            IndexMode::Primes => {
                let t = need_tables(tables, "prime-indexed average")?;
                t.require(n as u64, "prime-indexed average")?;
                let ps = t.primes_up_to(n as u64);
                if ps.is_empty() {
                    return Err(Error::Degenerate(format!("no primes up to N = {n}")));
                }
                let norm = ps.len() as f64;
                Ok((ps.into_iter().map(|p| (p, p as i64)).collect(), norm))
            }
            IndexMode::Progression { modulus, offset } => {
                if modulus < 1 {
                    return invalid("progression modulus must be at least 1");
                }
                let v = (1..=n as u64)
                    .map(|k| (k, modulus as i64 * k as i64 + offset))
                    .collect();
                Ok((v, n as f64))
            }
        }
    }
}

/// Inputs of a multiple average.
#[derive(Clone, Debug, PartialEq)]
pub struct AverageSpec {
    pub system: DynamicalSystem,
    /// `f_1, …, f_k`, with `k = pattern.k()`.
    pub observables: Vec<Observable>,
    /// Optional `f_0`, multiplied pointwise into the result.
    pub f0: Option<Observable>,
    pub pattern: BracketPattern,
    pub weight: Weight,
    pub index: IndexMode,
    pub n: usize,
    /// Grid points per dimension.
    pub grid: usize,
    pub budget: f64,
}

impl AverageSpec {
    pub fn new(
        system: DynamicalSystem,
        observables: Vec<Observable>,
        pattern: BracketPattern,
        n: usize,
        grid: usize,
    ) -> AverageSpec {
        AverageSpec {
            system,
            observables,
            f0: None,
            pattern,
            weight: Weight::Unit,
            index: IndexMode::Integers,
            n,
            grid,
            budget: DEFAULT_BUDGET,
        }
    }

    pub fn fingerprint(&self) -> Fingerprint {
        Fingerprint::new()
            .with("system", self.system.label())
            .with("pattern_kind", self.pattern.kind().name())
            .with("alpha", self.pattern.alpha_label())
            .with("k", self.pattern.k())
            .with("weight", self.weight.label())
            .with("index", self.index.label())
            .with("N", self.n)
            .with("grid", self.grid)
    }

    fn validate(&self) -> Result<()> {
        if self.observables.len() != self.pattern.k() {
            return invalid(format!(
                "pattern has k = {} but {} observables were given",
                self.pattern.k(),
                self.observables.len()
            ));
        }
        Ok(())
    }
}

/// Terms of an average: weights, per-slot exponents and the normalizer.
struct TermPlan {
    weights: Vec<Complex64>,
    slots: usize,
    /// `exps[t * slots + s]` indexes `powers`.
    exps: Vec<u32>,
    powers: Vec<SystemPower>,
    norm: f64,
}

impl TermPlan {
    fn new(slots: usize, norm: f64) -> TermPlan {
        TermPlan {
            weights: Vec::new(),
            slots,
            exps: Vec::new(),
            powers: Vec::new(),
            norm,
        }
    }

    fn push(
        &mut self,
        system: &DynamicalSystem,
        cache: &mut HashMap<i64, u32>,
        weight: Complex64,
        exps: &[i64],
    ) -> Result<()> {
        debug_assert_eq!(exps.len(), self.slots);
        self.weights.push(weight);
        for &e in exps {
            let idx = match cache.get(&e) {
                Some(&i) => i,
                None => {
                    let i = self.powers.len() as u32;
                    self.powers.push(system.power(e)?);
                    cache.insert(e, i);
                    i
                }
            };
            self.exps.push(idx);
        }
        Ok(())
    }

    fn check_budget(&self, grid: &Grid, budget: f64) -> Result<()> {
        let work = self.weights.len() as f64 * self.slots as f64 * grid.len() as f64;
        if work > budget {
            return Err(Error::Resource(format!(
                "average needs about {work:.3e} observable evaluations, above the budget of {budget:.3e}"
            )));
        }
        Ok(())
    }

    fn evaluate(&self, grid: Grid, observables: &[Observable], f0: Option<&Observable>) -> GridFunction {
        let values: Vec<Complex64> = (0..grid.len())
            .into_par_iter()
            .map(|gi| {
                let x = grid.point(gi);
                let s = tree_sum(self.weights.len(), |t| {
                    let mut p = self.weights[t];
                    for (s, f) in observables.iter().enumerate() {
                        let y = self.powers[self.exps[t * self.slots + s] as usize].act(&x);
                        p *= f.eval(&y);
                    }
                    p
                });
                let head = f0.map_or(Complex64::new(1.0, 0.0), |f| f.eval(&x));
                head * s / self.norm
            })
            .collect();
        GridFunction::new(grid, values).expect("grid length matches")
    }
}

/// `x ↦ (1/norm) Σ weight · Π_i f_i(T^{a_i(m)} x)` on the grid.
pub fn multi_average(spec: &AverageSpec, tables: Option<&PrimeTables>) -> Result<GridFunction> {
    spec.validate()?;
    let grid = spec.system.grid(spec.grid)?;
    let (indices, norm) = spec.index.indices(spec.n, tables)?;
    let k = spec.pattern.k();
    let mut plan = TermPlan::new(k, norm);
    let mut cache = HashMap::new();
    for (n, m) in indices {
        let w = spec.weight.eval(n, m, &spec.pattern, tables)?;
        if w == Complex64::new(0.0, 0.0) {
            continue;
        }
        plan.push(&spec.system, &mut cache, w, &spec.pattern.exponents(m)?)?;
    }
    plan.check_budget(&grid, spec.budget)?;
    Ok(plan.evaluate(grid, &spec.observables, spec.f0.as_ref()))
}

/// The average over primes `p ≤ N` with weight `1/π(N)`.
pub fn prime_average(spec: &AverageSpec, tables: &PrimeTables) -> Result<GridFunction> {
    let mut s = spec.clone();
    s.index = IndexMode::Primes;
    multi_average(&s, Some(tables))
}

/// The average along `m = Wn + r`, `n = 1..=N`.
pub fn w_tricked_average(spec: &AverageSpec, params: &WTrickParams, tables: Option<&PrimeTables>) -> Result<GridFunction> {
    let mut s = spec.clone();
    s.index = IndexMode::Progression {
        modulus: params.modulus(),
        offset: params.residue() as i64,
    };
    multi_average(&s, tables)
}

/// `|(1/π(N)^k) Σ_p a(p) − (1/N^k) Σ_n Π Λ'(n_i) a(n)|` for `k ∈ {1, 2}`.
pub fn prime_vs_mangoldt_compare(
    a: &(dyn Fn(&[u64]) -> Complex64 + Sync),
    n: u64,
    k: usize,
    tables: &PrimeTables,
) -> Result<f64> {
    if !(1..=2).contains(&k) {
        return invalid(format!("prime/Mangoldt comparison supports k = 1 or 2, got {k}"));
    }
    tables.require(n, "prime/Mangoldt comparison")?;
    let ps = tables.primes_up_to(n);
    if ps.is_empty() {
        return Err(Error::Degenerate(format!("no primes up to N = {n}")));
    }
    let l = ps.len();
    let logs: Vec<f64> = ps.iter().map(|&p| (p as f64).ln()).collect();
    let (lhs, rhs) = if k == 1 {
        let vals: Vec<Complex64> = ps.iter().map(|&p| a(&[p])).collect();
        (
            tree_sum(l, |i| vals[i]) / l as f64,
            tree_sum(l, |i| vals[i] * logs[i]) / n as f64,
        )
    } else {
        let pair = par_tree_sum(l * l, |t| {
            let (i, j) = (t / l, t % l);
            let v = a(&[ps[i], ps[j]]);
            Pair(v, v * (logs[i] * logs[j]))
        });
        (pair.0 / (l * l) as f64, pair.1 / (n as f64 * n as f64))
    };
    Ok((lhs - rhs).norm())
}

/// A pair that sums componentwise, for reducing two sums in one pass.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Pair(pub Complex64, pub Complex64);

impl std::ops::Add for Pair {
    type Output = Pair;
    fn add(self, o: Pair) -> Pair {
        Pair(self.0 + o.0, self.1 + o.1)
    }
}

/// One point of a profile or sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfilePoint {
    pub n: u64,
    pub value: f64,
    pub meta: String,
}

/// `μ(A ∩ T^{−a_1(n)}A ∩ … ∩ T^{−a_k(n)}A)` for each `n`, exactly.
pub fn recurrence_sequence(
    system: &RotationSystem,
    set: &CircleSet,
    pattern: &BracketPattern,
    n_list: &[i64],
) -> Result<Vec<ProfilePoint>> {
    n_list
        .par_iter()
        .map(|&n| {
            Ok(ProfilePoint {
                n: n as u64,
                value: recurrence_measure(system, set, pattern, n)?,
                meta: pattern.kind().name().into(),
            })
        })
        .collect()
}

/// The exact measure for the pattern argument `m`.
pub fn recurrence_measure(system: &RotationSystem, set: &CircleSet, pattern: &BracketPattern, m: i64) -> Result<f64> {
    let mut sets = Vec::with_capacity(pattern.k() + 1);
    sets.push(set.clone());
    for e in pattern.exponents(m)? {
        sets.push(rotate_set(system, set, e)?);
    }
    Ok(intersection_measure(&sets))
}

/// Index mode used by recurrence averages: the shifted-prime progression
/// `m = Wn + r − 1` under a modified von Mangoldt weight, else `m = n`.
pub fn recurrence_index(weight: &Weight) -> IndexMode {
    match weight {
        Weight::ModifiedMangoldt(p) => IndexMode::Progression {
            modulus: p.modulus(),
            offset: p.residue() as i64 - 1,
        },
        Weight::Interval(_, inner) => recurrence_index(inner),
        Weight::Product(ws) => ws
            .iter()
            .map(recurrence_index)
            .find(|m| *m != IndexMode::Integers)
            .unwrap_or(IndexMode::Integers),
        _ => IndexMode::Integers,
    }
}

/// `(1/N) Σ_{n ≤ N} weight(n) · μ(A ∩ T^{−a_1(m)}A ∩ …)` with exact arcs.
pub fn recurrence_average(
    system: &RotationSystem,
    set: &CircleSet,
    pattern: &BracketPattern,
    n: usize,
    weight: &Weight,
    tables: Option<&PrimeTables>,
) -> Result<f64> {
    if !weight.is_real() {
        return invalid("recurrence averages need a real weight");
    }
    let (indices, norm) = recurrence_index(weight).indices(n, tables)?;
    let weights: Vec<f64> = indices
        .iter()
        .map(|&(k, m)| Ok(weight.eval(k, m, pattern, tables)?.re))
        .collect::<Result<_>>()?;
    let measures: Vec<f64> = indices
        .par_iter()
        .zip(&weights)
        .map(|(&(_, m), &w)| {
            if w == 0.0 {
                Ok(0.0)
            } else {
                recurrence_measure(system, set, pattern, m)
            }
        })
        .collect::<Result<_>>()?;
    Ok(tree_sum(indices.len(), |i| weights[i] * measures[i]) / norm)
}

/// The same average by grid quadrature with `G` points.
pub fn recurrence_average_grid(
    system: &RotationSystem,
    set: &CircleSet,
    pattern: &BracketPattern,
    n: usize,
    weight: &Weight,
    g: usize,
    tables: Option<&PrimeTables>,
) -> Result<f64> {
    let ind = Observable::ArcIndicator(set.clone());
    let mut spec = AverageSpec::new(
        DynamicalSystem::Rotation(system.clone()),
        vec![ind.clone(); pattern.k()],
        pattern.clone(),
        n,
        g,
    );
    spec.f0 = Some(ind);
    spec.weight = weight.clone();
    spec.index = recurrence_index(weight);
    spec.budget = f64::INFINITY;
    Ok(multi_average(&spec, tables)?.mean().re)
}

/// `‖A(N_{j+1}) − A(N_j)‖` on the grid for consecutive windows.
pub fn cauchy_profile(spec: &AverageSpec, windows: &[usize], tables: Option<&PrimeTables>) -> Result<Vec<ProfilePoint>> {
    if windows.len() < 2 || windows.len() > 12 {
        return invalid(format!("Cauchy profile needs 2 to 12 windows, got {}", windows.len()));
    }
    if windows.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("Cauchy profile windows must be strictly increasing");
    }
    let mut prev: Option<GridFunction> = None;
    let mut out = Vec::new();
    for &n in windows {
        let mut s = spec.clone();
        s.n = n;
        let cur = multi_average(&s, tables)?;
        if let Some(p) = prev {
            out.push(ProfilePoint {
                n: n as u64,
                value: crate::systems::grid_l2_distance(&cur, &p)?,
                meta: format!("{}->{}", out.last().map_or(windows[0] as u64, |q: &ProfilePoint| q.n), n),
            });
        }
        prev = Some(cur);
    }
    Ok(out)
}

/// Index lists for cube averages.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CubeIndex {
    /// `n_i ∈ [1, N]`.
    Integers,
    /// `n_i` prime, `≤ N`.
    Primes,
    /// `n_i = W_N (p + shift)` for primes `p ≤ N`.
    ShiftedPrimes { shift: i64, scale: u64 },
}

impl CubeIndex {
    pub fn label(&self) -> String {
        match self {
            CubeIndex::Integers => "integers".into(),
            CubeIndex::Primes => "primes".into(),
            CubeIndex::ShiftedPrimes { shift, scale } => format!("shifted-primes(shift={shift:+};W_N={scale})"),
        }
    }

    pub fn axis(&self, n: usize, tables: Option<&PrimeTables>) -> Result<Vec<i64>> {
        let list: Vec<i64> = match *self {
            CubeIndex::Integers => (1..=n as i64).collect(),
            CubeIndex::Primes | CubeIndex::ShiftedPrimes { .. } => {
                let t = need_tables(tables, "prime cube average")?;
                t.require(n as u64, "prime cube average")?;
                let ps = t.primes_up_to(n as u64);
                match *self {
                    CubeIndex::ShiftedPrimes { shift, scale } => {
                        if shift != 1 && shift != -1 {
                            return invalid(format!("shift must be +1 or -1, got {shift}"));
                        }
                        if scale < 1 {
                            return invalid("W_N must be at least 1");
                        }
                        ps.iter()
                            .map(|&p| p as i64 + shift)
                            .filter(|&q| q >= 1)
                            .map(|q| q * scale as i64)
                            .collect()
                    }
                    _ => ps.into_iter().map(|p| p as i64).collect(),
                }
            }
        };
        if list.is_empty() {
            return Err(Error::Degenerate(format!("empty index list for N = {n}")));
        }
        Ok(list)
    }
}

/// `ε` of `slot`: bit `j` of `slot + 1` is `ε_{j+1}`.
fn epsilon_dot(slot: usize, ns: &[i64]) -> i64 {
    ns.iter()
        .enumerate()
        .filter(|(j, _)| (slot + 1) >> j & 1 == 1)
        .map(|(_, &n)| n)
        .sum()
}

/// `(1/L^k) Σ_{n ∈ list^k} Π_{ε ≠ 0} f_ε(T^{ε·n} x)`, observables ordered by
/// `ε` read as a binary number (`ε_1` is the low bit).
#[allow(clippy::too_many_arguments)]
pub fn cube_average(
    system: &DynamicalSystem,
    observables: &[Observable],
    k: usize,
    n: usize,
    index: CubeIndex,
    grid: usize,
    budget: f64,
    tables: Option<&PrimeTables>,
) -> Result<GridFunction> {
    if !(1..=3).contains(&k) {
        return invalid(format!("cube averages support k = 1, 2, 3, got {k}"));
    }
    let slots = (1 << k) - 1;
    if observables.len() != slots {
        return invalid(format!("k = {k} needs {slots} observables f_ε, got {}", observables.len()));
    }
    let axis = index.axis(n, tables)?;
    let l = axis.len();
    let terms = l.pow(k as u32);
    let grid = system.grid(grid)?;
    let work = terms as f64 * slots as f64 * grid.len() as f64;
    if work > budget {
        return Err(Error::Resource(format!(
            "cube average needs about {work:.3e} observable evaluations, above the budget of {budget:.3e}"
        )));
    }
    let mut plan = TermPlan::new(slots, terms as f64);
    let mut cache = HashMap::new();
    let one = Complex64::new(1.0, 0.0);
    let mut ns = vec![0i64; k];
    let mut exps = vec![0i64; slots];
    for t in 0..terms {
        let mut rest = t;
        for j in (0..k).rev() {
            ns[j] = axis[rest % l];
            rest /= l;
        }
        for (s, e) in exps.iter_mut().enumerate() {
            *e = epsilon_dot(s, &ns);
        }
        plan.push(system, &mut cache, one, &exps)?;
    }
    Ok(plan.evaluate(grid, observables, None))
}

/// `(1/L^k) Σ_{n ∈ list^k} μ(∩_{ε ∈ {0,1}^k} T^{−ε·n} A)` with exact arcs.
pub fn cube_recurrence(
    system: &RotationSystem,
    set: &CircleSet,
    k: usize,
    n: usize,
    index: CubeIndex,
    tables: Option<&PrimeTables>,
) -> Result<f64> {
    if !(1..=3).contains(&k) {
        return invalid(format!("cube recurrence supports k = 1, 2, 3, got {k}"));
    }
    let axis = index.axis(n, tables)?;
    let l = axis.len();
    let terms = l.pow(k as u32);
    let slots = (1 << k) - 1;
    let measures: Vec<f64> = (0..terms)
        .into_par_iter()
        .map(|t| {
            let mut ns = vec![0i64; k];
            let mut rest = t;
            for j in (0..k).rev() {
                ns[j] = axis[rest % l];
                rest /= l;
            }
            let mut sets = vec![set.clone()];
            for s in 0..slots {
                sets.push(rotate_set(system, set, epsilon_dot(s, &ns))?);
            }
            Ok(intersection_measure(&sets))
        })
        .collect::<Result<_>>()?;
    Ok(tree_sum(terms, |t| measures[t]) / terms as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub n: usize,
    pub k: usize,
    pub j: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// Added to the denominator of bound ratios.
pub const RATIO_EPS: f64 = 1e-6;

/// Compares `‖(1/N^k) Σ Π b_i(n_i) Π_ε T^{ε·n} f_ε‖` (grid L²) with
/// `‖b_j 1_{[1,N]}‖_{U²(Z_{2N})}`; `k ≤ 2`.
pub fn cube_bound_check(
    b: &[SequenceWindow],
    system: &DynamicalSystem,
    observables: &[Observable],
    n: usize,
    j: usize,
    grid: usize,
) -> Result<BoundReport> {
    let k = b.len();
    if !(1..=2).contains(&k) {
        return invalid(format!("cube bound check supports k = 1 or 2, got {k}"));
    }
    if j < 1 || j > k {
        return invalid(format!("j must lie in 1..={k}, got {j}"));
    }
    if observables.len() != (1 << k) - 1 {
        return invalid(format!("k = {k} needs {} observables", (1 << k) - 1));
    }
    if n < 1 || b.iter().any(|w| w.len() < n) {
        return invalid(format!("every b_i must have at least N = {n} entries"));
    }
    let grid = system.grid(grid)?;
    let powers: Vec<SystemPower> = (0..=(k * n) as i64)
        .map(|e| system.power(e))
        .collect::<Result<_>>()?;
    let zero = Complex64::new(0.0, 0.0);
    let nf = n as f64;
    let values: Vec<Complex64> = if k == 1 {
        (0..grid.len())
            .into_par_iter()
            .map(|gi| {
                let x = grid.point(gi);
                tree_sum(n, |i| b[0].values()[i] * observables[0].eval(&powers[i + 1].act(&x))) / nf
            })
            .collect()
    } else {
        let len = (2 * n + 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(len);
        let inv = planner.plan_fft_inverse(len);
        (0..grid.len())
            .into_par_iter()
            .map(|gi| {
                let x = grid.point(gi);
                let mut u = vec![zero; len];
                let mut v = vec![zero; len];
                for i in 1..=n {
                    let y = powers[i].act(&x);
                    u[i] = b[0].values()[i - 1] * observables[0].eval(&y);
                    v[i] = b[1].values()[i - 1] * observables[1].eval(&y);
                }
                fwd.process(&mut u);
                fwd.process(&mut v);
                for (a, c) in u.iter_mut().zip(&v) {
                    *a *= c;
                }
                inv.process(&mut u);
                let scale = 1.0 / len as f64;
                tree_sum(2 * n - 1, |t| {
                    let s = t + 2;
                    u[s] * scale * observables[2].eval(&powers[s].act(&x))
                }) / (nf * nf)
            })
            .collect()
    };
    let lhs = GridFunction::new(grid, values)?.l2_norm();
    let bj = SequenceWindow::new(b[j - 1].values()[..n].to_vec())?;
    let rhs = gowers_u2_spectral(&embed_window(&bj, 2)?)?.value;
    Ok(BoundReport {
        n,
        k,
        j,
        lhs,
        rhs,
        ratio: lhs / (rhs + RATIO_EPS),
    })
}

/// Linear multiple average `(1/norm) Σ a(m) Π_i f_i(T^{im} x)` weighted by a
/// nilsequence window, over integers or primes.
pub fn nilweighted_average(
    system: &DynamicalSystem,
    observables: &[Observable],
    weight: &SequenceWindow,
    n: usize,
    index: IndexMode,
    grid: usize,
    tables: Option<&PrimeTables>,
) -> Result<GridFunction> {
    let pattern = BracketPattern::linear(observables.len().max(1))?;
    let mut spec = AverageSpec::new(system.clone(), observables.to_vec(), pattern, n, grid);
    spec.index = index;
    spec.weight = match index {
        IndexMode::Integers | IndexMode::Primes => Weight::Nilsequence(weight.clone()),
        IndexMode::Progression { .. } => {
            return invalid("nilsequence-weighted averages run over integers or primes")
        }
    };
    multi_average(&spec, tables)
}

#[derive(Clone, Debug, PartialEq)]
pub struct VdcReport {
    pub lhs: f64,
    pub rhs: f64,
    pub constant: f64,
    pub pass: bool,
}

/// `‖(1/N) Σ v(n)‖²` against
/// `(1/N²) Σ ‖v(n)‖² + (1/N) Σ_{1≤h<N} |(1/N) Σ_{n ≤ N−h} ⟨v(n+h), v(n)⟩|`.
pub fn vdc_check(v: &[Vec<Complex64>], constant: f64) -> Result<VdcReport> {
    let n = v.len();
    if n < 2 {
        return invalid("van der Corput check needs N ≥ 2 vectors");
    }
    let dim = v[0].len();
    if dim == 0 || dim > 64 || v.iter().any(|x| x.len() != dim) {
        return invalid("vectors must share one dimension in 1..=64");
    }
    let nf = n as f64;
    let inner = |a: &[Complex64], b: &[Complex64]| -> Complex64 { tree_sum(dim, |i| a[i] * b[i].conj()) };
    let mean: Vec<Complex64> = (0..dim).map(|i| tree_sum(n, |t| v[t][i]) / nf).collect();
    let lhs = inner(&mean, &mean).re;
    let diag = tree_sum(n, |t| inner(&v[t], &v[t]).re) / (nf * nf);
    let off = tree_sum(n - 1, |h0| {
        let h = h0 + 1;
        (tree_sum(n - h, |t| inner(&v[t + h], &v[t])) / nf).norm()
    }) / nf;
    let rhs = diag + off;
    Ok(VdcReport {
        lhs,
        rhs,
        constant,
        pass: lhs <= constant * rhs,
    })
}

/// `key=value` pairs written as the first line of every report CSV.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Fingerprint {
    pairs: Vec<(String, String)>,
}

impl Fingerprint {
    pub fn new() -> Fingerprint {
        Fingerprint::default()
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Fingerprint {
        self.pairs.push((key.to_string(), value.to_string()));
        self
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    /// `# key=value key=value …`
    pub fn line(&self) -> String {
        let mut s = String::from("#");
        for (k, v) in &self.pairs {
            let _ = write!(s, " {k}={}", v.replace([' ', '\n', ','], "_"));
        }
        s
    }
}

/// Fingerprint line, then `N,value,meta`.
pub fn write_profile_csv(out: &mut dyn Write, fp: &Fingerprint, points: &[ProfilePoint]) -> Result<()> {
    writeln!(out, "{}", fp.line())?;
    writeln!(out, "N,value,meta")?;
    for p in points {
        writeln!(out, "{},{},{}", p.n, p.value, p.meta)?;
    }
    Ok(())
}

/// Fingerprint line, then `N,k,j,lhs,rhs,ratio`.
pub fn write_bound_csv(out: &mut dyn Write, fp: &Fingerprint, rows: &[BoundReport]) -> Result<()> {
    writeln!(out, "{}", fp.line())?;
    writeln!(out, "N,k,j,lhs,rhs,ratio")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{},{}", r.n, r.k, r.j, r.lhs, r.rhs, r.ratio)?;
    }
    Ok(())
}

/// Fingerprint line, then one row of summary statistics of a grid function.
pub fn write_grid_summary_csv(out: &mut dyn Write, fp: &Fingerprint, f: &GridFunction) -> Result<()> {
    writeln!(out, "{}", fp.line())?;
    writeln!(out, "grid,dims,mean_re,mean_im,l2,sup")?;
    let m = f.mean();
    writeln!(
        out,
        "{},{},{},{},{},{}",
        f.grid().size(),
        f.grid().dims(),
        m.re,
        m.im,
        f.l2_norm(),
        f.sup_norm()
    )?;
    Ok(())
}
