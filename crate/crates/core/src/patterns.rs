//! Finite integer sets, sliding-window densities and search for bracket
//! patterns `{m, m + a_1(n), …, m + a_k(n)}` with `n` a shifted prime.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::averages::{recurrence_measure, Fingerprint};
use crate::error::{invalid, Error, Result};
use crate::phase::Phase;
use crate::primes::PrimeTables;
use crate::sequences::{BracketPattern, Irrational};
use crate::systems::{CircleSet, RotationSystem};

/// A subset of `[1, N]` stored as a bit array; bit `i` is the integer `i + 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntegerSet {
    n: usize,
    bits: Vec<u64>,
    source: String,
}

pub const SET_HEADER: &str = "# ulab-set v1 N=";

impl IntegerSet {
    pub fn empty(n: usize) -> IntegerSet {
        IntegerSet {
            n,
            bits: vec![0; n.div_ceil(64)],
            source: "empty".into(),
        }
    }

    pub fn full(n: usize) -> IntegerSet {
        let mut s = IntegerSet::from_fn(n, |_| true);
        s.source = "full".into();
        s
    }

    pub fn evens(n: usize) -> IntegerSet {
        let mut s = IntegerSet::from_fn(n, |j| j % 2 == 0);
        s.source = "evens".into();
        s
    }

    /// `[lo, hi]` clipped to `[1, N]`.
    pub fn interval(n: usize, lo: u64, hi: u64) -> IntegerSet {
        let mut s = IntegerSet::from_fn(n, |j| lo <= j && j <= hi);
        s.source = format!("interval({lo};{hi})");
        s
    }

    /// Each `j` kept independently with probability `density`.
    pub fn bernoulli(n: usize, density: f64, seed: u64) -> Result<IntegerSet> {
        if !(0.0..=1.0).contains(&density) {
            return invalid(format!("density must lie in [0, 1], got {density}"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = IntegerSet::from_fn(n, |_| rng.gen::<f64>() < density);
        s.source = format!("bernoulli(p={density};seed={seed})");
        Ok(s)
    }

    /// `{j ≤ N : {jα} ∈ arcs}`.
    pub fn rotation_discretization(n: usize, alpha: &Irrational, arcs: &CircleSet) -> Result<IntegerSet> {
        let step = alpha.phase();
        let mut x = Phase::ZERO;
        let mut s = IntegerSet::from_fn(n, |_| {
            x = x + step;
            arcs.contains(x)
        });
        s.source = format!("rotation({})", alpha.label());
        Ok(s)
    }

    /// Builds from a predicate called in ascending order on `1..=N`.
    pub fn from_fn(n: usize, mut f: impl FnMut(u64) -> bool) -> IntegerSet {
        let mut s = IntegerSet::empty(n);
        for j in 1..=n as u64 {
            if f(j) {
                s.insert(j);
            }
        }
        s.source = "predicate".into();
        s
    }

    pub fn from_members(n: usize, members: &[u64]) -> Result<IntegerSet> {
        let mut s = IntegerSet::empty(n);
        for &j in members {
            if j < 1 || j as usize > n {
                return invalid(format!("member {j} outside [1, {n}]"));
            }
            s.insert(j);
        }
        s.source = "members".into();
        Ok(s)
    }

    fn insert(&mut self, j: u64) {
        let i = j as usize - 1;
        self.bits[i / 64] |= 1 << (i % 64);
    }

    pub fn window(&self) -> usize {
        self.n
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn contains(&self, j: i64) -> bool {
        if j < 1 || j as usize > self.n {
            return false;
        }
        let i = j as usize - 1;
        self.bits[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn density(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.count() as f64 / self.n as f64
        }
    }

    pub fn members(&self) -> Vec<u64> {
        (1..=self.n as i64).filter(|&j| self.contains(j)).map(|j| j as u64).collect()
    }

    pub fn is_subset(&self, other: &IntegerSet) -> bool {
        self.n == other.n && self.bits.iter().zip(&other.bits).all(|(a, b)| a & !b == 0)
    }

    /// Header line, then one member per line.
    pub fn write_to(&self, out: &mut dyn Write) -> Result<()> {
        writeln!(out, "{SET_HEADER}{}", self.n)?;
        for j in self.members() {
            writeln!(out, "{j}")?;
        }
        Ok(())
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<IntegerSet> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or("");
        let n: usize = header
            .trim()
            .strip_prefix(SET_HEADER)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::Format(format!("expected header \"{SET_HEADER}<N>\", got {header:?}")))?;
        let mut members = Vec::new();
        for (i, line) in lines.enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let j: u64 = t
                .parse()
                .map_err(|_| Error::Format(format!("line {}: not an integer: {t:?}", i + 2)))?;
            if j < 1 || j as usize > n {
                return Err(Error::Format(format!("line {}: member {j} outside [1, {n}]", i + 2)));
            }
            members.push(j);
        }
        let mut s = IntegerSet::from_members(n, &members)?;
        s.source = "file".into();
        Ok(s)
    }

    pub fn read_file(path: &Path) -> Result<IntegerSet> {
        IntegerSet::parse(&fs::read_to_string(path)?)
    }

    /// Number of `m ∈ [1, N]` with `m + s ∈ A` for every shift `s`.
    fn count_shifted(&self, shifts: &[i64]) -> u64 {
        let words = self.bits.len();
        let mut acc = vec![u64::MAX; words];
        if !self.n.is_multiple_of(64) {
            acc[words - 1] = (1u64 << (self.n % 64)) - 1;
        }
        for &s in shifts {
            for (w, a) in acc.iter_mut().enumerate() {
                if *a != 0 {
                    *a &= self.word_at(w as i64 * 64 + s);
                }
            }
        }
        acc.iter().map(|w| w.count_ones() as u64).sum()
    }

    /// Bits `[start, start + 64)` as a word; positions outside the window are 0.
    fn word_at(&self, start: i64) -> u64 {
        let words = self.bits.len() as i64;
        let q = start.div_euclid(64);
        let r = start.rem_euclid(64) as u32;
        let get = |i: i64| if (0..words).contains(&i) { self.bits[i as usize] } else { 0 };
        if r == 0 {
            get(q)
        } else {
            get(q) >> r | get(q + 1) << (64 - r)
        }
    }
}

/// Maximum density of `A` over length-`L` subintervals of `[1, N]`.
pub fn upper_density_profile(set: &IntegerSet, window_sizes: &[usize]) -> Result<Vec<(usize, f64)>> {
    let n = set.window();
    let mut prefix = vec![0u32; n + 1];
    for j in 1..=n {
        prefix[j] = prefix[j - 1] + set.contains(j as i64) as u32;
    }
    window_sizes
        .iter()
        .map(|&l| {
            if l < 1 || l > n {
                return invalid(format!("window size {l} outside [1, {n}]"));
            }
            let best = (l..=n).map(|e| prefix[e] - prefix[e - l]).max().unwrap_or(0);
            Ok((l, best as f64 / l as f64))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatternWitness {
    pub m: u64,
    pub n: u64,
    pub p: u64,
    pub positions: Vec<u64>,
}

fn check_shift(shift: i64) -> Result<()> {
    if shift != 1 && shift != -1 {
        return invalid(format!("shift must be +1 or -1, got {shift}"));
    }
    Ok(())
}

/// Differences `n = p + shift ≤ n_max` in ascending order, with `p`.
fn shifted_differences(tables: &PrimeTables, shift: i64, n_max: u64) -> Result<Vec<(u64, u64)>> {
    check_shift(shift)?;
    let p_max = (n_max as i64 - shift).max(0) as u64;
    tables.require(p_max, "pattern search")?;
    Ok(tables
        .primes_up_to(p_max)
        .into_iter()
        .filter_map(|p| {
            let n = p as i64 + shift;
            (n >= 1).then_some((n as u64, p))
        })
        .collect())
}

/// Pattern offsets `0, a_1(n), …, a_k(n)`.
fn offsets(pattern: &BracketPattern, n: u64) -> Result<Vec<i64>> {
    let mut v = vec![0];
    v.extend(pattern.exponents(n as i64)?);
    Ok(v)
}

/// The least `(n, m)` with `{m, m + a_1(n), …, m + a_k(n)} ⊆ A`, where
/// `n = p + shift`, or `None` if none exists with `n ≤ n_max`.
pub fn find_pattern(
    set: &IntegerSet,
    pattern: &BracketPattern,
    shift: i64,
    n_max: u64,
    tables: &PrimeTables,
) -> Result<Option<PatternWitness>> {
    for (n, p) in shifted_differences(tables, shift, n_max)? {
        let offs = offsets(pattern, n)?;
        let lo = 1 - offs.iter().copied().min().unwrap_or(0);
        let hi = set.window() as i64 - offs.iter().copied().max().unwrap_or(0);
        for m in lo.max(1)..=hi {
            if offs.iter().all(|&o| set.contains(m + o)) {
                let w = PatternWitness {
                    m: m as u64,
                    n,
                    p,
                    positions: offs.iter().map(|&o| (m + o) as u64).collect(),
                };
                validate_witness(set, pattern, shift, &w, tables)?;
                return Ok(Some(w));
            }
        }
    }
    Ok(None)
}

/// Re-checks a witness against the bit array and the sieve.
pub fn validate_witness(
    set: &IntegerSet,
    pattern: &BracketPattern,
    shift: i64,
    w: &PatternWitness,
    tables: &PrimeTables,
) -> Result<()> {
    check_shift(shift)?;
    let expected: Vec<u64> = offsets(pattern, w.n)?.iter().map(|&o| (w.m as i64 + o) as u64).collect();
    let ok = tables.is_prime(w.p)
        && w.n as i64 == w.p as i64 + shift
        && expected == w.positions
        && w.positions.iter().all(|&q| set.contains(q as i64));
    if ok {
        Ok(())
    } else {
        Err(Error::Degenerate(format!("pattern witness {w:?} does not re-validate")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CensusRow {
    pub n: u64,
    pub p: u64,
    pub count: u64,
    pub density_estimate: f64,
}

/// Number of base points `m` completing the pattern, for every shifted prime
/// `n ≤ n_max`.
pub fn pattern_census(
    set: &IntegerSet,
    pattern: &BracketPattern,
    shift: i64,
    n_max: u64,
    tables: &PrimeTables,
) -> Result<Vec<CensusRow>> {
    let diffs = shifted_differences(tables, shift, n_max)?;
    let n = set.window().max(1) as f64;
    diffs
        .par_iter()
        .map(|&(d, p)| {
            let count = set.count_shifted(&offsets(pattern, d)?);
            Ok(CensusRow {
                n: d,
                p,
                count,
                density_estimate: count as f64 / n,
            })
        })
        .collect()
}

/// Fingerprint line, then `n,p,count,density_estimate`.
pub fn write_census_csv(out: &mut dyn Write, fp: &Fingerprint, rows: &[CensusRow]) -> Result<()> {
    writeln!(out, "{}", fp.line())?;
    writeln!(out, "n,p,count,density_estimate")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.n, r.p, r.count, r.density_estimate)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct CounterexampleReport {
    /// `(n, μ(A ∩ T^{−[n√2]}A))` for `n = 1..=n_max`.
    pub rows: Vec<(u64, f64)>,
    /// Odd `n` whose intersection is not empty.
    pub odd_nonzero: Vec<u64>,
    pub even_positive: usize,
}

impl CounterexampleReport {
    pub fn odd_all_zero(&self) -> bool {
        self.odd_nonzero.is_empty()
    }
}

/// `Tx = x + 1/(2√2)`, `A = (−1/8, 1/8)`, pattern `[n√2]`.
pub fn counterexample_scan(n_max: u64) -> Result<CounterexampleReport> {
    counterexample_scan_with(&CircleSet::from_arcs(&[(-0.125, 0.125)])?, n_max)
}

/// The same scan for another set `A`.
pub fn counterexample_scan_with(set: &CircleSet, n_max: u64) -> Result<CounterexampleReport> {
    let sys = RotationSystem::circle(Irrational::parse("inv2sqrt2")?);
    let pattern = BracketPattern::new(
        crate::sequences::BracketKind::FloorScaled,
        1,
        Some(Irrational::parse("sqrt2")?),
    )?;
    let rows: Vec<(u64, f64)> = (1..=n_max)
        .into_par_iter()
        .map(|n| Ok((n, recurrence_measure(&sys, set, &pattern, n as i64)?)))
        .collect::<Result<_>>()?;
    let odd_nonzero = rows.iter().filter(|r| r.0 % 2 == 1 && r.1 != 0.0).map(|r| r.0).collect();
    let even_positive = rows.iter().filter(|r| r.0 % 2 == 0 && r.1 > 0.0).count();
    Ok(CounterexampleReport {
        rows,
        odd_nonzero,
        even_positive,
    })
}

/// Fingerprint line, then `n,parity,measure`.
pub fn write_counterexample_csv(out: &mut dyn Write, fp: &Fingerprint, report: &CounterexampleReport) -> Result<()> {
    writeln!(out, "{}", fp.line())?;
    writeln!(out, "n,parity,measure")?;
    for &(n, m) in &report.rows {
        let parity = if n % 2 == 0 { "even" } else { "odd" };
        writeln!(out, "{n},{parity},{m}")?;
    }
    Ok(())
}

/// The least shifted prime `n = p + shift ≤ n_max` with
/// `μ(A ∩ T^{−a_1(n)}A ∩ …) > 0`, as `(n, p, measure)`.
pub fn recurrence_search(
    system: &RotationSystem,
    set: &CircleSet,
    pattern: &BracketPattern,
    shift: i64,
    n_max: u64,
    tables: &PrimeTables,
) -> Result<Option<(u64, u64, f64)>> {
    for (n, p) in shifted_differences(tables, shift, n_max)? {
        let m = recurrence_measure(system, set, pattern, n as i64)?;
        if m > 0.0 {
            return Ok(Some((n, p, m)));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primes::build_tables;
    use crate::sequences::BracketKind;

    fn pat(kind: BracketKind, k: usize) -> BracketPattern {
        BracketPattern::new(kind, k, Some(Irrational::parse("sqrt2").unwrap())).unwrap()
    }

    #[test]
    fn set_basics_and_file_round_trip() {
        let e = IntegerSet::evens(101);
        assert_eq!(e.count(), 50);
        assert!(e.contains(100) && !e.contains(101) && !e.contains(0) && !e.contains(102));
        let b = IntegerSet::bernoulli(1000, 0.3, 7).unwrap();
        assert_eq!(b, IntegerSet::bernoulli(1000, 0.3, 7).unwrap());
        assert!((b.density() - 0.3).abs() < 0.05);
        let mut buf = Vec::new();
        b.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# ulab-set v1 N=1000\n"));
        let back = IntegerSet::parse(&text).unwrap();
        assert_eq!(back.members(), b.members());
        assert!(IntegerSet::parse("# ulab-set v1 N=5\n6\n").is_err());
        assert!(IntegerSet::parse("1\n2\n").is_err());
        assert!(IntegerSet::bernoulli(10, 1.5, 0).is_err());
    }

    #[test]
    fn window_densities() {
        let n = 1000;
        assert!(upper_density_profile(&IntegerSet::full(n), &[1, 10, 1000])
            .unwrap()
            .iter()
            .all(|&(_, d)| d == 1.0));
        assert_eq!(upper_density_profile(&IntegerSet::evens(n), &[100]).unwrap(), vec![(100, 0.5)]);
        let half = IntegerSet::interval(n, 1, 500);
        assert_eq!(upper_density_profile(&half, &[250]).unwrap(), vec![(250, 1.0)]);
        assert!(upper_density_profile(&half, &[1001]).is_err());
    }

    #[test]
    fn full_set_witness_and_census() {
        let tables = build_tables(1000).unwrap();
        let full = IntegerSet::full(500);
        let p = pat(BracketKind::FloorScaled, 2);
        let w = find_pattern(&full, &p, -1, 100, &tables).unwrap().unwrap();
        assert_eq!((w.m, w.n, w.p), (1, 1, 2));
        let census = pattern_census(&full, &p, -1, 100, &tables).unwrap();
        for r in &census {
            let ak = p.exponent(2, r.n as i64).unwrap();
            assert_eq!(r.count, 500 - ak as u64);
        }
        let empty = IntegerSet::empty(500);
        assert!(pattern_census(&empty, &p, 1, 100, &tables).unwrap().iter().all(|r| r.count == 0));
        assert_eq!(find_pattern(&empty, &p, 1, 100, &tables).unwrap(), None);
    }

    #[test]
    fn evens_witness_matches_direct_search() {
        let tables = build_tables(1000).unwrap();
        let p = pat(BracketKind::ScaledFloor, 1);
        let s2 = Irrational::parse("sqrt2").unwrap();
        let w = find_pattern(&IntegerSet::evens(200), &p, -1, 500, &tables).unwrap().unwrap();
        let least = (2..500u64)
            .filter(|&q| tables.is_prime(q + 1) && s2.floor_mul(q as i64).unwrap() % 2 == 0)
            .min()
            .unwrap();
        assert_eq!((w.n, w.m), (least, 2));
    }

    #[test]
    fn census_counts_match_brute_force() {
        let tables = build_tables(2000).unwrap();
        let set = IntegerSet::bernoulli(777, 0.5, 3).unwrap();
        let p = pat(BracketKind::FloorScaled, 3);
        for r in pattern_census(&set, &p, 1, 300, &tables).unwrap() {
            let offs = offsets(&p, r.n).unwrap();
            let brute = (1..=777i64).filter(|&m| offs.iter().all(|&o| set.contains(m + o))).count();
            assert_eq!(r.count, brute as u64, "n = {}", r.n);
        }
    }

    #[test]
    fn discretized_counterexample_census() {
        let tables = build_tables(1000).unwrap();
        let n = 20_000;
        let alpha = Irrational::parse("inv2sqrt2").unwrap();
        let arc = CircleSet::from_arcs(&[(-0.125, 0.125)]).unwrap();
        let set = IntegerSet::rotation_discretization(n, &alpha, &arc).unwrap();
        let p = pat(BracketKind::FloorScaled, 1);
        let sys = RotationSystem::circle(alpha);
        for r in pattern_census(&set, &p, 1, 200, &tables).unwrap() {
            let mu = recurrence_measure(&sys, &arc, &p, r.n as i64).unwrap();
            if mu == 0.0 {
                assert_eq!(r.count, 0, "n = {}", r.n);
            } else {
                assert!((r.density_estimate - mu).abs() < 0.01, "n = {}", r.n);
            }
        }
    }

    #[test]
    fn counterexample_small_n() {
        let rep = counterexample_scan(100).unwrap();
        assert_eq!(rep.rows.len(), 100);
        assert_eq!(rep.rows[0], (1, 0.0));
        // [2√2] = 2 shifts by 1/√2, which is 0.29 away from 0: no overlap
        assert_eq!(rep.rows[1].1, 0.0);
        // [7√2] = 9 shifts by {9/(2√2)} ≈ 0.182
        assert!(rep.odd_nonzero.contains(&7));
        assert!((rep.rows[6].1 - (0.25 - (9.0 / 8f64.sqrt()).fract())).abs() < 1e-12);
        let narrow = counterexample_scan_with(&CircleSet::from_arcs(&[(-0.0625, 0.0625)]).unwrap(), 2000).unwrap();
        assert!(narrow.odd_all_zero());
        assert!(narrow.even_positive > 0);
    }

    #[test]
    fn shifted_prime_recurrence() {
        let tables = build_tables(2000).unwrap();
        let sys = RotationSystem::circle(Irrational::parse("sqrt5").unwrap());
        let a = CircleSet::from_arcs(&[(0.0, 0.3)]).unwrap();
        let (n, p, m) = recurrence_search(&sys, &a, &pat(BracketKind::FloorScaled, 2), -1, 1000, &tables)
            .unwrap()
            .unwrap();
        assert_eq!(n + 1, p);
        assert!(m > 0.0);
    }
}
