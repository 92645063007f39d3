//! Bracket sequences `[nα]`, `i[nα]`, `[inα]`, interval weights on the
//! `(k+1)!` partition of `[0, 1)` and the difference identities they satisfy.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::{Integer, Roots};
use num_traits::ToPrimitive;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::phase::{mul_u128_u64, Phase};

/// Guard against rationals: `|α − p/q| > 10^{-13}` for all `q ≤ 10^6`.
const GUARD_Q: u64 = 1_000_000;
const GUARD_DIST: f64 = 1e-13;
const TIE_TOL: f64 = 1e-9;

const PI_FRAC: u128 = 0x243F6A8885A308D313198A2E03707344;
const E_FRAC: u128 = 0xB7E151628AED2A6ABF7158809CF4F3C7;

/// An irrational number held as `int_part + frac / 2^128`.
///
/// The 128-bit fraction is the floor of the true value, so for `|n| ≤ MAX_INDEX`
/// (about `2^40`) the product `n·α` is known to better than `2^-88` and
/// `floor(nα)` is exact unless `nα` lies within that distance of an integer.
#[derive(Clone, PartialEq, Eq)]
pub struct Irrational {
    label: String,
    int_part: i64,
    frac: u128,
}

impl Irrational {
    pub const MAX_INDEX: u64 = 1_000_000_000_000;

    /// Parses `sqrt2`, `sqrt3`, `sqrt5`, `golden`, `inv2sqrt2`, `pi`, `e`,
    /// `sqrt:<m>` or `surd:<p>,<q>,<m>,<d>` (the value `(p + q√m)/d`), each
    /// optionally prefixed by `-`.
    pub fn parse(label: &str) -> Result<Irrational> {
        let label = label.trim();
        if let Some(rest) = label.strip_prefix('-') {
            let mut a = Irrational::parse(rest)?.negated();
            a.label = label.to_string();
            return Ok(a);
        }
        let mut a = match label {
            "sqrt2" => Irrational::surd(0, 1, 2, 1)?,
            "sqrt3" => Irrational::surd(0, 1, 3, 1)?,
            "sqrt5" => Irrational::surd(0, 1, 5, 1)?,
            "golden" => Irrational::surd(1, 1, 5, 2)?,
            "inv2sqrt2" => Irrational::surd(0, 1, 2, 4)?,
            "pi" => Irrational::from_parts("pi", 3, PI_FRAC)?,
            "e" => Irrational::from_parts("e", 2, E_FRAC)?,
            _ => {
                if let Some(m) = label.strip_prefix("sqrt:") {
                    let m = parse_int(m, label)?;
                    Irrational::surd(0, 1, m, 1)?
                } else if let Some(args) = label.strip_prefix("surd:") {
                    let v: Vec<i64> = args
                        .split(',')
                        .map(|s| parse_int(s, label))
                        .collect::<Result<_>>()?;
                    if v.len() != 4 {
                        return invalid(format!("{label}: expected surd:p,q,m,d"));
                    }
                    Irrational::surd(v[0], v[1], v[2], v[3])?
                } else {
                    return invalid(format!("unknown irrational label '{label}'"));
                }
            }
        };
        a.label = label.to_string();
        Ok(a)
    }

    /// `(p + q√m) / d`, rounded down to 128 fractional bits.
    pub fn surd(p: i64, q: i64, m: i64, d: i64) -> Result<Irrational> {
        if m < 2 || d < 1 || q == 0 {
            return invalid(format!("surd ({p} + {q}√{m})/{d} needs m ≥ 2, d ≥ 1, q ≠ 0"));
        }
        let one = BigInt::from(1) << 128;
        let x: BigInt = BigInt::from(q) * BigInt::from(q) * BigInt::from(m) * &one * &one;
        let s = Roots::sqrt(&x);
        if &s * &s == x {
            return invalid(format!("√{m} is rational"));
        }
        let base = BigInt::from(p) * &one;
        let num: BigInt = if q > 0 { base + s } else { base - s - 1 };
        let scaled = num.div_floor(&BigInt::from(d));
        let (int, frac) = scaled.div_mod_floor(&one);
        let int_part = int
            .to_i64()
            .ok_or_else(|| Error::InvalidArgument(format!("surd ({p} + {q}√{m})/{d} too large")))?;
        let frac = frac.to_u128().expect("remainder below 2^128");
        Irrational::from_parts(&format!("surd:{p},{q},{m},{d}"), int_part, frac)
    }

    /// Builds `int_part + frac / 2^128` after the rationality guard.
    pub fn from_parts(label: &str, int_part: i64, frac: u128) -> Result<Irrational> {
        let a = Irrational {
            label: label.to_string(),
            int_part,
            frac,
        };
        if let Some((p, q)) = a.rational_neighbour() {
            return invalid(format!(
                "{label} is within {GUARD_DIST:e} of the rational {p}/{q}"
            ));
        }
        Ok(a)
    }

    fn rational_neighbour(&self) -> Option<(i128, u64)> {
        (1..=GUARD_Q).find_map(|q| {
            let ph = Phase(self.frac.wrapping_mul(q as u128));
            let dist = Phase(ph.dist_to_zero()).to_f64() / q as f64;
            if dist <= GUARD_DIST {
                let p = self.int_part as i128 * q as i128
                    + mul_u128_u64(self.frac, q).0 as i128
                    + (ph >= Phase::HALF) as i128;
                Some((p, q))
            } else {
                None
            }
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn to_f64(&self) -> f64 {
        self.int_part as f64 + Phase(self.frac).to_f64()
    }

    /// `floor(α)`.
    pub fn int_part(&self) -> i64 {
        self.int_part
    }

    /// `{α}` as a phase.
    pub fn phase(&self) -> Phase {
        Phase(self.frac)
    }

    pub fn negated(&self) -> Irrational {
        let (int_part, frac) = if self.frac == 0 {
            (-self.int_part, 0)
        } else {
            (-self.int_part - 1, self.frac.wrapping_neg())
        };
        Irrational {
            label: format!("-{}", self.label),
            int_part,
            frac,
        }
    }

    fn check(&self, n: i64) -> Result<()> {
        if n.unsigned_abs() > Irrational::MAX_INDEX {
            return Err(Error::Precision {
                requested: n.unsigned_abs() as u128,
                max: Irrational::MAX_INDEX as u128,
            });
        }
        Ok(())
    }

    /// `floor(n·α)`.
    pub fn floor_mul(&self, n: i64) -> Result<i64> {
        self.check(n)?;
        let m = n.unsigned_abs();
        let (hi, lo) = mul_u128_u64(self.frac, m);
        let pos = self.int_part as i128 * m as i128 + hi as i128;
        let f = if n >= 0 {
            pos
        } else {
            -pos - (lo != 0) as i128
        };
        i64::try_from(f).map_err(|_| Error::InvalidArgument(format!("floor({n}·α) overflows i64")))
    }

    /// `{n·α}` as a phase; exact modulo the `2^-128` rounding of `α`.
    pub fn frac_phase(&self, n: i64) -> Result<Phase> {
        self.check(n)?;
        Ok(Phase(self.frac).mul_int(n))
    }

    pub fn frac(&self, n: i64) -> Result<f64> {
        Ok(self.frac_phase(n)?.to_f64())
    }
}

impl fmt::Debug for Irrational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Irrational({} ≈ {})", self.label, self.to_f64())
    }
}

fn parse_int(s: &str, label: &str) -> Result<i64> {
    s.trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("{label}: '{s}' is not an integer")))
}

/// `{nα}` for the public operation.
pub fn frac(alpha: &Irrational, n: i64) -> Result<f64> {
    alpha.frac(n)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BracketKind {
    /// `a_i(n) = i·[nα]`
    ScaledFloor,
    /// `a_i(n) = [i·n·α]`
    FloorScaled,
    /// `a_i(n) = i·n`
    Linear,
}

impl BracketKind {
    pub fn name(self) -> &'static str {
        match self {
            BracketKind::ScaledFloor => "scaled-floor",
            BracketKind::FloorScaled => "floor-scaled",
            BracketKind::Linear => "linear",
        }
    }
}

impl FromStr for BracketKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<BracketKind> {
        match s.trim() {
            "scaled-floor" | "ScaledFloor" => Ok(BracketKind::ScaledFloor),
            "floor-scaled" | "FloorScaled" => Ok(BracketKind::FloorScaled),
            "linear" | "Linear" => Ok(BracketKind::Linear),
            other => invalid(format!(
                "unknown pattern kind '{other}' (scaled-floor, floor-scaled, linear)"
            )),
        }
    }
}

/// The exponent family `a_1(n), …, a_k(n)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BracketPattern {
    kind: BracketKind,
    k: usize,
    alpha: Option<Irrational>,
}

impl BracketPattern {
    pub fn new(kind: BracketKind, k: usize, alpha: Option<Irrational>) -> Result<BracketPattern> {
        if k < 1 {
            return invalid("pattern needs k ≥ 1");
        }
        if kind != BracketKind::Linear && alpha.is_none() {
            return invalid(format!("{} pattern needs an irrational α", kind.name()));
        }
        Ok(BracketPattern { kind, k, alpha })
    }

    pub fn linear(k: usize) -> Result<BracketPattern> {
        BracketPattern::new(BracketKind::Linear, k, None)
    }

    pub fn kind(&self) -> BracketKind {
        self.kind
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn alpha(&self) -> Option<&Irrational> {
        self.alpha.as_ref()
    }

    pub fn alpha_label(&self) -> &str {
        self.alpha.as_ref().map_or("none", |a| a.label())
    }

    /// `a_v(n)` for `1 ≤ v ≤ k` and any integer `n`.
    pub fn exponent(&self, v: usize, n: i64) -> Result<i64> {
        let vi = v as i64;
        match self.kind {
            BracketKind::Linear => vi
                .checked_mul(n)
                .ok_or_else(|| Error::InvalidArgument(format!("{v}·{n} overflows"))),
            BracketKind::ScaledFloor => {
                let f = self.alpha.as_ref().unwrap().floor_mul(n)?;
                f.checked_mul(vi)
                    .ok_or_else(|| Error::InvalidArgument(format!("{v}·[{n}α] overflows")))
            }
            BracketKind::FloorScaled => {
                let vn = vi.checked_mul(n).ok_or(Error::Precision {
                    requested: v as u128 * n.unsigned_abs() as u128,
                    max: Irrational::MAX_INDEX as u128,
                })?;
                self.alpha.as_ref().unwrap().floor_mul(vn)
            }
        }
    }

    /// `[a_1(n), …, a_k(n)]`.
    pub fn exponents(&self, n: i64) -> Result<Vec<i64>> {
        (1..=self.k).map(|v| self.exponent(v, n)).collect()
    }
}

/// `[a_1(n), …, a_k(n)]` for `n ≥ 1`.
pub fn bracket_exponents(pattern: &BracketPattern, n: i64) -> Result<Vec<i64>> {
    if n < 1 {
        return invalid(format!("bracket exponents need n ≥ 1, got {n}"));
    }
    pattern.exponents(n)
}

/// Partition of `[0, 1)` used for interval weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Partition {
    /// `(k+1)!` cells.
    Factorial,
    /// Two cells `[0, 1/2)`, `[1/2, 1)`.
    Coarse,
}

/// The weight `ξ(x) = 1_{[lo, hi)}(x)` with `[lo, hi]` inside a single partition cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IntervalWeight {
    k: usize,
    cells: u64,
    index: u64,
    lo: Phase,
    len: u128,
}

impl IntervalWeight {
    /// Number of cells of the `(k+1)!` partition.
    pub fn factorial_cells(k: usize) -> Result<u64> {
        (1..=k as u64 + 1)
            .try_fold(1u64, |acc, j| acc.checked_mul(j))
            .filter(|_| k <= 19)
            .ok_or_else(|| Error::InvalidArgument(format!("(k+1)! too large for k = {k}")))
    }

    fn cell_count(k: usize, partition: Partition) -> Result<u64> {
        if k < 1 {
            return invalid("interval weight needs k ≥ 1");
        }
        match partition {
            Partition::Factorial => IntervalWeight::factorial_cells(k),
            Partition::Coarse => Ok(2),
        }
    }

    /// The whole cell `[(i−1)/m, i/m)`.
    pub fn cell(k: usize, index: u64, partition: Partition) -> Result<IntervalWeight> {
        let m = IntervalWeight::cell_count(k, partition)?;
        if index < 1 || index > m {
            return invalid(format!("cell index {index} outside [1, {m}]"));
        }
        let lo = Phase::from_ratio(index - 1, m);
        let hi = Phase::from_ratio(index % m, m);
        Ok(IntervalWeight {
            k,
            cells: m,
            index,
            lo,
            len: (hi - lo).0,
        })
    }

    /// The support `[lo, hi)`, which must sit inside one cell of the `(k+1)!`
    /// partition (endpoints may overshoot the cell by `10^{-12}` and are clamped).
    pub fn new(k: usize, lo: f64, hi: f64) -> Result<IntervalWeight> {
        IntervalWeight::with_partition(k, lo, hi, Partition::Factorial)
    }

    pub fn with_partition(k: usize, lo: f64, hi: f64, partition: Partition) -> Result<IntervalWeight> {
        let m = IntervalWeight::cell_count(k, partition)?;
        if !(lo.is_finite() && hi.is_finite()) || lo < -1e-12 || hi > 1.0 + 1e-12 || lo > hi {
            return invalid(format!("support [{lo}, {hi}] is not a subinterval of [0, 1]"));
        }
        let mf = m as f64;
        let index = ((lo.max(0.0) * mf).floor() as u64 + 1).min(m);
        let (clo, chi) = ((index - 1) as f64 / mf, index as f64 / mf);
        if lo < clo - 1e-12 || hi > chi + 1e-12 {
            return invalid(format!(
                "support [{lo}, {hi}] crosses a point j/{m}; an interval weight for k = {k} \
                 must lie inside one cell of the (k+1)! partition"
            ));
        }
        let cell = IntervalWeight::cell(k, index, partition)?;
        let lo_p = if lo <= clo { cell.lo } else { Phase::from_f64(lo) };
        let hi_p = if hi >= chi {
            cell.lo + Phase(cell.len)
        } else {
            Phase::from_f64(hi)
        };
        let len = if hi >= chi && lo <= clo {
            cell.len
        } else {
            (hi_p - lo_p).0.min(cell.len)
        };
        Ok(IntervalWeight {
            k,
            cells: m,
            index,
            lo: lo_p,
            len,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn cells(&self) -> u64 {
        self.cells
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn lo(&self) -> f64 {
        self.lo.to_f64()
    }

    pub fn hi(&self) -> f64 {
        self.lo.to_f64() + Phase(self.len).to_f64()
    }

    pub fn length(&self) -> f64 {
        Phase(self.len).to_f64()
    }

    /// Half-open membership `x ∈ [lo, hi)`.
    pub fn contains(&self, x: Phase) -> bool {
        (x - self.lo).0 < self.len
    }

    pub fn eval(&self, x: Phase) -> f64 {
        if self.contains(x) {
            1.0
        } else {
            0.0
        }
    }
}

/// Nearest integer to `v·{hα}`.
pub fn closest_integer_correction(alpha: &Irrational, v: i64, h: i64) -> Result<i64> {
    if v < 1 || h < 1 {
        return invalid(format!("closest-integer correction needs v, h ≥ 1 (v = {v}, h = {h})"));
    }
    nearest_of_scaled(alpha.frac_phase(h)?, v as u64)
}

/// Nearest integer to `v·x`, erroring on near-ties.
fn nearest_of_scaled(x: Phase, v: u64) -> Result<i64> {
    let (int, fr) = mul_u128_u64(x.0, v);
    let off = (Phase(fr) - Phase::HALF).dist_to_zero();
    if Phase(off).to_f64() < TIE_TOL {
        return Err(Error::Degenerate(format!(
            "{v}·x is within {TIE_TOL:e} of a half-integer; closest integer not unique"
        )));
    }
    Ok(int as i64 + (Phase(fr) >= Phase::HALF) as i64)
}

/// `a_v(n+h) − a_v(n)`.
pub fn bracket_difference(pattern: &BracketPattern, n: i64, h: i64, v: usize) -> Result<i64> {
    if n < 1 || h < 1 || v < 1 || v > pattern.k() {
        return invalid(format!(
            "bracket difference needs n, h ≥ 1 and 1 ≤ v ≤ {} (n = {n}, h = {h}, v = {v})",
            pattern.k()
        ));
    }
    Ok(pattern.exponent(v, n + h)? - pattern.exponent(v, n)?)
}

/// A failed instance of the difference identity.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub n: i64,
    /// One entry for single differences, two for the sampled second differences.
    pub h: Vec<i64>,
    pub v: usize,
    pub expected: i64,
    pub actual: i64,
    pub frac_n: f64,
    pub frac_nh: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerifierReport {
    /// `(n, h, v)` triples checked with both endpoints in the support.
    pub checks: u64,
    /// Corner checks on the `t = 2` grid.
    pub checks_t2: u64,
    pub violations: Vec<Violation>,
}

impl VerifierReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Largest `h` used by the `t = 2` spot check.
pub const T2_H_MAX: i64 = 100;

/// Checks that `a_v(n+h) − a_v(n)` is independent of `n` whenever `{nα}` and
/// `{(n+h)α}` both lie in the weight's support, for `n ≤ n_max`, `h ≤ h_max`.
///
/// The expected value is `v[hα] + D_v(h)` for `FloorScaled`,
/// `v([hα] + D_1(h))` for `ScaledFloor` and `v·h` for `Linear`. Pairs
/// `(h_1, h_2)` with `h_i ≤ 100` are also checked at every corner of the cube
/// `n + ε_1h_1 + ε_2h_2`, where the difference must equal `Σ ε_r c_v(h_r)`.
pub fn identity_verifier(
    pattern: &BracketPattern,
    weight: &IntervalWeight,
    n_max: i64,
    h_max: i64,
) -> Result<VerifierReport> {
    if n_max < 1 || h_max < 1 {
        return invalid("identity verifier needs n_max, h_max ≥ 1");
    }
    let k = pattern.k();
    let top = n_max + h_max.max(2 * T2_H_MAX);
    let alpha = pattern.alpha();
    let phases: Vec<Phase> = (0..=top)
        .map(|m| alpha.map_or(Ok(Phase::ZERO), |a| a.frac_phase(m)))
        .collect::<Result<_>>()?;
    let in_support: Vec<bool> = phases
        .iter()
        .map(|&p| alpha.is_none() || weight.contains(p))
        .collect();
    // a[v-1][m] = a_v(m)
    let a: Vec<Vec<i64>> = (1..=k)
        .map(|v| (0..=top).map(|m| pattern.exponent(v, m)).collect())
        .collect::<Result<_>>()?;
    let support: Vec<i64> = (1..=top).filter(|&m| in_support[m as usize]).collect();
    let hc = h_max.max(T2_H_MAX);
    let mut c = vec![vec![None; hc as usize + 1]; k];
    for v in 1..=k {
        for h in 1..=hc {
            c[v - 1][h as usize] = expected_difference(pattern, v, h)?;
        }
    }

    let firsts: Vec<i64> = support.iter().copied().filter(|&n| n <= n_max).collect();
    let per_n: Vec<(u64, u64, Vec<Violation>)> = firsts
        .par_iter()
        .map(|&n| {
            let mut out = Vec::new();
            let mut checks = 0u64;
            let mut checks_t2 = 0u64;
            let start = support.partition_point(|&m| m <= n);
            let window = &support[start..];
            let frac_n = phases[n as usize].to_f64();
            for &m in window.iter().take_while(|&&m| m <= n + h_max) {
                let h = m - n;
                for v in 1..=k {
                    let actual = a[v - 1][m as usize] - a[v - 1][n as usize];
                    let expected = c[v - 1][h as usize].unwrap_or(i64::MIN);
                    checks += 1;
                    if actual != expected {
                        out.push(Violation {
                            n,
                            h: vec![h],
                            v,
                            expected,
                            actual,
                            frac_n,
                            frac_nh: phases[m as usize].to_f64(),
                        });
                    }
                }
            }
            let near: Vec<i64> = window
                .iter()
                .copied()
                .take_while(|&m| m <= n + T2_H_MAX)
                .collect();
            for &m1 in &near {
                for &m2 in &near {
                    let (h1, h2) = (m1 - n, m2 - n);
                    let corner = n + h1 + h2;
                    if !in_support[corner as usize] {
                        continue;
                    }
                    for v in 1..=k {
                        let cv = &c[v - 1];
                        let (c1, c2) = match (cv[h1 as usize], cv[h2 as usize]) {
                            (Some(x), Some(y)) => (x, y),
                            _ => (i64::MIN / 4, i64::MIN / 4),
                        };
                        let base = a[v - 1][n as usize];
                        for (pt, expected) in [(m1, c1), (m2, c2), (corner, c1 + c2)] {
                            let actual = a[v - 1][pt as usize] - base;
                            checks_t2 += 1;
                            if actual != expected {
                                out.push(Violation {
                                    n,
                                    h: vec![h1, h2],
                                    v,
                                    expected,
                                    actual,
                                    frac_n,
                                    frac_nh: phases[pt as usize].to_f64(),
                                });
                            }
                        }
                    }
                }
            }
            (checks, checks_t2, out)
        })
        .collect();

    let mut report = VerifierReport::default();
    for (c1, c2, v) in per_n {
        report.checks += c1;
        report.checks_t2 += c2;
        report.violations.extend(v);
    }
    report
        .violations
        .sort_by(|x, y| (x.n, &x.h, x.v).cmp(&(y.n, &y.h, y.v)));
    Ok(report)
}

/// The `n`-independent value of `a_v(n+h) − a_v(n)` on the support, or
/// `None` when the closest integer is not unique.
fn expected_difference(pattern: &BracketPattern, v: usize, h: i64) -> Result<Option<i64>> {
    let vi = v as i64;
    match pattern.kind() {
        BracketKind::Linear => Ok(Some(vi * h)),
        BracketKind::FloorScaled => {
            let a = pattern.alpha().unwrap();
            let d = match nearest_of_scaled(a.frac_phase(h)?, v as u64) {
                Ok(d) => d,
                Err(Error::Degenerate(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            Ok(Some(vi * a.floor_mul(h)? + d))
        }
        BracketKind::ScaledFloor => {
            let a = pattern.alpha().unwrap();
            let d = match nearest_of_scaled(a.frac_phase(h)?, 1) {
                Ok(d) => d,
                Err(Error::Degenerate(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            Ok(Some(vi * (a.floor_mul(h)? + d)))
        }
    }
}

/// Writes violations as CSV: `n,h,v,expected,actual,frac_n,frac_nh`; second
/// differences list `h` as `h1;h2`.
pub fn write_violations_csv(out: &mut dyn Write, report: &VerifierReport) -> Result<()> {
    writeln!(out, "n,h,v,expected,actual,frac_n,frac_nh")?;
    for x in &report.violations {
        let h: Vec<String> = x.h.iter().map(|h| h.to_string()).collect();
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            x.n,
            h.join(";"),
            x.v,
            x.expected,
            x.actual,
            x.frac_n,
            x.frac_nh
        )?;
    }
    Ok(())
}

/// `m ≤ n` with `{mα} < threshold`, ascending.
pub fn level_set(alpha: &Irrational, threshold: f64, n: i64) -> Result<Vec<i64>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return invalid(format!("threshold must lie in (0, 1), got {threshold}"));
    }
    alpha.check(n)?;
    let t = Phase::from_f64(threshold);
    let mut out = Vec::new();
    for m in 1..=n {
        if alpha.frac_phase(m)? < t {
            out.push(m);
        }
    }
    Ok(out)
}
