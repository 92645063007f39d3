//! Gowers uniformity norms on `Z_M`.
//!
//! Write `S_d(a) = ‖a‖_{U^d}^{2^d}`. Then `S_1(a) = |E a|^2` and
//! `S_{d+1}(a) = E_h S_d(a_h · conj(a))` with `a_h(n) = a(n + h)`. Every
//! average is a fixed-shape tree sum, so results do not depend on the thread
//! count.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Error, Result};
use crate::phase::Phase;
use crate::primes::{admissible_residues, PrimeTables, WTrickParams};
use crate::reduce::{par_tree_sum, tree_sum};
use crate::sequences::Irrational;
use crate::systems::{CircleSet, NilsequenceKind};

/// Default cap on estimated multiply-adds.
pub const DEFAULT_BUDGET: f64 = 1e11;

/// A complex function on `{1, …, N}`.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceWindow {
    values: Vec<Complex64>,
}

impl SequenceWindow {
    pub fn new(values: Vec<Complex64>) -> Result<SequenceWindow> {
        if values.is_empty() {
            return invalid("sequence window needs N ≥ 1");
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return invalid("sequence window has non-finite entries");
        }
        Ok(SequenceWindow { values })
    }

    pub fn from_real(values: &[f64]) -> Result<SequenceWindow> {
        SequenceWindow::new(values.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    /// `values()[n - 1]` is the entry at `n`.
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }
}

/// A complex function on `Z_M`.
#[derive(Clone, Debug, PartialEq)]
pub struct CyclicSequence {
    values: Vec<Complex64>,
}

impl CyclicSequence {
    pub fn new(values: Vec<Complex64>) -> Result<CyclicSequence> {
        if values.is_empty() {
            return invalid("cyclic sequence needs M ≥ 1");
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return invalid("cyclic sequence has non-finite entries");
        }
        Ok(CyclicSequence { values })
    }

    pub fn modulus(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GowersResult {
    pub d: usize,
    pub m: usize,
    pub value: f64,
    /// Multiply-adds performed (estimated from the evaluator's shape).
    pub work: f64,
}

/// Places the window at `1..=N` of `Z_{factor·N}`, zero elsewhere.
pub fn embed_window(window: &SequenceWindow, factor: usize) -> Result<CyclicSequence> {
    if factor < 2 {
        return invalid(format!("padding factor must be at least 2, got {factor}"));
    }
    let n = window.len();
    let mut values = vec![Complex64::new(0.0, 0.0); factor * n];
    values[1..=n].copy_from_slice(&window.values);
    CyclicSequence::new(values)
}

/// Multiply-adds of the inductive evaluator.
pub fn inductive_work(m: usize, d: usize) -> f64 {
    let m = m as f64;
    (1..d).fold(m, |w, _| m * (m + w))
}

/// Multiply-adds of [`gowers_norm_fast`].
pub fn fast_work(m: usize, d: usize) -> f64 {
    let mf = m as f64;
    match d {
        1 => mf,
        _ => (2..d).fold(spectral_work(m), |w, _| mf * (mf + w)),
    }
}

fn spectral_work(m: usize) -> f64 {
    let mf = m as f64;
    5.0 * mf * mf.log2().max(1.0) + mf
}

fn check_order(d: usize) -> Result<()> {
    if d == 0 || d > 5 {
        return invalid(format!("Gowers order d must lie in 1..=5, got {d}"));
    }
    Ok(())
}

fn check_budget(work: f64, budget: f64, what: &str) -> Result<()> {
    if work > budget {
        return Err(Error::Resource(format!(
            "{what} needs about {work:.3e} multiply-adds, above the budget of {budget:.3e}"
        )));
    }
    Ok(())
}

/// `‖a‖_{U^d(Z_M)}` by the inductive definition, with the default budget.
pub fn gowers_norm(seq: &CyclicSequence, d: usize) -> Result<GowersResult> {
    gowers_norm_with_budget(seq, d, DEFAULT_BUDGET)
}

pub fn gowers_norm_with_budget(seq: &CyclicSequence, d: usize, budget: f64) -> Result<GowersResult> {
    check_order(d)?;
    let m = seq.modulus();
    let work = inductive_work(m, d);
    check_budget(work, budget, &format!("U^{d} on Z_{m}"))?;
    let a = seq.values();
    let s = if d == 1 {
        s1(a)
    } else {
        par_tree_sum(m, |h| s_inductive(&shifted_product(a, h), d - 1)) / m as f64
    };
    Ok(GowersResult {
        d,
        m,
        value: root(s, d),
        work,
    })
}

fn s1(a: &[Complex64]) -> f64 {
    (tree_sum(a.len(), |i| a[i]) / a.len() as f64).norm_sqr()
}

fn s_inductive(a: &[Complex64], d: usize) -> f64 {
    if d == 1 {
        return s1(a);
    }
    tree_sum(a.len(), |h| s_inductive(&shifted_product(a, h), d - 1)) / a.len() as f64
}

/// `n ↦ a(n + h)·conj(a(n))`.
fn shifted_product(a: &[Complex64], h: usize) -> Vec<Complex64> {
    let m = a.len();
    (0..m).map(|n| a[(n + h) % m] * a[n].conj()).collect()
}

fn root(s: f64, d: usize) -> f64 {
    s.max(0.0).powf(1.0 / (1u32 << d) as f64)
}

/// `‖a‖_{U^d}` by expanding `E_{n,h} Π_ε C^{|ε|} a(n + ε·h)`; `d ≤ 3`, `M ≤ 256`.
pub fn gowers_norm_boxproduct(seq: &CyclicSequence, d: usize) -> Result<GowersResult> {
    check_order(d)?;
    let m = seq.modulus();
    if d > 3 || m > 256 {
        return Err(Error::Resource(format!(
            "box-product oracle is limited to d ≤ 3 and M ≤ 256 (d = {d}, M = {m})"
        )));
    }
    let a = seq.values();
    let hs = m.pow(d as u32);
    let corners = 1usize << d;
    // p[x·M^(d−1) + h'] = Π_{ε ∈ {0,1}^(d−1)} C^|ε| a(x + ε·h'); the full corner
    // product at (n, h', h_d) is p(n, h') · conj(p(n + h_d, h')).
    let inner = m.pow(d as u32 - 1);
    let p: Vec<Complex64> = (0..m * inner)
        .into_par_iter()
        .map(|t| {
            let (x, mut rest) = (t / inner, t % inner);
            let mut h = [0usize; 2];
            for hj in h.iter_mut().take(d - 1) {
                *hj = rest % m;
                rest /= m;
            }
            let mut prod = Complex64::new(1.0, 0.0);
            for eps in 0..corners / 2 {
                let off: usize = (0..d - 1).filter(|j| eps >> j & 1 == 1).map(|j| h[j]).sum();
                let v = a[(x + off) % m];
                prod *= if eps.count_ones() % 2 == 1 { v.conj() } else { v };
            }
            prod
        })
        .collect();
    let total = par_tree_sum(m, |n| {
        tree_sum(hs, |hidx| {
            let (hp, hd) = (hidx % inner, hidx / inner);
            p[n * inner + hp] * p[(n + hd) % m * inner + hp].conj()
        })
    });
    let s = total.re / (m as f64).powi(d as i32 + 1);
    Ok(GowersResult {
        d,
        m,
        value: root(s, d),
        work: (m * hs + m * inner * corners / 2) as f64,
    })
}

/// `‖a‖_{U^2}` from `Σ_ξ |â(ξ)|^4` with `â(ξ) = E_n a(n) e(−nξ/M)`.
pub fn gowers_u2_spectral(seq: &CyclicSequence) -> Result<GowersResult> {
    let m = seq.modulus();
    let fft = FftPlanner::new().plan_fft_forward(m);
    let s = fourth_moment(&fft, seq.values().to_vec());
    Ok(GowersResult {
        d: 2,
        m,
        value: root(s, 2),
        work: spectral_work(m),
    })
}

fn fourth_moment(fft: &Arc<dyn Fft<f64>>, mut buf: Vec<Complex64>) -> f64 {
    fft.process(&mut buf);
    let scale = 1.0 / buf.len() as f64;
    tree_sum(buf.len(), |i| (buf[i] * scale).norm_sqr().powi(2))
}

/// `‖a‖_{U^d}`: inductive for `d ≥ 3` down to a spectral `U^2` base.
pub fn gowers_norm_fast(seq: &CyclicSequence, d: usize, budget: f64) -> Result<GowersResult> {
    check_order(d)?;
    let m = seq.modulus();
    let work = fast_work(m, d);
    check_budget(work, budget, &format!("U^{d} on Z_{m}"))?;
    let a = seq.values();
    let s = match d {
        1 => s1(a),
        2 => {
            let fft = FftPlanner::new().plan_fft_forward(m);
            fourth_moment(&fft, a.to_vec())
        }
        _ => {
            let fft = FftPlanner::new().plan_fft_forward(m);
            par_tree_sum(m, |h| s_fast(&fft, &shifted_product(a, h), d - 1)) / m as f64
        }
    };
    Ok(GowersResult {
        d,
        m,
        value: root(s, d),
        work,
    })
}

fn s_fast(fft: &Arc<dyn Fft<f64>>, a: &[Complex64], d: usize) -> f64 {
    if d == 2 {
        return fourth_moment(fft, a.to_vec());
    }
    tree_sum(a.len(), |h| s_fast(fft, &shifted_product(a, h), d - 1)) / a.len() as f64
}

/// Multiplier applied to `Λ'_{w,r} − 1` in the uniformity scan.
#[derive(Clone, Debug, PartialEq)]
pub enum ScanWeight {
    AllOnes,
    /// `1_A(x0 + mα)`.
    RotationIndicator {
        alpha: Irrational,
        set: CircleSet,
        x0: Phase,
    },
    Nilsequence(NilsequenceKind),
}

impl ScanWeight {
    pub fn label(&self) -> String {
        match self {
            ScanWeight::AllOnes => "all-ones".into(),
            ScanWeight::RotationIndicator { alpha, .. } => format!("rotation-indicator({})", alpha.label()),
            ScanWeight::Nilsequence(k) => k.label().into(),
        }
    }

    fn value(&self, m: i64) -> Result<Complex64> {
        Ok(match self {
            ScanWeight::AllOnes => Complex64::new(1.0, 0.0),
            ScanWeight::RotationIndicator { alpha, set, x0 } => {
                Complex64::new(set.contains(*x0 + alpha.frac_phase(m)?) as u8 as f64, 0.0)
            }
            ScanWeight::Nilsequence(k) => k.value(m)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanConfig {
    pub w_list: Vec<u64>,
    pub n_list: Vec<usize>,
    pub d: usize,
    /// `M = factor · N`.
    pub factor: usize,
    pub weight: ScanWeight,
    /// Evaluate the weight at `W·n` instead of `n`.
    pub along_progression: bool,
    pub budget: f64,
    /// Record wall-clock times (makes the CSV nondeterministic).
    pub timing: bool,
}

impl ScanConfig {
    pub fn new(w_list: Vec<u64>, n_list: Vec<usize>, d: usize) -> ScanConfig {
        ScanConfig {
            w_list,
            n_list,
            d,
            factor: d.max(2),
            weight: ScanWeight::AllOnes,
            along_progression: false,
            budget: DEFAULT_BUDGET,
            timing: false,
        }
    }

    /// Smallest sieve limit covering every `W·N + r`.
    pub fn required_limit(&self) -> Result<u64> {
        let mut need = 2u64;
        for &w in &self.w_list {
            let p = WTrickParams::new(w, 1)?;
            for &n in &self.n_list {
                need = need.max(p.modulus() * n as u64 + p.modulus() - 1);
            }
        }
        Ok(need)
    }

    pub fn validate(&self) -> Result<()> {
        check_order(self.d)?;
        if self.w_list.is_empty() || self.n_list.is_empty() {
            return invalid("scan needs non-empty w and N lists");
        }
        if self.factor < 2 {
            return invalid(format!("padding factor must be at least 2, got {}", self.factor));
        }
        if self.n_list.contains(&0) {
            return invalid("window lengths must be positive");
        }
        for &w in &self.w_list {
            WTrickParams::new(w, 1)?;
        }
        let worst = self.n_list.iter().max().unwrap() * self.factor;
        check_budget(fast_work(worst, self.d), self.budget, &format!("U^{} on Z_{worst}", self.d))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanRow {
    pub w: u64,
    pub modulus: u64,
    pub n: usize,
    pub d: usize,
    pub weight_kind: String,
    pub sup_norm: f64,
    pub argmax_r: u64,
    pub wall_time_ms: Option<u64>,
}

/// For each `(w, N)`: `sup_r ‖(Λ'_{w,r} − 1)·weight · 1_{[1,N]}‖_{U^d(Z_{factor·N})}`
/// over all `1 ≤ r < W` coprime to `W`.
pub fn mangoldt_uniformity_scan(tables: &PrimeTables, cfg: &ScanConfig) -> Result<Vec<ScanRow>> {
    cfg.validate()?;
    let need = cfg.required_limit()?;
    if need > tables.limit() {
        return Err(Error::Resource(format!(
            "uniformity scan needs a sieve limit of at least {need}, tables cover {}",
            tables.limit()
        )));
    }
    let mut tasks = Vec::new();
    for &w in &cfg.w_list {
        for &n in &cfg.n_list {
            for r in admissible_residues(w)? {
                tasks.push((w, n, r));
            }
        }
    }
    let norms: Vec<(f64, u64)> = tasks
        .par_iter()
        .map(|&(w, n, r)| {
            let start = Instant::now();
            let params = WTrickParams::new(w, r)?;
            let big_w = params.modulus() as i64;
            let density = params.density();
            let values: Vec<Complex64> = (1..=n as i64)
                .map(|k| {
                    let lp = tables.lambda_prime_unchecked((big_w * k) as u64 + r);
                    let m = if cfg.along_progression { big_w * k } else { k };
                    Ok(cfg.weight.value(m)? * (density * lp - 1.0))
                })
                .collect::<Result<_>>()?;
            let seq = embed_window(&SequenceWindow::new(values)?, cfg.factor)?;
            let res = gowers_norm_fast(&seq, cfg.d, cfg.budget)?;
            Ok((res.value, start.elapsed().as_millis() as u64))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut i = 0;
    for &w in &cfg.w_list {
        let modulus = WTrickParams::new(w, 1)?.modulus();
        let residues = admissible_residues(w)?;
        for &n in &cfg.n_list {
            let mut best = (f64::NEG_INFINITY, 0u64);
            let mut ms = 0u64;
            for &r in &residues {
                let (v, t) = norms[i];
                i += 1;
                ms += t;
                if v > best.0 {
                    best = (v, r);
                }
            }
            rows.push(ScanRow {
                w,
                modulus,
                n,
                d: cfg.d,
                weight_kind: cfg.weight.label(),
                sup_norm: best.0,
                argmax_r: best.1,
                wall_time_ms: cfg.timing.then_some(ms),
            });
        }
    }
    Ok(rows)
}

/// Columns `w,W,N,d,weight_kind,sup_r_norm,argmax_r,wall_time_ms`.
pub fn write_scan_csv(out: &mut dyn Write, rows: &[ScanRow]) -> Result<()> {
    writeln!(out, "w,W,N,d,weight_kind,sup_r_norm,argmax_r,wall_time_ms")?;
    for r in rows {
        let t = r.wall_time_ms.map_or(String::new(), |t| t.to_string());
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.w, r.modulus, r.n, r.d, r.weight_kind, r.sup_norm, r.argmax_r, t
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seq(v: &[f64]) -> CyclicSequence {
        CyclicSequence::new(v.iter().map(|&x| Complex64::new(x, 0.0)).collect()).unwrap()
    }

    fn random_seq(rng: &mut ChaCha8Rng, m: usize) -> CyclicSequence {
        CyclicSequence::new(
            (0..m)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect(),
        )
        .unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn embedding() {
        let w = SequenceWindow::from_real(&[1.0, 1.0]).unwrap();
        let c = embed_window(&w, 2).unwrap();
        let re: Vec<f64> = c.values().iter().map(|v| v.re).collect();
        assert_eq!(re, vec![0.0, 1.0, 1.0, 0.0]);
        assert_eq!(embed_window(&w, 5).unwrap().modulus(), 10);
        assert!(embed_window(&w, 1).is_err());
    }

    #[test]
    fn known_values() {
        let ones = seq(&[1.0; 8]);
        assert!((gowers_norm(&ones, 3).unwrap().value - 1.0).abs() < 1e-12);
        let two = seq(&[1.0, 0.0]);
        let expect = (1.0f64 / 8.0).powf(0.25);
        assert!((gowers_norm(&two, 2).unwrap().value - expect).abs() < 1e-12);
        assert!((gowers_u2_spectral(&two).unwrap().value - expect).abs() < 1e-12);
        assert!((gowers_norm_boxproduct(&seq(&[1.0; 4]), 2).unwrap().value - 1.0).abs() < 1e-12);
        assert!((gowers_u2_spectral(&ones).unwrap().value - 1.0).abs() < 1e-12);
        let m = 12;
        let ch = CyclicSequence::new(
            (0..m)
                .map(|n| Complex64::cis(std::f64::consts::TAU * n as f64 / m as f64))
                .collect(),
        )
        .unwrap();
        assert!((gowers_norm(&ch, 2).unwrap().value - 1.0).abs() < 1e-12);
        assert!(gowers_norm(&ones, 0).is_err());
    }

    #[test]
    fn budget_is_enforced() {
        let big = CyclicSequence::new(vec![Complex64::new(1.0, 0.0); 49152]).unwrap();
        let err = gowers_norm(&big, 3).unwrap_err();
        assert!(matches!(err, Error::Resource(_)), "{err}");
        assert!(gowers_norm_boxproduct(&seq(&[1.0; 300]), 2).is_err());
        assert_eq!(inductive_work(10, 1), 10.0);
        assert_eq!(inductive_work(10, 2), 200.0);
    }

    #[test]
    fn evaluators_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for m in [16, 32] {
            let s = random_seq(&mut rng, m);
            let ind = gowers_norm(&s, 2).unwrap().value;
            assert!(rel(gowers_norm_boxproduct(&s, 2).unwrap().value, ind) < 1e-10);
            assert!(rel(gowers_u2_spectral(&s).unwrap().value, ind) < 1e-9);
            let ind3 = gowers_norm(&s, 3).unwrap().value;
            assert!(rel(gowers_norm_boxproduct(&s, 3).unwrap().value, ind3) < 1e-10);
            assert!(rel(gowers_norm_fast(&s, 3, DEFAULT_BUDGET).unwrap().value, ind3) < 1e-10);
        }
        let s = random_seq(&mut rng, 1024);
        let ind = gowers_norm(&s, 2).unwrap().value;
        assert!(rel(gowers_u2_spectral(&s).unwrap().value, ind) < 1e-9);
    }

    #[test]
    fn thread_count_does_not_change_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = random_seq(&mut rng, 48);
        let run = |k| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .unwrap()
                .install(|| gowers_norm(&s, 3).unwrap().value)
        };
        assert_eq!(run(1).to_bits(), run(4).to_bits());
    }

    #[test]
    fn scan_smoke() {
        let tables = crate::primes::build_tables(40_000).unwrap();
        let cfg = ScanConfig::new(vec![3, 5], vec![256, 1024], 2);
        let rows = mangoldt_uniformity_scan(&tables, &cfg).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.sup_norm >= 0.0 && r.wall_time_ms.is_none()));
        assert_eq!(rows[2].modulus, 6);
        let mut cfg = ScanConfig::new(vec![7], vec![512], 2);
        cfg.weight = ScanWeight::RotationIndicator {
            alpha: Irrational::parse("sqrt2").unwrap(),
            set: CircleSet::from_arcs(&[(0.0, 0.5)]).unwrap(),
            x0: Phase::ZERO,
        };
        let rows = mangoldt_uniformity_scan(&tables, &cfg).unwrap();
        assert!(rows[0].sup_norm.is_finite());
        let mut buf = Vec::new();
        write_scan_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("w,W,N,d,weight_kind,sup_r_norm,argmax_r,wall_time_ms\n7,30,512,2,"));
        let small = crate::primes::build_tables(1000).unwrap();
        let err = mangoldt_uniformity_scan(&small, &cfg).unwrap_err().to_string();
        assert!(err.contains("15389"), "{err}");
    }
}
