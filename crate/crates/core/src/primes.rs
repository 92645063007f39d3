//! Prime sieving, prime counting, von Mangoldt weights and the W-trick.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_integer::Integer;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};

/// Numbers per sieve segment.
pub const SEGMENT: u64 = 1 << 20;

const CACHE_MAGIC: &[u8; 12] = b"ULAB-SIEVE-1";

/// Sieve output over `[0, limit]`.
///
/// Primality is a packed bit array; `pi` is answered from per-word prefix
/// counts, and prime powers `p^e` (`e ≥ 2`) are kept in a short sorted list,
/// so memory stays near `limit / 8` bytes even at `limit = 10^8`.
#[derive(Clone, Debug)]
pub struct PrimeTables {
    limit: u64,
    bits: Vec<u64>,
    pi_before: Vec<u64>,
    /// `(p^e, p)` for `e ≥ 2`, sorted by `p^e`.
    prime_powers: Vec<(u64, u64)>,
}

pub fn build_tables(limit: u64) -> Result<PrimeTables> {
    if limit < 2 {
        return invalid(format!("sieve limit must be at least 2, got {limit}"));
    }
    let base = small_primes(isqrt(limit));
    let segments: Vec<u64> = (0..=limit / SEGMENT).collect();
    let words: Vec<Vec<u64>> = segments
        .par_iter()
        .map(|&s| sieve_segment(s * SEGMENT, ((s + 1) * SEGMENT).min(limit + 1), &base))
        .collect();
    let bits: Vec<u64> = words.into_iter().flatten().collect();
    Ok(PrimeTables::from_bits(limit, bits))
}

/// Marks primes in `[lo, hi)`; `lo` is a multiple of 64.
fn sieve_segment(lo: u64, hi: u64, base: &[u64]) -> Vec<u64> {
    let len = (hi - lo) as usize;
    let mut flags = vec![true; len];
    for n in lo..hi.min(2) {
        flags[(n - lo) as usize] = false;
    }
    for &p in base {
        if p * p >= hi {
            break;
        }
        let mut m = (p * p).max(lo.div_ceil(p) * p);
        while m < hi {
            flags[(m - lo) as usize] = false;
            m += p;
        }
    }
    let mut words = vec![0u64; len.div_ceil(64)];
    for (i, &f) in flags.iter().enumerate() {
        if f {
            words[i / 64] |= 1 << (i % 64);
        }
    }
    words
}

fn small_primes(n: u64) -> Vec<u64> {
    let n = n as usize;
    let mut comp = vec![false; n + 1];
    let mut out = Vec::new();
    for i in 2..=n {
        if !comp[i] {
            out.push(i as u64);
            let mut j = i * i;
            while j <= n {
                comp[j] = true;
                j += i;
            }
        }
    }
    out
}

fn isqrt(n: u64) -> u64 {
    let mut r = (n as f64).sqrt() as u64;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

impl PrimeTables {
    fn from_bits(limit: u64, mut bits: Vec<u64>) -> PrimeTables {
        let nwords = (limit / 64 + 1) as usize;
        bits.truncate(nwords);
        bits.resize(nwords, 0);
        let tail = (limit % 64) + 1;
        if tail < 64 {
            bits[nwords - 1] &= (1u64 << tail) - 1;
        }
        let mut pi_before = Vec::with_capacity(nwords);
        let mut acc = 0u64;
        for w in &bits {
            pi_before.push(acc);
            acc += w.count_ones() as u64;
        }
        let mut tables = PrimeTables {
            limit,
            bits,
            pi_before,
            prime_powers: Vec::new(),
        };
        let mut pp = Vec::new();
        for p in 2..=isqrt(limit) {
            if tables.is_prime(p) {
                let mut q = p * p;
                loop {
                    pp.push((q, p));
                    match q.checked_mul(p) {
                        Some(next) if next <= limit => q = next,
                        _ => break,
                    }
                }
            }
        }
        pp.sort_unstable();
        tables.prime_powers = pp;
        tables
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    /// Primality for `n ≤ limit`; numbers beyond the sieve report `false`.
    pub fn is_prime(&self, n: u64) -> bool {
        n <= self.limit && (self.bits[(n / 64) as usize] >> (n % 64)) & 1 == 1
    }

    /// `π(n)` for `n ≤ limit` (clamped to the limit above it).
    pub fn pi(&self, n: u64) -> u64 {
        let n = n.min(self.limit);
        let w = (n / 64) as usize;
        let b = n % 64;
        let mask = if b == 63 { u64::MAX } else { (1u64 << (b + 1)) - 1 };
        self.pi_before[w] + (self.bits[w] & mask).count_ones() as u64
    }

    /// Von Mangoldt `Λ(n)`: `log p` at `n = p^e`, else 0.
    pub fn mangoldt(&self, n: u64) -> f64 {
        if self.is_prime(n) {
            return (n as f64).ln();
        }
        match self.prime_powers.binary_search_by_key(&n, |&(q, _)| q) {
            Ok(i) => (self.prime_powers[i].1 as f64).ln(),
            Err(_) => 0.0,
        }
    }

    /// `Λ'(n) = 1_P(n) Λ(n)`, unchecked.
    pub(crate) fn lambda_prime_unchecked(&self, n: u64) -> f64 {
        if self.is_prime(n) {
            (n as f64).ln()
        } else {
            0.0
        }
    }

    /// Primes `p ≤ n`, ascending.
    pub fn primes_up_to(&self, n: u64) -> Vec<u64> {
        let n = n.min(self.limit);
        let mut out = Vec::with_capacity(self.pi(n) as usize);
        for (w, &word) in self.bits.iter().enumerate().take((n / 64 + 1) as usize) {
            let mut x = word;
            while x != 0 {
                let p = w as u64 * 64 + x.trailing_zeros() as u64;
                if p > n {
                    return out;
                }
                out.push(p);
                x &= x - 1;
            }
        }
        out
    }

    pub fn require(&self, n: u64, what: &str) -> Result<()> {
        if n > self.limit {
            return Err(Error::Resource(format!(
                "{what} needs a sieve limit of at least {n}, tables cover {}",
                self.limit
            )));
        }
        Ok(())
    }

    /// Writes the binary cache: magic, `limit` (u64 LE), then the bit array as u64 LE words.
    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(CACHE_MAGIC)?;
        out.write_all(&self.limit.to_le_bytes())?;
        for w in &self.bits {
            out.write_all(&w.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    /// Loads a cache covering at least `limit`; larger caches are truncated.
    pub fn load_cache(path: &Path, limit: u64) -> Result<PrimeTables> {
        if limit < 2 {
            return invalid(format!("sieve limit must be at least 2, got {limit}"));
        }
        let mut input = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 12];
        input.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::Format(format!("{}: not a sieve cache", path.display())));
        }
        let mut buf = [0u8; 8];
        input.read_exact(&mut buf)?;
        let stored = u64::from_le_bytes(buf);
        if stored < limit {
            return Err(Error::Format(format!(
                "{}: cache covers {stored}, need {limit}",
                path.display()
            )));
        }
        let nwords = (limit / 64 + 1) as usize;
        let mut bits = Vec::with_capacity(nwords);
        for _ in 0..nwords {
            input
                .read_exact(&mut buf)
                .map_err(|_| Error::Format(format!("{}: truncated bit array", path.display())))?;
            bits.push(u64::from_le_bytes(buf));
        }
        Ok(PrimeTables::from_bits(limit, bits))
    }

    /// Uses the cache at `path` when it is valid and large enough; otherwise
    /// sieves and rewrites the cache.
    pub fn load_or_build(path: &Path, limit: u64) -> Result<PrimeTables> {
        if let Ok(t) = PrimeTables::load_cache(path, limit) {
            return Ok(t);
        }
        let t = build_tables(limit)?;
        t.write_cache(path)?;
        Ok(t)
    }
}

/// `Λ'(n)`: `log n` on primes, 0 elsewhere (including prime powers).
pub fn lambda_prime(tables: &PrimeTables, n: u64) -> Result<f64> {
    if n < 1 || n > tables.limit {
        return invalid(format!("n = {n} outside [1, {}]", tables.limit));
    }
    Ok(tables.lambda_prime_unchecked(n))
}

/// Euler's totient: the number of `1 ≤ d ≤ n` coprime to `n`.
pub fn euler_phi(n: u64) -> Result<u64> {
    if n < 1 {
        return invalid("euler_phi needs n ≥ 1");
    }
    let mut m = n;
    let mut phi = n;
    let mut p = 2u64;
    while p * p <= m {
        if m.is_multiple_of(p) {
            while m.is_multiple_of(p) {
                m /= p;
            }
            phi -= phi / p;
        }
        p += 1;
    }
    if m > 1 {
        phi -= phi / m;
    }
    Ok(phi)
}

/// W-trick parameters: `W = ∏_{p < w} p` and a residue `r` coprime to `W`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WTrickParams {
    w: u64,
    modulus: u64,
    r: u64,
    phi: u64,
}

impl WTrickParams {
    pub fn new(w: u64, r: u64) -> Result<WTrickParams> {
        let modulus = primorial_below(w)?;
        if r < 1 || r > modulus {
            return invalid(format!("residue r = {r} outside [1, W = {modulus}]"));
        }
        if r.gcd(&modulus) != 1 {
            return invalid(format!("residue r = {r} is not coprime to W = {modulus}"));
        }
        Ok(WTrickParams {
            w,
            modulus,
            r,
            phi: euler_phi(modulus)?,
        })
    }

    pub fn w(&self) -> u64 {
        self.w
    }

    /// `W`.
    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn residue(&self) -> u64 {
        self.r
    }

    /// `φ(W)`.
    pub fn phi(&self) -> u64 {
        self.phi
    }

    /// `φ(W) / W`.
    pub fn density(&self) -> f64 {
        self.phi as f64 / self.modulus as f64
    }

    /// Re-derives `W` from the sieve.
    pub fn check_against(&self, tables: &PrimeTables) -> Result<()> {
        tables.require(self.w, "W-trick check")?;
        let from_sieve = tables
            .primes_up_to(self.w - 1)
            .iter()
            .product::<u64>();
        if from_sieve != self.modulus {
            return Err(Error::InvalidArgument(format!(
                "W = {} disagrees with the sieve product {from_sieve}",
                self.modulus
            )));
        }
        Ok(())
    }
}

/// `∏_{p prime, p < w} p` for `w > 2`.
pub fn primorial_below(w: u64) -> Result<u64> {
    if w <= 2 {
        return invalid(format!("w must exceed 2, got {w}"));
    }
    let mut acc: u64 = 1;
    for p in (2..w).filter(|&p| is_prime_trial(p)) {
        acc = acc
            .checked_mul(p)
            .ok_or_else(|| Error::InvalidArgument(format!("W overflows u64 for w = {w}")))?;
    }
    Ok(acc)
}

/// Smallest prime `≥ w`: the canonical representative among all `w` giving the same `W`.
pub fn canonical_w(w: u64) -> u64 {
    (w.max(3)..).find(|&p| is_prime_trial(p)).unwrap()
}

/// Residues `1 ≤ r < W` coprime to `W`, ascending.
pub fn admissible_residues(w: u64) -> Result<Vec<u64>> {
    let modulus = primorial_below(w)?;
    Ok((1..modulus.max(2)).filter(|r| r.gcd(&modulus) == 1).collect())
}

fn is_prime_trial(n: u64) -> bool {
    n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d))
}

/// `Λ'_{w,r}(n) = (φ(W)/W) Λ'(Wn + r)`.
pub fn modified_mangoldt(tables: &PrimeTables, params: &WTrickParams, n: u64) -> Result<f64> {
    let m = params
        .modulus
        .checked_mul(n)
        .and_then(|x| x.checked_add(params.r))
        .ok_or_else(|| Error::InvalidArgument(format!("W·n + r overflows for n = {n}")))?;
    if m > tables.limit {
        return invalid(format!(
            "W·n + r = {m} exceeds the sieve; a sieve limit of at least {m} is required"
        ));
    }
    Ok(params.density() * tables.lambda_prime_unchecked(m))
}

/// `{p + shift : p prime, p ≤ n, p + shift ≥ 1}`, ascending.
pub fn shifted_primes(tables: &PrimeTables, shift: i64, n: u64) -> Result<Vec<u64>> {
    if shift != 1 && shift != -1 {
        return invalid(format!("shift must be +1 or -1, got {shift}"));
    }
    if n + 1 > tables.limit {
        return Err(Error::Resource(format!(
            "shifted primes up to {n} need a sieve limit of at least {}",
            n + 1
        )));
    }
    Ok(tables
        .primes_up_to(n)
        .into_iter()
        .filter_map(|p| {
            let q = p as i64 + shift;
            (q >= 1).then_some(q as u64)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial_is_prime(n: u64) -> bool {
        n >= 2 && (2..n).all(|d| !n.is_multiple_of(d))
    }

    /// Λ by explicit factorization.
    fn mangoldt_oracle(n: u64) -> f64 {
        if n < 2 {
            return 0.0;
        }
        let p = (2..=n).find(|d| n.is_multiple_of(*d)).unwrap();
        let mut m = n;
        while m.is_multiple_of(p) {
            m /= p;
        }
        if m == 1 {
            (p as f64).ln()
        } else {
            0.0
        }
    }

    #[test]
    fn pi_of_100() {
        let t = build_tables(100).unwrap();
        let oracle = (1..=100).filter(|&n| trial_is_prime(n)).count() as u64;
        assert_eq!(oracle, 25);
        assert_eq!(t.pi(100), oracle);
    }

    #[test]
    fn mangoldt_small() {
        let t = build_tables(10).unwrap();
        assert_eq!(t.mangoldt(8), 2f64.ln());
        assert_eq!(t.mangoldt(6), 0.0);
        assert_eq!(build_tables(2).unwrap().pi(2), 1);
        assert!(matches!(build_tables(1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn tables_match_trial_division() {
        let t = build_tables(3000).unwrap();
        assert!(!t.is_prime(1) && t.is_prime(2));
        for n in 1..=3000 {
            assert_eq!(t.is_prime(n), trial_is_prime(n), "n = {n}");
            assert_eq!(t.mangoldt(n), mangoldt_oracle(n), "n = {n}");
            let step = t.pi(n) - t.pi(n - 1);
            assert_eq!(step, t.is_prime(n) as u64);
        }
        assert_eq!(t.pi(3000), t.primes_up_to(3000).len() as u64);
    }

    #[test]
    fn multi_segment_sieve() {
        let limit = 3 * SEGMENT + 12_345;
        let t = build_tables(limit).unwrap();
        assert_eq!(t.pi(1_000_000), 78_498);
        assert_eq!(t.pi(3 * SEGMENT), t.primes_up_to(3 * SEGMENT).len() as u64);
        for n in [SEGMENT - 1, SEGMENT, SEGMENT + 1, 2 * SEGMENT + 7, limit] {
            assert_eq!(t.is_prime(n), trial_is_prime_fast(n), "n = {n}");
        }
    }

    fn trial_is_prime_fast(n: u64) -> bool {
        n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d))
    }

    #[test]
    fn lambda_prime_values() {
        let t = build_tables(100).unwrap();
        assert_eq!(lambda_prime(&t, 7).unwrap(), 7f64.ln());
        assert_eq!(lambda_prime(&t, 8).unwrap(), 0.0);
        assert_eq!(lambda_prime(&t, 1).unwrap(), 0.0);
        assert!(lambda_prime(&t, 0).is_err());
        assert!(lambda_prime(&t, 101).is_err());
    }

    #[test]
    fn totient_against_brute_force() {
        for n in 1..=300u64 {
            let brute = (1..=n).filter(|d| d.gcd(&n) == 1).count() as u64;
            assert_eq!(euler_phi(n).unwrap(), brute, "n = {n}");
        }
        assert_eq!(euler_phi(6).unwrap(), 2);
        assert_eq!(euler_phi(1).unwrap(), 1);
        assert_eq!(euler_phi(30).unwrap(), 8);
        assert!(euler_phi(0).is_err());
    }

    #[test]
    fn w_trick_params() {
        let p = WTrickParams::new(5, 1).unwrap();
        assert_eq!((p.modulus(), p.phi()), (6, 2));
        assert!(WTrickParams::new(5, 3).is_err());
        assert!(WTrickParams::new(2, 1).is_err());
        assert_eq!(WTrickParams::new(7, 29).unwrap().modulus(), 30);
        assert_eq!(WTrickParams::new(11, 1).unwrap().modulus(), 210);
        let t = build_tables(100).unwrap();
        p.check_against(&t).unwrap();
        assert_eq!(canonical_w(4), 5);
        assert_eq!(primorial_below(4).unwrap(), primorial_below(5).unwrap());
        assert_eq!(admissible_residues(7).unwrap(), vec![1, 7, 11, 13, 17, 19, 23, 29]);
    }

    #[test]
    fn modified_mangoldt_values() {
        let t = build_tables(1000).unwrap();
        let p = WTrickParams::new(5, 1).unwrap();
        let v = modified_mangoldt(&t, &p, 1).unwrap();
        assert!((v - 7f64.ln() / 3.0).abs() < 1e-15);
        assert!((v - 0.64863).abs() < 1e-5);
        assert_eq!(modified_mangoldt(&t, &p, 4).unwrap(), 0.0);
        assert_eq!(modified_mangoldt(&t, &p, 24).unwrap(), 0.0); // 145 = 5·29
        let err = modified_mangoldt(&t, &p, 200).unwrap_err().to_string();
        assert!(err.contains("1201"), "{err}");
    }

    #[test]
    fn shifted_prime_lists() {
        let t = build_tables(100).unwrap();
        assert_eq!(shifted_primes(&t, -1, 10).unwrap(), vec![1, 2, 4, 6]);
        assert_eq!(shifted_primes(&t, 1, 10).unwrap(), vec![3, 4, 6, 8]);
        assert_eq!(shifted_primes(&t, -1, 2).unwrap(), vec![1]);
        assert!(shifted_primes(&t, 0, 10).is_err());
        assert!(shifted_primes(&t, 1, 100).is_err());
    }

    #[test]
    fn chebyshev_and_average_one_ranges() {
        let t = build_tables(400_000).unwrap();
        for n in [1000u64, 5000, 20_000, 100_000] {
            let s: f64 = (1..=n).map(|m| t.mangoldt(m)).sum::<f64>() / n as f64;
            assert!((0.7..=1.3).contains(&s), "N = {n}: {s}");
        }
        for w in [3u64, 5, 7] {
            for r in admissible_residues(w).unwrap() {
                let p = WTrickParams::new(w, r).unwrap();
                let n = 10_000u64;
                let s: f64 = (1..=n)
                    .map(|m| modified_mangoldt(&t, &p, m).unwrap())
                    .sum::<f64>()
                    / n as f64;
                assert!((0.5..=1.5).contains(&s), "w = {w}, r = {r}: {s}");
            }
        }
    }

    #[test]
    fn cache_round_trip_and_validation() {
        let dir = std::env::temp_dir().join(format!("ulab-sieve-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("sieve.bin");
        let t = build_tables(5000).unwrap();
        t.write_cache(&path).unwrap();
        let back = PrimeTables::load_cache(&path, 3000).unwrap();
        assert_eq!(back.limit(), 3000);
        assert_eq!(back.pi(3000), t.pi(3000));
        assert_eq!(back.mangoldt(2048), 2f64.ln());
        assert!(PrimeTables::load_cache(&path, 6000).is_err());
        std::fs::write(&path, b"NOT-A-SIEVE-FILE").unwrap();
        assert!(matches!(PrimeTables::load_cache(&path, 100), Err(Error::Format(_))));
        let rebuilt = PrimeTables::load_or_build(&path, 400).unwrap();
        assert_eq!(rebuilt.pi(400), 78);
        assert!(PrimeTables::load_cache(&path, 400).is_ok());
        std::fs::remove_dir_all(&dir).ok();
    }
}
