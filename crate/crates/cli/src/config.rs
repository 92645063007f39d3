//! Flat `key = value` configuration with optional `[section]` headers.
//!
//! A key inside `[section]` is stored as `section.key`. Parameters are looked
//! up by bare name at top level, then under `[params]`, then under a section
//! named after the subcommand.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, Vec<String>> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        let mut errors = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                match rest.strip_suffix(']') {
                    Some(name) if !name.trim().is_empty() => section = name.trim().to_string(),
                    _ => errors.push(format!("line {}: malformed section header {line:?}", i + 1)),
                }
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                errors.push(format!("line {}: expected key = value, got {line:?}", i + 1));
                continue;
            };
            let k = k.trim();
            if k.is_empty() {
                errors.push(format!("line {}: empty key", i + 1));
                continue;
            }
            let key = if section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
            if entries.insert(key.clone(), v.trim().to_string()).is_some() {
                errors.push(format!("line {}: duplicate key {key}", i + 1));
            }
        }
        if errors.is_empty() {
            Ok(Config { entries })
        } else {
            Err(errors)
        }
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }
}

/// Typed access that records every problem instead of stopping at the first.
pub struct Reader<'a> {
    cfg: &'a Config,
    subcommand: String,
    used: BTreeSet<String>,
    pub errors: Vec<String>,
    pub notes: Vec<String>,
}

impl<'a> Reader<'a> {
    pub fn new(cfg: &'a Config, subcommand: &str) -> Reader<'a> {
        Reader {
            cfg,
            subcommand: subcommand.to_string(),
            used: BTreeSet::new(),
            errors: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn error(&mut self, msg: impl Into<String>) {
        self.errors.push(msg.into());
    }

    pub fn note(&mut self, msg: impl Into<String>) {
        self.notes.push(msg.into());
    }

    /// Raw value by bare name or `section.key`.
    pub fn raw(&mut self, key: &str) -> Option<String> {
        let candidates = if key.contains('.') {
            vec![key.to_string()]
        } else {
            vec![key.to_string(), format!("params.{key}"), format!("{}.{key}", self.subcommand)]
        };
        for c in candidates {
            if let Some(v) = self.cfg.entries.get(&c) {
                self.used.insert(c);
                return Some(v.clone());
            }
        }
        None
    }

    pub fn parsed<T: FromStr>(&mut self, key: &str, default: T) -> T
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => default,
            Some(v) => match parse_number::<T>(&v) {
                Ok(x) => x,
                Err(e) => {
                    self.error(format!("{key}: cannot parse {v:?}: {e}"));
                    default
                }
            },
        }
    }

    pub fn optional<T: FromStr>(&mut self, key: &str) -> Option<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.raw(key)?;
        match parse_number::<T>(&v) {
            Ok(x) => Some(x),
            Err(e) => {
                self.error(format!("{key}: cannot parse {v:?}: {e}"));
                None
            }
        }
    }

    pub fn string(&mut self, key: &str, default: &str) -> String {
        self.raw(key).unwrap_or_else(|| default.to_string())
    }

    pub fn boolean(&mut self, key: &str, default: bool) -> bool {
        match self.raw(key).as_deref() {
            None => default,
            Some("true" | "yes" | "1") => true,
            Some("false" | "no" | "0") => false,
            Some(v) => {
                self.error(format!("{key}: expected true or false, got {v:?}"));
                default
            }
        }
    }

    pub fn list_u64(&mut self, key: &str, default: &[u64]) -> Vec<u64> {
        match self.raw(key) {
            None => default.to_vec(),
            Some(v) => match parse_list(&v) {
                Ok(l) if !l.is_empty() => l,
                Ok(_) => {
                    self.error(format!("{key}: empty list"));
                    default.to_vec()
                }
                Err(e) => {
                    self.error(format!("{key}: {e}"));
                    default.to_vec()
                }
            },
        }
    }

    pub fn list_usize(&mut self, key: &str, default: &[usize]) -> Vec<usize> {
        let d: Vec<u64> = default.iter().map(|&x| x as u64).collect();
        self.list_u64(key, &d).into_iter().map(|x| x as usize).collect()
    }

    /// Arcs written `lo:hi` separated by commas.
    pub fn arcs(&mut self, key: &str, default: &[(f64, f64)]) -> Vec<(f64, f64)> {
        match self.raw(key) {
            None => default.to_vec(),
            Some(v) => match parse_arcs(&v) {
                Ok(a) => a,
                Err(e) => {
                    self.error(format!("{key}: {e}"));
                    default.to_vec()
                }
            },
        }
    }

    /// Keys present in the config that nothing asked for.
    pub fn unused(&self) -> Vec<String> {
        self.cfg
            .entries
            .keys()
            .filter(|k| !self.used.contains(*k) && !k.starts_with("output.") && k.as_str() != "subcommand")
            .cloned()
            .collect()
    }
}

/// Accepts plain numbers plus `b^e` and `1e6` forms for integers.
fn parse_number<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    let s = s.trim();
    if let Some(n) = parse_power(s) {
        return n.to_string().parse::<T>().map_err(|e| e.to_string());
    }
    s.parse::<T>().map_err(|e| e.to_string())
}

fn parse_power(s: &str) -> Option<u64> {
    let (b, e) = s.split_once('^')?;
    let b: u64 = b.trim().parse().ok()?;
    let e: u32 = e.trim().parse().ok()?;
    b.checked_pow(e)
}

fn parse_int(s: &str) -> Result<u64, String> {
    let s = s.trim();
    if let Some(v) = parse_power(s) {
        return Ok(v);
    }
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    match s.parse::<f64>() {
        Ok(f) if f >= 0.0 && f.fract() == 0.0 && f < 1.8e19 => Ok(f as u64),
        _ => Err(format!("not a non-negative integer: {s:?}")),
    }
}

/// Comma-separated integers; `2^10..2^14` is a geometric range in the base,
/// `a..b` an inclusive unit-step range.
pub fn parse_list(s: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        if let Some((a, b)) = item.split_once("..") {
            match (a.split_once('^'), b.split_once('^')) {
                (Some((ba, ea)), Some((bb, eb))) if ba.trim() == bb.trim() => {
                    let base: u64 = ba.trim().parse().map_err(|_| format!("bad base in {item:?}"))?;
                    let lo: u32 = ea.trim().parse().map_err(|_| format!("bad exponent in {item:?}"))?;
                    let hi: u32 = eb.trim().parse().map_err(|_| format!("bad exponent in {item:?}"))?;
                    if lo > hi || base < 2 {
                        return Err(format!("empty range {item:?}"));
                    }
                    for e in lo..=hi {
                        out.push(base.checked_pow(e).ok_or_else(|| format!("overflow in {item:?}"))?);
                    }
                }
                _ => {
                    let lo = parse_int(a)?;
                    let hi = parse_int(b)?;
                    if lo > hi || hi - lo > 1_000_000 {
                        return Err(format!("range {item:?} is empty or longer than 10^6"));
                    }
                    out.extend(lo..=hi);
                }
            }
        } else {
            out.push(parse_int(item)?);
        }
    }
    Ok(out)
}

pub fn parse_arcs(s: &str) -> Result<Vec<(f64, f64)>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|item| {
            let (a, b) = item.split_once(':').ok_or_else(|| format!("arc {item:?} is not lo:hi"))?;
            let lo: f64 = a.trim().parse().map_err(|_| format!("bad arc bound in {item:?}"))?;
            let hi: f64 = b.trim().parse().map_err(|_| format!("bad arc bound in {item:?}"))?;
            Ok((lo, hi))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_lookup() {
        let cfg = Config::parse("alpha = sqrt2\n# comment\n[sieve]\nlimit=1000\n[average]\nk = 2 # trailing\n").unwrap();
        let mut r = Reader::new(&cfg, "average");
        assert_eq!(r.string("alpha", "x"), "sqrt2");
        assert_eq!(r.parsed::<usize>("k", 1), 2);
        assert_eq!(r.optional::<u64>("sieve.limit"), Some(1000));
        assert_eq!(r.parsed::<usize>("grid", 7), 7);
        assert!(r.errors.is_empty() && r.unused().is_empty());
        assert!(Config::parse("a=1\na=2\n").is_err());
        assert!(Config::parse("[open\n").is_err());
        assert!(Config::parse("novalue\n").is_err());
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list("2^10..2^12").unwrap(), vec![1024, 2048, 4096]);
        assert_eq!(parse_list("3, 5,7").unwrap(), vec![3, 5, 7]);
        assert_eq!(parse_list("1e4, 10^2, 4..6").unwrap(), vec![10_000, 100, 4, 5, 6]);
        assert!(parse_list("x").is_err());
        assert_eq!(parse_arcs("-0.125:0.125, 0.5:0.6").unwrap(), vec![(-0.125, 0.125), (0.5, 0.6)]);
    }
}
