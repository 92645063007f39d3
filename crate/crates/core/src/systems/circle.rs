//! Finite unions of arcs on the circle with exact measure arithmetic.
//!
//! The circle is discretized as `Z / 2^128` (the same fixed point as
//! [`Phase`]). Arcs are stored as inclusive `(lo, last)` pairs that never wrap,
//! so intersections and rotations are exact integer operations and an empty
//! intersection has measure exactly zero.

use std::io::Write;

use crate::error::{invalid, Result};
use crate::phase::Phase;
use crate::sequences::Irrational;

const TWO_POW_128: f64 = 340_282_366_920_938_463_463_374_607_431_768_211_456.0;

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct CircleSet {
    arcs: Vec<(u128, u128)>,
}

impl CircleSet {
    pub fn empty() -> CircleSet {
        CircleSet { arcs: Vec::new() }
    }

    pub fn full() -> CircleSet {
        CircleSet {
            arcs: vec![(0, u128::MAX)],
        }
    }

    /// Union of half-open arcs `[lo, hi)` given as reals; `lo` may be negative
    /// and `hi − lo ≥ 1` yields the full circle.
    pub fn from_arcs(arcs: &[(f64, f64)]) -> Result<CircleSet> {
        let mut raw = Vec::new();
        for &(lo, hi) in arcs {
            if !(lo.is_finite() && hi.is_finite()) || hi < lo {
                return invalid(format!("arc [{lo}, {hi}) is not a valid interval"));
            }
            if hi - lo >= 1.0 {
                return Ok(CircleSet::full());
            }
            let a = Phase::from_f64(lo);
            let b = Phase::from_f64(hi);
            raw.push((a, (b - a).0));
        }
        Ok(CircleSet::from_phase_arcs(&raw))
    }

    /// Union of arcs `[start, start + len)` in fixed point.
    pub fn from_phase_arcs(arcs: &[(Phase, u128)]) -> CircleSet {
        let mut pieces = Vec::with_capacity(arcs.len() + 1);
        for &(start, len) in arcs {
            if len == 0 {
                continue;
            }
            let lo = start.0;
            let last = lo.wrapping_add(len - 1);
            if last >= lo {
                pieces.push((lo, last));
            } else {
                pieces.push((lo, u128::MAX));
                pieces.push((0, last));
            }
        }
        CircleSet::normalize(pieces)
    }

    fn normalize(mut pieces: Vec<(u128, u128)>) -> CircleSet {
        pieces.sort_unstable();
        let mut arcs: Vec<(u128, u128)> = Vec::with_capacity(pieces.len());
        for (lo, last) in pieces {
            match arcs.last_mut() {
                Some(prev) if prev.1 == u128::MAX || lo <= prev.1 + 1 => {
                    prev.1 = prev.1.max(last);
                }
                _ => arcs.push((lo, last)),
            }
        }
        CircleSet { arcs }
    }

    pub fn is_empty(&self) -> bool {
        self.arcs.is_empty()
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.len()
    }

    /// Number of fixed-point cells covered; `None` for the full circle (`2^128`).
    pub fn cell_count(&self) -> Option<u128> {
        self.arcs
            .iter()
            .try_fold(0u128, |acc, &(lo, last)| (last - lo).checked_add(1)?.checked_add(acc))
    }

    pub fn measure(&self) -> f64 {
        match self.cell_count() {
            Some(c) => c as f64 / TWO_POW_128,
            None => 1.0,
        }
    }

    pub fn contains(&self, x: Phase) -> bool {
        let i = self.arcs.partition_point(|&(lo, _)| lo <= x.0);
        i > 0 && x.0 <= self.arcs[i - 1].1
    }

    /// `A + t mod 1`.
    pub fn translate(&self, t: Phase) -> CircleSet {
        if t == Phase::ZERO {
            return self.clone();
        }
        let mut pieces = Vec::with_capacity(self.arcs.len() + 1);
        for &(lo, last) in &self.arcs {
            let a = lo.wrapping_add(t.0);
            let b = last.wrapping_add(t.0);
            if a <= b {
                pieces.push((a, b));
            } else {
                pieces.push((a, u128::MAX));
                pieces.push((0, b));
            }
        }
        CircleSet::normalize(pieces)
    }

    pub fn intersect(&self, other: &CircleSet) -> CircleSet {
        let (a, b) = (&self.arcs, &other.arcs);
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            let lo = a[i].0.max(b[j].0);
            let last = a[i].1.min(b[j].1);
            if lo <= last {
                out.push((lo, last));
            }
            if a[i].1 < b[j].1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        CircleSet { arcs: out }
    }

    pub fn union(&self, other: &CircleSet) -> CircleSet {
        let mut pieces = self.arcs.clone();
        pieces.extend_from_slice(&other.arcs);
        CircleSet::normalize(pieces)
    }

    /// Arcs as half-open real intervals `[lo, hi)` with `hi ≤ 1`.
    pub fn arcs(&self) -> Vec<(f64, f64)> {
        self.arcs
            .iter()
            .map(|&(lo, last)| {
                let hi = if last == u128::MAX {
                    1.0
                } else {
                    Phase(last + 1).to_f64()
                };
                (Phase(lo).to_f64(), hi)
            })
            .collect()
    }

    /// Raw inclusive fixed-point arcs.
    pub fn raw_arcs(&self) -> &[(u128, u128)] {
        &self.arcs
    }

    /// Writes `lo,hi` rows.
    pub fn write_csv(&self, out: &mut dyn Write) -> Result<()> {
        writeln!(out, "lo,hi")?;
        for (lo, hi) in self.arcs() {
            writeln!(out, "{lo},{hi}")?;
        }
        Ok(())
    }
}

/// Rotation `x ↦ x + α mod 1` on the torus `T^dim`, `1 ≤ dim ≤ 3`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RotationSystem {
    alphas: Vec<Irrational>,
}

impl RotationSystem {
    pub fn new(alphas: Vec<Irrational>) -> Result<RotationSystem> {
        if alphas.is_empty() || alphas.len() > 3 {
            return invalid(format!(
                "rotation dimension must be 1, 2 or 3, got {}",
                alphas.len()
            ));
        }
        Ok(RotationSystem { alphas })
    }

    pub fn circle(alpha: Irrational) -> RotationSystem {
        RotationSystem {
            alphas: vec![alpha],
        }
    }

    pub fn dim(&self) -> usize {
        self.alphas.len()
    }

    pub fn alphas(&self) -> &[Irrational] {
        &self.alphas
    }

    /// `{eα}` per coordinate.
    pub fn power(&self, e: i64) -> Result<[Phase; 3]> {
        let mut out = [Phase::ZERO; 3];
        for (o, a) in out.iter_mut().zip(&self.alphas) {
            *o = a.frac_phase(e)?;
        }
        Ok(out)
    }
}

/// `T^{-steps} A = A − steps·α mod 1` for a circle rotation.
pub fn rotate_set(system: &RotationSystem, set: &CircleSet, steps: i64) -> Result<CircleSet> {
    if system.dim() != 1 {
        return invalid("rotate_set needs a one-dimensional rotation");
    }
    let shift = system.alphas[0].frac_phase(steps)?;
    Ok(set.translate(-shift))
}

/// Exact Lebesgue measure of `A_1 ∩ … ∩ A_m`; the empty list gives 1.
pub fn intersection_measure(sets: &[CircleSet]) -> f64 {
    intersection(sets).measure()
}

pub fn intersection(sets: &[CircleSet]) -> CircleSet {
    let Some(first) = sets.first() else {
        return CircleSet::full();
    };
    let mut acc = first.clone();
    for s in &sets[1..] {
        if acc.is_empty() {
            break;
        }
        acc = acc.intersect(s);
    }
    acc
}
