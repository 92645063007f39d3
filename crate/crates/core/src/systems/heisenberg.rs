//! The Heisenberg nilsystem and polynomial-phase nilsequences.
//!
//! `G` is the upper unitriangular group with law
//! `(x,y,z)(x',y',z') = (x+x', y+y', z+z'+xy')` and `Γ = G(Z)`. Points of
//! `X = G/Γ` are cosets `pΓ`, represented in the fundamental domain
//! `[0,1)^3`; `g` acts on the left. Reduction multiplies on the right by
//! `(p,q,r) ∈ Γ`, which sends `(x,y,z)` to `(x+p, y+q, z+r+xq)`.

use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_traits::{One, ToPrimitive};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gowers::SequenceWindow;
use crate::phase::Phase;
use crate::sequences::Irrational;

use super::Coords;

/// Largest `|e|` accepted for `g^e`.
pub const MAX_EXPONENT: u64 = 1_000_000_000;

/// Lipschitz constant of [`bump`] in the flat metric.
pub const BUMP_LIPSCHITZ: f64 = 4.0;

/// A real number `int + frac / 2^128`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Real {
    pub int: i64,
    pub frac: Phase,
}

impl Real {
    pub fn from_f64(x: f64) -> Real {
        Real {
            int: x.floor() as i64,
            frac: Phase::from_f64(x),
        }
    }

    pub fn from_irrational(a: &Irrational) -> Real {
        Real {
            int: a.int_part(),
            frac: a.phase(),
        }
    }

    pub fn to_f64(self) -> f64 {
        self.int as f64 + self.frac.to_f64()
    }

    /// `value · 2^128` as an integer.
    fn scaled(self) -> BigInt {
        (BigInt::from(self.int) << 128) + BigInt::from(self.frac.0)
    }
}

/// Translation by `g = (a, b, c)` on the Heisenberg nilmanifold.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeisenbergSystem {
    g: [Real; 3],
}

impl HeisenbergSystem {
    pub fn new(a: Real, b: Real, c: Real) -> HeisenbergSystem {
        HeisenbergSystem { g: [a, b, c] }
    }

    pub fn g(&self) -> [Real; 3] {
        self.g
    }

    /// `g^e`, exact apart from the `2^-128` rounding of `g`.
    pub fn power(&self, e: i64) -> Result<HeisPower> {
        if e.unsigned_abs() > MAX_EXPONENT {
            return Err(Error::Precision {
                requested: e.unsigned_abs() as u128,
                max: MAX_EXPONENT as u128,
            });
        }
        let s = BigInt::one() << 128;
        let s2 = BigInt::one() << 256;
        let [a, b, c] = self.g.map(Real::scaled);
        let eb = BigInt::from(e);
        let tri = BigInt::from(e as i128 * (e as i128 - 1) / 2);
        let ea = &eb * &a;
        let ebb = &eb * &b;
        let z: BigInt = &eb * &c * &s + &tri * &a * &b;
        let (ia, xa) = ea.div_mod_floor(&s);
        let (ib, yb) = ebb.div_mod_floor(&s);
        let zc: BigInt = z.mod_floor(&s2) >> 128;
        let to_i64 = |v: BigInt| {
            v.to_i64()
                .ok_or_else(|| Error::InvalidArgument(format!("g^{e} leaves the i64 range")))
        };
        Ok(HeisPower {
            ia: to_i64(ia)?,
            xa: Phase(xa.to_u128().unwrap()),
            ib: to_i64(ib)?,
            yb: Phase(yb.to_u128().unwrap()),
            zc: Phase(zc.to_u128().unwrap()),
        })
    }
}

/// `g^e = (ea, eb, ec + e(e−1)/2·ab)` split into integer and fractional parts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HeisPower {
    ia: i64,
    xa: Phase,
    ib: i64,
    yb: Phase,
    zc: Phase,
}

impl HeisPower {
    /// `g^e · p`, reduced to the fundamental domain.
    pub fn act(&self, p: &Coords) -> Coords {
        let [x, y, z] = *p;
        let x1 = x + self.xa;
        let y1 = y + self.yb;
        let carry_y = (y1.0 < y.0) as i64;
        let floor_y = self.ib + carry_y;
        // ea·y mod 1 = ia·y + {ea}·y
        let eay = y.mul_int(self.ia) + self.xa.mul_phase(y);
        let z1 = self.zc + z + eay - x1.mul_int(floor_y);
        [x1, y1, z1]
    }
}

/// `g^e · x0` for each exponent, in the fundamental domain.
pub fn heisenberg_orbit(system: &HeisenbergSystem, x0: &Coords, exponents: &[i64]) -> Result<Vec<Coords>> {
    exponents
        .iter()
        .map(|&e| Ok(system.power(e)?.act(x0)))
        .collect()
}

/// Group law on real triples.
pub fn group_mul(p: [f64; 3], q: [f64; 3]) -> [f64; 3] {
    [p[0] + q[0], p[1] + q[1], p[2] + q[2] + p[0] * q[1]]
}

/// Representative of `pΓ` in `[0,1)^3`.
pub fn reduce(p: [f64; 3]) -> [f64; 3] {
    let x = p[0] - p[0].floor();
    let fy = p[1].floor();
    let z = p[2] - x * fy;
    [x, p[1] - fy, z - z.floor()]
}

/// `F(p) = max(0, 1 − 4·|p − (1/2, 1/2, 1/2)|)` on the fundamental domain.
pub fn bump(p: &Coords) -> f64 {
    let d2: f64 = p.iter().map(|c| (c.to_f64() - 0.5).powi(2)).sum();
    (1.0 - BUMP_LIPSCHITZ * d2.sqrt()).max(0.0)
}

/// Generators of bounded nilsequences.
#[derive(Clone, Debug, PartialEq)]
pub enum NilsequenceKind {
    /// `F(g^n x0)` with the pinned bump `F`.
    HeisenbergLipschitz { system: HeisenbergSystem, x0: Coords },
    /// `e(c_0 + c_1 n + … + c_d n^d)` with `d ≤ 3`.
    PolynomialPhase(Vec<Phase>),
}

impl NilsequenceKind {
    pub fn polynomial(coeffs: Vec<Phase>) -> Result<NilsequenceKind> {
        if coeffs.is_empty() || coeffs.len() > 4 {
            return Err(Error::InvalidArgument(format!(
                "polynomial phase needs 1 to 4 coefficients (degree ≤ 3), got {}",
                coeffs.len()
            )));
        }
        Ok(NilsequenceKind::PolynomialPhase(coeffs))
    }

    pub fn label(&self) -> &'static str {
        match self {
            NilsequenceKind::HeisenbergLipschitz { .. } => "heisenberg-lipschitz",
            NilsequenceKind::PolynomialPhase(_) => "polynomial-phase",
        }
    }

    /// Lipschitz constant of the observable; `2π` for `e(·)` on the circle.
    pub fn lipschitz(&self) -> f64 {
        match self {
            NilsequenceKind::HeisenbergLipschitz { .. } => BUMP_LIPSCHITZ,
            NilsequenceKind::PolynomialPhase(_) => 2.0 * std::f64::consts::PI,
        }
    }

    pub fn value(&self, n: i64) -> Result<Complex64> {
        match self {
            NilsequenceKind::HeisenbergLipschitz { system, x0 } => {
                Ok(Complex64::new(bump(&system.power(n)?.act(x0)), 0.0))
            }
            NilsequenceKind::PolynomialPhase(coeffs) => Ok(e(poly_phase(coeffs, n))),
        }
    }
}

/// `Σ c_j n^j mod 1`, exact in fixed point.
pub fn poly_phase(coeffs: &[Phase], n: i64) -> Phase {
    let step = n as i128 as u128;
    let mut pow: u128 = 1;
    let mut acc = Phase::ZERO;
    for c in coeffs {
        acc = acc + Phase(c.0.wrapping_mul(pow));
        pow = pow.wrapping_mul(step);
    }
    acc
}

/// `e(θ) = exp(2πiθ)`.
pub fn e(theta: Phase) -> Complex64 {
    Complex64::cis(std::f64::consts::TAU * theta.to_f64())
}

/// The window `n ↦ value(n)` for `n = 1..=len`.
pub fn nilsequence_sample(kind: &NilsequenceKind, len: usize) -> Result<SequenceWindow> {
    let values: Vec<Complex64> = (1..=len as i64)
        .into_par_iter()
        .map(|n| kind.value(n))
        .collect::<Result<_>>()?;
    SequenceWindow::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys() -> HeisenbergSystem {
        let s2 = Irrational::parse("sqrt2").unwrap();
        let s3 = Irrational::parse("sqrt3").unwrap();
        HeisenbergSystem::new(
            Real::from_irrational(&s2),
            Real::from_irrational(&s3),
            Real::from_f64(0.0),
        )
    }

    fn f(p: &Coords) -> [f64; 3] {
        p.map(|c| c.to_f64())
    }

    fn torus_close(a: [f64; 3], b: [f64; 3], tol: f64) -> bool {
        a.iter().zip(&b).all(|(x, y)| {
            let d = (x - y).rem_euclid(1.0);
            d.min(1.0 - d) < tol
        })
    }

    #[test]
    fn orbit_examples() {
        let s = sys();
        let id = [Phase::ZERO; 3];
        let x0 = [Phase::from_f64(0.3), Phase::from_f64(0.6), Phase::from_f64(0.9)];
        assert_eq!(heisenberg_orbit(&s, &x0, &[0]).unwrap(), vec![x0]);
        let p = heisenberg_orbit(&s, &id, &[2]).unwrap()[0];
        let (r2, r3, r6) = (2f64.sqrt(), 3f64.sqrt(), 6f64.sqrt());
        let oracle = reduce([2.0 * r2, 2.0 * r3, r6]);
        assert!(torus_close(f(&p), oracle, 1e-14), "{:?} vs {oracle:?}", f(&p));
        let lattice = HeisenbergSystem::new(Real::from_f64(1.0), Real::from_f64(0.0), Real::from_f64(0.0));
        let base = [Phase::from_f64(0.3), Phase::ZERO, Phase::from_f64(0.9)];
        for e in [-5, 1, 7, 1000] {
            assert_eq!(heisenberg_orbit(&lattice, &id, &[e]).unwrap()[0], id);
            assert_eq!(heisenberg_orbit(&lattice, &base, &[e]).unwrap()[0], base);
            // off the y = 0 fibre an integer g is the skew map z ↦ z + e·y
            let p = heisenberg_orbit(&lattice, &x0, &[e]).unwrap()[0];
            assert_eq!(p, [x0[0], x0[1], x0[2] + x0[1].mul_int(e)]);
        }
        assert!(matches!(
            heisenberg_orbit(&s, &id, &[2_000_000_000]),
            Err(Error::Precision { .. })
        ));
    }

    #[test]
    fn powers_compose() {
        let s = sys();
        let x0 = [Phase::from_f64(0.1), Phase::from_f64(0.7), Phase::from_f64(0.4)];
        for (e1, e2) in [(3, 5), (1000, -37), (123_456, 654_321), (-999_999, 17)] {
            let direct = s.power(e1 + e2).unwrap().act(&x0);
            let stepped = s.power(e1).unwrap().act(&s.power(e2).unwrap().act(&x0));
            assert!(torus_close(f(&direct), f(&stepped), 1e-10), "{e1} {e2}");
        }
    }

    #[test]
    fn action_matches_float_group_law() {
        let s = sys();
        let g = s.g().map(|r| r.to_f64());
        let x0 = [0.25, 0.8, 0.55];
        let p0 = x0.map(Phase::from_f64);
        let mut power = [0.0; 3];
        for e in 1..=20 {
            power = group_mul(power, g);
            let gp = reduce(group_mul(power, x0));
            let exact = s.power(e).unwrap().act(&p0);
            assert!(torus_close(f(&exact), gp, 1e-11), "e = {e}");
        }
    }

    #[test]
    fn reduction_and_associativity() {
        let pts = [[0.3, 1.7, -2.2], [4.1, -0.6, 0.9], [-1.25, 2.5, 3.75]];
        for p in pts {
            let r = reduce(p);
            assert!(r.iter().all(|c| (0.0..1.0).contains(c)));
            assert_eq!(reduce(r), r);
            for q in pts {
                for t in pts {
                    let l = group_mul(group_mul(p, q), t);
                    let rr = group_mul(p, group_mul(q, t));
                    assert!(l.iter().zip(&rr).all(|(a, b)| (a - b).abs() < 1e-12));
                }
            }
            // right multiplication by a lattice element is invisible after reduction
            let moved = group_mul(p, [2.0, -3.0, 5.0]);
            assert!(torus_close(reduce(moved), r, 1e-12));
        }
    }

    #[test]
    fn nilsequence_windows() {
        let ones = nilsequence_sample(&NilsequenceKind::polynomial(vec![Phase::ZERO]).unwrap(), 50).unwrap();
        assert!(ones.values().iter().all(|v| *v == Complex64::new(1.0, 0.0)));
        let gamma = Irrational::parse("sqrt2").unwrap().phase();
        let ch = nilsequence_sample(&NilsequenceKind::polynomial(vec![Phase::ZERO, gamma]).unwrap(), 500).unwrap();
        assert!(ch.values().iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
        let heis = NilsequenceKind::HeisenbergLipschitz {
            system: sys(),
            x0: [Phase::ZERO; 3],
        };
        let w = nilsequence_sample(&heis, 2000).unwrap();
        assert!(w.values().iter().all(|v| v.norm() <= 1.0 + 1e-12 && v.im == 0.0));
        assert!(w.values().iter().any(|v| v.re > 0.0));
        assert_eq!(heis.lipschitz(), 4.0);
        assert!(NilsequenceKind::polynomial(vec![Phase::ZERO; 5]).is_err());
    }

    #[test]
    fn polynomial_phase_is_exact() {
        let c = [Phase::from_ratio(1, 3), Phase::from_f64(0.25), Phase::from_f64(0.125)];
        for n in [-7i64, 0, 1, 2, 1_000_000] {
            let direct = c[0] + c[1].mul_int(n) + c[2].mul_int(n).mul_int(n);
            assert_eq!(poly_phase(&c, n), direct);
        }
    }
}
