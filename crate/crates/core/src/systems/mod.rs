//! Measure-preserving systems, observables and grid quadrature.
//!
//! Points are triples of [`Phase`]s (unused coordinates are zero). Rotation
//! and cyclic-shift powers are exact translations; Heisenberg powers are
//! exact up to the `2^-128` rounding of `g`.

mod circle;
mod heisenberg;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::phase::Phase;
use crate::reduce::tree_sum;

pub use circle::{intersection, intersection_measure, rotate_set, CircleSet, RotationSystem};
pub use heisenberg::{
    bump, e, group_mul, heisenberg_orbit, nilsequence_sample, poly_phase, reduce, HeisPower,
    HeisenbergSystem, NilsequenceKind, Real, BUMP_LIPSCHITZ, MAX_EXPONENT,
};

/// A point of `T^3` or of the Heisenberg fundamental domain.
pub type Coords = [Phase; 3];

/// Upper bound on the number of grid points `G^dim`.
pub const MAX_GRID_POINTS: usize = 1 << 24;

/// Default points per dimension.
pub const DEFAULT_GRID: usize = 1 << 12;

const GRID_MAGIC: &[u8; 11] = b"ULAB-GRID-1";

#[derive(Clone, Debug, PartialEq)]
pub enum DynamicalSystem {
    Rotation(RotationSystem),
    Heisenberg(HeisenbergSystem),
    /// `j ↦ j + 1` on `Z_M`, realized on the `M` midpoints `(j + 1/2)/M`.
    CyclicShift(u64),
}

/// `T^e` ready to act on points.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SystemPower {
    Translate(Coords),
    Heisenberg(HeisPower),
}

impl SystemPower {
    pub fn act(&self, x: &Coords) -> Coords {
        match self {
            SystemPower::Translate(t) => [x[0] + t[0], x[1] + t[1], x[2] + t[2]],
            SystemPower::Heisenberg(h) => h.act(x),
        }
    }
}

impl DynamicalSystem {
    pub fn dim(&self) -> usize {
        match self {
            DynamicalSystem::Rotation(r) => r.dim(),
            DynamicalSystem::Heisenberg(_) => 3,
            DynamicalSystem::CyclicShift(_) => 1,
        }
    }

    pub fn label(&self) -> String {
        match self {
            DynamicalSystem::Rotation(r) => {
                let a: Vec<&str> = r.alphas().iter().map(|a| a.label()).collect();
                format!("rotation({})", a.join(","))
            }
            DynamicalSystem::Heisenberg(h) => {
                let g = h.g().map(|r| r.to_f64());
                format!("heisenberg({},{},{})", g[0], g[1], g[2])
            }
            DynamicalSystem::CyclicShift(m) => format!("cyclic({m})"),
        }
    }

    pub fn power(&self, e: i64) -> Result<SystemPower> {
        Ok(match self {
            DynamicalSystem::Rotation(r) => SystemPower::Translate(r.power(e)?),
            DynamicalSystem::Heisenberg(h) => SystemPower::Heisenberg(h.power(e)?),
            DynamicalSystem::CyclicShift(m) => SystemPower::Translate([
                Phase::from_ratio(e.rem_euclid(*m as i64) as u64, *m),
                Phase::ZERO,
                Phase::ZERO,
            ]),
        })
    }

    /// The quadrature grid for `μ`: `g` points per dimension (cyclic shifts
    /// always use their `M` points).
    pub fn grid(&self, g: usize) -> Result<Grid> {
        match self {
            DynamicalSystem::CyclicShift(m) => {
                if *m < 1 || *m as usize > MAX_GRID_POINTS {
                    return invalid(format!("cyclic modulus {m} outside [1, {MAX_GRID_POINTS}]"));
                }
                Grid::new(1, *m as usize)
            }
            _ => Grid::new(self.dim(), g),
        }
    }
}

/// Midpoint grid `((j_1 + 1/2)/G, …)` on `[0,1)^dim`, first coordinate fastest.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Grid {
    dims: usize,
    g: usize,
}

impl Grid {
    pub fn new(dims: usize, g: usize) -> Result<Grid> {
        if !(1..=3).contains(&dims) {
            return invalid(format!("grid dimension must be 1, 2 or 3, got {dims}"));
        }
        let total = (g as u128).checked_pow(dims as u32).unwrap_or(u128::MAX);
        if g < 1 || total > MAX_GRID_POINTS as u128 {
            return Err(Error::Resource(format!(
                "grid of {g}^{dims} points exceeds the cap of {MAX_GRID_POINTS}"
            )));
        }
        Ok(Grid { dims, g })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn size(&self) -> usize {
        self.g
    }

    pub fn len(&self) -> usize {
        self.g.pow(self.dims as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, idx: usize) -> Coords {
        let mut out = [Phase::ZERO; 3];
        let mut rest = idx;
        let two_g = 2 * self.g as u64;
        for c in out.iter_mut().take(self.dims) {
            let j = (rest % self.g) as u64;
            rest /= self.g;
            *c = Phase::from_ratio(2 * j + 1, two_g);
        }
        out
    }
}

/// A bounded observable `f ∈ L^∞(μ)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Observable {
    /// `1_A` of the first coordinate.
    ArcIndicator(CircleSet),
    /// `Σ c · e(k · x)`.
    TrigPolynomial(Vec<(Complex64, [i64; 3])>),
    /// Piecewise-constant samples on a `g^dims` cell grid (nearest-cell lookup).
    LipschitzGrid {
        dims: usize,
        g: usize,
        samples: Vec<f64>,
        lipschitz: f64,
    },
    /// The pinned Heisenberg bump `max(0, 1 − 4·|x − (1/2,1/2,1/2)|)`.
    HeisenbergBump,
}

impl Observable {
    pub fn constant(c: f64) -> Observable {
        Observable::TrigPolynomial(vec![(Complex64::new(c, 0.0), [0; 3])])
    }

    /// `e(k · x)`.
    pub fn character(k: [i64; 3]) -> Observable {
        Observable::TrigPolynomial(vec![(Complex64::new(1.0, 0.0), k)])
    }

    pub fn lipschitz_grid(dims: usize, g: usize, samples: Vec<f64>, lipschitz: f64) -> Result<Observable> {
        let grid = Grid::new(dims, g)?;
        if samples.len() != grid.len() || samples.iter().any(|s| !s.is_finite()) {
            return invalid(format!(
                "Lipschitz grid needs {} finite samples, got {}",
                grid.len(),
                samples.len()
            ));
        }
        Ok(Observable::LipschitzGrid {
            dims,
            g,
            samples,
            lipschitz,
        })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Observable::ArcIndicator(_) => "arc-indicator",
            Observable::TrigPolynomial(_) => "trig-polynomial",
            Observable::LipschitzGrid { .. } => "lipschitz-grid",
            Observable::HeisenbergBump => "heisenberg-bump",
        }
    }

    pub fn eval(&self, x: &Coords) -> Complex64 {
        match self {
            Observable::ArcIndicator(a) => Complex64::new(a.contains(x[0]) as u8 as f64, 0.0),
            Observable::TrigPolynomial(terms) => terms
                .iter()
                .map(|(c, k)| {
                    let t = x[0].mul_int(k[0]) + x[1].mul_int(k[1]) + x[2].mul_int(k[2]);
                    if t == Phase::ZERO {
                        *c
                    } else {
                        c * e(t)
                    }
                })
                .sum(),
            Observable::LipschitzGrid { dims, g, samples, .. } => {
                let mut idx = 0usize;
                for d in (0..*dims).rev() {
                    idx = idx * g + x[d].cell(*g as u64) as usize;
                }
                Complex64::new(samples[idx], 0.0)
            }
            Observable::HeisenbergBump => Complex64::new(bump(x), 0.0),
        }
    }

    /// Recorded bound on `sup |f|`.
    pub fn sup(&self) -> f64 {
        match self {
            Observable::ArcIndicator(_) | Observable::HeisenbergBump => 1.0,
            Observable::TrigPolynomial(terms) => terms.iter().map(|(c, _)| c.norm()).sum(),
            Observable::LipschitzGrid { samples, .. } => {
                samples.iter().fold(0.0f64, |m, s| m.max(s.abs()))
            }
        }
    }

    /// Whether every value is real (enables real-valued reports).
    pub fn is_real(&self) -> bool {
        match self {
            Observable::TrigPolynomial(terms) => terms.iter().all(|(c, k)| *k == [0; 3] && c.im == 0.0),
            _ => true,
        }
    }
}

/// Samples of a function on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<Complex64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<GridFunction> {
        if values.len() != grid.len() {
            return invalid(format!(
                "grid has {} points but {} values were given",
                grid.len(),
                values.len()
            ));
        }
        Ok(GridFunction { grid, values })
    }

    /// Samples `f` at the grid points.
    pub fn sample(grid: Grid, f: impl Fn(&Coords) -> Complex64) -> GridFunction {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        GridFunction { grid, values }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// Quadrature of `∫ f dμ`.
    pub fn mean(&self) -> Complex64 {
        tree_sum(self.values.len(), |i| self.values[i]) / self.values.len() as f64
    }

    /// Grid RMS, the proxy for `‖f‖_{L²(μ)}`.
    pub fn l2_norm(&self) -> f64 {
        let s = tree_sum(self.values.len(), |i| self.values[i].norm_sqr());
        (s / self.values.len() as f64).sqrt()
    }

    /// Binary form: magic, `dims` (u32 LE), `G` (u64 LE), then `(re, im)` pairs as f64 LE.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_binary_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn write_binary_to(&self, out: &mut dyn Write) -> Result<()> {
        out.write_all(GRID_MAGIC)?;
        out.write_all(&(self.grid.dims as u32).to_le_bytes())?;
        out.write_all(&(self.grid.g as u64).to_le_bytes())?;
        for v in &self.values {
            out.write_all(&v.re.to_le_bytes())?;
            out.write_all(&v.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<GridFunction> {
        let mut input = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 11];
        input.read_exact(&mut magic)?;
        if &magic != GRID_MAGIC {
            return Err(Error::Format(format!("{}: not a grid file", path.display())));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        input.read_exact(&mut b4)?;
        input.read_exact(&mut b8)?;
        let grid = Grid::new(u32::from_le_bytes(b4) as usize, u64::from_le_bytes(b8) as usize)?;
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            input.read_exact(&mut b8)?;
            let re = f64::from_le_bytes(b8);
            input.read_exact(&mut b8)?;
            values.push(Complex64::new(re, f64::from_le_bytes(b8)));
        }
        Ok(GridFunction { grid, values })
    }
}

/// Root-mean-square of `f − g` over the common grid.
pub fn grid_l2_distance(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    if f.grid != g.grid {
        return invalid(format!(
            "grid mismatch: {}^{} vs {}^{}",
            f.grid.g, f.grid.dims, g.grid.g, g.grid.dims
        ));
    }
    let n = f.values.len();
    let s = tree_sum(n, |i| (f.values[i] - g.values[i]).norm_sqr());
    Ok((s / n as f64).sqrt())
}
