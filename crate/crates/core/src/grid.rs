//! Space/age/time discretization and control regions.
//!
//! Space is the unit interval with homogeneous Dirichlet ends, sampled at the
//! `nx` interior nodes `x_j = (j + 1) dx`, `dx = 1 / (nx + 1)`. Ages are the
//! `na + 1` nodes `a_i = i da` on `[0, A]`. Time steps equal age steps, so a
//! single index shift moves every cohort exactly along its characteristic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub na: usize,
    pub nt: usize,
    pub max_age: f64,
    pub horizon: f64,
}

impl Grid {
    /// Builds the aligned grid; `horizon` must be a whole number of age steps.
    pub fn new(nx: usize, na: usize, max_age: f64, horizon: f64) -> Result<Self> {
        if nx == 0 || na == 0 {
            return Err(Error::InvalidGrid("nx and na must be positive".into()));
        }
        if !(max_age > 0.0) || !(horizon > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "max_age {max_age} and horizon {horizon} must be positive"
            )));
        }
        let da = max_age / na as f64;
        let steps = horizon / da;
        let nt = steps.round();
        if (steps - nt).abs() > 1e-9 * steps.max(1.0) || nt < 1.0 {
            return Err(Error::InvalidGrid(format!(
                "horizon {horizon} is not a positive multiple of the age step {da}"
            )));
        }
        Ok(Self {
            nx,
            na,
            nt: nt as usize,
            max_age,
            horizon,
        })
    }

    pub fn dx(&self) -> f64 {
        1.0 / (self.nx + 1) as f64
    }

    pub fn da(&self) -> f64 {
        self.max_age / self.na as f64
    }

    pub fn dt(&self) -> f64 {
        self.da()
    }

    pub fn x(&self, j: usize) -> f64 {
        (j + 1) as f64 * self.dx()
    }

    pub fn age(&self, i: usize) -> f64 {
        i as f64 * self.da()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    /// Cells per field: `nx * (na + 1)`.
    pub fn field_len(&self) -> usize {
        self.nx * (self.na + 1)
    }

    /// Same spatial and age resolution over a different horizon.
    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        Self::new(self.nx, self.na, self.max_age, horizon)
    }

    pub fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self.nx != other.nx || self.na != other.na || self.nt != other.nt {
            return Err(Error::GridMismatch(format!(
                "{}x{}x{} vs {}x{}x{}",
                self.nx, self.na, self.nt, other.nx, other.na, other.nt
            )));
        }
        Ok(())
    }
}

/// Open interval `(lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        v > self.lo && v < self.hi
    }

    pub fn is_nonempty(&self) -> bool {
        self.lo < self.hi
    }

    pub fn within(&self, outer: &Interval) -> bool {
        self.lo >= outer.lo && self.hi <= outer.hi
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Controls on both sexes; target: extinction of both.
    BothSexes,
    /// Control on males only, over `omega x (0, a2)`; target: males older than `rho`.
    MaleOnly,
    /// Control on females only; target: female extinction.
    FemaleOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlWindows {
    pub omega: Interval,
    pub omega_prime: Interval,
    pub age_m: Interval,
    pub age_f: Interval,
    pub variant: Variant,
    /// Exclusion age for the male-only target.
    #[serde(default)]
    pub rho: f64,
}

impl ControlWindows {
    /// Geometry used by the two-sex desk experiments.
    pub fn reference() -> Self {
        Self {
            omega: Interval::new(0.2, 0.8),
            omega_prime: Interval::new(0.3, 0.9),
            age_m: Interval::new(0.2, 0.8),
            age_f: Interval::new(0.1, 0.9),
            variant: Variant::BothSexes,
            rho: 0.0,
        }
    }

    /// Space-age region on which the male control acts.
    pub fn male_region(&self) -> Option<(Interval, Interval)> {
        match self.variant {
            Variant::BothSexes => Some((self.omega, self.age_m)),
            Variant::MaleOnly => Some((self.omega, Interval::new(0.0, self.age_m.hi))),
            Variant::FemaleOnly => None,
        }
    }

    pub fn female_region(&self) -> Option<(Interval, Interval)> {
        match self.variant {
            Variant::BothSexes | Variant::FemaleOnly => Some((self.omega_prime, self.age_f)),
            Variant::MaleOnly => None,
        }
    }
}

/// Boolean cell selector over a field (`(na + 1)` age rows of `nx` nodes).
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    nx: usize,
    cells: Vec<bool>,
}

impl Mask {
    pub fn empty(grid: &Grid) -> Self {
        Self {
            nx: grid.nx,
            cells: vec![false; grid.field_len()],
        }
    }

    pub fn full(grid: &Grid) -> Self {
        Self {
            nx: grid.nx,
            cells: vec![true; grid.field_len()],
        }
    }

    /// Cells whose node lies inside `space x ages` (both open).
    pub fn region(grid: &Grid, space: Interval, ages: Interval) -> Self {
        let mut cells = vec![false; grid.field_len()];
        for i in 0..=grid.na {
            if !ages.contains(grid.age(i)) {
                continue;
            }
            for j in 0..grid.nx {
                cells[i * grid.nx + j] = space.contains(grid.x(j));
            }
        }
        Self { nx: grid.nx, cells }
    }

    /// Whole age rows with `a > floor`.
    pub fn ages_above(grid: &Grid, floor: f64) -> Self {
        let mut cells = vec![false; grid.field_len()];
        for i in 0..=grid.na {
            if grid.age(i) > floor {
                cells[i * grid.nx..(i + 1) * grid.nx].fill(true);
            }
        }
        Self { nx: grid.nx, cells }
    }

    pub fn from_region(grid: &Grid, region: Option<(Interval, Interval)>) -> Self {
        match region {
            Some((space, ages)) => Self::region(grid, space, ages),
            None => Self::empty(grid),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.cells[i * self.nx + j]
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.cells[i * self.nx..(i + 1) * self.nx]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.cells.iter().any(|&c| c)
    }

    pub fn row_is_empty(&self, i: usize) -> bool {
        !self.row(i).iter().any(|&c| c)
    }
}
