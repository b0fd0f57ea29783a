//! Manufactured-solution refinement studies for the forward scheme.
//!
//! With `mu = 0` and no births, `m = e^{-K pi^2 t} sin(pi x) g(a - t)` solves
//! the male equation exactly whenever `g` vanishes near `a = 0`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::forward::{Coupling, ForwardInputs, Scheme};
use crate::grid::Grid;
use crate::obslab::bump;
use crate::rates::{BirthRate, RateTable, Survival};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Manufactured {
    pub diffusivity: f64,
    pub amplitude: f64,
    /// Support of the age profile `g`.
    pub lo: f64,
    pub hi: f64,
}

impl Default for Manufactured {
    fn default() -> Self {
        Self {
            diffusivity: 0.05,
            amplitude: 1.0,
            lo: 0.1,
            hi: 0.4,
        }
    }
}

impl Manufactured {
    pub fn exact(&self, x: f64, a: f64, t: f64) -> f64 {
        self.amplitude * (-self.diffusivity * PI * PI * t).exp() * (PI * x).sin() * bump(a - t, self.lo, self.hi)
    }

    /// Reference rates with mortality and births switched off.
    pub fn rates(&self) -> RateTable {
        let mut r = RateTable::reference();
        r.diffusivity_m = self.diffusivity;
        r.diffusivity_f = self.diffusivity;
        r.survival_m = Survival { mu0: 0.0, c: 0.0 };
        r.survival_f = Survival { mu0: 0.0, c: 0.0 };
        r.birth = BirthRate { peak: 0.0, ..r.birth };
        r
    }

    /// `L2(Q_A)` error of the scheme against the closed form at `t = T`.
    pub fn final_error(&self, grid: &Grid) -> Result<f64> {
        if self.hi + grid.horizon >= grid.max_age || self.lo <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "age profile ({}, {}) must stay inside (0, A) up to T = {}",
                self.lo, self.hi, grid.horizon
            )));
        }
        let scheme = Scheme::new(&self.rates(), grid)?;
        let m0 = Field::from_fn(grid, |x, a| self.exact(x, a, 0.0));
        let sol = scheme.run(
            &ForwardInputs {
                initial_m: Some(&m0),
                skip_male: false,
                ..ForwardInputs::default()
            },
            &Coupling::Frozen(crate::field::SpaceTime::zeros(grid)),
        )?;
        let exact = Field::from_fn(grid, |x, a| self.exact(x, a, grid.horizon));
        let mut err = sol.final_m().clone();
        err.axpy(-1.0, &exact);
        Ok(err.norm(grid))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Refinement {
    /// Halve `dt = da` and `dx` together.
    Joint,
    /// Halve `dt = da` at fixed `nx`.
    Temporal,
    /// Halve `dx` at fixed `na`.
    Spatial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyLevel {
    pub nx: usize,
    pub na: usize,
    pub dx: f64,
    pub dt: f64,
    pub error: f64,
    /// `log2(e_{k-1} / e_k)`; absent on the first level or when an error is zero.
    pub order: Option<f64>,
}

/// Errors on `levels` successive refinements of `base`.
pub fn study(case: &Manufactured, base: &Grid, levels: usize, mode: Refinement) -> Result<Vec<StudyLevel>> {
    let mut out: Vec<StudyLevel> = Vec::with_capacity(levels);
    let (mut nx, mut na) = (base.nx, base.na);
    for _ in 0..levels {
        let g = Grid::new(nx, na, base.max_age, base.horizon)?;
        let error = case.final_error(&g)?;
        let order = out
            .last()
            .filter(|prev| prev.error > 0.0 && error > 0.0)
            .map(|prev| (prev.error / error).log2());
        out.push(StudyLevel {
            nx,
            na,
            dx: g.dx(),
            dt: g.dt(),
            error,
            order,
        });
        if matches!(mode, Refinement::Joint | Refinement::Spatial) {
            nx = 2 * nx + 1;
        }
        if matches!(mode, Refinement::Joint | Refinement::Temporal) {
            na *= 2;
        }
    }
    Ok(out)
}
