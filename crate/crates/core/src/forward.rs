//! Forward time marching for the two-sex system, either with the birth-rate
//! argument frozen to a given profile `p(x, t)` or with the nonlinear
//! coupling `p = int lambda m da` lagged one step.
//!
//! One step `k -> k + 1`, per sex, female first:
//! shift every age row up by one, multiply row `i` by `pi(a_i) / pi(a_{i-1})`,
//! backward-Euler diffusion on rows `1..=na`, add `dt * control`, then fill
//! row 0 from the renewal quadrature of the freshly computed female slice.

use crate::error::{Error, Result};
use crate::field::{Control, Field, SpaceTime, Trajectory};
use crate::grid::Grid;
use crate::ops::{trapezoid_weights, DiffusionOperator};
use crate::rates::{RateTable, Saturation, Sex};

/// How `p` in `beta(a, p)` is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum Coupling {
    /// `p[k]` is used to create the newborns of level `k`.
    Frozen(SpaceTime),
    /// `p[k] = int lambda m(k - 1) da`, with `p[0] = int lambda m(0) da`.
    Nonlinear,
}

/// Everything about a discretized rate table that does not depend on the data.
#[derive(Debug, Clone)]
pub struct Scheme {
    pub grid: Grid,
    pub rates: RateTable,
    ratio_m: Vec<f64>,
    ratio_f: Vec<f64>,
    diff_m: DiffusionOperator,
    diff_f: DiffusionOperator,
    /// `w_i beta0(a_i)`; entry 0 is never used by the renewal.
    birth_weights: Vec<f64>,
    /// `w_i lambda(a_i)`.
    fertility_weights: Vec<f64>,
}

impl Scheme {
    pub fn new(rates: &RateTable, grid: &Grid) -> Result<Self> {
        if (grid.max_age - rates.max_age).abs() > 1e-12 * rates.max_age {
            return Err(Error::GridMismatch(format!(
                "grid max age {} vs rate table {}",
                grid.max_age, rates.max_age
            )));
        }
        let da = grid.da();
        let ratios = |sex| -> Result<Vec<f64>> {
            let mut r = vec![0.0; grid.na + 1];
            for (i, v) in r.iter_mut().enumerate().skip(1) {
                *v = rates.survival_ratio(sex, grid.age(i - 1), da)?;
            }
            Ok(r)
        };
        let w = trapezoid_weights(grid.na, da);
        let birth_weights = (0..=grid.na).map(|i| w[i] * rates.birth.profile(grid.age(i))).collect();
        let fertility_weights = (0..=grid.na)
            .map(|i| w[i] * rates.male_fertility.value(grid.age(i), rates.max_age))
            .collect();
        Ok(Self {
            grid: *grid,
            rates: rates.clone(),
            ratio_m: ratios(Sex::Male)?,
            ratio_f: ratios(Sex::Female)?,
            diff_m: DiffusionOperator::for_grid(grid, rates.diffusivity_m),
            diff_f: DiffusionOperator::for_grid(grid, rates.diffusivity_f),
            birth_weights,
            fertility_weights,
        })
    }

    /// Per-row survival factors `s_i = pi(a_i) / pi(a_{i-1})`, `s_0 = 0`.
    pub fn survival_factors(&self, sex: Sex) -> &[f64] {
        match sex {
            Sex::Male => &self.ratio_m,
            Sex::Female => &self.ratio_f,
        }
    }

    pub fn diffusion(&self, sex: Sex) -> &DiffusionOperator {
        match sex {
            Sex::Male => &self.diff_m,
            Sex::Female => &self.diff_f,
        }
    }

    pub fn birth_weights(&self) -> &[f64] {
        &self.birth_weights
    }

    pub fn fertility_weights(&self) -> &[f64] {
        &self.fertility_weights
    }

    pub fn saturation(&self) -> Saturation {
        self.rates.birth.saturation
    }

    /// `int lambda m da` by the trapezoid rule.
    pub fn fertility_aggregate(&self, m: &Field) -> Vec<f64> {
        weighted_rows(m, &self.fertility_weights, 0)
    }

    /// `sum_{i >= 1} w_i beta0(a_i) f_i`, the birth integral before the
    /// `p`-response factor.
    pub fn birth_kernel(&self, f: &Field) -> Vec<f64> {
        weighted_rows(f, &self.birth_weights, 1)
    }

    /// Transport, survival, diffusion and source on rows `1..=na`; row 0 is
    /// left at zero for the renewal.
    pub fn advance(&self, sex: Sex, prev: &Field, source: Option<&Field>) -> Field {
        let mut out = Field::zeros(&self.grid);
        let ratio = self.survival_factors(sex);
        let diff = self.diffusion(sex);
        let dt = self.grid.dt();
        for i in 1..=self.grid.na {
            let s = ratio[i];
            let row = out.row_mut(i);
            if s != 0.0 {
                let from = prev.row(i - 1);
                if from.iter().any(|&v| v != 0.0) {
                    for (o, v) in row.iter_mut().zip(from) {
                        *o = s * v;
                    }
                    diff.solve_in_place(row);
                }
            }
            if let Some(src) = source {
                for (o, v) in row.iter_mut().zip(src.row(i)) {
                    *o += dt * v;
                }
            }
        }
        out
    }

    /// One full step. `p_next` is the birth-rate argument for the new level.
    /// Returns the new slices and the births `N` of the new level.
    pub fn step(
        &self,
        m: &Field,
        f: &Field,
        p_next: &[f64],
        control_m: Option<&Field>,
        control_f: Option<&Field>,
    ) -> (Field, Field, Vec<f64>) {
        let mut f_new = self.advance(Sex::Female, f, control_f);
        let births = self.births(&f_new, p_next);
        let mut m_new = self.advance(Sex::Male, m, control_m);
        self.renew(&mut f_new, Sex::Female, &births);
        self.renew(&mut m_new, Sex::Male, &births);
        (m_new, f_new, births)
    }

    pub fn births(&self, f: &Field, p: &[f64]) -> Vec<f64> {
        let sat = self.saturation();
        self.birth_kernel(f)
            .into_iter()
            .zip(p)
            .map(|(k, &pj)| sat.response(pj) * k)
            .collect()
    }

    fn renew(&self, slice: &mut Field, sex: Sex, births: &[f64]) {
        let share = self.rates.birth_share(sex);
        for (o, b) in slice.row_mut(0).iter_mut().zip(births) {
            *o = share * b;
        }
    }

    /// Marches from level 0 to `nt`. With `skip_male`, the male channel is
    /// not computed (valid only under frozen coupling, where the female
    /// equation does not read the male state) and is reported as zero.
    pub fn run(&self, inputs: &ForwardInputs<'_>, coupling: &Coupling) -> Result<ForwardSolution> {
        let g = &self.grid;
        if let Coupling::Frozen(p) = coupling {
            if p.nx() != g.nx || p.nt() != g.nt {
                return Err(Error::GridMismatch("frozen p does not match the grid".into()));
            }
        }
        let skip_male = inputs.skip_male && matches!(coupling, Coupling::Frozen(_));
        let zero = Field::zeros(g);
        let m0 = inputs.initial_m.cloned().unwrap_or_else(|| zero.clone());
        let f0 = inputs.initial_f.cloned().unwrap_or_else(|| zero.clone());

        let mut p_used = SpaceTime::zeros(g);
        let mut births = SpaceTime::zeros(g);
        let mut aggregate = SpaceTime::zeros(g);

        let p0: Vec<f64> = match coupling {
            Coupling::Frozen(p) => p.at(0).to_vec(),
            Coupling::Nonlinear => self.fertility_aggregate(&m0),
        };
        p_used.at_mut(0).copy_from_slice(&p0);
        births.at_mut(0).copy_from_slice(&self.births(&f0, &p0));
        aggregate.at_mut(0).copy_from_slice(&self.fertility_aggregate(&m0));

        let mut ms = Vec::with_capacity(g.nt + 1);
        let mut fs = Vec::with_capacity(g.nt + 1);
        ms.push(m0);
        fs.push(f0);

        for k in 0..g.nt {
            let p_next: Vec<f64> = match coupling {
                Coupling::Frozen(p) => p.at(k + 1).to_vec(),
                Coupling::Nonlinear => aggregate.at(k).to_vec(),
            };
            let cm = inputs.control_m.map(|c| &c.slices[k + 1]);
            let cf = inputs.control_f.map(|c| &c.slices[k + 1]);
            let (m_new, f_new, n_new) = if skip_male {
                let mut f_new = self.advance(Sex::Female, &fs[k], cf);
                let n_new = self.births(&f_new, &p_next);
                self.renew(&mut f_new, Sex::Female, &n_new);
                (zero.clone(), f_new, n_new)
            } else {
                self.step(&ms[k], &fs[k], &p_next, cm, cf)
            };
            if !(m_new.is_finite() && f_new.is_finite()) {
                return Err(Error::SolverAbort {
                    step: k + 1,
                    what: "non-finite density in forward march",
                });
            }
            p_used.at_mut(k + 1).copy_from_slice(&p_next);
            births.at_mut(k + 1).copy_from_slice(&n_new);
            aggregate
                .at_mut(k + 1)
                .copy_from_slice(&self.fertility_aggregate(&m_new));
            ms.push(m_new);
            fs.push(f_new);
        }

        let trace = |sex| {
            let mut t = births.clone();
            let share = self.rates.birth_share(sex);
            for k in 0..=g.nt {
                t.at_mut(k).iter_mut().for_each(|v| *v *= share);
            }
            t
        };
        Ok(ForwardSolution {
            male: Trajectory {
                slices: ms,
                renewal_trace: trace(Sex::Male),
            },
            female: Trajectory {
                slices: fs,
                renewal_trace: trace(Sex::Female),
            },
            births,
            fertility: aggregate,
            p_used,
        })
    }
}

fn weighted_rows(field: &Field, weights: &[f64], from: usize) -> Vec<f64> {
    let mut out = vec![0.0; field.nx()];
    for (i, &w) in weights.iter().enumerate().skip(from) {
        if w == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(field.row(i)) {
            *o += w * v;
        }
    }
    out
}

/// Borrowed data for one forward march. Absent pieces are zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct ForwardInputs<'a> {
    pub initial_m: Option<&'a Field>,
    pub initial_f: Option<&'a Field>,
    pub control_m: Option<&'a Control>,
    pub control_f: Option<&'a Control>,
    pub skip_male: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardProblem {
    pub rates: RateTable,
    pub grid: Grid,
    pub initial_m: Field,
    pub initial_f: Field,
    pub control_m: Option<Control>,
    pub control_f: Option<Control>,
    pub coupling: Coupling,
}

impl ForwardProblem {
    /// Uncontrolled problem.
    pub fn new(rates: RateTable, grid: Grid, initial_m: Field, initial_f: Field, coupling: Coupling) -> Self {
        Self {
            rates,
            grid,
            initial_m,
            initial_f,
            control_m: None,
            control_f: None,
            coupling,
        }
    }

    pub fn with_controls(mut self, control_m: Option<Control>, control_f: Option<Control>) -> Self {
        self.control_m = control_m;
        self.control_f = control_f;
        self
    }

    pub fn solve(&self) -> Result<ForwardSolution> {
        let scheme = Scheme::new(&self.rates, &self.grid)?;
        for (name, field) in [("m0", &self.initial_m), ("f0", &self.initial_f)] {
            if field.nx() != self.grid.nx || field.na() != self.grid.na {
                return Err(Error::GridMismatch(format!("{name} does not match the grid")));
            }
        }
        scheme.run(
            &ForwardInputs {
                initial_m: Some(&self.initial_m),
                initial_f: Some(&self.initial_f),
                control_m: self.control_m.as_ref(),
                control_f: self.control_f.as_ref(),
                skip_male: false,
            },
            &self.coupling,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardSolution {
    pub male: Trajectory,
    pub female: Trajectory,
    /// `N(x, t_k)`.
    pub births: SpaceTime,
    /// `M(x, t_k) = int lambda m(t_k) da`.
    pub fertility: SpaceTime,
    /// Birth-rate argument used to create each level.
    pub p_used: SpaceTime,
}

impl ForwardSolution {
    pub fn final_m(&self) -> &Field {
        self.male.final_slice()
    }

    pub fn final_f(&self) -> &Field {
        self.female.final_slice()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EnergyReport {
    pub l2_m: f64,
    pub l2_f: f64,
    pub h1_m: f64,
    pub h1_f: f64,
    pub initial_m: f64,
    pub initial_f: f64,
    pub final_m: f64,
    pub final_f: f64,
}

pub fn energy_report(sol: &ForwardSolution, grid: &Grid) -> EnergyReport {
    EnergyReport {
        l2_m: sol.male.l2_norm(grid),
        l2_f: sol.female.l2_norm(grid),
        h1_m: sol.male.h1_seminorm(grid),
        h1_f: sol.female.h1_seminorm(grid),
        initial_m: sol.male.slices[0].norm(grid),
        initial_f: sol.female.slices[0].norm(grid),
        final_m: sol.final_m().norm(grid),
        final_f: sol.final_f().norm(grid),
    }
}
