//! Penalized HUM: controls minimizing
//! `1/2 |v_m|^2 + 1/2 |v_f|^2 + 1/(2 eps) |m(T)|^2 + 1/(2 theta) |f(T)|^2`
//! (targets restricted per variant), computed on the adjoint final data.
//!
//! With `L` the control-to-final-state map and `L*` its adjoint, the
//! minimizer is `v = chi L* phi` where `phi` solves
//! `(T L chi L* + diag(eps, theta)) phi = -T x_free(T)`, `T` the target
//! restriction. The adjoint solver is the exact transpose of the forward one,
//! so this operator is symmetric and `eps`-coercive.

use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::adjoint::solve_adjoint;
use crate::error::{Error, Result};
use crate::field::{Control, Field, SpaceTime};
use crate::forward::{Coupling, ForwardInputs, ForwardSolution, Scheme};
use crate::grid::{ControlWindows, Grid, Mask, Variant};
use crate::krylov::{self, KrylovMethod};
use crate::rates::{RateTable, Sex};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HumConfig {
    pub epsilon: f64,
    pub theta: f64,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
    pub method: KrylovMethod,
    /// Use the block preconditioner built from the renewal-free Gram operator.
    pub precondition: bool,
}

impl Default for HumConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            theta: 1e-6,
            cg_tol: 1e-8,
            cg_max_iters: 500,
            method: KrylovMethod::ConjugateResidual,
            precondition: true,
        }
    }
}

impl HumConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.theta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "penalties must be positive (eps {}, theta {})",
                self.epsilon, self.theta
            )));
        }
        if !(self.cg_tol > 0.0 && self.cg_tol < 1.0) {
            return Err(Error::InvalidParameter(format!("cg_tol {} not in (0,1)", self.cg_tol)));
        }
        Ok(())
    }
}

/// Control supports and target cells for one synthesis problem.
#[derive(Debug, Clone)]
pub struct HumSetup {
    pub scheme: Scheme,
    pub control_m: Mask,
    pub control_f: Mask,
    pub target_m: Mask,
    pub target_f: Mask,
    blocks: OnceLock<Vec<Block>>,
}

/// One `(sex, age row)` diagonal block of the renewal-free Gram operator,
/// over the target cells of that row.
#[derive(Debug, Clone)]
struct Block {
    sex: Sex,
    offset: usize,
    gram: DMatrix<f64>,
}

impl HumSetup {
    pub fn new(rates: &RateTable, grid: &Grid, windows: &ControlWindows) -> Result<Self> {
        let scheme = Scheme::new(rates, grid)?;
        let (target_m, target_f) = match windows.variant {
            Variant::BothSexes => (Mask::full(grid), Mask::full(grid)),
            Variant::MaleOnly => (Mask::ages_above(grid, windows.rho), Mask::empty(grid)),
            Variant::FemaleOnly => (Mask::empty(grid), Mask::full(grid)),
        };
        Ok(Self::from_masks(
            scheme,
            Mask::from_region(grid, windows.male_region()),
            Mask::from_region(grid, windows.female_region()),
            target_m,
            target_f,
        ))
    }

    pub fn from_masks(scheme: Scheme, control_m: Mask, control_f: Mask, target_m: Mask, target_f: Mask) -> Self {
        Self {
            scheme,
            control_m,
            control_f,
            target_m,
            target_f,
            blocks: OnceLock::new(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.scheme.grid
    }

    fn female_only(&self) -> bool {
        self.target_m.is_empty() && self.control_m.is_empty()
    }

    /// Number of unknowns: target cells of both sexes.
    pub fn dimension(&self) -> usize {
        self.target_m.count() + self.target_f.count()
    }

    /// Target cells of `(m, f)` as one vector, male first.
    pub fn pack(&self, m: &Field, f: &Field) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dimension());
        for (field, mask) in [(m, &self.target_m), (f, &self.target_f)] {
            out.extend(
                field
                    .data()
                    .iter()
                    .zip(mask.cells())
                    .filter(|(_, &c)| c)
                    .map(|(v, _)| *v),
            );
        }
        out
    }

    pub fn unpack(&self, v: &[f64]) -> (Field, Field) {
        let g = self.grid();
        let mut it = v.iter();
        let mut fill = |mask: &Mask| {
            let mut f = Field::zeros(g);
            for (o, &c) in f.data_mut().iter_mut().zip(mask.cells()) {
                if c {
                    *o = *it.next().expect("vector shorter than the target");
                }
            }
            f
        };
        let m = fill(&self.target_m);
        let f = fill(&self.target_f);
        (m, f)
    }

    /// Controls `(chi n, chi l)` generated by the final data.
    pub fn controls_from(&self, p: &SpaceTime, phi_m: &Field, phi_f: &Field) -> Result<(Control, Control)> {
        let final_n = (!self.female_only()).then_some(phi_m);
        let adj = solve_adjoint(&self.scheme, p, final_n, Some(phi_f))?;
        let mut vm = adj.n_observed;
        let mut vf = adj.l_observed;
        vm.restrict(&self.control_m);
        vf.restrict(&self.control_f);
        Ok((vm, vf))
    }

    fn forward(
        &self,
        p: &SpaceTime,
        m0: Option<&Field>,
        f0: Option<&Field>,
        vm: Option<&Control>,
        vf: Option<&Control>,
        skip_male: bool,
    ) -> Result<ForwardSolution> {
        self.scheme.run(
            &ForwardInputs {
                initial_m: m0,
                initial_f: f0,
                control_m: vm,
                control_f: vf,
                skip_male,
            },
            &Coupling::Frozen(p.clone()),
        )
    }

    /// `G(phi) = T x(T) + diag(eps, theta) phi`, where `x` starts from zero
    /// and is driven by the controls generated by `phi`.
    pub fn gram_apply(&self, p: &SpaceTime, phi_m: &Field, phi_f: &Field, cfg: &HumConfig) -> Result<(Field, Field)> {
        let (vm, vf) = self.controls_from(p, phi_m, phi_f)?;
        let skip_male = self.female_only();
        let sol = self.forward(p, None, None, (!skip_male).then_some(&vm), Some(&vf), skip_male)?;
        let mut gm = sol.final_m().restricted(&self.target_m);
        let mut gf = sol.final_f().restricted(&self.target_f);
        gm.axpy(cfg.epsilon, &phi_m.restricted(&self.target_m));
        gf.axpy(cfg.theta, &phi_f.restricted(&self.target_f));
        Ok((gm, gf))
    }

    /// Without births, every target age row evolves on its own
    /// characteristic, and the Gram operator is block diagonal:
    /// `G_i = sum_d dt c_{i,d}^2 D^d chi_{i-d} D^d` with `c_{i,d}` the survival
    /// product over `d` steps and `D` the diffusion resolvent.
    fn blocks(&self) -> &[Block] {
        self.blocks.get_or_init(|| {
            let g = self.grid();
            let mut out = Vec::new();
            let mut offset = 0;
            for (sex, target, control) in [
                (Sex::Male, &self.target_m, &self.control_m),
                (Sex::Female, &self.target_f, &self.control_f),
            ] {
                let powers = resolvent_powers(&self.scheme, sex, g.nt.min(g.na));
                let s = self.scheme.survival_factors(sex);
                for i in 0..=g.na {
                    let idx: Vec<usize> = (0..g.nx).filter(|&j| target.get(i, j)).collect();
                    if idx.is_empty() {
                        continue;
                    }
                    let mut gram = DMatrix::zeros(idx.len(), idx.len());
                    let mut c = 1.0;
                    for d in 0..g.nt.min(i) {
                        if d > 0 {
                            c *= s[i - d + 1];
                        }
                        if c == 0.0 {
                            break;
                        }
                        let pd = &powers[d];
                        let w = g.dt() * c * c;
                        for j in (0..g.nx).filter(|&j| control.get(i - d, j)) {
                            for (u, &a) in idx.iter().enumerate() {
                                let ra = w * pd[(j, a)];
                                if ra == 0.0 {
                                    continue;
                                }
                                for (v, &b) in idx.iter().enumerate() {
                                    gram[(u, v)] += ra * pd[(j, b)];
                                }
                            }
                        }
                    }
                    out.push(Block { sex, offset, gram });
                    offset += idx.len();
                }
            }
            out
        })
    }

    fn preconditioner(&self, cfg: &HumConfig) -> Vec<(usize, Cholesky<f64, Dyn>)> {
        self.blocks()
            .iter()
            .map(|b| {
                let pen = match b.sex {
                    Sex::Male => cfg.epsilon,
                    Sex::Female => cfg.theta,
                };
                let n = b.gram.nrows();
                let m = &b.gram + DMatrix::identity(n, n) * pen;
                let chol = Cholesky::new(m).expect("penalized block is positive definite");
                (b.offset, chol)
            })
            .collect()
    }

    fn gram_vec(&self, p: &SpaceTime, v: &[f64], cfg: &HumConfig) -> Result<Vec<f64>> {
        let (m, f) = self.unpack(v);
        let (gm, gf) = self.gram_apply(p, &m, &f, cfg)?;
        Ok(self.pack(&gm, &gf))
    }

    pub fn synthesize(&self, p: &SpaceTime, m0: &Field, f0: &Field, cfg: &HumConfig) -> Result<HumResult> {
        self.synthesize_from(p, m0, f0, cfg, None)
    }

    /// As [`synthesize`](Self::synthesize), with the Krylov iteration started
    /// from packed final data `warm` (e.g. a previous solution).
    pub fn synthesize_from(
        &self,
        p: &SpaceTime,
        m0: &Field,
        f0: &Field,
        cfg: &HumConfig,
        warm: Option<&[f64]>,
    ) -> Result<HumResult> {
        cfg.check()?;
        let g = *self.grid();
        let skip_male = self.female_only();
        let free = self.forward(p, Some(m0), Some(f0), None, None, skip_male)?;
        let rhs: Vec<f64> = self
            .pack(free.final_m(), free.final_f())
            .into_iter()
            .map(|v| -v)
            .collect();
        let warm = warm.filter(|w| w.len() == rhs.len());
        let factors = if cfg.precondition && rhs.iter().any(|&v| v != 0.0) {
            self.preconditioner(cfg)
        } else {
            Vec::new()
        };
        let apply_precond = |v: &[f64]| -> Vec<f64> {
            let mut out = v.to_vec();
            for (offset, chol) in &factors {
                let n = chol.l_dirty().nrows();
                let seg = DVector::from_column_slice(&v[*offset..offset + n]);
                out[*offset..offset + n].copy_from_slice(chol.solve(&seg).as_slice());
            }
            out
        };
        let precond: Option<crate::krylov::Preconditioner<'_>> =
            if factors.is_empty() { None } else { Some(&apply_precond) };
        let sol = krylov::solve(
            cfg.method,
            |v| self.gram_vec(p, v, cfg),
            precond,
            &rhs,
            warm,
            cfg.cg_tol,
            cfg.cg_max_iters,
        )?;

        let (phi_m, phi_f) = self.unpack(&sol.x);
        let (vm, vf) = self.controls_from(p, &phi_m, &phi_f)?;
        let controlled = self.forward(p, Some(m0), Some(f0), Some(&vm), Some(&vf), false)?;

        let target_m = controlled.final_m().restricted(&self.target_m);
        let target_f = controlled.final_f().restricted(&self.target_f);
        let mut opt_m = target_m.clone();
        opt_m.axpy(cfg.epsilon, &phi_m);
        let mut opt_f = target_f.clone();
        opt_f.axpy(cfg.theta, &phi_f);

        let energy_m = vm.energy(&g);
        let energy_f = vf.energy(&g);
        let tm = target_m.norm(&g);
        let tf = target_f.norm(&g);
        let cost = 0.5 * (energy_m + energy_f) + 0.5 * tm * tm / cfg.epsilon + 0.5 * tf * tf / cfg.theta;
        Ok(HumResult {
            final_m_norm: controlled.final_m().norm(&g),
            final_f_norm: controlled.final_f().norm(&g),
            target_m_norm: tm,
            target_f_norm: tf,
            free_target_m_norm: free.final_m().restricted(&self.target_m).norm(&g),
            free_target_f_norm: free.final_f().restricted(&self.target_f).norm(&g),
            optimality_m: opt_m.norm(&g),
            optimality_f: opt_f.norm(&g),
            control_energy_m: energy_m,
            control_energy_f: energy_f,
            cost,
            iterations: sol.iterations,
            residuals: sol.residuals,
            euclidean_residuals: sol.euclidean,
            converged: sol.converged,
            packed: sol.x,
            final_n: phi_m,
            final_l: phi_f,
            control_m: vm,
            control_f: vf,
            trajectory: controlled,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HumResult {
    pub control_m: Control,
    pub control_f: Control,
    pub trajectory: ForwardSolution,
    pub final_n: Field,
    pub final_l: Field,
    /// Final data in packed form, for warm starts.
    pub packed: Vec<f64>,
    pub final_m_norm: f64,
    pub final_f_norm: f64,
    /// Final norms over the target cells only.
    pub target_m_norm: f64,
    pub target_f_norm: f64,
    pub free_target_m_norm: f64,
    pub free_target_f_norm: f64,
    /// `|T m(T) + eps n_T|` and `|T f(T) + theta l_T|`.
    pub optimality_m: f64,
    pub optimality_f: f64,
    pub control_energy_m: f64,
    pub control_energy_f: f64,
    pub cost: f64,
    pub iterations: usize,
    /// Residual history in the norm minimized by the Krylov method.
    pub residuals: Vec<f64>,
    pub euclidean_residuals: Vec<f64>,
    pub converged: bool,
}

impl HumResult {
    /// Optimality defects relative to the achieved target norms.
    pub fn relative_optimality(&self) -> (f64, f64) {
        let rel = |d: f64, n: f64| if n == 0.0 { d } else { d / n };
        (
            rel(self.optimality_m, self.target_m_norm),
            rel(self.optimality_f, self.target_f_norm),
        )
    }
}

/// Dense `D^d` for `d = 0..=max`, `D = (I + dt K L_h)^-1`.
fn resolvent_powers(scheme: &Scheme, sex: Sex, max: usize) -> Vec<DMatrix<f64>> {
    let nx = scheme.grid.nx;
    let diff = scheme.diffusion(sex);
    let mut d = DMatrix::zeros(nx, nx);
    let mut col = vec![0.0; nx];
    for j in 0..nx {
        col.fill(0.0);
        col[j] = 1.0;
        diff.solve_in_place(&mut col);
        d.set_column(j, &DVector::from_column_slice(&col));
    }
    let mut out = Vec::with_capacity(max + 1);
    out.push(DMatrix::identity(nx, nx));
    for k in 1..=max {
        let next = &d * &out[k - 1];
        out.push(next);
    }
    out
}

fn with_variant(windows: &ControlWindows, variant: Variant) -> ControlWindows {
    let mut w = *windows;
    w.variant = variant;
    w
}

/// Both-sexes synthesis with frozen `p`.
pub fn synthesize(
    rates: &RateTable,
    grid: &Grid,
    windows: &ControlWindows,
    p: &SpaceTime,
    m0: &Field,
    f0: &Field,
    cfg: &HumConfig,
) -> Result<HumResult> {
    HumSetup::new(rates, grid, &with_variant(windows, Variant::BothSexes))?.synthesize(p, m0, f0, cfg)
}

/// Male control on `omega x (0, a2)`; target males older than `windows.rho`.
pub fn synthesize_male_only(
    rates: &RateTable,
    grid: &Grid,
    windows: &ControlWindows,
    p: &SpaceTime,
    m0: &Field,
    f0: &Field,
    cfg: &HumConfig,
) -> Result<HumResult> {
    if !(windows.rho > 0.0) {
        return Err(Error::InvalidParameter("male-only synthesis needs rho > 0".into()));
    }
    HumSetup::new(rates, grid, &with_variant(windows, Variant::MaleOnly))?.synthesize(p, m0, f0, cfg)
}

/// Female control on `omega' x (b1, b2)`; target all females. Only `theta`
/// is used.
pub fn synthesize_female_only(
    rates: &RateTable,
    grid: &Grid,
    windows: &ControlWindows,
    p: &SpaceTime,
    m0: &Field,
    f0: &Field,
    cfg: &HumConfig,
) -> Result<HumResult> {
    HumSetup::new(rates, grid, &with_variant(windows, Variant::FemaleOnly))?.synthesize(p, m0, f0, cfg)
}
