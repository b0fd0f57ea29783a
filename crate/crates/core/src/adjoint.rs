//! Backward solver for the adjoint cascade, built as the algebraic transpose
//! of the frozen-coupling forward step.
//!
//! Writing the forward step as `X^{k+1} = R_{k+1}(P X^k + dt V^{k+1})`, with
//! `P` the shift/survival/diffusion block and `R` the renewal, one backward
//! step is `Psi = R^T Phi^{k+1}` followed by `Phi^k = P^T Psi`. `Psi^{k+1}`
//! is what the control of level `k + 1` observes.

use crate::error::{Error, Result};
use crate::field::{Control, Field, SpaceTime, Trajectory};
use crate::forward::{ForwardSolution, Scheme};
use crate::grid::Grid;
use crate::ops::heat_semigroup;
use crate::rates::{RateTable, Sex};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdjointVariant {
    /// `(n, l)` with `n` source-free and `l` fed by both age-zero traces.
    Cascade,
    /// `(h, g)`; `h_T` must vanish on ages `a <= rho`.
    MaleOnly { rho: f64 },
    /// `g` alone (`h` forced to zero).
    FemaleOnly,
}

/// Deliberate departures from the exact transpose, for mutation tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Swap the `gamma` / `1 - gamma` weights in the trace source.
    SwappedShares,
    /// At one backward step, apply the survival factor of the destination
    /// age instead of the source age.
    MisalignedSurvival { step: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointProblem {
    pub rates: RateTable,
    pub grid: Grid,
    pub frozen_p: SpaceTime,
    pub final_n: Field,
    pub final_l: Field,
    pub variant: AdjointVariant,
}

impl AdjointProblem {
    pub fn solve(&self) -> Result<AdjointSolution> {
        let scheme = Scheme::new(&self.rates, &self.grid)?;
        match self.variant {
            AdjointVariant::Cascade => solve_adjoint(&scheme, &self.frozen_p, Some(&self.final_n), Some(&self.final_l)),
            AdjointVariant::MaleOnly { rho } => {
                for i in 0..=self.grid.na {
                    if self.grid.age(i) <= rho && self.final_n.row(i).iter().any(|&v| v != 0.0) {
                        return Err(Error::InvalidParameter(format!(
                            "male final datum is nonzero at age {} <= rho = {rho}",
                            self.grid.age(i)
                        )));
                    }
                }
                solve_adjoint(&scheme, &self.frozen_p, Some(&self.final_n), Some(&self.final_l))
            }
            AdjointVariant::FemaleOnly => solve_adjoint(&scheme, &self.frozen_p, None, Some(&self.final_l)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointSolution {
    /// `Phi^k` by time level; `slices[nt]` is the final datum.
    pub n: Trajectory,
    pub l: Trajectory,
    /// `Psi^k`, paired with the control of level `k`; level 0 is zero.
    pub n_observed: Control,
    pub l_observed: Control,
}

/// Marches backward from the final data. A missing final datum is zero and
/// is not computed; a missing `n` still lets `l` run (female-only system).
pub fn solve_adjoint(
    scheme: &Scheme,
    p: &SpaceTime,
    final_n: Option<&Field>,
    final_l: Option<&Field>,
) -> Result<AdjointSolution> {
    solve_adjoint_with(scheme, p, final_n, final_l, Fault::None)
}

pub fn solve_adjoint_with(
    scheme: &Scheme,
    p: &SpaceTime,
    final_n: Option<&Field>,
    final_l: Option<&Field>,
    fault: Fault,
) -> Result<AdjointSolution> {
    let g = scheme.grid;
    if p.nx() != g.nx || p.nt() != g.nt {
        return Err(Error::GridMismatch("frozen p does not match the grid".into()));
    }
    let zero = Field::zeros(&g);
    let run_n = final_n.is_some();
    let mut n_slices = vec![zero.clone(); g.nt + 1];
    let mut l_slices = vec![zero.clone(); g.nt + 1];
    let mut n_obs = Control::zeros(&g);
    let mut l_obs = Control::zeros(&g);
    n_slices[g.nt] = final_n.cloned().unwrap_or_else(|| zero.clone());
    l_slices[g.nt] = final_l.cloned().unwrap_or_else(|| zero.clone());

    let gamma = scheme.rates.sex_ratio;
    let (share_f, share_m) = match fault {
        Fault::SwappedShares => (1.0 - gamma, gamma),
        _ => (gamma, 1.0 - gamma),
    };
    let sat = scheme.saturation();
    let bw = scheme.birth_weights();

    for k in (0..g.nt).rev() {
        let (phi_n, phi_l) = (&n_slices[k + 1], &l_slices[k + 1]);

        // R^T: interior rows pass through, the age-zero rows scatter into
        // the female rows through the birth quadrature.
        let mut psi_n = phi_n.clone();
        psi_n.row_mut(0).fill(0.0);
        let mut psi_l = phi_l.clone();
        psi_l.row_mut(0).fill(0.0);
        let coupling: Vec<f64> = (0..g.nx)
            .map(|j| {
                let h = sat.response(p.at(k + 1)[j]);
                h * (share_f * phi_l.get(0, j) + share_m * phi_n.get(0, j))
            })
            .collect();
        if coupling.iter().any(|&c| c != 0.0) {
            for (i, &w) in bw.iter().enumerate().skip(1) {
                if w == 0.0 {
                    continue;
                }
                for (o, c) in psi_l.row_mut(i).iter_mut().zip(&coupling) {
                    *o += w * c;
                }
            }
        }

        let misalign = fault == Fault::MisalignedSurvival { step: k };
        let new_n = if run_n {
            retreat(scheme, Sex::Male, &psi_n, misalign)
        } else {
            zero.clone()
        };
        let new_l = retreat(scheme, Sex::Female, &psi_l, misalign);
        if !(new_n.is_finite() && new_l.is_finite()) {
            return Err(Error::SolverAbort {
                step: k,
                what: "non-finite density in adjoint march",
            });
        }
        n_obs.slices[k + 1] = psi_n;
        l_obs.slices[k + 1] = psi_l;
        n_slices[k] = new_n;
        l_slices[k] = new_l;
    }

    let trace = |slices: &[Field]| {
        let mut t = SpaceTime::zeros(&g);
        for (k, s) in slices.iter().enumerate() {
            t.at_mut(k).copy_from_slice(s.row(0));
        }
        t
    };
    Ok(AdjointSolution {
        n: Trajectory {
            renewal_trace: trace(&n_slices),
            slices: n_slices,
        },
        l: Trajectory {
            renewal_trace: trace(&l_slices),
            slices: l_slices,
        },
        n_observed: n_obs,
        l_observed: l_obs,
    })
}

/// `P^T`: `out[i - 1] = s_i D psi[i]` for `i = 1..=na`, `out[na] = 0`.
fn retreat(scheme: &Scheme, sex: Sex, psi: &Field, misalign: bool) -> Field {
    let g = &scheme.grid;
    let s = scheme.survival_factors(sex);
    let diff = scheme.diffusion(sex);
    let mut out = Field::zeros(g);
    for i in 1..=g.na {
        let factor = if misalign && i >= 2 { s[i - 1] } else { s[i] };
        let src = psi.row(i);
        if factor == 0.0 || src.iter().all(|&v| v == 0.0) {
            continue;
        }
        let row = out.row_mut(i - 1);
        row.copy_from_slice(src);
        diff.solve_in_place(row);
        row.iter_mut().for_each(|v| *v *= factor);
    }
    out
}

/// Closed-form male adjoint along characteristics:
/// `n(a, t) = pi_m(a + T - t) / pi_m(a) * exp((T - t) K_m Lap) n_T(a + T - t)`,
/// zero once the characteristic leaves through `a = A`.
///
/// The heat factor is the exact semigroup of the discrete Laplacian, so the
/// comparison with the solver isolates the time discretization.
pub fn characteristic_oracle(rates: &RateTable, grid: &Grid, final_n: &Field, levels: &[usize]) -> Result<Vec<Field>> {
    let mut out = Vec::with_capacity(levels.len());
    for &k in levels {
        if k > grid.nt {
            return Err(Error::InvalidParameter(format!("level {k} beyond nt = {}", grid.nt)));
        }
        let d = grid.nt - k;
        if d == 0 {
            out.push(final_n.clone());
            continue;
        }
        let lag = grid.time(d);
        let mut slice = Field::zeros(grid);
        for i in 0..grid.na.saturating_sub(d) {
            let ratio = rates.survival_ratio(Sex::Male, grid.age(i), lag)?;
            if ratio == 0.0 {
                continue;
            }
            let evolved = heat_semigroup(final_n.row(i + d), rates.diffusivity_m, lag);
            for (o, v) in slice.row_mut(i).iter_mut().zip(evolved) {
                *o = ratio * v;
            }
        }
        out.push(slice);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityGap {
    pub gap: f64,
    /// Sum of the Cauchy-Schwarz bounds of every pairing in the identity.
    pub scale: f64,
}

impl DualityGap {
    pub fn relative(&self) -> f64 {
        if self.scale == 0.0 {
            self.gap
        } else {
            self.gap / self.scale
        }
    }
}

/// Defect of the discrete Green identity
/// `<X(T), Phi(T)> - <X(0), Phi(0)> = sum_k dt <V^k, Psi^k>`.
pub fn duality_gap(
    grid: &Grid,
    forward: &ForwardSolution,
    control_m: Option<&Control>,
    control_f: Option<&Control>,
    adjoint: &AdjointSolution,
) -> Result<DualityGap> {
    let nt = grid.nt;
    if forward.male.slices.len() != nt + 1 || adjoint.n.slices.len() != nt + 1 {
        return Err(Error::GridMismatch("trajectory lengths differ from the grid".into()));
    }
    let mut lhs = 0.0;
    let mut scale = 0.0;
    let mut pair = |a: &Field, b: &Field, sign: f64| {
        lhs += sign * a.inner(b, grid);
        scale += a.norm(grid) * b.norm(grid);
    };
    pair(forward.final_m(), adjoint.n.final_slice(), 1.0);
    pair(forward.final_f(), adjoint.l.final_slice(), 1.0);
    pair(&forward.male.slices[0], &adjoint.n.slices[0], -1.0);
    pair(&forward.female.slices[0], &adjoint.l.slices[0], -1.0);
    for (c, obs) in [(control_m, &adjoint.n_observed), (control_f, &adjoint.l_observed)] {
        if let Some(c) = c {
            lhs -= c.inner(obs, grid);
            scale += c.energy(grid).sqrt() * obs.energy(grid).sqrt();
        }
    }
    Ok(DualityGap { gap: lhs.abs(), scale })
}
