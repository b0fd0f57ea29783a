//! The nonlinearity `beta(a, M)` resolved by damped Picard iteration on
//! `p = int lambda m da`: each sweep synthesizes controls for the frozen
//! system and measures the fertility aggregate of the controlled males.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, SpaceTime};
use crate::forward::{Coupling, ForwardInputs, ForwardSolution};
use crate::hum::{HumConfig, HumResult, HumSetup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialGuess {
    #[default]
    Zero,
    /// Lagged aggregate of the uncontrolled nonlinear run.
    FreeRun,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedPointConfig {
    pub damping: f64,
    pub tol: f64,
    pub max_outer_iters: usize,
    pub initial: InitialGuess,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol: 1e-8,
            max_outer_iters: 30,
            initial: InitialGuess::Zero,
        }
    }
}

impl FixedPointConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "damping {} not in (0,1]",
                self.damping
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerance {} must be positive",
                self.tol
            )));
        }
        Ok(())
    }
}

/// `Lambda(p)`: synthesize with `p` frozen, return the lagged fertility
/// aggregate of the controlled male trajectory together with the synthesis.
pub fn lambda_map(
    setup: &HumSetup,
    p: &SpaceTime,
    m0: &Field,
    f0: &Field,
    cfg: &HumConfig,
    warm: Option<&[f64]>,
) -> Result<(SpaceTime, HumResult)> {
    let res = setup.synthesize_from(p, m0, f0, cfg, warm)?;
    Ok((res.trajectory.fertility.lagged(), res))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointResult {
    pub converged: bool,
    pub iterations: usize,
    /// `|p^{k+1} - p^k| / max(1, |p^k|)` per sweep.
    pub residuals: Vec<f64>,
    /// Ratios of successive residuals.
    pub contraction: Vec<f64>,
    pub p: SpaceTime,
    /// Synthesis at the final `p`.
    pub hum: HumResult,
    /// Nonlinear system driven by the synthesized controls.
    pub nonlinear: ForwardSolution,
    /// `|lag(M_nonlinear) - p|` in `L2(Q_T)`.
    pub consistency: f64,
    pub inner_iterations: Vec<usize>,
}

pub fn initial_guess(setup: &HumSetup, m0: &Field, f0: &Field, kind: InitialGuess) -> Result<SpaceTime> {
    match kind {
        InitialGuess::Zero => Ok(SpaceTime::zeros(setup.grid())),
        InitialGuess::FreeRun => {
            let free = setup.scheme.run(
                &ForwardInputs {
                    initial_m: Some(m0),
                    initial_f: Some(f0),
                    ..ForwardInputs::default()
                },
                &Coupling::Nonlinear,
            )?;
            Ok(free.fertility.lagged())
        }
    }
}

pub fn iterate(
    setup: &HumSetup,
    m0: &Field,
    f0: &Field,
    fp: &FixedPointConfig,
    hum: &HumConfig,
) -> Result<FixedPointResult> {
    let p0 = initial_guess(setup, m0, f0, fp.initial)?;
    iterate_from(setup, m0, f0, p0, fp, hum)
}

pub fn iterate_from(
    setup: &HumSetup,
    m0: &Field,
    f0: &Field,
    p0: SpaceTime,
    fp: &FixedPointConfig,
    hum: &HumConfig,
) -> Result<FixedPointResult> {
    fp.check()?;
    let g = *setup.grid();
    let mut p = p0;
    let mut residuals = Vec::new();
    let mut inner_iterations = Vec::new();
    let mut warm: Option<Vec<f64>> = None;
    let mut converged = false;
    let mut best: Option<(f64, SpaceTime)> = None;

    for _ in 0..fp.max_outer_iters {
        let (lp, res) = lambda_map(setup, &p, m0, f0, hum, warm.as_deref())?;
        inner_iterations.push(res.iterations);
        let next = p.blend(&lp, fp.damping);
        let r = next.distance(&p, &g) / p.norm(&g).max(1.0);
        residuals.push(r);
        warm = Some(res.packed);
        p = next;
        if best.as_ref().map_or(true, |(b, _)| r < *b) {
            best = Some((r, p.clone()));
        }
        if r <= fp.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        if let Some((_, bp)) = best {
            p = bp;
        }
    }

    let final_hum = setup.synthesize_from(&p, m0, f0, hum, warm.as_deref())?;
    let nonlinear = setup.scheme.run(
        &ForwardInputs {
            initial_m: Some(m0),
            initial_f: Some(f0),
            control_m: Some(&final_hum.control_m),
            control_f: Some(&final_hum.control_f),
            skip_male: false,
        },
        &Coupling::Nonlinear,
    )?;
    let consistency = nonlinear.fertility.lagged().distance(&p, &g);
    let contraction = residuals
        .windows(2)
        .map(|w| if w[0] == 0.0 { 0.0 } else { w[1] / w[0] })
        .collect();
    Ok(FixedPointResult {
        converged,
        iterations: residuals.len(),
        residuals,
        contraction,
        p,
        hum: final_hum,
        nonlinear,
        consistency,
        inner_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{ControlWindows, Grid};
    use crate::rates::RateTable;

    #[test]
    fn zero_data_converges_at_once() {
        let g = Grid::new(6, 10, 1.0, 0.5).unwrap();
        let setup = HumSetup::new(&RateTable::reference(), &g, &ControlWindows::reference()).unwrap();
        let z = Field::zeros(&g);
        let res = iterate(&setup, &z, &z, &FixedPointConfig::default(), &HumConfig::default()).unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 1);
        assert_eq!(res.p.max_abs(), 0.0);
        assert_eq!(res.consistency, 0.0);
    }

    #[test]
    fn damping_is_validated() {
        let cfg = FixedPointConfig {
            damping: 0.0,
            ..FixedPointConfig::default()
        };
        assert!(cfg.check().is_err());
    }
}
