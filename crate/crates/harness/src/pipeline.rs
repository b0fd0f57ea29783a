//! Runs one scenario end to end and turns the solver output into a summary,
//! a list of verdicts and CSV tables.

use serde::Serialize;
use twosex::convergence::{study, Refinement, StudyLevel};
use twosex::fixpoint::{initial_guess, iterate, FixedPointResult};
use twosex::forward::{Coupling, ForwardInputs, ForwardSolution, Scheme};
use twosex::hum::{HumResult, HumSetup};
use twosex::obslab::{BlowupScan, Observer, ProbeRatio, ProbeReport, ProbeSet, Ratio};
use twosex::validate::{critical_time, validate, ValidationReport};
use twosex::{Field, Grid, SpaceTime, Variant};

use crate::config::{Pipeline, ScenarioConfig};
use crate::error::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    AtMost,
    AtLeast,
    Holds,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    /// `None` for boolean checks and for non-finite measurements.
    pub value: Option<f64>,
    pub limit: Option<f64>,
    pub relation: Relation,
    pub passed: bool,
}

impl Verdict {
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value: finite(value),
            limit: Some(limit),
            relation: Relation::AtMost,
            passed: value <= limit,
        }
    }

    pub fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value: finite(value),
            limit: Some(limit),
            relation: Relation::AtLeast,
            passed: value >= limit,
        }
    }

    pub fn holds(name: &str, passed: bool) -> Self {
        Self {
            name: name.into(),
            value: None,
            limit: None,
            relation: Relation::Holds,
            passed,
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "pass" } else { "FAIL" };
        let show = |v: Option<f64>| v.map_or("non-finite".to_string(), |v| format!("{v:.3e}"));
        match self.relation {
            Relation::Holds => write!(f, "{tag} {}", self.name),
            Relation::AtMost => write!(f, "{tag} {} = {} <= {}", self.name, show(self.value), show(self.limit)),
            Relation::AtLeast => write!(f, "{tag} {} = {} >= {}", self.name, show(self.value), show(self.limit)),
        }
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// `num / den`, with `0 / 0 = 0`.
pub fn relative(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlSummary {
    pub iterations: usize,
    pub converged: bool,
    pub final_m_ratio: f64,
    pub final_f_ratio: f64,
    pub optimality_m: f64,
    pub optimality_f: f64,
    pub control_energy_m: f64,
    pub control_energy_f: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixpointSummary {
    pub converged: bool,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub contraction: Vec<f64>,
    pub inner_iterations: Vec<usize>,
    pub consistency: f64,
    /// Final-state ratios of the nonlinear system under the synthesized controls.
    pub nonlinear_m_ratio: f64,
    pub nonlinear_f_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportSummary {
    pub probes: usize,
    pub a0: f64,
    pub max_n_residual: f64,
    pub max_l_discrepancy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeSummary {
    pub frozen_p: f64,
    pub probes: usize,
    pub max_ratio: Option<f64>,
    pub argmax: Option<String>,
    pub infinite: usize,
    pub degenerate: usize,
    pub doubled_max_ratio: Option<f64>,
    pub witness: Option<ProbeRatio>,
    pub blowup: Option<BlowupScan>,
    pub support: Option<SupportSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub pipeline: Pipeline,
    pub config_hash: String,
    pub seed: u64,
    pub grid: Grid,
    pub variant: Variant,
    pub critical_time: f64,
    pub validation: ValidationReport,
    pub initial_m_norm: f64,
    pub initial_f_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixpoint: Option<FixpointSummary>,
    /// Population left after an uncontrolled run of length `A`, relative to the data.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aftermath_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probes: Option<ProbeSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub study: Vec<StudyLevel>,
    pub verdicts: Vec<Verdict>,
    pub passed: bool,
}

/// A CSV file; the writer prepends a `config_hash` column.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub summary: Summary,
    pub tables: Vec<Table>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.summary.passed {
            0
        } else {
            1
        }
    }
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn run(cfg: &ScenarioConfig) -> Result<Outcome, HarnessError> {
    let grid = cfg.grid.build()?;
    if (cfg.rates.max_age - grid.max_age).abs() > 1e-12 {
        return Err(HarnessError::Config(format!(
            "rates.max_age {} differs from grid.max_age {}",
            cfg.rates.max_age, grid.max_age
        )));
    }
    let validation = match cfg.pipeline {
        Pipeline::Study => ValidationReport::default(),
        _ => validate(&cfg.rates, &cfg.windows, grid.horizon),
    };
    let blocking = match cfg.pipeline {
        Pipeline::Fixpoint | Pipeline::Hum => validation.failures().count(),
        // Probing below the critical time is the point of the witness runs.
        Pipeline::Probe => validation.failures().filter(|c| c.name != "time").count(),
        Pipeline::Study => 0,
    };
    if blocking > 0 {
        return Err(HarnessError::Validation(validation));
    }

    let (m0, f0) = cfg.initial.fields(&grid);
    let mut summary = Summary {
        scenario: cfg.name.clone(),
        pipeline: cfg.pipeline,
        config_hash: cfg.hash(),
        seed: cfg.seed,
        grid,
        variant: cfg.windows.variant,
        critical_time: critical_time(&cfg.rates, &cfg.windows),
        validation,
        initial_m_norm: m0.norm(&grid),
        initial_f_norm: f0.norm(&grid),
        control: None,
        fixpoint: None,
        aftermath_ratio: None,
        probes: None,
        study: Vec::new(),
        verdicts: Vec::new(),
        passed: false,
    };
    let tables = match cfg.pipeline {
        Pipeline::Fixpoint | Pipeline::Hum => run_control(cfg, &grid, &m0, &f0, &mut summary)?,
        Pipeline::Probe => run_probes(cfg, &grid, &mut summary)?,
        Pipeline::Study => run_study(cfg, &grid, &mut summary)?,
    };
    summary.passed = summary.verdicts.iter().all(|v| v.passed);
    Ok(Outcome { summary, tables })
}

fn control_summary(res: &HumResult, g: &Grid, m0: &Field, f0: &Field) -> ControlSummary {
    let (om, of) = res.relative_optimality();
    ControlSummary {
        iterations: res.iterations,
        converged: res.converged,
        final_m_ratio: relative(res.final_m_norm, m0.norm(g)),
        final_f_ratio: relative(res.final_f_norm, f0.norm(g)),
        optimality_m: om,
        optimality_f: of,
        control_energy_m: res.control_energy_m,
        control_energy_f: res.control_energy_f,
        cost: res.cost,
    }
}

/// Final-state verdicts for the sexes the variant targets.
fn target_verdicts(cfg: &ScenarioConfig, g: &Grid, sol: &ForwardSolution, m0: &Field, f0: &Field) -> Vec<Verdict> {
    let bound = cfg.thresholds.final_ratio;
    let data = (m0.norm(g).powi(2) + f0.norm(g).powi(2)).sqrt();
    let m = sol.final_m();
    let f = sol.final_f();
    match cfg.windows.variant {
        Variant::BothSexes => vec![
            Verdict::at_most("final-m-ratio", relative(m.norm(g), m0.norm(g)), bound),
            Verdict::at_most("final-f-ratio", relative(f.norm(g), f0.norm(g)), bound),
        ],
        Variant::MaleOnly => {
            let rho = cfg.windows.rho;
            vec![Verdict::at_most(
                "final-m-above-rho-ratio",
                relative(m.norm_over_ages(g, |a| a > rho), data),
                bound,
            )]
        }
        Variant::FemaleOnly => vec![Verdict::at_most(
            "final-f-ratio",
            relative(f.norm(g), f0.norm(g)),
            bound,
        )],
    }
}

/// Leaves the controlled state alone for one full age span.
fn aftermath(
    cfg: &ScenarioConfig,
    g: &Grid,
    sol: &ForwardSolution,
    m0: &Field,
    f0: &Field,
) -> Result<f64, HarnessError> {
    let long = g.with_horizon(g.max_age)?;
    let scheme = Scheme::new(&cfg.rates, &long)?;
    let (m, f) = (
        Field::from_vec(&long, sol.final_m().data().to_vec()),
        Field::from_vec(&long, sol.final_f().data().to_vec()),
    );
    let after = scheme.run(
        &ForwardInputs {
            initial_m: Some(&m),
            initial_f: Some(&f),
            ..ForwardInputs::default()
        },
        &Coupling::Nonlinear,
    )?;
    let left = (after.final_m().norm(&long).powi(2) + after.final_f().norm(&long).powi(2)).sqrt();
    let data = (m0.norm(g).powi(2) + f0.norm(g).powi(2)).sqrt();
    Ok(relative(left, data))
}

fn run_control(
    cfg: &ScenarioConfig,
    g: &Grid,
    m0: &Field,
    f0: &Field,
    summary: &mut Summary,
) -> Result<Vec<Table>, HarnessError> {
    let setup = HumSetup::new(&cfg.rates, g, &cfg.windows)?;
    let mut tables = Vec::new();
    let (hum, state): (HumResult, ForwardSolution) = match cfg.pipeline {
        Pipeline::Fixpoint => {
            let res: FixedPointResult = iterate(&setup, m0, f0, &cfg.fixpoint, &cfg.hum)?;
            summary.fixpoint = Some(FixpointSummary {
                converged: res.converged,
                iterations: res.iterations,
                residuals: res.residuals.clone(),
                contraction: res.contraction.clone(),
                inner_iterations: res.inner_iterations.clone(),
                consistency: res.consistency,
                nonlinear_m_ratio: relative(res.nonlinear.final_m().norm(g), m0.norm(g)),
                nonlinear_f_ratio: relative(res.nonlinear.final_f().norm(g), f0.norm(g)),
            });
            summary
                .verdicts
                .push(Verdict::holds("fixpoint-converged", res.converged));
            summary.verdicts.push(Verdict::holds(
                "fixpoint-monotone",
                res.residuals.windows(2).all(|w| w[1] <= w[0]),
            ));
            tables.push(Table {
                file: "fixpoint.csv",
                header: vec!["iteration", "residual", "contraction", "inner_iterations"],
                rows: res
                    .residuals
                    .iter()
                    .enumerate()
                    .map(|(k, r)| {
                        let c = if k == 0 {
                            String::new()
                        } else {
                            num(res.contraction[k - 1])
                        };
                        vec![k.to_string(), num(*r), c, res.inner_iterations[k].to_string()]
                    })
                    .collect(),
            });
            (res.hum, res.nonlinear)
        }
        _ => {
            let p = initial_guess(&setup, m0, f0, cfg.fixpoint.initial)?;
            let res = setup.synthesize(&p, m0, f0, &cfg.hum)?;
            let traj = res.trajectory.clone();
            (res, traj)
        }
    };
    summary.control = Some(control_summary(&hum, g, m0, f0));
    summary.verdicts.push(Verdict::holds("krylov-converged", hum.converged));
    let (om, of) = hum.relative_optimality();
    summary.verdicts.push(Verdict::at_most(
        "relative-optimality",
        om.max(of),
        cfg.thresholds.optimality,
    ));
    summary.verdicts.extend(target_verdicts(cfg, g, &state, m0, f0));
    match cfg.windows.variant {
        Variant::MaleOnly => {
            let rho = cfg.windows.rho;
            let young_free = (0..=g.na)
                .filter(|&i| g.age(i) <= rho)
                .all(|i| hum.final_n.row(i).iter().all(|&v| v == 0.0));
            summary
                .verdicts
                .push(Verdict::holds("young-males-unconstrained", young_free));
        }
        Variant::FemaleOnly => {
            let r = aftermath(cfg, g, &state, m0, f0)?;
            summary.aftermath_ratio = Some(r);
            summary
                .verdicts
                .push(Verdict::at_most("aftermath-ratio", r, cfg.thresholds.aftermath_ratio));
        }
        Variant::BothSexes => {}
    }

    tables.push(Table {
        file: "krylov.csv",
        header: vec!["iteration", "residual", "euclidean_residual"],
        rows: hum
            .residuals
            .iter()
            .zip(&hum.euclidean_residuals)
            .enumerate()
            .map(|(k, (r, e))| vec![k.to_string(), num(*r), num(*e)])
            .collect(),
    });
    let mut rows = Vec::new();
    for (sex, field) in [("m", state.final_m()), ("f", state.final_f())] {
        for i in 0..field.rows() {
            for (j, v) in field.row(i).iter().enumerate() {
                rows.push(vec![sex.to_string(), num(g.age(i)), num(g.x(j)), num(*v)]);
            }
        }
    }
    tables.push(Table {
        file: "final_state.csv",
        header: vec!["sex", "age", "x", "value"],
        rows,
    });
    let mut rows = Vec::new();
    for k in 0..state.births.nt() {
        for (j, (b, p)) in state.births.at(k).iter().zip(state.fertility.at(k)).enumerate() {
            rows.push(vec![num(g.time(k)), num(g.x(j)), num(*b), num(*p)]);
        }
    }
    tables.push(Table {
        file: "traces.csv",
        header: vec!["time", "x", "births", "fertility"],
        rows,
    });
    Ok(tables)
}

fn probe_rows(report: &ProbeReport) -> Vec<Vec<String>> {
    report
        .ratios
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let ratio = match r.ratio {
                Ratio::Finite(v) => num(v),
                Ratio::Infinite => "inf".into(),
                Ratio::Degenerate => "degenerate".into(),
            };
            vec![
                k.to_string(),
                r.label.clone(),
                num(r.initial_energy),
                num(r.observed_energy),
                ratio,
            ]
        })
        .collect()
}

fn run_probes(cfg: &ScenarioConfig, g: &Grid, summary: &mut Summary) -> Result<Vec<Table>, HarnessError> {
    let observer = Observer::new(Scheme::new(&cfg.rates, g)?, &cfg.windows);
    let p = SpaceTime::constant(g, cfg.probes.frozen_p);
    let set = ProbeSet::standard(g, cfg.probes.random, cfg.seed);
    let report = observer.scan(&p, &set)?;
    let admissible = summary.validation.get("time").map_or(true, |c| c.passed);
    let mut out = ProbeSummary {
        frozen_p: cfg.probes.frozen_p,
        probes: set.len(),
        max_ratio: finite(report.max_ratio),
        argmax: report.argmax.clone(),
        infinite: report.infinite,
        degenerate: report.degenerate,
        doubled_max_ratio: None,
        witness: None,
        blowup: None,
        support: None,
    };
    let v = &mut summary.verdicts;
    if admissible {
        v.push(Verdict::holds("probes-all-observed", report.infinite == 0));
        v.push(Verdict::holds(
            "constant-finite",
            report.max_ratio.is_finite() && report.max_ratio > 0.0,
        ));
        let doubled = observer.scan(&p, &ProbeSet::standard(g, 2 * cfg.probes.random, cfg.seed + 1))?;
        out.doubled_max_ratio = finite(doubled.max_ratio);
        v.push(Verdict::at_most(
            "constant-stability",
            (doubled.max_ratio / report.max_ratio - 1.0).abs(),
            cfg.thresholds.probe_stability,
        ));
    } else if let Ok(w) = ProbeSet::witness(g, &cfg.windows) {
        let r = observer.observability_ratio(&p, &w)?;
        v.push(Verdict::holds(
            "witness-unobserved",
            r.observed_energy == 0.0 && r.initial_energy > 0.0,
        ));
        out.witness = Some(r);
    }

    let mut tables = vec![Table {
        file: "probes.csv",
        header: vec!["index", "label", "initial_energy", "observed_energy", "ratio"],
        rows: probe_rows(&report),
    }];
    if !cfg.probes.etas.is_empty() {
        let scan = observer.blowup_scan(&p, &set, &cfg.probes.etas)?;
        v.push(Verdict::holds("trace-constant-monotone", scan.monotone));
        v.push(Verdict::at_least("trace-constant-slope", scan.slope, 0.0));
        tables.push(Table {
            file: "blowup.csv",
            header: vec!["eta", "constant"],
            rows: scan
                .etas
                .iter()
                .zip(&scan.constants)
                .map(|(e, c)| vec![num(*e), num(*c)])
                .collect(),
        });
        out.blowup = Some(scan);
    }

    let mut support: Option<SupportSummary> = None;
    for probe in &set.probes {
        let rep = match observer.support_check(&p, probe, None) {
            Ok(r) => r,
            Err(twosex::Error::Geometry(_)) => break,
            Err(e) => return Err(e.into()),
        };
        let s = support.get_or_insert(SupportSummary {
            probes: 0,
            a0: rep.a0,
            max_n_residual: 0.0,
            max_l_discrepancy: None,
        });
        s.probes += 1;
        s.max_n_residual = s.max_n_residual.max(rep.n_residual);
        if let Some(l) = rep.l_reconstruction {
            let rel = relative(l.discrepancy, l.solver_norm);
            s.max_l_discrepancy = Some(s.max_l_discrepancy.map_or(rel, |d| d.max(rel)));
        }
    }
    if let Some(s) = &support {
        v.push(Verdict::holds("support-rows-zero", s.max_n_residual == 0.0));
    }
    out.support = support;
    summary.probes = Some(out);
    Ok(tables)
}

fn run_study(cfg: &ScenarioConfig, g: &Grid, summary: &mut Summary) -> Result<Vec<Table>, HarnessError> {
    let levels = study(&cfg.study.case, g, cfg.study.levels, cfg.study.mode)?;
    if levels.iter().all(|l| l.error == 0.0) {
        summary.verdicts.push(Verdict::holds("exact-zero-solution", true));
    } else {
        let limit = match cfg.study.mode {
            Refinement::Spatial => cfg.thresholds.spatial_order,
            Refinement::Temporal | Refinement::Joint => cfg.thresholds.temporal_order,
        };
        if let Some(worst) = levels.iter().filter_map(|l| l.order).reduce(f64::min) {
            summary.verdicts.push(Verdict::at_least("observed-order", worst, limit));
        }
    }
    let table = Table {
        file: "study.csv",
        header: vec!["nx", "na", "dx", "dt", "error", "order"],
        rows: levels
            .iter()
            .map(|l| {
                vec![
                    l.nx.to_string(),
                    l.na.to_string(),
                    num(l.dx),
                    num(l.dt),
                    num(l.error),
                    l.order.map(num).unwrap_or_default(),
                ]
            })
            .collect(),
    };
    summary.study = levels;
    Ok(vec![table])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdicts_reject_nan() {
        assert!(!Verdict::at_most("x", f64::NAN, 1.0).passed);
        assert!(!Verdict::at_least("x", f64::NAN, 1.0).passed);
        assert_eq!(Verdict::at_most("x", f64::INFINITY, 1.0).value, None);
    }

    #[test]
    fn zero_over_zero_is_zero() {
        assert_eq!(relative(0.0, 0.0), 0.0);
        assert_eq!(relative(1.0, 2.0), 0.5);
    }
}
