//! Empirical observability: adjoint final data are pushed backward and the
//! energy they leave at `t = 0` is compared with what the control windows
//! see along the way.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adjoint::{solve_adjoint, AdjointSolution};
use crate::error::{Error, Result};
use crate::field::{Control, Field, SpaceTime};
use crate::forward::ForwardSolution;
use crate::forward::Scheme;
use crate::grid::{ControlWindows, Grid, Mask};
use crate::ops::heat_semigroup;
use crate::rates::Sex;

/// `sin^2` bump on the open interval `(lo, hi)`.
pub fn bump(v: f64, lo: f64, hi: f64) -> f64 {
    if v <= lo || v >= hi {
        return 0.0;
    }
    let s = (PI * (v - lo) / (hi - lo)).sin();
    s * s
}

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub label: String,
    pub n: Field,
    pub l: Field,
}

impl Probe {
    /// Scales to unit combined norm. Zero probes are left as they are.
    pub fn normalized(mut self, grid: &Grid) -> Self {
        let norm = (self.n.inner(&self.n, grid) + self.l.inner(&self.l, grid)).sqrt();
        if norm > 0.0 {
            self.n.scale(1.0 / norm);
            self.l.scale(1.0 / norm);
        }
        self
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            label: self.label.clone(),
            n: self.n.scaled(s),
            l: self.l.scaled(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSet {
    pub seed: u64,
    pub probes: Vec<Probe>,
}

impl ProbeSet {
    /// Deterministic families (spatial eigenmodes times age bumps, and data
    /// crowded against the domain edges outside the windows) plus
    /// `random` seeded smooth fields.
    pub fn standard(grid: &Grid, random: usize, seed: u64) -> Self {
        let a_max = grid.max_age;
        let mut probes = Vec::new();
        let zero = Field::zeros(grid);
        // Supports narrower than the mesh can miss every node; such probes are dropped.
        let mut push = |label: String, n: Field, l: Field| {
            if !(n.is_zero() && l.is_zero()) {
                probes.push(Probe { label, n, l }.normalized(grid));
            }
        };
        for k in [1usize, 2, 3, 5] {
            for c in [0.15, 0.35, 0.55, 0.75, 0.9] {
                let (lo, hi) = ((c - 0.1) * a_max, (c + 0.1) * a_max);
                let f = Field::from_fn(grid, |x, a| (k as f64 * PI * x).sin() * bump(a, lo, hi));
                push(format!("mode{k}-age{c}-n"), f.clone(), zero.clone());
                push(format!("mode{k}-age{c}-l"), zero.clone(), f);
            }
        }
        for (xl, xh) in [(0.0, 0.15), (0.85, 1.0)] {
            for (al, ah) in [(0.45, 0.6), (0.8, 1.0), (0.9, 1.0)] {
                let f = Field::from_fn(grid, |x, a| bump(x, xl, xh) * bump(a, al * a_max, ah * a_max));
                push(format!("edge-x{xl}-age{al}-n"), f.clone(), zero.clone());
                push(format!("edge-x{xl}-age{al}-l"), zero.clone(), f);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for r in 0..random {
            let coef = |rng: &mut ChaCha8Rng| {
                let mut c = [[0.0; 4]; 4];
                for (k, row) in c.iter_mut().enumerate() {
                    for (q, v) in row.iter_mut().enumerate() {
                        *v = rng.gen_range(-1.0..1.0) / ((k + 1) * (q + 1)) as f64;
                    }
                }
                c
            };
            let (cn, cl) = (coef(&mut rng), coef(&mut rng));
            let eval = |c: &[[f64; 4]; 4], x: f64, a: f64| {
                let mut s = 0.0;
                for (k, row) in c.iter().enumerate() {
                    for (q, v) in row.iter().enumerate() {
                        s += v * ((k + 1) as f64 * PI * x).sin() * ((q + 1) as f64 * PI * a / a_max).sin();
                    }
                }
                s
            };
            push(
                format!("random-{r}"),
                Field::from_fn(grid, |x, a| eval(&cn, x, a)),
                Field::from_fn(grid, |x, a| eval(&cl, x, a)),
            );
        }
        Self { seed, probes }
    }

    /// Male datum supported in ages `(a2 + T, A)`: for `T < A - a2` its
    /// characteristics never enter the male observation window.
    pub fn witness(grid: &Grid, windows: &ControlWindows) -> Result<Probe> {
        let lo = windows.age_m.hi + grid.horizon;
        if lo >= grid.max_age {
            return Err(Error::Geometry(format!(
                "no witness: a2 + T = {lo} is not below A = {}",
                grid.max_age
            )));
        }
        let n = Field::from_fn(grid, |x, a| (PI * x).sin() * bump(a, lo, grid.max_age));
        Ok(Probe {
            label: "witness".into(),
            n,
            l: Field::zeros(grid),
        }
        .normalized(grid))
    }

    pub fn len(&self) -> usize {
        self.probes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probes.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum Ratio {
    Finite(f64),
    /// Nonzero numerator over an exactly zero denominator.
    Infinite,
    /// `0 / 0`.
    Degenerate,
}

impl Ratio {
    pub fn of(num: f64, den: f64) -> Self {
        if den == 0.0 {
            if num == 0.0 {
                Ratio::Degenerate
            } else {
                Ratio::Infinite
            }
        } else {
            Ratio::Finite(num / den)
        }
    }

    /// Numeric value; `0` for degenerate, `+inf` for infinite.
    pub fn value(&self) -> f64 {
        match *self {
            Ratio::Finite(v) => v,
            Ratio::Infinite => f64::INFINITY,
            Ratio::Degenerate => 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        !matches!(self, Ratio::Infinite)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRatio {
    pub label: String,
    /// `|n(0)|^2 + |l(0)|^2`.
    pub initial_energy: f64,
    /// `int_Xi n^2 + int_Xi' l^2`.
    pub observed_energy: f64,
    pub ratio: Ratio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub horizon: f64,
    pub seed: u64,
    pub ratios: Vec<ProbeRatio>,
    /// Largest ratio over the probes (the empirical observability constant).
    pub max_ratio: f64,
    pub argmax: Option<String>,
    pub infinite: usize,
    pub degenerate: usize,
}

/// Adjoint solver plus the observation masks of a window geometry.
#[derive(Debug, Clone)]
pub struct Observer {
    pub scheme: Scheme,
    pub windows: ControlWindows,
    pub obs_m: Mask,
    pub obs_f: Mask,
}

fn masked_energy(c: &Control, mask: &Mask, grid: &Grid) -> f64 {
    let s: f64 = c.slices[1..]
        .iter()
        .map(|f| {
            f.data()
                .iter()
                .zip(mask.cells())
                .filter(|(_, &m)| m)
                .map(|(v, _)| v * v)
                .sum::<f64>()
        })
        .sum();
    grid.dx() * grid.da() * grid.dt() * s
}

impl Observer {
    pub fn new(scheme: Scheme, windows: &ControlWindows) -> Self {
        let g = scheme.grid;
        Self {
            obs_m: Mask::from_region(&g, windows.male_region()),
            obs_f: Mask::from_region(&g, windows.female_region()),
            windows: *windows,
            scheme,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.scheme.grid
    }

    pub fn solve(&self, p: &SpaceTime, probe: &Probe) -> Result<AdjointSolution> {
        solve_adjoint(&self.scheme, p, Some(&probe.n), Some(&probe.l))
    }

    pub fn observability_ratio(&self, p: &SpaceTime, probe: &Probe) -> Result<ProbeRatio> {
        let g = self.grid();
        let sol = self.solve(p, probe)?;
        let n0 = &sol.n.slices[0];
        let l0 = &sol.l.slices[0];
        let initial_energy = n0.inner(n0, g) + l0.inner(l0, g);
        let observed_energy =
            masked_energy(&sol.n_observed, &self.obs_m, g) + masked_energy(&sol.l_observed, &self.obs_f, g);
        Ok(ProbeRatio {
            label: probe.label.clone(),
            initial_energy,
            observed_energy,
            ratio: Ratio::of(initial_energy, observed_energy),
        })
    }

    /// Ratios for every probe, evaluated in parallel and reported in probe
    /// order.
    pub fn scan(&self, p: &SpaceTime, probes: &ProbeSet) -> Result<ProbeReport> {
        let ratios = probes
            .probes
            .par_iter()
            .map(|pr| self.observability_ratio(p, pr))
            .collect::<Result<Vec<_>>>()?;
        let mut max_ratio = 0.0;
        let mut argmax = None;
        for r in &ratios {
            let v = r.ratio.value();
            if v > max_ratio {
                max_ratio = v;
                argmax = Some(r.label.clone());
            }
        }
        Ok(ProbeReport {
            horizon: self.grid().horizon,
            seed: probes.seed,
            infinite: ratios.iter().filter(|r| r.ratio == Ratio::Infinite).count(),
            degenerate: ratios.iter().filter(|r| r.ratio == Ratio::Degenerate).count(),
            ratios,
            max_ratio,
            argmax,
        })
    }

    /// `int_0^{T - eta} int n(x, 0, t)^2 / int_Xi n^2`.
    pub fn trace_estimate(&self, p: &SpaceTime, probe: &Probe, eta: f64) -> Result<Ratio> {
        let g = self.grid();
        let a1 = self.windows.age_m.lo;
        if !(eta > a1 && eta < g.horizon) {
            return Err(Error::InvalidParameter(format!(
                "eta = {eta} must lie in (a1, T) = ({a1}, {})",
                g.horizon
            )));
        }
        let sol = self.solve(p, probe)?;
        Ok(Ratio::of(
            trace_energy(&sol.n.renewal_trace, g, g.horizon - eta),
            masked_energy(&sol.n_observed, &self.obs_m, g),
        ))
    }

    /// Largest trace ratio over a probe set.
    pub fn trace_constant(&self, p: &SpaceTime, probes: &ProbeSet, eta: f64) -> Result<f64> {
        let ratios = probes
            .probes
            .par_iter()
            .map(|pr| self.trace_estimate(p, pr, eta))
            .collect::<Result<Vec<_>>>()?;
        Ok(ratios.iter().map(Ratio::value).fold(0.0, f64::max))
    }

    /// Trace constants over a grid of `eta` values, with a least-squares fit
    /// of `log C` against `1 / (eta - a1)`.
    pub fn blowup_scan(&self, p: &SpaceTime, probes: &ProbeSet, etas: &[f64]) -> Result<BlowupScan> {
        if etas.len() < 3 {
            return Err(Error::DegenerateFit(format!(
                "{} eta points, need at least 3",
                etas.len()
            )));
        }
        let a1 = self.windows.age_m.lo;
        let mut etas = etas.to_vec();
        etas.sort_by(|a, b| b.partial_cmp(a).expect("finite eta"));
        let constants = etas
            .iter()
            .map(|&eta| self.trace_constant(p, probes, eta))
            .collect::<Result<Vec<_>>>()?;
        if constants.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::DegenerateFit(
                "trace constants must be positive and finite".into(),
            ));
        }
        let xs: Vec<f64> = etas.iter().map(|e| 1.0 / (e - a1)).collect();
        let ys: Vec<f64> = constants.iter().map(|c| c.ln()).collect();
        let (slope, intercept) = least_squares(&xs, &ys)?;
        Ok(BlowupScan {
            monotone: constants.windows(2).all(|w| w[1] >= w[0]),
            etas,
            constants,
            slope,
            intercept,
        })
    }

    /// Exact support of the male adjoint at `t = 0`: the largest `|n(x, a, 0)|`
    /// over grid ages `a > a0 = a2 - kappa`. With `kappa` absent, the largest
    /// admissible value `T - (A - a2)` is used.
    pub fn support_check(&self, p: &SpaceTime, probe: &Probe, kappa: Option<f64>) -> Result<SupportReport> {
        let g = self.grid();
        let (a1, a2) = (self.windows.age_m.lo, self.windows.age_m.hi);
        let slack = g.horizon - (g.max_age - a2);
        if slack <= 0.0 {
            return Err(Error::Geometry(format!(
                "the support property needs T > A - a2 (T = {}, A - a2 = {})",
                g.horizon,
                g.max_age - a2
            )));
        }
        let kappa = kappa.unwrap_or(slack);
        if !(kappa > 0.0 && kappa <= slack + 1e-12) {
            return Err(Error::Geometry(format!("kappa = {kappa} not in (0, {slack}]")));
        }
        let a0 = a2 - kappa;
        let sol = self.solve(p, probe)?;
        let rows: Vec<usize> = (0..=g.na).filter(|&i| g.age(i) > a0 + 1e-12).collect();
        let n_residual = rows
            .iter()
            .flat_map(|&i| sol.n.slices[0].row(i).iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()));

        let l_reconstruction = if g.horizon > a1 + g.max_age - a2 {
            let rebuilt = reconstruct_l(&self.scheme, p, &sol, &rows)?;
            let mut num = 0.0;
            let mut den = 0.0;
            for &i in &rows {
                for (r, s) in rebuilt.row(i).iter().zip(sol.l.slices[0].row(i)) {
                    num += (r - s) * (r - s);
                    den += s * s;
                }
            }
            let w = g.dx() * g.da();
            Some(LReconstruction {
                discrepancy: (w * num).sqrt(),
                solver_norm: (w * den).sqrt(),
            })
        } else {
            None
        };
        Ok(SupportReport {
            a0,
            n_residual,
            l_reconstruction,
        })
    }
}

/// `int_0^{upto} int n(x, 0, t)^2`, rectangle rule over levels `t_k <= upto`.
fn trace_energy(trace: &SpaceTime, grid: &Grid, upto: f64) -> f64 {
    let mut s = 0.0;
    for k in 0..=grid.nt {
        if grid.time(k) > upto + 1e-12 * grid.horizon {
            break;
        }
        s += trace.at(k).iter().map(|v| v * v).sum::<f64>();
    }
    grid.dx() * grid.dt() * s
}

/// Largest `|n(x, 0, t)|` over `t >= T - rho`.
pub fn trace_tail_max(sol: &AdjointSolution, grid: &Grid, rho: f64) -> f64 {
    let mut m = 0.0_f64;
    for k in 0..=grid.nt {
        if grid.time(k) >= grid.horizon - rho - 1e-12 {
            m = sol.n.renewal_trace.at(k).iter().fold(m, |m, v| m.max(v.abs()));
        }
    }
    m
}

fn least_squares(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all abscissae coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupScan {
    /// Decreasing toward `a1`.
    pub etas: Vec<f64>,
    pub constants: Vec<f64>,
    /// `C(eta)` nondecreasing as `eta` decreases.
    pub monotone: bool,
    /// Fitted `c2` in `log C = intercept + c2 / (eta - a1)`.
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LReconstruction {
    pub discrepancy: f64,
    pub solver_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportReport {
    pub a0: f64,
    pub n_residual: f64,
    pub l_reconstruction: Option<LReconstruction>,
}

/// `l(x, a, 0)` on the given rows from the trace representation
/// `int_0^{A-a} pi_f(a+s)/pi_f(a) e^{s K_f Lap} beta(a+s, p(s)) [(1-gamma) n + gamma l](x, 0, s) ds`,
/// valid where the final datum has been carried out through `a = A`.
/// Trapezoid rule in `s` on the time levels, exact heat semigroup, and the
/// solver's own age-zero traces.
fn reconstruct_l(scheme: &Scheme, p: &SpaceTime, sol: &AdjointSolution, rows: &[usize]) -> Result<Field> {
    let g = scheme.grid;
    let rates = &scheme.rates;
    let gamma = rates.sex_ratio;
    let sat = scheme.saturation();
    let mut out = Field::zeros(&g);
    for &i in rows {
        let a = g.age(i);
        let steps = (g.na - i).min(g.nt);
        let mut acc = vec![0.0; g.nx];
        for k in 0..=steps {
            let s = g.time(k);
            let beta0 = rates.birth.profile(a + s);
            if beta0 == 0.0 {
                continue;
            }
            let ratio = rates.survival_ratio(Sex::Female, a, s)?;
            if ratio == 0.0 {
                continue;
            }
            let nt = sol.n.renewal_trace.at(k);
            let lt = sol.l.renewal_trace.at(k);
            let src: Vec<f64> = (0..g.nx)
                .map(|j| beta0 * sat.response(p.at(k)[j]) * ((1.0 - gamma) * nt[j] + gamma * lt[j]))
                .collect();
            let evolved = heat_semigroup(&src, rates.diffusivity_f, s);
            let w = if k == 0 || k == steps { 0.5 } else { 1.0 } * g.dt() * ratio;
            for (o, v) in acc.iter_mut().zip(evolved) {
                *o += w * v;
            }
        }
        out.row_mut(i).copy_from_slice(&acc);
    }
    Ok(out)
}

/// Residual of the aggregated equation for `Y = int lambda m da`:
/// `Y_t - K_m Lap Y + int lambda mu_m m da = int lambda' m da + int lambda chi v da`,
/// evaluated on levels `1..=nt` with backward differences in time, and
/// returned as its `L2(Q_T)` norm.
pub fn aggregate_residual(scheme: &Scheme, sol: &ForwardSolution, control_m: Option<&Control>) -> f64 {
    let g = scheme.grid;
    let rates = &scheme.rates;
    let w = crate::ops::trapezoid_weights(g.na, g.da());
    let a_max = rates.max_age;
    let lam: Vec<f64> = (0..=g.na)
        .map(|i| w[i] * rates.male_fertility.value(g.age(i), a_max))
        .collect();
    let dlam: Vec<f64> = (0..=g.na)
        .map(|i| w[i] * rates.male_fertility.derivative(g.age(i), a_max))
        .collect();
    let lam_mu: Vec<f64> = (0..=g.na).map(|i| w[i] * rates.fertility_mortality(g.age(i))).collect();
    let integrate = |f: &Field, weights: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; g.nx];
        for (i, &wi) in weights.iter().enumerate() {
            if wi == 0.0 || !wi.is_finite() {
                continue;
            }
            for (o, v) in out.iter_mut().zip(f.row(i)) {
                *o += wi * v;
            }
        }
        out
    };
    let (dt, dx) = (g.dt(), g.dx());
    let k_m = rates.diffusivity_m;
    let mut total = 0.0;
    for k in 1..=g.nt {
        let m = &sol.male.slices[k];
        let y = integrate(m, &lam);
        let y_prev = integrate(&sol.male.slices[k - 1], &lam);
        let sink = integrate(m, &lam_mu);
        let mut rhs = integrate(m, &dlam);
        if let Some(c) = control_m {
            for (r, v) in rhs.iter_mut().zip(integrate(&c.slices[k], &lam)) {
                *r += v;
            }
        }
        for j in 0..g.nx {
            let left = if j > 0 { y[j - 1] } else { 0.0 };
            let right = if j + 1 < g.nx { y[j + 1] } else { 0.0 };
            let lap = (left - 2.0 * y[j] + right) / (dx * dx);
            let r = (y[j] - y_prev[j]) / dt - k_m * lap + sink[j] - rhs[j];
            total += r * r;
        }
    }
    (dx * dt * total).sqrt()
}
