//! Structural hypotheses on the rates and geometric/time conditions on the
//! control windows. Violations are collected, never thrown.

use serde::{Deserialize, Serialize};

use crate::grid::{ControlWindows, Interval, Variant};
use crate::rates::{Fertility, RateTable, Saturation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    fn push(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.checks {
            let tag = if c.passed { "ok  " } else { "FAIL" };
            writeln!(f, "{tag} {:<18} {}", c.name, c.detail)?;
        }
        Ok(())
    }
}

/// Minimal control horizon for the chosen variant.
pub fn critical_time(rates: &RateTable, windows: &ControlWindows) -> f64 {
    let a = rates.max_age;
    match windows.variant {
        Variant::BothSexes => windows.age_m.lo + a - windows.age_m.hi,
        Variant::MaleOnly => a - windows.age_m.hi,
        Variant::FemaleOnly => windows.age_f.lo + a - windows.age_f.hi,
    }
}

pub fn validate(rates: &RateTable, windows: &ControlWindows, horizon: f64) -> ValidationReport {
    let mut r = ValidationReport::default();
    let a = rates.max_age;

    r.push("max-age", a > 0.0 && a.is_finite(), format!("A = {a}"));
    r.push(
        "sex-ratio",
        rates.sex_ratio > 0.0 && rates.sex_ratio < 1.0,
        format!("gamma = {} must lie in (0,1)", rates.sex_ratio),
    );
    r.push(
        "diffusivity",
        rates.diffusivity_m > 0.0 && rates.diffusivity_f > 0.0,
        format!("K_m = {}, K_f = {}", rates.diffusivity_m, rates.diffusivity_f),
    );

    // Survival: pi(0) = 1 by construction; nonincreasing iff mu0 >= 0 and c >= 0;
    // pi(A) = 0 iff c > 0.
    let h1 = [("male", rates.survival_m), ("female", rates.survival_f)]
        .iter()
        .filter(|(_, s)| !(s.mu0 >= 0.0 && s.c > 0.0))
        .map(|(n, s)| format!("{n} survival (mu0 {}, c {}) does not vanish at A", s.mu0, s.c))
        .collect::<Vec<_>>();
    r.push(
        "survival",
        h1.is_empty(),
        detail_or(h1, "pi(0) = 1, nonincreasing, pi(A) = 0"),
    );

    let sat = rates.birth.saturation;
    let zero_birth = sat.response(0.0) == 0.0;
    r.push(
        "no-partner-no-birth",
        zero_birth || rates.birth.peak == 0.0,
        if zero_birth {
            "beta(a, 0) = 0".to_string()
        } else {
            format!("beta(a, 0) = {} * beta0(a) is not identically zero", sat.response(0.0))
        },
    );

    let b = rates.birth.onset;
    let support_ok = b > 0.0 && b < rates.birth.upper && rates.birth.upper <= a;
    r.push(
        "birth-support",
        support_ok,
        format!("beta0 supported in ({b}, {}) within (0, {a})", rates.birth.upper),
    );
    let bounded = rates.birth.peak >= 0.0 && rates.birth.max_rate().is_finite();
    r.push(
        "birth-bounds",
        bounded,
        if matches!(sat, Saturation::Linear) {
            "linear response in p is unbounded".to_string()
        } else {
            format!("0 <= beta <= {}", rates.birth.max_rate())
        },
    );
    r.push(
        "birth-lipschitz",
        rates.birth.lipschitz() <= rates.lipschitz * (1.0 + 1e-12),
        format!(
            "family constant {} vs declared L = {}",
            rates.birth.lipschitz(),
            rates.lipschitz
        ),
    );

    let (lam0, lam_a) = (rates.male_fertility.value(0.0, a), rates.male_fertility.value(a, a));
    let nonneg = match rates.male_fertility {
        Fertility::SineSquared { peak } => peak >= 0.0,
        Fertility::Linear { slope } => slope >= 0.0,
    };
    r.push("fertility", nonneg, "lambda >= 0 and C^1 on [0, A]");
    let ends = lam0 == 0.0 && lam_a.abs() <= 1e-12;
    r.push(
        "lambda-endpoints",
        ends,
        format!("lambda(0) = {lam0}, lambda(A) = {lam_a}"),
    );
    // Near A, mu_m ~ c / (A - a); the product is integrable iff lambda(A) = 0
    // (lambda is C^1) or there is no singular part.
    let h5 = rates.survival_m.c == 0.0 || lam_a.abs() <= 1e-12;
    r.push(
        "fertility-mortality",
        h5,
        if h5 {
            "lambda mu_m integrable".to_string()
        } else {
            format!("lambda(A) = {lam_a} against a c/(A-a) singularity")
        },
    );

    check_windows(&mut r, rates, windows, horizon);
    r
}

fn detail_or(items: Vec<String>, ok: &str) -> String {
    if items.is_empty() {
        ok.to_string()
    } else {
        items.join("; ")
    }
}

fn strictly_inside(w: &Interval, outer: &Interval) -> bool {
    w.is_nonempty() && w.lo >= outer.lo && w.hi <= outer.hi && !(w.lo == outer.lo && w.hi == outer.hi)
}

fn check_windows(r: &mut ValidationReport, rates: &RateTable, w: &ControlWindows, horizon: f64) {
    let a = rates.max_age;
    let space = Interval::new(0.0, 1.0);
    let ages = Interval::new(0.0, a);
    let b = rates.birth.onset;

    let mut bad = Vec::new();
    let male_used = w.variant != Variant::FemaleOnly;
    let female_used = w.variant != Variant::MaleOnly;
    if male_used && !strictly_inside(&w.omega, &space) {
        bad.push(format!("omega {:?} not a proper subinterval of (0,1)", w.omega));
    }
    if male_used && !strictly_inside(&w.age_m, &ages) {
        bad.push(format!("(a1, a2) = {:?} not a proper subinterval of (0,A)", w.age_m));
    }
    if female_used && !strictly_inside(&w.omega_prime, &space) {
        bad.push(format!("omega' {:?} not a proper subinterval of (0,1)", w.omega_prime));
    }
    if (female_used || w.variant == Variant::BothSexes) && !strictly_inside(&w.age_f, &ages) {
        bad.push(format!("(b1, b2) = {:?} not a proper subinterval of (0,A)", w.age_f));
    }
    r.push(
        "windows",
        bad.is_empty(),
        detail_or(bad, "all windows nonempty and proper"),
    );

    match w.variant {
        Variant::BothSexes => {
            r.push(
                "geometry",
                w.age_m.lo < b && w.age_m.within(&w.age_f),
                format!(
                    "need a1 = {} < b = {b} and (a1,a2) inside (b1,b2) = ({}, {})",
                    w.age_m.lo, w.age_f.lo, w.age_f.hi
                ),
            );
        }
        Variant::MaleOnly => {
            r.push(
                "geometry",
                w.rho > 0.0 && w.rho < a,
                format!("exclusion age rho = {} must lie in (0, A)", w.rho),
            );
        }
        Variant::FemaleOnly => {
            r.push(
                "geometry",
                w.age_f.lo < b,
                format!("need b1 = {} < b = {b}", w.age_f.lo),
            );
        }
    }

    // Window endpoints are decimal inputs; a horizon within rounding of the
    // threshold counts as equal to it, and equality fails.
    let tc = critical_time(rates, w);
    r.push(
        "time",
        horizon > tc + 1e-9 * a,
        format!("T = {horizon} must exceed {tc} strictly"),
    );
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::{Saturation, Survival};

    #[test]
    fn reference_geometry_passes_at_half() {
        let r = validate(&RateTable::reference(), &ControlWindows::reference(), 0.5);
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn time_condition_is_strict() {
        let r = validate(&RateTable::reference(), &ControlWindows::reference(), 0.4);
        assert!(!r.passed());
        let names: Vec<_> = r.failures().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["time"]);
    }

    #[test]
    fn constant_birth_rate_fails_h2() {
        let mut rates = RateTable::reference();
        rates.birth.saturation = Saturation::Constant { level: 1.0 };
        let r = validate(&rates, &ControlWindows::reference(), 0.5);
        assert!(!r.get("no-partner-no-birth").unwrap().passed);
        assert!(r.get("survival").unwrap().passed);
    }

    type Mutation = Box<dyn Fn(&mut RateTable)>;

    #[test]
    fn each_single_violation_is_isolated() {
        let w = ControlWindows::reference();
        let cases: Vec<(&str, Mutation)> = vec![
            ("survival", Box::new(|r| r.survival_f = Survival::new(0.1, 0.0))),
            ("birth-support", Box::new(|r| r.birth.upper = 1.5)),
            ("birth-bounds", Box::new(|r| r.birth.saturation = Saturation::Linear)),
            ("birth-lipschitz", Box::new(|r| r.lipschitz = 1.0)),
            (
                "fertility",
                Box::new(|r| r.male_fertility = Fertility::SineSquared { peak: -1.0 }),
            ),
            ("sex-ratio", Box::new(|r| r.sex_ratio = 1.0)),
            ("diffusivity", Box::new(|r| r.diffusivity_m = 0.0)),
        ];
        for (name, mutate) in cases {
            let mut rates = RateTable::reference();
            mutate(&mut rates);
            let r = validate(&rates, &w, 0.5);
            let fails: Vec<_> = r.failures().map(|c| c.name.clone()).collect();
            assert_eq!(fails, [name.to_string()], "{r}");
        }
    }

    #[test]
    fn linear_fertility_breaks_endpoint_and_h5() {
        let mut rates = RateTable::reference();
        rates.male_fertility = Fertility::Linear { slope: 1.0 };
        let r = validate(&rates, &ControlWindows::reference(), 0.5);
        let fails: Vec<_> = r.failures().map(|c| c.name.as_str()).collect();
        assert_eq!(fails, ["lambda-endpoints", "fertility-mortality"]);
    }

    #[test]
    fn geometry_violations() {
        let rates = RateTable::reference();
        let mut w = ControlWindows::reference();
        w.age_m = Interval::new(0.6, 0.8);
        let r = validate(&rates, &w, 0.9);
        assert!(!r.get("geometry").unwrap().passed);

        let mut w = ControlWindows::reference();
        w.variant = Variant::MaleOnly;
        w.rho = 0.1;
        assert!(validate(&rates, &w, 0.3).passed());
        assert!(!validate(&rates, &w, 0.2).passed());
        w.rho = 0.0;
        assert!(!validate(&rates, &w, 0.3).get("geometry").unwrap().passed);

        let mut w = ControlWindows::reference();
        w.variant = Variant::FemaleOnly;
        assert!(validate(&rates, &w, 0.5).passed());
        assert!(!validate(&rates, &w, 0.2).passed());
    }
}
