//! Demographic rates.
//!
//! Mortality enters only through survival functions. A rate of the form
//! `mu(a) = mu0 + c / (A - a)` integrates to `+inf` on `[0, A)`, so pointwise
//! evaluation near the maximal age is useless; the survival function
//! `pi(a) = exp(-mu0 a) ((A - a) / A)^c` is finite everywhere and all the
//! solvers consume ratios `pi(a + delta) / pi(a)` of it.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sex {
    Male,
    Female,
}

/// Survival law `pi(a) = exp(-mu0 a) ((A - a) / A)^c`.
///
/// `c > 0` gives `pi(A) = 0` (finite life span); `c = 0` is pure exponential
/// decay and never reaches zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Survival {
    pub mu0: f64,
    pub c: f64,
}

impl Survival {
    pub const fn new(mu0: f64, c: f64) -> Self {
        Self { mu0, c }
    }

    /// No mortality at all: `pi == 1`.
    pub const fn immortal() -> Self {
        Self { mu0: 0.0, c: 0.0 }
    }

    pub fn survival(&self, age: f64, max_age: f64) -> f64 {
        let remaining = ((max_age - age) / max_age).max(0.0);
        (-self.mu0 * age).exp() * remaining.powf(self.c)
    }

    /// Pointwise mortality rate; `+inf` at the maximal age when `c > 0`.
    pub fn mortality(&self, age: f64, max_age: f64) -> f64 {
        if self.c == 0.0 {
            self.mu0
        } else if age >= max_age {
            f64::INFINITY
        } else {
            self.mu0 + self.c / (max_age - age)
        }
    }

    /// `pi(age + delta) / pi(age)` from the closed form.
    pub fn ratio(&self, age: f64, delta: f64, max_age: f64) -> Result<f64> {
        let tol = 1e-12 * max_age;
        if !(age >= -tol && delta >= 0.0 && age + delta <= max_age + tol) {
            return Err(Error::AgeOutOfRange { age, delta, max_age });
        }
        if delta == 0.0 {
            return Ok(1.0);
        }
        let decay = (-self.mu0 * delta).exp();
        if self.c == 0.0 {
            return Ok(decay);
        }
        let remaining = max_age - age;
        let after = (remaining - delta).max(0.0);
        if after <= tol {
            return Ok(0.0);
        }
        Ok(decay * (after / remaining).powf(self.c))
    }
}

/// Dependence of the birth rate on the male fertility aggregate `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum Saturation {
    /// `|p| / (1 + |p| / scale)`.
    Rational { scale: f64 },
    /// `min(|p|, scale)`: constant once `|p| >= scale`.
    Clipped { scale: f64 },
    /// `level`, independent of `p`. Breaks `beta(a, 0) = 0`.
    Constant { level: f64 },
    /// `|p|`. Unbounded.
    Linear,
}

impl Saturation {
    pub fn response(&self, p: f64) -> f64 {
        let p = p.abs();
        match *self {
            Saturation::Rational { scale } => p / (1.0 + p / scale),
            Saturation::Clipped { scale } => p.min(scale),
            Saturation::Constant { level } => level,
            Saturation::Linear => p,
        }
    }

    /// Lipschitz constant of `response` in `p`.
    pub fn lipschitz(&self) -> f64 {
        match self {
            Saturation::Constant { .. } => 0.0,
            _ => 1.0,
        }
    }

    /// Supremum of `response` over all `p`.
    pub fn supremum(&self) -> f64 {
        match *self {
            Saturation::Rational { scale } | Saturation::Clipped { scale } => scale,
            Saturation::Constant { level } => level,
            Saturation::Linear => f64::INFINITY,
        }
    }
}

/// Birth rate `beta(a, p) = beta0(a) * response(p)`, where `beta0` is a
/// `sin^2` bump supported in `(onset, upper)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BirthRate {
    /// Support threshold `b`: no births from females younger than this.
    pub onset: f64,
    pub upper: f64,
    pub peak: f64,
    pub saturation: Saturation,
}

impl BirthRate {
    pub fn profile(&self, age: f64) -> f64 {
        if age <= self.onset || age >= self.upper {
            return 0.0;
        }
        let s = (PI * (age - self.onset) / (self.upper - self.onset)).sin();
        self.peak * s * s
    }

    pub fn rate(&self, age: f64, p: f64) -> f64 {
        self.profile(age) * self.saturation.response(p)
    }

    pub fn max_rate(&self) -> f64 {
        self.peak.abs() * self.saturation.supremum()
    }

    pub fn lipschitz(&self) -> f64 {
        self.peak.abs() * self.saturation.lipschitz()
    }
}

/// Male fertility `lambda(a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Fertility {
    /// `peak * sin^2(pi a / A)`; vanishes with its derivative at both ends.
    SineSquared { peak: f64 },
    /// `slope * a`.
    Linear { slope: f64 },
}

impl Fertility {
    pub fn value(&self, age: f64, max_age: f64) -> f64 {
        match *self {
            Fertility::SineSquared { peak } => {
                let s = (PI * age / max_age).sin();
                peak * s * s
            }
            Fertility::Linear { slope } => slope * age,
        }
    }

    pub fn derivative(&self, age: f64, max_age: f64) -> f64 {
        match *self {
            Fertility::SineSquared { peak } => peak * (PI / max_age) * (2.0 * PI * age / max_age).sin(),
            Fertility::Linear { slope } => slope,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub max_age: f64,
    /// Fraction of newborns that are female.
    pub sex_ratio: f64,
    pub diffusivity_m: f64,
    pub diffusivity_f: f64,
    pub survival_m: Survival,
    pub survival_f: Survival,
    pub birth: BirthRate,
    pub male_fertility: Fertility,
    /// Declared Lipschitz constant of `beta` in `p`.
    pub lipschitz: f64,
}

impl RateTable {
    pub fn survival(&self, sex: Sex) -> &Survival {
        match sex {
            Sex::Male => &self.survival_m,
            Sex::Female => &self.survival_f,
        }
    }

    pub fn diffusivity(&self, sex: Sex) -> f64 {
        match sex {
            Sex::Male => self.diffusivity_m,
            Sex::Female => self.diffusivity_f,
        }
    }

    pub fn survival_ratio(&self, sex: Sex, age: f64, delta: f64) -> Result<f64> {
        self.survival(sex).ratio(age, delta, self.max_age)
    }

    /// Share of newborns of the given sex.
    pub fn birth_share(&self, sex: Sex) -> f64 {
        match sex {
            Sex::Male => 1.0 - self.sex_ratio,
            Sex::Female => self.sex_ratio,
        }
    }

    /// `lambda(a) * mu_m(a)`, with the `0 * inf` limit at `a = A` taken as 0
    /// whenever `lambda` vanishes there.
    pub fn fertility_mortality(&self, age: f64) -> f64 {
        let lambda = self.male_fertility.value(age, self.max_age);
        if lambda == 0.0 {
            return 0.0;
        }
        lambda * self.survival_m.mortality(age, self.max_age)
    }

    /// A parameter set satisfying every structural hypothesis, used by the
    /// bundled scenarios and throughout the tests.
    pub fn reference() -> Self {
        Self {
            max_age: 1.0,
            sex_ratio: 0.5,
            diffusivity_m: 0.05,
            diffusivity_f: 0.05,
            survival_m: Survival::new(0.2, 1.0),
            survival_f: Survival::new(0.1, 1.0),
            birth: BirthRate {
                onset: 0.5,
                upper: 1.0,
                peak: 2.0,
                saturation: Saturation::Rational { scale: 1.0 },
            },
            male_fertility: Fertility::SineSquared { peak: 1.0 },
            lipschitz: 2.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn survival_ratio_closed_form() {
        let law = Survival::new(0.0, 1.0);
        assert!((law.ratio(0.5, 0.25, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(law.ratio(0.25, 0.75, 1.0).unwrap(), 0.0);
        let flat = Survival::immortal();
        assert_eq!(flat.ratio(0.3, 0.5, 1.0).unwrap(), 1.0);
        assert_eq!(flat.ratio(0.0, 1.0, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn survival_ratio_rejects_out_of_range() {
        let law = Survival::new(0.1, 1.0);
        assert!(law.ratio(-0.1, 0.1, 1.0).is_err());
        assert!(law.ratio(0.8, 0.3, 1.0).is_err());
        assert!(law.ratio(0.5, -0.1, 1.0).is_err());
    }

    #[test]
    fn survival_ratio_matches_survival_quotient() {
        let law = Survival::new(0.3, 1.7);
        let (a, d) = (0.2, 0.35);
        let expect = law.survival(a + d, 1.0) / law.survival(a, 1.0);
        assert!((law.ratio(a, d, 1.0).unwrap() - expect).abs() < 1e-14);
        assert_eq!(law.survival(0.0, 1.0), 1.0);
        assert_eq!(law.survival(1.0, 1.0), 0.0);
    }

    #[test]
    fn birth_profile_support() {
        let rates = RateTable::reference();
        assert_eq!(rates.birth.rate(0.4, 3.0), 0.0);
        assert_eq!(rates.birth.rate(0.75, 0.0), 0.0);
        assert!(rates.birth.rate(0.75, 1.0) > 0.0);
        assert!(rates.birth.rate(0.75, 1e9) <= rates.birth.max_rate());
    }

    #[test]
    fn clipped_law_is_flat_past_scale() {
        let law = Saturation::Clipped { scale: 0.5 };
        assert_eq!(law.response(0.7), law.response(3.0));
        assert_eq!(law.response(-0.2), 0.2);
    }

    #[test]
    fn fertility_derivative_matches_difference_quotient() {
        let lambda = Fertility::SineSquared { peak: 1.3 };
        let h = 1e-6;
        for &a in &[0.1, 0.37, 0.8] {
            let fd = (lambda.value(a + h, 1.0) - lambda.value(a - h, 1.0)) / (2.0 * h);
            assert!((fd - lambda.derivative(a, 1.0)).abs() < 1e-8);
        }
    }
}
