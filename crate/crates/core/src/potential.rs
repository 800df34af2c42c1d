//! Closed-form periodic potentials `F(x, u)`.
//!
//! Every registered family is 1-periodic in each coordinate and in `u`,
//! nonnegative, and C^2 in `u`. Only x1-dependence is exercised.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `(1 + eps cos 2 pi x1) sin^2(pi u)`
    PendulumModulated,
    /// `sin^2(pi u)`
    Pendulum,
    /// `(1 + eps cos 2 pi x1) q(u - floor u)` with `q(s) = 16 s^2 (1-s)^2`,
    /// which vanishes to second order at both wells and is C^2 after
    /// periodization (`q''(0) = q''(1) = 32`).
    TwowellPeriodized,
    /// `F = 0`, the degenerate foliation case. Only useful as a control.
    Zero,
}

impl Family {
    pub fn id(&self) -> &'static str {
        match self {
            Family::PendulumModulated => "pendulum_modulated",
            Family::Pendulum => "pendulum",
            Family::TwowellPeriodized => "twowell_periodized",
            Family::Zero => "zero",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pendulum_modulated" => Ok(Family::PendulumModulated),
            "pendulum" => Ok(Family::Pendulum),
            "twowell_periodized" => Ok(Family::TwowellPeriodized),
            "zero" => Ok(Family::Zero),
            other => Err(Error::Config(format!("unknown potential family '{other}'"))),
        }
    }
}

pub const DEFAULT_EPSILON: f64 = 0.3;
pub const MAX_EPSILON: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    family: Family,
    epsilon: f64,
    /// Additive constant; shifts `c0` and leaves minimizers unchanged.
    shift: f64,
}

impl Default for Potential {
    fn default() -> Self {
        Self {
            family: Family::PendulumModulated,
            epsilon: DEFAULT_EPSILON,
            shift: 0.0,
        }
    }
}

impl Potential {
    pub fn new(family: Family, epsilon: f64) -> Result<Self> {
        let epsilon = if family == Family::Pendulum { 0.0 } else { epsilon };
        if !(0.0..=MAX_EPSILON).contains(&epsilon) {
            return Err(Error::Config(format!(
                "epsilon {epsilon} outside [0, {MAX_EPSILON}]"
            )));
        }
        Ok(Self {
            family,
            epsilon,
            shift: 0.0,
        })
    }

    pub fn pendulum() -> Self {
        Self::new(Family::Pendulum, 0.0).unwrap()
    }

    pub fn pendulum_modulated(epsilon: f64) -> Result<Self> {
        Self::new(Family::PendulumModulated, epsilon)
    }

    pub fn zero() -> Self {
        Self::new(Family::Zero, 0.0).unwrap()
    }

    /// Look a family up by its registry id.
    pub fn from_id(id: &str, epsilon: f64) -> Result<Self> {
        Self::new(id.parse()?, epsilon)
    }

    pub fn with_shift(mut self, shift: f64) -> Self {
        self.shift = shift;
        self
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    #[inline]
    fn amplitude(&self, x: &[f64; 3]) -> f64 {
        1.0 + self.epsilon * (2.0 * PI * x[0]).cos()
    }

    /// `F(x, u)`.
    #[inline]
    pub fn f(&self, x: &[f64; 3], u: f64) -> f64 {
        self.shift
            + match self.family {
                Family::Zero => 0.0,
                Family::Pendulum | Family::PendulumModulated => {
                    let s = (PI * u).sin();
                    self.amplitude(x) * s * s
                }
                Family::TwowellPeriodized => {
                    // centred on the nearest well so tails keep relative precision
                    let s = u - u.round();
                    let q = 4.0 * s * (1.0 - s.abs());
                    self.amplitude(x) * q * q
                }
            }
    }

    /// `F_u(x, u)`.
    #[inline]
    pub fn fu(&self, x: &[f64; 3], u: f64) -> f64 {
        match self.family {
            Family::Zero => 0.0,
            Family::Pendulum | Family::PendulumModulated => {
                self.amplitude(x) * PI * (2.0 * PI * u).sin()
            }
            Family::TwowellPeriodized => {
                let s = u - u.round();
                let a = s.abs();
                self.amplitude(x) * 32.0 * s * (1.0 - a) * (1.0 - 2.0 * a)
            }
        }
    }

    /// `F_uu(x, u)`.
    #[inline]
    pub fn fuu(&self, x: &[f64; 3], u: f64) -> f64 {
        match self.family {
            Family::Zero => 0.0,
            Family::Pendulum | Family::PendulumModulated => {
                self.amplitude(x) * 2.0 * PI * PI * (2.0 * PI * u).cos()
            }
            Family::TwowellPeriodized => {
                let a = (u - u.round()).abs();
                self.amplitude(x) * 32.0 * (1.0 - 6.0 * a + 6.0 * a * a)
            }
        }
    }

    /// Lower bound of `x -> F(x, u)` minimum curvature at the wells, used to
    /// scale Hessian shifts.
    pub fn well_curvature(&self) -> f64 {
        match self.family {
            Family::Zero => 0.0,
            Family::Pendulum | Family::PendulumModulated => 2.0 * PI * PI * (1.0 - self.epsilon),
            Family::TwowellPeriodized => 32.0 * (1.0 - self.epsilon),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn families() -> Vec<Potential> {
        vec![
            Potential::pendulum(),
            Potential::pendulum_modulated(0.3).unwrap(),
            Potential::pendulum_modulated(0.9).unwrap(),
            Potential::new(Family::TwowellPeriodized, 0.3).unwrap(),
        ]
    }

    #[test]
    fn point_values() {
        let pm = Potential::pendulum_modulated(0.3).unwrap();
        for k in -3..=3 {
            assert!(pm.f(&[0.37, 0.1, 0.0], k as f64).abs() < 1e-30);
        }
        let p = Potential::pendulum();
        assert!((p.f(&[0.123, 0.0, 0.0], 0.5) - 1.0).abs() < 1e-15);
        // (1 + 0.3 cos 0) sin^2(pi/2) = 1.3
        assert!((pm.f(&[0.0; 3], 0.5) - 1.3).abs() < 1e-15);
        for pot in families() {
            for k in -2..=2 {
                assert!(pot.fu(&[0.4, 0.0, 0.0], k as f64).abs() < 1e-14);
            }
        }
        assert!((p.fu(&[0.0; 3], 0.25) - PI).abs() < 1e-14);
        let h = 1e-5;
        let fd = (p.f(&[0.0; 3], 0.25 + h) - p.f(&[0.0; 3], 0.25 - h)) / (2.0 * h);
        assert!((fd - PI).abs() < 1e-8);
    }

    #[test]
    fn registry_lookup() {
        assert_eq!(
            Potential::from_id("pendulum_modulated", 0.3).unwrap(),
            Potential::pendulum_modulated(0.3).unwrap()
        );
        assert!(matches!(
            Potential::from_id("quartic", 0.0),
            Err(Error::Config(_))
        ));
        assert!(Potential::pendulum_modulated(0.95).is_err());
        assert_eq!(Potential::from_id("pendulum", 0.5).unwrap().epsilon(), 0.0);
    }

    #[test]
    fn periodic_in_every_argument() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for pot in families() {
            for _ in 0..1000 {
                let x = [rng.gen_range(-3.0..3.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
                let u: f64 = rng.gen_range(-3.0..3.0);
                let f = pot.f(&x, u);
                for k in 0..3 {
                    let mut y = x;
                    y[k] += 1.0;
                    assert!((pot.f(&y, u) - f).abs() < 1e-12);
                }
                assert!((pot.f(&x, u + 1.0) - f).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn nonnegative_and_vanishing_only_on_integers() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for pot in families() {
            for _ in 0..1000 {
                let x = [rng.gen_range(-3.0..3.0), 0.0, 0.0];
                let u: f64 = rng.gen_range(-3.0..3.0);
                let f = pot.f(&x, u);
                assert!(f >= 0.0);
                let dist = (u - u.round()).abs();
                if dist > 1e-3 {
                    assert!(f > 0.0);
                }
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let h = 1e-6;
        for pot in families() {
            for _ in 0..1000 {
                let x = [rng.gen_range(-3.0..3.0), 0.0, 0.0];
                let u: f64 = rng.gen_range(-3.0..3.0);
                let fd = (pot.f(&x, u + h) - pot.f(&x, u - h)) / (2.0 * h);
                let fu = pot.fu(&x, u);
                assert!((fd - fu).abs() <= 1e-6 * (1.0 + fu.abs()), "{pot:?} u={u}");
                let fd2 = (pot.fu(&x, u + h) - pot.fu(&x, u - h)) / (2.0 * h);
                let fuu = pot.fuu(&x, u);
                assert!((fd2 - fuu).abs() <= 1e-5 * (1.0 + fuu.abs()), "{pot:?} u={u}");
            }
        }
    }

    proptest! {
        #[test]
        fn invariants_hold_for_any_epsilon(
            fam in 0usize..3,
            eps in 0.0..=MAX_EPSILON,
            x1 in -5.0f64..5.0,
            u in -5.0f64..5.0,
            j in -3i64..=3,
        ) {
            let family = [Family::PendulumModulated, Family::Pendulum, Family::TwowellPeriodized][fam];
            let pot = Potential::new(family, eps).unwrap();
            let x = [x1, 0.0, 0.0];
            let f = pot.f(&x, u);
            prop_assert!(f >= 0.0);
            prop_assert!((pot.f(&[x1 + j as f64, 0.0, 0.0], u) - f).abs() <= 1e-12);
            prop_assert!((pot.f(&x, u + j as f64) - f).abs() <= 1e-12);
            // symmetric about each well
            prop_assert!((pot.f(&x, -u) - f).abs() <= 1e-12);
            prop_assert!(pot.f(&x, j as f64) <= 1e-28);
        }
    }
}
