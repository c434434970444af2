//! Closed-form quantum predictions for the singlet state: the reference
//! target for hidden-variable models and the fitter.
//!
//! Analyzer misalignment within the aperture `[θ − Δθ, θ + Δθ]` is modelled
//! as a uniform offset, independent per station and per trial. Averaging
//! `cos(x + u)` over `u ~ U[−w, w]` gives `cos(x)·sin(w)/w`, so each station
//! contributes one sinc factor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_visibility, Outcome, Setting, MAX_APERTURE};

/// Angle convention for correlations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// Spin-½ analyzers: `E = −cos(Δ)`.
    #[default]
    Spin,
    /// Photon polarizers: angle differences are doubled, `E = −cos(2Δ)`.
    Photon,
}

impl Convention {
    fn factor(self) -> f64 {
        match self {
            Convention::Spin => 1.0,
            Convention::Photon => 2.0,
        }
    }
}

pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

fn check_aperture(name: &'static str, w: f64) -> Result<()> {
    if !w.is_finite() {
        return Err(Error::NonFinite(name));
    }
    if !(0.0..=MAX_APERTURE).contains(&w) {
        return Err(Error::param(name, format!("{w} outside [0, π/4]")));
    }
    Ok(())
}

/// Singlet correlation under the spin convention.
pub fn singlet_correlation(
    delta: f64,
    aperture_a: f64,
    aperture_b: f64,
    visibility: f64,
) -> Result<f64> {
    singlet_correlation_with(Convention::Spin, delta, aperture_a, aperture_b, visibility)
}

pub fn singlet_correlation_with(
    convention: Convention,
    delta: f64,
    aperture_a: f64,
    aperture_b: f64,
    visibility: f64,
) -> Result<f64> {
    if !delta.is_finite() {
        return Err(Error::NonFinite("delta"));
    }
    check_aperture("aperture_a", aperture_a)?;
    check_aperture("aperture_b", aperture_b)?;
    check_visibility(visibility)?;
    let k = convention.factor();
    Ok(-visibility * (k * delta).cos() * sinc(k * aperture_a) * sinc(k * aperture_b))
}

/// Quantum joint and marginal probabilities for one setting pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QmPrediction {
    pub expectation: f64,
    /// Indexed `[a][b]` with 0 ↔ −1 and 1 ↔ +1.
    pub joint: [[f64; 2]; 2],
    pub marginal_a: [f64; 2],
    pub marginal_b: [f64; 2],
}

fn click_index(o: Outcome) -> Option<usize> {
    match o {
        Outcome::Minus => Some(0),
        Outcome::Plus => Some(1),
        Outcome::None => None,
    }
}

impl QmPrediction {
    fn from_expectation(e: f64) -> Self {
        let mut joint = [[0.0; 2]; 2];
        for (i, row) in joint.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                let sign = if i == j { 1.0 } else { -1.0 };
                *cell = 0.25 * (1.0 + sign * e);
            }
        }
        let marginal_a = [joint[0][0] + joint[0][1], joint[1][0] + joint[1][1]];
        let marginal_b = [joint[0][0] + joint[1][0], joint[0][1] + joint[1][1]];
        QmPrediction {
            expectation: e,
            joint,
            marginal_a,
            marginal_b,
        }
    }

    /// Joint probability of a click pair; zero for any no-click outcome.
    pub fn joint(&self, a: Outcome, b: Outcome) -> f64 {
        match (click_index(a), click_index(b)) {
            (Some(i), Some(j)) => self.joint[i][j],
            _ => 0.0,
        }
    }

    pub fn marginal_a(&self, a: Outcome) -> f64 {
        click_index(a).map_or(0.0, |i| self.marginal_a[i])
    }

    pub fn marginal_b(&self, b: Outcome) -> f64 {
        click_index(b).map_or(0.0, |j| self.marginal_b[j])
    }
}

/// Singlet joint distribution: `p(a, b) = ¼(1 + a·b·E)`.
pub fn singlet_joint(
    delta: f64,
    aperture_a: f64,
    aperture_b: f64,
    visibility: f64,
) -> Result<QmPrediction> {
    let e = singlet_correlation(delta, aperture_a, aperture_b, visibility)?;
    Ok(QmPrediction::from_expectation(e))
}

/// Correlation of a setting pair under the given convention.
pub fn setting_correlation(
    convention: Convention,
    a: &Setting,
    b: &Setting,
    visibility: f64,
) -> Result<f64> {
    singlet_correlation_with(
        convention,
        a.theta() - b.theta(),
        a.aperture(),
        b.aperture(),
        visibility,
    )
}

/// CHSH value `|E(a,b) − E(a,b′)| + |E(a′,b) + E(a′,b′)|`.
pub fn chsh_combination(e_ab: f64, e_abp: f64, e_apb: f64, e_apbp: f64) -> f64 {
    (e_ab - e_abp).abs() + (e_apb + e_apbp).abs()
}

pub fn chsh_prediction(
    a: &Setting,
    a_prime: &Setting,
    b: &Setting,
    b_prime: &Setting,
    visibility: f64,
) -> Result<f64> {
    chsh_prediction_with(Convention::Spin, a, a_prime, b, b_prime, visibility)
}

pub fn chsh_prediction_with(
    convention: Convention,
    a: &Setting,
    a_prime: &Setting,
    b: &Setting,
    b_prime: &Setting,
    visibility: f64,
) -> Result<f64> {
    let e = |x: &Setting, y: &Setting| setting_correlation(convention, x, y, visibility);
    Ok(chsh_combination(
        e(a, b)?,
        e(a, b_prime)?,
        e(a_prime, b)?,
        e(a_prime, b_prime)?,
    ))
}

/// Malus-law transmission ratio `cos²(θ − θ′)`.
pub fn malus_ratio(theta: f64, theta_prime: f64) -> Result<f64> {
    if !theta.is_finite() || !theta_prime.is_finite() {
        return Err(Error::NonFinite("theta"));
    }
    let c = (theta - theta_prime).cos();
    Ok(c * c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussLegendre;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, FRAC_PI_6, PI, SQRT_2};

    /// Averages −cos(Δ + δa − δb) over uniform misalignments by tensor
    /// Gauss–Legendre quadrature; independent of the sinc closed form.
    fn smeared_by_quadrature(delta: f64, wa: f64, wb: f64) -> f64 {
        let rule = GaussLegendre::new(24);
        let inner = |da: f64| {
            if wb == 0.0 {
                -(delta + da).cos()
            } else {
                rule.integrate(-wb, wb, |db| -(delta + da - db).cos()) / (2.0 * wb)
            }
        };
        if wa == 0.0 {
            inner(0.0)
        } else {
            rule.integrate(-wa, wa, inner) / (2.0 * wa)
        }
    }

    fn s(label: &str, theta: f64) -> Setting {
        Setting::new(label, theta, 0.0).unwrap()
    }

    #[test]
    fn correlation_examples() {
        assert!((singlet_correlation(0.0, 0.0, 0.0, 1.0).unwrap() + 1.0).abs() < 1e-15);
        assert!((singlet_correlation(FRAC_PI_3, 0.0, 0.0, 1.0).unwrap() + 0.5).abs() < 1e-15);
        assert!((singlet_correlation(0.0, 0.0, 0.0, 0.9).unwrap() + 0.9).abs() < 1e-15);
        let smeared = singlet_correlation(0.0, 0.1, 0.1, 1.0).unwrap();
        assert!((smeared + 0.996672).abs() < 1e-6, "{smeared}");
        assert!((smeared - smeared_by_quadrature(0.0, 0.1, 0.1)).abs() < 1e-12);
    }

    #[test]
    fn aperture_validation() {
        assert!(singlet_correlation(0.0, -0.01, 0.0, 1.0).is_err());
        assert!(singlet_correlation(0.0, 0.0, 1.0, 1.0).is_err());
        assert!(singlet_correlation(0.0, 0.0, 0.0, 1.5).is_err());
    }

    #[test]
    fn sinc_matches_quadrature_on_grid() {
        for i in 0..=12 {
            let delta = i as f64 * PI / 6.0;
            for j in 0..=5 {
                let w = j as f64 * MAX_APERTURE / 5.0;
                for k in 0..=2 {
                    let wb = k as f64 * 0.1;
                    let closed = singlet_correlation(delta, w, wb, 1.0).unwrap();
                    let quad = smeared_by_quadrature(delta, w, wb);
                    assert!((closed - quad).abs() < 1e-9, "Δ={delta} w={w} wb={wb}");
                }
            }
        }
    }

    #[test]
    fn photon_convention_doubles_angles() {
        let e = singlet_correlation_with(Convention::Photon, FRAC_PI_6, 0.0, 0.0, 1.0).unwrap();
        assert!((e + 0.5).abs() < 1e-15);
    }

    #[test]
    fn joint_examples() {
        let p = singlet_joint(0.0, 0.0, 0.0, 1.0).unwrap();
        assert!(p.joint(Outcome::Plus, Outcome::Plus).abs() < 1e-15);
        assert!((p.joint(Outcome::Plus, Outcome::Minus) - 0.5).abs() < 1e-15);
        let p = singlet_joint(FRAC_PI_2, 0.0, 0.0, 1.0).unwrap();
        for a in Outcome::CLICKS {
            for b in Outcome::CLICKS {
                assert!((p.joint(a, b) - 0.25).abs() < 1e-15);
            }
        }
        let p = singlet_joint(FRAC_PI_4, 0.0, 0.0, 1.0).unwrap();
        let frozen = 0.25 * (1.0 - SQRT_2 / 2.0);
        assert!((p.joint(Outcome::Plus, Outcome::Plus) - frozen).abs() < 1e-15);
        assert!((frozen - 0.073223).abs() < 1e-6);
        // independent route: project the singlet (|01⟩ − |10⟩)/√2 onto
        // spin-up spinors (cos θ/2, sin θ/2) at each analyzer
        let up = |t: f64| [(t / 2.0).cos(), (t / 2.0).sin()];
        let (ua, ub) = (up(FRAC_PI_4), up(0.0));
        let amp = (ua[0] * ub[1] - ua[1] * ub[0]) / SQRT_2;
        assert!((amp * amp - frozen).abs() < 1e-15);
        assert_eq!(p.marginal_a(Outcome::None), 0.0);
        assert!((p.marginal_b(Outcome::Plus) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn chsh_examples() {
        let (a, ap, b, bp) = (s("a", 0.0), s("a'", FRAC_PI_2), s("b", FRAC_PI_4), s("b'", 3.0 * FRAC_PI_4));
        let v = chsh_prediction(&a, &ap, &b, &bp, 1.0).unwrap();
        assert!((v - 2.0 * SQRT_2).abs() < 1e-12);
        assert!((v - 2.828427).abs() < 1e-6);
        let v = chsh_prediction(&a, &ap, &b, &bp, 0.7).unwrap();
        assert!((v - 1.979899).abs() < 1e-6);
        let same = chsh_prediction(&a, &a, &a, &a, 1.0).unwrap();
        assert!((same - 2.0).abs() < 1e-15);
    }

    #[test]
    fn chsh_grid_maximum_is_tsirelson() {
        // brute-force search over a fixed angle grid; b = 0 w.l.o.g.
        let n = 48;
        let step = 2.0 * PI / n as f64;
        let e = |d: f64| -d.cos();
        let mut best: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let (a, ap, bp) = (i as f64 * step, j as f64 * step, k as f64 * step);
                    let v = chsh_combination(e(a), e(a - bp), e(ap), e(ap - bp));
                    best = best.max(v);
                }
            }
        }
        assert!((best - 2.0 * SQRT_2).abs() < 1e-9, "{best}");
    }

    #[test]
    fn malus_examples() {
        assert!((malus_ratio(0.3, 0.3).unwrap() - 1.0).abs() < 1e-15);
        assert!(malus_ratio(0.3, 0.3 + FRAC_PI_2).unwrap().abs() < 1e-15);
        assert!((malus_ratio(FRAC_PI_6, 0.0).unwrap() - 0.75).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn correlation_even_and_bounded(delta in -20.0f64..20.0, wa in 0.0..MAX_APERTURE, wb in 0.0..MAX_APERTURE, v in 0.0f64..=1.0) {
            let e = singlet_correlation(delta, wa, wb, v).unwrap();
            let em = singlet_correlation(-delta, wa, wb, v).unwrap();
            prop_assert_eq!(e, em);
            prop_assert!(e.abs() <= v + 1e-15);
            let shifted = singlet_correlation(delta + PI, wa, wb, v).unwrap();
            prop_assert!((shifted + e).abs() < 1e-9);
        }

        #[test]
        fn prediction_is_consistent(delta in -10.0f64..10.0, v in 0.0f64..=1.0) {
            let p = singlet_joint(delta, 0.0, 0.0, v).unwrap();
            let total: f64 = p.joint.iter().flatten().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
            let mut e = 0.0;
            for a in Outcome::CLICKS {
                for b in Outcome::CLICKS {
                    prop_assert!(p.joint(a, b) >= 0.0);
                    e += f64::from(a.value() * b.value()) * p.joint(a, b);
                }
                let row = p.joint(a, Outcome::Minus) + p.joint(a, Outcome::Plus);
                prop_assert!((row - p.marginal_a(a)).abs() < 1e-15);
            }
            prop_assert!((e - p.expectation).abs() <= 1e-12);
        }
    }

    #[test]
    fn tsirelson_sweep() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_pcg::Pcg64Mcg::seed_from_u64(7);
        for _ in 0..10_000 {
            let mut angle = || rng.random_range(0.0..2.0 * PI);
            let (a, ap, b, bp) = (s("a", angle()), s("a'", angle()), s("b", angle()), s("b'", angle()));
            let v = chsh_prediction(&a, &ap, &b, &bp, 1.0).unwrap();
            assert!(v <= 2.0 * SQRT_2 + 1e-9);
        }
    }
}
