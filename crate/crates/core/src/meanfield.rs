//! Mean-field competition model for two strains sharing one pool of
//! susceptibles:
//!
//! ```text
//! u1' = lambda1 u1 u0 - delta1 u1
//! u2' = lambda2 u2 u0 - delta2 u2,    u0 = 1 - u1 - u2
//! ```
//!
//! The state stores only `(u1, u2)`; `u0` is always derived.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Densities below this are treated as extinct.
pub const EXTINCTION_DENSITY: f64 = 1e-9;

/// Simplex violations up to this size are clamped; larger ones are errors.
pub const SIMPLEX_SLACK: f64 = 1e-9;

pub const DEFAULT_DT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrainParams {
    pub lambda: f64,
    pub delta: f64,
}

impl StrainParams {
    pub fn new(lambda: f64, delta: f64) -> Result<Self> {
        let s = StrainParams { lambda, delta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::param("lambda", format!("must be finite and >= 0, got {}", self.lambda)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::param("delta", format!("must be finite and > 0, got {}", self.delta)));
        }
        Ok(())
    }

    /// Basic reproduction ratio `lambda / delta`.
    pub fn ratio(&self) -> f64 {
        self.lambda / self.delta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldState {
    pub time: f64,
    pub u1: f64,
    pub u2: f64,
}

impl MeanFieldState {
    pub fn new(u1: f64, u2: f64) -> Result<Self> {
        let s = MeanFieldState { time: 0.0, u1, u2 };
        s.validate()?;
        Ok(s)
    }

    pub fn u0(&self) -> f64 {
        1.0 - self.u1 - self.u2
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.u1 >= 0.0 && self.u2 >= 0.0 && self.u1 + self.u2 <= 1.0) {
            return Err(Error::param(
                "state",
                format!("densities must satisfy u1, u2 >= 0 and u1 + u2 <= 1, got ({}, {})", self.u1, self.u2),
            ));
        }
        if !(self.time >= 0.0 && self.time.is_finite()) {
            return Err(Error::param("time", format!("must be finite and >= 0, got {}", self.time)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub method: String,
    pub samples: Vec<MeanFieldState>,
}

impl Trajectory {
    pub fn last(&self) -> &MeanFieldState {
        self.samples.last().expect("trajectory always holds its initial state")
    }

    /// Sample closest to time `t`.
    pub fn at(&self, t: f64) -> &MeanFieldState {
        let i = ((t - self.samples[0].time) / self.dt).round().max(0.0) as usize;
        &self.samples[i.min(self.samples.len() - 1)]
    }
}

pub fn derivatives(state: &MeanFieldState, s1: &StrainParams, s2: &StrainParams) -> (f64, f64) {
    rhs(state.u1, state.u2, s1, s2)
}

fn rhs(u1: f64, u2: f64, s1: &StrainParams, s2: &StrainParams) -> (f64, f64) {
    let u0 = 1.0 - u1 - u2;
    (
        s1.lambda * u1 * u0 - s1.delta * u1,
        s2.lambda * u2 * u0 - s2.delta * u2,
    )
}

/// Fixed-step classical Runge-Kutta integration, sampled every `dt` from
/// `init.time` through `init.time + t_end`.
pub fn integrate(
    s1: &StrainParams,
    s2: &StrainParams,
    init: &MeanFieldState,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    s1.validate()?;
    s2.validate()?;
    init.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("dt", format!("must be > 0, got {dt}")));
    }
    if !(t_end >= dt && t_end.is_finite()) {
        return Err(Error::param("t_end", format!("must be finite and >= dt, got {t_end}")));
    }

    let steps = (t_end / dt).round() as usize;
    let mut samples = Vec::with_capacity(steps + 1);
    samples.push(*init);
    let (mut u1, mut u2) = (init.u1, init.u2);
    for k in 1..=steps {
        let (a1, a2) = rhs(u1, u2, s1, s2);
        let (b1, b2) = rhs(u1 + 0.5 * dt * a1, u2 + 0.5 * dt * a2, s1, s2);
        let (c1, c2) = rhs(u1 + 0.5 * dt * b1, u2 + 0.5 * dt * b2, s1, s2);
        let (e1, e2) = rhs(u1 + dt * c1, u2 + dt * c2, s1, s2);
        u1 += dt / 6.0 * (a1 + 2.0 * b1 + 2.0 * c1 + e1);
        u2 += dt / 6.0 * (a2 + 2.0 * b2 + 2.0 * c2 + e2);

        let time = init.time + k as f64 * dt;
        if !u1.is_finite()
            || !u2.is_finite()
            || u1 < -SIMPLEX_SLACK
            || u2 < -SIMPLEX_SLACK
            || u1 + u2 > 1.0 + SIMPLEX_SLACK
        {
            return Err(Error::IntegrationUnstable { time, u1, u2 });
        }
        u1 = u1.max(0.0);
        u2 = u2.max(0.0);
        let excess = u1 + u2 - 1.0;
        if excess > 0.0 {
            let total = u1 + u2;
            u1 /= total;
            u2 /= total;
        }
        samples.push(MeanFieldState { time, u1, u2 });
    }
    Ok(Trajectory {
        dt,
        method: "rk4".into(),
        samples,
    })
}

/// Single-strain endemic density `max(0, 1 - delta / lambda)`.
pub fn endemic_equilibrium(s: &StrainParams) -> f64 {
    if s.lambda <= s.delta {
        0.0
    } else {
        1.0 - s.delta / s.lambda
    }
}

/// Linearized per-capita growth rate of a rare invader facing a resident
/// strain at its endemic equilibrium, where susceptibles sit at
/// `delta_res / lambda_res`.
pub fn invasion_growth_rate(resident: &StrainParams, invader: &StrainParams) -> Result<f64> {
    if resident.lambda <= resident.delta {
        return Err(Error::SubcriticalResident {
            lambda: resident.lambda,
            delta: resident.delta,
        });
    }
    Ok(invader.lambda * resident.delta / resident.lambda - invader.delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Strain1,
    Strain2,
    BothDieOut,
    DegenerateTie,
}

/// Exclusion-principle outcome: the strain with the strictly larger
/// `lambda / delta` ratio takes over, provided some ratio exceeds one.
pub fn predict_winner(s1: &StrainParams, s2: &StrainParams) -> Verdict {
    // Cross-multiplied so that rescaling a strain's (lambda, delta) cannot
    // change the comparison through rounding.
    let above1 = s1.lambda > s1.delta;
    let above2 = s2.lambda > s2.delta;
    if !above1 && !above2 {
        return Verdict::BothDieOut;
    }
    let lhs = s1.lambda * s2.delta;
    let rhs = s2.lambda * s1.delta;
    if lhs > rhs {
        Verdict::Strain1
    } else if rhs > lhs {
        Verdict::Strain2
    } else {
        Verdict::DegenerateTie
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn sp(lambda: f64, delta: f64) -> StrainParams {
        StrainParams::new(lambda, delta).unwrap()
    }

    #[test]
    fn derivative_examples() {
        let s = MeanFieldState::new(0.2, 0.3).unwrap();
        let (a, b) = derivatives(&s, &sp(2.0, 1.0), &sp(3.0, 1.0));
        assert_abs_diff_eq!(a, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b, 0.15, epsilon = 1e-15);

        let zero = MeanFieldState::new(0.0, 0.0).unwrap();
        assert_eq!(derivatives(&zero, &sp(5.0, 0.3), &sp(1.0, 2.0)), (0.0, 0.0));

        let s2 = sp(3.0, 1.0);
        let eq = MeanFieldState::new(0.0, endemic_equilibrium(&s2)).unwrap();
        let (a, b) = derivatives(&eq, &sp(2.0, 1.0), &s2);
        assert_eq!(a, 0.0);
        assert_abs_diff_eq!(b, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn decoupled_decay() {
        let init = MeanFieldState::new(0.5, 0.3).unwrap();
        let tr = integrate(&sp(0.0, 1.0), &sp(0.0, 1.0), &init, 5.0, 1e-3).unwrap();
        let end = tr.last();
        assert_abs_diff_eq!(end.time, 5.0, epsilon = 1e-9);
        assert_abs_diff_eq!(end.u1, 0.5 * (-5.0f64).exp(), epsilon = 1e-6);
        assert_abs_diff_eq!(end.u2, 0.3 * (-5.0f64).exp(), epsilon = 1e-6);
    }

    #[test]
    fn logistic_limit() {
        let init = MeanFieldState::new(0.0, 0.1).unwrap();
        let tr = integrate(&sp(2.0, 1.0), &sp(3.0, 1.0), &init, 50.0, 1e-3).unwrap();
        assert_abs_diff_eq!(tr.last().u2, 2.0 / 3.0, epsilon = 1e-4);
        assert!(tr.samples.iter().all(|s| s.u1 == 0.0));
    }

    #[test]
    fn weaker_strain_excluded() {
        let init = MeanFieldState::new(0.01, 0.6667).unwrap();
        let tr = integrate(&sp(2.0, 1.0), &sp(3.0, 1.0), &init, 50.0, 1e-3).unwrap();
        assert!(tr.last().u1 < 1e-6);
    }

    #[test]
    fn rk4_convergence_order() {
        let init = MeanFieldState::new(0.5, 0.3).unwrap();
        let z = sp(0.0, 1.0);
        let err = |dt: f64| {
            let tr = integrate(&z, &z, &init, 2.0, dt).unwrap();
            tr.samples
                .iter()
                .map(|s| (s.u1 - 0.5 * (-s.time).exp()).abs())
                .fold(0.0, f64::max)
        };
        // Coarse enough that rounding does not swamp truncation error.
        let coarse = err(0.2);
        let fine = err(0.1);
        assert!(coarse / fine >= 8.0, "ratio {}", coarse / fine);
    }

    #[test]
    fn rk4_against_refined_reference() {
        // Max-norm error of dt and dt/2 runs against a dt/16 reference,
        // compared on the shared sample grid.
        let init = MeanFieldState::new(0.5, 0.3).unwrap();
        let z = sp(0.0, 1.0);
        let dt = 0.4;
        let reference = integrate(&z, &z, &init, 4.0, dt / 16.0).unwrap();
        let err = |h: f64| {
            let tr = integrate(&z, &z, &init, 4.0, h).unwrap();
            tr.samples
                .iter()
                .step_by((dt / h).round() as usize)
                .map(|s| (s.u1 - reference.at(s.time).u1).abs())
                .fold(0.0, f64::max)
        };
        assert!(err(dt) / err(dt / 2.0) >= 8.0);
    }

    #[test]
    fn unstable_step_is_reported() {
        let init = MeanFieldState::new(0.5, 0.4).unwrap();
        let r = integrate(&sp(200.0, 1.0), &sp(200.0, 1.0), &init, 1.0, 0.5);
        assert!(matches!(r, Err(Error::IntegrationUnstable { .. })));
    }

    #[test]
    fn integrate_rejects_bad_steps() {
        let init = MeanFieldState::new(0.1, 0.1).unwrap();
        let s = sp(1.0, 1.0);
        assert!(integrate(&s, &s, &init, 1.0, 0.0).is_err());
        assert!(integrate(&s, &s, &init, 0.01, 0.1).is_err());
        assert!(MeanFieldState::new(0.7, 0.4).is_err());
        assert!(StrainParams::new(-1.0, 1.0).is_err());
        assert!(StrainParams::new(1.0, 0.0).is_err());
    }

    #[test]
    fn equilibria() {
        assert_abs_diff_eq!(endemic_equilibrium(&sp(2.0, 1.0)), 0.5);
        assert_eq!(endemic_equilibrium(&sp(1.0, 1.0)), 0.0);
        assert_eq!(endemic_equilibrium(&sp(0.0, 1.0)), 0.0);
        assert_abs_diff_eq!(endemic_equilibrium(&sp(3.0, 1.0)), 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn invasion_examples() {
        let r = invasion_growth_rate(&sp(3.0, 1.0), &sp(2.0, 1.0)).unwrap();
        assert_abs_diff_eq!(r, -1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(invasion_growth_rate(&sp(2.0, 1.0), &sp(2.0, 1.0)).unwrap(), 0.0);
        let r = invasion_growth_rate(&sp(2.0, 1.0), &sp(3.0, 1.0)).unwrap();
        assert_abs_diff_eq!(r, 0.5, epsilon = 1e-15);
        assert!(matches!(
            invasion_growth_rate(&sp(1.0, 1.0), &sp(3.0, 1.0)),
            Err(Error::SubcriticalResident { .. })
        ));
    }

    #[test]
    fn winner_examples() {
        assert_eq!(predict_winner(&sp(2.0, 1.0), &sp(3.0, 1.0)), Verdict::Strain2);
        assert_eq!(predict_winner(&sp(4.0, 2.0), &sp(3.0, 2.0)), Verdict::Strain1);
        assert_eq!(predict_winner(&sp(0.5, 1.0), &sp(0.9, 1.0)), Verdict::BothDieOut);
        assert_eq!(predict_winner(&sp(2.0, 1.0), &sp(4.0, 2.0)), Verdict::DegenerateTie);
    }

    fn strain() -> impl Strategy<Value = StrainParams> {
        (0.5f64..2.0, 0.6f64..4.0).prop_map(|(delta, k)| sp(k * delta, delta))
    }

    proptest! {
        #[test]
        fn simplex_boundary_flows_inward(u1 in 0.0f64..=1.0, a in strain(), b in strain()) {
            let s = MeanFieldState { time: 0.0, u1, u2: 1.0 - u1 };
            let (d1, d2) = derivatives(&s, &a, &b);
            prop_assert!(d1 + d2 <= 1e-12);
        }

        #[test]
        fn invasion_sign_law(res in strain(), inv in strain()) {
            prop_assume!(res.lambda > res.delta);
            let r = invasion_growth_rate(&res, &inv).unwrap();
            let gap = inv.ratio() - res.ratio();
            prop_assume!(gap.abs() > 1e-12);
            prop_assert_eq!(r > 0.0, gap > 0.0);
            if inv.lambda > inv.delta {
                let back = invasion_growth_rate(&inv, &res).unwrap();
                prop_assert_eq!(back > 0.0, r < 0.0);
            }
        }

        #[test]
        fn winner_depends_on_ratio_only(a in strain(), b in strain(), k in 0.1f64..10.0) {
            let scaled = StrainParams { lambda: a.lambda * k, delta: a.delta * k };
            // Exact ties are measure-zero; skip near-ties where rescaling rounds.
            prop_assume!((a.ratio() - b.ratio()).abs() > 1e-9);
            prop_assert_eq!(predict_winner(&a, &b), predict_winner(&scaled, &b));
        }

        #[test]
        fn trajectories_stay_in_simplex(
            a in strain(), b in strain(), u1 in 0.0f64..0.5, u2 in 0.0f64..0.5,
        ) {
            let init = MeanFieldState::new(u1, u2).unwrap();
            let tr = integrate(&a, &b, &init, 5.0, 1e-2).unwrap();
            for s in &tr.samples {
                prop_assert!(s.u1 >= -SIMPLEX_SLACK && s.u2 >= -SIMPLEX_SLACK);
                prop_assert!(s.u1 + s.u2 <= 1.0 + SIMPLEX_SLACK);
                if u1 == 0.0 {
                    prop_assert_eq!(s.u1, 0.0);
                }
            }
            prop_assert!(tr.samples.windows(2).all(|w| w[1].time > w[0].time));
        }
    }
}
