//! The four built-in systems and their default run settings.

use crate::error::{Error, Result};
use crate::integrate::Scheme;
use crate::model::{critical_gamma, Coefficient, FastSlowSystem, SystemKind};
use crate::stable::{sgn, StableParams};

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")))
    }
}

#[allow(clippy::too_many_arguments)]
fn build(
    name: &str,
    kind: SystemKind,
    [f1, f2, g1, g2]: [Coefficient; 4],
    closed_form_drift: Coefficient,
    epsilon: f64,
    b: f64,
    alpha: f64,
    x0: f64,
    y0: f64,
    domain: (f64, f64),
) -> Result<FastSlowSystem> {
    check_epsilon(epsilon)?;
    Ok(FastSlowSystem {
        name: name.to_string(),
        kind,
        f1,
        f2,
        g1,
        g2,
        epsilon,
        gamma: critical_gamma(alpha),
        b,
        noise: StableParams::unit(alpha, 0.0)?,
        x0,
        y0,
        domain,
        closed_form_drift: Some(closed_form_drift),
    })
}

/// `dx = (-x + eps^-gamma a y) dt`, `eps dy = (eps^gamma c x - y) dt + eps^gamma b dL`.
pub fn linear(a: f64, b: f64, c: f64, epsilon: f64, alpha: f64, x0: f64, y0: f64) -> Result<FastSlowSystem> {
    let coeffs = [
        Coefficient::new(|x| -x).with_derivative(|_| -1.0),
        Coefficient::constant(a),
        Coefficient::new(move |x| c * x).with_derivative(move |_| c),
        Coefficient::constant(-1.0),
    ];
    let k = -(1.0 - a * c);
    let fbar = Coefficient::new(move |x| k * x).with_derivative(move |_| k);
    build(
        "linear",
        SystemKind::Linear { a, c },
        coeffs,
        fbar,
        epsilon,
        b,
        alpha,
        x0,
        y0,
        (-10.0, 10.0),
    )
}

/// Bilinear coupling `f2 = x` that keeps `x > 0`.
pub fn nonlinear1(a: f64, b: f64, c: f64, epsilon: f64, alpha: f64, x0: f64) -> Result<FastSlowSystem> {
    if a <= 0.0 {
        return Err(Error::InvalidArgument(format!("nonlinear1 needs a > 0, got {a}")));
    }
    let coeffs = [
        Coefficient::new(move |x| c - x).with_derivative(|_| -1.0),
        Coefficient::new(|x| x).with_derivative(|_| 1.0),
        Coefficient::constant(0.0),
        Coefficient::constant(-1.0 / a),
    ];
    let fbar = Coefficient::new(move |x| c - x).with_derivative(|_| -1.0);
    build(
        "nonlinear1",
        SystemKind::Bilinear { a, c },
        coeffs,
        fbar,
        epsilon,
        b,
        alpha,
        x0,
        0.0,
        (1e-3, 10.0),
    )
}

/// Fast relaxation rate `1 + |x|`, giving a bimodal slow density.
pub fn nonlinear2(b: f64, epsilon: f64, alpha: f64, x0: f64) -> Result<FastSlowSystem> {
    let coeffs = [
        Coefficient::new(|x| -x).with_derivative(|_| -1.0),
        Coefficient::constant(1.0),
        Coefficient::constant(0.0),
        Coefficient::new(|x: f64| -(1.0 + x.abs())).with_derivative(|x| -sgn(x)),
    ];
    build(
        "nonlinear2",
        SystemKind::StateDependentReversion,
        coeffs,
        Coefficient::new(|x| -x).with_derivative(|_| -1.0),
        epsilon,
        b,
        alpha,
        x0,
        0.0,
        (-10.0, 10.0),
    )
}

/// Cubic slow drift with additive reduced noise.
pub fn nonlinear3(a: f64, b: f64, epsilon: f64, alpha: f64) -> Result<FastSlowSystem> {
    if a <= 0.0 {
        return Err(Error::InvalidArgument(format!("nonlinear3 needs a > 0, got {a}")));
    }
    let coeffs = [
        Coefficient::new(|x| -x - x * x * x).with_derivative(|x| -1.0 - 3.0 * x * x),
        Coefficient::constant(1.0),
        Coefficient::constant(0.0),
        Coefficient::constant(-1.0 / a),
    ];
    let fbar = Coefficient::new(|x| -x - x * x * x).with_derivative(|x| -1.0 - 3.0 * x * x);
    build(
        "nonlinear3",
        SystemKind::Cubic { a },
        coeffs,
        fbar,
        epsilon,
        b,
        alpha,
        0.0,
        0.0,
        (-5.0, 5.0),
    )
}

impl FastSlowSystem {
    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        self.noise = self.noise.with_beta(beta)?;
        Ok(self)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_initial(mut self, x0: f64, y0: f64) -> Self {
        self.x0 = x0;
        self.y0 = y0;
        self
    }
}

/// Step sizes and schemes known to be stable for each built-in system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunDefaults {
    pub full_dt: f64,
    pub full_scheme: Scheme,
    pub reduced_dt: f64,
    pub nplus_scheme: Scheme,
}

pub const SAMPLE_DT: f64 = 0.01;

pub fn run_defaults(kind: SystemKind) -> RunDefaults {
    let (full_dt, full_scheme, nplus_scheme) = match kind {
        SystemKind::Linear { .. } => (1e-3, Scheme::Euler, Scheme::Euler),
        SystemKind::Bilinear { .. } => (2e-4, Scheme::PredictorCorrector, Scheme::MarcusClosed),
        SystemKind::StateDependentReversion => (5e-4, Scheme::Euler, Scheme::MarcusNumeric),
        SystemKind::Cubic { .. } => (1e-4, Scheme::Euler, Scheme::PredictorCorrector),
        SystemKind::Custom => (1e-4, Scheme::PredictorCorrector, Scheme::MarcusNumeric),
    };
    RunDefaults {
        full_dt,
        full_scheme,
        reduced_dt: SAMPLE_DT,
        nplus_scheme,
    }
}

/// Built-in parameters used when a value is not given explicitly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Defaults {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub x0: f64,
}

pub fn parameter_defaults(name: &str) -> Option<Defaults> {
    let d = match name {
        "linear" => Defaults {
            a: 0.2,
            b: 0.7,
            c: 1.0,
            epsilon: 0.01,
            alpha: 2.0,
            x0: 0.0,
        },
        "nonlinear1" => Defaults {
            a: 1.0,
            b: 0.1,
            c: 1.0,
            epsilon: 0.01,
            alpha: 1.7,
            x0: 1.0,
        },
        "nonlinear2" => Defaults {
            a: 1.0,
            b: 2.0,
            c: 0.0,
            epsilon: 0.01,
            alpha: 1.9,
            x0: 0.0,
        },
        "nonlinear3" => Defaults {
            a: 1.0,
            b: 0.3,
            c: 0.0,
            epsilon: 0.01,
            alpha: 1.7,
            x0: 0.0,
        },
        _ => return None,
    };
    Some(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn critical_gamma_by_default() {
        let s = nonlinear2(2.0, 0.1, 1.6, 0.0).unwrap();
        assert!(s.rho().abs() < 1e-15);
        assert!((s.with_gamma(1.0).rho() - 0.625).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(linear(0.2, 0.7, 1.0, 0.0, 1.9, 0.0, 0.0).is_err());
        assert!(linear(0.2, 0.7, 1.0, 0.01, 1.0, 0.0, 0.0).is_err());
        assert!(nonlinear1(-1.0, 0.1, 1.0, 0.01, 1.7, 1.0).is_err());
        assert!(nonlinear3(0.0, 0.3, 0.01, 1.7).is_err());
        assert!(nonlinear3(1.0, 0.3, 0.01, 1.7).unwrap().with_beta(1.5).is_err());
    }

    #[test]
    fn nonlinear2_derivative_at_kink() {
        let s = nonlinear2(2.0, 0.01, 1.9, 0.0).unwrap();
        assert_eq!(s.g2.derivative(0.0), 0.0);
        assert_eq!(s.g2.derivative(-0.3), 1.0);
    }

    #[test]
    fn closed_form_drift_agrees_with_formula() {
        let systems = [
            linear(0.3, 0.7, -1.2, 0.01, 1.9, 0.0, 0.0).unwrap(),
            nonlinear1(1.5, 0.1, 2.0, 0.01, 1.7, 1.0).unwrap(),
            nonlinear2(2.0, 0.01, 1.9, 0.0).unwrap(),
            nonlinear3(0.5, 0.3, 0.01, 1.7).unwrap(),
        ];
        for s in &systems {
            let closed = s.closed_form_drift.as_ref().unwrap();
            for x in [-3.0, -0.4, 0.0, 0.9, 2.5] {
                let generic = s.f_bar(x).unwrap();
                assert!(
                    (closed.eval(x) - generic).abs() <= 1e-12 * (1.0 + generic.abs()),
                    "{}",
                    s.name
                );
                let d = s.f_bar_derivative(x);
                assert!((closed.derivative(x) - d).abs() <= 1e-12 * (1.0 + d.abs()), "{}", s.name);
            }
        }
    }

    proptest! {
        #[test]
        fn f_bar_matches_closed_forms(
            a in 0.05f64..3.0, c in -3.0f64..3.0, x in -8.0f64..8.0,
        ) {
            let rel = |u: f64, v: f64| (u - v).abs() <= 1e-12 * (1.0 + v.abs());
            let lin = linear(a, 0.7, c, 0.01, 1.9, 0.0, 0.0).unwrap();
            prop_assert!(rel(lin.f_bar(x).unwrap(), -(1.0 - a * c) * x));
            let nl1 = nonlinear1(a, 0.1, c, 0.01, 1.9, 1.0).unwrap();
            prop_assert!(rel(nl1.f_bar(x).unwrap(), c - x));
            let nl2 = nonlinear2(a, 0.01, 1.9, 0.0).unwrap();
            prop_assert!(rel(nl2.f_bar(x).unwrap(), -x));
            let nl3 = nonlinear3(a, 0.3, 0.01, 1.9).unwrap();
            prop_assert!(rel(nl3.f_bar(x).unwrap(), -x - x * x * x));
        }
    }
}
