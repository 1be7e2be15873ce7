//! Averaged (A), linearised (L) and nonlinear (N+) reduced models.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{beta_star, Coefficient, FastSlowSystem, Interpretation, MarcusMapFn, ScalarSde, SystemKind};
use crate::quad::adaptive_simpson;
use crate::stable::{sgn, StableParams};

const N_PROBES: usize = 201;

/// Deterministic averaged dynamics `dx = f_bar(x) dt`.
pub fn a_approx(system: &FastSlowSystem) -> ScalarSde {
    ScalarSde::deterministic(format!("{} (A)", system.name), system.averaged_drift(), system.x0)
}

/// Attracting fixed point of the averaged drift, by damped Newton from `x0`.
///
/// Falls back to relaxing along the averaged flow when Newton stalls or lands
/// on a repelling root.
pub fn stationary_point(system: &FastSlowSystem) -> Result<f64> {
    let drift = system.averaged_drift();
    let newton = |start: f64| -> Option<f64> {
        let mut x = start;
        for _ in 0..200 {
            let (f, df) = (drift.eval(x), drift.derivative(x));
            if f == 0.0 {
                return Some(x);
            }
            if df == 0.0 || !df.is_finite() || !f.is_finite() {
                return None;
            }
            let step = f / df;
            let mut lambda = 1.0;
            let mut next = x - step;
            while drift.eval(next).abs() >= f.abs() && lambda > 1e-6 {
                lambda *= 0.5;
                next = x - lambda * step;
            }
            if (next - x).abs() <= 1e-14 * (1.0 + x.abs()) {
                return Some(next);
            }
            x = next;
        }
        None
    };
    let attracting = |x: f64| drift.derivative(x) < 0.0;
    if let Some(x) = newton(system.x0).filter(|&x| attracting(x)) {
        return Ok(x);
    }
    // Relax along the averaged flow with RK4, then polish.
    let mut x = system.x0;
    let h = 0.01;
    for _ in 0..20_000 {
        let k1 = drift.eval(x);
        let k2 = drift.eval(x + 0.5 * h * k1);
        let k3 = drift.eval(x + 0.5 * h * k2);
        let k4 = drift.eval(x + h * k3);
        x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !x.is_finite() {
            break;
        }
    }
    newton(x).filter(|&x| attracting(x)).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "no attracting fixed point of the averaged drift found from {}",
            system.x0
        ))
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Anchor {
    /// Attracting fixed point of the averaged drift.
    Stationary,
    /// A caller-supplied frozen slow state.
    At(f64),
    /// Follow the averaged trajectory from `x0`.
    Trajectory,
}

#[derive(Debug, Clone)]
pub struct LApprox {
    pub mean_ode: ScalarSde,
    /// `d xi = f_bar'(x_anchor) xi dt + scale dL`, started at 0.
    pub fluctuation_sde: ScalarSde,
    pub anchor: f64,
    pub trajectory_anchor: bool,
    pub slope: f64,
    pub noise_scale: f64,
    pub beta_star: f64,
    pub warnings: Vec<String>,
    system: FastSlowSystem,
}

/// Noise scale `eps^rho b |f2/g2|` and skewness of the (L) model at `x`.
fn l_noise(system: &FastSlowSystem, x: f64) -> Result<(f64, f64)> {
    let (f2, g2) = (system.f2.eval(x), system.g2.eval(x));
    let scale = system.epsilon.powf(system.rho()) * system.b * (f2 / g2).abs();
    let beta = if f2 == 0.0 { 0.0 } else { beta_star(system.beta(), sgn(f2))? };
    Ok((scale, beta))
}

pub fn l_approx(system: &FastSlowSystem, anchor: Anchor) -> Result<LApprox> {
    let report = system.validate(N_PROBES);
    if !report.is_valid() {
        return Err(Error::Validation(report));
    }
    let x_anchor = match anchor {
        Anchor::Stationary => stationary_point(system)?,
        Anchor::At(x) => x,
        Anchor::Trajectory => system.x0,
    };
    let drift = system.averaged_drift();
    let slope = drift.derivative(x_anchor);
    let (noise_scale, beta_star) = l_noise(system, x_anchor)?;
    let mut warnings = Vec::new();
    if slope >= 0.0 && anchor != Anchor::Trajectory {
        warnings.push(format!(
            "f_bar'({x_anchor}) = {slope} >= 0: the fluctuation has no stationary law"
        ));
    }
    let noise = StableParams::unit(system.alpha(), beta_star)?;
    let fluctuation_sde = ScalarSde::additive(
        format!("{} (L) fluctuation", system.name),
        Coefficient::new(move |xi| slope * xi).with_derivative(move |_| slope),
        noise_scale,
        noise,
        0.0,
    );
    Ok(LApprox {
        mean_ode: a_approx(system),
        fluctuation_sde,
        anchor: x_anchor,
        trajectory_anchor: anchor == Anchor::Trajectory,
        slope,
        noise_scale,
        beta_star,
        warnings,
        system: system.clone(),
    })
}

impl LApprox {
    /// The (L) model for the full slow variable `x = x_anchor + xi`, started at the anchor.
    pub fn stationary_sde(&self) -> ScalarSde {
        let (slope, anchor) = (self.slope, self.anchor);
        let mut sde = ScalarSde::additive(
            format!("{} (L)", self.system.name),
            Coefficient::new(move |x| slope * (x - anchor)).with_derivative(move |_| slope),
            self.noise_scale,
            self.fluctuation_sde.noise,
            anchor,
        );
        sde.marcus_map = self.fluctuation_sde.marcus_map.clone();
        sde
    }

    /// Slope, noise scale and skewness of the fluctuation when frozen at `x`.
    pub fn coefficients_at(&self, x: f64) -> Result<(f64, f64, f64)> {
        let (scale, beta) = l_noise(&self.system, x)?;
        Ok((self.system.averaged_drift().derivative(x), scale, beta))
    }
}

#[derive(Debug, Clone)]
pub struct NPlusApprox {
    pub sde: ScalarSde,
    /// `x -> eps^rho b f2(x) / (-g2(x))`.
    pub noise_coeff: Coefficient,
    pub transform: Option<TTransform>,
}

pub fn n_plus_approx(system: &FastSlowSystem) -> Result<NPlusApprox> {
    let report = system.validate(N_PROBES);
    if !report.is_valid() || !report.n_plus_eligible {
        return Err(Error::Validation(report));
    }
    let s = system.epsilon.powf(system.rho()) * system.b;
    let constant = match (system.f2.as_constant(), system.g2.as_constant()) {
        (Some(f2), Some(g2)) => Some(s * (f2 / -g2)),
        _ => None,
    };
    let noise = StableParams::unit(system.alpha(), system.beta())?;
    let label = format!("{} (N+)", system.name);
    if let Some(kappa) = constant {
        let sde = ScalarSde::additive(label, system.averaged_drift(), kappa, noise, system.x0);
        return Ok(NPlusApprox {
            noise_coeff: sde.noise_coeff.clone(),
            sde,
            transform: t_transform(system, system.x0).ok(),
        });
    }
    let (f2, g2) = (system.f2.clone(), system.g2.clone());
    let (f2d, g2d) = (system.f2.clone(), system.g2.clone());
    let mut kappa = Coefficient::new(move |x| s * (f2.eval(x) / -g2.eval(x)));
    if system.f2.has_analytic_derivative() && system.g2.has_analytic_derivative() {
        kappa = kappa.with_derivative(move |x| {
            let (f, g) = (f2d.eval(x), g2d.eval(x));
            s * (f * g2d.derivative(x) - f2d.derivative(x) * g) / (g * g)
        });
    }
    let marcus_map: Option<MarcusMapFn> = match system.kind {
        SystemKind::Bilinear { a, .. } => {
            let k = s * a;
            Some(Arc::new(move |r, dl, z| z * (k * dl * r).exp()))
        }
        SystemKind::StateDependentReversion => Some(Arc::new(move |r, dl, z| {
            let v = z + z * z.abs() / 2.0 + s * dl * r;
            if v >= 0.0 {
                (1.0 + 2.0 * v).sqrt() - 1.0
            } else {
                1.0 - (1.0 - 2.0 * v).sqrt()
            }
        })),
        _ => None,
    };
    let sde = ScalarSde {
        label,
        drift: system.averaged_drift(),
        noise_coeff: kappa.clone(),
        noise,
        interpretation: if system.b == 0.0 {
            Interpretation::Deterministic
        } else {
            Interpretation::Marcus
        },
        marcus_map,
        x0: system.x0,
    };
    Ok(NPlusApprox {
        sde,
        noise_coeff: kappa,
        transform: t_transform(system, system.x0).ok(),
    })
}

/// `T(x) = int_{x_ref}^x g2/f2`, so that `T' f2 = g2`.
#[derive(Debug, Clone)]
pub struct TTransform {
    pub x_ref: f64,
    f2: Coefficient,
    g2: Coefficient,
    f2_sign: f64,
    /// `eps^rho b`: the Marcus flow moves `T` at rate `-scale * dL`.
    scale: f64,
}

const T_TOL: f64 = 1e-10;

pub fn t_transform(system: &FastSlowSystem, x_ref: f64) -> Result<TTransform> {
    let f2_sign = system
        .f2_sign(N_PROBES)
        .ok_or_else(|| Error::InvalidArgument("f2 changes sign or vanishes on the probe domain".into()))?;
    if sgn(system.f2.eval(x_ref)) != f2_sign {
        return Err(Error::InvalidArgument(format!(
            "f2 vanishes or flips sign at x_ref = {x_ref}"
        )));
    }
    Ok(TTransform {
        x_ref,
        f2: system.f2.clone(),
        g2: system.g2.clone(),
        f2_sign,
        scale: system.epsilon.powf(system.rho()) * system.b,
    })
}

impl TTransform {
    pub fn eval(&self, x: f64) -> Result<f64> {
        if sgn(self.f2.eval(x)) != self.f2_sign {
            return Err(Error::InvalidArgument(format!("f2 vanishes between {} and {x}", self.x_ref)));
        }
        let (f2, g2) = (self.f2.clone(), self.g2.clone());
        adaptive_simpson(&move |u| g2.eval(u) / f2.eval(u), self.x_ref, x, T_TOL)
    }

    /// Solve `T(x) = v` by bracketing and bisection.
    pub fn inverse(&self, v: f64) -> Result<f64> {
        let t0 = self.eval(self.x_ref)?;
        // T is decreasing when g2/f2 < 0.
        let increasing = self.g2.eval(self.x_ref) / self.f2.eval(self.x_ref) > 0.0;
        let upward = (v > t0) == increasing;
        let mut width = 1.0;
        let mut lo = self.x_ref;
        let mut hi;
        loop {
            let candidate = if upward { self.x_ref + width } else { self.x_ref - width };
            // Stay where f2 keeps its sign, which matters near a boundary like x = 0.
            let candidate = if sgn(self.f2.eval(candidate)) != self.f2_sign {
                let mut c = candidate;
                while sgn(self.f2.eval(c)) != self.f2_sign {
                    c = 0.5 * (c + lo);
                    if (c - lo).abs() < 1e-300 {
                        break;
                    }
                }
                c
            } else {
                candidate
            };
            let tv = self.eval(candidate)?;
            if (tv - v) * (t0 - v) <= 0.0 {
                hi = candidate;
                break;
            }
            lo = candidate;
            width *= 2.0;
            if width > 1e12 {
                return Err(Error::InvalidArgument(format!("T^-1({v}) not bracketed")));
            }
        }
        let t_lo = self.eval(lo)?;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if (self.eval(mid)? - v) * (t_lo - v) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Marcus jump through the transform: `T^-1(T(z) - eps^rho b dL)`.
    pub fn marcus_jump(&self, dl: f64, z: f64) -> Result<f64> {
        self.inverse(self.eval(z)? - self.scale * dl)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn a_approx_trajectories() {
        // Exact solutions checked with a fine RK4 integration of the reduced drift.
        let lin = systems::linear(0.2, 0.7, 1.0, 0.01, 1.9, 1.5, 0.0).unwrap();
        let nl3 = systems::nonlinear3(1.0, 0.3, 0.01, 1.7).unwrap().with_initial(2.0, 0.0);
        type Case<'a> = (&'a FastSlowSystem, fn(f64) -> f64);
        let cases: [Case; 2] = [
            (&lin, |t| 1.5 * (-(0.8) * t).exp()),
            (&nl3, |t| 2.0 / (4.0 * ((2.0 * t).exp() - 1.0) + (2.0 * t).exp()).sqrt()),
        ];
        for (sys, exact) in cases {
            let sde = a_approx(sys);
            assert_eq!(sde.interpretation, Interpretation::Deterministic);
            let (mut x, h) = (sde.x0, 1e-3);
            for _ in 0..2000 {
                let k1 = sde.drift.eval(x);
                let k2 = sde.drift.eval(x + 0.5 * h * k1);
                let k3 = sde.drift.eval(x + 0.5 * h * k2);
                let k4 = sde.drift.eval(x + h * k3);
                x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
            assert!(close(x, exact(2.0), 1e-10), "{} {x} {}", sys.name, exact(2.0));
        }
        let nl1 = systems::nonlinear1(1.0, 0.1, 1.0, 0.01, 1.7, 1.0).unwrap();
        assert_eq!(a_approx(&nl1).drift.eval(1.0), 0.0);
    }

    #[test]
    fn stationary_points() {
        let nl1 = systems::nonlinear1(1.0, 0.1, 2.5, 0.01, 1.7, 0.3).unwrap();
        assert!(close(stationary_point(&nl1).unwrap(), 2.5, 1e-12));
        let nl3 = systems::nonlinear3(1.0, 0.3, 0.01, 1.7).unwrap().with_initial(3.0, 0.0);
        assert!(close(stationary_point(&nl3).unwrap(), 0.0, 1e-12));
        let mut sys = nl3.clone();
        // double well: x = 0 repels, +-1 attract
        sys.closed_form_drift = Some(Coefficient::new(|x| x - x * x * x).with_derivative(|x| 1.0 - 3.0 * x * x));
        let x = stationary_point(&sys.with_initial(0.2, 0.0)).unwrap();
        assert!(close(x, 1.0, 1e-12), "{x}");
    }

    #[test]
    fn l_approx_linear() {
        let sys = systems::linear(0.2, 0.7, 1.0, 0.01, 1.7, 0.0, 0.0)
            .unwrap()
            .with_beta(0.5)
            .unwrap();
        let l = l_approx(&sys, Anchor::Stationary).unwrap();
        assert_eq!(l.anchor, 0.0);
        assert!(close(l.slope, -0.8, 1e-15));
        assert!(close(l.noise_scale, 0.14, 1e-15));
        assert_eq!(l.beta_star, 0.5);
        let neg = systems::linear(-0.2, 0.7, 1.0, 0.01, 1.7, 0.0, 0.0)
            .unwrap()
            .with_beta(0.5)
            .unwrap();
        let l = l_approx(&neg, Anchor::Stationary).unwrap();
        assert!(close(l.slope, -1.2, 1e-15));
        assert!(close(l.noise_scale, 0.14, 1e-15));
        assert_eq!(l.beta_star, -0.5);
    }

    #[test]
    fn l_approx_nonlinear() {
        let nl2 = systems::nonlinear2(2.0, 0.01, 1.9, 0.0).unwrap();
        for x in [-1.0, 0.0, 0.5] {
            let l = l_approx(&nl2, Anchor::At(x)).unwrap();
            assert!(close(l.slope, -1.0, 1e-15));
            assert!(close(l.noise_scale, 2.0 / (1.0 + x.abs()), 1e-15));
        }
        let nl1 = systems::nonlinear1(1.0, 0.1, 1.0, 0.01, 1.7, 3.0).unwrap();
        let l = l_approx(&nl1, Anchor::Trajectory).unwrap();
        assert!(l.trajectory_anchor && l.anchor == 3.0);
        assert!(close(l.noise_scale, 0.3, 1e-15));
        let (_, scale, _) = l.coefficients_at(1.0 + 2.0 * (-1f64).exp()).unwrap();
        assert!(close(scale, 0.1 * (1.0 + 2.0 * (-1f64).exp()), 1e-15));
        assert!(l_approx(&nl1, Anchor::Stationary).unwrap().warnings.is_empty());
    }

    #[test]
    fn repelling_anchor_warns() {
        let mut sys = systems::nonlinear3(1.0, 0.3, 0.01, 1.7).unwrap();
        sys.closed_form_drift = Some(Coefficient::new(|x| x - x * x * x).with_derivative(|x| 1.0 - 3.0 * x * x));
        assert_eq!(l_approx(&sys, Anchor::At(0.0)).unwrap().warnings.len(), 1);
    }

    #[test]
    fn n_plus_forms() {
        let nl1 = systems::nonlinear1(1.0, 0.1, 1.0, 0.01, 1.7, 1.0).unwrap();
        let n = n_plus_approx(&nl1).unwrap();
        assert_eq!(n.sde.interpretation, Interpretation::Marcus);
        for x in [0.1, 1.0, 4.0] {
            assert!(close(n.noise_coeff.eval(x), 0.1 * x, 1e-15));
            assert!(close(n.sde.drift.eval(x), 1.0 - x, 1e-15));
            assert!(close(n.noise_coeff.derivative(x), 0.1, 1e-15));
        }
        n.sde.check_marcus_map(&[(0.5, 2.0, 1.0), (1.0, -30.0, 0.2)]).unwrap();

        let nl2 = systems::nonlinear2(2.0, 0.01, 1.9, 0.0).unwrap();
        let n = n_plus_approx(&nl2).unwrap();
        for x in [-2.0, -0.1, 0.0, 0.7] {
            assert!(close(n.noise_coeff.eval(x), 2.0 / (1.0 + x.abs()), 1e-15));
            let d = -2.0 * sgn(x) / (1.0 + x.abs()).powi(2);
            assert!(close(n.noise_coeff.derivative(x), d, 1e-14));
        }
        n.sde
            .check_marcus_map(&[(0.3, 1.0, 0.0), (1.0, -3.0, 0.5), (0.7, 5.0, -2.0)])
            .unwrap();

        let nl3 = systems::nonlinear3(1.0, 0.3, 0.01, 1.7).unwrap();
        let n = n_plus_approx(&nl3).unwrap();
        assert_eq!(n.sde.interpretation, Interpretation::ItoAdditive);
        assert_eq!(n.noise_coeff.as_constant(), Some(0.3));
    }

    #[test]
    fn n_plus_rejects_sign_change() {
        let mut sys = systems::nonlinear3(1.0, 0.3, 0.01, 1.7).unwrap();
        sys.f2 = Coefficient::new(|x| x);
        assert!(matches!(n_plus_approx(&sys), Err(Error::Validation(_))));
        assert!(l_approx(&sys, Anchor::Stationary).is_ok());
    }

    #[test]
    fn rho_scales_noise() {
        let sys = systems::nonlinear3(1.0, 0.3, 0.01, 2.0).unwrap().with_gamma(1.0);
        let n = n_plus_approx(&sys).unwrap();
        assert!(close(n.noise_coeff.eval(0.0), 0.3 * 0.1, 1e-15));
        let l = l_approx(&sys, Anchor::Stationary).unwrap();
        assert!(close(l.noise_scale, 0.03, 1e-15));
    }

    #[test]
    fn n_plus_matches_l_scale_at_anchor() {
        let nl2 = systems::nonlinear2(2.0, 0.01, 1.9, 0.0).unwrap();
        let n = n_plus_approx(&nl2).unwrap();
        for x in [-1.3, 0.0, 0.8] {
            let l = l_approx(&nl2, Anchor::At(x)).unwrap();
            assert_eq!(n.noise_coeff.eval(x).abs(), l.noise_scale);
        }
    }

    #[test]
    fn transforms_match_closed_forms() {
        let lin = systems::linear(0.2, 0.7, 1.0, 0.01, 1.9, 0.0, 0.0).unwrap();
        let nl1 = systems::nonlinear1(1.0, 0.1, 1.0, 0.01, 1.7, 1.0).unwrap();
        let nl2 = systems::nonlinear2(2.0, 0.01, 1.9, 0.0).unwrap();
        let t = t_transform(&lin, 0.0).unwrap();
        let t1 = t_transform(&nl1, 1.0).unwrap();
        let t2 = t_transform(&nl2, 0.0).unwrap();
        for x in [-3.0, -0.5, 0.25, 2.0] {
            assert!(close(t.eval(x).unwrap(), -x / 0.2, 1e-9));
            assert!(close(t2.eval(x).unwrap(), -(x + x * x.abs() / 2.0), 1e-9));
        }
        for x in [0.05, 0.5, 1.0, 7.0] {
            assert!(close(t1.eval(x).unwrap(), -x.ln(), 1e-9));
        }
        let grid: Vec<f64> = (0..=40).map(|i| -4.0 + 0.2 * i as f64).collect();
        let values: Vec<f64> = grid.iter().map(|&x| t2.eval(x).unwrap()).collect();
        assert!(values.windows(2).all(|w| w[1] < w[0]));
        assert!(t1.eval(-0.5).is_err());
        let bad = systems::linear(0.0, 0.7, 1.0, 0.01, 1.9, 0.0, 0.0).unwrap();
        assert!(t_transform(&bad, 0.0).is_err());
    }

    #[test]
    fn transform_reproduces_marcus_maps() {
        let nl1 = systems::nonlinear1(1.0, 0.1, 1.0, 0.01, 1.7, 1.0).unwrap();
        let nl2 = systems::nonlinear2(2.0, 0.01, 1.9, 0.0).unwrap();
        for sys in [&nl1, &nl2] {
            let n = n_plus_approx(sys).unwrap();
            let t = n.transform.as_ref().unwrap();
            for (dl, z) in [(0.7, 1.0), (-4.0, 0.3), (12.0, 2.0)] {
                let closed = n.sde.marcus_jump(dl, z).unwrap();
                let via_t = t.marcus_jump(dl, z).unwrap();
                assert!(
                    close(closed, via_t, 1e-8 * (1.0 + closed.abs())),
                    "{} {dl} {z}: {closed} {via_t}",
                    sys.name
                );
            }
        }
    }
}
