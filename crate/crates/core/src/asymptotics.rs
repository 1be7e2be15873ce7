//! Characteristic functions of the fast subsystem at a frozen slow state,
//! the small-epsilon asymptotics of their integral term, and a quadrature
//! oracle for that term.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quad::{gauss_kronrod, layer_breakpoints};
use crate::stable::{check_alpha, check_beta, sgn, xi_unchecked};

/// Fourier variables and frozen coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfContext {
    pub l: f64,
    pub m: f64,
    pub f2v: f64,
    pub g2v: f64,
    pub g1v: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
    pub y0: f64,
}

impl CfContext {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        check_beta(self.beta)?;
        if !(self.g2v < 0.0) {
            return Err(Error::InvalidArgument(format!("g2 must be negative, got {}", self.g2v)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    fn ratio(&self, kernel: Kernel) -> f64 {
        match kernel {
            Kernel::Lambda => self.f2v / self.g2v,
            Kernel::Gamma => 1.0,
        }
    }

    /// `eps^(1-gamma)`, the scale of the far-field value of the kernels.
    fn far_scale(&self) -> f64 {
        self.epsilon.powf(1.0 - self.gamma)
    }

    fn rho(&self) -> f64 {
        self.gamma - 1.0 + 1.0 / self.alpha
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    /// Characteristic curve of the (L) analysis.
    Lambda,
    /// Same with `f2/g2` replaced by 1, for the (N+) analysis.
    Gamma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `t = O(eps)`.
    TOrderEps,
    /// `t = O(1)`.
    TOrderOne,
}

/// Terms kept beyond the leading order in the `t = O(1)` regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Remainder {
    #[default]
    LeadingOnly,
    /// First boundary-layer correction, `eps^(2-gamma) q m |l|^(alpha-1) sgn(l) Xi(l) / ((alpha-1) g2)`.
    FirstCorrection,
    /// The three-term Watson remainder in its published form; kept for comparison.
    PublishedThreeTerm,
}

fn kernel_at(s: f64, ctx: &CfContext, kernel: Kernel) -> f64 {
    let e = (ctx.g2v * s / ctx.epsilon).exp();
    ctx.l * e - ctx.far_scale() * ctx.m * ctx.ratio(kernel) * (1.0 - e)
}

/// `Lambda(s) = l e^{g2 s/eps} - eps^{1-gamma} m (f2/g2)(1 - e^{g2 s/eps})`.
pub fn lambda_fn(s: f64, ctx: &CfContext) -> f64 {
    kernel_at(s, ctx, Kernel::Lambda)
}

/// `Gamma(s) = l e^{g2 s/eps} - eps^{1-gamma} m (1 - e^{g2 s/eps})`.
pub fn gamma_fn(s: f64, ctx: &CfContext) -> f64 {
    kernel_at(s, ctx, Kernel::Gamma)
}

#[inline]
fn weight(k: f64, alpha: f64, beta: f64) -> Complex64 {
    k.abs().powf(alpha) * xi_unchecked(k, alpha, beta)
}

pub const ORACLE_TOL: f64 = 1e-12;

/// `int_0^t |K(r)|^alpha Xi(K(r)) dr` by adaptive Gauss–Kronrod, split at the
/// boundary-layer width `5 eps / |g2|` and its doublings.
pub fn cf_integral_quadrature(t: f64, kernel: Kernel, ctx: &CfContext) -> Result<Complex64> {
    ctx.validate()?;
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("t must be >= 0, got {t}")));
    }
    let f = |r: f64| weight(kernel_at(r, ctx, kernel), ctx.alpha, ctx.beta);
    let width = 5.0 * ctx.epsilon / ctx.g2v.abs();
    let mut breaks = layer_breakpoints(width, t);
    // A sign change of the kernel is a kink in |K|^alpha and a jump in Xi.
    let q = ctx.far_scale() * ctx.m * ctx.ratio(kernel);
    if ctx.l != 0.0 && q != 0.0 {
        // l e + q e - q = 0  =>  e = q / (l + q)
        let e = q / (ctx.l + q);
        if e > 0.0 && e < 1.0 {
            breaks.push(ctx.epsilon / ctx.g2v * e.ln());
        }
    }
    Ok(gauss_kronrod(&f, 0.0, t, &breaks, ORACLE_TOL, 200_000)?.value)
}

/// Leading-order asymptotic value of the integral in the given regime.
pub fn cf_integral_asymptotic(t: f64, regime: Regime, kernel: Kernel, ctx: &CfContext) -> Complex64 {
    cf_integral_asymptotic_with(t, regime, kernel, ctx, Remainder::LeadingOnly)
}

pub fn cf_integral_asymptotic_with(t: f64, regime: Regime, kernel: Kernel, ctx: &CfContext, remainder: Remainder) -> Complex64 {
    let (a, eps, g2) = (ctx.alpha, ctx.epsilon, ctx.g2v);
    let layer = eps * ctx.l.abs().powf(a) / (-a * g2) * xi_unchecked(ctx.l, a, ctx.beta);
    match regime {
        Regime::TOrderEps => layer * (1.0 - (a * g2 * t / eps).exp()),
        Regime::TOrderOne => {
            let q = ctx.ratio(kernel);
            // far-field value of the kernel; Xi(-m q; beta) is Xi(m; beta*) or Xi(m; -beta)
            let far = -ctx.far_scale() * ctx.m * q;
            let global = weight(far, a, ctx.beta);
            // The layer factor 1 - e^{alpha g2 t/eps} is exponentially small at t = O(1) but
            // keeps the value exact when m = 0.
            let mut value = global * t + layer * (1.0 - (a * g2 * t / eps).exp());
            if ctx.l != 0.0 {
                let xl = xi_unchecked(ctx.l, a, ctx.beta);
                let first = eps.powf(2.0 - ctx.gamma) * q / g2 * ctx.l.abs().powf(a - 1.0) * sgn(ctx.l) * ctx.m * xl;
                match remainder {
                    Remainder::LeadingOnly => {}
                    Remainder::FirstCorrection => value += first / (a - 1.0),
                    Remainder::PublishedThreeTerm => {
                        value += first * (1.0 / a + 1.0 / (a * a));
                        value += eps.powf(3.0 - 2.0 * ctx.gamma) * q * q / g2
                            * ctx.l.abs().powf(a - 2.0)
                            * ctx.m
                            * ctx.m
                            * xl
                            * (1.0 / (a * a) - 1.0 / a);
                        value -= 3.0 * eps / (a * g2) * global;
                    }
                }
            }
            value
        }
    }
}

/// Exact joint CF of the fast variable and its slow forcing at a frozen slow state,
/// with the integral term from the quadrature oracle.
pub fn joint_cf_exact(t: f64, kernel: Kernel, ctx: &CfContext) -> Result<Complex64> {
    let integral = cf_integral_quadrature(t, kernel, ctx)?;
    let (eps, g) = (ctx.epsilon, ctx.gamma);
    let decay = 1.0 - (ctx.g2v * t / eps).exp();
    let k_t = kernel_at(t, ctx, kernel);
    let phase = match kernel {
        Kernel::Lambda => {
            (eps.powf(g) * ctx.g1v / ctx.g2v * ctx.l + eps * ctx.g1v * ctx.f2v / (ctx.g2v * ctx.g2v) * ctx.m) * decay
        }
        Kernel::Gamma => ctx.g1v / ctx.g2v * (eps.powf(g) * ctx.l + eps * ctx.m) * decay,
    };
    let damping = ctx.b.powf(ctx.alpha) / eps.powf((1.0 - g) * ctx.alpha);
    Ok((Complex64::i() * (k_t * ctx.y0 - phase) - damping * integral).exp())
}

/// Asymptotic CF of the slow forcing `v_t` of the (L) analysis for `t = O(1)`.
pub fn psi_v_cf(m: f64, t: f64, ctx: &CfContext) -> Complex64 {
    let (eps, g, a) = (ctx.epsilon, ctx.gamma, ctx.alpha);
    let q = ctx.f2v / ctx.g2v;
    let mean = eps.powf(1.0 - g) * q * ctx.y0 + eps * ctx.g1v * ctx.f2v / (ctx.g2v * ctx.g2v);
    let beta_star = ctx.beta * sgn(ctx.f2v);
    let scale = eps.powf(ctx.rho()) * ctx.b * q.abs();
    (Complex64::new(0.0, -m * mean) - scale.powf(a) * weight(m, a, beta_star) * t).exp()
}

/// Asymptotic CF of the perturbation `V_t` of the (N+) analysis for `t = O(1)`.
pub fn phi_v_cf(m: f64, t: f64, ctx: &CfContext) -> Complex64 {
    let (eps, g, a) = (ctx.epsilon, ctx.gamma, ctx.alpha);
    let mean = eps.powf(1.0 - g) * ctx.y0 + eps * ctx.g1v / ctx.g2v;
    let scale = eps.powf(ctx.rho()) * ctx.b;
    (Complex64::new(0.0, -m * mean) - scale.powf(a) * weight(m, a, -ctx.beta) * t).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(l: f64, m: f64, eps: f64) -> CfContext {
        let alpha = 1.7;
        CfContext {
            l,
            m,
            f2v: 1.5,
            g2v: -1.3,
            g1v: 0.4,
            epsilon: eps,
            gamma: 1.0 - 1.0 / alpha,
            b: 0.7,
            alpha,
            beta: 0.3,
            y0: 0.2,
        }
    }

    fn rel(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn kernel_limits() {
        let c = ctx(1.2, -0.8, 0.01);
        assert_eq!(lambda_fn(0.0, &c), 1.2);
        assert_eq!(gamma_fn(0.0, &c), 1.2);
        let far = -c.epsilon.powf(1.0 - c.gamma) * c.m;
        assert!((lambda_fn(50.0, &c) - far * c.f2v / c.g2v).abs() < 1e-15);
        assert!((gamma_fn(50.0, &c) - far).abs() < 1e-15);
        let c0 = ctx(1.2, 0.0, 0.01);
        assert!((lambda_fn(0.02, &c0) - 1.2 * (-1.3f64 * 2.0).exp()).abs() < 1e-15);
        let mut same = c;
        same.f2v = same.g2v;
        for s in [0.0, 0.003, 0.5] {
            assert_eq!(lambda_fn(s, &same), gamma_fn(s, &same));
        }
    }

    #[test]
    fn exact_at_m_zero() {
        for eps in [1e-1, 1e-3] {
            let c = ctx(-0.9, 0.0, eps);
            for t in [0.5 * eps, 1.0] {
                let q = cf_integral_quadrature(t, Kernel::Lambda, &c).unwrap();
                for regime in [Regime::TOrderEps, Regime::TOrderOne] {
                    let a = cf_integral_asymptotic(t, regime, Kernel::Lambda, &c);
                    if regime == Regime::TOrderOne && t < 1.0 {
                        continue;
                    }
                    assert!((a - q).norm() < 1e-10, "{eps} {t} {regime:?}: {a} {q}");
                }
            }
        }
        let c = ctx(0.7, 0.3, 0.01);
        assert_eq!(
            cf_integral_quadrature(0.0, Kernel::Gamma, &c).unwrap(),
            Complex64::new(0.0, 0.0)
        );
    }

    #[test]
    fn regression_fixture() {
        // mpmath reference at 30 digits
        let q = cf_integral_quadrature(1.0, Kernel::Lambda, &ctx(1.2, -0.8, 1e-3)).unwrap();
        assert!((q.re - FIXTURE.0).abs() < 1e-13 && (q.im - FIXTURE.1).abs() < 1e-13, "{q}");
    }

    const FIXTURE: (f64, f64) = (1.468_031_469_848_441_5e-3, 4.124_957_330_004_346e-5);

    #[test]
    fn leading_term_converges_at_rate_one_over_alpha() {
        let errs: Vec<f64> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&eps| {
                let c = ctx(1.2, -0.8, eps);
                let q = cf_integral_quadrature(1.0, Kernel::Lambda, &c).unwrap();
                rel(cf_integral_asymptotic(1.0, Regime::TOrderOne, Kernel::Lambda, &c), q)
            })
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log10();
            assert!((order - 1.0 / 1.7).abs() < 0.1, "{errs:?}");
        }
    }

    #[test]
    fn first_correction_improves_order() {
        for eps in [1e-2, 1e-3] {
            let c = ctx(1.2, -0.8, eps);
            let q = cf_integral_quadrature(1.0, Kernel::Lambda, &c).unwrap();
            let lead = rel(cf_integral_asymptotic(1.0, Regime::TOrderOne, Kernel::Lambda, &c), q);
            let corr = rel(
                cf_integral_asymptotic_with(1.0, Regime::TOrderOne, Kernel::Lambda, &c, Remainder::FirstCorrection),
                q,
            );
            let published = rel(
                cf_integral_asymptotic_with(1.0, Regime::TOrderOne, Kernel::Lambda, &c, Remainder::PublishedThreeTerm),
                q,
            );
            assert!(corr < published && published < lead, "{eps}: {lead} {corr} {published}");
        }
    }

    #[test]
    fn short_time_regime() {
        for eps in [1e-2, 1e-3] {
            let c = ctx(1.2, -0.8, eps);
            let q = cf_integral_quadrature(eps, Kernel::Gamma, &c).unwrap();
            let a = cf_integral_asymptotic(eps, Regime::TOrderEps, Kernel::Gamma, &c);
            let bound = 3.0 * eps.powf(2.0 - c.gamma);
            assert!((a - q).norm() < bound, "{eps}: {} vs {bound}", (a - q).norm());
        }
    }

    #[test]
    fn gamma_kernel_uses_flipped_skewness() {
        let c = ctx(0.0, 0.9, 1e-3);
        let a = cf_integral_asymptotic(1.0, Regime::TOrderOne, Kernel::Gamma, &c);
        let expect = c.epsilon.powf((1.0 - c.gamma) * c.alpha) * 0.9f64.powf(c.alpha) * xi_unchecked(0.9, c.alpha, -c.beta);
        assert!((a - expect).norm() < 1e-15);
        let q = cf_integral_quadrature(1.0, Kernel::Gamma, &c).unwrap();
        assert!(rel(a, q) < 1e-2);
    }

    #[test]
    fn v_cfs() {
        let c = ctx(0.0, 0.0, 0.01);
        assert_eq!(psi_v_cf(0.0, 1.0, &c), Complex64::new(1.0, 0.0));
        assert_eq!(phi_v_cf(0.0, 1.0, &c), Complex64::new(1.0, 0.0));
        for m in [-2.0f64, 0.5, 3.0] {
            let scale = c.b * (c.f2v / c.g2v).abs();
            let modulus = (-(scale * m.abs()).powf(c.alpha) * 2.0).exp();
            assert!((psi_v_cf(m, 2.0, &c).norm() - modulus).abs() < 1e-14);
            assert!(psi_v_cf(m, 2.0, &c).norm() <= 1.0);
        }
        let mut sym = c;
        sym.beta = 0.0;
        sym.f2v = sym.g2v;
        for m in [-1.5, 0.25, 2.0] {
            // equal up to the g1 f2/g2^2 vs g1/g2 mean terms, which coincide when f2 = g2
            assert!((phi_v_cf(m, 1.0, &sym) - psi_v_cf(m, 1.0, &sym)).norm() < 1e-14);
        }
    }

    #[test]
    fn joint_cf_is_a_cf() {
        let c = ctx(0.0, 0.0, 0.01);
        assert!((joint_cf_exact(1.0, Kernel::Lambda, &c).unwrap() - 1.0).norm() < 1e-15);
        for (l, m) in [(1.0, -2.0), (-0.3, 0.4)] {
            let c = ctx(l, m, 0.01);
            assert!(joint_cf_exact(1.0, Kernel::Lambda, &c).unwrap().norm() <= 1.0);
            assert!(joint_cf_exact(1.0, Kernel::Gamma, &c).unwrap().norm() <= 1.0);
        }
    }

    #[test]
    fn rejects_bad_context() {
        let mut c = ctx(1.0, 1.0, 0.01);
        c.g2v = 0.5;
        assert!(cf_integral_quadrature(1.0, Kernel::Lambda, &c).is_err());
        let mut c = ctx(1.0, 1.0, 0.01);
        c.alpha = 1.0;
        assert!(cf_integral_quadrature(1.0, Kernel::Lambda, &c).is_err());
    }
}
