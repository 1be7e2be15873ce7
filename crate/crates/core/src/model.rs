//! Fast-slow systems and the scalar SDEs produced by reduction.
//!
//! The full system is
//!
//! ```text
//! dx = (f1(x) + eps^-gamma f2(x) y) dt
//! eps dy = (eps^gamma g1(x) + g2(x) y) dt + eps^gamma b dL
//! ```

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::stable::{sgn, StableParams};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Marcus map `theta(r; dL, z)`: the flow of `d theta / dr = dL * kappa(theta)` from `z`.
pub type MarcusMapFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Central-difference step used when no analytic derivative is attached.
pub fn fd_step(x: f64) -> f64 {
    f64::max(1e-6, 1e-6 * x.abs())
}

pub fn central_difference(f: &dyn Fn(f64) -> f64, x: f64) -> f64 {
    let h = fd_step(x);
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// A scalar coefficient function with an optional analytic derivative.
#[derive(Clone)]
pub struct Coefficient {
    value: ScalarFn,
    derivative: Option<ScalarFn>,
    constant: Option<f64>,
}

impl Coefficient {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            value: Arc::new(f),
            derivative: None,
            constant: None,
        }
    }

    pub fn with_derivative(mut self, df: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.derivative = Some(Arc::new(df));
        self
    }

    pub fn constant(c: f64) -> Self {
        Self {
            value: Arc::new(move |_| c),
            derivative: Some(Arc::new(|_| 0.0)),
            constant: Some(c),
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.value)(x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match &self.derivative {
            Some(df) => df(x),
            None => central_difference(&*self.value, x),
        }
    }

    pub fn has_analytic_derivative(&self) -> bool {
        self.derivative.is_some()
    }

    /// Value when the coefficient is known to be constant.
    pub fn as_constant(&self) -> Option<f64> {
        self.constant
    }

    pub fn function(&self) -> &ScalarFn {
        &self.value
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.constant {
            Some(c) => write!(f, "Coefficient(const {c})"),
            None => write!(f, "Coefficient(fn)"),
        }
    }
}

/// Built-in systems with closed forms used by reduction and reporting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SystemKind {
    /// `f1 = -x, f2 = a, g1 = c x, g2 = -1`.
    Linear {
        a: f64,
        c: f64,
    },
    /// `f1 = c - x, f2 = x, g1 = 0, g2 = -1/a` on `x > 0`.
    Bilinear {
        a: f64,
        c: f64,
    },
    /// `f1 = -x, f2 = 1, g1 = 0, g2 = -(1 + |x|)`.
    StateDependentReversion,
    /// `f1 = -x - x^3, f2 = 1, g1 = 0, g2 = -1/a`.
    Cubic {
        a: f64,
    },
    Custom,
}

#[derive(Debug, Clone)]
pub struct FastSlowSystem {
    pub name: String,
    pub kind: SystemKind,
    pub f1: Coefficient,
    pub f2: Coefficient,
    pub g1: Coefficient,
    pub g2: Coefficient,
    pub epsilon: f64,
    pub gamma: f64,
    pub b: f64,
    /// Unit-scale driving noise; only alpha and beta are meaningful.
    pub noise: StableParams,
    pub x0: f64,
    pub y0: f64,
    /// Interval on which the sign conditions are probed.
    pub domain: (f64, f64),
    /// Closed form of the averaged drift, when known.
    pub closed_form_drift: Option<Coefficient>,
}

impl FastSlowSystem {
    pub fn alpha(&self) -> f64 {
        self.noise.alpha()
    }

    pub fn beta(&self) -> f64 {
        self.noise.beta()
    }

    pub fn rho(&self) -> f64 {
        rho(self.gamma, self.alpha())
    }

    /// Averaged drift `f1 - f2 g1 / g2`.
    pub fn f_bar(&self, x: f64) -> Result<f64> {
        let g2 = self.g2.eval(x);
        if g2 == 0.0 || !g2.is_finite() {
            return Err(Error::InvalidArgument(format!("g2({x}) = {g2}; averaged drift undefined")));
        }
        Ok(self.f1.eval(x) - self.f2.eval(x) * self.g1.eval(x) / g2)
    }

    /// Derivative of the averaged drift, analytic where all pieces allow it.
    pub fn f_bar_derivative(&self, x: f64) -> f64 {
        let analytic = [&self.f1, &self.f2, &self.g1, &self.g2]
            .iter()
            .all(|c| c.has_analytic_derivative());
        if analytic {
            let (f2, g1, g2) = (self.f2.eval(x), self.g1.eval(x), self.g2.eval(x));
            let (df2, dg1, dg2) = (self.f2.derivative(x), self.g1.derivative(x), self.g2.derivative(x));
            self.f1.derivative(x) - (df2 * g1 + f2 * dg1) / g2 + f2 * g1 * dg2 / (g2 * g2)
        } else {
            central_difference(&|z| self.f_bar(z).unwrap_or(f64::NAN), x)
        }
    }

    /// The averaged drift as a coefficient: the attached closed form if any,
    /// otherwise the generic formula with its derivative.
    pub fn averaged_drift(&self) -> Coefficient {
        if let Some(c) = &self.closed_form_drift {
            return c.clone();
        }
        let (a, b) = (self.clone(), self.clone());
        Coefficient::new(move |x| a.f_bar(x).unwrap_or(f64::NAN)).with_derivative(move |x| b.f_bar_derivative(x))
    }

    /// Sign of `f2` on the probe domain, if it is constant and nonzero.
    pub fn f2_sign(&self, n_probes: usize) -> Option<f64> {
        let grid = probe_grid(self.domain, n_probes.max(2));
        let first = sgn(self.f2.eval(grid[0]));
        if first == 0.0 {
            return None;
        }
        grid.iter().all(|&x| sgn(self.f2.eval(x)) == first).then_some(first)
    }

    pub fn validate(&self, n_probes: usize) -> ValidationReport {
        validate(self, self.domain, n_probes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpretation {
    Deterministic,
    ItoAdditive,
    Marcus,
}

impl Interpretation {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Deterministic => "deterministic",
            Self::ItoAdditive => "additive Ito",
            Self::Marcus => "Marcus",
        }
    }
}

/// `dz = H(z) dt + kappa(z) dL` under the given interpretation.
#[derive(Clone)]
pub struct ScalarSde {
    pub label: String,
    pub drift: Coefficient,
    pub noise_coeff: Coefficient,
    /// Unit-scale driving noise.
    pub noise: StableParams,
    pub interpretation: Interpretation,
    pub marcus_map: Option<MarcusMapFn>,
    pub x0: f64,
}

impl fmt::Debug for ScalarSde {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarSde")
            .field("label", &self.label)
            .field("noise", &self.noise)
            .field("interpretation", &self.interpretation)
            .field("marcus_map", &self.marcus_map.is_some())
            .field("x0", &self.x0)
            .finish()
    }
}

impl ScalarSde {
    pub fn deterministic(label: impl Into<String>, drift: Coefficient, x0: f64) -> Self {
        Self {
            label: label.into(),
            drift,
            noise_coeff: Coefficient::constant(0.0),
            noise: StableParams::unit(2.0, 0.0).expect("valid"),
            interpretation: Interpretation::Deterministic,
            marcus_map: None,
            x0,
        }
    }

    pub fn additive(label: impl Into<String>, drift: Coefficient, kappa: f64, noise: StableParams, x0: f64) -> Self {
        let interpretation = if kappa == 0.0 {
            Interpretation::Deterministic
        } else {
            Interpretation::ItoAdditive
        };
        Self {
            label: label.into(),
            drift,
            noise_coeff: Coefficient::constant(kappa),
            noise,
            interpretation,
            marcus_map: Some(Arc::new(move |r, dl, z| z + kappa * dl * r)),
            x0,
        }
    }

    /// `theta(1; dL, z)` from the attached closed-form map.
    pub fn marcus_jump(&self, dl: f64, z: f64) -> Option<f64> {
        self.marcus_map.as_ref().map(|m| m(1.0, dl, z))
    }

    /// Finite-difference spot check of `theta(0) = z` and `d theta/dr = dL kappa(theta)`.
    pub fn check_marcus_map(&self, points: &[(f64, f64, f64)]) -> Result<()> {
        let Some(map) = &self.marcus_map else {
            return Err(Error::MissingMarcusMap);
        };
        for &(r, dl, z) in points {
            let at0 = map(0.0, dl, z);
            if (at0 - z).abs() > 1e-12 * (1.0 + z.abs()) {
                return Err(Error::InvalidArgument(format!("theta(0; {dl}, {z}) = {at0} != {z}")));
            }
            let h = 1e-6;
            let slope = (map(r + h, dl, z) - map(r - h, dl, z)) / (2.0 * h);
            let expect = dl * self.noise_coeff.eval(map(r, dl, z));
            if (slope - expect).abs() > 1e-5 * (1.0 + expect.abs()) {
                return Err(Error::InvalidArgument(format!(
                    "d theta/dr at r={r}, dL={dl}, z={z}: {slope} vs {expect}"
                )));
            }
        }
        Ok(())
    }
}

/// Noise-scaling exponent `gamma - 1 + 1/alpha`.
pub fn rho(gamma: f64, alpha: f64) -> f64 {
    gamma - 1.0 + 1.0 / alpha
}

/// Exponent giving `rho = 0`.
pub fn critical_gamma(alpha: f64) -> f64 {
    1.0 - 1.0 / alpha
}

/// Skewness of the reduced noise, `beta sgn(f2)`.
pub fn beta_star(beta: f64, f2_sign: f64) -> Result<f64> {
    if f2_sign == 0.0 || !f2_sign.is_finite() {
        return Err(Error::InvalidArgument("f2 sign must be -1 or +1".into()));
    }
    Ok(beta * f2_sign.signum())
}

pub fn f_bar(system: &FastSlowSystem, x: f64) -> Result<f64> {
    system.f_bar(x)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// `g2(x) >= 0`: fast dynamics not contracting.
    FastNotContracting {
        x: f64,
        g2: f64,
    },
    /// `f2(x) = 0` or a sign change; only blocks the (N+) reduction.
    F2SignCondition {
        x: f64,
        f2: f64,
    },
    NonFinite {
        x: f64,
        which: &'static str,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub domain: (f64, f64),
    pub n_probes: usize,
    pub violations: Vec<Violation>,
    pub n_plus_eligible: bool,
}

impl ValidationReport {
    /// True when the (A) and (L) reductions are defined.
    pub fn is_valid(&self) -> bool {
        !self
            .violations
            .iter()
            .any(|v| !matches!(v, Violation::F2SignCondition { .. }))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "probed {} points on [{}, {}]: {}, N+ {}",
            self.n_probes,
            self.domain.0,
            self.domain.1,
            if self.is_valid() { "valid" } else { "INVALID" },
            if self.n_plus_eligible { "eligible" } else { "not eligible" }
        )?;
        for v in self.violations.iter().take(10) {
            match v {
                Violation::FastNotContracting { x, g2 } => writeln!(f, "  g2({x}) = {g2} >= 0")?,
                Violation::F2SignCondition { x, f2 } => writeln!(f, "  f2({x}) = {f2} breaks the constant-sign condition")?,
                Violation::NonFinite { x, which } => writeln!(f, "  {which}({x}) is not finite")?,
            }
        }
        if self.violations.len() > 10 {
            writeln!(f, "  ... {} more", self.violations.len() - 10)?;
        }
        Ok(())
    }
}

fn probe_grid(domain: (f64, f64), n: usize) -> Vec<f64> {
    let (lo, hi) = domain;
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Probe the sign conditions on a uniform grid of `n_probes` points.
pub fn validate(system: &FastSlowSystem, domain: (f64, f64), n_probes: usize) -> ValidationReport {
    let n_probes = n_probes.max(2);
    let mut violations = Vec::new();
    let grid = probe_grid(domain, n_probes);
    let mut f2_sign = None;
    let mut eligible = true;
    for &x in &grid {
        let (g2, f2) = (system.g2.eval(x), system.f2.eval(x));
        for (which, v) in [("f1", system.f1.eval(x)), ("f2", f2), ("g1", system.g1.eval(x)), ("g2", g2)] {
            if !v.is_finite() {
                violations.push(Violation::NonFinite { x, which });
            }
        }
        if g2.is_finite() && g2 >= 0.0 {
            violations.push(Violation::FastNotContracting { x, g2 });
        }
        let s = sgn(f2);
        let breaks = match f2_sign {
            _ if s == 0.0 || !f2.is_finite() => true,
            None => {
                f2_sign = Some(s);
                false
            }
            Some(prev) => prev != s,
        };
        if breaks {
            eligible = false;
            violations.push(Violation::F2SignCondition { x, f2 });
        }
    }
    ValidationReport {
        domain,
        n_probes,
        n_plus_eligible: eligible && violations.is_empty(),
        violations,
    }
}

#[derive(Clone, Debug)]
struct ExprOps;

impl exmex::MakeOperators<f64> for ExprOps {
    fn make<'a>() -> Vec<exmex::Operator<'a, f64>> {
        let mut ops = exmex::FloatOpsFactory::<f64>::make();
        ops.push(exmex::Operator::make_unary("sgn", sgn));
        ops.push(exmex::Operator::make_constant("pi", std::f64::consts::PI));
        ops
    }
}

type Expr = exmex::FlatEx<f64, ExprOps>;

/// Parse an expression in `x` (e.g. `-x - x^3`, `-(1 + abs(x))`).
pub fn parse_expression(src: &str) -> Result<Coefficient> {
    use exmex::Express;
    let err = |reason: String| Error::Expression {
        expr: src.to_string(),
        reason,
    };
    let expr = Expr::parse(src).map_err(|e| err(e.to_string()))?;
    match expr.var_names() {
        [] => {
            let c = expr.eval(&[]).map_err(|e| err(e.to_string()))?;
            return Ok(Coefficient::constant(c));
        }
        [v] if v == "x" => {}
        names => {
            return Err(err(format!("unknown names {names:?}; the only variable is x")));
        }
    }
    expr.eval(&[0.5]).map_err(|e| err(e.to_string()))?;
    Ok(Coefficient::new(move |x| expr.eval(&[x]).unwrap_or(f64::NAN)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems;

    #[test]
    fn rho_values() {
        for alpha in [1.2, 1.5, 1.9, 2.0] {
            assert!(rho(critical_gamma(alpha), alpha).abs() < 1e-15);
        }
        assert_eq!(rho(1.0, 2.0), 0.5);
        assert!((rho(0.0, 1.5) + 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn beta_star_values() {
        assert_eq!(beta_star(0.5, 1.0).unwrap(), 0.5);
        assert_eq!(beta_star(0.5, -1.0).unwrap(), -0.5);
        assert_eq!(beta_star(0.0, -1.0).unwrap(), 0.0);
        assert!(beta_star(0.5, 0.0).is_err());
    }

    #[test]
    fn builtin_systems_validate() {
        let lin = systems::linear(0.2, 0.7, 1.0, 0.01, 1.9, 0.0, 0.0).unwrap();
        let r = validate(&lin, (-10.0, 10.0), 201);
        assert!(r.is_valid() && r.n_plus_eligible, "{r}");

        let nl2 = systems::nonlinear2(2.0, 0.01, 1.9, 0.0).unwrap();
        assert!(nl2.validate(201).is_valid());
        assert!(nl2.validate(201).n_plus_eligible);

        let nl1 = systems::nonlinear1(1.0, 0.1, 1.0, 0.01, 1.7, 1.0).unwrap();
        let r = nl1.validate(201);
        assert!(r.n_plus_eligible, "{r}");
        // across x = 0 the bilinear coupling changes sign
        let r = validate(&nl1, (-1.0, 1.0), 21);
        assert!(r.is_valid() && !r.n_plus_eligible);
    }

    #[test]
    fn positive_g2_is_reported_everywhere() {
        let mut sys = systems::linear(0.2, 0.7, 1.0, 0.01, 1.9, 0.0, 0.0).unwrap();
        sys.g2 = Coefficient::constant(1.0);
        let before = format!("{:?}", sys.kind);
        let r = validate(&sys, (-10.0, 10.0), 50);
        assert!(!r.is_valid());
        let count = r
            .violations
            .iter()
            .filter(|v| matches!(v, Violation::FastNotContracting { .. }))
            .count();
        assert_eq!(count, 50);
        assert_eq!(before, format!("{:?}", sys.kind));
    }

    #[test]
    fn f_bar_closed_forms() {
        let lin = systems::linear(0.2, 0.7, 1.0, 0.01, 1.9, 0.0, 0.0).unwrap();
        let nl1 = systems::nonlinear1(1.0, 0.1, 1.3, 0.01, 1.7, 1.0).unwrap();
        for x in [-3.0, -0.5, 0.0, 0.7, 4.0] {
            assert!((lin.f_bar(x).unwrap() + (1.0 - 0.2) * x).abs() < 1e-14);
            assert!((nl1.f_bar(x).unwrap() - (1.3 - x)).abs() < 1e-14);
        }
        let mut sys = lin.clone();
        sys.g1 = Coefficient::constant(0.0);
        assert_eq!(sys.f_bar(2.0).unwrap(), sys.f1.eval(2.0));
        sys.g2 = Coefficient::constant(0.0);
        assert!(sys.f_bar(1.0).is_err());
    }

    #[test]
    fn f_bar_derivative_matches_fd() {
        let nl3 = systems::nonlinear3(1.0, 0.3, 0.01, 1.7).unwrap();
        for x in [-2.0, 0.0, 1.5] {
            assert!((nl3.f_bar_derivative(x) - (-1.0 - 3.0 * x * x)).abs() < 1e-12);
        }
        let mut custom = nl3.clone();
        custom.f1 = parse_expression("-x - x^3").unwrap();
        for x in [-2.0, 0.0, 1.5] {
            assert!((custom.f_bar_derivative(x) - (-1.0 - 3.0 * x * x)).abs() < 1e-6);
        }
    }

    #[test]
    fn expressions() {
        let c = parse_expression("-(1 + abs(x))").unwrap();
        assert_eq!(c.eval(-2.0), -3.0);
        assert_eq!(parse_expression("0.2").unwrap().as_constant(), Some(0.2));
        assert_eq!(
            parse_expression("2*pi").unwrap().as_constant(),
            Some(2.0 * std::f64::consts::PI)
        );
        let s = parse_expression("sgn(x)").unwrap();
        assert_eq!((s.eval(-3.0), s.eval(0.0), s.eval(2.0)), (-1.0, 0.0, 1.0));
        assert!(parse_expression("-x + y").is_err());
        assert!(parse_expression("foo(x)").is_err());
        assert!(parse_expression("x +").is_err());
        assert!((parse_expression("exp(x)/sqrt(x)").unwrap().eval(4.0) - 4f64.exp() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn marcus_map_check() {
        let sde = ScalarSde::additive(
            "c",
            Coefficient::constant(0.0),
            0.3,
            StableParams::unit(1.7, 0.0).unwrap(),
            0.0,
        );
        sde.check_marcus_map(&[(0.3, 1.0, 2.0), (0.9, -4.0, 0.0)]).unwrap();
        let mut bad = sde.clone();
        bad.marcus_map = Some(Arc::new(|r, dl, z| z + 2.0 * dl * r));
        assert!(bad.check_marcus_map(&[(0.5, 1.0, 0.0)]).is_err());
    }
}
