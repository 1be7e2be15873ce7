//! Glue shared by the command-line tool and the end-to-end tests: building
//! systems from named parameters, running a chosen model with per-system
//! defaults, and comparing two runs.

use std::fmt;

use num_complex::Complex64;

use crate::asymptotics::{cf_integral_asymptotic_with, cf_integral_quadrature, CfContext, Kernel, Regime, Remainder};
use crate::error::{Error, Result};
use crate::integrate::{simulate_full, simulate_l_trajectory, simulate_sde, Execution, SampleSeries, Scheme, SimConfig};
use crate::model::{critical_gamma, parse_expression, FastSlowSystem, SystemKind};
use crate::reduction::{a_approx, l_approx, n_plus_approx, Anchor};
use crate::rng::stream;
use crate::stable::{StableParams, StableSampler};
use crate::stats::{autocodifference, empirical_cf, histogram_pdf, ks_subsampled, mode_count};
use crate::systems::{self, parameter_defaults, run_defaults};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemName {
    Linear,
    Nonlinear1,
    Nonlinear2,
    Nonlinear3,
    Custom,
}

impl SystemName {
    pub const ALL: [SystemName; 5] = [
        Self::Linear,
        Self::Nonlinear1,
        Self::Nonlinear2,
        Self::Nonlinear3,
        Self::Custom,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Nonlinear1 => "nonlinear1",
            Self::Nonlinear2 => "nonlinear2",
            Self::Nonlinear3 => "nonlinear3",
            Self::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|n| n.name() == s)
    }
}

impl fmt::Display for SystemName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Coefficient expressions in `x` for a custom system.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CustomCoefficients {
    pub f1: String,
    pub f2: String,
    pub g1: String,
    pub g2: String,
}

/// Named parameters of a system. Unset values take the built-in defaults.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SystemParams {
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub c: Option<f64>,
    pub epsilon: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub x0: Option<f64>,
    pub y0: Option<f64>,
    /// Overrides `1 - 1/alpha`.
    pub gamma: Option<f64>,
    pub custom: Option<CustomCoefficients>,
}

pub fn build_system(name: SystemName, p: &SystemParams) -> Result<FastSlowSystem> {
    let d = parameter_defaults(name.name()).unwrap_or(systems::Defaults {
        a: 1.0,
        b: 1.0,
        c: 0.0,
        epsilon: 0.01,
        alpha: 1.9,
        x0: 0.0,
    });
    let (a, b, c) = (p.a.unwrap_or(d.a), p.b.unwrap_or(d.b), p.c.unwrap_or(d.c));
    let (eps, alpha, x0) = (
        p.epsilon.unwrap_or(d.epsilon),
        p.alpha.unwrap_or(d.alpha),
        p.x0.unwrap_or(d.x0),
    );
    let y0 = p.y0.unwrap_or(0.0);
    let sys = match name {
        SystemName::Linear => systems::linear(a, b, c, eps, alpha, x0, y0)?,
        SystemName::Nonlinear1 => systems::nonlinear1(a, b, c, eps, alpha, x0)?,
        SystemName::Nonlinear2 => systems::nonlinear2(b, eps, alpha, x0)?,
        SystemName::Nonlinear3 => systems::nonlinear3(a, b, eps, alpha)?,
        SystemName::Custom => {
            let cc = p
                .custom
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("custom system needs f1, f2, g1 and g2 expressions".into()))?;
            if !(eps > 0.0) {
                return Err(Error::InvalidArgument(format!("epsilon must be positive, got {eps}")));
            }
            FastSlowSystem {
                name: "custom".into(),
                kind: SystemKind::Custom,
                f1: parse_expression(&cc.f1)?,
                f2: parse_expression(&cc.f2)?,
                g1: parse_expression(&cc.g1)?,
                g2: parse_expression(&cc.g2)?,
                epsilon: eps,
                gamma: critical_gamma(alpha),
                b,
                noise: StableParams::unit(alpha, 0.0)?,
                x0,
                y0,
                domain: (-10.0, 10.0),
                closed_form_drift: None,
            }
        }
    };
    let sys = sys.with_initial(x0, y0).with_beta(p.beta.unwrap_or(0.0))?;
    Ok(match p.gamma {
        Some(g) => sys.with_gamma(g),
        None => sys,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Full,
    Averaged,
    Linearized,
    NPlus,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::Averaged => "a",
            Self::Linearized => "l",
            Self::NPlus => "nplus",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Some(Self::Full),
            "a" | "averaged" => Some(Self::Averaged),
            "l" | "linear" | "linearized" => Some(Self::Linearized),
            "nplus" | "n+" => Some(Self::NPlus),
            _ => None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Step size and scheme for `model` on `system` from the per-system defaults.
pub fn default_step(system: &FastSlowSystem, model: ModelKind) -> (f64, Scheme) {
    let d = run_defaults(system.kind);
    match model {
        ModelKind::Full => (d.full_dt, d.full_scheme),
        ModelKind::NPlus => (d.reduced_dt, d.nplus_scheme),
        ModelKind::Averaged | ModelKind::Linearized => (d.reduced_dt, Scheme::Euler),
    }
}

/// Run configuration with the per-system step size and scheme.
pub fn default_config(system: &FastSlowSystem, model: ModelKind, n_samples: usize, seed: u64) -> SimConfig {
    let (dt, scheme) = default_step(system, model);
    SimConfig::new(dt, systems::SAMPLE_DT, n_samples, seed, scheme)
}

/// Run one model of `system`; `anchor` only matters for the (L) model.
pub fn run_model(system: &FastSlowSystem, model: ModelKind, anchor: Anchor, cfg: &SimConfig) -> Result<SampleSeries> {
    match model {
        ModelKind::Full => simulate_full(system, cfg),
        ModelKind::Averaged => simulate_sde(&a_approx(system), cfg),
        ModelKind::Linearized => {
            let l = l_approx(system, anchor)?;
            if l.trajectory_anchor {
                simulate_l_trajectory(&l, cfg)
            } else {
                simulate_sde(&l.stationary_sde(), cfg)
            }
        }
        ModelKind::NPlus => simulate_sde(&n_plus_approx(system)?.sde, cfg),
    }
}

/// Pass/fail limits for [`compare`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub ks: f64,
    /// Maximum AF distance over the compared lags; `None` reports without judging.
    pub af: Option<f64>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { ks: 0.02, af: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOptions {
    pub stride: usize,
    pub n_bins: usize,
    /// Histogram range; the pooled 0.5% and 99.5% quantiles when `None`.
    pub range: Option<(f64, f64)>,
    pub smoothing: usize,
    pub min_mode_height: f64,
    pub af_max_lag: f64,
    pub thresholds: Thresholds,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            stride: crate::stats::DEFAULT_STRIDE,
            n_bins: 80,
            range: None,
            smoothing: 5,
            min_mode_height: 0.05,
            af_max_lag: 4.0,
            thresholds: Thresholds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub ks: f64,
    pub af_sup: Option<f64>,
    pub modes: (usize, usize),
    pub nonpositive: (usize, usize),
    pub range: (f64, f64),
    pub pass: bool,
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ks_distance = {:.5}", self.ks)?;
        match self.af_sup {
            Some(d) => writeln!(f, "af_sup_distance = {d:.5}")?,
            None => writeln!(f, "af_sup_distance = n/a (series too short)")?,
        }
        writeln!(f, "modes = {} vs {}", self.modes.0, self.modes.1)?;
        writeln!(f, "samples <= 0 = {} vs {}", self.nonpositive.0, self.nonpositive.1)?;
        write!(f, "result = {}", if self.pass { "pass" } else { "fail" })
    }
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let i = ((sorted.len() - 1) as f64 * p).round() as usize;
    sorted[i]
}

/// KS distance on stride subsamples, AF sup-distance, mode counts and sign counts.
pub fn compare(a: &SampleSeries, b: &SampleSeries, opts: &CompareOptions) -> Result<Comparison> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    if (a.sample_dt - b.sample_dt).abs() > 1e-12 * a.sample_dt {
        return Err(Error::InvalidArgument(format!(
            "incompatible sampling grids: Dt = {} vs {}",
            a.sample_dt, b.sample_dt
        )));
    }
    let ks = ks_subsampled(&a.values, &b.values, opts.stride)?;
    let range = match opts.range {
        Some(r) => r,
        None => {
            let mut pooled: Vec<f64> = a.values.iter().chain(&b.values).copied().collect();
            pooled.sort_by(f64::total_cmp);
            (quantile(&pooled, 0.005), quantile(&pooled, 0.995))
        }
    };
    let modes_of = |s: &SampleSeries| -> Result<usize> {
        let d = histogram_pdf(&s.values, opts.n_bins, range)?;
        Ok(mode_count(&d.densities, opts.smoothing, opts.min_mode_height))
    };
    let lag_steps = (opts.af_max_lag / a.sample_dt).round() as usize;
    let af_sup = if lag_steps <= a.len().min(b.len()) / 100 {
        let (fa, fb) = (
            autocodifference(&a.values, a.sample_dt, lag_steps)?,
            autocodifference(&b.values, b.sample_dt, lag_steps)?,
        );
        Some(
            fa.values
                .iter()
                .zip(&fb.values)
                .map(|(x, y)| (x - y).norm())
                .fold(0.0, f64::max),
        )
    } else {
        None
    };
    let nonpositive = |s: &SampleSeries| s.values.iter().filter(|&&v| v <= 0.0).count();
    let pass = ks < opts.thresholds.ks && opts.thresholds.af.is_none_or(|t| af_sup.is_some_and(|d| d < t));
    Ok(Comparison {
        ks,
        af_sup,
        modes: (modes_of(a)?, modes_of(b)?),
        nonpositive: (nonpositive(a), nonpositive(b)),
        range,
        pass,
    })
}

/// `n` stable increments over a step `dt`, drawn in `chunks` independent streams.
pub fn sample_increments(
    alpha: f64,
    beta: f64,
    dt: f64,
    n: usize,
    seed: u64,
    chunks: usize,
    execution: Execution,
) -> Result<Vec<f64>> {
    let sampler = StableSampler::for_step(alpha, beta, dt)?;
    let chunks = chunks.clamp(1, n.max(1));
    let sizes: Vec<usize> = (0..chunks).map(|k| n / chunks + usize::from(k < n % chunks)).collect();
    let draw = |(k, &m): (usize, &usize)| {
        let mut rng = stream(seed, k as u64);
        (0..m).map(|_| sampler.sample(&mut rng)).collect::<Vec<f64>>()
    };
    let parts: Vec<Vec<f64>> = match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            sizes.par_iter().enumerate().map(draw).collect()
        }
        _ => sizes.iter().enumerate().map(draw).collect(),
    };
    Ok(parts.concat())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCheck {
    pub k_grid: Vec<f64>,
    pub empirical: Vec<Complex64>,
    pub analytic: Vec<Complex64>,
    pub max_error: f64,
    /// Sample variance over `2 dt`, reported for the Gaussian case.
    pub variance_ratio: Option<f64>,
}

/// Empirical CF of `increments` against the CF of the unit-scale law scaled to `dt`.
pub fn check_noise(increments: &[f64], alpha: f64, beta: f64, dt: f64, k_grid: &[f64]) -> Result<NoiseCheck> {
    let params = StableParams::increment(alpha, beta, dt)?;
    let empirical = empirical_cf(increments, k_grid)?;
    let analytic: Vec<Complex64> = k_grid.iter().map(|&k| params.cf(k)).collect();
    let max_error = empirical
        .iter()
        .zip(&analytic)
        .map(|(e, a)| (e - a).norm())
        .fold(0.0, f64::max);
    let variance_ratio = params.is_gaussian().then(|| {
        let n = increments.len() as f64;
        let mean = increments.iter().sum::<f64>() / n;
        let var = increments.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        var / (2.0 * dt)
    });
    Ok(NoiseCheck {
        k_grid: k_grid.to_vec(),
        empirical,
        analytic,
        max_error,
        variance_ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfSweepRow {
    pub epsilon: f64,
    pub asymptotic: Complex64,
    pub quadrature: Complex64,
    pub abs_error: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CfSweep {
    pub rows: Vec<CfSweepRow>,
    /// Least-squares slope of log relative error against log epsilon.
    pub order: Option<f64>,
}

/// Asymptotic vs quadrature values of the CF integral over an epsilon sweep.
pub fn cf_sweep(
    base: &CfContext,
    t: f64,
    regime: Regime,
    kernel: Kernel,
    remainder: Remainder,
    epsilons: &[f64],
) -> Result<CfSweep> {
    let mut rows = Vec::with_capacity(epsilons.len());
    for &epsilon in epsilons {
        let ctx = CfContext { epsilon, ..*base };
        let quadrature = cf_integral_quadrature(t, kernel, &ctx)?;
        let asymptotic = cf_integral_asymptotic_with(t, regime, kernel, &ctx, remainder);
        let abs_error = (asymptotic - quadrature).norm();
        rows.push(CfSweepRow {
            epsilon,
            asymptotic,
            quadrature,
            abs_error,
            rel_error: abs_error / quadrature.norm(),
        });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.rel_error > 0.0 && r.rel_error.is_finite())
        .map(|r| (r.epsilon.ln(), r.rel_error.ln()))
        .collect();
    Ok(CfSweep {
        order: log_log_slope(&pts),
        rows,
    })
}

/// Least-squares slope through `(x, y)` points.
pub fn log_log_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my) = (
        pts.iter().map(|p| p.0).sum::<f64>() / n,
        pts.iter().map(|p| p.1).sum::<f64>() / n,
    );
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
