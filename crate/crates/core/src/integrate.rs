//! Time stepping for full systems and reduced scalar SDEs, and the chunked
//! ensemble driver.
//!
//! A run of `n_samples` is split into `chunks` independent trajectories, each
//! with its own burn-in and its own random stream derived from the seed and
//! the chunk index. Chunks are concatenated in index order, so the output does
//! not depend on how many threads executed them.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::model::{Coefficient, FastSlowSystem, Interpretation, ScalarSde};
use crate::output::write_columns;
use crate::rng::{stream, SimRng};
use crate::stable::{cpp_decompose, CppSampler, StableSampler, DEFAULT_JUMP_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Euler,
    PredictorCorrector,
    MarcusClosed,
    MarcusNumeric,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Euler => "euler",
            Self::PredictorCorrector => "predictor_corrector",
            Self::MarcusClosed => "marcus_closed",
            Self::MarcusNumeric => "marcus_numeric",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "euler" => Self::Euler,
            "predictor_corrector" | "pc" => Self::PredictorCorrector,
            "marcus_closed" => Self::MarcusClosed,
            "marcus_numeric" => Self::MarcusNumeric,
            _ => return None,
        })
    }
}

/// How jump flows are integrated inside the numeric Marcus step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpSolver {
    Euler,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Chunks run on the rayon pool; identical to `Sequential` without the `parallel` feature.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Self::Parallel
        } else {
            Self::Sequential
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub delta_t: f64,
    pub sample_dt: f64,
    pub n_samples: usize,
    pub burn_in: f64,
    pub seed: u64,
    pub scheme: Scheme,
    pub marcus_substeps: usize,
    pub jump_solver: JumpSolver,
    pub jump_threshold: f64,
    pub chunks: usize,
    pub execution: Execution,
}

pub const DEFAULT_BURN_IN: f64 = 10.0;
pub const DEFAULT_MARCUS_SUBSTEPS: usize = 64;

impl SimConfig {
    pub fn new(delta_t: f64, sample_dt: f64, n_samples: usize, seed: u64, scheme: Scheme) -> Self {
        Self {
            delta_t,
            sample_dt,
            n_samples,
            burn_in: DEFAULT_BURN_IN,
            seed,
            scheme,
            marcus_substeps: DEFAULT_MARCUS_SUBSTEPS,
            jump_solver: JumpSolver::Rk4,
            jump_threshold: DEFAULT_JUMP_THRESHOLD,
            chunks: 1,
            execution: Execution::default(),
        }
    }

    pub fn with_chunks(mut self, chunks: usize) -> Self {
        self.chunks = chunks;
        self
    }

    pub fn with_burn_in(mut self, burn_in: f64) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    /// Simulation steps per recorded sample.
    pub fn stride(&self) -> Result<usize> {
        let ratio = self.sample_dt / self.delta_t;
        let stride = ratio.round();
        if !(stride >= 1.0 && (ratio - stride).abs() <= 1e-9 * ratio) {
            return Err(Error::InvalidArgument(format!(
                "sample_dt / delta_t = {ratio} must be a positive integer"
            )));
        }
        Ok(stride as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, what: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{what} must be positive, got {v}")))
            }
        };
        positive(self.delta_t, "delta_t")?;
        positive(self.sample_dt, "sample_dt")?;
        self.stride()?;
        if !(self.burn_in >= 0.0 && self.burn_in.is_finite()) {
            return Err(Error::InvalidArgument(format!("burn_in must be >= 0, got {}", self.burn_in)));
        }
        if self.n_samples == 0 {
            return Err(Error::InvalidArgument("n_samples must be positive".into()));
        }
        if self.chunks == 0 || self.chunks > self.n_samples {
            return Err(Error::InvalidArgument(format!(
                "chunks must be in 1..={}, got {}",
                self.n_samples, self.chunks
            )));
        }
        if self.marcus_substeps == 0 {
            return Err(Error::InvalidArgument("marcus_substeps must be positive".into()));
        }
        positive(self.jump_threshold, "jump_threshold")
    }

    /// Resolution warnings: the step should be at most a tenth of the sampling
    /// step and of the fast timescale.
    pub fn advisories(&self, fast_timescale: Option<f64>) -> Vec<String> {
        let mut out = Vec::new();
        if self.delta_t > self.sample_dt / 10.0 {
            out.push(format!(
                "delta_t = {} is coarser than sample_dt / 10 = {}",
                self.delta_t,
                self.sample_dt / 10.0
            ));
        }
        if let Some(tau) = fast_timescale {
            if self.delta_t > tau / 10.0 {
                out.push(format!(
                    "delta_t = {} does not resolve the fast timescale {tau}",
                    self.delta_t
                ));
            }
        }
        out
    }

    fn chunk_sizes(&self) -> Vec<usize> {
        let (base, extra) = (self.n_samples / self.chunks, self.n_samples % self.chunks);
        (0..self.chunks).map(|k| base + usize::from(k < extra)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSeries {
    pub values: Vec<f64>,
    pub sample_dt: f64,
    pub t0: f64,
    pub seed: u64,
    pub provenance: String,
}

impl SampleSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.sample_dt
    }

    /// `t,value` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> io::Result<()> {
        write_columns(
            w,
            &["t", "value"],
            self.values.iter().enumerate().map(|(i, &v)| vec![self.time(i), v]),
        )
    }
}

/// `z + H(z) dt + kappa(z) dL`.
#[inline]
pub fn euler_step(sde: &ScalarSde, z: f64, dl: f64, delta_t: f64) -> f64 {
    z + sde.drift.eval(z) * delta_t + sde.noise_coeff.eval(z) * dl
}

/// Largest `|H'| dt` a single Heun drift step is allowed before it is split.
pub const PC_STIFFNESS_LIMIT: f64 = 0.5;

/// Heun drift with the Euler noise term.
///
/// When the drift has an analytic derivative and `|H'(predictor)| dt` exceeds
/// [`PC_STIFFNESS_LIMIT`] (a large jump into a steep cubic, say), the noise is
/// applied first and the drift is integrated with enough Heun substeps to stay
/// inside the stability region. Ordinary steps are unaffected.
#[inline]
pub fn predictor_corrector_step(sde: &ScalarSde, z: f64, dl: f64, delta_t: f64) -> f64 {
    let h0 = sde.drift.eval(z);
    let noise = sde.noise_coeff.eval(z) * dl;
    let predictor = z + h0 * delta_t + noise;
    if sde.drift.has_analytic_derivative() {
        let stiff = sde
            .drift
            .derivative(z + noise)
            .abs()
            .max(sde.drift.derivative(predictor).abs())
            * delta_t;
        if stiff > PC_STIFFNESS_LIMIT {
            return heun_substepped(&sde.drift, z + noise, delta_t);
        }
    }
    z + 0.5 * (h0 + sde.drift.eval(predictor)) * delta_t + noise
}

fn heun_substepped(drift: &Coefficient, mut z: f64, delta_t: f64) -> f64 {
    let mut remaining = delta_t;
    while remaining > 0.0 && z.is_finite() {
        let slope = drift.derivative(z).abs().max(f64::MIN_POSITIVE);
        let h = (PC_STIFFNESS_LIMIT / slope).min(remaining);
        let k1 = drift.eval(z);
        let k2 = drift.eval(z + h * k1);
        z += 0.5 * h * (k1 + k2);
        remaining -= h;
    }
    z
}

/// Drift Euler step followed by the exact jump map `theta(1; dL, .)`.
///
/// The map is applied to the post-drift state, so a map that preserves the
/// sign of its argument keeps the state positive whenever the drift step does.
#[inline]
pub fn marcus_step_closed(sde: &ScalarSde, z: f64, dl: f64, delta_t: f64) -> Result<f64> {
    let map = sde.marcus_map.as_ref().ok_or(Error::MissingMarcusMap)?;
    Ok(map(1.0, dl, z + sde.drift.eval(z) * delta_t))
}

/// `theta(1)` for `d theta/dr = dl kappa(theta)` with `substeps` steps.
pub fn marcus_jump_numeric(sde: &ScalarSde, z: f64, dl: f64, substeps: usize, solver: JumpSolver) -> f64 {
    let h = dl / substeps as f64;
    let k = |x: f64| sde.noise_coeff.eval(x);
    let mut theta = z;
    match solver {
        JumpSolver::Euler => {
            for _ in 0..substeps {
                theta += h * k(theta);
            }
        }
        JumpSolver::Rk4 => {
            for _ in 0..substeps {
                let k1 = k(theta);
                let k2 = k(theta + 0.5 * h * k1);
                let k3 = k(theta + 0.5 * h * k2);
                let k4 = k(theta + h * k3);
                theta += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
        }
    }
    theta
}

/// Marcus step on the Gaussian-plus-compound-Poisson split of the noise.
///
/// `gaussian_part` is `eta dW`; the Wong–Zakai drift `eta^2/2 kappa kappa'`
/// turns the Itô Gaussian term into a Stratonovich one. Jumps are applied in order.
#[allow(clippy::too_many_arguments)]
#[inline]
pub fn marcus_step_numeric(
    sde: &ScalarSde,
    z: f64,
    gaussian_part: f64,
    jumps: &[f64],
    eta: f64,
    delta_t: f64,
    substeps: usize,
    solver: JumpSolver,
) -> f64 {
    let kappa = sde.noise_coeff.eval(z);
    let correction = 0.5 * eta * eta * kappa * sde.noise_coeff.derivative(z);
    let mut next = z + (sde.drift.eval(z) + correction) * delta_t + kappa * gaussian_part;
    for &j in jumps {
        next = marcus_jump_numeric(sde, next, j, substeps, solver);
    }
    next
}

/// Cached powers of epsilon for the full system.
#[derive(Debug, Clone, Copy)]
struct FullScales {
    slow_coupling: f64,
    fast_forcing: f64,
    inv_eps: f64,
}

impl FullScales {
    fn new(sys: &FastSlowSystem) -> Self {
        Self {
            slow_coupling: sys.epsilon.powf(-sys.gamma),
            fast_forcing: sys.epsilon.powf(sys.gamma - 1.0),
            inv_eps: 1.0 / sys.epsilon,
        }
    }
}

#[inline]
fn full_rates(sys: &FastSlowSystem, s: &FullScales, x: f64, y: f64) -> (f64, f64) {
    (
        sys.f1.eval(x) + s.slow_coupling * sys.f2.eval(x) * y,
        s.fast_forcing * sys.g1.eval(x) + sys.g2.eval(x) * y * s.inv_eps,
    )
}

/// One Euler step of the full system; `dl` is the unit-noise increment.
pub fn full_euler_step(sys: &FastSlowSystem, x: f64, y: f64, dl: f64, delta_t: f64) -> (f64, f64) {
    let s = FullScales::new(sys);
    full_euler(sys, &s, x, y, dl, delta_t)
}

/// One predictor–corrector step of the full system.
pub fn full_pc_step(sys: &FastSlowSystem, x: f64, y: f64, dl: f64, delta_t: f64) -> (f64, f64) {
    let s = FullScales::new(sys);
    full_pc(sys, &s, x, y, dl, delta_t)
}

#[inline]
fn full_euler(sys: &FastSlowSystem, s: &FullScales, x: f64, y: f64, dl: f64, dt: f64) -> (f64, f64) {
    let (fx, fy) = full_rates(sys, s, x, y);
    (x + fx * dt, y + fy * dt + s.fast_forcing * sys.b * dl)
}

#[inline]
fn full_pc(sys: &FastSlowSystem, s: &FullScales, x: f64, y: f64, dl: f64, dt: f64) -> (f64, f64) {
    let noise = s.fast_forcing * sys.b * dl;
    let (fx, fy) = full_rates(sys, s, x, y);
    let (xp, yp) = (x + fx * dt, y + fy * dt + noise);
    let (gx, gy) = full_rates(sys, s, xp, yp);
    (x + 0.5 * (fx + gx) * dt, y + 0.5 * (fy + gy) * dt + noise)
}

/// What to integrate.
#[derive(Debug, Clone, Copy)]
pub enum Model<'a> {
    Full(&'a FastSlowSystem),
    Reduced(&'a ScalarSde),
}

impl Model<'_> {
    fn label(&self) -> &str {
        match self {
            Model::Full(s) => &s.name,
            Model::Reduced(s) => &s.label,
        }
    }
}

/// Check that the scheme can integrate the model in the right sense.
pub fn check_scheme(model: Model<'_>, scheme: Scheme) -> Result<()> {
    let incompatible = |interpretation: &'static str| Error::IncompatibleScheme {
        scheme: scheme.name(),
        interpretation,
    };
    match model {
        Model::Full(_) => match scheme {
            Scheme::Euler | Scheme::PredictorCorrector => Ok(()),
            _ => Err(incompatible("full fast-slow")),
        },
        Model::Reduced(sde) => match (sde.interpretation, scheme) {
            (_, Scheme::MarcusClosed) if sde.marcus_map.is_none() => Err(Error::MissingMarcusMap),
            (Interpretation::Marcus, Scheme::Euler | Scheme::PredictorCorrector) => Err(incompatible("Marcus")),
            (_, Scheme::MarcusNumeric) if sde.noise.beta() != 0.0 && !sde.noise.is_gaussian() => {
                Err(Error::AsymmetricJumps(sde.noise.beta()))
            }
            _ => Ok(()),
        },
    }
}

trait Stepper {
    fn step(&mut self, rng: &mut SimRng);
    fn value(&self) -> f64;
}

struct FullStepper<'a> {
    sys: &'a FastSlowSystem,
    scales: FullScales,
    noise: StableSampler,
    pc: bool,
    dt: f64,
    x: f64,
    y: f64,
}

impl Stepper for FullStepper<'_> {
    #[inline]
    fn step(&mut self, rng: &mut SimRng) {
        let dl = self.noise.sample(rng);
        (self.x, self.y) = if self.pc {
            full_pc(self.sys, &self.scales, self.x, self.y, dl, self.dt)
        } else {
            full_euler(self.sys, &self.scales, self.x, self.y, dl, self.dt)
        };
    }

    fn value(&self) -> f64 {
        // Report whichever coordinate failed first.
        if self.y.is_finite() {
            self.x
        } else {
            self.y
        }
    }
}

struct ScalarStepper<'a> {
    sde: &'a ScalarSde,
    noise: Option<StableSampler>,
    scheme: Scheme,
    dt: f64,
    z: f64,
}

impl Stepper for ScalarStepper<'_> {
    #[inline]
    fn step(&mut self, rng: &mut SimRng) {
        let dl = match &self.noise {
            Some(n) => n.sample(rng),
            None => 0.0,
        };
        self.z = match self.scheme {
            Scheme::Euler => euler_step(self.sde, self.z, dl, self.dt),
            Scheme::PredictorCorrector => predictor_corrector_step(self.sde, self.z, dl, self.dt),
            // checked before the run starts
            _ => marcus_step_closed(self.sde, self.z, dl, self.dt).unwrap_or(f64::NAN),
        };
    }

    fn value(&self) -> f64 {
        self.z
    }
}

struct MarcusNumericStepper<'a> {
    sde: &'a ScalarSde,
    noise: CppSampler,
    eta: f64,
    dt: f64,
    substeps: usize,
    solver: JumpSolver,
    jumps: Vec<f64>,
    z: f64,
}

impl Stepper for MarcusNumericStepper<'_> {
    #[inline]
    fn step(&mut self, rng: &mut SimRng) {
        self.jumps.clear();
        let g = self.noise.sample_into(rng, &mut self.jumps);
        self.z = marcus_step_numeric(
            self.sde,
            self.z,
            g,
            &self.jumps,
            self.eta,
            self.dt,
            self.substeps,
            self.solver,
        );
    }

    fn value(&self) -> f64 {
        self.z
    }
}

fn drive<S: Stepper>(mut s: S, rng: &mut SimRng, cfg: &SimConfig, n: usize, t_offset: f64) -> Result<Vec<f64>> {
    let stride = cfg.stride()?;
    let burn_steps = (cfg.burn_in / cfg.delta_t).round() as usize;
    let (mut last_good, mut last_good_time) = (s.value(), 0.0);
    let fail = |step: usize, last_good: f64, last_good_time: f64| Error::NonFinite {
        time: t_offset + step as f64 * cfg.delta_t,
        last_good,
        last_good_time,
    };
    for i in 0..burn_steps {
        s.step(rng);
        if !s.value().is_finite() {
            return Err(fail(i + 1, last_good, last_good_time));
        }
        if (i + 1) % stride == 0 {
            (last_good, last_good_time) = (s.value(), t_offset + (i + 1) as f64 * cfg.delta_t);
        }
    }
    let mut out = Vec::with_capacity(n);
    let mut step = burn_steps;
    for _ in 0..n {
        for _ in 0..stride {
            s.step(rng);
            step += 1;
            if !s.value().is_finite() {
                return Err(fail(step, last_good, last_good_time));
            }
        }
        (last_good, last_good_time) = (s.value(), t_offset + step as f64 * cfg.delta_t);
        out.push(s.value());
    }
    Ok(out)
}

fn run_chunk(model: Model<'_>, cfg: &SimConfig, chunk: usize, n: usize) -> Result<Vec<f64>> {
    let mut rng = stream(cfg.seed, chunk as u64);
    match model {
        Model::Full(sys) => {
            let s = FullStepper {
                sys,
                scales: FullScales::new(sys),
                noise: StableSampler::for_step(sys.alpha(), sys.beta(), cfg.delta_t)?,
                pc: cfg.scheme == Scheme::PredictorCorrector,
                dt: cfg.delta_t,
                x: sys.x0,
                y: sys.y0,
            };
            drive(s, &mut rng, cfg, n, 0.0)
        }
        Model::Reduced(sde) if cfg.scheme == Scheme::MarcusNumeric => {
            let decomp = cpp_decompose(sde.noise.alpha(), cfg.jump_threshold)?;
            let s = MarcusNumericStepper {
                sde,
                noise: CppSampler::new(decomp, sde.noise.beta(), cfg.delta_t)?,
                eta: decomp.eta,
                dt: cfg.delta_t,
                substeps: cfg.marcus_substeps,
                solver: cfg.jump_solver,
                jumps: Vec::new(),
                z: sde.x0,
            };
            drive(s, &mut rng, cfg, n, 0.0)
        }
        Model::Reduced(sde) => {
            let noise = match sde.interpretation {
                Interpretation::Deterministic => None,
                _ => Some(StableSampler::for_step(sde.noise.alpha(), sde.noise.beta(), cfg.delta_t)?),
            };
            let s = ScalarStepper {
                sde,
                noise,
                scheme: cfg.scheme,
                dt: cfg.delta_t,
                z: sde.x0,
            };
            drive(s, &mut rng, cfg, n, 0.0)
        }
    }
}

/// Run the model and record `n_samples` values after burn-in.
pub fn simulate(model: Model<'_>, cfg: &SimConfig) -> Result<SampleSeries> {
    cfg.validate()?;
    check_scheme(model, cfg.scheme)?;
    let sizes = cfg.chunk_sizes();
    let run = |(k, &n): (usize, &usize)| run_chunk(model, cfg, k, n);
    let parts: Vec<Vec<f64>> = match cfg.execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            sizes.par_iter().enumerate().map(run).collect::<Result<_>>()?
        }
        _ => sizes.iter().enumerate().map(run).collect::<Result<_>>()?,
    };
    Ok(SampleSeries {
        values: parts.concat(),
        sample_dt: cfg.sample_dt,
        t0: cfg.burn_in,
        seed: cfg.seed,
        provenance: format!("{} / {}", model.label(), cfg.scheme.name()),
    })
}

pub fn simulate_full(system: &FastSlowSystem, cfg: &SimConfig) -> Result<SampleSeries> {
    simulate(Model::Full(system), cfg)
}

pub fn simulate_sde(sde: &ScalarSde, cfg: &SimConfig) -> Result<SampleSeries> {
    simulate(Model::Reduced(sde), cfg)
}

/// (L) model along the averaged trajectory: `x_bar + xi`, with the fluctuation
/// slope, noise scale and skewness refreshed at every sampling step.
///
/// Runs a single trajectory from `x0`; `burn_in` and `chunks` are ignored.
pub fn simulate_l_trajectory(l: &crate::reduction::LApprox, cfg: &SimConfig) -> Result<SampleSeries> {
    cfg.validate()?;
    let stride = cfg.stride()?;
    let mut rng = stream(cfg.seed, 0);
    let mean = &l.mean_ode;
    let (mut xbar, mut xi) = (mean.x0, 0.0);
    let alpha = l.fluctuation_sde.noise.alpha();
    let mut values = Vec::with_capacity(cfg.n_samples);
    let (mut last_good, mut last_good_time) = (xbar, 0.0);
    for i in 0..cfg.n_samples {
        let (slope, scale, beta) = l.coefficients_at(xbar)?;
        let noise = StableSampler::for_step(alpha, beta, cfg.delta_t)?;
        for _ in 0..stride {
            let dl = noise.sample(&mut rng);
            let h = mean.drift.eval(xbar);
            xbar = match cfg.scheme {
                Scheme::PredictorCorrector => xbar + 0.5 * (h + mean.drift.eval(xbar + h * cfg.delta_t)) * cfg.delta_t,
                _ => xbar + h * cfg.delta_t,
            };
            xi += slope * xi * cfg.delta_t + scale * dl;
        }
        let v = xbar + xi;
        let t = (i + 1) as f64 * cfg.sample_dt;
        if !v.is_finite() {
            return Err(Error::NonFinite {
                time: t,
                last_good,
                last_good_time,
            });
        }
        (last_good, last_good_time) = (v, t);
        values.push(v);
    }
    Ok(SampleSeries {
        values,
        sample_dt: cfg.sample_dt,
        t0: cfg.sample_dt,
        seed: cfg.seed,
        provenance: format!("{} (L, trajectory anchor) / {}", l.mean_ode.label, cfg.scheme.name()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduction::{l_approx, n_plus_approx, Anchor};
    use crate::stable::StableParams;
    use crate::systems;

    fn additive(h: impl Fn(f64) -> f64 + Send + Sync + 'static, kappa: f64, alpha: f64) -> ScalarSde {
        ScalarSde::additive("t", Coefficient::new(h), kappa, StableParams::unit(alpha, 0.0).unwrap(), 0.0)
    }

    #[test]
    fn euler_without_noise_is_forward_euler() {
        let sde = additive(|z| -2.0 * z, 0.0, 1.7);
        assert_eq!(sde.interpretation, Interpretation::Deterministic);
        assert_eq!(euler_step(&sde, 1.0, 123.0, 0.1), 0.8);
        // Heun on a linear ODE
        assert!((predictor_corrector_step(&sde, 1.0, 0.0, 0.1) - (1.0 - 0.2 + 0.02)).abs() < 1e-15);
    }

    #[test]
    fn stiff_jump_into_cubic_stays_bounded() {
        let sys = systems::nonlinear3(1.0, 0.3, 0.01, 1.7).unwrap();
        let sde = ScalarSde::additive("c", sys.averaged_drift(), 1.0, StableParams::unit(1.7, 0.0).unwrap(), 0.0);
        let z = predictor_corrector_step(&sde, 0.0, 50.0, 0.01);
        assert!(z.is_finite() && z > 0.0 && z < 50.0);
        // the exact flow of -x - x^3 from 50 over 0.01 lands near 6.9
        assert!((z - 6.9).abs() < 0.3, "{z}");
        let plain = predictor_corrector_step(&sde, 0.5, 0.01, 0.01);
        let h0 = -0.5 - 0.125;
        let p = 0.5 + h0 * 0.01 + 0.01;
        assert_eq!(plain, 0.5 + 0.5 * (h0 + (-p - p * p * p)) * 0.01 + 0.01);
    }

    #[test]
    fn pure_noise_is_a_random_walk() {
        let sde = additive(|_| 0.0, 1.0, 1.5);
        let cfg = SimConfig::new(0.01, 0.01, 100, 3, Scheme::Euler).with_burn_in(0.0);
        let series = simulate_sde(&sde, &cfg).unwrap();
        let sampler = StableSampler::for_step(1.5, 0.0, 0.01).unwrap();
        let mut rng = stream(3, 0);
        let mut acc = 0.0;
        for &v in &series.values {
            acc += sampler.sample(&mut rng);
            assert_eq!(v, acc);
        }
    }

    #[test]
    fn closed_marcus_step() {
        let nl1 = systems::nonlinear1(1.0, 0.1, 1.0, 0.01, 1.7, 1.0).unwrap();
        let n = n_plus_approx(&nl1).unwrap();
        let z = marcus_step_closed(&n.sde, 2.0, 0.0, 0.01).unwrap();
        assert_eq!(z, 2.0 + (1.0 - 2.0) * 0.01);
        let z = marcus_step_closed(&n.sde, 2.0, 3.0, 0.0).unwrap();
        assert!((z - 2.0 * (0.3f64).exp()).abs() < 1e-15);
        let additive = additive(|_| 0.0, 0.5, 1.7);
        assert!((marcus_step_closed(&additive, 1.0, 2.0, 0.1).unwrap() - euler_step(&additive, 1.0, 2.0, 0.1)).abs() < 1e-15);
        // small state, large negative jump: stays positive
        assert!(marcus_step_closed(&n.sde, 1e-3, -400.0, 0.01).unwrap() > 0.0);
        let mut bare = n.sde.clone();
        bare.marcus_map = None;
        assert!(matches!(
            marcus_step_closed(&bare, 1.0, 1.0, 0.1),
            Err(Error::MissingMarcusMap)
        ));
    }

    #[test]
    fn numeric_jump_converges_to_closed_form() {
        let nl2 = systems::nonlinear2(2.0, 0.01, 1.9, 0.0).unwrap();
        let n = n_plus_approx(&nl2).unwrap();
        for (dl, z) in [(1.0, 0.5), (-2.5, 1.0), (4.0, 3.0), (-1.3, -0.2)] {
            let exact = n.sde.marcus_jump(dl, z).unwrap();
            let m = marcus_jump_numeric(&n.sde, z, dl, DEFAULT_MARCUS_SUBSTEPS, JumpSolver::Rk4);
            let m2 = marcus_jump_numeric(&n.sde, z, dl, 2 * DEFAULT_MARCUS_SUBSTEPS, JumpSolver::Rk4);
            let crosses_kink = exact.signum() != z.signum();
            if !crosses_kink {
                assert!((m - m2).abs() < 1e-6 * m.abs().max(1.0), "{dl} {z}: {m} {m2}");
            }
            assert!((m2 - exact).abs() < 1e-4, "{dl} {z}: {m2} {exact}");
            let e = marcus_jump_numeric(&n.sde, z, dl, 4096, JumpSolver::Euler);
            assert!((e - exact).abs() < 1e-2, "{dl} {z}: {e} {exact}");
        }
    }

    #[test]
    fn numeric_marcus_gaussian_is_stratonovich() {
        let nl2 = systems::nonlinear2(2.0, 0.01, 2.0, 0.0).unwrap();
        let n = n_plus_approx(&nl2).unwrap();
        let (z, dw, dt) = (0.4, 0.05, 1e-3);
        let eta = 2f64.sqrt();
        let got = marcus_step_numeric(&n.sde, z, eta * dw, &[], eta, dt, 64, JumpSolver::Rk4);
        let k = 2.0 / 1.4;
        let dk = -2.0 / 1.96;
        let expect = z + (-z + k * dk) * dt + k * eta * dw;
        assert!((got - expect).abs() < 1e-15);
        // constant kappa: no correction
        let add = additive(|z| -z, 0.3, 2.0);
        let got = marcus_step_numeric(&add, z, 0.1, &[], eta, dt, 64, JumpSolver::Rk4);
        assert!((got - (z - z * dt + 0.03)).abs() < 1e-15);
    }

    #[test]
    fn config_checks() {
        let ok = SimConfig::new(1e-3, 1e-2, 10, 0, Scheme::Euler);
        assert_eq!(ok.stride().unwrap(), 10);
        assert!(ok.advisories(Some(0.01)).is_empty());
        assert_eq!(ok.advisories(Some(0.005)).len(), 1);
        assert!(SimConfig::new(3e-3, 1e-2, 10, 0, Scheme::Euler).validate().is_err());
        assert!(SimConfig::new(1e-2, 1e-3, 10, 0, Scheme::Euler).validate().is_err());
        assert!(SimConfig::new(1e-3, 1e-2, 0, 0, Scheme::Euler).validate().is_err());
        assert!(ok.clone().with_chunks(11).validate().is_err());
        assert_eq!(ok.clone().with_chunks(3).chunk_sizes(), vec![4, 3, 3]);
    }

    #[test]
    fn scheme_compatibility() {
        let nl1 = systems::nonlinear1(1.0, 0.1, 1.0, 0.01, 1.7, 1.0).unwrap();
        let n = n_plus_approx(&nl1).unwrap();
        assert!(check_scheme(Model::Reduced(&n.sde), Scheme::Euler).is_err());
        assert!(check_scheme(Model::Reduced(&n.sde), Scheme::MarcusClosed).is_ok());
        assert!(check_scheme(Model::Full(&nl1), Scheme::MarcusClosed).is_err());
        let skewed = nl1.clone().with_beta(0.5).unwrap();
        let n = n_plus_approx(&skewed).unwrap();
        assert!(matches!(
            check_scheme(Model::Reduced(&n.sde), Scheme::MarcusNumeric),
            Err(Error::AsymmetricJumps(_))
        ));
        let l = l_approx(&skewed, Anchor::Stationary).unwrap().stationary_sde();
        assert!(check_scheme(Model::Reduced(&l), Scheme::Euler).is_ok());
    }

    #[test]
    fn deterministic_and_chunked() {
        let sys = systems::linear(0.2, 0.7, 1.0, 0.01, 1.7, 0.0, 0.0).unwrap();
        let cfg = SimConfig::new(1e-3, 1e-2, 500, 42, Scheme::Euler)
            .with_burn_in(1.0)
            .with_chunks(4);
        let a = simulate_full(&sys, &cfg).unwrap();
        let b = simulate_full(&sys, &cfg.clone().with_execution(Execution::Sequential)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 500);
        let c = simulate_full(&sys, &SimConfig { seed: 43, ..cfg.clone() }).unwrap();
        assert_ne!(a.values, c.values);
        // a single chunk run reproduces the first chunk exactly
        let first = simulate_full(
            &sys,
            &SimConfig {
                n_samples: 125,
                chunks: 1,
                ..cfg
            },
        )
        .unwrap();
        assert_eq!(first.values[..], a.values[..125]);
    }

    #[test]
    fn nonfinite_aborts_with_diagnostics() {
        let sde = ScalarSde::deterministic("blowup", Coefficient::new(|z| z * z), 1.0);
        let cfg = SimConfig::new(0.01, 0.1, 100, 0, Scheme::Euler).with_burn_in(0.0);
        match simulate_sde(&sde, &cfg) {
            Err(Error::NonFinite {
                time,
                last_good,
                last_good_time,
            }) => {
                assert!(time > last_good_time && last_good.is_finite() && last_good > 1.0);
            }
            other => panic!("expected abort, got {other:?}"),
        }
    }

    #[test]
    fn gaussian_linear_full_system_matches_ou_variance() {
        let sys = systems::linear(0.2, 0.7, 1.0, 0.01, 2.0, 0.0, 0.0).unwrap();
        let cfg = SimConfig::new(1e-3, 1e-1, 20_000, 9, Scheme::Euler);
        let s = simulate_full(&sys, &cfg).unwrap();
        let n = s.len() as f64;
        let mean = s.values.iter().sum::<f64>() / n;
        let var = s.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        // (ab)^2 / (1 - ac) with unit noise of variance 2 per unit time
        let expect = 0.14f64.powi(2) / 0.8;
        assert!((var - expect).abs() < 0.1 * expect, "{var} vs {expect}");
    }

    #[test]
    fn trajectory_anchor_relaxes() {
        let nl1 = systems::nonlinear1(1.0, 0.1, 1.0, 0.01, 1.9, 3.0).unwrap();
        let l = l_approx(&nl1, Anchor::Trajectory).unwrap();
        let quiet_sys = systems::nonlinear1(1.0, 0.0, 1.0, 0.01, 1.9, 3.0).unwrap();
        let quiet = l_approx(&quiet_sys, Anchor::Trajectory).unwrap();
        let cfg = SimConfig::new(0.01, 0.01, 300, 0, Scheme::Euler);
        let s = simulate_l_trajectory(&quiet, &cfg).unwrap();
        assert!((s.values[299] - (1.0 + 2.0 * (-3.0f64).exp())).abs() < 1e-2);
        assert!(simulate_l_trajectory(&l, &cfg).unwrap().values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn csv_layout() {
        let s = SampleSeries {
            values: vec![1.5, -2.0],
            sample_dt: 0.01,
            t0: 10.0,
            seed: 1,
            provenance: "x".into(),
        };
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,value");
        assert_eq!(lines[2], "1.0010000000000000e1,-2.0000000000000000e0");
    }
}
