//! Alpha-stable laws: characteristic function, increment sampling and the
//! Gaussian + compound-Poisson decomposition used for numeric Marcus steps.
//!
//! The characteristic function convention throughout the crate is
//!
//! ```text
//! Phi(k) = exp(-sigma^alpha |k|^alpha Xi(k)),   Xi(k) = 1 + i beta sgn(k) tan(pi alpha / 2)
//! ```
//!
//! Note the `+` sign: a positive `beta` here corresponds to a negative
//! skewness parameter in the Samorodnitsky-Taqqu convention. The sampler is
//! oriented to match this characteristic function.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Open01, OpenClosed01, Poisson, StandardNormal};

use crate::error::{Error, Result};

/// Large-jump threshold used when none is given.
pub const DEFAULT_JUMP_THRESHOLD: f64 = 1.0;

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 && alpha <= 2.0 && alpha != 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if (-1.0..=1.0).contains(&beta) {
        Ok(())
    } else {
        Err(Error::InvalidBeta(beta))
    }
}

/// Sign with `sgn(0) = 0`.
pub(crate) fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Stability index, skewness and scale of a stable law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableParams {
    alpha: f64,
    beta: f64,
    sigma: f64,
}

impl StableParams {
    pub fn new(alpha: f64, beta: f64, sigma: f64) -> Result<Self> {
        check_alpha(alpha)?;
        check_beta(beta)?;
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidScale(sigma));
        }
        Ok(Self { alpha, beta, sigma })
    }

    /// Unit-scale law, the increment of `L_t` over one time unit.
    pub fn unit(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(alpha, beta, 1.0)
    }

    /// Law of an increment of `L_t` over a step `dt`, i.e. scale `dt^(1/alpha)`.
    pub fn increment(alpha: f64, beta: f64, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        Self::new(alpha, beta, dt.powf(1.0 / alpha))
    }

    pub fn with_sigma(self, sigma: f64) -> Result<Self> {
        Self::new(self.alpha, self.beta, sigma)
    }

    pub fn with_beta(self, beta: f64) -> Result<Self> {
        Self::new(self.alpha, beta, self.sigma)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Skewness with no distributional effect removed (`alpha = 2` is always symmetric).
    pub fn effective_beta(&self) -> f64 {
        if self.alpha == 2.0 {
            0.0
        } else {
            self.beta
        }
    }

    pub fn is_gaussian(&self) -> bool {
        self.alpha == 2.0
    }

    pub fn cf(&self, k: f64) -> Complex64 {
        stable_cf_unchecked(k, self)
    }
}

/// `Xi(s; alpha, beta) = 1 + i beta sgn(s) tan(pi alpha / 2)`.
pub fn xi(s: f64, alpha: f64, beta: f64) -> Result<Complex64> {
    check_alpha(alpha)?;
    Ok(xi_unchecked(s, alpha, beta))
}

pub(crate) fn xi_unchecked(s: f64, alpha: f64, beta: f64) -> Complex64 {
    if alpha == 2.0 {
        return Complex64::new(1.0, 0.0);
    }
    Complex64::new(1.0, beta * sgn(s) * (FRAC_PI_2 * alpha).tan())
}

/// Characteristic function of the stable law `params` at `k`.
pub fn stable_cf(k: f64, params: &StableParams) -> Complex64 {
    stable_cf_unchecked(k, params)
}

fn stable_cf_unchecked(k: f64, p: &StableParams) -> Complex64 {
    if k == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    let exponent = -(p.sigma * k.abs()).powf(p.alpha) * xi_unchecked(k, p.alpha, p.beta);
    exponent.exp()
}

/// Chambers-Mallows-Stuck generator with precomputed constants.
#[derive(Debug, Clone, Copy)]
pub struct StableSampler {
    params: StableParams,
    // alpha != 2 branch
    scale: f64,
    shift: f64,
    inv_alpha: f64,
    tail_exp: f64,
    // alpha == 2 branch
    gauss_sd: f64,
}

impl StableSampler {
    pub fn new(params: StableParams) -> Self {
        let alpha = params.alpha;
        if params.is_gaussian() {
            return Self {
                params,
                scale: 0.0,
                shift: 0.0,
                inv_alpha: 0.5,
                tail_exp: 0.0,
                gauss_sd: params.sigma * std::f64::consts::SQRT_2,
            };
        }
        // The textbook generator produces exp(-|k|^a (1 - i b sgn k tan)); feeding
        // it -beta yields the `+` convention used by `stable_cf`.
        let b = -params.beta;
        let theta = (b * (FRAC_PI_2 * alpha).tan()).atan();
        Self {
            params,
            scale: params.sigma * theta.cos().powf(-1.0 / alpha),
            shift: theta / alpha,
            inv_alpha: 1.0 / alpha,
            tail_exp: (1.0 - alpha) / alpha,
            gauss_sd: 0.0,
        }
    }

    /// Sampler for increments of `L_t` over `dt`.
    pub fn for_step(alpha: f64, beta: f64, dt: f64) -> Result<Self> {
        Ok(Self::new(StableParams::increment(alpha, beta, dt)?))
    }

    pub fn params(&self) -> &StableParams {
        &self.params
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.params.is_gaussian() {
            let z: f64 = StandardNormal.sample(rng);
            return self.gauss_sd * z;
        }
        let u: f64 = Open01.sample(rng);
        let zeta1 = PI * (u - 0.5);
        let zeta2: f64 = Exp1.sample(rng);
        let alpha = self.params.alpha;
        let a = alpha * (zeta1 + self.shift);
        self.scale * a.sin() / zeta1.cos().powf(self.inv_alpha) * ((zeta1 - a).cos() / zeta2).powf(self.tail_exp)
    }
}

impl Distribution<f64> for StableSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        StableSampler::sample(self, rng)
    }
}

/// One stable increment over `dt`.
pub fn sample_increment<R: Rng + ?Sized>(alpha: f64, beta: f64, dt: f64, rng: &mut R) -> Result<f64> {
    Ok(StableSampler::for_step(alpha, beta, dt)?.sample(rng))
}

/// Small jumps as Brownian motion, large jumps (|x| >= R) as a compound Poisson process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CppDecomposition {
    pub alpha: f64,
    /// Scale of the Brownian part, `eta^2 = alpha/(2-alpha) C_alpha R^(2-alpha)`.
    pub eta: f64,
    /// Large-jump rate `C_alpha / R^alpha`.
    pub lambda_rate: f64,
    pub threshold_r: f64,
    pub c_alpha: f64,
}

impl CppDecomposition {
    pub fn eta_squared(&self) -> f64 {
        self.eta * self.eta
    }
}

/// `C_alpha = (1 - alpha) / (Gamma(2 - alpha) cos(pi alpha / 2))`.
pub fn c_alpha(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if alpha == 2.0 {
        return Ok(0.0);
    }
    Ok((1.0 - alpha) / (statrs::function::gamma::gamma(2.0 - alpha) * (FRAC_PI_2 * alpha).cos()))
}

pub fn cpp_decompose(alpha: f64, threshold_r: f64) -> Result<CppDecomposition> {
    check_alpha(alpha)?;
    if !(threshold_r.is_finite() && threshold_r > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "jump threshold must be positive, got {threshold_r}"
        )));
    }
    let c = c_alpha(alpha)?;
    let (eta_sq, lambda_rate) = if alpha == 2.0 {
        (2.0, 0.0)
    } else {
        (
            alpha / (2.0 - alpha) * c * threshold_r.powf(2.0 - alpha),
            c / threshold_r.powf(alpha),
        )
    };
    Ok(CppDecomposition {
        alpha,
        eta: eta_sq.sqrt(),
        lambda_rate,
        threshold_r,
        c_alpha: c,
    })
}

/// Gaussian part and large jumps of one approximate stable increment.
#[derive(Debug, Clone, PartialEq)]
pub struct CppIncrement {
    pub gaussian_part: f64,
    pub jumps: Vec<f64>,
}

impl CppIncrement {
    pub fn total(&self) -> f64 {
        self.gaussian_part + self.jumps.iter().sum::<f64>()
    }
}

/// Per-step sampler for the decomposition; construct once per step size.
#[derive(Debug, Clone)]
pub struct CppSampler {
    decomp: CppDecomposition,
    gauss_sd: f64,
    count: Option<Poisson<f64>>,
    neg_inv_alpha: f64,
}

impl CppSampler {
    pub fn new(decomp: CppDecomposition, beta: f64, delta_t: f64) -> Result<Self> {
        if beta != 0.0 && decomp.alpha != 2.0 {
            return Err(Error::AsymmetricJumps(beta));
        }
        if !(delta_t.is_finite() && delta_t > 0.0) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {delta_t}")));
        }
        let mean = decomp.lambda_rate * delta_t;
        let count = if mean > 0.0 {
            Some(Poisson::new(mean).map_err(|e| Error::InvalidArgument(e.to_string()))?)
        } else {
            None
        };
        Ok(Self {
            decomp,
            gauss_sd: decomp.eta * delta_t.sqrt(),
            count,
            neg_inv_alpha: -1.0 / decomp.alpha,
        })
    }

    pub fn decomposition(&self) -> &CppDecomposition {
        &self.decomp
    }

    /// Draws the Gaussian part and pushes this step's jumps (in draw order) onto `jumps`.
    #[inline]
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, jumps: &mut Vec<f64>) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        if let Some(count) = &self.count {
            let n = count.sample(rng) as usize;
            for _ in 0..n {
                jumps.push(self.jump(rng));
            }
        }
        self.gauss_sd * z
    }

    /// Jump magnitude from the symmetric Pareto law with `P(|J| > x) = (R/x)^alpha`.
    #[inline]
    fn jump<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = OpenClosed01.sample(rng);
        let size = self.decomp.threshold_r * u.powf(self.neg_inv_alpha);
        if rng.random::<bool>() {
            size
        } else {
            -size
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CppIncrement {
        let mut jumps = Vec::new();
        let gaussian_part = self.sample_into(rng, &mut jumps);
        CppIncrement { gaussian_part, jumps }
    }
}

pub fn sample_cpp_increment<R: Rng + ?Sized>(
    decomp: &CppDecomposition,
    beta: f64,
    delta_t: f64,
    rng: &mut R,
) -> Result<CppIncrement> {
    Ok(CppSampler::new(*decomp, beta, delta_t)?.sample(rng))
}
