//! Density and dependence estimators: normalized histograms, sample-size
//! planning, empirical characteristic functions, autocodifference and
//! two-sample Kolmogorov–Smirnov distance.

use std::io::{self, Write};

use num_complex::Complex64;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use statrs::function::gamma::gamma_lr;

use crate::error::{Error, Result};
use crate::output::write_columns;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    pub bin_edges: Vec<f64>,
    pub densities: Vec<f64>,
    /// Samples that fell inside the range.
    pub n_samples: usize,
    pub out_of_range: usize,
}

impl DensityEstimate {
    pub fn bin_centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn widths(&self) -> impl Iterator<Item = f64> + '_ {
        self.bin_edges.windows(2).map(|w| w[1] - w[0])
    }

    pub fn integral(&self) -> f64 {
        self.densities.iter().zip(self.widths()).map(|(d, w)| d * w).sum()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> io::Result<()> {
        let rows = self.bin_centers().into_iter().zip(&self.densities).map(|(c, d)| vec![c, *d]);
        write_columns(w, &["bin_center", "density"], rows)
    }
}

/// Histogram on `range` with `n_bins` equal bins, normalized over the in-range samples.
pub fn histogram_pdf(values: &[f64], n_bins: usize, range: (f64, f64)) -> Result<DensityEstimate> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    let (lo, hi) = range;
    if n_bins < 2 || !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidArgument(format!(
            "need n_bins >= 2 and a finite range, got {n_bins} bins on [{lo}, {hi}]"
        )));
    }
    let width = (hi - lo) / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    let mut outside = 0;
    for &v in values {
        if !(v >= lo && v <= hi) {
            outside += 1;
            continue;
        }
        let i = (((v - lo) / width) as usize).min(n_bins - 1);
        counts[i] += 1;
    }
    let inside = values.len() - outside;
    if inside == 0 {
        return Err(Error::InvalidArgument(format!(
            "all {} samples fall outside [{lo}, {hi}]",
            values.len()
        )));
    }
    let bin_edges: Vec<f64> = (0..=n_bins).map(|i| lo + width * i as f64).collect();
    let densities = counts
        .iter()
        .zip(bin_edges.windows(2))
        .map(|(&c, w)| c as f64 / (inside as f64 * (w[1] - w[0])))
        .collect();
    Ok(DensityEstimate {
        bin_edges,
        densities,
        n_samples: inside,
        out_of_range: outside,
    })
}

/// Quantile of the chi-squared law with `dof` degrees of freedom, by bisection
/// on the regularized lower incomplete gamma function.
pub fn chi_squared_quantile(p: f64, dof: f64) -> f64 {
    let cdf = |x: f64| gamma_lr(0.5 * dof, 0.5 * x);
    let (mut lo, mut hi) = (0.0, 1.0);
    while cdf(hi) < p {
        hi *= 2.0;
    }
    while hi - lo > 1e-10 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplePlan {
    pub m_z: f64,
    pub n_z: f64,
    pub n: f64,
}

/// Samples needed to estimate a bin probability `pi_target` within `omega`
/// simultaneously over `n_bins` bins at 95% confidence.
pub fn plan_sample_size(
    pi_target: f64,
    omega: f64,
    n_bins: usize,
    sample_dt: f64,
    decorrelation_time: f64,
) -> Result<SamplePlan> {
    if !(pi_target > 0.0 && pi_target < 1.0) || !(omega > 0.0) || n_bins == 0 || !(sample_dt > 0.0) || !(decorrelation_time > 0.0)
    {
        return Err(Error::InvalidArgument(
            "plan needs 0 < pi < 1, omega > 0, n >= 1 and positive times".into(),
        ));
    }
    let m_z = chi_squared_quantile(1.0 - 0.05 / n_bins as f64, 1.0);
    let n_z = m_z * pi_target / (omega * omega);
    Ok(SamplePlan {
        m_z,
        n_z,
        n: n_z * decorrelation_time / sample_dt,
    })
}

fn cf_at(values: &[f64], k: f64) -> Complex64 {
    if k == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    let (mut re, mut im) = (0.0, 0.0);
    for &v in values {
        let (s, c) = (k * v).sin_cos();
        re += c;
        im += s;
    }
    Complex64::new(re, im) / values.len() as f64
}

/// Sample mean of `exp(i k z)` at each grid point.
pub fn empirical_cf(values: &[f64], k_grid: &[f64]) -> Result<Vec<Complex64>> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    #[cfg(feature = "parallel")]
    let out = k_grid.par_iter().map(|&k| cf_at(values, k)).collect();
    #[cfg(not(feature = "parallel"))]
    let out = k_grid.iter().map(|&k| cf_at(values, k)).collect();
    Ok(out)
}

pub fn write_cf_csv<W: Write>(w: W, k_grid: &[f64], cf: &[Complex64]) -> io::Result<()> {
    write_columns(
        w,
        &["k", "re", "im"],
        k_grid.iter().zip(cf).map(|(k, c)| vec![*k, c.re, c.im]),
    )
}

/// `n` evenly spaced points on `[lo, hi]`.
pub fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AFEstimate {
    /// Lags in time units.
    pub lags: Vec<f64>,
    pub values: Vec<Complex64>,
    /// Batch-means standard error of each value (modulus of the complex error).
    pub std_errors: Vec<f64>,
    /// Lag indices where the joint CF estimate is too close to zero for its log to be trusted.
    pub unreliable: Vec<usize>,
    pub n_samples: usize,
}

impl AFEstimate {
    pub fn write_csv<W: Write>(&self, w: W) -> io::Result<()> {
        write_columns(
            w,
            &["lag", "re", "im"],
            self.lags.iter().zip(&self.values).map(|(t, a)| vec![*t, a.re, a.im]),
        )
    }
}

pub const AF_BATCHES: usize = 10;

fn af_from_sums(psi: Complex64, phi_late: Complex64, phi_early_conj: Complex64) -> Complex64 {
    psi.ln() - phi_late.ln() - phi_early_conj.ln()
}

fn af_lag(w: &[Complex64], n: usize) -> (Complex64, f64, bool) {
    let count = w.len() - n;
    let batch = count.div_ceil(AF_BATCHES);
    let mut total = [Complex64::new(0.0, 0.0); 3];
    let mut per_batch = Vec::with_capacity(AF_BATCHES);
    for start in (0..count).step_by(batch.max(1)) {
        let end = (start + batch).min(count);
        let mut s = [Complex64::new(0.0, 0.0); 3];
        for j in start..end {
            let (late, early) = (w[j + n], w[j]);
            s[0] += late * early.conj();
            s[1] += late;
            s[2] += early.conj();
        }
        let len = (end - start) as f64;
        per_batch.push(af_from_sums(s[0] / len, s[1] / len, s[2] / len));
        for (t, v) in total.iter_mut().zip(s) {
            *t += v;
        }
    }
    let c = count as f64;
    let psi = total[0] / c;
    let value = af_from_sums(psi, total[1] / c, total[2] / c);
    let nb = per_batch.len() as f64;
    let mean: Complex64 = per_batch.iter().sum::<Complex64>() / nb;
    let var = per_batch.iter().map(|a| (a - mean).norm_sqr()).sum::<f64>() / (nb - 1.0).max(1.0);
    let std_error = (var / nb).sqrt();
    (value, std_error, psi.norm() < 10.0 / c.sqrt())
}

/// Autocodifference estimate at lags `0..=max_lag_steps` sample steps.
///
/// `A(n Dt) = log Psi(1,-1,n) - log Phi_[n,N-1](1) - log Phi_[0,N-1-n](-1)` on the
/// principal branch.
pub fn autocodifference(values: &[f64], sample_dt: f64, max_lag_steps: usize) -> Result<AFEstimate> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    if max_lag_steps > values.len() / 100 {
        return Err(Error::InvalidArgument(format!(
            "max lag {max_lag_steps} exceeds 1% of the series length {}",
            values.len()
        )));
    }
    let w: Vec<Complex64> = values.iter().map(|&v| Complex64::from_polar(1.0, v)).collect();
    let lags: Vec<usize> = (0..=max_lag_steps).collect();
    #[cfg(feature = "parallel")]
    let per_lag: Vec<_> = lags.par_iter().map(|&n| af_lag(&w, n)).collect();
    #[cfg(not(feature = "parallel"))]
    let per_lag: Vec<_> = lags.iter().map(|&n| af_lag(&w, n)).collect();
    Ok(AFEstimate {
        lags: lags.iter().map(|&n| n as f64 * sample_dt).collect(),
        values: per_lag.iter().map(|r| r.0).collect(),
        std_errors: per_lag.iter().map(|r| r.1).collect(),
        unreliable: per_lag.iter().enumerate().filter(|(_, r)| r.2).map(|(i, _)| i).collect(),
        n_samples: values.len(),
    })
}

/// Closed-form autocodifference of the stationary linear fluctuation
/// `d xi = -(1 - ac) xi dt + ab dL` driven by noise of skewness `beta`.
pub fn autocodiff_linear_analytic(tau: f64, a: f64, b: f64, c: f64, alpha: f64, beta: f64) -> Result<Complex64> {
    let k = 1.0 - a * c;
    if !(k > 0.0) {
        return Err(Error::InvalidArgument(format!("need 1 - ac > 0, got {k}")));
    }
    let pre = (a * b).abs().powf(alpha) / (alpha * k);
    let decay = (-alpha * k * tau).exp();
    let gap = (1.0 - (-k * tau).exp()).abs().powf(alpha);
    let tan = if alpha == 2.0 {
        0.0
    } else {
        (std::f64::consts::FRAC_PI_2 * alpha).tan()
    };
    Ok(Complex64::new(
        pre * (1.0 + decay - gap),
        -beta * tan * pre * ((1.0 - decay) - gap),
    ))
}

/// Every `stride`-th value starting from the first.
pub fn subsample(values: &[f64], stride: usize) -> Vec<f64> {
    values.iter().step_by(stride.max(1)).copied().collect()
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let sorted = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        s
    };
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Default decorrelation stride in samples.
pub const DEFAULT_STRIDE: usize = 100;

/// KS distance between the stride-subsamples of two series.
pub fn ks_subsampled(a: &[f64], b: &[f64], stride: usize) -> Result<f64> {
    ks_distance(&subsample(a, stride), &subsample(b, stride))
}

/// Centred moving average over `window` bins, shrinking at the edges.
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Local maxima of the `window`-bin smoothed density whose height is at least
/// `min_relative_height` of the global maximum. Plateaus count once.
pub fn mode_count(densities: &[f64], window: usize, min_relative_height: f64) -> usize {
    let s = smooth(densities, window);
    let top = s.iter().cloned().fold(0.0, f64::max);
    let mut count = 0;
    let mut i = 0;
    while i < s.len() {
        let mut j = i;
        while j + 1 < s.len() && s[j + 1] == s[i] {
            j += 1;
        }
        let rises = i == 0 || s[i - 1] < s[i];
        let falls = j + 1 == s.len() || s[j + 1] < s[j];
        if rises && falls && s[i] >= min_relative_height * top && s[i] > 0.0 {
            count += 1;
        }
        i = j + 1;
    }
    count
}

/// Fraction of values with `|v| > threshold`.
pub fn tail_mass(values: &[f64], threshold: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|v| v.abs() > threshold).count() as f64 / values.len() as f64
}
