//! Adaptive quadrature: Gauss–Kronrod (7/15) for complex integrands and
//! adaptive Simpson for real ones.

use num_complex::Complex64;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5) and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: Complex64,
    pub error: f64,
    pub evaluations: usize,
}

fn gk15(f: &dyn Fn(f64) -> Complex64, a: f64, b: f64) -> (Complex64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += pair * WGK[j];
        if j % 2 == 1 {
            gauss += pair * WG[j / 2];
        }
    }
    ((kronrod * h), ((kronrod - gauss) * h).norm())
}

/// Globally adaptive G7-K15 on `[a, b]` with the given breakpoints.
///
/// Bisects the interval with the largest error estimate until the total
/// falls below `abs_tol` or the evaluation budget is spent.
pub fn gauss_kronrod(
    f: &dyn Fn(f64) -> Complex64,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    abs_tol: f64,
    max_intervals: usize,
) -> Result<Quadrature> {
    if a == b {
        return Ok(Quadrature {
            value: Complex64::new(0.0, 0.0),
            error: 0.0,
            evaluations: 0,
        });
    }
    let mut points: Vec<f64> = std::iter::once(a)
        .chain(breakpoints.iter().copied().filter(|&p| p > a.min(b) && p < a.max(b)))
        .chain(std::iter::once(b))
        .collect();
    if a > b {
        points[1..].sort_by(|x, y| y.total_cmp(x));
    } else {
        points.sort_by(f64::total_cmp);
    }
    points.dedup();
    let mut intervals: Vec<(f64, f64, Complex64, f64)> = points
        .windows(2)
        .map(|w| {
            let (v, e) = gk15(f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();
    let mut evaluations = 15 * intervals.len();
    loop {
        let error: f64 = intervals.iter().map(|iv| iv.3).sum();
        if error <= abs_tol || intervals.len() >= max_intervals {
            let value = intervals.iter().map(|iv| iv.2).sum();
            if error > abs_tol {
                return Err(Error::Quadrature {
                    estimate: error,
                    tolerance: abs_tol,
                });
            }
            return Ok(Quadrature {
                value,
                error,
                evaluations,
            });
        }
        let worst = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .expect("nonempty");
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            return Err(Error::Quadrature {
                estimate: error,
                tolerance: abs_tol,
            });
        }
        for (u, v) in [(lo, mid), (mid, hi)] {
            let (val, err) = gk15(f, u, v);
            intervals.push((u, v, val, err));
        }
        evaluations += 30;
    }
}

/// Breakpoints `w, 2w, 4w, ...` below `end`, for integrands that decay like `exp(-s/w)`.
pub fn layer_breakpoints(width: f64, end: f64) -> Vec<f64> {
    let mut points = Vec::new();
    let mut p = width;
    while p < end && points.len() < 64 {
        points.push(p);
        p *= 2.0;
    }
    points
}

/// Real-valued convenience wrapper around [`gauss_kronrod`].
pub fn integrate_real(f: &dyn Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    let g = |x: f64| Complex64::new(f(x), 0.0);
    Ok(gauss_kronrod(&g, a, b, &[], abs_tol, 10_000)?.value.re)
}

/// Adaptive Simpson rule with Richardson correction.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        (a, fa): (f64, f64),
        (m, fm): (f64, f64),
        (b, fb): (f64, f64),
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if !delta.is_finite() {
            return Err(Error::Quadrature {
                estimate: f64::INFINITY,
                tolerance: tol,
            });
        }
        if delta.abs() <= 15.0 * tol {
            return Ok(left + right + delta / 15.0);
        }
        if depth == 0 {
            return Err(Error::Quadrature {
                estimate: delta.abs() / 15.0,
                tolerance: tol,
            });
        }
        Ok(recurse(f, (a, fa), (lm, flm), (m, fm), left, 0.5 * tol, depth - 1)?
            + recurse(f, (m, fm), (rm, frm), (b, fb), right, 0.5 * tol, depth - 1)?)
    }
    if a == b {
        return Ok(0.0);
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, (a, fa), (m, fm), (b, fb), whole, abs_tol, 50)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let f = |x: f64| Complex64::new(x.powi(5) - 3.0 * x, x * x);
        let q = gauss_kronrod(&f, -1.0, 2.0, &[], 1e-13, 100).unwrap();
        assert!((q.value.re - (64.0 / 6.0 - 1.0 / 6.0 - 4.5)).abs() < 1e-12);
        assert!((q.value.im - 3.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_layer() {
        let eps = 1e-4;
        let f = |x: f64| Complex64::new((-x / eps).exp() + 1.0, 0.0);
        let q = gauss_kronrod(&f, 0.0, 1.0, &layer_breakpoints(5.0 * eps, 1.0), 1e-12, 1000).unwrap();
        let exact = eps * (1.0 - (-1.0 / eps).exp()) + 1.0;
        assert!((q.value.re - exact).abs() < 1e-12);
    }

    #[test]
    fn reversed_limits() {
        let f = |x: f64| Complex64::new(x.cos(), 0.0);
        let q = gauss_kronrod(&f, 1.0, 0.0, &[0.5], 1e-13, 100).unwrap();
        assert!((q.value.re + 1f64.sin()).abs() < 1e-13);
    }

    #[test]
    fn simpson() {
        let v = adaptive_simpson(&|x: f64| 1.0 / x, 1.0, 10.0, 1e-10).unwrap();
        assert!((v - 10f64.ln()).abs() < 1e-9);
        let v = adaptive_simpson(&|x: f64| x.abs(), -1.0, 2.0, 1e-10).unwrap();
        assert!((v - 2.5).abs() < 1e-9);
        assert!((adaptive_simpson(&|x: f64| x.exp(), 1.0, 0.0, 1e-10).unwrap() + (1f64.exp() - 1.0)).abs() < 1e-9);
    }

    #[test]
    fn nonconvergence_reported() {
        let f = |x: f64| Complex64::new(1.0 / x.abs().sqrt().max(1e-300), 0.0);
        assert!(matches!(
            gauss_kronrod(&f, -1.0, 1.0, &[], 1e-14, 20),
            Err(Error::Quadrature { .. })
        ));
    }
}
