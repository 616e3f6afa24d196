//! Power-law fits for blow-up tables.

use faer::linalg::solvers::SolveLstsq;
use faer::Mat;
use serde::Serialize;

use crate::error::{Error, Result};

/// `y ≈ A·x^p + B + C·x`: a singular power plus the first two Taylor terms of a
/// smooth remainder.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PowerFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub offset: f64,
    pub linear: f64,
    /// Root-mean-square relative residual.
    pub rms_rel: f64,
}

impl PowerFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.prefactor * x.powf(self.exponent) + self.offset + self.linear * x
    }
}

/// Least-squares slope and intercept of `log y` against `log x`.
pub fn fit_loglog(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    check(x, y, 2)?;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, (my - slope * mx).exp()))
}

/// Exponent search range of [`fit_power_law`] (blow-up rates only).
const EXPONENT_RANGE: (f64, f64) = (-4.0, -0.1);

/// Fits `A·x^p + B + C·x` by minimizing the relative residual; `(A, B, C)` are linear
/// for fixed `p`, and `p` is located by a grid scan followed by golden-section
/// refinement.
pub fn fit_power_law(x: &[f64], y: &[f64]) -> Result<PowerFit> {
    check(x, y, 4)?;
    let (lo, hi) = EXPONENT_RANGE;
    let grid = 780;
    let mut best = (f64::INFINITY, lo);
    for k in 0..=grid {
        let p = lo + (hi - lo) * k as f64 / grid as f64;
        let r = linear_part(x, y, p).1;
        if r < best.0 {
            best = (r, p);
        }
    }
    let h = (hi - lo) / grid as f64;
    let (mut a, mut b) = ((best.1 - h).max(lo), (best.1 + h).min(hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if linear_part(x, y, c).1 < linear_part(x, y, d).1 {
            b = d;
        } else {
            a = c;
        }
    }
    let p = 0.5 * (a + b);
    let ([pa, pb, pc], r) = linear_part(x, y, p);
    if !r.is_finite() {
        return Err(Error::Numerical("power-law fit is degenerate".into()));
    }
    Ok(PowerFit { exponent: p, prefactor: pa, offset: pb, linear: pc, rms_rel: (r / x.len() as f64).sqrt() })
}

/// Coefficients `(A, B, C)` and the sum of squared relative residuals for a fixed
/// exponent.
fn linear_part(x: &[f64], y: &[f64], p: f64) -> ([f64; 3], f64) {
    let mut a = Mat::<f64>::zeros(x.len(), 3);
    let mut rhs = Mat::<f64>::zeros(x.len(), 1);
    for (k, (xi, yi)) in x.iter().zip(y).enumerate() {
        a[(k, 0)] = xi.powf(p) / yi;
        a[(k, 1)] = 1.0 / yi;
        a[(k, 2)] = xi / yi;
        rhs[(k, 0)] = 1.0;
    }
    let c = a.qr().solve_lstsq(&rhs);
    let coef = [c[(0, 0)], c[(1, 0)], c[(2, 0)]];
    if coef.iter().any(|v| !v.is_finite()) {
        return (coef, f64::INFINITY);
    }
    let res = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| ((coef[0] * xi.powf(p) + coef[1] + coef[2] * xi - yi) / yi).powi(2))
        .sum();
    (coef, res)
}

fn check(x: &[f64], y: &[f64], min: usize) -> Result<()> {
    if x.len() != y.len() || x.len() < min {
        return Err(Error::Usage(format!("need at least {min} paired samples")));
    }
    if x.iter().chain(y).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Domain("power-law fits need positive finite samples".into()));
    }
    Ok(())
}
