//! Closed-form Neumann Green and Robin functions of the flat unit disk.
//!
//! With `ξ* = ξ/|ξ|²` the image point,
//!
//! ```text
//! N(x, ξ) = −(1/2π)[log|x−ξ| + log(|ξ|·|x−ξ*|)] + (|x|² + |ξ|²)/(4π) + c₀,   c₀ = −3/(8π)
//! R(ξ)    = −(1/2π) log(1 − |ξ|²) + |ξ|²/(2π) + c₀
//! ```
//!
//! For a boundary source (`|ξ| = 1`) the image coincides with the source and
//! `N = −(1/π) log|x−ξ| + (|x|² + 1)/(4π) + c₀`, whose finite part is `1/(8π)`.
//! The `verify_*` functions check the defining conditions directly so that none of
//! these formulas has to be trusted as given.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geom::{self, Point};
use crate::quadrature::gauss_legendre;

pub const C0: f64 = -3.0 / (8.0 * PI);

/// Largest `|ξ|` for which the Robin function is reported as finite.
pub const ROBIN_RADIUS_LIMIT: f64 = 1.0 - 1e-8;

fn image(xi: Point) -> Point {
    geom::scale(xi, 1.0 / geom::dot(xi, xi))
}

/// `log(|ξ|·|x − ξ*|)`, with the `ξ → 0` limit `0`.
fn image_log(x: Point, xi: Point) -> f64 {
    let r2 = geom::dot(xi, xi);
    if r2 == 0.0 {
        return 0.0;
    }
    // |ξ|·|x − ξ/|ξ|²| = |x|ξ| − ξ/|ξ||
    let r = r2.sqrt();
    geom::norm(geom::sub(geom::scale(x, r), geom::scale(xi, 1.0 / r))).ln()
}

/// Neumann Green function of the unit disk for an interior source.
pub fn disk_green_exact(x: Point, xi: Point) -> Result<f64> {
    if geom::norm(x) > 1.0 + 1e-12 || geom::norm(xi) >= 1.0 {
        return Err(Error::Domain("points must lie in the unit disk".into()));
    }
    let d = geom::dist(x, xi);
    if d == 0.0 {
        return Err(Error::SingularEvaluation);
    }
    Ok(-(d.ln() + image_log(x, xi)) / (2.0 * PI)
        + (geom::dot(x, x) + geom::dot(xi, xi)) / (4.0 * PI)
        + C0)
}

/// Neumann Green function of the unit disk for a source on the unit circle.
pub fn disk_green_boundary_exact(x: Point, xi: Point) -> Result<f64> {
    let d = geom::dist(x, xi);
    if d == 0.0 {
        return Err(Error::SingularEvaluation);
    }
    Ok(-d.ln() / PI + (geom::dot(x, x) + 1.0) / (4.0 * PI) + C0)
}

/// `∇_x N(x, ξ)`.
pub fn disk_green_gradient(x: Point, xi: Point) -> Point {
    let a = geom::sub(x, xi);
    let mut g = geom::scale(a, -1.0 / (2.0 * PI * geom::dot(a, a)));
    if geom::dot(xi, xi) > 0.0 {
        let b = geom::sub(x, image(xi));
        g = geom::add(g, geom::scale(b, -1.0 / (2.0 * PI * geom::dot(b, b))));
    }
    geom::add(g, geom::scale(x, 1.0 / (2.0 * PI)))
}

/// Laplacian in `x` of the non-singular part `N + (1/2π) log|x−ξ|`, computed from the
/// exact second derivatives of each term.
pub fn disk_green_regular_laplacian(x: Point, xi: Point) -> f64 {
    // ∂²/∂x² log|z| + ∂²/∂y² log|z| with z = x − ξ*, from the explicit Hessian.
    let log_hessian_trace = |z: Point| {
        let r2 = geom::dot(z, z);
        let hxx = (z[1] * z[1] - z[0] * z[0]) / (r2 * r2);
        let hyy = (z[0] * z[0] - z[1] * z[1]) / (r2 * r2);
        hxx + hyy
    };
    let image_part = if geom::dot(xi, xi) > 0.0 {
        -log_hessian_trace(geom::sub(x, image(xi))) / (2.0 * PI)
    } else {
        0.0
    };
    // Δ(|x|²/(4π)) = 4/(4π).
    image_part + 4.0 / (4.0 * PI)
}

/// Robin function of the flat unit disk; `+∞` beyond [`ROBIN_RADIUS_LIMIT`].
pub fn disk_robin_exact(xi: Point) -> f64 {
    let r2 = geom::dot(xi, xi);
    if r2.sqrt() > ROBIN_RADIUS_LIMIT {
        return f64::INFINITY;
    }
    -(1.0 - r2).ln() / (2.0 * PI) + r2 / (2.0 * PI) + C0
}

/// Robin function at a boundary point of the flat unit disk (constant).
pub fn disk_robin_boundary_exact() -> f64 {
    1.0 / (8.0 * PI)
}

/// `dR/dr` at radius `r < 1`.
pub fn disk_robin_radial_derivative(r: f64) -> f64 {
    r / (PI * (1.0 - r * r)) + r / PI
}

/// Scaling law for `ψ ≡ c`: the Green function is unchanged and the Robin function
/// shifts by `log c / (2κ)`.
pub fn robin_shift_for_constant_factor(c: f64, kappa: f64) -> f64 {
    c.ln() / (2.0 * kappa)
}

/// Largest `|∂_r N|` over `n` equally spaced boundary angles.
pub fn verify_normal_derivative(xi: Point, n: usize) -> f64 {
    (0..n)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / n as f64;
            let x = [a.cos(), a.sin()];
            geom::dot(x, disk_green_gradient(x, xi)).abs()
        })
        .fold(0.0, f64::max)
}

/// `∫_D N(x, ξ) dx` by polar quadrature centred at the source.
///
/// Radial integrals use Gauss–Legendre with the graded substitution `ρ = ρ_max u⁴`
/// (which absorbs the `ρ log ρ` behaviour); the angular integrand is smooth and
/// periodic, so the trapezoidal rule converges geometrically.
pub fn verify_mean(xi: Point) -> f64 {
    let n_angle = 256;
    let (u, w) = gauss_legendre(40);
    let mut total = 0.0;
    for k in 0..n_angle {
        let a = 2.0 * PI * k as f64 / n_angle as f64;
        let e = [a.cos(), a.sin()];
        let b = geom::dot(xi, e);
        let rho_max = -b + (b * b + 1.0 - geom::dot(xi, xi)).sqrt();
        let mut radial = 0.0;
        for (ui, wi) in u.iter().zip(&w) {
            let rho = rho_max * ui.powi(4);
            let drho = rho_max * 4.0 * ui.powi(3) * wi;
            let x = geom::add(xi, geom::scale(e, rho));
            let g = -(rho.ln() + image_log(x, xi)) / (2.0 * PI)
                + (geom::dot(x, x) + geom::dot(xi, xi)) / (4.0 * PI)
                + C0;
            radial += g * rho * drho;
        }
        total += radial * 2.0 * PI / n_angle as f64;
    }
    total
}

/// `max_{x,ξ} |N(x, ξ) − N(ξ, x)|` over the given pairs.
pub fn verify_symmetry(pairs: &[(Point, Point)]) -> f64 {
    pairs
        .iter()
        .map(|&(x, y)| (disk_green_exact(x, y).unwrap() - disk_green_exact(y, x).unwrap()).abs())
        .fold(0.0, f64::max)
}

/// Richardson-extrapolated `lim_{ε→0} N(ξ + εe, ξ) + (1/2π) log ε`.
pub fn extrapolated_robin(xi: Point) -> f64 {
    let e = if geom::norm(xi) > 0.0 { geom::scale(xi, -1.0 / geom::norm(xi)) } else { [1.0, 0.0] };
    let finite = |eps: f64| {
        disk_green_exact(geom::add(xi, geom::scale(e, eps)), xi).unwrap() + eps.ln() / (2.0 * PI)
    };
    // The remainder is smooth in ε, so two Richardson steps remove O(ε) and O(ε²).
    let eps = 1e-3 * (1.0 - geom::norm(xi));
    let (a, b, c) = (finite(eps), finite(eps / 2.0), finite(eps / 4.0));
    let r1 = 2.0 * b - a;
    let r2 = 2.0 * c - b;
    (4.0 * r2 - r1) / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_point(rng: &mut ChaCha8Rng, rmax: f64) -> Point {
        let r = rmax * rng.gen::<f64>().sqrt();
        let a = 2.0 * PI * rng.gen::<f64>();
        [r * a.cos(), r * a.sin()]
    }

    #[test]
    fn regular_part_has_constant_laplacian() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let (x, xi) = (random_point(&mut rng, 1.0), random_point(&mut rng, 0.95));
            assert!((disk_green_regular_laplacian(x, xi) - 1.0 / PI).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_normal_derivative() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let xi = random_point(&mut rng, 0.9);
            assert!(verify_normal_derivative(xi, 256) < 1e-10);
        }
        assert!(verify_normal_derivative([0.0, 0.0], 64) < 1e-10);
    }

    #[test]
    fn zero_mean() {
        for xi in [[0.0, 0.0], [0.3, 0.0], [-0.2, 0.5], [0.0, -0.8]] {
            assert!(verify_mean(xi).abs() < 1e-10, "{xi:?}: {}", verify_mean(xi));
        }
    }

    #[test]
    fn symmetric_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pairs: Vec<_> =
            (0..20).map(|_| (random_point(&mut rng, 0.95), random_point(&mut rng, 0.95))).collect();
        assert!(verify_symmetry(&pairs) < 1e-13);
    }

    #[test]
    fn robin_is_the_diagonal_limit() {
        for r in [0.0, 0.3, 0.6, 0.8] {
            let xi = [r * 0.6, r * 0.8];
            let lim = extrapolated_robin(xi);
            assert!((lim - disk_robin_exact(xi)).abs() < 1e-9, "r = {r}: {lim}");
        }
    }

    #[test]
    fn robin_shape() {
        let mut prev = disk_robin_exact([0.0, 0.0]);
        for k in 1..100 {
            let r = k as f64 / 100.0;
            let v = disk_robin_exact([r, 0.0]);
            assert!(v > prev);
            prev = v;
            let h = 1e-6;
            let fd = (disk_robin_exact([r + h, 0.0]) - disk_robin_exact([r - h, 0.0])) / (2.0 * h);
            assert!((fd - disk_robin_radial_derivative(r)).abs() < 1e-6 * fd.abs().max(1.0));
        }
        let a = disk_robin_exact([0.5 * 0.3f64.cos(), 0.5 * 0.3f64.sin()]);
        let b = disk_robin_exact([0.5 * 2.1f64.cos(), 0.5 * 2.1f64.sin()]);
        assert!((a - b).abs() < 1e-14);
        assert_eq!(disk_robin_exact([1.0, 0.0]), f64::INFINITY);
        // Boundary rate: dR/dr · 2π(1 − r) → 1.
        let r = 1.0 - 1e-6;
        assert!((disk_robin_radial_derivative(r) * 2.0 * PI * (1.0 - r) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn boundary_source_finite_part() {
        let xi = [0.6, 0.8];
        for eps in [1e-3, 1e-5] {
            let x = geom::scale(xi, 1.0 - eps);
            let v = disk_green_boundary_exact(x, xi).unwrap() + eps.ln() / PI;
            assert!((v - disk_robin_boundary_exact()).abs() < 1e-2 * eps.sqrt());
        }
        // The boundary form is the limit of the interior one.
        let x = [0.1, -0.4];
        let near = disk_green_exact(x, geom::scale(xi, 1.0 - 1e-9)).unwrap();
        assert!((near - disk_green_boundary_exact(x, xi).unwrap()).abs() < 1e-7);
    }

    #[test]
    fn singular_and_domain_errors() {
        assert!(matches!(disk_green_exact([0.1, 0.2], [0.1, 0.2]), Err(Error::SingularEvaluation)));
        assert!(matches!(disk_green_exact([0.1, 0.2], [1.1, 0.0]), Err(Error::Domain(_))));
        // ξ = 0 limit form.
        let x = [0.3, 0.4];
        let v = disk_green_exact(x, [0.0, 0.0]).unwrap();
        assert!((v - (-(0.5f64).ln() / (2.0 * PI) + 0.25 / (4.0 * PI) + C0)).abs() < 1e-15);
    }
}
