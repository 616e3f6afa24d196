//! Quadrature rules: Gauss–Legendre on `[0, 1]`, a degree-5 triangle rule and a
//! Duffy-type rule for integrands with a logarithmic point singularity.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use crate::geom::{self, Point};

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    static CACHE: OnceLock<Mutex<HashMap<usize, (Vec<f64>, Vec<f64>)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = cache.lock().unwrap().get(&n) {
        return rule.clone();
    }
    let rule = compute_gauss_legendre(n);
    cache.lock().unwrap().insert(n, rule.clone());
    rule
}

fn compute_gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = 0.5 * (1.0 - z);
        w[i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Degree-5 seven-point rule (barycentric coordinates, weights summing to one).
pub fn triangle_rule() -> &'static [([f64; 3], f64)] {
    static RULE: OnceLock<Vec<([f64; 3], f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let s = 15f64.sqrt();
        let a = (6.0 - s) / 21.0;
        let b = (6.0 + s) / 21.0;
        let wa = (155.0 - s) / 1200.0;
        let wb = (155.0 + s) / 1200.0;
        vec![
            ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 9.0 / 40.0),
            ([a, a, 1.0 - 2.0 * a], wa),
            ([a, 1.0 - 2.0 * a, a], wa),
            ([1.0 - 2.0 * a, a, a], wa),
            ([b, b, 1.0 - 2.0 * b], wb),
            ([b, 1.0 - 2.0 * b, b], wb),
            ([1.0 - 2.0 * b, b, b], wb),
        ]
    })
}

/// Quadrature points `(position, weight)` on triangle `tri` concentrated towards `pole`.
///
/// The triangle is split at the closest point `q` to `pole` and each sub-triangle is
/// mapped from the unit square with a collapsed (Duffy) map whose radial variable is
/// raised to the fifth power; edges are graded towards the foot of the perpendicular
/// from `q`. Integrands behaving like `r^k log r` at `q` are integrated to near
/// machine precision. Returned weights include the area element.
pub fn pole_rule(tri: [Point; 3], pole: Point, n: usize) -> Vec<(Point, f64)> {
    let q = geom::closest_point_on_triangle(pole, tri[0], tri[1], tri[2]);
    let (x, w) = gauss_legendre(n);
    let mut out = Vec::with_capacity(6 * n * n);
    for (a, b) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
        let len = geom::dist(a, b);
        let area2 = 2.0 * geom::signed_area(q, a, b);
        if area2.abs() <= 1e-14 * len * len {
            continue;
        }
        for (s0, s1) in edge_pieces(q, a, b) {
            let a2 = geom::lerp(a, b, s0);
            let b2 = geom::lerp(a, b, s1);
            let jac = area2.abs() * (s1 - s0);
            for (xi, wi) in x.iter().zip(&w) {
                // u = xi^5, du = 5 xi^4 dxi
                let u = xi.powi(5);
                let du = 5.0 * xi.powi(4) * wi;
                for (vj, wj) in x.iter().zip(&w) {
                    let p = geom::lerp(q, geom::lerp(a2, b2, *vj), u);
                    if p == q {
                        continue;
                    }
                    out.push((p, du * wj * u * jac));
                }
            }
        }
    }
    out
}

/// Splits `[0, 1]` along the edge `[a, b]` into pieces graded geometrically away from
/// the foot of the perpendicular from `q`, each no longer than its distance to `q`.
fn edge_pieces(q: Point, a: Point, b: Point) -> Vec<(f64, f64)> {
    let len = geom::dist(a, b);
    let (d, foot) = geom::segment_distance(q, a, b);
    let h = (d / len).max(1e-6);
    let mut cuts = vec![0.0, 1.0, foot];
    let mut step = h;
    while step < 1.0 {
        cuts.push(foot - step);
        cuts.push(foot + step);
        step *= 2.0;
    }
    cuts.retain(|c| (0.0..=1.0).contains(c));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
    cuts.windows(2).map(|c| (c[0], c[1])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in 1..12 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..(2 * n) {
                let s: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
                assert_relative_eq!(s, 1.0 / (deg as f64 + 1.0), max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn triangle_rule_is_degree_five() {
        let (a, b, c) = ([0.0, 0.0], [1.0, 0.0], [0.0, 1.0]);
        // ∫_T x^i y^j = i! j! / (i + j + 2)!
        let fact = |k: u32| (1..=k).product::<u32>().max(1) as f64;
        for i in 0..=5u32 {
            for j in 0..=(5 - i) {
                let s: f64 = triangle_rule()
                    .iter()
                    .map(|(l, w)| {
                        let x = l[0] * a[0] + l[1] * b[0] + l[2] * c[0];
                        let y = l[0] * a[1] + l[1] * b[1] + l[2] * c[1];
                        0.5 * w * x.powi(i as i32) * y.powi(j as i32)
                    })
                    .sum();
                let exact = fact(i) * fact(j) / fact(i + j + 2);
                assert_relative_eq!(s, exact, max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn pole_rule_integrates_log_singularity() {
        // Unit right triangle with the pole at a vertex, reference in polar form:
        // ∫_T log r dA = ∫_0^{π/2} ∫_0^{1/(cos t + sin t)} r log r dr dt.
        let tri = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let approx: f64 = pole_rule(tri, [0.0, 0.0], 10)
            .iter()
            .map(|(p, w)| w * geom::norm(*p).ln())
            .sum();
        let (x, w) = gauss_legendre(40);
        let mut exact = 0.0;
        for (ti, wi) in x.iter().zip(&w) {
            let t = ti * std::f64::consts::FRAC_PI_2;
            let rmax = 1.0 / (t.cos() + t.sin());
            // ∫_0^R r ln r dr = R^2 (2 ln R - 1) / 4
            exact += wi * std::f64::consts::FRAC_PI_2 * rmax * rmax * (2.0 * rmax.ln() - 1.0) / 4.0;
        }
        assert_relative_eq!(approx, exact, max_relative = 1e-11);
        // Interior pole.
        let approx_in: f64 = pole_rule(tri, [0.2, 0.3], 10)
            .iter()
            .map(|(p, w)| w * geom::dist(*p, [0.2, 0.3]).ln())
            .sum();
        let fine: f64 = pole_rule(tri, [0.2, 0.3], 24)
            .iter()
            .map(|(p, w)| w * geom::dist(*p, [0.2, 0.3]).ln())
            .sum();
        assert_relative_eq!(approx_in, fine, max_relative = 1e-11);
    }
}
