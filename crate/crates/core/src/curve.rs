//! Closed boundary curves given by truncated Fourier series.
//!
//! The curve is `t ↦ (x(t), y(t))` for `t ∈ [0, L)` with
//! `x(t) = Σ_k a_k cos(kω t) + b_k sin(kω t)` (same for `y`) and `ω = 2π/L`.
//! Mode `k = 0` carries the centre offset (its sine coefficient is ignored).
//! Positions, tangents, normals and curvature are exact up to rounding.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Point};
use crate::quadrature::gauss_legendre;

/// Coefficients of one Fourier mode for both coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierMode {
    /// `(cos, sin)` coefficients of the x coordinate.
    pub x: (f64, f64),
    /// `(cos, sin)` coefficients of the y coordinate.
    pub y: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCurve {
    pub modes: Vec<FourierMode>,
    pub period: f64,
}

impl BoundaryCurve {
    pub fn new(modes: Vec<FourierMode>, period: f64) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::Geometry(format!("curve period must be positive, got {period}")));
        }
        if modes.len() < 2 {
            return Err(Error::Geometry("a closed curve needs at least one non-constant mode".into()));
        }
        let curve = Self { modes, period };
        if curve.rough_scale() == 0.0 {
            return Err(Error::Geometry("curve is a single point".into()));
        }
        let n = 512;
        for i in 0..n {
            let t = curve.period * i as f64 / n as f64;
            if geom::norm(curve.tangent(t)) < 1e-12 * curve.rough_scale() {
                return Err(Error::Geometry(format!("tangent vanishes at t = {t}")));
            }
        }
        Ok(curve)
    }

    /// Circle of the given radius, positively oriented, parameter = angle.
    pub fn circle(center: Point, radius: f64) -> Self {
        Self::ellipse(center, radius, radius)
    }

    /// Axis-aligned ellipse with semi-axes `a` (along x) and `b` (along y).
    pub fn ellipse(center: Point, a: f64, b: f64) -> Self {
        Self {
            modes: vec![
                FourierMode { x: (center[0], 0.0), y: (center[1], 0.0) },
                FourierMode { x: (a, 0.0), y: (0.0, b) },
            ],
            period: 2.0 * PI,
        }
    }

    fn omega(&self) -> f64 {
        2.0 * PI / self.period
    }

    fn rough_scale(&self) -> f64 {
        self.modes.iter().skip(1).map(|m| m.x.0.abs() + m.x.1.abs() + m.y.0.abs() + m.y.1.abs()).sum()
    }

    /// Derivative of order `order` (0..=2) with respect to the parameter.
    fn eval(&self, t: f64, order: u32) -> Point {
        let w = self.omega();
        let mut p = [0.0; 2];
        for (k, m) in self.modes.iter().enumerate() {
            if k == 0 {
                if order == 0 {
                    p[0] += m.x.0;
                    p[1] += m.y.0;
                }
                continue;
            }
            let kw = k as f64 * w;
            let (s, c) = (kw * t).sin_cos();
            let (dc, ds) = match order {
                0 => (c, s),
                1 => (-kw * s, kw * c),
                _ => (-kw * kw * c, -kw * kw * s),
            };
            p[0] += m.x.0 * dc + m.x.1 * ds;
            p[1] += m.y.0 * dc + m.y.1 * ds;
        }
        p
    }

    pub fn position(&self, t: f64) -> Point {
        self.eval(t, 0)
    }

    /// dγ/dt.
    pub fn tangent(&self, t: f64) -> Point {
        self.eval(t, 1)
    }

    pub fn second_derivative(&self, t: f64) -> Point {
        self.eval(t, 2)
    }

    /// |dγ/dt|.
    pub fn speed(&self, t: f64) -> f64 {
        geom::norm(self.tangent(t))
    }

    /// Unit outward normal for a positively oriented curve.
    pub fn normal(&self, t: f64) -> Point {
        let d = self.tangent(t);
        let s = geom::norm(d);
        [d[1] / s, -d[0] / s]
    }

    /// Signed curvature (positive for a counter-clockwise convex curve).
    pub fn curvature(&self, t: f64) -> f64 {
        let d = self.tangent(t);
        let dd = self.second_derivative(t);
        geom::cross(d, dd) / geom::norm(d).powi(3)
    }

    /// Wraps a parameter into `[0, L)`.
    pub fn wrap(&self, t: f64) -> f64 {
        let r = t.rem_euclid(self.period);
        if r >= self.period {
            0.0
        } else {
            r
        }
    }

    /// Arclength between parameters `t0 <= t1` (no wrapping).
    pub fn arclength(&self, t0: f64, t1: f64) -> f64 {
        let (x, w) = gauss_legendre(16);
        let pieces = 1 + ((t1 - t0).abs() / self.period * 64.0).ceil() as usize;
        let dt = (t1 - t0) / pieces as f64;
        let mut s = 0.0;
        for p in 0..pieces {
            let a = t0 + p as f64 * dt;
            for (xi, wi) in x.iter().zip(&w) {
                s += wi * dt * self.speed(a + xi * dt);
            }
        }
        s
    }

    pub fn length(&self) -> f64 {
        self.arclength(0.0, self.period)
    }

    /// Enclosed signed area (positive for counter-clockwise orientation).
    pub fn signed_area(&self) -> f64 {
        let (x, w) = gauss_legendre(16);
        let pieces = 64;
        let dt = self.period / pieces as f64;
        let mut s = 0.0;
        for p in 0..pieces {
            let a = p as f64 * dt;
            for (xi, wi) in x.iter().zip(&w) {
                let t = a + xi * dt;
                s += 0.5 * wi * dt * geom::cross(self.position(t), self.tangent(t));
            }
        }
        s
    }

    /// Parameters `t_0 = 0 < t_1 < … < t_{n-1}` splitting the curve into `n` arcs
    /// of equal length.
    pub fn equal_arclength_params(&self, n: usize) -> Vec<f64> {
        let total = self.length();
        let mut out = Vec::with_capacity(n);
        out.push(0.0);
        let mut t = 0.0;
        let mut s_at_t = 0.0;
        for i in 1..n {
            let target = total * i as f64 / n as f64;
            // Newton on s(t) = target, starting from the previous node.
            let mut guess = t + (target - s_at_t) / self.speed(t);
            for _ in 0..50 {
                let s = s_at_t + self.arclength(t, guess);
                let step = (s - target) / self.speed(guess);
                guess -= step;
                if step.abs() < 1e-15 * self.period {
                    break;
                }
            }
            s_at_t += self.arclength(t, guess);
            t = guess;
            out.push(t);
        }
        out
    }

    /// Dense polygon through `n` parameter-uniform samples.
    pub fn sample(&self, n: usize) -> Vec<Point> {
        (0..n).map(|i| self.position(self.period * i as f64 / n as f64)).collect()
    }

    /// Largest distance between two curve points (from a dense sampling).
    pub fn diameter(&self) -> f64 {
        let pts = self.sample(720);
        let mut d: f64 = 0.0;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                d = d.max(geom::dist(pts[i], pts[j]));
            }
        }
        d
    }

    /// Smallest radius of curvature along the curve.
    pub fn min_curvature_radius(&self) -> f64 {
        let n = 2048;
        (0..n)
            .map(|i| self.curvature(self.period * i as f64 / n as f64).abs())
            .fold(0.0, f64::max)
            .recip()
    }

    /// Radius of the largest disk contained in the enclosed domain: a grid search over
    /// interior points followed by a compass search on the distance to the curve.
    pub fn inradius(&self) -> f64 {
        let poly = self.sample(1024);
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &poly {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let dist = |p: Point| {
            if geom::point_in_polygon(p, &poly) {
                geom::dist(p, self.position(self.closest_param(p)))
            } else {
                0.0
            }
        };
        let n = 48;
        let mut best = ([0.0; 2], -1.0);
        for i in 0..=n {
            for j in 0..=n {
                let p = [
                    lo[0] + (hi[0] - lo[0]) * i as f64 / n as f64,
                    lo[1] + (hi[1] - lo[1]) * j as f64 / n as f64,
                ];
                let d = dist(p);
                if d > best.1 {
                    best = (p, d);
                }
            }
        }
        let mut step = (hi[0] - lo[0]).max(hi[1] - lo[1]) / n as f64;
        while step > 1e-12 * self.rough_scale() {
            let mut moved = false;
            for dir in [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]] {
                let p = geom::add(best.0, geom::scale(dir, step));
                let d = dist(p);
                if d > best.1 {
                    best = (p, d);
                    moved = true;
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        best.1
    }

    /// Closest curve parameter to `p` (global sampling followed by Newton refinement).
    pub fn closest_param(&self, p: Point) -> f64 {
        let n = 720;
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..n {
            let t = self.period * i as f64 / n as f64;
            let d = geom::dist(self.position(t), p);
            if d < best.0 {
                best = (d, t);
            }
        }
        let mut t = best.1;
        for _ in 0..30 {
            let r = geom::sub(self.position(t), p);
            let d1 = self.tangent(t);
            let d2 = self.second_derivative(t);
            let g = geom::dot(r, d1);
            let h = geom::dot(d1, d1) + geom::dot(r, d2);
            if h <= 0.0 {
                break;
            }
            let step = g / h;
            t -= step;
            if step.abs() < 1e-15 * self.period {
                break;
            }
        }
        self.wrap(t)
    }
}
