//! Neumann Green and Robin functions through the singular/regular split
//!
//! ```text
//! G(x, ξ) = −(1/κ) χ(|x−ξ|/δ) log|x−ξ| + H(x, ξ),      κ = 2π (interior), π (boundary)
//! ```
//!
//! The regular part solves `−Δ_g H = −1/|Σ|_g − (1/κ)ψ⁻¹F` with `∂_ν H = (1/κ)Q` and
//! `∫H dv_g = (1/κ)∫χ log|x−ξ| dv_g`, where (with `c(r) = χ(r/δ)`)
//!
//! ```text
//! F = Δc·log r + 2∇c·∇log r = (c'' + c'/r) log r + 2c'/r,      Q = ∂_n(c log r).
//! ```
//!
//! `F`, `Q` and the singular moments `w_i = ∫ c log r φ_i dx` do not depend on ψ, so they
//! are assembled once per source ([`SourceLoad`]) and reused across metrics. All of them
//! are evaluated in closed form at quadrature points; `Q` is integrated along the exact
//! boundary curve.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::{ConformalMetric, Discretization, OperatorBundle, ScalarField};
use crate::geom::{self, Point};
use crate::mesh::{Location, Mesh};
use crate::quadrature::{gauss_legendre, pole_rule, triangle_rule};
use crate::recovery::Stencil;

/// Cutoff `χ`: 1 on `[−1, 1]`, 0 outside `(−2, 2)`, a degree-9 polynomial in between
/// (C⁴ at both junctions).
pub fn cutoff(s: f64) -> f64 {
    cutoff_with_derivatives(s).0
}

/// `χ'(s)`.
pub fn cutoff_derivative(s: f64) -> f64 {
    cutoff_with_derivatives(s).1
}

/// `(χ, χ', χ'')` at `s`.
pub fn cutoff_with_derivatives(s: f64) -> (f64, f64, f64) {
    let a = s.abs();
    if a <= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    if a >= 2.0 {
        return (0.0, 0.0, 0.0);
    }
    let t = a - 1.0;
    let u = 1.0 - t;
    let p = t.powi(5) * (126.0 - 420.0 * t + 540.0 * t * t - 315.0 * t.powi(3) + 70.0 * t.powi(4));
    let dp = 630.0 * t.powi(4) * u.powi(4);
    let ddp = 2520.0 * t.powi(3) * u.powi(3) * (1.0 - 2.0 * t);
    let sign = s.signum();
    (1.0 - p, -dp * sign, -ddp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LocationClass {
    Interior,
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SourcePoint {
    pub position: Point,
    pub class: LocationClass,
    pub kappa: f64,
    pub delta: f64,
    pub boundary_param: Option<f64>,
}

impl SourcePoint {
    /// `(c, c', c'')` for `c(r) = χ(r/δ)`.
    fn radial(&self, r: f64) -> (f64, f64, f64) {
        let (c, dc, ddc) = cutoff_with_derivatives(r / self.delta);
        (c, dc / self.delta, ddc / (self.delta * self.delta))
    }
}

/// `−(1/κ) χ(|x−ξ|/δ) log|x−ξ|`.
pub fn singular_part(source: &SourcePoint, x: Point) -> Result<f64> {
    let r = geom::dist(x, source.position);
    if r == 0.0 {
        return Err(Error::SingularEvaluation);
    }
    Ok(-source.radial(r).0 * r.ln() / source.kappa)
}

/// `∇_x` of [`singular_part`].
pub fn singular_gradient(source: &SourcePoint, x: Point) -> Result<Point> {
    let d = geom::sub(x, source.position);
    let r = geom::norm(d);
    if r == 0.0 {
        return Err(Error::SingularEvaluation);
    }
    let (c, dc, _) = source.radial(r);
    let radial = -(dc * r.ln() + c / r) / source.kappa;
    Ok(geom::scale(d, radial / r))
}

/// Mesh, stiffness factorization and the chart-scale constant of a domain.
#[derive(Debug)]
pub struct Domain {
    mesh: Arc<Mesh>,
    disc: Arc<Discretization>,
    r_domain: f64,
}

/// Smallest `δ / h_max` for which the source-position derivatives of `R` are free of
/// mesh-scale oscillation.
pub const MIN_CUTOFF_RESOLUTION: f64 = 5.0;

/// Triangles closer than this many `h_max` to a source use the pole-adapted rule.
const POLE_RADIUS: f64 = 4.0;
const POLE_ORDER: usize = 8;

impl Domain {
    pub fn new(mesh: Arc<Mesh>) -> Result<Arc<Self>> {
        let curve = mesh.curve();
        let r_domain = 0.5 * curve.inradius().min(curve.min_curvature_radius());
        let disc = Discretization::new(mesh.clone())?;
        Ok(Arc::new(Self { mesh, disc, r_domain }))
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn discretization(&self) -> &Arc<Discretization> {
        &self.disc
    }

    /// `min(inradius, minimal curvature radius) / 2`.
    pub fn r_domain(&self) -> f64 {
        self.r_domain
    }

    /// Cutoff radius used for every source.
    pub fn delta(&self) -> f64 {
        0.5 * self.r_domain
    }

    /// `δ / h_max`. Below [`MIN_CUTOFF_RESOLUTION`] the source load is under-resolved and
    /// `R` carries a mesh-scale oscillation.
    pub fn cutoff_resolution(&self) -> f64 {
        self.delta() / self.mesh.h_max()
    }

    pub fn interior_source(&self, p: Point) -> Result<SourcePoint> {
        let inside = match self.mesh.locate(p) {
            Location::Inside { .. } => true,
            Location::Outside => {
                // Between a boundary chord and the curve the point is still in Σ.
                let curve = self.mesh.curve();
                let t = curve.closest_param(p);
                let off = geom::sub(p, curve.position(t));
                geom::norm(off) < 2.0 * self.mesh.h_max() && geom::dot(off, curve.normal(t)) < 0.0
            }
        };
        let curve = self.mesh.curve();
        let gap = geom::dist(p, curve.position(curve.closest_param(p)));
        if !inside || gap <= 1e-12 * self.mesh.diameter() {
            return Err(Error::Geometry(format!("source {p:?} is not an interior point")));
        }
        Ok(SourcePoint {
            position: p,
            class: LocationClass::Interior,
            kappa: 2.0 * PI,
            delta: self.delta(),
            boundary_param: None,
        })
    }

    pub fn boundary_source(&self, t: f64) -> SourcePoint {
        let curve = self.mesh.curve();
        let t = curve.wrap(t);
        SourcePoint {
            position: curve.position(t),
            class: LocationClass::Boundary,
            kappa: PI,
            delta: self.delta(),
            boundary_param: Some(t),
        }
    }

    /// Assembles the ψ-independent data of the regular-part problem.
    pub fn source_load(&self, source: &SourcePoint) -> SourceLoad {
        let mesh = &*self.mesh;
        let n = mesh.num_vertices();
        let xi = source.position;
        let (kappa, delta) = (source.kappa, source.delta);
        let mut load = vec![0.0; n];
        let mut moments = vec![0.0; n];
        let reach = 2.0 * delta;
        let pole_radius = POLE_RADIUS * mesh.h_max();

        mesh.for_each_triangle_near(xi, reach + mesh.h_max(), |t| {
            let tri = mesh.triangle_points(t);
            let q = geom::closest_point_on_triangle(xi, tri[0], tri[1], tri[2]);
            let dmin = geom::dist(q, xi);
            if dmin >= reach {
                return;
            }
            let area = geom::signed_area(tri[0], tri[1], tri[2]);
            let points: Vec<(Point, f64)> = if dmin < pole_radius {
                pole_rule(tri, xi, POLE_ORDER)
            } else {
                triangle_rule()
                    .iter()
                    .map(|(l, w)| {
                        let p = [
                            l[0] * tri[0][0] + l[1] * tri[1][0] + l[2] * tri[2][0],
                            l[0] * tri[0][1] + l[1] * tri[1][1] + l[2] * tri[2][1],
                        ];
                        (p, w * area)
                    })
                    .collect()
            };
            let verts = mesh.triangles()[t];
            for (p, w) in points {
                let r = geom::dist(p, xi);
                if r >= reach || r == 0.0 {
                    continue;
                }
                let (c, dc, ddc) = source.radial(r);
                let lr = r.ln();
                let f = (ddc + dc / r) * lr + 2.0 * dc / r;
                let phi = geom::barycentric(p, tri[0], tri[1], tri[2]);
                for k in 0..3 {
                    moments[verts[k]] += w * c * lr * phi[k];
                    load[verts[k]] -= w * f * phi[k] / kappa;
                }
            }
        });

        let curve = mesh.curve();
        for (k, e) in mesh.boundary_edges().iter().enumerate() {
            let (a, b) = (mesh.vertices()[e[0]], mesh.vertices()[e[1]]);
            let (dist, _) = geom::segment_distance(xi, a, b);
            if dist >= reach + mesh.h_max() {
                continue;
            }
            let (t0, t1) = mesh.edge_params(k);
            let mut cuts = vec![0.0, 1.0];
            match source.boundary_param {
                Some(ts) => {
                    // Split at the source parameter if it falls inside this edge.
                    for shift in [-curve.period, 0.0, curve.period] {
                        let s = (ts + shift - t0) / (t1 - t0);
                        if s > 1e-12 && s < 1.0 - 1e-12 {
                            cuts.push(s);
                        }
                    }
                }
                None => {
                    let len = geom::dist(a, b);
                    let pieces = ((2.0 * len / dist.max(1e-300)).ceil() as usize).clamp(1, 64);
                    cuts.extend((1..pieces).map(|i| i as f64 / pieces as f64));
                }
            }
            cuts.sort_by(f64::total_cmp);
            let (gx, gw) = gauss_legendre(8);
            for c in cuts.windows(2) {
                for (s, ws) in gx.iter().zip(&gw) {
                    let u = c[0] + s * (c[1] - c[0]);
                    let t = t0 + u * (t1 - t0);
                    let x = curve.position(t);
                    let d = geom::sub(x, xi);
                    let r = geom::norm(d);
                    if r >= reach || r == 0.0 {
                        continue;
                    }
                    let (cc, dc, _) = source.radial(r);
                    let qv = (dc * r.ln() + cc / r) * geom::dot(d, curve.normal(t)) / r;
                    let ds = curve.speed(t) * (t1 - t0) * (c[1] - c[0]) * ws;
                    load[e[0]] += qv * (1.0 - u) * ds / kappa;
                    load[e[1]] += qv * u * ds / kappa;
                }
            }
        }

        let compress = |v: Vec<f64>| -> Vec<(usize, f64)> {
            v.into_iter().enumerate().filter(|(_, x)| *x != 0.0).collect()
        };
        SourceLoad { source: *source, load: compress(load), moments: compress(moments) }
    }
}

/// ψ-independent data of one source: the `F`/`Q` load and the singular moments.
#[derive(Debug, Clone)]
pub struct SourceLoad {
    pub source: SourcePoint,
    load: Vec<(usize, f64)>,
    moments: Vec<(usize, f64)>,
}

impl SourceLoad {
    /// Sparse `−(1/κ)∫Fφ_i + (1/κ)∮Qφ_i`.
    pub fn load(&self) -> &[(usize, f64)] {
        &self.load
    }

    /// Sparse `w_i = ∫ χ log|x−ξ| φ_i dx`.
    pub fn moments(&self) -> &[(usize, f64)] {
        &self.moments
    }

    /// `(1/κ)∫ χ log|·−ξ| · u dx` for vertex values `u` (linearized against the moments).
    pub fn singular_integral(&self, u: &[f64]) -> f64 {
        self.moments.iter().map(|&(i, w)| w * u[i]).sum::<f64>() / self.source.kappa
    }
}

/// Regular-part solver for one metric on a fixed domain.
#[derive(Debug, Clone)]
pub struct GreenSolver {
    domain: Arc<Domain>,
    bundle: OperatorBundle,
}

impl GreenSolver {
    pub fn new(domain: &Arc<Domain>, metric: ConformalMetric) -> Result<Self> {
        let bundle = OperatorBundle::with_discretization(domain.discretization(), metric)?;
        Ok(Self { domain: domain.clone(), bundle })
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn operator(&self) -> &OperatorBundle {
        &self.bundle
    }

    pub fn metric(&self) -> &ConformalMetric {
        self.bundle.metric()
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        self.domain.mesh()
    }

    pub fn regular_part(&self, source: &SourcePoint) -> Result<GreenBundle> {
        Ok(self.regular_parts(std::slice::from_ref(source))?.pop().unwrap())
    }

    /// Regular parts for several sources (loads assembled in parallel, one batched solve).
    pub fn regular_parts(&self, sources: &[SourcePoint]) -> Result<Vec<GreenBundle>> {
        let loads: Vec<Arc<SourceLoad>> =
            sources.par_iter().map(|s| Arc::new(self.domain.source_load(s))).collect();
        self.from_loads(&loads)
    }

    /// Regular parts from precomputed source loads.
    pub fn from_loads(&self, loads: &[Arc<SourceLoad>]) -> Result<Vec<GreenBundle>> {
        let b = &self.bundle;
        let area = b.area();
        let psi = b.metric().values();
        let mut rhs = Vec::with_capacity(loads.len());
        let mut means = Vec::with_capacity(loads.len());
        let mut defects = Vec::with_capacity(loads.len());
        for sl in loads {
            let mut v: Vec<f64> = b.mass().iter().map(|m| -m / area).collect();
            for &(i, x) in &sl.load {
                v[i] += x;
            }
            defects.push(v.iter().sum::<f64>());
            rhs.push(v);
            means.push(sl.singular_integral(psi));
        }
        let sols = b.solve_loads(&rhs, &means)?;
        let mesh = self.mesh();
        sols.into_iter()
            .zip(loads)
            .zip(defects)
            .map(|((h, sl), defect)| {
                let psi_at_source = b.metric().eval(mesh, sl.source.position);
                Ok(GreenBundle {
                    load: sl.clone(),
                    regular: ScalarField::new(mesh, h)?,
                    psi_at_source,
                    area,
                    defect,
                })
            })
            .collect()
    }

    /// `R^g(ξ) = H(ξ, ξ) + log ψ(ξ) / (2κ)`.
    pub fn robin(&self, source: &SourcePoint) -> Result<f64> {
        self.regular_part(source)?.robin()
    }
}

/// Regular part `H(·, ξ)` of one source under one metric.
#[derive(Debug, Clone)]
pub struct GreenBundle {
    load: Arc<SourceLoad>,
    regular: ScalarField,
    psi_at_source: f64,
    area: f64,
    defect: f64,
}

impl GreenBundle {
    pub fn source(&self) -> &SourcePoint {
        &self.load.source
    }

    pub fn source_load(&self) -> &Arc<SourceLoad> {
        &self.load
    }

    pub fn regular_part(&self) -> &ScalarField {
        &self.regular
    }

    /// `|Σ|_g` of the metric the bundle was built with.
    pub fn area(&self) -> f64 {
        self.area
    }

    /// Sum of the assembled load before orthogonalization against constants.
    pub fn compatibility_defect(&self) -> f64 {
        self.defect
    }

    /// `G(x, ξ)` with the regular part interpolated piecewise linearly.
    pub fn eval(&self, x: Point) -> Result<f64> {
        Ok(singular_part(self.source(), x)? + self.regular.eval(x))
    }

    /// `H(x, ξ)` by quadratic recovery.
    pub fn regular_smooth(&self, stencil: &Stencil) -> f64 {
        stencil.value_of(self.regular.values())
    }

    /// `G(x, ξ)` with the regular part recovered by quadratic least squares.
    pub fn eval_smooth(&self, x: Point) -> Result<f64> {
        let st = Stencil::at(self.regular.mesh(), x)?;
        Ok(singular_part(self.source(), x)? + self.regular_smooth(&st))
    }

    /// `∇_x G(x, ξ)`: analytic singular gradient plus recovered regular gradient.
    pub fn gradient_smooth(&self, x: Point) -> Result<Point> {
        let st = Stencil::at(self.regular.mesh(), x)?;
        let g = st.gradient_of(self.regular.values());
        Ok(geom::add(singular_gradient(self.source(), x)?, g))
    }

    /// `R^g(ξ)`.
    pub fn robin(&self) -> Result<f64> {
        let st = Stencil::at(self.regular.mesh(), self.source().position)?;
        Ok(self.regular_smooth(&st) + self.psi_at_source.ln() / (2.0 * self.source().kappa))
    }

    /// Vertex values of `G(·, ξ)`; the source vertex (if any) gets `NaN`.
    pub fn green_values(&self) -> Vec<f64> {
        let mesh = self.regular.mesh();
        mesh.vertices()
            .iter()
            .zip(self.regular.values())
            .map(|(&p, h)| singular_part(self.source(), p).map_or(f64::NAN, |s| s + h))
            .collect()
    }

    /// `∫ G dv_g` at the discrete level: `mᵀH − (1/κ)Σ w_i ψ_i`.
    pub fn mean(&self, op: &OperatorBundle) -> f64 {
        op.integrate_values(self.regular.values()) - self.load.singular_integral(op.metric().values())
    }

    /// Writes `vertex,G,H,singular` lines.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "vertex,G,H,singular")?;
        let mesh = self.regular.mesh();
        for (i, (&p, h)) in mesh.vertices().iter().zip(self.regular.values()).enumerate() {
            let s = singular_part(self.source(), p).unwrap_or(f64::NAN);
            writeln!(w, "{i},{:.16e},{h:.16e},{s:.16e}", s + h)?;
        }
        Ok(())
    }
}

/// One-shot construction of `H(·, ξ)` on a mesh.
pub fn regular_part(mesh: &Arc<Mesh>, metric: ConformalMetric, source: &SourcePoint) -> Result<GreenBundle> {
    GreenSolver::new(&Domain::new(mesh.clone())?, metric)?.regular_part(source)
}

/// `G(x, ξ)` from a bundle (piecewise-linear regular part).
pub fn green_eval(bundle: &GreenBundle, x: Point) -> Result<f64> {
    bundle.eval(x)
}

/// One-shot Robin function.
pub fn robin(mesh: &Arc<Mesh>, metric: ConformalMetric, source: &SourcePoint) -> Result<f64> {
    regular_part(mesh, metric, source)?.robin()
}
