//! The interaction functional on the configuration manifold `X = Σ̊^l × (∂Σ)^{m−l}`:
//!
//! ```text
//! f(x) = Σ σ_i² R(x_i) + Σ_{i≠j} σ_i σ_j G(x_i, x_j) + h(x_1, …, x_m).
//! ```
//!
//! Chart coordinates are `(x_1, y_1, …, x_l, y_l, t_{l+1}, …, t_m)`: Cartesian pairs for
//! interior points and curve parameters for boundary points. Derivatives with respect
//! to a source position are taken by central differences of freshly solved regular
//! parts; derivatives in the evaluation point use the analytic singular gradient plus
//! the derivative of the recovered regular part.

use std::fmt;
use std::sync::Arc;

use faer::{Mat, Side};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::ConformalMetric;
use crate::geom::{self, Point};
use crate::green::{Domain, GreenBundle, GreenSolver, SourcePoint};
use crate::recovery::Stencil;

/// A `C²` function of the `m` configuration points with its gradient.
pub trait HTerm: Send + Sync {
    fn value(&self, points: &[Point]) -> f64;
    fn gradient(&self, points: &[Point]) -> Vec<Point>;
    fn name(&self) -> String;
}

/// `h ≡ 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroH;

impl HTerm for ZeroH {
    fn value(&self, _: &[Point]) -> f64 {
        0.0
    }

    fn gradient(&self, points: &[Point]) -> Vec<Point> {
        vec![[0.0; 2]; points.len()]
    }

    fn name(&self) -> String {
        "zero".into()
    }
}

type Field = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
type FieldGradient = Arc<dyn Fn(Point) -> Point + Send + Sync>;

/// `h(x) = Σ c_i log V(x_i)` for a positive field `V`.
#[derive(Clone)]
pub struct LogPotential {
    coeffs: Vec<f64>,
    v: Field,
    grad_v: FieldGradient,
    label: String,
}

impl LogPotential {
    pub fn new(
        coeffs: Vec<f64>,
        v: impl Fn(Point) -> f64 + Send + Sync + 'static,
        grad_v: impl Fn(Point) -> Point + Send + Sync + 'static,
        label: impl Into<String>,
    ) -> Self {
        Self { coeffs, v: Arc::new(v), grad_v: Arc::new(grad_v), label: label.into() }
    }
}

impl HTerm for LogPotential {
    fn value(&self, points: &[Point]) -> f64 {
        points.iter().zip(&self.coeffs).map(|(&p, c)| c * (self.v)(p).ln()).sum()
    }

    fn gradient(&self, points: &[Point]) -> Vec<Point> {
        points
            .iter()
            .zip(&self.coeffs)
            .map(|(&p, c)| geom::scale((self.grad_v)(p), c / (self.v)(p)))
            .collect()
    }

    fn name(&self) -> String {
        format!("log-potential({})", self.label)
    }
}

/// A point of `X` together with the weights and the `h` term.
#[derive(Clone)]
pub struct Configuration {
    pub interior: Vec<Point>,
    pub boundary: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub h_term: Arc<dyn HTerm>,
}

impl fmt::Debug for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Configuration")
            .field("interior", &self.interior)
            .field("boundary", &self.boundary)
            .field("sigmas", &self.sigmas)
            .field("h_term", &self.h_term.name())
            .finish()
    }
}

/// Serializable view of a [`Configuration`].
#[derive(Debug, Clone, Serialize)]
pub struct ConfigurationRecord {
    pub interior: Vec<Point>,
    pub boundary: Vec<f64>,
    pub points: Vec<Point>,
    pub sigmas: Vec<f64>,
    pub h_term: String,
}

impl Configuration {
    pub fn new(interior: Vec<Point>, boundary: Vec<f64>, sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.len() != interior.len() + boundary.len() {
            return Err(Error::Config(format!(
                "{} weights for {} points",
                sigmas.len(),
                interior.len() + boundary.len()
            )));
        }
        if sigmas.is_empty() {
            return Err(Error::Config("configuration has no points".into()));
        }
        if sigmas.iter().any(|s| *s == 0.0 || !s.is_finite()) {
            return Err(Error::Config("weights must be finite and nonzero".into()));
        }
        Ok(Self { interior, boundary, sigmas, h_term: Arc::new(ZeroH) })
    }

    pub fn with_h_term(mut self, h: Arc<dyn HTerm>) -> Self {
        self.h_term = h;
        self
    }

    /// Number of points `m`.
    pub fn m(&self) -> usize {
        self.sigmas.len()
    }

    /// Number of interior points `l`.
    pub fn l(&self) -> usize {
        self.interior.len()
    }

    /// Dimension `2l + (m − l)` of `X`.
    pub fn dim(&self) -> usize {
        2 * self.l() + self.boundary.len()
    }

    pub fn coords(&self) -> Vec<f64> {
        let mut c: Vec<f64> = self.interior.iter().flat_map(|p| [p[0], p[1]]).collect();
        c.extend(&self.boundary);
        c
    }

    /// Same weights and `h`, new chart coordinates.
    pub fn with_coords(&self, c: &[f64]) -> Self {
        assert_eq!(c.len(), self.dim());
        let l = self.l();
        Self {
            interior: (0..l).map(|i| [c[2 * i], c[2 * i + 1]]).collect(),
            boundary: c[2 * l..].to_vec(),
            sigmas: self.sigmas.clone(),
            h_term: self.h_term.clone(),
        }
    }

    /// Positions of all `m` points (boundary parameters mapped through the curve).
    pub fn points(&self, domain: &Domain) -> Vec<Point> {
        let curve = domain.mesh().curve();
        self.interior.iter().copied().chain(self.boundary.iter().map(|&t| curve.position(t))).collect()
    }

    pub fn record(&self, domain: &Domain) -> ConfigurationRecord {
        let curve = domain.mesh().curve();
        ConfigurationRecord {
            interior: self.interior.clone(),
            boundary: self.boundary.iter().map(|&t| curve.wrap(t)).collect(),
            points: self.points(domain),
            sigmas: self.sigmas.clone(),
            h_term: self.h_term.name(),
        }
    }

    /// Smallest pairwise distance between the points (∞ for a single point).
    pub fn min_separation(&self, domain: &Domain) -> f64 {
        let pts = self.points(domain);
        let mut d = f64::INFINITY;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                d = d.min(geom::dist(pts[i], pts[j]));
            }
        }
        d
    }
}

/// Chart gradient of `f` with its length in the metric of `X`.
#[derive(Debug, Clone, Serialize)]
pub struct Gradient {
    pub components: Vec<f64>,
    pub norm_g: f64,
    /// `|∇_{x_i} f|_g` for each point.
    pub block_norms: Vec<f64>,
}

/// Second differences of `f` and their spectrum.
#[derive(Debug, Clone, Serialize)]
pub struct HessianReport {
    pub matrix: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub gradient_norm: f64,
    /// `min |λ| / max |λ|`.
    pub morse_margin: f64,
    /// Number of negative eigenvalues.
    pub morse_index: usize,
    /// `max |H − Hᵀ| / max |H|` before symmetrization.
    pub asymmetry: f64,
    pub step: f64,
    /// Frobenius distance between the matrices at `step` and `step/2`.
    pub fd_noise: f64,
    /// `min |λ| < 10 · fd_noise`.
    pub degenerate: bool,
}

impl HessianReport {
    pub fn min_abs_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }

    pub fn spectral_norm(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Relative coincidence guard.
pub const DEDUP_EPS: f64 = 1e-6;
/// Source-difference step in units of the domain diameter.
pub const SOURCE_STEP: f64 = 1e-4;

/// Evaluator of `f` for one metric on one domain.
#[derive(Debug, Clone)]
pub struct Interaction {
    solver: GreenSolver,
    source_step: f64,
}

impl Interaction {
    pub fn new(domain: &Arc<Domain>, metric: ConformalMetric) -> Result<Self> {
        let solver = GreenSolver::new(domain, metric)?;
        let source_step = SOURCE_STEP * domain.mesh().diameter();
        Ok(Self { solver, source_step })
    }

    pub fn with_source_step(mut self, step: f64) -> Self {
        self.source_step = step;
        self
    }

    pub fn solver(&self) -> &GreenSolver {
        &self.solver
    }

    pub fn domain(&self) -> &Arc<Domain> {
        self.solver.domain()
    }

    pub fn metric(&self) -> &ConformalMetric {
        self.solver.metric()
    }

    pub fn source_step(&self) -> f64 {
        self.source_step
    }

    /// Sources for the configuration points, after the admissibility checks.
    pub fn sources(&self, cfg: &Configuration) -> Result<Vec<SourcePoint>> {
        let domain = self.domain();
        let diam = domain.mesh().diameter();
        if cfg.min_separation(domain) <= DEDUP_EPS * diam {
            return Err(Error::Domain("configuration points coincide".into()));
        }
        let mut out = Vec::with_capacity(cfg.m());
        for &p in &cfg.interior {
            out.push(domain.interior_source(p).map_err(|_| {
                Error::Domain(format!("interior configuration point {p:?} is not inside the domain"))
            })?);
        }
        out.extend(cfg.boundary.iter().map(|&t| domain.boundary_source(t)));
        Ok(out)
    }

    /// `f` from solved regular parts and recovery stencils at the points.
    fn assemble(&self, cfg: &Configuration, points: &[Point], bundles: &[GreenBundle], stencils: &[Stencil]) -> Result<f64> {
        let mut f = cfg.h_term.value(points);
        for i in 0..points.len() {
            f += cfg.sigmas[i] * cfg.sigmas[i] * self.robin_with(&bundles[i], &stencils[i]);
            for j in 0..points.len() {
                if i != j {
                    f += cfg.sigmas[i] * cfg.sigmas[j] * green_with(&bundles[j], points[i], &stencils[i])?;
                }
            }
        }
        Ok(f)
    }

    fn robin_with(&self, b: &GreenBundle, stencil: &Stencil) -> f64 {
        let s = b.source();
        let psi = self.metric().eval(self.domain().mesh(), s.position);
        b.regular_smooth(stencil) + psi.ln() / (2.0 * s.kappa)
    }

    pub fn value(&self, cfg: &Configuration) -> Result<f64> {
        Ok(self.values(std::slice::from_ref(cfg))?[0])
    }

    /// `f` at several configurations (all regular parts solved in one batch).
    pub fn values(&self, cfgs: &[Configuration]) -> Result<Vec<f64>> {
        let mut sources = Vec::new();
        let mut points = Vec::with_capacity(cfgs.len());
        for c in cfgs {
            sources.extend(self.sources(c)?);
            points.push(c.points(self.domain()));
        }
        let bundles = self.solver.regular_parts(&sources)?;
        let mesh = self.domain().mesh();
        let mut out = Vec::with_capacity(cfgs.len());
        let mut offset = 0;
        for (c, pts) in cfgs.iter().zip(&points) {
            let stencils = pts.iter().map(|&p| Stencil::at(mesh, p)).collect::<Result<Vec<_>>>()?;
            out.push(self.assemble(c, pts, &bundles[offset..offset + c.m()], &stencils)?);
            offset += c.m();
        }
        Ok(out)
    }

    /// Chart gradient and its `g`-length.
    ///
    /// `∂_{x_i} f = σ_i² ∂R(x_i) + Σ_{j≠i} σ_iσ_j [∂_1 G(x_i, x_j) + ∂_2 G(x_j, x_i)]
    /// + ∂_{x_i} h`; the source derivatives `∂R` and `∂_2 G` come from central
    /// differences of the regular parts, `∂_1 G` from the singular gradient and the
    /// differentiated recovery of `H`.
    pub fn gradient(&self, cfg: &Configuration) -> Result<Gradient> {
        let domain = self.domain();
        let mesh = domain.mesh();
        let curve = mesh.curve();
        let base = self.sources(cfg)?;
        let points = cfg.points(domain);
        let (m, l, s) = (cfg.m(), cfg.l(), self.source_step);

        // Shifted sources, two per chart coordinate.
        let mut shifted = Vec::with_capacity(2 * cfg.dim());
        for i in 0..m {
            if i < l {
                for axis in 0..2 {
                    for sign in [1.0, -1.0] {
                        let mut p = points[i];
                        p[axis] += sign * s;
                        shifted.push(domain.interior_source(p)?);
                    }
                }
            } else {
                let t = cfg.boundary[i - l];
                for sign in [1.0, -1.0] {
                    shifted.push(domain.boundary_source(t + sign * s));
                }
            }
        }
        let mut all = base.clone();
        all.extend(shifted);
        let bundles = self.solver.regular_parts(&all)?;
        let (own, moved) = bundles.split_at(m);
        let stencils = points.iter().map(|&p| Stencil::at(mesh, p)).collect::<Result<Vec<_>>>()?;
        let h_grad = cfg.h_term.gradient(&points);

        // Source-dependent part of f for point i placed at the source of bundle b.
        let source_part = |i: usize, b: &GreenBundle, st: &Stencil| -> Result<f64> {
            let mut v = cfg.sigmas[i] * cfg.sigmas[i] * self.robin_with(b, st);
            for j in 0..m {
                if j != i {
                    v += cfg.sigmas[i] * cfg.sigmas[j] * green_with(b, points[j], &stencils[j])?;
                }
            }
            Ok(v)
        };
        let mut components = Vec::with_capacity(cfg.dim());
        let mut block_norms = Vec::with_capacity(m);
        let mut norm2 = 0.0;
        let mut k = 0;
        for i in 0..m {
            // Derivative of the recovered value (the patch weights move with the point).
            let shifted_stencils = [[s, 0.0], [-s, 0.0], [0.0, s], [0.0, -s]]
                .iter()
                .map(|&d| Stencil::at(mesh, geom::add(points[i], d)))
                .collect::<Result<Vec<_>>>()?;
            let mut first = [0.0; 2];
            for j in 0..m {
                if j != i {
                    let u = own[j].regular_part().values();
                    let regular = [
                        (shifted_stencils[0].value_of(u) - shifted_stencils[1].value_of(u)) / (2.0 * s),
                        (shifted_stencils[2].value_of(u) - shifted_stencils[3].value_of(u)) / (2.0 * s),
                    ];
                    let g = geom::add(crate::green::singular_gradient(own[j].source(), points[i])?, regular);
                    first = geom::add(first, geom::scale(g, cfg.sigmas[i] * cfg.sigmas[j]));
                }
            }
            first = geom::add(first, h_grad[i]);
            let psi = self.metric().eval(mesh, points[i]);
            let ncoord = if i < l { 2 } else { 1 };
            let mut block = 0.0;
            for c in 0..ncoord {
                let (bp, bm) = (&moved[k], &moved[k + 1]);
                let stp = Stencil::at(mesh, bp.source().position)?;
                let stm = Stencil::at(mesh, bm.source().position)?;
                let fd = (source_part(i, bp, &stp)? - source_part(i, bm, &stm)?) / (2.0 * s);
                let comp = if i < l {
                    fd + first[c]
                } else {
                    let t = cfg.boundary[i - l];
                    fd + geom::dot(first, curve.tangent(t))
                };
                let weight = if i < l { psi } else { psi * curve.speed(cfg.boundary[i - l]).powi(2) };
                block += comp * comp / weight;
                components.push(comp);
                k += 2;
            }
            norm2 += block;
            block_norms.push(block.sqrt());
        }
        Ok(Gradient { components, norm_g: norm2.sqrt(), block_norms })
    }

    /// Symmetric matrix of second differences of `f` in chart coordinates.
    pub fn hessian_matrix(&self, cfg: &Configuration, step: f64) -> Result<Vec<Vec<f64>>> {
        let n = cfg.dim();
        let c0 = cfg.coords();
        let shifted = |moves: &[(usize, f64)]| {
            let mut c = c0.clone();
            for &(k, d) in moves {
                c[k] += d;
            }
            cfg.with_coords(&c)
        };
        let mut cfgs = vec![cfg.clone()];
        for i in 0..n {
            cfgs.push(shifted(&[(i, step)]));
            cfgs.push(shifted(&[(i, -step)]));
        }
        for i in 0..n {
            for j in i + 1..n {
                for (a, b) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                    cfgs.push(shifted(&[(i, a * step), (j, b * step)]));
                }
            }
        }
        let f = self.values(&cfgs)?;
        let mut h = vec![vec![0.0; n]; n];
        for i in 0..n {
            h[i][i] = (f[1 + 2 * i] - 2.0 * f[0] + f[2 + 2 * i]) / (step * step);
        }
        let mut k = 1 + 2 * n;
        for i in 0..n {
            for j in i + 1..n {
                let v = (f[k] - f[k + 1] - f[k + 2] + f[k + 3]) / (4.0 * step * step);
                h[i][j] = v;
                h[j][i] = v;
                k += 4;
            }
        }
        Ok(h)
    }

    /// Hessian at `step` with eigenvalues, Morse data and the FD-noise estimate.
    pub fn hessian(&self, cfg: &Configuration, step: f64) -> Result<HessianReport> {
        let h = self.hessian_matrix(cfg, step)?;
        let half = self.hessian_matrix(cfg, 0.5 * step)?;
        let gradient_norm = self.gradient(cfg)?.norm_g;
        let n = h.len();
        let scale = h.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut asym = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                asym = asym.max((h[i][j] - h[j][i]).abs());
            }
        }
        let asymmetry = if scale > 0.0 { asym / scale } else { 0.0 };
        if asymmetry > 1e-6 {
            return Err(Error::Numerical(format!("Hessian asymmetry {asymmetry:.3e}")));
        }
        let eigenvalues = symmetric_eigenvalues(&h)?;
        let fd_noise = h
            .iter()
            .flatten()
            .zip(half.iter().flatten())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let min_abs = eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        let max_abs = eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(HessianReport {
            morse_margin: if max_abs > 0.0 { min_abs / max_abs } else { 0.0 },
            morse_index: eigenvalues.iter().filter(|v| **v < 0.0).count(),
            degenerate: min_abs < 10.0 * fd_noise,
            matrix: h,
            eigenvalues,
            gradient_norm,
            asymmetry,
            step,
            fd_noise,
        })
    }
}

fn green_with(b: &GreenBundle, x: Point, stencil: &Stencil) -> Result<f64> {
    Ok(crate::green::singular_part(b.source(), x)? + b.regular_smooth(stencil))
}

/// Eigenvalues (ascending) of a symmetric matrix.
pub fn symmetric_eigenvalues(h: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = h.len();
    let a = Mat::from_fn(n, n, |i, j| h[i][j]);
    a.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigenvalue iteration failed: {e:?}")))
}

/// `f` at one configuration.
pub fn f_value(interaction: &Interaction, cfg: &Configuration) -> Result<f64> {
    interaction.value(cfg)
}

/// Chart gradient and `g`-norm at one configuration.
pub fn f_gradient(interaction: &Interaction, cfg: &Configuration) -> Result<Gradient> {
    interaction.gradient(cfg)
}

/// Hessian report at one configuration.
pub fn f_hessian(interaction: &Interaction, cfg: &Configuration, step: f64) -> Result<HessianReport> {
    interaction.hessian(cfg, step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::BoundaryCurve;
    use crate::mesh::build_domain;
    use crate::oracle;

    fn disk(h: f64) -> Arc<Domain> {
        Domain::new(Arc::new(build_domain(&BoundaryCurve::circle([0.0, 0.0], 1.0), h).unwrap())).unwrap()
    }

    #[test]
    fn single_point_reduces_to_robin() {
        let d = disk(0.05);
        let e = Interaction::new(&d, ConformalMetric::flat(d.mesh())).unwrap();
        let cfg = Configuration::new(vec![[0.3, 0.0]], vec![], vec![1.0]).unwrap();
        let f = e.value(&cfg).unwrap();
        assert!((f - oracle::disk_robin_exact([0.3, 0.0])).abs() < 5e-3, "{f}");
        let cfg2 = Configuration::new(vec![[0.3, 0.0]], vec![], vec![2.0]).unwrap();
        assert!((e.value(&cfg2).unwrap() - 4.0 * f).abs() < 1e-12);
    }

    #[test]
    fn swap_invariance() {
        let d = disk(0.06);
        let e = Interaction::new(&d, ConformalMetric::flat(d.mesh())).unwrap();
        let a = Configuration::new(vec![[0.3, 0.1], [-0.2, 0.4]], vec![], vec![1.0, 2.0]).unwrap();
        let b = Configuration::new(vec![[-0.2, 0.4], [0.3, 0.1]], vec![], vec![2.0, 1.0]).unwrap();
        assert!((e.value(&a).unwrap() - e.value(&b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_differences_of_f() {
        let d = disk(0.06);
        let e = Interaction::new(&d, ConformalMetric::flat(d.mesh())).unwrap();
        let cfg = Configuration::new(vec![[0.3, 0.1], [-0.2, 0.4]], vec![1.0], vec![1.0, -0.5, 0.7]).unwrap();
        let g = e.gradient(&cfg).unwrap();
        let s = 1e-4 * d.mesh().diameter();
        let c0 = cfg.coords();
        for k in 0..cfg.dim() {
            let mut cp = c0.clone();
            let mut cm = c0.clone();
            cp[k] += s;
            cm[k] -= s;
            let f = e.values(&[cfg.with_coords(&cp), cfg.with_coords(&cm)]).unwrap();
            let fd = (f[0] - f[1]) / (2.0 * s);
            let scale = g.components.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!((fd - g.components[k]).abs() < 1e-3 * scale, "k={k}: {fd} vs {}", g.components[k]);
        }
    }

    #[test]
    fn gradient_is_radial_and_increasing() {
        let d = disk(0.05);
        let e = Interaction::new(&d, ConformalMetric::flat(d.mesh())).unwrap();
        let mut last = 0.0;
        for r in [0.2, 0.4] {
            let cfg = Configuration::new(vec![[r, 0.0]], vec![], vec![1.0]).unwrap();
            let g = e.gradient(&cfg).unwrap();
            let exact = oracle::disk_robin_radial_derivative(r);
            assert!(g.components[0] > last && g.components[1].abs() < 1e-2 * g.components[0]);
            assert!((g.components[0] - exact).abs() < 0.05 * exact, "{} vs {exact}", g.components[0]);
            last = g.components[0];
        }
        let centre = Configuration::new(vec![[0.0, 0.0]], vec![], vec![1.0]).unwrap();
        let g = e.gradient(&centre).unwrap();
        assert!(g.norm_g < 2e-3, "{}", g.norm_g);
    }

    #[test]
    fn metric_norm_uses_conformal_weight() {
        let d = disk(0.08);
        let flat = Interaction::new(&d, ConformalMetric::flat(d.mesh())).unwrap();
        let scaled = Interaction::new(&d, ConformalMetric::uniform(d.mesh(), 4.0).unwrap()).unwrap();
        let cfg = Configuration::new(vec![[0.3, 0.2]], vec![], vec![1.0]).unwrap();
        let (a, b) = (flat.gradient(&cfg).unwrap(), scaled.gradient(&cfg).unwrap());
        // R^{cg} − R^g is a constant, so chart gradients agree and the norm halves.
        for (x, y) in a.components.iter().zip(&b.components) {
            assert!((x - y).abs() < 1e-6 * a.norm_g);
        }
        assert!((b.norm_g - 0.5 * a.norm_g).abs() < 1e-6 * a.norm_g);
    }

    #[test]
    fn hessian_at_centre_is_isotropic() {
        let d = disk(0.05);
        let e = Interaction::new(&d, ConformalMetric::flat(d.mesh())).unwrap();
        let cfg = Configuration::new(vec![[0.0, 0.0]], vec![], vec![1.0]).unwrap();
        let h = e.hessian(&cfg, 0.05).unwrap();
        let [a, b] = [h.eigenvalues[0], h.eigenvalues[1]];
        assert!(a > 0.0 && (a - b).abs() < 0.05 * b, "{:?}", h.eigenvalues);
        // R'' at the centre: 1/π + 1/π.
        assert!((a - 2.0 / std::f64::consts::PI).abs() < 0.05 * a);
        assert_eq!(h.morse_index, 0);
        assert!(!h.degenerate);
        assert!(h.asymmetry <= 1e-6);
    }

    #[test]
    fn coincident_points_are_rejected() {
        let d = disk(0.1);
        let e = Interaction::new(&d, ConformalMetric::flat(d.mesh())).unwrap();
        let cfg = Configuration::new(vec![[0.1, 0.0], [0.1, 0.0]], vec![], vec![1.0, 1.0]).unwrap();
        assert!(matches!(e.value(&cfg), Err(Error::Domain(_))));
        assert!(Configuration::new(vec![[0.0, 0.0]], vec![], vec![0.0]).is_err());
    }

    #[test]
    fn log_potential_term() {
        let h = LogPotential::new(vec![2.0, 1.0], |p| 1.0 + p[0] * p[0], |p| [2.0 * p[0], 0.0], "1+x^2");
        let pts = [[1.0, 0.0], [0.0, 3.0]];
        assert!((h.value(&pts) - 2.0 * 2f64.ln()).abs() < 1e-15);
        assert_eq!(h.gradient(&pts), vec![[2.0, 0.0], [0.0, 0.0]]);
    }
}
