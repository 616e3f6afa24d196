//! First variation of the regular part under conformal changes of the metric.
//!
//! For `g_t = (1 + tθ) g` the derivative `w = D_ψH(·, ξ)[θ]` is computed three ways:
//!
//! * integral: `w(x) = −(1/|Σ|_g) ∫ (G(z, x) + G(z, ξ)) θ(z) dv_g(z)`;
//! * PDE: `−Δ_g w = (1/|Σ|_g²)∫θ dv_g − θ/|Σ|_g`, `∂_ν w = 0`, `∫ w dv_g = −∫ G(·, ξ) θ dv_g`;
//! * finite differences: `(H^{(1+tθ)g}(x, ξ) − H^g(x, ξ)) / t`.
//!
//! The `_additive` variants differentiate along `ψ + tθ` instead (base point `ψ`), which
//! equals the multiplicative derivative in direction `θ/ψ`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::critical::{local_search, LocalResult};
use crate::error::{Error, Result};
use crate::fem::{ConformalMetric, ScalarField};
use crate::geom::Point;
use crate::green::{GreenBundle, GreenSolver, SourcePoint};
use crate::interaction::{Configuration, ConfigurationRecord, HessianReport, Interaction};
use crate::mesh::Mesh;
use crate::recovery::Stencil;

/// A direction `θ` in the space of conformal factors.
#[derive(Debug, Clone)]
pub struct PerturbationDirection {
    pub theta: ScalarField,
    pub norm: f64,
}

impl PerturbationDirection {
    pub fn new(theta: ScalarField) -> Self {
        let norm = theta.sup_norm();
        Self { theta, norm }
    }

    /// Largest `t > 0` with `1 + tθ > 0` at every vertex.
    pub fn max_step(&self) -> f64 {
        let neg = self.theta.values().iter().fold(0.0f64, |m, v| m.min(*v));
        if neg < 0.0 { -1.0 / neg } else { f64::INFINITY }
    }
}

/// `∫ G(·, s) u dv_g` for vertex values `u`: lumped regular part plus the linearized
/// singular moments against `uψ`.
fn green_moment(b: &GreenBundle, solver: &GreenSolver, u: &[f64]) -> f64 {
    let mass = solver.operator().mass();
    let psi = solver.metric().values();
    let h = b.regular_part().values();
    let regular: f64 = mass.iter().zip(u).zip(h).map(|((m, u), h)| m * u * h).sum();
    let weighted: Vec<f64> = u.iter().zip(psi).map(|(u, p)| u * p).collect();
    regular - b.source_load().singular_integral(&weighted)
}

/// `∫ G(·, s) u dx` (Euclidean weight).
fn green_moment_euclidean(b: &GreenBundle, solver: &GreenSolver, u: &[f64]) -> f64 {
    let area = solver.operator().discretization().lumped_area();
    let h = b.regular_part().values();
    let regular: f64 = area.iter().zip(u).zip(h).map(|((a, u), h)| a * u * h).sum();
    regular - b.source_load().singular_integral(u)
}

fn check_mesh(solver: &GreenSolver, theta: &ScalarField) -> Result<()> {
    if !Arc::ptr_eq(theta.mesh(), solver.mesh()) {
        return Err(Error::Usage("direction and solver live on different meshes".into()));
    }
    Ok(())
}

fn pair(solver: &GreenSolver, x: &SourcePoint, xi: &SourcePoint) -> Result<(GreenBundle, GreenBundle)> {
    let mut b = solver.regular_parts(&[*x, *xi])?;
    let bxi = b.pop().unwrap();
    Ok((b.pop().unwrap(), bxi))
}

/// Integral route, multiplicative direction: `−(1/|Σ|_g)∫(G_x + G_ξ)θ dv_g`.
pub fn dpsi_h_integral(solver: &GreenSolver, x: &SourcePoint, xi: &SourcePoint, theta: &ScalarField) -> Result<f64> {
    check_mesh(solver, theta)?;
    let (bx, bxi) = pair(solver, x, xi)?;
    let u = theta.values();
    Ok(-(green_moment(&bx, solver, u) + green_moment(&bxi, solver, u)) / solver.operator().area())
}

/// Integral route, additive direction at base `ψ`: `−(1/|Σ|_{ψ})∫(G_x + G_ξ)θ dx`.
pub fn dpsi_h_integral_additive(
    solver: &GreenSolver,
    x: &SourcePoint,
    xi: &SourcePoint,
    theta: &ScalarField,
) -> Result<f64> {
    check_mesh(solver, theta)?;
    let (bx, bxi) = pair(solver, x, xi)?;
    let u = theta.values();
    Ok(-(green_moment_euclidean(&bx, solver, u) + green_moment_euclidean(&bxi, solver, u))
        / solver.operator().area())
}

/// PDE route, multiplicative direction: the field `x ↦ D_ψH(x, ξ)[θ]`.
pub fn dpsi_h_pde(solver: &GreenSolver, xi: &SourcePoint, theta: &ScalarField) -> Result<ScalarField> {
    check_mesh(solver, theta)?;
    let op = solver.operator();
    let area = op.area();
    let bxi = solver.regular_part(xi)?;
    let c = op.integrate_values(theta.values()) / (area * area);
    let load: Vec<f64> = op.mass().iter().zip(theta.values()).map(|(m, t)| m * (c - t / area)).collect();
    let target = -green_moment(&bxi, solver, theta.values());
    let w = op.solve_loads(&[load], &[target])?.pop().unwrap();
    ScalarField::new(solver.mesh(), w)
}

/// PDE route, additive direction at base `ψ`:
/// `−Δ₀ w = ψ∫θ dx/|Σ|² − θ/|Σ|`, `∫ w ψ dx = −∫ G_ξ θ dx`.
pub fn dpsi_h_pde_additive(solver: &GreenSolver, xi: &SourcePoint, theta: &ScalarField) -> Result<ScalarField> {
    check_mesh(solver, theta)?;
    let op = solver.operator();
    let area = op.area();
    let lumped = op.discretization().lumped_area();
    let psi = solver.metric().values();
    let bxi = solver.regular_part(xi)?;
    let c: f64 = lumped.iter().zip(theta.values()).map(|(a, t)| a * t).sum::<f64>() / (area * area);
    let load: Vec<f64> =
        lumped.iter().zip(psi).zip(theta.values()).map(|((a, p), t)| a * (p * c - t / area)).collect();
    let target = -green_moment_euclidean(&bxi, solver, theta.values());
    let w = op.solve_loads(&[load], &[target])?.pop().unwrap();
    ScalarField::new(solver.mesh(), w)
}

/// Recovered value of a vertex field at `x`.
pub fn field_at(field: &ScalarField, x: Point) -> Result<f64> {
    Ok(Stencil::at(field.mesh(), x)?.value_of(field.values()))
}

/// `H(x, ξ)` from the regular-part solution of `load` under `metric`.
fn regular_at(solver: &GreenSolver, metric: ConformalMetric, xi: &SourcePoint, x: Point) -> Result<f64> {
    let s = GreenSolver::new(solver.domain(), metric)?;
    let load = Arc::new(solver.domain().source_load(xi));
    let b = s.from_loads(&[load])?.pop().unwrap();
    Ok(b.regular_smooth(&Stencil::at(solver.mesh(), x)?))
}

/// Finite-difference route: `(H^{(1+tθ)g}(x, ξ) − H^g(x, ξ)) / t`.
pub fn dpsi_h_fd(solver: &GreenSolver, x: Point, xi: &SourcePoint, theta: &ScalarField, t: f64) -> Result<f64> {
    check_mesh(solver, theta)?;
    if t == 0.0 {
        return Err(Error::Domain("finite-difference step must be nonzero".into()));
    }
    let base = solver.metric();
    let hp = regular_at(solver, base.perturbed(theta, t)?, xi, x)?;
    let h0 = regular_at(solver, base.clone(), xi, x)?;
    Ok((hp - h0) / t)
}

/// Central variant: `(H^{(1+tθ)g} − H^{(1−tθ)g}) / 2t`.
pub fn dpsi_h_fd_central(
    solver: &GreenSolver,
    x: Point,
    xi: &SourcePoint,
    theta: &ScalarField,
    t: f64,
) -> Result<f64> {
    check_mesh(solver, theta)?;
    let base = solver.metric();
    let hp = regular_at(solver, base.perturbed(theta, t)?, xi, x)?;
    let hm = regular_at(solver, base.perturbed(theta, -t)?, xi, x)?;
    Ok((hp - hm) / (2.0 * t))
}

/// One trigonometric product `cos/sin(π j u) · cos/sin(π k v)` with its coefficient.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FourierTerm {
    pub j: u32,
    pub k: u32,
    pub sin_u: bool,
    pub sin_v: bool,
    pub coeff: f64,
}

/// Smooth random directions, reproducible from a seed.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThetaSpec {
    /// Products of `cos/sin(πju)·cos/sin(πkv)` with `j + k ≤ degree`, in box coordinates
    /// `u, v ∈ [0, 1]`; i.i.d. uniform coefficients rescaled to the requested sup norm.
    Fourier { lo: Point, hi: Point, terms: Vec<FourierTerm>, scale: f64 },
    /// `a₁ρ² + a₂ρ⁴` with `ρ = |x − centre|`.
    Radial { centre: Point, a1: f64, a2: f64, scale: f64 },
}

/// Highest total degree of the random Fourier ensemble.
pub const FOURIER_DEGREE: u32 = 4;

impl ThetaSpec {
    pub fn random_fourier(mesh: &Mesh, amplitude: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = bbox(mesh);
        let mut terms = Vec::new();
        for j in 0..=FOURIER_DEGREE {
            for k in 0..=FOURIER_DEGREE - j {
                for (sin_u, sin_v) in [(false, false), (false, true), (true, false), (true, true)] {
                    if (sin_u && j == 0) || (sin_v && k == 0) {
                        continue;
                    }
                    terms.push(FourierTerm { j, k, sin_u, sin_v, coeff: rng.gen_range(-1.0..1.0) });
                }
            }
        }
        let mut spec = ThetaSpec::Fourier { lo, hi, terms, scale: 1.0 };
        spec.normalize(mesh, amplitude);
        spec
    }

    pub fn random_radial(mesh: &Mesh, amplitude: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = mesh.num_vertices() as f64;
        let centre = mesh.vertices().iter().fold([0.0; 2], |c, p| [c[0] + p[0] / n, c[1] + p[1] / n]);
        let mut spec = ThetaSpec::Radial { centre, a1: rng.gen_range(-1.0..1.0), a2: rng.gen_range(-1.0..1.0), scale: 1.0 };
        spec.normalize(mesh, amplitude);
        spec
    }

    fn normalize(&mut self, mesh: &Mesh, amplitude: f64) {
        let sup = mesh.vertices().iter().fold(0.0f64, |m, &p| m.max(self.eval(p).abs()));
        let s = if sup > 0.0 { amplitude / sup } else { 0.0 };
        match self {
            ThetaSpec::Fourier { scale, .. } | ThetaSpec::Radial { scale, .. } => *scale *= s,
        }
    }

    pub fn eval(&self, p: Point) -> f64 {
        match self {
            ThetaSpec::Fourier { lo, hi, terms, scale } => {
                let u = (p[0] - lo[0]) / (hi[0] - lo[0]);
                let v = (p[1] - lo[1]) / (hi[1] - lo[1]);
                let trig = |s: bool, x: f64| if s { x.sin() } else { x.cos() };
                scale
                    * terms
                        .iter()
                        .map(|t| t.coeff * trig(t.sin_u, PI * t.j as f64 * u) * trig(t.sin_v, PI * t.k as f64 * v))
                        .sum::<f64>()
            }
            ThetaSpec::Radial { centre, a1, a2, scale } => {
                let r2 = (p[0] - centre[0]).powi(2) + (p[1] - centre[1]).powi(2);
                scale * (a1 * r2 + a2 * r2 * r2)
            }
        }
    }

    pub fn field(&self, mesh: &Arc<Mesh>) -> ScalarField {
        let spec = self.clone();
        ScalarField::from_fn(mesh, move |p| spec.eval(p))
    }
}

fn bbox(mesh: &Mesh) -> (Point, Point) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in mesh.vertices() {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (lo, hi)
}

/// Settings shared by the trials of one genericity experiment.
#[derive(Debug, Clone, Serialize)]
pub struct GenericityOptions {
    pub amplitude: f64,
    pub radial: bool,
    pub hessian_step: f64,
    pub gtol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GenericityOutcome {
    pub seed: u64,
    pub theta: ThetaSpec,
    pub before: HessianReport,
    pub after: Option<HessianReport>,
    pub after_config: Option<ConfigurationRecord>,
    /// The local search under the perturbed metric failed.
    pub migrated: bool,
    /// `min |λ_after| / min |λ_before|`.
    pub growth: f64,
}

/// Perturbs the metric to `ψ(1 + θ)` with a random `θ` of sup norm `amplitude`, tracks
/// the critical point `config` by a local search and compares Hessian spectra.
pub fn genericity_trial(
    base: &Interaction,
    config: &Configuration,
    before: &HessianReport,
    seed: u64,
    opts: &GenericityOptions,
) -> Result<GenericityOutcome> {
    let domain = base.domain();
    let mesh = domain.mesh();
    let theta = if opts.radial {
        ThetaSpec::random_radial(mesh, opts.amplitude, seed)
    } else {
        ThetaSpec::random_fourier(mesh, opts.amplitude, seed)
    };
    let metric = base.metric().perturbed(&theta.field(mesh), 1.0)?;
    let e = Interaction::new(domain, metric)?.with_source_step(base.source_step());
    let tracked = match local_search(&e, config, opts.gtol, opts.max_iter)? {
        LocalResult::Converged(c, _, _) => Some(c),
        LocalResult::Stalled(..) => None,
    };
    let (after, after_config) = match &tracked {
        Some(c) => (Some(e.hessian(c, opts.hessian_step)?), Some(c.record(domain))),
        None => (None, None),
    };
    let growth = after.as_ref().map_or(f64::NAN, |a| a.min_abs_eigenvalue() / before.min_abs_eigenvalue());
    Ok(GenericityOutcome { seed, theta, before: before.clone(), after, after_config, migrated: tracked.is_none(), growth })
}

/// Runs `trials` seeded trials (`seed, seed + 1, …`) in parallel.
pub fn genericity_trials(
    base: &Interaction,
    config: &Configuration,
    before: &HessianReport,
    seed: u64,
    trials: usize,
    opts: &GenericityOptions,
) -> Result<Vec<GenericityOutcome>> {
    (0..trials as u64)
        .into_par_iter()
        .map(|k| genericity_trial(base, config, before, seed + k, opts))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::BoundaryCurve;
    use crate::green::Domain;
    use crate::mesh::build_domain;

    fn setup(h: f64) -> (Arc<Domain>, GreenSolver) {
        let mesh = Arc::new(build_domain(&BoundaryCurve::circle([0.0, 0.0], 1.0), h).unwrap());
        let d = Domain::new(mesh.clone()).unwrap();
        let s = GreenSolver::new(&d, ConformalMetric::flat(&mesh)).unwrap();
        (d, s)
    }

    #[test]
    fn constants_are_in_the_kernel() {
        let (d, s) = setup(0.08);
        let theta = ScalarField::constant(d.mesh(), 0.7);
        let (x, xi) = (d.interior_source([-0.3, 0.0]).unwrap(), d.interior_source([0.3, 0.0]).unwrap());
        assert!(dpsi_h_integral(&s, &x, &xi, &theta).unwrap().abs() < 1e-10);
        let w = dpsi_h_pde(&s, &xi, &theta).unwrap();
        assert!(w.sup_norm() < 1e-10, "{}", w.sup_norm());
        assert!(dpsi_h_fd(&s, x.position, &xi, &theta, 1e-3).unwrap().abs() < 1e-10);
    }

    #[test]
    fn coincident_points_double_the_source_term() {
        let (d, s) = setup(0.08);
        let theta = ScalarField::from_fn(d.mesh(), |p| p[0] * p[0] - 0.2 * p[1]);
        let xi = d.interior_source([0.3, 0.1]).unwrap();
        let a = dpsi_h_integral(&s, &xi, &xi, &theta).unwrap();
        let b = s.regular_part(&xi).unwrap();
        let single = green_moment(&b, &s, theta.values());
        assert!((a + 2.0 * single / s.operator().area()).abs() < 1e-14);
    }

    #[test]
    fn routes_agree_on_a_coarse_mesh() {
        let (d, s) = setup(0.05);
        let theta = ScalarField::from_fn(d.mesh(), |p| p[0] * p[0] + 0.5 * p[1]);
        let (x, xi) = (d.interior_source([-0.3, 0.2]).unwrap(), d.interior_source([0.4, 0.0]).unwrap());
        let int = dpsi_h_integral(&s, &x, &xi, &theta).unwrap();
        let pde = field_at(&dpsi_h_pde(&s, &xi, &theta).unwrap(), x.position).unwrap();
        let fd = dpsi_h_fd_central(&s, x.position, &xi, &theta, 1e-4).unwrap();
        assert!((pde - fd).abs() < 1e-3 * pde.abs(), "pde {pde} fd {fd}");
        assert!((int - pde).abs() < 2e-2 * pde.abs(), "int {int} pde {pde}");
    }

    #[test]
    fn pde_route_is_linear() {
        let (d, s) = setup(0.08);
        let t1 = ScalarField::from_fn(d.mesh(), |p| p[0]);
        let t2 = ScalarField::from_fn(d.mesh(), |p| p[1] * p[1]);
        let xi = d.boundary_source(1.0);
        let a = dpsi_h_pde(&s, &xi, &t1).unwrap();
        let b = dpsi_h_pde(&s, &xi, &t2).unwrap();
        let c = dpsi_h_pde(&s, &xi, &t1.add(&t2).unwrap()).unwrap();
        let scale = c.sup_norm();
        for i in 0..c.values().len() {
            assert!((a.values()[i] + b.values()[i] - c.values()[i]).abs() < 1e-10 * scale);
        }
    }

    #[test]
    fn fd_route_rejects_inadmissible_steps() {
        let (d, s) = setup(0.1);
        let theta = ScalarField::from_fn(d.mesh(), |p| p[0]);
        let xi = d.interior_source([0.0, 0.0]).unwrap();
        assert!(matches!(dpsi_h_fd(&s, [0.5, 0.0], &xi, &theta, 2.0), Err(Error::Domain(_))));
        let zero = ScalarField::constant(d.mesh(), 0.0);
        assert_eq!(dpsi_h_fd(&s, [0.5, 0.0], &xi, &zero, 1e-3).unwrap(), 0.0);
    }

    #[test]
    fn random_directions_are_normalized_and_reproducible() {
        let (d, _) = setup(0.1);
        let a = ThetaSpec::random_fourier(d.mesh(), 0.05, 3);
        let b = ThetaSpec::random_fourier(d.mesh(), 0.05, 3);
        let fa = a.field(d.mesh());
        assert!((fa.sup_norm() - 0.05).abs() < 1e-15);
        assert_eq!(fa.values(), b.field(d.mesh()).values());
        let r = ThetaSpec::random_radial(d.mesh(), 0.05, 3);
        let (p, q) = ([0.3, 0.4], [0.5, 0.0]);
        assert!((r.eval(p) - r.eval(q)).abs() < 1e-12);
        assert!(PerturbationDirection::new(fa).max_step() >= 20.0);
    }

    #[test]
    fn base_point_covariance() {
        let mesh = Arc::new(build_domain(&BoundaryCurve::circle([0.0, 0.0], 1.0), 0.08).unwrap());
        let d = Domain::new(mesh.clone()).unwrap();
        let psi = ConformalMetric::from_fn(&mesh, |p| 1.0 + 0.3 * p[0]).unwrap();
        let s = GreenSolver::new(&d, psi.clone()).unwrap();
        let theta = ThetaSpec::random_fourier(&mesh, 0.5, 11).field(&mesh);
        let over: Vec<f64> = theta.values().iter().zip(psi.values()).map(|(t, p)| t / p).collect();
        let over = ScalarField::new(&mesh, over).unwrap();
        let (x, xi) = (d.interior_source([0.1, -0.5]).unwrap(), d.boundary_source(2.0));
        let a = dpsi_h_integral_additive(&s, &x, &xi, &theta).unwrap();
        let m = dpsi_h_integral(&s, &x, &xi, &over).unwrap();
        assert!((a - m).abs() < 1e-10 * m.abs(), "{a} {m}");
        let wa = dpsi_h_pde_additive(&s, &xi, &theta).unwrap();
        let wm = dpsi_h_pde(&s, &xi, &over).unwrap();
        let (fa, fm) = (field_at(&wa, x.position).unwrap(), field_at(&wm, x.position).unwrap());
        assert!((fa - fm).abs() < 1e-10 * fm.abs(), "{fa} {fm}");
    }

    #[test]
    fn zero_amplitude_keeps_the_spectrum() {
        let mesh = Arc::new(build_domain(&BoundaryCurve::circle([0.0, 0.0], 1.0), 0.08).unwrap());
        let d = Domain::new(mesh.clone()).unwrap();
        let e = Interaction::new(&d, ConformalMetric::flat(&mesh)).unwrap();
        let start = Configuration::new(vec![], vec![0.3, 0.3 + PI], vec![1.0, 1.0]).unwrap();
        let gtol = 1e-7;
        let LocalResult::Converged(c, _, _) = local_search(&e, &start, gtol, 60).unwrap() else {
            panic!("antipodal pair not found");
        };
        let before = e.hessian(&c, 0.1).unwrap();
        let opts = GenericityOptions { amplitude: 0.0, radial: false, hessian_step: 0.1, gtol, max_iter: 60 };
        let out = genericity_trial(&e, &c, &before, 5, &opts).unwrap();
        let after = out.after.unwrap();
        assert_eq!(after.eigenvalues, before.eigenvalues);
        assert_eq!(out.growth, 1.0);
    }

    #[test]
    fn forward_difference_is_first_order() {
        let (d, s) = setup(0.05);
        let theta = ScalarField::from_fn(d.mesh(), |p| p[0] * p[0] + 0.5 * p[1]);
        let (x, xi) = ([-0.3, 0.2], d.interior_source([0.4, 0.0]).unwrap());
        let limit = dpsi_h_fd_central(&s, x, &xi, &theta, 1e-4).unwrap();
        let e1 = (dpsi_h_fd(&s, x, &xi, &theta, 1e-2).unwrap() - limit).abs();
        let e2 = (dpsi_h_fd(&s, x, &xi, &theta, 1e-3).unwrap() - limit).abs();
        assert!((8.0..=12.0).contains(&(e1 / e2)), "{e1} {e2}");
    }
}
