//! Critical points of the interaction functional and gradient blow-up probes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::{fit_power_law, PowerFit};
use crate::geom::{self, Point};
use crate::interaction::{Configuration, ConfigurationRecord, Gradient, HessianReport, Interaction};
use crate::mesh::Location;

/// Search parameters; `None` fields are derived from the domain.
#[derive(Debug, Clone, Serialize)]
pub struct SearchOptions {
    pub starts: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Absolute gradient tolerance; default `1e−6 ×` the median `|∇f|_g` of 100 random
    /// configurations.
    pub gtol: Option<f64>,
    /// Classification step; default `0.05 · diameter`.
    pub hessian_step: Option<f64>,
    /// Default `1e−2 · diameter`.
    pub dedup_radius: Option<f64>,
    /// Start guard around `Δ_X` and `∂Σ`; default `0.05 · diameter`.
    pub guard: Option<f64>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { starts: 8, seed: 0, max_iter: 60, gtol: None, hessian_step: None, dedup_radius: None, guard: None }
    }
}

/// Relative gradient tolerance.
pub const GTOL_FACTOR: f64 = 1e-6;
/// Newton Hessian step in units of the diameter.
const NEWTON_STEP: f64 = 1e-3;
/// Longest Newton step in units of the diameter.
const MAX_STEP: f64 = 0.1;
/// Relative difference step of the fallback Newton Hessian (the classification step).
const SMOOTH_STEP: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct CriticalPoint {
    pub config: Configuration,
    pub value: f64,
    pub gradient: Gradient,
    pub hessian: HessianReport,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalRecord {
    pub config: ConfigurationRecord,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub gradient_norm_g: f64,
    pub hessian: HessianReport,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct SearchReport {
    pub gtol: f64,
    pub gradient_scale: f64,
    pub hessian_step: f64,
    pub dedup_radius: f64,
    pub converged: usize,
    pub points: Vec<CriticalPoint>,
}

/// Outcome of a single local search.
#[derive(Debug, Clone)]
pub enum LocalResult {
    Converged(Configuration, Gradient, usize),
    Stalled(Configuration, Gradient, usize),
}

impl CriticalPoint {
    pub fn record(&self, e: &Interaction) -> CriticalRecord {
        CriticalRecord {
            config: self.config.record(e.domain()),
            value: self.value,
            gradient: self.gradient.components.clone(),
            gradient_norm_g: self.gradient.norm_g,
            hessian: self.hessian.clone(),
            iterations: self.iterations,
        }
    }
}

/// Uniform samples of `X` away from the diagonal and from `∂Σ` (interior points).
pub fn random_configuration(e: &Interaction, template: &Configuration, rng: &mut impl Rng, guard: f64) -> Configuration {
    let domain = e.domain();
    let mesh = domain.mesh();
    let curve = mesh.curve();
    let (lo, hi) = bounding_box(mesh.vertices());
    loop {
        let mut interior = Vec::with_capacity(template.l());
        while interior.len() < template.l() {
            let p = [rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1])];
            let inside = matches!(mesh.locate(p), Location::Inside { .. });
            if inside && geom::dist(p, curve.position(curve.closest_param(p))) > guard {
                interior.push(p);
            }
        }
        let boundary = (0..template.boundary.len()).map(|_| rng.gen_range(0.0..curve.period)).collect();
        let cfg = Configuration { interior, boundary, ..template.clone() };
        if cfg.min_separation(domain) > guard {
            return cfg;
        }
    }
}

fn bounding_box(pts: &[Point]) -> (Point, Point) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in pts {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (lo, hi)
}

/// Median `|∇f|_g` over random configurations.
pub fn gradient_scale(e: &Interaction, template: &Configuration, samples: usize, seed: u64, guard: f64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5ca1e);
    let cfgs: Vec<Configuration> = (0..samples).map(|_| random_configuration(e, template, &mut rng, guard)).collect();
    let mut norms =
        cfgs.par_iter().map(|c| e.gradient(c).map(|g| g.norm_g)).collect::<Result<Vec<f64>>>()?;
    norms.sort_by(f64::total_cmp);
    Ok(norms[norms.len() / 2])
}

fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves the small dense system `h p = r` by Gaussian elimination with partial
/// pivoting; `None` when numerically singular.
fn solve_dense(h: &[Vec<f64>], r: &[f64]) -> Option<Vec<f64>> {
    let n = r.len();
    let mut a: Vec<Vec<f64>> = h.iter().zip(r).map(|(row, v)| row.iter().copied().chain([*v]).collect()).collect();
    let scale = h.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[piv][c].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(c, piv);
        for i in c + 1..n {
            let f = a[i][c] / a[c][c];
            for k in c..=n {
                a[i][k] -= f * a[c][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (a[i][n] - s) / a[i][i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Damped Newton on the chart coordinates with Armijo backtracking on `|∇f|²`;
/// gradient descent on `f` when the Newton direction cannot be used.
pub fn local_search(e: &Interaction, start: &Configuration, gtol: f64, max_iter: usize) -> Result<LocalResult> {
    let diam = e.domain().mesh().diameter();
    let max_step = MAX_STEP * diam;
    let mut cfg = start.clone();
    let mut g = e.gradient(&cfg)?;
    for it in 0..max_iter {
        if g.norm_g <= gtol {
            return Ok(LocalResult::Converged(normalize(e, &cfg), g, it));
        }
        let phi = euclid(&g.components).powi(2);
        let c0 = cfg.coords();
        let try_step = |dir: &[f64], alpha: f64| -> Option<(Configuration, Gradient)> {
            let c: Vec<f64> = c0.iter().zip(dir).map(|(x, d)| x + alpha * d).collect();
            let next = cfg.with_coords(&c);
            e.gradient(&next).ok().map(|gn| (next, gn))
        };
        let mut accepted = None;
        let minus_g: Vec<f64> = g.components.iter().map(|v| -v).collect();
        // Fine differences resolve the mesh-scale texture of f; coarse ones see its
        // smooth curvature and move along nearly flat directions.
        for step in [NEWTON_STEP, SMOOTH_STEP] {
            let Some(mut p) = e.hessian_matrix(&cfg, step * diam).ok().and_then(|h| solve_dense(&h, &minus_g))
            else {
                continue;
            };
            let len = euclid(&p);
            if len > max_step {
                p.iter_mut().for_each(|v| *v *= max_step / len);
            }
            let mut alpha = 1.0;
            for _ in 0..12 {
                if let Some((next, gn)) = try_step(&p, alpha) {
                    if euclid(&gn.components).powi(2) <= (1.0 - 1e-4 * alpha) * phi {
                        accepted = Some((next, gn));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
        }
        if accepted.is_none() {
            let f0 = e.value(&cfg)?;
            let len = euclid(&minus_g);
            let mut alpha = max_step / len;
            for _ in 0..30 {
                if let Some((next, gn)) = try_step(&minus_g, alpha) {
                    if let Ok(f1) = e.value(&next) {
                        if f1 <= f0 - 1e-4 * alpha * phi {
                            accepted = Some((next, gn));
                            break;
                        }
                    }
                }
                alpha *= 0.5;
            }
        }
        match accepted {
            Some((next, gn)) => {
                cfg = next;
                g = gn;
            }
            None => return Ok(LocalResult::Stalled(normalize(e, &cfg), g, it)),
        }
    }
    if g.norm_g <= gtol {
        Ok(LocalResult::Converged(normalize(e, &cfg), g, max_iter))
    } else {
        Ok(LocalResult::Stalled(normalize(e, &cfg), g, max_iter))
    }
}

/// Wraps boundary parameters into `[0, L)`.
fn normalize(e: &Interaction, cfg: &Configuration) -> Configuration {
    let curve = e.domain().mesh().curve();
    let mut c = cfg.clone();
    c.boundary.iter_mut().for_each(|t| *t = curve.wrap(*t));
    c
}

/// Largest point displacement between two configurations.
pub fn configuration_distance(e: &Interaction, a: &Configuration, b: &Configuration) -> f64 {
    let (pa, pb) = (a.points(e.domain()), b.points(e.domain()));
    pa.iter().zip(&pb).map(|(p, q)| geom::dist(*p, *q)).fold(0.0, f64::max)
}

/// Resolved (gtol, gradient scale, hessian step, dedup radius, guard).
pub fn resolve_options(e: &Interaction, template: &Configuration, opts: &SearchOptions) -> Result<(f64, f64, f64, f64, f64)> {
    let diam = e.domain().mesh().diameter();
    let guard = opts.guard.unwrap_or(0.05 * diam);
    let (gtol, scale) = match opts.gtol {
        Some(g) => (g, f64::NAN),
        None => {
            let s = gradient_scale(e, template, 100, opts.seed, guard)?;
            (GTOL_FACTOR * s, s)
        }
    };
    Ok((gtol, scale, opts.hessian_step.unwrap_or(SMOOTH_STEP * diam), opts.dedup_radius.unwrap_or(1e-2 * diam), guard))
}

/// Multistart search; results are sorted by value and deduplicated.
pub fn find_critical(e: &Interaction, template: &Configuration, opts: &SearchOptions) -> Result<SearchReport> {
    let (gtol, gradient_scale, hessian_step, dedup_radius, guard) = resolve_options(e, template, opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let starts: Vec<Configuration> =
        (0..opts.starts).map(|_| random_configuration(e, template, &mut rng, guard)).collect();
    let found = starts
        .par_iter()
        .map(|s| local_search(e, s, gtol, opts.max_iter))
        .collect::<Result<Vec<_>>>()?;
    let mut converged: Vec<(Configuration, Gradient, usize, f64)> = Vec::new();
    for r in found {
        if let LocalResult::Converged(c, g, it) = r {
            let v = e.value(&c)?;
            converged.push((c, g, it, v));
        }
    }
    let n_converged = converged.len();
    converged.sort_by(|a, b| a.3.total_cmp(&b.3).then_with(|| cmp_coords(&a.0.coords(), &b.0.coords())));
    let mut kept: Vec<(Configuration, Gradient, usize, f64)> = Vec::new();
    for c in converged {
        if kept.iter().all(|k| configuration_distance(e, &k.0, &c.0) > dedup_radius) {
            kept.push(c);
        }
    }
    let points = kept
        .into_par_iter()
        .map(|(config, gradient, iterations, value)| {
            let hessian = e.hessian(&config, hessian_step)?;
            Ok(CriticalPoint { config, value, gradient, hessian, iterations })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SearchReport { gtol, gradient_scale, hessian_step, dedup_radius, converged: n_converged, points })
}

fn cmp_coords(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
}

/// Families of configurations approaching `∂(X ∖ Δ_X)`.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProbePath {
    /// One interior point at distance `ρ` from `γ(t)` along the inward normal; the
    /// probed quantity is `|∂_ν f|` in the inward direction.
    BoundaryApproach { boundary_param: f64 },
    /// Two interior points at `midpoint ± (ρ/2)·direction`; the probed quantity is
    /// `|∇_{x_1} f|_g`.
    Collision { midpoint: Point, direction: Point },
}

impl ProbePath {
    pub fn configuration(&self, e: &Interaction, sigmas: &[f64], rho: f64) -> Result<Configuration> {
        let curve = e.domain().mesh().curve();
        match *self {
            ProbePath::BoundaryApproach { boundary_param } => {
                let p = geom::sub(curve.position(boundary_param), geom::scale(curve.normal(boundary_param), rho));
                Configuration::new(vec![p], vec![], sigmas[..1].to_vec())
            }
            ProbePath::Collision { midpoint, direction } => {
                let u = geom::scale(direction, 0.5 * rho / geom::norm(direction));
                Configuration::new(vec![geom::add(midpoint, u), geom::sub(midpoint, u)], vec![], sigmas[..2].to_vec())
            }
        }
    }

    /// Distance to the limiting stratum.
    fn measure(&self, e: &Interaction, cfg: &Configuration) -> Result<(f64, f64)> {
        let g = e.gradient(cfg)?;
        let probed = match *self {
            ProbePath::BoundaryApproach { boundary_param } => {
                let n = e.domain().mesh().curve().normal(boundary_param);
                let psi = e.metric().eval(e.domain().mesh(), cfg.interior[0]);
                (g.components[0] * n[0] + g.components[1] * n[1]).abs() / psi.sqrt()
            }
            ProbePath::Collision { .. } => g.block_norms[0],
        };
        Ok((g.norm_g, probed))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BlowupRow {
    pub rho: f64,
    pub gradient_norm: f64,
    pub probed: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlowupTable {
    pub path: ProbePath,
    pub sigmas: Vec<f64>,
    pub rows: Vec<BlowupRow>,
    /// Fit of `probed` against `ρ`.
    pub fit: PowerFit,
    pub truncation_radius: f64,
    pub warnings: Vec<String>,
}

/// Samples the probed gradient along `path` at the given distances and fits a power law.
/// Distances below `4 h_max` are dropped with a warning.
pub fn blowup_probe(e: &Interaction, path: &ProbePath, sigmas: &[f64], rhos: &[f64]) -> Result<BlowupTable> {
    let needed = match path {
        ProbePath::BoundaryApproach { .. } => 1,
        ProbePath::Collision { .. } => 2,
    };
    if sigmas.len() < needed {
        return Err(Error::Config(format!("probe needs {needed} weights")));
    }
    let cut = 4.0 * e.domain().mesh().h_max();
    let mut warnings = Vec::new();
    let kept: Vec<f64> = rhos.iter().copied().filter(|&r| r >= cut).collect();
    if kept.len() < rhos.len() {
        warnings.push(format!(
            "{} distances below the resolution limit 4·h_max = {cut:.4} were dropped",
            rhos.len() - kept.len()
        ));
    }
    let rows = kept
        .par_iter()
        .map(|&rho| {
            let cfg = path.configuration(e, sigmas, rho)?;
            let (gradient_norm, probed) = path.measure(e, &cfg)?;
            Ok(BlowupRow { rho, gradient_norm, probed })
        })
        .collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = rows.iter().map(|r| r.rho).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.probed).collect();
    let fit = fit_power_law(&x, &y)?;
    Ok(BlowupTable { path: path.clone(), sigmas: sigmas[..needed].to_vec(), rows, fit, truncation_radius: cut, warnings })
}

/// `n` geometrically spaced distances in `[lo, hi]`.
pub fn geometric_distances(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1).max(1) as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::BoundaryCurve;
    use crate::fem::ConformalMetric;
    use crate::green::Domain;
    use crate::mesh::build_domain;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn flat_disk(h: f64) -> Interaction {
        let mesh = Arc::new(build_domain(&BoundaryCurve::circle([0.0, 0.0], 1.0), h).unwrap());
        let d = Domain::new(mesh.clone()).unwrap();
        Interaction::new(&d, ConformalMetric::flat(&mesh)).unwrap()
    }

    #[test]
    fn single_interior_point_finds_the_centre() {
        let e = flat_disk(0.06);
        let t = Configuration::new(vec![[0.0, 0.0]], vec![], vec![1.0]).unwrap();
        let opts = SearchOptions { starts: 4, seed: 7, ..Default::default() };
        let r = find_critical(&e, &t, &opts).unwrap();
        assert_eq!(r.points.len(), 1, "{:?}", r.points);
        let p = &r.points[0];
        assert!(geom::norm(p.config.interior[0]) < 1e-3);
        assert_eq!(p.hessian.morse_index, 0);
        assert!(!p.hessian.degenerate);
        assert!(p.gradient.norm_g <= r.gtol);
    }

    #[test]
    fn search_is_deterministic() {
        let e = flat_disk(0.08);
        let t = Configuration::new(vec![[0.0, 0.0]], vec![0.0], vec![1.0, 0.5]).unwrap();
        let opts = SearchOptions { starts: 3, seed: 11, max_iter: 15, gtol: Some(1e-6), ..Default::default() };
        let a = find_critical(&e, &t, &opts).unwrap();
        let b = find_critical(&e, &t, &opts).unwrap();
        assert_eq!(a.points.len(), b.points.len());
        for (x, y) in a.points.iter().zip(&b.points) {
            assert_eq!(x.config.coords(), y.config.coords());
            assert_eq!(x.value.to_bits(), y.value.to_bits());
        }
    }

    #[test]
    fn dense_solver() {
        let h = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let x = solve_dense(&h, &[3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14 && (x[1] - 1.4).abs() < 1e-14);
        assert!(solve_dense(&[vec![1.0, 1.0], vec![1.0, 1.0]], &[1.0, 0.0]).is_none());
    }

    #[test]
    fn boundary_approach_rate() {
        let e = flat_disk(0.02);
        let rhos = geometric_distances(0.03, 0.25, 12);
        let t = blowup_probe(&e, &ProbePath::BoundaryApproach { boundary_param: 0.4 }, &[1.0], &rhos).unwrap();
        assert_eq!(t.warnings.len(), 1);
        assert!((t.fit.exponent + 1.0).abs() < 0.1, "{:?}", t.fit);
        assert!((t.fit.prefactor - 1.0 / (2.0 * PI)).abs() < 0.3 / (2.0 * PI), "{:?}", t.fit);
        // Eventually monotone: the probed gradient grows as ρ decreases.
        assert!(t.rows.windows(2).all(|w| w[0].probed > w[1].probed));
    }
}
