//! Self-verification of the disk oracle and of the finite-element solver.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::curve::BoundaryCurve;
use crate::error::Result;
use crate::fem::{ConformalMetric, OperatorBundle, ScalarField};
use crate::geom::{self, Point};
use crate::mesh::build_domain;
use crate::oracle;

/// One named check: `value ≤ tolerance` (or inside `[lo, hi]` for ratios).
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: String,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, tol: f64) -> Self {
        Self { name: name.into(), value, tolerance: format!("<= {tol:.0e}"), passed: value <= tol }
    }

    fn within(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Self { name: name.into(), value, tolerance: format!("in [{lo}, {hi}]"), passed: (lo..=hi).contains(&value) }
    }
}

fn random_disk_point(rng: &mut ChaCha8Rng, r_max: f64) -> Point {
    loop {
        let p = [rng.gen_range(-r_max..r_max), rng.gen_range(-r_max..r_max)];
        if geom::norm(p) < r_max {
            return p;
        }
    }
}

/// The defining conditions of the images formula, checked independently of the solver.
pub fn oracle_checks(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sources: Vec<Point> = (0..10).map(|_| random_disk_point(&mut rng, 0.9)).collect();
    let lap = sources
        .iter()
        .map(|&xi| {
            let x = random_disk_point(&mut rng, 0.95);
            (oracle::disk_green_regular_laplacian(x, xi) - 1.0 / PI).abs()
        })
        .fold(0.0, f64::max);
    let normal = sources.iter().map(|&xi| oracle::verify_normal_derivative(xi, 256)).fold(0.0, f64::max);
    let mean = sources.iter().chain(&[[0.0, 0.0]]).map(|&xi| oracle::verify_mean(xi).abs()).fold(0.0, f64::max);
    let pairs: Vec<(Point, Point)> =
        (0..20).map(|_| (random_disk_point(&mut rng, 0.9), random_disk_point(&mut rng, 0.9))).collect();
    let robin = [[0.0, 0.0], [0.3, 0.0], [0.0, -0.6], [0.5, 0.6]]
        .iter()
        .map(|&xi| (oracle::extrapolated_robin(xi) - oracle::disk_robin_exact(xi)).abs())
        .fold(0.0, f64::max);
    vec![
        Check::at_most("oracle: |Δ(regular part) − 1/π|", lap, 1e-12),
        Check::at_most("oracle: boundary ∂_r N (256 × 10)", normal, 1e-10),
        Check::at_most("oracle: |∫ N dx|", mean, 1e-10),
        Check::at_most("oracle: |N(x,ξ) − N(ξ,x)| (20 pairs)", oracle::verify_symmetry(&pairs), 1e-13),
        Check::at_most("oracle: Robin vs extrapolated limit", robin, 1e-8),
    ]
}

/// `−Δu = −4`, `∂_ν u = 2`, `∫u = π/2` on the unit disk (solution `|x|²`) on three
/// nested meshes.
pub fn fem_checks() -> Result<Vec<Check>> {
    let m0 = Arc::new(build_domain(&BoundaryCurve::circle([0.0, 0.0], 1.0), 0.1)?);
    let m1 = Arc::new(m0.refine()?);
    let m2 = Arc::new(m1.refine()?);
    let mut errors = Vec::new();
    let mut mean_defect: f64 = 0.0;
    for mesh in [&m0, &m1, &m2] {
        let b = OperatorBundle::assemble(mesh, ConformalMetric::flat(mesh))?;
        let u = b.solve_neumann(
            &ScalarField::constant(mesh, -4.0),
            &ScalarField::constant(mesh, 2.0),
            PI / 2.0,
        )?;
        mean_defect = mean_defect.max((b.integrate(&u)? - PI / 2.0).abs());
        let l2: f64 = mesh
            .vertices()
            .iter()
            .zip(u.values())
            .zip(b.mass())
            .map(|((p, v), m)| m * (v - geom::dot(*p, *p)).powi(2))
            .sum();
        errors.push(l2.sqrt());
    }
    Ok(vec![
        Check::at_most("fem: manufactured L2 error (h 0.1)", errors[0], 5e-3),
        Check::within("fem: L2 refinement ratio 1", errors[0] / errors[1], 3.5, 4.5),
        Check::within("fem: L2 refinement ratio 2", errors[1] / errors[2], 3.5, 4.5),
        Check::at_most("fem: mean constraint defect", mean_defect, 1e-10),
    ])
}
