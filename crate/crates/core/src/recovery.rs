//! Quadratic moving-least-squares recovery of values and gradients from vertex data.
//!
//! Around an evaluation point `p` the vertices within `ρ` are fitted by a quadratic
//! with weights `(1 − (d/ρ)²)⁴`. The weights vanish smoothly at `d = ρ`, so recovered
//! values and gradients are smooth functions of `p` (a vertex entering or leaving the
//! patch contributes with zero weight).

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::mesh::Mesh;

/// Default patch radius in units of `h_max`.
pub const PATCH_RADIUS: f64 = 2.5;

/// Linear functionals `u ↦ u(p)` and `u ↦ ∇u(p)` acting on vertex values.
#[derive(Debug, Clone)]
pub struct Stencil {
    pub vertices: Vec<usize>,
    pub value: Vec<f64>,
    pub gradient: Vec<[f64; 2]>,
}

impl Stencil {
    pub fn at(mesh: &Mesh, p: Point) -> Result<Self> {
        Self::with_radius(mesh, p, PATCH_RADIUS * mesh.h_max())
    }

    pub fn with_radius(mesh: &Mesh, p: Point, rho: f64) -> Result<Self> {
        let mut rho = rho;
        for _ in 0..4 {
            let mut vertices = Vec::new();
            let mut rows = Vec::new();
            mesh.for_each_vertex_within(p, rho, |v, d| {
                let w = 1.0 - (d / rho).powi(2);
                if w > 0.0 {
                    let q = mesh.vertices()[v];
                    let (u, s) = ((q[0] - p[0]) / rho, (q[1] - p[1]) / rho);
                    vertices.push(v);
                    rows.push(([1.0, u, s, u * u, u * s, s * s], w.powi(4)));
                }
            });
            if vertices.len() >= 10 {
                if let Some(st) = Self::fit(vertices, &rows, rho) {
                    return Ok(st);
                }
            }
            rho *= 1.5;
        }
        Err(Error::Numerical(format!("no well-posed recovery patch at {p:?}")))
    }

    fn fit(vertices: Vec<usize>, rows: &[([f64; 6], f64)], rho: f64) -> Option<Self> {
        let mut a = Mat::<f64>::zeros(6, 6);
        for (b, w) in rows {
            for i in 0..6 {
                for j in 0..6 {
                    a[(i, j)] += w * b[i] * b[j];
                }
            }
        }
        let llt = a.llt(Side::Lower).ok()?;
        // Coefficient functionals: c = A⁻¹ Bᵀ W u, rows 0..3 give value and gradient.
        let mut rhs = Mat::<f64>::zeros(6, 3);
        rhs[(0, 0)] = 1.0;
        rhs[(1, 1)] = 1.0;
        rhs[(2, 2)] = 1.0;
        let e = llt.solve(&rhs);
        // Guard against nearly collinear patches.
        let diag_min = (0..6).map(|i| a[(i, i)]).fold(f64::INFINITY, f64::min);
        if !(diag_min > 1e-10) || (0..3).any(|k| !e[(0, k)].is_finite()) {
            return None;
        }
        let mut value = Vec::with_capacity(rows.len());
        let mut gradient = Vec::with_capacity(rows.len());
        for (b, w) in rows {
            let dot = |k: usize| (0..6).map(|i| e[(i, k)] * b[i]).sum::<f64>() * w;
            value.push(dot(0));
            gradient.push([dot(1) / rho, dot(2) / rho]);
        }
        Some(Self { vertices, value, gradient })
    }

    pub fn value_of(&self, u: &[f64]) -> f64 {
        self.vertices.iter().zip(&self.value).map(|(&v, w)| w * u[v]).sum()
    }

    pub fn gradient_of(&self, u: &[f64]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (&v, w) in self.vertices.iter().zip(&self.gradient) {
            g[0] += w[0] * u[v];
            g[1] += w[1] * u[v];
        }
        g
    }
}
