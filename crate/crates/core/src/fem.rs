//! P1 finite elements for the Neumann problem of `−Δ_g` with `g = ψ·(Euclidean)`.
//!
//! In two dimensions the Dirichlet energy is conformally invariant, so the stiffness
//! matrix depends on the mesh only and is factored once per mesh ([`Discretization`]).
//! The metric enters through the vertex-lumped mass `m_i = ψ_i·a_i` and the boundary
//! mass weighted by `√ψ`.
//!
//! The mean constraint is handled as a bordered (saddle) system
//!
//! ```text
//! [ K  m ] [u]   [b]
//! [ mᵀ 0 ] [λ] = [c]
//! ```
//!
//! solved by block elimination: `λ = 1ᵀb / 1ᵀm`, then `K u' = b − λm` with one vertex
//! pinned (which keeps the factor SPD and leaves `u'` untouched because the right-hand
//! side is orthogonal to constants), and finally `u = u' + s·1` with `mᵀu = c`.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::{linalg::solvers::Llt, SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::geom::{self, Point};
use crate::mesh::{Location, Mesh};
use crate::quadrature::gauss_legendre;

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    /// Builds an `n × n` matrix from triplets, summing duplicates.
    pub fn from_triplets(n: usize, mut trip: Vec<(usize, usize, f64)>) -> Self {
        trip.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0; n + 1];
        let mut cols: Vec<usize> = Vec::with_capacity(trip.len());
        let mut vals: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last = None;
        for (i, j, v) in trip {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.n).map(|i| x[i] * self.row(i).map(|(j, v)| v * y[j]).sum::<f64>()).sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Positive conformal factor `ψ` sampled at the mesh vertices.
#[derive(Clone)]
pub struct ConformalMetric {
    psi: Vec<f64>,
    analytic: Option<Arc<dyn Fn(Point) -> f64 + Send + Sync>>,
}

impl fmt::Debug for ConformalMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConformalMetric")
            .field("vertices", &self.psi.len())
            .field("analytic", &self.analytic.is_some())
            .finish()
    }
}

impl ConformalMetric {
    /// `ψ ≡ c`.
    pub fn uniform(mesh: &Mesh, c: f64) -> Result<Self> {
        Self::from_fn(mesh, move |_| c)
    }

    /// Flat metric `ψ ≡ 1`.
    pub fn flat(mesh: &Mesh) -> Self {
        Self::uniform(mesh, 1.0).expect("ψ ≡ 1 is admissible")
    }

    /// Samples a closed-form `ψ` at the vertices and keeps it for point evaluation.
    pub fn from_fn(mesh: &Mesh, f: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Result<Self> {
        let psi = mesh.vertices().iter().map(|&p| f(p)).collect();
        let mut m = Self::from_values(mesh, psi)?;
        m.analytic = Some(Arc::new(f));
        Ok(m)
    }

    pub fn from_values(mesh: &Mesh, psi: Vec<f64>) -> Result<Self> {
        if psi.len() != mesh.num_vertices() {
            return Err(Error::Usage(format!(
                "ψ has {} values for {} vertices",
                psi.len(),
                mesh.num_vertices()
            )));
        }
        if let Some((i, v)) = psi.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::Domain(format!("ψ must be positive, got {v} at vertex {i}")));
        }
        Ok(Self { psi, analytic: None })
    }

    pub fn values(&self) -> &[f64] {
        &self.psi
    }

    pub fn is_analytic(&self) -> bool {
        self.analytic.is_some()
    }

    /// `ψ(p)`: the closed form when available, otherwise P1 interpolation.
    pub fn eval(&self, mesh: &Mesh, p: Point) -> f64 {
        if let Some(f) = &self.analytic {
            return f(p);
        }
        let (t, l) = mesh.locate_or_nearest(p);
        let [a, b, c] = mesh.triangles()[t];
        (l[0] * self.psi[a] + l[1] * self.psi[b] + l[2] * self.psi[c]).max(f64::MIN_POSITIVE)
    }

    /// The metric `ψ·(1 + tθ)` (vertex values; a closed form is kept when `theta` has one).
    pub fn perturbed(&self, theta: &ScalarField, t: f64) -> Result<Self> {
        if theta.values.len() != self.psi.len() {
            return Err(Error::Usage("perturbation direction lives on another mesh".into()));
        }
        let mut psi = Vec::with_capacity(self.psi.len());
        for (p, th) in self.psi.iter().zip(&theta.values) {
            let factor = 1.0 + t * th;
            if factor <= 0.0 {
                return Err(Error::Domain(format!("1 + tθ = {factor} is not positive")));
            }
            psi.push(p * factor);
        }
        let analytic = match (&self.analytic, &theta.analytic) {
            (Some(f), Some(g)) => {
                let (f, g) = (f.clone(), g.clone());
                Some(Arc::new(move |p: Point| f(p) * (1.0 + t * g(p)))
                    as Arc<dyn Fn(Point) -> f64 + Send + Sync>)
            }
            _ => None,
        };
        Ok(Self { psi, analytic })
    }
}

/// A P1 field: one value per vertex.
#[derive(Clone)]
pub struct ScalarField {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
    analytic: Option<Arc<dyn Fn(Point) -> f64 + Send + Sync>>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField").field("values", &self.values.len()).finish()
    }
}

impl ScalarField {
    pub fn new(mesh: &Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.num_vertices() {
            return Err(Error::Usage(format!(
                "field has {} values for {} vertices",
                values.len(),
                mesh.num_vertices()
            )));
        }
        Ok(Self { mesh: mesh.clone(), values, analytic: None })
    }

    pub fn constant(mesh: &Arc<Mesh>, c: f64) -> Self {
        Self::from_fn(mesh, move |_| c)
    }

    pub fn from_fn(mesh: &Arc<Mesh>, f: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        let values = mesh.vertices().iter().map(|&p| f(p)).collect();
        Self { mesh: mesh.clone(), values, analytic: Some(Arc::new(f)) }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Piecewise-linear interpolation; `None` outside the mesh.
    pub fn interpolate(&self, p: Point) -> Option<f64> {
        match self.mesh.locate(p) {
            Location::Inside { triangle, bary } => {
                let [a, b, c] = self.mesh.triangles()[triangle];
                Some(bary[0] * self.values[a] + bary[1] * self.values[b] + bary[2] * self.values[c])
            }
            Location::Outside => None,
        }
    }

    /// Closed form if the field was built from one, otherwise P1 interpolation
    /// (extrapolated from the nearest triangle for points just outside the polygon).
    pub fn eval(&self, p: Point) -> f64 {
        if let Some(f) = &self.analytic {
            return f(p);
        }
        let (t, l) = self.mesh.locate_or_nearest(p);
        let [a, b, c] = self.mesh.triangles()[t];
        l[0] * self.values[a] + l[1] * self.values[b] + l[2] * self.values[c]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn same_mesh(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.mesh, &other.mesh) {
            Ok(())
        } else {
            Err(Error::Usage("fields live on different meshes".into()))
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_mesh(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(Self { mesh: self.mesh.clone(), values, analytic: None })
    }

    /// Writes `vertex_index,value` lines.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "vertex_index,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{i},{v:.16e}")?;
        }
        Ok(())
    }
}

/// Mesh-only data: stiffness matrix, its factorization and Euclidean lumped areas.
pub struct Discretization {
    mesh: Arc<Mesh>,
    stiffness: SparseMatrix,
    factor: Llt<usize, f64>,
    pin: usize,
    lumped_area: Vec<f64>,
}

impl fmt::Debug for Discretization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Discretization")
            .field("vertices", &self.mesh.num_vertices())
            .field("stiffness_nnz", &self.stiffness.nnz())
            .finish()
    }
}

impl Discretization {
    pub fn new(mesh: Arc<Mesh>) -> Result<Arc<Self>> {
        let n = mesh.num_vertices();
        let mut trip = Vec::with_capacity(9 * mesh.num_triangles());
        let mut lumped_area = vec![0.0; n];
        let scale = mesh.h_max() * mesh.h_max();
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let p = mesh.triangle_points(t);
            let area = geom::signed_area(p[0], p[1], p[2]);
            if !(area > 1e-14 * scale) {
                return Err(Error::Assembly(format!("triangle {t} is degenerate (area {area:e})")));
            }
            // ∇φ_i = perp(p_{i+2} − p_{i+1}) / (2A)
            let grads: [Point; 3] = std::array::from_fn(|i| {
                let e = geom::sub(p[(i + 2) % 3], p[(i + 1) % 3]);
                [-e[1] / (2.0 * area), e[0] / (2.0 * area)]
            });
            for i in 0..3 {
                lumped_area[tri[i]] += area / 3.0;
                for j in 0..3 {
                    trip.push((tri[i], tri[j], area * geom::dot(grads[i], grads[j])));
                }
            }
        }
        let stiffness = SparseMatrix::from_triplets(n, trip);
        let diag_mean = (0..n).map(|i| stiffness.get(i, i)).sum::<f64>() / n as f64;
        let pin = 0;
        let mut lower = Vec::with_capacity(stiffness.nnz() / 2 + n);
        for i in 0..n {
            for (j, v) in stiffness.row(i) {
                if j <= i {
                    let v = if i == pin && j == pin { v + diag_mean } else { v };
                    lower.push(Triplet::new(i, j, v));
                }
            }
        }
        let pinned = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &lower)
            .map_err(|e| Error::Assembly(format!("sparse pattern: {e:?}")))?;
        let factor = pinned
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::Numerical(format!("stiffness factorization failed: {e:?}")))?;
        Ok(Arc::new(Self { mesh, stiffness, factor, pin, lumped_area }))
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn stiffness(&self) -> &SparseMatrix {
        &self.stiffness
    }

    /// Euclidean lumped vertex areas `a_i` (one third of the incident triangle areas).
    pub fn lumped_area(&self) -> &[f64] {
        &self.lumped_area
    }

    /// Solves `K u = r` for right-hand sides orthogonal to constants (columns of `rhs`);
    /// the returned columns satisfy `u[pin] = 0`.
    fn solve_orthogonal(&self, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let n = self.mesh.num_vertices();
        let k = rhs.len();
        if k == 0 {
            return Ok(Vec::new());
        }
        let b = Mat::<f64>::from_fn(n, k, |i, j| rhs[j][i]);
        let x = self.factor.solve(&b);
        let mut out: Vec<Vec<f64>> = (0..k).map(|j| (0..n).map(|i| x[(i, j)]).collect()).collect();
        for (u, r) in out.iter_mut().zip(rhs) {
            // One step of iterative refinement keeps the relative residual at roundoff.
            let res: Vec<f64> =
                r.iter().zip(self.stiffness.mul_vec(u)).map(|(ri, ku)| ri - ku).collect();
            let rn = norm2(r).max(f64::MIN_POSITIVE);
            if norm2(&res) > 1e-13 * rn {
                let bm = Mat::<f64>::from_fn(n, 1, |i, _| res[i]);
                let d = self.factor.solve(&bm);
                for i in 0..n {
                    u[i] += d[(i, 0)];
                }
            }
            let shift = u[self.pin];
            u.iter_mut().for_each(|v| *v -= shift);
            // Range(K) ⟂ constants: the roundoff sum of `r` lands in the pinned row.
            let mut res: Vec<f64> =
                r.iter().zip(self.stiffness.mul_vec(u)).map(|(ri, ku)| ri - ku).collect();
            res[self.pin] -= res.iter().sum::<f64>();
            let scale = rn + self.stiffness.max_abs() * norm2(u);
            if !(norm2(&res) <= 1e-10 * scale) {
                return Err(Error::Numerical(format!(
                    "linear solve residual {:.3e} exceeds tolerance",
                    norm2(&res) / scale
                )));
            }
        }
        Ok(out)
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Stiffness (shared), lumped ψ-mass and √ψ boundary mass for one metric.
#[derive(Debug, Clone)]
pub struct OperatorBundle {
    disc: Arc<Discretization>,
    metric: ConformalMetric,
    mass: Vec<f64>,
    boundary_mass: SparseMatrix,
    area: f64,
}

impl OperatorBundle {
    /// Assembles from scratch (factors the stiffness matrix).
    pub fn assemble(mesh: &Arc<Mesh>, metric: ConformalMetric) -> Result<Self> {
        Self::with_discretization(&Discretization::new(mesh.clone())?, metric)
    }

    /// Assembles reusing an existing stiffness factorization.
    pub fn with_discretization(disc: &Arc<Discretization>, metric: ConformalMetric) -> Result<Self> {
        let mesh = disc.mesh();
        if metric.values().len() != mesh.num_vertices() {
            return Err(Error::Usage("metric sampled on a different mesh".into()));
        }
        let psi = metric.values();
        let mass: Vec<f64> = disc.lumped_area.iter().zip(psi).map(|(a, p)| a * p).collect();
        let area = mass.iter().sum();
        let (x, w) = gauss_legendre(3);
        let mut trip = Vec::with_capacity(4 * mesh.boundary_edges().len());
        for (k, e) in mesh.boundary_edges().iter().enumerate() {
            let (t0, t1) = mesh.edge_params(k);
            let (pa, pb) = (psi[e[0]], psi[e[1]]);
            let mut local = [[0.0; 2]; 2];
            for (s, ws) in x.iter().zip(&w) {
                let t = t0 + s * (t1 - t0);
                let phi = [1.0 - s, *s];
                let ds = mesh.curve().speed(t) * (t1 - t0) * ws;
                let root = (phi[0] * pa + phi[1] * pb).sqrt();
                for i in 0..2 {
                    for j in 0..2 {
                        local[i][j] += root * phi[i] * phi[j] * ds;
                    }
                }
            }
            for i in 0..2 {
                for j in 0..2 {
                    trip.push((e[i], e[j], local[i][j]));
                }
            }
        }
        let boundary_mass = SparseMatrix::from_triplets(mesh.num_vertices(), trip);
        Ok(Self { disc: disc.clone(), metric, mass, boundary_mass, area })
    }

    pub fn discretization(&self) -> &Arc<Discretization> {
        &self.disc
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        self.disc.mesh()
    }

    pub fn metric(&self) -> &ConformalMetric {
        &self.metric
    }

    pub fn stiffness(&self) -> &SparseMatrix {
        &self.disc.stiffness
    }

    /// Diagonal of the lumped mass matrix, `m_i = ψ_i a_i`.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn boundary_mass(&self) -> &SparseMatrix {
        &self.boundary_mass
    }

    /// `|Σ|_g`.
    pub fn area(&self) -> f64 {
        self.area
    }

    /// `∫_Σ u dv_g` through the mass matrix.
    pub fn integrate(&self, field: &ScalarField) -> Result<f64> {
        if !Arc::ptr_eq(field.mesh(), self.mesh()) {
            return Err(Error::Usage("field and operator live on different meshes".into()));
        }
        Ok(self.integrate_values(field.values()))
    }

    pub fn integrate_values(&self, u: &[f64]) -> f64 {
        self.mass.iter().zip(u).map(|(m, v)| m * v).sum()
    }

    /// Admissible compatibility defect for a load whose absolute mass is `l1`.
    ///
    /// The relative part covers rounding; the `(h/diam)²` part covers the geometric
    /// mismatch between the polygonal domain and the exact boundary, which makes
    /// analytically compatible data incompatible at order `h²`.
    pub fn compatibility_tolerance(&self, l1: f64) -> f64 {
        let mesh = self.mesh();
        let rel = mesh.h_max() / mesh.diameter();
        (1e-8 + 10.0 * rel * rel) * l1
    }

    /// Solves `−Δ_g u = f`, `∂_{ν_g} u = q`, `∫ u dv_g = target_mean`.
    pub fn solve_neumann(
        &self,
        volume_rhs: &ScalarField,
        boundary_flux: &ScalarField,
        target_mean: f64,
    ) -> Result<ScalarField> {
        for f in [volume_rhs, boundary_flux] {
            if !Arc::ptr_eq(f.mesh(), self.mesh()) {
                return Err(Error::Usage("data and operator live on different meshes".into()));
            }
        }
        if !target_mean.is_finite() {
            return Err(Error::Domain("target mean must be finite".into()));
        }
        let vol: Vec<f64> = self.mass.iter().zip(volume_rhs.values()).map(|(m, f)| m * f).collect();
        let bnd = self.boundary_mass.mul_vec(boundary_flux.values());
        let l1: f64 = vol.iter().chain(&bnd).map(|v| v.abs()).sum();
        let load: Vec<f64> = vol.iter().zip(&bnd).map(|(a, b)| a + b).collect();
        let defect: f64 = load.iter().sum();
        let tolerance = self.compatibility_tolerance(l1);
        if defect.abs() > tolerance {
            return Err(Error::IllPosed { defect: defect.abs(), tolerance });
        }
        let u = self.solve_loads(&[load], &[target_mean])?.pop().unwrap();
        ScalarField::new(self.mesh(), u)
    }

    /// Solves the bordered system for assembled load vectors `b` (without a
    /// compatibility check) and mean targets `c`.
    pub fn solve_loads(&self, loads: &[Vec<f64>], means: &[f64]) -> Result<Vec<Vec<f64>>> {
        assert_eq!(loads.len(), means.len());
        let ones_m = self.area;
        let rhs: Vec<Vec<f64>> = loads
            .iter()
            .map(|b| {
                let lambda = b.iter().sum::<f64>() / ones_m;
                b.iter().zip(&self.mass).map(|(bi, mi)| bi - lambda * mi).collect()
            })
            .collect();
        let mut sols = self.disc.solve_orthogonal(&rhs)?;
        for (u, c) in sols.iter_mut().zip(means) {
            let s = (c - self.integrate_values(u)) / self.area;
            u.iter_mut().for_each(|v| *v += s);
        }
        Ok(sols)
    }
}

/// `∫_Σ field dv_g` without a pre-assembled operator.
pub fn integrate(field: &ScalarField, metric: &ConformalMetric) -> Result<f64> {
    let mesh = field.mesh();
    if metric.values().len() != mesh.num_vertices() {
        return Err(Error::Usage("metric sampled on a different mesh".into()));
    }
    let mut s = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let a = mesh.signed_area(t) / 3.0;
        for &v in tri {
            s += a * metric.values()[v] * field.values()[v];
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::BoundaryCurve;
    use crate::mesh::build_domain;
    use std::f64::consts::PI;

    fn disk(h: f64) -> Arc<Mesh> {
        Arc::new(build_domain(&BoundaryCurve::circle([0.0, 0.0], 1.0), h).unwrap())
    }

    #[test]
    fn mass_and_stiffness_properties() {
        let mesh = disk(0.05);
        let disc = Discretization::new(mesh.clone()).unwrap();
        let b1 = OperatorBundle::with_discretization(&disc, ConformalMetric::flat(&mesh)).unwrap();
        let b4 = OperatorBundle::with_discretization(
            &disc,
            ConformalMetric::uniform(&mesh, 4.0).unwrap(),
        )
        .unwrap();
        assert!((b1.area() - PI).abs() < 0.005 * PI);
        for (m1, m4) in b1.mass().iter().zip(b4.mass()) {
            assert_eq!(4.0 * m1, *m4);
        }
        let k = b1.stiffness();
        let scale = k.max_abs();
        assert!(k.row_sums().iter().all(|s| s.abs() < 1e-12 * scale));
        let x: Vec<f64> = mesh.vertices().iter().map(|p| p[0]).collect();
        let kx = k.mul_vec(&x);
        for v in 0..mesh.num_vertices() {
            if !mesh.is_boundary_vertex(v) {
                assert!(kx[v].abs() < 1e-12 * scale, "row {v}: {}", kx[v]);
            }
        }
    }

    #[test]
    fn trivial_solves() {
        let mesh = disk(0.1);
        let b = OperatorBundle::assemble(&mesh, ConformalMetric::flat(&mesh)).unwrap();
        let zero = ScalarField::constant(&mesh, 0.0);
        let u = b.solve_neumann(&zero, &zero, 0.0).unwrap();
        assert!(u.sup_norm() < 1e-14);
        let u = b.solve_neumann(&zero, &zero, 2.5 * b.area()).unwrap();
        assert!(u.values().iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn incompatible_data_is_rejected() {
        let mesh = disk(0.1);
        let b = OperatorBundle::assemble(&mesh, ConformalMetric::flat(&mesh)).unwrap();
        let one = ScalarField::constant(&mesh, 1.0);
        let zero = ScalarField::constant(&mesh, 0.0);
        assert!(matches!(b.solve_neumann(&one, &zero, 0.0), Err(Error::IllPosed { .. })));
    }

    fn manufactured_errors(mesh: &Arc<Mesh>) -> (f64, f64) {
        let b = OperatorBundle::assemble(mesh, ConformalMetric::flat(mesh)).unwrap();
        let f = ScalarField::constant(mesh, -4.0);
        let q = ScalarField::constant(mesh, 2.0);
        let u = b.solve_neumann(&f, &q, PI / 2.0).unwrap();
        assert!((b.integrate(&u).unwrap() - PI / 2.0).abs() < 1e-10 * PI / 2.0);
        let mut linf: f64 = 0.0;
        let mut l2 = 0.0;
        for (i, p) in mesh.vertices().iter().enumerate() {
            let e = u.values()[i] - geom::dot(*p, *p);
            linf = linf.max(e.abs());
            l2 += b.mass()[i] * e * e;
        }
        (linf, l2.sqrt())
    }

    #[test]
    fn manufactured_solution_converges_at_second_order() {
        let m0 = disk(0.1);
        let m1 = Arc::new(m0.refine().unwrap());
        let m2 = Arc::new(m1.refine().unwrap());
        let (i0, e0) = manufactured_errors(&m0);
        let (i1, e1) = manufactured_errors(&m1);
        let (_, e2) = manufactured_errors(&m2);
        assert!(i0 < 0.05 && i1 < i0 / 2.5, "L∞ {i0} {i1}");
        for r in [e0 / e1, e1 / e2] {
            assert!((3.5..=4.5).contains(&r), "L2 ratio {r} ({e0} {e1} {e2})");
        }
    }

    #[test]
    fn self_adjointness_of_solves() {
        let mesh = disk(0.08);
        let b = OperatorBundle::assemble(&mesh, ConformalMetric::from_fn(&mesh, |p| 1.0 + 0.3 * p[0]).unwrap())
            .unwrap();
        let solve = |f: fn(Point) -> f64| {
            let fv: Vec<f64> = mesh.vertices().iter().map(|&p| f(p)).collect();
            let mut load: Vec<f64> = b.mass().iter().zip(&fv).map(|(m, v)| m * v).collect();
            let mean = load.iter().sum::<f64>() / b.area();
            load.iter_mut().zip(b.mass()).for_each(|(l, m)| *l -= mean * m);
            b.solve_loads(&[load], &[0.0]).unwrap().pop().unwrap()
        };
        let u1 = solve(|p| p[0] * p[1]);
        let u2 = solve(|p| (p[0] + 2.0 * p[1]).exp());
        let k = b.stiffness();
        let a = k.bilinear(&u2, &u1);
        let c = k.bilinear(&u1, &u2);
        assert!((a - c).abs() <= 1e-12 * a.abs().max(c.abs()));
    }

    #[test]
    fn integrate_examples() {
        let mesh = disk(0.05);
        let flat = ConformalMetric::flat(&mesh);
        let one = ScalarField::constant(&mesh, 1.0);
        assert!((integrate(&one, &flat).unwrap() - PI).abs() < 0.005 * PI);
        let x = ScalarField::from_fn(&mesh, |p| p[0]);
        assert!(integrate(&x, &flat).unwrap().abs() < 1e-3);
        let psi = ConformalMetric::from_fn(&mesh, |p| 1.0 + p[0] * p[0]).unwrap();
        let expect = PI + PI / 4.0;
        assert!((integrate(&one, &psi).unwrap() - expect).abs() < 0.01 * expect);
        let other = disk(0.2);
        let b = OperatorBundle::assemble(&other, ConformalMetric::flat(&other)).unwrap();
        assert!(matches!(b.integrate(&one), Err(Error::Usage(_))));
    }

    #[test]
    fn nonpositive_metric_is_rejected() {
        let mesh = disk(0.2);
        assert!(ConformalMetric::from_fn(&mesh, |p| p[0]).is_err());
        let theta = ScalarField::constant(&Arc::new((*mesh).clone()), 1.0);
        let flat = ConformalMetric::flat(&mesh);
        assert!(matches!(flat.perturbed(&theta, -2.0), Err(Error::Domain(_))));
    }
}
