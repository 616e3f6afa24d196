//! Experiment configuration files (TOML with `[domain]`, `[metric]`, `[configuration]`
//! and `[run]` sections).
//!
//! ```toml
//! [domain]
//! shape = "circle"        # circle | ellipse | fourier
//! centre = [0.0, 0.0]
//! radius = 1.0            # circle; ellipse uses semi_axes = [a, b]
//! target_h = 0.02
//!
//! [metric]
//! psi = "1 + 0.3*x"       # or psi_csv = "psi.csv" (vertex_index,value)
//!
//! [configuration]
//! interior = [[0.1, 0.0]]
//! boundary = [1.5]
//! sigmas = [1.0, 1.0]
//! h_potential = "2 + x"   # optional h = Σ c_i log V(x_i)
//! h_coeffs = [0.5, 0.5]
//!
//! [run]
//! seed = 0
//! starts = 8
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::critical::SearchOptions;
use crate::curve::{BoundaryCurve, FourierMode};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fem::ConformalMetric;
use crate::geom::Point;
use crate::green::Domain;
use crate::interaction::{Configuration, LogPotential};
use crate::mesh::{build_domain, Mesh};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub domain: DomainSection,
    #[serde(default)]
    pub metric: MetricSection,
    pub configuration: Option<ConfigurationSection>,
    #[serde(default)]
    pub run: RunSection,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub shape: String,
    #[serde(default)]
    pub centre: Point,
    pub radius: Option<f64>,
    pub semi_axes: Option<[f64; 2]>,
    pub modes: Option<Vec<FourierMode>>,
    pub period: Option<f64>,
    pub target_h: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSection {
    pub psi: Option<String>,
    pub psi_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigurationSection {
    #[serde(default)]
    pub interior: Vec<Point>,
    #[serde(default)]
    pub boundary: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub h_potential: Option<String>,
    pub h_coeffs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    pub starts: usize,
    pub max_iter: usize,
    pub gtol: Option<f64>,
    pub hessian_step: Option<f64>,
    pub dedup_radius: Option<f64>,
    pub guard: Option<f64>,
    /// Source-difference step in units of the diameter.
    pub source_step: Option<f64>,
}

impl Default for RunSection {
    fn default() -> Self {
        let s = SearchOptions::default();
        Self {
            seed: s.seed,
            starts: s.starts,
            max_iter: s.max_iter,
            gtol: None,
            hessian_step: None,
            dedup_radius: None,
            guard: None,
            source_step: None,
        }
    }
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| cfg_err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg_err(format!("cannot read {}: {e}", path.display())))?;
        let mut c = Self::parse(&text)?;
        c.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(c)
    }

    pub fn curve(&self) -> Result<BoundaryCurve> {
        let d = &self.domain;
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() { Ok(v) } else { Err(cfg_err(format!("{what} must be positive"))) }
        };
        match d.shape.as_str() {
            "circle" => {
                let r = d.radius.ok_or_else(|| cfg_err("circle needs radius"))?;
                Ok(BoundaryCurve::circle(d.centre, positive(r, "radius")?))
            }
            "ellipse" => {
                let [a, b] = d.semi_axes.ok_or_else(|| cfg_err("ellipse needs semi_axes"))?;
                Ok(BoundaryCurve::ellipse(d.centre, positive(a, "semi_axes")?, positive(b, "semi_axes")?))
            }
            "fourier" => {
                let modes = d.modes.clone().ok_or_else(|| cfg_err("fourier shape needs modes"))?;
                let period = d.period.unwrap_or(2.0 * std::f64::consts::PI);
                BoundaryCurve::new(modes, period).map_err(|e| cfg_err(e.to_string()))
            }
            s => Err(cfg_err(format!("unknown shape '{s}'"))),
        }
    }

    pub fn mesh(&self) -> Result<Arc<Mesh>> {
        if !(self.domain.target_h > 0.0) {
            return Err(cfg_err("target_h must be positive"));
        }
        Ok(Arc::new(build_domain(&self.curve()?, self.domain.target_h)?))
    }

    pub fn metric(&self, mesh: &Mesh) -> Result<ConformalMetric> {
        match (&self.metric.psi, &self.metric.psi_csv) {
            (Some(_), Some(_)) => Err(cfg_err("give either psi or psi_csv, not both")),
            (None, None) => Ok(ConformalMetric::flat(mesh)),
            (Some(src), None) => {
                let e = Expr::parse(src)?;
                ConformalMetric::from_fn(mesh, move |p| e.eval(p)).map_err(|e| cfg_err(format!("psi: {e}")))
            }
            (None, Some(path)) => {
                let values = read_vertex_csv(&self.base_dir.join(path), mesh.num_vertices())?;
                ConformalMetric::from_values(mesh, values).map_err(|e| cfg_err(format!("psi_csv: {e}")))
            }
        }
    }

    /// The `[configuration]` section as a point of `X`.
    pub fn configuration(&self, domain: &Domain) -> Result<Configuration> {
        let c = self.configuration.as_ref().ok_or_else(|| cfg_err("missing [configuration] section"))?;
        let curve = domain.mesh().curve();
        let boundary: Vec<f64> = c.boundary.iter().map(|&t| curve.wrap(t)).collect();
        let mut cfg = Configuration::new(c.interior.clone(), boundary, c.sigmas.clone())
            .map_err(|e| cfg_err(e.to_string()))?;
        match (&c.h_potential, &c.h_coeffs) {
            (None, None) => {}
            (Some(src), Some(coeffs)) => {
                if coeffs.len() != cfg.m() {
                    return Err(cfg_err(format!("h_coeffs needs {} entries", cfg.m())));
                }
                let v = Expr::parse(src)?;
                let [gx, gy] = v.gradient();
                let f = v.clone();
                let h = LogPotential::new(
                    coeffs.clone(),
                    move |p| f.eval(p),
                    move |p| [gx.eval(p), gy.eval(p)],
                    src.clone(),
                );
                cfg = cfg.with_h_term(Arc::new(h));
            }
            _ => return Err(cfg_err("h_potential and h_coeffs go together")),
        }
        Ok(cfg)
    }

    pub fn search_options(&self) -> SearchOptions {
        let r = &self.run;
        SearchOptions {
            starts: r.starts,
            seed: r.seed,
            max_iter: r.max_iter,
            gtol: r.gtol,
            hessian_step: r.hessian_step,
            dedup_radius: r.dedup_radius,
            guard: r.guard,
        }
    }
}

/// Reads `vertex_index,value` rows covering every vertex exactly once.
pub fn read_vertex_csv(path: &Path, n: usize) -> Result<Vec<f64>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
    let mut values = vec![f64::NAN; n];
    for (k, row) in reader.records().enumerate() {
        let line = k + 2;
        let row = row.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        if row.len() != 2 {
            return Err(Error::Parse { line, msg: "expected vertex_index,value".into() });
        }
        let i: usize = row[0].trim().parse().map_err(|_| Error::Parse { line, msg: "bad vertex index".into() })?;
        let v: f64 = row[1].trim().parse().map_err(|_| Error::Parse { line, msg: "bad value".into() })?;
        if i >= n || !values[i].is_nan() {
            return Err(Error::Parse { line, msg: format!("vertex {i} out of range or repeated") });
        }
        values[i] = v;
    }
    if let Some(i) = values.iter().position(|v| v.is_nan()) {
        return Err(cfg_err(format!("{}: no value for vertex {i}", path.display())));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::ScalarField;

    const DISK: &str = r#"
        [domain]
        shape = "circle"
        radius = 1.0
        target_h = 0.15

        [metric]
        psi = "1 + 0.3*x"

        [configuration]
        interior = [[0.1, 0.2]]
        boundary = [7.0]
        sigmas = [1.0, -1.0]
        h_potential = "2 + x*y"
        h_coeffs = [0.5, 0.25]

        [run]
        seed = 4
    "#;

    #[test]
    fn parses_a_full_file() {
        let c = Config::parse(DISK).unwrap();
        let mesh = c.mesh().unwrap();
        let psi = c.metric(&mesh).unwrap();
        assert!((psi.eval(&mesh, [0.5, 0.0]) - 1.15).abs() < 1e-12);
        let d = Domain::new(mesh).unwrap();
        let cfg = c.configuration(&d).unwrap();
        assert_eq!((cfg.m(), cfg.l()), (2, 1));
        assert!((cfg.boundary[0] - (7.0 - 2.0 * std::f64::consts::PI)).abs() < 1e-14);
        let pts = cfg.points(&d);
        let h = cfg.h_term.value(&pts);
        let expect = 0.5 * (2.0 + pts[0][0] * pts[0][1]).ln() + 0.25 * (2.0 + pts[1][0] * pts[1][1]).ln();
        assert!((h - expect).abs() < 1e-14);
        let o = c.search_options();
        assert_eq!((o.seed, o.starts), (4, 8));
    }

    #[test]
    fn reports_config_errors() {
        for bad in [
            "[domain]\nshape = \"square\"\ntarget_h = 0.1",
            "[domain]\nshape = \"circle\"\ntarget_h = 0.1",
            "[domain]\nshape = \"circle\"\nradius = 1.0\ntarget_h = 0.1\ncolour = 3",
            "not toml",
        ] {
            let r = Config::parse(bad).and_then(|c| c.curve());
            assert!(matches!(r, Err(Error::Config(_))), "{bad}");
        }
        let c = Config::parse("[domain]\nshape = \"circle\"\nradius = 1.0\ntarget_h = 0.2\n[metric]\npsi = \"1 +\"").unwrap();
        let mesh = c.mesh().unwrap();
        assert!(matches!(c.metric(&mesh), Err(Error::Config(_))));
    }

    #[test]
    fn per_vertex_metric_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = Config::parse("[domain]\nshape = \"ellipse\"\nsemi_axes = [1.0, 0.6]\ntarget_h = 0.2\n[metric]\npsi_csv = \"psi.csv\"").unwrap();
        c.base_dir = dir.path().to_path_buf();
        let mesh = c.mesh().unwrap();
        let field = ScalarField::from_fn(&mesh, |p| 2.0 + p[0] * p[1]);
        field.write_csv(std::fs::File::create(dir.path().join("psi.csv")).unwrap()).unwrap();
        let psi = c.metric(&mesh).unwrap();
        assert_eq!(psi.values(), field.values());
        std::fs::write(dir.path().join("psi.csv"), "vertex_index,value\n0,1.0\n").unwrap();
        assert!(c.metric(&mesh).is_err());
    }
}
