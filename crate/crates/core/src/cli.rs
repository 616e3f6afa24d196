//! The `cgreen` command-line front end.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::Config;
use crate::critical::{
    blowup_probe, find_critical, geometric_distances, local_search, resolve_options, CriticalRecord, LocalResult,
    ProbePath,
};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fem::ScalarField;
use crate::geom::{self, Point};
use crate::green::{Domain, GreenSolver, SourcePoint, MIN_CUTOFF_RESOLUTION};
use crate::interaction::{Configuration, ConfigurationRecord, HessianReport, Interaction};
use crate::mesh::{Location, Mesh};
use crate::oracle;
use crate::perturb::{self, GenericityOptions, GenericityOutcome, ThetaSpec};
use crate::report::{write_json, CsvTable, RunHeader};
use crate::validate::{fem_checks, oracle_checks, Check};

/// Exit code for configuration and usage errors.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for numerical failures.
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "cgreen", version, about = "Neumann Green and Robin functions under conformal metrics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RobinLine {
    /// From the curve centre outwards along --angle.
    Radial,
    /// Boundary sources at equally spaced curve parameters.
    Boundary,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PathKind {
    Boundary,
    Collision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Integral,
    Pde,
    Fd,
    Central,
    All,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mesh the domain and print a JSON summary.
    #[command(after_help = "CSV columns:\n  --vertices: index,x,y,boundary_param (empty for interior vertices)\n  --triangles: index,a,b,c")]
    Mesh {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        vertices: Option<PathBuf>,
        #[arg(long)]
        triangles: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Green function G(·, ξ) at every vertex.
    #[command(after_help = "CSV columns: vertex,x,y,G,H,singular\n  G and singular are empty at a vertex coinciding with ξ.")]
    Green {
        #[arg(long)]
        config: PathBuf,
        /// Interior source "x,y".
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true, conflicts_with = "xi_boundary")]
        xi: Option<Point>,
        /// Boundary source by curve parameter.
        #[arg(long, allow_hyphen_values = true)]
        xi_boundary: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Robin function along a line of sources.
    #[command(after_help = "CSV columns:\n  radial: r,x,y,robin,oracle (oracle only for the flat unit disk)\n  boundary: t,x,y,robin")]
    Robin {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "radial")]
        line: RobinLine,
        #[arg(long, default_value_t = 41)]
        samples: usize,
        /// Direction of the radial line in radians.
        #[arg(long, default_value_t = 0.0)]
        angle: f64,
        /// Largest radial sample as a fraction of the distance to the boundary.
        #[arg(long, default_value_t = 0.9)]
        reach: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// f on a grid as the first interior point of [configuration] moves.
    #[command(after_help = "CSV columns: i,j,x,y,f\n  f is empty for cells outside the domain or where f is undefined.")]
    Fmap {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 64)]
        grid: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Multi-start search for critical points of f with Morse classification (JSON).
    Crit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gradient blow-up probe with a power-law fit.
    #[command(after_help = "CSV columns: rho,gradient_norm,probed,fitted\n  probed: |∂_ν f|_g (boundary) or |∇_{x_1} f|_g (collision); fit parameters are in the header.")]
    Blowup {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "boundary")]
        path: PathKind,
        /// Boundary parameter of the approach point.
        #[arg(long, default_value_t = 0.0)]
        t: f64,
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true, default_value = "0,0")]
        midpoint: Point,
        /// Collision direction in radians.
        #[arg(long, default_value_t = 0.0)]
        direction: f64,
        /// Smallest distance; default 4·h_max.
        #[arg(long)]
        rho_min: Option<f64>,
        /// Largest distance; default 0.1·diameter.
        #[arg(long)]
        rho_max: Option<f64>,
        #[arg(long, default_value_t = 12)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Derivative of the regular part with respect to the conformal factor (JSON).
    Dpsih {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true, conflicts_with = "x_boundary")]
        x: Option<Point>,
        #[arg(long)]
        x_boundary: Option<f64>,
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true, conflicts_with = "xi_boundary")]
        xi: Option<Point>,
        #[arg(long)]
        xi_boundary: Option<f64>,
        /// An expression in x, y, or fourier:SEED:AMPLITUDE, or radial:SEED:AMPLITUDE.
        #[arg(long)]
        theta: String,
        #[arg(long, value_enum, default_value = "all")]
        method: Method,
        /// Finite-difference step.
        #[arg(long, default_value_t = 1e-4)]
        t: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Genericity experiment: random conformal perturbations of a degenerate critical point (JSON).
    Generic {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        amplitude: f64,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Draw radially symmetric directions instead of Fourier fields.
        #[arg(long)]
        radial: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Oracle self-verification and manufactured-solution checks.
    Validate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the table as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn parse_point(s: &str) -> std::result::Result<Point, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected \"x,y\", got \"{s}\""));
    }
    let p = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t}: {e}"));
    Ok([p(parts[0])?, p(parts[1])?])
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Usage(_) | Error::Parse { .. } | Error::Io(_) => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

struct Setup {
    config: Config,
    mesh: Arc<Mesh>,
    domain: Arc<Domain>,
    interaction: Interaction,
}

impl Setup {
    fn load(path: &Path) -> Result<Self> {
        let config = Config::load(path)?;
        let mesh = config.mesh()?;
        let metric = config.metric(&mesh)?;
        let domain = Domain::new(mesh.clone())?;
        if domain.cutoff_resolution() < MIN_CUTOFF_RESOLUTION {
            eprintln!(
                "warning: cutoff radius {:.4} is only {:.1} h_max; use target_h <= {:.4} for reliable gradients",
                domain.delta(),
                domain.cutoff_resolution(),
                domain.delta() / (1.2 * MIN_CUTOFF_RESOLUTION)
            );
        }
        let mut interaction = Interaction::new(&domain, metric)?;
        if let Some(s) = config.run.source_step {
            interaction = interaction.with_source_step(s * mesh.diameter());
        }
        Ok(Self { config, mesh, domain, interaction })
    }

    fn header(&self, command: &str, seed: Option<u64>) -> RunHeader {
        RunHeader::new(command, &self.mesh, self.config.domain.target_h, seed)
    }

    fn solver(&self) -> &GreenSolver {
        self.interaction.solver()
    }

    fn source(&self, interior: Option<Point>, boundary: Option<f64>, what: &str) -> Result<SourcePoint> {
        match (interior, boundary) {
            (Some(p), None) => self.domain.interior_source(p).map_err(|e| Error::Usage(format!("--{what}: {e}"))),
            (None, Some(t)) => Ok(self.domain.boundary_source(t)),
            _ => Err(Error::Usage(format!("give exactly one of --{what} or --{what}-boundary"))),
        }
    }

    fn configuration(&self) -> Result<Configuration> {
        self.config.configuration(&self.domain)
    }

    fn is_flat_unit_disk(&self) -> bool {
        let d = &self.config.domain;
        d.shape == "circle"
            && d.radius == Some(1.0)
            && d.centre == [0.0, 0.0]
            && self.config.metric.psi.is_none()
            && self.config.metric.psi_csv.is_none()
    }
}

fn execute(cmd: &Command) -> Result<i32> {
    match cmd {
        Command::Mesh { config, vertices, triangles, out } => cmd_mesh(config, vertices, triangles, out),
        Command::Green { config, xi, xi_boundary, out } => cmd_green(config, *xi, *xi_boundary, out),
        Command::Robin { config, line, samples, angle, reach, out } => {
            cmd_robin(config, *line, *samples, *angle, *reach, out)
        }
        Command::Fmap { config, grid, out } => cmd_fmap(config, *grid, out),
        Command::Crit { config, out } => cmd_crit(config, out),
        Command::Blowup { config, path, t, midpoint, direction, rho_min, rho_max, samples, out } => {
            let s = Setup::load(config)?;
            let path = match path {
                PathKind::Boundary => ProbePath::BoundaryApproach { boundary_param: *t },
                PathKind::Collision => {
                    ProbePath::Collision { midpoint: *midpoint, direction: [direction.cos(), direction.sin()] }
                }
            };
            cmd_blowup(&s, &path, *rho_min, *rho_max, *samples, out)
        }
        Command::Dpsih { config, x, x_boundary, xi, xi_boundary, theta, method, t, out } => {
            let s = Setup::load(config)?;
            let x = s.source(*x, *x_boundary, "x")?;
            let xi = s.source(*xi, *xi_boundary, "xi")?;
            cmd_dpsih(&s, &x, &xi, theta, *method, *t, out)
        }
        Command::Generic { config, amplitude, trials, seed, radial, out } => {
            cmd_generic(config, *amplitude, *trials, *seed, *radial, out)
        }
        Command::Validate { seed, json } => cmd_validate(*seed, json),
    }
}

#[derive(Serialize)]
struct MeshSummary {
    vertices: usize,
    triangles: usize,
    boundary_vertices: usize,
    h_max: f64,
    min_angle_degrees: f64,
    area: f64,
    boundary_length: f64,
    diameter: f64,
}

fn min_angle(mesh: &Mesh) -> f64 {
    let mut best = f64::INFINITY;
    for t in 0..mesh.num_triangles() {
        let p = mesh.triangle_points(t);
        for k in 0..3 {
            let a = geom::sub(p[(k + 1) % 3], p[k]);
            let b = geom::sub(p[(k + 2) % 3], p[k]);
            let c = (geom::dot(a, b) / (geom::norm(a) * geom::norm(b))).clamp(-1.0, 1.0);
            best = best.min(c.acos());
        }
    }
    best.to_degrees()
}

fn cmd_mesh(config: &Path, vertices: &Option<PathBuf>, triangles: &Option<PathBuf>, out: &Option<PathBuf>) -> Result<i32> {
    let c = Config::load(config)?;
    let mesh = c.mesh()?;
    let header = RunHeader::new("mesh", &mesh, c.domain.target_h, None);
    if let Some(p) = vertices {
        let mut t = CsvTable::new(&["index", "x", "y", "boundary_param"]);
        for (i, v) in mesh.vertices().iter().enumerate() {
            t.push(vec![Some(i as f64), Some(v[0]), Some(v[1]), mesh.boundary_param(i)]);
        }
        t.write(BufWriter::new(File::create(p)?), &header)?;
    }
    if let Some(p) = triangles {
        let mut t = CsvTable::new(&["index", "a", "b", "c"]);
        for (i, tri) in mesh.triangles().iter().enumerate() {
            t.push_values(&[i as f64, tri[0] as f64, tri[1] as f64, tri[2] as f64]);
        }
        t.write(BufWriter::new(File::create(p)?), &header)?;
    }
    let summary = MeshSummary {
        vertices: mesh.num_vertices(),
        triangles: mesh.num_triangles(),
        boundary_vertices: mesh.boundary_vertices().count(),
        h_max: mesh.h_max(),
        min_angle_degrees: min_angle(&mesh),
        area: mesh.area(),
        boundary_length: mesh.boundary_length(),
        diameter: mesh.diameter(),
    };
    write_json(output(out)?, &header, &summary)?;
    Ok(0)
}

fn cmd_green(config: &Path, xi: Option<Point>, xi_boundary: Option<f64>, out: &Option<PathBuf>) -> Result<i32> {
    let s = Setup::load(config)?;
    let src = s.source(xi, xi_boundary, "xi")?;
    let b = s.solver().regular_part(&src)?;
    let op = s.solver().operator();
    let mut t = CsvTable::new(&["vertex", "x", "y", "G", "H", "singular"]);
    t.note("source", format!("{},{}", src.position[0], src.position[1]));
    t.note("kappa", src.kappa);
    t.note("delta", src.delta);
    t.note("robin", b.robin()?);
    t.note("mean_integral", b.mean(op));
    t.note("compatibility_defect", b.compatibility_defect());
    for (i, (&p, h)) in s.mesh.vertices().iter().zip(b.regular_part().values()).enumerate() {
        let sing = crate::green::singular_part(&src, p).ok();
        t.push(vec![Some(i as f64), Some(p[0]), Some(p[1]), sing.map(|v| v + h), Some(*h), sing]);
    }
    t.write(output(out)?, &s.header("green", None))?;
    Ok(0)
}

fn cmd_robin(config: &Path, line: RobinLine, samples: usize, angle: f64, reach: f64, out: &Option<PathBuf>) -> Result<i32> {
    let s = Setup::load(config)?;
    if samples < 2 {
        return Err(Error::Usage("--samples must be at least 2".into()));
    }
    let curve = s.mesh.curve();
    let mut t;
    match line {
        RobinLine::Radial => {
            if !(reach > 0.0 && reach < 1.0) {
                return Err(Error::Usage("--reach must lie in (0, 1)".into()));
            }
            let c = [curve.modes[0].x.0, curve.modes[0].y.0];
            let dir = [angle.cos(), angle.sin()];
            let r_edge = exit_distance(&s.mesh, c, dir)?;
            let flat_disk = s.is_flat_unit_disk();
            t = CsvTable::new(&["r", "x", "y", "robin", "oracle"]);
            let pts: Vec<(f64, Point)> = (0..samples)
                .map(|k| {
                    let r = reach * r_edge * k as f64 / (samples - 1) as f64;
                    (r, geom::add(c, geom::scale(dir, r)))
                })
                .collect();
            let sources = pts.iter().map(|&(_, p)| s.domain.interior_source(p)).collect::<Result<Vec<_>>>()?;
            let bundles = s.solver().regular_parts(&sources)?;
            for ((r, p), b) in pts.iter().zip(&bundles) {
                let exact = flat_disk.then(|| oracle::disk_robin_exact(*p));
                t.push(vec![Some(*r), Some(p[0]), Some(p[1]), Some(b.robin()?), exact]);
            }
        }
        RobinLine::Boundary => {
            t = CsvTable::new(&["t", "x", "y", "robin"]);
            let params: Vec<f64> = (0..samples).map(|k| curve.period * k as f64 / samples as f64).collect();
            let sources: Vec<SourcePoint> = params.iter().map(|&p| s.domain.boundary_source(p)).collect();
            let bundles = s.solver().regular_parts(&sources)?;
            for ((tp, src), b) in params.iter().zip(&sources).zip(&bundles) {
                t.push(vec![Some(*tp), Some(src.position[0]), Some(src.position[1]), Some(b.robin()?)]);
            }
        }
    }
    t.write(output(out)?, &s.header("robin", None))?;
    Ok(0)
}

/// Distance from `c` along `dir` to the boundary, by bisection on mesh membership.
fn exit_distance(mesh: &Mesh, c: Point, dir: Point) -> Result<f64> {
    let inside = |r: f64| matches!(mesh.locate(geom::add(c, geom::scale(dir, r))), Location::Inside { .. });
    if !inside(0.0) {
        return Err(Error::Usage("the curve centre is not inside the domain".into()));
    }
    let (mut lo, mut hi) = (0.0, mesh.diameter());
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if inside(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

fn cmd_fmap(config: &Path, grid: usize, out: &Option<PathBuf>) -> Result<i32> {
    let s = Setup::load(config)?;
    let base = s.configuration()?;
    if base.interior.is_empty() {
        return Err(Error::Config("fmap moves the first interior point; [configuration] has none".into()));
    }
    if grid < 2 {
        return Err(Error::Usage("--grid must be at least 2".into()));
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in s.mesh.vertices() {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let mut cells = Vec::with_capacity(grid * grid);
    for j in 0..grid {
        for i in 0..grid {
            let x = lo[0] + (hi[0] - lo[0]) * (i as f64 + 0.5) / grid as f64;
            let y = lo[1] + (hi[1] - lo[1]) * (j as f64 + 0.5) / grid as f64;
            cells.push((i, j, [x, y]));
        }
    }
    let configs: Vec<Option<Configuration>> = cells
        .iter()
        .map(|&(_, _, p)| {
            matches!(s.mesh.locate(p), Location::Inside { .. }).then(|| {
                let mut c = base.clone();
                c.interior[0] = p;
                c
            })
        })
        .collect();
    use rayon::prelude::*;
    let values: Vec<Option<f64>> = configs
        .par_iter()
        .map(|c| c.as_ref().and_then(|c| s.interaction.value(c).ok()))
        .collect();
    let mut t = CsvTable::new(&["i", "j", "x", "y", "f"]);
    t.note("moving_point", "interior[0]");
    for ((i, j, p), v) in cells.iter().zip(values) {
        t.push(vec![Some(*i as f64), Some(*j as f64), Some(p[0]), Some(p[1]), v]);
    }
    t.write(output(out)?, &s.header("fmap", None))?;
    Ok(0)
}

#[derive(Serialize)]
struct CritOutput {
    template: ConfigurationRecord,
    starts: usize,
    converged_starts: usize,
    gradient_scale: f64,
    critical_points: Vec<CriticalRecord>,
}

fn cmd_crit(config: &Path, out: &Option<PathBuf>) -> Result<i32> {
    let s = Setup::load(config)?;
    let template = s.configuration()?;
    let opts = s.config.search_options();
    let report = find_critical(&s.interaction, &template, &opts)?;
    let header = s
        .header("crit", Some(opts.seed))
        .tolerance("gtol", report.gtol)
        .tolerance("hessian_step", report.hessian_step)
        .tolerance("dedup_radius", report.dedup_radius)
        .tolerance("source_step", s.interaction.source_step());
    let result = CritOutput {
        template: template.record(&s.domain),
        starts: opts.starts,
        converged_starts: report.converged,
        gradient_scale: report.gradient_scale,
        critical_points: report.points.iter().map(|p| p.record(&s.interaction)).collect(),
    };
    write_json(output(out)?, &header, &result)?;
    Ok(0)
}

fn cmd_blowup(
    s: &Setup,
    path: &ProbePath,
    rho_min: Option<f64>,
    rho_max: Option<f64>,
    samples: usize,
    out: &Option<PathBuf>,
) -> Result<i32> {
    let sigmas = match &s.config.configuration {
        Some(c) => c.sigmas.clone(),
        None => vec![1.0, 1.0],
    };
    let lo = rho_min.unwrap_or(4.0 * s.mesh.h_max());
    let hi = rho_max.unwrap_or(0.1 * s.mesh.diameter());
    if !(lo > 0.0 && hi > lo) || samples < 4 {
        return Err(Error::Usage("need 0 < rho-min < rho-max and at least 4 samples".into()));
    }
    let table = blowup_probe(&s.interaction, path, &sigmas, &geometric_distances(lo, hi, samples))?;
    let mut t = CsvTable::new(&["rho", "gradient_norm", "probed", "fitted"]);
    t.note("path", serde_json::to_string(path).unwrap_or_default());
    t.note("sigmas", format!("{:?}", table.sigmas));
    t.note("model", "probed ≈ prefactor·rho^exponent + offset + linear·rho");
    t.note("fit_exponent", format!("{:.6}", table.fit.exponent));
    t.note("fit_prefactor", format!("{:.6e}", table.fit.prefactor));
    t.note("fit_offset", format!("{:.6e}", table.fit.offset));
    t.note("fit_linear", format!("{:.6e}", table.fit.linear));
    t.note("fit_rms_relative", format!("{:.3e}", table.fit.rms_rel));
    t.note("truncation_radius", format!("{:.6e}", table.truncation_radius));
    for w in &table.warnings {
        t.note("warning", w);
    }
    for r in &table.rows {
        t.push_values(&[r.rho, r.gradient_norm, r.probed, table.fit.eval(r.rho)]);
    }
    t.write(output(out)?, &s.header("blowup", None))?;
    for w in &table.warnings {
        eprintln!("warning: {w}");
    }
    Ok(0)
}

/// `fourier:SEED:AMPLITUDE`, `radial:SEED:AMPLITUDE`, or an expression in `x, y`.
fn parse_theta(spec: &str, mesh: &Arc<Mesh>) -> Result<(ScalarField, String)> {
    let parts: Vec<&str> = spec.split(':').collect();
    let seeded = |kind: &str| -> Result<(u64, f64)> {
        if parts.len() != 3 {
            return Err(Error::Usage(format!("expected {kind}:SEED:AMPLITUDE")));
        }
        let seed = parts[1].parse().map_err(|_| Error::Usage(format!("bad seed '{}'", parts[1])))?;
        let amp = parts[2].parse().map_err(|_| Error::Usage(format!("bad amplitude '{}'", parts[2])))?;
        Ok((seed, amp))
    };
    let spec_obj = match parts[0] {
        "fourier" => {
            let (seed, amp) = seeded("fourier")?;
            ThetaSpec::random_fourier(mesh, amp, seed)
        }
        "radial" => {
            let (seed, amp) = seeded("radial")?;
            ThetaSpec::random_radial(mesh, amp, seed)
        }
        _ => {
            let e = Expr::parse(spec)?;
            return Ok((ScalarField::from_fn(mesh, move |p| e.eval(p)), spec.to_string()));
        }
    };
    let desc = serde_json::to_string(&spec_obj).unwrap_or_default();
    Ok((spec_obj.field(mesh), desc))
}

#[derive(Serialize)]
struct DpsihOutput {
    x: Point,
    xi: Point,
    theta: String,
    integral: Option<f64>,
    pde: Option<f64>,
    fd: Option<f64>,
    fd_central: Option<f64>,
    fd_step: f64,
}

fn cmd_dpsih(
    s: &Setup,
    x: &SourcePoint,
    xi: &SourcePoint,
    theta: &str,
    method: Method,
    t: f64,
    out: &Option<PathBuf>,
) -> Result<i32> {
    let (theta_field, desc) = parse_theta(theta, &s.mesh)?;
    let solver = s.solver();
    let want = |m: Method| method == m || method == Method::All;
    let integral = want(Method::Integral).then(|| perturb::dpsi_h_integral(solver, x, xi, &theta_field)).transpose()?;
    let pde = want(Method::Pde)
        .then(|| perturb::field_at(&perturb::dpsi_h_pde(solver, xi, &theta_field)?, x.position))
        .transpose()?;
    let fd = want(Method::Fd).then(|| perturb::dpsi_h_fd(solver, x.position, xi, &theta_field, t)).transpose()?;
    let fd_central = want(Method::Central)
        .then(|| perturb::dpsi_h_fd_central(solver, x.position, xi, &theta_field, t))
        .transpose()?;
    let result = DpsihOutput { x: x.position, xi: xi.position, theta: desc, integral, pde, fd, fd_central, fd_step: t };
    write_json(output(out)?, &s.header("dpsih", None), &result)?;
    Ok(0)
}

#[derive(Serialize)]
struct GenericSummary {
    trials: usize,
    tracked: usize,
    migrated: usize,
    grew_tenfold: usize,
    still_degenerate: usize,
    fraction_grew_tenfold: f64,
}

#[derive(Serialize)]
struct GenericOutput {
    start: ConfigurationRecord,
    critical_point: ConfigurationRecord,
    before: HessianReport,
    before_degenerate: bool,
    options: GenericityOptions,
    summary: GenericSummary,
    trials: Vec<GenericityOutcome>,
}

fn cmd_generic(config: &Path, amplitude: f64, trials: usize, seed: u64, radial: bool, out: &Option<PathBuf>) -> Result<i32> {
    let s = Setup::load(config)?;
    if !(0.0..1.0).contains(&amplitude) {
        return Err(Error::Usage("--amplitude must lie in [0, 1)".into()));
    }
    let start = s.configuration()?;
    let opts = s.config.search_options();
    let (gtol, _, hessian_step, _, _) = resolve_options(&s.interaction, &start, &opts)?;
    let cfg = match local_search(&s.interaction, &start, gtol, opts.max_iter)? {
        LocalResult::Converged(c, _, _) => c,
        LocalResult::Stalled(..) => {
            return Err(Error::Numerical("no critical point near the [configuration] start".into()))
        }
    };
    let before = s.interaction.hessian(&cfg, hessian_step)?;
    if !before.degenerate {
        eprintln!("warning: the critical point is not flagged degenerate");
    }
    let gopts = GenericityOptions { amplitude, radial, hessian_step, gtol, max_iter: opts.max_iter };
    let outcomes = perturb::genericity_trials(&s.interaction, &cfg, &before, seed, trials, &gopts)?;
    let grew = outcomes.iter().filter(|o| o.growth >= 10.0).count();
    let summary = GenericSummary {
        trials,
        tracked: outcomes.iter().filter(|o| !o.migrated).count(),
        migrated: outcomes.iter().filter(|o| o.migrated).count(),
        grew_tenfold: grew,
        still_degenerate: outcomes.iter().filter(|o| o.after.as_ref().is_some_and(|a| a.degenerate)).count(),
        fraction_grew_tenfold: if trials > 0 { grew as f64 / trials as f64 } else { 0.0 },
    };
    let header = s
        .header("generic", Some(seed))
        .tolerance("gtol", gtol)
        .tolerance("hessian_step", hessian_step)
        .tolerance("amplitude", amplitude);
    let result = GenericOutput {
        start: start.record(&s.domain),
        critical_point: cfg.record(&s.domain),
        before_degenerate: before.degenerate,
        before,
        options: gopts,
        summary,
        trials: outcomes,
    };
    write_json(output(out)?, &header, &result)?;
    Ok(0)
}

fn cmd_validate(seed: u64, json: &Option<PathBuf>) -> Result<i32> {
    let mut checks: Vec<Check> = oracle_checks(seed);
    checks.extend(fem_checks()?);
    let width = checks.iter().map(|c| c.name.chars().count()).max().unwrap_or(0);
    let mut out = io::stdout().lock();
    for c in &checks {
        let pad = width - c.name.chars().count();
        writeln!(
            out,
            "{}  {}{}  {:>12.4e}  {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            " ".repeat(pad),
            c.value,
            c.tolerance
        )?;
    }
    if let Some(p) = json {
        #[derive(Serialize)]
        struct Table<'a> {
            schema_version: u32,
            seed: u64,
            checks: &'a [Check],
        }
        let t = Table { schema_version: crate::report::SCHEMA_VERSION, seed, checks: &checks };
        let mut w = BufWriter::new(File::create(p)?);
        serde_json::to_writer_pretty(&mut w, &t).map_err(|e| Error::Io(e.into()))?;
        writeln!(w)?;
    }
    Ok(if checks.iter().all(|c| c.passed) { 0 } else { EXIT_NUMERICAL })
}
