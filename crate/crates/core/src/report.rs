//! JSON and CSV report writers. Output is deterministic: no timestamps, fixed float
//! formatting and ordered maps.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh::Mesh;

pub const SCHEMA_VERSION: u32 = 1;

/// Run metadata written at the top of every report.
#[derive(Debug, Clone, Serialize)]
pub struct RunHeader {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub target_h: f64,
    pub h_max: f64,
    pub vertices: usize,
    pub triangles: usize,
    pub tolerances: BTreeMap<String, f64>,
}

impl RunHeader {
    pub fn new(command: &str, mesh: &Mesh, target_h: f64, seed: Option<u64>) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            target_h,
            h_max: mesh.h_max(),
            vertices: mesh.num_vertices(),
            triangles: mesh.num_triangles(),
            tolerances: BTreeMap::new(),
        }
    }

    pub fn tolerance(mut self, name: &str, value: f64) -> Self {
        self.tolerances.insert(name.into(), value);
        self
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    header: &'a RunHeader,
    result: &'a T,
}

pub fn write_json<W: Write, T: Serialize>(mut w: W, header: &RunHeader, result: &T) -> Result<()> {
    let env = Envelope { schema_version: SCHEMA_VERSION, header, result };
    serde_json::to_writer_pretty(&mut w, &env).map_err(|e| Error::Io(e.into()))?;
    writeln!(w)?;
    Ok(())
}

/// A numeric table; `None` cells are written empty (masked).
#[derive(Debug, Clone)]
pub struct CsvTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
    /// Extra `# key: value` lines after the run header.
    pub notes: Vec<(String, String)>,
}

impl CsvTable {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new(), notes: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Option<f64>>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn push_values(&mut self, row: &[f64]) {
        self.push(row.iter().map(|v| Some(*v)).collect());
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.notes.push((key.into(), value.to_string()));
    }

    pub fn write<W: Write>(&self, mut w: W, header: &RunHeader) -> Result<()> {
        writeln!(w, "# schema_version: {SCHEMA_VERSION}")?;
        writeln!(w, "# command: {} {}", header.command, header.version)?;
        match header.seed {
            Some(s) => writeln!(w, "# seed: {s}")?,
            None => writeln!(w, "# seed: none")?,
        }
        writeln!(w, "# target_h: {}", header.target_h)?;
        writeln!(w, "# h_max: {:.12e}", header.h_max)?;
        writeln!(w, "# mesh: {} vertices, {} triangles", header.vertices, header.triangles)?;
        for (k, v) in &header.tolerances {
            writeln!(w, "# tolerance {k}: {v:.6e}")?;
        }
        for (k, v) in &self.notes {
            writeln!(w, "# {k}: {v}")?;
        }
        writeln!(w, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Some(v) if v.fract() == 0.0 && v.abs() < 1e15 => format!("{v:.0}"),
                    Some(v) => format!("{v:.12e}"),
                    None => String::new(),
                })
                .collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}
