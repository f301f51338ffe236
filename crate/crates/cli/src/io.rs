//! CSV artifacts and plain-text key-value records.
//!
//! Numbers are written in Rust's shortest round-trip form, so identical runs
//! produce identical bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chemoscale::compare::ComparisonRecord;
use chemoscale::euler::EulerState;
use chemoscale::grid::{PhaseDensity, PhaseGrid, ScalarField, SpatialGrid};
use chemoscale::particles::ParticleState;

use crate::error::{CliError, Result};

/// Node positions read back from a file must match the grid to this distance.
const POSITION_TOL: f64 = 1e-9;

struct Table {
    writer: csv::Writer<BufWriter<File>>,
    path: std::path::PathBuf,
}

impl Table {
    fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut table = Self {
            writer: csv::Writer::from_writer(BufWriter::new(file)),
            path: path.to_path_buf(),
        };
        table.row_str(header)?;
        Ok(table)
    }

    fn row_str(&mut self, fields: &[&str]) -> Result<()> {
        self.writer.write_record(fields).map_err(|e| CliError::csv(&self.path, e))
    }

    fn row(&mut self, fields: &[f64]) -> Result<()> {
        let fields: Vec<String> = fields.iter().map(|v| v.to_string()).collect();
        self.writer.write_record(&fields).map_err(|e| CliError::csv(&self.path, e))
    }

    fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

/// `x,value`.
pub fn write_field(path: &Path, field: &ScalarField) -> Result<()> {
    let mut t = Table::create(path, &["x", "value"])?;
    for (x, v) in field.grid().nodes().zip(field.values()) {
        t.row(&[x, *v])?;
    }
    t.finish()
}

/// `v,value` for a function of velocity.
pub fn write_velocity_profile(path: &Path, grid: &SpatialGrid, values: &[f64]) -> Result<()> {
    let mut t = Table::create(path, &["v", "value"])?;
    for (v, f) in grid.nodes().zip(values) {
        t.row(&[v, *f])?;
    }
    t.finish()
}

/// `x,v,value`, x-major.
pub fn write_phase(path: &Path, rho: &PhaseDensity) -> Result<()> {
    let grid = rho.grid();
    let mut t = Table::create(path, &["x", "v", "value"])?;
    for (i, x) in grid.x.nodes().enumerate() {
        for (j, v) in grid.v.nodes().enumerate() {
            t.row(&[x, v, rho.get(i, j)])?;
        }
    }
    t.finish()
}

/// `x,nu0,nu1`.
pub fn write_moments(path: &Path, nu0: &ScalarField, nu1: &ScalarField) -> Result<()> {
    let mut t = Table::create(path, &["x", "nu0", "nu1"])?;
    for ((x, a), b) in nu0.grid().nodes().zip(nu0.values()).zip(nu1.values()) {
        t.row(&[x, *a, *b])?;
    }
    t.finish()
}

/// `x,mu,Q,psi`.
pub fn write_hydro(path: &Path, mu: &ScalarField, q: &ScalarField, psi: &ScalarField) -> Result<()> {
    let mut t = Table::create(path, &["x", "mu", "Q", "psi"])?;
    let rows = mu.grid().nodes().zip(mu.values()).zip(q.values()).zip(psi.values());
    for (((x, m), q), p) in rows {
        t.row(&[x, *m, *q, *p])?;
    }
    t.finish()
}

/// `t,i,x,v`, one row per particle per snapshot.
pub fn write_trajectory(path: &Path, snapshots: &[ParticleState]) -> Result<()> {
    let mut t = Table::create(path, &["t", "i", "x", "v"])?;
    for s in snapshots {
        for (i, (x, v)) in s.x.iter().zip(&s.v).enumerate() {
            t.row(&[s.t, i as f64, *x, *v])?;
        }
    }
    t.finish()
}

/// `t,epsilon,E0,E1`.
pub fn write_comparison(path: &Path, records: &[ComparisonRecord]) -> Result<()> {
    let mut t = Table::create(path, &["t", "epsilon", "E0", "E1"])?;
    for r in records {
        t.row(&[r.t, r.epsilon, r.e0, r.e1])?;
    }
    t.finish()
}

/// `probe_epsilon,objective`, in evaluation order.
pub fn write_probes(path: &Path, probes: &[(f64, f64)]) -> Result<()> {
    let mut t = Table::create(path, &["probe_epsilon", "objective"])?;
    for &(e, f) in probes {
        t.row(&[e, f])?;
    }
    t.finish()
}

/// Arbitrary numeric table with the given header.
pub fn write_rows(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut t = Table::create(path, header)?;
    for r in rows {
        t.row(r)?;
    }
    t.finish()
}

/// `key = value` lines.
pub fn write_record(path: &Path, entries: &[(String, String)]) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (k, v) in entries {
        writeln!(w, "{k} = {v}").map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn read_table(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::csv(path, e))?;
    let found: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::csv(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if found != header {
        return Err(CliError::csv(
            path,
            format!("expected header `{}`, found `{}`", header.join(","), found.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::csv(path, e))?;
        let row = record
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| CliError::csv(path, format!("row {}: {e}", line + 1)))?;
        rows.push(row);
    }
    Ok(rows)
}

fn check_position(path: &Path, row: usize, what: &str, found: f64, expected: f64) -> Result<()> {
    if (found - expected).abs() > POSITION_TOL {
        return Err(CliError::csv(
            path,
            format!("row {row}: {what} = {found} but the grid node is {expected}"),
        ));
    }
    Ok(())
}

/// Reads `x,v,value` rows in x-major order onto `grid`.
pub fn read_phase(path: &Path, grid: PhaseGrid) -> Result<PhaseDensity> {
    let rows = read_table(path, &["x", "v", "value"])?;
    if rows.len() != grid.len() {
        return Err(CliError::csv(
            path,
            format!("{} rows for a grid of {} nodes", rows.len(), grid.len()),
        ));
    }
    let nv = grid.nv();
    let mut values = Vec::with_capacity(rows.len());
    for (k, row) in rows.iter().enumerate() {
        check_position(path, k + 1, "x", row[0], grid.x.x(k / nv))?;
        check_position(path, k + 1, "v", row[1], grid.v.x(k % nv))?;
        values.push(row[2]);
    }
    Ok(PhaseDensity::new(grid, values)?)
}

/// Reads `x,mu,Q` rows onto `grid`.
pub fn read_hydro(path: &Path, grid: SpatialGrid) -> Result<EulerState> {
    let rows = read_table(path, &["x", "mu", "Q"])?;
    if rows.len() != grid.len() {
        return Err(CliError::csv(
            path,
            format!("{} rows for a grid of {} nodes", rows.len(), grid.len()),
        ));
    }
    let mut mu = Vec::with_capacity(rows.len());
    let mut q = Vec::with_capacity(rows.len());
    for (k, row) in rows.iter().enumerate() {
        check_position(path, k + 1, "x", row[0], grid.x(k))?;
        mu.push(row[1]);
        q.push(row[2]);
    }
    Ok(EulerState::new(
        ScalarField::new(grid, mu)?,
        ScalarField::new(grid, q)?,
        0.0,
    )?)
}
