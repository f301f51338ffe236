//! Kinetic level: `d_t rho + v d_x rho + d_v(a rho) = 0` on a periodic-in-x,
//! bounded-in-v phase grid, advanced with the first-order flux-split upwind
//! scheme
//!
//! ```text
//! rho' = rho - dt/(2dx) v (rho_{i+1} - rho_{i-1}) + dt/(2dx) |v| (rho_{i+1} - 2 rho_i + rho_{i-1})
//!            - dt/(2dv) ((a rho)_{j+1} - (a rho)_{j-1}) + dt/(2dv) (|a| rho_{j+1} - 2 |a| rho_j + |a| rho_{j-1})
//! ```
//!
//! The acceleration is
//! `a(x, v) = int (w - v) K(x - y) rho(y, w) dy dw + eta psi_x(x) - alpha v`,
//! which factorizes as `A(x) - v B(x) + eta psi_x - alpha v` with
//! `A = K * nu1`, `B = K * nu0`. Velocity ghost values are zero, so mass that
//! reaches the velocity boundary with outward acceleration leaves the domain
//! and is accounted for as boundary loss.

use rayon::prelude::*;

use crate::chemotaxis::{chemo_gradient, chemo_step, source_from_density, ChemoParams, ChemoState};
use crate::error::{Error, Result};
use crate::grid::{PhaseDensity, PhaseGrid, ScalarField, NEG_TOL};
use crate::kernel::{AlignmentKernel, KernelTable};
use crate::time::StepSchedule;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VlasovParams {
    /// `None` drops the alignment term.
    pub kernel: Option<AlignmentKernel>,
    pub chemo: ChemoParams,
    /// Damping rate.
    pub alpha: f64,
}

impl VlasovParams {
    pub fn new(kernel: Option<AlignmentKernel>, chemo: ChemoParams, alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                reason: format!("must be nonnegative, got {alpha}"),
            });
        }
        Ok(Self {
            kernel,
            chemo,
            alpha,
        })
    }
}

/// `nu0_i = dv sum_j rho_ij`.
pub fn moment0(rho: &PhaseDensity) -> ScalarField {
    moments(rho).0
}

/// `nu1_i = dv sum_j v_j rho_ij`.
pub fn moment1(rho: &PhaseDensity) -> ScalarField {
    moments(rho).1
}

fn moments(rho: &PhaseDensity) -> (ScalarField, ScalarField) {
    let grid = rho.grid();
    let dv = grid.dv();
    let vs: Vec<f64> = grid.v.nodes().collect();
    let (m0, m1): (Vec<f64>, Vec<f64>) = (0..grid.nx())
        .map(|i| {
            let (s0, s1) = row_moments(rho.row(i), &vs);
            (s0 * dv, s1 * dv)
        })
        .unzip();
    (
        ScalarField::new(grid.x, m0).expect("one value per x node"),
        ScalarField::new(grid.x, m1).expect("one value per x node"),
    )
}

/// `(sum_j r_j, sum_j v_j r_j)` with four-way split accumulators.
fn row_moments(row: &[f64], vs: &[f64]) -> (f64, f64) {
    let mut s0 = [0.0; 4];
    let mut s1 = [0.0; 4];
    let rc = row.chunks_exact(4);
    let vc = vs.chunks_exact(4);
    let (rr, vr) = (rc.remainder(), vc.remainder());
    for (r, v) in rc.zip(vc) {
        for k in 0..4 {
            s0[k] += r[k];
            s1[k] += r[k] * v[k];
        }
    }
    let mut t0 = (s0[0] + s0[1]) + (s0[2] + s0[3]);
    let mut t1 = (s1[0] + s1[1]) + (s1[2] + s1[3]);
    for (r, v) in rr.iter().zip(vr) {
        t0 += r;
        t1 += r * v;
    }
    (t0, t1)
}

/// Root-mean-square deviation of `v` from the local mean velocity, weighted
/// by `rho` and normalized by the total mass.
pub fn velocity_spread(rho: &PhaseDensity) -> f64 {
    let grid = rho.grid();
    let nu0 = moment0(rho);
    let nu1 = moment1(rho);
    let vs: Vec<f64> = grid.v.nodes().collect();
    let mut acc = 0.0;
    for i in 0..grid.nx() {
        let n0 = nu0.values()[i];
        if n0 <= 0.0 {
            continue;
        }
        let mean = nu1.values()[i] / n0;
        acc += rho
            .row(i)
            .iter()
            .zip(&vs)
            .map(|(r, v)| r * (v - mean) * (v - mean))
            .sum::<f64>();
    }
    let mass = rho.mass();
    if mass <= 0.0 {
        return 0.0;
    }
    (acc * grid.dx() * grid.dv() / mass).sqrt()
}

/// `A = dx K * nu1`, `B = dx K * nu0` using a precomputed kernel table.
fn alignment_with_table(rho: &PhaseDensity, table: &KernelTable) -> (ScalarField, ScalarField) {
    let (nu0, nu1) = moments(rho);
    alignment_from_moments(&nu0, &nu1, table)
}

fn alignment_from_moments(nu0: &ScalarField, nu1: &ScalarField, table: &KernelTable) -> (ScalarField, ScalarField) {
    let grid = *nu0.grid();
    let dx = grid.dx();
    let a: Vec<f64> = table.convolve(nu1.values()).iter().map(|v| v * dx).collect();
    let b: Vec<f64> = table.convolve(nu0.values()).iter().map(|v| v * dx).collect();
    (
        ScalarField::new(grid, a).expect("x grid"),
        ScalarField::new(grid, b).expect("x grid"),
    )
}

/// Moment-factorized alignment field: the alignment acceleration at `(i, j)`
/// is `A_i - v_j B_i`.
pub fn alignment_field(rho: &PhaseDensity, kernel: &AlignmentKernel) -> (ScalarField, ScalarField) {
    let grid = rho.grid();
    let table = KernelTable::new(kernel, grid.nx(), grid.dx());
    alignment_with_table(rho, &table)
}

/// Frozen acceleration for one step:
/// `a_ij = A_i - v_j B_i + chemo_force_i - alpha v_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct AccelField {
    pub grid: PhaseGrid,
    pub a: ScalarField,
    pub b: ScalarField,
    /// `eta d_x psi` at the x nodes.
    pub chemo_force: ScalarField,
    pub alpha: f64,
}

impl AccelField {
    pub fn zero(grid: PhaseGrid) -> Self {
        Self {
            grid,
            a: ScalarField::zeros(grid.x),
            b: ScalarField::zeros(grid.x),
            chemo_force: ScalarField::zeros(grid.x),
            alpha: 0.0,
        }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        let v = self.grid.v.x(j);
        self.a.values()[i] - v * (self.b.values()[i] + self.alpha) + self.chemo_force.values()[i]
    }

    /// `max_ij |a_ij|`; `a` is affine in `v`, so the extremes sit at the
    /// velocity end points.
    pub fn max_abs(&self) -> f64 {
        let last = self.grid.nv() - 1;
        (0..self.grid.nx())
            .map(|i| self.at(i, 0).abs().max(self.at(i, last).abs()))
            .fold(0.0, f64::max)
    }
}

/// Builds [`AccelField`]s, reusing the kernel table across steps.
#[derive(Debug, Clone)]
pub struct AccelBuilder {
    params: VlasovParams,
    table: Option<KernelTable>,
}

impl AccelBuilder {
    pub fn new(grid: &PhaseGrid, params: VlasovParams) -> Self {
        let table = params
            .kernel
            .map(|k| KernelTable::new(&k, grid.nx(), grid.dx()));
        Self { params, table }
    }

    pub fn build(&self, rho: &PhaseDensity, psi: &ChemoState) -> Result<AccelField> {
        let (nu0, nu1) = moments(rho);
        self.build_from_moments(*rho.grid(), &nu0, &nu1, psi)
    }

    fn build_from_moments(
        &self,
        grid: PhaseGrid,
        nu0: &ScalarField,
        nu1: &ScalarField,
        psi: &ChemoState,
    ) -> Result<AccelField> {
        if !psi.grid().matches(&grid.x) {
            return Err(Error::GridMismatch("chemo grid differs from phase x grid".into()));
        }
        let (a, b) = match &self.table {
            Some(table) => alignment_from_moments(nu0, nu1, table),
            None => (ScalarField::zeros(grid.x), ScalarField::zeros(grid.x)),
        };
        let eta = self.params.chemo.eta;
        let chemo_force = if eta != 0.0 {
            chemo_gradient(psi).map(|g| eta * g)
        } else {
            ScalarField::zeros(grid.x)
        };
        Ok(AccelField {
            grid,
            a,
            b,
            chemo_force,
            alpha: self.params.alpha,
        })
    }
}

pub fn build_accel(rho: &PhaseDensity, psi: &ChemoState, params: &VlasovParams) -> Result<AccelField> {
    AccelBuilder::new(rho.grid(), *params).build(rho, psi)
}

/// `1 / (|v|_max / dx + max|a| / dv)`; infinite when nothing moves.
pub fn cfl_max_dt(grid: &PhaseGrid, accel: &AccelField) -> f64 {
    let rate = grid.v_abs_max() / grid.dx() + accel.max_abs() / grid.dv();
    if rate > 0.0 {
        1.0 / rate
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone)]
pub struct VlasovStep {
    pub rho: PhaseDensity,
    /// Mass that left through the velocity boundary during the step.
    pub boundary_outflow: f64,
}

/// One explicit upwind step with a frozen acceleration.
pub fn vlasov_step(rho: &PhaseDensity, accel: &AccelField, dt: f64) -> Result<VlasovStep> {
    let grid = *rho.grid();
    let mut out = vec![0.0; grid.len()];
    let mut nu0 = vec![0.0; grid.nx()];
    let mut nu1 = vec![0.0; grid.nx()];
    let boundary_outflow = upwind_into(rho, accel, dt, &mut out, &mut nu0, &mut nu1)?;
    Ok(VlasovStep {
        rho: PhaseDensity::from_raw(grid, out),
        boundary_outflow,
    })
}

/// One upwind step of `rho` written into `out`, with the moments of the
/// result in `nu0`, `nu1`. Returns the mass that left through the velocity
/// boundary.
/// Densities below this are vacuum.
const VACUUM: f64 = 1e-200;

fn upwind_into(
    rho: &PhaseDensity,
    accel: &AccelField,
    dt: f64,
    out: &mut [f64],
    nu0: &mut [f64],
    nu1: &mut [f64],
) -> Result<f64> {
    let grid = *rho.grid();
    if accel.grid != grid {
        return Err(Error::GridMismatch("acceleration and density grids differ".into()));
    }
    let dt_max = cfl_max_dt(&grid, accel);
    if !(dt > 0.0) || dt > dt_max * (1.0 + 1e-12) {
        return Err(Error::CflViolation { dt, dt_max });
    }
    let nx = grid.nx();
    let nv = grid.nv();
    let cx = dt / grid.dx();
    let cv = dt / grid.dv();
    let dv = grid.dv();
    let vs: Vec<f64> = grid.v.nodes().collect();
    let vs = &vs[..nv];
    // Nodes below `j_pos` move left and take the forward x difference.
    let j_pos = vs.partition_point(|v| *v < 0.0);
    let old = rho.values();

    let (outflow, worst) = out
        .par_chunks_mut(nv)
        .zip(nu0.par_iter_mut().zip(nu1.par_iter_mut()))
        .enumerate()
        .map_init(
            || vec![0.0; nv + 1],
            |faces, (i, (out, (n0, n1)))| {
                let here = &old[i * nv..][..nv];
                let left = &old[((i + nx - 1) % nx) * nv..][..nv];
                let right = &old[((i + 1) % nx) * nv..][..nv];
                let out = &mut out[..nv];
                let faces = &mut faces[..nv + 1];
                // a_ij = c0 - v_j c1
                let c0 = accel.a.values()[i] + accel.chemo_force.values()[i];
                let c1 = accel.b.values()[i] + accel.alpha;
                // faces[j] is the upwind flux through the face below node j;
                // the ghosts outside the velocity range are zero.
                faces[0] = (c0 - vs[0] * c1).min(0.0) * here[0];
                faces[nv] = (c0 - vs[nv - 1] * c1).max(0.0) * here[nv - 1];
                let inner = faces[1..nv]
                    .iter_mut()
                    .zip(here[..nv - 1].iter().zip(&here[1..]))
                    .zip(vs[..nv - 1].iter().zip(&vs[1..]));
                for ((f, (&hb, &ha)), (&vb, &va)) in inner {
                    *f = (c0 - vb * c1).max(0.0) * hb + (c0 - va * c1).min(0.0) * ha;
                }
                let (lo_faces, hi_faces) = (&faces[..nv], &faces[1..]);
                let (out_neg, out_pos) = out.split_at_mut(j_pos);
                let neg = out_neg
                    .iter_mut()
                    .zip(here[..j_pos].iter().zip(&right[..j_pos]))
                    .zip(vs[..j_pos].iter().zip(lo_faces[..j_pos].iter().zip(&hi_faces[..j_pos])));
                for ((o, (&h, &r)), (&v, (&fl, &fh))) in neg {
                    *o = h - cx * v * (r - h) - cv * (fh - fl);
                }
                let pos = out_pos
                    .iter_mut()
                    .zip(here[j_pos..].iter().zip(&left[j_pos..]))
                    .zip(vs[j_pos..].iter().zip(lo_faces[j_pos..].iter().zip(&hi_faces[j_pos..])));
                for ((o, (&h, &l)), (&v, (&fl, &fh))) in pos {
                    *o = h - cx * v * (h - l) - cv * (fh - fl);
                }
                // The upwind tails decay geometrically; flushing them before
                // they turn subnormal keeps the far field at full speed.
                for o in out.iter_mut() {
                    if o.abs() < VACUUM {
                        *o = 0.0;
                    }
                }
                let lowest = out.iter().fold(f64::INFINITY, |m, &v| m.min(v));
                let (s0, s1) = row_moments(out, vs);
                let mut worst = None;
                if !s0.is_finite() {
                    let j = out.iter().position(|v| !v.is_finite()).unwrap_or(0);
                    worst = Some((out[j], i * nv + j));
                } else if lowest < 0.0 {
                    if lowest < -NEG_TOL {
                        let j = out.iter().position(|&v| v == lowest).unwrap_or(0);
                        worst = Some((lowest, i * nv + j));
                    }
                    out.iter_mut().for_each(|v| *v = v.max(0.0));
                }
                let (s0, s1) = if lowest < 0.0 { row_moments(out, vs) } else { (s0, s1) };
                *n0 = s0 * dv;
                *n1 = s1 * dv;
                (faces[nv] - faces[0], worst)
            },
        )
        .reduce(
            || (0.0, None),
            |(fa, wa), (fb, wb)| (fa + fb, wa.or(wb)),
        );
    if let Some((value, node)) = worst {
        return Err(Error::NegativeDensity {
            value,
            node,
            tol: NEG_TOL,
        });
    }
    Ok(outflow * dt * grid.dx())
}

#[derive(Debug, Clone)]
pub struct VlasovRunConfig {
    pub dt: f64,
    pub t_final: f64,
    pub snapshot_times: Vec<f64>,
    /// Store the full phase density in snapshots, not only the moments.
    pub keep_phase: bool,
    /// Largest tolerated velocity-boundary loss, relative to the initial mass.
    pub max_boundary_loss: f64,
}

impl VlasovRunConfig {
    pub fn new(dt: f64, t_final: f64, snapshot_times: Vec<f64>) -> Self {
        Self {
            dt,
            t_final,
            snapshot_times,
            keep_phase: false,
            max_boundary_loss: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VlasovSnapshot {
    pub t: f64,
    pub nu0: ScalarField,
    pub nu1: ScalarField,
    /// Recovered chemoattractant concentration.
    pub psi: ScalarField,
    pub mass: f64,
    pub rho: Option<PhaseDensity>,
}

#[derive(Debug, Clone)]
pub struct VlasovTrajectory {
    pub snapshots: Vec<VlasovSnapshot>,
    pub final_rho: PhaseDensity,
    pub final_chemo: ChemoState,
    /// Cumulative mass lost through the velocity boundary.
    pub boundary_loss: f64,
    /// Upwind steps actually taken; exceeds the macro step count when the
    /// CFL bound forced subcycling.
    pub substeps: usize,
}

impl VlasovTrajectory {
    pub fn snapshot_at(&self, t: f64) -> Option<&VlasovSnapshot> {
        self.snapshots
            .iter()
            .find(|s| (s.t - t).abs() <= 1e-9 * t.abs().max(1.0))
    }
}

fn snapshot(t: f64, rho: &PhaseDensity, chemo: &ChemoState, keep_phase: bool) -> VlasovSnapshot {
    VlasovSnapshot {
        t,
        nu0: moment0(rho),
        nu1: moment1(rho),
        psi: chemo.phi(),
        mass: rho.mass(),
        rho: keep_phase.then(|| rho.clone()),
    }
}

/// Runs the coupled kinetic-chemotaxis system from a null chemical field.
///
/// Each macro step of length `dt` rebuilds the acceleration from the current
/// density and `psi^k`; if `dt` exceeds the CFL bound the macro step is split
/// into equal substeps, each with a freshly built acceleration. The chemical
/// field then advances by `dt` with the window masses of `nu0^k` and
/// `nu0^{k+1}` as its source pair.
pub fn vlasov_run(rho0: &PhaseDensity, params: &VlasovParams, cfg: &VlasovRunConfig) -> Result<VlasovTrajectory> {
    let schedule = StepSchedule::new(cfg.dt, cfg.t_final, &cfg.snapshot_times)?;
    let grid = *rho0.grid();
    let builder = AccelBuilder::new(&grid, *params);
    let mut rho = rho0.clone();
    let mut chemo = ChemoState::zero(grid.x, params.chemo.kappa);
    let mass0 = rho.mass();
    let loss_limit = cfg.max_boundary_loss * mass0;
    let mut boundary_loss = 0.0;
    let mut substeps = 0;
    let mut snapshots = Vec::new();
    let radius = params.chemo.radius;
    let (mut nu0, mut nu1) = moments(&rho);
    let mut src_k = source_from_density(&nu0, radius);
    let mut buffer = vec![0.0; grid.len()];
    let mut next0 = vec![0.0; grid.nx()];
    let mut next1 = vec![0.0; grid.nx()];
    if schedule.is_snapshot(0) {
        snapshots.push(snapshot(0.0, &rho, &chemo, cfg.keep_phase));
    }

    for k in 1..=schedule.steps() {
        let mut remaining = cfg.dt;
        while remaining > 0.0 {
            let accel = builder.build_from_moments(grid, &nu0, &nu1, &chemo)?;
            let dt_max = cfl_max_dt(&grid, &accel);
            let h = if remaining <= dt_max {
                remaining
            } else {
                remaining / (remaining / dt_max).ceil()
            };
            boundary_loss += upwind_into(&rho, &accel, h, &mut buffer, &mut next0, &mut next1)?;
            rho.swap_values(&mut buffer);
            nu0.values_mut().copy_from_slice(&next0);
            nu1.values_mut().copy_from_slice(&next1);
            substeps += 1;
            remaining = if h == remaining { 0.0 } else { remaining - h };
            if remaining < 1e-15 * cfg.dt {
                remaining = 0.0;
            }
        }
        if boundary_loss > loss_limit {
            return Err(Error::VelocityBoundaryLoss {
                lost: boundary_loss,
                limit: loss_limit,
                time: schedule.time(k),
            });
        }
        let src_k1 = source_from_density(&nu0, radius);
        chemo = chemo_step(&chemo, &src_k, &src_k1, cfg.dt, &params.chemo)?;
        src_k = src_k1;
        if schedule.is_snapshot(k) {
            snapshots.push(snapshot(schedule.time(k), &rho, &chemo, cfg.keep_phase));
        }
    }
    Ok(VlasovTrajectory {
        snapshots,
        final_rho: rho,
        final_chemo: chemo,
        boundary_loss,
        substeps,
    })
}
