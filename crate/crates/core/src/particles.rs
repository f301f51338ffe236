//! Microscopic Cucker-Smale system with chemotactic forcing, integrated with
//! an implicit-velocity Euler step:
//!
//! ```text
//! v_i' = v_i + dt/N sum_j w_ij (v_j' - v_i') + eta dt g_i
//! x_i' = x_i + dt v_i'
//! ```
//!
//! with `w_ij` the communication weight at the old positions and `g_i` the
//! chemoattractant gradient interpolated at `x_i`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chemotaxis::{chemo_gradient, chemo_step, source_from_particles, ChemoParams, ChemoState};
use crate::error::{Error, Result};
use crate::grid::{interpolate_at, PhaseDensity, SpatialGrid};
use crate::kernel::{cs_weight, AlignmentKernel};
use crate::time::StepSchedule;

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub t: f64,
}

impl ParticleState {
    pub fn new(x: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if x.is_empty() || x.len() != v.len() {
            return Err(Error::InvalidParameter {
                name: "particles",
                reason: format!("need N >= 1 positions and velocities, got {} and {}", x.len(), v.len()),
            });
        }
        if x.iter().chain(&v).any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "particles",
                reason: "non-finite coordinate".into(),
            });
        }
        Ok(Self { x, v, t: 0.0 })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

pub fn mean_velocity(state: &ParticleState) -> f64 {
    state.v.iter().sum::<f64>() / state.v.len() as f64
}

/// Population variance of the velocities.
pub fn velocity_variance(state: &ParticleState) -> f64 {
    let m = mean_velocity(state);
    state.v.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / state.v.len() as f64
}

/// One implicit step; `kernel = None` switches alignment off.
pub fn particle_step(
    state: &ParticleState,
    kernel: Option<&AlignmentKernel>,
    chemo: &ChemoState,
    params: &ChemoParams,
    dt: f64,
) -> Result<ParticleState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter {
            name: "dt",
            reason: format!("must be positive, got {dt}"),
        });
    }
    let n = state.len();
    let mut rhs = DVector::from_column_slice(&state.v);
    if params.is_coupled() {
        let grad = chemo_gradient(chemo);
        for (r, &x) in rhs.iter_mut().zip(&state.x) {
            *r += params.eta * dt * interpolate_at(&grad, x)?;
        }
    }

    let v_next: Vec<f64> = match kernel {
        Some(k) if n > 1 => {
            let scale = dt / n as f64;
            let mut a = DMatrix::<f64>::identity(n, n);
            for i in 0..n {
                let mut diag = 0.0;
                for j in 0..n {
                    if i != j {
                        let w = cs_weight(k, state.x[i] - state.x[j]) * scale;
                        a[(i, j)] = -w;
                        diag += w;
                    }
                }
                a[(i, i)] += diag;
            }
            let lu = a.lu();
            lu.solve(&rhs)
                .ok_or_else(|| Error::Singular("implicit velocity system".into()))?
                .iter()
                .copied()
                .collect()
        }
        _ => rhs.iter().copied().collect(),
    };

    let x_next = state
        .x
        .iter()
        .zip(&v_next)
        .map(|(x, v)| x + dt * v)
        .collect();
    Ok(ParticleState {
        x: x_next,
        v: v_next,
        t: state.t + dt,
    })
}

#[derive(Debug, Clone)]
pub struct ParticleRunConfig {
    pub kernel: Option<AlignmentKernel>,
    pub chemo: ChemoParams,
    pub chemo_grid: SpatialGrid,
    /// Weight the production term by `1/N`.
    pub normalize_source: bool,
    pub dt: f64,
    pub t_final: f64,
    pub snapshot_times: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ParticleTrajectory {
    pub snapshots: Vec<ParticleState>,
    pub final_chemo: ChemoState,
}

/// Alternates the implicit particle step (driven by the current chemical
/// field) with a chemo step whose source pair is built from the old and new
/// positions.
pub fn particle_run(state0: &ParticleState, cfg: &ParticleRunConfig) -> Result<ParticleTrajectory> {
    let schedule = StepSchedule::new(cfg.dt, cfg.t_final, &cfg.snapshot_times)?;
    let mut state = state0.clone();
    let mut chemo = ChemoState::zero(cfg.chemo_grid, cfg.chemo.kappa);
    let mut snapshots = Vec::new();
    let source = |x: &[f64]| {
        source_from_particles(x, &cfg.chemo_grid, cfg.chemo.radius, cfg.normalize_source)
    };
    let mut src_k = source(&state.x);
    if schedule.is_snapshot(0) {
        snapshots.push(state.clone());
    }
    for k in 1..=schedule.steps() {
        let mut next = particle_step(&state, cfg.kernel.as_ref(), &chemo, &cfg.chemo, cfg.dt)?;
        next.t = schedule.time(k);
        let src_k1 = source(&next.x);
        chemo = chemo_step(&chemo, &src_k, &src_k1, cfg.dt, &cfg.chemo)?;
        src_k = src_k1;
        state = next;
        if schedule.is_snapshot(k) {
            snapshots.push(state.clone());
        }
    }
    Ok(ParticleTrajectory {
        snapshots,
        final_chemo: chemo,
    })
}

/// Draws `n` particles from a phase density by inverse-CDF sampling over the
/// cells, jittered uniformly inside the chosen cell.
pub fn sample_particles(rho: &PhaseDensity, n: usize, seed: u64) -> Result<ParticleState> {
    let grid = rho.grid();
    let mut cdf = Vec::with_capacity(rho.values().len());
    let mut acc = 0.0;
    for &v in rho.values() {
        acc += v;
        cdf.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::InvalidParameter {
            name: "density",
            reason: "cannot sample from a density with zero mass".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nv = grid.nv();
    let (dx, dv) = (grid.dx(), grid.dv());
    let mut xs = Vec::with_capacity(n);
    let mut vs = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random::<f64>() * acc;
        let cell = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        let (i, j) = (cell / nv, cell % nv);
        let jx: f64 = rng.random::<f64>() - 0.5;
        let jv: f64 = rng.random::<f64>() - 0.5;
        let v = (grid.v.x(j) + jv * dv).clamp(grid.v.x_min(), grid.v.x_max());
        xs.push(grid.x.x(i) + jx * dx);
        vs.push(v);
    }
    ParticleState::new(xs, vs)
}
