//! Hydrodynamic level: density/momentum system with nonlocal alignment,
//! chemotaxis, damping and an optional isentropic pressure `eps mu^p`,
//! advanced with a two-speed BGK relaxation scheme.
//!
//! One step: Maxwellians `f1,2 = (W +- A(W)/lambda)/2` are transported
//! upwind at speeds `+-lambda`, recombined, and the momentum source is added
//! with the alignment and chemotaxis terms explicit and damping implicit.
//! End nodes hold `W = 0`.

use rayon::prelude::*;

use crate::chemotaxis::{chemo_gradient, chemo_step, source_from_density, ChemoParams, ChemoState};
use crate::error::{Error, Result};
use crate::grid::{ScalarField, SpatialGrid, NEG_TOL};
use crate::kernel::{AlignmentKernel, KernelTable};

/// Below this density the velocity `Q/mu` is taken as zero.
pub const MU_FLOOR: f64 = 1e-12;
/// Lower bound on the relaxation speed, so that rest states keep a finite step.
pub const LAMBDA_MIN: f64 = 1e-8;
const CFL: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerParams {
    pub kernel: Option<AlignmentKernel>,
    pub chemo: ChemoParams,
    pub alpha: f64,
    /// Pressure coefficient.
    pub epsilon: f64,
    /// Adiabatic exponent.
    pub p: f64,
}

impl EulerParams {
    pub fn new(
        kernel: Option<AlignmentKernel>,
        chemo: ChemoParams,
        alpha: f64,
        epsilon: f64,
        p: f64,
    ) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                reason: format!("must be nonnegative, got {alpha}"),
            });
        }
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                reason: format!("must be nonnegative, got {epsilon}"),
            });
        }
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "p",
                reason: format!("must exceed 1, got {p}"),
            });
        }
        Ok(Self {
            kernel,
            chemo,
            alpha,
            epsilon,
            p,
        })
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(self.kernel, self.chemo, self.alpha, epsilon, self.p)
    }
}

/// Chemical field grid for a hydrodynamic grid: periodic over the same node
/// array, so node `i` of both grids sits at the same position.
pub fn chemo_grid_for(grid: &SpatialGrid) -> Result<SpatialGrid> {
    if grid.is_periodic() {
        return Ok(*grid);
    }
    SpatialGrid::periodic(grid.x_min(), grid.x_max() + grid.dx(), grid.n_x() + 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EulerState {
    pub mu: ScalarField,
    pub q: ScalarField,
    pub t: f64,
}

impl EulerState {
    /// Enforces the boundary zeros and rejects negative densities.
    pub fn new(mu: ScalarField, q: ScalarField, t: f64) -> Result<Self> {
        if mu.grid().is_periodic() {
            return Err(Error::InvalidGrid("hydrodynamic grid must be bounded".into()));
        }
        if !mu.grid().matches(q.grid()) {
            return Err(Error::GridMismatch("density and momentum grids differ".into()));
        }
        let mut state = Self { mu, q, t };
        clean_density(state.mu.values_mut(), t)?;
        state.zero_boundary();
        Ok(state)
    }

    pub fn zeros(grid: SpatialGrid) -> Result<Self> {
        Self::new(ScalarField::zeros(grid), ScalarField::zeros(grid), 0.0)
    }

    /// From density and velocity profiles.
    pub fn from_fns(grid: SpatialGrid, mu: impl Fn(f64) -> f64, u: impl Fn(f64) -> f64) -> Result<Self> {
        let q = ScalarField::from_fn(grid, |x| mu(x) * u(x));
        Self::new(ScalarField::from_fn(grid, mu), q, 0.0)
    }

    pub fn grid(&self) -> &SpatialGrid {
        self.mu.grid()
    }

    pub fn len(&self) -> usize {
        self.mu.values().len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `Q_i / mu_i`, zero in vacuum.
    pub fn velocity(&self, i: usize) -> f64 {
        let m = self.mu.values()[i];
        if m > MU_FLOOR {
            self.q.values()[i] / m
        } else {
            0.0
        }
    }

    pub fn velocities(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.velocity(i)).collect()
    }

    /// `max |u|` over non-vacuum nodes.
    pub fn max_abs_velocity(&self) -> f64 {
        (0..self.len()).map(|i| self.velocity(i).abs()).fold(0.0, f64::max)
    }

    pub fn max_density(&self) -> f64 {
        self.mu.values().iter().copied().fold(0.0, f64::max)
    }

    pub fn mass(&self) -> f64 {
        self.mu.integral()
    }

    pub fn momentum(&self) -> f64 {
        self.q.integral()
    }

    fn zero_boundary(&mut self) {
        let last = self.len() - 1;
        for f in [&mut self.mu, &mut self.q] {
            f.values_mut()[0] = 0.0;
            f.values_mut()[last] = 0.0;
        }
    }
}

fn clean_density(mu: &mut [f64], t: f64) -> Result<()> {
    for (i, m) in mu.iter_mut().enumerate() {
        if m.is_nan() || *m <= -NEG_TOL {
            return Err(Error::BlowUp {
                time: t,
                max_mu: *m,
                reason: format!("invalid density {m:e} at node {i}"),
            });
        }
        if *m < 0.0 {
            *m = 0.0;
        }
    }
    Ok(())
}

/// Pressure flux contribution `eps mu^p`.
pub fn pressure(mu: f64, params: &EulerParams) -> Result<f64> {
    if mu.is_nan() || mu <= -NEG_TOL {
        return Err(Error::InvalidParameter {
            name: "mu",
            reason: format!("density must be nonnegative, got {mu}"),
        });
    }
    if params.epsilon == 0.0 {
        return Ok(0.0);
    }
    Ok(params.epsilon * mu.max(0.0).powf(params.p))
}

/// `max_i |u_i| + sqrt(eps p mu_i^(p-1))`, floored at [`LAMBDA_MIN`].
pub fn max_wave_speed(state: &EulerState, params: &EulerParams) -> f64 {
    let mu = state.mu.values();
    let mut lambda = LAMBDA_MIN;
    for (i, &m) in mu.iter().enumerate() {
        if m > MU_FLOOR {
            let sound = if params.epsilon > 0.0 {
                (params.epsilon * params.p * m.powf(params.p - 1.0)).sqrt()
            } else {
                0.0
            };
            let speed = state.velocity(i).abs() + sound;
            // NaN propagates so the caller can flag it.
            if !(speed <= lambda) {
                lambda = speed;
            }
        }
    }
    lambda
}

/// `I_i = dx sum_m (u_m - u_i) K(x_i - x_m) mu_m`, evaluated directly.
pub fn alignment_integral(state: &EulerState, kernel: &AlignmentKernel) -> ScalarField {
    let grid = *state.grid();
    let table = KernelTable::new(kernel, grid.len(), grid.dx());
    alignment_integral_direct(state, &table)
}

fn alignment_integral_direct(state: &EulerState, table: &KernelTable) -> ScalarField {
    let grid = *state.grid();
    let dx = grid.dx();
    let mu = state.mu.values();
    let u = state.velocities();
    let values = (0..mu.len())
        .into_par_iter()
        .map(|i| {
            let mut s = 0.0;
            for m in 0..mu.len() {
                s += (u[m] - u[i]) * table.at(i.abs_diff(m)) * mu[m];
            }
            s * dx
        })
        .collect();
    ScalarField::new(grid, values).expect("grid length")
}

/// Same sum through the factorization `dx ((K * (u mu))_i - u_i (K * mu)_i)`.
fn alignment_integral_factored(state: &EulerState, table: &KernelTable) -> ScalarField {
    let grid = *state.grid();
    let dx = grid.dx();
    let mu = state.mu.values();
    let u = state.velocities();
    let flux: Vec<f64> = u.iter().zip(mu).map(|(u, m)| u * m).collect();
    let kq = table.convolve(&flux);
    let km = table.convolve(mu);
    let values = (0..mu.len()).map(|i| dx * (kq[i] - u[i] * km[i])).collect();
    ScalarField::new(grid, values).expect("grid length")
}

/// Per-run workspace: the kernel table is built once.
#[derive(Debug, Clone)]
pub struct EulerStepper {
    params: EulerParams,
    table: Option<KernelTable>,
}

impl EulerStepper {
    pub fn new(grid: &SpatialGrid, params: EulerParams) -> Self {
        let table = params.kernel.map(|k| KernelTable::new(&k, grid.len(), grid.dx()));
        Self { params, table }
    }

    pub fn params(&self) -> &EulerParams {
        &self.params
    }

    /// One relaxation step of length `min(dt_cap, 0.9 dx / lambda)`.
    pub fn step(&self, state: &EulerState, psi: &ChemoState, dt_cap: f64) -> Result<(EulerState, f64)> {
        let params = &self.params;
        let grid = *state.grid();
        let n = state.len();
        if psi.grid().len() != n {
            return Err(Error::GridMismatch("chemo field and hydrodynamic grid differ".into()));
        }
        if !(dt_cap > 0.0) {
            return Err(Error::InvalidParameter {
                name: "dt_cap",
                reason: format!("must be positive, got {dt_cap}"),
            });
        }
        let dx = grid.dx();
        let lambda = max_wave_speed(state, params);
        if !lambda.is_finite() {
            return Err(Error::BlowUp {
                time: state.t,
                max_mu: state.max_density(),
                reason: "non-finite wave speed".into(),
            });
        }
        let dt = dt_cap.min(CFL * dx / lambda);
        let mu = state.mu.values();
        // Momentum in vacuum is dropped along with its velocity.
        let q: Vec<f64> = mu
            .iter()
            .zip(state.q.values())
            .map(|(&m, &q)| if m > MU_FLOOR { q } else { 0.0 })
            .collect();

        // Maxwellian streams, density and momentum components.
        let mut f1 = vec![(0.0, 0.0); n];
        let mut f2 = vec![(0.0, 0.0); n];
        for i in 0..n {
            let m = mu[i];
            let a1 = if m > MU_FLOOR {
                q[i] * q[i] / m + pressure(m, params)?
            } else {
                pressure(m, params)?
            };
            f1[i] = (0.5 * (m + q[i] / lambda), 0.5 * (q[i] + a1 / lambda));
            f2[i] = (0.5 * (m - q[i] / lambda), 0.5 * (q[i] - a1 / lambda));
        }

        let c = dt * lambda / dx;
        let mut mu_new = vec![0.0; n];
        let mut q_star = vec![0.0; n];
        for i in 1..n - 1 {
            let g1 = (f1[i].0 - c * (f1[i].0 - f1[i - 1].0), f1[i].1 - c * (f1[i].1 - f1[i - 1].1));
            let g2 = (f2[i].0 + c * (f2[i + 1].0 - f2[i].0), f2[i].1 + c * (f2[i + 1].1 - f2[i].1));
            mu_new[i] = g1.0 + g2.0;
            q_star[i] = g1.1 + g2.1;
        }

        let align = match &self.table {
            Some(table) => Some(alignment_integral_factored(state, table)),
            None => None,
        };
        let eta = params.chemo.eta;
        let grad = (eta != 0.0).then(|| chemo_gradient(psi));
        let damp = 1.0 + params.alpha * dt;
        let mut q_new = vec![0.0; n];
        for i in 1..n - 1 {
            let mut src = 0.0;
            if let Some(a) = &align {
                src += mu[i] * a.values()[i];
            }
            if let Some(g) = &grad {
                src += eta * mu[i] * g.values()[i];
            }
            q_new[i] = (q_star[i] + dt * src) / damp;
        }

        let t = state.t + dt;
        if mu_new.iter().chain(&q_new).any(|v| !v.is_finite()) {
            return Err(Error::BlowUp {
                time: t,
                max_mu: state.max_density(),
                reason: "non-finite field".into(),
            });
        }
        clean_density(&mut mu_new, t)?;
        let next = EulerState {
            mu: ScalarField::new(grid, mu_new)?,
            q: ScalarField::new(grid, q_new)?,
            t,
        };
        Ok((next, dt))
    }
}

pub fn euler_step(state: &EulerState, psi: &ChemoState, params: &EulerParams, dt_cap: f64) -> Result<(EulerState, f64)> {
    EulerStepper::new(state.grid(), *params).step(state, psi, dt_cap)
}

#[derive(Debug, Clone)]
pub struct EulerRunConfig {
    /// Largest step; the CFL rule may pick a smaller one.
    pub dt_cap: f64,
    pub t_final: f64,
    pub snapshot_times: Vec<f64>,
    /// Blow-up is declared when `max mu` exceeds this multiple of its initial value.
    pub blowup_factor: f64,
}

impl EulerRunConfig {
    pub fn new(dt_cap: f64, t_final: f64, snapshot_times: Vec<f64>) -> Self {
        Self {
            dt_cap,
            t_final,
            snapshot_times,
            blowup_factor: 1e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EulerSnapshot {
    pub t: f64,
    pub mu: ScalarField,
    pub q: ScalarField,
    pub psi: ScalarField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlowUpReport {
    pub time: f64,
    pub max_mu: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EulerOutcome {
    Completed,
    BlowUp(BlowUpReport),
}

#[derive(Debug, Clone)]
pub struct EulerTrajectory {
    pub snapshots: Vec<EulerSnapshot>,
    pub final_state: EulerState,
    pub outcome: EulerOutcome,
    pub steps: usize,
}

impl EulerTrajectory {
    pub fn snapshot_at(&self, t: f64) -> Option<&EulerSnapshot> {
        self.snapshots
            .iter()
            .find(|s| (s.t - t).abs() <= 1e-9 * t.abs().max(1.0))
    }

    pub fn blew_up(&self) -> bool {
        matches!(self.outcome, EulerOutcome::BlowUp(_))
    }
}

fn snapshot(state: &EulerState, chemo: &ChemoState) -> Result<EulerSnapshot> {
    Ok(EulerSnapshot {
        t: state.t,
        mu: state.mu.clone(),
        q: state.q.clone(),
        psi: ScalarField::new(*state.grid(), chemo.phi().into_values())?,
    })
}

/// Runs the coupled hydrodynamic-chemotaxis system from a null chemical
/// field. Steps follow the CFL rule but are shortened to land exactly on each
/// requested snapshot time and on `t_final`. A blow-up ends the run early and
/// is reported in the outcome rather than as an error.
pub fn euler_run(state0: &EulerState, params: &EulerParams, cfg: &EulerRunConfig) -> Result<EulerTrajectory> {
    if !(cfg.t_final > 0.0) {
        return Err(Error::InvalidParameter {
            name: "t_final",
            reason: format!("must be positive, got {}", cfg.t_final),
        });
    }
    let mut targets: Vec<f64> = Vec::with_capacity(cfg.snapshot_times.len());
    for &s in &cfg.snapshot_times {
        if !(0.0..=cfg.t_final).contains(&s) {
            return Err(Error::InvalidParameter {
                name: "snapshot_times",
                reason: format!("{s} outside [0, {}]", cfg.t_final),
            });
        }
        targets.push(s);
    }
    targets.sort_by(f64::total_cmp);
    targets.dedup();

    let grid = *state0.grid();
    let cgrid = chemo_grid_for(&grid)?;
    let stepper = EulerStepper::new(&grid, *params);
    let radius = params.chemo.radius;
    let source = |s: &EulerState| -> Result<ScalarField> {
        let mu = ScalarField::new(cgrid, s.mu.values().to_vec())?;
        Ok(source_from_density(&mu, radius))
    };
    let mut state = state0.clone();
    let mut chemo = ChemoState::zero(cgrid, params.chemo.kappa);
    let limit = cfg.blowup_factor * state0.max_density();
    let mut snapshots = Vec::new();
    let mut pending = targets.iter().copied().peekable();
    let time_tol = 1e-12 * cfg.t_final.max(1.0);
    while let Some(&s) = pending.peek() {
        if s > state.t + time_tol {
            break;
        }
        snapshots.push(snapshot(&state, &chemo)?);
        pending.next();
    }

    let mut src_k = source(&state)?;
    let mut steps = 0;
    let mut outcome = EulerOutcome::Completed;
    while state.t < cfg.t_final - time_tol {
        let next_stop = pending.peek().copied().unwrap_or(cfg.t_final).min(cfg.t_final);
        let cap = cfg.dt_cap.min(next_stop - state.t);
        let (mut next, dt) = match stepper.step(&state, &chemo, cap) {
            Ok(r) => r,
            Err(Error::BlowUp { time, max_mu, reason }) => {
                outcome = EulerOutcome::BlowUp(BlowUpReport { time, max_mu, reason });
                break;
            }
            Err(e) => return Err(e),
        };
        if (next.t - next_stop).abs() <= time_tol {
            next.t = next_stop;
        }
        steps += 1;
        let src_k1 = source(&next)?;
        chemo = chemo_step(&chemo, &src_k, &src_k1, dt, &params.chemo)?;
        src_k = src_k1;
        state = next;
        let max_mu = state.max_density();
        if max_mu > limit {
            outcome = EulerOutcome::BlowUp(BlowUpReport {
                time: state.t,
                max_mu,
                reason: format!("density exceeded {:e}", limit),
            });
            break;
        }
        while let Some(&s) = pending.peek() {
            if s > state.t + time_tol {
                break;
            }
            snapshots.push(snapshot(&state, &chemo)?);
            pending.next();
        }
    }
    Ok(EulerTrajectory {
        snapshots,
        final_state: state,
        outcome,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::cs_weight;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid(n: usize) -> SpatialGrid {
        SpatialGrid::bounded(-1.0, 1.0, n).unwrap()
    }

    fn off(epsilon: f64) -> EulerParams {
        EulerParams::new(None, ChemoParams::off(), 0.0, epsilon, 2.0).unwrap()
    }

    fn null_chemo(g: &SpatialGrid) -> ChemoState {
        ChemoState::zero(chemo_grid_for(g).unwrap(), 0.0)
    }

    #[test]
    fn pressure_examples() {
        assert_eq!(pressure(3.0, &off(0.0)).unwrap(), 0.0);
        assert_abs_diff_eq!(pressure(2.0, &off(0.01)).unwrap(), 0.04, epsilon = 1e-15);
        assert_eq!(pressure(0.0, &off(1.0)).unwrap(), 0.0);
        assert!(pressure(-1e-6, &off(1.0)).is_err());
    }

    #[test]
    fn wave_speed_examples() {
        let g = SpatialGrid::bounded(0.0, 1.0, 3).unwrap();
        let rest = EulerState::new(
            ScalarField::new(g, vec![0.0, 1.0, 1.0, 0.0]).unwrap(),
            ScalarField::zeros(g),
            0.0,
        )
        .unwrap();
        assert_eq!(max_wave_speed(&rest, &off(0.0)), LAMBDA_MIN);

        let one = EulerState::new(
            ScalarField::new(g, vec![0.0, 1.0, 0.0, 0.0]).unwrap(),
            ScalarField::new(g, vec![0.0, 0.5, 0.0, 0.0]).unwrap(),
            0.0,
        )
        .unwrap();
        assert_abs_diff_eq!(max_wave_speed(&one, &off(0.01)), 0.5 + 0.02f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(max_wave_speed(&one, &off(0.01)), 0.64142, epsilon = 1e-5);

        let two = EulerState::new(
            ScalarField::new(g, vec![0.0, 1.0, 4.0, 0.0]).unwrap(),
            ScalarField::new(g, vec![0.0, 0.2, -2.0, 0.0]).unwrap(),
            0.0,
        )
        .unwrap();
        assert_abs_diff_eq!(max_wave_speed(&two, &off(0.01)), 0.78284, epsilon = 1e-5);
    }

    fn random_state(n: usize, seed: u64) -> EulerState {
        // Small LCG keeps the test free of extra dependencies.
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        let g = grid(n);
        let mu: Vec<f64> = (0..=n).map(|_| next() * 2.0).collect();
        let q: Vec<f64> = (0..=n).map(|_| next() * 2.0 - 1.0).collect();
        EulerState::new(ScalarField::new(g, mu).unwrap(), ScalarField::new(g, q).unwrap(), 0.0).unwrap()
    }

    #[test]
    fn alignment_constant_velocity_vanishes() {
        let g = grid(30);
        let s = EulerState::from_fns(g, |x| 1.0 + 0.5 * x, |_| 0.7).unwrap();
        let k = AlignmentKernel::with_beta(0.5).unwrap();
        // Boundary nodes are vacuum and carry u = 0, so check only their
        // neighbours' contributions vanish among interior nodes.
        let interior = EulerState::new(s.mu.clone(), s.q.clone(), 0.0).unwrap();
        let i = alignment_integral(&interior, &k);
        for v in &i.values()[1..30] {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn alignment_point_mass() {
        let g = grid(20);
        let m0 = 7;
        let mut mu = vec![0.0; 21];
        let mut q = vec![0.0; 21];
        mu[m0] = 3.0;
        q[m0] = 3.0 * 0.4;
        for i in [4, 12, 15] {
            mu[i] = 1e-14; // below the floor: counts as vacuum
        }
        let s = EulerState::new(ScalarField::new(g, mu).unwrap(), ScalarField::new(g, q).unwrap(), 0.0).unwrap();
        let k = AlignmentKernel::new(0.8, 0.5).unwrap();
        let i = alignment_integral(&s, &k);
        for node in [3, 10, 18] {
            let expect = g.dx() * 0.4 * cs_weight(&k, g.x(node) - g.x(m0)) * 3.0;
            assert_abs_diff_eq!(i.values()[node], expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn alignment_matches_naive_loop() {
        let s = random_state(40, 7);
        let k = AlignmentKernel::with_beta(0.3).unwrap();
        let fast = alignment_integral(&s, &k);
        let table = KernelTable::new(&k, 41, s.grid().dx());
        let factored = alignment_integral_factored(&s, &table);
        let g = s.grid();
        for i in 0..41 {
            let mut naive = 0.0;
            for m in 0..41 {
                let w = (1.0 + (g.x(i) - g.x(m)).powi(2)).powf(-0.3);
                naive += (s.velocity(m) - s.velocity(i)) * w * s.mu.values()[m];
            }
            naive *= g.dx();
            assert_abs_diff_eq!(fast.values()[i], naive, epsilon = 1e-13);
            assert_abs_diff_eq!(factored.values()[i], naive, epsilon = 1e-13);
        }
    }

    #[test]
    fn factored_alignment_agrees_on_fft_sized_grid() {
        let s = random_state(900, 3);
        let k = AlignmentKernel::with_beta(0.5).unwrap();
        let table = KernelTable::new(&k, 901, s.grid().dx());
        let a = alignment_integral_direct(&s, &table);
        let b = alignment_integral_factored(&s, &table);
        for (x, y) in a.values().iter().zip(b.values()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-11);
        }
    }

    #[test]
    fn alignment_is_momentum_neutral() {
        let s = random_state(60, 11);
        let k = AlignmentKernel::with_beta(0.5).unwrap();
        let i = alignment_integral(&s, &k);
        let total: f64 = i.values().iter().zip(s.mu.values()).map(|(a, m)| a * m).sum::<f64>() * s.grid().dx();
        assert!(total.abs() < 1e-10, "{total}");
    }

    #[test]
    fn vacuum_is_fixed() {
        let g = grid(10);
        let s = EulerState::zeros(g).unwrap();
        let params = EulerParams::new(
            Some(AlignmentKernel::with_beta(0.5).unwrap()),
            ChemoParams::off(),
            1.0,
            0.1,
            2.0,
        )
        .unwrap();
        let (next, dt) = euler_step(&s, &null_chemo(&g), &params, 0.01).unwrap();
        assert_eq!(dt, 0.01);
        assert_eq!(next.mu, s.mu);
        assert_eq!(next.q, s.q);
    }

    #[test]
    fn constant_state_preserved_away_from_walls() {
        let g = grid(40);
        let s = EulerState::from_fns(g, |_| 1.0, |_| 0.0).unwrap();
        let (next, _) = euler_step(&s, &null_chemo(&g), &off(0.0), 0.01).unwrap();
        // Nodes 1 and n-1 feel the vacuum walls; everything else is untouched.
        for i in 2..39 {
            assert_abs_diff_eq!(next.mu.values()[i], 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(next.q.values()[i], 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn three_node_hand_step() {
        let g = SpatialGrid::bounded(0.0, 1.0, 2).unwrap();
        let s = EulerState::new(
            ScalarField::new(g, vec![0.0, 1.0, 0.0]).unwrap(),
            ScalarField::zeros(g),
            0.0,
        )
        .unwrap();
        let eps = 0.01;
        let lambda = (eps * 2.0f64).sqrt();
        let dx = 0.5;
        let dt_cap = 1.0;
        let dt = (0.9 * dx / lambda).min(dt_cap);
        // Middle node: f1 = (1/2, eps/(2 lambda)), f2 = (1/2, -eps/(2 lambda));
        // both walls hold zero streams, so each stream keeps (1 - c) of itself.
        let c = dt * lambda / dx;
        let f1 = (0.5, 0.5 * eps / lambda);
        let f2 = (0.5, -0.5 * eps / lambda);
        let mu = (1.0 - c) * f1.0 + (1.0 - c) * f2.0;
        let q = (1.0 - c) * f1.1 + (1.0 - c) * f2.1;
        let (next, used) = euler_step(&s, &null_chemo(&g), &off(eps), dt_cap).unwrap();
        assert_abs_diff_eq!(used, dt, epsilon = 1e-15);
        assert_abs_diff_eq!(next.mu.values()[1], mu, epsilon = 1e-13);
        assert_abs_diff_eq!(next.q.values()[1], q, epsilon = 1e-13);
        assert_eq!(next.mu.values()[0], 0.0);
        assert_eq!(next.mu.values()[2], 0.0);
    }

    #[test]
    fn damping_contracts_exactly() {
        let g = grid(50);
        let s = EulerState::from_fns(g, |x| (-(8.0 * x * x)).exp(), |x| 0.3 * x + 0.1).unwrap();
        let alpha = 2.0;
        let damped = EulerParams::new(None, ChemoParams::off(), alpha, 0.0, 2.0).unwrap();
        let (a, dt) = euler_step(&s, &null_chemo(&g), &off(0.0), 0.01).unwrap();
        let (b, dt_b) = euler_step(&s, &null_chemo(&g), &damped, 0.01).unwrap();
        assert_eq!(dt, dt_b);
        for (qa, qb) in a.q.values().iter().zip(b.q.values()) {
            assert_eq!(*qb, *qa / (1.0 + alpha * dt));
        }
        assert_eq!(a.mu, b.mu);
    }

    #[test]
    fn chemotactic_push_follows_gradient() {
        let g = grid(50);
        let s = EulerState::from_fns(g, |x| 1.0 - x * x, |_| 0.0).unwrap();
        let cg = chemo_grid_for(&g).unwrap();
        let phi = ScalarField::from_fn(cg, |x| -(x * x));
        let psi = ChemoState::from_phi(&phi, 0.0, 0.0);
        let params = EulerParams::new(None, ChemoParams::new(1.0, 0.0, 0.1, 1.0).unwrap(), 0.0, 0.0, 2.0).unwrap();
        let (next, _) = euler_step(&s, &psi, &params, 0.01).unwrap();
        for i in 5..25 {
            assert!(next.q.values()[i] > 0.0, "node {i} should move right");
        }
        for i in 27..46 {
            assert!(next.q.values()[i] < 0.0, "node {i} should move left");
        }
    }

    #[test]
    fn interior_run_conserves_mass_and_momentum() {
        let g = SpatialGrid::bounded(-3.0, 3.0, 300).unwrap();
        let s = EulerState::from_fns(g, |x| (-(4.0 * x * x)).exp(), |x| 0.2 * (x * 2.0).sin()).unwrap();
        let cfg = EulerRunConfig::new(0.01, 0.5, vec![0.5]);
        let traj = euler_run(&s, &off(0.0), &cfg).unwrap();
        let end = &traj.final_state;
        assert_eq!(traj.outcome, EulerOutcome::Completed);
        assert_eq!(end.t, 0.5);
        assert!((end.mass() - s.mass()).abs() < 1e-8);
        assert!((end.momentum() - s.momentum()).abs() < 1e-8);

        let params = EulerParams::new(
            Some(AlignmentKernel::with_beta(0.5).unwrap()),
            ChemoParams::new(1.0, 0.01, 0.1, 1.0).unwrap(),
            0.0,
            0.05,
            2.0,
        )
        .unwrap();
        let traj = euler_run(&s, &params, &cfg).unwrap();
        assert!((traj.final_state.mass() - s.mass()).abs() < 1e-8);
    }

    #[test]
    fn snapshots_land_on_requested_times() {
        let g = grid(100);
        let s = EulerState::from_fns(g, |x| 1.0 - x * x, |x| -0.3 * x).unwrap();
        let cfg = EulerRunConfig::new(0.05, 1.0, vec![0.0, 0.33, 0.5, 1.0]);
        let traj = euler_run(&s, &off(0.1), &cfg).unwrap();
        let times: Vec<f64> = traj.snapshots.iter().map(|s| s.t).collect();
        assert_eq!(times, vec![0.0, 0.33, 0.5, 1.0]);
        assert_eq!(traj.snapshot_at(0.0).unwrap().mu, s.mu);
    }

    proptest! {
        #[test]
        fn step_keeps_density_nonnegative(seed in 0u64..1000, eps in 0.0f64..0.5) {
            let s = random_state(30, seed);
            let (next, _) = euler_step(&s, &null_chemo(s.grid()), &off(eps), 1.0).unwrap();
            prop_assert!(next.mu.values().iter().all(|m| *m >= 0.0));
        }
    }
}
