//! Chemoattractant equation `d_s phi = D phi_xx - kappa phi + source` on a
//! periodic grid.
//!
//! The degradation term is removed by the substitution `phi = exp(-kappa t) u`,
//! after which `u` is advanced with Crank-Nicolson (theta = 1/2) in the
//! diffusion and the trapezoidal average of the two source evaluations.

use crate::error::{Error, Result};
use crate::grid::{central_gradient, window_sums, Boundary, ScalarField, SpatialGrid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChemoParams {
    /// Diffusivity `D`.
    pub diffusion: f64,
    /// Degradation rate `kappa`.
    pub kappa: f64,
    /// Production radius `R` of the indicator window.
    pub radius: f64,
    /// Chemotactic sensitivity `eta`; zero disables the coupling.
    pub eta: f64,
}

impl ChemoParams {
    pub fn new(diffusion: f64, kappa: f64, radius: f64, eta: f64) -> Result<Self> {
        for (name, value) in [
            ("diffusion", diffusion),
            ("kappa", kappa),
            ("radius", radius),
            ("eta", eta),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite and nonnegative, got {value}"),
                });
            }
        }
        Ok(Self {
            diffusion,
            kappa,
            radius,
            eta,
        })
    }

    /// No chemical field at all.
    pub fn off() -> Self {
        Self {
            diffusion: 0.0,
            kappa: 0.0,
            radius: 0.0,
            eta: 0.0,
        }
    }

    pub fn is_coupled(&self) -> bool {
        self.eta > 0.0
    }
}

/// Transformed chemical field `u` at time `t`; the physical field is
/// `phi = exp(-kappa t) u`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChemoState {
    grid: SpatialGrid,
    u: Vec<f64>,
    t: f64,
    kappa: f64,
}

impl ChemoState {
    /// Null initial concentration.
    pub fn zero(grid: SpatialGrid, kappa: f64) -> Self {
        Self {
            grid,
            u: vec![0.0; grid.len()],
            t: 0.0,
            kappa,
        }
    }

    pub fn from_phi(phi: &ScalarField, t: f64, kappa: f64) -> Self {
        let scale = (kappa * t).exp();
        Self {
            grid: *phi.grid(),
            u: phi.values().iter().map(|p| p * scale).collect(),
            t,
            kappa,
        }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn transformed(&self) -> &[f64] {
        &self.u
    }

    /// Recovered concentration `exp(-kappa t) u`.
    pub fn phi(&self) -> ScalarField {
        let scale = (-self.kappa * self.t).exp();
        ScalarField::new(self.grid, self.u.iter().map(|u| u * scale).collect())
            .expect("state length matches its grid")
    }
}

/// Indicator window hit test; the slack absorbs node-coordinate round-off so
/// that points exactly `radius` apart count as inside.
fn within(distance: f64, radius: f64, dx: f64) -> bool {
    distance <= radius + 1e-9 * dx
}

/// Signed offset `x - y` reduced to the minimum image on a periodic grid.
fn grid_distance(grid: &SpatialGrid, x: f64, y: f64) -> f64 {
    let d = x - y;
    if grid.is_periodic() {
        let l = grid.length();
        let r = d.rem_euclid(l);
        r.min(l - r)
    } else {
        d.abs()
    }
}

/// Production term of a particle cloud: `scale * sum_j 1{|x_l - x_j| <= R}`
/// with `scale = 1/N` when `normalize` is set.
pub fn source_from_particles(
    positions: &[f64],
    grid: &SpatialGrid,
    radius: f64,
    normalize: bool,
) -> ScalarField {
    let n = grid.len();
    let dx = grid.dx();
    let mut counts = vec![0.0; n];
    let reach = grid.radius_in_nodes(radius) as isize + 1;
    if grid.is_periodic() && 2 * reach + 1 > n as isize {
        // Window wider than the domain: wrapped offsets would repeat nodes.
        return brute_force_source(positions, grid, radius, normalize);
    }
    for &xj in positions {
        let centre = ((xj - grid.x_min()) / dx).round() as isize;
        for off in -reach..=reach {
            let l = centre + off;
            let l = if grid.is_periodic() {
                l.rem_euclid(n as isize) as usize
            } else if l < 0 || l >= n as isize {
                continue;
            } else {
                l as usize
            };
            if within(grid_distance(grid, grid.x(l), xj), radius, dx) {
                counts[l] += 1.0;
            }
        }
    }
    let scale = if normalize && !positions.is_empty() {
        1.0 / positions.len() as f64
    } else {
        1.0
    };
    ScalarField::new(*grid, counts.into_iter().map(|c| c * scale).collect())
        .expect("length matches grid")
}

fn brute_force_source(
    positions: &[f64],
    grid: &SpatialGrid,
    radius: f64,
    normalize: bool,
) -> ScalarField {
    let dx = grid.dx();
    let scale = if normalize && !positions.is_empty() {
        1.0 / positions.len() as f64
    } else {
        1.0
    };
    ScalarField::from_fn(*grid, |x| {
        positions
            .iter()
            .filter(|&&xj| within(grid_distance(grid, x, xj), radius, dx))
            .count() as f64
            * scale
    })
}

/// Production term of a density: its window integral of radius `R`.
pub fn source_from_density(density: &ScalarField, radius: f64) -> ScalarField {
    window_sums(density, radius)
}

/// One Crank-Nicolson step of the transformed equation
/// `(I - dt/2 D L) u' = (I + dt/2 D L) u + dt/2 (e^{kappa t'} s' + e^{kappa t} s)`,
/// with `L` the periodic second difference over the node array.
pub fn chemo_step(
    state: &ChemoState,
    source_k: &ScalarField,
    source_k1: &ScalarField,
    dt: f64,
    params: &ChemoParams,
) -> Result<ChemoState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter {
            name: "dt",
            reason: format!("must be positive, got {dt}"),
        });
    }
    if params.kappa != state.kappa {
        return Err(Error::InvalidParameter {
            name: "kappa",
            reason: format!(
                "state was built with kappa = {}, step called with {}",
                state.kappa, params.kappa
            ),
        });
    }
    for s in [source_k, source_k1] {
        if !s.grid().matches(&state.grid) {
            return Err(Error::GridMismatch("chemo source grid".into()));
        }
    }
    let n = state.u.len();
    let dx = state.grid.dx();
    let r = params.diffusion * dt / (dx * dx);
    let t0 = state.t;
    let t1 = t0 + dt;
    let w0 = 0.5 * dt * (params.kappa * t0).exp();
    let w1 = 0.5 * dt * (params.kappa * t1).exp();
    let u = &state.u;
    let s0 = source_k.values();
    let s1 = source_k1.values();

    let rhs: Vec<f64> = (0..n)
        .map(|i| {
            let left = u[(i + n - 1) % n];
            let right = u[(i + 1) % n];
            u[i] + 0.5 * r * (left - 2.0 * u[i] + right) + w1 * s1[i] + w0 * s0[i]
        })
        .collect();

    let u_next = if r == 0.0 {
        rhs
    } else {
        let off = vec![-0.5 * r; n];
        let diag = vec![1.0 + r; n];
        crate::linalg::solve_cyclic_tridiagonal(&off, &diag, &off, &rhs)?
    };
    Ok(ChemoState {
        grid: state.grid,
        u: u_next,
        t: t1,
        kappa: state.kappa,
    })
}

/// Centered gradient of the recovered field with periodic closure.
pub fn chemo_gradient(state: &ChemoState) -> ScalarField {
    central_gradient(&state.phi(), Boundary::Periodic)
}
