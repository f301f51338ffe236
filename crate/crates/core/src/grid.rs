//! Uniform grids, grid functions, and the discrete calculus shared by the
//! solvers.
//!
//! A periodic grid on `[x_min, x_max)` has `n_x` distinct nodes (the right
//! end point is identified with the left one). A bounded grid on the closed
//! interval has `n_x + 1` nodes, so both end points are nodes. In both cases
//! `dx = (x_max - x_min) / n_x` and node `i` sits at `x_min + i * dx`.

use crate::error::{Error, Result};

/// Values in `(-NEG_TOL, 0)` are treated as round-off and clamped to zero.
pub const NEG_TOL: f64 = 1e-12;

/// Relative slack used when a length is supposed to be an integer multiple of
/// a spacing.
const SPACING_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid {
    x_min: f64,
    x_max: f64,
    n_x: usize,
    periodic: bool,
}

impl SpatialGrid {
    fn new(x_min: f64, x_max: f64, n_x: usize, periodic: bool) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) || x_max <= x_min {
            return Err(Error::InvalidGrid(format!(
                "need finite x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        if n_x < 2 {
            return Err(Error::InvalidGrid(format!("need n_x >= 2, got {n_x}")));
        }
        Ok(Self {
            x_min,
            x_max,
            n_x,
            periodic,
        })
    }

    pub fn periodic(x_min: f64, x_max: f64, n_x: usize) -> Result<Self> {
        Self::new(x_min, x_max, n_x, true)
    }

    pub fn bounded(x_min: f64, x_max: f64, n_x: usize) -> Result<Self> {
        Self::new(x_min, x_max, n_x, false)
    }

    /// Builds a grid from a spacing; the interval length must be a whole
    /// number of cells.
    pub fn with_spacing(x_min: f64, x_max: f64, dx: f64, periodic: bool) -> Result<Self> {
        if !(dx > 0.0) {
            return Err(Error::InvalidGrid(format!("need dx > 0, got {dx}")));
        }
        let cells = (x_max - x_min) / dx;
        let n_x = cells.round();
        if (cells - n_x).abs() > SPACING_SLACK * cells.max(1.0) {
            return Err(Error::InvalidGrid(format!(
                "length {} is not a multiple of dx = {dx}",
                x_max - x_min
            )));
        }
        Self::new(x_min, x_max, n_x as usize, periodic)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    /// Number of cells.
    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_x as f64
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    /// Number of nodes carrying values.
    pub fn len(&self) -> usize {
        if self.periodic {
            self.n_x
        } else {
            self.n_x + 1
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |i| self.x(i))
    }

    /// Largest node offset `w` with `w * dx <= radius` (with round-off slack).
    pub fn radius_in_nodes(&self, radius: f64) -> usize {
        if radius <= 0.0 {
            return 0;
        }
        (radius / self.dx() + SPACING_SLACK).floor() as usize
    }

    /// Same node layout (end points, spacing and closure) within round-off.
    pub fn matches(&self, other: &SpatialGrid) -> bool {
        let tol = 1e-12 * self.length().abs().max(1.0);
        self.n_x == other.n_x
            && self.periodic == other.periodic
            && (self.x_min - other.x_min).abs() <= tol
            && (self.x_max - other.x_max).abs() <= tol
    }
}

/// Position-velocity grid: periodic in `x`, bounded (closed) in `v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseGrid {
    pub x: SpatialGrid,
    pub v: SpatialGrid,
}

impl PhaseGrid {
    pub fn new(x: SpatialGrid, v: SpatialGrid) -> Result<Self> {
        if !x.is_periodic() {
            return Err(Error::InvalidGrid("phase grid needs a periodic x axis".into()));
        }
        if v.is_periodic() {
            return Err(Error::InvalidGrid("phase grid needs a bounded v axis".into()));
        }
        Ok(Self { x, v })
    }

    pub fn from_spacing(
        (x_min, x_max, dx): (f64, f64, f64),
        (v_min, v_max, dv): (f64, f64, f64),
    ) -> Result<Self> {
        Self::new(
            SpatialGrid::with_spacing(x_min, x_max, dx, true)?,
            SpatialGrid::with_spacing(v_min, v_max, dv, false)?,
        )
    }

    pub fn dx(&self) -> f64 {
        self.x.dx()
    }

    pub fn dv(&self) -> f64 {
        self.v.dx()
    }

    pub fn nx(&self) -> usize {
        self.x.len()
    }

    pub fn nv(&self) -> usize {
        self.v.len()
    }

    pub fn v_abs_max(&self) -> f64 {
        self.v.x_min().abs().max(self.v.x_max().abs())
    }

    pub fn len(&self) -> usize {
        self.nx() * self.nv()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: SpatialGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: SpatialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid with {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: SpatialGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: SpatialGrid, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid,
            values: grid.nodes().map(f).collect(),
        }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Riemann sum `sum_i f_i dx`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.dx()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Linear resampling onto another grid.
    pub fn resample(&self, target: &SpatialGrid) -> Result<ScalarField> {
        if self.grid.matches(target) {
            return Ok(self.clone());
        }
        let values = target
            .nodes()
            .map(|x| interpolate_at(self, x))
            .collect::<Result<Vec<_>>>()?;
        ScalarField::new(*target, values)
    }
}

/// Nonnegative density on a [`PhaseGrid`], stored row-major with `v`
/// contiguous: node `(i, j)` lives at `i * nv + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDensity {
    grid: PhaseGrid,
    values: Vec<f64>,
}

impl PhaseDensity {
    pub fn new(grid: PhaseGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a phase grid with {} nodes",
                values.len(),
                grid.len()
            )));
        }
        let mut rho = Self { grid, values };
        rho.enforce_nonnegative()?;
        Ok(rho)
    }

    pub fn zeros(grid: PhaseGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: PhaseGrid, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.nx() {
            let x = grid.x.x(i);
            for j in 0..grid.nv() {
                values.push(f(x, grid.v.x(j)));
            }
        }
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.nv() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let nv = self.grid.nv();
        self.values[i * nv + j] = value;
    }

    /// The velocity row at spatial node `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        let nv = self.grid.nv();
        &self.values[i * nv..(i + 1) * nv]
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.dx() * self.grid.dv()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `int rho dx` at each velocity node.
    pub fn velocity_marginal(&self) -> Vec<f64> {
        let nv = self.grid.nv();
        let mut out = vec![0.0; nv];
        for row in self.values.chunks_exact(nv) {
            out.iter_mut().zip(row).for_each(|(m, r)| *m += r);
        }
        let dx = self.grid.dx();
        out.iter_mut().for_each(|m| *m *= dx);
        out
    }

    /// Mass of the velocity marginal `int rho dx` inside `|v| <= v_bound`.
    pub fn velocity_band_mass(&self, v_bound: f64) -> f64 {
        let nv = self.grid.nv();
        let inside: Vec<bool> = (0..nv)
            .map(|j| self.grid.v.x(j).abs() <= v_bound + 1e-12)
            .collect();
        let total: f64 = self
            .values
            .chunks_exact(nv)
            .map(|row| {
                row.iter()
                    .zip(&inside)
                    .filter(|(_, &keep)| keep)
                    .map(|(r, _)| r)
                    .sum::<f64>()
            })
            .sum();
        total * self.grid.dx() * self.grid.dv()
    }

    pub(crate) fn from_raw(grid: PhaseGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    /// Exchanges the node values with `other`, which must have the grid's
    /// length.
    pub(crate) fn swap_values(&mut self, other: &mut Vec<f64>) {
        debug_assert_eq!(other.len(), self.values.len());
        std::mem::swap(&mut self.values, other);
    }

    /// Clamps round-off negatives to zero; anything below `-NEG_TOL` is an
    /// error.
    pub(crate) fn enforce_nonnegative(&mut self) -> Result<()> {
        for (node, v) in self.values.iter_mut().enumerate() {
            if *v < 0.0 {
                if *v < -NEG_TOL || v.is_nan() {
                    return Err(Error::NegativeDensity {
                        value: *v,
                        node,
                        tol: NEG_TOL,
                    });
                }
                *v = 0.0;
            } else if v.is_nan() {
                return Err(Error::NegativeDensity {
                    value: *v,
                    node,
                    tol: NEG_TOL,
                });
            }
        }
        Ok(())
    }
}

/// `sum_i |a_i - b_i| dx`.
pub fn l1_distance(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    if !a.grid.matches(&b.grid) {
        return Err(Error::GridMismatch(format!(
            "l1_distance between {:?} and {:?}",
            a.grid, b.grid
        )));
    }
    let sum: f64 = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).abs())
        .sum();
    Ok(sum * a.grid.dx())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Periodic,
    /// First-order one-sided differences at the two end nodes.
    OneSided,
}

/// Centered difference `(f_{i+1} - f_{i-1}) / (2 dx)`.
pub fn central_gradient(f: &ScalarField, boundary: Boundary) -> ScalarField {
    let n = f.values.len();
    let dx = f.grid.dx();
    let v = &f.values;
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        out[i] = (v[i + 1] - v[i - 1]) / (2.0 * dx);
    }
    match boundary {
        Boundary::Periodic => {
            out[0] = (v[1] - v[n - 1]) / (2.0 * dx);
            out[n - 1] = (v[0] - v[n - 2]) / (2.0 * dx);
        }
        Boundary::OneSided => {
            out[0] = (v[1] - v[0]) / dx;
            out[n - 1] = (v[n - 1] - v[n - 2]) / dx;
        }
    }
    ScalarField {
        grid: f.grid,
        values: out,
    }
}

/// Prefix sums `p[k] = sum_{m < k} f_m`.
fn prefix_sums(values: &[f64]) -> Vec<f64> {
    let mut p = Vec::with_capacity(values.len() + 1);
    let mut acc = 0.0;
    p.push(acc);
    for v in values {
        acc += v;
        p.push(acc);
    }
    p
}

fn window_from_prefix(p: &[f64], n: usize, periodic: bool, i: usize, w: usize) -> f64 {
    if periodic {
        if 2 * w + 1 >= n {
            return p[n];
        }
        let lo = i as isize - w as isize;
        let hi = i + w;
        let mut sum = 0.0;
        if lo < 0 {
            sum += p[n] - p[(lo + n as isize) as usize];
            sum += p[hi + 1];
        } else if hi >= n {
            sum += p[n] - p[lo as usize];
            sum += p[hi + 1 - n];
        } else {
            sum += p[hi + 1] - p[lo as usize];
        }
        sum
    } else {
        let lo = i.saturating_sub(w);
        let hi = (i + w).min(n - 1);
        p[hi + 1] - p[lo]
    }
}

/// `dx * sum f_m` over nodes with `|x_m - x_i| <= radius`; periodic grids use
/// the periodic distance.
pub fn window_sum(f: &ScalarField, center: usize, radius: f64) -> f64 {
    let w = f.grid.radius_in_nodes(radius);
    let p = prefix_sums(&f.values);
    window_from_prefix(&p, f.values.len(), f.grid.periodic, center, w) * f.grid.dx()
}

/// [`window_sum`] at every node in `O(n)`.
pub fn window_sums(f: &ScalarField, radius: f64) -> ScalarField {
    let w = f.grid.radius_in_nodes(radius);
    let n = f.values.len();
    let p = prefix_sums(&f.values);
    let dx = f.grid.dx();
    let values = (0..n)
        .map(|i| window_from_prefix(&p, n, f.grid.periodic, i, w) * dx)
        .collect();
    ScalarField {
        grid: f.grid,
        values,
    }
}

/// Linear interpolation between the two nodes bracketing `x`. Periodic grids
/// wrap `x` into the fundamental interval.
pub fn interpolate_at(f: &ScalarField, x: f64) -> Result<f64> {
    let g = &f.grid;
    let dx = g.dx();
    let n = f.values.len();
    if g.periodic {
        let xi = ((x - g.x_min) / dx).rem_euclid(n as f64);
        let i = (xi.floor() as usize).min(n - 1);
        let frac = xi - i as f64;
        let j = (i + 1) % n;
        Ok(f.values[i] * (1.0 - frac) + f.values[j] * frac)
    } else {
        let slack = 1e-12 * g.length().max(1.0);
        if !(x >= g.x_min - slack && x <= g.x_max + slack) {
            return Err(Error::OutOfDomain {
                x,
                x_min: g.x_min,
                x_max: g.x_max,
            });
        }
        let xi = ((x - g.x_min) / dx).clamp(0.0, g.n_x as f64);
        let i = (xi.floor() as usize).min(g.n_x - 1);
        let frac = xi - i as f64;
        Ok(f.values[i] * (1.0 - frac) + f.values[i + 1] * frac)
    }
}
