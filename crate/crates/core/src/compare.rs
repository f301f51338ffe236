//! Kinetic-versus-hydrodynamic comparison: moment-matched initial data,
//! `L1` distances between moments and hydrodynamic fields, and a scalar
//! search for the pressure coefficient that minimizes them.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::euler::{EulerState, EulerTrajectory};
use crate::grid::{l1_distance, PhaseDensity, ScalarField, SpatialGrid};
use crate::vlasov::{moment0, moment1, VlasovTrajectory};

/// `mu0 = nu0(rho0)`, `Q0 = nu1(rho0)`, interpolated onto `grid`.
pub fn euler_ic_from_vlasov(rho0: &PhaseDensity, grid: &SpatialGrid) -> Result<EulerState> {
    let mu = moment0(rho0).resample(grid)?;
    let q = moment1(rho0).resample(grid)?;
    EulerState::new(mu, q, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonRecord {
    pub t: f64,
    pub epsilon: f64,
    pub e0: f64,
    pub e1: f64,
}

/// `E0 = |nu0 - mu|_1` and `E1 = |nu1 - Q|_1` at time `t`, on the
/// hydrodynamic grid.
pub fn distances_at(vlasov: &VlasovTrajectory, euler: &EulerTrajectory, t: f64) -> Result<(f64, f64)> {
    let v = vlasov.snapshot_at(t).ok_or(Error::MissingSnapshot(t))?;
    let e = euler.snapshot_at(t).ok_or(Error::MissingSnapshot(t))?;
    let grid = *e.mu.grid();
    let e0 = l1_distance(&v.nu0.resample(&grid)?, &e.mu)?;
    let e1 = l1_distance(&v.nu1.resample(&grid)?, &e.q)?;
    Ok((e0, e1))
}

pub fn distance_series(
    vlasov: &VlasovTrajectory,
    euler: &EulerTrajectory,
    times: &[f64],
    epsilon: f64,
) -> Result<Vec<ComparisonRecord>> {
    times
        .iter()
        .map(|&t| {
            let (e0, e1) = distances_at(vlasov, euler, t)?;
            Ok(ComparisonRecord { t, epsilon, e0, e1 })
        })
        .collect()
}

/// `|a - b|_1` after moving `a` onto the grid of `b`.
pub fn projected_l1(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    l1_distance(&a.resample(b.grid())?, b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSearch {
    pub lo: f64,
    pub hi: f64,
    /// Bracket width at which golden-section search stops.
    pub tol: f64,
    /// Evenly spaced probes (end points included) scanned before bracketing.
    pub coarse_points: usize,
}

impl EpsilonSearch {
    pub fn new(lo: f64, hi: f64, tol: f64) -> Result<Self> {
        if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "epsilon interval",
                reason: format!("need 0 <= lo < hi, got [{lo}, {hi}]"),
            });
        }
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter {
                name: "tol",
                reason: format!("must be positive, got {tol}"),
            });
        }
        Ok(Self {
            lo,
            hi,
            tol,
            coarse_points: 9,
        })
    }

    /// Coarse probe locations.
    pub fn grid(&self) -> Vec<f64> {
        let m = self.coarse_points.max(2) - 1;
        (0..=m)
            .map(|k| self.lo + (self.hi - self.lo) * k as f64 / m as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonOptimum {
    pub epsilon: f64,
    /// `epsilon` rounded to three decimals.
    pub epsilon_rounded: f64,
    pub objective: f64,
    /// Every `(epsilon, objective)` evaluated, in evaluation order.
    pub probes: Vec<(f64, f64)>,
}

fn score(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Minimizes `objective` over the search interval: a coarse scan (run in
/// parallel) picks the best probe, golden-section search refines the
/// bracket formed by its neighbours, and the best probe overall is returned.
/// Non-finite objective values count as `+inf`. Ties prefer the probe nearest
/// the interval midpoint.
pub fn optimize_epsilon<F>(search: &EpsilonSearch, objective: F) -> EpsilonOptimum
where
    F: Fn(f64) -> f64 + Sync,
{
    let coarse = search.grid();
    let values: Vec<f64> = coarse.par_iter().map(|&e| score(objective(e))).collect();
    let mut probes: Vec<(f64, f64)> = coarse.iter().copied().zip(values).collect();
    let mid = 0.5 * (search.lo + search.hi);
    let best = |probes: &[(f64, f64)]| -> (f64, f64) {
        probes
            .iter()
            .copied()
            .min_by(|a, b| {
                a.1.total_cmp(&b.1)
                    .then_with(|| (a.0 - mid).abs().total_cmp(&(b.0 - mid).abs()))
            })
            .expect("at least one probe")
    };

    let k = {
        let (e, _) = best(&probes);
        coarse.iter().position(|&c| c == e).expect("best coarse probe")
    };
    let mut a = coarse[k.saturating_sub(1)];
    let mut b = coarse[(k + 1).min(coarse.len() - 1)];
    if probes[k].1.is_finite() {
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let mut fc = score(objective(c));
        let mut fd = score(objective(d));
        probes.push((c, fc));
        probes.push((d, fd));
        while b - a > search.tol {
            if fc <= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - inv_phi * (b - a);
                fc = score(objective(c));
                probes.push((c, fc));
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + inv_phi * (b - a);
                fd = score(objective(d));
                probes.push((d, fd));
            }
        }
    }
    let (epsilon, value) = best(&probes);
    EpsilonOptimum {
        epsilon,
        epsilon_rounded: (epsilon * 1000.0).round() / 1000.0,
        objective: value,
        probes,
    }
}
