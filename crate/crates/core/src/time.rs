//! Fixed-step time grids.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

const ROUNDING_GUARD: f64 = 1e-9;

/// `t_k = k dt` for `k = 0..=steps`, with `steps dt = T` and every snapshot
/// time landing on a step.
#[derive(Debug, Clone)]
pub struct StepSchedule {
    dt: f64,
    steps: usize,
    snapshot_steps: BTreeSet<usize>,
}

fn whole_steps(t: f64, dt: f64, name: &'static str) -> Result<usize> {
    let k = (t / dt).round();
    if (k * dt - t).abs() > ROUNDING_GUARD * t.abs().max(1.0) || k < 0.0 {
        return Err(Error::InvalidParameter {
            name,
            reason: format!("{t} is not a whole number of steps of {dt}"),
        });
    }
    Ok(k as usize)
}

impl StepSchedule {
    pub fn new(dt: f64, t_final: f64, snapshot_times: &[f64]) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("must be positive, got {dt}"),
            });
        }
        if !(t_final > 0.0) {
            return Err(Error::InvalidParameter {
                name: "t_final",
                reason: format!("must be positive, got {t_final}"),
            });
        }
        let steps = whole_steps(t_final, dt, "t_final")?;
        let mut snapshot_steps = BTreeSet::new();
        for &s in snapshot_times {
            if s < 0.0 || s > t_final * (1.0 + ROUNDING_GUARD) {
                return Err(Error::InvalidParameter {
                    name: "snapshot_times",
                    reason: format!("{s} outside [0, {t_final}]"),
                });
            }
            snapshot_steps.insert(whole_steps(s, dt, "snapshot_times")?);
        }
        Ok(Self {
            dt,
            steps,
            snapshot_steps,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn is_snapshot(&self, k: usize) -> bool {
        self.snapshot_steps.contains(&k)
    }
}
