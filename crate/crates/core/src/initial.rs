//! Named initial data.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::euler::EulerState;
use crate::grid::{PhaseDensity, PhaseGrid, SpatialGrid};

fn gauss(z: f64, sigma: f64) -> f64 {
    (-(z * z) / (2.0 * sigma * sigma)).exp()
}

fn check_sigmas(sigma_x: f64, sigma_v: f64) -> Result<()> {
    for (name, s) in [("sigma_x", sigma_x), ("sigma_v", sigma_v)] {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidParameter {
                name,
                reason: format!("must be positive, got {s}"),
            });
        }
    }
    Ok(())
}

/// Two counter-streaming velocity bumps over one spatial Gaussian:
/// `exp(-x^2 / 2sx^2) (G(v + v0) + G(v - v0)) / (2 pi sx sv)`.
/// Each bump carries unit mass, so the total is 2.
pub fn two_bump_v(grid: PhaseGrid, v0: f64, sigma_x: f64, sigma_v: f64) -> Result<PhaseDensity> {
    check_sigmas(sigma_x, sigma_v)?;
    let norm = 1.0 / (2.0 * PI * sigma_x * sigma_v);
    PhaseDensity::from_fn(grid, |x, v| {
        norm * gauss(x, sigma_x) * (gauss(v + v0, sigma_v) + gauss(v - v0, sigma_v))
    })
}

/// Unit-mass Gaussian centred at `(x0, v0)`; near-monokinetic for small `sv`.
pub fn monokinetic_gauss(grid: PhaseGrid, x0: f64, v0: f64, sigma_x: f64, sigma_v: f64) -> Result<PhaseDensity> {
    check_sigmas(sigma_x, sigma_v)?;
    let norm = 1.0 / (2.0 * PI * sigma_x * sigma_v);
    PhaseDensity::from_fn(grid, |x, v| norm * gauss(x - x0, sigma_x) * gauss(v - v0, sigma_v))
}

/// Two bumps in phase space at `(x1, v1)` and `(x2, v2)` with prefactor
/// `1 / sqrt(2 pi sx sv)`.
#[allow(clippy::too_many_arguments)]
pub fn two_bump_xv(
    grid: PhaseGrid,
    (x1, v1): (f64, f64),
    (x2, v2): (f64, f64),
    sigma_x: f64,
    sigma_v: f64,
) -> Result<PhaseDensity> {
    check_sigmas(sigma_x, sigma_v)?;
    let norm = 1.0 / (2.0 * PI * sigma_x * sigma_v).sqrt();
    PhaseDensity::from_fn(grid, |x, v| {
        norm * (gauss(x - x1, sigma_x) * gauss(v - v1, sigma_v) + gauss(x - x2, sigma_x) * gauss(v - v2, sigma_v))
    })
}

/// Normalization of `cos(pi x / 1.5)` on `[-0.75, 0.75]`.
pub const COSINE_C1: f64 = PI / 3.0;

/// `mu = c1 cos(pi x / 1.5)`, `u = -c2 sin(pi x / 1.5)` on `|x| <= 0.75`,
/// vacuum outside.
pub fn cosine_density(grid: SpatialGrid, c2: f64) -> Result<EulerState> {
    if !(c2 >= 0.0 && c2.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "c2",
            reason: format!("must be nonnegative, got {c2}"),
        });
    }
    let k = PI / 1.5;
    EulerState::from_fns(
        grid,
        |x| if x.abs() <= 0.75 { (COSINE_C1 * (k * x).cos()).max(0.0) } else { 0.0 },
        |x| -c2 * (k * x).sin(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn phase() -> PhaseGrid {
        PhaseGrid::from_spacing((-8.0, 8.0, 0.02), (-8.0, 8.0, 0.02)).unwrap()
    }

    #[test]
    fn masses() {
        let g = phase();
        assert_abs_diff_eq!(two_bump_v(g, 3.5, 0.1f64.sqrt(), 0.5f64.sqrt()).unwrap().mass(), 2.0, epsilon = 1e-6);
        let mono = monokinetic_gauss(g, -2.0, 1.5, 0.2f64.sqrt(), 0.001f64.sqrt()).unwrap();
        assert_abs_diff_eq!(mono.mass(), 1.0, epsilon = 1e-6);
        let (sx, sv) = (0.2f64.sqrt(), 0.5f64.sqrt());
        let two = two_bump_xv(g, (-2.0, 1.5), (2.0, -2.5), sx, sv).unwrap();
        assert_abs_diff_eq!(two.mass(), 2.0 * (2.0 * PI * sx * sv).sqrt(), epsilon = 1e-6);
    }

    #[test]
    fn cosine_mass_is_one() {
        // Analytic: int cos(pi x / 1.5) over [-0.75, 0.75] = 3 / pi.
        assert_abs_diff_eq!(COSINE_C1 * 3.0 / PI, 1.0, epsilon = 1e-15);
        let g = SpatialGrid::bounded(-0.75, 0.75, 600).unwrap();
        let s = cosine_density(g, 0.5).unwrap();
        assert_abs_diff_eq!(s.mass(), 1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(s.velocity(450), -0.5 * (PI / 1.5 * g.x(450)).sin(), epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_widths() {
        assert!(monokinetic_gauss(phase(), 0.0, 0.0, 0.0, 1.0).is_err());
        assert!(two_bump_v(phase(), 1.0, 1.0, -1.0).is_err());
        assert!(cosine_density(SpatialGrid::bounded(-0.75, 0.75, 10).unwrap(), -1.0).is_err());
    }
}
