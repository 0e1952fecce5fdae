use serde::{Deserialize, Serialize};

use super::fields::{PhysicalParams, PolarField};
use super::grid::SpatialGrid;
use crate::error::{Error, Result};
use crate::num::{count, lit, Real};

/// Densities below this fraction of the peak are left out of the residuals.
pub const DEFAULT_DENSITY_CUTOFF: f64 = 1e-3;

/// RMS residuals of the hydrodynamic (continuity + quantum Hamilton-Jacobi)
/// form of the evolution equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MadelungReport<T> {
    /// `∂P/∂t + ∂(P ∂S/∂x / m)/∂x`.
    pub continuity_rms: T,
    /// `∂S/∂t + (∂S/∂x)²/(2m) + V - (2/(mλ)) (∂²√P/∂x²)/√P`.
    pub hamilton_jacobi_rms: T,
    /// Peak `|∂P/∂t|` over evaluated points.
    pub max_density_rate: T,
    pub evaluated_points: usize,
    pub masked_points: usize,
}

/// Evaluates both residuals where the phase is defined and `P` exceeds
/// `density_cutoff` times its peak. Derivatives use the grid's stencil
/// orders.
pub fn check_madelung_extremum<T: Real>(
    field: &PolarField<T>,
    params: &PhysicalParams<T>,
    grid: &SpatialGrid<T>,
    density_cutoff: T,
) -> Result<MadelungReport<T>> {
    if field.n_x != grid.n_x || field.n_t != grid.n_t {
        return Err(Error::MismatchedDimensions {
            expected: grid.points(),
            actual: field.n_x * field.n_t,
        });
    }
    let d_dt = grid
        .d_dt()
        .ok_or_else(|| Error::InsufficientData("at least two time slices are needed".into()))?;
    let n_x = grid.n_x;
    let d1 = grid.d_dx();
    let d2 = grid.d2_dx2();
    let m = params.mass;
    let sqrt_p: Vec<T> = field.p.iter().map(|v| v.sqrt()).collect();
    let p_t = d_dt.apply_columns(&field.p, n_x);
    let s_t = d_dt.apply_columns(&field.s, n_x);
    let s_x = d1.apply_rows(&field.s);
    let flux: Vec<T> = field.p.iter().zip(&s_x).map(|(&p, &sx)| p * sx / m).collect();
    let flux_x = d1.apply_rows(&flux);
    let sqrt_p_xx = d2.apply_rows(&sqrt_p);
    let v = params.potential_field(grid);
    let quantum = lit::<T>(2.0) / (m * params.lambda);

    let mut continuity = T::zero();
    let mut hj = T::zero();
    let mut rate = T::zero();
    let mut used = 0usize;
    let mut masked = 0usize;
    for tau in 0..grid.n_t {
        let row = tau * n_x..(tau + 1) * n_x;
        let peak = field.p[row.clone()].iter().copied().fold(T::zero(), T::max);
        for k in row {
            if !field.valid[k] {
                masked += 1;
                continue;
            }
            if field.p[k] <= density_cutoff * peak {
                continue;
            }
            let c = p_t[k] + flux_x[k];
            let q = s_t[k] + s_x[k] * s_x[k] / (lit::<T>(2.0) * m) + v[k] - quantum * sqrt_p_xx[k] / sqrt_p[k];
            continuity += c * c;
            hj += q * q;
            rate = rate.max(p_t[k].abs());
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::PhaseUndefined { count: masked });
    }
    let n = count::<T>(used as u64);
    Ok(MadelungReport {
        continuity_rms: (continuity / n).sqrt(),
        hamilton_jacobi_rms: (hj / n).sqrt(),
        max_density_rate: rate,
        evaluated_points: used,
        masked_points: masked,
    })
}
