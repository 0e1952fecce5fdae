use num_complex::Complex;

use super::fields::{PhysicalParams, PolarField, WaveField};
use super::grid::SpatialGrid;
use super::PROBABILITY_FLOOR;
use crate::error::{Error, Result};
use crate::num::{lit, Real};

fn check_shape<T>(grid: &SpatialGrid<T>, n_x: usize, n_t: usize) -> Result<()> {
    if n_x != grid.n_x || n_t != grid.n_t {
        return Err(Error::MismatchedDimensions {
            expected: grid.n_x * grid.n_t,
            actual: n_x * n_t,
        });
    }
    Ok(())
}

/// `∂S/∂t` on the grid; zero for a single slice.
fn time_derivative<T: Real>(s: &[T], grid: &SpatialGrid<T>) -> Vec<T> {
    match grid.d_dt() {
        Some(d) => d.apply_columns(s, grid.n_x),
        None => vec![T::zero(); s.len()],
    }
}

/// `(∂P/∂x)² / P` with points at or below the floor contributing zero.
fn fisher_density<T: Real>(p: &[T], grid: &SpatialGrid<T>) -> Result<Vec<T>> {
    if let Some(bad) = p.iter().find(|v| !(**v >= T::zero()) || !v.is_finite()) {
        return Err(Error::DegenerateProbability(format!("density value {bad}")));
    }
    let floor = lit::<T>(PROBABILITY_FLOOR);
    if p.iter().all(|&v| v <= floor) {
        return Err(Error::DegenerateProbability(
            "density is below the floor everywhere".into(),
        ));
    }
    let px = grid.d_dx().apply_rows(p);
    Ok(p.iter()
        .zip(&px)
        .map(|(&v, &d)| if v > floor { d * d / v } else { T::zero() })
        .collect())
}

/// `∫∫ (∂P/∂x)² / P dx dt`.
pub fn fisher_continuum<T: Real>(field: &PolarField<T>, grid: &SpatialGrid<T>) -> Result<T> {
    check_shape(grid, field.n_x, field.n_t)?;
    Ok(grid.integrate(&fisher_density(&field.p, grid)?))
}

/// `∂S/∂t + (∂S/∂x)²/(2m) + V` at every grid point.
pub fn hj_residual<T: Real>(s: &[T], params: &PhysicalParams<T>, grid: &SpatialGrid<T>) -> Result<Vec<T>> {
    if s.len() != grid.points() {
        return Err(Error::MismatchedDimensions {
            expected: grid.points(),
            actual: s.len(),
        });
    }
    let st = time_derivative(s, grid);
    let sx = grid.d_dx().apply_rows(s);
    let v = params.potential_field(grid);
    let two_m = lit::<T>(2.0) * params.mass;
    Ok((0..s.len()).map(|k| st[k] + sx[k] * sx[k] / two_m + v[k]).collect())
}

/// `∫∫ { (∂P/∂x)²/P + 2mλ [∂S/∂t + (∂S/∂x)²/(2m) + V] P } dx dt`.
///
/// A single slice is integrated with unit time weight and `∂S/∂t = 0`.
pub fn functional_f<T: Real>(field: &PolarField<T>, params: &PhysicalParams<T>, grid: &SpatialGrid<T>) -> Result<T> {
    check_shape(grid, field.n_x, field.n_t)?;
    let fisher = fisher_density(&field.p, grid)?;
    let hj = hj_residual(&field.s, params, grid)?;
    let coupling = lit::<T>(2.0) * params.mass * params.lambda;
    let integrand: Vec<T> = (0..fisher.len())
        .map(|k| fisher[k] + coupling * hj[k] * field.p[k])
        .collect();
    Ok(grid.integrate(&integrand))
}

/// `∫∫ [2im√λ (ψ ∂ψ*/∂t − ψ* ∂ψ/∂t) + 4|∂ψ/∂x|² + 2mλ V |ψ|²] dx dt`.
///
/// The result is real up to rounding; the imaginary part is returned so
/// callers can check it.
pub fn functional_q<T: Real>(
    psi: &WaveField<T>,
    params: &PhysicalParams<T>,
    grid: &SpatialGrid<T>,
) -> Result<Complex<T>> {
    check_shape(grid, psi.n_x, psi.n_t)?;
    let zero = Complex::new(T::zero(), T::zero());
    let psi_t = match grid.d_dt() {
        Some(d) => d.apply_columns(&psi.psi, grid.n_x),
        None => vec![zero; psi.psi.len()],
    };
    let psi_x = grid.d_dx().apply_rows(&psi.psi);
    let v = params.potential_field(grid);
    let time_coef = Complex::new(T::zero(), lit::<T>(2.0) * params.mass * params.lambda.sqrt());
    let coupling = lit::<T>(2.0) * params.mass * params.lambda;
    let four = lit::<T>(4.0);
    let weights_x = grid.space_weights();
    let weights_t = grid.time_weights();
    let mut total = zero;
    for (tau, &wt) in weights_t.iter().enumerate() {
        for (i, &wx) in weights_x.iter().enumerate() {
            let k = tau * grid.n_x + i;
            let z = psi.psi[k];
            let zt = psi_t[k];
            let time_term = time_coef * (z * zt.conj() - z.conj() * zt);
            let value =
                time_term + Complex::new(four * psi_x[k].norm_sqr() + coupling * v[k] * z.norm_sqr(), T::zero());
            total += value * (wt * wx);
        }
    }
    Ok(total)
}
