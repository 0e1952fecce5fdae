use serde::{Deserialize, Serialize};

use super::fields::{polar_to_wave, PhysicalParams, PolarField, Potential};
use super::functionals::{functional_f, functional_q};
use super::grid::SpatialGrid;
use crate::error::Result;
use crate::num::{lit, to_f64, Real};
use crate::rng::EventRng;

/// Outcome of comparing `F(P, S)` with `Q(ψ)` over random fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FqReport {
    pub trials: usize,
    /// Largest `|F - Q| / (|F| + |Q|)`.
    pub max_relative: f64,
    pub mean_relative: f64,
    /// Largest `|Im Q| / |Q|`.
    pub max_imaginary: f64,
}

/// Grid used by [`check_f_equals_q`]: 256 points on `[-10, 10]`, 8 slices.
pub fn fq_grid<T: Real>() -> SpatialGrid<T> {
    SpatialGrid::new(lit(10.0), 256, lit(0.01), 8).expect("valid grid")
}

/// A smooth normalized density (two drifting, breathing Gaussians) and a
/// smooth action (quadratic plus a travelling wave).
pub fn random_smooth_field<T: Real>(grid: &SpatialGrid<T>, rng: &mut EventRng) -> Result<PolarField<T>> {
    let mut u = |lo: f64, hi: f64| lo + (hi - lo) * rng.uniform();
    let weight = u(0.2, 0.8);
    let modes: Vec<[f64; 4]> = (0..2)
        .map(|_| [u(-2.0, 2.0), u(-0.5, 0.5), u(1.0, 1.5), u(-0.5, 0.5)])
        .collect();
    let [a0, a1, a2, b, k, omega, c] = [
        u(-1.0, 1.0),
        u(-1.0, 1.0),
        u(-0.1, 0.1),
        u(-0.5, 0.5),
        u(0.5, 1.5),
        u(-1.0, 1.0),
        u(-1.0, 1.0),
    ];
    let p = move |x: T, t: T| {
        let (x, t) = (to_f64(x), to_f64(t));
        let mix = modes
            .iter()
            .zip([weight, 1.0 - weight])
            .map(|(&[centre, velocity, width, breathing], w)| {
                let sigma = width * (1.0 + breathing * t);
                let d = x - centre - velocity * t;
                w * (-d * d / (2.0 * sigma * sigma)).exp() / (sigma * std::f64::consts::TAU.sqrt())
            })
            .sum::<f64>();
        lit::<T>(mix)
    };
    let s = move |x: T, t: T| {
        let (x, t) = (to_f64(x), to_f64(t));
        lit::<T>(a0 + a1 * x + a2 * x * x + b * (k * x + omega * t).sin() + c * t)
    };
    let mut field = PolarField::from_fn(grid, p, s)?;
    field.normalize(grid);
    Ok(field)
}

/// Compares `F(P, S)` and `Q(polar_to_wave(P, S))` for `trials` random fields
/// in a random static potential.
pub fn check_f_equals_q<T: Real>(trials: usize, seed: u64, grid: &SpatialGrid<T>) -> Result<FqReport> {
    let mut rng = EventRng::new(seed);
    let (mut max_rel, mut sum_rel, mut max_im) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..trials {
        let field = random_smooth_field(grid, &mut rng)?;
        let omega = lit::<T>(rng.uniform());
        let params = PhysicalParams::natural(Potential::Harmonic {
            omega,
            center: T::zero(),
        });
        let f = to_f64(functional_f(&field, &params, grid)?);
        let q = functional_q(&polar_to_wave(&field, params.lambda), &params, grid)?;
        let (qr, qi) = (to_f64(q.re), to_f64(q.im));
        let rel = (f - qr).abs() / (f.abs() + qr.abs());
        max_rel = max_rel.max(rel);
        sum_rel += rel;
        max_im = max_im.max(qi.abs() / qr.abs());
    }
    Ok(FqReport {
        trials,
        max_relative: max_rel,
        mean_relative: if trials > 0 { sum_rel / trials as f64 } else { 0.0 },
        max_imaginary: max_im,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f_equals_q_on_random_fields() {
        let report = check_f_equals_q::<f64>(50, 2024, &fq_grid()).unwrap();
        assert!(report.max_relative < 1e-8, "{report:?}");
        assert!(report.max_imaginary < 1e-10, "{report:?}");
    }

    #[test]
    fn schrodinger_trajectory_makes_q_stationary() {
        use crate::wave::fields::WaveField;
        use crate::wave::tdse::{evolve_tdse, gaussian_packet, EvolveOptions};
        use num_complex::Complex;

        // The time integral is a trapezoid sum, so the perturbation window
        // must be long against dt for discrete integration by parts to hold.
        let grid = SpatialGrid::new(10.0, 256, 0.01, 200).unwrap();
        let params = PhysicalParams::natural(Potential::Harmonic {
            omega: 1.0,
            center: 0.0,
        });
        let psi0 = gaussian_packet(&grid, 1.0, 0.8, 0.5, 1.0);
        let opts = EvolveOptions {
            laplacian_order: 8,
            ..Default::default()
        };
        let traj = evolve_tdse(&psi0, &params, &grid, &opts).unwrap();
        let tgrid = traj.grid;
        let q = |psi: &WaveField<f64>| functional_q(psi, &params, &tgrid).unwrap().re;
        let mut rng = EventRng::new(99);
        for _ in 0..20 {
            let (centre, width, k) = (rng.uniform() * 4.0 - 2.0, 0.5 + rng.uniform(), rng.uniform() * 2.0);
            let phase = rng.uniform() * std::f64::consts::TAU;
            let n_t = tgrid.n_t;
            let mut delta: Vec<Complex<f64>> = (0..tgrid.points())
                .map(|idx| {
                    let (tau, i) = (idx / tgrid.n_x, idx % tgrid.n_x);
                    let window = (std::f64::consts::PI * tau as f64 / (n_t - 1) as f64).sin().powi(2);
                    let d = tgrid.x(i) - centre;
                    Complex::from_polar(window * (-d * d / (2.0 * width * width)).exp(), k * tgrid.x(i) + phase)
                })
                .collect();
            let size = tgrid
                .integrate(&delta.iter().map(|z| z.norm_sqr()).collect::<Vec<_>>())
                .sqrt();
            for z in &mut delta {
                *z = *z * (1e-4 / size);
            }
            let shifted = |sign: f64| {
                let psi = traj.field.psi.iter().zip(&delta).map(|(a, d)| a + d * sign).collect();
                WaveField::new(tgrid.n_x, n_t, psi).unwrap()
            };
            let first_order = (q(&shifted(1.0)) - q(&shifted(-1.0))) / 2.0;
            assert!(first_order.abs() < 1e-6, "first-order change {first_order}");
        }
    }

    #[test]
    fn random_fields_are_normalized() {
        let grid = fq_grid::<f64>();
        let mut rng = EventRng::new(1);
        for _ in 0..10 {
            let field = random_smooth_field(&grid, &mut rng).unwrap();
            assert!(field.normalization_error(&grid) < 1e-8);
        }
    }

    #[test]
    fn low_order_stencils_break_the_equivalence() {
        // The identity holds in the continuum; coarse differences only
        // reproduce it to their truncation error.
        let grid = fq_grid::<f64>().with_orders(2, 2).unwrap();
        let report = check_f_equals_q::<f64>(5, 3, &grid).unwrap();
        assert!(report.max_relative > 1e-6, "{report:?}");
    }
}
