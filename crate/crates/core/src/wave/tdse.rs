use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::fields::{PhysicalParams, WaveField};
use super::grid::{fornberg_weights, SpatialGrid};
use crate::error::{Error, Result};
use crate::num::{count, lit, to_f64, Real};

/// Options of [`evolve_tdse`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    /// Time steps to take; defaults to the grid's `n_t`.
    pub steps: Option<usize>,
    /// Store every `stride`-th step (the initial state is always stored).
    pub stride: usize,
    /// Accuracy order of the discrete Laplacian.
    pub laplacian_order: usize,
    /// Stop with `BoundaryContact` when this much mass sits within
    /// `boundary_cells` of either wall. `None` disables the check.
    pub boundary_mass: Option<f64>,
    pub boundary_cells: usize,
    /// Stop with `UnstableStep` when the norm drifts further than this.
    pub norm_drift_limit: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            steps: None,
            stride: 1,
            laplacian_order: 4,
            boundary_mass: Some(1e-6),
            boundary_cells: 5,
            norm_drift_limit: 1e-8,
        }
    }
}

/// Stored snapshots and the grid they live on (`dt` is the snapshot
/// spacing).
#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub grid: SpatialGrid<T>,
    pub times: Vec<T>,
    pub field: WaveField<T>,
    pub max_norm_drift: T,
}

/// Complex banded matrix with LU factors stored in place (no pivoting).
#[derive(Debug, Clone)]
struct BandedLu<T> {
    n: usize,
    p: usize,
    a: Vec<Complex<T>>,
}

impl<T: Real> BandedLu<T> {
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (2 * self.p + 1) + (j + self.p - i)
    }

    /// Factors `a`, whose Hermitian part must be positive definite.
    fn factor(n: usize, p: usize, a: Vec<Complex<T>>) -> Self {
        let mut m = Self { n, p, a };
        for k in 0..n {
            let pivot = m.a[m.idx(k, k)];
            for i in k + 1..n.min(k + p + 1) {
                let ik = m.idx(i, k);
                let l = m.a[ik] / pivot;
                m.a[ik] = l;
                for j in k + 1..n.min(k + p + 1) {
                    let (ij, kj) = (m.idx(i, j), m.idx(k, j));
                    let v = m.a[kj];
                    m.a[ij] -= l * v;
                }
            }
        }
        m
    }

    fn solve(&self, b: &mut [Complex<T>]) {
        let (n, p) = (self.n, self.p);
        for i in 0..n {
            let mut v = b[i];
            for k in i.saturating_sub(p)..i {
                v -= self.a[self.idx(i, k)] * b[k];
            }
            b[i] = v;
        }
        for i in (0..n).rev() {
            let mut v = b[i];
            for j in i + 1..n.min(i + p + 1) {
                v -= self.a[self.idx(i, j)] * b[j];
            }
            b[i] = v / self.a[self.idx(i, i)];
        }
    }
}

/// `H = -(2/(mλ)) ∂² + V` on the interior points with hard walls.
#[derive(Debug, Clone)]
pub struct Hamiltonian<T> {
    kinetic: Vec<T>,
    diagonal: Vec<T>,
}

impl<T: Real> Hamiltonian<T> {
    pub fn new(params: &PhysicalParams<T>, grid: &SpatialGrid<T>, laplacian_order: usize, t: T) -> Self {
        let half = laplacian_order.div_ceil(2).max(1);
        let nodes: Vec<f64> = (0..=2 * half).map(|k| k as f64 - half as f64).collect();
        let dx = to_f64(grid.dx());
        let prefactor = -2.0 / to_f64(params.mass * params.lambda) / (dx * dx);
        let kinetic = fornberg_weights(0.0, &nodes, 2)[2][half..]
            .iter()
            .map(|&w| lit(prefactor * w))
            .collect();
        let diagonal = (1..grid.n_x - 1)
            .map(|i| params.potential_at(i, grid.x(i), t))
            .collect();
        Self { kinetic, diagonal }
    }

    fn bandwidth(&self) -> usize {
        self.kinetic.len() - 1
    }

    fn interior(&self) -> usize {
        self.diagonal.len()
    }

    /// `Hψ` on the interior.
    pub fn apply(&self, psi: &[Complex<T>]) -> Vec<Complex<T>> {
        let n = self.interior();
        let p = self.bandwidth();
        (0..n)
            .map(|i| {
                let mut v = psi[i] * (self.kinetic[0] + self.diagonal[i]);
                for d in 1..=p {
                    if i >= d {
                        v += psi[i - d] * self.kinetic[d];
                    }
                    if i + d < n {
                        v += psi[i + d] * self.kinetic[d];
                    }
                }
                v
            })
            .collect()
    }

    /// Band of `I + i·c·H`.
    fn cayley_band(&self, c: T) -> Vec<Complex<T>> {
        let n = self.interior();
        let p = self.bandwidth();
        let mut band = vec![Complex::new(T::zero(), T::zero()); n * (2 * p + 1)];
        for i in 0..n {
            for j in i.saturating_sub(p)..n.min(i + p + 1) {
                let d = i.abs_diff(j);
                let h = self.kinetic[d] + if d == 0 { self.diagonal[i] } else { T::zero() };
                let one = if d == 0 { T::one() } else { T::zero() };
                band[i * (2 * p + 1) + (j + p - i)] = Complex::new(one, c * h);
            }
        }
        band
    }
}

/// `<ψ|H|ψ> / <ψ|ψ>` for one slice, with the discrete `H` used by the stepper.
pub fn energy<T: Real>(
    psi: &[Complex<T>],
    params: &PhysicalParams<T>,
    grid: &SpatialGrid<T>,
    laplacian_order: usize,
    t: T,
) -> T {
    let h = Hamiltonian::new(params, grid, laplacian_order, t);
    let interior = &psi[1..grid.n_x - 1];
    let hpsi = h.apply(interior);
    let num: Complex<T> = interior.iter().zip(&hpsi).map(|(a, b)| a.conj() * b).sum();
    let den: T = interior.iter().map(|z| z.norm_sqr()).sum();
    num.re / den
}

fn discrete_norm<T: Real>(psi: &[Complex<T>], dx: T) -> T {
    dx * psi.iter().map(|z| z.norm_sqr()).sum::<T>()
}

fn wall_mass<T: Real>(psi: &[Complex<T>], dx: T, cells: usize) -> T {
    let n = psi.len();
    let cells = cells.min(n / 2);
    dx * psi[..cells]
        .iter()
        .chain(&psi[n - cells..])
        .map(|z| z.norm_sqr())
        .sum::<T>()
}

/// Integrates `(2i/√λ) ∂ψ/∂t = -(2/(mλ)) ∂²ψ/∂x² + Vψ` with Crank-Nicolson
/// steps and hard walls at `±L`.
///
/// The stepper is unitary and has no stability limit; accuracy needs
/// `dt·|E|·√λ/2 ≪ 1` for the energies `E` present, and `dx` small against
/// the shortest wavelength. The first slice of `psi0` is the initial state;
/// its end points are set to zero.
pub fn evolve_tdse<T: Real>(
    psi0: &WaveField<T>,
    params: &PhysicalParams<T>,
    grid: &SpatialGrid<T>,
    options: &EvolveOptions,
) -> Result<Trajectory<T>> {
    if psi0.n_x != grid.n_x {
        return Err(Error::MismatchedDimensions {
            expected: grid.n_x,
            actual: psi0.n_x,
        });
    }
    if options.stride == 0 || options.laplacian_order < 2 {
        return Err(Error::InvalidInput(
            "stride and Laplacian order must be positive".into(),
        ));
    }
    let steps = options.steps.unwrap_or(grid.n_t);
    let n = grid.n_x;
    let dx = grid.dx();
    let mut psi: Vec<Complex<T>> = psi0.slice(0).to_vec();
    psi[0] = Complex::new(T::zero(), T::zero());
    psi[n - 1] = psi[0];
    let norm0 = discrete_norm(&psi, dx);
    if !(norm0 > T::zero()) {
        return Err(Error::InvalidInput("initial state has zero norm".into()));
    }

    let c = params.lambda.sqrt() * grid.dt * lit(0.25);
    let factor = |t: T| {
        let h = Hamiltonian::new(params, grid, options.laplacian_order, t);
        let lu = BandedLu::factor(n - 2, h.bandwidth(), h.cayley_band(c));
        (h, lu)
    };
    let half_dt = grid.dt * lit(0.5);
    let (mut h, mut lu) = factor(half_dt);
    let time_dependent = params.potential.is_time_dependent();

    let mut stored = psi.clone();
    let mut times = vec![T::zero()];
    let mut max_drift = T::zero();
    let drift_limit = lit::<T>(options.norm_drift_limit);
    let i_c = Complex::new(T::zero(), c);
    for step in 1..=steps {
        if time_dependent && step > 1 {
            (h, lu) = factor(grid.t(step - 1) + half_dt);
        }
        let interior = &psi[1..n - 1];
        let hpsi = h.apply(interior);
        let mut rhs: Vec<Complex<T>> = interior.iter().zip(&hpsi).map(|(&z, &hz)| z - i_c * hz).collect();
        lu.solve(&mut rhs);
        psi[1..n - 1].copy_from_slice(&rhs);

        let drift = (discrete_norm(&psi, dx) - norm0).abs() / norm0;
        max_drift = max_drift.max(drift);
        if !(drift <= drift_limit) {
            return Err(Error::UnstableStep {
                step,
                drift: to_f64(drift),
            });
        }
        if let Some(limit) = options.boundary_mass {
            let mass = wall_mass(&psi, dx, options.boundary_cells) / norm0;
            if mass > lit(limit) {
                return Err(Error::BoundaryContact {
                    step,
                    mass: to_f64(mass),
                });
            }
        }
        if step % options.stride == 0 {
            stored.extend_from_slice(&psi);
            times.push(grid.t(step));
        }
    }
    let snapshots = times.len();
    let snapshot_grid = SpatialGrid {
        dt: grid.dt * count(options.stride as u64),
        n_t: snapshots,
        ..*grid
    };
    Ok(Trajectory {
        grid: snapshot_grid,
        times,
        field: WaveField::new(n, snapshots, stored)?,
        max_norm_drift: max_drift,
    })
}

/// Normalized Gaussian packet `exp(-(x-x0)²/(4σ²) + i p x/ħ)`.
pub fn gaussian_packet<T: Real>(grid: &SpatialGrid<T>, x0: T, sigma: T, momentum: T, hbar: T) -> WaveField<T> {
    let mut psi = WaveField::from_fn(grid, |x| {
        let d = x - x0;
        Complex::from_polar((-d * d / (lit::<T>(4.0) * sigma * sigma)).exp(), momentum * x / hbar)
    });
    psi.normalize(grid);
    psi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wave::fields::Potential;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn banded_solver_matches_dense_product() {
        let n = 12;
        let p = 2;
        let mut band = vec![Complex::new(0.0, 0.0); n * (2 * p + 1)];
        let entry = |i: usize, j: usize| {
            if i == j {
                Complex::new(1.0, 0.3 + i as f64 * 0.1)
            } else {
                Complex::new(0.0, 0.2 / (1.0 + i.abs_diff(j) as f64))
            }
        };
        for i in 0..n {
            for j in i.saturating_sub(p)..n.min(i + p + 1) {
                band[i * (2 * p + 1) + (j + p - i)] = entry(i, j);
            }
        }
        let lu = BandedLu::factor(n, p, band);
        let x: Vec<Complex<f64>> = (0..n).map(|i| Complex::new(i as f64, 1.0 - i as f64)).collect();
        let mut b: Vec<Complex<f64>> = (0..n)
            .map(|i| {
                (i.saturating_sub(p)..n.min(i + p + 1))
                    .map(|j| entry(i, j) * x[j])
                    .sum()
            })
            .collect();
        lu.solve(&mut b);
        for (a, e) in b.iter().zip(&x) {
            assert!((a - e).norm() < 1e-12);
        }
    }

    fn ho_ground(grid: &SpatialGrid<f64>, x0: f64) -> WaveField<f64> {
        WaveField::from_fn(grid, |x| {
            Complex::new((-(x - x0) * (x - x0) / 2.0).exp() / PI.powf(0.25), 0.0)
        })
    }

    #[test]
    fn harmonic_ground_state_returns_after_one_period() {
        let grid = SpatialGrid::new(10.0, 801, 2.0 * PI / 2000.0, 2000).unwrap();
        let params = PhysicalParams::natural(Potential::Harmonic {
            omega: 1.0,
            center: 0.0,
        });
        let psi0 = ho_ground(&grid, 0.0);
        let opts = EvolveOptions {
            stride: 2000,
            ..Default::default()
        };
        let traj = evolve_tdse(&psi0, &params, &grid, &opts).unwrap();
        assert_eq!(traj.times.len(), 2);
        let fidelity = psi0.fidelity(&WaveField::new(801, 1, traj.field.slice(1).to_vec()).unwrap(), &grid, 0);
        assert!(fidelity > 1.0 - 1e-6, "fidelity {fidelity}");
    }

    #[test]
    fn coherent_state_returns_after_one_period() {
        let grid = SpatialGrid::new(10.0, 1001, 2.0 * PI / 4000.0, 4000).unwrap();
        let params = PhysicalParams::natural(Potential::Harmonic {
            omega: 1.0,
            center: 0.0,
        });
        let psi0 = ho_ground(&grid, 1.5);
        let opts = EvolveOptions {
            stride: 1000,
            ..Default::default()
        };
        let traj = evolve_tdse(&psi0, &params, &grid, &opts).unwrap();
        let half = WaveField::new(1001, 1, traj.field.slice(2).to_vec()).unwrap();
        assert_abs_diff_eq!(half.mean_x(&grid, 0), -1.5, epsilon = 1e-4);
        let end = WaveField::new(1001, 1, traj.field.slice(4).to_vec()).unwrap();
        assert!(psi0.fidelity(&end, &grid, 0) > 1.0 - 1e-6);
    }

    #[test]
    fn free_packet_width_law() {
        let sigma0: f64 = 1.0;
        let grid = SpatialGrid::new(20.0, 1601, 0.01, 400).unwrap();
        let params = PhysicalParams::natural(Potential::Free);
        let psi0 = gaussian_packet(&grid, 0.0, sigma0, 0.0, 1.0);
        let opts = EvolveOptions {
            stride: 100,
            ..Default::default()
        };
        let traj = evolve_tdse(&psi0, &params, &grid, &opts).unwrap();
        for (k, &t) in traj.times.iter().enumerate() {
            let width2 = traj.field.variance_x(&traj.grid, k);
            let expected = sigma0 * sigma0 * (1.0 + (t / (2.0 * sigma0 * sigma0)).powi(2));
            assert!(
                ((width2 - expected) / expected).abs() < 1e-4,
                "t = {t}: {width2} vs {expected}"
            );
        }
    }

    #[test]
    fn ehrenfest_drift() {
        let p: f64 = 0.5;
        let grid = SpatialGrid::new(20.0, 1601, 0.01, 800).unwrap();
        let params = PhysicalParams::natural(Potential::Free);
        let psi0 = gaussian_packet(&grid, -2.0, 1.0, p, 1.0);
        let opts = EvolveOptions {
            stride: 800,
            ..Default::default()
        };
        let traj = evolve_tdse(&psi0, &params, &grid, &opts).unwrap();
        let v = (traj.field.mean_x(&grid, 1) - traj.field.mean_x(&grid, 0)) / traj.times[1];
        assert!(((v - p) / p).abs() < 1e-4, "velocity {v}");
    }

    #[test]
    fn norm_and_energy_conserved_over_ten_thousand_steps() {
        let grid = SpatialGrid::new(10.0, 401, 0.005, 10_000).unwrap();
        let params = PhysicalParams::natural(Potential::Harmonic {
            omega: 1.0,
            center: 0.0,
        });
        let psi0 = gaussian_packet(&grid, 1.0, 0.8, 0.3, 1.0);
        let opts = EvolveOptions {
            stride: 10_000,
            ..Default::default()
        };
        let traj = evolve_tdse(&psi0, &params, &grid, &opts).unwrap();
        assert!(traj.max_norm_drift < 1e-10, "drift {}", traj.max_norm_drift);
        let e0: f64 = energy(traj.field.slice(0), &params, &grid, 4, 0.0);
        let e1 = energy(traj.field.slice(1), &params, &grid, 4, 0.0);
        assert!(((e1 - e0) / e0).abs() < 1e-8);
    }

    #[test]
    fn lambda_rescaling_gives_identical_trajectories() {
        let c = 3.0;
        let grid = SpatialGrid::new(8.0, 301, 0.01, 200).unwrap();
        let v = |s: f64| Potential::Harmonic { omega: s, center: 0.5 };
        let a = PhysicalParams::new(1.0, 4.0, v(1.0)).unwrap();
        // V scales by c², so ω by c.
        let b = PhysicalParams::new(1.0, 4.0 / (c * c), v(c)).unwrap();
        let grid_b = SpatialGrid {
            dt: grid.dt / c,
            ..grid
        };
        let psi0 = gaussian_packet(&grid, 0.0, 0.9, 0.4, 1.0);
        let opts = EvolveOptions {
            stride: 50,
            ..Default::default()
        };
        let ta = evolve_tdse(&psi0, &a, &grid, &opts).unwrap();
        let tb = evolve_tdse(&psi0, &b, &grid_b, &opts).unwrap();
        let diff = ta
            .field
            .psi
            .iter()
            .zip(&tb.field.psi)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-10, "max difference {diff}");
    }

    #[test]
    fn boundary_contact_is_reported() {
        let grid = SpatialGrid::new(5.0, 201, 0.01, 2000).unwrap();
        let psi0 = gaussian_packet(&grid, 0.0, 0.5, 3.0, 1.0);
        let err = evolve_tdse(
            &psi0,
            &PhysicalParams::natural(Potential::Free),
            &grid,
            &EvolveOptions::default(),
        );
        assert!(matches!(err, Err(Error::BoundaryContact { .. })));
    }

    #[test]
    fn stepper_runs_in_single_precision() {
        let grid = SpatialGrid::new(8.0f32, 201, 0.01, 100).unwrap();
        let psi0 = gaussian_packet(&grid, 0.0, 1.0, 0.0, 1.0);
        let opts = EvolveOptions {
            stride: 100,
            norm_drift_limit: 1e-4,
            ..Default::default()
        };
        let traj = evolve_tdse(&psi0, &PhysicalParams::natural(Potential::Free), &grid, &opts).unwrap();
        assert!((traj.field.norm(&grid, 1) - 1.0).abs() < 1e-4);
    }
}
