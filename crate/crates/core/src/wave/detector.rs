use serde::{Deserialize, Serialize};

use super::fields::PolarField;
use super::grid::SpatialGrid;
use super::PROBABILITY_FLOOR;
use crate::error::{Error, Result};
use crate::num::{count, lit, to_f64, Real};
use crate::rng::{Categorical, EventRng};

/// Click counts of `2 K_det + 1` detectors over `M` time slices, `N` particles
/// per slice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorData {
    pub k_det: usize,
    pub n_repeats: u64,
    /// `clicks[τ][j + K_det]` for `j ∈ [-K_det, K_det]`.
    pub clicks: Vec<Vec<u64>>,
}

impl DetectorData {
    pub fn new(k_det: usize, n_repeats: u64, clicks: Vec<Vec<u64>>) -> Result<Self> {
        for (tau, row) in clicks.iter().enumerate() {
            if row.len() != 2 * k_det + 1 {
                return Err(Error::MismatchedDimensions {
                    expected: 2 * k_det + 1,
                    actual: row.len(),
                });
            }
            let total: u64 = row.iter().sum();
            if total != n_repeats {
                return Err(Error::CorruptData(format!(
                    "slice {tau} holds {total} clicks, expected {n_repeats}"
                )));
            }
        }
        Ok(Self {
            k_det,
            n_repeats,
            clicks,
        })
    }

    pub fn slices(&self) -> usize {
        self.clicks.len()
    }

    /// Count of detector `j` at slice `tau`.
    pub fn get(&self, j: i64, tau: usize) -> u64 {
        self.clicks[tau][(j + self.k_det as i64) as usize]
    }
}

/// Bin width `2L / (2 K_det + 1)`, so the bins tile `[-L, L]` exactly.
pub fn bin_width<T: Real>(grid: &SpatialGrid<T>, k_det: usize) -> T {
    lit::<T>(2.0) * grid.half_extent / count((2 * k_det + 1) as u64)
}

/// Bin masses of one density slice: exact integrals of its piecewise-linear
/// interpolant, renormalized to sum to one.
pub fn bin_probabilities<T: Real>(p: &[T], grid: &SpatialGrid<T>, k_det: usize) -> Vec<T> {
    let bins = 2 * k_det + 1;
    let width = bin_width(grid, k_det);
    let dx = grid.dx();
    let mut mass = vec![T::zero(); bins];
    let bin_of = |x: T| -> usize {
        let b = ((x + grid.half_extent) / width).floor();
        (to_f64(b).max(0.0) as usize).min(bins - 1)
    };
    for i in 0..grid.n_x - 1 {
        let (x0, x1) = (grid.x(i), grid.x(i + 1));
        let (p0, p1) = (p[i], p[i + 1]);
        // Integral of the linear interpolant over [a, b] within [x0, x1].
        let segment = |a: T, b: T| {
            let pa = p0 + (p1 - p0) * (a - x0) / dx;
            let pb = p0 + (p1 - p0) * (b - x0) / dx;
            lit::<T>(0.5) * (pa + pb) * (b - a)
        };
        let (first, last) = (bin_of(x0), bin_of(x1));
        let mut a = x0;
        for (b_idx, m) in mass.iter_mut().enumerate().take(last + 1).skip(first) {
            let edge = -grid.half_extent + width * count((b_idx + 1) as u64);
            let b = if b_idx == last { x1 } else { edge.min(x1) };
            *m += segment(a, b);
            a = b;
        }
    }
    let total: T = mass.iter().copied().sum();
    mass.iter().map(|&m| m / total).collect()
}

/// Draws `n` detector clicks per time slice from the bin masses of `p_true`.
/// Slice `τ` uses its own stream of `seed`, so results do not depend on
/// evaluation order.
pub fn simulate_detector_clicks<T: Real>(
    p_true: &PolarField<T>,
    grid: &SpatialGrid<T>,
    k_det: usize,
    n: u64,
    seed: u64,
) -> Result<DetectorData> {
    if p_true.n_x != grid.n_x {
        return Err(Error::MismatchedDimensions {
            expected: grid.n_x,
            actual: p_true.n_x,
        });
    }
    let clicks = (0..p_true.n_t)
        .map(|tau| {
            let probs: Vec<f64> = bin_probabilities(p_true.p_slice(tau), grid, k_det)
                .into_iter()
                .map(to_f64)
                .collect();
            let cat = Categorical::new(&probs);
            let mut rng = EventRng::for_repeat(seed, tau as u64);
            let mut row = vec![0u64; probs.len()];
            for _ in 0..n {
                row[cat.sample(&mut rng)] += 1;
            }
            row
        })
        .collect();
    DetectorData::new(k_det, n, clicks)
}

/// `Σ_τ Σ_j (∂P/∂X)² / P` for a data model `X ↦ P[τ][j]`, with a centered
/// difference of step `dx_param`. Bins at or below the probability floor
/// are skipped.
pub fn fisher_discrete<T: Real>(model: impl Fn(T) -> Vec<Vec<T>>, x_param: T, dx_param: T) -> Result<T> {
    if !(dx_param > T::zero()) {
        return Err(Error::InvalidInput("difference step must be positive".into()));
    }
    let (centre, plus, minus) = (model(x_param), model(x_param + dx_param), model(x_param - dx_param));
    let floor = lit::<T>(PROBABILITY_FLOOR);
    let two = lit::<T>(2.0);
    let mut total = T::zero();
    let mut used = 0usize;
    for ((p, pp), pm) in centre.iter().zip(&plus).zip(&minus) {
        if p.len() != pp.len() || p.len() != pm.len() {
            return Err(Error::MismatchedDimensions {
                expected: p.len(),
                actual: pp.len().min(pm.len()),
            });
        }
        for ((&v, &vp), &vm) in p.iter().zip(pp).zip(pm) {
            if !(v >= T::zero()) || !v.is_finite() {
                return Err(Error::DegenerateProbability(format!("bin probability {v}")));
            }
            if v <= floor {
                continue;
            }
            let d = (vp - vm) / (two * dx_param);
            total += d * d / v;
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::DegenerateProbability("every bin is below the floor".into()));
    }
    Ok(total)
}
