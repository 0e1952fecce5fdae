use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{count, lit, Real};

/// Default accuracy order of spatial finite differences.
pub const DEFAULT_SPACE_ORDER: usize = 8;
/// Default accuracy order of temporal finite differences (capped by the
/// number of slices).
pub const DEFAULT_TIME_ORDER: usize = 6;

/// Uniform space-time grid: `n_x` points on `[-L, L]` and `n_t` slices
/// spaced `dt` apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid<T> {
    pub half_extent: T,
    pub n_x: usize,
    pub dt: T,
    pub n_t: usize,
    /// Accuracy order of `d/dx` and `d²/dx²`.
    pub space_order: usize,
    /// Accuracy order of `d/dt`.
    pub time_order: usize,
}

impl<T: Real> SpatialGrid<T> {
    pub fn new(half_extent: T, n_x: usize, dt: T, n_t: usize) -> Result<Self> {
        Self {
            half_extent,
            n_x,
            dt,
            n_t,
            space_order: DEFAULT_SPACE_ORDER,
            time_order: DEFAULT_TIME_ORDER,
        }
        .validated()
    }

    pub fn with_orders(mut self, space_order: usize, time_order: usize) -> Result<Self> {
        self.space_order = space_order;
        self.time_order = time_order;
        self.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.half_extent > T::zero()) || !self.half_extent.is_finite() {
            return Err(Error::InvalidInput("grid half-extent must be positive".into()));
        }
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(Error::InvalidInput("time step must be positive".into()));
        }
        if self.n_x < 16 {
            return Err(Error::InvalidInput(format!("n_x = {} < 16", self.n_x)));
        }
        if self.n_t == 0 {
            return Err(Error::InvalidInput("n_t must be at least 1".into()));
        }
        if self.space_order < 2 || self.space_order % 2 == 1 || self.time_order < 1 {
            return Err(Error::InvalidInput(
                "stencil orders: space must be even and >= 2, time >= 1".into(),
            ));
        }
        Ok(self)
    }

    pub fn dx(&self) -> T {
        lit::<T>(2.0) * self.half_extent / count(self.n_x as u64 - 1)
    }

    pub fn x(&self, i: usize) -> T {
        -self.half_extent + self.dx() * count(i as u64)
    }

    pub fn xs(&self) -> Vec<T> {
        (0..self.n_x).map(|i| self.x(i)).collect()
    }

    pub fn t(&self, slice: usize) -> T {
        self.dt * count(slice as u64)
    }

    pub fn points(&self) -> usize {
        self.n_x * self.n_t
    }

    /// Trapezoid weights along x.
    pub fn space_weights(&self) -> Vec<T> {
        trapezoid_weights(self.n_x, self.dx())
    }

    /// Trapezoid weights along t; a single slice has unit weight.
    pub fn time_weights(&self) -> Vec<T> {
        if self.n_t == 1 {
            vec![T::one()]
        } else {
            trapezoid_weights(self.n_t, self.dt)
        }
    }

    pub fn d_dx(&self) -> DiffOperator<T> {
        DiffOperator::new(self.n_x, self.dx(), 1, self.space_order)
    }

    pub fn d2_dx2(&self) -> DiffOperator<T> {
        DiffOperator::new(self.n_x, self.dx(), 2, self.space_order)
    }

    /// `None` for a single slice, where time derivatives are taken as zero.
    pub fn d_dt(&self) -> Option<DiffOperator<T>> {
        (self.n_t > 1).then(|| DiffOperator::new(self.n_t, self.dt, 1, self.time_order))
    }

    /// Trapezoid quadrature of a `n_t × n_x` field stored slice-major.
    pub fn integrate(&self, field: &[T]) -> T {
        let wx = self.space_weights();
        let wt = self.time_weights();
        field
            .chunks(self.n_x)
            .zip(&wt)
            .map(|(row, &w)| w * row.iter().zip(&wx).map(|(&f, &v)| f * v).sum::<T>())
            .sum()
    }

    /// Trapezoid integral of one slice.
    pub fn integrate_slice(&self, row: &[T]) -> T {
        row.iter().zip(self.space_weights()).map(|(&f, w)| f * w).sum()
    }
}

fn trapezoid_weights<T: Real>(n: usize, h: T) -> Vec<T> {
    let mut w = vec![h; n];
    w[0] = h * lit(0.5);
    w[n - 1] = h * lit(0.5);
    w
}

/// Finite-difference weights for derivatives `0..=max_order` at `z` on
/// arbitrary nodes (Fornberg's recursion). Indexed `[order][node]`.
pub fn fornberg_weights(z: f64, nodes: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; n]; max_order + 1];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - z;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Derivative of order 1 or 2 on `n` equispaced points. Interior points use
/// centered stencils of the requested accuracy; points near the ends use
/// shifted stencils of the same order (fewer if `n` is too small).
#[derive(Debug, Clone)]
pub struct DiffOperator<T> {
    rows: Vec<(usize, Vec<T>)>,
}

impl<T: Real> DiffOperator<T> {
    pub fn new(n: usize, h: T, derivative: usize, accuracy: usize) -> Self {
        assert!((1..=2).contains(&derivative) && n > derivative);
        let half = accuracy.div_ceil(2);
        let boundary_width = (2 * half + derivative).min(n);
        let centered_width = 2 * half + 1;
        let scale = crate::num::to_f64(h).powi(derivative as i32);
        let mut cache: Vec<(usize, usize, Vec<T>)> = Vec::new();
        let rows = (0..n)
            .map(|i| {
                let (start, width) = if i >= half && i + half < n && centered_width <= n {
                    (i - half, centered_width)
                } else {
                    let start = i.saturating_sub(half).min(n - boundary_width);
                    (start, boundary_width)
                };
                let offset = i - start;
                if let Some((_, _, w)) = cache.iter().find(|(o, wd, _)| *o == offset && *wd == width) {
                    return (start, w.clone());
                }
                let nodes: Vec<f64> = (0..width).map(|k| k as f64).collect();
                let w: Vec<T> = fornberg_weights(offset as f64, &nodes, derivative)[derivative]
                    .iter()
                    .map(|&v| lit(v / scale))
                    .collect();
                cache.push((offset, width, w.clone()));
                (start, w)
            })
            .collect();
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Derivative at one index of values `f(k)` supplied by a closure.
    pub fn at<V>(&self, i: usize, f: impl Fn(usize) -> V) -> V
    where
        V: Copy + std::ops::Mul<T, Output = V> + std::iter::Sum<V>,
    {
        let (start, w) = &self.rows[i];
        w.iter().enumerate().map(|(k, &wk)| f(start + k) * wk).sum()
    }

    pub fn apply<V>(&self, f: &[V]) -> Vec<V>
    where
        V: Copy + std::ops::Mul<T, Output = V> + std::iter::Sum<V>,
    {
        assert_eq!(f.len(), self.rows.len());
        (0..f.len()).map(|i| self.at(i, |k| f[k])).collect()
    }

    /// Applies along x to every slice of a slice-major field.
    pub fn apply_rows<V>(&self, field: &[V]) -> Vec<V>
    where
        V: Copy + std::ops::Mul<T, Output = V> + std::iter::Sum<V>,
    {
        field.chunks(self.len()).flat_map(|row| self.apply(row)).collect()
    }

    /// Applies along t to every column of a slice-major field with `n_x` columns.
    pub fn apply_columns<V>(&self, field: &[V], n_x: usize) -> Vec<V>
    where
        V: Copy + std::ops::Mul<T, Output = V> + std::iter::Sum<V>,
    {
        let n_t = self.len();
        assert_eq!(field.len(), n_t * n_x);
        let mut out = Vec::with_capacity(field.len());
        for t in 0..n_t {
            for i in 0..n_x {
                out.push(self.at(t, |s| field[s * n_x + i]));
            }
        }
        out
    }
}
