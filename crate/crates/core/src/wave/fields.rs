use std::fmt;
use std::sync::Arc;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::grid::SpatialGrid;
use super::PROBABILITY_FLOOR;
use crate::error::{Error, Result};
use crate::num::{lit, Real};

/// Density `P` and action `S` on a space-time grid, slice-major. `S` is only
/// meaningful where `valid` is set; it is defined up to an additive constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarField<T> {
    pub n_x: usize,
    pub n_t: usize,
    pub p: Vec<T>,
    pub s: Vec<T>,
    pub valid: Vec<bool>,
}

impl<T: Real> PolarField<T> {
    pub fn new(n_x: usize, n_t: usize, p: Vec<T>, s: Vec<T>) -> Result<Self> {
        let points = n_x * n_t;
        for len in [p.len(), s.len()] {
            if len != points {
                return Err(Error::MismatchedDimensions {
                    expected: points,
                    actual: len,
                });
            }
        }
        if let Some(bad) = p.iter().find(|v| !(**v >= T::zero()) || !v.is_finite()) {
            return Err(Error::DegenerateProbability(format!("density value {bad}")));
        }
        Ok(Self {
            n_x,
            n_t,
            p,
            s,
            valid: vec![true; points],
        })
    }

    /// Tabulates `P(x, t)` and `S(x, t)` on the grid.
    pub fn from_fn(grid: &SpatialGrid<T>, p: impl Fn(T, T) -> T, s: impl Fn(T, T) -> T) -> Result<Self> {
        let mut pv = Vec::with_capacity(grid.points());
        let mut sv = Vec::with_capacity(grid.points());
        for tau in 0..grid.n_t {
            let t = grid.t(tau);
            for i in 0..grid.n_x {
                let x = grid.x(i);
                pv.push(p(x, t));
                sv.push(s(x, t));
            }
        }
        Self::new(grid.n_x, grid.n_t, pv, sv)
    }

    pub fn p_slice(&self, tau: usize) -> &[T] {
        &self.p[tau * self.n_x..(tau + 1) * self.n_x]
    }

    pub fn s_slice(&self, tau: usize) -> &[T] {
        &self.s[tau * self.n_x..(tau + 1) * self.n_x]
    }

    pub fn masked_count(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }

    /// Fails if any phase value is undefined.
    pub fn require_phase(&self) -> Result<()> {
        match self.masked_count() {
            0 => Ok(()),
            count => Err(Error::PhaseUndefined { count }),
        }
    }

    /// Largest `|∫P dx - 1|` over slices.
    pub fn normalization_error(&self, grid: &SpatialGrid<T>) -> T {
        (0..self.n_t)
            .map(|tau| (grid.integrate_slice(self.p_slice(tau)) - T::one()).abs())
            .fold(T::zero(), T::max)
    }

    /// Rescales every slice to unit mass.
    pub fn normalize(&mut self, grid: &SpatialGrid<T>) {
        for tau in 0..self.n_t {
            let mass = grid.integrate_slice(self.p_slice(tau));
            for v in &mut self.p[tau * self.n_x..(tau + 1) * self.n_x] {
                *v /= mass;
            }
        }
    }
}

/// Complex wave function on a space-time grid, slice-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveField<T> {
    pub n_x: usize,
    pub n_t: usize,
    pub psi: Vec<Complex<T>>,
}

impl<T: Real> WaveField<T> {
    pub fn new(n_x: usize, n_t: usize, psi: Vec<Complex<T>>) -> Result<Self> {
        if psi.len() != n_x * n_t {
            return Err(Error::MismatchedDimensions {
                expected: n_x * n_t,
                actual: psi.len(),
            });
        }
        Ok(Self { n_x, n_t, psi })
    }

    /// One slice from `psi(x)` sampled on the grid.
    pub fn from_fn(grid: &SpatialGrid<T>, psi: impl Fn(T) -> Complex<T>) -> Self {
        Self {
            n_x: grid.n_x,
            n_t: 1,
            psi: grid.xs().into_iter().map(psi).collect(),
        }
    }

    pub fn slice(&self, tau: usize) -> &[Complex<T>] {
        &self.psi[tau * self.n_x..(tau + 1) * self.n_x]
    }

    /// `∫|ψ|² dx` of one slice.
    pub fn norm(&self, grid: &SpatialGrid<T>, tau: usize) -> T {
        grid.integrate_slice(&self.slice(tau).iter().map(|z| z.norm_sqr()).collect::<Vec<_>>())
    }

    /// Rescales every slice to unit norm.
    pub fn normalize(&mut self, grid: &SpatialGrid<T>) {
        for tau in 0..self.n_t {
            let scale = self.norm(grid, tau).sqrt().recip();
            for z in &mut self.psi[tau * self.n_x..(tau + 1) * self.n_x] {
                *z = *z * scale;
            }
        }
    }

    /// `|<a|b>|²` between slice `tau` of each field (assumed normalized).
    pub fn fidelity(&self, other: &Self, grid: &SpatialGrid<T>, tau: usize) -> T {
        let w = grid.space_weights();
        let overlap: Complex<T> = self
            .slice(tau)
            .iter()
            .zip(other.slice(tau))
            .zip(&w)
            .map(|((a, b), &wi)| a.conj() * b * wi)
            .sum();
        overlap.norm_sqr()
    }

    /// Mean position of one slice.
    pub fn mean_x(&self, grid: &SpatialGrid<T>, tau: usize) -> T {
        let density: Vec<T> = self
            .slice(tau)
            .iter()
            .enumerate()
            .map(|(i, z)| z.norm_sqr() * grid.x(i))
            .collect();
        grid.integrate_slice(&density) / self.norm(grid, tau)
    }

    /// Variance of position of one slice.
    pub fn variance_x(&self, grid: &SpatialGrid<T>, tau: usize) -> T {
        let mean = self.mean_x(grid, tau);
        let density: Vec<T> = self
            .slice(tau)
            .iter()
            .enumerate()
            .map(|(i, z)| {
                let d = grid.x(i) - mean;
                z.norm_sqr() * d * d
            })
            .collect();
        grid.integrate_slice(&density) / self.norm(grid, tau)
    }
}

/// Potential energy `V(x, t)`.
#[derive(Clone)]
pub enum Potential<T> {
    Free,
    Constant(T),
    /// `m ω² (x - center)² / 2`.
    Harmonic {
        omega: T,
        center: T,
    },
    /// Values at the grid points; time-independent.
    Tabulated(Vec<T>),
    Custom(Arc<dyn Fn(T, T) -> T + Send + Sync>),
}

impl<T: fmt::Debug> fmt::Debug for Potential<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Free => write!(f, "Free"),
            Self::Constant(c) => write!(f, "Constant({c:?})"),
            Self::Harmonic { omega, center } => write!(f, "Harmonic {{ omega: {omega:?}, center: {center:?} }}"),
            Self::Tabulated(v) => write!(f, "Tabulated({} points)", v.len()),
            Self::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl<T: Real> Potential<T> {
    pub fn is_time_dependent(&self) -> bool {
        matches!(self, Self::Custom(_))
    }
}

/// Mass, the inference parameter `λ`, and the potential. With `λ = 4/ħ²`
/// the evolution equation is the Schrödinger equation with energy `V`.
#[derive(Debug, Clone)]
pub struct PhysicalParams<T> {
    pub mass: T,
    pub lambda: T,
    pub potential: Potential<T>,
}

impl<T: Real> PhysicalParams<T> {
    pub fn new(mass: T, lambda: T, potential: Potential<T>) -> Result<Self> {
        if !(mass > T::zero() && lambda > T::zero()) {
            return Err(Error::InvalidInput("mass and lambda must be positive".into()));
        }
        Ok(Self {
            mass,
            lambda,
            potential,
        })
    }

    /// `ħ = m = 1`, so `λ = 4`.
    pub fn natural(potential: Potential<T>) -> Self {
        Self {
            mass: T::one(),
            lambda: lit(4.0),
            potential,
        }
    }

    pub fn hbar(&self) -> T {
        lit::<T>(2.0) / self.lambda.sqrt()
    }

    pub fn potential_at(&self, i: usize, x: T, t: T) -> T {
        match &self.potential {
            Potential::Free => T::zero(),
            Potential::Constant(c) => *c,
            Potential::Harmonic { omega, center } => {
                let d = x - *center;
                lit::<T>(0.5) * self.mass * *omega * *omega * d * d
            }
            Potential::Tabulated(v) => v[i],
            Potential::Custom(f) => f(x, t),
        }
    }

    /// `V` over the whole grid, slice-major.
    pub fn potential_field(&self, grid: &SpatialGrid<T>) -> Vec<T> {
        (0..grid.n_t)
            .flat_map(|tau| (0..grid.n_x).map(move |i| (tau, i)))
            .map(|(tau, i)| self.potential_at(i, grid.x(i), grid.t(tau)))
            .collect()
    }
}

/// `ψ = √P exp(i S √λ / 2)`.
pub fn polar_to_wave<T: Real>(field: &PolarField<T>, lambda: T) -> WaveField<T> {
    let k = lambda.sqrt() * lit(0.5);
    let psi = field
        .p
        .iter()
        .zip(&field.s)
        .map(|(&p, &s)| Complex::from_polar(p.sqrt(), s * k))
        .collect();
    WaveField {
        n_x: field.n_x,
        n_t: field.n_t,
        psi,
    }
}

/// `P = |ψ|²` and `S = (2/√λ)·phase`.
///
/// The phase is unwrapped along x in each slice, starting at the leftmost
/// point with `P` above the floor and continuing across masked gaps from the
/// last valid point. Each slice is then shifted by a whole number of phase
/// turns to stay closest to the previous one, so `∂S/∂t` is meaningful.
/// Points with `P` at or below the floor are masked. Fails only when an
/// entire slice is masked.
pub fn wave_to_polar<T: Real>(psi: &WaveField<T>, lambda: T) -> Result<PolarField<T>> {
    let floor = lit::<T>(PROBABILITY_FLOOR);
    let two_pi = T::TAU();
    let turn = two_pi * lit::<T>(2.0) / lambda.sqrt();
    let n_x = psi.n_x;
    let p: Vec<T> = psi.psi.iter().map(|z| z.norm_sqr()).collect();
    let valid: Vec<bool> = p.iter().map(|&v| v > floor).collect();
    let mut phase = vec![T::zero(); p.len()];
    for tau in 0..psi.n_t {
        let row = tau * n_x..(tau + 1) * n_x;
        let mut last: Option<T> = None;
        for i in row.clone() {
            if !valid[i] {
                continue;
            }
            let raw = psi.psi[i].arg();
            phase[i] = match last {
                None => raw,
                Some(prev) => raw + two_pi * ((prev - raw) / two_pi).round(),
            };
            last = Some(phase[i]);
        }
        if last.is_none() {
            return Err(Error::PhaseUndefined { count: n_x });
        }
    }
    let scale = lit::<T>(2.0) / lambda.sqrt();
    let mut s: Vec<T> = phase.iter().map(|&v| v * scale).collect();
    for tau in 1..psi.n_t {
        let (mut diff, mut shared) = (T::zero(), 0u64);
        for i in 0..n_x {
            let (a, b) = ((tau - 1) * n_x + i, tau * n_x + i);
            if valid[a] && valid[b] {
                diff += s[a] - s[b];
                shared += 1;
            }
        }
        if shared > 0 {
            let shift = turn * (diff / crate::num::count::<T>(shared) / turn).round();
            for v in &mut s[tau * n_x..(tau + 1) * n_x] {
                *v += shift;
            }
        }
    }
    for (v, ok) in s.iter_mut().zip(&valid) {
        if !ok {
            *v = T::zero();
        }
    }
    Ok(PolarField {
        n_x,
        n_t: psi.n_t,
        p,
        s,
        valid,
    })
}
