//! Separation of frequency data into a source part `rho` and an instrument
//! part `X` (and `Y`) with `<x> = Tr rho X`, expanded in the Pauli basis.
//!
//! Two-particle operators act on `C^2 ⊗ C^2` with the row index
//! `[x, y] = (1 - x)/2 + (1 - y)`: particle 1 (outcome `x`) is the low bit
//! and particle 2 (outcome `y`) the high bit. [`pair_operator`] builds
//! `A_1 ⊗ B_2` in that ordering.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::eprb::PairOutcome;
use crate::error::{Error, Result};
use crate::geometry::UnitVector3;
use crate::inference::Outcome;
use crate::linalg::{least_squares, rms, CMatrix};
use crate::num::{count, lit, to_f64, Real};

/// Hermiticity tolerance applied on construction.
pub const HERMITIAN_TOLERANCE: f64 = 1e-12;

/// Tolerance of `||rho^2 - rho||` for a pure state.
pub const PURITY_TOLERANCE: f64 = 1e-10;

/// Rejection threshold for exact (noise-free) inputs.
pub const EXACT_RESIDUAL_THRESHOLD: f64 = 1e-8;

/// Multiple of the statistical noise floor above which data is rejected.
pub const NOISE_FLOOR_FACTOR: f64 = 10.0;

/// Minimum number of design configurations.
pub const MIN_SG_DESIGN: usize = 6;
pub const MIN_EPRB_DESIGN: usize = 9;

fn c<T: Real>(re: f64, im: f64) -> Complex<T> {
    Complex::new(lit(re), lit(im))
}

/// `σ^x`, `σ^y`, `σ^z` for `k = 0, 1, 2`.
pub fn pauli<T: Real>(k: usize) -> CMatrix<T> {
    let data = match k {
        0 => vec![c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)],
        1 => vec![c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)],
        2 => vec![c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)],
        _ => panic!("Pauli index {k} out of range"),
    };
    CMatrix::from_row_major(2, data).expect("2x2 data")
}

/// `v·σ`.
pub fn dot_sigma<T: Real>(v: [T; 3]) -> CMatrix<T> {
    (0..3).fold(CMatrix::zeros(2), |acc, k| &acc + &pauli::<T>(k).scale_real(v[k]))
}

/// `A` acting on particle 1 and `B` on particle 2.
pub fn pair_operator<T: Real>(on_first: &CMatrix<T>, on_second: &CMatrix<T>) -> CMatrix<T> {
    on_second.kron(on_first)
}

/// Complex Hermitian matrix of dimension 2 or 4.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator<T> {
    matrix: CMatrix<T>,
}

impl<T: Real> HermitianOperator<T> {
    pub fn new(matrix: CMatrix<T>) -> Result<Self> {
        if matrix.dim() != 2 && matrix.dim() != 4 {
            return Err(Error::InvalidInput(format!(
                "operator dimension must be 2 or 4, got {}",
                matrix.dim()
            )));
        }
        let deviation = matrix.hermiticity_deviation();
        if !(deviation <= lit::<T>(HERMITIAN_TOLERANCE)) {
            return Err(Error::NotHermitian {
                deviation: to_f64(deviation),
            });
        }
        Ok(Self { matrix })
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.matrix
    }

    pub fn trace(&self) -> T {
        self.matrix.trace().re
    }

    /// `Re Tr(self · other)`; real for Hermitian pairs.
    pub fn trace_product(&self, other: &CMatrix<T>) -> T {
        (&self.matrix * other).trace().re
    }

    pub fn eigenvalues(&self) -> Vec<T> {
        self.matrix.hermitian_eigenvalues()
    }

    /// `max |(rho^2 - rho)_{ij}|`.
    pub fn projector_deviation(&self) -> T {
        (&self.matrix * &self.matrix).max_abs_diff(&self.matrix)
    }
}

#[derive(Serialize, Deserialize)]
struct OperatorRecord {
    dim: usize,
    entries: Vec<[f64; 2]>,
}

impl<T: Real> Serialize for HermitianOperator<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        OperatorRecord {
            dim: self.dim(),
            entries: self
                .matrix
                .as_slice()
                .iter()
                .map(|z| [to_f64(z.re), to_f64(z.im)])
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de, T: Real> Deserialize<'de> for HermitianOperator<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = OperatorRecord::deserialize(d)?;
        let data = rec.entries.iter().map(|[re, im]| c::<T>(*re, *im)).collect();
        CMatrix::from_row_major(rec.dim, data)
            .and_then(HermitianOperator::new)
            .map_err(serde::de::Error::custom)
    }
}

/// `c0 1 + c·σ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PauliCoefficients2<T> {
    pub c0: T,
    pub c: [T; 3],
}

impl<T: Real> PauliCoefficients2<T> {
    pub fn reconstruct(&self) -> HermitianOperator<T> {
        let m = &CMatrix::identity(2).scale_real(self.c0) + &dot_sigma(self.c);
        HermitianOperator { matrix: m }
    }
}

/// `rho0 1 + rho1·σ_1 ⊗ 1 + 1 ⊗ rho2·σ_2 + σ_1·rho12·σ_2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PauliCoefficients4<T> {
    pub rho0: T,
    pub rho1: [T; 3],
    pub rho2: [T; 3],
    pub rho12: [[T; 3]; 3],
}

impl<T: Real> PauliCoefficients4<T> {
    pub fn reconstruct(&self) -> HermitianOperator<T> {
        let id2 = CMatrix::<T>::identity(2);
        let mut m = CMatrix::identity(4).scale_real(self.rho0);
        for i in 0..3 {
            m = &m + &pair_operator(&pauli::<T>(i), &id2).scale_real(self.rho1[i]);
            m = &m + &pair_operator(&id2, &pauli::<T>(i)).scale_real(self.rho2[i]);
            for j in 0..3 {
                m = &m + &pair_operator(&pauli::<T>(i), &pauli::<T>(j)).scale_real(self.rho12[i][j]);
            }
        }
        HermitianOperator { matrix: m }
    }
}

/// `c0 = Tr(op)/2`, `c_k = Tr(σ_k op)/2`.
pub fn pauli_decompose<T: Real>(op: &HermitianOperator<T>) -> Result<PauliCoefficients2<T>> {
    if op.dim() != 2 {
        return Err(Error::MismatchedDimensions {
            expected: 2,
            actual: op.dim(),
        });
    }
    let half = lit::<T>(0.5);
    Ok(PauliCoefficients2 {
        c0: half * op.trace(),
        c: [0, 1, 2].map(|k| half * op.trace_product(&pauli(k))),
    })
}

/// Coefficients in the product basis, each `Tr(B op) / 4`.
pub fn pauli_decompose4<T: Real>(op: &HermitianOperator<T>) -> Result<PauliCoefficients4<T>> {
    if op.dim() != 4 {
        return Err(Error::MismatchedDimensions {
            expected: 4,
            actual: op.dim(),
        });
    }
    let quarter = lit::<T>(0.25);
    let id2 = CMatrix::<T>::identity(2);
    let coef = |b: CMatrix<T>| quarter * op.trace_product(&b);
    Ok(PauliCoefficients4 {
        rho0: quarter * op.trace(),
        rho1: [0, 1, 2].map(|i| coef(pair_operator(&pauli(i), &id2))),
        rho2: [0, 1, 2].map(|i| coef(pair_operator(&id2, &pauli(i)))),
        rho12: [0, 1, 2].map(|i| [0, 1, 2].map(|j| coef(pair_operator(&pauli(i), &pauli(j))))),
    })
}

/// `rho = (1 + m·σ)/2` and `X = a·σ`.
pub fn build_sg_operators<T: Real>(
    a: &UnitVector3<T>,
    m: &UnitVector3<T>,
) -> (HermitianOperator<T>, HermitianOperator<T>) {
    let rho = PauliCoefficients2 {
        c0: lit(0.5),
        c: m.components().map(|v| v * lit::<T>(0.5)),
    }
    .reconstruct();
    let xhat = HermitianOperator {
        matrix: dot_sigma(a.components()),
    };
    (rho, xhat)
}

/// `rho = (1 - σ_1·σ_2)/4`, `X = a1·σ_1 ⊗ 1`, `Y = 1 ⊗ a2·σ_2`.
pub fn build_eprb_operators<T: Real>(
    a1: &UnitVector3<T>,
    a2: &UnitVector3<T>,
) -> (HermitianOperator<T>, HermitianOperator<T>, HermitianOperator<T>) {
    let zero = [T::zero(); 3];
    let q = lit::<T>(-0.25);
    let rho = PauliCoefficients4 {
        rho0: lit(0.25),
        rho1: zero,
        rho2: zero,
        rho12: [
            [q, T::zero(), T::zero()],
            [T::zero(), q, T::zero()],
            [T::zero(), T::zero(), q],
        ],
    }
    .reconstruct();
    let id2 = CMatrix::<T>::identity(2);
    let xhat = HermitianOperator {
        matrix: pair_operator(&dot_sigma(a1.components()), &id2),
    };
    let yhat = HermitianOperator {
        matrix: pair_operator(&id2, &dot_sigma(a2.components())),
    };
    (rho, xhat, yhat)
}

/// Unit vector `|psi>` with `rho = |psi><psi|`; the first nonzero amplitude
/// is made real and positive.
pub fn rho_to_state<T: Real>(rho: &HermitianOperator<T>) -> Result<Vec<Complex<T>>> {
    let deviation = rho.projector_deviation();
    let trace_error = (rho.trace() - T::one()).abs();
    let tol = lit::<T>(PURITY_TOLERANCE);
    if !(deviation <= tol && trace_error <= tol) {
        return Err(Error::NotPure {
            deviation: to_f64(deviation.max(trace_error)),
        });
    }
    let m = rho.matrix();
    let n = m.dim();
    // Every column of |psi><psi| is psi scaled by a conjugated amplitude.
    let column = (0..n)
        .max_by(|&i, &j| {
            let ni: T = (0..n).map(|r| m[(r, i)].norm_sqr()).sum();
            let nj: T = (0..n).map(|r| m[(r, j)].norm_sqr()).sum();
            ni.partial_cmp(&nj).unwrap_or(std::cmp::Ordering::Equal)
        })
        .expect("nonempty matrix");
    let mut psi: Vec<Complex<T>> = (0..n).map(|r| m[(r, column)]).collect();
    let norm = psi.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
    let cutoff = lit::<T>(1e-12);
    let phase = psi
        .iter()
        .find(|z| z.norm() > cutoff)
        .map(|z| z.conj() / z.norm())
        .expect("rank-one projector has a nonzero column");
    for z in &mut psi {
        *z = *z * phase / norm;
        if z.norm() <= cutoff {
            *z = Complex::new(T::zero(), T::zero());
        }
    }
    Ok(psi)
}

/// Diagonal data matrices `F = diag(f(+1), f(-1))` and `X = diag(+1, -1)`
/// with `<x> = Tr F X`.
pub fn sg_data_operators<T: Real>(f_plus: T, f_minus: T) -> (CMatrix<T>, CMatrix<T>) {
    let diag = |v: [T; 2]| {
        CMatrix::from_fn(2, |i, j| {
            if i == j {
                Complex::new(v[i], T::zero())
            } else {
                Complex::new(T::zero(), T::zero())
            }
        })
    };
    let x = Outcome::both().map(|o| o.as_real::<T>());
    (diag([f_plus, f_minus]), diag(x))
}

/// Diagonal `F`, `X`, `Y` over the four pair outcomes in `[x, y]` order.
pub fn eprb_data_operators<T: Real>(frequencies: [T; 4]) -> (CMatrix<T>, CMatrix<T>, CMatrix<T>) {
    let diag = |f: &dyn Fn(usize) -> T| {
        CMatrix::from_fn(4, |i, j| {
            if i == j {
                Complex::new(f(i), T::zero())
            } else {
                Complex::new(T::zero(), T::zero())
            }
        })
    };
    let pairs = PairOutcome::all();
    (
        diag(&|i| frequencies[i]),
        diag(&|i| pairs[i].x.as_real::<T>()),
        diag(&|i| pairs[i].y.as_real::<T>()),
    )
}

/// One row of SG frequency data: analyzer `a`, source setting `m`, observed
/// `<x>`, and the sample size it was estimated from (`None` for exact data).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct SgObservation<T> {
    pub a: UnitVector3<T>,
    pub m: UnitVector3<T>,
    pub mean_x: T,
    pub n: Option<u64>,
}

/// Frequency `f(x | a, m)` of a Stern-Gerlach experiment.
pub trait FrequencyFunction<T> {
    fn frequency(&self, x: Outcome, a: &UnitVector3<T>, m: &UnitVector3<T>) -> T;
}

impl<T, F> FrequencyFunction<T> for F
where
    F: Fn(Outcome, &UnitVector3<T>, &UnitVector3<T>) -> T,
{
    fn frequency(&self, x: Outcome, a: &UnitVector3<T>, m: &UnitVector3<T>) -> T {
        self(x, a, m)
    }
}

/// Exact `<x>` rows of a frequency function over a design.
pub fn tabulate_sg<T: Real>(
    f: &impl FrequencyFunction<T>,
    design: &[(UnitVector3<T>, UnitVector3<T>)],
) -> Vec<SgObservation<T>> {
    design
        .iter()
        .map(|(a, m)| SgObservation {
            a: *a,
            m: *m,
            mean_x: Outcome::both()
                .iter()
                .map(|&x| x.as_real::<T>() * f.frequency(x, a, m))
                .sum(),
            n: None,
        })
        .collect()
}

/// Source vector recovered for one source setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct SeparatedSource<T> {
    pub m_design: UnitVector3<T>,
    pub rho: [T; 3],
}

/// Result of separating SG data into `<x> = u0 + rho(m)·a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct SgSeparation<T> {
    pub sources: Vec<SeparatedSource<T>>,
    /// Solved, not assumed; robust data gives `u0 = 0`.
    pub u0: T,
    pub residual: T,
    pub threshold: T,
}

impl<T: Real> SgSeparation<T> {
    /// Direction of the first source vector.
    pub fn m_est(&self) -> UnitVector3<T> {
        let [x, y, z] = self.sources[0].rho;
        UnitVector3::new(x, y, z).expect("nonzero source vector")
    }

    pub fn rho_norm(&self) -> T {
        let r = self.sources[0].rho;
        (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt()
    }

    /// Density matrix `(1 + rho·σ)/2` of the first source.
    pub fn density_matrix(&self) -> HermitianOperator<T> {
        PauliCoefficients2 {
            c0: lit(0.5),
            c: self.sources[0].rho.map(|v| v * lit::<T>(0.5)),
        }
        .reconstruct()
    }
}

fn rejection_threshold<T: Real>(stderrs: &[T]) -> T {
    let floor = rms(stderrs);
    let exact = lit::<T>(EXACT_RESIDUAL_THRESHOLD);
    if floor > T::zero() {
        (lit::<T>(NOISE_FLOOR_FACTOR) * floor).max(exact)
    } else {
        exact
    }
}

fn binomial_stderr<T: Real>(mean: T, n: Option<u64>) -> T {
    match n {
        Some(n) if n > 0 => ((T::one() - mean * mean).max(T::zero()) / count::<T>(n)).sqrt(),
        _ => T::zero(),
    }
}

/// Least-squares separation `<x> = u0 + rho(m)·a` with one source vector per
/// distinct source setting and a shared offset `u0`.
pub fn separate_sg<T: Real>(observations: &[SgObservation<T>]) -> Result<SgSeparation<T>> {
    if observations.len() < MIN_SG_DESIGN {
        return Err(Error::InsufficientDesign(format!(
            "{} configurations, need at least {MIN_SG_DESIGN}",
            observations.len()
        )));
    }
    let same = lit::<T>(1e-12);
    let mut settings: Vec<UnitVector3<T>> = Vec::new();
    let group: Vec<usize> = observations
        .iter()
        .map(|o| {
            settings
                .iter()
                .position(|s| (s.dot(&o.m) - T::one()).abs() <= same)
                .unwrap_or_else(|| {
                    settings.push(o.m);
                    settings.len() - 1
                })
        })
        .collect();
    let unknowns = 1 + 3 * settings.len();
    let rows: Vec<Vec<T>> = observations
        .iter()
        .zip(&group)
        .map(|(o, &g)| {
            let mut row = vec![T::zero(); unknowns];
            row[0] = T::one();
            row[1 + 3 * g..4 + 3 * g].copy_from_slice(&o.a.components());
            row
        })
        .collect();
    let rhs: Vec<T> = observations.iter().map(|o| o.mean_x).collect();
    let fit = least_squares(&rows, &rhs)?;
    let residual = fit.rms_residual();
    let stderrs: Vec<T> = observations.iter().map(|o| binomial_stderr(o.mean_x, o.n)).collect();
    let threshold = rejection_threshold(&stderrs);
    let sources: Vec<SeparatedSource<T>> = settings
        .iter()
        .enumerate()
        .map(|(g, m)| SeparatedSource {
            m_design: *m,
            rho: [
                fit.solution[1 + 3 * g],
                fit.solution[2 + 3 * g],
                fit.solution[3 + 3 * g],
            ],
        })
        .collect();
    let signal = sources
        .iter()
        .map(|s| s.rho.iter().map(|&v| v * v).sum::<T>().sqrt())
        .fold(T::zero(), T::max);
    if signal <= threshold {
        return Err(Error::TrivialSignal);
    }
    if residual > threshold {
        return Err(Error::NonSeparable {
            residual: to_f64(residual),
            threshold: to_f64(threshold),
        });
    }
    Ok(SgSeparation {
        sources,
        u0: fit.solution[0],
        residual,
        threshold,
    })
}

/// One row of EPRB correlation data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct EprbObservation<T> {
    pub a1: UnitVector3<T>,
    pub a2: UnitVector3<T>,
    pub mean_x: T,
    pub mean_y: T,
    pub mean_xy: T,
    pub n: Option<u64>,
}

/// Exact singlet (or relabelled) correlations over a design.
pub fn tabulate_eprb<T: Real>(
    design: &[(UnitVector3<T>, UnitVector3<T>)],
    correlation: impl Fn(T) -> T,
) -> Vec<EprbObservation<T>> {
    design
        .iter()
        .map(|(a1, a2)| EprbObservation {
            a1: *a1,
            a2: *a2,
            mean_x: T::zero(),
            mean_y: T::zero(),
            mean_xy: correlation(a1.dot(a2)),
            n: None,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EprbSeparation<T> {
    pub coefficients: PauliCoefficients4<T>,
    /// RMS over the `<x>`, `<y>`, and `<xy>` equations.
    pub residual: T,
    pub threshold: T,
}

impl<T: Real> EprbSeparation<T> {
    pub fn density_matrix(&self) -> HermitianOperator<T> {
        self.coefficients.reconstruct()
    }
}

/// Solves `Tr rho = 1`, `Tr rho X = <x>`, `Tr rho Y = <y>`, `Tr rho XY = <xy>`
/// for the Pauli coefficients of `rho` with `X = a1·σ_1`, `Y = a2·σ_2`.
pub fn separate_eprb<T: Real>(observations: &[EprbObservation<T>]) -> Result<EprbSeparation<T>> {
    if observations.len() < MIN_EPRB_DESIGN {
        return Err(Error::InsufficientDesign(format!(
            "{} configurations, need at least {MIN_EPRB_DESIGN}",
            observations.len()
        )));
    }
    let four = lit::<T>(4.0);
    let x_rows: Vec<Vec<T>> = observations
        .iter()
        .map(|o| o.a1.components().map(|v| four * v).to_vec())
        .collect();
    let y_rows: Vec<Vec<T>> = observations
        .iter()
        .map(|o| o.a2.components().map(|v| four * v).to_vec())
        .collect();
    let xy_rows: Vec<Vec<T>> = observations
        .iter()
        .map(|o| {
            let (p, q) = (o.a1.components(), o.a2.components());
            (0..9).map(|k| four * p[k / 3] * q[k % 3]).collect()
        })
        .collect();
    let fx = least_squares(&x_rows, &observations.iter().map(|o| o.mean_x).collect::<Vec<_>>())?;
    let fy = least_squares(&y_rows, &observations.iter().map(|o| o.mean_y).collect::<Vec<_>>())?;
    let fxy = least_squares(&xy_rows, &observations.iter().map(|o| o.mean_xy).collect::<Vec<_>>())?;

    let all: Vec<T> = fx
        .residuals
        .iter()
        .chain(&fy.residuals)
        .chain(&fxy.residuals)
        .copied()
        .collect();
    let residual = rms(&all);
    let stderrs: Vec<T> = observations
        .iter()
        .flat_map(|o| {
            [
                binomial_stderr(o.mean_x, o.n),
                binomial_stderr(o.mean_y, o.n),
                binomial_stderr(o.mean_xy, o.n),
            ]
        })
        .collect();
    let threshold = rejection_threshold(&stderrs);
    if residual > threshold {
        return Err(Error::NonSeparable {
            residual: to_f64(residual),
            threshold: to_f64(threshold),
        });
    }
    let s = &fxy.solution;
    Ok(EprbSeparation {
        coefficients: PauliCoefficients4 {
            rho0: lit(0.25),
            rho1: [fx.solution[0], fx.solution[1], fx.solution[2]],
            rho2: [fy.solution[0], fy.solution[1], fy.solution[2]],
            rho12: [[s[0], s[1], s[2]], [s[3], s[4], s[5]], [s[6], s[7], s[8]]],
        },
        residual,
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::EventRng;
    use crate::sg::{sg_probability, Sign};
    use approx::assert_abs_diff_eq;

    fn random_design(n: usize, seed: u64) -> Vec<(UnitVector3<f64>, UnitVector3<f64>)> {
        let mut rng = EventRng::new(seed);
        (0..n)
            .map(|_| (UnitVector3::random(&mut rng), UnitVector3::random(&mut rng)))
            .collect()
    }

    fn analyzer_design(m: UnitVector3<f64>, n: usize, seed: u64) -> Vec<(UnitVector3<f64>, UnitVector3<f64>)> {
        let mut rng = EventRng::new(seed);
        (0..n).map(|_| (UnitVector3::random(&mut rng), m)).collect()
    }

    fn op(m: CMatrix<f64>) -> HermitianOperator<f64> {
        HermitianOperator::new(m).unwrap()
    }

    #[test]
    fn pauli_basis_is_orthonormal() {
        let basis: Vec<CMatrix<f64>> = std::iter::once(CMatrix::identity(2)).chain((0..3).map(pauli)).collect();
        for (i, a) in basis.iter().enumerate() {
            for (j, b) in basis.iter().enumerate() {
                let ip = (&a.adjoint() * b).trace();
                let expected = if i == j { 2.0 } else { 0.0 };
                assert_abs_diff_eq!(ip.re, expected, epsilon = 1e-15);
                assert_abs_diff_eq!(ip.im, 0.0, epsilon = 1e-15);
            }
        }
        let product: Vec<CMatrix<f64>> = basis
            .iter()
            .flat_map(|a| basis.iter().map(move |b| pair_operator(a, b)))
            .collect();
        for (i, a) in product.iter().enumerate() {
            for (j, b) in product.iter().enumerate() {
                let ip = (&a.adjoint() * b).trace();
                let expected = if i == j { 4.0 } else { 0.0 };
                assert_abs_diff_eq!(ip.re, expected, epsilon = 1e-14);
                assert_abs_diff_eq!(ip.im, 0.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn decompose_examples() {
        let id = pauli_decompose(&op(CMatrix::identity(2))).unwrap();
        assert_eq!((id.c0, id.c), (1.0, [0.0; 3]));
        let z = pauli_decompose(&op(pauli(2))).unwrap();
        assert_eq!((z.c0, z.c), (0.0, [0.0, 0.0, 1.0]));
        let half_x = &CMatrix::identity(2).scale_real(0.5) + &pauli(0).scale_real(0.5);
        let h = pauli_decompose(&op(half_x)).unwrap();
        assert_abs_diff_eq!(h.c0, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(h.c[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(h.c[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn decompose_single_precision() {
        let z = pauli_decompose(&HermitianOperator::<f32>::new(pauli(2)).unwrap()).unwrap();
        assert_eq!(z.c, [0.0, 0.0, 1.0]);
    }

    #[test]
    fn non_hermitian_rejected() {
        let m = CMatrix::from_row_major(2, vec![c(1., 0.), c(1., 0.), c(0., 0.), c(1., 0.)]).unwrap();
        assert!(matches!(
            HermitianOperator::<f64>::new(m),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn decomposition_round_trips() {
        let mut rng = EventRng::new(21);
        for _ in 0..1000 {
            let mut g = || 2.0 * rng.uniform() - 1.0;
            let coeffs = PauliCoefficients2 {
                c0: g(),
                c: [g(), g(), g()],
            };
            let back = pauli_decompose(&coeffs.reconstruct()).unwrap();
            assert_abs_diff_eq!(back.c0, coeffs.c0, epsilon = 1e-12);
            for k in 0..3 {
                assert_abs_diff_eq!(back.c[k], coeffs.c[k], epsilon = 1e-12);
            }
        }
        for _ in 0..200 {
            let mut g = || 2.0 * rng.uniform() - 1.0;
            let coeffs = PauliCoefficients4 {
                rho0: g(),
                rho1: [g(), g(), g()],
                rho2: [g(), g(), g()],
                rho12: [[g(), g(), g()], [g(), g(), g()], [g(), g(), g()]],
            };
            let op = coeffs.reconstruct();
            let again = pauli_decompose4(&op).unwrap().reconstruct();
            assert!(again.matrix().max_abs_diff(op.matrix()) < 1e-12);
        }
    }

    #[test]
    fn sg_operator_examples() {
        let z = UnitVector3::<f64>::z_axis();
        let (rho, _) = build_sg_operators(&z, &z);
        let diag = CMatrix::from_row_major(2, vec![c(1., 0.), c(0., 0.), c(0., 0.), c(0., 0.)]).unwrap();
        assert!(rho.matrix().max_abs_diff(&diag) < 1e-15);

        let (rho, x) = build_sg_operators(&UnitVector3::x_axis(), &z);
        assert_abs_diff_eq!(rho.trace_product(x.matrix()), 0.0, epsilon = 1e-15);

        let a = UnitVector3::new(0.8, 0.0, 0.6).unwrap();
        let (rho, x) = build_sg_operators(&a, &z);
        assert_abs_diff_eq!(rho.trace(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rho.trace_product(x.matrix()), 0.6, epsilon = 1e-12);
    }

    #[test]
    fn sg_trace_identity_matches_inferred_probability() {
        let mut rng = EventRng::new(31);
        for _ in 0..200 {
            let a = UnitVector3::<f64>::random(&mut rng);
            let m = UnitVector3::<f64>::random(&mut rng);
            let (rho, xhat) = build_sg_operators(&a, &m);
            assert!(rho.projector_deviation() < 1e-12);
            assert!(rho.eigenvalues().iter().all(|&e| e >= -1e-12));
            for x in Outcome::both() {
                let projector =
                    &CMatrix::identity(2).scale_real(0.5) + &xhat.matrix().scale_real(0.5 * x.as_real::<f64>());
                assert_abs_diff_eq!(
                    rho.trace_product(&projector),
                    sg_probability(x, &a, &m, Sign::Plus),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn data_operators_reproduce_averages() {
        let (f, x) = sg_data_operators(0.8, 0.2);
        assert_abs_diff_eq!((&f * &x).trace().re, 0.6, epsilon = 1e-15);
        let (f, x, y) = eprb_data_operators([0.1, 0.4, 0.3, 0.2]);
        assert_abs_diff_eq!(f.trace().re, 1.0, epsilon = 1e-15);
        // x = +1 on indices 0, 2.
        assert_abs_diff_eq!((&f * &x).trace().re, 0.1 - 0.4 + 0.3 - 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!((&f * &y).trace().re, 0.1 + 0.4 - 0.3 - 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!((&(&f * &x) * &y).trace().re, 0.1 - 0.4 - 0.3 + 0.2, epsilon = 1e-15);
        // The data matrices coincide with the z-axis instrument operators.
        let (_, xhat, yhat) = build_eprb_operators(&UnitVector3::z_axis(), &UnitVector3::z_axis());
        assert!(xhat.matrix().max_abs_diff(&x) < 1e-15);
        assert!(yhat.matrix().max_abs_diff(&y) < 1e-15);
    }

    #[test]
    fn state_examples() {
        let z = UnitVector3::<f64>::z_axis();
        let (rho, _) = build_sg_operators(&z, &z);
        let psi = rho_to_state(&rho).unwrap();
        assert_abs_diff_eq!(psi[0].re, 1.0, epsilon = 1e-15);
        assert_eq!(psi[1].norm(), 0.0);

        let (rho, _) = build_sg_operators(&z, &UnitVector3::x_axis());
        let psi = rho_to_state(&rho).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(psi[0].re, h, epsilon = 1e-15);
        assert_abs_diff_eq!(psi[1].re, h, epsilon = 1e-15);

        let (singlet, _, _) = build_eprb_operators(&z, &z);
        let psi = rho_to_state(&singlet).unwrap();
        let expected = [0.0, h, -h, 0.0];
        for (a, e) in psi.iter().zip(expected) {
            assert_abs_diff_eq!(a.re, e, epsilon = 1e-15);
            assert_abs_diff_eq!(a.im, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn mixed_state_is_not_pure() {
        let mixed = op(CMatrix::identity(2).scale_real(0.5));
        assert!(matches!(rho_to_state(&mixed), Err(Error::NotPure { .. })));
    }

    #[test]
    fn eprb_operator_constraints() {
        let mut rng = EventRng::new(41);
        for _ in 0..100 {
            let a1 = UnitVector3::<f64>::random(&mut rng);
            let a2 = UnitVector3::<f64>::random(&mut rng);
            let (rho, x, y) = build_eprb_operators(&a1, &a2);
            assert_abs_diff_eq!(rho.trace(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(rho.trace_product(x.matrix()), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(rho.trace_product(y.matrix()), 0.0, epsilon = 1e-12);
            let xy = x.matrix() * y.matrix();
            assert_abs_diff_eq!(rho.trace_product(&xy), -a1.dot(&a2), epsilon = 1e-12);
            assert!(rho.projector_deviation() < 1e-12);
            assert!(rho.eigenvalues().iter().all(|&e| e >= -1e-12));
        }
        let z = UnitVector3::<f64>::z_axis();
        let (rho, x, y) = build_eprb_operators(&z, &z);
        assert_abs_diff_eq!(rho.trace_product(&(x.matrix() * y.matrix())), -1.0, epsilon = 1e-12);
        let (rho, x, y) = build_eprb_operators(&z, &UnitVector3::x_axis());
        assert_abs_diff_eq!(rho.trace_product(&(x.matrix() * y.matrix())), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn separate_sg_recovers_source() {
        let m = UnitVector3::new(0.3, -0.5, 0.8).unwrap();
        let f = |x: Outcome, a: &UnitVector3<f64>, m: &UnitVector3<f64>| sg_probability(x, a, m, Sign::Plus);
        let sep = separate_sg(&tabulate_sg(&f, &analyzer_design(m, 12, 1))).unwrap();
        assert!(sep.residual < 1e-12);
        assert!(sep.u0.abs() < 1e-12);
        let est = sep.m_est();
        for (e, t) in est.components().iter().zip(m.components()) {
            assert_abs_diff_eq!(*e, t, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(sep.rho_norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn separate_sg_with_several_sources() {
        let f = |x: Outcome, a: &UnitVector3<f64>, m: &UnitVector3<f64>| sg_probability(x, a, m, Sign::Plus);
        let design = random_design(4, 2);
        let mut full = Vec::new();
        for (_, m) in &design {
            full.extend(analyzer_design(*m, 5, 3));
        }
        let sep = separate_sg(&tabulate_sg(&f, &full)).unwrap();
        assert_eq!(sep.sources.len(), 4);
        for s in &sep.sources {
            for (r, t) in s.rho.iter().zip(s.m_design.components()) {
                assert_abs_diff_eq!(*r, t, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn separate_sg_rejects_quadratic_data() {
        let m = UnitVector3::<f64>::z_axis();
        let f = |x: Outcome, a: &UnitVector3<f64>, m: &UnitVector3<f64>| {
            0.5 * (1.0 + x.as_real::<f64>() * a.dot(m).powi(2))
        };
        match separate_sg(&tabulate_sg(&f, &analyzer_design(m, 20, 4))) {
            Err(Error::NonSeparable { residual, .. }) => assert!(residual > 1e-2),
            other => panic!("expected NonSeparable, got {other:?}"),
        }
    }

    #[test]
    fn separate_sg_flags_trivial_signal() {
        let f = |_: Outcome, _: &UnitVector3<f64>, _: &UnitVector3<f64>| 0.5;
        let design = analyzer_design(UnitVector3::z_axis(), 10, 5);
        assert!(matches!(
            separate_sg(&tabulate_sg(&f, &design)),
            Err(Error::TrivialSignal)
        ));
    }

    #[test]
    fn separate_sg_design_checks() {
        let f = |x: Outcome, a: &UnitVector3<f64>, m: &UnitVector3<f64>| sg_probability(x, a, m, Sign::Plus);
        let m = UnitVector3::<f64>::z_axis();
        let short = analyzer_design(m, 4, 6);
        assert!(matches!(
            separate_sg(&tabulate_sg(&f, &short)),
            Err(Error::InsufficientDesign(_))
        ));
        let coplanar: Vec<_> = (0..8).map(|i| (UnitVector3::in_xz_plane(0.4 * i as f64), m)).collect();
        assert!(matches!(
            separate_sg(&tabulate_sg(&f, &coplanar)),
            Err(Error::InsufficientDesign(_))
        ));
    }

    #[test]
    fn separate_sg_on_sampled_data() {
        let m = UnitVector3::new(-0.2, 0.4, 0.9).unwrap();
        let design = analyzer_design(m, 16, 7);
        let obs: Vec<SgObservation<f64>> = design
            .iter()
            .enumerate()
            .map(|(i, (a, m))| {
                let log = crate::sg::sample_sg(a, m, 100_000, 500 + i as u64);
                let (e, _) = crate::sg::estimate_expectation(&log).unwrap();
                SgObservation {
                    a: *a,
                    m: *m,
                    mean_x: e,
                    n: Some(100_000),
                }
            })
            .collect();
        let sep = separate_sg(&obs).unwrap();
        assert!(sep.m_est().dot(&m) > 0.999);
        assert!(sep.u0.abs() < 0.01);
    }

    #[test]
    fn separate_eprb_recovers_singlet() {
        let obs = tabulate_eprb(&random_design(12, 8), |d: f64| -d);
        let sep = separate_eprb(&obs).unwrap();
        let (expected, _, _) = build_eprb_operators(&UnitVector3::z_axis(), &UnitVector3::z_axis());
        assert!(sep.density_matrix().matrix().max_abs_diff(expected.matrix()) < 1e-10);
        let k = sep.coefficients;
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { -0.25 } else { 0.0 };
                assert_abs_diff_eq!(k.rho12[i][j], e, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn separate_eprb_positive_sign() {
        let sep = separate_eprb(&tabulate_eprb(&random_design(12, 9), |d: f64| d)).unwrap();
        let k = sep.coefficients;
        for i in 0..3 {
            assert_abs_diff_eq!(k.rho12[i][i], 0.25, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(sep.density_matrix().trace(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn separate_eprb_rejects_cubic_correlations() {
        let obs = tabulate_eprb(&random_design(20, 10), |d: f64| -d.powi(3));
        match separate_eprb(&obs) {
            Err(Error::NonSeparable { residual, .. }) => assert!(residual > 1e-2, "residual {residual}"),
            other => panic!("expected NonSeparable, got {other:?}"),
        }
    }

    #[test]
    fn separate_eprb_needs_nine_configurations() {
        let obs = tabulate_eprb(&random_design(8, 11), |d: f64| -d);
        assert!(matches!(separate_eprb(&obs), Err(Error::InsufficientDesign(_))));
    }

    #[test]
    fn swapped_roles_fail_for_pairs() {
        // rho built from the analyzer, X from the source: fine for one magnet...
        let mut rng = EventRng::new(51);
        let a = UnitVector3::<f64>::random(&mut rng);
        let m = UnitVector3::<f64>::random(&mut rng);
        let (rho_swapped, x_swapped) = build_sg_operators(&m, &a);
        assert_abs_diff_eq!(
            rho_swapped.trace_product(x_swapped.matrix()),
            a.dot(&m),
            epsilon = 1e-12
        );

        // ...but the pair source has zero single-particle vectors (<x> = <y> = 0),
        // so instruments built from it vanish and cannot produce <xy> = -1 at
        // a1 = a2, whatever the analyzer-built rho.
        let a1 = UnitVector3::<f64>::z_axis();
        let singlet = separate_eprb(&tabulate_eprb(&random_design(12, 12), |d: f64| -d)).unwrap();
        let source_vector = singlet.coefficients.rho1;
        let id2 = CMatrix::<f64>::identity(2);
        let x = pair_operator(&dot_sigma(source_vector), &id2);
        let y = pair_operator(&id2, &dot_sigma(singlet.coefficients.rho2));
        let rho = &build_sg_operators(&a1, &a1)
            .0
            .matrix()
            .kron(build_sg_operators(&a1, &a1).0.matrix())
            * &CMatrix::identity(4);
        let corr = (&(&rho * &x) * &y).trace().re;
        assert!((corr - (-1.0)).abs() > 0.5, "swapped description gives <xy> = {corr}");
    }

    #[test]
    fn operator_json_round_trip() {
        let (rho, _, _) = build_eprb_operators(&UnitVector3::<f64>::z_axis(), &UnitVector3::x_axis());
        let s = serde_json::to_string(&rho).unwrap();
        assert!(s.starts_with("{\"dim\":4,\"entries\":[[0.0,0.0],"));
        let back: HermitianOperator<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, rho);
    }
}
