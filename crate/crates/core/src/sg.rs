//! Stern-Gerlach experiment: simulation, expectation estimates, and recovery
//! of the robust solution `E(theta) = cos(K theta + phi)` from data.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::UnitVector3;
use crate::inference::{CountTable, DichotomicModel, ExperimentConditions, Outcome, Phase};
use crate::linalg::rms;
use crate::num::{count, lit, to_f64, Real};
use crate::rng::EventRng;

/// Default upper bound of the winding-number search.
pub const DEFAULT_K_MAX: u32 = 8;

/// Default number of analyzer angles on `[0, π]`.
pub const DEFAULT_THETA_POINTS: usize = 16;

/// Which detector is labelled `+1`; the robust solution fixes the i-prob only
/// up to this relabelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Sign {
    #[default]
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    pub fn as_real<T: Real>(self) -> T {
        match self {
            Sign::Plus => T::one(),
            Sign::Minus => -T::one(),
        }
    }

    pub fn phase(self) -> Phase {
        match self {
            Sign::Plus => Phase::Zero,
            Sign::Minus => Phase::Pi,
        }
    }
}

/// `(1 ± x a·m) / 2`.
pub fn sg_probability<T: Real>(x: Outcome, a: &UnitVector3<T>, m: &UnitVector3<T>, sign: Sign) -> T {
    lit::<T>(0.5) * (T::one() + sign.as_real::<T>() * x.as_real::<T>() * a.dot(m))
}

/// Uniform grid of `n` angles from 0 to π inclusive.
pub fn theta_grid<T: Real>(n: usize) -> Vec<T> {
    let step = T::PI() / count::<T>((n.max(2) - 1) as u64);
    (0..n).map(|i| count::<T>(i as u64) * step).collect()
}

/// Time series of detection events for one magnet setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct EventLog<T> {
    outcomes: Vec<Outcome>,
    theta: T,
    a: UnitVector3<T>,
    m_direction: UnitVector3<T>,
    seed: u64,
    conditions: ExperimentConditions,
}

impl<T: Real> EventLog<T> {
    /// Assembles a log; `theta` is derived as `arccos(a·m)`.
    pub fn new(
        outcomes: Vec<Outcome>,
        a: UnitVector3<T>,
        m_direction: UnitVector3<T>,
        seed: u64,
        conditions: ExperimentConditions,
    ) -> Self {
        Self {
            outcomes,
            theta: a.angle_to(&m_direction),
            a,
            m_direction,
            seed,
            conditions,
        }
    }

    pub fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn theta(&self) -> T {
        self.theta
    }

    pub fn a(&self) -> &UnitVector3<T> {
        &self.a
    }

    pub fn m_direction(&self) -> &UnitVector3<T> {
        &self.m_direction
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn conditions(&self) -> &ExperimentConditions {
        &self.conditions
    }

    pub fn counts(&self) -> CountTable {
        CountTable::from_outcomes(&self.outcomes)
    }
}

/// Simulates `n` independent SG events with `P(+1) = (1 + a·m)/2`.
pub fn sample_sg<T: Real>(a: &UnitVector3<T>, m: &UnitVector3<T>, n: usize, seed: u64) -> EventLog<T> {
    sample_sg_with(a, m, n, Sign::Plus, &mut EventRng::new(seed), seed)
}

fn sample_sg_with<T: Real>(
    a: &UnitVector3<T>,
    m: &UnitVector3<T>,
    n: usize,
    sign: Sign,
    rng: &mut EventRng,
    seed: u64,
) -> EventLog<T> {
    let p_plus = to_f64(sg_probability(Outcome::PLUS, a, m, sign));
    let outcomes = (0..n)
        .map(|_| {
            if rng.bernoulli(p_plus) {
                Outcome::PLUS
            } else {
                Outcome::MINUS
            }
        })
        .collect();
    let conditions = ExperimentConditions::new("stern-gerlach").with(
        "sign",
        match sign {
            Sign::Plus => "+",
            Sign::Minus => "-",
        },
    );
    EventLog::new(outcomes, *a, *m, seed, conditions)
}

/// Simulation with an explicit detector labelling.
pub fn sample_sg_signed<T: Real>(
    a: &UnitVector3<T>,
    m: &UnitVector3<T>,
    n: usize,
    sign: Sign,
    seed: u64,
) -> EventLog<T> {
    sample_sg_with(a, m, n, sign, &mut EventRng::new(seed), seed)
}

/// Independent repeats on ChaCha streams derived from `seed`, in repeat order.
pub fn sample_sg_repeats<T: Real>(
    a: &UnitVector3<T>,
    m: &UnitVector3<T>,
    n: usize,
    seed: u64,
    repeats: usize,
) -> Vec<EventLog<T>> {
    (0..repeats)
        .into_par_iter()
        .map(|r| {
            let mut rng = EventRng::for_repeat(seed, r as u64);
            sample_sg_with(a, m, n, Sign::Plus, &mut rng, seed)
        })
        .collect()
}

/// `(n_{+1} - n_{-1}) / N` and its standard error `sqrt((1 - E^2) / N)`.
pub fn estimate_expectation<T: Real>(log: &EventLog<T>) -> Result<(T, T)> {
    expectation_from_counts(&log.counts())
}

pub fn expectation_from_counts<T: Real>(counts: &CountTable) -> Result<(T, T)> {
    let n = counts.total();
    if n < 2 {
        return Err(Error::EmptyLog {
            required: 2,
            actual: n as usize,
        });
    }
    let nt = count::<T>(n);
    let e = (count::<T>(counts.get(0)) - count::<T>(counts.get(1))) / nt;
    let stderr = ((T::one() - e * e).max(T::zero()) / nt).sqrt();
    Ok((e, stderr))
}

/// Lag-one autocorrelation of an outcome series in units of its standard
/// error under independence; large values contradict independent events.
pub fn lag_one_correlation_sigma<T: Real>(outcomes: &[Outcome]) -> Result<T> {
    let n = outcomes.len();
    if n < 3 {
        return Err(Error::EmptyLog { required: 3, actual: n });
    }
    let xs: Vec<T> = outcomes.iter().map(|o| o.as_real::<T>()).collect();
    let mean = xs.iter().copied().sum::<T>() / count::<T>(n as u64);
    let var = xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>();
    if var == T::zero() {
        return Ok(T::zero());
    }
    let cov = xs.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<T>();
    Ok((cov / var).abs() * count::<T>(n as u64).sqrt())
}

/// Best robust description of tabulated expectations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustFit<T> {
    pub winding: u32,
    pub phase: Phase,
    /// RMS of fitted minus observed expectations.
    pub residual: T,
    /// `K^2`.
    pub fisher: T,
}

impl<T: Real> RobustFit<T> {
    pub fn model(&self) -> DichotomicModel<T> {
        DichotomicModel::robust(self.winding, self.phase)
    }
}

/// Exhaustive fit of `cos(K theta + phi)`, `K = 1..=k_max`, `phi ∈ {0, π}`.
///
/// Noiseless data: ties within `1e-9` resolve to the smallest `K`.
pub fn fit_robust_solution<T: Real>(thetas: &[T], e_hats: &[T], k_max: u32) -> Result<RobustFit<T>> {
    fit_robust(thetas, e_hats, k_max, lit::<T>(1e-9))
}

/// As [`fit_robust_solution`], with the tie tolerance set to the mean
/// standard error of the estimates: the smallest `K` whose residual is within
/// one standard error of the best is returned.
pub fn fit_robust_solution_with_errors<T: Real>(
    thetas: &[T],
    e_hats: &[T],
    stderrs: &[T],
    k_max: u32,
) -> Result<RobustFit<T>> {
    if stderrs.len() != thetas.len() {
        return Err(Error::MismatchedDimensions {
            expected: thetas.len(),
            actual: stderrs.len(),
        });
    }
    let mean = stderrs.iter().copied().sum::<T>() / count::<T>(stderrs.len().max(1) as u64);
    fit_robust(thetas, e_hats, k_max, mean.max(lit::<T>(1e-9)))
}

fn fit_robust<T: Real>(thetas: &[T], e_hats: &[T], k_max: u32, tie_tol: T) -> Result<RobustFit<T>> {
    if thetas.len() != e_hats.len() {
        return Err(Error::MismatchedDimensions {
            expected: thetas.len(),
            actual: e_hats.len(),
        });
    }
    if k_max < 1 {
        return Err(Error::InvalidInput("k_max must be at least 1".into()));
    }
    check_theta_design(thetas)?;

    let mut scores = Vec::with_capacity(2 * k_max as usize);
    for k in 1..=k_max {
        for phase in Phase::both() {
            let model = DichotomicModel::<T>::robust(k, phase);
            let resid: Vec<T> = thetas
                .iter()
                .zip(e_hats)
                .map(|(&t, &e)| model.expectation(t) - e)
                .collect();
            scores.push((k, phase, rms(&resid)));
        }
    }
    let best = scores.iter().map(|s| s.2).fold(T::infinity(), T::min);
    let mean = e_hats.iter().copied().sum::<T>() / count::<T>(e_hats.len() as u64);
    let constant: Vec<T> = e_hats.iter().map(|&e| e - mean).collect();
    let constant = rms(&constant);
    if best + tie_tol >= constant {
        return Err(Error::NoSignal {
            best: to_f64(best),
            constant: to_f64(constant),
        });
    }
    let (winding, phase, residual) = scores
        .iter()
        .filter(|s| s.2 <= best + tie_tol)
        .min_by(|a, b| {
            a.0.cmp(&b.0)
                .then(a.2.partial_cmp(&b.2).unwrap_or(std::cmp::Ordering::Equal))
        })
        .copied()
        .expect("at least one candidate within tolerance of the best");
    Ok(RobustFit {
        winding,
        phase,
        residual,
        fisher: count::<T>((winding as u64) * (winding as u64)),
    })
}

fn check_theta_design<T: Real>(thetas: &[T]) -> Result<()> {
    let mut sorted: Vec<T> = thetas.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let tol = lit::<T>(1e-9);
    let mut distinct = 0;
    let mut last: Option<T> = None;
    for &t in &sorted {
        if last.is_none_or(|l| (t - l).abs() > lit::<T>(1e-12)) {
            distinct += 1;
            last = Some(t);
        }
    }
    if distinct < 8 {
        return Err(Error::InsufficientData(format!(
            "{distinct} distinct angles, need at least 8"
        )));
    }
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    if lo > tol || hi < T::PI() - tol {
        return Err(Error::InsufficientData(format!(
            "angles span [{lo}, {hi}], need at least [0, pi]"
        )));
    }
    Ok(())
}
