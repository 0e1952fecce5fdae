//! Plausibility algebra, multinomial i-probs, evidence, and Fisher
//! information for dichotomic experiments.
//!
//! An *i-prob* is the inference probability of an outcome given the
//! experimental conditions. For a dichotomic outcome `x = ±1` at angle
//! `theta` every admissible i-prob can be written `(1 + x E(theta)) / 2`,
//! and robust experiments are exactly those with `E(theta) = cos(K theta + phi)`.
//!
//! Categorical counts are indexed in the order `(+1, -1)` for single
//! outcomes and `[x, y] = (1 - x)/2 + (1 - y)` for pairs.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::num::{count, lit, to_f64, Real};

/// Outcome of a single dichotomic measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub struct Outcome(i8);

impl Outcome {
    pub const PLUS: Outcome = Outcome(1);
    pub const MINUS: Outcome = Outcome(-1);

    pub fn new(value: i64) -> Result<Self> {
        match value {
            1 => Ok(Self::PLUS),
            -1 => Ok(Self::MINUS),
            v => Err(Error::InvalidInput(format!("outcome must be +1 or -1, got {v}"))),
        }
    }

    pub fn value(self) -> i8 {
        self.0
    }

    pub fn as_real<T: Real>(self) -> T {
        if self.0 > 0 {
            T::one()
        } else {
            -T::one()
        }
    }

    /// Position in the `(+1, -1)` ordering.
    pub fn index(self) -> usize {
        ((1 - self.0) / 2) as usize
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Self::PLUS
        } else {
            Self::MINUS
        }
    }

    pub fn flipped(self) -> Self {
        Outcome(-self.0)
    }

    pub fn both() -> [Outcome; 2] {
        [Self::PLUS, Self::MINUS]
    }
}

impl TryFrom<i8> for Outcome {
    type Error = Error;
    fn try_from(v: i8) -> Result<Self> {
        Self::new(v as i64)
    }
}

impl From<Outcome> for i8 {
    fn from(o: Outcome) -> i8 {
        o.0
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+}", self.0)
    }
}

/// Counts of each category of a compound event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountTable {
    counts: Vec<u64>,
}

impl CountTable {
    pub fn new(counts: Vec<u64>) -> Self {
        Self { counts }
    }

    /// Counts `(n_{+1}, n_{-1})`.
    pub fn dichotomic(n_plus: u64, n_minus: u64) -> Self {
        Self::new(vec![n_plus, n_minus])
    }

    pub fn from_outcomes<'a>(outcomes: impl IntoIterator<Item = &'a Outcome>) -> Self {
        let mut counts = vec![0u64; 2];
        for o in outcomes {
            counts[o.index()] += 1;
        }
        Self { counts }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn get(&self, category: usize) -> u64 {
        self.counts.get(category).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn categories(&self) -> usize {
        self.counts.len()
    }
}

/// Integration constant of the robust solution, restricted to `{0, π}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Zero,
    Pi,
}

impl Phase {
    pub fn value<T: Real>(self) -> T {
        match self {
            Phase::Zero => T::zero(),
            Phase::Pi => T::PI(),
        }
    }

    pub fn both() -> [Phase; 2] {
        [Phase::Zero, Phase::Pi]
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::Zero => write!(f, "0"),
            Phase::Pi => write!(f, "pi"),
        }
    }
}

type ExpectationFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// Expectation `E(theta)` of a dichotomic outcome as a function of the angle.
#[derive(Clone)]
pub enum DichotomicModel<T> {
    /// `E(theta) = cos(K theta + phi)`.
    Robust { winding: u32, phase: Phase },
    /// Arbitrary expectation function; derivatives by finite differences.
    Custom(ExpectationFn<T>),
}

impl<T: Real> fmt::Debug for DichotomicModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Robust { winding, phase } => f
                .debug_struct("Robust")
                .field("winding", winding)
                .field("phase", phase)
                .finish(),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Step of the centered difference used for non-closed-form `E'(theta)`.
pub const FINITE_DIFFERENCE_STEP: f64 = 1e-5;

/// Largest admissible `|epsilon|` in the evidence functionals.
pub const MAX_EVIDENCE_SHIFT: f64 = std::f64::consts::PI / 8.0;

impl<T: Real> DichotomicModel<T> {
    pub fn robust(winding: u32, phase: Phase) -> Self {
        Self::Robust { winding, phase }
    }

    /// Wraps an arbitrary expectation function after checking `|E| <= 1` on a
    /// 1024-point grid over one period.
    pub fn custom(f: impl Fn(T) -> T + Send + Sync + 'static) -> Result<Self> {
        let tol = lit::<T>(1e-12);
        for i in 0..1024 {
            let theta = lit::<T>(2.0 * std::f64::consts::PI * i as f64 / 1024.0);
            let e = f(theta);
            if !(e.abs() <= T::one() + tol) {
                return Err(Error::InvalidInput(format!(
                    "expectation {e} outside [-1, 1] at theta = {theta}"
                )));
            }
        }
        Ok(Self::Custom(Arc::new(f)))
    }

    pub fn expectation(&self, theta: T) -> T {
        match self {
            Self::Robust { winding, phase } => (count::<T>(*winding as u64) * theta + phase.value::<T>()).cos(),
            Self::Custom(f) => f(theta),
        }
    }

    /// `dE/dtheta`, analytic for the robust family.
    pub fn derivative(&self, theta: T) -> T {
        match self {
            Self::Robust { winding, phase } => {
                let k = count::<T>(*winding as u64);
                -k * (k * theta + phase.value::<T>()).sin()
            }
            Self::Custom(f) => {
                let h = lit::<T>(FINITE_DIFFERENCE_STEP);
                (f(theta + h) - f(theta - h)) / (h + h)
            }
        }
    }

    pub fn winding(&self) -> Option<u32> {
        match self {
            Self::Robust { winding, .. } => Some(*winding),
            Self::Custom(_) => None,
        }
    }

    /// i-probs `(P(+1|theta), P(-1|theta))`.
    pub fn probabilities(&self, theta: T) -> [T; 2] {
        let e = self.expectation(theta);
        let half = lit::<T>(0.5);
        [half * (T::one() + e), half * (T::one() - e)]
    }
}

/// Fixed conditions `Z` under which an experiment is performed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentConditions {
    label: String,
    #[serde(default)]
    parameters: BTreeMap<String, String>,
}

impl ExperimentConditions {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            parameters: BTreeMap::new(),
        }
    }

    /// Returns a copy with one more parameter set.
    pub fn with(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.parameters.insert(key.into(), value.to_string());
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn parameters(&self) -> &BTreeMap<String, String> {
        &self.parameters
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.parameters.get(key).map(String::as_str)
    }
}

/// `(1 + x E(theta)) / 2`.
pub fn iprob_dichotomic<T: Real>(x: Outcome, model: &DichotomicModel<T>, theta: T) -> T {
    lit::<T>(0.5) * (T::one() + x.as_real::<T>() * model.expectation(theta))
}

/// `ln n!`, exact summation below 32 and log-gamma beyond.
pub fn ln_factorial(n: u64) -> f64 {
    if n < 32 {
        (2..=n).map(|k| (k as f64).ln()).sum()
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

/// Log multinomial i-prob `ln[N! prod_x p_x^{n_x} / n_x!]`.
///
/// Returns negative infinity, not an error, when a category with zero
/// probability has been observed.
pub fn log_multinomial_iprob<T: Real>(counts: &CountTable, probs: &[T]) -> Result<T> {
    check_distribution(probs, counts.categories())?;
    let mut log_p = T::zero();
    for (&n, &p) in counts.counts().iter().zip(probs) {
        if n == 0 {
            continue;
        }
        if p == T::zero() {
            return Ok(T::neg_infinity());
        }
        log_p += count::<T>(n) * p.ln();
    }
    let combinatorial = ln_factorial(counts.total()) - counts.counts().iter().map(|&n| ln_factorial(n)).sum::<f64>();
    Ok(lit::<T>(combinatorial) + log_p)
}

fn check_distribution<T: Real>(probs: &[T], categories: usize) -> Result<()> {
    if probs.len() != categories {
        return Err(Error::MismatchedDimensions {
            expected: categories,
            actual: probs.len(),
        });
    }
    if let Some(p) = probs.iter().find(|p| !(**p >= T::zero() && **p <= T::one())) {
        return Err(Error::InvalidInput(format!("probability {p} outside [0, 1]")));
    }
    let sum: T = probs.iter().copied().sum();
    let tol = lit::<T>(1e-12).max(T::epsilon() * lit::<T>(8.0 * probs.len() as f64));
    if (sum - T::one()).abs() > tol {
        return Err(Error::NotNormalized { sum: to_f64(sum) });
    }
    Ok(())
}

fn check_shift<T: Real>(epsilon: T) -> Result<()> {
    if !(epsilon.abs() < lit::<T>(MAX_EVIDENCE_SHIFT)) {
        return Err(Error::InvalidInput(format!(
            "|epsilon| = {} must be below pi/8",
            epsilon.abs()
        )));
    }
    Ok(())
}

fn check_nondegenerate<T: Real>(probs: &[T; 2], theta: T) -> Result<()> {
    if probs.iter().any(|&p| !(p > T::zero() && p < T::one())) {
        return Err(Error::DegenerateProbability(format!(
            "i-probs ({}, {}) at theta = {theta} are not strictly inside (0, 1)",
            probs[0], probs[1]
        )));
    }
    Ok(())
}

/// Evidence `ln P(D|theta+epsilon) / P(D|theta)` of the shifted hypothesis.
///
/// The combinatorial factor cancels, so this is evaluated as
/// `sum_x n_x [ln p_x(theta+epsilon) - ln p_x(theta)]`.
pub fn evidence<T: Real>(counts: &CountTable, model: &DichotomicModel<T>, theta: T, epsilon: T) -> Result<T> {
    check_shift(epsilon)?;
    if counts.categories() != 2 {
        return Err(Error::MismatchedDimensions {
            expected: 2,
            actual: counts.categories(),
        });
    }
    let p0 = model.probabilities(theta);
    let p1 = model.probabilities(theta + epsilon);
    check_nondegenerate(&p0, theta)?;
    check_nondegenerate(&p1, theta + epsilon)?;
    Ok(counts
        .counts()
        .iter()
        .zip(p0.iter().zip(&p1))
        .map(|(&n, (&a, &b))| count::<T>(n) * (b.ln() - a.ln()))
        .sum())
}

/// Second-order expansion `-(N epsilon^2 / 2) I_F(theta)` of the evidence,
/// valid when the counts match the i-probs at `theta`.
pub fn evidence_quadratic<T: Real>(counts: &CountTable, model: &DichotomicModel<T>, theta: T, epsilon: T) -> Result<T> {
    check_shift(epsilon)?;
    check_nondegenerate(&model.probabilities(theta), theta)?;
    check_nondegenerate(&model.probabilities(theta + epsilon), theta + epsilon)?;
    let n = count::<T>(counts.total());
    Ok(-(n * epsilon * epsilon / lit::<T>(2.0)) * fisher_dichotomic(model, theta)?)
}

/// `|Ev - Ev_quadratic| / (N |epsilon|^3)`; bounded as `epsilon -> 0` when the
/// quadratic expansion is valid.
pub fn evidence_cubic_ratio<T: Real>(
    counts: &CountTable,
    model: &DichotomicModel<T>,
    theta: T,
    epsilon: T,
) -> Result<T> {
    let full = evidence(counts, model, theta, epsilon)?;
    let quad = evidence_quadratic(counts, model, theta, epsilon)?;
    let n = count::<T>(counts.total());
    Ok((full - quad).abs() / (n * epsilon.abs().powi(3)))
}

/// Fisher information `E'(theta)^2 / (1 - E(theta)^2)` of a dichotomic model.
pub fn fisher_dichotomic<T: Real>(model: &DichotomicModel<T>, theta: T) -> Result<T> {
    if model.winding() == Some(0) {
        // Constant i-probs: the derivative vanishes identically.
        return Ok(T::zero());
    }
    let e = model.expectation(theta);
    let denom = (T::one() - e) * (T::one() + e);
    if !(denom > T::epsilon()) {
        return Err(Error::DegenerateProbability(format!(
            "|E(theta)| = {} at theta = {theta}",
            e.abs()
        )));
    }
    let d = model.derivative(theta);
    Ok(d * d / denom)
}

/// Relative frequencies `n_x / N` of observed counts.
///
/// Kept apart from [`DichotomicModel`]: frequencies are data, i-probs are
/// inferences, and the two meet only where a robust description identifies
/// them.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalFrequencies<T> {
    frequencies: Vec<T>,
    total: u64,
}

impl<T: Real> EmpiricalFrequencies<T> {
    pub fn frequencies(&self) -> &[T] {
        &self.frequencies
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// `sum_x x f(x)` for dichotomic data.
    pub fn expectation(&self) -> T {
        self.frequencies
            .iter()
            .enumerate()
            .map(|(i, &f)| Outcome::from_index(i).as_real::<T>() * f)
            .sum()
    }

    /// Largest absolute difference from the model i-probs at `theta`.
    pub fn max_deviation(&self, model: &DichotomicModel<T>, theta: T) -> T {
        let p = model.probabilities(theta);
        self.frequencies
            .iter()
            .zip(p.iter())
            .map(|(&f, &q)| (f - q).abs())
            .fold(T::zero(), T::max)
    }
}

/// Frequencies `n_x / N` of a count table.
pub fn empirical_model<T: Real>(counts: &CountTable) -> Result<EmpiricalFrequencies<T>> {
    let total = counts.total();
    if total == 0 {
        return Err(Error::EmptyLog { required: 1, actual: 0 });
    }
    let n = count::<T>(total);
    Ok(EmpiricalFrequencies {
        frequencies: counts.counts().iter().map(|&k| count::<T>(k) / n).collect(),
        total,
    })
}

/// Consistency checks for the three rules of plausible reasoning.
pub mod rules {
    use super::*;

    /// `P(A|Z) + P(not A|Z) = 1`.
    pub fn check_sum_rule<T: Real>(p_a: T, p_not_a: T, tol: T) -> Result<()> {
        let dev = (p_a + p_not_a - T::one()).abs();
        if dev > tol {
            return Err(Error::InvalidInput(format!("sum rule violated by {dev}")));
        }
        Ok(())
    }

    /// `P(AB|Z) = P(A|BZ) P(B|Z) = P(B|AZ) P(A|Z)`.
    pub fn check_product_rule<T: Real>(p_ab: T, p_a_given_b: T, p_b: T, p_b_given_a: T, p_a: T, tol: T) -> Result<()> {
        let d1 = (p_ab - p_a_given_b * p_b).abs();
        let d2 = (p_ab - p_b_given_a * p_a).abs();
        if d1.max(d2) > tol {
            return Err(Error::InvalidInput(format!("product rule violated by {}", d1.max(d2))));
        }
        Ok(())
    }

    /// `P(A and not A|Z) = 0` and `P(A or not A|Z) = 1`.
    pub fn check_exclusion<T: Real>(p_contradiction: T, p_tautology: T, tol: T) -> Result<()> {
        if p_contradiction.abs() > tol || (p_tautology - T::one()).abs() > tol {
            return Err(Error::InvalidInput(format!(
                "P(A not-A) = {p_contradiction}, P(A + not-A) = {p_tautology}"
            )));
        }
        Ok(())
    }
}
