//! Einstein-Podolsky-Rosen-Bohm experiment: pair simulation, correlation
//! estimates, and the five-sigma compliance test against the singlet form.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::UnitVector3;
use crate::inference::{fisher_dichotomic, CountTable, DichotomicModel, ExperimentConditions, Outcome};
use crate::num::{count, lit, to_f64, Real};
use crate::rng::{Categorical, EventRng};

/// Compliance threshold in standard errors.
pub const COMPLIANCE_SIGMA: f64 = 5.0;

/// Minimum log length for the marginal and compliance tests.
pub const MIN_TEST_EVENTS: usize = 100;

/// Outcome pair `{x, y}` of the two stations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairOutcome {
    pub x: Outcome,
    pub y: Outcome,
}

impl PairOutcome {
    pub fn new(x: Outcome, y: Outcome) -> Self {
        Self { x, y }
    }

    /// `[x, y] = (1 - x)/2 + (1 - y)`: `x` is the low bit, `y` the high bit.
    pub fn index(self) -> usize {
        self.x.index() + 2 * self.y.index()
    }

    pub fn from_index(i: usize) -> Self {
        Self {
            x: Outcome::from_index(i & 1),
            y: Outcome::from_index((i >> 1) & 1),
        }
    }

    /// All four pairs in index order.
    pub fn all() -> [PairOutcome; 4] {
        [0, 1, 2, 3].map(Self::from_index)
    }

    pub fn product(self) -> i8 {
        self.x.value() * self.y.value()
    }
}

/// Sign of the pair correlation: the singlet `<xy> = -a1·a2` (φ = π) or the
/// relabelled `<xy> = +a1·a2` (φ = 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum CorrelationSign {
    #[default]
    #[serde(rename = "-")]
    Singlet,
    #[serde(rename = "+")]
    Positive,
}

impl CorrelationSign {
    pub fn as_real<T: Real>(self) -> T {
        match self {
            CorrelationSign::Singlet => -T::one(),
            CorrelationSign::Positive => T::one(),
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CorrelationSign::Singlet => "-",
            CorrelationSign::Positive => "+",
        }
    }
}

/// `(1 - x y a1·a2) / 4`.
pub fn eprb_probability<T: Real>(p: PairOutcome, a1: &UnitVector3<T>, a2: &UnitVector3<T>) -> T {
    eprb_probability_signed(p, a1, a2, CorrelationSign::Singlet)
}

pub fn eprb_probability_signed<T: Real>(
    p: PairOutcome,
    a1: &UnitVector3<T>,
    a2: &UnitVector3<T>,
    sign: CorrelationSign,
) -> T {
    let xy = lit::<T>(p.product() as f64);
    lit::<T>(0.25) * (T::one() + sign.as_real::<T>() * xy * a1.dot(a2))
}

/// Compound event of `N` detected pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct PairEventLog<T> {
    pairs: Vec<PairOutcome>,
    a1: UnitVector3<T>,
    a2: UnitVector3<T>,
    theta: T,
    seed: u64,
    conditions: ExperimentConditions,
}

impl<T: Real> PairEventLog<T> {
    /// `theta` is canonicalized to `arccos(a1·a2) ∈ [0, π]`.
    pub fn new(
        pairs: Vec<PairOutcome>,
        a1: UnitVector3<T>,
        a2: UnitVector3<T>,
        seed: u64,
        conditions: ExperimentConditions,
    ) -> Self {
        Self {
            pairs,
            theta: a1.angle_to(&a2),
            a1,
            a2,
            seed,
            conditions,
        }
    }

    pub fn pairs(&self) -> &[PairOutcome] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn a1(&self) -> &UnitVector3<T> {
        &self.a1
    }

    pub fn a2(&self) -> &UnitVector3<T> {
        &self.a2
    }

    pub fn theta(&self) -> T {
        self.theta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn conditions(&self) -> &ExperimentConditions {
        &self.conditions
    }

    /// Pair counts `n_{xy}` in `[x, y]` order.
    pub fn counts(&self) -> CountTable {
        let mut c = vec![0u64; 4];
        for p in &self.pairs {
            c[p.index()] += 1;
        }
        CountTable::new(c)
    }
}

pub fn sample_eprb<T: Real>(a1: &UnitVector3<T>, a2: &UnitVector3<T>, n: usize, seed: u64) -> PairEventLog<T> {
    sample_eprb_signed(a1, a2, n, CorrelationSign::Singlet, seed)
}

pub fn sample_eprb_signed<T: Real>(
    a1: &UnitVector3<T>,
    a2: &UnitVector3<T>,
    n: usize,
    sign: CorrelationSign,
    seed: u64,
) -> PairEventLog<T> {
    sample_with(a1, a2, n, sign, &mut EventRng::new(seed), seed)
}

/// Independent repeats on ChaCha streams derived from `seed`, in repeat order.
pub fn sample_eprb_repeats<T: Real>(
    a1: &UnitVector3<T>,
    a2: &UnitVector3<T>,
    n: usize,
    seed: u64,
    repeats: usize,
) -> Vec<PairEventLog<T>> {
    (0..repeats)
        .into_par_iter()
        .map(|r| {
            let mut rng = EventRng::for_repeat(seed, r as u64);
            sample_with(a1, a2, n, CorrelationSign::Singlet, &mut rng, seed)
        })
        .collect()
}

fn sample_with<T: Real>(
    a1: &UnitVector3<T>,
    a2: &UnitVector3<T>,
    n: usize,
    sign: CorrelationSign,
    rng: &mut EventRng,
    seed: u64,
) -> PairEventLog<T> {
    let weights: Vec<f64> = PairOutcome::all()
        .iter()
        .map(|&p| to_f64(eprb_probability_signed(p, a1, a2, sign)).max(0.0))
        .collect();
    let sampler = Categorical::new(&weights);
    let pairs = (0..n).map(|_| PairOutcome::from_index(sampler.sample(rng))).collect();
    let conditions = ExperimentConditions::new("eprb").with("correlation_sign", sign.symbol());
    PairEventLog::new(pairs, *a1, *a2, seed, conditions)
}

/// Sample moments of a pair log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport<T> {
    pub xy_mean: T,
    pub x_mean: T,
    pub y_mean: T,
    /// `sqrt((1 - xy_mean^2) / n)`.
    pub stderr_xy: T,
    pub n: u64,
}

pub fn correlation_report<T: Real>(log: &PairEventLog<T>) -> Result<CorrelationReport<T>> {
    correlation_from_counts(&log.counts())
}

/// Moments from pair counts in `[x, y]` order.
pub fn correlation_from_counts<T: Real>(counts: &CountTable) -> Result<CorrelationReport<T>> {
    if counts.categories() != 4 {
        return Err(Error::MismatchedDimensions {
            expected: 4,
            actual: counts.categories(),
        });
    }
    let n = counts.total();
    if n < 2 {
        return Err(Error::EmptyLog {
            required: 2,
            actual: n as usize,
        });
    }
    let nt = count::<T>(n);
    let (mut sx, mut sy, mut sxy) = (T::zero(), T::zero(), T::zero());
    for p in PairOutcome::all() {
        let k = count::<T>(counts.get(p.index()));
        sx += p.x.as_real::<T>() * k;
        sy += p.y.as_real::<T>() * k;
        sxy += lit::<T>(p.product() as f64) * k;
    }
    let xy_mean = sxy / nt;
    Ok(CorrelationReport {
        xy_mean,
        x_mean: sx / nt,
        y_mean: sy / nt,
        stderr_xy: ((T::one() - xy_mean * xy_mean).max(T::zero()) / nt).sqrt(),
        n,
    })
}

fn require_events<T: Real>(log: &PairEventLog<T>) -> Result<()> {
    if log.len() < MIN_TEST_EVENTS {
        return Err(Error::EmptyLog {
            required: MIN_TEST_EVENTS,
            actual: log.len(),
        });
    }
    Ok(())
}

/// Distances `|<x>| sqrt(N)` and `|<y>| sqrt(N)` of the marginals from the
/// uniform prediction, in standard errors of that prediction.
pub fn marginal_uniformity_test<T: Real>(log: &PairEventLog<T>) -> Result<(T, T)> {
    require_events(log)?;
    let r = correlation_report(log)?;
    let root_n = count::<T>(r.n).sqrt();
    Ok((r.x_mean.abs() * root_n, r.y_mean.abs() * root_n))
}

/// Outcome of a compliance test against a predicted `<xy>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplianceResult<T> {
    /// Distance of the observed `<xy>` from the prediction, in standard errors.
    pub sigma: T,
    pub pass: bool,
}

/// `sigma = |<xy> + a1·a2| / stderr_xy`; passes when `sigma <= 5`.
pub fn singlet_compliance_test<T: Real>(log: &PairEventLog<T>) -> Result<ComplianceResult<T>> {
    compliance_test(log, CorrelationSign::Singlet)
}

pub fn compliance_test<T: Real>(log: &PairEventLog<T>, sign: CorrelationSign) -> Result<ComplianceResult<T>> {
    require_events(log)?;
    let r = correlation_report(log)?;
    let predicted = sign.as_real::<T>() * log.a1().dot(log.a2());
    let deviation = (r.xy_mean - predicted).abs();
    // Perfect (anti)correlation has zero sample variance; any deviation is
    // then infinitely significant.
    let sigma = if r.stderr_xy > T::zero() {
        deviation / r.stderr_xy
    } else if deviation <= lit::<T>(1e-12) {
        T::zero()
    } else {
        T::infinity()
    };
    Ok(ComplianceResult {
        sigma,
        pass: sigma <= lit::<T>(COMPLIANCE_SIGMA),
    })
}

/// Fisher information of the pair correlation; same form as the single
/// dichotomic case.
pub fn fisher_pair<T: Real>(model: &DichotomicModel<T>, theta: T) -> Result<T> {
    fisher_dichotomic(model, theta)
}

/// `sum_i ln P(x_i, y_i | theta)` over the ordered sequence of pairs.
pub fn log_sequence_iprob<T: Real>(log: &PairEventLog<T>, sign: CorrelationSign) -> T {
    let logs: Vec<T> = PairOutcome::all()
        .iter()
        .map(|&p| eprb_probability_signed(p, log.a1(), log.a2(), sign).ln())
        .collect();
    log.counts()
        .counts()
        .iter()
        .zip(&logs)
        .filter(|(&n, _)| n > 0)
        .map(|(&n, &l)| count::<T>(n) * l)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rotation3;
    use crate::inference::{ln_factorial, log_multinomial_iprob, Phase};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn at_angle(theta: f64) -> (UnitVector3<f64>, UnitVector3<f64>) {
        (UnitVector3::z_axis(), UnitVector3::in_xz_plane(theta))
    }

    fn pair(x: i64, y: i64) -> PairOutcome {
        PairOutcome::new(Outcome::new(x).unwrap(), Outcome::new(y).unwrap())
    }

    #[test]
    fn index_convention() {
        assert_eq!(pair(1, 1).index(), 0);
        assert_eq!(pair(-1, 1).index(), 1);
        assert_eq!(pair(1, -1).index(), 2);
        assert_eq!(pair(-1, -1).index(), 3);
        for i in 0..4 {
            assert_eq!(PairOutcome::from_index(i).index(), i);
        }
    }

    #[test]
    fn probability_examples() {
        let z = UnitVector3::<f64>::z_axis();
        assert_eq!(eprb_probability(pair(1, 1), &z, &z), 0.0);
        for p in PairOutcome::all() {
            assert_eq!(eprb_probability(p, &z, &UnitVector3::x_axis()), 0.25);
        }
        assert_eq!(eprb_probability(pair(1, -1), &z, &z), 0.5);
    }

    #[test]
    fn normalization_and_marginals() {
        let mut rng = EventRng::new(2);
        for _ in 0..100 {
            let a1 = UnitVector3::<f64>::random(&mut rng);
            let a2 = UnitVector3::<f64>::random(&mut rng);
            let total: f64 = PairOutcome::all().iter().map(|&p| eprb_probability(p, &a1, &a2)).sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-15);
            for x in Outcome::both() {
                let m: f64 = Outcome::both()
                    .iter()
                    .map(|&y| eprb_probability(PairOutcome::new(x, y), &a1, &a2))
                    .sum();
                assert_abs_diff_eq!(m, 0.5, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn joint_rotation_invariance() {
        let mut rng = EventRng::new(4);
        let (a1, a2) = at_angle(0.9);
        for _ in 0..100 {
            let r = Rotation3::random(&mut rng);
            for p in PairOutcome::all() {
                assert_abs_diff_eq!(
                    eprb_probability(p, &r.apply(&a1), &r.apply(&a2)),
                    eprb_probability(p, &a1, &a2),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn parallel_magnets_anticorrelate() {
        let (a1, _) = at_angle(0.0);
        let log = sample_eprb(&a1, &a1, 1000, 17);
        assert!(log.pairs().iter().all(|p| p.x == p.y.flipped()));
    }

    #[test]
    fn orthogonal_magnets_uniform_cells() {
        let (a1, a2) = at_angle(PI / 2.0);
        let log = sample_eprb(&a1, &a2, 1_000_000, 23);
        let sd = (1e6f64 * 0.25 * 0.75).sqrt();
        for &n in log.counts().counts() {
            assert!((n as f64 - 250_000.0).abs() < 5.0 * sd, "cell count {n}");
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let (a1, a2) = at_angle(1.0);
        assert_eq!(sample_eprb(&a1, &a2, 100, 3), sample_eprb(&a1, &a2, 100, 3));
    }

    #[test]
    fn report_examples() {
        let counts = CountTable::new(vec![0, 0, 10, 0]);
        let r = correlation_from_counts::<f64>(&counts).unwrap();
        assert_eq!((r.xy_mean, r.x_mean, r.y_mean), (-1.0, 1.0, -1.0));

        // n_xy = N P(x, y | theta) with theta = pi/3: N = 400 gives integers.
        let theta = PI / 3.0;
        let (a1, a2) = at_angle(theta);
        let cells: Vec<u64> = PairOutcome::all()
            .iter()
            .map(|&p| (400.0 * eprb_probability(p, &a1, &a2)).round() as u64)
            .collect();
        let r = correlation_from_counts::<f64>(&CountTable::new(cells)).unwrap();
        assert_abs_diff_eq!(r.xy_mean, -theta.cos(), epsilon = 1e-12);
    }

    #[test]
    fn antiparallel_magnets_correlate() {
        let (a1, a2) = at_angle(PI);
        let r = correlation_report(&sample_eprb(&a1, &a2, 10_000, 5)).unwrap();
        assert!(r.xy_mean > 0.999);
    }

    #[test]
    fn marginal_examples() {
        let balanced = PairEventLog::new(
            (0..400).map(|i| PairOutcome::from_index(i % 4)).collect(),
            UnitVector3::<f64>::z_axis(),
            UnitVector3::x_axis(),
            0,
            ExperimentConditions::new("eprb"),
        );
        assert_eq!(marginal_uniformity_test(&balanced).unwrap(), (0.0, 0.0));

        let all_plus = PairEventLog::new(
            (0..10_000).map(|i| PairOutcome::from_index(2 * (i % 2))).collect(),
            UnitVector3::<f64>::z_axis(),
            UnitVector3::x_axis(),
            0,
            ExperimentConditions::new("eprb"),
        );
        let (sx, _) = marginal_uniformity_test(&all_plus).unwrap();
        assert_abs_diff_eq!(sx, 100.0, epsilon = 1e-9);

        let short = sample_eprb(&UnitVector3::<f64>::z_axis(), &UnitVector3::x_axis(), 50, 1);
        assert!(matches!(marginal_uniformity_test(&short), Err(Error::EmptyLog { .. })));
    }

    #[test]
    fn simulated_marginals_are_uniform() {
        let (a1, a2) = at_angle(0.7);
        let (sx, sy) = marginal_uniformity_test(&sample_eprb(&a1, &a2, 1_000_000, 77)).unwrap();
        assert!(sx < 5.0 && sy < 5.0);
    }

    #[test]
    fn compliance_on_exact_counts() {
        let (a1, a2) = at_angle(PI / 3.0);
        let pairs: Vec<PairOutcome> = PairOutcome::all()
            .iter()
            .flat_map(|&p| {
                let n = (400.0 * eprb_probability(p, &a1, &a2)).round() as usize;
                std::iter::repeat_n(p, n)
            })
            .collect();
        let log = PairEventLog::new(pairs, a1, a2, 0, ExperimentConditions::new("exact"));
        let r = singlet_compliance_test(&log).unwrap();
        assert!(r.sigma < 1e-9 && r.pass);
    }

    #[test]
    fn compliance_detects_reduced_correlation() {
        // <xy> = -0.9 a1·a2 corresponds to a singlet with visibility 0.9.
        let (a1, a2) = at_angle(PI / 3.0);
        let weights: Vec<f64> = PairOutcome::all()
            .iter()
            .map(|p| 0.25 * (1.0 - 0.9 * p.product() as f64 * a1.dot(&a2)))
            .collect();
        let sampler = Categorical::new(&weights);
        let mut rng = EventRng::new(99);
        let pairs = (0..1_000_000)
            .map(|_| PairOutcome::from_index(sampler.sample(&mut rng)))
            .collect();
        let log = PairEventLog::new(pairs, a1, a2, 99, ExperimentConditions::new("reduced"));
        let r = singlet_compliance_test(&log).unwrap();
        assert!(!r.pass, "sigma = {}", r.sigma);
    }

    #[test]
    fn fisher_pair_examples() {
        let singlet = DichotomicModel::<f64>::robust(1, Phase::Pi);
        assert_abs_diff_eq!(fisher_pair(&singlet, 1.1).unwrap(), 1.0, epsilon = 1e-9);
        let k2 = DichotomicModel::<f64>::robust(2, Phase::Zero);
        assert_abs_diff_eq!(fisher_pair(&k2, 0.3).unwrap(), 4.0, epsilon = 1e-9);
        let flat = DichotomicModel::<f64>::custom(|_| -0.2).unwrap();
        assert_eq!(fisher_pair(&flat, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn product_rule_structure() {
        let (a1, a2) = at_angle(1.3);
        let log = sample_eprb(&a1, &a2, 500, 8);
        let seq = log_sequence_iprob(&log, CorrelationSign::Singlet);
        let direct: f64 = log.pairs().iter().map(|&p| eprb_probability(p, &a1, &a2).ln()).sum();
        assert_abs_diff_eq!(seq, direct, epsilon = 1e-9);
        let probs: Vec<f64> = PairOutcome::all()
            .iter()
            .map(|&p| eprb_probability(p, &a1, &a2))
            .collect();
        let counts = log.counts();
        let multinomial = log_multinomial_iprob(&counts, &probs).unwrap();
        let coefficient = ln_factorial(counts.total()) - counts.counts().iter().map(|&n| ln_factorial(n)).sum::<f64>();
        assert_abs_diff_eq!(multinomial, seq + coefficient, epsilon = 1e-8);
    }

    #[test]
    fn no_signaling_in_marginals() {
        let a1 = UnitVector3::<f64>::z_axis();
        for (i, theta) in [0.2, 1.0, 2.0, 3.0].iter().enumerate() {
            let a2 = UnitVector3::in_xz_plane(*theta);
            let r = correlation_report(&sample_eprb(&a1, &a2, 200_000, 300 + i as u64)).unwrap();
            assert!(r.x_mean.abs() * (2e5f64).sqrt() < 5.0);
        }
    }

    #[test]
    fn positive_sign_relabels() {
        let (a1, a2) = at_angle(0.0);
        let log = sample_eprb_signed(&a1, &a2, 1000, CorrelationSign::Positive, 2);
        assert!(log.pairs().iter().all(|p| p.x == p.y));
        assert!(compliance_test(&log, CorrelationSign::Positive).unwrap().pass);
        assert!(!singlet_compliance_test(&log).unwrap().pass);
    }
}
