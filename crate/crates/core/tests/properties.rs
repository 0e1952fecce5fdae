use li_qt_core::eprb::{eprb_probability, eprb_probability_signed, CorrelationSign, PairOutcome};
use li_qt_core::geometry::{Rotation3, UnitVector3};
use li_qt_core::inference::{
    evidence, fisher_dichotomic, iprob_dichotomic, CountTable, DichotomicModel, Outcome, Phase,
};
use li_qt_core::linalg::CMatrix;
use li_qt_core::rng::EventRng;
use li_qt_core::separation::{
    build_eprb_operators, build_sg_operators, pauli_decompose, pauli_decompose4, PauliCoefficients2, PauliCoefficients4,
};
use li_qt_core::sg::{sg_probability, Sign};
use li_qt_core::wave::{
    bin_probabilities, evolve_tdse, gaussian_packet, polar_to_wave, wave_to_polar, EvolveOptions, PhysicalParams,
    PolarField, Potential, SpatialGrid,
};
use proptest::prelude::*;

fn unit(seed: u64) -> UnitVector3<f64> {
    UnitVector3::random(&mut EventRng::new(seed))
}

fn phase() -> impl Strategy<Value = Phase> {
    prop_oneof![Just(Phase::Zero), Just(Phase::Pi)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn sum_rule(k in 0u32..6, phi in phase(), theta in 0.0..std::f64::consts::PI) {
        let model = DichotomicModel::robust(k, phi);
        let total = iprob_dichotomic(Outcome::PLUS, &model, theta) + iprob_dichotomic(Outcome::MINUS, &model, theta);
        prop_assert!((total - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn robust_fisher_is_winding_squared(k in 1u32..5, phi in phase(), theta in 0.0..std::f64::consts::PI) {
        let model = DichotomicModel::robust(k, phi);
        // Skip points where E = ±1 to machine precision.
        prop_assume!((k as f64 * theta).sin().abs() > 1e-3);
        let f = fisher_dichotomic(&model, theta).unwrap();
        prop_assert!((f - (k * k) as f64).abs() < 1e-9);
    }

    #[test]
    fn evidence_antisymmetry(theta in 0.3..2.8f64, eps in -0.3..0.3f64, n in 1u64..5000) {
        prop_assume!(eps.abs() > 1e-6);
        let model = DichotomicModel::robust(1, Phase::Zero);
        // Counts generated exactly at theta + eps (rounded to integers).
        let p_plus = iprob_dichotomic(Outcome::PLUS, &model, theta + eps);
        let n_plus = (p_plus * n as f64).round() as u64;
        let counts = CountTable::dichotomic(n_plus, n - n_plus);
        let forward = evidence(&counts, &model, theta, eps).unwrap();
        let backward = evidence(&counts, &model, theta + eps, -eps).unwrap();
        prop_assert!((forward + backward).abs() <= 1e-12 * (1.0 + forward.abs()));
    }

    #[test]
    fn sg_rotational_invariance(s1 in any::<u64>(), s2 in any::<u64>(), s3 in any::<u64>()) {
        let (a, m) = (unit(s1), unit(s2));
        let r = Rotation3::random(&mut EventRng::new(s3));
        for x in Outcome::both() {
            let p = sg_probability(x, &a, &m, Sign::Plus);
            let q = sg_probability(x, &r.apply(&a), &r.apply(&m), Sign::Plus);
            prop_assert!((p - q).abs() < 1e-12);
            prop_assert_eq!(p, sg_probability(x.flipped(), &a, &m, Sign::Minus));
            prop_assert!((p - 0.5 * (1.0 + x.as_real::<f64>() * a.dot(&m))).abs() < 1e-15);
        }
    }

    #[test]
    fn eprb_invariance_normalization_marginals(s1 in any::<u64>(), s2 in any::<u64>(), s3 in any::<u64>()) {
        let (a1, a2) = (unit(s1), unit(s2));
        let r = Rotation3::random(&mut EventRng::new(s3));
        let mut total = 0.0;
        for p in PairOutcome::all() {
            let v = eprb_probability(p, &a1, &a2);
            prop_assert!((v - eprb_probability(p, &r.apply(&a1), &r.apply(&a2))).abs() < 1e-12);
            total += v;
        }
        prop_assert!((total - 1.0).abs() < 1e-15);
        for sign in [CorrelationSign::Singlet, CorrelationSign::Positive] {
            for x in Outcome::both() {
                let marginal: f64 = Outcome::both()
                    .iter()
                    .map(|&y| eprb_probability_signed(PairOutcome::new(x, y), &a1, &a2, sign))
                    .sum();
                prop_assert!((marginal - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn pauli_round_trip(c in prop::array::uniform4(-2.0..2.0f64)) {
        let coeffs = PauliCoefficients2 { c0: c[0], c: [c[1], c[2], c[3]] };
        let back = pauli_decompose(&coeffs.reconstruct()).unwrap();
        prop_assert!((back.c0 - coeffs.c0).abs() < 1e-12);
        for k in 0..3 {
            prop_assert!((back.c[k] - coeffs.c[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn pauli4_round_trip(seed in any::<u64>()) {
        let mut rng = EventRng::new(seed);
        let mut g = || 2.0 * rng.uniform() - 1.0;
        let coeffs = PauliCoefficients4 {
            rho0: g(),
            rho1: [g(), g(), g()],
            rho2: [g(), g(), g()],
            rho12: [[g(), g(), g()], [g(), g(), g()], [g(), g(), g()]],
        };
        let back = pauli_decompose4(&coeffs.reconstruct()).unwrap();
        prop_assert!((back.rho0 - coeffs.rho0).abs() < 1e-12);
        for i in 0..3 {
            prop_assert!((back.rho1[i] - coeffs.rho1[i]).abs() < 1e-12);
            prop_assert!((back.rho2[i] - coeffs.rho2[i]).abs() < 1e-12);
            for j in 0..3 {
                prop_assert!((back.rho12[i][j] - coeffs.rho12[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constructed_states_are_projectors(s1 in any::<u64>(), s2 in any::<u64>()) {
        let (a, m) = (unit(s1), unit(s2));
        let (rho, xhat) = build_sg_operators(&a, &m);
        prop_assert!(rho.projector_deviation() < 1e-12);
        prop_assert!(rho.eigenvalues().iter().all(|&e| e >= -1e-12));
        for x in Outcome::both() {
            let proj = &CMatrix::identity(2).scale_real(0.5) + &xhat.matrix().scale_real(0.5 * x.as_real::<f64>());
            prop_assert!((rho.trace_product(&proj) - sg_probability(x, &a, &m, Sign::Plus)).abs() < 1e-12);
        }
        let (rho, x, y) = build_eprb_operators(&a, &m);
        prop_assert!(rho.projector_deviation() < 1e-12);
        prop_assert!(rho.eigenvalues().iter().all(|&e| e >= -1e-12));
        prop_assert!((rho.trace_product(&(x.matrix() * y.matrix())) + a.dot(&m)).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn polar_maps_preserve_density(centre in -2.0..2.0f64, width in 0.6..1.5f64, k in -2.0..2.0f64, lambda in 1.0..9.0f64) {
        let grid = SpatialGrid::new(8.0, 256, 0.01, 2).unwrap();
        let field = PolarField::from_fn(
            &grid,
            |x, t| (-(x - centre - t) * (x - centre - t) / (2.0 * width * width)).exp(),
            |x, t| k * x - t,
        ).unwrap();
        let psi = polar_to_wave(&field, lambda);
        for tau in 0..2 {
            prop_assert!((psi.norm(&grid, tau) - grid.integrate_slice(field.p_slice(tau))).abs() < 1e-12);
        }
        let back = wave_to_polar(&psi, lambda).unwrap();
        for (a, b) in back.p.iter().zip(&field.p) {
            prop_assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn crank_nicolson_conserves_norm(x0 in -2.0..2.0f64, sigma in 0.5..1.2f64, p in -1.0..1.0f64, omega in 0.0..1.5f64) {
        let grid = SpatialGrid::new(10.0, 301, 0.01, 500).unwrap();
        let params = PhysicalParams::natural(Potential::Harmonic { omega, center: 0.0 });
        let psi0 = gaussian_packet(&grid, x0, sigma, p, 1.0);
        let traj = evolve_tdse(&psi0, &params, &grid, &EvolveOptions { stride: 500, boundary_mass: None, ..Default::default() }).unwrap();
        prop_assert!(traj.max_norm_drift < 1e-12);
    }

    #[test]
    fn detector_bins_are_a_distribution(centre in -3.0..3.0f64, width in 0.05..2.0f64, k_det in 0usize..12) {
        let grid = SpatialGrid::new(5.0, 401, 1.0, 1).unwrap();
        let p: Vec<f64> = grid.xs().iter().map(|x| (-(x - centre) * (x - centre) / (2.0 * width * width)).exp()).collect();
        let bins = bin_probabilities(&p, &grid, k_det);
        prop_assert_eq!(bins.len(), 2 * k_det + 1);
        prop_assert!(bins.iter().all(|&b| b >= 0.0));
        prop_assert!((bins.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
