//! Posterior invariants after randomized optimizer runs.

use nng_core::linalg::{Matrix, SpdMatrix};
use nng_core::model::{Activation, Batch, FisherMode, MlpArchitecture, WeightSet};
use nng_core::optim::{Optimizer, StepConfig};
use nng_core::posterior::{Family, Hyper, Posterior};
use nng_core::rng::seeded;
use proptest::prelude::*;

fn reconstructs(m: &SpdMatrix, inv: &SpdMatrix) -> bool {
    m.matrix().matmul(inv.matrix()).max_abs_diff(&Matrix::identity(m.dim())) <= 1e-8
}

fn psd(m: &SpdMatrix) -> bool {
    m.min_eigenvalue() >= -1e-10
}

fn check(post: &Posterior) -> Result<(), TestCaseError> {
    match post {
        Posterior::Ffg(p) => prop_assert!(p.fbar.iter().all(|f| *f >= 0.0)),
        Posterior::Full(p) => {
            prop_assert!(psd(&p.fbar));
            let damped = p.fbar.add_diagonal(p.hyper.gamma());
            prop_assert!(reconstructs(&damped, &damped.inverse().unwrap()));
        }
        Posterior::Mvg(p) => {
            for l in &p.layers {
                prop_assert!(psd(&l.abar) && psd(&l.sbar));
            }
            for f in p.sampling_factors().unwrap().iter().chain(p.step_factors().unwrap()) {
                prop_assert!(reconstructs(&f.a_damped, &f.a_inv));
                prop_assert!(reconstructs(&f.s_damped, &f.s_inv));
            }
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn optimizers_keep_posterior_invariants(
        family in prop_oneof![Just(Family::Ffg), Just(Family::Mvg), Just(Family::Full)],
        input in 1usize..4,
        hidden in proptest::collection::vec(1usize..4, 0..2),
        beta_tilde in 0.001f64..0.9,
        gamma_ex in prop_oneof![Just(0.0), 0.0f64..0.5],
        t_stats in 1u64..4,
        t_inv in 1u64..6,
        empirical in any::<bool>(),
        steps in 1usize..60,
        seed in any::<u64>(),
    ) {
        let arch = MlpArchitecture::regression(input, &hidden, Activation::Tanh).unwrap();
        let mut rng = seeded(seed);
        let xs: Vec<Vec<f64>> = (0..10).map(|_| nng_core::linalg::standard_normal_vec(input, &mut rng)).collect();
        let ys = nng_core::linalg::standard_normal_vec(10, &mut rng);
        let batch = Batch::regression(xs, &ys).unwrap();
        let hyper = Hyper::new(1.0, 10, 1.0, gamma_ex).unwrap();
        let mut config = StepConfig::new(0.05, beta_tilde).unwrap();
        config.fisher = if empirical { FisherMode::Empirical } else { FisherMode::True };
        let init = WeightSet::init(&arch, &mut rng);
        let mut opt = Optimizer::new(family, &init, hyper, config, 0.9, t_stats, t_inv).unwrap();
        for _ in 0..steps {
            let idx: Vec<usize> = (0..3).map(|_| rand::Rng::random_range(&mut rng, 0..10)).collect();
            opt.step(&arch, &batch.subset(&idx), Some(2.0), &mut rng).unwrap();
        }
        check(&opt.posterior())?;
    }
}
