use std::sync::Arc;

use proptest::prelude::*;

use plmc::potential::{AbsSum, CompositePotential, Regularizer};
use plmc::rng::{stream, tag, NormalStream, SkipAlternate};
use plmc::samplers::{self, InitStrategy, SamplerConfig, Variant};

fn abs_quad(center: f64) -> CompositePotential {
    CompositePotential::new(Arc::new(AbsSum::new(1, 1.0).unwrap()), Regularizer::quadratic(1.0, vec![center]).unwrap()).unwrap()
}

fn variant() -> impl Strategy<Value = Variant> {
    prop_oneof![Just(Variant::Lmc), Just(Variant::Plmc), Just(Variant::Slmc)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chains_are_reproducible(v in variant(), seed in any::<u64>(), eta in 1e-3f64..0.2, mu in 0.0f64..0.5, x0 in -3.0f64..3.0) {
        let pot = abs_quad(0.3);
        let mut cfg = SamplerConfig::new(v, eta, mu, 40, seed);
        cfg.n_chains = 3;
        let init = InitStrategy::Point { center: vec![x0] };
        let a = samplers::run_chains(&pot, &cfg, &init).unwrap();
        let b = samplers::run_chains(&pot, &cfg, &init).unwrap();
        prop_assert_eq!(a.len(), 3);
        for (i, (ca, cb)) in a.iter().zip(&b).enumerate() {
            prop_assert_eq!(ca.chain_index, i);
            prop_assert_eq!(&ca.iterates, &cb.iterates);
            prop_assert_eq!(ca.seed, samplers::chain_seed(seed, i));
            prop_assert_eq!(ca.iterates.len(), 41);
        }
        prop_assert_ne!(&a[0].iterates, &a[1].iterates);
    }

    #[test]
    fn zero_radius_plmc_is_bitwise_matched_lmc(seed in any::<u64>(), eta in 1e-3f64..0.2, x0 in -3.0f64..3.0) {
        let pot = abs_quad(-0.5);
        let mut s = NormalStream::new(stream(seed, tag::NOISE, 0));
        let p = samplers::simulate(&pot, Variant::Plmc, eta, 0.0, 30, 1, vec![x0], &mut s, 0).unwrap();
        let mut base = NormalStream::new(stream(seed, tag::NOISE, 0));
        let mut skip = SkipAlternate::new(&mut base);
        let l = samplers::simulate(&pot, Variant::Lmc, eta, 0.0, 30, 1, vec![x0], &mut skip, 0).unwrap();
        prop_assert_eq!(p.iterates, l.iterates);
    }

    #[test]
    fn slmc_forms_agree(seed in any::<u64>(), eta in 1e-2f64..0.2, mu in 0.0f64..0.5, y0 in -2.0f64..2.0) {
        let pot = abs_quad(0.0);
        let cfg = SamplerConfig::new(Variant::Slmc, eta, mu, 25, seed);
        let y = samplers::run_slmc(&pot, &cfg, &InitStrategy::Point { center: vec![y0] }).unwrap().iterates;
        let x = samplers::run_slmc_x_form(&pot, &cfg, &[y0]).unwrap();
        prop_assert_eq!(x.len(), y.len());
        // x_k − y_k is the previous perturbation scaled by μ, so it stays small.
        for (xk, yk) in x.iter().zip(&y) {
            prop_assert!((xk[0] - yk[0]).abs() <= mu * 10.0);
        }
    }

    #[test]
    fn record_every_keeps_a_prefix_grid(r in 1u64..12, seed in 0u64..1000) {
        let pot = abs_quad(0.0);
        let mut cfg = SamplerConfig::new(Variant::Plmc, 0.05, 0.1, 30, seed);
        let full = samplers::run_plmc(&pot, &cfg, &InitStrategy::Point { center: vec![1.0] }).unwrap();
        cfg.record_every = r;
        let thin = samplers::run_plmc(&pot, &cfg, &InitStrategy::Point { center: vec![1.0] }).unwrap();
        for (j, it) in thin.iterates.iter().enumerate() {
            prop_assert_eq!(it, &full.iterates[j * r as usize]);
        }
        prop_assert_eq!(thin.final_state, full.final_state);
    }
}

#[test]
fn ensemble_rows_are_final_states() {
    let pot = abs_quad(0.0);
    let mut cfg = SamplerConfig::new(Variant::Plmc, 0.01, 0.05, 100, 11);
    cfg.n_chains = 16;
    let init = InitStrategy::GaussianAtMin { scale: None };
    let chains = samplers::run_chains(&pot, &cfg, &init).unwrap();
    let set = samplers::run_ensemble(&pot, &cfg, &init).unwrap();
    assert_eq!(set.n(), 16);
    for (i, c) in chains.iter().enumerate() {
        assert_eq!(set.row(i), c.final_state.as_slice());
    }
    assert_eq!(set.meta.variant, "PLMC");
}

#[test]
fn divergent_step_size_is_an_error() {
    let pot = abs_quad(0.0);
    let cfg = SamplerConfig::new(Variant::Lmc, 5.0, 0.0, 10_000, 1);
    assert!(samplers::run_lmc(&pot, &cfg, &InitStrategy::Point { center: vec![1.0] }).is_err());
}
