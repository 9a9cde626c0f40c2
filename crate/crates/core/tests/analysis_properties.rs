use fedamp_core::analysis::{
    decomposition_check, divergence_exact, divergence_sampled, SampleSpec,
};
use fedamp_core::objectives::QuadraticSpec;
use fedamp_core::participation::{generate_schedule, window_averages, PatternSpec};
use proptest::prelude::*;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn markov_window_bias_shrinks_with_interval() {
    let spec = PatternSpec::MarkovAvailability {
        stay_available: 0.9,
        stay_unavailable: 0.8,
        participants: 2,
    };
    let ladder = [4, 16, 64, 256];
    let mut medians = Vec::new();
    for &p in &ladder {
        let vals = (0..20)
            .map(|seed| {
                let pop = QuadraticSpec::new(8, 3, 1.0, 1.0).build(seed).unwrap();
                let sched = generate_schedule(&spec, 8, 1024, 100 + seed).unwrap();
                divergence_exact(&pop, &sched, p).unwrap().delta2
            })
            .collect();
        medians.push(median(vals));
    }
    assert!(medians.windows(2).all(|w| w[1] <= w[0]), "{medians:?}");
}

#[test]
fn permutation_windows_are_exactly_uniform() {
    for (n, s) in [(8, 2), (8, 4), (32, 8), (32, 4)] {
        let sched = generate_schedule(
            &PatternSpec::RegularizedPermutation { participants: s },
            n,
            10 * n / s,
            7,
        )
        .unwrap();
        let w = window_averages(&sched, n / s, 0).unwrap();
        assert!(w.max_abs_deviation <= 1e-15);
        let pop = QuadraticSpec::new(n, 3, 1.0, 2.0).build(3).unwrap();
        assert!(divergence_exact(&pop, &sched, n / s).unwrap().delta2 <= 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn reports_satisfy_the_decomposition(seed in 0u64..10_000, n in 2usize..12, p in 1usize..6) {
        let pop = QuadraticSpec::new(n, 3, 1.0, 1.5).build(seed).unwrap();
        let s = 1 + (seed as usize) % n;
        let sched = generate_schedule(&PatternSpec::IndependentUniform { participants: s }, n, 6 * p, seed).unwrap();
        let r = divergence_exact(&pop, &sched, p).unwrap();
        prop_assert!(r.d2 >= 0.0 && r.beta2 >= 0.0 && r.nu2 >= 0.0 && r.delta2 >= 0.0);
        prop_assert!(r.pair_sum <= r.d2 + 1e-10);
        prop_assert!(r.delta2 <= r.beta2 + 1e-10);
        prop_assert!(r.decomposition_residual <= 1e-10);
        let d = decomposition_check(&pop, &sched, &SampleSpec::ball(vec![0.0; 3], 2.0, 3, seed).points()).unwrap();
        prop_assert!(d.max_relative_residual <= 1e-10);
        prop_assert!(d.max_excess_over_d2 <= 1e-10);
        let sampled = divergence_sampled(&pop, &sched, p, &SampleSpec::ball(vec![0.0; 3], 1.0, 2, seed)).unwrap();
        prop_assert!((sampled.delta2 - r.delta2).abs() <= 1e-10 * r.delta2.max(1.0));
    }
}
