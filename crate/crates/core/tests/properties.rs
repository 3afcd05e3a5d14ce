mod common;

use common::*;
use privqcd::detection::Regime;
use privqcd::partitions::partition_count;
use privqcd::privacy::{max_leakage_window_bruteforce, mixture_k_metrics};
use privqcd::smooth::project_to_simplex;
use privqcd::*;
use proptest::prelude::*;

fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn channel(out: usize, inp: usize) -> impl Strategy<Value = Channel> {
    prop::collection::vec(simplex(out), inp).prop_map(move |cols| {
        Channel::from_rows((0..out).map(|y| cols.iter().map(|c| c[y]).collect()).collect()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn data_processing_inequality((n, out) in (2usize..=6).prop_flat_map(|n| (Just(n), 1..=n)), seed in any::<u64>()) {
        let mut r = rng(seed);
        let (p, q) = (random_simplex(&mut r, n), random_simplex(&mut r, n));
        let t = Channel::from_rows(random_channel_rows(&mut r, out, n)).unwrap();
        let after = kl_divergence(&t.apply(&pmf(&p)).unwrap(), &t.apply(&pmf(&q)).unwrap()).unwrap();
        prop_assert!(after <= kl_ref(&p, &q) + 1e-9);
    }

    #[test]
    fn channels_map_simplex_to_simplex(t in channel(3, 4), p in simplex(4)) {
        let image = t.apply(&pmf(&p)).unwrap();
        prop_assert!((image.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(image.probs().iter().all(|&v| v >= 0.0));
        let oracle = apply_ref(&t.rows(), &p);
        for (a, b) in image.probs().iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn objective_ignores_output_relabeling((x, ng, seed) in (3usize..=5, 1usize..=4, any::<u64>()), perm_seed in any::<u64>()) {
        let m = random_instance(x, ng, seed).unwrap();
        let mut r = rng(perm_seed);
        let t = Channel::from_rows(random_channel_rows(&mut r, 3, x)).unwrap();
        let mut perm = vec![0, 1, 2];
        use rand::seq::SliceRandom;
        perm.shuffle(&mut r);
        let a = expected_kl_objective(&t, &m).unwrap();
        let b = expected_kl_objective(&t.permute_rows(&perm), &m).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        prop_assert!((a - objective_of(&t, &m)).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn k_metrics_follow_hypothesis_relabeling(seed in any::<u64>(), t in channel(3, 3)) {
        let m = random_instance(3, 4, seed).unwrap();
        let images = m.images(&t).unwrap();
        let (private, public) = (vec![0, 1], vec![2, 3]);
        let k1 = k1_metric(&images, &private).unwrap();
        let k2 = k2_metric(&images, &private, &public).unwrap();
        // relabel hypotheses by reversing their order
        let rev: Vec<Pmf> = images.iter().rev().cloned().collect();
        let k1r = k1_metric(&rev, &[3, 2]).unwrap();
        let k2r = k2_metric(&rev, &[3, 2], &[1, 0]).unwrap();
        prop_assert!((k1 - k1r).abs() < 1e-12);
        prop_assert!((k2 - k2r).abs() < 1e-12);
    }

    #[test]
    fn point_mass_mixture_matches_single_channel(seed in any::<u64>(), t in channel(2, 3), other in channel(2, 3)) {
        let m = random_instance(3, 3, seed).unwrap();
        let images = m.images(&t).unwrap();
        let mix = ChannelMixture::new(vec![other, t.clone()], pmf(&[0.0, 1.0])).unwrap();
        let (k1, k2) = mixture_k_metrics(&[(&m, &mix)], &[0, 1], &[2]).unwrap();
        prop_assert!((k1 - k1_metric(&images, &[0, 1]).unwrap()).abs() < 1e-12);
        prop_assert!((k2 - k2_metric(&images, &[0, 1], &[2]).unwrap()).abs() < 1e-12);
        let v = mix.objective(&m).unwrap();
        prop_assert!((v - expected_kl_objective(&t, &m).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn window_leakage_grows_with_window_and_respects_blocks(seed in any::<u64>(), t in channel(2, 3)) {
        let m = random_instance(3, 3, seed).unwrap();
        let blocks = Partition::induced_by_channel(&m, &t).unwrap().num_blocks();
        let mut prev = f64::NEG_INFINITY;
        for window in 1..=3 {
            let l = max_leakage_window_bruteforce(&m, &t, window).unwrap();
            prop_assert!(l >= prev - 1e-12);
            prop_assert!(l <= (blocks as f64).log2() + 1e-9);
            prev = l;
        }
    }

    #[test]
    fn glr_statistics_nonnegative(seed in any::<u64>(), stream in 0u64..1000, post in 0usize..3) {
        let m = random_instance(3, 3, seed).unwrap();
        let sys = DetectionSystem::new(&m, &Sanitizer::Channel(Channel::identity(3))).unwrap();
        let path = sys.statistic_path(Regime::PostChange(post), 50, seed, stream).unwrap();
        prop_assert!(path.iter().flatten().all(|&s| s >= 0.0));
    }

    #[test]
    fn stopping_time_monotone_in_threshold(seed in any::<u64>(), stream in 0u64..1000, b in 0.1f64..4.0, db in 0.0f64..3.0) {
        let m = random_instance(3, 2, seed).unwrap();
        let sys = DetectionSystem::new(&m, &Sanitizer::Channel(Channel::identity(3))).unwrap();
        for regime in [Regime::PreChange, Regime::PostChange(0)] {
            let lo = sys.stopping_time(b, regime, 10_000, seed, stream).unwrap().0;
            let hi = sys.stopping_time(b + db, regime, 10_000, seed, stream).unwrap().0;
            prop_assert!(lo <= hi);
        }
    }

    #[test]
    fn simplex_projection_is_idempotent(v in prop::collection::vec(-3.0f64..3.0, 1..8)) {
        let p = project_to_simplex(&v);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        let q = project_to_simplex(&p);
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn partition_enumeration_matches_counts(n in 1usize..=7, m in 1usize..=7) {
        let parts: Vec<Partition> = enumerate_partitions(n, m).unwrap().collect();
        let want: u64 = (1..=m.min(n)).map(|k| stirling2(n, k).unwrap()).sum();
        prop_assert_eq!(parts.len() as u64, want);
        prop_assert_eq!(partition_count(n, m).unwrap(), want);
        prop_assert!(parts.iter().all(|p| p.num_blocks() <= m && p.len() == n));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn exact_value_monotone_in_budget((x, ng, seed) in (2usize..=4, 2usize..=4, any::<u64>())) {
        let m = random_instance(x, ng, seed).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for k in 1..=ng {
            let d = exact_design_ml(&m, (k as f64).log2(), &ExactOptions::default()).unwrap();
            prop_assert!(d.value >= prev - 1e-12);
            prop_assert!(d.partition.num_blocks() <= k);
            prop_assert!((d.value - objective_of(&d.channel, &m)).abs() < 1e-9);
            prev = d.value;
        }
    }

    #[test]
    fn exact_design_satisfies_budget((x, ng, seed) in (2usize..=4, 2usize..=4, any::<u64>()), eps in 0.0f64..2.0) {
        let m = random_instance(x, ng, seed).unwrap();
        let d = exact_design_ml(&m, eps, &ExactOptions::default()).unwrap();
        let images: Vec<Vec<f64>> = model_parts(&m).1.iter().map(|g| apply_ref(&d.channel.rows(), g)).collect();
        let blocks = distinct_images(&images, 1e-9).into_iter().max().unwrap() + 1;
        prop_assert!((blocks as f64).log2() <= eps + 1e-9);
        prop_assert!(d.value <= m.unsanitized_objective() + 1e-9);
    }
}
