mod common;

use common::*;
use privqcd::detection::{evaluate, Regime};
use privqcd::*;

fn identity_system(m: &SignalModel) -> DetectionSystem {
    DetectionSystem::new(m, &Sanitizer::Channel(Channel::identity(m.alphabet_size()))).unwrap()
}

#[test]
fn merged_laws_collapse_to_one_hypothesis() {
    let f = pmf(&[0.5, 0.3, 0.2]);
    let g = vec![pmf(&[0.1, 0.2, 0.7]), pmf(&[0.2, 0.1, 0.7]), pmf(&[0.6, 0.3, 0.1])];
    let m = SignalModel::new(f, g, pmf(&[0.2, 0.3, 0.5])).unwrap();
    assert_eq!(identity_system(&m).num_hypotheses(), 3);
    // symbols 0 and 1 merged: the first two laws coincide
    let t = Channel::deterministic(2, &[0, 0, 1]).unwrap();
    let sys = DetectionSystem::new(&m, &Sanitizer::Channel(t)).unwrap();
    assert_eq!(sys.num_hypotheses(), 2);
    assert_eq!(sys.hypothesis_of(), &[0, 0, 1]);
}

#[test]
fn uninformative_channel_never_stops() {
    let m = random_instance(3, 2, 5).unwrap();
    let sys = DetectionSystem::new(&m, &Sanitizer::Channel(Channel::constant(1, 3, 0))).unwrap();
    let arl = estimate_arl(&sys, 1.0, 50, 200, 1).unwrap();
    assert_eq!(arl.censored, 50);
    assert_eq!(arl.mean, 200.0);
}

#[test]
fn statistic_increments_are_sums_of_sensor_ratios() {
    let d = random_decentralized(3, 2, 2, false, 12).unwrap();
    let sanitizers = vec![Sanitizer::Channel(Channel::identity(3)); 2];
    let sys = DetectionSystem::decentralized(&d, &sanitizers).unwrap();
    assert_eq!(sys.num_hypotheses(), 2);
    let llr = |s: &SignalModel, j: usize, y: usize| (s.post()[j].probs()[y] / s.pre().probs()[y]).ln();
    let path = sys.statistic_path(Regime::PostChange(1), 200, 3, 0).unwrap();
    let mut prev = vec![0.0; 2];
    for stats in &path {
        for j in 0..2 {
            if stats[j] > 0.0 {
                // S_j(t) = S_j(t-1) + λ_1(y_1) + λ_2(y_2) for some symbols
                let inc = stats[j] - prev[j];
                let found = (0..3).any(|a| {
                    (0..3).any(|b| (llr(&d.sensors()[0], j, a) + llr(&d.sensors()[1], j, b) - inc).abs() < 1e-9)
                });
                assert!(found, "increment {inc} not a sum of sensor ratios");
            }
        }
        prev = stats.clone();
    }
}

#[test]
fn mixture_of_equal_arms_behaves_like_the_channel() {
    let m = random_instance(3, 2, 21).unwrap();
    let t = Channel::deterministic(2, &[0, 1, 1]).unwrap();
    let mix = ChannelMixture::new(vec![t.clone(), t.clone()], pmf(&[0.3, 0.7])).unwrap();
    let plain = DetectionSystem::new(&m, &Sanitizer::Channel(t)).unwrap();
    let mixed = DetectionSystem::new(&m, &Sanitizer::Mixture(mix)).unwrap();
    let a = estimate_ewadd(&plain, 3.0, 4000, 100_000, 4).unwrap();
    let b = estimate_ewadd(&mixed, 3.0, 4000, 100_000, 5).unwrap();
    let se = (a.ewadd_halfwidth.powi(2) + b.ewadd_halfwidth.powi(2)).sqrt() / 1.96;
    assert!((a.ewadd - b.ewadd).abs() < 4.0 * se, "{} vs {}", a.ewadd, b.ewadd);
}

#[test]
fn ewadd_is_the_prior_weighted_delay() {
    let m = random_instance(3, 3, 8).unwrap();
    let rep = estimate_ewadd(&identity_system(&m), 2.0, 500, 100_000, 2).unwrap();
    assert_eq!(rep.wadd.len(), 3);
    let want: f64 = rep.wadd.iter().zip(m.prior().probs()).map(|(e, p)| p * e.mean).sum();
    assert!((rep.ewadd - want).abs() < 1e-9);
}

#[test]
fn calibration_lands_in_band_and_grows_with_target() {
    // a rich alphabet keeps the ARL steps in b finer than the band
    let m = random_instance(10, 3, 30).unwrap();
    let sys = identity_system(&m);
    let mut prev = 0.0;
    for gamma in [5.0, 20.0, 100.0] {
        let c = calibrate_threshold(&sys, gamma, 1e-3, 2000, 1_000_000, 7).unwrap();
        assert!(c.arl.mean >= gamma && c.arl.mean <= 1.2 * gamma, "gamma {gamma}: ARL {}", c.arl.mean);
        assert!(c.threshold >= prev);
        prev = c.threshold;
    }
}

#[test]
fn lattice_jumps_are_reported_with_the_trace() {
    let m = SignalModel::new(pmf(&[0.5, 0.5]), vec![pmf(&[0.2, 0.8])], pmf(&[1.0])).unwrap();
    match calibrate_threshold(&identity_system(&m), 5.0, 1e-3, 2000, 1_000_000, 7) {
        Ok(c) => assert!(c.arl.mean >= 5.0 && c.arl.mean <= 6.0),
        Err(Error::Calibration { trace, .. }) => {
            let below = trace.iter().filter(|(_, a)| *a < 5.0).map(|(b, _)| *b).fold(f64::NEG_INFINITY, f64::max);
            let above = trace.iter().filter(|(_, a)| *a > 6.0).map(|(b, _)| *b).fold(f64::INFINITY, f64::min);
            assert!(above - below < 1e-3 && above > below);
        }
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn fixed_seed_gives_identical_reports() {
    let m = random_instance(4, 3, 40).unwrap();
    let sys = identity_system(&m);
    let a = evaluate(&sys, 2.5, 300, 10_000, 99).unwrap();
    let b = evaluate(&sys, 2.5, 300, 10_000, 99).unwrap();
    assert_eq!(a, b);
    let c = evaluate(&sys, 2.5, 300, 10_000, 100).unwrap();
    assert_ne!(a.ewadd, c.ewadd);
}

#[test]
fn delay_shrinks_with_more_sensors() {
    let base = random_instance(3, 2, 50).unwrap();
    let delay = |k: usize| {
        let d = DecentralizedModel::new(vec![base.clone(); k]).unwrap();
        let sys = DetectionSystem::decentralized(&d, &vec![Sanitizer::Channel(Channel::identity(3)); k]).unwrap();
        estimate_ewadd(&sys, 4.0, 1000, 100_000, 1).unwrap().ewadd
    };
    assert!(delay(4) < delay(1));
}

#[test]
fn glr_step_recursion_by_hand() {
    let f = pmf(&[0.5, 0.5]);
    let g = [pmf(&[0.25, 0.75])];
    let mut s = GlrState::new(1, 10.0);
    glr_step(&mut s, 1, &f, &g).unwrap();
    assert!((s.statistic() - 1.5f64.ln()).abs() < 1e-15);
    glr_step(&mut s, 0, &f, &g).unwrap();
    assert_eq!(s.statistic(), 0.0);
    assert_eq!(s.time(), 2);
}
