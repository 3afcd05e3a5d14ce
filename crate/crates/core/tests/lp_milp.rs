mod common;

use common::*;
use privqcd::linalg::solve_square;
use privqcd::milp::design_sht_milp;
use privqcd::privacy::mixture_k_metrics;
use privqcd::*;
use rand::seq::IndexedRandom;
use rand::Rng;

/// Optimum of `max c x, A x <= b, x >= 0` by enumerating every choice of
/// `n` tight constraints.
fn brute_force_lp(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Option<f64> {
    let n = c.len();
    let mut all: Vec<(Vec<f64>, f64)> = a.iter().cloned().zip(b.iter().copied()).collect();
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = -1.0;
        all.push((e, 0.0));
    }
    let mut best: Option<f64> = None;
    let total = all.len();
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let sys: Vec<Vec<f64>> = idx.iter().map(|&i| all[i].0.clone()).collect();
        let rhs: Vec<f64> = idx.iter().map(|&i| all[i].1).collect();
        if let Some(x) = solve_square(&sys, &rhs) {
            if all.iter().all(|(row, r)| row.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() <= r + 1e-9) {
                let v: f64 = c.iter().zip(&x).map(|(p, q)| p * q).sum();
                best = Some(best.map_or(v, |bv: f64| bv.max(v)));
            }
        }
        // next combination
        let mut k = n;
        while k > 0 && idx[k - 1] == total - n + k - 1 {
            k -= 1;
        }
        if k == 0 {
            return best;
        }
        idx[k - 1] += 1;
        for j in k..n {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[test]
fn simplex_matches_brute_force_on_random_programs() {
    let mut r = rng(31);
    for _ in 0..200 {
        let n = r.random_range(2..=5);
        let rows = r.random_range(1..=5);
        let c: Vec<f64> = (0..n).map(|_| r.random::<f64>() * 2.0 - 0.5).collect();
        let mut a: Vec<Vec<f64>> = (0..rows).map(|_| (0..n).map(|_| r.random::<f64>() * 2.0 - 0.5).collect()).collect();
        let mut b: Vec<f64> = (0..rows).map(|_| r.random::<f64>() * 4.0 - 1.0).collect();
        // a bounding row keeps every program bounded
        a.push(vec![1.0; n]);
        b.push(10.0);
        let mut lp = LinearProgram::new(n);
        lp.objective = c.clone();
        for (row, &rhs) in a.iter().zip(&b) {
            lp.add(row.clone(), Relation::Le, rhs);
        }
        let sol = simplex_solve(&lp).unwrap();
        match brute_force_lp(&c, &a, &b) {
            Some(best) => {
                assert_eq!(sol.status, LpStatus::Optimal);
                assert!((sol.objective - best).abs() < 1e-7, "{} vs {best}", sol.objective);
                assert!(lp.max_violation(&sol.x) < 1e-7);
            }
            None => assert_eq!(sol.status, LpStatus::Infeasible),
        }
    }
}

#[test]
fn unbounded_and_infeasible_programs() {
    let mut lp = LinearProgram::new(2);
    lp.objective = vec![1.0, 1.0];
    lp.add(vec![1.0, -1.0], Relation::Le, 1.0);
    assert_eq!(simplex_solve(&lp).unwrap().status, LpStatus::Unbounded);
    let mut lp = LinearProgram::new(2);
    lp.objective = vec![1.0, 0.0];
    lp.add(vec![1.0, 1.0], Relation::Ge, 3.0);
    lp.add(vec![1.0, 1.0], Relation::Le, 2.0);
    assert_eq!(simplex_solve(&lp).unwrap().status, LpStatus::Infeasible);
}

fn setup(seed: u64) -> (SignalModel, Vec<Channel>) {
    let mut r = rng(seed);
    let m = random_instance(3, 3, seed).unwrap();
    let all = deterministic_channel_set(3, 3).unwrap();
    let mut chosen: Vec<Channel> = all.choose_multiple(&mut r, 4).cloned().collect();
    chosen.push(Channel::identity(3));
    (m, chosen)
}

#[test]
fn zero_private_budget_leaves_only_merging_channels() {
    // generic laws are only merged by the constant channel, which reveals
    // nothing about the public law either
    for seed in 0..5u64 {
        let (m, mut chosen) = setup(40 + seed);
        chosen.push(Channel::constant(3, 3, 0));
        match design_sht_milp(&m, &chosen, &[0, 1], &[2], 0.0, 1e-6) {
            Ok((mix, sol)) => {
                let (k1, k2) = mixture_k_metrics(&[(&m, &mix)], &[0, 1], &[2]).unwrap();
                assert!(k1 <= 1e-9 && sol.k1 <= 1e-9 && k2 >= 1e-6 - 1e-9);
            }
            Err(Error::Infeasible(_)) => {}
            Err(e) => panic!("{e}"),
        }
    }
}

#[test]
fn unreachable_public_budget_is_infeasible() {
    let (m, chosen) = setup(50);
    let res = design_sht_milp(&m, &chosen, &[0, 1], &[2], 10.0, 1e3);
    assert!(matches!(res, Err(Error::Infeasible(_))));
}

#[test]
fn value_monotone_in_budgets_and_constraints_hold() {
    for seed in 0..4u64 {
        let (m, chosen) = setup(60 + seed);
        let (f, g, p) = model_parts(&m);
        let rows: Vec<Vec<Vec<f64>>> = chosen.iter().map(|c| c.rows()).collect();
        let value = |e1: f64, e2: f64| match design_sht_milp(&m, &chosen, &[0, 1], &[2], e1, e2) {
            Ok((_, sol)) => {
                let phi: Vec<f64> = sol.phi[0].probs().to_vec();
                let k1 = mixture_kl_ref(&rows, &phi, &g, 0, 1).max(mixture_kl_ref(&rows, &phi, &g, 1, 0));
                let k2 = mixture_kl_ref(&rows, &phi, &g, 2, 0).min(mixture_kl_ref(&rows, &phi, &g, 2, 1));
                assert!(k1 <= e1 + 1e-7 && k2 >= e2 - 1e-7);
                let obj: f64 = rows.iter().zip(&phi).map(|(c, w)| w * objective_ref(c, &f, &g, &p)).sum();
                assert!((obj - sol.value).abs() < 1e-7);
                Some(sol.value)
            }
            Err(Error::Infeasible(_)) => None,
            Err(e) => panic!("{e}"),
        };
        let mut prev = None;
        for e1 in [0.0, 0.05, 0.2, 1.0, 5.0] {
            let v = value(e1, 1e-6);
            if let (Some(a), Some(b)) = (prev, v) {
                assert!(b >= a - 1e-9);
            }
            assert!(prev.is_none() || v.is_some());
            prev = v;
        }
        let mut prev = value(5.0, 1e-6);
        for e2 in [0.01, 0.1, 0.5, 2.0] {
            let v = value(5.0, e2);
            match (prev, v) {
                (Some(a), Some(b)) => assert!(b <= a + 1e-9),
                (None, Some(_)) => panic!("tighter budget became feasible"),
                _ => {}
            }
            prev = v;
        }
    }
}

#[test]
fn two_sensor_milp_respects_summed_budgets() {
    let (m1, chosen) = setup(70);
    let m2 = random_instance(3, 3, 71).unwrap();
    let sensors = [SensorChannels { model: &m1, channels: &chosen }, SensorChannels { model: &m2, channels: &chosen }];
    let milp = build_milp_sht(&sensors, &[0, 1], &[2], 0.3, 0.05).unwrap();
    match branch_and_bound(&milp, &sensors, 100_000) {
        Ok(sol) => {
            let mixes = sol.mixtures(&sensors).unwrap();
            let pairs = [(&m1, &mixes[0]), (&m2, &mixes[1])];
            let (k1, k2) = mixture_k_metrics(&pairs, &[0, 1], &[2]).unwrap();
            assert!(k1 <= 0.3 + 1e-7 && k2 >= 0.05 - 1e-7);
            let total = mixes[0].objective(&m1).unwrap() + mixes[1].objective(&m2).unwrap();
            assert!((total - sol.value).abs() < 1e-7);
        }
        Err(Error::Infeasible(_)) => {}
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn lp_export_names_every_variable() {
    let (m, chosen) = setup(80);
    let sensors = [SensorChannels { model: &m, channels: &chosen }];
    let milp = build_milp_sht(&sensors, &[0, 1], &[2], 0.3, 0.05).unwrap();
    let text = milp.to_lp_format();
    for name in &milp.names {
        assert!(text.contains(name.as_str()), "{name} missing");
    }
    assert_eq!(milp.num_binaries(), 4);
}
