use nalgebra::DMatrix;
use obsalloc_core::allocation::*;
use obsalloc_core::linalg::numerical_rank;
use obsalloc_core::linsys::{markov_parameters, simulate_schedule, SystemModel};
use obsalloc_core::measurement::{cyclic_schedule_restricted, MeasurementMatrix};
use obsalloc_core::models::{block_of, build_model1, build_model2, HvacConfig};
use obsalloc_core::oracle::exact_observability_rank;
use obsalloc_core::sysid::{estimate_markov, MarkovEstimate};
use obsalloc_core::Error;
use proptest::prelude::*;

fn c(r: usize, coords: &[usize]) -> MeasurementMatrix {
    MeasurementMatrix::new(r, coords.to_vec()).unwrap()
}

/// Block-diagonal mix of weighted cycles and distinct diagonals, permuted.
fn decoupled_system(seed: u64, r: usize) -> DMatrix<f64> {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 33) as f64 / (1u64 << 31) as f64
    };
    let mut a = DMatrix::zeros(r, r);
    let mut o = 0;
    while o < r {
        let k = (1 + (next() * 3.0) as usize).min(r - o);
        if next() < 0.5 {
            for j in 0..k {
                a[(o + (j + 1) % k, o + j)] = 0.6 + 0.3 * next();
            }
        } else {
            let start = -0.8 + 0.4 * next();
            for j in 0..k {
                a[(o + j, o + j)] = start + 0.35 * j as f64;
            }
        }
        o += k;
    }
    let mut perm: Vec<usize> = (0..r).collect();
    for i in (1..r).rev() {
        perm.swap(i, (next() * (i + 1) as f64) as usize % (i + 1));
    }
    DMatrix::from_fn(r, r, |i, j| a[(perm[i], perm[j])])
}

#[test]
fn observability_examples() {
    let a = DMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64 / 10.0);
    assert_eq!(numerical_rank(&observability_matrix(&a, &MeasurementMatrix::full(3)).unwrap().0, 1e-12), 3);
    let zero = DMatrix::zeros(3, 3);
    assert_eq!(numerical_rank(&observability_matrix(&zero, &c(3, &[0])).unwrap().0, 1e-12), 1);
    let m1 = build_model1();
    let o = observability_matrix(m1.a(), &c(20, &[0])).unwrap().0;
    assert_eq!(o.shape(), (20, 20));
    assert_eq!(numerical_rank(&o, 1e-12), 4);
    assert!(observability_matrix(m1.a(), &MeasurementMatrix::empty(20)).is_err());

    let est = RankEstimator::direct(m1.a().clone(), 1e-6).unwrap();
    assert_eq!(est.estimate_rank(&c(20, &[0, 4])).unwrap(), 8);
    assert_eq!(est.estimate_rank(&c(20, &[0, 1])).unwrap(), 4);
    assert_eq!(est.estimate_rank(&MeasurementMatrix::empty(20)).unwrap(), 0);
}

#[test]
fn hankel_examples() {
    let scalar = SystemModel::noiseless(DMatrix::from_element(1, 1, 0.5), DMatrix::from_element(1, 1, 2.0)).unwrap();
    let rows = MarkovEstimate::exact(markov_parameters(&scalar, 1), 1, 1).unwrap().restrict(&[0]).unwrap();
    let h = hankel_matrix(&rows, &c(1, &[0])).unwrap().0;
    assert_eq!(h, DMatrix::from_row_slice(1, 2, &[2.0, 1.0]));

    let zeros = MarkovEstimate::exact(vec![DMatrix::zeros(3, 2); 6], 1, 1).unwrap().restrict(&[0, 1, 2]).unwrap();
    let est = RankEstimator::hankel(zeros, 1e-9).unwrap();
    assert_eq!(est.estimate_rank(&c(3, &[0, 2])).unwrap(), 0);

    let m1 = build_model1();
    let rows = MarkovEstimate::exact(markov_parameters(&m1, 39), 1, 1).unwrap().restrict(&[0, 1, 2]).unwrap();
    let h = hankel_matrix(&rows, &c(20, &[0, 1])).unwrap().0;
    assert_eq!(h.shape(), (2 * 20, 20 * 21));
    assert_eq!(numerical_rank(&h, 1e-9), 4);
    assert!(matches!(hankel_matrix(&rows, &c(20, &[5])), Err(Error::UnestimatedRow { coord: 5 })));
    let short = MarkovEstimate::exact(markov_parameters(&m1, 20), 1, 1).unwrap().restrict(&[0]).unwrap();
    assert!(RankEstimator::hankel(short, 0.1).is_err());
}

#[test]
fn greedy_on_model1() {
    let m1 = build_model1();
    let est = RankEstimator::direct(m1.a().clone(), 1e-6).unwrap();
    let all: Vec<usize> = (0..20).collect();
    let res = greedy_allocate(&est, &all, GreedyOptions::default()).unwrap();
    assert_eq!(res.allocation.coords(), &[0, 4, 8, 12, 16]);
    assert_eq!(res.achieved_rank, 20);
    let blocks: Vec<usize> = res.allocation.coords().iter().map(|&i| block_of(i)).collect();
    assert_eq!(blocks, vec![0, 1, 2, 3, 4]);

    let first_block = [0, 1, 2, 3];
    let err = greedy_allocate(&est, &first_block, GreedyOptions::default()).unwrap_err();
    assert!(matches!(err, Error::NotObservableWithinCandidates { rank: 4, r: 20 }));
    assert_eq!(err.code(), "not_observable_within_candidates");
}

#[test]
fn identity_dynamics_select_everything() {
    let est = RankEstimator::direct(DMatrix::identity(6, 6), 1e-6).unwrap();
    let res = greedy_allocate(&est, &(0..6).collect::<Vec<_>>(), GreedyOptions::default()).unwrap();
    assert_eq!(res.allocation.coords(), &[0, 1, 2, 3, 4, 5]);
    assert!(res.trace.iter().all(|step| step.gains.values().all(|&g| g == 1)));
}

#[test]
fn hankel_variant_rejects_rows_outside_j() {
    let m1 = build_model1();
    let rows = MarkovEstimate::exact(markov_parameters(&m1, 39), 1, 1).unwrap().restrict(&[0, 4]).unwrap();
    let est = RankEstimator::hankel(rows, 1e-6).unwrap();
    assert!(matches!(greedy_allocate(&est, &[0, 3], GreedyOptions::default()), Err(Error::UnestimatedRow { coord: 3 })));
}

#[test]
fn learned_model2_rank_of_two_sensors_in_one_block() {
    let (model, j) = build_model2(&HvacConfig::default()).unwrap();
    let schedule = cyclic_schedule_restricted(20, &j, 5, 4).unwrap();
    let trajs = simulate_schedule(&model, &schedule, 20000, 2).unwrap();
    let est = estimate_markov(&schedule, &trajs, 39).unwrap();
    let estimator =
        RankEstimator::from_stage_one(RankSource::Hankel { markov: est.restrict(&j).unwrap() }, est.stats.s_min, 20000)
            .unwrap();
    let pair = c(20, &[0, 1]);
    assert_eq!(estimator.estimate_rank(&pair).unwrap(), 4);
    assert_eq!(exact_observability_rank(model.a(), &pair, 1e-9).unwrap(), 4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn exact_direct_rank_matches_oracle(seed in any::<u64>(), r in 2usize..9, masks in prop::collection::vec(1u32..256, 100)) {
        let a = decoupled_system(seed, r);
        let est = RankEstimator::direct(a.clone(), 1e-8).unwrap();
        for mask in masks {
            let coords: Vec<usize> = (0..r).filter(|i| mask & (1 << i) != 0).collect();
            if coords.is_empty() {
                continue;
            }
            let cm = c(r, &coords);
            prop_assert_eq!(est.estimate_rank(&cm).unwrap(), exact_observability_rank(&a, &cm, 1e-9).unwrap());
        }
    }

    #[test]
    fn hankel_rank_equals_observability_rank(seed in any::<u64>(), r in 2usize..7, mask in 1u32..64) {
        let a = decoupled_system(seed, r);
        let model = SystemModel::noiseless(a.clone(), DMatrix::identity(r, r)).unwrap();
        let rows = MarkovEstimate::exact(markov_parameters(&model, 2 * r - 1), 1, 1).unwrap()
            .restrict(&(0..r).collect::<Vec<_>>()).unwrap();
        let mask = (mask % (1 << r)).max(1);
        let coords: Vec<usize> = (0..r).filter(|i| mask & (1 << i) != 0).collect();
        let cm = c(r, &coords);
        prop_assert_eq!(
            numerical_rank(&hankel_matrix(&rows, &cm).unwrap().0, 1e-9),
            exact_observability_rank(&a, &cm, 1e-9).unwrap()
        );
    }

    #[test]
    fn trace_is_monotone_and_greedy(seed in any::<u64>(), r in 2usize..10) {
        let a = decoupled_system(seed, r);
        let est = RankEstimator::direct(a, 1e-8).unwrap();
        let all: Vec<usize> = (0..r).collect();
        let res = greedy_allocate(&est, &all, GreedyOptions::default()).unwrap();
        let mut prev = 0;
        for step in &res.trace {
            prop_assert!(step.rank > prev);
            let chosen = step.gains[&step.selected];
            prop_assert_eq!(chosen, step.rank - prev);
            for (&i, &g) in &step.gains {
                prop_assert!(g <= chosen);
                if g == chosen {
                    prop_assert!(i >= step.selected);
                }
            }
            prev = step.rank;
        }
        prop_assert_eq!(res.achieved_rank, r);
        let again = greedy_allocate(&est, &all, GreedyOptions::default()).unwrap();
        prop_assert_eq!(&again, &res);
    }

    #[test]
    fn lazy_and_batched_match_eager(seed in any::<u64>(), r in 2usize..10) {
        let a = decoupled_system(seed, r);
        let est = RankEstimator::direct(a, 1e-8).unwrap();
        let all: Vec<usize> = (0..r).collect();
        let eager = greedy_allocate(&est, &all, GreedyOptions::default()).unwrap();
        let lazy = greedy_allocate(&est, &all, GreedyOptions { lazy: true }).unwrap();
        prop_assert_eq!(eager.allocation.coords(), lazy.allocation.coords());
        let mut calls = 0;
        let batched = greedy_allocate_with(&est, &all, GreedyOptions::default(), |qs| {
            calls += 1;
            qs.iter().rev().map(|q| est.estimate_rank(q)).collect::<Vec<_>>().into_iter().rev().collect()
        }).unwrap();
        prop_assert_eq!(&batched, &eager);
        prop_assert_eq!(calls, eager.trace.len());
    }
}
