use approx::assert_relative_eq;
use obsalloc_core::linsys::markov_parameters;
use obsalloc_core::models::*;

#[test]
fn model1_structure() {
    let m = build_model1();
    assert_eq!((m.r(), m.m()), (DIM, DIM));
    assert_eq!((m.sigma_u2(), m.sigma_w2(), m.sigma_eta2()), (1.0, 1.0, 1.0));
    let a = m.a();
    // (2,1) and (1,4) of the first block, 1-based
    assert_eq!(a[(1, 0)], 0.9);
    assert_eq!(a[(0, 3)], 0.9);
    for i in 0..DIM {
        for j in 0..DIM {
            if block_of(i) != block_of(j) {
                assert_eq!(a[(i, j)], 0.0);
            }
        }
    }
    let custom = build_model1_with_variances(2.0, 0.5, 0.0).unwrap();
    assert_eq!(custom.sigma_w2(), 0.5);
    assert!(build_model1_with_variances(-1.0, 1.0, 1.0).is_err());
}

#[test]
fn model2_structure() {
    let (m, j) = build_model2(&HvacConfig::default()).unwrap();
    let a = m.a();
    assert_eq!(a, &a.transpose());
    for i in 0..DIM {
        // two neighbours per zone in a 2x2 grid
        assert_relative_eq!(a[(i, i)], 1.0 - 0.35 - 2.0 * 0.35, epsilon = 1e-15);
        assert_relative_eq!(m.b()[(i, i)], 0.35, epsilon = 1e-15);
    }
    // diagonal neighbours within a block are not coupled
    assert_eq!(a[(0, 3)], 0.0);
    assert_eq!(a[(1, 2)], 0.0);
    assert_eq!(j, vec![0, 1, 2, 4, 5, 6, 8, 9, 10, 12, 13, 14, 16, 17, 18]);
    assert_eq!((m.sigma_u2(), m.sigma_eta2()), (10.0, 1.0));
    assert_relative_eq!(m.sigma_w2(), 35.0 / 10000.0, epsilon = 1e-18);
    // row sums: the environment leak is the only loss
    for i in 0..DIM {
        assert_relative_eq!(a.row(i).sum(), 0.65, epsilon = 1e-14);
    }
    assert!(m.spectral_radius() < 1.0);
    assert_eq!(markov_parameters(&m, 0)[0], m.b().clone());
}

#[test]
fn hvac_validation() {
    assert!(build_model2(&HvacConfig { theta: 0.0, ..Default::default() }).is_ok());
    assert!(build_model2(&HvacConfig { theta: 20.0, ..Default::default() }).is_err());
    assert!(build_model2(&HvacConfig { xi_pair: -1.0, ..Default::default() }).is_err());
    let mut cfg = HvacConfig::default();
    cfg.adjacency.push((5, 5));
    assert!(build_model2(&cfg).is_err());
}
