use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sbrana::gallery;
use sbrana::moduli::{
    d_analysis, d_inverse, d_matrix, det_closed_form, index_of, is_admissible, moduli_space, quotient_signature,
    verify_inverse_formula, ModuliError, ModuliOptions,
};
use sbrana::sbrana::{trivial_holonomy, HolonomyOptions};

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn reals(xs: &[f64]) -> Vec<C64> {
    xs.iter().map(|&x| c(x)).collect()
}

fn id(n: usize) -> Vec<usize> {
    (0..n).collect()
}

#[test]
fn admissibility_examples() {
    assert!(is_admissible(&reals(&[-0.5, -0.5]), &id(2), 1e-12).admissible);
    assert!(is_admissible(&reals(&[1.0, -2.0]), &id(2), 1e-12).admissible);
    let bad = is_admissible(&reals(&[1.0, 1.0]), &id(2), 1e-12);
    assert_eq!(bad.failures, vec!["sum".to_string()]);
    let phi = [C64::new(-0.25, 1.0), C64::new(-0.25, -1.0), c(-0.5)];
    let a = is_admissible(&phi, &[1, 0, 2], 1e-12);
    assert!(a.admissible);
    assert_eq!((a.s, a.positive, a.index), (1, 0, Some(1)));
    let broken = [C64::new(-0.25, 1.0), C64::new(-0.25, 1.0), c(-0.5)];
    assert!(is_admissible(&broken, &[1, 0, 2], 1e-12).failures.contains(&"conjugation".to_string()));
    assert!(is_admissible(&reals(&[0.0, -1.0]), &id(2), 1e-12).failures.contains(&"nonzero".to_string()));
}

#[test]
fn index_examples_match_signature() {
    let cases: [(Vec<C64>, Vec<usize>, usize); 3] = [
        (reals(&[-0.5, -0.5]), id(2), 1),
        (reals(&[1.0, -2.0]), id(2), 0),
        (vec![C64::new(-0.25, 1.0), C64::new(-0.25, -1.0), c(-0.5)], vec![1, 0, 2], 1),
    ];
    for (phi, conj, mu) in cases {
        assert_eq!(index_of(&phi, &conj, 1e-12).unwrap(), mu);
        let sig = quotient_signature(&phi, &conj, 1e-12).unwrap();
        assert_eq!(sig.n_minus, mu);
        assert_eq!(sig.n_plus + sig.n_minus, phi.len() - 1);
    }
    assert!(matches!(index_of(&reals(&[1.0, 1.0]), &id(2), 1e-12), Err(ModuliError::NotAdmissible(_))));
}

#[test]
fn d_matrix_examples() {
    let d = d_matrix(&reals(&[1.0, 1.0])).unwrap();
    assert_eq!(d, DMatrix::from_row_slice(2, 2, &reals(&[2.0, 1.0, 1.0, 2.0])));
    assert_eq!(det_closed_form(&reals(&[1.0, 1.0])), c(3.0));
    let a = d_analysis(&reals(&[-0.5, -0.5]), 1e-12).unwrap();
    assert_eq!(a.det_closed, c(0.0));
    assert!(a.det_lu.norm() < 1e-15);
    assert!(a.kernel.unwrap().1 < 1e-15);
    assert!(matches!(d_matrix(&reals(&[1.0, 0.0])), Err(ModuliError::ZeroEntry { index: 1 })));
}

#[test]
fn inverse_examples() {
    let inv = d_inverse(&reals(&[1.0, 1.0])).unwrap();
    let expect = DMatrix::from_row_slice(2, 2, &reals(&[2.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0, 2.0 / 3.0]));
    assert!((inv - expect).camax() < 1e-15);
    assert!((d_inverse(&reals(&[1.0])).unwrap()[(0, 0)] - c(0.5)).norm() < 1e-15);
    assert!(matches!(d_inverse(&reals(&[-0.5, -0.5])), Err(ModuliError::Singular { .. })));
}

#[test]
fn squared_entry_formula_fails_the_identity() {
    let chk = verify_inverse_formula(&reals(&[0.7, -2.0, 1.3])).unwrap();
    assert!(chk.product_form < 1e-12);
    assert!(chk.squared_form > 1e-2);
    assert!(chk.verified.contains("phi_i*phi_j"));
}

fn random_tuple(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    (0..n)
        .map(|_| {
            let m = 10f64.powf(rng.gen_range(-1.0..1.0));
            let a = rng.gen_range(0.0..std::f64::consts::TAU);
            C64::from_polar(m, a)
        })
        .collect()
}

#[test]
fn closed_form_determinant_matches_lu() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..500 {
        let n = rng.gen_range(2..=7);
        let phi = random_tuple(&mut rng, n);
        let a = d_analysis(&phi, 1e-12).unwrap();
        assert!((a.det_closed - a.det_lu).norm() <= 1e-9 * a.det_closed.norm().max(1e-300));
        let inv = d_inverse(&phi).unwrap();
        let d = d_matrix(&phi).unwrap();
        assert!((d * inv - DMatrix::identity(n, n)).camax() < 1e-10);
    }
}

/// Real tuples with the given sign pattern and sum -1.
fn real_pattern(rng: &mut ChaCha8Rng, signs: &[f64]) -> Option<Vec<C64>> {
    if signs.iter().all(|&s| s > 0.0) {
        return None;
    }
    loop {
        let v: Vec<f64> = signs.iter().map(|s| s * 10f64.powf(rng.gen_range(-1.0..1.0))).collect();
        let sum: f64 = v.iter().sum();
        if sum < -1e-3 {
            return Some(v.iter().map(|x| c(-x / sum)).collect());
        }
    }
}

#[test]
fn exhaustive_real_sign_patterns() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for p in 1..=4usize {
        let n = p + 1;
        for mask in 0..(1u32 << n) {
            let signs: Vec<f64> = (0..n).map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 }).collect();
            let Some(phi) = real_pattern(&mut rng, &signs) else { continue };
            let mu = index_of(&phi, &id(n), 1e-9).unwrap();
            let positives = mask.count_ones() as usize;
            assert_eq!(mu, p - positives);
            let sig = quotient_signature(&phi, &id(n), 1e-9).unwrap();
            assert_eq!(sig.n_minus, mu, "{phi:?}");
            let a = d_analysis(&phi, 1e-9).unwrap();
            assert!(a.det_closed.norm() < 1e-9 && a.kernel.unwrap().1 < 1e-9);
        }
    }
}

#[test]
fn random_complex_pair_tuples() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let n = rng.gen_range(2..=7usize);
        let s = rng.gen_range(1..=n / 2);
        let mut conj: Vec<usize> = (0..n).collect();
        for k in 0..s {
            conj.swap(2 * k, 2 * k + 1);
        }
        let mut phi = random_tuple(&mut rng, n);
        for i in 0..n {
            if conj[i] == i {
                phi[i] = c(phi[i].re);
            } else if conj[i] < i {
                phi[i] = phi[conj[i]].conj();
            }
        }
        let sum: C64 = phi.iter().sum();
        let phi: Vec<C64> = phi.iter().map(|z| z * (-1.0 / sum.re)).collect();
        let mu = index_of(&phi, &conj, 1e-9).unwrap();
        assert_eq!(quotient_signature(&phi, &conj, 1e-9).unwrap().n_minus, mu, "{phi:?}");
    }
}

#[test]
fn flat_torus_moduli() {
    for (p, comps) in [(1usize, 2usize), (2, 3)] {
        let chart = gallery::chart(&format!("flat_torus_p{p}"));
        let h = trivial_holonomy(&chart, &chart.grid.base, &HolonomyOptions::default()).unwrap();
        let m = moduli_space(&chart, &h, &ModuliOptions::default()).unwrap();
        assert_eq!(m.dimension, p);
        assert_eq!(m.u0_components, comps);
        assert!(m.u0_components <= p + 1);
        for b in &m.buckets {
            for s in &b.representatives {
                assert!(is_admissible(&s.phi, chart.conj(), 1e-9).admissible);
            }
        }
    }
}

#[test]
fn p1_buckets_are_the_sign_rays() {
    let chart = gallery::chart("flat_torus_p1");
    let h = trivial_holonomy(&chart, &chart.grid.base, &HolonomyOptions::default()).unwrap();
    let m = moduli_space(&chart, &h, &ModuliOptions::default()).unwrap();
    let u0: Vec<&str> = m.buckets.iter().filter(|b| b.mu == 0).map(|b| b.signs.as_str()).collect();
    assert_eq!(u0, vec!["+-", "-+"]);
    let u1: Vec<&str> = m.buckets.iter().filter(|b| b.mu == 1).map(|b| b.signs.as_str()).collect();
    assert_eq!(u1, vec!["--"]);
}

#[test]
fn zero_holonomy_has_empty_moduli() {
    let chart = gallery::chart("full_rank_p1");
    let h = trivial_holonomy(&chart, &chart.grid.base, &HolonomyOptions::default()).unwrap();
    assert!(matches!(
        moduli_space(&chart, &h, &ModuliOptions::default()),
        Err(ModuliError::EmptyModuli { .. })
    ));
}

#[test]
fn second_species_moduli_is_a_point() {
    let chart = gallery::chart("second_species_p1");
    let t = chart.grid.base.clone();
    let h = trivial_holonomy(&chart, &t, &HolonomyOptions::default()).unwrap();
    let m = moduli_space(&chart, &h, &ModuliOptions::default()).unwrap();
    assert_eq!(m.dimension, 0);
    assert_eq!(m.admissible_samples, 1);
    let uv = t[0] * t[1];
    let phi = &m.buckets[0].representatives[0].phi;
    assert!((phi[0] - c(-(2.0 + uv))).norm() < 1e-9);
    assert!((phi[1] - c(1.0 + uv)).norm() < 1e-9);
    assert_eq!(m.buckets[0].mu, 0);
}

#[test]
fn moduli_sampling_is_deterministic() {
    let chart = gallery::chart("flat_torus_p2");
    let h = trivial_holonomy(&chart, &chart.grid.base, &HolonomyOptions::default()).unwrap();
    let a = serde_json::to_string(&moduli_space(&chart, &h, &ModuliOptions::default()).unwrap()).unwrap();
    let b = serde_json::to_string(&moduli_space(&chart, &h, &ModuliOptions::default()).unwrap()).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #[test]
    fn admissible_tuples_are_singular(xs in proptest::collection::vec(0.1f64..10.0, 1..6), neg in 0.1f64..10.0) {
        // positive entries plus one negative entry, rescaled to sum -1
        let mut v = xs.clone();
        v.push(-neg - xs.iter().sum::<f64>());
        let sum: f64 = v.iter().sum();
        let phi: Vec<C64> = v.iter().map(|x| c(-x / sum)).collect();
        let a = d_analysis(&phi, 1e-9).unwrap();
        prop_assert!(a.det_lu.norm() < 1e-9);
        prop_assert!(a.kernel.unwrap().1 < 1e-9);
    }
}
