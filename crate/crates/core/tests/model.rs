mod common;

use lhz_protocols::model::*;
use proptest::prelude::*;

fn couplings(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, pair_count(n))
}

fn instance(n: usize) -> impl Strategy<Value = LogicalInstance> {
    couplings(n).prop_map(move |c| LogicalInstance::new("p", n, 0, c).unwrap())
}

fn parity_of(plaquette: &Plaquette, physical: &[i8]) -> i8 {
    plaquette.members.iter().map(|&q| physical[q]).product()
}

#[test]
fn every_encoding_satisfies_every_plaquette() {
    for n in 3..=6 {
        let plaquettes = enumerate_plaquettes(n).unwrap();
        assert_eq!(plaquettes.len(), pair_count(n) - n + 1);
        for bits in 0..1usize << n {
            let phys = encode_configuration(&logical_config(n, bits));
            for p in &plaquettes {
                assert_eq!(parity_of(p, &phys), 1, "n={n} bits={bits:b} {p:?}");
            }
        }
    }
}

#[test]
fn five_spin_plaquette_mix() {
    let plaquettes = enumerate_plaquettes(5).unwrap();
    let sizes: Vec<usize> = plaquettes.iter().map(|p| p.members.len()).collect();
    assert_eq!(sizes.iter().filter(|&&s| s == 3).count(), 3);
    assert_eq!(sizes.iter().filter(|&&s| s == 4).count(), 3);
}

#[test]
fn constraint_satisfying_states_are_exactly_the_encodings() {
    // 2^N logical configurations collapse in pairs onto 2^(N-1) physical states
    for n in 3..=5 {
        let inst = LogicalInstance::new("z", n, 0, vec![0.0; pair_count(n)]).unwrap();
        let phys = map_logical_to_physical(&inst, 2.0).unwrap();
        let satisfying: Vec<usize> = (0..phys.dim()).filter(|&b| phys.satisfies_constraints(b)).collect();
        let mut images: Vec<usize> = (0..1usize << n)
            .map(|bits| basis_index(&encode_configuration(&logical_config(n, bits))))
            .collect();
        images.sort_unstable();
        images.dedup();
        assert_eq!(satisfying, images);
        assert_eq!(satisfying.len(), 1 << (n - 1));
    }
}

#[test]
fn single_flip_penalty_counts_plaquette_membership() {
    let inst = LogicalInstance::new("f", 5, 0, vec![0.3; 10]).unwrap();
    let phys = map_logical_to_physical(&inst, 2.0).unwrap();
    let hc = build_constraint_hamiltonian(&phys);
    let nc = phys.n_constraints() as f64;
    let base = basis_index(&encode_configuration(&[1, -1, 1, 1, -1]));
    assert_eq!(hc.entries()[base], -nc);
    for q in 0..phys.k_physical() {
        let membership = phys.plaquettes.iter().filter(|p| p.members.contains(&q)).count();
        assert_eq!(hc.entries()[base ^ (1 << q)], -nc + 2.0 * membership as f64, "qubit {q}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn encoding_is_flip_invariant(bits in 0usize..32) {
        let cfg = logical_config(5, bits);
        let flipped: Vec<i8> = cfg.iter().map(|s| -s).collect();
        prop_assert_eq!(encode_configuration(&cfg), encode_configuration(&flipped));
    }

    #[test]
    fn satisfying_block_reproduces_logical_spectrum(inst in (3usize..=5).prop_flat_map(instance)) {
        let phys = map_logical_to_physical(&inst, 2.0).unwrap();
        let ham = PassageHamiltonian::new(&phys);
        let final_diag = ham.final_diagonal();
        let shift = -2.0 * phys.n_constraints() as f64;
        for bits in 0..1usize << inst.n_logical() {
            let cfg = logical_config(inst.n_logical(), bits);
            let b = basis_index(&encode_configuration(&cfg));
            prop_assert!((final_diag.entries()[b] - (inst.energy(&cfg) + shift)).abs() < 1e-12);
        }
    }

    #[test]
    fn problem_minimum_over_encodings_is_logical_ground(inst in instance(5)) {
        let phys = map_logical_to_physical(&inst, 2.0).unwrap();
        let hp = build_problem_hamiltonian(&phys);
        let (energy, minimizers) = logical_ground_bruteforce(&inst).unwrap();
        let min_encoded = (0..hp.dim())
            .filter(|&b| phys.satisfies_constraints(b))
            .map(|b| hp.entries()[b])
            .fold(f64::INFINITY, f64::min);
        prop_assert!((min_encoded - energy).abs() < 1e-12);
        prop_assert_eq!(minimizers.len() % 2, 0);
    }

    #[test]
    fn assembled_operators_are_hermitian(inst in instance(4), s in 0.0..=1.0f64, c in 0.0..3.0f64) {
        let phys = map_logical_to_physical(&inst, 2.0).unwrap();
        let op = assemble_passage(&phys, s, c).unwrap();
        prop_assert!(op.is_hermitian());
        prop_assert!(op.entries().all(|(_, _, v)| v.im == 0.0));
        let dense = common::dense_passage(&phys, s, c);
        for (r, col, v) in op.entries() {
            prop_assert!((dense[(r, col)] - v.re).abs() < 1e-12);
        }
        prop_assert_eq!(op.nnz(), dense.iter().filter(|v| **v != 0.0).count());
    }

    #[test]
    fn matrix_free_apply_matches_dense(inst in instance(4), s in 0.0..=1.0f64, c in 0.0..3.0f64, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let phys = map_logical_to_physical(&inst, 2.0).unwrap();
        let ham = PassageHamiltonian::new(&phys);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..ham.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut y = vec![0.0; ham.dim()];
        ham.apply(s, c, &x, &mut y);
        let expected = common::dense_passage(&phys, s, c) * nalgebra::DVector::from_vec(x);
        for (a, b) in y.iter().zip(expected.iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
