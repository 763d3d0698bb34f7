//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use lhz_protocols::cohort::sample_instances;
use lhz_protocols::model::{map_logical_to_physical, LogicalInstance, PhysicalInstance, DEFAULT_CONSTRAINT_STRENGTH};
use nalgebra::{DMatrix, SymmetricEigen};

/// Seed of the recorded N=5 fixture stream.
pub const FIXTURE_SEED: u64 = 20_201_117;

pub fn fixture_instances(count: usize) -> Vec<LogicalInstance> {
    sample_instances(count, 5, FIXTURE_SEED).unwrap()
}

pub fn physical(inst: &LogicalInstance) -> PhysicalInstance {
    map_logical_to_physical(inst, DEFAULT_CONSTRAINT_STRENGTH).unwrap()
}

/// `-(1 - s) sum_k sigma_x^(k) + s H_p + c H_c` built entry by entry.
pub fn dense_passage(phys: &PhysicalInstance, s: f64, c: f64) -> DMatrix<f64> {
    let k = phys.k_physical();
    let dim = 1usize << k;
    let mut m = DMatrix::zeros(dim, dim);
    for b in 0..dim {
        let mut diag = 0.0;
        for (q, j) in phys.fields.iter().enumerate() {
            diag += s * j * if b >> q & 1 == 0 { 1.0 } else { -1.0 };
        }
        for p in &phys.plaquettes {
            let product: f64 = p.members.iter().map(|&q| if b >> q & 1 == 0 { 1.0 } else { -1.0 }).product();
            diag -= c * product;
        }
        m[(b, b)] = diag;
        for q in 0..k {
            m[(b ^ (1 << q), b)] -= 1.0 - s;
        }
    }
    m
}

/// Ascending eigenvalues and matching eigenvectors (as columns).
pub fn dense_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Ascending eigenvalues only.
pub fn dense_values(m: DMatrix<f64>) -> Vec<f64> {
    let mut values: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}
