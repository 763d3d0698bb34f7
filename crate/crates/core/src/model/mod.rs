//! Logical and physical Hamiltonians, the parity mapping and the passage
//! Hamiltonian.

mod instance;
mod operator;

pub use instance::{
    basis_index, encode_configuration, enumerate_plaquettes, logical_config, logical_ground_bruteforce,
    map_logical_to_physical, pair_count, pair_index, pairs, z_value, InstanceFile, LogicalInstance,
    PhysicalInstance, Plaquette, BRUTEFORCE_LIMIT, DEFAULT_CONSTRAINT_STRENGTH,
};
pub use operator::{
    assemble_passage, build_constraint_hamiltonian, build_initial_hamiltonian, build_problem_hamiltonian,
    DiagonalOperator, PassageHamiltonian, SparseHermitianOperator, TRANSVERSE_SIGN,
};
pub(crate) use operator::hamiltonian_blocks_pair;
