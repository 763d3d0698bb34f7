//! Logical spin-glass instances and their parity (LHZ) encoding.
//!
//! Conventions used throughout the crate:
//!
//! * Logical spins are indexed `0..N`, couplings are stored row-major over
//!   pairs `i < j`: `(0,1), (0,2), ..., (0,N-1), (1,2), ...`.
//! * Physical qubit `k` encodes the parity `s_i * s_j` of the `k`-th pair in
//!   that order, so `K = N(N-1)/2`.
//! * Physical qubit `k` is bit `k` of a basis index (bit 0 least significant).
//!   A cleared bit is spin up (`z = +1`), a set bit is spin down (`z = -1`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constraint strength used for five logical spins.
pub const DEFAULT_CONSTRAINT_STRENGTH: f64 = 2.0;

/// Largest N accepted by exhaustive enumeration.
pub const BRUTEFORCE_LIMIT: usize = 20;

/// Number of unordered pairs of `n` logical spins.
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Row-major index of the pair `(i, j)`, `i < j < n`.
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// All pairs in canonical order.
pub fn pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect()
}

/// A fully connected Ising problem `sum_{i<j} J_ij s_i s_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogicalInstance {
    pub id: String,
    pub seed: u64,
    n_logical: usize,
    couplings: Vec<f64>,
}

impl LogicalInstance {
    /// Couplings are given in canonical pair order.
    pub fn new(id: impl Into<String>, n_logical: usize, seed: u64, couplings: Vec<f64>) -> Result<Self> {
        if n_logical == 0 {
            return Err(Error::InvalidInstance("no logical spins".into()));
        }
        let expected = pair_count(n_logical);
        if couplings.len() != expected {
            return Err(Error::InvalidInstance(format!(
                "{} couplings for N = {n_logical}, expected {expected}",
                couplings.len()
            )));
        }
        if let Some(bad) = couplings.iter().find(|j| !j.is_finite() || j.abs() > 1.0) {
            return Err(Error::InvalidInstance(format!("coupling {bad} outside [-1, 1]")));
        }
        Ok(Self {
            id: id.into(),
            seed,
            n_logical,
            couplings,
        })
    }

    pub fn n_logical(&self) -> usize {
        self.n_logical
    }

    /// Couplings in canonical pair order.
    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.couplings[pair_index(self.n_logical, a, b)]
    }

    /// Classical energy of a `±1` configuration.
    pub fn energy(&self, spins: &[i8]) -> f64 {
        debug_assert_eq!(spins.len(), self.n_logical);
        pairs(self.n_logical)
            .iter()
            .zip(&self.couplings)
            .map(|(&(i, j), &jij)| jij * f64::from(spins[i] * spins[j]))
            .sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&InstanceFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(text)?;
        file.try_into()
    }
}

/// On-disk form: `{id, n_logical, seed, couplings: [[i, j, value], ...]}`,
/// zero-based indices, canonical order.
#[derive(Serialize, Deserialize)]
pub struct InstanceFile {
    pub id: String,
    pub n_logical: usize,
    pub seed: u64,
    pub couplings: Vec<(usize, usize, f64)>,
}

impl From<&LogicalInstance> for InstanceFile {
    fn from(inst: &LogicalInstance) -> Self {
        let couplings = pairs(inst.n_logical)
            .into_iter()
            .zip(&inst.couplings)
            .map(|((i, j), &v)| (i, j, v))
            .collect();
        Self {
            id: inst.id.clone(),
            n_logical: inst.n_logical,
            seed: inst.seed,
            couplings,
        }
    }
}

impl TryFrom<InstanceFile> for LogicalInstance {
    type Error = Error;

    fn try_from(file: InstanceFile) -> Result<Self> {
        let n = file.n_logical;
        let expected = pairs(n);
        if file.couplings.len() != expected.len() {
            return Err(Error::InvalidInstance(format!(
                "{}: {} coupling entries, expected {}",
                file.id,
                file.couplings.len(),
                expected.len()
            )));
        }
        let mut values = Vec::with_capacity(expected.len());
        for (&(i, j, v), &(ei, ej)) in file.couplings.iter().zip(&expected) {
            if (i, j) != (ei, ej) {
                return Err(Error::InvalidInstance(format!(
                    "{}: entry ({i}, {j}) out of canonical order, expected ({ei}, {ej})",
                    file.id
                )));
            }
            values.push(v);
        }
        LogicalInstance::new(file.id, n, file.seed, values)
    }
}

/// A parity constraint over three or four physical qubits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plaquette {
    pub members: Vec<usize>,
}

impl Plaquette {
    /// Bit mask of the member qubits.
    pub fn mask(&self) -> usize {
        self.members.iter().fold(0, |m, &q| m | (1 << q))
    }

    /// Product of member `z` values in basis state `index`.
    pub fn parity(&self, index: usize) -> i8 {
        if (index & self.mask()).count_ones() % 2 == 0 {
            1
        } else {
            -1
        }
    }
}

/// Three-body plaquettes along the diagonal, then four-body plaquettes.
///
/// Every logical index appears an even number of times across a plaquette's
/// member pairs, so the product of encoded parities is identically `+1`.
pub fn enumerate_plaquettes(n_logical: usize) -> Result<Vec<Plaquette>> {
    if n_logical < 3 {
        return Err(Error::InvalidInstance(format!(
            "N = {n_logical} has no closed parity loop"
        )));
    }
    let n = n_logical;
    let idx = |i, j| pair_index(n, i, j);
    let mut out = Vec::with_capacity(pair_count(n) - n + 1);
    for i in 0..n - 2 {
        out.push(Plaquette {
            members: vec![idx(i, i + 1), idx(i, i + 2), idx(i + 1, i + 2)],
        });
    }
    for i in 0..n - 2 {
        for j in (i + 2)..(n - 1) {
            out.push(Plaquette {
                members: vec![idx(i, j), idx(i, j + 1), idx(i + 1, j), idx(i + 1, j + 1)],
            });
        }
    }
    Ok(out)
}

/// Physical parities `s_i * s_j` in canonical pair order.
pub fn encode_configuration(logical: &[i8]) -> Vec<i8> {
    let n = logical.len();
    pairs(n)
        .into_iter()
        .map(|(i, j)| logical[i] * logical[j])
        .collect()
}

/// Basis index of a physical `±1` configuration.
pub fn basis_index(physical: &[i8]) -> usize {
    physical
        .iter()
        .enumerate()
        .filter(|(_, &z)| z < 0)
        .fold(0, |acc, (k, _)| acc | (1 << k))
}

/// `z` value of qubit `k` in basis state `index`.
#[inline]
pub fn z_value(index: usize, k: usize) -> f64 {
    if index >> k & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Logical configuration number `bits` (bit `i` set means spin down).
pub fn logical_config(n: usize, bits: usize) -> Vec<i8> {
    (0..n).map(|i| if bits >> i & 1 == 0 { 1 } else { -1 }).collect()
}

/// The LHZ image of a logical instance.
#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalInstance {
    pub id: String,
    pub n_logical: usize,
    /// Local fields `J_k`, one per physical qubit.
    pub fields: Vec<f64>,
    pub plaquettes: Vec<Plaquette>,
    /// `pair_index[k] = (i, j)`.
    pub pair_index: Vec<(usize, usize)>,
    pub constraint_strength: f64,
}

impl PhysicalInstance {
    pub fn k_physical(&self) -> usize {
        self.fields.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.plaquettes.len()
    }

    pub fn dim(&self) -> usize {
        1 << self.k_physical()
    }

    /// Physical qubit encoding the pair `(i, j)`.
    pub fn qubit_of(&self, i: usize, j: usize) -> usize {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        pair_index(self.n_logical, a, b)
    }

    /// Whether basis state `index` satisfies every plaquette.
    pub fn satisfies_constraints(&self, index: usize) -> bool {
        self.plaquettes.iter().all(|p| p.parity(index) == 1)
    }

    /// Logical configuration (with spin 0 fixed up) encoded by a
    /// constraint-satisfying basis state.
    pub fn decode(&self, index: usize) -> Option<Vec<i8>> {
        if !self.satisfies_constraints(index) {
            return None;
        }
        let mut spins = vec![1i8; self.n_logical];
        for j in 1..self.n_logical {
            spins[j] = if index >> self.qubit_of(0, j) & 1 == 0 { 1 } else { -1 };
        }
        let encoded = basis_index(&encode_configuration(&spins));
        (encoded == index).then_some(spins)
    }
}

pub fn map_logical_to_physical(inst: &LogicalInstance, constraint_strength: f64) -> Result<PhysicalInstance> {
    if inst.n_logical < 3 {
        return Err(Error::InvalidInstance(format!(
            "{}: N = {} has no closed parity loop",
            inst.id, inst.n_logical
        )));
    }
    if !(constraint_strength > 0.0 && constraint_strength.is_finite()) {
        return Err(Error::Domain(format!(
            "constraint strength {constraint_strength} must be positive"
        )));
    }
    Ok(PhysicalInstance {
        id: inst.id.clone(),
        n_logical: inst.n_logical,
        fields: inst.couplings.clone(),
        plaquettes: enumerate_plaquettes(inst.n_logical)?,
        pair_index: pairs(inst.n_logical),
        constraint_strength,
    })
}

/// Exhaustive ground energy and every minimizing configuration.
///
/// Minimizers come in global-flip pairs; ties are resolved with an absolute
/// tolerance of `1e-12`.
pub fn logical_ground_bruteforce(inst: &LogicalInstance) -> Result<(f64, Vec<Vec<i8>>)> {
    let n = inst.n_logical;
    if n > BRUTEFORCE_LIMIT {
        return Err(Error::TooLarge {
            what: "exhaustive enumeration",
            size: n,
            limit: BRUTEFORCE_LIMIT,
        });
    }
    let energies: Vec<f64> = (0..1usize << n)
        .map(|bits| inst.energy(&logical_config(n, bits)))
        .collect();
    let best = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let configs = energies
        .iter()
        .enumerate()
        .filter(|(_, &e)| e <= best + 1e-12)
        .map(|(bits, _)| logical_config(n, bits))
        .collect();
    Ok((best, configs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(n: usize, couplings: Vec<f64>) -> LogicalInstance {
        LogicalInstance::new("t", n, 0, couplings).unwrap()
    }

    #[test]
    fn pair_index_is_row_major() {
        let n = 5;
        for (k, (i, j)) in pairs(n).into_iter().enumerate() {
            assert_eq!(pair_index(n, i, j), k);
        }
    }

    #[test]
    fn rejects_bad_couplings() {
        assert!(LogicalInstance::new("x", 3, 0, vec![0.0; 2]).is_err());
        assert!(LogicalInstance::new("x", 3, 0, vec![0.0, 1.5, 0.0]).is_err());
        assert!(LogicalInstance::new("x", 3, 0, vec![0.0, f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn plaquette_counts() {
        assert_eq!(enumerate_plaquettes(3).unwrap().len(), 1);
        assert_eq!(enumerate_plaquettes(4).unwrap().len(), 3);
        let p5 = enumerate_plaquettes(5).unwrap();
        assert_eq!(p5.len(), 6);
        assert_eq!(p5.iter().filter(|p| p.members.len() == 3).count(), 3);
        assert_eq!(p5.iter().filter(|p| p.members.len() == 4).count(), 3);
        for n in 3..9 {
            assert_eq!(enumerate_plaquettes(n).unwrap().len(), pair_count(n) - n + 1);
        }
        assert!(enumerate_plaquettes(2).is_err());
    }

    #[test]
    fn plaquette_loops_are_closed_by_enumeration() {
        // Brute force: every plaquette product is +1 for every logical configuration.
        for n in 3..=6 {
            let plaq = enumerate_plaquettes(n).unwrap();
            for bits in 0..1usize << n {
                let idx = basis_index(&encode_configuration(&logical_config(n, bits)));
                for p in &plaq {
                    assert_eq!(p.parity(idx), 1, "n={n} bits={bits:b} plaquette {:?}", p.members);
                }
            }
        }
    }

    #[test]
    fn encoding_examples() {
        assert_eq!(encode_configuration(&[1, 1, 1, 1]), vec![1; 6]);
        assert_eq!(encode_configuration(&[1, -1, 1]), vec![-1, 1, -1]);
        let s = [1, -1, -1, 1, -1];
        let flipped: Vec<i8> = s.iter().map(|x| -x).collect();
        assert_eq!(encode_configuration(&s), encode_configuration(&flipped));
    }

    #[test]
    fn mapping_examples() {
        let l = inst(3, vec![0.1, -0.2, 0.3]);
        let p = map_logical_to_physical(&l, 2.0).unwrap();
        assert_eq!(p.fields, vec![0.1, -0.2, 0.3]);
        assert_eq!(p.plaquettes.len(), 1);
        assert_eq!(p.constraint_strength, 2.0);

        let z = inst(5, vec![0.0; 10]);
        let p = map_logical_to_physical(&z, 2.0).unwrap();
        assert_eq!(p.k_physical(), 10);
        assert!(p.fields.iter().all(|&f| f == 0.0));
        assert_eq!(p.n_constraints(), 6);

        let l2 = LogicalInstance::new("two", 2, 0, vec![0.5]).unwrap();
        assert!(matches!(map_logical_to_physical(&l2, 2.0), Err(Error::InvalidInstance(_))));
        assert!(map_logical_to_physical(&l, 0.0).is_err());
    }

    #[test]
    fn field_matches_pair_coupling() {
        let l = inst(5, (0..10).map(|k| k as f64 / 10.0 - 0.45).collect());
        let p = map_logical_to_physical(&l, 2.0).unwrap();
        for (k, &(i, j)) in p.pair_index.iter().enumerate() {
            assert_eq!(p.fields[k], l.coupling(i, j));
            assert_eq!(p.qubit_of(j, i), k);
        }
    }

    #[test]
    fn decode_inverts_encode_up_to_flip() {
        let l = inst(5, vec![0.0; 10]);
        let p = map_logical_to_physical(&l, 2.0).unwrap();
        for bits in 0..32 {
            let s = logical_config(5, bits);
            let idx = basis_index(&encode_configuration(&s));
            let d = p.decode(idx).unwrap();
            assert!(d == s || d.iter().zip(&s).all(|(a, b)| *a == -*b));
        }
        // a single flipped qubit breaks at least one plaquette
        assert!(p.decode(1).is_none());
    }

    #[test]
    fn bruteforce_examples() {
        let (e, cfgs) = logical_ground_bruteforce(&inst(3, vec![-1.0; 3])).unwrap();
        assert_eq!(e, -3.0);
        assert_eq!(cfgs, vec![vec![1, 1, 1], vec![-1, -1, -1]]);

        // Frustrated triangle: enumerate all 8 configurations by hand.
        let tri = inst(3, vec![1.0; 3]);
        let manual: Vec<f64> = (0..8)
            .map(|b| {
                let s = logical_config(3, b);
                f64::from(s[0] * s[1] + s[0] * s[2] + s[1] * s[2])
            })
            .collect();
        let min = manual.iter().copied().fold(f64::INFINITY, f64::min);
        let count = manual.iter().filter(|&&e| e == min).count();
        let (e, cfgs) = logical_ground_bruteforce(&tri).unwrap();
        assert_eq!(e, min);
        assert_eq!(e, -1.0);
        assert_eq!(cfgs.len(), count);
        assert_eq!(cfgs.len(), 6);
    }

    #[test]
    fn bruteforce_refuses_large_n() {
        let n = BRUTEFORCE_LIMIT + 1;
        let big = inst(n, vec![0.0; pair_count(n)]);
        assert!(matches!(logical_ground_bruteforce(&big), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn instance_file_roundtrip_and_order_check() {
        let l = inst(4, vec![0.1, 0.2, 0.3, -0.4, -0.5, 0.6]);
        let text = l.to_json().unwrap();
        assert_eq!(LogicalInstance::from_json(&text).unwrap(), l);
        let bad = r#"{"id":"b","n_logical":3,"seed":1,"couplings":[[0,2,0.1],[0,1,0.2],[1,2,0.3]]}"#;
        assert!(LogicalInstance::from_json(bad).is_err());
    }
}
