//! Operators on the physical Hilbert space.
//!
//! The initial Hamiltonian is `-sum_k sigma_x^(k)`, so its ground state is the
//! uniform superposition with all-positive amplitudes. Problem and constraint
//! terms are diagonal in the computational basis.

use std::collections::BTreeMap;

use num_complex::Complex64;

use super::instance::{z_value, PhysicalInstance};
use crate::error::{Error, Result};

/// Sign applied to `sum_k sigma_x^(k)` in the initial Hamiltonian.
pub const TRANSVERSE_SIGN: f64 = -1.0;

/// Operator diagonal in the computational z-basis.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalOperator {
    entries: Vec<f64>,
}

impl DiagonalOperator {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if !entries.len().is_power_of_two() {
            return Err(Error::Domain(format!("dimension {} is not a power of two", entries.len())));
        }
        if entries.iter().any(|e| !e.is_finite()) {
            return Err(Error::Domain("non-finite diagonal entry".into()));
        }
        Ok(Self { entries })
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// `self + factor * other`.
    pub fn add_scaled(&self, other: &DiagonalOperator, factor: f64) -> DiagonalOperator {
        assert_eq!(self.dim(), other.dim());
        DiagonalOperator {
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a + factor * b)
                .collect(),
        }
    }

    /// Indices attaining the minimum within `tol`, ascending.
    pub fn ground_indices(&self, tol: f64) -> Vec<usize> {
        let min = self.entries.iter().copied().fold(f64::INFINITY, f64::min);
        (0..self.dim()).filter(|&i| self.entries[i] <= min + tol).collect()
    }

    /// The `count` smallest entries, ascending.
    pub fn smallest(&self, count: usize) -> Vec<f64> {
        let mut v = self.entries.clone();
        v.sort_by(f64::total_cmp);
        v.truncate(count);
        v
    }
}

/// Sparse Hermitian matrix keyed by `(row, col)`; explicit zeros are dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseHermitianOperator {
    dim: usize,
    entries: BTreeMap<(usize, usize), Complex64>,
}

impl SparseHermitianOperator {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: BTreeMap::new(),
        }
    }

    /// Builds from triplets, adding their Hermitian closure. Diagonal values
    /// must be real.
    pub fn from_entries(dim: usize, triplets: impl IntoIterator<Item = (usize, usize, Complex64)>) -> Result<Self> {
        let mut op = Self::zeros(dim);
        for (r, c, v) in triplets {
            if r >= dim || c >= dim {
                return Err(Error::Domain(format!("entry ({r}, {c}) outside dimension {dim}")));
            }
            if r == c {
                if v.im != 0.0 {
                    return Err(Error::Domain(format!("complex diagonal entry at {r}")));
                }
                op.insert(r, c, v);
            } else {
                op.insert(r, c, v);
                op.insert(c, r, v.conj());
            }
        }
        Ok(op)
    }

    fn insert(&mut self, r: usize, c: usize, v: Complex64) {
        if v != Complex64::new(0.0, 0.0) {
            self.entries.insert((r, c), v);
        } else {
            self.entries.remove(&(r, c));
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.entries.get(&(r, c)).copied().unwrap_or_default()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        self.entries.iter().map(|(&(r, c), &v)| (r, c, v))
    }

    pub fn is_hermitian(&self) -> bool {
        self.entries
            .iter()
            .all(|(&(r, c), &v)| self.get(c, r) == v.conj())
    }

    /// `self + factor * other`.
    pub fn add_scaled(&self, other: &SparseHermitianOperator, factor: f64) -> SparseHermitianOperator {
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        for (&(r, c), &v) in &other.entries {
            let sum = out.get(r, c) + v * factor;
            out.insert(r, c, sum);
        }
        out
    }

    pub fn add_diagonal(&self, diag: &DiagonalOperator, factor: f64) -> SparseHermitianOperator {
        assert_eq!(self.dim, diag.dim());
        let mut out = self.clone();
        for (i, &d) in diag.entries().iter().enumerate() {
            let sum = out.get(i, i) + d * factor;
            out.insert(i, i, sum);
        }
        out
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![Complex64::default(); self.dim];
        for (&(r, c), &v) in &self.entries {
            y[r] += v * x[c];
        }
        y
    }

    /// Row-major dense copy, for small-dimension checks.
    pub fn to_dense(&self) -> Vec<Complex64> {
        let mut m = vec![Complex64::default(); self.dim * self.dim];
        for (&(r, c), &v) in &self.entries {
            m[r * self.dim + c] = v;
        }
        m
    }
}

/// `sum_k J_k z_k`.
pub fn build_problem_hamiltonian(phys: &PhysicalInstance) -> DiagonalOperator {
    let k = phys.k_physical();
    let entries = (0..1usize << k)
        .map(|b| phys.fields.iter().enumerate().map(|(q, &j)| j * z_value(b, q)).sum())
        .collect();
    DiagonalOperator { entries }
}

/// `sum_p -prod_{q in p} z_q`: `-N_c` on every constraint-satisfying state,
/// `+2` for each violated plaquette.
pub fn build_constraint_hamiltonian(phys: &PhysicalInstance) -> DiagonalOperator {
    let k = phys.k_physical();
    let entries = (0..1usize << k)
        .map(|b| phys.plaquettes.iter().map(|p| -f64::from(p.parity(b))).sum())
        .collect();
    DiagonalOperator { entries }
}

/// `-sum_k sigma_x^(k)` on `k_physical` qubits.
pub fn build_initial_hamiltonian(k_physical: usize) -> Result<SparseHermitianOperator> {
    if k_physical == 0 {
        return Err(Error::Domain("initial Hamiltonian needs at least one qubit".into()));
    }
    let dim = 1usize << k_physical;
    let mut op = SparseHermitianOperator::zeros(dim);
    for b in 0..dim {
        for q in 0..k_physical {
            op.insert(b, b ^ (1 << q), Complex64::new(TRANSVERSE_SIGN, 0.0));
        }
    }
    Ok(op)
}

/// `(1 - s) H_i + s H_p + c H_c` as an explicit sparse matrix.
pub fn assemble_passage(phys: &PhysicalInstance, s_value: f64, c_value: f64) -> Result<SparseHermitianOperator> {
    if !(0.0..=1.0).contains(&s_value) {
        return Err(Error::Domain(format!("s = {s_value} outside [0, 1]")));
    }
    if !(c_value >= 0.0) {
        return Err(Error::Domain(format!("constraint coefficient {c_value} is negative")));
    }
    let initial = build_initial_hamiltonian(phys.k_physical())?;
    let hp = build_problem_hamiltonian(phys);
    let hc = build_constraint_hamiltonian(phys);
    let scaled = SparseHermitianOperator::zeros(initial.dim()).add_scaled(&initial, 1.0 - s_value);
    Ok(scaled.add_diagonal(&hp, s_value).add_diagonal(&hc, c_value))
}

/// Matrix-free form of the passage Hamiltonian used by the eigensolver and
/// the propagator.
///
/// `H(s, c) = -(1 - s) t sum_k sigma_x^(k) + s H_p + c H_c`, where `t` is the
/// transverse amplitude (1 unless the operator has been rescaled). All terms
/// are real, so the operator is real symmetric.
#[derive(Clone, Debug)]
pub struct PassageHamiltonian {
    pub id: String,
    k: usize,
    problem: Vec<f64>,
    constraint: Vec<f64>,
    transverse: f64,
    constraint_strength: f64,
    norm_bound: f64,
}

impl PassageHamiltonian {
    pub fn new(phys: &PhysicalInstance) -> Self {
        let k = phys.k_physical();
        let norm_bound = k as f64
            + phys.fields.iter().map(|j| j.abs()).sum::<f64>()
            + phys.constraint_strength * phys.n_constraints() as f64;
        Self {
            id: phys.id.clone(),
            k,
            problem: build_problem_hamiltonian(phys).entries,
            constraint: build_constraint_hamiltonian(phys).entries,
            transverse: 1.0,
            constraint_strength: phys.constraint_strength,
            norm_bound,
        }
    }

    /// Same passage with every energy multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            id: self.id.clone(),
            k: self.k,
            problem: self.problem.iter().map(|v| v * factor).collect(),
            constraint: self.constraint.iter().map(|v| v * factor).collect(),
            transverse: self.transverse * factor,
            constraint_strength: self.constraint_strength,
            norm_bound: self.norm_bound * factor.abs(),
        }
    }

    pub fn k_physical(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        1 << self.k
    }

    pub fn constraint_strength(&self) -> f64 {
        self.constraint_strength
    }

    /// Triangle-inequality bound `K + sum |J_k| + C N_c` on the spectral norm.
    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    pub fn problem_diagonal(&self) -> &[f64] {
        &self.problem
    }

    pub fn constraint_diagonal(&self) -> &[f64] {
        &self.constraint
    }

    /// Coefficient multiplying `sum_k sigma_x^(k)` at mixing value `s`.
    #[inline]
    pub fn transverse_coefficient(&self, s: f64) -> f64 {
        TRANSVERSE_SIGN * (1.0 - s) * self.transverse
    }

    /// Diagonal of `s H_p + c H_c`.
    pub fn diagonal_into(&self, s: f64, c: f64, out: &mut [f64]) {
        for ((o, p), q) in out.iter_mut().zip(&self.problem).zip(&self.constraint) {
            *o = s * p + c * q;
        }
    }

    /// Final Hamiltonian `H_p + C H_c`.
    pub fn final_diagonal(&self) -> DiagonalOperator {
        let entries = self
            .problem
            .iter()
            .zip(&self.constraint)
            .map(|(p, q)| p + self.constraint_strength * q)
            .collect();
        DiagonalOperator { entries }
    }

    /// `y = H(s, c) x`.
    pub fn apply(&self, s: f64, c: f64, x: &[f64], y: &mut [f64]) {
        for i in 0..y.len() {
            y[i] = (s * self.problem[i] + c * self.constraint[i]) * x[i];
        }
        transverse_accumulate(self.k, self.transverse_coefficient(s), x, y);
    }

    /// `y = (ds H_p + dc H_c - ds H_i) x`, the derivative of `H` along the
    /// sweep given `ds/dtau` and `dc/dtau`.
    pub fn apply_derivative(&self, ds: f64, dc: f64, x: &[f64], y: &mut [f64]) {
        for i in 0..y.len() {
            y[i] = (ds * self.problem[i] + dc * self.constraint[i]) * x[i];
        }
        transverse_accumulate(self.k, -TRANSVERSE_SIGN * ds * self.transverse, x, y);
    }

    /// Explicit sparse form of `H(s, c)`.
    pub fn assemble(&self, s: f64, c: f64) -> SparseHermitianOperator {
        let dim = self.dim();
        let mut op = SparseHermitianOperator::zeros(dim);
        let coeff = Complex64::new(self.transverse_coefficient(s), 0.0);
        for b in 0..dim {
            op.insert(b, b, Complex64::new(s * self.problem[b] + c * self.constraint[b], 0.0));
            for q in 0..self.k {
                op.insert(b, b ^ (1 << q), coeff);
            }
        }
        op
    }
}

/// `y += coeff * sum_k sigma_x^(k) x` on a `2^k` real vector.
#[inline]
pub(crate) fn transverse_accumulate(k: usize, coeff: f64, x: &[f64], y: &mut [f64]) {
    if coeff == 0.0 {
        return;
    }
    if k < 3 {
        for q in 0..k {
            let h = 1usize << q;
            for (i, yi) in y.iter_mut().enumerate() {
                *yi += coeff * x[i ^ h];
            }
        }
        return;
    }
    // Blocks of eight amplitudes: the three lowest bits flip within the
    // block, every higher bit maps the block onto another whole block.
    for b in (0..x.len()).step_by(8) {
        let xb: &[f64; 8] = x[b..b + 8].try_into().expect("block of eight");
        let mut acc = [0.0f64; 8];
        for j in 0..8 {
            acc[j] = xb[j ^ 1] + xb[j ^ 2] + xb[j ^ 4];
        }
        for q in 3..k {
            let o: &[f64; 8] = x[(b ^ (1 << q))..(b ^ (1 << q)) + 8].try_into().expect("block of eight");
            for j in 0..8 {
                acc[j] += o[j];
            }
        }
        let yb: &mut [f64; 8] = (&mut y[b..b + 8]).try_into().expect("block of eight");
        for j in 0..8 {
            yb[j] += coeff * acc[j];
        }
    }
}

/// Visits `H x1` and `H x2` block by block for `H = diag + a sum_k sigma_x`,
/// with blocks of eight consecutive amplitudes; `visit(start, hx1, hx2)`.
/// Requires `k >= 3`.
#[inline]
pub(crate) fn hamiltonian_blocks_pair<F>(k: usize, diag: &[f64], a: f64, x1: &[f64], x2: &[f64], mut visit: F)
where
    F: FnMut(usize, &[f64; 8], &[f64; 8]),
{
    debug_assert!(k >= 3);
    for b in (0..x1.len()).step_by(8) {
        let d: &[f64; 8] = diag[b..b + 8].try_into().expect("block of eight");
        let p: &[f64; 8] = x1[b..b + 8].try_into().expect("block of eight");
        let r: &[f64; 8] = x2[b..b + 8].try_into().expect("block of eight");
        let mut s1 = [0.0f64; 8];
        let mut s2 = [0.0f64; 8];
        for j in 0..8 {
            s1[j] = p[j ^ 1] + p[j ^ 2] + p[j ^ 4];
            s2[j] = r[j ^ 1] + r[j ^ 2] + r[j ^ 4];
        }
        for q in 3..k {
            let o = b ^ (1 << q);
            let o1: &[f64; 8] = x1[o..o + 8].try_into().expect("block of eight");
            let o2: &[f64; 8] = x2[o..o + 8].try_into().expect("block of eight");
            for j in 0..8 {
                s1[j] += o1[j];
                s2[j] += o2[j];
            }
        }
        for j in 0..8 {
            s1[j] = d[j] * p[j] + a * s1[j];
            s2[j] = d[j] * r[j] + a * s2[j];
        }
        visit(b, &s1, &s2);
    }
}
