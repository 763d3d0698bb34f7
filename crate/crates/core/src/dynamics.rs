//! Time evolution under a schedule and final ground-state fidelity.
//!
//! The Schrödinger equation `i d|psi>/dt = H(t/T)|psi>` (hbar = 1) is
//! integrated in normalized time with classical fixed-step RK4 on the
//! matrix-free passage Hamiltonian. The state is stored as separate real and
//! imaginary parts; `H` is real, so `d(re)/dtau = T H im` and
//! `d(im)/dtau = -T H re`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{hamiltonian_blocks_pair, PassageHamiltonian, PhysicalInstance};
use crate::schedule::Schedule;

/// Energy window defining the final ground space.
pub const DEGENERACY_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolveOptions {
    /// RK4 steps per unit of `T * norm_bound`.
    pub steps_per_unit: f64,
    pub min_steps: usize,
    /// Largest accepted per-step norm drift before renormalization.
    pub drift_tolerance: f64,
    /// Step doublings attempted after an integration failure.
    pub max_retries: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            steps_per_unit: 40.0,
            min_steps: 2000,
            drift_tolerance: 1e-6,
            max_retries: 3,
        }
    }
}

impl EvolveOptions {
    /// `max(min_steps, ceil(steps_per_unit * T * norm_bound))`.
    pub fn step_count(&self, ham: &PassageHamiltonian, t_anneal: f64) -> usize {
        let steps = (self.steps_per_unit * t_anneal * ham.norm_bound()).ceil();
        (steps as usize).max(self.min_steps)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    pub amplitudes: Vec<Complex64>,
}

impl StateVector {
    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Uniform superposition, the ground state of `-sum_k sigma_x^(k)`.
    pub fn uniform(dim: usize) -> Self {
        let a = (dim as f64).sqrt().recip();
        Self {
            amplitudes: vec![Complex64::new(a, 0.0); dim],
        }
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut amplitudes = vec![Complex64::default(); dim];
        amplitudes[index] = Complex64::new(1.0, 0.0);
        Self { amplitudes }
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            amplitudes: self.amplitudes.iter().map(|a| a * factor).collect(),
        }
    }
}

/// Ground-space weight of a state, with the ground-space dimension.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FidelityReport {
    pub value: f64,
    pub degeneracy: usize,
}

#[derive(Clone, Debug)]
pub struct EvolutionResult {
    pub instance_id: String,
    pub final_state: StateVector,
    pub fidelity: f64,
    /// Dimension of the final ground space; above 1 signals a degenerate
    /// final Hamiltonian.
    pub ground_degeneracy: usize,
    /// Largest per-step norm drift before renormalization.
    pub norm_drift: f64,
    pub steps_used: usize,
    pub annealing_time: f64,
}

/// Exported form of an evolution: `{instance_id, T, fidelity, norm_drift, steps_used}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionRecord {
    pub instance_id: String,
    #[serde(rename = "T")]
    pub t: f64,
    pub fidelity: f64,
    pub norm_drift: f64,
    pub steps_used: usize,
}

impl From<&EvolutionResult> for EvolutionRecord {
    fn from(r: &EvolutionResult) -> Self {
        Self {
            instance_id: r.instance_id.clone(),
            t: r.annealing_time,
            fidelity: r.fidelity,
            norm_drift: r.norm_drift,
            steps_used: r.steps_used,
        }
    }
}

/// Weight of `state` on the ground space of `H_p + C H_c`.
pub fn fidelity(state: &StateVector, phys: &PhysicalInstance) -> FidelityReport {
    let ham = PassageHamiltonian::new(phys);
    ground_weight(state, &ham.final_diagonal().ground_indices(DEGENERACY_TOLERANCE))
}

fn ground_weight(state: &StateVector, ground: &[usize]) -> FidelityReport {
    let value: f64 = ground.iter().map(|&i| state.amplitudes[i].norm_sqr()).sum();
    FidelityReport {
        value: value.clamp(0.0, 1.0),
        degeneracy: ground.len(),
    }
}

pub fn evolve(phys: &PhysicalInstance, schedule: &Schedule) -> Result<EvolutionResult> {
    evolve_with(&PassageHamiltonian::new(phys), schedule, &EvolveOptions::default())
}

/// Evolves with the heuristic step count, doubling it after an integration
/// failure up to `max_retries` times.
pub fn evolve_with(ham: &PassageHamiltonian, schedule: &Schedule, opts: &EvolveOptions) -> Result<EvolutionResult> {
    let mut steps = opts.step_count(ham, schedule.annealing_time());
    let mut attempt = 0;
    loop {
        match evolve_steps(ham, schedule, steps, opts) {
            Err(Error::IntegrationFailure { .. }) if attempt < opts.max_retries => {
                attempt += 1;
                steps *= 2;
            }
            other => return other,
        }
    }
}

/// Single integration with exactly `steps` RK4 steps.
pub fn evolve_steps(ham: &PassageHamiltonian, schedule: &Schedule, steps: usize, opts: &EvolveOptions) -> Result<EvolutionResult> {
    if steps == 0 {
        return Err(Error::Domain("at least one integration step is required".into()));
    }
    let t_anneal = schedule.annealing_time();
    let dim = ham.dim();
    let k = ham.k_physical();
    let amp = (dim as f64).sqrt().recip();
    let mut re = vec![amp; dim];
    let mut im = vec![0.0; dim];

    let mut work = Rk4Work::new(dim);
    let dtau = 1.0 / steps as f64;
    let mut max_drift: f64 = 0.0;

    let controls_at = |tau: f64, diag: &mut [f64]| -> f64 {
        let (s, c) = schedule.controls(tau);
        ham.diagonal_into(s * t_anneal, c * t_anneal, diag);
        ham.transverse_coefficient(s) * t_anneal
    };

    let mut a_start = controls_at(0.0, &mut work.d_start);
    for step in 0..steps {
        let tau = step as f64 * dtau;
        let tau_end = if step + 1 == steps { 1.0 } else { (step + 1) as f64 * dtau };
        let a_mid = controls_at(tau + 0.5 * dtau, &mut work.d_mid);
        let a_end = controls_at(tau_end, &mut work.d_end);

        let norm = work.step(k, dtau, &mut re, &mut im, a_start, a_mid, a_end).sqrt();
        let drift = (norm - 1.0).abs();
        if !(drift < opts.drift_tolerance) {
            return Err(Error::IntegrationFailure { drift, step, steps });
        }
        max_drift = max_drift.max(drift);
        let inv = norm.recip();
        re.iter_mut().chain(im.iter_mut()).for_each(|v| *v *= inv);

        std::mem::swap(&mut work.d_start, &mut work.d_end);
        a_start = a_end;
    }

    let final_state = StateVector {
        amplitudes: re.iter().zip(&im).map(|(&r, &i)| Complex64::new(r, i)).collect(),
    };
    let ground = ham.final_diagonal().ground_indices(DEGENERACY_TOLERANCE);
    let report = ground_weight(&final_state, &ground);
    Ok(EvolutionResult {
        instance_id: ham.id.clone(),
        final_state,
        fidelity: report.value,
        ground_degeneracy: report.degeneracy,
        norm_drift: max_drift,
        steps_used: steps,
        annealing_time: t_anneal,
    })
}

struct Rk4Work {
    d_start: Vec<f64>,
    d_mid: Vec<f64>,
    d_end: Vec<f64>,
    acc_re: Vec<f64>,
    acc_im: Vec<f64>,
    t1_re: Vec<f64>,
    t1_im: Vec<f64>,
    t2_re: Vec<f64>,
    t2_im: Vec<f64>,
}

#[inline(always)]
fn blk(v: &[f64], b: usize) -> &[f64; 8] {
    v[b..b + 8].try_into().expect("block of eight")
}

#[inline(always)]
fn blk_mut(v: &mut [f64], b: usize) -> &mut [f64; 8] {
    (&mut v[b..b + 8]).try_into().expect("block of eight")
}

impl Rk4Work {
    fn new(dim: usize) -> Self {
        let z = || vec![0.0; dim];
        Self {
            d_start: z(),
            d_mid: z(),
            d_end: z(),
            acc_re: z(),
            acc_im: z(),
            t1_re: z(),
            t1_im: z(),
            t2_re: z(),
            t2_im: z(),
        }
    }

    /// One RK4 step of `d(re)/dtau = H im`, `d(im)/dtau = -H re`; diagonals
    /// and transverse coefficients are pre-multiplied by `T`. Returns the
    /// squared norm of the updated state.
    #[allow(clippy::too_many_arguments)]
    fn step(&mut self, k: usize, h: f64, re: &mut [f64], im: &mut [f64], a0: f64, a_mid: f64, a1: f64) -> f64 {
        let Self {
            d_start,
            d_mid,
            d_end,
            acc_re,
            acc_im,
            t1_re,
            t1_im,
            t2_re,
            t2_im,
        } = self;
        let half = 0.5 * h;
        // k1 at the start, t1 = psi + h/2 k1
        hamiltonian_blocks_pair(k, d_start, a0, re, im, |b, hr, hi| {
            let (pr, pi) = (blk(re, b), blk(im, b));
            let (ar, ai) = (blk_mut(acc_re, b), blk_mut(acc_im, b));
            let (tr, ti) = (blk_mut(t1_re, b), blk_mut(t1_im, b));
            for j in 0..8 {
                ar[j] = hi[j];
                ai[j] = -hr[j];
                tr[j] = pr[j] + half * hi[j];
                ti[j] = pi[j] - half * hr[j];
            }
        });
        // k2 at the midpoint, t2 = psi + h/2 k2
        hamiltonian_blocks_pair(k, d_mid, a_mid, t1_re, t1_im, |b, hr, hi| {
            let (pr, pi) = (blk(re, b), blk(im, b));
            let (ar, ai) = (blk_mut(acc_re, b), blk_mut(acc_im, b));
            let (tr, ti) = (blk_mut(t2_re, b), blk_mut(t2_im, b));
            for j in 0..8 {
                ar[j] += 2.0 * hi[j];
                ai[j] -= 2.0 * hr[j];
                tr[j] = pr[j] + half * hi[j];
                ti[j] = pi[j] - half * hr[j];
            }
        });
        // k3 at the midpoint, t1 = psi + h k3
        hamiltonian_blocks_pair(k, d_mid, a_mid, t2_re, t2_im, |b, hr, hi| {
            let (pr, pi) = (blk(re, b), blk(im, b));
            let (ar, ai) = (blk_mut(acc_re, b), blk_mut(acc_im, b));
            let (tr, ti) = (blk_mut(t1_re, b), blk_mut(t1_im, b));
            for j in 0..8 {
                ar[j] += 2.0 * hi[j];
                ai[j] -= 2.0 * hr[j];
                tr[j] = pr[j] + h * hi[j];
                ti[j] = pi[j] - h * hr[j];
            }
        });
        // k4 at the end, psi += h/6 (k1 + 2 k2 + 2 k3 + k4)
        let w = h / 6.0;
        let mut norm = [0.0f64; 8];
        hamiltonian_blocks_pair(k, d_end, a1, t1_re, t1_im, |b, hr, hi| {
            let (ar, ai) = (blk(acc_re, b), blk(acc_im, b));
            let (pr, pi) = (blk_mut(re, b), blk_mut(im, b));
            for j in 0..8 {
                pr[j] += w * (ar[j] + hi[j]);
                pi[j] += w * (ai[j] - hr[j]);
                norm[j] += pr[j] * pr[j] + pi[j] * pi[j];
            }
        });
        norm.iter().sum()
    }
}

/// Mean fidelity over a group with per-instance values in group order.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupFidelity {
    pub mean: f64,
    pub per_instance: Vec<f64>,
}

/// Arithmetic mean of single-instance fidelities; instances evolve in
/// parallel, the mean is summed in group order.
pub fn group_fidelity(schedule: &Schedule, group: &[PassageHamiltonian], opts: &EvolveOptions) -> Result<GroupFidelity> {
    if group.is_empty() {
        return Err(Error::Domain("group fidelity of an empty group".into()));
    }
    let results: Vec<Result<f64>> = group
        .par_iter()
        .map(|ham| evolve_with(ham, schedule, opts).map(|r| r.fidelity))
        .collect();
    let mut per_instance = Vec::with_capacity(group.len());
    let mut failed = Vec::new();
    let mut first = None;
    for (ham, r) in group.iter().zip(results) {
        match r {
            Ok(f) => per_instance.push(f),
            Err(e) => {
                failed.push(ham.id.clone());
                first.get_or_insert(e);
            }
        }
    }
    if let Some(first) = first {
        return Err(Error::GroupEvaluation {
            ids: failed,
            first: Box::new(first),
        });
    }
    let mean = per_instance.iter().sum::<f64>() / per_instance.len() as f64;
    Ok(GroupFidelity { mean, per_instance })
}
