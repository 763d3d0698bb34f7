//! Instance sampling, discard filters, gap sorting and variance-balanced
//! grouping.
//!
//! Couplings come from ChaCha8 (`rand_chacha`), seeded with the cohort seed
//! through `SeedableRng::seed_from_u64` and using the instance index as the
//! stream number, so every instance is reproducible on its own and across
//! platforms.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{evolve_with, EvolveOptions, DEGENERACY_TOLERANCE};
use crate::error::{Error, Result};
use crate::model::{map_logical_to_physical, pair_count, LogicalInstance, PassageHamiltonian};
use crate::schedule::{CouplingMode, Schedule};
use crate::spectrum::{gap_summary, spectrum_with, GapSummary, SpectrumOptions};

/// Uniform variate on `[0, 1)` from the top 53 bits.
fn unit_interval(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn instance_id(index: usize) -> String {
    format!("inst-{index:06}")
}

/// `count` instances with couplings i.i.d. uniform on `[-1, 1)`.
pub fn sample_instances(count: usize, n_logical: usize, seed: u64) -> Result<Vec<LogicalInstance>> {
    if count == 0 {
        return Err(Error::Domain("sample size must be at least 1".into()));
    }
    (0..count).map(|index| sample_instance(index, n_logical, seed)).collect()
}

/// Instance `index` of the sample with the given seed.
pub fn sample_instance(index: usize, n_logical: usize, seed: u64) -> Result<LogicalInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let couplings = (0..pair_count(n_logical))
        .map(|_| 2.0 * unit_interval(&mut rng) - 1.0)
        .collect();
    LogicalInstance::new(instance_id(index), n_logical, seed, couplings)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscardReason {
    /// Final ground space is degenerate within the tolerance.
    DegenerateFinal,
    /// Unique final ground state that is not a valid parity encoding.
    ConstraintViolation,
    /// Target fidelity unreachable below the annealing-time cap.
    Hard,
}

impl std::fmt::Display for DiscardReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DiscardReason::DegenerateFinal => "degenerate_final",
            DiscardReason::ConstraintViolation => "constraint_violation",
            DiscardReason::Hard => "hard",
        })
    }
}

/// Discard class of the final Hamiltonian `H_p + C H_c`, if any.
pub fn final_state_check(inst: &LogicalInstance, constraint_strength: f64, tol: f64) -> Result<Option<DiscardReason>> {
    let phys = map_logical_to_physical(inst, constraint_strength)?;
    let ground = PassageHamiltonian::new(&phys).final_diagonal().ground_indices(tol);
    Ok(if ground.len() > 1 {
        Some(DiscardReason::DegenerateFinal)
    } else if !phys.satisfies_constraints(ground[0]) {
        Some(DiscardReason::ConstraintViolation)
    } else {
        None
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CohortEntry {
    pub instance: LogicalInstance,
    pub gap: GapSummary,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Cohort {
    pub entries: Vec<CohortEntry>,
    pub filter_log: Vec<(String, DiscardReason)>,
    pub seed: u64,
}

/// Settings for turning raw instances into a cohort.
#[derive(Clone, Debug)]
pub struct ScanOptions {
    pub constraint_strength: f64,
    pub coupling: CouplingMode,
    pub spectrum: SpectrumOptions,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            constraint_strength: crate::model::DEFAULT_CONSTRAINT_STRENGTH,
            coupling: CouplingMode::default(),
            spectrum: SpectrumOptions {
                l_levels: 2,
                ..Default::default()
            },
        }
    }
}

/// Minimum-gap summary of an instance under the linear ramp.
pub fn scan_instance(inst: &LogicalInstance, opts: &ScanOptions) -> Result<GapSummary> {
    let phys = map_logical_to_physical(inst, opts.constraint_strength)?;
    let schedule = Schedule::linear(1.0, opts.constraint_strength)?.with_coupling(opts.coupling);
    let trace = spectrum_with(&PassageHamiltonian::new(&phys), &schedule, &opts.spectrum)?;
    Ok(gap_summary(&trace))
}

impl Cohort {
    /// Screens the final Hamiltonians, then scans the spectrum of every
    /// instance that survives filters (a) and (b). Instances run in parallel.
    pub fn build(instances: Vec<LogicalInstance>, seed: u64, opts: &ScanOptions) -> Result<Cohort> {
        let scanned: Vec<Result<std::result::Result<GapSummary, DiscardReason>>> = instances
            .par_iter()
            .map(|inst| match final_state_check(inst, opts.constraint_strength, DEGENERACY_TOLERANCE)? {
                Some(reason) => Ok(Err(reason)),
                None => scan_instance(inst, opts).map(Ok),
            })
            .collect();
        let mut cohort = Cohort {
            seed,
            ..Default::default()
        };
        for (instance, outcome) in instances.into_iter().zip(scanned) {
            match outcome? {
                Ok(gap) => cohort.entries.push(CohortEntry { instance, gap }),
                Err(reason) => cohort.filter_log.push((instance.id.clone(), reason)),
            }
        }
        Ok(cohort)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn gaps(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.gap.min_gap).collect()
    }

    pub fn instances(&self) -> Vec<LogicalInstance> {
        self.entries.iter().map(|e| e.instance.clone()).collect()
    }
}

#[derive(Clone, Debug)]
pub struct FilterPolicy {
    pub constraint_strength: f64,
    pub degeneracy_tolerance: f64,
    /// Instances flagged by the annealing-time cap.
    pub hard_ids: BTreeSet<String>,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        Self {
            constraint_strength: crate::model::DEFAULT_CONSTRAINT_STRENGTH,
            degeneracy_tolerance: DEGENERACY_TOLERANCE,
            hard_ids: BTreeSet::new(),
        }
    }
}

/// Applies the three discard classes, logging every discarded id.
pub fn filter_instances(cohort: Cohort, policy: &FilterPolicy) -> Result<Cohort> {
    let Cohort {
        entries,
        mut filter_log,
        seed,
    } = cohort;
    let reasons: Vec<Result<Option<DiscardReason>>> = entries
        .par_iter()
        .map(|e| {
            if policy.hard_ids.contains(&e.instance.id) {
                return Ok(Some(DiscardReason::Hard));
            }
            final_state_check(&e.instance, policy.constraint_strength, policy.degeneracy_tolerance)
        })
        .collect();
    let mut kept = Vec::with_capacity(entries.len());
    for (entry, reason) in entries.into_iter().zip(reasons) {
        match reason? {
            Some(reason) => filter_log.push((entry.instance.id.clone(), reason)),
            None => kept.push(entry),
        }
    }
    Ok(Cohort {
        entries: kept,
        filter_log,
        seed,
    })
}

/// Settings for the time-cap discard screen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HardScreen {
    /// Fidelity the linear ramp must reach at `cap`.
    pub target: f64,
    pub cap: f64,
    /// Stop after this many consecutive smallest-gap instances pass.
    pub stop_after: usize,
    pub constraint_strength: f64,
    pub evolve: EvolveOptions,
}

impl Default for HardScreen {
    fn default() -> Self {
        Self {
            target: 0.9,
            cap: crate::optimize::TIME_CAP,
            stop_after: 30,
            constraint_strength: crate::model::DEFAULT_CONSTRAINT_STRENGTH,
            evolve: EvolveOptions::default(),
        }
    }
}

/// Ids of instances the linear ramp cannot bring to `screen.target` within
/// the time cap. Instances are checked in ascending gap order, a thread-count
/// batch at a time, until `stop_after` consecutive ones pass; larger gaps are
/// taken to pass as well.
pub fn screen_hard(cohort: &Cohort, screen: &HardScreen) -> Result<Vec<String>> {
    let mut order: Vec<&CohortEntry> = cohort.entries.iter().collect();
    order.sort_by(|a, b| a.gap.min_gap.total_cmp(&b.gap.min_gap).then_with(|| a.instance.id.cmp(&b.instance.id)));
    let schedule = Schedule::linear(screen.cap, screen.constraint_strength)?;
    let batch = rayon::current_num_threads().max(1);
    let mut hard = Vec::new();
    let mut streak = 0;
    for chunk in order.chunks(batch) {
        let fidelities = chunk
            .par_iter()
            .map(|e| {
                let phys = map_logical_to_physical(&e.instance, screen.constraint_strength)?;
                Ok(evolve_with(&PassageHamiltonian::new(&phys), &schedule, &screen.evolve)?.fidelity)
            })
            .collect::<Result<Vec<f64>>>()?;
        for (e, f) in chunk.iter().zip(fidelities) {
            if f < screen.target {
                hard.push(e.instance.id.clone());
                streak = 0;
            } else {
                streak += 1;
            }
        }
        if streak >= screen.stop_after {
            break;
        }
    }
    Ok(hard)
}

/// Ascending minimum gap, ties by instance id.
pub fn sort_by_gap(mut cohort: Cohort) -> Cohort {
    cohort.entries.sort_by(|a, b| {
        a.gap
            .min_gap
            .total_cmp(&b.gap.min_gap)
            .then_with(|| a.instance.id.cmp(&b.instance.id))
    });
    cohort
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceMethod {
    /// Boundary shifts between neighbouring groups while the largest
    /// standard deviation strictly drops.
    #[default]
    Greedy,
    /// Contiguous partition minimizing the largest standard deviation.
    Optimal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Group {
    /// Contiguous range of the sorted cohort before trimming.
    pub range: Range<usize>,
    /// Population standard deviation of the gaps in `range`.
    pub sigma: f64,
    pub min_gap: f64,
    pub max_gap: f64,
    /// Sorted-cohort indices kept after trimming to the quota.
    pub members: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grouping {
    pub groups: Vec<Group>,
    pub quota: usize,
    /// Largest sigma of the equal-count split the balancing started from.
    pub initial_max_sigma: f64,
    /// Accepted boundary moves (greedy) or zero (optimal).
    pub iterations: usize,
}

impl Grouping {
    pub fn max_sigma(&self) -> f64 {
        self.groups.iter().map(|g| g.sigma).fold(0.0, f64::max)
    }

    pub fn min_sigma(&self) -> f64 {
        self.groups.iter().map(|g| g.sigma).fold(f64::INFINITY, f64::min)
    }

    /// Index of the group whose untrimmed interval contains `gap`.
    pub fn group_of(&self, gap: f64) -> Option<usize> {
        self.groups.iter().position(|g| g.min_gap <= gap && gap <= g.max_gap)
    }
}

/// Prefix sums for O(1) standard deviations of contiguous ranges.
struct Moments {
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl Moments {
    fn new(values: &[f64]) -> Self {
        let mut s1 = vec![0.0; values.len() + 1];
        let mut s2 = vec![0.0; values.len() + 1];
        for (i, &v) in values.iter().enumerate() {
            s1[i + 1] = s1[i] + v;
            s2[i + 1] = s2[i] + v * v;
        }
        Self { s1, s2 }
    }

    fn sigma(&self, r: Range<usize>) -> f64 {
        let n = (r.end - r.start) as f64;
        if n == 0.0 {
            return 0.0;
        }
        let mean = (self.s1[r.end] - self.s1[r.start]) / n;
        let var = (self.s2[r.end] - self.s2[r.start]) / n - mean * mean;
        var.max(0.0).sqrt()
    }
}

/// Population standard deviation.
pub fn population_sigma(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Boundaries of the equal-count contiguous split (`n_groups + 1` entries).
pub fn equal_split(len: usize, n_groups: usize) -> Vec<usize> {
    (0..=n_groups).map(|i| i * len / n_groups).collect()
}

/// Indices `range.start + round(j (len - 1) / (quota - 1))`, an even stride
/// over the sorted members that keeps both extremes.
pub fn trim_indices(range: Range<usize>, quota: usize) -> Vec<usize> {
    let len = range.end - range.start;
    if quota >= len {
        return range.collect();
    }
    if quota == 1 {
        return vec![range.start + (len - 1) / 2];
    }
    (0..quota)
        .map(|j| range.start + ((j * (len - 1)) as f64 / (quota - 1) as f64).round() as usize)
        .collect()
}

fn check_balance_input(gaps: &[f64], n_groups: usize, quota: usize) -> Result<()> {
    if n_groups == 0 || quota == 0 {
        return Err(Error::Domain("group count and quota must be positive".into()));
    }
    if gaps.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Domain("gaps must be sorted ascending before grouping".into()));
    }
    let bounds = equal_split(gaps.len(), n_groups);
    for (g, w) in bounds.windows(2).enumerate() {
        if w[1] - w[0] < quota {
            return Err(Error::InfeasibleQuota {
                group: g,
                available: w[1] - w[0],
                quota,
            });
        }
    }
    Ok(())
}

/// Groups sorted gaps into `n_groups` contiguous groups of at least `quota`
/// members with balanced spread, then trims each to `quota`.
pub fn balance_groups(gaps: &[f64], n_groups: usize, quota: usize) -> Result<Grouping> {
    balance_groups_with(gaps, n_groups, quota, BalanceMethod::Greedy)
}

pub fn balance_groups_with(gaps: &[f64], n_groups: usize, quota: usize, method: BalanceMethod) -> Result<Grouping> {
    check_balance_input(gaps, n_groups, quota)?;
    let moments = Moments::new(gaps);
    let initial = equal_split(gaps.len(), n_groups);
    let max_sigma = |b: &[usize]| {
        b.windows(2)
            .map(|w| moments.sigma(w[0]..w[1]))
            .fold(0.0, f64::max)
    };
    let initial_max_sigma = max_sigma(&initial);
    let (bounds, iterations) = match method {
        BalanceMethod::Greedy => greedy_bounds(&moments, initial, quota),
        BalanceMethod::Optimal => (optimal_bounds(&moments, gaps.len(), n_groups, quota), 0),
    };
    let final_max = max_sigma(&bounds);
    assert!(final_max <= initial_max_sigma, "balancing increased the largest spread");
    let groups = bounds
        .windows(2)
        .map(|w| Group {
            range: w[0]..w[1],
            sigma: moments.sigma(w[0]..w[1]),
            min_gap: gaps[w[0]],
            max_gap: gaps[w[1] - 1],
            members: trim_indices(w[0]..w[1], quota),
        })
        .collect();
    Ok(Grouping {
        groups,
        quota,
        initial_max_sigma,
        iterations,
    })
}

/// Steepest single-instance boundary moves until none strictly lowers the
/// largest sigma; group sizes never drop below `quota`.
fn greedy_bounds(moments: &Moments, mut bounds: Vec<usize>, quota: usize) -> (Vec<usize>, usize) {
    let n_groups = bounds.len() - 1;
    let mut sigmas: Vec<f64> = bounds.windows(2).map(|w| moments.sigma(w[0]..w[1])).collect();
    let mut moves = 0;
    loop {
        let current = sigmas.iter().copied().fold(0.0, f64::max);
        let mut best: Option<(f64, usize, usize, f64, f64)> = None;
        for b in 1..n_groups {
            for candidate in [bounds[b] - 1, bounds[b] + 1] {
                if candidate < bounds[b - 1] + quota || candidate + quota > bounds[b + 1] {
                    continue;
                }
                let left = moments.sigma(bounds[b - 1]..candidate);
                let right = moments.sigma(candidate..bounds[b + 1]);
                let others = sigmas
                    .iter()
                    .enumerate()
                    .filter(|&(g, _)| g != b - 1 && g != b)
                    .map(|(_, &s)| s)
                    .fold(0.0, f64::max);
                let new_max = others.max(left).max(right);
                if new_max < current && best.map_or(true, |(m, ..)| new_max < m) {
                    best = Some((new_max, b, candidate, left, right));
                }
            }
        }
        let Some((_, b, candidate, left, right)) = best else {
            return (bounds, moves);
        };
        bounds[b] = candidate;
        sigmas[b - 1] = left;
        sigmas[b] = right;
        moves += 1;
    }
}

/// Dynamic program over contiguous partitions with groups of at least
/// `quota`, minimizing the largest sigma. Ties prefer the earliest cut.
fn optimal_bounds(moments: &Moments, len: usize, n_groups: usize, quota: usize) -> Vec<usize> {
    // cost[g][i]: best max sigma covering the first i items with g groups
    let mut cost = vec![vec![f64::INFINITY; len + 1]; n_groups + 1];
    let mut cut = vec![vec![0usize; len + 1]; n_groups + 1];
    cost[0][0] = 0.0;
    for g in 1..=n_groups {
        for i in g * quota..=len {
            let rest = (n_groups - g) * quota;
            if i + rest > len {
                break;
            }
            for j in (g - 1) * quota..=i - quota {
                if cost[g - 1][j].is_infinite() {
                    continue;
                }
                let c = cost[g - 1][j].max(moments.sigma(j..i));
                if c < cost[g][i] {
                    cost[g][i] = c;
                    cut[g][i] = j;
                }
            }
        }
    }
    let mut bounds = vec![len];
    let mut i = len;
    for g in (1..=n_groups).rev() {
        i = cut[g][i];
        bounds.push(i);
    }
    bounds.reverse();
    bounds
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Training cohort with its grouping and the test cohort assigned to the
/// training gap intervals.
#[derive(Clone, Debug)]
pub struct TrainTest {
    pub train: Cohort,
    pub grouping: Grouping,
    pub test: Cohort,
    /// Per group, indices into `test.entries` after trimming to the quota.
    pub test_groups: Vec<Vec<usize>>,
    /// Test instances outside every training interval.
    pub unassigned: Vec<String>,
}

impl TrainTest {
    pub fn train_group(&self, g: usize) -> Vec<&CohortEntry> {
        self.grouping.groups[g].members.iter().map(|&i| &self.train.entries[i]).collect()
    }

    pub fn test_group(&self, g: usize) -> Vec<&CohortEntry> {
        self.test_groups[g].iter().map(|&i| &self.test.entries[i]).collect()
    }
}

/// Shuffles the cohort with `seed`, takes the first half (rounded up) for
/// training and the rest for testing. Training groups are balanced; test
/// instances are assigned by the training groups' gap intervals and thinned
/// to the quota with the same stride rule.
pub fn split_train_test(cohort: &Cohort, n_groups: usize, quota: usize, seed: u64, method: BalanceMethod) -> Result<TrainTest> {
    split_train_test_excluding(cohort, n_groups, quota, seed, method, &BTreeSet::new())
}

/// As [`split_train_test`], but drops `exclude` after the shuffle, so every
/// other instance keeps the side it would have had without the exclusion.
pub fn split_train_test_excluding(
    cohort: &Cohort,
    n_groups: usize,
    quota: usize,
    seed: u64,
    method: BalanceMethod,
    exclude: &BTreeSet<String>,
) -> Result<TrainTest> {
    let mut order: Vec<usize> = (0..cohort.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let half = cohort.len().div_ceil(2);
    let pick = |idx: &[usize]| {
        sort_by_gap(Cohort {
            entries: idx
                .iter()
                .map(|&i| &cohort.entries[i])
                .filter(|e| !exclude.contains(&e.instance.id))
                .cloned()
                .collect(),
            filter_log: Vec::new(),
            seed: cohort.seed,
        })
    };
    let train = pick(&order[..half]);
    let test = pick(&order[half..]);
    let grouping = balance_groups_with(&train.gaps(), n_groups, quota, method)?;

    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); n_groups];
    let mut unassigned = Vec::new();
    for (i, e) in test.entries.iter().enumerate() {
        match grouping.group_of(e.gap.min_gap) {
            Some(g) => assigned[g].push(i),
            None => unassigned.push(e.instance.id.clone()),
        }
    }
    let mut test_groups = Vec::with_capacity(n_groups);
    for (g, members) in assigned.into_iter().enumerate() {
        if members.is_empty() {
            return Err(Error::EmptyTestGroup { group: g });
        }
        // members are contiguous in the sorted test cohort
        let range = members[0]..members[members.len() - 1] + 1;
        test_groups.push(trim_indices(range, quota));
    }
    Ok(TrainTest {
        train,
        grouping,
        test,
        test_groups,
        unassigned,
    })
}

/// Binned gap counts with the group intervals for shading.
#[derive(Clone, Debug, PartialEq)]
pub struct GapHistogram {
    /// `bins + 1` edges from the smallest to the largest gap.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub group_intervals: Vec<(f64, f64)>,
}

impl GapHistogram {
    /// CSV rows `bin_start,bin_end,count,group` (group of the bin centre, or empty).
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "bin_start,bin_end,count,group")?;
        for (i, &count) in self.counts.iter().enumerate() {
            let (a, b) = (self.edges[i], self.edges[i + 1]);
            let centre = 0.5 * (a + b);
            let group = self
                .group_intervals
                .iter()
                .position(|&(lo, hi)| lo <= centre && centre <= hi)
                .map(|g| g.to_string())
                .unwrap_or_default();
            writeln!(out, "{a},{b},{count},{group}")?;
        }
        Ok(())
    }
}

pub fn gap_histogram(gaps: &[f64], grouping: Option<&Grouping>, bins: usize) -> Result<GapHistogram> {
    if gaps.is_empty() || bins == 0 {
        return Err(Error::Domain("histogram needs gaps and at least one bin".into()));
    }
    let lo = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|i| lo + i as f64 * width).collect();
    edges.push(hi);
    let mut counts = vec![0; bins];
    for &g in gaps {
        let bin = if width > 0.0 {
            (((g - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[bin] += 1;
    }
    let group_intervals = grouping
        .map(|gr| gr.groups.iter().map(|g| (g.min_gap, g.max_gap)).collect())
        .unwrap_or_default();
    Ok(GapHistogram {
        edges,
        counts,
        group_intervals,
    })
}

/// One line of the cohort manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestLine {
    pub id: String,
    pub seed: u64,
    pub n_logical: usize,
    pub couplings: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub min_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub position: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub local_minima_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub group: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub split: Option<Split>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub discard_reason: Option<DiscardReason>,
}

impl ManifestLine {
    pub fn from_instance(inst: &LogicalInstance) -> Self {
        Self {
            id: inst.id.clone(),
            seed: inst.seed,
            n_logical: inst.n_logical(),
            couplings: inst.couplings().to_vec(),
            min_gap: None,
            position: None,
            local_minima_count: None,
            group: None,
            split: None,
            discard_reason: None,
        }
    }

    pub fn from_entry(entry: &CohortEntry) -> Self {
        Self {
            min_gap: Some(entry.gap.min_gap),
            position: Some(entry.gap.position),
            local_minima_count: Some(entry.gap.local_minima_count),
            ..Self::from_instance(&entry.instance)
        }
    }

    pub fn instance(&self) -> Result<LogicalInstance> {
        LogicalInstance::new(self.id.clone(), self.n_logical, self.seed, self.couplings.clone())
    }

    /// Cohort entry when the gap fields are present.
    pub fn entry(&self) -> Result<Option<CohortEntry>> {
        let (Some(min_gap), Some(position), Some(local_minima_count)) = (self.min_gap, self.position, self.local_minima_count) else {
            return Ok(None);
        };
        Ok(Some(CohortEntry {
            instance: self.instance()?,
            gap: GapSummary {
                min_gap,
                position,
                local_minima_count,
                gap_trace: Vec::new(),
            },
        }))
    }
}

pub fn write_manifest<W: Write>(lines: &[ManifestLine], mut out: W) -> Result<()> {
    for line in lines {
        serde_json::to_writer(&mut out, line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_manifest<R: BufRead>(input: R) -> Result<Vec<ManifestLine>> {
    let mut lines = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        lines.push(serde_json::from_str(&line).map_err(|e| Error::Parse(format!("manifest line {}: {e}", n + 1)))?);
    }
    Ok(lines)
}
