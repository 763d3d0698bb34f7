//! dCRAB optimization of group fidelity, annealing-time escalation and the
//! speed-up accounting against linear ramps.
//!
//! Every super-iteration draws fresh random frequencies, dresses the current
//! best schedule with them and tunes the new amplitudes with a Nelder-Mead
//! simplex. The annealing time is escalated geometrically until the group
//! reaches the target fidelity, then refined by bisection.

pub mod simplex;

use std::io::Write;
use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{group_fidelity, EvolveOptions};
use crate::error::{Error, Result};
use crate::model::{PassageHamiltonian, PhysicalInstance};
use crate::schedule::{BasisTerm, CouplingMode, ProtocolFile, Schedule};
use simplex::{maximize, SimplexOptions};

/// Annealing-time cap beyond which a target counts as unreachable.
pub const TIME_CAP: f64 = 1000.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EscalationConfig {
    pub t0: f64,
    pub factor: f64,
    pub cap: f64,
    /// Bisection stops once `(hi - lo) / hi` is at most this.
    pub refine_tolerance: f64,
    /// Start each escalation step from the previous best schedule.
    pub warm_start: bool,
}

impl Default for EscalationConfig {
    fn default() -> Self {
        Self {
            t0: 1.0,
            factor: 1.5,
            cap: TIME_CAP,
            refine_tolerance: 0.1,
            warm_start: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DcrabConfig {
    pub n_superiterations: usize,
    pub n_frequencies_per_super: usize,
    /// Simplex budget per super-iteration.
    pub inner_max_evaluations: usize,
    pub simplex_initial_step: f64,
    pub seed: u64,
    pub target_fidelity: f64,
    /// Optimize on a fixed random subsample of this size; `None` uses the
    /// whole group. Pass/fail decisions always use the whole group.
    pub objective_subsample: Option<usize>,
    /// Extra dCRAB rounds when the subsample passes and the group does not.
    pub validation_retries: usize,
    /// Frequencies are drawn uniformly from `[omega_min, omega_max]`.
    pub omega_min: f64,
    pub omega_max: f64,
    /// Score non-monotone schedules as zero fidelity.
    pub monotone: bool,
    pub constraint_strength: f64,
    pub coupling: CouplingMode,
    pub evolve: EvolveOptions,
    pub escalation: EscalationConfig,
}

impl Default for DcrabConfig {
    fn default() -> Self {
        Self {
            n_superiterations: 8,
            n_frequencies_per_super: 1,
            inner_max_evaluations: 200,
            simplex_initial_step: 0.1,
            seed: 0,
            target_fidelity: 0.9,
            objective_subsample: None,
            validation_retries: 2,
            omega_min: 0.5,
            omega_max: 10.0,
            monotone: false,
            constraint_strength: crate::model::DEFAULT_CONSTRAINT_STRENGTH,
            coupling: CouplingMode::Decoupled,
            evolve: EvolveOptions::default(),
            escalation: EscalationConfig::default(),
        }
    }
}

impl DcrabConfig {
    /// Every violated invariant, one message each.
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if self.n_superiterations == 0 {
            errors.push("n_superiterations must be positive".to_string());
        }
        if self.n_frequencies_per_super == 0 {
            errors.push("n_frequencies_per_super must be positive".to_string());
        }
        if self.inner_max_evaluations == 0 {
            errors.push("inner_max_evaluations must be positive".to_string());
        }
        if !(self.simplex_initial_step > 0.0) {
            errors.push("simplex_initial_step must be positive".to_string());
        }
        if !(self.target_fidelity > 0.0 && self.target_fidelity < 1.0) {
            errors.push(format!("target_fidelity {} outside (0, 1)", self.target_fidelity));
        }
        if self.objective_subsample == Some(0) {
            errors.push("objective_subsample must be positive".to_string());
        }
        if !(self.omega_min > 0.0 && self.omega_min <= self.omega_max && self.omega_max.is_finite()) {
            errors.push(format!("frequency range [{}, {}] is invalid", self.omega_min, self.omega_max));
        }
        if !(self.constraint_strength > 0.0 && self.constraint_strength.is_finite()) {
            errors.push("constraint_strength must be positive".to_string());
        }
        if !(self.evolve.steps_per_unit >= 0.0) || self.evolve.min_steps == 0 {
            errors.push("evolution step settings must be positive".to_string());
        }
        let e = &self.escalation;
        if !(e.t0 > 0.0 && e.factor > 1.0 && e.cap >= e.t0 && e.refine_tolerance > 0.0 && e.refine_tolerance < 1.0) {
            errors.push("escalation needs t0 > 0, factor > 1, cap >= t0 and refine_tolerance in (0, 1)".to_string());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }

    fn linear(&self, t_anneal: f64) -> Result<Schedule> {
        Ok(Schedule::linear(t_anneal, self.constraint_strength)?.with_coupling(self.coupling))
    }
}

/// Something that scores a schedule; larger is better.
pub trait Objective: Sync {
    fn evaluate(&self, schedule: &Schedule) -> Result<f64>;
}

impl<F> Objective for F
where
    F: Fn(&Schedule) -> Result<f64> + Sync,
{
    fn evaluate(&self, schedule: &Schedule) -> Result<f64> {
        self(schedule)
    }
}

/// Mean fidelity over a fixed set of prepared instances.
pub struct GroupObjective {
    hams: Vec<PassageHamiltonian>,
    evolve: EvolveOptions,
}

impl GroupObjective {
    pub fn new(group: &[PhysicalInstance], evolve: EvolveOptions) -> Self {
        Self {
            hams: group.iter().map(PassageHamiltonian::new).collect(),
            evolve,
        }
    }

    pub fn from_hamiltonians(hams: Vec<PassageHamiltonian>, evolve: EvolveOptions) -> Self {
        Self { hams, evolve }
    }

    pub fn len(&self) -> usize {
        self.hams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hams.is_empty()
    }

    /// Objective restricted to a seeded random subset of `size` instances
    /// (kept in group order).
    pub fn subsample(&self, size: usize, seed: u64) -> Self {
        if size >= self.hams.len() {
            return Self::from_hamiltonians(self.hams.clone(), self.evolve.clone());
        }
        let mut picked = sample(&mut ChaCha8Rng::seed_from_u64(seed), self.hams.len(), size).into_vec();
        picked.sort_unstable();
        Self::from_hamiltonians(picked.into_iter().map(|i| self.hams[i].clone()).collect(), self.evolve.clone())
    }
}

impl Objective for GroupObjective {
    fn evaluate(&self, schedule: &Schedule) -> Result<f64> {
        Ok(group_fidelity(schedule, &self.hams, &self.evolve)?.mean)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuperIteration {
    pub frequencies: Vec<f64>,
    pub best_after: f64,
    /// The simplex found nothing better than the dressed guess.
    pub zero_progress: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizationRecord {
    pub best_schedule: Schedule,
    pub best_objective: f64,
    /// `(evaluation index, value)` for every objective call, in order.
    pub objective_history: Vec<(usize, f64)>,
    pub superiteration_log: Vec<SuperIteration>,
    /// Whole-group value of `best_schedule` when the objective was a
    /// subsample.
    pub validated_objective: Option<f64>,
    pub wall_time: Duration,
}

/// Exported form of an [`OptimizationRecord`]; wall time is left out so the
/// file is reproducible.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RecordFile {
    pub best_schedule: ProtocolFile,
    pub best_objective: f64,
    pub objective_history: Vec<(usize, f64)>,
    pub superiteration_log: Vec<SuperIteration>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub validated_objective: Option<f64>,
}

impl OptimizationRecord {
    pub fn to_file(&self) -> RecordFile {
        RecordFile {
            best_schedule: ProtocolFile::from(&self.best_schedule),
            best_objective: self.best_objective,
            objective_history: self.objective_history.clone(),
            superiteration_log: self.superiteration_log.clone(),
            validated_objective: self.validated_objective,
        }
    }

    pub fn from_file(file: RecordFile) -> Result<Self> {
        Ok(Self {
            best_schedule: Schedule::try_from(file.best_schedule)?,
            best_objective: file.best_objective,
            objective_history: file.objective_history,
            superiteration_log: file.superiteration_log,
            validated_objective: file.validated_objective,
            wall_time: Duration::ZERO,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?)
    }

    /// Value on the whole group: the validated value if a subsample was
    /// optimized, the best objective otherwise.
    pub fn group_value(&self) -> f64 {
        self.validated_objective.unwrap_or(self.best_objective)
    }
}

/// dCRAB starting from `guess`, maximizing `objective`.
pub fn dcrab_with(objective: &dyn Objective, guess: Schedule, cfg: &DcrabConfig) -> Result<OptimizationRecord> {
    cfg.validate()?;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history: Vec<(usize, f64)> = Vec::new();
    let score = |schedule: &Schedule, history: &mut Vec<(usize, f64)>| -> Result<f64> {
        let value = if cfg.monotone && !schedule.is_monotone(201) {
            0.0
        } else {
            objective.evaluate(schedule)?
        };
        history.push((history.len(), value));
        Ok(value)
    };

    let mut best = guess;
    let mut best_value = score(&best, &mut history)?;
    let mut log = Vec::new();
    let target = cfg.target_fidelity;
    for _ in 0..cfg.n_superiterations {
        if best_value >= target {
            break;
        }
        let frequencies: Vec<f64> = (0..cfg.n_frequencies_per_super)
            .map(|_| rng.gen_range(cfg.omega_min..=cfg.omega_max))
            .collect();
        let dress = |x: &[f64]| -> Schedule {
            best.dressed(
                frequencies
                    .iter()
                    .enumerate()
                    .map(|(i, &omega)| BasisTerm {
                        omega,
                        a: x[2 * i],
                        b: x[2 * i + 1],
                    })
                    .collect(),
            )
        };
        let start = vec![0.0; 2 * frequencies.len()];
        let result = maximize(
            |x| score(&dress(x), &mut history),
            &start,
            Some(best_value),
            &SimplexOptions {
                initial_step: cfg.simplex_initial_step,
                max_evaluations: cfg.inner_max_evaluations,
                target: Some(target),
                ..Default::default()
            },
        )?;
        let improved = result.best_value > best_value;
        if improved {
            best = dress(&result.best_point);
            best_value = result.best_value;
        }
        log.push(SuperIteration {
            frequencies,
            best_after: best_value,
            zero_progress: !improved,
        });
    }
    Ok(OptimizationRecord {
        best_schedule: best,
        best_objective: best_value,
        objective_history: history,
        superiteration_log: log,
        validated_objective: None,
        wall_time: started.elapsed(),
    })
}

/// dCRAB on the mean fidelity of `group` at annealing time `t_anneal`,
/// starting from the linear ramp.
pub fn dcrab_optimize(group: &[PhysicalInstance], t_anneal: f64, cfg: &DcrabConfig) -> Result<OptimizationRecord> {
    let full = prepare(group, cfg)?;
    optimize_at(&full, vec![cfg.linear(t_anneal)?], cfg)
}

/// The candidate scoring highest on `objective`, the earliest on ties.
fn pick_guess(objective: &dyn Objective, guesses: Vec<Schedule>) -> Result<Schedule> {
    if guesses.len() == 1 {
        return Ok(guesses.into_iter().next().expect("one guess"));
    }
    let mut best: Option<(f64, Schedule)> = None;
    for g in guesses {
        let v = objective.evaluate(&g)?;
        if best.as_ref().is_none_or(|(b, _)| v > *b) {
            best = Some((v, g));
        }
    }
    best.map(|(_, g)| g).ok_or_else(|| Error::Domain("no initial guess".into()))
}

fn prepare(group: &[PhysicalInstance], cfg: &DcrabConfig) -> Result<GroupObjective> {
    if group.is_empty() {
        return Err(Error::Domain("cannot optimize over an empty group".into()));
    }
    cfg.validate()?;
    Ok(GroupObjective::new(group, cfg.evolve.clone()))
}

/// One dCRAB run from `guess`, on the subsample if configured, with the
/// result validated on the whole group. When the subsample reaches the target
/// but the whole group does not, the run continues from its best schedule
/// with the subsample target raised by the shortfall.
fn optimize_at(full: &GroupObjective, guesses: Vec<Schedule>, cfg: &DcrabConfig) -> Result<OptimizationRecord> {
    let size = match cfg.objective_subsample {
        Some(size) if size < full.len() => size,
        _ => return dcrab_with(full, pick_guess(full, guesses)?, cfg),
    };
    let sub = full.subsample(size, cfg.seed);
    let mut record = dcrab_with(&sub, pick_guess(&sub, guesses)?, cfg)?;
    let mut validated = full.evaluate(&record.best_schedule)?;
    let mut sub_target = cfg.target_fidelity;
    for _ in 0..cfg.validation_retries {
        if validated >= cfg.target_fidelity || record.best_objective < sub_target {
            break;
        }
        sub_target = (sub_target + record.best_objective - validated + 0.005).min(0.9999);
        let retry_cfg = DcrabConfig {
            target_fidelity: sub_target,
            ..cfg.clone()
        };
        let more = dcrab_with(&sub, record.best_schedule.clone(), &retry_cfg)?;
        let offset = record.objective_history.len();
        record
            .objective_history
            .extend(more.objective_history.iter().map(|&(i, v)| (i + offset, v)));
        record.superiteration_log.extend(more.superiteration_log);
        record.wall_time += more.wall_time;
        let more_validated = full.evaluate(&more.best_schedule)?;
        if more_validated > validated {
            validated = more_validated;
            record.best_schedule = more.best_schedule;
            record.best_objective = more.best_objective;
        }
    }
    record.validated_objective = Some(validated);
    Ok(record)
}

/// Escalation outcome: the smallest passing time found and its record.
#[derive(Clone, Debug)]
pub struct Escalation {
    pub t_final: f64,
    pub record: OptimizationRecord,
    /// `(T, whole-group value)` for every time tried, in order.
    pub trials: Vec<(f64, f64)>,
}

/// Geometric time escalation of dCRAB followed by bisection refinement.
pub fn escalate_time(group: &[PhysicalInstance], cfg: &DcrabConfig) -> Result<Escalation> {
    let full = prepare(group, cfg)?;
    escalate_with(&full, cfg)
}

pub fn escalate_with(full: &GroupObjective, cfg: &DcrabConfig) -> Result<Escalation> {
    escalate_core(|guesses| optimize_at(full, guesses, cfg), cfg)
}

/// Escalation against an arbitrary objective, without subsampling.
pub fn escalate_objective(objective: &dyn Objective, cfg: &DcrabConfig) -> Result<Escalation> {
    cfg.validate()?;
    escalate_core(|guesses| dcrab_with(objective, pick_guess(objective, guesses)?, cfg), cfg)
}

fn escalate_core<F>(mut run: F, cfg: &DcrabConfig) -> Result<Escalation>
where
    F: FnMut(Vec<Schedule>) -> Result<OptimizationRecord>,
{
    let esc = &cfg.escalation;
    let target = cfg.target_fidelity;
    let mut trials = Vec::new();
    let mut t = esc.t0;
    let mut last_fail: Option<f64> = None;
    let mut previous: Option<Schedule> = None;
    let mut best_seen: f64 = 0.0;
    // A schedule tuned at a shorter time can be a worse start than the plain
    // ramp at a longer one, so the warm start only competes with it.
    let guesses = |previous: Option<&Schedule>, t: f64| -> Result<Vec<Schedule>> {
        let mut out = Vec::with_capacity(2);
        if let (Some(p), true) = (previous, esc.warm_start) {
            out.push(p.with_annealing_time(t)?);
        }
        out.push(cfg.linear(t)?);
        Ok(out)
    };
    let (mut hi, mut hi_record) = loop {
        let record = run(guesses(previous.as_ref(), t)?)?;
        let value = record.group_value();
        log::debug!("escalation T={t:.4} value={value:.5} evaluations={}", record.objective_history.len());
        trials.push((t, value));
        best_seen = best_seen.max(value);
        if value >= target {
            break (t, record);
        }
        last_fail = Some(t);
        previous = Some(record.best_schedule);
        t *= esc.factor;
        if t > esc.cap {
            return Err(Error::Hardness {
                cap: esc.cap,
                target,
                best_fidelity: best_seen,
            });
        }
    };
    if let Some(mut lo) = last_fail {
        while (hi - lo) / hi > esc.refine_tolerance {
            let mid = 0.5 * (lo + hi);
            let record = run(guesses(Some(&hi_record.best_schedule), mid)?)?;
            let value = record.group_value();
            log::debug!("refinement T={mid:.4} value={value:.5} evaluations={}", record.objective_history.len());
            trials.push((mid, value));
            if value >= target {
                hi = mid;
                hi_record = record;
            } else {
                lo = mid;
            }
        }
    }
    Ok(Escalation {
        t_final: hi,
        record: hi_record,
        trials,
    })
}

/// Ids of members that the linear ramp cannot bring to `target` even at the
/// time cap; these are the instances the cap filter discards.
pub fn hard_members(group: &[PhysicalInstance], target: f64, cfg: &DcrabConfig) -> Result<Vec<String>> {
    let full = prepare(group, cfg)?;
    let at_cap = group_fidelity(&cfg.linear(cfg.escalation.cap)?, &full.hams, &full.evolve)?;
    Ok(group
        .iter()
        .zip(&at_cap.per_instance)
        .filter(|(_, &f)| f < target)
        .map(|(p, _)| p.id.clone())
        .collect())
}

/// Smallest time on the escalation grid, refined by the same bisection, at
/// which the linear ramp reaches `target`.
pub fn linear_required_time(group: &[PhysicalInstance], target: f64, cfg: &DcrabConfig) -> Result<f64> {
    let full = prepare(group, cfg)?;
    linear_required_with(&full, target, cfg)
}

pub fn linear_required_with(full: &GroupObjective, target: f64, cfg: &DcrabConfig) -> Result<f64> {
    let esc = &cfg.escalation;
    let value = |t: f64| full.evaluate(&cfg.linear(t)?);
    let mut t = esc.t0;
    let mut last_fail = None;
    let mut best_seen: f64 = 0.0;
    loop {
        let v = value(t)?;
        best_seen = best_seen.max(v);
        if v >= target {
            break;
        }
        last_fail = Some(t);
        t *= esc.factor;
        if t > esc.cap {
            return Err(Error::Hardness {
                cap: esc.cap,
                target,
                best_fidelity: best_seen,
            });
        }
    }
    let mut hi = t;
    if let Some(mut lo) = last_fail {
        while (hi - lo) / hi > esc.refine_tolerance {
            let mid = 0.5 * (lo + hi);
            if value(mid)? >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    Ok(hi)
}

/// Required times for one group; either may be missing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupTimes {
    pub group: String,
    pub linear: Option<f64>,
    pub optimized: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRow {
    pub group: String,
    pub linear: Option<f64>,
    pub optimized: Option<f64>,
    /// `linear / optimized`.
    pub factor: Option<f64>,
    /// `1 - optimized / linear`.
    pub reduction: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedupReport {
    pub rows: Vec<SpeedupRow>,
    /// Unweighted means over groups with both times.
    pub mean_factor: Option<f64>,
    pub mean_reduction: Option<f64>,
}

pub fn speedup_report(groups: &[GroupTimes]) -> SpeedupReport {
    let rows: Vec<SpeedupRow> = groups
        .iter()
        .map(|g| {
            let both = g.linear.zip(g.optimized);
            SpeedupRow {
                group: g.group.clone(),
                linear: g.linear,
                optimized: g.optimized,
                factor: both.map(|(l, o)| l / o),
                reduction: both.map(|(l, o)| 1.0 - o / l),
            }
        })
        .collect();
    let mean = |f: fn(&SpeedupRow) -> Option<f64>| {
        let values: Vec<f64> = rows.iter().filter_map(f).collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    };
    SpeedupReport {
        mean_factor: mean(|r| r.factor),
        mean_reduction: mean(|r| r.reduction),
        rows,
    }
}

impl SpeedupReport {
    /// `group,linear_T,optimized_T,factor,reduction`, then a `mean` row.
    /// Missing values are left empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        writeln!(out, "group,linear_T,optimized_T,factor,reduction")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.group,
                cell(r.linear),
                cell(r.optimized),
                cell(r.factor),
                cell(r.reduction)
            )?;
        }
        writeln!(out, "mean,,,{},{}", cell(self.mean_factor), cell(self.mean_reduction))?;
        Ok(())
    }
}
