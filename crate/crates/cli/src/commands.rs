//! Pipeline stages. Each reads the artifacts of the stage before it from the
//! output directory and writes its own, refusing to replace existing ones
//! unless overwriting.

use std::collections::{BTreeMap, BTreeSet};

use lhz_protocols::cohort::{
    gap_histogram, sample_instances, screen_hard, split_train_test_excluding, CohortEntry, Cohort, Grouping, HardScreen,
    ManifestLine, ScanOptions,
};
use lhz_protocols::dynamics::group_fidelity;
use lhz_protocols::library::{build_library, Decision};
use lhz_protocols::model::{map_logical_to_physical, LogicalInstance, PassageHamiltonian, PhysicalInstance};
use lhz_protocols::optimize::{escalate_time, linear_required_time, speedup_report, GroupTimes, OptimizationRecord, RecordFile};
use lhz_protocols::schedule::Schedule;
use lhz_protocols::spectrum::{instantaneous_spectrum, SpectrumOptions};
use lhz_protocols::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifacts::*;

const SCHEDULE_POINTS: usize = 101;

pub fn sample(ws: &Workspace) -> CliResult<()> {
    ws.claim(&[INSTANCES])?;
    let cfg = &ws.cfg;
    let instances = sample_instances(cfg.sample_size, cfg.n_logical, cfg.seeds.sample)?;
    let lines: Vec<ManifestLine> = instances.iter().map(ManifestLine::from_instance).collect();
    ws.write_manifest(INSTANCES, "sample", &lines)?;
    log::info!("sampled {} instances", lines.len());
    Ok(())
}

pub fn spectra(ws: &Workspace) -> CliResult<()> {
    ws.claim(&[COHORT, "gaps.csv"])?;
    let cfg = &ws.cfg;
    let instances = ws
        .read_manifest(INSTANCES, "sample")?
        .iter()
        .map(ManifestLine::instance)
        .collect::<Result<Vec<_>>>()?;
    let by_id: BTreeMap<String, LogicalInstance> = instances.iter().map(|i| (i.id.clone(), i.clone())).collect();
    let cohort = Cohort::build(instances, cfg.seeds.sample, &scan_options(ws))?;

    let mut lines: Vec<ManifestLine> = cohort.entries.iter().map(ManifestLine::from_entry).collect();
    for (id, reason) in &cohort.filter_log {
        lines.push(ManifestLine {
            discard_reason: Some(*reason),
            ..ManifestLine::from_instance(&by_id[id])
        });
    }
    ws.write_manifest(COHORT, "spectra", &lines)?;
    ws.write_csv("gaps.csv", "spectra", |out| {
        writeln!(out, "id,min_gap,position,local_minima_count")?;
        for e in &cohort.entries {
            writeln!(out, "{},{},{},{}", e.instance.id, e.gap.min_gap, e.gap.position, e.gap.local_minima_count)?;
        }
        Ok(())
    })?;
    let multi = cohort.entries.iter().filter(|e| e.gap.local_minima_count > 1).count();
    log::info!(
        "retained {} of {} instances; {} with several gap minima",
        cohort.len(),
        lines.len(),
        multi
    );
    Ok(())
}

#[derive(Serialize, Deserialize)]
pub struct GroupMembers {
    pub min_gap: f64,
    pub max_gap: f64,
    pub sigma: f64,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Serialize, Deserialize)]
pub struct GroupsFile {
    /// Instances the linear ramp cannot solve below the time cap.
    pub hard: Vec<String>,
    pub grouping: Grouping,
    pub groups: Vec<GroupMembers>,
    /// Test instances outside every training interval.
    pub unassigned: Vec<String>,
}

pub fn group(ws: &Workspace) -> CliResult<()> {
    ws.claim(&[GROUPS, "histogram.csv", "group_gaps.csv"])?;
    let cfg = &ws.cfg;
    let cohort = read_cohort(ws)?;
    let dcrab = cfg.dcrab();
    let hard = screen_hard(
        &cohort,
        &HardScreen {
            target: dcrab.target_fidelity,
            cap: dcrab.escalation.cap,
            constraint_strength: cfg.constraint_strength,
            evolve: dcrab.evolve.clone(),
            ..Default::default()
        },
    )?;
    log::info!("{} instances fail the linear ramp at the time cap", hard.len());
    let exclude: BTreeSet<String> = hard.iter().cloned().collect();
    let split = split_train_test_excluding(&cohort, cfg.n_groups, cfg.quota, cfg.seeds.split, cfg.balance, &exclude)?;
    let ids = |entries: Vec<&CohortEntry>| entries.iter().map(|e| e.instance.id.clone()).collect();
    let groups: Vec<GroupMembers> = split
        .grouping
        .groups
        .iter()
        .enumerate()
        .map(|(g, group)| GroupMembers {
            min_gap: group.min_gap,
            max_gap: group.max_gap,
            sigma: group.sigma,
            train: ids(split.train_group(g)),
            test: ids(split.test_group(g)),
        })
        .collect();

    let histogram = gap_histogram(&split.train.gaps(), Some(&split.grouping), cfg.histogram_bins)?;
    ws.write_csv("histogram.csv", "group", |out| histogram.write_csv(out))?;

    // mean gap trace per group over the training members
    let linear = ramp(ws, 1.0)?;
    let mut mean_traces = Vec::with_capacity(groups.len());
    for g in 0..groups.len() {
        let members = split.train_group(g);
        let traces = members
            .par_iter()
            .map(|e| {
                let phys = physical(ws, &e.instance)?;
                Ok(instantaneous_spectrum(&phys, &linear, cfg.grid_points, cfg.levels)?.gap_trace())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let mean: Vec<f64> = (0..cfg.grid_points)
            .map(|i| traces.iter().map(|t| t[i]).sum::<f64>() / traces.len() as f64)
            .collect();
        mean_traces.push(mean);
    }
    let tau = lhz_protocols::schedule::uniform_grid(cfg.grid_points);
    ws.write_csv("group_gaps.csv", "group", |out| {
        let header: Vec<String> = (0..mean_traces.len()).map(|g| format!("g{g}")).collect();
        writeln!(out, "tau,{}", header.join(","))?;
        for (i, t) in tau.iter().enumerate() {
            let row: Vec<String> = mean_traces.iter().map(|m| m[i].to_string()).collect();
            writeln!(out, "{t},{}", row.join(","))?;
        }
        Ok(())
    })?;

    ws.write_json(
        GROUPS,
        "group",
        GroupsFile {
            hard,
            grouping: split.grouping.clone(),
            groups,
            unassigned: split.unassigned.clone(),
        },
    )?;
    log::info!(
        "balanced max sigma {:.5} (equal split {:.5})",
        split.grouping.max_sigma(),
        split.grouping.initial_max_sigma
    );
    Ok(())
}

#[derive(Serialize, Deserialize)]
pub struct OptimizedGroup {
    pub group: usize,
    #[serde(rename = "linear_T")]
    pub linear_t: Option<f64>,
    #[serde(rename = "optimized_T")]
    pub optimized_t: Option<f64>,
    pub record: Option<RecordFile>,
    /// Why a time is missing.
    pub failure: Option<String>,
}

#[derive(Serialize, Deserialize)]
pub struct OptimizedFile {
    pub target: f64,
    pub groups: Vec<OptimizedGroup>,
}

pub fn optimize(ws: &Workspace) -> CliResult<()> {
    ws.claim(&[OPTIMIZED, "schedules.csv"])?;
    let groups: GroupsFile = ws.read_json(GROUPS, "group")?;
    let instances = cohort_instances(ws)?;
    let dcrab = ws.cfg.dcrab();
    let mut out = Vec::with_capacity(groups.groups.len());
    let mut failures = Vec::new();
    for (g, members) in groups.groups.iter().enumerate() {
        let phys = members
            .train
            .iter()
            .map(|id| physical(ws, lookup(&instances, id)?))
            .collect::<Result<Vec<_>>>()?;
        let mut failure = Vec::new();
        let linear = numerical(linear_required_time(&phys, dcrab.target_fidelity, &dcrab), &mut failure)?;
        let escalation = numerical(escalate_time(&phys, &dcrab), &mut failure)?;
        log::info!(
            "group {g}: linear T {:?}, optimized T {:?}",
            linear,
            escalation.as_ref().map(|e| e.t_final)
        );
        if !failure.is_empty() {
            failures.push(format!("group {g}: {}", failure.join("; ")));
        }
        out.push(OptimizedGroup {
            group: g,
            linear_t: linear,
            optimized_t: escalation.as_ref().map(|e| e.t_final),
            record: escalation.as_ref().map(|e| e.record.to_file()),
            failure: (!failure.is_empty()).then(|| failure.join("; ")),
        });
    }

    let schedules: Vec<Option<Schedule>> = out
        .iter()
        .map(|g| g.record.clone().map(|r| OptimizationRecord::from_file(r).map(|r| r.best_schedule)).transpose())
        .collect::<Result<_>>()?;
    ws.write_csv("schedules.csv", "optimize", |w| {
        let header: Vec<String> = (0..schedules.len()).map(|g| format!("s_g{g}")).collect();
        writeln!(w, "tau,{}", header.join(","))?;
        for (i, tau) in lhz_protocols::schedule::uniform_grid(SCHEDULE_POINTS).iter().enumerate() {
            let row: Vec<String> = schedules
                .iter()
                .map(|s| s.as_ref().map(|s| s.samples(SCHEDULE_POINTS)[i].1.to_string()).unwrap_or_default())
                .collect();
            writeln!(w, "{tau},{}", row.join(","))?;
        }
        Ok(())
    })?;
    ws.write_json(
        OPTIMIZED,
        "optimize",
        OptimizedFile {
            target: dcrab.target_fidelity,
            groups: out,
        },
    )?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numerical(failures.join("\n")))
    }
}

pub fn evaluate(ws: &Workspace) -> CliResult<()> {
    ws.claim(&["fidelities.csv", "group_fidelities.csv"])?;
    let groups: GroupsFile = ws.read_json(GROUPS, "group")?;
    let optimized: OptimizedFile = ws.read_json(OPTIMIZED, "optimize")?;
    let instances = cohort_instances(ws)?;
    let gaps = cohort_gaps(ws)?;
    let evolve = ws.cfg.dcrab().evolve;

    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (g, members) in groups.groups.iter().enumerate() {
        let Some(record) = optimized.groups.get(g).and_then(|o| o.record.clone()) else {
            log::warn!("group {g} has no optimized protocol; skipped");
            continue;
        };
        let schedule = OptimizationRecord::from_file(record)?.best_schedule;
        let mut means = Vec::new();
        for (split, ids) in [("train", &members.train), ("test", &members.test)] {
            let hams = ids
                .iter()
                .map(|id| Ok(PassageHamiltonian::new(&physical(ws, lookup(&instances, id)?)?)))
                .collect::<Result<Vec<_>>>()?;
            let fid = group_fidelity(&schedule, &hams, &evolve)?;
            for (id, f) in ids.iter().zip(&fid.per_instance) {
                rows.push(format!("{g},{split},{id},{},{f}", gaps[id]));
            }
            let min = fid.per_instance.iter().copied().fold(f64::INFINITY, f64::min);
            means.push((fid.mean, min));
        }
        summary.push(format!(
            "{g},{},{},{},{},{}",
            schedule.annealing_time(),
            means[0].0,
            means[1].0,
            means[0].0 - means[1].0,
            means[1].1
        ));
    }
    ws.write_csv("fidelities.csv", "evaluate", |out| {
        writeln!(out, "group,split,id,min_gap,fidelity")?;
        rows.iter().try_for_each(|r| writeln!(out, "{r}"))?;
        Ok(())
    })?;
    ws.write_csv("group_fidelities.csv", "evaluate", |out| {
        writeln!(out, "group,T,train_mean,test_mean,difference,test_min")?;
        summary.iter().try_for_each(|r| writeln!(out, "{r}"))?;
        Ok(())
    })?;
    Ok(())
}

pub fn speedup(ws: &Workspace) -> CliResult<()> {
    ws.claim(&["speedup.csv"])?;
    let optimized: OptimizedFile = ws.read_json(OPTIMIZED, "optimize")?;
    let times: Vec<GroupTimes> = optimized
        .groups
        .iter()
        .map(|g| GroupTimes {
            group: format!("g{}", g.group),
            linear: g.linear_t,
            optimized: g.optimized_t,
        })
        .collect();
    let report = speedup_report(&times);
    ws.write_csv("speedup.csv", "speedup", |out| report.write_csv(out))?;
    log::info!("mean speed-up factor {:?}", report.mean_factor);
    Ok(())
}

pub fn library(ws: &Workspace) -> CliResult<()> {
    ws.claim(&[LIBRARY, "library_growth.csv"])?;
    let groups: GroupsFile = ws.read_json(GROUPS, "group")?;
    let hard: BTreeSet<&String> = groups.hard.iter().collect();
    let mut stream: Vec<LogicalInstance> = read_cohort(ws)?
        .entries
        .into_iter()
        .map(|e| e.instance)
        .filter(|i| !hard.contains(&i.id))
        .collect();
    let lib_cfg = ws.cfg.library();
    stream.shuffle(&mut ChaCha8Rng::seed_from_u64(lib_cfg.stream_seed));
    stream.truncate(ws.cfg.library_stream);

    let lib = build_library(&stream, &lib_cfg, &ws.cfg.dcrab())?;
    let body: serde_json::Value = serde_json::from_str(&lib.to_json()?)?;
    ws.write_json(LIBRARY, "library", body)?;
    ws.write_csv("library_growth.csv", "library", |out| {
        writeln!(out, "step,instance_id,decision,entry,fidelity,size")?;
        for (i, s) in lib.growth_log.iter().enumerate() {
            let (kind, entry, f) = match s.decision {
                Decision::Matched { entry, fidelity } => ("matched", Some(entry), fidelity),
                Decision::NewProtocol { entry, fidelity } => ("new_protocol", Some(entry), fidelity),
                Decision::Hard { best_fidelity } => ("hard", None, best_fidelity),
            };
            let entry = entry.map(|e| e.to_string()).unwrap_or_default();
            writeln!(out, "{i},{},{kind},{entry},{f},{}", s.instance_id, s.size)?;
        }
        Ok(())
    })?;
    log::info!("library holds {} protocols; saturated: {}", lib.len(), lib.saturated);
    Ok(())
}

fn scan_options(ws: &Workspace) -> ScanOptions {
    ScanOptions {
        constraint_strength: ws.cfg.constraint_strength,
        coupling: ws.cfg.coupling,
        spectrum: SpectrumOptions {
            m_points: ws.cfg.grid_points,
            l_levels: ws.cfg.levels,
            ..Default::default()
        },
    }
}

fn ramp(ws: &Workspace, t: f64) -> Result<Schedule> {
    Ok(Schedule::linear(t, ws.cfg.constraint_strength)?.with_coupling(ws.cfg.coupling))
}

fn physical(ws: &Workspace, inst: &LogicalInstance) -> Result<PhysicalInstance> {
    map_logical_to_physical(inst, ws.cfg.constraint_strength)
}

fn read_cohort(ws: &Workspace) -> CliResult<Cohort> {
    let mut cohort = Cohort {
        seed: ws.cfg.seeds.sample,
        ..Default::default()
    };
    for line in ws.read_manifest(COHORT, "spectra")? {
        match (line.entry()?, line.discard_reason) {
            (Some(entry), _) => cohort.entries.push(entry),
            (None, Some(reason)) => cohort.filter_log.push((line.id, reason)),
            (None, None) => return Err(Error::Parse(format!("cohort line {} has neither gap nor discard reason", line.id)).into()),
        }
    }
    Ok(cohort)
}

fn cohort_instances(ws: &Workspace) -> CliResult<BTreeMap<String, LogicalInstance>> {
    Ok(read_cohort(ws)?
        .entries
        .into_iter()
        .map(|e| (e.instance.id.clone(), e.instance))
        .collect())
}

fn cohort_gaps(ws: &Workspace) -> CliResult<BTreeMap<String, f64>> {
    Ok(read_cohort(ws)?
        .entries
        .iter()
        .map(|e| (e.instance.id.clone(), e.gap.min_gap))
        .collect())
}

fn lookup<'a>(instances: &'a BTreeMap<String, LogicalInstance>, id: &str) -> Result<&'a LogicalInstance> {
    instances
        .get(id)
        .ok_or_else(|| Error::Parse(format!("instance {id} is not in the cohort manifest")))
}

/// Keeps numerical failures as a note so the other groups still run; any
/// other error aborts.
fn numerical<T>(result: Result<T>, notes: &mut Vec<String>) -> Result<Option<T>> {
    match result {
        Ok(v) => Ok(Some(v)),
        Err(e @ (Error::Hardness { .. } | Error::IntegrationFailure { .. } | Error::GroupEvaluation { .. } | Error::NoConvergence { .. })) => {
            notes.push(e.to_string());
            Ok(None)
        }
        Err(e) => Err(e),
    }
}
