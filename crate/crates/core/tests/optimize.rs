mod common;

use common::{fixture_instances, physical};
use lhz_protocols::dynamics::{evolve_with, group_fidelity, EvolveOptions};
use lhz_protocols::model::{PassageHamiltonian, PhysicalInstance};
use lhz_protocols::optimize::*;
use lhz_protocols::schedule::Schedule;
use lhz_protocols::spectrum::{gap_summary, instantaneous_spectrum};
use lhz_protocols::Error;

fn fast() -> DcrabConfig {
    DcrabConfig {
        n_superiterations: 3,
        inner_max_evaluations: 15,
        seed: 5,
        evolve: EvolveOptions {
            steps_per_unit: 3.0,
            min_steps: 100,
            ..Default::default()
        },
        ..Default::default()
    }
}

/// Fixture instances with their minimum gaps, largest gap first.
fn by_gap(count: usize) -> Vec<(PhysicalInstance, f64)> {
    let linear = Schedule::linear(1.0, 2.0).unwrap();
    let mut out: Vec<(PhysicalInstance, f64)> = fixture_instances(count)
        .iter()
        .map(|i| {
            let p = physical(i);
            let gap = gap_summary(&instantaneous_spectrum(&p, &linear, 65, 2).unwrap()).min_gap;
            (p, gap)
        })
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1));
    out
}

#[test]
fn seeded_runs_are_identical() {
    let group: Vec<PhysicalInstance> = fixture_instances(3).iter().map(physical).collect();
    let cfg = DcrabConfig {
        target_fidelity: 0.99,
        ..fast()
    };
    let a = dcrab_optimize(&group, 3.0, &cfg).unwrap();
    let b = dcrab_optimize(&group, 3.0, &cfg).unwrap();
    assert!((a.best_objective - b.best_objective).abs() <= 1e-12);
    assert_eq!(a.objective_history, b.objective_history);
    assert_eq!(a.best_schedule, b.best_schedule);
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
}

#[test]
fn best_so_far_never_regresses_and_beats_the_guess() {
    let group: Vec<PhysicalInstance> = fixture_instances(4).iter().map(physical).collect();
    let cfg = DcrabConfig {
        target_fidelity: 0.99,
        ..fast()
    };
    let record = dcrab_optimize(&group, 2.0, &cfg).unwrap();
    let mut running = f64::NEG_INFINITY;
    let mut best_after = Vec::new();
    for &(_, v) in &record.objective_history {
        running = running.max(v);
        best_after.push(running);
    }
    assert_eq!(*best_after.last().unwrap(), record.best_objective);
    assert!(record.superiteration_log.windows(2).all(|w| w[0].best_after <= w[1].best_after));

    // re-evaluated, not cached
    let hams: Vec<PassageHamiltonian> = group.iter().map(PassageHamiltonian::new).collect();
    let guess = group_fidelity(&Schedule::linear(2.0, 2.0).unwrap(), &hams, &cfg.evolve).unwrap().mean;
    let best = group_fidelity(&record.best_schedule, &hams, &cfg.evolve).unwrap().mean;
    assert_eq!(best, record.best_objective);
    assert!(best >= guess);
}

#[test]
fn record_json_roundtrip() {
    let group = vec![physical(&fixture_instances(1)[0])];
    let record = dcrab_optimize(&group, 1.5, &fast()).unwrap();
    let back = OptimizationRecord::from_json(&record.to_json().unwrap()).unwrap();
    assert_eq!(back.best_schedule, record.best_schedule);
    assert_eq!(back.objective_history, record.objective_history);
    assert_eq!(back.superiteration_log, record.superiteration_log);
}

#[test]
fn optimization_lifts_a_single_instance_past_the_target() {
    // pick the fixture whose gap is closest to 0.4, then a time where the
    // linear ramp stays below 0.8
    let candidates = by_gap(30);
    let (phys, _) = candidates
        .iter()
        .min_by(|a, b| (a.1 - 0.4).abs().total_cmp(&(b.1 - 0.4).abs()))
        .unwrap()
        .clone();
    let ham = PassageHamiltonian::new(&phys);
    let cfg = DcrabConfig {
        n_superiterations: 8,
        inner_max_evaluations: 40,
        ..fast()
    };
    let mut t = 0.5;
    while evolve_with(&ham, &Schedule::linear(t * 1.5, 2.0).unwrap(), &cfg.evolve).unwrap().fidelity < 0.8 {
        t *= 1.5;
    }
    let linear = evolve_with(&ham, &Schedule::linear(t, 2.0).unwrap(), &cfg.evolve).unwrap().fidelity;
    assert!(linear < 0.8);
    let record = dcrab_optimize(std::slice::from_ref(&phys), t, &cfg).unwrap();
    let check = evolve_with(&ham, &record.best_schedule, &EvolveOptions::default()).unwrap().fidelity;
    assert!(check >= 0.9, "T={t}: linear {linear}, optimized {check} ({})", record.best_objective);
}

#[test]
fn escalation_edge_cases() {
    let group = vec![physical(&fixture_instances(1)[0])];
    let easy = DcrabConfig {
        target_fidelity: 1e-3,
        ..fast()
    };
    let found = escalate_time(&group, &easy).unwrap();
    assert_eq!(found.t_final, 1.0);
    assert!(found.record.best_schedule.is_linear());
    assert_eq!(linear_required_time(&group, 1e-3, &easy).unwrap(), 1.0);

    let never = escalate_objective(&|_: &Schedule| Ok(0.2), &fast());
    match never {
        Err(Error::Hardness { cap, best_fidelity, .. }) => {
            assert_eq!(cap, 1000.0);
            assert_eq!(best_fidelity, 0.2);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn duplicated_members_do_not_change_the_linear_time() {
    let one = vec![physical(&fixture_instances(1)[0])];
    let two = vec![one[0].clone(), one[0].clone()];
    let cfg = fast();
    assert_eq!(
        linear_required_time(&one, 0.9, &cfg).unwrap(),
        linear_required_time(&two, 0.9, &cfg).unwrap()
    );
}

#[test]
fn open_gap_group_beats_the_linear_ramp() {
    let group: Vec<PhysicalInstance> = by_gap(30).into_iter().take(5).map(|(p, _)| p).collect();
    let cfg = fast();
    let linear = linear_required_time(&group, 0.9, &cfg).unwrap();
    let optimized = escalate_time(&group, &cfg).unwrap();
    assert!(optimized.t_final < linear, "optimized {} linear {linear}", optimized.t_final);
}

#[test]
fn subsampled_runs_report_the_whole_group() {
    let group: Vec<PhysicalInstance> = fixture_instances(6).iter().map(physical).collect();
    let cfg = DcrabConfig {
        objective_subsample: Some(2),
        target_fidelity: 0.99,
        ..fast()
    };
    let record = dcrab_optimize(&group, 2.0, &cfg).unwrap();
    let hams: Vec<PassageHamiltonian> = group.iter().map(PassageHamiltonian::new).collect();
    let full = group_fidelity(&record.best_schedule, &hams, &cfg.evolve).unwrap().mean;
    assert_eq!(record.validated_objective, Some(full));
}

#[test]
fn warm_starts_reach_the_target_no_later() {
    // three groups of neighbouring open-gap fixtures, two seeds each
    let ranked = by_gap(40);
    let groups: Vec<Vec<PhysicalInstance>> = ranked[..9].chunks(3).map(|c| c.iter().map(|(p, _)| p.clone()).collect()).collect();
    let (mut wins, mut total) = (0, 0);
    for group in &groups {
        for seed in 0..2 {
            let mut warm = DcrabConfig { seed, ..fast() };
            warm.escalation.refine_tolerance = 0.25;
            let mut cold = warm.clone();
            cold.escalation.warm_start = false;
            let tw = escalate_time(group, &warm).unwrap().t_final;
            let tc = escalate_time(group, &cold).unwrap().t_final;
            total += 1;
            if tw <= tc {
                wins += 1;
            }
        }
    }
    assert!(wins * 10 >= total * 8, "{wins}/{total}");
}
