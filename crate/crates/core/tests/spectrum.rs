mod common;

use common::{dense_eigen, dense_passage, dense_values, fixture_instances, physical};
use lhz_protocols::model::*;
use lhz_protocols::schedule::{CouplingMode, Schedule};
use lhz_protocols::spectrum::*;

#[test]
fn fixture_trace_matches_dense_diagonalization() {
    let phys = physical(&fixture_instances(1)[0]);
    let schedule = Schedule::linear(1.0, 2.0).unwrap();
    let trace = instantaneous_spectrum(&phys, &schedule, 33, 4).unwrap();
    assert_eq!(trace.tau_grid.len(), 33);
    for (&tau, row) in trace.tau_grid.iter().zip(&trace.levels) {
        let (s, c) = schedule.controls(tau);
        let values = dense_values(dense_passage(&phys, s, c));
        for (l, (&got, &want)) in row.iter().zip(&values).enumerate() {
            assert!(
                (got - want).abs() <= 1e-9 * want.abs().max(1.0),
                "tau={tau} level {l}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn nested_coupling_matches_dense_too() {
    let phys = physical(&fixture_instances(2)[1]);
    let schedule = Schedule::linear(1.0, 2.0).unwrap().with_coupling(CouplingMode::Nested);
    let trace = instantaneous_spectrum(&phys, &schedule, 33, 3).unwrap();
    for &m in &[5usize, 17, 29] {
        let (s, c) = schedule.controls(trace.tau_grid[m]);
        let values = dense_values(dense_passage(&phys, s, c));
        for l in 0..3 {
            assert!((trace.levels[m][l] - values[l]).abs() < 1e-9);
        }
    }
}

#[test]
fn end_of_sweep_levels_are_the_smallest_diagonal_entries() {
    let phys = physical(&fixture_instances(3)[2]);
    let trace = instantaneous_spectrum(&phys, &Schedule::linear(1.0, 2.0).unwrap(), 33, 4).unwrap();
    let ham = PassageHamiltonian::new(&phys);
    let expected = ham.final_diagonal().smallest(4);
    assert_eq!(trace.levels.last().unwrap(), &expected);
}

#[test]
fn adiabatic_bound_agrees_with_finite_differences() {
    let phys = physical(&fixture_instances(1)[0]);
    let ham = PassageHamiltonian::new(&phys);
    let schedule = Schedule::linear(1.0, 2.0).unwrap();
    let opts = SpectrumOptions {
        m_points: 33,
        l_levels: 2,
        keep_vectors: true,
        ..Default::default()
    };
    let trace = spectrum_with(&ham, &schedule, &opts).unwrap();
    let analytic = adiabatic_time_bound(&ham, &schedule, &trace).unwrap();

    // central differences of the dense operator along the sweep
    let h = 1e-5;
    let mut oracle: f64 = 0.0;
    for &tau in &trace.tau_grid {
        let (lo, hi) = ((tau - h).max(0.0), (tau + h).min(1.0));
        let at = |t: f64| {
            let (s, c) = schedule.controls(t);
            dense_passage(&phys, s, c)
        };
        let dh = (at(hi) - at(lo)) / (hi - lo);
        let (s, c) = schedule.controls(tau);
        let (values, vectors) = dense_eigen(dense_passage(&phys, s, c));
        let element = (vectors.column(1).transpose() * &dh * vectors.column(0))[(0, 0)].abs();
        let gap = values[1] - values[0];
        if element > 0.0 {
            oracle = oracle.max(element / (gap * gap));
        }
    }
    assert!(
        (analytic - oracle).abs() <= 1e-6 * oracle.max(1.0),
        "analytic {analytic} finite-difference {oracle}"
    );
}

#[test]
fn bound_scales_inversely_with_energy_scale() {
    let phys = physical(&fixture_instances(4)[3]);
    let ham = PassageHamiltonian::new(&phys);
    let schedule = Schedule::linear(1.0, 2.0).unwrap();
    let opts = SpectrumOptions {
        m_points: 33,
        l_levels: 2,
        keep_vectors: true,
        ..Default::default()
    };
    let base = adiabatic_time_bound(&ham, &schedule, &spectrum_with(&ham, &schedule, &opts).unwrap()).unwrap();
    let lambda = 2.5;
    let big = ham.scaled(lambda);
    let scaled = adiabatic_time_bound(&big, &schedule, &spectrum_with(&big, &schedule, &opts).unwrap()).unwrap();
    assert!((scaled * lambda - base).abs() < 1e-8 * base, "{base} vs {scaled}");
}

#[test]
fn frozen_schedule_has_zero_bound() {
    let inst = LogicalInstance::new("zero", 5, 0, vec![0.0; 10]).unwrap();
    let ham = PassageHamiltonian::new(&map_logical_to_physical(&inst, 2.0).unwrap());
    let opts = SpectrumOptions {
        m_points: 33,
        l_levels: 2,
        keep_vectors: true,
        ..Default::default()
    };
    let trace = spectrum_with(&ham, &Schedule::linear(1.0, 2.0).unwrap(), &opts).unwrap();
    assert_eq!(adiabatic_bound_with(&ham, &trace, |_| (0.0, 0.0)).unwrap(), 0.0);
}

#[test]
fn doubling_the_grid_barely_moves_open_gaps() {
    // A grid minimum misses the true minimum by up to kappa h^2 / 8 for gap
    // curvature kappa, so the 1e-4 bound only holds where that is small.
    let schedule = Schedule::linear(1.0, 2.0).unwrap();
    let h: f64 = 0.01;
    let (mut strict, mut curved) = (0, 0);
    for inst in fixture_instances(12) {
        let phys = physical(&inst);
        let coarse = gap_summary(&instantaneous_spectrum(&phys, &schedule, 101, 2).unwrap());
        if coarse.min_gap <= 0.05 {
            continue;
        }
        let fine = gap_summary(&instantaneous_spectrum(&phys, &schedule, 201, 2).unwrap());
        let g = &coarse.gap_trace;
        let i = g.iter().position(|&v| v == coarse.min_gap).unwrap().clamp(1, g.len() - 2);
        let kappa = (g[i - 1] - 2.0 * g[i] + g[i + 1]) / (h * h);
        let change = (coarse.min_gap - fine.min_gap).abs();
        if kappa * h * h / 8.0 <= 1e-4 {
            assert!(change < 1e-4, "{}: {} vs {}", inst.id, coarse.min_gap, fine.min_gap);
            strict += 1;
        } else {
            assert!(change <= kappa * h * h / 8.0, "{}: change {change} curvature {kappa}", inst.id);
            curved += 1;
        }
        assert!(fine.min_gap <= coarse.min_gap + 1e-12);
    }
    assert!(strict >= 1 && strict + curved >= 8, "{strict} strict, {curved} curved");
}

#[test]
fn gap_trace_is_invariant_under_qubit_relabeling() {
    let phys = map_logical_to_physical(&lhz_protocols::cohort::sample_instance(0, 4, 99).unwrap(), 2.0).unwrap();
    // qubit q of the original becomes qubit perm[q]
    let perm = [3usize, 5, 0, 4, 1, 2];
    let mut relabeled = phys.clone();
    for (q, &j) in phys.fields.iter().enumerate() {
        relabeled.fields[perm[q]] = j;
        relabeled.pair_index[perm[q]] = phys.pair_index[q];
    }
    for p in &mut relabeled.plaquettes {
        p.members = p.members.iter().map(|&q| perm[q]).collect();
    }
    let schedule = Schedule::linear(1.0, 2.0).unwrap();
    let a = instantaneous_spectrum(&phys, &schedule, 33, 2).unwrap();
    let b = instantaneous_spectrum(&relabeled, &schedule, 33, 2).unwrap();
    for (x, y) in a.gap_trace().iter().zip(b.gap_trace()) {
        assert!((x - y).abs() < 1e-10, "{x} vs {y}");
    }
}

#[test]
fn gap_position_correlates_with_gap_size() {
    // rank correlation between the minimum gap and 1 - tau*
    let schedule = Schedule::linear(1.0, 2.0).unwrap();
    let summaries: Vec<GapSummary> = lhz_protocols::cohort::sample_instances(500, 5, 11)
        .unwrap()
        .iter()
        .map(|inst| gap_summary(&instantaneous_spectrum(&physical(inst), &schedule, 65, 2).unwrap()))
        .collect();
    let rank = |v: Vec<f64>| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        for (pos, &i) in idx.iter().enumerate() {
            r[i] = pos as f64;
        }
        r
    };
    let ra = rank(summaries.iter().map(|s| s.min_gap).collect());
    let rb = rank(summaries.iter().map(|s| 1.0 - s.position).collect());
    let mean = (ra.len() - 1) as f64 / 2.0;
    let cov: f64 = ra.iter().zip(&rb).map(|(a, b)| (a - mean) * (b - mean)).sum();
    let var: f64 = ra.iter().map(|a| (a - mean).powi(2)).sum();
    assert!(cov / var > 0.0, "rank correlation {}", cov / var);
}
