//! Instantaneous spectra along the sweep, minimum-gap summaries and the
//! adiabatic time bound.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lowest_eigenpairs, Eigenpairs, LanczosOptions};
use crate::model::{PassageHamiltonian, PhysicalInstance};
use crate::schedule::{uniform_grid, Schedule};

/// Largest Hilbert-space dimension accepted for spectral scans.
pub const MAX_SPECTRUM_DIM: usize = 1 << 12;

pub const DEFAULT_GRID_POINTS: usize = 101;
pub const DEFAULT_LEVELS: usize = 4;
pub const MIN_GRID_POINTS: usize = 33;

/// Values closer than this count as one plateau when counting minima.
pub const PLATEAU_TOLERANCE: f64 = 1e-10;

/// Gaps below this make the adiabatic bound infinite.
pub const GAP_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct SpectrumOptions {
    pub m_points: usize,
    pub l_levels: usize,
    /// Retain the two lowest eigenvectors at every grid point.
    pub keep_vectors: bool,
    pub lanczos: LanczosOptions,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self {
            m_points: DEFAULT_GRID_POINTS,
            l_levels: DEFAULT_LEVELS,
            keep_vectors: false,
            lanczos: LanczosOptions::default(),
        }
    }
}

/// The `L` lowest instantaneous eigenvalues on a `tau` grid. Levels are
/// sorted per row, not connected through crossings.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumTrace {
    pub tau_grid: Vec<f64>,
    pub levels: Vec<Vec<f64>>,
    /// Ground and first excited vectors per grid point, when retained.
    pub vectors: Option<Vec<[Vec<f64>; 2]>>,
}

impl SpectrumTrace {
    pub fn l_levels(&self) -> usize {
        self.levels.first().map_or(0, Vec::len)
    }

    /// `level_1 - level_0` at each grid point.
    pub fn gap_trace(&self) -> Vec<f64> {
        self.levels.iter().map(|row| row[1] - row[0]).collect()
    }

    /// CSV with columns `tau, level_0, ..., level_{L-1}`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = std::iter::once("tau".to_string())
            .chain((0..self.l_levels()).map(|l| format!("level_{l}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for (t, row) in self.tau_grid.iter().zip(&self.levels) {
            let cells: Vec<String> = std::iter::once(format!("{t}"))
                .chain(row.iter().map(|v| format!("{v}")))
                .collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub min_gap: f64,
    pub position: f64,
    pub local_minima_count: usize,
    #[serde(skip)]
    pub gap_trace: Vec<f64>,
}

/// Lowest `count` eigenpairs of `H(s, c)`.
///
/// Purely diagonal and purely transverse operators are solved in closed
/// form; everything else goes through Lanczos.
pub fn levels_at(ham: &PassageHamiltonian, s: f64, c: f64, count: usize, lanczos: &LanczosOptions) -> Option<Eigenpairs> {
    let dim = ham.dim();
    let count = count.min(dim);
    let a = ham.transverse_coefficient(s);
    if a == 0.0 {
        let mut diag = vec![0.0; dim];
        ham.diagonal_into(s, c, &mut diag);
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&x, &y| diag[x].total_cmp(&diag[y]).then(x.cmp(&y)));
        let mut out = Eigenpairs::default();
        for &i in &order[..count] {
            let mut v = vec![0.0; dim];
            v[i] = 1.0;
            out.values.push(diag[i]);
            out.vectors.push(v);
        }
        return Some(out);
    }
    if s == 0.0 && c == 0.0 {
        // a * sum_k sigma_x: product states in the x basis.
        let k = ham.k_physical();
        let mut patterns: Vec<(f64, usize)> = (0..dim)
            .map(|m| (a * (k as f64 - 2.0 * m.count_ones() as f64), m))
            .collect();
        patterns.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        let norm = (dim as f64).sqrt().recip();
        let mut out = Eigenpairs::default();
        for &(value, m) in &patterns[..count] {
            out.values.push(value);
            out.vectors.push(
                (0..dim)
                    .map(|b| if (b & m).count_ones() % 2 == 0 { norm } else { -norm })
                    .collect(),
            );
        }
        return Some(out);
    }
    lowest_eigenpairs(dim, count, |x, y| ham.apply(s, c, x, y), lanczos)
}

pub fn instantaneous_spectrum(
    phys: &PhysicalInstance,
    schedule: &Schedule,
    m_points: usize,
    l_levels: usize,
) -> Result<SpectrumTrace> {
    let opts = SpectrumOptions {
        m_points,
        l_levels,
        ..Default::default()
    };
    spectrum_with(&PassageHamiltonian::new(phys), schedule, &opts)
}

pub fn spectrum_with(ham: &PassageHamiltonian, schedule: &Schedule, opts: &SpectrumOptions) -> Result<SpectrumTrace> {
    if ham.dim() > MAX_SPECTRUM_DIM {
        return Err(Error::TooLarge {
            what: "spectral scan",
            size: ham.dim(),
            limit: MAX_SPECTRUM_DIM,
        });
    }
    if opts.m_points < MIN_GRID_POINTS {
        return Err(Error::Domain(format!(
            "{} grid points, at least {MIN_GRID_POINTS} required",
            opts.m_points
        )));
    }
    if opts.l_levels < 2 {
        return Err(Error::Domain("at least two levels are needed for a gap".into()));
    }
    let grid = uniform_grid(opts.m_points);
    let rows: Vec<Result<(Vec<f64>, Option<[Vec<f64>; 2]>)>> = grid
        .par_iter()
        .map(|&tau| {
            let (s, c) = schedule.controls(tau);
            let pairs = levels_at(ham, s, c, opts.l_levels, &opts.lanczos).ok_or(Error::NoConvergence { tau })?;
            if pairs.values.len() < opts.l_levels {
                return Err(Error::NoConvergence { tau });
            }
            let vectors = opts.keep_vectors.then(|| {
                let mut it = pairs.vectors.into_iter();
                [it.next().expect("ground"), it.next().expect("excited")]
            });
            Ok((pairs.values, vectors))
        })
        .collect();
    let mut levels = Vec::with_capacity(grid.len());
    let mut vectors = opts.keep_vectors.then(Vec::new);
    for row in rows {
        let (vals, vecs) = row?;
        levels.push(vals);
        if let (Some(all), Some(v)) = (vectors.as_mut(), vecs) {
            all.push(v);
        }
    }
    Ok(SpectrumTrace {
        tau_grid: grid,
        levels,
        vectors,
    })
}

pub fn gap_summary(trace: &SpectrumTrace) -> GapSummary {
    summarize_gaps(&trace.tau_grid, &trace.gap_trace())
}

/// Minimum, refined position and number of local minima of a gap trace.
pub fn summarize_gaps(tau: &[f64], gaps: &[f64]) -> GapSummary {
    assert_eq!(tau.len(), gaps.len());
    assert!(!gaps.is_empty());
    let (imin, &min_gap) = gaps
        .iter()
        .enumerate()
        .fold((0, &f64::INFINITY), |best, (i, g)| if *g < *best.1 { (i, g) } else { best });
    let position = if imin > 0 && imin + 1 < gaps.len() {
        parabolic_vertex(
            [tau[imin - 1], tau[imin], tau[imin + 1]],
            [gaps[imin - 1], gaps[imin], gaps[imin + 1]],
        )
    } else {
        tau[imin]
    };
    GapSummary {
        min_gap,
        position,
        local_minima_count: count_local_minima(gaps, PLATEAU_TOLERANCE),
        gap_trace: gaps.to_vec(),
    }
}

/// Vertex of the parabola through three points, clamped to their span;
/// falls back to the middle point for flat or concave triples.
fn parabolic_vertex(x: [f64; 3], y: [f64; 3]) -> f64 {
    let d1 = (y[1] - y[0]) / (x[1] - x[0]);
    let d2 = (y[2] - y[1]) / (x[2] - x[1]);
    let curvature = (d2 - d1) / (x[2] - x[0]);
    if !(curvature > 0.0) {
        return x[1];
    }
    let vertex = 0.5 * (x[0] + x[1]) - d1 / (2.0 * curvature);
    vertex.clamp(x[0], x[2])
}

/// Strict interior local minima (plateaus count once), plus the global
/// minimum when it sits on a boundary.
pub fn count_local_minima(gaps: &[f64], tol: f64) -> usize {
    // Collapse runs of equal values into segments (value, first, last).
    let mut segments: Vec<(f64, usize, usize)> = Vec::new();
    for (i, &g) in gaps.iter().enumerate() {
        match segments.last_mut() {
            Some(seg) if (g - seg.0).abs() <= tol => seg.2 = i,
            _ => segments.push((g, i, i)),
        }
    }
    let global = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let last = gaps.len() - 1;
    let mut count = 0;
    for (k, &(value, first, end)) in segments.iter().enumerate() {
        let at_boundary = first == 0 || end == last;
        if at_boundary {
            if (value - global).abs() <= tol {
                count += 1;
            }
        } else if value < segments[k - 1].0 && value < segments[k + 1].0 {
            count += 1;
        }
    }
    count.max(1)
}

/// `max_tau |<1|dH/dtau|0>| / gap^2` using the schedule's analytic
/// derivatives. Requires a trace with retained vectors.
pub fn adiabatic_time_bound(ham: &PassageHamiltonian, schedule: &Schedule, trace: &SpectrumTrace) -> Result<f64> {
    adiabatic_bound_with(ham, trace, |tau| {
        let ds = schedule.derivative(tau).expect("grid inside [0, 1]");
        let dc = schedule.constraint_derivative(tau).expect("grid inside [0, 1]");
        (ds, dc)
    })
}

/// Same bound with caller-supplied `(ds/dtau, dc/dtau)`. Grid points where
/// the matrix element vanishes contribute zero even across a closed gap.
pub fn adiabatic_bound_with<F>(ham: &PassageHamiltonian, trace: &SpectrumTrace, derivatives: F) -> Result<f64>
where
    F: Fn(f64) -> (f64, f64),
{
    let vectors = trace
        .vectors
        .as_ref()
        .ok_or_else(|| Error::Domain("spectrum trace was computed without eigenvectors".into()))?;
    let mut scratch = vec![0.0; ham.dim()];
    let mut bound: f64 = 0.0;
    for ((&tau, row), [ground, excited]) in trace.tau_grid.iter().zip(&trace.levels).zip(vectors) {
        let (ds, dc) = derivatives(tau);
        ham.apply_derivative(ds, dc, ground, &mut scratch);
        let element: f64 = excited.iter().zip(&scratch).map(|(a, b)| a * b).sum::<f64>().abs();
        if element == 0.0 {
            continue;
        }
        let gap = row[1] - row[0];
        if gap < GAP_FLOOR {
            return Ok(f64::INFINITY);
        }
        bound = bound.max(element / (gap * gap));
    }
    Ok(bound)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace_of(gaps: &[f64]) -> SpectrumTrace {
        SpectrumTrace {
            tau_grid: uniform_grid(gaps.len()),
            levels: gaps.iter().map(|&g| vec![0.0, g]).collect(),
            vectors: None,
        }
    }

    #[test]
    fn gap_summary_examples() {
        let s = gap_summary(&trace_of(&[0.5, 0.2, 0.4]));
        assert_eq!(s.min_gap, 0.2);
        assert_eq!(s.local_minima_count, 1);

        let s = gap_summary(&trace_of(&[0.5, 0.2, 0.4, 0.1, 0.3]));
        assert_eq!(s.min_gap, 0.1);
        assert_eq!(s.local_minima_count, 2);

        let s = gap_summary(&trace_of(&[0.7; 9]));
        assert_eq!(s.position, 0.0);
        assert_eq!(s.local_minima_count, 1);
    }

    #[test]
    fn parabolic_refinement_recovers_vertex() {
        let grid = uniform_grid(51);
        let gaps: Vec<f64> = grid.iter().map(|t| 0.3 + 4.0 * (t - 0.4137).powi(2)).collect();
        let s = summarize_gaps(&grid, &gaps);
        assert!((s.position - 0.4137).abs() < 1e-12);
        assert_eq!(s.min_gap, gaps.iter().copied().fold(f64::INFINITY, f64::min));
    }

    #[test]
    fn plateaus_and_boundaries() {
        // plateau minimum counts once
        assert_eq!(count_local_minima(&[0.5, 0.2, 0.2, 0.2, 0.4], 1e-10), 1);
        // boundary minimum that is not global is ignored
        assert_eq!(count_local_minima(&[0.1, 0.3, 0.05, 0.4], 1e-10), 1);
        // global minimum at the right boundary plus an interior local minimum
        assert_eq!(count_local_minima(&[0.5, 0.2, 0.4, 0.1], 1e-10), 2);
        // noise below tolerance does not create minima
        assert_eq!(count_local_minima(&[0.5, 0.3, 0.3 + 1e-12, 0.3, 0.6], 1e-10), 1);
    }

    #[test]
    fn closed_form_transverse_levels() {
        use crate::model::{map_logical_to_physical, LogicalInstance};
        let l = LogicalInstance::new("z", 5, 0, vec![0.0; 10]).unwrap();
        let ham = PassageHamiltonian::new(&map_logical_to_physical(&l, 2.0).unwrap());
        let p = levels_at(&ham, 0.0, 0.0, 12, &LanczosOptions::default()).unwrap();
        assert_eq!(p.values[0], -10.0);
        assert!(p.values[1..11].iter().all(|&v| v == -8.0));
        assert_eq!(p.values[11], -6.0);
        // vectors are eigenvectors
        let mut y = vec![0.0; 1024];
        for (val, v) in p.values.iter().zip(&p.vectors) {
            ham.apply(0.0, 0.0, v, &mut y);
            for (a, b) in y.iter().zip(v) {
                assert!((a - val * b).abs() < 1e-12);
            }
        }
    }
}
