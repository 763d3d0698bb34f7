//! Nelder-Mead simplex search, maximizing.
//!
//! Standard coefficients (reflection 1, expansion 2, contraction 1/2,
//! shrink 1/2). Vertices are kept in a stable order so that on equal values
//! the incumbent wins, which makes runs reproducible.

use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct SimplexOptions {
    pub initial_step: f64,
    pub max_evaluations: usize,
    /// Stop as soon as a value at or above this is found.
    pub target: Option<f64>,
    /// Stop when both the value spread and the simplex diameter fall below.
    pub tolerance: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            initial_step: 0.1,
            max_evaluations: 200,
            target: None,
            tolerance: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimplexResult {
    pub best_point: Vec<f64>,
    pub best_value: f64,
    /// Number of objective calls made by this search.
    pub evaluations: usize,
}

/// Maximizes `f` from `start`. `start_value` is `f(start)` when the caller
/// already knows it; it is then not re-evaluated. The initial simplex is
/// `start` plus `initial_step` along each axis.
pub fn maximize<F>(mut f: F, start: &[f64], start_value: Option<f64>, opts: &SimplexOptions) -> Result<SimplexResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let n = start.len();
    let mut evaluations = 0;
    let mut eval = |x: &[f64], count: &mut usize| -> Result<f64> {
        *count += 1;
        f(x)
    };
    let reached = |v: f64| opts.target.is_some_and(|t| v >= t);

    let first = match start_value {
        Some(v) => v,
        None => eval(start, &mut evaluations)?,
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(start.to_vec(), first)];
    if n == 0 || reached(first) {
        return Ok(SimplexResult {
            best_point: start.to_vec(),
            best_value: first,
            evaluations,
        });
    }
    for i in 0..n {
        if evaluations >= opts.max_evaluations {
            break;
        }
        let mut x = start.to_vec();
        x[i] += opts.initial_step;
        let v = eval(&x, &mut evaluations)?;
        simplex.push((x, v));
        if reached(v) {
            break;
        }
    }
    let finish = |mut simplex: Vec<(Vec<f64>, f64)>, evaluations| {
        sort(&mut simplex);
        let (best_point, best_value) = simplex.swap_remove(0);
        Ok(SimplexResult {
            best_point,
            best_value,
            evaluations,
        })
    };
    if simplex.len() < n + 1 || simplex.iter().any(|v| reached(v.1)) {
        return finish(simplex, evaluations);
    }

    loop {
        sort(&mut simplex);
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let second_worst = simplex[n - 1].1;
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if reached(best) || evaluations >= opts.max_evaluations || ((best - worst).abs() <= opts.tolerance && diameter <= opts.tolerance) {
            return finish(simplex, evaluations);
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(1.0);
        let fr = eval(&xr, &mut evaluations)?;
        if fr > best {
            if evaluations >= opts.max_evaluations || reached(fr) {
                simplex[n] = (xr, fr);
                continue;
            }
            let xe = along(2.0);
            let fe = eval(&xe, &mut evaluations)?;
            simplex[n] = if fe > fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr > second_worst {
            simplex[n] = (xr, fr);
            continue;
        }
        if evaluations >= opts.max_evaluations {
            continue;
        }
        let (xc, fc, accept) = if fr > worst {
            let xc = along(0.5);
            let fc = eval(&xc, &mut evaluations)?;
            let ok = fc >= fr;
            (xc, fc, ok)
        } else {
            let xc = along(-0.5);
            let fc = eval(&xc, &mut evaluations)?;
            let ok = fc > worst;
            (xc, fc, ok)
        };
        if accept {
            simplex[n] = (xc, fc);
            continue;
        }
        // shrink towards the best vertex
        let anchor = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            if evaluations >= opts.max_evaluations {
                break;
            }
            let x: Vec<f64> = vertex.0.iter().zip(&anchor).map(|(v, a)| a + 0.5 * (v - a)).collect();
            let v = eval(&x, &mut evaluations)?;
            *vertex = (x, v);
        }
    }
}

/// Descending by value; the stable sort keeps earlier vertices first on ties.
fn sort(simplex: &mut [(Vec<f64>, f64)]) {
    simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_quadratic_optimum() {
        let f = |x: &[f64]| Ok(1.0 - (x[0] - 0.3).powi(2) - (x[1] + 0.2).powi(2));
        let r = maximize(f, &[0.0, 0.0], None, &SimplexOptions::default()).unwrap();
        assert!((r.best_point[0] - 0.3).abs() < 1e-4, "{r:?}");
        assert!((r.best_point[1] + 0.2).abs() < 1e-4, "{r:?}");
        assert!(r.evaluations <= 200);
    }

    #[test]
    fn respects_budget_and_target() {
        let mut calls = 0;
        let f = |x: &[f64]| {
            calls += 1;
            Ok(-(x[0] - 5.0).powi(2))
        };
        let r = maximize(
            f,
            &[0.0],
            None,
            &SimplexOptions {
                max_evaluations: 7,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(r.evaluations, 7);
        assert_eq!(calls, 7);

        let r = maximize(
            |x: &[f64]| Ok(x[0]),
            &[0.0],
            None,
            &SimplexOptions {
                target: Some(0.05),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(r.best_value >= 0.05);
        assert_eq!(r.evaluations, 2);
    }

    #[test]
    fn flat_objective_keeps_the_start() {
        let r = maximize(|_: &[f64]| Ok(0.5), &[0.0, 0.0], Some(0.5), &SimplexOptions::default()).unwrap();
        assert_eq!(r.best_point, [0.0, 0.0]);
        assert_eq!(r.best_value, 0.5);
    }

    #[test]
    fn errors_propagate() {
        let r = maximize(
            |x: &[f64]| if x[0] > 0.05 { Err(crate::Error::Domain("boom".into())) } else { Ok(0.0) },
            &[0.0],
            None,
            &SimplexOptions::default(),
        );
        assert!(r.is_err());
    }
}
