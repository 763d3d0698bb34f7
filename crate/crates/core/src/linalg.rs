//! Lanczos eigensolver for the low end of real symmetric operators, plus the
//! symmetric tridiagonal QL iteration it relies on.

/// Eigen-decomposition of a symmetric tridiagonal matrix by implicit QL with
/// Wilkinson shifts.
///
/// `diag` has length `n`, `off[i]` couples `i` and `i + 1` (length `n - 1`).
/// Each entry of `rows` is a row vector of length `n` to which every rotation
/// is applied: pass the identity to obtain eigenvectors as columns, or a
/// single unit row to obtain one component of each eigenvector. Returns the
/// eigenvalues in the column order of `rows`, or `None` if an eigenvalue did
/// not converge within 60 sweeps.
pub fn tridiagonal_eigen(diag: &[f64], off: &[f64], rows: &mut [Vec<f64>]) -> Option<Vec<f64>> {
    let n = diag.len();
    debug_assert!(off.len() + 1 >= n);
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n.saturating_sub(1)].copy_from_slice(&off[..n.saturating_sub(1)]);

    for l in 0..n {
        let mut sweeps = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            sweeps += 1;
            if sweeps > 60 {
                return None;
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for row in rows.iter_mut() {
                    let f = row[i + 1];
                    row[i + 1] = s * row[i] + c * f;
                    row[i] = c * row[i] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Some(d)
}

/// The `count` smallest eigenvalues of a symmetric tridiagonal matrix, by
/// Sturm-sequence bisection, ascending.
pub fn tridiagonal_lowest(diag: &[f64], off: &[f64], count: usize) -> Vec<f64> {
    tridiagonal_lowest_from(diag, off, count, &[])
}

/// Like [`tridiagonal_lowest`], but first tries Rayleigh-quotient iteration
/// from `guesses` (e.g. the values of a smaller leading block), accepting a
/// result only if a Sturm count confirms its index.
pub fn tridiagonal_lowest_from(diag: &[f64], off: &[f64], count: usize, guesses: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let count = count.min(n);
    let e = &off[..n.saturating_sub(1)];
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { e[i - 1].abs() } else { 0.0 } + if i + 1 < n { e[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    let tiny = f64::MIN_POSITIVE.sqrt() * scale;
    // number of eigenvalues strictly below x
    let below = |x: f64| -> usize {
        let mut count = 0;
        let mut q = diag[0] - x;
        for i in 0..n {
            if i > 0 {
                q = diag[i] - x - e[i - 1] * e[i - 1] / q;
            }
            if q == 0.0 {
                q = -tiny;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    };
    let rayleigh = |z: &[f64]| -> f64 {
        let mut r = 0.0;
        for i in 0..n {
            r += diag[i] * z[i] * z[i];
            if i + 1 < n {
                r += 2.0 * e[i] * z[i] * z[i + 1];
            }
        }
        r
    };
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        if let Some(&guess) = guesses.get(k) {
            let mut sigma = guess;
            for _ in 0..6 {
                let theta = rayleigh(&tridiagonal_eigenvector(diag, off, sigma));
                let done = (theta - sigma).abs() <= 4.0 * f64::EPSILON * scale;
                sigma = theta;
                if done {
                    break;
                }
            }
            let delta = 1e-9 * scale;
            if below(sigma - delta) == k && below(sigma + delta) == k + 1 {
                out.push(sigma);
                continue;
            }
        }
        let (mut a, mut b) = (out.last().copied().unwrap_or(lo), hi);
        while b - a > 2.0 * f64::EPSILON * scale {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if below(mid) > k {
                b = mid;
            } else {
                a = mid;
            }
        }
        out.push(0.5 * (a + b));
    }
    out
}

/// Eigenvector of the symmetric tridiagonal matrix for the (converged)
/// eigenvalue `theta`, by two steps of inverse iteration with a pivoted LU
/// factorization of `T - theta I`. Normalized to unit length.
pub fn tridiagonal_eigenvector(diag: &[f64], off: &[f64], theta: f64) -> Vec<f64> {
    let n = diag.len();
    if n == 1 {
        return vec![1.0];
    }
    let scale = diag
        .iter()
        .map(|x| x.abs())
        .chain(off.iter().take(n - 1).map(|x| x.abs()))
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let tiny = f64::EPSILON * scale;
    // LU with row interchanges: U has diagonal u0, superdiagonals u1 and u2.
    let mut u0: Vec<f64> = diag.iter().map(|d| d - theta).collect();
    let mut u1: Vec<f64> = off[..n - 1].to_vec();
    u1.push(0.0);
    let mut u2 = vec![0.0; n];
    let mut lower = vec![0.0; n];
    let mut swapped = vec![false; n];
    let mut sub: Vec<f64> = off[..n - 1].to_vec();
    for i in 0..n - 1 {
        if u0[i].abs() >= sub[i].abs() {
            if u0[i] == 0.0 {
                u0[i] = tiny;
            }
            let l = sub[i] / u0[i];
            lower[i] = l;
            u0[i + 1] -= l * u1[i];
            sub[i] = 0.0;
        } else {
            // swap rows i and i + 1
            swapped[i] = true;
            let l = u0[i] / sub[i];
            lower[i] = l;
            u0[i] = sub[i];
            let tmp = u1[i];
            u1[i] = u0[i + 1];
            u0[i + 1] = tmp - l * u0[i + 1];
            if i + 1 < n - 1 {
                u2[i] = u1[i + 1];
                u1[i + 1] = -l * u1[i + 1];
            }
        }
    }
    if u0[n - 1] == 0.0 {
        u0[n - 1] = tiny;
    }
    let mut x = vec![1.0; n];
    for _ in 0..2 {
        // forward substitution with the recorded interchanges
        for i in 0..n - 1 {
            if swapped[i] {
                x.swap(i, i + 1);
            }
            x[i + 1] -= lower[i] * x[i];
        }
        // back substitution
        for i in (0..n).rev() {
            let mut v = x[i];
            if i + 1 < n {
                v -= u1[i] * x[i + 1];
            }
            if i + 2 < n {
                v -= u2[i] * x[i + 2];
            }
            x[i] = v / u0[i];
        }
        let norm = dot(&x, &x).sqrt();
        x.iter_mut().for_each(|v| *v /= norm);
    }
    x
}

#[derive(Clone, Debug)]
pub struct LanczosOptions {
    /// Krylov dimension cap per run.
    pub max_iterations: usize,
    /// Residual tolerance relative to the Ritz spectrum scale.
    pub tolerance: f64,
    /// Iterations between convergence checks.
    pub check_every: usize,
    /// Re-run in the orthogonal complement of the converged vectors until no
    /// missing degenerate copy is found.
    pub verify_multiplicity: bool,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            max_iterations: 400,
            tolerance: 1e-11,
            check_every: 4,
            verify_multiplicity: true,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Eigenpairs {
    /// Ascending.
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

/// The `count` lowest eigenpairs of the symmetric operator `apply`
/// (`apply(x, y)` writes `y = A x`).
///
/// Runs Lanczos with full reorthogonalization. Because a single Krylov space
/// only sees one vector of each degenerate eigenspace, converged vectors are
/// locked and the search repeats in their orthogonal complement until no
/// eigenvalue below the current `count`-th is missing. Returns `None` when a
/// run fails to converge.
pub fn lowest_eigenpairs<F>(dim: usize, count: usize, apply: F, opts: &LanczosOptions) -> Option<Eigenpairs>
where
    F: Fn(&[f64], &mut [f64]),
{
    let count = count.min(dim);
    let mut found = Eigenpairs::default();
    let mut run = 0u64;
    while found.values.len() < count {
        let want = count - found.values.len();
        let pairs = lanczos_run(dim, want, &apply, &found.vectors, run, opts)?;
        run += 1;
        if pairs.values.is_empty() {
            break;
        }
        merge(&mut found, pairs, count);
    }
    if opts.verify_multiplicity {
        while found.values.len() == count && found.vectors.len() < dim {
            let probe = lanczos_run(dim, 1, &apply, &found.vectors, run, opts)?;
            run += 1;
            let Some(&value) = probe.values.first() else { break };
            let top = *found.values.last().expect("non-empty");
            let scale = top.abs().max(1.0);
            if value < top - 1e-12 * scale {
                merge(&mut found, probe, count);
            } else {
                break;
            }
        }
    }
    Some(found)
}

fn merge(found: &mut Eigenpairs, new: Eigenpairs, count: usize) {
    let mut all: Vec<(f64, Vec<f64>)> = found
        .values
        .drain(..)
        .zip(found.vectors.drain(..))
        .chain(new.values.into_iter().zip(new.vectors))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    all.truncate(count);
    for (v, x) in all {
        found.values.push(v);
        found.vectors.push(x);
    }
}

/// Dot product with eight independent partial sums so the loop vectorizes.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for j in 0..8 {
            acc[j] += x[j] * y[j];
        }
    }
    acc.iter().sum::<f64>() + tail
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for u in basis {
        let c = dot(w, u);
        axpy(-c, u, w);
    }
}

/// SplitMix64 stream for reproducible start vectors.
fn start_vector(dim: usize, run: u64) -> Vec<f64> {
    let mut state = 0x9E37_79B9_7F4A_7C15u64 ^ run.wrapping_mul(0xD1B5_4A32_D192_ED03);
    (0..dim)
        .map(|_| {
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^= z >> 31;
            (z >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect()
}

/// One Lanczos run in the complement of `locked`, returning up to `want`
/// converged lowest Ritz pairs.
///
/// Orthogonality of the Krylov basis is maintained by partial
/// reorthogonalization: the loss of orthogonality is tracked with Simon's
/// recurrence and a full Gram-Schmidt sweep is done only when it would exceed
/// `sqrt(eps)`, which keeps the Ritz values exact to working precision.
fn lanczos_run<F>(dim: usize, want: usize, apply: &F, locked: &[Vec<f64>], run: u64, opts: &LanczosOptions) -> Option<Eigenpairs>
where
    F: Fn(&[f64], &mut [f64]),
{
    let available = dim - locked.len();
    if available == 0 {
        return Some(Eigenpairs::default());
    }
    let mut v = start_vector(dim, run);
    for _ in 0..2 {
        orthogonalize(&mut v, locked);
    }
    let norm = dot(&v, &v).sqrt();
    if norm == 0.0 {
        return Some(Eigenpairs::default());
    }
    v.iter_mut().for_each(|x| *x /= norm);

    let eps = f64::EPSILON;
    let threshold = eps.sqrt();
    let max_iter = opts.max_iterations.min(available);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_iter);
    let mut alpha: Vec<f64> = Vec::with_capacity(max_iter);
    let mut beta: Vec<f64> = Vec::with_capacity(max_iter);
    // omega[k] estimates <q_j, q_k>, omega_prev[k] estimates <q_{j-1}, q_k>
    let mut omega: Vec<f64> = vec![1.0];
    let mut omega_prev: Vec<f64> = Vec::new();
    let mut force_next = false;
    let mut next_check = 0;
    let mut estimates: Vec<f64> = Vec::new();
    let mut w = vec![0.0; dim];
    basis.push(v);

    for j in 0..max_iter {
        apply(&basis[j], &mut w);
        if j > 0 {
            axpy(-beta[j - 1], &basis[j - 1], &mut w);
        }
        let a = dot(&w, &basis[j]);
        alpha.push(a);
        axpy(-a, &basis[j], &mut w);
        if !locked.is_empty() {
            for _ in 0..2 {
                orthogonalize(&mut w, locked);
            }
        }
        let mut b = dot(&w, &w).sqrt();
        let scale = alpha
            .iter()
            .map(|x| x.abs())
            .chain(beta.iter().copied())
            .fold(b, f64::max)
            .max(1.0);

        // orthogonality estimates for the next vector
        let mut next = vec![0.0; j + 2];
        if b > 0.0 {
            for k in 0..j {
                let mut t = beta.get(k).copied().unwrap_or(0.0) * omega[k + 1] + (alpha[k] - a) * omega[k];
                if k > 0 {
                    t += beta[k - 1] * omega[k - 1];
                }
                if j > 0 {
                    t -= beta[j - 1] * omega_prev[k];
                }
                t = (t + t.signum() * 2.0 * eps * scale) / b;
                next[k] = t;
            }
        }
        if j > 0 {
            next[j] = eps * dim as f64;
        }
        next[j + 1] = 1.0;
        let lost = next[..j + 1].iter().any(|x| x.abs() > threshold);
        if lost || force_next {
            for _ in 0..2 {
                orthogonalize(&mut w, &basis);
            }
            b = dot(&w, &w).sqrt();
            next[..j + 1].iter_mut().for_each(|x| *x = eps);
            force_next = lost;
        }
        omega_prev = std::mem::replace(&mut omega, next);

        let m = j + 1;
        let exhausted = b <= 1e-13 * scale || m == max_iter;
        if exhausted || (m >= want && m >= next_check) {
            next_check = m + opts.check_every.max(m / 10);
            let take = want.min(m);
            let theta = tridiagonal_lowest_from(&alpha, &beta, take, &estimates);
            estimates.clone_from(&theta);
            let vectors: Vec<Vec<f64>> = theta.iter().map(|&t| tridiagonal_eigenvector(&alpha, &beta, t)).collect();
            let converged = vectors.iter().all(|z| (b * z[m - 1]).abs() <= opts.tolerance * scale);
            if converged || exhausted {
                if !converged && m == max_iter && b > 1e-13 * scale {
                    return None;
                }
                let mut coeffs: Vec<Vec<f64>> = Vec::with_capacity(take);
                let mut out = Eigenpairs::default();
                for (&value, mut z) in theta.iter().zip(vectors) {
                    // close eigenvalues can leave inverse-iteration vectors slightly non-orthogonal
                    for _ in 0..2 {
                        orthogonalize(&mut z, &coeffs);
                    }
                    let zn = dot(&z, &z).sqrt();
                    z.iter_mut().for_each(|x| *x /= zn);
                    let mut y = vec![0.0; dim];
                    for (k, q) in basis.iter().enumerate() {
                        axpy(z[k], q, &mut y);
                    }
                    for _ in 0..2 {
                        orthogonalize(&mut y, &out.vectors);
                    }
                    let n = dot(&y, &y).sqrt();
                    y.iter_mut().for_each(|x| *x /= n);
                    coeffs.push(z);
                    out.values.push(value);
                    out.vectors.push(y);
                }
                return Some(out);
            }
        }
        beta.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }
    None
}
