//! Small deterministic linear-algebra kernels used by the exhaustive oracle:
//! conjugate gradients for symmetric positive-definite systems, dense
//! Gaussian elimination as a fallback, and two symmetric eigenvalue routines
//! (cyclic Jacobi for small dense problems, Lanczos with full
//! reorthogonalization for matrix-free ones).

/// Conjugate gradients on a symmetric positive-definite operator.
/// Deterministic; converges to `tol` relative residual or `max_iter`.
pub(crate) fn conjugate_gradient<F>(apply: F, b: &[f64], tol: f64, max_iter: usize) -> Vec<f64>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let b_norm = dot(b, b).sqrt().max(f64::MIN_POSITIVE);
    let mut rr = dot(&r, &r);
    for _ in 0..max_iter {
        if rr.sqrt() <= tol * b_norm {
            break;
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break; // operator not PD along p; stop with best iterate
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    x
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dense Gaussian elimination with partial pivoting; `a` is row-major n x n.
/// Returns None when the matrix is numerically singular.
pub(crate) fn dense_solve(a: &mut [f64], b: &mut [f64], n: usize) -> Option<Vec<f64>> {
    for col in 0..n {
        let mut pivot = col;
        let mut best = a[col * n + col].abs();
        for row in col + 1..n {
            let v = a[row * n + col].abs();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if best < 1e-300 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col * n + k] * x[k];
        }
        x[col] = acc / a[col * n + col];
    }
    Some(x)
}

/// All eigenvalues of a symmetric matrix by the cyclic Jacobi method,
/// ascending. Row-major input is consumed.
pub(crate) fn jacobi_eigenvalues(a: &mut [f64], n: usize) -> Vec<f64> {
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += a[i * n + j] * a[i * n + j];
            }
        }
        if off.sqrt() < 1e-14 {
            break;
        }
        for i in 0..n {
            for j in i + 1..n {
                let apq = a[i * n + j];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[i * n + i];
                let aqq = a[j * n + j];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let aik = a[i * n + k];
                    let ajk = a[j * n + k];
                    a[i * n + k] = c * aik - s * ajk;
                    a[j * n + k] = s * aik + c * ajk;
                }
                for k in 0..n {
                    let aki = a[k * n + i];
                    let akj = a[k * n + j];
                    a[k * n + i] = c * aki - s * akj;
                    a[k * n + j] = s * aki + c * akj;
                }
            }
        }
    }
    let mut eigs: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eigs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    eigs
}

/// Smallest eigenvalue of a symmetric tridiagonal matrix (diag, offdiag) by
/// Sturm-sequence bisection.
pub(crate) fn tridiag_smallest(diag: &[f64], off: &[f64]) -> f64 {
    let n = diag.len();
    if n == 1 {
        return diag[0];
    }
    // Gershgorin bounds.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i == 0 {
            off[0].abs()
        } else if i == n - 1 {
            off[n - 2].abs()
        } else {
            off[i - 1].abs() + off[i].abs()
        };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    // Count of eigenvalues below x via the Sturm sequence.
    let count_below = |x: f64| -> usize {
        let mut count = 0;
        let mut d = diag[0] - x;
        if d < 0.0 {
            count += 1;
        }
        for i in 1..n {
            let denom = if d.abs() < 1e-300 {
                1e-300_f64.copysign(d)
            } else {
                d
            };
            d = diag[i] - x - off[i - 1] * off[i - 1] / denom;
            if d < 0.0 {
                count += 1;
            }
        }
        count
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if count_below(mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi.abs().max(1e-30) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Smallest eigenvalue of a symmetric PSD operator restricted to the
/// orthogonal complement of `kernel` (a unit vector), via Lanczos with full
/// reorthogonalization. Deterministic start vector.
pub(crate) fn lanczos_smallest_deflated<F>(apply: F, kernel: &[f64], max_steps: usize) -> f64
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = kernel.len();
    let mut state = 0x5EED_1234_ABCD_EF01u64;
    let mut v: Vec<f64> = (0..n)
        .map(|_| crate::rng::splitmix64(&mut state) as f64 / u64::MAX as f64 - 0.5)
        .collect();
    orthogonalize(&mut v, kernel);
    normalize(&mut v);

    let mut basis: Vec<Vec<f64>> = vec![v.clone()];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let mut prev_est = f64::INFINITY;
    let steps = max_steps.min(n.saturating_sub(1)).max(1);
    for step in 0..steps {
        apply(&basis[step], &mut w);
        let alpha = dot(&basis[step], &w);
        alphas.push(alpha);
        for i in 0..n {
            w[i] -= alpha * basis[step][i];
        }
        if step > 0 {
            let beta_prev = betas[step - 1];
            for i in 0..n {
                w[i] -= beta_prev * basis[step - 1][i];
            }
        }
        // Full reorthogonalization against the kernel and the basis.
        orthogonalize(&mut w, kernel);
        for b in &basis {
            orthogonalize(&mut w, b);
        }
        let beta = dot(&w, &w).sqrt();
        let est = tridiag_smallest(&alphas, &betas);
        if beta < 1e-14 {
            return est;
        }
        if step >= 4 && (est - prev_est).abs() <= 1e-12 * est.abs().max(1e-300) {
            return est;
        }
        prev_est = est;
        betas.push(beta);
        let next: Vec<f64> = w.iter().map(|&x| x / beta).collect();
        basis.push(next);
    }
    tridiag_smallest(&alphas, &betas[..alphas.len().saturating_sub(1)])
}

fn orthogonalize(v: &mut [f64], against: &[f64]) {
    let proj = dot(v, against);
    for i in 0..v.len() {
        v[i] -= proj * against[i];
    }
}

fn normalize(v: &mut [f64]) {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cg_solves_small_system() {
        // A = [[4,1],[1,3]], b = [1,2]
        let apply = |x: &[f64], y: &mut [f64]| {
            y[0] = 4.0 * x[0] + x[1];
            y[1] = x[0] + 3.0 * x[1];
        };
        let x = conjugate_gradient(apply, &[1.0, 2.0], 1e-14, 100);
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-12);
        assert!((x[1] - 7.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn dense_solve_matches_cg() {
        let mut a = vec![4.0, 1.0, 1.0, 3.0];
        let mut b = vec![1.0, 2.0];
        let x = dense_solve(&mut a, &mut b, 2).unwrap();
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-12);
        assert!((x[1] - 7.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn jacobi_finds_known_spectrum() {
        // Eigenvalues of [[2,-1],[-1,2]] are 1 and 3.
        let mut a = vec![2.0, -1.0, -1.0, 2.0];
        let eigs = jacobi_eigenvalues(&mut a, 2);
        assert!((eigs[0] - 1.0).abs() < 1e-12);
        assert!((eigs[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn tridiag_bisection_matches_jacobi() {
        let diag = [2.0, 2.5, 3.0, 1.5];
        let off = [-0.7, 0.3, -0.2];
        let mut full = vec![0.0; 16];
        for i in 0..4 {
            full[i * 4 + i] = diag[i];
        }
        for i in 0..3 {
            full[i * 4 + i + 1] = off[i];
            full[(i + 1) * 4 + i] = off[i];
        }
        let eigs = jacobi_eigenvalues(&mut full, 4);
        let smallest = tridiag_smallest(&diag, &off);
        assert!((smallest - eigs[0]).abs() < 1e-10);
    }

    #[test]
    fn lanczos_deflated_gap() {
        // Laplacian of the 4-cycle: eigenvalues 0, 2, 2, 4. Deflating the
        // constant vector must return 2.
        let n = 4;
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                y[i] = 2.0 * x[i] - x[(i + 1) % n] - x[(i + n - 1) % n];
            }
        };
        let kernel = vec![0.5; 4];
        let gap = lanczos_smallest_deflated(apply, &kernel, 50);
        assert!((gap - 2.0).abs() < 1e-9, "gap {gap}");
    }
}
