/// Result of a preconditioned conjugate-gradient run.
#[derive(Clone, Copy, Debug)]
pub struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Preconditioned conjugate gradients for an SPD operator.
///
/// `apply(x, y)` writes `A x` into `y`; `precond(r, z)` writes `M^{-1} r`.
/// `x` holds the initial guess and receives the solution. Convergence is
/// declared when `|b - A x| <= tol * |b|`.
pub fn pcg<A, M>(
    apply: A,
    precond: M,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> CgOutcome
where
    A: Fn(&[f64], &mut [f64]),
    M: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let norm_b = dot(b, b).sqrt();
    if norm_b == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return CgOutcome {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut res = dot(&r, &r).sqrt() / norm_b;
    let mut it = 0;
    while res > tol && it < max_iter {
        apply(&p, &mut q);
        let alpha = rz / dot(&p, &q);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        it += 1;
        res = dot(&r, &r).sqrt() / norm_b;
        if res <= tol {
            break;
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    // Recompute the true residual to guard against drift.
    apply(x, &mut q);
    let true_res = b
        .iter()
        .zip(&q)
        .map(|(b, q)| (b - q) * (b - q))
        .sum::<f64>()
        .sqrt()
        / norm_b;
    CgOutcome {
        iterations: it,
        relative_residual: true_res,
        converged: true_res <= tol * 10.0,
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
