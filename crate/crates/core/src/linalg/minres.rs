//! Preconditioned MINRES for symmetric (possibly indefinite) systems.

use super::LinearOperator;

/// Symmetric positive definite preconditioner `z = M^{-1} r`.
pub trait Preconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub struct Identity;

impl Preconditioner for Identity {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

/// Pointwise `|diag|^{-1}` scaling.
pub struct Jacobi {
    pub inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self {
            inv_diag: diag.iter().map(|&d| if d != 0.0 { 1.0 / d.abs() } else { 1.0 }).collect(),
        }
    }
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * di;
        }
    }
}

#[derive(Debug, Clone)]
pub struct MinresOptions {
    /// Target for `||b - A x|| / ||b||`.
    pub rtol: f64,
    pub max_iter: usize,
    pub max_restarts: usize,
}

impl Default for MinresOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            max_iter: 5000,
            max_restarts: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MinresOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
    pub breakdown: Option<String>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// True relative residual `||b - A x|| / ||b||`.
pub fn relative_residual<A: LinearOperator + ?Sized>(a: &A, b: &[f64], x: &[f64]) -> f64 {
    let mut r = vec![0.0; b.len()];
    a.apply(x, &mut r);
    let num: f64 = r.iter().zip(b).map(|(ri, bi)| (bi - ri) * (bi - ri)).sum::<f64>().sqrt();
    let den = norm(b);
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Solves `A x = b` starting from `x`, restarting when the recurrence estimate
/// drifts from the true residual.
pub fn minres<A: LinearOperator + ?Sized, M: Preconditioner + ?Sized>(
    a: &A,
    m: &M,
    b: &[f64],
    x: &mut [f64],
    opts: &MinresOptions,
) -> MinresOutcome {
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return MinresOutcome {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
            breakdown: None,
        };
    }
    let mut total = 0;
    let mut rel = relative_residual(a, b, x);
    for _ in 0..=opts.max_restarts {
        if rel <= opts.rtol {
            break;
        }
        let budget = opts.max_iter.saturating_sub(total);
        if budget == 0 {
            break;
        }
        let (its, brk) = minres_cycle(a, m, b, x, opts.rtol, budget);
        total += its;
        rel = relative_residual(a, b, x);
        if let Some(reason) = brk {
            return MinresOutcome {
                iterations: total,
                relative_residual: rel,
                converged: rel <= opts.rtol,
                breakdown: Some(reason),
            };
        }
    }
    MinresOutcome {
        iterations: total,
        relative_residual: rel,
        converged: rel <= opts.rtol,
        breakdown: None,
    }
}

fn minres_cycle<A: LinearOperator + ?Sized, M: Preconditioner + ?Sized>(
    a: &A,
    m: &M,
    b: &[f64],
    x: &mut [f64],
    rtol: f64,
    max_iter: usize,
) -> (usize, Option<String>) {
    let n = b.len();
    let bnorm = norm(b);
    let mut r1 = vec![0.0; n];
    a.apply(x, &mut r1);
    for (ri, bi) in r1.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut y = vec![0.0; n];
    m.apply(&r1, &mut y);
    let beta1_sq = dot(&r1, &y);
    if beta1_sq < 0.0 {
        return (0, Some("indefinite preconditioner".into()));
    }
    let beta1 = beta1_sq.sqrt();
    if beta1 == 0.0 {
        return (0, None);
    }
    let r0norm = norm(&r1);
    let mut r2 = r1.clone();
    let mut v = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut w1 = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut oldb = 0.0;
    let mut beta = beta1;
    let mut dbar = 0.0;
    let mut epsln = 0.0;
    let mut phibar = beta1;
    let mut cs = -1.0;
    let mut sn = 0.0;
    let mut check_at = rtol * bnorm / r0norm.max(f64::MIN_POSITIVE);
    let mut itn = 0;
    while itn < max_iter {
        itn += 1;
        let s = 1.0 / beta;
        for (vi, yi) in v.iter_mut().zip(&y) {
            *vi = s * yi;
        }
        a.apply(&v, &mut y);
        if itn >= 2 {
            let f = beta / oldb;
            for (yi, ri) in y.iter_mut().zip(&r1) {
                *yi -= f * ri;
            }
        }
        let alfa = dot(&v, &y);
        let f = alfa / beta;
        for (yi, ri) in y.iter_mut().zip(&r2) {
            *yi -= f * ri;
        }
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        m.apply(&r2, &mut y);
        oldb = beta;
        let beta_sq = dot(&r2, &y);
        if beta_sq < 0.0 {
            return (itn, Some("indefinite preconditioner".into()));
        }
        beta = beta_sq.sqrt();
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;
        let denom = 1.0 / gamma;
        std::mem::swap(&mut w1, &mut w2);
        std::mem::swap(&mut w2, &mut w);
        for i in 0..n {
            w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) * denom;
            x[i] += phi * w[i];
        }
        if beta == 0.0 {
            break;
        }
        // the recurrence tracks the preconditioned residual; confirm with the true one
        if phibar / beta1 <= check_at {
            if relative_residual(a, b, x) <= rtol {
                break;
            }
            check_at *= 0.1;
        }
    }
    (itn, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sparse::CsrMatrix;

    #[test]
    fn solves_saddle_point_system() {
        // 1D Laplacian blocks coupled weakly, with the second block negated
        let n = 40;
        let mut t = Vec::new();
        for i in 0..n {
            let sign = if i < n / 2 { 1.0 } else { -1.0 };
            t.push((i, i, sign * 2.5));
            if i + 1 < n && i + 1 != n / 2 {
                t.push((i, i + 1, -sign));
                t.push((i + 1, i, -sign));
            }
        }
        for i in 0..n / 2 {
            t.push((i, i + n / 2, 0.3));
            t.push((i + n / 2, i, 0.3));
        }
        let a = CsrMatrix::from_triplets(n, n, t);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let mut x = vec![0.0; n];
        let jac = Jacobi::from_diagonal(&a.diagonal());
        let out = minres(&a, &jac, &b, &mut x, &MinresOptions::default());
        assert!(out.converged, "{out:?}");
        assert!(relative_residual(&a, &b, &x) <= 1e-9);
    }
}
