//! Quasi-Newton minimization with numerical gradients.
//!
//! BFGS with Armijo backtracking, taking gradients by central differences.
//! Objectives may return non-finite values for infeasible points; such
//! points are rejected during the line search.

pub(crate) struct BfgsOptions {
    pub max_iters: usize,
    /// Stop when the gradient max-norm drops below this.
    pub grad_tol: f64,
    /// Stop when the relative objective decrease drops below this.
    pub f_tol: f64,
    /// Relative step for central differences.
    pub diff_step: f64,
    /// Max-norm cap on a single step. Keeps early steps from jumping onto
    /// the flat tails of squashing reparameterizations, where the gradient
    /// vanishes far from any optimum.
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            max_iters: 500,
            grad_tol: 1e-6,
            f_tol: 1e-10,
            diff_step: 1e-5,
            max_step: 2.0,
        }
    }
}

pub(crate) struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub converged: bool,
}

fn gradient(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], rel_step: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = rel_step * (1.0 + x[i].abs());
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        g[i] = if fp.is_finite() && fm.is_finite() {
            (fp - fm) / (2.0 * h)
        } else {
            0.0
        };
    }
    g
}

/// Minimizes `f` starting from `x0`.
pub(crate) fn minimize(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    opts: &BfgsOptions,
) -> OptimResult {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    if n == 0 || !fx.is_finite() {
        return OptimResult {
            x,
            f: fx,
            grad_norm: f64::NAN,
            converged: n == 0 && fx.is_finite(),
        };
    }
    let mut g = gradient(f, &x, opts.diff_step);
    // Inverse Hessian approximation, dense row-major.
    let mut h_inv = identity(n);
    let mut first_update = true;

    for _ in 0..opts.max_iters {
        let gnorm = max_norm(&g);
        if gnorm < opts.grad_tol {
            return OptimResult {
                x,
                f: fx,
                grad_norm: gnorm,
                converged: true,
            };
        }

        let mut dir = neg_mat_vec(&h_inv, &g);
        let mut slope = dot(&dir, &g);
        if !slope.is_finite() || slope >= 0.0 {
            // Reset to steepest descent when the approximation degenerates.
            h_inv = identity(n);
            first_update = true;
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&dir, &g);
        }
        let dir_norm = max_norm(&dir);
        if dir_norm > opts.max_step {
            let scale = opts.max_step / dir_norm;
            for d in dir.iter_mut() {
                *d *= scale;
            }
            slope *= scale;
        }

        // Armijo backtracking.
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            let fc = f(&cand);
            if fc.is_finite() && fc <= fx + 1e-4 * step * slope {
                accepted = Some((cand, fc));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            let gnorm = max_norm(&g);
            return OptimResult {
                x,
                f: fx,
                grad_norm: gnorm,
                converged: gnorm < 10.0 * opts.grad_tol,
            };
        };

        let g_new = gradient(f, &x_new, opts.diff_step);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            if first_update {
                // Scale the initial inverse Hessian to the problem.
                let yy = dot(&y, &y);
                if yy > 0.0 {
                    let scale = sy / yy;
                    for (i, v) in h_inv.iter_mut().enumerate() {
                        *v = if i % (n + 1) == 0 { scale } else { 0.0 };
                    }
                }
                first_update = false;
            }
            bfgs_update(&mut h_inv, &s, &y, sy, n);
        }

        let rel_drop = (fx - f_new).abs() / fx.abs().max(1.0);
        let done = rel_drop < opts.f_tol;
        x = x_new;
        fx = f_new;
        g = g_new;
        if done {
            return OptimResult {
                x,
                f: fx,
                grad_norm: max_norm(&g),
                converged: true,
            };
        }
    }
    let gnorm = max_norm(&g);
    OptimResult {
        x,
        f: fx,
        grad_norm: gnorm,
        converged: false,
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

fn neg_mat_vec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|i| -(0..n).map(|j| m[i * n + j] * v[j]).sum::<f64>())
        .collect()
}

/// Sherman-Morrison form of the BFGS inverse-Hessian update.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64, n: usize) {
    let rho = 1.0 / sy;
    // hy = H y
    let hy: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum::<f64>())
        .collect();
    let yhy = dot(y, &hy);
    let coeff = (1.0 + rho * yhy) * rho;
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] +=
                coeff * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn minimizes_quadratic() {
        let mut f = |x: &[f64]| (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2);
        let res = minimize(&mut f, &[0.0, 0.0], &BfgsOptions::default());
        assert!(res.converged);
        assert_abs_diff_eq!(res.x[0], 3.0, epsilon = 1e-5);
        assert_abs_diff_eq!(res.x[1], -1.0, epsilon = 1e-5);
    }

    #[test]
    fn minimizes_rosenbrock() {
        let mut f = |x: &[f64]| {
            (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
        };
        let res = minimize(&mut f, &[-1.2, 1.0], &BfgsOptions::default());
        assert!(res.converged);
        assert_abs_diff_eq!(res.x[0], 1.0, epsilon = 1e-4);
        assert_abs_diff_eq!(res.x[1], 1.0, epsilon = 1e-4);
    }

    #[test]
    fn tolerates_infeasible_regions() {
        // Infinite outside the unit box; minimum at the origin.
        let mut f = |x: &[f64]| {
            if x.iter().any(|v| v.abs() > 1.0) {
                f64::INFINITY
            } else {
                x.iter().map(|v| v * v).sum()
            }
        };
        let res = minimize(&mut f, &[0.9, -0.9], &BfgsOptions::default());
        assert!(res.converged);
        assert!(res.x.iter().all(|v| v.abs() < 1e-4));
    }

    #[test]
    fn empty_problem_is_trivially_converged() {
        let mut f = |_: &[f64]| 7.0;
        let res = minimize(&mut f, &[], &BfgsOptions::default());
        assert!(res.converged);
        assert_eq!(res.f, 7.0);
    }
}
