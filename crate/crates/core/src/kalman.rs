//! Exact Gaussian likelihood for ARMA disturbances via the Kalman filter.
//!
//! Uses the compact state-space form with state dimension
//! `r = max(p, q + 1)`: transition matrix with the AR coefficients in the
//! first column and an identity super-diagonal, disturbance loading
//! `(1, -theta_1, ..., -theta_q, 0, ...)`, observation picking the first
//! state element. Innovation variance is concentrated out, so the filter
//! runs with unit variance.
//!
//! The prediction variances `F_t` and gains `K_t` depend only on the
//! parameters, never on the data, so one pass can whiten many series at
//! once under the same model — which is what the GLS regression step needs.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub(crate) struct ArmaFilter {
    /// AR coefficients padded to the state dimension.
    phi: Vec<f64>,
    /// Disturbance loading `(1, -theta_1, ..., 0)`.
    rvec: Vec<f64>,
    dim: usize,
}

pub(crate) struct Whitened {
    /// One-step prediction errors per input column.
    pub innovations: Vec<Vec<f64>>,
    /// Prediction variances under unit innovation variance.
    pub f: Vec<f64>,
    pub log_f_sum: f64,
}

impl ArmaFilter {
    /// Builds a filter from minus-convention AR and MA coefficient slices.
    pub fn new(ar: &[f64], ma: &[f64]) -> Self {
        let dim = ar.len().max(ma.len() + 1).max(1);
        let mut phi = vec![0.0; dim];
        phi[..ar.len()].copy_from_slice(ar);
        let mut rvec = vec![0.0; dim];
        rvec[0] = 1.0;
        for (j, &t) in ma.iter().enumerate() {
            rvec[j + 1] = -t;
        }
        ArmaFilter { phi, rvec, dim }
    }

    pub fn state_dim(&self) -> usize {
        self.dim
    }

    /// `T a` using the companion structure, O(r).
    fn transition(&self, a: &[f64], out: &mut [f64]) {
        let r = self.dim;
        for i in 0..r {
            let next = if i + 1 < r { a[i + 1] } else { 0.0 };
            out[i] = self.phi[i] * a[0] + next;
        }
    }

    /// `T P T'` using the companion structure, O(r^2).
    fn transition_cov(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        let r = self.dim;
        let mut m = DMatrix::zeros(r, r); // m = T P
        for i in 0..r {
            for j in 0..r {
                let below = if i + 1 < r { p[(i + 1, j)] } else { 0.0 };
                m[(i, j)] = self.phi[i] * p[(0, j)] + below;
            }
        }
        let mut out = DMatrix::zeros(r, r); // out = m T'
        for i in 0..r {
            for j in 0..r {
                let right = if j + 1 < r { m[(i, j + 1)] } else { 0.0 };
                out[(i, j)] = self.phi[j] * m[(i, 0)] + right;
            }
        }
        out
    }

    fn disturbance_cov(&self) -> DMatrix<f64> {
        let r = self.dim;
        let mut q = DMatrix::zeros(r, r);
        for i in 0..r {
            for j in 0..r {
                q[(i, j)] = self.rvec[i] * self.rvec[j];
            }
        }
        q
    }

    /// Unconditional state covariance: the fixed point of
    /// `P = T P T' + R R'`, found by the doubling iteration.
    pub fn stationary_cov(&self) -> Result<DMatrix<f64>> {
        let mut s = self.disturbance_cov();
        let r = self.dim;
        let mut a = DMatrix::zeros(r, r);
        for i in 0..r {
            a[(i, 0)] = self.phi[i];
            if i + 1 < r {
                a[(i, i + 1)] = 1.0;
            }
        }
        for _ in 0..60 {
            let grown = &s + &a * &s * a.transpose();
            let delta = (&grown - &s).amax();
            let scale = s.amax().max(1.0);
            s = grown;
            if delta < 1e-12 * scale {
                return Ok(s);
            }
            a = &a * &a;
        }
        Err(Error::IllConditioned(
            "state covariance iteration did not settle (roots too close to the unit circle)"
                .into(),
        ))
    }

    /// Runs the filter over every column at once, sharing gains.
    ///
    /// All columns must have equal nonzero length. Returns prediction
    /// errors, variances, and the filtered state after the last update for
    /// each column.
    fn filter(&self, columns: &[&[f64]]) -> Result<(Whitened, Vec<Vec<f64>>)> {
        let n = match columns.first() {
            Some(c) if !c.is_empty() => c.len(),
            _ => return Err(Error::SeriesTooShort { needed: 1, got: 0 }),
        };
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::SpanMismatch("whitening columns differ in length".into()));
        }
        let r = self.dim;
        let q = self.disturbance_cov();
        let mut p = self.stationary_cov()?;
        let mut states = vec![vec![0.0; r]; columns.len()];
        let mut innovations = vec![Vec::with_capacity(n); columns.len()];
        let mut f = Vec::with_capacity(n);
        let mut log_f_sum = 0.0;
        let mut gain = vec![0.0; r];
        let mut f_t = 0.0;
        let mut steady = false;
        let mut scratch = vec![0.0; r];

        for t in 0..n {
            if !steady {
                let f_new = p[(0, 0)];
                if !(f_new.is_finite() && f_new > 1e-12) {
                    return Err(Error::IllConditioned(format!(
                        "prediction variance {f_new:.3e} at step {t}"
                    )));
                }
                f_t = f_new;
                for i in 0..r {
                    gain[i] = p[(i, 0)] / f_t;
                }
            }
            f.push(f_t);
            log_f_sum += f_t.ln();

            for (j, col) in columns.iter().enumerate() {
                let a = &mut states[j];
                let v = col[t] - a[0];
                innovations[j].push(v);
                for i in 0..r {
                    a[i] += gain[i] * v;
                }
            }

            if t + 1 == n {
                break;
            }
            for a in states.iter_mut() {
                self.transition(a, &mut scratch);
                a.copy_from_slice(&scratch);
            }
            if !steady {
                // Measurement update of P, then transition.
                let mut post = p.clone();
                for i in 0..r {
                    for j in 0..r {
                        post[(i, j)] -= gain[i] * p[(0, j)];
                    }
                }
                let mut next = self.transition_cov(&post) + &q;
                // Keep P symmetric against roundoff drift.
                for i in 0..r {
                    for j in 0..i {
                        let avg = 0.5 * (next[(i, j)] + next[(j, i)]);
                        next[(i, j)] = avg;
                        next[(j, i)] = avg;
                    }
                }
                // Freeze the gain only once the whole covariance has
                // settled. F_t alone can sit flat for a full season in
                // seasonal models while P is still evolving, so a
                // variance-based test would stop the recursion too early.
                if (&next - &p).amax() <= 1e-13 * next.amax().max(1.0) {
                    steady = true;
                }
                p = next;
            }
        }
        Ok((
            Whitened {
                innovations,
                f,
                log_f_sum,
            },
            states,
        ))
    }

    /// Prediction errors and variances for each column under this model.
    pub fn whiten(&self, columns: &[&[f64]]) -> Result<Whitened> {
        Ok(self.filter(columns)?.0)
    }

    /// Filtered state after the last observation of `y`; powers of the
    /// transition applied to it give mean forecasts.
    pub fn filtered_state(&self, y: &[f64]) -> Result<Vec<f64>> {
        let (_, mut states) = self.filter(&[y])?;
        Ok(states.pop().expect("one column"))
    }

    /// Mean forecast `j` steps past the filtered state (`j >= 1`).
    pub fn forecast_from_state(&self, state: &[f64], horizon: usize) -> Vec<f64> {
        let mut a = state.to_vec();
        let mut scratch = vec![0.0; self.dim];
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            self.transition(&a, &mut scratch);
            a.copy_from_slice(&scratch);
            out.push(a[0]);
        }
        out
    }
}

/// Gaussian log-likelihood with the innovation variance concentrated out:
/// the filter runs at unit variance and the maximizing variance is
/// `sum(v^2/F)/n`.
pub(crate) fn concentrated_loglik(innovations: &[f64], f: &[f64], log_f_sum: f64) -> (f64, f64) {
    let n = innovations.len() as f64;
    let ss: f64 = innovations
        .iter()
        .zip(f)
        .map(|(v, ft)| v * v / ft)
        .sum();
    let sigma2 = ss / n;
    let ll = -0.5 * n * (2.0 * std::f64::consts::PI).ln()
        - 0.5 * n * sigma2.ln()
        - 0.5 * log_f_sum
        - 0.5 * n;
    (ll, sigma2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{expand_ratio, full_poly};
    use approx::assert_abs_diff_eq;

    /// Brute-force Gaussian log-density from the full Toeplitz covariance,
    /// autocovariances obtained by summing psi-weight products.
    fn mvn_loglik(y: &[f64], ar: &[f64], ma: &[f64], sigma2: f64) -> f64 {
        let n = y.len();
        let psi = expand_ratio(&full_poly(ma), &full_poly(ar), 2000);
        let gamma: Vec<f64> = (0..n)
            .map(|k| {
                sigma2
                    * (0..2000 - k)
                        .map(|j| psi[j] * psi[j + k])
                        .sum::<f64>()
            })
            .collect();
        let mut cov = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                cov[(i, j)] = gamma[(i as isize - j as isize).unsigned_abs()];
            }
        }
        let chol = cov.cholesky().expect("positive definite");
        let ld: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let yv = nalgebra::DVector::from_column_slice(y);
        let alpha = chol.solve(&yv);
        -0.5 * (n as f64) * (2.0 * std::f64::consts::PI).ln() - 0.5 * ld - 0.5 * yv.dot(&alpha)
    }

    #[test]
    fn white_noise_filter_is_identity() {
        let filter = ArmaFilter::new(&[], &[]);
        assert_eq!(filter.state_dim(), 1);
        let y = vec![1.0, -1.0, 2.0];
        let w = filter.whiten(&[&y]).unwrap();
        assert_eq!(w.innovations[0], y);
        assert!(w.f.iter().all(|&f| (f - 1.0).abs() < 1e-14));
        let (ll, sigma2) = concentrated_loglik(&w.innovations[0], &w.f, w.log_f_sum);
        assert_abs_diff_eq!(sigma2, 2.0, epsilon = 1e-14);
        let want = -1.5 * (2.0 * std::f64::consts::PI).ln() - 1.5 * 2.0f64.ln() - 1.5;
        assert_abs_diff_eq!(ll, want, epsilon = 1e-12);
    }

    #[test]
    fn ar1_filter_matches_closed_form() {
        let phi = 0.7;
        let filter = ArmaFilter::new(&[phi], &[]);
        let y = vec![0.3, -0.5, 1.1, 0.2, -0.9];
        let w = filter.whiten(&[&y]).unwrap();
        assert_abs_diff_eq!(w.f[0], 1.0 / (1.0 - phi * phi), epsilon = 1e-10);
        for t in 1..y.len() {
            assert_abs_diff_eq!(w.f[t], 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(w.innovations[0][t], y[t] - phi * y[t - 1], epsilon = 1e-10);
        }
    }

    #[test]
    fn ma1_stationary_variance() {
        let theta = 0.4;
        let filter = ArmaFilter::new(&[], &[theta]);
        let p = filter.stationary_cov().unwrap();
        assert_abs_diff_eq!(p[(0, 0)], 1.0 + theta * theta, epsilon = 1e-10);
    }

    #[test]
    fn likelihood_matches_brute_force_gaussian() {
        let cases: Vec<(Vec<f64>, Vec<f64>)> = vec![
            (vec![0.5], vec![]),
            (vec![], vec![0.4]),
            (vec![0.6], vec![-0.3]),
            (vec![0.4, 0.2], vec![0.25]),
        ];
        let y = vec![0.2, -0.1, 0.5, 0.4, -0.7, 0.3, 0.0, -0.2, 0.6, -0.4];
        for (ar, ma) in cases {
            let filter = ArmaFilter::new(&ar, &ma);
            let w = filter.whiten(&[&y]).unwrap();
            let (ll, sigma2) = concentrated_loglik(&w.innovations[0], &w.f, w.log_f_sum);
            let want = mvn_loglik(&y, &ar, &ma, sigma2);
            assert_abs_diff_eq!(ll, want, epsilon = 1e-8);
        }
    }

    #[test]
    fn shared_gains_whiten_multiple_columns_consistently() {
        let filter = ArmaFilter::new(&[0.5], &[0.2]);
        let a = vec![1.0, 0.5, -0.3, 0.8, 0.1];
        let b = vec![0.0, 1.0, 1.0, -1.0, 0.5];
        let joint = filter.whiten(&[&a, &b]).unwrap();
        let solo_a = filter.whiten(&[&a]).unwrap();
        let solo_b = filter.whiten(&[&b]).unwrap();
        for t in 0..a.len() {
            assert_abs_diff_eq!(joint.innovations[0][t], solo_a.innovations[0][t], epsilon = 1e-14);
            assert_abs_diff_eq!(joint.innovations[1][t], solo_b.innovations[0][t], epsilon = 1e-14);
            assert_abs_diff_eq!(joint.f[t], solo_a.f[t], epsilon = 1e-14);
        }
    }

    #[test]
    fn whitening_is_linear_in_the_data() {
        let filter = ArmaFilter::new(&[0.3, 0.1], &[0.4]);
        let a = vec![1.0, 0.5, -0.3, 0.8, 0.1, -0.6];
        let b = vec![0.0, 1.0, 1.0, -1.0, 0.5, 0.2];
        let combo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x - 3.0 * y).collect();
        let w = filter.whiten(&[&a, &b, &combo]).unwrap();
        for t in 0..a.len() {
            let want = 2.0 * w.innovations[0][t] - 3.0 * w.innovations[1][t];
            assert_abs_diff_eq!(w.innovations[2][t], want, epsilon = 1e-12);
        }
    }

    #[test]
    fn forecast_decays_like_ar1() {
        let phi = 0.6;
        let filter = ArmaFilter::new(&[phi], &[]);
        let y = vec![0.1, 0.4, -0.2, 1.0];
        let state = filter.filtered_state(&y).unwrap();
        // For a pure AR(1) the filtered state is the last observation.
        assert_abs_diff_eq!(state[0], 1.0, epsilon = 1e-10);
        let f = filter.forecast_from_state(&state, 3);
        assert_abs_diff_eq!(f[0], phi, epsilon = 1e-10);
        assert_abs_diff_eq!(f[1], phi * phi, epsilon = 1e-10);
        assert_abs_diff_eq!(f[2], phi * phi * phi, epsilon = 1e-10);
    }
}
