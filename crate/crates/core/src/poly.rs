//! Lag-polynomial algebra for seasonal ARMA models.
//!
//! Polynomials follow the minus convention, `c(B) = 1 - c_1 B - ... - c_p B^p`,
//! and are stored in "full" form as the signed coefficient vector
//! `[1, -c_1, ..., -c_p]` so that products are plain convolutions.

use crate::error::{Error, Result};

/// Signed full form `[1, -c_1, ..., -c_p]` of minus-convention coefficients.
pub(crate) fn full_poly(coeffs: &[f64]) -> Vec<f64> {
    let mut full = Vec::with_capacity(coeffs.len() + 1);
    full.push(1.0);
    full.extend(coeffs.iter().map(|c| -c));
    full
}

/// Convolution of two signed polynomials.
pub(crate) fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Signed product `c(B) * C(B^s)` for minus-convention coefficient slices.
pub(crate) fn seasonal_product(nonseasonal: &[f64], seasonal: &[f64], season: usize) -> Vec<f64> {
    let a = full_poly(nonseasonal);
    let mut b = vec![0.0; seasonal.len() * season + 1];
    b[0] = 1.0;
    for (j, &c) in seasonal.iter().enumerate() {
        b[(j + 1) * season] = -c;
    }
    poly_mul(&a, &b)
}

/// Signed coefficients of `(1-B)^d (1-B^s)^D`.
pub(crate) fn difference_poly(d: usize, seasonal_d: usize, season: usize) -> Vec<f64> {
    let mut out = vec![1.0];
    for _ in 0..d {
        out = poly_mul(&out, &[1.0, -1.0]);
    }
    let mut seas = vec![0.0; season + 1];
    seas[0] = 1.0;
    seas[season] = -1.0;
    for _ in 0..seasonal_d {
        out = poly_mul(&out, &seas);
    }
    out
}

/// First `n` coefficients of `num(B) / den(B)` for signed polynomials with
/// unit constant terms: the psi-weight recursion.
pub(crate) fn expand_ratio(num: &[f64], den: &[f64], n: usize) -> Vec<f64> {
    debug_assert!((num[0] - 1.0).abs() < 1e-12 && (den[0] - 1.0).abs() < 1e-12);
    let mut psi = Vec::with_capacity(n);
    for j in 0..n {
        let mut val = if j < num.len() { num[j] } else { 0.0 };
        for i in 1..den.len().min(j + 1) {
            val -= den[i] * psi[j - i];
        }
        psi.push(val);
    }
    psi
}

/// Maps unconstrained reals to minus-convention AR coefficients whose
/// polynomial has all roots outside the unit circle.
///
/// Each input is squashed to a partial autocorrelation in (-1, 1) and the
/// Levinson recursion converts partials to coefficients; the map is a
/// bijection onto the stationarity region.
pub(crate) fn pacf_to_coeffs(x: &[f64]) -> Vec<f64> {
    let partials: Vec<f64> = x.iter().map(|&v| v / (1.0 + v * v).sqrt()).collect();
    let mut phi: Vec<f64> = Vec::with_capacity(x.len());
    for k in 0..partials.len() {
        let rk = partials[k];
        let prev = phi.clone();
        phi.push(0.0);
        for i in 0..k {
            phi[i] = prev[i] - rk * prev[k - 1 - i];
        }
        phi[k] = rk;
    }
    phi
}

/// Inverse of [`pacf_to_coeffs`]; non-stationary inputs have their partial
/// autocorrelations clamped just inside (-1, 1).
pub(crate) fn coeffs_to_pacf(coeffs: &[f64]) -> Vec<f64> {
    const CAP: f64 = 1.0 - 1e-8;
    let p = coeffs.len();
    let mut work = coeffs.to_vec();
    let mut partials = vec![0.0; p];
    for k in (0..p).rev() {
        let rk = work[k].clamp(-CAP, CAP);
        partials[k] = rk;
        if k > 0 {
            let denom = 1.0 - rk * rk;
            let cur = work.clone();
            for i in 0..k {
                work[i] = (cur[i] + rk * cur[k - 1 - i]) / denom;
            }
        }
    }
    partials
        .iter()
        .map(|&r| {
            let r = r.clamp(-CAP, CAP);
            r / (1.0 - r * r).sqrt()
        })
        .collect()
}

/// Whether the minus-convention polynomial has all roots strictly outside
/// the unit circle, with a `1e-8` margin.
///
/// Uses the Schur-Cohn criterion via the inverse Levinson recursion: the
/// polynomial is tested at radius `1/(1 - 1e-8)` by inflating `c_k` to
/// `c_k / (1 - 1e-8)^k`, and all roots lie outside that radius iff every
/// reflection coefficient of the scaled polynomial is strictly inside
/// (-1, 1). This is exact and division-free of any iterative eigensolver;
/// QR iteration on companion matrices of `x^n - c` (pure seasonal factors)
/// can cycle without converging, which rules that route out here.
pub(crate) fn roots_outside_unit_circle(coeffs: &[f64]) -> Result<bool> {
    if coeffs.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParam("non-finite polynomial coefficient".into()));
    }
    let mut p = coeffs.len();
    while p > 0 && coeffs[p - 1] == 0.0 {
        p -= 1;
    }
    if p == 0 {
        return Ok(true);
    }
    let rho = 1.0 - 1e-8;
    let mut work = Vec::with_capacity(p);
    let mut scale = 1.0;
    for &c in &coeffs[..p] {
        scale /= rho;
        work.push(c * scale);
    }
    for k in (0..p).rev() {
        let rk = work[k];
        if !rk.is_finite() || rk.abs() >= 1.0 {
            return Ok(false);
        }
        if k > 0 {
            let denom = 1.0 - rk * rk;
            let cur = work.clone();
            for i in 0..k {
                work[i] = (cur[i] + rk * cur[k - 1 - i]) / denom;
            }
        }
    }
    Ok(true)
}
