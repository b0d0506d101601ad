//! Dense linear algebra used by path tracking and the spectral analysis.
//!
//! Symmetric spectra come from a cyclic two-sided Jacobi iteration. Spectra of
//! Gram matrices `A A^T` are computed without forming the product: a QR
//! factorisation of `A^T` is followed by one-sided (Hestenes) Jacobi on the
//! triangular factor, so eigenvalues well below `eps * lambda_max` are still
//! resolved.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi rotations.
///
/// Only the upper triangle is read.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Shape(format!("{}x{} matrix is not square", n, a.ncols())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix passed to the eigensolver".into()));
    }
    // row-major working copy, symmetrised from the upper triangle
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            m[i * n + j] = a[(i, j)];
            m[j * n + i] = a[(i, j)];
        }
    }
    let scale: f64 = m.iter().map(|v| v * v).sum::<f64>().sqrt();
    if scale == 0.0 {
        return Ok(vec![0.0; n]);
    }

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= f64::EPSILON * 1e-2 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (m[p * n + p], m[q * n + q]);
                // skip rotations that cannot change either diagonal entry
                if apq.abs() < f64::EPSILON * 1e-3 * (app.abs().min(aqq.abs())) {
                    m[p * n + q] = 0.0;
                    m[q * n + p] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    let np = c * akp - s * akq;
                    let nq = s * akp + c * akq;
                    m[k * n + p] = np;
                    m[p * n + k] = np;
                    m[k * n + q] = nq;
                    m[q * n + k] = nq;
                }
                m[p * n + p] = app - t * apq;
                m[q * n + q] = aqq + t * apq;
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Singular values of the columns of `cols` (each inner vector is one column),
/// by one-sided Jacobi orthogonalisation. Returned descending.
fn hestenes_singular_values(mut cols: Vec<Vec<f64>>) -> Vec<f64> {
    let n = cols.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..n {
            for j in i + 1..n {
                let alpha = dot(&cols[i], &cols[i]);
                let beta = dot(&cols[j], &cols[j]);
                let gamma = dot(&cols[i], &cols[j]);
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = cols.split_at_mut(j);
                for (a, b) in lo[i].iter_mut().zip(hi[0].iter_mut()) {
                    let (x, y) = (*a, *b);
                    *a = c * x - s * y;
                    *b = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Eigenvalues of `A A^T` (size `nrows(A)`), ascending, without forming the product.
pub fn gram_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix passed to the Gram eigensolver".into()));
    }
    let n = a.nrows();
    // A^T = Q R, so A A^T = R^T R and the columns of R carry the spectrum.
    let r = a.transpose().qr().r();
    let cols: Vec<Vec<f64>> = (0..n).map(|j| r.column(j).iter().copied().collect()).collect();
    let mut ev: Vec<f64> = hestenes_singular_values(cols).into_iter().map(|s| s * s).collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Least-norm solution of `m x = r` through the SVD pseudo-inverse, with
/// singular values below `rtol * sigma_max` treated as zero.
pub fn pinv_solve(m: &DMatrix<f64>, r: &[f64], rtol: f64) -> Result<Vec<f64>> {
    if m.nrows() != r.len() {
        return Err(Error::Shape(format!("{} rows but right-hand side of length {}", m.nrows(), r.len())));
    }
    if m.iter().any(|v| !v.is_finite()) || r.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pseudo-inverse system".into()));
    }
    let svd = m.clone().svd(true, true);
    let (u, vt) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    if !(smax > 0.0) {
        return Err(Error::SingularPath("all singular values vanish".into()));
    }
    let cutoff = rtol * smax;
    let mut x = vec![0.0; m.ncols()];
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= cutoff {
            continue;
        }
        let coef = u.column(k).iter().zip(r).map(|(a, b)| a * b).sum::<f64>() / s;
        for (xi, vi) in x.iter_mut().zip(vt.row(k).iter()) {
            *xi += coef * vi;
        }
    }
    Ok(x)
}
