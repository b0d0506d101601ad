//! Spectra of the linearised operator `D`, the tangent kernel `S S^T` and the
//! gradient-flow kernel `K = D S S^T D^T` on 1D grids.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::net::{self, init_xavier, NetworkParams};
use crate::points::Points;
use crate::problems::{CollocationSet, Homotopy};

/// Interior nodes `lo + i (hi - lo) / (n + 1)`, `i = 1..=n`, of a Dirichlet grid.
pub fn dirichlet_nodes(n: usize, lo: f64, hi: f64) -> Points {
    let h = (hi - lo) / (n + 1) as f64;
    Points::from_scalars(&(1..=n).map(|i| lo + i as f64 * h).collect::<Vec<_>>())
}

/// `tridiag(1, -2, 1) / h^2`.
pub fn dirichlet_laplacian(n: usize, h: f64) -> DMatrix<f64> {
    let c = 1.0 / (h * h);
    DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => -2.0 * c,
        1 => c,
        _ => 0.0,
    })
}

/// Eigenvalues of `-tridiag(1, -2, 1) / h^2` with `h = 1 / (n + 1)`, ascending:
/// `(4 / h^2) sin^2(j pi / (2 (n + 1)))`.
pub fn laplacian_eigenvalues(n: usize) -> Vec<f64> {
    let m = (n + 1) as f64;
    (1..=n)
        .map(|j| 4.0 * m * m * (j as f64 * std::f64::consts::PI / (2.0 * m)).sin().powi(2))
        .collect()
}

/// The largest eigenvalue of `-eps^2 Delta` in the normalisation
/// `4 eps^2 n^2 cos^2(pi / (2n + 1))`, reported next to ours for comparison.
pub fn largest_eigenvalue_alt_normalisation(n: usize, eps: f64) -> f64 {
    let n = n as f64;
    4.0 * eps * eps * n * n * (std::f64::consts::PI / (2.0 * n + 1.0)).cos().powi(2)
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Precondition(format!("the stencil needs n >= 2, got {n}")));
    }
    Ok(())
}

/// `-eps^2 Delta_h + diag(3 u_i^2 - 1)` with `h = 1 / (n + 1)`.
pub fn assemble_d_ac1d(u: &[f64], eps: f64) -> Result<DMatrix<f64>> {
    assemble_d_ac1d_with_h(u, eps, 1.0 / (u.len() + 1) as f64)
}

fn assemble_d_ac1d_with_h(u: &[f64], eps: f64, h: f64) -> Result<DMatrix<f64>> {
    check_n(u.len())?;
    let mut d = dirichlet_laplacian(u.len(), h) * -(eps * eps);
    for (i, ui) in u.iter().enumerate() {
        d[(i, i)] += 3.0 * ui * ui - 1.0;
    }
    Ok(d)
}

/// `-eps^2 Delta_h + I / d` with `h = 1 / (n + 1)`.
pub fn assemble_d_helmholtz(eps: f64, d: usize, n: usize) -> Result<DMatrix<f64>> {
    assemble_d_helmholtz_with_h(eps, d, n, 1.0 / (n + 1) as f64)
}

fn assemble_d_helmholtz_with_h(eps: f64, d: usize, n: usize, h: f64) -> Result<DMatrix<f64>> {
    check_n(n)?;
    if d == 0 {
        return Err(Error::InvalidDimension("helmholtz needs d >= 1".into()));
    }
    let mut m = dirichlet_laplacian(n, h) * -(eps * eps);
    for i in 0..n {
        m[(i, i)] += 1.0 / d as f64;
    }
    Ok(m)
}

/// The regression family has `H_u = I`.
pub fn assemble_d_highfreq(n: usize) -> Result<DMatrix<f64>> {
    check_n(n)?;
    Ok(DMatrix::identity(n, n))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelReport {
    pub eps: f64,
    pub n: usize,
    pub p: usize,
    #[serde(rename = "lam_min_SS")]
    pub lam_min_ss: f64,
    #[serde(rename = "lam_min_DD")]
    pub lam_min_dd: f64,
    #[serde(rename = "lam_max_DD")]
    pub lam_max_dd: f64,
    #[serde(rename = "lam_min_K")]
    pub lam_min_k: f64,
    #[serde(rename = "lam_max_K")]
    pub lam_max_k: f64,
    #[serde(rename = "lam_max_D")]
    pub lam_max_d: f64,
    pub sandwich_ok: bool,
}

impl KernelReport {
    /// Column order of [`write_kernel_csv`].
    pub const CSV_HEADER: [&'static str; 7] =
        ["eps", "lam_min_SS", "lam_min_DD", "lam_max_DD", "lam_min_K", "lam_max_D", "sandwich_ok"];

    /// `lam_min_SS lam_min_DD <= lam_min_K <= lam_min_SS lam_max_DD`, each side
    /// with slack `1e-9 |bound| + 1e-12 lam_max_K` for the eigensolver.
    pub fn sandwich_holds(&self) -> bool {
        let lo = self.lam_min_ss * self.lam_min_dd;
        let hi = self.lam_min_ss * self.lam_max_dd;
        let floor = 1e-12 * self.lam_max_k;
        self.lam_min_k >= lo - (1e-9 * lo.abs() + floor) && self.lam_min_k <= hi + (1e-9 * hi.abs() + floor)
    }
}

pub fn write_kernel_csv<W: std::io::Write>(out: W, rows: &[KernelReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(KernelReport::CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.eps.to_string(),
            r.lam_min_ss.to_string(),
            r.lam_min_dd.to_string(),
            r.lam_max_dd.to_string(),
            r.lam_min_k.to_string(),
            r.lam_max_d.to_string(),
            r.sandwich_ok.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Spacing of a uniform 1D grid, or an error if the points are not one.
fn uniform_spacing(points: &Points) -> Result<f64> {
    if points.dim() != 1 {
        return Err(Error::Precondition("kernel spectra need a 1D grid".into()));
    }
    let x = points.as_slice();
    check_n(x.len())?;
    let h = x[1] - x[0];
    if !(h > 0.0) || x.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h) {
        return Err(Error::Precondition("collocation points are not a uniform increasing grid".into()));
    }
    Ok(h)
}

/// `D` for a registered 1D problem at the network's current field.
pub fn assemble_d(problem: &dyn Homotopy, u: &[f64], eps: f64, h: f64) -> Result<DMatrix<f64>> {
    match (problem.id(), problem.dim()) {
        ("ac1d", 1) => assemble_d_ac1d_with_h(u, eps, h),
        ("helmholtz", 1) => assemble_d_helmholtz_with_h(eps, 1, u.len(), h),
        ("highfreq", 1) => assemble_d_highfreq(u.len()),
        (id, d) => Err(Error::Precondition(format!("no stencil for problem `{id}` in {d} dimensions"))),
    }
}

/// Spectral quantities of `S S^T`, `D D^T` and `K` at the interior grid of `colloc`.
///
/// Eigenvalues of the Gram matrices are taken from singular values of `S`
/// and `D S`, so `K` is never formed.
pub fn kernel_spectrum(
    problem: &dyn Homotopy,
    params: &NetworkParams,
    colloc: &CollocationSet,
    eps: f64,
) -> Result<KernelReport> {
    let h = uniform_spacing(&colloc.interior)?;
    let batch = net::param_jacobians(params, &colloc.interior)?;
    let s = batch.jac_u.unwrap();
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("parameter Jacobian".into()));
    }
    let d = assemble_d(problem, &batch.u, eps, h)?;

    let ss = linalg::gram_eigenvalues(&s)?;
    let dd = linalg::gram_eigenvalues(&d)?;
    let k = linalg::gram_eigenvalues(&(&d * &s))?;
    let dspec = linalg::sym_eigenvalues(&d)?;
    let mut report = KernelReport {
        eps,
        n: s.nrows(),
        p: s.ncols(),
        lam_min_ss: ss[0],
        lam_min_dd: dd[0],
        lam_max_dd: *dd.last().unwrap(),
        lam_min_k: k[0],
        lam_max_k: *k.last().unwrap(),
        lam_max_d: *dspec.last().unwrap(),
        sandwich_ok: false,
    };
    report.sandwich_ok = report.sandwich_holds();
    Ok(report)
}

/// Outcome of the tangent-kernel positivity check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    /// `lambda_min(S S^T)` of every trial.
    pub lam_min: Vec<f64>,
    /// `lambda_max(S S^T)` of every trial.
    pub lam_max: Vec<f64>,
    pub min_lam_min: f64,
    pub passed: bool,
}

/// `n` distinct points drawn uniformly from `[-1, 1]^d`.
pub fn random_distinct_points(d: usize, n: usize, seed: u64) -> Points {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    while rows.len() < n {
        let r: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        if !rows.contains(&r) {
            rows.push(r);
        }
    }
    Points::from_rows(&rows).expect("rows share a dimension")
}

/// Minimum over `trials` Xavier draws (seeds `seed..seed + trials`) of
/// `lambda_min(S S^T)` at the given points. Passes when every trial has
/// `lambda_min > 1e-12 lambda_max`.
///
/// The points must be pairwise distinct; with a bias in the first layer this
/// is the non-parallel condition on the augmented inputs `(x, 1)`.
pub fn ss_positivity_at(dims: &[usize], points: &Points, trials: usize, seed: u64) -> Result<PositivityReport> {
    for i in 0..points.len() {
        for j in 0..i {
            if points.row(i) == points.row(j) {
                return Err(Error::Precondition(format!("points {j} and {i} coincide")));
            }
        }
    }
    if trials == 0 {
        return Err(Error::Precondition("at least one trial is needed".into()));
    }
    let mut lam_min = Vec::with_capacity(trials);
    let mut lam_max = Vec::with_capacity(trials);
    for t in 0..trials {
        let params = init_xavier(dims, seed + t as u64)?;
        let s = net::param_jacobians(&params, points)?.jac_u.unwrap();
        let ev = linalg::gram_eigenvalues(&s)?;
        lam_min.push(ev[0]);
        lam_max.push(*ev.last().unwrap());
    }
    let min_lam_min = lam_min.iter().copied().fold(f64::INFINITY, f64::min);
    let passed = lam_min.iter().zip(&lam_max).all(|(lo, hi)| *lo > 1e-12 * hi);
    Ok(PositivityReport { lam_min, lam_max, min_lam_min, passed })
}

/// [`ss_positivity_at`] on `n_points` random distinct points in `[-1, 1]^d`.
pub fn check_ss_positivity(dims: &[usize], n_points: usize, trials: usize, seed: u64) -> Result<PositivityReport> {
    let d = *dims.first().ok_or_else(|| Error::InvalidArchitecture("empty layer list".into()))?;
    let points = random_distinct_points(d, n_points, seed);
    ss_positivity_at(dims, &points, trials, seed)
}
