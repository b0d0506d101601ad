//! Ground truth: exact solutions, the relative L2 error and a finite-difference
//! steady-state solver for 2D Allen–Cahn.

use std::f64::consts::PI;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::Points;
use crate::problems::{AllenCahn2dPseudoTime, Homotopy};

/// `||pred - truth||_2 / ||truth||_2`.
pub fn l2re(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!("{} predictions for {} reference values", pred.len(), truth.len())));
    }
    let den = truth.iter().map(|t| t * t).sum::<f64>().sqrt();
    if !(den > 0.0) {
        return Err(Error::UndefinedMetric("reference field has zero norm".into()));
    }
    let num = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>().sqrt();
    Ok(num / den)
}

/// The exact solution of `problem` at every point.
pub fn eval_exact(problem: &dyn Homotopy, points: &Points, eps: f64) -> Result<Vec<f64>> {
    if points.dim() != problem.dim() {
        return Err(Error::Shape(format!("{}-dimensional points for `{}`", points.dim(), problem.id())));
    }
    points
        .rows()
        .map(|x| problem.exact(x, eps).ok_or_else(|| Error::NoExactSolution(problem.id().to_string())))
        .collect()
}

/// Nodal values on a uniform `nx x ny` grid over `[lo, hi]^2`, boundary
/// nodes included. `values[j * nx + i]` sits at `(x_i, y_j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridField2D {
    pub nx: usize,
    pub ny: usize,
    pub lo: f64,
    pub hi: f64,
    pub values: Vec<f64>,
}

impl GridField2D {
    pub fn new(nx: usize, ny: usize, lo: f64, hi: f64, values: Vec<f64>) -> Result<Self> {
        if nx < 2 || ny < 2 || values.len() != nx * ny || !(hi > lo) {
            return Err(Error::Shape(format!("{nx}x{ny} grid with {} values", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid field".into()));
        }
        Ok(GridField2D { nx, ny, lo, hi, values })
    }

    pub fn x(&self, i: usize) -> f64 {
        self.lo + i as f64 * (self.hi - self.lo) / (self.nx - 1) as f64
    }

    pub fn y(&self, j: usize) -> f64 {
        self.lo + j as f64 * (self.hi - self.lo) / (self.ny - 1) as f64
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    /// Bilinear interpolation; points outside the box are clamped to it.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let locate = |t: f64, n: usize| {
            let s = ((t - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0) * (n - 1) as f64;
            let k = (s.floor() as usize).min(n - 2);
            (k, s - k as f64)
        };
        let (i, fx) = locate(x, self.nx);
        let (j, fy) = locate(y, self.ny);
        let (a, b) = (self.at(i, j), self.at(i + 1, j));
        let (c, d) = (self.at(i, j + 1), self.at(i + 1, j + 1));
        (1.0 - fy) * ((1.0 - fx) * a + fx * b) + fy * ((1.0 - fx) * c + fx * d)
    }

    pub fn sample_points(&self, points: &Points) -> Result<Vec<f64>> {
        if points.dim() != 2 {
            return Err(Error::Shape("grid fields are sampled at 2D points".into()));
        }
        Ok(points.rows().map(|p| self.sample(p[0], p[1])).collect())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "u"])?;
        for j in 0..self.ny {
            for i in 0..self.nx {
                w.write_record([self.x(i).to_string(), self.y(j).to_string(), self.at(i, j).to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// `nx`, `ny` as little-endian u64, then `lo`, `hi` and the values as
    /// little-endian f64.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&(self.nx as u64).to_le_bytes())?;
        out.write_all(&(self.ny as u64).to_le_bytes())?;
        out.write_all(&self.lo.to_le_bytes())?;
        out.write_all(&self.hi.to_le_bytes())?;
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut b = [0u8; 8];
        let mut next = |input: &mut R| -> Result<[u8; 8]> {
            input.read_exact(&mut b)?;
            Ok(b)
        };
        let nx = u64::from_le_bytes(next(&mut input)?) as usize;
        let ny = u64::from_le_bytes(next(&mut input)?) as usize;
        let lo = f64::from_le_bytes(next(&mut input)?);
        let hi = f64::from_le_bytes(next(&mut input)?);
        let count = nx.checked_mul(ny).filter(|&c| c <= 1 << 28).ok_or_else(|| Error::Shape("grid header too large".into()))?;
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            values.push(f64::from_le_bytes(next(&mut input)?));
        }
        GridField2D::new(nx, ny, lo, hi, values)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeStepping {
    /// Diffusion implicit through a sine transform, reaction explicit.
    SemiImplicit,
    /// Forward Euler; needs `dt <= h^2 / (8 eps^2)`.
    Explicit,
}

/// Settings of [`fdm_ac2d_steady`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdmConfig {
    pub eps: f64,
    pub nx: usize,
    pub ny: usize,
    pub dt: f64,
    pub max_steps: usize,
    pub tol: f64,
    pub stepping: TimeStepping,
}

impl FdmConfig {
    pub fn semi_implicit(eps: f64, n: usize) -> Self {
        FdmConfig { eps, nx: n, ny: n, dt: 0.1, max_steps: 20_000, tol: 1e-6, stepping: TimeStepping::SemiImplicit }
    }
}

/// Orthonormal, symmetric DST-I matrix of size `m` and the eigenvalues of
/// `tridiag(1, -2, 1) / h^2` in the same order.
fn sine_basis(m: usize, h: f64) -> (DMatrix<f64>, Vec<f64>) {
    let c = (2.0 / (m + 1) as f64).sqrt();
    let q = DMatrix::from_fn(m, m, |j, k| c * (((j + 1) * (k + 1)) as f64 * PI / (m + 1) as f64).sin());
    let mu = (1..=m).map(|k| -4.0 / (h * h) * (k as f64 * PI / (2.0 * (m + 1) as f64)).sin().powi(2)).collect();
    (q, mu)
}

/// Five-point `eps^2 Delta_h u` on the interior block (zero Dirichlet data).
fn diffusion(u: &DMatrix<f64>, eps: f64, hx: f64, hy: f64) -> DMatrix<f64> {
    let (my, mx) = u.shape();
    let (cx, cy) = (eps * eps / (hx * hx), eps * eps / (hy * hy));
    DMatrix::from_fn(my, mx, |j, i| {
        let c = u[(j, i)];
        let l = if i > 0 { u[(j, i - 1)] } else { 0.0 };
        let r = if i + 1 < mx { u[(j, i + 1)] } else { 0.0 };
        let d = if j > 0 { u[(j - 1, i)] } else { 0.0 };
        let t = if j + 1 < my { u[(j + 1, i)] } else { 0.0 };
        cx * (l - 2.0 * c + r) + cy * (d - 2.0 * c + t)
    })
}

/// Marches `u_t = eps^2 Delta u - u (u^2 - 1)` on `[-1, 1]^2` with zero
/// Dirichlet data from `u0 = -sin(pi x) sin(pi y)` until
/// `max |u^{k+1} - u^k| / dt < tol`.
pub fn fdm_ac2d_steady(cfg: &FdmConfig) -> Result<GridField2D> {
    let FdmConfig { eps, nx, ny, dt, max_steps, tol, stepping } = *cfg;
    if nx < 3 || ny < 3 {
        return Err(Error::Precondition("the grid needs at least one interior node per axis".into()));
    }
    if !(dt > 0.0 && tol > 0.0 && eps >= 0.0) {
        return Err(Error::Precondition("dt and tol must be positive, eps non-negative".into()));
    }
    let (lo, hi) = (-1.0, 1.0);
    let hx = (hi - lo) / (nx - 1) as f64;
    let hy = (hi - lo) / (ny - 1) as f64;
    if stepping == TimeStepping::Explicit && dt > 0.5 * hx.min(hy).powi(2) / (4.0 * eps * eps) {
        return Err(Error::Precondition(format!("explicit stepping is unstable for dt = {dt}")));
    }
    let (mx, my) = (nx - 2, ny - 2);
    let mut u = DMatrix::from_fn(my, mx, |j, i| {
        AllenCahn2dPseudoTime::initial(&[lo + (i + 1) as f64 * hx, lo + (j + 1) as f64 * hy])
    });
    let (qx, mux) = sine_basis(mx, hx);
    let (qy, muy) = sine_basis(my, hy);

    let mut change = f64::INFINITY;
    let mut converged = false;
    for _ in 0..max_steps {
        let next = match stepping {
            TimeStepping::SemiImplicit => {
                let rhs = u.map(|v| v + dt * (v - v * v * v));
                let mut hat = &qy * rhs * &qx;
                for i in 0..mx {
                    for j in 0..my {
                        hat[(j, i)] /= 1.0 - dt * eps * eps * (muy[j] + mux[i]);
                    }
                }
                &qy * hat * &qx
            }
            TimeStepping::Explicit => {
                let lap = diffusion(&u, eps, hx, hy);
                u.zip_map(&lap, |v, l| v + dt * (l - v * (v * v - 1.0)))
            }
        };
        change = (&next - &u).amax() / dt;
        if !change.is_finite() {
            return Err(Error::NonFinite("finite-difference iterate".into()));
        }
        u = next;
        if change < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence { steps: max_steps, residual: change });
    }

    let mut values = vec![0.0; nx * ny];
    for j in 0..my {
        for i in 0..mx {
            values[(j + 1) * nx + i + 1] = u[(j, i)];
        }
    }
    GridField2D::new(nx, ny, lo, hi, values)
}

/// `max |eps^2 Delta_h u - u (u^2 - 1)|` over the interior nodes.
pub fn ac2d_discrete_residual(field: &GridField2D, eps: f64) -> f64 {
    let (mx, my) = (field.nx - 2, field.ny - 2);
    let inner = DMatrix::from_fn(my, mx, |j, i| field.at(i + 1, j + 1));
    let hx = (field.hi - field.lo) / (field.nx - 1) as f64;
    let hy = (field.hi - field.lo) / (field.ny - 1) as f64;
    let lap = diffusion(&inner, eps, hx, hy);
    inner.zip_map(&lap, |v, l| l - v * (v * v - 1.0)).amax()
}
