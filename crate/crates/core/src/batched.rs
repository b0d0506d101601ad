//! Batched Taylor propagation and reverse sweep over many points at once.
//!
//! Activations of a layer are held as an `M x width` matrix whose rows are
//! grouped in channel blocks of `N` points: values first, then one block of
//! first derivatives per input axis, then one block of second derivatives per
//! axis. Affine maps become one GEMM per layer and direction.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::net::NetworkParams;
use crate::points::Points;

/// Pre-activations and activations of every layer for a batch of points.
struct Sweep {
    n: usize,
    nd: usize,
    /// Layer inputs; `h[0]` is the seeded input.
    h: Vec<DMatrix<f64>>,
    /// Pre-activations of every layer.
    z: Vec<DMatrix<f64>>,
}

impl Sweep {
    fn rows(&self) -> usize {
        self.n * (1 + 2 * self.nd)
    }
}

/// Column-major operand: data with its row and column strides.
#[derive(Clone, Copy)]
struct Op<'a> {
    data: &'a [f64],
    rs: isize,
    cs: isize,
}

impl<'a> Op<'a> {
    fn cols(m: &'a DMatrix<f64>) -> Self {
        Op { data: m.as_slice(), rs: 1, cs: m.nrows() as isize }
    }

    fn transposed(m: &'a DMatrix<f64>) -> Self {
        Op { data: m.as_slice(), rs: m.nrows() as isize, cs: 1 }
    }

    /// Row-major `rows x _` storage, as a weight matrix is kept.
    fn row_major(data: &'a [f64], row_len: usize) -> Self {
        Op { data, rs: row_len as isize, cs: 1 }
    }
}

/// `c = a b + beta c` for `a: m x k`, `b: k x n`, `c` column-major `m x n`.
fn gemm(m: usize, k: usize, n: usize, a: Op, b: Op, beta: f64, c: &mut [f64]) {
    assert!(a.data.len() >= m * k && b.data.len() >= k * n && c.len() == m * n);
    // SAFETY: the strides address only elements inside the checked lengths
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.rs,
            a.cs,
            b.data.as_ptr(),
            b.rs,
            b.cs,
            beta,
            c.as_mut_ptr(),
            1,
            m as isize,
        );
    }
}

fn forward(params: &NetworkParams, points: &Points, nd: usize) -> Sweep {
    let n = points.len();
    let d = points.dim();
    let c = 1 + 2 * nd;
    let mut h0 = DMatrix::zeros(n * c, d);
    for (p, x) in points.rows().enumerate() {
        for (k, &xk) in x.iter().enumerate() {
            h0[(p, k)] = xk;
        }
    }
    for k in 0..nd {
        for p in 0..n {
            h0[((1 + k) * n + p, k)] = 1.0;
        }
    }
    let nl = params.num_layers();
    let mut sweep = Sweep { n, nd, h: vec![h0], z: Vec::with_capacity(nl) };
    for l in 0..nl {
        let layer = params.layer(l);
        let (b, m) = (layer.b, sweep.h[l].nrows());
        let mut z = DMatrix::zeros(m, layer.n_out);
        // W^T is the row-major weight read column by column
        let wt = Op { data: layer.w, rs: 1, cs: layer.n_in as isize };
        gemm(m, layer.n_in, layer.n_out, Op::cols(&sweep.h[l]), wt, 0.0, z.as_mut_slice());
        for (j, bj) in b.iter().enumerate() {
            for v in z.view_mut((0, j), (n, 1)).iter_mut() {
                *v += bj;
            }
        }
        if l + 1 < nl {
            let mut h = DMatrix::zeros(z.nrows(), z.ncols());
            for j in 0..z.ncols() {
                let (zc, hc) = (z.column(j), &mut h.column_mut(j));
                for p in 0..n {
                    let s = crate::net::tanh(zc[p]);
                    let s1 = 1.0 - s * s;
                    let s2 = -2.0 * s * s1;
                    hc[p] = s;
                    for k in 0..nd {
                        let (r1, r2) = ((1 + k) * n + p, (1 + nd + k) * n + p);
                        let a = zc[r1];
                        hc[r1] = s1 * a;
                        hc[r2] = s2 * a * a + s1 * zc[r2];
                    }
                }
            }
            sweep.h.push(h);
        }
        sweep.z.push(z);
    }
    sweep
}

/// Network values and (when `with_lap`) Laplacians, computed exactly as
/// [`accumulate_scalar`] sees them.
pub(crate) fn values(params: &NetworkParams, points: &Points, with_lap: bool) -> (Vec<f64>, Option<Vec<f64>>) {
    if points.is_empty() {
        return (Vec::new(), with_lap.then(Vec::new));
    }
    let nd = if with_lap { params.input_dim() } else { 0 };
    let sweep = forward(params, points, nd);
    let (n, out) = (sweep.n, sweep.z.last().unwrap());
    let u = out.as_slice()[..n].to_vec();
    let lap = with_lap.then(|| (0..n).map(|p| (0..nd).map(|k| out[((1 + nd + k) * n + p, 0)]).sum()).collect());
    (u, lap)
}

/// Value and (optionally) parameter gradient of `sum_i term(i, x_i, u_i, lap_i)`.
pub(crate) fn accumulate_scalar(
    params: &NetworkParams,
    points: &Points,
    uses_lap: bool,
    term: &mut dyn FnMut(usize, &[f64], Jet, Jet) -> Jet,
    grad: Option<&mut [f64]>,
) -> Result<f64> {
    if points.is_empty() {
        return Ok(0.0);
    }
    let nd = if uses_lap { params.input_dim() } else { 0 };
    let sweep = forward(params, points, nd);
    let n = sweep.n;
    let out = sweep.z.last().unwrap();

    let mut total = 0.0;
    let mut zbar = DMatrix::zeros(sweep.rows(), 1);
    for (p, x) in points.rows().enumerate() {
        let u = Jet::var_u(out[(p, 0)]);
        let lap = if uses_lap {
            Jet::var_lap((0..nd).map(|k| out[((1 + nd + k) * n + p, 0)]).sum())
        } else {
            Jet::ZERO
        };
        let t = term(p, x, u, lap);
        if !t.is_finite() {
            return Err(Error::NonFiniteLoss { index: p, boundary: false });
        }
        total += t.v;
        zbar[(p, 0)] = t.du;
        for k in 0..nd {
            zbar[((1 + nd + k) * n + p, 0)] = t.dlap;
        }
    }
    if let Some(grad) = grad {
        backward(params, &sweep, zbar, grad);
    }
    Ok(total)
}

fn backward(params: &NetworkParams, sweep: &Sweep, mut zbar: DMatrix<f64>, grad: &mut [f64]) {
    let (n, nd) = (sweep.n, sweep.nd);
    let mut off = params.num_params();
    for l in (0..params.num_layers()).rev() {
        let layer = params.layer(l);
        let (n_in, n_out) = (layer.n_in, layer.n_out);
        off -= n_in * n_out + n_out;
        let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
        // dW^T += H^T Zbar; column-major W^T is the row-major W gradient
        let m = zbar.nrows();
        gemm(n_in, m, n_out, Op::transposed(&sweep.h[l]), Op::cols(&zbar), 1.0, gw);
        for (j, g) in gb.iter_mut().enumerate() {
            *g += zbar.view((0, j), (n, 1)).sum();
        }
        if l == 0 {
            break;
        }
        let mut hbar = DMatrix::zeros(m, n_in);
        gemm(m, n_out, n_in, Op::cols(&zbar), Op::row_major(layer.w, n_in), 0.0, hbar.as_mut_slice());
        // through the tanh that produced this layer's input
        let zprev = &sweep.z[l - 1];
        let h = &sweep.h[l];
        let mut next = DMatrix::zeros(hbar.nrows(), n_in);
        for i in 0..n_in {
            let (hb, zc, hc) = (hbar.column(i), zprev.column(i), h.column(i));
            let nc = &mut next.column_mut(i);
            for p in 0..n {
                let s = hc[p];
                let s1 = 1.0 - s * s;
                let s2 = -2.0 * s * s1;
                let s3 = -2.0 * s1 * s1 + 4.0 * s * s * s1;
                let mut acc = hb[p] * s1;
                for k in 0..nd {
                    let (r1, r2) = ((1 + k) * n + p, (1 + nd + k) * n + p);
                    let (a, b) = (zc[r1], zc[r2]);
                    let (g1, g2) = (hb[r1], hb[r2]);
                    acc += g1 * s2 * a + g2 * (s3 * a * a + s2 * b);
                    nc[r1] = g1 * s1 + g2 * 2.0 * s2 * a;
                    nc[r2] = g2 * s1;
                }
                nc[p] = acc;
            }
        }
        zbar = next;
    }
}
