//! Tanh multilayer perceptron and its derivative engine.
//!
//! Hidden layers use `tanh`, the output layer is affine and scalar. Input
//! derivatives are obtained by pushing a (value, first, second) Taylor triple
//! along each coordinate axis through the network, which gives the gradient
//! and the Laplacian at `O(d)` times the cost of a plain forward pass. Parameter
//! derivatives of any scalar built from `u`, `grad_x u` and `lap u` come from a
//! reverse sweep over that Taylor propagation.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::points::Points;

/// Largest dense Jacobian (`n * p` entries) [`param_jacobians`] will build.
pub const MAX_JACOBIAN_ENTRIES: usize = 4096 * 4000;

/// Weights and biases of a tanh MLP, stored as one flat parameter vector.
///
/// Layout per layer: the `out x in` weight matrix row-major, followed by the
/// `out` biases. Layers follow each other in order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsDoc", into = "ParamsDoc")]
pub struct NetworkParams {
    dims: Vec<usize>,
    theta: Vec<f64>,
}

/// Borrowed view of one affine layer.
#[derive(Clone, Copy, Debug)]
pub struct Layer<'a> {
    pub n_in: usize,
    pub n_out: usize,
    pub w: &'a [f64],
    pub b: &'a [f64],
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::InvalidArchitecture(format!(
            "need at least an input and an output width, got {dims:?}"
        )));
    }
    if dims.contains(&0) {
        return Err(Error::InvalidArchitecture(format!("zero-width layer in {dims:?}")));
    }
    if *dims.last().unwrap() != 1 {
        return Err(Error::InvalidArchitecture(format!(
            "output layer must be scalar, got width {}",
            dims.last().unwrap()
        )));
    }
    Ok(())
}

/// Number of parameters of an MLP with the given layer widths.
/// Hidden activation. Written through `exp`, which is about twice as fast as
/// the libm `tanh` and accurate to a few ulps of 1.
#[inline]
pub(crate) fn tanh(x: f64) -> f64 {
    let e = (-2.0 * x.abs()).exp();
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

pub fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl NetworkParams {
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        Ok(NetworkParams { dims: dims.to_vec(), theta: vec![0.0; param_count(dims)] })
    }

    /// Rebuilds parameters from a flat vector in the layout of [`flatten`](Self::flatten).
    pub fn from_flat(dims: &[usize], theta: Vec<f64>) -> Result<Self> {
        check_dims(dims)?;
        let p = param_count(dims);
        if theta.len() != p {
            return Err(Error::Shape(format!(
                "flat parameter vector has {} entries, architecture {dims:?} needs {p}",
                theta.len()
            )));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(NetworkParams { dims: dims.to_vec(), theta })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.theta.len()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.theta.clone()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    fn layer_offset(&self, k: usize) -> usize {
        param_count(&self.dims[..=k])
    }

    pub fn layer(&self, k: usize) -> Layer<'_> {
        let (n_in, n_out) = (self.dims[k], self.dims[k + 1]);
        let off = self.layer_offset(k);
        let (w, rest) = self.theta[off..].split_at(n_in * n_out);
        Layer { n_in, n_out, w, b: &rest[..n_out] }
    }

    /// Mutable weight matrix (row-major) and bias of layer `k`.
    pub fn layer_mut(&mut self, k: usize) -> (&mut [f64], &mut [f64]) {
        let (n_in, n_out) = (self.dims[k], self.dims[k + 1]);
        let off = self.layer_offset(k);
        let (w, rest) = self.theta[off..].split_at_mut(n_in * n_out);
        (w, &mut rest[..n_out])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ParamsDoc {
    dims: Vec<usize>,
    layers: Vec<LayerDoc>,
}

impl From<NetworkParams> for ParamsDoc {
    fn from(p: NetworkParams) -> Self {
        let layers = (0..p.num_layers())
            .map(|k| {
                let l = p.layer(k);
                LayerDoc { w: l.w.chunks(l.n_in).map(<[f64]>::to_vec).collect(), b: l.b.to_vec() }
            })
            .collect();
        ParamsDoc { dims: p.dims, layers }
    }
}

impl TryFrom<ParamsDoc> for NetworkParams {
    type Error = Error;

    fn try_from(doc: ParamsDoc) -> Result<Self> {
        check_dims(&doc.dims)?;
        if doc.layers.len() != doc.dims.len() - 1 {
            return Err(Error::Shape(format!(
                "{} layers listed for dims {:?}",
                doc.layers.len(),
                doc.dims
            )));
        }
        let mut theta = Vec::with_capacity(param_count(&doc.dims));
        for (k, layer) in doc.layers.iter().enumerate() {
            let (n_in, n_out) = (doc.dims[k], doc.dims[k + 1]);
            if layer.w.len() != n_out || layer.w.iter().any(|r| r.len() != n_in) || layer.b.len() != n_out {
                return Err(Error::Shape(format!("layer {k} does not match {n_out}x{n_in}")));
            }
            for row in &layer.w {
                theta.extend_from_slice(row);
            }
            theta.extend_from_slice(&layer.b);
        }
        NetworkParams::from_flat(&doc.dims, theta)
    }
}

/// Xavier-normal weights (variance `2 / (fan_in + fan_out)`) and zero biases.
pub fn init_xavier(dims: &[usize], seed: u64) -> Result<NetworkParams> {
    let mut params = NetworkParams::zeros(dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..params.num_layers() {
        let (fan_in, fan_out) = (dims[k], dims[k + 1]);
        let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        let (w, _) = params.layer_mut(k);
        for wi in w.iter_mut() {
            *wi = normal.sample(&mut rng);
        }
    }
    Ok(params)
}

/// Network values at a set of points, with whichever derivatives were requested.
#[derive(Clone, Debug)]
pub struct DerivBatch {
    pub u: Vec<f64>,
    /// `n x d`, row-major.
    pub grad_x: Option<Vec<f64>>,
    pub lap: Option<Vec<f64>>,
    /// `n x p`: row `i` is the parameter gradient of `u(x_i)`.
    pub jac_u: Option<DMatrix<f64>>,
    /// `n x p`: row `i` is the parameter gradient of `lap u(x_i)`.
    pub jac_lap: Option<DMatrix<f64>>,
}

impl DerivBatch {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

/// Scratch storage for one point's forward sweep, reused across points.
///
/// For every layer `l` it keeps the layer input `h` together with its first
/// and second directional derivatives along each of the `ndir` coordinate
/// axes, and the same triple for the pre-activation `z`.
pub(crate) struct Tape {
    ndir: usize,
    h: Vec<Vec<f64>>,
    ht: Vec<Vec<f64>>,
    htt: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    zt: Vec<Vec<f64>>,
    ztt: Vec<Vec<f64>>,
    // adjoint buffers, sized for the widest layer
    zb: Vec<f64>,
    ztb: Vec<f64>,
    zttb: Vec<f64>,
    hb: Vec<f64>,
    htb: Vec<f64>,
    httb: Vec<f64>,
}

impl Tape {
    pub(crate) fn new(dims: &[usize], ndir: usize) -> Self {
        let layers = dims.len() - 1;
        let wmax = *dims.iter().max().unwrap();
        Tape {
            ndir,
            h: (0..layers).map(|l| vec![0.0; dims[l]]).collect(),
            ht: (0..layers).map(|l| vec![0.0; dims[l] * ndir]).collect(),
            htt: (0..layers).map(|l| vec![0.0; dims[l] * ndir]).collect(),
            z: (0..layers).map(|l| vec![0.0; dims[l + 1]]).collect(),
            zt: (0..layers).map(|l| vec![0.0; dims[l + 1] * ndir]).collect(),
            ztt: (0..layers).map(|l| vec![0.0; dims[l + 1] * ndir]).collect(),
            zb: vec![0.0; wmax],
            ztb: vec![0.0; wmax * ndir],
            zttb: vec![0.0; wmax * ndir],
            hb: vec![0.0; wmax],
            htb: vec![0.0; wmax * ndir],
            httb: vec![0.0; wmax * ndir],
        }
    }

    pub(crate) fn u(&self) -> f64 {
        self.z.last().unwrap()[0]
    }

    /// First derivative of the output along axis `k`.
    pub(crate) fn du(&self, k: usize) -> f64 {
        self.zt.last().unwrap()[k]
    }

    pub(crate) fn lap(&self) -> f64 {
        self.ztt.last().unwrap().iter().sum()
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Forward sweep for one point. With `tape.ndir == 0` this is the plain
/// network evaluation; with `ndir == d` it also carries first and second
/// derivatives along each input axis.
pub(crate) fn forward_point(params: &NetworkParams, x: &[f64], tape: &mut Tape) {
    let nd = tape.ndir;
    let nl = params.num_layers();

    tape.h[0].copy_from_slice(x);
    if nd > 0 {
        let d = x.len();
        tape.ht[0].fill(0.0);
        for k in 0..nd {
            tape.ht[0][k * d + k] = 1.0;
        }
        tape.htt[0].fill(0.0);
    }

    for l in 0..nl {
        let layer = params.layer(l);
        let (n_in, n_out) = (layer.n_in, layer.n_out);
        {
            let (h, ht, htt) = (&tape.h[l], &tape.ht[l], &tape.htt[l]);
            let (z, zt, ztt) = (&mut tape.z[l], &mut tape.zt[l], &mut tape.ztt[l]);
            for j in 0..n_out {
                let row = &layer.w[j * n_in..(j + 1) * n_in];
                z[j] = layer.b[j] + dot(row, h);
                for k in 0..nd {
                    zt[k * n_out + j] = dot(row, &ht[k * n_in..(k + 1) * n_in]);
                    ztt[k * n_out + j] = dot(row, &htt[k * n_in..(k + 1) * n_in]);
                }
            }
        }
        if l + 1 < nl {
            let hn = &mut tape.h[l + 1];
            let z = &tape.z[l];
            for j in 0..n_out {
                hn[j] = tanh(z[j]);
            }
            if nd > 0 {
                let (zt, ztt) = (&tape.zt[l], &tape.ztt[l]);
                let (htn, httn) = (&mut tape.ht[l + 1], &mut tape.htt[l + 1]);
                for j in 0..n_out {
                    let s = hn[j];
                    let s1 = 1.0 - s * s;
                    let s2 = -2.0 * s * s1;
                    for k in 0..nd {
                        let idx = k * n_out + j;
                        let a = zt[idx];
                        htn[idx] = s1 * a;
                        httn[idx] = s2 * a * a + s1 * ztt[idx];
                    }
                }
            }
        }
    }
}

/// Reverse sweep over the last [`forward_point`], accumulating into `grad`
/// the parameter gradient of `adj_u * u + adj_grad . grad_x u + adj_lap * lap u`.
///
/// `adj_grad` may be empty; it is otherwise one entry per direction.
pub(crate) fn backward_point(
    params: &NetworkParams,
    tape: &mut Tape,
    adj_u: f64,
    adj_grad: &[f64],
    adj_lap: f64,
    grad: &mut [f64],
) {
    let nd = tape.ndir;
    let nl = params.num_layers();

    // Seed the output adjoints (output width is 1).
    tape.zb[0] = adj_u;
    for k in 0..nd {
        tape.ztb[k] = adj_grad.get(k).copied().unwrap_or(0.0);
        tape.zttb[k] = adj_lap;
    }

    let mut off = params.num_params();
    for l in (0..nl).rev() {
        let layer = params.layer(l);
        let (n_in, n_out) = (layer.n_in, layer.n_out);
        off -= n_in * n_out + n_out;
        let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);

        let (h, ht, htt) = (&tape.h[l], &tape.ht[l], &tape.htt[l]);
        let (zb, ztb, zttb) = (&tape.zb[..n_out], &tape.ztb[..n_out * nd], &tape.zttb[..n_out * nd]);

        for j in 0..n_out {
            gb[j] += zb[j];
            let g = &mut gw[j * n_in..(j + 1) * n_in];
            let a = zb[j];
            if a != 0.0 {
                for (gi, hi) in g.iter_mut().zip(h) {
                    *gi += a * hi;
                }
            }
            for k in 0..nd {
                let a1 = ztb[k * n_out + j];
                let a2 = zttb[k * n_out + j];
                let r1 = &ht[k * n_in..(k + 1) * n_in];
                let r2 = &htt[k * n_in..(k + 1) * n_in];
                for i in 0..n_in {
                    g[i] += a1 * r1[i] + a2 * r2[i];
                }
            }
        }

        if l == 0 {
            break;
        }

        // Adjoints of this layer's input: W^T times the output adjoints.
        let (hb, htb, httb) = (&mut tape.hb[..n_in], &mut tape.htb[..n_in * nd], &mut tape.httb[..n_in * nd]);
        hb.fill(0.0);
        htb.fill(0.0);
        httb.fill(0.0);
        for j in 0..n_out {
            let row = &layer.w[j * n_in..(j + 1) * n_in];
            let a = zb[j];
            for i in 0..n_in {
                hb[i] += a * row[i];
            }
            for k in 0..nd {
                let a1 = ztb[k * n_out + j];
                let a2 = zttb[k * n_out + j];
                let (t1, t2) = (&mut htb[k * n_in..(k + 1) * n_in], &mut httb[k * n_in..(k + 1) * n_in]);
                for i in 0..n_in {
                    t1[i] += a1 * row[i];
                    t2[i] += a2 * row[i];
                }
            }
        }

        // Through the tanh that produced this layer's input.
        let (zprev_t, zprev_tt) = (&tape.zt[l - 1], &tape.ztt[l - 1]);
        let (zb, ztb, zttb) = (&mut tape.zb[..n_in], &mut tape.ztb[..n_in * nd], &mut tape.zttb[..n_in * nd]);
        for i in 0..n_in {
            let s = h[i];
            let s1 = 1.0 - s * s;
            let s2 = -2.0 * s * s1;
            let s3 = -2.0 * s1 * s1 + 4.0 * s * s * s1;
            let mut acc = hb[i] * s1;
            for k in 0..nd {
                let idx = k * n_in + i;
                let (a, b) = (zprev_t[idx], zprev_tt[idx]);
                let (g1, g2) = (htb[idx], httb[idx]);
                acc += g1 * s2 * a + g2 * (s3 * a * a + s2 * b);
                ztb[idx] = g1 * s1 + g2 * 2.0 * s2 * a;
                zttb[idx] = g2 * s1;
            }
            zb[i] = acc;
        }
    }
}

fn check_points(params: &NetworkParams, points: &Points) -> Result<()> {
    if points.dim() != params.input_dim() {
        return Err(Error::Shape(format!(
            "points have dimension {}, network expects {}",
            points.dim(),
            params.input_dim()
        )));
    }
    Ok(())
}

/// Plain network evaluation at every point.
pub fn forward(params: &NetworkParams, points: &Points) -> Result<Vec<f64>> {
    check_points(params, points)?;
    let mut tape = Tape::new(params.dims(), 0);
    Ok(points
        .rows()
        .map(|x| {
            forward_point(params, x, &mut tape);
            tape.u()
        })
        .collect())
}

/// Values, input gradients and Laplacians at every point.
pub fn forward_with_input_derivs(params: &NetworkParams, points: &Points) -> Result<DerivBatch> {
    check_points(params, points)?;
    let d = params.input_dim();
    let n = points.len();
    let mut tape = Tape::new(params.dims(), d);
    let mut u = Vec::with_capacity(n);
    let mut grad_x = Vec::with_capacity(n * d);
    let mut lap = Vec::with_capacity(n);
    for x in points.rows() {
        forward_point(params, x, &mut tape);
        u.push(tape.u());
        grad_x.extend((0..d).map(|k| tape.du(k)));
        lap.push(tape.lap());
    }
    Ok(DerivBatch { u, grad_x: Some(grad_x), lap: Some(lap), jac_u: None, jac_lap: None })
}

/// All fields of [`DerivBatch`], including the dense parameter Jacobians of
/// `u` and of `lap u`.
pub fn param_jacobians(params: &NetworkParams, points: &Points) -> Result<DerivBatch> {
    check_points(params, points)?;
    let n = points.len();
    let p = params.num_params();
    if n.saturating_mul(p) > MAX_JACOBIAN_ENTRIES {
        return Err(Error::TooLarge { n, p, limit: MAX_JACOBIAN_ENTRIES });
    }
    let d = params.input_dim();
    let mut tape = Tape::new(params.dims(), d);
    let mut u = Vec::with_capacity(n);
    let mut grad_x = Vec::with_capacity(n * d);
    let mut lap = Vec::with_capacity(n);
    let mut ju = vec![0.0; n * p];
    let mut jl = vec![0.0; n * p];
    for (i, x) in points.rows().enumerate() {
        forward_point(params, x, &mut tape);
        u.push(tape.u());
        grad_x.extend((0..d).map(|k| tape.du(k)));
        lap.push(tape.lap());
        backward_point(params, &mut tape, 1.0, &[], 0.0, &mut ju[i * p..(i + 1) * p]);
        backward_point(params, &mut tape, 0.0, &[], 1.0, &mut jl[i * p..(i + 1) * p]);
    }
    Ok(DerivBatch {
        u,
        grad_x: Some(grad_x),
        lap: Some(lap),
        jac_u: Some(DMatrix::from_row_slice(n, p, &ju)),
        jac_lap: Some(DMatrix::from_row_slice(n, p, &jl)),
    })
}

/// Value and parameter gradient of `sum_i term(i, x_i, u_i, lap_i)`.
///
/// `term` receives `u` and `lap` as [`Jet`]s seeded with unit partials, and
/// must return its contribution as a [`Jet`] whose partials drive the reverse
/// sweep. When `uses_lap` is false the Taylor propagation is skipped and `lap`
/// is passed as a zero constant.
pub fn grad_of_scalar(
    params: &NetworkParams,
    points: &Points,
    uses_lap: bool,
    term: &mut dyn FnMut(usize, &[f64], Jet, Jet) -> Jet,
) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; params.num_params()];
    let value = accumulate_scalar(params, points, uses_lap, term, Some(&mut grad))?;
    Ok((value, grad))
}

/// Shared driver for [`grad_of_scalar`]; with `grad = None` only the value is
/// formed. Accumulates into `grad` without clearing it.
pub(crate) fn accumulate_scalar(
    params: &NetworkParams,
    points: &Points,
    uses_lap: bool,
    term: &mut dyn FnMut(usize, &[f64], Jet, Jet) -> Jet,
    grad: Option<&mut [f64]>,
) -> Result<f64> {
    check_points(params, points)?;
    crate::batched::accumulate_scalar(params, points, uses_lap, term, grad)
}

/// Values and optional Laplacians from the same engine as the loss gradients,
/// so a field captured here is reproduced exactly inside a loss.
pub(crate) fn loss_view(params: &NetworkParams, points: &Points, with_lap: bool) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    check_points(params, points)?;
    Ok(crate::batched::values(params, points, with_lap))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activation_matches_libm() {
        for i in -4000..=4000 {
            let x = i as f64 * 5e-3;
            assert!((tanh(x) - x.tanh()).abs() < 4e-16, "{x}");
        }
        assert_eq!(tanh(800.0), 1.0);
        assert_eq!(tanh(-800.0), -1.0);
        assert_eq!(tanh(0.0), 0.0);
    }

    fn naive_forward(params: &NetworkParams, x: &[f64]) -> f64 {
        let mut h = x.to_vec();
        for k in 0..params.num_layers() {
            let l = params.layer(k);
            let mut z: Vec<f64> = (0..l.n_out)
                .map(|j| l.b[j] + (0..l.n_in).map(|i| l.w[j * l.n_in + i] * h[i]).sum::<f64>())
                .collect();
            if k + 1 < params.num_layers() {
                z.iter_mut().for_each(|v| *v = tanh(*v));
            }
            h = z;
        }
        h[0]
    }

    #[test]
    fn paper_architecture_param_count() {
        let p = init_xavier(&[1, 30, 30, 30, 1], 0).unwrap();
        assert_eq!(p.num_params(), 30 + 30 + 900 + 30 + 900 + 30 + 30 + 1);
        assert_eq!(p.num_params(), 1951);
    }

    #[test]
    fn xavier_biases_are_zero() {
        for seed in 0..5 {
            let p = init_xavier(&[1, 1], seed).unwrap();
            assert_eq!(p.layer(0).b, &[0.0]);
            let p = init_xavier(&[2, 30, 30, 30, 1], seed).unwrap();
            for k in 0..p.num_layers() {
                assert!(p.layer(k).b.iter().all(|&b| b == 0.0));
            }
        }
    }

    #[test]
    fn xavier_first_layer_variance() {
        let target = 2.0 / 32.0;
        let w: Vec<f64> = (7..17)
            .flat_map(|seed| init_xavier(&[2, 30, 30, 30, 1], seed).unwrap().layer(0).w.to_vec())
            .collect();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (w.len() - 1) as f64;
        assert!((var - target).abs() <= 0.15 * target, "var {var}");
    }

    #[test]
    fn xavier_is_deterministic() {
        let a = init_xavier(&[2, 16, 16, 1], 3).unwrap();
        let b = init_xavier(&[2, 16, 16, 1], 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_xavier(&[2, 16, 16, 1], 4).unwrap());
    }

    #[test]
    fn invalid_architectures() {
        assert!(matches!(init_xavier(&[], 0), Err(Error::InvalidArchitecture(_))));
        assert!(matches!(init_xavier(&[3], 0), Err(Error::InvalidArchitecture(_))));
        assert!(matches!(init_xavier(&[2, 0, 1], 0), Err(Error::InvalidArchitecture(_))));
    }

    #[test]
    fn zero_weights_give_output_bias() {
        let mut p = NetworkParams::zeros(&[2, 5, 5, 1]).unwrap();
        p.layer_mut(2).1[0] = 0.75;
        let pts = Points::from_rows(&[[0.1, 0.2], [-3.0, 4.0]]).unwrap();
        assert_eq!(forward(&p, &pts).unwrap(), vec![0.75, 0.75]);
    }

    #[test]
    fn affine_single_layer() {
        let p = NetworkParams::from_flat(&[1, 1], vec![2.0, 1.0]).unwrap();
        assert_eq!(forward(&p, &Points::from_scalars(&[3.0])).unwrap(), vec![7.0]);
        let b = forward_with_input_derivs(&p, &Points::from_scalars(&[3.0, -1.0])).unwrap();
        assert_eq!(b.lap.unwrap(), vec![0.0, 0.0]);
        assert_eq!(b.grad_x.unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn forward_matches_naive_bitwise() {
        let p = init_xavier(&[3, 12, 7, 1], 11).unwrap();
        let rows: Vec<[f64; 3]> = (0..10).map(|i| [0.1 * i as f64, -0.3 + 0.07 * i as f64, 0.5]).collect();
        let pts = Points::from_rows(&rows).unwrap();
        let u = forward(&p, &pts).unwrap();
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(u[i].to_bits(), naive_forward(&p, r).to_bits());
        }
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let p = init_xavier(&[2, 4, 1], 0).unwrap();
        assert!(matches!(forward(&p, &Points::from_scalars(&[1.0])), Err(Error::Shape(_))));
    }

    #[test]
    fn bias_columns_of_jacobians() {
        let p = init_xavier(&[1, 6, 1], 2).unwrap();
        let pts = Points::from_scalars(&[0.0, 0.3, 0.9]);
        let b = param_jacobians(&p, &pts).unwrap();
        let last = p.num_params() - 1;
        let (ju, jl) = (b.jac_u.unwrap(), b.jac_lap.unwrap());
        for i in 0..3 {
            assert_eq!(ju[(i, last)], 1.0);
            assert_eq!(jl[(i, last)], 0.0);
        }
    }

    #[test]
    fn jacobian_size_guard() {
        let p = init_xavier(&[1, 60, 60, 1], 0).unwrap();
        let pts = Points::from_scalars(&vec![0.5; 5000]);
        assert!(matches!(param_jacobians(&p, &pts), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn zero_residual_has_zero_gradient() {
        let p = init_xavier(&[1, 8, 1], 1).unwrap();
        let pts = Points::from_scalars(&[0.1, 0.5, 0.7]);
        let (v, g) = grad_of_scalar(&p, &pts, false, &mut |_, _, u, _| 0.5 * (u - u).square()).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn mean_u_gradient_is_jacobian_column_mean() {
        let p = init_xavier(&[2, 8, 8, 1], 5).unwrap();
        let pts = Points::from_rows(&[[0.1, 0.2], [0.4, -0.6], [0.9, 0.3], [-0.5, -0.5]]).unwrap();
        let n = pts.len() as f64;
        let (_, g) = grad_of_scalar(&p, &pts, false, &mut |_, _, u, _| u / n).unwrap();
        let ju = param_jacobians(&p, &pts).unwrap().jac_u.unwrap();
        for j in 0..p.num_params() {
            let mean = ju.column(j).iter().sum::<f64>() / n;
            assert!((g[j] - mean).abs() <= 1e-14 * (1.0 + mean.abs()));
        }
    }

    #[test]
    fn json_layout() {
        let p = NetworkParams::from_flat(&[2, 1], vec![1.5, -2.0, 0.25]).unwrap();
        let s = p.to_json().unwrap();
        assert_eq!(s, r#"{"dims":[2,1],"layers":[{"w":[[1.5,-2.0]],"b":[0.25]}]}"#);
        assert_eq!(NetworkParams::from_json(&s).unwrap(), p);
        assert!(NetworkParams::from_json(r#"{"dims":[2,1],"layers":[{"w":[[1.5]],"b":[0.25]}]}"#).is_err());
    }
}
