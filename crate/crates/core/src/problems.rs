//! Homotopy families `H(u, eps) = 0`, collocation sampling and schedules.
//!
//! Every family exposes the residual `H`, the action of its linearisation
//! `H_u` on a direction `(v, lap v)`, and the path derivative `H_eps`. All
//! three are written against [`Jet`] so the loss code gets partials with
//! respect to the network value and Laplacian for free.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::points::Points;

/// Axis-aligned box `[lo, hi]^dim`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Domain {
    pub dim: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Domain {
    pub fn contains_strictly(&self, x: &[f64]) -> bool {
        x.len() == self.dim && x.iter().all(|&c| c > self.lo && c < self.hi)
    }

    pub fn on_boundary(&self, x: &[f64]) -> bool {
        x.len() == self.dim
            && x.iter().all(|&c| c >= self.lo && c <= self.hi)
            && x.iter().any(|&c| c == self.lo || c == self.hi)
    }
}

/// A homotopy `H(u, eps)` whose zeros trace a solution path in `eps`.
///
/// `eps` is the path parameter; for pseudo-time families it is `s`.
pub trait Homotopy: Send + Sync {
    fn id(&self) -> &str;

    fn dim(&self) -> usize;

    fn domain(&self) -> Domain;

    /// Whether `H` involves `lap u`. Pure regression families skip the
    /// Taylor propagation entirely.
    fn uses_laplacian(&self) -> bool {
        true
    }

    /// Whether the family carries Dirichlet data (`n_bc` may be zero otherwise).
    fn has_boundary(&self) -> bool {
        true
    }

    fn residual(&self, x: &[f64], u: Jet, lap: Jet, eps: f64) -> Jet;

    /// `H_u` at `u`, applied to the direction `v` with Laplacian `lap_v`.
    fn hu_action(&self, x: &[f64], u: Jet, v: Jet, lap_v: Jet, eps: f64) -> Jet;

    /// Partial derivative of `H` with respect to the path parameter.
    fn h_eps(&self, x: &[f64], u: Jet, lap: Jet, eps: f64) -> Jet;

    /// Dirichlet data `g(x)` at the current path parameter.
    fn boundary_value(&self, _x: &[f64], _eps: f64) -> f64 {
        0.0
    }

    /// `d g / d eps`, needed when the boundary data moves along the path.
    fn boundary_eps(&self, _x: &[f64], _eps: f64) -> f64 {
        0.0
    }

    fn exact(&self, _x: &[f64], _eps: f64) -> Option<f64> {
        None
    }

    fn has_exact(&self) -> bool {
        self.exact(&vec![0.0; self.dim()], 1.0).is_some()
    }

    /// Coefficients `(a, b)` with `H_u[v] = a v + b lap_v` at this point.
    fn linearization(&self, x: &[f64], u: f64, eps: f64) -> (f64, f64) {
        let u = Jet::constant(u);
        let a = self.hu_action(x, u, Jet::constant(1.0), Jet::ZERO, eps).v;
        let b = self.hu_action(x, u, Jet::ZERO, Jet::constant(1.0), eps).v;
        (a, b)
    }
}

/// Steady 1D Allen–Cahn on `[0, 1]`: `H = -eps^2 u'' + u^3 - u`, `u(0) = -1`, `u(1) = 1`.
#[derive(Clone, Copy, Debug, Default)]
pub struct AllenCahn1d;

impl AllenCahn1d {
    pub fn exact_value(x: f64, eps: f64) -> f64 {
        ((x - 0.5) / (std::f64::consts::SQRT_2 * eps)).tanh()
    }
}

impl Homotopy for AllenCahn1d {
    fn id(&self) -> &str {
        "ac1d"
    }

    fn dim(&self) -> usize {
        1
    }

    fn domain(&self) -> Domain {
        Domain { dim: 1, lo: 0.0, hi: 1.0 }
    }

    fn residual(&self, _x: &[f64], u: Jet, lap: Jet, eps: f64) -> Jet {
        -(eps * eps) * lap + u * u * u - u
    }

    fn hu_action(&self, _x: &[f64], u: Jet, v: Jet, lap_v: Jet, eps: f64) -> Jet {
        -(eps * eps) * lap_v + (3.0 * u * u - 1.0) * v
    }

    fn h_eps(&self, _x: &[f64], _u: Jet, lap: Jet, eps: f64) -> Jet {
        -2.0 * eps * lap
    }

    fn boundary_value(&self, x: &[f64], _eps: f64) -> f64 {
        if x[0] < 0.5 {
            -1.0
        } else {
            1.0
        }
    }

    fn exact(&self, x: &[f64], eps: f64) -> Option<f64> {
        Some(Self::exact_value(x[0], eps))
    }
}

/// Pseudo-time homotopy for the 2D Allen–Cahn steady state on `[-1, 1]^2`:
///
/// `H(u, s) = (1 - s)(eps(s)^2 lap u - u(u^2 - 1)) + s(u - u0)`, with
/// `u0 = -sin(pi x) sin(pi y)` and `eps(s) = max(s, eps_floor)`.
#[derive(Clone, Copy, Debug)]
pub struct AllenCahn2dPseudoTime {
    pub eps_floor: f64,
}

impl Default for AllenCahn2dPseudoTime {
    fn default() -> Self {
        AllenCahn2dPseudoTime { eps_floor: 0.05 }
    }
}

impl AllenCahn2dPseudoTime {
    pub fn eps_of(&self, s: f64) -> f64 {
        s.max(self.eps_floor)
    }

    /// `d eps / d s`; the kink at the floor takes the right derivative.
    pub fn deps_ds(&self, s: f64) -> f64 {
        if s > self.eps_floor {
            1.0
        } else {
            0.0
        }
    }

    pub fn initial(x: &[f64]) -> f64 {
        -(PI * x[0]).sin() * (PI * x[1]).sin()
    }
}

impl Homotopy for AllenCahn2dPseudoTime {
    fn id(&self) -> &str {
        "ac2d"
    }

    fn dim(&self) -> usize {
        2
    }

    fn domain(&self) -> Domain {
        Domain { dim: 2, lo: -1.0, hi: 1.0 }
    }

    fn residual(&self, x: &[f64], u: Jet, lap: Jet, s: f64) -> Jet {
        let e = self.eps_of(s);
        (1.0 - s) * (e * e * lap - u * (u * u - 1.0)) + s * (u - Self::initial(x))
    }

    fn hu_action(&self, _x: &[f64], u: Jet, v: Jet, lap_v: Jet, s: f64) -> Jet {
        let e = self.eps_of(s);
        (1.0 - s) * (e * e * lap_v - (3.0 * u * u - 1.0) * v) + s * v
    }

    fn h_eps(&self, x: &[f64], u: Jet, lap: Jet, s: f64) -> Jet {
        let e = self.eps_of(s);
        -(e * e * lap - u * (u * u - 1.0)) + (u - Self::initial(x))
            + (1.0 - s) * 2.0 * e * self.deps_ds(s) * lap
    }
}

/// `d`-dimensional Helmholtz family on `[-1, 1]^d`: `H = eps^2 lap u + u / d`,
/// with the plane-wave solution `sin(sum_i x_i / (d eps))` as Dirichlet data.
#[derive(Clone, Copy, Debug)]
pub struct Helmholtz {
    d: usize,
}

impl Helmholtz {
    pub fn new(d: usize) -> Result<Self> {
        if d < 1 {
            return Err(Error::InvalidDimension("helmholtz needs d >= 1".into()));
        }
        Ok(Helmholtz { d })
    }

    fn phase(&self, x: &[f64], eps: f64) -> f64 {
        x.iter().sum::<f64>() / (self.d as f64 * eps)
    }
}

impl Homotopy for Helmholtz {
    fn id(&self) -> &str {
        "helmholtz"
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn domain(&self) -> Domain {
        Domain { dim: self.d, lo: -1.0, hi: 1.0 }
    }

    fn residual(&self, _x: &[f64], u: Jet, lap: Jet, eps: f64) -> Jet {
        eps * eps * lap + u / self.d as f64
    }

    fn hu_action(&self, _x: &[f64], _u: Jet, v: Jet, lap_v: Jet, eps: f64) -> Jet {
        eps * eps * lap_v + v / self.d as f64
    }

    fn h_eps(&self, _x: &[f64], _u: Jet, lap: Jet, eps: f64) -> Jet {
        2.0 * eps * lap
    }

    fn boundary_value(&self, x: &[f64], eps: f64) -> f64 {
        self.phase(x, eps).sin()
    }

    fn boundary_eps(&self, x: &[f64], eps: f64) -> f64 {
        let ph = self.phase(x, eps);
        -ph.cos() * ph / eps
    }

    fn exact(&self, x: &[f64], eps: f64) -> Option<f64> {
        Some(self.phase(x, eps).sin())
    }
}

/// Regression homotopy towards `sin(pi x / eps)` on `[0, 1]`: `H = u - sin(pi x / eps)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct HighFrequency;

impl Homotopy for HighFrequency {
    fn id(&self) -> &str {
        "highfreq"
    }

    fn dim(&self) -> usize {
        1
    }

    fn domain(&self) -> Domain {
        Domain { dim: 1, lo: 0.0, hi: 1.0 }
    }

    fn uses_laplacian(&self) -> bool {
        false
    }

    fn has_boundary(&self) -> bool {
        false
    }

    fn residual(&self, x: &[f64], u: Jet, _lap: Jet, eps: f64) -> Jet {
        u - (PI * x[0] / eps).sin()
    }

    fn hu_action(&self, _x: &[f64], _u: Jet, v: Jet, _lap_v: Jet, _eps: f64) -> Jet {
        v
    }

    fn h_eps(&self, x: &[f64], _u: Jet, _lap: Jet, eps: f64) -> Jet {
        let a = PI * x[0] / eps;
        Jet::constant(a / eps * a.cos())
    }

    fn exact(&self, x: &[f64], eps: f64) -> Option<f64> {
        Some((PI * x[0] / eps).sin())
    }
}

pub fn make_ac1d() -> AllenCahn1d {
    AllenCahn1d
}

pub fn make_ac2d_pseudotime() -> AllenCahn2dPseudoTime {
    AllenCahn2dPseudoTime::default()
}

pub fn make_helmholtz(d: usize) -> Result<Helmholtz> {
    Helmholtz::new(d)
}

pub fn make_highfreq() -> HighFrequency {
    HighFrequency
}

/// Looks up a problem by its string id. `dim` is only read for `helmholtz`.
pub fn problem_by_id(id: &str, dim: Option<usize>) -> Result<Box<dyn Homotopy>> {
    Ok(match id {
        "ac1d" => Box::new(AllenCahn1d),
        "ac2d" => Box::new(AllenCahn2dPseudoTime::default()),
        "helmholtz" => Box::new(Helmholtz::new(dim.unwrap_or(1))?),
        "highfreq" => Box::new(HighFrequency),
        other => return Err(Error::UnknownProblem(other.to_string())),
    })
}

/// Strictly decreasing list of path-parameter values `eps_0 > eps_1 > ... > eps_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EpsSchedule {
    values: Vec<f64>,
}

impl TryFrom<Vec<f64>> for EpsSchedule {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        EpsSchedule::new(v)
    }
}

impl From<EpsSchedule> for Vec<f64> {
    fn from(s: EpsSchedule) -> Self {
        s.values
    }
}

impl EpsSchedule {
    /// Values must be finite, strictly decreasing and non-negative; only the
    /// last entry may be zero (pseudo-time paths end at `s = 0`).
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Schedule("schedule is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Schedule("schedule has non-finite entries".into()));
        }
        if values.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Schedule("schedule must strictly decrease".into()));
        }
        if *values.last().unwrap() < 0.0 {
            return Err(Error::Schedule("schedule entries must be non-negative".into()));
        }
        Ok(EpsSchedule { values })
    }

    /// `start, start - step, ..., end`, with the step count rounded so `end` is hit exactly.
    pub fn linear(start: f64, end: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !(start > end) {
            return Err(Error::Schedule(format!(
                "linear schedule needs start > end and step > 0 (got {start}, {end}, {step})"
            )));
        }
        let n = ((start - end) / step).round().max(1.0) as usize;
        let mut values: Vec<f64> = (0..=n).map(|k| start + (end - start) * k as f64 / n as f64).collect();
        values[n] = end;
        EpsSchedule::new(values)
    }

    /// Coarse steps from `start` down to `switch`, then fine steps down to `end`.
    pub fn coarse_then_fine(start: f64, switch: f64, end: f64, coarse: f64, fine: f64) -> Result<Self> {
        let mut v = EpsSchedule::linear(start, switch, coarse)?.values;
        v.pop();
        v.extend(EpsSchedule::linear(switch, end, fine)?.values);
        EpsSchedule::new(v)
    }

    /// `1/15, 1/20, ..., 1/50`.
    pub fn highfreq_preset() -> Self {
        EpsSchedule::new((3..=10).map(|k| 1.0 / (5 * k) as f64).collect()).unwrap()
    }

    /// `0.1` down to `0.01` in steps of `0.001`.
    pub fn ac1d_preset() -> Self {
        EpsSchedule::linear(0.1, 0.01, 0.001).unwrap()
    }

    /// `s`: `1.0` down to `0.1` in steps of `0.1`, then to `0` in steps of `0.01`.
    pub fn ac2d_preset() -> Self {
        EpsSchedule::coarse_then_fine(1.0, 0.1, 0.0, 0.1, 0.01).unwrap()
    }

    /// `eps`: `1.0` down to `0.2` in steps of `0.1`, then to `end` in steps of `0.01`.
    pub fn helmholtz_preset(end: f64) -> Result<Self> {
        if end >= 0.2 {
            return EpsSchedule::linear(1.0, end, 0.1);
        }
        EpsSchedule::coarse_then_fine(1.0, 0.2, end, 0.1, 0.01)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn head(&self) -> f64 {
        self.values[0]
    }

    pub fn target(&self) -> f64 {
        *self.values.last().unwrap()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    Grid,
    UniformRandom,
}

/// Interior and boundary collocation points of one problem.
#[derive(Clone, Debug)]
pub struct CollocationSet {
    pub interior: Points,
    pub boundary: Points,
    pub domain: Domain,
}

fn integer_root(n: usize, d: usize) -> Option<usize> {
    let m = (n as f64).powf(1.0 / d as f64).round() as usize;
    (m.saturating_sub(1)..=m + 1).find(|&c| c.checked_pow(d as u32) == Some(n))
}

fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let r: f64 = rng.random();
        if r > 0.0 {
            return r;
        }
    }
}

/// Interior points (cell-centred tensor grid or i.i.d. uniform) and boundary
/// points spread over the box faces.
///
/// Faces receive `n_bc / (2 d)` points each with the remainder handed out
/// round-robin. In 1D the faces are the two end points; in grid mode the
/// points on each face are cell-centred along it, otherwise uniform.
pub fn sample_collocation(
    problem: &dyn Homotopy,
    n_res: usize,
    n_bc: usize,
    mode: SamplingMode,
    seed: u64,
) -> Result<CollocationSet> {
    let domain = problem.domain();
    let d = domain.dim;
    if n_res == 0 {
        return Err(Error::Collocation("n_res must be positive".into()));
    }
    if n_bc == 0 && problem.has_boundary() {
        return Err(Error::Collocation(format!("problem `{}` needs boundary points", problem.id())));
    }
    let (lo, hi) = (domain.lo, domain.hi);
    let width = hi - lo;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let interior = match mode {
        SamplingMode::Grid => {
            let m = integer_root(n_res, d).ok_or_else(|| {
                Error::Collocation(format!("n_res = {n_res} is not a perfect {d}-th power"))
            })?;
            let mut data = Vec::with_capacity(n_res * d);
            for idx in 0..n_res {
                let mut rem = idx;
                let mut row = vec![0.0; d];
                for c in (0..d).rev() {
                    row[c] = lo + (((rem % m) as f64) + 0.5) / m as f64 * width;
                    rem /= m;
                }
                data.extend(row);
            }
            Points::new(d, data)?
        }
        SamplingMode::UniformRandom => {
            let data = (0..n_res * d).map(|_| lo + open_unit(&mut rng) * width).collect();
            Points::new(d, data)?
        }
    };

    let faces = 2 * d;
    let mut per_face = vec![n_bc / faces; faces];
    for f in per_face.iter_mut().take(n_bc % faces) {
        *f += 1;
    }
    let mut bdata = Vec::with_capacity(n_bc * d);
    for (face, &count) in per_face.iter().enumerate() {
        let axis = face / 2;
        let fixed = if face % 2 == 0 { lo } else { hi };
        for j in 0..count {
            for c in 0..d {
                if c == axis {
                    bdata.push(fixed);
                } else if mode == SamplingMode::Grid && d == 2 {
                    bdata.push(lo + (j as f64 + 0.5) / count as f64 * width);
                } else {
                    bdata.push(lo + rng.random::<f64>() * width);
                }
            }
        }
    }
    let boundary = if n_bc == 0 { Points::empty(d) } else { Points::new(d, bdata)? };
    Ok(CollocationSet { interior, boundary, domain })
}
