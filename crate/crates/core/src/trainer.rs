//! Phase I training, the two path-tracking strategies and the classical baseline.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::linalg;
use crate::loss::{self, FrozenField, LossReport, Objective};
use crate::net::{self, NetworkParams};
use crate::optim::OptimizerKind;
use crate::points::Points;
use crate::problems::{CollocationSet, EpsSchedule, Homotopy};
use crate::reference;

/// Optimisation settings shared by every training segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    /// Epoch budget for Phase I and for the classical baseline.
    pub max_epochs: usize,
    /// Epoch budget of each Strategy 2 step.
    pub step_epochs: usize,
    /// Stop a segment once its total loss is at or below this. `None` runs the
    /// whole budget.
    pub tolerance: Option<f64>,
    /// Learning rates tried before Phase I; empty disables the search.
    pub lr_grid: Vec<f64>,
    /// Epochs spent on each grid candidate.
    pub probe_epochs: usize,
    pub lambda: f64,
    pub alpha: f64,
    /// Relative singular-value cutoff of the Strategy 1 pseudo-inverse.
    pub tau_svd: f64,
    /// A loss above this multiple of `max(starting loss, 1)` (or a non-finite
    /// one) aborts training.
    pub divergence_limit: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::adam(1e-3),
            max_epochs: 10_000,
            step_epochs: 1_000,
            tolerance: None,
            lr_grid: Vec::new(),
            probe_epochs: 500,
            lambda: 1.0,
            alpha: 1.0,
            tau_svd: 1e-4,
            divergence_limit: 1e6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Precondition(m.to_string()));
        if !(self.optimizer.lr() > 0.0) {
            return bad("learning rate must be positive");
        }
        if let Some(t) = self.tolerance {
            if !(t > 0.0) {
                return bad("tolerance must be positive");
            }
        }
        if self.lr_grid.iter().any(|&lr| !(lr > 0.0 && lr.is_finite())) {
            return bad("learning-rate grid entries must be positive");
        }
        if !self.lr_grid.is_empty() && self.probe_epochs == 0 {
            return bad("probe_epochs must be positive when the learning-rate grid is used");
        }
        if !(self.lambda >= 0.0) || !(self.alpha >= 0.0) {
            return bad("lambda and alpha must be non-negative");
        }
        if !(self.tau_svd >= 0.0 && self.tau_svd < 1.0) {
            return bad("tau_svd must lie in [0, 1)");
        }
        if !(self.divergence_limit > 0.0) {
            return bad("divergence_limit must be positive");
        }
        Ok(())
    }

    fn reached(&self, total: f64) -> bool {
        self.tolerance.is_some_and(|t| total <= t)
    }
}

/// One row of the per-epoch history.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub eps: f64,
    pub l_res: f64,
    pub l_bc: f64,
    pub l_heps: f64,
    pub total: f64,
    pub l2re: Option<f64>,
}

impl EpochRecord {
    fn new(epoch: usize, eps: f64, r: &LossReport) -> Self {
        EpochRecord { epoch, eps, l_res: r.l_res, l_bc: r.l_bc, l_heps: r.l_heps, total: r.total, l2re: None }
    }
}

/// Result of a direct minimisation (Phase I or the classical baseline).
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Best iterate seen.
    pub params: NetworkParams,
    pub report: LossReport,
    pub history: Vec<EpochRecord>,
    /// Learning rate actually used, after any grid search.
    pub lr: f64,
}

struct Segment {
    params: NetworkParams,
    report: LossReport,
    epochs: usize,
}

/// Full-batch minimisation of one objective with best-so-far acceptance.
///
/// Each epoch records the loss of the iterate it starts from, so the history
/// has one row per update. The iterate after the last update is evaluated too
/// and may become the returned one.
#[allow(clippy::too_many_arguments)]
fn minimize(
    problem: &dyn Homotopy,
    start: &NetworkParams,
    colloc: &CollocationSet,
    objective: Objective<'_>,
    optimizer: OptimizerKind,
    budget: usize,
    cfg: &TrainConfig,
    epoch_offset: usize,
    history: &mut Vec<EpochRecord>,
) -> Result<Segment> {
    let mut params = start.clone();
    let mut opt = optimizer.build(params.num_params());
    let mut grad = vec![0.0; params.num_params()];
    let mut best: Option<(NetworkParams, LossReport)> = None;
    let mut epochs = 0;
    let mut limit = f64::INFINITY;
    let diverged = |epoch: usize, total: f64, limit: f64| !(total.is_finite() && total <= limit) && epoch > 0;

    for epoch in 0..=budget {
        let report = match loss::evaluate(problem, &params, colloc, objective, Some(&mut grad)) {
            Ok(r) => r,
            Err(Error::NonFiniteLoss { .. }) if epoch > 0 => {
                return Err(Error::Divergence { epoch: epoch_offset + epoch, loss: f64::NAN })
            }
            Err(e) => return Err(e),
        };
        if epoch == 0 {
            limit = cfg.divergence_limit * report.total.max(1.0);
        }
        if diverged(epoch, report.total, limit) {
            return Err(Error::Divergence { epoch: epoch_offset + epoch, loss: report.total });
        }
        if best.as_ref().is_none_or(|(_, b)| report.total < b.total) {
            best = Some((params.clone(), report));
        }
        if epoch == budget || cfg.reached(report.total) {
            break;
        }
        history.push(EpochRecord::new(epoch_offset + epoch, objective.eps(), &report));
        epochs += 1;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence { epoch: epoch_offset + epoch, loss: report.total });
        }
        opt.step(params.as_mut_slice(), &grad);
    }
    let (params, report) = best.expect("at least one evaluation");
    Ok(Segment { params, report, epochs })
}

fn direct_training(
    problem: &dyn Homotopy,
    params: &NetworkParams,
    colloc: &CollocationSet,
    eps: f64,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let objective = Objective::Pinn { eps, lambda: cfg.lambda };
    let mut optimizer = cfg.optimizer;
    if !cfg.lr_grid.is_empty() {
        let mut best: Option<(f64, f64)> = None;
        let mut last_err = None;
        for &lr in &cfg.lr_grid {
            let mut scratch = Vec::new();
            match minimize(problem, params, colloc, objective, optimizer.with_lr(lr), cfg.probe_epochs, cfg, 0, &mut scratch) {
                Ok(seg) => {
                    if best.is_none_or(|(_, l)| seg.report.total < l) {
                        best = Some((lr, seg.report.total));
                    }
                }
                Err(e @ Error::Divergence { .. }) => last_err = Some(e),
                Err(e) => return Err(e),
            }
        }
        match best {
            Some((lr, _)) => optimizer = optimizer.with_lr(lr),
            None => return Err(last_err.expect("grid is non-empty")),
        }
    }
    let mut history = Vec::with_capacity(cfg.max_epochs);
    let seg = minimize(problem, params, colloc, objective, optimizer, cfg.max_epochs, cfg, 0, &mut history)?;
    Ok(TrainOutcome { params: seg.params, report: seg.report, history, lr: optimizer.lr() })
}

/// Phase I: direct training of `L_res + lambda L_bc` at the schedule head.
pub fn train_phase1(
    problem: &dyn Homotopy,
    params: &NetworkParams,
    colloc: &CollocationSet,
    eps0: f64,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    direct_training(problem, params, colloc, eps0, cfg)
}

/// Baseline: the same direct training, run at the target parameter.
pub fn train_classical(
    problem: &dyn Homotopy,
    params: &NetworkParams,
    colloc: &CollocationSet,
    eps_target: f64,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    direct_training(problem, params, colloc, eps_target, cfg)
}

/// A point on the tracked path.
#[derive(Clone, Debug)]
pub struct PathState {
    pub k: usize,
    pub eps: f64,
    pub params: NetworkParams,
    /// Field of the previously accepted step, `None` at the path start.
    pub prev: Option<FrozenField>,
}

impl PathState {
    pub fn start(params: NetworkParams, eps: f64) -> Self {
        PathState { k: 0, eps, params, prev: None }
    }
}

/// One forward Euler step of the parameter ODE, moving the path parameter
/// from `state.eps` to `state.eps - delta`.
///
/// Interior rows are `H_u` applied to the parameter Jacobian at each
/// collocation point with right-hand side `H_eps`; boundary rows are the
/// Jacobian of `u` weighted by `lambda` with right-hand side `-lambda dg/deps`.
/// The update is `theta + delta * pinv(M) r`.
pub fn euler_step_strategy1(
    problem: &dyn Homotopy,
    state: &PathState,
    colloc: &CollocationSet,
    delta: f64,
    lambda: f64,
    tau_svd: f64,
) -> Result<PathState> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Schedule(format!("Euler step size must be non-negative, got {delta}")));
    }
    if delta == 0.0 {
        return Ok(state.clone());
    }
    let eps = state.eps;
    let interior = net::param_jacobians(&state.params, &colloc.interior)?;
    let (ju, jl) = (interior.jac_u.as_ref().unwrap(), interior.jac_lap.as_ref().unwrap());
    let lap = interior.lap.as_ref().unwrap();
    let n = colloc.interior.len();
    let nb = if problem.has_boundary() { colloc.boundary.len() } else { 0 };
    let p = state.params.num_params();

    let mut m = DMatrix::zeros(n + nb, p);
    let mut r = vec![0.0; n + nb];
    for (i, x) in colloc.interior.rows().enumerate() {
        let (a, b) = problem.linearization(x, interior.u[i], eps);
        let mut row = m.row_mut(i);
        row.copy_from(&(ju.row(i) * a + jl.row(i) * b));
        r[i] = problem.h_eps(x, Jet::constant(interior.u[i]), Jet::constant(lap[i]), eps).v;
    }
    if nb > 0 {
        let bj = net::param_jacobians(&state.params, &colloc.boundary)?;
        let bju = bj.jac_u.as_ref().unwrap();
        for (j, x) in colloc.boundary.rows().enumerate() {
            m.row_mut(n + j).copy_from(&(bju.row(j) * lambda));
            r[n + j] = -lambda * problem.boundary_eps(x, eps);
        }
    }
    let dtheta = linalg::pinv_solve(&m, &r, tau_svd)?;
    let mut params = state.params.clone();
    for (t, d) in params.as_mut_slice().iter_mut().zip(&dtheta) {
        *t += delta * d;
    }
    if params.as_slice().iter().any(|t| !t.is_finite()) {
        return Err(Error::SingularPath(format!("non-finite parameters after the step from eps = {eps}")));
    }
    let prev = FrozenField::capture(problem, &state.params, colloc, eps)?;
    Ok(PathState { k: state.k + 1, eps: eps - delta, params, prev: Some(prev) })
}

/// Summary of one accepted path step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    pub eps: f64,
    pub total: f64,
    pub l_res: f64,
    pub l_bc: f64,
    pub l_heps: f64,
    pub epochs: usize,
    pub stalled: bool,
    pub l2re: Option<f64>,
}

impl StepRecord {
    fn new(k: usize, eps: f64, r: &LossReport, epochs: usize, stalled: bool, l2re: Option<f64>) -> Self {
        StepRecord { k, eps, total: r.total, l_res: r.l_res, l_bc: r.l_bc, l_heps: r.l_heps, epochs, stalled, l2re }
    }
}

/// Everything a path-tracking run produces. Index 0 of `params` and `steps`
/// is the starting point.
#[derive(Clone, Debug)]
pub struct PathOutcome {
    pub params: Vec<NetworkParams>,
    pub steps: Vec<StepRecord>,
    /// Frozen previous-step fields used by each step (`frozen[k - 1]` for step `k`).
    pub frozen: Vec<FrozenField>,
    pub history: Vec<EpochRecord>,
    pub warnings: Vec<String>,
}

impl PathOutcome {
    pub fn final_params(&self) -> &NetworkParams {
        self.params.last().unwrap()
    }

    pub fn final_step(&self) -> &StepRecord {
        self.steps.last().unwrap()
    }
}

/// L2RE against the exact solution, when the problem has one and evaluation
/// points were supplied.
pub fn exact_l2re(problem: &dyn Homotopy, params: &NetworkParams, points: Option<&Points>, eps: f64) -> Result<Option<f64>> {
    let Some(points) = points else { return Ok(None) };
    if !problem.has_exact() {
        return Ok(None);
    }
    let truth = reference::eval_exact(problem, points, eps)?;
    let pred = net::forward(params, points)?;
    reference::l2re(&pred, &truth).map(Some)
}

fn check_start(params: &NetworkParams, schedule: &EpsSchedule, colloc: &CollocationSet) -> Result<()> {
    if schedule.is_empty() {
        return Err(Error::Schedule("empty schedule".into()));
    }
    if params.input_dim() != colloc.interior.dim() {
        return Err(Error::Shape("network and collocation dimensions differ".into()));
    }
    Ok(())
}

/// Strategy 2: at every schedule entry after the head, minimise the homotopy
/// loss against the frozen previous step, starting from the previous
/// parameters, and accept the best iterate.
///
/// `params` must already solve the head problem (Phase I). A step whose best
/// loss stays above `10 * tolerance` is flagged as stalled and the path
/// continues.
pub fn track_strategy2(
    problem: &dyn Homotopy,
    params: &NetworkParams,
    schedule: &EpsSchedule,
    colloc: &CollocationSet,
    cfg: &TrainConfig,
    eval_points: Option<&Points>,
) -> Result<PathOutcome> {
    cfg.validate()?;
    check_start(params, schedule, colloc)?;
    let eps = schedule.values();
    let head = loss::loss_pinn(problem, params, colloc, eps[0], cfg.lambda)?;
    let mut out = PathOutcome {
        params: vec![params.clone()],
        steps: vec![StepRecord::new(0, eps[0], &head, 0, false, exact_l2re(problem, params, eval_points, eps[0])?)],
        frozen: Vec::new(),
        history: Vec::new(),
        warnings: Vec::new(),
    };
    let mut epoch = 0;
    for k in 1..eps.len() {
        let current = out.params.last().unwrap();
        let prev = FrozenField::capture(problem, current, colloc, eps[k - 1])?;
        let objective = Objective::Homotopy { eps: eps[k], prev: &prev, lambda: cfg.lambda, alpha: cfg.alpha };
        let seg = minimize(problem, current, colloc, objective, cfg.optimizer, cfg.step_epochs, cfg, epoch, &mut out.history)?;
        epoch += seg.epochs;
        let stalled = cfg.tolerance.is_some_and(|t| seg.report.total > 10.0 * t);
        if stalled {
            out.warnings.push(format!(
                "step {k} (eps = {}) stalled at loss {:.3e} after {} epochs",
                eps[k], seg.report.total, seg.epochs
            ));
        }
        let l2re = exact_l2re(problem, &seg.params, eval_points, eps[k])?;
        if let Some(last) = out.history.last_mut() {
            last.l2re = l2re;
        }
        out.steps.push(StepRecord::new(k, eps[k], &seg.report, seg.epochs, stalled, l2re));
        out.params.push(seg.params);
        out.frozen.push(prev);
    }
    Ok(out)
}

/// Strategy 1: forward Euler along the schedule with no re-optimisation.
/// Each step records `loss_pinn` at its new parameter value.
pub fn track_strategy1(
    problem: &dyn Homotopy,
    params: &NetworkParams,
    schedule: &EpsSchedule,
    colloc: &CollocationSet,
    cfg: &TrainConfig,
    eval_points: Option<&Points>,
) -> Result<PathOutcome> {
    cfg.validate()?;
    check_start(params, schedule, colloc)?;
    let eps = schedule.values();
    let head = loss::loss_pinn(problem, params, colloc, eps[0], cfg.lambda)?;
    let mut out = PathOutcome {
        params: vec![params.clone()],
        steps: vec![StepRecord::new(0, eps[0], &head, 0, false, exact_l2re(problem, params, eval_points, eps[0])?)],
        frozen: Vec::new(),
        history: Vec::new(),
        warnings: Vec::new(),
    };
    let mut state = PathState::start(params.clone(), eps[0]);
    for k in 1..eps.len() {
        state = euler_step_strategy1(problem, &state, colloc, eps[k - 1] - eps[k], cfg.lambda, cfg.tau_svd)?;
        // land exactly on the schedule value
        state.eps = eps[k];
        let report = loss::loss_pinn(problem, &state.params, colloc, eps[k], cfg.lambda)?;
        if !report.total.is_finite() || report.total > cfg.divergence_limit * head.total.max(1.0) {
            return Err(Error::Divergence { epoch: k, loss: report.total });
        }
        let l2re = exact_l2re(problem, &state.params, eval_points, eps[k])?;
        out.history.push(EpochRecord { l2re, ..EpochRecord::new(k, eps[k], &report) });
        out.steps.push(StepRecord::new(k, eps[k], &report, 0, false, l2re));
        out.params.push(state.params.clone());
        out.frozen.push(state.prev.clone().unwrap());
    }
    Ok(out)
}
