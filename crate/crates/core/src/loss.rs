//! Residual loss and the homotopy loss, with parameter gradients.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::net::{self, NetworkParams};
use crate::problems::{CollocationSet, Homotopy};

/// Loss components. `total = l_res + lambda * l_bc + alpha * l_heps`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub l_res: f64,
    pub l_bc: f64,
    pub l_heps: f64,
    pub lambda: f64,
    pub alpha: f64,
}

/// Network values (and Laplacians, when the problem needs them) at the
/// interior collocation points for an accepted path step.
#[derive(Clone, Debug, PartialEq)]
pub struct FrozenField {
    pub eps: f64,
    pub u: Vec<f64>,
    pub lap: Vec<f64>,
}

impl FrozenField {
    pub fn capture(problem: &dyn Homotopy, params: &NetworkParams, colloc: &CollocationSet, eps: f64) -> Result<Self> {
        let n = colloc.interior.len();
        let (u, lap) = net::loss_view(params, &colloc.interior, problem.uses_laplacian())?;
        Ok(FrozenField { eps, u, lap: lap.unwrap_or_else(|| vec![0.0; n]) })
    }
}

/// Which objective to evaluate.
#[derive(Clone, Copy, Debug)]
pub enum Objective<'a> {
    /// `L_res + lambda L_bc` at `eps`.
    Pinn { eps: f64, lambda: f64 },
    /// `L_res + lambda L_bc + alpha L_Heps` at `eps`, with the direction
    /// `(u - prev.u) / (eps - prev.eps)` taken against the frozen previous step.
    Homotopy { eps: f64, prev: &'a FrozenField, lambda: f64, alpha: f64 },
}

impl Objective<'_> {
    pub fn eps(&self) -> f64 {
        match *self {
            Objective::Pinn { eps, .. } | Objective::Homotopy { eps, .. } => eps,
        }
    }
}

fn check_colloc(problem: &dyn Homotopy, params: &NetworkParams, colloc: &CollocationSet) -> Result<()> {
    if colloc.interior.dim() != problem.dim() || params.input_dim() != problem.dim() {
        return Err(Error::Shape(format!(
            "problem `{}` is {}-dimensional, collocation {} and network {}",
            problem.id(),
            problem.dim(),
            colloc.interior.dim(),
            params.input_dim()
        )));
    }
    if colloc.interior.is_empty() {
        return Err(Error::Collocation("no interior points".into()));
    }
    Ok(())
}

/// Evaluates an objective, and its parameter gradient when `grad` is given.
pub fn evaluate(
    problem: &dyn Homotopy,
    params: &NetworkParams,
    colloc: &CollocationSet,
    objective: Objective<'_>,
    mut grad: Option<&mut [f64]>,
) -> Result<LossReport> {
    check_colloc(problem, params, colloc)?;
    let eps = objective.eps();
    let n = colloc.interior.len();
    let (lambda, alpha, hom) = match objective {
        Objective::Pinn { lambda, .. } => (lambda, 0.0, None),
        Objective::Homotopy { prev, lambda, alpha, .. } => {
            let de = eps - prev.eps;
            if !(prev.eps - eps > 0.0) {
                return Err(Error::Schedule(format!(
                    "homotopy step must decrease the path parameter ({} -> {eps})",
                    prev.eps
                )));
            }
            if prev.u.len() != n || prev.lap.len() != n {
                return Err(Error::Shape("frozen field does not match the collocation set".into()));
            }
            (lambda, alpha, Some((prev, de)))
        }
    };
    if let Some(g) = grad.as_deref_mut() {
        g.fill(0.0);
    }

    let l_res = Cell::new(0.0);
    let l_heps = Cell::new(0.0);
    let scale = 0.5 / n as f64;
    let mut interior = |i: usize, x: &[f64], u: Jet, lap: Jet| -> Jet {
        let h = problem.residual(x, u, lap, eps);
        let r = scale * h.square();
        l_res.set(l_res.get() + r.v);
        match hom {
            None => r,
            Some((prev, de)) => {
                let v = (u - prev.u[i]) / de;
                let lap_v = (lap - prev.lap[i]) / de;
                let q = problem.hu_action(x, u, v, lap_v, eps) + problem.h_eps(x, u, lap, eps);
                let t = scale * q.square();
                l_heps.set(l_heps.get() + t.v);
                if alpha == 0.0 {
                    r
                } else {
                    r + alpha * t
                }
            }
        }
    };
    net::accumulate_scalar(params, &colloc.interior, problem.uses_laplacian(), &mut interior, grad.as_deref_mut())?;

    let nb = colloc.boundary.len();
    let l_bc = Cell::new(0.0);
    if nb > 0 {
        let bscale = 0.5 / nb as f64;
        let mut boundary = |_: usize, x: &[f64], u: Jet, _: Jet| -> Jet {
            let t = bscale * (u - problem.boundary_value(x, eps)).square();
            l_bc.set(l_bc.get() + t.v);
            lambda * t
        };
        net::accumulate_scalar(params, &colloc.boundary, false, &mut boundary, grad.as_deref_mut()).map_err(
            |e| match e {
                Error::NonFiniteLoss { index, .. } => Error::NonFiniteLoss { index, boundary: true },
                other => other,
            },
        )?;
    }

    let (l_res, l_bc, l_heps) = (l_res.get(), l_bc.get(), l_heps.get());
    Ok(LossReport { total: l_res + lambda * l_bc + alpha * l_heps, l_res, l_bc, l_heps, lambda, alpha })
}

/// `L_res + lambda L_bc` at `eps`.
pub fn loss_pinn(
    problem: &dyn Homotopy,
    params: &NetworkParams,
    colloc: &CollocationSet,
    eps: f64,
    lambda: f64,
) -> Result<LossReport> {
    evaluate(problem, params, colloc, Objective::Pinn { eps, lambda }, None)
}

/// Homotopy loss at `eps` against the frozen previous step `prev`.
pub fn loss_homotopy(
    problem: &dyn Homotopy,
    params: &NetworkParams,
    prev: &FrozenField,
    colloc: &CollocationSet,
    eps: f64,
    lambda: f64,
    alpha: f64,
) -> Result<LossReport> {
    evaluate(problem, params, colloc, Objective::Homotopy { eps, prev, lambda, alpha }, None)
}

/// Loss and gradient in one call.
pub fn loss_and_grad(
    problem: &dyn Homotopy,
    params: &NetworkParams,
    colloc: &CollocationSet,
    objective: Objective<'_>,
) -> Result<(LossReport, Vec<f64>)> {
    let mut g = vec![0.0; params.num_params()];
    let rep = evaluate(problem, params, colloc, objective, Some(&mut g))?;
    Ok((rep, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::init_xavier;
    use crate::problems::{sample_collocation, AllenCahn1d, HighFrequency, SamplingMode};

    #[test]
    fn zero_network_boundary_loss() {
        let p = NetworkParams::zeros(&[1, 10, 1]).unwrap();
        let c = sample_collocation(&AllenCahn1d, 50, 2, SamplingMode::Grid, 0).unwrap();
        let r = loss_pinn(&AllenCahn1d, &p, &c, 0.1, 1.0).unwrap();
        assert_eq!(r.l_bc, 0.5);
        assert_eq!(r.l_res, 0.0);
        assert_eq!(r.total, 0.5);
    }

    #[test]
    fn lambda_zero_drops_boundary() {
        let p = init_xavier(&[1, 10, 10, 1], 4).unwrap();
        let c = sample_collocation(&AllenCahn1d, 50, 2, SamplingMode::Grid, 0).unwrap();
        let r = loss_pinn(&AllenCahn1d, &p, &c, 0.05, 0.0).unwrap();
        assert_eq!(r.total, r.l_res);
        assert!(r.l_bc > 0.0);
    }

    #[test]
    fn report_total_identity() {
        let p = init_xavier(&[1, 10, 10, 1], 4).unwrap();
        let c = sample_collocation(&AllenCahn1d, 50, 2, SamplingMode::Grid, 0).unwrap();
        let prev = FrozenField::capture(&AllenCahn1d, &init_xavier(&[1, 10, 10, 1], 5).unwrap(), &c, 0.06).unwrap();
        let r = loss_homotopy(&AllenCahn1d, &p, &prev, &c, 0.05, 0.7, 1.3).unwrap();
        let want = r.l_res + 0.7 * r.l_bc + 1.3 * r.l_heps;
        assert!((r.total - want).abs() <= 1e-12 * want.abs());
    }

    /// `H = u - x`, independent of the path parameter.
    struct StaticTarget;

    impl Homotopy for StaticTarget {
        fn id(&self) -> &str {
            "static"
        }
        fn dim(&self) -> usize {
            1
        }
        fn domain(&self) -> crate::problems::Domain {
            HighFrequency.domain()
        }
        fn uses_laplacian(&self) -> bool {
            false
        }
        fn has_boundary(&self) -> bool {
            false
        }
        fn residual(&self, x: &[f64], u: Jet, _: Jet, _: f64) -> Jet {
            u - x[0]
        }
        fn hu_action(&self, _: &[f64], _: Jet, v: Jet, _: Jet, _: f64) -> Jet {
            v
        }
        fn h_eps(&self, _: &[f64], _: Jet, _: Jet, _: f64) -> Jet {
            Jet::ZERO
        }
    }

    #[test]
    fn unchanged_params_and_static_family_have_zero_heps() {
        let p = init_xavier(&[1, 8, 1], 1).unwrap();
        let c = sample_collocation(&StaticTarget, 40, 0, SamplingMode::Grid, 0).unwrap();
        let prev = FrozenField::capture(&StaticTarget, &p, &c, 0.05).unwrap();
        let r = loss_homotopy(&StaticTarget, &p, &prev, &c, 0.04, 1.0, 1.0).unwrap();
        assert_eq!(r.l_heps, 0.0);
        assert!(r.l_res > 0.0);
    }

    #[test]
    fn alpha_zero_matches_pinn_loss() {
        let p = init_xavier(&[1, 10, 1], 4).unwrap();
        let c = sample_collocation(&AllenCahn1d, 30, 2, SamplingMode::Grid, 0).unwrap();
        let prev = FrozenField::capture(&AllenCahn1d, &init_xavier(&[1, 10, 1], 9).unwrap(), &c, 0.06).unwrap();
        let h = loss_homotopy(&AllenCahn1d, &p, &prev, &c, 0.05, 1.0, 0.0).unwrap();
        let pl = loss_pinn(&AllenCahn1d, &p, &c, 0.05, 1.0).unwrap();
        assert_eq!(h.total, pl.total);
    }

    #[test]
    fn non_increasing_step_is_schedule_error() {
        let p = init_xavier(&[1, 4, 1], 0).unwrap();
        let c = sample_collocation(&AllenCahn1d, 10, 2, SamplingMode::Grid, 0).unwrap();
        let prev = FrozenField::capture(&AllenCahn1d, &p, &c, 0.05).unwrap();
        assert!(matches!(loss_homotopy(&AllenCahn1d, &p, &prev, &c, 0.05, 1.0, 1.0), Err(Error::Schedule(_))));
        assert!(matches!(loss_homotopy(&AllenCahn1d, &p, &prev, &c, 0.06, 1.0, 1.0), Err(Error::Schedule(_))));
    }
}
