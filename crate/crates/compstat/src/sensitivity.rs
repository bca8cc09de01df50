//! Parameter Jacobians `∂x/∂a` and `∂λ/∂a` of the solution.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{KktBlocks, ProblemModel};
use crate::solver::{self, SolutionPoint, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivityMethod {
    Fd,
    Ift,
    Analytic,
}

impl std::str::FromStr for SensitivityMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fd" => Ok(SensitivityMethod::Fd),
            "ift" => Ok(SensitivityMethod::Ift),
            "analytic" => Ok(SensitivityMethod::Analytic),
            other => Err(Error::Config(format!("unknown sensitivity method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityBundle {
    /// M×N, entry `(i, μ) = ∂x_i/∂a_μ`.
    pub x_jac: DMatrix<f64>,
    /// K×N, entry `(k, μ) = ∂λ_k/∂a_μ`.
    pub lambda_jac: DMatrix<f64>,
    pub method: SensitivityMethod,
    /// Relative step, FD only.
    pub step: Option<f64>,
    /// Max-norm gap to an independently computed Jacobian, when available.
    pub cross_check_residual: Option<f64>,
}

/// Default relative step for re-solve differences.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Solves the bordered system `[L_xx Gᵀ; G 0][X; Λ] = −[L_xa; g_a]`.
pub fn decision_jacobian_ift(model: &ProblemModel, sol: &SolutionPoint) -> Result<SensitivityBundle> {
    let b = model.derivs(&sol.x, &sol.a)?;
    ift_from_blocks(&b, &sol.lambda)
}

pub fn ift_from_blocks(b: &KktBlocks, lambda: &[f64]) -> Result<SensitivityBundle> {
    let (m, n, k) = (b.m(), b.n(), b.k());
    let bordered = bordered_matrix(b, lambda);
    let rc = linalg::inverse_condition(&bordered);
    if rc < 1e-13 {
        return Err(Error::Degeneracy(format!(
            "bordered Hessian is numerically singular (inverse condition {rc:.2e})"
        )));
    }
    let mut rhs = DMatrix::zeros(m + k, n);
    rhs.view_mut((0, 0), (m, n)).copy_from(&(-b.lxa(lambda)));
    rhs.view_mut((m, 0), (k, n)).copy_from(&(-b.ga()));
    let sol = bordered
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Degeneracy("LU factorisation of bordered Hessian failed".into()))?;
    Ok(SensitivityBundle {
        x_jac: sol.rows(0, m).into_owned(),
        lambda_jac: sol.rows(m, k).into_owned(),
        method: SensitivityMethod::Ift,
        step: None,
        cross_check_residual: None,
    })
}

pub fn bordered_matrix(b: &KktBlocks, lambda: &[f64]) -> DMatrix<f64> {
    let (m, k) = (b.m(), b.k());
    let mut out = DMatrix::zeros(m + k, m + k);
    out.view_mut((0, 0), (m, m)).copy_from(&b.lxx(lambda));
    let gx = b.gx();
    out.view_mut((m, 0), (k, m)).copy_from(&gx);
    out.view_mut((0, m), (m, k)).copy_from(&gx.transpose());
    out
}

/// Central differences of re-solved solutions, one parameter per task,
/// warm-started from the base solution.
pub fn decision_jacobian_fd(
    model: &ProblemModel,
    sol: &SolutionPoint,
    cfg: &SolverConfig,
    step: f64,
) -> Result<SensitivityBundle> {
    let (m, n, k) = (model.m(), model.n(), model.k());
    let columns: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..n)
        .into_par_iter()
        .map(|mu| {
            let h = step * sol.a[mu].abs().max(1.0);
            let at = |sign: f64| -> Result<SolutionPoint> {
                let mut a = sol.a.clone();
                a[mu] += sign * h;
                let s = solver::solve_interior(model, &a, &sol.x, cfg).map_err(|e| Error::Sensitivity {
                    parameter: model.parameter_names[mu].clone(),
                    reason: e.to_string(),
                })?;
                if !s.converged {
                    return Err(Error::Sensitivity {
                        parameter: model.parameter_names[mu].clone(),
                        reason: format!("no convergence at the stencil point (residual {:.2e})", s.kkt_residual),
                    });
                }
                Ok(s)
            };
            let up = at(1.0)?;
            let dn = at(-1.0)?;
            let dx = up.x.iter().zip(&dn.x).map(|(u, d)| (u - d) / (2.0 * h)).collect();
            let dl = up
                .lambda
                .iter()
                .zip(&dn.lambda)
                .map(|(u, d)| (u - d) / (2.0 * h))
                .collect();
            Ok((dx, dl))
        })
        .collect();
    let mut x_jac = DMatrix::zeros(m, n);
    let mut lambda_jac = DMatrix::zeros(k, n);
    for (mu, col) in columns.into_iter().enumerate() {
        let (dx, dl) = col?;
        for i in 0..m {
            x_jac[(i, mu)] = dx[i];
        }
        for j in 0..k {
            lambda_jac[(j, mu)] = dl[j];
        }
    }
    Ok(SensitivityBundle {
        x_jac,
        lambda_jac,
        method: SensitivityMethod::Fd,
        step: Some(step),
        cross_check_residual: None,
    })
}

/// Closed-form Jacobians registered on the model.
pub fn decision_jacobian_analytic(model: &ProblemModel, sol: &SolutionPoint) -> Result<SensitivityBundle> {
    let f = model
        .analytic_sensitivity
        .as_ref()
        .ok_or_else(|| Error::Config(format!("model '{}' has no analytic sensitivities", model.name)))?;
    let (x_jac, lambda_jac) = f(&sol.a)?;
    if x_jac.shape() != (model.m(), model.n()) {
        return Err(Error::dim("analytic decision Jacobian", model.m() * model.n(), x_jac.len()));
    }
    if lambda_jac.shape() != (model.k(), model.n()) {
        return Err(Error::dim("analytic multiplier Jacobian", model.k() * model.n(), lambda_jac.len()));
    }
    Ok(SensitivityBundle {
        x_jac,
        lambda_jac,
        method: SensitivityMethod::Analytic,
        step: None,
        cross_check_residual: None,
    })
}

/// Computes the bundle with `method`; `cross_with` adds a second method's
/// max-norm discrepancy on `x_jac`.
pub fn compute(
    model: &ProblemModel,
    sol: &SolutionPoint,
    method: SensitivityMethod,
    cross_with: Option<SensitivityMethod>,
    cfg: &SolverConfig,
    fd_step: f64,
) -> Result<SensitivityBundle> {
    let run = |m: SensitivityMethod| match m {
        SensitivityMethod::Fd => decision_jacobian_fd(model, sol, cfg, fd_step),
        SensitivityMethod::Ift => decision_jacobian_ift(model, sol),
        SensitivityMethod::Analytic => decision_jacobian_analytic(model, sol),
    };
    let mut bundle = run(method)?;
    if let Some(other) = cross_with.filter(|o| *o != method) {
        let alt = run(other)?;
        bundle.cross_check_residual = Some(linalg::max_abs(&(&bundle.x_jac - &alt.x_jac)));
    }
    Ok(bundle)
}

/// Max-norm of `g_a + G X`, the differentiated constraint identity.
pub fn constraint_identity_residual(b: &KktBlocks, bundle: &SensitivityBundle) -> f64 {
    if b.k() == 0 {
        return 0.0;
    }
    linalg::max_abs(&(b.ga() + b.gx() * &bundle.x_jac))
}
