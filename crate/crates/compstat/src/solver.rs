//! Damped Newton iteration on the first-order system `(∇ₓL, g) = 0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::ProblemModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub max_backtracks: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-10,
            max_iter: 100,
            max_backtracks: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionSource {
    Newton,
    Analytic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionPoint {
    pub a: Vec<f64>,
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub source: SolutionSource,
    /// `‖x_newton − x_analytic‖∞` when an analytic solution was cross-checked.
    pub newton_discrepancy: Option<f64>,
}

/// Outcome of the second-order necessary condition on the tangent space.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrder {
    /// Largest eigenvalue of `Zᵀ L_xx Z`, `Z` spanning the tangent space.
    pub max_eigenvalue: f64,
    /// Smallest eigenvalue of the same matrix.
    pub min_eigenvalue: f64,
    pub satisfied: bool,
    /// Strict negative definiteness on the tangent space.
    pub strict: bool,
}

fn kkt_residual_vec(model: &ProblemModel, x: &[f64], a: &[f64], lambda: &[f64]) -> Result<DVector<f64>> {
    let b = model.derivs(x, a)?;
    let lx = b.lx(lambda);
    let g = b.g_values();
    Ok(DVector::from_iterator(
        lx.len() + g.len(),
        lx.iter().chain(g.iter()).copied(),
    ))
}

/// Max-norm of the stacked first-order system.
pub fn kkt_residual(model: &ProblemModel, x: &[f64], a: &[f64], lambda: &[f64]) -> Result<f64> {
    Ok(linalg::max_abs_vec(&kkt_residual_vec(model, x, a, lambda)?))
}

/// Least-squares multipliers for `∇ₓf = −Σ λ_k ∇ₓg^k`; the residual is the
/// max-norm of the part of `∇ₓf` outside the span of the constraint normals.
pub fn recover_multipliers(model: &ProblemModel, x: &[f64], a: &[f64]) -> Result<(Vec<f64>, f64)> {
    let b = model.derivs(x, a)?;
    let fx = b.f.gx.clone();
    if model.k() == 0 {
        return Ok((Vec::new(), linalg::max_abs_vec(&fx)));
    }
    let gt = b.gx().transpose();
    if linalg::numerical_rank(&gt, 1e-10) < model.k() {
        return Err(Error::RankDeficiency(
            "constraint gradients in decision space are linearly dependent".into(),
        ));
    }
    let lam = gt
        .clone()
        .svd(true, true)
        .solve(&(-&fx), 1e-14)
        .map_err(|e| Error::RankDeficiency(e.to_string()))?;
    let resid = linalg::max_abs_vec(&(fx + &gt * &lam));
    Ok((lam.iter().copied().collect(), resid))
}

fn newton_matrix(model: &ProblemModel, x: &[f64], a: &[f64], lambda: &[f64]) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let b = model.derivs(x, a)?;
    let (m, k) = (model.m(), model.k());
    let mut j = DMatrix::zeros(m + k, m + k);
    j.view_mut((0, 0), (m, m)).copy_from(&b.lxx(lambda));
    let gx = b.gx();
    j.view_mut((m, 0), (k, m)).copy_from(&gx);
    j.view_mut((0, m), (m, k)).copy_from(&gx.transpose());
    let lx = b.lx(lambda);
    let g = b.g_values();
    let r = DVector::from_iterator(m + k, lx.iter().chain(g.iter()).copied());
    Ok((j, r))
}

/// Newton direction; `None` when the bordered matrix is numerically singular.
fn newton_step(j: DMatrix<f64>, r: &DVector<f64>) -> Option<DVector<f64>> {
    if linalg::inverse_condition(&j) < 1e-15 {
        return None;
    }
    j.lu().solve(&(-r))
}

/// Finds an interior critical point from `x0` by damped Newton iteration.
pub fn solve_interior(model: &ProblemModel, a: &[f64], x0: &[f64], cfg: &SolverConfig) -> Result<SolutionPoint> {
    let (m, k) = (model.m(), model.k());
    if x0.len() != m {
        return Err(Error::dim("initial guess", m, x0.len()));
    }
    let mut x = x0.to_vec();
    let mut lambda = if k == 0 {
        Vec::new()
    } else {
        recover_multipliers(model, &x, a)?.0
    };
    let mut iterations = 0;
    let mut converged = false;
    let mut res_norm;
    loop {
        let (j, r) = newton_matrix(model, &x, a, &lambda)?;
        res_norm = linalg::max_abs_vec(&r);
        if res_norm <= cfg.tol {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iter {
            break;
        }
        let dz = newton_step(j, &r).ok_or_else(|| {
            Error::RankDeficiency(format!("singular Newton system at iteration {iterations}"))
        })?;
        match line_search(model, a, &x, &lambda, &dz, r.norm(), cfg.max_backtracks) {
            Some((xn, ln)) => {
                x = xn;
                lambda = ln;
            }
            None => break,
        }
        iterations += 1;
    }
    if converged {
        // Polish: keep a further full step only when it lowers the residual.
        for _ in 0..2 {
            let (j, r) = newton_matrix(model, &x, a, &lambda)?;
            let Some(dz) = newton_step(j, &r) else { break };
            let (xn, ln) = split_step(&x, &lambda, &dz, 1.0);
            match kkt_residual(model, &xn, a, &ln) {
                Ok(rn) if rn < res_norm => {
                    x = xn;
                    lambda = ln;
                    res_norm = rn;
                }
                _ => break,
            }
        }
    }
    Ok(SolutionPoint {
        a: a.to_vec(),
        x,
        lambda,
        kkt_residual: res_norm,
        iterations,
        converged,
        source: SolutionSource::Newton,
        newton_discrepancy: None,
    })
}

fn split_step(x: &[f64], lambda: &[f64], dz: &DVector<f64>, t: f64) -> (Vec<f64>, Vec<f64>) {
    let m = x.len();
    let xn = x.iter().enumerate().map(|(i, v)| v + t * dz[i]).collect();
    let ln = lambda.iter().enumerate().map(|(i, v)| v + t * dz[m + i]).collect();
    (xn, ln)
}

fn line_search(
    model: &ProblemModel,
    a: &[f64],
    x: &[f64],
    lambda: &[f64],
    dz: &DVector<f64>,
    r0: f64,
    max_backtracks: usize,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let mut t = 1.0;
    for _ in 0..=max_backtracks {
        let (xn, ln) = split_step(x, lambda, dz, t);
        if let Ok(r) = kkt_residual_vec(model, &xn, a, &ln) {
            if r.iter().all(|v| v.is_finite()) && r.norm() < r0 {
                return Some((xn, ln));
            }
        }
        t *= 0.5;
    }
    None
}

/// Solves at `a`. A registered closed form is authoritative; Newton from `x0`
/// runs as a cross-check and its discrepancy is recorded.
pub fn solve(model: &ProblemModel, a: &[f64], x0: &[f64], cfg: &SolverConfig) -> Result<SolutionPoint> {
    if a.len() != model.n() {
        return Err(Error::dim("parameter vector", model.n(), a.len()));
    }
    let Some(closed) = &model.analytic_solution else {
        return solve_interior(model, a, x0, cfg);
    };
    let (x, lambda) = closed(a)?;
    if x.len() != model.m() || lambda.len() != model.k() {
        return Err(Error::dim("analytic solution", model.m() + model.k(), x.len() + lambda.len()));
    }
    let kkt = kkt_residual(model, &x, a, &lambda)?;
    let newton_discrepancy = solve_interior(model, a, x0, cfg)
        .ok()
        .filter(|s| s.converged)
        .map(|s| s.x.iter().zip(&x).fold(0.0_f64, |acc, (u, v)| acc.max((u - v).abs())));
    Ok(SolutionPoint {
        a: a.to_vec(),
        x,
        lambda,
        kkt_residual: kkt,
        iterations: 0,
        converged: kkt <= cfg.tol.max(1e-9),
        source: SolutionSource::Analytic,
        newton_discrepancy,
    })
}

/// Checks `lᵀ L_xx l ≤ tol ‖l‖²` for every `l` tangent to the constraints.
pub fn second_order_check(model: &ProblemModel, sol: &SolutionPoint, tol: f64) -> Result<SecondOrder> {
    let b = model.derivs(&sol.x, &sol.a)?;
    let lxx = b.lxx(&sol.lambda);
    let (z, _) = linalg::nullspace(&b.gx(), 1e-10);
    if z.ncols() == 0 {
        return Ok(SecondOrder {
            max_eigenvalue: 0.0,
            min_eigenvalue: 0.0,
            satisfied: true,
            strict: true,
        });
    }
    let eig = linalg::sym_eigenvalues(&(z.transpose() * lxx * &z));
    let max = eig[eig.len() - 1];
    let min = eig[0];
    let scale = linalg::max_abs_vec(&eig).max(1e-300);
    Ok(SecondOrder {
        max_eigenvalue: max,
        min_eigenvalue: min,
        satisfied: max <= tol,
        strict: max < -1e-10 * scale,
    })
}
