//! Minimum-variance portfolio with wealth and expected-return targets, solved
//! in principal-portfolio coordinates.
//!
//! The covariance `σ` is diagonalized as `σ = E diag(σ²) Eᵀ`. In the new
//! coordinates the problem reads `max −Σ σ²_μ X²_μ` subject to `𝒲 = W·X` and
//! `𝓡 = R·X`, with `W = Eᵀw` and `R = Eᵀr`; holdings map back as `x = E X`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::util::{self, block, col};
use super::{BenchmarkEntry, PropertyCheck};
use crate::analysis::{Analysis, IsovectorRecipe, Prescription};
use crate::diagnostics::CheckReport;
use crate::error::{Error, Result};
use crate::jet::{self, Scalar};
use crate::linalg;
use crate::model::{exact, InvarianceGenerator, ProblemModel, ScalarMap, Smooth, VecMap};
use crate::sensitivity;
use crate::solver::{self, SolutionPoint};

/// Principal variances below this fraction of the largest count as riskless.
pub const RISKLESS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioConfig {
    pub sigma: DMatrix<f64>,
    pub w: Vec<f64>,
    pub r: Vec<f64>,
    /// Wealth target `𝒲`.
    pub wealth: f64,
    /// Expected-return target `𝓡`.
    pub target: f64,
}

impl Default for PortfolioConfig {
    fn default() -> Self {
        PortfolioConfig {
            sigma: DMatrix::from_row_slice(3, 3, &[0.10, 0.02, 0.01, 0.02, 0.08, 0.03, 0.01, 0.03, 0.12]),
            w: vec![1.0; 3],
            r: vec![1.05, 1.10, 1.20],
            wealth: 1.0,
            target: 1.12,
        }
    }
}

/// Principal-portfolio description of a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Principal {
    /// Columns are the retained eigenvectors `e^μ`, largest-magnitude entry positive.
    pub vectors: DMatrix<f64>,
    pub variances: Vec<f64>,
    pub w: Vec<f64>,
    pub r: Vec<f64>,
    pub wealth: f64,
    pub target: f64,
    /// Indices (in ascending eigenvalue order) of riskless components left out.
    pub dropped: Vec<usize>,
}

impl Principal {
    pub fn from_config(cfg: &PortfolioConfig) -> Result<Self> {
        let m = cfg.sigma.nrows();
        if cfg.sigma.ncols() != m || cfg.w.len() != m || cfg.r.len() != m {
            return Err(Error::Config("covariance, w and r must share one dimension".into()));
        }
        if linalg::symmetry_residual(&cfg.sigma) > 1e-12 * linalg::max_abs(&cfg.sigma).max(1.0) {
            return Err(Error::Config("covariance matrix must be symmetric".into()));
        }
        let (values, vectors) = linalg::sym_eigen(&cfg.sigma);
        let top = linalg::max_abs_vec(&values);
        if values.iter().any(|v| *v < -RISKLESS_TOL * top) {
            return Err(Error::Config("covariance matrix must be positive semidefinite".into()));
        }
        let mut kept = Vec::new();
        let mut dropped = Vec::new();
        for i in 0..m {
            if values[i] > RISKLESS_TOL * top {
                kept.push(i);
            } else {
                dropped.push(i);
            }
        }
        if kept.len() < 2 {
            return Err(Error::Config("need at least two risky principal portfolios".into()));
        }
        let mut e = DMatrix::zeros(m, kept.len());
        for (c, &i) in kept.iter().enumerate() {
            let mut v = vectors.column(i).into_owned();
            let lead = v.iter().copied().fold(0.0_f64, |acc, u| if u.abs() > acc.abs() { u } else { acc });
            if lead < 0.0 {
                v = -v;
            }
            e.set_column(c, &v);
        }
        let w = (e.transpose() * DVector::from_column_slice(&cfg.w)).iter().copied().collect();
        let r = (e.transpose() * DVector::from_column_slice(&cfg.r)).iter().copied().collect();
        Ok(Principal {
            variances: kept.iter().map(|&i| values[i]).collect(),
            vectors: e,
            w,
            r,
            wealth: cfg.wealth,
            target: cfg.target,
            dropped,
        })
    }

    pub fn dim(&self) -> usize {
        self.variances.len()
    }

    /// `(σ², W, 𝒲, R, 𝓡)`.
    pub fn point(&self) -> Vec<f64> {
        let mut a = self.variances.clone();
        a.extend(&self.w);
        a.push(self.wealth);
        a.extend(&self.r);
        a.push(self.target);
        a
    }
}

/// Closed-form solution in principal coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedForm {
    pub x: Vec<f64>,
    /// Multipliers of the minimization problem.
    pub lambda: [f64; 2],
    pub variance: f64,
}

/// `X_μ = (λ1 W̄_μ + λ2 R̄_μ)/(2σ_μ)` with `W̄ = W/σ`, `R̄ = R/σ`.
pub fn closed_form(a: &[f64], m: usize) -> Result<ClosedForm> {
    let var = &a[..m];
    if var.iter().any(|v| *v <= 0.0) {
        return Err(Error::Domain("principal variances must be positive".into()));
    }
    let sd: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
    let wb: Vec<f64> = (0..m).map(|i| a[m + i] / sd[i]).collect();
    let rb: Vec<f64> = (0..m).map(|i| a[2 * m + 1 + i] / sd[i]).collect();
    let (wealth, target) = (a[2 * m], a[3 * m + 1]);
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| p * q).sum::<f64>();
    let d = dot(&wb, &wb) * dot(&rb, &rb) - dot(&wb, &rb).powi(2);
    if d.abs() <= 1e-14 * dot(&wb, &wb) * dot(&rb, &rb) {
        return Err(Error::RankDeficiency("wealth and return vectors are parallel".into()));
    }
    let v: Vec<f64> = (0..m).map(|i| wealth * rb[i] - target * wb[i]).collect();
    let l1 = 2.0 * dot(&rb, &v) / d;
    let l2 = -2.0 * dot(&wb, &v) / d;
    Ok(ClosedForm {
        x: (0..m).map(|i| (l1 * wb[i] + l2 * rb[i]) / (2.0 * sd[i])).collect(),
        lambda: [l1, l2],
        variance: dot(&v, &v) / d,
    })
}

/// Return target minimizing the variance and the minimal variance,
/// `𝓡* = 𝒲 W̄·R̄/W̄·W̄` and `𝒲²/W̄·W̄`.
pub fn frontier_minimum(p: &Principal) -> (f64, f64) {
    let m = p.dim();
    let wb: Vec<f64> = (0..m).map(|i| p.w[i] / p.variances[i].sqrt()).collect();
    let rb: Vec<f64> = (0..m).map(|i| p.r[i] / p.variances[i].sqrt()).collect();
    let ww: f64 = wb.iter().map(|v| v * v).sum();
    let wr: f64 = wb.iter().zip(&rb).map(|(u, v)| u * v).sum();
    (p.wealth * wr / ww, p.wealth * p.wealth / ww)
}

#[derive(Debug, Clone)]
struct PrincipalVariance {
    m: usize,
}

impl Smooth for PrincipalVariance {
    fn eval<S: Scalar>(&self, x: &[S], a: &[S]) -> S {
        -jet::sum((0..self.m).map(|i| a[i].clone() * x[i].clone() * x[i].clone()))
    }
}

/// `a[total] − a[start..start+M]·X`.
#[derive(Debug, Clone)]
struct Target {
    start: usize,
    total: usize,
}

impl Smooth for Target {
    fn eval<S: Scalar>(&self, x: &[S], a: &[S]) -> S {
        a[self.total].clone() - jet::dot(x, &a[self.start..self.start + x.len()])
    }
}

/// `−xᵀσx` with constraints `𝒲 − w·x`, `𝓡 − r·x`, parameters `(w, 𝒲, r, 𝓡)`.
#[derive(Debug, Clone)]
struct Covariance {
    sigma: DMatrix<f64>,
}

impl Smooth for Covariance {
    fn eval<S: Scalar>(&self, x: &[S], _a: &[S]) -> S {
        let m = x.len();
        let mut out = S::cst(0.0);
        for i in 0..m {
            let row: Vec<f64> = (0..m).map(|j| self.sigma[(i, j)]).collect();
            out = out + x[i].clone() * jet::dot_c(x, &row);
        }
        -out
    }
}

/// The problem in the original asset coordinates.
pub fn original_model(cfg: &PortfolioConfig) -> ProblemModel {
    let m = cfg.w.len();
    ProblemModel::new(
        "efficient_portfolio_original",
        m,
        2 * m + 2,
        exact(Covariance { sigma: cfg.sigma.clone() }),
        vec![
            exact(Target { start: 0, total: m }),
            exact(Target {
                start: m + 1,
                total: 2 * m + 1,
            }),
        ],
    )
    .with_groups(&[("w", m), ("wealth", 1), ("r", m), ("target", 1)])
}

pub fn original_point(cfg: &PortfolioConfig) -> Vec<f64> {
    let mut a = cfg.w.clone();
    a.push(cfg.wealth);
    a.extend(&cfg.r);
    a.push(cfg.target);
    a
}

pub fn register(cfg: &PortfolioConfig) -> Result<BenchmarkEntry> {
    let pr = Principal::from_config(cfg)?;
    let m = pr.dim();
    let n = 3 * m + 2;
    let mut model = ProblemModel::new(
        "efficient_portfolio",
        m,
        n,
        exact(PrincipalVariance { m }),
        vec![
            exact(Target { start: m, total: 2 * m }),
            exact(Target {
                start: 2 * m + 1,
                total: 3 * m + 1,
            }),
        ],
    )
    .with_groups(&[("var", m), ("W", m), ("wealth", 1), ("R", m), ("target", 1)])
    .with_decision_names((1..=m).map(|i| format!("X{i}")).collect());
    model.analytic_solution = Some(Arc::new(move |a: &[f64]| {
        let c = closed_form(a, m)?;
        Ok((c.x, vec![-c.lambda[0], -c.lambda[1]]))
    }));
    let id: ScalarMap = Arc::new(|v| v);
    let zero: ScalarMap = Arc::new(|_| 0.0);
    let mut wealth_group: Vec<usize> = (m..2 * m).collect();
    wealth_group.push(2 * m);
    let return_group: Vec<usize> = (2 * m + 1..3 * m + 2).collect();
    model.invariance_generators = vec![
        InvarianceGenerator::euler("homogeneity(var)", (0..m).collect(), m)
            .with_responses(Some(id.clone()), Some(vec![zero.clone(), zero.clone()])),
        InvarianceGenerator::euler("homogeneity(W,wealth)", wealth_group, m)
            .with_responses(Some(zero.clone()), Some(vec![id.clone(), zero.clone()])),
        InvarianceGenerator::euler("homogeneity(R,target)", return_group, m)
            .with_responses(Some(zero.clone()), Some(vec![zero, id])),
    ];
    let prescribe = Arc::new(move |model: &ProblemModel, sol: &SolutionPoint| {
        let mut rows = DMatrix::zeros(3 * m, n);
        for i in 0..m {
            rows[(i, i)] = 1.0;
            rows[(m + i, m + i)] = 1.0;
            rows[(m + i, 2 * m)] = sol.x[i];
            rows[(2 * m + i, 2 * m + 1 + i)] = 1.0;
            rows[(2 * m + i, 3 * m + 1)] = sol.x[i];
        }
        let labels = (0..m)
            .chain(m..2 * m)
            .chain(2 * m + 1..3 * m + 1)
            .map(|i| format!("D({})", model.parameter_names[i]))
            .collect();
        Ok(Prescription {
            rows,
            labels,
            annihilates_objective: false,
        })
    });
    let initial_guess: VecMap = Arc::new(move |a: &[f64]| {
        let total: f64 = a[m..2 * m].iter().map(|v| v * v).sum();
        (0..m).map(|i| a[2 * m] * a[m + i] / total).collect()
    });
    let summary = if pr.dropped.is_empty() {
        "minimum-variance portfolio in principal coordinates".to_string()
    } else {
        format!(
            "minimum-variance portfolio in principal coordinates; {} riskless component(s) excluded",
            pr.dropped.len()
        )
    };
    let c = cfg.clone();
    let p2 = pr.clone();
    Ok(BenchmarkEntry {
        name: "efficient_portfolio".into(),
        summary,
        model,
        default_point: pr.point(),
        initial_guess,
        isovectors: IsovectorRecipe::Prescribed(prescribe),
        derived: Vec::new(),
        suite: vec![
            PropertyCheck::new("principal_blocks", principal_checks),
            PropertyCheck::new("original_form", move |an| original_checks(an, &c, &pr)),
            PropertyCheck::new("frontier", move |an| frontier_checks(an, &p2)),
        ],
    })
}

/// Blocks of the principal CSM in its textbook form (minimization signs).
#[derive(Debug, Clone)]
pub struct PrincipalBlocks {
    /// `∂X²_μ/∂σ²_ν = 2 X_μ ∂X_μ/∂σ²_ν`.
    pub var_block: DMatrix<f64>,
    pub sigma_w: DMatrix<f64>,
    pub sigma_r: DMatrix<f64>,
    pub dx_dvar: DMatrix<f64>,
    pub lambda: [f64; 2],
}

impl PrincipalBlocks {
    pub fn from_analysis(an: &Analysis) -> Self {
        let m = an.model.m();
        let xj = an.x_jac();
        let x = &an.solution.x;
        let dx_dvar = block(xj, 0..m, 0..m);
        let xr = col(x).transpose();
        let sigma_w = block(xj, 0..m, m..2 * m) + block(xj, 0..m, 2 * m..2 * m + 1) * &xr;
        let sigma_r = block(xj, 0..m, 2 * m + 1..3 * m + 1) + block(xj, 0..m, 3 * m + 1..3 * m + 2) * &xr;
        let var_block = DMatrix::from_fn(m, m, |i, j| 2.0 * x[i] * dx_dvar[(i, j)]);
        PrincipalBlocks {
            var_block,
            sigma_w,
            sigma_r,
            dx_dvar,
            lambda: [-an.solution.lambda[0], -an.solution.lambda[1]],
        }
    }

    /// The 3×3 block matrix, negative semidefinite in minimization signs.
    pub fn assembled(&self, x: &[f64]) -> DMatrix<f64> {
        let m = x.len();
        let [l1, l2] = self.lambda;
        let xd = util::diag(x);
        let mut out = DMatrix::zeros(3 * m, 3 * m);
        let blocks = [
            [self.var_block.clone(), 2.0 * &xd * &self.sigma_w, 2.0 * &xd * &self.sigma_r],
            [-l1 * &self.dx_dvar, -l1 * &self.sigma_w, -l1 * &self.sigma_r],
            [-l2 * &self.dx_dvar, -l2 * &self.sigma_w, -l2 * &self.sigma_r],
        ];
        for (i, row) in blocks.iter().enumerate() {
            for (j, b) in row.iter().enumerate() {
                out.view_mut((i * m, j * m), (m, m)).copy_from(b);
            }
        }
        out
    }
}

fn principal_checks(an: &Analysis) -> Result<Vec<CheckReport>> {
    let m = an.model.m();
    let a = &an.solution.a;
    let x = &an.solution.x;
    let b = PrincipalBlocks::from_analysis(an);
    let cf = closed_form(a, m)?;
    let [l1, l2] = b.lambda;
    let tol = an.settings.tolerances.analytic;
    let coh = an.settings.tolerances.coherence;
    let variance: f64 = (0..m).map(|i| a[i] * x[i] * x[i]).sum();
    let xgap = x.iter().zip(&cf.x).fold(0.0_f64, |acc, (u, v)| acc.max((u - v).abs()));
    let lgap = (l1 - cf.lambda[0]).abs().max((l2 - cf.lambda[1]).abs());
    let w = col(&a[m..2 * m]);
    let r = col(&a[2 * m + 1..3 * m + 1]);
    let inv_x: Vec<f64> = x.iter().map(|v| 1.0 / v).collect();
    let scaled_var = util::diag(&inv_x) * &b.var_block * util::diag(&inv_x);
    let mut null = 0.0_f64;
    for mat in [&scaled_var, &b.sigma_w, &b.sigma_r] {
        let s = linalg::max_abs(mat).max(1.0);
        for v in [&w, &r] {
            null = null.max(linalg::max_abs(&(mat * v)) / s);
        }
    }
    let xd = util::diag(x);
    let via_w = -4.0 * &xd * &b.sigma_w * &xd / l1;
    let via_r = -4.0 * &xd * &b.sigma_r * &xd / l2;
    let rank_tol = an.settings.csm.rank_tol;
    Ok(vec![
        CheckReport::compare(
            "portfolio:closed_form_solution",
            "KKT solution matches the principal-coordinate closed form",
            xgap,
            tol,
        ),
        CheckReport::compare("portfolio:closed_form_multipliers", "multipliers match their closed forms", lgap, tol),
        util::scalar(
            "portfolio:variance_formula",
            "portfolio variance matches its closed form",
            variance,
            cf.variance,
            1e-10 * cf.variance.abs().max(1.0),
        ),
        util::rel_close(
            "portfolio:csm_blocks",
            "CSM is the negative of the textbook block matrix",
            &an.omega.matrix,
            &(-b.assembled(x)),
            coh,
        ),
        util::nsd("portfolio:variance_block_nsd", &b.var_block, tol),
        util::nsd("portfolio:wealth_block_nsd", &(-l1 * &b.sigma_w), tol),
        util::nsd("portfolio:return_block_nsd", &(-l2 * &b.sigma_r), tol),
        util::rel_close(
            "portfolio:variance_block_via_wealth",
            "∂X²/∂σ² = −4 X Σ^W X / λ1",
            &b.var_block,
            &via_w,
            coh,
        ),
        util::rel_close(
            "portfolio:variance_block_via_return",
            "∂X²/∂σ² = −4 X Σ^R X / λ2",
            &b.var_block,
            &via_r,
            coh,
        ),
        CheckReport::compare(
            "portfolio:null_vectors",
            "W and R are null vectors of all three blocks",
            null,
            1e-8,
        ),
        util::rank_at_most("portfolio:variance_block_rank", &b.var_block, m - 2, rank_tol),
        util::rank_at_most("portfolio:wealth_block_rank", &b.sigma_w, m - 2, rank_tol),
        util::rank_at_most("portfolio:return_block_rank", &b.sigma_r, m - 2, rank_tol),
    ])
}

fn original_checks(an: &Analysis, cfg: &PortfolioConfig, pr: &Principal) -> Result<Vec<CheckReport>> {
    if an.solution.a != pr.point() {
        return Ok(vec![CheckReport::skipped(
            "portfolio:back_map",
            "original-form holdings equal E X",
            "only evaluated at the configured point",
        )]);
    }
    let m = cfg.w.len();
    let model = original_model(cfg);
    let a = original_point(cfg);
    let mapped: Vec<f64> = (&pr.vectors * DVector::from_column_slice(&an.solution.x)).iter().copied().collect();
    let x0: Vec<f64> = vec![cfg.wealth / m as f64; m];
    let sol = solver::solve(&model, &a, &x0, &an.settings.solver)?;
    let sens = sensitivity::decision_jacobian_ift(&model, &sol)?;
    let gap = sol.x.iter().zip(&mapped).fold(0.0_f64, |acc, (u, v)| acc.max((u - v).abs()));
    let xr = col(&sol.x).transpose();
    let xj = &sens.x_jac;
    let s_w = block(xj, 0..m, 0..m) + block(xj, 0..m, m..m + 1) * &xr;
    let s_r = block(xj, 0..m, m + 1..2 * m + 1) + block(xj, 0..m, 2 * m + 1..2 * m + 2) * &xr;
    let (l1, l2) = (-sol.lambda[0], -sol.lambda[1]);
    let tol = an.settings.tolerances.analytic;
    let w = col(&cfg.w);
    let r = col(&cfg.r);
    let null = [&s_w, &s_r]
        .iter()
        .flat_map(|s| [linalg::max_abs(&(*s * &w)), linalg::max_abs(&(*s * &r))])
        .fold(0.0_f64, f64::max);
    Ok(vec![
        CheckReport::compare("portfolio:back_map", "original-form holdings equal E X", gap, 1e-8),
        util::psd("portfolio:wealth_slutsky_psd", &(l1 * &s_w), tol),
        util::psd("portfolio:return_slutsky_psd", &(l2 * &s_r), tol),
        util::rel_close(
            "portfolio:slutsky_relation",
            "λ2 Σ^w = λ1 Σ^r",
            &(l2 * &s_w),
            &(l1 * &s_r),
            an.settings.tolerances.coherence,
        ),
        CheckReport::compare(
            "portfolio:original_null_vectors",
            "w and r are null vectors of both Slutsky matrices",
            null,
            1e-8,
        ),
        util::rank_at_most("portfolio:original_rank", &s_w, m.saturating_sub(2), an.settings.csm.rank_tol),
    ])
}

fn frontier_checks(_an: &Analysis, pr: &Principal) -> Result<Vec<CheckReport>> {
    let m = pr.dim();
    let (r_star, v_min) = frontier_minimum(pr);
    let mut a = pr.point();
    a[3 * m + 1] = r_star;
    let at_min = closed_form(&a, m)?.variance;
    // A coarse scan must not find anything lower.
    let mut scan_min = f64::INFINITY;
    for k in -50..=50 {
        a[3 * m + 1] = r_star + 0.02 * k as f64;
        scan_min = scan_min.min(closed_form(&a, m)?.variance);
    }
    Ok(vec![
        util::scalar(
            "portfolio:frontier_minimum",
            "variance at the optimal return target equals 𝒲²/W̄·W̄",
            at_min,
            v_min,
            1e-10 * v_min.max(1.0),
        ),
        CheckReport::compare(
            "portfolio:frontier_scan",
            "no return target gives a lower variance",
            (v_min - scan_min).max(0.0),
            1e-12,
        )
        .with_note(format!("optimal return {r_star:.12}, minimal variance {v_min:.12}")),
    ])
}
