//! Pass/fail checks of the structural properties at a solution point.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::csm::{CsmContext, CsmResult, SignConvention};
use crate::error::Result;
use crate::geometry::{self, ConformanceTable, IsovectorSet};
use crate::linalg;
use crate::model::{InvarianceGenerator, ProblemModel, Target, Wrt};
use crate::sensitivity::{self, SensitivityBundle};
use crate::solver::{self, SolutionPoint, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub verdict: Verdict,
    pub residual: Option<f64>,
    pub tolerance: Option<f64>,
    /// The property being checked, in words.
    pub property: String,
    /// Skip reason or supplementary observation.
    pub note: Option<String>,
}

impl CheckReport {
    /// Passes iff `residual ≤ tolerance` (NaN fails).
    pub fn compare(name: impl Into<String>, property: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        let verdict = if residual <= tolerance { Verdict::Pass } else { Verdict::Fail };
        CheckReport {
            name: name.into(),
            verdict,
            residual: Some(residual),
            tolerance: Some(tolerance),
            property: property.into(),
            note: None,
        }
    }

    pub fn flag(name: impl Into<String>, property: impl Into<String>, ok: bool, note: impl Into<String>) -> Self {
        CheckReport {
            name: name.into(),
            verdict: if ok { Verdict::Pass } else { Verdict::Fail },
            residual: None,
            tolerance: None,
            property: property.into(),
            note: Some(note.into()),
        }
    }

    pub fn skipped(name: impl Into<String>, property: impl Into<String>, reason: impl Into<String>) -> Self {
        CheckReport {
            name: name.into(),
            verdict: Verdict::Skipped,
            residual: None,
            tolerance: None,
            property: property.into(),
            note: Some(reason.into()),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn failed(&self) -> bool {
        self.verdict == Verdict::Fail
    }
}

/// Tolerances for the different derivative paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Checks on exact-derivative quantities.
    pub analytic: f64,
    /// Checks involving finite differences of re-solved solutions.
    pub fd: f64,
    /// Relative agreement between CSM recipes.
    pub coherence: f64,
    /// FD versus IFT Jacobians.
    pub method: f64,
    /// Constraint conformance of compensated derivatives.
    pub conformance: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            analytic: 1e-8,
            fd: 1e-5,
            coherence: 1e-6,
            method: 1e-4,
            conformance: 1e-6,
        }
    }
}

/// Directional derivative of the value function along each isovector,
/// compared with the objective's compensated partial at fixed `x`.
pub fn check_envelope(
    model: &ProblemModel,
    sol: &SolutionPoint,
    iso: &IsovectorSet,
    step: f64,
    cfg: &SolverConfig,
    tol: f64,
) -> Result<CheckReport> {
    let name = "envelope";
    let property = "value function derivative along each isovector equals the objective's partial with decisions held fixed";
    let fa = DMatrix::from_row_slice(
        1,
        model.n(),
        &model.numeric_gradient(Target::Objective, Wrt::A, &sol.x, &sol.a)?.values,
    );
    let expected = &fa * iso.vectors.transpose();
    let scale = sol.a.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let mut worst = 0.0_f64;
    let mut worst_null = 0.0_f64;
    for alpha in 0..iso.a() {
        let t = iso.vectors.row(alpha);
        let h = step * scale / t.norm().max(f64::MIN_POSITIVE);
        let value_at = |sign: f64| -> Option<f64> {
            let a: Vec<f64> = sol.a.iter().zip(t.iter()).map(|(ai, ti)| ai + sign * h * ti).collect();
            let s = solver::solve_interior(model, &a, &sol.x, cfg).ok().filter(|s| s.converged)?;
            model.objective_value(&s.x, &a).ok()
        };
        let (Some(up), Some(dn)) = (value_at(1.0), value_at(-1.0)) else {
            return Ok(CheckReport::skipped(
                name,
                property,
                format!("solver did not converge at the stencil points of isovector {}", alpha + 1),
            ));
        };
        let v_semi = (up - dn) / (2.0 * h);
        let e = expected[(0, alpha)];
        worst = worst.max((v_semi - e).abs() / e.abs().max(1.0));
        if iso.annihilates_objective {
            worst_null = worst_null.max(v_semi.abs());
        }
    }
    let definiteness = solver::second_order_check(model, sol, 1e-8)?;
    let residual = worst.max(worst_null);
    let note = format!(
        "tangent Hessian of L is {} (max eigenvalue {:.3e})",
        if definiteness.strict { "negative definite" } else { "only semidefinite" },
        definiteness.max_eigenvalue
    );
    Ok(CheckReport::compare(name, property, residual, tol).with_note(note))
}

/// Residual `X_i(x) − Σ_μ A_μ(a) x_{i,μ}` of an invariance generator.
pub fn check_invariance(
    gen: &InvarianceGenerator,
    sol: &SolutionPoint,
    sens: &SensitivityBundle,
    tol: f64,
) -> CheckReport {
    let xm = (gen.x_map)(&sol.x);
    let am = (gen.a_map)(&sol.a);
    let a_vec = nalgebra::DVector::from_vec(am);
    let drift = &sens.x_jac * a_vec;
    let resid = xm
        .iter()
        .zip(drift.iter())
        .fold(0.0_f64, |m, (u, v)| m.max((u - v).abs()));
    let xnorm = sol.x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    CheckReport::compare(
        format!("invariance:{}", gen.name),
        "decision functions are invariant under the generator",
        resid,
        tol * xnorm,
    )
}

/// Symmetry and the expected sign of the spectrum.
pub fn check_semidefinite(
    name: &str,
    matrix: &DMatrix<f64>,
    expected: SignConvention,
    tol: f64,
    symmetry_tol: f64,
) -> CheckReport {
    if matrix.is_empty() {
        return CheckReport::compare(name, "empty matrix is trivially semidefinite", 0.0, tol);
    }
    let eig = linalg::sym_eigenvalues(matrix);
    let scale = linalg::max_abs_vec(&eig).max(1.0);
    let sym = linalg::symmetry_residual(matrix) / linalg::max_abs(matrix).max(1.0);
    let wrong_sign = match expected {
        SignConvention::PositiveSemidefiniteExpected => (-eig.min()).max(0.0),
        SignConvention::NegativeSemidefiniteExpected => eig.max().max(0.0),
    } / scale;
    let property = match expected {
        SignConvention::PositiveSemidefiniteExpected => "symmetric positive semidefinite",
        SignConvention::NegativeSemidefiniteExpected => "symmetric negative semidefinite",
    };
    let pass = sym <= symmetry_tol && wrong_sign <= tol;
    CheckReport {
        name: name.to_string(),
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        residual: Some(wrong_sign.max(sym)),
        tolerance: Some(tol.min(symmetry_tol)),
        property: property.into(),
        note: Some(format!(
            "eigenvalues in [{:.3e}, {:.3e}], relative asymmetry {:.2e}",
            eig.min(),
            eig.max(),
            sym
        )),
    }
}

pub fn check_csm_semidefinite(csm: &CsmResult, tol: f64) -> CheckReport {
    check_semidefinite(
        &format!("semidefinite:{}", csm.recipe.name()),
        &csm.matrix,
        csm.sign_convention,
        tol,
        csm.symmetry_tol,
    )
}

/// `rank ≤ bound`.
pub fn check_rank_bound(name: &str, rank: usize, bound: usize) -> CheckReport {
    CheckReport::flag(
        name,
        "rank does not exceed the structural bound",
        rank <= bound,
        format!("rank {rank}, bound {bound}"),
    )
}

/// Rank of an A×A CSM against `min(M − K, A)`.
pub fn check_omega_rank(csm: &CsmResult, m: usize, k: usize) -> CheckReport {
    let bound = m.saturating_sub(k).min(csm.dim());
    check_rank_bound(&format!("rank:{}", csm.recipe.name()), csm.rank_estimate, bound)
}

/// Relative agreement `‖A − B‖∞ ≤ tol · max(‖A‖∞, tiny)`.
pub fn check_coherence(name: &str, a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> CheckReport {
    let property = "two constructions of the same matrix agree";
    if a.shape() != b.shape() {
        return CheckReport::flag(name, property, false, "shape mismatch");
    }
    let diff = linalg::max_abs(&(a - b));
    let scale = linalg::max_abs(a).max(linalg::max_abs(b));
    let rel = if scale == 0.0 { diff } else { diff / scale };
    CheckReport::compare(name, property, rel, tol)
}

pub fn check_conformance(table: &ConformanceTable, tol: f64) -> CheckReport {
    CheckReport::compare(
        "conformance",
        "compensated decision derivatives are orthogonal to the constraint normals",
        table.max,
        tol,
    )
}

pub fn check_null_property(iso: &IsovectorSet, tol: f64) -> CheckReport {
    let worst = iso
        .null_residuals
        .iter()
        .map(|r| if r.gradient_norm > 0.0 { r.residual / r.gradient_norm } else { r.residual })
        .fold(0.0_f64, f64::max);
    let mut rep = CheckReport::compare(
        "null_property",
        "isovectors annihilate the parameter gradients of every target function",
        worst,
        tol,
    );
    if iso.redundant {
        rep = rep.with_note("isovector rows are linearly dependent; the redundant operators remain valid");
    }
    rep
}

pub fn check_constraint_identity(ctx: &CsmContext, sens: &SensitivityBundle, tol: f64) -> CheckReport {
    CheckReport::compare(
        "constraint_identity",
        "differentiated constraints hold along the solution",
        sensitivity::constraint_identity_residual(&ctx.blocks, sens),
        tol,
    )
}

/// FD re-solve Jacobian against the bordered-system Jacobian.
pub fn check_fd_vs_ift(
    model: &ProblemModel,
    sol: &SolutionPoint,
    cfg: &SolverConfig,
    fd_step: f64,
    tol: f64,
) -> Result<CheckReport> {
    let name = "fd_vs_ift";
    let property = "finite-difference and implicit-function Jacobians agree";
    let ift = sensitivity::decision_jacobian_ift(model, sol)?;
    match sensitivity::decision_jacobian_fd(&model.without_closed_forms(), sol, cfg, fd_step) {
        Ok(fd) => Ok(CheckReport::compare(name, property, linalg::max_abs(&(fd.x_jac - ift.x_jac)), tol)),
        Err(e) => Ok(CheckReport::skipped(name, property, e.to_string())),
    }
}

/// Compares the compensated matrix for separable constraints
/// `κ_l − k^l(x, p) = 0`, assembled term by term, with `Ω` on the same rows.
pub fn check_hatta_reduction(
    model: &ProblemModel,
    sol: &SolutionPoint,
    ctx: &CsmContext,
    tol: f64,
) -> Result<CheckReport> {
    let name = "separable_constraint_reduction";
    let property = "compensated matrix for separable constraints equals the general CSM on the same operators";
    let Some(sep) = &model.separable else {
        return Ok(CheckReport::skipped(name, property, "model constraints are not of separable form"));
    };
    let n = model.n();
    let b = &ctx.blocks;
    // ∂k^l/∂p_α = −∂g^l/∂p_α
    let dk = |l: usize, p: usize| -b.g[l].ga[p];
    let mut rows = DMatrix::zeros(sep.prices.len(), n);
    for (r, &p) in sep.prices.iter().enumerate() {
        rows[(r, p)] = 1.0;
        for (l, &kap) in sep.kappa.iter().enumerate() {
            rows[(r, kap)] += dk(l, p);
        }
    }
    let stack = geometry::target_gradients(model, sol, false)?;
    let iso = match geometry::prescribe_isovectors(rows, &stack, false) {
        Ok(iso) => iso,
        Err(e) => return Ok(CheckReport::skipped(name, property, e.to_string())),
    };
    let omega = ctx.omega(&iso)?;
    let pa = sep.prices.len();
    let mut display = DMatrix::zeros(pa, pa);
    for (ai, &pa_idx) in sep.prices.iter().enumerate() {
        for (bi, &pb_idx) in sep.prices.iter().enumerate() {
            let mut s = 0.0;
            for i in 0..model.m() {
                let mut coef = b.f.hxa[(i, pa_idx)];
                for (l, g) in b.g.iter().enumerate() {
                    // λ_l k^l_{,iα} = −λ_l g^l_{,iα}
                    coef += ctx.lambda[l] * g.hxa[(i, pa_idx)];
                }
                let mut comp = ctx.x_jac[(i, pb_idx)];
                for (l, &kap) in sep.kappa.iter().enumerate() {
                    comp += dk(l, pb_idx) * ctx.x_jac[(i, kap)];
                }
                s += coef * comp;
            }
            display[(ai, bi)] = s;
        }
    }
    let coh = check_coherence(name, &display, &omega.matrix, tol);
    let psd = check_semidefinite(
        "separable_constraint_reduction:semidefinite",
        &display,
        SignConvention::PositiveSemidefiniteExpected,
        1e-8,
        1e-6,
    );
    let ok = coh.passed() && psd.passed();
    Ok(CheckReport {
        verdict: if ok { Verdict::Pass } else { Verdict::Fail },
        note: Some(format!(
            "agreement residual {:.2e}; {}",
            coh.residual.unwrap_or(f64::NAN),
            psd.note.unwrap_or_default()
        )),
        ..coh
    })
}

/// Generator response identities `J f = F(f)`, `J g = G(g)` at the solution.
pub fn check_generator_responses(
    model: &ProblemModel,
    gen: &InvarianceGenerator,
    sol: &SolutionPoint,
    tol: f64,
) -> Result<CheckReport> {
    let name = format!("generator_response:{}", gen.name);
    let property = "objective and constraints transform as declared under the generator";
    Ok(match model.check_generator_responses(gen, &sol.x, &sol.a)? {
        Some(r) => CheckReport::compare(name, property, r, tol),
        None => CheckReport::skipped(name, property, "generator declares no response maps"),
    })
}
