//! End-to-end pipeline: solve, differentiate, build isovectors and CSMs,
//! then run the generic structural checks.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::csm::{CsmConfig, CsmContext, CsmResult, Recipe};
use crate::diagnostics::{self as diag, CheckReport, Tolerances};
use crate::error::{Error, Result};
use crate::geometry::{self, BasisKind, IsovectorSet};
use crate::linalg;
use crate::model::{ProblemModel, Target};
use crate::sensitivity::{self, SensitivityBundle, SensitivityMethod, DEFAULT_FD_STEP};
use crate::solver::{self, SolutionPoint, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    /// Registered closed forms where available, exact derivatives otherwise.
    Analytic,
    /// Newton solve and implicit-function Jacobians only.
    Numeric,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Analytic => "analytic",
            Pipeline::Numeric => "numeric",
        }
    }
}

impl std::str::FromStr for Pipeline {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(Pipeline::Analytic),
            "numeric" => Ok(Pipeline::Numeric),
            other => Err(Error::Config(format!("unknown pipeline '{other}'"))),
        }
    }
}

/// Rows, labels and objective flag of a prescribed isovector set.
#[derive(Debug, Clone)]
pub struct Prescription {
    pub rows: DMatrix<f64>,
    pub labels: Vec<String>,
    pub annihilates_objective: bool,
}

pub type PrescribeFn = Arc<dyn Fn(&ProblemModel, &SolutionPoint) -> Result<Prescription> + Send + Sync>;

/// How the isovectors of a model are obtained.
#[derive(Clone)]
pub enum IsovectorRecipe {
    Nullspace { annihilate_objective: bool },
    OneTerm { target: Target, comp: usize },
    Prescribed(PrescribeFn),
}

impl std::fmt::Debug for IsovectorRecipe {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IsovectorRecipe::Nullspace { annihilate_objective } => f
                .debug_struct("Nullspace")
                .field("annihilate_objective", annihilate_objective)
                .finish(),
            IsovectorRecipe::OneTerm { target, comp } => {
                f.debug_struct("OneTerm").field("target", target).field("comp", comp).finish()
            }
            IsovectorRecipe::Prescribed(_) => f.write_str("Prescribed"),
        }
    }
}

impl IsovectorRecipe {
    pub fn kind(&self) -> BasisKind {
        match self {
            IsovectorRecipe::Nullspace { .. } => BasisKind::Nullspace,
            IsovectorRecipe::OneTerm { .. } => BasisKind::OneTerm,
            IsovectorRecipe::Prescribed(_) => BasisKind::Prescribed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub pipeline: Pipeline,
    pub solver: SolverConfig,
    pub tolerances: Tolerances,
    pub csm: CsmConfig,
    pub fd_step: f64,
    /// Recipes to report; `None` means every recipe applicable to the model.
    pub recipes: Option<Vec<Recipe>>,
    /// Overrides the model's own isovector recipe.
    pub basis: Option<BasisKind>,
    /// Runs the re-solve based envelope check.
    pub envelope: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            pipeline: Pipeline::Analytic,
            solver: SolverConfig::default(),
            tolerances: Tolerances::default(),
            csm: CsmConfig::default(),
            fd_step: DEFAULT_FD_STEP,
            recipes: None,
            basis: None,
            envelope: true,
        }
    }
}

impl Settings {
    pub fn with_pipeline(mut self, p: Pipeline) -> Self {
        self.pipeline = p;
        self
    }
}

/// A labeled matrix computed by a model-specific hook.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedMatrix {
    pub name: String,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub matrix: DMatrix<f64>,
}

/// Everything computed at one parameter point.
#[derive(Debug, Clone)]
pub struct Analysis {
    /// The model as used; closed forms are stripped in the numeric pipeline.
    pub model: ProblemModel,
    pub settings: Settings,
    pub solution: SolutionPoint,
    pub sensitivity: SensitivityBundle,
    pub isovectors: IsovectorSet,
    pub context: CsmContext,
    /// Mixed-partial CSM on the isovector set, always built.
    pub omega: CsmResult,
    pub csms: Vec<CsmResult>,
    pub derived: Vec<DerivedMatrix>,
    pub checks: Vec<CheckReport>,
}

impl Analysis {
    pub fn x_jac(&self) -> &DMatrix<f64> {
        &self.sensitivity.x_jac
    }

    /// `X_; = X Tᵀ`.
    pub fn x_semicolon(&self) -> DMatrix<f64> {
        &self.sensitivity.x_jac * self.isovectors.vectors.transpose()
    }

    /// Index of a named parameter.
    pub fn param(&self, name: &str) -> Result<usize> {
        self.model
            .parameter_names
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| Error::Config(format!("model '{}' has no parameter '{name}'", self.model.name)))
    }

    /// Parameter indices of a named group.
    pub fn group(&self, name: &str) -> Result<std::ops::Range<usize>> {
        self.model
            .group(name)
            .map(|g| g.start..g.start + g.len)
            .ok_or_else(|| Error::Config(format!("model '{}' has no parameter group '{name}'", self.model.name)))
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| !c.failed())
    }

    pub fn failures(&self) -> Vec<&CheckReport> {
        self.checks.iter().filter(|c| c.failed()).collect()
    }

    pub fn check(&self, name: &str) -> Option<&CheckReport> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn csm(&self, recipe: Recipe) -> Option<&CsmResult> {
        self.csms.iter().find(|c| c.recipe == recipe)
    }
}

/// Builds the isovector set for `recipe`, honouring a basis override.
pub fn isovectors_for(
    model: &ProblemModel,
    sol: &SolutionPoint,
    recipe: &IsovectorRecipe,
    basis: Option<BasisKind>,
) -> Result<IsovectorSet> {
    let kind = basis.unwrap_or(recipe.kind());
    match (kind, recipe) {
        (BasisKind::Nullspace, IsovectorRecipe::Nullspace { annihilate_objective }) => {
            let stack = geometry::target_gradients(model, sol, *annihilate_objective)?;
            geometry::build_isovectors(&stack, *annihilate_objective)
        }
        (BasisKind::Nullspace, _) => {
            let stack = geometry::target_gradients(model, sol, false)?;
            geometry::build_isovectors(&stack, false)
        }
        (BasisKind::OneTerm, IsovectorRecipe::OneTerm { target, comp }) => {
            geometry::one_term_compensation(model, sol, *target, *comp)
        }
        (BasisKind::Prescribed, IsovectorRecipe::Prescribed(f)) => {
            let p = f(model, sol)?;
            let stack = geometry::target_gradients(model, sol, p.annihilates_objective)?;
            Ok(geometry::prescribe_isovectors(p.rows, &stack, p.annihilates_objective)?.with_labels(p.labels))
        }
        (k, _) => Err(Error::Config(format!(
            "model '{}' does not define a {} isovector basis",
            model.name,
            match k {
                BasisKind::OneTerm => "one_term",
                BasisKind::Prescribed => "prescribed",
                BasisKind::Nullspace => "nullspace",
            }
        ))),
    }
}

/// Recipes that can be built for this problem without a precondition error.
pub fn applicable_recipes(ctx: &CsmContext) -> Vec<Recipe> {
    let mut out = vec![Recipe::Omega, Recipe::OmegaQuadratic];
    let unconstrained = ctx.blocks.k() == 0;
    let positive = ctx.blocks.f.value > 0.0;
    if positive {
        out.push(Recipe::OmegaLog);
    }
    if unconstrained {
        out.push(Recipe::OmegaUnconstrained);
        if positive {
            out.push(Recipe::OmegaLogUnconstrained);
        }
    }
    out.push(Recipe::Silberberg);
    out.push(Recipe::Universal);
    out
}

/// Runs the full pipeline on a model at parameter point `a`.
pub fn analyze(
    model: &ProblemModel,
    recipe: &IsovectorRecipe,
    a: &[f64],
    x0: &[f64],
    settings: &Settings,
) -> Result<Analysis> {
    let work = match settings.pipeline {
        Pipeline::Analytic => model.clone(),
        Pipeline::Numeric => model.without_closed_forms(),
    };
    let sol = solver::solve(&work, a, x0, &settings.solver)?;
    if !sol.converged {
        return Err(Error::Solver(format!(
            "no convergence after {} iterations (KKT residual {:.3e})",
            sol.iterations, sol.kkt_residual
        )));
    }
    let (method, cross) = if work.analytic_sensitivity.is_some() {
        (SensitivityMethod::Analytic, Some(SensitivityMethod::Ift))
    } else {
        (SensitivityMethod::Ift, None)
    };
    let sens = sensitivity::compute(&work, &sol, method, cross, &settings.solver, settings.fd_step)?;
    let iso = isovectors_for(&work, &sol, recipe, settings.basis)?;
    let ctx = CsmContext::new(&work, &sol, &sens, settings.csm)?;
    let omega = ctx.omega(&iso)?;

    let mut checks = Vec::new();
    let requested = settings.recipes.clone();
    let list = requested.clone().unwrap_or_else(|| applicable_recipes(&ctx));
    let mut csms = Vec::new();
    for r in list {
        match ctx.build(r, &iso) {
            Ok(c) => csms.push(c),
            Err(e) => checks.push(CheckReport::skipped(
                format!("csm:{}", r.name()),
                "requested CSM recipe could be built",
                e.to_string(),
            )),
        }
    }
    let mut analysis = Analysis {
        model: work,
        settings: settings.clone(),
        solution: sol,
        sensitivity: sens,
        isovectors: iso,
        context: ctx,
        omega,
        csms,
        derived: Vec::new(),
        checks,
    };
    let generic = generic_checks(&analysis)?;
    analysis.checks.extend(generic);
    Ok(analysis)
}

fn generic_checks(an: &Analysis) -> Result<Vec<CheckReport>> {
    let tol = &an.settings.tolerances;
    let model = &an.model;
    let sol = &an.solution;
    let ctx = &an.context;
    let (m, k) = (model.m(), model.k());
    let mut out = Vec::new();

    out.push(CheckReport::compare(
        "kkt",
        "first-order conditions hold at the solution",
        sol.kkt_residual,
        an.settings.solver.tol.max(1e-9),
    ));
    if let Some(d) = sol.newton_discrepancy {
        let scale = sol.x.iter().fold(1.0_f64, |s, v| s.max(v.abs()));
        out.push(CheckReport::compare(
            "closed_form_vs_newton",
            "registered closed-form solution agrees with the Newton solution",
            d / scale,
            tol.analytic,
        ));
    }
    if let Some(r) = an.sensitivity.cross_check_residual {
        let scale = linalg::max_abs(&an.sensitivity.x_jac).max(1.0);
        out.push(CheckReport::compare(
            "closed_form_vs_ift",
            "registered closed-form Jacobian agrees with the implicit-function Jacobian",
            r / scale,
            tol.coherence,
        ));
    }
    out.push(diag::check_fd_vs_ift(model, sol, &an.settings.solver, an.settings.fd_step, tol.method)?);

    let so = solver::second_order_check(model, sol, 1e-8 * ctx.blocks.lxx(&sol.lambda).abs().max().max(1.0))?;
    out.push(CheckReport::flag(
        "second_order",
        "Hessian of the Lagrangian is negative semidefinite on the constraint tangent space",
        so.satisfied,
        format!("tangent eigenvalues in [{:.3e}, {:.3e}]", so.min_eigenvalue, so.max_eigenvalue),
    ));

    out.push(diag::check_null_property(&an.isovectors, geometry::NULL_TOL));
    let xs = an.x_semicolon();
    let table = geometry::verify_conformance(&xs, &ctx.blocks.gx(), tol.conformance)?;
    out.push(diag::check_conformance(&table, tol.conformance));
    out.push(diag::check_constraint_identity(ctx, &an.sensitivity, tol.conformance));

    // Structure of the mixed-partial CSM and its coherence with the other recipes.
    out.push(diag::check_csm_semidefinite(&an.omega, tol.analytic));
    out.push(diag::check_omega_rank(&an.omega, m, k));
    let quad = ctx.omega_quadratic(&an.isovectors)?;
    out.push(diag::check_coherence("coherence:omega_quadratic", &an.omega.matrix, &quad.matrix, tol.coherence));
    let t = &an.isovectors.vectors;
    let (silb, verdict) = ctx.silberberg()?;
    out.push(diag::check_coherence(
        "coherence:silberberg",
        &an.omega.matrix,
        &(t * &silb.matrix * t.transpose()),
        tol.coherence,
    ));
    out.push(CheckReport::flag(
        "semidefinite:silberberg",
        "primal-dual matrix is positive semidefinite on the parameter tangent space",
        verdict.pass,
        format!(
            "tangent dimension {}, restricted eigenvalues in [{:.3e}, {:.3e}]",
            verdict.tangent_dim,
            verdict.restricted_eigenvalues.first().copied().unwrap_or(0.0),
            verdict.restricted_eigenvalues.last().copied().unwrap_or(0.0)
        ),
    ));
    match ctx.universal() {
        Ok(u) => {
            out.push(diag::check_coherence(
                "coherence:universal",
                &an.omega.matrix,
                &(t * &u.matrix * t.transpose()),
                tol.coherence,
            ));
            out.push(diag::check_csm_semidefinite(&u, tol.analytic));
            out.push(diag::check_rank_bound(
                "rank:universal",
                u.rank_estimate,
                m.saturating_sub(k).min(model.n()),
            ));
        }
        Err(e) => out.push(CheckReport::skipped("coherence:universal", "universal CSM available", e.to_string())),
    }
    if ctx.blocks.f.value > 0.0 {
        let log = ctx.omega_log(&an.isovectors)?;
        out.push(diag::check_coherence("coherence:omega_log", &an.omega.matrix, &log.matrix, tol.coherence));
    }
    let spectral = crate::csm::spectral_relation(&an.omega, &ctx.blocks.lxx(&sol.lambda), &xs)?;
    out.push(CheckReport::compare(
        "spectral_relation",
        "CSM eigenvalues are reconstructed from the Hessian spectrum and compensated derivatives",
        spectral.max_relative_residual(),
        tol.coherence,
    ));

    if an.settings.envelope {
        out.push(diag::check_envelope(
            model,
            sol,
            &an.isovectors,
            an.settings.fd_step,
            &an.settings.solver,
            tol.fd,
        )?);
    }
    for gen in &model.invariance_generators {
        out.push(diag::check_invariance(gen, sol, &an.sensitivity, tol.fd));
        out.push(diag::check_generator_responses(model, gen, sol, tol.coherence)?);
    }
    if model.separable.is_some() {
        out.push(diag::check_hatta_reduction(model, sol, ctx, tol.coherence)?);
    }
    Ok(out)
}
