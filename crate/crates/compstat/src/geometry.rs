//! Isovectors (tangent directions in parameter space) and the compensated
//! derivative operators they define.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{ProblemModel, Target, Wrt};
use crate::solver::SolutionPoint;

/// Relative singular-value threshold for ranks of gradient stacks.
pub const RANK_TOL: f64 = 1e-10;
/// Null-property tolerance relative to the target gradient norm.
pub const NULL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    Nullspace,
    Prescribed,
    OneTerm,
}

impl std::str::FromStr for BasisKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nullspace" => Ok(BasisKind::Nullspace),
            "prescribed" => Ok(BasisKind::Prescribed),
            "one_term" => Ok(BasisKind::OneTerm),
            other => Err(Error::Config(format!("unknown basis kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullResidual {
    pub alpha: usize,
    pub target: String,
    pub residual: f64,
    pub gradient_norm: f64,
}

/// Target functions whose parameter gradients the isovectors must annihilate.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientStack {
    /// C×N, one row per target.
    pub rows: DMatrix<f64>,
    pub labels: Vec<String>,
}

impl GradientStack {
    pub fn empty(n: usize) -> Self {
        GradientStack {
            rows: DMatrix::zeros(0, n),
            labels: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsovectorSet {
    /// A×N, row α is `t^α`.
    pub vectors: DMatrix<f64>,
    pub annihilates_objective: bool,
    pub null_residuals: Vec<NullResidual>,
    pub basis_kind: BasisKind,
    /// Rows are linearly dependent; the operators are still valid.
    pub redundant: bool,
    /// One-term construction with a vanishing compensating entry.
    pub degenerate: bool,
    /// Row labels used in reports.
    pub labels: Vec<String>,
}

impl IsovectorSet {
    pub fn a(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn n(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        if labels.len() == self.a() {
            self.labels = labels;
        }
        self
    }

    pub fn max_null_residual(&self) -> f64 {
        self.null_residuals.iter().fold(0.0, |m, r| m.max(r.residual))
    }
}

/// Parameter-space gradients of every constraint and parameter relation,
/// plus the objective when requested.
pub fn target_gradients(model: &ProblemModel, sol: &SolutionPoint, include_objective: bool) -> Result<GradientStack> {
    let mut targets: Vec<Target> = (0..model.k()).map(Target::Constraint).collect();
    targets.extend((0..model.parameter_relations.len()).map(Target::Relation));
    if include_objective {
        targets.push(Target::Objective);
    }
    let n = model.n();
    let mut rows = DMatrix::zeros(targets.len(), n);
    let mut labels = Vec::with_capacity(targets.len());
    for (r, t) in targets.iter().enumerate() {
        let g = model.numeric_gradient(*t, Wrt::A, &sol.x, &sol.a)?;
        for (c, v) in g.values.iter().enumerate() {
            rows[(r, c)] = *v;
        }
        labels.push(ProblemModel::target_label(*t));
    }
    Ok(GradientStack { rows, labels })
}

/// Residuals `|t^α · ∇ₐ(target)|` for every row and target.
pub fn null_residuals(vectors: &DMatrix<f64>, stack: &GradientStack) -> Vec<NullResidual> {
    let mut out = Vec::new();
    for c in 0..stack.rows.nrows() {
        let grad = stack.rows.row(c);
        let norm = grad.norm();
        for alpha in 0..vectors.nrows() {
            out.push(NullResidual {
                alpha,
                target: stack.labels[c].clone(),
                residual: vectors.row(alpha).dot(&grad).abs(),
                gradient_norm: norm,
            });
        }
    }
    out
}

/// First violation of `residual ≤ tol · ‖∇ₐ(target)‖`, if any.
pub fn verify_null_property(residuals: &[NullResidual], tol: f64) -> Result<()> {
    match residuals.iter().find(|r| r.residual > tol * r.gradient_norm) {
        Some(r) => Err(Error::NullProperty {
            alpha: r.alpha,
            target: r.target.clone(),
            residual: r.residual,
        }),
        None => Ok(()),
    }
}

/// Orthonormal basis of the tangent hyperplane of the stacked targets.
pub fn build_isovectors(stack: &GradientStack, annihilates_objective: bool) -> Result<IsovectorSet> {
    let n = stack.rows.ncols();
    let (basis, _rank) = linalg::nullspace(&stack.rows, RANK_TOL);
    if basis.ncols() == 0 {
        return Err(Error::EmptyTangent(n));
    }
    let vectors = basis.transpose();
    let null_residuals = null_residuals(&vectors, stack);
    Ok(IsovectorSet {
        vectors,
        annihilates_objective,
        null_residuals,
        basis_kind: BasisKind::Nullspace,
        redundant: false,
        degenerate: false,
        labels: default_labels(basis.ncols()),
    })
}

fn default_labels(a: usize) -> Vec<String> {
    (1..=a).map(|i| format!("t{i}")).collect()
}

/// Accepts user or recipe rows after checking the null property.
pub fn prescribe_isovectors(
    rows: DMatrix<f64>,
    stack: &GradientStack,
    annihilates_objective: bool,
) -> Result<IsovectorSet> {
    if rows.ncols() != stack.rows.ncols() {
        return Err(Error::dim("isovector rows", stack.rows.ncols(), rows.ncols()));
    }
    let residuals = null_residuals(&rows, stack);
    verify_null_property(&residuals, NULL_TOL)?;
    let redundant = rows.nrows() > 0 && linalg::numerical_rank(&rows, RANK_TOL) < rows.nrows();
    let labels = default_labels(rows.nrows());
    Ok(IsovectorSet {
        vectors: rows,
        annihilates_objective,
        null_residuals: residuals,
        basis_kind: BasisKind::Prescribed,
        redundant,
        degenerate: false,
        labels,
    })
}

/// Pairs every other parameter with the compensating parameter `comp`:
/// row α has `d_comp` in slot α and `−d_α` in slot `comp`, where `d` is the
/// parameter gradient of `target`.
pub fn one_term_compensation(
    model: &ProblemModel,
    sol: &SolutionPoint,
    target: Target,
    comp: usize,
) -> Result<IsovectorSet> {
    let n = model.n();
    if comp >= n {
        return Err(Error::Config(format!("compensating index {comp} out of range")));
    }
    let d = model.numeric_gradient(target, Wrt::A, &sol.x, &sol.a)?.values;
    let scale = d.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let degenerate = d[comp].abs() <= 1e-14 * scale.max(f64::MIN_POSITIVE);
    let mut rows = DMatrix::zeros(n - 1, n);
    for (r, alpha) in (0..n).filter(|&a| a != comp).enumerate() {
        rows[(r, alpha)] = d[comp];
        rows[(r, comp)] = -d[alpha];
    }
    let mut stack = target_gradients(model, sol, false)?;
    if target == Target::Objective {
        let mut grown = DMatrix::zeros(stack.rows.nrows() + 1, n);
        grown.view_mut((0, 0), stack.rows.shape()).copy_from(&stack.rows);
        for (c, v) in d.iter().enumerate() {
            grown[(stack.rows.nrows(), c)] = *v;
        }
        stack.rows = grown;
        stack.labels.push(ProblemModel::target_label(target));
    }
    let residuals = null_residuals(&rows, &stack);
    verify_null_property(&residuals, NULL_TOL)?;
    let labels = (0..n)
        .filter(|&a| a != comp)
        .map(|a| format!("D({})", model.parameter_names[a]))
        .collect();
    Ok(IsovectorSet {
        labels,
        vectors: rows,
        annihilates_objective: target == Target::Objective,
        null_residuals: residuals,
        basis_kind: BasisKind::OneTerm,
        redundant: false,
        degenerate,
    })
}

/// Compensated derivatives `x_{i;α} = Σ_μ t^α_μ x_{i,μ}` (M×A).
pub fn gcd_apply(iso: &IsovectorSet, jac: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if jac.ncols() != iso.n() {
        return Err(Error::dim("Jacobian columns", iso.n(), jac.ncols()));
    }
    Ok(jac * iso.vectors.transpose())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConformanceTable {
    /// K×A, entry `(k, α) = Σ_i g^k_{,i} x_{i;α}`.
    pub residuals: DMatrix<f64>,
    pub max: f64,
    pub pass: bool,
}

/// Orthogonality of compensated decision derivatives to the constraint normals.
pub fn verify_conformance(x_semicolon: &DMatrix<f64>, decision_grads: &DMatrix<f64>, tol: f64) -> Result<ConformanceTable> {
    if decision_grads.nrows() > 0 && decision_grads.ncols() != x_semicolon.nrows() {
        return Err(Error::dim("constraint gradients", x_semicolon.nrows(), decision_grads.ncols()));
    }
    let residuals = if decision_grads.nrows() == 0 {
        DMatrix::zeros(0, x_semicolon.ncols())
    } else {
        decision_grads * x_semicolon
    };
    let max = linalg::max_abs(&residuals);
    Ok(ConformanceTable {
        residuals,
        max,
        pass: max <= tol,
    })
}
