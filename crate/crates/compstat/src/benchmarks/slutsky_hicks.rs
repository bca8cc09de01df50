//! Cobb-Douglas utility maximization under a linear budget, parameters `(p, m)`.

use std::sync::Arc;

use nalgebra::DMatrix;

use super::util::{self, block, col};
use super::{BenchmarkEntry, PropertyCheck};
use crate::analysis::{Analysis, DerivedMatrix, IsovectorRecipe, Prescription};
use crate::csm;
use crate::diagnostics::CheckReport;
use crate::error::Result;
use crate::jet::{self, Scalar};
use crate::model::{exact, InvarianceGenerator, ProblemModel, SeparableForm, Smooth, VecMap};

/// `Σ γ_i ln x_i`.
#[derive(Debug, Clone)]
pub struct LogUtility {
    pub gamma: Vec<f64>,
}

impl Smooth for LogUtility {
    fn eval<S: Scalar>(&self, x: &[S], _a: &[S]) -> S {
        jet::sum(x.iter().zip(&self.gamma).map(|(xi, g)| xi.clone().ln() * *g))
    }
}

/// `a[m_at] − Σ a[p_at + i] x_i`.
#[derive(Debug, Clone)]
pub struct LinearBudget {
    pub p_at: usize,
    pub m_at: usize,
}

impl Smooth for LinearBudget {
    fn eval<S: Scalar>(&self, x: &[S], a: &[S]) -> S {
        a[self.m_at].clone() - jet::dot(x, &a[self.p_at..self.p_at + x.len()])
    }
}

/// Closed-form demand `x_i = γ_i m / (p_i Γ)` and `λ = Γ/m`.
pub fn demand(gamma: &[f64], a: &[f64]) -> (Vec<f64>, f64) {
    let m_dim = gamma.len();
    let big: f64 = gamma.iter().sum();
    let m = a[m_dim];
    let x = (0..m_dim).map(|i| gamma[i] * m / (a[i] * big)).collect();
    (x, big / m)
}

pub fn register(gamma: &[f64]) -> BenchmarkEntry {
    let m_dim = gamma.len();
    let n = m_dim + 1;
    let g = gamma.to_vec();
    let mut model = ProblemModel::new(
        "slutsky_hicks",
        m_dim,
        n,
        exact(LogUtility { gamma: g.clone() }),
        vec![exact(LinearBudget { p_at: 0, m_at: m_dim })],
    )
    .with_groups(&[("p", m_dim), ("m", 1)]);

    let gs = g.clone();
    model.analytic_solution = Some(Arc::new(move |a: &[f64]| {
        let (x, l) = demand(&gs, a);
        Ok((x, vec![l]))
    }));
    let gj = g.clone();
    model.analytic_sensitivity = Some(Arc::new(move |a: &[f64]| {
        let (x, _) = demand(&gj, a);
        let big: f64 = gj.iter().sum();
        let m = a[m_dim];
        let mut xj = DMatrix::zeros(m_dim, n);
        for i in 0..m_dim {
            xj[(i, i)] = -x[i] / a[i];
            xj[(i, m_dim)] = x[i] / m;
        }
        let mut lj = DMatrix::zeros(1, n);
        lj[(0, m_dim)] = -big / (m * m);
        Ok((xj, lj))
    }));
    let identity: crate::model::ScalarMap = Arc::new(|v| v);
    let zero: crate::model::ScalarMap = Arc::new(|_| 0.0);
    model.invariance_generators = vec![InvarianceGenerator::euler("homogeneity(p,m)", (0..n).collect(), m_dim)
        .with_responses(Some(zero), Some(vec![identity]))];
    model.separable = Some(SeparableForm {
        kappa: vec![m_dim],
        prices: (0..m_dim).collect(),
    });

    let prescribe = Arc::new(move |model: &ProblemModel, sol: &crate::solver::SolutionPoint| {
        let mut rows = DMatrix::zeros(m_dim, n);
        for alpha in 0..m_dim {
            rows[(alpha, alpha)] = 1.0;
            rows[(alpha, m_dim)] = sol.x[alpha];
        }
        Ok(Prescription {
            rows,
            labels: (0..m_dim).map(|a| format!("D({})", model.parameter_names[a])).collect(),
            annihilates_objective: false,
        })
    });

    let mut default_point = vec![1.0; m_dim];
    default_point.push(1.0);
    let gi = g.clone();
    let initial_guess: VecMap = Arc::new(move |a: &[f64]| {
        let share: f64 = a[gi.len()] / gi.len() as f64;
        (0..gi.len()).map(|i| share / a[i]).collect()
    });

    BenchmarkEntry {
        name: "slutsky_hicks".into(),
        summary: "Cobb-Douglas utility with a linear budget; the CSM is the Slutsky matrix".into(),
        model,
        default_point,
        initial_guess,
        isovectors: IsovectorRecipe::Prescribed(prescribe),
        derived: vec![Arc::new(|an: &Analysis| {
            let names = an.model.parameter_names[..an.model.m()].to_vec();
            Ok(DerivedMatrix {
                name: "slutsky".into(),
                row_labels: an.model.decision_names.clone(),
                col_labels: names,
                matrix: slutsky_from_jacobian(an.x_jac(), &an.solution.x),
            })
        })],
        suite: vec![
            PropertyCheck::new("slutsky_matrix", move |an| slutsky_checks(an, &g)),
            PropertyCheck::new("reduced_form", reduced_form_checks),
        ],
    }
}

/// `Σ = ∂x/∂p + (∂x/∂m) xᵀ` from any Jacobian with columns `(p, m)`.
pub fn slutsky_from_jacobian(x_jac: &DMatrix<f64>, x: &[f64]) -> DMatrix<f64> {
    let m_dim = x.len();
    block(x_jac, 0..m_dim, 0..m_dim) + block(x_jac, 0..m_dim, m_dim..m_dim + 1) * col(x).transpose()
}

fn slutsky_checks(an: &crate::analysis::Analysis, gamma: &[f64]) -> Result<Vec<CheckReport>> {
    let m_dim = an.model.m();
    let a = &an.solution.a;
    let x = &an.solution.x;
    let sigma = slutsky_from_jacobian(an.x_jac(), x);
    // Hand differentiation of the closed-form demand.
    let (xc, _) = demand(gamma, a);
    let m = a[m_dim];
    let oracle = DMatrix::from_fn(m_dim, m_dim, |i, j| {
        let own = if i == j { -xc[i] / a[i] } else { 0.0 };
        own + xc[i] * xc[j] / m
    });
    let eig = crate::linalg::sym_eigenvalues(&sigma);
    let p = col(&a[..m_dim]);
    let lambda = an.solution.lambda[0];
    Ok(vec![
        util::abs_close(
            "slutsky:closed_form",
            "Slutsky matrix matches the closed-form demand derivatives",
            &sigma,
            &oracle,
            1e-6,
        ),
        CheckReport::compare(
            "slutsky:symmetric",
            "Slutsky matrix is symmetric",
            crate::linalg::symmetry_residual(&sigma),
            1e-8,
        ),
        CheckReport::compare(
            "slutsky:negative_semidefinite",
            "largest Slutsky eigenvalue is not positive",
            eig.max().max(0.0),
            1e-8,
        )
        .with_note(format!("eigenvalues {:?}", eig.as_slice())),
        CheckReport::compare(
            "slutsky:price_null_vector",
            "prices are a null vector of the Slutsky matrix",
            crate::linalg::max_abs(&(&sigma * &p)),
            1e-8,
        ),
        util::rank_equals("slutsky:rank", &sigma, m_dim - 1, an.settings.csm.rank_tol),
        util::rel_close(
            "slutsky:omega_relation",
            "the CSM equals −λ times the Slutsky matrix",
            &an.omega.matrix,
            &(-lambda * &sigma),
            an.settings.tolerances.coherence,
        ),
    ])
}

/// Reduced description in `p̃ = p/m` with `Σ̃ = A Jᵀ Aᵀ`, `A = I − x p̃ᵀ`.
fn reduced_form_checks(an: &crate::analysis::Analysis) -> Result<Vec<CheckReport>> {
    let m_dim = an.model.m();
    let a = &an.solution.a;
    let x = &an.solution.x;
    let m = a[m_dim];
    let map: VecMap = Arc::new(move |a: &[f64]| {
        let mut out: Vec<f64> = a[..m_dim].iter().map(|p| p / a[m_dim]).collect();
        out.push(a[m_dim]);
        out
    });
    let rep = csm::reparameterize_csm(&an.model, &an.solution, &an.sensitivity, &an.isovectors, None, Some(&map))?;
    let j = block(&rep.x_jac, 0..m_dim, 0..m_dim);
    let pt: Vec<f64> = a[..m_dim].iter().map(|p| p / m).collect();
    let amat = DMatrix::identity(m_dim, m_dim) - col(x) * col(&pt).transpose();
    let reduced = &amat * j.transpose() * amat.transpose();
    let sigma = slutsky_from_jacobian(an.x_jac(), x);
    let tol = an.settings.tolerances.coherence;
    let mut out = vec![
        util::rel_close(
            "reduced:equals_scaled_slutsky",
            "reduced matrix equals m times the Slutsky matrix",
            &reduced,
            &(m * &sigma),
            tol,
        ),
        util::rel_close(
            "reduced:reparameterized_csm",
            "CSM is unchanged by the change of parameters",
            &rep.csm.matrix,
            &an.omega.matrix,
            tol,
        ),
        CheckReport::compare(
            "reduced:income_independence",
            "decisions do not depend on m at fixed reduced prices",
            crate::linalg::max_abs(&block(&rep.x_jac, 0..m_dim, m_dim..m_dim + 1)),
            an.settings.tolerances.fd,
        ),
        CheckReport::compare(
            "reduced:null_vector",
            "reduced prices are a null vector of the reduced matrix",
            crate::linalg::max_abs(&(&reduced * col(&pt))),
            1e-8 * crate::linalg::max_abs(&reduced).max(1.0),
        ),
        util::nsd("reduced:negative_semidefinite", &reduced, an.settings.tolerances.analytic),
    ];
    if m_dim >= 2 {
        let lead = block(&reduced, 0..m_dim - 1, 0..m_dim - 1);
        out.push(util::rel_close(
            "reduced:reconstruction",
            "dropped row and column are recovered from the null vector",
            &reconstruct(&lead, &pt),
            &reduced,
            tol,
        ));
    }
    Ok(out)
}

/// Rebuilds a symmetric matrix with null vector `p` from its leading block.
pub fn reconstruct(lead: &DMatrix<f64>, p: &[f64]) -> DMatrix<f64> {
    let k = lead.nrows();
    let n = k + 1;
    let last = p[k];
    let mut out = DMatrix::zeros(n, n);
    out.view_mut((0, 0), (k, k)).copy_from(lead);
    for i in 0..k {
        let c = -(0..k).map(|j| lead[(i, j)] * p[j]).sum::<f64>() / last;
        out[(i, k)] = c;
        out[(k, i)] = c;
    }
    out[(k, k)] = -(0..k).map(|i| out[(i, k)] * p[i]).sum::<f64>() / last;
    out
}
