//! Multi-output firm maximizing `s(p·F − w·x)` under a cost ceiling
//! `w·x = C`, parameters `(w, p, C, s)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::multi_output_profit::QuadraticTechnology;
use super::util::{self, block, col};
use super::{BenchmarkEntry, PropertyCheck};
use crate::analysis::{Analysis, IsovectorRecipe, Prescription};
use crate::diagnostics::CheckReport;
use crate::error::{Error, Result};
use crate::jet::{self, Scalar};
use crate::linalg;
use crate::model::{exact, InvarianceGenerator, ProblemModel, Smooth, VecMap};
use crate::solver::SolutionPoint;

pub const DEFAULT_BUDGET: f64 = 2.5;

#[derive(Debug, Clone)]
struct Objective {
    tech: QuadraticTechnology,
}

impl Smooth for Objective {
    fn eval<S: Scalar>(&self, x: &[S], a: &[S]) -> S {
        let (m, g) = (self.tech.inputs(), self.tech.outputs());
        let mut revenue = S::cst(0.0);
        for r in 0..g {
            let lin = jet::dot_c(x, self.tech.c.row(r).transpose().as_slice());
            let mut quad = S::cst(0.0);
            for i in 0..m {
                let row: Vec<f64> = (0..m).map(|j| self.tech.a[r][(i, j)]).collect();
                quad = quad + x[i].clone() * jet::dot_c(x, &row);
            }
            revenue = revenue + a[m + r].clone() * (lin - quad * 0.5);
        }
        a[m + g + 1].clone() * (revenue - jet::dot(x, &a[..m]))
    }
}

/// `C − w·x`.
#[derive(Debug, Clone)]
struct CostCeiling {
    m: usize,
    c_at: usize,
}

impl Smooth for CostCeiling {
    fn eval<S: Scalar>(&self, x: &[S], a: &[S]) -> S {
        a[self.c_at].clone() - jet::dot(x, &a[..self.m])
    }
}

/// Closed form through `θ = s + λ`: the first-order conditions give
/// `x(θ) = H⁻¹(Σ p_r c_r − (θ/s) w)`, linear in `θ`, and the ceiling fixes `θ`.
pub fn solve_closed_form(tech: &QuadraticTechnology, a: &[f64]) -> Result<(Vec<f64>, f64)> {
    let (m, g) = (tech.inputs(), tech.outputs());
    let w = DVector::from_column_slice(&a[..m]);
    let p = &a[m..m + g];
    let (budget, s) = (a[m + g], a[m + g + 1]);
    let h = tech.a.iter().zip(p).fold(DMatrix::zeros(m, m), |acc, (ar, pr)| acc + ar * *pr);
    let lu = h.lu();
    let b = tech.c.transpose() * DVector::from_column_slice(p);
    let hb = lu.solve(&b).ok_or_else(|| Error::Degeneracy("Σ p_r A_r is singular".into()))?;
    let hw = lu.solve(&w).ok_or_else(|| Error::Degeneracy("Σ p_r A_r is singular".into()))?;
    let ratio = (w.dot(&hb) - budget) / w.dot(&hw);
    let x = hb - hw * ratio;
    Ok((x.iter().copied().collect(), ratio * s - s))
}

/// Technology restricted to its first output.
pub fn single_output(tech: &QuadraticTechnology) -> QuadraticTechnology {
    QuadraticTechnology {
        c: tech.c.rows(0, 1).into_owned(),
        a: vec![tech.a[0].clone()],
        w: tech.w.clone(),
        p: vec![tech.p[0]],
    }
}

pub fn register(tech: &QuadraticTechnology) -> BenchmarkEntry {
    let (m, g) = (tech.inputs(), tech.outputs());
    let n = m + g + 2;
    let (c_at, s_at) = (m + g, m + g + 1);
    let mut model = ProblemModel::new(
        "cost_constrained_profit",
        m,
        n,
        exact(Objective { tech: tech.clone() }),
        vec![exact(CostCeiling { m, c_at })],
    )
    .with_groups(&[("w", m), ("p", g), ("C", 1), ("s", 1)]);
    let t = tech.clone();
    model.analytic_solution = Some(Arc::new(move |a: &[f64]| {
        let (x, l) = solve_closed_form(&t, a)?;
        Ok((x, vec![l]))
    }));
    let mut wc: Vec<usize> = (0..m).collect();
    wc.push(c_at);
    model.invariance_generators = vec![
        InvarianceGenerator::euler("homogeneity(p)", (m..m + g).collect(), m),
        InvarianceGenerator::euler("homogeneity(w,C)", wc, m),
        InvarianceGenerator::euler("scale(s)", vec![s_at], m),
    ];

    let prescribe = Arc::new(move |model: &ProblemModel, sol: &SolutionPoint| rows(model, sol, m, g));
    let mut default_point = tech.w.clone();
    default_point.extend(&tech.p);
    default_point.push(DEFAULT_BUDGET);
    default_point.push(1.0);
    let initial_guess: VecMap = Arc::new(move |a: &[f64]| {
        let spend = a[m + g] / m as f64;
        (0..m).map(|i| spend / a[i]).collect()
    });
    let tc = tech.clone();
    BenchmarkEntry {
        name: "cost_constrained_profit".into(),
        summary: "multi-output firm under a cost ceiling; demand, supply and budget blocks".into(),
        model,
        default_point,
        initial_guess,
        isovectors: IsovectorRecipe::Prescribed(prescribe),
        derived: Vec::new(),
        suite: vec![PropertyCheck::new("cost_constrained_blocks", move |an| block_checks(an, &tc))],
    }
}

/// Rows `e_{w_α} + x_α e_C` and `e_{p_r} − (s F_r / p·F) e_s`.
fn rows(model: &ProblemModel, sol: &SolutionPoint, m: usize, g: usize) -> Result<Prescription> {
    let n = model.n();
    let (c_at, s_at) = (m + g, m + g + 1);
    let mut t = DMatrix::zeros(m + g, n);
    for alpha in 0..m {
        t[(alpha, alpha)] = 1.0;
        t[(alpha, c_at)] = sol.x[alpha];
    }
    // p·F = (f/s + w·x); recover F_r through the objective's p-gradient.
    let blocks = model.derivs(&sol.x, &sol.a)?;
    let s = sol.a[s_at];
    let revenue: f64 = (0..g).map(|r| blocks.f.ga[m + r] / s * sol.a[m + r]).sum();
    if revenue.abs() < 1e-14 {
        return Err(Error::Domain("revenue vanishes".into()));
    }
    for r in 0..g {
        let fr = blocks.f.ga[m + r] / s;
        t[(m + r, m + r)] = 1.0;
        t[(m + r, s_at)] = -fr * s / revenue;
    }
    Ok(Prescription {
        rows: t,
        labels: (0..m + g).map(|i| format!("D({})", model.parameter_names[i])).collect(),
        annihilates_objective: false,
    })
}

fn block_checks(an: &Analysis, tech: &QuadraticTechnology) -> Result<Vec<CheckReport>> {
    let (m, g) = (tech.inputs(), tech.outputs());
    let x = &an.solution.x;
    let a = &an.solution.a;
    let (c_at, s_at) = (m + g, m + g + 1);
    let xj = an.x_jac();
    let fx = tech.output_gradients(x);
    let fa = &fx * xj;
    let w = block(xj, 0..m, 0..m);
    let mm = block(xj, 0..m, m..m + g);
    let x_c = block(xj, 0..m, c_at..c_at + 1);
    let q = block(&fa, 0..g, 0..m);
    let p = block(&fa, 0..g, m..m + g);
    let f_c = block(&fa, 0..g, c_at..c_at + 1);
    let lambda = an.solution.lambda[0];
    let theta = a[s_at] + lambda;
    let xr = col(x).transpose();

    let upper_left = -theta * (&w + &x_c * &xr);
    let lower_left = &q + &f_c * &xr;
    let mut expected = DMatrix::zeros(m + g, m + g);
    expected.view_mut((0, 0), (m, m)).copy_from(&upper_left);
    expected.view_mut((0, m), (m, g)).copy_from(&(-theta * &mm));
    expected.view_mut((m, 0), (g, m)).copy_from(&lower_left);
    expected.view_mut((m, m), (g, g)).copy_from(&p);

    let tol = an.settings.tolerances.analytic;
    let coh = an.settings.tolerances.coherence;
    let mut out = vec![
        CheckReport::flag(
            "cost_constrained:binding",
            "the cost ceiling binds with a positive multiplier",
            lambda > 0.0,
            format!("λ = {lambda:.9}"),
        ),
        util::rel_close(
            "cost_constrained:cross_blocks",
            "θ Mᵀ = −(Q + F_C xᵀ)",
            &(theta * mm.transpose()),
            &(-&lower_left),
            coh,
        ),
        util::psd("cost_constrained:assembled_psd", &expected, tol * linalg::max_abs(&expected).max(1.0)),
        util::rank_at_most("cost_constrained:assembled_rank", &expected, m - 1, an.settings.csm.rank_tol),
    ];
    if an.isovectors.basis_kind == crate::geometry::BasisKind::Prescribed {
        out.push(util::rel_close(
            "cost_constrained:csm_blocks",
            "CSM equals [[−θ(W + x_C xᵀ), −θM], [Q + F_C xᵀ, P]]",
            &an.omega.matrix,
            &expected,
            coh,
        ));
    }
    if g == 1 {
        out.push(CheckReport::compare(
            "cost_constrained:price_independence",
            "with one output the input choice ignores the output price",
            linalg::max_abs(&mm),
            an.settings.tolerances.fd,
        ));
    }
    Ok(out)
}
