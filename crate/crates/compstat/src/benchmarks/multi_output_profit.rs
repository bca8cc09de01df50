//! Multi-output competitive firm with quadratic technologies
//! `F_r(x) = c_r·x − ½ xᵀA_r x`, parameters `(w, p)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::util::{self, block};
use super::{BenchmarkEntry, PropertyCheck};
use crate::analysis::{Analysis, IsovectorRecipe};
use crate::csm::Recipe;
use crate::diagnostics::CheckReport;
use crate::error::{Error, Result};
use crate::jet::{self, Scalar};
use crate::linalg;
use crate::model::{exact, InvarianceGenerator, ProblemModel, ScalarMap, Smooth, VecMap};

/// Quadratic production possibilities, one row of `c` and one `A_r` per output.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticTechnology {
    /// G×M linear coefficients.
    pub c: DMatrix<f64>,
    /// G symmetric positive definite M×M curvature matrices.
    pub a: Vec<DMatrix<f64>>,
    pub w: Vec<f64>,
    pub p: Vec<f64>,
}

impl Default for QuadraticTechnology {
    fn default() -> Self {
        QuadraticTechnology {
            c: DMatrix::from_row_slice(2, 3, &[4.0, 3.0, 3.5, 3.0, 4.5, 2.5]),
            a: vec![
                DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.1, 0.2, 0.8, 0.0, 0.1, 0.0, 1.2]),
                DMatrix::from_row_slice(3, 3, &[0.9, 0.1, 0.0, 0.1, 1.1, 0.2, 0.0, 0.2, 0.7]),
            ],
            w: vec![1.0, 1.2, 0.8],
            p: vec![1.0, 1.5],
        }
    }
}

impl QuadraticTechnology {
    pub fn inputs(&self) -> usize {
        self.c.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn output(&self, r: usize, x: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        self.c.row(r).transpose().dot(&xv) - 0.5 * xv.dot(&(&self.a[r] * &xv))
    }

    /// G×M matrix of `∂F_r/∂x_i`.
    pub fn output_gradients(&self, x: &[f64]) -> DMatrix<f64> {
        let xv = DVector::from_column_slice(x);
        DMatrix::from_fn(self.outputs(), self.inputs(), |r, i| self.c[(r, i)] - (&self.a[r] * &xv)[i])
    }

    /// `Σ p_r A_r`.
    fn curvature(&self, p: &[f64]) -> DMatrix<f64> {
        let m = self.inputs();
        self.a.iter().zip(p).fold(DMatrix::zeros(m, m), |acc, (a, pr)| acc + a * *pr)
    }

    /// Unconstrained optimum `x = (Σ p_r A_r)⁻¹ (Σ p_r c_r − w)`.
    pub fn demand(&self, w: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        let h = self.curvature(p);
        let rhs = self.c.transpose() * DVector::from_column_slice(p) - DVector::from_column_slice(w);
        let x = h
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Degeneracy("Σ p_r A_r is singular".into()))?;
        Ok(x.iter().copied().collect())
    }

    /// `∂x/∂w = −H⁻¹`, `∂x/∂p_r = H⁻¹ (c_r − A_r x)`.
    pub fn demand_jacobian(&self, w: &[f64], p: &[f64]) -> Result<DMatrix<f64>> {
        let (m, g) = (self.inputs(), self.outputs());
        let h_inv = self
            .curvature(p)
            .try_inverse()
            .ok_or_else(|| Error::Degeneracy("Σ p_r A_r is singular".into()))?;
        let x = self.demand(w, p)?;
        let fx = self.output_gradients(&x);
        let mut out = DMatrix::zeros(m, m + g);
        out.view_mut((0, 0), (m, m)).copy_from(&(-&h_inv));
        out.view_mut((0, m), (m, g)).copy_from(&(&h_inv * fx.transpose()));
        Ok(out)
    }
}

/// `Σ_r p_r F_r(x) − w·x` with `a = (w, p)`.
#[derive(Debug, Clone)]
struct Profit {
    tech: QuadraticTechnology,
}

impl Smooth for Profit {
    fn eval<S: Scalar>(&self, x: &[S], a: &[S]) -> S {
        let (m, g) = (self.tech.inputs(), self.tech.outputs());
        let mut revenue = S::cst(0.0);
        for r in 0..g {
            let lin = jet::dot_c(x, self.tech.c.row(r).transpose().as_slice());
            let mut quad = S::cst(0.0);
            for i in 0..m {
                let ax: Vec<f64> = (0..m).map(|j| self.tech.a[r][(i, j)]).collect();
                quad = quad + x[i].clone() * jet::dot_c(x, &ax);
            }
            revenue = revenue + a[m + r].clone() * (lin - quad * 0.5);
        }
        revenue - jet::dot(x, &a[..m])
    }
}

pub fn register(tech: &QuadraticTechnology) -> BenchmarkEntry {
    let (m, g) = (tech.inputs(), tech.outputs());
    let n = m + g;
    let mut model = ProblemModel::new("multi_output_profit", m, n, exact(Profit { tech: tech.clone() }), vec![])
        .with_groups(&[("w", m), ("p", g)]);
    let t1 = tech.clone();
    model.analytic_solution = Some(Arc::new(move |a: &[f64]| Ok((t1.demand(&a[..m], &a[m..])?, vec![]))));
    let t2 = tech.clone();
    model.analytic_sensitivity = Some(Arc::new(move |a: &[f64]| {
        Ok((t2.demand_jacobian(&a[..m], &a[m..])?, DMatrix::zeros(0, n)))
    }));
    let identity: ScalarMap = Arc::new(|v| v);
    model.invariance_generators =
        vec![InvarianceGenerator::euler("homogeneity(w,p)", (0..n).collect(), m).with_responses(Some(identity), None)];

    let mut default_point = tech.w.clone();
    default_point.extend(&tech.p);
    let initial_guess: VecMap = Arc::new(move |_a: &[f64]| vec![1.0; m]);
    let t = tech.clone();
    BenchmarkEntry {
        name: "multi_output_profit".into(),
        summary: "multi-output firm with quadratic technologies; input demand and output supply blocks".into(),
        model,
        default_point,
        initial_guess,
        isovectors: IsovectorRecipe::Nullspace {
            annihilate_objective: false,
        },
        derived: Vec::new(),
        suite: vec![PropertyCheck::new("supply_demand_blocks", move |an| block_checks(an, &t))],
    }
}

/// `W = ∂x/∂w`, `M = ∂x/∂p`, `Q = ∂F/∂w`, `P = ∂F/∂p`.
#[derive(Debug, Clone)]
pub struct SupplyBlocks {
    pub w: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub p: DMatrix<f64>,
}

impl SupplyBlocks {
    pub fn from_jacobian(x_jac: &DMatrix<f64>, output_gradients: &DMatrix<f64>) -> Self {
        let m = x_jac.nrows();
        let n = x_jac.ncols();
        let w = block(x_jac, 0..m, 0..m);
        let mm = block(x_jac, 0..m, m..n);
        SupplyBlocks {
            q: output_gradients * &w,
            p: output_gradients * &mm,
            w,
            m: mm,
        }
    }

    /// `[[−W, −M], [Q, P]]`.
    pub fn assembled(&self) -> DMatrix<f64> {
        let (m, g) = (self.w.nrows(), self.p.nrows());
        let mut t = DMatrix::zeros(m + g, m + g);
        t.view_mut((0, 0), (m, m)).copy_from(&(-&self.w));
        t.view_mut((0, m), (m, g)).copy_from(&(-&self.m));
        t.view_mut((m, 0), (g, m)).copy_from(&self.q);
        t.view_mut((m, m), (g, g)).copy_from(&self.p);
        t
    }
}

fn block_checks(an: &Analysis, tech: &QuadraticTechnology) -> Result<Vec<CheckReport>> {
    let x = &an.solution.x;
    let b = SupplyBlocks::from_jacobian(an.x_jac(), &tech.output_gradients(x));
    let tol = an.settings.tolerances.analytic;
    let coh = an.settings.tolerances.coherence;
    let t = b.assembled();
    let mut out = vec![
        util::psd("multi_output:assembled_psd", &t, tol),
        util::rel_close(
            "multi_output:csm_equals_blocks",
            "CSM equals [[−W, −M], [Q, P]]",
            &an.omega.matrix,
            &t,
            coh,
        ),
        util::rel_close(
            "multi_output:reciprocity",
            "−∂x/∂p equals (∂F/∂w)ᵀ",
            &(-&b.m),
            &b.q.transpose(),
            coh,
        ),
        util::nsd("multi_output:input_block_nsd", &b.w, tol),
        util::psd("multi_output:output_block_psd", &b.p, tol),
    ];
    if let (Some(log), Some(plain)) = (an.csm(Recipe::OmegaLogUnconstrained), an.csm(Recipe::OmegaUnconstrained)) {
        out.push(util::rel_close(
            "multi_output:log_form_agrees",
            "log-objective and plain unconstrained forms coincide at the optimum",
            &log.matrix,
            &plain.matrix,
            coh,
        ));
    }
    let w_inv = b.w.clone().try_inverse();
    match w_inv {
        Some(wi) => {
            let p_star = &b.p + b.m.transpose() * wi * &b.m;
            out.push(util::psd("multi_output:p_star_psd", &p_star, tol * linalg::max_abs(&b.p).max(1.0)));
        }
        None => out.push(CheckReport::skipped(
            "multi_output:p_star_psd",
            "P + Mᵀ W⁻¹ M is positive semidefinite",
            "input block is singular",
        )),
    }
    let p_inv = if linalg::inverse_condition(&b.p) > 1e-10 {
        b.p.clone().try_inverse()
    } else {
        None
    };
    let Some(pi) = p_inv else {
        out.push(CheckReport::skipped(
            "multi_output:w_star_nsd",
            "W + M P⁻¹ Mᵀ is negative semidefinite",
            "output block is singular; the sharpened input bound needs P invertible",
        ));
        return Ok(out);
    };
    let w_star = &b.w + &b.m * &pi * b.m.transpose();
    out.push(util::nsd("multi_output:w_star_nsd", &w_star, tol * linalg::max_abs(&b.w).max(1.0)));

    // v* = P⁻¹ Mᵀ u minimizes q(v) = −uᵀMv − vᵀMᵀu + vᵀPv.
    let q = |u: &DVector<f64>, v: &DVector<f64>| -2.0 * u.dot(&(&b.m * v)) + v.dot(&(&b.p * v));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (m, g) = (b.w.nrows(), b.p.nrows());
    let mut worst = 0.0_f64;
    for _ in 0..8 {
        let u = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        let v_star = &pi * b.m.transpose() * &u;
        let base = q(&u, &v_star);
        for _ in 0..8 {
            let d = DVector::from_fn(g, |_, _| rng.random_range(-1.0..1.0));
            worst = worst.max(base - q(&u, &(&v_star + d)));
        }
    }
    out.push(CheckReport::compare(
        "multi_output:optimal_output_direction",
        "v = P⁻¹Mᵀu minimizes the sharpened quadratic form",
        worst.max(0.0),
        tol,
    ));
    Ok(out)
}
