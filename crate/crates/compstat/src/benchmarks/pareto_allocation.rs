//! Pareto-optimal division of a bundle `ω` among `H` log-utility consumers.
//!
//! Consumer 1's utility is maximized while every other consumer `h` is held
//! at `ū^h`. Consumer `h` has taste shifter `b_h` on good `h mod G`.
//! Decisions are stacked by consumer, parameters are `(b, ū², …, ū^H, ω)`.

use std::sync::Arc;

use nalgebra::DMatrix;

use super::util;
use super::{BenchmarkEntry, PropertyCheck};
use crate::analysis::{Analysis, IsovectorRecipe, Prescription};
use crate::diagnostics::CheckReport;
use crate::error::Result;
use crate::jet::{self, Scalar};
use crate::linalg;
use crate::model::{exact, ProblemModel, Smooth, VecMap};
use crate::solver::SolutionPoint;

#[derive(Debug, Clone, PartialEq)]
pub struct ParetoConfig {
    /// One row of taste weights per consumer.
    pub gamma: Vec<Vec<f64>>,
    pub omega: Vec<f64>,
    /// Utility floors of consumers `2..=H`.
    pub floors: Vec<f64>,
}

impl Default for ParetoConfig {
    fn default() -> Self {
        ParetoConfig {
            gamma: vec![vec![0.6, 0.4], vec![0.3, 0.7]],
            omega: vec![2.0, 3.0],
            // Consumer 2's utility from half of the bundle.
            floors: vec![0.7 * 1.5_f64.ln()],
        }
    }
}

impl ParetoConfig {
    /// A single consumer who receives the whole bundle.
    pub fn single_consumer() -> Self {
        ParetoConfig {
            gamma: vec![vec![0.6, 0.4]],
            omega: vec![2.0, 3.0],
            floors: vec![],
        }
    }

    pub fn consumers(&self) -> usize {
        self.gamma.len()
    }

    pub fn goods(&self) -> usize {
        self.omega.len()
    }

    pub fn point(&self) -> Vec<f64> {
        let mut a = vec![0.0; self.consumers()];
        a.extend(&self.floors);
        a.extend(&self.omega);
        a
    }
}

/// `Σ_g (γ^h_g + b_h δ_{g, h mod G}) ln x^h_g`.
#[derive(Debug, Clone)]
struct Utility {
    h: usize,
    gamma: Vec<f64>,
}

impl Utility {
    fn eval_at<S: Scalar>(&self, x: &[S], b: S) -> S {
        let g = self.gamma.len();
        let own = &x[self.h * g..(self.h + 1) * g];
        let shifted = self.h % g;
        jet::sum(own.iter().enumerate().map(|(k, xk)| {
            let w = if k == shifted {
                b.clone() + self.gamma[k]
            } else {
                S::cst(self.gamma[k])
            };
            w * xk.clone().ln()
        }))
    }
}

impl Smooth for Utility {
    fn eval<S: Scalar>(&self, x: &[S], a: &[S]) -> S {
        self.eval_at(x, a[self.h].clone())
    }
}

/// `u^h − ū^h`.
#[derive(Debug, Clone)]
struct Floor {
    u: Utility,
    floor_at: usize,
}

impl Smooth for Floor {
    fn eval<S: Scalar>(&self, x: &[S], a: &[S]) -> S {
        self.u.eval(x, a) - a[self.floor_at].clone()
    }
}

/// `ω_g − Σ_h x^h_g`.
#[derive(Debug, Clone)]
struct Resource {
    good: usize,
    goods: usize,
    omega_at: usize,
}

impl Smooth for Resource {
    fn eval<S: Scalar>(&self, x: &[S], a: &[S]) -> S {
        let total = jet::sum(x.iter().skip(self.good).step_by(self.goods).cloned());
        a[self.omega_at].clone() - total
    }
}

pub fn register(cfg: &ParetoConfig) -> BenchmarkEntry {
    let (h_n, g_n) = (cfg.consumers(), cfg.goods());
    let m = h_n * g_n;
    let omega_at = 2 * h_n - 1;
    let n = omega_at + g_n;
    let utilities: Vec<Utility> = (0..h_n)
        .map(|h| Utility {
            h,
            gamma: cfg.gamma[h].clone(),
        })
        .collect();
    let mut constraints = Vec::new();
    for (h, u) in utilities.iter().enumerate().skip(1) {
        constraints.push(exact(Floor {
            u: u.clone(),
            floor_at: h_n + h - 1,
        }));
    }
    for g in 0..g_n {
        constraints.push(exact(Resource {
            good: g,
            goods: g_n,
            omega_at: omega_at + g,
        }));
    }
    let mut groups: Vec<(String, usize)> = vec![("b".into(), h_n)];
    for h in 2..=h_n {
        groups.push((format!("ubar{h}"), 1));
    }
    groups.push(("omega".into(), g_n));
    let group_refs: Vec<(&str, usize)> = groups.iter().map(|(s, l)| (s.as_str(), *l)).collect();
    let names = (1..=h_n)
        .flat_map(|h| (1..=g_n).map(move |g| format!("x{h}_{g}")))
        .collect();
    let model = ProblemModel::new("pareto_allocation", m, n, exact(utilities[0].clone()), constraints)
        .with_groups(&group_refs)
        .with_decision_names(names);

    let prescribe = Arc::new(move |model: &ProblemModel, sol: &SolutionPoint| {
        let mut rows = DMatrix::zeros(h_n, n);
        for h in 0..h_n {
            rows[(h, h)] = 1.0;
            if h > 0 {
                // ∂u^h/∂b_h = ln x^h_{h mod G}
                let g = h % g_n;
                rows[(h, h_n + h - 1)] = sol.x[h * g_n + g].ln();
            }
        }
        Ok(Prescription {
            rows,
            labels: (0..h_n).map(|h| format!("D({})", model.parameter_names[h])).collect(),
            annihilates_objective: false,
        })
    });
    let initial_guess: VecMap = Arc::new(move |a: &[f64]| {
        (0..m).map(|i| a[omega_at + i % g_n] / h_n as f64).collect()
    });
    BenchmarkEntry {
        name: "pareto_allocation".into(),
        summary: "Pareto-optimal allocation among log-utility consumers; taste-shift isovectors".into(),
        model,
        default_point: cfg.point(),
        initial_guess,
        isovectors: IsovectorRecipe::Prescribed(prescribe),
        derived: Vec::new(),
        suite: vec![PropertyCheck::new("allocation", move |an| allocation_checks(an, h_n, g_n))],
    }
}

fn allocation_checks(an: &Analysis, h_n: usize, g_n: usize) -> Result<Vec<CheckReport>> {
    let omega_at = 2 * h_n - 1;
    let t = &an.isovectors.vectors;
    let omega_cols = linalg::max_abs(&t.columns(omega_at, g_n).into_owned());
    let m = an.model.m();
    let mut out = vec![
        CheckReport::compare(
            "pareto:bundle_fixed",
            "isovectors leave the bundle unchanged",
            omega_cols,
            0.0,
        ),
        util::rank_at_most(
            "pareto:csm_rank",
            &an.omega.matrix,
            m.saturating_sub(an.model.k()),
            an.settings.csm.rank_tol,
        ),
    ];
    if h_n == 1 {
        let gap = (0..g_n).fold(0.0_f64, |acc, g| acc.max((an.solution.x[g] - an.solution.a[omega_at + g]).abs()));
        out.push(CheckReport::compare(
            "pareto:single_consumer",
            "a lone consumer receives the whole bundle",
            gap,
            1e-10,
        ));
        out.push(CheckReport::compare(
            "pareto:single_consumer_csm",
            "with nothing to trade the CSM vanishes",
            linalg::max_abs(&an.omega.matrix),
            1e-10,
        ));
    }
    Ok(out)
}
