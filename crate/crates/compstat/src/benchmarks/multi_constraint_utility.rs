//! Log utility under `K` linear budgets `p^k·x = m^k`, parameters
//! `(p¹, m¹, …, p^K, m^K)`.
//!
//! The instance is built backward from a chosen optimum `x*` and multipliers
//! `λ*`, so the solution at the default point is known exactly.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::slutsky_hicks::{LinearBudget, LogUtility};
use super::util::{self, block, col};
use super::{BenchmarkEntry, PropertyCheck};
use crate::analysis::{Analysis, IsovectorRecipe, Prescription};
use crate::diagnostics::CheckReport;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{exact, InvarianceGenerator, ProblemModel, ScalarMap, VecMap};
use crate::solver::SolutionPoint;

pub const SEED: u64 = 23;

/// Data of the backward construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Construction {
    pub x_star: Vec<f64>,
    pub lambda_star: Vec<f64>,
    /// K price vectors.
    pub prices: Vec<Vec<f64>>,
    pub incomes: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl Construction {
    pub fn new(m: usize, k: usize) -> Result<Self> {
        if m == 0 || k == 0 || k > m {
            return Err(Error::Config(format!(
                "need 1 ≤ K ≤ M budgets, got M = {m}, K = {k}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        let x_star: Vec<f64> = (0..m).map(|i| 1.0 + 0.25 * i as f64).collect();
        let lambda_star: Vec<f64> = (0..k).map(|j| 1.0 / (j + 1) as f64).collect();
        let prices: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..m).map(|_| rng.random_range(0.5..2.0)).collect())
            .collect();
        let incomes = prices
            .iter()
            .map(|p| p.iter().zip(&x_star).map(|(a, b)| a * b).sum())
            .collect();
        let gamma = (0..m)
            .map(|i| x_star[i] * (0..k).map(|j| lambda_star[j] * prices[j][i]).sum::<f64>())
            .collect();
        Ok(Construction {
            x_star,
            lambda_star,
            prices,
            incomes,
            gamma,
        })
    }

    pub fn point(&self) -> Vec<f64> {
        let mut a = Vec::new();
        for (p, m) in self.prices.iter().zip(&self.incomes) {
            a.extend(p);
            a.push(*m);
        }
        a
    }
}

pub fn register(m: usize, k: usize) -> Result<BenchmarkEntry> {
    let cons = Construction::new(m, k)?;
    let stride = m + 1;
    let n = k * stride;
    let groups: Vec<(String, usize)> = (1..=k)
        .flat_map(|j| [(format!("p{j}_"), m), (format!("m{j}"), 1)])
        .collect();
    let group_refs: Vec<(&str, usize)> = groups.iter().map(|(s, l)| (s.as_str(), *l)).collect();
    let budgets = (0..k)
        .map(|j| {
            exact(LinearBudget {
                p_at: j * stride,
                m_at: j * stride + m,
            })
        })
        .collect();
    let mut model = ProblemModel::new(
        "multi_constraint_utility",
        m,
        n,
        exact(LogUtility {
            gamma: cons.gamma.clone(),
        }),
        budgets,
    )
    .with_groups(&group_refs);
    let zero: ScalarMap = Arc::new(|_| 0.0);
    let identity: ScalarMap = Arc::new(|v| v);
    model.invariance_generators = (0..k)
        .map(|j| {
            let mut resp = vec![zero.clone(); k];
            resp[j] = identity.clone();
            InvarianceGenerator::euler(format!("homogeneity(p{},m{})", j + 1, j + 1), (j * stride..(j + 1) * stride).collect(), m)
                .with_responses(Some(zero.clone()), Some(resp))
        })
        .collect();

    let prescribe = Arc::new(move |model: &ProblemModel, sol: &SolutionPoint| {
        let mut rows = DMatrix::zeros(k * m, n);
        for j in 0..k {
            for i in 0..m {
                rows[(j * m + i, j * stride + i)] = 1.0;
                rows[(j * m + i, j * stride + m)] = sol.x[i];
            }
        }
        let labels = (0..k)
            .flat_map(|j| (0..m).map(move |i| (j, i)))
            .map(|(j, i)| format!("D({})", model.parameter_names[j * stride + i]))
            .collect();
        Ok(Prescription {
            rows,
            labels,
            annihilates_objective: false,
        })
    });
    let initial_guess: VecMap = {
        let xs = cons.x_star.clone();
        Arc::new(move |_a: &[f64]| xs.iter().map(|v| v * 0.8 + 0.1).collect())
    };
    let c = cons.clone();
    Ok(BenchmarkEntry {
        name: "multi_constraint_utility".into(),
        summary: "log utility under several linear budgets; block structure of the CSM".into(),
        model,
        default_point: cons.point(),
        initial_guess,
        isovectors: IsovectorRecipe::Prescribed(prescribe),
        derived: Vec::new(),
        suite: vec![PropertyCheck::new("budget_blocks", move |an| block_checks(an, &c))],
    })
}

/// Compensated price response for budget `j`: `∂x/∂p^j + (∂x/∂m^j) xᵀ`.
pub fn budget_slutsky(x_jac: &DMatrix<f64>, x: &[f64], j: usize) -> DMatrix<f64> {
    let m = x.len();
    let start = j * (m + 1);
    block(x_jac, 0..m, start..start + m) + block(x_jac, 0..m, start + m..start + m + 1) * col(x).transpose()
}

fn block_checks(an: &Analysis, cons: &Construction) -> Result<Vec<CheckReport>> {
    let m = an.model.m();
    let k = an.model.k();
    let x = &an.solution.x;
    let lambda = &an.solution.lambda;
    let sigma1 = budget_slutsky(an.x_jac(), x, 0);
    let coh = an.settings.tolerances.coherence;
    let omega = &an.omega.matrix;
    let mut out = Vec::new();
    let at_default = an.solution.a == cons.point();
    if at_default {
        let gap = x.iter().zip(&cons.x_star).fold(0.0_f64, |acc, (u, v)| acc.max((u - v).abs()));
        out.push(CheckReport::compare(
            "multi_budget:recovers_construction",
            "the solution at the default point is the constructed optimum",
            gap,
            1e-8,
        ));
    }
    let mut worst_block = 0.0_f64;
    let mut worst_mirror = 0.0_f64;
    let scale = linalg::max_abs(omega).max(f64::MIN_POSITIVE);
    for i in 0..k {
        for j in 0..k {
            let b = block(omega, i * m..(i + 1) * m, j * m..(j + 1) * m);
            let expected = -(lambda[i] * lambda[j] / lambda[0]) * &sigma1;
            worst_block = worst_block.max(linalg::max_abs(&(&b - expected)) / scale);
            let mirror = block(omega, j * m..(j + 1) * m, i * m..(i + 1) * m);
            worst_mirror = worst_mirror.max(linalg::max_abs(&(&b - mirror.transpose())) / scale);
        }
    }
    out.push(CheckReport::compare(
        "multi_budget:block_scaling",
        "block (i, j) equals −(λ_i λ_j / λ_1) times the first compensated response",
        worst_block,
        coh,
    ));
    out.push(CheckReport::compare(
        "multi_budget:block_mirror",
        "block (i, j) is the transpose of block (j, i)",
        worst_mirror,
        coh,
    ));
    let s_scale = linalg::max_abs(&sigma1).max(1.0);
    let null = (0..k).fold(0.0_f64, |acc, j| {
        let p = col(&an.solution.a[j * (m + 1)..j * (m + 1) + m]);
        acc.max(linalg::max_abs(&(p.transpose() * &sigma1)))
    });
    out.push(CheckReport::compare(
        "multi_budget:price_null_vectors",
        "every price vector is a null vector of the compensated response",
        null / s_scale,
        1e-8,
    ));
    out.push(util::nsd("multi_budget:response_nsd", &sigma1, an.settings.tolerances.analytic * s_scale));
    out.push(util::rank_at_most(
        "multi_budget:response_rank",
        &sigma1,
        m - k,
        an.settings.csm.rank_tol,
    ));
    Ok(out)
}
