//! Principal-agent wage design with `M` outcome levels and utility `v = √x`.
//!
//! The principal minimizes expected wages `Σ P^I_i x_i` subject to the
//! participation constraint `Σ P^I_i v(x_i) = B^I` and the incentive
//! constraint `Σ P^II_i v(x_i) = B^II`. Parameters are
//! `(P^I, B^I, s^I, P^II, B^II, s^II)` with `s^k = Σ_i P^k_i` imposed as a
//! parameter relation.

use std::sync::Arc;

use nalgebra::DMatrix;

use super::util::{self, block, diag};
use super::{BenchmarkEntry, PropertyCheck};
use crate::analysis::{Analysis, IsovectorRecipe, Prescription};
use crate::diagnostics::CheckReport;
use crate::error::{Error, Result};
use crate::jet::{self, Scalar};
use crate::linalg;
use crate::model::{closure, exact, InvarianceGenerator, ProblemModel, ScalarMap, Smooth, VecMap};
use crate::solver::{self, SolutionPoint, SolverConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct AgencyConfig {
    /// Outcome probabilities under the recommended action.
    pub p_one: Vec<f64>,
    /// Outcome probabilities under the alternative action.
    pub p_two: Vec<f64>,
    /// Effort cost of the recommended action.
    pub cost_one: f64,
    pub cost_two: f64,
    /// Reservation utility.
    pub reservation: f64,
}

impl Default for AgencyConfig {
    fn default() -> Self {
        AgencyConfig {
            p_one: vec![0.2, 0.3, 0.5],
            p_two: vec![0.5, 0.3, 0.2],
            cost_one: 1.0,
            cost_two: 0.5,
            reservation: 2.0,
        }
    }
}

impl AgencyConfig {
    pub fn levels(&self) -> usize {
        self.p_one.len()
    }

    /// `(P^I, B^I, s^I, P^II, B^II, s^II)`.
    pub fn point(&self) -> Vec<f64> {
        let mut a = self.p_one.clone();
        a.push(self.cost_one + self.reservation);
        a.push(self.p_one.iter().sum());
        a.extend(&self.p_two);
        a.push(self.cost_two + self.reservation);
        a.push(self.p_two.iter().sum());
        a
    }

    fn validate(&self) -> Result<()> {
        let m = self.levels();
        if m < 3 || self.p_two.len() != m {
            return Err(Error::Config("need at least three outcome levels with matching probability vectors".into()));
        }
        for p in [&self.p_one, &self.p_two] {
            let total: f64 = p.iter().sum();
            if p.iter().any(|v| *v <= 0.0) || (total - 1.0).abs() > 1e-12 {
                return Err(Error::Config("probabilities must lie in the open simplex".into()));
            }
        }
        if self.cost_one <= self.cost_two {
            return Err(Error::Config("the recommended action must be the costlier one".into()));
        }
        Ok(())
    }
}

fn offset(k: usize, m: usize) -> usize {
    k * (m + 2)
}

/// `−Σ P^I_i x_i`.
#[derive(Debug, Clone)]
struct WageBill;

impl Smooth for WageBill {
    fn eval<S: Scalar>(&self, x: &[S], a: &[S]) -> S {
        -jet::dot(x, &a[..x.len()])
    }
}

/// `B^k − Σ P^k_i √x_i`.
#[derive(Debug, Clone)]
struct UtilityLevel {
    k: usize,
}

impl Smooth for UtilityLevel {
    fn eval<S: Scalar>(&self, x: &[S], a: &[S]) -> S {
        let m = x.len();
        let o = offset(self.k, m);
        let v: Vec<S> = x.iter().map(|xi| xi.clone().sqrt()).collect();
        a[o + m].clone() - jet::dot(&v, &a[o..o + m])
    }
}

pub fn register(cfg: &AgencyConfig) -> Result<BenchmarkEntry> {
    cfg.validate()?;
    let m = cfg.levels();
    let n = 2 * (m + 2);
    let mut model = ProblemModel::new(
        "principal_agent",
        m,
        n,
        exact(WageBill),
        vec![exact(UtilityLevel { k: 0 }), exact(UtilityLevel { k: 1 })],
    )
    .with_groups(&[("PI_", m), ("BI", 1), ("sI", 1), ("PII_", m), ("BII", 1), ("sII", 1)]);
    model.parameter_relations = (0..2)
        .map(|k| {
            let o = offset(k, m);
            closure(move |_x: &[f64], a: &[f64]| a[o + m + 1] - a[o..o + m].iter().sum::<f64>())
        })
        .collect();
    let id: ScalarMap = Arc::new(|v| v);
    let zero: ScalarMap = Arc::new(|_| 0.0);
    model.invariance_generators = (0..2)
        .map(|k| {
            let o = offset(k, m);
            let (fr, g) = if k == 0 {
                (id.clone(), vec![id.clone(), zero.clone()])
            } else {
                (zero.clone(), vec![zero.clone(), id.clone()])
            };
            InvarianceGenerator::euler(
                format!("homogeneity(level {})", if k == 0 { "I" } else { "II" }),
                (o..o + m + 2).collect(),
                m,
            )
            .with_responses(Some(fr), Some(g))
        })
        .collect();

    let initial_guess: VecMap = Arc::new(move |a: &[f64]| vec![a[m] * a[m] + 4.0; m]);
    let point = cfg.point();
    let sol = solver::solve(&model, &point, &initial_guess(&point), &SolverConfig::default())?;
    let (l1, l2) = (-sol.lambda[0], -sol.lambda[1]);
    if !sol.converged || l1 <= 0.0 || l2 >= 0.0 {
        return Err(Error::Config(format!(
            "participation and incentive constraints do not both bind (multipliers {l1:.6}, {l2:.6})"
        )));
    }

    let prescribe = Arc::new(move |model: &ProblemModel, sol: &SolutionPoint| {
        let mut rows = DMatrix::zeros(2 * m, n);
        let mut labels = Vec::with_capacity(2 * m);
        for k in 0..2 {
            let o = offset(k, m);
            for j in 0..m {
                let r = k * m + j;
                rows[(r, o + j)] = 1.0;
                rows[(r, o + m)] = sol.x[j].sqrt();
                rows[(r, o + m + 1)] = 1.0;
                labels.push(format!("d({})", model.parameter_names[o + j]));
            }
        }
        Ok(Prescription {
            rows,
            labels,
            annihilates_objective: false,
        })
    });
    Ok(BenchmarkEntry {
        name: "principal_agent".into(),
        summary: "wage design under participation and incentive constraints".into(),
        model,
        default_point: point,
        initial_guess,
        isovectors: IsovectorRecipe::Prescribed(prescribe),
        derived: Vec::new(),
        suite: vec![PropertyCheck::new("agency_structure", agency_checks)],
    })
}

/// Multipliers in the sign convention of the minimization problem.
pub fn conventional_multipliers(an: &Analysis) -> (f64, f64) {
    (-an.solution.lambda[0], -an.solution.lambda[1])
}

/// Reduced operators `D^k_j = ∂/∂P_j − Σ_l P_l ∂/∂P_l + (v(x_j) − B) ∂/∂B`
/// acting on the Jacobian, M columns per level.
pub fn reduced_action(an: &Analysis, k: usize) -> DMatrix<f64> {
    let m = an.model.m();
    let n = an.model.n();
    let a = &an.solution.a;
    let o = offset(k, m);
    let mut t = DMatrix::zeros(m, n);
    for j in 0..m {
        for l in 0..m {
            t[(j, o + l)] -= a[o + l];
        }
        t[(j, o + j)] += 1.0;
        t[(j, o + m)] = an.solution.x[j].sqrt() - a[o + m];
    }
    an.x_jac() * t.transpose()
}

fn agency_checks(an: &Analysis) -> Result<Vec<CheckReport>> {
    let m = an.model.m();
    let a = &an.solution.a;
    let x = &an.solution.x;
    let phi = -&an.omega.matrix;
    let xs = an.x_semicolon();
    let p11 = block(&phi, 0..m, 0..m);
    let p12 = block(&phi, 0..m, m..2 * m);
    let p22 = block(&phi, m..2 * m, m..2 * m);
    let r = diag(&(0..m).map(|i| -a[i] / a[offset(1, m) + i]).collect::<Vec<_>>());
    let vp: Vec<f64> = x.iter().map(|v| 0.5 / v.sqrt()).collect();
    let h = diag(&vp) * block(&xs, 0..m, m..2 * m);
    let (l1, l2) = conventional_multipliers(an);
    let d_one = reduced_action(an, 0);
    let d_two = reduced_action(an, 1);
    let scale = linalg::max_abs(&phi).max(1.0);
    let tol = an.settings.tolerances.analytic;
    let one_minus = vp.iter().fold(f64::NEG_INFINITY, |acc, v| acc.max(1.0 - l1 * v));
    let diag_one = (0..m).fold(f64::INFINITY, |acc, j| acc.min(d_one[(j, j)]));
    let diag_two = (0..m).fold(f64::NEG_INFINITY, |acc, j| acc.max(d_two[(j, j)]));
    Ok(vec![
        util::nsd("agency:phi_nsd", &phi, tol * scale),
        util::abs_close("agency:block_22", "Φ²² = R Φ¹¹ R", &p22, &(&r * &p11 * &r), 1e-5),
        util::abs_close("agency:block_12", "Φ¹² = Φ¹¹ R", &p12, &(&p11 * &r), 1e-5),
        util::nsd("agency:h_nsd", &h, tol * linalg::max_abs(&h).max(1.0)),
        util::rank_at_most("agency:h_rank", &h, m - 2, an.settings.csm.rank_tol),
        CheckReport::flag(
            "agency:multiplier_signs",
            "participation multiplier is nonnegative and incentive multiplier nonpositive",
            l1 >= 0.0 && l2 <= 0.0,
            format!("λ_I = {l1:.9}, λ_II = {l2:.9}"),
        ),
        CheckReport::flag(
            "agency:marginal_utility_bound",
            "1 − λ_I v'(x_j) ≤ 0 at every level",
            one_minus <= 0.0,
            format!("max {one_minus:.6}"),
        ),
        util::rel_close(
            "agency:reduced_operators",
            "reduced operators act like the full isovectors",
            &d_two,
            &block(&xs, 0..m, m..2 * m),
            an.settings.tolerances.coherence,
        ),
        CheckReport::flag(
            "agency:own_responses",
            "diag(D^I x) ≥ 0 and diag(D^II x) ≤ 0",
            diag_one >= 0.0 && diag_two <= 0.0,
            format!("min level-I diagonal {diag_one:.6}, max level-II diagonal {diag_two:.6}"),
        ),
    ])
}
