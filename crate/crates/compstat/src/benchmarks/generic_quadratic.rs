//! Random concave quadratic program with linear constraints, used to probe
//! rank bounds at arbitrary `(M, K, N)`.
//!
//! `f = −½ xᵀQx + xᵀBa` and `g_k = d_k·a + e_k − h_k·x`, all data drawn from
//! a seeded ChaCha stream.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::util;
use super::{BenchmarkEntry, PropertyCheck};
use crate::analysis::{Analysis, IsovectorRecipe};
use crate::csm::Recipe;
use crate::diagnostics::CheckReport;
use crate::error::{Error, Result};
use crate::jet::{self, Scalar};
use crate::model::{exact, ProblemModel, Smooth, VecMap};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticData {
    pub q: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub e: Vec<f64>,
    pub h: DMatrix<f64>,
    pub point: Vec<f64>,
}

impl QuadraticData {
    pub fn random(m: usize, k: usize, n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
        let root = draw(m, m);
        let q = &root * root.transpose() + DMatrix::identity(m, m);
        let b = draw(m, n);
        let d = draw(k, n);
        let h = draw(k, m);
        let e = draw(k, 1).iter().copied().collect();
        let point = draw(n, 1).iter().map(|v| 1.0 + 0.5 * v).collect();
        QuadraticData { q, b, d, e, h, point }
    }

    fn kkt_matrix(&self) -> DMatrix<f64> {
        let (m, k) = (self.q.nrows(), self.h.nrows());
        let mut kkt = DMatrix::zeros(m + k, m + k);
        kkt.view_mut((0, 0), (m, m)).copy_from(&(-&self.q));
        kkt.view_mut((0, m), (m, k)).copy_from(&(-self.h.transpose()));
        kkt.view_mut((m, 0), (k, m)).copy_from(&(-&self.h));
        kkt
    }

    /// Solves the linear first-order system for `(x, λ)`.
    pub fn solve(&self, a: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let m = self.q.nrows();
        let av = DVector::from_column_slice(a);
        let rhs_x = -(&self.b * &av);
        let rhs_g = -(&self.d * &av + DVector::from_column_slice(&self.e));
        let rhs = DVector::from_iterator(rhs_x.len() + rhs_g.len(), rhs_x.iter().chain(rhs_g.iter()).copied());
        let z = self
            .kkt_matrix()
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Degeneracy("singular first-order system".into()))?;
        Ok((z.rows(0, m).iter().copied().collect(), z.rows(m, z.len() - m).iter().copied().collect()))
    }

    pub fn jacobians(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let (m, k, n) = (self.q.nrows(), self.h.nrows(), self.b.ncols());
        let mut rhs = DMatrix::zeros(m + k, n);
        rhs.view_mut((0, 0), (m, n)).copy_from(&(-&self.b));
        rhs.view_mut((m, 0), (k, n)).copy_from(&(-&self.d));
        let z = self
            .kkt_matrix()
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Degeneracy("singular first-order system".into()))?;
        Ok((z.rows(0, m).into_owned(), z.rows(m, k).into_owned()))
    }
}

#[derive(Debug, Clone)]
struct Objective {
    q: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl Smooth for Objective {
    fn eval<S: Scalar>(&self, x: &[S], a: &[S]) -> S {
        let m = x.len();
        let mut out = S::cst(0.0);
        for i in 0..m {
            let qrow: Vec<f64> = (0..m).map(|j| self.q[(i, j)]).collect();
            let brow: Vec<f64> = (0..a.len()).map(|j| self.b[(i, j)]).collect();
            out = out + x[i].clone() * (jet::dot_c(a, &brow) - jet::dot_c(x, &qrow) * 0.5);
        }
        out
    }
}

#[derive(Debug, Clone)]
struct Linear {
    d: Vec<f64>,
    e: f64,
    h: Vec<f64>,
}

impl Smooth for Linear {
    fn eval<S: Scalar>(&self, x: &[S], a: &[S]) -> S {
        jet::dot_c(a, &self.d) - jet::dot_c(x, &self.h) + self.e
    }
}

pub fn register(m: usize, k: usize, n: usize, seed: u64) -> BenchmarkEntry {
    let data = QuadraticData::random(m, k, n, seed);
    let cons = (0..k)
        .map(|r| {
            exact(Linear {
                d: data.d.row(r).iter().copied().collect(),
                e: data.e[r],
                h: data.h.row(r).iter().copied().collect(),
            })
        })
        .collect();
    let mut model = ProblemModel::new(
        "generic_quadratic",
        m,
        n,
        exact(Objective {
            q: data.q.clone(),
            b: data.b.clone(),
        }),
        cons,
    );
    let d1 = data.clone();
    model.analytic_solution = Some(Arc::new(move |a: &[f64]| d1.solve(a)));
    let d2 = data.clone();
    model.analytic_sensitivity = Some(Arc::new(move |_a: &[f64]| d2.jacobians()));
    let initial_guess: VecMap = Arc::new(move |_a: &[f64]| vec![0.0; m]);
    BenchmarkEntry {
        name: "generic_quadratic".into(),
        summary: format!("random quadratic program with M = {m}, K = {k}, N = {n}"),
        model,
        default_point: data.point.clone(),
        initial_guess,
        isovectors: IsovectorRecipe::Nullspace {
            annihilate_objective: false,
        },
        derived: Vec::new(),
        suite: vec![PropertyCheck::new("rank_bounds", rank_checks)],
    }
}

fn rank_checks(an: &Analysis) -> Result<Vec<CheckReport>> {
    let (m, k, n) = (an.model.m(), an.model.k(), an.model.n());
    let expected = (m - k.min(m)).min(n);
    let mut out = Vec::new();
    match an.csm(Recipe::Universal) {
        Some(u) => {
            let r = u.rank_estimate;
            out.push(CheckReport::flag(
                "quadratic:universal_rank_attained",
                "the projection-based matrix attains rank min(M − K, N)",
                r == expected,
                format!("rank {r}, expected {expected}"),
            ));
        }
        None => out.push(CheckReport::skipped(
            "quadratic:universal_rank_attained",
            "the projection-based matrix attains rank min(M − K, N)",
            "universal recipe not requested",
        )),
    }
    out.push(util::rank_at_most(
        "quadratic:omega_rank",
        &an.omega.matrix,
        (m - k.min(m)).min(an.isovectors.a()),
        an.settings.csm.rank_tol,
    ));
    Ok(out)
}
