//! Log-utility consumer with market power: good `i` costs
//! `P_i(z) = α_i + β_i z + κ_i z²` at total quantity `z = x_i + q_i`,
//! parameters `(q, m)`.

use std::sync::Arc;

use nalgebra::DMatrix;

use super::slutsky_hicks::LogUtility;
use super::util::{self, block, col, diag};
use super::{BenchmarkEntry, PropertyCheck};
use crate::analysis::{self, Analysis, IsovectorRecipe, Prescription, Settings};
use crate::diagnostics::CheckReport;
use crate::error::{Error, Result};
use crate::jet::Scalar;
use crate::linalg;
use crate::model::{exact, ProblemModel, Smooth, VecMap};
use crate::solver::SolutionPoint;

#[derive(Debug, Clone, PartialEq)]
pub struct MarketConfig {
    pub gamma: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub kappa: Vec<f64>,
    pub q: Vec<f64>,
    pub m: f64,
}

impl Default for MarketConfig {
    fn default() -> Self {
        MarketConfig {
            gamma: vec![0.3, 0.5, 0.2],
            alpha: vec![1.0, 2.0, 1.5],
            beta: vec![0.2, 0.1, 0.3],
            kappa: vec![0.0; 3],
            q: vec![1.0, 0.5, 2.0],
            m: 10.0,
        }
    }
}

impl MarketConfig {
    pub fn goods(&self) -> usize {
        self.gamma.len()
    }

    pub fn price(&self, i: usize, z: f64) -> f64 {
        self.alpha[i] + self.beta[i] * z + self.kappa[i] * z * z
    }

    pub fn slope(&self, i: usize, z: f64) -> f64 {
        self.beta[i] + 2.0 * self.kappa[i] * z
    }

    pub fn curvature(&self, i: usize) -> f64 {
        2.0 * self.kappa[i]
    }

    /// Copy with every supply slope coefficient multiplied by `factor`.
    pub fn with_scaled_slopes(&self, factor: f64) -> Self {
        let mut c = self.clone();
        c.beta.iter_mut().for_each(|b| *b *= factor);
        c.kappa.iter_mut().for_each(|k| *k *= factor);
        c
    }
}

/// `m − Σ x_i P_i(x_i + q_i)`.
#[derive(Debug, Clone)]
struct Expenditure {
    cfg: MarketConfig,
}

impl Smooth for Expenditure {
    fn eval<S: Scalar>(&self, x: &[S], a: &[S]) -> S {
        let m = x.len();
        let mut spend = S::cst(0.0);
        for i in 0..m {
            let z = x[i].clone() + a[i].clone();
            let price = z.clone() * self.cfg.beta[i] + z.clone() * z * self.cfg.kappa[i] + self.cfg.alpha[i];
            spend = spend + x[i].clone() * price;
        }
        a[m].clone() - spend
    }
}

pub fn register(cfg: &MarketConfig) -> BenchmarkEntry {
    let m_dim = cfg.goods();
    let n = m_dim + 1;
    let model = ProblemModel::new(
        "market_power",
        m_dim,
        n,
        exact(LogUtility {
            gamma: cfg.gamma.clone(),
        }),
        vec![exact(Expenditure { cfg: cfg.clone() })],
    )
    .with_groups(&[("q", m_dim), ("m", 1)]);
    let c = cfg.clone();
    let prescribe = Arc::new(move |model: &ProblemModel, sol: &SolutionPoint| {
        let mut rows = DMatrix::zeros(m_dim, n);
        for i in 0..m_dim {
            rows[(i, i)] = 1.0;
            rows[(i, m_dim)] = sol.x[i] * c.slope(i, sol.x[i] + sol.a[i]);
        }
        Ok(Prescription {
            rows,
            labels: (0..m_dim).map(|i| format!("D({})", model.parameter_names[i])).collect(),
            annihilates_objective: false,
        })
    });
    let mut default_point = cfg.q.clone();
    default_point.push(cfg.m);
    let c0 = cfg.clone();
    let initial_guess: VecMap = Arc::new(move |a: &[f64]| {
        let big: f64 = c0.gamma.iter().sum();
        (0..m_dim)
            .map(|i| 0.5 * c0.gamma[i] * a[m_dim] / (big * c0.price(i, a[i])))
            .collect()
    });
    let c1 = cfg.clone();
    let c2 = cfg.clone();
    BenchmarkEntry {
        name: "market_power".into(),
        summary: "consumer facing upward-sloping supply; generalized Slutsky matrix".into(),
        model,
        default_point,
        initial_guess,
        isovectors: IsovectorRecipe::Prescribed(prescribe),
        derived: Vec::new(),
        suite: vec![
            PropertyCheck::new("market_power_matrix", move |an| matrix_checks(an, &c1)),
            PropertyCheck::new("competitive_limit", move |an| limit_checks(an, &c2)),
        ],
    }
}

/// Price-space quantities derived from the `(q, m)` Jacobian.
#[derive(Debug, Clone)]
pub struct PriceSpace {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub slope: Vec<f64>,
    pub curvature: Vec<f64>,
    /// `diag(1 + x p''/p') [X_q diag(1/p') + X_m xᵀ]`.
    pub g: DMatrix<f64>,
    /// `∂x/∂p` at fixed `m`.
    pub x_p: DMatrix<f64>,
    /// `∂x/∂m` at fixed `p`.
    pub x_m: Vec<f64>,
    /// `X_p + X_m xᵀ`.
    pub sigma: DMatrix<f64>,
    /// `Σ diag(1/(1 + x p''/p')) (I − diag(p') X_pᵀ)`.
    pub g_tilde: DMatrix<f64>,
}

impl PriceSpace {
    pub fn new(cfg: &MarketConfig, x: &[f64], a: &[f64], x_jac: &DMatrix<f64>) -> Result<Self> {
        let m_dim = x.len();
        let z: Vec<f64> = (0..m_dim).map(|i| x[i] + a[i]).collect();
        let p: Vec<f64> = (0..m_dim).map(|i| cfg.price(i, z[i])).collect();
        let slope: Vec<f64> = (0..m_dim).map(|i| cfg.slope(i, z[i])).collect();
        if slope.contains(&0.0) {
            return Err(Error::Domain(
                "supply slope vanishes; the market-power matrix needs p' ≠ 0 (approach the competitive case as a limit)".into(),
            ));
        }
        let curvature: Vec<f64> = (0..m_dim).map(|i| cfg.curvature(i)).collect();
        let xq = block(x_jac, 0..m_dim, 0..m_dim);
        let xm = block(x_jac, 0..m_dim, m_dim..m_dim + 1);
        let amp: Vec<f64> = (0..m_dim).map(|i| 1.0 + x[i] * curvature[i] / slope[i]).collect();
        let inv_slope: Vec<f64> = slope.iter().map(|s| 1.0 / s).collect();
        let g = diag(&amp) * (&xq * diag(&inv_slope) + &xm * col(x).transpose());

        // (q, m) ↦ (p, m): ∂p/∂q = diag(p')(X_q + I), ∂p/∂m = diag(p') X_m.
        let mut t = DMatrix::zeros(m_dim + 1, m_dim + 1);
        t.view_mut((0, 0), (m_dim, m_dim))
            .copy_from(&(diag(&slope) * (&xq + DMatrix::identity(m_dim, m_dim))));
        t.view_mut((0, m_dim), (m_dim, 1)).copy_from(&(diag(&slope) * &xm));
        t[(m_dim, m_dim)] = 1.0;
        let t_inv = t
            .try_inverse()
            .ok_or_else(|| Error::Transformation("(q, m) ↦ (p, m) is not invertible".into()))?;
        let xpm = x_jac * t_inv;
        let x_p = block(&xpm, 0..m_dim, 0..m_dim);
        let x_m: Vec<f64> = (0..m_dim).map(|i| xpm[(i, m_dim)]).collect();
        let sigma = &x_p + col(&x_m) * col(x).transpose();
        let j = DMatrix::identity(m_dim, m_dim) - diag(&slope) * x_p.transpose();
        let inv_amp: Vec<f64> = amp.iter().map(|v| 1.0 / v).collect();
        let g_tilde = &sigma * diag(&inv_amp) * j;
        Ok(PriceSpace {
            x: x.to_vec(),
            p,
            slope,
            curvature,
            g,
            x_p,
            x_m,
            sigma,
            g_tilde,
        })
    }

    /// `Σ − Σ diag(p') X_pᵀ`.
    pub fn slope_form(&self) -> DMatrix<f64> {
        &self.sigma - &self.sigma * diag(&self.slope) * self.x_p.transpose()
    }

    /// The same correction written with demand and supply elasticities.
    pub fn elasticity_form(&self, q: &[f64]) -> DMatrix<f64> {
        let m = self.x.len();
        let corr = DMatrix::from_fn(m, m, |c, b| {
            let eps_demand = self.p[c] / self.x[b] * self.x_p[(b, c)];
            let total = self.x[c] + q[c];
            let eps_supply = self.p[c] / (total * self.slope[c]);
            (self.x[c] / total) * (self.x[b] / self.x[c]) * eps_demand / eps_supply
        });
        &self.sigma * (DMatrix::identity(m, m) - corr)
    }
}

fn matrix_checks(an: &Analysis, cfg: &MarketConfig) -> Result<Vec<CheckReport>> {
    let m_dim = an.model.m();
    let a = &an.solution.a;
    let ps = PriceSpace::new(cfg, &an.solution.x, a, an.x_jac())?;
    let tol = an.settings.tolerances.analytic;
    let coh = an.settings.tolerances.coherence;
    let gs = linalg::max_abs(&ps.g).max(1.0);
    let p = col(&ps.p);
    let gt_scale = linalg::max_abs(&ps.g_tilde).max(1.0);
    let null = linalg::max_abs(&(&ps.g_tilde * &p)).max(linalg::max_abs(&(p.transpose() * &ps.g_tilde)));
    let p_mod: Vec<f64> = (0..m_dim).map(|i| ps.p[i] + ps.slope[i] * ps.x[i]).collect();
    let m_mod = a[m_dim] + (0..m_dim).map(|i| ps.x[i] * ps.x[i] * ps.slope[i]).sum::<f64>();
    let euler = (0..m_dim).fold(0.0_f64, |acc, i| {
        let v = m_mod * ps.x_m[i] + (0..m_dim).map(|j| ps.x_p[(i, j)] * p_mod[j]).sum::<f64>();
        acc.max(v.abs())
    });
    Ok(vec![
        util::nsd("market_power:matrix_nsd", &ps.g, tol * gs),
        CheckReport::compare(
            "market_power:matrix_symmetric",
            "market-power matrix is symmetric",
            linalg::symmetry_residual(&ps.g) / gs,
            an.settings.csm.symmetry_tol.max(1e-8),
        ),
        util::rank_at_most("market_power:matrix_rank", &ps.g, m_dim - 1, an.settings.csm.rank_tol),
        CheckReport::compare(
            "market_power:price_form_symmetric",
            "price-space matrix is symmetric",
            linalg::symmetry_residual(&ps.g_tilde) / gt_scale,
            1e-8,
        ),
        CheckReport::compare(
            "market_power:price_null_vector",
            "prices are left and right null vectors of the price-space matrix",
            null / gt_scale,
            1e-8,
        ),
        util::rel_close(
            "market_power:price_form_matches",
            "price-space matrix equals Σ − Σ diag(p') X_pᵀ",
            &ps.g_tilde,
            &ps.slope_form(),
            coh,
        ),
        util::rel_close(
            "market_power:elasticity_form",
            "slope form equals the elasticity form",
            &ps.slope_form(),
            &ps.elasticity_form(&a[..m_dim]),
            coh,
        ),
        CheckReport::compare(
            "market_power:modified_euler",
            "m̃ X_m + X_p p̃ = 0 with p̃ = p + p'x and m̃ = m + Σ p' x²",
            euler / linalg::max_abs(&ps.x_p).max(1.0),
            an.settings.tolerances.fd,
        ),
    ])
}

/// Distances from the market-power matrix to the competitive Slutsky matrix
/// at prices `α`, as every supply slope is scaled by each factor.
pub fn competitive_limit(cfg: &MarketConfig, factors: &[f64], settings: &Settings) -> Result<Vec<f64>> {
    let m_dim = cfg.goods();
    factors
        .iter()
        .map(|&s| {
            let c = cfg.with_scaled_slopes(s);
            let entry = register(&c);
            let a = &entry.default_point;
            let x0 = (entry.initial_guess)(a);
            let mut quiet = settings.clone();
            quiet.envelope = false;
            let an = analysis::analyze(&entry.model, &entry.isovectors, a, &x0, &quiet)?;
            let ps = PriceSpace::new(&c, &an.solution.x, a, an.x_jac())?;
            let x = &an.solution.x;
            let std = DMatrix::from_fn(m_dim, m_dim, |i, j| {
                let own = if i == j { -x[i] / cfg.alpha[i] } else { 0.0 };
                own + x[i] * x[j] / cfg.m
            });
            Ok(linalg::max_abs(&(&ps.g - std)))
        })
        .collect()
}

fn limit_checks(an: &Analysis, cfg: &MarketConfig) -> Result<Vec<CheckReport>> {
    if an.solution.a[..cfg.goods()] != cfg.q[..] || an.solution.a[cfg.goods()] != cfg.m {
        return Ok(vec![CheckReport::skipped(
            "market_power:competitive_limit",
            "the matrix tends to the competitive Slutsky matrix as p' → 0",
            "only evaluated at the configured point",
        )]);
    }
    let factors = [1e-1, 1e-2, 1e-3, 1e-4];
    let d = competitive_limit(cfg, &factors, &an.settings)?;
    let decreasing = d.windows(2).all(|w| w[1] < w[0]);
    Ok(vec![CheckReport::flag(
        "market_power:competitive_limit",
        "the matrix tends to the competitive Slutsky matrix as p' → 0",
        decreasing && d[d.len() - 1] < 1e-2,
        format!(
            "distances [{}] for slope factors {factors:?}",
            d.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(", ")
        ),
    )])
}
