//! Single-output profit maximization with a Cobb-Douglas technology
//! `F(x) = F0 Π x_μ^{γ_μ} − c`, parameters `(w, p)` plus the scale `s`.
//!
//! The constant `c` shifts the zero-profit locus without moving the optimum,
//! which lets tests sit exactly on the point where `Z` loses rank.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::util::{self, block, col};
use super::{BenchmarkEntry, PropertyCheck};
use crate::analysis::{Analysis, DerivedMatrix, IsovectorRecipe, Prescription};
use crate::csm;
use crate::diagnostics::CheckReport;
use crate::error::{Error, Result};
use crate::geometry::BasisKind;
use crate::jet::{self, Scalar};
use crate::linalg;
use crate::model::{exact, InvarianceGenerator, ProblemModel, ScalarMap, Smooth, VecMap};
use crate::solver::SolutionPoint;

#[derive(Debug, Clone, PartialEq)]
pub struct CdConfig {
    pub gamma: Vec<f64>,
    pub f0: f64,
    /// Constant subtracted from output.
    pub offset: f64,
}

impl Default for CdConfig {
    fn default() -> Self {
        CdConfig {
            gamma: vec![1.0 / 3.0, 1.0 / 3.0],
            f0: 1.0,
            offset: 0.0,
        }
    }
}

impl CdConfig {
    pub fn returns_to_scale(&self) -> f64 {
        self.gamma.iter().sum()
    }

    /// `F0 Π x^γ`.
    pub fn cobb_douglas(&self, x: &[f64]) -> f64 {
        self.f0 * x.iter().zip(&self.gamma).map(|(xi, g)| xi.powf(*g)).product::<f64>()
    }

    pub fn output(&self, x: &[f64]) -> f64 {
        self.cobb_douglas(x) - self.offset
    }

    /// `∂F/∂x_μ = γ_μ F_CD / x_μ`.
    pub fn marginal_products(&self, x: &[f64]) -> Vec<f64> {
        let q = self.cobb_douglas(x);
        x.iter().zip(&self.gamma).map(|(xi, g)| g * q / xi).collect()
    }

    /// Optimal `F_CD` at prices `(w, p)`.
    pub fn optimal_cd_output(&self, w: &[f64], p: f64) -> f64 {
        let g = self.returns_to_scale();
        let inner = self.f0
            * self
                .gamma
                .iter()
                .zip(w)
                .map(|(gm, wm)| (gm * p / wm).powf(*gm))
                .product::<f64>();
        inner.powf(1.0 / (1.0 - g))
    }

    /// Closed-form factor demands `x_μ = γ_μ p F_CD / w_μ`.
    pub fn demand(&self, w: &[f64], p: f64) -> Vec<f64> {
        let q = self.optimal_cd_output(w, p);
        self.gamma.iter().zip(w).map(|(g, wm)| g * p * q / wm).collect()
    }

    /// Offset placing `(w, p)` exactly at zero profit.
    pub fn zero_profit_offset(&self, w: &[f64], p: f64) -> f64 {
        (1.0 - self.returns_to_scale()) * self.optimal_cd_output(w, p)
    }
}

/// `p F(x) − x·w` with `a = (w, p)`.
#[derive(Debug, Clone)]
struct Profit {
    cfg: CdConfig,
}

impl Smooth for Profit {
    fn eval<S: Scalar>(&self, x: &[S], a: &[S]) -> S {
        let m = x.len();
        let log_q = jet::sum(x.iter().zip(&self.cfg.gamma).map(|(xi, g)| xi.clone().ln() * *g));
        let f = log_q.exp() * self.cfg.f0 - self.cfg.offset;
        a[m].clone() * f - jet::dot(x, &a[..m])
    }
}

/// Unconstrained model over `(w, p)` with closed forms.
pub fn base_model(cfg: &CdConfig) -> Result<ProblemModel> {
    let g = cfg.returns_to_scale();
    if g >= 1.0 || cfg.gamma.iter().any(|v| *v <= 0.0) || cfg.f0 <= 0.0 {
        return Err(Error::Config(format!(
            "Cobb-Douglas exponents must be positive with sum below 1 (sum {g}); otherwise there is no interior maximum"
        )));
    }
    let m = cfg.gamma.len();
    let mut model = ProblemModel::new("profit_cd", m, m + 1, exact(Profit { cfg: cfg.clone() }), vec![])
        .with_groups(&[("w", m), ("p", 1)]);
    let c1 = cfg.clone();
    model.analytic_solution = Some(Arc::new(move |a: &[f64]| Ok((c1.demand(&a[..m], a[m]), vec![]))));
    let c2 = cfg.clone();
    model.analytic_sensitivity = Some(Arc::new(move |a: &[f64]| {
        Ok((closed_form_jacobian(&c2, &a[..m], a[m]), DMatrix::zeros(0, m + 1)))
    }));
    Ok(model)
}

/// `∂x_μ/∂w_ν = −(x_μ/w_ν)(δ_μν + γ_ν/(1−γ))`, `∂x_μ/∂p = x_μ/(p(1−γ))`.
pub fn closed_form_jacobian(cfg: &CdConfig, w: &[f64], p: f64) -> DMatrix<f64> {
    let m = w.len();
    let g = cfg.returns_to_scale();
    let x = cfg.demand(w, p);
    DMatrix::from_fn(m, m + 1, |mu, nu| {
        if nu == m {
            x[mu] / (p * (1.0 - g))
        } else {
            let d = if mu == nu { 1.0 } else { 0.0 };
            -(x[mu] / w[nu]) * (d + cfg.gamma[nu] / (1.0 - g))
        }
    })
}

pub fn register(cfg: &CdConfig) -> Result<BenchmarkEntry> {
    let m = cfg.gamma.len();
    let mut model = base_model(cfg)?.augment_with_scale();
    model.name = "profit_cd".into();
    let identity: ScalarMap = Arc::new(|v| v);
    model.invariance_generators = vec![
        InvarianceGenerator::euler("homogeneity(w,p)", (0..=m).collect(), m).with_responses(Some(identity.clone()), None),
        InvarianceGenerator::euler("scale(s)", vec![m + 1], m).with_responses(Some(identity), None),
    ];
    let tech = cfg.clone();
    let prescribe = Arc::new(move |model: &ProblemModel, sol: &SolutionPoint| scale_compensation(model, sol, &tech));
    let mut default_point = vec![1.0; m];
    default_point.push(3.0);
    default_point.push(1.0);
    let initial_guess: VecMap = Arc::new(move |_a: &[f64]| vec![0.7; m]);
    let c = cfg.clone();
    Ok(BenchmarkEntry {
        name: "profit_cd".into(),
        summary: "competitive firm with Cobb-Douglas technology; demand, supply and the sharpened bounds".into(),
        model,
        default_point,
        initial_guess,
        isovectors: IsovectorRecipe::Prescribed(prescribe),
        derived: vec![Arc::new({
            let c = c.clone();
            move |an: &Analysis| {
                let labels: Vec<String> = (1..=m).map(|i| format!("w{i}")).collect();
                Ok(DerivedMatrix {
                    name: "z".into(),
                    row_labels: labels.clone(),
                    col_labels: labels,
                    matrix: ProfitBlocks::from_analysis(an, &c).z_matrix(),
                })
            }
        })],
        suite: vec![
            PropertyCheck::new("standard_properties", {
                let c = c.clone();
                move |an| standard_checks(an, &c)
            }),
            PropertyCheck::new("sharpened_bounds", {
                let c = c.clone();
                move |an| bound_checks(an, &c)
            }),
            PropertyCheck::new("z_family", {
                let c = c.clone();
                move |an| family_checks(an, &c)
            }),
            PropertyCheck::new("closed_forms", move |an| closed_form_checks(an, &c)),
        ],
    })
}

/// Rows `e_{w_α} + (s x_α/φ) e_s` and `e_p − (s F/φ) e_s`, which annihilate
/// the scaled objective `s φ`.
fn scale_compensation(model: &ProblemModel, sol: &SolutionPoint, cfg: &CdConfig) -> Result<Prescription> {
    let m = model.m();
    let n = model.n();
    let (w, p, s) = (&sol.a[..m], sol.a[m], sol.a[m + 1]);
    let f = cfg.output(&sol.x);
    let phi = p * f - sol.x.iter().zip(w).map(|(x, w)| x * w).sum::<f64>();
    if phi.abs() <= 1e-12 * (p * f).abs().max(1.0) {
        return Err(Error::Domain(
            "profit vanishes, so the scale factor cannot compensate the objective".into(),
        ));
    }
    let mut rows = DMatrix::zeros(m + 1, n);
    for alpha in 0..m {
        rows[(alpha, alpha)] = 1.0;
        rows[(alpha, m + 1)] = s * sol.x[alpha] / phi;
    }
    rows[(m, m)] = 1.0;
    rows[(m, m + 1)] = -s * f / phi;
    Ok(Prescription {
        rows,
        labels: (0..=m).map(|a| format!("D({})", model.parameter_names[a])).collect(),
        annihilates_objective: true,
    })
}

/// Derivative blocks used throughout the suite.
#[derive(Debug, Clone)]
pub struct ProfitBlocks {
    pub w: Vec<f64>,
    pub p: f64,
    pub x: Vec<f64>,
    /// `F(x)`.
    pub output: f64,
    /// `∂x/∂w`, M×M.
    pub w_block: DMatrix<f64>,
    /// `∂x/∂p`.
    pub x_p: Vec<f64>,
    /// `∂F/∂w`.
    pub f_w: Vec<f64>,
    /// `∂F/∂p`.
    pub f_p: f64,
}

impl ProfitBlocks {
    pub fn from_analysis(an: &Analysis, cfg: &CdConfig) -> Self {
        let m = an.model.m();
        let a = &an.solution.a;
        let x = an.solution.x.clone();
        let xj = an.x_jac();
        let fx = cfg.marginal_products(&x);
        let w_block = block(xj, 0..m, 0..m);
        let x_p: Vec<f64> = (0..m).map(|i| xj[(i, m)]).collect();
        let f_w = (0..m).map(|nu| (0..m).map(|i| fx[i] * xj[(i, nu)]).sum()).collect();
        let f_p = (0..m).map(|i| fx[i] * x_p[i]).sum();
        ProfitBlocks {
            w: a[..m].to_vec(),
            p: a[m],
            output: cfg.output(&x),
            x,
            w_block,
            x_p,
            f_w,
            f_p,
        }
    }

    pub fn m(&self) -> usize {
        self.x.len()
    }

    pub fn profit(&self) -> f64 {
        self.p * self.output - self.x.iter().zip(&self.w).map(|(x, w)| x * w).sum::<f64>()
    }

    /// `Δ = I − l wᵀ/p`.
    pub fn delta(&self, l: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(self.m(), self.m()) - col(l) * col(&self.w).transpose() / self.p
    }

    /// `Δ W Δᵀ` for an arbitrary vector `l`.
    pub fn family(&self, l: &[f64]) -> DMatrix<f64> {
        let d = self.delta(l);
        &d * &self.w_block * d.transpose()
    }

    /// `Z_{μν} = ∂ζ_μ/∂w_ν + ζ_ν ∂ζ_μ/∂p` with `ζ = x/F`, from its definition.
    pub fn z_matrix(&self) -> DMatrix<f64> {
        let m = self.m();
        let f = self.output;
        let zeta: Vec<f64> = self.x.iter().map(|v| v / f).collect();
        let dzeta_p: Vec<f64> = (0..m).map(|mu| self.x_p[mu] / f - self.x[mu] * self.f_p / (f * f)).collect();
        DMatrix::from_fn(m, m, |mu, nu| {
            let dzeta_w = self.w_block[(mu, nu)] / f - self.x[mu] * self.f_w[nu] / (f * f);
            dzeta_w + zeta[nu] * dzeta_p[mu]
        })
    }

    /// `W* = W + x_p x_pᵀ / F_p`.
    pub fn w_star(&self) -> DMatrix<f64> {
        &self.w_block + col(&self.x_p) * col(&self.x_p).transpose() / self.f_p
    }

    /// Own-price elasticities: exact, sharpened bound, standard bound.
    pub fn own_price_elasticities(&self) -> Vec<[f64; 3]> {
        (0..self.m())
            .map(|mu| {
                let scale = self.w[mu] / self.x[mu];
                [
                    scale * self.w_block[(mu, mu)],
                    -scale * self.x_p[mu] * self.x_p[mu] / self.f_p,
                    0.0,
                ]
            })
            .collect()
    }

    /// Supply elasticity `(p/F) ∂F/∂p` and its lower bound from `W`.
    pub fn supply_elasticity(&self) -> (f64, f64) {
        let m = self.m();
        let mut q = 0.0;
        for mu in 0..m {
            for nu in 0..m {
                q += (self.w[mu] / self.p) * (self.w[nu] / self.p) * self.w_block[(mu, nu)];
            }
        }
        let k = self.p / self.output;
        (k * self.f_p, -k * q)
    }
}

fn standard_checks(an: &Analysis, cfg: &CdConfig) -> Result<Vec<CheckReport>> {
    let b = ProfitBlocks::from_analysis(an, cfg);
    let m = b.m();
    let tol = an.settings.tolerances.analytic;
    let scale = b.f_p.abs().max(1.0);
    let mut a_dir = an.solution.a.clone();
    a_dir[m + 1] = 0.0;
    let drift = an.x_jac() * nalgebra::DVector::from_vec(a_dir);
    let cross = b
        .x_p
        .iter()
        .zip(&b.f_w)
        .fold(0.0_f64, |acc, (xp, fw)| acc.max((xp + fw).abs()));
    let mut out = vec![
        CheckReport::compare(
            "profit:supply_slope",
            "output rises with its price",
            (-b.f_p).max(0.0) / scale,
            tol,
        ),
        util::nsd("profit:factor_demand_nsd", &b.w_block, tol),
        CheckReport::compare(
            "profit:homogeneity",
            "demands are homogeneous of degree zero in (w, p)",
            linalg::max_abs_vec(&drift),
            an.settings.tolerances.fd,
        ),
        util::nsd("profit:z_nsd", &b.z_matrix(), tol),
        CheckReport::compare(
            "profit:cross_derivative",
            "∂x_μ/∂p = −∂F/∂w_μ",
            cross,
            1e-6 * b.f_p.abs().max(1.0),
        ),
        CheckReport::compare(
            "profit:scale_independence",
            "decisions do not depend on the scale factor",
            linalg::max_abs(&block(an.x_jac(), 0..m, m + 1..m + 2)),
            1e-8,
        ),
    ];
    if an.isovectors.basis_kind == BasisKind::Prescribed {
        let s = an.solution.a[m + 1];
        let mut expected = DMatrix::zeros(m + 1, m + 1);
        expected.view_mut((0, 0), (m, m)).copy_from(&(-&b.w_block));
        for i in 0..m {
            expected[(i, m)] = -b.x_p[i];
            expected[(m, i)] = b.f_w[i];
        }
        expected[(m, m)] = b.f_p;
        out.push(util::rel_close(
            "profit:csm_blocks",
            "CSM equals s [[−W, −x_p], [F_w, F_p]]",
            &an.omega.matrix,
            &(s * expected),
            an.settings.tolerances.coherence,
        ));
    }
    Ok(out)
}

fn bound_checks(an: &Analysis, cfg: &CdConfig) -> Result<Vec<CheckReport>> {
    let b = ProfitBlocks::from_analysis(an, cfg);
    let tol = an.settings.tolerances.analytic;
    let ws = b.w_star();
    let own = (0..b.m()).fold(0.0_f64, |acc, mu| {
        acc.max(b.w_block[(mu, mu)] + b.x_p[mu] * b.x_p[mu] / b.f_p)
    });
    let (sigma, sigma_bound) = b.supply_elasticity();
    let el = b.own_price_elasticities();
    Ok(vec![
        util::nsd("profit:w_star_nsd", &ws, tol),
        CheckReport::compare(
            "profit:own_price_bound",
            "∂x_μ/∂w_μ ≤ −(∂x_μ/∂p)² / F_p",
            own.max(0.0),
            tol * linalg::max_abs(&b.w_block).max(1.0),
        )
        .with_note(format!(
            "elasticities [exact, sharpened, standard]: {}",
            el.iter()
                .map(|e| format!("[{:.9}, {:.9}, {}]", e[0], e[1], e[2]))
                .collect::<Vec<_>>()
                .join(", ")
        )),
        CheckReport::compare(
            "profit:supply_bound",
            "F_p ≥ −Σ (w_μ/p)(w_ν/p) W_μν",
            (sigma_bound - sigma).max(0.0),
            tol * sigma.abs().max(1.0),
        )
        .with_note(format!("supply elasticity {sigma:.12}, bound {sigma_bound:.12}")),
    ])
}

fn family_checks(an: &Analysis, cfg: &CdConfig) -> Result<Vec<CheckReport>> {
    let b = ProfitBlocks::from_analysis(an, cfg);
    let m = b.m();
    let tol = an.settings.tolerances.analytic;
    let rank_tol = an.settings.csm.rank_tol;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0_f64;
    for _ in 0..16 {
        let l: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
        let fam = b.family(&l);
        let eig = linalg::sym_eigenvalues(&linalg::symmetrize(&fam));
        worst = worst.max(eig.max().max(0.0) / linalg::max_abs_vec(&eig).max(1.0));
    }
    let zeta: Vec<f64> = b.x.iter().map(|v| v / b.output).collect();
    let z_from_family = b.family(&zeta) / b.output;
    let profit = b.profit();
    let zero_profit = profit.abs() <= 1e-9 * (b.p * b.output).abs().max(1.0);
    let ones = vec![1.0; m];
    let on_unit_singularity = (b.p - b.w.iter().sum::<f64>()).abs() <= 1e-12 * b.p.abs().max(1.0);
    let decision_map: VecMap = {
        let c = cfg.clone();
        Arc::new(move |x: &[f64]| {
            let f = c.output(x);
            x.iter().map(|v| v / f).collect()
        })
    };
    let rep = csm::reparameterize_csm(
        &an.model,
        &an.solution,
        &an.sensitivity,
        &an.isovectors,
        Some(&decision_map),
        None,
    );
    Ok(vec![
        CheckReport::compare(
            "profit:family_nsd",
            "Δ W Δᵀ is negative semidefinite for sampled l",
            worst,
            tol,
        ),
        util::abs_close(
            "profit:family_at_zero",
            "l = 0 recovers W",
            &b.family(&vec![0.0; m]),
            &b.w_block,
            0.0,
        ),
        util::rel_close(
            "profit:z_in_family",
            "Z equals Δ W Δᵀ / F with l = x/F",
            &b.z_matrix(),
            &z_from_family,
            an.settings.tolerances.coherence,
        ),
        util::rank_equals(
            "profit:z_rank",
            &b.z_matrix(),
            if zero_profit { m - 1 } else { m },
            rank_tol,
        )
        .with_note(format!("profit {profit:.3e}")),
        util::rank_equals(
            "profit:unit_family_rank",
            &b.family(&ones),
            if on_unit_singularity { m - 1 } else { m },
            rank_tol,
        ),
        CheckReport::flag(
            "profit:z_map_regularity",
            "the decision map x ↦ x/F is invertible exactly away from zero profit",
            rep.is_ok() != zero_profit,
            match &rep {
                Ok(_) => "map invertible".to_string(),
                Err(e) => e.to_string(),
            },
        ),
    ])
}

fn closed_form_checks(an: &Analysis, cfg: &CdConfig) -> Result<Vec<CheckReport>> {
    let m = an.model.m();
    let a = &an.solution.a;
    let oracle = closed_form_jacobian(cfg, &a[..m], a[m]);
    let got = block(an.x_jac(), 0..m, 0..m + 1);
    let scale = linalg::max_abs(&oracle).max(1.0);
    let unconstrained = an.context.omega_unconstrained()?;
    let spectral = csm::spectral_relation(&unconstrained, &an.context.blocks.f.hxx, an.x_jac())?;
    let b = ProfitBlocks::from_analysis(an, cfg);
    let g = cfg.returns_to_scale();
    let fp_closed = cfg.optimal_cd_output(&b.w, b.p) / b.p * g / (1.0 - g);
    Ok(vec![
        CheckReport::compare(
            "profit:closed_form_jacobian",
            "Jacobian matches the Cobb-Douglas closed forms",
            linalg::max_abs(&(got - oracle)) / scale,
            1e-6,
        ),
        util::scalar(
            "profit:closed_form_supply",
            "∂F/∂p = (F_CD/p) γ/(1−γ)",
            b.f_p,
            fp_closed,
            1e-6 * fp_closed.abs().max(1.0),
        ),
        CheckReport::compare(
            "profit:spectral_relation",
            "unconstrained CSM eigenvalues follow from the Hessian spectrum",
            spectral.max_relative_residual(),
            an.settings.tolerances.coherence,
        ),
    ])
}
