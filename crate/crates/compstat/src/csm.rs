//! Comparative-statics matrices and the transformations among them.
//!
//! Notation: `X = ∂x/∂a` (M×N), `Λ = ∂λ/∂a` (K×N), `T` the isovector rows
//! (A×N) and `X_; = X Tᵀ` the compensated decision derivatives.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::IsovectorSet;
use crate::linalg;
use crate::model::{KktBlocks, ProblemModel, VecMap};
use crate::sensitivity::SensitivityBundle;
use crate::solver::SolutionPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recipe {
    /// Mixed-partial form `Σ_i x_{i;β} L_{,i;α}`.
    Omega,
    /// Quadratic form `−X_;ᵀ L_xx X_;`.
    OmegaQuadratic,
    /// Unconstrained log-objective form over ordinary partials.
    OmegaLogUnconstrained,
    /// Unconstrained form `Σ_i x_{i,ν} f_{,iμ}`.
    OmegaUnconstrained,
    /// Log-objective form with compensated derivatives.
    OmegaLog,
    /// Primal-dual matrix, semidefinite only on the constraint tangent space.
    Silberberg,
    /// Projection-based matrix of maximal rank.
    Universal,
    Transformed,
}

impl Recipe {
    pub const ALL: [Recipe; 7] = [
        Recipe::Omega,
        Recipe::OmegaQuadratic,
        Recipe::OmegaLogUnconstrained,
        Recipe::OmegaUnconstrained,
        Recipe::OmegaLog,
        Recipe::Silberberg,
        Recipe::Universal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Recipe::Omega => "omega",
            Recipe::OmegaQuadratic => "omega_quadratic",
            Recipe::OmegaLogUnconstrained => "omega_log_unconstrained",
            Recipe::OmegaUnconstrained => "omega_unconstrained",
            Recipe::OmegaLog => "omega_log",
            Recipe::Silberberg => "silberberg",
            Recipe::Universal => "universal",
            Recipe::Transformed => "transformed",
        }
    }
}

impl std::str::FromStr for Recipe {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Recipe::ALL
            .iter()
            .chain(std::iter::once(&Recipe::Transformed))
            .find(|r| r.name() == s)
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown CSM recipe '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignConvention {
    PositiveSemidefiniteExpected,
    NegativeSemidefiniteExpected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsmConfig {
    /// Relative eigenvalue threshold for rank estimates.
    pub rank_tol: f64,
    /// Symmetry tolerance relative to the largest entry.
    pub symmetry_tol: f64,
}

impl Default for CsmConfig {
    fn default() -> Self {
        CsmConfig {
            rank_tol: 1e-7,
            symmetry_tol: 1e-8,
        }
    }
}

/// How a congruence-type map `T Ω Tᵀ` relates the two matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    /// Square nonsingular `T`: same inertia and rank.
    Congruence,
    /// Square singular `T`.
    Singular,
    /// Fewer rows than columns: the matrix of a contracted operator set.
    Contraction,
    /// More rows than columns: redundant operators.
    Expansion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsmResult {
    pub recipe: Recipe,
    pub sign_convention: SignConvention,
    pub labels: Vec<String>,
    pub matrix: DMatrix<f64>,
    /// Eigenvalues of the symmetric part, ascending.
    pub eigenvalues: Vec<f64>,
    /// Max entry of `|M − Mᵀ|` before symmetrisation.
    pub symmetry_residual: f64,
    pub rank_estimate: usize,
    pub rank_tol: f64,
    pub symmetry_tol: f64,
    pub transform_kind: Option<TransformKind>,
    pub note: Option<String>,
}

impl CsmResult {
    pub fn new(
        matrix: DMatrix<f64>,
        recipe: Recipe,
        sign_convention: SignConvention,
        labels: Vec<String>,
        cfg: &CsmConfig,
    ) -> Self {
        let eig = linalg::sym_eigenvalues(&matrix);
        CsmResult {
            recipe,
            sign_convention,
            labels,
            symmetry_residual: linalg::symmetry_residual(&matrix),
            rank_estimate: linalg::rank_from_eigenvalues(&eig, cfg.rank_tol),
            eigenvalues: eig.iter().copied().collect(),
            matrix,
            rank_tol: cfg.rank_tol,
            symmetry_tol: cfg.symmetry_tol,
            transform_kind: None,
            note: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Largest absolute entry, used as the scale for relative tolerances.
    pub fn scale(&self) -> f64 {
        linalg::max_abs(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetry_residual <= self.symmetry_tol * self.scale().max(1.0)
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

/// Semidefiniteness of `S` restricted to the parameter tangent space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedVerdict {
    pub tangent_dim: usize,
    pub restricted_eigenvalues: Vec<f64>,
    pub pass: bool,
}

/// Derivative blocks and Jacobians at one solution, shared by all recipes.
#[derive(Debug, Clone)]
pub struct CsmContext {
    pub blocks: KktBlocks,
    pub lambda: Vec<f64>,
    pub x_jac: DMatrix<f64>,
    pub lambda_jac: DMatrix<f64>,
    pub parameter_names: Vec<String>,
    pub cfg: CsmConfig,
}

impl CsmContext {
    pub fn new(model: &ProblemModel, sol: &SolutionPoint, sens: &SensitivityBundle, cfg: CsmConfig) -> Result<Self> {
        Ok(CsmContext {
            blocks: model.derivs(&sol.x, &sol.a)?,
            lambda: sol.lambda.clone(),
            x_jac: sens.x_jac.clone(),
            lambda_jac: sens.lambda_jac.clone(),
            parameter_names: model.parameter_names.clone(),
            cfg,
        })
    }

    fn check_iso(&self, iso: &IsovectorSet) -> Result<()> {
        if iso.n() != self.x_jac.ncols() {
            return Err(Error::dim("isovector length", self.x_jac.ncols(), iso.n()));
        }
        Ok(())
    }

    fn unconstrained(&self, what: &str) -> Result<()> {
        if self.blocks.k() > 0 {
            return Err(Error::Precondition(format!("{what} requires an unconstrained problem")));
        }
        Ok(())
    }

    fn positive_objective(&self) -> Result<f64> {
        let f = self.blocks.f.value;
        if f <= 0.0 {
            return Err(Error::Domain(format!(
                "log-objective recipe needs f > 0 (f = {f:.6e}); add a constant to the objective, which leaves the decisions unchanged"
            )));
        }
        Ok(f)
    }

    /// `X_; = X Tᵀ`.
    pub fn x_semicolon(&self, iso: &IsovectorSet) -> Result<DMatrix<f64>> {
        self.check_iso(iso)?;
        Ok(&self.x_jac * iso.vectors.transpose())
    }

    fn psd(&self, m: DMatrix<f64>, recipe: Recipe, labels: Vec<String>) -> CsmResult {
        CsmResult::new(m, recipe, SignConvention::PositiveSemidefiniteExpected, labels, &self.cfg)
    }

    pub fn omega(&self, iso: &IsovectorSet) -> Result<CsmResult> {
        let xs = self.x_semicolon(iso)?;
        let lt = self.blocks.lxa(&self.lambda) * iso.vectors.transpose();
        Ok(self.psd(lt.transpose() * xs, Recipe::Omega, iso.labels.clone()))
    }

    pub fn omega_quadratic(&self, iso: &IsovectorSet) -> Result<CsmResult> {
        let xs = self.x_semicolon(iso)?;
        let m = -(xs.transpose() * self.blocks.lxx(&self.lambda) * &xs);
        Ok(self.psd(m, Recipe::OmegaQuadratic, iso.labels.clone()))
    }

    pub fn omega_unconstrained(&self) -> Result<CsmResult> {
        self.unconstrained("the unconstrained recipe")?;
        let m = self.blocks.f.hxa.transpose() * &self.x_jac;
        Ok(self.psd(m, Recipe::OmegaUnconstrained, self.parameter_names.clone()))
    }

    /// `f Σ_i x_{i,ν} (log f)_{,iμ} = f_xaᵀX − f_a (f_xᵀ X)/f`.
    pub fn omega_log_unconstrained(&self) -> Result<CsmResult> {
        self.unconstrained("the unconstrained log recipe")?;
        let f = self.positive_objective()?;
        let fx_x = self.blocks.f.gx.transpose() * &self.x_jac;
        let m = self.blocks.f.hxa.transpose() * &self.x_jac - (&self.blocks.f.ga * fx_x) / f;
        Ok(self.psd(m, Recipe::OmegaLogUnconstrained, self.parameter_names.clone()))
    }

    /// Log-objective form. The multipliers of the log problem are `λ_k/f`,
    /// so after multiplying through by `f` the constraint terms carry `λ_k`.
    pub fn omega_log(&self, iso: &IsovectorSet) -> Result<CsmResult> {
        let f = self.positive_objective()?;
        let xs = self.x_semicolon(iso)?;
        let b = &self.blocks;
        let mut coef = b.f.hxa.clone() - (&b.f.gx * b.f.ga.transpose()) / f;
        for (g, l) in b.g.iter().zip(&self.lambda) {
            coef += &g.hxa * *l;
        }
        let lt = coef * iso.vectors.transpose();
        Ok(self.psd(lt.transpose() * xs, Recipe::OmegaLog, iso.labels.clone()))
    }

    /// `S = L_xaᵀ X + g_aᵀ Λ` and its restriction to `{q : g_a q = 0}`.
    pub fn silberberg(&self) -> Result<(CsmResult, ConstrainedVerdict)> {
        let b = &self.blocks;
        let ga = b.ga();
        let s = b.lxa(&self.lambda).transpose() * &self.x_jac + ga.transpose() * &self.lambda_jac;
        let res = self.psd(s.clone(), Recipe::Silberberg, self.parameter_names.clone())
            .with_note("semidefinite only on the constraint tangent space; see constrained verdict");
        let (z, _) = linalg::nullspace(&ga, 1e-10);
        let restricted = if z.ncols() == 0 {
            DVector::zeros(0)
        } else {
            linalg::sym_eigenvalues(&(z.transpose() * &s * &z))
        };
        let scale = linalg::max_abs_vec(&restricted).max(linalg::max_abs(&s)).max(f64::MIN_POSITIVE);
        let pass = restricted.iter().all(|v| *v >= -1e-8 * scale.max(1.0));
        Ok((
            res,
            ConstrainedVerdict {
                tangent_dim: z.ncols(),
                restricted_eigenvalues: restricted.iter().copied().collect(),
                pass,
            },
        ))
    }

    /// `U = Xᵀ (I − Q)(L_xa − L_xx Gᵀ 𝒢⁻¹ g_a)` with `Q = Gᵀ 𝒢⁻¹ G`, `𝒢 = G Gᵀ`.
    pub fn universal(&self) -> Result<CsmResult> {
        let b = &self.blocks;
        let (m, k) = (b.m(), b.k());
        let lxa = b.lxa(&self.lambda);
        let u = if k == 0 {
            self.x_jac.transpose() * lxa
        } else {
            let g = b.gx();
            let gram = &g * g.transpose();
            if linalg::inverse_condition(&gram) < 1e-13 {
                return Err(Error::ConstraintQualification(
                    "Gram matrix of constraint gradients is singular".into(),
                ));
            }
            let gram_inv = gram
                .try_inverse()
                .ok_or_else(|| Error::ConstraintQualification("Gram matrix not invertible".into()))?;
            let q = g.transpose() * &gram_inv * &g;
            let p = DMatrix::identity(m, m) - q;
            let inner = lxa - b.lxx(&self.lambda) * g.transpose() * gram_inv * b.ga();
            self.x_jac.transpose() * p * inner
        };
        Ok(self.psd(u, Recipe::Universal, self.parameter_names.clone()))
    }

    /// Builds one recipe; A×A recipes need an isovector set.
    pub fn build(&self, recipe: Recipe, iso: &IsovectorSet) -> Result<CsmResult> {
        match recipe {
            Recipe::Omega => self.omega(iso),
            Recipe::OmegaQuadratic => self.omega_quadratic(iso),
            Recipe::OmegaLogUnconstrained => self.omega_log_unconstrained(),
            Recipe::OmegaUnconstrained => self.omega_unconstrained(),
            Recipe::OmegaLog => self.omega_log(iso),
            Recipe::Silberberg => self.silberberg().map(|(s, _)| s),
            Recipe::Universal => self.universal(),
            Recipe::Transformed => Err(Error::Config(
                "the transformed recipe is produced by transform_csm or reparameterize_csm".into(),
            )),
        }
    }
}

pub fn build_omega(model: &ProblemModel, sol: &SolutionPoint, sens: &SensitivityBundle, iso: &IsovectorSet) -> Result<CsmResult> {
    CsmContext::new(model, sol, sens, CsmConfig::default())?.omega(iso)
}

pub fn build_omega_quadratic(
    model: &ProblemModel,
    sol: &SolutionPoint,
    sens: &SensitivityBundle,
    iso: &IsovectorSet,
) -> Result<CsmResult> {
    CsmContext::new(model, sol, sens, CsmConfig::default())?.omega_quadratic(iso)
}

pub fn build_omega_unconstrained(model: &ProblemModel, sol: &SolutionPoint, sens: &SensitivityBundle) -> Result<CsmResult> {
    CsmContext::new(model, sol, sens, CsmConfig::default())?.omega_unconstrained()
}

pub fn build_omega_log_unconstrained(model: &ProblemModel, sol: &SolutionPoint, sens: &SensitivityBundle) -> Result<CsmResult> {
    CsmContext::new(model, sol, sens, CsmConfig::default())?.omega_log_unconstrained()
}

pub fn build_omega_log(model: &ProblemModel, sol: &SolutionPoint, sens: &SensitivityBundle, iso: &IsovectorSet) -> Result<CsmResult> {
    CsmContext::new(model, sol, sens, CsmConfig::default())?.omega_log(iso)
}

pub fn build_silberberg(
    model: &ProblemModel,
    sol: &SolutionPoint,
    sens: &SensitivityBundle,
) -> Result<(CsmResult, ConstrainedVerdict)> {
    CsmContext::new(model, sol, sens, CsmConfig::default())?.silberberg()
}

pub fn build_universal(model: &ProblemModel, sol: &SolutionPoint, sens: &SensitivityBundle) -> Result<CsmResult> {
    CsmContext::new(model, sol, sens, CsmConfig::default())?.universal()
}

/// `T Ω Tᵀ` for a B×A matrix `T`.
pub fn transform_csm(csm: &CsmResult, t: &DMatrix<f64>, labels: Option<Vec<String>>) -> Result<CsmResult> {
    if t.ncols() != csm.dim() {
        return Err(Error::dim("transformation columns", csm.dim(), t.ncols()));
    }
    let out = t * &csm.matrix * t.transpose();
    let kind = if t.nrows() == t.ncols() {
        if linalg::numerical_rank(t, 1e-12) == t.nrows() {
            TransformKind::Congruence
        } else {
            TransformKind::Singular
        }
    } else if t.nrows() < t.ncols() {
        TransformKind::Contraction
    } else {
        TransformKind::Expansion
    };
    let labels = labels
        .filter(|l| l.len() == t.nrows())
        .unwrap_or_else(|| (1..=t.nrows()).map(|i| format!("e{i}")).collect());
    let cfg = CsmConfig {
        rank_tol: csm.rank_tol,
        symmetry_tol: csm.symmetry_tol,
    };
    let mut res = CsmResult::new(out, Recipe::Transformed, csm.sign_convention, labels, &cfg);
    res.transform_kind = Some(kind);
    res.note = Some(format!("transformed from {}", csm.recipe.name()));
    Ok(res)
}

/// Central-difference Jacobian of a vector map.
pub fn map_jacobian(map: &VecMap, z: &[f64]) -> Result<DMatrix<f64>> {
    let base = map(z);
    let rows = base.len();
    let mut jac = DMatrix::zeros(rows, z.len());
    for c in 0..z.len() {
        let h = f64::EPSILON.cbrt() * z[c].abs().max(1.0);
        let mut up = z.to_vec();
        let mut dn = z.to_vec();
        up[c] += h;
        dn[c] -= h;
        let (fu, fd) = (map(&up), map(&dn));
        for r in 0..rows {
            let v = (fu[r] - fd[r]) / (2.0 * h);
            if !v.is_finite() {
                return Err(Error::Transformation(format!("non-finite Jacobian entry ({r}, {c})")));
            }
            jac[(r, c)] = v;
        }
    }
    Ok(jac)
}

fn invert_map_jacobian(j: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if !j.is_square() {
        return Err(Error::Transformation(format!("{what} map must be square")));
    }
    let s = linalg::singular_values(j);
    let (hi, lo) = (s.first().copied().unwrap_or(0.0), s.last().copied().unwrap_or(0.0));
    if hi == 0.0 || lo <= 1e-8 * hi {
        return Err(Error::Transformation(format!(
            "{what} map has a vanishing Jacobian determinant (σ_min/σ_max = {:.2e})",
            if hi == 0.0 { 0.0 } else { lo / hi }
        )));
    }
    j.clone()
        .try_inverse()
        .ok_or_else(|| Error::Transformation(format!("{what} Jacobian not invertible")))
}

/// Result of a change of decision and parameter coordinates.
#[derive(Debug, Clone)]
pub struct Reparameterized {
    pub csm: CsmResult,
    /// `∂x̃/∂ã` in the new coordinates.
    pub x_jac: DMatrix<f64>,
    /// `∂x̃/∂x`.
    pub decision_jacobian: DMatrix<f64>,
    /// `∂ã/∂a`.
    pub parameter_jacobian: DMatrix<f64>,
}

/// Rewrites `Ω = Σ C^{αβ}_{iμ} x_{i,μ}` in new coordinates `x̃ = ξ̃(x)`,
/// `ã = α̃(a)` (maps given old → new). The coefficient tensor is read as
/// `C^{αβ}_{iμ} = L_{,i;α} t^β_μ`.
pub fn reparameterize_csm(
    model: &ProblemModel,
    sol: &SolutionPoint,
    sens: &SensitivityBundle,
    iso: &IsovectorSet,
    decision_map: Option<&VecMap>,
    parameter_map: Option<&VecMap>,
) -> Result<Reparameterized> {
    let ctx = CsmContext::new(model, sol, sens, CsmConfig::default())?;
    ctx.check_iso(iso)?;
    let (m, n) = (model.m(), model.n());
    let jx = match decision_map {
        Some(f) => map_jacobian(f, &sol.x)?,
        None => DMatrix::identity(m, m),
    };
    let ja = match parameter_map {
        Some(f) => map_jacobian(f, &sol.a)?,
        None => DMatrix::identity(n, n),
    };
    let jx_inv = invert_map_jacobian(&jx, "decision")?;
    let ja_inv = invert_map_jacobian(&ja, "parameter")?;
    // x̃_{j,ν} = Σ (∂x̃_j/∂x_i) x_{i,μ} (∂a_μ/∂ã_ν)
    let x_new = &jx * &sens.x_jac * &ja_inv;
    let l_semi = ctx.blocks.lxa(&ctx.lambda) * iso.vectors.transpose(); // M×A
    let a_dim = iso.a();
    let mut out = DMatrix::zeros(a_dim, a_dim);
    // C̃^{αβ}_{jν} = Σ_{iμ} (∂x_i/∂x̃_j) C^{αβ}_{iμ} (∂ã_ν/∂a_μ)
    let left = jx_inv.transpose() * &l_semi; // (j, α)
    let right = &ja * iso.vectors.transpose(); // (ν, β)
    for alpha in 0..a_dim {
        for beta in 0..a_dim {
            let c_tilde = left.column(alpha) * right.column(beta).transpose(); // M×N
            out[(alpha, beta)] = c_tilde.component_mul(&x_new).sum();
        }
    }
    let csm = ctx
        .psd(out, Recipe::Transformed, iso.labels.clone())
        .with_note("coefficient tensor read as C = L_{,i;α} t^β_μ and carried through both coordinate Jacobians");
    Ok(Reparameterized {
        csm,
        x_jac: x_new,
        decision_jacobian: jx,
        parameter_jacobian: ja,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralRelation {
    pub hessian_eigenvalues: Vec<f64>,
    /// Columns are the eigenvectors `b^I`.
    pub hessian_eigenvectors: DMatrix<f64>,
    pub csm_eigenvalues: Vec<f64>,
    pub csm_eigenvectors: DMatrix<f64>,
    /// Columns are `q^γ = X_; z^γ`.
    pub mixing_vectors: DMatrix<f64>,
    pub reconstruction_residuals: Vec<f64>,
    pub spectral_scale: f64,
}

impl SpectralRelation {
    pub fn max_relative_residual(&self) -> f64 {
        let worst = self.reconstruction_residuals.iter().fold(0.0_f64, |m, v| m.max(*v));
        worst / self.spectral_scale.max(f64::MIN_POSITIVE)
    }
}

/// Checks `μ^γ = −Σ_I (q^γ · b^I)² m^I` for every eigenpair of the CSM.
pub fn spectral_relation(csm: &CsmResult, hessian: &DMatrix<f64>, x_semicolon: &DMatrix<f64>) -> Result<SpectralRelation> {
    if x_semicolon.ncols() != csm.dim() {
        return Err(Error::dim("compensated Jacobian columns", csm.dim(), x_semicolon.ncols()));
    }
    if hessian.nrows() != x_semicolon.nrows() {
        return Err(Error::dim("Hessian order", x_semicolon.nrows(), hessian.nrows()));
    }
    let (mu, z) = linalg::sym_eigen(&csm.matrix);
    let (mh, b) = linalg::sym_eigen(hessian);
    let q = x_semicolon * &z;
    let mut residuals = Vec::with_capacity(mu.len());
    let mut qmax = 0.0_f64;
    for g in 0..mu.len() {
        let qg = q.column(g);
        qmax = qmax.max(qg.norm_squared());
        let mut s = 0.0;
        for i in 0..mh.len() {
            let c = qg.dot(&b.column(i));
            s += c * c * mh[i];
        }
        residuals.push((mu[g] + s).abs());
    }
    let scale = linalg::max_abs_vec(&mu).max(linalg::max_abs_vec(&mh) * qmax);
    Ok(SpectralRelation {
        hessian_eigenvalues: mh.iter().copied().collect(),
        hessian_eigenvectors: b,
        csm_eigenvalues: mu.iter().copied().collect(),
        csm_eigenvectors: z,
        mixing_vectors: q,
        reconstruction_residuals: residuals,
        spectral_scale: scale,
    })
}
