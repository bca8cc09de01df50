//! Equality-constrained problems `max_x f(x, a)` subject to `g^k(x, a) = 0`.
//!
//! Evaluators come in two flavours. [`Exact`] wraps a [`Smooth`] function
//! written generically over [`Scalar`], which yields exact first and second
//! derivatives through jets. [`FnEval`] wraps a plain closure, whose
//! derivatives are taken by central finite differences.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::jet::{Jet, Scalar};

/// A scalar function of `(x, a)` written once for every [`Scalar`] type.
pub trait Smooth: Send + Sync {
    fn eval<S: Scalar>(&self, x: &[S], a: &[S]) -> S;
}

/// Object-safe evaluator stored inside a model.
pub trait Evaluator: Send + Sync {
    fn value(&self, x: &[f64], a: &[f64]) -> f64;

    /// Exact value, gradient and Hessian over `z = (x, a)` when available.
    fn jet(&self, _x: &[f64], _a: &[f64]) -> Option<Jet> {
        None
    }
}

/// Adapter giving a [`Smooth`] function exact derivatives.
pub struct Exact<T>(pub T);

impl<T: Smooth> Evaluator for Exact<T> {
    fn value(&self, x: &[f64], a: &[f64]) -> f64 {
        self.0.eval(x, a)
    }

    fn jet(&self, x: &[f64], a: &[f64]) -> Option<Jet> {
        let (xs, as_) = Jet::seed(x, a);
        let mut j = self.0.eval(&xs, &as_);
        if j.is_constant() {
            let n = x.len() + a.len();
            j.g = vec![0.0; n];
            j.h = vec![0.0; n * n];
        }
        Some(j)
    }
}

/// Adapter for value-only closures; derivatives come from finite differences.
pub struct FnEval<F>(pub F);

impl<F> Evaluator for FnEval<F>
where
    F: Fn(&[f64], &[f64]) -> f64 + Send + Sync,
{
    fn value(&self, x: &[f64], a: &[f64]) -> f64 {
        (self.0)(x, a)
    }
}

pub type Func = Arc<dyn Evaluator>;
pub type VecMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type ScalarMap = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// Closed-form `a -> (x(a), λ(a))` with multipliers in the model's own sign convention.
pub type SolutionFn = Arc<dyn Fn(&[f64]) -> Result<(Vec<f64>, Vec<f64>)> + Send + Sync>;
/// Closed-form `a -> (∂x/∂a, ∂λ/∂a)`.
pub type JacobianFn = Arc<dyn Fn(&[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> + Send + Sync>;

pub fn exact<T: Smooth + 'static>(f: T) -> Func {
    Arc::new(Exact(f))
}

pub fn closure<F>(f: F) -> Func
where
    F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
{
    Arc::new(FnEval(f))
}

/// Differential operator `J = Σ X_i(x) ∂/∂x_i + Σ A_μ(a) ∂/∂a_μ` under which
/// the decision functions are invariant.
#[derive(Clone)]
pub struct InvarianceGenerator {
    pub name: String,
    pub x_map: VecMap,
    pub a_map: VecMap,
    /// `J f = F(f)`.
    pub response_f: Option<ScalarMap>,
    /// `J g^k = G^k(g^k)` with `G^k(0) = 0`.
    pub response_g: Option<Vec<ScalarMap>>,
}

impl fmt::Debug for InvarianceGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InvarianceGenerator")
            .field("name", &self.name)
            .finish_non_exhaustive()
    }
}

impl InvarianceGenerator {
    /// Generator with `X = 0` and `A_μ = a_μ` on the listed parameter indices.
    pub fn euler(name: impl Into<String>, indices: Vec<usize>, m: usize) -> Self {
        InvarianceGenerator {
            name: name.into(),
            x_map: Arc::new(move |_x: &[f64]| vec![0.0; m]),
            a_map: Arc::new(move |a: &[f64]| {
                let mut out = vec![0.0; a.len()];
                for &i in &indices {
                    out[i] = a[i];
                }
                out
            }),
            response_f: None,
            response_g: None,
        }
    }

    pub fn with_responses(mut self, f: Option<ScalarMap>, g: Option<Vec<ScalarMap>>) -> Self {
        self.response_f = f;
        self.response_g = g;
        self
    }
}

/// Constraints of the separable form `κ_l − k^l(x, p) = 0` with `κ` absent
/// from the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableForm {
    /// Parameter index of `κ_l` for each constraint `l`.
    pub kappa: Vec<usize>,
    /// Parameter indices of the prices `p`.
    pub prices: Vec<usize>,
}

/// Contiguous named block of parameters, used for `--at group=v1,v2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGroup {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

/// Finite-difference step settings (relative to `max(1, |z|)`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdConfig {
    pub grad_rel: f64,
    pub hess_rel: f64,
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig {
            grad_rel: f64::EPSILON.cbrt(),
            hess_rel: f64::EPSILON.powf(0.25),
        }
    }
}

/// Which function of a model a derivative refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Objective,
    Constraint(usize),
    Relation(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wrt {
    X,
    A,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeSource {
    Analytic,
    FiniteDifference,
}

/// Gradient together with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub values: Vec<f64>,
    pub source: DerivativeSource,
    /// Max relative gap to central differences, when analytic values were returned.
    pub fd_residual: Option<f64>,
}

/// Value, gradient and the `xx`/`xa` Hessian blocks of one function.
#[derive(Debug, Clone)]
pub struct FuncDerivs {
    pub value: f64,
    pub gx: DVector<f64>,
    pub ga: DVector<f64>,
    pub hxx: DMatrix<f64>,
    pub hxa: DMatrix<f64>,
}

/// All derivative blocks needed by the first- and second-order analysis.
#[derive(Debug, Clone)]
pub struct KktBlocks {
    pub f: FuncDerivs,
    pub g: Vec<FuncDerivs>,
    pub source: DerivativeSource,
}

impl KktBlocks {
    pub fn m(&self) -> usize {
        self.f.gx.len()
    }
    pub fn n(&self) -> usize {
        self.f.ga.len()
    }
    pub fn k(&self) -> usize {
        self.g.len()
    }

    /// Constraint Jacobian in x, K×M.
    pub fn gx(&self) -> DMatrix<f64> {
        let (k, m) = (self.k(), self.m());
        DMatrix::from_fn(k, m, |r, c| self.g[r].gx[c])
    }

    /// Constraint Jacobian in a, K×N.
    pub fn ga(&self) -> DMatrix<f64> {
        let (k, n) = (self.k(), self.n());
        DMatrix::from_fn(k, n, |r, c| self.g[r].ga[c])
    }

    pub fn g_values(&self) -> DVector<f64> {
        DVector::from_iterator(self.k(), self.g.iter().map(|d| d.value))
    }

    pub fn lx(&self, lambda: &[f64]) -> DVector<f64> {
        let mut out = self.f.gx.clone();
        for (d, l) in self.g.iter().zip(lambda) {
            out += &d.gx * *l;
        }
        out
    }

    pub fn la(&self, lambda: &[f64]) -> DVector<f64> {
        let mut out = self.f.ga.clone();
        for (d, l) in self.g.iter().zip(lambda) {
            out += &d.ga * *l;
        }
        out
    }

    pub fn lxx(&self, lambda: &[f64]) -> DMatrix<f64> {
        let mut out = self.f.hxx.clone();
        for (d, l) in self.g.iter().zip(lambda) {
            out += &d.hxx * *l;
        }
        out
    }

    pub fn lxa(&self, lambda: &[f64]) -> DMatrix<f64> {
        let mut out = self.f.hxa.clone();
        for (d, l) in self.g.iter().zip(lambda) {
            out += &d.hxa * *l;
        }
        out
    }
}

/// An optimization problem with its labels and optional closed forms.
#[derive(Clone)]
pub struct ProblemModel {
    pub name: String,
    pub decision_names: Vec<String>,
    pub parameter_names: Vec<String>,
    pub groups: Vec<ParamGroup>,
    pub objective: Func,
    pub constraints: Vec<Func>,
    /// Identities among the parameters alone (`r(a) = 0`), honoured by isovectors.
    pub parameter_relations: Vec<Func>,
    pub analytic_solution: Option<SolutionFn>,
    pub analytic_sensitivity: Option<JacobianFn>,
    pub invariance_generators: Vec<InvarianceGenerator>,
    pub separable: Option<SeparableForm>,
    pub fd: FdConfig,
}

impl fmt::Debug for ProblemModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemModel")
            .field("name", &self.name)
            .field("M", &self.m())
            .field("N", &self.n())
            .field("K", &self.k())
            .finish_non_exhaustive()
    }
}

impl ProblemModel {
    /// Model with default labels `x1..`, `a1..` and no optional data.
    pub fn new(name: impl Into<String>, m: usize, n: usize, objective: Func, constraints: Vec<Func>) -> Self {
        ProblemModel {
            name: name.into(),
            decision_names: (1..=m).map(|i| format!("x{i}")).collect(),
            parameter_names: (1..=n).map(|i| format!("a{i}")).collect(),
            groups: Vec::new(),
            objective,
            constraints,
            parameter_relations: Vec::new(),
            analytic_solution: None,
            analytic_sensitivity: None,
            invariance_generators: Vec::new(),
            separable: None,
            fd: FdConfig::default(),
        }
    }

    pub fn with_decision_names(mut self, names: Vec<String>) -> Self {
        self.decision_names = names;
        self
    }

    /// Sets parameter labels from named groups, e.g. `[("p", 2), ("m", 1)]`.
    /// Groups of length one are labelled by their name alone.
    pub fn with_groups(mut self, groups: &[(&str, usize)]) -> Self {
        let mut names = Vec::new();
        let mut out = Vec::new();
        let mut start = 0;
        for &(g, len) in groups {
            if len == 1 {
                names.push(g.to_string());
            } else {
                names.extend((1..=len).map(|i| format!("{g}{i}")));
            }
            out.push(ParamGroup {
                name: g.to_string(),
                start,
                len,
            });
            start += len;
        }
        self.parameter_names = names;
        self.groups = out;
        self
    }

    pub fn m(&self) -> usize {
        self.decision_names.len()
    }
    pub fn n(&self) -> usize {
        self.parameter_names.len()
    }
    pub fn k(&self) -> usize {
        self.constraints.len()
    }

    pub fn group(&self, name: &str) -> Option<&ParamGroup> {
        self.groups.iter().find(|g| g.name == name)
    }

    /// Copy of the model with closed forms removed, so every quantity is
    /// obtained numerically.
    pub fn without_closed_forms(&self) -> Self {
        let mut m = self.clone();
        m.analytic_solution = None;
        m.analytic_sensitivity = None;
        m
    }

    fn check_dims(&self, x: &[f64], a: &[f64]) -> Result<()> {
        if x.len() != self.m() {
            return Err(Error::dim("decision vector", self.m(), x.len()));
        }
        if a.len() != self.n() {
            return Err(Error::dim("parameter vector", self.n(), a.len()));
        }
        Ok(())
    }

    pub fn function(&self, t: Target) -> Result<&Func> {
        match t {
            Target::Objective => Ok(&self.objective),
            Target::Constraint(k) => self
                .constraints
                .get(k)
                .ok_or_else(|| Error::Config(format!("constraint index {k} out of range"))),
            Target::Relation(r) => self
                .parameter_relations
                .get(r)
                .ok_or_else(|| Error::Config(format!("relation index {r} out of range"))),
        }
    }

    pub fn target_label(t: Target) -> String {
        match t {
            Target::Objective => "objective".into(),
            Target::Constraint(k) => format!("constraint {}", k + 1),
            Target::Relation(r) => format!("parameter relation {}", r + 1),
        }
    }

    /// Objective value with a finiteness check.
    pub fn objective_value(&self, x: &[f64], a: &[f64]) -> Result<f64> {
        self.check_dims(x, a)?;
        finite(self.objective.value(x, a), "objective", "the evaluation point")
    }

    pub fn constraint_values(&self, x: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(x, a)?;
        self.constraints
            .iter()
            .enumerate()
            .map(|(k, g)| finite(g.value(x, a), &format!("constraint {}", k + 1), "the evaluation point"))
            .collect()
    }

    /// `L = f + Σ λ_k g^k`.
    pub fn evaluate_lagrangian(&self, x: &[f64], a: &[f64], lambda: &[f64]) -> Result<f64> {
        self.check_dims(x, a)?;
        if lambda.len() != self.k() {
            return Err(Error::Config(format!(
                "multiplier vector has length {}, model has {} constraints",
                lambda.len(),
                self.k()
            )));
        }
        let mut l = self.objective_value(x, a)?;
        for (g, lam) in self.constraint_values(x, a)?.iter().zip(lambda) {
            l += lam * g;
        }
        Ok(l)
    }

    /// Gradient of one function in `x` or `a`. Analytic values are preferred
    /// and cross-checked against central differences.
    pub fn numeric_gradient(&self, which: Target, wrt: Wrt, x: &[f64], a: &[f64]) -> Result<GradientReport> {
        self.check_dims(x, a)?;
        let func = self.function(which)?;
        let label = Self::target_label(which);
        let fd = fd_gradient(func.as_ref(), x, a, wrt, self.fd.grad_rel, &label)?;
        match func.jet(x, a) {
            Some(j) => {
                let m = x.len();
                let range = match wrt {
                    Wrt::X => 0..m,
                    Wrt::A => m..m + a.len(),
                };
                let values: Vec<f64> = range.map(|i| j.grad(i)).collect();
                let scale = values.iter().chain(&fd).fold(1.0_f64, |s, v| s.max(v.abs()));
                let gap = values
                    .iter()
                    .zip(&fd)
                    .fold(0.0_f64, |s, (u, v)| s.max((u - v).abs()));
                Ok(GradientReport {
                    values,
                    source: DerivativeSource::Analytic,
                    fd_residual: Some(gap / scale),
                })
            }
            None => Ok(GradientReport {
                values: fd,
                source: DerivativeSource::FiniteDifference,
                fd_residual: None,
            }),
        }
    }

    /// Derivatives of one function: analytic when available, else finite differences.
    pub fn func_derivs(&self, which: Target, x: &[f64], a: &[f64]) -> Result<(FuncDerivs, DerivativeSource)> {
        self.check_dims(x, a)?;
        let func = self.function(which)?;
        let label = Self::target_label(which);
        match func.jet(x, a) {
            Some(j) => Ok((from_jet(&j, x.len(), a.len(), &label)?, DerivativeSource::Analytic)),
            None => Ok((
                fd_derivs(func.as_ref(), x, a, self.fd, &label)?,
                DerivativeSource::FiniteDifference,
            )),
        }
    }

    /// All derivative blocks of the objective and constraints at `(x, a)`.
    pub fn derivs(&self, x: &[f64], a: &[f64]) -> Result<KktBlocks> {
        let (f, mut source) = self.func_derivs(Target::Objective, x, a)?;
        let mut g = Vec::with_capacity(self.k());
        for k in 0..self.k() {
            let (d, s) = self.func_derivs(Target::Constraint(k), x, a)?;
            if s == DerivativeSource::FiniteDifference {
                source = s;
            }
            g.push(d);
        }
        Ok(KktBlocks { f, g, source })
    }

    /// Model with objective `s·f` and the scale `s` appended as the last parameter.
    pub fn augment_with_scale(&self) -> ProblemModel {
        let n = self.n();
        let m = self.m();
        let mut out = self.clone();
        out.name = format!("{}+scale", self.name);
        let s_name = if self.parameter_names.iter().any(|p| p == "s") {
            format!("s{}", n + 1)
        } else {
            "s".to_string()
        };
        out.parameter_names.push(s_name.clone());
        out.groups.push(ParamGroup {
            name: s_name,
            start: n,
            len: 1,
        });
        out.objective = Arc::new(Scaled {
            inner: self.objective.clone(),
            n,
        });
        out.constraints = self
            .constraints
            .iter()
            .map(|g| Arc::new(Truncated { inner: g.clone(), n }) as Func)
            .collect();
        out.parameter_relations = self
            .parameter_relations
            .iter()
            .map(|g| Arc::new(Truncated { inner: g.clone(), n }) as Func)
            .collect();
        if let Some(sol) = self.analytic_solution.clone() {
            out.analytic_solution = Some(Arc::new(move |b: &[f64]| {
                let (x, lam) = sol(&b[..n])?;
                let s = b[n];
                Ok((x, lam.into_iter().map(|l| l * s).collect()))
            }));
        }
        if let (Some(sens), Some(sol)) = (self.analytic_sensitivity.clone(), self.analytic_solution.clone()) {
            out.analytic_sensitivity = Some(Arc::new(move |b: &[f64]| {
                let (xj, lj) = sens(&b[..n])?;
                let (_, lam) = sol(&b[..n])?;
                let s = b[n];
                let mut xa = DMatrix::zeros(xj.nrows(), n + 1);
                xa.view_mut((0, 0), (xj.nrows(), n)).copy_from(&xj);
                let mut la = DMatrix::zeros(lj.nrows(), n + 1);
                la.view_mut((0, 0), (lj.nrows(), n)).copy_from(&(lj * s));
                for (k, l) in lam.iter().enumerate() {
                    la[(k, n)] = *l;
                }
                Ok((xa, la))
            }));
        } else {
            out.analytic_sensitivity = None;
        }
        out.invariance_generators = self
            .invariance_generators
            .iter()
            .map(|gen| {
                let amap = gen.a_map.clone();
                InvarianceGenerator {
                    name: gen.name.clone(),
                    x_map: gen.x_map.clone(),
                    a_map: Arc::new(move |b: &[f64]| {
                        let mut v = amap(&b[..n]);
                        v.push(0.0);
                        v
                    }),
                    // J(s f) = s F(f) is a function of s f only for linear F.
                    response_f: None,
                    response_g: gen.response_g.clone(),
                }
            })
            .collect();
        debug_assert_eq!(out.m(), m);
        out
    }

    /// Max residual of `J f − F(f)` and `J g^k − G^k(g^k)` over the declared
    /// responses; `None` when the generator declares none.
    pub fn check_generator_responses(&self, gen: &InvarianceGenerator, x: &[f64], a: &[f64]) -> Result<Option<f64>> {
        self.check_dims(x, a)?;
        let xm = (gen.x_map)(x);
        let am = (gen.a_map)(a);
        let apply = |t: Target| -> Result<(f64, f64)> {
            let gx = self.numeric_gradient(t, Wrt::X, x, a)?.values;
            let ga = self.numeric_gradient(t, Wrt::A, x, a)?.values;
            let j: f64 = gx.iter().zip(&xm).map(|(u, v)| u * v).sum::<f64>()
                + ga.iter().zip(&am).map(|(u, v)| u * v).sum::<f64>();
            let val = self.function(t)?.value(x, a);
            Ok((j, val))
        };
        let mut worst: Option<f64> = None;
        if let Some(ff) = &gen.response_f {
            let (j, v) = apply(Target::Objective)?;
            worst = Some((j - ff(v)).abs());
        }
        if let Some(gs) = &gen.response_g {
            for (k, gk) in gs.iter().enumerate() {
                let (j, v) = apply(Target::Constraint(k))?;
                let r = (j - gk(v)).abs();
                worst = Some(worst.map_or(r, |w: f64| w.max(r)));
            }
        }
        Ok(worst)
    }
}

/// `s · f(x, a[..n])`, with `s = a[n]`.
struct Scaled {
    inner: Func,
    n: usize,
}

impl Evaluator for Scaled {
    fn value(&self, x: &[f64], a: &[f64]) -> f64 {
        a[self.n] * self.inner.value(x, &a[..self.n])
    }

    fn jet(&self, x: &[f64], a: &[f64]) -> Option<Jet> {
        let inner = self.inner.jet(x, &a[..self.n])?;
        let dim = x.len() + a.len();
        let s = Jet::var(a[self.n], x.len() + self.n, dim);
        Some(pad_jet(inner, dim) * s)
    }
}

/// Evaluates `inner` on the first `n` parameters only.
struct Truncated {
    inner: Func,
    n: usize,
}

impl Evaluator for Truncated {
    fn value(&self, x: &[f64], a: &[f64]) -> f64 {
        self.inner.value(x, &a[..self.n])
    }

    fn jet(&self, x: &[f64], a: &[f64]) -> Option<Jet> {
        let inner = self.inner.jet(x, &a[..self.n])?;
        Some(pad_jet(inner, x.len() + a.len()))
    }
}

/// Extends a jet over a prefix of the variables to `dim` variables.
fn pad_jet(j: Jet, dim: usize) -> Jet {
    if j.is_constant() {
        return j;
    }
    let old = j.dim();
    let mut g = j.g.clone();
    g.resize(dim, 0.0);
    let mut h = vec![0.0; dim * dim];
    for r in 0..old {
        h[r * dim..r * dim + old].copy_from_slice(&j.h[r * old..(r + 1) * old]);
    }
    Jet { v: j.v, g, h }
}

fn finite(v: f64, function: &str, coordinate: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Evaluation {
            function: function.to_string(),
            coordinate: coordinate.to_string(),
        })
    }
}

fn from_jet(j: &Jet, m: usize, n: usize, label: &str) -> Result<FuncDerivs> {
    let all_finite = j.v.is_finite() && j.g.iter().all(|v| v.is_finite()) && j.h.iter().all(|v| v.is_finite());
    if !all_finite {
        return Err(Error::Evaluation {
            function: label.to_string(),
            coordinate: "the evaluation point".into(),
        });
    }
    Ok(FuncDerivs {
        value: j.v,
        gx: DVector::from_fn(m, |i, _| j.grad(i)),
        ga: DVector::from_fn(n, |i, _| j.grad(m + i)),
        hxx: DMatrix::from_fn(m, m, |i, k| j.hess(i, k)),
        hxa: DMatrix::from_fn(m, n, |i, k| j.hess(i, m + k)),
    })
}

fn coord_name(m: usize, idx: usize) -> String {
    if idx < m {
        format!("x[{idx}]")
    } else {
        format!("a[{}]", idx - m)
    }
}

/// Evaluates `f` at `z + Σ steps`, reporting the first perturbed coordinate on failure.
fn eval_shifted(f: &dyn Evaluator, z: &[f64], m: usize, shifts: &[(usize, f64)], label: &str) -> Result<f64> {
    let mut zz = z.to_vec();
    for &(i, d) in shifts {
        zz[i] += d;
    }
    let v = f.value(&zz[..m], &zz[m..]);
    if v.is_finite() {
        Ok(v)
    } else {
        let coord = shifts.first().map_or("the evaluation point".to_string(), |(i, _)| coord_name(m, *i));
        Err(Error::Evaluation {
            function: label.to_string(),
            coordinate: coord,
        })
    }
}

fn fd_gradient(f: &dyn Evaluator, x: &[f64], a: &[f64], wrt: Wrt, rel: f64, label: &str) -> Result<Vec<f64>> {
    let m = x.len();
    let z: Vec<f64> = x.iter().chain(a).copied().collect();
    eval_shifted(f, &z, m, &[], label)?;
    let range = match wrt {
        Wrt::X => 0..m,
        Wrt::A => m..z.len(),
    };
    range
        .map(|i| {
            let h = rel * z[i].abs().max(1.0);
            let up = eval_shifted(f, &z, m, &[(i, h)], label)?;
            let dn = eval_shifted(f, &z, m, &[(i, -h)], label)?;
            Ok((up - dn) / (2.0 * h))
        })
        .collect()
}

fn fd_derivs(f: &dyn Evaluator, x: &[f64], a: &[f64], cfg: FdConfig, label: &str) -> Result<FuncDerivs> {
    let m = x.len();
    let n = a.len();
    let z: Vec<f64> = x.iter().chain(a).copied().collect();
    let value = eval_shifted(f, &z, m, &[], label)?;
    let gx = fd_gradient(f, x, a, Wrt::X, cfg.grad_rel, label)?;
    let ga = fd_gradient(f, x, a, Wrt::A, cfg.grad_rel, label)?;
    let step = |i: usize| cfg.hess_rel * z[i].abs().max(1.0);
    let second = |i: usize, j: usize| -> Result<f64> {
        let (hi, hj) = (step(i), step(j));
        if i == j {
            let up = eval_shifted(f, &z, m, &[(i, 2.0 * hi)], label)?;
            let dn = eval_shifted(f, &z, m, &[(i, -2.0 * hi)], label)?;
            Ok((up - 2.0 * value + dn) / (4.0 * hi * hi))
        } else {
            let pp = eval_shifted(f, &z, m, &[(i, hi), (j, hj)], label)?;
            let pm = eval_shifted(f, &z, m, &[(i, hi), (j, -hj)], label)?;
            let mp = eval_shifted(f, &z, m, &[(i, -hi), (j, hj)], label)?;
            let mm = eval_shifted(f, &z, m, &[(i, -hi), (j, -hj)], label)?;
            Ok((pp - pm - mp + mm) / (4.0 * hi * hj))
        }
    };
    let mut hxx = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = second(i, j)?;
            hxx[(i, j)] = v;
            hxx[(j, i)] = v;
        }
    }
    let mut hxa = DMatrix::zeros(m, n);
    for i in 0..m {
        for mu in 0..n {
            hxa[(i, mu)] = second(i, m + mu)?;
        }
    }
    Ok(FuncDerivs {
        value,
        gx: DVector::from_vec(gx),
        ga: DVector::from_vec(ga),
        hxx,
        hxa,
    })
}
