//! Serializable run reports.
//!
//! Matrices are stored row-major with row and column labels. Non-finite
//! numbers are written as the strings `"NaN"`, `"Infinity"` and
//! `"-Infinity"` so that every report decodes to the values it was built from.

use std::fmt;

use nalgebra::DMatrix;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::analysis::{Analysis, DerivedMatrix, Pipeline};
use crate::config::RunConfig;
use crate::csm::{CsmResult, Recipe, SignConvention, TransformKind};
use crate::diagnostics::{CheckReport, Verdict};
use crate::error::{Error, Result};
use crate::geometry::{BasisKind, IsovectorSet};
use crate::sensitivity::{SensitivityBundle, SensitivityMethod};
use crate::solver::{SolutionPoint, SolutionSource};

/// Bumped on any change to the serialized fields.
pub const SCHEMA_VERSION: u32 = 1;

/// An `f64` whose JSON form survives NaN and infinities.
#[derive(Debug, Clone, Copy, Default)]
pub struct Real(pub f64);

impl PartialEq for Real {
    fn eq(&self, other: &Self) -> bool {
        self.0 == other.0 || (self.0.is_nan() && other.0.is_nan())
    }
}

impl From<f64> for Real {
    fn from(v: f64) -> Self {
        Real(v)
    }
}

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v = self.0;
        if v.is_finite() {
            s.serialize_f64(v)
        } else if v.is_nan() {
            s.serialize_str("NaN")
        } else if v > 0.0 {
            s.serialize_str("Infinity")
        } else {
            s.serialize_str("-Infinity")
        }
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct RealVisitor;
        impl Visitor<'_> for RealVisitor {
            type Value = Real;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or one of \"NaN\", \"Infinity\", \"-Infinity\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Real, E> {
                Ok(Real(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Real, E> {
                Ok(Real(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Real, E> {
                Ok(Real(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Real, E> {
                match v {
                    "NaN" => Ok(Real(f64::NAN)),
                    "Infinity" => Ok(Real(f64::INFINITY)),
                    "-Infinity" => Ok(Real(f64::NEG_INFINITY)),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }
        d.deserialize_any(RealVisitor)
    }
}

fn reals(v: &[f64]) -> Vec<Real> {
    v.iter().copied().map(Real).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledMatrix {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub rows: Vec<Vec<Real>>,
}

impl LabeledMatrix {
    pub fn new(m: &DMatrix<f64>, row_labels: Vec<String>, col_labels: Vec<String>) -> Self {
        LabeledMatrix {
            row_labels,
            col_labels,
            rows: (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| Real(m[(i, j)])).collect()).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.len() != self.row_labels.len() {
            return Err(Error::Decode(format!(
                "{} rows but {} row labels",
                self.rows.len(),
                self.row_labels.len()
            )));
        }
        if let Some(r) = self.rows.iter().find(|r| r.len() != self.col_labels.len()) {
            return Err(Error::Decode(format!(
                "row of length {} but {} column labels",
                r.len(),
                self.col_labels.len()
            )));
        }
        Ok(())
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        self.validate()?;
        let (r, c) = (self.row_labels.len(), self.col_labels.len());
        Ok(DMatrix::from_fn(r, c, |i, j| self.rows[i][j].0))
    }

    /// Comma-separated rendering with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label");
        for c in &self.col_labels {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (l, row) in self.row_labels.iter().zip(&self.rows) {
            out.push_str(l);
            for v in row {
                out.push_str(&format!(",{}", v.0));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedValue {
    pub name: String,
    pub value: Real,
}

fn named(names: &[String], values: &[f64]) -> Vec<NamedValue> {
    names
        .iter()
        .zip(values)
        .map(|(n, v)| NamedValue {
            name: n.clone(),
            value: Real(*v),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionReport {
    pub x: Vec<NamedValue>,
    pub lambda: Vec<Real>,
    pub kkt_residual: Real,
    pub iterations: usize,
    pub converged: bool,
    pub source: SolutionSource,
    pub newton_discrepancy: Option<Real>,
}

impl SolutionReport {
    fn new(sol: &SolutionPoint, decision_names: &[String]) -> Self {
        SolutionReport {
            x: named(decision_names, &sol.x),
            lambda: reals(&sol.lambda),
            kkt_residual: Real(sol.kkt_residual),
            iterations: sol.iterations,
            converged: sol.converged,
            source: sol.source,
            newton_discrepancy: sol.newton_discrepancy.map(Real),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityReport {
    pub method: SensitivityMethod,
    pub step: Option<Real>,
    pub cross_check_residual: Option<Real>,
    pub x_jac: LabeledMatrix,
    pub lambda_jac: LabeledMatrix,
}

impl SensitivityReport {
    fn new(s: &SensitivityBundle, decisions: &[String], params: &[String]) -> Self {
        SensitivityReport {
            method: s.method,
            step: s.step.map(Real),
            cross_check_residual: s.cross_check_residual.map(Real),
            x_jac: LabeledMatrix::new(&s.x_jac, decisions.to_vec(), params.to_vec()),
            lambda_jac: LabeledMatrix::new(&s.lambda_jac, multiplier_labels(s.lambda_jac.nrows()), params.to_vec()),
        }
    }
}

fn multiplier_labels(k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("lambda{i}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsovectorReport {
    pub basis_kind: BasisKind,
    pub annihilates_objective: bool,
    pub redundant: bool,
    pub degenerate: bool,
    pub max_null_residual: Real,
    pub vectors: LabeledMatrix,
}

impl IsovectorReport {
    fn new(iso: &IsovectorSet, params: &[String]) -> Self {
        IsovectorReport {
            basis_kind: iso.basis_kind,
            annihilates_objective: iso.annihilates_objective,
            redundant: iso.redundant,
            degenerate: iso.degenerate,
            max_null_residual: Real(iso.max_null_residual()),
            vectors: LabeledMatrix::new(&iso.vectors, iso.labels.clone(), params.to_vec()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsmReport {
    pub recipe: Recipe,
    pub sign_convention: SignConvention,
    pub matrix: LabeledMatrix,
    pub eigenvalues: Vec<Real>,
    pub symmetry_residual: Real,
    pub rank_estimate: usize,
    pub rank_tol: Real,
    pub symmetry_tol: Real,
    pub transform_kind: Option<TransformKind>,
    pub note: Option<String>,
}

impl From<&CsmResult> for CsmReport {
    fn from(c: &CsmResult) -> Self {
        CsmReport {
            recipe: c.recipe,
            sign_convention: c.sign_convention,
            matrix: LabeledMatrix::new(&c.matrix, c.labels.clone(), c.labels.clone()),
            eigenvalues: reals(&c.eigenvalues),
            symmetry_residual: Real(c.symmetry_residual),
            rank_estimate: c.rank_estimate,
            rank_tol: Real(c.rank_tol),
            symmetry_tol: Real(c.symmetry_tol),
            transform_kind: c.transform_kind,
            note: c.note.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerivedReport {
    pub name: String,
    pub matrix: LabeledMatrix,
}

impl From<&DerivedMatrix> for DerivedReport {
    fn from(d: &DerivedMatrix) -> Self {
        DerivedReport {
            name: d.name.clone(),
            matrix: LabeledMatrix::new(&d.matrix, d.row_labels.clone(), d.col_labels.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckEntry {
    pub name: String,
    pub verdict: Verdict,
    pub residual: Option<Real>,
    pub tolerance: Option<Real>,
    pub property: String,
    pub note: Option<String>,
}

impl From<&CheckReport> for CheckEntry {
    fn from(c: &CheckReport) -> Self {
        CheckEntry {
            name: c.name.clone(),
            verdict: c.verdict,
            residual: c.residual.map(Real),
            tolerance: c.tolerance.map(Real),
            property: c.property.clone(),
            note: c.note.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorReport {
    pub kind: String,
    pub message: String,
}

impl From<&Error> for ErrorReport {
    fn from(e: &Error) -> Self {
        ErrorReport {
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

/// Process exit status of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    CheckFailure,
    SolverFailure,
    ConfigError,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Pass => 0,
            Outcome::CheckFailure => 1,
            Outcome::SolverFailure => 2,
            Outcome::ConfigError => 3,
        }
    }

    /// Configuration-side errors map to 3, every other pipeline error to 2.
    pub fn of_error(e: &Error) -> Self {
        match e {
            Error::Config(_) | Error::Dimension { .. } | Error::Decode(_) => Outcome::ConfigError,
            _ => Outcome::SolverFailure,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timings {
    pub total_ms: Real,
}

/// Everything recorded for one parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub model: String,
    pub pipeline: Pipeline,
    pub parameters: Vec<NamedValue>,
    pub outcome: Outcome,
    pub solution: Option<SolutionReport>,
    pub sensitivity: Option<SensitivityReport>,
    pub isovectors: Option<IsovectorReport>,
    pub omega: Option<CsmReport>,
    pub csms: Vec<CsmReport>,
    /// Model-specific matrices.
    pub derived: Vec<DerivedReport>,
    pub checks: Vec<CheckEntry>,
    pub error: Option<ErrorReport>,
    /// Wall-clock time; the only field that varies between identical runs.
    pub timings: Timings,
}

impl RunReport {
    pub fn from_analysis(an: &Analysis, elapsed_ms: f64) -> Self {
        let m = &an.model;
        let outcome = if an.passed() { Outcome::Pass } else { Outcome::CheckFailure };
        RunReport {
            model: m.name.clone(),
            pipeline: an.settings.pipeline,
            parameters: named(&m.parameter_names, &an.solution.a),
            outcome,
            solution: Some(SolutionReport::new(&an.solution, &m.decision_names)),
            sensitivity: Some(SensitivityReport::new(&an.sensitivity, &m.decision_names, &m.parameter_names)),
            isovectors: Some(IsovectorReport::new(&an.isovectors, &m.parameter_names)),
            omega: Some(CsmReport::from(&an.omega)),
            csms: an.csms.iter().map(CsmReport::from).collect(),
            derived: an.derived.iter().map(DerivedReport::from).collect(),
            checks: an.checks.iter().map(CheckEntry::from).collect(),
            error: None,
            timings: Timings {
                total_ms: Real(elapsed_ms),
            },
        }
    }

    /// A report for a point at which the pipeline stopped with `err`.
    pub fn from_error(model: &str, pipeline: Pipeline, parameters: Vec<NamedValue>, err: &Error, elapsed_ms: f64) -> Self {
        RunReport {
            model: model.to_string(),
            pipeline,
            parameters,
            outcome: Outcome::of_error(err),
            solution: None,
            sensitivity: None,
            isovectors: None,
            omega: None,
            csms: Vec::new(),
            derived: Vec::new(),
            checks: Vec::new(),
            error: Some(ErrorReport::from(err)),
            timings: Timings {
                total_ms: Real(elapsed_ms),
            },
        }
    }

    pub fn named_parameters(names: &[String], values: &[f64]) -> Vec<NamedValue> {
        named(names, values)
    }

    pub fn csm(&self, recipe: Recipe) -> Option<&CsmReport> {
        self.csms.iter().find(|c| c.recipe == recipe)
    }

    pub fn derived(&self, name: &str) -> Option<&LabeledMatrix> {
        self.derived.iter().find(|d| d.name == name).map(|d| &d.matrix)
    }

    pub fn check(&self, name: &str) -> Option<&CheckEntry> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn validate(&self) -> Result<()> {
        if let Some(s) = &self.sensitivity {
            s.x_jac.validate()?;
            s.lambda_jac.validate()?;
        }
        for d in &self.derived {
            d.matrix.validate()?;
        }
        if let Some(i) = &self.isovectors {
            i.vectors.validate()?;
        }
        for c in self.omega.iter().chain(&self.csms) {
            c.matrix.validate()?;
            if c.matrix.row_labels.len() != c.matrix.col_labels.len() {
                return Err(Error::Decode(format!("CSM '{}' is not square", c.recipe.name())));
            }
        }
        Ok(())
    }
}

/// Output of `analyze`: one report per parameter point, in input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeReport {
    pub schema_version: u32,
    pub config: RunConfig,
    pub reports: Vec<RunReport>,
}

impl AnalyzeReport {
    pub fn new(config: RunConfig, reports: Vec<RunReport>) -> Self {
        AnalyzeReport {
            schema_version: SCHEMA_VERSION,
            config,
            reports,
        }
    }

    /// Worst outcome over all points.
    pub fn outcome(&self) -> Outcome {
        self.reports.iter().map(|r| r.outcome).max().unwrap_or(Outcome::Pass)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Decode(e.to_string()))
    }

    /// Decodes and validates a report, rejecting other schema versions.
    pub fn from_json(text: &str) -> Result<Self> {
        let r: AnalyzeReport = decode(text)?;
        check_version(r.schema_version)?;
        for rep in &r.reports {
            rep.validate()?;
        }
        r.config.validate().map_err(|e| Error::Decode(e.to_string()))?;
        Ok(r)
    }

    pub fn without_timings(mut self) -> Self {
        for r in &mut self.reports {
            r.timings = Timings::default();
        }
        self
    }
}

/// One benchmark under one pipeline in `verify-all`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteRun {
    pub model: String,
    pub pipeline: Pipeline,
    pub outcome: Outcome,
    pub passed: usize,
    pub failed: usize,
    pub skipped: usize,
    pub checks: Vec<CheckEntry>,
    pub error: Option<ErrorReport>,
}

impl SuiteRun {
    pub fn from_report(r: &RunReport) -> Self {
        let count = |v: Verdict| r.checks.iter().filter(|c| c.verdict == v).count();
        SuiteRun {
            model: r.model.clone(),
            pipeline: r.pipeline,
            outcome: r.outcome,
            passed: count(Verdict::Pass),
            failed: count(Verdict::Fail),
            skipped: count(Verdict::Skipped),
            checks: r.checks.clone(),
            error: r.error.clone(),
        }
    }

    /// `model  pipeline  PASS|FAIL  passed/failed/skipped`.
    pub fn table_line(&self) -> String {
        let verdict = match self.outcome {
            Outcome::Pass => "PASS".to_string(),
            Outcome::CheckFailure => "FAIL".to_string(),
            Outcome::SolverFailure | Outcome::ConfigError => format!(
                "ERROR ({})",
                self.error.as_ref().map(|e| e.kind.as_str()).unwrap_or("unknown")
            ),
        };
        format!(
            "{:<26} {:<9} {:<5} {:>3} passed {:>3} failed {:>3} skipped",
            self.model,
            self.pipeline.name(),
            verdict,
            self.passed,
            self.failed,
            self.skipped
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub runs: Vec<SuiteRun>,
}

impl VerifyReport {
    pub fn new(runs: Vec<SuiteRun>) -> Self {
        VerifyReport {
            schema_version: SCHEMA_VERSION,
            runs,
        }
    }

    pub fn outcome(&self) -> Outcome {
        self.runs.iter().map(|r| r.outcome).max().unwrap_or(Outcome::Pass)
    }

    pub fn table(&self) -> String {
        self.runs.iter().map(|r| r.table_line() + "\n").collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Decode(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: VerifyReport = decode(text)?;
        check_version(r.schema_version)?;
        Ok(r)
    }
}

fn decode<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Decode(e.to_string()))
}

fn check_version(v: u32) -> Result<()> {
    if v != SCHEMA_VERSION {
        return Err(Error::Decode(format!("schema version {v}, expected {SCHEMA_VERSION}")));
    }
    Ok(())
}
