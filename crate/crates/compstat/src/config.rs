//! Run configuration: a TOML document with dotted sections, plus the
//! `name=values` point and `name=lo:hi:n` sweep syntaxes shared with the CLI.
//!
//! ```toml
//! model = "slutsky_hicks"
//! at = ["p=1,1", "m=1"]
//!
//! [solver]
//! tol = 1e-10
//!
//! [csm]
//! recipes = ["omega", "universal"]
//! ```

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::{Pipeline, Settings};
use crate::csm::Recipe;
use crate::error::{Error, Result};
use crate::geometry::BasisKind;
use crate::model::ProblemModel;

/// Largest sweep grid accepted, counted in points.
pub const MAX_SWEEP_POINTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
    Table,
}

impl FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            "table" => Ok(OutputFormat::Table),
            other => Err(Error::Config(format!("unknown output format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub max_backtracks: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MethodSection {
    pub pipeline: Option<Pipeline>,
    pub fd_step: Option<f64>,
    pub envelope: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CsmSection {
    pub recipes: Option<Vec<Recipe>>,
    pub basis: Option<BasisKind>,
    pub rank_tol: Option<f64>,
    pub symmetry_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceSection {
    pub analytic: Option<f64>,
    pub fd: Option<f64>,
    pub coherence: Option<f64>,
    pub method: Option<f64>,
    pub conformance: Option<f64>,
}

impl ToleranceSection {
    /// The same value for every tolerance.
    pub fn uniform(v: f64) -> Self {
        ToleranceSection {
            analytic: Some(v),
            fd: Some(v),
            coherence: Some(v),
            method: Some(v),
            conformance: Some(v),
        }
    }

    /// Parses `1e-6` (all tolerances) or `fd=1e-6,method=1e-3`.
    pub fn parse(s: &str) -> Result<Self> {
        if !s.contains('=') {
            return Ok(Self::uniform(parse_number(s.trim())?));
        }
        let mut out = ToleranceSection::default();
        for part in s.split(',') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("tolerance '{part}' is not of the form key=value")))?;
            let v = Some(parse_number(v.trim())?);
            match k.trim() {
                "analytic" => out.analytic = v,
                "fd" => out.fd = v,
                "coherence" => out.coherence = v,
                "method" => out.method = v,
                "conformance" => out.conformance = v,
                other => return Err(Error::Config(format!("unknown tolerance '{other}'"))),
            }
        }
        Ok(out)
    }

    fn overlay(&mut self, o: &ToleranceSection) {
        self.analytic = o.analytic.or(self.analytic);
        self.fd = o.fd.or(self.fd);
        self.coherence = o.coherence.or(self.coherence);
        self.method = o.method.or(self.method);
        self.conformance = o.conformance.or(self.conformance);
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub path: Option<String>,
    pub format: Option<OutputFormat>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: Option<String>,
    /// Parameter overrides, each `name=v1,v2,…`.
    pub at: Vec<String>,
    /// Sweep axes, each `name=lo:hi:n`; several axes form a grid.
    pub sweep: Vec<String>,
    pub solver: SolverSection,
    pub method: MethodSection,
    pub csm: CsmSection,
    pub tolerances: ToleranceSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Rejects non-positive tolerances and malformed point or sweep entries.
    pub fn validate(&self) -> Result<()> {
        let t = &self.tolerances;
        let c = &self.csm;
        let named = [
            ("solver.tol", self.solver.tol),
            ("method.fd_step", self.method.fd_step),
            ("csm.rank_tol", c.rank_tol),
            ("csm.symmetry_tol", c.symmetry_tol),
            ("tolerances.analytic", t.analytic),
            ("tolerances.fd", t.fd),
            ("tolerances.coherence", t.coherence),
            ("tolerances.method", t.method),
            ("tolerances.conformance", t.conformance),
        ];
        for (name, v) in named {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
                }
            }
        }
        if self.solver.max_iter == Some(0) {
            return Err(Error::Config("solver.max_iter must be at least 1".into()));
        }
        for a in &self.at {
            Assignment::parse(a)?;
        }
        let axes = self.sweep.iter().map(|s| SweepAxis::parse(s)).collect::<Result<Vec<_>>>()?;
        grid_size(&axes)?;
        Ok(())
    }

    /// Fields set in `other` replace those in `self`; lists are appended.
    pub fn merge(mut self, other: RunConfig) -> Self {
        self.model = other.model.or(self.model);
        self.at.extend(other.at);
        self.sweep.extend(other.sweep);
        let (s, o) = (&mut self.solver, other.solver);
        s.tol = o.tol.or(s.tol);
        s.max_iter = o.max_iter.or(s.max_iter);
        s.max_backtracks = o.max_backtracks.or(s.max_backtracks);
        let (m, o) = (&mut self.method, other.method);
        m.pipeline = o.pipeline.or(m.pipeline);
        m.fd_step = o.fd_step.or(m.fd_step);
        m.envelope = o.envelope.or(m.envelope);
        let (c, o) = (&mut self.csm, other.csm);
        c.recipes = o.recipes.or(c.recipes.take());
        c.basis = o.basis.or(c.basis);
        c.rank_tol = o.rank_tol.or(c.rank_tol);
        c.symmetry_tol = o.symmetry_tol.or(c.symmetry_tol);
        self.tolerances.overlay(&other.tolerances);
        self.output.path = other.output.path.or(self.output.path);
        self.output.format = other.output.format.or(self.output.format);
        self
    }

    /// Library settings with every unset field at its default.
    pub fn settings(&self) -> Settings {
        let mut s = Settings::default();
        if let Some(p) = self.method.pipeline {
            s.pipeline = p;
        }
        if let Some(v) = self.method.fd_step {
            s.fd_step = v;
        }
        if let Some(v) = self.method.envelope {
            s.envelope = v;
        }
        if let Some(v) = self.solver.tol {
            s.solver.tol = v;
        }
        if let Some(v) = self.solver.max_iter {
            s.solver.max_iter = v;
        }
        if let Some(v) = self.solver.max_backtracks {
            s.solver.max_backtracks = v;
        }
        s.recipes = self.csm.recipes.clone();
        s.basis = self.csm.basis;
        if let Some(v) = self.csm.rank_tol {
            s.csm.rank_tol = v;
        }
        if let Some(v) = self.csm.symmetry_tol {
            s.csm.symmetry_tol = v;
        }
        let t = &self.tolerances;
        let d = &mut s.tolerances;
        d.analytic = t.analytic.unwrap_or(d.analytic);
        d.fd = t.fd.unwrap_or(d.fd);
        d.coherence = t.coherence.unwrap_or(d.coherence);
        d.method = t.method.unwrap_or(d.method);
        d.conformance = t.conformance.unwrap_or(d.conformance);
        s
    }

    /// Parameter points to run: the base point with `at` applied, expanded
    /// over the sweep grid in row-major order (last axis fastest).
    pub fn points(&self, model: &ProblemModel, base: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut point = base.to_vec();
        for a in &self.at {
            Assignment::parse(a)?.apply(model, &mut point)?;
        }
        let axes = self.sweep.iter().map(|s| SweepAxis::parse(s)).collect::<Result<Vec<_>>>()?;
        let mut out = vec![point];
        for axis in &axes {
            let idx = resolve(model, &axis.name, 1)?;
            let idx = &idx;
            out = out
                .into_iter()
                .flat_map(|p| {
                    axis.values.iter().map(move |v| {
                        let mut q = p.clone();
                        for &i in idx {
                            q[i] = *v;
                        }
                        q
                    })
                })
                .collect();
        }
        Ok(out)
    }
}

/// `name=v1,v2,…`: sets a parameter, or every member of a parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub name: String,
    pub values: Vec<f64>,
}

impl Assignment {
    pub fn parse(s: &str) -> Result<Self> {
        let (name, rest) = split_name(s)?;
        let values = rest.split(',').map(|v| parse_number(v.trim())).collect::<Result<Vec<_>>>()?;
        Ok(Assignment { name, values })
    }

    /// Writes the values into `point`; a single value is broadcast over a group.
    pub fn apply(&self, model: &ProblemModel, point: &mut [f64]) -> Result<()> {
        let idx = resolve(model, &self.name, self.values.len())?;
        for (k, &i) in idx.iter().enumerate() {
            point[i] = if self.values.len() == 1 { self.values[0] } else { self.values[k] };
        }
        Ok(())
    }
}

/// `name=lo:hi:n`: `n` evenly spaced values from `lo` to `hi` inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub name: String,
    pub values: Vec<f64>,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Result<Self> {
        let (name, rest) = split_name(s)?;
        let parts: Vec<&str> = rest.split(':').collect();
        let [lo, hi, n] = parts[..] else {
            return Err(Error::Config(format!("sweep '{s}' is not of the form name=lo:hi:n")));
        };
        let (lo, hi) = (parse_number(lo.trim())?, parse_number(hi.trim())?);
        let n: usize = n
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("sweep count '{n}' is not a positive integer")))?;
        if n == 0 || n > MAX_SWEEP_POINTS {
            return Err(Error::Config(format!("sweep count must lie in 1..={MAX_SWEEP_POINTS}, got {n}")));
        }
        if n == 1 && lo != hi {
            return Err(Error::Config(format!("sweep '{s}' has one point but distinct bounds")));
        }
        Ok(SweepAxis {
            name,
            values: linspace(lo, hi, n),
        })
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
            .collect(),
    }
}

fn grid_size(axes: &[SweepAxis]) -> Result<usize> {
    axes.iter().try_fold(1usize, |acc, a| {
        acc.checked_mul(a.values.len())
            .filter(|n| *n <= MAX_SWEEP_POINTS)
            .ok_or_else(|| Error::Config(format!("sweep grid exceeds {MAX_SWEEP_POINTS} points")))
    })
}

fn split_name(s: &str) -> Result<(String, &str)> {
    let (name, rest) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("'{s}' is not of the form name=value")))?;
    let name = name.trim();
    if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || c == '_') {
        return Err(Error::Config(format!("invalid parameter name '{name}'")));
    }
    Ok((name.to_string(), rest))
}

fn parse_number(s: &str) -> Result<f64> {
    let v: f64 = s.parse().map_err(|_| Error::Config(format!("'{s}' is not a number")))?;
    if !v.is_finite() {
        return Err(Error::Config(format!("'{s}' is not finite")));
    }
    Ok(v)
}

/// Parameter indices named by `name`: a single parameter, else a group whose
/// length matches `count` (or any length when `count` is 1).
fn resolve(model: &ProblemModel, name: &str, count: usize) -> Result<Vec<usize>> {
    if let Some(i) = model.parameter_names.iter().position(|p| p == name) {
        if count != 1 {
            return Err(Error::Config(format!("parameter '{name}' takes one value, got {count}")));
        }
        return Ok(vec![i]);
    }
    let g = model
        .group(name)
        .ok_or_else(|| Error::Config(format!("model '{}' has no parameter or group '{name}'", model.name)))?;
    if count != 1 && count != g.len {
        return Err(Error::Config(format!("group '{name}' has {} members, got {count} values", g.len)));
    }
    Ok((g.start..g.start + g.len).collect())
}
