//! Catalog of economic models with closed-form oracles, prescribed
//! compensated derivatives and model-specific property suites.

use std::sync::Arc;

use crate::analysis::{self, Analysis, DerivedMatrix, IsovectorRecipe, Settings};
use crate::diagnostics::CheckReport;
use crate::error::{Error, Result};
use crate::model::{ProblemModel, VecMap};
use crate::solver;

pub mod cost_constrained_profit;
pub mod efficient_portfolio;
pub mod generic_quadratic;
pub mod market_power;
pub mod multi_constraint_utility;
pub mod multi_output_profit;
pub mod pareto_allocation;
pub mod principal_agent;
pub mod profit_cd;
pub mod slutsky_hicks;

mod util;

/// Model-specific matrix attached to reports, such as the Slutsky matrix.
pub type DerivedFn = Arc<dyn Fn(&Analysis) -> Result<DerivedMatrix> + Send + Sync>;

pub type SuiteFn = Arc<dyn Fn(&Analysis) -> Result<Vec<CheckReport>> + Send + Sync>;

/// One named group of model-specific assertions.
#[derive(Clone)]
pub struct PropertyCheck {
    pub name: String,
    pub run: SuiteFn,
}

impl PropertyCheck {
    pub fn new<F>(name: &str, f: F) -> Self
    where
        F: Fn(&Analysis) -> Result<Vec<CheckReport>> + Send + Sync + 'static,
    {
        PropertyCheck {
            name: name.to_string(),
            run: Arc::new(f),
        }
    }
}

#[derive(Clone)]
pub struct BenchmarkEntry {
    pub name: String,
    pub summary: String,
    pub model: ProblemModel,
    pub default_point: Vec<f64>,
    /// Rough starting point for Newton; deliberately not the solution.
    pub initial_guess: VecMap,
    pub isovectors: IsovectorRecipe,
    pub derived: Vec<DerivedFn>,
    pub suite: Vec<PropertyCheck>,
}

impl std::fmt::Debug for BenchmarkEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BenchmarkEntry")
            .field("name", &self.name)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

impl BenchmarkEntry {
    pub fn suite_names(&self) -> Vec<String> {
        self.suite.iter().map(|p| p.name.clone()).collect()
    }

    /// Full pipeline plus the property suite at `a` (default point when `None`).
    pub fn run(&self, a: Option<&[f64]>, settings: &Settings) -> Result<Analysis> {
        let a = a.unwrap_or(&self.default_point);
        let x0 = (self.initial_guess)(a);
        let mut an = analysis::analyze(&self.model, &self.isovectors, a, &x0, settings)?;
        for f in &self.derived {
            match f(&an) {
                Ok(d) => an.derived.push(d),
                Err(e) => an.checks.push(CheckReport::skipped("derived", "model-specific matrix computed", e.to_string())),
            }
        }
        let extra = self.run_suite(&an);
        an.checks.extend(extra);
        Ok(an)
    }

    /// Runs the suite; a property that errors becomes a failed check.
    pub fn run_suite(&self, an: &Analysis) -> Vec<CheckReport> {
        let mut out = Vec::new();
        for p in &self.suite {
            match (p.run)(an) {
                Ok(reports) => out.extend(reports),
                Err(e) => out.push(CheckReport::flag(
                    p.name.clone(),
                    "property suite evaluated",
                    false,
                    e.to_string(),
                )),
            }
        }
        out
    }

    /// KKT residual of the registered closed form at the default point.
    pub fn oracle_residual(&self) -> Result<Option<f64>> {
        let Some(sol) = &self.model.analytic_solution else {
            return Ok(None);
        };
        let (x, lambda) = sol(&self.default_point)?;
        Ok(Some(solver::kkt_residual(&self.model, &x, &self.default_point, &lambda)?))
    }
}

/// Names of the catalog entries, in catalog order.
pub const NAMES: [&str; 9] = [
    "slutsky_hicks",
    "profit_cd",
    "multi_output_profit",
    "cost_constrained_profit",
    "multi_constraint_utility",
    "market_power",
    "principal_agent",
    "efficient_portfolio",
    "pareto_allocation",
];

/// Catalog entries plus the random rank-bound instance.
pub fn all_names() -> Vec<&'static str> {
    NAMES.iter().copied().chain(["generic_quadratic"]).collect()
}

/// Every benchmark at its default configuration.
pub fn catalog() -> Vec<BenchmarkEntry> {
    NAMES.iter().map(|n| lookup(n).expect("catalog entry")).collect()
}

pub fn lookup(name: &str) -> Result<BenchmarkEntry> {
    match name {
        "slutsky_hicks" => Ok(slutsky_hicks::register(&[0.5, 0.5])),
        "profit_cd" => profit_cd::register(&profit_cd::CdConfig::default()),
        "multi_output_profit" => Ok(multi_output_profit::register(&multi_output_profit::QuadraticTechnology::default())),
        "cost_constrained_profit" => {
            Ok(cost_constrained_profit::register(&multi_output_profit::QuadraticTechnology::default()))
        }
        "multi_constraint_utility" => multi_constraint_utility::register(4, 2),
        "market_power" => Ok(market_power::register(&market_power::MarketConfig::default())),
        "principal_agent" => principal_agent::register(&principal_agent::AgencyConfig::default()),
        "efficient_portfolio" => efficient_portfolio::register(&efficient_portfolio::PortfolioConfig::default()),
        "pareto_allocation" => Ok(pareto_allocation::register(&pareto_allocation::ParetoConfig::default())),
        "generic_quadratic" => Ok(generic_quadratic::register(5, 2, 4, 7)),
        other => Err(Error::Config(format!(
            "unknown model '{other}'; available: {}",
            all_names().join(", ")
        ))),
    }
}
