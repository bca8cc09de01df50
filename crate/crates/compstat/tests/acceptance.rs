//! Acceptance gate: one PASS/FAIL line per criterion. Runs without the test
//! harness so the table is always printed; any failure exits nonzero.

use compstat::analysis::{self, Analysis, IsovectorRecipe, Pipeline, Settings};
use compstat::benchmarks::{self, cost_constrained_profit, efficient_portfolio, multi_output_profit, profit_cd};
use compstat::csm;
use compstat::diagnostics;
use compstat::geometry::{self, BasisKind};
use compstat::linalg;
use compstat::sensitivity;
use nalgebra::DMatrix;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn pipelines() -> [Settings; 2] {
    [Pipeline::Analytic, Pipeline::Numeric].map(|p| Settings::default().with_pipeline(p))
}

fn run(name: &str, settings: &Settings) -> Analysis {
    benchmarks::lookup(name)
        .and_then(|e| e.run(None, settings))
        .unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn profit_analysis(cfg: &profit_cd::CdConfig, settings: &Settings) -> Analysis {
    profit_cd::register(cfg).unwrap().run(None, settings).unwrap()
}

fn c1_cobb_douglas_bounds() -> Outcome {
    let cfg = profit_cd::CdConfig::default();
    let expected = [-2.0, -1.5, 0.0];
    let mut worst = [0.0_f64; 2];
    for (slot, settings) in pipelines().iter().enumerate() {
        let an = profit_analysis(&cfg, settings);
        let b = profit_cd::ProfitBlocks::from_analysis(&an, &cfg);
        for triple in b.own_price_elasticities() {
            for (got, want) in triple.iter().zip(expected) {
                worst[slot] = worst[slot].max((got - want).abs());
            }
        }
    }
    outcome(
        worst[0] < 1e-6 && worst[1] < 1e-4,
        format!("max error analytic {:.2e} (< 1e-6), Newton+IFT {:.2e} (< 1e-4)", worst[0], worst[1]),
    )
}

fn c2_supply_bound() -> Outcome {
    // γ1 + γ2 = 2/3, so the exact supply elasticity γ/(1 − γ) is 2.
    let cfg = profit_cd::CdConfig::default();
    let an = profit_analysis(&cfg, &Settings::default());
    let (sigma, bound) = profit_cd::ProfitBlocks::from_analysis(&an, &cfg).supply_elasticity();
    let err = (bound - 2.0).abs().max((sigma - 2.0).abs());
    outcome(err < 1e-6, format!("σ = {sigma:.12}, bound = {bound:.12}, max error {err:.2e}"))
}

fn c3_slutsky() -> Outcome {
    let entry = benchmarks::lookup("slutsky_hicks").unwrap();
    let an = entry.run(Some(&[1.0, 1.0, 1.0]), &Settings::default()).unwrap();
    let sigma = benchmarks::slutsky_hicks::slutsky_from_jacobian(an.x_jac(), &an.solution.x);
    let expected = DMatrix::from_row_slice(2, 2, &[-0.25, 0.25, 0.25, -0.25]);
    let value = linalg::max_abs(&(&sigma - expected));
    let sym = linalg::symmetry_residual(&sigma);
    let eig = linalg::sym_eigenvalues(&sigma).max();
    let null = (&sigma * nalgebra::DVector::from_vec(vec![1.0, 1.0])).amax();
    let rank = linalg::numerical_rank(&sigma, 1e-8);
    outcome(
        value < 1e-6 && sym < 1e-8 && eig <= 1e-8 && null < 1e-8 && rank == 1,
        format!("|Σ − Σ*| {value:.1e}, asym {sym:.1e}, max eig {eig:.1e}, |Σp| {null:.1e}, rank {rank}"),
    )
}

fn c4_recipe_coherence() -> Outcome {
    let mut worst = 0.0_f64;
    let mut at = String::new();
    for settings in pipelines() {
        for name in benchmarks::NAMES {
            let an = run(name, &settings);
            let omega = &an.omega.matrix;
            let t = &an.isovectors.vectors;
            let quad = an.context.omega_quadratic(&an.isovectors).unwrap().matrix;
            let (silb, _) = an.context.silberberg().unwrap();
            let uni = an.context.universal().unwrap();
            let scale = omega.norm();
            for other in [quad, t * &silb.matrix * t.transpose(), t * &uni.matrix * t.transpose()] {
                let r = (omega - other).norm() / scale;
                if r > worst {
                    worst = r;
                    at = format!("{name} ({})", settings.pipeline.name());
                }
            }
        }
    }
    outcome(worst < 1e-6, format!("max relative gap {worst:.2e} at {at}"))
}

fn c5_conformance() -> Outcome {
    let mut worst = 0.0_f64;
    let mut count = 0;
    for settings in pipelines() {
        for name in benchmarks::NAMES {
            let an = run(name, &settings);
            if an.model.k() == 0 {
                continue;
            }
            count += 1;
            let table = geometry::verify_conformance(&an.x_semicolon(), &an.context.blocks.gx(), 1e-6).unwrap();
            worst = worst.max(table.max);
        }
    }
    outcome(worst < 1e-6, format!("max residual {worst:.2e} over {count} constrained runs"))
}

fn c6_rank_bounds() -> Outcome {
    let mut violations = Vec::new();
    for settings in pipelines() {
        for name in benchmarks::all_names() {
            let an = run(name, &settings);
            let (m, k, n) = (an.model.m(), an.model.k(), an.model.n());
            let a = an.isovectors.a();
            let uni = an.context.universal().unwrap();
            if an.omega.rank_estimate > (m - k).min(a) {
                violations.push(format!("{name}: rank Ω {}", an.omega.rank_estimate));
            }
            if uni.rank_estimate > (m - k).min(n) {
                violations.push(format!("{name}: rank U {}", uni.rank_estimate));
            }
        }
    }
    let an = run("generic_quadratic", &Settings::default());
    let u_rank = an.context.universal().unwrap().rank_estimate;
    outcome(
        violations.is_empty() && u_rank == 3,
        format!("violations {violations:?}; generic_quadratic (M=5, K=2, N=4) rank U = {u_rank}, expected 3"),
    )
}

fn fd_bundle(an: &Analysis) -> sensitivity::SensitivityBundle {
    sensitivity::decision_jacobian_fd(&an.model, &an.solution, &an.settings.solver, an.settings.fd_step).unwrap()
}

fn c7_envelope_invariance() -> Outcome {
    let settings = Settings::default().with_pipeline(Pipeline::Numeric);
    let mut worst = 0.0_f64;
    for name in ["slutsky_hicks", "profit_cd", "cost_constrained_profit"] {
        let an = run(name, &settings);
        let env = diagnostics::check_envelope(&an.model, &an.solution, &an.isovectors, settings.fd_step, &settings.solver, 1e-5)
            .unwrap();
        worst = worst.max(env.residual.unwrap_or(f64::INFINITY));
        let fd = fd_bundle(&an);
        for g in &an.model.invariance_generators {
            let c = diagnostics::check_invariance(g, &an.solution, &fd, 1e-5);
            let scale = an.solution.x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            worst = worst.max(c.residual.unwrap() / scale);
        }
    }
    let tech = cost_constrained_profit::single_output(&multi_output_profit::QuadraticTechnology::default());
    let entry = cost_constrained_profit::register(&tech);
    let an = entry.run(None, &settings).unwrap();
    let fd = fd_bundle(&an);
    let p = an.group("p").unwrap();
    let price_drift = linalg::max_abs(&fd.x_jac.columns(p.start, p.len()).into_owned());
    outcome(
        worst < 1e-5 && price_drift < 1e-5,
        format!("max envelope/invariance residual {worst:.2e}; G = 1 |∂x/∂p| {price_drift:.2e}"),
    )
}

fn c8_portfolio() -> Outcome {
    let cfg = efficient_portfolio::PortfolioConfig::default();
    let entry = efficient_portfolio::register(&cfg).unwrap();
    let an = entry.run(None, &Settings::default().with_pipeline(Pipeline::Numeric)).unwrap();
    let m = an.model.m();
    let cf = efficient_portfolio::closed_form(&an.solution.a, m).unwrap();
    let x_gap = an.solution.x.iter().zip(&cf.x).fold(0.0_f64, |s, (u, v)| s.max((u - v).abs()));
    let variance: f64 = (0..m).map(|i| an.solution.a[i] * an.solution.x[i].powi(2)).sum();
    let var_gap = (variance - cf.variance).abs();

    let diag = efficient_portfolio::PortfolioConfig {
        sigma: DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 4.0])),
        w: vec![1.0, 1.0],
        r: vec![1.0, 2.0],
        wealth: 1.0,
        target: 1.5,
    };
    let pr = efficient_portfolio::Principal::from_config(&diag).unwrap();
    let (r_star, v_min) = efficient_portfolio::frontier_minimum(&pr);
    let frontier_gap = (r_star - 1.2).abs().max((v_min - 0.8).abs());

    // All three diagonal blocks are negative semidefinite in the max convention.
    let b = efficient_portfolio::PrincipalBlocks::from_analysis(&an);
    let [l1, l2] = b.lambda;
    let blocks = [b.var_block.clone(), -l1 * &b.sigma_w, -l2 * &b.sigma_r];
    let mut sign_ok = true;
    let mut ranks = Vec::new();
    for blk in &blocks {
        let scale = linalg::max_abs(blk).max(1.0);
        sign_ok &= linalg::symmetry_residual(blk) <= 1e-8 * scale && linalg::sym_eigenvalues(blk).max() <= 1e-8 * scale;
        ranks.push(linalg::numerical_rank(blk, 1e-7));
    }
    let rank_ok = ranks.iter().all(|r| *r <= m - 2);
    outcome(
        x_gap < 1e-8 && var_gap < 1e-8 && frontier_gap < 1e-12 && sign_ok && rank_ok,
        format!(
            "|X − X*| {x_gap:.1e}, |σ² − σ²*| {var_gap:.1e}, 𝓡* = {r_star}, min σ² = {v_min}, blocks semidefinite {sign_ok}, ranks {ranks:?} ≤ {}",
            m - 2
        ),
    )
}

fn c9_principal_agent() -> Outcome {
    let an = run("principal_agent", &Settings::default().with_pipeline(Pipeline::Numeric));
    let m = an.model.m();
    let a = &an.solution.a;
    let phi = -&an.omega.matrix;
    let sub = |r0: usize, c0: usize| phi.view((r0, c0), (m, m)).into_owned();
    let (p11, p12, p22) = (sub(0, 0), sub(0, m), sub(m, m));
    let r = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(m, (0..m).map(|i| -a[i] / a[m + 2 + i])));
    let g22 = linalg::max_abs(&(&p22 - &r * &p11 * &r));
    let g12 = linalg::max_abs(&(&p12 - &p11 * &r));
    let xs = an.x_semicolon();
    let vp = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        m,
        an.solution.x.iter().map(|v| 0.5 / v.sqrt()),
    ));
    let h = vp * xs.view((0, m), (m, m));
    let h_scale = linalg::max_abs(&h).max(1.0);
    let h_max = linalg::sym_eigenvalues(&linalg::symmetrize(&h)).max() / h_scale;
    let h_sym = linalg::symmetry_residual(&h) / h_scale;
    let h_rank = linalg::numerical_rank(&h, 1e-7);
    let (li, lii) = benchmarks::principal_agent::conventional_multipliers(&an);
    outcome(
        h_max <= 1e-8 && h_sym <= 1e-8 && h_rank <= m - 2 && g22 < 1e-5 && g12 < 1e-5 && li >= 0.0 && lii <= 0.0,
        format!(
            "H max eig {h_max:.1e}, rank {h_rank} ≤ {}, |Φ²² − RΦ¹¹R| {g22:.1e}, |Φ¹² − Φ¹¹R| {g12:.1e}, λ_I {li:.4}, λ_II {lii:.4}",
            m - 2
        ),
    )
}

fn z_rank(offset_fraction: f64) -> usize {
    let base = profit_cd::CdConfig::default();
    let (w, p) = (vec![1.0, 1.0], 3.0);
    let cfg = profit_cd::CdConfig {
        offset: offset_fraction * base.zero_profit_offset(&w, p),
        ..base
    };
    let settings = Settings {
        basis: Some(BasisKind::Nullspace),
        ..Settings::default()
    };
    let an = profit_analysis(&cfg, &settings);
    let z = profit_cd::ProfitBlocks::from_analysis(&an, &cfg).z_matrix();
    linalg::numerical_rank(&z, 1e-8)
}

fn c10_singularity() -> Outcome {
    let regular = z_rank(0.9);
    let singular = z_rank(1.0);
    outcome(
        regular == singular + 1,
        format!("rank Z = {regular} near zero profit, {singular} at zero profit"),
    )
}

fn c11_methods() -> Outcome {
    let mut worst = 0.0_f64;
    let mut at = "";
    for name in benchmarks::NAMES {
        let an = run(name, &Settings::default().with_pipeline(Pipeline::Numeric));
        let ift = sensitivity::decision_jacobian_ift(&an.model, &an.solution).unwrap();
        let gap = linalg::max_abs(&(&fd_bundle(&an).x_jac - &ift.x_jac));
        if gap > worst {
            worst = gap;
            at = name;
        }
    }
    let cfg = profit_cd::CdConfig::default();
    let model = profit_cd::base_model(&cfg).unwrap();
    let recipe = IsovectorRecipe::Nullspace {
        annihilate_objective: false,
    };
    let settings = Settings::default().with_pipeline(Pipeline::Numeric);
    let an = analysis::analyze(&model, &recipe, &[1.0, 1.0, 3.0], &[0.7, 0.7], &settings).unwrap();
    let unconstrained = an.context.omega_unconstrained().unwrap();
    let spectral = csm::spectral_relation(&unconstrained, &an.context.blocks.f.hxx, an.x_jac())
        .unwrap()
        .max_relative_residual();
    outcome(
        worst < 1e-4 && spectral < 1e-6,
        format!("max |FD − IFT| {worst:.2e} ({at}); spectral residual {spectral:.2e}"),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("1 Cobb-Douglas elasticity bounds", c1_cobb_douglas_bounds),
        ("2 supply elasticity bound", c2_supply_bound),
        ("3 Slutsky matrix", c3_slutsky),
        ("4 recipe coherence", c4_recipe_coherence),
        ("5 conformance", c5_conformance),
        ("6 rank bounds", c6_rank_bounds),
        ("7 envelope and invariance", c7_envelope_invariance),
        ("8 portfolio closed form", c8_portfolio),
        ("9 principal-agent structure", c9_principal_agent),
        ("10 singularity at zero profit", c10_singularity),
        ("11 derivative methods", c11_methods),
    ];
    let mut failed = Vec::new();
    for (name, f) in criteria {
        let o = f();
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(name);
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
