//! Run configuration parsing and the JSON report format.

use std::path::PathBuf;

use compstat::analysis::{Pipeline, Settings};
use compstat::benchmarks;
use compstat::config::{self, Assignment, OutputFormat, RunConfig, SweepAxis, ToleranceSection, MAX_SWEEP_POINTS};
use compstat::csm::Recipe;
use compstat::geometry::BasisKind;
use compstat::report::{AnalyzeReport, LabeledMatrix, Outcome, Real, RunReport, SuiteRun, VerifyReport, SCHEMA_VERSION};
use compstat::Error;
use nalgebra::DMatrix;

fn corpus(target: &str) -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, String)> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn full_config_parses() {
    let (_, text) = corpus("run_config").into_iter().find(|(n, _)| n == "full.toml").unwrap();
    let cfg = RunConfig::from_toml(&text).unwrap();
    assert_eq!(cfg.model.as_deref(), Some("slutsky_hicks"));
    assert_eq!(cfg.method.pipeline, Some(Pipeline::Numeric));
    assert_eq!(cfg.csm.basis, Some(BasisKind::Prescribed));
    assert_eq!(cfg.csm.recipes.as_deref(), Some(&[Recipe::Omega, Recipe::OmegaQuadratic, Recipe::Universal][..]));
    assert_eq!(cfg.output.format, Some(OutputFormat::Json));
    let s = cfg.settings();
    assert_eq!(s.pipeline, Pipeline::Numeric);
    assert_eq!(s.tolerances.method, 1e-4);
}

#[test]
fn empty_config_gives_default_settings() {
    let cfg = RunConfig::from_toml("").unwrap();
    assert_eq!(cfg, RunConfig::default());
    assert_eq!(cfg.settings(), Settings::default());
}

#[test]
fn config_rejections() {
    for text in [
        "modle = \"slutsky_hicks\"",
        "[solver]\ntolerance = 1e-8",
        "[tolerances]\nfd = -1e-5",
        "[tolerances]\nfd = 0.0",
        "[solver]\nmax_iter = 0",
        "at = [\"p==1\"]",
        "sweep = [\"m=1:2\"]",
        "sweep = [\"m=1:2:1000\", \"p=1:2:1000\"]",
        "[method]\npipeline = \"symbolic\"",
        "[csm]\nrecipes = [\"hessian\"]",
    ] {
        let err = RunConfig::from_toml(text).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{text}: {err}");
    }
}

#[test]
fn merge_prefers_later_values_and_appends_lists() {
    let base = RunConfig::from_toml("model = \"a\"\nat = [\"m=1\"]\n[tolerances]\nfd = 1e-3\nmethod = 1e-2").unwrap();
    let over = RunConfig {
        model: Some("b".into()),
        at: vec!["m=2".into()],
        tolerances: ToleranceSection::parse("fd=1e-4").unwrap(),
        ..RunConfig::default()
    };
    let m = base.merge(over);
    assert_eq!(m.model.as_deref(), Some("b"));
    assert_eq!(m.at, ["m=1", "m=2"]);
    assert_eq!(m.tolerances.fd, Some(1e-4));
    assert_eq!(m.tolerances.method, Some(1e-2));
}

#[test]
fn tolerance_syntax() {
    assert_eq!(ToleranceSection::parse("1e-6").unwrap(), ToleranceSection::uniform(1e-6));
    let t = ToleranceSection::parse("fd=1e-6, method=1e-3").unwrap();
    assert_eq!((t.fd, t.method, t.analytic), (Some(1e-6), Some(1e-3), None));
    for bad in ["", "fd", "speed=1", "fd=abc", "fd=inf", "1e-6,2e-6"] {
        assert!(ToleranceSection::parse(bad).is_err(), "{bad}");
    }
}

#[test]
fn assignment_syntax() {
    assert_eq!(
        Assignment::parse("p=1, 2.5").unwrap(),
        Assignment {
            name: "p".into(),
            values: vec![1.0, 2.5]
        }
    );
    for bad in ["p", "=1", "p q=1", "p=", "p=1,,2", "p=nan"] {
        assert!(Assignment::parse(bad).is_err(), "{bad}");
    }
}

#[test]
fn sweep_syntax() {
    assert_eq!(SweepAxis::parse("m=0:1:5").unwrap().values, [0.0, 0.25, 0.5, 0.75, 1.0]);
    assert_eq!(SweepAxis::parse("m=2:2:1").unwrap().values, [2.0]);
    assert_eq!(SweepAxis::parse(&format!("m=0:1:{MAX_SWEEP_POINTS}")).unwrap().values.len(), MAX_SWEEP_POINTS);
    for bad in ["m=0:1:0", "m=1:2:1", "m=0:1", "m=0:1:2.5", &format!("m=0:1:{}", MAX_SWEEP_POINTS + 1)] {
        assert!(SweepAxis::parse(bad).is_err(), "{bad}");
    }
}

#[test]
fn linspace_endpoints_are_exact() {
    let v = config::linspace(0.1, 0.7, 7);
    assert_eq!(v.first(), Some(&0.1));
    assert_eq!(v.last(), Some(&0.7));
    assert!(config::linspace(0.0, 1.0, 0).is_empty());
}

#[test]
fn points_apply_groups_then_sweep_last_axis_fastest() {
    let entry = benchmarks::lookup("slutsky_hicks").unwrap();
    let cfg = RunConfig {
        at: vec!["p=2".into(), "m=5".into()],
        sweep: vec!["p1=1:2:2".into(), "m=10:30:3".into()],
        ..RunConfig::default()
    };
    let pts = cfg.points(&entry.model, &entry.default_point).unwrap();
    let want = [
        [1.0, 2.0, 10.0],
        [1.0, 2.0, 20.0],
        [1.0, 2.0, 30.0],
        [2.0, 2.0, 10.0],
        [2.0, 2.0, 20.0],
        [2.0, 2.0, 30.0],
    ];
    assert_eq!(pts, want.map(|p| p.to_vec()));
}

#[test]
fn points_reject_unknown_names_and_bad_counts() {
    let entry = benchmarks::lookup("slutsky_hicks").unwrap();
    for at in ["q=1", "p=1,2,3", "m=1,2"] {
        let cfg = RunConfig {
            at: vec![at.into()],
            ..RunConfig::default()
        };
        assert!(matches!(cfg.points(&entry.model, &entry.default_point), Err(Error::Config(_))), "{at}");
    }
}

#[test]
fn output_format_names() {
    assert_eq!("csv".parse::<OutputFormat>().unwrap(), OutputFormat::Csv);
    assert!("yaml".parse::<OutputFormat>().is_err());
    assert_eq!(OutputFormat::default(), OutputFormat::Json);
}

#[test]
fn real_writes_non_finite_values_as_strings() {
    let v = vec![Real(1.5), Real(f64::NAN), Real(f64::INFINITY), Real(f64::NEG_INFINITY)];
    let text = serde_json::to_string(&v).unwrap();
    assert_eq!(text, r#"[1.5,"NaN","Infinity","-Infinity"]"#);
    let back: Vec<Real> = serde_json::from_str(&text).unwrap();
    assert_eq!(back, v);
    assert!(serde_json::from_str::<Real>("\"nan\"").is_err());
    assert_eq!(serde_json::from_str::<Real>("3").unwrap(), Real(3.0));
}

#[test]
fn labeled_matrix_validates_shape() {
    let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, f64::NAN]);
    let lm = LabeledMatrix::new(&m, vec!["a".into(), "b".into()], vec!["c".into(), "d".into()]);
    let back = lm.to_matrix().unwrap();
    assert_eq!(back[(0, 1)], 2.0);
    assert!(back[(1, 1)].is_nan());
    assert_eq!(lm.to_csv().lines().next(), Some("label,c,d"));
    let mut bad = lm.clone();
    bad.rows[0].pop();
    assert!(bad.validate().is_err());
}

fn slutsky_report() -> AnalyzeReport {
    let entry = benchmarks::lookup("slutsky_hicks").unwrap();
    let an = entry.run(None, &Settings::default()).unwrap();
    let cfg = RunConfig {
        model: Some("slutsky_hicks".into()),
        ..RunConfig::default()
    };
    AnalyzeReport::new(cfg, vec![RunReport::from_analysis(&an, 1.25)])
}

#[test]
fn report_round_trips() {
    let r = slutsky_report();
    assert_eq!(r.schema_version, SCHEMA_VERSION);
    assert_eq!(r.outcome(), Outcome::Pass);
    let back = AnalyzeReport::from_json(&r.to_json().unwrap()).unwrap();
    assert_eq!(back, r);
    let run = &back.reports[0];
    assert!(run.check("conformance").is_some());
    assert!(run.csm(Recipe::Universal).is_some());
    let s = run.derived("slutsky").unwrap().to_matrix().unwrap();
    assert!((s[(0, 1)] - 0.25).abs() < 1e-12);
}

#[test]
fn report_without_timings_is_deterministic() {
    let a = slutsky_report().without_timings();
    let b = slutsky_report().without_timings();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
}

#[test]
fn report_rejects_other_schema_versions_and_unknown_fields() {
    let text = slutsky_report().to_json().unwrap();
    let bumped = text.replacen("\"schema_version\": 1", "\"schema_version\": 2", 1);
    assert!(matches!(AnalyzeReport::from_json(&bumped), Err(Error::Decode(_))));
    let extra = text.replacen("\"schema_version\": 1", "\"schema_version\": 1, \"extra\": 0", 1);
    assert!(AnalyzeReport::from_json(&extra).is_err());
    assert!(AnalyzeReport::from_json("[]").is_err());
}

#[test]
fn error_report_outcomes() {
    let cases = [
        (Error::Config("x".into()), Outcome::ConfigError, "config"),
        (Error::Solver("x".into()), Outcome::SolverFailure, "solver"),
        (Error::Domain("x".into()), Outcome::SolverFailure, "domain"),
        (Error::Decode("x".into()), Outcome::ConfigError, "decode"),
    ];
    for (e, outcome, kind) in cases {
        let r = RunReport::from_error("m", Pipeline::Analytic, Vec::new(), &e, 0.0);
        assert_eq!(r.outcome, outcome);
        assert_eq!(r.error.as_ref().unwrap().kind, kind);
    }
    assert_eq!(
        [Outcome::Pass, Outcome::CheckFailure, Outcome::SolverFailure, Outcome::ConfigError].map(Outcome::exit_code),
        [0, 1, 2, 3]
    );
}

#[test]
fn verify_report_round_trips() {
    let r = slutsky_report();
    let run = SuiteRun::from_report(&r.reports[0]);
    assert_eq!(run.failed, 0);
    assert!(run.table_line().contains("PASS"));
    let v = VerifyReport::new(vec![run]);
    assert_eq!(VerifyReport::from_json(&v.to_json().unwrap()).unwrap(), v);
}

#[test]
fn fuzz_corpus_run_config() {
    for (name, text) in corpus("run_config") {
        match RunConfig::from_toml(&text) {
            Ok(cfg) => assert_eq!(RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg, "{name}"),
            Err(e) => assert!(name.contains("unknown") || name.contains("negative"), "{name}: {e}"),
        }
    }
}

#[test]
fn fuzz_corpus_point_syntax() {
    for (name, text) in corpus("point_syntax") {
        let _ = Assignment::parse(&text);
        let _ = ToleranceSection::parse(&text);
        if let Ok(axis) = SweepAxis::parse(&text) {
            assert!(!axis.values.is_empty() && axis.values.iter().all(|v| v.is_finite()), "{name}");
        }
    }
}

#[test]
fn fuzz_corpus_report_decode() {
    for (name, text) in corpus("report_decode") {
        if name.starts_with("verify") {
            assert!(VerifyReport::from_json(&text).is_ok(), "{name}");
            continue;
        }
        let r = AnalyzeReport::from_json(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        for rep in &r.reports {
            for c in &rep.csms {
                c.matrix.to_matrix().unwrap();
            }
        }
    }
}
