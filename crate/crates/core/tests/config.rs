//! Configuration parsing, validation and the run orchestration.

use std::fs;

use nonlocal_ocp::app::{error_json, exit_code, run, Subcommand, MANIFEST};
use nonlocal_ocp::config::{evaluate, parse_config, parse_str, finish, read_column, DataSpec, Overrides, RunConfig};
use nonlocal_ocp::{Error, Variant};

fn from_toml(text: &str) -> nonlocal_ocp::Result<RunConfig> {
    finish(parse_str(text, false)?, &Overrides::default())
}

fn violations(text: &str) -> Vec<String> {
    match from_toml(text) {
        Err(Error::Validation(v)) => v,
        other => panic!("expected validation failure, got {other:?}"),
    }
}

#[test]
fn minimal_config_takes_defaults() {
    let config = from_toml("").unwrap();
    assert_eq!(config, RunConfig::default());
    assert_eq!(config.problem.m, 8);
    assert_eq!(config.problem.variant, Variant::Regional);
    assert_eq!(config.regularization.count, 6);
    assert_eq!(config.output.formats, ["csv", "json"]);
    let schedule = config.schedule().unwrap();
    assert_eq!(schedule.points.len(), 6);
    assert_eq!(schedule.points[0], (0.25, 2));
}

#[test]
fn regional_rejects_small_s_full_accepts_it() {
    let v = violations("[problem]\ns = 0.4\n");
    assert!(v.iter().any(|m| m.contains("regional variant requires 1/2<s<1")), "{v:?}");
    let config = from_toml("[problem]\ns = 0.4\nvariant = \"full\"\nr_trunc = 1.5\n").unwrap();
    assert_eq!(config.problem.variant, Variant::Full);
    assert!(config.discretization().is_ok());
}

#[test]
fn all_violations_are_reported() {
    let v = violations("[problem]\np = 1.5\nm = 0\n\n[regularization]\nepsilon = -1.0\n\n[optimizer]\ntol = 0.0\n\n[output]\nformats = [\"xml\"]\n");
    for needle in ["p must satisfy", "m must be", "regularization", "optimizer.tol", "xml"] {
        assert!(v.iter().any(|m| m.contains(needle)), "missing {needle}: {v:?}");
    }
    assert!(v.len() >= 5);
}

#[test]
fn full_variant_needs_a_radius() {
    let v = violations("[problem]\nvariant = \"full\"\n");
    assert!(v.iter().any(|m| m.contains("truncation radius required")), "{v:?}");
    let v = violations("[problem]\nr_trunc = 2.0\n");
    assert!(v.iter().any(|m| m.contains("only applies to the full variant")), "{v:?}");
}

#[test]
fn bounds_below_alpha_are_rejected() {
    let v = violations("[data]\nalpha = 0.8\nlower = 0.5\n");
    assert!(v.iter().any(|m| m.contains("alpha ≤ lower")), "{v:?}");
}

#[test]
fn unknown_keys_are_rejected() {
    assert!(matches!(parse_str("[problem]\nsigma = 0.3\n", false), Err(Error::Config(_))));
}

#[test]
fn expressions_see_x() {
    let at = [0.0, 0.25, 1.0];
    let v = evaluate("2*x + sqrt(4) + step(x - 0.5) + exp(0) + ln(1)", &at).unwrap();
    assert_eq!(v, vec![3.0, 3.5, 6.0]);
    assert!(evaluate("2*", &at).is_err());
    assert!(evaluate("unknown(x)", &at).is_err());
}

#[test]
fn data_sources_agree() {
    let dir = tempfile::tempdir().unwrap();
    let column: Vec<String> = (1..=4).map(|j| format!("{j},{}", 0.2 * j as f64)).collect();
    fs::write(dir.path().join("f.csv"), format!("j,f\n{}\n", column.join("\n"))).unwrap();
    assert_eq!(read_column(&dir.path().join("f.csv")).unwrap(), vec![0.2, 0.4, 0.6000000000000001, 0.8]);

    let toml = "[problem]\nm = 4\n\n[data]\nf = { csv = \"f.csv\" }\nxi = [0.1, 0.2, 0.3, 0.4]\nupper = \"1 + x\"\n";
    fs::write(dir.path().join("run.toml"), toml).unwrap();
    let config = parse_config(&dir.path().join("run.toml"), &Overrides::default()).unwrap();
    let data = config.sample().unwrap();
    assert_eq!(data.f[3], 0.8);
    assert_eq!(data.xi, vec![0.1, 0.2, 0.3, 0.4]);
    // bounds live on the offsets k h, h = 1/5
    assert!((data.upper[0] - 1.2).abs() < 1e-15 && (data.upper[4] - 2.0).abs() < 1e-15);
    assert!(data.lower.iter().all(|&v| v == 0.5));

    let resolved = config.resolved().unwrap();
    assert!(matches!(resolved.data.f, DataSpec::Values(_)));
    assert_eq!(resolved.output.dir, None);
}

#[test]
fn wrong_lengths_and_missing_files_fail() {
    assert!(matches!(from_toml("[problem]\nm = 3\n\n[data]\nf = [1.0, 2.0]\n"), Err(Error::Validation(_))));
    let v = violations("[data]\nf = { csv = \"/nonexistent/f.csv\" }\n");
    assert!(v.iter().any(|m| m.contains("file not found")), "{v:?}");
}

#[test]
fn overrides_win() {
    let overrides = Overrides { p: Some(4.0), m: Some(5), seed: Some(9), epsilon: Some(1e-2), ..Default::default() };
    let config = finish(parse_str("[problem]\np = 3.0\n", false).unwrap(), &overrides).unwrap();
    assert_eq!((config.problem.p, config.problem.m, config.solver.seed), (4.0, 5, 9));
    assert_eq!(config.regularization.epsilon, 1e-2);
}

#[test]
fn zero_force_gives_zero_state() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = from_toml("[problem]\nm = 5\n\n[data]\nf = 0.0\n").unwrap();
    config.output.dir = Some(dir.path().to_path_buf());
    let outcome = run(Subcommand::SolveState, &config).unwrap();
    assert!(outcome.success);
    let u = read_column(&dir.path().join("state.csv")).unwrap();
    assert_eq!(u, vec![0.0; 5]);
}

#[test]
fn manifest_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = from_toml("[problem]\nm = 4\n\n[data]\nf = \"10*x\"\n").unwrap();
    config.output.dir = Some(dir.path().join("a"));
    let outcome = run(Subcommand::SolveOcp, &config).unwrap();
    let text = fs::read_to_string(dir.path().join("a").join(MANIFEST)).unwrap();
    let manifest: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(manifest, outcome.manifest);
    assert_eq!(manifest["subcommand"], "solve-ocp");
    assert_eq!(manifest["blend_delta"], 4.0 / 27.0);
    assert_eq!(manifest["files"].as_array().unwrap().len(), 3);

    let echoed = parse_str(&text, true).unwrap();
    assert_eq!(echoed, config.resolved().unwrap());
    let replay = parse_config(&dir.path().join("a").join(MANIFEST), &Overrides { out: Some(dir.path().join("b")), ..Default::default() }).unwrap();
    run(Subcommand::SolveOcp, &replay).unwrap();
    for name in ["control.csv", "state.csv", "objective_history.csv", MANIFEST] {
        assert_eq!(fs::read(dir.path().join("a").join(name)).unwrap(), fs::read(dir.path().join("b").join(name)).unwrap(), "{name}");
    }
}

#[test]
fn check_invariants_passes_on_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = from_toml("[problem]\nm = 5\n\n[solver]\nprobes = 50\n").unwrap();
    config.output.dir = Some(dir.path().to_path_buf());
    let outcome = run(Subcommand::CheckInvariants, &config).unwrap();
    assert!(outcome.success, "{}", outcome.manifest["results"]);
}

#[test]
fn errors_map_to_json_and_exit_codes() {
    let err = from_toml("[problem]\ns = 0.4\np = 1.0\n").unwrap_err();
    let value = error_json(&err);
    assert_eq!(value["error"]["kind"], "validation");
    assert_eq!(value["error"]["details"].as_array().unwrap().len(), 2);
    assert_eq!(exit_code(&err), 2);
    assert_eq!(exit_code(&Error::NonConvergence { iterations: 3, residual: 1.0 }), 3);
    assert_eq!(exit_code(&Error::Io(std::io::Error::other("disk"))), 4);
}

#[test]
fn subcommand_names_round_trip() {
    for command in Subcommand::ALL {
        assert_eq!(command.name().parse::<Subcommand>().unwrap(), command);
    }
    assert!("solve".parse::<Subcommand>().is_err());
}
