use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mfg_pricing::cli::{parse_config, run_scenario, ScenarioKind};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mfg-pricing"))
}

fn run(dir: &Path, doc: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("scenario.cfg");
    fs::write(&cfg, doc).unwrap();
    bin()
        .arg("solve")
        .arg(&cfg)
        .arg("--quiet")
        .args(extra)
        .output()
        .unwrap()
}

fn read_column(path: &Path, column: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == column).unwrap();
    r.records()
        .map(|rec| rec.unwrap()[idx].parse().unwrap())
        .collect()
}

const OUTPUTS: [&str; 6] = [
    "quotes.csv",
    "values.csv",
    "population.csv",
    "mean_quote.csv",
    "metrics.csv",
    "residuals.csv",
];

#[test]
fn equilibrium_run_writes_all_artifacts() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = run(
        tmp.path(),
        "kind = equilibrium\n",
        &["--out", out.to_str().unwrap(), "--n-steps", "1000"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in OUTPUTS {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let manifest = fs::read_to_string(out.join("manifest.cfg")).unwrap();
    assert!(manifest.contains("grid.n_steps = 1000"));
    assert!(manifest.contains("iterations ="));
    assert!(manifest.contains("final_residual ="));
    assert_eq!(read_column(&out.join("mean_quote.csv"), "delta_bar").len(), 1001);
    assert_eq!(read_column(&out.join("quotes.csv"), "delta_star").len(), 1001 * 5);
    assert_eq!(read_column(&out.join("population.csv"), "P").len(), 1001 * 6);
}

#[test]
fn forced_non_convergence_exits_three_with_one_residual() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let doc = "kind = equilibrium\nsolver.max_iter = 1\nsolver.tol = 0\ngrid.n_steps = 500\n";
    let o = run(tmp.path(), doc, &["--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(read_column(&out.join("residuals.csv"), "residual").len(), 1);
    assert!(out.join("manifest.cfg").is_file());
}

#[test]
fn config_errors_exit_two() {
    let tmp = TempDir::new().unwrap();
    let o = run(tmp.path(), "kind = equilibrium\nintensity.kappa = \"abc\"\n", &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("intensity.kappa") && err.contains("line 2"), "{err}");

    let o = run(tmp.path(), "kind = oversell\n", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("q_min"));
}

#[test]
fn unstable_grid_exits_four_and_keeps_diagnostics() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = run(
        tmp.path(),
        "kind = equilibrium\ngrid.n_steps = 10\n",
        &["--out", out.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(4));
    assert!(fs::read_to_string(out.join("error.txt")).unwrap().contains("unstable"));
    assert!(out.join("manifest.cfg").is_file());
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let doc = "kind = validate\ngrid.n_steps = 1000\nvalidate.n_paths = 2000\nvalidate.shifts = -0.1, 0.1\n";
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        let o = run(tmp.path(), doc, &["--out", out.to_str().unwrap(), "--seed", "42"]);
        assert_eq!(o.status.code(), Some(0));
    }
    for f in OUTPUTS.iter().chain(&["montecarlo.csv", "histogram.csv"]) {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn manifest_reproduces_the_run() {
    let tmp = TempDir::new().unwrap();
    let first = tmp.path().join("first");
    let doc = "kind = price_cap\nbounds.upper = 1\ngrid.n_steps = 800\nintensity.kappa = 1.1\n";
    let o = run(tmp.path(), doc, &["--out", first.to_str().unwrap(), "--seed", "9"]);
    assert_eq!(o.status.code(), Some(0));
    let manifest = fs::read_to_string(first.join("manifest.cfg")).unwrap();

    let mut cfg = parse_config(&manifest).unwrap();
    assert_eq!(cfg.kind, ScenarioKind::PriceCap);
    assert_eq!(cfg.seed, 9);
    assert_eq!(cfg.model.intensity.kappa, 1.1);
    assert_eq!(parse_config(&cfg.to_document()).unwrap(), cfg);

    let second = tmp.path().join("second");
    cfg.output = Some(second.clone());
    run_scenario(&cfg, &second, true).unwrap();
    for f in OUTPUTS {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f}");
        assert_eq!(
            fs::read(first.join("uncapped").join(f)).unwrap(),
            fs::read(second.join("uncapped").join(f)).unwrap()
        );
    }
}

#[test]
fn json_config_is_accepted() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let doc = r#"{"kind": "oversell", "inventory": {"q_min": -2}, "grid": {"n_steps": 1000}}"#;
    let o = run(tmp.path(), doc, &["--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(out.join("cancellation.txt")).unwrap();
    let p: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("probability = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(p > 0.0 && p < 1.0);
}

#[test]
fn reference_quotes_fall_with_inventory_and_dip_before_the_end() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = run(tmp.path(), "kind = reference\ngrid.n_steps = 2000\n", &["--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let f = read_column(&out.join("quotes.csv"), "delta_star");
    let at = |j: usize, q: usize| f[j * 5 + q - 1];
    for j in 0..=2000 {
        for q in 1..5 {
            assert!(at(j, q + 1) <= at(j, q));
        }
    }
    // Well-stocked agents cut prices first, then raise them into the close.
    for q in 3..=5 {
        let (argmin, min) = (0..=2000)
            .map(|j| (j, at(j, q)))
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        assert!(argmin > 0 && argmin < 2000, "q = {q}");
        assert!(at(0, q) > min && at(2000, q) > min, "q = {q}");
    }
}

#[test]
fn beta_sweep_writes_one_set_per_value() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let doc = "kind = beta_sweep\nsweep.values = 0.3, 0.9\ngrid.n_steps = 2000\n";
    let o = run(tmp.path(), doc, &["--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let low = read_column(&out.join("beta_0.3").join("mean_quote.csv"), "delta_bar");
    let high = read_column(&out.join("beta_0.9").join("mean_quote.csv"), "delta_bar");
    assert!(high.iter().zip(&low).all(|(h, l)| h <= l));
    assert_eq!(read_column(&out.join("sweep.csv"), "beta"), vec![0.3, 0.9]);
}

#[test]
fn robustness_writes_standard_errors() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let doc = "kind = robustness\nrobustness.trials = 4\ngrid.n_steps = 1000\n";
    let o = run(tmp.path(), doc, &["--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let se = read_column(&out.join("stderr_per_t.csv"), "std_error");
    assert_eq!(se.len(), 1001);
    assert!(se.iter().all(|s| *s <= 1e-12));
}
