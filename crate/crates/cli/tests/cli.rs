//! End-to-end tests that spawn the built binary, covering the documented
//! exit codes, output formats, the pipeline runner, and rerun determinism.

use ndarray::{array, Array2};
use std::path::Path;
use std::process::{Command, Output};
use tempfile::tempdir;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_koopman")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn koopman binary")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn error_json(out: &Output) -> serde_json::Value {
    serde_json::from_str(stderr(out).lines().last().expect("stderr line"))
        .expect("stderr is JSON")
}

/// Non-comment CSV lines.
fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .expect("read csv")
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| l.split(',').map(|t| t.trim().to_string()).collect())
        .collect()
}

// [PAPER] oracle: spec example — logistic r=3.5 from 0.2 gives 0.56 after
// one step (3.5·0.2·0.8), and --steps 10 yields 11 samples.
#[test]
fn simulate_logistic_example() {
    let dir = tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["simulate", "--system", "logistic:r=3.5", "--x0", "0.2", "--steps", "10", "--out", "t.csv"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = csv_rows(&dir.path().join("t.csv"));
    assert_eq!(rows.len(), 12); // header + 11 samples
    assert_eq!(rows[0], vec!["t", "x1"]);
    let x1: f64 = rows[1][1].parse().unwrap();
    let x2: f64 = rows[2][1].parse().unwrap();
    assert!((x1 - 0.2).abs() < 1e-15);
    assert!((x2 - 0.56).abs() < 1e-15);
}

// [TRIVIAL] spec example: spectrum of diag(1, 0.5, 0.25) lists those
// eigenvalues with zero imaginary part, descending.
#[test]
fn spectrum_diagonal_example() {
    let dir = tempdir().unwrap();
    let k = koopman_core::koopman::KoopmanMatrix::new(
        koopman_core::observables::Dictionary::linear(3, false).unwrap(),
        Array2::from_diag(&array![1.0, 0.5, 0.25]),
        koopman_core::koopman::Provenance::ClosedFormLinear,
        0.0,
    )
    .unwrap();
    let kpath = dir.path().join("k.json");
    koopman_core::io::write_koopman_json(&kpath, &k).unwrap();
    let out = run_in(
        dir.path(),
        &["spectrum", "--matrix", "k.json", "--out", "s.csv"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = csv_rows(&dir.path().join("s.csv"));
    assert_eq!(rows[0], vec!["re", "im", "defective_flag"]);
    let parsed: Vec<(f64, f64)> = rows[1..]
        .iter()
        .map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap()))
        .collect();
    assert_eq!(parsed, vec![(1.0, 0.0), (0.5, 0.0), (0.25, 0.0)]);
}

// [TRIVIAL] unknown subcommand: exit 1 and a JSON error naming the valid
// subcommands.
#[test]
fn unknown_subcommand_lists_valid_ones() {
    let dir = tempdir().unwrap();
    let out = run_in(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    let err = error_json(&out);
    assert_eq!(err["error"]["kind"], "usage");
    let msg = err["error"]["message"].as_str().unwrap();
    for name in ["simulate", "spectrum", "transport", "pipeline"] {
        assert!(msg.contains(name), "{msg}");
    }
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempdir().unwrap();
    for args in [&["--help"][..], &["--version"][..], &["simulate", "--help"][..]] {
        let out = run_in(dir.path(), args);
        assert_eq!(out.status.code(), Some(0), "{args:?}");
        assert!(!stdout(&out).is_empty());
    }
}

// Usage errors (bad flag combinations) exit 1 with kind "usage".
#[test]
fn usage_errors_exit_one() {
    let dir = tempdir().unwrap();
    // Discrete steps requested for a continuous system.
    let out = run_in(
        dir.path(),
        &["simulate", "--system", "rotation", "--x0", "1,0", "--steps", "5"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"]["kind"], "usage");

    // Gramian with nothing to compute.
    std::fs::write(dir.path().join("A.csv"), "# 2,2\n0.9,0\n0,0.5\n").unwrap();
    let out = run_in(dir.path(), &["gramian", "--A", "A.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"]["kind"], "usage");
}

// Numerical failures exit 2: exact construction on rank-deficient samples.
#[test]
fn conditioning_failure_exits_two() {
    let dir = tempdir().unwrap();
    std::fs::write(dir.path().join("pts.csv"), "# 4,1\n0.3\n0.3\n0.3\n0.3\n").unwrap();
    let out = run_in(
        dir.path(),
        &[
            "koopman", "--method", "exact", "--system", "logistic:r=3.0",
            "--dict", "monomials:n=1,d=2", "--samples", "pts.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert_eq!(error_json(&out)["error"]["kind"], "conditioning");
}

// Full workflow: simulate, fit by EDMD, eigenvalues of the fitted operator.
// [DERIVED] oracle: data from x_{k+1} = diag(0.9, 0.8) x_k on the linear
// dictionary with constant must produce eigenvalues {1, 0.9, 0.8}.
#[test]
fn simulate_edmd_spectrum_chain() {
    let dir = tempdir().unwrap();
    let sim = run_in(
        dir.path(),
        &[
            "simulate", "--system", "linear_discrete:a=0.9 0;0 0.8",
            "--x0", "0.7,0.3", "--steps", "40", "--out", "traj.csv",
        ],
    );
    assert!(sim.status.success(), "{}", stderr(&sim));
    let fit = run_in(
        dir.path(),
        &[
            "koopman", "--method", "edmd", "--dict", "linear:n=2,const=true",
            "--traj", "traj.csv", "--out", "k.json",
        ],
    );
    assert!(fit.status.success(), "{}", stderr(&fit));
    let spec = run_in(dir.path(), &["spectrum", "--matrix", "k.json", "--out", "s.csv"]);
    assert!(spec.status.success(), "{}", stderr(&spec));
    let rows = csv_rows(&dir.path().join("s.csv"));
    let eigs: Vec<f64> = rows[1..].iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(eigs.len(), 3);
    for (got, want) in eigs.iter().zip([1.0, 0.9, 0.8]) {
        assert!((got - want).abs() < 1e-8, "{got} vs {want}");
    }
}

// represent: Koopman-side outputs must track the simulated outputs.
#[test]
fn represent_tracks_dynamics() {
    let dir = tempdir().unwrap();
    // Operator for the map diag(0.9, 0.8) on the linear dictionary.
    let a = array![[0.9, 0.0], [0.0, 0.8]];
    let k = koopman_core::koopman::closed_form_linear(&a, true).unwrap();
    koopman_core::io::write_koopman_json(dir.path().join("k.json"), &k).unwrap();
    let g = koopman_core::observables::ObservableVector::scalar(
        k.dictionary.clone(),
        ndarray::array![0.0, 1.0, -2.0], // g(x) = x1 - 2 x2
    )
    .unwrap();
    koopman_core::io::write_observable_json(dir.path().join("g.json"), &g).unwrap();
    let out = run_in(
        dir.path(),
        &[
            "represent", "--system", "linear_discrete:a=0.9 0;0 0.8",
            "--koopman", "k.json", "--gbar", "g.json",
            "--x0", "0.4,-0.2", "--steps", "25", "--out", "rep.csv",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = csv_rows(&dir.path().join("rep.csv"));
    assert_eq!(rows[0], vec!["t", "y1_original", "y1_koopman"]);
    assert_eq!(rows.len(), 27); // header + 26 samples
    for r in &rows[1..] {
        let orig: f64 = r[1].parse().unwrap();
        let koop: f64 = r[2].parse().unwrap();
        assert!((orig - koop).abs() < 1e-12, "{orig} vs {koop}");
    }
    assert!(stdout(&out).contains("max discrepancy"));
}

// The output-directory override applies whenever --out is omitted.
#[test]
fn out_dir_env_var_sets_default_location() {
    let dir = tempdir().unwrap();
    let sub = dir.path().join("results");
    std::fs::create_dir(&sub).unwrap();
    let out = Command::new(bin())
        .args(["simulate", "--system", "logistic:r=2.0", "--x0", "0.1", "--steps", "3"])
        .current_dir(dir.path())
        .env("KOOPMAN_OUT_DIR", &sub)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(sub.join("trajectory.csv").is_file());
    assert!(!dir.path().join("trajectory.csv").exists());
}

// Transport command: support-loss warnings surface on stderr, outputs load
// back with the stored grid and box.
#[test]
fn transport_reports_warnings_and_round_trips() {
    let dir = tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "transport", "--system", "constant_advection:c=1",
            "--density", "gauss:c=3.2;s=0.3", "--grid", "128", "--box", "-4:4",
            "--t", "1.0", "--method", "sl", "--out", "phi.txt",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("warning:"), "{}", stderr(&out));
    let phi = koopman_core::io::read_density_text(dir.path().join("phi.txt")).unwrap();
    assert_eq!(phi.shape(), &[128]);
    // Reloading through --density file= must accept matching geometry flags.
    let again = run_in(
        dir.path(),
        &[
            "transport", "--system", "constant_advection:c=1",
            "--density", "file=phi.txt", "--grid", "128", "--box", "-4:4",
            "--t", "0.5", "--method", "pde", "--out", "phi2.txt",
        ],
    );
    assert!(again.status.success(), "{}", stderr(&again));
    let mismatched = run_in(
        dir.path(),
        &[
            "transport", "--system", "constant_advection:c=1",
            "--density", "file=phi.txt", "--grid", "64", "--box", "-4:4",
            "--t", "0.5", "--out", "phi3.txt",
        ],
    );
    assert_eq!(mismatched.status.code(), Some(1));
}

// Pipeline: the stacking workflow's report can only get more observable as
// initial conditions are added, references resolve, and the manifest lists
// inputs and outputs per step.
#[test]
fn pipeline_stacking_workflow() {
    let dir = tempdir().unwrap();
    std::fs::write(dir.path().join("e1.csv"), "# 1,2\n1.0,0.0\n").unwrap();
    std::fs::write(dir.path().join("e12.csv"), "# 2,2\n1.0,0.0\n0.0,1.0\n").unwrap();
    std::fs::write(
        dir.path().join("flow.toml"),
        r#"
[[step]]
name = "sim"
command = "simulate"
args = ["--system", "linear_discrete:a=0.9 0;0 0.8", "--x0", "0.7,0.3", "--steps", "60", "--out", "traj.csv"]

[[step]]
name = "fit"
command = "koopman"
args = ["--method", "edmd", "--dict", "linear:n=2,const=true", "--traj", "@sim.out", "--out", "k.json"]

[[step]]
name = "obs_one"
command = "observability"
args = ["--koopman", "@fit.out", "--x0-list", "e1.csv", "--out", "obs1.json"]

[[step]]
name = "obs_two"
command = "observability"
args = ["--koopman", "@fit.out", "--x0-list", "e12.csv", "--out", "obs2.json"]
"#,
    )
    .unwrap();
    let out = run_in(dir.path(), &["pipeline", "flow.toml", "--manifest", "manifest.json"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("step sim:"), "{text}");
    assert!(text.contains("pipeline: 4 steps complete"), "{text}");

    let obs1: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("obs1.json")).unwrap())
            .unwrap();
    let obs2: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("obs2.json")).unwrap())
            .unwrap();
    let d1 = obs1["unobservable_dimension"].as_u64().unwrap();
    let d2 = obs2["unobservable_dimension"].as_u64().unwrap();
    // [PAPER] oracle: stacking experiments can only shrink the unobservable
    // subspace; here it goes 1 -> 0.
    assert_eq!(d1, 1);
    assert_eq!(d2, 0);
    assert!(d2 <= d1);

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["steps"].as_array().unwrap().len(), 4);
    assert_eq!(manifest["steps"][1]["inputs"][0], "traj.csv");
    assert_eq!(manifest["steps"][1]["outputs"][0], "k.json");
}

// Pipeline validation runs before execution: a bad file must not leave any
// step outputs behind.
#[test]
fn pipeline_validation_precedes_execution() {
    let dir = tempdir().unwrap();
    let sim = r#"
[[step]]
name = "sim"
command = "simulate"
args = ["--system", "logistic:r=2.0", "--x0", "0.1", "--steps", "2", "--out", "traj.csv"]
"#;

    // Unknown dependency.
    std::fs::write(
        dir.path().join("missing.toml"),
        format!(
            "{sim}\n[[step]]\nname = \"fit\"\ncommand = \"koopman\"\nargs = [\"--traj\", \"@ghost.out\"]\n"
        ),
    )
    .unwrap();
    let out = run_in(dir.path(), &["pipeline", "missing.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("unknown step 'ghost'"), "{}", stderr(&out));
    assert!(!dir.path().join("traj.csv").exists(), "validation must precede execution");

    // Cycle, named in the message.
    std::fs::write(
        dir.path().join("cycle.toml"),
        r#"
[[step]]
name = "a"
command = "simulate"
args = []
needs = ["b"]

[[step]]
name = "b"
command = "simulate"
args = []
needs = ["a"]
"#,
    )
    .unwrap();
    let out = run_in(dir.path(), &["pipeline", "cycle.toml"]);
    assert_eq!(out.status.code(), Some(1));
    let msg = stderr(&out);
    assert!(msg.contains("cyclic dependency"), "{msg}");
    assert!(msg.contains("a -> b -> a") || msg.contains("b -> a -> b"), "{msg}");

    // Forward reference.
    std::fs::write(
        dir.path().join("forward.toml"),
        r#"
[[step]]
name = "fit"
command = "koopman"
args = ["--method", "edmd", "--dict", "linear:n=1,const=false", "--traj", "@later.out"]

[[step]]
name = "later"
command = "simulate"
args = ["--system", "logistic:r=2.0", "--x0", "0.1", "--steps", "2"]
"#,
    )
    .unwrap();
    let out = run_in(dir.path(), &["pipeline", "forward.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("declared later"), "{}", stderr(&out));

    // Empty pipeline: success and an empty manifest.
    std::fs::write(dir.path().join("empty.toml"), "").unwrap();
    let out = run_in(dir.path(), &["pipeline", "empty.toml", "--manifest", "m.json"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("m.json")).unwrap()).unwrap();
    assert_eq!(manifest["steps"].as_array().unwrap().len(), 0);
}

// [ACCEPTANCE 10] same config and seed give byte-identical outputs.
#[test]
fn acceptance_10_reruns_byte_identical() {
    let dir = tempdir().unwrap();
    let mut all_equal = true;
    let mut compared = 0;
    for (label, args) in [
        (
            "simulate",
            vec![
                "simulate", "--system", "rotation", "--x0", "1,0",
                "--horizon", "2.0", "--dt", "1e-2",
            ],
        ),
        (
            "koopman-seeded",
            vec![
                "koopman", "--method", "exact", "--system", "linear:a=-0.4 0;0 -1.1",
                "--dict", "monomials:n=2,d=2", "--t", "0.5", "--seed", "7",
            ],
        ),
        (
            "transport",
            vec![
                "transport", "--system", "rotation", "--density", "gauss:c=0,0.5;s=0.3",
                "--grid", "64x64", "--box", "-2:2,-2:2", "--t", "0.5", "--method", "sl",
                "--dt", "1e-2",
            ],
        ),
    ] {
        let run_a = dir.path().join(format!("{label}_a"));
        let run_b = dir.path().join(format!("{label}_b"));
        for run_dir in [&run_a, &run_b] {
            std::fs::create_dir(run_dir).unwrap();
            let out = Command::new(bin())
                .args(&args)
                .current_dir(dir.path())
                .env("KOOPMAN_OUT_DIR", run_dir)
                .output()
                .unwrap();
            assert!(out.status.success(), "{label}: {}", stderr(&out));
        }
        for entry in std::fs::read_dir(&run_a).unwrap() {
            let name = entry.unwrap().file_name();
            let a = std::fs::read(run_a.join(&name)).unwrap();
            let b = std::fs::read(run_b.join(&name)).unwrap();
            compared += 1;
            if a != b {
                all_equal = false;
                eprintln!("{label}: {} differs between reruns", name.to_string_lossy());
            }
        }
    }
    assert!(compared >= 3);
    println!(
        "ACCEPTANCE 10 (identical reruns): {} ({} files compared byte-for-byte)",
        if all_equal { "PASS" } else { "FAIL" },
        compared
    );
    assert!(all_equal);
}
