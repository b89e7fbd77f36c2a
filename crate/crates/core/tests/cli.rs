use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_msdiff"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn error_json(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().find_map(|l| l.strip_prefix("ERROR ")).expect("ERROR line on stderr");
    serde_json::from_str(line).unwrap()
}

fn write_scenario(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

const TWO_SPECIES: &str = r#"
[mixture]
n_species = 2
molar_masses = [1.0, 1.0]
friction = [1.0]
rho = 1.0

[[reactions]]
nu_plus = [1, 0]
nu_minus = [0, 1]
k_plus = 2.0
k_minus = 1.0

[grid]
dim = 1
lengths = [1.0]
cells = [16]

[initial.profile]
kind = "uniform"
value = [0.5, 0.5]

[run]
t_end = 0.05
cfl_safety = 0.9
output_interval = 0.01
"#;

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn simulate_shipped_relax_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["simulate", scenario("two_species_relax.toml").to_str().unwrap(), "--output", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let diag = fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
    assert!(diag.starts_with("t,Psi,min_y,max_y,sum_dev,dt,q_1,q_2\n"));
    let psi = column(&diag, "Psi");
    assert_eq!(psi.len(), 161);
    assert!(psi.windows(2).all(|w| w[1] <= w[0] + 1e-9));

    let snap = fs::read_to_string(dir.path().join("snap_0.05.csv")).unwrap();
    assert!(snap.starts_with("x,y_1,y_2\n"));
    assert_eq!(snap.lines().count(), 65);

    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    for key in ["final_free_energy", "conserved_drift", "min_component", "wall_time_s"] {
        assert!(summary.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn simulate_is_byte_identical_across_runs_and_thread_counts() {
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let path = scenario("two_blob_2d.toml");
    for (dir, threads) in dirs.iter().zip(["1", "4", "4"]) {
        let out = bin()
            .args(["simulate", path.to_str().unwrap(), "--output", dir.path().to_str().unwrap()])
            .env("MSDIFF_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let read = |dir: &Path, name: &str| fs::read(dir.join(name)).unwrap();
    for name in ["diagnostics.csv", "snap_0.csv", "snap_0.05.csv"] {
        let first = read(dirs[0].path(), name);
        for d in &dirs[1..] {
            assert_eq!(first, read(d.path(), name), "{name} differs");
        }
    }
    let summary = |dir: &Path| {
        let mut v: Value = serde_json::from_slice(&read(dir, "summary.json")).unwrap();
        v.as_object_mut().unwrap().remove("wall_time_s");
        v
    };
    assert_eq!(summary(dirs[0].path()), summary(dirs[1].path()));
    assert_eq!(summary(dirs[0].path()), summary(dirs[2].path()));
}

#[test]
fn simulate_rejects_mass_violating_network() {
    let dir = tempfile::tempdir().unwrap();
    let text = TWO_SPECIES.replace("molar_masses = [1.0, 1.0]", "molar_masses = [1.0, 2.0]");
    let path = write_scenario(dir.path(), "bad.toml", &text);
    let out = run(&["simulate", path.to_str().unwrap(), "--output", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["kind"], "MassNotConserved");
}

#[test]
fn simulate_rejects_cfl_above_bound_and_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    for (i, text) in [
        TWO_SPECIES.replace("cfl_safety = 0.9", "cfl_safety = 0.95"),
        TWO_SPECIES.replace("rho = 1.0", "rho = 1.0\ntemperature = 300.0"),
        TWO_SPECIES.replace("k_plus = 2.0", "k_plus = -2.0"),
    ]
    .iter()
    .enumerate()
    {
        let path = write_scenario(dir.path(), &format!("s{i}.toml"), text);
        let out = run(&["simulate", path.to_str().unwrap(), "--output", dir.path().join("o").to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(1), "case {i}");
        assert_eq!(error_json(&out)["kind"], "InvalidSpec");
    }
}

#[test]
fn simulate_reports_rejected_steps_as_numerical_errors() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
[mixture]
n_species = 3
molar_masses = [1.0, 1.0, 2.0]
friction = [1.0, 2.0, 3.0]
rho = 1.0

[grid]
dim = 1
lengths = [1.0]
cells = [64]

[initial.profile]
kind = "uniform"
value = [0.3, 0.3, 0.4]

[[initial.zero_masks]]
species = 1
lower = 0.0
upper = 0.5

[run]
t_end = 0.01
cfl_safety = 0.9
output_interval = 0.001
"#;
    let path = write_scenario(dir.path(), "sharp.toml", text);
    let out = run(&["simulate", path.to_str().unwrap(), "--output", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["kind"], "StepRejected");
}

#[test]
fn equilibrium_command() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(dir.path(), "two.toml", TWO_SPECIES);
    let out = run(&["equilibrium", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let json = stdout_json(&out);
    assert!((json["c_star"][0].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-10);
    assert!((json["c_star"][1].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-10);
    assert_eq!(json["manifold_dim"], 0);

    let inconsistent = format!("{TWO_SPECIES}\n[[reactions]]\nnu_plus = [1, 0]\nnu_minus = [0, 1]\nk_plus = 1.0\nk_minus = 1.0\n");
    let path = write_scenario(dir.path(), "weg.toml", &inconsistent);
    let out = run(&["equilibrium", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_json(&out)["kind"], "NoEquilibrium");

    let no_reactions = TWO_SPECIES
        .replace("[[reactions]]\nnu_plus = [1, 0]\nnu_minus = [0, 1]\nk_plus = 2.0\nk_minus = 1.0\n", "")
        .replace("value = [0.5, 0.5]", "value = [0.25, 0.75]");
    let path = write_scenario(dir.path(), "inert.toml", &no_reactions);
    let json = stdout_json(&run(&["equilibrium", path.to_str().unwrap()]));
    assert_eq!(json["manifold_dim"], 1);
    assert_eq!(json["c_star"][0].as_f64().unwrap(), 0.25);
    assert_eq!(json["c_star"][1].as_f64().unwrap(), 0.75);
}

#[test]
fn spectrum_command() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(dir.path(), "two.toml", TWO_SPECIES);
    let out = run(&["spectrum", path.to_str().unwrap(), "--k-max", "8"]);
    assert_eq!(out.status.code(), Some(0));
    let json = stdout_json(&out);
    assert!((json["spectral_gap"].as_f64().unwrap() - 3.0).abs() < 1e-9);
    assert_eq!(json["kernel_dim_mode0"], 0);
    assert_eq!(json["semisimple"], true);
    assert_eq!(json["modes"].as_array().unwrap().len(), 9);
    assert_eq!(json["modes"][1]["eigenvalues"][0].as_array().unwrap().len(), 2);

    let json = stdout_json(&run(&["spectrum", scenario("three_species_assoc.toml").to_str().unwrap()]));
    assert_eq!(json["kernel_dim_mode0"], 1);

    let no_reactions = TWO_SPECIES.replace("[[reactions]]\nnu_plus = [1, 0]\nnu_minus = [0, 1]\nk_plus = 2.0\nk_minus = 1.0\n", "");
    let path = write_scenario(dir.path(), "inert.toml", &no_reactions);
    let json = stdout_json(&run(&["spectrum", path.to_str().unwrap()]));
    let pi2 = std::f64::consts::PI.powi(2);
    assert!((json["spectral_gap"].as_f64().unwrap() - pi2).abs() < 1e-9);

    let out = run(&["spectrum", path.to_str().unwrap(), "--k-max", "4"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_command() {
    let out = run(&["verify", "--n-species", "2..8", "--trials", "500", "--seed", "42"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 10);

    let out = run(&["verify", "--n-species", "3..5", "--trials", "50", "--mutate", "flip-friction-offdiag"]);
    assert_eq!(out.status.code(), Some(4));
    let err = error_json(&out);
    assert_eq!(err["kind"], "PropertyFailure");
    let failing: Vec<&str> = err["failing"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(failing.contains(&"friction_kernel_y"));

    assert_eq!(run(&["verify", "--trials", "0"]).status.code(), Some(1));
    assert_eq!(run(&["verify", "--n-species", "1..3"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn missing_scenario_is_a_config_error() {
    let out = run(&["equilibrium", "/nonexistent/scenario.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["kind"], "InvalidSpec");
}

#[test]
fn bad_thread_variable_is_a_config_error() {
    let out = bin().args(["verify", "--trials", "1"]).env("MSDIFF_THREADS", "zero").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}
