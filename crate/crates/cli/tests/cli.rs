use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use nalgebra::DMatrix;
use serde_json::Value;
use tempfile::TempDir;

struct Run {
    code: i32,
    stderr: String,
    out: PathBuf,
}

impl Run {
    fn read(&self, name: &str) -> String {
        fs::read_to_string(self.out.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
    }

    fn json(&self, name: &str) -> Value {
        serde_json::from_str(&self.read(name)).unwrap()
    }

    /// Data rows of a CSV file, split into fields.
    fn rows(&self, name: &str) -> Vec<Vec<String>> {
        self.read(name).lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
    }
}

fn tebd(dir: &Path, command: &str, config: &str, out: &str, extra: &[&str]) -> Run {
    let cfg = dir.join(format!("{out}.toml"));
    fs::write(&cfg, config).unwrap();
    let out = dir.join(out);
    let result = Command::new(env!("CARGO_BIN_EXE_tebd"))
        .arg(command)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .env_remove("TEBD_ORACLE")
        .env_remove("TEBD_RESUME")
        .env_remove("TEBD_THREADS")
        .output()
        .unwrap();
    Run { code: result.status.code().unwrap(), stderr: String::from_utf8_lossy(&result.stderr).into(), out }
}

fn f(s: &str) -> f64 {
    s.parse().unwrap()
}

const FERRO8: &str = r#"
[model]
kind = "heisenberg_ferromagnet"
n = 8
field = 1.0
coupling = 1.0
"#;

const SPIN_WAVE: &str = r#"
[model]
kind = "heisenberg_ferromagnet"
n = 10
field = 1.0
coupling = 1.0

[initial]
kind = "basis"
configuration = [1, 1, 0, 0, 0, 0, 0, 0, 0, 0]
"#;

#[test]
fn ground_state_of_ferromagnet() {
    let dir = TempDir::new().unwrap();
    let r = tebd(dir.path(), "ground", FERRO8, "g", &["--oracle", "dense"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let c = r.json("convergence.json");
    assert_eq!(c["converged"], true);
    assert!((c["energy"].as_f64().unwrap() + 15.0).abs() < 1e-9);
    assert!((c["dense_ground_energy"].as_f64().unwrap() + 15.0).abs() < 1e-9);
    assert!(!r.rows("energy_trace.csv").is_empty());
    assert!(r.out.join("ground_state.mps").is_file());
}

/// Ground energy of the open transverse-field chain `-h Σσx - J Σσzσz` from its
/// free-fermion form: minus the sum of singular values of the bidiagonal (h, J) matrix.
fn free_fermion_energy(n: usize, h: f64, j: f64) -> f64 {
    let m = DMatrix::from_fn(n, n, |r, c| if r == c { h } else if c == r + 1 { j } else { 0.0 });
    -m.singular_values().sum()
}

#[test]
fn long_ising_chain_converges_at_bond_dimension_twenty() {
    let dir = TempDir::new().unwrap();
    let cfg = "[model]\nkind = \"transverse_ising\"\nn = 80\nfield = 1.0\ncoupling = 0.5\n\n[truncation]\nchi_max = 20\n";
    let r = tebd(dir.path(), "ground", cfg, "g", &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let c = r.json("convergence.json");
    assert_eq!(c["converged"], true);
    assert_eq!(c["max_chi"], 20);
    let exact = free_fermion_energy(80, 1.0, 0.5);
    let e = c["energy"].as_f64().unwrap();
    assert!((e - exact).abs() < 1e-6, "{e} vs {exact}");
}

#[test]
fn manifest_lists_digests() {
    let dir = TempDir::new().unwrap();
    let r = tebd(dir.path(), "ground", FERRO8, "g", &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let m = r.json("manifest.json");
    assert_eq!(m["command"], "ground");
    assert_eq!(m["exit_code"], 0);
    assert_eq!(m["config"]["model"]["n"], 8);
    let files = m["files"].as_array().unwrap();
    assert_eq!(files.len(), 3);
    for entry in files {
        let name = entry["name"].as_str().unwrap();
        let bytes = fs::read(r.out.join(name)).unwrap();
        assert_eq!(entry["bytes"].as_u64().unwrap() as usize, bytes.len());
        assert_eq!(entry["sha256"].as_str().unwrap().len(), 64);
    }
    assert!(m["stages"].as_array().unwrap().iter().any(|s| s["name"] == "imaginary time"));
}

#[test]
fn invalid_configurations_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let empty_stages = format!("{FERRO8}\n[imaginary]\nstages = []\n");
    let r = tebd(dir.path(), "ground", &empty_stages, "a", &[]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert!(r.stderr.contains("stages"));
    assert!(r.out.join("manifest.json").is_file());

    let unknown = format!("{FERRO8}\nflavour = 3\n");
    assert_eq!(tebd(dir.path(), "ground", &unknown, "b", &[]).code, 2);

    let no_evolution = tebd(dir.path(), "quench", SPIN_WAVE, "c", &[]);
    assert_eq!(no_evolution.code, 2);

    let ragged = format!("{SPIN_WAVE}\n[evolution]\ntotal_time = 1.0\ndelta = 0.3\n");
    assert_eq!(tebd(dir.path(), "quench", &ragged, "d", &[]).code, 2);

    let too_big = FERRO8.replace("n = 8", "n = 20");
    assert_eq!(tebd(dir.path(), "ground", &too_big, "e", &["--oracle", "dense"]).code, 2);

    let resume_elsewhere = tebd(dir.path(), "ground", FERRO8, "f", &["--resume", "x.json"]);
    assert_eq!(resume_elsewhere.code, 2);
}

#[test]
fn unconverged_ground_search_exits_with_three() {
    let dir = TempDir::new().unwrap();
    let cfg = format!(
        "{FERRO8}\n[initial]\nkind = \"tilted\"\ntheta = 1.2\n\n[imaginary]\nstages = [0.01]\nmax_steps_per_stage = 5\n"
    );
    let r = tebd(dir.path(), "ground", &cfg, "g", &[]);
    assert_eq!(r.code, 3, "{}", r.stderr);
    assert_eq!(r.json("convergence.json")["converged"], false);
    assert!(r.out.join("ground_state.mps").is_file());
    assert_eq!(r.json("manifest.json")["exit_code"], 3);
}

#[test]
fn zero_time_quench_records_initial_state() {
    let dir = TempDir::new().unwrap();
    let cfg = format!("{SPIN_WAVE}\n[evolution]\ntotal_time = 0.0\ndelta = 0.01\n");
    let r = tebd(dir.path(), "quench", &cfg, "q", &["--oracle", "two-magnon"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let chi = r.rows("chi_trace.csv");
    assert_eq!(chi.len(), 1);
    assert_eq!(f(&chi[0][0]), 0.0);
    assert_eq!(chi[0][2], "1");
    let fid = r.rows("fidelity.csv");
    assert_eq!(fid.len(), 1);
    assert!(f(&fid[0][1]) < 1e-14);
    let spectrum = r.rows("spectrum.csv");
    assert_eq!(spectrum.len(), 1);
    assert_eq!(f(&spectrum[0][2]), 1.0);
}

#[test]
fn quench_tracks_both_oracles() {
    let dir = TempDir::new().unwrap();
    let cfg = format!("{SPIN_WAVE}\n[evolution]\ntotal_time = 1.0\ndelta = 0.01\nsample_every = 10\n");
    let two = tebd(dir.path(), "quench", &cfg, "two", &["--oracle", "two-magnon"]);
    let dense = tebd(dir.path(), "quench", &cfg, "dense", &["--oracle", "dense"]);
    assert_eq!(two.code, 0, "{}", two.stderr);
    assert_eq!(dense.code, 0, "{}", dense.stderr);
    let a = two.rows("fidelity.csv");
    let b = dense.rows("fidelity.csv");
    assert_eq!(a.len(), 11);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x[0], y[0]);
        assert!(f(&x[1]) < 1e-6);
        assert!((f(&x[1]) - f(&y[1])).abs() < 1e-10);
    }
    let probs: f64 = two.rows("spectrum.csv").iter().filter(|r| f(&r[0]) == 1.0).map(|r| f(&r[2])).sum();
    assert!((probs - 1.0).abs() < 1e-10);
}

#[test]
fn quench_outputs_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = format!(
        "{SPIN_WAVE}\n[truncation]\nchi_max = 3\n\n[evolution]\ntotal_time = 2.0\ndelta = 0.02\nsample_every = 5\n"
    );
    let a = tebd(dir.path(), "quench", &cfg, "a", &[]);
    let b = tebd(dir.path(), "quench", &cfg, "b", &["--threads", "2"]);
    assert_eq!(a.code, 0, "{}", a.stderr);
    assert_eq!(b.code, 0, "{}", b.stderr);
    for name in ["spectrum.csv", "chi_trace.csv", "final_state.mps"] {
        assert_eq!(fs::read(a.out.join(name)).unwrap(), fs::read(b.out.join(name)).unwrap(), "{name}");
    }
    assert!(!a.out.join("fidelity.csv").exists());
}

#[test]
fn resumed_quench_matches_uninterrupted_run() {
    let dir = TempDir::new().unwrap();
    let full = format!(
        "{SPIN_WAVE}\n[truncation]\nchi_max = 3\n\n[evolution]\ndelta = 0.02\nsample_every = 5\ncheckpoint_every = 25\ntotal_time = 2.0\n"
    );
    let reference = tebd(dir.path(), "quench", &full, "full", &["--oracle", "two-magnon"]);
    assert_eq!(reference.code, 0, "{}", reference.stderr);
    let digest = reference.json("checkpoint.json")["config_sha256"].clone();

    // A shorter run leaves its last checkpoint at step 50; relabel it for the full configuration.
    let short = full.replace("total_time = 2.0", "total_time = 1.0");
    let partial = tebd(dir.path(), "quench", &short, "short", &["--oracle", "two-magnon"]);
    assert_eq!(partial.code, 0, "{}", partial.stderr);
    let mut cp = partial.json("checkpoint.json");
    assert_eq!(cp["step"], 50);
    cp["config_sha256"] = digest;
    let cp_path = partial.out.join("checkpoint.json");
    fs::write(&cp_path, serde_json::to_string(&cp).unwrap()).unwrap();
    let resume = ["--oracle", "two-magnon", "--resume", cp_path.to_str().unwrap()];

    let resumed = tebd(dir.path(), "quench", &full, "resumed", &resume);
    assert_eq!(resumed.code, 0, "{}", resumed.stderr);
    for name in ["spectrum.csv", "chi_trace.csv", "fidelity.csv", "final_state.mps"] {
        assert_eq!(fs::read(reference.out.join(name)).unwrap(), fs::read(resumed.out.join(name)).unwrap(), "{name}");
    }

    let other = full.replace("chi_max = 3", "chi_max = 4");
    assert_eq!(tebd(dir.path(), "quench", &other, "x", &resume).code, 2);
}

#[test]
fn snapshot_from_ground_run_seeds_a_quench() {
    let dir = TempDir::new().unwrap();
    let ground = tebd(dir.path(), "ground", FERRO8, "g", &[]);
    assert_eq!(ground.code, 0);
    let snap = ground.out.join("ground_state.mps");
    let cfg = format!(
        "{FERRO8}\n[initial]\nkind = \"snapshot\"\npath = {:?}\n\n[evolution]\ntotal_time = 0.5\ndelta = 0.05\n",
        snap.to_str().unwrap()
    );
    let r = tebd(dir.path(), "quench", &cfg, "q", &["--oracle", "dense"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    for row in r.rows("fidelity.csv") {
        assert!(f(&row[1]) < 1e-12);
    }
}

const ISING_CORRELATOR: &str = r#"
[model]
kind = "transverse_ising"
n = 8
field = 1.0
coupling = 0.5

[truncation]
chi_max = 16

[correlator]
source = 4
min_offset = -2
max_offset = 2
t_max = 1.0
t_step = 0.1
delta = 0.001
"#;

#[test]
fn identity_correlator_is_one() {
    let dir = TempDir::new().unwrap();
    let cfg = format!("{ISING_CORRELATOR}operator = \"identity\"\n");
    let r = tebd(dir.path(), "correlator", &cfg, "c", &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rows = r.rows("correlator.csv");
    assert_eq!(rows.len(), 5 * 11);
    for row in rows {
        assert!((f(&row[2]) - 1.0).abs() < 1e-4 && f(&row[3]).abs() < 1e-4, "{row:?}");
    }
    let s = r.json("correlator_summary.json");
    assert_eq!(s["peak_k"].as_f64().unwrap(), 0.0);
    assert_eq!(r.rows("structure_factor.csv").len(), 5 * 11);
}

#[test]
fn lowering_correlator_matches_dense_evolution() {
    let dir = TempDir::new().unwrap();
    let cfg = format!("{ISING_CORRELATOR}operator = \"sigma_minus\"\n");
    let r = tebd(dir.path(), "correlator", &cfg, "c", &["--oracle", "dense"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let s = r.json("correlator_summary.json");
    let dev = s["oracle_max_deviation"].as_f64().unwrap();
    assert!(dev < 1e-5, "deviation {dev}");
    assert!(s["ground_energy"].as_f64().unwrap() < -8.0);
}

#[test]
fn spin_flip_correlator_of_ferromagnet_matches_dense_evolution() {
    let dir = TempDir::new().unwrap();
    let cfg = format!(
        "{FERRO8}\n[correlator]\noperator = \"sigma_minus\"\nsource = 4\nmin_offset = -3\nmax_offset = 3\nt_max = 2.0\nt_step = 0.25\ndelta = 0.0005\n"
    );
    let r = tebd(dir.path(), "correlator", &cfg, "c", &["--oracle", "dense"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let s = r.json("correlator_summary.json");
    assert!((s["ground_energy"].as_f64().unwrap() + 15.0).abs() < 1e-9);
    let dev = s["oracle_max_deviation"].as_f64().unwrap();
    assert!(dev < 1e-6, "deviation {dev}");
    for row in r.rows("correlator.csv").iter().filter(|row| f(&row[1]) == 0.0) {
        let expected = if row[0] == "0" { 1.0 } else { 0.0 };
        assert!((f(&row[2]) - expected).abs() < 1e-9 && f(&row[3]).abs() < 1e-9, "{row:?}");
    }
}

#[test]
fn transform_of_a_single_mode_peaks_at_its_wavevector() {
    let dir = TempDir::new().unwrap();
    let (nx, nt, dt) = (16, 32, 0.25);
    let k0 = 2.0 * PI * 3.0 / nx as f64;
    let w0 = 2.0 * PI * 5.0 / (nt as f64 * dt);
    let mut text = String::from("x,t,re,im\n");
    for x in -8..8 {
        for k in 0..nt {
            let t = k as f64 * dt;
            let phase = k0 * x as f64 - w0 * t;
            text.push_str(&format!("{x},{t},{},{}\n", phase.cos(), phase.sin()));
        }
    }
    let input = dir.path().join("mode.csv");
    fs::write(&input, text).unwrap();
    let cfg = format!("[correlator]\ninput = {:?}\n", input.to_str().unwrap());
    let r = tebd(dir.path(), "correlator", &cfg, "c", &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let s = r.json("correlator_summary.json");
    assert!((s["peak_k"].as_f64().unwrap() - k0).abs() < 1e-12);
    assert!((s["peak_omega"].as_f64().unwrap() - w0).abs() < 1e-12);

    fs::write(&input, "x,t,re,im\n0,0,1,0\n0,0.1,1,0\n1,0,1,0\n").unwrap();
    assert_eq!(tebd(dir.path(), "correlator", &cfg, "d", &[]).code, 2);
}

#[test]
fn scaling_sweep_writes_one_row_per_point() {
    let dir = TempDir::new().unwrap();
    let cfg = "[scaling]\nn = [6]\nchi = [4, 8]\nsteps = 5\nwarmup_steps = 10\nrepeats = 1\n";
    let r = tebd(dir.path(), "scaling", cfg, "s", &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rows = r.rows("scaling.csv");
    assert_eq!(rows.len(), 2);
    for (row, chi) in rows.iter().zip(["4", "8"]) {
        assert_eq!(row[0], "6");
        assert_eq!(row[1], chi);
        assert_eq!(row[3], "5");
        assert!(f(&row[4]) > 0.0);
    }
}

#[test]
fn environment_supplies_defaults() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("g.toml");
    fs::write(&cfg, FERRO8).unwrap();
    let out = dir.path().join("env-out");
    let status = Command::new(env!("CARGO_BIN_EXE_tebd"))
        .arg("ground")
        .env("TEBD_CONFIG", &cfg)
        .env("TEBD_OUT", &out)
        .env("TEBD_ORACLE", "dense")
        .env_remove("TEBD_RESUME")
        .env_remove("TEBD_THREADS")
        .status()
        .unwrap();
    assert!(status.success());
    let c: Value = serde_json::from_str(&fs::read_to_string(out.join("convergence.json")).unwrap()).unwrap();
    assert!(c["dense_ground_energy"].is_number());
}
