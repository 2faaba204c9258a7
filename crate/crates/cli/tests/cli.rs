use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pairwalk::matcore::sigma_z;
use pairwalk::qwf::{self, matrices_from_qwf, matrices_to_qwf, Payload, QwfArray};
use pairwalk::relativity::{identity_tetrad, standard_gammas};
use pairwalk::ComplexMatrix;
use tempfile::TempDir;

fn run(dir: &Path, sub: &str, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_pairwalk"))
        .arg(sub)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn snapshots(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir.join("out"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("snapshot_"))
        .collect();
    v.sort();
    v
}

#[test]
fn synth_flat_passes_all_gates() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), "synth", "scenario = \"flat-1d\"", &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(d.path().join("out/diagnostics.csv")).unwrap();
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let value: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert!(value <= 1e-12, "{line}");
        rows += 1;
    }
    assert_eq!(rows, 17);
    assert!(d.path().join("out/coins_axis0.qwf").exists());
    assert!(d.path().join("out/coins_axis0_slots.qwf").exists());
}

#[test]
fn superluminal_coefficient_is_rejected() {
    let d = TempDir::new().unwrap();
    let n = 16;
    let b = vec![sigma_z().scale_real(1.5); n];
    let c = vec![ComplexMatrix::zeros(2, 2); n];
    qwf::write_file(&d.path().join("b.qwf"), &matrices_to_qwf(&[n], &b).unwrap()).unwrap();
    qwf::write_file(&d.path().join("c.qwf"), &matrices_to_qwf(&[n], &c).unwrap()).unwrap();
    let cfg = format!(
        "scenario = \"custom\"\nb1_files = [\"{}\"]\nc_file = \"{}\"",
        d.path().join("b.qwf").display(),
        d.path().join("c.qwf").display()
    );
    let o = run(d.path(), "synth", &cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("superluminal coefficient"), "{}", stderr(&o));
}

#[test]
fn custom_files_synthesize() {
    let d = TempDir::new().unwrap();
    let n = 16;
    let b = vec![sigma_z().scale_real(0.5); n];
    let c = vec![ComplexMatrix::zeros(2, 2); n];
    qwf::write_file(&d.path().join("b.qwf"), &matrices_to_qwf(&[n], &b).unwrap()).unwrap();
    qwf::write_file(&d.path().join("c.qwf"), &matrices_to_qwf(&[n], &c).unwrap()).unwrap();
    let cfg = format!(
        "scenario = \"custom\"\nsteps = 4\nb1_files = [\"{}\"]\nc_file = \"{}\"",
        d.path().join("b.qwf").display(),
        d.path().join("c.qwf").display()
    );
    let o = run(d.path(), "evolve", &cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(snapshots(d.path()).len(), 2);
}

#[test]
fn missing_keys_are_named() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), "synth", "steps = 3", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("scenario"), "{}", stderr(&o));
    let o = run(d.path(), "evolve", "scenario = \"flat-1d\"", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("steps"), "{}", stderr(&o));
}

#[test]
fn unknown_key_fails_before_any_output() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), "evolve", "scenario = \"flat-1d\"\nsteps = 2\ncolour = 1", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("colour"), "{}", stderr(&o));
    assert!(!d.path().join("out").exists());
}

#[test]
fn long_flat_run_conserves_norm() {
    let d = TempDir::new().unwrap();
    let o = run(
        d.path(),
        "evolve",
        "scenario = \"flat-1d\"\nsteps = 1000\nsnapshot_every = 500",
        &[],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(d.path().join("out/norm.csv")).unwrap();
    assert_eq!(text.lines().count(), 1002);
    let last = text.lines().last().unwrap();
    assert!(last.starts_with("1000,"));
    let drift: f64 = last.split(',').nth(3).unwrap().parse().unwrap();
    assert!(drift <= 1e-10);
    assert_eq!(
        snapshots(d.path()),
        vec!["snapshot_0.qwf", "snapshot_1000.qwf", "snapshot_500.qwf"]
    );
}

#[test]
fn single_step_writes_two_snapshots() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), "evolve", "scenario = \"flat-massive-1d\"\nsteps = 1", &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(snapshots(d.path()), vec!["snapshot_0.qwf", "snapshot_1.qwf"]);
}

#[test]
fn two_dimensional_snapshots_carry_extents() {
    let d = TempDir::new().unwrap();
    let o = run(
        d.path(),
        "evolve",
        "scenario = \"flat-2d\"\ndims = [16, 8]\nsteps = 2",
        &[],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let a = qwf::read_file(&d.path().join("out/snapshot_2.qwf")).unwrap();
    assert_eq!(a.shape(), &[16, 8, 2]);
}

#[test]
fn converge_presets_pass() {
    for scenario in ["flat-massive-1d", "curved-1d"] {
        let d = TempDir::new().unwrap();
        let o = run(d.path(), "converge", &format!("scenario = \"{scenario}\""), &[]);
        assert_eq!(o.status.code(), Some(0), "{scenario}: {}", stderr(&o));
        let text = fs::read_to_string(d.path().join("out/convergence.csv")).unwrap();
        assert!(text.starts_with("eps,error,order,runtime_seconds"));
        assert_eq!(text.lines().count(), 4);
    }
}

#[test]
fn short_ladder_rejected() {
    let d = TempDir::new().unwrap();
    let o = run(
        d.path(),
        "converge",
        "scenario = \"flat-massive-1d\"\nladder = [64, 128]",
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("ladder too short"), "{}", stderr(&o));
}

fn dump(dir: &Path, name: &str) -> Vec<ComplexMatrix> {
    matrices_from_qwf(qwf::read_file(&dir.join("out").join(name)).unwrap())
        .unwrap()
        .1
}

#[test]
fn dirac_flat_dumps_match_alpha() {
    let d = TempDir::new().unwrap();
    let o = run(
        d.path(),
        "dirac",
        "scenario = \"minkowski-3d\"\ndims = [8, 8, 8]\nsteps = 2\nmass = 1.0",
        &[],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let g = standard_gammas();
    for axis in 0..3 {
        let b = dump(d.path(), &format!("b1_axis{axis}.qwf"));
        assert_eq!(b.len(), 512);
        for m in &b {
            assert!((m + &g.alpha[axis + 1]).max_abs() <= 1e-15);
        }
    }
    for m in dump(d.path(), "c.qwf") {
        assert!((&m + &g.beta).max_abs() <= 1e-15);
    }
    assert_eq!(snapshots(d.path()).len(), 2);
}

#[test]
fn dirac_massless_potential_is_zero() {
    let d = TempDir::new().unwrap();
    let o = run(
        d.path(),
        "dirac",
        "scenario = \"minkowski-3d\"\ndims = [8, 8, 8]\nsteps = 1\nmass = 0.0",
        &[],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dump(d.path(), "c.qwf").iter().all(|m| m.max_abs() == 0.0));
}

#[test]
fn degenerate_tetrad_rejected() {
    let d = TempDir::new().unwrap();
    let mut e = identity_tetrad();
    e[0] = 0.0;
    let payload: Vec<f64> = std::iter::repeat_n(e, 64).flatten().collect();
    let a = QwfArray::new(vec![4, 4, 4, 4, 4], Payload::Real(payload)).unwrap();
    qwf::write_file(&d.path().join("t.qwf"), &a).unwrap();
    let cfg = format!(
        "scenario = \"minkowski-3d\"\nsteps = 1\ntetrad_file = \"{}\"",
        d.path().join("t.qwf").display()
    );
    let o = run(d.path(), "dirac", &cfg, &[]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("degenerate tetrad"), "{}", stderr(&o));
}

#[test]
fn superluminal_tetrad_reports_rescale_hint() {
    let d = TempDir::new().unwrap();
    let cfg =
        "scenario = \"minkowski-3d\"\ndims = [8, 8, 8]\nsteps = 1\ntetrad = \"diagonal-sine\"\ntetrad_amplitude = 0.3";
    let o = run(d.path(), "dirac", cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("rescale"), "{}", stderr(&o));
}

#[test]
fn seed_is_recorded_and_runs_are_thread_independent() {
    let cfg = "scenario = \"flat-2d\"\ndims = [16, 16]\nsteps = 3\ninitial = \"random\"";
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let oa = run(a.path(), "evolve", cfg, &["--seed", "17", "--threads", "1"]);
    let ob = run(b.path(), "evolve", cfg, &["--seed", "17", "--threads", "4"]);
    assert_eq!(oa.status.code(), Some(0), "{}", stderr(&oa));
    assert_eq!(ob.status.code(), Some(0), "{}", stderr(&ob));
    let resolved = fs::read_to_string(a.path().join("out/config.resolved.toml")).unwrap();
    assert!(resolved.contains("seed = 17"), "{resolved}");
    for name in snapshots(a.path()) {
        assert_eq!(
            fs::read(a.path().join("out").join(&name)).unwrap(),
            fs::read(b.path().join("out").join(&name)).unwrap()
        );
    }
}
