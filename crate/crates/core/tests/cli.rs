use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spinphonon"))
}

#[test]
fn hamiltonian_prints_reduced_terms() {
    let out = bin().args(["hamiltonian", "--preset", "n4_qm1_g2"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# qubits=2 modes=4"));
    assert!(text.contains("X0 X1"));
}

#[test]
fn validation_errors_exit_with_two() {
    for args in [
        vec!["hamiltonian", "--preset", "nope"],
        vec!["evolve", "--dt", "-1"],
        vec!["verify", "--suite", "bogus"],
        vec!["readout-fit", "--data", "/nonexistent.csv"],
        vec!["frobnicate"],
    ] {
        let out = bin().args(&args).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn config_file_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("p.cfg");
    std::fs::write(&cfg, "n_sites=2\ncharge_sector=0\nboson_mass=1.5\ncoupling=4\ncutoff=4\ntrotter_dt=0.5\ntrotter_steps=2\n").unwrap();
    let out = bin().args(["evolve", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let spin = std::fs::read_to_string(dir.path().join("trotter_spin.csv")).unwrap();
    assert_eq!(spin.lines().count(), 4);
}

#[test]
fn circuit_and_readout_fit_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = bin().args(["circuit", "--preset", "n4_qm1_g2", "--compress", "spin", "--native", "--out-dir", d]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("n4_main.txt")).unwrap();
    let c: spinphonon::Circuit = text.parse().unwrap();
    assert!(c.len() > 0);

    let out = bin().args(["readout-fit", "--resamples", "5", "--out-dir", d]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let data = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.to_string_lossy().ends_with("_data.csv"))
        .unwrap();
    let out = bin().args(["readout-fit", "--data", data.to_str().unwrap(), "--n-max", "11", "--resamples", "5", "--out-dir", d]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let fit = std::fs::read_to_string(dir.path().join("fit.csv")).unwrap();
    assert!(fit.starts_with("n,P_n,sigma_n\n0,"));
    assert_eq!(fit.lines().count(), 13);
}

#[test]
fn verify_emits_json() {
    let out = bin().args(["verify", "--suite", "algebra", "--suite", "gates"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);
    assert!(v[0]["passed"].as_bool().unwrap());
}

#[test]
fn preset_writes_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["preset", "n2_q0", "--cutoff", "4", "--out-dir", dir.path().to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let run_dir = std::path::PathBuf::from(v["dir"].as_str().unwrap());
    assert!(run_dir.join("summary.json").exists());
}
