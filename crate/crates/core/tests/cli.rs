use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_blowup-lab"))
}

#[test]
fn verify_reports_through_exit_status() {
    let out = bin().args(["verify", "--which", "bessel"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().all(|l| l.starts_with("[PASS]")), "{text}");
}

#[test]
fn sequences_table_has_header() {
    let out = bin()
        .args(["sequences", "--mode", "subcritical", "--jmax", "4"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("j,ell_j,L_j,alpha_j,beta_j,logC_j"));
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn sweep_writes_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sweep.toml");
    std::fs::write(
        &config,
        "[model]\nn = 1\np = 2.0\nq = 2.0\nb = 1.0\nm2 = 0.0\nR = 1.0\n\n\
         [ladder]\neps_start = 1.0\nratio = 0.8\ncount = 4\n\n\
         [numerics]\nhx = 0.04\nt_max = 200.0\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["sweep", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    for f in ["sweep.csv", "report.json", "plot.gp"] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }
    let csv = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn malformed_config_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "[model]\nn = 1\n").unwrap();
    let out = bin()
        .args(["sweep", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_writes_trace_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "simulate", "--n", "1", "--p", "2", "--q", "2", "--b", "1", "--m2", "0", "--R", "1",
        ])
        .args(["--eps", "1.0", "--tmax", "30", "--hx", "0.04", "--cfl", "0.5", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,U_char,V_char\n"));
    let traj = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("t,x,u,v,dudt,dvdt\n"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["blowup"]["blew_up"], true);
}

#[test]
fn shipped_config_matches_the_standard_sweep() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/standard_sweep.toml");
    let shipped = blowup_lab::experiments::SweepConfig::from_toml(&std::fs::read_to_string(path).unwrap()).unwrap();
    let standard = blowup_lab::experiments::standard_sweep_config();
    assert_eq!(shipped.model, standard.model);
    assert_eq!(shipped.ladder, standard.ladder);
    assert_eq!(shipped.numerics, standard.numerics);
}
