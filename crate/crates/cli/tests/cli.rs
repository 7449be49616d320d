use std::path::Path;
use std::process::Command;

fn see() -> Command {
    Command::new(env!("CARGO_BIN_EXE_see"))
}

fn bunny_config(dir: &Path) -> std::path::PathBuf {
    let mesh = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets/bunny.ply");
    let cfg = format!(
        "[scene]\nmesh = {:?}\nscale_to_box = [0.8, 0.8, 0.6]\n\n[caps]\nmax_views = 2\n",
        mesh.canonicalize().unwrap()
    );
    let path = dir.join("bunny.toml");
    std::fs::write(&path, cfg).unwrap();
    path
}

#[test]
fn run_then_plot_then_score() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let status = see()
        .args(["run", "--config"])
        .arg(bunny_config(dir.path()))
        .arg("--out")
        .arg(&out)
        .args(["--seeds", "4..5"])
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    assert!(String::from_utf8_lossy(&status.stdout).contains("1 trials (0 failed)"));
    assert!(out.join("cloud_trial4.ply").is_file());

    let svg = dir.path().join("time.svg");
    let plot = see()
        .args(["plot", "--csv"])
        .arg(out.join("views.csv"))
        .arg("--out")
        .arg(&svg)
        .args(["--x", "time"])
        .output()
        .unwrap();
    assert!(plot.status.success(), "{}", String::from_utf8_lossy(&plot.stderr));
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));

    let cov = see()
        .args(["coverage", "--mesh"])
        .arg(out.join("scene.ply"))
        .arg("--cloud")
        .arg(out.join("cloud_trial4.ply"))
        .args(["--eta", "0.005"])
        .output()
        .unwrap();
    assert!(cov.status.success(), "{}", String::from_utf8_lossy(&cov.stderr));
    let value: f64 = String::from_utf8_lossy(&cov.stdout).trim().parse().unwrap();
    let csv = std::fs::read_to_string(out.join("views.csv")).unwrap();
    let last: f64 = csv.lines().last().unwrap().split(',').nth(5).unwrap().parse().unwrap();
    // The PLY stores single precision, so allow a few vertices on the boundary.
    assert!((value - last).abs() < 1e-3, "{value} vs {last}");
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.toml");
    std::fs::write(&cfg, "[scene]\n").unwrap();
    let out = see()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("mesh path or a builtin"));
    assert!(!dir.path().join("out").exists());

    let out = see().args(["run", "--config", "x.toml", "--out", "o", "--seeds", "3..1"]).output().unwrap();
    assert!(!out.status.success());
}
