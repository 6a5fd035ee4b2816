use std::path::Path;
use std::process::Command;

use mgt_cli::{run, sweep, write_sweep_csv, ExperimentConfig, RunError, SweepAxis};

fn config(dir: &Path, extra: &str) -> String {
    format!(
        r#"
[domain]
kind = "interval"
bounds = [0.0, 1.0]
resolution = [40]
x0 = [-1.0]
boundary = "feedback"

[params]
tau = 1.0
c = 1.0
delta = 0.0
eta = 1.0
alpha = 1.0

[initial]
preset = "eigenmode"
mode = 1

[time]
t_final = 10.0
dt = 0.01
stride = 5

[analysis]
identities = ["e1id", "zmul"]
resolvent = [0.1, 1.0, 10.0]
workers = 3

[output]
directory = "{}"
state_dump = true
{extra}"#,
        dir.display()
    )
}

fn mgt(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mgt")).args(args).output().unwrap()
}

#[test]
fn critical_case_run_decays() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::parse(&config(dir.path(), "")).unwrap();
    let rep = run(&cfg).unwrap();
    assert!(rep.abscissa.unwrap() < 0.0);
    let fit = rep.decay_fit.unwrap();
    assert!(fit.omega > 0.0 && fit.r2 >= 0.98, "{fit:?}");
    assert!(rep.diagnostics.as_ref().unwrap().all_pass());
    for (l, n) in &rep.resolvent {
        assert!(l * n <= 1.0 + 1e-9);
    }
    for p in &rep.manifest {
        assert!(p.exists(), "{} missing", p.display());
    }
    let report = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(report.contains("spectrum.abscissa = -"));
    assert!(report.contains("identity.zmul.residual = "));

    let energy = std::fs::read_to_string(dir.path().join("energy.csv")).unwrap();
    assert!(energy.starts_with("t,E0,E1,E,Sigma,boundary_dissipation,interior_dissipation\n"));
    assert_eq!(energy.lines().count(), 1 + 201);
}

#[test]
fn echoed_config_reparses_to_equal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::parse(&config(dir.path(), "")).unwrap();
    let mut quick = cfg.clone();
    quick.time.t_final = 0.5;
    quick.analysis.identities.clear();
    run(&quick).unwrap();
    let echoed = ExperimentConfig::load(&dir.path().join("config.toml")).unwrap();
    assert_eq!(echoed, quick);
}

#[test]
fn repeated_runs_are_bit_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let text = |d: &Path| config(d, "").replace("preset = \"eigenmode\"\nmode = 1", "preset = \"bump\"\nseed = 11");
    let ra = run(&ExperimentConfig::parse(&text(a.path())).unwrap()).unwrap();
    run(&ExperimentConfig::parse(&text(b.path())).unwrap()).unwrap();
    for p in &ra.manifest {
        let name = p.file_name().unwrap();
        if name == "config.toml" || name == "report.txt" {
            continue; // these mention the output directory
        }
        assert_eq!(std::fs::read(p).unwrap(), std::fs::read(b.path().join(name)).unwrap(), "{name:?}");
    }
}

#[test]
fn eta_sweep_separates_conservative_and_damped() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::parse(&config(dir.path(), "")).unwrap();
    let values = [0.0, 0.5, 1.0, 2.0];
    let rows = sweep(&cfg, SweepAxis::Eta, &values).unwrap();
    assert_eq!(rows.iter().map(|r| r.value).collect::<Vec<_>>(), values);
    // only E1 is conserved when γ ≡ 0; E0 exchanges energy with it, so the
    // fitted rate is zero up to that oscillation
    let w0 = rows[0].omega.unwrap();
    assert!(w0.abs() < 1e-2 && rows[0].abscissa.unwrap().abs() < 1e-10, "{:?}", rows[0]);
    for r in &rows[1..] {
        assert!(r.omega.unwrap() > 10.0 * w0.abs() && r.abscissa.unwrap() < 0.0, "{r:?}");
    }
    let path = dir.path().join("sweep.csv");
    write_sweep_csv(&path, &cfg, SweepAxis::Eta, &rows).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.starts_with("eta,abscissa,omega,r2,c_star_0,c_star_quarter,c_star_half,datko_status,e1_drift,residual_e1id,residual_zmul,error\n"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn sweep_records_failures_in_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::parse(&config(dir.path(), "")).unwrap();
    let rows = sweep(&cfg, SweepAxis::Resolution, &[20.0, 2.5, 1.0, 30.0]).unwrap();
    assert!(rows[0].error.is_none() && rows[3].error.is_none());
    assert!(rows[1].error.as_ref().unwrap().contains("not an integer"));
    assert!(rows[2].error.is_some());
    assert!(matches!(sweep(&cfg, SweepAxis::Eta, &[]), Err(RunError::Config(_))));
    assert!("viscosity".parse::<SweepAxis>().is_err());
}

#[test]
fn gamma_scale_keeps_profile() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::parse(&config(dir.path(), "")).unwrap();
    let c = mgt_cli::runner::apply_axis(&cfg, SweepAxis::GammaScale, 0.1).unwrap();
    let p = c.physical_params().unwrap();
    assert!((p.gamma.as_constant().unwrap() - 0.1).abs() < 1e-15);

    let mut graded = cfg.clone();
    graded.params.alpha = mgt_cli::config::AlphaSpec::PerCell((0..40).map(|i| 1.0 + i as f64 / 40.0).collect());
    let c = mgt_cli::runner::apply_axis(&graded, SweepAxis::GammaScale, 0.5).unwrap();
    let g = c.physical_params().unwrap().gamma;
    assert!((g.values()[10] - 0.5 * 10.0 / 40.0).abs() < 1e-15);
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: String| {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p.display().to_string()
    };
    let out = dir.path().join("out");
    let base = config(&out, "");

    let inside = write("inside.toml", base.replace("x0 = [-1.0]", "x0 = [0.5]"));
    let o = mgt(&["run", &inside]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("geometric condition"));

    let short = write("short.toml", base.replace("t_final = 10.0", "t_final = 0.001"));
    let o = mgt(&["run", &short]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("time.t_final"));

    let ok = write("ok.toml", base.clone());
    let o = mgt(&["check", &ok]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let conservative = write("cons.toml", base.replace("eta = 1.0", "eta = 0.0"));
    let o = mgt(&["check", &conservative]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).contains("eta_positive = fail"));

    let o = mgt(&["spectrum", &ok]);
    assert!(o.status.success());
    assert!(out.join("eigenvalues.csv").exists());

    let o = mgt(&["sweep", &ok, "--axis", "eta", "--values", "-1,1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(rows.lines().count(), 3);
}
