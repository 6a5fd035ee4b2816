//! The `run`, `sweep`, `spectrum` and `check` verbs.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mgt_core::analysis::{
    datko_check, energy_report, fit_decay_rate, identity_residual, resolvent_norm, spectrum, DatkoReport, DecayFit,
    EnergyReport, Identity, IdentityResidual, Spectrum, SpectrumOptions,
};
use mgt_core::evolution::{initial_state, state_norms, trace_residual};
use mgt_core::{
    build_mesh, integrate, validate_stability_assumptions, AssumptionDiagnostics, GeneratorBundle, MgtError, Problem,
    TraceResidual, Trajectory,
};
use rayon::prelude::*;

use crate::config::{AlphaSpec, ConfigError, ExperimentConfig};
use crate::report::{csv_writer, fmt_f64, write_float_csv, IdentitySummary, RunReport};

/// Υ samples below this fraction of Υ(0) are left out of the rate fit.
pub const TRACE_FLOOR: f64 = 1e-3;

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Solver(MgtError),
    Io(std::io::Error),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => e.fmt(f),
            RunError::Solver(e) => write!(f, "{e}"),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<MgtError> for RunError {
    fn from(e: MgtError) -> Self {
        RunError::Solver(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

impl From<csv::Error> for RunError {
    fn from(e: csv::Error) -> Self {
        RunError::Io(e.into())
    }
}

/// Everything computed for one configuration, before any file is written.
pub struct Evaluation {
    pub problem: Problem,
    pub diagnostics: Option<AssumptionDiagnostics>,
    pub spectrum: Option<Spectrum>,
    pub trajectory: Trajectory,
    pub energy: EnergyReport,
    pub decay_fit: Option<Result<DecayFit, String>>,
    pub datko: Option<DatkoReport>,
    pub identities: Vec<IdentityResidual>,
    pub trace: TraceResidual,
    pub trace_rate: Option<f64>,
    pub resolvent: Vec<(f64, f64)>,
}

pub fn evaluate(cfg: &ExperimentConfig) -> Result<Evaluation, RunError> {
    cfg.validate()?;
    let problem = cfg.build_problem()?;
    let x0 = cfg.x0()?;
    let diagnostics = x0.map(|x| validate_stability_assumptions(&problem.params, &problem.mesh, x));
    let sys = problem.companion();
    let a = &cfg.analysis;

    let spectrum = a.spectrum.then(|| spectrum(&sys, &SpectrumOptions::default())).transpose()?;

    let state0 = initial_state(&cfg.preset(), &problem.mesh, &problem.ops)?;
    let trajectory = integrate(&sys, &state0, cfg.time.t_final, cfg.time.dt, cfg.scheme(), cfg.time.stride, None)?;
    let energy = energy_report(&trajectory, &problem.ops, &problem.params);
    let (times, total) = (energy.times(), energy.total());

    let decay_fit = a.decay_fit.then(|| fit_decay_rate(&times, &total, cfg.fit_window()).map_err(|e| e.to_string()));
    let datko = a.datko.then(|| datko_check(&times, &total)).transpose()?;

    let identities = a
        .identities
        .iter()
        .map(|tag| identity_residual(&problem, &trajectory, Identity::from_str(tag)?, x0))
        .collect::<Result<Vec<_>, _>>()?;

    let trace = trace_residual(&trajectory, &problem.ops, &problem.params);
    let trace_rate = trace.fit_rate(TRACE_FLOOR).ok();

    let resolvent = if a.resolvent.is_empty() {
        Vec::new()
    } else {
        let bundle = GeneratorBundle::build(&problem.ops, &problem.params)?;
        let gram = problem.ops.gram(&problem.params);
        a.resolvent
            .iter()
            .map(|&l| resolvent_norm(&bundle.gen_zd, &gram, l).map(|n| (l, n)))
            .collect::<Result<Vec<_>, _>>()?
    };

    Ok(Evaluation {
        problem,
        diagnostics,
        spectrum,
        trajectory,
        energy,
        decay_fit,
        datko,
        identities,
        trace,
        trace_rate,
        resolvent,
    })
}

fn write_eigenvalues(path: &Path, sp: &Spectrum) -> std::io::Result<()> {
    let rows: Vec<[f64; 2]> = sp.eigenvalues.iter().map(|z| [z.re, z.im]).collect();
    write_float_csv(path, &["re", "im"], rows.iter().map(|r| r.as_slice()))
}

/// Full pipeline with file output into `cfg.output.directory`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunReport, RunError> {
    let ev = evaluate(cfg)?;
    let dir = &cfg.output.directory;
    fs::create_dir_all(dir)?;
    let mut manifest = Vec::new();
    let mut emit = |name: &str| -> PathBuf {
        let p = dir.join(name);
        manifest.push(p.clone());
        p
    };

    fs::write(emit("config.toml"), cfg.to_toml())?;

    let norms = state_norms(&ev.trajectory, &ev.problem.ops);
    let rows: Vec<[f64; 4]> = ev.trajectory.times.iter().zip(&norms).map(|(t, n)| [*t, n[0], n[1], n[2]]).collect();
    write_float_csv(&emit("trajectory.csv"), &["t", "norm_u", "norm_ut", "norm_utt"], rows.iter().map(|r| r.as_slice()))?;

    let rows: Vec<[f64; 7]> = ev
        .energy
        .samples
        .iter()
        .map(|s| [s.t, s.e0, s.e1, s.e, s.sigma, s.boundary_dissipation, s.interior_dissipation])
        .collect();
    write_float_csv(
        &emit("energy.csv"),
        &["t", "E0", "E1", "E", "Sigma", "boundary_dissipation", "interior_dissipation"],
        rows.iter().map(|r| r.as_slice()),
    )?;

    let rows: Vec<[f64; 2]> = ev.trace.times.iter().zip(&ev.trace.upsilon).map(|(t, u)| [*t, *u]).collect();
    write_float_csv(&emit("trace.csv"), &["t", "upsilon"], rows.iter().map(|r| r.as_slice()))?;

    if let Some(sp) = &ev.spectrum {
        write_eigenvalues(&emit("eigenvalues.csv"), sp)?;
    }
    for id in &ev.identities {
        let rows: Vec<[f64; 4]> =
            (0..id.times.len()).map(|i| [id.times[i], id.lhs[i], id.rhs[i], id.lhs[i] - id.rhs[i]]).collect();
        write_float_csv(
            &emit(&format!("identity_{}.csv", id.which.tag())),
            &["t", "lhs", "rhs", "difference"],
            rows.iter().map(|r| r.as_slice()),
        )?;
    }
    if !ev.resolvent.is_empty() {
        let rows: Vec<[f64; 3]> = ev.resolvent.iter().map(|(l, n)| [*l, *n, l * n]).collect();
        write_float_csv(&emit("resolvent.csv"), &["lambda", "norm", "lambda_times_norm"], rows.iter().map(|r| r.as_slice()))?;
    }
    if cfg.output.state_dump {
        let mut f = std::io::BufWriter::new(fs::File::create(emit("state.bin"))?);
        ev.trajectory.write_dump(&mut f)?;
    }
    let report_path = emit("report.txt");

    let (decay_fit, decay_fit_error) = match ev.decay_fit {
        Some(Ok(f)) => (Some(f), None),
        Some(Err(e)) => (None, Some(e)),
        None => (None, None),
    };
    let report = RunReport {
        config: cfg.clone(),
        diagnostics: ev.diagnostics,
        abscissa: ev.spectrum.as_ref().map(|s| s.abscissa),
        spectrum_method: ev.spectrum.as_ref().map(|s| s.method),
        decay_fit,
        decay_fit_error,
        identities: ev
            .identities
            .iter()
            .map(|r| IdentitySummary { tag: r.which.tag().to_string(), residual: r.residual })
            .collect(),
        datko: ev.datko,
        e1_drift: ev.energy.e1_drift(),
        upsilon0: ev.trace.upsilon.first().copied().unwrap_or(0.0),
        trace_rate: ev.trace_rate,
        resolvent: ev.resolvent,
        manifest,
    };
    fs::write(&report_path, report.to_key_value())?;
    Ok(report)
}

/// Spectrum only; writes `eigenvalues.csv` and returns the spectrum.
pub fn spectrum_only(cfg: &ExperimentConfig) -> Result<(Spectrum, PathBuf), RunError> {
    cfg.validate()?;
    let problem = cfg.build_problem()?;
    let sp = spectrum(&problem.companion(), &SpectrumOptions::default())?;
    fs::create_dir_all(&cfg.output.directory)?;
    let path = cfg.output.directory.join("eigenvalues.csv");
    write_eigenvalues(&path, &sp)?;
    Ok((sp, path))
}

/// Standing assumptions only; needs `domain.x0`.
pub fn check(cfg: &ExperimentConfig) -> Result<AssumptionDiagnostics, RunError> {
    cfg.validate()?;
    let x0 = cfg.x0()?.ok_or_else(|| ConfigError::Invalid {
        field: "domain.x0".into(),
        message: "the assumption check needs an observation point".into(),
    })?;
    let mesh = build_mesh(&cfg.domain_spec(), &cfg.domain.resolution)?;
    Ok(validate_stability_assumptions(&cfg.physical_params()?, &mesh, x0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Eta,
    /// `α = τc²/b + s·γ_ref`, with `γ_ref` the configured γ, or 1 when that is identically zero.
    GammaScale,
    Dt,
    /// Cells per direction, applied to every direction.
    Resolution,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Eta => "eta",
            SweepAxis::GammaScale => "gamma-scale",
            SweepAxis::Dt => "dt",
            SweepAxis::Resolution => "resolution",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        [SweepAxis::Eta, SweepAxis::GammaScale, SweepAxis::Dt, SweepAxis::Resolution]
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| ConfigError::Invalid {
                field: "axis".into(),
                message: format!("unknown sweep axis `{s}` (expected eta, gamma-scale, dt or resolution)"),
            })
    }
}

/// The configuration of one sweep point.
pub fn apply_axis(cfg: &ExperimentConfig, axis: SweepAxis, value: f64) -> Result<ExperimentConfig, RunError> {
    let mut c = cfg.clone();
    match axis {
        SweepAxis::Eta => c.params.eta = value,
        SweepAxis::Dt => c.time.dt = value,
        SweepAxis::Resolution => {
            if value.fract() != 0.0 || value < 2.0 {
                return Err(ConfigError::Invalid {
                    field: "resolution".into(),
                    message: format!("sweep value {value} is not an integer ≥ 2"),
                }
                .into());
            }
            c.domain.resolution.iter_mut().for_each(|r| *r = value as usize);
        }
        SweepAxis::GammaScale => {
            let p = cfg.physical_params()?;
            let crit = p.critical_alpha();
            let alpha = if p.gamma.is_identically_zero() {
                p.alpha.map(|_| crit + value)
            } else {
                p.alpha.map(|a| crit + value * (a - crit))
            };
            c.params.alpha = AlphaSpec::from_field(&alpha);
        }
    }
    c.validate()?;
    Ok(c)
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub abscissa: Option<f64>,
    pub omega: Option<f64>,
    pub r2: Option<f64>,
    pub c_star: [Option<f64>; 3],
    pub datko_status: Option<&'static str>,
    pub e1_drift: Option<f64>,
    pub residuals: Vec<Option<f64>>,
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(value: f64, n_ids: usize, error: String) -> Self {
        SweepRow {
            value,
            abscissa: None,
            omega: None,
            r2: None,
            c_star: [None; 3],
            datko_status: None,
            e1_drift: None,
            residuals: vec![None; n_ids],
            error: Some(error),
        }
    }
}

fn sweep_point(cfg: &ExperimentConfig, axis: SweepAxis, value: f64) -> SweepRow {
    let n_ids = cfg.analysis.identities.len();
    let ev = match apply_axis(cfg, axis, value).and_then(|c| evaluate(&c)) {
        Ok(ev) => ev,
        Err(e) => return SweepRow::failed(value, n_ids, e.to_string()),
    };
    let fit = ev.decay_fit.as_ref().and_then(|f| f.as_ref().ok());
    let mut c_star = [None; 3];
    if let Some(d) = &ev.datko {
        for (slot, e) in c_star.iter_mut().zip(&d.entries) {
            *slot = e.c_star;
        }
    }
    SweepRow {
        value,
        abscissa: ev.spectrum.as_ref().map(|s| s.abscissa),
        omega: fit.map(|f| f.omega),
        r2: fit.map(|f| f.r2),
        c_star,
        datko_status: ev.datko.as_ref().map(|d| d.status.name()),
        e1_drift: Some(ev.energy.e1_drift()),
        residuals: ev.identities.iter().map(|r| Some(r.residual)).collect(),
        error: ev.decay_fit.and_then(|f| f.err()).map(|e| format!("decay fit: {e}")),
    }
}

/// Evaluates every value on up to `analysis.workers` threads; rows keep input order.
pub fn sweep(cfg: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepRow>, RunError> {
    cfg.validate()?;
    if values.is_empty() {
        return Err(ConfigError::Invalid { field: "values".into(), message: "sweep needs at least one value".into() }.into());
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(ConfigError::Invalid { field: "values".into(), message: format!("non-finite sweep value {v}") }.into());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.analysis.workers)
        .build()
        .map_err(|e| MgtError::Validation(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| values.par_iter().map(|&v| sweep_point(cfg, axis, v)).collect()))
}

pub fn write_sweep_csv(path: &Path, cfg: &ExperimentConfig, axis: SweepAxis, rows: &[SweepRow]) -> Result<(), RunError> {
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = [axis.name(), "abscissa", "omega", "r2", "c_star_0", "c_star_quarter", "c_star_half", "datko_status", "e1_drift"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(cfg.analysis.identities.iter().map(|t| format!("residual_{t}")));
    header.push("error".into());
    w.write_record(&header)?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, fmt_f64);
    for r in rows {
        let mut rec = vec![fmt_f64(r.value), opt(r.abscissa), opt(r.omega), opt(r.r2)];
        rec.extend(r.c_star.iter().map(|c| opt(*c)));
        rec.push(r.datko_status.unwrap_or("").to_string());
        rec.push(opt(r.e1_drift));
        rec.extend(r.residuals.iter().map(|c| opt(*c)));
        rec.push(r.error.clone().unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

