//! Flat `key = value` run reports and CSV emission.

use std::fmt::Write as _;
use std::fs::File;
use std::path::{Path, PathBuf};

use mgt_core::analysis::{DatkoReport, DecayFit, SpectrumMethod};
use mgt_core::AssumptionDiagnostics;

use crate::config::ExperimentConfig;

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn csv_writer(path: &Path) -> std::io::Result<csv::Writer<File>> {
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(File::create(path)?))
}

/// Writes a header and rows of floats.
pub fn write_float_csv<'a>(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = &'a [f64]>,
) -> std::io::Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| fmt_f64(*v)))?;
    }
    w.flush()
}

#[derive(Debug, Clone)]
pub struct IdentitySummary {
    pub tag: String,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub diagnostics: Option<AssumptionDiagnostics>,
    pub abscissa: Option<f64>,
    pub spectrum_method: Option<SpectrumMethod>,
    pub decay_fit: Option<DecayFit>,
    /// Why the fit could not be computed, if it was requested.
    pub decay_fit_error: Option<String>,
    pub identities: Vec<IdentitySummary>,
    pub datko: Option<DatkoReport>,
    pub e1_drift: f64,
    pub upsilon0: f64,
    pub trace_rate: Option<f64>,
    /// `(λ, ‖(λ - A_d)⁻¹‖)` in the Gram metric.
    pub resolvent: Vec<(f64, f64)>,
    pub manifest: Vec<PathBuf>,
}

impl RunReport {
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("config.domain", format!("{:?}", self.config.domain.kind).to_lowercase());
        kv("config.resolution", format!("{:?}", self.config.domain.resolution));
        kv("config.scheme", self.config.time.scheme.clone());
        if let Some(d) = &self.diagnostics {
            for (name, check) in d.checks() {
                kv(&format!("assumption.{name}"), if check.passed { "pass" } else { "fail" }.into());
                kv(&format!("assumption.{name}.detail"), check.detail.clone());
            }
        }
        if let (Some(a), Some(m)) = (self.abscissa, self.spectrum_method) {
            kv("spectrum.method", format!("{m:?}").to_lowercase());
            kv("spectrum.abscissa", fmt_f64(a));
        }
        if let Some(f) = &self.decay_fit {
            kv("decay_fit.omega", fmt_f64(f.omega));
            kv("decay_fit.m_const", fmt_f64(f.m_const));
            kv("decay_fit.r2", fmt_f64(f.r2));
            kv("decay_fit.window_start", fmt_f64(f.window.0));
            kv("decay_fit.window_end", fmt_f64(f.window.1));
            if f.is_poor() {
                kv("decay_fit.warning", "r2 below 0.98, decay is not log-linear on the window".into());
            }
        }
        if let Some(e) = &self.decay_fit_error {
            kv("decay_fit.error", e.clone());
        }
        if let Some(d) = &self.datko {
            kv("datko.status", d.status.name().into());
            kv("datko.uniform", d.uniform.to_string());
            for (i, e) in d.entries.iter().enumerate() {
                kv(&format!("datko.{i}.s"), fmt_f64(e.s));
                kv(&format!("datko.{i}.c_star"), e.c_star.map_or("skipped".into(), fmt_f64));
                kv(&format!("datko.{i}.tail_fraction"), fmt_f64(e.tail_fraction));
            }
        }
        for id in &self.identities {
            kv(&format!("identity.{}.residual", id.tag), fmt_f64(id.residual));
        }
        kv("energy.e1_drift", fmt_f64(self.e1_drift));
        kv("trace.upsilon0", fmt_f64(self.upsilon0));
        if let Some(r) = self.trace_rate {
            kv("trace.rate", fmt_f64(r));
        }
        for (i, (l, n)) in self.resolvent.iter().enumerate() {
            kv(&format!("resolvent.{i}.lambda"), fmt_f64(*l));
            kv(&format!("resolvent.{i}.norm"), fmt_f64(*n));
            kv(&format!("resolvent.{i}.lambda_times_norm"), fmt_f64(l * n));
        }
        for (i, p) in self.manifest.iter().enumerate() {
            kv(&format!("manifest.{i}"), p.display().to_string());
        }
        s
    }
}
