use crate::error::{MgtError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// State-norm rate, half the fitted energy rate.
    pub omega: f64,
    /// `√exp(intercept)`, the prefactor of the state-norm bound.
    pub m_const: f64,
    pub r2: f64,
    pub window: (f64, f64),
    pub slope: f64,
    pub intercept: f64,
}

impl DecayFit {
    /// Fits with `r2 < 0.98` are reported but flagged.
    pub fn is_poor(&self) -> bool {
        self.r2 < 0.98
    }
}

/// Ordinary least squares `y ≈ slope·x + intercept`, returning `(slope, intercept, r²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    // a flat series (up to rounding in the mean) is fitted perfectly
    let flat = ss_tot <= 1e-24 * y.iter().map(|v| v * v).sum::<f64>();
    let r2 = if flat { 1.0 } else { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) };
    (slope, intercept, r2)
}

/// Least-squares line through `(t, ln E)` on `window`; defaults to dropping
/// the first 20% of the series span.
pub fn fit_decay_rate(times: &[f64], energy: &[f64], window: Option<(f64, f64)>) -> Result<DecayFit> {
    if times.len() != energy.len() {
        return Err(MgtError::Shape(format!("{} times but {} energies", times.len(), energy.len())));
    }
    let (Some(&t_first), Some(&t_last)) = (times.first(), times.last()) else {
        return Err(MgtError::Window("empty energy series".into()));
    };
    let (lo, hi) = window.unwrap_or((t_first + 0.2 * (t_last - t_first), t_last));
    if !(lo < hi) || lo < t_first - 1e-12 || hi > t_last + 1e-12 {
        return Err(MgtError::Window(format!("window [{lo}, {hi}] is not inside [{t_first}, {t_last}]")));
    }
    let tol = 1e-12 * (t_last - t_first).abs().max(1.0);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (&t, &e) in times.iter().zip(energy) {
        if t < lo - tol || t > hi + tol {
            continue;
        }
        if !(e > 0.0) {
            return Err(MgtError::Window(format!("nonpositive energy {e} at t = {t}")));
        }
        xs.push(t);
        ys.push(e.ln());
    }
    if xs.len() < 2 {
        return Err(MgtError::Window("fewer than two samples in the fit window".into()));
    }
    let (slope, intercept, r2) = linear_fit(&xs, &ys);
    Ok(DecayFit { omega: -0.5 * slope, m_const: (0.5 * intercept).exp(), r2, window: (lo, hi), slope, intercept })
}

/// Slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly).0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatkoStatus {
    /// Finite constants whose tails have settled.
    Certified,
    /// The running integral is still growing at the end of the run.
    Unbounded,
    /// Every starting point had zero energy.
    Vacuous,
}

impl DatkoStatus {
    pub fn name(self) -> &'static str {
        match self {
            DatkoStatus::Certified => "certified",
            DatkoStatus::Unbounded => "unbounded",
            DatkoStatus::Vacuous => "vacuous",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatkoEntry {
    pub s: f64,
    /// `sup_{t>s} [E(t) + ∫ₛᵗ E] / E(s)`; `None` when `E(s) = 0`.
    pub c_star: Option<f64>,
    /// Share of `∫ₛᵀ E` collected over the second half of `[s, T]`.
    pub tail_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatkoReport {
    pub entries: Vec<DatkoEntry>,
    pub status: DatkoStatus,
    /// Every finite `C*(s)` lies within ±20% of the first one.
    pub uniform: bool,
}

/// Tail share above which the integral is considered not yet converged.
pub const DATKO_TAIL_LIMIT: f64 = 0.1;

/// Evaluates `C*(s)` for `s ∈ {0, T/4, T/2}` with trapezoidal integrals.
pub fn datko_check(times: &[f64], energy: &[f64]) -> Result<DatkoReport> {
    if times.len() != energy.len() || times.len() < 2 {
        return Err(MgtError::Shape("datko check needs matching series with at least two samples".into()));
    }
    let t_end = *times.last().unwrap();
    let t0 = times[0];
    let mut cum = vec![0.0; times.len()];
    for i in 1..times.len() {
        cum[i] = cum[i - 1] + 0.5 * (times[i] - times[i - 1]) * (energy[i] + energy[i - 1]);
    }
    let index_at = |t: f64| times.iter().position(|&x| x >= t - 1e-12).unwrap_or(times.len() - 1);
    let entries: Vec<DatkoEntry> = [0.0, 0.25, 0.5]
        .iter()
        .map(|frac| {
            let is = index_at(t0 + frac * (t_end - t0));
            let s = times[is];
            let es = energy[is];
            let total = cum[cum.len() - 1] - cum[is];
            let mid = index_at(0.5 * (s + t_end));
            let tail_fraction = if total > 0.0 { (cum[cum.len() - 1] - cum[mid]) / total } else { 0.0 };
            let c_star = (es > 0.0).then(|| {
                (is + 1..times.len()).map(|j| (energy[j] + cum[j] - cum[is]) / es).fold(f64::NEG_INFINITY, f64::max)
            });
            DatkoEntry { s, c_star, tail_fraction }
        })
        .collect();
    let live: Vec<&DatkoEntry> = entries.iter().filter(|e| e.c_star.is_some()).collect();
    let status = if live.is_empty() {
        DatkoStatus::Vacuous
    } else if live.iter().any(|e| e.tail_fraction > DATKO_TAIL_LIMIT) {
        DatkoStatus::Unbounded
    } else {
        DatkoStatus::Certified
    };
    let uniform = match live.first().and_then(|e| e.c_star) {
        Some(c0) => live.iter().all(|e| (e.c_star.unwrap() - c0).abs() <= 0.2 * c0),
        None => false,
    };
    Ok(DatkoReport { entries, status, uniform })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(t: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|i| t * i as f64 / n as f64).collect()
    }

    #[test]
    fn synthetic_exponential() {
        let t = grid(5.0, 500);
        let e: Vec<f64> = t.iter().map(|t| 4.0 * (-3.0 * t).exp()).collect();
        let fit = fit_decay_rate(&t, &e, None).unwrap();
        assert!((fit.omega - 1.5).abs() < 1e-12);
        assert!((fit.m_const - 2.0).abs() < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
        assert!((fit.window.0 - 1.0).abs() < 1e-12 && fit.window.1 == 5.0);
    }

    #[test]
    fn constant_energy_has_zero_rate() {
        let t = grid(10.0, 100);
        let fit = fit_decay_rate(&t, &vec![0.7; 101], None).unwrap();
        assert!(fit.omega.abs() <= 1e-12);
        assert_eq!(fit.r2, 1.0);
    }

    #[test]
    fn window_errors() {
        let t = grid(1.0, 10);
        let mut e = vec![1.0; 11];
        e[9] = 0.0;
        assert!(matches!(fit_decay_rate(&t, &e, None), Err(MgtError::Window(_))));
        assert!(matches!(fit_decay_rate(&t, &[1.0; 11], Some((0.5, 2.0))), Err(MgtError::Window(_))));
        assert!(fit_decay_rate(&t, &e, Some((0.0, 0.5))).is_ok());
    }

    #[test]
    fn datko_classification() {
        let t = grid(40.0, 4000);
        let decaying: Vec<f64> = t.iter().map(|t| (-t).exp()).collect();
        let r = datko_check(&t, &decaying).unwrap();
        assert_eq!(r.status, DatkoStatus::Certified);
        assert!(r.uniform);
        assert!((r.entries[0].c_star.unwrap() - 1.0).abs() < 1e-3);

        let flat = vec![2.0; t.len()];
        assert_eq!(datko_check(&t, &flat).unwrap().status, DatkoStatus::Unbounded);

        let zero = vec![0.0; t.len()];
        let r = datko_check(&t, &zero).unwrap();
        assert_eq!(r.status, DatkoStatus::Vacuous);
        assert!(r.entries.iter().all(|e| e.c_star.is_none()));
    }

    #[test]
    fn loglog_recovers_power() {
        let x = [0.1, 0.05, 0.025];
        let y: Vec<f64> = x.iter().map(|h: &f64| 3.0 * h.powi(2)).collect();
        assert!((loglog_slope(&x, &y) - 2.0).abs() < 1e-12);
    }
}
