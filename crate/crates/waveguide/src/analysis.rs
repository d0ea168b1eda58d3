//! Scalar measures, spectra and branch labels derived from simulation pairs.
//!
//! Transmissibility is the fraction of input work transmitted downstream,
//! `eta(T) = E_down(T) / E_input(T)`, and non-reciprocity is the log ratio
//! of the downstream energies of the two directions,
//! `delta(T) = log10(E_down_LR / E_down_RL)`. Reciprocity corresponds to
//! `delta = 0`.

use crate::sim::SimOutcome;
use rustfft::{num_complex::Complex64, FftPlanner};
use std::fmt;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

/// Downstream energies at or below this floor make the log ratio
/// meaningless; `delta` becomes an infinite sentinel and the pair is
/// flagged degenerate instead of dividing raw near-zeros.
pub const DEGENERATE_ENERGY_FLOOR: f64 = 1e-30;

/// Default desirability thresholds (`eta_lr > 0.2`, `delta > 5`).
pub const DESIRABLE_ETA_MIN: f64 = 0.2;
pub const DESIRABLE_DELTA_MIN: f64 = 5.0;
/// Relaxed delta threshold used for the kernel-size robustness maps.
pub const KERNEL_DELTA_MIN: f64 = 4.0;

/// A secondary spectral peak within this relative band of the drive
/// frequency and above this fraction of the main peak flags a strongly
/// modulated (side-banded) response.
const SIDEBAND_REL_BAND: f64 = 0.2;
const SIDEBAND_REL_AMP: f64 = 0.1;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("run diverged at tau = {0}; measures undefined")]
    DivergedInput(f64),
    #[error("input energy is zero; transmissibility undefined")]
    ZeroInputEnergy,
    #[error("spectrum window [{a}, {b}] spans {got:.1} but needs >= {needed:.1} (50 forcing periods)")]
    WindowTooShort { a: f64, b: f64, got: f64, needed: f64 },
    #[error("spectrum window [{a}, {b}] outside the sampled span [0, {span}]")]
    WindowOutOfRange { a: f64, b: f64, span: f64 },
}

/// Directional transmissibilities and the non-reciprocity measure of one
/// (L-R, R-L) outcome pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurePair {
    pub eta_lr: f64,
    pub eta_rl: f64,
    /// `log10(E_down_LR) - log10(E_down_RL)`; an infinite sentinel when a
    /// downstream energy sat at the degenerate floor.
    pub delta: f64,
    /// Simulated horizon the energies were accumulated over.
    pub t_horizon: f64,
    /// Set when either downstream energy was at or below the floor.
    pub degenerate: bool,
}

/// Energy measures of a matched pair of runs (same config, both directions).
pub fn measures(lr: &SimOutcome, rl: &SimOutcome) -> Result<MeasurePair, AnalysisError> {
    for out in [lr, rl] {
        if let Some(t) = out.diverged {
            return Err(AnalysisError::DivergedInput(t));
        }
    }
    if lr.final_e_input <= 0.0 || rl.final_e_input <= 0.0 {
        return Err(AnalysisError::ZeroInputEnergy);
    }
    let eta_lr = lr.final_e_down / lr.final_e_input;
    let eta_rl = rl.final_e_down / rl.final_e_input;

    let lr_ok = lr.final_e_down > DEGENERATE_ENERGY_FLOOR;
    let rl_ok = rl.final_e_down > DEGENERATE_ENERGY_FLOOR;
    // The difference-of-logs form makes swapping the outcomes negate delta
    // exactly and makes identical outcomes yield exactly zero.
    let (delta, degenerate) = match (lr_ok, rl_ok) {
        (true, true) => (lr.final_e_down.log10() - rl.final_e_down.log10(), false),
        (true, false) => (f64::INFINITY, true),
        (false, true) => (f64::NEG_INFINITY, true),
        (false, false) => (0.0, true),
    };

    Ok(MeasurePair {
        eta_lr,
        eta_rl,
        delta,
        t_horizon: lr.t_final,
        degenerate,
    })
}

/// Solution-branch taxonomy in the (eta, delta) plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchLabel {
    /// Highly non-reciprocal: `delta >= 5` at useful transmissibility.
    Hnrb,
    /// Intermediate non-reciprocity: `1 <= delta < 5`.
    Inrb,
    /// Near-reciprocal: `delta < 1`.
    Nrb,
    /// Transmissibility at or below 0.2; branch structure not assessed.
    LowTransmission,
}

impl fmt::Display for BranchLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BranchLabel::Hnrb => "HNRB",
            BranchLabel::Inrb => "INRB",
            BranchLabel::Nrb => "NRB",
            BranchLabel::LowTransmission => "LOW_TRANSMISSION",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for BranchLabel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "HNRB" => Ok(BranchLabel::Hnrb),
            "INRB" => Ok(BranchLabel::Inrb),
            "NRB" => Ok(BranchLabel::Nrb),
            "LOW_TRANSMISSION" => Ok(BranchLabel::LowTransmission),
            other => Err(format!("unknown branch label `{other}`")),
        }
    }
}

/// Assign the solution branch. Total: boundary ties go to the higher-delta
/// class at 5 and to INRB at 1; anything past 9 is still HNRB.
pub fn classify(m: &MeasurePair) -> BranchLabel {
    if m.eta_lr <= 0.2 {
        BranchLabel::LowTransmission
    } else if m.delta >= 5.0 {
        BranchLabel::Hnrb
    } else if m.delta >= 1.0 {
        BranchLabel::Inrb
    } else {
        BranchLabel::Nrb
    }
}

/// Strict-threshold desirability on raw (eta, delta) values. Single source
/// of truth for the surrogate evaluation pipeline.
pub fn desirable_point(eta_lr: f64, delta: f64, eta_min: f64, delta_min: f64) -> bool {
    eta_lr > eta_min && delta > delta_min
}

/// Whether a measure pair falls in the desired design region.
pub fn is_desirable(m: &MeasurePair, eta_min: f64, delta_min: f64) -> bool {
    desirable_point(m.eta_lr, m.delta, eta_min, delta_min)
}

/// One-sided amplitude spectrum of a windowed probe series.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Normalized angular frequencies, `0..=Nyquist`.
    pub freq: Vec<f64>,
    /// Amplitudes `|X_k| / M`; the two-sided squared sum equals the mean
    /// power of the windowed signal (Parseval).
    pub amplitude: Vec<f64>,
    pub dominant_freq: f64,
    pub dominant_amplitude: f64,
    /// Set when a secondary peak near the drive frequency marks a strongly
    /// modulated response.
    pub sidebands: bool,
    /// Number of time samples in the analysis window.
    pub n_samples: usize,
}

impl Spectrum {
    /// Two-sided sum of squared amplitudes, folding the stored one-sided
    /// bins; equals the mean power of the windowed signal.
    pub fn power_sum(&self) -> f64 {
        let m = self.n_samples;
        let mut total = self.amplitude[0] * self.amplitude[0];
        let last = self.amplitude.len() - 1;
        for k in 1..=last {
            let a2 = self.amplitude[k] * self.amplitude[k];
            let nyquist_bin = m % 2 == 0 && k == last;
            total += if nyquist_bin { a2 } else { 2.0 * a2 };
        }
        total
    }
}

/// Fourier amplitude spectrum of `samples` (spacing `dt_sample`, first
/// sample at tau = 0) over the window `[tau_a, tau_b]`.
///
/// The window is mean-removed and Hann-tapered. `drive_omega` locates the
/// excitation line for the sideband test and sets the minimum window length
/// of 50 forcing periods.
pub fn spectrum(
    samples: &[f64],
    dt_sample: f64,
    window: (f64, f64),
    drive_omega: f64,
) -> Result<Spectrum, AnalysisError> {
    let (tau_a, tau_b) = window;
    let span = (samples.len().saturating_sub(1)) as f64 * dt_sample;
    if tau_a < 0.0 || tau_b > span + 1e-9 || tau_a >= tau_b {
        return Err(AnalysisError::WindowOutOfRange { a: tau_a, b: tau_b, span });
    }
    let needed = 50.0 * std::f64::consts::TAU / drive_omega;
    if tau_b - tau_a < needed {
        return Err(AnalysisError::WindowTooShort {
            a: tau_a,
            b: tau_b,
            got: tau_b - tau_a,
            needed,
        });
    }

    let i0 = (tau_a / dt_sample).ceil() as usize;
    let i1 = ((tau_b / dt_sample).floor() as usize).min(samples.len() - 1);
    let m = i1 - i0 + 1;

    let mean = samples[i0..=i1].iter().sum::<f64>() / m as f64;
    let mut buf: Vec<Complex64> = (0..m)
        .map(|k| {
            let w = 0.5 * (1.0 - (std::f64::consts::TAU * k as f64 / (m - 1) as f64).cos());
            Complex64::new(w * (samples[i0 + k] - mean), 0.0)
        })
        .collect();

    FftPlanner::new().plan_fft_forward(m).process(&mut buf);

    let n_bins = m / 2 + 1;
    let d_omega = std::f64::consts::TAU / (m as f64 * dt_sample);
    let freq: Vec<f64> = (0..n_bins).map(|k| k as f64 * d_omega).collect();
    let amplitude: Vec<f64> = buf[..n_bins].iter().map(|c| c.norm() / m as f64).collect();

    // Dominant line, DC excluded (the window is mean-removed anyway).
    let mut k_peak = 1;
    for k in 2..n_bins {
        if amplitude[k] > amplitude[k_peak] {
            k_peak = k;
        }
    }

    // Any local maximum near the drive line, clear of the main lobe,
    // above a tenth of the dominant peak.
    let lo = (1.0 - SIDEBAND_REL_BAND) * drive_omega;
    let hi = (1.0 + SIDEBAND_REL_BAND) * drive_omega;
    let mut sidebands = false;
    for k in 1..n_bins - 1 {
        if freq[k] < lo || freq[k] > hi || k.abs_diff(k_peak) <= 3 {
            continue;
        }
        let local_max = amplitude[k] >= amplitude[k - 1] && amplitude[k] >= amplitude[k + 1];
        if local_max && amplitude[k] > SIDEBAND_REL_AMP * amplitude[k_peak] {
            sidebands = true;
            break;
        }
    }

    Ok(Spectrum {
        dominant_freq: freq[k_peak],
        dominant_amplitude: amplitude[k_peak],
        freq,
        amplitude,
        sidebands,
        n_samples: m,
    })
}

/// Two-column CSV export: normalized frequency, amplitude.
pub fn write_spectrum_csv(path: &Path, spec: &Spectrum) -> std::io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "frequency,amplitude")?;
    for (f, a) in spec.freq.iter().zip(&spec.amplitude) {
        writeln!(w, "{f},{a}")?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{LatticeState, SimOutcome};

    fn outcome_with(e_input: f64, e_down: f64) -> SimOutcome {
        SimOutcome {
            probes: Default::default(),
            e_input_series: vec![],
            e_down_series: vec![],
            final_e_input: e_input,
            final_e_down: e_down,
            diverged: None,
            final_state: LatticeState::zero(4),
            omega_hat: 1.2,
            dt_sample: 0.1,
            t_final: 1500.0,
        }
    }

    #[test]
    fn measures_basic_ratio_and_delta() {
        let lr = outcome_with(100.0, 26.0);
        let rl = outcome_with(100.0, 26.0 / 10f64.powi(8));
        let m = measures(&lr, &rl).unwrap();
        assert!((m.eta_lr - 0.26).abs() < 1e-15);
        assert!((m.delta - 8.0).abs() < 1e-12);
        assert!(!m.degenerate);
        assert_eq!(m.t_horizon, 1500.0);
    }

    #[test]
    fn identical_outcomes_give_exactly_zero_delta() {
        let a = outcome_with(77.0, 13.5);
        let m = measures(&a, &a.clone()).unwrap();
        assert_eq!(m.delta, 0.0);
    }

    #[test]
    fn delta_antisymmetry_is_exact() {
        let lr = outcome_with(90.0, 17.3);
        let rl = outcome_with(88.0, 0.0041);
        let fwd = measures(&lr, &rl).unwrap();
        let rev = measures(&rl, &lr).unwrap();
        assert_eq!(fwd.delta, -rev.delta);
    }

    #[test]
    fn degenerate_floor_yields_sentinel_not_division() {
        let lr = outcome_with(100.0, 25.0);
        let rl = outcome_with(100.0, 1e-31);
        let m = measures(&lr, &rl).unwrap();
        assert!(m.degenerate);
        assert_eq!(m.delta, f64::INFINITY);

        let m = measures(&rl, &lr).unwrap();
        assert_eq!(m.delta, f64::NEG_INFINITY);

        let m = measures(&rl, &rl.clone()).unwrap();
        assert!(m.degenerate);
        assert_eq!(m.delta, 0.0);
    }

    #[test]
    fn diverged_and_zero_input_are_errors() {
        let mut bad = outcome_with(100.0, 1.0);
        bad.diverged = Some(12.5);
        let ok = outcome_with(100.0, 1.0);
        assert!(matches!(
            measures(&bad, &ok),
            Err(AnalysisError::DivergedInput(_))
        ));
        let unforced = outcome_with(0.0, 0.0);
        assert!(matches!(
            measures(&unforced, &ok),
            Err(AnalysisError::ZeroInputEnergy)
        ));
    }

    fn pair(eta: f64, delta: f64) -> MeasurePair {
        MeasurePair {
            eta_lr: eta,
            eta_rl: 0.0,
            delta,
            t_horizon: 1500.0,
            degenerate: false,
        }
    }

    #[test]
    fn classify_branches() {
        assert_eq!(classify(&pair(0.26, 8.435)), BranchLabel::Hnrb);
        assert_eq!(classify(&pair(0.26, 2.42)), BranchLabel::Inrb);
        assert_eq!(classify(&pair(0.26, 0.0)), BranchLabel::Nrb);
        assert_eq!(classify(&pair(0.15, 8.0)), BranchLabel::LowTransmission);
        // Boundary conventions and totality.
        assert_eq!(classify(&pair(0.2, 8.0)), BranchLabel::LowTransmission);
        assert_eq!(classify(&pair(0.3, 5.0)), BranchLabel::Hnrb);
        assert_eq!(classify(&pair(0.3, 1.0)), BranchLabel::Inrb);
        assert_eq!(classify(&pair(0.3, 10.5)), BranchLabel::Hnrb);
        assert_eq!(classify(&pair(0.3, f64::INFINITY)), BranchLabel::Hnrb);
        assert_eq!(classify(&pair(0.3, f64::NEG_INFINITY)), BranchLabel::Nrb);
    }

    #[test]
    fn branch_label_round_trip() {
        for b in [
            BranchLabel::Hnrb,
            BranchLabel::Inrb,
            BranchLabel::Nrb,
            BranchLabel::LowTransmission,
        ] {
            assert_eq!(b.to_string().parse::<BranchLabel>().unwrap(), b);
        }
    }

    #[test]
    fn desirability_thresholds_are_strict() {
        assert!(is_desirable(&pair(0.26, 8.435), DESIRABLE_ETA_MIN, DESIRABLE_DELTA_MIN));
        assert!(!is_desirable(&pair(0.19, 9.0), DESIRABLE_ETA_MIN, DESIRABLE_DELTA_MIN));
        assert!(!is_desirable(&pair(0.2, 9.0), DESIRABLE_ETA_MIN, DESIRABLE_DELTA_MIN));
        assert!(!is_desirable(&pair(0.26, 4.5), DESIRABLE_ETA_MIN, DESIRABLE_DELTA_MIN));
        assert!(is_desirable(&pair(0.26, 4.5), DESIRABLE_ETA_MIN, KERNEL_DELTA_MIN));
    }

    fn tone_series(omega: f64, dt: f64, n: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..n).map(|k| f(omega * k as f64 * dt)).collect()
    }

    #[test]
    fn pure_tone_has_single_peak_no_sidebands() {
        let omega = 1.3;
        let dt = 0.1;
        let n = 6001;
        let series = tone_series(omega, dt, n, f64::cos);
        let spec = spectrum(&series, dt, (0.0, 600.0), omega).unwrap();
        assert!(
            (spec.dominant_freq - omega).abs() < 0.02,
            "peak at {}",
            spec.dominant_freq
        );
        assert!(!spec.sidebands);
    }

    #[test]
    fn amplitude_modulation_sets_sideband_flag() {
        // cos(wt)(1 + 0.5 cos(0.05 wt)) has lines at 0.95w and 1.05w with a
        // quarter of the carrier amplitude.
        let omega = 1.3;
        let dt = 0.1;
        let n = 6001;
        let series: Vec<f64> = (0..n)
            .map(|k| {
                let t = k as f64 * dt;
                (omega * t).cos() * (1.0 + 0.5 * (0.05 * omega * t).cos())
            })
            .collect();
        let spec = spectrum(&series, dt, (0.0, 600.0), omega).unwrap();
        assert!(spec.sidebands);
    }

    #[test]
    fn window_errors() {
        let series = tone_series(1.3, 0.1, 2001, f64::cos);
        assert!(matches!(
            spectrum(&series, 0.1, (0.0, 100.0), 1.3),
            Err(AnalysisError::WindowTooShort { .. })
        ));
        assert!(matches!(
            spectrum(&series, 0.1, (0.0, 500.0), 1.3),
            Err(AnalysisError::WindowOutOfRange { .. })
        ));
    }

    #[test]
    fn parseval_power_identity() {
        // Oracle: recompute the windowed signal power directly from the
        // mean-removed, Hann-tapered samples and compare with the spectrum.
        let omega = 1.21;
        let dt = 0.1;
        let n = 5000; // even sample count exercises the Nyquist bin
        let series: Vec<f64> = (0..n)
            .map(|k| {
                let t = k as f64 * dt;
                0.7 * (omega * t).cos() + 0.2 * (2.3 * t).sin() + 0.05
            })
            .collect();
        let (a, b) = (0.0, (n - 1) as f64 * dt);
        let spec = spectrum(&series, dt, (a, b), omega).unwrap();

        let m = spec.n_samples;
        let mean = series[..m].iter().sum::<f64>() / m as f64;
        let power: f64 = (0..m)
            .map(|k| {
                let w = 0.5 * (1.0 - (std::f64::consts::TAU * k as f64 / (m - 1) as f64).cos());
                let v = w * (series[k] - mean);
                v * v
            })
            .sum::<f64>()
            / m as f64;

        let rel = ((spec.power_sum() - power) / power).abs();
        assert!(rel < 1e-6, "Parseval mismatch: {rel:.3e}");
    }

    #[test]
    fn spectrum_csv_two_columns() {
        let series = tone_series(1.3, 0.1, 3001, f64::cos);
        let spec = spectrum(&series, 0.1, (0.0, 300.0), 1.3).unwrap();
        let dir = std::env::temp_dir().join("waveguide-analysis-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("spec.csv");
        write_spectrum_csv(&path, &spec).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("frequency,amplitude\n"));
        assert_eq!(text.lines().count(), 1 + spec.freq.len());
    }
}
