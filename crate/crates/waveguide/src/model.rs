//! Normalized parameterization of the gated waveguide.
//!
//! Everything is dimensionless: `d` is the intercoupling stiffness ratio,
//! `alpha1`/`alpha2` the cubic gate coefficients, `zeta` the normalized
//! damping ratio (the uniform damping actually applied to the oscillators is
//! `xi = d * zeta`), `sigma` the grounding-stiffness detuning of the gate
//! oscillators, `a_p` the excitation magnitude and `theta` the excitation
//! wavenumber. The drive frequency is never stored; it is derived from the
//! dispersion relation
//!
//! ```text
//! omega_hat(theta, d) = sqrt(1 + 4 d sin^2(theta / 2)),   0 <= theta <= pi
//! ```
//!
//! whose limiting values define the passband `[1, sqrt(1 + 4d)]` of the
//! infinite linear chain.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use thiserror::Error;

/// Default oscillator count per sub-waveguide.
pub const DEFAULT_N_PER_SIDE: usize = 200;
/// Default total simulated normalized time.
pub const DEFAULT_T_TOTAL: f64 = 1500.0;
/// Default fixed integrator step.
pub const DEFAULT_DT: f64 = 0.02;
/// Default forced oscillator index.
pub const DEFAULT_FORCED_INDEX: usize = 4;

/// Margin kept away from the band edges when sampling `theta`: near
/// `theta = 0` or `pi` the group velocity vanishes and runs do not reach
/// steady state within any practical horizon.
pub const THETA_MARGIN: f64 = 0.05 * PI;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("theta = {0} outside [0, pi]")]
    ThetaOutOfRange(f64),
    #[error("coupling d = {0} must be positive")]
    NonPositiveCoupling(f64),
    #[error("failed to read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
}

/// Dispersion relation of the infinite linear (ungated) chain.
pub fn omega_hat(theta: f64, d: f64) -> Result<f64, ModelError> {
    if !(0.0..=PI).contains(&theta) || !theta.is_finite() {
        return Err(ModelError::ThetaOutOfRange(theta));
    }
    if !(d > 0.0) {
        return Err(ModelError::NonPositiveCoupling(d));
    }
    let s = (theta / 2.0).sin();
    Ok((1.0 + 4.0 * d * s * s).sqrt())
}

/// Propagating-wave frequency band `(1, sqrt(1 + 4d))` of the linear chain.
pub fn passband(d: f64) -> Result<(f64, f64), ModelError> {
    if !(d > 0.0) {
        return Err(ModelError::NonPositiveCoupling(d));
    }
    Ok((1.0, (1.0 + 4.0 * d).sqrt()))
}

/// Side of the waveguide the harmonic excitation is applied to.
///
/// Forcing is always simulated on the `x` side; `Rl` is realized by swapping
/// the two gate coefficients, which is equivalent to moving the excitation to
/// the other sub-waveguide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Lr,
    Rl,
}

impl Direction {
    /// Gate coefficients in the order encountered by the travelling wave.
    pub fn gate_coefficients(self, config: &WaveguideConfig) -> (f64, f64) {
        match self {
            Direction::Lr => (config.alpha1, config.alpha2),
            Direction::Rl => (config.alpha2, config.alpha1),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Direction::Lr => write!(f, "lr"),
            Direction::Rl => write!(f, "rl"),
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lr" | "l-r" => Ok(Direction::Lr),
            "rl" | "r-l" => Ok(Direction::Rl),
            other => Err(format!("unknown direction `{other}` (expected lr or rl)")),
        }
    }
}

/// Full normalized parameter set of one simulation run.
///
/// The JSON form of this struct is the on-disk config format; unknown keys
/// are rejected so typos in sweep scripts fail loudly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveguideConfig {
    /// Oscillators per sub-waveguide (N).
    pub n_per_side: usize,
    /// Normalized intercoupling stiffness.
    pub d: f64,
    /// Cubic coefficient of the first gate.
    pub alpha1: f64,
    /// Cubic coefficient of the second gate.
    pub alpha2: f64,
    /// Normalized critical damping ratio; the applied damping is `d * zeta`.
    pub zeta: f64,
    /// Grounding-stiffness detuning of the gate oscillators.
    pub sigma: f64,
    /// Normalized excitation magnitude.
    pub a_p: f64,
    /// Excitation wavenumber, radians in (0, pi).
    pub theta: f64,
    /// Forced oscillator index on the upstream side.
    pub p: usize,
    /// Total simulated normalized time.
    pub t_total: f64,
    /// Integrator step size.
    pub dt: f64,
}

impl WaveguideConfig {
    /// Drive frequency derived from the stored wavenumber.
    pub fn omega_hat(&self) -> Result<f64, ModelError> {
        omega_hat(self.theta, self.d)
    }

    /// Uniform damping coefficient applied to every oscillator.
    pub fn xi(&self) -> f64 {
        self.d * self.zeta
    }

    /// Copy with the two gate coefficients interchanged.
    pub fn with_swapped_gates(&self) -> Self {
        let mut c = self.clone();
        std::mem::swap(&mut c.alpha1, &mut c.alpha2);
        c
    }

    /// Load from a flat JSON document. Unknown keys are an error.
    pub fn from_json_file(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ModelError::Parse {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Names of the bundled configuration presets.
pub const PRESET_NAMES: [&str; 4] = ["system1", "system2", "system3", "system4"];

/// Look up a bundled preset by name (case-insensitive).
pub fn preset(name: &str) -> Option<WaveguideConfig> {
    let base = WaveguideConfig {
        n_per_side: DEFAULT_N_PER_SIDE,
        d: 0.0,
        alpha1: 0.0,
        alpha2: 0.0,
        zeta: 0.0,
        sigma: 0.0,
        a_p: 0.0,
        theta: 0.0,
        p: DEFAULT_FORCED_INDEX,
        t_total: DEFAULT_T_TOTAL,
        dt: DEFAULT_DT,
    };
    match name.to_ascii_lowercase().as_str() {
        "system1" => Some(WaveguideConfig {
            d: 0.5,
            alpha1: 0.15,
            alpha2: 0.3,
            zeta: 0.013,
            sigma: -1.5,
            a_p: 1.0,
            theta: PI / 6.0,
            ..base
        }),
        "system2" => Some(WaveguideConfig {
            d: 0.35,
            alpha1: 1.81,
            alpha2: 3.45,
            zeta: 0.023,
            sigma: -1.4,
            a_p: 0.46,
            theta: 2.5 * PI / 6.0,
            ..base
        }),
        "system3" => Some(WaveguideConfig {
            d: 0.4,
            alpha1: 3.9,
            alpha2: 3.1,
            zeta: 0.013,
            sigma: -1.4,
            a_p: 0.4,
            theta: 3.0 * PI / 6.0,
            ..base
        }),
        "system4" => Some(WaveguideConfig {
            d: 0.275,
            alpha1: 1.7033,
            alpha2: 3.0437,
            zeta: 0.013,
            sigma: -1.4,
            a_p: 0.54,
            theta: 1.67 * PI / 6.0,
            ..base
        }),
        _ => None,
    }
}

/// Outcome of [`validate`]: the list of violated invariants, empty when the
/// configuration is simulable.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            write!(f, "ok")
        } else {
            for v in &self.violations {
                writeln!(f, "violation: {v}")?;
            }
            Ok(())
        }
    }
}

/// Check every configuration invariant, collecting all violations rather
/// than stopping at the first.
pub fn validate(config: &WaveguideConfig) -> ValidationReport {
    let mut violations = Vec::new();
    let c = config;

    for (name, v) in [
        ("d", c.d),
        ("alpha1", c.alpha1),
        ("alpha2", c.alpha2),
        ("zeta", c.zeta),
        ("sigma", c.sigma),
        ("a_p", c.a_p),
        ("theta", c.theta),
        ("t_total", c.t_total),
        ("dt", c.dt),
    ] {
        if !v.is_finite() {
            violations.push(format!("{name} is not finite"));
        }
    }

    if !(c.d > 0.0) {
        violations.push(format!("d = {} must be positive", c.d));
    }
    if c.zeta < 0.0 {
        violations.push(format!("zeta = {} must be non-negative", c.zeta));
    }
    if !(c.dt > 0.0) {
        violations.push(format!("dt = {} must be positive", c.dt));
    }
    if !(c.t_total > 0.0) {
        violations.push(format!("t_total = {} must be positive", c.t_total));
    }
    if c.theta <= 0.0 || c.theta >= PI {
        violations.push(format!(
            "theta = {} at band edge: zero group velocity (need 0 < theta < pi)",
            c.theta
        ));
    }
    if c.p < 1 {
        violations.push("forced index p must be >= 1 (the gate oscillator is unforced)".into());
    }
    if c.n_per_side < c.p + 2 {
        violations.push(format!(
            "n_per_side = {} too small: need >= p + 2 = {} so the forcing and flux probe sites exist",
            c.n_per_side,
            c.p + 2
        ));
    }
    if c.d > 0.0 && c.theta > 0.0 && c.theta < PI {
        // Derived drive frequency must sit strictly inside the passband.
        let w = omega_hat(c.theta, c.d).expect("range checked above");
        let (lo, hi) = passband(c.d).expect("d checked above");
        if w <= lo || w >= hi {
            violations.push(format!(
                "derived omega_hat = {w} not strictly inside passband ({lo}, {hi})"
            ));
        }
    }

    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn omega_hat_matches_closed_form() {
        // theta = 0 forces unity; theta = pi hits the band edge.
        assert_eq!(omega_hat(0.0, 0.5).unwrap(), 1.0);
        let edge = omega_hat(PI, 0.5).unwrap();
        assert!((edge - 3.0_f64.sqrt()).abs() < 1e-15, "got {edge}");
        // High-precision evaluation of the dispersion relation at pi/6.
        let w = omega_hat(PI / 6.0, 0.5).unwrap();
        assert!((w - 1.064_882_433_048_626).abs() < 1e-12, "got {w}");
    }

    #[test]
    fn omega_hat_domain_errors() {
        assert!(omega_hat(-0.1, 0.5).is_err());
        assert!(omega_hat(PI + 0.1, 0.5).is_err());
        assert!(omega_hat(1.0, 0.0).is_err());
        assert!(omega_hat(1.0, -0.5).is_err());
        assert!(omega_hat(f64::NAN, 0.5).is_err());
    }

    #[test]
    fn passband_limits() {
        assert_eq!(passband(0.5).unwrap(), (1.0, 3.0_f64.sqrt()));
        let (_, hi) = passband(0.2).unwrap();
        assert!((hi - 1.341_640_786_499_873_8).abs() < 1e-14);
        let (_, hi) = passband(0.6).unwrap();
        assert!((hi - 1.843_908_891_458_577_5).abs() < 1e-14);
        assert!(passband(0.0).is_err());
    }

    #[test]
    fn omega_hat_monotone_and_inside_passband() {
        for &d in &[0.2, 0.35, 0.5, 0.6] {
            let (lo, hi) = passband(d).unwrap();
            let mut prev = omega_hat(0.0, d).unwrap();
            for k in 1..=400 {
                let theta = PI * k as f64 / 400.0;
                let w = omega_hat(theta, d).unwrap();
                assert!(w > prev, "not monotone at theta={theta}, d={d}");
                assert!(w >= lo && w <= hi + 1e-15);
                prev = w;
            }
        }
    }

    #[test]
    fn passband_width_monotone_in_d() {
        let mut prev = 0.0;
        for k in 1..=50 {
            let d = 0.02 * k as f64;
            let (lo, hi) = passband(d).unwrap();
            let width = hi - lo;
            assert!(width > prev);
            prev = width;
        }
    }

    #[test]
    fn presets_validate_clean() {
        for name in PRESET_NAMES {
            let cfg = preset(name).unwrap();
            let report = validate(&cfg);
            assert!(report.is_ok(), "{name}: {report}");
        }
        assert!(preset("system9").is_none());
    }

    #[test]
    fn preset_table_values() {
        let s3 = preset("system3").unwrap();
        assert_eq!(s3.d, 0.4);
        assert_eq!((s3.alpha1, s3.alpha2), (3.9, 3.1));
        assert_eq!(s3.zeta, 0.013);
        assert_eq!(s3.sigma, -1.4);
        assert_eq!(s3.a_p, 0.4);
        assert_eq!(s3.theta, PI / 2.0);
        assert_eq!(s3.p, 4);
        assert_eq!(s3.n_per_side, 200);
        assert_eq!(s3.t_total, 1500.0);
    }

    #[test]
    fn validate_flags_band_edge_and_degenerate_coupling() {
        let mut cfg = preset("system1").unwrap();
        cfg.theta = 0.0;
        let report = validate(&cfg);
        assert!(report.violations.iter().any(|v| v.contains("band edge")));

        let mut cfg = preset("system1").unwrap();
        cfg.d = 0.0;
        assert!(!validate(&cfg).is_ok());
    }

    #[test]
    fn config_file_round_trip_and_unknown_key() {
        let dir = std::env::temp_dir().join("waveguide-model-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("cfg.json");
        let cfg = preset("system2").unwrap();
        std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
        let loaded = WaveguideConfig::from_json_file(&path).unwrap();
        assert_eq!(loaded, cfg);

        let path2 = dir.join("bad.json");
        let mut v: serde_json::Value = serde_json::to_value(&cfg).unwrap();
        v["alhpa1"] = 0.2.into();
        std::fs::write(&path2, serde_json::to_string(&v).unwrap()).unwrap();
        assert!(WaveguideConfig::from_json_file(&path2).is_err());
    }

    #[test]
    fn direction_swaps_gate_order() {
        let cfg = preset("system1").unwrap();
        assert_eq!(Direction::Lr.gate_coefficients(&cfg), (0.15, 0.3));
        assert_eq!(Direction::Rl.gate_coefficients(&cfg), (0.3, 0.15));
        let swapped = cfg.with_swapped_gates();
        assert_eq!((swapped.alpha1, swapped.alpha2), (0.3, 0.15));
    }
}
