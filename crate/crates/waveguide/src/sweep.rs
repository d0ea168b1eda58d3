//! Randomized design-space campaigns and damping sweeps.
//!
//! Dataset generation is deterministic and order-independent: record `i`
//! draws its parameters from its own ChaCha8 sub-stream (`set_stream(i)` on
//! the campaign seed), so any degree of parallelism produces byte-identical
//! datasets. Damping sweeps optionally continue each grid point from the
//! final state of the previous one to expose coexisting solution branches.

use crate::analysis::{classify, measures, BranchLabel, MeasurePair};
use crate::model::{omega_hat, validate, Direction, WaveguideConfig};
use crate::sim::{integrate, integrate_from, LatticeState, SimOutcome};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("sweep spec invalid: {0}")]
    InvalidSpec(String),
    #[error("damping grid invalid: {0}")]
    InvalidGrid(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid sweep spec {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("dataset {path} line {line}: {message}")]
    Csv {
        path: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Sim(#[from] crate::sim::SimError),
}

/// Closed sampling interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interval {
    pub min: f64,
    pub max: f64,
}

impl Interval {
    pub fn new(min: f64, max: f64) -> Self {
        Interval { min, max }
    }
}

/// Per-parameter sampling ranges of a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamRanges {
    pub a_p: Interval,
    pub alpha1: Interval,
    pub alpha2: Interval,
    pub d: Interval,
    pub theta: Interval,
}

impl Default for ParamRanges {
    fn default() -> Self {
        ParamRanges {
            a_p: Interval::new(0.2, 1.0),
            alpha1: Interval::new(0.0, 6.0),
            alpha2: Interval::new(0.0, 6.0),
            d: Interval::new(0.2, 0.6),
            theta: Interval::new(
                crate::model::THETA_MARGIN,
                std::f64::consts::PI - crate::model::THETA_MARGIN,
            ),
        }
    }
}

/// Parameters held constant across a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixedParams {
    pub sigma: f64,
    pub zeta: f64,
    pub p: usize,
    pub n_per_side: usize,
    pub t_total: f64,
    pub dt: f64,
}

impl Default for FixedParams {
    fn default() -> Self {
        FixedParams::full_scale()
    }
}

impl FixedParams {
    /// Full reproduction scale: N = 200, T = 1500.
    pub fn full_scale() -> Self {
        FixedParams {
            sigma: -1.4,
            zeta: 0.013,
            p: crate::model::DEFAULT_FORCED_INDEX,
            n_per_side: crate::model::DEFAULT_N_PER_SIDE,
            t_total: crate::model::DEFAULT_T_TOTAL,
            dt: crate::model::DEFAULT_DT,
        }
    }

    /// Desk-scale profile (N = 60, T = 800) for fast dataset generation.
    /// Branch structure survives at this scale but the full-scale golden
    /// numbers are only claimed at `full_scale`.
    pub fn reduced() -> Self {
        FixedParams {
            n_per_side: 60,
            t_total: 800.0,
            ..FixedParams::full_scale()
        }
    }
}

/// A randomized campaign over the five-dimensional design space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub ranges: ParamRanges,
    pub n_samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub fixed: FixedParams,
}

impl SweepSpec {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        SweepSpec {
            ranges: ParamRanges::default(),
            n_samples,
            seed,
            fixed: FixedParams::default(),
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self, SweepError> {
        let text = std::fs::read_to_string(path).map_err(|source| SweepError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| SweepError::Parse {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        if self.n_samples == 0 {
            return Err(SweepError::InvalidSpec("n_samples must be positive".into()));
        }
        let pairs = [
            ("a_p", self.ranges.a_p),
            ("alpha1", self.ranges.alpha1),
            ("alpha2", self.ranges.alpha2),
            ("d", self.ranges.d),
            ("theta", self.ranges.theta),
        ];
        for (name, r) in pairs {
            if !r.min.is_finite() || !r.max.is_finite() || r.min > r.max {
                return Err(SweepError::InvalidSpec(format!(
                    "range {name} = [{}, {}] is not a valid interval",
                    r.min, r.max
                )));
            }
        }
        if self.ranges.d.min <= 0.0 {
            return Err(SweepError::InvalidSpec("d range must stay positive".into()));
        }
        if self.ranges.theta.min <= 0.0 || self.ranges.theta.max >= std::f64::consts::PI {
            return Err(SweepError::InvalidSpec(
                "theta range must stay strictly inside (0, pi)".into(),
            ));
        }
        // Probe one corner configuration through full validation.
        let cfg = self.build_config(&SweepPoint {
            a_p: self.ranges.a_p.min,
            alpha1: self.ranges.alpha1.min,
            alpha2: self.ranges.alpha2.min,
            d: self.ranges.d.min,
            theta: self.ranges.theta.min,
        });
        let report = validate(&cfg);
        if !report.is_ok() {
            return Err(SweepError::InvalidSpec(format!(
                "fixed parameters do not validate: {report}"
            )));
        }
        Ok(())
    }

    /// Parameter draw for record `index`: an independent ChaCha8 sub-stream
    /// per record, drawn in the documented order a_p, alpha1, alpha2, d,
    /// theta. Pure, so callers may sample without simulating.
    pub fn sample_point(&self, index: u64) -> SweepPoint {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        let mut draw = |r: Interval| {
            if r.min == r.max {
                // Still consume one variate so collapsed ranges do not shift
                // the draws of the remaining parameters.
                let _ = rng.random::<f64>();
                r.min
            } else {
                rng.random_range(r.min..=r.max)
            }
        };
        SweepPoint {
            a_p: draw(self.ranges.a_p),
            alpha1: draw(self.ranges.alpha1),
            alpha2: draw(self.ranges.alpha2),
            d: draw(self.ranges.d),
            theta: draw(self.ranges.theta),
        }
    }

    pub fn build_config(&self, point: &SweepPoint) -> WaveguideConfig {
        WaveguideConfig {
            n_per_side: self.fixed.n_per_side,
            d: point.d,
            alpha1: point.alpha1,
            alpha2: point.alpha2,
            zeta: self.fixed.zeta,
            sigma: self.fixed.sigma,
            a_p: point.a_p,
            theta: point.theta,
            p: self.fixed.p,
            t_total: self.fixed.t_total,
            dt: self.fixed.dt,
        }
    }
}

/// One sampled location in the design space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub a_p: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub d: f64,
    pub theta: f64,
}

/// Outcome status of one record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunFlag {
    Ok,
    /// A downstream energy sat at the degenerate floor; delta is a sentinel.
    Degenerate,
    /// A direction blew up; outputs are NaN.
    Diverged,
}

impl fmt::Display for RunFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RunFlag::Ok => "ok",
            RunFlag::Degenerate => "degenerate",
            RunFlag::Diverged => "diverged",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for RunFlag {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ok" => Ok(RunFlag::Ok),
            "degenerate" => Ok(RunFlag::Degenerate),
            "diverged" => Ok(RunFlag::Diverged),
            other => Err(format!("unknown run flag `{other}`")),
        }
    }
}

/// One completed design-space sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub index: usize,
    pub a_p: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub omega_hat: f64,
    pub d: f64,
    pub theta: f64,
    pub eta_lr: f64,
    pub eta_rl: f64,
    pub delta: f64,
    pub branch: Option<BranchLabel>,
    pub flag: RunFlag,
    /// Not persisted to CSV.
    pub wall_time_s: f64,
}

impl SweepRecord {
    /// Surrogate input vector `(A_p, alpha1, alpha2, omega_hat, d)`.
    pub fn inputs(&self) -> [f64; 5] {
        [self.a_p, self.alpha1, self.alpha2, self.omega_hat, self.d]
    }

    /// Usable for training/evaluation: completed with finite measures.
    pub fn usable(&self) -> bool {
        self.flag == RunFlag::Ok
    }
}

/// Run record `index` of a campaign: one L-R and one R-L integration plus
/// the derived measures.
pub fn run_record(spec: &SweepSpec, index: usize) -> SweepRecord {
    let start = Instant::now();
    let point = spec.sample_point(index as u64);
    let config = spec.build_config(&point);
    let w = omega_hat(point.theta, point.d).expect("spec ranges validated");

    let mut record = SweepRecord {
        index,
        a_p: point.a_p,
        alpha1: point.alpha1,
        alpha2: point.alpha2,
        omega_hat: w,
        d: point.d,
        theta: point.theta,
        eta_lr: f64::NAN,
        eta_rl: f64::NAN,
        delta: f64::NAN,
        branch: None,
        flag: RunFlag::Diverged,
        wall_time_s: 0.0,
    };

    let outcome = integrate(&config, Direction::Lr)
        .and_then(|lr| integrate(&config, Direction::Rl).map(|rl| (lr, rl)));
    if let Ok((lr, rl)) = outcome {
        match measures(&lr, &rl) {
            Ok(m) => {
                record.eta_lr = m.eta_lr;
                record.eta_rl = m.eta_rl;
                record.delta = m.delta;
                record.branch = Some(classify(&m));
                record.flag = if m.degenerate {
                    RunFlag::Degenerate
                } else {
                    RunFlag::Ok
                };
            }
            Err(_) => {
                record.flag = RunFlag::Diverged;
            }
        }
    }
    record.wall_time_s = start.elapsed().as_secs_f64();
    record
}

/// Generate the full campaign. Records are computed in parallel (install a
/// rayon pool to bound the worker count) and returned in draw order, so the
/// dataset for a given spec is deterministic regardless of scheduling.
pub fn generate_dataset(spec: &SweepSpec) -> Result<Vec<SweepRecord>, SweepError> {
    spec.validate()?;
    Ok((0..spec.n_samples)
        .into_par_iter()
        .map(|i| run_record(spec, i))
        .collect())
}

const DATASET_HEADER: &str = "a_p,alpha1,alpha2,omega_hat,d,theta,eta_lr,eta_rl,delta,branch,flag";

/// Format one record as a dataset CSV line. Shortest-round-trip float
/// formatting keeps the file byte-stable and lossless.
pub fn dataset_csv_line(r: &SweepRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        r.a_p,
        r.alpha1,
        r.alpha2,
        r.omega_hat,
        r.d,
        r.theta,
        r.eta_lr,
        r.eta_rl,
        r.delta,
        r.branch.map(|b| b.to_string()).unwrap_or_default(),
        r.flag
    )
}

/// Write a dataset CSV with the contract header.
pub fn write_dataset_csv(
    path: &Path,
    records: &[SweepRecord],
    manifest_ref: Option<&str>,
) -> std::io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    if let Some(m) = manifest_ref {
        writeln!(w, "# manifest: {m}")?;
    }
    writeln!(w, "{DATASET_HEADER}")?;
    for r in records {
        writeln!(w, "{}", dataset_csv_line(r))?;
    }
    w.flush()
}

/// Read a dataset CSV produced by [`write_dataset_csv`]. Comment lines are
/// skipped; record indices are assigned by row order.
pub fn read_dataset_csv(path: &Path) -> Result<Vec<SweepRecord>, SweepError> {
    let text = std::fs::read_to_string(path).map_err(|source| SweepError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let err = |line: usize, message: String| SweepError::Csv {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut records = Vec::new();
    let mut saw_header = false;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            if line != DATASET_HEADER {
                return Err(err(lineno + 1, format!("expected header `{DATASET_HEADER}`")));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(err(lineno + 1, format!("expected 11 fields, got {}", fields.len())));
        }
        let num = |i: usize| -> Result<f64, SweepError> {
            fields[i]
                .parse::<f64>()
                .map_err(|e| err(lineno + 1, format!("field {i}: {e}")))
        };
        let branch = if fields[9].is_empty() {
            None
        } else {
            Some(
                fields[9]
                    .parse::<BranchLabel>()
                    .map_err(|e| err(lineno + 1, e))?,
            )
        };
        records.push(SweepRecord {
            index: records.len(),
            a_p: num(0)?,
            alpha1: num(1)?,
            alpha2: num(2)?,
            omega_hat: num(3)?,
            d: num(4)?,
            theta: num(5)?,
            eta_lr: num(6)?,
            eta_rl: num(7)?,
            delta: num(8)?,
            branch,
            flag: fields[10].parse().map_err(|e: String| err(lineno + 1, e))?,
            wall_time_s: 0.0,
        });
    }
    if !saw_header {
        return Err(err(0, "missing header".into()));
    }
    Ok(records)
}

/// Sidecar metadata persisted next to a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub spec: SweepSpec,
    pub code_version: String,
    pub record_count: usize,
    pub ok_count: usize,
    pub degenerate_count: usize,
    pub diverged_count: usize,
}

impl DatasetMeta {
    pub fn new(spec: &SweepSpec, records: &[SweepRecord]) -> Self {
        DatasetMeta {
            spec: spec.clone(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            record_count: records.len(),
            ok_count: records.iter().filter(|r| r.flag == RunFlag::Ok).count(),
            degenerate_count: records
                .iter()
                .filter(|r| r.flag == RunFlag::Degenerate)
                .count(),
            diverged_count: records
                .iter()
                .filter(|r| r.flag == RunFlag::Diverged)
                .count(),
        }
    }
}

/// How successive damping-grid points obtain their initial conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepMode {
    /// Every grid point starts from rest.
    Cold,
    /// Ascending grid; each point inherits the previous final state.
    ContinueUp,
    /// Descending traversal of the same grid, reported ascending.
    ContinueDown,
}

impl fmt::Display for SweepMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SweepMode::Cold => "cold",
            SweepMode::ContinueUp => "continue-up",
            SweepMode::ContinueDown => "continue-down",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for SweepMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cold" => Ok(SweepMode::Cold),
            "continue-up" | "continue_up" | "up" => Ok(SweepMode::ContinueUp),
            "continue-down" | "continue_down" | "down" => Ok(SweepMode::ContinueDown),
            other => Err(format!("unknown sweep mode `{other}`")),
        }
    }
}

/// Per-grid-point measurements of a damping sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct DampingPoint {
    pub zeta: f64,
    pub eta_lr: f64,
    pub e_down_lr: f64,
    pub eta_rl: f64,
    pub e_down_rl: f64,
    pub delta: f64,
    pub branch: Option<BranchLabel>,
    pub flag: RunFlag,
}

/// Result of a damping sweep over one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct DampingSweepResult {
    pub mode: SweepMode,
    pub points: Vec<DampingPoint>,
    /// Grid intervals bracketing transmissibility jumps per direction.
    pub critical_lr: Vec<(f64, f64)>,
    pub critical_rl: Vec<(f64, f64)>,
}

/// Relative jump in eta treated as a bifurcation signature.
pub const CRITICAL_JUMP_REL: f64 = 0.5;

/// Hard limits of the damping grid.
pub const ZETA_GRID_MAX: f64 = 0.05;

fn directional_run(
    base: &WaveguideConfig,
    direction: Direction,
    grid: &[f64],
    mode: SweepMode,
) -> Result<Vec<Result<SimOutcome, f64>>, SweepError> {
    // Ok(outcome) per grid point, Err(tau) when that point diverged.
    let run_at = |zeta: f64, init: Option<&LatticeState>| -> Result<Result<SimOutcome, f64>, SweepError> {
        let mut cfg = base.clone();
        cfg.zeta = zeta;
        let out = integrate_from(&cfg, direction, init)?;
        Ok(match out.diverged {
            Some(t) => Err(t),
            None => Ok(out),
        })
    };

    match mode {
        SweepMode::Cold => grid
            .par_iter()
            .map(|&z| run_at(z, None))
            .collect::<Result<Vec<_>, _>>(),
        SweepMode::ContinueUp | SweepMode::ContinueDown => {
            let order: Vec<usize> = if mode == SweepMode::ContinueUp {
                (0..grid.len()).collect()
            } else {
                (0..grid.len()).rev().collect()
            };
            let mut results: Vec<Option<Result<SimOutcome, f64>>> = vec![None; grid.len()];
            let mut carry: Option<LatticeState> = None;
            for idx in order {
                let r = run_at(grid[idx], carry.as_ref())?;
                // A diverged point cannot seed its successor; restart cold.
                carry = r.as_ref().ok().map(|o| o.final_state.clone());
                results[idx] = Some(r);
            }
            Ok(results.into_iter().map(|r| r.expect("filled")).collect())
        }
    }
}

fn critical_brackets(grid: &[f64], etas: &[Option<f64>]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for i in 0..grid.len().saturating_sub(1) {
        if let (Some(a), Some(b)) = (etas[i], etas[i + 1]) {
            let m = a.abs().max(b.abs());
            if m > 0.0 && (a - b).abs() / m > CRITICAL_JUMP_REL {
                out.push((grid[i], grid[i + 1]));
            }
        }
    }
    out
}

/// Sweep the normalized damping ratio over `grid` for both directions.
///
/// `base.zeta` is ignored; each grid point substitutes its own value. Cold
/// mode runs grid points in parallel; the continuation modes are inherently
/// sequential along the grid. Divergence at a point flags that point and the
/// sweep continues.
pub fn damping_sweep(
    base: &WaveguideConfig,
    grid: &[f64],
    mode: SweepMode,
) -> Result<DampingSweepResult, SweepError> {
    if grid.is_empty() {
        return Err(SweepError::InvalidGrid("empty grid".into()));
    }
    for pair in grid.windows(2) {
        if pair[1] <= pair[0] {
            return Err(SweepError::InvalidGrid(format!(
                "grid must be strictly increasing ({} then {})",
                pair[0], pair[1]
            )));
        }
    }
    if grid[0] < 0.0 || *grid.last().unwrap() > ZETA_GRID_MAX + 1e-12 {
        return Err(SweepError::InvalidGrid(format!(
            "grid must lie within [0, {ZETA_GRID_MAX}]"
        )));
    }

    let lr = directional_run(base, Direction::Lr, grid, mode)?;
    let rl = directional_run(base, Direction::Rl, grid, mode)?;

    let mut points = Vec::with_capacity(grid.len());
    let mut etas_lr = Vec::with_capacity(grid.len());
    let mut etas_rl = Vec::with_capacity(grid.len());
    for (i, &zeta) in grid.iter().enumerate() {
        let point = match (&lr[i], &rl[i]) {
            (Ok(olr), Ok(orl)) => match measures(olr, orl) {
                Ok(m) => DampingPoint {
                    zeta,
                    eta_lr: m.eta_lr,
                    e_down_lr: olr.final_e_down,
                    eta_rl: m.eta_rl,
                    e_down_rl: orl.final_e_down,
                    delta: m.delta,
                    branch: Some(classify(&m)),
                    flag: if m.degenerate {
                        RunFlag::Degenerate
                    } else {
                        RunFlag::Ok
                    },
                },
                Err(_) => failed_point(zeta),
            },
            _ => failed_point(zeta),
        };
        etas_lr.push((point.flag != RunFlag::Diverged).then_some(point.eta_lr));
        etas_rl.push((point.flag != RunFlag::Diverged).then_some(point.eta_rl));
        points.push(point);
    }

    Ok(DampingSweepResult {
        mode,
        critical_lr: critical_brackets(grid, &etas_lr),
        critical_rl: critical_brackets(grid, &etas_rl),
        points,
    })
}

fn failed_point(zeta: f64) -> DampingPoint {
    DampingPoint {
        zeta,
        eta_lr: f64::NAN,
        e_down_lr: f64::NAN,
        eta_rl: f64::NAN,
        e_down_rl: f64::NAN,
        delta: f64::NAN,
        branch: None,
        flag: RunFlag::Diverged,
    }
}

/// Evenly spaced damping grid from `min` to `max` with step `step`.
pub fn zeta_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>, SweepError> {
    if !(step > 0.0) || !min.is_finite() || !max.is_finite() || max <= min {
        return Err(SweepError::InvalidGrid(format!(
            "bad grid parameters min={min} max={max} step={step}"
        )));
    }
    let n = ((max - min) / step).round() as usize;
    Ok((0..=n).map(|i| min + i as f64 * step).collect())
}

/// CSV export of one damping sweep; critical brackets ride as comments.
pub fn write_damping_csv(
    path: &Path,
    result: &DampingSweepResult,
    manifest_ref: Option<&str>,
) -> std::io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "# mode: {}", result.mode)?;
    if let Some(m) = manifest_ref {
        writeln!(w, "# manifest: {m}")?;
    }
    for (a, b) in &result.critical_lr {
        writeln!(w, "# critical_lr: {a},{b}")?;
    }
    for (a, b) in &result.critical_rl {
        writeln!(w, "# critical_rl: {a},{b}")?;
    }
    writeln!(w, "zeta,eta_lr,e_down_lr,eta_rl,e_down_rl,delta,branch,flag")?;
    for p in &result.points {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            p.zeta,
            p.eta_lr,
            p.e_down_lr,
            p.eta_rl,
            p.e_down_rl,
            p.delta,
            p.branch.map(|b| b.to_string()).unwrap_or_default(),
            p.flag
        )?;
    }
    w.flush()
}

/// Measures recomputed for a single (config, both directions) pair; shared
/// by the CLI `simulate` command and the acceptance checks.
pub fn run_pair(config: &WaveguideConfig) -> Result<(SimOutcome, SimOutcome, MeasurePair), SweepError> {
    let lr = integrate(config, Direction::Lr)?;
    let rl = integrate(config, Direction::Rl)?;
    let m = measures(&lr, &rl).map_err(|e| SweepError::InvalidSpec(e.to_string()))?;
    Ok((lr, rl, m))
}
