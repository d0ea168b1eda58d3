//! Lattice assembly and fixed-step time integration.
//!
//! The waveguide is a chain of `2N + 3` grounded oscillators:
//!
//! ```text
//! x_{N-1} .. x_1 x_0 | z_0  z_1  z_00 | y_0 y_1 .. y_{N-1}
//!                    ^~ cubic gate ~^   ^~ cubic gate
//! ```
//!
//! `x_0`/`z_0` form the first gate and `z_00`/`y_0` the second; both gate
//! pairs couple only through an essential cubic spring of strength
//! `d * alpha_k`, and the four gate oscillators carry the detuned grounding
//! stiffness `1 + d * sigma`. All remaining couplings are linear with
//! stiffness `d`, every oscillator sees uniform damping `2 xi` with
//! `xi = d * zeta`, and the harmonic force `2 d A_p cos(omega_hat tau)`
//! enters at upstream site `p`. Chain ends are free: the missing-neighbor
//! coupling term is dropped at `x_{N-1}` and `y_{N-1}`.
//!
//! The work done by the excitation and the energy transmitted past the
//! second gate are integrated alongside the motion as augmented states, so
//! their accuracy matches the integrator order:
//!
//! ```text
//! e_input' = 2 d A_p cos(omega_hat tau) x_p'
//! e_down'  = d (y_0 - y_1) y_0'
//! ```

use crate::model::{validate, Direction, ValidationReport, WaveguideConfig};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

/// Displacement magnitude treated as integrator blow-up. Far above any
/// physical response at the amplitudes of interest.
pub const BLOWUP_BOUND: f64 = 1e6;

/// Probe series are stored every this many integrator steps.
pub const OUTPUT_STRIDE: usize = 5;

/// RK4 is stable for `omega * dt` up to about 2.83 on the imaginary axis;
/// stay below it with headroom for the stiffening cubic terms.
const STABILITY_LIMIT: f64 = 2.5;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration invalid:\n{0}")]
    InvalidConfig(ValidationReport),
    #[error("dt = {dt} too large: omega_max * dt = {product:.3} exceeds the RK4 stability margin {STABILITY_LIMIT}")]
    StepTooLarge { dt: f64, product: f64 },
    #[error("initial state sized for N = {got}, config has N = {expected}")]
    StateSizeMismatch { got: usize, expected: usize },
}

/// Displacements, velocities and energy accumulators of the full lattice.
///
/// `z[0]`, `z[1]`, `z[2]` hold the central oscillators `z_0`, `z_1`, `z_00`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeState {
    pub x: Vec<f64>,
    pub z: [f64; 3],
    pub y: Vec<f64>,
    pub vx: Vec<f64>,
    pub vz: [f64; 3],
    pub vy: Vec<f64>,
    pub e_input: f64,
    pub e_down: f64,
    pub tau: f64,
}

impl LatticeState {
    /// All-zero state for a lattice with `n` oscillators per side.
    pub fn zero(n: usize) -> Self {
        LatticeState {
            x: vec![0.0; n],
            z: [0.0; 3],
            y: vec![0.0; n],
            vx: vec![0.0; n],
            vz: [0.0; 3],
            vy: vec![0.0; n],
            e_input: 0.0,
            e_down: 0.0,
            tau: 0.0,
        }
    }

    pub fn n_per_side(&self) -> usize {
        self.x.len()
    }

    /// Largest displacement magnitude, or NaN if any entry is not finite.
    pub fn max_abs_displacement(&self) -> f64 {
        let mut m: f64 = 0.0;
        for &u in self.x.iter().chain(self.z.iter()).chain(self.y.iter()) {
            if !u.is_finite() {
                return f64::NAN;
            }
            m = m.max(u.abs());
        }
        m
    }

    /// `self = base + h * k` over every dynamic component (`tau` excluded;
    /// the integrator tracks time separately).
    fn set_axpy(&mut self, base: &Self, k: &Self, h: f64) {
        axpy_slice(&mut self.x, &base.x, &k.x, h);
        axpy_slice(&mut self.y, &base.y, &k.y, h);
        axpy_slice(&mut self.vx, &base.vx, &k.vx, h);
        axpy_slice(&mut self.vy, &base.vy, &k.vy, h);
        for i in 0..3 {
            self.z[i] = base.z[i] + h * k.z[i];
            self.vz[i] = base.vz[i] + h * k.vz[i];
        }
        self.e_input = base.e_input + h * k.e_input;
        self.e_down = base.e_down + h * k.e_down;
    }

    /// Classical RK4 update: `self += dt/6 (k1 + 2 k2 + 2 k3 + k4)`.
    fn rk4_combine(&mut self, k1: &Self, k2: &Self, k3: &Self, k4: &Self, dt: f64) {
        let w = dt / 6.0;
        combine_slice(&mut self.x, &k1.x, &k2.x, &k3.x, &k4.x, w);
        combine_slice(&mut self.y, &k1.y, &k2.y, &k3.y, &k4.y, w);
        combine_slice(&mut self.vx, &k1.vx, &k2.vx, &k3.vx, &k4.vx, w);
        combine_slice(&mut self.vy, &k1.vy, &k2.vy, &k3.vy, &k4.vy, w);
        for i in 0..3 {
            self.z[i] += w * (k1.z[i] + 2.0 * k2.z[i] + 2.0 * k3.z[i] + k4.z[i]);
            self.vz[i] += w * (k1.vz[i] + 2.0 * k2.vz[i] + 2.0 * k3.vz[i] + k4.vz[i]);
        }
        self.e_input += w * (k1.e_input + 2.0 * k2.e_input + 2.0 * k3.e_input + k4.e_input);
        self.e_down += w * (k1.e_down + 2.0 * k2.e_down + 2.0 * k3.e_down + k4.e_down);
    }
}

#[inline]
fn axpy_slice(out: &mut [f64], base: &[f64], k: &[f64], h: f64) {
    for i in 0..out.len() {
        out[i] = base[i] + h * k[i];
    }
}

#[inline]
fn combine_slice(acc: &mut [f64], k1: &[f64], k2: &[f64], k3: &[f64], k4: &[f64], w: f64) {
    for i in 0..acc.len() {
        acc[i] += w * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Precomputed right-hand-side coefficients for one (config, direction).
#[derive(Debug, Clone)]
pub struct RhsParams {
    pub n: usize,
    pub d: f64,
    pub two_xi: f64,
    /// Gate coefficient on the `x` side after direction resolution.
    pub gate_a: f64,
    /// Gate coefficient on the `y` side after direction resolution.
    pub gate_b: f64,
    /// Detuned grounding stiffness `1 + d * sigma` of the gate oscillators.
    pub gate_grounding: f64,
    /// Peak force `2 d A_p`.
    pub force_amp: f64,
    pub omega: f64,
    pub p: usize,
}

impl RhsParams {
    pub fn new(config: &WaveguideConfig, direction: Direction) -> Result<Self, SimError> {
        let report = validate(config);
        if !report.is_ok() {
            return Err(SimError::InvalidConfig(report));
        }
        let omega = config.omega_hat().expect("validated");
        let (gate_a, gate_b) = direction.gate_coefficients(config);
        Ok(RhsParams {
            n: config.n_per_side,
            d: config.d,
            two_xi: 2.0 * config.xi(),
            gate_a,
            gate_b,
            gate_grounding: 1.0 + config.d * config.sigma,
            force_amp: 2.0 * config.d * config.a_p,
            omega,
            p: config.p,
        })
    }
}

/// Equations of motion, written into `out`. Pure in its inputs.
pub fn rhs_into(state: &LatticeState, params: &RhsParams, tau: f64, out: &mut LatticeState) {
    let d = params.d;
    let two_xi = params.two_xi;
    let gg = params.gate_grounding;

    out.x.copy_from_slice(&state.vx);
    out.y.copy_from_slice(&state.vy);
    out.z = state.vz;

    interior_accel(&state.x, &state.vx, &mut out.vx, d, two_xi);
    interior_accel(&state.y, &state.vy, &mut out.vy, d, two_xi);

    let force = params.force_amp * (params.omega * tau).cos();
    out.vx[params.p] += force;

    let x0 = state.x[0];
    let y0 = state.y[0];
    let [z0, z1, z00] = state.z;

    // Gate pair (x_0, z_0) with cubic coefficient gate_a.
    let w1 = x0 - z0;
    let f_gate1 = d * params.gate_a * w1 * w1 * w1;
    out.vx[0] = -two_xi * state.vx[0] - gg * x0 - f_gate1 - d * (x0 - state.x[1]);
    out.vz[0] = -two_xi * state.vz[0] - gg * z0 + f_gate1 - d * (z0 - z1);

    // Linear coupling oscillator between the gates.
    out.vz[1] = -two_xi * state.vz[1] - z1 - d * (z1 - z0) - d * (z1 - z00);

    // Gate pair (z_00, y_0) with cubic coefficient gate_b.
    let w2 = z00 - y0;
    let f_gate2 = d * params.gate_b * w2 * w2 * w2;
    out.vz[2] = -two_xi * state.vz[2] - gg * z00 - f_gate2 - d * (z00 - z1);
    out.vy[0] = -two_xi * state.vy[0] - gg * y0 + f_gate2 - d * (y0 - state.y[1]);

    // Energy accumulators (input work; flux past the second gate).
    out.e_input = force * state.vx[params.p];
    out.e_down = d * (y0 - state.y[1]) * state.vy[0];

    out.tau = 1.0;
}

/// Grounded-chain acceleration for sites 1..N-1; site N-1 is a free end.
/// Site 0 (the gate oscillator) is overwritten by the caller.
#[inline]
fn interior_accel(u: &[f64], v: &[f64], a: &mut [f64], d: f64, two_xi: f64) {
    let n = u.len();
    for i in 1..n - 1 {
        a[i] = -two_xi * v[i] - u[i] - d * (2.0 * u[i] - u[i - 1] - u[i + 1]);
    }
    a[n - 1] = -two_xi * v[n - 1] - u[n - 1] - d * (u[n - 1] - u[n - 2]);
}

/// Allocating convenience wrapper around [`rhs_into`].
pub fn rhs(
    state: &LatticeState,
    config: &WaveguideConfig,
    direction: Direction,
    tau: f64,
) -> Result<LatticeState, SimError> {
    let params = RhsParams::new(config, direction)?;
    let mut out = LatticeState::zero(config.n_per_side);
    rhs_into(state, &params, tau, &mut out);
    Ok(out)
}

/// Sampled displacement histories of the oscillators of interest.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProbeSeries {
    pub tau: Vec<f64>,
    pub x0: Vec<f64>,
    pub z0: Vec<f64>,
    pub z1: Vec<f64>,
    pub z00: Vec<f64>,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    pub x1: Vec<f64>,
    pub xp: Vec<f64>,
}

impl ProbeSeries {
    fn push(&mut self, s: &LatticeState, p: usize) {
        self.tau.push(s.tau);
        self.x0.push(s.x[0]);
        self.z0.push(s.z[0]);
        self.z1.push(s.z[1]);
        self.z00.push(s.z[2]);
        self.y0.push(s.y[0]);
        self.y1.push(s.y[1]);
        self.x1.push(s.x[1]);
        self.xp.push(s.x[p]);
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }
}

/// Everything produced by one integration run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub probes: ProbeSeries,
    pub e_input_series: Vec<f64>,
    pub e_down_series: Vec<f64>,
    pub final_e_input: f64,
    pub final_e_down: f64,
    /// Time of blow-up when the run did not complete.
    pub diverged: Option<f64>,
    /// Full state at the last accepted step, for continuation sweeps.
    pub final_state: LatticeState,
    pub omega_hat: f64,
    /// Spacing of the stored samples.
    pub dt_sample: f64,
    pub t_final: f64,
}

impl SimOutcome {
    pub fn completed(&self) -> bool {
        self.diverged.is_none()
    }
}

/// Integrate from all-zero initial conditions.
pub fn integrate(config: &WaveguideConfig, direction: Direction) -> Result<SimOutcome, SimError> {
    integrate_from(config, direction, None)
}

/// Integrate with an optional initial state (continuation support).
///
/// Only displacements and velocities are inherited from `initial`; the
/// energy accumulators and the clock always restart at zero so the measures
/// of the new run stand on their own.
pub fn integrate_from(
    config: &WaveguideConfig,
    direction: Direction,
    initial: Option<&LatticeState>,
) -> Result<SimOutcome, SimError> {
    let params = RhsParams::new(config, direction)?;
    let n = config.n_per_side;
    let dt = config.dt;

    // Stability self-check against the top of the linear passband.
    let omega_max = (1.0 + 4.0 * config.d).sqrt();
    if omega_max * dt > STABILITY_LIMIT {
        return Err(SimError::StepTooLarge {
            dt,
            product: omega_max * dt,
        });
    }

    let mut state = match initial {
        Some(init) => {
            if init.n_per_side() != n {
                return Err(SimError::StateSizeMismatch {
                    got: init.n_per_side(),
                    expected: n,
                });
            }
            let mut s = init.clone();
            s.e_input = 0.0;
            s.e_down = 0.0;
            s.tau = 0.0;
            s
        }
        None => LatticeState::zero(n),
    };

    let steps = (config.t_total / dt).round().max(1.0) as usize;

    let mut k1 = LatticeState::zero(n);
    let mut k2 = LatticeState::zero(n);
    let mut k3 = LatticeState::zero(n);
    let mut k4 = LatticeState::zero(n);
    let mut stage = LatticeState::zero(n);

    let mut probes = ProbeSeries::default();
    let mut e_input_series = Vec::new();
    let mut e_down_series = Vec::new();
    let record = |s: &LatticeState, probes: &mut ProbeSeries,
                  ei: &mut Vec<f64>, ed: &mut Vec<f64>| {
        probes.push(s, params.p);
        ei.push(s.e_input);
        ed.push(s.e_down);
    };
    record(&state, &mut probes, &mut e_input_series, &mut e_down_series);

    let mut diverged = None;
    for step in 0..steps {
        let tau = step as f64 * dt;
        rhs_into(&state, &params, tau, &mut k1);
        stage.set_axpy(&state, &k1, 0.5 * dt);
        rhs_into(&stage, &params, tau + 0.5 * dt, &mut k2);
        stage.set_axpy(&state, &k2, 0.5 * dt);
        rhs_into(&stage, &params, tau + 0.5 * dt, &mut k3);
        stage.set_axpy(&state, &k3, dt);
        rhs_into(&stage, &params, tau + dt, &mut k4);
        state.rk4_combine(&k1, &k2, &k3, &k4, dt);
        state.tau = (step + 1) as f64 * dt;

        let m = state.max_abs_displacement();
        if !(m <= BLOWUP_BOUND) {
            diverged = Some(state.tau);
            record(&state, &mut probes, &mut e_input_series, &mut e_down_series);
            break;
        }
        if (step + 1) % OUTPUT_STRIDE == 0 || step + 1 == steps {
            record(&state, &mut probes, &mut e_input_series, &mut e_down_series);
        }
    }

    Ok(SimOutcome {
        final_e_input: state.e_input,
        final_e_down: state.e_down,
        diverged,
        omega_hat: params.omega,
        dt_sample: dt * OUTPUT_STRIDE as f64,
        t_final: state.tau,
        final_state: state,
        probes,
        e_input_series,
        e_down_series,
    })
}

/// Instantaneous mechanical energies of the upstream sub-waveguide, the
/// central region, and the downstream sub-waveguide.
///
/// Grounding and kinetic terms belong to the oscillator's own region;
/// linear couplers belong to a region when both endpoints do. The two
/// quartic gate potentials `d * alpha_k * w^4 / 4` and the `z` couplers
/// belong wholly to the center. `config` is read in the L-R sense; pass
/// `config.with_swapped_gates()` to account a swapped-coefficient run.
pub fn region_energies(state: &LatticeState, config: &WaveguideConfig) -> (f64, f64, f64) {
    let d = config.d;
    let gg = 1.0 + config.d * config.sigma;

    let side = |u: &[f64], v: &[f64]| {
        let mut e = 0.5 * v[0] * v[0] + 0.5 * gg * u[0] * u[0];
        for i in 1..u.len() {
            e += 0.5 * v[i] * v[i] + 0.5 * u[i] * u[i];
            let du = u[i] - u[i - 1];
            e += 0.5 * d * du * du;
        }
        e
    };
    let e_left = side(&state.x, &state.vx);
    let e_right = side(&state.y, &state.vy);

    let [z0, z1, z00] = state.z;
    let [vz0, vz1, vz00] = state.vz;
    let mut e_center = 0.5 * (vz0 * vz0 + vz1 * vz1 + vz00 * vz00);
    e_center += 0.5 * gg * z0 * z0 + 0.5 * z1 * z1 + 0.5 * gg * z00 * z00;
    let dz0 = z1 - z0;
    let dz1 = z00 - z1;
    e_center += 0.5 * d * (dz0 * dz0 + dz1 * dz1);
    let w1 = state.x[0] - z0;
    let w2 = z00 - state.y[0];
    e_center += 0.25 * d * config.alpha1 * w1 * w1 * w1 * w1;
    e_center += 0.25 * d * config.alpha2 * w2 * w2 * w2 * w2;

    (e_left, e_center, e_right)
}

/// Write the sampled outcome as CSV: `tau,x0,z0,z1,z00,y0,e_input,e_down`.
///
/// The full configuration rides along as a leading comment for provenance;
/// `manifest_ref`, when given, is recorded the same way.
pub fn write_outcome_csv(
    path: &Path,
    outcome: &SimOutcome,
    config: &WaveguideConfig,
    manifest_ref: Option<&str>,
) -> std::io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    let cfg_json = serde_json::to_string(config).expect("config serializes");
    writeln!(w, "# config: {cfg_json}")?;
    if let Some(m) = manifest_ref {
        writeln!(w, "# manifest: {m}")?;
    }
    writeln!(w, "tau,x0,z0,z1,z00,y0,e_input,e_down")?;
    let p = &outcome.probes;
    for i in 0..p.len() {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            p.tau[i],
            p.x0[i],
            p.z0[i],
            p.z1[i],
            p.z00[i],
            p.y0[i],
            outcome.e_input_series[i],
            outcome.e_down_series[i]
        )?;
    }
    w.flush()
}
