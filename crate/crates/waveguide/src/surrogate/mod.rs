//! Feed-forward surrogate for the map `(A_p, alpha1, alpha2, omega_hat, d)
//! -> (eta, delta)`, plus its evaluation protocol and the kernel-size
//! robustness maps.
//!
//! Inputs and outputs are affinely normalized to `[-1, 1]` (per-dimension
//! bounds taken from the training subset only). The default architecture is
//! four hidden layers of 50 rectifier units with a linear output pair.
//! Training minimizes MSE with a 50/15/35 train/validation/test split and
//! stops early when the validation loss fails to improve for six
//! consecutive epochs.

pub mod mlp;

use crate::analysis::desirable_point;
use crate::model::omega_hat;
use crate::sweep::{dataset_csv_line, SweepRecord};
use mlp::{lm_iteration, Adam, Mlp};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

/// Default hidden architecture: 4 layers of 50 rectifier units.
pub const DEFAULT_HIDDEN: [usize; 4] = [50, 50, 50, 50];
/// Surrogate input dimension.
pub const N_INPUTS: usize = 5;
/// Surrogate output dimension: (eta, delta).
pub const N_OUTPUTS: usize = 2;

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("normalization bounds degenerate in dimension {dim}: min = max = {value}")]
    DegenerateBounds { dim: usize, value: f64 },
    #[error("dataset has {got} usable records; need at least {need}")]
    TooFewRecords { got: usize, need: usize },
    #[error("training failed to converge: validation loss {final_loss:.3e} exceeds 10x the initial {initial_loss:.3e}")]
    NonConvergence { initial_loss: f64, final_loss: f64 },
    #[error("Levenberg-Marquardt disabled for {params} parameters (cap {cap}); use smaller hidden layers or raise lm_max_params")]
    LmTooLarge { params: usize, cap: usize },
    #[error("model file {path}: {message}")]
    ModelFile { path: String, message: String },
}

/// Per-dimension affine normalization to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormBounds {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormBounds {
    /// Componentwise extrema of a set of vectors.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, SurrogateError> {
        let dims = rows[0].len();
        let mut min = vec![f64::INFINITY; dims];
        let mut max = vec![f64::NEG_INFINITY; dims];
        for row in rows {
            for (i, &v) in row.iter().enumerate() {
                min[i] = min[i].min(v);
                max[i] = max[i].max(v);
            }
        }
        let bounds = NormBounds { min, max };
        bounds.check()?;
        Ok(bounds)
    }

    /// Like [`from_rows`](Self::from_rows), but a dimension whose data is
    /// constant gets a unit half-width around it instead of degenerate
    /// bounds; the constant then normalizes to the midpoint and
    /// denormalizes back exactly. Used when bounds are derived from
    /// training data that may be collapsed in some dimension.
    pub fn from_rows_padded(rows: &[Vec<f64>]) -> Self {
        let dims = rows[0].len();
        let mut min = vec![f64::INFINITY; dims];
        let mut max = vec![f64::NEG_INFINITY; dims];
        for row in rows {
            for (i, &v) in row.iter().enumerate() {
                min[i] = min[i].min(v);
                max[i] = max[i].max(v);
            }
        }
        for i in 0..dims {
            if min[i] >= max[i] {
                min[i] -= 0.5;
                max[i] += 0.5;
            }
        }
        NormBounds { min, max }
    }

    fn check(&self) -> Result<(), SurrogateError> {
        for (dim, (&lo, &hi)) in self.min.iter().zip(&self.max).enumerate() {
            if lo >= hi {
                return Err(SurrogateError::DegenerateBounds { dim, value: lo });
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> usize {
        self.min.len()
    }

    /// Map back from `[-1, 1]`; the inverse of [`normalize`] inside bounds.
    pub fn denormalize(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .enumerate()
            .map(|(i, &u)| 0.5 * (u + 1.0) * (self.max[i] - self.min[i]) + self.min[i])
            .collect()
    }
}

/// Componentwise `2 (v - min) / (max - min) - 1`. Values outside the bounds
/// are clamped to the unit box; the flag reports whether clamping occurred.
pub fn normalize(v: &[f64], bounds: &NormBounds) -> Result<(Vec<f64>, bool), SurrogateError> {
    bounds.check()?;
    let mut clamped = false;
    let out = v
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let u = 2.0 * (x - bounds.min[i]) / (bounds.max[i] - bounds.min[i]) - 1.0;
            if u < -1.0 || u > 1.0 {
                clamped = true;
            }
            u.clamp(-1.0, 1.0)
        })
        .collect();
    Ok((out, clamped))
}

/// Why training stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StoppingReason {
    /// Validation loss failed to improve for the patience window.
    EarlyStopping,
    /// Hit the epoch cap.
    MaxEpochs,
    /// The LM damping schedule could not find a descent step.
    LmStalled,
}

/// Summary of one training run, persisted with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub initial_val_loss: f64,
    pub stopping: StoppingReason,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub excluded_degenerate: usize,
    pub excluded_diverged: usize,
    pub optimizer: String,
    pub split_seed: u64,
    pub dataset_fingerprint: String,
}

/// Trained surrogate: the network plus the normalization maps that frame it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub mlp: Mlp,
    pub in_bounds: NormBounds,
    pub out_bounds: NormBounds,
    pub report: TrainingReport,
}

impl SurrogateModel {
    /// Predict `(eta, delta)` for the raw input
    /// `(A_p, alpha1, alpha2, omega_hat, d)`. Out-of-bounds inputs are
    /// clamped to the training box.
    pub fn forward(&self, input: &[f64; N_INPUTS]) -> (f64, f64) {
        let (normed, _) = normalize(input, &self.in_bounds).expect("bounds checked at build");
        let raw = self.mlp.forward(&normed);
        let out = self.out_bounds.denormalize(&raw);
        (out[0], out[1])
    }
}

/// Optimizer selection for [`train_with_options`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Optimizer {
    /// Mini-batch adaptive-moment descent; the default.
    Adam { lr: f64, batch: usize },
    /// Full-batch Levenberg-Marquardt, for reduced problems only: the
    /// normal-equation matrix is `n_params^2`, so the parameter count is
    /// capped by `lm_max_params`.
    Lm { initial_lambda: f64 },
}

/// Knobs of the training protocol. The defaults implement the reference
/// recipe; the split fractions and patience are part of the contract and
/// deliberately not exposed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub max_epochs: usize,
    pub optimizer: Optimizer,
    pub hidden: Vec<usize>,
    pub lm_max_params: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            max_epochs: 200,
            optimizer: Optimizer::Adam { lr: 1e-3, batch: 32 },
            hidden: DEFAULT_HIDDEN.to_vec(),
            lm_max_params: 4000,
        }
    }
}

/// Early-stopping patience in epochs.
pub const PATIENCE: usize = 6;
/// Minimum usable records accepted for training.
pub const MIN_RECORDS: usize = 100;

/// Split fractions of the usable dataset.
const TRAIN_FRAC: f64 = 0.50;
const VAL_FRAC: f64 = 0.15;

/// Deterministic 50/15/35 partition of `0..n` driven by `split_seed`.
/// Returns (train, validation, test) index sets; disjoint and exhaustive,
/// sizes within one of the exact fractions.
pub fn split_indices(n: usize, split_seed: u64) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed);
    rng.set_stream(0);
    order.shuffle(&mut rng);
    let n_train = (TRAIN_FRAC * n as f64).round() as usize;
    let n_val = (VAL_FRAC * n as f64).round() as usize;
    let train = order[..n_train].to_vec();
    let val = order[n_train..n_train + n_val].to_vec();
    let test = order[n_train + n_val..].to_vec();
    (train, val, test)
}

/// SHA-256 over the canonical CSV serialization of the records; ties a model
/// to the dataset it was trained on.
pub fn dataset_fingerprint(records: &[SweepRecord]) -> String {
    let mut hasher = Sha256::new();
    for r in records {
        hasher.update(dataset_csv_line(r).as_bytes());
        hasher.update(b"\n");
    }
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Train with the default options (mini-batch Adam, default architecture).
pub fn train(records: &[SweepRecord], split_seed: u64) -> Result<SurrogateModel, SurrogateError> {
    train_with_options(records, split_seed, &TrainOptions::default())
}

/// Full training protocol: filter unusable records, split, normalize from
/// the training subset, fit with early stopping, return the best-validation
/// snapshot.
pub fn train_with_options(
    records: &[SweepRecord],
    split_seed: u64,
    options: &TrainOptions,
) -> Result<SurrogateModel, SurrogateError> {
    let usable: Vec<&SweepRecord> = records.iter().filter(|r| r.usable()).collect();
    let excluded_degenerate = records
        .iter()
        .filter(|r| r.flag == crate::sweep::RunFlag::Degenerate)
        .count();
    let excluded_diverged = records
        .iter()
        .filter(|r| r.flag == crate::sweep::RunFlag::Diverged)
        .count();
    if usable.len() < MIN_RECORDS {
        return Err(SurrogateError::TooFewRecords {
            got: usable.len(),
            need: MIN_RECORDS,
        });
    }

    let (train_idx, val_idx, test_idx) = split_indices(usable.len(), split_seed);

    let inputs: Vec<Vec<f64>> = usable.iter().map(|r| r.inputs().to_vec()).collect();
    let outputs: Vec<Vec<f64>> = usable.iter().map(|r| vec![r.eta_lr, r.delta]).collect();

    let gather = |idx: &[usize], rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
        idx.iter().map(|&i| rows[i].clone()).collect()
    };
    let train_in_raw = gather(&train_idx, &inputs);
    let train_out_raw = gather(&train_idx, &outputs);
    let val_in_raw = gather(&val_idx, &inputs);
    let val_out_raw = gather(&val_idx, &outputs);

    // Bounds from the training subset only; validation and test values
    // outside them are clamped. Constant dimensions (collapsed sweep
    // ranges, constant outputs) get padded bounds.
    let in_bounds = NormBounds::from_rows_padded(&train_in_raw);
    let out_bounds = NormBounds::from_rows_padded(&train_out_raw);

    let norm_all = |rows: &[Vec<f64>], b: &NormBounds| -> Vec<Vec<f64>> {
        rows.iter()
            .map(|r| normalize(r, b).expect("bounds checked").0)
            .collect()
    };
    let train_in = norm_all(&train_in_raw, &in_bounds);
    let train_out = norm_all(&train_out_raw, &out_bounds);
    let val_in = norm_all(&val_in_raw, &in_bounds);
    let val_out = norm_all(&val_out_raw, &out_bounds);

    let mut sizes = Vec::with_capacity(options.hidden.len() + 2);
    sizes.push(N_INPUTS);
    sizes.extend_from_slice(&options.hidden);
    sizes.push(N_OUTPUTS);

    let mut init_rng = ChaCha8Rng::seed_from_u64(split_seed);
    init_rng.set_stream(1);
    let mut net = Mlp::init(&sizes, &mut init_rng);

    if let Optimizer::Lm { .. } = options.optimizer {
        let p = net.n_params();
        if p > options.lm_max_params {
            return Err(SurrogateError::LmTooLarge {
                params: p,
                cap: options.lm_max_params,
            });
        }
    }

    let initial_val_loss = net.mse(&val_in, &val_out);
    let mut best = net.clone();
    let mut best_val = initial_val_loss;
    let mut best_epoch = 0usize;
    let mut epochs_without_improvement = 0usize;
    let mut stopping = StoppingReason::MaxEpochs;
    let mut epochs_run = 0usize;

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(split_seed);
    shuffle_rng.set_stream(2);

    match options.optimizer {
        Optimizer::Adam { lr, batch } => {
            let batch = batch.max(1);
            let mut adam = Adam::new(lr, net.n_params());
            let mut order: Vec<usize> = (0..train_in.len()).collect();
            for epoch in 1..=options.max_epochs {
                epochs_run = epoch;
                order.shuffle(&mut shuffle_rng);
                for chunk in order.chunks(batch) {
                    let bx: Vec<Vec<f64>> = chunk.iter().map(|&i| train_in[i].clone()).collect();
                    let bt: Vec<Vec<f64>> = chunk.iter().map(|&i| train_out[i].clone()).collect();
                    let (_, grads) = net.loss_and_grads(&bx, &bt);
                    adam.step(&mut net, &grads);
                }
                let val = net.mse(&val_in, &val_out);
                if val < best_val {
                    best_val = val;
                    best_epoch = epoch;
                    best = net.clone();
                    epochs_without_improvement = 0;
                } else {
                    epochs_without_improvement += 1;
                    if epochs_without_improvement >= PATIENCE {
                        stopping = StoppingReason::EarlyStopping;
                        break;
                    }
                }
            }
        }
        Optimizer::Lm { initial_lambda } => {
            let mut lambda = initial_lambda;
            for epoch in 1..=options.max_epochs {
                epochs_run = epoch;
                let outcome = lm_iteration(&mut net, &train_in, &train_out, lambda);
                lambda = outcome.lambda;
                if !outcome.accepted {
                    stopping = StoppingReason::LmStalled;
                    break;
                }
                let val = net.mse(&val_in, &val_out);
                if val < best_val {
                    best_val = val;
                    best_epoch = epoch;
                    best = net.clone();
                    epochs_without_improvement = 0;
                } else {
                    epochs_without_improvement += 1;
                    if epochs_without_improvement >= PATIENCE {
                        stopping = StoppingReason::EarlyStopping;
                        break;
                    }
                }
            }
        }
    }

    if best_val > 10.0 * initial_val_loss {
        return Err(SurrogateError::NonConvergence {
            initial_loss: initial_val_loss,
            final_loss: best_val,
        });
    }

    let optimizer = match options.optimizer {
        Optimizer::Adam { lr, batch } => format!("adam(lr={lr},batch={batch})"),
        Optimizer::Lm { initial_lambda } => format!("lm(lambda0={initial_lambda})"),
    };

    Ok(SurrogateModel {
        mlp: best,
        in_bounds,
        out_bounds,
        report: TrainingReport {
            epochs_run,
            best_epoch,
            best_val_loss: best_val,
            initial_val_loss,
            stopping,
            n_train: train_idx.len(),
            n_val: val_idx.len(),
            n_test: test_idx.len(),
            excluded_degenerate,
            excluded_diverged,
            optimizer,
            split_seed,
            dataset_fingerprint: dataset_fingerprint(records),
        },
    })
}

/// Test subset of a dataset under the split recorded in a model. Only valid
/// when the dataset is the one the model was trained on (same fingerprint).
pub fn test_subset<'a>(records: &'a [SweepRecord], split_seed: u64) -> Vec<&'a SweepRecord> {
    let usable: Vec<&SweepRecord> = records.iter().filter(|r| r.usable()).collect();
    let (_, _, test_idx) = split_indices(usable.len(), split_seed);
    test_idx.into_iter().map(|i| usable[i]).collect()
}

/// Binary confusion counts for the desirable-design classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    pub true_neg: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }

    /// `TP / (TP + FN)`; undefined without actual positives.
    pub fn sensitivity(&self) -> Option<f64> {
        let denom = self.true_pos + self.false_neg;
        (denom > 0).then(|| self.true_pos as f64 / denom as f64)
    }

    /// `TN / (TN + FP)`; undefined without actual negatives.
    pub fn specificity(&self) -> Option<f64> {
        let denom = self.true_neg + self.false_pos;
        (denom > 0).then(|| self.true_neg as f64 / denom as f64)
    }

    /// `TP / (TP + FP)`; undefined when nothing is predicted desirable.
    pub fn precision(&self) -> Option<f64> {
        let denom = self.true_pos + self.false_pos;
        (denom > 0).then(|| self.true_pos as f64 / denom as f64)
    }
}

/// Evaluation of a model against simulated ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub counts: ConfusionCounts,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    /// Pearson correlation between predicted and simulated values.
    pub r_eta: Option<f64>,
    pub r_delta: Option<f64>,
    pub n_used: usize,
    /// No record in the set is actually desirable; sensitivity undefined.
    pub empty_actual_desirable: bool,
    pub eta_min: f64,
    pub delta_min: f64,
}

/// Pearson correlation coefficient; None for degenerate variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len();
    if n < 2 {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..n {
        let da = a[i] - ma;
        let db = b[i] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if va <= 0.0 || vb <= 0.0 {
        return None;
    }
    Some(cov / (va.sqrt() * vb.sqrt()))
}

/// Score the model on `test_records` (which must be disjoint from training):
/// desirability of truth and prediction share the thresholds, counts and
/// the three confusion metrics are filled, and per-output correlations are
/// reported. Unusable (flagged) records are skipped.
pub fn evaluate(
    model: &SurrogateModel,
    test_records: &[&SweepRecord],
    eta_min: f64,
    delta_min: f64,
) -> EvalReport {
    let mut counts = ConfusionCounts {
        true_pos: 0,
        false_pos: 0,
        false_neg: 0,
        true_neg: 0,
    };
    let mut sim_eta = Vec::new();
    let mut sim_delta = Vec::new();
    let mut pred_eta = Vec::new();
    let mut pred_delta = Vec::new();

    for r in test_records.iter().filter(|r| r.usable()) {
        let (pe, pd) = model.forward(&r.inputs());
        let actual = desirable_point(r.eta_lr, r.delta, eta_min, delta_min);
        let predicted = desirable_point(pe, pd, eta_min, delta_min);
        match (actual, predicted) {
            (true, true) => counts.true_pos += 1,
            (false, true) => counts.false_pos += 1,
            (true, false) => counts.false_neg += 1,
            (false, false) => counts.true_neg += 1,
        }
        sim_eta.push(r.eta_lr);
        sim_delta.push(r.delta);
        pred_eta.push(pe);
        pred_delta.push(pd);
    }

    EvalReport {
        counts,
        sensitivity: counts.sensitivity(),
        specificity: counts.specificity(),
        precision: counts.precision(),
        r_eta: pearson(&sim_eta, &pred_eta),
        r_delta: pearson(&sim_delta, &pred_delta),
        n_used: sim_eta.len(),
        empty_actual_desirable: counts.true_pos + counts.false_neg == 0,
        eta_min,
        delta_min,
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "undefined".into())
}

/// Plain-text confusion/metrics table in the reference layout.
pub fn format_metrics_text(report: &EvalReport) -> String {
    let c = &report.counts;
    let mut s = String::new();
    s.push_str(&format!("Data points in the test set: N = {}\n", c.total()));
    s.push_str(&format!(
        "                     Predicted desirable   Predicted undesirable\n"
    ));
    s.push_str(&format!(
        "Actual desirable     TP = {:<8}          FN = {}\n",
        c.true_pos, c.false_neg
    ));
    s.push_str(&format!(
        "Actual undesirable   FP = {:<8}          TN = {}\n",
        c.false_pos, c.true_neg
    ));
    s.push_str(&format!("Sensitivity: {}\n", fmt_opt(report.sensitivity)));
    s.push_str(&format!("Specificity: {}\n", fmt_opt(report.specificity)));
    s.push_str(&format!("Precision:   {}\n", fmt_opt(report.precision)));
    s.push_str(&format!(
        "R(eta): {}   R(delta): {}\n",
        fmt_opt(report.r_eta),
        fmt_opt(report.r_delta)
    ));
    s.push_str(&format!(
        "Thresholds: eta > {}, delta > {}\n",
        report.eta_min, report.delta_min
    ));
    s
}

/// One-row CSV mirror of the metrics table.
pub fn write_metrics_csv(path: &Path, report: &EvalReport) -> std::io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(
        w,
        "n_test,tp,fp,fn,tn,sensitivity,specificity,precision,r_eta,r_delta"
    )?;
    let c = &report.counts;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    writeln!(
        w,
        "{},{},{},{},{},{},{},{},{},{}",
        c.total(),
        c.true_pos,
        c.false_pos,
        c.false_neg,
        c.true_neg,
        opt(report.sensitivity),
        opt(report.specificity),
        opt(report.precision),
        opt(report.r_eta),
        opt(report.r_delta)
    )?;
    w.flush()
}

/// Side length of the largest axis-aligned all-true square in a row-major
/// mask, in parameter units (`cells * pitch`). Dynamic programming; exact.
pub fn kernel_size(mask: &[bool], rows: usize, cols: usize, pitch: f64) -> f64 {
    assert_eq!(mask.len(), rows * cols, "mask shape mismatch");
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let mut side = vec![0u32; rows * cols];
    let mut best = 0u32;
    for r in 0..rows {
        for c in 0..cols {
            let idx = r * cols + c;
            if !mask[idx] {
                continue;
            }
            side[idx] = if r == 0 || c == 0 {
                1
            } else {
                let up = side[idx - cols];
                let left = side[idx - 1];
                let diag = side[idx - cols - 1];
                up.min(left).min(diag) + 1
            };
            best = best.max(side[idx]);
        }
    }
    best as f64 * pitch
}

/// One cell of a robustness map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelCell {
    pub a_p: f64,
    pub theta: f64,
    pub kernel_size: f64,
}

/// Kernel-size robustness map at fixed `d`: for every `(A_p, theta)` cell
/// the model is evaluated over an `alpha_res x alpha_res` grid on
/// `[0, 6]^2`, the desirability mask is formed with the given thresholds,
/// and the largest inscribed square is reported.
pub fn robustness_map(
    model: &SurrogateModel,
    d: f64,
    a_p_grid: &[f64],
    theta_grid: &[f64],
    alpha_res: usize,
    eta_min: f64,
    delta_min: f64,
) -> Vec<KernelCell> {
    assert!(alpha_res >= 2, "alpha grid needs at least two points");
    let pitch = 6.0 / (alpha_res - 1) as f64;
    let alphas: Vec<f64> = (0..alpha_res).map(|i| i as f64 * pitch).collect();

    let cells: Vec<(f64, f64)> = a_p_grid
        .iter()
        .flat_map(|&a| theta_grid.iter().map(move |&t| (a, t)))
        .collect();

    cells
        .par_iter()
        .map(|&(a_p, theta)| {
            let w = omega_hat(theta, d).expect("grid inside (0, pi)");
            let mut mask = vec![false; alpha_res * alpha_res];
            for (i, &a1) in alphas.iter().enumerate() {
                for (j, &a2) in alphas.iter().enumerate() {
                    let (eta, delta) = model.forward(&[a_p, a1, a2, w, d]);
                    mask[i * alpha_res + j] = desirable_point(eta, delta, eta_min, delta_min);
                }
            }
            KernelCell {
                a_p,
                theta,
                kernel_size: kernel_size(&mask, alpha_res, alpha_res, pitch),
            }
        })
        .collect()
}

/// Long-format CSV export of a robustness map.
pub fn write_kernel_csv(
    path: &Path,
    cells: &[KernelCell],
    manifest_ref: Option<&str>,
) -> std::io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    if let Some(m) = manifest_ref {
        writeln!(w, "# manifest: {m}")?;
    }
    writeln!(w, "a_p,theta,kernel_size")?;
    for c in cells {
        writeln!(w, "{},{},{}", c.a_p, c.theta, c.kernel_size)?;
    }
    w.flush()
}

/// Self-describing model file (JSON): layer dimensions, row-major weights,
/// biases, normalization bounds, training report and dataset fingerprint.
#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    #[serde(flatten)]
    model: SurrogateModel,
}

const MODEL_FORMAT: &str = "waveguide-surrogate-v1";

pub fn save_model(path: &Path, model: &SurrogateModel) -> Result<(), SurrogateError> {
    let file = ModelFile {
        format: MODEL_FORMAT.to_string(),
        model: model.clone(),
    };
    let text = serde_json::to_string_pretty(&file).expect("model serializes");
    std::fs::write(path, text).map_err(|e| SurrogateError::ModelFile {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn load_model(path: &Path) -> Result<SurrogateModel, SurrogateError> {
    let text = std::fs::read_to_string(path).map_err(|e| SurrogateError::ModelFile {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| SurrogateError::ModelFile {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    if file.format != MODEL_FORMAT {
        return Err(SurrogateError::ModelFile {
            path: path.display().to_string(),
            message: format!("unsupported format `{}`", file.format),
        });
    }
    Ok(file.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::BranchLabel;
    use crate::sweep::RunFlag;

    fn bounds(min: &[f64], max: &[f64]) -> NormBounds {
        NormBounds {
            min: min.to_vec(),
            max: max.to_vec(),
        }
    }

    #[test]
    fn normalize_endpoints_midpoint_and_example() {
        let b = bounds(&[0.0, -2.0], &[6.0, 2.0]);
        let (v, clamped) = normalize(&[0.0, -2.0], &b).unwrap();
        assert_eq!(v, vec![-1.0, -1.0]);
        assert!(!clamped);
        let (v, _) = normalize(&[3.0, 0.0], &b).unwrap();
        assert_eq!(v, vec![0.0, 0.0]);
        // alpha = 4.5 on [0, 6] maps to 0.5.
        let (v, _) = normalize(&[4.5, 0.0], &b).unwrap();
        assert_eq!(v[0], 0.5);
        let (v, clamped) = normalize(&[7.0, 0.0], &b).unwrap();
        assert_eq!(v[0], 1.0);
        assert!(clamped);
    }

    #[test]
    fn normalize_round_trip_identity() {
        let b = bounds(&[0.2, 0.0, 0.0, 1.0, 0.2], &[1.0, 6.0, 6.0, 1.9, 0.6]);
        let v = [0.37, 5.1, 0.02, 1.33, 0.44];
        let (n, _) = normalize(&v, &b).unwrap();
        let back = b.denormalize(&n);
        for (a, b) in v.iter().zip(&back) {
            assert!(((a - b) / a).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_bounds_rejected() {
        let b = bounds(&[1.0, 0.0], &[1.0, 2.0]);
        assert!(matches!(
            normalize(&[1.0, 1.0], &b),
            Err(SurrogateError::DegenerateBounds { dim: 0, .. })
        ));
    }

    #[test]
    fn zero_network_predicts_out_bound_midpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Mlp::init(&[5, 50, 50, 50, 50, 2], &mut rng);
        for w in &mut net.weights {
            w.iter_mut().for_each(|v| *v = 0.0);
        }
        let model = SurrogateModel {
            mlp: net,
            in_bounds: bounds(&[0.0; 5], &[1.0; 5]),
            out_bounds: bounds(&[0.0, -2.0], &[0.5, 10.0]),
            report: dummy_report(),
        };
        let (eta, delta) = model.forward(&[0.5, 0.5, 0.5, 0.5, 0.5]);
        assert_eq!(eta, 0.25);
        assert_eq!(delta, 4.0);
    }

    fn dummy_report() -> TrainingReport {
        TrainingReport {
            epochs_run: 0,
            best_epoch: 0,
            best_val_loss: 0.0,
            initial_val_loss: 0.0,
            stopping: StoppingReason::MaxEpochs,
            n_train: 0,
            n_val: 0,
            n_test: 0,
            excluded_degenerate: 0,
            excluded_diverged: 0,
            optimizer: "test".into(),
            split_seed: 0,
            dataset_fingerprint: String::new(),
        }
    }

    fn synthetic_record(i: usize, eta: f64, delta: f64) -> SweepRecord {
        // Inputs spread over the design box, deterministic in i.
        let f = |k: u64| {
            let mut h = (i as u64).wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(k);
            h ^= h >> 33;
            h = h.wrapping_mul(0xff51afd7ed558ccd);
            h ^= h >> 33;
            (h >> 11) as f64 / (1u64 << 53) as f64
        };
        let d = 0.2 + 0.4 * f(4);
        let theta = 0.3 + 2.4 * f(5);
        SweepRecord {
            index: i,
            a_p: 0.2 + 0.8 * f(1),
            alpha1: 6.0 * f(2),
            alpha2: 6.0 * f(3),
            omega_hat: omega_hat(theta, d).unwrap(),
            d,
            theta,
            eta_lr: eta,
            eta_rl: 0.0,
            delta,
            branch: Some(BranchLabel::Nrb),
            flag: RunFlag::Ok,
            wall_time_s: 0.0,
        }
    }

    /// Records whose outputs are a smooth function of the inputs, so a
    /// small training run must fit them well.
    fn smooth_dataset(n: usize) -> Vec<SweepRecord> {
        (0..n)
            .map(|i| {
                let mut r = synthetic_record(i, 0.0, 0.0);
                r.eta_lr = 0.1 + 0.3 * (r.alpha1 / 6.0) * (r.a_p);
                r.delta = 2.0 + 3.0 * (r.alpha2 / 6.0) - 1.5 * (r.d - 0.2);
                r
            })
            .collect()
    }

    #[test]
    fn split_is_a_partition_with_contract_sizes() {
        for n in [100usize, 731, 4000] {
            let (tr, va, te) = split_indices(n, 99);
            assert_eq!(tr.len() + va.len() + te.len(), n);
            let mut all: Vec<usize> = tr.iter().chain(&va).chain(&te).copied().collect();
            all.sort_unstable();
            all.dedup();
            assert_eq!(all.len(), n, "overlap detected");
            assert!((tr.len() as f64 - 0.50 * n as f64).abs() <= 1.0);
            assert!((va.len() as f64 - 0.15 * n as f64).abs() <= 1.0);
            assert!((te.len() as f64 - 0.35 * n as f64).abs() <= 1.0);
        }
        // Deterministic in the seed.
        assert_eq!(split_indices(500, 7), split_indices(500, 7));
        assert_ne!(split_indices(500, 7).0, split_indices(500, 8).0);
    }

    #[test]
    fn constant_output_dataset_trains_to_the_constant() {
        // Constant targets normalize to the padded-bounds midpoint; a few
        // epochs drive the network onto it.
        let records: Vec<SweepRecord> = (0..160)
            .map(|i| synthetic_record(i, 0.3, 4.2))
            .collect();
        let mut opts = TrainOptions::default();
        opts.hidden = vec![16, 16];
        opts.max_epochs = 60;
        let model = train_with_options(&records, 5, &opts).unwrap();
        assert!(
            model.report.best_val_loss < 1e-3,
            "val loss {}",
            model.report.best_val_loss
        );
        let (eta, delta) = model.forward(&[0.5, 3.0, 3.0, 1.3, 0.4]);
        assert!((eta - 0.3).abs() < 0.02, "predicted {eta}");
        assert!((delta - 4.2).abs() < 0.05, "predicted {delta}");
    }

    #[test]
    fn training_fits_smooth_targets_and_reports() {
        let records = smooth_dataset(600);
        let mut opts = TrainOptions::default();
        opts.hidden = vec![24, 24];
        opts.max_epochs = 80;
        let model = train_with_options(&records, 11, &opts).unwrap();
        assert!(model.report.best_val_loss < 5e-3, "{}", model.report.best_val_loss);
        assert_eq!(model.report.n_train, 300);
        assert_eq!(model.report.n_val, 90);
        assert_eq!(model.report.n_test, 210);
        assert_eq!(model.report.split_seed, 11);

        let test = test_subset(&records, 11);
        assert_eq!(test.len(), 210);
        let report = evaluate(&model, &test, 0.2, 5.0);
        assert_eq!(report.n_used, 210);
        assert!(report.r_eta.unwrap() > 0.97, "r_eta {:?}", report.r_eta);
        assert!(report.r_delta.unwrap() > 0.97, "r_delta {:?}", report.r_delta);
    }

    #[test]
    fn training_skips_flagged_records_and_enforces_minimum() {
        let mut records = smooth_dataset(220);
        for r in records.iter_mut().take(40) {
            r.flag = RunFlag::Degenerate;
            r.delta = f64::INFINITY;
        }
        for r in records.iter_mut().skip(200) {
            r.flag = RunFlag::Diverged;
        }
        let mut opts = TrainOptions::default();
        opts.hidden = vec![8];
        opts.max_epochs = 5;
        let model = train_with_options(&records, 3, &opts).unwrap();
        assert_eq!(model.report.excluded_degenerate, 40);
        assert_eq!(model.report.excluded_diverged, 20);
        assert_eq!(
            model.report.n_train + model.report.n_val + model.report.n_test,
            160
        );

        let too_few: Vec<SweepRecord> = smooth_dataset(90);
        assert!(matches!(
            train_with_options(&too_few, 1, &opts),
            Err(SurrogateError::TooFewRecords { got: 90, need: 100 })
        ));
    }

    #[test]
    fn lm_mode_trains_small_architectures_and_caps_large_ones() {
        let records = smooth_dataset(240);
        let mut opts = TrainOptions::default();
        opts.optimizer = Optimizer::Lm { initial_lambda: 1e-2 };
        opts.hidden = vec![10];
        opts.max_epochs = 40;
        let model = train_with_options(&records, 17, &opts).unwrap();
        assert!(model.report.best_val_loss < 5e-3, "{}", model.report.best_val_loss);
        assert!(model.report.optimizer.starts_with("lm"));

        opts.hidden = DEFAULT_HIDDEN.to_vec();
        assert!(matches!(
            train_with_options(&records, 17, &opts),
            Err(SurrogateError::LmTooLarge { .. })
        ));
    }

    #[test]
    fn eval_metrics_on_reference_counts() {
        let c = ConfusionCounts {
            true_pos: 726,
            false_pos: 165,
            false_neg: 160,
            true_neg: 19_949,
        };
        assert_eq!(c.total(), 21_000);
        assert_eq!(c.sensitivity().unwrap(), 726.0 / 886.0);
        assert_eq!(c.specificity().unwrap(), 19_949.0 / 20_114.0);
        assert_eq!(c.precision().unwrap(), 726.0 / 891.0);
    }

    #[test]
    fn perfect_and_empty_predictors() {
        let c = ConfusionCounts {
            true_pos: 10,
            false_pos: 0,
            false_neg: 0,
            true_neg: 90,
        };
        assert_eq!(c.sensitivity(), Some(1.0));
        assert_eq!(c.specificity(), Some(1.0));
        assert_eq!(c.precision(), Some(1.0));

        let c = ConfusionCounts {
            true_pos: 0,
            false_pos: 0,
            false_neg: 5,
            true_neg: 95,
        };
        assert_eq!(c.sensitivity(), Some(0.0));
        assert_eq!(c.precision(), None, "empty predicted-positive class");
    }

    #[test]
    fn empty_actual_class_is_flagged() {
        let records = smooth_dataset(300); // delta <= 5 everywhere
        let mut opts = TrainOptions::default();
        opts.hidden = vec![8];
        opts.max_epochs = 3;
        let model = train_with_options(&records, 2, &opts).unwrap();
        let test = test_subset(&records, 2);
        let report = evaluate(&model, &test, 0.2, 50.0);
        assert!(report.empty_actual_desirable);
        assert_eq!(report.sensitivity, None);
    }

    #[test]
    fn kernel_size_examples() {
        let mask = vec![true; 100];
        assert_eq!(kernel_size(&mask, 10, 10, 0.6), 6.0);
        let mask = vec![false; 100];
        assert_eq!(kernel_size(&mask, 10, 10, 0.6), 0.0);
        // L-shaped region: the largest square is 2x2.
        let rows = 4;
        let cols = 4;
        let mut mask = vec![false; rows * cols];
        for r in 0..4 {
            for c in 0..2 {
                mask[r * cols + c] = true;
            }
        }
        mask[2 * cols + 2] = true;
        assert_eq!(kernel_size(&mask, rows, cols, 1.0), 2.0);
    }

    /// Exhaustive all-squares oracle for the DP.
    fn kernel_brute_force(mask: &[bool], rows: usize, cols: usize, pitch: f64) -> f64 {
        let mut best = 0usize;
        for r0 in 0..rows {
            for c0 in 0..cols {
                'size: for s in 1..=(rows - r0).min(cols - c0) {
                    for r in r0..r0 + s {
                        for c in c0..c0 + s {
                            if !mask[r * cols + c] {
                                break 'size;
                            }
                        }
                    }
                    best = best.max(s);
                }
            }
        }
        best as f64 * pitch
    }

    #[test]
    fn kernel_size_matches_brute_force_on_random_masks() {
        let mut state = 0x1234_5678_9abc_def0u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for trial in 0..40 {
            let rows = 1 + (next() % 30) as usize;
            let cols = 1 + (next() % 30) as usize;
            let fill = 0.3 + 0.6 * (trial as f64 / 40.0);
            let mask: Vec<bool> = (0..rows * cols)
                .map(|_| (next() % 1000) as f64 / 1000.0 < fill)
                .collect();
            let dp = kernel_size(&mask, rows, cols, 0.1);
            let bf = kernel_brute_force(&mask, rows, cols, 0.1);
            assert_eq!(dp, bf, "{rows}x{cols} trial {trial}");
        }
    }

    #[test]
    fn robustness_map_shapes_and_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = Mlp::init(&[5, 8, 2], &mut rng);
        for w in &mut net.weights {
            w.iter_mut().for_each(|v| *v = 0.0);
        }
        // Zero network predicts out-bound midpoints everywhere.
        let model_none = SurrogateModel {
            mlp: net.clone(),
            in_bounds: bounds(&[0.2, 0.0, 0.0, 1.0, 0.2], &[1.0, 6.0, 6.0, 1.9, 0.6]),
            out_bounds: bounds(&[0.0, -2.0], &[0.1, 2.0]), // midpoint undesirable
            report: dummy_report(),
        };
        let cells = robustness_map(&model_none, 0.2, &[0.4, 0.8], &[1.0, 1.5, 2.0], 8, 0.2, 4.0);
        assert_eq!(cells.len(), 6);
        assert!(cells.iter().all(|c| c.kernel_size == 0.0));

        // Midpoint desirable: whole alpha plane passes, kernel covers it.
        let model_all = SurrogateModel {
            mlp: net,
            in_bounds: model_none.in_bounds.clone(),
            out_bounds: bounds(&[0.3, 5.0], &[0.5, 9.0]), // midpoint (0.4, 7.0)
            report: dummy_report(),
        };
        let cells = robustness_map(&model_all, 0.2, &[0.4], &[1.5], 7, 0.2, 4.0);
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].kernel_size, 7.0 * (6.0 / 6.0));
    }

    #[test]
    fn model_file_round_trip() {
        let records = smooth_dataset(150);
        let mut opts = TrainOptions::default();
        opts.hidden = vec![6];
        opts.max_epochs = 3;
        let model = train_with_options(&records, 9, &opts).unwrap();
        let dir = std::env::temp_dir().join("waveguide-surrogate-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.json");
        save_model(&path, &model).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded, model);
        let (a, b) = model.forward(&[0.5, 3.0, 3.0, 1.3, 0.4]);
        let (a2, b2) = loaded.forward(&[0.5, 3.0, 3.0, 1.3, 0.4]);
        assert_eq!((a, b), (a2, b2));

        std::fs::write(&path, "{\"format\": \"other\"}").unwrap();
        assert!(load_model(&path).is_err());
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = smooth_dataset(50);
        let mut b = smooth_dataset(50);
        assert_eq!(dataset_fingerprint(&a), dataset_fingerprint(&b));
        b[10].eta_lr += 1e-9;
        assert_ne!(dataset_fingerprint(&a), dataset_fingerprint(&b));
    }

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
}
