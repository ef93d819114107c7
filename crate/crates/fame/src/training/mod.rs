//! Loss, analytic gradients, Adam, and the mini-batch training loop.
//!
//! Every deviation parameter is stored unconstrained and realized through
//! `max(|raw|, SIGMA_MIN)`, which keeps the constrained problem
//! unconstrained for the optimizer while guaranteeing valid MFs after any
//! step. Gradients are exact for the function actually computed,
//! including the quotient guard, the abs reparameterization, and the
//! cumulative center coupling of sculpted partitions; `fd_check` verifies
//! them against central differences.

mod adam;
mod backward;
mod gradcheck;

pub use adam::AdamState;
pub use backward::{backward, BatchGrad};
pub use gradcheck::{fd_check, gradcheck_suite, suite_instance, FdReport, SuiteOutcome, SUITE_STEP};

use std::io::Write;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{BatchPlan, DataError, NumericDataset};
use crate::model::{ModelError, ModelParams, ModelSpec};

/// Antecedent initialization range on the reduced space; inputs are
/// z-scored, so projected values concentrate in this band at start.
pub const Z_INIT_RANGE: (f64, f64) = (-2.0, 2.0);

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("learning rate must be positive, got {0}")]
    BadLearningRate(f64),
    #[error("lambda must be non-negative, got {0}")]
    BadLambda(f64),
    #[error("frobenius loss requires a projection layer")]
    LossNeedsProjection,
    #[error("predictions and targets differ in length: {preds} vs {targets}")]
    LengthMismatch { preds: usize, targets: usize },
    #[error("batch must hold at least one sample")]
    EmptyBatch,
    #[error("model expects M={expected} features, data has {got}")]
    FeatureMismatch { expected: usize, got: usize },
    #[error("init range must satisfy lo < hi, got [{0}, {1}]")]
    BadInitRange(f64, f64),
    #[error("finite-difference step must be positive, got {0}")]
    BadStep(f64),
}

/// Which training objective to minimize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LossKind {
    /// Mean squared error.
    #[serde(rename = "l2")]
    L2,
    /// Mean squared error plus a Frobenius penalty on the projection
    /// weight matrix (bias excluded).
    #[serde(rename = "lf")]
    LF,
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::L2 => "l2",
            LossKind::LF => "lf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub kind: LossKind,
    pub lambda: f64,
}

impl LossConfig {
    pub fn l2() -> Self {
        Self { kind: LossKind::L2, lambda: 0.0 }
    }

    pub fn lf(lambda: f64) -> Self {
        Self { kind: LossKind::LF, lambda }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.lambda >= 0.0) {
            return Err(TrainError::BadLambda(self.lambda));
        }
        Ok(())
    }
}

/// Which parameter snapshot `train` returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SnapshotPolicy {
    /// Parameters at the end of the epoch with the lowest mean training
    /// loss.
    #[serde(rename = "argmin")]
    ArgMinEpoch,
    /// Parameters after the last epoch.
    #[serde(rename = "final")]
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossConfig,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub snapshot: SnapshotPolicy,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.lr > 0.0) {
            return Err(TrainError::BadLearningRate(self.lr));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Data(DataError::BadBatchSize {
                batch: self.batch_size,
                rows: 0,
            }));
        }
        self.loss.validate()
    }
}

/// One epoch's record in the training history.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub wall_ms: f64,
}

/// Per-epoch mean training losses plus the best epoch seen.
#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_loss: f64,
}

impl TrainHistory {
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "epoch,loss,wall_ms")?;
        for rec in &self.epochs {
            writeln!(out, "{},{},{}", rec.epoch, rec.loss, rec.wall_ms)?;
        }
        Ok(())
    }
}

/// Trained parameters plus the history that produced them.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ModelParams,
    pub history: TrainHistory,
}

/// Batch objective on alreadycomputed predictions: mean squared error,
/// plus `lambda/2 * ||W||_F^2` for the Frobenius loss. The projection
/// bias is never regularized.
pub fn loss(
    preds: &[f64],
    targets: &[f64],
    w: Option<&[f64]>,
    cfg: &LossConfig,
) -> Result<f64, TrainError> {
    if preds.len() != targets.len() {
        return Err(TrainError::LengthMismatch { preds: preds.len(), targets: targets.len() });
    }
    if preds.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    cfg.validate()?;
    let mse = preds
        .iter()
        .zip(targets)
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum::<f64>()
        / preds.len() as f64;
    match cfg.kind {
        LossKind::L2 => Ok(mse),
        LossKind::LF => {
            let w = w.ok_or(TrainError::LossNeedsProjection)?;
            Ok(mse + 0.5 * cfg.lambda * w.iter().map(|&v| v * v).sum::<f64>())
        }
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// Seeded parameter initialization.
///
/// - `W ~ U(-sqrt(6/(M+D)), +sqrt(6/(M+D)))`, `b = 0`
/// - Gaussian banks: centers evenly spaced over `z_range`, all
///   deviations `span / (2(P-1))` (`span/2` for a single rule)
/// - sculpted banks: `c1 = lo`, every right deviation
///   `span / (4(P-1))` (`span/4` for a single rule), `sigma_l1` equal to
///   the first right deviation — the derived centers then match the
///   evenly spaced ones
/// - consequent slopes `~ U(-0.1, 0.1)`, intercepts 0
///
/// Deviations are stored at their positive realized values. Draws happen
/// in layout-segment order from one ChaCha8 stream, so a seed fully
/// determines the result.
pub fn init(spec: &ModelSpec, seed: u64, z_range: (f64, f64)) -> Result<ModelParams, TrainError> {
    let (lo, hi) = z_range;
    if !(lo < hi) {
        return Err(TrainError::BadInitRange(lo, hi));
    }
    let span = hi - lo;
    let p = spec.p;
    let centers = linspace(lo, hi, p);
    let gauss_sigma = if p == 1 { span / 2.0 } else { span / (2.0 * (p - 1) as f64) };
    let sculpt_sigma = if p == 1 { span / 4.0 } else { span / (4.0 * (p - 1) as f64) };
    let w_bound = (6.0 / (spec.m + spec.d) as f64).sqrt();

    let layout = spec.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = vec![0.0f64; layout.total()];
    for seg in layout.segments() {
        let vals = &mut raw[seg.offset()..seg.offset() + seg.len()];
        match seg.name() {
            "W" => vals.iter_mut().for_each(|v| *v = rng.random_range(-w_bound..w_bound)),
            "b" | "a0" | "cons_w0" => {}
            "c" => {
                // D x P, dim-major: every dimension gets the same spread
                for (i, v) in vals.iter_mut().enumerate() {
                    *v = centers[i % p];
                }
            }
            "ant_c" => {
                // P x d_a, rule-major: rule p centers at the p-th knot
                let cols = seg.cols();
                for (i, v) in vals.iter_mut().enumerate() {
                    *v = centers[i / cols];
                }
            }
            "sigma" | "ant_sigma" => vals.fill(gauss_sigma),
            "c1" => vals.fill(lo),
            "sigma_l1" | "sigma_r" => vals.fill(sculpt_sigma),
            "a" | "cons_w" => vals.iter_mut().for_each(|v| *v = rng.random_range(-0.1..0.1)),
            other => unreachable!("unknown segment {other}"),
        }
    }
    Ok(ModelParams::new(*spec, raw)?)
}

/// Mini-batch training: per epoch, a fresh seeded shuffle is split into
/// batches; each batch contributes one analytic-gradient Adam step. The
/// returned snapshot follows the configured policy (lowest epoch-mean
/// loss by default). Fully deterministic given the seed.
pub fn train(
    train_data: &NumericDataset,
    spec: &ModelSpec,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train_data.n_features() != spec.m {
        return Err(TrainError::FeatureMismatch {
            expected: spec.m,
            got: train_data.n_features(),
        });
    }
    let n = train_data.n_rows();
    let plan = BatchPlan::new(n, cfg.batch_size, cfg.seed)?;
    let mut model = init(spec, cfg.seed, Z_INIT_RANGE)?;
    let mut adam = AdamState::new(model.raw().len(), cfg.lr);
    let mut history = TrainHistory { epochs: Vec::new(), best_epoch: None, best_loss: f64::INFINITY };
    let mut best_raw: Option<Vec<f64>> = None;

    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let mut weighted_loss = 0.0;
        for batch in plan.epoch_batches(epoch) {
            let bg = backward(&model, train_data, &batch, &cfg.loss)?;
            adam.step(model.raw_mut(), &bg.grad);
            weighted_loss += bg.loss * batch.len() as f64;
        }
        let epoch_loss = weighted_loss / n as f64;
        history.epochs.push(EpochRecord {
            epoch,
            loss: epoch_loss,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        if epoch_loss < history.best_loss {
            history.best_loss = epoch_loss;
            history.best_epoch = Some(epoch);
            best_raw = Some(model.raw().to_vec());
        }
    }

    if cfg.snapshot == SnapshotPolicy::ArgMinEpoch {
        if let Some(raw) = best_raw {
            model.raw_mut().copy_from_slice(&raw);
        }
    }
    Ok(TrainOutcome { model, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;

    fn spec(variant: Variant, p: usize, d: Option<usize>, m: usize) -> ModelSpec {
        ModelSpec::new(variant, p, d, m).unwrap()
    }

    #[test]
    fn loss_single_squared_error() {
        let v = loss(&[0.0], &[1.0], None, &LossConfig::l2()).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn loss_frobenius_term_only() {
        let w = [2.0, 0.0, 0.0, 0.0];
        let v = loss(&[1.0, 2.0], &[1.0, 2.0], Some(&w), &LossConfig::lf(0.05)).unwrap();
        assert!((v - 0.1).abs() < 1e-15);
    }

    #[test]
    fn loss_mean_of_squares() {
        let v = loss(&[1.0, -1.0], &[0.0, 0.0], None, &LossConfig::l2()).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn loss_lf_without_projection_errors() {
        assert!(matches!(
            loss(&[1.0], &[1.0], None, &LossConfig::lf(0.1)),
            Err(TrainError::LossNeedsProjection)
        ));
    }

    #[test]
    fn init_fame_centers_evenly_spaced() {
        let s = spec(Variant::Fame, 5, Some(2), 4);
        let model = init(&s, 7, Z_INIT_RANGE).unwrap();
        for dim in 0..2 {
            let part = match model.sfls(dim) {
                crate::model::SflsParams::Fame(f) => f.partition,
                _ => unreachable!(),
            };
            let centers = part.centers();
            for (c, want) in centers.iter().zip([-2.0, -1.0, 0.0, 1.0, 2.0]) {
                assert!((c - want).abs() < 1e-12, "centers {centers:?}");
            }
        }
    }

    #[test]
    fn init_fam_centers_evenly_spaced() {
        let s = spec(Variant::VFam, 3, None, 2);
        let model = init(&s, 0, Z_INIT_RANGE).unwrap();
        match model.sfls(0) {
            crate::model::SflsParams::Fam(f) => assert_eq!(f.c, vec![-2.0, 0.0, 2.0]),
            _ => unreachable!(),
        }
    }

    #[test]
    fn init_seeds_change_weights_not_centers() {
        let s = spec(Variant::Fam, 5, Some(3), 6);
        let a = init(&s, 1, Z_INIT_RANGE).unwrap();
        let b = init(&s, 2, Z_INIT_RANGE).unwrap();
        let w = a.layout().seg("W").unwrap();
        assert_ne!(a.raw()[w.offset()..w.offset() + w.len()], b.raw()[w.offset()..w.offset() + w.len()]);
        let c = a.layout().seg("c").unwrap();
        assert_eq!(a.raw()[c.offset()..c.offset() + c.len()], b.raw()[c.offset()..c.offset() + c.len()]);
    }

    #[test]
    fn init_rejects_bad_range() {
        let s = spec(Variant::VFam, 2, None, 2);
        assert!(matches!(init(&s, 0, (1.0, 1.0)), Err(TrainError::BadInitRange(_, _))));
    }

    #[test]
    fn init_draws_depend_on_seed_only() {
        let s = spec(Variant::DrMflse, 4, Some(2), 5);
        let a = init(&s, 42, Z_INIT_RANGE).unwrap();
        let b = init(&s, 42, Z_INIT_RANGE).unwrap();
        assert_eq!(a.raw(), b.raw());
    }
}
