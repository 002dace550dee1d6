//! The training harness: generates the synthetic task, drives the chosen
//! optimizer (dense, sketched or injective-oracle), and emits metrics,
//! optional auxiliary snapshots, and a final state checkpoint.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use sketch_optim::checkpoint::{write_state, SnapshotWriter};
use sketch_optim::diagnostics::{l2_error, memory_report, midpoint_50, MetricsWriter};
use sketch_optim::hash::HashFamily;
use sketch_optim::matrix::Matrix;
use sketch_optim::model::{generate_dataset, Example, SoftmaxModel};
use sketch_optim::optim::{
    clip_gradient, maybe_clean, AuxState, MomentTag, OptimizerConfig, OptimizerState,
    SparseGradient,
};
use sketch_optim::sketch::{SketchKind, SketchTensor};
use sketch_optim::Real;

use crate::config::{Mode, OptimizerKind, Precision, RunConfig};
use crate::error::{CliError, Result};

/// Seed salts keeping the per-moment hash families independent.
const FIRST_MOMENT_SALT: u64 = 0x5153_4B31_0000_0001;
const SECOND_MOMENT_SALT: u64 = 0x5153_4B32_0000_0002;

/// What a finished training run reports back to callers; everything here
/// is also present in `metrics.csv`.
#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub steps: u64,
    /// Batch loss at the last executed step; `None` when `steps = 0`.
    pub final_batch_loss: Option<f64>,
    /// Mean cross-entropy over the whole dataset after training.
    pub final_full_loss: Option<f64>,
    /// Mean over logged steps of the mean midpoint across tracked moments.
    pub mean_midpoint: Option<f64>,
    pub memory_ratio: f64,
    /// Logged `(step, batch loss)` series.
    pub losses: Vec<(u64, f64)>,
}

/// Runs `train` per the config, writing `resolved.toml`, `metrics.csv`,
/// `state.bin` and (when `snapshot_interval > 0`) `snapshots.bin` in `out`.
pub fn run_train(cfg: &RunConfig, out: &Path) -> Result<TrainSummary> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    fs::write(out.join("resolved.toml"), cfg.to_toml()?)?;
    match cfg.precision {
        Precision::F32 => train_impl::<f32>(cfg, out),
        Precision::F64 => train_impl::<f64>(cfg, out),
    }
}

fn moment_family(cfg: &RunConfig, salt: u64) -> Result<HashFamily> {
    let n = cfg.task.num_features;
    match cfg.optimizer.mode {
        Mode::Sketched => {
            let s = cfg.sketch.as_ref().expect("validated");
            Ok(HashFamily::new(s.depth, s.width, n, cfg.seed ^ salt)?)
        }
        Mode::InjectiveOracle => Ok(HashFamily::injective(n)?),
        Mode::Dense => Err(CliError::Config("dense mode has no hash family".to_string())),
    }
}

fn build_state<F: Real>(cfg: &RunConfig) -> Result<OptimizerState<F>> {
    let n = cfg.task.num_features;
    let d = cfg.task.num_classes;
    let kind = cfg.optimizer.kind;
    if cfg.optimizer.mode == Mode::Dense {
        return Ok(match kind {
            OptimizerKind::Sgd => OptimizerState::sgd(),
            OptimizerKind::Momentum => OptimizerState::momentum_dense(n, d),
            OptimizerKind::Adagrad => OptimizerState::adagrad_dense(n, d),
            OptimizerKind::Adam => OptimizerState::adam_dense(n, d),
        });
    }
    match kind {
        OptimizerKind::Sgd => unreachable!("validated"),
        OptimizerKind::Momentum => {
            let fam = moment_family(cfg, FIRST_MOMENT_SALT)?;
            let m = SketchTensor::new(SketchKind::SignedMedian, fam, d)?;
            Ok(OptimizerState::momentum_sketched(m)?)
        }
        OptimizerKind::Adagrad => {
            let fam = moment_family(cfg, SECOND_MOMENT_SALT)?;
            let v = SketchTensor::new(SketchKind::NonnegMin, fam, d)?;
            Ok(OptimizerState::adagrad_sketched(v)?)
        }
        OptimizerKind::Adam => {
            let first = if cfg.optimizer.beta1 > 0.0 {
                let fam = moment_family(cfg, FIRST_MOMENT_SALT)?;
                Some(SketchTensor::new(SketchKind::SignedMedian, fam, d)?)
            } else {
                None
            };
            let fam = moment_family(cfg, SECOND_MOMENT_SALT)?;
            let second = SketchTensor::new(SketchKind::NonnegMin, fam, d)?;
            Ok(OptimizerState::adam_sketched(first, second)?)
        }
    }
}

/// The sketches currently held by the optimizer, tagged by moment.
fn sketches_of<F: Real>(state: &OptimizerState<F>) -> Vec<(MomentTag, &SketchTensor<F>)> {
    match state.aux() {
        AuxState::MomentumSketched(m) => vec![(MomentTag::First, m)],
        AuxState::AdagradSketched(v) => vec![(MomentTag::Second, v)],
        AuxState::AdamSketched { first, second } => {
            let mut out = Vec::new();
            if let Some(m) = first {
                out.push((MomentTag::First, m));
            }
            out.push((MomentTag::Second, second));
            out
        }
        _ => Vec::new(),
    }
}

/// Applies the exact dense update rules to the shadow reference matrices
/// on the same clipped gradient stream the optimizer consumes. Lazy
/// semantics: only active rows change.
fn update_shadow<F: Real>(
    refs: &mut [(MomentTag, Matrix<F>)],
    kind: OptimizerKind,
    cfg: &OptimizerConfig<F>,
    grad: &SparseGradient<F>,
) {
    let one = F::one();
    for (tag, reference) in refs.iter_mut() {
        for (item, row) in grad.iter() {
            let dst = reference.row_mut(item);
            match (kind, *tag) {
                (OptimizerKind::Momentum, MomentTag::First) => {
                    for (r, &g) in dst.iter_mut().zip(row) {
                        *r = cfg.momentum_decay * *r + g;
                    }
                }
                (OptimizerKind::Adam, MomentTag::First) => {
                    for (r, &g) in dst.iter_mut().zip(row) {
                        *r = cfg.beta1 * *r + (one - cfg.beta1) * g;
                    }
                }
                (OptimizerKind::Adam, MomentTag::Second) => {
                    for (r, &g) in dst.iter_mut().zip(row) {
                        *r = cfg.beta2 * *r + (one - cfg.beta2) * g * g;
                    }
                }
                (OptimizerKind::Adagrad, MomentTag::Second) => {
                    for (r, &g) in dst.iter_mut().zip(row) {
                        *r += g * g;
                    }
                }
                _ => {}
            }
        }
    }
}

fn train_impl<F: Real>(cfg: &RunConfig, out: &Path) -> Result<TrainSummary> {
    let task = cfg.task.to_core();
    let data = generate_dataset(&task)?;
    let n = task.num_features;
    let d = task.num_classes;
    let mut model: SoftmaxModel<F> = SoftmaxModel::new(n, d);
    let mut state: OptimizerState<F> = build_state(cfg)?;
    let opt_base: OptimizerConfig<F> = cfg.optimizer.to_core();

    let mut shadow: Vec<(MomentTag, Matrix<F>)> = if cfg.run.shadow {
        sketches_of(&state).iter().map(|(tag, _)| (*tag, Matrix::zeros(n, d))).collect()
    } else {
        Vec::new()
    };

    let mut metrics = MetricsWriter::new(BufWriter::new(File::create(out.join("metrics.csv"))?))?;
    let report = memory_report(&state, n, d)?;
    metrics.write(0, "memory_dense_cells", report.dense_total as f64)?;
    metrics.write(0, "memory_actual_cells", report.actual_total as f64)?;
    metrics.write(0, "memory_ratio", report.ratio())?;
    metrics.flush()?;

    let mut snapshots = if cfg.run.snapshot_interval > 0 {
        let tags: Vec<MomentTag> = state.reconstruct_aux()?.iter().map(|(t, _)| *t).collect();
        let file = BufWriter::new(File::create(out.join("snapshots.bin"))?);
        Some(SnapshotWriter::new(file, n, d, &tags)?)
    } else {
        None
    };

    let steps = cfg.run.steps;
    let batch_size = cfg.run.batch_size;
    let mut batch: Vec<Example> = Vec::with_capacity(batch_size);
    let mut losses = Vec::new();
    let mut midpoint_means = Vec::new();
    let mut final_batch_loss = None;

    for t in 1..=steps {
        let start = ((t - 1) as usize * batch_size) % data.len();
        batch.clear();
        for j in 0..batch_size {
            batch.push(data[(start + j) % data.len()].clone());
        }

        let mut opt = opt_base;
        if cfg.optimizer.lr_schedule == crate::config::LrSchedule::Linear {
            let remaining = (steps - (t - 1)) as f64 / steps as f64;
            opt.learning_rate = F::from_f64_lossy(cfg.optimizer.learning_rate * remaining);
        }

        let loss = model.forward_loss(&batch)?.to_f64_lossy();
        let mut grad = model.backward(&batch)?;
        if let Some(clip) = opt.clip_norm {
            grad = clip_gradient(grad, clip)?;
        }
        if !shadow.is_empty() {
            update_shadow(&mut shadow, cfg.optimizer.kind, &opt, &grad);
        }
        state.apply_step(model.weights_mut(), &grad, &opt)?;
        maybe_clean(&mut state, &opt)?;
        final_batch_loss = Some(loss);

        let log_now = t % cfg.run.log_interval == 0 || t == steps;
        if log_now {
            metrics.write(t, "loss", loss)?;
            metrics.write(t, "lr", opt.learning_rate.to_f64_lossy())?;
            let aux = state.reconstruct_aux()?;
            let mut mids = Vec::new();
            for (tag, matrix) in &aux {
                if let Ok(mid) = midpoint_50(matrix.as_slice()) {
                    metrics.write(t, &format!("midpoint_{}", tag.name()), mid)?;
                    mids.push(mid);
                }
            }
            if !mids.is_empty() {
                let mean = mids.iter().sum::<f64>() / mids.len() as f64;
                let max = mids.iter().cloned().fold(f64::MIN, f64::max);
                metrics.write(t, "midpoint_mean", mean)?;
                metrics.write(t, "midpoint_max", max)?;
                midpoint_means.push(mean);
            }
            if !shadow.is_empty() {
                let sketches = sketches_of(&state);
                for (tag, reference) in &shadow {
                    if let Some((_, sketch)) = sketches.iter().find(|(t2, _)| t2 == tag) {
                        let (abs, rel) = l2_error(reference, sketch)?;
                        metrics.write(t, &format!("l2_abs_{}", tag.name()), abs)?;
                        metrics.write(t, &format!("l2_rel_{}", tag.name()), rel)?;
                    }
                }
            }
            losses.push((t, loss));
            metrics.flush()?;
        }
        if let Some(writer) = snapshots.as_mut() {
            if t % cfg.run.snapshot_interval == 0 {
                let aux = state.reconstruct_aux()?;
                let matrices: Vec<&Matrix<F>> = aux.iter().map(|(_, m)| m).collect();
                writer.append(t, &matrices)?;
            }
        }
    }

    let final_full_loss = if steps > 0 {
        let loss = model.forward_loss(&data)?.to_f64_lossy();
        metrics.write(steps, "final_full_loss", loss)?;
        Some(loss)
    } else {
        None
    };
    metrics.flush()?;
    if let Some(writer) = snapshots.as_mut() {
        writer.flush()?;
    }

    let mut checkpoint = BufWriter::new(File::create(out.join("state.bin"))?);
    write_state(&mut checkpoint, &state, &opt_base)?;

    let mean_midpoint = if midpoint_means.is_empty() {
        None
    } else {
        Some(midpoint_means.iter().sum::<f64>() / midpoint_means.len() as f64)
    };
    Ok(TrainSummary {
        steps,
        final_batch_loss,
        final_full_loss,
        mean_midpoint,
        memory_ratio: report.ratio(),
        losses,
    })
}
