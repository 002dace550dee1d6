//! Measurement tools: shadow trackers, error norms, power-law statistics
//! and memory accounting.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::optim::{AuxState, MomentTag, OptimizerState};
use crate::scalar::Real;
use crate::sketch::{SketchKind, SketchTensor};

/// Frobenius error between a dense reference and a sketch's estimates.
///
/// Every item in the sketch domain is queried and compared against the
/// matching reference row. Returns `(absolute, relative)`; the relative
/// error divides by `max(norm(reference), 1e-12)`. Accumulation is in
/// `f64` regardless of the counter type.
pub fn l2_error<F: Real>(reference: &Matrix<F>, sketch: &SketchTensor<F>) -> Result<(f64, f64)> {
    if reference.rows() != sketch.domain() || reference.cols() != sketch.dim() {
        return Err(Error::Config(format!(
            "reference {}x{} does not match sketch domain {} dim {}",
            reference.rows(),
            reference.cols(),
            sketch.domain(),
            sketch.dim()
        )));
    }
    let mut est = vec![F::zero(); sketch.dim()];
    let mut err_sq = 0.0f64;
    let mut ref_sq = 0.0f64;
    for item in 0..sketch.domain() {
        sketch.query_into(item, &mut est)?;
        for (q, r) in est.iter().zip(reference.row(item)) {
            let d = q.to_f64_lossy() - r.to_f64_lossy();
            err_sq += d * d;
            let rv = r.to_f64_lossy();
            ref_sq += rv * rv;
        }
    }
    let abs = err_sq.sqrt();
    let rel = abs / ref_sq.sqrt().max(1e-12);
    Ok((abs, rel))
}

/// Power-law midpoint: the smallest `k` such that the `k` largest absolute
/// values carry at least half the total absolute mass, divided by the
/// list length. Small values mean heavy concentration; the uniform
/// distribution gives 0.5.
pub fn midpoint_50<F: Real>(values: &[F]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Data("midpoint of an empty list".to_string()));
    }
    let mut mags: Vec<f64> = values.iter().map(|v| v.to_f64_lossy().abs()).collect();
    if mags.iter().any(|m| !m.is_finite()) {
        return Err(Error::Data("midpoint input contains a non-finite value".to_string()));
    }
    let total: f64 = mags.iter().sum();
    if total == 0.0 {
        return Err(Error::Data("midpoint of an all-zero list".to_string()));
    }
    mags.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
    let half = 0.5 * total;
    let mut cumulative = 0.0f64;
    for (i, m) in mags.iter().enumerate() {
        cumulative += m;
        if cumulative >= half {
            return Ok((i + 1) as f64 / values.len() as f64);
        }
    }
    // Rounding can leave the running sum a hair short of half the total;
    // by construction the full list always qualifies.
    Ok(1.0)
}

/// Indices of the `k` rows with the largest L2 norms, in decreasing order;
/// ties break toward the lower index. `k` is clamped to the row count.
pub fn top_k_ids<F: Real>(m: &Matrix<F>, k: usize) -> Vec<usize> {
    let mut scored: Vec<(usize, f64)> = (0..m.rows())
        .map(|i| {
            let norm_sq: f64 = m
                .row(i)
                .iter()
                .map(|v| {
                    let x = v.to_f64_lossy();
                    x * x
                })
                .sum();
            (i, norm_sq)
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.truncate(k.min(m.rows()));
    scored.into_iter().map(|(i, _)| i).collect()
}

/// Jaccard similarity of two index sets.
pub fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let sa: std::collections::BTreeSet<usize> = a.iter().copied().collect();
    let sb: std::collections::BTreeSet<usize> = b.iter().copied().collect();
    let inter = sa.intersection(&sb).count();
    let union = sa.union(&sb).count();
    inter as f64 / union as f64
}

/// Midpoint and heavy-hitter snapshot of one auxiliary variable.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerLawReport {
    pub step: u64,
    pub midpoint: f64,
    pub top_ids: Vec<usize>,
}

/// Computes the power-law report of a dense matrix snapshot.
pub fn power_law_report<F: Real>(step: u64, m: &Matrix<F>, k: usize) -> Result<PowerLawReport> {
    Ok(PowerLawReport { step, midpoint: midpoint_50(m.as_slice())?, top_ids: top_k_ids(m, k) })
}

/// Checked `depth * width * dim` cell count.
pub fn counter_cells(depth: usize, width: usize, dim: usize) -> Result<usize> {
    depth
        .checked_mul(width)
        .and_then(|n| n.checked_mul(dim))
        .ok_or_else(|| Error::Config("counter cell count overflows".to_string()))
}

/// Cell counts for one auxiliary variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MomentCells {
    pub tag: MomentTag,
    /// Cells a dense buffer for this moment would use (`n * d`).
    pub dense_cells: usize,
    /// Cells actually allocated (equal to `dense_cells` for dense buffers).
    pub actual_cells: usize,
}

/// Memory accounting for an optimizer state against its dense baseline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryReport {
    pub per_moment: Vec<MomentCells>,
    pub dense_total: usize,
    pub actual_total: usize,
}

impl MemoryReport {
    /// Compression ratio `dense / actual`; 1.0 for stateless optimizers.
    pub fn ratio(&self) -> f64 {
        if self.actual_total == 0 {
            1.0
        } else {
            self.dense_total as f64 / self.actual_total as f64
        }
    }
}

/// Counts auxiliary cells in `state` against the `rows x cols` dense
/// baseline. Shadow trackers are instrumentation and never counted here.
pub fn memory_report<F: Real>(
    state: &OptimizerState<F>,
    rows: usize,
    cols: usize,
) -> Result<MemoryReport> {
    let dense_cells = counter_cells(1, rows, cols)?;
    let mut per_moment = Vec::new();
    let mut push = |tag: MomentTag, actual: usize| {
        per_moment.push(MomentCells { tag, dense_cells, actual_cells: actual });
    };
    match state.aux() {
        AuxState::None => {}
        AuxState::MomentumDense(_) | AuxState::AdagradDense(_) => {
            let tag = if matches!(state.aux(), AuxState::MomentumDense(_)) {
                MomentTag::First
            } else {
                MomentTag::Second
            };
            push(tag, dense_cells);
        }
        AuxState::MomentumSketched(m) => push(MomentTag::First, m.counter_count()),
        AuxState::AdagradSketched(v) => push(MomentTag::Second, v.counter_count()),
        AuxState::AdamDense { .. } => {
            push(MomentTag::First, dense_cells);
            push(MomentTag::Second, dense_cells);
        }
        AuxState::AdamSketched { first, second } => {
            if let Some(m) = first {
                push(MomentTag::First, m.counter_count());
            }
            push(MomentTag::Second, second.counter_count());
        }
    }
    let dense_total = per_moment.iter().map(|m| m.dense_cells).sum();
    let actual_total = per_moment.iter().map(|m| m.actual_cells).sum();
    Ok(MemoryReport { per_moment, dense_total, actual_total })
}

/// Pairs an exactly-updated dense reference with a sketch receiving the
/// rewritten additive updates, both fed the same per-row gradient stream.
///
/// The reference row follows `r = decay * r + input_scale * u` where `u` is
/// the gradient row (squared first for second moments); the sketch receives
/// the equivalent additive delta `(decay - 1) * prev + input_scale * u`
/// against its own previous estimate. The gap between the two is pure
/// sketch approximation error.
#[derive(Debug, Clone)]
pub struct ShadowTracker<F> {
    decay: F,
    input_scale: F,
    square_input: bool,
    reference: Matrix<F>,
    sketch: SketchTensor<F>,
}

impl<F: Real> ShadowTracker<F> {
    /// Tracks a momentum buffer `m = gamma * m + g` in a signed sketch.
    pub fn momentum(gamma: F, sketch: SketchTensor<F>) -> Result<Self> {
        Self::build(gamma, F::one(), false, SketchKind::SignedMedian, sketch)
    }

    /// Tracks an Adam first moment `m = b1 * m + (1 - b1) * g`.
    pub fn ema_first(beta1: F, sketch: SketchTensor<F>) -> Result<Self> {
        Self::build(beta1, F::one() - beta1, false, SketchKind::SignedMedian, sketch)
    }

    /// Tracks an Adam second moment `v = b2 * v + (1 - b2) * g^2` in a
    /// nonnegative min sketch.
    pub fn ema_second(beta2: F, sketch: SketchTensor<F>) -> Result<Self> {
        Self::build(beta2, F::one() - beta2, true, SketchKind::NonnegMin, sketch)
    }

    /// Tracks an Adagrad accumulator `v += g^2` in a nonnegative min sketch.
    pub fn adagrad_second(sketch: SketchTensor<F>) -> Result<Self> {
        Self::build(F::one(), F::one(), true, SketchKind::NonnegMin, sketch)
    }

    fn build(
        decay: F,
        input_scale: F,
        square_input: bool,
        kind: SketchKind,
        sketch: SketchTensor<F>,
    ) -> Result<Self> {
        if sketch.kind() != kind {
            return Err(Error::Config(format!("shadow tracker requires a {:?} sketch", kind)));
        }
        if !(decay >= F::zero() && decay <= F::one()) {
            return Err(Error::Config(format!("tracker decay {} outside [0, 1]", decay)));
        }
        let reference = Matrix::zeros(sketch.domain(), sketch.dim());
        Ok(ShadowTracker { decay, input_scale, square_input, reference, sketch })
    }

    pub fn reference(&self) -> &Matrix<F> {
        &self.reference
    }

    pub fn sketch(&self) -> &SketchTensor<F> {
        &self.sketch
    }

    /// Feeds one gradient row to both sides of the pair.
    pub fn observe(&mut self, item: usize, grad_row: &[F]) -> Result<()> {
        let d = self.sketch.dim();
        if grad_row.len() != d {
            return Err(Error::Data(format!(
                "gradient row length {} does not match tracker dim {}",
                grad_row.len(),
                d
            )));
        }
        let mut prev = vec![F::zero(); d];
        self.sketch.query_into(item, &mut prev)?;
        let mut delta = vec![F::zero(); d];
        for k in 0..d {
            let u = if self.square_input { grad_row[k] * grad_row[k] } else { grad_row[k] };
            delta[k] = (self.decay - F::one()) * prev[k] + self.input_scale * u;
        }
        self.sketch.update(item, &delta)?;
        let row = self.reference.row_mut(item);
        for k in 0..d {
            let u = if self.square_input { grad_row[k] * grad_row[k] } else { grad_row[k] };
            row[k] = self.decay * row[k] + self.input_scale * u;
        }
        Ok(())
    }

    /// Rescales the sketch side only, leaving the reference untouched.
    /// Valid only for nonnegative min sketches.
    pub fn clean(&mut self, factor: F) -> Result<()> {
        if self.sketch.kind() != SketchKind::NonnegMin {
            return Err(Error::Config("cleaning only applies to NonnegMin sketches".to_string()));
        }
        self.sketch.scale(factor)
    }

    /// Current `(absolute, relative)` Frobenius estimation error.
    pub fn l2_error(&self) -> Result<(f64, f64)> {
        l2_error(&self.reference, &self.sketch)
    }
}

/// Writer for the `step,metric,value` CSV stream.
pub struct MetricsWriter<W: Write> {
    inner: W,
}

impl<W: Write> MetricsWriter<W> {
    /// Wraps a writer and emits the header line.
    pub fn new(mut inner: W) -> io::Result<Self> {
        writeln!(inner, "step,metric,value")?;
        Ok(MetricsWriter { inner })
    }

    /// Appends one metric row. Values use the shortest round-trip decimal
    /// form, so identical runs produce byte-identical files.
    pub fn write(&mut self, step: u64, metric: &str, value: f64) -> io::Result<()> {
        debug_assert!(!metric.contains(','));
        writeln!(self.inner, "{},{},{}", step, metric, value)
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}
