//! Hashed sketch tensors with a dense last dimension.
//!
//! A sketch tensor holds `depth x width x dim` counters. Items hash to one
//! bin per row, and an update adds a length-`dim` delta into the `dim`
//! contiguous cells of that bin in every row, so the structured sparsity of
//! embedding-style gradients (whole rows active at once) is preserved.
//!
//! Two kinds are supported. `SignedMedian` applies the row's +/-1 sign to
//! every delta and answers queries with the coordinate-wise median across
//! rows; it is unbiased and used for signed moving averages. `NonnegMin`
//! ignores signs and answers with the coordinate-wise minimum; for streams
//! of nonnegative deltas it never underestimates, which is what squared
//! gradient accumulators need.

use crate::error::{Error, Result};
use crate::hash::HashFamily;
use crate::scalar::Real;

/// Aggregation discipline of a sketch tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SketchKind {
    /// Signed updates, coordinate-wise median query.
    SignedMedian,
    /// Unsigned updates, coordinate-wise minimum query.
    NonnegMin,
}

/// Count-sketch tensor over a hash family, generic in the counter scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchTensor<F> {
    kind: SketchKind,
    hash: HashFamily,
    dim: usize,
    counters: Vec<F>,
}

impl<F: Real> SketchTensor<F> {
    /// Allocates a zeroed sketch with last dimension `dim` over `hash`.
    pub fn new(kind: SketchKind, hash: HashFamily, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("sketch dim must be at least 1".to_string()));
        }
        let cells = hash
            .depth()
            .checked_mul(hash.width())
            .and_then(|n| n.checked_mul(dim))
            .ok_or_else(|| Error::Config("sketch dimensions overflow".to_string()))?;
        Ok(SketchTensor { kind, hash, dim, counters: vec![F::zero(); cells] })
    }

    pub fn kind(&self) -> SketchKind {
        self.kind
    }

    pub fn depth(&self) -> usize {
        self.hash.depth()
    }

    pub fn width(&self) -> usize {
        self.hash.width()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> usize {
        self.hash.domain()
    }

    pub fn hash_family(&self) -> &HashFamily {
        &self.hash
    }

    /// Total number of counter cells, `depth * width * dim`.
    pub fn counter_count(&self) -> usize {
        self.counters.len()
    }

    /// Flat row-major `(depth, width, dim)` view of the counters.
    pub fn counters(&self) -> &[F] {
        &self.counters
    }

    /// Rebuilds a sketch from checkpointed parts.
    pub(crate) fn from_parts(
        kind: SketchKind,
        hash: HashFamily,
        dim: usize,
        counters: Vec<F>,
    ) -> Result<Self> {
        let mut sketch = SketchTensor::new(kind, hash, dim)?;
        if counters.len() != sketch.counters.len() {
            return Err(Error::Data(format!(
                "counter payload length {} does not match {} cells",
                counters.len(),
                sketch.counters.len()
            )));
        }
        sketch.counters = counters;
        Ok(sketch)
    }

    #[inline]
    fn bin_range(&self, row: usize, bin: usize) -> std::ops::Range<usize> {
        let base = (row * self.hash.width() + bin) * self.dim;
        base..base + self.dim
    }

    /// Adds `delta` into item's bin in every row, signed for `SignedMedian`.
    ///
    /// Exactly `depth * dim` cells are touched. The delta must have length
    /// `dim` and be finite everywhere.
    pub fn update(&mut self, item: usize, delta: &[F]) -> Result<()> {
        self.hash.check_item(item)?;
        if delta.len() != self.dim {
            return Err(Error::Data(format!(
                "delta length {} does not match sketch dim {}",
                delta.len(),
                self.dim
            )));
        }
        if !delta.iter().all(|d| d.is_finite()) {
            return Err(Error::Data("delta contains a non-finite value".to_string()));
        }
        for row in 0..self.hash.depth() {
            let bin = self.hash.index(row, item);
            let negate = self.kind == SketchKind::SignedMedian && self.hash.sign(row, item) < 0;
            let range = self.bin_range(row, bin);
            let cells = &mut self.counters[range];
            if negate {
                for (c, d) in cells.iter_mut().zip(delta) {
                    *c = *c - *d;
                }
            } else {
                for (c, d) in cells.iter_mut().zip(delta) {
                    *c += *d;
                }
            }
        }
        Ok(())
    }

    /// Estimate of item's accumulated value, written into `out`.
    pub fn query_into(&self, item: usize, out: &mut [F]) -> Result<()> {
        self.hash.check_item(item)?;
        if out.len() != self.dim {
            return Err(Error::Data(format!(
                "output length {} does not match sketch dim {}",
                out.len(),
                self.dim
            )));
        }
        let depth = self.hash.depth();
        match self.kind {
            SketchKind::NonnegMin => {
                for (k, slot) in out.iter_mut().enumerate() {
                    let mut best = F::infinity();
                    for row in 0..depth {
                        let bin = self.hash.index(row, item);
                        let v = self.counters[self.bin_range(row, bin).start + k];
                        best = best.min(v);
                    }
                    *slot = best;
                }
            }
            SketchKind::SignedMedian => {
                let mut vals = vec![F::zero(); depth];
                for (k, slot) in out.iter_mut().enumerate() {
                    for (row, val) in vals.iter_mut().enumerate() {
                        let bin = self.hash.index(row, item);
                        let v = self.counters[self.bin_range(row, bin).start + k];
                        *val = if self.hash.sign(row, item) < 0 { -v } else { v };
                    }
                    *slot = median_in_place(&mut vals);
                }
            }
        }
        Ok(())
    }

    /// Estimate of item's accumulated value as a fresh vector.
    pub fn query(&self, item: usize) -> Result<Vec<F>> {
        let mut out = vec![F::zero(); self.dim];
        self.query_into(item, &mut out)?;
        Ok(out)
    }

    /// Multiplies every counter by `alpha`, which must lie in `[0, 1]`.
    ///
    /// Median and minimum commute with nonnegative scaling, so queries after
    /// scaling equal scaled queries.
    pub fn scale(&mut self, alpha: F) -> Result<()> {
        if !(alpha >= F::zero() && alpha <= F::one()) {
            return Err(Error::Config(format!("scale factor {} outside [0, 1]", alpha)));
        }
        for c in self.counters.iter_mut() {
            *c = *c * alpha;
        }
        Ok(())
    }

    /// Returns a sketch of half the width, folding the upper half of each
    /// row onto the lower half: `new[row, b, :] = old[row, b, :] +
    /// old[row, b + width/2, :]`.
    ///
    /// Because bin indices are masked to the width, every item's new bin is
    /// its old bin modulo the new width, so each item's mass lands in the
    /// folded cell and min-sketch overestimates are preserved.
    pub fn halve(&self) -> Result<Self> {
        let hash = self.hash.halved()?;
        let new_width = hash.width();
        let mut out = SketchTensor::new(self.kind, hash, self.dim)?;
        for row in 0..self.hash.depth() {
            for bin in 0..new_width {
                let lo = self.bin_range(row, bin);
                let hi = self.bin_range(row, bin + new_width);
                let dst = out.bin_range(row, bin);
                for k in 0..self.dim {
                    out.counters[dst.start + k] =
                        self.counters[lo.start + k] + self.counters[hi.start + k];
                }
            }
        }
        Ok(out)
    }
}

/// Median of a scratch buffer, averaging the two central order statistics
/// when the length is even. The buffer is reordered in place.
pub(crate) fn median_in_place<F: Real>(vals: &mut [F]) -> F {
    debug_assert!(!vals.is_empty());
    vals.sort_unstable_by(|a, b| a.partial_cmp(b).expect("sketch counters are finite"));
    let mid = vals.len() / 2;
    if vals.len() % 2 == 1 {
        vals[mid]
    } else {
        (vals[mid - 1] + vals[mid]) / F::from_f64_lossy(2.0)
    }
}
