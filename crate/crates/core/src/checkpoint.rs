//! Binary checkpoint formats.
//!
//! Three little-endian artifact formats, all write-only during a run and
//! read back for inspection or post-processing:
//!
//! * sketch checkpoints: hashing seeds plus the raw counter array;
//! * optimizer state checkpoints: hyperparameters, the global step and
//!   every auxiliary variable behind a variant tag;
//! * auxiliary snapshot streams: a header followed by one dense matrix per
//!   tracked moment per logged step, consumed by the power-law report.
//!
//! Lengths are 64-bit little-endian; counters and matrix payloads are
//! 32-bit little-endian floats. Round-trips are bit-exact for `f32` data;
//! `f64` states are narrowed to single precision on write.

use std::io::{self, Read, Write};

use crate::error::Error;
use crate::hash::HashFamily;
use crate::matrix::Matrix;
use crate::optim::{AuxState, Cleaning, MomentTag, OptimizerConfig, OptimizerState};
use crate::scalar::Real;
use crate::sketch::{SketchKind, SketchTensor};

const SKETCH_MAGIC: &[u8; 4] = b"SKT1";
const STATE_MAGIC: &[u8; 4] = b"OST1";
const SNAPSHOT_MAGIC: &[u8; 4] = b"SNP1";

fn bad_data(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

fn core_err(e: Error) -> io::Error {
    bad_data(e.to_string())
}

fn write_u64<W: Write>(w: &mut W, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_len<R: Read>(r: &mut R, what: &str) -> io::Result<usize> {
    usize::try_from(read_u64(r)?).map_err(|_| bad_data(format!("{} does not fit in usize", what)))
}

fn write_f64<W: Write>(w: &mut W, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn write_f32_slice<W: Write, F: Real>(w: &mut W, data: &[F]) -> io::Result<()> {
    for v in data {
        w.write_all(&(v.to_f64_lossy() as f32).to_le_bytes())?;
    }
    Ok(())
}

fn read_f32_vec<R: Read, F: Real>(r: &mut R, len: usize) -> io::Result<Vec<F>> {
    let mut bytes = vec![0u8; len.checked_mul(4).ok_or_else(|| bad_data("payload too large"))?];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| F::from_f64_lossy(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect())
}

fn kind_tag(kind: SketchKind) -> u8 {
    match kind {
        SketchKind::SignedMedian => 0,
        SketchKind::NonnegMin => 1,
    }
}

fn kind_from_tag(tag: u8) -> io::Result<SketchKind> {
    match tag {
        0 => Ok(SketchKind::SignedMedian),
        1 => Ok(SketchKind::NonnegMin),
        other => Err(bad_data(format!("unknown sketch kind tag {}", other))),
    }
}

fn check_magic<R: Read>(r: &mut R, magic: &[u8; 4], what: &str) -> io::Result<()> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    if &buf != magic {
        return Err(bad_data(format!("not a {} file", what)));
    }
    Ok(())
}

/// Serializes a sketch: kind, hashing mode, dimensions, per-row seeds and
/// the counter array in row-major `(depth, width, dim)` order.
pub fn write_sketch<W: Write, F: Real>(w: &mut W, sketch: &SketchTensor<F>) -> io::Result<()> {
    w.write_all(SKETCH_MAGIC)?;
    let fam = sketch.hash_family();
    w.write_all(&[kind_tag(sketch.kind()), fam.is_injective() as u8])?;
    write_u64(w, fam.depth() as u64)?;
    write_u64(w, fam.width() as u64)?;
    write_u64(w, sketch.dim() as u64)?;
    write_u64(w, fam.domain() as u64)?;
    for &s in fam.index_seeds() {
        write_u64(w, s)?;
    }
    for &s in fam.sign_seeds() {
        write_u64(w, s)?;
    }
    write_u64(w, sketch.counters().len() as u64)?;
    write_f32_slice(w, sketch.counters())
}

/// Reads back a sketch written by [`write_sketch`].
pub fn read_sketch<R: Read, F: Real>(r: &mut R) -> io::Result<SketchTensor<F>> {
    check_magic(r, SKETCH_MAGIC, "sketch checkpoint")?;
    let mut flags = [0u8; 2];
    r.read_exact(&mut flags)?;
    let kind = kind_from_tag(flags[0])?;
    let injective = flags[1] != 0;
    let depth = read_len(r, "depth")?;
    let width = read_len(r, "width")?;
    let dim = read_len(r, "dim")?;
    let domain = read_len(r, "domain")?;
    let mut index_seeds = Vec::with_capacity(depth);
    for _ in 0..depth {
        index_seeds.push(read_u64(r)?);
    }
    let mut sign_seeds = Vec::with_capacity(depth);
    for _ in 0..depth {
        sign_seeds.push(read_u64(r)?);
    }
    let counter_len = read_len(r, "counter length")?;
    let expected = depth
        .checked_mul(width)
        .and_then(|n| n.checked_mul(dim))
        .ok_or_else(|| bad_data("sketch dimensions overflow"))?;
    if counter_len != expected {
        return Err(bad_data(format!(
            "counter length {} does not match dimensions {}x{}x{}",
            counter_len, depth, width, dim
        )));
    }
    let counters = read_f32_vec(r, counter_len)?;
    let fam = HashFamily::from_checkpoint(width, domain, injective, index_seeds, sign_seeds)
        .map_err(core_err)?;
    SketchTensor::from_parts(kind, fam, dim, counters).map_err(core_err)
}

fn write_matrix<W: Write, F: Real>(w: &mut W, m: &Matrix<F>) -> io::Result<()> {
    write_u64(w, m.rows() as u64)?;
    write_u64(w, m.cols() as u64)?;
    write_f32_slice(w, m.as_slice())
}

fn read_matrix<R: Read, F: Real>(r: &mut R) -> io::Result<Matrix<F>> {
    let rows = read_len(r, "matrix rows")?;
    let cols = read_len(r, "matrix cols")?;
    let len = rows.checked_mul(cols).ok_or_else(|| bad_data("matrix dimensions overflow"))?;
    let data = read_f32_vec(r, len)?;
    Matrix::from_vec(rows, cols, data).map_err(core_err)
}

fn aux_tag<F>(aux: &AuxState<F>) -> u8 {
    match aux {
        AuxState::None => 0,
        AuxState::MomentumDense(_) => 1,
        AuxState::MomentumSketched(_) => 2,
        AuxState::AdagradDense(_) => 3,
        AuxState::AdagradSketched(_) => 4,
        AuxState::AdamDense { .. } => 5,
        AuxState::AdamSketched { .. } => 6,
    }
}

/// Serializes hyperparameters, the global step and every auxiliary
/// variable of an optimizer state.
pub fn write_state<W: Write, F: Real>(
    w: &mut W,
    state: &OptimizerState<F>,
    cfg: &OptimizerConfig<F>,
) -> io::Result<()> {
    w.write_all(STATE_MAGIC)?;
    write_u64(w, state.step_count())?;
    write_f64(w, cfg.learning_rate.to_f64_lossy())?;
    write_f64(w, cfg.momentum_decay.to_f64_lossy())?;
    write_f64(w, cfg.beta1.to_f64_lossy())?;
    write_f64(w, cfg.beta2.to_f64_lossy())?;
    write_f64(w, cfg.epsilon.to_f64_lossy())?;
    match cfg.clip_norm {
        Some(c) => {
            w.write_all(&[1])?;
            write_f64(w, c.to_f64_lossy())?;
        }
        None => w.write_all(&[0])?,
    }
    match cfg.cleaning {
        Some(c) => {
            w.write_all(&[1])?;
            write_u64(w, c.interval)?;
            write_f64(w, c.factor.to_f64_lossy())?;
        }
        None => w.write_all(&[0])?,
    }
    w.write_all(&[aux_tag(state.aux())])?;
    match state.aux() {
        AuxState::None => {}
        AuxState::MomentumDense(m) | AuxState::AdagradDense(m) => write_matrix(w, m)?,
        AuxState::MomentumSketched(s) | AuxState::AdagradSketched(s) => write_sketch(w, s)?,
        AuxState::AdamDense { first, second } => {
            write_matrix(w, first)?;
            write_matrix(w, second)?;
        }
        AuxState::AdamSketched { first, second } => {
            match first {
                Some(m) => {
                    w.write_all(&[1])?;
                    write_sketch(w, m)?;
                }
                None => w.write_all(&[0])?,
            }
            write_sketch(w, second)?;
        }
    }
    Ok(())
}

/// Reads back a state checkpoint written by [`write_state`].
pub fn read_state<R: Read, F: Real>(
    r: &mut R,
) -> io::Result<(OptimizerState<F>, OptimizerConfig<F>)> {
    check_magic(r, STATE_MAGIC, "optimizer state checkpoint")?;
    let step = read_u64(r)?;
    let learning_rate = F::from_f64_lossy(read_f64(r)?);
    let momentum_decay = F::from_f64_lossy(read_f64(r)?);
    let beta1 = F::from_f64_lossy(read_f64(r)?);
    let beta2 = F::from_f64_lossy(read_f64(r)?);
    let epsilon = F::from_f64_lossy(read_f64(r)?);
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    let clip_norm = if flag[0] != 0 { Some(F::from_f64_lossy(read_f64(r)?)) } else { None };
    r.read_exact(&mut flag)?;
    let cleaning = if flag[0] != 0 {
        let interval = read_u64(r)?;
        let factor = F::from_f64_lossy(read_f64(r)?);
        Some(Cleaning { interval, factor })
    } else {
        None
    };
    let cfg = OptimizerConfig {
        learning_rate,
        momentum_decay,
        beta1,
        beta2,
        epsilon,
        clip_norm,
        cleaning,
    };
    r.read_exact(&mut flag)?;
    let aux = match flag[0] {
        0 => AuxState::None,
        1 => AuxState::MomentumDense(read_matrix(r)?),
        2 => AuxState::MomentumSketched(read_sketch(r)?),
        3 => AuxState::AdagradDense(read_matrix(r)?),
        4 => AuxState::AdagradSketched(read_sketch(r)?),
        5 => {
            let first = read_matrix(r)?;
            let second = read_matrix(r)?;
            AuxState::AdamDense { first, second }
        }
        6 => {
            r.read_exact(&mut flag)?;
            let first = if flag[0] != 0 { Some(read_sketch(r)?) } else { None };
            let second = read_sketch(r)?;
            AuxState::AdamSketched { first, second }
        }
        other => return Err(bad_data(format!("unknown aux variant tag {}", other))),
    };
    Ok((OptimizerState::from_parts(step, aux), cfg))
}

/// Streams dense auxiliary snapshots: a fixed header then one record per
/// logged step.
pub struct SnapshotWriter<W: Write> {
    inner: W,
    rows: usize,
    cols: usize,
    moments: usize,
}

impl<W: Write> SnapshotWriter<W> {
    pub fn new(mut inner: W, rows: usize, cols: usize, tags: &[MomentTag]) -> io::Result<Self> {
        if tags.is_empty() {
            return Err(bad_data("snapshot stream needs at least one tracked moment"));
        }
        inner.write_all(SNAPSHOT_MAGIC)?;
        write_u64(&mut inner, rows as u64)?;
        write_u64(&mut inner, cols as u64)?;
        write_u64(&mut inner, tags.len() as u64)?;
        for tag in tags {
            inner.write_all(&[match tag {
                MomentTag::First => 0,
                MomentTag::Second => 1,
            }])?;
        }
        Ok(SnapshotWriter { inner, rows, cols, moments: tags.len() })
    }

    /// Appends one record: the step and a matrix per tracked moment.
    pub fn append<F: Real>(&mut self, step: u64, matrices: &[&Matrix<F>]) -> io::Result<()> {
        if matrices.len() != self.moments {
            return Err(bad_data(format!(
                "snapshot record has {} matrices, header declared {}",
                matrices.len(),
                self.moments
            )));
        }
        // Validate everything before touching the stream: a rejected append
        // must not leave a partial record behind.
        for m in matrices {
            if m.rows() != self.rows || m.cols() != self.cols {
                return Err(bad_data("snapshot matrix shape does not match header"));
            }
        }
        write_u64(&mut self.inner, step)?;
        for m in matrices {
            write_f32_slice(&mut self.inner, m.as_slice())?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

/// Parsed snapshot stream.
#[derive(Debug, Clone)]
pub struct SnapshotFile {
    pub rows: usize,
    pub cols: usize,
    pub tags: Vec<MomentTag>,
    /// `(step, one matrix per tracked moment)` in log order.
    pub records: Vec<(u64, Vec<Matrix<f32>>)>,
}

/// Reads a snapshot stream written by [`SnapshotWriter`].
pub fn read_snapshots<R: Read>(r: &mut R) -> io::Result<SnapshotFile> {
    check_magic(r, SNAPSHOT_MAGIC, "snapshot")?;
    let rows = read_len(r, "snapshot rows")?;
    let cols = read_len(r, "snapshot cols")?;
    let moments = read_len(r, "snapshot moment count")?;
    if moments == 0 || moments > 2 {
        return Err(bad_data(format!("implausible snapshot moment count {}", moments)));
    }
    let mut tags = Vec::with_capacity(moments);
    for _ in 0..moments {
        let mut b = [0u8; 1];
        r.read_exact(&mut b)?;
        tags.push(match b[0] {
            0 => MomentTag::First,
            1 => MomentTag::Second,
            other => return Err(bad_data(format!("unknown moment tag {}", other))),
        });
    }
    let cells = rows.checked_mul(cols).ok_or_else(|| bad_data("snapshot shape overflows"))?;
    let mut records = Vec::new();
    loop {
        let mut step_buf = [0u8; 8];
        match r.read_exact(&mut step_buf) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e),
        }
        let step = u64::from_le_bytes(step_buf);
        let mut matrices = Vec::with_capacity(moments);
        for _ in 0..moments {
            let data = read_f32_vec::<_, f32>(r, cells)?;
            matrices.push(Matrix::from_vec(rows, cols, data).map_err(core_err)?);
        }
        records.push((step, matrices));
    }
    Ok(SnapshotFile { rows, cols, tags, records })
}
