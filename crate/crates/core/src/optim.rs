//! Dense and sketch-backed optimizer steps.
//!
//! Each optimizer exists in two forms that share one sparse update
//! discipline: only rows named by the current gradient are touched, and
//! decay is applied lazily to exactly those rows, in both the dense and the
//! sketched path, so the two stay comparable step for step.
//!
//! The sketched forms rewrite the classical recurrences as pure additions so
//! they can run against hashed counters:
//!
//! * Momentum `m = gamma*m + g` becomes the update `(gamma-1)*m_prev + g`.
//! * An exponential moving average `v = c*v + (1-c)*u` becomes
//!   `(1-c)*(u - v_prev)`.
//! * Adagrad's accumulator adds `g^2` directly.
//!
//! After updating, the step re-queries the sketch and applies the queried
//! value to the parameters, so the parameter update always sees the sketch's
//! own estimate. Squared-gradient accumulators live in nonnegative min
//! sketches, which only overestimate; the overestimate shrinks the effective
//! step size, never flips its sign.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Real;
use crate::sketch::{SketchKind, SketchTensor};

/// Gradient over a subset of rows of an `n x d` parameter matrix.
///
/// Items are strictly increasing row indices; values are the concatenated
/// length-`dim` gradient rows in the same order.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGradient<F> {
    items: Vec<usize>,
    values: Vec<F>,
    dim: usize,
}

impl<F: Real> SparseGradient<F> {
    /// Builds a sparse gradient, validating shape and finiteness.
    pub fn new(items: Vec<usize>, values: Vec<F>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Data("sparse gradient dim must be at least 1".to_string()));
        }
        if values.len() != items.len() * dim {
            return Err(Error::Data(format!(
                "sparse gradient has {} values for {} rows of dim {}",
                values.len(),
                items.len(),
                dim
            )));
        }
        if !items.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Data("sparse gradient rows must be strictly increasing".to_string()));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::Data("sparse gradient contains a non-finite value".to_string()));
        }
        Ok(SparseGradient { items, values, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of active rows.
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Active row indices, strictly increasing.
    pub fn items(&self) -> &[usize] {
        &self.items
    }

    /// All gradient rows concatenated in item order.
    pub fn values(&self) -> &[F] {
        &self.values
    }

    /// Gradient row for the `idx`-th active item.
    pub fn row(&self, idx: usize) -> &[F] {
        &self.values[idx * self.dim..(idx + 1) * self.dim]
    }

    /// Iterates `(row_index, gradient_row)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &[F])> {
        self.items.iter().enumerate().map(|(idx, &item)| (item, self.row(idx)))
    }

    /// Global L2 norm over all entries, accumulated in `f64`.
    pub fn l2_norm(&self) -> f64 {
        self.values
            .iter()
            .map(|v| {
                let x = v.to_f64_lossy();
                x * x
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Rescales the gradient so its global L2 norm is at most `clip_norm`.
pub fn clip_gradient<F: Real>(mut g: SparseGradient<F>, clip_norm: F) -> Result<SparseGradient<F>> {
    if !(clip_norm > F::zero() && clip_norm.is_finite()) {
        return Err(Error::Config(format!("clip norm {} must be positive and finite", clip_norm)));
    }
    let norm = g.l2_norm();
    if norm > clip_norm.to_f64_lossy() {
        let factor = F::from_f64_lossy(clip_norm.to_f64_lossy() / norm);
        for v in g.values.iter_mut() {
            *v = *v * factor;
        }
    }
    Ok(g)
}

/// Cleaning schedule: every `interval` steps, multiply every nonnegative
/// min sketch in the optimizer state by `factor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cleaning<F> {
    pub interval: u64,
    pub factor: F,
}

/// Hyperparameters shared by every optimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig<F> {
    /// Step size.
    pub learning_rate: F,
    /// Momentum decay gamma.
    pub momentum_decay: F,
    /// First-moment decay for Adam. Zero disables first-moment tracking in
    /// the sketched path.
    pub beta1: F,
    /// Second-moment decay for Adam.
    pub beta2: F,
    /// Added outside the square root in the denominator.
    pub epsilon: F,
    /// Optional global gradient L2 clip.
    pub clip_norm: Option<F>,
    /// Optional cleaning schedule for min sketches.
    pub cleaning: Option<Cleaning<F>>,
}

impl<F: Real> Default for OptimizerConfig<F> {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: F::from_f64_lossy(0.001),
            momentum_decay: F::from_f64_lossy(0.9),
            beta1: F::from_f64_lossy(0.9),
            beta2: F::from_f64_lossy(0.999),
            epsilon: F::from_f64_lossy(1e-8),
            clip_norm: None,
            cleaning: None,
        }
    }
}

impl<F: Real> OptimizerConfig<F> {
    /// Checks ranges: decays in `[0, 1)`, positive step size and epsilon,
    /// positive clip norm, cleaning interval at least 1 with factor in
    /// `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: F| -> Result<()> {
            if !(v >= F::zero() && v < F::one()) {
                return Err(Error::Config(format!("{} must lie in [0, 1), got {}", name, v)));
            }
            Ok(())
        };
        if !(self.learning_rate > F::zero() && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        unit("momentum decay", self.momentum_decay)?;
        unit("beta1", self.beta1)?;
        unit("beta2", self.beta2)?;
        if !(self.epsilon > F::zero() && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be positive and finite, got {}", self.epsilon)));
        }
        if let Some(clip) = self.clip_norm {
            if !(clip > F::zero() && clip.is_finite()) {
                return Err(Error::Config(format!("clip norm must be positive and finite, got {}", clip)));
            }
        }
        if let Some(c) = self.cleaning {
            if c.interval == 0 {
                return Err(Error::Config("cleaning interval must be at least 1".to_string()));
            }
            if !(c.factor >= F::zero() && c.factor <= F::one()) {
                return Err(Error::Config(format!("cleaning factor {} outside [0, 1]", c.factor)));
            }
        }
        Ok(())
    }
}

fn check_shapes<F: Real>(x: &Matrix<F>, g: &SparseGradient<F>) -> Result<()> {
    if g.dim() != x.cols() {
        return Err(Error::Config(format!(
            "gradient dim {} does not match parameter cols {}",
            g.dim(),
            x.cols()
        )));
    }
    if let Some(&last) = g.items().last() {
        if last >= x.rows() {
            return Err(Error::Index { item: last, domain: x.rows() });
        }
    }
    Ok(())
}

fn check_aux_matrix<F: Real>(x: &Matrix<F>, aux: &Matrix<F>, name: &str) -> Result<()> {
    if aux.rows() != x.rows() || aux.cols() != x.cols() {
        return Err(Error::Config(format!(
            "{} has shape {}x{} but parameters are {}x{}",
            name,
            aux.rows(),
            aux.cols(),
            x.rows(),
            x.cols()
        )));
    }
    Ok(())
}

fn check_aux_sketch<F: Real>(
    x: &Matrix<F>,
    sketch: &SketchTensor<F>,
    kind: SketchKind,
    name: &str,
) -> Result<()> {
    if sketch.kind() != kind {
        return Err(Error::Config(format!("{} must be a {:?} sketch", name, kind)));
    }
    if sketch.dim() != x.cols() {
        return Err(Error::Config(format!(
            "{} dim {} does not match parameter cols {}",
            name,
            sketch.dim(),
            x.cols()
        )));
    }
    if sketch.domain() < x.rows() {
        return Err(Error::Config(format!(
            "{} domain {} smaller than parameter rows {}",
            name,
            sketch.domain(),
            x.rows()
        )));
    }
    Ok(())
}

/// Plain SGD: `x -= lr * g` on active rows.
pub fn sgd_step<F: Real>(x: &mut Matrix<F>, g: &SparseGradient<F>, cfg: &OptimizerConfig<F>) -> Result<()> {
    check_shapes(x, g)?;
    let lr = cfg.learning_rate;
    for (item, grad) in g.iter() {
        let xr = x.row_mut(item);
        for (xv, &gv) in xr.iter_mut().zip(grad) {
            *xv = *xv - lr * gv;
        }
    }
    Ok(())
}

/// Dense momentum: `m = gamma*m + g`, `x -= lr*m`, lazily on active rows.
pub fn momentum_step_dense<F: Real>(
    x: &mut Matrix<F>,
    m: &mut Matrix<F>,
    g: &SparseGradient<F>,
    cfg: &OptimizerConfig<F>,
) -> Result<()> {
    check_shapes(x, g)?;
    check_aux_matrix(x, m, "momentum buffer")?;
    let lr = cfg.learning_rate;
    let gamma = cfg.momentum_decay;
    for (item, grad) in g.iter() {
        let mr = m.row_mut(item);
        let xr = x.row_mut(item);
        for k in 0..grad.len() {
            mr[k] = gamma * mr[k] + grad[k];
            xr[k] = xr[k] - lr * mr[k];
        }
    }
    Ok(())
}

/// Sketched momentum over a signed median sketch.
pub fn momentum_step_sketched<F: Real>(
    x: &mut Matrix<F>,
    m: &mut SketchTensor<F>,
    g: &SparseGradient<F>,
    cfg: &OptimizerConfig<F>,
) -> Result<()> {
    check_shapes(x, g)?;
    check_aux_sketch(x, m, SketchKind::SignedMedian, "momentum sketch")?;
    let lr = cfg.learning_rate;
    let gamma = cfg.momentum_decay;
    let d = x.cols();
    let mut prev = vec![F::zero(); d];
    let mut delta = vec![F::zero(); d];
    for (item, grad) in g.iter() {
        m.query_into(item, &mut prev)?;
        for k in 0..d {
            delta[k] = (gamma - F::one()) * prev[k] + grad[k];
        }
        m.update(item, &delta)?;
        m.query_into(item, &mut prev)?;
        let xr = x.row_mut(item);
        for k in 0..d {
            xr[k] = xr[k] - lr * prev[k];
        }
    }
    Ok(())
}

/// Dense Adagrad: `v += g^2`, `x -= lr * g / (sqrt(v) + eps)`.
pub fn adagrad_step_dense<F: Real>(
    x: &mut Matrix<F>,
    v: &mut Matrix<F>,
    g: &SparseGradient<F>,
    cfg: &OptimizerConfig<F>,
) -> Result<()> {
    check_shapes(x, g)?;
    check_aux_matrix(x, v, "adagrad accumulator")?;
    let lr = cfg.learning_rate;
    let eps = cfg.epsilon;
    for (item, grad) in g.iter() {
        let vr = v.row_mut(item);
        let xr = x.row_mut(item);
        for k in 0..grad.len() {
            vr[k] += grad[k] * grad[k];
            xr[k] = xr[k] - lr * grad[k] / (vr[k].sqrt() + eps);
        }
    }
    Ok(())
}

/// Sketched Adagrad over a nonnegative min sketch.
pub fn adagrad_step_sketched<F: Real>(
    x: &mut Matrix<F>,
    v: &mut SketchTensor<F>,
    g: &SparseGradient<F>,
    cfg: &OptimizerConfig<F>,
) -> Result<()> {
    check_shapes(x, g)?;
    check_aux_sketch(x, v, SketchKind::NonnegMin, "adagrad sketch")?;
    let lr = cfg.learning_rate;
    let eps = cfg.epsilon;
    let d = x.cols();
    let mut delta = vec![F::zero(); d];
    let mut est = vec![F::zero(); d];
    for (item, grad) in g.iter() {
        for k in 0..d {
            delta[k] = grad[k] * grad[k];
        }
        v.update(item, &delta)?;
        v.query_into(item, &mut est)?;
        let xr = x.row_mut(item);
        for k in 0..d {
            let vk = est[k].max(F::zero());
            xr[k] = xr[k] - lr * grad[k] / (vk.sqrt() + eps);
        }
    }
    Ok(())
}

fn bias_corrections<F: Real>(t: u64, beta1: F, beta2: F) -> Result<(F, F)> {
    if t == 0 {
        return Err(Error::State("adam step count must be at least 1".to_string()));
    }
    let e = t.min(i32::MAX as u64) as i32;
    Ok((F::one() - beta1.powi(e), F::one() - beta2.powi(e)))
}

/// Dense Adam with bias correction; `t` is the 1-based global step.
pub fn adam_step_dense<F: Real>(
    x: &mut Matrix<F>,
    m: &mut Matrix<F>,
    v: &mut Matrix<F>,
    g: &SparseGradient<F>,
    t: u64,
    cfg: &OptimizerConfig<F>,
) -> Result<()> {
    check_shapes(x, g)?;
    check_aux_matrix(x, m, "adam first moment")?;
    check_aux_matrix(x, v, "adam second moment")?;
    let (bc1, bc2) = bias_corrections(t, cfg.beta1, cfg.beta2)?;
    let lr = cfg.learning_rate;
    let eps = cfg.epsilon;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    for (item, grad) in g.iter() {
        let mr = m.row_mut(item);
        for (mk, &gk) in mr.iter_mut().zip(grad) {
            *mk = b1 * *mk + (F::one() - b1) * gk;
        }
        let vr = v.row_mut(item);
        for (vk, &gk) in vr.iter_mut().zip(grad) {
            *vk = b2 * *vk + (F::one() - b2) * gk * gk;
        }
        let xr = x.row_mut(item);
        for ((xk, &mk), &vk) in xr.iter_mut().zip(m.row(item)).zip(v.row(item)) {
            let m_hat = mk / bc1;
            let v_hat = vk / bc2;
            *xk = *xk - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Sketched Adam. The first moment lives in a signed median sketch and is
/// omitted entirely when `beta1 == 0`; the second moment lives in a
/// nonnegative min sketch.
pub fn adam_step_sketched<F: Real>(
    x: &mut Matrix<F>,
    m: Option<&mut SketchTensor<F>>,
    v: &mut SketchTensor<F>,
    g: &SparseGradient<F>,
    t: u64,
    cfg: &OptimizerConfig<F>,
) -> Result<()> {
    check_shapes(x, g)?;
    check_aux_sketch(x, v, SketchKind::NonnegMin, "adam second-moment sketch")?;
    let beta1_zero = cfg.beta1 == F::zero();
    match (&m, beta1_zero) {
        (Some(_), true) => {
            return Err(Error::Config(
                "first-moment sketch provided but beta1 is 0".to_string(),
            ))
        }
        (None, false) => {
            return Err(Error::Config(
                "beta1 is nonzero but no first-moment sketch was provided".to_string(),
            ))
        }
        _ => {}
    }
    if let Some(first) = &m {
        check_aux_sketch(x, first, SketchKind::SignedMedian, "adam first-moment sketch")?;
    }
    let (bc1, bc2) = bias_corrections(t, cfg.beta1, cfg.beta2)?;
    let lr = cfg.learning_rate;
    let eps = cfg.epsilon;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let d = x.cols();
    let mut prev = vec![F::zero(); d];
    let mut delta = vec![F::zero(); d];
    let mut m_est = vec![F::zero(); d];
    let mut v_est = vec![F::zero(); d];
    let mut m = m;
    for (item, grad) in g.iter() {
        if let Some(first) = m.as_deref_mut() {
            first.query_into(item, &mut prev)?;
            for k in 0..d {
                delta[k] = (F::one() - b1) * (grad[k] - prev[k]);
            }
            first.update(item, &delta)?;
            first.query_into(item, &mut m_est)?;
        } else {
            m_est.copy_from_slice(grad);
        }
        v.query_into(item, &mut prev)?;
        for k in 0..d {
            delta[k] = (F::one() - b2) * (grad[k] * grad[k] - prev[k]);
        }
        v.update(item, &delta)?;
        v.query_into(item, &mut v_est)?;
        let xr = x.row_mut(item);
        for k in 0..d {
            let m_hat = m_est[k] / bc1;
            let v_hat = (v_est[k] / bc2).max(F::zero());
            xr[k] = xr[k] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Auxiliary variables of an optimizer, dense or sketched.
#[derive(Debug, Clone, PartialEq)]
pub enum AuxState<F> {
    /// SGD carries no auxiliary state.
    None,
    MomentumDense(Matrix<F>),
    MomentumSketched(SketchTensor<F>),
    AdagradDense(Matrix<F>),
    AdagradSketched(SketchTensor<F>),
    AdamDense { first: Matrix<F>, second: Matrix<F> },
    AdamSketched { first: Option<SketchTensor<F>>, second: SketchTensor<F> },
}

/// Label for a reconstructed auxiliary variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentTag {
    /// Gradient moving average (momentum buffer or Adam first moment).
    First,
    /// Squared-gradient accumulator or moving average.
    Second,
}

impl MomentTag {
    pub fn name(self) -> &'static str {
        match self {
            MomentTag::First => "first",
            MomentTag::Second => "second",
        }
    }
}

/// Global step counter plus auxiliary variables for one parameter matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<F> {
    step: u64,
    aux: AuxState<F>,
}

impl<F: Real> OptimizerState<F> {
    pub fn sgd() -> Self {
        OptimizerState { step: 0, aux: AuxState::None }
    }

    pub fn momentum_dense(rows: usize, cols: usize) -> Self {
        OptimizerState { step: 0, aux: AuxState::MomentumDense(Matrix::zeros(rows, cols)) }
    }

    pub fn momentum_sketched(m: SketchTensor<F>) -> Result<Self> {
        if m.kind() != SketchKind::SignedMedian {
            return Err(Error::Config("momentum sketch must be a SignedMedian sketch".to_string()));
        }
        Ok(OptimizerState { step: 0, aux: AuxState::MomentumSketched(m) })
    }

    pub fn adagrad_dense(rows: usize, cols: usize) -> Self {
        OptimizerState { step: 0, aux: AuxState::AdagradDense(Matrix::zeros(rows, cols)) }
    }

    pub fn adagrad_sketched(v: SketchTensor<F>) -> Result<Self> {
        if v.kind() != SketchKind::NonnegMin {
            return Err(Error::Config("adagrad sketch must be a NonnegMin sketch".to_string()));
        }
        Ok(OptimizerState { step: 0, aux: AuxState::AdagradSketched(v) })
    }

    pub fn adam_dense(rows: usize, cols: usize) -> Self {
        OptimizerState {
            step: 0,
            aux: AuxState::AdamDense {
                first: Matrix::zeros(rows, cols),
                second: Matrix::zeros(rows, cols),
            },
        }
    }

    pub fn adam_sketched(first: Option<SketchTensor<F>>, second: SketchTensor<F>) -> Result<Self> {
        if let Some(m) = &first {
            if m.kind() != SketchKind::SignedMedian {
                return Err(Error::Config(
                    "adam first-moment sketch must be a SignedMedian sketch".to_string(),
                ));
            }
        }
        if second.kind() != SketchKind::NonnegMin {
            return Err(Error::Config(
                "adam second-moment sketch must be a NonnegMin sketch".to_string(),
            ));
        }
        Ok(OptimizerState { step: 0, aux: AuxState::AdamSketched { first, second } })
    }

    pub(crate) fn from_parts(step: u64, aux: AuxState<F>) -> Self {
        OptimizerState { step, aux }
    }

    /// 1-based count of steps applied so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn aux(&self) -> &AuxState<F> {
        &self.aux
    }

    /// Applies one optimizer step to `x`, incrementing the global counter.
    pub fn apply_step(
        &mut self,
        x: &mut Matrix<F>,
        g: &SparseGradient<F>,
        cfg: &OptimizerConfig<F>,
    ) -> Result<()> {
        cfg.validate()?;
        self.step += 1;
        let t = self.step;
        let result = match &mut self.aux {
            AuxState::None => sgd_step(x, g, cfg),
            AuxState::MomentumDense(m) => momentum_step_dense(x, m, g, cfg),
            AuxState::MomentumSketched(m) => momentum_step_sketched(x, m, g, cfg),
            AuxState::AdagradDense(v) => adagrad_step_dense(x, v, g, cfg),
            AuxState::AdagradSketched(v) => adagrad_step_sketched(x, v, g, cfg),
            AuxState::AdamDense { first, second } => adam_step_dense(x, first, second, g, t, cfg),
            AuxState::AdamSketched { first, second } => {
                adam_step_sketched(x, first.as_mut(), second, g, t, cfg)
            }
        };
        if result.is_err() {
            self.step -= 1;
        }
        result
    }

    /// Densely reconstructed auxiliary variables for diagnostics: dense
    /// buffers are cloned, sketched ones are materialized by querying every
    /// item in the domain.
    pub fn reconstruct_aux(&self) -> Result<Vec<(MomentTag, Matrix<F>)>> {
        let mut out = Vec::new();
        match &self.aux {
            AuxState::None => {}
            AuxState::MomentumDense(m) => out.push((MomentTag::First, m.clone())),
            AuxState::MomentumSketched(m) => out.push((MomentTag::First, materialize(m)?)),
            AuxState::AdagradDense(v) => out.push((MomentTag::Second, v.clone())),
            AuxState::AdagradSketched(v) => out.push((MomentTag::Second, materialize(v)?)),
            AuxState::AdamDense { first, second } => {
                out.push((MomentTag::First, first.clone()));
                out.push((MomentTag::Second, second.clone()));
            }
            AuxState::AdamSketched { first, second } => {
                if let Some(m) = first {
                    out.push((MomentTag::First, materialize(m)?));
                }
                out.push((MomentTag::Second, materialize(second)?));
            }
        }
        Ok(out)
    }
}

/// Dense matrix of sketch estimates for every item in the domain.
fn materialize<F: Real>(sketch: &SketchTensor<F>) -> Result<Matrix<F>> {
    let mut m = Matrix::zeros(sketch.domain(), sketch.dim());
    for item in 0..sketch.domain() {
        sketch.query_into(item, m.row_mut(item))?;
    }
    Ok(m)
}

/// Applies the cleaning schedule if one is configured and due: every
/// `interval` steps, every nonnegative min sketch in the state is scaled by
/// `factor`. Signed median sketches are never cleaned. Returns whether a
/// cleaning fired.
pub fn maybe_clean<F: Real>(state: &mut OptimizerState<F>, cfg: &OptimizerConfig<F>) -> Result<bool> {
    let Some(cleaning) = cfg.cleaning else {
        return Ok(false);
    };
    if cleaning.interval == 0 {
        return Err(Error::Config("cleaning interval must be at least 1".to_string()));
    }
    if state.step == 0 || !state.step.is_multiple_of(cleaning.interval) {
        return Ok(false);
    }
    match &mut state.aux {
        AuxState::AdagradSketched(v) => v.scale(cleaning.factor)?,
        AuxState::AdamSketched { second, .. } => second.scale(cleaning.factor)?,
        _ => return Ok(false),
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash::HashFamily;

    const D: usize = 4;

    fn grad(items: Vec<usize>, rows: Vec<[f64; D]>) -> SparseGradient<f64> {
        let values = rows.iter().flat_map(|r| r.iter().copied()).collect();
        SparseGradient::new(items, values, D).unwrap()
    }

    fn cfg(lr: f64) -> OptimizerConfig<f64> {
        OptimizerConfig { learning_rate: lr, ..OptimizerConfig::default() }
    }

    fn signed_sketch(domain: usize, width: usize, seed: u64) -> SketchTensor<f64> {
        let fam = HashFamily::new(3, width, domain, seed).unwrap();
        SketchTensor::new(SketchKind::SignedMedian, fam, D).unwrap()
    }

    fn min_sketch(domain: usize, width: usize, seed: u64) -> SketchTensor<f64> {
        let fam = HashFamily::new(3, width, domain, seed).unwrap();
        SketchTensor::new(SketchKind::NonnegMin, fam, D).unwrap()
    }

    #[test]
    fn sparse_gradient_validates_shape_and_order() {
        assert!(SparseGradient::<f64>::new(vec![0, 1], vec![0.0; 8], 4).is_ok());
        assert!(SparseGradient::<f64>::new(vec![1, 0], vec![0.0; 8], 4).is_err());
        assert!(SparseGradient::<f64>::new(vec![1, 1], vec![0.0; 8], 4).is_err());
        assert!(SparseGradient::<f64>::new(vec![0, 1], vec![0.0; 7], 4).is_err());
        assert!(SparseGradient::<f64>::new(vec![0], vec![f64::NAN; 4], 4).is_err());
        assert!(SparseGradient::<f64>::new(vec![], vec![], 0).is_err());
    }

    #[test]
    fn clip_leaves_small_gradients_untouched() {
        let g = grad(vec![2], vec![[0.3, 0.0, 0.4, 0.0]]);
        let clipped = clip_gradient(g.clone(), 1.0).unwrap();
        assert_eq!(clipped, g);
    }

    #[test]
    fn clip_rescales_large_gradients_to_the_threshold() {
        let g = grad(vec![0, 5], vec![[3.0, 0.0, 0.0, 0.0], [0.0, 4.0, 0.0, 0.0]]);
        assert!((g.l2_norm() - 5.0).abs() < 1e-12);
        let clipped = clip_gradient(g, 0.25).unwrap();
        assert!((clipped.l2_norm() - 0.25).abs() < 1e-9);
        assert!((clipped.row(0)[0] - 0.15).abs() < 1e-12);
    }

    #[test]
    fn clip_rejects_nonpositive_thresholds() {
        let g = grad(vec![0], vec![[1.0, 0.0, 0.0, 0.0]]);
        assert!(clip_gradient(g.clone(), 0.0).is_err());
        assert!(clip_gradient(g, -1.0).is_err());
    }

    #[test]
    fn momentum_from_zero_state_is_a_plain_gradient_step() {
        let mut x = Matrix::zeros(3, D);
        let mut m = Matrix::zeros(3, D);
        let g = grad(vec![1], vec![[2.0, -1.0, 0.5, 0.0]]);
        momentum_step_dense(&mut x, &mut m, &g, &cfg(0.1)).unwrap();
        assert_eq!(x.row(1), &[-0.2, 0.1, -0.05, -0.0]);
        assert_eq!(m.row(1), &[2.0, -1.0, 0.5, 0.0]);
        assert!(x.row(0).iter().all(|&v| v == 0.0));
        assert!(x.row(2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn momentum_with_zero_decay_matches_sgd_exactly() {
        let g = grad(vec![0, 2], vec![[1.0, 2.0, 3.0, 4.0], [-1.0, 0.5, 0.0, 2.0]]);
        let c = OptimizerConfig { momentum_decay: 0.0, ..cfg(0.05) };
        let mut xa = Matrix::zeros(3, D);
        let mut m = Matrix::zeros(3, D);
        let mut xb = Matrix::zeros(3, D);
        for _ in 0..3 {
            momentum_step_dense(&mut xa, &mut m, &g, &c).unwrap();
            sgd_step(&mut xb, &g, &c).unwrap();
        }
        assert_eq!(xa, xb);
    }

    #[test]
    fn touched_rows_decay_even_with_zero_gradient_values() {
        let mut x = Matrix::zeros(2, D);
        let mut m = Matrix::zeros(2, D);
        momentum_step_dense(&mut x, &mut m, &grad(vec![0], vec![[4.0, 0.0, 0.0, 0.0]]), &cfg(0.1)).unwrap();
        momentum_step_dense(&mut x, &mut m, &grad(vec![0], vec![[0.0; D]]), &cfg(0.1)).unwrap();
        // Second touch decays the buffer even though the gradient is zero.
        assert_eq!(m.row(0)[0], 0.9 * 4.0);
        // The untouched row is bit-identical to its initial state.
        assert!(m.row(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adagrad_first_step_matches_the_closed_form() {
        let mut x = Matrix::zeros(1, D);
        let mut v = Matrix::zeros(1, D);
        let g = grad(vec![0], vec![[3.0, -2.0, 0.0, 1.0]]);
        let c = cfg(0.1);
        adagrad_step_dense(&mut x, &mut v, &g, &c).unwrap();
        assert_eq!(v.row(0), &[9.0, 4.0, 0.0, 1.0]);
        for (k, &gk) in [3.0f64, -2.0, 0.0, 1.0].iter().enumerate() {
            let expected = -0.1 * gk / ((gk * gk).sqrt() + 1e-8);
            assert!((x.row(0)[k] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn adam_first_step_reduces_to_a_sign_step() {
        let mut x = Matrix::zeros(1, D);
        let mut m = Matrix::zeros(1, D);
        let mut v = Matrix::zeros(1, D);
        let g = grad(vec![0], vec![[5.0, -3.0, 0.25, 0.0]]);
        adam_step_dense(&mut x, &mut m, &mut v, &g, 1, &cfg(0.01)).unwrap();
        // With bias correction, the first step is -lr * g / (|g| + eps).
        for (k, &gk) in [5.0f64, -3.0, 0.25, 0.0].iter().enumerate() {
            let expected = if gk == 0.0 { 0.0 } else { -0.01 * gk / (gk.abs() + 1e-8) };
            assert!((x.row(0)[k] - expected).abs() < 1e-9, "coord {}", k);
        }
    }

    #[test]
    fn adam_requires_a_positive_step_count() {
        let mut x = Matrix::zeros(1, D);
        let mut m = Matrix::zeros(1, D);
        let mut v = Matrix::zeros(1, D);
        let g = grad(vec![0], vec![[1.0, 0.0, 0.0, 0.0]]);
        let err = adam_step_dense(&mut x, &mut m, &mut v, &g, 0, &cfg(0.01));
        assert!(matches!(err, Err(Error::State(_))));
    }

    #[test]
    fn sketched_steps_reject_wrong_sketch_kinds() {
        let mut x = Matrix::zeros(10, D);
        let g = grad(vec![1], vec![[1.0, 0.0, 0.0, 0.0]]);
        let mut wrong = min_sketch(10, 8, 1);
        assert!(matches!(
            momentum_step_sketched(&mut x, &mut wrong, &g, &cfg(0.1)),
            Err(Error::Config(_))
        ));
        let mut wrong = signed_sketch(10, 8, 1);
        assert!(matches!(
            adagrad_step_sketched(&mut x, &mut wrong, &g, &cfg(0.1)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn sketched_adam_enforces_the_beta1_zero_contract() {
        let mut x = Matrix::zeros(10, D);
        let g = grad(vec![1], vec![[1.0, 0.0, 0.0, 0.0]]);
        let mut second = min_sketch(10, 8, 2);
        // beta1 == 0 with a first-moment sketch is a configuration error.
        let c = OptimizerConfig { beta1: 0.0, ..cfg(0.01) };
        let mut first = signed_sketch(10, 8, 3);
        assert!(adam_step_sketched(&mut x, Some(&mut first), &mut second, &g, 1, &c).is_err());
        // beta1 > 0 without a first-moment sketch is too.
        assert!(adam_step_sketched(&mut x, None, &mut second, &g, 1, &cfg(0.01)).is_err());
        // The two consistent pairings work.
        assert!(adam_step_sketched(&mut x, None, &mut second, &g, 1, &c).is_ok());
        assert!(adam_step_sketched(&mut x, Some(&mut first), &mut second, &g, 2, &cfg(0.01)).is_ok());
    }

    #[test]
    fn injective_sketched_momentum_tracks_dense_closely() {
        let fam = HashFamily::injective(8).unwrap();
        let sk = SketchTensor::new(SketchKind::SignedMedian, fam, D).unwrap();
        let mut state_s = OptimizerState::momentum_sketched(sk).unwrap();
        let mut state_d = OptimizerState::momentum_dense(8, D);
        let mut xs = Matrix::zeros(8, D);
        let mut xd = Matrix::zeros(8, D);
        let c = cfg(0.1);
        for step in 0..20 {
            let g = grad(vec![step % 8], vec![[1.0 + step as f64, -0.5, 0.25, 2.0]]);
            state_s.apply_step(&mut xs, &g, &c).unwrap();
            state_d.apply_step(&mut xd, &g, &c).unwrap();
        }
        for (a, b) in xs.as_slice().iter().zip(xd.as_slice()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn min_sketch_counters_stay_nonnegative_under_adam() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(99);
        let mut x = Matrix::zeros(64, D);
        let mut second = min_sketch(64, 8, 4);
        let mut first = signed_sketch(64, 8, 5);
        let c = cfg(0.01);
        for t in 1..=300u64 {
            let item = rng.gen_range(0..64);
            let mut row = [0.0f64; D];
            for v in row.iter_mut() {
                *v = rng.gen_range(-2.0..2.0);
            }
            let g = grad(vec![item], vec![row]);
            adam_step_sketched(&mut x, Some(&mut first), &mut second, &g, t, &c).unwrap();
            assert!(
                second.counters().iter().all(|&v| v >= -1e-12),
                "negative min-sketch counter at step {}",
                t
            );
        }
    }

    #[test]
    fn sketched_adagrad_never_outsteps_dense() {
        // The min sketch can only overestimate the accumulator, so the
        // per-coordinate step magnitude is at most the dense one.
        let mut xd = Matrix::zeros(128, D);
        let mut xs = Matrix::zeros(128, D);
        let mut vd = Matrix::zeros(128, D);
        let mut vs = min_sketch(128, 4, 6);
        let c = cfg(0.5);
        // Preload collisions so estimates genuinely differ.
        for item in 0..128 {
            let row = [0.5 + (item % 3) as f64, 1.0, 0.25, 2.0];
            let g = grad(vec![item], vec![row]);
            adagrad_step_dense(&mut xd, &mut vd, &g, &c).unwrap();
            adagrad_step_sketched(&mut xs, &mut vs, &g, &c).unwrap();
        }
        let mut xd1 = Matrix::zeros(1, D);
        let mut xs1 = Matrix::zeros(1, D);
        for item in 0..128usize {
            let row = [1.5, -0.75, 0.1, 3.0];
            let g = grad(vec![0], vec![row]);
            // Compare one isolated step from identical parameters.
            let mut vd_row = Matrix::from_vec(1, D, vd.row(item).to_vec()).unwrap();
            xd1.as_mut_slice().fill(0.0);
            adagrad_step_dense(&mut xd1, &mut vd_row, &g, &c).unwrap();
            xs1.as_mut_slice().fill(0.0);
            let mut probe = vs.clone();
            let g_item = grad(vec![item], vec![row]);
            let mut xs_full = Matrix::zeros(128, D);
            adagrad_step_sketched(&mut xs_full, &mut probe, &g_item, &c).unwrap();
            xs1.row_mut(0).copy_from_slice(xs_full.row(item));
            for k in 0..D {
                assert!(
                    xs1.row(0)[k].abs() <= xd1.row(0)[k].abs() + 1e-12,
                    "item {} coord {}: sketched step {} larger than dense {}",
                    item,
                    k,
                    xs1.row(0)[k],
                    xd1.row(0)[k]
                );
            }
        }
    }

    #[test]
    fn cleaning_fires_on_schedule_and_only_for_min_sketches() {
        let c = OptimizerConfig {
            cleaning: Some(Cleaning { interval: 5, factor: 0.5 }),
            ..cfg(0.01)
        };
        let first = signed_sketch(32, 8, 7);
        let second = min_sketch(32, 8, 8);
        let mut state = OptimizerState::adam_sketched(Some(first), second).unwrap();
        let mut x = Matrix::zeros(32, D);
        let mut cleanings = 0;
        for step in 1..=10u64 {
            let g = grad(vec![(step as usize) % 32], vec![[1.0, 2.0, 3.0, 4.0]]);
            state.apply_step(&mut x, &g, &c).unwrap();
            let first_before = match state.aux() {
                AuxState::AdamSketched { first, .. } => first.clone().unwrap(),
                _ => unreachable!(),
            };
            if maybe_clean(&mut state, &c).unwrap() {
                cleanings += 1;
                assert_eq!(state.step_count() % 5, 0);
            }
            let first_after = match state.aux() {
                AuxState::AdamSketched { first, .. } => first.clone().unwrap(),
                _ => unreachable!(),
            };
            // The signed first-moment sketch is never rescaled.
            assert_eq!(first_before.counters(), first_after.counters());
        }
        assert_eq!(cleanings, 2);
        // Without a schedule, nothing happens.
        let mut state = OptimizerState::adagrad_sketched(min_sketch(32, 8, 9)).unwrap();
        state.apply_step(&mut x, &grad(vec![0], vec![[1.0; D]]), &cfg(0.01)).unwrap();
        assert!(!maybe_clean(&mut state, &cfg(0.01)).unwrap());
    }

    #[test]
    fn config_validation_rejects_out_of_range_values() {
        let mut c = cfg(0.01);
        assert!(c.validate().is_ok());
        c.beta2 = 1.0;
        assert!(c.validate().is_err());
        let mut c = cfg(0.01);
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
        let mut c = cfg(0.01);
        c.epsilon = 0.0;
        assert!(c.validate().is_err());
        let mut c = cfg(0.01);
        c.momentum_decay = -0.1;
        assert!(c.validate().is_err());
        let mut c = cfg(0.01);
        c.cleaning = Some(Cleaning { interval: 0, factor: 0.5 });
        assert!(c.validate().is_err());
        let mut c = cfg(0.01);
        c.cleaning = Some(Cleaning { interval: 10, factor: 1.5 });
        assert!(c.validate().is_err());
    }

    #[test]
    fn reconstruct_aux_materializes_sketches() {
        let fam = HashFamily::injective(6).unwrap();
        let sk = SketchTensor::new(SketchKind::SignedMedian, fam, D).unwrap();
        let mut state = OptimizerState::momentum_sketched(sk).unwrap();
        let mut x = Matrix::zeros(6, D);
        let g = grad(vec![2], vec![[1.0, 2.0, 3.0, 4.0]]);
        state.apply_step(&mut x, &g, &cfg(0.1)).unwrap();
        let aux = state.reconstruct_aux().unwrap();
        assert_eq!(aux.len(), 1);
        let (tag, m) = &aux[0];
        assert_eq!(*tag, MomentTag::First);
        assert_eq!(m.row(2), &[1.0, 2.0, 3.0, 4.0]);
        assert!(m.row(0).iter().all(|&v| v == 0.0));
    }
}
