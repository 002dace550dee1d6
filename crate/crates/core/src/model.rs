//! Synthetic sparse softmax regression task with Zipfian feature frequency.
//!
//! Feature accesses in large embedding models follow a power law; this task
//! reproduces that texture at desk scale. Each example holds `k` distinct
//! feature indices drawn with probability proportional to `rank^-s`, and its
//! label comes from a planted linear model over a hidden ground-truth weight
//! matrix derived from the same seed, so the task is learnable by the softmax
//! regression model trained on it.

use std::io::{self, BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::hash::splitmix64;
use crate::matrix::Matrix;
use crate::optim::SparseGradient;
use crate::scalar::Real;

/// Configuration of the synthetic dataset generator.
#[derive(Debug, Clone, PartialEq)]
pub struct ZipfDataConfig {
    /// Vocabulary size `n`.
    pub num_features: usize,
    /// Number of classes `c`.
    pub num_classes: usize,
    /// Power-law exponent `s >= 0`; zero gives the uniform distribution.
    pub zipf_exponent: f64,
    /// Distinct features per example `k`.
    pub features_per_example: usize,
    /// Number of examples to generate.
    pub num_examples: usize,
    /// Seed for both feature sampling and the planted ground truth.
    pub seed: u64,
}

impl ZipfDataConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_features == 0 {
            return Err(Error::Config("num_features must be at least 1".to_string()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be at least 2".to_string()));
        }
        if !(self.zipf_exponent >= 0.0 && self.zipf_exponent.is_finite()) {
            return Err(Error::Config(format!(
                "zipf_exponent must be finite and nonnegative, got {}",
                self.zipf_exponent
            )));
        }
        if self.features_per_example == 0 || self.features_per_example > self.num_features {
            return Err(Error::Config(format!(
                "features_per_example must lie in [1, {}], got {}",
                self.num_features,
                self.features_per_example
            )));
        }
        if self.num_examples == 0 {
            return Err(Error::Config("num_examples must be at least 1".to_string()));
        }
        Ok(())
    }
}

/// One training example: sorted distinct feature indices and a class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub features: Vec<usize>,
    pub label: usize,
}

/// Hidden ground-truth weight for feature `f`, class `c`, in `[-1, 1)`.
///
/// Derived arithmetically from the seed so that labeling never materializes
/// an `n x c` matrix. The nested bijective mixes keep distinct `(f, c)`
/// pairs on distinct inputs.
fn truth_weight(seed: u64, f: usize, c: usize) -> f64 {
    let h = splitmix64(splitmix64(seed.wrapping_add(f as u64)).wrapping_add(c as u64));
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

/// Draws the dataset described by `cfg`. Deterministic in the seed.
pub fn generate_dataset(cfg: &ZipfDataConfig) -> Result<Vec<Example>> {
    cfg.validate()?;
    let n = cfg.num_features;
    let k = cfg.features_per_example;
    let mut cumulative = Vec::with_capacity(n);
    let mut total = 0.0f64;
    for i in 0..n {
        total += (i as f64 + 1.0).powf(-cfg.zipf_exponent);
        cumulative.push(total);
    }
    let truth_seed = splitmix64(cfg.seed ^ 0x0074_6578_7475_7265u64);
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut examples = Vec::with_capacity(cfg.num_examples);
    for _ in 0..cfg.num_examples {
        let mut features: Vec<usize> = Vec::with_capacity(k);
        while features.len() < k {
            let u = rng.gen_range(0.0..total);
            let f = cumulative.partition_point(|&c| c <= u);
            if !features.contains(&f) {
                features.push(f);
            }
        }
        features.sort_unstable();
        let mut label = 0;
        let mut best = f64::NEG_INFINITY;
        for class in 0..cfg.num_classes {
            let score: f64 = features.iter().map(|&f| truth_weight(truth_seed, f, class)).sum();
            if score > best {
                best = score;
                label = class;
            }
        }
        examples.push(Example { features, label });
    }
    Ok(examples)
}

/// Softmax regression over sparse feature sets: the logit vector of an
/// example is the sum of the weight rows of its features.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxModel<F> {
    weights: Matrix<F>,
}

impl<F: Real> SoftmaxModel<F> {
    /// Zero-initialized model with `num_features x num_classes` weights.
    pub fn new(num_features: usize, num_classes: usize) -> Self {
        SoftmaxModel { weights: Matrix::zeros(num_features, num_classes) }
    }

    pub fn weights(&self) -> &Matrix<F> {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Matrix<F> {
        &mut self.weights
    }

    pub fn num_features(&self) -> usize {
        self.weights.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.weights.cols()
    }

    fn check_example(&self, ex: &Example) -> Result<()> {
        if ex.label >= self.num_classes() {
            return Err(Error::Data(format!(
                "label {} outside {} classes",
                ex.label,
                self.num_classes()
            )));
        }
        for &f in &ex.features {
            if f >= self.num_features() {
                return Err(Error::Index { item: f, domain: self.num_features() });
            }
        }
        if ex.features.is_empty() {
            return Err(Error::Data("example has no features".to_string()));
        }
        Ok(())
    }

    fn logits(&self, ex: &Example, out: &mut [F]) {
        out.fill(F::zero());
        for &f in &ex.features {
            for (o, &w) in out.iter_mut().zip(self.weights.row(f)) {
                *o += w;
            }
        }
    }

    /// Class probabilities via a max-subtracted softmax.
    fn probabilities(&self, logits: &mut [F]) {
        let max = logits.iter().fold(F::neg_infinity(), |a, &b| a.max(b));
        let mut sum = F::zero();
        for z in logits.iter_mut() {
            *z = (*z - max).exp();
            sum += *z;
        }
        for z in logits.iter_mut() {
            *z = *z / sum;
        }
    }

    /// Mean cross-entropy loss over the batch.
    pub fn forward_loss(&self, batch: &[Example]) -> Result<F> {
        if batch.is_empty() {
            return Err(Error::Data("batch is empty".to_string()));
        }
        let c = self.num_classes();
        let mut logits = vec![F::zero(); c];
        let mut sum = F::zero();
        for ex in batch {
            self.check_example(ex)?;
            self.logits(ex, &mut logits);
            let max = logits.iter().fold(F::neg_infinity(), |a, &b| a.max(b));
            let log_sum: F = logits.iter().map(|&z| (z - max).exp()).sum::<F>().ln();
            sum += max + log_sum - logits[ex.label];
        }
        Ok(sum / F::from_usize(batch.len()).unwrap())
    }

    /// Gradient of [`forward_loss`] with respect to the weights.
    ///
    /// Only rows of features active in the batch appear; each active row is
    /// the sum over examples containing the feature of
    /// `softmax(logits) - onehot(label)`, scaled by `1 / batch_size` to
    /// match the mean in the loss.
    pub fn backward(&self, batch: &[Example]) -> Result<SparseGradient<F>> {
        if batch.is_empty() {
            return Err(Error::Data("batch is empty".to_string()));
        }
        let c = self.num_classes();
        let mut acc: std::collections::BTreeMap<usize, Vec<F>> = std::collections::BTreeMap::new();
        let mut probs = vec![F::zero(); c];
        for ex in batch {
            self.check_example(ex)?;
            self.logits(ex, &mut probs);
            self.probabilities(&mut probs);
            for &f in &ex.features {
                let row = acc.entry(f).or_insert_with(|| vec![F::zero(); c]);
                for (r, (&p, class)) in row.iter_mut().zip(probs.iter().zip(0..)) {
                    let y = if class == ex.label { F::one() } else { F::zero() };
                    *r += p - y;
                }
            }
        }
        let scale = F::one() / F::from_usize(batch.len()).unwrap();
        let mut items = Vec::with_capacity(acc.len());
        let mut values = Vec::with_capacity(acc.len() * c);
        for (f, row) in acc {
            items.push(f);
            values.extend(row.into_iter().map(|v| v * scale));
        }
        SparseGradient::new(items, values, c)
    }
}

/// Writes examples as `feature,feature,...<TAB>label` lines.
pub fn write_dataset<W: Write>(writer: &mut W, examples: &[Example]) -> io::Result<()> {
    for ex in examples {
        let feats: Vec<String> = ex.features.iter().map(|f| f.to_string()).collect();
        writeln!(writer, "{}\t{}", feats.join(","), ex.label)?;
    }
    Ok(())
}

/// Parses the format written by [`write_dataset`].
pub fn read_dataset<R: BufRead>(reader: R) -> io::Result<Vec<Example>> {
    let mut examples = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let bad = |msg: &str| {
            io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {}", lineno + 1, msg))
        };
        let (feats, label) = line.split_once('\t').ok_or_else(|| bad("missing tab separator"))?;
        let features = feats
            .split(',')
            .map(|t| t.parse::<usize>().map_err(|_| bad("bad feature index")))
            .collect::<io::Result<Vec<usize>>>()?;
        if features.is_empty() {
            return Err(bad("no features"));
        }
        let label = label.parse::<usize>().map_err(|_| bad("bad label"))?;
        examples.push(Example { features, label });
    }
    Ok(examples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ZipfDataConfig {
        ZipfDataConfig {
            num_features: 100,
            num_classes: 4,
            zipf_exponent: 1.05,
            features_per_example: 3,
            num_examples: 50,
            seed: 11,
        }
    }

    #[test]
    fn config_validation_catches_bad_values() {
        let mut c = small_cfg();
        assert!(c.validate().is_ok());
        c.num_features = 0;
        assert!(c.validate().is_err());
        let mut c = small_cfg();
        c.num_classes = 1;
        assert!(c.validate().is_err());
        let mut c = small_cfg();
        c.zipf_exponent = -0.5;
        assert!(c.validate().is_err());
        let mut c = small_cfg();
        c.features_per_example = 101;
        assert!(c.validate().is_err());
        let mut c = small_cfg();
        c.num_examples = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn generation_is_deterministic_and_well_formed() {
        let a = generate_dataset(&small_cfg()).unwrap();
        let b = generate_dataset(&small_cfg()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 50);
        for ex in &a {
            assert_eq!(ex.features.len(), 3);
            assert!(ex.features.windows(2).all(|w| w[0] < w[1]));
            assert!(ex.features.iter().all(|&f| f < 100));
            assert!(ex.label < 4);
        }
        let mut other = small_cfg();
        other.seed = 12;
        assert_ne!(generate_dataset(&other).unwrap(), a);
    }

    #[test]
    fn zipfian_draws_concentrate_on_head_features() {
        // Oracle: exact partial sums of the sampling weights. For s = 1.05
        // over 10^4 features, the top 1% carries well over 20% of the mass,
        // and with k << n the empirical occurrence share stays close to it.
        let cfg = ZipfDataConfig {
            num_features: 10_000,
            num_classes: 4,
            zipf_exponent: 1.05,
            features_per_example: 5,
            num_examples: 4_000,
            seed: 3,
        };
        let weights: Vec<f64> =
            (0..cfg.num_features).map(|i| (i as f64 + 1.0).powf(-cfg.zipf_exponent)).collect();
        let total: f64 = weights.iter().sum();
        let head: f64 = weights.iter().take(cfg.num_features / 100).sum();
        let exact_share = head / total;
        assert!(exact_share > 0.2, "oracle share {} too small", exact_share);

        let data = generate_dataset(&cfg).unwrap();
        let mut counts = vec![0usize; cfg.num_features];
        for ex in &data {
            for &f in &ex.features {
                counts[f] += 1;
            }
        }
        let occurrences: usize = counts.iter().sum();
        let head_occurrences: usize = counts.iter().take(cfg.num_features / 100).sum();
        let share = head_occurrences as f64 / occurrences as f64;
        assert!(share >= 0.2, "head share {} below 0.2", share);
        // Distinctness dampens the head slightly, so allow a loose band
        // around the independent-draw oracle.
        assert!((share - exact_share).abs() < 0.15, "share {} vs oracle {}", share, exact_share);
    }

    #[test]
    fn zero_exponent_is_uniform() {
        let cfg = ZipfDataConfig {
            num_features: 10_000,
            num_classes: 4,
            zipf_exponent: 0.0,
            features_per_example: 5,
            num_examples: 4_000,
            seed: 4,
        };
        let data = generate_dataset(&cfg).unwrap();
        let mut head = 0usize;
        let mut total = 0usize;
        for ex in &data {
            for &f in &ex.features {
                total += 1;
                if f < 100 {
                    head += 1;
                }
            }
        }
        let share = head as f64 / total as f64;
        assert!(share < 0.05, "uniform head share {} unexpectedly large", share);
    }

    #[test]
    fn zero_weights_give_log_c_loss() {
        let model: SoftmaxModel<f64> = SoftmaxModel::new(20, 16);
        let batch = vec![
            Example { features: vec![0, 3, 7], label: 2 },
            Example { features: vec![1, 2], label : 15 },
        ];
        let loss = model.forward_loss(&batch).unwrap();
        assert!((loss - (16.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn binary_logit_loss_matches_closed_form() {
        for ell in [0.5f64, 2.0, -1.0] {
            let mut model: SoftmaxModel<f64> = SoftmaxModel::new(1, 2);
            model.weights_mut().row_mut(0).copy_from_slice(&[ell, 0.0]);
            let batch = vec![Example { features: vec![0], label: 0 }];
            let loss = model.forward_loss(&batch).unwrap();
            assert!((loss - (1.0 + (-ell).exp()).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_predictions_give_vanishing_gradients() {
        let mut model: SoftmaxModel<f64> = SoftmaxModel::new(2, 3);
        model.weights_mut().row_mut(0).copy_from_slice(&[60.0, 0.0, 0.0]);
        let batch = vec![Example { features: vec![0], label: 0 }];
        let g = model.backward(&batch).unwrap();
        assert!(g.l2_norm() < 1e-12);
    }

    #[test]
    fn gradient_rows_sum_to_zero_across_classes() {
        let cfg = small_cfg();
        let data = generate_dataset(&cfg).unwrap();
        let mut model: SoftmaxModel<f64> = SoftmaxModel::new(100, 4);
        for (i, w) in model.weights_mut().as_mut_slice().iter_mut().enumerate() {
            *w = ((i * 37 % 97) as f64 - 48.0) / 50.0;
        }
        let g = model.backward(&data[..16]).unwrap();
        assert!(!g.is_empty());
        assert!(g.len() <= 16 * 3);
        for idx in 0..g.len() {
            let sum: f64 = g.row(idx).iter().sum();
            assert!(sum.abs() < 1e-10, "row {} sums to {}", idx, sum);
        }
        // Active rows are exactly the batch's features.
        let mut expected: Vec<usize> = data[..16].iter().flat_map(|e| e.features.clone()).collect();
        expected.sort_unstable();
        expected.dedup();
        assert_eq!(g.items(), expected.as_slice());
    }

    #[test]
    fn backward_matches_central_finite_differences() {
        // Oracle: directional derivatives from central differences of the
        // loss itself, h = 1e-4, double precision.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(17);
        let cfg = ZipfDataConfig {
            num_features: 30,
            num_classes: 6,
            zipf_exponent: 1.05,
            features_per_example: 3,
            num_examples: 8,
            seed: 23,
        };
        let batch = generate_dataset(&cfg).unwrap();
        let mut model: SoftmaxModel<f64> = SoftmaxModel::new(30, 6);
        for w in model.weights_mut().as_mut_slice().iter_mut() {
            *w = rng.gen_range(-0.8..0.8);
        }
        let analytic = model.backward(&batch).unwrap();
        let h = 1e-4;
        for trial in 0..20 {
            let rows: Vec<usize> = (0..3).map(|_| rng.gen_range(0..30)).collect();
            let mut direction = vec![vec![0.0f64; 6]; 30];
            for &r in &rows {
                for slot in direction[r].iter_mut() {
                    *slot = rng.gen_range(-1.0..1.0);
                }
            }
            let perturbed = |sign: f64| -> f64 {
                let mut m = model.clone();
                for (r, row) in direction.iter().enumerate() {
                    for (k, &u) in row.iter().enumerate() {
                        m.weights_mut().row_mut(r)[k] += sign * h * u;
                    }
                }
                m.forward_loss(&batch).unwrap()
            };
            let fd = (perturbed(1.0) - perturbed(-1.0)) / (2.0 * h);
            let mut dot = 0.0f64;
            for (idx, &item) in analytic.items().iter().enumerate() {
                for (k, &d) in direction[item].iter().enumerate() {
                    dot += analytic.row(idx)[k] * d;
                }
            }
            let denom = fd.abs().max(dot.abs());
            if denom < 1e-12 {
                continue;
            }
            let rel = (fd - dot).abs() / denom;
            assert!(rel < 1e-4, "trial {}: fd {} vs analytic {} (rel {})", trial, fd, dot, rel);
        }
    }

    #[test]
    fn rejects_out_of_range_examples() {
        let model: SoftmaxModel<f64> = SoftmaxModel::new(10, 3);
        let bad_feature = vec![Example { features: vec![10], label: 0 }];
        assert!(matches!(model.forward_loss(&bad_feature), Err(Error::Index { .. })));
        let bad_label = vec![Example { features: vec![0], label: 3 }];
        assert!(matches!(model.forward_loss(&bad_label), Err(Error::Data(_))));
        assert!(model.forward_loss(&[]).is_err());
        assert!(model.backward(&[]).is_err());
    }

    #[test]
    fn dataset_text_format_round_trips() {
        let data = generate_dataset(&small_cfg()).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &data).unwrap();
        let parsed = read_dataset(buf.as_slice()).unwrap();
        assert_eq!(parsed, data);
    }

    #[test]
    fn dataset_loader_rejects_malformed_lines() {
        assert!(read_dataset("1,2,3 0\n".as_bytes()).is_err());
        assert!(read_dataset("1,x\t0\n".as_bytes()).is_err());
        assert!(read_dataset("1,2\tlabel\n".as_bytes()).is_err());
        assert!(read_dataset("\t0\n".as_bytes()).is_err());
    }
}
