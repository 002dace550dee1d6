//! Sketch micro-benchmark: measures how often the width-based error
//! bounds fail on an exactly known vector, for both sketch kinds, across
//! seeds. The exact vector is the oracle; violation rates are written per
//! seed plus in aggregate.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use sketch_optim::hash::HashFamily;
use sketch_optim::sketch::{SketchKind, SketchTensor};
use sketch_optim::Real;

use crate::config::{Distribution, Precision, RunConfig};
use crate::error::{CliError, Result};

#[derive(Debug, Clone)]
pub struct BenchSummary {
    /// Aggregate rate of `|estimate - exact| > l2(x)/sqrt(w)` per component
    /// for the signed-median sketch.
    pub signed_rate: f64,
    /// Aggregate rate of `estimate - exact > l1(x)/w` per component for the
    /// min sketch.
    pub min_rate: f64,
    /// Min-sketch estimates below the exact value; must always be zero.
    pub underestimates: u64,
    pub components_checked: u64,
}

struct Tally {
    violations: u64,
    components: u64,
}

/// Runs `sketch-bench` per the `[bench]` section, writing `resolved.toml`
/// and `bench.csv` in `out`.
pub fn run_sketch_bench(cfg: &RunConfig, out: &Path) -> Result<BenchSummary> {
    cfg.validate()?;
    if cfg.bench.is_none() {
        return Err(CliError::Config(
            "sketch-bench needs a [bench] section in the config".to_string(),
        ));
    }
    fs::create_dir_all(out)?;
    fs::write(out.join("resolved.toml"), cfg.to_toml()?)?;
    match cfg.precision {
        Precision::F32 => bench_impl::<f32>(cfg, out),
        Precision::F64 => bench_impl::<f64>(cfg, out),
    }
}

/// One exactly known nonnegative `num_items x dim` vector: Zipf rank decay
/// (or flat), with a per-component jitter so coordinates differ.
fn exact_vector<F: Real>(cfg: &RunConfig, seed: u64) -> Vec<Vec<F>> {
    let bench = cfg.bench.as_ref().expect("checked");
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..bench.num_items)
        .map(|i| {
            let base = match bench.distribution {
                Distribution::Zipf => ((i + 1) as f64).powf(-bench.zipf_exponent),
                Distribution::Uniform => 1.0,
            };
            (0..bench.dim)
                .map(|_| F::from_f64_lossy(base * rng.gen_range(0.5..1.5)))
                .collect()
        })
        .collect()
}

fn bench_impl<F: Real>(cfg: &RunConfig, out: &Path) -> Result<BenchSummary> {
    let bench = cfg.bench.as_ref().expect("checked");
    let mut csv = BufWriter::new(File::create(out.join("bench.csv"))?);
    writeln!(csv, "seed,kind,violations,components,rate")?;

    let mut signed_total = Tally { violations: 0, components: 0 };
    let mut min_total = Tally { violations: 0, components: 0 };
    let mut underestimates = 0u64;

    for offset in 0..bench.seeds {
        let seed = cfg.seed.wrapping_add(offset);
        let x = exact_vector::<F>(cfg, seed);
        let fam = HashFamily::new(bench.depth, bench.width, bench.num_items, seed)?;
        let mut signed: SketchTensor<F> =
            SketchTensor::new(SketchKind::SignedMedian, fam.clone(), bench.dim)?;
        let mut min: SketchTensor<F> = SketchTensor::new(SketchKind::NonnegMin, fam, bench.dim)?;
        for (item, row) in x.iter().enumerate() {
            signed.update(item, row)?;
            min.update(item, row)?;
        }

        // Per-coordinate-slice norms: each coordinate k is an independent
        // frequency vector sharing the index hashes.
        let mut l2 = vec![0.0f64; bench.dim];
        let mut l1 = vec![0.0f64; bench.dim];
        for row in &x {
            for (k, v) in row.iter().enumerate() {
                let v = v.to_f64_lossy();
                l2[k] += v * v;
                l1[k] += v;
            }
        }
        for v in l2.iter_mut() {
            *v = v.sqrt();
        }

        let mut signed_seed = Tally { violations: 0, components: 0 };
        let mut min_seed = Tally { violations: 0, components: 0 };
        for (item, row) in x.iter().enumerate() {
            let est_signed = signed.query(item)?;
            let est_min = min.query(item)?;
            for k in 0..bench.dim {
                let exact = row[k].to_f64_lossy();
                signed_seed.components += 1;
                if (est_signed[k].to_f64_lossy() - exact).abs()
                    > l2[k] / (bench.width as f64).sqrt()
                {
                    signed_seed.violations += 1;
                }
                min_seed.components += 1;
                let err = est_min[k].to_f64_lossy() - exact;
                if err > l1[k] / bench.width as f64 {
                    min_seed.violations += 1;
                }
                if est_min[k] < row[k] {
                    underestimates += 1;
                }
            }
        }
        for (name, tally) in
            [("signed_median", &signed_seed), ("nonneg_min", &min_seed)]
        {
            writeln!(
                csv,
                "{},{},{},{},{}",
                seed,
                name,
                tally.violations,
                tally.components,
                tally.violations as f64 / tally.components as f64
            )?;
        }
        signed_total.violations += signed_seed.violations;
        signed_total.components += signed_seed.components;
        min_total.violations += min_seed.violations;
        min_total.components += min_seed.components;
    }

    let signed_rate = signed_total.violations as f64 / signed_total.components as f64;
    let min_rate = min_total.violations as f64 / min_total.components as f64;
    writeln!(
        csv,
        "aggregate,signed_median,{},{},{}",
        signed_total.violations, signed_total.components, signed_rate
    )?;
    writeln!(
        csv,
        "aggregate,nonneg_min,{},{},{}",
        min_total.violations, min_total.components, min_rate
    )?;
    writeln!(
        csv,
        "aggregate,nonneg_min_underestimates,{},{},{}",
        underestimates,
        min_total.components,
        underestimates as f64 / min_total.components as f64
    )?;
    csv.flush()?;

    Ok(BenchSummary {
        signed_rate,
        min_rate,
        underestimates,
        components_checked: signed_total.components,
    })
}
