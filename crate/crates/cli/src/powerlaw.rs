//! Post-processing of auxiliary snapshots: re-emits the mass-midpoint and
//! top-identity drift series from a completed run's snapshot stream.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;

use sketch_optim::checkpoint::read_snapshots;
use sketch_optim::diagnostics::{jaccard, midpoint_50, top_k_ids, MetricsWriter};
use sketch_optim::optim::MomentTag;

use crate::error::{CliError, Result};

/// How many top rows the identity-drift series tracks.
const TOP_K: usize = 100;

#[derive(Debug, Clone)]
pub struct PowerlawSummary {
    pub records: usize,
    /// Mean midpoint over records, per tracked moment (in tag order).
    pub mean_midpoints: Vec<(MomentTag, f64)>,
}

/// Reads `<dir>/snapshots.bin` and writes `powerlaw.csv` (midpoint and
/// top-k Jaccard series) plus `powerlaw_topk.csv` (the ranked top rows of
/// the last tracked moment per snapshot).
pub fn run_powerlaw(dir: &Path) -> Result<PowerlawSummary> {
    let path = dir.join("snapshots.bin");
    let file = File::open(&path).map_err(|e| {
        if e.kind() == io::ErrorKind::NotFound {
            CliError::Config(format!(
                "no snapshot stream at {}; run train with snapshot_interval > 0 first",
                path.display()
            ))
        } else {
            CliError::Io(e)
        }
    })?;
    let snapshots = read_snapshots(&mut BufReader::new(file))?;
    if snapshots.records.is_empty() {
        return Err(CliError::Config(format!(
            "snapshot stream {} has a header but no records",
            path.display()
        )));
    }

    let mut series = MetricsWriter::new(BufWriter::new(File::create(dir.join("powerlaw.csv"))?))?;
    let mut topk_csv = BufWriter::new(File::create(dir.join("powerlaw_topk.csv"))?);
    writeln!(topk_csv, "step,rank,item_id,magnitude")?;

    let k = TOP_K.min(snapshots.rows);
    let moments = snapshots.tags.len();
    let mut previous_top: Vec<Option<Vec<usize>>> = vec![None; moments];
    let mut midpoint_sums = vec![0.0f64; moments];
    let mut midpoint_counts = vec![0u64; moments];

    for (step, matrices) in &snapshots.records {
        for (idx, matrix) in matrices.iter().enumerate() {
            let tag = snapshots.tags[idx];
            if let Ok(mid) = midpoint_50(matrix.as_slice()) {
                series.write(*step, &format!("midpoint_{}", tag.name()), mid)?;
                midpoint_sums[idx] += mid;
                midpoint_counts[idx] += 1;
            }
            let top = top_k_ids(matrix, k);
            if let Some(prev) = &previous_top[idx] {
                series.write(*step, &format!("jaccard_{}", tag.name()), jaccard(prev, &top))?;
            }
            if idx == moments - 1 {
                for (rank, &item) in top.iter().enumerate() {
                    let mag = matrix
                        .row(item)
                        .iter()
                        .map(|&v| (v as f64) * (v as f64))
                        .sum::<f64>()
                        .sqrt();
                    writeln!(topk_csv, "{},{},{},{}", step, rank + 1, item, mag)?;
                }
            }
            previous_top[idx] = Some(top);
        }
    }
    series.flush()?;
    topk_csv.flush()?;

    let mean_midpoints = snapshots
        .tags
        .iter()
        .enumerate()
        .filter(|(idx, _)| midpoint_counts[*idx] > 0)
        .map(|(idx, tag)| (*tag, midpoint_sums[idx] / midpoint_counts[idx] as f64))
        .collect();
    Ok(PowerlawSummary { records: snapshots.records.len(), mean_midpoints })
}
