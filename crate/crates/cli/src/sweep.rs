use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use apc_core::{ApcError, MetricsReport, PatternMatrix};

use crate::{run_algorithm, Algorithm, CliError, RunSettings};

/// Column order of the sweep CSV.
pub const SWEEP_COLUMNS: [&str; 12] = [
    "algorithm",
    "seed",
    "k",
    "density_p",
    "precision",
    "error_count",
    "total_elements",
    "element_accuracy",
    "total_active",
    "iterations",
    "wall_ms",
    "error",
];

/// Axes of a sweep. Baselines ignore density, so they run once per
/// `(k, seed)` and leave the density column empty.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub algorithms: Vec<Algorithm>,
    pub k_values: Vec<usize>,
    pub density_values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub max_iters: usize,
    /// Where to write one APCC file per cell, if anywhere.
    pub codebook_dir: Option<PathBuf>,
    /// Leave `wall_ms` empty so reruns are byte-identical.
    pub omit_timing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepSummary {
    pub rows: usize,
    pub failed: usize,
}

impl SweepPlan {
    pub fn validate(&self, n_rows: usize) -> Result<(), CliError> {
        if self.algorithms.is_empty() || self.k_values.is_empty() || self.seeds.is_empty() {
            return Err(CliError::Usage(
                "algorithms, k values and seeds must be non-empty".into(),
            ));
        }
        if self.algorithms.contains(&Algorithm::Awc) && self.density_values.is_empty() {
            return Err(CliError::Usage(
                "awc needs at least one density value".into(),
            ));
        }
        if let Some(&k) = self.k_values.iter().find(|&&k| k == 0 || k > n_rows) {
            return Err(ApcError::InvalidConfig(format!(
                "every k must satisfy 1 <= k <= N (N = {n_rows}), got k = {k}"
            ))
            .into());
        }
        Ok(())
    }

    /// Cells in output order: algorithm, then k, then density, then seed.
    pub fn cells(&self) -> Vec<(Algorithm, usize, Option<f64>, u64)> {
        let mut cells = Vec::new();
        for &alg in &self.algorithms {
            for &k in &self.k_values {
                let densities: Vec<Option<f64>> = match alg {
                    Algorithm::Awc => self.density_values.iter().copied().map(Some).collect(),
                    _ => vec![None],
                };
                for &p in &densities {
                    for &seed in &self.seeds {
                        cells.push((alg, k, p, seed));
                    }
                }
            }
        }
        cells
    }
}

fn codebook_name(alg: Algorithm, k: usize, p: Option<f64>, seed: u64) -> String {
    match p {
        Some(p) => format!("{}_k{k}_p{p}_s{seed}.apcc", alg.name()),
        None => format!("{}_k{k}_s{seed}.apcc", alg.name()),
    }
}

fn metric_fields(report: &MetricsReport) -> [String; 5] {
    [
        report.precision.to_string(),
        report.error_count.to_string(),
        report.total_elements.to_string(),
        report.element_accuracy.to_string(),
        report.total_active.to_string(),
    ]
}

/// Runs every cell of `plan` and writes the CSV table to `out`.
///
/// A failing cell becomes a row with only its axes and the `error` column
/// filled; the remaining cells still run.
pub fn run_sweep(
    data: &PatternMatrix,
    plan: &SweepPlan,
    out: &mut dyn Write,
) -> Result<SweepSummary, CliError> {
    plan.validate(data.n_rows())?;
    if let Some(dir) = &plan.codebook_dir {
        std::fs::create_dir_all(dir)?;
    }
    let binary = data.to_binary();
    let mut csv = csv::Writer::from_writer(out);
    csv.write_record(SWEEP_COLUMNS)?;
    let mut summary = SweepSummary { rows: 0, failed: 0 };
    for (alg, k, p, seed) in plan.cells() {
        let settings = RunSettings {
            k,
            density: p,
            seed,
            max_iters: plan.max_iters,
            capacity: None,
        };
        let start = Instant::now();
        let result = run_algorithm(data, &binary, alg, &settings).and_then(|run| {
            if let Some(dir) = &plan.codebook_dir {
                apc_core::ingest::save_codebook(
                    &run.codebook,
                    dir.join(codebook_name(alg, k, p, seed)),
                )?;
            }
            Ok(run)
        });
        let wall = if plan.omit_timing {
            String::new()
        } else {
            format!("{:.3}", start.elapsed().as_secs_f64() * 1e3)
        };
        let axes = [
            alg.name().to_string(),
            seed.to_string(),
            k.to_string(),
            p.map(|p| p.to_string()).unwrap_or_default(),
        ];
        let mut record: Vec<String> = axes.to_vec();
        match result {
            Ok(run) => {
                record.extend(metric_fields(&run.report));
                record.push(run.iterations.to_string());
                record.push(wall);
                record.push(String::new());
            }
            Err(e) => {
                summary.failed += 1;
                record.extend(std::iter::repeat_n(String::new(), 6));
                record.push(wall);
                record.push(e.to_string());
            }
        }
        csv.write_record(&record)?;
        summary.rows += 1;
    }
    csv.flush()?;
    Ok(summary)
}
