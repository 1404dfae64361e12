//! The training run on disk.
//!
//! ```text
//! <out>/config.txt
//! <out>/metrics.csv        iteration 0 is the bootstrap evaluation
//! <out>/timing.csv
//! <out>/episodes.jsonl     one line per self-play segment
//! <out>/checkpoints/{latest,best}.{manifest,bin}
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::checkpoint::Checkpoint;
use crate::error::{io_err, Error, Result};
use crate::pipeline::{IterationMetrics, Trainer};
use crate::report::{metrics_row, timing_row, CsvLog, JsonLines, METRICS_HEADER, TIMING_HEADER};

pub const OUT_ENV: &str = "FASTCOLOR_OUT";

/// `FASTCOLOR_OUT` wins over the configured directory.
pub fn output_dir(configured: &Path) -> PathBuf {
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => configured.to_path_buf(),
    }
}

pub struct RunSummary {
    pub metrics: Vec<IterationMetrics>,
    pub best_avg: f64,
    pub out: PathBuf,
}

/// Runs `trainer.cfg.iterations - trainer.iteration` iterations, writing
/// metrics and checkpoints under `out`.
pub fn policy_iteration(mut trainer: Trainer, out: &Path) -> Result<RunSummary> {
    let ck_dir = out.join("checkpoints");
    fs::create_dir_all(&ck_dir).map_err(io_err(&ck_dir))?;
    trainer.cfg.save(&out.join("config.txt"))?;
    let mut metrics_log = CsvLog::create(&out.join("metrics.csv"), &METRICS_HEADER)?;
    let mut timing_log = CsvLog::create(&out.join("timing.csv"), &TIMING_HEADER)?;
    let mut episodes = JsonLines::create(&out.join("episodes.jsonl"))?;

    let start = Instant::now();
    let mut metrics = Vec::new();
    if trainer.iteration == 0 {
        let m = trainer.bootstrap_metrics();
        metrics_log.row(metrics_row(&m))?;
        metrics.push(m);
    }
    while trainer.iteration < trainer.cfg.iterations {
        let mut log = Vec::new();
        let (m, t) = match trainer.step(&mut log) {
            Ok(r) => r,
            Err(e @ Error::Diverged { .. }) => {
                dump_divergence(&trainer, &ck_dir, &e)?;
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        episodes.write(&log)?;
        metrics_log.row(metrics_row(&m))?;
        timing_log.row(timing_row(m.iteration, &t, start.elapsed().as_secs_f64()))?;
        let ck = trainer.checkpoint();
        ck.save(&ck_dir.join("latest"))?;
        if m.accepted {
            ck.save(&ck_dir.join("best"))?;
        }
        metrics.push(m);
    }
    Ok(RunSummary {
        metrics,
        best_avg: trainer.best_avg(),
        out: out.to_path_buf(),
    })
}

fn dump_divergence(trainer: &Trainer, dir: &Path, e: &Error) -> Result<()> {
    let ck: Checkpoint = trainer.checkpoint();
    ck.save(&dir.join("diverged"))?;
    let path = dir.join("diverged.txt");
    let text = format!(
        "{e}\niteration {}\nbuffer {}\nparams finite {}\n",
        trainer.iteration,
        trainer.buffer.len(),
        ck.params.ids().all(|id| ck.params.get(id).data.iter().all(|v| v.is_finite()))
    );
    fs::write(&path, text).map_err(io_err(&path))
}
