//! CSV and JSONL outputs.
//!
//! `metrics.csv` only holds values that are a pure function of the config,
//! so two runs with the same seeds produce identical bytes. Wall-clock times
//! go to `timing.csv`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use fastcolor_core::graph::Graph;

use crate::error::{io_err, Error, Result};
use crate::pipeline::{EvalReport, IterationMetrics, IterationTiming, SegmentLog, TraceRow};

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

pub const METRICS_HEADER: [&str; 17] = [
    "iteration",
    "loss",
    "policy_loss",
    "value_loss",
    "eval_avg_colors",
    "candidate_avg_colors",
    "accepted",
    "win_rate",
    "wins",
    "ties",
    "losses",
    "segments",
    "records",
    "buffer",
    "aborted",
    "walks",
    "clamped",
];

pub fn metrics_row(m: &IterationMetrics) -> Vec<String> {
    vec![
        m.iteration.to_string(),
        m.loss.to_string(),
        m.policy_loss.to_string(),
        m.value_loss.to_string(),
        m.eval_avg_colors.to_string(),
        m.candidate_avg_colors.to_string(),
        u8::from(m.accepted).to_string(),
        m.win_rate().to_string(),
        m.wins.to_string(),
        m.ties.to_string(),
        m.losses.to_string(),
        m.segments.to_string(),
        m.records.to_string(),
        m.buffer.to_string(),
        m.aborted.to_string(),
        m.walks.to_string(),
        m.clamped.to_string(),
    ]
}

/// Row-at-a-time CSV file, flushed after every row so a crashed run keeps
/// its curve.
pub struct CsvLog {
    path: PathBuf,
    w: csv::Writer<File>,
}

impl CsvLog {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
        w.write_record(header).map_err(csv_err(path))?;
        w.flush().map_err(io_err(path))?;
        Ok(CsvLog {
            path: path.to_path_buf(),
            w,
        })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w.write_record(fields).map_err(csv_err(&self.path))?;
        self.w.flush().map_err(io_err(&self.path))
    }
}

pub const TIMING_HEADER: [&str; 5] = ["iteration", "selfplay_secs", "train_secs", "gate_secs", "wall_clock"];

pub fn timing_row(iteration: usize, t: &IterationTiming, wall_clock: f64) -> [String; 5] {
    [
        iteration.to_string(),
        format!("{:.3}", t.selfplay),
        format!("{:.3}", t.train),
        format!("{:.3}", t.gate),
        format!("{wall_clock:.3}"),
    ]
}

/// One JSON object per line.
pub struct JsonLines {
    path: PathBuf,
    w: BufWriter<File>,
}

impl JsonLines {
    pub fn create(path: &Path) -> Result<Self> {
        let f = File::create(path).map_err(io_err(path))?;
        Ok(JsonLines {
            path: path.to_path_buf(),
            w: BufWriter::new(f),
        })
    }

    pub fn write(&mut self, segments: &[SegmentLog]) -> Result<()> {
        for s in segments {
            serde_json::to_writer(&mut self.w, s).map_err(|e| Error::Io {
                path: self.path.clone(),
                source: e.into(),
            })?;
            self.w.write_all(b"\n").map_err(io_err(&self.path))?;
        }
        self.w.flush().map_err(io_err(&self.path))
    }
}

/// Per-graph colors, one column per method. Timing is left out so the file
/// is reproducible.
pub fn write_eval_csv(report: &EvalReport, graphs: &[&Graph], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header = vec!["graph".to_string(), "vertices".into(), "edges".into()];
    header.extend(report.methods.iter().cloned());
    w.write_record(&header).map_err(csv_err(path))?;
    for (i, (row, g)) in report.colors.iter().zip(graphs).enumerate() {
        let mut rec = vec![i.to_string(), g.vertex_count().to_string(), g.edge_count().to_string()];
        rec.extend(row.iter().map(|c| c.to_string()));
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_trace_csv(rows: &[TraceRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["move", "action", "prior", "visits", "q", "pi"])
        .map_err(csv_err(path))?;
    for r in rows {
        w.write_record([
            r.move_index.to_string(),
            r.action.clone(),
            r.prior.to_string(),
            r.visits.to_string(),
            r.q.to_string(),
            r.pi.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Numeric columns of a CSV file by header name.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
        let header: Vec<String> = r
            .headers()
            .map_err(csv_err(path))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err(path))?;
            let row = rec
                .iter()
                .map(|f| {
                    f.parse::<f64>().map_err(|_| Error::Parse {
                        path: path.to_path_buf(),
                        line: i + 2,
                        msg: format!("non-numeric field {f:?}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Ok(Table { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}
