//! Result files: per-step metrics, hourly income, gap snapshots and a
//! delimiter-separated summary.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::harness::run::{CompareRow, DayRecord, RunRecord};
use crate::simcore::{metrics_report, STEPS_PER_HOUR};

pub const SUMMARY_HEADER: [&str; 10] = [
    "dispatcher",
    "seed",
    "gmv",
    "orr",
    "adp",
    "aat",
    "orders_generated",
    "orders_served",
    "orders_cancelled",
    "no_orders",
];

fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct HourlyLine {
    hour: usize,
    income: f64,
}

#[derive(Serialize)]
struct GapLine<'a> {
    step: usize,
    gaps: &'a [i64],
}

/// Writes `steps.jsonl`, `hourly.jsonl`, `gaps.jsonl` and `summary.csv`
/// into `dir`. The summary is written last.
pub fn emit_outputs(record: &DayRecord, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_jsonl(&dir.join("steps.jsonl"), &record.history)?;
    let summary = if record.history.is_empty() { None } else { Some(metrics_report(&record.history)?) };
    let hourly: Vec<HourlyLine> = match &summary {
        Some(s) => {
            let hours = record.history.len().div_ceil(STEPS_PER_HOUR as usize).min(24);
            s.hourly_income()[..hours].iter().enumerate().map(|(hour, income)| HourlyLine { hour, income: *income }).collect()
        }
        None => Vec::new(),
    };
    write_jsonl(&dir.join("hourly.jsonl"), hourly)?;
    write_jsonl(&dir.join("gaps.jsonl"), record.gaps.iter().enumerate().map(|(step, g)| GapLine { step, gaps: g }))?;

    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record(SUMMARY_HEADER)?;
    if let Some(s) = summary {
        w.write_record([
            record.dispatcher.name().to_string(),
            record.seed.to_string(),
            format!("{:.2}", s.gmv),
            format!("{:.6}", s.orr),
            format!("{:.6}", s.adp),
            format!("{:.6}", s.aat),
            s.orders_generated.to_string(),
            s.orders_served.to_string(),
            s.orders_cancelled.to_string(),
            s.no_orders.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Training record as JSON, with wall-clock time split into its own file
/// so the record itself is reproducible.
pub fn write_run_record(record: &RunRecord, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut stable = record.clone();
    stable.wall_clock_s = 0.0;
    fs::write(dir.join("run.json"), serde_json::to_string_pretty(&stable)?)?;
    fs::write(dir.join("wall_clock.txt"), format!("{:.3}\n", record.wall_clock_s))?;
    write_jsonl(
        &dir.join("episodes.jsonl"),
        record.episodes.iter().map(|e| (e.episode, e.temperature, e.summary.gmv, e.summary.orr, e.summary.adp)),
    )
}

pub fn write_compare(rows: &[CompareRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["dispatcher", "metric", "aggregate_pct", "per_seed_pct"])?;
    let fmt = |x: Option<f64>| x.map_or_else(|| "NA".to_string(), |v| format!("{v:.2}"));
    for r in rows {
        let seeds: Vec<String> = r.per_seed.iter().map(|x| fmt(*x)).collect();
        w.write_record([r.dispatcher.name().to_string(), r.metric.name().to_string(), fmt(r.aggregate), seeds.join(";")])?;
    }
    w.flush()?;
    Ok(())
}
