use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, HarnessError};
use crate::analysis::{ConfidenceInterval, SweepPoint, Verdict};
use crate::executor::{ClockMode, Measurement, Strategy};

pub const SUMMARY_JSON: &str = "summary.json";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const RAW_CSV: &str = "raw.csv";
pub const SWEEP_CSV: &str = "sweep.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub measurements: usize,
    pub pairs_before_filter: usize,
    pub pairs_after_filter: usize,
    pub cold_measurements: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub strategy: Strategy,
    pub clock_mode: ClockMode,
    pub median_change_pct: f64,
    pub ci: ConfidenceInterval,
    pub verdict: Verdict,
    pub samples: SampleCounts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<SweepPoint>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timestamps {
    pub started: String,
    pub finished: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool_version: String,
    pub seed: u64,
    pub verdict: Verdict,
    pub strategies: Vec<StrategyReport>,
    pub config: ExperimentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamps: Option<Timestamps>,
    /// Raw measurements, merged in `(strategy, instance, repetition)` order.
    #[serde(skip)]
    pub raw: Vec<Measurement>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

impl Report {
    pub fn strategy(&self, strategy: Strategy) -> Option<&StrategyReport> {
        self.strategies.iter().find(|s| s.strategy == strategy)
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Summary JSON with the wall-clock timestamps removed, the part that is
    /// reproducible from config and seed.
    pub fn reproducible_summary_json(&self) -> String {
        Report {
            timestamps: None,
            ..self.clone()
        }
        .summary_json()
    }
}

/// One `raw.csv` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub strategy: Strategy,
    pub instance_id: u32,
    pub repetition: u32,
    pub version: String,
    pub duration_ns: u64,
    pub clock_mode: ClockMode,
    pub cold: bool,
    pub order_position: Option<u8>,
}

impl From<&Measurement> for RawRow {
    fn from(m: &Measurement) -> Self {
        RawRow {
            strategy: m.strategy,
            instance_id: m.instance_id,
            repetition: m.repetition,
            version: m.version_label.clone(),
            duration_ns: m.duration_ns,
            clock_mode: m.clock_mode,
            cold: m.cold,
            order_position: m.order_position,
        }
    }
}

impl From<RawRow> for Measurement {
    fn from(r: RawRow) -> Self {
        Measurement {
            duration_ns: r.duration_ns,
            clock_mode: r.clock_mode,
            version_label: r.version,
            strategy: r.strategy,
            instance_id: r.instance_id,
            repetition: r.repetition,
            cold: r.cold,
            order_position: r.order_position,
            work: None,
        }
    }
}

/// One `summary.csv` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub strategy: Strategy,
    pub clock_mode: ClockMode,
    pub median_change_pct: f64,
    pub ci_lower_pct: f64,
    pub ci_upper_pct: f64,
    pub ci_level: f64,
    pub width_pp: f64,
    pub verdict: Verdict,
    pub measurements: usize,
    pub pairs_before_filter: usize,
    pub pairs_after_filter: usize,
    pub cold_measurements: usize,
}

impl From<&StrategyReport> for SummaryRow {
    fn from(s: &StrategyReport) -> Self {
        SummaryRow {
            strategy: s.strategy,
            clock_mode: s.clock_mode,
            median_change_pct: s.median_change_pct,
            ci_lower_pct: s.ci.lower_pct,
            ci_upper_pct: s.ci.upper_pct,
            ci_level: s.ci.level,
            width_pp: s.ci.width_pp,
            verdict: s.verdict,
            measurements: s.samples.measurements,
            pairs_before_filter: s.samples.pairs_before_filter,
            pairs_after_filter: s.samples.pairs_after_filter,
            cold_measurements: s.samples.cold_measurements,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_owned(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> HarnessError + '_ {
    move |e| HarnessError::Csv {
        path: path.to_owned(),
        message: e.to_string(),
    }
}

pub fn write_raw_csv(path: &Path, measurements: &[Measurement]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for m in measurements {
        w.serialize(RawRow::from(m)).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_raw_csv(path: &Path) -> Result<Vec<Measurement>, HarnessError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    read_raw_csv_from(file, path)
}

fn read_raw_csv_from<R: Read>(reader: R, path: &Path) -> Result<Vec<Measurement>, HarnessError> {
    csv::Reader::from_reader(reader)
        .deserialize::<RawRow>()
        .map(|row| row.map(Measurement::from).map_err(csv_err(path)))
        .collect()
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>, HarnessError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    csv::Reader::from_reader(file)
        .deserialize()
        .map(|row| row.map_err(csv_err(path)))
        .collect()
}

/// Writes `sweep.csv`: one row per sample size, one width column per strategy
/// (empty where a strategy has no point at that size).
pub fn write_sweep_csv(path: &Path, report: &Report) -> Result<(), HarnessError> {
    let series: Vec<(Strategy, &Vec<SweepPoint>)> = report
        .strategies
        .iter()
        .filter_map(|s| s.sweep.as_ref().map(|points| (s.strategy, points)))
        .collect();
    let mut rows: BTreeMap<usize, Vec<Option<f64>>> = BTreeMap::new();
    for (col, (_, points)) in series.iter().enumerate() {
        for p in points.iter() {
            rows.entry(p.n).or_insert_with(|| vec![None; series.len()])[col] = Some(p.width_pp);
        }
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header = vec!["n".to_owned()];
    header.extend(series.iter().map(|(s, _)| format!("{s}_width_pp")));
    w.write_record(&header).map_err(csv_err(path))?;
    for (n, widths) in rows {
        let mut record = vec![n.to_string()];
        record.extend(widths.iter().map(|w| w.map_or_else(String::new, |v| v.to_string())));
        w.write_record(&record).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes the report into `dir`: `raw.csv`, the summary in `format`, and
/// `sweep.csv` when any strategy carries a sweep. Returns the written paths.
pub fn emit_report(report: &Report, dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>, HarnessError> {
    if report.strategies.is_empty() || report.raw.is_empty() {
        return Err(HarnessError::EmptyReport);
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();

    let raw = dir.join(RAW_CSV);
    write_raw_csv(&raw, &report.raw)?;
    written.push(raw);

    match format {
        ReportFormat::Json => {
            let path = dir.join(SUMMARY_JSON);
            fs::write(&path, report.summary_json()).map_err(io_err(&path))?;
            written.push(path);
        }
        ReportFormat::Csv => {
            let path = dir.join(SUMMARY_CSV);
            let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
            for s in &report.strategies {
                w.serialize(SummaryRow::from(s)).map_err(csv_err(&path))?;
            }
            w.flush().map_err(io_err(&path))?;
            written.push(path);
        }
    }

    if report.strategies.iter().any(|s| s.sweep.is_some()) {
        let path = dir.join(SWEEP_CSV);
        write_sweep_csv(&path, report)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_rows_round_trip() {
        let m = Measurement {
            duration_ns: 1234,
            clock_mode: ClockMode::WallClock,
            version_label: "B".into(),
            strategy: Strategy::Rmit,
            instance_id: 2,
            repetition: 17,
            cold: true,
            order_position: Some(1),
            work: None,
        };
        let mut buf = Vec::new();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.serialize(RawRow::from(&m)).unwrap();
            w.serialize(RawRow::from(&Measurement { order_position: None, ..m.clone() })).unwrap();
        }
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "strategy,instance_id,repetition,version,duration_ns,clock_mode,cold,order_position"
        );
        assert_eq!(text.lines().nth(1).unwrap(), "rmit,2,17,B,1234,wall-clock,true,1");
        let back = read_raw_csv_from(buf.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(back[0], m);
        assert_eq!(back[1].order_position, None);
    }
}
