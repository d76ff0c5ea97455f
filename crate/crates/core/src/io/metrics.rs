//! Line-delimited JSON metrics.
//!
//! Every line is one object with `"version"` and a `"record"` tag. A file
//! holds an optional `header` line followed by one `iteration` line per
//! outer iteration.
//!
//! | record      | fields                                                        |
//! |-------------|---------------------------------------------------------------|
//! | `header`    | `config` (verbatim run settings), `initial_objective`, `initial_pixel_error`, `initial_criticality`, `crossing_pairs`, `memory` |
//! | `iteration` | every [`IterationReport`] field, including per-device reports |

use crate::error::{Error, Result};
use crate::runtime::{IterationReport, MemoryAccount, RunTrace};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

pub const METRICS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsHeader {
    pub config: serde_json::Value,
    pub initial_objective: f64,
    pub initial_pixel_error: f64,
    pub initial_criticality: Option<f64>,
    pub crossing_pairs: usize,
    pub memory: Vec<MemoryAccount>,
}

impl MetricsHeader {
    /// Header for `trace`, recording `config` as given.
    pub fn from_trace(trace: &RunTrace, config: serde_json::Value) -> Self {
        Self {
            config,
            initial_objective: trace.initial_objective,
            initial_pixel_error: trace.initial_pixel_error,
            initial_criticality: Some(trace.initial_criticality).filter(|c| c.is_finite()),
            crossing_pairs: trace.crossing_pairs,
            memory: trace.memory.clone(),
        }
    }
}

/// Contents of a metrics file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsTrace {
    pub header: Option<MetricsHeader>,
    pub reports: Vec<IterationReport>,
}

impl MetricsTrace {
    /// `F(x^(k))` for `k = 0..=reports.len()`; needs the header.
    pub fn objectives(&self) -> Option<Vec<f64>> {
        let h = self.header.as_ref()?;
        Some(std::iter::once(h.initial_objective).chain(self.reports.iter().map(|r| r.objective)).collect())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Header(MetricsHeader),
    Iteration(IterationReport),
}

#[derive(Serialize)]
struct Line<'a> {
    version: u32,
    #[serde(flatten)]
    record: &'a Record,
}

fn write_record(w: &mut impl Write, record: &Record) -> Result<()> {
    let line = Line {
        version: METRICS_VERSION,
        record,
    };
    serde_json::to_writer(&mut *w, &line).map_err(|e| Error::Format(e.to_string()))?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn write_metrics(header: Option<&MetricsHeader>, reports: &[IterationReport], mut w: impl Write) -> Result<()> {
    if let Some(h) = header {
        write_record(&mut w, &Record::Header(h.clone()))?;
    }
    for r in reports {
        write_record(&mut w, &Record::Iteration(r.clone()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics_file(header: Option<&MetricsHeader>, reports: &[IterationReport], path: impl AsRef<Path>) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_metrics(header, reports, std::io::BufWriter::new(f))
}

pub fn read_metrics(r: impl BufRead) -> Result<MetricsTrace> {
    let mut trace = MetricsTrace::default();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line: i + 1, message };
        let mut value: serde_json::Value = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| parse_err("record is not a JSON object".into()))?;
        let version = obj
            .remove("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| parse_err("missing integer \"version\"".into()))?;
        if version != u64::from(METRICS_VERSION) {
            return Err(Error::SchemaVersionMismatch {
                expected: METRICS_VERSION,
                found: u32::try_from(version).unwrap_or(u32::MAX),
            });
        }
        match serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))? {
            Record::Header(h) => {
                if trace.header.is_some() || !trace.reports.is_empty() {
                    return Err(parse_err("header must be the first record".into()));
                }
                trace.header = Some(h);
            }
            Record::Iteration(r) => trace.reports.push(r),
        }
    }
    Ok(trace)
}

pub fn read_metrics_file(path: impl AsRef<Path>) -> Result<MetricsTrace> {
    let f = std::fs::File::open(path)?;
    read_metrics(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::DeviceReport;

    fn report(k: usize) -> IterationReport {
        IterationReport {
            iteration: k,
            objective: 1.0 / (k as f64 + 3.0),
            mean_pixel_error: 0.1 + k as f64 * std::f64::consts::PI,
            criticality: k.is_multiple_of(2).then_some(1e-7 / 3.0),
            step_norm: 2f64.powi(-(k as i32) - 40),
            extrapolation_gap: 0.0,
            messages: 2,
            floats_sent: 36,
            restarts: k % 2,
            devices: vec![DeviceReport {
                device: 0,
                restarted: k % 2 == 1,
                f_alpha: 0.123_456_789_012_345_68,
                fbar_alpha: -0.0,
                e_alpha: 1e300,
                delta_e: -1e-17,
                surrogate_at_current: 5e-324,
                surrogate_at_next: 7.0,
                gamma: 0.2857142857142857,
                lm_iterations: 4,
                solve_failures: 0,
            }],
        }
    }

    fn header() -> MetricsHeader {
        MetricsHeader {
            config: serde_json::json!({"devices": 2, "xi": 1e-4}),
            initial_objective: 10.5,
            initial_pixel_error: 1.25,
            initial_criticality: None,
            crossing_pairs: 1,
            memory: vec![],
        }
    }

    #[test]
    fn empty_trace_is_empty_file() {
        let mut buf = Vec::new();
        write_metrics(None, &[], &mut buf).unwrap();
        assert!(buf.is_empty());
        assert_eq!(read_metrics(buf.as_slice()).unwrap(), MetricsTrace::default());
    }

    #[test]
    fn three_records_round_trip() {
        let reports: Vec<_> = (0..3).map(report).collect();
        let mut buf = Vec::new();
        write_metrics(Some(&header()), &reports, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().all(|l| l.contains("\"version\":1")));
        let back = read_metrics(buf.as_slice()).unwrap();
        assert_eq!(back.reports, reports);
        assert_eq!(back.header, Some(header()));
        assert_eq!(back.objectives().unwrap()[0], 10.5);
        for (a, b) in back.reports.iter().zip(&reports) {
            assert_eq!(a.devices[0].fbar_alpha.to_bits(), b.devices[0].fbar_alpha.to_bits());
        }
    }

    #[test]
    fn version_mismatch() {
        let line = "{\"version\":2,\"record\":\"iteration\"}\n";
        assert!(matches!(
            read_metrics(line.as_bytes()),
            Err(Error::SchemaVersionMismatch { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn malformed_lines_are_positioned() {
        let mut buf = Vec::new();
        write_metrics(None, &[report(0)], &mut buf).unwrap();
        buf.extend_from_slice(b"{\"version\":1,\"record\":\"nope\"}\n");
        assert!(matches!(read_metrics(buf.as_slice()), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(read_metrics("[1]".as_bytes()), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(read_metrics("{\"record\":\"header\"}".as_bytes()), Err(Error::Parse { .. })));
    }

    #[test]
    fn header_after_iterations_rejected() {
        let mut buf = Vec::new();
        write_metrics(None, &[report(0)], &mut buf).unwrap();
        write_metrics(Some(&header()), &[], &mut buf).unwrap();
        assert!(matches!(read_metrics(buf.as_slice()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        write_metrics_file(Some(&header()), &[report(1)], &path).unwrap();
        assert_eq!(read_metrics_file(&path).unwrap().reports, vec![report(1)]);
        assert!(matches!(read_metrics_file(dir.path().join("absent")), Err(Error::Io(_))));
    }
}
