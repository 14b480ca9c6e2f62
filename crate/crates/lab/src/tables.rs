//! Delimited output tables.

use std::io::Write;

use cpbm_core::ranker::TrajectoryPoint;
use serde::{Deserialize, Serialize};

/// One row of a metric table. `seed` is empty for rows aggregated over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub estimator: String,
    pub eta: f64,
    pub device_prob: Option<f64>,
    pub seed: Option<u64>,
    pub metric: String,
    pub value: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

/// An estimator that was not run on a cell, and why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipRow {
    pub estimator: String,
    pub eta: f64,
    pub device_prob: Option<f64>,
    pub seed: u64,
    pub randomized: bool,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub estimator: String,
    pub position: usize,
    pub mean_examination: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryRow {
    query_index: usize,
    dcg_at_k: f64,
    precision_at_k: f64,
}

const METRIC_HEADER: [&str; 8] = [
    "estimator",
    "eta",
    "device_prob",
    "seed",
    "metric",
    "value",
    "ci_low",
    "ci_high",
];

/// Writes rows with a header, even when there are none.
pub fn write_rows<W: Write, T: Serialize>(out: W, header: &[&str], rows: &[T]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics<W: Write>(out: W, rows: &[MetricRow]) -> csv::Result<()> {
    write_rows(out, &METRIC_HEADER, rows)
}

pub fn write_skips<W: Write>(out: W, rows: &[SkipRow]) -> csv::Result<()> {
    write_rows(
        out,
        &["estimator", "eta", "device_prob", "seed", "randomized", "reason"],
        rows,
    )
}

pub fn write_curves<W: Write>(out: W, rows: &[CurveRow]) -> csv::Result<()> {
    write_rows(out, &["estimator", "position", "mean_examination"], rows)
}

pub fn write_trajectory<W: Write>(out: W, points: &[TrajectoryPoint]) -> csv::Result<()> {
    let rows: Vec<TrajectoryRow> = points
        .iter()
        .map(|p| TrajectoryRow {
            query_index: p.query_index,
            dcg_at_k: p.dcg,
            precision_at_k: p.precision,
        })
        .collect();
    write_rows(out, &["query_index", "dcg_at_k", "precision_at_k"], &rows)
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(input: &[u8]) -> csv::Result<Vec<T>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_rows_round_trip_with_blanks() {
        let rows = vec![
            MetricRow {
                estimator: "ctr".into(),
                eta: 0.5,
                device_prob: None,
                seed: Some(3),
                metric: "relative_error".into(),
                value: 0.25,
                ci_low: Some(0.2),
                ci_high: Some(0.3),
            },
            MetricRow {
                estimator: "ctr".into(),
                eta: 0.5,
                device_prob: Some(0.1),
                seed: None,
                metric: "relative_error".into(),
                value: 0.25,
                ci_low: None,
                ci_high: None,
            },
        ];
        let mut buf = Vec::new();
        write_metrics(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("estimator,eta,device_prob,seed,metric,value,ci_low,ci_high\n"));
        assert!(text.contains("ctr,0.5,,3,relative_error,0.25,0.2,0.3\n"));
        assert_eq!(read_rows::<MetricRow>(&buf).unwrap(), rows);
    }

    #[test]
    fn trajectory_columns() {
        let mut buf = Vec::new();
        write_trajectory(
            &mut buf,
            &[TrajectoryPoint {
                query_index: 0,
                dcg: 1.5,
                precision: 0.5,
            }],
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "query_index,dcg_at_k,precision_at_k\n0,1.5,0.5\n"
        );
    }

    #[test]
    fn empty_tables_keep_the_header() {
        let mut buf = Vec::new();
        write_skips(&mut buf, &[]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "estimator,eta,device_prob,seed,randomized,reason\n"
        );
    }
}
