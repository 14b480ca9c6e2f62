//! Line-delimited JSON click logs: a header line, then one record per line.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use cpbm_core::click_model::{ClickLog, ClickRecord, Parity, SwapAnnotation};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("log has no header line")]
    MissingHeader,
}

/// First line of a log file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogHeader {
    pub k: usize,
    pub dq: usize,
    pub dd: usize,
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    query_id: u64,
    context: Vec<f64>,
    items: Vec<Vec<f64>>,
    clicks: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    swap_parity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    swapped_pairs: Option<Vec<usize>>,
}

pub fn write_log<W: Write>(mut out: W, log: &ClickLog, config_hash: &str, seed: u64) -> Result<(), LogError> {
    let header = LogHeader {
        k: log.positions,
        dq: log.context_dim,
        dd: log.item_dim,
        config_hash: config_hash.to_owned(),
        seed,
    };
    serde_json::to_writer(&mut out, &header).map_err(|source| LogError::Json { line: 1, source })?;
    out.write_all(b"\n")?;
    for (i, r) in log.records.iter().enumerate() {
        let line = RecordLine {
            query_id: r.query_id,
            context: r.context.clone(),
            items: r.items.clone(),
            clicks: r.clicks.clone(),
            swap_parity: r.swap.as_ref().map(|s| s.parity.as_str().to_owned()),
            swapped_pairs: r.swap.as_ref().map(|s| s.swapped_pairs.clone()),
        };
        serde_json::to_writer(&mut out, &line).map_err(|source| LogError::Json { line: i + 2, source })?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn parse_parity(s: &str, line: usize) -> Result<Parity, LogError> {
    match s {
        "odd" => Ok(Parity::Odd),
        "even" => Ok(Parity::Even),
        other => Err(LogError::Invalid {
            line,
            message: format!("unknown swap parity '{other}'"),
        }),
    }
}

pub fn read_log<R: BufRead>(input: R) -> Result<(LogHeader, ClickLog), LogError> {
    let mut lines = input.lines().enumerate();
    let header: LogHeader = loop {
        match lines.next() {
            None => return Err(LogError::MissingHeader),
            Some((_, l)) if l.as_ref().is_ok_and(|l| l.trim().is_empty()) => continue,
            Some((i, l)) => {
                break serde_json::from_str(&l?).map_err(|source| LogError::Json { line: i + 1, source })?
            }
        }
    };
    let mut log = ClickLog::new(header.k, header.dq, header.dd);
    for (i, l) in lines {
        let l = l?;
        if l.trim().is_empty() {
            continue;
        }
        let line = i + 1;
        let r: RecordLine = serde_json::from_str(&l).map_err(|source| LogError::Json { line, source })?;
        let swap = match (r.swap_parity, r.swapped_pairs) {
            (None, None) => None,
            (Some(p), pairs) => Some(SwapAnnotation {
                parity: parse_parity(&p, line)?,
                swapped_pairs: pairs.unwrap_or_default(),
            }),
            (None, Some(_)) => {
                return Err(LogError::Invalid {
                    line,
                    message: "swapped_pairs without swap_parity".into(),
                })
            }
        };
        log.push(ClickRecord {
            query_id: r.query_id,
            context: r.context,
            items: r.items,
            clicks: r.clicks,
            swap,
        })
        .map_err(|e| LogError::Invalid {
            line,
            message: e.to_string(),
        })?;
    }
    Ok((header, log))
}

pub fn read_log_file(path: &Path) -> Result<(LogHeader, ClickLog), LogError> {
    read_log(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ClickLog {
        let mut log = ClickLog::new(2, 1, 2);
        log.push(ClickRecord {
            query_id: 4,
            context: vec![0.1],
            items: vec![vec![1.0, -2.5], vec![0.3333333333333333, 1e-300]],
            clicks: vec![1, 0],
            swap: Some(SwapAnnotation {
                parity: Parity::Odd,
                swapped_pairs: vec![0],
            }),
        })
        .unwrap();
        log.push(ClickRecord {
            query_id: 5,
            context: vec![-0.7],
            items: vec![vec![0.0, 0.0], vec![1.0, 1.0]],
            clicks: vec![0, 0],
            swap: Some(SwapAnnotation {
                parity: Parity::Even,
                swapped_pairs: vec![],
            }),
        })
        .unwrap();
        log
    }

    #[test]
    fn round_trip_is_exact() {
        let log = sample();
        let mut buf = Vec::new();
        write_log(&mut buf, &log, "abc", 7).unwrap();
        let (h, back) = read_log(buf.as_slice()).unwrap();
        assert_eq!(back, log);
        assert_eq!(h.seed, 7);
        assert_eq!(h.config_hash, "abc");
        assert_eq!((h.k, h.dq, h.dd), (2, 1, 2));
    }

    #[test]
    fn plain_records_omit_swap_fields() {
        let mut log = sample();
        log.records.iter_mut().for_each(|r| r.swap = None);
        let mut buf = Vec::new();
        write_log(&mut buf, &log, "h", 0).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(!text.contains("swap"));
        let first = text.lines().nth(1).unwrap();
        assert_eq!(
            first,
            r#"{"query_id":4,"context":[0.1],"items":[[1.0,-2.5],[0.3333333333333333,1e-300]],"clicks":[1,0]}"#
        );
    }

    #[test]
    fn errors_carry_line_numbers() {
        let good = r#"{"k":2,"dq":1,"dd":1,"config_hash":"h","seed":0}"#;
        let bad_clicks = format!(
            "{good}\n{}",
            r#"{"query_id":1,"context":[0.0],"items":[[1.0],[2.0]],"clicks":[1,2]}"#
        );
        match read_log(bad_clicks.as_bytes()) {
            Err(LogError::Invalid { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        let bad_json = format!("{good}\n\n{{oops");
        assert!(matches!(
            read_log(bad_json.as_bytes()),
            Err(LogError::Json { line: 3, .. })
        ));
        assert!(matches!(read_log("".as_bytes()), Err(LogError::MissingHeader)));
        let bad_parity = format!(
            "{good}\n{}",
            r#"{"query_id":1,"context":[0.0],"items":[[1.0],[2.0]],"clicks":[1,0],"swap_parity":"both","swapped_pairs":[]}"#
        );
        assert!(matches!(
            read_log(bad_parity.as_bytes()),
            Err(LogError::Invalid { line: 2, .. })
        ));
    }
}
