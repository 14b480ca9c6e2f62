//! LETOR / SVMlight ranking files: `<grade> qid:<id> <index>:<value> ... # comment`.
//!
//! Feature indices are 1-based; index `i` lands in slot `i - 1` of a dense
//! vector whose length is the largest index in the file.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use cpbm_core::dataset::{
    filter_relevant, letor_dataset, min_max_scale, synthesize_context, Dataset, LetorQuery,
};
use flate2::read::MultiGzDecoder;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, thiserror::Error)]
pub enum LetorError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no ranking data in input")]
    Empty,
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<LetorError>,
    },
    #[error(transparent)]
    Core(#[from] cpbm_core::Error),
}

struct Row {
    grade: u8,
    features: Vec<(usize, f64)>,
}

fn parse_line(text: &str, line: usize) -> Result<Option<(u64, Row)>, LetorError> {
    let err = |message: String| LetorError::Parse { line, message };
    let body = text.split('#').next().unwrap_or("").trim();
    if body.is_empty() {
        return Ok(None);
    }
    let mut tokens = body.split_whitespace();
    let grade_tok = tokens.next().expect("body is nonempty");
    let grade: i64 = grade_tok
        .parse()
        .map_err(|_| err(format!("invalid grade '{grade_tok}'")))?;
    let grade = match grade {
        0..=4 => grade as u8,
        _ => return Err(err(format!("grade {grade} outside 0..=4"))),
    };
    let qid_tok = tokens.next().ok_or_else(|| err("missing qid".into()))?;
    let qid = qid_tok
        .strip_prefix("qid:")
        .and_then(|v| v.parse::<u64>().ok())
        .ok_or_else(|| err(format!("expected qid:<integer>, got '{qid_tok}'")))?;
    let mut features = Vec::new();
    for tok in tokens {
        let (idx, val) = tok
            .split_once(':')
            .ok_or_else(|| err(format!("expected <index>:<value>, got '{tok}'")))?;
        let idx: usize = idx
            .parse()
            .map_err(|_| err(format!("invalid feature index '{idx}'")))?;
        if idx == 0 {
            return Err(err("feature indices start at 1".into()));
        }
        let val: f64 = val
            .parse()
            .map_err(|_| err(format!("invalid feature value '{val}'")))?;
        if !val.is_finite() {
            return Err(err(format!("non-finite feature value '{val}'")));
        }
        features.push((idx, val));
    }
    Ok(Some((qid, Row { grade, features })))
}

/// Parses a whole file; queries come out in order of first appearance.
pub fn parse_letor<R: BufRead>(input: R) -> Result<Vec<LetorQuery>, LetorError> {
    let mut order: Vec<u64> = Vec::new();
    let mut rows: HashMap<u64, Vec<Row>> = HashMap::new();
    let mut dim = 0;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if let Some((qid, row)) = parse_line(&line, i + 1)? {
            dim = row.features.iter().map(|&(j, _)| j).fold(dim, usize::max);
            rows.entry(qid)
                .or_insert_with(|| {
                    order.push(qid);
                    Vec::new()
                })
                .push(row);
        }
    }
    if order.is_empty() {
        return Err(LetorError::Empty);
    }
    Ok(order
        .into_iter()
        .map(|qid| {
            let rows = rows.remove(&qid).expect("every qid has rows");
            let mut features = Vec::with_capacity(rows.len());
            let mut grades = Vec::with_capacity(rows.len());
            for r in rows {
                let mut x = vec![0.0; dim];
                for (j, v) in r.features {
                    x[j - 1] = v;
                }
                features.push(x);
                grades.push(r.grade);
            }
            LetorQuery {
                query_id: qid,
                features,
                grades,
            }
        })
        .collect())
}

/// Opens a plain or gzip-compressed file (detected by its magic bytes).
pub fn open_letor(path: &Path) -> Result<Vec<LetorQuery>, LetorError> {
    let wrap = |e: LetorError| LetorError::File {
        path: path.to_owned(),
        source: Box::new(e),
    };
    let mut file = File::open(path).map_err(|e| wrap(e.into()))?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic).map_err(|e| wrap(e.into()))?;
    let file = File::open(path).map_err(|e| wrap(e.into()))?;
    if n == 2 && magic == [0x1f, 0x8b] {
        parse_letor(BufReader::new(MultiGzDecoder::new(file))).map_err(wrap)
    } else {
        parse_letor(BufReader::new(file)).map_err(wrap)
    }
}

/// Pads every feature vector to `dim` entries.
fn pad(queries: &mut [LetorQuery], dim: usize) {
    for q in queries {
        for x in &mut q.features {
            x.resize(dim, 0.0);
        }
    }
}

/// Train and test splits ready for context synthesis.
#[derive(Debug, Clone)]
pub struct LetorSplits {
    pub train: Vec<LetorQuery>,
    pub test: Vec<LetorQuery>,
    /// Queries dropped for having fewer items than positions.
    pub too_short: usize,
}

/// Reads both splits, drops queries without relevant items or with fewer
/// than `positions` items, and min-max scales features with train ranges.
pub fn load_splits(train: &Path, test: &Path, positions: usize) -> Result<LetorSplits, LetorError> {
    let mut tr = filter_relevant(open_letor(train)?);
    let mut te = filter_relevant(open_letor(test)?);
    let before = tr.len() + te.len();
    tr.retain(|q| q.features.len() >= positions);
    te.retain(|q| q.features.len() >= positions);
    let too_short = before - tr.len() - te.len();
    if tr.is_empty() || te.is_empty() {
        return Err(LetorError::Empty);
    }
    let dim = tr
        .iter()
        .chain(&te)
        .map(LetorQuery::feature_dim)
        .max()
        .unwrap_or(0);
    pad(&mut tr, dim);
    pad(&mut te, dim);
    let fit_on = tr.clone();
    min_max_scale(&fit_on, &mut [&mut tr, &mut te]);
    Ok(LetorSplits {
        train: tr,
        test: te,
        too_short,
    })
}

/// Synthesizes contexts over both splits with one feature selection and
/// assembles the dataset.
pub fn build_dataset(
    splits: &LetorSplits,
    sigma: f64,
    positions: usize,
    irrelevant_click_prob: f64,
    seed: u64,
) -> Result<Dataset, LetorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<LetorQuery> = splits.train.iter().chain(&splits.test).cloned().collect();
    let synth = synthesize_context(&all, sigma, positions, &mut rng)?;
    let (train_ctx, test_ctx) = synth.contexts.split_at(splits.train.len());
    Ok(letor_dataset(
        &splits.train,
        train_ctx,
        &splits.test,
        test_ctx,
        positions,
        irrelevant_click_prob,
    )?)
}
