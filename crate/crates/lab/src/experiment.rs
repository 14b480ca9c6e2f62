//! The experiment grid: log generation, estimation, online LTR and sweeps.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use anyhow::{anyhow, bail, Context};
use cpbm_core::click_model::sample_bias_weights;
use cpbm_core::click_model::{ExaminationModel, FlatBias, GroundTruthBias};
use cpbm_core::dataset::{augment_device, generate_sinbin, Dataset, DeviceConfig, SinbinConfig};
use cpbm_core::estimators::{fit_estimator, EmConfig, EstimatorKind, Fitted, PartitionKey};
use cpbm_core::math::{derive_seed, mean};
use cpbm_core::metrics::{bootstrap_ci, mean_curve, relative_errors, Normalization};
use cpbm_core::nn::AdamConfig;
use cpbm_core::ranker::{generate_click_log, run_online_ltr, LinTsConfig, TrajectoryPoint};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{DatasetSpec, ExperimentConfig};
use crate::letor::{build_dataset, load_splits, LetorSplits};
use crate::logio::{read_log_file, write_log};
use crate::snapshot::{bias_snapshot, MlpSnapshot, PredictorFile};
use crate::tables::{
    read_rows, write_curves, write_metrics, write_skips, write_trajectory, CurveRow, MetricRow, SkipRow,
};

const TAG_BIAS: u64 = 1;
const TAG_LOG: u64 = 2;
const TAG_DEVICE: u64 = 3;
const TAG_FIT: u64 = 4;
const TAG_LTR: u64 = 5;
const TAG_BOOT: u64 = 6;
const TAG_CONTEXT: u64 = 7;

pub const METRIC_RELATIVE_ERROR: &str = "relative_error";
pub const METRIC_RELATIVE_ERROR_PLAIN: &str = "relative_error_plain";
pub const METRIC_RANDOMIZATION_DIFF: &str = "relative_error_diff";

/// One point of the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub eta: f64,
    pub device_prob: Option<f64>,
    pub seed: u64,
    pub randomized: bool,
}

impl Cell {
    pub fn id(&self) -> String {
        let dev = self
            .device_prob
            .map_or_else(|| "none".to_owned(), |p| p.to_string());
        let mode = if self.randomized { "rand" } else { "plain" };
        format!("eta{}_dev{dev}_seed{}_{mode}", self.eta, self.seed)
    }

    fn error_metric(&self) -> &'static str {
        if self.randomized {
            METRIC_RELATIVE_ERROR
        } else {
            METRIC_RELATIVE_ERROR_PLAIN
        }
    }
}

/// Dataset, true examination model and partition key of one cell.
pub struct World {
    pub dataset: Dataset,
    pub truth: GroundTruthBias,
    pub partition: PartitionKey,
}

/// Metric, estimator, eta bits and device-probability bits.
type GroupKey = (String, String, u64, Option<u64>);

pub struct Lab {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub workers: usize,
    hash: String,
    letor: OnceLock<Result<LetorSplits, String>>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(
    path: &Path,
    write: impl FnOnce(&mut dyn Write) -> anyhow::Result<()>,
) -> anyhow::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let tmp =
        tempfile::NamedTempFile::new_in(dir).with_context(|| format!("cannot write in {}", dir.display()))?;
    let mut w = BufWriter::new(tmp);
    write(&mut w)?;
    let tmp = w.into_inner().map_err(|e| e.into_error())?;
    tmp.persist(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn estimator_index(kind: EstimatorKind) -> u64 {
    EstimatorKind::ALL
        .iter()
        .position(|k| *k == kind)
        .expect("kind is listed") as u64
}

fn mean_and_ci(values: &[f64], iterations: usize, level: f64, seed: u64) -> anyhow::Result<(f64, f64, f64)> {
    let m = mean(values).ok_or_else(|| anyhow!("no values to summarize"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = bootstrap_ci(values, iterations, level, &mut rng)?;
    Ok((m, lo, hi))
}

impl Lab {
    pub fn new(config: ExperimentConfig, out: PathBuf, workers: usize) -> anyhow::Result<Self> {
        config.validate()?;
        let hash = config.hash();
        Ok(Self {
            config,
            out,
            workers: workers.max(1),
            hash,
            letor: OnceLock::new(),
        })
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn cells(&self) -> Vec<Cell> {
        let devices: Vec<Option<f64>> = if self.config.device_probs.is_empty() {
            vec![None]
        } else {
            self.config.device_probs.iter().copied().map(Some).collect()
        };
        let mut cells = Vec::new();
        for &eta in &self.config.etas {
            for &device_prob in &devices {
                for &seed in &self.config.seeds {
                    for &randomized in self.config.randomization.modes() {
                        cells.push(Cell {
                            eta,
                            device_prob,
                            seed,
                            randomized,
                        });
                    }
                }
            }
        }
        cells
    }

    /// Seed of a replicate; shared by every cell with that seed so cells
    /// differing only in `eta`, device probability or randomization are paired.
    fn replicate_seed(&self, seed: u64) -> u64 {
        derive_seed(self.config.master_seed, seed)
    }

    fn ranker_config(&self) -> LinTsConfig {
        LinTsConfig {
            lambda: self.config.ranker.lambda,
            noise: self.config.ranker.noise,
        }
    }

    fn normalization(&self) -> Normalization {
        if self.config.estimation.normalize {
            Normalization::FirstPosition
        } else {
            Normalization::Raw
        }
    }

    pub fn log_path(&self, cell: &Cell) -> PathBuf {
        self.out.join("logs").join(format!("{}.jsonl", cell.id()))
    }

    pub fn model_path(&self, cell: &Cell, estimator: &str) -> PathBuf {
        self.out
            .join("models")
            .join(cell.id())
            .join(format!("{estimator}.json"))
    }

    pub fn curves_path(&self, cell: &Cell) -> PathBuf {
        self.out.join("curves").join(format!("{}.csv", cell.id()))
    }

    pub fn trajectory_path(&self, cell: &Cell, predictor: &str) -> PathBuf {
        self.out
            .join("trajectories")
            .join(cell.id())
            .join(format!("{predictor}.csv"))
    }

    fn cell_dir(&self, cell: &Cell) -> PathBuf {
        self.out.join("cells").join(cell.id())
    }

    fn letor_splits(&self, train: &Path, test: &Path, positions: usize) -> anyhow::Result<&LetorSplits> {
        self.letor
            .get_or_init(|| {
                load_splits(&self.config.resolve(train), &self.config.resolve(test), positions)
                    .map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| anyhow!("invalid LETOR input: {e}"))
    }

    pub fn world(&self, cell: &Cell) -> anyhow::Result<World> {
        let rs = self.replicate_seed(cell.seed);
        let (mut dataset, mut truth) = match &self.config.dataset {
            DatasetSpec::Sinbin {
                n_queries,
                n_test_queries,
                n_items,
                item_dim,
                positions,
            } => {
                let s = generate_sinbin(&SinbinConfig {
                    n_queries: *n_queries,
                    n_test_queries: *n_test_queries,
                    n_items: *n_items,
                    context_dim: 10,
                    item_dim: *item_dim,
                    positions: *positions,
                    eta: cell.eta,
                    seed: rs,
                })?;
                (s.dataset, s.bias)
            }
            DatasetSpec::Letor {
                train_path,
                test_path,
                sigma,
                positions,
                irrelevant_click_prob,
            } => {
                let splits = self.letor_splits(train_path, test_path, *positions)?;
                let dataset = build_dataset(
                    splits,
                    *sigma,
                    *positions,
                    *irrelevant_click_prob,
                    derive_seed(rs, TAG_CONTEXT),
                )?;
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(rs, TAG_BIAS));
                let truth = sample_bias_weights(dataset.context_dim(), cell.eta, *positions, &mut rng)?;
                (dataset, truth)
            }
        };
        let mut partition = PartitionKey::Single;
        if let Some(device_prob) = cell.device_prob {
            let base_dim = dataset.context_dim();
            let contexts: Vec<Vec<f64>> = dataset
                .train
                .iter()
                .chain(&dataset.test)
                .map(|q| q.context.clone())
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(rs, TAG_DEVICE));
            let aug = augment_device(
                &contexts,
                &DeviceConfig {
                    device_prob,
                    eta: cell.eta,
                },
                dataset.positions,
                &mut rng,
            )?;
            for (q, c) in dataset
                .train
                .iter_mut()
                .chain(&mut dataset.test)
                .zip(aug.contexts)
            {
                q.context = c;
            }
            truth = aug.bias;
            partition = PartitionKey::OneHot {
                start: base_dim,
                len: 2,
            };
        }
        Ok(World {
            dataset,
            truth,
            partition,
        })
    }

    pub fn generate_cell(&self, cell: &Cell, world: &World) -> anyhow::Result<Vec<PathBuf>> {
        let rs = self.replicate_seed(cell.seed);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(rs, TAG_LOG));
        let log = generate_click_log(
            &world.dataset,
            &world.dataset.train,
            &world.truth,
            self.ranker_config(),
            cell.randomized,
            &mut rng,
        )?;
        let path = self.log_path(cell);
        write_atomic(&path, |w| Ok(write_log(w, &log, &self.hash, rs)?))?;
        Ok(vec![path])
    }

    fn em_config(&self, seed: u64) -> EmConfig {
        let e = &self.config.estimation;
        EmConfig {
            epochs: e.epochs,
            batch_size: e.batch_size,
            seed,
            adam: AdamConfig {
                learning_rate: e.learning_rate,
                ..AdamConfig::default()
            },
            ..EmConfig::default()
        }
    }

    pub fn estimate_cell(&self, cell: &Cell, world: &World) -> anyhow::Result<Vec<PathBuf>> {
        let path = self.log_path(cell);
        if !path.exists() {
            bail!("missing log file {}", path.display());
        }
        let (_, log) = read_log_file(&path).with_context(|| format!("in {}", path.display()))?;
        let rs = self.replicate_seed(cell.seed);
        let fit_seed = derive_seed(rs, TAG_FIT);
        let em = self.em_config(fit_seed);
        let est = &self.config.estimation;
        let contexts = log.contexts();
        let norm = self.normalization();
        let steps = (est.epochs * log.len().div_ceil(est.batch_size)) as u64;

        let mut written = Vec::new();
        let mut metrics = Vec::new();
        let mut skips = Vec::new();
        let mut curves: Vec<CurveRow> = mean_curve(&world.truth, &contexts, Normalization::Raw)
            .into_iter()
            .enumerate()
            .map(|(k, v)| CurveRow {
                estimator: "truth".into(),
                position: k + 1,
                mean_examination: v,
            })
            .collect();
        let skip = |name: &str, reason: String| SkipRow {
            estimator: name.to_owned(),
            eta: cell.eta,
            device_prob: cell.device_prob,
            seed: cell.seed,
            randomized: cell.randomized,
            reason,
        };

        for name in &self.config.estimators {
            let kind: EstimatorKind = name.parse()?;
            if kind.needs_swap_annotations() && !log.is_randomized() {
                skips.push(skip(name, "log has no swap annotations".into()));
                continue;
            }
            let Fitted { bias, relevance } = match fit_estimator(kind, &log, &em, &world.partition) {
                Ok(f) => f,
                Err(e) => {
                    skips.push(skip(name, format!("fit failed: {e}")));
                    continue;
                }
            };
            let network_steps = if kind.is_contextual() || relevance.is_some() {
                steps
            } else {
                0
            };
            let file = PredictorFile {
                estimator: name.clone(),
                normalization: match norm {
                    Normalization::FirstPosition => "first-position".into(),
                    Normalization::Raw => "raw".into(),
                },
                epochs: est.epochs,
                batch_size: est.batch_size,
                learning_rate: est.learning_rate,
                seed: fit_seed,
                bias: bias_snapshot(&bias, fit_seed, network_steps),
                relevance: relevance
                    .as_ref()
                    .map(|g| MlpSnapshot::new(&g.model, fit_seed, network_steps)),
            };
            let model_path = self.model_path(cell, name);
            write_atomic(&model_path, |w| Ok(w.write_all(file.to_json().as_bytes())?))?;
            written.push(model_path);

            let errors = relative_errors(&bias, &world.truth, &contexts, norm)?;
            let (value, lo, hi) = mean_and_ci(
                &errors,
                est.bootstrap_iterations,
                est.ci_level,
                derive_seed(derive_seed(rs, TAG_BOOT), estimator_index(kind)),
            )?;
            metrics.push(MetricRow {
                estimator: name.clone(),
                eta: cell.eta,
                device_prob: cell.device_prob,
                seed: Some(cell.seed),
                metric: cell.error_metric().into(),
                value,
                ci_low: Some(lo),
                ci_high: Some(hi),
            });
            curves.extend(
                mean_curve(&bias, &contexts, norm)
                    .into_iter()
                    .enumerate()
                    .map(|(k, v)| CurveRow {
                        estimator: name.clone(),
                        position: k + 1,
                        mean_examination: v,
                    }),
            );
        }

        let dir = self.cell_dir(cell);
        for (path, result) in [
            (dir.join("relative_error.csv"), {
                let m = &metrics;
                Box::new(move |w: &mut dyn Write| Ok(write_metrics(w, m)?))
                    as Box<dyn FnOnce(&mut dyn Write) -> anyhow::Result<()>>
            }),
            (dir.join("skipped.csv"), {
                let s = &skips;
                Box::new(move |w: &mut dyn Write| Ok(write_skips(w, s)?))
            }),
            (self.curves_path(cell), {
                let c = &curves;
                Box::new(move |w: &mut dyn Write| Ok(write_curves(w, c)?))
            }),
        ] {
            write_atomic(&path, result)?;
            written.push(path);
        }
        Ok(written)
    }

    /// Whether online LTR runs on this cell: only on the first randomization
    /// mode, so each replicate is evaluated once.
    fn runs_ltr(&self, cell: &Cell) -> bool {
        !self.config.ltr.predictors.is_empty() && cell.randomized == self.config.randomization.modes()[0]
    }

    fn load_bias(
        &self,
        cell: &Cell,
        world: &World,
        name: &str,
    ) -> anyhow::Result<Box<dyn ExaminationModel + Send + Sync>> {
        Ok(match name {
            "flat" => Box::new(FlatBias {
                positions: world.dataset.positions,
            }),
            "truth" => Box::new(world.truth.clone()),
            _ => {
                let path = self.model_path(cell, name);
                let text = fs::read_to_string(&path)
                    .with_context(|| format!("missing predictor file {}", path.display()))?;
                Box::new(PredictorFile::from_json(&text)?.bias.to_predictor()?)
            }
        })
    }

    pub fn ltr_cell(&self, cell: &Cell, world: &World) -> anyhow::Result<Vec<PathBuf>> {
        if !self.runs_ltr(cell) {
            return Ok(Vec::new());
        }
        let rs = self.replicate_seed(cell.seed);
        let est = &self.config.estimation;
        let n = self
            .config
            .ltr
            .n_queries
            .map_or(world.dataset.test.len(), |n| n.min(world.dataset.test.len()));
        let queries = &world.dataset.test[..n];
        let mut written = Vec::new();
        let mut rows = Vec::new();
        for (p_idx, name) in self.config.ltr.predictors.iter().enumerate() {
            let bias = self.load_bias(cell, world, name)?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(rs, TAG_LTR));
            let traj = run_online_ltr(
                &world.dataset,
                queries,
                bias.as_ref(),
                &world.truth,
                self.ranker_config(),
                &mut rng,
            )?;
            let path = self.trajectory_path(cell, name);
            write_atomic(&path, |w| Ok(write_trajectory(w, &traj)?))?;
            written.push(path);
            rows.extend(self.trajectory_rows(
                cell,
                name,
                &traj,
                derive_seed(derive_seed(rs, TAG_BOOT), 100 + p_idx as u64),
            )?);
        }
        let _ = est;
        let path = self.cell_dir(cell).join("ltr.csv");
        write_atomic(&path, |w| Ok(write_metrics(w, &rows)?))?;
        written.push(path);
        Ok(written)
    }

    fn trajectory_rows(
        &self,
        cell: &Cell,
        name: &str,
        traj: &[TrajectoryPoint],
        seed: u64,
    ) -> anyhow::Result<Vec<MetricRow>> {
        let est = &self.config.estimation;
        let mut rows = Vec::new();
        if traj.is_empty() {
            return Ok(rows);
        }
        let tail = traj.len() - (traj.len() / 10).max(1);
        let series: [(&str, Vec<f64>); 4] = [
            ("dcg_at_k", traj.iter().map(|p| p.dcg).collect()),
            ("precision_at_k", traj.iter().map(|p| p.precision).collect()),
            ("dcg_at_k_last10pct", traj[tail..].iter().map(|p| p.dcg).collect()),
            (
                "precision_at_k_last10pct",
                traj[tail..].iter().map(|p| p.precision).collect(),
            ),
        ];
        for (i, (metric, values)) in series.iter().enumerate() {
            let (value, lo, hi) = mean_and_ci(
                values,
                est.bootstrap_iterations,
                est.ci_level,
                derive_seed(seed, i as u64),
            )?;
            rows.push(MetricRow {
                estimator: name.to_owned(),
                eta: cell.eta,
                device_prob: cell.device_prob,
                seed: Some(cell.seed),
                metric: (*metric).into(),
                value,
                ci_low: Some(lo),
                ci_high: Some(hi),
            });
        }
        Ok(rows)
    }

    fn pool(&self) -> anyhow::Result<rayon::ThreadPool> {
        Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()?)
    }

    fn for_each_cell<T: Send>(
        &self,
        cells: &[Cell],
        f: impl Fn(&Cell) -> anyhow::Result<T> + Sync,
    ) -> anyhow::Result<Vec<anyhow::Result<T>>> {
        let pool = self.pool()?;
        Ok(pool.install(|| cells.par_iter().map(&f).collect()))
    }

    fn all_ok<T>(cells: &[Cell], results: Vec<anyhow::Result<T>>) -> anyhow::Result<Vec<T>> {
        let mut out = Vec::new();
        let mut failures = Vec::new();
        for (c, r) in cells.iter().zip(results) {
            match r {
                Ok(v) => out.push(v),
                Err(e) => failures.push(format!("{}: {e:#}", c.id())),
            }
        }
        if failures.is_empty() {
            Ok(out)
        } else {
            bail!("{} cell(s) failed:\n{}", failures.len(), failures.join("\n"))
        }
    }

    pub fn generate(&self) -> anyhow::Result<Vec<PathBuf>> {
        let cells = self.cells();
        let r = self.for_each_cell(&cells, |c| self.generate_cell(c, &self.world(c)?))?;
        Ok(Self::all_ok(&cells, r)?.concat())
    }

    pub fn estimate(&self) -> anyhow::Result<Vec<PathBuf>> {
        let cells = self.cells();
        let r = self.for_each_cell(&cells, |c| self.estimate_cell(c, &self.world(c)?))?;
        let mut files = Self::all_ok(&cells, r)?.concat();
        files.extend(self.aggregate(&cells)?);
        Ok(files)
    }

    pub fn ltr(&self) -> anyhow::Result<Vec<PathBuf>> {
        if self.config.ltr.predictors.is_empty() {
            bail!("no LTR predictors configured");
        }
        let cells = self.cells();
        let r = self.for_each_cell(&cells, |c| self.ltr_cell(c, &self.world(c)?))?;
        let mut files = Self::all_ok(&cells, r)?.concat();
        files.extend(self.aggregate(&cells)?);
        Ok(files)
    }

    fn run_cell(&self, cell: &Cell) -> anyhow::Result<Vec<PathBuf>> {
        let world = self.world(cell)?;
        let mut files = self.generate_cell(cell, &world)?;
        files.extend(self.estimate_cell(cell, &world)?);
        files.extend(self.ltr_cell(cell, &world)?);
        Ok(files)
    }

    fn read_cell_table<T: for<'de> Deserialize<'de>>(
        &self,
        cell: &Cell,
        name: &str,
    ) -> anyhow::Result<Vec<T>> {
        let path = self.cell_dir(cell).join(name);
        if !path.exists() {
            return Ok(Vec::new());
        }
        let bytes = fs::read(&path)?;
        read_rows(&bytes).with_context(|| format!("in {}", path.display()))
    }

    /// Rows averaged over seeds, with bootstrap intervals over the per-seed values.
    fn seed_summaries(&self, rows: &[MetricRow], salt: u64) -> anyhow::Result<Vec<MetricRow>> {
        let mut groups: Vec<(GroupKey, Vec<f64>)> = Vec::new();
        for r in rows {
            let key = (
                r.metric.clone(),
                r.estimator.clone(),
                r.eta.to_bits(),
                r.device_prob.map(f64::to_bits),
            );
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, v)) => v.push(r.value),
                None => groups.push((key, vec![r.value])),
            }
        }
        let est = &self.config.estimation;
        groups
            .into_iter()
            .enumerate()
            .map(|(i, ((metric, estimator, eta, dev), values))| {
                let seed = derive_seed(derive_seed(self.config.master_seed, TAG_BOOT + salt), i as u64);
                let (value, lo, hi) = mean_and_ci(&values, est.bootstrap_iterations, est.ci_level, seed)?;
                Ok(MetricRow {
                    estimator,
                    eta: f64::from_bits(eta),
                    device_prob: dev.map(f64::from_bits),
                    seed: None,
                    metric,
                    value,
                    ci_low: Some(lo),
                    ci_high: Some(hi),
                })
            })
            .collect()
    }

    /// Rebuilds the grid-level tables from the per-cell files of `cells`.
    pub fn aggregate(&self, cells: &[Cell]) -> anyhow::Result<Vec<PathBuf>> {
        let tables = self.out.join("tables");
        let mut errors: Vec<MetricRow> = Vec::new();
        let mut skips: Vec<SkipRow> = Vec::new();
        let mut ltr: Vec<MetricRow> = Vec::new();
        for c in cells {
            errors.extend(self.read_cell_table::<MetricRow>(c, "relative_error.csv")?);
            skips.extend(self.read_cell_table::<SkipRow>(c, "skipped.csv")?);
            ltr.extend(self.read_cell_table::<MetricRow>(c, "ltr.csv")?);
        }

        let mut diffs = Vec::new();
        for r in errors.iter().filter(|r| r.metric == METRIC_RELATIVE_ERROR) {
            if let Some(p) = errors.iter().find(|p| {
                p.metric == METRIC_RELATIVE_ERROR_PLAIN
                    && p.estimator == r.estimator
                    && p.eta == r.eta
                    && p.device_prob == r.device_prob
                    && p.seed == r.seed
            }) {
                diffs.push(MetricRow {
                    metric: METRIC_RANDOMIZATION_DIFF.into(),
                    value: r.value - p.value,
                    ci_low: None,
                    ci_high: None,
                    ..r.clone()
                });
            }
        }

        let mut written = Vec::new();
        let error_summary = self.seed_summaries(&errors, 0)?;
        let diff_summary = self.seed_summaries(&diffs, 1)?;
        let ltr_summary = self.seed_summaries(&ltr, 2)?;
        for (name, mut rows, summary) in [
            ("relative_error.csv", errors, error_summary),
            ("randomization_diff.csv", diffs, diff_summary),
            ("ltr.csv", ltr, ltr_summary),
        ] {
            rows.extend(summary);
            let path = tables.join(name);
            write_atomic(&path, |w| Ok(write_metrics(w, &rows)?))?;
            written.push(path);
        }
        let path = tables.join("skipped.csv");
        write_atomic(&path, |w| Ok(write_skips(w, &skips)?))?;
        written.push(path);
        Ok(written)
    }

    fn relative(&self, path: &Path) -> String {
        path.strip_prefix(&self.out)
            .unwrap_or(path)
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/")
    }

    fn inventory(&self, files: &[PathBuf]) -> anyhow::Result<BTreeMap<String, String>> {
        files
            .iter()
            .map(|p| Ok((self.relative(p), sha256_hex(&fs::read(p)?))))
            .collect()
    }

    fn manifest_path(&self) -> PathBuf {
        self.out.join("manifest.json")
    }

    fn load_manifest(&self) -> Option<Manifest> {
        let text = fs::read_to_string(self.manifest_path()).ok()?;
        serde_json::from_str::<Manifest>(&text)
            .ok()
            .filter(|m| m.config_hash == self.hash)
    }

    fn still_valid(&self, entry: &CellEntry) -> bool {
        entry.status == CellStatus::Done
            && entry
                .files
                .iter()
                .all(|(rel, hash)| fs::read(self.out.join(rel)).is_ok_and(|b| sha256_hex(&b) == *hash))
    }

    /// Runs every cell end to end, reusing cells whose recorded outputs are
    /// intact, then rebuilds the tables and the manifest.
    pub fn sweep(&self) -> anyhow::Result<SweepReport> {
        let cells = self.cells();
        let previous = self.load_manifest();
        let results = self.for_each_cell(&cells, |c| {
            let id = c.id();
            if let Some(entry) = previous.as_ref().and_then(|m| m.cells.get(&id)) {
                if self.still_valid(entry) {
                    return Ok((entry.clone(), false));
                }
            }
            let entry = match self.run_cell(c).and_then(|files| self.inventory(&files)) {
                Ok(files) => CellEntry {
                    status: CellStatus::Done,
                    error: None,
                    files,
                },
                Err(e) => CellEntry {
                    status: CellStatus::Failed,
                    error: Some(format!("{e:#}")),
                    files: BTreeMap::new(),
                },
            };
            Ok((entry, true))
        })?;

        let mut report = SweepReport::default();
        let mut manifest = Manifest {
            config_hash: self.hash.clone(),
            master_seed: self.config.master_seed,
            seeds: self.config.seeds.clone(),
            cells: BTreeMap::new(),
            tables: BTreeMap::new(),
        };
        let mut done = Vec::new();
        for (c, r) in cells.iter().zip(results) {
            let (entry, ran) = r?;
            let id = c.id();
            match entry.status {
                CellStatus::Done => {
                    done.push(*c);
                    if ran {
                        report.ran.push(id.clone());
                    } else {
                        report.reused.push(id.clone());
                    }
                }
                CellStatus::Failed => report
                    .failed
                    .push((id.clone(), entry.error.clone().unwrap_or_default())),
            }
            manifest.cells.insert(id, entry);
        }
        let tables = self.aggregate(&done)?;
        manifest.tables = self.inventory(&tables)?;
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        write_atomic(&self.manifest_path(), |w| Ok(w.write_all(text.as_bytes())?))?;
        Ok(report)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellEntry {
    pub status: CellStatus,
    pub error: Option<String>,
    /// Output path relative to the output directory, and its SHA-256.
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub master_seed: u64,
    pub seeds: Vec<u64>,
    pub cells: BTreeMap<String, CellEntry>,
    pub tables: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SweepReport {
    pub ran: Vec<String>,
    pub reused: Vec<String>,
    pub failed: Vec<(String, String)>,
}
