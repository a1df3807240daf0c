//! Repeated stratified cross-validation over the positional feature tables
//! and aggregation into the summary table.
//!
//! Every (dataset, config, seed) triple is one independent run: a stratified
//! k-fold pass in which imputation, feature selection, and model fitting all
//! happen on the training partition alone. Fold partitions are derived from
//! the base seed and the dataset position only, never from the model
//! configuration, so every config sees identical partitions and analysis
//! stages can replay them.

pub mod folds;
pub mod metrics;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::QuestionType;
use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::modeling::{fit_pipeline, ModelKind, ModelParams, SelectorKind};
use crate::seed::{derive_rng, derive_seed};

pub use folds::{stratified_folds, training_rows};
pub use metrics::{auc, auc_pairwise, kappa, mcnemar};

/// Probability threshold used when binarizing predictions for kappa.
pub const KAPPA_THRESHOLD: f64 = 0.5;

/// Cross-validation harness configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Folds per pass.
    pub folds: usize,
    /// One cross-validation pass per seed.
    pub seeds: Vec<u64>,
    /// Root seed from which fold partitions and model seeds are derived.
    pub base_seed: u64,
    pub models: Vec<ModelKind>,
    /// The feature-selection axis; `SelectorKind::None` is "no selection".
    pub selectors: Vec<SelectorKind>,
    pub params: ModelParams,
    /// When set, per-seed metrics average the per-fold metrics instead of
    /// pooling the fold predictions first.
    pub fold_averaged: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            folds: 10,
            seeds: (1..=10).collect(),
            base_seed: 1,
            models: ModelKind::ALL.to_vec(),
            selectors: vec![SelectorKind::None, SelectorKind::Cfs],
            params: ModelParams::default(),
            fold_averaged: false,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Argument("at least 2 folds are required".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Argument("at least one seed is required".into()));
        }
        if self.models.is_empty() {
            return Err(Error::Argument("at least one model is required".into()));
        }
        if self.selectors.is_empty() {
            return Err(Error::Argument(
                "at least one selector setting is required".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome of one (dataset, config, seed) cross-validation pass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub dataset_position: u8,
    pub session: u8,
    pub question_type: QuestionType,
    pub model: ModelKind,
    pub selector: SelectorKind,
    pub seed: u64,
    /// Out-of-fold P(incorrect) per table row; empty when the run failed.
    pub predictions: Vec<f64>,
    pub labels: Vec<bool>,
    pub auc: Option<f64>,
    pub kappa: Option<f64>,
    /// Why the run produced no predictions, when it did not.
    pub failure: Option<String>,
}

/// One aggregate row of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub model: ModelKind,
    pub fs: SelectorKind,
    pub median_auc: Option<f64>,
    pub median_kappa: Option<f64>,
    /// Share of datasets this config wins on median AUC (ties resolved by
    /// median kappa, residual ties split equally).
    pub pct_best: f64,
    pub completed_runs: usize,
    pub failed_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub datasets: usize,
    pub configs: Vec<ConfigSummary>,
}

/// Scope string from which a dataset's fold partition rng is derived. The
/// scope depends on the position and pass seed only, so all configs share the
/// partition and later stages can rebuild it.
pub fn fold_scope(position: u8, seed: u64) -> String {
    format!("folds/p{position}/s{seed}")
}

/// Rebuilds the fold partition used for a dataset in a given pass.
pub fn dataset_folds(
    labels: &[bool],
    k: usize,
    base_seed: u64,
    position: u8,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    stratified_folds(labels, k, &mut derive_rng(base_seed, &fold_scope(position, seed)))
}

fn failed_run(
    table: &FeatureTable,
    model: ModelKind,
    selector: SelectorKind,
    seed: u64,
    message: String,
) -> RunResult {
    RunResult {
        dataset_position: table.position,
        session: table.session,
        question_type: table.question_type,
        model,
        selector,
        seed,
        predictions: Vec::new(),
        labels: table.labels.clone(),
        auc: None,
        kappa: None,
        failure: Some(message),
    }
}

/// Runs one cross-validation pass for one table and one configuration.
pub fn run_single(
    table: &FeatureTable,
    model: ModelKind,
    selector: SelectorKind,
    params: &ModelParams,
    k: usize,
    base_seed: u64,
    seed: u64,
    fold_averaged: bool,
) -> RunResult {
    let n = table.n_rows();
    let partition = match dataset_folds(&table.labels, k, base_seed, table.position, seed) {
        Ok(p) => p,
        Err(err) => return failed_run(table, model, selector, seed, err.to_string()),
    };

    let mut predictions = vec![f64::NAN; n];
    for (f, fold) in partition.iter().enumerate() {
        let train = table.take_rows(&training_rows(&partition, f, n));
        let test = table.take_rows(fold);
        let model_seed = derive_seed(
            base_seed,
            &format!(
                "model/p{}/s{}/f{}/{}/{}",
                table.position,
                seed,
                f,
                model.label(),
                selector.label()
            ),
        );
        let outcome = fit_pipeline(model, selector, &train, params, model_seed)
            .and_then(|pipeline| pipeline.predict_proba(&test));
        match outcome {
            Ok(probs) => {
                for (&row, &p) in fold.iter().zip(&probs) {
                    predictions[row] = p;
                }
            }
            Err(err) => {
                return failed_run(
                    table,
                    model,
                    selector,
                    seed,
                    format!("fold {f}: {err}"),
                );
            }
        }
    }
    debug_assert!(predictions.iter().all(|p| p.is_finite()));

    let (auc_value, kappa_value) = if fold_averaged {
        let mut fold_aucs = Vec::new();
        let mut fold_kappas = Vec::new();
        for fold in &partition {
            let probs: Vec<f64> = fold.iter().map(|&i| predictions[i]).collect();
            let labels: Vec<bool> = fold.iter().map(|&i| table.labels[i]).collect();
            if let Some(a) = metrics::auc(&probs, &labels) {
                fold_aucs.push(a);
            }
            if let Some(kp) = metrics::kappa(&probs, &labels, KAPPA_THRESHOLD) {
                fold_kappas.push(kp);
            }
        }
        (crate::num::mean(&fold_aucs), crate::num::mean(&fold_kappas))
    } else {
        (
            metrics::auc(&predictions, &table.labels),
            metrics::kappa(&predictions, &table.labels, KAPPA_THRESHOLD),
        )
    };

    RunResult {
        dataset_position: table.position,
        session: table.session,
        question_type: table.question_type,
        model,
        selector,
        seed,
        predictions,
        labels: table.labels.clone(),
        auc: auc_value,
        kappa: kappa_value,
        failure: None,
    }
}

/// Repeated cross-validation of one table under one configuration: one
/// `RunResult` per seed.
pub fn run_repeated_cv(
    table: &FeatureTable,
    model: ModelKind,
    selector: SelectorKind,
    config: &EvalConfig,
) -> Vec<RunResult> {
    config
        .seeds
        .iter()
        .map(|&seed| {
            run_single(
                table,
                model,
                selector,
                &config.params,
                config.folds,
                config.base_seed,
                seed,
                config.fold_averaged,
            )
        })
        .collect()
}

/// Evaluates every (table, model, selector, seed) combination. Runs execute
/// on the current rayon pool; the output order and content are independent of
/// the worker count. Failed runs are kept (with a stderr warning) so the
/// aggregation can count them.
pub fn evaluate_tables(tables: &[FeatureTable], config: &EvalConfig) -> Result<Vec<RunResult>> {
    config.validate()?;
    for table in tables {
        table.validate()?;
    }

    let mut units = Vec::new();
    for table in tables {
        for &model in &config.models {
            for &selector in &config.selectors {
                for &seed in &config.seeds {
                    units.push((table, model, selector, seed));
                }
            }
        }
    }

    let runs: Vec<RunResult> = units
        .par_iter()
        .map(|&(table, model, selector, seed)| {
            run_single(
                table,
                model,
                selector,
                &config.params,
                config.folds,
                config.base_seed,
                seed,
                config.fold_averaged,
            )
        })
        .collect();

    for run in &runs {
        if let Some(reason) = &run.failure {
            eprintln!(
                "phic: warning: run (position {}, {}, fs {}, seed {}) failed and is excluded from medians: {}",
                run.dataset_position,
                run.model.label(),
                run.selector.label(),
                run.seed,
                reason
            );
        }
    }
    Ok(runs)
}

/// Median over the defined values, or `None` when every value is missing.
fn median_defined(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().filter_map(|v| *v).collect();
    crate::num::median(&defined)
}

/// Collapses runs into the per-config summary. Medians are taken over all
/// (dataset, seed) runs of a config; undefined metrics and failed runs are
/// excluded. The best-config share per dataset goes to the strictly highest
/// median AUC, with exact ties decided by median kappa and residual ties
/// split equally.
pub fn aggregate_summary(runs: &[RunResult]) -> SummaryTable {
    let configs: BTreeSet<(ModelKind, SelectorKind)> =
        runs.iter().map(|r| (r.model, r.selector)).collect();
    let datasets: BTreeSet<u8> = runs.iter().map(|r| r.dataset_position).collect();

    // Per (config, dataset) metric lists for the %Best contest.
    let mut per_cell: BTreeMap<((ModelKind, SelectorKind), u8), (Vec<Option<f64>>, Vec<Option<f64>>)> =
        BTreeMap::new();
    for run in runs {
        let cell = per_cell
            .entry(((run.model, run.selector), run.dataset_position))
            .or_default();
        cell.0.push(run.auc);
        cell.1.push(run.kappa);
    }

    let mut best_share: BTreeMap<(ModelKind, SelectorKind), f64> =
        configs.iter().map(|&c| (c, 0.0)).collect();
    for &position in &datasets {
        // Configs with a defined median AUC on this dataset compete; if none
        // has one the dataset is a full tie.
        let mut contenders: Vec<((ModelKind, SelectorKind), f64, f64)> = Vec::new();
        for &config in &configs {
            if let Some(cell) = per_cell.get(&(config, position)) {
                if let Some(auc_median) = median_defined(&cell.0) {
                    let kappa_median = median_defined(&cell.1).unwrap_or(f64::NEG_INFINITY);
                    contenders.push((config, auc_median, kappa_median));
                }
            }
        }
        let tied: Vec<(ModelKind, SelectorKind)> = if contenders.is_empty() {
            configs.iter().copied().collect()
        } else {
            let best_auc = contenders
                .iter()
                .map(|&(_, a, _)| a)
                .fold(f64::NEG_INFINITY, f64::max);
            let auc_tied: Vec<_> = contenders
                .iter()
                .filter(|&&(_, a, _)| a == best_auc)
                .collect();
            let best_kappa = auc_tied
                .iter()
                .map(|&&(_, _, k)| k)
                .fold(f64::NEG_INFINITY, f64::max);
            auc_tied
                .iter()
                .filter(|&&&(_, _, k)| k == best_kappa)
                .map(|&&(c, _, _)| c)
                .collect()
        };
        let share = 1.0 / tied.len() as f64;
        for config in tied {
            *best_share.get_mut(&config).expect("config present") += share;
        }
    }

    let dataset_count = datasets.len().max(1);
    let mut summaries = Vec::new();
    for &(model, fs) in &configs {
        let mine: Vec<&RunResult> = runs
            .iter()
            .filter(|r| r.model == model && r.selector == fs)
            .collect();
        let aucs: Vec<Option<f64>> = mine.iter().map(|r| r.auc).collect();
        let kappas: Vec<Option<f64>> = mine.iter().map(|r| r.kappa).collect();
        let failed = mine.iter().filter(|r| r.failure.is_some()).count();
        summaries.push(ConfigSummary {
            model,
            fs,
            median_auc: median_defined(&aucs),
            median_kappa: median_defined(&kappas),
            pct_best: best_share[&(model, fs)] / dataset_count as f64,
            completed_runs: mine.len() - failed,
            failed_runs: failed,
        });
    }

    SummaryTable {
        datasets: datasets.len(),
        configs: summaries,
    }
}

/// Writes runs.csv: one row per run in the deterministic evaluation order,
/// with empty cells for undefined metrics.
pub fn write_runs_csv(path: &Path, runs: &[RunResult]) -> Result<()> {
    let mut writer =
        csv::Writer::from_path(path).map_err(|e| Error::malformed(path.display().to_string(), e.to_string()))?;
    writer
        .write_record(["dataset_position", "model", "fs", "seed", "auc", "kappa"])
        .map_err(|e| Error::malformed(path.display().to_string(), e.to_string()))?;
    for run in runs {
        let auc_cell = run.auc.map(|v| v.to_string()).unwrap_or_default();
        let kappa_cell = run.kappa.map(|v| v.to_string()).unwrap_or_default();
        writer
            .write_record([
                run.dataset_position.to_string(),
                run.model.label().to_string(),
                run.selector.label().to_string(),
                run.seed.to_string(),
                auc_cell,
                kappa_cell,
            ])
            .map_err(|e| Error::malformed(path.display().to_string(), e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// The summary table rendered as pretty JSON with a trailing newline. The
/// bytes are a pure function of the table contents.
pub fn summary_json_bytes(table: &SummaryTable) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(table)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn write_summary_json(path: &Path, table: &SummaryTable) -> Result<()> {
    let bytes = summary_json_bytes(table)?;
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_summary_json(path: &Path) -> Result<SummaryTable> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}
