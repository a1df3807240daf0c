//! Descriptive and explanatory reports: correctness by session and question
//! type, gain-ratio importance grids, and feature-group ablations.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

use crate::domain::{Corpus, QuestionType, RESERVED_COLUMN_NAMES, SESSION_COUNT};
use crate::error::{Error, Result};
use crate::eval::{self, EvalConfig, RunResult};
use crate::features::FeatureTable;
use crate::modeling::{gain_ratio_scores, ModelKind, SelectorKind};

/// Mean correctness of one (session, question type) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HicCell {
    pub session: u8,
    pub question_type: QuestionType,
    pub mean_correct: f64,
    pub count: usize,
}

/// McNemar comparison of one question type between two sessions, on
/// subject-paired correctness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HicTest {
    pub question_type: QuestionType,
    pub session_a: u8,
    pub session_b: u8,
    /// Pairs correct at `session_a` but not at `session_b`.
    pub b: usize,
    /// Pairs correct at `session_b` but not at `session_a`.
    pub c: usize,
    pub pairs: usize,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HicSummary {
    pub cells: Vec<HicCell>,
    pub tests: Vec<HicTest>,
}

/// Mean correctness per (session, question type) plus McNemar tests between
/// the configured session pairs.
///
/// Pairing for the tests: within each subject, the k-th item of a question
/// type in one session is paired with the k-th item of that type in the
/// other, so types that occur more than once per session contribute one pair
/// per slot.
pub fn hic_summary(corpus: &Corpus, session_pairs: &[(u8, u8)]) -> Result<HicSummary> {
    let last_session = SESSION_COUNT as u8;
    for &(a, b) in session_pairs {
        let in_range = |s: u8| (1..=last_session).contains(&s);
        if !in_range(a) || !in_range(b) {
            return Err(Error::Argument(format!(
                "session pair ({a}, {b}) is outside 1..={last_session}"
            )));
        }
        if a == b {
            return Err(Error::Argument(format!(
                "session pair ({a}, {b}) must name two distinct sessions"
            )));
        }
    }

    let matrix = &corpus.matrix;
    let n = matrix.n_subjects();

    let mut cells = Vec::new();
    for session in 1..=last_session {
        let mut per_type: BTreeMap<QuestionType, (usize, usize)> = BTreeMap::new();
        for subject in 0..n {
            for slot in 0..4u8 {
                let position = (session - 1) * 4 + slot + 1;
                let item = corpus.items.get(matrix.item_at(subject, position));
                let entry = per_type.entry(item.question_type).or_default();
                entry.0 += matrix.correct_at(subject, position) as usize;
                entry.1 += 1;
            }
        }
        for qt in QuestionType::ALL {
            if let Some(&(correct, count)) = per_type.get(&qt) {
                cells.push(HicCell {
                    session,
                    question_type: qt,
                    mean_correct: correct as f64 / count as f64,
                    count,
                });
            }
        }
    }

    // Correctness bools per (subject, session, type), in position order.
    let type_slots = |subject: usize, session: u8, qt: QuestionType| -> Vec<bool> {
        (0..4u8)
            .filter_map(|slot| {
                let position = (session - 1) * 4 + slot + 1;
                let item = corpus.items.get(matrix.item_at(subject, position));
                (item.question_type == qt).then(|| matrix.correct_at(subject, position))
            })
            .collect()
    };

    let mut tests = Vec::new();
    for &(sa, sb) in session_pairs {
        for qt in QuestionType::ALL {
            let mut pairs = Vec::new();
            for subject in 0..n {
                let at_a = type_slots(subject, sa, qt);
                let at_b = type_slots(subject, sb, qt);
                for k in 0..at_a.len().min(at_b.len()) {
                    pairs.push((at_a[k], at_b[k]));
                }
            }
            if pairs.is_empty() {
                continue;
            }
            let b = pairs.iter().filter(|&&(x, y)| x && !y).count();
            let c = pairs.iter().filter(|&&(x, y)| !x && y).count();
            let (statistic, p_value) = eval::mcnemar(&pairs);
            tests.push(HicTest {
                question_type: qt,
                session_a: sa,
                session_b: sb,
                b,
                c,
                pairs: pairs.len(),
                statistic,
                p_value,
            });
        }
    }

    Ok(HicSummary { cells, tests })
}

/// How grid values collapse over the training partitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridAggregate {
    Mean,
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceCell {
    pub session: u8,
    pub question_type: QuestionType,
    pub feature: String,
    pub gain_ratio: f64,
    /// Training partitions the value aggregates over.
    pub partitions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceGrid {
    pub aggregate: GridAggregate,
    pub cells: Vec<ImportanceCell>,
}

/// Gain ratio of every feature on every training partition, aggregated per
/// (session, question type) cell. Datasets sharing a cell (two Function items
/// per session under the default order) are pooled. Partitions replay the
/// evaluation harness exactly: same fold scope, same base seed.
pub fn importance_grid(
    tables: &[FeatureTable],
    folds: usize,
    base_seed: u64,
    seeds: &[u64],
    aggregate: GridAggregate,
) -> Result<ImportanceGrid> {
    if seeds.is_empty() {
        return Err(Error::Argument("at least one seed is required".into()));
    }
    for table in tables {
        table.validate()?;
    }

    let mut units = Vec::new();
    for table in tables {
        for &seed in seeds {
            units.push((table, seed));
        }
    }

    // Per unit: for every feature, its gain ratio on each training partition.
    let unit_scores: Vec<Result<Vec<(String, Vec<f64>)>>> = units
        .par_iter()
        .map(|&(table, seed)| {
            let partition =
                eval::dataset_folds(&table.labels, folds, base_seed, table.position, seed)?;
            let mut per_feature: Vec<(String, Vec<f64>)> = table
                .feature_names()
                .iter()
                .map(|n| (n.to_string(), Vec::with_capacity(partition.len())))
                .collect();
            for f in 0..partition.len() {
                let train =
                    table.take_rows(&eval::training_rows(&partition, f, table.n_rows()));
                let scores = gain_ratio_scores(&train)?;
                debug_assert_eq!(scores.len(), per_feature.len());
                for (slot, (_, score)) in per_feature.iter_mut().zip(&scores) {
                    slot.1.push(*score);
                }
            }
            Ok(per_feature)
        })
        .collect();

    // Sequential reduction in unit order keeps float sums deterministic.
    let mut pooled: BTreeMap<(u8, QuestionType, String), Vec<f64>> = BTreeMap::new();
    for (&(table, _), scores) in units.iter().zip(unit_scores) {
        for (feature, values) in scores? {
            pooled
                .entry((table.session, table.question_type, feature))
                .or_default()
                .extend(values);
        }
    }

    let cells = pooled
        .into_iter()
        .map(|((session, question_type, feature), values)| {
            let value = match aggregate {
                GridAggregate::Mean => crate::num::mean(&values),
                GridAggregate::Median => crate::num::median(&values),
            }
            .expect("every pooled cell has at least one partition");
            ImportanceCell {
                session,
                question_type,
                feature,
                gain_ratio: value,
                partitions: values.len(),
            }
        })
        .collect();

    Ok(ImportanceGrid { aggregate, cells })
}

/// Semantically coherent feature subsets for the ablation comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    /// The 18 respondent attributes: no information about the item.
    HumanProfile,
    /// Profile plus running-performance features: no item difficulty.
    HumanProfileAndPerformance,
    /// The Rasch difficulty alone: no information about the respondent.
    OnlyRasch,
    /// Every feature; the accuracy upper bound.
    All,
}

impl FeatureGroup {
    pub const ALL_GROUPS: [FeatureGroup; 4] = [
        FeatureGroup::HumanProfile,
        FeatureGroup::HumanProfileAndPerformance,
        FeatureGroup::OnlyRasch,
        FeatureGroup::All,
    ];

    pub fn label(self) -> &'static str {
        match self {
            FeatureGroup::HumanProfile => "human_profile",
            FeatureGroup::HumanProfileAndPerformance => "human_profile_and_performance",
            FeatureGroup::OnlyRasch => "only_rasch",
            FeatureGroup::All => "all",
        }
    }

    /// The group's columns as present in `table`, in table order. Profile
    /// columns are exactly the non-reserved names.
    pub fn columns(self, table: &FeatureTable) -> Vec<String> {
        let is_profile = |n: &str| !RESERVED_COLUMN_NAMES.contains(&n);
        table
            .feature_names()
            .into_iter()
            .filter(|&n| match self {
                FeatureGroup::HumanProfile => is_profile(n),
                FeatureGroup::HumanProfileAndPerformance => {
                    is_profile(n) || n == "perc_correct" || n == "median_difficulty"
                }
                FeatureGroup::OnlyRasch => n == "rasch_difficulty",
                FeatureGroup::All => true,
            })
            .map(str::to_string)
            .collect()
    }
}

impl std::fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for FeatureGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "human_profile" | "profile" => Ok(FeatureGroup::HumanProfile),
            "human_profile_and_performance" | "profile_performance" => {
                Ok(FeatureGroup::HumanProfileAndPerformance)
            }
            "only_rasch" | "rasch" => Ok(FeatureGroup::OnlyRasch),
            "all" => Ok(FeatureGroup::All),
            other => Err(Error::Argument(format!("unknown feature group `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub group: FeatureGroup,
    pub session: u8,
    pub question_type: QuestionType,
    pub median_auc: Option<f64>,
    pub median_kappa: Option<f64>,
    pub completed_runs: usize,
    pub failed_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub model: ModelKind,
    pub selector: SelectorKind,
    pub cells: Vec<AblationCell>,
}

/// Reruns the evaluation harness once per feature group, restricting every
/// table to that group's columns, and reports per-cell medians. With
/// `FeatureGroup::All` the tables pass through untouched, so its runs
/// reproduce the plain evaluation bit for bit.
pub fn ablation(
    tables: &[FeatureTable],
    groups: &[FeatureGroup],
    model: ModelKind,
    selector: SelectorKind,
    harness: &EvalConfig,
) -> Result<AblationReport> {
    if groups.is_empty() {
        return Err(Error::Argument("at least one feature group is required".into()));
    }

    let mut cells = Vec::new();
    for &group in groups {
        let restricted: Vec<FeatureTable> = if group == FeatureGroup::All {
            tables.to_vec()
        } else {
            tables
                .iter()
                .map(|t| {
                    let columns = group.columns(t);
                    if columns.is_empty() {
                        return Err(Error::Argument(format!(
                            "group {group} selects no columns at position {}",
                            t.position
                        )));
                    }
                    t.take_columns(&columns)
                })
                .collect::<Result<_>>()?
        };

        let config = EvalConfig {
            models: vec![model],
            selectors: vec![selector],
            ..harness.clone()
        };
        let runs = eval::evaluate_tables(&restricted, &config)?;
        cells.extend(summarize_group_runs(group, &runs));
    }

    Ok(AblationReport {
        model,
        selector,
        cells,
    })
}

fn summarize_group_runs(group: FeatureGroup, runs: &[RunResult]) -> Vec<AblationCell> {
    let mut pooled: BTreeMap<(u8, QuestionType), Vec<&RunResult>> = BTreeMap::new();
    for run in runs {
        pooled
            .entry((run.session, run.question_type))
            .or_default()
            .push(run);
    }
    pooled
        .into_iter()
        .map(|((session, question_type), cell_runs)| {
            let aucs: Vec<f64> = cell_runs.iter().filter_map(|r| r.auc).collect();
            let kappas: Vec<f64> = cell_runs.iter().filter_map(|r| r.kappa).collect();
            let failed = cell_runs.iter().filter(|r| r.failure.is_some()).count();
            AblationCell {
                group,
                session,
                question_type,
                median_auc: crate::num::median(&aucs),
                median_kappa: crate::num::median(&kappas),
                completed_runs: cell_runs.len() - failed,
                failed_runs: failed,
            }
        })
        .collect()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::malformed(path.display().to_string(), e.to_string())
}

pub fn write_hic_summary_csv(path: &Path, summary: &HicSummary) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    writer
        .write_record(["session", "question_type", "mean_correct", "count"])
        .map_err(|e| csv_err(path, e))?;
    for cell in &summary.cells {
        writer
            .write_record([
                cell.session.to_string(),
                cell.question_type.to_string(),
                cell.mean_correct.to_string(),
                cell.count.to_string(),
            ])
            .map_err(|e| csv_err(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_hic_tests_csv(path: &Path, summary: &HicSummary) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    writer
        .write_record([
            "question_type",
            "session_a",
            "session_b",
            "b",
            "c",
            "pairs",
            "statistic",
            "p_value",
        ])
        .map_err(|e| csv_err(path, e))?;
    for test in &summary.tests {
        writer
            .write_record([
                test.question_type.to_string(),
                test.session_a.to_string(),
                test.session_b.to_string(),
                test.b.to_string(),
                test.c.to_string(),
                test.pairs.to_string(),
                test.statistic.to_string(),
                test.p_value.to_string(),
            ])
            .map_err(|e| csv_err(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_importance_csv(path: &Path, grid: &ImportanceGrid) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    writer
        .write_record(["session", "question_type", "feature", "gain_ratio", "partitions"])
        .map_err(|e| csv_err(path, e))?;
    for cell in &grid.cells {
        writer
            .write_record([
                cell.session.to_string(),
                cell.question_type.to_string(),
                cell.feature.clone(),
                cell.gain_ratio.to_string(),
                cell.partitions.to_string(),
            ])
            .map_err(|e| csv_err(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_ablation_csv(path: &Path, report: &AblationReport) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    writer
        .write_record([
            "group",
            "session",
            "question_type",
            "median_auc",
            "median_kappa",
            "completed_runs",
            "failed_runs",
        ])
        .map_err(|e| csv_err(path, e))?;
    for cell in &report.cells {
        writer
            .write_record([
                cell.group.to_string(),
                cell.session.to_string(),
                cell.question_type.to_string(),
                cell.median_auc.map(|v| v.to_string()).unwrap_or_default(),
                cell.median_kappa.map(|v| v.to_string()).unwrap_or_default(),
                cell.completed_runs.to_string(),
                cell.failed_runs.to_string(),
            ])
            .map_err(|e| csv_err(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
