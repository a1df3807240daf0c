//! Leave-one-subject-out difficulty tables.
//!
//! The difficulty feature a model sees for subject `s` must not be informed
//! by `s`'s own answers, so the bank is refit once per subject with that
//! subject's data held out. Refits warm-start from the full-data calibration
//! but are driven to a residual small enough (1e-6 score units) that the
//! converged estimates depend only on the retained data, never on the warm
//! path; a subject's own table is therefore invariant to their responses.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{ItemId, SubjectId};
use crate::error::{Error, Result};
use crate::rasch::jmle::{fit, CalibrationConfig, Fit, Holdout, ResponseTable, Warm};

/// Residual bound for holdout refits; see the module docs.
const HOLDOUT_TOLERANCE: f64 = 1e-6;
const HOLDOUT_MAX_ITERATIONS: usize = 3000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoldoutMode {
    /// Exclude the subject's entire row (default). The subject's table is
    /// then a single consistent bank fit on everyone else.
    #[default]
    WholeRow,
    /// Exclude only the (subject, item) cell being predicted. One refit per
    /// cell; difficulty (s, i) is still blind to response (s, i) but sees
    /// the subject's other answers.
    SingleCell,
}

/// Per-subject held-out difficulty vectors, aligned with `item_ids`.
#[derive(Debug, Clone)]
pub struct LooDifficultyTable {
    pub mode: HoldoutMode,
    pub item_ids: Vec<ItemId>,
    pub subject_ids: Vec<SubjectId>,
    rows: Vec<Vec<f64>>,
}

impl LooDifficultyTable {
    pub fn new(
        mode: HoldoutMode,
        item_ids: Vec<ItemId>,
        subject_ids: Vec<SubjectId>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if rows.len() != subject_ids.len() || rows.iter().any(|r| r.len() != item_ids.len()) {
            return Err(Error::Argument(
                "held-out difficulty table shape mismatch".into(),
            ));
        }
        Ok(LooDifficultyTable {
            mode,
            item_ids,
            subject_ids,
            rows,
        })
    }

    /// Difficulty of `item` as seen by `subject` (both table indices).
    pub fn difficulty(&self, subject: usize, item: usize) -> f64 {
        self.rows[subject][item]
    }

    pub fn row(&self, subject: usize) -> &[f64] {
        &self.rows[subject]
    }

    pub fn n_subjects(&self) -> usize {
        self.subject_ids.len()
    }
}

/// Writes the table as CSV: a `subject_id` column followed by one column
/// per item, one row per subject. The holdout mode is not stored here; it
/// travels with the run configuration.
pub fn write_loo_csv(table: &LooDifficultyTable, path: &Path) -> Result<()> {
    let mut writer =
        csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["subject_id".to_string()];
    header.extend(table.item_ids.iter().map(|i| i.0.clone()));
    writer.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (subject, row) in table.subject_ids.iter().zip(&table.rows) {
        let mut record = vec![subject.0.clone()];
        record.extend(row.iter().map(|v| v.to_string()));
        writer.write_record(&record).map_err(|e| csv_err(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a table written by [`write_loo_csv`]. `mode` tags the result; the
/// stored difficulties are mode-agnostic.
pub fn read_loo_csv(path: &Path, mode: HoldoutMode) -> Result<LooDifficultyTable> {
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.get(0) != Some("subject_id") {
        return Err(Error::malformed(
            path.display().to_string(),
            "first column must be subject_id".to_string(),
        ));
    }
    let item_ids: Vec<ItemId> = header.iter().skip(1).map(ItemId::from).collect();
    let mut subject_ids = Vec::new();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        if record.len() != item_ids.len() + 1 {
            return Err(Error::malformed(
                path.display().to_string(),
                format!("expected {} fields, got {}", item_ids.len() + 1, record.len()),
            ));
        }
        subject_ids.push(SubjectId::from(&record[0]));
        let row: Vec<f64> = record
            .iter()
            .skip(1)
            .map(|v| {
                v.parse::<f64>().map_err(|_| {
                    Error::malformed(
                        path.display().to_string(),
                        format!("bad difficulty value {v:?}"),
                    )
                })
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    LooDifficultyTable::new(mode, item_ids, subject_ids, rows)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::malformed(path.display().to_string(), e.to_string())
}

/// Builds the held-out difficulty table for every subject in the matrix.
///
/// Preconditions: at least two subjects, and every holdout subset must still
/// satisfy the calibration preconditions (each item keeps both a correct and
/// an incorrect answer among non-extreme subjects).
pub fn loo_difficulties(
    table: &ResponseTable,
    config: &CalibrationConfig,
    mode: HoldoutMode,
) -> Result<LooDifficultyTable> {
    if table.n_subjects() < 2 {
        return Err(Error::Argument(
            "leave-one-out calibration needs at least two subjects".into(),
        ));
    }
    let full = fit(table, Holdout::None, None, config)?;
    let holdout_config = CalibrationConfig {
        tolerance: config.tolerance.min(HOLDOUT_TOLERANCE),
        max_iterations: config.max_iterations.max(HOLDOUT_MAX_ITERATIONS),
        bias_correction: config.bias_correction,
    };

    let rows: Vec<Result<Vec<f64>>> = (0..table.n_subjects())
        .into_par_iter()
        .map(|subject| match mode {
            HoldoutMode::WholeRow => {
                let refit = refit(table, Holdout::Row(subject), &full, &holdout_config)?;
                Ok(refit.difficulties)
            }
            HoldoutMode::SingleCell => {
                let mut row = vec![0.0; table.n_items()];
                for (item, slot) in row.iter_mut().enumerate() {
                    let refit =
                        refit(table, Holdout::Cell(subject, item), &full, &holdout_config)?;
                    *slot = refit.difficulties[item];
                }
                Ok(row)
            }
        })
        .collect();

    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    LooDifficultyTable::new(
        mode,
        table.item_ids().to_vec(),
        table.subject_ids().to_vec(),
        rows,
    )
}

fn refit(
    table: &ResponseTable,
    holdout: Holdout,
    full: &Fit,
    config: &CalibrationConfig,
) -> Result<Fit> {
    fit(
        table,
        holdout,
        Some(Warm {
            difficulties: &full.difficulties,
            theta: Some(&full.theta),
        }),
        config,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    use crate::rasch::clipped_probability;
    use crate::seed::derive_rng;

    fn random_rows(n: usize, l: usize, seed: u64) -> Vec<Vec<Option<bool>>> {
        let mut rng = derive_rng(seed, "loo/test");
        let normal = Normal::new(0.0, 1.0).unwrap();
        let theta: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..l).map(|_| normal.sample(&mut rng)).collect();
        (0..n)
            .map(|s| {
                (0..l)
                    .map(|i| Some(rng.random_bool(clipped_probability(theta[s] - b[i]))))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn whole_row_matches_cold_calibration_of_the_subset() {
        let rows = random_rows(60, 6, 17);
        let table = ResponseTable::from_rows(&rows).unwrap();
        let loo = loo_difficulties(&table, &CalibrationConfig::default(), HoldoutMode::WholeRow)
            .unwrap();

        let subset: Vec<Vec<Option<bool>>> = rows
            .iter()
            .enumerate()
            .filter(|(s, _)| *s != 13)
            .map(|(_, r)| r.clone())
            .collect();
        let cold = fit(
            &ResponseTable::from_rows(&subset).unwrap(),
            Holdout::None,
            None,
            &CalibrationConfig {
                tolerance: 1e-8,
                max_iterations: 5000,
                bias_correction: false,
            },
        )
        .unwrap();
        for (a, c) in loo.row(13).iter().zip(&cold.difficulties) {
            assert!((a - c).abs() < 1e-4, "loo {a} vs cold {c}");
        }
    }

    #[test]
    fn own_responses_do_not_move_own_row() {
        let mut rows = random_rows(50, 6, 29);
        let table = ResponseTable::from_rows(&rows).unwrap();
        let loo = loo_difficulties(&table, &CalibrationConfig::default(), HoldoutMode::WholeRow)
            .unwrap();

        for cell in rows[7].iter_mut() {
            *cell = Some(!cell.unwrap());
        }
        let flipped = ResponseTable::from_rows(&rows).unwrap();
        let loo_flipped =
            loo_difficulties(&flipped, &CalibrationConfig::default(), HoldoutMode::WholeRow)
                .unwrap();
        for (a, b) in loo.row(7).iter().zip(loo_flipped.row(7)) {
            assert!((a - b).abs() < 1e-6, "row moved: {a} vs {b}");
        }
    }

    #[test]
    fn removing_one_subject_barely_moves_the_bank() {
        let rows = random_rows(400, 8, 41);
        let table = ResponseTable::from_rows(&rows).unwrap();
        let full = fit(&table, Holdout::None, None, &CalibrationConfig::default()).unwrap();
        let loo = loo_difficulties(&table, &CalibrationConfig::default(), HoldoutMode::WholeRow)
            .unwrap();
        for s in [0, 57, 399] {
            for (a, b) in loo.row(s).iter().zip(&full.difficulties) {
                assert!((a - b).abs() < 0.05);
            }
        }
    }

    #[test]
    fn single_cell_mode_matches_cold_fit_of_the_masked_table() {
        let rows = random_rows(40, 4, 53);
        let table = ResponseTable::from_rows(&rows).unwrap();
        let loo = loo_difficulties(&table, &CalibrationConfig::default(), HoldoutMode::SingleCell)
            .unwrap();

        let mut masked = rows.clone();
        masked[5][2] = None;
        let cold = fit(
            &ResponseTable::from_rows(&masked).unwrap(),
            Holdout::None,
            None,
            &CalibrationConfig {
                tolerance: 1e-8,
                max_iterations: 5000,
                bias_correction: false,
            },
        )
        .unwrap();
        assert!((loo.difficulty(5, 2) - cold.difficulties[2]).abs() < 1e-4);
    }

    #[test]
    fn too_few_subjects_is_an_argument_error() {
        let table = ResponseTable::from_rows(&[vec![Some(true), Some(false)]]).unwrap();
        assert!(
            loo_difficulties(&table, &CalibrationConfig::default(), HoldoutMode::WholeRow)
                .is_err()
        );
    }
}
