//! Joint maximum likelihood calibration.
//!
//! Alternates one damped Newton step per person with one per item until the
//! largest gap between observed and model-expected raw scores falls under
//! the tolerance. After every item sweep the difficulties are re-centered to
//! sum to zero, which is what identifies the model. Respondents with extreme
//! raw scores (0 or maximum) carry no information about item differences;
//! they are dropped from item estimation and receive abilities afterwards
//! from a 0.3 raw-score adjustment.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{ItemId, ItemTable, ResponseMatrix, SubjectId, ITEM_COUNT};
use crate::error::{Error, Result};
use crate::num::logit;
use crate::rasch::clipped_probability;

const MISSING: u8 = 2;
/// Largest parameter move per sweep, in logits. Keeps early iterations from
/// overshooting when expected scores are still far off.
const MAX_STEP: f64 = 1.0;
/// Raw-score adjustment applied to extreme scores before ability estimation.
pub(crate) const EXTREME_ADJUSTMENT: f64 = 0.3;

/// Dense binary response table, the calibration input. Cells may be missing
/// (single-cell holdouts, sparse external data).
#[derive(Debug, Clone)]
pub struct ResponseTable {
    subject_ids: Vec<SubjectId>,
    item_ids: Vec<ItemId>,
    /// Row-major subjects x items; 0 incorrect, 1 correct, 2 missing.
    cells: Vec<u8>,
}

impl ResponseTable {
    pub fn from_matrix(matrix: &ResponseMatrix, items: &ItemTable) -> Self {
        let n = matrix.n_subjects();
        let l = items.len();
        let mut cells = vec![MISSING; n * l];
        for subject in 0..n {
            for position in 1..=ITEM_COUNT as u8 {
                let item = matrix.item_at(subject, position) as usize;
                cells[subject * l + item] = u8::from(matrix.correct_at(subject, position));
            }
        }
        ResponseTable {
            subject_ids: matrix.subjects().to_vec(),
            item_ids: items.iter().map(|it| it.id.clone()).collect(),
            cells,
        }
    }

    /// Table from explicit rows; `None` marks a missing cell.
    pub fn from_rows(rows: &[Vec<Option<bool>>]) -> Result<Self> {
        let n = rows.len();
        let l = rows.first().map(|r| r.len()).unwrap_or(0);
        if n == 0 || l == 0 {
            return Err(Error::Argument("response table must be non-empty".into()));
        }
        let mut cells = Vec::with_capacity(n * l);
        for row in rows {
            if row.len() != l {
                return Err(Error::Argument("ragged response table".into()));
            }
            cells.extend(row.iter().map(|c| match c {
                Some(true) => 1,
                Some(false) => 0,
                None => MISSING,
            }));
        }
        Ok(ResponseTable {
            subject_ids: (0..n).map(|i| SubjectId(format!("s{i}"))).collect(),
            item_ids: (0..l).map(|i| ItemId(format!("i{i}"))).collect(),
            cells,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.subject_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn subject_ids(&self) -> &[SubjectId] {
        &self.subject_ids
    }

    pub fn item_ids(&self) -> &[ItemId] {
        &self.item_ids
    }

    fn cell(&self, subject: usize, item: usize) -> u8 {
        self.cells[subject * self.n_items() + item]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CalibrationConfig {
    /// Convergence bound on max |observed - expected raw score|, in score
    /// units, across both persons and items.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Multiply converged difficulties by (L-1)/L. Off by default; the plain
    /// JML estimates are reported as-is.
    pub bias_correction: bool,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            tolerance: 0.005,
            max_iterations: 200,
            bias_correction: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RaschCalibration {
    pub item_ids: Vec<ItemId>,
    /// Aligned with `item_ids`; sums to zero.
    pub difficulties: Vec<f64>,
    /// Abilities of subjects with non-extreme raw scores.
    pub abilities: BTreeMap<SubjectId, f64>,
    /// Abilities of extreme scorers, estimated from the adjusted raw score
    /// against the converged difficulties.
    pub extreme_abilities: BTreeMap<SubjectId, f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest |observed - expected score| at the final parameters.
    pub max_score_residual: f64,
}

impl RaschCalibration {
    pub fn difficulty_of(&self, id: &ItemId) -> Option<f64> {
        self.item_ids
            .iter()
            .position(|i| i == id)
            .map(|idx| self.difficulties[idx])
    }

    /// |sum of difficulties|; zero up to rounding for a valid calibration.
    pub fn constraint_residual(&self) -> f64 {
        self.difficulties.iter().sum::<f64>().abs()
    }
}

/// Which part of the table a refit leaves out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Holdout {
    None,
    Row(usize),
    Cell(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum PersonStatus {
    Active,
    ExtremeLow,
    ExtremeHigh,
    Unobserved,
}

/// Raw fitting output, index-aligned with the table. The public
/// [`RaschCalibration`] is assembled from it.
#[derive(Debug, Clone)]
pub(crate) struct Fit {
    pub difficulties: Vec<f64>,
    /// Only meaningful where `status` is `Active`.
    pub theta: Vec<f64>,
    pub status: Vec<PersonStatus>,
    pub iterations: usize,
    pub converged: bool,
    pub max_score_residual: f64,
}

pub(crate) struct Warm<'a> {
    pub difficulties: &'a [f64],
    pub theta: Option<&'a [f64]>,
}

/// Calibrates the table and reports abilities for every subject, extreme
/// scorers included.
pub fn calibrate(table: &ResponseTable, config: &CalibrationConfig) -> Result<RaschCalibration> {
    let fit = fit(table, Holdout::None, None, config)?;
    let mut abilities = BTreeMap::new();
    let mut extreme_abilities = BTreeMap::new();
    for (s, id) in table.subject_ids().iter().enumerate() {
        match fit.status[s] {
            PersonStatus::Active => {
                abilities.insert(id.clone(), fit.theta[s]);
            }
            PersonStatus::ExtremeLow | PersonStatus::ExtremeHigh => {
                let theta = extreme_ability(table, s, &fit.difficulties, Holdout::None);
                extreme_abilities.insert(id.clone(), theta);
            }
            PersonStatus::Unobserved => {}
        }
    }
    Ok(RaschCalibration {
        item_ids: table.item_ids().to_vec(),
        difficulties: fit.difficulties,
        abilities,
        extreme_abilities,
        iterations: fit.iterations,
        converged: fit.converged,
        max_score_residual: fit.max_score_residual,
    })
}

/// Inner alternating-Newton loop. Sequential by design; parallelism lives at
/// the holdout level.
pub(crate) fn fit(
    table: &ResponseTable,
    holdout: Holdout,
    warm: Option<Warm<'_>>,
    config: &CalibrationConfig,
) -> Result<Fit> {
    let n = table.n_subjects();
    let l = table.n_items();
    if config.tolerance <= 0.0 || config.max_iterations == 0 {
        return Err(Error::Argument(
            "calibration needs a positive tolerance and at least one iteration".into(),
        ));
    }

    let observed = |s: usize, i: usize| -> Option<bool> {
        match holdout {
            Holdout::Row(r) if r == s => return None,
            Holdout::Cell(r, c) if r == s && c == i => return None,
            _ => {}
        }
        match table.cell(s, i) {
            MISSING => None,
            v => Some(v == 1),
        }
    };

    // Person raw scores decide who participates in item estimation.
    let mut person_score = vec![0usize; n];
    let mut person_count = vec![0usize; n];
    for s in 0..n {
        for i in 0..l {
            if let Some(ok) = observed(s, i) {
                person_count[s] += 1;
                person_score[s] += usize::from(ok);
            }
        }
    }
    let status: Vec<PersonStatus> = (0..n)
        .map(|s| match (person_count[s], person_score[s]) {
            (0, _) => PersonStatus::Unobserved,
            (c, 0) if c > 0 => PersonStatus::ExtremeLow,
            (c, r) if r == c => PersonStatus::ExtremeHigh,
            _ => PersonStatus::Active,
        })
        .collect();

    // Item margins over active persons only.
    let mut item_score = vec![0usize; l];
    let mut item_count = vec![0usize; l];
    for s in 0..n {
        if status[s] != PersonStatus::Active {
            continue;
        }
        for i in 0..l {
            if let Some(ok) = observed(s, i) {
                item_count[i] += 1;
                item_score[i] += usize::from(ok);
            }
        }
    }
    for i in 0..l {
        if item_count[i] == 0 {
            return Err(Error::Calibration(format!(
                "item {} has no responses from non-extreme subjects",
                table.item_ids()[i]
            )));
        }
        if item_score[i] == 0 || item_score[i] == item_count[i] {
            return Err(Error::Calibration(format!(
                "item {} needs both correct and incorrect responses after removing extreme scorers",
                table.item_ids()[i]
            )));
        }
    }

    let mut b: Vec<f64> = match &warm {
        Some(w) => {
            if w.difficulties.len() != l {
                return Err(Error::Argument(
                    "warm-start difficulty vector length mismatch".into(),
                ));
            }
            w.difficulties.to_vec()
        }
        None => (0..l)
            .map(|i| logit(item_score[i] as f64 / item_count[i] as f64))
            .map(|x| -x)
            .collect(),
    };
    center(&mut b);

    let mut theta: Vec<f64> = (0..n)
        .map(|s| match status[s] {
            PersonStatus::Active => match &warm {
                Some(Warm {
                    theta: Some(t), ..
                }) => t[s],
                _ => logit(person_score[s] as f64 / person_count[s] as f64),
            },
            _ => 0.0,
        })
        .collect();

    let mut iterations = 0;
    let mut converged = false;
    let mut max_residual = f64::INFINITY;

    while iterations < config.max_iterations {
        iterations += 1;

        // Person sweep.
        for s in 0..n {
            if status[s] != PersonStatus::Active {
                continue;
            }
            let (mut expected, mut info) = (0.0, 0.0);
            for i in 0..l {
                if observed(s, i).is_some() {
                    let p = clipped_probability(theta[s] - b[i]);
                    expected += p;
                    info += p * (1.0 - p);
                }
            }
            let step = (person_score[s] as f64 - expected) / info;
            theta[s] += step.clamp(-MAX_STEP, MAX_STEP);
        }

        // Item sweep (items are independent given the abilities).
        for i in 0..l {
            let (mut expected, mut info) = (0.0, 0.0);
            for s in 0..n {
                if status[s] == PersonStatus::Active && observed(s, i).is_some() {
                    let p = clipped_probability(theta[s] - b[i]);
                    expected += p;
                    info += p * (1.0 - p);
                }
            }
            let step = (expected - item_score[i] as f64) / info;
            b[i] += step.clamp(-MAX_STEP, MAX_STEP);
        }
        center(&mut b);

        // Residuals at the current parameters decide convergence.
        max_residual = score_residual(table, &observed, &status, &theta, &b, &person_score, &item_score);
        if max_residual < config.tolerance {
            converged = true;
            break;
        }
    }

    if config.bias_correction && l > 1 {
        let factor = (l as f64 - 1.0) / l as f64;
        for v in &mut b {
            *v *= factor;
        }
    }

    Ok(Fit {
        difficulties: b,
        theta,
        status,
        iterations,
        converged,
        max_score_residual: max_residual,
    })
}

fn center(b: &mut [f64]) {
    let mean = b.iter().sum::<f64>() / b.len() as f64;
    for v in b.iter_mut() {
        *v -= mean;
    }
}

#[allow(clippy::too_many_arguments)]
fn score_residual(
    table: &ResponseTable,
    observed: &impl Fn(usize, usize) -> Option<bool>,
    status: &[PersonStatus],
    theta: &[f64],
    b: &[f64],
    person_score: &[usize],
    item_score: &[usize],
) -> f64 {
    let n = table.n_subjects();
    let l = table.n_items();
    let mut item_expected = vec![0.0; l];
    let mut max_residual: f64 = 0.0;
    for s in 0..n {
        if status[s] != PersonStatus::Active {
            continue;
        }
        let mut person_expected = 0.0;
        for i in 0..l {
            if observed(s, i).is_some() {
                let p = clipped_probability(theta[s] - b[i]);
                person_expected += p;
                item_expected[i] += p;
            }
        }
        max_residual = max_residual.max((person_score[s] as f64 - person_expected).abs());
    }
    for i in 0..l {
        max_residual = max_residual.max((item_score[i] as f64 - item_expected[i]).abs());
    }
    max_residual
}

/// Ability of an extreme scorer: maximum likelihood against fixed
/// difficulties after moving the raw score 0.3 units off the boundary.
pub(crate) fn extreme_ability(
    table: &ResponseTable,
    subject: usize,
    difficulties: &[f64],
    holdout: Holdout,
) -> f64 {
    let l = table.n_items();
    let mut items = Vec::new();
    for i in 0..l {
        let skip = matches!(holdout, Holdout::Cell(r, c) if r == subject && c == i);
        if !skip && table.cell(subject, i) != MISSING {
            items.push(i);
        }
    }
    let count = items.len() as f64;
    let raw: usize = items
        .iter()
        .filter(|&&i| table.cell(subject, i) == 1)
        .count();
    let target = if raw == 0 {
        EXTREME_ADJUSTMENT
    } else {
        count - EXTREME_ADJUSTMENT
    };
    solve_ability(&items, difficulties, target)
}

/// Newton solve of sum_i p(theta - b_i) = target over the given items.
pub(crate) fn solve_ability(items: &[usize], difficulties: &[f64], target: f64) -> f64 {
    let count = items.len() as f64;
    let mut theta = logit((target / count).clamp(1e-9, 1.0 - 1e-9));
    for _ in 0..100 {
        let (mut expected, mut info) = (0.0, 0.0);
        for &i in items {
            let p = clipped_probability(theta - difficulties[i]);
            expected += p;
            info += p * (1.0 - p);
        }
        let step = ((target - expected) / info).clamp(-MAX_STEP, MAX_STEP);
        theta += step;
        if step.abs() < 1e-12 {
            break;
        }
    }
    theta
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    use crate::rasch::clipped_probability;
    use crate::seed::derive_rng;

    fn random_table(n: usize, l: usize, seed: u64) -> ResponseTable {
        let mut rng = derive_rng(seed, "jmle/test");
        let normal = Normal::new(0.0, 1.0).unwrap();
        let theta: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..l).map(|_| normal.sample(&mut rng)).collect();
        let rows: Vec<Vec<Option<bool>>> = (0..n)
            .map(|s| {
                (0..l)
                    .map(|i| Some(rng.random_bool(clipped_probability(theta[s] - b[i]))))
                    .collect()
            })
            .collect();
        ResponseTable::from_rows(&rows).unwrap()
    }

    #[test]
    fn two_by_two_symmetric_case_is_exact() {
        let table = ResponseTable::from_rows(&[
            vec![Some(true), Some(false)],
            vec![Some(false), Some(true)],
        ])
        .unwrap();
        let cal = calibrate(&table, &CalibrationConfig::default()).unwrap();
        assert!(cal.converged);
        assert!(cal.difficulties[0].abs() < 1e-9);
        assert!(cal.difficulties[1].abs() < 1e-9);
        for theta in cal.abilities.values() {
            assert!(theta.abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_item_is_reported_by_name() {
        // After dropping the all-correct subject, item i0 has only correct
        // answers from the remaining mixed-score subjects.
        let table = ResponseTable::from_rows(&[
            vec![Some(true), Some(false), Some(true)],
            vec![Some(true), Some(true), Some(true)],
            vec![Some(true), Some(true), Some(false)],
        ])
        .unwrap();
        let err = calibrate(&table, &CalibrationConfig::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("i0"), "unexpected message: {msg}");
    }

    #[test]
    fn extreme_scorers_are_excluded_from_items_but_scored() {
        let mut rows: Vec<Vec<Option<bool>>> = vec![
            vec![Some(true), Some(true), Some(true), Some(true)], // extreme high
            vec![Some(false), Some(false), Some(false), Some(false)], // extreme low
        ];
        let mut rng = derive_rng(9, "extremes");
        for s in 0..30 {
            rows.push(
                (0..4)
                    .map(|i| Some((s + i) % 3 != 0 && rng.random_bool(0.7)))
                    .collect(),
            );
        }
        let table = ResponseTable::from_rows(&rows).unwrap();
        let cal = calibrate(&table, &CalibrationConfig::default()).unwrap();
        assert_eq!(
            cal.abilities.len() + cal.extreme_abilities.len(),
            32,
            "every subject receives an ability"
        );
        let hi = cal.extreme_abilities[&SubjectId("s0".into())];
        let lo = cal.extreme_abilities[&SubjectId("s1".into())];
        assert!(hi.is_finite() && lo.is_finite());
        let max_active = cal.abilities.values().cloned().fold(f64::MIN, f64::max);
        let min_active = cal.abilities.values().cloned().fold(f64::MAX, f64::min);
        assert!(hi > max_active);
        assert!(lo < min_active);
    }

    #[test]
    fn duplicating_every_subject_leaves_difficulties_unchanged() {
        let table = random_table(40, 8, 11);
        let mut doubled_rows = Vec::new();
        for s in 0..40 {
            let row: Vec<Option<bool>> = (0..8).map(|i| {
                match table.cell(s, i) {
                    1 => Some(true),
                    0 => Some(false),
                    _ => None,
                }
            }).collect();
            doubled_rows.push(row.clone());
            doubled_rows.push(row);
        }
        let doubled = ResponseTable::from_rows(&doubled_rows).unwrap();
        let a = calibrate(&table, &CalibrationConfig::default()).unwrap();
        let b = calibrate(&doubled, &CalibrationConfig::default()).unwrap();
        for (x, y) in a.difficulties.iter().zip(&b.difficulties) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn flipping_a_response_to_correct_never_raises_that_difficulty() {
        let tight = CalibrationConfig {
            tolerance: 1e-7,
            max_iterations: 2000,
            ..Default::default()
        };
        let table = random_table(40, 8, 23);
        // Find an active subject with an incorrect answer on item 3.
        let cal = calibrate(&table, &tight).unwrap();
        let mut rows: Vec<Vec<Option<bool>>> = (0..40)
            .map(|s| (0..8).map(|i| Some(table.cell(s, i) == 1)).collect())
            .collect();
        let subject = (0..40)
            .find(|&s| {
                table.cell(s, 3) == 0
                    && cal.abilities.contains_key(&SubjectId(format!("s{s}")))
            })
            .expect("fixture has such a subject");
        rows[subject][3] = Some(true);
        let flipped = ResponseTable::from_rows(&rows).unwrap();
        let cal_flipped = calibrate(&flipped, &tight).unwrap();
        assert!(
            cal_flipped.difficulties[3] <= cal.difficulties[3] + 1e-6,
            "difficulty rose from {} to {}",
            cal.difficulties[3],
            cal_flipped.difficulties[3]
        );
    }

    #[test]
    fn medium_synthetic_table_converges_centered() {
        let table = random_table(200, 32, 5);
        let cal = calibrate(&table, &CalibrationConfig::default()).unwrap();
        assert!(cal.converged);
        assert!(cal.iterations < 200);
        assert!(cal.max_score_residual < 0.005);
        assert!(cal.constraint_residual() < 1e-6);
    }

    #[test]
    fn warm_start_matches_cold_start() {
        let tight = CalibrationConfig {
            tolerance: 1e-6,
            max_iterations: 2000,
            ..Default::default()
        };
        let table = random_table(100, 32, 31);
        let cold = fit(&table, Holdout::None, None, &tight).unwrap();
        // Warm-start from a deliberately offset vector.
        let mut off: Vec<f64> = cold.difficulties.iter().map(|d| d + 0.3).collect();
        off[0] -= 0.3 * 32.0;
        let warm = fit(
            &table,
            Holdout::None,
            Some(Warm {
                difficulties: &off,
                theta: None,
            }),
            &tight,
        )
        .unwrap();
        for (x, y) in cold.difficulties.iter().zip(&warm.difficulties) {
            assert!((x - y).abs() < 1e-4);
        }
    }

    #[test]
    fn bias_correction_scales_difficulties() {
        let table = random_table(60, 8, 3);
        let plain = calibrate(&table, &CalibrationConfig::default()).unwrap();
        let corrected = calibrate(
            &table,
            &CalibrationConfig {
                bias_correction: true,
                ..Default::default()
            },
        )
        .unwrap();
        for (x, y) in plain.difficulties.iter().zip(&corrected.difficulties) {
            assert!((y - x * 7.0 / 8.0).abs() < 1e-12);
        }
    }
}
