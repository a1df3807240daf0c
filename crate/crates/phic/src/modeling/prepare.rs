//! Training-partition preprocessing: imputation and design-matrix encoding.
//!
//! Everything here is fitted on training rows only and replayed on test
//! rows, so no statistic of the test partition ever reaches a model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::features::{FeatureColumn, FeatureTable};
use crate::error::{Error, Result};

/// Replaces missing numeric values with the training mean of their column.
/// Categorical columns already encode missingness as a category.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Imputer {
    means: BTreeMap<String, f64>,
}

impl Imputer {
    pub fn fit(table: &FeatureTable) -> Imputer {
        let mut means = BTreeMap::new();
        for column in &table.columns {
            if let FeatureColumn::Numeric { name, values } = column {
                let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
                let mean = if finite.is_empty() {
                    0.0
                } else {
                    finite.iter().sum::<f64>() / finite.len() as f64
                };
                means.insert(name.clone(), mean);
            }
        }
        Imputer { means }
    }

    pub fn apply(&self, table: &FeatureTable) -> Result<FeatureTable> {
        let mut out = table.clone();
        for column in &mut out.columns {
            if let FeatureColumn::Numeric { name, values } = column {
                let mean = *self.means.get(name).ok_or_else(|| {
                    Error::Training(format!("imputer was not fitted for column `{name}`"))
                })?;
                for v in values.iter_mut() {
                    if !v.is_finite() {
                        *v = mean;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// One column of an encoded design matrix, with enough information to
/// reproduce the encoding on unseen rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum DesignSpec {
    /// Numeric value passed through unchanged.
    Raw { column: String },
    /// Numeric value mapped affinely so the training range becomes [-1, 1].
    /// A constant training column maps to 0.
    Scaled { column: String, min: f64, max: f64 },
    /// 1 when the categorical column takes `category`, else 0. The first
    /// category never gets a column; it is the reference level.
    Dummy { column: String, category: u32 },
    /// +1 when the categorical column takes `category`, else -1.
    Indicator { column: String, category: u32 },
}

impl DesignSpec {
    fn column(&self) -> &str {
        match self {
            DesignSpec::Raw { column }
            | DesignSpec::Scaled { column, .. }
            | DesignSpec::Dummy { column, .. }
            | DesignSpec::Indicator { column, .. } => column,
        }
    }
}

/// Reference-level dummy coding: numerics raw, each k-category column
/// becomes k-1 zero/one dummies against its first category.
pub fn dummy_specs(table: &FeatureTable) -> Vec<DesignSpec> {
    let mut specs = Vec::new();
    for column in &table.columns {
        match column {
            FeatureColumn::Numeric { name, .. } => specs.push(DesignSpec::Raw {
                column: name.clone(),
            }),
            FeatureColumn::Categorical {
                name, categories, ..
            } => {
                for category in 1..categories.len() as u32 {
                    specs.push(DesignSpec::Dummy {
                        column: name.clone(),
                        category,
                    });
                }
            }
        }
    }
    specs
}

/// Signed network coding: numerics scaled to the training [-1, 1] range,
/// two-category columns become one signed indicator, wider ones get one
/// signed indicator per category.
pub fn indicator_specs(table: &FeatureTable) -> Vec<DesignSpec> {
    let mut specs = Vec::new();
    for column in &table.columns {
        match column {
            FeatureColumn::Numeric { name, values } => {
                let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
                let min = finite.iter().copied().fold(f64::INFINITY, f64::min);
                let max = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let (min, max) = if finite.is_empty() { (0.0, 0.0) } else { (min, max) };
                specs.push(DesignSpec::Scaled {
                    column: name.clone(),
                    min,
                    max,
                });
            }
            FeatureColumn::Categorical {
                name, categories, ..
            } => {
                if categories.len() == 2 {
                    specs.push(DesignSpec::Indicator {
                        column: name.clone(),
                        category: 1,
                    });
                } else {
                    for category in 0..categories.len() as u32 {
                        specs.push(DesignSpec::Indicator {
                            column: name.clone(),
                            category,
                        });
                    }
                }
            }
        }
    }
    specs
}

/// Materializes the design matrix row-major. Errors if a referenced column
/// is absent or a numeric value is not finite (imputation must run first).
pub fn build_matrix(table: &FeatureTable, specs: &[DesignSpec]) -> Result<Vec<Vec<f64>>> {
    let mut resolved = Vec::with_capacity(specs.len());
    for spec in specs {
        let column = table.column(spec.column()).ok_or_else(|| {
            Error::Training(format!("design references missing column `{}`", spec.column()))
        })?;
        resolved.push((spec, column));
    }
    let n = table.n_rows();
    let mut rows = vec![Vec::with_capacity(specs.len()); n];
    for (spec, column) in resolved {
        match (spec, column) {
            (DesignSpec::Raw { column }, FeatureColumn::Numeric { values, .. }) => {
                for (r, row) in rows.iter_mut().enumerate() {
                    if !values[r].is_finite() {
                        return Err(Error::Training(format!(
                            "column `{column}` holds a non-finite value at row {r}"
                        )));
                    }
                    row.push(values[r]);
                }
            }
            (DesignSpec::Scaled { column, min, max }, FeatureColumn::Numeric { values, .. }) => {
                let span = max - min;
                for (r, row) in rows.iter_mut().enumerate() {
                    if !values[r].is_finite() {
                        return Err(Error::Training(format!(
                            "column `{column}` holds a non-finite value at row {r}"
                        )));
                    }
                    let scaled = if span > 0.0 {
                        2.0 * (values[r] - min) / span - 1.0
                    } else {
                        0.0
                    };
                    row.push(scaled);
                }
            }
            (DesignSpec::Dummy { category, .. }, FeatureColumn::Categorical { codes, .. }) => {
                for (r, row) in rows.iter_mut().enumerate() {
                    row.push(if codes[r] == *category { 1.0 } else { 0.0 });
                }
            }
            (DesignSpec::Indicator { category, .. }, FeatureColumn::Categorical { codes, .. }) => {
                for (r, row) in rows.iter_mut().enumerate() {
                    row.push(if codes[r] == *category { 1.0 } else { -1.0 });
                }
            }
            (spec, _) => {
                return Err(Error::Training(format!(
                    "design column `{}` has the wrong kind",
                    spec.column()
                )))
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{QuestionType, SubjectId};

    fn toy_table() -> FeatureTable {
        FeatureTable {
            position: 2,
            session: 1,
            question_type: QuestionType::Function,
            subjects: (0..4).map(|i| SubjectId(format!("s{i}"))).collect(),
            columns: vec![
                FeatureColumn::Numeric {
                    name: "x".into(),
                    values: vec![1.0, f64::NAN, 3.0, 5.0],
                },
                FeatureColumn::Categorical {
                    name: "c".into(),
                    categories: vec!["a".into(), "b".into(), "m".into()],
                    codes: vec![0, 1, 2, 1],
                },
            ],
            labels: vec![false, true, false, true],
        }
    }

    #[test]
    fn imputer_uses_training_means_only() {
        let train = toy_table();
        let imputer = Imputer::fit(&train);
        let imputed = imputer.apply(&train).unwrap();
        match imputed.column("x").unwrap() {
            FeatureColumn::Numeric { values, .. } => {
                assert_eq!(values[1], 3.0); // mean of 1, 3, 5
            }
            _ => panic!("numeric"),
        }

        // Applying to a different table keeps the training mean.
        let mut test = toy_table();
        if let FeatureColumn::Numeric { values, .. } = &mut test.columns[0] {
            *values = vec![f64::NAN, 100.0, f64::NAN, 100.0];
        }
        let imputed = imputer.apply(&test).unwrap();
        match imputed.column("x").unwrap() {
            FeatureColumn::Numeric { values, .. } => {
                assert_eq!(values[0], 3.0);
                assert_eq!(values[2], 3.0);
            }
            _ => panic!("numeric"),
        }
    }

    #[test]
    fn dummy_coding_drops_the_first_category() {
        let table = toy_table();
        let imputed = Imputer::fit(&table).apply(&table).unwrap();
        let specs = dummy_specs(&imputed);
        assert_eq!(specs.len(), 3); // x raw + 2 dummies for 3 categories
        let matrix = build_matrix(&imputed, &specs).unwrap();
        assert_eq!(matrix[0], vec![1.0, 0.0, 0.0]); // category a: reference
        assert_eq!(matrix[1], vec![3.0, 1.0, 0.0]); // category b
        assert_eq!(matrix[2], vec![3.0, 0.0, 1.0]); // category m
    }

    #[test]
    fn indicator_coding_scales_numerics_and_signs_categories() {
        let table = toy_table();
        let imputed = Imputer::fit(&table).apply(&table).unwrap();
        let specs = indicator_specs(&imputed);
        // x scaled + 3 indicators (3 categories).
        assert_eq!(specs.len(), 4);
        let matrix = build_matrix(&imputed, &specs).unwrap();
        assert_eq!(matrix[0][0], -1.0); // min of 1..5
        assert_eq!(matrix[3][0], 1.0); // max
        assert_eq!(matrix[0][1..], [1.0, -1.0, -1.0]);
        assert_eq!(matrix[1][1..], [-1.0, 1.0, -1.0]);
    }

    #[test]
    fn two_category_columns_get_a_single_indicator() {
        let mut table = toy_table();
        table.columns[1] = FeatureColumn::Categorical {
            name: "c".into(),
            categories: vec!["no".into(), "yes".into()],
            codes: vec![0, 1, 0, 1],
        };
        let specs = indicator_specs(&table);
        assert_eq!(
            specs.iter().filter(|s| s.column() == "c").count(),
            1
        );
    }

    #[test]
    fn nan_reaching_the_matrix_is_an_error() {
        let table = toy_table();
        let specs = dummy_specs(&table);
        assert!(build_matrix(&table, &specs).is_err());
    }
}
