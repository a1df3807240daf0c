//! Feature assembly: one modelling table per administration position.
//!
//! Every table row describes one respondent answering the item at that
//! position, before seeing it. The label is `true` when the answer was
//! incorrect; an incorrect answer is the positive class everywhere
//! downstream. Columns, in order:
//!
//! 1. `expert_difficulty`: the item's median expert rating
//! 2. `rasch_difficulty`: the item's held-out calibrated difficulty, taken
//!    from the respondent's own leave-out row so it never saw their answers
//! 3. the 18 profile attributes, in schema order
//! 4. `perc_correct` and `median_difficulty` (positions 2 and later): the
//!    respondent's running share of correct answers and the median held-out
//!    difficulty of the items they already faced
//!
//! Missing numeric values stay NaN until a model imputes them from its
//! training partition. A missing categorical value becomes an explicit
//! category, appended to the column's list only when actually observed.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{
    position_semantics, AttributeKind, Corpus, ProfileValue, QuestionType, SubjectId, ITEM_COUNT,
};
use crate::error::{Error, Result};
use crate::num::median;
use crate::rasch::LooDifficultyTable;

/// Category label given to missing categorical values.
pub const MISSING_CATEGORY: &str = "(missing)";

#[derive(Debug, Clone)]
pub enum FeatureColumn {
    /// Missing values are NaN.
    Numeric { name: String, values: Vec<f64> },
    /// `codes` index into `categories`.
    Categorical {
        name: String,
        categories: Vec<String>,
        codes: Vec<u32>,
    },
}

impl FeatureColumn {
    pub fn name(&self) -> &str {
        match self {
            FeatureColumn::Numeric { name, .. } => name,
            FeatureColumn::Categorical { name, .. } => name,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            FeatureColumn::Numeric { values, .. } => values.len(),
            FeatureColumn::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Keeps only the rows selected by `keep` (indices into this column).
    pub fn take(&self, keep: &[usize]) -> FeatureColumn {
        match self {
            FeatureColumn::Numeric { name, values } => FeatureColumn::Numeric {
                name: name.clone(),
                values: keep.iter().map(|&r| values[r]).collect(),
            },
            FeatureColumn::Categorical {
                name,
                categories,
                codes,
            } => FeatureColumn::Categorical {
                name: name.clone(),
                categories: categories.clone(),
                codes: keep.iter().map(|&r| codes[r]).collect(),
            },
        }
    }
}

/// The modelling table for one administration position.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    pub position: u8,
    pub session: u8,
    pub question_type: QuestionType,
    /// Row order, aligned with `columns` and `labels`.
    pub subjects: Vec<SubjectId>,
    pub columns: Vec<FeatureColumn>,
    /// `true` when the respondent answered incorrectly (the positive class).
    pub labels: Vec<bool>,
}

impl FeatureTable {
    pub fn n_rows(&self) -> usize {
        self.subjects.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn feature_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name()).collect()
    }

    pub fn column(&self, name: &str) -> Option<&FeatureColumn> {
        self.columns.iter().find(|c| c.name() == name)
    }

    /// Row subset preserving column structure, for fold splits.
    pub fn take_rows(&self, keep: &[usize]) -> FeatureTable {
        FeatureTable {
            position: self.position,
            session: self.session,
            question_type: self.question_type,
            subjects: keep.iter().map(|&r| self.subjects[r].clone()).collect(),
            columns: self.columns.iter().map(|c| c.take(keep)).collect(),
            labels: keep.iter().map(|&r| self.labels[r]).collect(),
        }
    }

    /// Column subset by feature name, preserving rows.
    pub fn take_columns(&self, names: &[String]) -> Result<FeatureTable> {
        let columns = names
            .iter()
            .map(|n| {
                self.column(n)
                    .cloned()
                    .ok_or_else(|| Error::Argument(format!("no feature named `{n}`")))
            })
            .collect::<Result<_>>()?;
        Ok(FeatureTable {
            position: self.position,
            session: self.session,
            question_type: self.question_type,
            subjects: self.subjects.clone(),
            columns,
            labels: self.labels.clone(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.subjects.len();
        if self.labels.len() != n || self.columns.iter().any(|c| c.len() != n) {
            return Err(Error::Argument(format!(
                "feature table for position {} has misaligned lengths",
                self.position
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for column in &self.columns {
            if !seen.insert(column.name()) {
                return Err(Error::Argument(format!(
                    "duplicate feature name `{}`",
                    column.name()
                )));
            }
            if let FeatureColumn::Categorical {
                name,
                categories,
                codes,
            } = column
            {
                if let Some(code) = codes.iter().find(|&&c| c as usize >= categories.len()) {
                    return Err(Error::Argument(format!(
                        "column `{name}`: category code {code} out of range"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Share of correct answers in the respondent's history so far.
pub fn perc_correct(history: &[bool]) -> Result<f64> {
    if history.is_empty() {
        return Err(Error::Argument(
            "perc_correct is undefined before the first response".into(),
        ));
    }
    let hits = history.iter().filter(|&&c| c).count();
    Ok(hits as f64 / history.len() as f64)
}

/// Median difficulty of the items in the respondent's history so far.
pub fn median_difficulty(history: &[f64]) -> Result<f64> {
    if history.is_empty() {
        return Err(Error::Argument(
            "median_difficulty is undefined before the first response".into(),
        ));
    }
    Ok(median(history).expect("non-empty history"))
}

/// Builds the 32 positional feature tables from a corpus and its held-out
/// difficulty table.
pub fn assemble(corpus: &Corpus, loo: &LooDifficultyTable) -> Result<Vec<FeatureTable>> {
    let matrix = &corpus.matrix;
    if loo.subject_ids != matrix.subjects() {
        return Err(Error::Argument(
            "held-out difficulties were calibrated for different subjects".into(),
        ));
    }
    let expected_items: Vec<_> = corpus.items.iter().map(|i| i.id.clone()).collect();
    if loo.item_ids != expected_items {
        return Err(Error::Argument(
            "held-out difficulties cover different items".into(),
        ));
    }

    let n = matrix.n_subjects();
    let mut tables = Vec::with_capacity(ITEM_COUNT);
    for position in 1..=ITEM_COUNT as u8 {
        let (session, question_type) = position_semantics(position, &corpus.order)?;
        let mut columns = Vec::with_capacity(22);

        let mut expert = Vec::with_capacity(n);
        let mut rasch = Vec::with_capacity(n);
        for s in 0..n {
            let item = matrix.item_at(s, position);
            expert.push(corpus.items.get(item).expert_difficulty);
            rasch.push(loo.difficulty(s, item as usize));
        }
        columns.push(FeatureColumn::Numeric {
            name: "expert_difficulty".into(),
            values: expert,
        });
        columns.push(FeatureColumn::Numeric {
            name: "rasch_difficulty".into(),
            values: rasch,
        });

        for (a, spec) in corpus.schema.attributes.iter().enumerate() {
            columns.push(profile_column(corpus, a, spec.kind)?);
        }

        if position >= 2 {
            let mut running = Vec::with_capacity(n);
            let mut med = Vec::with_capacity(n);
            for s in 0..n {
                let history: Vec<bool> = (1..position).map(|p| matrix.correct_at(s, p)).collect();
                let difficulties: Vec<f64> = (1..position)
                    .map(|p| loo.difficulty(s, matrix.item_at(s, p) as usize))
                    .collect();
                running.push(perc_correct(&history)?);
                med.push(median_difficulty(&difficulties)?);
            }
            columns.push(FeatureColumn::Numeric {
                name: "perc_correct".into(),
                values: running,
            });
            columns.push(FeatureColumn::Numeric {
                name: "median_difficulty".into(),
                values: med,
            });
        }

        let table = FeatureTable {
            position,
            session,
            question_type,
            subjects: matrix.subjects().to_vec(),
            columns,
            labels: (0..n).map(|s| !matrix.correct_at(s, position)).collect(),
        };
        table.validate()?;
        tables.push(table);
    }
    Ok(tables)
}

fn profile_column(corpus: &Corpus, attribute: usize, kind: AttributeKind) -> Result<FeatureColumn> {
    let spec = &corpus.schema.attributes[attribute];
    match kind {
        AttributeKind::Numeric => {
            let values = corpus
                .profiles
                .iter()
                .map(|p| match p.values[attribute] {
                    ProfileValue::Number(x) => x,
                    ProfileValue::Missing => f64::NAN,
                    ProfileValue::Category(_) => unreachable!("validated against schema"),
                })
                .collect();
            Ok(FeatureColumn::Numeric {
                name: spec.name.clone(),
                values,
            })
        }
        AttributeKind::Categorical => {
            let mut categories: Vec<String> = spec.categories.clone();
            let missing_observed = corpus
                .profiles
                .iter()
                .any(|p| p.values[attribute] == ProfileValue::Missing);
            if missing_observed {
                categories.push(MISSING_CATEGORY.into());
            }
            let missing_code = (categories.len() - 1) as u32;
            let codes = corpus
                .profiles
                .iter()
                .map(|p| match p.values[attribute] {
                    ProfileValue::Category(code) => code,
                    ProfileValue::Missing => missing_code,
                    ProfileValue::Number(_) => unreachable!("validated against schema"),
                })
                .collect();
            Ok(FeatureColumn::Categorical {
                name: spec.name.clone(),
                categories,
                codes,
            })
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ColumnMeta {
    name: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    categories: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct TableMeta {
    position: u8,
    session: u8,
    question_type: QuestionType,
    columns: Vec<ColumnMeta>,
}

#[derive(Serialize, Deserialize)]
struct FeaturesMeta {
    positive_class: String,
    tables: Vec<TableMeta>,
}

fn table_file_name(position: u8) -> String {
    format!("features_p{position:02}.csv")
}

/// Writes one CSV per position plus `features_meta.json` into `dir`.
pub fn write_features(tables: &[FeatureTable], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut meta = FeaturesMeta {
        positive_class: "incorrect".into(),
        tables: Vec::with_capacity(tables.len()),
    };
    for table in tables {
        table.validate()?;
        meta.tables.push(TableMeta {
            position: table.position,
            session: table.session,
            question_type: table.question_type,
            columns: table
                .columns
                .iter()
                .map(|c| match c {
                    FeatureColumn::Numeric { name, .. } => ColumnMeta {
                        name: name.clone(),
                        kind: "numeric".into(),
                        categories: Vec::new(),
                    },
                    FeatureColumn::Categorical {
                        name, categories, ..
                    } => ColumnMeta {
                        name: name.clone(),
                        kind: "categorical".into(),
                        categories: categories.clone(),
                    },
                })
                .collect(),
        });

        let mut csv = String::from("subject_id");
        for column in &table.columns {
            csv.push(',');
            csv.push_str(column.name());
        }
        csv.push_str(",label\n");
        for r in 0..table.n_rows() {
            csv.push_str(&table.subjects[r].0);
            for column in &table.columns {
                csv.push(',');
                match column {
                    FeatureColumn::Numeric { values, .. } => {
                        if values[r].is_finite() {
                            csv.push_str(&values[r].to_string());
                        }
                    }
                    FeatureColumn::Categorical {
                        categories, codes, ..
                    } => csv.push_str(&categories[codes[r] as usize]),
                }
            }
            csv.push(',');
            csv.push_str(if table.labels[r] { "1" } else { "0" });
            csv.push('\n');
        }
        let path = dir.join(table_file_name(table.position));
        fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    }
    let meta_path = dir.join("features_meta.json");
    fs::write(&meta_path, serde_json::to_string_pretty(&meta)?)
        .map_err(|e| Error::io(&meta_path, e))?;
    Ok(())
}

/// Reads tables written by [`write_features`].
pub fn read_features(dir: &Path) -> Result<Vec<FeatureTable>> {
    let meta_path = dir.join("features_meta.json");
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: FeaturesMeta = serde_json::from_str(&text)?;

    let mut tables = Vec::with_capacity(meta.tables.len());
    for table_meta in &meta.tables {
        let path = dir.join(table_file_name(table_meta.position));
        let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(file);

        let mut expected = vec!["subject_id".to_string()];
        expected.extend(table_meta.columns.iter().map(|c| c.name.clone()));
        expected.push("label".into());
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::malformed(path.display().to_string(), e.to_string()))?
            .iter()
            .map(String::from)
            .collect();
        if header != expected {
            return Err(Error::malformed(
                format!("{}:1", path.display()),
                "header does not match features_meta.json".to_string(),
            ));
        }

        let mut subjects = Vec::new();
        let mut labels = Vec::new();
        let mut columns: Vec<FeatureColumn> = table_meta
            .columns
            .iter()
            .map(|c| {
                if c.kind == "numeric" {
                    FeatureColumn::Numeric {
                        name: c.name.clone(),
                        values: Vec::new(),
                    }
                } else {
                    FeatureColumn::Categorical {
                        name: c.name.clone(),
                        categories: c.categories.clone(),
                        codes: Vec::new(),
                    }
                }
            })
            .collect();

        for record in rdr.records() {
            let record = record
                .map_err(|e| Error::malformed(path.display().to_string(), e.to_string()))?;
            let line = record
                .position()
                .map(|p| p.line().to_string())
                .unwrap_or_else(|| "?".into());
            subjects.push(SubjectId(record.get(0).unwrap_or("").to_string()));
            for (k, column) in columns.iter_mut().enumerate() {
                let raw = record.get(k + 1).unwrap_or("");
                match column {
                    FeatureColumn::Numeric { name, values } => {
                        if raw.is_empty() {
                            values.push(f64::NAN);
                        } else {
                            values.push(raw.parse().map_err(|_| {
                                Error::malformed(
                                    format!("{}:{line}", path.display()),
                                    format!("column `{name}`: cannot parse `{raw}`"),
                                )
                            })?);
                        }
                    }
                    FeatureColumn::Categorical {
                        name,
                        categories,
                        codes,
                    } => {
                        let code = categories.iter().position(|c| c == raw).ok_or_else(|| {
                            Error::malformed(
                                format!("{}:{line}", path.display()),
                                format!("column `{name}`: `{raw}` is not a declared category"),
                            )
                        })?;
                        codes.push(code as u32);
                    }
                }
            }
            let label_raw = record.get(table_meta.columns.len() + 1).unwrap_or("");
            labels.push(match label_raw {
                "1" => true,
                "0" => false,
                other => {
                    return Err(Error::malformed(
                        format!("{}:{line}", path.display()),
                        format!("column `label`: expected 0 or 1, got `{other}`"),
                    ))
                }
            });
        }

        let table = FeatureTable {
            position: table_meta.position,
            session: table_meta.session,
            question_type: table_meta.question_type,
            subjects,
            columns,
            labels,
        };
        table.validate()?;
        tables.push(table);
    }
    Ok(tables)
}

/// Per-table summary used by reports: position, rows, prevalence of the
/// positive (incorrect) class.
pub fn prevalence_by_position(tables: &[FeatureTable]) -> BTreeMap<u8, f64> {
    tables
        .iter()
        .map(|t| {
            let positives = t.labels.iter().filter(|&&l| l).count();
            (t.position, positives as f64 / t.labels.len().max(1) as f64)
        })
        .collect()
}
