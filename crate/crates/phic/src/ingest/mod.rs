//! Corpus input and output.
//!
//! Four CSV files plus a JSON schema describe a corpus:
//!
//! - `items.csv`: `item_id,dv_id,question_type,within_dv_position,expert_difficulty`
//! - `expert_ratings.csv` (optional): `item_id,rater_id,rating`; when present,
//!   each item's `expert_difficulty` is replaced by the median of its ratings
//! - `profiles.csv`: `subject_id` plus the 18 schema attributes, in schema
//!   order; empty fields are missing values
//! - `responses.csv`: `subject_id,position,item_id,correct`
//! - `schema.json`: the [`ProfileSchema`]
//!
//! Loading validates everything against the study design and reports schema
//! violations with file, line, and column. [`synthetic`] generates corpora
//! with known ground truth from the same structures.

pub mod synthetic;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::domain::{
    AttributeKind, Corpus, Item, ItemId, ItemTable, ProfileSchema, ProfileValue, QuestionType,
    ResponseMatrix, SessionOrder, SubjectId, SubjectProfile, ITEM_COUNT,
};
use crate::error::{Error, Result};
use crate::num::median;

/// Bounds for expert ratings, inclusive. The scale is opaque to the rest of
/// the pipeline; only these bounds are checked at ingestion.
#[derive(Debug, Clone, Copy)]
pub struct RatingScale {
    pub min: f64,
    pub max: f64,
}

impl Default for RatingScale {
    fn default() -> Self {
        RatingScale { min: 1.0, max: 5.0 }
    }
}

#[derive(Debug, Clone)]
pub struct CorpusPaths {
    pub items: PathBuf,
    pub profiles: PathBuf,
    pub responses: PathBuf,
    pub expert_ratings: Option<PathBuf>,
}

impl CorpusPaths {
    /// Standard layout inside a corpus directory.
    pub fn in_dir(dir: &Path) -> Self {
        let ratings = dir.join("expert_ratings.csv");
        CorpusPaths {
            items: dir.join("items.csv"),
            profiles: dir.join("profiles.csv"),
            responses: dir.join("responses.csv"),
            expert_ratings: ratings.exists().then_some(ratings),
        }
    }
}

fn location(path: &Path, record: &csv::StringRecord) -> String {
    let line = record
        .position()
        .map(|p| p.line().to_string())
        .unwrap_or_else(|| "?".into());
    format!("{}:{}", path.display(), line)
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn check_header(path: &Path, reader: &mut csv::Reader<fs::File>, expected: &[&str]) -> Result<()> {
    let header = reader
        .headers()
        .map_err(|e| Error::malformed(path.display().to_string(), e.to_string()))?;
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(Error::malformed(
            format!("{}:1", path.display()),
            format!("header must be `{}`, got `{}`", expected.join(","), got.join(",")),
        ));
    }
    Ok(())
}

fn parse_field<T: FromStr>(
    path: &Path,
    record: &csv::StringRecord,
    idx: usize,
    column: &str,
) -> Result<T> {
    let raw = record.get(idx).unwrap_or("");
    raw.parse().map_err(|_| {
        Error::malformed(
            location(path, record),
            format!("column `{column}`: cannot parse `{raw}`"),
        )
    })
}

fn parse_bool(path: &Path, record: &csv::StringRecord, idx: usize, column: &str) -> Result<bool> {
    match record.get(idx).unwrap_or("") {
        "1" | "true" | "TRUE" | "True" => Ok(true),
        "0" | "false" | "FALSE" | "False" => Ok(false),
        other => Err(Error::malformed(
            location(path, record),
            format!("column `{column}`: expected a boolean, got `{other}`"),
        )),
    }
}

pub fn load_items(path: &Path, order: &SessionOrder) -> Result<ItemTable> {
    let mut rdr = reader(path)?;
    check_header(
        path,
        &mut rdr,
        &["item_id", "dv_id", "question_type", "within_dv_position", "expert_difficulty"],
    )?;
    let mut items = Vec::new();
    for record in rdr.records() {
        let record = record
            .map_err(|e| Error::malformed(path.display().to_string(), e.to_string()))?;
        let question_type: QuestionType = record
            .get(2)
            .unwrap_or("")
            .parse()
            .map_err(|e: Error| Error::malformed(location(path, &record), e.to_string()))?;
        items.push(Item {
            id: ItemId(record.get(0).unwrap_or("").to_string()),
            dv_id: parse_field(path, &record, 1, "dv_id")?,
            question_type,
            within_dv_position: parse_field(path, &record, 3, "within_dv_position")?,
            expert_difficulty: parse_field(path, &record, 4, "expert_difficulty")?,
        });
    }
    ItemTable::new(items, order)
}

/// Applies per-rater expert ratings: each item's `expert_difficulty` becomes
/// the median of its ratings. Exactly one rating per (item, rater) pair.
pub fn apply_expert_ratings(
    items: ItemTable,
    path: &Path,
    order: &SessionOrder,
    scale: RatingScale,
) -> Result<ItemTable> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &["item_id", "rater_id", "rating"])?;
    let mut ratings: BTreeMap<ItemId, Vec<f64>> = BTreeMap::new();
    let mut seen = std::collections::HashSet::new();
    for record in rdr.records() {
        let record = record
            .map_err(|e| Error::malformed(path.display().to_string(), e.to_string()))?;
        let item_id = ItemId(record.get(0).unwrap_or("").to_string());
        if items.index_of(&item_id).is_none() {
            return Err(Error::malformed(
                location(path, &record),
                format!("column `item_id`: unknown item `{item_id}`"),
            ));
        }
        let rater = record.get(1).unwrap_or("").to_string();
        if !seen.insert((item_id.clone(), rater.clone())) {
            return Err(Error::malformed(
                location(path, &record),
                format!("duplicate rating for item `{item_id}` by rater `{rater}`"),
            ));
        }
        let rating: f64 = parse_field(path, &record, 2, "rating")?;
        if !(scale.min..=scale.max).contains(&rating) {
            return Err(Error::malformed(
                location(path, &record),
                format!(
                    "column `rating`: {rating} outside the scale {}..={}",
                    scale.min, scale.max
                ),
            ));
        }
        ratings.entry(item_id).or_default().push(rating);
    }
    let rebuilt: Vec<Item> = items
        .iter()
        .map(|item| {
            let mut item = item.clone();
            if let Some(rs) = ratings.get(&item.id) {
                item.expert_difficulty = median(rs).expect("non-empty rating list");
            } else if !ratings.is_empty() {
                return Err(Error::Corpus(format!(
                    "item {} has no expert ratings while others do",
                    item.id
                )));
            }
            Ok(item)
        })
        .collect::<Result<_>>()?;
    ItemTable::new(rebuilt, order)
}

pub fn load_schema(path: &Path) -> Result<ProfileSchema> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let schema: ProfileSchema = serde_json::from_str(&text)?;
    schema.validate()?;
    Ok(schema)
}

pub fn load_profiles(path: &Path, schema: &ProfileSchema) -> Result<Vec<SubjectProfile>> {
    let mut rdr = reader(path)?;
    let mut expected = vec!["subject_id"];
    expected.extend(schema.attribute_names());
    check_header(path, &mut rdr, &expected)?;

    let mut profiles = Vec::new();
    for record in rdr.records() {
        let record = record
            .map_err(|e| Error::malformed(path.display().to_string(), e.to_string()))?;
        let id = SubjectId(record.get(0).unwrap_or("").to_string());
        if id.0.is_empty() {
            return Err(Error::malformed(
                location(path, &record),
                "column `subject_id`: empty".to_string(),
            ));
        }
        let mut values = Vec::with_capacity(schema.attributes.len());
        for (a, spec) in schema.attributes.iter().enumerate() {
            let raw = record.get(a + 1).unwrap_or("");
            let value = if raw.is_empty() {
                ProfileValue::Missing
            } else {
                match spec.kind {
                    AttributeKind::Numeric => {
                        let x: f64 = raw.parse().map_err(|_| {
                            Error::malformed(
                                location(path, &record),
                                format!("column `{}`: cannot parse `{raw}` as a number", spec.name),
                            )
                        })?;
                        ProfileValue::Number(x)
                    }
                    AttributeKind::Categorical => {
                        let code = spec
                            .categories
                            .iter()
                            .position(|c| c == raw)
                            .ok_or_else(|| {
                                Error::malformed(
                                    location(path, &record),
                                    format!(
                                        "column `{}`: `{raw}` is not a declared category",
                                        spec.name
                                    ),
                                )
                            })?;
                        ProfileValue::Category(code as u32)
                    }
                }
            };
            values.push(value);
        }
        profiles.push(SubjectProfile { id, values });
    }
    Ok(profiles)
}

pub fn load_responses(path: &Path, items: &ItemTable) -> Result<ResponseMatrix> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &["subject_id", "position", "item_id", "correct"])?;

    // Preserve subject order of first appearance; fill position slots.
    let mut order_of: BTreeMap<SubjectId, usize> = BTreeMap::new();
    let mut rows: Vec<(SubjectId, Vec<Option<(ItemId, bool)>>)> = Vec::new();
    for record in rdr.records() {
        let record = record
            .map_err(|e| Error::malformed(path.display().to_string(), e.to_string()))?;
        let subject = SubjectId(record.get(0).unwrap_or("").to_string());
        let position: usize = parse_field(path, &record, 1, "position")?;
        if !(1..=ITEM_COUNT).contains(&position) {
            return Err(Error::malformed(
                location(path, &record),
                format!("column `position`: {position} outside 1..={ITEM_COUNT}"),
            ));
        }
        let item_id = ItemId(record.get(2).unwrap_or("").to_string());
        let correct = parse_bool(path, &record, 3, "correct")?;
        let row = match order_of.get(&subject) {
            Some(&idx) => &mut rows[idx],
            None => {
                order_of.insert(subject.clone(), rows.len());
                rows.push((subject, vec![None; ITEM_COUNT]));
                rows.last_mut().unwrap()
            }
        };
        if row.1[position - 1].is_some() {
            return Err(Error::malformed(
                location(path, &record),
                format!("subject {} has two responses at position {position}", row.0),
            ));
        }
        row.1[position - 1] = Some((item_id, correct));
    }

    let mut complete = Vec::with_capacity(rows.len());
    for (subject, cells) in rows {
        let mut filled = Vec::with_capacity(ITEM_COUNT);
        for (p, cell) in cells.into_iter().enumerate() {
            match cell {
                Some(c) => filled.push(c),
                None => {
                    return Err(Error::Corpus(format!(
                        "subject {subject} has no response at position {}",
                        p + 1
                    )))
                }
            }
        }
        complete.push((subject, filled));
    }
    ResponseMatrix::new(complete, items)
}

/// Loads and validates a complete corpus.
pub fn load_corpus(
    paths: &CorpusPaths,
    schema: ProfileSchema,
    order: SessionOrder,
    scale: RatingScale,
) -> Result<Corpus> {
    let mut items = load_items(&paths.items, &order)?;
    if let Some(ratings) = &paths.expert_ratings {
        items = apply_expert_ratings(items, ratings, &order, scale)?;
    }
    let profiles = load_profiles(&paths.profiles, &schema)?;
    let matrix = load_responses(&paths.responses, &items)?;
    Corpus::new(items, schema, order, profiles, matrix)
}

/// Loads a corpus from a directory written by [`write_corpus`].
pub fn load_corpus_dir(dir: &Path, scale: RatingScale) -> Result<Corpus> {
    let schema = load_schema(&dir.join("schema.json"))?;
    let meta_path = dir.join("meta.json");
    let order: SessionOrder = if meta_path.exists() {
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: CorpusMeta = serde_json::from_str(&text)?;
        meta.session_order.parse()?
    } else {
        SessionOrder::default()
    };
    load_corpus(&CorpusPaths::in_dir(dir), schema, order, scale)
}

#[derive(serde::Serialize, serde::Deserialize)]
struct CorpusMeta {
    session_order: String,
}

/// Writes the corpus in the standard directory layout. Output is
/// byte-deterministic for a given corpus.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, content: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, content).map_err(|e| Error::io(&path, e))
    };

    let mut items_csv = String::from("item_id,dv_id,question_type,within_dv_position,expert_difficulty\n");
    for item in corpus.items.iter() {
        items_csv.push_str(&format!(
            "{},{},{},{},{}\n",
            item.id, item.dv_id, item.question_type, item.within_dv_position, item.expert_difficulty
        ));
    }
    write("items.csv", items_csv)?;

    let mut profiles_csv = String::from("subject_id");
    for name in corpus.schema.attribute_names() {
        profiles_csv.push(',');
        profiles_csv.push_str(name);
    }
    profiles_csv.push('\n');
    for profile in &corpus.profiles {
        profiles_csv.push_str(&profile.id.0);
        for (spec, value) in corpus.schema.attributes.iter().zip(&profile.values) {
            profiles_csv.push(',');
            match value {
                ProfileValue::Number(x) => profiles_csv.push_str(&x.to_string()),
                ProfileValue::Category(code) => {
                    profiles_csv.push_str(&spec.categories[*code as usize])
                }
                ProfileValue::Missing => {}
            }
        }
        profiles_csv.push('\n');
    }
    write("profiles.csv", profiles_csv)?;

    let mut responses_csv = String::from("subject_id,position,item_id,correct\n");
    for (s, subject) in corpus.matrix.subjects().iter().enumerate() {
        for position in 1..=ITEM_COUNT as u8 {
            let item = corpus.items.get(corpus.matrix.item_at(s, position));
            responses_csv.push_str(&format!(
                "{},{},{},{}\n",
                subject,
                position,
                item.id,
                u8::from(corpus.matrix.correct_at(s, position))
            ));
        }
    }
    write("responses.csv", responses_csv)?;

    write("schema.json", serde_json::to_string_pretty(&corpus.schema)?)?;
    write(
        "meta.json",
        serde_json::to_string_pretty(&CorpusMeta {
            session_order: corpus.order.to_string(),
        })?,
    )?;
    Ok(())
}
