//! Core study objects: items, respondent profiles, the response matrix, and
//! the per-position datasets derived from it.
//!
//! The study design is fixed: 8 data visualizations (DVs), 4 questions each,
//! 32 items total. Every respondent answers all 32, one DV per session, with
//! DV order randomized per respondent and question order inside a DV fixed.
//! Administration position `p` (1..=32) therefore determines the session
//! `(p-1)/4 + 1` and, through the configured within-session order, the
//! question type; it does *not* determine the item, which varies per
//! respondent.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DV_COUNT: usize = 8;
pub const ITEMS_PER_DV: usize = 4;
pub const ITEM_COUNT: usize = DV_COUNT * ITEMS_PER_DV;
pub const SESSION_COUNT: usize = DV_COUNT;
pub const PROFILE_ATTRIBUTE_COUNT: usize = 18;

/// Column names produced by feature assembly. Profile attributes must not
/// collide with them.
pub const RESERVED_COLUMN_NAMES: [&str; 8] = [
    "subject_id",
    "item_id",
    "position",
    "label",
    "expert_difficulty",
    "rasch_difficulty",
    "perc_correct",
    "median_difficulty",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionType {
    /// Asks for the name of the visualized entity.
    Name,
    /// Asks what the visualization does or shows.
    Function,
    /// Asks about a specific encoded value.
    Content,
}

impl QuestionType {
    pub const ALL: [QuestionType; 3] = [
        QuestionType::Name,
        QuestionType::Function,
        QuestionType::Content,
    ];
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            QuestionType::Name => "name",
            QuestionType::Function => "function",
            QuestionType::Content => "content",
        };
        f.write_str(s)
    }
}

impl FromStr for QuestionType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "name" => Ok(QuestionType::Name),
            "function" => Ok(QuestionType::Function),
            "content" => Ok(QuestionType::Content),
            other => Err(Error::Argument(format!("unknown question type `{other}`"))),
        }
    }
}

/// Question-type order inside a session. Must contain one Name, two
/// Function, and one Content question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionOrder([QuestionType; ITEMS_PER_DV]);

impl SessionOrder {
    pub fn new(order: [QuestionType; ITEMS_PER_DV]) -> Result<Self> {
        let count = |t| order.iter().filter(|&&q| q == t).count();
        if count(QuestionType::Name) != 1
            || count(QuestionType::Function) != 2
            || count(QuestionType::Content) != 1
        {
            return Err(Error::Argument(format!(
                "session order must contain one name, two function, one content question, got {order:?}"
            )));
        }
        Ok(SessionOrder(order))
    }

    /// Question type at within-session slot `w` (1-based).
    pub fn type_at(&self, within: u8) -> QuestionType {
        self.0[(within - 1) as usize]
    }

    pub fn as_slice(&self) -> &[QuestionType] {
        &self.0
    }
}

impl Default for SessionOrder {
    fn default() -> Self {
        SessionOrder([
            QuestionType::Name,
            QuestionType::Function,
            QuestionType::Function,
            QuestionType::Content,
        ])
    }
}

impl fmt::Display for SessionOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|q| q.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for SessionOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').collect();
        if parts.len() != ITEMS_PER_DV {
            return Err(Error::Argument(format!(
                "session order needs {ITEMS_PER_DV} comma-separated question types, got `{s}`"
            )));
        }
        let mut order = [QuestionType::Name; ITEMS_PER_DV];
        for (slot, part) in order.iter_mut().zip(parts) {
            *slot = part.parse()?;
        }
        SessionOrder::new(order)
    }
}

macro_rules! id_type {
    ($name:ident, $doc:literal) => {
        #[doc = $doc]
        #[derive(
            Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_string())
            }
        }
    };
}

id_type!(ItemId, "Opaque item identifier.");
id_type!(SubjectId, "Opaque respondent identifier.");

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Item {
    pub id: ItemId,
    /// Owning data visualization, 1..=8.
    pub dv_id: u8,
    pub question_type: QuestionType,
    /// Slot inside the DV, 1..=4. Matches the within-session order.
    pub within_dv_position: u8,
    /// Median expert difficulty rating on the configured scale.
    pub expert_difficulty: f64,
}

/// All 32 items, stored in (dv_id, within_dv_position) order so that index
/// arithmetic never depends on input file ordering.
#[derive(Debug, Clone)]
pub struct ItemTable {
    items: Vec<Item>,
    by_id: HashMap<ItemId, u32>,
}

impl ItemTable {
    pub fn new(mut items: Vec<Item>, order: &SessionOrder) -> Result<Self> {
        if items.len() != ITEM_COUNT {
            return Err(Error::Corpus(format!(
                "expected {ITEM_COUNT} items, got {}",
                items.len()
            )));
        }
        items.sort_by_key(|it| (it.dv_id, it.within_dv_position));
        let mut by_id = HashMap::new();
        let mut seen_slots = HashSet::new();
        for (idx, item) in items.iter().enumerate() {
            if !(1..=DV_COUNT as u8).contains(&item.dv_id) {
                return Err(Error::Corpus(format!(
                    "item {}: dv_id {} outside 1..={DV_COUNT}",
                    item.id, item.dv_id
                )));
            }
            if !(1..=ITEMS_PER_DV as u8).contains(&item.within_dv_position) {
                return Err(Error::Corpus(format!(
                    "item {}: within_dv_position {} outside 1..={ITEMS_PER_DV}",
                    item.id, item.within_dv_position
                )));
            }
            if !item.expert_difficulty.is_finite() {
                return Err(Error::Corpus(format!(
                    "item {}: expert_difficulty is not finite",
                    item.id
                )));
            }
            let expected = order.type_at(item.within_dv_position);
            if item.question_type != expected {
                return Err(Error::Corpus(format!(
                    "item {}: slot {} of a session carries {expected} questions, item declares {}",
                    item.id, item.within_dv_position, item.question_type
                )));
            }
            if !seen_slots.insert((item.dv_id, item.within_dv_position)) {
                return Err(Error::Corpus(format!(
                    "duplicate slot: dv {} position {}",
                    item.dv_id, item.within_dv_position
                )));
            }
            if by_id.insert(item.id.clone(), idx as u32).is_some() {
                return Err(Error::Corpus(format!("duplicate item id {}", item.id)));
            }
        }
        Ok(ItemTable { items, by_id })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, idx: u32) -> &Item {
        &self.items[idx as usize]
    }

    pub fn index_of(&self, id: &ItemId) -> Option<u32> {
        self.by_id.get(id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Item> {
        self.items.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub kind: AttributeKind,
    /// Declared category values; empty for numeric attributes.
    #[serde(default)]
    pub categories: Vec<String>,
}

impl AttributeSpec {
    pub fn numeric(name: &str) -> Self {
        AttributeSpec {
            name: name.to_string(),
            kind: AttributeKind::Numeric,
            categories: Vec::new(),
        }
    }

    pub fn categorical(name: &str, categories: &[&str]) -> Self {
        AttributeSpec {
            name: name.to_string(),
            kind: AttributeKind::Categorical,
            categories: categories.iter().map(|c| c.to_string()).collect(),
        }
    }
}

/// Declarative description of the 18 profile attributes a corpus carries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileSchema {
    pub attributes: Vec<AttributeSpec>,
}

impl ProfileSchema {
    pub fn validate(&self) -> Result<()> {
        if self.attributes.len() != PROFILE_ATTRIBUTE_COUNT {
            return Err(Error::Corpus(format!(
                "profile schema must declare exactly {PROFILE_ATTRIBUTE_COUNT} attributes, got {}",
                self.attributes.len()
            )));
        }
        let mut names = HashSet::new();
        for spec in &self.attributes {
            if spec.name.trim().is_empty() {
                return Err(Error::Corpus("empty attribute name".into()));
            }
            if RESERVED_COLUMN_NAMES.contains(&spec.name.as_str()) {
                return Err(Error::Corpus(format!(
                    "attribute name `{}` is reserved",
                    spec.name
                )));
            }
            if !names.insert(spec.name.as_str()) {
                return Err(Error::Corpus(format!(
                    "duplicate attribute name `{}`",
                    spec.name
                )));
            }
            match spec.kind {
                AttributeKind::Numeric => {
                    if !spec.categories.is_empty() {
                        return Err(Error::Corpus(format!(
                            "numeric attribute `{}` must not declare categories",
                            spec.name
                        )));
                    }
                }
                AttributeKind::Categorical => {
                    if spec.categories.len() < 2 {
                        return Err(Error::Corpus(format!(
                            "categorical attribute `{}` needs at least two categories",
                            spec.name
                        )));
                    }
                    let unique: HashSet<&str> =
                        spec.categories.iter().map(|c| c.as_str()).collect();
                    if unique.len() != spec.categories.len() {
                        return Err(Error::Corpus(format!(
                            "attribute `{}` declares duplicate categories",
                            spec.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn attribute_names(&self) -> Vec<&str> {
        self.attributes.iter().map(|a| a.name.as_str()).collect()
    }
}

const COUNTRIES: [&str; 10] = [
    "argentina",
    "brazil",
    "canada",
    "germany",
    "india",
    "italy",
    "mexico",
    "spain",
    "uk",
    "usa",
];

impl Default for ProfileSchema {
    /// The schema the shipped study uses. Real corpora may declare their own
    /// 18 attributes instead.
    fn default() -> Self {
        ProfileSchema {
            attributes: vec![
                AttributeSpec::numeric("Age"),
                AttributeSpec::categorical(
                    "Gender",
                    &["female", "male", "nonbinary", "prefer_not_to_say"],
                ),
                AttributeSpec::categorical("CountryOfBirth", &COUNTRIES),
                AttributeSpec::categorical("CountryOfResidence", &COUNTRIES),
                AttributeSpec::categorical("Nationality", &COUNTRIES),
                AttributeSpec::categorical(
                    "Language",
                    &["english", "spanish", "german", "french", "italian", "portuguese", "other"],
                ),
                AttributeSpec::categorical(
                    "Education",
                    &["secondary", "bachelor", "master", "doctorate", "other"],
                ),
                AttributeSpec::categorical(
                    "Profession",
                    &["student", "engineer", "researcher", "educator", "designer", "manager", "other"],
                ),
                AttributeSpec::categorical(
                    "DataVizExpertise",
                    &["none", "basic", "intermediate", "advanced"],
                ),
                AttributeSpec::numeric("DataVizExperience"),
                AttributeSpec::categorical(
                    "EmploymentStatus",
                    &["student", "employed", "self_employed", "unemployed", "retired"],
                ),
                AttributeSpec::categorical(
                    "FieldOfStudy",
                    &["stem", "social_sciences", "humanities", "business", "arts", "health", "other"],
                ),
                AttributeSpec::categorical(
                    "EnglishProficiency",
                    &["native", "fluent", "intermediate", "basic"],
                ),
                AttributeSpec::categorical(
                    "StatisticsTraining",
                    &["none", "introductory", "advanced"],
                ),
                AttributeSpec::categorical(
                    "ChartReadingFrequency",
                    &["never", "rarely", "monthly", "weekly", "daily"],
                ),
                AttributeSpec::categorical(
                    "NewsConsumption",
                    &["never", "occasionally", "weekly", "daily"],
                ),
                AttributeSpec::categorical("ColorVisionDeficiency", &["no", "yes"]),
                AttributeSpec::categorical(
                    "DeviceUsed",
                    &["desktop", "laptop", "tablet", "smartphone"],
                ),
            ],
        }
    }
}

/// One profile attribute value. Missing answers are explicit rather than
/// encoded as sentinels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ProfileValue {
    Number(f64),
    /// Index into the attribute's declared category list.
    Category(u32),
    Missing,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubjectProfile {
    pub id: SubjectId,
    /// One value per schema attribute, in schema order.
    pub values: Vec<ProfileValue>,
}

impl SubjectProfile {
    pub fn validate(&self, schema: &ProfileSchema) -> Result<()> {
        if self.values.len() != schema.attributes.len() {
            return Err(Error::Corpus(format!(
                "subject {}: {} profile values for {} schema attributes",
                self.id,
                self.values.len(),
                schema.attributes.len()
            )));
        }
        for (spec, value) in schema.attributes.iter().zip(&self.values) {
            match (spec.kind, value) {
                (_, ProfileValue::Missing) => {}
                (AttributeKind::Numeric, ProfileValue::Number(x)) => {
                    if !x.is_finite() {
                        return Err(Error::Corpus(format!(
                            "subject {}: attribute `{}` is not finite",
                            self.id, spec.name
                        )));
                    }
                }
                (AttributeKind::Categorical, ProfileValue::Category(code)) => {
                    if *code as usize >= spec.categories.len() {
                        return Err(Error::Corpus(format!(
                            "subject {}: attribute `{}` category code {} out of range",
                            self.id, spec.name, code
                        )));
                    }
                }
                (kind, other) => {
                    return Err(Error::Corpus(format!(
                        "subject {}: attribute `{}` is {kind:?} but value is {other:?}",
                        self.id, spec.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Session and question type implied by an administration position.
pub fn position_semantics(position: u8, order: &SessionOrder) -> Result<(u8, QuestionType)> {
    if !(1..=ITEM_COUNT as u8).contains(&position) {
        return Err(Error::Argument(format!(
            "position {position} outside 1..={ITEM_COUNT}"
        )));
    }
    let session = (position - 1) / ITEMS_PER_DV as u8 + 1;
    let within = (position - 1) % ITEMS_PER_DV as u8 + 1;
    Ok((session, order.type_at(within)))
}

/// Complete response data: for every respondent, the item seen and the
/// correctness at each of the 32 positions.
#[derive(Debug, Clone)]
pub struct ResponseMatrix {
    subjects: Vec<SubjectId>,
    /// Item index (into the [`ItemTable`]) per (subject, position), row-major.
    item_of: Vec<u32>,
    correct: Vec<bool>,
}

impl ResponseMatrix {
    /// Builds and validates the matrix. Each subject must supply exactly one
    /// response per position, cover every item exactly once, and keep each
    /// session inside a single DV in within-DV order.
    pub fn new(
        rows: Vec<(SubjectId, Vec<(ItemId, bool)>)>,
        items: &ItemTable,
    ) -> Result<Self> {
        let mut subjects = Vec::with_capacity(rows.len());
        let mut item_of = Vec::with_capacity(rows.len() * ITEM_COUNT);
        let mut correct = Vec::with_capacity(rows.len() * ITEM_COUNT);
        let mut seen_subjects = HashSet::new();

        for (subject, cells) in rows {
            if !seen_subjects.insert(subject.clone()) {
                return Err(Error::Corpus(format!("duplicate subject {subject}")));
            }
            if cells.len() != ITEM_COUNT {
                return Err(Error::Corpus(format!(
                    "subject {subject}: {} responses, expected {ITEM_COUNT}",
                    cells.len()
                )));
            }
            let mut seen_items = HashSet::new();
            let mut indices = Vec::with_capacity(ITEM_COUNT);
            for (position0, (item_id, ok)) in cells.iter().enumerate() {
                let idx = items.index_of(item_id).ok_or_else(|| {
                    Error::Corpus(format!(
                        "subject {subject}, position {}: unknown item {item_id}",
                        position0 + 1
                    ))
                })?;
                if !seen_items.insert(idx) {
                    return Err(Error::Corpus(format!(
                        "subject {subject}: item {item_id} answered more than once"
                    )));
                }
                indices.push(idx);
                correct.push(*ok);
            }
            for session0 in 0..SESSION_COUNT {
                let block = &indices[session0 * ITEMS_PER_DV..(session0 + 1) * ITEMS_PER_DV];
                let dv = items.get(block[0]).dv_id;
                for (within0, &idx) in block.iter().enumerate() {
                    let item = items.get(idx);
                    if item.dv_id != dv {
                        return Err(Error::Corpus(format!(
                            "subject {subject}, session {}: items from DVs {dv} and {}",
                            session0 + 1,
                            item.dv_id
                        )));
                    }
                    if item.within_dv_position != within0 as u8 + 1 {
                        return Err(Error::Corpus(format!(
                            "subject {subject}, session {}: item {} out of within-DV order",
                            session0 + 1,
                            item.id
                        )));
                    }
                }
            }
            item_of.extend(indices);
            subjects.push(subject);
        }

        if subjects.is_empty() {
            return Err(Error::Corpus("response matrix has no subjects".into()));
        }
        Ok(ResponseMatrix {
            subjects,
            item_of,
            correct,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn subjects(&self) -> &[SubjectId] {
        &self.subjects
    }

    pub fn subject_index(&self, id: &SubjectId) -> Option<usize> {
        self.subjects.iter().position(|s| s == id)
    }

    /// Item index answered by `subject` (row index) at `position` (1-based).
    pub fn item_at(&self, subject: usize, position: u8) -> u32 {
        self.item_of[subject * ITEM_COUNT + (position - 1) as usize]
    }

    pub fn correct_at(&self, subject: usize, position: u8) -> bool {
        self.correct[subject * ITEM_COUNT + (position - 1) as usize]
    }

    /// Correctness of `subject` on the item with table index `item`, if
    /// answered (always true for a validated matrix).
    pub fn correct_on_item(&self, subject: usize, item: u32) -> Option<bool> {
        let row = &self.item_of[subject * ITEM_COUNT..(subject + 1) * ITEM_COUNT];
        row.iter()
            .position(|&i| i == item)
            .map(|pos| self.correct[subject * ITEM_COUNT + pos])
    }

    /// Copy of the matrix with one subject's correctness bits replaced.
    /// Intended for leakage checks in tests.
    pub fn with_subject_responses(&self, subject: usize, correct: &[bool; ITEM_COUNT]) -> Self {
        let mut out = self.clone();
        out.correct[subject * ITEM_COUNT..(subject + 1) * ITEM_COUNT].copy_from_slice(correct);
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ResponseRow {
    /// Row index into the matrix subject list.
    pub subject: usize,
    /// Item index into the [`ItemTable`].
    pub item: u32,
    pub correct: bool,
}

/// All responses at one administration position: the unit the classifiers
/// are trained on.
#[derive(Debug, Clone)]
pub struct PositionalDataset {
    pub position: u8,
    pub session: u8,
    pub question_type: QuestionType,
    pub rows: Vec<ResponseRow>,
}

/// Splits the matrix into its 32 positional datasets, one row per subject
/// each, in matrix subject order.
pub fn build_positional_datasets(
    matrix: &ResponseMatrix,
    order: &SessionOrder,
) -> Vec<PositionalDataset> {
    (1..=ITEM_COUNT as u8)
        .map(|position| {
            let (session, question_type) =
                position_semantics(position, order).expect("position in range");
            let rows = (0..matrix.n_subjects())
                .map(|subject| ResponseRow {
                    subject,
                    item: matrix.item_at(subject, position),
                    correct: matrix.correct_at(subject, position),
                })
                .collect();
            PositionalDataset {
                position,
                session,
                question_type,
                rows,
            }
        })
        .collect()
}

/// A validated corpus: everything downstream stages consume.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub items: ItemTable,
    pub schema: ProfileSchema,
    pub order: SessionOrder,
    /// Aligned with `matrix` subject order.
    pub profiles: Vec<SubjectProfile>,
    pub matrix: ResponseMatrix,
}

impl Corpus {
    pub fn new(
        items: ItemTable,
        schema: ProfileSchema,
        order: SessionOrder,
        profiles: Vec<SubjectProfile>,
        matrix: ResponseMatrix,
    ) -> Result<Self> {
        schema.validate()?;
        let mut by_id: HashMap<SubjectId, SubjectProfile> = HashMap::new();
        for profile in profiles {
            profile.validate(&schema)?;
            if by_id.insert(profile.id.clone(), profile).is_some() {
                return Err(Error::Corpus(format!(
                    "duplicate profile for subject {}",
                    by_id.len()
                )));
            }
        }
        let mut aligned = Vec::with_capacity(matrix.n_subjects());
        for subject in matrix.subjects() {
            let profile = by_id.remove(subject).ok_or_else(|| {
                Error::Corpus(format!("subject {subject} has responses but no profile"))
            })?;
            aligned.push(profile);
        }
        if let Some(extra) = by_id.keys().next() {
            return Err(Error::Corpus(format!(
                "subject {extra} has a profile but no responses"
            )));
        }
        Ok(Corpus {
            items,
            schema,
            order,
            profiles: aligned,
            matrix,
        })
    }
}
