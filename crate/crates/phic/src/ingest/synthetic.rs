//! Synthetic corpus generation with known ground truth.
//!
//! Respondents are simulated from the same response model the calibration
//! stage assumes: a correct answer has probability
//! `sigmoid(theta - b - drift)`, where `drift` raises the difficulty of name
//! questions in later sessions to mimic fatigue on recall. Profile attributes
//! are tied to ability through a shared latent factor so that
//! `profile_signal = 0` yields profiles independent of performance and
//! `profile_signal = 1` makes them deterministic functions of ability.
//!
//! All randomness is drawn from streams derived from the base seed and a
//! fixed scope string, so corpora are reproducible byte for byte and
//! per-subject draws never depend on how many subjects precede them.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::ContinuousCDF;

use crate::domain::{
    AttributeKind, Corpus, Item, ItemId, ItemTable, ProfileSchema, ProfileValue, QuestionType,
    ResponseMatrix, SessionOrder, SubjectId, SubjectProfile, DV_COUNT, ITEMS_PER_DV,
};
use crate::error::{Error, Result};
use crate::rasch::clipped_probability;
use crate::seed::derive_rng;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub subjects: usize,
    pub seed: u64,
    /// Mean of the respondent ability distribution, in logits.
    pub ability_mean: f64,
    /// Spread of respondent ability, in logits.
    pub ability_sd: f64,
    /// Spread of item difficulty before clipping.
    pub difficulty_sd: f64,
    /// Difficulties are clipped to this closed interval, then re-centered.
    pub difficulty_clip: (f64, f64),
    /// Correlation in [0, 1] between ability and the latent factor behind
    /// every profile attribute. Zero makes profiles pure noise.
    pub profile_signal: f64,
    /// Logits added to name-question difficulty per elapsed session.
    pub name_fatigue_drift: f64,
    /// Spread of the noise each simulated expert adds to an item rating.
    pub expert_rating_noise: f64,
    pub expert_raters: usize,
    pub order: SessionOrder,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            subjects: 300,
            seed: 1,
            ability_mean: 0.0,
            ability_sd: 1.0,
            difficulty_sd: 1.09,
            difficulty_clip: (-2.38, 2.36),
            profile_signal: 0.0,
            name_fatigue_drift: 0.0,
            expert_rating_noise: 0.8,
            expert_raters: 7,
            order: SessionOrder::default(),
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        if self.subjects == 0 {
            return Err(Error::Argument("subjects must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.profile_signal) {
            return Err(Error::Argument(format!(
                "profile_signal {} outside [0, 1]",
                self.profile_signal
            )));
        }
        if self.ability_sd < 0.0 || self.difficulty_sd < 0.0 || self.expert_rating_noise < 0.0 {
            return Err(Error::Argument("spreads must be non-negative".into()));
        }
        if self.difficulty_clip.0 >= self.difficulty_clip.1 {
            return Err(Error::Argument(format!(
                "difficulty clip interval ({}, {}) is empty",
                self.difficulty_clip.0, self.difficulty_clip.1
            )));
        }
        if self.expert_raters == 0 {
            return Err(Error::Argument("expert_raters must be at least 1".into()));
        }
        for v in [
            self.ability_mean,
            self.ability_sd,
            self.difficulty_sd,
            self.difficulty_clip.0,
            self.difficulty_clip.1,
            self.name_fatigue_drift,
        ] {
            if !v.is_finite() {
                return Err(Error::Argument("config values must be finite".into()));
            }
        }
        Ok(())
    }
}

/// The latent state behind a generated corpus. Written alongside it so
/// evaluations can be compared against the generative model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub difficulties: BTreeMap<ItemId, f64>,
    pub abilities: BTreeMap<SubjectId, f64>,
    pub name_fatigue_drift: f64,
    pub profile_signal: f64,
}

impl GroundTruth {
    /// Generative probability that `subject` answers `item` incorrectly when
    /// it is administered in `session` as a question of `question_type`.
    pub fn incorrect_probability(
        &self,
        subject: &SubjectId,
        item: &ItemId,
        session: u8,
        question_type: QuestionType,
    ) -> Option<f64> {
        let theta = *self.abilities.get(subject)?;
        let b = *self.difficulties.get(item)?;
        let drift = drift_for(self.name_fatigue_drift, session, question_type);
        Some(1.0 - clipped_probability(theta - b - drift))
    }
}

fn drift_for(name_fatigue_drift: f64, session: u8, question_type: QuestionType) -> f64 {
    if question_type == QuestionType::Name {
        name_fatigue_drift * f64::from(session - 1)
    } else {
        0.0
    }
}

fn item_id(dv: u8, within: u8) -> ItemId {
    ItemId(format!("d{dv}q{within}"))
}

/// Generates a corpus under `config`, returning it with the latent state
/// that produced it.
pub fn generate(config: &SyntheticConfig) -> Result<(Corpus, GroundTruth)> {
    config.validate()?;
    let schema = ProfileSchema::default();
    let (items, difficulties) = generate_items(config)?;
    let cuts = category_cuts(&schema);

    let standard = Normal::new(0.0, 1.0).expect("unit normal");
    let ability_dist =
        Normal::new(config.ability_mean, config.ability_sd).expect("validated spread");
    let signal = config.profile_signal;
    let noise_share = (1.0 - signal * signal).sqrt();

    let mut profiles = Vec::with_capacity(config.subjects);
    let mut rows = Vec::with_capacity(config.subjects);
    let mut abilities = BTreeMap::new();

    for i in 0..config.subjects {
        // Fixed draw order per subject: ability, DV order, profile noise,
        // then responses. Changing it changes every generated corpus.
        let mut rng = derive_rng(config.seed, &format!("synth/subject/{i}"));
        let subject = SubjectId(format!("s{:05}", i + 1));
        let theta: f64 = ability_dist.sample(&mut rng);
        let z = if config.ability_sd > 0.0 {
            (theta - config.ability_mean) / config.ability_sd
        } else {
            0.0
        };

        let mut dv_order: Vec<u8> = (1..=DV_COUNT as u8).collect();
        dv_order.shuffle(&mut rng);

        let mut values = Vec::with_capacity(schema.attributes.len());
        for (spec, cut) in schema.attributes.iter().zip(&cuts) {
            let eps: f64 = standard.sample(&mut rng);
            let latent = signal * z + noise_share * eps;
            values.push(attribute_value(spec.kind, &spec.name, cut, latent));
        }
        profiles.push(SubjectProfile {
            id: subject.clone(),
            values,
        });

        let mut cells = Vec::with_capacity(items.len());
        for (session0, &dv) in dv_order.iter().enumerate() {
            for within in 1..=ITEMS_PER_DV as u8 {
                let id = item_id(dv, within);
                let b = difficulties[&id];
                let question_type = config.order.type_at(within);
                let drift = drift_for(config.name_fatigue_drift, session0 as u8 + 1, question_type);
                let p = clipped_probability(theta - b - drift);
                cells.push((id, rng.random_bool(p)));
            }
        }
        rows.push((subject.clone(), cells));
        abilities.insert(subject, theta);
    }

    let matrix = ResponseMatrix::new(rows, &items)?;
    let truth = GroundTruth {
        difficulties,
        abilities,
        name_fatigue_drift: config.name_fatigue_drift,
        profile_signal: config.profile_signal,
    };
    let corpus = Corpus::new(items, schema, config.order.clone(), profiles, matrix)?;
    Ok((corpus, truth))
}

fn generate_items(config: &SyntheticConfig) -> Result<(ItemTable, BTreeMap<ItemId, f64>)> {
    let mut rng = derive_rng(config.seed, "synth/items");
    let diff_dist = Normal::new(0.0, config.difficulty_sd).expect("validated spread");
    let (lo, hi) = config.difficulty_clip;

    let mut raw = Vec::with_capacity(DV_COUNT * ITEMS_PER_DV);
    for _ in 0..DV_COUNT * ITEMS_PER_DV {
        let b: f64 = diff_dist.sample(&mut rng);
        raw.push(b.clamp(lo, hi));
    }
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    for b in &mut raw {
        *b -= mean;
    }

    let rating_noise = Normal::new(0.0, config.expert_rating_noise).expect("validated spread");
    let mut ratings_rng = derive_rng(config.seed, "synth/ratings");

    let mut items = Vec::with_capacity(raw.len());
    let mut difficulties = BTreeMap::new();
    let mut k = 0;
    for dv in 1..=DV_COUNT as u8 {
        for within in 1..=ITEMS_PER_DV as u8 {
            let b = raw[k];
            k += 1;
            let ratings: Vec<f64> = (0..config.expert_raters)
                .map(|_| {
                    let noisy = 3.0 + 0.7 * b + rating_noise.sample(&mut ratings_rng);
                    noisy.round().clamp(1.0, 5.0)
                })
                .collect();
            let id = item_id(dv, within);
            difficulties.insert(id.clone(), b);
            items.push(Item {
                id,
                dv_id: dv,
                question_type: config.order.type_at(within),
                within_dv_position: within,
                expert_difficulty: crate::num::median(&ratings).expect("raters >= 1"),
            });
        }
    }
    let table = ItemTable::new(items, &config.order)?;
    Ok((table, difficulties))
}

/// Normal quantile cut points separating a categorical attribute's bins, one
/// vector per schema attribute (empty for numeric attributes).
fn category_cuts(schema: &ProfileSchema) -> Vec<Vec<f64>> {
    let normal = statrs::distribution::Normal::new(0.0, 1.0).expect("unit normal");
    schema
        .attributes
        .iter()
        .map(|spec| match spec.kind {
            AttributeKind::Numeric => Vec::new(),
            AttributeKind::Categorical => {
                let k = spec.categories.len();
                (1..k)
                    .map(|j| normal.inverse_cdf(j as f64 / k as f64))
                    .collect()
            }
        })
        .collect()
}

fn attribute_value(kind: AttributeKind, name: &str, cuts: &[f64], latent: f64) -> ProfileValue {
    match kind {
        AttributeKind::Numeric => {
            let x = match name {
                "Age" => (38.0 + 12.0 * latent).round().clamp(18.0, 80.0),
                "DataVizExperience" => (6.0 + 4.0 * latent).round().clamp(0.0, 30.0),
                _ => (50.0 + 15.0 * latent).round(),
            };
            ProfileValue::Number(x)
        }
        AttributeKind::Categorical => {
            let code = cuts.iter().filter(|&&c| latent > c).count() as u32;
            ProfileValue::Category(code)
        }
    }
}
