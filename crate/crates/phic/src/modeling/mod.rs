//! Classifiers and fold-embedded feature selection.
//!
//! A [`FittedPipeline`] bundles everything learned from a training
//! partition: imputation statistics, the surviving feature subset, and the
//! trained model. Selection runs inside the pipeline fit, on training rows
//! only, so cross-validation never leaks test information through the
//! selector.

pub mod cfs;
pub mod discretize;
pub mod forest;
pub mod info;
pub mod logistic;
pub mod mlp;
pub mod prepare;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::modeling::cfs::cfs_select;
use crate::modeling::discretize::{class_codes, discretized_codes};
use crate::modeling::forest::{fit_forest, ForestConfig, ForestModel};
use crate::modeling::info::gain_ratio;
use crate::modeling::logistic::{fit_logistic, LogisticConfig, LogisticModel};
use crate::modeling::mlp::{fit_mlp, MlpConfig, MlpModel};
use crate::modeling::prepare::Imputer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logistic,
    RandomForest,
    Mlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Logistic, ModelKind::RandomForest, ModelKind::Mlp];

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Logistic => "lr",
            ModelKind::RandomForest => "rf",
            ModelKind::Mlp => "mlp",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lr" | "logistic" => Ok(ModelKind::Logistic),
            "rf" | "random_forest" => Ok(ModelKind::RandomForest),
            "mlp" => Ok(ModelKind::Mlp),
            other => Err(Error::Argument(format!(
                "unknown model `{other}` (expected lr, rf, or mlp)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorKind {
    None,
    Cfs,
    GainRatio,
}

impl SelectorKind {
    pub const ALL: [SelectorKind; 3] = [SelectorKind::None, SelectorKind::Cfs, SelectorKind::GainRatio];

    pub fn label(self) -> &'static str {
        match self {
            SelectorKind::None => "none",
            SelectorKind::Cfs => "cfs",
            SelectorKind::GainRatio => "gain_ratio",
        }
    }
}

impl std::str::FromStr for SelectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(SelectorKind::None),
            "cfs" => Ok(SelectorKind::Cfs),
            "gain_ratio" | "gr" => Ok(SelectorKind::GainRatio),
            other => Err(Error::Argument(format!(
                "unknown selector `{other}` (expected none, cfs, or gain_ratio)"
            ))),
        }
    }
}

/// Hyperparameters for every model family, carried together so evaluation
/// configs stay a single value.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ModelParams {
    pub logistic: LogisticConfig,
    pub forest: ForestConfig,
    pub mlp: MlpConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum TrainedModel {
    Logistic(LogisticModel),
    Forest(ForestModel),
    Mlp(MlpModel),
}

impl TrainedModel {
    pub fn predict_proba(&self, table: &FeatureTable) -> Result<Vec<f64>> {
        match self {
            TrainedModel::Logistic(m) => m.predict_proba(table),
            TrainedModel::Forest(m) => m.predict_proba(table),
            TrainedModel::Mlp(m) => m.predict_proba(table),
        }
    }
}

/// Gain ratio of every feature against the label, computed on discretized
/// training values. Returned in table column order.
pub fn gain_ratio_scores(table: &FeatureTable) -> Result<Vec<(String, f64)>> {
    table.validate()?;
    let codes = discretized_codes(table);
    let class = class_codes(table);
    Ok(table
        .feature_names()
        .iter()
        .zip(&codes)
        .map(|(name, c)| (name.to_string(), gain_ratio(c, &class)))
        .collect())
}

/// Keeps features whose gain ratio is strictly positive, in table order;
/// falls back to the single best-scoring feature when none are.
pub fn gain_ratio_select(table: &FeatureTable) -> Result<Vec<String>> {
    let scores = gain_ratio_scores(table)?;
    let positive: Vec<String> = scores
        .iter()
        .filter(|(_, g)| *g > 0.0)
        .map(|(n, _)| n.clone())
        .collect();
    if !positive.is_empty() {
        return Ok(positive);
    }
    // Earliest column on ties, mirroring the subset selector.
    let mut best = 0;
    for (i, (_, g)) in scores.iter().enumerate().skip(1) {
        if *g > scores[best].1 {
            best = i;
        }
    }
    Ok(vec![scores[best].0.clone()])
}

/// Everything learned from one training partition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub model_kind: ModelKind,
    pub selector: SelectorKind,
    /// Surviving feature names, in table column order.
    pub selected: Vec<String>,
    pub imputer: Imputer,
    pub model: TrainedModel,
}

/// Fits imputation, selection, and the model on `train` alone.
pub fn fit_pipeline(
    model_kind: ModelKind,
    selector: SelectorKind,
    train: &FeatureTable,
    params: &ModelParams,
    seed: u64,
) -> Result<FittedPipeline> {
    train.validate()?;
    let imputer = Imputer::fit(train);
    let imputed = imputer.apply(train)?;

    let selected: Vec<String> = match selector {
        SelectorKind::None => imputed.feature_names().iter().map(|s| s.to_string()).collect(),
        SelectorKind::Cfs => cfs_select(&imputed)?.selected,
        SelectorKind::GainRatio => gain_ratio_select(&imputed)?,
    };
    let reduced = imputed.take_columns(&selected)?;

    let model = match model_kind {
        ModelKind::Logistic => TrainedModel::Logistic(fit_logistic(&reduced, &params.logistic)?),
        ModelKind::RandomForest => TrainedModel::Forest(fit_forest(&reduced, &params.forest, seed)?),
        ModelKind::Mlp => TrainedModel::Mlp(fit_mlp(&reduced, &params.mlp, seed)?),
    };
    Ok(FittedPipeline {
        model_kind,
        selector,
        selected,
        imputer,
        model,
    })
}

impl FittedPipeline {
    /// P(incorrect) for each row of `table`, replaying the training-time
    /// preprocessing.
    pub fn predict_proba(&self, table: &FeatureTable) -> Result<Vec<f64>> {
        let imputed = self.imputer.apply(table)?;
        let reduced = imputed.take_columns(&self.selected)?;
        self.model.predict_proba(&reduced)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{QuestionType, SubjectId};
    use crate::features::FeatureColumn;

    fn toy_table(n: usize, seed: u64) -> FeatureTable {
        let mut rng = crate::seed::derive_rng(seed, "test/pipeline-data");
        use rand::Rng;
        let signal: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let noise: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let labels: Vec<bool> = signal
            .iter()
            .map(|&x| rng.random_bool(crate::num::sigmoid(2.0 * x)))
            .collect();
        let category: Vec<u32> = (0..n as u32).map(|i| i % 3).collect();
        FeatureTable {
            position: 3,
            session: 1,
            question_type: QuestionType::Function,
            subjects: (0..n).map(|i| SubjectId(format!("s{i}"))).collect(),
            columns: vec![
                FeatureColumn::Numeric {
                    name: "signal".into(),
                    values: signal,
                },
                FeatureColumn::Numeric {
                    name: "noise".into(),
                    values: noise,
                },
                FeatureColumn::Categorical {
                    name: "cat".into(),
                    categories: vec!["a".into(), "b".into(), "c".into()],
                    codes: category,
                },
            ],
            labels,
        }
    }

    #[test]
    fn selection_runs_on_training_rows_only_and_prunes_noise() {
        let table = toy_table(200, 5);
        for selector in [SelectorKind::Cfs, SelectorKind::GainRatio] {
            let pipeline =
                fit_pipeline(ModelKind::Logistic, selector, &table, &ModelParams::default(), 1)
                    .unwrap();
            assert!(
                pipeline.selected.contains(&"signal".to_string()),
                "{selector:?} kept {:?}",
                pipeline.selected
            );
            assert!(
                !pipeline.selected.contains(&"noise".to_string()),
                "{selector:?} kept {:?}",
                pipeline.selected
            );
        }
        let none =
            fit_pipeline(ModelKind::Logistic, SelectorKind::None, &table, &ModelParams::default(), 1)
                .unwrap();
        assert_eq!(none.selected.len(), 3);
    }

    #[test]
    fn every_model_kind_fits_and_predicts_in_range() {
        let table = toy_table(120, 6);
        let mut params = ModelParams::default();
        params.forest.trees = 20;
        params.mlp.epochs = 30;
        for kind in ModelKind::ALL {
            let pipeline =
                fit_pipeline(kind, SelectorKind::Cfs, &table, &params, 7).unwrap();
            let p = pipeline.predict_proba(&table).unwrap();
            assert_eq!(p.len(), 120);
            assert!(p.iter().all(|v| (0.0..=1.0).contains(v)), "{kind:?}");
        }
    }

    #[test]
    fn pipelines_round_trip_through_serde() {
        let table = toy_table(80, 9);
        let mut params = ModelParams::default();
        params.forest.trees = 10;
        params.mlp.epochs = 20;
        for kind in ModelKind::ALL {
            let pipeline =
                fit_pipeline(kind, SelectorKind::GainRatio, &table, &params, 3).unwrap();
            let before = pipeline.predict_proba(&table).unwrap();
            let json = serde_json::to_string(&pipeline).unwrap();
            let restored: FittedPipeline = serde_json::from_str(&json).unwrap();
            let after = restored.predict_proba(&table).unwrap();
            assert_eq!(before, after, "{kind:?}");
        }
    }

    #[test]
    fn missing_values_flow_through_the_pipeline() {
        let mut table = toy_table(100, 11);
        if let FeatureColumn::Numeric { values, .. } = &mut table.columns[0] {
            values[3] = f64::NAN;
            values[40] = f64::NAN;
        }
        let pipeline = fit_pipeline(
            ModelKind::Logistic,
            SelectorKind::None,
            &table,
            &ModelParams::default(),
            2,
        )
        .unwrap();
        let p = pipeline.predict_proba(&table).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn model_and_selector_names_parse_back() {
        for kind in ModelKind::ALL {
            assert_eq!(kind.label().parse::<ModelKind>().unwrap(), kind);
        }
        for selector in SelectorKind::ALL {
            assert_eq!(selector.label().parse::<SelectorKind>().unwrap(), selector);
        }
        assert!("j48".parse::<ModelKind>().is_err());
    }
}
