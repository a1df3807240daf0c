//! Run configuration: defaults, the flat key=value file, and overrides.
//!
//! Precedence is defaults, then the config file, then command-line flags.
//! The effective configuration is echoed verbatim into every stage
//! manifest, so a run can always be reproduced from its manifest alone.
//! There is no environment-variable configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::analysis::{FeatureGroup, GridAggregate};
use crate::domain::{SessionOrder, SESSION_COUNT};
use crate::error::{Error, Result};
use crate::ingest::RatingScale;
use crate::modeling::{ModelKind, SelectorKind};
use crate::rasch::HoldoutMode;

/// Every tunable the CLI understands. Each field has a default, so any
/// subset of keys is a valid configuration file.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Output directory; every artifact and manifest lands here.
    pub out: PathBuf,
    /// Source directory for `ingest`. Empty means not set.
    pub input: Option<PathBuf>,
    /// Base seed; every random stream is derived from it and a scope label.
    pub seed: u64,
    /// Worker threads. 0 means one per CPU. Output bytes never depend on it.
    pub workers: usize,
    pub rating_min: f64,
    pub rating_max: f64,

    // Synthetic corpus.
    pub subjects: usize,
    pub ability_mean: f64,
    pub ability_sd: f64,
    pub difficulty_sd: f64,
    pub difficulty_clip_low: f64,
    pub difficulty_clip_high: f64,
    pub profile_signal: f64,
    pub drift: f64,
    pub expert_rating_noise: f64,
    pub expert_raters: usize,
    pub session_order: SessionOrder,

    // Calibration.
    pub rasch_tolerance: f64,
    pub rasch_max_iterations: usize,
    pub bias_correction: bool,
    pub loo_mode: HoldoutMode,

    // Evaluation harness.
    pub folds: usize,
    /// Cross-validation repeats; pass seeds are 1..=cv_seeds.
    pub cv_seeds: usize,
    pub models: Vec<ModelKind>,
    pub fs: Vec<SelectorKind>,
    pub fold_averaged: bool,
    pub trees: usize,
    pub mlp_epochs: usize,

    // Analysis.
    pub grid_aggregate: GridAggregate,
    pub session_pairs: Vec<(u8, u8)>,
    pub groups: Vec<FeatureGroup>,
    pub ablation_model: ModelKind,
    pub ablation_fs: SelectorKind,

    // Adaptive simulation.
    pub policies: Vec<String>,
    pub tau: f64,
    pub respondents: usize,
    /// 0 runs the full bank.
    pub item_budget: usize,
    /// 0 disables the precision stop.
    pub se_target: f64,
    pub sim_ability_mean: f64,
    pub sim_ability_sd: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out: PathBuf::from("out"),
            input: None,
            seed: 1,
            workers: 0,
            rating_min: 1.0,
            rating_max: 5.0,
            subjects: 300,
            ability_mean: 0.0,
            ability_sd: 1.0,
            difficulty_sd: 1.09,
            difficulty_clip_low: -2.38,
            difficulty_clip_high: 2.36,
            profile_signal: 0.0,
            drift: 0.0,
            expert_rating_noise: 0.8,
            expert_raters: 7,
            session_order: SessionOrder::default(),
            rasch_tolerance: 0.005,
            rasch_max_iterations: 200,
            bias_correction: false,
            loo_mode: HoldoutMode::WholeRow,
            folds: 10,
            cv_seeds: 10,
            models: ModelKind::ALL.to_vec(),
            fs: vec![SelectorKind::None, SelectorKind::Cfs],
            fold_averaged: false,
            trees: 100,
            mlp_epochs: 500,
            grid_aggregate: GridAggregate::Mean,
            session_pairs: vec![(1, SESSION_COUNT as u8)],
            groups: FeatureGroup::ALL_GROUPS.to_vec(),
            ablation_model: ModelKind::Logistic,
            ablation_fs: SelectorKind::Cfs,
            policies: vec![
                "random".to_string(),
                "max_info".to_string(),
                "phic_constrained".to_string(),
            ],
            tau: 0.25,
            respondents: 500,
            item_budget: 0,
            se_target: 0.0,
            sim_ability_mean: 0.0,
            sim_ability_sd: 1.0,
        }
    }
}

impl RunConfig {
    /// Applies every `key = value` line of a configuration file. Blank
    /// lines and lines starting with `#` are ignored.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::malformed(
                    format!("{}:{}", path.display(), lineno + 1),
                    format!("expected key=value, got {line:?}"),
                ));
            };
            self.apply(key.trim(), value.trim()).map_err(|e| {
                Error::malformed(format!("{}:{}", path.display(), lineno + 1), e.to_string())
            })?;
        }
        Ok(())
    }

    /// Applies one `key=value` override as given on the command line.
    pub fn apply_pair(&mut self, pair: &str) -> Result<()> {
        let Some((key, value)) = pair.split_once('=') else {
            return Err(Error::Argument(format!(
                "expected KEY=VALUE in --set, got {pair:?}"
            )));
        };
        self.apply(key.trim(), value.trim())
    }

    /// Sets one configuration key from its string form.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "out" => self.out = PathBuf::from(value),
            "in" => {
                self.input = (!value.is_empty()).then(|| PathBuf::from(value));
            }
            "seed" => self.seed = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "rating_min" => self.rating_min = parse(key, value)?,
            "rating_max" => self.rating_max = parse(key, value)?,
            "subjects" => self.subjects = parse(key, value)?,
            "ability_mean" => self.ability_mean = parse(key, value)?,
            "ability_sd" => self.ability_sd = parse(key, value)?,
            "difficulty_sd" => self.difficulty_sd = parse(key, value)?,
            "difficulty_clip_low" => self.difficulty_clip_low = parse(key, value)?,
            "difficulty_clip_high" => self.difficulty_clip_high = parse(key, value)?,
            "profile_signal" => self.profile_signal = parse(key, value)?,
            "drift" => self.drift = parse(key, value)?,
            "expert_rating_noise" => self.expert_rating_noise = parse(key, value)?,
            "expert_raters" => self.expert_raters = parse(key, value)?,
            "session_order" => self.session_order = value.parse()?,
            "rasch_tolerance" => self.rasch_tolerance = parse(key, value)?,
            "rasch_max_iterations" => self.rasch_max_iterations = parse(key, value)?,
            "bias_correction" => self.bias_correction = parse_bool(key, value)?,
            "loo_mode" => self.loo_mode = parse_loo_mode(value)?,
            "folds" => self.folds = parse(key, value)?,
            "cv_seeds" => self.cv_seeds = parse(key, value)?,
            "models" => self.models = parse_list(value, "models")?,
            "fs" => self.fs = parse_list(value, "fs")?,
            "fold_averaged" => self.fold_averaged = parse_bool(key, value)?,
            "trees" => self.trees = parse(key, value)?,
            "mlp_epochs" => self.mlp_epochs = parse(key, value)?,
            "grid_aggregate" => self.grid_aggregate = parse_aggregate(value)?,
            "session_pairs" => self.session_pairs = parse_session_pairs(value)?,
            "groups" => self.groups = parse_list(value, "groups")?,
            "ablation_model" => self.ablation_model = value.parse()?,
            "ablation_fs" => self.ablation_fs = value.parse()?,
            "policies" => self.policies = parse_policies(value)?,
            "tau" => self.tau = parse(key, value)?,
            "respondents" => self.respondents = parse(key, value)?,
            "item_budget" => self.item_budget = parse(key, value)?,
            "se_target" => self.se_target = parse(key, value)?,
            "sim_ability_mean" => self.sim_ability_mean = parse(key, value)?,
            "sim_ability_sd" => self.sim_ability_sd = parse(key, value)?,
            other => {
                return Err(Error::Argument(format!(
                    "unknown configuration key `{other}`"
                )))
            }
        }
        Ok(())
    }

    /// The full effective configuration as sorted key=value strings; this
    /// is what every manifest embeds.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            map.insert(k.to_string(), v);
        };
        put("out", self.out.display().to_string());
        put(
            "in",
            self.input
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
        );
        put("seed", self.seed.to_string());
        put("workers", self.workers.to_string());
        put("rating_min", self.rating_min.to_string());
        put("rating_max", self.rating_max.to_string());
        put("subjects", self.subjects.to_string());
        put("ability_mean", self.ability_mean.to_string());
        put("ability_sd", self.ability_sd.to_string());
        put("difficulty_sd", self.difficulty_sd.to_string());
        put("difficulty_clip_low", self.difficulty_clip_low.to_string());
        put("difficulty_clip_high", self.difficulty_clip_high.to_string());
        put("profile_signal", self.profile_signal.to_string());
        put("drift", self.drift.to_string());
        put("expert_rating_noise", self.expert_rating_noise.to_string());
        put("expert_raters", self.expert_raters.to_string());
        put("session_order", self.session_order.to_string());
        put("rasch_tolerance", self.rasch_tolerance.to_string());
        put(
            "rasch_max_iterations",
            self.rasch_max_iterations.to_string(),
        );
        put("bias_correction", self.bias_correction.to_string());
        put(
            "loo_mode",
            match self.loo_mode {
                HoldoutMode::WholeRow => "whole_row".to_string(),
                HoldoutMode::SingleCell => "single_cell".to_string(),
            },
        );
        put("folds", self.folds.to_string());
        put("cv_seeds", self.cv_seeds.to_string());
        put("models", join(self.models.iter().map(|m| m.label())));
        put("fs", join(self.fs.iter().map(|s| s.label())));
        put("fold_averaged", self.fold_averaged.to_string());
        put("trees", self.trees.to_string());
        put("mlp_epochs", self.mlp_epochs.to_string());
        put(
            "grid_aggregate",
            match self.grid_aggregate {
                GridAggregate::Mean => "mean".to_string(),
                GridAggregate::Median => "median".to_string(),
            },
        );
        put(
            "session_pairs",
            join(self.session_pairs.iter().map(|(a, b)| format!("{a}:{b}"))),
        );
        put("groups", join(self.groups.iter().map(|g| g.label())));
        put("ablation_model", self.ablation_model.label().to_string());
        put("ablation_fs", self.ablation_fs.label().to_string());
        put("policies", join(self.policies.iter().cloned()));
        put("tau", self.tau.to_string());
        put("respondents", self.respondents.to_string());
        put("item_budget", self.item_budget.to_string());
        put("se_target", self.se_target.to_string());
        put("sim_ability_mean", self.sim_ability_mean.to_string());
        put("sim_ability_sd", self.sim_ability_sd.to_string());
        map
    }

    /// Pass seeds for repeated cross-validation: 1..=cv_seeds.
    pub fn seed_list(&self) -> Vec<u64> {
        (1..=self.cv_seeds as u64).collect()
    }

    pub fn rating_scale(&self) -> RatingScale {
        RatingScale {
            min: self.rating_min,
            max: self.rating_max,
        }
    }
}

fn parse<T>(key: &str, value: &str) -> Result<T>
where
    T: std::str::FromStr,
{
    value
        .parse()
        .map_err(|_| Error::Argument(format!("bad value {value:?} for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(Error::Argument(format!(
            "bad value {other:?} for `{key}` (expected true or false)"
        ))),
    }
}

pub fn parse_list<T>(value: &str, key: &str) -> Result<Vec<T>>
where
    T: std::str::FromStr<Err = Error>,
{
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::Argument(format!("`{key}` must not be empty")));
    }
    Ok(items)
}

fn parse_loo_mode(value: &str) -> Result<HoldoutMode> {
    match value {
        "whole_row" => Ok(HoldoutMode::WholeRow),
        "single_cell" => Ok(HoldoutMode::SingleCell),
        other => Err(Error::Argument(format!(
            "unknown loo_mode `{other}` (expected whole_row or single_cell)"
        ))),
    }
}

fn parse_aggregate(value: &str) -> Result<GridAggregate> {
    match value {
        "mean" => Ok(GridAggregate::Mean),
        "median" => Ok(GridAggregate::Median),
        other => Err(Error::Argument(format!(
            "unknown grid_aggregate `{other}` (expected mean or median)"
        ))),
    }
}

fn parse_session_pairs(value: &str) -> Result<Vec<(u8, u8)>> {
    let mut pairs = Vec::new();
    for part in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let Some((a, b)) = part.split_once(':') else {
            return Err(Error::Argument(format!(
                "bad session pair {part:?} (expected a:b)"
            )));
        };
        let a = parse::<u8>("session_pairs", a.trim())?;
        let b = parse::<u8>("session_pairs", b.trim())?;
        pairs.push((a, b));
    }
    if pairs.is_empty() {
        return Err(Error::Argument("`session_pairs` must not be empty".into()));
    }
    Ok(pairs)
}

pub fn parse_policies(value: &str) -> Result<Vec<String>> {
    let names: Vec<String> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();
    if names.is_empty() {
        return Err(Error::Argument("`policies` must not be empty".into()));
    }
    for name in &names {
        if !matches!(name.as_str(), "random" | "max_info" | "phic_constrained") {
            return Err(Error::Argument(format!(
                "unknown policy `{name}` (expected random, max_info, or phic_constrained)"
            )));
        }
    }
    Ok(names)
}

fn join<I: IntoIterator<Item = impl Into<String>>>(items: I) -> String {
    items
        .into_iter()
        .map(Into::into)
        .collect::<Vec<_>>()
        .join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_echo() {
        let config = RunConfig::default();
        let echo = config.echo();
        let mut rebuilt = RunConfig::default();
        for (key, value) in &echo {
            rebuilt.apply(key, value).unwrap();
        }
        assert_eq!(rebuilt.echo(), echo);
        assert_eq!(echo["models"], "lr,rf,mlp");
        assert_eq!(echo["fs"], "none,cfs");
        assert_eq!(echo["session_pairs"], "1:8");
        assert_eq!(echo["in"], "");
    }

    #[test]
    fn file_overrides_and_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("phic.conf");
        fs::write(
            &path,
            "# comment\n\nsubjects = 42\nmodels = lr\nfs=cfs,gain_ratio\nloo_mode = single_cell\n",
        )
        .unwrap();
        let mut config = RunConfig::default();
        config.apply_file(&path).unwrap();
        assert_eq!(config.subjects, 42);
        assert_eq!(config.models, vec![ModelKind::Logistic]);
        assert_eq!(
            config.fs,
            vec![SelectorKind::Cfs, SelectorKind::GainRatio]
        );
        assert_eq!(config.loo_mode, HoldoutMode::SingleCell);
    }

    #[test]
    fn unknown_key_and_bad_values_are_rejected() {
        let mut config = RunConfig::default();
        assert!(config.apply("no_such_key", "1").is_err());
        assert!(config.apply("subjects", "many").is_err());
        assert!(config.apply("policies", "greedy").is_err());
        assert!(config.apply("session_pairs", "18").is_err());
        assert!(config.apply_pair("tau").is_err());
        assert!(config.apply_pair("tau=0.5").is_ok());
        assert!((config.tau - 0.5).abs() < 1e-12);
    }

    #[test]
    fn malformed_file_line_reports_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("phic.conf");
        fs::write(&path, "subjects = 10\nnonsense line\n").unwrap();
        let err = RunConfig::default().apply_file(&path).unwrap_err();
        assert!(err.to_string().contains(":2"), "{err}");
    }
}
