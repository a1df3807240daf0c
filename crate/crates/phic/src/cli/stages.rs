//! Stage implementations behind the subcommands.
//!
//! Each stage reads its prerequisites from the output directory, writes its
//! artifacts, and finishes with a manifest. A missing prerequisite names
//! the stage that would have produced it. Output bytes depend only on the
//! configuration, never on thread count or wall-clock time.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::adaptive::{self, ItemBank, Policy, SimulationConfig};
use crate::analysis::{
    ablation, hic_summary, importance_grid, write_ablation_csv, write_hic_summary_csv,
    write_hic_tests_csv, write_importance_csv, AblationReport, HicSummary, ImportanceGrid,
};
use crate::cli::config::RunConfig;
use crate::cli::manifest::write_manifest;
use crate::domain::Corpus;
use crate::error::{Error, Result};
use crate::eval::{
    aggregate_summary, evaluate_tables, read_summary_json, write_runs_csv, write_summary_json,
    EvalConfig, SummaryTable,
};
use crate::features::{assemble, read_features, write_features, FeatureTable};
use crate::ingest::{load_corpus_dir, write_corpus};
use crate::ingest::synthetic::{generate, SyntheticConfig};
use crate::modeling::ModelParams;
use crate::rasch::{
    calibrate, loo_difficulties, read_loo_csv, write_loo_csv, CalibrationConfig,
    RaschCalibration, ResponseTable,
};

/// Artifact locations inside the output directory.
pub struct StagePaths {
    out: PathBuf,
}

impl StagePaths {
    pub fn new(out: &Path) -> Self {
        StagePaths { out: out.to_path_buf() }
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.out.join("corpus")
    }

    pub fn ground_truth(&self) -> PathBuf {
        self.out.join("ground_truth.json")
    }

    pub fn calibration(&self) -> PathBuf {
        self.out.join("calibration.json")
    }

    pub fn loo(&self) -> PathBuf {
        self.out.join("loo_difficulties.csv")
    }

    pub fn features_dir(&self) -> PathBuf {
        self.out.join("features")
    }

    pub fn runs(&self) -> PathBuf {
        self.out.join("runs.csv")
    }

    pub fn summary(&self) -> PathBuf {
        self.out.join("summary.json")
    }

    pub fn importance_csv(&self) -> PathBuf {
        self.out.join("importance_grid.csv")
    }

    pub fn importance_json(&self) -> PathBuf {
        self.out.join("importance_grid.json")
    }

    pub fn ablation_csv(&self) -> PathBuf {
        self.out.join("ablation.csv")
    }

    pub fn ablation_json(&self) -> PathBuf {
        self.out.join("ablation.json")
    }

    pub fn hic_summary_csv(&self) -> PathBuf {
        self.out.join("hic_summary.csv")
    }

    pub fn hic_tests_csv(&self) -> PathBuf {
        self.out.join("hic_tests.csv")
    }

    pub fn hic_json(&self) -> PathBuf {
        self.out.join("hic.json")
    }

    pub fn simulation_csv(&self) -> PathBuf {
        self.out.join("simulation.csv")
    }

    pub fn simulation_json(&self) -> PathBuf {
        self.out.join("simulation_summary.json")
    }

    pub fn report(&self) -> PathBuf {
        self.out.join("report.json")
    }

    fn corpus_files(&self) -> Vec<PathBuf> {
        let dir = self.corpus_dir();
        ["items.csv", "profiles.csv", "responses.csv", "schema.json", "meta.json"]
            .iter()
            .map(|name| dir.join(name))
            .collect()
    }

    fn feature_files(&self, tables: &[FeatureTable]) -> Vec<PathBuf> {
        let dir = self.features_dir();
        let mut files: Vec<PathBuf> = tables
            .iter()
            .map(|t| dir.join(format!("features_p{:02}.csv", t.position)))
            .collect();
        files.push(dir.join("features_meta.json"));
        files
    }
}

/// Errors with the stage that should have produced `path` when it is absent.
fn require(path: &Path, producer: &str) -> Result<()> {
    if path.exists() {
        return Ok(());
    }
    Err(Error::MissingStage {
        stage: producer.to_string(),
        message: format!("{} not found; run `phic {producer}` first", path.display()),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn load_corpus(config: &RunConfig, paths: &StagePaths) -> Result<Corpus> {
    if !paths.corpus_dir().join("items.csv").exists() {
        return Err(Error::MissingStage {
            stage: "ingest|synth".to_string(),
            message: format!(
                "{} holds no corpus; run `phic synth` or `phic ingest` first",
                paths.corpus_dir().display()
            ),
        });
    }
    load_corpus_dir(&paths.corpus_dir(), config.rating_scale())
}

fn eval_config(config: &RunConfig) -> EvalConfig {
    let mut params = ModelParams::default();
    params.forest.trees = config.trees;
    params.mlp.epochs = config.mlp_epochs;
    EvalConfig {
        folds: config.folds,
        seeds: config.seed_list(),
        base_seed: config.seed,
        models: config.models.clone(),
        selectors: config.fs.clone(),
        params,
        fold_averaged: config.fold_averaged,
    }
}

/// `ingest`: validate an external corpus directory and write the
/// normalized layout.
pub fn ingest(config: &RunConfig) -> Result<()> {
    let paths = StagePaths::new(&config.out);
    let input = config.input.as_ref().ok_or_else(|| {
        Error::Argument("ingest needs an input directory; pass --in DIR".into())
    })?;
    let corpus = load_corpus_dir(input, config.rating_scale())?;
    write_corpus(&corpus, &paths.corpus_dir())?;

    let mut inputs: Vec<PathBuf> = ["items.csv", "profiles.csv", "responses.csv", "schema.json"]
        .iter()
        .map(|name| input.join(name))
        .collect();
    for optional in ["meta.json", "expert_ratings.csv"] {
        let path = input.join(optional);
        if path.exists() {
            inputs.push(path);
        }
    }
    write_manifest(
        &config.out,
        "ingest",
        config.seed,
        Vec::new(),
        config.echo(),
        &inputs,
        &paths.corpus_files(),
    )?;
    Ok(())
}

/// `synth`: generate a corpus with known ground truth.
pub fn synth(config: &RunConfig) -> Result<()> {
    let paths = StagePaths::new(&config.out);
    let synth_config = SyntheticConfig {
        subjects: config.subjects,
        seed: config.seed,
        ability_mean: config.ability_mean,
        ability_sd: config.ability_sd,
        difficulty_sd: config.difficulty_sd,
        difficulty_clip: (config.difficulty_clip_low, config.difficulty_clip_high),
        profile_signal: config.profile_signal,
        name_fatigue_drift: config.drift,
        expert_rating_noise: config.expert_rating_noise,
        expert_raters: config.expert_raters,
        order: config.session_order,
    };
    let (corpus, truth) = generate(&synth_config)?;
    write_corpus(&corpus, &paths.corpus_dir())?;
    write_json(&paths.ground_truth(), &truth)?;

    let mut outputs = paths.corpus_files();
    outputs.push(paths.ground_truth());
    write_manifest(
        &config.out,
        "synth",
        config.seed,
        Vec::new(),
        config.echo(),
        &[],
        &outputs,
    )?;
    Ok(())
}

/// `rasch`: full-data calibration plus the leave-one-subject-out table.
pub fn rasch(config: &RunConfig) -> Result<()> {
    let paths = StagePaths::new(&config.out);
    let corpus = load_corpus(config, &paths)?;
    let table = ResponseTable::from_matrix(&corpus.matrix, &corpus.items);
    let calibration_config = CalibrationConfig {
        tolerance: config.rasch_tolerance,
        max_iterations: config.rasch_max_iterations,
        bias_correction: config.bias_correction,
    };
    let calibration = calibrate(&table, &calibration_config)?;
    let loo = loo_difficulties(&table, &calibration_config, config.loo_mode)?;
    write_json(&paths.calibration(), &calibration)?;
    write_loo_csv(&loo, &paths.loo())?;

    write_manifest(
        &config.out,
        "rasch",
        config.seed,
        Vec::new(),
        config.echo(),
        &paths.corpus_files(),
        &[paths.calibration(), paths.loo()],
    )?;
    Ok(())
}

/// `features`: per-position tables from the corpus and the held-out
/// difficulty table.
pub fn features(config: &RunConfig) -> Result<()> {
    let paths = StagePaths::new(&config.out);
    let corpus = load_corpus(config, &paths)?;
    require(&paths.loo(), "rasch")?;
    let loo = read_loo_csv(&paths.loo(), config.loo_mode)?;
    let tables = assemble(&corpus, &loo)?;
    fs::create_dir_all(paths.features_dir())
        .map_err(|e| Error::io(paths.features_dir(), e))?;
    write_features(&tables, &paths.features_dir())?;

    let mut inputs = paths.corpus_files();
    inputs.push(paths.loo());
    write_manifest(
        &config.out,
        "features",
        config.seed,
        Vec::new(),
        config.echo(),
        &inputs,
        &paths.feature_files(&tables),
    )?;
    Ok(())
}

fn load_features(paths: &StagePaths) -> Result<Vec<FeatureTable>> {
    require(&paths.features_dir().join("features_meta.json"), "features")?;
    read_features(&paths.features_dir())
}

/// `evaluate`: repeated stratified cross-validation over the configured
/// model and selector grid.
pub fn evaluate(config: &RunConfig) -> Result<()> {
    let paths = StagePaths::new(&config.out);
    let tables = load_features(&paths)?;
    let eval = eval_config(config);
    let runs = evaluate_tables(&tables, &eval)?;
    write_runs_csv(&paths.runs(), &runs)?;
    let summary = aggregate_summary(&runs);
    write_summary_json(&paths.summary(), &summary)?;

    write_manifest(
        &config.out,
        "evaluate",
        config.seed,
        eval.seeds,
        config.echo(),
        &paths.feature_files(&tables),
        &[paths.runs(), paths.summary()],
    )?;
    Ok(())
}

/// `importance`: gain-ratio grids over the same training partitions the
/// evaluation uses.
pub fn importance(config: &RunConfig) -> Result<()> {
    let paths = StagePaths::new(&config.out);
    let tables = load_features(&paths)?;
    let seeds = config.seed_list();
    let grid = importance_grid(
        &tables,
        config.folds,
        config.seed,
        &seeds,
        config.grid_aggregate,
    )?;
    write_importance_csv(&paths.importance_csv(), &grid)?;
    write_json(&paths.importance_json(), &grid)?;

    write_manifest(
        &config.out,
        "importance",
        config.seed,
        seeds,
        config.echo(),
        &paths.feature_files(&tables),
        &[paths.importance_csv(), paths.importance_json()],
    )?;
    Ok(())
}

/// `ablate`: re-evaluate one model on nested feature groups.
pub fn ablate(config: &RunConfig) -> Result<()> {
    let paths = StagePaths::new(&config.out);
    let tables = load_features(&paths)?;
    let harness = eval_config(config);
    let report = ablation(
        &tables,
        &config.groups,
        config.ablation_model,
        config.ablation_fs,
        &harness,
    )?;
    write_ablation_csv(&paths.ablation_csv(), &report)?;
    write_json(&paths.ablation_json(), &report)?;

    write_manifest(
        &config.out,
        "ablate",
        config.seed,
        harness.seeds,
        config.echo(),
        &paths.feature_files(&tables),
        &[paths.ablation_csv(), paths.ablation_json()],
    )?;
    Ok(())
}

/// `rq1`: correctness by session and type, with paired session tests.
pub fn rq1(config: &RunConfig) -> Result<()> {
    let paths = StagePaths::new(&config.out);
    let corpus = load_corpus(config, &paths)?;
    let summary = hic_summary(&corpus, &config.session_pairs)?;
    write_hic_summary_csv(&paths.hic_summary_csv(), &summary)?;
    write_hic_tests_csv(&paths.hic_tests_csv(), &summary)?;
    write_json(&paths.hic_json(), &summary)?;

    write_manifest(
        &config.out,
        "rq1",
        config.seed,
        Vec::new(),
        config.echo(),
        &paths.corpus_files(),
        &[paths.hic_summary_csv(), paths.hic_tests_csv(), paths.hic_json()],
    )?;
    Ok(())
}

/// `simulate`: adaptive item selection on the calibrated bank.
pub fn simulate(config: &RunConfig) -> Result<()> {
    let paths = StagePaths::new(&config.out);
    require(&paths.calibration(), "rasch")?;
    let calibration: RaschCalibration = read_json(&paths.calibration())?;
    let bank: ItemBank = calibration
        .item_ids
        .iter()
        .cloned()
        .zip(calibration.difficulties.iter().copied())
        .collect();

    let policies: Vec<Policy> = config
        .policies
        .iter()
        .map(|name| match name.as_str() {
            "random" => Ok(Policy::random()),
            "max_info" => Ok(Policy::max_info()),
            "phic_constrained" => Policy::phic_constrained(config.tau),
            other => Err(Error::Argument(format!("unknown policy `{other}`"))),
        })
        .collect::<Result<_>>()?;
    let sim_config = SimulationConfig {
        respondents: config.respondents,
        ability_mean: config.sim_ability_mean,
        ability_sd: config.sim_ability_sd,
        item_budget: (config.item_budget > 0).then_some(config.item_budget),
        se_target: (config.se_target > 0.0).then_some(config.se_target),
        seed: config.seed,
    };
    let report = adaptive::simulate(&policies, &bank, &sim_config)?;
    adaptive::write_simulation_csv(&paths.simulation_csv(), &report)?;
    write_json(&paths.simulation_json(), &report.outcomes)?;

    write_manifest(
        &config.out,
        "simulate",
        config.seed,
        Vec::new(),
        config.echo(),
        &[paths.calibration()],
        &[paths.simulation_csv(), paths.simulation_json()],
    )?;
    Ok(())
}

/// One bundle holding every analysis artifact.
#[derive(Debug, Serialize)]
struct ReportBundle {
    performance: SummaryTable,
    hic: HicSummary,
    importance: ImportanceGrid,
    ablation: AblationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    simulation: Option<Vec<adaptive::PolicyOutcome>>,
}

/// `report`: collate prior artifacts into `report.json`. Fails naming the
/// first stage whose artifact is missing.
pub fn report(config: &RunConfig) -> Result<()> {
    let paths = StagePaths::new(&config.out);
    require(&paths.summary(), "evaluate")?;
    require(&paths.hic_json(), "rq1")?;
    require(&paths.importance_json(), "importance")?;
    require(&paths.ablation_json(), "ablate")?;

    let bundle = ReportBundle {
        performance: read_summary_json(&paths.summary())?,
        hic: read_json(&paths.hic_json())?,
        importance: read_json(&paths.importance_json())?,
        ablation: read_json(&paths.ablation_json())?,
        simulation: paths
            .simulation_json()
            .exists()
            .then(|| read_json(&paths.simulation_json()))
            .transpose()?,
    };
    write_json(&paths.report(), &bundle)?;

    let mut inputs = vec![
        paths.summary(),
        paths.hic_json(),
        paths.importance_json(),
        paths.ablation_json(),
    ];
    if paths.simulation_json().exists() {
        inputs.push(paths.simulation_json());
    }
    write_manifest(
        &config.out,
        "report",
        config.seed,
        Vec::new(),
        config.echo(),
        &inputs,
        &[paths.report()],
    )?;
    Ok(())
}
