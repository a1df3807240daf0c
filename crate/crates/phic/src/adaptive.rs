//! Adaptive item selection over a calibrated bank: interim ability
//! estimation, selection policies, and a paired simulation harness.
//!
//! Every respondent's correctness on every item is drawn once up front, so
//! competing policies are compared on identical response tables and differ
//! only in which items they choose to administer.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::ItemId;
use crate::error::{Error, Result};
use crate::num::median;
use crate::rasch::{clipped_probability, EXTREME_ADJUSTMENT};
use crate::seed::derive_rng;

/// P(correct) at ability `theta` on difficulty `b`; strictly inside (0, 1).
fn probability(theta: f64, b: f64) -> f64 {
    clipped_probability(theta - b)
}

/// Fisher information p(1-p) of one response.
fn information(theta: f64, b: f64) -> f64 {
    let p = probability(theta, b);
    p * (1.0 - p)
}

/// Calibrated difficulties keyed by item. Iteration order (by id) is the tie
/// order everywhere.
pub type ItemBank = BTreeMap<ItemId, f64>;

/// Maximum-likelihood ability from responses against fixed difficulties.
/// Interim extreme scores (all correct or all incorrect) are pulled
/// `EXTREME_ADJUSTMENT` raw-score units off the boundary so the estimate
/// stays finite. Returns (estimate, standard error); the standard error is
/// the inverse square root of the Fisher information at the estimate.
pub fn estimate_ability(difficulties: &[f64], correct: &[bool]) -> Result<(f64, f64)> {
    if difficulties.len() != correct.len() {
        return Err(Error::Argument(
            "difficulties and responses must align".into(),
        ));
    }
    if difficulties.is_empty() {
        return Err(Error::Argument(
            "ability needs at least one response".into(),
        ));
    }
    if difficulties.iter().any(|b| !b.is_finite()) {
        return Err(Error::Argument("difficulties must be finite".into()));
    }

    let n = correct.len() as f64;
    let raw: f64 = correct.iter().filter(|&&c| c).count() as f64;
    let target = if raw == 0.0 {
        EXTREME_ADJUSTMENT
    } else if raw == n {
        n - EXTREME_ADJUSTMENT
    } else {
        raw
    };

    // Newton-Raphson on the score function target - sum sigmoid(theta - b),
    // which is strictly decreasing in theta; damped steps keep it safe.
    let mut theta = 0.0;
    for _ in 0..200 {
        let mut expected = 0.0;
        let mut info = 0.0;
        for &b in difficulties {
            let p = probability(theta, b);
            expected += p;
            info += p * (1.0 - p);
        }
        let score = target - expected;
        if score.abs() < 1e-10 {
            break;
        }
        let step = (score / info).clamp(-1.0, 1.0);
        theta += step;
    }

    let info: f64 = difficulties.iter().map(|&b| information(theta, b)).sum();
    Ok((theta, 1.0 / info.sqrt()))
}

/// Everything known about one respondent mid-assessment.
#[derive(Debug, Clone, PartialEq)]
pub struct AssessmentState {
    /// Administered items with their outcomes, in administration order.
    pub administered: Vec<(ItemId, bool)>,
    pub ability_estimate: f64,
    /// Infinite before the first response.
    pub ability_se: f64,
    pub remaining: BTreeSet<ItemId>,
}

impl AssessmentState {
    pub fn new(bank: &ItemBank) -> Self {
        AssessmentState {
            administered: Vec::new(),
            ability_estimate: 0.0,
            ability_se: f64::INFINITY,
            remaining: bank.keys().cloned().collect(),
        }
    }

    pub fn items_used(&self) -> usize {
        self.administered.len()
    }
}

/// Records a response and re-estimates ability over everything administered
/// so far. The item must still be in the remaining set.
pub fn update_ability(
    state: &AssessmentState,
    bank: &ItemBank,
    item: &ItemId,
    correct: bool,
) -> Result<AssessmentState> {
    if !state.remaining.contains(item) {
        return Err(Error::Argument(format!(
            "item {item} was already administered or is not in the bank"
        )));
    }
    let mut next = state.clone();
    next.remaining.remove(item);
    next.administered.push((item.clone(), correct));

    let difficulties: Vec<f64> = next
        .administered
        .iter()
        .map(|(id, _)| bank[id])
        .collect();
    let responses: Vec<bool> = next.administered.iter().map(|&(_, c)| c).collect();
    let (estimate, se) = estimate_ability(&difficulties, &responses)?;
    next.ability_estimate = estimate;
    next.ability_se = se;
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Random,
    MaxInfo,
    PhicConstrained,
}

/// An item-selection rule. `tau` is the minimum predicted probability of a
/// correct answer an item must keep to stay eligible under
/// `PhicConstrained`; the other kinds ignore it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub kind: PolicyKind,
    pub tau: f64,
}

pub const DEFAULT_TAU: f64 = 0.25;

impl Policy {
    pub fn random() -> Self {
        Policy { kind: PolicyKind::Random, tau: DEFAULT_TAU }
    }

    pub fn max_info() -> Self {
        Policy { kind: PolicyKind::MaxInfo, tau: DEFAULT_TAU }
    }

    pub fn phic_constrained(tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::Argument(format!(
                "tau must lie strictly between 0 and 1, got {tau}"
            )));
        }
        Ok(Policy { kind: PolicyKind::PhicConstrained, tau })
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            PolicyKind::Random => "random",
            PolicyKind::MaxInfo => "max_info",
            PolicyKind::PhicConstrained => "phic_constrained",
        }
    }
}

/// Argmax of Fisher information at `theta` over `candidates`, ties going to
/// the smallest item id (the iteration order).
fn most_informative<'a>(
    candidates: impl Iterator<Item = &'a ItemId>,
    bank: &ItemBank,
    theta: f64,
) -> Option<ItemId> {
    let mut best: Option<(&ItemId, f64)> = None;
    for id in candidates {
        let info = information(theta, bank[id]);
        match best {
            Some((_, top)) if info <= top => {}
            _ => best = Some((id, info)),
        }
    }
    best.map(|(id, _)| id.clone())
}

/// Chooses the next item to administer. Random draws uniformly from the
/// remaining set; MaxInfo maximizes p(1-p) at the current estimate;
/// PhicConstrained does the same over items whose predicted probability of a
/// correct answer is at least tau, falling back to the easiest remaining item
/// when nothing qualifies.
pub fn select_next<R: Rng + ?Sized>(
    policy: &Policy,
    state: &AssessmentState,
    bank: &ItemBank,
    rng: &mut R,
) -> Result<ItemId> {
    if state.remaining.is_empty() {
        return Err(Error::Argument("no items remain to administer".into()));
    }
    let theta = state.ability_estimate;
    let chosen = match policy.kind {
        PolicyKind::Random => {
            let index = rng.random_range(0..state.remaining.len());
            state.remaining.iter().nth(index).cloned().expect("index in range")
        }
        PolicyKind::MaxInfo => {
            most_informative(state.remaining.iter(), bank, theta).expect("remaining non-empty")
        }
        PolicyKind::PhicConstrained => {
            let eligible: Vec<&ItemId> = state
                .remaining
                .iter()
                .filter(|id| probability(theta, bank[*id]) >= policy.tau)
                .collect();
            if eligible.is_empty() {
                // Nothing is feasible at this ability: give the easiest item.
                state
                    .remaining
                    .iter()
                    .min_by(|a, b| bank[*a].total_cmp(&bank[*b]))
                    .cloned()
                    .expect("remaining non-empty")
            } else {
                most_informative(eligible.into_iter(), bank, theta).expect("eligible non-empty")
            }
        }
    };
    Ok(chosen)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub respondents: usize,
    pub ability_mean: f64,
    pub ability_sd: f64,
    /// Stop after this many items; `None` runs the full bank.
    pub item_budget: Option<usize>,
    /// Stop once the standard error drops to this value or below.
    pub se_target: Option<f64>,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            respondents: 500,
            ability_mean: 0.0,
            ability_sd: 1.0,
            item_budget: None,
            se_target: None,
            seed: 1,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.respondents == 0 {
            return Err(Error::Argument("at least one respondent is required".into()));
        }
        if !(self.ability_sd > 0.0) || !self.ability_sd.is_finite() {
            return Err(Error::Argument("ability spread must be positive".into()));
        }
        if self.item_budget == Some(0) {
            return Err(Error::Argument("item budget must be positive".into()));
        }
        if let Some(target) = self.se_target {
            if !(target > 0.0) {
                return Err(Error::Argument("se target must be positive".into()));
            }
        }
        Ok(())
    }
}

/// One administered item in one respondent's trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationStep {
    pub policy: String,
    pub respondent: usize,
    /// 1-based administration index.
    pub step: usize,
    pub item_id: ItemId,
    pub correct: bool,
    pub estimate: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyOutcome {
    pub policy: String,
    pub median_abs_error: f64,
    pub median_items_used: f64,
    /// Respondents whose stopping rule was met (budget exhaustion counts).
    pub respondents: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub outcomes: Vec<PolicyOutcome>,
    pub steps: Vec<SimulationStep>,
}

fn stop_reached(state: &AssessmentState, config: &SimulationConfig, bank_size: usize) -> bool {
    if state.remaining.is_empty() {
        return true;
    }
    if state.items_used() >= config.item_budget.unwrap_or(bank_size) {
        return true;
    }
    if let Some(target) = config.se_target {
        if state.ability_se <= target {
            return true;
        }
    }
    false
}

/// Runs every policy over the same simulated population. Respondent
/// abilities and per-item outcomes are derived from the seed alone, so the
/// comparison is paired and the report is identical across worker counts.
pub fn simulate(
    policies: &[Policy],
    bank: &ItemBank,
    config: &SimulationConfig,
) -> Result<SimulationReport> {
    config.validate()?;
    if policies.is_empty() {
        return Err(Error::Argument("at least one policy is required".into()));
    }
    if bank.is_empty() {
        return Err(Error::Argument("item bank is empty".into()));
    }

    let per_respondent: Vec<Result<(Vec<SimulationStep>, Vec<(usize, f64)>)>> = (0..config
        .respondents)
        .into_par_iter()
        .map(|r| {
            let mut rng = derive_rng(config.seed, &format!("sim/respondent/{r}"));
            let ability_dist = Normal::new(config.ability_mean, config.ability_sd)
                .expect("validated spread");
            let theta_true: f64 = ability_dist.sample(&mut rng);
            // One pre-drawn outcome per item, in id order: every policy sees
            // the same respondent.
            let outcomes: BTreeMap<&ItemId, bool> = bank
                .iter()
                .map(|(id, &b)| (id, rng.random_bool(probability(theta_true, b))))
                .collect();

            let mut steps = Vec::new();
            let mut finals = Vec::new();
            for (pi, policy) in policies.iter().enumerate() {
                let mut select_rng =
                    derive_rng(config.seed, &format!("sim/select/{pi}/{r}"));
                let mut state = AssessmentState::new(bank);
                while !stop_reached(&state, config, bank.len()) {
                    let item = select_next(policy, &state, bank, &mut select_rng)?;
                    let correct = outcomes[&item];
                    state = update_ability(&state, bank, &item, correct)?;
                    steps.push(SimulationStep {
                        policy: policy.label().to_string(),
                        respondent: r,
                        step: state.items_used(),
                        item_id: item,
                        correct,
                        estimate: state.ability_estimate,
                        se: state.ability_se,
                    });
                }
                finals.push((state.items_used(), (state.ability_estimate - theta_true).abs()));
            }
            Ok((steps, finals))
        })
        .collect();

    let mut steps = Vec::new();
    let mut items_used: Vec<Vec<f64>> = vec![Vec::new(); policies.len()];
    let mut abs_errors: Vec<Vec<f64>> = vec![Vec::new(); policies.len()];
    for entry in per_respondent {
        let (respondent_steps, finals) = entry?;
        steps.extend(respondent_steps);
        for (pi, (used, err)) in finals.into_iter().enumerate() {
            items_used[pi].push(used as f64);
            abs_errors[pi].push(err);
        }
    }

    let outcomes = policies
        .iter()
        .enumerate()
        .map(|(pi, policy)| PolicyOutcome {
            policy: policy.label().to_string(),
            median_abs_error: median(&abs_errors[pi]).expect("at least one respondent"),
            median_items_used: median(&items_used[pi]).expect("at least one respondent"),
            respondents: items_used[pi].len(),
        })
        .collect();

    Ok(SimulationReport { outcomes, steps })
}

pub fn write_simulation_csv(path: &Path, report: &SimulationReport) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::malformed(path.display().to_string(), e.to_string()))?;
    writer
        .write_record(["policy", "respondent", "step", "item_id", "correct", "estimate", "se"])
        .map_err(|e| Error::malformed(path.display().to_string(), e.to_string()))?;
    for s in &report.steps {
        writer
            .write_record([
                s.policy.clone(),
                s.respondent.to_string(),
                s.step.to_string(),
                s.item_id.to_string(),
                if s.correct { "1".into() } else { "0".into() },
                s.estimate.to_string(),
                s.se.to_string(),
            ])
            .map_err(|e| Error::malformed(path.display().to_string(), e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
