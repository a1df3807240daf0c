//! Ridge-stabilized logistic regression fitted by iteratively reweighted
//! least squares.
//!
//! The objective is the binomial log-likelihood minus `ridge` times the
//! squared non-intercept coefficients; the tiny default ridge only keeps the
//! normal equations solvable when dummies are collinear. Categorical inputs
//! are coded as reference-level dummies by [`prepare::dummy_specs`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::modeling::prepare::{build_matrix, dummy_specs, DesignSpec};
use crate::num::sigmoid;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub ridge: f64,
    pub max_iterations: usize,
    /// Convergence threshold on the largest coefficient step.
    pub tolerance: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            ridge: 1e-8,
            max_iterations: 100,
            tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticModel {
    pub specs: Vec<DesignSpec>,
    /// Intercept first, then one coefficient per design column.
    pub coefficients: Vec<f64>,
}

/// Penalized log-likelihood at `beta` (intercept first). Public so tests can
/// check the trainer's gradient against finite differences.
pub fn penalized_log_likelihood(
    design: &[Vec<f64>],
    labels: &[bool],
    beta: &[f64],
    ridge: f64,
) -> f64 {
    let mut ll = 0.0;
    for (row, &y) in design.iter().zip(labels) {
        let eta = linear(row, beta);
        // log sigma(eta) and log(1 - sigma(eta)) via the stable softplus.
        let log_p = -softplus(-eta);
        let log_q = -softplus(eta);
        ll += if y { log_p } else { log_q };
    }
    ll - ridge * beta[1..].iter().map(|b| b * b).sum::<f64>()
}

/// Gradient of [`penalized_log_likelihood`] in `beta`.
pub fn penalized_gradient(
    design: &[Vec<f64>],
    labels: &[bool],
    beta: &[f64],
    ridge: f64,
) -> Vec<f64> {
    let mut grad = vec![0.0; beta.len()];
    for (row, &y) in design.iter().zip(labels) {
        let p = sigmoid(linear(row, beta));
        let residual = f64::from(y) - p;
        grad[0] += residual;
        for (g, x) in grad[1..].iter_mut().zip(row) {
            *g += residual * x;
        }
    }
    for (g, b) in grad[1..].iter_mut().zip(&beta[1..]) {
        *g -= 2.0 * ridge * b;
    }
    grad
}

fn linear(row: &[f64], beta: &[f64]) -> f64 {
    beta[0] + row.iter().zip(&beta[1..]).map(|(x, b)| x * b).sum::<f64>()
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn fit_logistic(table: &FeatureTable, config: &LogisticConfig) -> Result<LogisticModel> {
    if table.n_rows() == 0 {
        return Err(Error::Training("cannot fit on an empty table".into()));
    }
    let specs = dummy_specs(table);
    let design = build_matrix(table, &specs)?;
    let labels = &table.labels;
    let n = design.len();
    let d = specs.len() + 1;

    // One-class training data: the maximizer runs off to infinity, so stand
    // still at a clamped prevalence instead.
    let positives = labels.iter().filter(|&&y| y).count();
    if positives == 0 || positives == n {
        let p = (positives as f64 / n as f64).clamp(1.0 / (2.0 * n as f64), 1.0 - 1.0 / (2.0 * n as f64));
        let mut coefficients = vec![0.0; d];
        coefficients[0] = (p / (1.0 - p)).ln();
        return Ok(LogisticModel {
            specs,
            coefficients,
        });
    }

    let mut beta = vec![0.0; d];
    let mut ll = penalized_log_likelihood(&design, labels, &beta, config.ridge);
    for _ in 0..config.max_iterations {
        // Newton direction on the penalized likelihood.
        let mut hessian = DMatrix::<f64>::zeros(d, d);
        for row in &design {
            let p = sigmoid(linear(row, &beta));
            let w = (p * (1.0 - p)).max(1e-12);
            let mut z = Vec::with_capacity(d);
            z.push(1.0);
            z.extend_from_slice(row);
            for a in 0..d {
                for b in a..d {
                    hessian[(a, b)] += w * z[a] * z[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                hessian[(a, b)] = hessian[(b, a)];
            }
        }
        for j in 1..d {
            hessian[(j, j)] += 2.0 * config.ridge;
        }
        let grad = DVector::from_vec(penalized_gradient(&design, labels, &beta, config.ridge));
        let step = hessian
            .lu()
            .solve(&grad)
            .ok_or_else(|| Error::Training("singular system in the logistic solve".into()))?;

        // Step-halving keeps the objective monotone.
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let candidate: Vec<f64> = beta
                .iter()
                .zip(step.iter())
                .map(|(b, s)| b + scale * s)
                .collect();
            let candidate_ll =
                penalized_log_likelihood(&design, labels, &candidate, config.ridge);
            if candidate_ll >= ll - 1e-12 {
                let largest = step.iter().map(|s| (scale * s).abs()).fold(0.0, f64::max);
                beta = candidate;
                ll = candidate_ll;
                accepted = true;
                if largest < config.tolerance {
                    return Ok(LogisticModel {
                        specs,
                        coefficients: beta,
                    });
                }
                break;
            }
            scale /= 2.0;
        }
        if !accepted {
            break;
        }
    }
    if !ll.is_finite() {
        return Err(Error::Training("logistic likelihood diverged".into()));
    }
    Ok(LogisticModel {
        specs,
        coefficients: beta,
    })
}

impl LogisticModel {
    /// P(incorrect) per row.
    pub fn predict_proba(&self, table: &FeatureTable) -> Result<Vec<f64>> {
        let design = build_matrix(table, &self.specs)?;
        Ok(design
            .iter()
            .map(|row| sigmoid(linear(row, &self.coefficients)))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{QuestionType, SubjectId};
    use crate::features::FeatureColumn;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn table(columns: Vec<FeatureColumn>, labels: Vec<bool>) -> FeatureTable {
        let n = labels.len();
        FeatureTable {
            position: 2,
            session: 1,
            question_type: QuestionType::Content,
            subjects: (0..n).map(|i| SubjectId(format!("s{i}"))).collect(),
            columns,
            labels,
        }
    }

    fn numeric(name: &str, values: Vec<f64>) -> FeatureColumn {
        FeatureColumn::Numeric {
            name: name.into(),
            values,
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = crate::seed::derive_rng(42, "test/lr-grad");
        let design: Vec<Vec<f64>> = (0..25)
            .map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let labels: Vec<bool> = (0..25).map(|_| rng.random_bool(0.5)).collect();
        let beta: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ridge = 0.01;

        let grad = penalized_gradient(&design, &labels, &beta, ridge);
        let h = 1e-6;
        for j in 0..beta.len() {
            let mut up = beta.clone();
            up[j] += h;
            let mut down = beta.clone();
            down[j] -= h;
            let numeric = (penalized_log_likelihood(&design, &labels, &up, ridge)
                - penalized_log_likelihood(&design, &labels, &down, ridge))
                / (2.0 * h);
            assert_relative_eq!(grad[j], numeric, epsilon = 1e-5, max_relative = 1e-4);
        }
    }

    #[test]
    fn fit_reaches_a_stationary_point() {
        let mut rng = crate::seed::derive_rng(7, "test/lr-fit");
        let n = 80;
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let labels: Vec<bool> = xs
            .iter()
            .map(|&x| rng.random_bool(sigmoid(0.5 + 1.2 * x)))
            .collect();
        let t = table(vec![numeric("x", xs.clone())], labels.clone());
        let model = fit_logistic(&t, &LogisticConfig::default()).unwrap();

        let design: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let grad = penalized_gradient(&design, &labels, &model.coefficients, 1e-8);
        for g in grad {
            assert!(g.abs() < 1e-6, "gradient component {g}");
        }
    }

    #[test]
    fn binary_feature_recovers_the_log_odds_ratio() {
        // 30 of 100 positive when x=0; 70 of 100 positive when x=1. The
        // maximum-likelihood coefficients are the empirical log odds.
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for i in 0..200 {
            let x = i >= 100;
            values.push(f64::from(u8::from(x)));
            let y = if x { i % 100 < 70 } else { i % 100 < 30 };
            labels.push(y);
        }
        let t = table(vec![numeric("x", values)], labels);
        let model = fit_logistic(&t, &LogisticConfig::default()).unwrap();
        let b0 = (0.3f64 / 0.7).ln();
        let b1 = (0.7f64 / 0.3).ln() - b0;
        assert_relative_eq!(model.coefficients[0], b0, epsilon = 1e-4);
        assert_relative_eq!(model.coefficients[1], b1, epsilon = 1e-4);
    }

    #[test]
    fn one_class_training_predicts_clamped_prevalence() {
        let t = table(
            vec![numeric("x", vec![0.0, 1.0, 2.0, 3.0])],
            vec![false; 4],
        );
        let model = fit_logistic(&t, &LogisticConfig::default()).unwrap();
        let p = model.predict_proba(&t).unwrap();
        for v in p {
            assert_relative_eq!(v, 1.0 / 8.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn separable_data_stays_finite_and_ranks_correctly() {
        let xs: Vec<f64> = (0..20).map(f64::from).collect();
        let labels: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        let t = table(vec![numeric("x", xs)], labels);
        let model = fit_logistic(&t, &LogisticConfig::default()).unwrap();
        assert!(model.coefficients.iter().all(|c| c.is_finite()));
        let p = model.predict_proba(&t).unwrap();
        assert!(p[19] > p[0]);
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn dummy_coded_categories_shift_predictions() {
        let column = FeatureColumn::Categorical {
            name: "c".into(),
            categories: vec!["a".into(), "b".into()],
            codes: (0..60).map(|i| u32::from(i % 2 == 0)).collect(),
        };
        let labels: Vec<bool> = (0..60).map(|i| (i % 2 == 0) == (i % 7 != 0)).collect();
        let t = table(vec![column], labels);
        let model = fit_logistic(&t, &LogisticConfig::default()).unwrap();
        let p = model.predict_proba(&t).unwrap();
        assert!(p[0] > p[1], "category b should predict higher risk");
    }
}
