//! Single-hidden-layer perceptron trained by online backpropagation.
//!
//! Inputs are encoded by [`prepare::indicator_specs`]: numerics scaled to
//! the training [-1, 1] range and categories as signed indicators. The
//! hidden layer defaults to `(inputs + 2) / 2` sigmoid units; one sigmoid
//! output estimates P(incorrect) under a cross-entropy objective. Rows are
//! visited in a freshly shuffled order every epoch and each weight keeps a
//! momentum term.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::modeling::prepare::{build_matrix, indicator_specs, DesignSpec};
use crate::num::sigmoid;
use crate::seed::derive_rng;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Hidden unit count; defaults to `(inputs + 2) / 2`.
    pub hidden: Option<usize>,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            epochs: 500,
            learning_rate: 0.3,
            momentum: 0.2,
            hidden: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpModel {
    pub specs: Vec<DesignSpec>,
    /// One row per hidden unit: input weights then the bias.
    pub hidden_weights: Vec<Vec<f64>>,
    /// One weight per hidden unit, then the output bias.
    pub output_weights: Vec<f64>,
}

fn forward(row: &[f64], hidden_weights: &[Vec<f64>], output_weights: &[f64]) -> (Vec<f64>, f64) {
    let hidden: Vec<f64> = hidden_weights
        .iter()
        .map(|w| {
            let bias = w[w.len() - 1];
            sigmoid(bias + row.iter().zip(w).map(|(x, v)| x * v).sum::<f64>())
        })
        .collect();
    let bias = output_weights[output_weights.len() - 1];
    let z = bias
        + hidden
            .iter()
            .zip(output_weights)
            .map(|(h, v)| h * v)
            .sum::<f64>();
    (hidden, z)
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Mean cross-entropy of the network over `design`. Public so tests can
/// compare the backpropagated gradient with finite differences.
pub fn batch_loss(
    design: &[Vec<f64>],
    labels: &[bool],
    hidden_weights: &[Vec<f64>],
    output_weights: &[f64],
) -> f64 {
    let total: f64 = design
        .iter()
        .zip(labels)
        .map(|(row, &y)| {
            let (_, z) = forward(row, hidden_weights, output_weights);
            softplus(z) - f64::from(y) * z
        })
        .sum();
    total / design.len() as f64
}

/// Gradient of [`batch_loss`] in every weight, same shapes as the weights.
pub fn batch_gradient(
    design: &[Vec<f64>],
    labels: &[bool],
    hidden_weights: &[Vec<f64>],
    output_weights: &[f64],
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut grad_hidden = vec![vec![0.0; hidden_weights[0].len()]; hidden_weights.len()];
    let mut grad_output = vec![0.0; output_weights.len()];
    for (row, &y) in design.iter().zip(labels) {
        let (hidden, z) = forward(row, hidden_weights, output_weights);
        let delta_out = sigmoid(z) - f64::from(y);
        for (g, h) in grad_output.iter_mut().zip(&hidden) {
            *g += delta_out * h;
        }
        grad_output[output_weights.len() - 1] += delta_out;
        for j in 0..hidden_weights.len() {
            let delta = delta_out * output_weights[j] * hidden[j] * (1.0 - hidden[j]);
            let row_grad = &mut grad_hidden[j];
            for (g, x) in row_grad.iter_mut().zip(row) {
                *g += delta * x;
            }
            let bias = row_grad.len() - 1;
            row_grad[bias] += delta;
        }
    }
    let n = design.len() as f64;
    for row in &mut grad_hidden {
        for g in row.iter_mut() {
            *g /= n;
        }
    }
    for g in &mut grad_output {
        *g /= n;
    }
    (grad_hidden, grad_output)
}

pub fn fit_mlp(table: &FeatureTable, config: &MlpConfig, seed: u64) -> Result<MlpModel> {
    if table.n_rows() == 0 {
        return Err(Error::Training("cannot fit on an empty table".into()));
    }
    if !(0.0..=1.0).contains(&config.momentum) || config.learning_rate <= 0.0 {
        return Err(Error::Training(
            "learning rate must be positive and momentum within [0, 1]".into(),
        ));
    }
    let specs = indicator_specs(table);
    let design = build_matrix(table, &specs)?;
    let labels = &table.labels;
    let inputs = specs.len();
    let hidden_count = config.hidden.unwrap_or((inputs + 2) / 2).max(1);

    let mut init = derive_rng(seed, "mlp/init");
    let mut hidden_weights: Vec<Vec<f64>> = (0..hidden_count)
        .map(|_| (0..inputs + 1).map(|_| init.random_range(-0.5..0.5)).collect())
        .collect();
    let mut output_weights: Vec<f64> = (0..hidden_count + 1)
        .map(|_| init.random_range(-0.5..0.5))
        .collect();
    let mut momentum_hidden = vec![vec![0.0; inputs + 1]; hidden_count];
    let mut momentum_output = vec![0.0; hidden_count + 1];

    let mut order: Vec<usize> = (0..design.len()).collect();
    for epoch in 0..config.epochs {
        let mut shuffle_rng = derive_rng(seed, &format!("mlp/epoch/{epoch}"));
        order.shuffle(&mut shuffle_rng);
        for &r in &order {
            let row = &design[r];
            let (hidden, z) = forward(row, &hidden_weights, &output_weights);
            let delta_out = sigmoid(z) - f64::from(labels[r]);

            // Hidden deltas use the pre-update output weights.
            let deltas: Vec<f64> = (0..hidden_count)
                .map(|j| delta_out * output_weights[j] * hidden[j] * (1.0 - hidden[j]))
                .collect();

            for j in 0..hidden_count {
                let step = -config.learning_rate * delta_out * hidden[j]
                    + config.momentum * momentum_output[j];
                output_weights[j] += step;
                momentum_output[j] = step;
            }
            let step = -config.learning_rate * delta_out + config.momentum * momentum_output[hidden_count];
            output_weights[hidden_count] += step;
            momentum_output[hidden_count] = step;

            for j in 0..hidden_count {
                for (k, &x) in row.iter().enumerate() {
                    let step = -config.learning_rate * deltas[j] * x
                        + config.momentum * momentum_hidden[j][k];
                    hidden_weights[j][k] += step;
                    momentum_hidden[j][k] = step;
                }
                let step =
                    -config.learning_rate * deltas[j] + config.momentum * momentum_hidden[j][inputs];
                hidden_weights[j][inputs] += step;
                momentum_hidden[j][inputs] = step;
            }
        }
        let loss = batch_loss(&design, labels, &hidden_weights, &output_weights);
        if !loss.is_finite() {
            return Err(Error::Training(format!(
                "network diverged at epoch {epoch}"
            )));
        }
    }

    Ok(MlpModel {
        specs,
        hidden_weights,
        output_weights,
    })
}

impl MlpModel {
    /// P(incorrect) per row.
    pub fn predict_proba(&self, table: &FeatureTable) -> Result<Vec<f64>> {
        let design = build_matrix(table, &self.specs)?;
        Ok(design
            .iter()
            .map(|row| {
                let (_, z) = forward(row, &self.hidden_weights, &self.output_weights);
                sigmoid(z)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{QuestionType, SubjectId};
    use crate::features::FeatureColumn;
    use approx::assert_relative_eq;

    fn table(columns: Vec<FeatureColumn>, labels: Vec<bool>) -> FeatureTable {
        let n = labels.len();
        FeatureTable {
            position: 2,
            session: 1,
            question_type: QuestionType::Function,
            subjects: (0..n).map(|i| SubjectId(format!("s{i}"))).collect(),
            columns,
            labels,
        }
    }

    #[test]
    fn backprop_gradient_matches_finite_differences() {
        let mut rng = derive_rng(31, "test/mlp-grad");
        let design: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let labels: Vec<bool> = (0..12).map(|_| rng.random_bool(0.5)).collect();
        let hidden: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..4).map(|_| rng.random_range(-0.7..0.7)).collect())
            .collect();
        let output: Vec<f64> = (0..3).map(|_| rng.random_range(-0.7..0.7)).collect();

        let (grad_hidden, grad_output) = batch_gradient(&design, &labels, &hidden, &output);
        let h = 1e-6;

        for j in 0..hidden.len() {
            for k in 0..hidden[j].len() {
                let mut up = hidden.clone();
                up[j][k] += h;
                let mut down = hidden.clone();
                down[j][k] -= h;
                let numeric = (batch_loss(&design, &labels, &up, &output)
                    - batch_loss(&design, &labels, &down, &output))
                    / (2.0 * h);
                assert_relative_eq!(grad_hidden[j][k], numeric, epsilon = 1e-6, max_relative = 1e-4);
            }
        }
        for j in 0..output.len() {
            let mut up = output.clone();
            up[j] += h;
            let mut down = output.clone();
            down[j] -= h;
            let numeric = (batch_loss(&design, &labels, &hidden, &up)
                - batch_loss(&design, &labels, &hidden, &down))
                / (2.0 * h);
            assert_relative_eq!(grad_output[j], numeric, epsilon = 1e-6, max_relative = 1e-4);
        }
    }

    #[test]
    fn network_learns_xor() {
        let a = FeatureColumn::Numeric {
            name: "a".into(),
            values: vec![0.0, 0.0, 1.0, 1.0],
        };
        let b = FeatureColumn::Numeric {
            name: "b".into(),
            values: vec![0.0, 1.0, 0.0, 1.0],
        };
        let labels = vec![false, true, true, false];
        let t = table(vec![a, b], labels.clone());
        let config = MlpConfig {
            epochs: 4000,
            hidden: Some(4),
            ..Default::default()
        };
        let model = fit_mlp(&t, &config, 5).unwrap();
        let p = model.predict_proba(&t).unwrap();
        for (prediction, &label) in p.iter().zip(&labels) {
            assert_eq!(*prediction >= 0.5, label, "predictions {p:?}");
        }
    }

    #[test]
    fn training_is_deterministic_in_the_seed() {
        let mut rng = derive_rng(77, "test/mlp-data");
        let values: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
        let labels: Vec<bool> = values.iter().map(|&v| v > 0.1).collect();
        let t = table(
            vec![FeatureColumn::Numeric {
                name: "x".into(),
                values,
            }],
            labels,
        );
        let config = MlpConfig {
            epochs: 50,
            ..Default::default()
        };
        let a = fit_mlp(&t, &config, 3).unwrap().predict_proba(&t).unwrap();
        let b = fit_mlp(&t, &config, 3).unwrap().predict_proba(&t).unwrap();
        assert_eq!(a, b);
        let c = fit_mlp(&t, &config, 4).unwrap().predict_proba(&t).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn hidden_layer_defaults_to_half_the_inputs_plus_one() {
        // 5 expanded inputs -> (5 + 2) / 2 = 3 hidden units.
        let numeric = FeatureColumn::Numeric {
            name: "x".into(),
            values: vec![0.0, 1.0, 2.0, 3.0],
        };
        let categorical = FeatureColumn::Categorical {
            name: "c".into(),
            categories: vec!["a".into(), "b".into(), "d".into(), "e".into()],
            codes: vec![0, 1, 2, 3],
        };
        let t = table(vec![numeric, categorical], vec![false, true, false, true]);
        let config = MlpConfig {
            epochs: 1,
            ..Default::default()
        };
        let model = fit_mlp(&t, &config, 1).unwrap();
        assert_eq!(model.hidden_weights.len(), 3);
        assert_eq!(model.hidden_weights[0].len(), 6);
        assert_eq!(model.output_weights.len(), 4);
    }
}
