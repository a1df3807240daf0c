//! Random forest of information-gain decision trees.
//!
//! Each tree trains on a bootstrap bag the size of the training set and
//! considers `floor(log2 K) + 1` randomly drawn features at every node.
//! Numeric features split on the best midpoint threshold, categorical
//! features split one branch per category. Branches for categories absent
//! from the node predict the node's own distribution. Leaves store raw
//! class frequencies and the forest averages them.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureColumn, FeatureTable};
use crate::seed::derive_rng;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestConfig {
    pub trees: usize,
    /// Draw a with-replacement bag per tree; off means every tree sees the
    /// full training set and only feature sampling varies.
    pub bootstrap: bool,
    /// Features considered per node; defaults to floor(log2 K) + 1.
    pub features_per_split: Option<usize>,
    /// Track per-tree bags and report the out-of-bag error rate.
    pub compute_oob: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            trees: 100,
            bootstrap: true,
            features_per_split: None,
            compute_oob: false,
        }
    }
}

pub fn default_features_per_split(n_features: usize) -> usize {
    ((n_features as f64).log2().floor() as usize + 1).min(n_features.max(1))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Node {
    /// Probability of the positive class among the training rows here.
    Leaf { p: f64 },
    Numeric {
        column: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// One child per category code.
    Categorical { column: usize, children: Vec<usize> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    root: usize,
}

impl DecisionTree {
    /// Grows a tree on `rows` of `table`, drawing `features_per_split`
    /// candidates per node from `rng`.
    pub fn fit(
        table: &FeatureTable,
        rows: &[usize],
        features_per_split: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<DecisionTree> {
        if rows.is_empty() {
            return Err(Error::Training("cannot grow a tree on no rows".into()));
        }
        let mut nodes = Vec::new();
        let root = grow(table, rows, features_per_split, rng, &mut nodes)?;
        Ok(DecisionTree { nodes, root })
    }

    pub fn predict_row(&self, table: &FeatureTable, row: usize) -> f64 {
        let mut at = self.root;
        loop {
            match &self.nodes[at] {
                Node::Leaf { p } => return *p,
                Node::Numeric {
                    column,
                    threshold,
                    left,
                    right,
                } => {
                    let value = match &table.columns[*column] {
                        FeatureColumn::Numeric { values, .. } => values[row],
                        _ => unreachable!("numeric split on numeric column"),
                    };
                    at = if value <= *threshold { *left } else { *right };
                }
                Node::Categorical { column, children } => {
                    let code = match &table.columns[*column] {
                        FeatureColumn::Categorical { codes, .. } => codes[row] as usize,
                        _ => unreachable!("categorical split on categorical column"),
                    };
                    at = children[code];
                }
            }
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
}

fn entropy_of(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut h = 0.0;
    for k in [pos, n - pos] {
        if k > 0 {
            let p = k as f64 / n as f64;
            h -= p * p.log2();
        }
    }
    h
}

enum Split {
    Numeric { threshold: f64 },
    Categorical,
}

/// Best split of `rows` on `column`, with its information gain. None when
/// the column cannot partition the rows.
fn best_split(table: &FeatureTable, rows: &[usize], column: usize) -> Option<(Split, f64)> {
    let n = rows.len();
    let pos = rows.iter().filter(|&&r| table.labels[r]).count();
    let h = entropy_of(pos, n);

    match &table.columns[column] {
        FeatureColumn::Numeric { values, .. } => {
            let mut pairs: Vec<(f64, bool)> =
                rows.iter().map(|&r| (values[r], table.labels[r])).collect();
            pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite feature values"));
            let mut best: Option<(f64, f64)> = None;
            let mut left_pos = 0usize;
            for i in 1..n {
                left_pos += usize::from(pairs[i - 1].1);
                if pairs[i].0 <= pairs[i - 1].0 {
                    continue;
                }
                let right_pos = pos - left_pos;
                let weighted = (i as f64 * entropy_of(left_pos, i)
                    + (n - i) as f64 * entropy_of(right_pos, n - i))
                    / n as f64;
                let gain = h - weighted;
                if best.is_none_or(|(_, g)| gain > g + 1e-12) {
                    best = Some(((pairs[i - 1].0 + pairs[i].0) / 2.0, gain));
                }
            }
            best.map(|(threshold, gain)| (Split::Numeric { threshold }, gain))
        }
        FeatureColumn::Categorical { categories, codes, .. } => {
            let mut count = vec![(0usize, 0usize); categories.len()];
            for &r in rows {
                let c = codes[r] as usize;
                count[c].1 += 1;
                count[c].0 += usize::from(table.labels[r]);
            }
            let non_empty = count.iter().filter(|(_, total)| *total > 0).count();
            if non_empty < 2 {
                return None;
            }
            let weighted: f64 = count
                .iter()
                .map(|&(p, t)| t as f64 * entropy_of(p, t))
                .sum::<f64>()
                / n as f64;
            Some((Split::Categorical, h - weighted))
        }
    }
}

fn grow(
    table: &FeatureTable,
    rows: &[usize],
    features_per_split: usize,
    rng: &mut ChaCha8Rng,
    nodes: &mut Vec<Node>,
) -> Result<usize> {
    let n = rows.len();
    let pos = rows.iter().filter(|&&r| table.labels[r]).count();
    let p = pos as f64 / n as f64;

    let leaf = |nodes: &mut Vec<Node>| {
        nodes.push(Node::Leaf { p });
        nodes.len() - 1
    };
    if n < 2 || pos == 0 || pos == n {
        return Ok(leaf(nodes));
    }

    let k = table.n_features();
    let draw = sample(rng, k, features_per_split.min(k));
    let mut best: Option<(usize, Split, f64)> = None;
    for column in draw {
        if let Some((split, gain)) = best_split(table, rows, column) {
            // Strictly-better keeps the earliest drawn column on ties.
            if best.as_ref().is_none_or(|(_, _, g)| gain > g + 1e-12) {
                best = Some((column, split, gain));
            }
        }
    }
    let Some((column, split, gain)) = best else {
        return Ok(leaf(nodes));
    };
    if gain <= 1e-10 {
        return Ok(leaf(nodes));
    }

    match split {
        Split::Numeric { threshold } => {
            let values = match &table.columns[column] {
                FeatureColumn::Numeric { values, .. } => values,
                _ => unreachable!("numeric split"),
            };
            let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                rows.iter().partition(|&&r| values[r] <= threshold);
            let left = grow(table, &left_rows, features_per_split, rng, nodes)?;
            let right = grow(table, &right_rows, features_per_split, rng, nodes)?;
            nodes.push(Node::Numeric {
                column,
                threshold,
                left,
                right,
            });
        }
        Split::Categorical => {
            let codes = match &table.columns[column] {
                FeatureColumn::Categorical { codes, .. } => codes,
                _ => unreachable!("categorical split"),
            };
            let n_categories = match &table.columns[column] {
                FeatureColumn::Categorical { categories, .. } => categories.len(),
                _ => unreachable!("categorical split"),
            };
            let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); n_categories];
            for &r in rows {
                buckets[codes[r] as usize].push(r);
            }
            let mut children = Vec::with_capacity(n_categories);
            for bucket in &buckets {
                if bucket.is_empty() {
                    // A category unseen here falls back to this node's own
                    // distribution.
                    children.push(leaf(nodes));
                } else {
                    children.push(grow(table, bucket, features_per_split, rng, nodes)?);
                }
            }
            nodes.push(Node::Categorical { column, children });
        }
    }
    Ok(nodes.len() - 1)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<DecisionTree>,
    pub feature_names: Vec<String>,
    pub oob_error: Option<f64>,
}

pub fn fit_forest(table: &FeatureTable, config: &ForestConfig, seed: u64) -> Result<ForestModel> {
    if config.trees == 0 {
        return Err(Error::Training("a forest needs at least one tree".into()));
    }
    let n = table.n_rows();
    if n == 0 {
        return Err(Error::Training("cannot fit on an empty table".into()));
    }
    let features_per_split = config
        .features_per_split
        .unwrap_or_else(|| default_features_per_split(table.n_features()));

    let mut trees = Vec::with_capacity(config.trees);
    let mut bags: Vec<Vec<usize>> = Vec::new();
    for t in 0..config.trees {
        let mut rng = derive_rng(seed, &format!("tree/{t}"));
        let rows: Vec<usize> = if config.bootstrap {
            (0..n).map(|_| rng.random_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        trees.push(DecisionTree::fit(table, &rows, features_per_split, &mut rng)?);
        if config.compute_oob {
            bags.push(rows);
        }
    }

    let oob_error = if config.compute_oob && config.bootstrap {
        let mut wrong = 0usize;
        let mut counted = 0usize;
        for r in 0..n {
            let mut sum = 0.0;
            let mut votes = 0usize;
            for (tree, bag) in trees.iter().zip(&bags) {
                if !bag.contains(&r) {
                    sum += tree.predict_row(table, r);
                    votes += 1;
                }
            }
            if votes > 0 {
                counted += 1;
                let predicted = sum / votes as f64 >= 0.5;
                if predicted != table.labels[r] {
                    wrong += 1;
                }
            }
        }
        (counted > 0).then(|| wrong as f64 / counted as f64)
    } else {
        None
    };

    Ok(ForestModel {
        trees,
        feature_names: table.feature_names().iter().map(|s| s.to_string()).collect(),
        oob_error,
    })
}

impl ForestModel {
    /// P(incorrect) per row: the mean of the trees' leaf frequencies.
    pub fn predict_proba(&self, table: &FeatureTable) -> Result<Vec<f64>> {
        let expected: Vec<String> = table.feature_names().iter().map(|s| s.to_string()).collect();
        if expected != self.feature_names {
            return Err(Error::Training(
                "forest was trained on different columns".into(),
            ));
        }
        Ok((0..table.n_rows())
            .map(|r| {
                self.trees
                    .iter()
                    .map(|t| t.predict_row(table, r))
                    .sum::<f64>()
                    / self.trees.len() as f64
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{QuestionType, SubjectId};
    use crate::modeling::info::{info_gain, label_codes};

    fn table(columns: Vec<FeatureColumn>, labels: Vec<bool>) -> FeatureTable {
        let n = labels.len();
        FeatureTable {
            position: 2,
            session: 1,
            question_type: QuestionType::Name,
            subjects: (0..n).map(|i| SubjectId(format!("s{i}"))).collect(),
            columns,
            labels,
        }
    }

    #[test]
    fn single_tree_finds_a_clean_numeric_threshold() {
        let values: Vec<f64> = (0..20).map(f64::from).collect();
        let labels: Vec<bool> = (0..20).map(|i| i >= 12).collect();
        let t = table(
            vec![FeatureColumn::Numeric {
                name: "x".into(),
                values,
            }],
            labels.clone(),
        );
        let rows: Vec<usize> = (0..20).collect();
        let mut rng = derive_rng(1, "test/tree");
        let tree = DecisionTree::fit(&t, &rows, 1, &mut rng).unwrap();
        for (r, &label) in labels.iter().enumerate() {
            assert_eq!(tree.predict_row(&t, r), f64::from(u8::from(label)));
        }
    }

    #[test]
    fn categorical_split_is_multiway_and_pure() {
        let codes: Vec<u32> = (0..30).map(|i| i % 3).collect();
        let labels: Vec<bool> = codes.iter().map(|&c| c == 2).collect();
        let t = table(
            vec![FeatureColumn::Categorical {
                name: "c".into(),
                categories: vec!["a".into(), "b".into(), "d".into()],
                codes,
            }],
            labels.clone(),
        );
        let rows: Vec<usize> = (0..30).collect();
        let mut rng = derive_rng(2, "test/tree");
        let tree = DecisionTree::fit(&t, &rows, 1, &mut rng).unwrap();
        for (r, &label) in labels.iter().enumerate() {
            assert_eq!(tree.predict_row(&t, r), f64::from(u8::from(label)));
        }
        // Root plus three pure leaves.
        assert_eq!(tree.n_nodes(), 4);
    }

    #[test]
    fn split_gain_matches_the_entropy_oracle() {
        let values = vec![0.2, 1.4, 2.0, 3.3, 4.1, 5.9, 6.2, 7.8];
        let labels = vec![false, false, true, false, true, true, false, true];
        let t = table(
            vec![FeatureColumn::Numeric {
                name: "x".into(),
                values: values.clone(),
            }],
            labels.clone(),
        );
        let rows: Vec<usize> = (0..8).collect();
        let (split, gain) = best_split(&t, &rows, 0).unwrap();
        let threshold = match split {
            Split::Numeric { threshold } => threshold,
            Split::Categorical => panic!("numeric"),
        };

        // Oracle: every midpoint, gain recomputed through the generic
        // entropy code.
        let y = label_codes(&labels);
        let mut best = f64::NEG_INFINITY;
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for i in 1..sorted.len() {
            let cut = (sorted[i - 1] + sorted[i]) / 2.0;
            let codes: Vec<u32> = values.iter().map(|&v| u32::from(v > cut)).collect();
            best = best.max(info_gain(&codes, &y));
        }
        assert!((gain - best).abs() < 1e-12, "gain {gain}, oracle {best}");
        let side: Vec<u32> = values.iter().map(|&v| u32::from(v > threshold)).collect();
        assert!((info_gain(&side, &y) - best).abs() < 1e-12);
    }

    #[test]
    fn empty_category_branch_predicts_the_parent_distribution() {
        // Category "d" (code 2) never occurs in training.
        let codes: Vec<u32> = (0..24).map(|i| i % 2).collect();
        let labels: Vec<bool> = (0..24).map(|i| i % 2 == 0).collect();
        let train = table(
            vec![FeatureColumn::Categorical {
                name: "c".into(),
                categories: vec!["a".into(), "b".into(), "d".into()],
                codes,
            }],
            labels,
        );
        let rows: Vec<usize> = (0..24).collect();
        let mut rng = derive_rng(3, "test/tree");
        let tree = DecisionTree::fit(&train, &rows, 1, &mut rng).unwrap();

        let probe = table(
            vec![FeatureColumn::Categorical {
                name: "c".into(),
                categories: vec!["a".into(), "b".into(), "d".into()],
                codes: vec![2],
            }],
            vec![false],
        );
        // The root has half positives; the unseen branch inherits that.
        assert_eq!(tree.predict_row(&probe, 0), 0.5);
    }

    #[test]
    fn forest_is_deterministic_in_the_seed() {
        let mut rng = derive_rng(500, "test/forest-data");
        let values: Vec<f64> = (0..60).map(|_| rng.random_range(-1.0..1.0)).collect();
        let noise: Vec<f64> = (0..60).map(|_| rng.random_range(-1.0..1.0)).collect();
        let labels: Vec<bool> = values
            .iter()
            .zip(&noise)
            .map(|(&v, &e)| v + 0.5 * e > 0.0)
            .collect();
        let t = table(
            vec![
                FeatureColumn::Numeric {
                    name: "x".into(),
                    values,
                },
                FeatureColumn::Numeric {
                    name: "e".into(),
                    values: noise,
                },
            ],
            labels,
        );
        let config = ForestConfig {
            trees: 15,
            ..Default::default()
        };
        let a = fit_forest(&t, &config, 9).unwrap().predict_proba(&t).unwrap();
        let b = fit_forest(&t, &config, 9).unwrap().predict_proba(&t).unwrap();
        assert_eq!(a, b);
        let c = fit_forest(&t, &config, 10).unwrap().predict_proba(&t).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn default_feature_count_follows_the_log_rule() {
        assert_eq!(default_features_per_split(1), 1);
        assert_eq!(default_features_per_split(2), 2);
        assert_eq!(default_features_per_split(20), 5);
        assert_eq!(default_features_per_split(22), 5);
        assert_eq!(default_features_per_split(32), 6);
    }

    #[test]
    fn oob_error_is_low_on_separable_data() {
        let values: Vec<f64> = (0..100).map(f64::from).collect();
        let labels: Vec<bool> = (0..100).map(|i| i >= 50).collect();
        let t = table(
            vec![FeatureColumn::Numeric {
                name: "x".into(),
                values,
            }],
            labels,
        );
        let config = ForestConfig {
            trees: 30,
            compute_oob: true,
            ..Default::default()
        };
        let model = fit_forest(&t, &config, 4).unwrap();
        let oob = model.oob_error.unwrap();
        assert!(oob < 0.1, "out-of-bag error {oob}");
    }
}
