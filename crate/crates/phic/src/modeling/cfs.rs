//! Correlation-based feature subset selection.
//!
//! Scores a subset by the ratio of feature-class association to
//! feature-feature redundancy, both measured as symmetric uncertainty over
//! discretized values, and grows the subset greedily while the score
//! improves. Runs on training rows only.

use std::collections::HashMap;

use crate::error::Result;
use crate::features::FeatureTable;
use crate::modeling::discretize::{class_codes, discretized_codes};
use crate::modeling::info::symmetric_uncertainty;

#[derive(Debug, Clone)]
pub struct CfsSelection {
    /// Selected feature names, in table column order.
    pub selected: Vec<String>,
    /// Feature-class symmetric uncertainty per column, in table order.
    pub class_correlations: Vec<(String, f64)>,
    /// Merit of the final subset.
    pub merit: f64,
}

/// Subset merit from the class-correlation sum and the sum of pairwise
/// feature correlations.
pub fn subset_merit(class_sum: f64, pair_sum: f64, k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let denominator = (k as f64 + 2.0 * pair_sum).sqrt();
    if denominator <= 0.0 {
        return 0.0;
    }
    class_sum / denominator
}

struct CorrelationCache {
    codes: Vec<Vec<u32>>,
    pairs: HashMap<(usize, usize), f64>,
}

impl CorrelationCache {
    fn pair(&mut self, i: usize, j: usize) -> f64 {
        let key = if i < j { (i, j) } else { (j, i) };
        if let Some(&v) = self.pairs.get(&key) {
            return v;
        }
        let v = symmetric_uncertainty(&self.codes[key.0], &self.codes[key.1]);
        self.pairs.insert(key, v);
        v
    }
}

/// Greedy forward selection. Ties prefer the earlier column. If no feature
/// correlates with the class at all, falls back to the single best-scoring
/// feature so downstream models always see at least one column.
pub fn cfs_select(table: &FeatureTable) -> Result<CfsSelection> {
    table.validate()?;
    let codes = discretized_codes(table);
    let class = class_codes(table);
    let names: Vec<String> = table.feature_names().iter().map(|s| s.to_string()).collect();

    let class_su: Vec<f64> = codes
        .iter()
        .map(|c| symmetric_uncertainty(c, &class))
        .collect();
    let mut cache = CorrelationCache {
        codes,
        pairs: HashMap::new(),
    };

    let mut in_subset = vec![false; names.len()];
    let mut class_sum = 0.0;
    let mut pair_sum = 0.0;
    let mut merit = 0.0;
    loop {
        let mut best: Option<(usize, f64, f64)> = None;
        for candidate in 0..names.len() {
            if in_subset[candidate] {
                continue;
            }
            let extra_pairs: f64 = (0..names.len())
                .filter(|&j| in_subset[j])
                .map(|j| cache.pair(candidate, j))
                .sum();
            let k = in_subset.iter().filter(|&&s| s).count() + 1;
            let candidate_merit =
                subset_merit(class_sum + class_su[candidate], pair_sum + extra_pairs, k);
            // Strictly-better keeps the earliest column on ties.
            if best.is_none_or(|(_, _, m)| candidate_merit > m + 1e-12) {
                best = Some((candidate, extra_pairs, candidate_merit));
            }
        }
        match best {
            Some((candidate, extra_pairs, candidate_merit)) if candidate_merit > merit + 1e-12 => {
                in_subset[candidate] = true;
                class_sum += class_su[candidate];
                pair_sum += extra_pairs;
                merit = candidate_merit;
            }
            _ => break,
        }
    }

    let mut selected: Vec<String> = names
        .iter()
        .zip(&in_subset)
        .filter(|(_, &s)| s)
        .map(|(n, _)| n.clone())
        .collect();
    if selected.is_empty() {
        // Nothing correlates with the class; keep the best single feature,
        // earliest column on ties.
        let mut best = 0;
        for (i, su) in class_su.iter().enumerate().skip(1) {
            if *su > class_su[best] {
                best = i;
            }
        }
        selected.push(names[best].clone());
        merit = subset_merit(class_su[best], 0.0, 1);
    }

    Ok(CfsSelection {
        selected,
        class_correlations: names.into_iter().zip(class_su).collect(),
        merit,
    })
}
