//! Classification metrics: AUC, Cohen's kappa, and McNemar's test.
//!
//! Throughout the crate the positive class is an *incorrect* answer, so a
//! score is "high" when the model believes the respondent will fail the item.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Area under the ROC curve via the Mann-Whitney formulation: the fraction of
/// (positive, negative) pairs where the positive scores strictly higher, with
/// ties counted as 0.5. Computed through tie-averaged ranks, which is exactly
/// equal to the pairwise count (each pair contributes 1, 0.5 or 0, all exact
/// in binary floating point).
///
/// Returns `None` when either class is absent; the metric is undefined there
/// and callers record it as missing.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "scores and labels must align");
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of tie-averaged ranks (1-based) over the positive examples.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // Rows i..j share one score; each gets the mean rank of the block.
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &row in &order[i..j] {
            if labels[row] {
                rank_sum += avg_rank;
            }
        }
        i = j;
    }

    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Brute-force AUC over all (positive, negative) pairs. Quadratic; used as an
/// independent oracle in tests.
pub fn auc_pairwise(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "scores and labels must align");
    let mut wins = 0.0;
    let mut pairs = 0u64;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    if pairs == 0 {
        None
    } else {
        Some(wins / pairs as f64)
    }
}

/// Cohen's kappa of thresholded probabilities against the true labels:
/// (p_o - p_e) / (1 - p_e), with expected agreement p_e from the marginal
/// products. A probability at or above `threshold` predicts the positive
/// class.
///
/// Returns `None` when the true labels contain a single class (the
/// chance-corrected denominator is then degenerate and the value carries no
/// information); if the expected agreement still reaches 1 the result is
/// defined as 0.
pub fn kappa(probabilities: &[f64], labels: &[bool], threshold: f64) -> Option<f64> {
    assert_eq!(probabilities.len(), labels.len(), "inputs must align");
    let n = labels.len();
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n == 0 || n_pos == 0 || n_pos == n {
        return None;
    }

    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    let mut tn = 0usize;
    for (&p, &label) in probabilities.iter().zip(labels) {
        let predicted = p >= threshold;
        match (predicted, label) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }

    // Clearing the 1/n^2 denominators keeps everything in exact integer
    // arithmetic: kappa = (n*agree - E) / (n^2 - E) with E the sum of the
    // marginal products. Counts are far below 2^31, so no overflow.
    let n = n as i64;
    let agree = (tp + tn) as i64;
    let pred_pos = (tp + fp) as i64;
    let true_pos = (tp + fn_) as i64;
    let pred_neg = (fn_ + tn) as i64;
    let true_neg = (fp + tn) as i64;
    let expected = pred_pos * true_pos + pred_neg * true_neg;
    let denominator = n * n - expected;
    if denominator <= 0 {
        // Expected agreement is already 1 (both marginals degenerate).
        return Some(0.0);
    }
    Some((n * agree - expected) as f64 / denominator as f64)
}

/// McNemar's chi-squared test with continuity correction on paired binary
/// outcomes. `b` counts pairs (true, false), `c` counts (false, true); the
/// statistic is (|b - c| - 1)^2 / (b + c) referred to chi-squared with one
/// degree of freedom. With no discordant pairs the statistic is 0 and p = 1.
pub fn mcnemar(pairs: &[(bool, bool)]) -> (f64, f64) {
    let b = pairs.iter().filter(|&&(x, y)| x && !y).count();
    let c = pairs.iter().filter(|&&(x, y)| !x && y).count();
    if b + c == 0 {
        return (0.0, 1.0);
    }
    let diff = b.abs_diff(c) as f64;
    let statistic = (diff - 1.0).powi(2) / (b + c) as f64;
    let chi = ChiSquared::new(1.0).expect("1 degree of freedom is valid");
    let p = chi.sf(statistic).clamp(0.0, 1.0);
    (statistic, p)
}
