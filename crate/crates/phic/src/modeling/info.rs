//! Entropy-based association measures over discrete codes, in bits.

/// Shannon entropy of a code vector.
pub fn entropy(codes: &[u32]) -> f64 {
    if codes.is_empty() {
        return 0.0;
    }
    let mut counts = std::collections::BTreeMap::new();
    for &c in codes {
        *counts.entry(c).or_insert(0usize) += 1;
    }
    let n = codes.len() as f64;
    counts
        .values()
        .map(|&k| {
            let p = k as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Conditional entropy H(Y | X).
pub fn conditional_entropy(x: &[u32], y: &[u32]) -> f64 {
    assert_eq!(x.len(), y.len(), "code vectors must align");
    if x.is_empty() {
        return 0.0;
    }
    let mut groups: std::collections::BTreeMap<u32, Vec<u32>> = std::collections::BTreeMap::new();
    for (&xi, &yi) in x.iter().zip(y) {
        groups.entry(xi).or_default().push(yi);
    }
    let n = x.len() as f64;
    groups
        .values()
        .map(|ys| ys.len() as f64 / n * entropy(ys))
        .sum()
}

/// Information gain IG(Y; X) = H(Y) - H(Y | X). Symmetric in its arguments.
pub fn info_gain(x: &[u32], y: &[u32]) -> f64 {
    // Entropy arithmetic can go a hair negative; gain is non-negative by
    // definition.
    (entropy(y) - conditional_entropy(x, y)).max(0.0)
}

/// Symmetric uncertainty: 2 IG / (H(X) + H(Y)), zero when both entropies
/// vanish.
pub fn symmetric_uncertainty(x: &[u32], y: &[u32]) -> f64 {
    let denominator = entropy(x) + entropy(y);
    if denominator <= 0.0 {
        return 0.0;
    }
    (2.0 * info_gain(x, y) / denominator).clamp(0.0, 1.0)
}

/// Gain ratio IG(Y; X) / H(X), zero when the feature has no entropy.
pub fn gain_ratio(x: &[u32], y: &[u32]) -> f64 {
    let hx = entropy(x);
    if hx <= 0.0 {
        return 0.0;
    }
    info_gain(x, y) / hx
}

/// Entropy of a boolean label vector.
pub fn label_entropy(labels: &[bool]) -> f64 {
    entropy(&label_codes(labels))
}

pub fn label_codes(labels: &[bool]) -> Vec<u32> {
    labels.iter().map(|&l| u32::from(l)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn entropy_matches_hand_values() {
        assert_eq!(entropy(&[]), 0.0);
        assert_eq!(entropy(&[3, 3, 3]), 0.0);
        assert_relative_eq!(entropy(&[0, 1]), 1.0);
        assert_relative_eq!(entropy(&[0, 0, 0, 1]), 0.8112781244591328, epsilon = 1e-12);
        // Uniform over 4 codes: 2 bits.
        assert_relative_eq!(entropy(&[0, 1, 2, 3]), 2.0);
    }

    #[test]
    fn info_gain_is_symmetric_and_bounded() {
        let x = [0, 0, 1, 1, 2, 2, 0, 1];
        let y = [0, 1, 0, 1, 1, 1, 0, 0];
        assert_relative_eq!(info_gain(&x, &y), info_gain(&y, &x), epsilon = 1e-12);
        assert!(info_gain(&x, &y) <= entropy(&y) + 1e-12);
        assert!(info_gain(&x, &y) >= 0.0);
    }

    #[test]
    fn determined_feature_has_unit_symmetric_uncertainty() {
        // y = x exactly.
        let x = [0, 1, 0, 1, 1, 0];
        let y = x;
        assert_relative_eq!(symmetric_uncertainty(&x, &y), 1.0);
        // Independent uniform pair over the full grid: zero.
        let x = [0, 0, 1, 1];
        let y = [0, 1, 0, 1];
        assert_relative_eq!(symmetric_uncertainty(&x, &y), 0.0);
    }

    #[test]
    fn gain_ratio_matches_hand_computation() {
        // x splits 8 rows into groups of 4/4 (H(X) = 1); y is pure in the
        // first group and 50/50 in the second. H(Y) with 6 zeros, 2 ones is
        // H(0.25); H(Y|X) = 0.5 * 0 + 0.5 * 1.
        let x = [0, 0, 0, 0, 1, 1, 1, 1];
        let y = [0, 0, 0, 0, 0, 0, 1, 1];
        let h_y = -(0.75f64 * 0.75f64.log2() + 0.25 * 0.25f64.log2());
        let expected = (h_y - 0.5) / 1.0;
        assert_relative_eq!(gain_ratio(&x, &y), expected, epsilon = 1e-12);
        // Constant feature: defined as zero.
        assert_eq!(gain_ratio(&[5, 5, 5], &[0, 1, 0]), 0.0);
    }

    #[test]
    fn gain_ratio_is_invariant_to_code_relabelling() {
        let x = [0, 2, 2, 1, 0, 1, 2, 0];
        let y = [1, 0, 0, 1, 1, 0, 1, 0];
        // Swap codes 0 and 2 in x.
        let relabelled: Vec<u32> = x.iter().map(|&c| match c {
            0 => 2,
            2 => 0,
            other => other,
        }).collect();
        assert_relative_eq!(gain_ratio(&x, &y), gain_ratio(&relabelled, &y), epsilon = 1e-12);
    }
}
