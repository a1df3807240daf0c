//! Stratified fold construction for repeated cross-validation.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Splits row indices into `k` disjoint folds covering every row, with each
/// class's counts per fold within one of the ideal proportion.
///
/// Each class's indices are shuffled and then dealt round-robin; the dealing
/// cursor carries over between classes so overall fold sizes also stay within
/// one of each other (n = k gives singleton folds). Fold contents are sorted
/// ascending so the partition depends only on the rng stream, not on dealing
/// order.
///
/// A class with fewer members than folds (including an absent class) gets a
/// warning on stderr and a best-effort split; `n < k` or `k == 0` is an
/// error.
pub fn stratified_folds<R: Rng + ?Sized>(
    labels: &[bool],
    k: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    let n = labels.len();
    if k == 0 {
        return Err(Error::Argument("fold count must be positive".into()));
    }
    if n < k {
        return Err(Error::Argument(format!(
            "cannot build {k} folds from {n} rows"
        )));
    }

    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut cursor = 0usize;
    for class in [false, true] {
        let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            eprintln!(
                "phic: warning: class {} has {} rows for {} folds; stratification is best-effort",
                if class { "positive" } else { "negative" },
                members.len(),
                k
            );
        }
        members.shuffle(rng);
        for index in members {
            folds[cursor].push(index);
            cursor = (cursor + 1) % k;
        }
    }

    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

/// The complement of one fold: every row index not held out in it.
pub fn training_rows(folds: &[Vec<usize>], fold: usize, n: usize) -> Vec<usize> {
    let mut held = vec![false; n];
    for &i in &folds[fold] {
        held[i] = true;
    }
    (0..n).filter(|&i| !held[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::derive_rng;
    use std::collections::BTreeSet;

    fn class_counts(fold: &[usize], labels: &[bool]) -> (usize, usize) {
        let pos = fold.iter().filter(|&&i| labels[i]).count();
        (pos, fold.len() - pos)
    }

    #[test]
    fn exact_divisibility_gives_uniform_class_counts() {
        let labels: Vec<bool> = (0..100).map(|i| i < 30).collect();
        let mut rng = derive_rng(11, "folds/test");
        let folds = stratified_folds(&labels, 10, &mut rng).unwrap();
        assert_eq!(folds.len(), 10);
        for fold in &folds {
            assert_eq!(class_counts(fold, &labels), (3, 7));
        }
    }

    #[test]
    fn folds_are_disjoint_and_cover_all_rows() {
        let mut rng = derive_rng(12, "folds/test");
        for n in [10usize, 23, 57, 101] {
            let labels: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
            let folds = stratified_folds(&labels, 10, &mut rng).unwrap();
            let mut seen = BTreeSet::new();
            for fold in &folds {
                for &i in fold {
                    assert!(seen.insert(i), "row {i} appears in two folds");
                }
            }
            assert_eq!(seen.len(), n);

            // Class counts per fold stay within one of the ideal share.
            let total_pos = labels.iter().filter(|&&l| l).count();
            for fold in &folds {
                let (pos, neg) = class_counts(fold, &labels);
                let ideal_pos = total_pos as f64 / 10.0;
                let ideal_neg = (n - total_pos) as f64 / 10.0;
                assert!((pos as f64 - ideal_pos).abs() <= 1.0);
                assert!((neg as f64 - ideal_neg).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn leave_one_out_boundary_gives_singletons() {
        let labels = [true, false, true, false, true, false, true, false, true, false];
        let mut rng = derive_rng(13, "folds/test");
        let folds = stratified_folds(&labels, 10, &mut rng).unwrap();
        for fold in &folds {
            assert_eq!(fold.len(), 1);
        }
    }

    #[test]
    fn same_seed_reproduces_the_partition() {
        let labels: Vec<bool> = (0..47).map(|i| i % 4 == 0).collect();
        let a = stratified_folds(&labels, 10, &mut derive_rng(14, "folds/p3/s2")).unwrap();
        let b = stratified_folds(&labels, 10, &mut derive_rng(14, "folds/p3/s2")).unwrap();
        let c = stratified_folds(&labels, 10, &mut derive_rng(14, "folds/p3/s3")).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn degenerate_inputs() {
        let mut rng = derive_rng(15, "folds/test");
        assert!(stratified_folds(&[true, false], 3, &mut rng).is_err());
        assert!(stratified_folds(&[], 1, &mut rng).is_err());
        assert!(stratified_folds(&[true], 0, &mut rng).is_err());

        // Single-class input still yields a covering partition (with a
        // warning, which we cannot capture here).
        let labels = vec![false; 20];
        let folds = stratified_folds(&labels, 10, &mut rng).unwrap();
        assert_eq!(folds.iter().map(Vec::len).sum::<usize>(), 20);
        for fold in &folds {
            assert_eq!(fold.len(), 2);
        }
    }

    #[test]
    fn training_rows_complement_the_fold() {
        let labels: Vec<bool> = (0..25).map(|i| i % 2 == 0).collect();
        let mut rng = derive_rng(16, "folds/test");
        let folds = stratified_folds(&labels, 5, &mut rng).unwrap();
        for f in 0..folds.len() {
            let train = training_rows(&folds, f, 25);
            assert_eq!(train.len() + folds[f].len(), 25);
            for &i in &train {
                assert!(!folds[f].contains(&i));
            }
        }
    }
}
