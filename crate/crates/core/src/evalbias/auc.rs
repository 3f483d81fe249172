//! Mann–Whitney AUC with midrank tie handling.

use std::collections::BTreeMap;

use crate::scalar::Real;

use super::EvalError;

/// AUC as the Mann–Whitney statistic: the fraction of (positive,
/// negative) pairs where the positive outranks the negative, ties counted
/// half. Computed in `O(n log n)` by summing midranks of the positives.
pub fn auc<T: Real>(scores: &[T], labels: &[bool]) -> Result<T, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch { left: scores.len(), right: labels.len() });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore);
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    // midranks over runs of equal scores, 1-based
    let mut rank_sum_pos = T::zero();
    let mut start = 0usize;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let midrank = T::from_count(start + 1 + end) / T::c(2.0);
        for &idx in &order[start..end] {
            if labels[idx] {
                rank_sum_pos += midrank;
            }
        }
        start = end;
    }

    let np = T::from_count(n_pos);
    let nn = T::from_count(n_neg);
    Ok((rank_sum_pos - np * (np + T::one()) / T::c(2.0)) / (np * nn))
}

/// Per-group AUC. Groups that lack one of the classes are reported in
/// `skipped` with a reason and excluded from the gap.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupAuc<T> {
    pub per_group: BTreeMap<usize, T>,
    pub skipped: BTreeMap<usize, String>,
    /// `max - min` over the computed groups; zero with fewer than two.
    pub gap: T,
}

pub fn group_auc<T: Real>(
    scores: &[T],
    labels: &[bool],
    groups: &[usize],
) -> Result<GroupAuc<T>, EvalError> {
    if scores.len() != groups.len() {
        return Err(EvalError::LengthMismatch { left: scores.len(), right: groups.len() });
    }
    let mut partitions: BTreeMap<usize, (Vec<T>, Vec<bool>)> = BTreeMap::new();
    for ((&s, &l), &g) in scores.iter().zip(labels).zip(groups) {
        let slot = partitions.entry(g).or_default();
        slot.0.push(s);
        slot.1.push(l);
    }
    let mut per_group = BTreeMap::new();
    let mut skipped = BTreeMap::new();
    for (group, (s, l)) in partitions {
        match auc(&s, &l) {
            Ok(value) => {
                per_group.insert(group, value);
            }
            Err(EvalError::SingleClass) => {
                skipped.insert(group, "group lacks one of the two classes".to_string());
            }
            Err(e) => return Err(e),
        }
    }
    let gap = if per_group.len() >= 2 {
        let max = per_group.values().copied().fold(T::neg_infinity(), T::max);
        let min = per_group.values().copied().fold(T::infinity(), T::min);
        max - min
    } else {
        T::zero()
    };
    Ok(GroupAuc { per_group, skipped, gap })
}
