//! Budgeted classification metrics: top-k thresholding, per-group false
//! positive rates, FPRD and rank AUC.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::AgeGroup;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no scores to threshold")]
    EmptyScores,
    #[error("budget rate {0} is outside (0, 1)")]
    InvalidBudget(f64),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("FPR undefined: {0:?} group has no actual negatives")]
    UndefinedFpr(AgeGroup),
    #[error("AUC needs both classes")]
    SingleClass,
}

/// Rounds half away from zero.
pub fn round_count(x: f64) -> usize {
    x.round().max(0.0) as usize
}

/// Labels the `round(budget_rate * n)` highest scores positive. Equal
/// scores are ranked by ascending index.
pub fn threshold_by_budget(scores: &[f64], budget_rate: f64) -> Result<Vec<bool>, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::EmptyScores);
    }
    if !(budget_rate > 0.0 && budget_rate < 1.0) {
        return Err(MetricsError::InvalidBudget(budget_rate));
    }
    let k = round_count(budget_rate * scores.len() as f64);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut pred = vec![false; scores.len()];
    for &i in &order[..k] {
        pred[i] = true;
    }
    Ok(pred)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn actual_negatives(&self) -> u64 {
        self.fp + self.tn
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn fpr(&self) -> Option<f64> {
        let an = self.actual_negatives();
        (an > 0).then(|| self.fp as f64 / an as f64)
    }

    fn add(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionByGroup {
    pub young: Confusion,
    pub older: Confusion,
}

impl ConfusionByGroup {
    pub fn swapped(&self) -> ConfusionByGroup {
        ConfusionByGroup {
            young: self.older,
            older: self.young,
        }
    }

    /// Element-wise sum, for pooling folds.
    pub fn sum<'a>(items: impl IntoIterator<Item = &'a ConfusionByGroup>) -> ConfusionByGroup {
        let mut acc = ConfusionByGroup::default();
        for c in items {
            acc.young.add(&c.young);
            acc.older.add(&c.older);
        }
        acc
    }
}

pub fn compute_confusion(
    pred: &[bool],
    labels: &[bool],
    groups: &[AgeGroup],
) -> Result<ConfusionByGroup, MetricsError> {
    for other in [labels.len(), groups.len()] {
        if other != pred.len() {
            return Err(MetricsError::LengthMismatch {
                left: pred.len(),
                right: other,
            });
        }
    }
    let mut c = ConfusionByGroup::default();
    for ((&p, &y), &g) in pred.iter().zip(labels).zip(groups) {
        let cell = match g {
            AgeGroup::Young => &mut c.young,
            AgeGroup::Older => &mut c.older,
        };
        match (p, y) {
            (true, true) => cell.tp += 1,
            (true, false) => cell.fp += 1,
            (false, false) => cell.tn += 1,
            (false, true) => cell.fn_ += 1,
        }
    }
    Ok(c)
}

/// FPR_young - FPR_older, positive when older applicants are the ones
/// wrongly passed over less often, i.e. the classifier favours the young.
///
/// Evaluated as one rational `(fp_y * an_o - fp_o * an_y) / (an_y * an_o)`
/// with a single rounding, so the result is the correctly rounded exact
/// difference and swapping the groups negates it bit for bit.
pub fn compute_fprd(confusion: &ConfusionByGroup) -> Result<f64, MetricsError> {
    let an_y = confusion.young.actual_negatives();
    let an_o = confusion.older.actual_negatives();
    if an_y == 0 {
        return Err(MetricsError::UndefinedFpr(AgeGroup::Young));
    }
    if an_o == 0 {
        return Err(MetricsError::UndefinedFpr(AgeGroup::Older));
    }
    let num = i128::from(confusion.young.fp) * i128::from(an_o) - i128::from(confusion.older.fp) * i128::from(an_y);
    let den = i128::from(an_y) * i128::from(an_o);
    Ok(ratio_i128(num, den))
}

fn ratio_i128(num: i128, den: i128) -> f64 {
    // both fit in 2^53 for any realistic count, making the quotient correctly rounded
    num as f64 / den as f64
}

/// Mann-Whitney AUC with half credit for tied scores.
///
/// Computed as `(2 * wins + ties) / (2 * n_pos * n_neg)` from exact integer
/// counts, so it equals brute-force pair enumeration bit for bit.
pub fn compute_auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&y| y).count() as u128;
    let n_neg = labels.len() as u128 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    // adding zero folds -0.0 into 0.0 so the two tie
    let scores: Vec<f64> = scores.iter().map(|s| s + 0.0).collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut doubled: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u128, 0u128);
        while j < order.len() && scores[order[j]].total_cmp(&scores[order[i]]).is_eq() {
            if labels[order[j]] {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        doubled += 2 * pos * neg_below + pos * neg;
        neg_below += neg;
        i = j;
    }
    Ok(doubled as f64 / (2 * n_pos * n_neg) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelSource {
    Observed,
    Repaired,
    Latent,
}

/// Flat per-evaluation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: f64,
    pub fpr_young: f64,
    pub fpr_old: f64,
    pub fprd: f64,
    pub confusion: ConfusionByGroup,
    pub budget_rate: f64,
    pub label_source: LabelSource,
}

pub fn evaluate(
    scores: &[f64],
    labels: &[bool],
    groups: &[AgeGroup],
    budget_rate: f64,
    label_source: LabelSource,
) -> Result<EvalReport, MetricsError> {
    let pred = threshold_by_budget(scores, budget_rate)?;
    let confusion = compute_confusion(&pred, labels, groups)?;
    let fprd = compute_fprd(&confusion)?;
    let auc = compute_auc(scores, labels)?;
    Ok(EvalReport {
        auc,
        fpr_young: confusion.young.fpr().expect("checked by compute_fprd"),
        fpr_old: confusion.older.fpr().expect("checked by compute_fprd"),
        fprd,
        confusion,
        budget_rate,
        label_source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use AgeGroup::{Older, Young};

    fn group(fp: u64, an: u64) -> Confusion {
        Confusion {
            tp: 0,
            fp,
            tn: an - fp,
            fn_: 0,
        }
    }

    #[test]
    fn budget_counts_and_ties() {
        let s: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(threshold_by_budget(&s, 0.16).unwrap().iter().filter(|&&p| p).count(), 16);
        let flat = vec![0.5; 10];
        let p = threshold_by_budget(&flat, 0.3).unwrap();
        assert_eq!(p, [true, true, true, false, false, false, false, false, false, false]);
        assert_eq!(threshold_by_budget(&[0.9, 0.1], 0.5).unwrap(), vec![true, false]);
        assert_eq!(threshold_by_budget(&[], 0.5), Err(MetricsError::EmptyScores));
        assert_eq!(threshold_by_budget(&[1.0], 1.0), Err(MetricsError::InvalidBudget(1.0)));
        // half-away rounding: 0.25 * 10 = 2.5 -> 3
        assert_eq!(threshold_by_budget(&flat, 0.25).unwrap().iter().filter(|&&p| p).count(), 3);
    }

    #[test]
    fn budget_on_replica_size() {
        let s: Vec<f64> = (0..38_987).map(|i| ((i * 7919) % 1000) as f64).collect();
        let p = threshold_by_budget(&s, 0.16).unwrap();
        assert_eq!(p.iter().filter(|&&x| x).count(), 6238);
    }

    #[test]
    fn confusion_counts_per_group() {
        let pred = [true, true, false, false, true];
        let labels = [true, false, false, true, false];
        let groups = [Young, Young, Young, Older, Older];
        let c = compute_confusion(&pred, &labels, &groups).unwrap();
        assert_eq!(c.young, Confusion { tp: 1, fp: 1, tn: 1, fn_: 0 });
        assert_eq!(c.older, Confusion { tp: 0, fp: 1, tn: 0, fn_: 1 });
        assert!(matches!(
            compute_confusion(&pred, &labels[..2], &groups),
            Err(MetricsError::LengthMismatch { .. })
        ));
        let perfect = compute_confusion(&labels, &labels, &groups).unwrap();
        assert_eq!(perfect.young.fp + perfect.young.fn_ + perfect.older.fp + perfect.older.fn_, 0);
    }

    #[test]
    fn illusion_of_fairness_example() {
        let before = ConfusionByGroup {
            young: group(30, 100),
            older: group(20, 100),
        };
        assert_eq!(before.young.fpr(), Some(0.3));
        assert_eq!(before.older.fpr(), Some(0.2));
        assert_eq!(compute_fprd(&before).unwrap(), 0.1);
        let after = ConfusionByGroup {
            young: group(45, 120),
            older: group(5, 80),
        };
        assert_eq!(compute_fprd(&after).unwrap(), 0.3125);
        assert_eq!(compute_fprd(&after.swapped()).unwrap(), -0.3125);
    }

    #[test]
    fn fprd_needs_negatives_in_both_groups() {
        let c = ConfusionByGroup {
            young: group(0, 0),
            older: group(1, 2),
        };
        assert_eq!(compute_fprd(&c), Err(MetricsError::UndefinedFpr(Young)));
        let same = ConfusionByGroup {
            young: group(3, 9),
            older: group(3, 9),
        };
        assert_eq!(compute_fprd(&same).unwrap(), 0.0);
    }

    #[test]
    fn auc_examples() {
        let s = [0.8, 0.4, 0.6, 0.2];
        let y = [true, true, false, false];
        assert_eq!(compute_auc(&s, &y).unwrap(), 0.75);
        assert_eq!(compute_auc(&[0.9, 0.1], &[true, false]).unwrap(), 1.0);
        assert_eq!(compute_auc(&[0.3; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        assert_eq!(compute_auc(&[0.3, 0.4], &[true, true]), Err(MetricsError::SingleClass));
    }

    #[test]
    fn evaluate_composes() {
        let scores = [0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2];
        let labels = [true, false, false, true, false, false, false, true];
        let groups = [Young, Young, Older, Older, Young, Older, Young, Older];
        let r = evaluate(&scores, &labels, &groups, 0.5, LabelSource::Observed).unwrap();
        // predicted positive: indices 0..4
        assert_eq!(r.fpr_young, 1.0 / 3.0);
        assert_eq!(r.fpr_old, 1.0 / 2.0);
        // one rounding of -1/6, not two
        assert_eq!(r.fprd, -1.0 / 6.0);
        assert_eq!(r.label_source, LabelSource::Observed);
    }
}
