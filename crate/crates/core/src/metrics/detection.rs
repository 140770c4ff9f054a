//! Defect-level scoring: predicted instances are matched one-to-one to
//! ground-truth instances.

use super::overlap::{f_score, iou, ratio_or_one};
use crate::error::Result;
use crate::mask::Mask;

pub const DEFAULT_MATCH_IOU: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DefectOutcome {
    Matched { prediction: usize, iou: f64 },
    Missed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionScore {
    /// One entry per ground-truth instance, in input order.
    pub outcomes: Vec<DefectOutcome>,
    /// Indices of predictions left unmatched.
    pub spurious: Vec<usize>,
    pub precision: f64,
    pub recall: f64,
    pub f2: f64,
}

impl DetectionScore {
    pub fn matched(&self) -> usize {
        self.outcomes
            .iter()
            .filter(|o| matches!(o, DefectOutcome::Matched { .. }))
            .count()
    }

    pub fn missed(&self) -> usize {
        self.outcomes.len() - self.matched()
    }
}

/// Pairwise IOU table `[gt][pred]`.
pub fn iou_matrix(gt: &[Mask], pred: &[Mask]) -> Result<Vec<Vec<f64>>> {
    gt.iter()
        .map(|g| pred.iter().map(|p| iou(g, p)).collect())
        .collect()
}

/// Greedy one-to-one matching: pairs are taken in descending IOU order
/// (ties by ground-truth then prediction index) while both sides are free
/// and the IOU reaches `match_iou`.
pub fn detection_score(gt: &[Mask], pred: &[Mask], match_iou: f64) -> Result<DetectionScore> {
    let table = iou_matrix(gt, pred)?;
    let mut pairs: Vec<(usize, usize, f64)> = table
        .iter()
        .enumerate()
        .flat_map(|(g, row)| row.iter().enumerate().map(move |(p, &v)| (g, p, v)))
        .filter(|&(_, _, v)| v >= match_iou && v > 0.0)
        .collect();
    pairs.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));

    let mut outcomes = vec![DefectOutcome::Missed; gt.len()];
    let mut pred_used = vec![false; pred.len()];
    for (g, p, v) in pairs {
        if matches!(outcomes[g], DefectOutcome::Missed) && !pred_used[p] {
            outcomes[g] = DefectOutcome::Matched { prediction: p, iou: v };
            pred_used[p] = true;
        }
    }
    let matched = pred_used.iter().filter(|&&u| u).count();
    let precision = ratio_or_one(matched, pred.len());
    let recall = ratio_or_one(matched, gt.len());
    Ok(DetectionScore {
        outcomes,
        spurious: (0..pred.len()).filter(|&p| !pred_used[p]).collect(),
        precision,
        recall,
        f2: f_score(precision, recall, 2.0)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::PixelRect;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rect(r0: usize, c0: usize, r1: usize, c1: usize) -> Mask {
        Mask::rect(12, 12, PixelRect { row0: r0, col0: c0, row1: r1, col1: c1 })
    }

    #[test]
    fn identical_predictions_score_one() {
        let gt = vec![rect(0, 0, 2, 2), rect(6, 6, 9, 9)];
        let s = detection_score(&gt, &gt, DEFAULT_MATCH_IOU).unwrap();
        assert_eq!((s.precision, s.recall, s.f2), (1.0, 1.0, 1.0));
        assert!(s.spurious.is_empty());
    }

    #[test]
    fn one_missed_of_two() {
        let gt = vec![rect(0, 0, 2, 2), rect(6, 6, 9, 9)];
        let s = detection_score(&gt, &gt[..1], DEFAULT_MATCH_IOU).unwrap();
        assert_eq!(s.recall, 0.5);
        assert_eq!(s.outcomes[1], DefectOutcome::Missed);
        assert_eq!(s.matched() + s.missed(), 2);
    }

    #[test]
    fn spurious_prediction_lowers_precision() {
        let gt = vec![rect(0, 0, 2, 2)];
        let pred = vec![rect(0, 0, 2, 2), rect(8, 8, 10, 10)];
        let s = detection_score(&gt, &pred, DEFAULT_MATCH_IOU).unwrap();
        assert_eq!((s.precision, s.recall), (0.5, 1.0));
        assert_eq!(s.spurious, vec![1]);
    }

    /// Every partial one-to-one matching over eligible pairs; the winner has
    /// the lexicographically largest descending list of matched IOUs.
    fn exhaustive_best(table: &[Vec<f64>], thr: f64) -> Vec<Option<usize>> {
        fn rec(
            g: usize,
            table: &[Vec<f64>],
            thr: f64,
            used: &mut Vec<bool>,
            cur: &mut Vec<Option<usize>>,
            best: &mut (Vec<f64>, Vec<Option<usize>>),
        ) {
            if g == table.len() {
                let mut w: Vec<f64> = cur
                    .iter()
                    .enumerate()
                    .filter_map(|(gi, p)| p.map(|p| table[gi][p]))
                    .collect();
                w.sort_by(|a, b| b.total_cmp(a));
                let better = {
                    let mut ord = std::cmp::Ordering::Equal;
                    for i in 0..w.len().max(best.0.len()) {
                        let a = w.get(i).copied().unwrap_or(-1.0);
                        let b = best.0.get(i).copied().unwrap_or(-1.0);
                        ord = a.total_cmp(&b);
                        if ord != std::cmp::Ordering::Equal {
                            break;
                        }
                    }
                    ord == std::cmp::Ordering::Greater
                };
                if better {
                    *best = (w, cur.clone());
                }
                return;
            }
            cur.push(None);
            rec(g + 1, table, thr, used, cur, best);
            cur.pop();
            for p in 0..used.len() {
                if !used[p] && table[g][p] >= thr && table[g][p] > 0.0 {
                    used[p] = true;
                    cur.push(Some(p));
                    rec(g + 1, table, thr, used, cur, best);
                    cur.pop();
                    used[p] = false;
                }
            }
        }
        let np = table.first().map_or(0, |r| r.len());
        let mut best = (Vec::new(), vec![None; table.len()]);
        rec(0, table, thr, &mut vec![false; np], &mut Vec::new(), &mut best);
        best.1
    }

    fn random_rect(rng: &mut ChaCha8Rng) -> Mask {
        let r0 = rng.random_range(0..10);
        let c0 = rng.random_range(0..10);
        let r1 = (r0 + rng.random_range(0..5)).min(11);
        let c1 = (c0 + rng.random_range(0..5)).min(11);
        rect(r0, c0, r1, c1)
    }

    #[test]
    fn greedy_equals_exhaustive_on_small_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut checked = 0;
        while checked < 300 {
            let ng = rng.random_range(1..=4);
            let np = rng.random_range(1..=4);
            let gt: Vec<Mask> = (0..ng).map(|_| random_rect(&mut rng)).collect();
            let pred: Vec<Mask> = (0..np).map(|_| random_rect(&mut rng)).collect();
            let table = iou_matrix(&gt, &pred).unwrap();
            let mut nonzero: Vec<f64> = table.iter().flatten().copied().filter(|&v| v > 0.0).collect();
            nonzero.sort_by(f64::total_cmp);
            if nonzero.windows(2).any(|w| w[0] == w[1]) {
                continue; // ordering not unique
            }
            let s = detection_score(&gt, &pred, 0.1).unwrap();
            let greedy: Vec<Option<usize>> = s
                .outcomes
                .iter()
                .map(|o| match o {
                    DefectOutcome::Matched { prediction, .. } => Some(*prediction),
                    DefectOutcome::Missed => None,
                })
                .collect();
            assert_eq!(greedy, exhaustive_best(&table, 0.1));
            checked += 1;
        }
    }

    proptest! {
        #[test]
        fn recall_non_increasing_in_threshold(seed in any::<u64>(), t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let gt: Vec<Mask> = (0..4).map(|_| random_rect(&mut rng)).collect();
            let pred: Vec<Mask> = (0..4).map(|_| random_rect(&mut rng)).collect();
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            let a = detection_score(&gt, &pred, lo).unwrap();
            let b = detection_score(&gt, &pred, hi).unwrap();
            prop_assert!(b.recall <= a.recall);
        }
    }
}
