//! Evaluation: temporal IoU, recall at IoU thresholds, mean IoU, the
//! noise-prefix robustness augmentation and the fragmentation diagnostic.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::FeatureSequence;
use crate::proposals::Proposal;

/// Half-open time interval `[start, end)` in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && start < end) {
            return Err(Error::InvalidInterval { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn shifted(&self, by: f64) -> Self {
        Self {
            start: self.start + by,
            end: self.end + by,
        }
    }

    /// Smallest frame range covering this interval at `frame_rate`, clipped
    /// to `[0, n_frames)`.
    pub fn to_frames(&self, frame_rate: f32, n_frames: usize) -> Result<Proposal> {
        let fps = frame_rate as f64;
        let start = ((self.start * fps).floor().max(0.0) as usize).min(n_frames);
        let end = ((self.end * fps).ceil().max(0.0) as usize).min(n_frames);
        if start >= end {
            return Err(Error::InvalidInterval {
                start: self.start,
                end: self.end,
            });
        }
        Ok(Proposal { start, end })
    }
}

pub fn interval_iou(pred: Interval, gt: Interval) -> Result<f64> {
    for i in [pred, gt] {
        if !(i.start.is_finite() && i.end.is_finite() && i.start < i.end) {
            return Err(Error::InvalidInterval {
                start: i.start,
                end: i.end,
            });
        }
    }
    let intersection = (pred.end.min(gt.end) - pred.start.max(gt.start)).max(0.0);
    Ok(intersection / (pred.len() + gt.len() - intersection))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallAt {
    pub threshold: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    /// One entry per requested threshold, in request order.
    pub recall: Vec<RecallAt>,
    pub miou: f64,
    pub count: usize,
    #[serde(default, skip_serializing)]
    pub ious: Vec<f64>,
}

impl EvalSummary {
    pub fn recall_at(&self, threshold: f64) -> Option<f64> {
        self.recall
            .iter()
            .find(|r| r.threshold == threshold)
            .map(|r| r.recall)
    }

    /// Builds the summary from precomputed per-record IoUs.
    pub fn from_ious(ious: Vec<f64>, thresholds: &[f64]) -> Result<Self> {
        if ious.is_empty() {
            return Err(Error::Empty("evaluation record list"));
        }
        for &m in thresholds {
            if !(m > 0.0 && m < 1.0) {
                return Err(Error::Degenerate("IoU thresholds must lie in (0, 1)"));
            }
        }
        let count = ious.len();
        let recall = thresholds
            .iter()
            .map(|&threshold| RecallAt {
                threshold,
                recall: ious.iter().filter(|&&iou| iou > threshold).count() as f64 / count as f64,
            })
            .collect();
        let miou = ious.iter().sum::<f64>() / count as f64;
        Ok(Self {
            recall,
            miou,
            count,
            ious,
        })
    }
}

/// R@m counts a hit only when IoU is strictly greater than `m`.
pub fn evaluate(records: &[(Interval, Interval)], thresholds: &[f64]) -> Result<EvalSummary> {
    let ious = records
        .iter()
        .map(|&(pred, gt)| interval_iou(pred, gt))
        .collect::<Result<Vec<_>>>()?;
    EvalSummary::from_ious(ious, thresholds)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseAugmentation {
    /// Prefix length in seconds.
    pub rho: f64,
    pub seed: u64,
}

/// Prepends `rho · fps` frames of seeded unit-norm gaussian noise and shifts
/// the ground truth by `rho` seconds.
pub fn insert_noise_prefix(
    seq: &FeatureSequence,
    gt: Interval,
    aug: NoiseAugmentation,
) -> Result<(FeatureSequence, Interval)> {
    if !(aug.rho.is_finite() && aug.rho >= 0.0) {
        return Err(Error::Degenerate("noise prefix length must be a non-negative number"));
    }
    let frames = aug.rho * seq.frame_rate() as f64;
    let count = frames.round();
    if (frames - count).abs() > 1e-6 * count.max(1.0) {
        return Err(Error::Degenerate(
            "noise prefix length must be a whole number of frames",
        ));
    }
    let count = count as usize;
    let dim = seq.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(aug.seed);
    let mut data = Vec::with_capacity((count + seq.n_frames()) * dim);
    for _ in 0..count {
        let row: Vec<f64> = loop {
            let row: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            if row.iter().any(|v| *v != 0.0) {
                break row;
            }
        };
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        data.extend(row.iter().map(|v| (v / norm) as f32));
    }
    data.extend_from_slice(seq.as_slice());
    let extended = FeatureSequence::new(data, count + seq.n_frames(), dim, seq.frame_rate())?;
    Ok((extended, gt.shifted(aug.rho)))
}

/// Number of maximal constant-label runs that overlap the frame range `gt`.
pub fn clusters_per_gt(labels: &[usize], gt: Proposal) -> Result<usize> {
    if gt.start >= gt.end {
        return Err(Error::Empty("ground-truth interval"));
    }
    if gt.end > labels.len() {
        return Err(Error::OutOfRange {
            what: "ground-truth end",
            index: gt.end,
            limit: labels.len(),
        });
    }
    let span = &labels[gt.start..gt.end];
    Ok(1 + span.windows(2).filter(|w| w[0] != w[1]).count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn iv(a: f64, b: f64) -> Interval {
        Interval::new(a, b).unwrap()
    }

    #[test]
    fn iou_basics() {
        assert_eq!(interval_iou(iv(2.0, 7.5), iv(2.0, 7.5)).unwrap(), 1.0);
        assert_eq!(interval_iou(iv(0.0, 1.0), iv(3.0, 4.0)).unwrap(), 0.0);
        assert_eq!(interval_iou(iv(0.0, 1.0), iv(1.0, 4.0)).unwrap(), 0.0);
        assert!((interval_iou(iv(0.0, 10.0), iv(5.0, 15.0)).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((interval_iou(iv(0.0, 10.0), iv(2.0, 4.0)).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn degenerate_intervals() {
        assert!(Interval::new(3.0, 3.0).is_err());
        let bad = Interval { start: 2.0, end: 1.0 };
        assert!(interval_iou(bad, iv(0.0, 1.0)).is_err());
    }

    #[test]
    fn recall_uses_strict_threshold() {
        let s = EvalSummary::from_ious(vec![0.4, 0.6], &[0.3, 0.5, 0.7]).unwrap();
        assert_eq!(s.recall_at(0.3), Some(1.0));
        assert_eq!(s.recall_at(0.5), Some(0.5));
        assert_eq!(s.recall_at(0.7), Some(0.0));
        assert_eq!(s.miou, 0.5);

        let boundary = EvalSummary::from_ious(vec![0.5], &[0.5]).unwrap();
        assert_eq!(boundary.recall_at(0.5), Some(0.0));
    }

    #[test]
    fn exact_predictions() {
        let recs = vec![(iv(1.0, 2.0), iv(1.0, 2.0)), (iv(0.0, 9.0), iv(0.0, 9.0))];
        let s = evaluate(&recs, &[0.3, 0.5, 0.7]).unwrap();
        assert!(s.recall.iter().all(|r| r.recall == 1.0));
        assert_eq!(s.miou, 1.0);
        assert!(evaluate(&[], &[0.5]).is_err());
        assert!(evaluate(&recs, &[1.0]).is_err());
    }

    #[test]
    fn noise_prefix() {
        let seq = FeatureSequence::new((0..40).map(|v| v as f32).collect(), 20, 2, 1.0).unwrap();
        let gt = iv(3.0, 8.0);
        let (same, same_gt) =
            insert_noise_prefix(&seq, gt, NoiseAugmentation { rho: 0.0, seed: 1 }).unwrap();
        assert_eq!((same, same_gt), (seq.clone(), gt));

        let aug = NoiseAugmentation { rho: 10.0, seed: 9 };
        let (ext, ext_gt) = insert_noise_prefix(&seq, gt, aug).unwrap();
        assert_eq!(ext.n_frames(), 30);
        assert_eq!(ext_gt, iv(13.0, 18.0));
        assert_eq!(&ext.as_slice()[20..], seq.as_slice());
        for i in 0..10 {
            let norm: f32 = ext.row(i).iter().map(|v| v * v).sum::<f32>().sqrt();
            assert!((norm - 1.0).abs() < 1e-5);
        }
        let (again, _) = insert_noise_prefix(&seq, gt, aug).unwrap();
        assert_eq!(again, ext);

        assert!(insert_noise_prefix(&seq, gt, NoiseAugmentation { rho: 0.5, seed: 0 }).is_err());
    }

    #[test]
    fn fragmentation_counts() {
        assert_eq!(clusters_per_gt(&[4; 10], Proposal { start: 2, end: 9 }).unwrap(), 1);
        assert_eq!(
            clusters_per_gt(&[0, 0, 1, 1, 2, 2], Proposal { start: 1, end: 5 }).unwrap(),
            3
        );
        assert_eq!(clusters_per_gt(&[0, 1, 0], Proposal { start: 1, end: 2 }).unwrap(), 1);
        assert!(clusters_per_gt(&[0, 1], Proposal { start: 1, end: 1 }).is_err());
        assert!(clusters_per_gt(&[0, 1], Proposal { start: 1, end: 3 }).is_err());
    }

    #[test]
    fn seconds_to_frames() {
        assert_eq!(iv(1.0, 2.5).to_frames(2.0, 100).unwrap(), Proposal { start: 2, end: 5 });
        assert_eq!(iv(1.2, 2.1).to_frames(1.0, 100).unwrap(), Proposal { start: 1, end: 3 });
        assert_eq!(iv(1.0, 50.0).to_frames(1.0, 10).unwrap(), Proposal { start: 1, end: 10 });
    }

    proptest! {
        #[test]
        fn iou_is_symmetric_and_bounded(a in 0.0f64..50.0, la in 0.01f64..20.0, b in 0.0f64..50.0, lb in 0.01f64..20.0) {
            let x = iv(a, a + la);
            let y = iv(b, b + lb);
            let xy = interval_iou(x, y).unwrap();
            prop_assert_eq!(xy, interval_iou(y, x).unwrap());
            prop_assert!((0.0..=1.0).contains(&xy));
        }

        #[test]
        fn recall_is_monotone(ious in prop::collection::vec(0.0f64..=1.0, 1..50)) {
            let thresholds: Vec<f64> = (1..20).map(|i| i as f64 / 20.0).collect();
            let s = EvalSummary::from_ious(ious.clone(), &thresholds).unwrap();
            for w in s.recall.windows(2) {
                prop_assert!(w[1].recall <= w[0].recall);
            }
            let mean = ious.iter().sum::<f64>() / ious.len() as f64;
            prop_assert!((s.miou - mean).abs() < 1e-12);
        }
    }
}
