use std::collections::BTreeMap;

use serde::Serialize;

use crate::assign::solve;
use crate::geometry::iou;
use crate::matrix::CostMatrix;

use super::labeled::{union_frames, LabeledFrameSet};
use super::MetricsError;

pub const NUM_ALPHAS: usize = 19;

/// Localization thresholds 0.05, 0.10, ..., 0.95.
pub fn alphas() -> [f64; NUM_ALPHAS] {
    std::array::from_fn(|k| (k + 1) as f64 / 20.0)
}

/// Weight of IoU relative to one unit of identity co-occurrence in the matching score.
const IOU_TIE_BREAK: f64 = 1e-3;

/// Tallies at one localization threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct AlphaCounts {
    pub tp: u64,
    pub fn_: u64,
    pub fp: u64,
    /// Sum over true positives of their association score `A(c)`.
    pub ass_sum: f64,
    /// Sum over true positives of their IoU.
    pub loc_sum: f64,
}

impl AlphaCounts {
    pub fn add(&mut self, o: &AlphaCounts) {
        self.tp += o.tp;
        self.fn_ += o.fn_;
        self.fp += o.fp;
        self.ass_sum += o.ass_sum;
        self.loc_sum += o.loc_sum;
    }

    pub fn deta(&self) -> f64 {
        let denom = self.tp + self.fn_ + self.fp;
        if denom == 0 {
            0.0
        } else {
            self.tp as f64 / denom as f64
        }
    }

    pub fn assa(&self) -> f64 {
        if self.tp == 0 {
            0.0
        } else {
            self.ass_sum / self.tp as f64
        }
    }

    pub fn loca(&self) -> f64 {
        if self.tp == 0 {
            0.0
        } else {
            self.loc_sum / self.tp as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HotaCounts {
    pub per_alpha: [AlphaCounts; NUM_ALPHAS],
}

impl Default for HotaCounts {
    fn default() -> Self {
        Self {
            per_alpha: [AlphaCounts::default(); NUM_ALPHAS],
        }
    }
}

impl HotaCounts {
    pub fn add(&mut self, o: &HotaCounts) {
        for (a, b) in self.per_alpha.iter_mut().zip(&o.per_alpha) {
            a.add(b);
        }
    }

    pub fn report(&self) -> HotaReport {
        let per_alpha: Vec<AlphaScores> = alphas()
            .iter()
            .zip(&self.per_alpha)
            .map(|(&alpha, c)| {
                let (deta, assa) = (c.deta(), c.assa());
                AlphaScores {
                    alpha,
                    deta,
                    assa,
                    hota: (deta * assa).sqrt(),
                    loca: c.loca(),
                }
            })
            .collect();
        HotaReport::from_alpha_scores(per_alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaScores {
    pub alpha: f64,
    pub deta: f64,
    pub assa: f64,
    pub hota: f64,
    pub loca: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HotaReport {
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
    pub loca: f64,
    pub per_alpha: Vec<AlphaScores>,
}

impl HotaReport {
    pub(crate) fn from_alpha_scores(per_alpha: Vec<AlphaScores>) -> Self {
        let n = per_alpha.len().max(1) as f64;
        let mean = |f: fn(&AlphaScores) -> f64| per_alpha.iter().map(f).sum::<f64>() / n;
        Self {
            hota: mean(|a| a.hota),
            deta: mean(|a| a.deta),
            assa: mean(|a| a.assa),
            loca: mean(|a| a.loca),
            per_alpha,
        }
    }
}

struct FrameOverlaps {
    gt_ids: Vec<usize>,
    res_ids: Vec<usize>,
    iou: CostMatrix,
}

/// HOTA tallies for every threshold.
///
/// At each threshold, pairs overlapping by at least `alpha` are candidates.
/// A first pass counts, for every identity pair, how many candidate pairs
/// they form over the whole sequence; the second pass matches each frame to
/// maximize that co-occurrence count, with IoU only breaking ties.
pub fn hota_counts(gt: &LabeledFrameSet, res: &LabeledFrameSet) -> Result<HotaCounts, MetricsError> {
    gt.check_unique_ids()?;
    res.check_unique_ids()?;
    let gt_index: BTreeMap<u32, usize> = gt.ids().into_iter().enumerate().map(|(i, id)| (id, i)).collect();
    let res_index: BTreeMap<u32, usize> = res.ids().into_iter().enumerate().map(|(i, id)| (id, i)).collect();
    let (ng, nr) = (gt_index.len(), res_index.len());

    let mut gt_dets = vec![0u64; ng];
    let mut res_dets = vec![0u64; nr];
    let frames: Vec<FrameOverlaps> = union_frames(gt, res)
        .into_iter()
        .map(|f| {
            let g = gt.frame(f);
            let r = res.frame(f);
            let gt_ids: Vec<usize> = g.iter().map(|b| gt_index[&b.id]).collect();
            let res_ids: Vec<usize> = r.iter().map(|b| res_index[&b.id]).collect();
            for &i in &gt_ids {
                gt_dets[i] += 1;
            }
            for &j in &res_ids {
                res_dets[j] += 1;
            }
            FrameOverlaps {
                gt_ids,
                res_ids,
                iou: CostMatrix::from_fn(g.len(), r.len(), |i, j| iou(&g[i].bbox, &r[j].bbox)),
            }
        })
        .collect();
    let total_gt: u64 = gt_dets.iter().sum();
    let total_res: u64 = res_dets.iter().sum();

    let mut out = HotaCounts::default();
    let mut cooccur = vec![0u64; ng * nr];
    let mut matched_pairs = vec![0u64; ng * nr];
    for (slot, &alpha) in out.per_alpha.iter_mut().zip(alphas().iter()) {
        cooccur.iter_mut().for_each(|c| *c = 0);
        matched_pairs.iter_mut().for_each(|c| *c = 0);
        for fr in &frames {
            for (a, &gi) in fr.gt_ids.iter().enumerate() {
                for (b, &rj) in fr.res_ids.iter().enumerate() {
                    if fr.iou[(a, b)] >= alpha {
                        cooccur[gi * nr + rj] += 1;
                    }
                }
            }
        }

        let mut tp = 0u64;
        let mut loc_sum = 0.0;
        for fr in &frames {
            if fr.iou.is_empty() {
                continue;
            }
            // Non-candidates cost 0 so they never displace a candidate, and are dropped below.
            let cost = CostMatrix::from_fn(fr.gt_ids.len(), fr.res_ids.len(), |a, b| {
                let o = fr.iou[(a, b)];
                if o >= alpha {
                    -(cooccur[fr.gt_ids[a] * nr + fr.res_ids[b]] as f64 + IOU_TIE_BREAK * o)
                } else {
                    0.0
                }
            });
            for (a, b) in solve(&cost, f64::INFINITY).matches {
                let o = fr.iou[(a, b)];
                if o >= alpha {
                    tp += 1;
                    loc_sum += o;
                    matched_pairs[fr.gt_ids[a] * nr + fr.res_ids[b]] += 1;
                }
            }
        }

        let mut ass_sum = 0.0;
        for gi in 0..ng {
            for rj in 0..nr {
                let m = matched_pairs[gi * nr + rj];
                if m > 0 {
                    let denom = gt_dets[gi] + res_dets[rj] - m;
                    ass_sum += m as f64 * (m as f64 / denom as f64);
                }
            }
        }
        *slot = AlphaCounts {
            tp,
            fn_: total_gt - tp,
            fp: total_res - tp,
            ass_sum,
            loc_sum,
        };
    }
    Ok(out)
}
