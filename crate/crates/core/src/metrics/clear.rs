use std::collections::BTreeMap;

use serde::Serialize;

use crate::assign::solve;
use crate::geometry::iou;
use crate::matrix::CostMatrix;

use super::labeled::{union_frames, LabeledFrameSet};
use super::MetricsError;

/// Raw CLEAR tallies; ratios are derived so that sequences can be summed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ClearCounts {
    pub num_gt: u64,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub idsw: u64,
}

impl ClearCounts {
    pub fn add(&mut self, o: &ClearCounts) {
        self.num_gt += o.num_gt;
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.idsw += o.idsw;
    }

    /// `1 - (fp + fn + idsw) / num_gt`; an empty ground truth counts as one object.
    pub fn mota(&self) -> f64 {
        let errors = (self.fp + self.fn_ + self.idsw) as f64;
        1.0 - errors / self.num_gt.max(1) as f64
    }

    pub fn report(&self) -> ClearReport {
        ClearReport {
            mota: self.mota(),
            fp: self.fp,
            fn_: self.fn_,
            idsw: self.idsw,
            num_gt: self.num_gt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClearReport {
    pub mota: f64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub idsw: u64,
    pub num_gt: u64,
}

/// MOTChallenge-style CLEAR matching.
///
/// Per frame, a ground-truth object keeps its last matched result identity
/// if that identity is present and still overlaps by at least `iou_gate`.
/// The rest are matched optimally on IoU distance, maximizing the number of
/// matches first. A match whose result identity differs from the object's
/// last matched identity is an identity switch.
pub fn clear_counts(
    gt: &LabeledFrameSet,
    res: &LabeledFrameSet,
    iou_gate: f64,
) -> Result<ClearCounts, MetricsError> {
    gt.check_unique_ids()?;
    res.check_unique_ids()?;
    let mut counts = ClearCounts::default();
    let mut last_match: BTreeMap<u32, u32> = BTreeMap::new();

    for f in union_frames(gt, res) {
        let g = gt.frame(f);
        let r = res.frame(f);
        counts.num_gt += g.len() as u64;
        let overlap = CostMatrix::from_fn(g.len(), r.len(), |i, j| iou(&g[i].bbox, &r[j].bbox));

        let mut gt_matched = vec![false; g.len()];
        let mut res_matched = vec![false; r.len()];
        let mut pairs = Vec::new();
        for (i, gb) in g.iter().enumerate() {
            let Some(&prev) = last_match.get(&gb.id) else { continue };
            if let Some(j) = r.iter().position(|rb| rb.id == prev) {
                if !res_matched[j] && overlap[(i, j)] >= iou_gate {
                    gt_matched[i] = true;
                    res_matched[j] = true;
                    pairs.push((i, j));
                }
            }
        }

        let rows: Vec<usize> = (0..g.len()).filter(|&i| !gt_matched[i]).collect();
        let cols: Vec<usize> = (0..r.len()).filter(|&j| !res_matched[j]).collect();
        let cost = CostMatrix::from_fn(rows.len(), cols.len(), |a, b| {
            let o = overlap[(rows[a], cols[b])];
            if o >= iou_gate {
                1.0 - o
            } else {
                f64::INFINITY
            }
        });
        for (a, b) in solve(&cost, f64::INFINITY).matches {
            let (i, j) = (rows[a], cols[b]);
            if let Some(&prev) = last_match.get(&g[i].id) {
                if prev != r[j].id {
                    counts.idsw += 1;
                }
            }
            pairs.push((i, j));
        }

        for &(i, j) in &pairs {
            last_match.insert(g[i].id, r[j].id);
        }
        counts.tp += pairs.len() as u64;
        counts.fn_ += (g.len() - pairs.len()) as u64;
        counts.fp += (r.len() - pairs.len()) as u64;
    }
    Ok(counts)
}
