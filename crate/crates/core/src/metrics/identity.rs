use std::collections::BTreeMap;

use serde::Serialize;

use crate::assign::solve;
use crate::geometry::iou;
use crate::matrix::CostMatrix;

use super::labeled::{union_frames, LabeledFrameSet};
use super::MetricsError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IdCounts {
    pub idtp: u64,
    pub idfp: u64,
    pub idfn: u64,
}

impl IdCounts {
    pub fn add(&mut self, o: &IdCounts) {
        self.idtp += o.idtp;
        self.idfp += o.idfp;
        self.idfn += o.idfn;
    }

    pub fn idf1(&self) -> f64 {
        let denom = 2 * self.idtp + self.idfp + self.idfn;
        if denom == 0 {
            0.0
        } else {
            2.0 * self.idtp as f64 / denom as f64
        }
    }

    pub fn report(&self) -> IdReport {
        IdReport {
            idf1: self.idf1(),
            idtp: self.idtp,
            idfp: self.idfp,
            idfn: self.idfn,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdReport {
    pub idf1: f64,
    pub idtp: u64,
    pub idfp: u64,
    pub idfn: u64,
}

/// Identity-level matching: each ground-truth identity is paired with at most
/// one result identity so that the number of co-located frames (IoU at least
/// `iou_gate`) is maximal over the whole sequence.
pub fn id_counts(gt: &LabeledFrameSet, res: &LabeledFrameSet, iou_gate: f64) -> Result<IdCounts, MetricsError> {
    gt.check_unique_ids()?;
    res.check_unique_ids()?;
    let gt_index: BTreeMap<u32, usize> = gt.ids().into_iter().enumerate().map(|(i, id)| (id, i)).collect();
    let res_index: BTreeMap<u32, usize> = res.ids().into_iter().enumerate().map(|(i, id)| (id, i)).collect();
    let mut overlap_frames = vec![0u64; gt_index.len() * res_index.len()];
    let nr = res_index.len();

    for f in union_frames(gt, res) {
        for gb in gt.frame(f) {
            for rb in res.frame(f) {
                if iou(&gb.bbox, &rb.bbox) >= iou_gate {
                    overlap_frames[gt_index[&gb.id] * nr + res_index[&rb.id]] += 1;
                }
            }
        }
    }

    // Every pair is admissible; maximizing weight is minimizing its negation.
    let cost = CostMatrix::from_fn(gt_index.len(), nr, |i, j| -(overlap_frames[i * nr + j] as f64));
    let idtp: u64 = solve(&cost, f64::INFINITY)
        .matches
        .iter()
        .map(|&(i, j)| overlap_frames[i * nr + j])
        .sum();
    Ok(IdCounts {
        idtp,
        idfn: gt.len() as u64 - idtp,
        idfp: res.len() as u64 - idtp,
    })
}
