//! CLEAR (MOTA/FP/FN/IDSW), identity (IDF1) and HOTA (DetA/AssA/LocA) evaluation.
//!
//! Evaluators produce raw counts so that sequences can be combined by
//! summing (micro-average) before ratios are taken. By default each class is
//! scored separately and the ratios are macro-averaged over classes.

mod clear;
mod hota;
mod identity;
mod labeled;
mod report;

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

pub use clear::{clear_counts, ClearCounts, ClearReport};
pub use hota::{alphas, hota_counts, AlphaCounts, AlphaScores, HotaCounts, HotaReport, NUM_ALPHAS};
pub use identity::{id_counts, IdCounts, IdReport};
pub use labeled::{LabeledBox, LabeledFrameSet, Source};
pub use report::{format_alpha_table, format_table, machine_report, ReportRow};

/// IoU needed for a CLEAR or identity match.
pub const MATCH_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("{side:?} frame {frame} contains identity {id} more than once")]
    IdentityCollision { side: Source, frame: u64, id: u32 },
    #[error("nothing to aggregate")]
    EmptyAggregate,
}

pub fn evaluate_clear(gt: &LabeledFrameSet, res: &LabeledFrameSet, iou_gate: f64) -> Result<ClearReport, MetricsError> {
    Ok(clear_counts(gt, res, iou_gate)?.report())
}

pub fn evaluate_idf1(gt: &LabeledFrameSet, res: &LabeledFrameSet) -> Result<IdReport, MetricsError> {
    Ok(id_counts(gt, res, MATCH_IOU)?.report())
}

pub fn evaluate_hota(gt: &LabeledFrameSet, res: &LabeledFrameSet) -> Result<HotaReport, MetricsError> {
    Ok(hota_counts(gt, res)?.report())
}

/// All counts for one sequence (or one class of one sequence).
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SequenceCounts {
    pub clear: ClearCounts,
    pub identity: IdCounts,
    pub hota: HotaCounts,
}

impl SequenceCounts {
    pub fn compute(gt: &LabeledFrameSet, res: &LabeledFrameSet) -> Result<Self, MetricsError> {
        Ok(Self {
            clear: clear_counts(gt, res, MATCH_IOU)?,
            identity: id_counts(gt, res, MATCH_IOU)?,
            hota: hota_counts(gt, res)?,
        })
    }

    pub fn add(&mut self, o: &SequenceCounts) {
        self.clear.add(&o.clear);
        self.identity.add(&o.identity);
        self.hota.add(&o.hota);
    }

    pub fn report(&self) -> ClassReport {
        ClassReport {
            class_id: None,
            clear: self.clear.report(),
            identity: self.identity.report(),
            hota: self.hota.report(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalOptions {
    /// Score all classes together instead of per class.
    pub collapse_classes: bool,
}

/// Counts keyed by class; the `None` key holds a class-agnostic evaluation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalCounts {
    pub per_class: BTreeMap<Option<u16>, SequenceCounts>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassReport {
    pub class_id: Option<u16>,
    pub clear: ClearReport,
    pub identity: IdReport,
    pub hota: HotaReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub clear: ClearReport,
    pub identity: IdReport,
    pub hota: HotaReport,
    /// Per-class breakdown; empty when classes were collapsed.
    pub classes: Vec<ClassReport>,
}

impl MetricsReport {
    pub fn classes_collapsed(&self) -> bool {
        self.classes.is_empty()
    }
}

/// Evaluates one sequence. Classes are collapsed when requested or when
/// either side has boxes without a category.
pub fn evaluate(gt: &LabeledFrameSet, res: &LabeledFrameSet, opts: EvalOptions) -> Result<EvalCounts, MetricsError> {
    let mut per_class = BTreeMap::new();
    if opts.collapse_classes || gt.has_unlabeled_class() || res.has_unlabeled_class() {
        per_class.insert(None, SequenceCounts::compute(gt, res)?);
    } else {
        let classes: std::collections::BTreeSet<u16> = gt.classes().union(&res.classes()).copied().collect();
        if classes.is_empty() {
            per_class.insert(None, SequenceCounts::compute(gt, res)?);
        }
        for c in classes {
            per_class.insert(Some(c), SequenceCounts::compute(&gt.filter_class(c), &res.filter_class(c))?);
        }
    }
    Ok(EvalCounts { per_class })
}

impl EvalCounts {
    pub fn report(&self) -> MetricsReport {
        let reports: Vec<ClassReport> = self
            .per_class
            .iter()
            .map(|(class, counts)| ClassReport {
                class_id: *class,
                ..counts.report()
            })
            .collect();
        if let [single] = reports.as_slice() {
            if single.class_id.is_none() {
                return MetricsReport {
                    clear: single.clear,
                    identity: single.identity,
                    hota: single.hota.clone(),
                    classes: Vec::new(),
                };
            }
        }
        macro_average(reports)
    }
}

fn macro_average(reports: Vec<ClassReport>) -> MetricsReport {
    let n = reports.len().max(1) as f64;
    let mut clear = ClearCounts::default();
    let mut identity = IdCounts::default();
    for r in &reports {
        clear.add(&ClearCounts {
            num_gt: r.clear.num_gt,
            tp: 0,
            fp: r.clear.fp,
            fn_: r.clear.fn_,
            idsw: r.clear.idsw,
        });
        identity.add(&IdCounts {
            idtp: r.identity.idtp,
            idfp: r.identity.idfp,
            idfn: r.identity.idfn,
        });
    }
    let mut clear_report = clear.report();
    clear_report.mota = reports.iter().map(|r| r.clear.mota).sum::<f64>() / n;
    let mut id_report = identity.report();
    id_report.idf1 = reports.iter().map(|r| r.identity.idf1).sum::<f64>() / n;

    let per_alpha = alphas()
        .iter()
        .enumerate()
        .map(|(k, &alpha)| {
            let mean = |f: fn(&AlphaScores) -> f64| reports.iter().map(|r| f(&r.hota.per_alpha[k])).sum::<f64>() / n;
            AlphaScores {
                alpha,
                deta: mean(|a| a.deta),
                assa: mean(|a| a.assa),
                hota: mean(|a| a.hota),
                loca: mean(|a| a.loca),
            }
        })
        .collect();
    MetricsReport {
        clear: clear_report,
        identity: id_report,
        hota: HotaReport::from_alpha_scores(per_alpha),
        classes: reports,
    }
}

/// Combines sequences by summing their raw counts, class by class.
pub fn aggregate<'a>(sequences: impl IntoIterator<Item = &'a EvalCounts>) -> Result<EvalCounts, MetricsError> {
    let mut out = EvalCounts::default();
    let mut any = false;
    for seq in sequences {
        any = true;
        for (class, counts) in &seq.per_class {
            out.per_class.entry(*class).or_default().add(counts);
        }
    }
    if any {
        Ok(out)
    } else {
        Err(MetricsError::EmptyAggregate)
    }
}

#[cfg(test)]
mod tests;
