use std::collections::{BTreeMap, BTreeSet};

use crate::geometry::BBox;

use super::MetricsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    GroundTruth,
    Result,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledBox {
    pub id: u32,
    pub bbox: BBox,
    /// `None` when the file carries no category.
    pub class_id: Option<u16>,
}

/// Identity-labeled boxes for a range of frames, either ground truth or tracker output.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFrameSet {
    pub source: Source,
    frames: BTreeMap<u64, Vec<LabeledBox>>,
    range: Option<(u64, u64)>,
}

impl LabeledFrameSet {
    pub fn new(source: Source) -> Self {
        Self {
            source,
            frames: BTreeMap::new(),
            range: None,
        }
    }

    pub fn push(&mut self, frame: u64, b: LabeledBox) {
        self.frames.entry(frame).or_default().push(b);
        self.range = Some(match self.range {
            None => (frame, frame),
            Some((lo, hi)) => (lo.min(frame), hi.max(frame)),
        });
    }

    /// Widens the declared frame range, e.g. to a sequence's full length.
    pub fn declare_range(&mut self, first: u64, last: u64) {
        self.range = Some(match self.range {
            None => (first, last),
            Some((lo, hi)) => (lo.min(first), hi.max(last)),
        });
    }

    pub fn range(&self) -> Option<(u64, u64)> {
        self.range
    }

    pub fn frame(&self, frame: u64) -> &[LabeledBox] {
        self.frames.get(&frame).map_or(&[], Vec::as_slice)
    }

    pub fn frames(&self) -> impl Iterator<Item = (u64, &[LabeledBox])> {
        self.frames.iter().map(|(f, v)| (*f, v.as_slice()))
    }

    pub fn frame_numbers(&self) -> impl Iterator<Item = u64> + '_ {
        self.frames.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.frames.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self) -> BTreeSet<u32> {
        self.frames.values().flatten().map(|b| b.id).collect()
    }

    pub fn classes(&self) -> BTreeSet<u16> {
        self.frames.values().flatten().filter_map(|b| b.class_id).collect()
    }

    pub fn has_unlabeled_class(&self) -> bool {
        self.frames.values().flatten().any(|b| b.class_id.is_none())
    }

    /// Keeps only boxes of one class; the declared range is preserved.
    pub fn filter_class(&self, class_id: u16) -> Self {
        let mut out = Self::new(self.source);
        for (f, boxes) in &self.frames {
            for b in boxes.iter().filter(|b| b.class_id == Some(class_id)) {
                out.push(*f, *b);
            }
        }
        out.range = self.range;
        out
    }

    /// Every identity appears at most once per frame.
    pub fn check_unique_ids(&self) -> Result<(), MetricsError> {
        for (f, boxes) in &self.frames {
            let mut seen = BTreeSet::new();
            for b in boxes {
                if !seen.insert(b.id) {
                    return Err(MetricsError::IdentityCollision {
                        side: self.source,
                        frame: *f,
                        id: b.id,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Sorted union of the frame numbers present in either set.
pub(crate) fn union_frames(a: &LabeledFrameSet, b: &LabeledFrameSet) -> Vec<u64> {
    let set: BTreeSet<u64> = a.frame_numbers().chain(b.frame_numbers()).collect();
    set.into_iter().collect()
}
