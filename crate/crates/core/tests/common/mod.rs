//! Brute-force oracles shared by the integration suites.

#![allow(dead_code)]

use rand::Rng;
use skytrack::metrics::{LabeledBox, LabeledFrameSet, Source};
use skytrack::BBox;

/// Calls `visit` with every partial matching whose pairs satisfy `allowed`.
pub fn for_each_matching(rows: usize, cols: usize, allowed: &dyn Fn(usize, usize) -> bool, visit: &mut dyn FnMut(&[(usize, usize)])) {
    fn rec(
        i: usize,
        rows: usize,
        cols: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<(usize, usize)>,
        allowed: &dyn Fn(usize, usize) -> bool,
        visit: &mut dyn FnMut(&[(usize, usize)]),
    ) {
        if i == rows {
            visit(cur);
            return;
        }
        rec(i + 1, rows, cols, used, cur, allowed, visit);
        for j in 0..cols {
            if !used[j] && allowed(i, j) {
                used[j] = true;
                cur.push((i, j));
                rec(i + 1, rows, cols, used, cur, allowed, visit);
                cur.pop();
                used[j] = false;
            }
        }
    }
    rec(0, rows, cols, &mut vec![false; cols], &mut Vec::new(), allowed, visit);
}

/// Largest number of admissible pairs, then the least total cost among such matchings.
pub fn assignment_oracle(cost: &[Vec<f64>], gate: f64) -> (usize, f64) {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    let ok = |i: usize, j: usize| cost[i][j].is_finite() && cost[i][j] <= gate;
    let mut best = (0usize, 0.0f64);
    for_each_matching(rows, cols, &ok, &mut |m| {
        let c: f64 = m.iter().map(|&(i, j)| cost[i][j]).sum();
        if m.len() > best.0 || (m.len() == best.0 && c < best.1) {
            best = (m.len(), c);
        }
    });
    best
}

pub fn oracle_iou(a: &BBox, b: &BBox) -> f64 {
    let x1 = a.left.max(b.left);
    let y1 = a.top.max(b.top);
    let x2 = (a.left + a.width).min(b.left + b.width);
    let y2 = (a.top + a.height).min(b.top + b.height);
    let inter = (x2 - x1).max(0.0) * (y2 - y1).max(0.0);
    let union = a.width * a.height + b.width * b.height - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AlphaOracle {
    pub tp: u64,
    pub fn_: u64,
    pub fp: u64,
    pub deta: f64,
    pub assa: f64,
    pub hota: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsOracle {
    pub num_gt: u64,
    pub fp: u64,
    pub fn_: u64,
    pub idsw: u64,
    pub mota: f64,
    pub idtp: u64,
    pub idfp: u64,
    pub idfn: u64,
    pub idf1: f64,
    pub alphas: Vec<AlphaOracle>,
    pub hota: f64,
}

type Frame = (u64, Vec<LabeledBox>, Vec<LabeledBox>);

fn frames(gt: &LabeledFrameSet, res: &LabeledFrameSet) -> Vec<Frame> {
    let mut nums: Vec<u64> = gt.frame_numbers().chain(res.frame_numbers()).collect();
    nums.sort_unstable();
    nums.dedup();
    nums.into_iter()
        .map(|f| (f, gt.frame(f).to_vec(), res.frame(f).to_vec()))
        .collect()
}

/// CLEAR, IDF1 and HOTA by exhaustive search over every matching, at IoU 0.5
/// for CLEAR and IDF1 and at 0.05..=0.95 for HOTA.
pub fn metrics_oracle(gt: &LabeledFrameSet, res: &LabeledFrameSet) -> MetricsOracle {
    let fr = frames(gt, res);
    let mut out = MetricsOracle::default();

    // CLEAR: continuity first, then maximum matches of least IoU distance.
    let mut last: std::collections::HashMap<u32, u32> = std::collections::HashMap::new();
    for (_, g, r) in &fr {
        out.num_gt += g.len() as u64;
        let mut fixed: Vec<(usize, usize)> = Vec::new();
        for (i, gb) in g.iter().enumerate() {
            if let Some(&p) = last.get(&gb.id) {
                if let Some(j) = r.iter().position(|rb| rb.id == p) {
                    if !fixed.iter().any(|q| q.1 == j) && oracle_iou(&gb.bbox, &r[j].bbox) >= 0.5 {
                        fixed.push((i, j));
                    }
                }
            }
        }
        let gi_free: Vec<usize> = (0..g.len()).filter(|i| !fixed.iter().any(|p| p.0 == *i)).collect();
        let rj_free: Vec<usize> = (0..r.len()).filter(|j| !fixed.iter().any(|p| p.1 == *j)).collect();
        let ok = |a: usize, b: usize| oracle_iou(&g[gi_free[a]].bbox, &r[rj_free[b]].bbox) >= 0.5;
        let mut best: (usize, f64, Vec<(usize, usize)>) = (0, 0.0, Vec::new());
        for_each_matching(gi_free.len(), rj_free.len(), &ok, &mut |m| {
            let c: f64 = m
                .iter()
                .map(|&(a, b)| 1.0 - oracle_iou(&g[gi_free[a]].bbox, &r[rj_free[b]].bbox))
                .sum();
            if m.len() > best.0 || (m.len() == best.0 && c < best.1) {
                best = (m.len(), c, m.to_vec());
            }
        });
        let mut pairs = fixed.clone();
        for (a, b) in best.2 {
            let (i, j) = (gi_free[a], rj_free[b]);
            if last.get(&g[i].id).is_some_and(|&p| p != r[j].id) {
                out.idsw += 1;
            }
            pairs.push((i, j));
        }
        for &(i, j) in &pairs {
            last.insert(g[i].id, r[j].id);
        }
        out.fn_ += (g.len() - pairs.len()) as u64;
        out.fp += (r.len() - pairs.len()) as u64;
    }
    out.mota = 1.0 - (out.fp + out.fn_ + out.idsw) as f64 / out.num_gt.max(1) as f64;

    // IDF1: best one-to-one identity pairing by co-located frames.
    let gids: Vec<u32> = gt.ids().into_iter().collect();
    let rids: Vec<u32> = res.ids().into_iter().collect();
    let colocated = |gi: usize, rj: usize, alpha: f64| -> u64 {
        fr.iter()
            .filter(|(_, g, r)| {
                let gb = g.iter().find(|b| b.id == gids[gi]);
                let rb = r.iter().find(|b| b.id == rids[rj]);
                matches!((gb, rb), (Some(a), Some(b)) if oracle_iou(&a.bbox, &b.bbox) >= alpha)
            })
            .count() as u64
    };
    let mut idtp = 0u64;
    for_each_matching(gids.len(), rids.len(), &|_, _| true, &mut |m| {
        idtp = idtp.max(m.iter().map(|&(i, j)| colocated(i, j, 0.5)).sum());
    });
    let (ng, nr) = (gt.len() as u64, res.len() as u64);
    out.idtp = idtp;
    out.idfn = ng - idtp;
    out.idfp = nr - idtp;
    let denom = 2 * idtp + out.idfp + out.idfn;
    out.idf1 = if denom == 0 { 0.0 } else { 2.0 * idtp as f64 / denom as f64 };

    // HOTA: per frame, the matching of largest co-occurrence with IoU as tie-break.
    let dets = |set: &[Frame], id: u32, side_gt: bool| -> u64 {
        set.iter()
            .filter(|(_, g, r)| if side_gt { g.iter().any(|b| b.id == id) } else { r.iter().any(|b| b.id == id) })
            .count() as u64
    };
    for k in 1..=19 {
        let alpha = k as f64 / 20.0;
        let co: Vec<Vec<u64>> = (0..gids.len())
            .map(|i| (0..rids.len()).map(|j| colocated(i, j, alpha)).collect())
            .collect();
        let mut matched = vec![vec![0u64; rids.len()]; gids.len()];
        let mut a = AlphaOracle::default();
        for (_, g, r) in &fr {
            let gix: Vec<usize> = g.iter().map(|b| gids.iter().position(|&x| x == b.id).unwrap()).collect();
            let rix: Vec<usize> = r.iter().map(|b| rids.iter().position(|&x| x == b.id).unwrap()).collect();
            let ok = |i: usize, j: usize| oracle_iou(&g[i].bbox, &r[j].bbox) >= alpha;
            let mut best: (f64, Vec<(usize, usize)>) = (0.0, Vec::new());
            for_each_matching(g.len(), r.len(), &ok, &mut |m| {
                let w: f64 = m
                    .iter()
                    .map(|&(i, j)| co[gix[i]][rix[j]] as f64 + 1e-3 * oracle_iou(&g[i].bbox, &r[j].bbox))
                    .sum();
                if w > best.0 {
                    best = (w, m.to_vec());
                }
            });
            for (i, j) in best.1 {
                a.tp += 1;
                matched[gix[i]][rix[j]] += 1;
            }
        }
        a.fn_ = ng - a.tp;
        a.fp = nr - a.tp;
        let mut ass = 0.0;
        for (i, row) in matched.iter().enumerate() {
            for (j, &m) in row.iter().enumerate() {
                if m > 0 {
                    let d = dets(&fr, gids[i], true) + dets(&fr, rids[j], false) - m;
                    ass += m as f64 * m as f64 / d as f64;
                }
            }
        }
        let denom = a.tp + a.fn_ + a.fp;
        a.deta = if denom == 0 { 0.0 } else { a.tp as f64 / denom as f64 };
        a.assa = if a.tp == 0 { 0.0 } else { ass / a.tp as f64 };
        a.hota = (a.deta * a.assa).sqrt();
        out.alphas.push(a);
    }
    out.hota = out.alphas.iter().map(|a| a.hota).sum::<f64>() / 19.0;
    out
}

fn labeled(id: u32, l: f64, t: f64, w: f64, h: f64) -> LabeledBox {
    LabeledBox {
        id,
        bbox: BBox::new(l, t, w, h),
        class_id: Some(1),
    }
}

/// Up to 3 objects over up to 5 frames, with a result that follows them
/// noisily, swaps identities, misses boxes and adds strays.
pub fn random_scenario(rng: &mut impl Rng) -> (LabeledFrameSet, LabeledFrameSet) {
    let frames = rng.gen_range(1..=5u64);
    let objects = rng.gen_range(1..=3usize);
    let mut paths: Vec<Vec<Option<[f64; 4]>>> = Vec::new();
    for _ in 0..objects {
        let (mut x, mut y) = (rng.gen_range(0.0..40.0), rng.gen_range(0.0..40.0));
        let (w, h) = (rng.gen_range(8.0..16.0), rng.gen_range(8.0..16.0));
        let mut p = Vec::new();
        for _ in 0..frames {
            x += rng.gen_range(-3.0..3.0);
            y += rng.gen_range(-3.0..3.0);
            p.push(rng.gen_bool(0.85).then_some([x, y, w, h]));
        }
        paths.push(p);
    }
    let mut gt = LabeledFrameSet::new(Source::GroundTruth);
    for (o, p) in paths.iter().enumerate() {
        for (f, b) in p.iter().enumerate() {
            if let Some([l, t, w, h]) = b {
                gt.push(f as u64 + 1, labeled(o as u32 + 1, *l, *t, *w, *h));
            }
        }
    }
    let mut res = LabeledFrameSet::new(Source::Result);
    let tracks = rng.gen_range(0..=3u32);
    for k in 0..tracks {
        let id = 10 + k * rng.gen_range(1..4);
        let mut follow = rng.gen_range(0..objects);
        for f in 0..frames as usize {
            if rng.gen_bool(0.2) {
                follow = rng.gen_range(0..objects);
            }
            if !rng.gen_bool(0.85) {
                continue;
            }
            let b = match paths[follow][f] {
                Some([l, t, w, h]) if rng.gen_bool(0.85) => [
                    l + rng.gen_range(-3.0..3.0),
                    t + rng.gen_range(-3.0..3.0),
                    w + rng.gen_range(-2.0..2.0),
                    h + rng.gen_range(-2.0..2.0),
                ],
                _ => [rng.gen_range(0.0..50.0), rng.gen_range(0.0..50.0), rng.gen_range(6.0..16.0), rng.gen_range(6.0..16.0)],
            };
            if res.frame(f as u64 + 1).iter().all(|x| x.id != id) {
                res.push(f as u64 + 1, labeled(id, b[0], b[1], b[2], b[3]));
            }
        }
    }
    (gt, res)
}

/// Differences between the library's metrics and the oracle's; empty when they agree.
pub fn compare_with_oracle(gt: &LabeledFrameSet, res: &LabeledFrameSet) -> Vec<String> {
    use skytrack::metrics::{clear_counts, hota_counts, id_counts, MATCH_IOU};
    let o = metrics_oracle(gt, res);
    let c = clear_counts(gt, res, MATCH_IOU).unwrap();
    let i = id_counts(gt, res, MATCH_IOU).unwrap();
    let h = hota_counts(gt, res).unwrap();
    let hr = h.report();
    let mut diffs = Vec::new();
    let mut exact = |name: &str, a: u64, b: u64| {
        if a != b {
            diffs.push(format!("{name}: library {a}, oracle {b}"));
        }
    };
    exact("num_gt", c.num_gt, o.num_gt);
    exact("FP", c.fp, o.fp);
    exact("FN", c.fn_, o.fn_);
    exact("IDSW", c.idsw, o.idsw);
    exact("IDTP", i.idtp, o.idtp);
    exact("IDFP", i.idfp, o.idfp);
    exact("IDFN", i.idfn, o.idfn);
    for (k, (a, b)) in h.per_alpha.iter().zip(&o.alphas).enumerate() {
        exact(&format!("TP@{k}"), a.tp, b.tp);
        exact(&format!("FN@{k}"), a.fn_, b.fn_);
        exact(&format!("FP@{k}"), a.fp, b.fp);
    }
    let mut close = |name: &str, a: f64, b: f64| {
        if (a - b).abs() > 1e-9 {
            diffs.push(format!("{name}: library {a}, oracle {b}"));
        }
    };
    close("MOTA", c.mota(), o.mota);
    close("IDF1", i.idf1(), o.idf1);
    close("HOTA", hr.hota, o.hota);
    for (k, (a, b)) in hr.per_alpha.iter().zip(&o.alphas).enumerate() {
        close(&format!("DetA@{k}"), a.deta, b.deta);
        close(&format!("AssA@{k}"), a.assa, b.assa);
    }
    diffs
}
