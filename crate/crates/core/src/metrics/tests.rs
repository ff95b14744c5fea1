use super::*;
use crate::geometry::BBox;

fn boxed(id: u32, l: f64) -> LabeledBox {
    LabeledBox {
        id,
        bbox: BBox::new(l, 0.0, 10.0, 10.0),
        class_id: Some(1),
    }
}

fn set(source: Source, rows: &[(u64, u32, f64)]) -> LabeledFrameSet {
    let mut s = LabeledFrameSet::new(source);
    for &(f, id, l) in rows {
        s.push(f, boxed(id, l));
    }
    s
}

/// One object over frames 1-4; the tracker switches from id 10 to id 20 at frame 3.
fn one_switch() -> (LabeledFrameSet, LabeledFrameSet) {
    let gt = set(Source::GroundTruth, &[(1, 1, 0.0), (2, 1, 0.0), (3, 1, 0.0), (4, 1, 0.0)]);
    let res = set(Source::Result, &[(1, 10, 0.0), (2, 10, 0.0), (3, 20, 0.0), (4, 20, 0.0)]);
    (gt, res)
}

fn perfect() -> LabeledFrameSet {
    set(
        Source::GroundTruth,
        &[(1, 1, 0.0), (1, 2, 50.0), (2, 1, 2.0), (2, 2, 48.0), (3, 2, 46.0)],
    )
}

#[test]
fn perfect_tracker_scores_one() {
    let gt = perfect();
    let mut res = gt.clone();
    res.source = Source::Result;
    let c = evaluate_clear(&gt, &res, MATCH_IOU).unwrap();
    assert_eq!((c.mota, c.fp, c.fn_, c.idsw), (1.0, 0, 0, 0));
    assert_eq!(evaluate_idf1(&gt, &res).unwrap().idf1, 1.0);
    let h = evaluate_hota(&gt, &res).unwrap();
    assert_eq!((h.hota, h.deta, h.assa, h.loca), (1.0, 1.0, 1.0, 1.0));
}

#[test]
fn one_switch_fixture() {
    let (gt, res) = one_switch();
    let c = evaluate_clear(&gt, &res, MATCH_IOU).unwrap();
    assert_eq!(c.idsw, 1);
    assert_eq!(c.mota, 0.75);
    let id = evaluate_idf1(&gt, &res).unwrap();
    assert_eq!((id.idtp, id.idfp, id.idfn), (2, 2, 2));
    assert_eq!(id.idf1, 0.5);
    let h = evaluate_hota(&gt, &res).unwrap();
    for a in &h.per_alpha {
        assert_eq!(a.deta, 1.0);
        assert_eq!(a.assa, 0.5);
        assert_eq!(a.hota, 0.5f64.sqrt());
    }
    assert!((h.hota - 0.5f64.sqrt()).abs() < 1e-12);
}

#[test]
fn empty_result_scores_zero() {
    let gt = perfect();
    let res = LabeledFrameSet::new(Source::Result);
    let c = evaluate_clear(&gt, &res, MATCH_IOU).unwrap();
    assert_eq!(c.mota, 0.0);
    assert_eq!(c.fn_, c.num_gt);
    assert_eq!(evaluate_idf1(&gt, &res).unwrap().idf1, 0.0);
    assert_eq!(evaluate_hota(&gt, &res).unwrap().hota, 0.0);
}

#[test]
fn mota_goes_negative_with_many_false_positives() {
    let gt = set(Source::GroundTruth, &[(1, 1, 0.0)]);
    let res = set(Source::Result, &[(1, 5, 100.0), (1, 6, 200.0), (1, 7, 300.0)]);
    let c = evaluate_clear(&gt, &res, MATCH_IOU).unwrap();
    assert_eq!((c.fp, c.fn_), (3, 1));
    assert_eq!(c.mota, -3.0);
}

#[test]
fn continuity_keeps_previous_pairing() {
    // Two results both overlap the object at frame 2; the previous pairing wins
    // even though the other box is a better fit.
    let gt = set(Source::GroundTruth, &[(1, 1, 0.0), (2, 1, 0.0)]);
    let res = set(Source::Result, &[(1, 10, 2.0), (2, 10, 2.0), (2, 20, 0.0)]);
    let c = evaluate_clear(&gt, &res, MATCH_IOU).unwrap();
    assert_eq!((c.idsw, c.fp), (0, 1));
}

#[test]
fn switch_counted_against_last_match_across_gaps() {
    let gt = set(Source::GroundTruth, &[(1, 1, 0.0), (2, 1, 0.0), (3, 1, 0.0)]);
    let res = set(Source::Result, &[(1, 10, 0.0), (3, 20, 0.0)]);
    let c = evaluate_clear(&gt, &res, MATCH_IOU).unwrap();
    assert_eq!((c.idsw, c.fn_), (1, 1));
}

#[test]
fn duplicate_identity_is_rejected() {
    let gt = set(Source::GroundTruth, &[(1, 1, 0.0), (1, 1, 30.0)]);
    let res = LabeledFrameSet::new(Source::Result);
    assert_eq!(
        evaluate_clear(&gt, &res, MATCH_IOU),
        Err(MetricsError::IdentityCollision {
            side: Source::GroundTruth,
            frame: 1,
            id: 1
        })
    );
}

#[test]
fn frames_outside_gt_range_are_false_positives() {
    let gt = set(Source::GroundTruth, &[(1, 1, 0.0)]);
    let res = set(Source::Result, &[(1, 10, 0.0), (9, 10, 0.0)]);
    assert_eq!(evaluate_clear(&gt, &res, MATCH_IOU).unwrap().fp, 1);
}

#[test]
fn aggregate_semantics() {
    let (gt, res) = one_switch();
    let single = evaluate(&gt, &res, EvalOptions::default()).unwrap();
    assert_eq!(aggregate([&single]).unwrap(), single);

    let doubled = aggregate([&single, &single]).unwrap();
    let (a, b) = (single.report(), doubled.report());
    assert_eq!(a.clear.mota, b.clear.mota);
    assert_eq!(b.clear.num_gt, 2 * a.clear.num_gt);
    assert_eq!(a.identity.idf1, b.identity.idf1);
    assert!((a.hota.hota - b.hota.hota).abs() < 1e-12);

    // 10 perfectly tracked objects plus 10 entirely missed ones.
    let mut gt10 = LabeledFrameSet::new(Source::GroundTruth);
    for i in 0..10 {
        gt10.push(1, boxed(i + 1, 20.0 * i as f64));
    }
    let mut res10 = gt10.clone();
    res10.source = Source::Result;
    let good = evaluate(&gt10, &res10, EvalOptions::default()).unwrap();
    let bad = evaluate(&gt10, &LabeledFrameSet::new(Source::Result), EvalOptions::default()).unwrap();
    assert_eq!(good.report().clear.mota, 1.0);
    assert_eq!(bad.report().clear.mota, 0.0);
    assert_eq!(aggregate([&good, &bad]).unwrap().report().clear.mota, 0.5);

    assert_eq!(aggregate(std::iter::empty()), Err(MetricsError::EmptyAggregate));
}

#[test]
fn per_class_macro_average() {
    let mut gt = LabeledFrameSet::new(Source::GroundTruth);
    let mut res = LabeledFrameSet::new(Source::Result);
    // Class 1 tracked perfectly, class 2 missed.
    gt.push(1, boxed(1, 0.0));
    res.push(1, boxed(1, 0.0));
    gt.push(1, LabeledBox { class_id: Some(2), ..boxed(2, 50.0) });
    gt.push(1, LabeledBox { class_id: Some(2), ..boxed(3, 80.0) });
    let counts = evaluate(&gt, &res, EvalOptions::default()).unwrap();
    let report = counts.report();
    assert_eq!(report.classes.len(), 2);
    assert_eq!(report.clear.mota, 0.5);
    assert_eq!(report.clear.fn_, 2);

    let collapsed = evaluate(&gt, &res, EvalOptions { collapse_classes: true }).unwrap().report();
    assert!(collapsed.classes_collapsed());
    assert!((collapsed.clear.mota - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn unlabeled_results_collapse_classes() {
    let gt = perfect();
    let mut res = gt.clone();
    res.source = Source::Result;
    let mut unlabeled = LabeledFrameSet::new(Source::Result);
    for (f, boxes) in res.frames() {
        for b in boxes {
            unlabeled.push(f, LabeledBox { class_id: None, ..*b });
        }
    }
    let report = evaluate(&gt, &unlabeled, EvalOptions::default()).unwrap().report();
    assert!(report.classes_collapsed());
    assert_eq!(report.clear.mota, 1.0);
}

#[test]
fn report_formats() {
    let (gt, res) = one_switch();
    let report = evaluate(&gt, &res, EvalOptions::default()).unwrap().report();
    let rows = vec![ReportRow {
        name: "switch".into(),
        report: report.clone(),
        fps: None,
    }];
    let table = format_table(&rows);
    assert!(table.contains("HOTA(%)"));
    assert!(table.contains("70.71"));
    assert!(table.contains("75.00"));
    assert!(table.contains("50.00"));
    let doc = machine_report(&rows, true);
    assert_eq!(doc["rows"][0]["IDs"], 1);
    assert_eq!(doc["rows"][0]["MOTA"], 0.75);
    assert_eq!(doc["rows"][0]["per_alpha"].as_array().unwrap().len(), NUM_ALPHAS);
    assert!(format_alpha_table("switch", &report).contains("0.95"));
}

#[test]
fn alphas_are_the_nineteen_thresholds() {
    let a = alphas();
    assert_eq!(a.len(), 19);
    assert_eq!(a[0], 0.05);
    assert_eq!(a[18], 0.95);
}
