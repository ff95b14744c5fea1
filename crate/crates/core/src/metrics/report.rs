use std::fmt::Write;

use serde_json::{json, Value};

use super::MetricsReport;

/// One row of a results table: a sequence, or the combined row.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub name: String,
    pub report: MetricsReport,
    pub fps: Option<f64>,
}

/// Aligned plain-text table in percent scale: HOTA, MOTA, IDF1, IDs, FPS.
pub fn format_table(rows: &[ReportRow]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(8);
    let with_fps = rows.iter().any(|r| r.fps.is_some());
    let mut out = String::new();
    let _ = write!(
        out,
        "{:<width$}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}",
        "Sequence", "HOTA(%)", "DetA(%)", "AssA(%)", "MOTA(%)", "IDF1(%)", "IDs", "FP", "FN"
    );
    if with_fps {
        let _ = write!(out, "  {:>8}", "FPS");
    }
    out.push('\n');
    for r in rows {
        let m = &r.report;
        let _ = write!(
            out,
            "{:<width$}  {:>8.2}  {:>8.2}  {:>8.2}  {:>8.2}  {:>8.2}  {:>8}  {:>8}  {:>8}",
            r.name,
            100.0 * m.hota.hota,
            100.0 * m.hota.deta,
            100.0 * m.hota.assa,
            100.0 * m.clear.mota,
            100.0 * m.identity.idf1,
            m.clear.idsw,
            m.clear.fp,
            m.clear.fn_,
        );
        if with_fps {
            match r.fps {
                Some(fps) => {
                    let _ = write!(out, "  {fps:>8.1}");
                }
                None => {
                    let _ = write!(out, "  {:>8}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}

/// Per-threshold HOTA breakdown of one report, percent scale.
pub fn format_alpha_table(name: &str, report: &MetricsReport) -> String {
    let mut out = format!("{name}: HOTA per localization threshold (%)\n");
    let _ = writeln!(out, "{:>6}  {:>8}  {:>8}  {:>8}  {:>8}", "alpha", "HOTA", "DetA", "AssA", "LocA");
    for a in &report.hota.per_alpha {
        let _ = writeln!(
            out,
            "{:>6.2}  {:>8.2}  {:>8.2}  {:>8.2}  {:>8.2}",
            a.alpha,
            100.0 * a.hota,
            100.0 * a.deta,
            100.0 * a.assa,
            100.0 * a.loca
        );
    }
    out
}

/// Machine-readable document with unit-interval ratios.
pub fn machine_report(rows: &[ReportRow], include_alpha: bool) -> Value {
    let rows: Vec<Value> = rows
        .iter()
        .map(|r| {
            let m = &r.report;
            let mut v = json!({
                "name": r.name,
                "HOTA": m.hota.hota,
                "DetA": m.hota.deta,
                "AssA": m.hota.assa,
                "LocA": m.hota.loca,
                "MOTA": m.clear.mota,
                "IDF1": m.identity.idf1,
                "IDs": m.clear.idsw,
                "FP": m.clear.fp,
                "FN": m.clear.fn_,
                "num_gt": m.clear.num_gt,
                "IDTP": m.identity.idtp,
                "IDFP": m.identity.idfp,
                "IDFN": m.identity.idfn,
                "FPS": r.fps,
                "classes_collapsed": m.classes_collapsed(),
            });
            if include_alpha {
                v["per_alpha"] = serde_json::to_value(&m.hota.per_alpha).unwrap_or(Value::Null);
            }
            v
        })
        .collect();
    json!({ "scale": "unit-interval", "rows": rows })
}
