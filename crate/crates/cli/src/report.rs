//! Text tables, CSV columns and JSON-lines records for evaluation reports.

use std::fmt::Write as _;

use levelcvae::eval::{BlendTable, EdistReport, MatchReport};
use serde::Serialize;

pub fn match_table(report: &MatchReport, trend: Option<(usize, f64, f64)>) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} conditioning ({} latents, seed {})",
        report.scheme, report.source, report.seed
    );
    let _ = writeln!(s, "{:<8} {:>6} {:>6} {:>8} {:>8}", "label", "freq", "n", "exact%", "none%");
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{:<8} {:>6} {:>6} {:>8.2} {:>8.2}",
            r.label, r.train_freq, r.n, r.exact_pct, r.none_pct
        );
    }
    let _ = writeln!(s, "avg exact%            {:>8.2}", report.avg_exact);
    let _ = writeln!(s, "avg none% (all)       {:>8.2}", report.avg_none);
    let _ = writeln!(s, "avg none% (nonzero)   {:>8.2}", report.avg_none_excluding_zero);
    if let Some((k, top, bottom)) = trend {
        let _ = writeln!(s, "top-{k} exact%          {top:>8.2}");
        let _ = writeln!(s, "bottom-{k} exact%       {bottom:>8.2}");
    }
    s
}

pub fn match_csv(report: &MatchReport) -> String {
    let mut s = String::from("label,label_int,train_freq,n,exact_pct,none_pct\n");
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.label, r.label_int, r.train_freq, r.n, r.exact_pct, r.none_pct
        );
    }
    s
}

pub fn blend_table_text(table: &BlendTable, accuracy: Option<(f64, f64)>) -> String {
    let mut s = String::new();
    if let Some((train, test)) = accuracy {
        let _ = writeln!(s, "classifier accuracy: train {:.4}, held-out {:.4}", train, test);
    }
    let _ = writeln!(s, "{:<6} {:>6} {:>8} {:>8} {:>8}", "label", "n", "SMB%", "KI%", "MM%");
    for r in &table.rows {
        let _ = writeln!(
            s,
            "{:<6} {:>6} {:>8.2} {:>8.2} {:>8.2}",
            r.label, r.n, r.pct[0], r.pct[1], r.pct[2]
        );
    }
    s
}

pub fn blend_csv(table: &BlendTable) -> String {
    let mut s = String::from("label,n,smb,ki,mm,smb_pct,ki_pct,mm_pct\n");
    for r in &table.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.label, r.n, r.counts[0], r.counts[1], r.counts[2], r.pct[0], r.pct[1], r.pct[2]
        );
    }
    s
}

pub fn edist_table_text(report: &EdistReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "E-distance to training data ({} per label, seed {})", report.n_per_label, report.seed);
    let _ = writeln!(s, "{:<8} {:>10} {:>10} {:>10}", "label", "SMB", "KI", "MM");
    for r in &report.rows {
        let d = r.distances;
        let _ = writeln!(s, "{:<8} {:>10.4} {:>10.4} {:>10.4}", r.label, d[0], d[1], d[2]);
    }
    let b = report.baseline;
    let _ = writeln!(s, "{:<8} {:>10.4} {:>10.4} {:>10.4}", "self", b[0], b[1], b[2]);
    s
}

pub fn edist_csv(report: &EdistReport) -> String {
    let mut s = String::from("label,smb,ki,mm\n");
    for r in &report.rows {
        let d = r.distances;
        let _ = writeln!(s, "{},{},{},{}", r.label, d[0], d[1], d[2]);
    }
    s
}

/// One JSON object per line.
pub fn json_lines<T: Serialize>(records: &[T]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serialises") + "\n")
        .collect()
}
