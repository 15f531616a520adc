use std::fmt::Write;

use crate::scorer::ScoreReport;

use super::{PerTextRow, SweepRow};

/// Previously published F1 scores (percent), per dataset, for action names
/// and action arguments. The engine rows were measured with two shots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PublishedScore {
    pub system: &'static str,
    /// WHS, CT, WHG.
    pub names: [f64; 3],
    pub args: [f64; 3],
}

#[rustfmt::skip]
const PUBLISHED: &[PublishedScore] = &[
    PublishedScore { system: "EAD", names: [86.25, 64.74, 53.49], args: [57.71, 51.77, 37.70] },
    PublishedScore { system: "CMLP", names: [83.15, 83.00, 67.36], args: [47.29, 34.14, 32.54] },
    PublishedScore { system: "BLCC", names: [90.16, 80.50, 69.46], args: [93.30, 76.33, 70.32] },
    PublishedScore { system: "STFC", names: [62.66, 67.39, 62.75], args: [38.79, 43.31, 42.75] },
    PublishedScore { system: "EASDRL", names: [93.46, 84.18, 75.40], args: [95.07, 74.80, 75.02] },
    PublishedScore { system: "cEASDRL", names: [97.32, 89.18, 82.59], args: [92.78, 75.81, 76.99] },
    PublishedScore { system: "davinci", names: [86.32, 58.14, 43.36], args: [22.90, 29.63, 22.25] },
    PublishedScore { system: "curie", names: [75.80, 35.57, 22.41], args: [31.75, 22.16, 13.79] },
    PublishedScore { system: "babbage", names: [62.59, 20.62, 14.95], args: [22.91, 12.59, 7.33] },
    PublishedScore { system: "ada", names: [60.68, 14.68, 8.90], args: [17.91, 4.13, 2.27] },
];

pub fn published_scores() -> &'static [PublishedScore] {
    PUBLISHED
}

fn dataset_column(dataset: &str) -> Option<usize> {
    match dataset.to_ascii_uppercase().as_str() {
        "WHS" => Some(0),
        "CT" => Some(1),
        "WHG" => Some(2),
        _ => None,
    }
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

/// Human-readable score table: the run's corpus row, published reference rows
/// for known datasets, and one row per text.
pub fn render_score_table(
    engine: &str,
    dataset: &str,
    shots: usize,
    report: &ScoreReport,
    rows: &[PerTextRow],
) -> String {
    let mut out = String::new();
    let n = &report.name_counts;
    let a = &report.arg_counts;
    let _ = writeln!(out, "Action names / action arguments, percent");
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:<16} {:<8} {:>5} | {:>7} {:>7} {:>7} | {:>7} {:>7} {:>7}",
        "engine", "dataset", "shots", "name P", "name R", "name F1", "arg P", "arg R", "arg F1"
    );
    let _ = writeln!(
        out,
        "{:<16} {:<8} {:>5} | {:>7} {:>7} {:>7} | {:>7} {:>7} {:>7}",
        engine,
        dataset,
        shots,
        pct(report.name_precision),
        pct(report.name_recall),
        pct(report.name_f1),
        pct(report.arg_precision),
        pct(report.arg_recall),
        pct(report.arg_f1),
    );
    let _ = writeln!(
        out,
        "counts: names right={} tagged={} truth={}; args right={} tagged={} truth={}",
        n.total_right, n.total_tagged, n.total_truth, a.total_right, a.total_tagged, a.total_truth
    );

    if let Some(col) = dataset_column(dataset) {
        let _ = writeln!(out);
        let _ = writeln!(out, "Published F1 on {}", dataset.to_ascii_uppercase());
        let _ = writeln!(out, "{:<16} {:>8} {:>8}", "system", "names", "args");
        for p in PUBLISHED {
            let _ = writeln!(
                out,
                "{:<16} {:>8.2} {:>8.2}",
                p.system, p.names[col], p.args[col]
            );
        }
    }

    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:<24} | {:>7} {:>7} {:>7} | {:>7} {:>7} {:>7} | {:>6}",
        "text", "name P", "name R", "name F1", "arg P", "arg R", "arg F1", "tau"
    );
    for row in rows {
        let tau = row
            .order
            .kendall_tau
            .map_or_else(|| "-".to_string(), |t| format!("{t:.3}"));
        let id = if row.failed {
            format!("{} (failed)", row.id)
        } else {
            row.id.clone()
        };
        let _ = writeln!(
            out,
            "{:<24} | {:>7} {:>7} {:>7} | {:>7} {:>7} {:>7} | {:>6}",
            id,
            pct(row.name_precision),
            pct(row.name_recall),
            pct(row.name_f1),
            pct(row.arg_precision),
            pct(row.arg_recall),
            pct(row.arg_f1),
            tau
        );
    }
    out
}

/// Tab-separated sweep table, one row per shot count.
pub fn render_sweep_tsv(rows: &[SweepRow]) -> String {
    let mut out = String::from("shots\tname_f1\targ_f1\tstatus\n");
    for row in rows {
        let f = |x: Option<f64>| x.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"));
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            row.shots,
            f(row.name_f1),
            f(row.arg_f1),
            row.status.as_str()
        );
    }
    out
}
