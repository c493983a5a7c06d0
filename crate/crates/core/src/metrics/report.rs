//! Report emission: aligned-text tables shaped like the benchmark tables
//! (rows: room x RT60 x metric; columns: Rev./DSM/dIRM/iFilt), a CSV of the
//! aggregate cells, and machine-readable JSON lines per utterance.

use std::fmt::Write as _;

use super::{MetricReport, Scenario};

pub const METHOD_ORDER: [&str; 4] = ["rev", "dsm", "dirm", "ifilt"];

fn method_column(method: &str) -> &'static str {
    match method {
        "rev" => "Rev.",
        "dsm" => "DSM",
        "dirm" => "dIRM",
        "ifilt" => "iFilt",
        _ => "?",
    }
}

/// Aligned-text table, one block per scenario.
pub fn render_table(report: &MetricReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# SDR column is scale-invariant SDR (SI-SDR); full BSS-Eval SDR is \
         replaced by the scale-invariant variant for the single-reference \
         dereverberation setting."
    );
    let _ = writeln!(
        out,
        "# SRMR is not computed (needs an external auditory modulation \
         filterbank standard); the column is left blank."
    );
    let _ = writeln!(out, "# Reference signal: the early reverberant y^E.");

    for scenario in [Scenario::Static, Scenario::TimeVarying] {
        let cells: Vec<_> = report
            .cells
            .iter()
            .filter(|c| c.scenario == scenario)
            .collect();
        if cells.is_empty() {
            continue;
        }
        let _ = writeln!(out, "\n== {} RIRs ==", scenario.label());
        let _ = writeln!(
            out,
            "{:<10} {:>6}  {:<7} {:>8} {:>8} {:>8} {:>8}",
            "Room", "RT60", "Eval.", "Rev.", "DSM", "dIRM", "iFilt"
        );

        let mut conditions: Vec<(String, u32)> = cells
            .iter()
            .map(|c| (c.room.clone(), c.rt60_ms))
            .collect();
        conditions.sort();
        conditions.dedup();

        for (room, rt60) in conditions {
            for metric in ["SI-SDR", "ESTOI", "SRMR"] {
                let mut row = format!("{room:<10} {rt60:>6}  {metric:<7}");
                for method in METHOD_ORDER {
                    let cell = cells.iter().find(|c| {
                        c.room == room && c.rt60_ms == rt60 && c.method == method
                    });
                    let text = match (cell, metric) {
                        (_, "SRMR") => format!("{:>8}", "-"),
                        (Some(c), "SI-SDR") => format!("{:8.2}", c.mean_si_sdr_db),
                        (Some(c), "ESTOI") => format!("{:8.2}", c.mean_estoi),
                        _ => format!("{:>8}", "n/a"),
                    };
                    row.push_str(&text);
                    let _ = method_column(method);
                }
                let _ = writeln!(out, "{row}");
            }
        }
    }
    out
}

/// CSV of the aggregate cells.
pub fn render_csv(report: &MetricReport) -> String {
    let mut out = String::from("scenario,room,rt60_ms,method,mean_si_sdr_db,mean_estoi,utterances\n");
    for c in &report.cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6},{:.6},{}",
            c.scenario.label(),
            c.room,
            c.rt60_ms,
            c.method,
            c.mean_si_sdr_db,
            c.mean_estoi,
            c.count
        );
    }
    out
}

/// JSON lines, one object per scored utterance.
pub fn render_jsonl(report: &MetricReport) -> String {
    let mut out = String::new();
    for s in &report.per_utterance {
        let _ = writeln!(
            out,
            "{{\"utterance\":\"{}\",\"method\":\"{}\",\"room\":\"{}\",\"rt60_ms\":{},\
             \"scenario\":\"{}\",\"si_sdr_db\":{:.6},\"estoi\":{:.6}}}",
            s.utterance,
            s.method,
            s.room,
            s.rt60_ms,
            s.scenario.label(),
            s.si_sdr_db,
            s.estoi
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{aggregate, UtteranceScore};

    fn sample_scores() -> Vec<UtteranceScore> {
        let mut out = Vec::new();
        for method in METHOD_ORDER {
            for scenario in [Scenario::Static, Scenario::TimeVarying] {
                out.push(UtteranceScore {
                    utterance: "utt0".into(),
                    method: method.into(),
                    room: "room1".into(),
                    rt60_ms: 500,
                    scenario,
                    si_sdr_db: 1.25,
                    estoi: 0.5,
                });
            }
        }
        out
    }

    #[test]
    fn table_contains_all_columns_and_footnotes() {
        let report = aggregate(&sample_scores()).unwrap();
        let t = render_table(&report);
        for col in ["Rev.", "DSM", "dIRM", "iFilt"] {
            assert!(t.contains(col), "missing column {col}");
        }
        assert!(t.contains("SRMR"));
        assert!(t.contains("scale-invariant"));
        assert!(t.contains("static RIRs"));
        assert!(t.contains("time-varying RIRs"));
    }

    #[test]
    fn time_varying_block_only_when_present() {
        let scores: Vec<_> = sample_scores()
            .into_iter()
            .filter(|s| s.scenario == Scenario::Static)
            .collect();
        let report = aggregate(&scores).unwrap();
        let t = render_table(&report);
        assert!(!t.contains("time-varying RIRs"));
    }

    #[test]
    fn csv_and_jsonl_shapes() {
        let report = aggregate(&sample_scores()).unwrap();
        let csv = render_csv(&report);
        assert_eq!(csv.lines().count(), 1 + 8); // header + 4 methods x 2 scenarios
        let jsonl = render_jsonl(&report);
        assert_eq!(jsonl.lines().count(), 8);
        assert!(jsonl.lines().all(|l| l.starts_with('{') && l.ends_with('}')));
    }
}
