use std::cmp::Ordering;

use super::{round4, MetricSet};

pub const LEADERBOARD_CSV_HEADER: &str = "model,preprocessing,ba,f1,precision,recall";

#[derive(Debug, Clone, PartialEq)]
pub struct LeaderboardRow {
    pub model: String,
    pub preprocessing: String,
    pub metrics: MetricSet,
}

impl LeaderboardRow {
    fn cells(&self) -> [String; 6] {
        let m = &self.metrics;
        [
            self.model.clone(),
            self.preprocessing.clone(),
            round4(m.balanced_accuracy),
            round4(m.f1),
            round4(m.precision),
            round4(m.recall),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Leaderboard {
    pub rows: Vec<LeaderboardRow>,
}

fn rank(a: &LeaderboardRow, b: &LeaderboardRow) -> Ordering {
    b.metrics
        .balanced_accuracy
        .total_cmp(&a.metrics.balanced_accuracy)
        .then(b.metrics.f1.total_cmp(&a.metrics.f1))
        .then_with(|| a.model.cmp(&b.model))
}

/// Sorts by balanced accuracy descending, then F1 descending, then model
/// name. The sort is stable, so rows equal on all three keep input order.
pub fn leaderboard(entries: Vec<LeaderboardRow>) -> Leaderboard {
    let mut rows = entries;
    rows.sort_by(rank);
    Leaderboard { rows }
}

const HEADINGS: [&str; 6] = ["model", "preprocessing", "ba", "f1", "precision", "recall"];

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl Leaderboard {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{LEADERBOARD_CSV_HEADER}\n");
        for r in &self.rows {
            let cells: Vec<String> = r.cells().iter().map(|c| csv_field(c)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!("| {} |\n", HEADINGS.join(" | "));
        out.push_str("|---|---|---:|---:|---:|---:|\n");
        for r in &self.rows {
            let cells: Vec<String> = r.cells().iter().map(|c| c.replace('|', "\\|")).collect();
            out.push_str(&format!("| {} |\n", cells.join(" | ")));
        }
        out
    }

    /// Space-aligned table; text columns left-aligned, numbers right-aligned.
    pub fn to_text(&self) -> String {
        let table: Vec<[String; 6]> = std::iter::once(HEADINGS.map(String::from))
            .chain(self.rows.iter().map(LeaderboardRow::cells))
            .collect();
        let widths: Vec<usize> = (0..6)
            .map(|c| table.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &table {
            let line: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(c, s)| if c < 2 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(model: &str, ba: f64, f1: f64) -> LeaderboardRow {
        LeaderboardRow {
            model: model.into(),
            preprocessing: "raw".into(),
            metrics: MetricSet {
                accuracy: ba,
                balanced_accuracy: ba,
                precision: 0.5,
                recall: 0.5,
                specificity: 0.5,
                f1,
                degenerate: vec![],
            },
        }
    }

    fn names(lb: &Leaderboard) -> Vec<&str> {
        lb.rows.iter().map(|r| r.model.as_str()).collect()
    }

    #[test]
    fn ba_ordering_of_known_rows() {
        let lb = leaderboard(vec![row("XLM1", 0.8713, 0.8786), row("XLM2", 0.8835, 0.8821), row("SVC", 0.8757, 0.8763)]);
        assert_eq!(names(&lb), ["XLM2", "SVC", "XLM1"]);
    }

    #[test]
    fn ties_use_f1_then_name() {
        let lb = leaderboard(vec![row("b", 0.8, 0.6), row("a", 0.8, 0.6), row("c", 0.8, 0.7)]);
        assert_eq!(names(&lb), ["c", "a", "b"]);
        let single = leaderboard(vec![row("x", 0.1, 0.1)]);
        assert_eq!(names(&single), ["x"]);
    }

    #[test]
    fn renderings() {
        let lb = leaderboard(vec![row("SVC", 0.87568, 0.8763), row("LR", 0.8393, 0.8416)]);
        let csv = lb.to_csv();
        assert_eq!(csv.lines().next().unwrap(), LEADERBOARD_CSV_HEADER);
        assert_eq!(csv.lines().nth(1).unwrap(), "SVC,raw,0.8757,0.8763,0.5000,0.5000");
        let md = lb.to_markdown();
        assert_eq!(md.lines().count(), 4);
        assert!(md.contains("| LR | raw | 0.8393 |"));
        let text = lb.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("model  preprocessing"));
        assert_eq!(lines[1].len(), lines[2].len());
    }
}
