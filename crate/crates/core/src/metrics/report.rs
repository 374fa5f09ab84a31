use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

/// Scores of one generated caption. `humour` is absent when no classifier
/// was supplied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreItem {
    pub image_id: String,
    pub caption: String,
    pub humour: Option<f64>,
    pub benign: f64,
    pub fluency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    pub summary: bool,
    pub count: usize,
    pub humour: Option<f64>,
    pub benign: Option<f64>,
    pub fluency: Option<f64>,
    /// `None` when fewer than two captions were scored.
    pub diversity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreReport {
    pub items: Vec<ScoreItem>,
    pub diversity: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl ScoreReport {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        for it in &self.items {
            if !in_unit(it.benign) || !in_unit(it.fluency) || it.humour.is_some_and(|h| !in_unit(h))
            {
                return Err(Error::Integrity(format!(
                    "score outside [0, 1] for {:?}",
                    it.image_id
                )));
            }
        }
        if self.diversity.is_some_and(|d| !in_unit(d)) {
            return Err(Error::Integrity("diversity outside [0, 1]".into()));
        }
        Ok(())
    }

    pub fn summary(&self) -> ReportSummary {
        let humour = if self.items.iter().all(|i| i.humour.is_some()) {
            mean(self.items.iter().filter_map(|i| i.humour))
        } else {
            None
        };
        ReportSummary {
            summary: true,
            count: self.items.len(),
            humour,
            benign: mean(self.items.iter().map(|i| i.benign)),
            fluency: mean(self.items.iter().map(|i| i.fluency)),
            diversity: self.diversity,
        }
    }

    /// One JSON object per item, then the summary row.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for it in &self.items {
            out.push_str(&serde_json::to_string(it).expect("item serializes"));
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&self.summary()).expect("summary serializes"));
        out.push('\n');
        out
    }

    pub fn render_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.3}"));
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<16} {:>7} {:>7} {:>7}  caption",
            "image", "humour", "benign", "fluency"
        );
        for it in &self.items {
            let _ = writeln!(
                out,
                "{:<16} {:>7} {:>7.3} {:>7.3}  {}",
                it.image_id,
                fmt(it.humour),
                it.benign,
                it.fluency,
                it.caption
            );
        }
        let s = self.summary();
        let _ = writeln!(
            out,
            "{:<16} {:>7} {:>7} {:>7}  diversity {}",
            "mean",
            fmt(s.humour),
            fmt(s.benign),
            fmt(s.fluency),
            fmt(s.diversity)
        );
        out
    }
}
