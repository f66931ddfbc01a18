//! Manual evaluation of negation translations: per-pair category labels
//! and their aggregation into count/percentage summaries.

use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::{round1, Cell, Table};

/// Judgment categories for how a system translated a negation.
/// `Correct` and `Rephrased` both count as preserved negation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManualCategory {
    Correct,
    Rephrased,
    Reordered,
    Incorrect,
    Dropped,
}

impl ManualCategory {
    pub const ALL: [ManualCategory; 5] = [
        ManualCategory::Correct,
        ManualCategory::Rephrased,
        ManualCategory::Reordered,
        ManualCategory::Incorrect,
        ManualCategory::Dropped,
    ];
}

impl fmt::Display for ManualCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ManualCategory::Correct => "correct",
            ManualCategory::Rephrased => "rephrased",
            ManualCategory::Reordered => "reordered",
            ManualCategory::Incorrect => "incorrect",
            ManualCategory::Dropped => "dropped",
        };
        f.write_str(s)
    }
}

impl FromStr for ManualCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "correct" => Ok(ManualCategory::Correct),
            "rephrased" => Ok(ManualCategory::Rephrased),
            "reordered" => Ok(ManualCategory::Reordered),
            "incorrect" => Ok(ManualCategory::Incorrect),
            "dropped" => Ok(ManualCategory::Dropped),
            other => Err(Error::invalid_input(format!(
                "unknown manual category {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManualLabel {
    pub pair_id: String,
    pub category: ManualCategory,
}

/// Reads `pair_id,category` CSV (with that header) into labels.
pub fn read_manual_labels<R: Read>(reader: R) -> Result<Vec<ManualLabel>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    {
        let headers = rdr.headers().map_err(csv_error)?;
        let got: Vec<&str> = headers.iter().collect();
        if got != ["pair_id", "category"] {
            return Err(Error::parse(
                1,
                format!("expected header pair_id,category, got {}", got.join(",")),
            ));
        }
    }
    let mut labels = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let line = i + 2;
        if record.len() != 2 {
            return Err(Error::parse(line, format!("expected 2 fields, got {}", record.len())));
        }
        let category: ManualCategory = record[1]
            .parse()
            .map_err(|e| Error::parse(line, format!("{e}")))?;
        labels.push(ManualLabel { pair_id: record[0].to_string(), category });
    }
    Ok(labels)
}

fn csv_error(e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => {
            if let csv::ErrorKind::Io(io) = e.into_kind() {
                Error::Io(io)
            } else {
                unreachable!()
            }
        }
        _ => Error::parse(e.position().map_or(0, |p| p.line() as usize), e.to_string()),
    }
}

/// Aggregated manual-evaluation outcome. Percentages derive from counts on
/// demand; nothing is cached, so the struct cannot go stale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManualSummary {
    pub counts: [usize; 5],
    pub total: usize,
}

impl ManualSummary {
    pub fn count(&self, cat: ManualCategory) -> usize {
        self.counts[cat as usize]
    }

    /// Share of `cat` in percent.
    pub fn percentage(&self, cat: ManualCategory) -> f64 {
        self.count(cat) as f64 * 100.0 / self.total as f64
    }

    /// Correct plus rephrased, in percent: both preserve the negation.
    pub fn accuracy_percent(&self) -> f64 {
        let kept = self.count(ManualCategory::Correct) + self.count(ManualCategory::Rephrased);
        kept as f64 * 100.0 / self.total as f64
    }

    pub fn to_table(&self, name: &str) -> Table {
        let mut table = Table::new(
            name,
            ["category", "count", "percent"],
        );
        for cat in ManualCategory::ALL {
            table.push_row(vec![
                Cell::from(cat.to_string()),
                Cell::from(self.count(cat) as i64),
                Cell::from(round1(self.percentage(cat))),
            ]);
        }
        table.push_row(vec![
            Cell::from("accuracy"),
            Cell::from(
                (self.count(ManualCategory::Correct) + self.count(ManualCategory::Rephrased))
                    as i64,
            ),
            Cell::from(round1(self.accuracy_percent())),
        ]);
        table
    }
}

/// Tallies labels into a summary. Requires at least one label and exactly
/// one label per pair.
pub fn aggregate_manual(labels: &[ManualLabel]) -> Result<ManualSummary> {
    if labels.is_empty() {
        return Err(Error::invalid_input("no manual labels to aggregate"));
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut counts = [0usize; 5];
    for label in labels {
        if !seen.insert(label.pair_id.as_str()) {
            return Err(Error::validation(format!(
                "duplicate manual label for pair {:?}",
                label.pair_id
            )));
        }
        counts[label.category as usize] += 1;
    }
    Ok(ManualSummary { counts, total: labels.len() })
}
