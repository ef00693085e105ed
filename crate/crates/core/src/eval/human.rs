//! Metrics for human validation of a mined dataset.
//!
//! Evaluators look at each `(query, target)` sample with its mined regions
//! highlighted and count regions that are highlighted and similar,
//! similar but missed, and highlighted but not similar.
//!
//! Count files are CSV with the header
//! `split,highlighted_and_similar,similar_not_highlighted,highlighted_not_similar,nonexact_correct,complex_samples,samples`;
//! one row per split, or several rows per split (they are summed).

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HumanStudyError {
    #[error("invalid count table: {0}")]
    InvalidTable(String),
    #[error("no rows to aggregate")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HumanSplitCounts {
    pub highlighted_and_similar: u64,
    pub similar_not_highlighted: u64,
    pub highlighted_not_similar: u64,
    /// Correct highlights that are not exact copies of the query.
    pub nonexact_correct: u64,
    /// Samples flagged as complex patterns.
    pub complex_samples: u64,
    pub samples: u64,
}

impl HumanSplitCounts {
    pub fn validate(&self) -> Result<(), HumanStudyError> {
        if self.nonexact_correct > self.highlighted_and_similar {
            return Err(HumanStudyError::InvalidTable(
                "nonexact_correct exceeds highlighted_and_similar".into(),
            ));
        }
        if self.complex_samples > self.samples {
            return Err(HumanStudyError::InvalidTable("complex_samples exceeds samples".into()));
        }
        Ok(())
    }
}

impl std::ops::Add for HumanSplitCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            highlighted_and_similar: self.highlighted_and_similar + o.highlighted_and_similar,
            similar_not_highlighted: self.similar_not_highlighted + o.similar_not_highlighted,
            highlighted_not_similar: self.highlighted_not_similar + o.highlighted_not_similar,
            nonexact_correct: self.nonexact_correct + o.nonexact_correct,
            complex_samples: self.complex_samples + o.complex_samples,
            samples: self.samples + o.samples,
        }
    }
}

/// One split's metrics in percent. `None` marks an undefined value (zero
/// denominator), which is distinct from 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HumanMetrics {
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
    pub pct_complex: Option<f64>,
    pub pct_nonexact: Option<f64>,
}

fn pct(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64 * 100.0)
}

pub fn human_split_metrics(c: &HumanSplitCounts) -> HumanMetrics {
    let hs = c.highlighted_and_similar;
    let precision = pct(hs, hs + c.highlighted_not_similar);
    let recall = pct(hs, hs + c.similar_not_highlighted);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    HumanMetrics {
        recall,
        precision,
        f1,
        pct_complex: pct(c.complex_samples, c.samples),
        pct_nonexact: pct(c.nonexact_correct, hs),
    }
}

/// Unweighted column means over splits. A column is undefined in the
/// average when it is undefined in any split.
pub fn human_study_aggregate(rows: &[HumanMetrics]) -> Result<HumanMetrics, HumanStudyError> {
    if rows.is_empty() {
        return Err(HumanStudyError::Empty);
    }
    let mean = |f: fn(&HumanMetrics) -> Option<f64>| -> Option<f64> {
        let vals: Option<Vec<f64>> = rows.iter().map(f).collect();
        vals.map(|v| v.iter().sum::<f64>() / v.len() as f64)
    };
    Ok(HumanMetrics {
        recall: mean(|r| r.recall),
        precision: mean(|r| r.precision),
        f1: mean(|r| r.f1),
        pct_complex: mean(|r| r.pct_complex),
        pct_nonexact: mean(|r| r.pct_nonexact),
    })
}

/// Round to two decimals for reporting.
pub fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

#[derive(Deserialize)]
struct CountRow {
    split: String,
    highlighted_and_similar: u64,
    similar_not_highlighted: u64,
    highlighted_not_similar: u64,
    nonexact_correct: u64,
    complex_samples: u64,
    samples: u64,
}

impl CountRow {
    fn counts(&self) -> HumanSplitCounts {
        HumanSplitCounts {
            highlighted_and_similar: self.highlighted_and_similar,
            similar_not_highlighted: self.similar_not_highlighted,
            highlighted_not_similar: self.highlighted_not_similar,
            nonexact_correct: self.nonexact_correct,
            complex_samples: self.complex_samples,
            samples: self.samples,
        }
    }
}

/// Read a count table, summing rows per split. Splits keep first-seen order.
pub fn read_count_table<R: Read>(reader: R) -> Result<Vec<(String, HumanSplitCounts)>, HumanStudyError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut order: Vec<String> = Vec::new();
    let mut totals: BTreeMap<String, HumanSplitCounts> = BTreeMap::new();
    for (i, row) in rdr.deserialize::<CountRow>().enumerate() {
        let row = row.map_err(|e| HumanStudyError::InvalidTable(format!("row {}: {e}", i + 1)))?;
        let entry = totals.entry(row.split.clone()).or_insert_with(|| {
            order.push(row.split.clone());
            HumanSplitCounts::default()
        });
        *entry = *entry + row.counts();
    }
    let out: Vec<_> = order
        .into_iter()
        .map(|s| {
            let c = totals[&s];
            (s, c)
        })
        .collect();
    for (s, c) in &out {
        c.validate()
            .map_err(|e| HumanStudyError::InvalidTable(format!("split {s}: {e}")))?;
    }
    Ok(out)
}
