//! Labeled pair datasets from CSV files.

use std::path::Path;

use crate::net::LabeledPair;
use crate::{Error, Result};

const FORMAT: &str = "pair csv";

/// A parsed pair file plus its label balance.
#[derive(Debug, Clone)]
pub struct PairDataset {
    pub pairs: Vec<LabeledPair>,
    pub positives: usize,
    pub negatives: usize,
}

impl PairDataset {
    /// Human-readable label balance, e.g. `154 positive, 151 negative`.
    pub fn balance(&self) -> String {
        format!("{} positive, {} negative", self.positives, self.negatives)
    }
}

/// Load `graph_a,graph_b,label` rows, checking every graph index against
/// the corpus size.
///
/// The header line is required verbatim. Labels must be exactly `0` or
/// `1`; anything else errors with the offending row number (the header is
/// row 1). Blank lines are ignored.
pub fn load_pair_dataset(path: &Path, graph_count: usize) -> Result<PairDataset> {
    let text = std::fs::read_to_string(path)?;
    parse_pair_dataset(&text, graph_count)
}

/// The parsing behind [`load_pair_dataset`], separated for tests and
/// fuzzing.
pub fn parse_pair_dataset(text: &str, graph_count: usize) -> Result<PairDataset> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, line)) if line.trim().is_empty() => continue,
            Some((_, line)) => break line,
            None => return Err(Error::parse(FORMAT, "file is empty")),
        }
    };
    let normalized: String = header.split(',').map(str::trim).collect::<Vec<_>>().join(",");
    if normalized != "graph_a,graph_b,label" {
        return Err(Error::parse(
            FORMAT,
            format!("header must be \"graph_a,graph_b,label\", got \"{header}\""),
        ));
    }

    let mut pairs = Vec::new();
    let mut positives = 0usize;
    let mut negatives = 0usize;
    for (idx, line) in lines {
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                FORMAT,
                format!("row {row}: expected 3 fields, got {}", fields.len()),
            ));
        }
        let a = parse_index(fields[0], row, "graph_a")?;
        let b = parse_index(fields[1], row, "graph_b")?;
        for (name, value) in [("graph_a", a), ("graph_b", b)] {
            if value >= graph_count {
                return Err(Error::parse(
                    FORMAT,
                    format!(
                        "row {row}: {name} {value} refers past the {graph_count} loaded graphs"
                    ),
                ));
            }
        }
        let label = match fields[2] {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::parse(
                    FORMAT,
                    format!("row {row}: label must be 0 or 1, got \"{other}\""),
                ))
            }
        };
        if label {
            positives += 1;
        } else {
            negatives += 1;
        }
        pairs.push(LabeledPair::new(a, b, label));
    }
    if pairs.is_empty() {
        return Err(Error::parse(FORMAT, "no data rows after the header"));
    }
    Ok(PairDataset { pairs, positives, negatives })
}

fn parse_index(field: &str, row: usize, name: &str) -> Result<usize> {
    field.parse().map_err(|_| {
        Error::parse(
            FORMAT,
            format!("row {row}: {name} has non-numeric value \"{field}\""),
        )
    })
}
