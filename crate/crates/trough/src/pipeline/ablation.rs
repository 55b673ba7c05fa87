//! Channel ablation: retrain with a descriptor zeroed to measure what it
//! contributes.

use crate::graph::{TerrainGraph, FEATURE_COUNT};
use crate::net::{kfold_evaluate, CvReport, LabeledPair, NetDims, TrainConfig};
use crate::{Error, Result};

/// Descriptor names in channel order: ruggedness, area ratio, slope,
/// contour density, direction entropy.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = ["VRM", "ACR", "Slope", "CD", "DSE"];

/// Map a descriptor name to its feature channel.
pub fn feature_channel(name: &str) -> Result<usize> {
    FEATURE_NAMES
        .iter()
        .position(|&n| n == name)
        .ok_or_else(|| {
            Error::InvalidParameter(format!(
                "unknown feature \"{name}\"; expected one of {}",
                FEATURE_NAMES.join(", ")
            ))
        })
}

/// Copy graphs with the standardized values of the given channels set to
/// zero. Topology, node positions, and raw measurements stay untouched,
/// so the network sees the same graphs minus those signals and the input
/// width stays at five.
pub fn zero_feature_channels(
    graphs: &[TerrainGraph],
    channels: &[usize],
) -> Result<Vec<TerrainGraph>> {
    for &c in channels {
        if c >= FEATURE_COUNT {
            return Err(Error::InvalidParameter(format!(
                "feature channel {c} exceeds the {FEATURE_COUNT} descriptors"
            )));
        }
    }
    graphs
        .iter()
        .map(|g| {
            let mut nodes = g.nodes().to_vec();
            for node in &mut nodes {
                for &c in channels {
                    node.standardized[c] = 0.0;
                }
            }
            TerrainGraph::from_parts(nodes, g.edges().to_vec())
        })
        .collect()
}

/// One line of an ablation table.
#[derive(Debug, Clone)]
pub struct AblationRow {
    /// `None` for the full-feature baseline.
    pub dropped: Option<String>,
    pub report: CvReport,
}

/// Cross-validate the full model, then once more per named descriptor
/// with that channel zeroed and the model retrained from scratch.
///
/// The first row is always the full-feature baseline; an empty drop list
/// produces just that row. Unknown names fail before any training runs.
pub fn ablation_run(
    pairs: &[LabeledPair],
    graphs: &[TerrainGraph],
    dims: &NetDims,
    cfg: &TrainConfig,
    drops: &[String],
) -> Result<Vec<AblationRow>> {
    let channels: Vec<usize> = drops
        .iter()
        .map(|name| feature_channel(name))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(1 + drops.len());
    rows.push(AblationRow {
        dropped: None,
        report: kfold_evaluate(pairs, graphs, dims, cfg)?,
    });
    for (name, &channel) in drops.iter().zip(&channels) {
        let ablated = zero_feature_channels(graphs, &[channel])?;
        rows.push(AblationRow {
            dropped: Some(name.clone()),
            report: kfold_evaluate(pairs, &ablated, dims, cfg)?,
        });
    }
    Ok(rows)
}
