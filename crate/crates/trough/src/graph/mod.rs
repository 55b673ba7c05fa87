//! Terrain-to-graph conversion.
//!
//! A raster becomes a graph in three steps: contour polylines are traced at
//! a fixed interval, nodes are sampled along them every few hundred meters,
//! and Delaunay triangulation of the node positions supplies the edges.
//! Each node then carries five geomorphometric features (ruggedness, area
//! ratio, mean slope, contour density, direction entropy), standardized per
//! graph, and the normalized Laplacian `L = I - D^{-1/2} A D^{-1/2}` is
//! assembled for downstream convolution.

mod contour;
mod delaunay;
mod features;
mod text;

pub use contour::{extract_contours, sample_nodes, ContourLine, ContourNode, ContourSet};
pub use delaunay::delaunay;
pub use features::{acr, contour_density, direction_entropy, slope_between, vrm};
pub use text::{graph_from_text, graph_to_text};

use serde::{Deserialize, Serialize};

use crate::raster::{BoundingBox, DemGrid};
use crate::{Error, Result};

/// Number of per-node features.
pub const FEATURE_COUNT: usize = 5;

/// Graph construction parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    /// Contour level spacing, meters.
    pub contour_interval_m: f64,
    /// Arc-length spacing of nodes along contours, meters.
    pub node_spacing_m: f64,
    /// Disk radius for contour density and direction entropy, meters.
    pub search_radius_m: f64,
    /// Azimuth bin count for direction entropy.
    pub direction_bins: usize,
    /// Ruggedness window side length, cells (odd).
    pub vrm_window: usize,
    /// Area-ratio patch side length, cells.
    pub acr_patch: usize,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            contour_interval_m: 100.0,
            node_spacing_m: 250.0,
            search_radius_m: 500.0,
            direction_bins: 36,
            vrm_window: 3,
            acr_patch: 5,
        }
    }
}

/// One graph node: position, elevation, and its feature vectors before and
/// after per-graph standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphNode {
    /// Local meters, `x = col * cell_size`.
    pub x: f64,
    /// Local meters, `y = row * cell_size`.
    pub y: f64,
    /// Contour level the node was sampled from, meters.
    pub z: f64,
    /// Raw features: [ruggedness, area ratio, slope, density, entropy].
    pub raw: [f64; FEATURE_COUNT],
    /// The same features standardized to zero mean, unit variance within
    /// this graph; constant channels become all zeros.
    pub standardized: [f64; FEATURE_COUNT],
}

/// Immutable graph of one terrain.
#[derive(Debug, Clone, PartialEq)]
pub struct TerrainGraph {
    nodes: Vec<GraphNode>,
    edges: Vec<(usize, usize)>,
    laplacian: Vec<f64>,
}

impl TerrainGraph {
    /// Assemble a graph from nodes and undirected edges, validating both
    /// and building the normalized Laplacian. Edges are deduplicated and
    /// stored as `(low, high)` pairs in sorted order.
    pub fn from_parts(nodes: Vec<GraphNode>, edges: Vec<(usize, usize)>) -> Result<Self> {
        let n = nodes.len();
        if n < 3 {
            return Err(Error::Degenerate(format!("graph needs at least 3 nodes, got {n}")));
        }
        for (i, node) in nodes.iter().enumerate() {
            let mut values = vec![node.x, node.y, node.z];
            values.extend_from_slice(&node.raw);
            values.extend_from_slice(&node.standardized);
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!("node {i} has a non-finite value")));
            }
        }
        let mut normalized = Vec::with_capacity(edges.len());
        for &(a, b) in &edges {
            if a == b {
                return Err(Error::InvalidParameter(format!("self loop on node {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::OutOfBounds(format!(
                    "edge ({a}, {b}) exceeds node count {n}"
                )));
            }
            normalized.push((a.min(b), a.max(b)));
        }
        normalized.sort_unstable();
        normalized.dedup();

        let laplacian = build_laplacian(n, &normalized);
        Ok(TerrainGraph { nodes, edges: normalized, laplacian })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Row-major n x n normalized Laplacian.
    pub fn laplacian(&self) -> &[f64] {
        &self.laplacian
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.nodes.len()];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    /// Row-major dense 0/1 adjacency, zero diagonal.
    pub fn adjacency_matrix(&self) -> Vec<f64> {
        let n = self.nodes.len();
        let mut a = vec![0.0; n * n];
        for &(i, j) in &self.edges {
            a[i * n + j] = 1.0;
            a[j * n + i] = 1.0;
        }
        a
    }

    /// Standardized features as a row-major n x 5 matrix, the network input.
    pub fn feature_matrix(&self) -> Vec<f64> {
        let mut m = Vec::with_capacity(self.nodes.len() * FEATURE_COUNT);
        for node in &self.nodes {
            m.extend_from_slice(&node.standardized);
        }
        m
    }
}

/// `L = I - D^{-1/2} A D^{-1/2}` with the off-diagonal computed as
/// `-1/sqrt(d_i * d_j)`. Isolated nodes keep a plain unit diagonal.
fn build_laplacian(n: usize, edges: &[(usize, usize)]) -> Vec<f64> {
    let mut degree = vec![0u64; n];
    for &(a, b) in edges {
        degree[a] += 1;
        degree[b] += 1;
    }
    let mut lap = vec![0.0; n * n];
    for i in 0..n {
        lap[i * n + i] = 1.0;
    }
    for &(i, j) in edges {
        let w = 1.0 / ((degree[i] * degree[j]) as f64).sqrt();
        lap[i * n + j] = -w;
        lap[j * n + i] = -w;
    }
    lap
}

/// Build the full graph for one terrain raster.
///
/// Feature errors propagate: a node whose neighborhood leaves the grid or
/// touches nodata fails the whole build rather than silently degrading.
/// Ruggedness and area-ratio windows are recentered to the nearest raster
/// cell at which they fit.
pub fn build_graph(grid: &DemGrid, config: &GraphConfig) -> Result<TerrainGraph> {
    if config.acr_patch < 2 {
        return Err(Error::InvalidParameter(format!(
            "acr patch side {} must be at least 2 cells",
            config.acr_patch
        )));
    }
    let contours = extract_contours(grid, config.contour_interval_m)?;
    let sampled = sample_nodes(&contours, config.node_spacing_m)?;

    let mut seen = std::collections::HashSet::new();
    let mut positions: Vec<ContourNode> = Vec::with_capacity(sampled.len());
    for node in sampled {
        if seen.insert((node.x.to_bits(), node.y.to_bits())) {
            positions.push(node);
        }
    }
    if positions.len() < 3 {
        return Err(Error::Degenerate(format!(
            "terrain yields {} contour nodes, need at least 3",
            positions.len()
        )));
    }

    let xy: Vec<(f64, f64)> = positions.iter().map(|n| (n.x, n.y)).collect();
    let edges = delaunay(&xy)?;
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); positions.len()];
    for &(a, b) in &edges {
        incident[a].push(b);
        incident[b].push(a);
    }

    let cell = grid.cell_size();
    let vrm_reach = config.vrm_window / 2 + 1;
    if grid.rows() < 2 * vrm_reach + 1 || grid.cols() < 2 * vrm_reach + 1 {
        return Err(Error::Degenerate(format!(
            "{}x{} grid too small for ruggedness window {}",
            grid.rows(),
            grid.cols(),
            config.vrm_window
        )));
    }
    if grid.rows() < config.acr_patch || grid.cols() < config.acr_patch {
        return Err(Error::Degenerate(format!(
            "{}x{} grid too small for area-ratio patch {}",
            grid.rows(),
            grid.cols(),
            config.acr_patch
        )));
    }

    let mut raw = Vec::with_capacity(positions.len());
    for (i, node) in positions.iter().enumerate() {
        let row = (node.y / cell).round().max(0.0) as usize;
        let col = (node.x / cell).round().max(0.0) as usize;

        let vrm_row = row.clamp(vrm_reach, grid.rows() - 1 - vrm_reach);
        let vrm_col = col.clamp(vrm_reach, grid.cols() - 1 - vrm_reach);
        let ruggedness = vrm(grid, (vrm_row, vrm_col), config.vrm_window)?;

        let half = config.acr_patch / 2;
        let row_min = row.saturating_sub(half).min(grid.rows() - config.acr_patch);
        let col_min = col.saturating_sub(half).min(grid.cols() - config.acr_patch);
        let patch = BoundingBox::new(
            row_min,
            row_min + config.acr_patch - 1,
            col_min,
            col_min + config.acr_patch - 1,
        );
        let area_ratio = acr(grid, &patch)?;

        let slope = if incident[i].is_empty() {
            0.0
        } else {
            let mut sum = 0.0;
            for &j in &incident[i] {
                let other = &positions[j];
                sum += slope_between((node.x, node.y, node.z), (other.x, other.y, other.z))?;
            }
            sum / incident[i].len() as f64
        };

        let density = contour_density((node.x, node.y), &contours, config.search_radius_m)?;
        let entropy = direction_entropy(
            (node.x, node.y),
            &contours,
            config.search_radius_m,
            config.direction_bins,
        )?;
        raw.push([ruggedness, area_ratio, slope, density, entropy]);
    }

    let standardized = standardize(&raw);
    let nodes: Vec<GraphNode> = positions
        .iter()
        .zip(raw.iter().zip(standardized.iter()))
        .map(|(p, (r, s))| GraphNode { x: p.x, y: p.y, z: p.z, raw: *r, standardized: *s })
        .collect();
    TerrainGraph::from_parts(nodes, edges)
}

/// Zero-mean, unit-variance scaling per channel with population variance.
/// A channel whose spread is negligible relative to its magnitude maps to
/// all zeros instead of amplifying rounding noise.
fn standardize(raw: &[[f64; FEATURE_COUNT]]) -> Vec<[f64; FEATURE_COUNT]> {
    let n = raw.len() as f64;
    let mut out = vec![[0.0; FEATURE_COUNT]; raw.len()];
    for ch in 0..FEATURE_COUNT {
        let mean = raw.iter().map(|r| r[ch]).sum::<f64>() / n;
        let var = raw.iter().map(|r| (r[ch] - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if std > 1e-12 * mean.abs().max(1.0) {
            for (o, r) in out.iter_mut().zip(raw) {
                o[ch] = (r[ch] - mean) / std;
            }
        }
    }
    out
}
