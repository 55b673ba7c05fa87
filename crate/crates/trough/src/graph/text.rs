//! Structured-text graph serialization.
//!
//! The format is line oriented and byte stable: floats print in Rust's
//! shortest round-trip notation, fields are space separated, and the field
//! order is fixed, so serializing the same graph twice yields identical
//! bytes and a golden file can pin the output.
//!
//! ```text
//! trough-graph 1
//! nodes <count>
//! edges <count>
//! node <id> <x> <y> <z> <raw0..raw4> <std0..std4>
//! ...
//! edge <a> <b>
//! ...
//! ```

use std::fmt::Write as _;

use super::{GraphNode, TerrainGraph, FEATURE_COUNT};
use crate::{Error, Result};

const MAGIC: &str = "trough-graph 1";
const FORMAT: &str = "graph text";

/// Serialize a graph. The Laplacian is not stored; it is rebuilt from the
/// edge list on load.
pub fn graph_to_text(graph: &TerrainGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "nodes {}", graph.node_count());
    let _ = writeln!(out, "edges {}", graph.edges().len());
    for (id, node) in graph.nodes().iter().enumerate() {
        let _ = write!(out, "node {id} {} {} {}", node.x, node.y, node.z);
        for v in node.raw.iter().chain(node.standardized.iter()) {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    for (a, b) in graph.edges() {
        let _ = writeln!(out, "edge {a} {b}");
    }
    out
}

/// Parse a serialized graph, validating counts, ids, finiteness, and edge
/// indices. Malformed input of any shape returns an error, never panics.
pub fn graph_from_text(input: &str) -> Result<TerrainGraph> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| Error::parse(FORMAT, "empty input"))?;
    if header.trim_end() != MAGIC {
        return Err(Error::parse(FORMAT, format!("bad header line {header:?}")));
    }
    let node_count = parse_count(lines.next(), "nodes")?;
    let edge_count = parse_count(lines.next(), "edges")?;

    // Counts come from untrusted input; collect incrementally and compare
    // at the end instead of preallocating what the header promises.
    let mut nodes: Vec<GraphNode> = Vec::new();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for line in lines {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_ascii_whitespace();
        match fields.next() {
            Some("node") => {
                if !edges.is_empty() {
                    return Err(Error::parse(FORMAT, "node line after edge lines"));
                }
                let rest: Vec<&str> = fields.collect();
                if rest.len() != 4 + 2 * FEATURE_COUNT {
                    return Err(Error::parse(
                        FORMAT,
                        format!("node line has {} fields, expected {}", rest.len(), 4 + 2 * FEATURE_COUNT),
                    ));
                }
                let id: usize = rest[0]
                    .parse()
                    .map_err(|_| Error::parse(FORMAT, format!("bad node id {:?}", rest[0])))?;
                if id != nodes.len() {
                    return Err(Error::parse(
                        FORMAT,
                        format!("node id {id} out of order, expected {}", nodes.len()),
                    ));
                }
                let nums: Vec<f64> = rest[1..]
                    .iter()
                    .map(|s| parse_finite(s))
                    .collect::<Result<_>>()?;
                let mut raw = [0.0; FEATURE_COUNT];
                let mut standardized = [0.0; FEATURE_COUNT];
                raw.copy_from_slice(&nums[3..3 + FEATURE_COUNT]);
                standardized.copy_from_slice(&nums[3 + FEATURE_COUNT..]);
                nodes.push(GraphNode { x: nums[0], y: nums[1], z: nums[2], raw, standardized });
            }
            Some("edge") => {
                let rest: Vec<&str> = fields.collect();
                if rest.len() != 2 {
                    return Err(Error::parse(
                        FORMAT,
                        format!("edge line has {} fields, expected 2", rest.len()),
                    ));
                }
                let a: usize = rest[0]
                    .parse()
                    .map_err(|_| Error::parse(FORMAT, format!("bad edge index {:?}", rest[0])))?;
                let b: usize = rest[1]
                    .parse()
                    .map_err(|_| Error::parse(FORMAT, format!("bad edge index {:?}", rest[1])))?;
                edges.push((a, b));
            }
            Some(other) => {
                return Err(Error::parse(FORMAT, format!("unknown record {other:?}")));
            }
            None => unreachable!("empty lines are skipped"),
        }
    }

    if nodes.len() != node_count {
        return Err(Error::parse(
            FORMAT,
            format!("header declares {node_count} nodes, found {}", nodes.len()),
        ));
    }
    if edges.len() != edge_count {
        return Err(Error::parse(
            FORMAT,
            format!("header declares {edge_count} edges, found {}", edges.len()),
        ));
    }
    TerrainGraph::from_parts(nodes, edges)
}

fn parse_count(line: Option<&str>, keyword: &str) -> Result<usize> {
    let line = line.ok_or_else(|| Error::parse(FORMAT, format!("missing {keyword} line")))?;
    let mut fields = line.split_ascii_whitespace();
    if fields.next() != Some(keyword) {
        return Err(Error::parse(FORMAT, format!("expected {keyword} line, got {line:?}")));
    }
    let value = fields
        .next()
        .ok_or_else(|| Error::parse(FORMAT, format!("{keyword} line missing its count")))?;
    if fields.next().is_some() {
        return Err(Error::parse(FORMAT, format!("trailing fields on {keyword} line")));
    }
    value
        .parse()
        .map_err(|_| Error::parse(FORMAT, format!("bad {keyword} count {value:?}")))
}

fn parse_finite(s: &str) -> Result<f64> {
    let v: f64 =
        s.parse().map_err(|_| Error::parse(FORMAT, format!("bad numeric field {s:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(FORMAT, format!("non-finite field {s:?}")));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_graph() -> TerrainGraph {
        let nodes = vec![
            GraphNode {
                x: 0.0,
                y: 0.0,
                z: 100.0,
                raw: [0.25, 1.5, 12.0, 0.001, 1.25],
                standardized: [1.0, -1.0, 0.5, 0.0, -0.5],
            },
            GraphNode {
                x: 250.0,
                y: 0.0,
                z: 100.0,
                raw: [0.5, 1.25, 9.0, 0.002, 1.5],
                standardized: [-1.0, 1.0, -0.5, 0.0, 0.5],
            },
            GraphNode {
                x: 125.0,
                y: 200.0,
                z: 200.0,
                raw: [0.375, 1.375, 10.5, 0.0015, 1.375],
                standardized: [0.0, 0.0, 0.0, 0.0, 0.0],
            },
        ];
        TerrainGraph::from_parts(nodes, vec![(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    #[test]
    fn round_trip_preserves_the_graph_bitwise() {
        let graph = sample_graph();
        let text = graph_to_text(&graph);
        let back = graph_from_text(&text).unwrap();
        assert_eq!(graph, back);
        assert_eq!(text, graph_to_text(&back));
    }

    #[test]
    fn serialization_matches_the_golden_bytes() {
        let text = graph_to_text(&sample_graph());
        let golden = "trough-graph 1\n\
                      nodes 3\n\
                      edges 3\n\
                      node 0 0 0 100 0.25 1.5 12 0.001 1.25 1 -1 0.5 0 -0.5\n\
                      node 1 250 0 100 0.5 1.25 9 0.002 1.5 -1 1 -0.5 0 0.5\n\
                      node 2 125 200 200 0.375 1.375 10.5 0.0015 1.375 0 0 0 0 0\n\
                      edge 0 1\n\
                      edge 0 2\n\
                      edge 1 2\n";
        assert_eq!(text, golden);
    }

    #[test]
    fn malformed_inputs_are_rejected_without_panicking() {
        let good = graph_to_text(&sample_graph());
        let cases: Vec<String> = vec![
            String::new(),
            "wrong-magic 1\nnodes 0\nedges 0\n".into(),
            "trough-graph 1\nnodes 3\n".into(),
            "trough-graph 1\nnodes zero\nedges 0\n".into(),
            "trough-graph 1\nnodes 99999999999999999999\nedges 0\n".into(),
            good.replace("nodes 3", "nodes 4"),
            good.replace("edge 0 1", "edge 0 9"),
            good.replace("edge 0 1", "edge 1 1"),
            good.replace("node 1", "node 7"),
            good.replace("node 0 0 0 100", "node 0 0 0 NaN"),
            good.replace("node 0 0 0 100", "node 0 0 0 inf"),
            good.replace("edge 0 1\n", "edge 0 1\nbogus record\n"),
            good.replace("edge 0 1\n", "edge 0 1 5\n"),
            good + "edge 1 2\n",
        ];
        for (i, case) in cases.iter().enumerate() {
            assert!(graph_from_text(case).is_err(), "case {i} should fail");
        }
    }

    #[test]
    fn extra_blank_lines_and_trailing_newlines_are_tolerated() {
        let text = graph_to_text(&sample_graph());
        let padded = text.replace("edge 0 1\n", "edge 0 1\n\n");
        let back = graph_from_text(&padded).unwrap();
        assert_eq!(back, sample_graph());
    }

    #[test]
    fn duplicate_edges_collapse_like_from_parts() {
        let text = "trough-graph 1\nnodes 3\nedges 2\n\
                    node 0 0 0 1 0 0 0 0 0 0 0 0 0 0\n\
                    node 1 5 0 1 0 0 0 0 0 0 0 0 0 0\n\
                    node 2 0 5 1 0 0 0 0 0 0 0 0 0 0\n\
                    edge 0 1\nedge 1 0\n";
        let graph = graph_from_text(text).unwrap();
        assert_eq!(graph.edges(), &[(0, 1)]);
    }
}
