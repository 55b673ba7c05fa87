//! Delaunay edges over sampled contour nodes.
//!
//! Triangulation is delegated to the `delaunator` crate; this wrapper turns
//! half-edges into a sorted undirected edge list and adds the documented
//! fallback for all-collinear inputs, which triangulation cannot represent:
//! consecutive points along the line are chained into a path.

use delaunator::{triangulate, Point, EMPTY};

use crate::{Error, Result};

/// Undirected Delaunay edges as index pairs `(i, j)` with `i < j`, sorted.
/// Elevation plays no part; only the 2D positions triangulate.
pub fn delaunay(points: &[(f64, f64)]) -> Result<Vec<(usize, usize)>> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!(
            "triangulation needs at least 3 nodes, got {}",
            points.len()
        )));
    }
    let input: Vec<Point> = points.iter().map(|&(x, y)| Point { x, y }).collect();
    let tri = triangulate(&input);
    if tri.triangles.is_empty() {
        return Ok(collinear_chain(points));
    }

    let mut edges = Vec::with_capacity(tri.triangles.len());
    for e in 0..tri.triangles.len() {
        // Emit each half-edge pair once; hull edges have no twin.
        if tri.halfedges[e] == EMPTY || e < tri.halfedges[e] {
            let next = if e % 3 == 2 { e - 2 } else { e + 1 };
            let (a, b) = (tri.triangles[e], tri.triangles[next]);
            edges.push((a.min(b), a.max(b)));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    Ok(edges)
}

/// Path graph over points sorted along their common line. Lexicographic
/// (x, then y) order is monotone along any line, so neighbors in the sort
/// are neighbors on the line.
fn collinear_chain(points: &[(f64, f64)]) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a].0.total_cmp(&points[b].0).then(points[a].1.total_cmp(&points[b].1))
    });
    let mut edges: Vec<(usize, usize)> = order
        .windows(2)
        .map(|w| (w[0].min(w[1]), w[0].max(w[1])))
        .collect();
    edges.sort_unstable();
    edges.dedup();
    edges
}
