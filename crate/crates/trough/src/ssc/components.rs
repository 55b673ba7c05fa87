//! 8-connected component labeling.

use super::BinaryMask;
use crate::raster::BoundingBox;

/// One connected set of mask pixels, row-major sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelComponent {
    pixels: Vec<(usize, usize)>,
}

impl PixelComponent {
    pub fn from_pixels(mut pixels: Vec<(usize, usize)>) -> Self {
        pixels.sort_unstable();
        PixelComponent { pixels }
    }

    pub fn pixels(&self) -> &[(usize, usize)] {
        &self.pixels
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Tight bounding box of the pixel set.
    pub fn bounding_box(&self) -> BoundingBox {
        let mut b = BoundingBox::new(usize::MAX, 0, usize::MAX, 0);
        for &(r, c) in &self.pixels {
            b.row_min = b.row_min.min(r);
            b.row_max = b.row_max.max(r);
            b.col_min = b.col_min.min(c);
            b.col_max = b.col_max.max(c);
        }
        b
    }
}

/// Split set pixels into 8-connected components. Components are ordered by
/// their smallest (row, col) pixel and each component's pixel list is
/// row-major sorted, so the output is deterministic.
pub fn connected_components(mask: &BinaryMask) -> Vec<PixelComponent> {
    let mut seen = BinaryMask::new(mask.rows(), mask.cols());
    let mut out = Vec::new();
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for r in 0..mask.rows() {
        for c in 0..mask.cols() {
            if !mask.get(r, c) || seen.get(r, c) {
                continue;
            }
            let mut pixels = Vec::new();
            seen.set(r, c, true);
            stack.push((r, c));
            while let Some((pr, pc)) = stack.pop() {
                pixels.push((pr, pc));
                for dr in -1isize..=1 {
                    for dc in -1isize..=1 {
                        if dr == 0 && dc == 0 {
                            continue;
                        }
                        let (nr, nc) = (pr as isize + dr, pc as isize + dc);
                        if mask.get_signed(nr, nc) && !seen.get(nr as usize, nc as usize) {
                            seen.set(nr as usize, nc as usize, true);
                            stack.push((nr as usize, nc as usize));
                        }
                    }
                }
            }
            out.push(PixelComponent::from_pixels(pixels));
        }
    }
    // Scan order already discovers components by smallest (row, col); keep
    // the invariant explicit.
    debug_assert!(out.windows(2).all(|w| w[0].pixels[0] < w[1].pixels[0]));
    out
}
