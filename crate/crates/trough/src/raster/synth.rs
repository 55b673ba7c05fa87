//! Deterministic synthetic terrain.
//!
//! Test and benchmark terrain is built from two ingredients: a
//! midpoint-displacement fractal base surface, and analytically carved
//! V-shaped valleys whose center lines wander laterally by a bounded jitter.
//! Everything is a pure function of the spec and the seed, so two calls with
//! identical inputs produce bitwise-identical grids.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DemGrid, DEFAULT_NODATA};

/// One planted valley: a straight center line from `start` to `end` (pixel
/// coordinates), V-shaped cross-section of the given full `width_m`, carved
/// `depth_m` into the base surface. The realized center line deviates
/// laterally from the straight one by at most `jitter_m`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValleySpec {
    pub start: (f64, f64),
    pub end: (f64, f64),
    pub depth_m: f64,
    pub width_m: f64,
    pub jitter_m: f64,
}

/// Parameters of a synthetic tile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub rows: usize,
    pub cols: usize,
    pub cell_size: f64,
    /// Mean elevation of the base surface, meters.
    pub base_elevation: f64,
    /// Half peak-to-peak amplitude of the fractal relief, meters. Zero gives
    /// a perfectly flat base.
    pub roughness_m: f64,
    pub valleys: Vec<ValleySpec>,
    /// Horizontal coordinates of the upper-left corner.
    pub origin: (f64, f64),
}

impl SynthSpec {
    pub fn flat(rows: usize, cols: usize, cell_size: f64) -> Self {
        SynthSpec {
            rows,
            cols,
            cell_size,
            base_elevation: 4500.0,
            roughness_m: 0.0,
            valleys: Vec::new(),
            origin: (0.0, 0.0),
        }
    }
}

/// Generate the tile. Convenience wrapper over [`synth_terrain_tracked`].
pub fn synth_terrain(spec: &SynthSpec, seed: u64) -> DemGrid {
    synth_terrain_tracked(spec, seed).0
}

/// Generate the tile and also report, for each valley, the realized
/// (jittered) center line as pixel-coordinate samples. The track is what
/// ground-truth bookkeeping and the generator's own floor-depth guarantee
/// refer to.
pub fn synth_terrain_tracked(spec: &SynthSpec, seed: u64) -> (DemGrid, Vec<Vec<(f64, f64)>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = fractal_base(spec, &mut rng);

    let mut tracks = Vec::with_capacity(spec.valleys.len());
    for valley in &spec.valleys {
        let track = carve_valley(spec, valley, &mut rng, &mut data);
        tracks.push(track);
    }

    let grid = DemGrid::from_data(
        spec.rows,
        spec.cols,
        spec.cell_size,
        spec.origin,
        DEFAULT_NODATA,
        data,
    )
    .expect("spec dimensions validated by construction");
    (grid, tracks)
}

/// Midpoint displacement on the smallest (2^k + 1)-sided square covering the
/// requested dimensions, cropped to `rows` x `cols`.
fn fractal_base(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let need = spec.rows.max(spec.cols);
    let mut k = 0usize;
    while (1usize << k) + 1 < need {
        k += 1;
    }
    let side = (1usize << k) + 1;
    let amp = spec.roughness_m;

    let mut field = vec![0.0f64; side * side];
    let idx = |r: usize, c: usize| r * side + c;
    let draw = |rng: &mut ChaCha8Rng, scale: f64| rng.random_range(-1.0..=1.0) * scale;

    field[idx(0, 0)] = draw(rng, amp);
    field[idx(0, side - 1)] = draw(rng, amp);
    field[idx(side - 1, 0)] = draw(rng, amp);
    field[idx(side - 1, side - 1)] = draw(rng, amp);

    let mut step = side - 1;
    let mut scale = amp;
    while step > 1 {
        let half = step / 2;
        // Diamond step: center of each square.
        for r in (half..side).step_by(step) {
            for c in (half..side).step_by(step) {
                let mean = (field[idx(r - half, c - half)]
                    + field[idx(r - half, c + half)]
                    + field[idx(r + half, c - half)]
                    + field[idx(r + half, c + half)])
                    / 4.0;
                field[idx(r, c)] = mean + draw(rng, scale);
            }
        }
        // Square step: edge midpoints, averaging the in-bounds neighbors.
        for r in (0..side).step_by(half) {
            let start = if (r / half) % 2 == 0 { half } else { 0 };
            for c in (start..side).step_by(step) {
                let mut sum = 0.0;
                let mut n = 0.0;
                if r >= half {
                    sum += field[idx(r - half, c)];
                    n += 1.0;
                }
                if r + half < side {
                    sum += field[idx(r + half, c)];
                    n += 1.0;
                }
                if c >= half {
                    sum += field[idx(r, c - half)];
                    n += 1.0;
                }
                if c + half < side {
                    sum += field[idx(r, c + half)];
                    n += 1.0;
                }
                field[idx(r, c)] = sum / n + draw(rng, scale);
            }
        }
        step = half;
        scale *= 0.5;
    }

    let mut out = Vec::with_capacity(spec.rows * spec.cols);
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            out.push(spec.base_elevation + field[idx(r, c)]);
        }
    }
    out
}

/// Carve one valley into `data`, returning the realized center line.
fn carve_valley(
    spec: &SynthSpec,
    valley: &ValleySpec,
    rng: &mut ChaCha8Rng,
    data: &mut [f64],
) -> Vec<(f64, f64)> {
    let (r0, c0) = valley.start;
    let (r1, c1) = valley.end;
    let len_px = ((r1 - r0).powi(2) + (c1 - c0).powi(2)).sqrt();
    let width_px = valley.width_m / spec.cell_size;
    let jitter_px = valley.jitter_m / spec.cell_size;

    // Lateral wander: two seeded sinusoids whose amplitudes sum to the
    // jitter bound, so |offset| never exceeds it.
    let a1: f64 = rng.random_range(0.4..0.8);
    let f1: f64 = rng.random_range(0.8..2.0);
    let f2: f64 = rng.random_range(2.5..5.0);
    let p1: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let p2: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let offset = |t: f64| {
        jitter_px
            * (a1 * (std::f64::consts::TAU * f1 * t + p1).sin()
                + (1.0 - a1) * (std::f64::consts::TAU * f2 * t + p2).sin())
    };

    // Unit direction and left-hand normal of the nominal line.
    let (dr, dc) = if len_px > 0.0 {
        ((r1 - r0) / len_px, (c1 - c0) / len_px)
    } else {
        (0.0, 1.0)
    };
    let (nr, nc) = (-dc, dr);

    let n_samples = (len_px * 2.0).ceil().max(1.0) as usize;
    let mut track = Vec::with_capacity(n_samples + 1);
    let half = width_px / 2.0;
    let reach = half.ceil() as isize;
    let slope = 2.0 * valley.depth_m / width_px;

    let mut relief = vec![0.0f64; data.len()];
    for s in 0..=n_samples {
        let t = s as f64 / n_samples as f64;
        let o = offset(t);
        let qr = r0 + dr * t * len_px + nr * o;
        let qc = c0 + dc * t * len_px + nc * o;
        track.push((qr, qc));

        let rc = qr.round() as isize;
        let cc = qc.round() as isize;
        for pr in (rc - reach).max(0)..=(rc + reach).min(spec.rows as isize - 1) {
            for pc in (cc - reach).max(0)..=(cc + reach).min(spec.cols as isize - 1) {
                let d = ((pr as f64 - qr).powi(2) + (pc as f64 - qc).powi(2)).sqrt();
                let cut = valley.depth_m - slope * d;
                if cut > 0.0 {
                    let cell = &mut relief[pr as usize * spec.cols + pc as usize];
                    if cut > *cell {
                        *cell = cut;
                    }
                }
            }
        }
    }
    for (z, cut) in data.iter_mut().zip(relief) {
        *z -= cut;
    }
    track
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v_spec() -> SynthSpec {
        SynthSpec {
            rows: 64,
            cols: 64,
            cell_size: 30.0,
            base_elevation: 4000.0,
            roughness_m: 0.0,
            valleys: vec![ValleySpec {
                start: (32.0, 4.0),
                end: (32.0, 59.0),
                depth_m: 300.0,
                width_m: 600.0,
                jitter_m: 0.0,
            }],
            origin: (0.0, 0.0),
        }
    }

    #[test]
    fn identical_spec_and_seed_reproduce_bitwise() {
        let mut spec = v_spec();
        spec.roughness_m = 25.0;
        spec.valleys[0].jitter_m = 50.0;
        let a = synth_terrain(&spec, 42);
        let b = synth_terrain(&spec, 42);
        assert_eq!(a.data(), b.data());
        let c = synth_terrain(&spec, 43);
        assert_ne!(a.data(), c.data(), "different seeds must differ");
    }

    #[test]
    fn straight_valley_on_flat_base_has_exact_v_sections() {
        let spec = v_spec();
        let g = synth_terrain(&spec, 7);
        // width 600 m = 20 px, so slope is depth / half_width = 30 m per px.
        for col in [20, 32, 44] {
            assert_eq!(g.get(32, col), 4000.0 - 300.0, "floor at center line");
            let expect = |dist: f64| 4000.0 - (300.0 - 30.0 * dist).max(0.0);
            for off in 1..=12usize {
                let want = expect(off as f64);
                let up = g.get(32 - off, col);
                let dn = g.get(32 + off, col);
                assert!((up - want).abs() < 1e-9, "row -{off}: {up} vs {want}");
                assert!((dn - want).abs() < 1e-9, "row +{off}: {dn} vs {want}");
            }
        }
        assert_eq!(g.get(2, 32), 4000.0, "terrain beyond the rim is untouched");
    }

    #[test]
    fn floor_sits_at_least_depth_minus_jitter_below_local_base_mean() {
        let mut spec = v_spec();
        spec.rows = 128;
        spec.cols = 128;
        spec.roughness_m = 12.0;
        spec.valleys[0] = ValleySpec {
            start: (64.0, 8.0),
            end: (64.0, 119.0),
            depth_m: 400.0,
            width_m: 2000.0,
            jitter_m: 60.0,
        };
        let mut base_spec = spec.clone();
        base_spec.valleys.clear();
        let base = synth_terrain(&base_spec, 99);
        let (carved, tracks) = synth_terrain_tracked(&spec, 99);

        // 1 km window at 30 m cells.
        let half = 16isize;
        let mut ok = 0usize;
        let mut total = 0usize;
        for &(qr, qc) in &tracks[0] {
            let (r, c) = (qr.round() as isize, qc.round() as isize);
            if r - half < 0 || c - half < 0 || r + half >= 128 || c + half >= 128 {
                continue;
            }
            total += 1;
            let mut sum = 0.0;
            for wr in (r - half)..=(r + half) {
                for wc in (c - half)..=(c + half) {
                    sum += base.get(wr as usize, wc as usize);
                }
            }
            let mean = sum / ((2 * half + 1) * (2 * half + 1)) as f64;
            let z = carved.sample_bilinear(qr, qc).unwrap();
            if mean - z >= spec.valleys[0].depth_m - spec.valleys[0].jitter_m {
                ok += 1;
            }
        }
        assert!(total > 50, "track should cross the interior");
        assert!(
            ok as f64 >= 0.9 * total as f64,
            "floor-depth guarantee held at {ok}/{total} samples"
        );
    }

    #[test]
    fn zero_roughness_base_is_flat() {
        let spec = SynthSpec::flat(33, 47, 30.0);
        let g = synth_terrain(&spec, 1);
        assert!(g.data().iter().all(|&z| z == 4500.0));
    }
}
