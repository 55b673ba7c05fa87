//! Confusion-matrix metrics and score distributions for run reports.

use serde::{Deserialize, Serialize};

use crate::net::ClassMetrics;
use crate::{Error, Result};

/// Outcome counts of a binary classification pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    /// False negatives; the underscore dodges the keyword.
    pub fn_: u64,
    pub tn: u64,
}

/// Accuracy, precision, recall, and F1 from raw counts.
///
/// Ratios whose denominator is zero are 0 by convention; a confusion
/// matrix with no observations at all is an error.
pub fn metrics(c: &ConfusionCounts) -> Result<ClassMetrics> {
    ClassMetrics::from_counts(c.tp, c.fp, c.fn_, c.tn)
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1_from_precision_recall(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Binned score distribution with its summary statistics.
///
/// Bins are left-closed over `[0, 1]`: bin `k` covers
/// `[k*width, (k+1)*width)`, except the last bin which also includes 1.0.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_width: f64,
    pub counts: Vec<u64>,
    /// `None` when no scores were binned.
    pub mean: Option<f64>,
    /// Median of the sorted scores, averaging the middle two for even
    /// counts; `None` when empty.
    pub median: Option<f64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// CSV rendering: `bin_start,bin_end,count` per bin, then the summary
    /// statistics as comment lines (`undefined` when empty).
    pub fn to_csv(&self) -> String {
        let mut text = String::from("bin_start,bin_end,count\n");
        for (k, count) in self.counts.iter().enumerate() {
            let lo = k as f64 * self.bin_width;
            let hi = (k + 1) as f64 * self.bin_width;
            text.push_str(&format!("{lo},{hi},{count}\n"));
        }
        match (self.mean, self.median) {
            (Some(mean), Some(median)) => {
                text.push_str(&format!("# mean {mean}\n# median {median}\n"));
            }
            _ => text.push_str("# mean undefined\n# median undefined\n"),
        }
        text
    }

    /// Static vector-graphics rendering: one bar per bin over a score axis,
    /// the count axis labeled with the peak count, the mean marked with a
    /// dashed line. An empty histogram renders a placeholder note instead
    /// of bars.
    pub fn to_svg(&self) -> String {
        const W: f64 = 640.0;
        const H: f64 = 360.0;
        const LEFT: f64 = 50.0;
        const RIGHT: f64 = 20.0;
        const TOP: f64 = 20.0;
        const BOTTOM: f64 = 40.0;
        let plot_w = W - LEFT - RIGHT;
        let plot_h = H - TOP - BOTTOM;

        let mut svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
viewBox=\"0 0 {W} {H}\">\n\
<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
        );
        let axis_y = TOP + plot_h;
        svg.push_str(&format!(
            "<line x1=\"{LEFT}\" y1=\"{axis_y}\" x2=\"{}\" y2=\"{axis_y}\" stroke=\"black\"/>\n\
<line x1=\"{LEFT}\" y1=\"{TOP}\" x2=\"{LEFT}\" y2=\"{axis_y}\" stroke=\"black\"/>\n",
            LEFT + plot_w
        ));

        let peak = self.counts.iter().copied().max().unwrap_or(0);
        if peak == 0 {
            svg.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" \
font-family=\"sans-serif\" font-size=\"14\">no scores</text>\n",
                LEFT + plot_w / 2.0,
                TOP + plot_h / 2.0
            ));
        } else {
            let span = self.counts.len() as f64 * self.bin_width;
            let bar_w = plot_w / self.counts.len() as f64;
            for (k, &count) in self.counts.iter().enumerate() {
                let h = plot_h * count as f64 / peak as f64;
                svg.push_str(&format!(
                    "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" \
fill=\"#4878a8\" stroke=\"white\" stroke-width=\"0.5\"/>\n",
                    LEFT + k as f64 * bar_w,
                    axis_y - h,
                    bar_w,
                    h
                ));
            }
            if let Some(mean) = self.mean {
                let x = LEFT + plot_w * (mean / span).clamp(0.0, 1.0);
                svg.push_str(&format!(
                    "<line x1=\"{x:.2}\" y1=\"{TOP}\" x2=\"{x:.2}\" y2=\"{axis_y}\" \
stroke=\"#c04040\" stroke-dasharray=\"4 3\"/>\n"
                ));
            }
            svg.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" \
font-family=\"sans-serif\" font-size=\"12\">{peak}</text>\n",
                LEFT - 5.0,
                TOP + 5.0
            ));
            for frac in [0.0, 0.5, 1.0] {
                svg.push_str(&format!(
                    "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" \
font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
                    LEFT + plot_w * frac,
                    axis_y + 18.0,
                    span * frac
                ));
            }
        }
        svg.push_str("</svg>\n");
        svg
    }
}

/// Bin similarity scores into a [`Histogram`].
///
/// Scores must lie in `[0, 1]` and the width must be positive and finite.
/// An empty score list produces all-zero bins with undefined statistics.
pub fn similarity_histogram(scores: &[f64], bin_width: f64) -> Result<Histogram> {
    if !bin_width.is_finite() || bin_width <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "bin width must be positive and finite, got {bin_width}"
        )));
    }
    let bins = (1.0 / bin_width).ceil().max(1.0) as usize;
    let mut counts = vec![0u64; bins];
    for &s in scores {
        if !s.is_finite() || !(0.0..=1.0).contains(&s) {
            return Err(Error::InvalidParameter(format!(
                "score {s} lies outside [0, 1]"
            )));
        }
        let k = ((s / bin_width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    if scores.is_empty() {
        return Ok(Histogram { bin_width, counts, mean: None, median: None });
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    Ok(Histogram { bin_width, counts, mean: Some(mean), median: Some(median) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn worked_example_from_small_counts() {
        let m = metrics(&ConfusionCounts { tp: 3, fp: 1, fn_: 1, tn: 5 }).unwrap();
        assert_eq!(m.accuracy, 0.8);
        assert_eq!(m.precision, 0.75);
        assert_eq!(m.recall, 0.75);
        assert_eq!(m.f1, 0.75);
    }

    #[test]
    fn zero_denominators_fall_back_to_zero() {
        let m = metrics(&ConfusionCounts { tp: 0, fp: 0, fn_: 2, tn: 3 }).unwrap();
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.f1, 0.0);
    }

    #[test]
    fn all_zero_counts_are_rejected() {
        assert!(metrics(&ConfusionCounts { tp: 0, fp: 0, fn_: 0, tn: 0 }).is_err());
    }

    #[test]
    fn published_scale_precision_recall_give_the_published_f1() {
        // Counts chosen so tp/(tp+fp) = 0.7665 exactly and tp/(tp+fn)
        // lands within rounding of 0.9805.
        let c = ConfusionCounts { tp: 7665, fp: 2335, fn_: 152, tn: 1000 };
        let m = metrics(&c).unwrap();
        assert!((m.precision - 0.7665).abs() < 5e-4, "precision {}", m.precision);
        assert!((m.recall - 0.9805).abs() < 5e-4, "recall {}", m.recall);
        assert!((m.f1 - 0.8604).abs() < 0.005, "f1 {}", m.f1);
    }

    #[test]
    fn f1_matches_the_harmonic_identity_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let c = ConfusionCounts {
                tp: rng.random_range(0..40),
                fp: rng.random_range(0..40),
                fn_: rng.random_range(0..40),
                tn: rng.random_range(1..40),
            };
            let m = metrics(&c).unwrap();
            let expected = f1_from_precision_recall(m.precision, m.recall);
            assert!((m.f1 - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn histogram_worked_example() {
        let h = similarity_histogram(&[0.05, 0.05, 0.95], 0.1).unwrap();
        assert_eq!(h.counts.len(), 10);
        assert_eq!(h.counts[0], 2);
        assert_eq!(h.counts[9], 1);
        assert_eq!(h.counts[1..9].iter().sum::<u64>(), 0);
        assert_eq!(h.mean, Some((0.05 + 0.05 + 0.95) / 3.0));
        assert_eq!(h.median, Some(0.05));
    }

    #[test]
    fn histogram_statistics_keep_full_precision() {
        let h = similarity_histogram(&[0.1, 0.2, 0.4, 0.8], 0.5).unwrap();
        assert_eq!(h.counts, vec![3, 1]);
        assert_eq!(h.mean, Some(0.375));
        assert_eq!(h.median, Some(0.30000000000000004));
    }

    #[test]
    fn empty_scores_flag_their_statistics_undefined() {
        let h = similarity_histogram(&[], 0.1).unwrap();
        assert_eq!(h.total(), 0);
        assert_eq!(h.counts, vec![0; 10]);
        assert_eq!(h.mean, None);
        assert_eq!(h.median, None);
        assert!(h.to_csv().contains("# mean undefined"));
    }

    #[test]
    fn scores_at_the_upper_edge_land_in_the_last_bin() {
        let h = similarity_histogram(&[1.0, 0.999, 0.0], 0.1).unwrap();
        assert_eq!(h.counts[9], 2);
        assert_eq!(h.counts[0], 1);
    }

    #[test]
    fn out_of_range_inputs_are_rejected() {
        assert!(similarity_histogram(&[0.5, 1.2], 0.1).is_err());
        assert!(similarity_histogram(&[-0.1], 0.1).is_err());
        assert!(similarity_histogram(&[f64::NAN], 0.1).is_err());
        assert!(similarity_histogram(&[0.5], 0.0).is_err());
        assert!(similarity_histogram(&[0.5], -1.0).is_err());
        assert!(similarity_histogram(&[0.5], f64::INFINITY).is_err());
    }

    #[test]
    fn seeded_random_scores_match_a_direct_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let scores: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        let width = 0.05;
        let h = similarity_histogram(&scores, width).unwrap();
        assert_eq!(h.total(), 1000);
        for (k, &count) in h.counts.iter().enumerate() {
            let lo = k as f64 * width;
            let hi = (k + 1) as f64 * width;
            let direct = scores
                .iter()
                .filter(|&&s| s >= lo && (s < hi || (k == h.counts.len() - 1 && s <= 1.0)))
                .count() as u64;
            assert_eq!(count, direct, "bin {k}");
        }
    }

    #[test]
    fn csv_rendering_lists_every_bin() {
        let h = similarity_histogram(&[0.05, 0.05, 0.95], 0.1).unwrap();
        let csv = h.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "bin_start,bin_end,count");
        assert_eq!(lines.len(), 1 + 10 + 2);
        assert!(lines[1].ends_with(",2"));
        assert!(csv.contains("# mean 0.35"));
    }

    #[test]
    fn svg_rendering_draws_one_bar_per_bin() {
        let h = similarity_histogram(&[0.05, 0.05, 0.95], 0.1).unwrap();
        let svg = h.to_svg();
        assert!(svg.starts_with("<svg "));
        assert!(svg.trim_end().ends_with("</svg>"));
        let bars = svg.matches("fill=\"#4878a8\"").count();
        assert_eq!(bars, 10);
        assert!(svg.contains("stroke-dasharray"), "mean marker missing");
    }

    #[test]
    fn svg_peak_bar_spans_the_plot_height() {
        let h = similarity_histogram(&[0.05, 0.05, 0.95], 0.1).unwrap();
        let svg = h.to_svg();
        // Plot height is 360 - 20 - 40; the two-count bin must use all
        // of it and the one-count bin exactly half.
        assert!(svg.contains("height=\"300.00\""), "{svg}");
        assert!(svg.contains("height=\"150.00\""), "{svg}");
    }

    #[test]
    fn svg_of_an_empty_histogram_has_a_placeholder() {
        let h = similarity_histogram(&[], 0.25).unwrap();
        let svg = h.to_svg();
        assert!(svg.contains("no scores"));
        assert_eq!(svg.matches("fill=\"#4878a8\"").count(), 0);
    }
}
