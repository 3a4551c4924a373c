//! Colour-histogram baseline: joint 8×8×8 RGB histograms compared by Pearson
//! correlation against a threshold calibrated on the training images.

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::comparison::MatchVerdict;
use crate::error::{Error, Result};

pub const BINS_PER_CHANNEL: usize = 8;
pub const HISTOGRAM_LEN: usize = BINS_PER_CHANNEL * BINS_PER_CHANNEL * BINS_PER_CHANNEL;

/// Bin of one raw pixel: `r/32 · 64 + g/32 · 8 + b/32`.
pub fn bin_index(px: [u8; 3]) -> usize {
    let [r, g, b] = px.map(|c| (c / 32) as usize);
    r * 64 + g * 8 + b
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColorHistogram {
    pub counts: Vec<u64>,
    /// `counts` divided by the pixel count.
    pub normalized: Vec<f64>,
}

/// Histogram of the raw (unnormalised) pixels.
pub fn histogram(img: &RgbImage) -> ColorHistogram {
    let mut counts = vec![0u64; HISTOGRAM_LEN];
    for px in img.pixels() {
        counts[bin_index(px.0)] += 1;
    }
    let total = (img.width() as u64 * img.height() as u64).max(1) as f64;
    let normalized = counts.iter().map(|&c| c as f64 / total).collect();
    ColorHistogram { counts, normalized }
}

/// Pearson correlation. A constant vector has no defined correlation; 0 is
/// returned for it with a warning.
pub fn correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::dim(format!("correlation of lengths {} and {}", a.len(), b.len())));
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        log::warn!("correlation with a constant histogram is undefined; using 0");
        return Ok(0.0);
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Which training images the mean-correlation threshold is computed over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdPairs {
    /// All liked and disliked training images together.
    #[default]
    Pooled,
    PositivesOnly,
}

/// Mean correlation over every unordered pair of distinct histograms.
pub fn calibrate_threshold(hists: &[&ColorHistogram]) -> Result<f64> {
    if hists.len() < 2 {
        return Err(Error::contract(format!("threshold calibration needs at least 2 images, got {}", hists.len())));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..hists.len() {
        for j in i + 1..hists.len() {
            total += correlation(&hists[i].normalized, &hists[j].normalized)?;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Histogram scorer: median correlation against the liked references.
#[derive(Clone, Debug)]
pub struct HistogramModel {
    refs: Vec<ColorHistogram>,
    pub threshold: f64,
    pub pairs: ThresholdPairs,
}

impl HistogramModel {
    pub fn fit(positives: &[&RgbImage], negatives: &[&RgbImage], pairs: ThresholdPairs) -> Result<Self> {
        if positives.is_empty() {
            return Err(Error::contract("histogram baseline needs at least one liked image"));
        }
        let refs: Vec<ColorHistogram> = positives.iter().map(|i| histogram(i)).collect();
        let neg: Vec<ColorHistogram> = negatives.iter().map(|i| histogram(i)).collect();
        let pool: Vec<&ColorHistogram> = match pairs {
            ThresholdPairs::Pooled => refs.iter().chain(&neg).collect(),
            ThresholdPairs::PositivesOnly => refs.iter().collect(),
        };
        let threshold = calibrate_threshold(&pool)?;
        Ok(HistogramModel { refs, threshold, pairs })
    }

    pub fn verdict(&self, img: &RgbImage) -> Result<MatchVerdict> {
        let h = histogram(img);
        let scores = self
            .refs
            .iter()
            .map(|r| correlation(&h.normalized, &r.normalized))
            .collect::<Result<Vec<_>>>()?;
        MatchVerdict::from_scores(scores, self.threshold)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comparison::Decision;
    use image::Rgb;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: u32, h: u32, seed: u64) -> RgbImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RgbImage::from_fn(w, h, |_, _| Rgb([rng.gen(), rng.gen(), rng.gen()]))
    }

    #[test]
    fn black_and_white_fill_single_bins() {
        let black = histogram(&RgbImage::new(64, 64));
        assert_eq!(black.counts[0], 4096);
        assert_eq!(black.normalized[0], 1.0);
        let white = histogram(&RgbImage::from_pixel(64, 64, Rgb([255, 255, 255])));
        assert_eq!(white.counts[511], 4096);
    }

    #[test]
    fn matches_pixel_scan_oracle() {
        for seed in 0..5 {
            let img = random_image(13, 9, seed);
            let h = histogram(&img);
            let mut oracle = [0u64; 512];
            for y in 0..img.height() {
                for x in 0..img.width() {
                    let p = img.get_pixel(x, y).0;
                    let (r, g, b) = ((p[0] >> 5) as usize, (p[1] >> 5) as usize, (p[2] >> 5) as usize);
                    oracle[(r << 6) | (g << 3) | b] += 1;
                }
            }
            assert_eq!(h.counts, oracle);
            assert_eq!(h.counts.iter().sum::<u64>(), 13 * 9);
        }
    }

    #[test]
    fn hand_correlations() {
        assert!((correlation(&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        // [1,2,3] vs [1,3,2]: dx = [-1,0,1], dy = [-1,1,0], Σdxdy = 1, Σdx² = Σdy² = 2
        assert!((correlation(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(correlation(&[1.0, 1.0], &[0.0, 2.0]).unwrap(), 0.0);
        assert!(correlation(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn identical_pair_threshold_is_one() {
        let h = histogram(&random_image(8, 8, 1));
        assert!((calibrate_threshold(&[&h, &h]).unwrap() - 1.0).abs() < 1e-12);
        assert!(calibrate_threshold(&[&h]).is_err());
    }

    #[test]
    fn threshold_is_mean_over_all_pairs() {
        let hs: Vec<ColorHistogram> = (0..4).map(|s| histogram(&random_image(4, 4, s))).collect();
        let refs: Vec<&ColorHistogram> = hs.iter().collect();
        let mut sum = 0.0;
        let mut n = 0;
        for (i, a) in hs.iter().enumerate() {
            for (j, b) in hs.iter().enumerate() {
                if i < j {
                    sum += correlation(&a.normalized, &b.normalized).unwrap();
                    n += 1;
                }
            }
        }
        assert_eq!(n, 6);
        assert!((calibrate_threshold(&refs).unwrap() - sum / 6.0).abs() < 1e-15);
    }

    #[test]
    fn liked_image_matches_itself() {
        let img = random_image(16, 16, 3);
        let other = random_image(16, 16, 4);
        let model = HistogramModel::fit(&[&img], &[&other], ThresholdPairs::Pooled).unwrap();
        assert!(model.threshold < 1.0);
        let v = model.verdict(&img).unwrap();
        assert!((v.aggregate - 1.0).abs() < 1e-12);
        assert_eq!(v.decision, Decision::Like);
        assert!(HistogramModel::fit(&[&img], &[], ThresholdPairs::Pooled).is_err());
        assert!(HistogramModel::fit(&[], &[&img, &other], ThresholdPairs::Pooled).is_err());
    }

    proptest! {
        #[test]
        fn correlation_properties(
            a in proptest::collection::vec(0.0f64..1.0, 8),
            b in proptest::collection::vec(0.0f64..1.0, 8),
            scale in 0.01f64..100.0,
            shift in -5.0f64..5.0,
        ) {
            let r = correlation(&a, &b).unwrap();
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
            prop_assert!((r - correlation(&b, &a).unwrap()).abs() < 1e-12);
            let moved: Vec<f64> = a.iter().map(|v| scale * v + shift).collect();
            prop_assert!((correlation(&moved, &b).unwrap() - r).abs() < 1e-9);
            prop_assert!((correlation(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
