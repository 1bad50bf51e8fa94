//! DCT-based perceptual hash.
//!
//! The frame is converted to grayscale, area-averaged down to 32×32, and transformed
//! with an unnormalized 2-D DCT-II of which only the 8×8 lowest frequencies
//! are kept. Each of the 64 coefficients becomes one element of the hash:
//! `1` when it is strictly greater than the median coefficient, else `0`.

use image::{DynamicImage, ImageBuffer, Luma};

use super::IngestError;

pub const SAMPLE_SIDE: usize = 32;
pub const HASH_SIDE: usize = 8;
pub const HASH_LEN: usize = HASH_SIDE * HASH_SIDE;

/// Coefficients smaller than this fraction of the DC magnitude are treated
/// as exact zeros, so flat regions hash identically regardless of rounding.
pub const ZERO_SNAP: f64 = 1e-9;

pub type GrayF32 = ImageBuffer<Luma<f32>, Vec<f32>>;

/// Hashes an image. Fails on an empty (0-pixel) image.
pub fn perceptual_hash(img: &DynamicImage) -> Result<Vec<u8>, IngestError> {
    if img.width() == 0 || img.height() == 0 {
        return Err(IngestError::EmptyImage);
    }
    Ok(perceptual_hash_gray(&img.to_luma32f()))
}

pub fn perceptual_hash_gray(img: &GrayF32) -> Vec<u8> {
    let sample = downsample(img);
    let coeffs = low_frequency_dct(&sample);
    bits_above_median(&snap_zeros(coeffs))
}

/// 32×32 row-major luminance samples. Each sample is the exact area average
/// of the source pixels it covers, so the map is linear in pixel values.
pub fn downsample(img: &GrayF32) -> Vec<f64> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let xs = coverage(w, SAMPLE_SIDE);
    let ys = coverage(h, SAMPLE_SIDE);
    // horizontal pass: h rows × 32 columns
    let mut horiz = vec![0.0; h * SAMPLE_SIDE];
    for y in 0..h {
        for (ox, cells) in xs.iter().enumerate() {
            horiz[y * SAMPLE_SIDE + ox] = cells
                .iter()
                .map(|&(x, wt)| img.get_pixel(x as u32, y as u32).0[0] as f64 * wt)
                .sum();
        }
    }
    let mut out = vec![0.0; SAMPLE_SIDE * SAMPLE_SIDE];
    for (oy, cells) in ys.iter().enumerate() {
        for ox in 0..SAMPLE_SIDE {
            out[oy * SAMPLE_SIDE + ox] = cells.iter().map(|&(y, wt)| horiz[y * SAMPLE_SIDE + ox] * wt).sum();
        }
    }
    out
}

/// For each of `n_out` output cells, the source indices it overlaps and the
/// normalized overlap weights.
fn coverage(n_in: usize, n_out: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let lo = o as f64 * scale;
            let hi = (o + 1) as f64 * scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(n_in);
            (first..last)
                .filter_map(|i| {
                    let overlap = (hi.min(i as f64 + 1.0) - lo.max(i as f64)) / scale;
                    (overlap > 0.0).then_some((i, overlap))
                })
                .collect()
        })
        .collect()
}

/// Separable DCT-II restricted to the lowest `HASH_SIDE` frequencies in each
/// direction. Output is row-major `[v * HASH_SIDE + u]`, `u` horizontal.
pub fn low_frequency_dct(samples: &[f64]) -> Vec<f64> {
    let n = SAMPLE_SIDE;
    assert_eq!(samples.len(), n * n);
    let table = cosine_table();

    // rows: rows[y][u]
    let mut rows = vec![0.0; n * HASH_SIDE];
    for y in 0..n {
        let row = &samples[y * n..(y + 1) * n];
        for u in 0..HASH_SIDE {
            rows[y * HASH_SIDE + u] = row.iter().zip(&table[u]).map(|(p, c)| p * c).sum();
        }
    }
    let mut out = vec![0.0; HASH_LEN];
    for v in 0..HASH_SIDE {
        for u in 0..HASH_SIDE {
            out[v * HASH_SIDE + u] = (0..n).map(|y| rows[y * HASH_SIDE + u] * table[v][y]).sum();
        }
    }
    out
}

fn cosine_table() -> Vec<Vec<f64>> {
    let n = SAMPLE_SIDE as f64;
    (0..HASH_SIDE)
        .map(|k| {
            (0..SAMPLE_SIDE)
                .map(|x| (std::f64::consts::PI * (2.0 * x as f64 + 1.0) * k as f64 / (2.0 * n)).cos())
                .collect()
        })
        .collect()
}

pub fn snap_zeros(mut coeffs: Vec<f64>) -> Vec<f64> {
    let scale = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let eps = ZERO_SNAP * scale.max(f64::MIN_POSITIVE);
    for c in &mut coeffs {
        if c.abs() < eps {
            *c = 0.0;
        }
    }
    coeffs
}

pub fn bits_above_median(coeffs: &[f64]) -> Vec<u8> {
    let mut sorted = coeffs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len().is_multiple_of(2) {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    };
    coeffs.iter().map(|&c| u8::from(c > median)).collect()
}

/// Sum of element-wise absolute differences. Hashes of different lengths
/// cannot be compared.
pub fn hash_distance(a: &[u8], b: &[u8]) -> Result<u32, IngestError> {
    if a.len() != b.len() {
        return Err(IngestError::HashLengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| x.abs_diff(*y) as u32).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(value: f32) -> GrayF32 {
        ImageBuffer::from_pixel(64, 48, Luma([value]))
    }

    #[test]
    fn distance_examples() {
        assert_eq!(hash_distance(&[0, 1, 1, 0], &[0, 1, 1, 0]).unwrap(), 0);
        assert_eq!(hash_distance(&[0, 1, 1, 0], &[1, 1, 0, 0]).unwrap(), 2);
        assert!(matches!(
            hash_distance(&[0, 1], &[0, 1, 1]),
            Err(IngestError::HashLengthMismatch { left: 2, right: 3 })
        ));
    }

    #[test]
    fn hash_has_64_elements_and_is_deterministic() {
        let img = DynamicImage::ImageLuma8(ImageBuffer::from_fn(40, 30, |x, y| Luma([((x * 7 + y * 3) % 256) as u8])));
        let a = perceptual_hash(&img).unwrap();
        let b = perceptual_hash(&img).unwrap();
        assert_eq!(a.len(), HASH_LEN);
        assert_eq!(hash_distance(&a, &b).unwrap(), 0);
    }

    #[test]
    fn uniform_frames_differ_only_in_dc() {
        // flat frames have no AC energy: only the DC element can separate them
        let white = perceptual_hash_gray(&uniform(1.0));
        let black = perceptual_hash_gray(&uniform(0.0));
        assert_eq!(white.iter().map(|&b| b as u32).sum::<u32>(), 1);
        assert_eq!(white[0], 1);
        assert!(black.iter().all(|&b| b == 0));
    }

    #[test]
    fn empty_image_is_error() {
        let img = DynamicImage::ImageLuma8(ImageBuffer::new(0, 0));
        assert!(matches!(perceptual_hash(&img), Err(IngestError::EmptyImage)));
    }
}
