//! Train-time image augmentation: horizontal flip and random erasure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Optionally flips horizontally and erases a random rectangle (filled
/// with background 0). Deterministic per seed.
pub fn augment(image: &[f32], r: usize, seed: u64, flip_prob: f64, erase_prob: f64) -> Vec<f32> {
    assert_eq!(image.len(), r * r);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = image.to_vec();
    if rng.gen_bool(flip_prob) {
        flip_horizontal(&mut out, r);
    }
    if rng.gen_bool(erase_prob) {
        let area_frac = rng.gen_range(0.02..0.2);
        let aspect = rng.gen_range(0.3..3.3);
        let area = area_frac * (r * r) as f64;
        // height/width = aspect
        let ew = ((area / aspect).sqrt().round() as usize).clamp(1, r);
        let eh = ((area / ew as f64).round() as usize).clamp(1, r);
        let row0 = rng.gen_range(0..=r - eh);
        let col0 = rng.gen_range(0..=r - ew);
        erase_rect(&mut out, r, row0, col0, eh, ew);
    }
    out
}

pub fn flip_horizontal(image: &mut [f32], r: usize) {
    for row in image.chunks_mut(r) {
        row.reverse();
    }
}

pub fn erase_rect(image: &mut [f32], r: usize, row0: usize, col0: usize, h: usize, w: usize) {
    for row in row0..row0 + h {
        for col in col0..col0 + w {
            image[row * r + col] = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(r: usize) -> Vec<f32> {
        (0..r * r).map(|i| (i % 97) as f32 / 96.0).collect()
    }

    #[test]
    fn double_flip_is_identity() {
        let r = 8;
        let original = ramp(r);
        let mut img = original.clone();
        flip_horizontal(&mut img, r);
        assert_ne!(img, original);
        flip_horizontal(&mut img, r);
        assert_eq!(img, original);
    }

    #[test]
    fn erase_zeroes_region_only() {
        let r = 8;
        let original = ramp(r);
        let mut img = original.clone();
        erase_rect(&mut img, r, 2, 3, 2, 4);
        for row in 0..r {
            for col in 0..r {
                let inside = (2..4).contains(&row) && (3..7).contains(&col);
                if inside {
                    assert_eq!(img[row * r + col], 0.0);
                } else {
                    assert_eq!(img[row * r + col], original[row * r + col]);
                }
            }
        }
    }

    #[test]
    fn flip_rate_matches_probability() {
        let r = 4;
        let mut img = ramp(r);
        img[0] = 1.0;
        img[r - 1] = 0.0;
        let mut flips = 0;
        let n = 10_000;
        for seed in 0..n {
            let out = augment(&img, r, seed, 0.5, 0.0);
            if out[0] == 0.0 {
                flips += 1;
            }
        }
        let rate = flips as f64 / n as f64;
        assert!((rate - 0.5).abs() < 0.02, "rate {}", rate);
    }

    #[test]
    fn deterministic_per_seed_and_in_range() {
        let r = 16;
        let img = ramp(r);
        let a = augment(&img, r, 77, 0.5, 0.5);
        let b = augment(&img, r, 77, 0.5, 0.5);
        assert_eq!(a, b);
        assert!(a.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }
}
