//! Qualitative exports: part-feature correlation matrices and per-view
//! attention-map overlays.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::path::Path;

/// Cosine similarity between every pair of rows of an `[L x C]` matrix.
/// All-zero rows get 0 off the diagonal and 1 on it.
pub fn part_correlation(parts: &Tensor) -> Result<Tensor> {
    let s = parts.shape();
    if s.len() != 2 {
        return Err(Error::Dim(format!("part_correlation: {:?}", s)));
    }
    let (l, c) = (s[0], s[1]);
    let data = parts.data();
    let norms: Vec<f64> = (0..l)
        .map(|i| data[i * c..(i + 1) * c].iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut out = vec![0.0; l * l];
    for i in 0..l {
        for j in 0..l {
            out[i * l + j] = if i == j {
                1.0
            } else if norms[i] == 0.0 || norms[j] == 0.0 {
                0.0
            } else {
                let dot: f64 = data[i * c..(i + 1) * c]
                    .iter()
                    .zip(data[j * c..(j + 1) * c].iter())
                    .map(|(a, b)| a * b)
                    .sum();
                (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            };
        }
    }
    Ok(Tensor::new(vec![l, l], out))
}

/// Mean absolute value of the off-diagonal entries of a square matrix.
pub fn mean_offdiag(matrix: &Tensor) -> Result<f64> {
    let s = matrix.shape();
    if s.len() != 2 || s[0] != s[1] {
        return Err(Error::Dim(format!("mean_offdiag: {:?}", s)));
    }
    let l = s[0];
    if l < 2 {
        return Err(Error::Usage(format!(
            "mean_offdiag needs at least a 2x2 matrix, got {}x{}",
            l, l
        )));
    }
    let mut sum = 0.0;
    for i in 0..l {
        for j in 0..l {
            if i != j {
                sum += matrix.data()[i * l + j].abs();
            }
        }
    }
    Ok(sum / (l * (l - 1)) as f64)
}

/// CSV of an `[L x L]` matrix, 9 significant digits.
pub fn write_correlation_csv(matrix: &Tensor, path: &Path) -> Result<()> {
    let s = matrix.shape();
    if s.len() != 2 {
        return Err(Error::Dim(format!("write_correlation_csv: {:?}", s)));
    }
    let mut out = String::new();
    for row in matrix.data().chunks(s[1]) {
        let cells: Vec<String> = row.iter().map(|x| format!("{:.9e}", x)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Nearest-neighbor upsample of an `[h x w]` map to `r x r`, min-max
/// normalized to 0..=255; a constant map goes to all zeros.
pub fn render_overlay(map: &[f64], h: usize, w: usize, r: usize) -> Vec<u8> {
    let lo = map.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = map.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let mut out = Vec::with_capacity(r * r);
    for y in 0..r {
        for x in 0..r {
            let sy = (y * h) / r;
            let sx = (x * w) / r;
            let v = map[sy * w + sx];
            out.push(if span > 0.0 {
                ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            });
        }
    }
    out
}

pub fn write_pgm(pixels: &[u8], r: usize, path: &Path) -> Result<()> {
    let mut bytes = format!("P5\n{} {}\n255\n", r, r).into_bytes();
    bytes.extend_from_slice(pixels);
    std::fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

/// For each view, exports the four attention maps with the largest total
/// mass as `view{i}_part{j}.pgm` grayscale overlays upsampled to `r x r`.
/// `attention[i]` is the `[h x w x M]` map stack of view i.
pub fn export_attention_overlays(
    attention: &[Tensor],
    r: usize,
    out_dir: &Path,
) -> Result<Vec<std::path::PathBuf>> {
    let mut written = Vec::new();
    for (i, a) in attention.iter().enumerate() {
        let s = a.shape();
        if s.len() != 3 {
            return Err(Error::Dim(format!("attention stack {}: {:?}", i, s)));
        }
        let (h, w, m) = (s[0], s[1], s[2]);
        let mut mass: Vec<(usize, f64)> = (0..m)
            .map(|j| {
                let total = a
                    .data()
                    .iter()
                    .skip(j)
                    .step_by(m)
                    .sum::<f64>();
                (j, total)
            })
            .collect();
        mass.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        for &(j, _) in mass.iter().take(4) {
            let map: Vec<f64> = a.data().iter().skip(j).step_by(m).copied().collect();
            debug_assert_eq!(map.len(), h * w);
            let pixels = render_overlay(&map, h, w, r);
            let path = out_dir.join(format!("view{}_part{}.pgm", i, j));
            write_pgm(&pixels, r, &path)?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn correlation_hand_cases() {
        let same = Tensor::new(vec![2, 2], vec![1.0, 2.0, 2.0, 4.0]);
        let c = part_correlation(&same).unwrap();
        assert!(c.data().iter().all(|&x| (x - 1.0).abs() < 1e-12));

        let ortho = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 3.0]);
        let c = part_correlation(&ortho).unwrap();
        assert_eq!(c.data(), &[1.0, 0.0, 0.0, 1.0]);

        let pair = Tensor::new(vec![2, 2], vec![1.0, 0.0, 1.0, 1.0]);
        let c = part_correlation(&pair).unwrap();
        let expected = 1.0 / 2.0f64.sqrt();
        assert!((c.data()[1] - expected).abs() < 1e-12);
        assert!((c.data()[2] - expected).abs() < 1e-12);
    }

    #[test]
    fn correlation_zero_row_rule() {
        let p = Tensor::new(vec![2, 3], vec![0.0, 0.0, 0.0, 1.0, 2.0, 3.0]);
        let c = part_correlation(&p).unwrap();
        assert_eq!(c.data(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn correlation_invariants_over_seeds() {
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let l = 4;
            let c = 6;
            let data: Vec<f64> = (0..l * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let p = Tensor::new(vec![l, c], data.clone());
            let m = part_correlation(&p).unwrap();
            for i in 0..l {
                assert!((m.data()[i * l + i] - 1.0).abs() < 1e-9);
                for j in 0..l {
                    let a = m.data()[i * l + j];
                    assert!((-1.0..=1.0).contains(&a));
                    assert!((a - m.data()[j * l + i]).abs() < 1e-9);
                }
            }
            let scaled: Vec<f64> = data
                .iter()
                .enumerate()
                .map(|(idx, &x)| x * (1.0 + (idx / c) as f64 * 2.5))
                .collect();
            let m2 = part_correlation(&Tensor::new(vec![l, c], scaled)).unwrap();
            assert!(m.max_abs_diff(&m2) < 1e-9);
        }
    }

    #[test]
    fn mean_offdiag_cases() {
        let id = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(mean_offdiag(&id).unwrap(), 0.0);
        let ones = Tensor::full(vec![3, 3], 1.0);
        assert_eq!(mean_offdiag(&ones).unwrap(), 1.0);
        let pm = Tensor::new(vec![2, 2], vec![1.0, 0.5, -0.5, 1.0]);
        assert_eq!(mean_offdiag(&pm).unwrap(), 0.5);
        let tiny = Tensor::new(vec![1, 1], vec![1.0]);
        assert!(matches!(mean_offdiag(&tiny), Err(Error::Usage(_))));
    }

    #[test]
    fn overlay_normalization() {
        let flat = render_overlay(&[0.7, 0.7, 0.7, 0.7], 2, 2, 4);
        assert!(flat.iter().all(|&p| p == 0));

        let ramp = render_overlay(&[0.0, 1.0, 2.0, 3.0], 2, 2, 2);
        assert_eq!(ramp, vec![0, 85, 170, 255]);

        let up = render_overlay(&[0.0, 1.0, 2.0, 3.0], 2, 2, 4);
        assert_eq!(up[0], up[1]);
        assert_eq!(up[0], up[4]);
        assert_eq!(up.len(), 16);
    }

    #[test]
    fn export_writes_four_per_view_deterministically() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let stacks: Vec<Tensor> = (0..2)
            .map(|_| {
                Tensor::new(
                    vec![2, 2, 6],
                    (0..24).map(|_| rng.gen_range(0.0..1.0)).collect(),
                )
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let files = export_attention_overlays(&stacks, 8, dir.path()).unwrap();
        assert_eq!(files.len(), 8);
        let first: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(f).unwrap()).collect();
        let again = export_attention_overlays(&stacks, 8, dir.path()).unwrap();
        for (f, bytes) in again.iter().zip(first.iter()) {
            assert_eq!(&std::fs::read(f).unwrap(), bytes);
        }
        let header = std::fs::read(&files[0]).unwrap();
        assert!(header.starts_with(b"P5\n8 8\n255\n"));
        assert_eq!(header.len(), b"P5\n8 8\n255\n".len() + 64);
    }

    #[test]
    fn correlation_csv_significant_digits() {
        let m = Tensor::new(vec![2, 2], vec![1.0, 0.123456789123, -0.5, 1.0]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corr.csv");
        write_correlation_csv(&m, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("1.234567891e-1"), "{}", text);
        assert_eq!(text.lines().count(), 2);
    }
}
