use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dense::{DescriptorField, DENSE_DIM};
use crate::error::{Error, Result};

pub const DEFAULT_WORDS: usize = 1000;
const MAX_ITERS: usize = 50;
const MOVE_TOL: f64 = 1e-4;

/// Visual-word centroids, row-major `len × dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub dim: usize,
    pub words: Vec<f64>,
    pub seed: u64,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.words.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, i: usize) -> &[f64] {
        &self.words[i * self.dim..(i + 1) * self.dim]
    }

    /// Index of the nearest centroid; ties go to the lowest index.
    pub fn nearest(&self, v: &[f64]) -> usize {
        nearest(&self.words, self.dim, v).0
    }
}

/// Per lattice point word index, aligned with the field's positions.
#[derive(Debug, Clone, PartialEq)]
pub struct WordField {
    pub width: u32,
    pub height: u32,
    pub centers: Vec<(f64, f64)>,
    pub words: Vec<usize>,
    pub codebook_size: usize,
}

fn sq_dist_bounded(a: &[f64], b: &[f64], bound: f64) -> f64 {
    let mut acc = 0.0;
    for (chunk_a, chunk_b) in a.chunks(16).zip(b.chunks(16)) {
        for (x, y) in chunk_a.iter().zip(chunk_b) {
            let d = x - y;
            acc += d * d;
        }
        if acc >= bound {
            return acc;
        }
    }
    acc
}

fn nearest(centroids: &[f64], dim: usize, v: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist_bounded(v, c, best.1);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// k-means with k-means++ seeding. `k` is reduced to the number of distinct
/// descriptors when there are fewer than `words`. Stops after 50 Lloyd
/// iterations or once no centroid moves by 1e-4 or more.
pub fn build_codebook(field: &DescriptorField, words: usize, seed: u64) -> Result<Codebook> {
    if field.is_empty() {
        return Err(Error::Input("cannot train a codebook on an empty descriptor field".into()));
    }
    if words == 0 {
        return Err(Error::Input("codebook needs at least one word".into()));
    }
    let dim = DENSE_DIM;
    let points = &field.descriptors;
    let n = field.len();
    let distinct = points
        .chunks_exact(dim)
        .map(|p| p.iter().map(|v| v.to_bits()).collect::<Vec<_>>())
        .collect::<HashSet<_>>()
        .len();
    let k = words.min(distinct);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.gen_range(0..n);
    centroids.extend_from_slice(&points[first * dim..(first + 1) * dim]);
    let mut d2: Vec<f64> = points
        .chunks_exact(dim)
        .map(|p| sq_dist_bounded(p, &centroids[..dim], f64::INFINITY))
        .collect();
    while centroids.len() < k * dim {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            // rounding can leave `target` just above the final sum
            chosen.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            break;
        };
        let c = &points[pick * dim..(pick + 1) * dim];
        centroids.extend_from_slice(c);
        for (i, p) in points.chunks_exact(dim).enumerate() {
            let d = sq_dist_bounded(p, c, d2[i]);
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    let k = centroids.len() / dim;

    let mut assignment = vec![0usize; n];
    for _ in 0..MAX_ITERS {
        for (i, p) in points.chunks_exact(dim).enumerate() {
            assignment[i] = nearest(&centroids, dim, p).0;
        }
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (i, p) in points.chunks_exact(dim).enumerate() {
            let a = assignment[i];
            counts[a] += 1;
            for (s, v) in sums[a * dim..(a + 1) * dim].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut max_move: f64 = 0.0;
        for j in 0..k {
            // an empty cluster keeps its centroid
            if counts[j] == 0 {
                continue;
            }
            let inv = 1.0 / counts[j] as f64;
            let mut moved = 0.0;
            for (c, s) in centroids[j * dim..(j + 1) * dim].iter_mut().zip(&sums[j * dim..(j + 1) * dim]) {
                let next = s * inv;
                moved += (next - *c) * (next - *c);
                *c = next;
            }
            max_move = max_move.max(moved.sqrt());
        }
        if max_move < MOVE_TOL {
            break;
        }
    }

    let mut seen = HashSet::new();
    let words: Vec<f64> = centroids
        .chunks_exact(dim)
        .filter(|c| seen.insert(c.iter().map(|v| v.to_bits()).collect::<Vec<_>>()))
        .flatten()
        .copied()
        .collect();
    Ok(Codebook { dim, words, seed })
}

/// Assigns every lattice point its nearest visual word.
pub fn quantize(field: &DescriptorField, codebook: &Codebook) -> Result<WordField> {
    if codebook.dim != field.dim() {
        return Err(Error::Dimension(format!(
            "codebook has {}-dimensional words, descriptors are {}-dimensional",
            codebook.dim,
            field.dim()
        )));
    }
    if codebook.is_empty() {
        return Err(Error::Input("empty codebook".into()));
    }
    let words = (0..field.len())
        .map(|i| codebook.nearest(field.descriptor(i)))
        .collect();
    Ok(WordField {
        width: field.width,
        height: field.height,
        centers: (0..field.len()).map(|i| field.center(i)).collect(),
        words,
        codebook_size: codebook.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field_from(points: &[Vec<f64>]) -> DescriptorField {
        DescriptorField {
            width: 16,
            height: 16,
            stride: 4,
            positions: (0..points.len() as u32).map(|i| (4 * i, 0)).collect(),
            descriptors: points.iter().flatten().copied().collect(),
        }
    }

    fn basis(i: usize, scale: f64) -> Vec<f64> {
        let mut v = vec![0.0; DENSE_DIM];
        v[i] = scale;
        v
    }

    #[test]
    fn k_is_clamped_to_distinct_count() {
        let pts = vec![basis(0, 1.0), basis(1, 1.0), basis(0, 1.0), basis(2, 1.0), basis(1, 1.0)];
        let cb = build_codebook(&field_from(&pts), 1000, 7).unwrap();
        assert_eq!(cb.len(), 3);
    }

    #[test]
    fn recovers_blob_means() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut pts = Vec::new();
        let mut means = [vec![0.0; DENSE_DIM], vec![0.0; DENSE_DIM]];
        for blob in 0..2 {
            for _ in 0..40 {
                let mut v = vec![0.0; DENSE_DIM];
                v[blob * 10] = 1.0;
                for x in v.iter_mut() {
                    *x += rng.gen_range(-0.01..0.01);
                }
                for (m, x) in means[blob].iter_mut().zip(&v) {
                    *m += x / 40.0;
                }
                pts.push(v);
            }
        }
        let cb = build_codebook(&field_from(&pts), 2, 3).unwrap();
        assert_eq!(cb.len(), 2);
        for mean in &means {
            let best = (0..2)
                .map(|j| sq_dist_bounded(cb.word(j), mean, f64::INFINITY).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-3, "centroid {best} away from blob mean");
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let img = crate::imgproc::Image::from_fn(40, 40, |x, y| ((x * 13 + y * 7) % 10) as f64 / 9.0).unwrap();
        let field = crate::features::extract_dense_descriptors(&img).unwrap();
        let a = build_codebook(&field, 10, 5).unwrap();
        let b = build_codebook(&field, 10, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_field_rejected() {
        assert!(build_codebook(&field_from(&[]), 10, 0).is_err());
    }

    #[test]
    fn quantize_exact_and_ties() {
        let words: Vec<Vec<f64>> = (0..8).map(|i| basis(i, 1.0)).collect();
        let cb = Codebook {
            dim: DENSE_DIM,
            words: words.iter().flatten().copied().collect(),
            seed: 0,
        };
        assert_eq!(cb.nearest(&basis(7, 1.0)), 7);
        // equidistant from words 2 and 5
        let mut mid = vec![0.0; DENSE_DIM];
        mid[2] = 0.5;
        mid[5] = 0.5;
        assert_eq!(cb.nearest(&mid), 2);
    }

    #[test]
    fn quantize_matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cb = Codebook {
            dim: DENSE_DIM,
            words: (0..30 * DENSE_DIM).map(|_| rng.gen::<f64>()).collect(),
            seed: 0,
        };
        let pts: Vec<Vec<f64>> = (0..100).map(|_| (0..DENSE_DIM).map(|_| rng.gen()).collect()).collect();
        let field = field_from(&pts);
        let wf = quantize(&field, &cb).unwrap();
        for (p, &w) in pts.iter().zip(&wf.words) {
            let dists: Vec<f64> = (0..cb.len())
                .map(|j| p.iter().zip(cb.word(j)).map(|(a, b)| (a - b) * (a - b)).sum())
                .collect();
            let min = dists.iter().cloned().fold(f64::INFINITY, f64::min);
            let oracle = dists.iter().position(|&d| d == min).unwrap();
            assert_eq!(w, oracle);
        }
        assert!(wf.words.iter().all(|&w| w < cb.len()));
    }

    #[test]
    fn quantize_dimension_mismatch() {
        let cb = Codebook {
            dim: 4,
            words: vec![0.0; 8],
            seed: 0,
        };
        assert!(matches!(quantize(&field_from(&[basis(0, 1.0)]), &cb), Err(Error::Dimension(_))));
    }
}
