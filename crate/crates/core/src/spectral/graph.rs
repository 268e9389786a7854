use crate::error::{Error, Result};
use crate::features::FeatureVector;

pub const DEFAULT_SIGMA_SCALE: f64 = 0.05;

/// Dense Gaussian affinity graph. `weights` is row-major `n × n`, symmetric,
/// zero on the diagonal and in `(0, 1]` elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    pub n: usize,
    pub weights: Vec<f64>,
    pub sigma: f64,
}

impl SimilarityGraph {
    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn degrees(&self) -> Vec<f64> {
        self.weights.chunks_exact(self.n).map(|row| row.iter().sum()).collect()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in ca.by_ref().zip(cb.by_ref()) {
        for k in 0..4 {
            let d = x[k] - y[k];
            acc[k] += d * d;
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| (x - y) * (x - y)).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Symmetric matrix of squared Euclidean distances between feature vectors.
#[derive(Debug, Clone)]
pub struct PairwiseDistances {
    n: usize,
    sq: Vec<f64>,
}

impl PairwiseDistances {
    pub fn new(features: &[FeatureVector]) -> Result<Self> {
        let n = features.len();
        if let Some(first) = features.first() {
            if let Some(bad) = features.iter().find(|f| f.len() != first.len()) {
                return Err(Error::Dimension(format!(
                    "feature lengths differ: {} vs {}",
                    first.len(),
                    bad.len()
                )));
            }
        }
        let mut sq = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = sq_dist(&features[i].values, &features[j].values);
                sq[i * n + j] = d;
                sq[j * n + i] = d;
            }
        }
        Ok(PairwiseDistances { n, sq })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn sq(&self, i: usize, j: usize) -> f64 {
        self.sq[i * self.n + j]
    }

    /// Graph over the nodes in `subset` (indices into this matrix), with
    /// `σ = sigma_scale · max pairwise distance` taken over the subset.
    pub fn graph(&self, subset: &[usize], sigma_scale: f64) -> Result<SimilarityGraph> {
        let n = subset.len();
        if n < 2 {
            return Err(Error::Input(format!("a similarity graph needs at least 2 nodes, got {n}")));
        }
        if !(sigma_scale > 0.0 && sigma_scale.is_finite()) {
            return Err(Error::Input(format!("sigma scale must be positive, got {sigma_scale}")));
        }
        let mut max_sq: f64 = 0.0;
        for (a, &i) in subset.iter().enumerate() {
            for &j in &subset[a + 1..] {
                max_sq = max_sq.max(self.sq(i, j));
            }
        }
        if max_sq == 0.0 {
            return Err(Error::DegenerateGraph(format!("all {n} features are identical")));
        }
        let sigma = sigma_scale * max_sq.sqrt();
        let denom = 2.0 * sigma * sigma;
        let mut weights = vec![0.0; n * n];
        for (a, &i) in subset.iter().enumerate() {
            for (b, &j) in subset.iter().enumerate().skip(a + 1) {
                // floor keeps every edge strictly positive under tiny σ
                let w = (-self.sq(i, j) / denom).exp().max(f64::MIN_POSITIVE);
                weights[a * n + b] = w;
                weights[b * n + a] = w;
            }
        }
        Ok(SimilarityGraph { n, weights, sigma })
    }
}

/// Gaussian similarity graph over `features`: `w_ij = exp(-‖f_i - f_j‖² / 2σ²)`
/// with `σ = sigma_scale · max_ij ‖f_i - f_j‖` and no self-loops.
pub fn build_graph(features: &[FeatureVector], sigma_scale: f64) -> Result<SimilarityGraph> {
    let all: Vec<usize> = (0..features.len()).collect();
    PairwiseDistances::new(features)?.graph(&all, sigma_scale)
}
