//! Proposal descriptors: HOG for the similarity graph, and bag-of-words
//! histograms pooled over a spatial pyramid for grouping.

mod codebook;
mod dense;
mod hog;
mod spm;

pub use codebook::{build_codebook, quantize, Codebook, WordField, DEFAULT_WORDS};
pub use dense::{
    extract_dense_descriptors, extract_dense_descriptors_with_stride, DescriptorField, DENSE_DIM, DENSE_STRIDE, DENSE_SUPPORT};
pub use hog::{hog_descriptor, HOG_LEN};
pub use spm::{spm_pool, SPM_REGIONS};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Hog,
    Spm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub kind: FeatureKind,
    pub values: Vec<f64>,
    /// The region carried no signal and `values` is all zeros.
    pub empty: bool,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }

    pub fn dot(&self, other: &FeatureVector) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// L2-normalize, clip at `clip`, renormalize. Vectors with (near) zero
/// energy become exactly zero; returns whether that happened.
pub(crate) fn normalize_clip(v: &mut [f64], clip: f64) -> bool {
    const EPS: f64 = 1e-12;
    let n = l2_norm(v);
    if n <= EPS {
        v.iter_mut().for_each(|x| *x = 0.0);
        return true;
    }
    for x in v.iter_mut() {
        *x = (*x / n).min(clip);
    }
    let n = l2_norm(v);
    for x in v.iter_mut() {
        *x /= n;
    }
    false
}
