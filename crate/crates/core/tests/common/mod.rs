//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use speclocal::features::{FeatureKind, FeatureVector};
use speclocal::proposals::{ProposalSet, Provenance, ScoredProposal};
use speclocal::spectral::{normalized_cut, SimilarityGraph};
use speclocal::BBox;

pub fn hog(values: Vec<f64>) -> FeatureVector {
    FeatureVector {
        kind: FeatureKind::Hog,
        values,
        empty: false,
    }
}

pub fn spm_unit(values: Vec<f64>) -> FeatureVector {
    let n = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    FeatureVector {
        kind: FeatureKind::Spm,
        values: values.into_iter().map(|v| v / n).collect(),
        empty: false,
    }
}

/// Proposal set with arbitrary distinct boxes carrying `scores`.
pub fn proposal_set(scores: &[f64]) -> ProposalSet {
    proposal_set_with_boxes(
        &(0..scores.len())
            .map(|i| BBox::new((i % 90) as u32, (i / 90 % 90) as u32, 10, 10).unwrap())
            .collect::<Vec<_>>(),
        scores,
    )
}

pub fn proposal_set_with_boxes(boxes: &[BBox], scores: &[f64]) -> ProposalSet {
    ProposalSet {
        image_id: "fixture".into(),
        width: 100,
        height: 100,
        proposals: boxes.iter().zip(scores).map(|(b, &s)| ScoredProposal::new(*b, s)).collect(),
        provenance: Provenance::Generated,
        uninformative_objectness: false,
    }
}

/// Eigenvalues of the symmetric row-major `n × n` matrix by cyclic Jacobi
/// rotations, ascending.
pub fn jacobi_eigenvalues(matrix: &[f64], n: usize) -> Vec<f64> {
    let mut a = matrix.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// `I - D^{-1/2} W D^{-1/2}` assembled directly from the weights.
pub fn dense_normalized_laplacian(g: &SimilarityGraph) -> Vec<f64> {
    let n = g.n;
    let d = g.degrees();
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let w = g.weight(i, j) / (d[i] * d[j]).sqrt();
            l[i * n + j] = if i == j { 1.0 - w } else { -w };
        }
    }
    l
}

pub fn graph_from_points(points: &[Vec<f64>], sigma: f64) -> SimilarityGraph {
    let n = points.len();
    let mut weights = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d2: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                weights[i * n + j] = (-d2 / (2.0 * sigma * sigma)).exp();
            }
        }
    }
    SimilarityGraph { n, weights, sigma }
}

/// A planted two-block graph: `n ∈ [4, 12]` points in the plane drawn within
/// radius `spread` of one of two centres at least `4 · spread` apart,
/// Gaussian weights with `σ = spread`. Returns the graph and block labels.
pub fn planted_two_block(rng: &mut ChaCha8Rng) -> (SimilarityGraph, Vec<bool>) {
    let n = rng.gen_range(4..=12);
    let size_a = rng.gen_range(2..=n - 2);
    let spread = 1.0;
    let separation = rng.gen_range(4.0..8.0) * spread;
    let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let centre_b = [separation * angle.cos(), separation * angle.sin()];
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let in_a = i < size_a;
        let (cx, cy) = if in_a { (0.0, 0.0) } else { (centre_b[0], centre_b[1]) };
        let r = spread * rng.gen::<f64>().sqrt();
        let t: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        points.push(vec![cx + r * t.cos(), cy + r * t.sin()]);
        labels.push(in_a);
    }
    (graph_from_points(&points, spread), labels)
}

/// Minimum normalized cut over all `2^(n-1) - 1` proper bipartitions.
pub fn brute_force_min_ncut(g: &SimilarityGraph) -> f64 {
    let n = g.n;
    let mut best = f64::INFINITY;
    // node n-1 is pinned to side b to skip mirrored duplicates
    for mask in 1u32..(1 << (n - 1)) {
        let in_a: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
        best = best.min(normalized_cut(g, &in_a));
    }
    best
}

/// 1000 proposals: 100 object proposals tightly clustered in feature space
/// with high scores, and 900 background proposals in one looser cloud with
/// lower, overlapping scores. Returns the set, the HOG-like features and the
/// object mask.
pub fn planted_object_background(rng: &mut ChaCha8Rng) -> (ProposalSet, Vec<FeatureVector>, Vec<bool>) {
    const DIM: usize = 16;
    let object_centre: Vec<f64> = (0..DIM).map(|d| if d % 2 == 0 { 0.6 } else { 0.2 }).collect();
    let background_centre: Vec<f64> = (0..DIM).map(|d| if d % 2 == 0 { 0.2 } else { 0.6 }).collect();
    let mut feats = Vec::with_capacity(1000);
    let mut scores = Vec::with_capacity(1000);
    let mut is_object = Vec::with_capacity(1000);
    for i in 0..1000 {
        let object = i % 10 == 0;
        let (c, noise, s) = if object {
            (&object_centre, 0.01, rng.gen_range(0.4..1.0))
        } else {
            (&background_centre, 0.05, rng.gen_range(0.0..0.6))
        };
        feats.push(hog(c.iter().map(|v| v + rng.gen_range(-noise..noise)).collect()));
        scores.push(s);
        is_object.push(object);
    }
    (proposal_set(&scores), feats, is_object)
}
