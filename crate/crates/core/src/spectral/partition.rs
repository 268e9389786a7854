use serde::Serialize;

use super::graph::SimilarityGraph;

/// A non-empty set of proposal indices with the mean overall score of its
/// members.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cluster {
    pub members: Vec<usize>,
    pub score: f64,
}

impl Cluster {
    /// `members` index into `scores`.
    pub fn new(mut members: Vec<usize>, scores: &[f64]) -> Self {
        members.sort_unstable();
        members.dedup();
        let score = members.iter().map(|&i| scores[i]).sum::<f64>() / members.len() as f64;
        Cluster { members, score }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members.binary_search(&i).is_ok()
    }
}

/// Two-way split of node indices `0..v.len()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bipartition {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    /// The sign split left one side empty and the median split was used.
    pub median_fallback: bool,
}

/// Positive entries go to `a`, the rest (zeros included) to `b`. When that
/// leaves a side empty the split is taken at the lower median of `v` with
/// ties going to `b`. If the median is also the maximum, the entries equal
/// to the maximum form `a`; a constant `v` is split by index halves.
pub fn bipartition(v: &[f64]) -> Bipartition {
    let split = |pred: &dyn Fn(usize) -> bool| -> (Vec<usize>, Vec<usize>) { (0..v.len()).partition(|&i| pred(i)) };
    let (a, b) = split(&|i| v[i] > 0.0);
    if !a.is_empty() && !b.is_empty() || v.len() < 2 {
        return Bipartition {
            a,
            b,
            median_fallback: false,
        };
    }
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[(v.len() - 1) / 2];
    let (mut a, mut b) = split(&|i| v[i] > median);
    if a.is_empty() {
        // the median is the maximum: split the top value off instead
        let max = sorted[v.len() - 1];
        (a, b) = split(&|i| v[i] == max);
    }
    if b.is_empty() {
        let half = v.len() / 2;
        a = (v.len() - half..v.len()).collect();
        b = (0..v.len() - half).collect();
    }
    Bipartition {
        a,
        b,
        median_fallback: true,
    }
}

/// `cut(A,B)/assoc(A,V) + cut(A,B)/assoc(B,V)`; `in_a[i]` marks membership
/// of node `i` in `A`. Infinite when a side is empty.
pub fn normalized_cut(g: &SimilarityGraph, in_a: &[bool]) -> f64 {
    let (mut cut, mut assoc_a, mut assoc_b) = (0.0, 0.0, 0.0);
    for i in 0..g.n {
        for j in 0..g.n {
            let w = g.weight(i, j);
            if in_a[i] {
                assoc_a += w;
            } else {
                assoc_b += w;
            }
            if in_a[i] && !in_a[j] {
                cut += w;
            }
        }
    }
    if assoc_a == 0.0 || assoc_b == 0.0 {
        return f64::INFINITY;
    }
    cut / assoc_a + cut / assoc_b
}
