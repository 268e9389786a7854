use serde::Serialize;

use super::graph::{PairwiseDistances, DEFAULT_SIGMA_SCALE};
use super::laplacian::{fiedler_vector, normalized_laplacian};
use super::partition::{bipartition, Cluster};
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::proposals::ProposalSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterParams {
    /// Stop once at most this many proposals remain.
    pub stop_t: usize,
    pub max_iters: usize,
    pub sigma_scale: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams {
            stop_t: 100,
            max_iters: 50,
            sigma_scale: DEFAULT_SIGMA_SCALE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStep {
    pub size_before: usize,
    pub size_kept: usize,
    pub score_kept: f64,
    pub score_discarded: f64,
    pub sigma: f64,
    pub fiedler_value: f64,
    pub median_fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Size is at most `stop_t`.
    Reached,
    /// All remaining features coincide.
    DegenerateGraph,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub survivors: ProposalSet,
    /// Indices of the survivors in the input set, ascending.
    pub kept: Vec<usize>,
    pub trace: Vec<TraceStep>,
    pub stop: StopReason,
}

/// Which cluster wins: higher mean score, then the one holding the
/// highest-scoring proposal, then `a`.
fn keep_a(a: &Cluster, b: &Cluster, scores: &[f64]) -> bool {
    if a.score != b.score {
        return a.score > b.score;
    }
    let best = |c: &Cluster| c.members.iter().map(|&i| scores[i]).fold(f64::NEG_INFINITY, f64::max);
    best(a) >= best(b)
}

/// Repeated spectral bipartition keeping the higher-scoring cluster until at
/// most `stop_t` proposals remain. Features are aligned with `set` and their
/// pairwise distances are computed once.
pub fn iterate_filter(set: &ProposalSet, features: &[FeatureVector], params: FilterParams) -> Result<FilterOutcome> {
    if features.len() != set.len() {
        return Err(Error::Dimension(format!(
            "{} features for {} proposals",
            features.len(),
            set.len()
        )));
    }
    if params.stop_t < 1 {
        return Err(Error::Input("stop size must be at least 1".into()));
    }
    let mut current: Vec<usize> = (0..set.len()).collect();
    let mut trace = Vec::new();
    let finish = |current: Vec<usize>, trace, stop| FilterOutcome {
        survivors: set.select(&current),
        kept: current,
        trace,
        stop,
    };
    if current.len() <= params.stop_t {
        return Ok(finish(current, trace, StopReason::Reached));
    }
    let distances = PairwiseDistances::new(features)?;
    let all_scores = set.scores();

    for _ in 0..params.max_iters {
        let graph = match distances.graph(&current, params.sigma_scale) {
            Ok(g) => g,
            Err(Error::DegenerateGraph(_)) => return Ok(finish(current, trace, StopReason::DegenerateGraph)),
            Err(e) => return Err(e),
        };
        let fiedler = fiedler_vector(&normalized_laplacian(&graph)?)?;
        let split = bipartition(&fiedler.vector);
        let scores: Vec<f64> = current.iter().map(|&i| all_scores[i]).collect();
        let a = Cluster::new(split.a, &scores);
        let b = Cluster::new(split.b, &scores);
        let (kept, dropped) = if keep_a(&a, &b, &scores) { (a, b) } else { (b, a) };
        trace.push(TraceStep {
            size_before: current.len(),
            size_kept: kept.len(),
            score_kept: kept.score,
            score_discarded: dropped.score,
            sigma: graph.sigma,
            fiedler_value: fiedler.eigenvalue,
            median_fallback: split.median_fallback,
        });
        current = kept.members.iter().map(|&i| current[i]).collect();
        if current.len() <= params.stop_t {
            return Ok(finish(current, trace, StopReason::Reached));
        }
    }
    Ok(finish(current, trace, StopReason::MaxIterations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;
    use crate::proposals::{Provenance, ScoredProposal};
    use crate::BBox;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set_with_scores(scores: &[f64]) -> ProposalSet {
        ProposalSet {
            image_id: "t".into(),
            width: 100,
            height: 100,
            proposals: scores
                .iter()
                .enumerate()
                .map(|(i, &s)| ScoredProposal::new(BBox::new(i as u32 % 90, 0, 10, 10).unwrap(), s))
                .collect(),
            provenance: Provenance::Generated,
            uninformative_objectness: false,
        }
    }

    fn fv(values: Vec<f64>) -> FeatureVector {
        FeatureVector {
            kind: FeatureKind::Hog,
            values,
            empty: false,
        }
    }

    #[test]
    fn small_input_is_returned_unchanged() {
        let set = set_with_scores(&[0.1, 0.2, 0.3]);
        let feats = vec![fv(vec![0.0]), fv(vec![1.0]), fv(vec![2.0])];
        let out = iterate_filter(&set, &feats, FilterParams::default()).unwrap();
        assert_eq!(out.kept, vec![0, 1, 2]);
        assert!(out.trace.is_empty());
        assert_eq!(out.stop, StopReason::Reached);
    }

    #[test]
    fn degenerate_features_stop_cleanly() {
        let set = set_with_scores(&[0.5; 6]);
        let feats = vec![fv(vec![1.0, 1.0]); 6];
        let params = FilterParams {
            stop_t: 2,
            ..FilterParams::default()
        };
        let out = iterate_filter(&set, &feats, params).unwrap();
        assert_eq!(out.stop, StopReason::DegenerateGraph);
        assert_eq!(out.kept.len(), 6);
    }

    #[test]
    fn keeps_higher_scoring_blob() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut feats = Vec::new();
        let mut scores = Vec::new();
        for i in 0..40 {
            let centre = if i < 10 { 0.0 } else { 5.0 };
            feats.push(fv((0..8).map(|_| centre + rng.gen_range(-0.3..0.3)).collect()));
            scores.push(if i < 10 { 0.9 } else { 0.2 });
        }
        let params = FilterParams {
            stop_t: 10,
            ..FilterParams::default()
        };
        let out = iterate_filter(&set_with_scores(&scores), &feats, params).unwrap();
        assert_eq!(out.kept, (0..10).collect::<Vec<_>>());
        assert_eq!(out.trace[0].size_before, 40);
        assert_eq!(out.stop, StopReason::Reached);
    }

    #[test]
    fn tie_goes_to_cluster_with_best_proposal() {
        let scores = [0.2, 0.6, 0.4, 0.4];
        let a = Cluster::new(vec![0, 1], &scores);
        let b = Cluster::new(vec![2, 3], &scores);
        assert_eq!(a.score, b.score);
        assert!(keep_a(&a, &b, &scores));
        assert!(!keep_a(&b, &a, &scores));
        let even = [0.4, 0.4];
        assert!(keep_a(&Cluster::new(vec![0], &even), &Cluster::new(vec![1], &even), &even));
    }

    #[test]
    fn misaligned_features_rejected() {
        let set = set_with_scores(&[0.1, 0.2]);
        assert!(iterate_filter(&set, &[fv(vec![0.0])], FilterParams::default()).is_err());
    }
}
