//! k-NN grouping of surviving proposals in SPM space and fusion of the best
//! groups into one window.

use serde::Serialize;

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::proposals::ProposalSet;
use crate::spectral::{StopReason, TraceStep};

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_TOP_C: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Group {
    pub seed: usize,
    /// The seed first, then its neighbours by descending similarity.
    pub members: Vec<usize>,
    pub score: f64,
}

/// One group per proposal: the seed and its `k - 1` most similar proposals by
/// dot product, ties to the lower index. Group scores are left at zero.
pub fn knn_groups(features: &[FeatureVector], k: usize) -> Result<Vec<Group>> {
    let n = features.len();
    if n < 2 {
        return Err(Error::Input(format!("grouping needs at least 2 proposals, got {n}")));
    }
    if k < 2 {
        return Err(Error::Input(format!("k must be at least 2, got {k}")));
    }
    if let Some(bad) = features.iter().find(|f| f.len() != features[0].len()) {
        return Err(Error::Dimension(format!(
            "feature lengths differ: {} vs {}",
            features[0].len(),
            bad.len()
        )));
    }
    let size = k.min(n);
    let groups = (0..n)
        .map(|seed| {
            let mut others: Vec<(usize, f64)> = (0..n)
                .filter(|&j| j != seed)
                .map(|j| (j, features[seed].dot(&features[j])))
                .collect();
            others.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let mut members = Vec::with_capacity(size);
            members.push(seed);
            members.extend(others.iter().take(size - 1).map(|o| o.0));
            Group {
                seed,
                members,
                score: 0.0,
            }
        })
        .collect();
    Ok(groups)
}

/// `Σ_{j ≥ 2} s_j · f_jᵀ f_seed` over the group's neighbours; the seed's own
/// score does not contribute.
pub fn group_score(group: &Group, scores: &[f64], features: &[FeatureVector]) -> f64 {
    let seed = &features[group.seed];
    group.members[1..]
        .iter()
        .map(|&j| scores[j] * features[j].dot(seed))
        .sum()
}

/// Arithmetic mean of the corners of `boxes`, rounded half-up and clamped to
/// the image.
pub fn corner_mean(boxes: &[BBox], width: u32, height: u32) -> Result<BBox> {
    if boxes.is_empty() {
        return Err(Error::Input("cannot fuse an empty set of boxes".into()));
    }
    let n = boxes.len() as f64;
    let mean = |f: fn(&BBox) -> u32| boxes.iter().map(|b| f(b) as f64).sum::<f64>() / n;
    let round = |v: f64| (v + 0.5).floor().max(0.0) as u32;
    let x1 = round(mean(|b| b.x)).min(width.saturating_sub(1));
    let y1 = round(mean(|b| b.y)).min(height.saturating_sub(1));
    let x2 = round(mean(BBox::x2)).clamp(x1 + 1, width);
    let y2 = round(mean(BBox::y2)).clamp(y1 + 1, height);
    BBox::from_corners(x1, y1, x2, y2)
}

/// Takes the `top_c` highest-scoring groups (ties to the lower seed), unions
/// their members and fuses those boxes by corner mean. Returns the fused box
/// and the chosen groups.
pub fn select_and_fuse(groups: &[Group], survivors: &ProposalSet, top_c: usize) -> Result<(BBox, Vec<Group>)> {
    if groups.is_empty() {
        return Err(Error::Input("no groups to fuse".into()));
    }
    let mut order: Vec<&Group> = groups.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.seed.cmp(&b.seed)));
    let chosen: Vec<Group> = order.into_iter().take(top_c.max(1)).cloned().collect();
    let mut union: Vec<usize> = chosen.iter().flat_map(|g| g.members.iter().copied()).collect();
    union.sort_unstable();
    union.dedup();
    let boxes: Vec<BBox> = union.iter().map(|&i| survivors.proposals[i].bbox).collect();
    Ok((corner_mean(&boxes, survivors.width, survivors.height)?, chosen))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralSummary {
    pub stop: StopReason,
    pub steps: Vec<TraceStep>,
}

#[derive(Debug, Clone)]
pub struct LocalizationResult {
    pub image_id: String,
    pub b_final: BBox,
    pub survivors: ProposalSet,
    pub top_groups: Vec<Group>,
    pub trace: SpectralSummary,
}

/// Groups the survivors, scores the groups and fuses the best ones. With a
/// single survivor its box is the answer and no groups are formed.
pub fn localize_survivors(
    survivors: &ProposalSet,
    spm: &[FeatureVector],
    k: usize,
    top_c: usize,
) -> Result<(BBox, Vec<Group>)> {
    match survivors.len() {
        0 => Err(Error::Input(format!("no proposals survived for {}", survivors.image_id))),
        1 => Ok((survivors.proposals[0].bbox, Vec::new())),
        _ => {
            let scores = survivors.scores();
            let mut groups = knn_groups(spm, k)?;
            for g in &mut groups {
                g.score = group_score(g, &scores, spm);
            }
            select_and_fuse(&groups, survivors, top_c)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;
    use crate::proposals::{Provenance, ScoredProposal};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fv(values: Vec<f64>) -> FeatureVector {
        FeatureVector {
            kind: FeatureKind::Spm,
            values,
            empty: false,
        }
    }

    fn unit(values: Vec<f64>) -> FeatureVector {
        let n = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        fv(values.into_iter().map(|v| v / n).collect())
    }

    fn survivors(boxes: &[BBox], scores: &[f64]) -> ProposalSet {
        ProposalSet {
            image_id: "t".into(),
            width: 100,
            height: 100,
            proposals: boxes.iter().zip(scores).map(|(b, &s)| ScoredProposal::new(*b, s)).collect(),
            provenance: Provenance::Generated,
            uninformative_objectness: false,
        }
    }

    #[test]
    fn groups_clamped_to_survivor_count() {
        let feats = vec![unit(vec![1.0, 0.0]), unit(vec![0.0, 1.0]), unit(vec![1.0, 1.0])];
        let groups = knn_groups(&feats, 10).unwrap();
        assert_eq!(groups.len(), 3);
        assert!(groups.iter().all(|g| g.members.len() == 3));
        assert_eq!(groups[0].members, vec![0, 2, 1]);
    }

    #[test]
    fn duplicate_is_first_neighbour() {
        let feats = vec![
            unit(vec![1.0, 2.0, 0.0]),
            unit(vec![0.0, 1.0, 1.0]),
            unit(vec![1.0, 2.0, 0.0]),
            unit(vec![1.0, 1.9, 0.1]),
        ];
        let groups = knn_groups(&feats, 2).unwrap();
        assert_eq!(groups[0].members, vec![0, 2]);
        assert_eq!(groups[2].members, vec![2, 0]);
    }

    #[test]
    fn ranking_matches_sorted_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let feats: Vec<_> = (0..50).map(|_| unit((0..16).map(|_| rng.gen::<f64>()).collect())).collect();
        let groups = knn_groups(&feats, 10).unwrap();
        for g in &groups {
            let mut sims: Vec<(f64, usize)> = (0..50)
                .filter(|&j| j != g.seed)
                .map(|j| {
                    let d: f64 = feats[g.seed].values.iter().zip(&feats[j].values).map(|(a, b)| a * b).sum();
                    (d, j)
                })
                .collect();
            sims.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let expected: Vec<usize> = std::iter::once(g.seed).chain(sims.iter().take(9).map(|s| s.1)).collect();
            assert_eq!(g.members, expected);
        }
    }

    #[test]
    fn knn_rejects_bad_input() {
        assert!(knn_groups(&[unit(vec![1.0])], 10).is_err());
        assert!(knn_groups(&[unit(vec![1.0]), unit(vec![1.0])], 1).is_err());
    }

    #[test]
    fn score_hand_example() {
        // seed 0 with neighbours 1 (s 0.5, dot 1.0) and 2 (s 0.2, dot 0.5)
        let s3 = 3f64.sqrt() / 2.0;
        let feats = vec![fv(vec![1.0, 0.0]), fv(vec![1.0, 0.0]), fv(vec![0.5, s3])];
        let g = Group {
            seed: 0,
            members: vec![0, 1, 2],
            score: 0.0,
        };
        let s = [0.9, 0.5, 0.2];
        assert!((group_score(&g, &s, &feats) - 0.6).abs() < 1e-15);
        assert_eq!(group_score(&g, &[0.9, 0.0, 0.0], &feats), 0.0);
        let reordered = Group {
            members: vec![0, 2, 1],
            ..g.clone()
        };
        assert_eq!(group_score(&reordered, &s, &feats), group_score(&g, &s, &feats));
    }

    #[test]
    fn fuse_two_boxes() {
        let boxes = [BBox::new(0, 0, 10, 10).unwrap(), BBox::new(10, 10, 10, 10).unwrap()];
        let set = survivors(&boxes, &[0.5, 0.5]);
        let g = Group {
            seed: 0,
            members: vec![0, 1],
            score: 1.0,
        };
        let (b, chosen) = select_and_fuse(&[g], &set, 5).unwrap();
        assert_eq!(b, BBox::new(5, 5, 10, 10).unwrap());
        assert_eq!(chosen.len(), 1);
    }

    #[test]
    fn fuse_identical_boxes() {
        let b = BBox::new(12, 7, 30, 41).unwrap();
        let set = survivors(&[b, b, b], &[0.1, 0.2, 0.3]);
        let g = Group {
            seed: 1,
            members: vec![1, 0, 2],
            score: 0.3,
        };
        assert_eq!(select_and_fuse(&[g], &set, 5).unwrap().0, b);
    }

    #[test]
    fn fuse_rounds_half_up() {
        let boxes = [BBox::new(0, 0, 10, 10).unwrap(), BBox::new(1, 1, 10, 10).unwrap()];
        // x1 mean 0.5 -> 1, x2 mean 10.5 -> 11
        assert_eq!(corner_mean(&boxes, 100, 100).unwrap(), BBox::new(1, 1, 10, 10).unwrap());
    }

    #[test]
    fn top_c_ties_go_to_lower_seed() {
        let boxes: Vec<BBox> = (0..3).map(|i| BBox::new(i * 20, 0, 10, 10).unwrap()).collect();
        let set = survivors(&boxes, &[0.1, 0.1, 0.1]);
        let groups: Vec<Group> = (0..3)
            .map(|i| Group {
                seed: i,
                members: vec![i],
                score: if i == 0 { 0.1 } else { 0.5 },
            })
            .collect();
        let (b, chosen) = select_and_fuse(&groups, &set, 1).unwrap();
        assert_eq!(chosen[0].seed, 1);
        assert_eq!(b, boxes[1]);
    }

    #[test]
    fn single_survivor_skips_grouping() {
        let b = BBox::new(3, 4, 5, 6).unwrap();
        let set = survivors(&[b], &[0.7]);
        let (fused, groups) = localize_survivors(&set, &[unit(vec![1.0])], 10, 5).unwrap();
        assert_eq!(fused, b);
        assert!(groups.is_empty());
    }

    fn instance() -> impl Strategy<Value = (Vec<BBox>, Vec<f64>, Vec<Vec<f64>>)> {
        (3usize..15).prop_flat_map(|n| {
            (
                prop::collection::vec((0u32..80, 0u32..80, 1u32..20, 1u32..20), n),
                prop::collection::vec(0.0f64..1.0, n),
                prop::collection::vec(prop::collection::vec(0.0f64..1.0, 6), n),
            )
                .prop_map(|(b, s, f)| {
                    let boxes = b.into_iter().map(|(x, y, w, h)| BBox::new(x, y, w, h).unwrap()).collect();
                    (boxes, s, f)
                })
        })
    }

    proptest! {
        #[test]
        fn scaling_scores_keeps_the_window((boxes, scores, raw) in instance(), c in 0.01f64..100.0) {
            prop_assume!(raw.iter().all(|v| v.iter().any(|&x| x > 0.0)));
            let feats: Vec<_> = raw.into_iter().map(unit).collect();
            let scaled: Vec<f64> = scores.iter().map(|s| s * c).collect();
            let a = localize_survivors(&survivors(&boxes, &scores), &feats, 4, 2).unwrap();
            let b = localize_survivors(&survivors(&boxes, &scaled), &feats, 4, 2).unwrap();
            prop_assert_eq!(a.0, b.0);
            for (ga, gb) in a.1.iter().zip(&b.1) {
                prop_assert_eq!(ga.seed, gb.seed);
                prop_assert!(ga.score >= 0.0);
                prop_assert!((gb.score - c * ga.score).abs() <= 1e-9 * gb.score.max(1e-12));
            }
        }

        #[test]
        fn fused_corners_within_extremes(b in prop::collection::vec((0u32..80, 0u32..80, 1u32..20, 1u32..20), 1..10)) {
            let boxes: Vec<BBox> = b.into_iter().map(|(x, y, w, h)| BBox::new(x, y, w, h).unwrap()).collect();
            let f = corner_mean(&boxes, 100, 100).unwrap();
            let lo = |g: fn(&BBox) -> u32| boxes.iter().map(g).min().unwrap();
            let hi = |g: fn(&BBox) -> u32| boxes.iter().map(g).max().unwrap();
            prop_assert!(lo(|b| b.x) <= f.x && f.x <= hi(|b| b.x));
            prop_assert!(lo(|b| b.y) <= f.y && f.y <= hi(|b| b.y));
            prop_assert!(lo(BBox::x2) <= f.x2() && f.x2() <= hi(BBox::x2));
            prop_assert!(lo(BBox::y2) <= f.y2() && f.y2() <= hi(BBox::y2));
        }
    }
}
