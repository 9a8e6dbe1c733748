//! Retrieval evaluation (mAP, CMC rank-k) under re-ID conventions, plus
//! pseudo-label purity diagnostics against withheld ground truth.

use ndarray::Array1;

use crate::clustering::PseudoLabels;
use crate::error::{Error, Result};

/// One query or gallery element.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalItem {
    pub feature: Array1<f64>,
    pub identity: u32,
    pub camera: u32,
}

fn cosine(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let na = a.dot(a).sqrt();
    let nb = b.dot(b).sqrt();
    if na < 1e-300 || nb < 1e-300 {
        return 0.0;
    }
    a.dot(b) / (na * nb)
}

/// Gallery indices ranked by descending cosine similarity to the query, ties
/// broken by ascending gallery index, after removing same-identity
/// same-camera entries. Second element: relevance flag per ranked entry.
fn ranked_relevance(
    query_feature: &Array1<f64>,
    gallery: &[RetrievalItem],
    query_identity: u32,
    query_camera: u32,
) -> Vec<bool> {
    let mut order: Vec<usize> = (0..gallery.len())
        .filter(|&i| !(gallery[i].identity == query_identity && gallery[i].camera == query_camera))
        .collect();
    let sims: Vec<f64> = gallery
        .iter()
        .map(|g| cosine(query_feature, &g.feature))
        .collect();
    order.sort_by(|&a, &b| {
        sims[b]
            .partial_cmp(&sims[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
        .into_iter()
        .map(|i| gallery[i].identity == query_identity)
        .collect()
}

/// Average precision for one query, or None when no relevant gallery entry
/// survives the exclusion rule (the query should be skipped).
pub fn average_precision(
    query_feature: &Array1<f64>,
    gallery: &[RetrievalItem],
    query_identity: u32,
    query_camera: u32,
) -> Option<f64> {
    let rel = ranked_relevance(query_feature, gallery, query_identity, query_camera);
    let total: usize = rel.iter().filter(|&&r| r).count();
    if total == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut ap = 0.0;
    for (k, &r) in rel.iter().enumerate() {
        if r {
            hits += 1;
            ap += hits as f64 / (k + 1) as f64;
        }
    }
    Some(ap / total as f64)
}

/// Summary of a retrieval evaluation; `skipped` counts queries with no valid
/// relevant gallery entry.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub map: f64,
    pub cmc: Vec<(usize, f64)>,
    pub evaluated: usize,
    pub skipped: usize,
}

pub fn mean_ap(queries: &[RetrievalItem], gallery: &[RetrievalItem]) -> Result<f64> {
    Ok(evaluate(queries, gallery, &[1])?.map)
}

pub fn cmc(queries: &[RetrievalItem], gallery: &[RetrievalItem], k: usize) -> Result<f64> {
    Ok(evaluate(queries, gallery, &[k])?.cmc[0].1)
}

/// mAP plus CMC@k for each requested k, in one pass over the queries.
pub fn evaluate(
    queries: &[RetrievalItem],
    gallery: &[RetrievalItem],
    ks: &[usize],
) -> Result<EvalSummary> {
    if queries.is_empty() {
        return Err(Error::Domain("evaluate: no queries".into()));
    }
    let mut ap_sum = 0.0;
    let mut cmc_hits = vec![0usize; ks.len()];
    let mut evaluated = 0usize;
    let mut skipped = 0usize;
    for q in queries {
        let rel = ranked_relevance(&q.feature, gallery, q.identity, q.camera);
        if !rel.iter().any(|&r| r) {
            skipped += 1;
            continue;
        }
        evaluated += 1;
        let mut hits = 0usize;
        let mut ap = 0.0;
        let mut total = 0usize;
        for (pos, &r) in rel.iter().enumerate() {
            if r {
                hits += 1;
                total += 1;
                ap += hits as f64 / (pos + 1) as f64;
            }
        }
        ap_sum += ap / total as f64;
        let first_hit = rel.iter().position(|&r| r).unwrap();
        for (ki, &k) in ks.iter().enumerate() {
            if first_hit < k {
                cmc_hits[ki] += 1;
            }
        }
    }
    if evaluated == 0 {
        return Err(Error::Degenerate("evaluate: every query was skipped".into()));
    }
    Ok(EvalSummary {
        map: ap_sum / evaluated as f64,
        cmc: ks
            .iter()
            .zip(&cmc_hits)
            .map(|(&k, &h)| (k, h as f64 / evaluated as f64))
            .collect(),
        evaluated,
        skipped,
    })
}

/// Per-query AP rows for debugging; skipped queries get an empty AP field.
pub fn per_query_csv(queries: &[RetrievalItem], gallery: &[RetrievalItem]) -> String {
    let mut out = String::from("query,identity,camera,ap\n");
    for (i, q) in queries.iter().enumerate() {
        match average_precision(&q.feature, gallery, q.identity, q.camera) {
            Some(ap) => out.push_str(&format!("{i},{},{},{ap:.6}\n", q.identity, q.camera)),
            None => out.push_str(&format!("{i},{},{},\n", q.identity, q.camera)),
        }
    }
    out
}

/// Fraction of samples whose pseudo-class majority truth-identity they share:
/// sum over pseudo-classes of the max truth count, divided by N.
pub fn pseudo_label_purity(pseudo: &PseudoLabels, truth: &[u32]) -> Result<f64> {
    if pseudo.labels.len() != truth.len() {
        return Err(Error::Shape(
            "pseudo_label_purity: pseudo/truth length mismatch".into(),
        ));
    }
    if truth.is_empty() {
        return Err(Error::Domain("pseudo_label_purity: empty input".into()));
    }
    let mut per_class: std::collections::BTreeMap<u32, std::collections::BTreeMap<u32, usize>> =
        std::collections::BTreeMap::new();
    for (&p, &t) in pseudo.labels.iter().zip(truth) {
        *per_class.entry(p).or_default().entry(t).or_default() += 1;
    }
    let pure: usize = per_class
        .values()
        .map(|counts| counts.values().copied().max().unwrap_or(0))
        .sum();
    Ok(pure as f64 / truth.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn item(feature: Array1<f64>, identity: u32, camera: u32) -> RetrievalItem {
        RetrievalItem {
            feature,
            identity,
            camera,
        }
    }

    #[test]
    fn single_relevant_ranked_first() {
        let gallery = vec![
            item(array![1.0, 0.0], 7, 1),
            item(array![0.0, 1.0], 8, 1),
        ];
        let ap = average_precision(&array![1.0, 0.0], &gallery, 7, 0).unwrap();
        assert_eq!(ap, 1.0);
    }

    #[test]
    fn single_relevant_ranked_second() {
        let gallery = vec![
            item(array![1.0, 0.0], 8, 1),
            item(array![0.0, 1.0], 7, 1),
        ];
        let ap = average_precision(&array![1.0, 0.0], &gallery, 7, 0).unwrap();
        assert_eq!(ap, 0.5);
    }

    #[test]
    fn same_camera_entries_are_excluded() {
        // The only same-identity entry shares the query camera -> skip.
        let gallery = vec![
            item(array![1.0, 0.0], 7, 0),
            item(array![0.0, 1.0], 8, 1),
        ];
        assert!(average_precision(&array![1.0, 0.0], &gallery, 7, 0).is_none());
    }

    #[test]
    fn ties_break_by_gallery_index() {
        // Both entries identical to the query; the relevant one sits at index 1,
        // so it ranks second and AP = 0.5.
        let gallery = vec![
            item(array![1.0, 0.0], 8, 1),
            item(array![1.0, 0.0], 7, 1),
        ];
        let ap = average_precision(&array![1.0, 0.0], &gallery, 7, 0).unwrap();
        assert_eq!(ap, 0.5);
    }

    /// Definition-level AP: enumerate relevant positions in the ranking.
    fn ap_oracle(
        query: &Array1<f64>,
        gallery: &[RetrievalItem],
        identity: u32,
        camera: u32,
    ) -> Option<f64> {
        let mut entries: Vec<(usize, f64, bool)> = gallery
            .iter()
            .enumerate()
            .filter(|(_, g)| !(g.identity == identity && g.camera == camera))
            .map(|(i, g)| (i, cosine(query, &g.feature), g.identity == identity))
            .collect();
        entries.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let total = entries.iter().filter(|e| e.2).count();
        if total == 0 {
            return None;
        }
        let mut hits = 0;
        let mut acc = 0.0;
        for (pos, e) in entries.iter().enumerate() {
            if e.2 {
                hits += 1;
                acc += hits as f64 / (pos + 1) as f64;
            }
        }
        Some(acc / total as f64)
    }

    fn random_items(n: usize, ids: u32, cams: u32, rng: &mut ChaCha8Rng) -> Vec<RetrievalItem> {
        (0..n)
            .map(|_| {
                item(
                    array![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                    rng.random_range(0..ids),
                    rng.random_range(0..cams),
                )
            })
            .collect()
    }

    #[test]
    fn ap_matches_bruteforce_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for _ in 0..50 {
            let gallery = random_items(10, 4, 2, &mut rng);
            let q = random_items(1, 4, 2, &mut rng).pop().unwrap();
            let got = average_precision(&q.feature, &gallery, q.identity, q.camera);
            let want = ap_oracle(&q.feature, &gallery, q.identity, q.camera);
            match (got, want) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12),
                (None, None) => {}
                other => panic!("skip disagreement: {other:?}"),
            }
        }
    }

    #[test]
    fn perfect_embedding_scores_one() {
        // One-hot feature per identity, two cameras each.
        let mut gallery = Vec::new();
        let mut queries = Vec::new();
        for id in 0..4u32 {
            let mut f = Array1::zeros(4);
            f[id as usize] = 1.0;
            gallery.push(item(f.clone(), id, 0));
            gallery.push(item(f.clone(), id, 1));
            queries.push(item(f, id, 2));
        }
        let s = evaluate(&queries, &gallery, &[1, 5]).unwrap();
        assert_eq!(s.map, 1.0);
        assert_eq!(s.cmc[0].1, 1.0);
        assert_eq!(s.skipped, 0);
    }

    #[test]
    fn cmc_monotone_and_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let gallery = random_items(20, 5, 2, &mut rng);
        let queries = random_items(8, 5, 2, &mut rng);
        let s = evaluate(&queries, &gallery, &[1, 2, 5, 10, 20]).unwrap();
        for w in s.cmc.windows(2) {
            assert!(w[0].1 <= w[1].1, "CMC must be non-decreasing in k");
        }
        // Scaling all features by a positive constant changes nothing.
        let scale = |items: &[RetrievalItem]| -> Vec<RetrievalItem> {
            items
                .iter()
                .map(|i| item(i.feature.mapv(|v| v * 17.5), i.identity, i.camera))
                .collect()
        };
        let s2 = evaluate(&scale(&queries), &scale(&gallery), &[1, 2, 5, 10, 20]).unwrap();
        assert_eq!(s.map, s2.map);
        assert_eq!(s.cmc, s2.cmc);
    }

    #[test]
    fn all_queries_skipped_is_an_error() {
        let gallery = vec![item(array![1.0, 0.0], 3, 0)];
        let queries = vec![item(array![1.0, 0.0], 3, 0)]; // same id + camera: excluded
        assert!(evaluate(&queries, &gallery, &[1]).is_err());
    }

    #[test]
    fn purity_perfect_up_to_relabeling() {
        let pseudo = PseudoLabels {
            labels: vec![2, 2, 0, 0, 1],
            num_clusters: 3,
            num_outliers: 0,
        };
        let truth = [5u32, 5, 9, 9, 7];
        assert_eq!(pseudo_label_purity(&pseudo, &truth).unwrap(), 1.0);
    }

    #[test]
    fn purity_single_cluster_two_truths() {
        let pseudo = PseudoLabels {
            labels: vec![0, 0, 0, 0],
            num_clusters: 1,
            num_outliers: 0,
        };
        assert_eq!(pseudo_label_purity(&pseudo, &[1, 1, 2, 2]).unwrap(), 0.5);
    }

    #[test]
    fn purity_matches_counting_oracle_and_relabeling_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..20 {
            let n = rng.random_range(4..30);
            let labels: Vec<u32> = (0..n).map(|_| rng.random_range(0..5)).collect();
            let truth: Vec<u32> = (0..n).map(|_| rng.random_range(0..4)).collect();
            let pseudo = PseudoLabels {
                labels: labels.clone(),
                num_clusters: 5,
                num_outliers: 0,
            };
            // Direct counting oracle.
            let mut pure = 0usize;
            for c in 0..5u32 {
                let mut best = 0;
                for t in 0..4u32 {
                    let count = labels
                        .iter()
                        .zip(&truth)
                        .filter(|&(&l, &tr)| l == c && tr == t)
                        .count();
                    best = best.max(count);
                }
                pure += best;
            }
            let got = pseudo_label_purity(&pseudo, &truth).unwrap();
            assert!((got - pure as f64 / n as f64).abs() < 1e-15);

            // Permute pseudo ids: purity unchanged.
            let perm = [3u32, 0, 4, 1, 2];
            let relabeled = PseudoLabels {
                labels: labels.iter().map(|&l| perm[l as usize]).collect(),
                num_clusters: 5,
                num_outliers: 0,
            };
            assert_eq!(got, pseudo_label_purity(&relabeled, &truth).unwrap());
        }
    }

    #[test]
    fn purity_rejects_length_mismatch() {
        let pseudo = PseudoLabels {
            labels: vec![0],
            num_clusters: 1,
            num_outliers: 0,
        };
        assert!(pseudo_label_purity(&pseudo, &[0, 1]).is_err());
    }
}
