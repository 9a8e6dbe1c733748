//! DBSCAN over L2-normalized features, shrink/enlarge stability analysis,
//! reliability criteria with dynamic thresholds, and pseudo-label assignment
//! with singleton outliers.

use std::collections::VecDeque;

use ndarray::Array1;

use crate::error::{Error, Result};

/// Cluster label for points that are density-unreachable.
pub const NOISE: i32 = -1;
const UNVISITED: i32 = -2;

/// DBSCAN output: per-point cluster id (>= 0) or [`NOISE`], cluster ids
/// contiguous from 0 in order of cluster creation.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub labels: Vec<i32>,
    pub eps: f64,
    pub min_pts: usize,
}

impl ClusterAssignment {
    pub fn num_clusters(&self) -> usize {
        self.labels.iter().filter(|&&l| l >= 0).map(|&l| l + 1).max().unwrap_or(0) as usize
    }

    /// Member index sets per cluster, each sorted ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_clusters()];
        for (i, &l) in self.labels.iter().enumerate() {
            if l >= 0 {
                out[l as usize].push(i);
            }
        }
        out
    }
}

/// Per-point reliability numbers from the shrink/enlarge comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct PointReliability {
    pub ratio_shrink: f64,
    pub ratio_enlarge: f64,
    pub c1: f64,
    pub c2: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityReport {
    pub points: Vec<PointReliability>,
    pub eta1: f64,
    pub eta2: f64,
    pub eps: f64,
}

/// Final per-sample pseudo-labels in [0, num_clusters + num_outliers).
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabels {
    pub labels: Vec<u32>,
    /// M_c: reliable clusters that kept at least one member.
    pub num_clusters: usize,
    /// M_o: singleton outliers.
    pub num_outliers: usize,
}

impl PseudoLabels {
    pub fn num_classes(&self) -> usize {
        self.num_clusters + self.num_outliers
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterConfig {
    /// Base DBSCAN radius; None selects the mean k-th-neighbor heuristic.
    pub eps: Option<f64>,
    pub shrink_factor: f64,
    pub enlarge_factor: f64,
    pub min_pts: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            eps: None,
            shrink_factor: 0.9,
            enlarge_factor: 1.1,
            min_pts: 4,
        }
    }
}

/// Full pairwise Euclidean distance matrix, optionally computed on
/// `threads` worker threads (row-block split, deterministic result).
pub fn pairwise_distances(features: &[Array1<f64>], threads: usize) -> Vec<Vec<f64>> {
    let n = features.len();
    let fill_rows = |rows: &mut [Vec<f64>], start: usize| {
        for (off, row) in rows.iter_mut().enumerate() {
            let i = start + off;
            for j in 0..n {
                let d = &features[i] - &features[j];
                row[j] = d.dot(&d).sqrt();
            }
        }
    };
    let mut dists = vec![vec![0.0; n]; n];
    if threads <= 1 || n < 64 {
        fill_rows(&mut dists, 0);
        return dists;
    }
    let chunk = n.div_ceil(threads);
    std::thread::scope(|scope| {
        for (bi, block) in dists.chunks_mut(chunk).enumerate() {
            scope.spawn(move || fill_rows(block, bi * chunk));
        }
    });
    dists
}

/// Standard DBSCAN over a precomputed distance matrix. A point is core when
/// at least `min_pts` points (itself included) lie within `eps`. Border
/// points join the earliest-created cluster that reaches them; points are
/// scanned in ascending index order.
pub fn dbscan_with_distances(
    dists: &[Vec<f64>],
    eps: f64,
    min_pts: usize,
) -> Result<ClusterAssignment> {
    if eps <= 0.0 {
        return Err(Error::Domain("dbscan: eps must be > 0".into()));
    }
    if min_pts < 1 {
        return Err(Error::Domain("dbscan: min_pts must be >= 1".into()));
    }
    let n = dists.len();
    let neighbors = |i: usize| -> Vec<usize> {
        (0..n).filter(|&j| dists[i][j] <= eps).collect()
    };
    let mut labels = vec![UNVISITED; n];
    let mut cluster_id: i32 = 0;
    for i in 0..n {
        if labels[i] != UNVISITED {
            continue;
        }
        let nbrs = neighbors(i);
        if nbrs.len() < min_pts {
            labels[i] = NOISE;
            continue;
        }
        labels[i] = cluster_id;
        let mut queue: VecDeque<usize> = nbrs.into_iter().collect();
        while let Some(q) = queue.pop_front() {
            if labels[q] == NOISE {
                labels[q] = cluster_id; // border point
            }
            if labels[q] != UNVISITED {
                continue;
            }
            labels[q] = cluster_id;
            let qn = neighbors(q);
            if qn.len() >= min_pts {
                queue.extend(qn);
            }
        }
        cluster_id += 1;
    }
    Ok(ClusterAssignment {
        labels,
        eps,
        min_pts,
    })
}

pub fn dbscan(features: &[Array1<f64>], eps: f64, min_pts: usize) -> Result<ClusterAssignment> {
    if features.is_empty() {
        return Err(Error::Domain("dbscan: empty feature set".into()));
    }
    let dists = pairwise_distances(features, 1);
    dbscan_with_distances(&dists, eps, min_pts)
}

/// Jaccard overlap |a & b| / |a | b| on sorted index sets.
pub fn overlap_ratio(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.is_empty() && b.is_empty() {
        return Err(Error::Domain("overlap_ratio: both sets empty".into()));
    }
    let mut inter = 0usize;
    let (mut i, mut j) = (0usize, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    Ok(inter as f64 / union as f64)
}

/// The cluster containing point `i`, with noise defined as the singleton {i}.
fn cluster_of(assignment: &ClusterAssignment, members: &[Vec<usize>], i: usize) -> Vec<usize> {
    match assignment.labels[i] {
        l if l >= 0 => members[l as usize].clone(),
        _ => vec![i],
    }
}

/// Jaccard ratios between each point's cluster at `eps` and its clusters at
/// the shrunk and enlarged radii.
pub fn stability_ratios_with_distances(
    dists: &[Vec<f64>],
    eps: f64,
    eps_shrink: f64,
    eps_enlarge: f64,
    min_pts: usize,
) -> Result<Vec<(f64, f64)>> {
    if !(eps_shrink < eps && eps < eps_enlarge) {
        return Err(Error::Domain(format!(
            "stability_ratios: need eps_shrink < eps < eps_enlarge, got {eps_shrink} {eps} {eps_enlarge}"
        )));
    }
    let base = dbscan_with_distances(dists, eps, min_pts)?;
    let shrunk = dbscan_with_distances(dists, eps_shrink, min_pts)?;
    let enlarged = dbscan_with_distances(dists, eps_enlarge, min_pts)?;
    let (mb, ms, me) = (base.members(), shrunk.members(), enlarged.members());
    let n = dists.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let gamma = cluster_of(&base, &mb, i);
        let gamma_s = cluster_of(&shrunk, &ms, i);
        let gamma_e = cluster_of(&enlarged, &me, i);
        out.push((overlap_ratio(&gamma, &gamma_s)?, overlap_ratio(&gamma, &gamma_e)?));
    }
    Ok(out)
}

pub fn stability_ratios(
    features: &[Array1<f64>],
    eps: f64,
    eps_shrink: f64,
    eps_enlarge: f64,
    min_pts: usize,
) -> Result<Vec<(f64, f64)>> {
    let dists = pairwise_distances(features, 1);
    stability_ratios_with_distances(&dists, eps, eps_shrink, eps_enlarge, min_pts)
}

/// Dynamic thresholds: eta1 = q + m, eta2 = q - m, where q is the
/// nearest-rank 90th percentile of the first-epoch shrink ratios and m is the
/// maximum of the current epoch's enlarge ratios. eta2 may be negative.
pub fn compute_thresholds(
    first_epoch_shrink_ratios: &[f64],
    current_epoch_enlarge_ratios: &[f64],
) -> Result<(f64, f64)> {
    if first_epoch_shrink_ratios.is_empty() || current_epoch_enlarge_ratios.is_empty() {
        return Err(Error::Domain("compute_thresholds: empty input".into()));
    }
    let mut sorted = first_epoch_shrink_ratios.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let rank = ((0.9 * n as f64).ceil() as usize).clamp(1, n);
    let q = sorted[rank - 1];
    let m = current_epoch_enlarge_ratios
        .iter()
        .cloned()
        .fold(f64::MIN, f64::max);
    Ok((q + m, q - m))
}

/// Mean distance to each point's `min_pts`-th nearest neighbor (self excluded).
pub fn eps_heuristic(dists: &[Vec<f64>], min_pts: usize) -> f64 {
    let n = dists.len();
    let k = min_pts.min(n.saturating_sub(1)).max(1);
    let mut acc = 0.0;
    for (i, row) in dists.iter().enumerate() {
        let mut others: Vec<f64> = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &d)| d)
            .collect();
        others.sort_by(|a, b| a.partial_cmp(b).unwrap());
        acc += others[k - 1];
    }
    acc / n as f64
}

/// Clusters the features, scores per-point reliability, and assigns
/// pseudo-labels: accepted clustered points keep their cluster's label,
/// everything else becomes a fresh singleton class.
///
/// `cached_first_epoch_shrink_ratios` must be the shrink ratios recorded at
/// the first epoch (pass the current report's ratios back on epoch 0).
/// With `apply_criteria = false` the reliability filter is skipped and every
/// clustered point keeps its cluster label.
pub fn generate_pseudo_labels(
    features: &[Array1<f64>],
    config: &ClusterConfig,
    cached_first_epoch_shrink_ratios: Option<&[f64]>,
    apply_criteria: bool,
    threads: usize,
) -> Result<(PseudoLabels, ReliabilityReport)> {
    if features.is_empty() {
        return Err(Error::Domain("generate_pseudo_labels: empty feature set".into()));
    }
    if !(config.shrink_factor > 0.0 && config.shrink_factor < 1.0 && config.enlarge_factor > 1.0) {
        return Err(Error::Domain(
            "generate_pseudo_labels: need 0 < shrink_factor < 1 < enlarge_factor".into(),
        ));
    }
    let dists = pairwise_distances(features, threads);
    let eps = match config.eps {
        Some(e) if e > 0.0 => e,
        Some(_) => return Err(Error::Domain("eps must be > 0".into())),
        None => eps_heuristic(&dists, config.min_pts).max(1e-9),
    };
    let assignment = dbscan_with_distances(&dists, eps, config.min_pts)?;
    let ratios = stability_ratios_with_distances(
        &dists,
        eps,
        eps * config.shrink_factor,
        eps * config.enlarge_factor,
        config.min_pts,
    )?;
    let shrink_now: Vec<f64> = ratios.iter().map(|r| r.0).collect();
    let enlarge_now: Vec<f64> = ratios.iter().map(|r| r.1).collect();
    let first_shrink = cached_first_epoch_shrink_ratios.unwrap_or(&shrink_now);
    let (eta1, eta2) = compute_thresholds(first_shrink, &enlarge_now)?;

    let n = features.len();
    let mut points = Vec::with_capacity(n);
    for &(rs, re) in &ratios {
        let c1 = (rs + re - eta1).max(0.0);
        let c2 = (rs - re - eta2).max(0.0);
        points.push(PointReliability {
            ratio_shrink: rs,
            ratio_enlarge: re,
            c1,
            c2,
            accepted: c1 > 0.0 && c2 > 0.0,
        });
    }

    // Accepted clustered points keep their cluster; clusters emptied by the
    // filter contribute nothing to M_c.
    let keeps_cluster = |i: usize| -> bool {
        assignment.labels[i] >= 0 && (!apply_criteria || points[i].accepted)
    };
    let mut cluster_remap = vec![None; assignment.num_clusters()];
    let mut next_label = 0u32;
    for i in 0..n {
        if keeps_cluster(i) {
            let c = assignment.labels[i] as usize;
            if cluster_remap[c].is_none() {
                cluster_remap[c] = Some(next_label);
                next_label += 1;
            }
        }
    }
    let num_clusters = next_label as usize;
    let mut labels = vec![0u32; n];
    let mut num_outliers = 0usize;
    for i in 0..n {
        if keeps_cluster(i) {
            labels[i] = cluster_remap[assignment.labels[i] as usize].unwrap();
        } else {
            labels[i] = (num_clusters + num_outliers) as u32;
            num_outliers += 1;
        }
    }
    Ok((
        PseudoLabels {
            labels,
            num_clusters,
            num_outliers,
        },
        ReliabilityReport {
            points,
            eta1,
            eta2,
            eps,
        },
    ))
}

/// CSV dump of the reliability report for ablation analysis.
pub fn report_to_csv(report: &ReliabilityReport) -> String {
    let mut out = String::from("point,ratio_shrink,ratio_enlarge,c1,c2,accepted\n");
    for (i, p) in report.points.iter().enumerate() {
        out.push_str(&format!(
            "{i},{:.6},{:.6},{:.6},{:.6},{}\n",
            p.ratio_shrink, p.ratio_enlarge, p.c1, p.c2, p.accepted as u8
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn points2d(pts: &[[f64; 2]]) -> Vec<Array1<f64>> {
        pts.iter().map(|p| array![p[0], p[1]]).collect()
    }

    #[test]
    fn two_separated_pairs_form_two_clusters() {
        let feats = points2d(&[[0.0, 0.0], [0.01, 0.0], [5.0, 5.0], [5.01, 5.0]]);
        let a = dbscan(&feats, 0.1, 2).unwrap();
        assert_eq!(a.labels, vec![0, 0, 1, 1]);
    }

    #[test]
    fn isolated_point_is_noise() {
        let feats = points2d(&[[0.0, 0.0], [0.01, 0.0], [9.0, 9.0]]);
        let a = dbscan(&feats, 0.1, 2).unwrap();
        assert_eq!(a.labels[2], NOISE);
    }

    #[test]
    fn dbscan_rejects_bad_params() {
        let feats = points2d(&[[0.0, 0.0]]);
        assert!(dbscan(&feats, 0.0, 2).is_err());
        assert!(dbscan(&feats, 1.0, 0).is_err());
    }

    #[test]
    fn overlap_ratio_cases() {
        assert_eq!(overlap_ratio(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(overlap_ratio(&[1, 2], &[3, 4]).unwrap(), 0.0);
        assert_eq!(overlap_ratio(&[1, 2, 3], &[2, 3, 4]).unwrap(), 0.5);
        assert!(overlap_ratio(&[], &[]).is_err());
    }

    #[test]
    fn stability_all_stable_gives_ones() {
        let feats = points2d(&[[0.0, 0.0], [0.05, 0.0], [5.0, 5.0], [5.05, 5.0]]);
        let ratios = stability_ratios(&feats, 0.5, 0.4, 0.6, 2).unwrap();
        for (rs, re) in ratios {
            assert_eq!((rs, re), (1.0, 1.0));
        }
    }

    #[test]
    fn shrink_isolation_gives_one_over_m() {
        // Chain 0-1-2 with spacing 0.5: clustered at eps=0.6, but at
        // eps_shrink=0.3 all three fall apart (m = 3 -> ratio 1/3 for each).
        let feats = points2d(&[[0.0, 0.0], [0.5, 0.0], [1.0, 0.0], [9.0, 9.0], [9.05, 9.0]]);
        let ratios = stability_ratios(&feats, 0.6, 0.3, 0.7, 2).unwrap();
        for i in 0..3 {
            assert!((ratios[i].0 - 1.0 / 3.0).abs() < 1e-12, "point {i}");
        }
    }

    #[test]
    fn enlarge_merge_gives_size_fraction() {
        // Two pairs 1.0 apart merge at eps_enlarge=1.2: ratio_enlarge = 2/4.
        let feats = points2d(&[[0.0, 0.0], [0.1, 0.0], [1.0, 0.0], [1.1, 0.0]]);
        let ratios = stability_ratios(&feats, 0.5, 0.2, 1.2, 2).unwrap();
        for (i, (_, re)) in ratios.iter().enumerate() {
            assert!((re - 0.5).abs() < 1e-12, "point {i}: {re}");
        }
    }

    #[test]
    fn stability_rejects_bad_radius_order() {
        let feats = points2d(&[[0.0, 0.0], [1.0, 1.0]]);
        assert!(stability_ratios(&feats, 0.5, 0.6, 0.7, 2).is_err());
    }

    #[test]
    fn thresholds_degenerate_stability() {
        let (e1, e2) = compute_thresholds(&[1.0; 8], &[1.0; 8]).unwrap();
        assert_eq!((e1, e2), (2.0, 0.0));
    }

    #[test]
    fn thresholds_percentile_by_hand() {
        let shrink: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        let (e1, e2) = compute_thresholds(&shrink, &[0.3, 0.8, 0.1]).unwrap();
        assert!((e1 - 1.7).abs() < 1e-12);
        assert!((e2 - 0.1).abs() < 1e-12);
    }

    #[test]
    fn thresholds_eta2_may_be_negative() {
        let (_, e2) = compute_thresholds(&[0.5, 0.5], &[1.0]).unwrap();
        assert!((e2 + 0.5).abs() < 1e-12);
    }

    #[test]
    fn thresholds_reject_empty() {
        assert!(compute_thresholds(&[], &[1.0]).is_err());
        assert!(compute_thresholds(&[1.0], &[]).is_err());
    }

    #[test]
    fn stable_clusters_with_negative_eta2_all_accepted() {
        let feats = points2d(&[[0.0, 0.0], [0.05, 0.0], [5.0, 5.0], [5.05, 5.0]]);
        let config = ClusterConfig {
            eps: Some(0.5),
            min_pts: 2,
            ..Default::default()
        };
        // Cached first-epoch shrink ratios with q = 0.5 force eta2 = -0.5.
        let cached = vec![0.5; 4];
        let (pseudo, report) =
            generate_pseudo_labels(&feats, &config, Some(&cached), true, 1).unwrap();
        assert!(report.eta2 < 0.0);
        assert!(report.points.iter().all(|p| p.accepted));
        assert_eq!(pseudo.num_clusters, 2);
        assert_eq!(pseudo.num_outliers, 0);
    }

    #[test]
    fn noise_point_becomes_singleton_outlier() {
        let feats = points2d(&[[0.0, 0.0], [0.05, 0.0], [9.0, 9.0]]);
        let config = ClusterConfig {
            eps: Some(0.5),
            min_pts: 2,
            ..Default::default()
        };
        let cached = vec![0.5; 3];
        let (pseudo, _) = generate_pseudo_labels(&feats, &config, Some(&cached), true, 1).unwrap();
        assert_eq!(pseudo.num_outliers, 1);
        assert_eq!(pseudo.labels[2] as usize, pseudo.num_clusters);
    }

    #[test]
    fn distinct_label_count_equals_mc_plus_mo() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for trial in 0..30 {
            let n = rng.random_range(5..40);
            let feats: Vec<Array1<f64>> = (0..n)
                .map(|_| array![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
                .collect();
            let config = ClusterConfig {
                eps: None,
                min_pts: 3,
                ..Default::default()
            };
            let (pseudo, _) = generate_pseudo_labels(&feats, &config, None, true, 1).unwrap();
            let mut distinct = pseudo.labels.clone();
            distinct.sort_unstable();
            distinct.dedup();
            assert_eq!(distinct.len(), pseudo.num_classes(), "trial {trial}");
            // Labels are exactly 0..num_classes.
            assert!(distinct
                .iter()
                .enumerate()
                .all(|(i, &l)| l as usize == i));
        }
    }

    #[test]
    fn criteria_disabled_keeps_all_clustered_points() {
        let feats = points2d(&[[0.0, 0.0], [0.05, 0.0], [5.0, 5.0], [5.05, 5.0], [9.0, 0.0]]);
        let config = ClusterConfig {
            eps: Some(0.5),
            min_pts: 2,
            ..Default::default()
        };
        // Thresholds that would reject everything if applied.
        let cached = vec![5.0; 5];
        let (pseudo, _) = generate_pseudo_labels(&feats, &config, Some(&cached), false, 1).unwrap();
        assert_eq!(pseudo.num_clusters, 2);
        assert_eq!(pseudo.num_outliers, 1);
    }

    #[test]
    fn acceptance_monotone_in_ratio_shrink() {
        // c1 and c2 are both non-decreasing in ratio_shrink with all else fixed.
        let (eta1, eta2) = (1.2, -0.1);
        let re = 0.7;
        let mut last = (f64::MIN, f64::MIN);
        for i in 0..=10 {
            let rs = i as f64 / 10.0;
            let c1 = (rs + re - eta1).max(0.0);
            let c2 = (rs - re - eta2).max(0.0);
            assert!(c1 >= last.0 && c2 >= last.1);
            last = (c1, c2);
        }
    }

    #[test]
    fn permutation_changes_labels_only_by_relabeling() {
        // Well-separated blobs: partition must be permutation-invariant.
        let feats = points2d(&[
            [0.0, 0.0],
            [0.1, 0.0],
            [0.0, 0.1],
            [5.0, 5.0],
            [5.1, 5.0],
            [5.0, 5.1],
            [10.0, 0.0],
        ]);
        let a = dbscan(&feats, 0.5, 2).unwrap();
        let perm = [6usize, 3, 0, 4, 1, 5, 2];
        let permuted: Vec<Array1<f64>> = perm.iter().map(|&i| feats[i].clone()).collect();
        let b = dbscan(&permuted, 0.5, 2).unwrap();
        // Same-cluster relation must agree through the permutation.
        for x in 0..feats.len() {
            for y in 0..feats.len() {
                let same_a = a.labels[perm[x]] >= 0 && a.labels[perm[x]] == a.labels[perm[y]];
                let same_b = b.labels[x] >= 0 && b.labels[x] == b.labels[y];
                assert_eq!(same_a, same_b);
            }
        }
    }
}
