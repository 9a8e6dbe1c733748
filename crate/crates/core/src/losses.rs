//! Prototype memory over hybrid label systems, the joint contrastive loss,
//! the softmax-triplet machinery for collaborative refinement, and the total
//! training objective — all with analytic gradients with respect to features.

use std::collections::BTreeMap;

use ndarray::Array1;

use crate::clustering::PseudoLabels;
use crate::error::{Error, Result};
use crate::numerics::linalg::l2_normalized;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassOrigin {
    SourceGt,
    TargetCluster,
    TargetSingleton,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HlsClass {
    pub id: u32,
    pub origin: ClassOrigin,
    pub prototype: Array1<f64>,
}

/// Concatenated class space: source ground-truth identities first, then
/// target pseudo-label classes (clusters, then singletons). Class ids are
/// contiguous in [0, num_source + num_target).
#[derive(Debug, Clone, PartialEq)]
pub struct HybridLabelSystem {
    pub classes: Vec<HlsClass>,
    pub num_source: usize,
    pub num_target: usize,
    /// Classes that had no members and were excluded.
    pub warnings: Vec<String>,
    source_class_ids: BTreeMap<u32, u32>,
    target_class_ids: Vec<Option<u32>>,
}

impl HybridLabelSystem {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn dim(&self) -> usize {
        self.classes.first().map(|c| c.prototype.len()).unwrap_or(0)
    }

    /// Class id of a source ground-truth identity.
    pub fn class_of_source(&self, identity: u32) -> Result<u32> {
        self.source_class_ids
            .get(&identity)
            .copied()
            .ok_or_else(|| Error::Lookup(format!("source identity {identity} not in label system")))
    }

    /// Class id of a target pseudo-label.
    pub fn class_of_target(&self, pseudo: u32) -> Result<u32> {
        self.target_class_ids
            .get(pseudo as usize)
            .copied()
            .flatten()
            .ok_or_else(|| Error::Lookup(format!("pseudo label {pseudo} not in label system")))
    }
}

fn normalized_mean(features: &[Array1<f64>], members: &[usize]) -> Result<Array1<f64>> {
    let mut acc = Array1::zeros(features[members[0]].len());
    for &i in members {
        acc = acc + &features[i];
    }
    acc /= members.len() as f64;
    l2_normalized(&acc)
        .map_err(|_| Error::Degenerate("class mean has near-zero norm".into()))
}

/// Builds the hybrid label system: one class per source identity and per
/// target pseudo-label, prototypes initialized to normalized class means.
pub fn build_label_system(
    source_features: &[Array1<f64>],
    source_labels: &[u32],
    target_features: &[Array1<f64>],
    target_pseudo: &PseudoLabels,
) -> Result<HybridLabelSystem> {
    if source_features.len() != source_labels.len() {
        return Err(Error::Shape(
            "build_label_system: source features/labels length mismatch".into(),
        ));
    }
    if target_features.len() != target_pseudo.labels.len() {
        return Err(Error::Shape(
            "build_label_system: target features/pseudo-labels length mismatch".into(),
        ));
    }
    if let (Some(s), Some(t)) = (source_features.first(), target_features.first()) {
        if s.len() != t.len() {
            return Err(Error::Shape(
                "build_label_system: source/target feature dims differ".into(),
            ));
        }
    }

    let mut source_members: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in source_labels.iter().enumerate() {
        source_members.entry(l).or_default().push(i);
    }
    let mut target_members: Vec<Vec<usize>> = vec![Vec::new(); target_pseudo.num_classes()];
    for (i, &l) in target_pseudo.labels.iter().enumerate() {
        target_members[l as usize].push(i);
    }

    let mut classes = Vec::new();
    let mut warnings = Vec::new();
    let mut source_class_ids = BTreeMap::new();
    let mut next_id = 0u32;
    for (&identity, members) in &source_members {
        classes.push(HlsClass {
            id: next_id,
            origin: ClassOrigin::SourceGt,
            prototype: normalized_mean(source_features, members)?,
        });
        source_class_ids.insert(identity, next_id);
        next_id += 1;
    }
    let num_source = classes.len();
    let mut target_class_ids = vec![None; target_pseudo.num_classes()];
    for (pseudo, members) in target_members.iter().enumerate() {
        if members.is_empty() {
            warnings.push(format!("pseudo class {pseudo} has no members; excluded"));
            continue;
        }
        let origin = if pseudo < target_pseudo.num_clusters {
            ClassOrigin::TargetCluster
        } else {
            ClassOrigin::TargetSingleton
        };
        classes.push(HlsClass {
            id: next_id,
            origin,
            prototype: normalized_mean(target_features, members)?,
        });
        target_class_ids[pseudo] = Some(next_id);
        next_id += 1;
    }
    let num_target = classes.len() - num_source;
    Ok(HybridLabelSystem {
        classes,
        num_source,
        num_target,
        warnings,
        source_class_ids,
        target_class_ids,
    })
}

/// Momentum update of the prototypes touched by a batch:
/// p ← normalize(m·p + (1−m)·batch class mean).
pub fn update_prototypes(
    hls: &mut HybridLabelSystem,
    batch_features: &[Array1<f64>],
    batch_labels: &[u32],
    momentum: f64,
) -> Result<()> {
    if !(0.0..=1.0).contains(&momentum) {
        return Err(Error::Domain("update_prototypes: momentum must be in [0,1]".into()));
    }
    let mut touched: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in batch_labels.iter().enumerate() {
        if l as usize >= hls.classes.len() {
            return Err(Error::Lookup(format!("class id {l} not in label system")));
        }
        touched.entry(l).or_default().push(i);
    }
    for (&class, members) in &touched {
        let mean = normalized_mean(batch_features, members)?;
        let old = &hls.classes[class as usize].prototype;
        let blended = old.mapv(|v| v * momentum) + mean.mapv(|v| v * (1.0 - momentum));
        hls.classes[class as usize].prototype = l2_normalized(&blended)
            .map_err(|_| Error::Degenerate("prototype update collapsed to zero".into()))?;
    }
    Ok(())
}

/// Mean contrastive loss against the full class space and its gradient with
/// respect to each feature (prototypes treated as constants):
/// loss_i = −log softmax_j(⟨f_i, p_j⟩/τ) at j = y_i.
pub fn joint_contrastive(
    features: &[Array1<f64>],
    labels: &[u32],
    hls: &HybridLabelSystem,
    tau: f64,
) -> Result<(f64, Vec<Array1<f64>>)> {
    if tau <= 0.0 {
        return Err(Error::Domain("joint_contrastive: tau must be > 0".into()));
    }
    if features.len() != labels.len() {
        return Err(Error::Shape("joint_contrastive: features/labels length mismatch".into()));
    }
    if features.is_empty() {
        return Err(Error::Domain("joint_contrastive: empty batch".into()));
    }
    let n = features.len();
    let k = hls.num_classes();
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(n);
    for (f, &y) in features.iter().zip(labels) {
        if y as usize >= k {
            return Err(Error::Lookup(format!("class id {y} not in label system")));
        }
        let logits: Vec<f64> = hls.classes.iter().map(|c| f.dot(&c.prototype) / tau).collect();
        let max = logits.iter().cloned().fold(f64::MIN, f64::max);
        let sum_exp: f64 = logits.iter().map(|&l| (l - max).exp()).sum();
        let log_z = max + sum_exp.ln();
        total += log_z - logits[y as usize];
        // d loss_i / d f_i = (Σ_j p_j·proto_j − proto_y) / τ, then 1/n for the mean.
        let mut g: Array1<f64> = Array1::zeros(f.len());
        for (j, c) in hls.classes.iter().enumerate() {
            let p = (logits[j] - log_z).exp();
            g = g + c.prototype.mapv(|v| v * p);
        }
        g = g - &hls.classes[y as usize].prototype;
        grads.push(g.mapv(|v| v / (tau * n as f64)));
    }
    Ok((total / n as f64, grads))
}

/// Softmax triple item for one anchor: s = exp(D⁺)/(exp(D⁺)+exp(D⁻)) with
/// hardest-mined positive and negative Euclidean distances.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftTripletScore {
    pub s: f64,
    pub anchor: usize,
    pub pos_index: usize,
    pub neg_index: usize,
    pub d_pos: f64,
    pub d_neg: f64,
}

pub fn softmax_triplet(
    batch_features: &[Array1<f64>],
    batch_labels: &[u32],
    anchor: usize,
) -> Result<SoftTripletScore> {
    if batch_features.len() != batch_labels.len() {
        return Err(Error::Shape("softmax_triplet: features/labels length mismatch".into()));
    }
    let label = batch_labels[anchor];
    let dist = |i: usize| -> f64 {
        let d = &batch_features[anchor] - &batch_features[i];
        d.dot(&d).sqrt()
    };
    let mut pos: Option<(usize, f64)> = None;
    let mut neg: Option<(usize, f64)> = None;
    for i in 0..batch_features.len() {
        if i == anchor {
            continue;
        }
        let d = dist(i);
        if batch_labels[i] == label {
            if pos.map_or(true, |(_, best)| d > best) {
                pos = Some((i, d));
            }
        } else if neg.map_or(true, |(_, best)| d < best) {
            neg = Some((i, d));
        }
    }
    let (pos_index, d_pos) =
        pos.ok_or_else(|| Error::Sampling("softmax_triplet: anchor has no positive in batch".into()))?;
    let (neg_index, d_neg) =
        neg.ok_or_else(|| Error::Sampling("softmax_triplet: anchor has no negative in batch".into()))?;
    // s = σ(D⁺ − D⁻), strictly inside (0,1).
    let s = 1.0 / (1.0 + (d_neg - d_pos).exp());
    Ok(SoftTripletScore {
        s,
        anchor,
        pos_index,
        neg_index,
        d_pos,
        d_neg,
    })
}

/// Orientation of the collaborative loss: binary cross-entropy with the
/// teacher as target (default), or the as-printed form with the teacher term
/// inside the logarithm (gradients flow only through a multiplicative weight).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CollaborativeForm {
    #[default]
    Bce,
    Verbatim,
}

/// Per-branch collaborative loss over aligned anchor lists. Teacher scores
/// are constants. Returns the loss and dL/ds_i for each student score.
pub fn collaborative_loss(
    student: &[SoftTripletScore],
    teacher: &[SoftTripletScore],
    form: CollaborativeForm,
) -> Result<(f64, Vec<f64>)> {
    if student.len() != teacher.len() || student.is_empty() {
        return Err(Error::Shape("collaborative_loss: misaligned or empty score lists".into()));
    }
    let n = student.len() as f64;
    let mut loss = 0.0;
    let mut dl_ds = Vec::with_capacity(student.len());
    for (st, te) in student.iter().zip(teacher) {
        let (s, t) = (st.s, te.s);
        if !(s > 0.0 && s < 1.0) || !(t > 0.0 && t < 1.0) {
            return Err(Error::Numeric(format!(
                "collaborative_loss: score outside (0,1): s={s} t={t}"
            )));
        }
        match form {
            CollaborativeForm::Bce => {
                loss -= t * s.ln() + (1.0 - t) * (1.0 - s).ln();
                dl_ds.push((s - t) / (s * (1.0 - s) * n));
            }
            CollaborativeForm::Verbatim => {
                loss -= s * t.ln() + (1.0 - s) * (1.0 - t).ln();
                dl_ds.push(-(t.ln() - (1.0 - t).ln()) / n);
            }
        }
    }
    Ok((loss / n, dl_ds))
}

/// Pushes dL/ds through the softmax-triplet chain back to the batch
/// features: ds/dD⁺ = s(1−s), ds/dD⁻ = −s(1−s), dD/df along the unit
/// difference vectors, mining indices held fixed.
pub fn collaborative_backward(
    batch_features: &[Array1<f64>],
    student: &[SoftTripletScore],
    dl_ds: &[f64],
) -> Result<Vec<Array1<f64>>> {
    if student.len() != dl_ds.len() {
        return Err(Error::Shape("collaborative_backward: misaligned inputs".into()));
    }
    let dim = batch_features.first().map(|f| f.len()).unwrap_or(0);
    let mut grads = vec![Array1::zeros(dim); batch_features.len()];
    for (score, &g_s) in student.iter().zip(dl_ds) {
        let sig = score.s * (1.0 - score.s);
        for (idx, d, sign) in [
            (score.pos_index, score.d_pos, 1.0),
            (score.neg_index, score.d_neg, -1.0),
        ] {
            if d < 1e-12 {
                continue; // coincident points: distance gradient undefined, treated as 0
            }
            let unit = (&batch_features[score.anchor] - &batch_features[idx]).mapv(|v| v / d);
            let coeff = g_s * sig * sign;
            grads[score.anchor] = &grads[score.anchor] + &unit.mapv(|v| v * coeff);
            grads[idx] = &grads[idx] - &unit.mapv(|v| v * coeff);
        }
    }
    Ok(grads)
}

/// Overall objective: β·L_col + 2(1−β)·(α·L¹_joint + (1−α)·L²_joint).
pub fn total_loss(l_joint1: f64, l_joint2: f64, l_col: f64, alpha: f64, beta: f64) -> Result<f64> {
    for (name, v) in [("L_joint1", l_joint1), ("L_joint2", l_joint2), ("L_col", l_col)] {
        if !v.is_finite() {
            return Err(Error::Numeric(format!("total_loss: {name} is not finite")));
        }
    }
    Ok(beta * l_col + 2.0 * (1.0 - beta) * (alpha * l_joint1 + (1.0 - alpha) * l_joint2))
}
