//! End-to-end orchestration: synthetic pretraining, per-epoch pseudo-label
//! regeneration, the two refinement branches (independent or collaborative),
//! momentum encoder maintenance, fused inference, and run reporting.

use std::path::Path;

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::clustering::{generate_pseudo_labels, ClusterConfig, PseudoLabels, ReliabilityReport};
use crate::config::{TrainConfig, TrainMode};
use crate::data::{pk_batch, DomainDataset, DomainTag};
use crate::error::{Error, Result};
use crate::eval::{evaluate, pseudo_label_purity, RetrievalItem};
use crate::losses::{
    build_label_system, collaborative_backward, collaborative_loss, joint_contrastive,
    softmax_triplet, update_prototypes, HybridLabelSystem,
};
use crate::numerics::{
    encode, encode_backward, learning_rate_at, momentum_update, sgd_step, EncoderParams,
    MomentumParams,
};
use crate::translator::{fit_translator, translate_dataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchTag {
    /// Trained on translated source (D^RT) + target.
    Dthr,
    /// Trained on raw source (D^R) + target.
    Rihr,
}

/// One refinement branch: its encoder, the momentum (teacher) copy, the
/// hybrid label system from the latest epoch, and the latest pseudo-labels.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchState {
    pub tag: BranchTag,
    pub encoder: EncoderParams,
    pub momentum: MomentumParams,
    pub label_system: HybridLabelSystem,
    pub pseudo: PseudoLabels,
    /// Shrink ratios recorded on this branch's first epoch; they anchor the
    /// percentile threshold for all later epochs.
    pub first_epoch_shrink: Option<Vec<f64>>,
    /// Reliability report from the latest epoch, kept for diagnostics dumps.
    pub last_report: Option<ReliabilityReport>,
}

impl BranchState {
    pub fn init(tag: BranchTag, pretrained: &EncoderParams) -> BranchState {
        BranchState {
            tag,
            encoder: pretrained.clone(),
            momentum: MomentumParams::init(pretrained),
            label_system: empty_label_system(),
            pseudo: PseudoLabels {
                labels: Vec::new(),
                num_clusters: 0,
                num_outliers: 0,
            },
            first_epoch_shrink: None,
            last_report: None,
        }
    }
}

fn empty_label_system() -> HybridLabelSystem {
    build_label_system(
        &[],
        &[],
        &[],
        &PseudoLabels {
            labels: Vec::new(),
            num_clusters: 0,
            num_outliers: 0,
        },
    )
    .expect("empty label system is always constructible")
}

/// Per-branch numbers recorded for one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub loss_joint: f64,
    pub loss_col: f64,
    pub m_c: usize,
    pub m_o: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_joint1: f64,
    pub l_joint2: f64,
    pub l_col: f64,
    pub m_c1: usize,
    pub m_o1: usize,
    pub purity1: f64,
    pub m_c2: usize,
    pub m_o2: usize,
    pub purity2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchMetrics {
    pub map: f64,
    pub cmc1: f64,
    pub cmc5: f64,
    pub cmc10: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub epochs: Vec<EpochRecord>,
    pub branch1: BranchMetrics,
    pub branch2: BranchMetrics,
    pub fused: BranchMetrics,
    pub skipped_queries: usize,
}

impl RunReport {
    /// One CSV row per epoch; byte-stable for identical runs.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "epoch,l_joint1,l_joint2,l_col,m_c1,m_o1,purity1,m_c2,m_o2,purity2\n",
        );
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{:.12e},{:.12e},{:.12e},{},{},{:.12e},{},{},{:.12e}\n",
                r.epoch, r.l_joint1, r.l_joint2, r.l_col, r.m_c1, r.m_o1, r.purity1, r.m_c2,
                r.m_o2, r.purity2
            ));
        }
        out
    }

    pub fn metrics_text(&self) -> String {
        let branch = |name: &str, m: &BranchMetrics| {
            format!(
                "map_{name}={:.12e}\ncmc1_{name}={:.12e}\ncmc5_{name}={:.12e}\ncmc10_{name}={:.12e}\n",
                m.map, m.cmc1, m.cmc5, m.cmc10
            )
        };
        format!(
            "{}{}{}skipped_queries={}\n",
            branch("branch1", &self.branch1),
            branch("branch2", &self.branch2),
            branch("fused", &self.fused),
            self.skipped_queries
        )
    }
}

/// Encodes every vector with the given params (deterministic batch encoding).
pub fn encode_features(params: &EncoderParams, inputs: &[Array1<f64>]) -> Result<Vec<Array1<f64>>> {
    inputs.iter().map(|x| Ok(encode(params, x)?.0)).collect()
}

pub fn extract_embeddings(params: &EncoderParams, ds: &DomainDataset) -> Result<Vec<Array1<f64>>> {
    let inputs: Vec<Array1<f64>> = ds.samples.iter().map(|s| s.x.clone()).collect();
    encode_features(params, &inputs)
}

/// Fused retrieval embedding: concatenation of the two branch features
/// weighted by sqrt(alpha) and sqrt(1-alpha), so that dot products realize
/// the alpha-weighted score mixture.
pub fn fused_embeddings(
    b1: &EncoderParams,
    b2: &EncoderParams,
    ds: &DomainDataset,
    alpha: f64,
) -> Result<Vec<Array1<f64>>> {
    let f1 = extract_embeddings(b1, ds)?;
    let f2 = extract_embeddings(b2, ds)?;
    let (w1, w2) = (alpha.sqrt(), (1.0 - alpha).sqrt());
    Ok(f1
        .into_iter()
        .zip(f2)
        .map(|(a, b)| {
            let mut v = Vec::with_capacity(a.len() + b.len());
            v.extend(a.iter().map(|&x| x * w1));
            v.extend(b.iter().map(|&x| x * w2));
            Array1::from_vec(v)
        })
        .collect())
}

fn labeled_classes(ds: &DomainDataset, context: &str) -> Result<Vec<u32>> {
    ds.samples
        .iter()
        .map(|s| {
            s.identity
                .ok_or_else(|| Error::Contract(format!("{context}: dataset must be fully labeled")))
        })
        .collect()
}

fn derived_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Trains one encoder with the joint contrastive loss over a labeled pool.
/// Shared by pretraining and the per-epoch branch loops.
#[allow(clippy::too_many_arguments)]
struct BatchLoop<'a> {
    inputs: &'a [Array1<f64>],
    classes: &'a [u32],
    config: &'a TrainConfig,
    epoch: usize,
    /// Multiplier on the joint-contrastive gradient (per-branch loss weight).
    c_joint: f64,
    /// Multiplier on the collaborative gradient; 0 disables the term.
    c_col: f64,
    teacher: Option<&'a EncoderParams>,
}

fn run_batches(
    loop_cfg: &BatchLoop,
    encoder: &mut EncoderParams,
    momentum: Option<&mut MomentumParams>,
    hls: &mut HybridLabelSystem,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    let cfg = loop_cfg.config;
    let mut distinct = loop_cfg.classes.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let p_eff = cfg.batch_p.min(distinct.len()).max(1);
    let batch_size = p_eff * cfg.batch_k;
    let num_batches = loop_cfg.inputs.len().div_ceil(batch_size).max(1);
    let lr = learning_rate_at(loop_cfg.epoch, cfg.base_lr);
    let use_col = loop_cfg.c_col != 0.0 && loop_cfg.teacher.is_some() && p_eff >= 2;

    let mut momentum = momentum;
    let mut sum_joint = 0.0;
    let mut sum_col = 0.0;
    for _ in 0..num_batches {
        let idx = pk_batch(loop_cfg.classes, p_eff, cfg.batch_k, rng)?;
        let batch_inputs: Vec<Array1<f64>> =
            idx.iter().map(|&i| loop_cfg.inputs[i].clone()).collect();
        let batch_classes: Vec<u32> = idx.iter().map(|&i| loop_cfg.classes[i]).collect();
        let mut feats = Vec::with_capacity(idx.len());
        let mut caches = Vec::with_capacity(idx.len());
        for x in &batch_inputs {
            let (f, c) = encode(encoder, x)?;
            feats.push(f);
            caches.push(c);
        }
        let (l_joint, g_joint) = joint_contrastive(&feats, &batch_classes, hls, cfg.tau)?;
        sum_joint += l_joint;
        let mut feat_grads: Vec<Array1<f64>> = g_joint
            .into_iter()
            .map(|g| g.mapv(|v| v * loop_cfg.c_joint))
            .collect();

        if use_col {
            let teacher_params = loop_cfg.teacher.unwrap();
            let teacher_feats = encode_features(teacher_params, &batch_inputs)?;
            let mut student_scores = Vec::with_capacity(feats.len());
            let mut teacher_scores = Vec::with_capacity(feats.len());
            for a in 0..feats.len() {
                student_scores.push(softmax_triplet(&feats, &batch_classes, a)?);
                teacher_scores.push(softmax_triplet(&teacher_feats, &batch_classes, a)?);
            }
            let (l_col, dl_ds) =
                collaborative_loss(&student_scores, &teacher_scores, cfg.col_form)?;
            sum_col += l_col;
            let g_col = collaborative_backward(&feats, &student_scores, &dl_ds)?;
            for (fg, g) in feat_grads.iter_mut().zip(g_col) {
                *fg = &*fg + &g.mapv(|v| v * loop_cfg.c_col);
            }
        }

        let mut grads = encoder.zero_grads();
        for (cache, g) in caches.iter().zip(&feat_grads) {
            grads.scaled_add(1.0, &encode_backward(encoder, cache, g)?);
        }
        *encoder = sgd_step(encoder, &grads, lr, cfg.weight_decay)?;
        update_prototypes(hls, &feats, &batch_classes, cfg.prototype_momentum)?;
        if let Some(m) = momentum.as_deref_mut() {
            *m = momentum_update(m, encoder, cfg.lambda)?;
        }
    }
    Ok((
        sum_joint / num_batches as f64,
        sum_col / num_batches as f64,
    ))
}

/// The seeded random encoder both pretraining and no-pretraining runs start
/// from (identical for identical config).
pub fn init_encoder(input_dim: usize, config: &TrainConfig) -> Result<EncoderParams> {
    let mut rng = derived_rng(config.seed, 0xA0);
    EncoderParams::new(input_dim, &config.hidden_dims, config.output_dim, &mut rng)
}

/// Fits a synthetic-to-source translator, materializes D^SR, and trains one
/// encoder with the joint contrastive loss over the concatenated ground-truth
/// label system of D^SR and D^R. The result initializes both branches.
pub fn synthetic_pretrain(
    synthetic: &DomainDataset,
    source: &DomainDataset,
    config: &TrainConfig,
) -> Result<EncoderParams> {
    let synth_ids = labeled_classes(synthetic, "synthetic_pretrain")?;
    let source_ids = labeled_classes(source, "synthetic_pretrain")?;
    let synth_x: Vec<Array1<f64>> = synthetic.samples.iter().map(|s| s.x.clone()).collect();
    let src_x: Vec<Array1<f64>> = source.samples.iter().map(|s| s.x.clone()).collect();
    let translator = fit_translator(&synth_x, &src_x)?;
    let translated = translate_dataset(&translator, synthetic, DomainTag::Synth2Src);

    let mut rng = derived_rng(config.seed, 0xA1);
    let mut encoder = init_encoder(source.dim, config)?;
    if config.pretrain_epochs == 0 {
        return Ok(encoder);
    }

    // Concatenated ground-truth classes: translated synthetic ids first,
    // then source ids offset past them.
    let id_offset = synthetic.num_identities as u32;
    let mut inputs: Vec<Array1<f64>> =
        translated.samples.iter().map(|s| s.x.clone()).collect();
    inputs.extend(src_x);
    let mut classes = synth_ids;
    classes.extend(source_ids.iter().map(|&id| id + id_offset));

    let feats = encode_features(&encoder, &inputs)?;
    let mut hls = build_label_system(
        &feats,
        &classes,
        &[],
        &PseudoLabels {
            labels: Vec::new(),
            num_clusters: 0,
            num_outliers: 0,
        },
    )?;
    let class_ids: Vec<u32> = classes
        .iter()
        .map(|&c| hls.class_of_source(c))
        .collect::<Result<_>>()?;
    for epoch in 0..config.pretrain_epochs {
        run_batches(
            &BatchLoop {
                inputs: &inputs,
                classes: &class_ids,
                config,
                epoch,
                c_joint: 1.0,
                c_col: 0.0,
                teacher: None,
            },
            &mut encoder,
            None,
            &mut hls,
            &mut rng,
        )?;
    }
    Ok(encoder)
}

/// One epoch of one branch: re-encode the target pool, regenerate
/// pseudo-labels, rebuild the hybrid label system, then run pk-batches over
/// labeled pool + target. `col_weight` is the per-branch loss weight (alpha for
/// DTHR, 1-alpha for RIHR); `teacher` enables the collaborative term.
pub fn run_epoch_branch(
    branch: &mut BranchState,
    labeled_pool: &DomainDataset,
    target: &DomainDataset,
    epoch: usize,
    config: &TrainConfig,
    col_weight: f64,
    teacher: Option<&EncoderParams>,
    rng: &mut ChaCha8Rng,
) -> Result<EpochStats> {
    if target.samples.iter().any(|s| s.identity.is_some()) {
        return Err(Error::Contract(
            "run_epoch_branch: target dataset must be label-stripped".into(),
        ));
    }
    let pool_ids = labeled_classes(labeled_pool, "run_epoch_branch")?;
    let target_x: Vec<Array1<f64>> = target.samples.iter().map(|s| s.x.clone()).collect();
    let pool_x: Vec<Array1<f64>> = labeled_pool.samples.iter().map(|s| s.x.clone()).collect();

    let target_feats = encode_features(&branch.encoder, &target_x)?;
    let cluster_cfg = ClusterConfig {
        eps: config.cluster_eps,
        shrink_factor: config.shrink_factor,
        enlarge_factor: config.enlarge_factor,
        min_pts: config.min_pts,
    };
    let (pseudo, report) = generate_pseudo_labels(
        &target_feats,
        &cluster_cfg,
        branch.first_epoch_shrink.as_deref(),
        config.criteria_enabled,
        config.threads,
    )?;
    if branch.first_epoch_shrink.is_none() {
        branch.first_epoch_shrink = Some(report.points.iter().map(|p| p.ratio_shrink).collect());
    }
    branch.last_report = Some(report);

    let pool_feats = encode_features(&branch.encoder, &pool_x)?;
    let mut hls = build_label_system(&pool_feats, &pool_ids, &target_feats, &pseudo)?;

    let mut inputs = pool_x;
    inputs.extend(target_x);
    let mut classes: Vec<u32> = pool_ids
        .iter()
        .map(|&id| hls.class_of_source(id))
        .collect::<Result<_>>()?;
    for &p in &pseudo.labels {
        classes.push(hls.class_of_target(p)?);
    }

    let beta = if config.mode == TrainMode::Col {
        config.beta
    } else {
        0.0
    };
    let (loss_joint, loss_col) = run_batches(
        &BatchLoop {
            inputs: &inputs,
            classes: &classes,
            config,
            epoch,
            c_joint: 2.0 * (1.0 - beta) * col_weight,
            c_col: beta * col_weight,
            teacher: if config.mode == TrainMode::Col {
                teacher
            } else {
                None
            },
        },
        &mut branch.encoder,
        Some(&mut branch.momentum),
        &mut hls,
        rng,
    )?;
    let stats = EpochStats {
        loss_joint,
        loss_col,
        m_c: pseudo.num_clusters,
        m_o: pseudo.num_outliers,
    };
    branch.label_system = hls;
    branch.pseudo = pseudo;
    Ok(stats)
}

/// Full adaptation: initialize both branches from the pretrained encoder,
/// materialize D^RT once, run both branches per epoch (exchanging
/// momentum-teacher scores in col mode), then evaluate per-branch and fused
/// retrieval on the target. Target identities are used only for purity and
/// final metrics, never on the training path.
pub fn adapt(
    pretrained: &EncoderParams,
    source: &DomainDataset,
    target: &DomainDataset,
    config: &TrainConfig,
) -> Result<(BranchState, BranchState, RunReport)> {
    config.validate()?;
    let truth = labeled_classes(target, "adapt (target labels needed for reporting)")?;
    let target_train = target.strip_labels();

    let src_x: Vec<Array1<f64>> = source.samples.iter().map(|s| s.x.clone()).collect();
    let tgt_x: Vec<Array1<f64>> = target.samples.iter().map(|s| s.x.clone()).collect();
    let translator = fit_translator(&src_x, &tgt_x)?;
    let translated = translate_dataset(&translator, source, DomainTag::Src2Tgt);

    let mut b1 = BranchState::init(BranchTag::Dthr, pretrained);
    let mut b2 = BranchState::init(BranchTag::Rihr, pretrained);
    let mut rng1 = derived_rng(config.seed, 0xB1);
    let mut rng2 = derived_rng(config.seed, 0xB2);

    let mut epochs = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let teacher2 = b2.momentum.params.clone();
        let s1 = run_epoch_branch(
            &mut b1,
            &translated,
            &target_train,
            epoch,
            config,
            config.alpha,
            Some(&teacher2),
            &mut rng1,
        )?;
        let teacher1 = b1.momentum.params.clone();
        let s2 = run_epoch_branch(
            &mut b2,
            source,
            &target_train,
            epoch,
            config,
            1.0 - config.alpha,
            Some(&teacher1),
            &mut rng2,
        )?;
        epochs.push(EpochRecord {
            epoch,
            l_joint1: s1.loss_joint,
            l_joint2: s2.loss_joint,
            l_col: config.alpha * s1.loss_col + (1.0 - config.alpha) * s2.loss_col,
            m_c1: s1.m_c,
            m_o1: s1.m_o,
            purity1: pseudo_label_purity(&b1.pseudo, &truth)?,
            m_c2: s2.m_c,
            m_o2: s2.m_o,
            purity2: pseudo_label_purity(&b2.pseudo, &truth)?,
        });
    }

    let report = final_report(&b1.encoder, &b2.encoder, target, config.alpha, epochs)?;
    Ok((b1, b2, report))
}

/// Retrieval metrics on the target set for both branches and the fusion.
pub fn final_report(
    enc1: &EncoderParams,
    enc2: &EncoderParams,
    target: &DomainDataset,
    alpha: f64,
    epochs: Vec<EpochRecord>,
) -> Result<RunReport> {
    let truth = labeled_classes(target, "final_report")?;
    let items = |feats: Vec<Array1<f64>>| -> Vec<RetrievalItem> {
        feats
            .into_iter()
            .zip(&target.samples)
            .zip(&truth)
            .map(|((feature, s), &identity)| RetrievalItem {
                feature,
                identity,
                camera: s.camera,
            })
            .collect()
    };
    let ks = [1, 5, 10];
    let metrics = |queries: &[RetrievalItem]| -> Result<(BranchMetrics, usize)> {
        let s = evaluate(queries, queries, &ks)?;
        Ok((
            BranchMetrics {
                map: s.map,
                cmc1: s.cmc[0].1,
                cmc5: s.cmc[1].1,
                cmc10: s.cmc[2].1,
            },
            s.skipped,
        ))
    };
    let q1 = items(extract_embeddings(enc1, target)?);
    let q2 = items(extract_embeddings(enc2, target)?);
    let qf = items(fused_embeddings(enc1, enc2, target, alpha)?);
    let (branch1, _) = metrics(&q1)?;
    let (branch2, _) = metrics(&q2)?;
    let (fused, skipped_queries) = metrics(&qf)?;
    Ok(RunReport {
        epochs,
        branch1,
        branch2,
        fused,
        skipped_queries,
    })
}

/// Fused class scores for one raw input: cosine scores against each
/// branch's target-cluster prototypes, branch 2's clusters aligned to branch
/// 1's by greedy maximal member overlap, then y = alpha*C1 + (1-alpha)*C2.
pub fn fuse_predict(
    b1: &BranchState,
    b2: &BranchState,
    x: &Array1<f64>,
    alpha: f64,
) -> Result<Array1<f64>> {
    let alignment = align_clusters(&b1.pseudo, &b2.pseudo)?;
    let scores = |b: &BranchState, x: &Array1<f64>| -> Result<Vec<f64>> {
        let (f, _) = encode(&b.encoder, x)?;
        (0..b.pseudo.num_clusters)
            .map(|c| {
                let class = b.label_system.class_of_target(c as u32)?;
                Ok(f.dot(&b.label_system.classes[class as usize].prototype))
            })
            .collect()
    };
    let s1 = scores(b1, x)?;
    let s2 = scores(b2, x)?;
    Ok(Array1::from_iter(
        s1.iter()
            .enumerate()
            .map(|(c, &a)| alpha * a + (1.0 - alpha) * s2[alignment[c]]),
    ))
}

/// Greedy maximal-overlap matching of branch-2 clusters onto branch-1
/// clusters; `result[c1] = c2`. Both clusterings must cover the same samples.
fn align_clusters(p1: &PseudoLabels, p2: &PseudoLabels) -> Result<Vec<usize>> {
    if p1.labels.len() != p2.labels.len() {
        return Err(Error::Alignment(
            "align_clusters: branches clustered different sample counts".into(),
        ));
    }
    let (n1, n2) = (p1.num_clusters, p2.num_clusters);
    if n1 != n2 {
        return Err(Error::Alignment(format!(
            "align_clusters: cluster counts differ ({n1} vs {n2})"
        )));
    }
    let mut overlap = vec![vec![0usize; n2]; n1];
    for (&a, &b) in p1.labels.iter().zip(&p2.labels) {
        if (a as usize) < n1 && (b as usize) < n2 {
            overlap[a as usize][b as usize] += 1;
        }
    }
    let mut matched = vec![usize::MAX; n1];
    let mut used = vec![false; n2];
    for _ in 0..n1 {
        let mut best = (0usize, 0usize, 0usize); // (count, c1, c2)
        for (c1, row) in overlap.iter().enumerate() {
            if matched[c1] != usize::MAX {
                continue;
            }
            for (c2, &count) in row.iter().enumerate() {
                if !used[c2] && count > best.0 {
                    best = (count, c1, c2);
                }
            }
        }
        if best.0 == 0 {
            return Err(Error::Alignment(format!(
                "align_clusters: no positive overlap left; overlap matrix {overlap:?}"
            )));
        }
        matched[best.1] = best.2;
        used[best.2] = true;
    }
    Ok(matched)
}

/// Writes encoder params as line-oriented key=value text.
pub fn save_encoder(params: &EncoderParams, path: &Path) -> Result<()> {
    let mut out = format!("layers={}\n", params.layers.len());
    for (i, l) in params.layers.iter().enumerate() {
        let (rows, cols) = (l.weight.nrows(), l.weight.ncols());
        out.push_str(&format!("layer{i}.rows={rows}\nlayer{i}.cols={cols}\n"));
        for r in 0..rows {
            let row: Vec<String> = (0..cols).map(|c| format!("{:.16e}", l.weight[[r, c]])).collect();
            out.push_str(&format!("layer{i}.w{r}={}\n", row.join(",")));
        }
        let bias: Vec<String> = l.bias.iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&format!("layer{i}.bias={}\n", bias.join(",")));
    }
    std::fs::write(path, out).map_err(Error::Io)
}

pub fn load_encoder(path: &Path) -> Result<EncoderParams> {
    let text = std::fs::read_to_string(path).map_err(Error::Io)?;
    let map = crate::config::parse_kv(&text)?;
    let get = |key: &str| -> Result<&String> {
        map.get(key)
            .ok_or_else(|| Error::Parse {
                line: 0,
                msg: format!("encoder file missing key {key}"),
            })
    };
    let parse_row = |key: &str, expect: usize| -> Result<Vec<f64>> {
        let vals: Vec<f64> = get(key)?
            .split(',')
            .map(|p| {
                p.trim().parse().map_err(|_| Error::Parse {
                    line: 0,
                    msg: format!("bad float in {key}"),
                })
            })
            .collect::<Result<_>>()?;
        if vals.len() != expect {
            return Err(Error::Parse {
                line: 0,
                msg: format!("{key}: expected {expect} values, got {}", vals.len()),
            });
        }
        Ok(vals)
    };
    let n: usize = get("layers")?.parse().map_err(|_| Error::Parse {
        line: 0,
        msg: "bad layer count".into(),
    })?;
    let mut layers = Vec::with_capacity(n);
    for i in 0..n {
        let rows: usize = get(&format!("layer{i}.rows"))?.parse().map_err(|_| Error::Parse {
            line: 0,
            msg: format!("bad layer{i}.rows"),
        })?;
        let cols: usize = get(&format!("layer{i}.cols"))?.parse().map_err(|_| Error::Parse {
            line: 0,
            msg: format!("bad layer{i}.cols"),
        })?;
        let mut weight = ndarray::Array2::zeros((rows, cols));
        for r in 0..rows {
            for (c, v) in parse_row(&format!("layer{i}.w{r}"), cols)?.into_iter().enumerate() {
                weight[[r, c]] = v;
            }
        }
        let bias = Array1::from_vec(parse_row(&format!("layer{i}.bias"), rows)?);
        layers.push(crate::numerics::Layer { weight, bias });
    }
    if layers.is_empty() {
        return Err(Error::Parse {
            line: 0,
            msg: "encoder file has no layers".into(),
        });
    }
    Ok(EncoderParams { layers })
}
