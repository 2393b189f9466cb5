//! Desk-scale student head trained on per-anchor feature vectors.
//!
//! Each anchor is a feature vector instead of a convolutional feature map
//! cell. The head has a linear class branch, a linear box branch and a
//! two-layer embedding branch (affine, ReLU, affine); a fixed feature
//! standardization stands in for batch normalization. Training is plain
//! mini-batch SGD on `alpha_c * L_c + alpha_b * L_b + alpha_e * L_e`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{focal_loss, huber_loss, total_loss, FocalParams, HuberParams, LossError, LossWeights};
use crate::anchors::{assign_anchors, encode_box, generate_anchors, AnchorConfig, AnchorLabel};
use crate::distill::TeacherEmbedding;
use crate::geometry::BBox;
use crate::rng;

/// One anchor's training example.
#[derive(Debug, Clone, PartialEq)]
pub struct ToySample {
    pub features: Vec<f64>,
    pub positive: bool,
    pub box_target: [f64; 4],
    /// Teacher target for positives (full length; truncated by the trainer).
    pub teacher: Option<Vec<f64>>,
    pub identity: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ToyDataset {
    pub samples: Vec<ToySample>,
}

impl ToyDataset {
    pub fn feature_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.features.len())
    }

    pub fn teacher_dim(&self) -> usize {
        self.samples
            .iter()
            .find_map(|s| s.teacher.as_ref().map(|t| t.len()))
            .unwrap_or(0)
    }

    pub fn identity_count(&self) -> usize {
        let mut ids: Vec<u32> = self.samples.iter().filter_map(|s| s.identity).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }
}

/// Synthetic per-anchor data generated through the real anchor assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyDataConfig {
    pub identities: u32,
    pub train_images_per_identity: u32,
    pub heldout_images_per_identity: u32,
    pub feature_dim: usize,
    pub teacher_dim: usize,
    /// Per-crop appearance noise around the identity prototype.
    pub appearance_noise: f64,
    /// Extra per-anchor feature noise.
    pub anchor_noise: f64,
    pub negatives_per_image: u32,
    pub image_size: u32,
    pub seed: u64,
}

impl Default for ToyDataConfig {
    fn default() -> Self {
        Self {
            identities: 200,
            train_images_per_identity: 4,
            heldout_images_per_identity: 1,
            feature_dim: 64,
            teacher_dim: 512,
            appearance_noise: 0.3,
            anchor_noise: 0.1,
            negatives_per_image: 8,
            image_size: 128,
            seed: 0,
        }
    }
}

/// Feature layout: `[objectness, box residual (4), appearance (rest)]`.
const APPEARANCE_OFFSET: usize = 5;

fn toy_anchor_config() -> AnchorConfig {
    AnchorConfig {
        levels: vec![4, 5],
        ..AnchorConfig::default()
    }
}

/// Builds `(train, heldout)` sets. Teacher embeddings are a fixed seeded
/// projection of each crop's appearance, L2-normalized.
pub fn generate_toy_data(cfg: &ToyDataConfig) -> Result<(ToyDataset, ToyDataset), LossError> {
    if cfg.feature_dim <= APPEARANCE_OFFSET {
        return Err(LossError::Config(format!(
            "feature_dim must exceed {APPEARANCE_OFFSET}"
        )));
    }
    if cfg.identities < 2 || cfg.teacher_dim == 0 || cfg.image_size < 32 {
        return Err(LossError::Config(
            "need >= 2 identities, teacher_dim >= 1, image_size >= 32".into(),
        ));
    }
    let app_dim = cfg.feature_dim - APPEARANCE_OFFSET;
    let mut proj_rng = rng::stream(cfg.seed, "toy-projection", &[]);
    let projection = DMatrix::<f64>::from_fn(cfg.teacher_dim, app_dim, |_, _| {
        proj_rng.sample(StandardNormal)
    });
    let mut proto_rng = rng::stream(cfg.seed, "toy-prototypes", &[]);
    let prototypes: Vec<DVector<f64>> = (0..cfg.identities)
        .map(|_| DVector::from_fn(app_dim, |_, _| proto_rng.sample(StandardNormal)))
        .collect();

    let anchor_cfg = toy_anchor_config();
    let grid = generate_anchors(&anchor_cfg, cfg.image_size, cfg.image_size)
        .map_err(|e| LossError::Config(e.to_string()))?;
    let anchors: Vec<BBox> = grid.iter().copied().collect();
    let app_noise = Normal::new(0.0, cfg.appearance_noise.max(0.0))
        .map_err(|e| LossError::Config(e.to_string()))?;
    let anchor_noise = Normal::new(0.0, cfg.anchor_noise.max(0.0))
        .map_err(|e| LossError::Config(e.to_string()))?;

    let build = |label: &str, images: u32| -> Result<ToyDataset, LossError> {
        let mut r = rng::stream(cfg.seed, label, &[]);
        let mut samples = Vec::new();
        for _ in 0..images {
            for (identity, proto) in prototypes.iter().enumerate() {
                let crop = proto.map(|v| v + app_noise.sample(&mut r));
                let teacher_raw = &projection * &crop;
                let teacher = TeacherEmbedding::normalized(teacher_raw.as_slice())
                    .map_err(|e| LossError::Config(e.to_string()))?;
                let size = cfg.image_size as f64;
                // boxes that no anchor covers at the positive threshold carry
                // no training signal, so they are redrawn
                let mut drawn = None;
                for _ in 0..100 {
                    let h = r.random_range(0.45..0.9) * size;
                    let w = h * r.random_range(0.3..0.55);
                    let x = r.random_range(0.0..(size - w));
                    let y = r.random_range(0.0..(size - h));
                    let gt = BBox::from_xywh(x, y, w, h)
                        .map_err(|e| LossError::Config(e.to_string()))?;
                    let assignment = assign_anchors(&grid, &anchor_cfg, &[(gt, teacher.clone())])
                        .map_err(|e| LossError::Config(e.to_string()))?;
                    if assignment.labels.iter().any(AnchorLabel::is_positive) {
                        drawn = Some(assignment);
                        break;
                    }
                }
                let assignment = drawn.ok_or_else(|| {
                    LossError::Config("no box with a positive anchor in 100 draws".into())
                })?;
                let mut negatives = Vec::new();
                for (anchor, lbl) in anchors.iter().zip(&assignment.labels) {
                    match lbl {
                        AnchorLabel::Positive {
                            target, embedding, ..
                        } => {
                            let residual = encode_box(anchor, target);
                            let mut f = Vec::with_capacity(cfg.feature_dim);
                            f.push(1.0 + anchor_noise.sample(&mut r));
                            f.extend(residual.iter().map(|v| v + anchor_noise.sample(&mut r)));
                            f.extend(crop.iter().map(|v| v + anchor_noise.sample(&mut r)));
                            samples.push(ToySample {
                                features: f,
                                positive: true,
                                box_target: residual,
                                teacher: Some(embedding.to_f64()),
                                identity: Some(identity as u32),
                            });
                        }
                        AnchorLabel::Negative => negatives.push(*anchor),
                        AnchorLabel::Ignore => {}
                    }
                }
                negatives.shuffle(&mut r);
                for _ in negatives.iter().take(cfg.negatives_per_image as usize) {
                    let mut f = Vec::with_capacity(cfg.feature_dim);
                    f.push(-1.0 + anchor_noise.sample(&mut r));
                    for _ in 0..4 {
                        f.push(0.5 * r.sample::<f64, _>(StandardNormal));
                    }
                    for _ in 0..app_dim {
                        f.push(r.sample::<f64, _>(StandardNormal));
                    }
                    samples.push(ToySample {
                        features: f,
                        positive: false,
                        box_target: [0.0; 4],
                        teacher: None,
                        identity: None,
                    });
                }
            }
        }
        Ok(ToyDataset { samples })
    };
    let train = build("toy-train", cfg.train_images_per_identity)?;
    let heldout = build("toy-heldout", cfg.heldout_images_per_identity)?;
    Ok((train, heldout))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyHeadConfig {
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub student_dim: usize,
    pub learning_rate: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ToyHeadConfig {
    fn default() -> Self {
        Self {
            feature_dim: 64,
            hidden_dim: 256,
            student_dim: 128,
            learning_rate: 0.001,
            iterations: 3000,
            batch_size: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossSettings {
    pub weights: LossWeights,
    pub focal: FocalParams,
    pub huber: HuberParams,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    pub l_c: f64,
    pub l_b: f64,
    pub l_e: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyHead {
    mean: DVector<f64>,
    std: DVector<f64>,
    w_cls: DVector<f64>,
    b_cls: f64,
    w_box: DMatrix<f64>,
    b_box: DVector<f64>,
    w1: DMatrix<f64>,
    b1: DVector<f64>,
    w2: DMatrix<f64>,
    b2: DVector<f64>,
}

/// Per-anchor head outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutput {
    pub logit: f64,
    pub box_residual: [f64; 4],
    pub embedding: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct Batch {
    x: DMatrix<f64>,
    labels: Vec<bool>,
    pos_rows: Vec<usize>,
    box_targets: DMatrix<f64>,
    emb_targets: DMatrix<f64>,
}

struct Grads {
    w_cls: DVector<f64>,
    b_cls: f64,
    w_box: DMatrix<f64>,
    b_box: DVector<f64>,
    w1: DMatrix<f64>,
    b1: DVector<f64>,
    w2: DMatrix<f64>,
    b2: DVector<f64>,
}

impl ToyHead {
    fn init(cfg: &ToyHeadConfig, mean: DVector<f64>, std: DVector<f64>) -> Self {
        let mut r = rng::stream(cfg.seed, "toy-head-init", &[]);
        let f = cfg.feature_dim;
        let he1 = (2.0 / f as f64).sqrt();
        let w1 = DMatrix::from_fn(cfg.hidden_dim, f, |_, _| {
            he1 * r.sample::<f64, _>(StandardNormal)
        });
        let s2 = 0.1 / (cfg.hidden_dim as f64).sqrt();
        let w2 = DMatrix::from_fn(cfg.student_dim, cfg.hidden_dim, |_, _| {
            s2 * r.sample::<f64, _>(StandardNormal)
        });
        let prior: f64 = 0.01;
        Self {
            mean,
            std,
            w_cls: DVector::zeros(f),
            b_cls: -((1.0 - prior) / prior).ln(),
            w_box: DMatrix::zeros(4, f),
            b_box: DVector::zeros(4),
            w1,
            b1: DVector::zeros(cfg.hidden_dim),
            w2,
            b2: DVector::zeros(cfg.student_dim),
        }
    }

    pub fn student_dim(&self) -> usize {
        self.b2.len()
    }

    fn standardize(&self, features: &[f64]) -> DVector<f64> {
        DVector::from_fn(features.len(), |i, _| {
            (features[i] - self.mean[i]) / self.std[i]
        })
    }

    pub fn forward(&self, features: &[f64]) -> HeadOutput {
        let x = self.standardize(features);
        let logit = self.w_cls.dot(&x) + self.b_cls;
        let b = &self.w_box * &x + &self.b_box;
        let h = (&self.w1 * &x + &self.b1).map(|v| v.max(0.0));
        let e = &self.w2 * h + &self.b2;
        HeadOutput {
            logit,
            box_residual: [b[0], b[1], b[2], b[3]],
            embedding: e.as_slice().to_vec(),
        }
    }

    /// Loss terms and gradients over a batch (rows of `x` are standardized).
    fn loss_and_grads(
        &self,
        batch: &Batch,
        losses: &LossSettings,
        want_grads: bool,
    ) -> (LossRecord, Option<Grads>) {
        let n = batch.x.nrows();
        let npos = batch.pos_rows.len();
        let norm = npos.max(1) as f64;
        let w = &losses.weights;

        let logits = &batch.x * &self.w_cls;
        let mut l_c = 0.0;
        let mut d_logit = DVector::zeros(n);
        for i in 0..n {
            let p = sigmoid(logits[i] + self.b_cls);
            let (l, dp) = focal_loss(p, batch.labels[i], &losses.focal);
            l_c += l;
            d_logit[i] = w.alpha_c * dp * p * (1.0 - p) / norm;
        }
        l_c /= norm;

        let mut l_b = 0.0;
        let mut l_e = 0.0;
        let mut grads = None;
        if npos > 0 {
            let xp = DMatrix::from_fn(npos, batch.x.ncols(), |r, c| {
                batch.x[(batch.pos_rows[r], c)]
            });
            let boxes = &xp * self.w_box.transpose();
            let mut d_box = DMatrix::zeros(npos, 4);
            for r in 0..npos {
                for k in 0..4 {
                    let (l, g) = huber_loss(
                        boxes[(r, k)] + self.b_box[k],
                        batch.box_targets[(r, k)],
                        &losses.huber,
                    );
                    l_b += l;
                    d_box[(r, k)] = w.alpha_b * g / norm;
                }
            }
            l_b /= norm;

            let pre = &xp * self.w1.transpose();
            let h = DMatrix::from_fn(npos, pre.ncols(), |r, c| {
                (pre[(r, c)] + self.b1[c]).max(0.0)
            });
            let out = &h * self.w2.transpose();
            let mut d_out = DMatrix::zeros(npos, out.ncols());
            for r in 0..npos {
                for c in 0..out.ncols() {
                    let diff = out[(r, c)] + self.b2[c] - batch.emb_targets[(r, c)];
                    l_e += diff * diff;
                    d_out[(r, c)] = w.alpha_e * 2.0 * diff / norm;
                }
            }
            l_e /= norm;

            if want_grads {
                let w2 = d_out.transpose() * &h;
                let b2 = d_out.row_sum().transpose();
                let mut d_h = &d_out * &self.w2;
                for r in 0..npos {
                    for c in 0..d_h.ncols() {
                        if h[(r, c)] <= 0.0 {
                            d_h[(r, c)] = 0.0;
                        }
                    }
                }
                let w1 = d_h.transpose() * &xp;
                let b1 = d_h.row_sum().transpose();
                let w_box = d_box.transpose() * &xp;
                let b_box = d_box.row_sum().transpose();
                grads = Some(Grads {
                    w_cls: batch.x.transpose() * &d_logit,
                    b_cls: d_logit.sum(),
                    w_box,
                    b_box,
                    w1,
                    b1,
                    w2,
                    b2,
                });
            }
        } else if want_grads {
            grads = Some(Grads {
                w_cls: batch.x.transpose() * &d_logit,
                b_cls: d_logit.sum(),
                w_box: DMatrix::zeros(self.w_box.nrows(), self.w_box.ncols()),
                b_box: DVector::zeros(4),
                w1: DMatrix::zeros(self.w1.nrows(), self.w1.ncols()),
                b1: DVector::zeros(self.b1.len()),
                w2: DMatrix::zeros(self.w2.nrows(), self.w2.ncols()),
                b2: DVector::zeros(self.b2.len()),
            });
        }
        let record = LossRecord {
            iteration: 0,
            l_c,
            l_b,
            l_e,
            total: total_loss(l_c, l_b, l_e, w),
        };
        (record, grads)
    }

    fn apply(&mut self, g: &Grads, lr: f64) {
        self.w_cls -= &g.w_cls * lr;
        self.b_cls -= lr * g.b_cls;
        self.w_box -= &g.w_box * lr;
        self.b_box -= &g.b_box * lr;
        self.w1 -= &g.w1 * lr;
        self.b1 -= &g.b1 * lr;
        self.w2 -= &g.w2 * lr;
        self.b2 -= &g.b2 * lr;
    }

    fn batch(&self, data: &ToyDataset, rows: &[usize], student_dim: usize) -> Batch {
        let f = self.mean.len();
        let mut x = DMatrix::zeros(rows.len(), f);
        let mut labels = Vec::with_capacity(rows.len());
        let mut pos_rows = Vec::new();
        for (r, &idx) in rows.iter().enumerate() {
            let s = &data.samples[idx];
            for c in 0..f {
                x[(r, c)] = (s.features[c] - self.mean[c]) / self.std[c];
            }
            labels.push(s.positive);
            if s.positive {
                pos_rows.push(r);
            }
        }
        let box_targets = DMatrix::from_fn(pos_rows.len(), 4, |r, k| {
            data.samples[rows[pos_rows[r]]].box_target[k]
        });
        let emb_targets = DMatrix::from_fn(pos_rows.len(), student_dim, |r, c| {
            data.samples[rows[pos_rows[r]]]
                .teacher
                .as_ref()
                .map_or(0.0, |t| t[c])
        });
        Batch {
            x,
            labels,
            pos_rows,
            box_targets,
            emb_targets,
        }
    }

    /// Loss terms over a whole dataset.
    pub fn evaluate(&self, data: &ToyDataset, losses: &LossSettings) -> LossRecord {
        let rows: Vec<usize> = (0..data.samples.len()).collect();
        let batch = self.batch(data, &rows, self.student_dim());
        self.loss_and_grads(&batch, losses, false).0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub head: ToyHead,
    pub curve: Vec<LossRecord>,
}

fn validate(data: &ToyDataset, cfg: &ToyHeadConfig) -> Result<(), LossError> {
    if cfg.feature_dim == 0
        || cfg.hidden_dim == 0
        || cfg.student_dim == 0
        || cfg.iterations == 0
        || cfg.batch_size == 0
    {
        return Err(LossError::Config(
            "all toy head sizes must be positive".into(),
        ));
    }
    if !(cfg.learning_rate.is_finite() && cfg.learning_rate > 0.0) {
        return Err(LossError::Config("learning rate must be positive".into()));
    }
    if data.identity_count() < 2 {
        return Err(LossError::Config("need at least two identities".into()));
    }
    for (i, s) in data.samples.iter().enumerate() {
        if s.features.len() != cfg.feature_dim {
            return Err(LossError::Config(format!(
                "sample {i} has {} features, expected {}",
                s.features.len(),
                cfg.feature_dim
            )));
        }
        match (&s.teacher, s.positive) {
            (Some(t), true) if t.len() >= cfg.student_dim => {}
            (Some(t), true) => {
                return Err(LossError::Config(format!(
                    "sample {i}: teacher dimension {} below student dimension {}",
                    t.len(),
                    cfg.student_dim
                )))
            }
            (None, true) => {
                return Err(LossError::Config(format!(
                    "positive sample {i} has no teacher target"
                )))
            }
            _ => {}
        }
    }
    Ok(())
}

/// The head `train_toy_head` starts from: seeded initial weights and feature
/// standardization fitted on `data`.
pub fn untrained_head(data: &ToyDataset, cfg: &ToyHeadConfig) -> Result<ToyHead, LossError> {
    validate(data, cfg)?;
    let f = cfg.feature_dim;
    let n = data.samples.len() as f64;
    let mean = DVector::from_fn(f, |c, _| {
        data.samples.iter().map(|s| s.features[c]).sum::<f64>() / n
    });
    let std = DVector::from_fn(f, |c, _| {
        let var = data
            .samples
            .iter()
            .map(|s| (s.features[c] - mean[c]).powi(2))
            .sum::<f64>()
            / n;
        var.sqrt().max(1e-6)
    });
    Ok(ToyHead::init(cfg, mean, std))
}

/// Trains a fresh head. The curve holds the mini-batch losses of every
/// iteration, measured before that iteration's update.
pub fn train_toy_head(
    data: &ToyDataset,
    cfg: &ToyHeadConfig,
    losses: &LossSettings,
) -> Result<TrainOutcome, LossError> {
    losses.weights.validate()?;
    losses.focal.validate()?;
    losses.huber.validate()?;
    let mut head = untrained_head(data, cfg)?;

    let mut order: Vec<usize> = (0..data.samples.len()).collect();
    let mut shuffle_rng = rng::stream(cfg.seed, "toy-batches", &[]);
    order.shuffle(&mut shuffle_rng);
    let mut cursor = 0;
    let mut curve = Vec::with_capacity(cfg.iterations);
    for iteration in 0..cfg.iterations {
        let mut rows = Vec::with_capacity(cfg.batch_size);
        while rows.len() < cfg.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut shuffle_rng);
                cursor = 0;
            }
            rows.push(order[cursor]);
            cursor += 1;
        }
        let batch = head.batch(data, &rows, cfg.student_dim);
        let (mut record, grads) = head.loss_and_grads(&batch, losses, true);
        record.iteration = iteration;
        if !record.total.is_finite() {
            return Err(LossError::Diverged {
                iteration,
                loss: record.total,
            });
        }
        curve.push(record);
        head.apply(&grads.expect("gradients requested"), cfg.learning_rate);
    }
    Ok(TrainOutcome { head, curve })
}

/// Top-1 identity retrieval: each held-out positive anchor is matched by
/// cosine similarity against per-identity centroids of the training anchors'
/// normalized student embeddings.
pub fn retrieval_top1(head: &ToyHead, train: &ToyDataset, heldout: &ToyDataset) -> f64 {
    let unit = |v: Vec<f64>| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            v.into_iter().map(|x| x / n).collect()
        } else {
            v
        }
    };
    let mut centroids: std::collections::BTreeMap<u32, Vec<f64>> = Default::default();
    for s in train.samples.iter().filter(|s| s.positive) {
        let (Some(id), e) = (s.identity, unit(head.forward(&s.features).embedding)) else {
            continue;
        };
        let c = centroids.entry(id).or_insert_with(|| vec![0.0; e.len()]);
        c.iter_mut().zip(&e).for_each(|(a, b)| *a += b);
    }
    let gallery: Vec<(u32, Vec<f64>)> = centroids.into_iter().map(|(k, v)| (k, unit(v))).collect();
    let (mut hits, mut total) = (0usize, 0usize);
    for s in heldout.samples.iter().filter(|s| s.positive) {
        let Some(id) = s.identity else { continue };
        let q = unit(head.forward(&s.features).embedding);
        let best = gallery
            .iter()
            .map(|(gid, g)| (*gid, g.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>()))
            .fold(None, |acc: Option<(u32, f64)>, (gid, sim)| match acc {
                Some((_, bs)) if bs >= sim => acc,
                _ => Some((gid, sim)),
            });
        total += 1;
        if best.map(|(gid, _)| gid) == Some(id) {
            hits += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}
