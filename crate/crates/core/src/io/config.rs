//! Flat `key=value` configuration documents.
//!
//! Lines starting with `#` and blank lines are ignored. Keys absent from a
//! document keep their defaults; unknown or repeated keys are rejected.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::str::FromStr;

use super::IoError;
use crate::anchors::AnchorConfig;
use crate::losses::toy::{LossSettings, ToyDataConfig, ToyHeadConfig};
use crate::losses::{FocalParams, HuberParams, LossWeights};
use crate::postprocess::PostprocessConfig;
use crate::tracker::association::AssociationConfig;

/// Parsed `key=value` pairs with their line numbers.
#[derive(Debug, Default)]
pub struct KeyValues {
    entries: HashMap<String, (usize, String)>,
}

impl KeyValues {
    /// Parses a document, accepting only keys in `known`.
    pub fn parse(text: &str, known: &[&str]) -> Result<Self, IoError> {
        let mut entries = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let t = raw.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let (k, v) = t
                .split_once('=')
                .ok_or_else(|| IoError::line(line, format!("expected key=value, got {t:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            if !known.contains(&k) {
                return Err(IoError::line(line, format!("unknown key {k:?}")));
            }
            if let Some((first, _)) = entries.insert(k.to_string(), (line, v.to_string())) {
                return Err(IoError::line(
                    line,
                    format!("key {k:?} already set on line {first}"),
                ));
            }
        }
        Ok(Self { entries })
    }

    /// Overwrites `slot` when `key` is present.
    pub fn set<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<(), IoError> {
        if let Some((line, v)) = self.entries.get(key) {
            *slot = v
                .parse()
                .map_err(|_| IoError::line(*line, format!("{key}: cannot parse {v:?}")))?;
        }
        Ok(())
    }

    pub fn set_list<T: FromStr>(&self, key: &str, slot: &mut Vec<T>) -> Result<(), IoError> {
        if let Some((line, v)) = self.entries.get(key) {
            *slot = v
                .split(',')
                .map(|p| p.trim().parse())
                .collect::<Result<_, _>>()
                .map_err(|_| IoError::line(*line, format!("{key}: cannot parse list {v:?}")))?;
        }
        Ok(())
    }
}

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

/// Every tunable of a run in one flat document.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub anchors: AnchorConfig,
    pub postprocess: PostprocessConfig,
    pub association: AssociationConfig,
    pub weights: LossWeights,
    pub focal: FocalParams,
    pub huber: HuberParams,
    pub teacher_dim: usize,
    pub student_dim: usize,
    pub toy_data: ToyDataConfig,
    pub toy_head: ToyHeadConfig,
    pub backfill_tentative: bool,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let toy_head = ToyHeadConfig::default();
        Self {
            anchors: AnchorConfig::default(),
            postprocess: PostprocessConfig::default(),
            association: AssociationConfig::default(),
            weights: LossWeights::default(),
            focal: FocalParams::default(),
            huber: HuberParams::default(),
            teacher_dim: 512,
            student_dim: toy_head.student_dim,
            toy_data: ToyDataConfig::default(),
            toy_head,
            backfill_tentative: true,
            seed: 0,
        }
    }
}

pub const RUN_KEYS: &[&str] = &[
    "seed",
    "anchors.levels",
    "anchors.scales_per_level",
    "anchors.aspect_ratios",
    "anchors.base_size_multiplier",
    "anchors.positive_iou",
    "anchors.negative_iou",
    "postprocess.score_threshold",
    "postprocess.nms_iou",
    "postprocess.max_detections",
    "association.embedding_distance_threshold",
    "association.motion_gate_threshold",
    "association.fusion_lambda",
    "association.iou_fallback_threshold",
    "association.max_age",
    "association.n_init",
    "association.embedding_ema_momentum",
    "loss.alpha_c",
    "loss.alpha_b",
    "loss.alpha_e",
    "focal.alpha",
    "focal.gamma",
    "huber.delta",
    "embedding.teacher_dim",
    "embedding.student_dim",
    "toy.identities",
    "toy.train_images_per_identity",
    "toy.heldout_images_per_identity",
    "toy.feature_dim",
    "toy.appearance_noise",
    "toy.anchor_noise",
    "toy.negatives_per_image",
    "toy.image_size",
    "toy.hidden_dim",
    "toy.learning_rate",
    "toy.iterations",
    "toy.batch_size",
    "track.backfill_tentative",
];

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, IoError> {
        let kv = KeyValues::parse(text, RUN_KEYS)?;
        let mut c = RunConfig::default();
        kv.set("seed", &mut c.seed)?;
        kv.set_list("anchors.levels", &mut c.anchors.levels)?;
        kv.set("anchors.scales_per_level", &mut c.anchors.scales_per_level)?;
        kv.set_list("anchors.aspect_ratios", &mut c.anchors.aspect_ratios)?;
        kv.set(
            "anchors.base_size_multiplier",
            &mut c.anchors.base_size_multiplier,
        )?;
        kv.set("anchors.positive_iou", &mut c.anchors.positive_iou)?;
        kv.set("anchors.negative_iou", &mut c.anchors.negative_iou)?;
        kv.set(
            "postprocess.score_threshold",
            &mut c.postprocess.score_threshold,
        )?;
        kv.set("postprocess.nms_iou", &mut c.postprocess.nms_iou)?;
        kv.set(
            "postprocess.max_detections",
            &mut c.postprocess.max_detections,
        )?;
        let a = &mut c.association;
        kv.set(
            "association.embedding_distance_threshold",
            &mut a.embedding_distance_threshold,
        )?;
        kv.set(
            "association.motion_gate_threshold",
            &mut a.motion_gate_threshold,
        )?;
        kv.set("association.fusion_lambda", &mut a.fusion_lambda)?;
        kv.set(
            "association.iou_fallback_threshold",
            &mut a.iou_fallback_threshold,
        )?;
        kv.set("association.max_age", &mut a.max_age)?;
        kv.set("association.n_init", &mut a.n_init)?;
        kv.set(
            "association.embedding_ema_momentum",
            &mut a.embedding_ema_momentum,
        )?;
        kv.set("loss.alpha_c", &mut c.weights.alpha_c)?;
        kv.set("loss.alpha_b", &mut c.weights.alpha_b)?;
        kv.set("loss.alpha_e", &mut c.weights.alpha_e)?;
        kv.set("focal.alpha", &mut c.focal.alpha)?;
        kv.set("focal.gamma", &mut c.focal.gamma)?;
        kv.set("huber.delta", &mut c.huber.delta)?;
        kv.set("embedding.teacher_dim", &mut c.teacher_dim)?;
        kv.set("embedding.student_dim", &mut c.student_dim)?;
        let d = &mut c.toy_data;
        kv.set("toy.identities", &mut d.identities)?;
        kv.set(
            "toy.train_images_per_identity",
            &mut d.train_images_per_identity,
        )?;
        kv.set(
            "toy.heldout_images_per_identity",
            &mut d.heldout_images_per_identity,
        )?;
        kv.set("toy.feature_dim", &mut d.feature_dim)?;
        kv.set("toy.appearance_noise", &mut d.appearance_noise)?;
        kv.set("toy.anchor_noise", &mut d.anchor_noise)?;
        kv.set("toy.negatives_per_image", &mut d.negatives_per_image)?;
        kv.set("toy.image_size", &mut d.image_size)?;
        let h = &mut c.toy_head;
        kv.set("toy.hidden_dim", &mut h.hidden_dim)?;
        kv.set("toy.learning_rate", &mut h.learning_rate)?;
        kv.set("toy.iterations", &mut h.iterations)?;
        kv.set("toy.batch_size", &mut h.batch_size)?;
        kv.set("track.backfill_tentative", &mut c.backfill_tentative)?;
        c.sync();
        c.validate()?;
        Ok(c)
    }

    /// Propagates shared values (seed, dimensions) into the owned configs.
    fn sync(&mut self) {
        self.toy_data.seed = self.seed;
        self.toy_data.teacher_dim = self.teacher_dim;
        self.toy_head.seed = self.seed;
        self.toy_head.feature_dim = self.toy_data.feature_dim;
        self.toy_head.student_dim = self.student_dim;
    }

    pub fn validate(&self) -> Result<(), IoError> {
        let invalid = |e: &dyn std::fmt::Display| IoError::Invalid(e.to_string());
        self.anchors.validate().map_err(|e| invalid(&e))?;
        self.postprocess.validate().map_err(|e| invalid(&e))?;
        self.association.validate().map_err(|e| invalid(&e))?;
        self.weights.validate().map_err(|e| invalid(&e))?;
        self.focal.validate().map_err(|e| invalid(&e))?;
        self.huber.validate().map_err(|e| invalid(&e))?;
        if self.teacher_dim == 0 || self.student_dim == 0 || self.student_dim > self.teacher_dim {
            return Err(IoError::Invalid(format!(
                "embedding dimensions need 1 <= student ({}) <= teacher ({})",
                self.student_dim, self.teacher_dim
            )));
        }
        Ok(())
    }

    pub fn losses(&self) -> LossSettings {
        LossSettings {
            weights: self.weights,
            focal: self.focal,
            huber: self.huber,
        }
    }

    pub fn to_text(&self) -> String {
        let mut o = String::new();
        let a = &self.association;
        let d = &self.toy_data;
        let h = &self.toy_head;
        let _ = writeln!(o, "seed={}", self.seed);
        let _ = writeln!(o, "anchors.levels={}", join(&self.anchors.levels));
        let _ = writeln!(
            o,
            "anchors.scales_per_level={}",
            self.anchors.scales_per_level
        );
        let _ = writeln!(
            o,
            "anchors.aspect_ratios={}",
            join(&self.anchors.aspect_ratios)
        );
        let _ = writeln!(
            o,
            "anchors.base_size_multiplier={}",
            self.anchors.base_size_multiplier
        );
        let _ = writeln!(o, "anchors.positive_iou={}", self.anchors.positive_iou);
        let _ = writeln!(o, "anchors.negative_iou={}", self.anchors.negative_iou);
        let _ = writeln!(
            o,
            "postprocess.score_threshold={}",
            self.postprocess.score_threshold
        );
        let _ = writeln!(o, "postprocess.nms_iou={}", self.postprocess.nms_iou);
        let _ = writeln!(
            o,
            "postprocess.max_detections={}",
            self.postprocess.max_detections
        );
        let _ = writeln!(
            o,
            "association.embedding_distance_threshold={}",
            a.embedding_distance_threshold
        );
        let _ = writeln!(
            o,
            "association.motion_gate_threshold={}",
            a.motion_gate_threshold
        );
        let _ = writeln!(o, "association.fusion_lambda={}", a.fusion_lambda);
        let _ = writeln!(
            o,
            "association.iou_fallback_threshold={}",
            a.iou_fallback_threshold
        );
        let _ = writeln!(o, "association.max_age={}", a.max_age);
        let _ = writeln!(o, "association.n_init={}", a.n_init);
        let _ = writeln!(
            o,
            "association.embedding_ema_momentum={}",
            a.embedding_ema_momentum
        );
        let _ = writeln!(o, "loss.alpha_c={}", self.weights.alpha_c);
        let _ = writeln!(o, "loss.alpha_b={}", self.weights.alpha_b);
        let _ = writeln!(o, "loss.alpha_e={}", self.weights.alpha_e);
        let _ = writeln!(o, "focal.alpha={}", self.focal.alpha);
        let _ = writeln!(o, "focal.gamma={}", self.focal.gamma);
        let _ = writeln!(o, "huber.delta={}", self.huber.delta);
        let _ = writeln!(o, "embedding.teacher_dim={}", self.teacher_dim);
        let _ = writeln!(o, "embedding.student_dim={}", self.student_dim);
        let _ = writeln!(o, "toy.identities={}", d.identities);
        let _ = writeln!(
            o,
            "toy.train_images_per_identity={}",
            d.train_images_per_identity
        );
        let _ = writeln!(
            o,
            "toy.heldout_images_per_identity={}",
            d.heldout_images_per_identity
        );
        let _ = writeln!(o, "toy.feature_dim={}", d.feature_dim);
        let _ = writeln!(o, "toy.appearance_noise={}", d.appearance_noise);
        let _ = writeln!(o, "toy.anchor_noise={}", d.anchor_noise);
        let _ = writeln!(o, "toy.negatives_per_image={}", d.negatives_per_image);
        let _ = writeln!(o, "toy.image_size={}", d.image_size);
        let _ = writeln!(o, "toy.hidden_dim={}", h.hidden_dim);
        let _ = writeln!(o, "toy.learning_rate={}", h.learning_rate);
        let _ = writeln!(o, "toy.iterations={}", h.iterations);
        let _ = writeln!(o, "toy.batch_size={}", h.batch_size);
        let _ = writeln!(o, "track.backfill_tentative={}", self.backfill_tentative);
        o
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_defaults() {
        let c = RunConfig::default();
        assert_eq!(c.anchors.levels, vec![3, 4, 5, 6, 7]);
        assert_eq!(c.anchors.scales_per_level, 3);
        assert_eq!(c.anchors.aspect_ratios, vec![0.25, 0.5, 1.0]);
        assert_eq!(
            (
                c.postprocess.score_threshold,
                c.postprocess.nms_iou,
                c.postprocess.max_detections
            ),
            (0.05, 0.5, 100)
        );
        assert_eq!(c.association.iou_fallback_threshold, 0.5);
        assert_eq!(
            (c.weights.alpha_c, c.weights.alpha_b, c.weights.alpha_e),
            (1.0, 50.0, 10.0)
        );
        assert_eq!((c.focal.alpha, c.focal.gamma), (0.25, 1.5));
        assert_eq!(c.huber.delta, 0.1);
        assert_eq!((c.teacher_dim, c.student_dim), (512, 128));
    }

    #[test]
    fn golden_lines() {
        let text = RunConfig::default().to_text();
        for line in [
            "anchors.levels=3,4,5,6,7",
            "anchors.scales_per_level=3",
            "anchors.aspect_ratios=0.25,0.5,1",
            "postprocess.score_threshold=0.05",
            "postprocess.nms_iou=0.5",
            "postprocess.max_detections=100",
            "association.iou_fallback_threshold=0.5",
            "loss.alpha_c=1",
            "loss.alpha_b=50",
            "loss.alpha_e=10",
            "focal.alpha=0.25",
            "focal.gamma=1.5",
            "huber.delta=0.1",
            "embedding.teacher_dim=512",
            "embedding.student_dim=128",
        ] {
            assert!(text.lines().any(|l| l == line), "missing {line}");
        }
        assert_eq!(text.lines().count(), RUN_KEYS.len());
    }

    #[test]
    fn text_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
        assert_eq!(RunConfig::parse("").unwrap(), c);
        let tweaked =
            RunConfig::parse("# comment\nassociation.fusion_lambda = 0\nseed=9\n").unwrap();
        assert_eq!(tweaked.association.fusion_lambda, 0.0);
        assert_eq!(tweaked.toy_head.seed, 9);
        assert_eq!(RunConfig::parse(&tweaked.to_text()).unwrap(), tweaked);
    }

    #[test]
    fn rejects_bad_documents() {
        let e = RunConfig::parse("seed=1\nbogus=2\n").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
        assert!(RunConfig::parse("seed=1\nseed=2\n").is_err());
        assert!(RunConfig::parse("postprocess.nms_iou=1.5").is_err());
        assert!(RunConfig::parse("seed=abc").is_err());
        assert!(RunConfig::parse("embedding.student_dim=1024").is_err());
        assert!(RunConfig::parse("anchors.negative_iou=0.6").is_err());
        assert!(RunConfig::parse("just text").is_err());
    }
}
