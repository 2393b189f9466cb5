//! Inference post-processing: score filter, greedy NMS, top-k cut and
//! embedding normalization. All sorts are stable, so equal scores keep input
//! order.

use thiserror::Error;

use crate::distill::StudentEmbedding;
use crate::geometry::{iou, ScoredDetection};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PostprocessError {
    #[error("invalid postprocess config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostprocessConfig {
    pub score_threshold: f64,
    pub nms_iou: f64,
    pub max_detections: usize,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        Self {
            score_threshold: 0.05,
            nms_iou: 0.5,
            max_detections: 100,
        }
    }
}

impl PostprocessConfig {
    pub fn validate(&self) -> Result<(), PostprocessError> {
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return Err(PostprocessError::Config(
                "score_threshold must lie in [0, 1]".into(),
            ));
        }
        if !(self.nms_iou > 0.0 && self.nms_iou <= 1.0) {
            return Err(PostprocessError::Config(
                "nms_iou must lie in (0, 1]".into(),
            ));
        }
        if self.max_detections == 0 {
            return Err(PostprocessError::Config(
                "max_detections must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Keeps detections with `score >= threshold`, in input order.
pub fn filter_scores(dets: &[ScoredDetection], threshold: f64) -> Vec<ScoredDetection> {
    dets.iter()
        .filter(|d| d.score >= threshold)
        .cloned()
        .collect()
}

fn by_score_desc(dets: &[ScoredDetection]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dets.len()).collect();
    idx.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    idx
}

/// Greedy class-agnostic NMS. A detection survives iff its IoU with every
/// already-kept detection is `<= iou_threshold`. Output is score-descending.
pub fn nms(dets: &[ScoredDetection], iou_threshold: f64) -> Vec<ScoredDetection> {
    let mut kept: Vec<&ScoredDetection> = Vec::new();
    for i in by_score_desc(dets) {
        let d = &dets[i];
        if kept.iter().all(|k| iou(&k.bbox, &d.bbox) <= iou_threshold) {
            kept.push(d);
        }
    }
    kept.into_iter().cloned().collect()
}

/// The `k` highest-scoring detections, score-descending.
pub fn top_k(dets: &[ScoredDetection], k: usize) -> Vec<ScoredDetection> {
    by_score_desc(dets)
        .into_iter()
        .take(k)
        .map(|i| dets[i].clone())
        .collect()
}

/// Appearance cue attached to a detection or tracklet.
#[derive(Debug, Clone, PartialEq)]
pub enum Appearance {
    Unit(StudentEmbedding),
    /// Zero-norm or missing embedding: carries no appearance information.
    Degenerate,
}

impl Appearance {
    pub fn from_optional(e: Option<&StudentEmbedding>) -> Self {
        e.map_or(Appearance::Degenerate, normalize_embedding)
    }

    pub fn as_unit(&self) -> Option<&StudentEmbedding> {
        match self {
            Appearance::Unit(e) => Some(e),
            Appearance::Degenerate => None,
        }
    }
}

pub fn normalize_embedding(e: &StudentEmbedding) -> Appearance {
    let n = e.norm();
    if n > 0.0 && n.is_finite() {
        Appearance::Unit(StudentEmbedding(e.values().iter().map(|v| v / n).collect()))
    } else {
        Appearance::Degenerate
    }
}

/// Score filter, then NMS, then the top-k cut.
pub fn postprocess(
    dets: &[ScoredDetection],
    cfg: &PostprocessConfig,
) -> Result<Vec<ScoredDetection>, PostprocessError> {
    cfg.validate()?;
    let kept = nms(&filter_scores(dets, cfg.score_threshold), cfg.nms_iou);
    Ok(top_k(&kept, cfg.max_detections))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;
    use proptest::prelude::*;

    fn det(x: f64, score: f64) -> ScoredDetection {
        ScoredDetection::new(BBox::new(x, 0.0, x + 10.0, 10.0).unwrap(), score, None).unwrap()
    }

    fn scores(d: &[ScoredDetection]) -> Vec<f64> {
        d.iter().map(|d| d.score).collect()
    }

    #[test]
    fn filter_examples() {
        let d = vec![det(0., 0.04), det(20., 0.05), det(40., 0.9)];
        assert_eq!(filter_scores(&d, 0.0), d);
        assert_eq!(scores(&filter_scores(&d, 0.05)), vec![0.05, 0.9]);
        assert!(filter_scores(&d, 0.95).is_empty());
    }

    #[test]
    fn nms_examples() {
        assert_eq!(scores(&nms(&[det(0., 0.8), det(0., 0.9)], 0.5)), vec![0.9]);
        assert_eq!(
            scores(&nms(&[det(0., 0.5), det(50., 0.9), det(100., 0.7)], 0.5)),
            vec![0.9, 0.7, 0.5]
        );
        // A at 0, B at 3 (IoU 7/13 with A), C at 6 (IoU 4/16 with A, 7/13 with B)
        let a = det(0., 0.9);
        let b = det(3., 0.8);
        let c = det(6., 0.7);
        assert!(
            iou(&a.bbox, &b.bbox) > 0.5
                && iou(&b.bbox, &c.bbox) > 0.5
                && iou(&a.bbox, &c.bbox) <= 0.5
        );
        let kept = nms(&[a.clone(), b, c.clone()], 0.5);
        assert_eq!(kept, vec![a, c]);
    }

    #[test]
    fn top_k_examples() {
        let d = vec![det(0., 0.3), det(20., 0.7), det(40., 0.5)];
        assert_eq!(top_k(&d, 10).len(), 3);
        assert_eq!(scores(&top_k(&d, 1)), vec![0.7]);
        let tied = vec![det(0., 0.5), det(20., 0.5), det(40., 0.5)];
        assert_eq!(top_k(&tied, 2), vec![tied[0].clone(), tied[1].clone()]);
    }

    #[test]
    fn normalize_examples() {
        let e = StudentEmbedding(vec![3.0, 4.0]);
        assert_eq!(
            normalize_embedding(&e),
            Appearance::Unit(StudentEmbedding(vec![0.6, 0.8]))
        );
        let u = StudentEmbedding(vec![0.0, 1.0]);
        assert_eq!(normalize_embedding(&u), Appearance::Unit(u.clone()));
        assert_eq!(
            normalize_embedding(&StudentEmbedding(vec![0.0, 0.0])),
            Appearance::Degenerate
        );
        assert_eq!(Appearance::from_optional(None), Appearance::Degenerate);
    }

    #[test]
    fn config_validation() {
        assert!(PostprocessConfig::default().validate().is_ok());
        assert!(PostprocessConfig {
            nms_iou: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(PostprocessConfig {
            max_detections: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(PostprocessConfig {
            score_threshold: 1.2,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    fn arb_dets() -> impl Strategy<Value = Vec<ScoredDetection>> {
        prop::collection::vec(
            (
                0.0..100.0f64,
                0.0..100.0f64,
                1.0..40.0f64,
                1.0..40.0f64,
                0.0..=1.0f64,
            )
                .prop_map(|(x, y, w, h, s)| {
                    ScoredDetection::new(BBox::from_xywh(x, y, w, h).unwrap(), s, None).unwrap()
                }),
            0..40,
        )
    }

    proptest! {
        #[test]
        fn nms_invariants(d in arb_dets()) {
            let kept = nms(&d, 0.5);
            for i in 0..kept.len() {
                for j in i + 1..kept.len() {
                    prop_assert!(iou(&kept[i].bbox, &kept[j].bbox) <= 0.5);
                }
                prop_assert!(d.contains(&kept[i]));
            }
            if let Some(best) = d.iter().max_by(|a, b| a.score.total_cmp(&b.score)) {
                prop_assert!(kept.iter().any(|k| k.score == best.score));
            }
            prop_assert!(kept.windows(2).all(|w| w[0].score >= w[1].score));
        }

        #[test]
        fn pipeline_deterministic(d in arb_dets()) {
            let cfg = PostprocessConfig { max_detections: 5, ..Default::default() };
            let a = postprocess(&d, &cfg).unwrap();
            prop_assert!(a.len() <= 5);
            prop_assert_eq!(a, postprocess(&d, &cfg).unwrap());
        }

        #[test]
        fn normalize_idempotent(v in prop::collection::vec(-10.0..10.0f64, 1..16)) {
            if let Appearance::Unit(u) = normalize_embedding(&StudentEmbedding(v)) {
                let Appearance::Unit(again) = normalize_embedding(&u) else { panic!("unit became degenerate") };
                for (a, b) in u.values().iter().zip(again.values()) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }
}
