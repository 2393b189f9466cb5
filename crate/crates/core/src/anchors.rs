//! Multi-level anchor grid and IoU-based label assignment.
//!
//! Level `l` has stride `2^l`; its anchors sit at feature-cell centers
//! `(i + 0.5) * stride` and have base edge `base_size_multiplier * 2^l`,
//! multiplied by octave scales `2^(k / S)`. An aspect ratio `r` is `w / h`.

use thiserror::Error;

use crate::distill::TeacherEmbedding;
use crate::geometry::{iou, BBox};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnchorError {
    #[error("anchor config has no pyramid levels")]
    NoLevels,
    #[error("pyramid levels must be strictly increasing")]
    LevelOrder,
    #[error("invalid anchor config: {0}")]
    Config(String),
    #[error("image dimensions must be positive, got {0}x{1}")]
    ImageSize(u32, u32),
    #[error("teacher embedding {index} has dimension {found}, expected {expected}")]
    EmbeddingDim {
        index: usize,
        expected: usize,
        found: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorConfig {
    pub levels: Vec<u32>,
    pub scales_per_level: u32,
    pub aspect_ratios: Vec<f64>,
    pub base_size_multiplier: f64,
    pub positive_iou: f64,
    pub negative_iou: f64,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        Self {
            levels: vec![3, 4, 5, 6, 7],
            scales_per_level: 3,
            aspect_ratios: vec![0.25, 0.5, 1.0],
            base_size_multiplier: 4.0,
            positive_iou: 0.5,
            negative_iou: 0.4,
        }
    }
}

impl AnchorConfig {
    pub fn validate(&self) -> Result<(), AnchorError> {
        if self.levels.is_empty() {
            return Err(AnchorError::NoLevels);
        }
        if self.levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(AnchorError::LevelOrder);
        }
        if self.levels.iter().any(|&l| l > 30) {
            return Err(AnchorError::Config("pyramid level above 30".into()));
        }
        if self.scales_per_level == 0 {
            return Err(AnchorError::Config("scales_per_level must be >= 1".into()));
        }
        if self.aspect_ratios.is_empty()
            || self
                .aspect_ratios
                .iter()
                .any(|r| !(r.is_finite() && *r > 0.0))
        {
            return Err(AnchorError::Config("aspect ratios must be positive".into()));
        }
        if !(self.base_size_multiplier.is_finite() && self.base_size_multiplier > 0.0) {
            return Err(AnchorError::Config(
                "base_size_multiplier must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.negative_iou)
            || !(0.0..=1.0).contains(&self.positive_iou)
            || self.positive_iou <= self.negative_iou
        {
            return Err(AnchorError::Config(
                "need 0 <= negative_iou < positive_iou <= 1".into(),
            ));
        }
        Ok(())
    }

    /// Edge lengths `(w, h)` of the `S * R` anchor shapes at `level`,
    /// scale-major.
    pub fn shapes(&self, level: u32) -> Vec<(f64, f64)> {
        let base = self.base_size_multiplier * f64::powi(2.0, level as i32);
        let s = self.scales_per_level;
        let mut out = Vec::with_capacity((s as usize) * self.aspect_ratios.len());
        for k in 0..s {
            let size = base * f64::powf(2.0, k as f64 / s as f64);
            for &r in &self.aspect_ratios {
                out.push((size * r.sqrt(), size / r.sqrt()));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelAnchors {
    pub level: u32,
    pub height: u32,
    pub width: u32,
    /// Row-major over cells, then scale, then aspect ratio.
    pub anchors: Vec<BBox>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorGrid {
    pub levels: Vec<LevelAnchors>,
}

impl AnchorGrid {
    pub fn len(&self) -> usize {
        self.levels.iter().map(|l| l.anchors.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &BBox> {
        self.levels.iter().flat_map(|l| l.anchors.iter())
    }
}

pub fn generate_anchors(
    config: &AnchorConfig,
    image_width: u32,
    image_height: u32,
) -> Result<AnchorGrid, AnchorError> {
    config.validate()?;
    if image_width == 0 || image_height == 0 {
        return Err(AnchorError::ImageSize(image_width, image_height));
    }
    let levels = config
        .levels
        .iter()
        .map(|&level| {
            let stride = 1u64 << level;
            let height = (image_height as u64).div_ceil(stride) as u32;
            let width = (image_width as u64).div_ceil(stride) as u32;
            let shapes = config.shapes(level);
            let mut anchors = Vec::with_capacity(height as usize * width as usize * shapes.len());
            for i in 0..height {
                let cy = (i as f64 + 0.5) * stride as f64;
                for j in 0..width {
                    let cx = (j as f64 + 0.5) * stride as f64;
                    anchors.extend(shapes.iter().map(|&(w, h)| BBox {
                        x_min: cx - 0.5 * w,
                        y_min: cy - 0.5 * h,
                        x_max: cx + 0.5 * w,
                        y_max: cy + 0.5 * h,
                    }));
                }
            }
            LevelAnchors {
                level,
                height,
                width,
                anchors,
            }
        })
        .collect();
    Ok(AnchorGrid { levels })
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnchorLabel {
    Positive {
        gt_index: usize,
        target: BBox,
        embedding: TeacherEmbedding,
    },
    Negative,
    Ignore,
}

impl AnchorLabel {
    pub fn is_positive(&self) -> bool {
        matches!(self, AnchorLabel::Positive { .. })
    }
}

/// One label per anchor, in [`AnchorGrid::iter`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorAssignment {
    pub labels: Vec<AnchorLabel>,
}

impl AnchorAssignment {
    /// `(positive, negative, ignore)` counts.
    pub fn counts(&self) -> (usize, usize, usize) {
        self.labels.iter().fold((0, 0, 0), |(p, n, i), l| match l {
            AnchorLabel::Positive { .. } => (p + 1, n, i),
            AnchorLabel::Negative => (p, n + 1, i),
            AnchorLabel::Ignore => (p, n, i + 1),
        })
    }
}

/// Labels every anchor by its best IoU over the ground truth. Ties go to the
/// lowest GT index; no anchor is force-matched to an otherwise-unmatched GT.
pub fn assign_anchors(
    grid: &AnchorGrid,
    config: &AnchorConfig,
    gts: &[(BBox, TeacherEmbedding)],
) -> Result<AnchorAssignment, AnchorError> {
    if let Some((_, first)) = gts.first() {
        let expected = first.dim();
        if let Some((index, (_, e))) = gts
            .iter()
            .enumerate()
            .find(|(_, (_, e))| e.dim() != expected)
        {
            return Err(AnchorError::EmbeddingDim {
                index,
                expected,
                found: e.dim(),
            });
        }
    }
    let labels = grid
        .iter()
        .map(|anchor| {
            let mut best: Option<(usize, f64)> = None;
            for (g, (gt, _)) in gts.iter().enumerate() {
                let v = iou(anchor, gt);
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((g, v));
                }
            }
            match best {
                Some((g, v)) if v >= config.positive_iou => AnchorLabel::Positive {
                    gt_index: g,
                    target: gts[g].0,
                    embedding: gts[g].1.clone(),
                },
                Some((_, v)) if v >= config.negative_iou => AnchorLabel::Ignore,
                _ => AnchorLabel::Negative,
            }
        })
        .collect();
    Ok(AnchorAssignment { labels })
}

/// Anchor-relative box residual: center offsets scaled by anchor size and
/// log width/height ratios.
pub fn encode_box(anchor: &BBox, target: &BBox) -> [f64; 4] {
    let (ax, ay) = anchor.center();
    let (tx, ty) = target.center();
    let (aw, ah) = (anchor.width(), anchor.height());
    [
        (tx - ax) / aw,
        (ty - ay) / ah,
        (target.width() / aw).ln(),
        (target.height() / ah).ln(),
    ]
}

pub fn decode_box(anchor: &BBox, residual: &[f64; 4]) -> BBox {
    let (ax, ay) = anchor.center();
    let (aw, ah) = (anchor.width(), anchor.height());
    let cx = ax + residual[0] * aw;
    let cy = ay + residual[1] * ah;
    let w = aw * residual[2].exp();
    let h = ah * residual[3].exp();
    BBox {
        x_min: cx - 0.5 * w,
        y_min: cy - 0.5 * h,
        x_max: cx + 0.5 * w,
        y_max: cy + 0.5 * h,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distill::synthetic_oracle_embed;
    use proptest::prelude::*;

    fn cfg(levels: Vec<u32>, s: u32, r: Vec<f64>) -> AnchorConfig {
        AnchorConfig {
            levels,
            scales_per_level: s,
            aspect_ratios: r,
            ..AnchorConfig::default()
        }
    }

    fn emb(id: u64) -> TeacherEmbedding {
        synthetic_oracle_embed(8, id, 0.0, 0, 0)
    }

    #[test]
    fn counts_follow_grid_formula() {
        let c = cfg(vec![5], 3, vec![0.25, 0.5, 1.0]);
        let g = generate_anchors(&c, 32, 32).unwrap();
        assert_eq!((g.levels[0].height, g.levels[0].width), (1, 1));
        assert_eq!(g.len(), 9);
        let g = generate_anchors(&c, 64, 64).unwrap();
        assert_eq!((g.levels[0].height, g.levels[0].width), (2, 2));
        assert_eq!(g.len(), 36);
        // ceil on non-multiples
        let g = generate_anchors(&c, 33, 65).unwrap();
        assert_eq!((g.levels[0].height, g.levels[0].width), (3, 2));
    }

    #[test]
    fn single_anchor_base_size() {
        let g = generate_anchors(&cfg(vec![5], 1, vec![1.0]), 32, 32).unwrap();
        assert_eq!(g.len(), 1);
        let a = g.levels[0].anchors[0];
        assert_eq!(
            a,
            BBox {
                x_min: -48.0,
                y_min: -48.0,
                x_max: 80.0,
                y_max: 80.0
            }
        );
        assert_eq!(a.width(), 128.0);
    }

    #[test]
    fn default_grid_counts() {
        let c = AnchorConfig::default();
        let g = generate_anchors(&c, 1088, 608).unwrap();
        let expected: usize = c
            .levels
            .iter()
            .map(|&l| {
                let s = 1u32 << l;
                9 * 608u32.div_ceil(s) as usize * 1088u32.div_ceil(s) as usize
            })
            .sum();
        assert_eq!(g.len(), expected);
    }

    #[test]
    fn aspect_ratio_is_width_over_height() {
        let shapes = cfg(vec![3], 1, vec![0.25]).shapes(3);
        let (w, h) = shapes[0];
        assert!((w / h - 0.25).abs() < 1e-12);
        assert!((w * h - 32.0 * 32.0).abs() < 1e-9);
    }

    #[test]
    fn config_validation() {
        assert_eq!(
            generate_anchors(&cfg(vec![], 1, vec![1.0]), 8, 8),
            Err(AnchorError::NoLevels)
        );
        assert_eq!(
            cfg(vec![4, 3], 1, vec![1.0]).validate(),
            Err(AnchorError::LevelOrder)
        );
        assert!(cfg(vec![3], 1, vec![0.0]).validate().is_err());
        let c = AnchorConfig {
            negative_iou: 0.6,
            ..AnchorConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(generate_anchors(&AnchorConfig::default(), 0, 8).is_err());
    }

    fn one_anchor_grid(a: BBox) -> AnchorGrid {
        AnchorGrid {
            levels: vec![LevelAnchors {
                level: 0,
                height: 1,
                width: 1,
                anchors: vec![a],
            }],
        }
    }

    #[test]
    fn assignment_examples() {
        let c = AnchorConfig::default();
        let gt = BBox::new(0., 0., 10., 10.).unwrap();
        // identical anchor
        let a = assign_anchors(&one_anchor_grid(gt), &c, &[(gt, emb(1))]).unwrap();
        assert_eq!(
            a.labels[0],
            AnchorLabel::Positive {
                gt_index: 0,
                target: gt,
                embedding: emb(1)
            }
        );
        // IoU 0.3: anchor (0,0,10,3) inside gt -> 30 / 100
        let low = BBox::new(0., 0., 10., 3.).unwrap();
        assert!((iou(&low, &gt) - 0.3).abs() < 1e-12);
        let a = assign_anchors(&one_anchor_grid(low), &c, &[(gt, emb(1))]).unwrap();
        assert_eq!(a.labels[0], AnchorLabel::Negative);
        // IoU 0.45
        let mid = BBox::new(0., 0., 10., 4.5).unwrap();
        assert!((iou(&mid, &gt) - 0.45).abs() < 1e-12);
        let a = assign_anchors(&one_anchor_grid(mid), &c, &[(gt, emb(1))]).unwrap();
        assert_eq!(a.labels[0], AnchorLabel::Ignore);
        // no GT at all
        let a = assign_anchors(&one_anchor_grid(gt), &c, &[]).unwrap();
        assert_eq!(a.labels[0], AnchorLabel::Negative);
    }

    #[test]
    fn ties_go_to_lowest_gt_index() {
        let c = AnchorConfig::default();
        let gt = BBox::new(0., 0., 10., 10.).unwrap();
        let a = assign_anchors(&one_anchor_grid(gt), &c, &[(gt, emb(1)), (gt, emb(2))]).unwrap();
        assert!(matches!(
            a.labels[0],
            AnchorLabel::Positive { gt_index: 0, .. }
        ));
    }

    #[test]
    fn rejects_mixed_embedding_dims() {
        let gt = BBox::new(0., 0., 10., 10.).unwrap();
        let other = synthetic_oracle_embed(4, 1, 0.0, 0, 0);
        let err = assign_anchors(
            &one_anchor_grid(gt),
            &AnchorConfig::default(),
            &[(gt, emb(1)), (gt, other)],
        )
        .unwrap_err();
        assert_eq!(
            err,
            AnchorError::EmbeddingDim {
                index: 1,
                expected: 8,
                found: 4
            }
        );
    }

    #[test]
    fn encode_decode_inverse() {
        let anchor = BBox::new(10., 10., 42., 74.).unwrap();
        let target = BBox::new(12., 5., 50., 90.).unwrap();
        let r = encode_box(&anchor, &target);
        let back = decode_box(&anchor, &r);
        for (x, y) in [
            (back.x_min, target.x_min),
            (back.y_min, target.y_min),
            (back.x_max, target.x_max),
            (back.y_max, target.y_max),
        ] {
            assert!((x - y).abs() < 1e-9);
        }
        assert_eq!(encode_box(&anchor, &anchor), [0.0; 4]);
    }

    fn scene() -> impl Strategy<Value = Vec<BBox>> {
        prop::collection::vec(
            (0.0..200.0f64, 0.0..200.0f64, 8.0..120.0f64, 8.0..120.0f64)
                .prop_map(|(x, y, w, h)| BBox::from_xywh(x, y, w, h).unwrap()),
            0..6,
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn partition_monotone_and_inherited(boxes in scene(), bump in 0.0..0.4f64) {
            let c = cfg(vec![4, 5], 2, vec![0.5, 1.0]);
            let grid = generate_anchors(&c, 256, 256).unwrap();
            let gts: Vec<_> = boxes.iter().enumerate().map(|(i, b)| (*b, emb(i as u64))).collect();
            let a = assign_anchors(&grid, &c, &gts).unwrap();
            let (p, n, i) = a.counts();
            prop_assert_eq!(p + n + i, grid.len());
            for l in &a.labels {
                if let AnchorLabel::Positive { gt_index, target, embedding } = l {
                    prop_assert_eq!(embedding, &gts[*gt_index].1);
                    prop_assert_eq!(target, &gts[*gt_index].0);
                }
            }
            let mut stricter = c.clone();
            stricter.positive_iou = (c.positive_iou + bump).min(1.0);
            let b = assign_anchors(&grid, &stricter, &gts).unwrap();
            prop_assert!(b.counts().0 <= p);
            prop_assert_eq!(a, assign_anchors(&grid, &c, &gts).unwrap());
        }
    }
}
