//! Axis-aligned box arithmetic.
//!
//! Boxes are stored in corner form with real-valued pixel coordinates
//! (origin top-left). MOTChallenge `(x, y, w, h)` rows are converted at the
//! I/O boundary with [`BBox::from_xywh`] / [`BBox::to_xywh`].

use thiserror::Error;

use crate::distill::StudentEmbedding;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("box coordinates must be finite, got ({0}, {1}, {2}, {3})")]
    NonFinite(f64, f64, f64, f64),
    #[error("box corners are inverted: ({0}, {1}, {2}, {3})")]
    Inverted(f64, f64, f64, f64),
    #[error("detection score {0} outside [0, 1]")]
    Score(f64),
    #[error("box height must be positive for (cx, cy, a, h) form, got {0}")]
    NonPositiveHeight(f64),
}

/// Axis-aligned rectangle `(x_min, y_min, x_max, y_max)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeometryError> {
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite(x_min, y_min, x_max, y_max));
        }
        if x_max < x_min || y_max < y_min {
            return Err(GeometryError::Inverted(x_min, y_min, x_max, y_max));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Builds a box from a top-left corner plus width and height.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        Self::new(x, y, x + w, y + h)
    }

    pub fn to_xywh(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.width(), self.height()]
    }

    /// Builds a box from center, aspect ratio `w / h` and height.
    pub fn from_cxcyah(cx: f64, cy: f64, aspect: f64, h: f64) -> Result<Self, GeometryError> {
        let w = aspect * h;
        Self::new(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h)
    }

    /// Center, aspect ratio and height. Fails for zero-height boxes.
    pub fn to_cxcyah(&self) -> Result<[f64; 4], GeometryError> {
        let h = self.height();
        if h <= 0.0 {
            return Err(GeometryError::NonPositiveHeight(h));
        }
        let (cx, cy) = self.center();
        Ok([cx, cy, self.width() / h, h])
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }

    pub fn area(&self) -> f64 {
        area(self)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        BBox {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
        }
    }
}

pub fn area(b: &BBox) -> f64 {
    (b.x_max - b.x_min) * (b.y_max - b.y_min)
}

/// Intersection over union. Two zero-area boxes give 0.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    let union = area(a) + area(b) - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Clamps every coordinate into `[0, width] x [0, height]`.
pub fn clip(b: &BBox, width: f64, height: f64) -> BBox {
    BBox {
        x_min: b.x_min.clamp(0.0, width),
        y_min: b.y_min.clamp(0.0, height),
        x_max: b.x_max.clamp(0.0, width),
        y_max: b.y_max.clamp(0.0, height),
    }
}

/// A detector output: box, confidence and optionally a regressed embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDetection {
    pub bbox: BBox,
    pub score: f64,
    pub embedding: Option<StudentEmbedding>,
}

impl ScoredDetection {
    pub fn new(
        bbox: BBox,
        score: f64,
        embedding: Option<StudentEmbedding>,
    ) -> Result<Self, GeometryError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(GeometryError::Score(score));
        }
        Ok(Self {
            bbox,
            score,
            embedding,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn b(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn iou_examples() {
        assert_eq!(iou(&b(0., 0., 2., 2.), &b(0., 0., 2., 2.)), 1.0);
        assert_eq!(iou(&b(0., 0., 1., 1.), &b(5., 5., 6., 6.)), 0.0);
        assert_relative_eq!(iou(&b(0., 0., 2., 2.), &b(1., 0., 3., 2.)), 1.0 / 3.0);
        assert_eq!(iou(&b(1., 1., 1., 1.), &b(1., 1., 1., 1.)), 0.0);
    }

    #[test]
    fn area_examples() {
        assert_eq!(area(&b(0., 0., 0., 0.)), 0.0);
        assert_eq!(area(&b(0., 0., 2., 3.)), 6.0);
        assert_eq!(area(&b(1., 1., 2., 2.)), 1.0);
    }

    #[test]
    fn clip_examples() {
        assert_eq!(clip(&b(-1., -1., 5., 5.), 4., 4.), b(0., 0., 4., 4.));
        assert_eq!(clip(&b(1., 1., 2., 3.), 4., 4.), b(1., 1., 2., 3.));
        assert_eq!(clip(&b(3., 3., 9., 9.), 4., 4.), b(3., 3., 4., 4.));
    }

    #[test]
    fn rejects_invalid_boxes() {
        assert!(matches!(
            BBox::new(2., 0., 1., 1.),
            Err(GeometryError::Inverted(..))
        ));
        assert!(matches!(
            BBox::new(f64::NAN, 0., 1., 1.),
            Err(GeometryError::NonFinite(..))
        ));
        assert!(ScoredDetection::new(b(0., 0., 1., 1.), 1.5, None).is_err());
    }

    #[test]
    fn cxcyah_round_trip() {
        let bx = b(10., 20., 40., 80.);
        let [cx, cy, a, h] = bx.to_cxcyah().unwrap();
        assert_eq!((cx, cy, a, h), (25., 50., 0.5, 60.));
        let back = BBox::from_cxcyah(cx, cy, a, h).unwrap();
        assert_relative_eq!(back.x_min, bx.x_min);
        assert_relative_eq!(back.y_max, bx.y_max);
        assert!(b(0., 0., 1., 0.).to_cxcyah().is_err());
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (
            -100.0..100.0f64,
            -100.0..100.0f64,
            0.0..50.0f64,
            0.0..50.0f64,
        )
            .prop_map(|(x, y, w, h)| BBox::from_xywh(x, y, w, h).unwrap())
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), c in arb_box()) {
            let v = iou(&a, &c);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(v, iou(&c, &a));
        }

        #[test]
        fn iou_self_is_one(a in arb_box()) {
            prop_assume!(a.area() > 1e-6);
            prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn iou_translation_invariant(a in arb_box(), c in arb_box(), dx in -50.0..50.0f64, dy in -50.0..50.0f64) {
            let before = iou(&a, &c);
            let after = iou(&a.translate(dx, dy), &c.translate(dx, dy));
            prop_assert!((before - after).abs() < 1e-9);
        }

        #[test]
        fn clip_keeps_invariants(a in arb_box(), w in 1.0..200.0f64, h in 1.0..200.0f64) {
            let c = clip(&a, w, h);
            prop_assert!(BBox::new(c.x_min, c.y_min, c.x_max, c.y_max).is_ok());
            prop_assert!(c.x_min >= 0.0 && c.x_max <= w && c.y_min >= 0.0 && c.y_max <= h);
        }
    }
}
