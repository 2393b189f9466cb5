//! Synthetic multi-object sequences with known identities.
//!
//! Each identity is a fixed-size box moving at constant velocity, bouncing
//! off the image border and occasionally picking a new heading. Detections are
//! the ground-truth boxes with Gaussian corner noise, random dropout,
//! occlusion windows and uniform false positives. Every detection carries a
//! synthetic embedding of its source identity.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::KeyValues;
use super::mot::{MotFrame, MotRow};
use super::IoError;
use crate::distill::{synthetic_oracle_embed, StudentEmbedding};
use crate::geometry::{BBox, ScoredDetection};
use crate::metrics::{DetectionFrame, GroundTruthFrame};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub identities: u32,
    pub frames: u32,
    pub image_width: f64,
    pub image_height: f64,
    pub box_height_min: f64,
    pub box_height_max: f64,
    /// Box width over height.
    pub aspect_ratio: f64,
    /// Speed range in pixels per frame.
    pub speed_min: f64,
    pub speed_max: f64,
    /// Per-frame probability that an identity picks a new heading.
    pub turn_probability: f64,
    pub occlusion_windows: u32,
    pub occlusion_length: u32,
    /// Standard deviation of the per-corner detection noise, pixels.
    pub detection_noise: f64,
    pub dropout: f64,
    /// Per-frame probability of one false positive.
    pub false_positive_rate: f64,
    pub embedding_dim: usize,
    pub embedding_noise: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            identities: 10,
            frames: 100,
            image_width: 1920.0,
            image_height: 1080.0,
            box_height_min: 80.0,
            box_height_max: 200.0,
            aspect_ratio: 0.41,
            speed_min: 1.0,
            speed_max: 4.0,
            turn_probability: 0.01,
            occlusion_windows: 0,
            occlusion_length: 10,
            detection_noise: 0.0,
            dropout: 0.0,
            false_positive_rate: 0.0,
            embedding_dim: 128,
            embedding_noise: 0.0,
            seed: 0,
        }
    }
}

pub const SCENARIO_KEYS: &[&str] = &[
    "identities",
    "frames",
    "image_width",
    "image_height",
    "box_height_min",
    "box_height_max",
    "aspect_ratio",
    "speed_min",
    "speed_max",
    "turn_probability",
    "occlusion_windows",
    "occlusion_length",
    "detection_noise",
    "dropout",
    "false_positive_rate",
    "embedding_dim",
    "embedding_noise",
    "seed",
];

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, IoError> {
        let kv = KeyValues::parse(text, SCENARIO_KEYS)?;
        let mut c = Self::default();
        kv.set("identities", &mut c.identities)?;
        kv.set("frames", &mut c.frames)?;
        kv.set("image_width", &mut c.image_width)?;
        kv.set("image_height", &mut c.image_height)?;
        kv.set("box_height_min", &mut c.box_height_min)?;
        kv.set("box_height_max", &mut c.box_height_max)?;
        kv.set("aspect_ratio", &mut c.aspect_ratio)?;
        kv.set("speed_min", &mut c.speed_min)?;
        kv.set("speed_max", &mut c.speed_max)?;
        kv.set("turn_probability", &mut c.turn_probability)?;
        kv.set("occlusion_windows", &mut c.occlusion_windows)?;
        kv.set("occlusion_length", &mut c.occlusion_length)?;
        kv.set("detection_noise", &mut c.detection_noise)?;
        kv.set("dropout", &mut c.dropout)?;
        kv.set("false_positive_rate", &mut c.false_positive_rate)?;
        kv.set("embedding_dim", &mut c.embedding_dim)?;
        kv.set("embedding_noise", &mut c.embedding_noise)?;
        kv.set("seed", &mut c.seed)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_text(&self) -> String {
        let mut o = String::new();
        let _ = writeln!(o, "identities={}", self.identities);
        let _ = writeln!(o, "frames={}", self.frames);
        let _ = writeln!(o, "image_width={}", self.image_width);
        let _ = writeln!(o, "image_height={}", self.image_height);
        let _ = writeln!(o, "box_height_min={}", self.box_height_min);
        let _ = writeln!(o, "box_height_max={}", self.box_height_max);
        let _ = writeln!(o, "aspect_ratio={}", self.aspect_ratio);
        let _ = writeln!(o, "speed_min={}", self.speed_min);
        let _ = writeln!(o, "speed_max={}", self.speed_max);
        let _ = writeln!(o, "turn_probability={}", self.turn_probability);
        let _ = writeln!(o, "occlusion_windows={}", self.occlusion_windows);
        let _ = writeln!(o, "occlusion_length={}", self.occlusion_length);
        let _ = writeln!(o, "detection_noise={}", self.detection_noise);
        let _ = writeln!(o, "dropout={}", self.dropout);
        let _ = writeln!(o, "false_positive_rate={}", self.false_positive_rate);
        let _ = writeln!(o, "embedding_dim={}", self.embedding_dim);
        let _ = writeln!(o, "embedding_noise={}", self.embedding_noise);
        let _ = writeln!(o, "seed={}", self.seed);
        o
    }

    pub fn validate(&self) -> Result<(), IoError> {
        let bad = |m: &str| Err(IoError::Invalid(m.to_string()));
        if self.identities == 0 || self.frames == 0 || self.embedding_dim == 0 {
            return bad("identities, frames and embedding_dim must be positive");
        }
        for (name, v) in [
            ("turn_probability", self.turn_probability),
            ("dropout", self.dropout),
            ("false_positive_rate", self.false_positive_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(IoError::Invalid(format!("{name} must lie in [0, 1]")));
            }
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let non_negative = |v: f64| v.is_finite() && v >= 0.0;
        if !(positive(self.box_height_min)
            && self.box_height_max >= self.box_height_min
            && positive(self.aspect_ratio))
        {
            return bad("box sizes must be positive with box_height_min <= box_height_max");
        }
        if !(self.box_height_max < self.image_height
            && self.box_height_max * self.aspect_ratio < self.image_width)
        {
            return bad("largest box must fit inside the image");
        }
        if !(non_negative(self.speed_min)
            && self.speed_max >= self.speed_min
            && self.speed_max.is_finite())
        {
            return bad("speeds must satisfy 0 <= speed_min <= speed_max");
        }
        if !(non_negative(self.detection_noise) && non_negative(self.embedding_noise)) {
            return bad("noise levels must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDetection {
    pub bbox: BBox,
    pub score: f64,
    /// Source identity; false positives get identities above every real one.
    pub identity: u64,
    pub false_positive: bool,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub ground_truth: Vec<GroundTruthFrame>,
    /// Index `i` holds frame `i + 1`.
    pub detections: Vec<Vec<SyntheticDetection>>,
}

/// First identity number handed to false positives.
pub const FALSE_POSITIVE_IDENTITY_BASE: u64 = 1_000_000;

/// Image id used for frame `frame` when detections become dataset records.
pub fn frame_image_id(frame: u64) -> String {
    format!("{frame:06}")
}

struct Walker {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    vx: f64,
    vy: f64,
}

fn heading(rng: &mut impl Rng, cfg: &ScenarioConfig) -> (f64, f64) {
    let speed = if cfg.speed_max > cfg.speed_min {
        rng.random_range(cfg.speed_min..=cfg.speed_max)
    } else {
        cfg.speed_min
    };
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    (speed * angle.cos(), speed * angle.sin())
}

fn bounce(pos: &mut f64, vel: &mut f64, half: f64, limit: f64) {
    if *pos - half < 0.0 {
        *pos = 2.0 * half - *pos;
        *vel = vel.abs();
    } else if *pos + half > limit {
        *pos = 2.0 * (limit - half) - *pos;
        *vel = -vel.abs();
    }
}

pub fn synth_scenario(cfg: &ScenarioConfig) -> Result<Scenario, IoError> {
    cfg.validate()?;
    let mut motion = rng::stream(cfg.seed, "scenario-motion", &[]);
    let mut walkers: Vec<Walker> = (0..cfg.identities)
        .map(|_| {
            let h = if cfg.box_height_max > cfg.box_height_min {
                motion.random_range(cfg.box_height_min..=cfg.box_height_max)
            } else {
                cfg.box_height_min
            };
            let w = h * cfg.aspect_ratio;
            let cx = motion.random_range(w / 2.0..=cfg.image_width - w / 2.0);
            let cy = motion.random_range(h / 2.0..=cfg.image_height - h / 2.0);
            let (vx, vy) = heading(&mut motion, cfg);
            Walker {
                cx,
                cy,
                w,
                h,
                vx,
                vy,
            }
        })
        .collect();

    let mut occ = rng::stream(cfg.seed, "scenario-occlusion", &[]);
    let occlusions: Vec<(u64, u32, u32)> = (0..cfg.occlusion_windows)
        .map(|_| {
            let id = occ.random_range(1..=cfg.identities as u64);
            let start = occ.random_range(1..=cfg.frames);
            (
                id,
                start,
                start.saturating_add(cfg.occlusion_length.max(1) - 1),
            )
        })
        .collect();
    let occluded = |id: u64, f: u32| {
        occlusions
            .iter()
            .any(|&(i, s, e)| i == id && (s..=e).contains(&f))
    };

    let noise = Normal::new(0.0, cfg.detection_noise.max(0.0)).expect("finite sigma");
    let mut ground_truth = Vec::with_capacity(cfg.frames as usize);
    let mut detections = Vec::with_capacity(cfg.frames as usize);
    let mut next_fp = FALSE_POSITIVE_IDENTITY_BASE;
    for f in 1..=cfg.frames {
        if f > 1 {
            for w in walkers.iter_mut() {
                if cfg.turn_probability > 0.0 && motion.random_bool(cfg.turn_probability) {
                    (w.vx, w.vy) = heading(&mut motion, cfg);
                }
                w.cx += w.vx;
                w.cy += w.vy;
                bounce(&mut w.cx, &mut w.vx, w.w / 2.0, cfg.image_width);
                bounce(&mut w.cy, &mut w.vy, w.h / 2.0, cfg.image_height);
            }
        }
        let mut det_rng = rng::stream(cfg.seed, "scenario-detections", &[f as u64]);
        let mut gt_entries = Vec::with_capacity(walkers.len());
        let mut dets = Vec::new();
        for (k, w) in walkers.iter().enumerate() {
            let id = k as u64 + 1;
            let b = BBox::from_cxcyah(w.cx, w.cy, cfg.aspect_ratio, w.h).expect("positive box");
            gt_entries.push((id, b));
            // draws happen for every identity so that one identity's fate does
            // not shift another's noise
            let drop = det_rng.random_bool(cfg.dropout);
            let n: [f64; 4] = std::array::from_fn(|_| noise.sample(&mut det_rng));
            let score = det_rng.random_range(0.5..1.0);
            if drop || occluded(id, f) {
                continue;
            }
            let (x0, x1) = (b.x_min + n[0], b.x_max + n[2]);
            let (y0, y1) = (b.y_min + n[1], b.y_max + n[3]);
            let bbox =
                BBox::new(x0.min(x1), y0.min(y1), x0.max(x1), y0.max(y1)).expect("finite box");
            let key = rng::derive_seed(cfg.seed, "scenario-sample", &[f as u64, id]);
            dets.push(SyntheticDetection {
                bbox,
                score,
                identity: id,
                false_positive: false,
                embedding: synthetic_oracle_embed(
                    cfg.embedding_dim,
                    id,
                    cfg.embedding_noise,
                    cfg.seed,
                    key,
                )
                .to_f64(),
            });
        }
        if cfg.false_positive_rate > 0.0 && det_rng.random_bool(cfg.false_positive_rate) {
            let h = det_rng.random_range(cfg.box_height_min..=cfg.box_height_max);
            let w = h * cfg.aspect_ratio;
            let x = det_rng.random_range(0.0..=cfg.image_width - w);
            let y = det_rng.random_range(0.0..=cfg.image_height - h);
            let identity = next_fp;
            next_fp += 1;
            dets.push(SyntheticDetection {
                bbox: BBox::from_xywh(x, y, w, h).expect("positive box"),
                score: det_rng.random_range(0.05..0.6),
                identity,
                false_positive: true,
                embedding: synthetic_oracle_embed(cfg.embedding_dim, identity, 0.0, cfg.seed, 0)
                    .to_f64(),
            });
        }
        ground_truth.push(GroundTruthFrame {
            frame_index: f as u64,
            entries: gt_entries,
        });
        detections.push(dets);
    }
    Ok(Scenario {
        ground_truth,
        detections,
    })
}

impl Scenario {
    pub fn scored_detections(&self) -> Vec<Vec<ScoredDetection>> {
        self.detections
            .iter()
            .map(|f| {
                f.iter()
                    .map(|d| ScoredDetection {
                        bbox: d.bbox,
                        score: d.score,
                        embedding: Some(StudentEmbedding(d.embedding.clone())),
                    })
                    .collect()
            })
            .collect()
    }

    pub fn detection_frames(&self) -> Vec<DetectionFrame> {
        self.detections
            .iter()
            .enumerate()
            .map(|(i, f)| DetectionFrame {
                frame_index: i as u64 + 1,
                entries: f.iter().map(|d| (d.bbox, d.score)).collect(),
            })
            .collect()
    }

    pub fn gt_rows(&self) -> Vec<MotFrame> {
        self.ground_truth
            .iter()
            .map(|g| MotFrame {
                frame: g.frame_index,
                rows: g
                    .entries
                    .iter()
                    .map(|(id, b)| MotRow::new(g.frame_index, *id as i64, b, 1.0))
                    .collect(),
            })
            .collect()
    }

    /// Detection rows (`id = -1`), optionally with embedding columns.
    pub fn detection_rows(&self, with_embeddings: bool) -> Vec<MotFrame> {
        self.rows(|d| {
            let mut r = MotRow::new(0, -1, &d.bbox, d.score);
            if with_embeddings {
                r.embedding = d.embedding.clone();
            }
            r
        })
    }

    /// Detection rows whose id column holds the source identity.
    pub fn identity_rows(&self) -> Vec<MotFrame> {
        self.rows(|d| MotRow::new(0, d.identity as i64, &d.bbox, d.score))
    }

    fn rows(&self, make: impl Fn(&SyntheticDetection) -> MotRow) -> Vec<MotFrame> {
        self.detections
            .iter()
            .enumerate()
            .filter(|(_, f)| !f.is_empty())
            .map(|(i, f)| {
                let frame = i as u64 + 1;
                MotFrame {
                    frame,
                    rows: f.iter().map(|d| MotRow { frame, ..make(d) }).collect(),
                }
            })
            .collect()
    }
}
