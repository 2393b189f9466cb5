//! Online multi-object tracker.
//!
//! Every frame: predict all tracklets, associate (see [`association`]),
//! correct matched tracklets, age unmatched ones and open tentative
//! tracklets for unmatched detections. A tentative tracklet is confirmed
//! after `n_init` consecutive matches; a confirmed tracklet that misses a
//! frame becomes lost and is deleted once `time_since_update > max_age`.

pub mod association;
pub mod hungarian;
pub mod kalman;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::distill::StudentEmbedding;
use crate::geometry::{BBox, ScoredDetection};
use crate::postprocess::Appearance;
pub use association::{associate, cost_matrix, Association, AssociationConfig, Candidate};
pub use hungarian::{hungarian, CostMatrix};
pub use kalman::{KalmanError, KalmanFilter, KalmanState, Measurement};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackError {
    #[error("invalid association config: {0}")]
    Config(String),
    #[error("embedding dimension {found} does not match {expected}")]
    EmbeddingDim { expected: usize, found: usize },
    #[error(transparent)]
    Kalman(#[from] KalmanError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Lost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet {
    pub track_id: u64,
    pub state: KalmanState,
    pub appearance: Appearance,
    pub status: TrackStatus,
    /// Consecutive frames with a match.
    pub hits: u32,
    pub time_since_update: u32,
}

impl Tracklet {
    /// Current box estimate from the state mean.
    pub fn bbox(&self) -> BBox {
        let m = &self.state.mean;
        let h = m[3].max(0.0);
        let w = (m[2] * h).max(0.0);
        BBox {
            x_min: m[0] - 0.5 * w,
            y_min: m[1] - 0.5 * h,
            x_max: m[0] + 0.5 * w,
            y_max: m[1] + 0.5 * h,
        }
    }
}

/// Exponential moving average of the appearance, re-normalized.
pub fn update_embedding(current: &Appearance, observed: &Appearance, momentum: f64) -> Appearance {
    match (current, observed) {
        (_, Appearance::Degenerate) => current.clone(),
        (Appearance::Degenerate, obs) => obs.clone(),
        (Appearance::Unit(old), Appearance::Unit(new)) => {
            let mixed: Vec<f64> = old
                .values()
                .iter()
                .zip(new.values())
                .map(|(o, n)| momentum * o + (1.0 - momentum) * n)
                .collect();
            crate::postprocess::normalize_embedding(&StudentEmbedding(mixed))
        }
    }
}

/// One output row: a confirmed tracklet's box in a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackOutput {
    pub frame: u64,
    pub track_id: u64,
    pub bbox: BBox,
}

#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: AssociationConfig,
    kf: KalmanFilter,
    tracks: Vec<Tracklet>,
    next_id: u64,
    frame: u64,
    /// Boxes of still-tentative tracklets, keyed by track id.
    tentative_history: BTreeMap<u64, Vec<TrackOutput>>,
    backfill: Vec<TrackOutput>,
}

impl Tracker {
    pub fn new(cfg: AssociationConfig) -> Result<Self, TrackError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            kf: KalmanFilter::default(),
            tracks: Vec::new(),
            next_id: 1,
            frame: 0,
            tentative_history: BTreeMap::new(),
            backfill: Vec::new(),
        })
    }

    pub fn tracklets(&self) -> &[Tracklet] {
        &self.tracks
    }

    pub fn frame(&self) -> u64 {
        self.frame
    }

    /// Boxes recorded while tracklets confirmed in the last step were still
    /// tentative.
    pub fn take_backfill(&mut self) -> Vec<TrackOutput> {
        std::mem::take(&mut self.backfill)
    }

    /// Advances one frame. Detections without a measurable box (zero height)
    /// are ignored.
    pub fn step(&mut self, detections: &[ScoredDetection]) -> Result<Vec<TrackOutput>, TrackError> {
        self.frame += 1;
        self.backfill.clear();
        for t in self.tracks.iter_mut() {
            t.state = self.kf.predict(&t.state);
        }
        let candidates: Vec<Candidate> = detections
            .iter()
            .filter_map(|d| {
                let [cx, cy, a, h] = d.bbox.to_cxcyah().ok()?;
                Some(Candidate {
                    bbox: d.bbox,
                    measurement: Measurement::new(cx, cy, a, h),
                    appearance: Appearance::from_optional(d.embedding.as_ref()),
                })
            })
            .collect();

        let assoc = associate(&self.tracks, &candidates, &self.cfg, &self.kf)?;

        for &(ti, di) in &assoc.matches {
            let d = &candidates[di];
            let t = &mut self.tracks[ti];
            t.state = self.kf.update(&t.state, &d.measurement)?;
            t.appearance = update_embedding(
                &t.appearance,
                &d.appearance,
                self.cfg.embedding_ema_momentum,
            );
            t.hits += 1;
            t.time_since_update = 0;
            match t.status {
                TrackStatus::Tentative if t.hits >= self.cfg.n_init => {
                    t.status = TrackStatus::Confirmed;
                    if let Some(h) = self.tentative_history.remove(&t.track_id) {
                        self.backfill.extend(h);
                    }
                }
                TrackStatus::Tentative => {
                    let out = TrackOutput {
                        frame: self.frame,
                        track_id: t.track_id,
                        bbox: t.bbox(),
                    };
                    self.tentative_history
                        .entry(t.track_id)
                        .or_default()
                        .push(out);
                }
                TrackStatus::Lost => t.status = TrackStatus::Confirmed,
                TrackStatus::Confirmed => {}
            }
        }

        let mut dead = Vec::new();
        for &ti in &assoc.unmatched_tracklets {
            let t = &mut self.tracks[ti];
            t.time_since_update += 1;
            t.hits = 0;
            match t.status {
                TrackStatus::Tentative => dead.push(t.track_id),
                _ if t.time_since_update > self.cfg.max_age => dead.push(t.track_id),
                _ => t.status = TrackStatus::Lost,
            }
        }
        self.tracks.retain(|t| !dead.contains(&t.track_id));
        for id in dead {
            self.tentative_history.remove(&id);
        }

        for &di in &assoc.unmatched_detections {
            let d = &candidates[di];
            let track_id = self.next_id;
            self.next_id += 1;
            let status = if self.cfg.n_init <= 1 {
                TrackStatus::Confirmed
            } else {
                TrackStatus::Tentative
            };
            let t = Tracklet {
                track_id,
                state: self.kf.initiate(&d.measurement)?,
                appearance: d.appearance.clone(),
                status,
                hits: 1,
                time_since_update: 0,
            };
            if status == TrackStatus::Tentative {
                self.tentative_history.insert(
                    track_id,
                    vec![TrackOutput {
                        frame: self.frame,
                        track_id,
                        bbox: t.bbox(),
                    }],
                );
            }
            self.tracks.push(t);
        }

        Ok(self
            .tracks
            .iter()
            .filter(|t| t.status == TrackStatus::Confirmed && t.time_since_update == 0)
            .map(|t| TrackOutput {
                frame: self.frame,
                track_id: t.track_id,
                bbox: t.bbox(),
            })
            .collect())
    }
}

/// Runs a tracker over consecutive frames (index 0 is frame 1). With
/// `backfill`, boxes a tracklet produced while tentative are emitted once it
/// is confirmed. Output is sorted by frame, then track id.
pub fn track_sequence(
    frames: &[Vec<ScoredDetection>],
    cfg: &AssociationConfig,
    backfill: bool,
) -> Result<Vec<TrackOutput>, TrackError> {
    let mut tracker = Tracker::new(*cfg)?;
    let mut out = Vec::new();
    for dets in frames {
        out.extend(tracker.step(dets)?);
        let extra = tracker.take_backfill();
        if backfill {
            out.extend(extra);
        }
    }
    out.sort_by_key(|o| (o.frame, o.track_id));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distill::synthetic_oracle_embed;

    fn unit(v: &[f64]) -> Appearance {
        crate::postprocess::normalize_embedding(&StudentEmbedding(v.to_vec()))
    }

    fn det(x: f64, y: f64, emb: Option<Vec<f64>>) -> ScoredDetection {
        ScoredDetection::new(
            BBox::from_xywh(x, y, 40.0, 100.0).unwrap(),
            0.9,
            emb.map(StudentEmbedding),
        )
        .unwrap()
    }

    fn emb(id: u64) -> Vec<f64> {
        synthetic_oracle_embed(32, id, 0.0, 0, 0).to_f64()
    }

    fn confirmed_track(x: f64, y: f64, e: Vec<f64>) -> Tracklet {
        let kf = KalmanFilter::default();
        let b = BBox::from_xywh(x, y, 40.0, 100.0).unwrap();
        let [cx, cy, a, h] = b.to_cxcyah().unwrap();
        Tracklet {
            track_id: 1,
            state: kf.initiate(&Measurement::new(cx, cy, a, h)).unwrap(),
            appearance: unit(&e),
            status: TrackStatus::Confirmed,
            hits: 5,
            time_since_update: 0,
        }
    }

    fn candidate(d: &ScoredDetection) -> Candidate {
        let [cx, cy, a, h] = d.bbox.to_cxcyah().unwrap();
        Candidate {
            bbox: d.bbox,
            measurement: Measurement::new(cx, cy, a, h),
            appearance: Appearance::from_optional(d.embedding.as_ref()),
        }
    }

    #[test]
    fn embedding_ema_examples() {
        let a = unit(&[1.0, 0.0]);
        let b = unit(&[0.0, 1.0]);
        assert_eq!(update_embedding(&a, &b, 0.0), b);
        assert_eq!(update_embedding(&a, &a, 0.9), a);
        let Appearance::Unit(m) = update_embedding(&a, &b, 0.9) else {
            panic!()
        };
        assert!((m.values()[0] - 0.99388).abs() < 1e-5);
        assert!((m.values()[1] - 0.11043).abs() < 1e-5);
        assert_eq!(update_embedding(&a, &Appearance::Degenerate, 0.5), a);
        assert_eq!(update_embedding(&Appearance::Degenerate, &b, 0.5), b);
    }

    #[test]
    fn cost_matrix_examples() {
        let kf = KalmanFilter::default();
        let cfg = AssociationConfig::default();
        let t = confirmed_track(100.0, 100.0, emb(1));
        let same = candidate(&det(100.0, 100.0, Some(emb(1))));
        let c = cost_matrix(&[&t], &[&same], &cfg, &kf).unwrap();
        assert!(c.get(0, 0).abs() < 1e-12);

        let far = candidate(&det(400.0, 100.0, Some(emb(1))));
        let c = cost_matrix(&[&t], &[&far], &cfg, &kf).unwrap();
        assert!(!c.is_allowed(0, 0));

        let near = candidate(&det(102.0, 101.0, Some(emb(1))));
        let pure = AssociationConfig {
            fusion_lambda: 1.0,
            ..cfg
        };
        let c = cost_matrix(&[&t], &[&near], &pure, &kf).unwrap();
        assert!(c.get(0, 0).abs() < 1e-12);
        let other = candidate(&det(102.0, 101.0, Some(emb(2))));
        let c = cost_matrix(&[&t], &[&other], &pure, &kf).unwrap();
        assert!(!c.is_allowed(0, 0), "cosine distance ~1 exceeds 0.4");
        let loose = AssociationConfig {
            fusion_lambda: 1.0,
            embedding_distance_threshold: 2.0,
            ..cfg
        };
        let c = cost_matrix(&[&t], &[&other], &loose, &kf).unwrap();
        let expected = association::cosine_distance(&t.appearance, &other.appearance).unwrap();
        assert!((c.get(0, 0) - expected).abs() < 1e-12);

        let wrong_dim = candidate(&det(100.0, 100.0, Some(vec![1.0, 0.0])));
        assert!(matches!(
            cost_matrix(&[&t], &[&wrong_dim], &cfg, &kf),
            Err(TrackError::EmbeddingDim { .. })
        ));
    }

    #[test]
    fn degenerate_embedding_costs_one() {
        let d = association::cosine_distance(&unit(&[1.0, 0.0]), &Appearance::Degenerate).unwrap();
        assert_eq!(d, 1.0);
    }

    #[test]
    fn associate_examples() {
        let kf = KalmanFilter::default();
        let cfg = AssociationConfig::default();
        let t = confirmed_track(100.0, 100.0, emb(1));
        let a = associate(
            std::slice::from_ref(&t),
            &[candidate(&det(100.0, 100.0, Some(emb(1))))],
            &cfg,
            &kf,
        )
        .unwrap();
        assert_eq!(a.matches, vec![(0, 0)]);

        // orthogonal appearance, IoU ~0.9: stage one refuses, stage two accepts
        let shifted = candidate(&det(
            101.0,
            101.0,
            Some(vec![0.0; 31].into_iter().chain([1.0]).collect()),
        ));
        let stage1 = cost_matrix(&[&t], &[&shifted], &cfg, &kf).unwrap();
        assert!(!stage1.is_allowed(0, 0));
        assert!(crate::geometry::iou(&t.bbox(), &shifted.bbox) > 0.9);
        let a = associate(std::slice::from_ref(&t), &[shifted], &cfg, &kf).unwrap();
        assert_eq!(a.matches, vec![(0, 0)]);

        let a = associate(std::slice::from_ref(&t), &[], &cfg, &kf).unwrap();
        assert_eq!(a.unmatched_tracklets, vec![0]);
        assert!(a.matches.is_empty());
    }

    #[test]
    fn first_frame_creates_tentatives() {
        let mut tr = Tracker::new(AssociationConfig::default()).unwrap();
        let out = tr
            .step(&[
                det(0., 0., Some(emb(1))),
                det(200., 0., Some(emb(2))),
                det(400., 0., Some(emb(3))),
            ])
            .unwrap();
        assert!(out.is_empty());
        assert_eq!(tr.tracklets().len(), 3);
        assert!(tr
            .tracklets()
            .iter()
            .all(|t| t.status == TrackStatus::Tentative));
    }

    #[test]
    fn constant_velocity_single_identity() {
        let mut tr = Tracker::new(AssociationConfig::default()).unwrap();
        let mut ids = Vec::new();
        for f in 0..10 {
            let out = tr
                .step(&[det(10.0 + 3.0 * f as f64, 50.0, Some(emb(1)))])
                .unwrap();
            ids.extend(out.iter().map(|o| o.track_id));
            if f == 2 {
                assert_eq!(tr.take_backfill().len(), 2);
            }
        }
        assert_eq!(ids.len(), 8);
        assert!(ids.iter().all(|&i| i == ids[0]));
    }

    #[test]
    fn absence_past_max_age_gets_new_id() {
        let cfg = AssociationConfig {
            max_age: 5,
            ..AssociationConfig::default()
        };
        let run = |gap: usize| {
            let mut tr = Tracker::new(cfg).unwrap();
            let mut ids = Vec::new();
            for _ in 0..4 {
                ids.extend(
                    tr.step(&[det(100., 100., Some(emb(1)))])
                        .unwrap()
                        .iter()
                        .map(|o| o.track_id),
                );
            }
            for _ in 0..gap {
                tr.step(&[]).unwrap();
            }
            let back = tr.step(&[det(100., 100., Some(emb(1)))]).unwrap();
            (ids, back, tr)
        };
        let (ids, back, _) = run(5);
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].track_id, ids[0]);
        let (ids, back, tr) = run(6);
        assert!(back.is_empty());
        assert!(tr.tracklets().iter().all(|t| t.track_id > ids[0]));
    }

    #[test]
    fn ids_never_reused_and_one_match_per_track() {
        let mut tr = Tracker::new(AssociationConfig {
            n_init: 1,
            ..Default::default()
        })
        .unwrap();
        let mut seen = std::collections::BTreeSet::new();
        let mut last_max = 0;
        for f in 0..30 {
            let dets: Vec<_> = (0..(f % 4))
                .map(|k| {
                    det(
                        300.0 * k as f64,
                        10.0,
                        Some(emb(k as u64 + 10 * (f as u64 / 7))),
                    )
                })
                .collect();
            let out = tr.step(&dets).unwrap();
            let mut frame_ids: Vec<_> = out.iter().map(|o| o.track_id).collect();
            frame_ids.sort_unstable();
            frame_ids.dedup();
            assert_eq!(frame_ids.len(), out.len());
            assert!(out.len() <= dets.len());
            for t in tr.tracklets() {
                if seen.insert(t.track_id) {
                    assert!(t.track_id > last_max);
                    last_max = t.track_id;
                }
            }
        }
    }

    #[test]
    fn sequence_backfill_covers_first_frames() {
        let frames: Vec<Vec<ScoredDetection>> = (0..5)
            .map(|f| vec![det(10.0 + f as f64, 20.0, Some(emb(4)))])
            .collect();
        let with = track_sequence(&frames, &AssociationConfig::default(), true).unwrap();
        let without = track_sequence(&frames, &AssociationConfig::default(), false).unwrap();
        assert_eq!(with.len(), 5);
        assert_eq!(without.len(), 3);
        assert_eq!(
            with.iter().map(|o| o.frame).collect::<Vec<_>>(),
            vec![1, 2, 3, 4, 5]
        );
    }
}
