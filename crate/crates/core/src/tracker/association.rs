//! Two-stage data association.
//!
//! Stage one matches confirmed and lost tracklets to detections on a fused
//! cost `lambda * cosine_distance + (1 - lambda) * min(gating / gate, 1)`,
//! with both cues gated. Stage two matches whatever is left, tentative
//! tracklets included, on `1 - IoU` with IoU below the fallback threshold
//! forbidden.

use super::hungarian::{hungarian, CostMatrix};
use super::kalman::{KalmanFilter, Measurement, CHI2_95_4DOF};
use super::{TrackError, TrackStatus, Tracklet};
use crate::geometry::{iou, BBox};
use crate::postprocess::Appearance;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssociationConfig {
    /// Maximum cosine distance for a stage-one match.
    pub embedding_distance_threshold: f64,
    /// Maximum squared Mahalanobis distance for a stage-one match.
    pub motion_gate_threshold: f64,
    /// Weight on appearance in the fused cost. At 0 the appearance gate is off.
    pub fusion_lambda: f64,
    pub iou_fallback_threshold: f64,
    pub max_age: u32,
    pub n_init: u32,
    pub embedding_ema_momentum: f64,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        Self {
            embedding_distance_threshold: 0.4,
            motion_gate_threshold: CHI2_95_4DOF,
            fusion_lambda: 0.98,
            iou_fallback_threshold: 0.5,
            max_age: 30,
            n_init: 3,
            embedding_ema_momentum: 0.9,
        }
    }
}

impl AssociationConfig {
    pub fn validate(&self) -> Result<(), TrackError> {
        let bad = |m: &str| Err(TrackError::Config(m.to_string()));
        if !(0.0..=2.0).contains(&self.embedding_distance_threshold) {
            return bad("embedding_distance_threshold must lie in [0, 2]");
        }
        if !(self.motion_gate_threshold.is_finite() && self.motion_gate_threshold > 0.0) {
            return bad("motion_gate_threshold must be positive");
        }
        if !(0.0..=1.0).contains(&self.fusion_lambda) {
            return bad("fusion_lambda must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.iou_fallback_threshold) {
            return bad("iou_fallback_threshold must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.embedding_ema_momentum) {
            return bad("embedding_ema_momentum must lie in [0, 1]");
        }
        if self.n_init == 0 {
            return bad("n_init must be >= 1");
        }
        Ok(())
    }
}

/// A detection prepared for association.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub bbox: BBox,
    pub measurement: Measurement,
    pub appearance: Appearance,
}

/// Cosine distance between unit appearances; 1 when either is degenerate.
pub fn cosine_distance(a: &Appearance, b: &Appearance) -> Result<f64, TrackError> {
    match (a.as_unit(), b.as_unit()) {
        (Some(x), Some(y)) => {
            if x.dim() != y.dim() {
                return Err(TrackError::EmbeddingDim {
                    expected: x.dim(),
                    found: y.dim(),
                });
            }
            let dot: f64 = x.values().iter().zip(y.values()).map(|(p, q)| p * q).sum();
            Ok((1.0 - dot).clamp(0.0, 2.0))
        }
        _ => Ok(1.0),
    }
}

/// Fused appearance + motion cost between tracklets and detections.
pub fn cost_matrix(
    tracklets: &[&Tracklet],
    detections: &[&Candidate],
    cfg: &AssociationConfig,
    kf: &KalmanFilter,
) -> Result<CostMatrix, TrackError> {
    let lambda = cfg.fusion_lambda;
    let mut cost = CostMatrix::new(tracklets.len(), detections.len(), CostMatrix::FORBIDDEN);
    for (r, t) in tracklets.iter().enumerate() {
        let (projected, cov) = kf.project(&t.state);
        for (c, d) in detections.iter().enumerate() {
            let appearance = cosine_distance(&t.appearance, &d.appearance)?;
            let gating = super::kalman::mahalanobis_sq(&(d.measurement - projected), &cov)?;
            if gating > cfg.motion_gate_threshold {
                continue;
            }
            if lambda > 0.0 && appearance > cfg.embedding_distance_threshold {
                continue;
            }
            let motion = (gating / cfg.motion_gate_threshold).min(1.0);
            cost.set(r, c, lambda * appearance + (1.0 - lambda) * motion);
        }
    }
    Ok(cost)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Association {
    /// `(tracklet index, detection index)` pairs.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_tracklets: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

/// Runs both association stages. Indices refer to the input slices.
pub fn associate(
    tracklets: &[Tracklet],
    detections: &[Candidate],
    cfg: &AssociationConfig,
    kf: &KalmanFilter,
) -> Result<Association, TrackError> {
    let mut track_used = vec![false; tracklets.len()];
    let mut det_used = vec![false; detections.len()];
    let mut matches = Vec::new();

    let stage1_tracks: Vec<usize> = (0..tracklets.len())
        .filter(|&i| tracklets[i].status != TrackStatus::Tentative)
        .collect();
    let all_dets: Vec<usize> = (0..detections.len()).collect();
    if !stage1_tracks.is_empty() && !all_dets.is_empty() {
        let t: Vec<&Tracklet> = stage1_tracks.iter().map(|&i| &tracklets[i]).collect();
        let d: Vec<&Candidate> = detections.iter().collect();
        let cost = cost_matrix(&t, &d, cfg, kf)?;
        for (r, c) in hungarian(&cost) {
            let (ti, di) = (stage1_tracks[r], c);
            track_used[ti] = true;
            det_used[di] = true;
            matches.push((ti, di));
        }
    }

    let rest_tracks: Vec<usize> = (0..tracklets.len()).filter(|&i| !track_used[i]).collect();
    let rest_dets: Vec<usize> = (0..detections.len()).filter(|&i| !det_used[i]).collect();
    if !rest_tracks.is_empty() && !rest_dets.is_empty() {
        let mut cost = CostMatrix::new(rest_tracks.len(), rest_dets.len(), CostMatrix::FORBIDDEN);
        for (r, &ti) in rest_tracks.iter().enumerate() {
            let predicted = tracklets[ti].bbox();
            for (c, &di) in rest_dets.iter().enumerate() {
                let v = iou(&predicted, &detections[di].bbox);
                if v >= cfg.iou_fallback_threshold {
                    cost.set(r, c, 1.0 - v);
                }
            }
        }
        for (r, c) in hungarian(&cost) {
            let (ti, di) = (rest_tracks[r], rest_dets[c]);
            track_used[ti] = true;
            det_used[di] = true;
            matches.push((ti, di));
        }
    }

    matches.sort_unstable();
    Ok(Association {
        matches,
        unmatched_tracklets: (0..tracklets.len()).filter(|&i| !track_used[i]).collect(),
        unmatched_detections: (0..detections.len()).filter(|&i| !det_used[i]).collect(),
    })
}
