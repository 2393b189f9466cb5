//! MOTChallenge text rows: `frame,id,x,y,w,h,conf,a,b,c`.
//!
//! Rows with more than ten fields carry an embedding in the extra columns.
//! Numbers are written with the shortest representation that reads back to
//! the same `f64`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::IoError;
use crate::distill::StudentEmbedding;
use crate::geometry::{BBox, GeometryError, ScoredDetection};
use crate::metrics::{DetectionFrame, GroundTruthFrame, HypothesisFrame};

#[derive(Debug, Clone, PartialEq)]
pub struct MotRow {
    pub frame: u64,
    /// -1 for detections.
    pub id: i64,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub conf: f64,
    pub trailing: [f64; 3],
    pub embedding: Vec<f64>,
}

impl MotRow {
    pub fn new(frame: u64, id: i64, b: &BBox, conf: f64) -> Self {
        let [x, y, w, h] = b.to_xywh();
        Self {
            frame,
            id,
            x,
            y,
            w,
            h,
            conf,
            trailing: [-1.0; 3],
            embedding: Vec::new(),
        }
    }

    pub fn bbox(&self) -> Result<BBox, GeometryError> {
        BBox::from_xywh(self.x, self.y, self.w, self.h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotFrame {
    pub frame: u64,
    pub rows: Vec<MotRow>,
}

fn parse_int(field: &str, line: usize, what: &str) -> Result<i64, IoError> {
    let t = field.trim();
    if let Ok(v) = t.parse::<i64>() {
        return Ok(v);
    }
    // Some MOT files write integers as floats ("1.0").
    match t.parse::<f64>() {
        Ok(v) if v.fract() == 0.0 && v.abs() < 9.0e15 => Ok(v as i64),
        _ => Err(IoError::line(
            line,
            format!("{what}: expected an integer, got {t:?}"),
        )),
    }
}

fn parse_real(field: &str, line: usize, what: &str) -> Result<f64, IoError> {
    let t = field.trim();
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(IoError::line(
            line,
            format!("{what}: expected a finite number, got {t:?}"),
        )),
    }
}

/// Parses MOT text into frames in ascending order. Rows keep their input
/// order within a frame. Blank lines are skipped.
pub fn parse_mot(text: &str) -> Result<Vec<MotFrame>, IoError> {
    const NAMES: [&str; 10] = [
        "frame", "id", "x", "y", "w", "h", "conf", "field 8", "field 9", "field 10",
    ];
    let mut frames: BTreeMap<u64, Vec<MotRow>> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() < 10 {
            return Err(IoError::line(
                line,
                format!("expected at least 10 fields, found {}", fields.len()),
            ));
        }
        let frame = parse_int(fields[0], line, NAMES[0])?;
        if frame < 1 {
            return Err(IoError::line(
                line,
                format!("frame must be >= 1, got {frame}"),
            ));
        }
        let id = parse_int(fields[1], line, NAMES[1])?;
        let mut real = [0.0; 8];
        for (k, slot) in real.iter_mut().enumerate() {
            *slot = parse_real(fields[k + 2], line, NAMES[k + 2])?;
        }
        if real[2] < 0.0 || real[3] < 0.0 {
            return Err(IoError::line(line, "width and height must be non-negative"));
        }
        let embedding = fields[10..]
            .iter()
            .map(|f| parse_real(f, line, "embedding"))
            .collect::<Result<Vec<_>, _>>()?;
        frames.entry(frame as u64).or_default().push(MotRow {
            frame: frame as u64,
            id,
            x: real[0],
            y: real[1],
            w: real[2],
            h: real[3],
            conf: real[4],
            trailing: [real[5], real[6], real[7]],
            embedding,
        });
    }
    Ok(frames
        .into_iter()
        .map(|(frame, rows)| MotFrame { frame, rows })
        .collect())
}

/// Serializes frames in ascending frame order; rows keep their order.
pub fn write_mot(frames: &[MotFrame]) -> String {
    let mut sorted: Vec<&MotFrame> = frames.iter().collect();
    sorted.sort_by_key(|f| f.frame);
    let mut out = String::new();
    for f in sorted {
        for r in &f.rows {
            let _ = write!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                f.frame,
                r.id,
                r.x,
                r.y,
                r.w,
                r.h,
                r.conf,
                r.trailing[0],
                r.trailing[1],
                r.trailing[2]
            );
            for v in &r.embedding {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
    }
    out
}

/// Groups rows into frames, frame numbers taken from the rows.
pub fn group_rows(rows: Vec<MotRow>) -> Vec<MotFrame> {
    let mut frames: BTreeMap<u64, Vec<MotRow>> = BTreeMap::new();
    for r in rows {
        frames.entry(r.frame).or_default().push(r);
    }
    frames
        .into_iter()
        .map(|(frame, rows)| MotFrame { frame, rows })
        .collect()
}

fn row_box(r: &MotRow) -> Result<BBox, IoError> {
    r.bbox()
        .map_err(|e| IoError::Invalid(format!("frame {}: {e}", r.frame)))
}

pub fn to_ground_truth(frames: &[MotFrame]) -> Result<Vec<GroundTruthFrame>, IoError> {
    frames
        .iter()
        .map(|f| {
            let mut entries = Vec::with_capacity(f.rows.len());
            for r in &f.rows {
                // MOT17 marks ignored boxes with conf 0
                if r.conf == 0.0 {
                    continue;
                }
                if r.id < 0 {
                    return Err(IoError::Invalid(format!(
                        "frame {}: ground truth id must be >= 0",
                        f.frame
                    )));
                }
                if entries.iter().any(|(id, _)| *id == r.id as u64) {
                    return Err(IoError::Invalid(format!(
                        "frame {}: duplicate ground truth id {}",
                        f.frame, r.id
                    )));
                }
                entries.push((r.id as u64, row_box(r)?));
            }
            Ok(GroundTruthFrame {
                frame_index: f.frame,
                entries,
            })
        })
        .collect()
}

pub fn to_hypotheses(frames: &[MotFrame]) -> Result<Vec<HypothesisFrame>, IoError> {
    frames
        .iter()
        .map(|f| {
            let mut entries: Vec<(u64, BBox, f64)> = Vec::with_capacity(f.rows.len());
            for r in &f.rows {
                if r.id < 0 {
                    return Err(IoError::Invalid(format!(
                        "frame {}: track id must be >= 0",
                        f.frame
                    )));
                }
                if entries.iter().any(|(id, _, _)| *id == r.id as u64) {
                    return Err(IoError::Invalid(format!(
                        "frame {}: duplicate track id {}",
                        f.frame, r.id
                    )));
                }
                entries.push((r.id as u64, row_box(r)?, r.conf));
            }
            Ok(HypothesisFrame {
                frame_index: f.frame,
                entries,
            })
        })
        .collect()
}

pub fn to_detection_frames(frames: &[MotFrame]) -> Result<Vec<DetectionFrame>, IoError> {
    frames
        .iter()
        .map(|f| {
            Ok(DetectionFrame {
                frame_index: f.frame,
                entries: f
                    .rows
                    .iter()
                    .map(|r| Ok((row_box(r)?, r.conf)))
                    .collect::<Result<_, IoError>>()?,
            })
        })
        .collect()
}

/// Detections per frame for frames `1..=last`, where `last` is the highest
/// frame present. Frames without rows are empty.
pub fn to_scored_detections(frames: &[MotFrame]) -> Result<Vec<Vec<ScoredDetection>>, IoError> {
    let last = frames.iter().map(|f| f.frame).max().unwrap_or(0);
    let mut out = vec![Vec::new(); last as usize];
    for f in frames {
        for r in &f.rows {
            let embedding =
                (!r.embedding.is_empty()).then(|| StudentEmbedding(r.embedding.clone()));
            let d = ScoredDetection::new(row_box(r)?, r.conf, embedding)
                .map_err(|e| IoError::Invalid(format!("frame {}: {e}", f.frame)))?;
            out[f.frame as usize - 1].push(d);
        }
    }
    Ok(out)
}
