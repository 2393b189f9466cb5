//! Detection AP at IoU 0.5, CLEAR MOT metrics and identity metrics.
//!
//! Sequences are lists of frames keyed by a 1-based frame index; a frame
//! missing from one side counts as an empty frame.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::geometry::{iou, BBox};
use crate::tracker::hungarian::{hungarian, CostMatrix};

/// Ground-truth boxes of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthFrame {
    pub frame_index: u64,
    pub entries: Vec<(u64, BBox)>,
}

/// Tracker output of one frame: `(track id, box, score)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisFrame {
    pub frame_index: u64,
    pub entries: Vec<(u64, BBox, f64)>,
}

/// Scored detections of one frame (no identities).
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionFrame {
    pub frame_index: u64,
    pub entries: Vec<(BBox, f64)>,
}

/// Area under the all-point interpolated precision/recall curve.
///
/// Detections are pooled over frames and ranked by score (stable). Each takes
/// the highest-IoU still-unmatched ground truth in its frame with IoU at least
/// `iou_thresh`, otherwise it is a false positive. Returns `None` when there
/// is no ground truth.
pub fn average_precision(
    dets: &[DetectionFrame],
    gts: &[GroundTruthFrame],
    iou_thresh: f64,
) -> Option<f64> {
    let total_gt: usize = gts.iter().map(|g| g.entries.len()).sum();
    if total_gt == 0 {
        return None;
    }
    let gt_by_frame: HashMap<u64, &GroundTruthFrame> =
        gts.iter().map(|g| (g.frame_index, g)).collect();
    let mut pooled: Vec<(u64, BBox, f64)> = dets
        .iter()
        .flat_map(|f| f.entries.iter().map(move |(b, s)| (f.frame_index, *b, *s)))
        .collect();
    pooled.sort_by(|a, b| b.2.total_cmp(&a.2));

    let mut taken: HashMap<u64, Vec<bool>> = HashMap::new();
    let mut tp_flags = Vec::with_capacity(pooled.len());
    for (frame, b, _) in &pooled {
        let mut hit = false;
        if let Some(g) = gt_by_frame.get(frame) {
            let used = taken
                .entry(*frame)
                .or_insert_with(|| vec![false; g.entries.len()]);
            let mut best: Option<(usize, f64)> = None;
            for (k, (_, gb)) in g.entries.iter().enumerate() {
                if used[k] {
                    continue;
                }
                let v = iou(b, gb);
                if v >= iou_thresh && best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((k, v));
                }
            }
            if let Some((k, _)) = best {
                used[k] = true;
                hit = true;
            }
        }
        tp_flags.push(hit);
    }

    let mut precisions = Vec::with_capacity(tp_flags.len());
    let mut recalls = Vec::with_capacity(tp_flags.len());
    let mut tp = 0usize;
    for (i, &hit) in tp_flags.iter().enumerate() {
        if hit {
            tp += 1;
        }
        precisions.push(tp as f64 / (i + 1) as f64);
        recalls.push(tp as f64 / total_gt as f64);
    }
    // precision envelope, right to left
    for i in (0..precisions.len().saturating_sub(1)).rev() {
        precisions[i] = precisions[i].max(precisions[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, r) in precisions.iter().zip(&recalls) {
        if *r > prev_recall {
            ap += (r - prev_recall) * p;
            prev_recall = *r;
        }
    }
    Some(ap)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClearMetrics {
    /// `None` when the sequence has no ground truth.
    pub mota: Option<f64>,
    /// Mean `1 - IoU` over matches; `None` without matches.
    pub motp: Option<f64>,
    pub num_gt: usize,
    pub num_hyp: usize,
    pub matches: usize,
    pub fp: usize,
    pub fn_: usize,
    pub idsw: usize,
    pub gt_tracks: usize,
    pub mt: usize,
    pub ml: usize,
}

type Labelled = Vec<(u64, BBox)>;

fn aligned(gts: &[GroundTruthFrame], hyps: &[HypothesisFrame]) -> Vec<(u64, Labelled, Labelled)> {
    let mut frames: BTreeMap<u64, (Labelled, Labelled)> = BTreeMap::new();
    for g in gts {
        frames
            .entry(g.frame_index)
            .or_default()
            .0
            .extend(g.entries.iter().copied());
    }
    for h in hyps {
        frames
            .entry(h.frame_index)
            .or_default()
            .1
            .extend(h.entries.iter().map(|(id, b, _)| (*id, *b)));
    }
    frames.into_iter().map(|(f, (g, h))| (f, g, h)).collect()
}

/// CLEAR MOT with IoU correspondence.
///
/// Per frame, pairings from earlier frames that are still valid
/// (IoU >= `iou_thresh`) are kept; remaining pairs are resolved by Hungarian
/// matching on `1 - IoU`. A match whose hypothesis differs from the ground
/// truth's last matched hypothesis is an identity switch. MT/ML use the
/// 80% / 20% coverage thresholds.
pub fn clear_metrics(
    gts: &[GroundTruthFrame],
    hyps: &[HypothesisFrame],
    iou_thresh: f64,
) -> ClearMetrics {
    let mut last_match: HashMap<u64, u64> = HashMap::new();
    let mut present: BTreeMap<u64, usize> = BTreeMap::new();
    let mut tracked: BTreeMap<u64, usize> = BTreeMap::new();
    let (mut num_gt, mut num_hyp, mut matches, mut fp, mut fn_, mut idsw) = (0, 0, 0, 0, 0, 0);
    let mut dist_sum = 0.0;

    for (_, g, h) in aligned(gts, hyps) {
        num_gt += g.len();
        num_hyp += h.len();
        for (gid, _) in &g {
            *present.entry(*gid).or_default() += 1;
        }
        let mut g_used = vec![false; g.len()];
        let mut h_used = vec![false; h.len()];
        let mut pairs: Vec<(usize, usize, f64)> = Vec::new();

        for (gi, (gid, gb)) in g.iter().enumerate() {
            let Some(&prev) = last_match.get(gid) else {
                continue;
            };
            if let Some(hi) = h.iter().position(|(hid, _)| *hid == prev) {
                let v = iou(gb, &h[hi].1);
                if !h_used[hi] && v >= iou_thresh {
                    g_used[gi] = true;
                    h_used[hi] = true;
                    pairs.push((gi, hi, v));
                }
            }
        }

        let g_rest: Vec<usize> = (0..g.len()).filter(|&i| !g_used[i]).collect();
        let h_rest: Vec<usize> = (0..h.len()).filter(|&i| !h_used[i]).collect();
        let mut cost = CostMatrix::new(g_rest.len(), h_rest.len(), CostMatrix::FORBIDDEN);
        for (r, &gi) in g_rest.iter().enumerate() {
            for (c, &hi) in h_rest.iter().enumerate() {
                let v = iou(&g[gi].1, &h[hi].1);
                if v >= iou_thresh {
                    cost.set(r, c, 1.0 - v);
                }
            }
        }
        for (r, c) in hungarian(&cost) {
            let (gi, hi) = (g_rest[r], h_rest[c]);
            let gid = g[gi].0;
            if last_match.get(&gid).is_some_and(|&prev| prev != h[hi].0) {
                idsw += 1;
            }
            pairs.push((gi, hi, 1.0 - cost.get(r, c)));
        }

        for &(gi, hi, v) in &pairs {
            last_match.insert(g[gi].0, h[hi].0);
            *tracked.entry(g[gi].0).or_default() += 1;
            dist_sum += 1.0 - v;
        }
        matches += pairs.len();
        fn_ += g.len() - pairs.len();
        fp += h.len() - pairs.len();
    }

    let (mut mt, mut ml) = (0, 0);
    for (gid, &span) in &present {
        let ratio = tracked.get(gid).copied().unwrap_or(0) as f64 / span as f64;
        if ratio >= 0.8 {
            mt += 1;
        }
        if ratio <= 0.2 {
            ml += 1;
        }
    }
    ClearMetrics {
        mota: (num_gt > 0).then(|| 1.0 - (fn_ + fp + idsw) as f64 / num_gt as f64),
        motp: (matches > 0).then(|| dist_sum / matches as f64),
        num_gt,
        num_hyp,
        matches,
        fp,
        fn_,
        idsw,
        gt_tracks: present.len(),
        mt,
        ml,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityMetrics {
    pub idf1: f64,
    pub idp: f64,
    pub idr: f64,
    pub idtp: usize,
    pub num_gt: usize,
    pub num_hyp: usize,
}

/// Per-pair counts of frames in which a GT identity and a hypothesis
/// identity overlap with IoU >= `iou_thresh`.
pub fn identity_cooccurrence(
    gts: &[GroundTruthFrame],
    hyps: &[HypothesisFrame],
    iou_thresh: f64,
) -> (Vec<u64>, Vec<u64>, Vec<Vec<usize>>, usize, usize) {
    let frames = aligned(gts, hyps);
    let g_ids: Vec<u64> = frames
        .iter()
        .flat_map(|(_, g, _)| g.iter().map(|e| e.0))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let h_ids: Vec<u64> = frames
        .iter()
        .flat_map(|(_, _, h)| h.iter().map(|e| e.0))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let gi: HashMap<u64, usize> = g_ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let hi: HashMap<u64, usize> = h_ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let mut counts = vec![vec![0usize; h_ids.len()]; g_ids.len()];
    let (mut ng, mut nh) = (0, 0);
    for (_, g, h) in &frames {
        ng += g.len();
        nh += h.len();
        for (gid, gb) in g {
            for (hid, hb) in h {
                if iou(gb, hb) >= iou_thresh {
                    counts[gi[gid]][hi[hid]] += 1;
                }
            }
        }
    }
    (g_ids, h_ids, counts, ng, nh)
}

/// IDF1 / IDP / IDR under the identity mapping that maximizes co-occurrence.
/// With no boxes on either side all three are 1; with boxes on only one side
/// the scores are 0.
pub fn idf1(
    gts: &[GroundTruthFrame],
    hyps: &[HypothesisFrame],
    iou_thresh: f64,
) -> IdentityMetrics {
    let (g_ids, h_ids, counts, num_gt, num_hyp) = identity_cooccurrence(gts, hyps, iou_thresh);
    if num_gt == 0 && num_hyp == 0 {
        return IdentityMetrics {
            idf1: 1.0,
            idp: 1.0,
            idr: 1.0,
            idtp: 0,
            num_gt,
            num_hyp,
        };
    }
    // Zero-overlap pairs stay allowed at cost 0 so the solver maximizes
    // overlap rather than the number of mapped identities.
    let mut cost = CostMatrix::new(g_ids.len(), h_ids.len(), 0.0);
    for (r, row) in counts.iter().enumerate() {
        for (c, &n) in row.iter().enumerate() {
            cost.set(r, c, -(n as f64));
        }
    }
    let idtp: usize = hungarian(&cost).iter().map(|&(r, c)| counts[r][c]).sum();
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    IdentityMetrics {
        idf1: ratio(2 * idtp, num_gt + num_hyp),
        idp: ratio(idtp, num_hyp),
        idr: ratio(idtp, num_gt),
        idtp,
        num_gt,
        num_hyp,
    }
}

/// Metric bundle for one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceEval {
    pub name: String,
    pub clear: ClearMetrics,
    pub identity: IdentityMetrics,
    pub ap: Option<f64>,
}

impl SequenceEval {
    pub fn mt_ratio(&self) -> f64 {
        if self.clear.gt_tracks == 0 {
            0.0
        } else {
            self.clear.mt as f64 / self.clear.gt_tracks as f64
        }
    }

    pub fn ml_ratio(&self) -> f64 {
        if self.clear.gt_tracks == 0 {
            0.0
        } else {
            self.clear.ml as f64 / self.clear.gt_tracks as f64
        }
    }
}

pub fn evaluate_sequence(
    name: &str,
    gts: &[GroundTruthFrame],
    hyps: &[HypothesisFrame],
    dets: Option<&[DetectionFrame]>,
) -> SequenceEval {
    SequenceEval {
        name: name.to_string(),
        clear: clear_metrics(gts, hyps, 0.5),
        identity: idf1(gts, hyps, 0.5),
        ap: dets.and_then(|d| average_precision(d, gts, 0.5)),
    }
}

/// Pools counts over sequences (MOTA and IDF1 recomputed from summed counts;
/// MOTP weighted by matches; AP averaged over sequences that have one).
pub fn aggregate(evals: &[SequenceEval]) -> SequenceEval {
    let sum = |f: &dyn Fn(&SequenceEval) -> usize| evals.iter().map(f).sum::<usize>();
    let num_gt = sum(&|e| e.clear.num_gt);
    let num_hyp = sum(&|e| e.clear.num_hyp);
    let matches = sum(&|e| e.clear.matches);
    let fp = sum(&|e| e.clear.fp);
    let fn_ = sum(&|e| e.clear.fn_);
    let idsw = sum(&|e| e.clear.idsw);
    let idtp = sum(&|e| e.identity.idtp);
    let motp_num: f64 = evals
        .iter()
        .filter_map(|e| e.clear.motp.map(|m| m * e.clear.matches as f64))
        .sum();
    let aps: Vec<f64> = evals.iter().filter_map(|e| e.ap).collect();
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let both_empty = num_gt == 0 && num_hyp == 0;
    SequenceEval {
        name: "aggregate".to_string(),
        clear: ClearMetrics {
            mota: (num_gt > 0).then(|| 1.0 - (fn_ + fp + idsw) as f64 / num_gt as f64),
            motp: (matches > 0).then(|| motp_num / matches as f64),
            num_gt,
            num_hyp,
            matches,
            fp,
            fn_,
            idsw,
            gt_tracks: sum(&|e| e.clear.gt_tracks),
            mt: sum(&|e| e.clear.mt),
            ml: sum(&|e| e.clear.ml),
        },
        identity: IdentityMetrics {
            idf1: if both_empty {
                1.0
            } else {
                ratio(2 * idtp, num_gt + num_hyp)
            },
            idp: if both_empty {
                1.0
            } else {
                ratio(idtp, num_hyp)
            },
            idr: if both_empty { 1.0 } else { ratio(idtp, num_gt) },
            idtp,
            num_gt,
            num_hyp,
        },
        ap: (!aps.is_empty()).then(|| aps.iter().sum::<f64>() / aps.len() as f64),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| x.to_string())
}

/// Metric report: one `[sequence <name>]` section per sequence, then an
/// `[aggregate]` section, each a list of `key=value` lines. Undefined values
/// are written as `undefined`.
pub fn format_report(evals: &[SequenceEval]) -> String {
    let mut out = String::new();
    let mut section = |header: String, e: &SequenceEval| {
        out.push_str(&header);
        out.push('\n');
        let c = &e.clear;
        let i = &e.identity;
        let lines = [
            ("mota", opt(c.mota)),
            ("motp", opt(c.motp)),
            ("idf1", i.idf1.to_string()),
            ("idp", i.idp.to_string()),
            ("idr", i.idr.to_string()),
            ("fp", c.fp.to_string()),
            ("fn", c.fn_.to_string()),
            ("idsw", c.idsw.to_string()),
            ("gt_boxes", c.num_gt.to_string()),
            ("hyp_boxes", c.num_hyp.to_string()),
            ("gt_tracks", c.gt_tracks.to_string()),
            ("mt", c.mt.to_string()),
            ("ml", c.ml.to_string()),
            ("mt_ratio", e.mt_ratio().to_string()),
            ("ml_ratio", e.ml_ratio().to_string()),
            ("ap50", opt(e.ap)),
        ];
        for (k, v) in lines {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        }
        out.push('\n');
    };
    for e in evals {
        section(format!("[sequence {}]", e.name), e);
    }
    section("[aggregate]".to_string(), &aggregate(evals));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x: f64) -> BBox {
        BBox::from_xywh(x, 0.0, 10.0, 20.0).unwrap()
    }

    fn gt(frame: u64, e: &[(u64, f64)]) -> GroundTruthFrame {
        GroundTruthFrame {
            frame_index: frame,
            entries: e.iter().map(|&(id, x)| (id, bx(x))).collect(),
        }
    }

    fn hyp(frame: u64, e: &[(u64, f64)]) -> HypothesisFrame {
        HypothesisFrame {
            frame_index: frame,
            entries: e.iter().map(|&(id, x)| (id, bx(x), 1.0)).collect(),
        }
    }

    #[test]
    fn ap_examples() {
        let g = vec![gt(1, &[(1, 0.0)])];
        let perfect = vec![DetectionFrame {
            frame_index: 1,
            entries: vec![(bx(0.0), 0.9)],
        }];
        assert_eq!(average_precision(&perfect, &g, 0.5), Some(1.0));
        let tp_first = vec![DetectionFrame {
            frame_index: 1,
            entries: vec![(bx(0.0), 0.9), (bx(100.0), 0.5)],
        }];
        assert_eq!(average_precision(&tp_first, &g, 0.5), Some(1.0));
        let fp_first = vec![DetectionFrame {
            frame_index: 1,
            entries: vec![(bx(0.0), 0.5), (bx(100.0), 0.9)],
        }];
        assert_eq!(average_precision(&fp_first, &g, 0.5), Some(0.5));
        assert_eq!(average_precision(&[], &g, 0.5), Some(0.0));
        assert_eq!(average_precision(&perfect, &[], 0.5), None);
    }

    #[test]
    fn duplicate_detection_is_false_positive() {
        let g = vec![gt(1, &[(1, 0.0)])];
        let d = vec![DetectionFrame {
            frame_index: 1,
            entries: vec![(bx(0.0), 0.9), (bx(0.5), 0.8)],
        }];
        assert_eq!(average_precision(&d, &g, 0.5), Some(1.0));
    }

    #[test]
    fn clear_perfect() {
        let g = vec![gt(1, &[(1, 0.0), (2, 50.0)]), gt(2, &[(1, 2.0), (2, 52.0)])];
        let h = vec![
            hyp(1, &[(7, 0.0), (8, 50.0)]),
            hyp(2, &[(7, 2.0), (8, 52.0)]),
        ];
        let m = clear_metrics(&g, &h, 0.5);
        assert_eq!(m.mota, Some(1.0));
        assert_eq!((m.fp, m.fn_, m.idsw, m.mt, m.ml), (0, 0, 0, 2, 0));
        assert_eq!(m.motp, Some(0.0));
    }

    #[test]
    fn clear_miss_and_switch() {
        let g = vec![gt(1, &[(1, 0.0), (2, 50.0)]), gt(2, &[(1, 0.0), (2, 50.0)])];
        let h = vec![hyp(1, &[(7, 0.0), (8, 50.0)]), hyp(2, &[(9, 0.0)])];
        let m = clear_metrics(&g, &h, 0.5);
        assert_eq!((m.fp, m.fn_, m.idsw), (0, 1, 1));
        assert_eq!(m.mota, Some(0.5));
    }

    #[test]
    fn clear_empty_hypothesis() {
        let g = vec![gt(1, &[(1, 0.0), (2, 50.0)]), gt(2, &[(1, 0.0)])];
        let m = clear_metrics(&g, &[], 0.5);
        assert_eq!(m.mota, Some(0.0));
        assert_eq!((m.fp, m.fn_, m.idsw, m.ml), (0, 3, 0, 2));
        assert_eq!(clear_metrics(&[], &[hyp(1, &[(1, 0.0)])], 0.5).mota, None);
    }

    #[test]
    fn carry_over_beats_better_iou() {
        // GT 1 was matched to hyp 7; in frame 2 hyp 8 overlaps better but 7 is still valid.
        let g = vec![gt(1, &[(1, 0.0)]), gt(2, &[(1, 0.0)])];
        let h = vec![
            hyp(1, &[(7, 0.0)]),
            HypothesisFrame {
                frame_index: 2,
                entries: vec![(7, bx(2.0), 1.0), (8, bx(0.0), 1.0)],
            },
        ];
        let m = clear_metrics(&g, &h, 0.5);
        assert_eq!((m.idsw, m.fp), (0, 1));
    }

    #[test]
    fn idf1_examples() {
        let g: Vec<_> = (1..=4).map(|f| gt(f, &[(1, 0.0)])).collect();
        let same: Vec<_> = (1..=4).map(|f| hyp(f, &[(3, 0.0)])).collect();
        assert_eq!(idf1(&g, &same, 0.5).idf1, 1.0);
        let split: Vec<_> = (1..=4)
            .map(|f| hyp(f, &[(if f <= 2 { 3 } else { 4 }, 0.0)]))
            .collect();
        let m = idf1(&g, &split, 0.5);
        assert_eq!(m.idf1, 0.5);
        assert_eq!((m.idp, m.idr), (0.5, 0.5));
        assert_eq!(idf1(&g, &[], 0.5).idf1, 0.0);
        assert_eq!(idf1(&[], &[], 0.5).idf1, 1.0);
    }

    #[test]
    fn idf1_maximizes_overlap_not_pairs() {
        // GT 1 overlaps hyp 11 in three frames; pairing every GT with some
        // hypothesis would force GT 1 onto hyp 12 and lose two frames.
        let g = vec![
            gt(1, &[(1, 0.0), (2, 50.0)]),
            gt(2, &[(1, 0.0)]),
            gt(3, &[(1, 0.0)]),
            gt(4, &[(1, 0.0)]),
        ];
        let h = vec![
            hyp(1, &[(12, 0.0), (11, 50.0)]),
            hyp(2, &[(11, 0.0)]),
            hyp(3, &[(11, 0.0)]),
            hyp(4, &[(11, 0.0)]),
        ];
        assert_eq!(idf1(&g, &h, 0.5).idtp, 3);
        assert_eq!(crate::oracle::idtp_oracle(&g, &h, 0.5), 3);
    }

    #[test]
    fn relabeling_changes_nothing() {
        let g = vec![
            gt(1, &[(1, 0.0), (2, 50.0)]),
            gt(2, &[(1, 3.0), (2, 49.0)]),
            gt(3, &[(1, 5.0)]),
        ];
        let h = vec![
            hyp(1, &[(7, 0.0), (8, 50.0)]),
            hyp(2, &[(8, 3.0), (7, 49.0)]),
            hyp(3, &[(9, 5.0)]),
        ];
        let renamed: Vec<_> = h
            .iter()
            .map(|f| HypothesisFrame {
                frame_index: f.frame_index,
                entries: f
                    .entries
                    .iter()
                    .map(|(id, b, s)| (100 - id, *b, *s))
                    .collect(),
            })
            .collect();
        let a = clear_metrics(&g, &h, 0.5);
        let b = clear_metrics(&g, &renamed, 0.5);
        assert_eq!((a.mota, a.idsw), (b.mota, b.idsw));
        assert_eq!(idf1(&g, &h, 0.5).idf1, idf1(&g, &renamed, 0.5).idf1);
    }

    #[test]
    fn aggregate_pools_counts() {
        let g = vec![gt(1, &[(1, 0.0)]), gt(2, &[(1, 0.0)])];
        let a = evaluate_sequence("a", &g, &[hyp(1, &[(1, 0.0)]), hyp(2, &[(1, 0.0)])], None);
        let b = evaluate_sequence("b", &g, &[], None);
        let agg = aggregate(&[a, b]);
        assert_eq!(agg.clear.num_gt, 4);
        assert_eq!(agg.clear.mota, Some(0.5));
        assert_eq!(agg.identity.idf1, 2.0 * 2.0 / 6.0);
    }

    #[test]
    fn report_layout() {
        let g = vec![gt(1, &[(1, 0.0)])];
        let e = evaluate_sequence("s1", &g, &[hyp(1, &[(4, 0.0)])], None);
        let r = format_report(&[e]);
        assert!(r.starts_with("[sequence s1]\nmota=1\n"));
        assert!(r.contains("[aggregate]\n"));
        assert!(r.contains("ap50=undefined\n"));
    }
}
