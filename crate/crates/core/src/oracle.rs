//! Exhaustive reference implementations for small instances.
//!
//! These enumerate every candidate solution and are only usable on tiny
//! inputs. They share no code with the production solvers beyond IoU.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::geometry::{iou, BBox};
use crate::metrics::{GroundTruthFrame, HypothesisFrame};
use crate::tracker::hungarian::CostMatrix;

type Visit<'a> = dyn FnMut(&[(usize, usize)]) + 'a;

fn enumerate_matchings(
    rows: usize,
    cols: usize,
    allowed: &dyn Fn(usize, usize) -> bool,
    visit: &mut Visit,
) {
    fn rec(
        r: usize,
        rows: usize,
        cols: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<(usize, usize)>,
        allowed: &dyn Fn(usize, usize) -> bool,
        visit: &mut Visit,
    ) {
        if r == rows {
            visit(cur);
            return;
        }
        rec(r + 1, rows, cols, used, cur, allowed, visit);
        for c in 0..cols {
            if !used[c] && allowed(r, c) {
                used[c] = true;
                cur.push((r, c));
                rec(r + 1, rows, cols, used, cur, allowed, visit);
                cur.pop();
                used[c] = false;
            }
        }
    }
    rec(
        0,
        rows,
        cols,
        &mut vec![false; cols],
        &mut Vec::new(),
        allowed,
        visit,
    );
}

/// Best `(total cost, size)` over all partial matchings using allowed
/// entries only: largest size first, then lowest total.
pub fn brute_force_assignment(cost: &CostMatrix) -> (f64, usize) {
    let mut best = (0.0, 0usize);
    enumerate_matchings(
        cost.rows(),
        cost.cols(),
        &|r, c| cost.is_allowed(r, c),
        &mut |m| {
            let total: f64 = m.iter().map(|&(r, c)| cost.get(r, c)).sum();
            if m.len() > best.1 || (m.len() == best.1 && total < best.0) {
                best = (total, m.len());
            }
        },
    );
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClearCounts {
    pub fp: usize,
    pub fn_: usize,
    pub idsw: usize,
    pub num_gt: usize,
    pub mt: usize,
    pub ml: usize,
}

impl ClearCounts {
    pub fn mota(&self) -> Option<f64> {
        (self.num_gt > 0)
            .then(|| 1.0 - (self.fn_ + self.fp + self.idsw) as f64 / self.num_gt as f64)
    }
}

type Frame = (Vec<(u64, BBox)>, Vec<(u64, BBox)>);

fn by_frame(gts: &[GroundTruthFrame], hyps: &[HypothesisFrame]) -> Vec<Frame> {
    let mut frames: BTreeMap<u64, Frame> = BTreeMap::new();
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
            .extend(h.entries.iter().map(|(i, b, _)| (*i, *b)));
    }
    frames.into_values().collect()
}

/// CLEAR counts by enumeration: every frame keeps the still-valid pairings
/// from earlier frames, then picks among all matchings of the rest the one
/// with most pairs and least summed `1 - IoU`.
pub fn clear_oracle(
    gts: &[GroundTruthFrame],
    hyps: &[HypothesisFrame],
    thresh: f64,
) -> ClearCounts {
    let mut last: HashMap<u64, u64> = HashMap::new();
    let mut span: HashMap<u64, usize> = HashMap::new();
    let mut hit: HashMap<u64, usize> = HashMap::new();
    let mut out = ClearCounts {
        fp: 0,
        fn_: 0,
        idsw: 0,
        num_gt: 0,
        mt: 0,
        ml: 0,
    };
    for (g, h) in by_frame(gts, hyps) {
        out.num_gt += g.len();
        for (id, _) in &g {
            *span.entry(*id).or_default() += 1;
        }
        let mut fixed: Vec<(usize, usize)> = Vec::new();
        for (gi, (gid, gb)) in g.iter().enumerate() {
            if let Some(prev) = last.get(gid) {
                if let Some(hi) = h
                    .iter()
                    .position(|(hid, hb)| hid == prev && iou(gb, hb) >= thresh)
                {
                    if !fixed.iter().any(|p| p.1 == hi) {
                        fixed.push((gi, hi));
                    }
                }
            }
        }
        let g_free: Vec<usize> = (0..g.len())
            .filter(|i| !fixed.iter().any(|p| p.0 == *i))
            .collect();
        let h_free: Vec<usize> = (0..h.len())
            .filter(|i| !fixed.iter().any(|p| p.1 == *i))
            .collect();
        let mut best: (usize, f64, Vec<(usize, usize)>) = (0, 0.0, Vec::new());
        let allowed = |r: usize, c: usize| iou(&g[g_free[r]].1, &h[h_free[c]].1) >= thresh;
        enumerate_matchings(g_free.len(), h_free.len(), &allowed, &mut |m| {
            let d: f64 = m
                .iter()
                .map(|&(r, c)| 1.0 - iou(&g[g_free[r]].1, &h[h_free[c]].1))
                .sum();
            if m.len() > best.0 || (m.len() == best.0 && d < best.1) {
                best = (m.len(), d, m.to_vec());
            }
        });
        for &(r, c) in &best.2 {
            let (gid, hid) = (g[g_free[r]].0, h[h_free[c]].0);
            if last.get(&gid).is_some_and(|p| *p != hid) {
                out.idsw += 1;
            }
            fixed.push((g_free[r], h_free[c]));
        }
        for &(gi, hi) in &fixed {
            last.insert(g[gi].0, h[hi].0);
            *hit.entry(g[gi].0).or_default() += 1;
        }
        out.fn_ += g.len() - fixed.len();
        out.fp += h.len() - fixed.len();
    }
    for (id, s) in span {
        let r = hit.get(&id).copied().unwrap_or(0) as f64 / s as f64;
        out.mt += usize::from(r >= 0.8);
        out.ml += usize::from(r <= 0.2);
    }
    out
}

/// Largest identity-true-positive count over all one-to-one mappings
/// between GT and hypothesis identities.
pub fn idtp_oracle(gts: &[GroundTruthFrame], hyps: &[HypothesisFrame], thresh: f64) -> usize {
    let frames = by_frame(gts, hyps);
    let g_ids: Vec<u64> = frames
        .iter()
        .flat_map(|(g, _)| g.iter().map(|e| e.0))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let h_ids: Vec<u64> = frames
        .iter()
        .flat_map(|(_, h)| h.iter().map(|e| e.0))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let overlap = |gid: u64, hid: u64| -> usize {
        frames
            .iter()
            .filter(|(g, h)| {
                g.iter().any(|(i, gb)| {
                    *i == gid && h.iter().any(|(j, hb)| *j == hid && iou(gb, hb) >= thresh)
                })
            })
            .count()
    };
    let mut best = 0;
    enumerate_matchings(g_ids.len(), h_ids.len(), &|_, _| true, &mut |m| {
        let s: usize = m.iter().map(|&(r, c)| overlap(g_ids[r], h_ids[c])).sum();
        best = best.max(s);
    });
    best
}

/// IDF1 from [`idtp_oracle`]; 1 when both sides are empty.
pub fn idf1_oracle(gts: &[GroundTruthFrame], hyps: &[HypothesisFrame], thresh: f64) -> f64 {
    let ng: usize = gts.iter().map(|f| f.entries.len()).sum();
    let nh: usize = hyps.iter().map(|f| f.entries.len()).sum();
    if ng + nh == 0 {
        return 1.0;
    }
    2.0 * idtp_oracle(gts, hyps, thresh) as f64 / (ng + nh) as f64
}

/// Random small tracking scenario: up to 3 GT identities over up to 5
/// frames, hypotheses jittered, swapped, dropped or spurious.
pub fn random_small_scenario(
    rng: &mut impl rand::Rng,
) -> (Vec<GroundTruthFrame>, Vec<HypothesisFrame>) {
    let n_id = rng.random_range(1..=3u64);
    let n_frames = rng.random_range(1..=5u64);
    let mut gts = Vec::new();
    let mut hyps = Vec::new();
    for f in 1..=n_frames {
        let mut g = Vec::new();
        let mut h = Vec::new();
        for id in 1..=n_id {
            if rng.random_bool(0.15) {
                continue;
            }
            let x = id as f64 * 14.0 + rng.random_range(-4.0..4.0);
            let b = BBox::from_xywh(x, 0.0, 10.0, 20.0).expect("valid box");
            g.push((id, b));
            if rng.random_bool(0.8) {
                let hid = if rng.random_bool(0.2) {
                    rng.random_range(1..=4u64) + 10
                } else {
                    id + 10
                };
                if h.iter().any(|(i, _, _): &(u64, BBox, f64)| *i == hid) {
                    continue;
                }
                h.push((
                    hid,
                    b.translate(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)),
                    1.0,
                ));
            }
        }
        if rng.random_bool(0.2) {
            let hid = 50 + f;
            let b =
                BBox::from_xywh(rng.random_range(0.0..50.0), 0.0, 10.0, 20.0).expect("valid box");
            h.push((hid, b, 0.5));
        }
        gts.push(GroundTruthFrame {
            frame_index: f,
            entries: g,
        });
        hyps.push(HypothesisFrame {
            frame_index: f,
            entries: h,
        });
    }
    (gts, hyps)
}
