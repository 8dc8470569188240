//! Localization and tracking scores against ground truth.

mod io;
mod localize;
mod render;

pub use io::{read_predictions_csv, write_predictions_csv, write_report};
pub use localize::{reference_localizer, reference_tracker};
pub use render::{
    links, render_sr_image, render_velocity_map, tracks_from_ground_truth, write_scalar_image, Link, ScalarImage,
};

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tracks::EventTable;

/// One predicted bubble position. `track_id` is set by a tracker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Localization {
    pub frame: u32,
    pub loc_id: u64,
    pub position: [f64; 3],
    pub track_id: Option<u64>,
}

/// Coordinates used for distances. Images only see the x-z plane, so
/// 2-D predictions are scored with `Xz`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    #[default]
    Xz,
    Xyz,
}

impl Projection {
    pub fn distance(self, a: &[f64; 3], b: &[f64; 3]) -> f64 {
        let dx = a[0] - b[0];
        let dy = if self == Projection::Xyz { a[1] - b[1] } else { 0.0 };
        let dz = a[2] - b[2];
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub bubble_id: u64,
    pub loc_id: u64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameMatch {
    pub frame: u32,
    pub tp: Vec<MatchPair>,
    /// Unmatched ground-truth bubble ids.
    pub fn_: Vec<u64>,
    /// Unmatched localization ids.
    pub fp: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub radius: f64,
    pub projection: Projection,
    pub frames: Vec<FrameMatch>,
}

impl MatchResult {
    pub fn counts(&self) -> (usize, usize, usize) {
        self.frames.iter().fold((0, 0, 0), |(tp, fp, fn_), f| {
            (tp + f.tp.len(), fp + f.fp.len(), fn_ + f.fn_.len())
        })
    }
}

/// Greedy one-to-one matching inside one frame: candidate pairs within
/// `radius` are accepted by ascending distance, ties by (bubble id, loc id).
fn match_frame(
    frame: u32,
    gt: &[(u64, [f64; 3])],
    pred: &[(u64, [f64; 3])],
    radius: f64,
    projection: Projection,
) -> FrameMatch {
    let mut candidates = Vec::new();
    for (b, pb) in gt {
        for (l, pl) in pred {
            let d = projection.distance(pb, pl);
            if d <= radius {
                candidates.push((d, *b, *l));
            }
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_gt = BTreeSet::new();
    let mut used_loc = BTreeSet::new();
    let mut tp = Vec::new();
    for (d, b, l) in candidates {
        if used_gt.contains(&b) || used_loc.contains(&l) {
            continue;
        }
        used_gt.insert(b);
        used_loc.insert(l);
        tp.push(MatchPair {
            bubble_id: b,
            loc_id: l,
            distance: d,
        });
    }
    FrameMatch {
        frame,
        tp,
        fn_: gt.iter().map(|g| g.0).filter(|b| !used_gt.contains(b)).collect(),
        fp: pred.iter().map(|p| p.0).filter(|l| !used_loc.contains(l)).collect(),
    }
}

type FrameRows = BTreeMap<u32, Vec<(u64, [f64; 3])>>;

fn ground_truth_by_frame(gt: &EventTable) -> Result<FrameRows> {
    let mut by_frame: FrameRows = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for e in &gt.rows {
        if !seen.insert((e.frame, e.bubble_id)) {
            return Err(Error::Input(format!(
                "bubble {} appears twice in frame {}",
                e.bubble_id, e.frame
            )));
        }
        by_frame.entry(e.frame).or_default().push((e.bubble_id, e.position));
    }
    Ok(by_frame)
}

fn predictions_by_frame(pred: &[Localization]) -> Result<FrameRows> {
    let mut by_frame: FrameRows = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for l in pred {
        if !seen.insert((l.frame, l.loc_id)) {
            return Err(Error::Input(format!(
                "duplicate loc_id {} in frame {}",
                l.loc_id, l.frame
            )));
        }
        by_frame.entry(l.frame).or_default().push((l.loc_id, l.position));
    }
    Ok(by_frame)
}

pub fn match_localizations(
    gt: &EventTable,
    pred: &[Localization],
    radius: f64,
    projection: Projection,
) -> Result<MatchResult> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::param("radius", "must be positive"));
    }
    let gt_rows = ground_truth_by_frame(gt)?;
    let pred_rows = predictions_by_frame(pred)?;
    let frames: Vec<u32> = gt_rows.keys().chain(pred_rows.keys()).copied().collect::<BTreeSet<_>>().into_iter().collect();
    let empty = Vec::new();
    let frames = frames
        .par_iter()
        .map(|&f| {
            match_frame(
                f,
                gt_rows.get(&f).unwrap_or(&empty),
                pred_rows.get(&f).unwrap_or(&empty),
                radius,
                projection,
            )
        })
        .collect();
    Ok(MatchResult {
        radius,
        projection,
        frames,
    })
}

/// `num / den`, or 0 with `false` when the denominator is empty.
fn ratio(num: f64, den: f64) -> (f64, bool) {
    if den > 0.0 {
        (num / den, true)
    } else {
        (0.0, false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationMetrics {
    pub precision: f64,
    pub recall: f64,
    /// Mean distance over true positives (the headline localization error).
    pub mean_loc_error: f64,
    /// Root mean square distance over true positives.
    pub rmse_strict: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision_defined: bool,
    pub recall_defined: bool,
    pub error_defined: bool,
}

pub fn localization_metrics(m: &MatchResult) -> LocalizationMetrics {
    let (tp, fp, fn_) = m.counts();
    let dists: Vec<f64> = m.frames.iter().flat_map(|f| f.tp.iter().map(|p| p.distance)).collect();
    let (precision, precision_defined) = ratio(tp as f64, (tp + fp) as f64);
    let (recall, recall_defined) = ratio(tp as f64, (tp + fn_) as f64);
    let (mean_loc_error, error_defined) = ratio(dists.iter().sum(), tp as f64);
    let (ms, _) = ratio(dists.iter().map(|d| d * d).sum(), tp as f64);
    LocalizationMetrics {
        precision,
        recall,
        mean_loc_error,
        rmse_strict: ms.sqrt(),
        tp,
        fp,
        fn_,
        precision_defined,
        recall_defined,
        error_defined,
    }
}

/// Track id of each localization, keyed by (frame, loc_id).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackAssignment {
    pub tracks: BTreeMap<(u32, u64), u64>,
}

impl TrackAssignment {
    pub fn from_localizations(locs: &[Localization]) -> Self {
        TrackAssignment {
            tracks: locs
                .iter()
                .filter_map(|l| l.track_id.map(|t| ((l.frame, l.loc_id), t)))
                .collect(),
        }
    }

    pub fn apply(&self, locs: &mut [Localization]) {
        for l in locs {
            l.track_id = self.tracks.get(&(l.frame, l.loc_id)).copied();
        }
    }

    fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (&(frame, _), &track) in &self.tracks {
            if !seen.insert((frame, track)) {
                return Err(Error::Input(format!(
                    "track {track} holds two localizations in frame {frame}"
                )));
            }
        }
        Ok(())
    }
}

/// A pair across frames `frame` and `frame + 1` with its distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPair {
    pub frame: u32,
    pub first: u64,
    pub second: u64,
    pub distance: f64,
}

/// TP and FN hold bubble ids (both entries equal) with the ground-truth
/// travel distance; FP holds the localization ids with the distance
/// between the two localizations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairSets {
    pub tp: Vec<TrackPair>,
    pub fp: Vec<TrackPair>,
    pub fn_: Vec<TrackPair>,
}

/// Pairs over consecutive frames built from true-positive localizations
/// only. A bubble not localized in both frames contributes no pair.
pub fn tracking_pairs(
    gt: &EventTable,
    pred: &[Localization],
    matches: &MatchResult,
    assign: &TrackAssignment,
) -> Result<PairSets> {
    assign.validate()?;
    let projection = matches.projection;
    let gt_pos: HashMap<(u32, u64), [f64; 3]> = gt.rows.iter().map(|e| ((e.frame, e.bubble_id), e.position)).collect();
    let loc_pos: HashMap<(u32, u64), [f64; 3]> = pred.iter().map(|l| ((l.frame, l.loc_id), l.position)).collect();
    let by_frame: BTreeMap<u32, &FrameMatch> = matches.frames.iter().map(|f| (f.frame, f)).collect();
    let mut sets = PairSets::default();
    for (&t, m0) in &by_frame {
        let Some(m1) = by_frame.get(&(t + 1)) else { continue };
        // bubble -> loc and loc -> bubble for TP localizations in each frame
        let b2l1: HashMap<u64, u64> = m1.tp.iter().map(|p| (p.bubble_id, p.loc_id)).collect();
        let l2b1: HashMap<u64, u64> = m1.tp.iter().map(|p| (p.loc_id, p.bubble_id)).collect();
        // TP localizations of frame t+1 by track
        let mut track1: HashMap<u64, u64> = HashMap::new();
        for p in &m1.tp {
            if let Some(&tr) = assign.tracks.get(&(t + 1, p.loc_id)) {
                track1.insert(tr, p.loc_id);
            }
        }
        for p in &m0.tp {
            let b = p.bubble_id;
            let gt_pair = b2l1.get(&b).map(|_| {
                projection.distance(&gt_pos[&(t, b)], &gt_pos[&(t + 1, b)])
            });
            let linked = assign
                .tracks
                .get(&(t, p.loc_id))
                .and_then(|tr| track1.get(tr))
                .copied();
            let mut covered = false;
            if let Some(l1) = linked {
                if l2b1[&l1] == b {
                    covered = true;
                } else {
                    sets.fp.push(TrackPair {
                        frame: t,
                        first: p.loc_id,
                        second: l1,
                        distance: projection.distance(&loc_pos[&(t, p.loc_id)], &loc_pos[&(t + 1, l1)]),
                    });
                }
            }
            if let Some(d) = gt_pair {
                let pair = TrackPair {
                    frame: t,
                    first: b,
                    second: b,
                    distance: d,
                };
                if covered {
                    sets.tp.push(pair);
                } else {
                    sets.fn_.push(pair);
                }
            }
        }
    }
    Ok(sets)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingMetrics {
    pub precision: f64,
    pub recall: f64,
    pub jaccard: f64,
    pub j_map: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tp_d: f64,
    pub fp_d: f64,
    pub fn_d: f64,
    pub precision_defined: bool,
    pub recall_defined: bool,
    pub jaccard_defined: bool,
}

/// Pair-count precision and recall plus the distance-weighted Jaccard
/// index and its remap to [-1, 1].
pub fn tracking_metrics(pairs: &PairSets) -> TrackingMetrics {
    let sum = |v: &[TrackPair]| v.iter().map(|p| p.distance).sum::<f64>();
    let (tp_d, fp_d, fn_d) = (sum(&pairs.tp), sum(&pairs.fp), sum(&pairs.fn_));
    distance_metrics(pairs.tp.len(), pairs.fp.len(), pairs.fn_.len(), tp_d, fp_d, fn_d)
}

/// Tracking metrics from pair counts and summed pair distances.
pub fn distance_metrics(tp: usize, fp: usize, fn_: usize, tp_d: f64, fp_d: f64, fn_d: f64) -> TrackingMetrics {
    let (precision, precision_defined) = ratio(tp as f64, (tp + fp) as f64);
    let (recall, recall_defined) = ratio(tp as f64, (tp + fn_) as f64);
    let total = tp_d + fp_d + fn_d;
    let (jaccard, jaccard_defined) = ratio(tp_d, total);
    let (j_map, _) = ratio(tp_d - fp_d - fn_d, total);
    TrackingMetrics {
        precision,
        recall,
        jaccard,
        j_map,
        tp,
        fp,
        fn_,
        tp_d,
        fp_d,
        fn_d,
        precision_defined,
        recall_defined,
        jaccard_defined,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameCounts {
    pub frame: u32,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub radius: f64,
    pub projection: Projection,
    pub localization: LocalizationMetrics,
    /// Absent when the predictions carry no track ids.
    pub tracking: Option<TrackingMetrics>,
    pub per_frame: Vec<FrameCounts>,
}

impl EvalReport {
    /// (loc precision, loc recall, mean loc error, track precision, track
    /// recall, J_map).
    pub fn headline(&self) -> [f64; 6] {
        let t = self.tracking.as_ref();
        [
            self.localization.precision,
            self.localization.recall,
            self.localization.mean_loc_error,
            t.map_or(0.0, |t| t.precision),
            t.map_or(0.0, |t| t.recall),
            t.map_or(0.0, |t| t.j_map),
        ]
    }
}

pub fn evaluate(gt: &EventTable, pred: &[Localization], radius: f64, projection: Projection) -> Result<EvalReport> {
    let matches = match_localizations(gt, pred, radius, projection)?;
    let assign = TrackAssignment::from_localizations(pred);
    let tracking = if pred.iter().any(|l| l.track_id.is_some()) {
        Some(tracking_metrics(&tracking_pairs(gt, pred, &matches, &assign)?))
    } else {
        None
    };
    Ok(EvalReport {
        radius,
        projection,
        localization: localization_metrics(&matches),
        tracking,
        per_frame: matches
            .frames
            .iter()
            .map(|f| FrameCounts {
                frame: f.frame,
                tp: f.tp.len(),
                fp: f.fp.len(),
                fn_: f.fn_.len(),
            })
            .collect(),
    })
}
