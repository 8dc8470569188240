use std::collections::BTreeMap;

use super::{Localization, TrackAssignment};
use crate::acoustics::BModeImage;

/// Regional maxima of a B-mode frame above `threshold_db`, refined to the
/// envelope-weighted centroid of their 3×3 neighbourhood. Maxima are taken
/// brightest first; any closer than `min_sep` to an accepted one is merged
/// into it. Positions lie in the y = 0 plane.
pub fn reference_localizer(image: &BModeImage, frame: u32, threshold_db: f64, min_sep: f64) -> Vec<Localization> {
    let g = image.grid;
    let (nx, nz) = (g.nx, g.nz);
    let db = &image.db;
    let env = &image.envelope;
    let floor = -image.dynamic_range;
    let mut peaks = Vec::new();
    for iz in 0..nz {
        for ix in 0..nx {
            let k = g.index(iz, ix);
            let v = db[k];
            if v < threshold_db || v <= floor {
                continue;
            }
            let mut is_max = true;
            'nb: for dz in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dz == 0 && dx == 0 {
                        continue;
                    }
                    let (jz, jx) = (iz as i64 + dz, ix as i64 + dx);
                    if jz < 0 || jx < 0 || jz >= nz as i64 || jx >= nx as i64 {
                        continue;
                    }
                    let w = db[g.index(jz as usize, jx as usize)];
                    // plateaus: the first pixel in scan order wins
                    let earlier = (dz, dx) < (0, 0);
                    if w > v || (earlier && w == v) {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                peaks.push((env[k], iz, ix));
            }
        }
    }
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut accepted: Vec<[f64; 3]> = Vec::new();
    for (_, iz, ix) in peaks {
        let (mut sw, mut sx, mut sz) = (0.0, 0.0, 0.0);
        for jz in iz.saturating_sub(1)..=(iz + 1).min(nz - 1) {
            for jx in ix.saturating_sub(1)..=(ix + 1).min(nx - 1) {
                let w = env[g.index(jz, jx)];
                sw += w;
                sx += w * g.x(jx);
                sz += w * g.z(jz);
            }
        }
        let p = if sw > 0.0 {
            [sx / sw, 0.0, sz / sw]
        } else {
            [g.x(ix), 0.0, g.z(iz)]
        };
        let near = accepted
            .iter()
            .any(|q| ((p[0] - q[0]).powi(2) + (p[2] - q[2]).powi(2)).sqrt() < min_sep);
        if !near {
            accepted.push(p);
        }
    }
    accepted
        .into_iter()
        .enumerate()
        .map(|(i, position)| Localization {
            frame,
            loc_id: i as u64,
            position,
            track_id: None,
        })
        .collect()
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Links localizations in consecutive frames when each is the other's
/// nearest neighbour and they are at most `max_link` apart. Unlinked
/// localizations start new tracks; track ids count up from 0.
pub fn reference_tracker(locs: &[Localization], max_link: f64) -> TrackAssignment {
    let mut by_frame: BTreeMap<u32, Vec<&Localization>> = BTreeMap::new();
    for l in locs {
        by_frame.entry(l.frame).or_default().push(l);
    }
    for v in by_frame.values_mut() {
        v.sort_by_key(|l| l.loc_id);
    }
    let nearest = |p: &[f64; 3], set: &[&Localization]| -> Option<(usize, f64)> {
        set.iter()
            .enumerate()
            .map(|(i, q)| (i, dist(p, &q.position)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
    };
    let mut assign = TrackAssignment::default();
    let mut next_track = 0u64;
    let mut prev: Option<(u32, Vec<u64>)> = None;
    for (&frame, cur) in &by_frame {
        let mut ids = vec![u64::MAX; cur.len()];
        if let Some((pf, prev_ids)) = &prev {
            if *pf + 1 == frame {
                let before = &by_frame[pf];
                for (i, l) in cur.iter().enumerate() {
                    let Some((j, d)) = nearest(&l.position, before) else { continue };
                    if d > max_link {
                        continue;
                    }
                    if nearest(&before[j].position, cur).map(|(k, _)| k) == Some(i) {
                        ids[i] = prev_ids[j];
                    }
                }
            }
        }
        for (i, l) in cur.iter().enumerate() {
            if ids[i] == u64::MAX {
                ids[i] = next_track;
                next_track += 1;
            }
            assign.tracks.insert((frame, l.loc_id), ids[i]);
        }
        prev = Some((frame, ids));
    }
    assign
}
