use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Localization;
use crate::acoustics::ImageGrid;
use crate::error::Result;
use crate::tracks::EventTable;

/// A real-valued image on an x-z grid, rows along z.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarImage {
    pub grid: ImageGrid,
    pub values: Vec<f64>,
}

/// Displacement of one track between consecutive frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub from: [f64; 3],
    pub to: [f64; 3],
    /// Link length times the frame rate.
    pub speed: f64,
}

/// Ground truth as tracked localizations: one track per bubble.
pub fn tracks_from_ground_truth(gt: &EventTable) -> Vec<Localization> {
    gt.rows
        .iter()
        .map(|e| Localization {
            frame: e.frame,
            loc_id: e.bubble_id,
            position: e.position,
            track_id: Some(e.bubble_id),
        })
        .collect()
}

/// Links between consecutive frames of each track, in x-z.
pub fn links(tracks: &[Localization], frame_rate: f64) -> Vec<Link> {
    let mut by_track: BTreeMap<u64, Vec<&Localization>> = BTreeMap::new();
    for l in tracks {
        if let Some(t) = l.track_id {
            by_track.entry(t).or_default().push(l);
        }
    }
    let mut out = Vec::new();
    for v in by_track.values_mut() {
        v.sort_by_key(|l| l.frame);
        for w in v.windows(2) {
            if w[1].frame != w[0].frame + 1 {
                continue;
            }
            let (a, b) = (w[0].position, w[1].position);
            let d = ((b[0] - a[0]).powi(2) + (b[2] - a[2]).powi(2)).sqrt();
            out.push(Link {
                from: a,
                to: b,
                speed: d * frame_rate,
            });
        }
    }
    out
}

fn pixel(grid: &ImageGrid, x: f64, z: f64) -> Option<usize> {
    let ix = ((x - grid.x0) / grid.dx).round();
    let iz = ((z - grid.z0) / grid.dz).round();
    if ix < 0.0 || iz < 0.0 || ix >= grid.nx as f64 || iz >= grid.nz as f64 {
        return None;
    }
    Some(grid.index(iz as usize, ix as usize))
}

/// Pixels crossed by a segment, each once.
fn raster(grid: &ImageGrid, a: &[f64; 3], b: &[f64; 3]) -> Vec<usize> {
    let len = ((b[0] - a[0]).powi(2) + (b[2] - a[2]).powi(2)).sqrt();
    let step = 0.25 * grid.dx.min(grid.dz);
    let n = (len / step).ceil() as usize;
    let mut hit = Vec::new();
    for i in 0..=n {
        let u = if n == 0 { 0.0 } else { i as f64 / n as f64 };
        if let Some(k) = pixel(grid, a[0] + u * (b[0] - a[0]), a[2] + u * (b[2] - a[2])) {
            if hit.last() != Some(&k) && !hit.contains(&k) {
                hit.push(k);
            }
        }
    }
    hit
}

/// Track density: each link adds one to every pixel it crosses; isolated
/// localizations add one to their own pixel.
pub fn render_sr_image(tracks: &[Localization], grid: &ImageGrid) -> ScalarImage {
    let mut values = vec![0.0; grid.len()];
    let all = links(tracks, 1.0);
    for l in &all {
        for k in raster(grid, &l.from, &l.to) {
            values[k] += 1.0;
        }
    }
    let mut by_track: BTreeMap<Option<u64>, usize> = BTreeMap::new();
    for l in tracks {
        *by_track.entry(l.track_id).or_default() += 1;
    }
    for l in tracks {
        let single = l.track_id.is_none() || by_track[&l.track_id] == 1;
        if single {
            if let Some(k) = pixel(grid, l.position[0], l.position[2]) {
                values[k] += 1.0;
            }
        }
    }
    ScalarImage { grid: *grid, values }
}

/// Mean link speed per pixel; pixels no link crosses are zero.
pub fn render_velocity_map(tracks: &[Localization], grid: &ImageGrid, frame_rate: f64) -> ScalarImage {
    let mut sum = vec![0.0; grid.len()];
    let mut count = vec![0usize; grid.len()];
    for l in links(tracks, frame_rate) {
        for k in raster(grid, &l.from, &l.to) {
            sum[k] += l.speed;
            count[k] += 1;
        }
    }
    let values = sum
        .iter()
        .zip(&count)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    ScalarImage { grid: *grid, values }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    grid: ImageGrid,
    dtype: String,
    layout: String,
    max: f64,
}

/// Writes `<stem>.f32`, `<stem>.json` and an 8-bit `<stem>.pgm` scaled to
/// the image maximum.
pub fn write_scalar_image(stem: &Path, image: &ScalarImage) -> Result<()> {
    let g = &image.grid;
    let max = image.values.iter().cloned().fold(0.0, f64::max);
    let with = |ext: &str| {
        let mut s = stem.as_os_str().to_owned();
        s.push(".");
        s.push(ext);
        std::path::PathBuf::from(s)
    };
    let mut raw = Vec::with_capacity(image.values.len() * 4);
    for &v in &image.values {
        raw.extend_from_slice(&(v as f32).to_le_bytes());
    }
    std::fs::write(with("f32"), raw)?;
    let mut pgm = format!("P5\n{} {}\n255\n", g.nx, g.nz).into_bytes();
    pgm.extend(image.values.iter().map(|&v| {
        if max > 0.0 {
            (v / max * 255.0).clamp(0.0, 255.0).round() as u8
        } else {
            0
        }
    }));
    std::fs::write(with("pgm"), pgm)?;
    let side = Sidecar {
        grid: *g,
        dtype: "<f4".into(),
        layout: "row-major, rows along z".into(),
        max,
    };
    std::fs::write(with("json"), serde_json::to_string_pretty(&side)?)?;
    Ok(())
}
