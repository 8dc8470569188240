use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{BubbleParams, BubbleTrace};
use crate::error::Result;

pub fn write_params(path: &Path, params: &BubbleParams) -> Result<()> {
    std::fs::write(path, toml::to_string(params)?)?;
    Ok(())
}

pub fn read_params(path: &Path) -> Result<BubbleParams> {
    let params: BubbleParams = toml::from_str(&std::fs::read_to_string(path)?)?;
    params.validate()?;
    Ok(params)
}

#[derive(Serialize)]
struct TraceSidecar<'a> {
    columns: [&'static str; 4],
    dtype: &'static str,
    n_samples: usize,
    t0: f64,
    dt: f64,
    ruptured_at: Option<f64>,
    params: &'a BubbleParams,
}

/// Writes rows of little-endian f64 `(t, R, Rdot, Rddot)` to `path` and a
/// JSON description next to it (`<path>.json`). Returns the sidecar path.
pub fn write_trace(path: &Path, trace: &BubbleTrace, params: &BubbleParams) -> Result<PathBuf> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for i in 0..trace.len() {
        for v in [trace.time(i), trace.r[i], trace.rdot[i], trace.rddot[i]] {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    let sidecar = TraceSidecar {
        columns: ["t", "R", "Rdot", "Rddot"],
        dtype: "<f8",
        n_samples: trace.len(),
        t0: trace.t0,
        dt: trace.dt,
        ruptured_at: trace.ruptured.iter().position(|&r| r).map(|i| trace.time(i)),
        params,
    };
    let mut side = path.as_os_str().to_owned();
    side.push(".json");
    let side = PathBuf::from(side);
    std::fs::write(&side, serde_json::to_string_pretty(&sidecar)?)?;
    Ok(side)
}
