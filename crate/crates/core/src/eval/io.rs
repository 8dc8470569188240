use std::io::{Read, Write};
use std::path::Path;

use super::{EvalReport, Localization};
use crate::error::{Error, Result};

/// Writes `frame,loc_id,x,y,z[,track_id]`; the track column is written
/// when any localization has a track.
pub fn write_predictions_csv<W: Write>(locs: &[Localization], out: W) -> Result<()> {
    let tracked = locs.iter().any(|l| l.track_id.is_some());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["frame", "loc_id", "x", "y", "z"];
    if tracked {
        header.push("track_id");
    }
    w.write_record(&header)?;
    for l in locs {
        let mut rec = vec![
            l.frame.to_string(),
            l.loc_id.to_string(),
            l.position[0].to_string(),
            l.position[1].to_string(),
            l.position[2].to_string(),
        ];
        if tracked {
            rec.push(l.track_id.map(|t| t.to_string()).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_predictions_csv<R: Read>(input: R) -> Result<Vec<Localization>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let bad = |reason: String| Error::Format {
        what: "prediction table".into(),
        reason,
    };
    let col = |name: &str| header.iter().position(|h| h.trim() == name);
    let mut idx = [0usize; 5];
    for (slot, name) in idx.iter_mut().zip(["frame", "loc_id", "x", "y", "z"]) {
        *slot = col(name).ok_or_else(|| bad(format!("missing column `{name}`")))?;
    }
    let track_col = col("track_id");
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let row = line + 1;
        let num = |i: usize| -> Result<f64> { field(i).parse().map_err(|e| bad(format!("row {row}: {e}"))) };
        let int = |i: usize| -> Result<u64> { field(i).parse().map_err(|e| bad(format!("row {row}: {e}"))) };
        let track_id = match track_col.map(field) {
            None | Some("") => None,
            Some(s) => Some(s.parse().map_err(|e| bad(format!("row {row}: track_id: {e}")))?),
        };
        out.push(Localization {
            frame: field(idx[0]).parse().map_err(|e| bad(format!("row {row}: frame: {e}")))?,
            loc_id: int(idx[1])?,
            position: [num(idx[2])?, num(idx[3])?, num(idx[4])?],
            track_id,
        });
    }
    Ok(out)
}

pub fn write_report(path: &Path, report: &EvalReport) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(report)? + "\n")?;
    Ok(())
}
