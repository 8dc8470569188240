use std::io::{Read, Write};

use super::{Event, EventTable};
use crate::error::{Error, Result};

const BASE: [&str; 5] = ["frame", "bubble_id", "x", "y", "z"];

/// Writes `frame,bubble_id,x,y,z[,speed,r_frac]`. The extra columns are
/// written when any row carries them.
pub fn write_events_csv<W: Write>(table: &EventTable, out: W) -> Result<()> {
    let extras = table.has_extras();
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = BASE.to_vec();
    if extras {
        header.extend(["speed", "r_frac"]);
    }
    w.write_record(&header)?;
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for e in &table.rows {
        let mut rec = vec![
            e.frame.to_string(),
            e.bubble_id.to_string(),
            e.position[0].to_string(),
            e.position[1].to_string(),
            e.position[2].to_string(),
        ];
        if extras {
            rec.push(opt(e.speed));
            rec.push(opt(e.r_frac));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_events_csv<R: Read>(input: R) -> Result<EventTable> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let bad = |reason: String| Error::Format {
        what: "event table".into(),
        reason,
    };
    let col = |name: &str| header.iter().position(|h| h.trim() == name);
    let mut idx = [0usize; 5];
    for (slot, name) in idx.iter_mut().zip(BASE) {
        *slot = col(name).ok_or_else(|| bad(format!("missing column `{name}`")))?;
    }
    let speed_col = col("speed");
    let rfrac_col = col("r_frac");
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let num = |i: usize| -> Result<f64> {
            field(i)
                .parse::<f64>()
                .map_err(|e| bad(format!("row {}: {e}", line + 1)))
        };
        let opt = |c: Option<usize>| -> Result<Option<f64>> {
            match c.map(field) {
                None | Some("") => Ok(None),
                Some(_) => num(c.unwrap()).map(Some),
            }
        };
        rows.push(Event {
            frame: field(idx[0])
                .parse()
                .map_err(|e| bad(format!("row {}: frame: {e}", line + 1)))?,
            bubble_id: field(idx[1])
                .parse()
                .map_err(|e| bad(format!("row {}: bubble_id: {e}", line + 1)))?,
            position: [num(idx[2])?, num(idx[3])?, num(idx[4])?],
            speed: opt(speed_col)?,
            r_frac: opt(rfrac_col)?,
        });
    }
    Ok(EventTable::from_rows(rows))
}
