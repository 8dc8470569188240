//! RF channel data and B-mode image files.
//!
//! RF files start with a 52-byte little-endian header
//! (`magic[8]`, `version u32`, `n_elements u32`, `n_samples u32`,
//! `n_frames u32`, `n_angles u32`, `fs f64`, `f0 f64`, `c f64`) followed by
//! f32 samples ordered frame, angle, element, sample.

use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BModeImage, ImageGrid, RfFrame, TransducerConfig};
use crate::error::{Error, Result};

pub const RF_MAGIC: [u8; 8] = *b"BFFRF\0\0\0";
pub const RF_VERSION: u32 = 1;
const HEADER_LEN: u64 = 52;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfHeader {
    pub n_elements: u32,
    pub n_samples: u32,
    pub n_frames: u32,
    pub n_angles: u32,
    pub fs: f64,
    pub f0: f64,
    pub c: f64,
}

impl RfHeader {
    pub fn new(tx: &TransducerConfig, n_frames: usize) -> Self {
        RfHeader {
            n_elements: tx.n_elements as u32,
            n_samples: tx.n_samples() as u32,
            n_frames: n_frames as u32,
            n_angles: tx.angles.len() as u32,
            fs: tx.fs,
            f0: tx.f0,
            c: tx.c,
        }
    }

    fn frame_bytes(&self) -> u64 {
        4 * self.n_angles as u64 * self.n_elements as u64 * self.n_samples as u64
    }

    fn encode(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(HEADER_LEN as usize);
        b.extend_from_slice(&RF_MAGIC);
        for v in [RF_VERSION, self.n_elements, self.n_samples, self.n_frames, self.n_angles] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        for v in [self.fs, self.f0, self.c] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    fn decode(b: &[u8]) -> Result<Self> {
        let bad = |reason: &str| Error::Format {
            what: "RF file".into(),
            reason: reason.into(),
        };
        if b.len() < HEADER_LEN as usize || b[..8] != RF_MAGIC {
            return Err(bad("bad magic"));
        }
        let u = |i: usize| u32::from_le_bytes(b[i..i + 4].try_into().expect("4 bytes"));
        let f = |i: usize| f64::from_le_bytes(b[i..i + 8].try_into().expect("8 bytes"));
        if u(8) != RF_VERSION {
            return Err(bad(&format!("unsupported version {}", u(8))));
        }
        Ok(RfHeader {
            n_elements: u(12),
            n_samples: u(16),
            n_frames: u(20),
            n_angles: u(24),
            fs: f(28),
            f0: f(36),
            c: f(44),
        })
    }
}

/// Appends frames to an RF file.
pub struct RfWriter {
    header: RfHeader,
    out: BufWriter<File>,
    written: usize,
}

impl RfWriter {
    pub fn create(path: &Path, header: RfHeader) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(&header.encode())?;
        Ok(RfWriter {
            header,
            out,
            written: 0,
        })
    }

    /// Reopens a partially written file with the same header, dropping any
    /// incomplete trailing frame. Starts a new file if none exists or the
    /// header differs. Returns the writer and the number of complete frames.
    pub fn resume(path: &Path, header: RfHeader) -> Result<(Self, usize)> {
        if let Ok(mut f) = File::open(path) {
            let mut head = vec![0u8; HEADER_LEN as usize];
            let len = f.metadata()?.len();
            if len >= HEADER_LEN && f.read_exact(&mut head).is_ok() {
                if let Ok(existing) = RfHeader::decode(&head) {
                    if existing == header {
                        let done = ((len - HEADER_LEN) / header.frame_bytes()) as usize;
                        let done = done.min(header.n_frames as usize);
                        let file = OpenOptions::new().write(true).open(path)?;
                        file.set_len(HEADER_LEN + done as u64 * header.frame_bytes())?;
                        let mut out = BufWriter::new(file);
                        out.seek(SeekFrom::End(0))?;
                        return Ok((
                            RfWriter {
                                header,
                                out,
                                written: done,
                            },
                            done,
                        ));
                    }
                    log::warn!("RF file {} has a different header; starting over", path.display());
                }
            }
        }
        Ok((RfWriter::create(path, header)?, 0))
    }

    pub fn write_frame(&mut self, frame: &RfFrame) -> Result<()> {
        let h = &self.header;
        if frame.n_elements != h.n_elements as usize
            || frame.n_samples != h.n_samples as usize
            || frame.n_angles != h.n_angles as usize
        {
            return Err(Error::Input("RF frame shape does not match the file header".into()));
        }
        if self.written >= h.n_frames as usize {
            return Err(Error::Input("RF file already holds every frame".into()));
        }
        let mut bytes = Vec::with_capacity(frame.data.len() * 4);
        for &v in &frame.data {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        self.out.write_all(&bytes)?;
        self.out.flush()?;
        self.written += 1;
        Ok(())
    }

    pub fn frames_written(&self) -> usize {
        self.written
    }
}

pub struct RfReader {
    pub header: RfHeader,
    file: BufReader<File>,
    frames_available: usize,
}

impl RfReader {
    pub fn open(path: &Path) -> Result<Self> {
        let mut file = BufReader::new(File::open(path)?);
        let mut head = vec![0u8; HEADER_LEN as usize];
        file.read_exact(&mut head)?;
        let header = RfHeader::decode(&head)?;
        let len = file.get_ref().metadata()?.len();
        let frames_available = ((len - HEADER_LEN) / header.frame_bytes().max(1)) as usize;
        Ok(RfReader {
            header,
            file,
            frames_available,
        })
    }

    pub fn frames_available(&self) -> usize {
        self.frames_available
    }

    pub fn read_frame(&mut self, k: usize) -> Result<RfFrame> {
        if k >= self.frames_available {
            return Err(Error::Input(format!(
                "frame {k} not present ({} complete frames)",
                self.frames_available
            )));
        }
        let h = self.header;
        let bytes = h.frame_bytes();
        self.file.seek(SeekFrom::Start(HEADER_LEN + k as u64 * bytes))?;
        let mut buf = vec![0u8; bytes as usize];
        self.file.read_exact(&mut buf)?;
        let data = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        Ok(RfFrame {
            n_angles: h.n_angles as usize,
            n_elements: h.n_elements as usize,
            n_samples: h.n_samples as usize,
            data,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct BModeSidecar {
    grid: ImageGrid,
    dynamic_range: f64,
    dtype: String,
    layout: String,
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Writes `<stem>.pgm` (8-bit, dB mapped to 0..255), `<stem>.f32` (raw dB
/// values) and `<stem>.json` (grid description).
pub fn write_bmode(stem: &Path, image: &BModeImage) -> Result<()> {
    let g = &image.grid;
    let dr = image.dynamic_range;
    let mut pgm = format!("P5\n{} {}\n255\n", g.nx, g.nz).into_bytes();
    pgm.extend(
        image
            .db
            .iter()
            .map(|&v| (((v + dr) / dr).clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    std::fs::write(with_ext(stem, "pgm"), pgm)?;
    let mut raw = Vec::with_capacity(image.db.len() * 4);
    for &v in &image.db {
        raw.extend_from_slice(&(v as f32).to_le_bytes());
    }
    std::fs::write(with_ext(stem, "f32"), raw)?;
    let side = BModeSidecar {
        grid: *g,
        dynamic_range: dr,
        dtype: "<f4".into(),
        layout: "row-major, rows along z".into(),
    };
    std::fs::write(with_ext(stem, "json"), serde_json::to_string_pretty(&side)?)?;
    Ok(())
}

/// Reads the raw dB image and grid written by [`write_bmode`].
pub fn read_bmode_raw(stem: &Path) -> Result<(ImageGrid, f64, Vec<f64>)> {
    let side: BModeSidecar = serde_json::from_str(&std::fs::read_to_string(with_ext(stem, "json"))?)?;
    let raw = std::fs::read(with_ext(stem, "f32"))?;
    if raw.len() != side.grid.len() * 4 {
        return Err(Error::Format {
            what: "B-mode raw image".into(),
            reason: format!("expected {} values, found {} bytes", side.grid.len(), raw.len()),
        });
    }
    let db = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Ok((side.grid, side.dynamic_range, db))
}
