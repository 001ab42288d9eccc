//! Binary PGM (P5), signal CSV, and paired dataset directories.

use crate::degrade::{generate_pair, Degradation};
use crate::error::{Error, Result};
use crate::sde::PairedSample;
use crate::state::{Shape, StateVec};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

/// Decodes a binary P5 image; samples are scaled to `[0, 1]` by `maxval`.
pub fn decode_pgm(bytes: &[u8]) -> Result<StateVec> {
    let mut pos = 0;
    let mut header = Vec::with_capacity(4);
    while header.len() < 4 {
        // skip whitespace and comments
        while pos < bytes.len() {
            match bytes[pos] {
                b'#' => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        header.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if header[0] != "P5" {
        return Err(Error::Format(format!("expected P5 magic, found `{}`", header[0])));
    }
    let parse = |s: &str, what: &str| -> Result<usize> {
        s.parse().map_err(|_| Error::Format(format!("bad PGM {what} `{s}`")))
    };
    let width = parse(&header[1], "width")?;
    let height = parse(&header[2], "height")?;
    let maxval = parse(&header[3], "maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("unsupported maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let n = width * height;
    let bps = if maxval < 256 { 1 } else { 2 };
    let raster = bytes
        .get(pos..pos + n * bps)
        .ok_or_else(|| Error::Format("truncated PGM raster".into()))?;
    let scale = maxval as f64;
    let data = if bps == 1 {
        raster.iter().map(|&b| b as f64 / scale).collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / scale)
            .collect()
    };
    StateVec::image(height, width, data)
}

/// Encodes as P5 with `maxval` 255 or 65535; values are clamped to `[0, 1]`.
pub fn encode_pgm(state: &StateVec, maxval: u16) -> Result<Vec<u8>> {
    if maxval != 255 && maxval != 65535 {
        return Err(Error::InvalidArgument(format!("maxval must be 255 or 65535, got {maxval}")));
    }
    let (height, width) = state.shape().dims();
    let mut out = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    let scale = maxval as f64;
    for v in state.as_slice() {
        let q = (v.clamp(0.0, 1.0) * scale).round() as u16;
        if maxval == 255 {
            out.push(q as u8);
        } else {
            out.extend_from_slice(&q.to_be_bytes());
        }
    }
    Ok(out)
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<StateVec> {
    decode_pgm(&fs::read(path)?)
}

pub fn write_pgm(path: impl AsRef<Path>, state: &StateVec, maxval: u16) -> Result<()> {
    fs::write(path, encode_pgm(state, maxval)?)?;
    Ok(())
}

/// One value per line under a `value` header; values round-trip exactly.
pub fn write_signal_csv(path: impl AsRef<Path>, state: &StateVec) -> Result<()> {
    let mut out = String::from("value\n");
    for v in state.as_slice() {
        out.push_str(&format!("{v:?}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_signal_csv(path: impl AsRef<Path>) -> Result<StateVec> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some("value") => {}
        _ => return Err(Error::Format("signal CSV must start with a `value` header".into())),
    }
    let data = lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(k, l)| {
            l.trim()
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("line {}: bad value `{l}`", k + 2)))
        })
        .collect::<Result<Vec<_>>>()?;
    StateVec::signal(data)
}

/// Reads a state from `.pgm` or `.csv` by extension.
pub fn read_state(path: impl AsRef<Path>) -> Result<StateVec> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => read_pgm(path),
        Some("csv") => read_signal_csv(path),
        _ => Err(Error::Format(format!("unsupported state file {}", path.display()))),
    }
}

/// Writes images as 16-bit PGM and signals as CSV, by the path's extension.
pub fn write_state(path: impl AsRef<Path>, state: &StateVec) -> Result<()> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => write_pgm(path, state, 65535),
        Some("csv") => write_signal_csv(path, state),
        _ => Err(Error::Format(format!("unsupported state file {}", path.display()))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub degradation_tag: String,
    pub params: Degradation,
    pub seed: u64,
    pub shape: Shape,
}

impl ManifestEntry {
    /// Regenerates the pair bit-for-bit from its recorded seed and parameters.
    pub fn replay(&self) -> Result<PairedSample> {
        generate_pair(self.shape, &self.params, self.seed)
    }

    fn extension(&self) -> &'static str {
        match self.shape {
            Shape::Signal(_) => "csv",
            Shape::Image { .. } => "pgm",
        }
    }

    pub fn hq_file(&self) -> String {
        format!("{}_hq.{}", self.id, self.extension())
    }

    pub fn lq_file(&self) -> String {
        format!("{}_lq.{}", self.id, self.extension())
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn write_dataset(dir: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for entry in entries {
        let pair = entry.replay()?;
        write_state(dir.join(entry.hq_file()), &pair.x0)?;
        write_state(dir.join(entry.lq_file()), &pair.mu)?;
    }
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(entries)?)?;
    Ok(())
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(dir.as_ref().join(MANIFEST_FILE))?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads pairs from the stored files (images are quantized to 16 bits).
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<(ManifestEntry, PairedSample)>> {
    let dir = dir.as_ref();
    read_manifest(dir)?
        .into_iter()
        .map(|entry| {
            let x0 = read_state(dir.join(entry.hq_file()))?;
            let mu = read_state(dir.join(entry.lq_file()))?;
            let pair = PairedSample::new(x0, mu, entry.degradation_tag.clone())?;
            Ok((entry, pair))
        })
        .collect()
}
