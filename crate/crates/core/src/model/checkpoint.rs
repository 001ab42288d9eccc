//! Binary checkpoint layout, all integers and floats little-endian:
//!
//! ```text
//! "MRSDE1"
//! u64 patch kind (0 signal, 1 image), u64 rows, u64 cols
//! u64 embed_dim, f64 input scale, u64 hidden layer count, u64 width per hidden layer
//! u64 parameter count, then that many f64
//! ```

use super::{Architecture, ScoreModel};
use crate::error::{Error, Result};
use crate::state::Shape;
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"MRSDE1";

pub fn encode_checkpoint(model: &ScoreModel) -> Vec<u8> {
    let arch = model.architecture();
    let (kind, rows, cols) = match arch.patch {
        Shape::Signal(n) => (0u64, 1, n),
        Shape::Image { height, width } => (1u64, height, width),
    };
    let mut header = vec![
        kind,
        rows as u64,
        cols as u64,
        arch.embed_dim as u64,
        arch.input_scale.to_bits(),
        arch.hidden.len() as u64,
    ];
    header.extend(arch.hidden.iter().map(|h| *h as u64));
    header.push(model.params().len() as u64);

    let mut out = Vec::with_capacity(6 + 8 * (header.len() + model.params().len()));
    out.extend_from_slice(CHECKPOINT_MAGIC);
    for v in header {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take8(&mut self) -> Result<[u8; 8]> {
        let chunk = self
            .bytes
            .get(self.pos..self.pos + 8)
            .ok_or_else(|| Error::Format("checkpoint truncated".into()))?;
        self.pos += 8;
        Ok(chunk.try_into().expect("8-byte slice"))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(u64::from_le_bytes(self.take8()?))
            .map_err(|_| Error::Format("checkpoint field too large".into()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ScoreModel> {
    if bytes.len() < CHECKPOINT_MAGIC.len() || &bytes[..6] != CHECKPOINT_MAGIC {
        return Err(Error::Format("not an MRSDE1 checkpoint".into()));
    }
    let mut r = Reader { bytes, pos: 6 };
    let kind = r.usize()?;
    let rows = r.usize()?;
    let cols = r.usize()?;
    let patch = match (kind, rows) {
        (0, 1) => Shape::Signal(cols),
        (1, _) => Shape::Image { height: rows, width: cols },
        _ => return Err(Error::Format(format!("unknown patch kind {kind} with {rows} rows"))),
    };
    let embed_dim = r.usize()?;
    let input_scale = f64::from_le_bytes(r.take8()?);
    let layers = r.usize()?;
    if layers > 64 {
        return Err(Error::Format(format!("implausible hidden layer count {layers}")));
    }
    let hidden = (0..layers).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    let arch = Architecture::new(patch, embed_dim, hidden)?.with_input_scale(input_scale)?;
    let count = r.usize()?;
    if count != arch.param_count() {
        return Err(Error::Format(format!(
            "checkpoint declares {count} parameters, layout needs {}",
            arch.param_count()
        )));
    }
    if bytes.len() - r.pos != 8 * count {
        return Err(Error::Format("checkpoint payload has the wrong length".into()));
    }
    let params = (0..count)
        .map(|_| r.take8().map(f64::from_le_bytes))
        .collect::<Result<Vec<_>>>()?;
    ScoreModel::from_params(arch, params).map_err(|_| Error::Format("checkpoint holds non-finite parameters".into()))
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &ScoreModel) -> Result<()> {
    Ok(std::fs::write(path, encode_checkpoint(model))?)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ScoreModel> {
    decode_checkpoint(&std::fs::read(path)?)
}
