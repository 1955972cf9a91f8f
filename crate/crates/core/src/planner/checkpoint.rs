//! Model checkpoints.
//!
//! Layout: the 8-byte magic `UAVCKPT1`, a little-endian `u64` header
//! length, a JSON header, then every tensor as little-endian `f64`s at the
//! offsets the header lists (relative to the start of the payload).

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::model::{ModelConfig, ModelParams};
use crate::planner::tensor::{BatchStats, Mat};

pub const MAGIC: &[u8; 8] = b"UAVCKPT1";

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    tensors: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: [usize; 2],
    offset: usize,
}

/// Trainable tensors first, then `bn{i}.mean` / `bn{i}.var` rows.
fn entries(params: &ModelParams) -> Vec<(String, &[f64], [usize; 2])> {
    let mut out: Vec<(String, &[f64], [usize; 2])> =
        params.names.iter().zip(&params.tensors).map(|(n, t)| (n.clone(), t.data.as_slice(), [t.rows, t.cols])).collect();
    for (i, s) in params.running.iter().enumerate() {
        out.push((format!("bn{i}.mean"), s.mean.as_slice(), [1, s.mean.len()]));
        out.push((format!("bn{i}.var"), s.var.as_slice(), [1, s.var.len()]));
    }
    out
}

pub fn write_checkpoint<W: Write>(params: &ModelParams, mut out: W) -> std::io::Result<()> {
    let mut offset = 0;
    let mut tensors = Vec::new();
    let list = entries(params);
    for (name, data, shape) in &list {
        tensors.push(Entry { name: name.clone(), shape: *shape, offset });
        offset += data.len() * 8;
    }
    let header = serde_json::to_vec(&Header { config: params.config.clone(), tensors }).expect("header serializes");
    out.write_all(MAGIC)?;
    out.write_all(&(header.len() as u64).to_le_bytes())?;
    out.write_all(&header)?;
    for (_, data, _) in &list {
        for v in *data {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<ModelParams> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(|e| Error::Parse(format!("checkpoint: {e}")))?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::Parse("checkpoint: bad magic".into()));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = bytes.get(16..16 + hlen).ok_or_else(|| Error::Parse("checkpoint: truncated header".into()))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| Error::Parse(format!("checkpoint header: {e}")))?;
    let payload = &bytes[16 + hlen..];
    let read = |e: &Entry| -> Result<Vec<f64>> {
        let n = e.shape[0] * e.shape[1];
        let raw = payload.get(e.offset..e.offset + 8 * n).ok_or_else(|| Error::Parse(format!("checkpoint: tensor {} out of bounds", e.name)))?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    };
    let layout = header.config.layout();
    let mut tensors = Vec::with_capacity(layout.len());
    for (name, (r, c)) in &layout {
        let e = header.tensors.iter().find(|e| &e.name == name).ok_or_else(|| Error::Parse(format!("checkpoint: missing tensor {name}")))?;
        if e.shape != [*r, *c] {
            return Err(Error::ShapeMismatch(format!("{name}: expected {r}x{c}, got {}x{}", e.shape[0], e.shape[1])));
        }
        tensors.push(Mat::from_vec(*r, *c, read(e)?));
    }
    let mut running = Vec::new();
    for i in 0..2 * header.config.layers {
        let get = |suffix: &str| -> Result<Vec<f64>> {
            let name = format!("bn{i}.{suffix}");
            let e = header.tensors.iter().find(|e| e.name == name).ok_or_else(|| Error::Parse(format!("checkpoint: missing {name}")))?;
            read(e)
        };
        running.push(BatchStats { mean: get("mean")?, var: get("var")? });
    }
    ModelParams::from_parts(header.config, tensors, Some(running))
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(params, std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(f))
}
