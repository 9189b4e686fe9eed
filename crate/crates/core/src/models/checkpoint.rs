//! Model checkpoints: magic `SPDM`, a format version, the JSON model
//! config, then every persistent tensor as a named record with a
//! float32 little-endian payload. Records follow the model's visit order,
//! so saving the same model twice produces identical bytes. Optimizer
//! state (momentum buffers) is not persisted; loading yields a model
//! ready for evaluation or fresh training.

use crate::error::{CoreError, Result};
use crate::models::{Model, ModelConfig};
use crate::tensor::{Scalar, Tensor};
use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"SPDM";
const FORMAT_VERSION: u32 = 1;

fn io_err(what: &str, e: std::io::Error) -> CoreError {
    CoreError::Checkpoint(format!("{what}: {e}"))
}

/// Serializes a model to the checkpoint byte layout.
pub fn model_to_bytes<T: Scalar>(model: &Model<T>) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(model.config())
        .map_err(|e| CoreError::Checkpoint(format!("config encode: {e}")))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    let mut err = None;
    model.visit_tensors(&mut |name, t| {
        if err.is_some() {
            return;
        }
        let bytes = name.as_bytes();
        if bytes.len() > u32::MAX as usize || t.rank() > u32::MAX as usize {
            err = Some(CoreError::Checkpoint(format!("record {name} too large")));
            return;
        }
        out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(bytes);
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Writes a checkpoint file.
pub fn save_model<T: Scalar>(model: &Model<T>, path: &Path) -> Result<()> {
    let bytes = model_to_bytes(model)?;
    let file = std::fs::File::create(path).map_err(|e| io_err("checkpoint create", e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).map_err(|e| io_err("checkpoint write", e))?;
    w.flush().map_err(|e| io_err("checkpoint flush", e))
}

/// Reads a checkpoint back into a model (and its config).
pub fn load_model<T: Scalar>(path: &Path) -> Result<(Model<T>, ModelConfig)> {
    let file = std::fs::File::open(path)
        .map_err(|e| io_err(&format!("checkpoint open {}", path.display()), e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|e| io_err("checkpoint magic", e))?;
    if &magic != MAGIC {
        return Err(CoreError::Checkpoint(format!(
            "{}: bad magic {magic:?}",
            path.display()
        )));
    }
    let version = read_u32(&mut r, "format version")?;
    if version != FORMAT_VERSION {
        return Err(CoreError::Checkpoint(format!(
            "unsupported checkpoint format version {version}"
        )));
    }
    let json_len = read_u32(&mut r, "config length")? as usize;
    let mut json = vec![0u8; json_len];
    r.read_exact(&mut json)
        .map_err(|e| io_err("config payload", e))?;
    let config: ModelConfig = serde_json::from_slice(&json)
        .map_err(|e| CoreError::Checkpoint(format!("config decode: {e}")))?;

    let mut records: HashMap<String, Tensor<T>> = HashMap::new();
    loop {
        let mut len_buf = [0u8; 4];
        match r.read_exact(&mut len_buf) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(io_err("record name length", e)),
        }
        let name_len = u32::from_le_bytes(len_buf) as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)
            .map_err(|e| io_err("record name", e))?;
        let name = String::from_utf8(name)
            .map_err(|e| CoreError::Checkpoint(format!("record name not UTF-8: {e}")))?;
        let rank = read_u32(&mut r, "record rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(read_u32(&mut r, "record dim")? as usize);
        }
        let n: usize = dims.iter().product();
        let mut payload = vec![0u8; n * 4];
        r.read_exact(&mut payload)
            .map_err(|e| io_err(&format!("record {name} payload"), e))?;
        let data: Vec<T> = payload
            .chunks_exact(4)
            .map(|c| T::from_f64(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect();
        if records.insert(name.clone(), Tensor::from_vec(&dims, data)?).is_some() {
            return Err(CoreError::Checkpoint(format!("duplicate record {name}")));
        }
    }

    let mut model = Model::<T>::new(&config, 0)?;
    let mut used: Vec<String> = Vec::new();
    model.restore_tensors(&mut |n: &str| {
        used.push(n.to_string());
        records.get(n).cloned()
    })?;
    for name in records.keys() {
        if !used.iter().any(|u| u == name) {
            return Err(CoreError::Checkpoint(format!(
                "record {name} does not match any model tensor"
            )));
        }
    }
    Ok((model, config))
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|e| io_err(what, e))?;
    Ok(u32::from_le_bytes(buf))
}
