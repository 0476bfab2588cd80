use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{GinConfig, GinModel, Param};
use super::tensor::Tensor;
use super::GinError;

const MAGIC: &[u8; 4] = b"FTGM";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Provenance stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelMetadata {
    /// Corpus fingerprint of the vocabulary the token ids refer to.
    pub vocab_fingerprint: String,
    pub seed: u64,
    pub epochs: usize,
    pub loss_history: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: GinConfig,
    #[serde(default)]
    metadata: ModelMetadata,
    params: Vec<ParamHeader>,
}

#[derive(Serialize, Deserialize)]
struct ParamHeader {
    name: String,
    rows: usize,
    cols: usize,
    trainable: bool,
}

/// Binary layout: magic, format version, JSON header length and header,
/// then every parameter as little-endian `f64` in header order.
pub fn write_model<W: Write>(mut out: W, model: &GinModel, metadata: &ModelMetadata) -> Result<(), GinError> {
    let header = Header {
        config: model.config.clone(),
        metadata: metadata.clone(),
        params: model
            .params
            .iter()
            .map(|p| ParamHeader {
                name: p.name.clone(),
                rows: p.value.rows(),
                cols: p.value.cols(),
                trainable: p.trainable,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    out.write_all(MAGIC)?;
    out.write_all(&MODEL_FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    for p in &model.params {
        let mut buf = Vec::with_capacity(p.value.len() * 8);
        for x in p.value.data() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_model<R: Read>(mut input: R) -> Result<(GinModel, ModelMetadata), GinError> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(GinError::Format("not a model file".into()));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != MODEL_FORMAT_VERSION {
        return Err(GinError::Format(format!("unsupported model version {version}")));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
    input.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)?;
    header.config.validate()?;
    let mut params = Vec::with_capacity(header.params.len());
    for h in header.params {
        let mut raw = vec![0u8; h.rows * h.cols * 8];
        input.read_exact(&mut raw)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        params.push(Param {
            name: h.name,
            value: Tensor::from_vec(h.rows, h.cols, data),
            trainable: h.trainable,
        });
    }
    let reference = GinModel::new(header.config.clone(), 0)?;
    let layout_ok = reference.params.len() == params.len()
        && reference
            .params
            .iter()
            .zip(&params)
            .all(|(a, b)| a.name == b.name && a.value.shape() == b.value.shape());
    if !layout_ok {
        return Err(GinError::Format("parameter layout does not match the configuration".into()));
    }
    let model = GinModel {
        config: header.config,
        params,
    };
    Ok((model, header.metadata))
}

pub fn save_model(model: &GinModel, metadata: &ModelMetadata, path: &Path) -> Result<(), GinError> {
    write_model(std::io::BufWriter::new(std::fs::File::create(path)?), model, metadata)
}

pub fn load_model(path: &Path) -> Result<(GinModel, ModelMetadata), GinError> {
    read_model(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let cfg = GinConfig {
            hidden_dim: 5,
            embed_dim: 3,
            vocab_size: 7,
            output_dim: 4,
            r_max: 1,
            ..Default::default()
        };
        let m = GinModel::new(cfg, 11).unwrap();
        let meta = ModelMetadata {
            vocab_fingerprint: "abc".into(),
            seed: 4,
            epochs: 2,
            loss_history: vec![0.7, 0.1 + 0.2],
        };
        let mut buf = Vec::new();
        write_model(&mut buf, &m, &meta).unwrap();
        assert_eq!(read_model(&buf[..]).unwrap(), (m, meta));
        buf[0] = b'X';
        assert!(read_model(&buf[..]).is_err());
    }
}
