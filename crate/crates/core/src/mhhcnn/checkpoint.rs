use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{build_model, MhhcnnConfig};
use super::train::TrainedModel;
use super::{Encoder, MhhcnnError, Result};
use crate::schema::FeatureSchema;

const MAGIC: &[u8; 8] = b"MHHCKPT1";

#[derive(Serialize, Deserialize)]
struct Header {
    schema_hash: String,
    config: MhhcnnConfig,
    feature_ids: Vec<String>,
    encoder: Encoder,
    n_params: usize,
}

/// Writes `magic | u32 header length | JSON header | little-endian f64
/// parameter blob` in the model's parameter visit order.
pub fn save_checkpoint(trained: &TrainedModel, path: &Path) -> Result<()> {
    let params = trained.model.params();
    let n_params: usize = params.iter().map(|t| t.len()).sum();
    let header = Header {
        schema_hash: trained.schema_hash.clone(),
        config: trained.model.config().clone(),
        feature_ids: trained.model.feature_ids().to_vec(),
        encoder: trained.encoder.clone(),
        n_params,
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| MhhcnnError::BadCheckpoint(e.to_string()))?;
    let mut file = std::fs::File::create(path)?;
    file.write_all(MAGIC)?;
    file.write_all(&(header_json.len() as u32).to_le_bytes())?;
    file.write_all(&header_json)?;
    for tensor in params {
        for &v in tensor.values() {
            file.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Loads a checkpoint, verifying the stored schema hash against `schema`
/// before rebuilding the model and restoring its parameters.
pub fn load_checkpoint(path: &Path, schema: &FeatureSchema) -> Result<TrainedModel> {
    let mut file = std::fs::File::open(path)?;
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(MhhcnnError::BadCheckpoint("bad magic bytes".into()));
    }
    let mut len_bytes = [0u8; 4];
    file.read_exact(&mut len_bytes)?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_json = vec![0u8; header_len];
    file.read_exact(&mut header_json)?;
    let header: Header = serde_json::from_slice(&header_json)
        .map_err(|e| MhhcnnError::BadCheckpoint(e.to_string()))?;

    let expected = schema.content_hash();
    if header.schema_hash != expected {
        return Err(MhhcnnError::SchemaHashMismatch {
            found: header.schema_hash,
            expected,
        });
    }

    let mut model = build_model(schema, &header.config)?;
    let mut blob = Vec::new();
    file.read_to_end(&mut blob)?;
    if blob.len() != header.n_params * 8 {
        return Err(MhhcnnError::BadCheckpoint(format!(
            "parameter blob holds {} bytes, header promises {}",
            blob.len(),
            header.n_params * 8
        )));
    }
    let mut cursor = 0;
    for tensor in model.params_mut() {
        for slot in tensor.values_mut() {
            let mut bytes = [0u8; 8];
            bytes.copy_from_slice(&blob[cursor..cursor + 8]);
            *slot = f64::from_le_bytes(bytes);
            cursor += 8;
        }
    }
    Ok(TrainedModel {
        model,
        encoder: header.encoder,
        schema_hash: header.schema_hash,
    })
}
