use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{NavigatorError, NavigatorModel};
use crate::Scalar;

pub const MODEL_FILE_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
struct ModelFile<S: Scalar> {
    version: u64,
    input_dim: usize,
    layer_shapes: Vec<(usize, usize)>,
    model: NavigatorModel<S>,
    checksum: String,
}

fn checksum<S: Scalar>(file: &ModelFile<S>) -> Result<String, NavigatorError> {
    let bytes = serde_json::to_vec(file).map_err(|e| NavigatorError::Format(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn model_to_json<S: Scalar>(model: &NavigatorModel<S>) -> Result<String, NavigatorError> {
    let mut file = ModelFile {
        version: MODEL_FILE_VERSION,
        input_dim: model.input_dim(),
        layer_shapes: model.mlp.layers.iter().map(|l| (l.inputs, l.outputs)).collect(),
        model: model.clone(),
        checksum: String::new(),
    };
    file.checksum = checksum(&file)?;
    serde_json::to_string(&file).map_err(|e| NavigatorError::Format(e.to_string()))
}

pub fn model_from_json<S: Scalar>(text: &str) -> Result<NavigatorModel<S>, NavigatorError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| NavigatorError::Format(e.to_string()))?;
    let found = value
        .get("version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| NavigatorError::Format("missing integer field `version`".into()))?;
    if found != MODEL_FILE_VERSION {
        return Err(NavigatorError::Version {
            found,
            expected: MODEL_FILE_VERSION,
        });
    }
    let mut file: ModelFile<S> =
        serde_json::from_value(value).map_err(|e| NavigatorError::Format(e.to_string()))?;
    let stored = std::mem::take(&mut file.checksum);
    if stored != checksum(&file)? {
        return Err(NavigatorError::Checksum);
    }
    let shapes: Vec<(usize, usize)> = file.model.mlp.layers.iter().map(|l| (l.inputs, l.outputs)).collect();
    if !file.model.mlp.is_consistent() || shapes != file.layer_shapes || file.input_dim != file.model.input_dim() {
        return Err(NavigatorError::Format("layer shapes are inconsistent".into()));
    }
    Ok(file.model)
}

pub fn save_model<S: Scalar>(model: &NavigatorModel<S>, path: impl AsRef<Path>) -> Result<(), NavigatorError> {
    let path = path.as_ref();
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, model_to_json(model)?)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_model<S: Scalar>(path: impl AsRef<Path>) -> Result<NavigatorModel<S>, NavigatorError> {
    model_from_json(&fs::read_to_string(path)?)
}
