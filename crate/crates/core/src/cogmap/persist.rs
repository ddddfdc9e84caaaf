use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CognitiveMap, CognitiveState, MapConfig, MapError, TransitionEdge, TrustMode};
use crate::embed::Embedding;
use crate::Scalar;

pub const MAP_FILE_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
struct MapFile<S: Scalar> {
    version: u64,
    dimension: usize,
    tau_cluster: S,
    #[serde(default = "default_blend")]
    blend: S,
    trust_mode: TrustMode,
    alpha: S,
    #[serde(default = "default_prior")]
    ema_prior: S,
    states: Vec<StateRecord<S>>,
    edges: Vec<EdgeRecord>,
    checksum: String,
}

fn default_blend<S: Scalar>() -> S {
    S::lit(0.95)
}

fn default_prior<S: Scalar>() -> S {
    S::lit(0.5)
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
struct StateRecord<S: Scalar> {
    id: usize,
    centroid: Vec<S>,
    visits: u64,
    successes: u64,
    trust: S,
    exemplar: String,
}

#[derive(Serialize, Deserialize)]
struct EdgeRecord {
    src: usize,
    dst: usize,
    success: u64,
    total: u64,
}

/// SHA-256 over the compact JSON of the file with an empty checksum field.
fn content_checksum<S: Scalar>(file: &MapFile<S>) -> Result<String, MapError> {
    debug_assert!(file.checksum.is_empty());
    let bytes = serde_json::to_vec(file).map_err(|e| MapError::Format(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn to_file<S: Scalar>(map: &CognitiveMap<S>) -> Result<MapFile<S>, MapError> {
    let c = map.config();
    let mut file = MapFile {
        version: MAP_FILE_VERSION,
        dimension: c.dimension,
        tau_cluster: c.tau_cluster,
        blend: c.blend,
        trust_mode: c.trust_mode,
        alpha: c.alpha,
        ema_prior: c.ema_prior,
        states: map
            .states()
            .iter()
            .map(|s| StateRecord {
                id: s.id,
                centroid: s.centroid.as_slice().to_vec(),
                visits: s.visits,
                successes: s.successes,
                trust: s.trust,
                exemplar: s.exemplar.clone(),
            })
            .collect(),
        edges: map
            .edges()
            .map(|e| EdgeRecord {
                src: e.src,
                dst: e.dst,
                success: e.success,
                total: e.total,
            })
            .collect(),
        checksum: String::new(),
    };
    file.checksum = content_checksum(&file)?;
    Ok(file)
}

/// Serializes a map to its versioned, checksummed JSON form.
pub fn map_to_json<S: Scalar>(map: &CognitiveMap<S>) -> Result<String, MapError> {
    let file = to_file(map)?;
    serde_json::to_string_pretty(&file).map_err(|e| MapError::Format(e.to_string()))
}

pub fn map_from_json<S: Scalar>(text: &str) -> Result<CognitiveMap<S>, MapError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| MapError::Format(e.to_string()))?;
    let found = value
        .get("version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| MapError::Format("missing integer field `version`".into()))?;
    if found != MAP_FILE_VERSION {
        return Err(MapError::Version {
            found,
            expected: MAP_FILE_VERSION,
        });
    }
    let mut file: MapFile<S> =
        serde_json::from_value(value).map_err(|e| MapError::Format(e.to_string()))?;
    let stored = std::mem::take(&mut file.checksum);
    let computed = content_checksum(&file)?;
    if stored != computed {
        return Err(MapError::Checksum { stored, computed });
    }
    let config = MapConfig {
        dimension: file.dimension,
        tau_cluster: file.tau_cluster,
        blend: file.blend,
        trust_mode: file.trust_mode,
        alpha: file.alpha,
        ema_prior: file.ema_prior,
    };
    let states = file
        .states
        .into_iter()
        .map(|r| {
            Ok(CognitiveState {
                id: r.id,
                centroid: Embedding::from_unit(r.centroid)?,
                visits: r.visits,
                successes: r.successes,
                trust: r.trust,
                exemplar: r.exemplar,
            })
        })
        .collect::<Result<Vec<_>, MapError>>()?;
    let edges = file
        .edges
        .into_iter()
        .map(|r| TransitionEdge {
            src: r.src,
            dst: r.dst,
            success: r.success,
            total: r.total,
        })
        .collect();
    CognitiveMap::from_parts(config, states, edges)
}

/// Writes the map atomically (temporary file + rename).
pub fn save_map<S: Scalar>(map: &CognitiveMap<S>, path: impl AsRef<Path>) -> Result<(), MapError> {
    let path = path.as_ref();
    let text = map_to_json(map)?;
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_map<S: Scalar>(path: impl AsRef<Path>) -> Result<CognitiveMap<S>, MapError> {
    let text = fs::read_to_string(path)?;
    map_from_json(&text)
}
