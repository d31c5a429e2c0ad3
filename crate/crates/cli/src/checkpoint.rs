//! Binary checkpoints.
//!
//! Layout: `EQVQCKPT`, u32 manifest length, JSON manifest, then for every
//! network a u64 coefficient count followed by that many f64 values, and
//! finally the SHA-256 of everything before it. All integers and floats are
//! little endian.

use std::path::Path;

use equivquad_core::networks::NetworkSpec;
use equivquad_core::rl::{Agent, Architecture};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::sha256_hex;

pub const MAGIC: &[u8; 8] = b"EQVQCKPT";
pub const SCHEMA_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("corrupt checkpoint: {0}")]
    CorruptPayload(String),
    #[error("checkpoint schema mismatch: {0}")]
    SchemaMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkEntry {
    pub name: String,
    pub spec: NetworkSpec,
    pub rho_in: String,
    pub rho_out: String,
    pub n_params: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub architecture: Architecture,
    pub step: usize,
    pub seed: u64,
    pub config_hash: String,
    /// Resolved configuration the run was started with.
    pub config: String,
    pub networks: Vec<NetworkEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub agent: Agent,
}

fn entries(agent: &Agent) -> Vec<NetworkEntry> {
    agent
        .networks()
        .into_iter()
        .map(|(name, n)| NetworkEntry {
            name,
            spec: *n.spec(),
            rho_in: n.rho_in().describe(),
            rho_out: n.rho_out().describe(),
            n_params: n.n_params(),
        })
        .collect()
}

pub fn encode(agent: &Agent, step: usize, seed: u64, config: &str) -> Vec<u8> {
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        architecture: agent.architecture(),
        step,
        seed,
        config_hash: sha256_hex(config.as_bytes()),
        config: config.to_string(),
        networks: entries(agent),
    };
    let json = serde_json::to_vec(&manifest).expect("manifest serialises");
    let mut out = Vec::with_capacity(json.len() + 1024);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, net) in agent.networks() {
        let p = net.params();
        out.extend_from_slice(&(p.len() as u64).to_le_bytes());
        for v in p {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len());
        let end = end.ok_or_else(|| CheckpointError::CorruptPayload("unexpected end of payload".into()))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }
}

/// Decodes a checkpoint. With `expected`, a different stored architecture
/// is a schema mismatch.
pub fn decode(bytes: &[u8], expected: Option<Architecture>) -> Result<Checkpoint, CheckpointError> {
    if bytes.len() < MAGIC.len() + 4 + DIGEST_LEN {
        return Err(CheckpointError::CorruptPayload(format!("file is only {} bytes", bytes.len())));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::CorruptPayload("bad magic".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(CheckpointError::CorruptPayload("checksum mismatch".into()));
    }
    let mut cur = Cursor { data: body, pos: MAGIC.len() };
    let len = u32::from_le_bytes(cur.take(4)?.try_into().expect("4 bytes")) as usize;
    let manifest: Manifest = serde_json::from_slice(cur.take(len)?)
        .map_err(|e| CheckpointError::SchemaMismatch(format!("unreadable manifest: {e}")))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(CheckpointError::SchemaMismatch(format!(
            "schema version {} (this build reads {SCHEMA_VERSION})",
            manifest.schema_version
        )));
    }
    if let Some(want) = expected {
        if want != manifest.architecture {
            return Err(CheckpointError::SchemaMismatch(format!(
                "checkpoint holds {} but {want} was requested",
                manifest.architecture
            )));
        }
    }
    if sha256_hex(manifest.config.as_bytes()) != manifest.config_hash {
        return Err(CheckpointError::CorruptPayload("configuration hash does not match manifest".into()));
    }

    let mut agent = Agent::new(manifest.architecture, 0.0, &mut ChaCha8Rng::seed_from_u64(0))
        .map_err(|e| CheckpointError::SchemaMismatch(e.to_string()))?;
    let built = entries(&agent);
    if built != manifest.networks {
        return Err(CheckpointError::SchemaMismatch(format!(
            "network layouts differ from this build for {}",
            manifest.architecture
        )));
    }
    for (entry, net) in manifest.networks.iter().zip(agent.networks_mut()) {
        let n = u64::from_le_bytes(cur.take(8)?.try_into().expect("8 bytes")) as usize;
        if n != entry.n_params {
            return Err(CheckpointError::CorruptPayload(format!(
                "{} stores {n} coefficients, manifest says {}",
                entry.name, entry.n_params
            )));
        }
        let raw = cur.take(n.checked_mul(8).ok_or_else(|| CheckpointError::CorruptPayload("overflow".into()))?)?;
        let p: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        net.set_params(&p).map_err(|e| CheckpointError::CorruptPayload(e.to_string()))?;
    }
    if cur.pos != body.len() {
        return Err(CheckpointError::CorruptPayload("trailing bytes after the last network".into()));
    }
    Ok(Checkpoint { manifest, agent })
}

pub fn save(path: &Path, agent: &Agent, step: usize, seed: u64, config: &str) -> Result<(), CheckpointError> {
    let io = |source| CheckpointError::Io { path: path.display().to_string(), source };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, encode(agent, step, seed, config)).map_err(io)
}

pub fn load(path: &Path, expected: Option<Architecture>) -> Result<Checkpoint, CheckpointError> {
    let bytes =
        std::fs::read(path).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
    decode(&bytes, expected)
}
