//! On-disk layout of a key store and the files a round leaves behind.
//!
//! ```text
//! <store>/config.json
//! <store>/server.json
//! <store>/client-<i>.json
//! <store>/round-<l>/token.json
//! <store>/round-<l>/model.json
//! <store>/round-<l>/transcript.jsonl
//! <store>/round-<l>/bundles/client-<i>.json
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fedpop_core::crypto::Digest;
use fedpop_core::secagg::{decode_fixed_point, model_digest, ModelVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoreConfig {
    pub n: u32,
    pub ndrop: u32,
    pub t: u32,
    pub dim: usize,
    pub seed: u64,
    pub round: u64,
}

/// The revealed model: encoded bytes plus a decoded copy for humans.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub l: u64,
    pub contributors: u32,
    pub values: Vec<f64>,
    pub encoded: String,
}

impl ModelFile {
    pub fn new(l: u64, model: &ModelVector) -> Result<Self> {
        Ok(Self {
            l,
            contributors: model.contributors(),
            values: decode_fixed_point(model)?,
            encoded: hex::encode(model.to_bytes()),
        })
    }

    /// `H(M)` recomputed from the encoded bytes.
    pub fn digest(&self) -> Result<Digest> {
        let bytes = hex::decode(&self.encoded).context("model encoding is not hex")?;
        Ok(model_digest(&bytes))
    }
}

pub fn client_file(store: &Path, i: u32) -> PathBuf {
    store.join(format!("client-{i}.json"))
}

pub fn round_dir(store: &Path, l: u64) -> PathBuf {
    store.join(format!("round-{l}"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn ensure_absent(path: &Path) -> Result<()> {
    if path.exists() {
        bail!("{} already exists", path.display());
    }
    Ok(())
}
