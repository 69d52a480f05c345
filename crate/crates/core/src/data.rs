//! Dataset and checkpoint files.
//!
//! A dataset is newline-delimited JSON: one header line followed by one line
//! per [`TrainingPair`]. Floats are written in shortest round-trip form, so a
//! write/read cycle reproduces every value bit for bit. The header carries a
//! SHA-256 digest of the record lines and the record count; reading checks both.
//!
//! Checkpoints are single JSON documents holding the model, the optimizer
//! state and the provenance of the training run.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::methods::{MethodKind, SurrogateModel, TrainingLog};
use crate::netcore::AdamState;
use crate::parallel::Execution;
use crate::simulator::{generate, Simulator, ThetaSampling, TrainingPair};
use crate::{Error, Result};

pub const DATASET_FORMAT: &str = "goldmine-dataset/1";
pub const CHECKPOINT_FORMAT: &str = "goldmine-checkpoint/1";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub format: String,
    pub simulator: String,
    pub config_digest: String,
    pub theta_sampling: ThetaSampling,
    pub base_seed: u64,
    pub augmented: bool,
    pub n_records: usize,
    /// Simulations rejected as invalid and left out of the records.
    pub n_invalid: usize,
    /// SHA-256 of the record lines, newline terminators included.
    pub records_digest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub records: Vec<TrainingPair>,
}

fn record_lines(records: &[TrainingPair]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    Ok(out)
}

impl Dataset {
    /// Wrap `records` with a header describing their provenance.
    pub fn new<S: Simulator + ?Sized>(
        sim: &S,
        plan: &ThetaSampling,
        base_seed: u64,
        augmented: bool,
        records: Vec<TrainingPair>,
        n_invalid: usize,
    ) -> Result<Self> {
        let body = record_lines(&records)?;
        Ok(Dataset {
            header: DatasetHeader {
                format: DATASET_FORMAT.into(),
                simulator: sim.id().into(),
                config_digest: sim.config_digest(),
                theta_sampling: plan.clone(),
                base_seed,
                augmented,
                n_records: records.len(),
                n_invalid,
                records_digest: sha256_hex(&body),
            },
            records,
        })
    }

    /// Simulate `n` samples and wrap them with a header.
    pub fn simulate<S: Simulator + ?Sized>(
        sim: &S,
        plan: &ThetaSampling,
        n: usize,
        base_seed: u64,
        augment: bool,
        exec: Execution,
    ) -> Result<Self> {
        let generated = generate(sim, plan, n, base_seed, augment, exec)?;
        Self::new(sim, plan, base_seed, augment, generated.records, generated.n_invalid)
    }

    pub fn digest(&self) -> &str {
        &self.header.records_digest
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec(&self.header)?;
        out.push(b'\n');
        out.extend(record_lines(&self.records)?);
        Ok(out)
    }

    /// Parse and verify a dataset; `path` only labels errors.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let corrupt = |reason: String| Error::Corrupt {
            path: path.to_path_buf(),
            reason,
        };
        let split = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| corrupt("missing header line".into()))?;
        let header: DatasetHeader =
            serde_json::from_slice(&bytes[..split]).map_err(|e| corrupt(format!("header: {e}")))?;
        if header.format != DATASET_FORMAT {
            return Err(corrupt(format!("unknown format {:?}", header.format)));
        }
        let body = &bytes[split + 1..];
        let actual = sha256_hex(body);
        if actual != header.records_digest {
            return Err(Error::DigestMismatch {
                what: "dataset",
                expected: header.records_digest,
                actual,
            });
        }
        let records = body
            .split(|&b| b == b'\n')
            .filter(|line| !line.is_empty())
            .enumerate()
            .map(|(i, line)| {
                serde_json::from_slice::<TrainingPair>(line).map_err(|e| corrupt(format!("record {i}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if records.len() != header.n_records {
            return Err(corrupt(format!(
                "header announces {} records, found {}",
                header.n_records,
                records.len()
            )));
        }
        if let Some(i) = records.iter().position(|r| !r.is_finite()) {
            return Err(corrupt(format!("record {i} has non-finite values")));
        }
        Ok(Dataset { header, records })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.to_bytes()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    /// Fail unless the dataset was produced by `sim` with its current configuration.
    pub fn check_simulator<S: Simulator + ?Sized>(&self, sim: &S) -> Result<()> {
        if self.header.simulator != sim.id() || self.header.config_digest != sim.config_digest() {
            return Err(Error::Config(format!(
                "dataset was simulated by {} ({}), configuration asks for {} ({})",
                self.header.simulator,
                &self.header.config_digest[..12.min(self.header.config_digest.len())],
                sim.id(),
                &sim.config_digest()[..12],
            )));
        }
        Ok(())
    }
}

/// Where a checkpoint came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub method: MethodKind,
    pub seed: u64,
    pub simulator: String,
    pub dataset_digest: String,
    /// Records in the dataset the model was trained on.
    pub n_records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub meta: CheckpointMeta,
    pub model: SurrogateModel,
    pub optimizer: AdamState,
}

impl Checkpoint {
    pub fn new(meta: CheckpointMeta, model: SurrogateModel, optimizer: AdamState) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            meta,
            model,
            optimizer,
        }
    }

    /// SHA-256 over the little-endian bytes of the network weights.
    pub fn weights_digest(&self) -> String {
        let bytes: Vec<u8> = self.model.network.weights.iter().flat_map(|w| w.to_le_bytes()).collect();
        sha256_hex(&bytes)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let ck: Checkpoint = read_json(path)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Corrupt {
                path: path.to_path_buf(),
                reason: format!("unknown format {:?}", ck.format),
            });
        }
        ck.model.network.validate().map_err(|e| Error::Corrupt {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Ok(ck)
    }
}

/// Training-log file written next to a checkpoint.
pub fn log_sidecar_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.file_stem().unwrap_or_default().to_os_string();
    name.push(".log.json");
    checkpoint.with_file_name(name)
}

pub fn write_training_log(checkpoint: &Path, log: &TrainingLog) -> Result<()> {
    write_json(&log_sidecar_path(checkpoint), log)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Corrupt {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}
