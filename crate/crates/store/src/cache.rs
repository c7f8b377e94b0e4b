//! Content-addressed rollout cache.
//!
//! Keys digest the template identity, the rendered prompt, and the sampling
//! parameters; the full prompt is stored next to each record so a digest
//! match can be verified against the actual text on read. Entries are
//! append-only and idempotent: re-putting an identical record is a no-op,
//! while a different completion under the same key is an integrity error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::jsonl::{append_jsonl, read_jsonl};
use crate::StoreError;

/// Identity of one cached rollout.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CacheKey {
    pub backend_id: String,
    pub prompt_hash: String,
    pub sampling_digest: String,
    pub index: u32,
}

/// Digest over (template tag, rendered prompt, sampling parameters).
pub fn prompt_hash(template_tag: &str, prompt: &str, sampling_canonical: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(template_tag.as_bytes());
    hasher.update([0x1f]);
    hasher.update(prompt.as_bytes());
    hasher.update([0x1f]);
    hasher.update(sampling_canonical.as_bytes());
    hex::encode(hasher.finalize())
}

pub fn sampling_digest(sampling_canonical: &str) -> String {
    hex::encode(Sha256::digest(sampling_canonical.as_bytes()))
}

impl CacheKey {
    pub fn new(
        backend_id: impl Into<String>,
        template_tag: &str,
        prompt: &str,
        sampling_canonical: &str,
        index: u32,
    ) -> CacheKey {
        CacheKey {
            backend_id: backend_id.into(),
            prompt_hash: prompt_hash(template_tag, prompt, sampling_canonical),
            sampling_digest: sampling_digest(sampling_canonical),
            index,
        }
    }
}

/// One cached completion with its verification state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub backend_id: String,
    pub prompt_hash: String,
    pub sampling_digest: String,
    pub index: u32,
    /// Full rendered prompt, kept for collision checking on read.
    pub prompt: String,
    pub completion: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parsed_score: Option<f64>,
}

impl CacheRecord {
    fn key(&self) -> CacheKey {
        CacheKey {
            backend_id: self.backend_id.clone(),
            prompt_hash: self.prompt_hash.clone(),
            sampling_digest: self.sampling_digest.clone(),
            index: self.index,
        }
    }
}

/// Append-only rollout cache backed by one JSONL file.
#[derive(Debug)]
pub struct RolloutCache {
    path: PathBuf,
    entries: BTreeMap<CacheKey, CacheRecord>,
}

impl RolloutCache {
    /// Load the cache file (if any) and verify stored digests against the
    /// stored prompts.
    pub fn open(path: impl Into<PathBuf>) -> Result<RolloutCache, StoreError> {
        let path = path.into();
        let records: Vec<CacheRecord> = read_jsonl(&path)?;
        let mut entries = BTreeMap::new();
        for (offset, record) in records.into_iter().enumerate() {
            let key = record.key();
            if let Some(existing) = entries.get(&key) {
                if existing != &record {
                    return Err(StoreError::CacheConflict {
                        detail: format!(
                            "cache file {} holds two different records for key {:?} (record {})",
                            path.display(),
                            key,
                            offset + 1
                        ),
                    });
                }
            }
            entries.insert(key, record);
        }
        Ok(RolloutCache { path, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Store one rollout. Identical re-puts are no-ops; a different
    /// completion under an existing key is a conflict.
    pub fn put(&mut self, record: CacheRecord) -> Result<(), StoreError> {
        let key = record.key();
        if let Some(existing) = self.entries.get(&key) {
            if existing == &record {
                return Ok(());
            }
            return Err(StoreError::CacheConflict {
                detail: format!("conflicting completion for cached key {key:?}"),
            });
        }
        append_jsonl(&self.path, std::slice::from_ref(&record))?;
        self.entries.insert(key, record);
        Ok(())
    }

    /// Fetch a cached rollout, verifying the stored prompt matches the
    /// prompt that produced the key.
    pub fn get(
        &self,
        key: &CacheKey,
        expected_prompt: &str,
    ) -> Result<Option<&CacheRecord>, StoreError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(record) => {
                if record.prompt != expected_prompt {
                    return Err(StoreError::CacheConflict {
                        detail: format!(
                            "prompt digest collision for key {key:?}: stored prompt differs"
                        ),
                    });
                }
                Ok(Some(record))
            }
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
