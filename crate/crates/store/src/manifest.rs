//! Run manifests: enough configuration to reproduce an artifact set.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use cbu_core::template::{Template, TemplateId};

/// Reproducibility flags recorded with every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFlags {
    /// Tie resolution for ranking metrics; expectation over tie orderings.
    pub tie_mode: String,
    /// Bootstrap subsampling mode: "replacement" or "subsample".
    pub bootstrap_mode: String,
    /// Probe evaluation protocol, e.g. "kfold:5" or "in_sample".
    pub probe_protocol: String,
    pub strict_pool: bool,
    /// Whether the human solution joins the ranking metrics.
    pub human_policy: String,
    /// The boxed-answer instruction renders with single literal braces.
    pub boxed_literal: String,
}

impl Default for ManifestFlags {
    fn default() -> Self {
        ManifestFlags {
            tie_mode: "expected".to_string(),
            bootstrap_mode: "replacement".to_string(),
            probe_protocol: "kfold:5".to_string(),
            strict_pool: false,
            human_policy: "exclude".to_string(),
            boxed_literal: "single-brace".to_string(),
        }
    }
}

/// Immutable description of one run: inputs, assets, and knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub created_at: String,
    pub subcommand: String,
    pub backends: Vec<serde_json::Value>,
    pub template_digests: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<u32>,
    pub seeds: BTreeMap<String, u64>,
    pub flags: ManifestFlags,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
}

impl RunManifest {
    pub fn new(run_id: impl Into<String>, subcommand: impl Into<String>) -> RunManifest {
        RunManifest {
            run_id: run_id.into(),
            created_at: chrono::Utc::now().to_rfc3339(),
            subcommand: subcommand.into(),
            backends: Vec::new(),
            template_digests: shipped_template_digests(),
            t: None,
            seeds: BTreeMap::new(),
            flags: ManifestFlags::default(),
            dataset: None,
        }
    }

    /// Template ids whose current shipped body no longer matches the digest
    /// recorded in this manifest.
    pub fn modified_templates(&self) -> Vec<String> {
        let current = shipped_template_digests();
        self.template_digests
            .iter()
            .filter(|(name, digest)| current.get(*name) != Some(digest))
            .map(|(name, _)| name.clone())
            .collect()
    }
}

/// Digest of each shipped template body.
pub fn shipped_template_digests() -> BTreeMap<String, String> {
    TemplateId::ALL
        .iter()
        .map(|&id| {
            let body = Template::get(id).body;
            (id.name().to_string(), hex::encode(Sha256::digest(body.as_bytes())))
        })
        .collect()
}
