//! Run configuration: a plain-text key = value file plus flag overrides,
//! with flags winning. Backend definitions live in their own JSON file so
//! scripts can swap backends without touching the run config.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cbu_core::metrics::HumanPolicy;
use cbu_core::model::Method;
use cbu_core::stats::ResampleMode;
use cbu_core::verdict::JudgeScheme;
use cbu_engine::{Engine, RolloutConfig};
use cbu_gateway::{Gateway, HttpBackend, HttpBackendConfig, MockBackend, MockScript, SamplingParams};
use cbu_store::RunStore;

use crate::error::CliError;

/// Flag values (everything optional; unset means "use config file or default").
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub backend: Option<PathBuf>,
    pub t: Option<u32>,
    pub scheme: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub strict_pool: bool,
    pub tie_mode: Option<String>,
    pub bootstrap_mode: Option<String>,
    pub probe_protocol: Option<String>,
    pub human_policy: Option<String>,
}

/// Probe evaluation choice as configured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeProtocolChoice {
    InSample,
    KFold(usize),
}

impl ProbeProtocolChoice {
    pub fn label(&self) -> String {
        match self {
            ProbeProtocolChoice::InSample => "in_sample".to_string(),
            ProbeProtocolChoice::KFold(k) => format!("kfold:{k}"),
        }
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub dataset: Option<PathBuf>,
    pub backend: Option<PathBuf>,
    pub out: PathBuf,
    pub t: u32,
    pub scheme: JudgeScheme,
    pub seed: u64,
    pub strict_pool: bool,
    pub tie_mode: String,
    pub bootstrap_mode: ResampleMode,
    pub probe_protocol: ProbeProtocolChoice,
    pub human_policy: HumanPolicy,
    /// Restrict metrics/bootstrap to one scoring method when several are present.
    pub method: Option<Method>,
    pub band_low: f64,
    pub band_high: f64,
    /// Solvers whose answers must agree during curation; default is every
    /// solver present on each question.
    pub required_solvers: Option<Vec<String>>,
    /// Integer floor for curated answers; `none` disables the check.
    pub integer_floor: Option<i64>,
    pub bootstrap_n: Vec<usize>,
    pub bootstrap_resamples: usize,
    pub regularization: f64,
    /// Audit only wrong-labeled candidates (default) or every candidate.
    pub audit_all: bool,
}

impl Default for ResolvedConfig {
    fn default() -> Self {
        ResolvedConfig {
            dataset: None,
            backend: None,
            out: PathBuf::from("out"),
            t: 64,
            scheme: JudgeScheme::TenPoint,
            seed: 0,
            strict_pool: false,
            tie_mode: "expected".to_string(),
            bootstrap_mode: ResampleMode::WithReplacement,
            probe_protocol: ProbeProtocolChoice::KFold(5),
            human_policy: HumanPolicy::Exclude,
            method: None,
            band_low: cbu_core::curation::DEFAULT_BAND_LOW,
            band_high: cbu_core::curation::DEFAULT_BAND_HIGH,
            required_solvers: None,
            integer_floor: Some(cbu_core::curation::DEFAULT_INTEGER_FLOOR),
            bootstrap_n: vec![4, 8, 16, 32, 64],
            bootstrap_resamples: 200,
            regularization: 1e-4,
            audit_all: false,
        }
    }
}

fn parse_key_value_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config file {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (number, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Config(format!(
                "config file {}:{}: expected key = value",
                path.display(),
                number + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn parse_scheme(value: &str) -> Result<JudgeScheme, CliError> {
    match value {
        "ten-point" | "ten_point" => Ok(JudgeScheme::TenPoint),
        "proofgrader" => Ok(JudgeScheme::Proofgrader),
        "uq" | "uq-binary" | "uq_binary" => Ok(JudgeScheme::UqBinary),
        other => Err(CliError::Config(format!(
            "unknown scheme {other:?} (expected ten-point, proofgrader, or uq)"
        ))),
    }
}

fn parse_bootstrap_mode(value: &str) -> Result<ResampleMode, CliError> {
    match value {
        "replacement" => Ok(ResampleMode::WithReplacement),
        "subsample" => Ok(ResampleMode::WithoutReplacement),
        other => Err(CliError::Config(format!(
            "unknown bootstrap mode {other:?} (expected replacement or subsample)"
        ))),
    }
}

fn parse_probe_protocol(value: &str) -> Result<ProbeProtocolChoice, CliError> {
    if value == "in-sample" || value == "in_sample" {
        return Ok(ProbeProtocolChoice::InSample);
    }
    if let Some(k) = value.strip_prefix("kfold:") {
        let k: usize = k
            .parse()
            .map_err(|_| CliError::Config(format!("bad fold count in probe protocol {value:?}")))?;
        if k < 2 {
            return Err(CliError::Config("kfold needs at least 2 folds".to_string()));
        }
        return Ok(ProbeProtocolChoice::KFold(k));
    }
    Err(CliError::Config(format!(
        "unknown probe protocol {value:?} (expected in-sample or kfold:K)"
    )))
}

fn parse_human_policy(value: &str) -> Result<HumanPolicy, CliError> {
    match value {
        "exclude" => Ok(HumanPolicy::Exclude),
        "include" => Ok(HumanPolicy::Include),
        other => Err(CliError::Config(format!(
            "unknown human policy {other:?} (expected exclude or include)"
        ))),
    }
}

fn parse_method(value: &str) -> Result<Method, CliError> {
    match value {
        "cbu" => Ok(Method::Cbu),
        "judge" => Ok(Method::Judge),
        "genrm_adapter" => Ok(Method::GenrmAdapter),
        other => Err(CliError::Config(format!("unknown method {other:?}"))),
    }
}

/// Merge defaults, the optional config file, and flag overrides (flags win).
pub fn resolve(overrides: &Overrides) -> Result<ResolvedConfig, CliError> {
    let mut config = ResolvedConfig::default();

    if let Some(path) = &overrides.config {
        let file = parse_key_value_file(path)?;
        for (key, value) in &file {
            match key.as_str() {
                "dataset" => config.dataset = Some(PathBuf::from(value)),
                "backend" => config.backend = Some(PathBuf::from(value)),
                "out" => config.out = PathBuf::from(value),
                "t" | "T" => {
                    config.t = value
                        .parse()
                        .map_err(|_| CliError::Config(format!("bad integer for t: {value:?}")))?
                }
                "scheme" => config.scheme = parse_scheme(value)?,
                "seed" => {
                    config.seed = value
                        .parse()
                        .map_err(|_| CliError::Config(format!("bad integer for seed: {value:?}")))?
                }
                "strict_pool" => {
                    config.strict_pool = value.parse().map_err(|_| {
                        CliError::Config(format!("bad boolean for strict_pool: {value:?}"))
                    })?
                }
                "tie_mode" => config.tie_mode = value.clone(),
                "bootstrap_mode" => config.bootstrap_mode = parse_bootstrap_mode(value)?,
                "probe_protocol" => config.probe_protocol = parse_probe_protocol(value)?,
                "human_policy" => config.human_policy = parse_human_policy(value)?,
                "method" => config.method = Some(parse_method(value)?),
                "band_low" => {
                    config.band_low = value
                        .parse()
                        .map_err(|_| CliError::Config(format!("bad number for band_low: {value:?}")))?
                }
                "band_high" => {
                    config.band_high = value.parse().map_err(|_| {
                        CliError::Config(format!("bad number for band_high: {value:?}"))
                    })?
                }
                "required_solvers" => {
                    config.required_solvers =
                        Some(value.split(',').map(|s| s.trim().to_string()).collect())
                }
                "integer_floor" => {
                    config.integer_floor = if value == "none" {
                        None
                    } else {
                        Some(value.parse().map_err(|_| {
                            CliError::Config(format!("bad integer for integer_floor: {value:?}"))
                        })?)
                    }
                }
                "bootstrap_n" => {
                    let parsed: Result<Vec<usize>, _> =
                        value.split(',').map(|s| s.trim().parse()).collect();
                    config.bootstrap_n = parsed.map_err(|_| {
                        CliError::Config(format!("bad list for bootstrap_n: {value:?}"))
                    })?
                }
                "bootstrap_resamples" => {
                    config.bootstrap_resamples = value.parse().map_err(|_| {
                        CliError::Config(format!("bad integer for bootstrap_resamples: {value:?}"))
                    })?
                }
                "regularization" => {
                    config.regularization = value.parse().map_err(|_| {
                        CliError::Config(format!("bad number for regularization: {value:?}"))
                    })?
                }
                "audit_all" => {
                    config.audit_all = value.parse().map_err(|_| {
                        CliError::Config(format!("bad boolean for audit_all: {value:?}"))
                    })?
                }
                other => {
                    return Err(CliError::Config(format!(
                        "unknown config key {other:?} in {}",
                        path.display()
                    )))
                }
            }
        }
    }

    if let Some(dataset) = &overrides.dataset {
        config.dataset = Some(dataset.clone());
    }
    if let Some(backend) = &overrides.backend {
        config.backend = Some(backend.clone());
    }
    if let Some(t) = overrides.t {
        config.t = t;
    }
    if let Some(scheme) = &overrides.scheme {
        config.scheme = parse_scheme(scheme)?;
    }
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(out) = &overrides.out {
        config.out = out.clone();
    }
    if overrides.strict_pool {
        config.strict_pool = true;
    }
    if let Some(tie_mode) = &overrides.tie_mode {
        config.tie_mode = tie_mode.clone();
    }
    if let Some(mode) = &overrides.bootstrap_mode {
        config.bootstrap_mode = parse_bootstrap_mode(mode)?;
    }
    if let Some(protocol) = &overrides.probe_protocol {
        config.probe_protocol = parse_probe_protocol(protocol)?;
    }
    if let Some(policy) = &overrides.human_policy {
        config.human_policy = parse_human_policy(policy)?;
    }

    if config.t == 0 {
        return Err(CliError::Config("t must be at least 1".to_string()));
    }
    if config.tie_mode != "expected" {
        return Err(CliError::Config(format!(
            "unknown tie mode {:?}; ties resolve to the expectation over tie orderings",
            config.tie_mode
        )));
    }
    if !(0.0..=1.0).contains(&config.band_low)
        || !(0.0..=1.0).contains(&config.band_high)
        || config.band_low >= config.band_high
    {
        return Err(CliError::Config(format!(
            "solvability band [{}, {}] must satisfy 0 <= low < high <= 1",
            config.band_low, config.band_high
        )));
    }
    if config.bootstrap_n.is_empty() || config.bootstrap_n.contains(&0) {
        return Err(CliError::Config(
            "bootstrap_n must be a non-empty list of positive sizes".to_string(),
        ));
    }
    if config.bootstrap_resamples == 0 {
        return Err(CliError::Config("bootstrap_resamples must be at least 1".to_string()));
    }
    Ok(config)
}

impl ResolvedConfig {
    pub fn dataset_dir(&self) -> Result<&Path, CliError> {
        let path = self
            .dataset
            .as_deref()
            .ok_or_else(|| CliError::Config("--dataset is required for this subcommand".to_string()))?;
        if !path.exists() {
            return Err(CliError::Config(format!(
                "dataset path {} does not exist",
                path.display()
            )));
        }
        Ok(path)
    }

    pub fn backend_path(&self) -> Result<&Path, CliError> {
        let path = self
            .backend
            .as_deref()
            .ok_or_else(|| CliError::Config("--backend is required for this subcommand".to_string()))?;
        if !path.exists() {
            return Err(CliError::Config(format!(
                "backend config {} does not exist",
                path.display()
            )));
        }
        Ok(path)
    }
}

/// Backend definition file: a mock script or a live HTTP endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendSpec {
    Mock {
        backend_id: String,
        #[serde(default = "default_mock_in_flight")]
        max_in_flight: usize,
        script: MockScript,
        #[serde(default)]
        temperature: Option<f64>,
        #[serde(default)]
        max_new_tokens: Option<u32>,
    },
    Http {
        #[serde(flatten)]
        config: HttpBackendConfig,
        #[serde(default)]
        temperature: Option<f64>,
        #[serde(default)]
        max_new_tokens: Option<u32>,
    },
}

fn default_mock_in_flight() -> usize {
    8
}

impl BackendSpec {
    pub fn load(path: &Path) -> Result<BackendSpec, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read backend config {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text).map_err(|e| {
            CliError::Config(format!("invalid backend config {}: {e}", path.display()))
        })
    }

    pub fn backend_id(&self) -> &str {
        match self {
            BackendSpec::Mock { backend_id, .. } => backend_id,
            BackendSpec::Http { config, .. } => &config.backend_id,
        }
    }

    pub fn describe(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("backend spec serializes")
    }
}

/// Construct the engine (gateway + cache in the run directory) and the
/// rollout configuration for one scoring run.
pub fn build_engine(
    spec: &BackendSpec,
    store: &RunStore,
    seed: u64,
) -> Result<(Engine, RolloutConfig), CliError> {
    let mut gateway = Gateway::new();
    let (backend_id, temperature, max_new_tokens) = match spec {
        BackendSpec::Mock {
            backend_id,
            max_in_flight,
            script,
            temperature,
            max_new_tokens,
        } => {
            let backend = MockBackend::new(backend_id.clone(), script.clone())
                .map_err(|e| CliError::Config(format!("invalid mock script: {e}")))?;
            gateway.register(std::sync::Arc::new(backend), (*max_in_flight).max(1));
            (backend_id.clone(), *temperature, *max_new_tokens)
        }
        BackendSpec::Http {
            config,
            temperature,
            max_new_tokens,
        } => {
            let max_in_flight = config.max_in_flight.max(1);
            let backend = HttpBackend::new(config.clone())
                .map_err(|e| CliError::Config(format!("invalid http backend: {e}")))?;
            gateway.register(std::sync::Arc::new(backend), max_in_flight);
            (config.backend_id.clone(), *temperature, *max_new_tokens)
        }
    };

    let sampling = SamplingParams {
        temperature: temperature.unwrap_or(1.0),
        max_new_tokens: max_new_tokens.unwrap_or(16384),
        seed: Some(seed),
    };
    let cache = store.open_cache()?;
    let engine = Engine::new(gateway, cache);
    Ok((
        engine,
        RolloutConfig {
            backend_id,
            sampling,
        },
    ))
}
