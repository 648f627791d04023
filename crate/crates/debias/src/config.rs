//! Application configuration: flat `key = value` files, environment
//! overrides, and command-line overrides.
//!
//! Precedence, lowest to highest: built-in default, config file, environment
//! variable, command-line flag. The environment name for key `a.b` is
//! `DEBIAS_A_B`. Two variables are special-cased: `DEBIAS_CONFIG` points at
//! the config file, and `DEBIAS_BACKEND_TOKEN` carries the remote backend
//! credential — the token is env-only, is rejected if it appears in a file,
//! and is never logged.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

use debias_core::generation::GenerationConfig;
use debias_core::pipeline::PipelineConfig;

use crate::logging::Level;

pub const ENV_PREFIX: &str = "DEBIAS_";
/// Environment variable naming the config file (overridden by `--config`).
pub const ENV_CONFIG: &str = "DEBIAS_CONFIG";
/// Environment variable carrying the remote backend bearer token.
pub const ENV_BACKEND_TOKEN: &str = "DEBIAS_BACKEND_TOKEN";

/// Every recognized config key. Files may only use these; unknown file keys
/// are an error so typos fail fast.
pub const KEYS: [&str; 18] = [
    "model_path",
    "backend",
    "backend.url",
    "backend.lexicon",
    "backend.max_concurrency",
    "template_path",
    "bank_path",
    "pipeline.threshold",
    "pipeline.k",
    "pipeline.temperature",
    "pipeline.max_new_tokens",
    "pipeline.timeout_ms",
    "pipeline.max_retries",
    "pipeline.seed",
    "pipeline.reclassify",
    "pipeline.fail_closed",
    "server.listen_addr",
    "log_level",
];

/// The environment variable that overrides `key`: `DEBIAS_` plus the key
/// uppercased with dots turned into underscores.
pub fn env_key(key: &str) -> String {
    let mut name = String::from(ENV_PREFIX);
    for c in key.chars() {
        name.push(match c {
            '.' => '_',
            other => other.to_ascii_uppercase(),
        });
    }
    name
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config line {line}: expected `key = value`, got {content:?}")]
    Syntax { line: usize, content: String },
    #[error("config line {line}: unknown key {key:?}")]
    UnknownKey { key: String, line: usize },
    #[error("config line {line}: duplicate key {key:?}")]
    DuplicateKey { key: String, line: usize },
    #[error("config line {line}: the backend token must come from {ENV_BACKEND_TOKEN}, not a config file")]
    SecretInFile { line: usize },
    #[error("invalid value {value:?} for {key}: {message}")]
    BadValue {
        key: &'static str,
        value: String,
        message: String,
    },
}

/// A string that hides its contents from `Debug` so credentials cannot leak
/// through error messages or logs.
#[derive(Clone, PartialEq, Eq)]
pub struct Secret(pub String);

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(***)")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BackendKind {
    /// Deterministic in-process rewriter; no network.
    Mock,
    /// Remote HTTP completion service.
    Remote,
}

/// Fully resolved application configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct AppConfig {
    pub model_path: Option<PathBuf>,
    pub backend: BackendKind,
    pub backend_url: Option<String>,
    /// Extra lexicon file for the mock backend: one term per line.
    pub backend_lexicon: Option<PathBuf>,
    /// Maximum concurrent in-flight backend generations in the server.
    pub backend_max_concurrency: usize,
    pub backend_token: Option<Secret>,
    pub template_path: Option<PathBuf>,
    pub bank_path: Option<PathBuf>,
    pub threshold: f64,
    pub k: usize,
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub seed: u64,
    pub reclassify: bool,
    pub fail_closed: bool,
    pub listen_addr: String,
    pub log_level: Level,
}

impl Default for AppConfig {
    fn default() -> Self {
        let gen = GenerationConfig::default();
        let pipeline = PipelineConfig::default();
        Self {
            model_path: None,
            backend: BackendKind::Mock,
            backend_url: None,
            backend_lexicon: None,
            backend_max_concurrency: 4,
            backend_token: None,
            template_path: None,
            bank_path: None,
            threshold: pipeline.threshold,
            k: pipeline.k,
            temperature: gen.temperature,
            max_new_tokens: gen.max_new_tokens,
            timeout_ms: gen.timeout_ms,
            max_retries: gen.max_retries,
            seed: gen.seed,
            reclassify: pipeline.reclassify,
            fail_closed: pipeline.fail_closed,
            listen_addr: "127.0.0.1:8080".to_string(),
            log_level: Level::Info,
        }
    }
}

impl AppConfig {
    /// The generation settings as the core crate consumes them.
    pub fn generation_config(&self) -> GenerationConfig {
        GenerationConfig {
            temperature: self.temperature,
            max_new_tokens: self.max_new_tokens,
            seed: self.seed,
            timeout_ms: self.timeout_ms,
            max_retries: self.max_retries,
            ..GenerationConfig::default()
        }
    }

    /// The pipeline settings as the core crate consumes them.
    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            threshold: self.threshold,
            k: self.k,
            gen: self.generation_config(),
            reclassify: self.reclassify,
            fail_closed: self.fail_closed,
        }
    }
}

/// Parses `key = value` lines. `#` starts a comment (full-line or trailing),
/// blank lines are skipped, keys must be known and unique. Values may be
/// double-quoted to preserve leading/trailing spaces or `#`.
pub fn parse_config_file(source: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    for (index, raw_line) in source.lines().enumerate() {
        let line = index + 1;
        let content = raw_line.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            content: content.to_string(),
        })?;
        let key = key.trim();
        let mut value = value.trim();
        if value.starts_with('"') && value.len() >= 2 && value.ends_with('"') {
            value = &value[1..value.len() - 1];
        } else if let Some(comment) = value.find('#') {
            value = value[..comment].trim_end();
        }
        if key == "backend.token" {
            return Err(ConfigError::SecretInFile { line });
        }
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey {
                key: key.to_string(),
                line,
            });
        }
        if map
            .insert(key.to_string(), value.to_string())
            .is_some()
        {
            return Err(ConfigError::DuplicateKey {
                key: key.to_string(),
                line,
            });
        }
    }
    Ok(map)
}

/// Reads and parses a config file from disk.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, ConfigError> {
    let source = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_file(&source)
}

/// Extracts overrides from an environment map: for each known key, the value
/// of its `DEBIAS_*` variable if set. Unrelated `DEBIAS_*` variables are
/// ignored rather than rejected, since the environment is shared.
pub fn env_overrides(env: &BTreeMap<String, String>) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    for key in KEYS {
        if let Some(value) = env.get(&env_key(key)) {
            map.insert(key.to_string(), value.clone());
        }
    }
    map
}

fn parse_typed<T: std::str::FromStr>(
    key: &'static str,
    value: &str,
) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key,
        value: value.to_string(),
        message: e.to_string(),
    })
}

fn parse_bool(key: &'static str, value: &str) -> Result<bool, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(ConfigError::BadValue {
            key,
            value: value.to_string(),
            message: "expected true or false".to_string(),
        }),
    }
}

/// Merges the three override layers over the defaults and type-checks every
/// value. Pure — host environment access happens in the caller.
pub fn resolve(
    file: &BTreeMap<String, String>,
    env: &BTreeMap<String, String>,
    cli: &BTreeMap<String, String>,
) -> Result<AppConfig, ConfigError> {
    let mut merged: BTreeMap<&str, &str> = BTreeMap::new();
    for layer in [file, env, cli] {
        for (key, value) in layer {
            merged.insert(key.as_str(), value.as_str());
        }
    }

    let mut config = AppConfig::default();
    for (key, value) in merged {
        match key {
            "model_path" => config.model_path = Some(PathBuf::from(value)),
            "backend" => {
                config.backend = match value.to_ascii_lowercase().as_str() {
                    "mock" => BackendKind::Mock,
                    "remote" => BackendKind::Remote,
                    _ => {
                        return Err(ConfigError::BadValue {
                            key: "backend",
                            value: value.to_string(),
                            message: "expected mock or remote".to_string(),
                        })
                    }
                }
            }
            "backend.url" => config.backend_url = Some(value.to_string()),
            "backend.lexicon" => config.backend_lexicon = Some(PathBuf::from(value)),
            "backend.max_concurrency" => {
                let parsed: usize = parse_typed("backend.max_concurrency", value)?;
                if parsed == 0 {
                    return Err(ConfigError::BadValue {
                        key: "backend.max_concurrency",
                        value: value.to_string(),
                        message: "must be at least 1".to_string(),
                    });
                }
                config.backend_max_concurrency = parsed;
            }
            "template_path" => config.template_path = Some(PathBuf::from(value)),
            "bank_path" => config.bank_path = Some(PathBuf::from(value)),
            "pipeline.threshold" => {
                config.threshold = parse_typed("pipeline.threshold", value)?
            }
            "pipeline.k" => config.k = parse_typed("pipeline.k", value)?,
            "pipeline.temperature" => {
                config.temperature = parse_typed("pipeline.temperature", value)?
            }
            "pipeline.max_new_tokens" => {
                config.max_new_tokens = parse_typed("pipeline.max_new_tokens", value)?
            }
            "pipeline.timeout_ms" => {
                config.timeout_ms = parse_typed("pipeline.timeout_ms", value)?
            }
            "pipeline.max_retries" => {
                config.max_retries = parse_typed("pipeline.max_retries", value)?
            }
            "pipeline.seed" => config.seed = parse_typed("pipeline.seed", value)?,
            "pipeline.reclassify" => {
                config.reclassify = parse_bool("pipeline.reclassify", value)?
            }
            "pipeline.fail_closed" => {
                config.fail_closed = parse_bool("pipeline.fail_closed", value)?
            }
            "server.listen_addr" => config.listen_addr = value.to_string(),
            "log_level" => {
                config.log_level =
                    value.parse().map_err(|e: crate::logging::BadLevel| {
                        ConfigError::BadValue {
                            key: "log_level",
                            value: value.to_string(),
                            message: e.to_string(),
                        }
                    })?
            }
            // `merged` only holds keys from `KEYS` or callers' typed maps.
            other => {
                return Err(ConfigError::UnknownKey {
                    key: other.to_string(),
                    line: 0,
                })
            }
        }
    }
    Ok(config)
}

/// Loads configuration from the host environment: `--config` path (if any)
/// beats `DEBIAS_CONFIG`; a missing explicit file is an error while an unset
/// `DEBIAS_CONFIG` just means no file layer.
pub fn load(
    config_flag: Option<&Path>,
    env: &BTreeMap<String, String>,
    cli: &BTreeMap<String, String>,
) -> Result<AppConfig, ConfigError> {
    let file_path = config_flag
        .map(Path::to_path_buf)
        .or_else(|| env.get(ENV_CONFIG).map(PathBuf::from));
    let file = match file_path {
        Some(path) => read_config_file(&path)?,
        None => BTreeMap::new(),
    };
    let mut config = resolve(&file, &env_overrides(env), cli)?;
    config.backend_token = env.get(ENV_BACKEND_TOKEN).cloned().map(Secret);
    Ok(config)
}

/// Snapshot of the process environment as a plain map.
pub fn host_env() -> BTreeMap<String, String> {
    std::env::vars().collect()
}
