//! Configuration file loading and validation.
//!
//! One TOML file drives the whole pipeline; command-line flags override
//! individual fields after parsing. Input paths are resolved relative
//! to the config file so a bundled setup works from any working
//! directory. Every configured path must exist up front: a typo should
//! surface before any stage runs, not three stages in.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use specsva::checker::{CheckConfig, CheckMode};
use specsva::llm::{ClientMode, LiveConfig};
use specsva::svagen::GenConfig;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err(message: impl Into<String>) -> ConfigError {
    ConfigError(message.into())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    design: String,
    paths: PathsSection,
    #[serde(default)]
    client: ClientSection,
    #[serde(default)]
    check: CheckSection,
    #[serde(default)]
    generate: GenerateSection,
    #[serde(default)]
    mutate: MutateSection,
    #[serde(default)]
    refine: RefineSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathsSection {
    blockstream: PathBuf,
    rtl: PathBuf,
    output: PathBuf,
    corpus: Option<PathBuf>,
    labels: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClientSection {
    #[serde(default)]
    mode: Option<String>,
    fixture_dir: Option<PathBuf>,
    cache_dir: Option<PathBuf>,
    model: Option<String>,
    endpoint: Option<String>,
    /// Name of the environment variable holding the API key. The key
    /// itself never appears in this file.
    api_key_env: Option<String>,
    requests_per_minute: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckSection {
    mode: Option<String>,
    trace_length: Option<usize>,
    max_stimuli: Option<usize>,
    seed: Option<u64>,
    exhaustive_cap: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerateSection {
    clock: Option<String>,
    retrieval_k: Option<usize>,
    chain_of_thought: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MutateSection {
    budget: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RefineSection {
    max_iter: Option<u32>,
    method: Option<String>,
}

/// Flag overrides collected from the command line.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub offline: bool,
    pub no_rag: bool,
    pub no_cot: bool,
    pub max_iter: Option<u32>,
}

/// Fully resolved, validated pipeline configuration.
#[derive(Debug)]
pub struct PipelineConfig {
    pub design: String,
    pub method: String,
    pub blockstream: PathBuf,
    pub rtl: PathBuf,
    pub labels: Option<PathBuf>,
    pub out: PathBuf,
    pub client_mode: ClientMode,
    pub check: CheckConfig,
    pub gen: GenConfig,
    pub mutate_budget: usize,
    pub mutate_seed: u64,
    pub max_iter: u32,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn require_file(path: &Path, what: &str) -> Result<(), ConfigError> {
    if !path.is_file() {
        return Err(err(format!("{what} not found: {}", path.display())));
    }
    Ok(())
}

fn require_dir(path: &Path, what: &str) -> Result<(), ConfigError> {
    if !path.is_dir() {
        return Err(err(format!("{what} not found: {}", path.display())));
    }
    Ok(())
}

fn client_mode(
    base: &Path,
    client: &ClientSection,
    offline: bool,
) -> Result<ClientMode, ConfigError> {
    let mode = client.mode.as_deref().unwrap_or("mock");
    let resolved = match mode {
        "mock" => {
            let dir = client
                .fixture_dir
                .as_ref()
                .ok_or_else(|| err("client.fixture_dir is required in mock mode"))?;
            let dir = resolve(base, dir);
            require_dir(&dir, "client.fixture_dir")?;
            ClientMode::Mock { fixture_dir: dir }
        }
        "replay" => {
            let dir = client
                .cache_dir
                .as_ref()
                .ok_or_else(|| err("client.cache_dir is required in replay mode"))?;
            let dir = resolve(base, dir);
            require_dir(&dir, "client.cache_dir")?;
            let model = client
                .model
                .clone()
                .ok_or_else(|| err("client.model is required in replay mode"))?;
            ClientMode::Replay {
                cache_dir: dir,
                model,
            }
        }
        "live" => {
            let endpoint = client
                .endpoint
                .clone()
                .ok_or_else(|| err("client.endpoint is required in live mode"))?;
            let model = client
                .model
                .clone()
                .ok_or_else(|| err("client.model is required in live mode"))?;
            let api_key_env = client
                .api_key_env
                .clone()
                .ok_or_else(|| err("client.api_key_env is required in live mode"))?;
            let cache_dir = client
                .cache_dir
                .as_ref()
                .ok_or_else(|| err("client.cache_dir is required in live mode"))?;
            ClientMode::Live(LiveConfig {
                endpoint,
                model,
                api_key_env,
                requests_per_minute: client.requests_per_minute.unwrap_or(30),
                cache_dir: resolve(base, cache_dir),
            })
        }
        other => return Err(err(format!("unknown client.mode `{other}`"))),
    };
    // Offline runs never open a connection: live configurations fall
    // back to replaying their own response cache.
    if offline {
        if let ClientMode::Live(live) = resolved {
            return Ok(ClientMode::Replay {
                cache_dir: live.cache_dir,
                model: live.model,
            });
        }
    }
    Ok(resolved)
}

fn check_config(section: &CheckSection) -> Result<CheckConfig, ConfigError> {
    let mut cfg = CheckConfig::default();
    if let Some(mode) = &section.mode {
        cfg.mode = match mode.as_str() {
            "exhaustive" => CheckMode::Exhaustive,
            "random" => CheckMode::Random,
            other => return Err(err(format!("unknown check.mode `{other}`"))),
        };
    }
    if let Some(v) = section.trace_length {
        cfg.trace_length = v;
    }
    if let Some(v) = section.max_stimuli {
        cfg.max_stimuli = v;
    }
    if let Some(v) = section.seed {
        cfg.seed = v;
    }
    if let Some(v) = section.exhaustive_cap {
        cfg.exhaustive_cap = v;
    }
    cfg.validate()
        .map_err(|e| err(format!("check section: {e}")))?;
    Ok(cfg)
}

/// Parse and validate a config file, applying flag overrides.
pub fn load(path: &Path, overrides: &Overrides) -> Result<PipelineConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| err(format!("cannot read {}: {e}", path.display())))?;
    let file: FileConfig =
        toml::from_str(&text).map_err(|e| err(format!("{}: {e}", path.display())))?;
    if file.design.trim().is_empty() {
        return Err(err("design name is empty"));
    }
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();

    let blockstream = resolve(&base, &file.paths.blockstream);
    require_file(&blockstream, "paths.blockstream")?;
    let rtl = resolve(&base, &file.paths.rtl);
    require_file(&rtl, "paths.rtl")?;
    let labels = match &file.paths.labels {
        Some(p) => {
            let p = resolve(&base, p);
            require_file(&p, "paths.labels")?;
            Some(p)
        }
        None => None,
    };
    let corpus = match &file.paths.corpus {
        Some(p) => {
            let p = resolve(&base, p);
            require_dir(&p, "paths.corpus")?;
            Some(p)
        }
        None => None,
    };
    let out = overrides
        .out
        .clone()
        .unwrap_or_else(|| resolve(&base, &file.paths.output));

    let client_mode = client_mode(&base, &file.client, overrides.offline)?;
    let check = check_config(&file.check)?;

    let mut gen = GenConfig::default();
    if let Some(clock) = &file.generate.clock {
        gen.clock = clock.clone();
    }
    if let Some(k) = file.generate.retrieval_k {
        gen.retrieval_k = k;
    }
    if let Some(cot) = file.generate.chain_of_thought {
        gen.chain_of_thought = cot;
    }
    gen.corpus_dir = corpus;
    if overrides.no_rag {
        gen.retrieval_k = 0;
        gen.corpus_dir = None;
    }
    if overrides.no_cot {
        gen.chain_of_thought = false;
    }

    let max_iter = overrides
        .max_iter
        .or(file.refine.max_iter)
        .unwrap_or(3);
    if max_iter < 1 {
        return Err(err("refine.max_iter must be at least 1"));
    }

    Ok(PipelineConfig {
        design: file.design,
        method: file.refine.method.clone().unwrap_or_else(|| "pipeline".into()),
        blockstream,
        rtl,
        labels,
        out,
        client_mode,
        check,
        gen,
        mutate_budget: file.mutate.budget.unwrap_or(150),
        mutate_seed: file.mutate.seed.unwrap_or(7),
        max_iter,
    })
}
