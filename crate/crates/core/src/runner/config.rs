use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::RunError;
use crate::baselines::{StrategyId, DEFAULT_FIXED_CHUNKS, DEFAULT_SEQ_WINDOW};
use crate::chunker::ChunkerConfig;
use crate::exec::ExecMode;
use crate::gateway::{Backend, Gateway, RetryPolicy, ScriptedBackend, SyntheticBackend, Tokenizer};
use crate::graph::DEFAULT_WINDOW;
use crate::lang::Language;
use crate::translator::{FailurePolicy, SelectionPolicy, TranslatorConfig, DEFAULT_CONTEXT_CAP};

/// Where completions come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BackendSpec {
    /// Scripted fixture file (`mock:<path>`).
    Mock(PathBuf),
    /// Deterministic synthetic replies (`synthetic` or `synthetic:<seed>`).
    Synthetic { seed: u64 },
    /// The configured chat-completions endpoint (`live`).
    Live,
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(path) = s.strip_prefix("mock:") {
            if path.is_empty() {
                return Err("mock backend needs a fixture path (mock:<path>)".into());
            }
            return Ok(BackendSpec::Mock(PathBuf::from(path)));
        }
        if s == "synthetic" {
            return Ok(BackendSpec::Synthetic { seed: 0 });
        }
        if let Some(seed) = s.strip_prefix("synthetic:") {
            let seed = seed.parse().map_err(|_| format!("invalid synthetic seed {seed:?}"))?;
            return Ok(BackendSpec::Synthetic { seed });
        }
        if s == "live" {
            return Ok(BackendSpec::Live);
        }
        Err(format!(
            "unknown backend {s:?} (expected mock:<path>, synthetic[:seed] or live)"
        ))
    }
}

impl TryFrom<String> for BackendSpec {
    type Error = String;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<BackendSpec> for String {
    fn from(spec: BackendSpec) -> String {
        spec.to_string()
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Mock(p) => write!(f, "mock:{}", p.display()),
            BackendSpec::Synthetic { seed: 0 } => f.write_str("synthetic"),
            BackendSpec::Synthetic { seed } => write!(f, "synthetic:{seed}"),
            BackendSpec::Live => f.write_str("live"),
        }
    }
}

/// Live endpoint settings (`[live]` table).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_key_env() -> String {
    "DISCOURSE_MT_API_KEY".to_string()
}

fn default_timeout() -> u64 {
    300
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub strategy: StrategyId,
    pub src_lang: Language,
    pub tgt_lang: Language,
    /// Chunking window `T`, in tokens.
    pub window_tokens: usize,
    /// Pair window `w` for relation labelling.
    pub pair_window: usize,
    /// Maximum context chunks per translation request.
    pub context_cap: usize,
    pub selection: SelectionPolicy,
    /// Chunk count of the fixed-size baseline.
    pub fixed_chunks: usize,
    /// Preceding chunks used by the sequential-context baselines.
    pub seq_window: usize,
    /// Attach graph relations to sequential context (builds a graph).
    pub seq_labels: bool,
    pub backend: BackendSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub live: Option<LiveConfig>,
    pub tokenizer: Tokenizer,
    pub out_dir: PathBuf,
    /// What a failed chunk translation does to its document.
    pub failure: FailurePolicy,
    pub max_concurrent_documents: usize,
    /// Issue independent requests concurrently.
    pub parallel: bool,
    pub structure_retries: u32,
    pub transport_retries: u32,
    pub bleu_max_n: usize,
    /// Also run the cohesion judge on every translated document.
    pub cohesion: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub external_scores: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            strategy: StrategyId::Transgraph,
            src_lang: Language::new("en"),
            tgt_lang: Language::new("de"),
            window_tokens: ChunkerConfig::default().window_tokens,
            pair_window: DEFAULT_WINDOW,
            context_cap: DEFAULT_CONTEXT_CAP,
            selection: SelectionPolicy::default(),
            fixed_chunks: DEFAULT_FIXED_CHUNKS,
            seq_window: DEFAULT_SEQ_WINDOW,
            seq_labels: true,
            backend: BackendSpec::Synthetic { seed: 0 },
            live: None,
            tokenizer: Tokenizer::Default,
            out_dir: PathBuf::from("runs"),
            failure: FailurePolicy::Halt,
            max_concurrent_documents: 4,
            parallel: true,
            structure_retries: 2,
            transport_retries: 3,
            bleu_max_n: 4,
            cohesion: false,
            external_scores: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, RunError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let positive = [
            ("window_tokens", self.window_tokens),
            ("pair_window", self.pair_window),
            ("context_cap", self.context_cap),
            ("fixed_chunks", self.fixed_chunks),
            ("seq_window", self.seq_window),
            ("max_concurrent_documents", self.max_concurrent_documents),
            ("bleu_max_n", self.bleu_max_n),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(RunError::Config(format!("{name} must be at least 1")));
            }
        }
        if self.backend == BackendSpec::Live && self.live.is_none() {
            return Err(RunError::Config(
                "backend \"live\" needs a [live] table with endpoint and model".into(),
            ));
        }
        Ok(())
    }

    pub fn chunker(&self) -> ChunkerConfig {
        ChunkerConfig {
            window_tokens: self.window_tokens,
            structure_retries: self.structure_retries,
            ..ChunkerConfig::default()
        }
    }

    pub fn translator(&self) -> TranslatorConfig {
        TranslatorConfig {
            cap: self.context_cap,
            policy: self.selection,
            failure: self.failure,
            ..TranslatorConfig::new(self.src_lang.clone(), self.tgt_lang.clone())
        }
    }

    fn backend(&self) -> Result<Arc<dyn Backend>, RunError> {
        Ok(match &self.backend {
            BackendSpec::Mock(path) => Arc::new(
                ScriptedBackend::load(path).map_err(|e| RunError::Backend(format!("{}: {e}", path.display())))?,
            ),
            BackendSpec::Synthetic { seed } => Arc::new(SyntheticBackend::new(*seed)),
            BackendSpec::Live => self.live_backend()?,
        })
    }

    #[cfg(feature = "http")]
    fn live_backend(&self) -> Result<Arc<dyn Backend>, RunError> {
        use crate::gateway::http::{HttpBackend, HttpConfig};
        let live = self
            .live
            .as_ref()
            .ok_or_else(|| RunError::Config("missing [live] table".into()))?;
        let backend = HttpBackend::new(HttpConfig {
            endpoint: live.endpoint.clone(),
            model: live.model.clone(),
            api_key_env: live.api_key_env.clone(),
            timeout_secs: live.timeout_secs,
        })
        .map_err(|e| RunError::Backend(e.to_string()))?;
        Ok(Arc::new(backend))
    }

    #[cfg(not(feature = "http"))]
    fn live_backend(&self) -> Result<Arc<dyn Backend>, RunError> {
        Err(RunError::Config(
            "this build has no HTTP support (enable the `http` feature)".into(),
        ))
    }

    /// A gateway configured from this run's backend, tokenizer, retry
    /// budget and execution mode.
    pub fn gateway(&self) -> Result<Gateway, RunError> {
        let retry = RetryPolicy {
            transport_retries: self.transport_retries,
            structure_retries: self.structure_retries,
            ..RetryPolicy::default()
        };
        let exec = if self.parallel {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        };
        Ok(Gateway::new(self.backend()?)
            .with_tokenizer(self.tokenizer)
            .with_retry(retry)
            .with_exec(exec))
    }
}
