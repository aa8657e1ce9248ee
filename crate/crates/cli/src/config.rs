//! Configuration resolution and loading.
//!
//! Every tunable lives in a file: a threshold table, suppression rules,
//! URL summaries, per-language prompts, and the URL allowlist. A config
//! directory supplies them under well-known names; individual flags point at
//! alternate files. Loading is fail-fast — a malformed file is a hard error,
//! never a partially applied config — and every load computes a fingerprint
//! so operators can tell which config a running service answered with.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use anyhow::{bail, Context, Result};
use precept_core::backend::reference::ReferenceBackend;
use precept_core::backend::{Backend, DecodeConfig, Strategy, DEFAULT_BEAM_WIDTH};
use precept_core::corpus::{Language, PromptTable, UrlAllowlist, DEFAULT_INPUT_BUDGET};
use precept_core::pipeline::{parse_rules, PipelineConfig, SummaryTable, SuppressionRule, ThresholdTable};
use sha2::{Digest, Sha256};

use crate::remote::RemoteBackend;

pub const THRESHOLDS_FILE: &str = "thresholds.cfg";
pub const RULES_FILE: &str = "rules.jsonl";
pub const SUMMARIES_FILE: &str = "summaries.jsonl";
pub const PROMPTS_FILE: &str = "prompts.cfg";
pub const ALLOWLIST_FILE: &str = "allowlist.cfg";

/// The one permitted environment override: where the config directory lives
/// when `--config` is not passed.
pub const CONFIG_DIR_ENV: &str = "PRECEPT_CONFIG_DIR";

/// Where each config file comes from, after resolving the directory and any
/// per-file flag overrides. `None` means "use the built-in default".
#[derive(Debug, Clone, Default)]
pub struct ConfigSources {
    pub thresholds: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub summaries: Option<PathBuf>,
    pub prompts: Option<PathBuf>,
    pub allowlist: Option<PathBuf>,
}

/// (path, observed (mtime, len)) for one config source; `None` stamp means
/// the file did not exist. Lets the service notice edits between requests.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceStamp {
    pub path: PathBuf,
    pub stamp: Option<(SystemTime, u64)>,
}

fn stamp_of(path: &Path) -> Option<(SystemTime, u64)> {
    let meta = fs::metadata(path).ok()?;
    Some((meta.modified().ok()?, meta.len()))
}

impl ConfigSources {
    /// Resolves file paths from an optional config directory (flag first,
    /// then the environment override) plus per-file flag overrides.
    /// Directory files that don't exist are simply not used; explicitly
    /// flagged files must exist at load time.
    pub fn resolve(
        config_dir: Option<&Path>,
        thresholds: Option<PathBuf>,
        rules: Option<PathBuf>,
        summaries: Option<PathBuf>,
    ) -> Self {
        let dir = config_dir
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(CONFIG_DIR_ENV).map(PathBuf::from));
        let from_dir = |name: &str| dir.as_ref().map(|d| d.join(name)).filter(|p| p.exists());
        ConfigSources {
            thresholds: thresholds.or_else(|| from_dir(THRESHOLDS_FILE)),
            rules: rules.or_else(|| from_dir(RULES_FILE)),
            summaries: summaries.or_else(|| from_dir(SUMMARIES_FILE)),
            prompts: from_dir(PROMPTS_FILE),
            allowlist: from_dir(ALLOWLIST_FILE),
        }
    }

    fn paths(&self) -> impl Iterator<Item = &PathBuf> {
        [
            self.thresholds.as_ref(),
            self.rules.as_ref(),
            self.summaries.as_ref(),
            self.prompts.as_ref(),
            self.allowlist.as_ref(),
        ]
        .into_iter()
        .flatten()
    }

    /// The current on-disk state of every configured source file.
    pub fn stamps(&self) -> Vec<SourceStamp> {
        self.paths()
            .map(|p| SourceStamp {
                path: p.clone(),
                stamp: stamp_of(p),
            })
            .collect()
    }

    /// Reads and parses every configured file. Any unreadable or malformed
    /// file fails the whole load.
    pub fn load(&self) -> Result<LoadedConfig> {
        let mut hasher = Sha256::new();
        let mut read = |label: &str, path: &Option<PathBuf>| -> Result<Option<String>> {
            hasher.update(label.as_bytes());
            hasher.update([0u8]);
            let text = match path {
                Some(p) => Some(
                    fs::read_to_string(p)
                        .with_context(|| format!("reading {} from {}", label, p.display()))?,
                ),
                None => None,
            };
            hasher.update(text.as_deref().unwrap_or("\u{1}default").as_bytes());
            hasher.update([0u8]);
            Ok(text)
        };

        let thresholds_text = read("thresholds", &self.thresholds)?;
        let rules_text = read("rules", &self.rules)?;
        let summaries_text = read("summaries", &self.summaries)?;
        let prompts_text = read("prompts", &self.prompts)?;
        let allowlist_text = read("allowlist", &self.allowlist)?;
        let fingerprint = format!("{:x}", hasher.finalize());

        let thresholds = match &thresholds_text {
            Some(text) => ThresholdTable::parse(text).with_context(|| {
                format!(
                    "parsing thresholds from {}",
                    self.thresholds.as_ref().unwrap().display()
                )
            })?,
            None => ThresholdTable::default(),
        };
        let rules = match &rules_text {
            Some(text) => parse_rules(Cursor::new(text.as_bytes())).with_context(|| {
                format!(
                    "parsing suppression rules from {}",
                    self.rules.as_ref().unwrap().display()
                )
            })?,
            None => Vec::new(),
        };
        let summaries = match &summaries_text {
            Some(text) => SummaryTable::parse(Cursor::new(text.as_bytes())).with_context(|| {
                format!(
                    "parsing summaries from {}",
                    self.summaries.as_ref().unwrap().display()
                )
            })?,
            None => SummaryTable::default(),
        };
        let prompts = match &prompts_text {
            Some(text) => PromptTable::parse(text).with_context(|| {
                format!(
                    "parsing prompts from {}",
                    self.prompts.as_ref().unwrap().display()
                )
            })?,
            None => PromptTable::default(),
        };
        let allowlist = allowlist_text.as_deref().map(UrlAllowlist::parse);

        Ok(LoadedConfig {
            thresholds,
            rules,
            summaries,
            prompts,
            allowlist,
            fingerprint,
        })
    }
}

/// Everything the commands need, parsed and ready.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub thresholds: ThresholdTable,
    pub rules: Vec<SuppressionRule>,
    pub summaries: SummaryTable,
    pub prompts: PromptTable,
    pub allowlist: Option<UrlAllowlist>,
    /// SHA-256 over the raw source texts; changes iff any config file does.
    pub fingerprint: String,
}

impl LoadedConfig {
    pub fn pipeline(&self, decode: DecodeConfig) -> PipelineConfig {
        PipelineConfig {
            prompts: self.prompts.clone(),
            budget: DEFAULT_INPUT_BUDGET,
            decode,
            thresholds: self.thresholds.clone(),
            rules: self.rules.clone(),
            summaries: self.summaries.clone(),
        }
    }
}

/// Builds the model backend named by `--backend`: the built-in analyzer, or
/// a remote generation service at `remote:<base-url>`.
pub fn build_backend(spec: &str) -> Result<Box<dyn Backend>> {
    if spec == "reference" {
        return Ok(Box::new(ReferenceBackend::default()));
    }
    if let Some(base) = spec.strip_prefix("remote:") {
        if base.is_empty() {
            bail!("`remote:` needs a base URL, e.g. remote:http://127.0.0.1:8090");
        }
        return Ok(Box::new(RemoteBackend::new(base)));
    }
    bail!("unknown backend `{spec}`; expected `reference` or `remote:URL`")
}

/// Combines `--strategy`/`--beam-width` with the per-command default
/// strategy. Beam width falls back to the standard width.
pub fn decode_config(
    strategy: Option<Strategy>,
    beam_width: Option<u32>,
    default_strategy: Strategy,
) -> DecodeConfig {
    match strategy.unwrap_or(default_strategy) {
        Strategy::Greedy => DecodeConfig::greedy(),
        Strategy::Beam => DecodeConfig::beam(beam_width.unwrap_or(DEFAULT_BEAM_WIDTH)),
    }
}

/// Infers the language from a file extension, for `analyze` inputs that
/// carry no explicit language.
pub fn language_for_path(path: &Path) -> Option<Language> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    let name = match ext.as_str() {
        "go" => "go",
        "py" => "python",
        "java" => "java",
        "c" => "c",
        "cc" | "cpp" | "cxx" | "h" | "hpp" => "cpp",
        "js" | "mjs" => "javascript",
        "ts" => "typescript",
        _ => return None,
    };
    Some(Language::new(name))
}
