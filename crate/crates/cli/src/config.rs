//! Plain `key = value` config files with strict key checking.
//!
//! Precedence is fixed everywhere: built-in defaults, then config file
//! values, then command-line flags. Unknown keys are rejected so typos
//! fail loudly instead of silently running defaults.

use std::collections::BTreeMap;
use std::path::Path;

use fairtone_core::annotate::AnnotateConfig;
use fairtone_core::evalbias::{ProbeConfig, SyntheticBiasSpec};
use fairtone_core::unlearn::{Method, TrainConfig};

use crate::CliError;

/// Parsed key-value file with consumption tracking.
pub struct KvFile {
    entries: BTreeMap<String, String>,
    consumed: std::collections::BTreeSet<String>,
}

impl KvFile {
    /// Empty config (no file given).
    pub fn empty() -> Self {
        Self { entries: BTreeMap::new(), consumed: Default::default() }
    }

    /// Parses `key = value` lines; `#` starts a comment, blank lines are
    /// skipped, duplicate keys are an error.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Runtime(format!("cannot read config {}: {e}", path.display())))?;
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "{}:{}: expected 'key = value', got '{raw}'",
                    path.display(),
                    lineno + 1
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if entries.insert(key.clone(), value).is_some() {
                return Err(CliError::Usage(format!(
                    "{}:{}: duplicate key '{key}'",
                    path.display(),
                    lineno + 1
                )));
            }
        }
        Ok(Self { entries, consumed: Default::default() })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        let value = self.entries.get(key).cloned();
        if value.is_some() {
            self.consumed.insert(key.to_string());
        }
        value
    }

    pub fn get_parsed<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T, CliError> {
        match self.take(key) {
            None => Ok(default),
            Some(text) => text.parse::<T>().map_err(|_| {
                CliError::Usage(format!("config key '{key}': cannot parse '{text}'"))
            }),
        }
    }

    /// Errors on any key never consumed by a getter.
    pub fn finish(self) -> Result<(), CliError> {
        let unknown: Vec<String> = self
            .entries
            .keys()
            .filter(|k| !self.consumed.contains(*k))
            .cloned()
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::Usage(format!("unknown config key(s): {}", unknown.join(", "))))
        }
    }
}

fn load_or_empty(path: &Option<std::path::PathBuf>) -> Result<KvFile, CliError> {
    match path {
        Some(p) => KvFile::load(p),
        None => Ok(KvFile::empty()),
    }
}

/// Annotation config keys; see `annotate --help` for the defaults.
pub fn annotate_config(
    path: &Option<std::path::PathBuf>,
    workers_flag: Option<usize>,
) -> Result<AnnotateConfig, CliError> {
    let mut kv = load_or_empty(path)?;
    let mut config = AnnotateConfig::default();
    config.tone.patch_side = kv.get_parsed("patch_side", config.tone.patch_side)?;
    config.tone.margin = kv.get_parsed("margin", config.tone.margin)?;
    config.tone.kernel_size = kv.get_parsed("kernel_size", config.tone.kernel_size)?;
    config.tone.hair_threshold = kv.get_parsed("hair_threshold", config.tone.hair_threshold)?;
    config.tone.min_coverage = kv.get_parsed("min_coverage", config.tone.min_coverage)?;
    config.workers = kv.get_parsed("workers", config.workers)?;
    kv.finish()?;
    if let Some(w) = workers_flag {
        config.workers = w;
    }
    Ok(config)
}

pub const ANNOTATE_KEYS_HELP: &str = "\
Config file keys (key = value; flags override file values):
  patch_side      sample patch side in pixels        (default 20)
  margin          patch inset from the border        (default 0)
  kernel_size     black-hat kernel side, odd >= 3    (default 17)
  hair_threshold  black-hat response threshold       (default 10)
  min_coverage    min unmasked patch fraction (0,1]  (default 0.5)
  workers         worker threads for the batch       (default 1)";

/// Synthetic dataset spec keys; see `synth --help` for the defaults.
pub fn synth_spec(
    path: &Option<std::path::PathBuf>,
    seed_flag: Option<u64>,
) -> Result<SyntheticBiasSpec, CliError> {
    let mut kv = load_or_empty(path)?;
    let mut spec = SyntheticBiasSpec::default();
    spec.n_train = kv.get_parsed("n_train", spec.n_train)?;
    spec.n_test = kv.get_parsed("n_test", spec.n_test)?;
    spec.input_dim = kv.get_parsed("input_dim", spec.input_dim)?;
    spec.class_separation = kv.get_parsed("class_separation", spec.class_separation)?;
    spec.bias_shift = kv.get_parsed("bias_shift", spec.bias_shift)?;
    spec.train_correlation = kv.get_parsed("train_correlation", spec.train_correlation)?;
    spec.test_correlation = kv.get_parsed("test_correlation", spec.test_correlation)?;
    spec.seed = kv.get_parsed("seed", spec.seed)?;
    kv.finish()?;
    if let Some(seed) = seed_flag {
        spec.seed = seed;
    }
    Ok(spec)
}

pub const SYNTH_KEYS_HELP: &str = "\
Spec file keys (key = value; flags override file values):
  n_train            training examples            (default 2000)
  n_test             test examples                (default 2000)
  input_dim          input dimensionality         (default 10)
  class_separation   distance between class means (default 2)
  bias_shift         bias-axis displacement       (default 3)
  train_correlation  P(b = y) in train, [0.5, 1]  (default 0.95)
  test_correlation   P(b = y) in test,  [0.5, 1]  (default 0.5)
  seed               generator seed               (default 0)";

/// Training + probe config keys; see `train --help` for the defaults.
pub fn train_config(
    path: &Option<std::path::PathBuf>,
    method_flag: Option<Method>,
    seed_flag: Option<u64>,
    epochs_flag: Option<usize>,
) -> Result<(TrainConfig, ProbeConfig), CliError> {
    let mut kv = load_or_empty(path)?;
    let mut config = TrainConfig::default();
    if let Some(text) = kv.take("method") {
        config.method = text
            .parse::<Method>()
            .map_err(|e| CliError::Usage(format!("config key 'method': {e}")))?;
    }
    config.learning_rate = kv.get_parsed("learning_rate", config.learning_rate)?;
    config.momentum = kv.get_parsed("momentum", config.momentum)?;
    config.gr_lambda = kv.get_parsed("gr_lambda", config.gr_lambda)?;
    config.reg_mu = kv.get_parsed("reg_mu", config.reg_mu)?;
    config.epochs = kv.get_parsed("epochs", config.epochs)?;
    config.batch_size = kv.get_parsed("batch_size", config.batch_size)?;
    config.seed = kv.get_parsed("seed", config.seed)?;
    config.hidden_dim = kv.get_parsed("hidden_dim", config.hidden_dim)?;
    config.feature_dim = kv.get_parsed("feature_dim", config.feature_dim)?;
    config.head_depth = kv.get_parsed("head_depth", config.head_depth)?;

    let mut probe = ProbeConfig::default();
    probe.epochs = kv.get_parsed("probe_epochs", probe.epochs)?;
    probe.learning_rate = kv.get_parsed("probe_learning_rate", probe.learning_rate)?;
    probe.momentum = kv.get_parsed("probe_momentum", probe.momentum)?;
    probe.batch_size = kv.get_parsed("probe_batch_size", probe.batch_size)?;
    probe.holdout_fraction = kv.get_parsed("probe_holdout_fraction", probe.holdout_fraction)?;
    kv.finish()?;

    if let Some(method) = method_flag {
        config.method = method;
    }
    if let Some(seed) = seed_flag {
        config.seed = seed;
    }
    if let Some(epochs) = epochs_flag {
        config.epochs = epochs;
    }
    // the probe inherits the run seed so one named seed covers the run
    probe.seed = config.seed;
    Ok((config, probe))
}
