use std::path::{Path, PathBuf};

use serde::Deserialize;

/// Flat key-value settings read from `--config`. Every key is optional;
/// command-line flags win over the file, the file wins over built-in defaults.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub batch_size: Option<usize>,
    pub max_retries: Option<u32>,
    pub failure_injection_rate: Option<f64>,

    pub levels: Option<usize>,
    pub codebook_size: Option<usize>,
    pub max_iters: Option<usize>,
    pub convergence_tol: Option<f64>,
    pub expand_factor: Option<usize>,
    pub noise_std: Option<f64>,

    pub oracle_noise_std: Option<f64>,
    pub oracle_min_duration: Option<u32>,
    pub oracle_max_duration: Option<u32>,

    pub max_prompt_chars: Option<usize>,
    pub min_prompt_chars: Option<usize>,
    pub max_nonalpha_ratio: Option<f64>,

    pub quantizer: Option<PathBuf>,
    pub mapper: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {}", path.display(), e.message()))
    }
}
