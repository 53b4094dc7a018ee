use std::path::{Path, PathBuf};

use fatgraph_core::schedule::{RawParams, Stage};
use fatgraph_core::{Params, Rat};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Everything a run depends on. Artifacts are functions of this value alone.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub params: Params,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<Rat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    pub exhaustive_limit: u128,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(params: Params, exhaustive_limit: u128) -> Self {
        RunConfig {
            params,
            epsilon: None,
            depth: None,
            resolution: None,
            seed: None,
            trials: None,
            exhaustive_limit,
            out: None,
        }
    }
}

/// Parse `"3,3,5,7"` into stages `(3,3), (5,7)`.
pub fn parse_stages(s: &str) -> Result<Vec<Stage>, CliError> {
    let nums: Vec<u64> = s
        .split(',')
        .map(|t| t.trim().parse::<u64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(format!("--stages {s:?}: {e}")))?;
    if nums.is_empty() || nums.len() % 2 != 0 {
        return Err(CliError::Usage(format!(
            "--stages {s:?}: expected pairs m,n[,m,n...]"
        )));
    }
    Ok(nums
        .chunks(2)
        .map(|c| Stage { m: c[0], n: c[1] })
        .collect())
}

pub fn load_params(path: &Path) -> Result<RawParams, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}
