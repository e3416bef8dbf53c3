//! Optional TOML run configuration.
//!
//! Every table mirrors the flags of one subcommand. Flags override the file,
//! the file overrides built-in defaults. The output directory falls back to
//! `SYMBREAK_OUTPUT_DIR` and then to the working directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub const OUTPUT_DIR_ENV: &str = "SYMBREAK_OUTPUT_DIR";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub global: GlobalTable,
    #[serde(default)]
    pub certify: CertifyTable,
    #[serde(default)]
    pub kernel_sup: KernelSupTable,
    #[serde(default)]
    pub energy: EnergyTable,
    #[serde(default)]
    pub minimize: MinimizeTable,
    #[serde(default)]
    pub potential_sample: SampleTable,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobalTable {
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub quad_tol: Option<f64>,
    pub quad_method: Option<String>,
    pub quad_panels: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyTable {
    pub dim: Option<usize>,
    pub eps: Option<f64>,
    pub eta: Option<f64>,
    pub mode: Option<String>,
    pub slack: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub power_s: Option<f64>,
    pub w1: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSupTable {
    pub dim: Option<usize>,
    pub eps: Option<f64>,
    pub s_max: Option<f64>,
    pub coarse_step: Option<f64>,
    pub refinements: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyTable {
    pub measure: Option<PathBuf>,
    pub potential: Option<String>,
    pub dim: Option<usize>,
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinimizeTable {
    pub potential: Option<String>,
    pub dim: Option<usize>,
    pub n: Option<usize>,
    pub max_iters: Option<usize>,
    pub step0: Option<f64>,
    pub grad_tol: Option<f64>,
    pub init: Option<String>,
    pub direction: Option<String>,
    pub threshold: Option<f64>,
    pub radial_bound: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleTable {
    pub potential: Option<String>,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    pub step: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))
    }
}

/// Settings shared by every subcommand after precedence is applied.
#[derive(Debug, Clone, Serialize)]
pub struct Global {
    pub output_dir: PathBuf,
    pub seed: u64,
    pub threads: Option<usize>,
    pub quadrature: symbreak::QuadratureSpec,
}

/// First `Some` wins.
pub fn pick<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

pub fn output_dir(flag: Option<PathBuf>, file: Option<PathBuf>) -> PathBuf {
    pick(flag, file)
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("[global]\nseed = 3\n").is_ok());
        assert!(toml::from_str::<FileConfig>("[global]\nsed = 3\n").is_err());
        assert!(toml::from_str::<FileConfig>("[certfy]\ndim = 2\n").is_err());
    }

    #[test]
    fn flags_win_over_file() {
        assert_eq!(pick(Some(1), Some(2)), Some(1));
        assert_eq!(pick(None, Some(2)), Some(2));
        assert_eq!(pick::<i32>(None, None), None);
        assert_eq!(output_dir(Some("a".into()), Some("b".into())), PathBuf::from("a"));
    }
}
