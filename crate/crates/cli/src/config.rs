//! Experiment configuration, parsed strictly and checked before any compute.

use std::path::Path;

use orthoglass::ensemble_sim::Placement;
use orthoglass::oracle::MAX_ENUMERATION_N;
use orthoglass::ModelSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Rs,
    Se,
    Amp,
    Enumerate,
    Sphere,
    Hciz,
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Rs => "rs",
            Command::Se => "se",
            Command::Amp => "amp",
            Command::Enumerate => "enumerate",
            Command::Sphere => "sphere",
            Command::Hciz => "hciz",
            Command::Validate => "validate",
        }
    }

    pub fn randomized(self) -> bool {
        !matches!(self, Command::Rs | Command::Se)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Report thresholds. They flag rows in command reports; `validate` always
/// uses its own fixed tolerances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Fixed-point tolerance for `q*`.
    pub q_star: f64,
    pub gram: f64,
    pub freeness: f64,
    pub free_energy_gap: f64,
    pub sphere_gap: f64,
    pub hciz_gap: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { q_star: 1e-13, gram: 0.05, freeness: 0.1, free_energy_gap: 0.02, sphere_gap: 0.01, hciz_gap: 0.05 }
    }
}

/// Inputs of the `hciz` command: `a = √α·1`, `b = b_scale·1`, eigenvalues at
/// quantiles of the rescaled law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HcizSettings {
    pub alpha: f64,
    pub b_scale: f64,
    pub draws: usize,
    pub shards: usize,
}

impl Default for HcizSettings {
    fn default() -> Self {
        HcizSettings { alpha: 0.8, b_scale: 0.1, draws: 400_000, shards: 40 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSettings {
    #[serde(default)]
    pub path: Option<String>,
    #[serde(default)]
    pub format: Format,
    /// Also write AMP iterates as raw little-endian f64 with a JSON sidecar.
    #[serde(default)]
    pub raw_dump: bool,
}

fn default_n_list() -> Vec<usize> {
    vec![12, 16, 20]
}

fn default_t_max() -> usize {
    6
}

fn default_replicates() -> usize {
    8
}

fn default_amp_n() -> usize {
    2000
}

fn default_order() -> usize {
    orthoglass::state_evolution::SE_ORDER
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Must match the subcommand when present.
    #[serde(default)]
    pub command: Option<Command>,
    /// Required by every command except `validate`.
    #[serde(default)]
    pub model: Option<ModelSpec>,
    /// Criteria run by `validate`; all of them when absent.
    #[serde(default)]
    pub criteria: Option<Vec<u8>>,
    /// System sizes; `enumerate` uses all of them, `amp` and `sphere` the first.
    #[serde(default = "default_n_list")]
    pub n_list: Vec<usize>,
    /// Size for `amp`, `sphere` and `hciz` when `n_list` is given for enumeration.
    #[serde(default = "default_amp_n")]
    pub n: usize,
    #[serde(default = "default_t_max")]
    pub t_max: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub placement: Placement,
    #[serde(default = "default_order")]
    pub quadrature_order: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub hciz: HcizSettings,
    #[serde(default)]
    pub output: OutputSettings,
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

impl ExperimentConfig {
    pub fn from_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError(format!("{origin}: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::from_str(&text, &path.display().to_string())
    }

    /// Checks everything that does not need a solve.
    pub fn check(&self, command: Command) -> Result<(), ConfigError> {
        let err = |m: String| Err(ConfigError(m));
        if let Some(c) = self.command {
            if c != command {
                return err(format!("config is for `{}` but `{}` was requested", c.name(), command.name()));
            }
        }
        match (&self.model, command) {
            (Some(m), _) => {
                if let Err(e) = m.validate() {
                    return err(format!("model: {e}"));
                }
            }
            (None, Command::Validate) => {}
            (None, _) => return err(format!("`{}` needs a `model`", command.name())),
        }
        if let Some(ids) = &self.criteria {
            if let Some(id) = ids.iter().find(|id| !orthoglass::validation::CRITERIA.contains(id)) {
                return err(format!("no criterion {id}"));
            }
        }
        if command.randomized() && self.seed.is_none() {
            return err(format!("`{}` is randomized and needs a seed (config `seed` or --seed)", command.name()));
        }
        if self.tolerances.q_star.is_nan() || self.tolerances.q_star < 1e-14 {
            return err(format!("tolerances.q_star = {:e} is below 1e-14", self.tolerances.q_star));
        }
        if self.t_max == 0 {
            return err("t_max must be at least 1".into());
        }
        if self.replicates == 0 {
            return err("replicates must be at least 1".into());
        }
        if self.quadrature_order == 0 || self.quadrature_order > orthoglass::quad::MAX_ORDER {
            return err(format!("quadrature_order must be in 1..={}", orthoglass::quad::MAX_ORDER));
        }
        match command {
            Command::Enumerate => {
                if self.n_list.is_empty() {
                    return err("n_list must not be empty".into());
                }
                if let Some(&n) = self.n_list.iter().find(|n| !(2..=MAX_ENUMERATION_N).contains(n)) {
                    return err(format!("n_list entry {n} outside 2..={MAX_ENUMERATION_N}"));
                }
            }
            Command::Amp | Command::Sphere | Command::Hciz if self.n < 2 => {
                return err(format!("n = {} must be at least 2", self.n));
            }
            _ => {}
        }
        if command == Command::Hciz {
            let h = &self.hciz;
            if h.draws == 0 || h.shards == 0 || h.draws % h.shards != 0 {
                return err("hciz.draws must be a positive multiple of hciz.shards".into());
            }
            if !h.alpha.is_finite() || !h.b_scale.is_finite() {
                return err("hciz.alpha and hciz.b_scale must be finite".into());
            }
        }
        Ok(())
    }

    /// SHA-256 of the effective configuration as serialized JSON.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl ExperimentConfig {
    /// The model; only call after [`ExperimentConfig::check`].
    pub fn model(&self) -> &ModelSpec {
        self.model.as_ref().expect("checked config has a model")
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("checked config has a seed")
    }
}
