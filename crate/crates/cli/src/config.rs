//! Run configurations. Every document carries `schema_version` and rejects
//! unknown fields; the matching JSON schemas live in `schemas/`.

use std::fmt;
use std::path::{Path, PathBuf};

use escat_core::cloak::{DesignConfig, LayeredStructure};
use escat_core::curves::CurveSpec;
use escat_core::msr::{MsrConfig, ReconstructionMethod};
use escat_core::wavefields::{Material, MaterialPair};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: &str = "1";

/// A configuration file that could not be read, parsed or validated. Maps to
/// exit code 2.
#[derive(Debug)]
pub struct ConfigError {
    pub path: PathBuf,
    pub message: String,
    pub line: Option<usize>,
    pub column: Option<usize>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "{}:{l}:{c}: {}", self.path.display(), self.message),
            _ => write!(f, "{}: {}", self.path.display(), self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Raw bytes and parsed document of a configuration file.
pub struct Loaded<T> {
    pub value: T,
    pub hash: String,
    pub dir: PathBuf,
}

pub fn load<T: DeserializeOwned + Versioned>(path: &Path) -> Result<Loaded<T>, ConfigError> {
    let fail = |message: String, line, column| ConfigError { path: path.to_path_buf(), message, line, column };
    let bytes = std::fs::read(path).map_err(|e| fail(e.to_string(), None, None))?;
    let value: T = serde_json::from_slice(&bytes).map_err(|e| fail(e.to_string(), Some(e.line()), Some(e.column())))?;
    if value.schema_version() != SCHEMA_VERSION {
        return Err(fail(format!("unsupported schema_version {:?}, expected {SCHEMA_VERSION:?}", value.schema_version()), None, None));
    }
    let hash = format!("sha256:{:x}", Sha256::digest(&bytes));
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { value, hash, dir })
}

pub trait Versioned {
    fn schema_version(&self) -> &str;
}

macro_rules! versioned {
    ($($t:ty),*) => {$(
        impl Versioned for $t {
            fn schema_version(&self) -> &str {
                &self.schema_version
            }
        }
    )*};
}

/// Scatterer, materials and frequency.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub curve: CurveSpec,
    pub exterior: Material,
    pub interior: Material,
    pub omega: f64,
}

impl Scene {
    pub fn pair(&self) -> escat_core::Result<MaterialPair> {
        MaterialPair::new(self.exterior, self.interior)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EscConfig {
    pub schema_version: String,
    pub scene: Scene,
    #[serde(default)]
    pub truncation: Option<usize>,
    #[serde(default)]
    pub nodes: Option<usize>,
}

/// Acquisition circle given either as an absolute radius or in exterior shear
/// wavelengths.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Acquisition {
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub wavelengths: Option<f64>,
    pub sources: usize,
    pub receivers: usize,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Acquisition {
    pub fn resolve(&self, omega: f64, exterior: Material) -> Result<MsrConfig, String> {
        let radius = match (self.radius, self.wavelengths) {
            (Some(r), None) => r,
            (None, Some(w)) => w * exterior.shear_wavelength(omega),
            _ => return Err("acquisition needs exactly one of radius or wavelengths".into()),
        };
        Ok(MsrConfig {
            radius,
            sources: self.sources,
            receivers: self.receivers,
            omega,
            exterior,
            noise_sigma: self.noise_sigma,
            seed: self.seed,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulationKind {
    Bie,
    Expansion,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsrSimulateConfig {
    pub schema_version: String,
    pub scene: Scene,
    pub acquisition: Acquisition,
    pub mode: SimulationKind,
    /// ESC document used by expansion mode; computed from the scene when absent.
    #[serde(default)]
    pub esc_file: Option<PathBuf>,
    #[serde(default)]
    pub truncation: Option<usize>,
    #[serde(default)]
    pub nodes: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsrReconstructConfig {
    pub schema_version: String,
    /// Directory written by `msr simulate`.
    pub dataset: PathBuf,
    pub method: ReconstructionMethod,
    #[serde(default)]
    pub truncation: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsrAnalyzeConfig {
    pub schema_version: String,
    pub scene: Scene,
    pub acquisition: Acquisition,
    pub epsilon: f64,
    /// Either a signal-to-noise ratio directly or a noise level from which it
    /// follows as `(|∂D|/√R)/σ`.
    #[serde(default)]
    pub snr: Option<f64>,
    #[serde(default)]
    pub sigma_noise: Option<f64>,
    #[serde(default)]
    pub truncation: Option<usize>,
}

fn default_target() -> f64 {
    100.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloakDesignConfig {
    pub schema_version: String,
    pub design: DesignConfig,
    /// Required bare-to-designed ratio of `Σ|W_0|²` at every design frequency.
    #[serde(default = "default_target")]
    pub target_reduction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloakEvaluateConfig {
    pub schema_version: String,
    #[serde(default)]
    pub structure: Option<LayeredStructure>,
    /// A structure document or the output of `cloak design`.
    #[serde(default)]
    pub structure_file: Option<PathBuf>,
    pub omega: f64,
    pub max_order: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloakScalingConfig {
    pub schema_version: String,
    #[serde(default)]
    pub structure: Option<LayeredStructure>,
    #[serde(default)]
    pub structure_file: Option<PathBuf>,
    pub base_omega: f64,
    pub epsilons: Vec<f64>,
    pub max_order: usize,
}

versioned!(EscConfig, MsrSimulateConfig, MsrReconstructConfig, MsrAnalyzeConfig, CloakDesignConfig, CloakEvaluateConfig, CloakScalingConfig);

/// Relative paths in a config are taken relative to the config's directory.
pub fn resolve_path(dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        dir.join(p)
    }
}

/// The inline structure, or one read from a file holding either a bare
/// structure or a design output (`report.structure`).
pub fn structure_from(inline: &Option<LayeredStructure>, file: &Option<PathBuf>, dir: &Path) -> anyhow::Result<LayeredStructure> {
    match (inline, file) {
        (Some(s), None) => Ok(s.clone()),
        (None, Some(f)) => {
            let path = resolve_path(dir, f);
            let text = std::fs::read_to_string(&path)?;
            let doc: serde_json::Value = serde_json::from_str(&text)?;
            let node = doc.pointer("/report/structure").cloned().unwrap_or(doc);
            Ok(serde_json::from_value(node)?)
        }
        _ => Err(ConfigError {
            path: dir.to_path_buf(),
            message: "give exactly one of structure or structure_file".into(),
            line: None,
            column: None,
        }
        .into()),
    }
}
