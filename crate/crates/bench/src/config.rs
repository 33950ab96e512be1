use std::path::{Path, PathBuf};

use coopfuse::association::CenterGate;
use coopfuse::{CsbaParams, FpPenalties, NoiseConfig};
use serde::{Deserialize, Serialize};

use crate::methods::Method;
use crate::{BenchError, Result};

/// An agent's noise: a preset name or explicit standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AgentNoise {
    Preset(String),
    Custom(NoiseConfig),
}

impl AgentNoise {
    pub fn resolve(&self) -> Result<NoiseConfig> {
        match self {
            AgentNoise::Preset(name) => Ok(NoiseConfig::from_name(name)?),
            AgentNoise::Custom(nc) => Ok(*nc),
        }
    }
}

/// One row of the result table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseRow {
    pub name: String,
    pub agents: Vec<AgentNoise>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenesConfig {
    pub count: usize,
    pub n_frames: usize,
    /// Inclusive range; each scene draws its own count.
    pub objects: [usize; 2],
    pub area: f64,
    pub min_separation: f64,
    pub frame_rate: f64,
}

impl Default for ScenesConfig {
    fn default() -> Self {
        Self {
            count: 150,
            n_frames: 20,
            objects: [10, 40],
            area: 160.0,
            min_separation: 8.0,
            frame_rate: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub iou: f64,
    pub giou: f64,
    /// Center distance for the two late-fusion baselines, meters.
    pub distance: f64,
    /// Sliding window width, seconds.
    pub window: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            iou: coopfuse::baselines::DEFAULT_IOU_THRESHOLD,
            giou: coopfuse::baselines::DEFAULT_GIOU_THRESHOLD,
            distance: coopfuse::baselines::DEFAULT_DISTANCE_THRESHOLD,
            window: coopfuse::association::DEFAULT_WINDOW,
        }
    }
}

/// Overrides for the association parameters. Anything left out follows the
/// largest position std among the row's agents.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsbaConfig {
    pub weights: Option<[f64; 3]>,
    pub lambda_max: Option<f64>,
    pub cost_gate: Option<f64>,
    pub center_gate: CenterGate,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyConfig {
    /// Defaults to the row's `lambda_max`.
    pub translation: Option<f64>,
    pub scale: Option<f64>,
    pub orientation_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub methods: Vec<String>,
    #[serde(default)]
    pub gt_assoc: bool,
    #[serde(default = "default_noise")]
    pub noise: Vec<NoiseRow>,
    #[serde(default)]
    pub scenes: ScenesConfig,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub csba: CsbaConfig,
    #[serde(default)]
    pub penalties: PenaltyConfig,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("results")
}

fn preset_row(name: &str, agents: &[&str]) -> NoiseRow {
    NoiseRow {
        name: name.to_owned(),
        agents: agents.iter().map(|a| AgentNoise::Preset((*a).to_owned())).collect(),
    }
}

/// Mild, moderate, large, and the heterogeneous mild + large pairing.
pub fn default_noise() -> Vec<NoiseRow> {
    vec![
        preset_row("mild", &["mild", "mild"]),
        preset_row("moderate", &["moderate", "moderate"]),
        preset_row("large", &["large", "large"]),
        preset_row("mild+large", &["mild", "large"]),
    ]
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: default_out_dir(),
            methods: Method::ALL.iter().map(|m| m.name().to_owned()).collect(),
            gt_assoc: false,
            noise: default_noise(),
            scenes: ScenesConfig::default(),
            thresholds: Thresholds::default(),
            csba: CsbaConfig::default(),
            penalties: PenaltyConfig::default(),
        }
    }
}

/// A fully checked configuration.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub methods: Vec<Method>,
    pub rows: Vec<ResolvedRow>,
}

#[derive(Debug, Clone)]
pub struct ResolvedRow {
    pub name: String,
    pub agents: Vec<NoiseConfig>,
    pub csba: CsbaParams<f64>,
    pub penalties: FpPenalties,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn resolve(self) -> Result<Resolved> {
        if self.methods.is_empty() && !self.gt_assoc {
            return Err(BenchError::Config("methods list is empty".into()));
        }
        let mut methods = self
            .methods
            .iter()
            .map(|m| m.parse::<Method>())
            .collect::<Result<Vec<_>>>()?;
        if self.gt_assoc && !methods.contains(&Method::WlsGtAssoc) {
            methods.push(Method::WlsGtAssoc);
        }
        if self.noise.is_empty() {
            return Err(BenchError::Config("noise list is empty".into()));
        }
        let s = &self.scenes;
        if s.count == 0 || s.n_frames == 0 {
            return Err(BenchError::Config("scenes.count and scenes.n_frames must be positive".into()));
        }
        if s.objects[0] > s.objects[1] {
            return Err(BenchError::Config("scenes.objects must be [min, max]".into()));
        }
        let t = &self.thresholds;
        if !(t.window >= 0.0 && t.distance > 0.0 && (0.0..=1.0).contains(&t.iou) && t.giou > -1.0 && t.giou <= 1.0) {
            return Err(BenchError::Config("threshold out of range".into()));
        }
        let rows = self
            .noise
            .iter()
            .map(|row| self.resolve_row(row))
            .collect::<Result<Vec<_>>>()?;
        Ok(Resolved { config: self, methods, rows })
    }

    fn resolve_row(&self, row: &NoiseRow) -> Result<ResolvedRow> {
        if row.agents.is_empty() {
            return Err(BenchError::Config(format!("noise row `{}` has no agents", row.name)));
        }
        let agents = row.agents.iter().map(AgentNoise::resolve).collect::<Result<Vec<_>>>()?;
        let std = agents.iter().map(|a| a.std_pos).fold(0.0, f64::max);
        let mut csba = CsbaParams::for_position_std(std.max(1e-3))?;
        if let Some([ds, cs, os]) = self.csba.weights {
            csba = CsbaParams::new(ds, cs, os, csba.lambda_max)?;
        }
        if let Some(l) = self.csba.lambda_max {
            csba.lambda_max = l;
        }
        csba.cost_gate = self.csba.cost_gate;
        csba.center_gate = self.csba.center_gate;
        csba.validate()?;
        let mut penalties = FpPenalties::new(self.penalties.translation.unwrap_or(csba.lambda_max))?;
        if let Some(s) = self.penalties.scale {
            penalties.scale = s;
        }
        if let Some(o) = self.penalties.orientation_deg {
            penalties.orientation_deg = o;
        }
        penalties.validate()?;
        Ok(ResolvedRow {
            name: row.name.clone(),
            agents,
            csba,
            penalties,
        })
    }
}
