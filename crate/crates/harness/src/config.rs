//! JSON run configuration.
//!
//! One document with `scene`, `prune`, `quant`, `model` and `sweep`
//! sections. Every field has a default, so `{}` is a valid config.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sqap_core::attention::Regime;
use sqap_core::efficiency::ModelDims;
use sqap_core::numerics::Matrix;
use sqap_core::pruner::{CameraModel, PruneConfig, TokenGrid};
use sqap_core::quant::{Granularity, QuantSpec};

use crate::error::{HarnessError, Result};

/// Environment variable that replaces `scene.seed`.
pub const SEED_ENV: &str = "SQAP_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub scene: SceneConfig,
    pub prune: PruneSection,
    pub quant: QuantSection,
    pub model: ModelSection,
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    /// Master seed; trial `i` derives its own seed from it.
    pub seed: u64,
    pub d_model: usize,
    pub patch: [usize; 2],
    pub grid: [usize; 2],
    pub camera: CameraSection,
    pub robot_point: [f64; 3],
    /// Logit boost planted on the robot's projected token.
    pub robot_salience: f64,
    /// Explicit `(token, strength)` pairs, used by every trial.
    pub salient_tokens: Vec<(usize, f64)>,
    /// Extra salient tokens placed at random per trial.
    pub random_salient: Option<RandomSalience>,
    /// `(channel, multiplier)` pairs; these activation rows are scaled up
    /// and the matching weight rows scaled down.
    pub outlier_channels: Vec<(usize, f64)>,
    /// Relative noise separating the key weights from the query weights.
    pub key_noise: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            seed: 42,
            d_model: 512,
            patch: [14, 14],
            grid: [16, 16],
            camera: CameraSection::default(),
            robot_point: [0.25, 0.15, 1.0],
            robot_salience: 3.0,
            salient_tokens: Vec::new(),
            random_salient: Some(RandomSalience::default()),
            outlier_channels: vec![(5, 50.0), (133, 30.0), (301, 20.0)],
            key_noise: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomSalience {
    pub count: usize,
    pub min_strength: f64,
    pub max_strength: f64,
}

impl Default for RandomSalience {
    fn default() -> Self {
        RandomSalience {
            count: 10,
            min_strength: 2.0,
            max_strength: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSection {
    pub focal: [f64; 2],
    /// Principal point; defaults to the image center when absent.
    pub principal: Option<[f64; 2]>,
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl Default for CameraSection {
    fn default() -> Self {
        CameraSection {
            focal: [200.0, 200.0],
            principal: None,
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruneSection {
    pub ratio: f64,
    pub ring_radius: usize,
    pub attn_fraction: f64,
}

impl Default for PruneSection {
    fn default() -> Self {
        PruneSection {
            ratio: 0.4,
            ring_radius: 1,
            attn_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GranularityName {
    PerTensor,
    PerToken,
    PerChannel,
}

impl From<GranularityName> for Granularity {
    fn from(g: GranularityName) -> Self {
        match g {
            GranularityName::PerTensor => Granularity::PerTensor,
            GranularityName::PerToken => Granularity::PerToken,
            GranularityName::PerChannel => Granularity::PerChannel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantSection {
    pub bits_w: u32,
    pub bits_a: u32,
    pub weight_granularity: GranularityName,
    pub activation_granularity: GranularityName,
}

impl Default for QuantSection {
    fn default() -> Self {
        QuantSection {
            bits_w: 4,
            bits_a: 4,
            weight_granularity: GranularityName::PerChannel,
            activation_granularity: GranularityName::PerToken,
        }
    }
}

impl QuantSection {
    pub fn weight_spec(&self) -> Result<QuantSpec> {
        Ok(QuantSpec::new(
            self.bits_w,
            self.weight_granularity.into(),
            sqap_core::quant::Target::Weight,
        )?)
    }

    pub fn activation_spec(&self) -> Result<QuantSpec> {
        Ok(QuantSpec::activation(self.bits_a, self.activation_granularity.into())?)
    }
}

/// Backbone shape for the BOPs model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub d_model: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub n_text_tokens: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = ModelDims::default();
        ModelSection {
            d_model: d.d_model,
            n_layers: d.n_layers,
            d_ff: d.d_ff,
            n_text_tokens: d.n_text_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub ratios: Vec<f64>,
    pub seeds: usize,
    pub regimes: Vec<String>,
    /// `k` of the top-k Jaccard metric.
    pub topk: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            ratios: vec![0.3, 0.4, 0.5, 0.6],
            seeds: 100,
            regimes: Regime::ALL.iter().map(|r| r.as_str().to_owned()).collect(),
            topk: 8,
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and applies the `SQAP_SEED` override.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Config::from_json(&text)?;
        if let Ok(seed) = std::env::var(SEED_ENV) {
            cfg.scene.seed = seed
                .trim()
                .parse()
                .map_err(|_| HarnessError::Config(format!("{SEED_ENV}={seed:?} is not a 64-bit integer")))?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        self.camera()?;
        self.prune_config().validate()?;
        self.quant.weight_spec()?;
        self.quant.activation_spec()?;
        self.model_dims().validate()?;
        self.regimes()?;
        if self.sweep.ratios.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
            return Err(HarnessError::Config("sweep ratios must lie in (0, 1)".into()));
        }
        if self.sweep.topk == 0 || self.sweep.topk > self.grid()?.len() {
            return Err(HarnessError::Config("sweep.topk must lie in 1..=N_v".into()));
        }
        if let Some(r) = self.scene.random_salient {
            if r.count > self.grid()?.len() || r.min_strength.partial_cmp(&r.max_strength).is_none_or(|o| o.is_gt()) {
                return Err(HarnessError::Config("random_salient is inconsistent".into()));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<TokenGrid> {
        let [pw, ph] = self.scene.patch;
        let [gw, gh] = self.scene.grid;
        Ok(TokenGrid::new(pw, ph, gw, gh)?)
    }

    pub fn camera(&self) -> Result<CameraModel> {
        let (w, h) = self.grid()?.image_size();
        let c = &self.scene.camera;
        let principal = c.principal.unwrap_or([w as f64 / 2.0, h as f64 / 2.0]);
        let rotation = Matrix::from_rows(&c.rotation)?;
        Ok(CameraModel::from_pinhole(
            (c.focal[0], c.focal[1]),
            (principal[0], principal[1]),
            rotation,
            c.translation,
            w,
            h,
        )?)
    }

    pub fn prune_config(&self) -> PruneConfig {
        PruneConfig {
            ratio: self.prune.ratio,
            ring_radius: self.prune.ring_radius,
            attn_fraction: self.prune.attn_fraction,
            world_point: self.scene.robot_point,
        }
    }

    pub fn model_dims(&self) -> ModelDims {
        ModelDims {
            d_model: self.model.d_model,
            n_layers: self.model.n_layers,
            d_ff: self.model.d_ff,
            n_text_tokens: self.model.n_text_tokens,
            n_visual_tokens: self.scene.grid[0] * self.scene.grid[1],
        }
    }

    pub fn regimes(&self) -> Result<Vec<Regime>> {
        self.sweep
            .regimes
            .iter()
            .map(|s| Regime::parse(s).ok_or_else(|| HarnessError::Config(format!("unknown regime {s:?}"))))
            .collect()
    }
}
