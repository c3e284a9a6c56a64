//! One end-to-end trial: scene, attention, pruning, metrics and BOPs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sqap_core::attention::{
    attention_logits, decile_rank_correlation, distortion_metrics, AttentionConfig, AttentionVector, Regime,
};
use sqap_core::efficiency::{speedup_decomposition, BopsReport, ModelDims, BASELINE_BITS};
use sqap_core::pruner::{prune_tokens_with, PruneConfig, PruneResult, RingStatus, Strategies};
use sqap_core::quant::QuantSpec;

use crate::config::Config;
use crate::error::Result;
use crate::scene::{generate_scene, Scene, SceneSpec};

/// Everything a trial needs besides the scene and the pruning budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub regime: Regime,
    pub strategies: Strategies,
    /// `k` of the top-k Jaccard metric.
    pub topk: usize,
    pub quant_w: QuantSpec,
    pub quant_a: QuantSpec,
    pub model: ModelDims,
}

impl RunOptions {
    pub fn from_config(cfg: &Config, regime: Regime, strategies: Strategies) -> Result<Self> {
        Ok(RunOptions {
            regime,
            strategies,
            topk: cfg.sweep.topk,
            quant_w: cfg.quant.weight_spec()?,
            quant_a: cfg.quant.activation_spec()?,
            model: cfg.model_dims(),
        })
    }

    fn bits(&self) -> (u32, u32) {
        if self.regime.is_quantized() {
            (self.quant_w.bits(), self.quant_a.bits())
        } else {
            (BASELINE_BITS, BASELINE_BITS)
        }
    }
}

/// Summary of one trial, one row of a sweep CSV.
///
/// A failed trial keeps its identifying fields, sets `error`, and leaves
/// the metrics NaN and the set sizes zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub ratio: f64,
    pub seed: u64,
    pub regime: String,
    pub ablation: String,
    pub topk_jaccard: f64,
    pub rank_corr: f64,
    pub entropy_delta: f64,
    /// Mean squared error of the attention logits against full precision.
    pub logit_mse: f64,
    pub attn_size: usize,
    pub ring_size: usize,
    pub fps_size: usize,
    pub final_size: usize,
    pub ring_projected: bool,
    /// Combined BOPs relative to the 16-bit unpruned baseline.
    pub bops_ratio: f64,
    pub bops_speedup: f64,
    pub error: Option<String>,
}

impl RunRecord {
    pub const HEADER: [&'static str; 16] = [
        "ratio",
        "seed",
        "regime",
        "ablation",
        "topk_jaccard",
        "rank_corr",
        "entropy_delta",
        "logit_mse",
        "attn_size",
        "ring_size",
        "fps_size",
        "final_size",
        "ring_projected",
        "bops_ratio",
        "bops_speedup",
        "error",
    ];

    pub fn failed(ratio: f64, seed: u64, opts: &RunOptions, error: impl fmt::Display) -> Self {
        RunRecord {
            ratio,
            seed,
            regime: opts.regime.as_str().to_owned(),
            ablation: opts.strategies.as_str().to_owned(),
            topk_jaccard: f64::NAN,
            rank_corr: f64::NAN,
            entropy_delta: f64::NAN,
            logit_mse: f64::NAN,
            attn_size: 0,
            ring_size: 0,
            fps_size: 0,
            final_size: 0,
            ring_projected: false,
            bops_ratio: f64::NAN,
            bops_speedup: f64::NAN,
            error: Some(error.to_string()),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    /// CSV fields in [`RunRecord::HEADER`] order. Floats carry nine
    /// significant digits; NaN is written as an empty field.
    pub fn to_fields(&self) -> Vec<String> {
        vec![
            fmt_float(self.ratio),
            self.seed.to_string(),
            self.regime.clone(),
            self.ablation.clone(),
            fmt_float(self.topk_jaccard),
            fmt_float(self.rank_corr),
            fmt_float(self.entropy_delta),
            fmt_float(self.logit_mse),
            self.attn_size.to_string(),
            self.ring_size.to_string(),
            self.fps_size.to_string(),
            self.final_size.to_string(),
            self.ring_projected.to_string(),
            fmt_float(self.bops_ratio),
            fmt_float(self.bops_speedup),
            self.error.clone().unwrap_or_default(),
        ]
    }

    pub fn from_fields(fields: &[&str]) -> std::result::Result<Self, String> {
        if fields.len() != Self::HEADER.len() {
            return Err(format!(
                "expected {} fields, found {}",
                Self::HEADER.len(),
                fields.len()
            ));
        }
        fn num<T: FromStr>(s: &str, name: &str) -> std::result::Result<T, String> {
            s.parse().map_err(|_| format!("bad {name}: {s:?}"))
        }
        Ok(RunRecord {
            ratio: parse_float(fields[0])?,
            seed: num(fields[1], "seed")?,
            regime: fields[2].to_owned(),
            ablation: fields[3].to_owned(),
            topk_jaccard: parse_float(fields[4])?,
            rank_corr: parse_float(fields[5])?,
            entropy_delta: parse_float(fields[6])?,
            logit_mse: parse_float(fields[7])?,
            attn_size: num(fields[8], "attn_size")?,
            ring_size: num(fields[9], "ring_size")?,
            fps_size: num(fields[10], "fps_size")?,
            final_size: num(fields[11], "final_size")?,
            ring_projected: num(fields[12], "ring_projected")?,
            bops_ratio: parse_float(fields[13])?,
            bops_speedup: parse_float(fields[14])?,
            error: (!fields[15].is_empty()).then(|| fields[15].to_owned()),
        })
    }
}

pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.8e}")
    }
}

fn parse_float(s: &str) -> std::result::Result<f64, String> {
    if s.is_empty() {
        Ok(f64::NAN)
    } else {
        s.parse().map_err(|_| format!("bad float {s:?}"))
    }
}

/// A generated scene with its full-precision reference attention.
#[derive(Debug, Clone)]
pub struct Trial {
    pub spec: SceneSpec,
    pub scene: Scene,
    pub fp_logits: Vec<f64>,
    pub fp: AttentionVector,
}

/// Attention of one regime on a prepared trial.
#[derive(Debug, Clone)]
pub struct RegimeAttention {
    pub regime: Regime,
    pub logits: Vec<f64>,
    pub attention: AttentionVector,
}

/// Everything a single `run` produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: RunRecord,
    pub fp: AttentionVector,
    pub attention: AttentionVector,
    pub prune: PruneResult,
    pub bops: BopsReport,
    pub decile_rank_corr: [f64; 10],
}

impl Trial {
    pub fn prepare(spec: &SceneSpec, opts: &RunOptions) -> Result<Self> {
        let scene = generate_scene(spec)?;
        let cfg = attention_config(spec, &scene, opts, Regime::FullPrecision);
        let fp_logits = attention_logits(&scene.wq, &scene.wk, &scene.x, &cfg)?;
        Ok(Trial {
            spec: spec.clone(),
            fp: AttentionVector::softmax(&fp_logits),
            fp_logits,
            scene,
        })
    }

    pub fn attention(&self, opts: &RunOptions) -> Result<RegimeAttention> {
        let logits = if opts.regime == Regime::FullPrecision {
            self.fp_logits.clone()
        } else {
            let cfg = attention_config(&self.spec, &self.scene, opts, opts.regime);
            attention_logits(&self.scene.wq, &self.scene.wk, &self.scene.x, &cfg)?
        };
        Ok(RegimeAttention {
            regime: opts.regime,
            attention: AttentionVector::softmax(&logits),
            logits,
        })
    }

    /// Prunes with an already computed regime attention and scores the result.
    pub fn evaluate(&self, att: &RegimeAttention, prune: &PruneConfig, opts: &RunOptions) -> Result<RunOutput> {
        let result = prune_tokens_with(
            &att.attention,
            &self.spec.camera,
            &self.spec.grid,
            prune,
            opts.strategies,
        )?;
        if let RingStatus::Unprojected(e) = &result.ring_status {
            log::warn!(
                "seed {}: robot not projected ({e}); pruning without a ring",
                self.spec.seed
            );
        }
        let metrics = distortion_metrics(&self.fp, &att.attention, opts.topk)?;
        let (bw, ba) = opts.bits();
        let bops = speedup_decomposition(&opts.model, prune.ratio, bw, ba)?;
        let logit_mse = self
            .fp_logits
            .iter()
            .zip(&att.logits)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / self.fp_logits.len() as f64;
        let record = RunRecord {
            ratio: prune.ratio,
            seed: self.spec.seed,
            regime: att.regime.as_str().to_owned(),
            ablation: opts.strategies.as_str().to_owned(),
            topk_jaccard: metrics.topk_jaccard,
            rank_corr: metrics.rank_corr,
            entropy_delta: metrics.entropy_delta,
            logit_mse,
            attn_size: result.attn_set.len(),
            ring_size: result.ring_set.len(),
            fps_size: result.fps_set.len(),
            final_size: result.final_set.len(),
            ring_projected: matches!(result.ring_status, RingStatus::Projected(_)),
            bops_ratio: bops.combined_ratio,
            bops_speedup: bops.combined_speedup(),
            error: None,
        };
        Ok(RunOutput {
            record,
            fp: self.fp.clone(),
            attention: att.attention.clone(),
            prune: result,
            bops,
            decile_rank_corr: decile_rank_correlation(&self.fp, &att.attention)?,
        })
    }
}

fn attention_config(spec: &SceneSpec, scene: &Scene, opts: &RunOptions, regime: Regime) -> AttentionConfig {
    AttentionConfig {
        d_model: spec.d_model,
        n_visual: spec.grid.len(),
        query_index: scene.query_index(),
        regime,
        quant_w: opts.quant_w,
        quant_a: opts.quant_a,
    }
}

/// Full trial with all intermediate products.
pub fn run_detailed(spec: &SceneSpec, prune: &PruneConfig, opts: &RunOptions) -> Result<RunOutput> {
    let trial = Trial::prepare(spec, opts)?;
    let att = trial.attention(opts)?;
    trial.evaluate(&att, prune, opts)
}

/// Runs one trial. Failures are recorded in the returned row, not raised.
pub fn run_pipeline(spec: &SceneSpec, prune: &PruneConfig, opts: &RunOptions) -> RunRecord {
    match run_detailed(spec, prune, opts) {
        Ok(out) => out.record,
        Err(e) => RunRecord::failed(prune.ratio, spec.seed, opts, e),
    }
}
