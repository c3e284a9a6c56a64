//! Bit-operation (BOPs) accounting for the transformer prefill.
//!
//! A matmul with `m·k·n` multiply-accumulates at `b_w`-bit weights and
//! `b_a`-bit activations costs `m·k·n·b_w·b_a` BOPs. Projections and the
//! feed-forward block are priced at `b_w × b_a`; the two attention matmuls
//! multiply activations by activations and are priced at `b_a × b_a`.
//! Vision encoder, action head and nonlinearities are not counted.

use crate::pruner::retain_count;
use crate::{Error, Result};

/// Shape of the language backbone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelDims {
    pub d_model: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub n_text_tokens: usize,
    pub n_visual_tokens: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            d_model: 512,
            n_layers: 8,
            d_ff: 2048,
            n_text_tokens: 44,
            n_visual_tokens: 256,
        }
    }
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0
            || self.n_layers == 0
            || self.d_ff == 0
            || self.n_text_tokens == 0
            || self.n_visual_tokens == 0
        {
            return Err(Error::InvalidConfig("model dimensions must be positive"));
        }
        Ok(())
    }

    pub fn seq_len(&self) -> usize {
        self.n_text_tokens + self.n_visual_tokens
    }
}

/// `m·k·n·b_w·b_a`, checked in 128-bit arithmetic.
pub fn matmul_bops(m: usize, k: usize, n: usize, bits_w: u32, bits_a: u32) -> Result<u128> {
    [m as u128, k as u128, n as u128, bits_w as u128, bits_a as u128]
        .into_iter()
        .try_fold(1u128, |acc, f| acc.checked_mul(f))
        .ok_or(Error::Overflow)
}

/// Per-term prefill BOPs summed over layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrefillBops {
    /// Q, K, V and output projections: `4·s·d²` MACs per layer.
    pub projections: u128,
    /// Scores and weighted values: `2·s²·d` MACs per layer.
    pub attention: u128,
    /// Up and down projections: `2·s·d·d_ff` MACs per layer.
    pub ffn: u128,
}

impl PrefillBops {
    pub fn total(&self) -> Result<u128> {
        self.projections
            .checked_add(self.attention)
            .and_then(|v| v.checked_add(self.ffn))
            .ok_or(Error::Overflow)
    }
}

pub fn prefill_breakdown(dims: &ModelDims, seq_len: usize, bits_w: u32, bits_a: u32) -> Result<PrefillBops> {
    dims.validate()?;
    if seq_len == 0 || bits_w == 0 || bits_a == 0 {
        return Err(Error::InvalidConfig("sequence length and bit widths must be positive"));
    }
    let (s, d) = (seq_len, dims.d_model);
    let layers = dims.n_layers as u128;
    let per_layer = |v: Result<u128>| v?.checked_mul(layers).ok_or(Error::Overflow);
    Ok(PrefillBops {
        projections: per_layer(matmul_bops(s, d, 4 * d, bits_w, bits_a))?,
        attention: per_layer(matmul_bops(s, s, 2 * d, bits_a, bits_a))?,
        ffn: per_layer(matmul_bops(s, d, 2 * dims.d_ff, bits_w, bits_a))?,
    })
}

/// Total prefill BOPs for a sequence of `seq_len` tokens.
pub fn prefill_bops(dims: &ModelDims, seq_len: usize, bits_w: u32, bits_a: u32) -> Result<u128> {
    prefill_breakdown(dims, seq_len, bits_w, bits_a)?.total()
}

/// Bits of the unquantized baseline.
pub const BASELINE_BITS: u32 = 16;

/// Baseline, quantization-only, pruning-only and combined prefill cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BopsReport {
    pub baseline_bops: u128,
    pub quantized_bops: u128,
    pub pruned_bops: u128,
    pub combined_bops: u128,
    /// Sequence lengths before and after pruning.
    pub seq_len: usize,
    pub pruned_seq_len: usize,
    pub quant_ratio: f64,
    pub prune_ratio: f64,
    pub combined_ratio: f64,
}

impl BopsReport {
    pub fn quant_speedup(&self) -> f64 {
        1.0 / self.quant_ratio
    }

    pub fn prune_speedup(&self) -> f64 {
        1.0 / self.prune_ratio
    }

    pub fn combined_speedup(&self) -> f64 {
        1.0 / self.combined_ratio
    }
}

/// Splits the combined saving into its quantization and pruning factors.
///
/// The baseline runs at 16 bits with every visual token; pruning keeps
/// `round((1 − ρ)·N_v)` visual tokens and all text tokens. With
/// `bits_w == bits_a` every term scales by the same bit factor, so
/// `combined_ratio == quant_ratio · prune_ratio`.
pub fn speedup_decomposition(dims: &ModelDims, ratio: f64, bits_w: u32, bits_a: u32) -> Result<BopsReport> {
    dims.validate()?;
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::InvalidConfig("pruning ratio must lie in [0, 1)"));
    }
    let s = dims.seq_len();
    let s_pruned = dims.n_text_tokens + retain_count(ratio, dims.n_visual_tokens);
    let baseline = prefill_bops(dims, s, BASELINE_BITS, BASELINE_BITS)?;
    let quantized = prefill_bops(dims, s, bits_w, bits_a)?;
    let pruned = prefill_bops(dims, s_pruned, BASELINE_BITS, BASELINE_BITS)?;
    let combined = prefill_bops(dims, s_pruned, bits_w, bits_a)?;
    let b = baseline as f64;
    Ok(BopsReport {
        baseline_bops: baseline,
        quantized_bops: quantized,
        pruned_bops: pruned,
        combined_bops: combined,
        seq_len: s,
        pruned_seq_len: s_pruned,
        quant_ratio: quantized as f64 / b,
        prune_ratio: pruned as f64 / b,
        combined_ratio: combined as f64 / b,
    })
}
