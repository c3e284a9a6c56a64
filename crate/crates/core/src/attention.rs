//! Single-head attention from a task-query token to the visual tokens.
//!
//! Activations are laid out `d × tokens`: each column is a token, each row a
//! feature channel. Columns `0..n_visual` are visual tokens; the query token
//! sits in a later column.

use alloc::vec::Vec;

use crate::numerics::{rotate_pair, HadamardMatrix, Matrix};
use crate::pruner::topk_preserve;
use crate::quant::{fake_quant, Granularity, QuantSpec};
use crate::{Error, Result};

/// How the query/key projections are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// Unquantized reference.
    FullPrecision,
    /// Weights and activations fake-quantized as-is.
    QuantNaive,
    /// Weights and activations rotated by a Hadamard matrix, then fake-quantized.
    QuantHadamard,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::FullPrecision, Regime::QuantNaive, Regime::QuantHadamard];

    /// Short name used in CLI flags and CSV files.
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::FullPrecision => "fp",
            Regime::QuantNaive => "naive",
            Regime::QuantHadamard => "hadamard",
        }
    }

    pub fn parse(s: &str) -> Option<Regime> {
        match s {
            "fp" => Some(Regime::FullPrecision),
            "naive" => Some(Regime::QuantNaive),
            "hadamard" => Some(Regime::QuantHadamard),
            _ => None,
        }
    }

    pub fn is_quantized(&self) -> bool {
        !matches!(self, Regime::FullPrecision)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionConfig {
    pub d_model: usize,
    pub n_visual: usize,
    /// Column of the task-query token; must lie past the visual tokens.
    pub query_index: usize,
    pub regime: Regime,
    pub quant_w: QuantSpec,
    pub quant_a: QuantSpec,
}

impl AttentionConfig {
    /// W4A4 defaults: per-channel weights, per-token activations, query in
    /// the column right after the visual tokens.
    pub fn w4a4(d_model: usize, n_visual: usize, regime: Regime) -> Self {
        AttentionConfig {
            d_model,
            n_visual,
            query_index: n_visual,
            regime,
            quant_w: QuantSpec::weight(4).expect("4 bits is valid"),
            quant_a: QuantSpec::activation(4, Granularity::PerToken).expect("4 bits is valid"),
        }
    }

    pub fn with_regime(mut self, regime: Regime) -> Self {
        self.regime = regime;
        self
    }

    fn validate(&self, wq: &Matrix, wk: &Matrix, x: &Matrix) -> Result<()> {
        let d = self.d_model;
        if self.n_visual < 4 {
            return Err(Error::InvalidConfig("at least 4 visual tokens are required"));
        }
        for w in [wq, wk] {
            if w.shape() != (d, d) {
                return Err(Error::DimensionMismatch {
                    op: "compute_attention (projection weight)",
                    expected: (d, d),
                    found: w.shape(),
                });
            }
        }
        if x.rows() != d || x.cols() <= self.query_index || self.query_index < self.n_visual {
            return Err(Error::DimensionMismatch {
                op: "compute_attention (activations)",
                expected: (d, self.n_visual + 1),
                found: x.shape(),
            });
        }
        if self.regime == Regime::QuantHadamard && !d.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(d));
        }
        Ok(())
    }
}

/// Attention weights of the query token over the visual tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionVector {
    scores: Vec<f64>,
    normalized: bool,
}

impl AttentionVector {
    /// Wraps raw scores without normalizing them.
    pub fn from_scores(scores: Vec<f64>) -> Self {
        AttentionVector {
            scores,
            normalized: false,
        }
    }

    /// Numerically stable softmax of `logits`.
    pub fn softmax(logits: &[f64]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut scores: Vec<f64> = logits.iter().map(|&l| libm::exp(l - max)).collect();
        let sum: f64 = scores.iter().sum();
        for s in &mut scores {
            *s /= sum;
        }
        AttentionVector {
            scores,
            normalized: true,
        }
    }

    /// Rescales non-negative scores to sum to one. Fails on negative or
    /// all-zero input.
    pub fn normalized(scores: Vec<f64>) -> Result<Self> {
        if scores.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::InvalidConfig("attention scores must be finite and non-negative"));
        }
        let sum: f64 = scores.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidConfig("attention scores sum to zero"));
        }
        Ok(AttentionVector {
            scores: scores.into_iter().map(|s| s / sum).collect(),
            normalized: true,
        })
    }

    #[inline]
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    #[inline]
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Index of the largest score; ties go to the lower index.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &s) in self.scores.iter().enumerate() {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        best.map(|(i, _)| i)
    }

    /// Shannon entropy in nats, with `0 ln 0 = 0`.
    pub fn entropy(&self) -> f64 {
        -self
            .scores
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * libm::log(p))
            .sum::<f64>()
    }
}

/// Pre-softmax scores `qᵀk_j / √d` of the query token against every visual
/// token, after the regime's rotation and fake quantization.
pub fn attention_logits(wq: &Matrix, wk: &Matrix, x: &Matrix, cfg: &AttentionConfig) -> Result<Vec<f64>> {
    cfg.validate(wq, wk, x)?;
    let (wq, wk, x) = match cfg.regime {
        Regime::FullPrecision => (wq.clone(), wk.clone(), x.clone()),
        Regime::QuantNaive => (
            fake_quant(wq, cfg.quant_w)?,
            fake_quant(wk, cfg.quant_w)?,
            fake_quant(x, cfg.quant_a)?,
        ),
        Regime::QuantHadamard => {
            let h = HadamardMatrix::new(cfg.d_model)?;
            let (wq_r, x_r) = rotate_pair(wq, x, &h)?;
            let wk_r = h.apply(wk)?;
            (
                fake_quant(&wq_r, cfg.quant_w)?,
                fake_quant(&wk_r, cfg.quant_w)?,
                fake_quant(&x_r, cfg.quant_a)?,
            )
        }
    };

    let d = cfg.d_model;
    let x_query = x.select_columns(&[cfg.query_index]);
    // q = Wqᵀ x_q, then u = Wk q so that qᵀ(Wkᵀ x_j) = uᵀ x_j. This avoids
    // materializing the full d × n_visual key matrix.
    let q = wq.transpose_matmul(&x_query)?;
    let u = wk.matmul(&q)?;
    let u = u.as_slice();
    let inv_sqrt_d = 1.0 / libm::sqrt(d as f64);

    let mut logits = alloc::vec![0.0; cfg.n_visual];
    for (r, &ur) in u.iter().enumerate() {
        let row = &x.row(r)[..cfg.n_visual];
        for (l, &xv) in logits.iter_mut().zip(row) {
            *l += ur * xv;
        }
    }
    for l in &mut logits {
        *l *= inv_sqrt_d;
    }
    Ok(logits)
}

/// Softmax attention of the query token over the visual tokens.
pub fn compute_attention(wq: &Matrix, wk: &Matrix, x: &Matrix, cfg: &AttentionConfig) -> Result<AttentionVector> {
    Ok(AttentionVector::softmax(&attention_logits(wq, wk, x, cfg)?))
}

/// How much quantization moved the attention map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionMetrics {
    /// Jaccard index of the two top-k index sets (shift).
    pub topk_jaccard: f64,
    /// Spearman rank correlation over all tokens.
    pub rank_corr: f64,
    /// `H(q) − H(fp)` in nats; positive means the map spread out (scatter).
    pub entropy_delta: f64,
}

pub fn distortion_metrics(fp: &AttentionVector, q: &AttentionVector, k: usize) -> Result<DistortionMetrics> {
    if fp.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: fp.len(),
            right: q.len(),
        });
    }
    if !fp.is_normalized() || !q.is_normalized() {
        return Err(Error::InvalidConfig("distortion metrics need normalized attention"));
    }
    if k == 0 {
        return Err(Error::InvalidConfig("top-k size must be at least 1"));
    }
    let a = topk_preserve(fp, k)?;
    let b = topk_preserve(q, k)?;
    let inter = a.iter().filter(|i| b.contains(i)).count();
    let union = a.len() + b.len() - inter;
    Ok(DistortionMetrics {
        topk_jaccard: inter as f64 / union as f64,
        rank_corr: spearman(fp.scores(), q.scores()),
        entropy_delta: q.entropy() - fp.entropy(),
    })
}

/// Spearman correlation within each decile of the reference ranking.
///
/// Tokens are sorted by `fp` score (descending, ties by index) and split
/// into ten consecutive bands; entry 0 is the highest-attention band.
pub fn decile_rank_correlation(fp: &AttentionVector, q: &AttentionVector) -> Result<[f64; 10]> {
    if fp.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: fp.len(),
            right: q.len(),
        });
    }
    let n = fp.len();
    if n < 10 {
        return Err(Error::InvalidConfig("decile analysis needs at least 10 tokens"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| fp.scores()[j].total_cmp(&fp.scores()[i]).then(i.cmp(&j)));
    let mut out = [0.0; 10];
    for (band, slot) in out.iter_mut().enumerate() {
        let lo = band * n / 10;
        let hi = (band + 1) * n / 10;
        let a: Vec<f64> = order[lo..hi].iter().map(|&i| fp.scores()[i]).collect();
        let b: Vec<f64> = order[lo..hi].iter().map(|&i| q.scores()[i]).collect();
        *slot = spearman(&a, &b);
    }
    Ok(out)
}

/// Spearman's ρ with average ranks for ties.
///
/// A constant input has no ranking: two constant vectors correlate at 1,
/// one constant vector at 0.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        let (dx, dy) = (x - mean, y - mean);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    match (saa == 0.0, sbb == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => sab / libm::sqrt(saa * sbb),
    }
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = alloc::vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && v[idx[j]] == v[idx[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j share their mean
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}
