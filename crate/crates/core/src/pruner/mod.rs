//! Visual token selection.
//!
//! Three sets are combined under a fixed retain budget:
//!
//! 1. `attn`: the top-k tokens by query attention, whose identity survives
//!    low-bit quantization far better than the full ranking does;
//! 2. `ring`: every token within a Chebyshev radius of the projected robot
//!    end-effector, independent of attention;
//! 3. `fps`: farthest-point samples over the remaining tokens, filling the
//!    rest of the budget with spatially spread tokens.
//!
//! The final set is their union and always holds exactly
//! `round((1 − ρ)·N_v)` tokens.

mod geometry;

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::attention::AttentionVector;
use crate::{Error, Result};

pub use geometry::{project_world_to_token, ring_tokens, CameraModel, TokenCoord, TokenGrid};

/// Pruning budget and robot prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneConfig {
    /// Fraction of visual tokens removed, in `[0, 1)`.
    pub ratio: f64,
    /// Chebyshev radius of the protected ring.
    pub ring_radius: usize,
    /// Share of the budget left after the ring that goes to top-k.
    pub attn_fraction: f64,
    /// Robot end-effector position in world coordinates.
    pub world_point: [f64; 3],
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig {
            ratio: 0.4,
            ring_radius: 1,
            attn_fraction: 0.5,
            world_point: [0.0, 0.0, 1.0],
        }
    }
}

impl PruneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ratio >= 0.0 && self.ratio < 1.0) {
            return Err(Error::InvalidConfig("pruning ratio must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.attn_fraction) {
            return Err(Error::InvalidConfig("attention fraction must lie in [0, 1]"));
        }
        if self.world_point.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(())
    }
}

/// How the retain budget splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    /// Tokens kept in total.
    pub retain: usize,
    /// Top-k size.
    pub k: usize,
    /// Farthest-point samples before any top-k/ring overlap is refunded.
    pub m_initial: usize,
}

/// `retain = round((1 − ρ)·N_v)`, then the part not taken by the ring is
/// split `k = ⌊α·free⌋`, `m = free − k`.
pub fn allocate_budget(cfg: &PruneConfig, n_visual: usize, ring_size: usize) -> Result<Budget> {
    cfg.validate()?;
    let retain = retain_count(cfg.ratio, n_visual);
    if ring_size > retain {
        return Err(Error::BudgetTooSmall {
            ring: ring_size,
            retain,
        });
    }
    let free = retain - ring_size;
    let k = libm::floor(cfg.attn_fraction * free as f64) as usize;
    Ok(Budget {
        retain,
        k,
        m_initial: free - k,
    })
}

/// `round((1 − ρ)·n)`, halves rounded away from zero.
pub fn retain_count(ratio: f64, n_visual: usize) -> usize {
    (libm::round((1.0 - ratio) * n_visual as f64) as usize).min(n_visual)
}

/// Indices of the `k` largest scores, largest first; equal scores go to the
/// lower index.
pub fn topk_preserve(a_q: &AttentionVector, k: usize) -> Result<Vec<usize>> {
    let scores = a_q.scores();
    if k > scores.len() {
        return Err(Error::KTooLarge { k, len: scores.len() });
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    idx.truncate(k);
    Ok(idx)
}

/// Greedy farthest-point sampling on the token grid.
///
/// Each step picks the candidate whose squared Euclidean grid distance to
/// the nearest anchor or earlier pick is largest, breaking ties toward the
/// lower flat index. Without anchors the first pick is the lowest candidate.
/// Returns `m` indices in pick order.
pub fn fps_sample(candidates: &[usize], grid: &TokenGrid, anchors: &[usize], m: usize) -> Result<Vec<usize>> {
    let mut cand: Vec<usize> = candidates.to_vec();
    cand.sort_unstable();
    cand.dedup();
    if m > cand.len() {
        return Err(Error::MTooLarge {
            m,
            candidates: cand.len(),
        });
    }
    let n = grid.len();
    if cand.iter().chain(anchors).any(|&i| i >= n) {
        return Err(Error::InvalidConfig("token index outside the grid"));
    }
    let anchor_set: BTreeSet<usize> = anchors.iter().copied().collect();
    if cand.iter().any(|c| anchor_set.contains(c)) {
        return Err(Error::InvalidConfig("FPS candidates overlap the anchors"));
    }

    let coords: Vec<(i64, i64)> = cand
        .iter()
        .map(|&i| {
            let t = grid.coord(i);
            (t.t_u as i64, t.t_v as i64)
        })
        .collect();
    let sq = |a: (i64, i64), b: (i64, i64)| {
        let (du, dv) = (a.0 - b.0, a.1 - b.1);
        (du * du + dv * dv) as u64
    };

    let mut nearest = alloc::vec![u64::MAX; cand.len()];
    for &a in &anchor_set {
        let t = grid.coord(a);
        let ta = (t.t_u as i64, t.t_v as i64);
        for (d, &c) in nearest.iter_mut().zip(&coords) {
            *d = (*d).min(sq(c, ta));
        }
    }

    let mut taken = alloc::vec![false; cand.len()];
    let mut picks = Vec::with_capacity(m);
    for _ in 0..m {
        let mut best: Option<usize> = None;
        for i in 0..cand.len() {
            if !taken[i] && best.is_none_or(|b| nearest[i] > nearest[b]) {
                best = Some(i);
            }
        }
        let b = best.expect("m <= number of candidates");
        taken[b] = true;
        picks.push(cand[b]);
        let p = coords[b];
        for (d, &c) in nearest.iter_mut().zip(&coords) {
            *d = (*d).min(sq(c, p));
        }
    }
    Ok(picks)
}

/// Which selection strategies are active. The variants form an ablation
/// ladder with the same retain budget at every step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Strategies {
    /// The whole budget goes to top-k.
    AttnOnly,
    /// Protected ring, then top-k over the rest of the budget.
    AttnRing,
    /// Ring, top-k and farthest-point sampling.
    #[default]
    Full,
}

impl Strategies {
    pub const LADDER: [Strategies; 3] = [Strategies::AttnOnly, Strategies::AttnRing, Strategies::Full];

    pub fn as_str(&self) -> &'static str {
        match self {
            Strategies::AttnOnly => "attn",
            Strategies::AttnRing => "attn+ring",
            Strategies::Full => "full",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "attn" => Some(Strategies::AttnOnly),
            "attn+ring" => Some(Strategies::AttnRing),
            "full" => Some(Strategies::Full),
            _ => None,
        }
    }
}

/// Outcome of the robot projection.
#[derive(Debug, Clone, PartialEq)]
pub enum RingStatus {
    /// Ring centered on this token.
    Projected(TokenCoord),
    /// The robot did not land in the image; pruning ran without a ring.
    Unprojected(Error),
    /// The strategy set does not use a ring.
    Disabled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneResult {
    pub attn_set: BTreeSet<usize>,
    pub ring_set: BTreeSet<usize>,
    pub fps_set: BTreeSet<usize>,
    pub final_set: BTreeSet<usize>,
    pub budget: Budget,
    pub ring_status: RingStatus,
}

impl PruneResult {
    /// Retained indices in ascending order.
    pub fn kept(&self) -> Vec<usize> {
        self.final_set.iter().copied().collect()
    }
}

/// Full three-strategy selection.
pub fn prune_tokens(
    a_q: &AttentionVector,
    cam: &CameraModel,
    grid: &TokenGrid,
    cfg: &PruneConfig,
) -> Result<PruneResult> {
    prune_tokens_with(a_q, cam, grid, cfg, Strategies::Full)
}

/// Token selection with a subset of the strategies enabled.
///
/// If the robot point does not project into the image the ring is empty and
/// its share of the budget is split between top-k and sampling by `α`; the
/// outcome is reported in [`PruneResult::ring_status`].
pub fn prune_tokens_with(
    a_q: &AttentionVector,
    cam: &CameraModel,
    grid: &TokenGrid,
    cfg: &PruneConfig,
    strategies: Strategies,
) -> Result<PruneResult> {
    cfg.validate()?;
    let n = grid.len();
    if a_q.len() != n {
        return Err(Error::LengthMismatch {
            left: a_q.len(),
            right: n,
        });
    }

    let (ring, ring_status): (BTreeSet<usize>, RingStatus) = if strategies == Strategies::AttnOnly {
        (BTreeSet::new(), RingStatus::Disabled)
    } else {
        match project_world_to_token(cam, cfg.world_point, grid) {
            Ok(center) => (
                ring_tokens(center, cfg.ring_radius, grid).into_iter().collect(),
                RingStatus::Projected(center),
            ),
            Err(e @ (Error::BehindCamera { .. } | Error::OutOfFrame { .. })) => {
                (BTreeSet::new(), RingStatus::Unprojected(e))
            }
            Err(e) => return Err(e),
        }
    };

    let budget = allocate_budget(cfg, n, ring.len())?;
    let attn_quota = match strategies {
        Strategies::Full => budget.k,
        Strategies::AttnOnly | Strategies::AttnRing => budget.retain - ring.len(),
    };

    let attn: BTreeSet<usize> = match strategies {
        // overlap with the ring is dropped; the quota is refunded to sampling
        Strategies::Full => topk_preserve(a_q, attn_quota)?
            .into_iter()
            .filter(|i| !ring.contains(i))
            .collect(),
        // no sampler to refund, so keep ranking past ring members
        Strategies::AttnOnly | Strategies::AttnRing => topk_preserve(a_q, n)?
            .into_iter()
            .filter(|i| !ring.contains(i))
            .take(attn_quota)
            .collect(),
    };

    let fps: BTreeSet<usize> = if strategies == Strategies::Full {
        let anchors: Vec<usize> = attn.union(&ring).copied().collect();
        let remain: Vec<usize> = (0..n).filter(|i| !attn.contains(i) && !ring.contains(i)).collect();
        let m = budget.retain - ring.len() - attn.len();
        fps_sample(&remain, grid, &anchors, m)?.into_iter().collect()
    } else {
        BTreeSet::new()
    };

    let final_set: BTreeSet<usize> = attn.iter().chain(&ring).chain(&fps).copied().collect();
    debug_assert_eq!(final_set.len(), budget.retain);
    Ok(PruneResult {
        attn_set: attn,
        ring_set: ring,
        fps_set: fps,
        final_set,
        budget,
        ring_status,
    })
}
