//! Synthetic scenes: activations, projection weights and planted salience.
//!
//! Activations are Gaussian, one column per token with the task query in the
//! last column. A salient token `j` with strength `s` gets a multiple of the
//! query column added to it, scaled so its full-precision attention logit
//! rises by exactly `s`. Outlier channels multiply an activation row and
//! divide the matching rows of both projection weights, which leaves
//! `WᵀX` (and so full-precision attention) unchanged while making the
//! activations hard to quantize.

use sqap_core::numerics::{Matrix, Rng};
use sqap_core::pruner::{project_world_to_token, CameraModel, TokenGrid};

use crate::config::Config;
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub grid: TokenGrid,
    pub camera: CameraModel,
    pub robot_point: [f64; 3],
    /// Logit boost on the robot's projected token (0 disables it).
    pub robot_salience: f64,
    pub salient_tokens: Vec<(usize, f64)>,
    pub outlier_channels: Vec<(usize, f64)>,
    pub d_model: usize,
    pub key_noise: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Planted salient tokens, in spec order.
    pub salient: Vec<usize>,
    /// Flat index of the robot's projected token, if it is in frame.
    pub robot_token: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Scene {
    /// `d × (N_v + 1)` activations; the last column is the query token.
    pub x: Matrix,
    pub wq: Matrix,
    pub wk: Matrix,
    pub truth: GroundTruth,
}

impl Scene {
    pub fn query_index(&self) -> usize {
        self.x.cols() - 1
    }
}

impl SceneSpec {
    /// Scene spec for trial `trial` of `cfg`.
    ///
    /// The trial seed is drawn from stream `trial` under the master seed, so
    /// trials do not depend on each other or on execution order.
    pub fn for_trial(cfg: &Config, trial: u64) -> Result<Self> {
        let seed = Rng::for_trial(cfg.scene.seed, trial).next_u64();
        SceneSpec::with_seed(cfg, seed)
    }

    pub fn with_seed(cfg: &Config, seed: u64) -> Result<Self> {
        let grid = cfg.grid()?;
        let mut salient = cfg.scene.salient_tokens.clone();
        if let Some(r) = cfg.scene.random_salient {
            // separate stream from the scene noise so toggling this does
            // not reshuffle the activations
            let mut rng = Rng::for_trial(seed, 1);
            let mut idx: Vec<usize> = (0..grid.len()).collect();
            rng.shuffle(&mut idx);
            for &j in idx.iter().take(r.count) {
                salient.push((j, rng.uniform_in(r.min_strength, r.max_strength)));
            }
        }
        Ok(SceneSpec {
            grid,
            camera: cfg.camera()?,
            robot_point: cfg.scene.robot_point,
            robot_salience: cfg.scene.robot_salience,
            salient_tokens: salient,
            outlier_channels: cfg.scene.outlier_channels.clone(),
            d_model: cfg.scene.d_model,
            key_noise: cfg.scene.key_noise,
            seed,
        })
    }

    fn validate(&self) -> Result<()> {
        let n = self.grid.len();
        let bad = |why: String| Err(HarnessError::InvalidSpec(why));
        if self.d_model == 0 {
            return bad("d_model must be positive".into());
        }
        if n < 4 {
            return bad(format!("{n} visual tokens; at least 4 required"));
        }
        if self.grid.image_size() != self.camera.image_size() {
            return bad("token grid does not tile the camera image".into());
        }
        if let Some(&(j, _)) = self.salient_tokens.iter().find(|(j, _)| *j >= n) {
            return bad(format!("salient token {j} outside 0..{n}"));
        }
        if self.salient_tokens.iter().any(|(_, s)| !s.is_finite()) || !self.robot_salience.is_finite() {
            return bad("salience strengths must be finite".into());
        }
        for &(c, m) in &self.outlier_channels {
            if c >= self.d_model {
                return bad(format!("outlier channel {c} outside 0..{}", self.d_model));
            }
            if !m.is_finite() || m < 1.0 {
                return bad(format!("outlier multiplier {m} must be at least 1"));
            }
        }
        if !self.key_noise.is_finite() || self.key_noise < 0.0 {
            return bad("key_noise must be non-negative".into());
        }
        Ok(())
    }
}

pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let d = spec.d_model;
    let n = spec.grid.len();
    let mut rng = Rng::new(spec.seed);

    let w_std = 1.0 / (d as f64).sqrt();
    let wq = rng.normal_matrix(d, d, w_std);
    let noise = rng.normal_matrix(d, d, w_std);
    let coupling = 1.0 / (1.0 + spec.key_noise * spec.key_noise).sqrt();
    let mut wk: Vec<f64> = wq
        .as_slice()
        .iter()
        .zip(noise.as_slice())
        .map(|(a, b)| (a + spec.key_noise * b) * coupling)
        .collect();
    let mut wq = wq.into_vec();

    let mut x = rng.normal_matrix(d, n + 1, 1.0).into_vec();
    let cols = n + 1;
    let query: Vec<f64> = (0..d).map(|r| x[r * cols + n]).collect();

    // logit gain per unit of query added to a token: qᵀ Wq Wkᵀ q / √d
    let wq_m = Matrix::new(d, d, wq.clone())?;
    let wk_m = Matrix::new(d, d, wk.clone())?;
    let qm = Matrix::new(d, 1, query.clone())?;
    let qproj = wq_m.transpose_matmul(&qm)?;
    let kproj = wk_m.transpose_matmul(&qm)?;
    let gain: f64 = qproj
        .as_slice()
        .iter()
        .zip(kproj.as_slice())
        .map(|(a, b)| a * b)
        .sum::<f64>()
        / (d as f64).sqrt();
    if gain.is_nan() || gain <= 0.0 {
        return Err(HarnessError::InvalidSpec(format!(
            "query self-affinity {gain} is not positive"
        )));
    }

    let robot_token = project_world_to_token(&spec.camera, spec.robot_point, &spec.grid)
        .ok()
        .map(|t| spec.grid.flat(t));

    let mut plant = |j: usize, strength: f64| {
        let alpha = strength / gain;
        for r in 0..d {
            x[r * cols + j] += alpha * query[r];
        }
    };
    for &(j, s) in &spec.salient_tokens {
        plant(j, s);
    }
    if let Some(j) = robot_token {
        if spec.robot_salience != 0.0 {
            plant(j, spec.robot_salience);
        }
    }

    for &(c, m) in &spec.outlier_channels {
        for v in &mut x[c * cols..(c + 1) * cols] {
            *v *= m;
        }
        for w in [&mut wq, &mut wk] {
            for v in &mut w[c * d..(c + 1) * d] {
                *v /= m;
            }
        }
    }

    Ok(Scene {
        x: Matrix::new(d, cols, x)?,
        wq: Matrix::new(d, d, wq)?,
        wk: Matrix::new(d, d, wk)?,
        truth: GroundTruth {
            salient: spec.salient_tokens.iter().map(|&(j, _)| j).collect(),
            robot_token,
        },
    })
}
