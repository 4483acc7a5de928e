//! Scan-quality regressor: estimates the noise level of a range image.
//!
//! A linear projection lifts the flattened image into a bank of feature
//! maps, max+min pooling reduces each map to two numbers, and a small head
//! regresses the noise standard deviation. Trained on clean scans with
//! synthetic Gaussian range noise of known sigma under an L1 objective.

use std::path::Path;

use rand::Rng;

use crate::nn::{
    load_checkpoint, save_checkpoint, Activation, Adam, AdamConfig, Checkpoint, MaxMinPool, Mlp,
};
use crate::rngutil::{rng_for, shuffled_indices, stream};
use crate::scan::RangeImage;

use super::{phase_name, ModelError, TrainLogRow, PHASE_LQI};

/// Hyperparameters for the quality regressor. Defaults fit the desk-scale
/// 16x64 grid (1024 inputs -> 50 maps of 16 channels).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LqiConfig {
    /// Number of feature maps; each contributes a (max, min) pair.
    pub groups: usize,
    /// Channels per feature map.
    pub channels: usize,
    pub head_hidden: Vec<usize>,
    pub leaky_slope: f64,
    pub lr: f64,
    /// The learning rate is halved every this many epochs.
    pub lr_halve_every: usize,
    pub epochs: usize,
    pub batch: usize,
    /// Training sigmas are drawn uniformly from [0, noise_max).
    pub noise_max: f64,
}

impl Default for LqiConfig {
    fn default() -> Self {
        LqiConfig {
            groups: 50,
            channels: 16,
            head_hidden: vec![64],
            leaky_slope: 0.2,
            lr: 1e-2,
            lr_halve_every: 3,
            epochs: 9,
            batch: 8,
            noise_max: 0.15,
        }
    }
}

impl LqiConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.groups == 0 || self.channels == 0 {
            return bad("groups and channels must be positive".into());
        }
        if self.batch == 0 {
            return bad("batch must be positive".into());
        }
        if self.lr_halve_every == 0 {
            return bad("lr_halve_every must be positive".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("learning rate {} out of range", self.lr));
        }
        if !(self.noise_max.is_finite() && self.noise_max > 0.0) {
            return bad(format!("noise_max {} out of range", self.noise_max));
        }
        if self.head_hidden.iter().any(|&w| w == 0) {
            return bad("hidden layer widths must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LqiModel {
    pub(crate) proj: Mlp,
    pub(crate) pool: MaxMinPool,
    pub(crate) head: Mlp,
    /// Epochs completed, persisted so a resumed schedule keeps halving
    /// the learning rate on the absolute epoch index.
    pub trained_epochs: u64,
}

impl LqiModel {
    /// Builds the regressor for `rows` x `cols` scans.
    ///
    /// The projection starts as a bank of random zero-sum difference
    /// filters over azimuth-adjacent cells. Smooth clean scans project
    /// near zero no matter their content, while range noise of std sigma
    /// projects to ~N(0, sigma^2 * gain), so the pooled per-map extrema
    /// respond to the noise level from the very first epoch — a plain
    /// random dense init leaves them dominated by scene content, which the
    /// short fixed training schedule cannot overcome. Training refines the
    /// filters from there.
    pub fn new(rows: usize, cols: usize, cfg: &LqiConfig, seed: u64) -> Result<Self, ModelError> {
        cfg.validate()?;
        if rows == 0 || cols < 2 {
            return Err(ModelError::InvalidConfig(format!(
                "grid {rows}x{cols} too small for difference filters"
            )));
        }
        let in_dim = rows * cols;
        let mut rng = rng_for(seed, stream::INIT_LQI, 0);
        let maps = cfg.groups * cfg.channels;
        let mut proj = Mlp::new("lqi_proj", &[in_dim, maps], &[Activation::Identity], &mut rng);
        {
            let layer = &mut proj.layers[0];
            layer.w.iter_mut().for_each(|w| *w = 0.0);
            layer.b.iter_mut().for_each(|b| *b = 0.0);
            let pairs = 32usize;
            let gain = 4.0 / (pairs as f64).sqrt();
            for o in 0..maps {
                let row = &mut layer.w[o * in_dim..(o + 1) * in_dim];
                for _ in 0..pairs {
                    let r = rng.random_range(0..rows);
                    let c = rng.random_range(0..cols - 1);
                    let a: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal) * gain;
                    row[r * cols + c] += a;
                    row[r * cols + c + 1] -= a;
                }
            }
        }
        let pool = MaxMinPool::new(cfg.groups, cfg.channels);
        let mut dims = vec![pool.out_dim()];
        dims.extend_from_slice(&cfg.head_hidden);
        dims.push(1);
        let mut acts = vec![Activation::LeakyRelu(cfg.leaky_slope); cfg.head_hidden.len()];
        acts.push(Activation::Identity);
        let mut head = Mlp::new("lqi_head", &dims, &acts, &mut rng);
        // Start from the prior mean of the sigma range; training pulls each
        // input's estimate away from this constant toward its actual level.
        if let Some(last) = head.layers.last_mut() {
            last.b[0] = cfg.noise_max * 0.5;
        }
        Ok(LqiModel {
            proj,
            pool,
            head,
            trained_epochs: 0,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.proj.in_dim()
    }

    /// Estimated noise sigma (normalized range units) for a vectorized scan.
    pub fn predict_vec(&self, x: &[f64]) -> Result<f64, ModelError> {
        if x.len() != self.proj.in_dim() {
            return Err(ModelError::ConfigMismatch(format!(
                "input has {} cells, regressor expects {}",
                x.len(),
                self.proj.in_dim()
            )));
        }
        let maps = self.proj.forward(x);
        let (pooled, _) = self.pool.forward(&maps);
        Ok(self.head.forward(&pooled)[0])
    }

    pub fn predict(&self, image: &RangeImage) -> Result<f64, ModelError> {
        self.predict_vec(&image.to_vector(0.0))
    }
}

/// Trains the regressor on clean scans corrupted with known noise. One
/// sigma is drawn per batch; each scan in the batch gets an independent
/// noise realization of that sigma.
pub fn train_lqi(
    model: &mut LqiModel,
    images: &[RangeImage],
    cfg: &LqiConfig,
    seed: u64,
) -> Result<Vec<TrainLogRow>, ModelError> {
    cfg.validate()?;
    if images.is_empty() {
        return Err(ModelError::EmptyData("clean scans"));
    }
    for im in images {
        if im.to_vector(0.0).len() != model.proj.in_dim() {
            return Err(ModelError::ConfigMismatch(format!(
                "scan has {} cells, regressor expects {}",
                im.spec().cells(),
                model.proj.in_dim()
            )));
        }
    }
    let mut adam = Adam::new(AdamConfig {
        lr: cfg.lr,
        weight_decay: 0.0,
        ..AdamConfig::default()
    });
    let mut rows = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let epoch = model.trained_epochs;
        adam.set_lr(cfg.lr / f64::powi(2.0, (epoch as usize / cfg.lr_halve_every) as i32));
        let mut rng = rng_for(seed, stream::LQI_EPOCH, epoch);
        let order = shuffled_indices(images.len(), &mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch) {
            let sigma = rng.random_range(0.0..cfg.noise_max);
            model.proj.zero_grads();
            model.head.zero_grads();
            for &i in batch {
                let noise_seed: u64 = rng.random();
                let noisy = images[i].add_noise(sigma, noise_seed)?;
                let x = noisy.to_vector(0.0);
                let (maps, c_proj) = model.proj.forward_train(&x);
                let (pooled, c_pool) = model.pool.forward(&maps);
                let (out, c_head) = model.head.forward_train(&pooled);
                let err = out[0] - sigma;
                total += err.abs();
                let g = if err > 0.0 {
                    1.0
                } else if err < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                let g_pooled = model.head.backward(&c_head, &[g]);
                let g_maps = model.pool.backward(&c_pool, &g_pooled);
                model.proj.backward(&c_proj, &g_maps);
            }
            let s = 1.0 / batch.len() as f64;
            model.proj.scale_grads(s);
            model.head.scale_grads(s);
            adam.step(&mut model.proj);
            adam.step(&mut model.head);
        }
        let mut row = TrainLogRow::blank(phase_name(PHASE_LQI), epoch);
        row.total = total / images.len() as f64;
        if !row.total.is_finite() {
            return Err(ModelError::Diverged {
                phase: row.phase,
                epoch,
            });
        }
        rows.push(row);
        model.trained_epochs += 1;
    }
    Ok(rows)
}

pub fn save_lqi(path: &Path, model: &LqiModel) -> Result<(), ModelError> {
    let ckpt = Checkpoint {
        phase: PHASE_LQI,
        lineage: model.trained_epochs,
        groups: vec![model.proj.clone(), model.head.clone()],
        optimizer: None,
    };
    Ok(save_checkpoint(path, &ckpt)?)
}

pub fn load_lqi(path: &Path) -> Result<LqiModel, ModelError> {
    let ckpt = load_checkpoint(path)?;
    let mut proj = None;
    let mut head = None;
    for g in ckpt.groups {
        match g.name() {
            "lqi_proj" => proj = Some(g),
            "lqi_head" => head = Some(g),
            other => {
                return Err(ModelError::ConfigMismatch(format!(
                    "unexpected network group {other:?} in quality checkpoint"
                )))
            }
        }
    }
    let proj = proj.ok_or_else(|| {
        ModelError::ConfigMismatch("quality checkpoint has no projection".into())
    })?;
    let head =
        head.ok_or_else(|| ModelError::ConfigMismatch("quality checkpoint has no head".into()))?;
    // Pool geometry is implied by the layer shapes around it.
    if head.in_dim() % 2 != 0 {
        return Err(ModelError::ConfigMismatch(format!(
            "head input {} is not a (max, min) pairing",
            head.in_dim()
        )));
    }
    let groups = head.in_dim() / 2;
    if groups == 0 || proj.out_dim() % groups != 0 {
        return Err(ModelError::ConfigMismatch(format!(
            "projection width {} does not split into {} maps",
            proj.out_dim(),
            groups
        )));
    }
    let channels = proj.out_dim() / groups;
    Ok(LqiModel {
        pool: MaxMinPool::new(groups, channels),
        proj,
        head,
        trained_epochs: ckpt.lineage,
    })
}
