//! The translation model: a shared autoencoder over range images, a pair
//! discriminator, and the staged training that turns the encoder of the
//! dynamic branch into a dynamic-to-static translator.
//!
//! Training runs in a fixed order, and the state machine here enforces it:
//!
//! 1. autoencoder — encoder+decoder learn to reproduce static scans;
//! 2. discriminator — a pair classifier learns to tell (static, static)
//!    latent pairs (label 1) from (static, dynamic) pairs (label 0), while
//!    the autoencoder keeps refining reconstructions;
//! 3. adversarial — the branch is duplicated; the static copy and the
//!    decoder freeze, and only the dynamic-branch encoder keeps training,
//!    now rewarded when the frozen discriminator mistakes its latents for
//!    static ones and when the frozen decoder maps them onto the paired
//!    static scan;
//! 4. domain adaptation — the adversarial objective continues on source
//!    pairs, plus unsupervised terms that pull unlabeled target-domain
//!    scans into the same latent region (kernel two-sample penalty and the
//!    same fooling term).
//!
//! Every epoch draws its randomness from a stream keyed by a global epoch
//! counter (`lineage`) that is persisted in checkpoints, so a run that is
//! stopped and resumed replays the exact same sequence as an uninterrupted
//! one.

use std::path::Path;

use thiserror::Error;

use crate::metrics::MetricError;
use crate::nn::{
    load_checkpoint, save_checkpoint, Activation, Adam, AdamConfig, Checkpoint, Mlp, NnError,
};
use crate::rngutil::{rng_for, stream};
use crate::scan::{blend, RangeImage, ScanError, SegMask};

mod data;
mod lqi;
mod train;

pub use data::{load_pair_corpus, load_scan_as_image, PairCorpus};
pub use lqi::{load_lqi, save_lqi, train_lqi, LqiConfig, LqiModel};
pub use train::{
    disc_accuracy, train_adversarial, train_autoencoder, train_discriminator, train_uda,
};

/// Stage markers stored in checkpoints: the last stage the state completed.
pub const PHASE_INIT: u8 = 0;
pub const PHASE_AE: u8 = 1;
pub const PHASE_DISC: u8 = 2;
pub const PHASE_ADV: u8 = 3;
pub const PHASE_UDA: u8 = 4;
/// Scan-quality regressor checkpoints live in their own files.
pub const PHASE_LQI: u8 = 5;

pub fn phase_name(phase: u8) -> &'static str {
    match phase {
        PHASE_INIT => "init",
        PHASE_AE => "autoencoder",
        PHASE_DISC => "discriminator",
        PHASE_ADV => "adversarial",
        PHASE_UDA => "uda",
        PHASE_LQI => "lqi",
        _ => "unknown",
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("wrong training order: {op} requires phase {expected}, state is at {found}")]
    WrongPhase {
        op: &'static str,
        expected: &'static str,
        found: &'static str,
    },
    #[error("empty training input: {0}")]
    EmptyData(&'static str),
    #[error("model does not match config: {0}")]
    ConfigMismatch(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("training diverged: non-finite {phase} loss at epoch {epoch}")]
    Diverged { phase: &'static str, epoch: u64 },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Scan(#[from] ScanError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Model hyperparameters. The defaults are the desk-scale profile used by
/// the bundled simulator (16x64 range images).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DslrConfig {
    /// Range-image height the networks are sized for.
    pub rows: usize,
    /// Range-image width the networks are sized for.
    pub cols: usize,
    /// Latent width of one branch.
    pub bottleneck: usize,
    pub enc_hidden: Vec<usize>,
    pub dec_hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
    /// Negative-side slope of the leaky rectifier used by encoder and
    /// discriminator hidden layers.
    pub leaky_slope: f64,
    /// Weight on the classification terms relative to reconstruction.
    pub alpha: f64,
    /// Weight on the latent two-sample penalty during domain adaptation.
    pub lambda: f64,
    pub lr: f64,
    pub beta1: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub epochs_ae: usize,
    pub epochs_disc: usize,
    pub epochs_adv: usize,
    pub epochs_uda: usize,
}

impl Default for DslrConfig {
    fn default() -> Self {
        DslrConfig {
            rows: 16,
            cols: 64,
            bottleneck: 16,
            enc_hidden: vec![128],
            dec_hidden: vec![128],
            disc_hidden: vec![64],
            leaky_slope: 0.2,
            alpha: 10.0,
            lambda: 0.01,
            lr: 6e-4,
            beta1: 0.9,
            weight_decay: 1e-5,
            batch: 8,
            epochs_ae: 120,
            epochs_disc: 20,
            epochs_adv: 40,
            epochs_uda: 15,
        }
    }
}

impl DslrConfig {
    pub fn input_dim(&self) -> usize {
        self.rows * self.cols
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.rows == 0 || self.cols == 0 {
            return bad(format!("grid {}x{} has no cells", self.rows, self.cols));
        }
        if self.bottleneck == 0 {
            return bad("bottleneck must be positive".into());
        }
        if self.batch == 0 {
            return bad("batch must be positive".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("learning rate {} out of range", self.lr));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return bad(format!("beta1 {} out of [0, 1)", self.beta1));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!("weight decay {} out of range", self.weight_decay));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return bad(format!("alpha {} out of range", self.alpha));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda {} out of range", self.lambda));
        }
        if !(self.leaky_slope.is_finite() && (0.0..1.0).contains(&self.leaky_slope)) {
            return bad(format!("leaky slope {} out of (0, 1)", self.leaky_slope));
        }
        if self.enc_hidden.iter().chain(&self.dec_hidden).chain(&self.disc_hidden).any(|&w| w == 0)
        {
            return bad("hidden layer widths must be positive".into());
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }

    fn encoder_shape(&self) -> (Vec<usize>, Vec<Activation>) {
        let mut dims = vec![self.input_dim()];
        dims.extend_from_slice(&self.enc_hidden);
        dims.push(self.bottleneck);
        let mut acts = vec![Activation::LeakyRelu(self.leaky_slope); self.enc_hidden.len()];
        acts.push(Activation::Identity);
        (dims, acts)
    }

    fn decoder_shape(&self) -> (Vec<usize>, Vec<Activation>) {
        let mut dims = vec![self.bottleneck];
        dims.extend_from_slice(&self.dec_hidden);
        dims.push(self.input_dim());
        let mut acts = vec![Activation::Relu; self.dec_hidden.len()];
        acts.push(Activation::Sigmoid);
        (dims, acts)
    }

    fn disc_shape(&self) -> (Vec<usize>, Vec<Activation>) {
        let mut dims = vec![2 * self.bottleneck];
        dims.extend_from_slice(&self.disc_hidden);
        dims.push(1);
        let mut acts = vec![Activation::LeakyRelu(self.leaky_slope); self.disc_hidden.len()];
        acts.push(Activation::Sigmoid);
        (dims, acts)
    }
}

/// One source-domain training pair: a dynamic scan and the static content
/// rendered into the same sensor pose, both as normalized range vectors.
#[derive(Debug, Clone)]
pub struct PairSample {
    pub dynamic: Vec<f64>,
    pub target: Vec<f64>,
}

/// Mutable training state: current branch networks, the frozen static
/// branch once it exists, the discriminator, and optimizer moments.
#[derive(Debug, Clone)]
pub struct DslrState {
    pub config: DslrConfig,
    /// Last completed stage (one of the `PHASE_*` constants).
    pub phase: u8,
    /// Total training epochs completed across all stages; indexes every
    /// per-epoch random stream so interrupted runs resume identically.
    pub lineage: u64,
    /// Trainable encoder: "enc" until the adversarial split, "enc2" after.
    pub(crate) enc: Mlp,
    /// Decoder: "dec" until the split (trainable), "dec2" after (frozen).
    pub(crate) dec: Mlp,
    pub(crate) disc: Option<Mlp>,
    /// Frozen copy of the encoder at the adversarial split ("enc1").
    pub(crate) static_enc: Option<Mlp>,
    /// Frozen copy of the decoder at the adversarial split ("dec1").
    pub(crate) static_dec: Option<Mlp>,
    pub(crate) adam: Adam,
}

impl DslrState {
    /// Fresh, untrained state. Initialization draws encoder weights first,
    /// then decoder weights, from one generator stream.
    pub fn new(config: DslrConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = rng_for(seed, stream::INIT_G, 0);
        let (edims, eacts) = config.encoder_shape();
        let enc = Mlp::new("enc", &edims, &eacts, &mut rng);
        let (ddims, dacts) = config.decoder_shape();
        let dec = Mlp::new("dec", &ddims, &dacts, &mut rng);
        let adam = Adam::new(config.adam());
        Ok(DslrState {
            config,
            phase: PHASE_INIT,
            lineage: 0,
            enc,
            dec,
            disc: None,
            static_enc: None,
            static_dec: None,
            adam,
        })
    }

    pub fn encoder(&self) -> &Mlp {
        &self.enc
    }

    pub fn decoder(&self) -> &Mlp {
        &self.dec
    }

    pub fn discriminator(&self) -> Option<&Mlp> {
        self.disc.as_ref()
    }

    pub fn static_encoder(&self) -> Option<&Mlp> {
        self.static_enc.as_ref()
    }

    pub fn static_decoder(&self) -> Option<&Mlp> {
        self.static_dec.as_ref()
    }

    /// Hash over every parameter of every network group, in checkpoint
    /// order. Two states with equal hashes behave identically.
    pub fn param_hash(&self) -> String {
        let mut groups: Vec<&Mlp> = vec![&self.enc, &self.dec];
        if let Some(d) = &self.disc {
            groups.push(d);
        }
        if let Some(e) = &self.static_enc {
            groups.push(e);
        }
        if let Some(d) = &self.static_dec {
            groups.push(d);
        }
        crate::nn::param_hash(&groups)
    }

    /// Latent code of a normalized range vector under the current
    /// (dynamic-branch) encoder.
    pub fn encode_vec(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.check_input(x.len())?;
        Ok(self.enc.forward(x))
    }

    /// Latent code of a scan under the current encoder.
    pub fn encode_scan(&self, image: &RangeImage) -> Result<Vec<f64>, ModelError> {
        self.encode_vec(&image.to_vector(0.0))
    }

    /// Runs a dynamic scan through the adapted branch: encode with the
    /// dynamic-branch encoder, decode with the frozen decoder. Occupancy is
    /// carried over from the input; only ranges are rewritten.
    ///
    /// Requires the adversarial stage to have run (before that the encoder
    /// has never seen the translation objective).
    pub fn reconstruct(&self, image: &RangeImage) -> Result<RangeImage, ModelError> {
        if self.phase < PHASE_ADV {
            return Err(ModelError::WrongPhase {
                op: "reconstruct",
                expected: phase_name(PHASE_ADV),
                found: phase_name(self.phase),
            });
        }
        let x = image.to_vector(0.0);
        self.check_input(x.len())?;
        let out = self.dec.forward(&self.enc.forward(&x));
        Ok(RangeImage::from_vector(&out, *image.spec(), image.occupancy())?)
    }

    /// Segmentation-assisted translation: cells the mask calls dynamic come
    /// from the reconstruction, everything else stays raw sensor data.
    pub fn translate_masked(
        &self,
        image: &RangeImage,
        mask: &SegMask,
    ) -> Result<RangeImage, ModelError> {
        let recon = self.reconstruct(image)?;
        Ok(blend(mask, &recon, image)?)
    }

    pub(crate) fn check_input(&self, got: usize) -> Result<(), ModelError> {
        let want = self.enc.in_dim();
        if got != want {
            return Err(ModelError::ConfigMismatch(format!(
                "input has {got} cells, encoder expects {want}"
            )));
        }
        Ok(())
    }

    /// Serializable snapshot (networks, optimizer moments, stage, epoch
    /// counter). The hyperparameter config is not stored; loading takes it
    /// from the run configuration and cross-checks shapes.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut groups = vec![self.enc.clone(), self.dec.clone()];
        if let Some(d) = &self.disc {
            groups.push(d.clone());
        }
        if let Some(e) = &self.static_enc {
            groups.push(e.clone());
        }
        if let Some(d) = &self.static_dec {
            groups.push(d.clone());
        }
        Checkpoint {
            phase: self.phase,
            lineage: self.lineage,
            groups,
            optimizer: Some(self.adam.clone()),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint, config: DslrConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut enc = None;
        let mut dec = None;
        let mut disc = None;
        let mut static_enc = None;
        let mut static_dec = None;
        for g in ckpt.groups {
            match g.name() {
                "enc" | "enc2" => enc = Some(g),
                "dec" | "dec2" => dec = Some(g),
                "disc" => disc = Some(g),
                "enc1" => static_enc = Some(g),
                "dec1" => static_dec = Some(g),
                other => {
                    return Err(ModelError::ConfigMismatch(format!(
                        "unexpected network group {other:?} in checkpoint"
                    )))
                }
            }
        }
        let enc = enc.ok_or_else(|| ModelError::ConfigMismatch("checkpoint has no encoder".into()))?;
        let dec = dec.ok_or_else(|| ModelError::ConfigMismatch("checkpoint has no decoder".into()))?;
        let state = DslrState {
            phase: ckpt.phase,
            lineage: ckpt.lineage,
            adam: ckpt.optimizer.unwrap_or_else(|| Adam::new(config.adam())),
            config,
            enc,
            dec,
            disc,
            static_enc,
            static_dec,
        };
        state.validate_shapes()?;
        Ok(state)
    }

    fn validate_shapes(&self) -> Result<(), ModelError> {
        let n = self.config.input_dim();
        let b = self.config.bottleneck;
        let mismatch = |msg: String| Err(ModelError::ConfigMismatch(msg));
        if self.enc.in_dim() != n || self.enc.out_dim() != b {
            return mismatch(format!(
                "encoder is {}->{}, config wants {n}->{b}",
                self.enc.in_dim(),
                self.enc.out_dim()
            ));
        }
        if self.dec.in_dim() != b || self.dec.out_dim() != n {
            return mismatch(format!(
                "decoder is {}->{}, config wants {b}->{n}",
                self.dec.in_dim(),
                self.dec.out_dim()
            ));
        }
        if let Some(d) = &self.disc {
            if d.in_dim() != 2 * b || d.out_dim() != 1 {
                return mismatch(format!(
                    "discriminator is {}->{}, config wants {}->1",
                    d.in_dim(),
                    d.out_dim(),
                    2 * b
                ));
            }
        }
        if self.phase > PHASE_UDA {
            return mismatch(format!("unknown phase byte {}", self.phase));
        }
        if self.phase >= PHASE_DISC && self.disc.is_none() {
            return mismatch("phase says discriminator trained, but none stored".into());
        }
        if self.phase >= PHASE_ADV && (self.static_enc.is_none() || self.static_dec.is_none()) {
            return mismatch("phase says branches split, but static branch missing".into());
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        Ok(save_checkpoint(path, &self.to_checkpoint())?)
    }

    pub fn load(path: &Path, config: DslrConfig) -> Result<Self, ModelError> {
        Self::from_checkpoint(load_checkpoint(path)?, config)
    }
}

/// One epoch of training telemetry. Fields that a phase does not use hold
/// `NaN` and serialize as such.
#[derive(Debug, Clone)]
pub struct TrainLogRow {
    pub phase: &'static str,
    /// Global epoch counter (`lineage`) at the start of this epoch.
    pub epoch: u64,
    /// Mean per-sample objective for the epoch.
    pub total: f64,
    /// Mean reconstruction component.
    pub mse: f64,
    /// Mean (unweighted) classification component.
    pub bce: f64,
    /// Mean latent two-sample statistic (domain adaptation only).
    pub mmd: f64,
    /// Mean discriminator score on (static, non-static) inputs this epoch.
    pub disc_sd: f64,
}

impl TrainLogRow {
    pub(crate) fn blank(phase: &'static str, epoch: u64) -> Self {
        TrainLogRow {
            phase,
            epoch,
            total: f64::NAN,
            mse: f64::NAN,
            bce: f64::NAN,
            mmd: f64::NAN,
            disc_sd: f64::NAN,
        }
    }
}

/// Renders log rows as CSV (stable column order, full-precision floats).
pub fn train_log_csv(rows: &[TrainLogRow]) -> String {
    let mut out = String::from("phase,epoch,total,mse,bce,mmd,disc_sd\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.phase, r.epoch, r.total, r.mse, r.bce, r.mmd, r.disc_sd
        ));
    }
    out
}
