//! Adam with decoupled weight decay, one state slot per named network.

use std::collections::BTreeMap;

use super::Mlp;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled (AdamW-style) decay, applied to weights only, not biases.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 6e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct LayerSlot {
    pub(crate) mw: Vec<f64>,
    pub(crate) vw: Vec<f64>,
    pub(crate) mb: Vec<f64>,
    pub(crate) vb: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct GroupSlot {
    /// Number of updates applied to this group (bias correction uses it).
    pub(crate) t: u64,
    pub(crate) layers: Vec<LayerSlot>,
}

/// Optimizer state is keyed by network name so frozen networks never advance
/// and checkpoints can restore moments without positional coupling.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    pub(crate) slots: BTreeMap<String, GroupSlot>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam {
            cfg,
            slots: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.cfg.lr = lr;
    }

    pub(crate) fn from_parts(cfg: AdamConfig, slots: BTreeMap<String, GroupSlot>) -> Self {
        Adam { cfg, slots }
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    /// Non-trainable networks are left untouched (gradients included).
    pub fn step(&mut self, mlp: &mut Mlp) {
        if !mlp.trainable {
            return;
        }
        let slot = self.slots.entry(mlp.name.clone()).or_default();
        if slot.layers.len() != mlp.layers.len() {
            slot.layers = mlp
                .layers
                .iter()
                .map(|l| LayerSlot {
                    mw: vec![0.0; l.w.len()],
                    vw: vec![0.0; l.w.len()],
                    mb: vec![0.0; l.b.len()],
                    vb: vec![0.0; l.b.len()],
                })
                .collect();
            slot.t = 0;
        }
        slot.t += 1;
        let t = slot.t as i32;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.cfg;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (layer, ls) in mlp.layers.iter_mut().zip(&mut slot.layers) {
            for k in 0..layer.w.len() {
                let g = layer.gw[k];
                ls.mw[k] = beta1 * ls.mw[k] + (1.0 - beta1) * g;
                ls.vw[k] = beta2 * ls.vw[k] + (1.0 - beta2) * g * g;
                let m_hat = ls.mw[k] / bc1;
                let v_hat = ls.vw[k] / bc2;
                layer.w[k] -= lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * layer.w[k]);
                layer.gw[k] = 0.0;
            }
            for k in 0..layer.b.len() {
                let g = layer.gb[k];
                ls.mb[k] = beta1 * ls.mb[k] + (1.0 - beta1) * g;
                ls.vb[k] = beta2 * ls.vb[k] + (1.0 - beta2) * g * g;
                let m_hat = ls.mb[k] / bc1;
                let v_hat = ls.vb[k] / bc2;
                layer.b[k] -= lr * m_hat / (v_hat.sqrt() + eps);
                layer.gb[k] = 0.0;
            }
        }
    }
}
