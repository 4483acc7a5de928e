//! Central finite-difference verification of analytic gradients.

use rand::Rng;

use super::Mlp;
use crate::rngutil::{rng_for, stream};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    /// Largest relative disagreement seen across all probes.
    pub max_rel_err: f64,
    pub probes: usize,
}

/// Compares the gradients accumulated by `eval` (which must run a full
/// forward/backward pass over the supplied networks and return the loss)
/// against central finite differences of the loss itself.
///
/// Per trainable layer, up to `probes_per_layer` distinct parameters are
/// sampled; each is nudged by `+h`/`-h`. The relative error uses
/// `|analytic - fd| / max(|analytic| + |fd|, 1e-2)` so near-zero gradients do
/// not blow up the ratio.
pub fn grad_check<F>(
    mlps: &mut [&mut Mlp],
    eval: &mut F,
    probes_per_layer: usize,
    h: f64,
    seed: u64,
) -> GradCheckReport
where
    F: FnMut(&mut [&mut Mlp]) -> f64,
{
    assert!(h > 0.0);
    for mlp in mlps.iter_mut() {
        mlp.zero_grads();
    }
    let _ = eval(mlps);
    // Snapshot the analytic gradients before the probing evals overwrite them.
    let analytic: Vec<Vec<(Vec<f64>, Vec<f64>)>> = mlps
        .iter()
        .map(|m| {
            m.layers
                .iter()
                .map(|l| (l.gw.clone(), l.gb.clone()))
                .collect()
        })
        .collect();

    let mut rng = rng_for(seed, stream::GRAD_CHECK, 0);
    let mut max_rel_err: f64 = 0.0;
    let mut probes = 0usize;
    for k in 0..mlps.len() {
        if !mlps[k].trainable {
            continue;
        }
        for l in 0..mlps[k].layers.len() {
            let nw = mlps[k].layers[l].w.len();
            let nb = mlps[k].layers[l].b.len();
            let n = nw + nb;
            let count = probes_per_layer.min(n);
            // Partial Fisher-Yates for distinct indices.
            let mut idx: Vec<usize> = (0..n).collect();
            for i in 0..count {
                let j = rng.random_range(i..n);
                idx.swap(i, j);
            }
            for &p in &idx[..count] {
                let orig = if p < nw {
                    mlps[k].layers[l].w[p]
                } else {
                    mlps[k].layers[l].b[p - nw]
                };
                let set = |mlps: &mut [&mut Mlp], v: f64| {
                    if p < nw {
                        mlps[k].layers[l].w[p] = v;
                    } else {
                        mlps[k].layers[l].b[p - nw] = v;
                    }
                };
                set(mlps, orig + h);
                for m in mlps.iter_mut() {
                    m.zero_grads();
                }
                let fp = eval(mlps);
                set(mlps, orig - h);
                for m in mlps.iter_mut() {
                    m.zero_grads();
                }
                let fm = eval(mlps);
                set(mlps, orig);
                let fd = (fp - fm) / (2.0 * h);
                let a = if p < nw {
                    analytic[k][l].0[p]
                } else {
                    analytic[k][l].1[p - nw]
                };
                let rel = (a - fd).abs() / (a.abs() + fd.abs()).max(1e-2);
                max_rel_err = max_rel_err.max(rel);
                probes += 1;
            }
        }
    }
    for mlp in mlps.iter_mut() {
        mlp.zero_grads();
    }
    GradCheckReport {
        max_rel_err,
        probes,
    }
}
