//! Stage trainers. Each function runs whole epochs, appends one log row per
//! epoch, bumps the global epoch counter, and fails fast with
//! [`ModelError::Diverged`] the moment an epoch objective stops being finite.

use rand::Rng;

use crate::metrics::{median_heuristic_bandwidth, mmd2_with_grad};
use crate::nn::{bce_with_grad, mse, mse_grad, Adam, Mlp};
use crate::rngutil::{rng_for, shuffled_indices, stream};

use super::{
    phase_name, DslrConfig, DslrState, ModelError, PairSample, TrainLogRow, PHASE_ADV, PHASE_AE,
    PHASE_DISC, PHASE_INIT, PHASE_UDA,
};

fn require_phase(
    state: &DslrState,
    op: &'static str,
    allowed: &[u8],
    expected: &'static str,
) -> Result<(), ModelError> {
    if allowed.contains(&state.phase) {
        Ok(())
    } else {
        Err(ModelError::WrongPhase {
            op,
            expected,
            found: phase_name(state.phase),
        })
    }
}

fn check_all(state: &DslrState, vecs: &[Vec<f64>]) -> Result<(), ModelError> {
    for v in vecs {
        state.check_input(v.len())?;
    }
    Ok(())
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

fn finite_or_diverged(row: &TrainLogRow) -> Result<(), ModelError> {
    if row.total.is_finite() {
        Ok(())
    } else {
        Err(ModelError::Diverged {
            phase: row.phase,
            epoch: row.epoch,
        })
    }
}

/// Stage 1: the encoder/decoder pair learns to reproduce static scans.
pub fn train_autoencoder(
    state: &mut DslrState,
    statics: &[Vec<f64>],
    epochs: usize,
    seed: u64,
) -> Result<Vec<TrainLogRow>, ModelError> {
    require_phase(state, "autoencoder training", &[PHASE_INIT, PHASE_AE], "a fresh model")?;
    if statics.is_empty() {
        return Err(ModelError::EmptyData("static scans"));
    }
    check_all(state, statics)?;
    state.phase = PHASE_AE;

    let DslrState {
        config,
        lineage,
        enc,
        dec,
        adam,
        ..
    } = state;
    let mut rows = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let mut rng = rng_for(seed, stream::AE_EPOCH, *lineage);
        let order = shuffled_indices(statics.len(), &mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch) {
            enc.zero_grads();
            dec.zero_grads();
            for &i in batch {
                let x = &statics[i];
                let (code, c_enc) = enc.forward_train(x);
                let (out, c_dec) = dec.forward_train(&code);
                total += mse(&out, x);
                let g_code = dec.backward(&c_dec, &mse_grad(&out, x));
                enc.backward(&c_enc, &g_code);
            }
            let s = 1.0 / batch.len() as f64;
            enc.scale_grads(s);
            dec.scale_grads(s);
            adam.step(enc);
            adam.step(dec);
        }
        let mut row = TrainLogRow::blank(phase_name(PHASE_AE), *lineage);
        row.total = total / statics.len() as f64;
        row.mse = row.total;
        finite_or_diverged(&row)?;
        rows.push(row);
        *lineage += 1;
    }
    Ok(rows)
}

/// Stage 2: a pair classifier learns latent-pair labels — 1 for two static
/// scans, 0 for a static/dynamic pair — while the autoencoder keeps
/// training its reconstructions. Pair order is randomized per draw so the
/// classifier cannot key on slot position.
pub fn train_discriminator(
    state: &mut DslrState,
    statics: &[Vec<f64>],
    dynamics: &[Vec<f64>],
    epochs: usize,
    seed: u64,
) -> Result<Vec<TrainLogRow>, ModelError> {
    require_phase(
        state,
        "discriminator training",
        &[PHASE_AE, PHASE_DISC],
        "a trained autoencoder",
    )?;
    if statics.is_empty() {
        return Err(ModelError::EmptyData("static scans"));
    }
    if dynamics.is_empty() {
        return Err(ModelError::EmptyData("dynamic scans"));
    }
    check_all(state, statics)?;
    check_all(state, dynamics)?;
    if state.disc.is_none() {
        let (dims, acts) = state.config.disc_shape();
        let mut rng = rng_for(seed, stream::INIT_DISC, 0);
        state.disc = Some(Mlp::new("disc", &dims, &acts, &mut rng));
    }
    state.phase = PHASE_DISC;

    let DslrState {
        config,
        lineage,
        enc,
        dec,
        disc,
        adam,
        ..
    } = state;
    let disc = disc.as_mut().expect("created above");
    let alpha = config.alpha;
    let b = enc.out_dim();

    let mut rows = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let mut rng = rng_for(seed, stream::DISC_EPOCH, *lineage);
        let order = shuffled_indices(statics.len(), &mut rng);
        let (mut t_total, mut t_mse, mut t_bce, mut t_p, mut n_mse) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for batch in order.chunks(config.batch) {
            let inv = 1.0 / batch.len() as f64;

            // Same-class step: (static_i, static_j) should score 1.
            enc.zero_grads();
            dec.zero_grads();
            disc.zero_grads();
            for &i in batch {
                let j = rng.random_range(0..statics.len());
                let swap = rng.random_bool(0.5);
                let (xi, xj) = (&statics[i], &statics[j]);
                let (ri, ci) = enc.forward_train(xi);
                let (rj, cj) = enc.forward_train(xj);
                let (oi, coi) = dec.forward_train(&ri);
                let (oj, coj) = dec.forward_train(&rj);
                let cat = if swap { concat(&rj, &ri) } else { concat(&ri, &rj) };
                let (p, cp) = disc.forward_train(&cat);
                let (bl, bg) = bce_with_grad(p[0], 1.0);
                let (mi, mj) = (mse(&oi, xi), mse(&oj, xj));
                t_total += alpha * bl + mi + mj;
                t_bce += bl;
                t_mse += mi + mj;
                n_mse += 2.0;
                let g_cat = disc.backward(&cp, &[alpha * bg]);
                let (g_first, g_second) = g_cat.split_at(b);
                let (g_ri_disc, g_rj_disc) = if swap { (g_second, g_first) } else { (g_first, g_second) };
                let mut g_ri = dec.backward(&coi, &mse_grad(&oi, xi));
                for (g, &d) in g_ri.iter_mut().zip(g_ri_disc) {
                    *g += d;
                }
                enc.backward(&ci, &g_ri);
                let mut g_rj = dec.backward(&coj, &mse_grad(&oj, xj));
                for (g, &d) in g_rj.iter_mut().zip(g_rj_disc) {
                    *g += d;
                }
                enc.backward(&cj, &g_rj);
            }
            enc.scale_grads(inv);
            dec.scale_grads(inv);
            disc.scale_grads(inv);
            adam.step(enc);
            adam.step(dec);
            adam.step(disc);

            // Mixed step: (static_i, dynamic_d) should score 0, and the
            // decoder also learns to reproduce the dynamic scan. Unlike the
            // same-class pairs, mixed pairs keep the fixed static-first slot
            // order — the adversarial stage feeds the same convention.
            enc.zero_grads();
            dec.zero_grads();
            disc.zero_grads();
            for &i in batch {
                let d = rng.random_range(0..dynamics.len());
                let (xi, xd) = (&statics[i], &dynamics[d]);
                let (ri, ci) = enc.forward_train(xi);
                let (rd, cd) = enc.forward_train(xd);
                let (od, cod) = dec.forward_train(&rd);
                let (p, cp) = disc.forward_train(&concat(&ri, &rd));
                let (bl, bg) = bce_with_grad(p[0], 0.0);
                let md = mse(&od, xd);
                t_total += alpha * bl + md;
                t_bce += bl;
                t_mse += md;
                n_mse += 1.0;
                t_p += p[0];
                let g_cat = disc.backward(&cp, &[alpha * bg]);
                let (g_ri_disc, g_rd_disc) = g_cat.split_at(b);
                enc.backward(&ci, g_ri_disc);
                let mut g_rd = dec.backward(&cod, &mse_grad(&od, xd));
                for (g, &gd) in g_rd.iter_mut().zip(g_rd_disc) {
                    *g += gd;
                }
                enc.backward(&cd, &g_rd);
            }
            enc.scale_grads(inv);
            dec.scale_grads(inv);
            disc.scale_grads(inv);
            adam.step(enc);
            adam.step(dec);
            adam.step(disc);
        }
        let n = statics.len() as f64;
        let mut row = TrainLogRow::blank(phase_name(PHASE_DISC), *lineage);
        row.total = t_total / n;
        row.mse = t_mse / n_mse;
        row.bce = t_bce / (2.0 * n);
        row.disc_sd = t_p / n;
        finite_or_diverged(&row)?;
        rows.push(row);
        *lineage += 1;
    }
    Ok(rows)
}

/// Freezes the static branch and the shared pieces; from here on only the
/// dynamic-branch encoder trains.
fn split_branches(state: &mut DslrState) {
    let mut e1 = state.enc.clone();
    e1.rename("enc1");
    e1.set_trainable(false);
    let mut d1 = state.dec.clone();
    d1.rename("dec1");
    d1.set_trainable(false);
    state.static_enc = Some(e1);
    state.static_dec = Some(d1);
    // Renaming starts a fresh optimizer slot: the adversarial stage begins
    // with clean moments, matching a newly attached objective.
    state.enc.rename("enc2");
    state.dec.rename("dec2");
    state.dec.set_trainable(false);
    if let Some(d) = &mut state.disc {
        d.set_trainable(false);
    }
}

/// One adversarial epoch over source pairs. The encoder is pushed to make
/// the frozen discriminator read (static, translated-dynamic) latent pairs
/// as static/static — the classification target is deliberately flipped to
/// 1 — while the frozen decoder ties its codes to the paired static scan.
#[allow(clippy::too_many_arguments)]
fn adv_epoch(
    config: &DslrConfig,
    enc: &mut Mlp,
    dec: &mut Mlp,
    disc: &mut Mlp,
    enc1: &Mlp,
    adam: &mut Adam,
    pairs: &[PairSample],
    lineage: u64,
    seed: u64,
    label: &'static str,
) -> TrainLogRow {
    let mut rng = rng_for(seed, stream::ADV_EPOCH, lineage);
    let order = shuffled_indices(pairs.len(), &mut rng);
    let alpha = config.alpha;
    let b = enc.out_dim();
    let (mut t_total, mut t_mse, mut t_bce, mut t_p) = (0.0, 0.0, 0.0, 0.0);
    for batch in order.chunks(config.batch) {
        enc.zero_grads();
        for &pi in batch {
            let pair = &pairs[pi];
            let (r2, c2) = enc.forward_train(&pair.dynamic);
            let r1 = enc1.forward(&pair.target);
            let (recon, cr) = dec.forward_train(&r2);
            let (p, cp) = disc.forward_train(&concat(&r1, &r2));
            let (bl, bg) = bce_with_grad(p[0], 1.0);
            let m = mse(&recon, &pair.target);
            t_total += alpha * bl + m;
            t_mse += m;
            t_bce += bl;
            t_p += p[0];
            let g_cat = disc.backward(&cp, &[alpha * bg]);
            let mut g_r2 = dec.backward(&cr, &mse_grad(&recon, &pair.target));
            for (g, &gc) in g_r2.iter_mut().zip(&g_cat[b..]) {
                *g += gc;
            }
            enc.backward(&c2, &g_r2);
        }
        enc.scale_grads(1.0 / batch.len() as f64);
        adam.step(enc);
    }
    let n = pairs.len() as f64;
    let mut row = TrainLogRow::blank(label, lineage);
    row.total = t_total / n;
    row.mse = t_mse / n;
    row.bce = t_bce / n;
    row.disc_sd = t_p / n;
    row
}

/// Stage 3: adversarial adaptation of the dynamic-branch encoder on paired
/// (dynamic scan, static rendering) data.
pub fn train_adversarial(
    state: &mut DslrState,
    pairs: &[PairSample],
    epochs: usize,
    seed: u64,
) -> Result<Vec<TrainLogRow>, ModelError> {
    require_phase(
        state,
        "adversarial training",
        &[PHASE_DISC, PHASE_ADV, PHASE_UDA],
        "a trained discriminator",
    )?;
    if pairs.is_empty() {
        return Err(ModelError::EmptyData("training pairs"));
    }
    for p in pairs {
        state.check_input(p.dynamic.len())?;
        state.check_input(p.target.len())?;
    }
    if state.phase == PHASE_DISC {
        split_branches(state);
    }
    state.phase = state.phase.max(PHASE_ADV);

    let DslrState {
        config,
        lineage,
        enc,
        dec,
        disc,
        static_enc,
        adam,
        ..
    } = state;
    let disc = disc.as_mut().expect("phase gate guarantees a discriminator");
    let enc1 = static_enc.as_ref().expect("split above");
    let mut rows = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let row = adv_epoch(
            config,
            enc,
            dec,
            disc,
            enc1,
            adam,
            pairs,
            *lineage,
            seed,
            phase_name(PHASE_ADV),
        );
        finite_or_diverged(&row)?;
        rows.push(row);
        *lineage += 1;
    }
    Ok(rows)
}

/// Stage 4: domain adaptation. Keeps the adversarial objective on source
/// pairs and adds two unlabeled-target terms: a kernel two-sample penalty
/// between source-dynamic and target latent batches (weight `lambda`), and
/// the same flipped-target fooling term on target codes.
///
/// With `lambda == 0` or no target scans there is nothing new to optimize,
/// so epochs intentionally reduce to plain adversarial epochs on the same
/// random stream — splitting a schedule into adversarial + degenerate-UDA
/// segments reproduces the uninterrupted run bit for bit.
pub fn train_uda(
    state: &mut DslrState,
    pairs: &[PairSample],
    targets: &[Vec<f64>],
    epochs: usize,
    seed: u64,
) -> Result<Vec<TrainLogRow>, ModelError> {
    require_phase(
        state,
        "domain adaptation",
        &[PHASE_ADV, PHASE_UDA],
        "an adversarially trained model",
    )?;
    if pairs.is_empty() {
        return Err(ModelError::EmptyData("training pairs"));
    }
    for p in pairs {
        state.check_input(p.dynamic.len())?;
        state.check_input(p.target.len())?;
    }
    check_all(state, targets)?;
    let active = state.config.lambda > 0.0 && !targets.is_empty();
    if active {
        state.phase = PHASE_UDA;
    }

    let DslrState {
        config,
        lineage,
        enc,
        dec,
        disc,
        static_enc,
        adam,
        ..
    } = state;
    let disc = disc.as_mut().expect("phase gate guarantees a discriminator");
    let enc1 = static_enc.as_ref().expect("phase gate guarantees the split");
    let label = phase_name(PHASE_UDA);
    let mut rows = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let row = if active {
            uda_epoch(config, enc, dec, disc, enc1, adam, pairs, targets, *lineage, seed, label)?
        } else {
            adv_epoch(config, enc, dec, disc, enc1, adam, pairs, *lineage, seed, label)
        };
        finite_or_diverged(&row)?;
        rows.push(row);
        *lineage += 1;
    }
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
fn uda_epoch(
    config: &DslrConfig,
    enc: &mut Mlp,
    dec: &mut Mlp,
    disc: &mut Mlp,
    enc1: &Mlp,
    adam: &mut Adam,
    pairs: &[PairSample],
    targets: &[Vec<f64>],
    lineage: u64,
    seed: u64,
    label: &'static str,
) -> Result<TrainLogRow, ModelError> {
    let mut rng = rng_for(seed, stream::ADV_EPOCH, lineage);
    let mut trng = rng_for(seed, stream::UDA_TARGET, lineage);
    let order = shuffled_indices(pairs.len(), &mut rng);
    let alpha = config.alpha;
    let lambda = config.lambda;
    let b = enc.out_dim();
    let (mut t_total, mut t_mse, mut t_bce, mut t_p, mut t_mmd) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut n_batches = 0.0;

    struct Fwd {
        pair_idx: usize,
        c2: crate::nn::MlpCache,
        ct: crate::nn::MlpCache,
        cr: crate::nn::MlpCache,
        cp: crate::nn::MlpCache,
        cpt: crate::nn::MlpCache,
        recon: Vec<f64>,
        p: f64,
        pt: f64,
    }

    for batch in order.chunks(config.batch) {
        enc.zero_grads();
        let bn = batch.len();
        let mut fwds = Vec::with_capacity(bn);
        let mut xs: Vec<Vec<f64>> = Vec::with_capacity(bn);
        let mut ys: Vec<Vec<f64>> = Vec::with_capacity(bn);
        for &pi in batch {
            let pair = &pairs[pi];
            let t = &targets[trng.random_range(0..targets.len())];
            let (r2, c2) = enc.forward_train(&pair.dynamic);
            let (rt, ct) = enc.forward_train(t);
            let r1 = enc1.forward(&pair.target);
            let (recon, cr) = dec.forward_train(&r2);
            let (p, cp) = disc.forward_train(&concat(&r1, &r2));
            let (pt, cpt) = disc.forward_train(&concat(&r1, &rt));
            fwds.push(Fwd {
                pair_idx: pi,
                c2,
                ct,
                cr,
                cp,
                cpt,
                recon,
                p: p[0],
                pt: pt[0],
            });
            xs.push(r2);
            ys.push(rt);
        }
        let sigma = median_heuristic_bandwidth(&xs, &ys)?;
        let (mmd, gx, gy) = mmd2_with_grad(&xs, &ys, sigma)?;
        t_mmd += mmd;
        n_batches += 1.0;
        for (k, f) in fwds.iter().enumerate() {
            let pair = &pairs[f.pair_idx];
            let (bl, bg) = bce_with_grad(f.p, 1.0);
            let (blt, bgt) = bce_with_grad(f.pt, 1.0);
            let m = mse(&f.recon, &pair.target);
            t_total += alpha * bl + m + alpha * blt;
            t_mse += m;
            t_bce += 0.5 * (bl + blt);
            t_p += 0.5 * (f.p + f.pt);
            // Per-sample paths are averaged over the batch below; the
            // two-sample penalty is a single batch-level value, so its
            // gradients are pre-scaled by the batch size to survive the
            // uniform 1/batch factor intact.
            let g_cat = disc.backward(&f.cp, &[alpha * bg]);
            let mut g_r2 = dec.backward(&f.cr, &mse_grad(&f.recon, &pair.target));
            for (g, &gc) in g_r2.iter_mut().zip(&g_cat[b..]) {
                *g += gc;
            }
            for (g, &gm) in g_r2.iter_mut().zip(&gx[k]) {
                *g += lambda * bn as f64 * gm;
            }
            enc.backward(&f.c2, &g_r2);
            let g_cat_t = disc.backward(&f.cpt, &[alpha * bgt]);
            let mut g_rt = g_cat_t[b..].to_vec();
            for (g, &gm) in g_rt.iter_mut().zip(&gy[k]) {
                *g += lambda * bn as f64 * gm;
            }
            enc.backward(&f.ct, &g_rt);
        }
        enc.scale_grads(1.0 / bn as f64);
        adam.step(enc);
    }
    let n = pairs.len() as f64;
    let mut row = TrainLogRow::blank(label, lineage);
    row.mmd = t_mmd / n_batches;
    row.total = t_total / n + lambda * row.mmd;
    row.mse = t_mse / n;
    row.bce = t_bce / n;
    row.disc_sd = t_p / n;
    Ok(row)
}

/// Fraction of deterministic probe pairs the discriminator classifies
/// correctly: (static, static) pairs should score at least 0.5 and
/// (static, dynamic) pairs below it. Static codes come from the frozen
/// static branch once it exists.
pub fn disc_accuracy(
    state: &DslrState,
    statics: &[Vec<f64>],
    dynamics: &[Vec<f64>],
) -> Result<f64, ModelError> {
    let disc = state.disc.as_ref().ok_or(ModelError::WrongPhase {
        op: "discriminator evaluation",
        expected: "a trained discriminator",
        found: phase_name(state.phase),
    })?;
    if statics.is_empty() {
        return Err(ModelError::EmptyData("static scans"));
    }
    if dynamics.is_empty() {
        return Err(ModelError::EmptyData("dynamic scans"));
    }
    check_all(state, statics)?;
    check_all(state, dynamics)?;
    let senc = state.static_enc.as_ref().unwrap_or(&state.enc);
    let s_codes: Vec<Vec<f64>> = statics.iter().map(|v| senc.forward(v)).collect();
    let d_codes: Vec<Vec<f64>> = dynamics.iter().map(|v| state.enc.forward(v)).collect();
    let ns = s_codes.len();
    let mut correct = 0usize;
    for i in 0..ns {
        let p_ss = disc.forward(&concat(&s_codes[i], &s_codes[(i + 1) % ns]))[0];
        if p_ss >= 0.5 {
            correct += 1;
        }
        let p_sd = disc.forward(&concat(&s_codes[i], &d_codes[i % d_codes.len()]))[0];
        if p_sd < 0.5 {
            correct += 1;
        }
    }
    Ok(correct as f64 / (2 * ns) as f64)
}
