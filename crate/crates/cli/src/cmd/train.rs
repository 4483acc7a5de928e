//! `dslr train`: runs one stage of the training pipeline against a pairing
//! manifest, resuming from a checkpoint where the stage requires one.
//!
//! Stage order (fresh model -> ae -> disc -> adv -> uda) is enforced by the
//! model itself; calling a stage out of order is a validation failure. The
//! quality regressor (`lqi`) is independent and trains on the manifest's
//! clean target scans.

use std::path::Path;

use dslr_core::fsutil::atomic_write_str;
use dslr_core::model::{
    disc_accuracy, load_lqi, load_pair_corpus, load_scan_as_image, save_lqi, train_adversarial,
    train_autoencoder, train_discriminator, train_log_csv, train_lqi, train_uda, DslrState,
    LqiModel, TrainLogRow,
};
use dslr_core::pairing::PairManifest;
use dslr_core::scan::SensorSpec;

use crate::errors::CliError;
use crate::runctx::{list_scan_files, RunCtx};
use crate::{Phase, TrainArgs};

fn load_target_vectors(
    dir: Option<&Path>,
    spec: &SensorSpec,
) -> Result<Vec<Vec<f64>>, CliError> {
    let Some(dir) = dir else {
        log::warn!("uda without --target-scans runs as a plain adversarial continuation");
        return Ok(Vec::new());
    };
    let files = list_scan_files(dir)?;
    files
        .iter()
        .map(|p| Ok(load_scan_as_image(p, spec)?.to_vector(0.0)))
        .collect()
}

pub fn run(ctx: &RunCtx, args: &TrainArgs) -> Result<(), CliError> {
    let spec = ctx.cfg.sensor.to_spec()?;
    let manifest = PairManifest::load(&args.manifest)?;
    let base = args.manifest.parent().unwrap_or(Path::new("."));
    let corpus = load_pair_corpus(&manifest, base, &spec)?;
    log::info!(
        "loaded {} pairs from {}",
        corpus.pairs.len(),
        args.manifest.display()
    );
    ctx.write_run_records(&format!("train --phase {}", args.phase.name()))?;
    let seed = ctx.cfg.seed;

    let rows: Vec<TrainLogRow>;
    let ckpt_path = ctx.out.join(format!("model_{}.ckpt", args.phase.name()));
    if args.phase == Phase::Lqi {
        let mut lcfg = ctx.cfg.lqi.clone();
        if let Some(e) = args.epochs {
            lcfg.epochs = e;
        }
        let mut model = match &args.ckpt_in {
            Some(p) => load_lqi(p)?,
            None => LqiModel::new(spec.rows(), spec.cols(), &lcfg, seed)?,
        };
        rows = train_lqi(&mut model, &corpus.target_images, &lcfg, seed)?;
        save_lqi(&ckpt_path, &model)?;
    } else {
        let mut state = match &args.ckpt_in {
            Some(p) => DslrState::load(p, ctx.cfg.model.clone())?,
            None => DslrState::new(ctx.cfg.model.clone(), seed)?,
        };
        let configured = match args.phase {
            Phase::Ae => state.config.epochs_ae,
            Phase::Disc => state.config.epochs_disc,
            Phase::Adv => state.config.epochs_adv,
            Phase::Uda => state.config.epochs_uda,
            Phase::Lqi => unreachable!("handled above"),
        };
        let epochs = args.epochs.unwrap_or(configured);
        rows = match args.phase {
            Phase::Ae => train_autoencoder(&mut state, &corpus.statics, epochs, seed)?,
            Phase::Disc => {
                let r =
                    train_discriminator(&mut state, &corpus.statics, &corpus.dynamics, epochs, seed)?;
                let acc = disc_accuracy(&state, &corpus.statics, &corpus.dynamics)?;
                log::info!("discriminator pair accuracy on the training corpus: {acc:.3}");
                r
            }
            Phase::Adv => train_adversarial(&mut state, &corpus.pairs, epochs, seed)?,
            Phase::Uda => {
                let targets = load_target_vectors(args.target_scans.as_deref(), &spec)?;
                train_uda(&mut state, &corpus.pairs, &targets, epochs, seed)?
            }
            Phase::Lqi => unreachable!("handled above"),
        };
        state.save(&ckpt_path)?;
    }

    let log_path = ctx.out.join(format!("train_{}.csv", args.phase.name()));
    atomic_write_str(&log_path, &train_log_csv(&rows))
        .map_err(|e| CliError::io(format!("cannot write training log: {e}")))?;

    let final_loss = rows.last().map(|r| r.total).unwrap_or(f64::NAN);
    log::info!(
        "phase {} finished: {} epochs, final loss {final_loss}",
        args.phase.name(),
        rows.len()
    );
    println!(
        "train {}: {} epochs, final loss {final_loss:.6} -> {}",
        args.phase.name(),
        rows.len(),
        ckpt_path.display()
    );
    Ok(())
}
