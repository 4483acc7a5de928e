//! `dslr pair`: matches viewpoints between a static and a dynamic run and
//! writes the training manifest plus rendered targets.

use dslr_core::pairing::{pair_runs, split_manifest, PairingOptions};

use crate::errors::CliError;
use crate::runctx::RunCtx;
use crate::PairArgs;

fn parse_split(text: &str) -> Result<(f64, f64, f64), CliError> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::usage(format!("--split: {e}")))?;
    if parts.len() != 3 {
        return Err(CliError::usage(format!(
            "--split needs exactly three ratios, got {}",
            parts.len()
        )));
    }
    Ok((parts[0], parts[1], parts[2]))
}

pub fn run(ctx: &RunCtx, args: &PairArgs) -> Result<(), CliError> {
    let spec = ctx.cfg.sensor.to_spec()?;
    let opts = PairingOptions {
        thresholds: ctx.cfg.pairing.to_thresholds()?,
        refine_with_masks: args.refine_seg,
    };
    ctx.write_run_records("pair")?;
    let manifest = pair_runs(&args.static_dir, &args.dynamic_dir, &ctx.out, &spec, &opts)?;
    log::info!(
        "matched {} pairs (mode {:?}, refine_seg={})",
        manifest.records.len(),
        opts.thresholds.mode,
        args.refine_seg
    );

    if let Some(split) = &args.split {
        let ratios = parse_split(split)?;
        let (train, val, test) = split_manifest(&manifest, ratios, ctx.cfg.seed)?;
        for (name, part) in
            [("pairs_train.tsv", &train), ("pairs_val.tsv", &val), ("pairs_test.tsv", &test)]
        {
            part.save(&ctx.out.join(name))?;
        }
        log::info!(
            "split {} / {} / {} pairs into train / val / test",
            train.records.len(),
            val.records.len(),
            test.records.len()
        );
    }

    println!(
        "pair: {} pairs -> {}",
        manifest.records.len(),
        ctx.out.join("pairs.tsv").display()
    );
    Ok(())
}
