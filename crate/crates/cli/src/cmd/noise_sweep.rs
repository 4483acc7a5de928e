//! `dslr noise-sweep`: degrades clean scans across a noise grid and records
//! geometric error plus the quality regressor's score for each cell.

use dslr_core::metrics::spearman;
use dslr_core::model::{load_lqi, load_scan_as_image};
use dslr_core::scan::RangeImage;
use dslr_core::sweep::{median_cd_by_sigma, run_noise_sweep, write_sweep_outputs};

use crate::errors::CliError;
use crate::runctx::{list_scan_files, stem_of, RunCtx};
use crate::NoiseSweepArgs;

fn parse_sigmas(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| CliError::usage(format!("--sigmas: {e} in {p:?}")))
        })
        .collect()
}

pub fn run(ctx: &RunCtx, args: &NoiseSweepArgs) -> Result<(), CliError> {
    let spec = ctx.cfg.sensor.to_spec()?;
    let sigmas = parse_sigmas(&args.sigmas)?;
    let model = load_lqi(&args.lqi_ckpt)?;
    let files = list_scan_files(&args.scans)?;
    let scans: Vec<(String, RangeImage)> = files
        .iter()
        .map(|p| Ok((stem_of(p), load_scan_as_image(p, &spec)?)))
        .collect::<Result<_, CliError>>()?;
    ctx.write_run_records("noise-sweep")?;

    let rows = run_noise_sweep(&scans, &sigmas, args.reps, &model, ctx.cfg.seed)?;
    write_sweep_outputs(&ctx.out, &rows)?;

    for (sigma, med) in median_cd_by_sigma(&rows) {
        log::info!("sigma {sigma}: median normalized chamfer {med}");
    }
    let lqi: Vec<f64> = rows.iter().map(|r| r.lqi).collect();
    let cd: Vec<f64> = rows.iter().map(|r| r.cd_normalized).collect();
    let rho = spearman(&lqi, &cd).unwrap_or(f64::NAN);
    log::info!("spearman(quality score, chamfer) = {rho}");
    println!(
        "noise-sweep: {} cells, spearman(lqi, cd) {rho:.4} -> {}",
        rows.len(),
        ctx.out.join("sweep.csv").display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_lists_parse_strictly() {
        assert_eq!(parse_sigmas("0,0.05, 0.1").unwrap(), vec![0.0, 0.05, 0.1]);
        assert!(parse_sigmas("0,x").is_err());
    }
}
