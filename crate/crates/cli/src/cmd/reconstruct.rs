//! `dslr reconstruct`: translates dynamic scans to their static
//! reconstruction, optionally confined to segmentation-masked cells.
//!
//! Each input scan produces `<stem>.rimg` and a deprojected `<stem>.bin`
//! point cloud in the output directory, so a reconstruction directory can be
//! compared against any reference directory by file stem.

use std::path::{Path, PathBuf};

use dslr_core::model::{load_scan_as_image, DslrState};
use dslr_core::scan::{deproject, load_mask_pbm, save_cloud, save_range_image};

use crate::errors::CliError;
use crate::runctx::{list_scan_files, stem_of, RunCtx};
use crate::ReconstructArgs;

/// Finds the mask for a scan: `<stem>.pbm`, or the simulator's
/// `mask_<index>.pbm` convention when the scan is named `scan_<index>`.
fn mask_path_for(mask_dir: &Path, stem: &str) -> Result<PathBuf, CliError> {
    let direct = mask_dir.join(format!("{stem}.pbm"));
    if direct.is_file() {
        return Ok(direct);
    }
    if let Some(suffix) = stem.strip_prefix("scan_") {
        let sim_style = mask_dir.join(format!("mask_{suffix}.pbm"));
        if sim_style.is_file() {
            return Ok(sim_style);
        }
    }
    Err(CliError::validation(format!(
        "no segmentation mask for scan '{stem}' in {}",
        mask_dir.display()
    )))
}

pub fn run(ctx: &RunCtx, args: &ReconstructArgs) -> Result<(), CliError> {
    let spec = ctx.cfg.sensor.to_spec()?;
    let state = DslrState::load(&args.ckpt, ctx.cfg.model.clone())?;
    let files = list_scan_files(&args.scans)?;
    ctx.write_run_records("reconstruct")?;

    for file in &files {
        let stem = stem_of(file);
        let image = load_scan_as_image(file, &spec)?;
        let recon = match &args.seg_mask {
            Some(mask_dir) => {
                let mask = load_mask_pbm(&mask_path_for(mask_dir, &stem)?)?;
                state.translate_masked(&image, &mask)?
            }
            None => state.reconstruct(&image)?,
        };
        save_range_image(&ctx.out.join(format!("{stem}.rimg")), &recon, None)?;
        save_cloud(&ctx.out.join(format!("{stem}.bin")), &deproject(&recon))?;
    }

    log::info!(
        "reconstructed {} scans (masked: {})",
        files.len(),
        args.seg_mask.is_some()
    );
    println!("reconstruct: {} scans -> {}", files.len(), ctx.out.display());
    Ok(())
}
