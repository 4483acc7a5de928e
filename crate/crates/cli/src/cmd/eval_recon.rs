//! `dslr eval-recon`: per-scan geometric comparison of a prediction
//! directory against a reference directory, matched by file stem.
//!
//! This is the one place the CLI parallelizes: scans are independent, so the
//! per-scan metric work fans out over `--threads` workers while the output
//! row order stays fixed by index.

use std::path::{Path, PathBuf};

use dslr_core::fsutil::atomic_write_str;
use dslr_core::metrics::{chamfer, emd, recon_report_csv, EmdOptions, ReconRow};
use dslr_core::model::{load_lqi, load_scan_as_image, LqiModel};
use dslr_core::rngutil::{derive_seed, stream};
use dslr_core::scan::{deproject, load_cloud, load_range_image, PointCloud, SensorSpec};

use crate::errors::CliError;
use crate::runctx::{list_scan_files, stem_of, RunCtx};
use crate::EvalReconArgs;

/// Loads the evaluation cloud. Range images are deprojected; point-cloud
/// binaries are used as stored, without a lossy grid round trip.
fn load_eval_cloud(path: &Path) -> Result<PointCloud, CliError> {
    if path.extension().is_some_and(|e| e == "rimg") {
        Ok(deproject(&load_range_image(path)?.0))
    } else {
        Ok(load_cloud(path)?)
    }
}

fn eval_one(
    stem: &str,
    pred: &Path,
    gt: &Path,
    spec: &SensorSpec,
    lqi: Option<&LqiModel>,
    emd_seed: u64,
) -> Result<ReconRow, CliError> {
    let pred_cloud = load_eval_cloud(pred)?;
    let gt_cloud = load_eval_cloud(gt)?;
    let cd = chamfer(&pred_cloud, &gt_cloud)?;
    let opts = EmdOptions { resample_seed: Some(emd_seed), ..EmdOptions::default() };
    let e = emd(&pred_cloud, &gt_cloud, &opts)?;
    let lqi_score = match lqi {
        Some(model) => model.predict(&load_scan_as_image(pred, spec)?)?,
        None => f64::NAN,
    };
    Ok(ReconRow {
        scan_id: stem.to_string(),
        cd_raw: cd.raw,
        cd_normalized: cd.normalized,
        emd: e.value,
        emd_exact: e.exact,
        lqi: lqi_score,
    })
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

pub fn run(ctx: &RunCtx, args: &EvalReconArgs) -> Result<(), CliError> {
    let spec = ctx.cfg.sensor.to_spec()?;
    let pred_files = list_scan_files(&args.pred)?;
    let gt_files = list_scan_files(&args.gt)?;

    // One entry per stem on both sides. The listing is name-sorted, so when
    // a stem exists as both .bin and .rimg the range image wins (it is what
    // the quality regressor scores).
    let pred_by_stem: std::collections::BTreeMap<String, &PathBuf> =
        pred_files.iter().map(|p| (stem_of(p), p)).collect();
    let gt_by_stem: std::collections::BTreeMap<String, &PathBuf> =
        gt_files.iter().map(|p| (stem_of(p), p)).collect();
    let tasks: Vec<(String, &PathBuf, &PathBuf)> = pred_by_stem
        .iter()
        .filter_map(|(stem, p)| gt_by_stem.get(stem).map(|g| (stem.clone(), *p, *g)))
        .collect();
    if tasks.is_empty() {
        return Err(CliError::validation(format!(
            "no file stems shared between {} and {}",
            args.pred.display(),
            args.gt.display()
        )));
    }
    if tasks.len() < pred_by_stem.len() {
        log::warn!(
            "{} predicted scans have no reference and were skipped",
            pred_by_stem.len() - tasks.len()
        );
    }

    let lqi = match &args.lqi_ckpt {
        Some(p) => Some(load_lqi(p)?),
        None => None,
    };
    ctx.write_run_records("eval-recon")?;

    let n = tasks.len();
    let workers = ctx.cfg.threads.max(1).min(n);
    let chunk = n.div_ceil(workers);
    let mut results: Vec<Option<Result<ReconRow, CliError>>> = (0..n).map(|_| None).collect();
    let seed = ctx.cfg.seed;
    std::thread::scope(|s| {
        for (w, slots) in results.chunks_mut(chunk).enumerate() {
            let start = w * chunk;
            let tasks = &tasks[start..(start + slots.len())];
            let spec = &spec;
            let lqi = lqi.as_ref();
            s.spawn(move || {
                for (i, (slot, (stem, pred, gt))) in slots.iter_mut().zip(tasks).enumerate() {
                    let emd_seed = derive_seed(seed, stream::EMD_RESAMPLE, (start + i) as u64);
                    *slot = Some(eval_one(stem, pred, gt, spec, lqi, emd_seed));
                }
            });
        }
    });

    let mut rows = Vec::with_capacity(n);
    for slot in results {
        rows.push(slot.expect("every task slot is filled")?);
    }

    atomic_write_str(&ctx.out.join("metrics.csv"), &recon_report_csv(&rows))
        .map_err(|e| CliError::io(format!("cannot write metrics: {e}")))?;

    let med_cd = median(rows.iter().map(|r| r.cd_normalized).collect());
    let med_emd = median(rows.iter().map(|r| r.emd).collect());
    log::info!("median normalized chamfer {med_cd}, median emd {med_emd}");
    println!(
        "eval-recon: {n} scans, median cd {med_cd:.6}, median emd {med_emd:.6} -> {}",
        ctx.out.join("metrics.csv").display()
    );
    Ok(())
}
