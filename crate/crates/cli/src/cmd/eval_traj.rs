//! `dslr eval-traj`: absolute and relative trajectory error between two TUM
//! files, plus world-frame drift.

use dslr_core::fsutil::atomic_write_str;
use dslr_core::traj::{ate, ate_unaligned, drift, load_tum, rpe};

use crate::errors::CliError;
use crate::runctx::RunCtx;
use crate::EvalTrajArgs;

pub fn run(ctx: &RunCtx, args: &EvalTrajArgs) -> Result<(), CliError> {
    let est = load_tum(&args.est)?;
    let gt = load_tum(&args.gt)?;
    let a = if args.no_align {
        ate_unaligned(&est, &gt, args.max_dt)?
    } else {
        ate(&est, &gt, args.max_dt)?
    };
    let r = rpe(&est, &gt, args.delta, args.max_dt)?;
    let d = drift(&est, &gt, args.max_dt)?;
    ctx.write_run_records("eval-traj")?;

    let mut csv = String::from("metric,value\n");
    for (name, value) in [
        ("ate_rmse", a.rmse),
        ("ate_mean", a.mean),
        ("ate_median", a.median),
        ("ate_max", a.max),
        ("ate_matched", a.matched as f64),
        ("rpe_trans_rmse", r.trans_rmse),
        ("rpe_rot_mean_deg", r.rot_mean_deg),
        ("rpe_samples", r.samples as f64),
        ("drift_mean", d),
        ("rpe_delta", args.delta as f64),
        ("aligned", if args.no_align { 0.0 } else { 1.0 }),
    ] {
        csv.push_str(&format!("{name},{value}\n"));
    }
    atomic_write_str(&ctx.out.join("traj_metrics.csv"), &csv)
        .map_err(|e| CliError::io(format!("cannot write trajectory metrics: {e}")))?;

    log::info!(
        "ate rmse {} ({} poses, aligned={}), rpe trans rmse {}, rot mean {} deg",
        a.rmse,
        a.matched,
        !args.no_align,
        r.trans_rmse,
        r.rot_mean_deg
    );
    println!(
        "eval-traj: ate_rmse {:.6}, rpe_trans_rmse {:.6}, drift {:.6} -> {}",
        a.rmse,
        r.trans_rmse,
        d,
        ctx.out.join("traj_metrics.csv").display()
    );
    Ok(())
}
