//! `dslr simulate`: renders a paired static/dynamic scan sequence.

use dslr_core::sim::{desk_sim_config, generate_paired_runs};

use crate::errors::CliError;
use crate::runctx::RunCtx;

pub fn run(ctx: &RunCtx) -> Result<(), CliError> {
    let mut sim_cfg = match &ctx.cfg.sim {
        Some(c) => c.clone(),
        None => {
            log::info!("no [sim] section: using the built-in desk scene");
            desk_sim_config(ctx.cfg.seed)
        }
    };
    if ctx.seed_explicit {
        sim_cfg.seed = ctx.cfg.seed;
    }
    let scene_spec = sim_cfg.sensor.to_spec()?;
    if scene_spec != ctx.cfg.sensor.to_spec()? {
        log::warn!(
            "[sim.sensor] differs from [sensor]; downstream commands will \
             project with the [sensor] geometry"
        );
    }
    ctx.write_run_records("simulate")?;
    let summary = generate_paired_runs(&sim_cfg, &ctx.out)?;
    log::info!(
        "rendered {} scans per run into {} and {}",
        summary.scans_per_run,
        summary.static_dir.display(),
        summary.dynamic_dir.display()
    );
    println!(
        "simulate: {} scans per run -> {}",
        summary.scans_per_run,
        ctx.out.display()
    );
    Ok(())
}
