pub mod eval_recon;
pub mod eval_traj;
pub mod noise_sweep;
pub mod pair;
pub mod reconstruct;
pub mod simulate;
pub mod train;
