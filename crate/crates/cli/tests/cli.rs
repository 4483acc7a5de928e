//! End-to-end tests of the `dslr` binary: the full pipeline on a small
//! synthetic scene, the error/exit-code contract, and rerun determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_dslr")
}

fn dslr(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env("DSLR_LOG", "error")
        .output()
        .expect("binary spawns")
}

fn run_ok(args: &[&str]) -> String {
    let out = dslr(args);
    assert!(
        out.status.success(),
        "dslr {:?} failed\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn run_fail(args: &[&str]) -> (i32, String) {
    let out = dslr(args);
    assert!(!out.status.success(), "dslr {args:?} unexpectedly succeeded");
    (
        out.status.code().expect("exit code"),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

/// A small but complete run configuration: 8x32 grid, short corridor sweep,
/// one crossing mover, stage epoch counts cut down for test speed.
const RUN_TOML: &str = r#"
seed = 5

[sensor]
rows = 8
cols = 32

[pairing]
mode = "all"

[model]
bottleneck = 8
enc_hidden = [48]
dec_hidden = [48]
disc_hidden = [24]
batch = 4
epochs_ae = 4
epochs_disc = 2
epochs_adv = 2
epochs_uda = 1

[lqi]
groups = 10
channels = 8
head_hidden = [24]
epochs = 2

[sim]
seed = 5
floor_z = 0.0

[sim.sensor]
rows = 8
cols = 32
fov_min_deg = -15.0
fov_max_deg = 15.0
max_range = 50.0

[sim.path]
waypoints = [[0.0, 0.0], [6.0, 0.0]]
height = 0.5
step = 0.5
jitter_trans = 0.05
jitter_rot_deg = 1.0

[[sim.wall]]
x1 = -2.0
y1 = -4.0
x2 = 8.0
y2 = -4.0
z_min = 0.0
z_max = 2.0

[[sim.wall]]
x1 = -2.0
y1 = 4.0
x2 = 8.0
y2 = 4.0
z_min = 0.0
z_max = 2.0

[[sim.wall]]
x1 = -2.0
y1 = -4.0
x2 = -2.0
y2 = 4.0
z_min = 0.0
z_max = 2.0

[[sim.wall]]
x1 = 8.0
y1 = -4.0
x2 = 8.0
y2 = 4.0
z_min = 0.0
z_max = 2.0

[[sim.box]]
half_extents = [0.4, 0.4, 0.8]
waypoints = [[0.0, 3.0, -2.0, 0.8], [1.3, 3.0, 2.0, 0.8]]
"#;

struct Fixture {
    #[allow(dead_code)]
    dir: tempfile::TempDir,
    config: PathBuf,
    root: PathBuf,
}

/// Writes the config and renders the paired runs + manifest once per test.
fn corpus() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let config = root.join("run.toml");
    std::fs::write(&config, RUN_TOML).unwrap();
    let cfg = config.to_str().unwrap();
    run_ok(&["simulate", "--config", cfg, "--out", root.join("sim").to_str().unwrap()]);
    run_ok(&[
        "pair",
        "--config",
        cfg,
        "--static",
        root.join("sim/static").to_str().unwrap(),
        "--dynamic",
        root.join("sim/dynamic").to_str().unwrap(),
        "--refine-seg",
        "--out",
        root.join("pairs").to_str().unwrap(),
    ]);
    Fixture { dir, config, root }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn pipeline_runs_end_to_end() {
    let fx = corpus();
    let cfg = p(&fx.config);
    let root = &fx.root;
    let manifest = root.join("pairs/pairs.tsv");
    assert!(manifest.is_file());

    // Stage chain: each phase checkpoints and the next resumes from it.
    let models = root.join("models");
    run_ok(&[
        "train", "--config", cfg, "--phase", "ae",
        "--manifest", p(&manifest), "--out", p(&models),
    ]);
    run_ok(&[
        "train", "--config", cfg, "--phase", "disc",
        "--manifest", p(&manifest),
        "--ckpt-in", p(&models.join("model_ae.ckpt")),
        "--out", p(&models),
    ]);
    run_ok(&[
        "train", "--config", cfg, "--phase", "adv",
        "--manifest", p(&manifest),
        "--ckpt-in", p(&models.join("model_disc.ckpt")),
        "--out", p(&models),
    ]);
    // No --target-scans: degenerate continuation is allowed and logged.
    run_ok(&[
        "train", "--config", cfg, "--phase", "uda",
        "--manifest", p(&manifest),
        "--ckpt-in", p(&models.join("model_adv.ckpt")),
        "--out", p(&models),
    ]);
    run_ok(&[
        "train", "--config", cfg, "--phase", "lqi",
        "--manifest", p(&manifest), "--out", p(&models),
    ]);
    for phase in ["ae", "disc", "adv", "uda", "lqi"] {
        assert!(models.join(format!("model_{phase}.ckpt")).is_file(), "{phase} checkpoint");
        let log = std::fs::read_to_string(models.join(format!("train_{phase}.csv"))).unwrap();
        assert!(log.starts_with("phase,epoch,total,mse,bce,mmd,disc_sd\n"), "{phase} log schema");
        assert!(log.lines().count() > 1, "{phase} log has rows");
    }

    // Translate the dynamic scans, full-frame and mask-confined.
    let recon = root.join("recon");
    run_ok(&[
        "reconstruct", "--config", cfg,
        "--ckpt", p(&models.join("model_uda.ckpt")),
        "--scans", p(&root.join("sim/dynamic")),
        "--out", p(&recon),
    ]);
    assert!(recon.join("scan_000000.rimg").is_file());
    assert!(recon.join("scan_000000.bin").is_file());
    let masked = root.join("recon_masked");
    run_ok(&[
        "reconstruct", "--config", cfg,
        "--ckpt", p(&models.join("model_uda.ckpt")),
        "--scans", p(&root.join("sim/dynamic")),
        "--seg-mask", p(&root.join("sim/dynamic")),
        "--out", p(&masked),
    ]);
    assert!(masked.join("scan_000000.rimg").is_file());

    // Scan-by-scan metrics against the originals, quality column included.
    let eval = root.join("eval");
    run_ok(&[
        "eval-recon", "--config", cfg,
        "--pred", p(&recon),
        "--gt", p(&root.join("sim/dynamic")),
        "--lqi-ckpt", p(&models.join("model_lqi.ckpt")),
        "--threads", "2",
        "--out", p(&eval),
    ]);
    let metrics = std::fs::read_to_string(eval.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("scan_id,cd_raw,cd_normalized,emd,emd_exact,lqi\n"));
    let rows: Vec<&str> = metrics.lines().skip(1).collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.starts_with("scan_")), "one row per scan stem");

    // Trajectory metrics, aligned and not.
    let tdir = root.join("traj");
    let est = root.join("sim/dynamic/trajectory.txt");
    let gt = root.join("sim/static/trajectory.txt");
    run_ok(&[
        "eval-traj", "--config", cfg,
        "--est", p(&est), "--gt", p(&gt),
        "--out", p(&tdir),
    ]);
    let tm = std::fs::read_to_string(tdir.join("traj_metrics.csv")).unwrap();
    assert!(tm.starts_with("metric,value\n"));
    assert!(tm.contains("ate_rmse,") && tm.contains("rpe_trans_rmse,") && tm.contains("drift_mean,"));
    run_ok(&[
        "eval-traj", "--config", cfg,
        "--est", p(&est), "--gt", p(&gt),
        "--no-align", "--delta", "2",
        "--out", p(&root.join("traj_unaligned")),
    ]);

    // Noise robustness study over the clean pair targets.
    let sweep = root.join("sweep");
    run_ok(&[
        "noise-sweep", "--config", cfg,
        "--scans", p(&root.join("pairs")),
        "--lqi-ckpt", p(&models.join("model_lqi.ckpt")),
        "--sigmas", "0,0.05",
        "--reps", "1",
        "--out", p(&sweep),
    ]);
    let csv = std::fs::read_to_string(sweep.join("sweep.csv")).unwrap();
    assert!(csv.starts_with("sigma,scan,rep,cd_normalized,lqi\n"));
    assert!(sweep.join("cd_vs_sigma.svg").is_file());
    assert!(sweep.join("lqi_vs_cd.svg").is_file());

    // Every command left its run records behind.
    for out in [&models, &recon, &eval, &tdir, &sweep] {
        let prov = std::fs::read_to_string(out.join("provenance.txt")).unwrap();
        assert!(prov.contains("config_sha256="), "provenance in {}", out.display());
        assert!(prov.contains("seed=5"), "seed recorded in {}", out.display());
        assert!(out.join("resolved_config.toml").is_file());
    }
}

#[test]
fn training_stages_refuse_to_run_out_of_order() {
    let fx = corpus();
    let manifest = fx.root.join("pairs/pairs.tsv");
    let (code, stderr) = run_fail(&[
        "train", "--config", p(&fx.config), "--phase", "adv",
        "--manifest", p(&manifest),
        "--out", p(&fx.root.join("models")),
    ]);
    assert_eq!(code, 3, "stderr: {stderr}");
    assert!(stderr.starts_with("error[validation]:"), "stderr: {stderr}");
    assert_eq!(stderr.lines().count(), 1, "single-line error: {stderr}");
}

#[test]
fn exit_codes_follow_the_error_contract() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");

    // Unknown flag: usage.
    let (code, stderr) = run_fail(&["simulate", "--bogus"]);
    assert_eq!(code, 1);
    assert!(stderr.starts_with("error[usage]:"), "stderr: {stderr}");

    // Unknown subcommand: usage.
    let (code, _) = run_fail(&["transmogrify"]);
    assert_eq!(code, 1);

    // Malformed sigma list: usage.
    let (code, stderr) = run_fail(&[
        "noise-sweep",
        "--scans", p(dir.path()),
        "--lqi-ckpt", "nope.ckpt",
        "--sigmas", "0,banana",
        "--out", p(&out),
    ]);
    assert_eq!(code, 1);
    assert!(stderr.starts_with("error[usage]:"), "stderr: {stderr}");

    // Missing config file: I/O.
    let (code, stderr) = run_fail(&["simulate", "--config", "absent.toml", "--out", p(&out)]);
    assert_eq!(code, 2, "stderr: {stderr}");
    assert!(stderr.starts_with("error[io]:"));

    // Unknown config key: validation.
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "sede = 1\n").unwrap();
    let (code, stderr) = run_fail(&["simulate", "--config", p(&bad), "--out", p(&out)]);
    assert_eq!(code, 3);
    assert!(stderr.starts_with("error[validation]:"));
}

#[test]
fn exploding_training_reports_divergence() {
    let fx = corpus();
    let diverging = fx.root.join("diverge.toml");
    // Same corpus config but an absurd learning rate.
    let patched = RUN_TOML.replace("batch = 4", "batch = 4\nlr = 1e100");
    assert_ne!(patched, RUN_TOML, "patch applied");
    std::fs::write(&diverging, patched).unwrap();
    let (code, stderr) = run_fail(&[
        "train", "--config", p(&diverging), "--phase", "ae",
        "--manifest", p(&fx.root.join("pairs/pairs.tsv")),
        "--out", p(&fx.root.join("models")),
    ]);
    assert_eq!(code, 4, "stderr: {stderr}");
    assert!(stderr.starts_with("error[diverged]:"), "stderr: {stderr}");
}

#[test]
fn reruns_write_byte_identical_outputs() {
    let fx = corpus();
    let cfg = p(&fx.config);
    let root = &fx.root;

    // Rerunning simulate into a second directory reproduces every byte.
    run_ok(&["simulate", "--config", cfg, "--out", p(&root.join("sim2"))]);
    for rel in ["static/scan_000000.bin", "static/trajectory.txt", "dynamic/mask_000001.pbm"] {
        let a = std::fs::read(root.join("sim").join(rel)).unwrap();
        let b = std::fs::read(root.join("sim2").join(rel)).unwrap();
        assert_eq!(a, b, "{rel} differs between reruns");
    }

    // Same for pairing (manifest + rendered targets)...
    run_ok(&[
        "pair", "--config", cfg,
        "--static", p(&root.join("sim/static")),
        "--dynamic", p(&root.join("sim/dynamic")),
        "--refine-seg",
        "--out", p(&root.join("pairs2")),
    ]);
    for rel in ["pairs.tsv", "pair_000000.rimg"] {
        let a = std::fs::read(root.join("pairs").join(rel)).unwrap();
        let b = std::fs::read(root.join("pairs2").join(rel)).unwrap();
        assert_eq!(a, b, "{rel} differs between reruns");
    }

    // ...and for a training stage (checkpoint + log).
    for out in ["models_a", "models_b"] {
        run_ok(&[
            "train", "--config", cfg, "--phase", "ae",
            "--manifest", p(&root.join("pairs/pairs.tsv")),
            "--out", p(&root.join(out)),
        ]);
    }
    for rel in ["model_ae.ckpt", "train_ae.csv"] {
        let a = std::fs::read(root.join("models_a").join(rel)).unwrap();
        let b = std::fs::read(root.join("models_b").join(rel)).unwrap();
        assert_eq!(a, b, "{rel} differs between reruns");
    }

    // A different seed changes the artifacts.
    run_ok(&["simulate", "--config", cfg, "--seed", "6", "--out", p(&root.join("sim3"))]);
    let a = std::fs::read(root.join("sim/static/scan_000000.bin")).unwrap();
    let b = std::fs::read(root.join("sim3/static/scan_000000.bin")).unwrap();
    assert_ne!(a, b, "seed override must reach the simulator");
}

#[test]
fn log_level_env_controls_verbosity() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), RUN_TOML).unwrap();
    let out = Command::new(bin())
        .args([
            "simulate",
            "--config", p(&dir.path().join("run.toml")),
            "--out", p(&dir.path().join("sim")),
        ])
        .env("DSLR_LOG", "debug")
        .output()
        .unwrap();
    assert!(out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("resolved config"), "debug log shows the config: {stderr}");
    assert!(
        String::from_utf8_lossy(&out.stdout).contains("simulate:"),
        "summary goes to stdout"
    );
}
