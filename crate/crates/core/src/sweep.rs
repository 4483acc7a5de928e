//! Noise-robustness study: degrade clean scans with increasing range noise
//! and record how geometric error and the learned quality score respond.
//!
//! For every `(sigma, scan, repetition)` cell the study adds zero-mean
//! Gaussian range noise, measures the normalized chamfer distance back to
//! the clean scan, and asks the quality regressor for its noise estimate.
//! The rows serialize to a CSV plus two scatter plots (error vs. noise,
//! quality score vs. error), all with deterministic bytes for a given seed.

use std::path::Path;

use thiserror::Error;

use crate::fsutil::atomic_write_str;
use crate::metrics::{chamfer, MetricError};
use crate::model::{LqiModel, ModelError};
use crate::rngutil::{derive_seed, stream};
use crate::scan::{deproject, RangeImage, ScanError};
use crate::svg::ScatterPlot;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("noise sweep needs at least one input scan")]
    NoScans,
    #[error("noise sweep needs at least one sigma value")]
    NoSigmas,
    #[error("sigma values must be finite and non-negative, got {0}")]
    BadSigma(f64),
    #[error("noise sweep needs at least one repetition per sigma")]
    NoReps,
    #[error("scan '{0}' has no occupied cells")]
    EmptyScan(String),
    #[error(transparent)]
    Scan(#[from] ScanError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One `(sigma, scan, repetition)` cell of the study.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub sigma: f64,
    pub scan: String,
    pub rep: u32,
    /// Normalized chamfer distance between the degraded scan and its
    /// clean original (exactly zero at sigma = 0).
    pub cd_normalized: f64,
    /// Noise level predicted by the quality regressor.
    pub lqi: f64,
}

/// Runs the full sweep grid. Each cell draws its noise from an independent
/// stream derived from `seed` and the cell's flat index, so reruns with the
/// same inputs reproduce every row bit for bit.
pub fn run_noise_sweep(
    scans: &[(String, RangeImage)],
    sigmas: &[f64],
    reps: u32,
    model: &LqiModel,
    seed: u64,
) -> Result<Vec<SweepRow>, SweepError> {
    if scans.is_empty() {
        return Err(SweepError::NoScans);
    }
    if sigmas.is_empty() {
        return Err(SweepError::NoSigmas);
    }
    if reps == 0 {
        return Err(SweepError::NoReps);
    }
    for &s in sigmas {
        if !s.is_finite() || s < 0.0 {
            return Err(SweepError::BadSigma(s));
        }
    }
    for (id, img) in scans {
        if !img.occupancy().iter().any(|&o| o) {
            return Err(SweepError::EmptyScan(id.clone()));
        }
    }

    let mut rows = Vec::with_capacity(sigmas.len() * scans.len() * reps as usize);
    let mut cell = 0u64;
    for &sigma in sigmas {
        for (id, img) in scans {
            let clean = deproject(img);
            for rep in 0..reps {
                let noise_seed = derive_seed(seed, stream::SWEEP_NOISE, cell);
                cell += 1;
                let noisy = img.add_noise(sigma, noise_seed)?;
                let cd = chamfer(&deproject(&noisy), &clean)?.normalized;
                let lqi = model.predict(&noisy)?;
                rows.push(SweepRow { sigma, scan: id.clone(), rep, cd_normalized: cd, lqi });
            }
        }
    }
    Ok(rows)
}

/// CSV serialization of the sweep (deterministic bytes).
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("sigma,scan,rep,cd_normalized,lqi\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.sigma, r.scan, r.rep, r.cd_normalized, r.lqi
        ));
    }
    out
}

/// Median normalized chamfer per sigma level, in ascending sigma order.
/// Useful for the monotone-degradation check and for run summaries.
pub fn median_cd_by_sigma(rows: &[SweepRow]) -> Vec<(f64, f64)> {
    let mut sigmas: Vec<f64> = rows.iter().map(|r| r.sigma).collect();
    sigmas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sigmas.dedup();
    sigmas
        .into_iter()
        .map(|s| {
            let mut cds: Vec<f64> =
                rows.iter().filter(|r| r.sigma == s).map(|r| r.cd_normalized).collect();
            cds.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = cds.len();
            let med = if n % 2 == 1 { cds[n / 2] } else { 0.5 * (cds[n / 2 - 1] + cds[n / 2]) };
            (s, med)
        })
        .collect()
}

/// Scatter plot of geometric error against injected noise level.
pub fn cd_vs_sigma_plot(rows: &[SweepRow]) -> ScatterPlot {
    let mut plot = ScatterPlot::new(
        "range noise vs. reconstruction error",
        "noise sigma (m)",
        "normalized chamfer (m)",
    );
    plot.add_series("samples", rows.iter().map(|r| (r.sigma, r.cd_normalized)).collect());
    plot.add_series("median", median_cd_by_sigma(rows));
    plot
}

/// Scatter plot of the predicted quality score against measured error.
pub fn lqi_vs_cd_plot(rows: &[SweepRow]) -> ScatterPlot {
    let mut plot = ScatterPlot::new(
        "quality score vs. geometric error",
        "normalized chamfer (m)",
        "predicted noise (m)",
    );
    plot.add_series("samples", rows.iter().map(|r| (r.cd_normalized, r.lqi)).collect());
    plot
}

/// Writes the study artifacts (`sweep.csv`, `cd_vs_sigma.svg`,
/// `lqi_vs_cd.svg`) into `out_dir` with atomic replacement.
pub fn write_sweep_outputs(out_dir: &Path, rows: &[SweepRow]) -> Result<(), SweepError> {
    std::fs::create_dir_all(out_dir)?;
    atomic_write_str(&out_dir.join("sweep.csv"), &sweep_csv(rows))?;
    atomic_write_str(&out_dir.join("cd_vs_sigma.svg"), &cd_vs_sigma_plot(rows).render())?;
    atomic_write_str(&out_dir.join("lqi_vs_cd.svg"), &lqi_vs_cd_plot(rows).render())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::spearman;
    use crate::model::{train_lqi, LqiConfig};
    use crate::scan::SensorSpec;

    const ROWS: usize = 8;
    const COLS: usize = 16;

    fn spec() -> SensorSpec {
        SensorSpec::new(ROWS, COLS, -15.0, 15.0, 50.0).unwrap()
    }

    fn base_images(n: usize) -> Vec<(String, RangeImage)> {
        let spec = spec();
        (0..n)
            .map(|k| {
                let ranges: Vec<f32> = (0..ROWS * COLS)
                    .map(|i| {
                        (10.0 + 8.0 * (0.23 * (i + 13 * k) as f64).sin().abs() + (k % 16) as f64)
                            as f32
                    })
                    .collect();
                let occ = vec![true; ROWS * COLS];
                (format!("scan_{k:03}"), RangeImage::from_parts(spec, ranges, occ).unwrap())
            })
            .collect()
    }

    fn quick_model() -> LqiModel {
        let cfg = LqiConfig {
            groups: 10,
            channels: 8,
            head_hidden: vec![32],
            ..LqiConfig::default()
        };
        let mut model = LqiModel::new(ROWS, COLS, &cfg, 99).unwrap();
        let bases: Vec<RangeImage> = base_images(4).into_iter().map(|(_, im)| im).collect();
        let images: Vec<RangeImage> = (0..256).map(|i| bases[i % bases.len()].clone()).collect();
        train_lqi(&mut model, &images, &cfg, 99).unwrap();
        model
    }

    #[test]
    fn zero_noise_rows_report_exactly_zero_error() {
        let model = quick_model();
        let scans = base_images(3);
        let rows = run_noise_sweep(&scans, &[0.0, 0.05], 2, &model, 7).unwrap();
        assert_eq!(rows.len(), 2 * 3 * 2);
        for r in rows.iter().filter(|r| r.sigma == 0.0) {
            assert_eq!(r.cd_normalized, 0.0);
            assert!(r.lqi.is_finite());
        }
        for r in rows.iter().filter(|r| r.sigma > 0.0) {
            assert!(r.cd_normalized > 0.0);
        }
    }

    #[test]
    fn median_error_is_monotone_in_noise_level() {
        let model = quick_model();
        let scans = base_images(4);
        let sigmas = [0.0, 0.02, 0.06, 0.12];
        let rows = run_noise_sweep(&scans, &sigmas, 5, &model, 11).unwrap();
        let medians = median_cd_by_sigma(&rows);
        assert_eq!(medians.len(), sigmas.len());
        for w in medians.windows(2) {
            assert!(
                w[1].1 >= w[0].1,
                "median cd fell from {} (sigma {}) to {} (sigma {})",
                w[0].1,
                w[0].0,
                w[1].1,
                w[1].0
            );
        }
    }

    #[test]
    fn quality_score_tracks_geometric_error() {
        let model = quick_model();
        let scans = base_images(4);
        let sigmas = [0.0, 0.02, 0.05, 0.09, 0.13];
        let rows = run_noise_sweep(&scans, &sigmas, 4, &model, 23).unwrap();
        let lqi: Vec<f64> = rows.iter().map(|r| r.lqi).collect();
        let cd: Vec<f64> = rows.iter().map(|r| r.cd_normalized).collect();
        let rho = spearman(&lqi, &cd).unwrap();
        assert!(rho > 0.8, "spearman(lqi, cd) = {rho}");
    }

    #[test]
    fn artifacts_are_deterministic_bytes() {
        let model = quick_model();
        let scans = base_images(2);
        let sigmas = [0.0, 0.08];
        let a = run_noise_sweep(&scans, &sigmas, 2, &model, 42).unwrap();
        let b = run_noise_sweep(&scans, &sigmas, 2, &model, 42).unwrap();
        assert_eq!(sweep_csv(&a), sweep_csv(&b));
        assert!(sweep_csv(&a).starts_with("sigma,scan,rep,cd_normalized,lqi\n"));
        assert_eq!(cd_vs_sigma_plot(&a).render(), cd_vs_sigma_plot(&b).render());

        let dir = tempfile::tempdir().unwrap();
        write_sweep_outputs(dir.path(), &a).unwrap();
        let first = std::fs::read(dir.path().join("sweep.csv")).unwrap();
        write_sweep_outputs(dir.path(), &b).unwrap();
        let second = std::fs::read(dir.path().join("sweep.csv")).unwrap();
        assert_eq!(first, second);
        for name in ["cd_vs_sigma.svg", "lqi_vs_cd.svg"] {
            let svg = std::fs::read_to_string(dir.path().join(name)).unwrap();
            assert!(svg.ends_with("</svg>\n"), "{name} is not a complete svg");
        }

        // A different seed must change the degraded samples.
        let c = run_noise_sweep(&scans, &sigmas, 2, &model, 43).unwrap();
        assert_ne!(sweep_csv(&a), sweep_csv(&c));
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let model = quick_model();
        let scans = base_images(2);
        assert!(matches!(
            run_noise_sweep(&[], &[0.1], 1, &model, 1),
            Err(SweepError::NoScans)
        ));
        assert!(matches!(
            run_noise_sweep(&scans, &[], 1, &model, 1),
            Err(SweepError::NoSigmas)
        ));
        assert!(matches!(
            run_noise_sweep(&scans, &[0.1], 0, &model, 1),
            Err(SweepError::NoReps)
        ));
        assert!(matches!(
            run_noise_sweep(&scans, &[-0.1], 1, &model, 1),
            Err(SweepError::BadSigma(_))
        ));
        assert!(matches!(
            run_noise_sweep(&scans, &[f64::NAN], 1, &model, 1),
            Err(SweepError::BadSigma(_))
        ));

        let empty = RangeImage::empty(spec());
        let err = run_noise_sweep(&[("void".into(), empty)], &[0.1], 1, &model, 1);
        assert!(matches!(err, Err(SweepError::EmptyScan(_))));
    }
}
