//! Reconstruction-quality metrics: Chamfer distance, exact and approximate
//! EMD, kernel MMD^2, and rank correlation.

mod assignment;
mod kdtree;

pub use assignment::solve_assignment;
pub use kdtree::KdTree3;

use kdtree::sq_dist;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::rngutil::{rng_for, stream};
use crate::scan::PointCloud;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("empty input")]
    EmptyInput,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("point sets have sizes {a} and {b}; enable resampling to compare them")]
    SizeMismatch { a: usize, b: usize },
    #[error("set size {size} exceeds exact-EMD cap {cap}; enable resampling or the approximate fallback")]
    CapExceeded { size: usize, cap: usize },
    #[error("non-finite value in input")]
    NonFinite,
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

/// Below this size a directed chamfer pass queries by brute force instead of
/// building a tree.
const KD_MIN_TARGET: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChamferResult {
    /// Sum over both directions of squared nearest-neighbor distances.
    pub raw: f64,
    /// Each directed sum divided by its source-set size.
    pub normalized: f64,
}

fn positions(cloud: &PointCloud) -> Result<Vec<[f64; 3]>, MetricError> {
    if cloud.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let mut out = Vec::with_capacity(cloud.len());
    for p in &cloud.points {
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
            return Err(MetricError::NonFinite);
        }
        out.push([p.x, p.y, p.z]);
    }
    Ok(out)
}

fn directed_sq_sum(from: &[[f64; 3]], to: &[[f64; 3]]) -> f64 {
    if to.len() < KD_MIN_TARGET {
        from.iter()
            .map(|q| to.iter().map(|p| sq_dist(p, q)).fold(f64::INFINITY, f64::min))
            .sum()
    } else {
        let tree = KdTree3::build(to).expect("non-empty");
        from.iter().map(|q| tree.nearest_sq(q)).sum()
    }
}

/// Symmetric Chamfer distance between two clouds (squared-distance form).
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<ChamferResult, MetricError> {
    let pa = positions(a)?;
    let pb = positions(b)?;
    let ab = directed_sq_sum(&pa, &pb);
    let ba = directed_sq_sum(&pb, &pa);
    Ok(ChamferResult {
        raw: ab + ba,
        normalized: ab / pa.len() as f64 + ba / pb.len() as f64,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct SinkhornParams {
    /// Entropic regularization, relative to the largest pairwise cost.
    pub epsilon: f64,
    pub max_iters: usize,
    /// Marginal violation at which iteration stops.
    pub tolerance: f64,
}

impl Default for SinkhornParams {
    fn default() -> Self {
        SinkhornParams {
            epsilon: 0.02,
            max_iters: 2000,
            tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EmdOptions {
    /// Largest set size solved exactly (O(n^3) assignment).
    pub cap: usize,
    /// Seeded uniform resampling-with-replacement to min(|a|, |b|, cap).
    pub resample_seed: Option<u64>,
    /// Entropic-transport fallback for equal-size sets above the cap.
    pub sinkhorn: Option<SinkhornParams>,
}

impl Default for EmdOptions {
    fn default() -> Self {
        EmdOptions {
            cap: 256,
            resample_seed: None,
            sinkhorn: None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EmdResult {
    pub value: f64,
    /// True when no resampling or approximation touched the inputs.
    pub exact: bool,
    /// Set size actually compared.
    pub size_used: usize,
}

/// Exact earth mover's distance (sum of matched Euclidean distances) via the
/// assignment solver. Requires equally sized, non-empty clouds.
pub fn emd_exact(a: &PointCloud, b: &PointCloud) -> Result<f64, MetricError> {
    let pa = positions(a)?;
    let pb = positions(b)?;
    if pa.len() != pb.len() {
        return Err(MetricError::SizeMismatch {
            a: pa.len(),
            b: pb.len(),
        });
    }
    emd_of(&pa, &pb)
}

fn emd_of(pa: &[[f64; 3]], pb: &[[f64; 3]]) -> Result<f64, MetricError> {
    let cost: Vec<Vec<f64>> = pa
        .iter()
        .map(|p| pb.iter().map(|q| sq_dist(p, q).sqrt()).collect())
        .collect();
    let (_, total) = solve_assignment(&cost)?;
    Ok(total)
}

/// EMD with the spec'd size policy: exact when sizes match and fit the cap,
/// seeded resampling when allowed, entropic fallback above the cap.
pub fn emd(a: &PointCloud, b: &PointCloud, opts: &EmdOptions) -> Result<EmdResult, MetricError> {
    let pa = positions(a)?;
    let pb = positions(b)?;
    if opts.cap == 0 {
        return Err(MetricError::InvalidParam("emd cap must be > 0".into()));
    }
    if pa.len() == pb.len() && pa.len() <= opts.cap {
        return Ok(EmdResult {
            value: emd_of(&pa, &pb)?,
            exact: true,
            size_used: pa.len(),
        });
    }
    if let Some(seed) = opts.resample_seed {
        let m = pa.len().min(pb.len()).min(opts.cap);
        let mut rng = rng_for(seed, stream::EMD_RESAMPLE, 0);
        let sa = resample(&pa, m, &mut rng);
        let sb = resample(&pb, m, &mut rng);
        return Ok(EmdResult {
            value: emd_of(&sa, &sb)?,
            exact: false,
            size_used: m,
        });
    }
    if pa.len() != pb.len() {
        return Err(MetricError::SizeMismatch {
            a: pa.len(),
            b: pb.len(),
        });
    }
    if let Some(params) = opts.sinkhorn {
        return Ok(EmdResult {
            value: sinkhorn_value(&pa, &pb, &params)?,
            exact: false,
            size_used: pa.len(),
        });
    }
    Err(MetricError::CapExceeded {
        size: pa.len(),
        cap: opts.cap,
    })
}

fn resample(points: &[[f64; 3]], m: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    (0..m)
        .map(|_| points[rng.random_range(0..points.len())])
        .collect()
}

/// Entropic optimal transport with uniform marginals; reports the transport
/// cost scaled to the sum-over-points convention of [`emd_exact`].
fn sinkhorn_value(
    pa: &[[f64; 3]],
    pb: &[[f64; 3]],
    params: &SinkhornParams,
) -> Result<f64, MetricError> {
    if params.epsilon <= 0.0 {
        return Err(MetricError::InvalidParam("sinkhorn epsilon must be > 0".into()));
    }
    let n = pa.len();
    let m = pb.len();
    let mut cost = vec![0.0f64; n * m];
    let mut max_c = 0.0f64;
    for i in 0..n {
        for j in 0..m {
            let c = sq_dist(&pa[i], &pb[j]).sqrt();
            cost[i * m + j] = c;
            max_c = max_c.max(c);
        }
    }
    if max_c == 0.0 {
        return Ok(0.0);
    }
    let eps = params.epsilon * max_c;
    let kmat: Vec<f64> = cost.iter().map(|c| (-c / eps).exp()).collect();
    let (an, bm) = (1.0 / n as f64, 1.0 / m as f64);
    let mut u = vec![1.0f64; n];
    let mut v = vec![1.0f64; m];
    for _ in 0..params.max_iters {
        for i in 0..n {
            let s: f64 = (0..m).map(|j| kmat[i * m + j] * v[j]).sum();
            u[i] = an / s.max(f64::MIN_POSITIVE);
        }
        for j in 0..m {
            let s: f64 = (0..n).map(|i| kmat[i * m + j] * u[i]).sum();
            v[j] = bm / s.max(f64::MIN_POSITIVE);
        }
        // Row marginals are exact after the u update; check columns.
        let err: f64 = (0..m)
            .map(|j| {
                let col: f64 = (0..n).map(|i| u[i] * kmat[i * m + j] * v[j]).sum();
                (col - bm).abs()
            })
            .sum();
        if err < params.tolerance {
            break;
        }
    }
    let mut value = 0.0;
    for i in 0..n {
        for j in 0..m {
            value += u[i] * kmat[i * m + j] * v[j] * cost[i * m + j];
        }
    }
    Ok(value * n as f64)
}

/// Gaussian RBF bandwidth selection.
#[derive(Debug, Clone, Copy)]
pub enum Bandwidth {
    Fixed(f64),
    /// Median of pooled pairwise Euclidean distances.
    MedianHeuristic,
}

#[derive(Debug, Clone, Copy)]
pub struct KernelSpec {
    pub bandwidth: Bandwidth,
}

impl KernelSpec {
    pub fn fixed(sigma: f64) -> Self {
        KernelSpec {
            bandwidth: Bandwidth::Fixed(sigma),
        }
    }

    pub fn median() -> Self {
        KernelSpec {
            bandwidth: Bandwidth::MedianHeuristic,
        }
    }
}

fn check_vectors(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<usize, MetricError> {
    if x.is_empty() || y.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let d = x[0].len();
    if d == 0 {
        return Err(MetricError::EmptyInput);
    }
    for v in x.iter().chain(y.iter()) {
        if v.len() != d {
            return Err(MetricError::DimMismatch {
                expected: d,
                got: v.len(),
            });
        }
        if v.iter().any(|a| !a.is_finite()) {
            return Err(MetricError::NonFinite);
        }
    }
    Ok(d)
}

fn sq_dist_vec(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median of pooled pairwise Euclidean distances; falls back to 1.0 when all
/// pooled points coincide.
pub fn median_heuristic_bandwidth(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<f64, MetricError> {
    check_vectors(x, y)?;
    let pooled: Vec<&Vec<f64>> = x.iter().chain(y.iter()).collect();
    let mut dists = Vec::with_capacity(pooled.len() * (pooled.len() - 1) / 2);
    for i in 0..pooled.len() {
        for j in (i + 1)..pooled.len() {
            dists.push(sq_dist_vec(pooled[i], pooled[j]).sqrt());
        }
    }
    if dists.is_empty() {
        return Ok(1.0);
    }
    dists.sort_by(f64::total_cmp);
    let mid = dists.len() / 2;
    let median = if dists.len() % 2 == 1 {
        dists[mid]
    } else {
        0.5 * (dists[mid - 1] + dists[mid])
    };
    Ok(if median > 0.0 { median } else { 1.0 })
}

fn resolve_sigma(x: &[Vec<f64>], y: &[Vec<f64>], kernel: &KernelSpec) -> Result<f64, MetricError> {
    let sigma = match kernel.bandwidth {
        Bandwidth::Fixed(s) => s,
        Bandwidth::MedianHeuristic => median_heuristic_bandwidth(x, y)?,
    };
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(MetricError::InvalidParam(format!(
            "kernel bandwidth must be finite and > 0, got {sigma}"
        )));
    }
    Ok(sigma)
}

/// Biased (V-statistic) squared maximum mean discrepancy with a Gaussian RBF
/// kernel k(a, b) = exp(-||a-b||^2 / (2 sigma^2)). Clamped at zero.
pub fn mmd2(x: &[Vec<f64>], y: &[Vec<f64>], kernel: &KernelSpec) -> Result<f64, MetricError> {
    check_vectors(x, y)?;
    let sigma = resolve_sigma(x, y, kernel)?;
    let g = 1.0 / (2.0 * sigma * sigma);
    let mean_k = |p: &[Vec<f64>], q: &[Vec<f64>]| -> f64 {
        let mut s = 0.0;
        for a in p {
            for b in q {
                s += (-g * sq_dist_vec(a, b)).exp();
            }
        }
        s / (p.len() * q.len()) as f64
    };
    let v = mean_k(x, x) + mean_k(y, y) - 2.0 * mean_k(x, y);
    Ok(v.max(0.0))
}

/// [`mmd2`] with gradients with respect to every point of both sets, for a
/// fixed bandwidth (treated as a constant, as in training). Returns the
/// unclamped value so gradients stay consistent.
pub fn mmd2_with_grad(
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    sigma: f64,
) -> Result<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>), MetricError> {
    let d = check_vectors(x, y)?;
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(MetricError::InvalidParam(format!(
            "kernel bandwidth must be finite and > 0, got {sigma}"
        )));
    }
    let g = 1.0 / (2.0 * sigma * sigma);
    let inv_s2 = 1.0 / (sigma * sigma);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let mut gx = vec![vec![0.0; d]; x.len()];
    let mut gy = vec![vec![0.0; d]; y.len()];
    let mut sxx = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            let k = (-g * sq_dist_vec(&x[i], &x[j])).exp();
            sxx += k;
            if i != j {
                // d/dx_i of both (i,j) and (j,i) terms handled by symmetry.
                let w = 2.0 * k * inv_s2 / (n * n);
                for a in 0..d {
                    gx[i][a] -= w * (x[i][a] - x[j][a]);
                }
            }
        }
    }
    let mut syy = 0.0;
    for i in 0..y.len() {
        for j in 0..y.len() {
            let k = (-g * sq_dist_vec(&y[i], &y[j])).exp();
            syy += k;
            if i != j {
                let w = 2.0 * k * inv_s2 / (m * m);
                for a in 0..d {
                    gy[i][a] -= w * (y[i][a] - y[j][a]);
                }
            }
        }
    }
    let mut sxy = 0.0;
    for i in 0..x.len() {
        for j in 0..y.len() {
            let k = (-g * sq_dist_vec(&x[i], &y[j])).exp();
            sxy += k;
            let w = 2.0 * k * inv_s2 / (n * m);
            for a in 0..d {
                let diff = x[i][a] - y[j][a];
                gx[i][a] += w * diff;
                gy[j][a] -= w * diff;
            }
        }
    }
    let value = sxx / (n * n) + syy / (m * m) - 2.0 * sxy / (n * m);
    Ok((value, gx, gy))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, MetricError> {
    if xs.len() != ys.len() {
        return Err(MetricError::DimMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(MetricError::EmptyInput);
    }
    if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..xs.len() {
        let dx = rx[i] - mx;
        let dy = ry[i] - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(MetricError::DegenerateInput(
            "all ranks tied in one input".into(),
        ));
    }
    Ok(cov / (vx * vy).sqrt())
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // 1-based average rank over the tied block [i, j].
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            out[order[k]] = avg;
        }
        i = j + 1;
    }
    out
}

/// One row of the batch reconstruction report.
#[derive(Debug, Clone)]
pub struct ReconRow {
    pub scan_id: String,
    pub cd_raw: f64,
    pub cd_normalized: f64,
    pub emd: f64,
    pub emd_exact: bool,
    /// Predicted noise level; NaN when no quality model was supplied.
    pub lqi: f64,
}

/// CSV serialization of a reconstruction report (deterministic bytes).
pub fn recon_report_csv(rows: &[ReconRow]) -> String {
    let mut out = String::from("scan_id,cd_raw,cd_normalized,emd,emd_exact,lqi\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.scan_id,
            r.cd_raw,
            r.cd_normalized,
            r.emd,
            u8::from(r.emd_exact),
            r.lqi
        ));
    }
    out
}
