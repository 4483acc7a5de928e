//! Channel-group max+min pooling used by the scan-quality head.

/// Pools a `groups * channels` vector down to `2 * groups` values by taking
/// the maximum and minimum over each group's channels. Output is interleaved
/// `[max_0, min_0, max_1, min_1, ...]`.
#[derive(Debug, Clone, Copy)]
pub struct MaxMinPool {
    pub groups: usize,
    pub channels: usize,
}

/// Winning indices from the forward pass, needed to route gradients back.
pub struct PoolCache {
    argmax: Vec<usize>,
    argmin: Vec<usize>,
}

impl MaxMinPool {
    pub fn new(groups: usize, channels: usize) -> Self {
        assert!(groups > 0 && channels > 0);
        MaxMinPool { groups, channels }
    }

    pub fn in_dim(&self) -> usize {
        self.groups * self.channels
    }

    pub fn out_dim(&self) -> usize {
        2 * self.groups
    }

    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, PoolCache) {
        assert_eq!(x.len(), self.in_dim());
        let mut out = Vec::with_capacity(self.out_dim());
        let mut argmax = Vec::with_capacity(self.groups);
        let mut argmin = Vec::with_capacity(self.groups);
        for g in 0..self.groups {
            let base = g * self.channels;
            let (mut hi_i, mut lo_i) = (base, base);
            for k in base + 1..base + self.channels {
                // Strict comparisons: the first occurrence wins ties.
                if x[k] > x[hi_i] {
                    hi_i = k;
                }
                if x[k] < x[lo_i] {
                    lo_i = k;
                }
            }
            out.push(x[hi_i]);
            out.push(x[lo_i]);
            argmax.push(hi_i);
            argmin.push(lo_i);
        }
        (out, PoolCache { argmax, argmin })
    }

    /// Scatters the output gradient back to the winning input positions.
    pub fn backward(&self, cache: &PoolCache, grad_out: &[f64]) -> Vec<f64> {
        assert_eq!(grad_out.len(), self.out_dim());
        let mut gin = vec![0.0; self.in_dim()];
        for g in 0..self.groups {
            gin[cache.argmax[g]] += grad_out[2 * g];
            gin[cache.argmin[g]] += grad_out[2 * g + 1];
        }
        gin
    }
}
