use crate::graph::BackwardFn;
use crate::Tensor;

/// Which elements share a channel statistic.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StatsPool {
    /// One mean/deviation per channel over batch and spatial positions.
    Batch,
    /// One mean/deviation per (sample, channel) over spatial positions.
    Instance,
}

impl StatsPool {
    fn groups(self, n: usize, c: usize) -> usize {
        match self {
            StatsPool::Batch => c,
            StatsPool::Instance => n * c,
        }
    }

    fn group_of(self, sample: usize, channel: usize, c: usize) -> usize {
        match self {
            StatsPool::Batch => channel,
            StatsPool::Instance => sample * c + channel,
        }
    }
}

/// Per-group mean and population standard deviation of `[N, C, ...]` data.
pub(crate) fn channel_moments(x: &[f64], n: usize, c: usize, spatial: usize, pool: StatsPool) -> (Vec<f64>, Vec<f64>) {
    let groups = pool.groups(n, c);
    let count = match pool {
        StatsPool::Batch => (n * spatial) as f64,
        StatsPool::Instance => spatial as f64,
    };
    let mut mean = vec![0.0; groups];
    for s in 0..n {
        for ch in 0..c {
            let gidx = pool.group_of(s, ch, c);
            let plane = &x[(s * c + ch) * spatial..(s * c + ch + 1) * spatial];
            mean[gidx] += plane.iter().sum::<f64>();
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut var = vec![0.0; groups];
    for s in 0..n {
        for ch in 0..c {
            let gidx = pool.group_of(s, ch, c);
            let m = mean[gidx];
            let plane = &x[(s * c + ch) * spatial..(s * c + ch + 1) * spatial];
            var[gidx] += plane.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
        }
    }
    let std = var.iter().map(|v| (v / count).sqrt()).collect();
    (mean, std)
}

impl Tensor {
    /// `(x − μ_c) / (σ_c + eps)` with population statistics over the pool.
    /// Input is `[N, C, ...]`.
    pub fn channel_standardize(&self, pool: StatsPool, eps: f64) -> Tensor {
        let shape = self.shape().to_vec();
        assert!(shape.len() >= 2, "channel_standardize needs [N, C, ...]");
        let (n, c) = (shape[0], shape[1]);
        let spatial: usize = shape[2..].iter().product();
        let x = self.data();
        let (mean, std) = channel_moments(x, n, c, spatial, pool);
        let mut out = vec![0.0; x.len()];
        for s in 0..n {
            for ch in 0..c {
                let gidx = pool.group_of(s, ch, c);
                let (m, d) = (mean[gidx], std[gidx] + eps);
                let range = (s * c + ch) * spatial..(s * c + ch + 1) * spatial;
                for (o, v) in out[range.clone()].iter_mut().zip(&x[range]) {
                    *o = (v - m) / d;
                }
            }
        }
        Tensor::from_op(out, shape, &[self], || {
            let xd = self.data_arc();
            Box::new(move |g: &[f64], _needs: &[bool]| {
                let groups = pool.groups(n, c);
                let count = match pool {
                    StatsPool::Batch => (n * spatial) as f64,
                    StatsPool::Instance => spatial as f64,
                };
                // Per-group Σg and Σg·(x−μ).
                let mut sum_g = vec![0.0; groups];
                let mut sum_gx = vec![0.0; groups];
                for s in 0..n {
                    for ch in 0..c {
                        let gidx = pool.group_of(s, ch, c);
                        let m = mean[gidx];
                        let range = (s * c + ch) * spatial..(s * c + ch + 1) * spatial;
                        for (gv, xv) in g[range.clone()].iter().zip(&xd[range]) {
                            sum_g[gidx] += gv;
                            sum_gx[gidx] += gv * (xv - m);
                        }
                    }
                }
                let mut gx = vec![0.0; xd.len()];
                for s in 0..n {
                    for ch in 0..c {
                        let gidx = pool.group_of(s, ch, c);
                        let (m, sd) = (mean[gidx], std[gidx]);
                        let d = sd + eps;
                        let g_mean = sum_g[gidx] / count;
                        // dσ/dx_i = (x_i − μ)/(count·σ); zero when σ = 0.
                        let coupling = if sd > 0.0 { sum_gx[gidx] / (count * sd * d * d) } else { 0.0 };
                        let range = (s * c + ch) * spatial..(s * c + ch + 1) * spatial;
                        for ((o, gv), xv) in gx[range.clone()].iter_mut().zip(&g[range.clone()]).zip(&xd[range]) {
                            *o = (gv - g_mean) / d - (xv - m) * coupling;
                        }
                    }
                }
                vec![Some(gx)]
            }) as BackwardFn
        })
    }
}
