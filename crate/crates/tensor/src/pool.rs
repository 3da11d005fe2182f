use crate::graph::BackwardFn;
use crate::Tensor;

impl Tensor {
    /// Max pooling with implicit `-inf` padding.
    pub fn max_pool2d(&self, kernel: usize, stride: usize, pad: usize) -> Tensor {
        let (n, c, h, w) = self.dims4();
        let ho = (h + 2 * pad - kernel) / stride + 1;
        let wo = (w + 2 * pad - kernel) / stride + 1;
        let x = self.data();
        let mut out = vec![0.0; n * c * ho * wo];
        let mut arg = vec![0usize; out.len()];
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = usize::MAX;
                    for i in 0..kernel {
                        let iy = (oy * stride + i) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for j in 0..kernel {
                            let ix = (ox * stride + j) as isize - pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let idx = base + iy as usize * w + ix as usize;
                            if best_i == usize::MAX || x[idx] > best {
                                best = x[idx];
                                best_i = idx;
                            }
                        }
                    }
                    let o = (plane * ho + oy) * wo + ox;
                    out[o] = best;
                    arg[o] = best_i;
                }
            }
        }
        let total = self.numel();
        Tensor::from_op(out, vec![n, c, ho, wo], &[self], || {
            Box::new(move |g: &[f64], _needs: &[bool]| {
                let mut gx = vec![0.0; total];
                for (o, &src) in arg.iter().enumerate() {
                    gx[src] += g[o];
                }
                vec![Some(gx)]
            }) as BackwardFn
        })
    }

    /// Non-overlapping average pooling with a `k × k` window.
    pub fn avg_pool2d(&self, k: usize) -> Tensor {
        let (n, c, h, w) = self.dims4();
        assert!(h % k == 0 && w % k == 0, "avg_pool2d window {k} must divide {h}x{w}");
        let (ho, wo) = (h / k, w / k);
        let x = self.data();
        let scale = 1.0 / (k * k) as f64;
        let mut out = vec![0.0; n * c * ho * wo];
        for plane in 0..n * c {
            for y in 0..h {
                for xx in 0..w {
                    out[(plane * ho + y / k) * wo + xx / k] += x[(plane * h + y) * w + xx] * scale;
                }
            }
        }
        Tensor::from_op(out, vec![n, c, ho, wo], &[self], || {
            Box::new(move |g: &[f64], _needs: &[bool]| {
                let mut gx = vec![0.0; n * c * h * w];
                for plane in 0..n * c {
                    for y in 0..h {
                        for xx in 0..w {
                            gx[(plane * h + y) * w + xx] = g[(plane * ho + y / k) * wo + xx / k] * scale;
                        }
                    }
                }
                vec![Some(gx)]
            }) as BackwardFn
        })
    }

    /// Nearest-neighbour 2× upsampling.
    pub fn upsample_nearest2x(&self) -> Tensor {
        let (n, c, h, w) = self.dims4();
        let (ho, wo) = (2 * h, 2 * w);
        let x = self.data();
        let mut out = vec![0.0; n * c * ho * wo];
        for plane in 0..n * c {
            for y in 0..ho {
                let src = &x[(plane * h + y / 2) * w..(plane * h + y / 2 + 1) * w];
                let dst = &mut out[(plane * ho + y) * wo..(plane * ho + y + 1) * wo];
                for (xx, v) in dst.iter_mut().enumerate() {
                    *v = src[xx / 2];
                }
            }
        }
        Tensor::from_op(out, vec![n, c, ho, wo], &[self], || {
            Box::new(move |g: &[f64], _needs: &[bool]| {
                let mut gx = vec![0.0; n * c * h * w];
                for plane in 0..n * c {
                    for y in 0..ho {
                        for xx in 0..wo {
                            gx[(plane * h + y / 2) * w + xx / 2] += g[(plane * ho + y) * wo + xx];
                        }
                    }
                }
                vec![Some(gx)]
            }) as BackwardFn
        })
    }
}
