//! 2-D convolution via chunked im2col + GEMM.

use crate::gemm::{gemm, Mat};
use crate::graph::BackwardFn;
use crate::Tensor;

/// Upper bound on im2col buffer elements per chunk (32 MiB of f64).
const CHUNK_ELEMS: usize = 1 << 22;

#[derive(Clone, Copy, Debug)]
struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn k(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn p(&self) -> usize {
        self.ho * self.wo
    }

    fn pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    fn rows_per_chunk(&self) -> usize {
        (CHUNK_ELEMS / (self.k() * self.wo).max(1)).clamp(1, self.ho)
    }
}

fn im2col(x: &[f64], g: &Geometry, oy0: usize, oy1: usize, cols: &mut [f64]) {
    let pc = (oy1 - oy0) * g.wo;
    for ci in 0..g.c {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = (ci * g.kh + i) * g.kw + j;
                let dst = &mut cols[row * pc..(row + 1) * pc];
                for oy in oy0..oy1 {
                    let d = &mut dst[(oy - oy0) * g.wo..(oy - oy0 + 1) * g.wo];
                    let iy = (oy * g.stride + i) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        d.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, v) in d.iter_mut().enumerate() {
                        let ix = (ox * g.stride + j) as isize - g.pad as isize;
                        *v = if ix >= 0 && ix < g.w as isize { src[ix as usize] } else { 0.0 };
                    }
                }
            }
        }
    }
}

fn col2im_add(cols: &[f64], g: &Geometry, oy0: usize, oy1: usize, dx: &mut [f64]) {
    let pc = (oy1 - oy0) * g.wo;
    for ci in 0..g.c {
        let plane = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = (ci * g.kh + i) * g.kw + j;
                let src = &cols[row * pc..(row + 1) * pc];
                for oy in oy0..oy1 {
                    let iy = (oy * g.stride + i) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let s = &src[(oy - oy0) * g.wo..(oy - oy0 + 1) * g.wo];
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, v) in s.iter().enumerate() {
                        let ix = (ox * g.stride + j) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

fn forward(x: &[f64], n: usize, w: &[f64], g: &Geometry) -> Vec<f64> {
    let (k, p) = (g.k(), g.p());
    let mut out = vec![0.0; n * g.o * p];
    let rows = g.rows_per_chunk();
    let mut cols = if g.pointwise() { Vec::new() } else { vec![0.0; k * rows * g.wo] };
    for s in 0..n {
        let xs = &x[s * g.c * g.h * g.w..(s + 1) * g.c * g.h * g.w];
        let os = &mut out[s * g.o * p..(s + 1) * g.o * p];
        if g.pointwise() {
            gemm(g.o, k, p, Mat::new(w, k, 1), Mat::new(xs, p, 1), 0.0, os, p, 1);
            continue;
        }
        let mut oy0 = 0;
        while oy0 < g.ho {
            let oy1 = (oy0 + rows).min(g.ho);
            let pc = (oy1 - oy0) * g.wo;
            im2col(xs, g, oy0, oy1, &mut cols);
            gemm(
                g.o,
                k,
                pc,
                Mat::new(w, k, 1),
                Mat::new(&cols, pc, 1),
                0.0,
                &mut os[oy0 * g.wo..],
                p,
                1,
            );
            oy0 = oy1;
        }
    }
    out
}

fn backward(x: &[f64], n: usize, w: &[f64], g: &Geometry, grad: &[f64], need_x: bool, need_w: bool) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
    let (k, p) = (g.k(), g.p());
    let mut gx = need_x.then(|| vec![0.0; n * g.c * g.h * g.w]);
    let mut gw = need_w.then(|| vec![0.0; g.o * k]);
    let rows = g.rows_per_chunk();
    let mut cols = if g.pointwise() || !need_w { Vec::new() } else { vec![0.0; k * rows * g.wo] };
    let mut dcols = if g.pointwise() || !need_x { Vec::new() } else { vec![0.0; k * rows * g.wo] };
    for s in 0..n {
        let xs = &x[s * g.c * g.h * g.w..(s + 1) * g.c * g.h * g.w];
        let gs = &grad[s * g.o * p..(s + 1) * g.o * p];
        if g.pointwise() {
            if let Some(gw) = gw.as_mut() {
                gemm(g.o, p, k, Mat::new(gs, p, 1), Mat::new(xs, 1, p), 1.0, gw, k, 1);
            }
            if let Some(gx) = gx.as_mut() {
                let dxs = &mut gx[s * g.c * p..(s + 1) * g.c * p];
                gemm(k, g.o, p, Mat::new(w, 1, k), Mat::new(gs, p, 1), 0.0, dxs, p, 1);
            }
            continue;
        }
        let mut oy0 = 0;
        while oy0 < g.ho {
            let oy1 = (oy0 + rows).min(g.ho);
            let pc = (oy1 - oy0) * g.wo;
            let gchunk = &gs[oy0 * g.wo..];
            if let Some(gw) = gw.as_mut() {
                im2col(xs, g, oy0, oy1, &mut cols);
                gemm(g.o, pc, k, Mat::new(gchunk, p, 1), Mat::new(&cols, 1, pc), 1.0, gw, k, 1);
            }
            if let Some(gx) = gx.as_mut() {
                gemm(k, g.o, pc, Mat::new(w, 1, k), Mat::new(gchunk, p, 1), 0.0, &mut dcols, pc, 1);
                let dxs = &mut gx[s * g.c * g.h * g.w..(s + 1) * g.c * g.h * g.w];
                col2im_add(&dcols, g, oy0, oy1, dxs);
            }
            oy0 = oy1;
        }
    }
    (gx, gw)
}

impl Tensor {
    /// Cross-correlation of `self: [N, C, H, W]` with `weight: [O, C, kh, kw]`,
    /// zero padding `pad` on every side, optional `bias: [O]`.
    pub fn conv2d(&self, weight: &Tensor, bias: Option<&Tensor>, stride: usize, pad: usize) -> Tensor {
        let (n, c, h, w) = self.dims4();
        let (o, wc, kh, kw) = weight.dims4();
        assert_eq!(c, wc, "conv2d channel mismatch: input {c}, weight {wc}");
        assert!(stride >= 1);
        assert!(h + 2 * pad >= kh && w + 2 * pad >= kw, "conv2d kernel larger than padded input");
        let geo = Geometry {
            c,
            h,
            w,
            o,
            kh,
            kw,
            stride,
            pad,
            ho: (h + 2 * pad - kh) / stride + 1,
            wo: (w + 2 * pad - kw) / stride + 1,
        };
        let mut out = forward(self.data(), n, weight.data(), &geo);
        let p = geo.p();
        if let Some(b) = bias {
            assert_eq!(b.shape(), [o], "conv2d bias shape");
            for (i, plane) in out.chunks_mut(p).enumerate() {
                let bv = b.data()[i % o];
                plane.iter_mut().for_each(|v| *v += bv);
            }
        }
        let mut parents = vec![self, weight];
        if let Some(b) = bias {
            parents.push(b);
        }
        Tensor::from_op(out, vec![n, o, geo.ho, geo.wo], &parents, || {
            let (x, wd) = (self.data_arc(), weight.data_arc());
            Box::new(move |g: &[f64], needs: &[bool]| {
                let (gx, gw) = backward(&x, n, &wd, &geo, g, needs[0], needs[1]);
                let mut grads = vec![gx, gw];
                if needs.len() == 3 {
                    grads.push(needs[2].then(|| {
                        let mut gb = vec![0.0; o];
                        for (i, plane) in g.chunks(p).enumerate() {
                            gb[i % o] += plane.iter().sum::<f64>();
                        }
                        gb
                    }));
                }
                grads
            }) as BackwardFn
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(x: &[f64], n: usize, w: &[f64], g: &Geometry) -> Vec<f64> {
        let mut out = vec![0.0; n * g.o * g.p()];
        for s in 0..n {
            for o in 0..g.o {
                for oy in 0..g.ho {
                    for ox in 0..g.wo {
                        let mut acc = 0.0;
                        for c in 0..g.c {
                            for i in 0..g.kh {
                                for j in 0..g.kw {
                                    let iy = (oy * g.stride + i) as isize - g.pad as isize;
                                    let ix = (ox * g.stride + j) as isize - g.pad as isize;
                                    if iy < 0 || ix < 0 || iy >= g.h as isize || ix >= g.w as isize {
                                        continue;
                                    }
                                    acc += x[((s * g.c + c) * g.h + iy as usize) * g.w + ix as usize]
                                        * w[((o * g.c + c) * g.kh + i) * g.kw + j];
                                }
                            }
                        }
                        out[((s * g.o + o) * g.ho + oy) * g.wo + ox] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn chunked_matches_naive_loop() {
        let geo = Geometry {
            c: 3,
            h: 9,
            w: 7,
            o: 4,
            kh: 3,
            kw: 3,
            stride: 2,
            pad: 1,
            ho: 5,
            wo: 4,
        };
        let x: Vec<f64> = (0..2 * 3 * 9 * 7).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let w: Vec<f64> = (0..4 * 27).map(|i| ((i * 13) % 7) as f64 * 0.25 - 0.7).collect();
        let fast = forward(&x, 2, &w, &geo);
        let slow = naive(&x, 2, &w, &geo);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
