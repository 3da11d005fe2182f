use crate::graph::BackwardFn;
use crate::Tensor;

/// Splits a shape into `(outer, reduced, inner)` extents around `[from, to)`.
fn split(shape: &[usize], from: usize, to: usize) -> (usize, usize, usize) {
    assert!(from < to && to <= shape.len(), "bad reduction range {from}..{to} for {shape:?}");
    (
        shape[..from].iter().product(),
        shape[from..to].iter().product(),
        shape[to..].iter().product(),
    )
}

fn keepdim_shape(shape: &[usize], from: usize, to: usize) -> Vec<usize> {
    shape
        .iter()
        .enumerate()
        .map(|(d, &s)| if d >= from && d < to { 1 } else { s })
        .collect()
}

impl Tensor {
    /// Sum over the contiguous axes `from..to`, keeping them as size 1.
    pub fn sum_dims(&self, from: usize, to: usize) -> Tensor {
        let (outer, red, inner) = split(self.shape(), from, to);
        let x = self.data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for r in 0..red {
                let src = &x[(o * red + r) * inner..(o * red + r + 1) * inner];
                let dst = &mut out[o * inner..(o + 1) * inner];
                dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
            }
        }
        Tensor::from_op(out, keepdim_shape(self.shape(), from, to), &[self], || {
            Box::new(move |g: &[f64], _needs: &[bool]| {
                let mut gx = vec![0.0; outer * red * inner];
                for o in 0..outer {
                    for r in 0..red {
                        gx[(o * red + r) * inner..(o * red + r + 1) * inner]
                            .copy_from_slice(&g[o * inner..(o + 1) * inner]);
                    }
                }
                vec![Some(gx)]
            }) as BackwardFn
        })
    }

    pub fn mean_dims(&self, from: usize, to: usize) -> Tensor {
        let (_, red, _) = split(self.shape(), from, to);
        self.sum_dims(from, to).mul_scalar(1.0 / red as f64)
    }

    /// Maximum over the contiguous axes `from..to`; the gradient flows to the
    /// first maximal element.
    pub fn max_dims(&self, from: usize, to: usize) -> Tensor {
        let (outer, red, inner) = split(self.shape(), from, to);
        let x = self.data();
        let mut out = vec![f64::NEG_INFINITY; outer * inner];
        let mut arg = vec![0usize; outer * inner];
        for o in 0..outer {
            for r in 0..red {
                for i in 0..inner {
                    let v = x[(o * red + r) * inner + i];
                    let k = o * inner + i;
                    if v > out[k] || r == 0 {
                        out[k] = v;
                        arg[k] = (o * red + r) * inner + i;
                    }
                }
            }
        }
        let n = self.numel();
        Tensor::from_op(out, keepdim_shape(self.shape(), from, to), &[self], || {
            Box::new(move |g: &[f64], _needs: &[bool]| {
                let mut gx = vec![0.0; n];
                for (k, &src) in arg.iter().enumerate() {
                    gx[src] += g[k];
                }
                vec![Some(gx)]
            }) as BackwardFn
        })
    }

    pub fn sum_all(&self) -> Tensor {
        let s: f64 = self.data().iter().sum();
        let n = self.numel();
        Tensor::from_op(vec![s], Vec::new(), &[self], || {
            Box::new(move |g: &[f64], _needs: &[bool]| vec![Some(vec![g[0]; n])]) as BackwardFn
        })
    }

    pub fn mean_all(&self) -> Tensor {
        let n = self.numel();
        self.sum_all().mul_scalar(1.0 / n as f64)
    }
}
