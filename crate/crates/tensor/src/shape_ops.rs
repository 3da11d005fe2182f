use crate::graph::BackwardFn;
use crate::Tensor;

impl Tensor {
    /// Reinterprets the data with a new shape of the same element count.
    pub fn reshape(&self, shape: &[usize]) -> Tensor {
        assert_eq!(
            crate::numel(shape),
            self.numel(),
            "cannot reshape {:?} into {shape:?}",
            self.shape()
        );
        self.with_shared_data(shape.to_vec(), &[self], || {
            Box::new(|g: &[f64], _needs: &[bool]| vec![Some(g.to_vec())]) as BackwardFn
        })
    }

    /// Concatenates along `dim`; all other extents must agree.
    pub fn cat(parts: &[&Tensor], dim: usize) -> Tensor {
        assert!(!parts.is_empty(), "cat of nothing");
        let first = parts[0].shape();
        assert!(dim < first.len());
        for p in parts {
            let s = p.shape();
            assert!(
                s.len() == first.len()
                    && s.iter().zip(first).enumerate().all(|(d, (a, b))| d == dim || a == b),
                "cat shape mismatch: {s:?} vs {first:?} on dim {dim}"
            );
        }
        let outer: usize = first[..dim].iter().product();
        let inner: usize = first[dim + 1..].iter().product();
        let sizes: Vec<usize> = parts.iter().map(|p| p.shape()[dim] * inner).collect();
        let total: usize = sizes.iter().sum();
        let mut out = Vec::with_capacity(outer * total);
        for o in 0..outer {
            for (p, &len) in parts.iter().zip(&sizes) {
                out.extend_from_slice(&p.data()[o * len..(o + 1) * len]);
            }
        }
        let mut shape = first.to_vec();
        shape[dim] = parts.iter().map(|p| p.shape()[dim]).sum();
        Tensor::from_op(out, shape, parts, move || {
            Box::new(move |g: &[f64], needs: &[bool]| {
                let mut grads: Vec<Option<Vec<f64>>> = needs
                    .iter()
                    .zip(&sizes)
                    .map(|(&n, &len)| n.then(|| Vec::with_capacity(outer * len)))
                    .collect();
                for o in 0..outer {
                    let mut off = o * total;
                    for (gp, &len) in grads.iter_mut().zip(&sizes) {
                        if let Some(gp) = gp.as_mut() {
                            gp.extend_from_slice(&g[off..off + len]);
                        }
                        off += len;
                    }
                }
                grads
            }) as BackwardFn
        })
    }

    /// Slice `start..start+len` along `dim`.
    pub fn narrow(&self, dim: usize, start: usize, len: usize) -> Tensor {
        let shape = self.shape();
        assert!(dim < shape.len() && start + len <= shape[dim], "narrow out of range");
        let outer: usize = shape[..dim].iter().product();
        let inner: usize = shape[dim + 1..].iter().product();
        let full = shape[dim] * inner;
        let x = self.data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * full + start * inner;
            out.extend_from_slice(&x[base..base + len * inner]);
        }
        let mut new_shape = shape.to_vec();
        new_shape[dim] = len;
        let n = self.numel();
        Tensor::from_op(out, new_shape, &[self], || {
            Box::new(move |g: &[f64], _needs: &[bool]| {
                let mut gx = vec![0.0; n];
                for o in 0..outer {
                    let base = o * full + start * inner;
                    gx[base..base + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
                }
                vec![Some(gx)]
            }) as BackwardFn
        })
    }
}
