use crate::graph::BackwardFn;
use crate::Tensor;

#[derive(Clone, Copy)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    assert_eq!(
        a.len(),
        b.len(),
        "broadcast needs equal ranks: {a:?} vs {b:?}"
    );
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            assert!(
                x == y || x == 1 || y == 1,
                "shapes {a:?} and {b:?} do not broadcast"
            );
            x.max(y)
        })
        .collect()
}

/// Strides of `shape` laid out row-major, with zero stride on broadcast axes.
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let mut strides = vec![0; shape.len()];
    let mut acc = 1;
    for d in (0..shape.len()).rev() {
        strides[d] = if shape[d] == 1 && out[d] != 1 { 0 } else { acc };
        acc *= shape[d];
    }
    strides
}

/// Calls `f(out_index, a_index, b_index)` over every output element.
fn for_each_pair(out: &[usize], sa: &[usize], sb: &[usize], mut f: impl FnMut(usize, usize, usize)) {
    let rank = out.len();
    let total = crate::numel(out);
    if total == 0 {
        return;
    }
    if rank == 0 {
        f(0, 0, 0);
        return;
    }
    let last = out[rank - 1];
    let (la, lb) = (sa[rank - 1], sb[rank - 1]);
    let mut idx = vec![0usize; rank];
    let mut o = 0;
    while o < total {
        let mut ia = 0;
        let mut ib = 0;
        for d in 0..rank - 1 {
            ia += idx[d] * sa[d];
            ib += idx[d] * sb[d];
        }
        for j in 0..last {
            f(o + j, ia + j * la, ib + j * lb);
        }
        o += last;
        for d in (0..rank - 1).rev() {
            idx[d] += 1;
            if idx[d] < out[d] {
                break;
            }
            idx[d] = 0;
        }
    }
}

fn binary(a: &Tensor, b: &Tensor, op: BinOp) -> Tensor {
    let out_shape = broadcast_shape(a.shape(), b.shape());
    let n = crate::numel(&out_shape);
    let mut out = vec![0.0; n];
    let (ad, bd) = (a.data(), b.data());
    let same = a.shape() == b.shape();
    let apply = |x: f64, y: f64| match op {
        BinOp::Add => x + y,
        BinOp::Sub => x - y,
        BinOp::Mul => x * y,
        BinOp::Div => x / y,
    };
    let sa = broadcast_strides(a.shape(), &out_shape);
    let sb = broadcast_strides(b.shape(), &out_shape);
    if same {
        for ((o, &x), &y) in out.iter_mut().zip(ad).zip(bd) {
            *o = apply(x, y);
        }
    } else {
        for_each_pair(&out_shape, &sa, &sb, |o, ia, ib| out[o] = apply(ad[ia], bd[ib]));
    }
    Tensor::from_op(out, out_shape.clone(), &[a, b], || {
        let (ad, bd) = (a.data_arc(), b.data_arc());
        let (na, nb) = (a.numel(), b.numel());
        Box::new(move |g: &[f64], needs: &[bool]| {
            let mut ga = needs[0].then(|| vec![0.0; na]);
            let mut gb = needs[1].then(|| vec![0.0; nb]);
            for_each_pair(&out_shape, &sa, &sb, |o, ia, ib| {
                let go = g[o];
                let (da, db) = match op {
                    BinOp::Add => (go, go),
                    BinOp::Sub => (go, -go),
                    BinOp::Mul => (go * bd[ib], go * ad[ia]),
                    BinOp::Div => {
                        let y = bd[ib];
                        (go / y, -go * ad[ia] / (y * y))
                    }
                };
                if let Some(ga) = ga.as_mut() {
                    ga[ia] += da;
                }
                if let Some(gb) = gb.as_mut() {
                    gb[ib] += db;
                }
            });
            vec![ga, gb]
        }) as BackwardFn
    })
}

/// Element-wise map whose derivative is expressed through input and output.
fn unary(
    a: &Tensor,
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
) -> Tensor {
    let out: Vec<f64> = a.data().iter().map(|&x| f(x)).collect();
    let keep = out.clone();
    Tensor::from_op(out, a.shape().to_vec(), &[a], move || {
        let ad = a.data_arc();
        Box::new(move |g: &[f64], _needs: &[bool]| {
            let gx = g
                .iter()
                .zip(ad.iter())
                .zip(&keep)
                .map(|((&go, &x), &y)| go * df(x, y))
                .collect();
            vec![Some(gx)]
        }) as BackwardFn
    })
}

impl Tensor {
    /// Broadcasting addition (equal ranks, size-1 axes stretch).
    pub fn add(&self, other: &Tensor) -> Tensor {
        binary(self, other, BinOp::Add)
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        binary(self, other, BinOp::Sub)
    }

    pub fn mul(&self, other: &Tensor) -> Tensor {
        binary(self, other, BinOp::Mul)
    }

    pub fn div(&self, other: &Tensor) -> Tensor {
        binary(self, other, BinOp::Div)
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        unary(self, |x| x + c, |_, _| 1.0)
    }

    pub fn mul_scalar(&self, c: f64) -> Tensor {
        unary(self, |x| x * c, move |_, _| c)
    }

    pub fn neg(&self) -> Tensor {
        self.mul_scalar(-1.0)
    }

    pub fn relu(&self) -> Tensor {
        unary(self, |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn leaky_relu(&self, slope: f64) -> Tensor {
        unary(
            self,
            move |x| if x > 0.0 { x } else { slope * x },
            move |x, _| if x > 0.0 { 1.0 } else { slope },
        )
    }

    pub fn sigmoid(&self) -> Tensor {
        unary(
            self,
            |x| {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            },
            |_, y| y * (1.0 - y),
        )
    }

    /// Absolute value; the subgradient at zero is taken as zero.
    pub fn abs(&self) -> Tensor {
        unary(self, f64::abs, |x, _| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }

    /// Square root; the gradient at exactly zero is taken as zero.
    pub fn sqrt(&self) -> Tensor {
        unary(self, f64::sqrt, |_, y| if y > 0.0 { 0.5 / y } else { 0.0 })
    }

    pub fn square(&self) -> Tensor {
        unary(self, |x| x * x, |x, _| 2.0 * x)
    }

    pub fn powf(&self, p: f64) -> Tensor {
        unary(self, move |x| x.powf(p), move |x, _| p * x.powf(p - 1.0))
    }
}
