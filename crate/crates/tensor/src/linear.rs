use crate::gemm::{gemm, Mat};
use crate::graph::BackwardFn;
use crate::Tensor;

impl Tensor {
    /// `x · wᵀ + b` for `x: [batch, in]`, `w: [out, in]`, `b: [out]`.
    pub fn linear(&self, weight: &Tensor, bias: Option<&Tensor>) -> Tensor {
        let (batch, fan_in) = match *self.shape() {
            [b, i] => (b, i),
            ref s => panic!("linear expects [batch, in], got {s:?}"),
        };
        let (fan_out, w_in) = match *weight.shape() {
            [o, i] => (o, i),
            ref s => panic!("linear weight must be [out, in], got {s:?}"),
        };
        assert_eq!(fan_in, w_in, "linear input width mismatch");
        let mut out = vec![0.0; batch * fan_out];
        gemm(
            batch,
            fan_in,
            fan_out,
            Mat::new(self.data(), fan_in, 1),
            Mat::new(weight.data(), 1, fan_in),
            0.0,
            &mut out,
            fan_out,
            1,
        );
        if let Some(b) = bias {
            assert_eq!(b.shape(), [fan_out], "linear bias shape");
            for row in out.chunks_mut(fan_out) {
                row.iter_mut().zip(b.data()).for_each(|(o, b)| *o += b);
            }
        }
        let mut parents = vec![self, weight];
        if let Some(b) = bias {
            parents.push(b);
        }
        Tensor::from_op(out, vec![batch, fan_out], &parents, || {
            let (x, w) = (self.data_arc(), weight.data_arc());
            Box::new(move |g: &[f64], needs: &[bool]| {
                let gx = needs[0].then(|| {
                    let mut gx = vec![0.0; batch * fan_in];
                    gemm(
                        batch,
                        fan_out,
                        fan_in,
                        Mat::new(g, fan_out, 1),
                        Mat::new(&w, fan_in, 1),
                        0.0,
                        &mut gx,
                        fan_in,
                        1,
                    );
                    gx
                });
                let gw = needs[1].then(|| {
                    let mut gw = vec![0.0; fan_out * fan_in];
                    gemm(
                        fan_out,
                        batch,
                        fan_in,
                        Mat::new(g, 1, fan_out),
                        Mat::new(&x, fan_in, 1),
                        0.0,
                        &mut gw,
                        fan_in,
                        1,
                    );
                    gw
                });
                let mut grads = vec![gx, gw];
                if needs.len() == 3 {
                    grads.push(needs[2].then(|| {
                        let mut gb = vec![0.0; fan_out];
                        for row in g.chunks(fan_out) {
                            gb.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                        }
                        gb
                    }));
                }
                grads
            }) as BackwardFn
        })
    }
}
