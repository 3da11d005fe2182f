//! Central finite-difference checks for every differentiable op.

use gfiqa_tensor::{no_grad, StatsPool, Tensor};

/// Deterministic pseudo-random values in [-1, 1).
fn values(n: usize, seed: u64) -> Vec<f64> {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..n)
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
        .collect()
}

/// Reduces an arbitrary output to a scalar with fixed random weights so every
/// output element contributes a distinct coefficient.
fn project(out: &Tensor) -> Tensor {
    let w = Tensor::from_vec(values(out.numel(), 99), out.shape());
    out.mul(&w).sum_all()
}

fn check(name: &str, inputs: &[(Vec<f64>, Vec<usize>)], f: impl Fn(&[Tensor]) -> Tensor) {
    let leaves: Vec<Tensor> = inputs.iter().map(|(d, s)| Tensor::leaf(d.clone(), s)).collect();
    let loss = project(&f(&leaves));
    let grads = loss.backward();
    let h = 1e-6;
    for (k, (data, shape)) in inputs.iter().enumerate() {
        let analytic = grads.get(&leaves[k]).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; data.len()]);
        for i in 0..data.len() {
            let eval = |delta: f64| {
                let _g = no_grad();
                let ts: Vec<Tensor> = inputs
                    .iter()
                    .enumerate()
                    .map(|(j, (d, s))| {
                        let mut d = d.clone();
                        if j == k {
                            d[i] += delta;
                        }
                        Tensor::from_vec(d, s)
                    })
                    .collect();
                project(&f(&ts)).item()
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            let err = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-6);
            assert!(
                err < 1e-5,
                "{name}: input {k} element {i}: analytic {} numeric {numeric} ({shape:?})",
                analytic[i]
            );
        }
    }
}

fn input(shape: &[usize], seed: u64) -> (Vec<f64>, Vec<usize>) {
    (values(shape.iter().product(), seed), shape.to_vec())
}

#[test]
fn broadcast_arithmetic() {
    let a = input(&[2, 3, 2, 2], 1);
    let b = input(&[2, 3, 1, 1], 2);
    check("add", &[a.clone(), b.clone()], |t| t[0].add(&t[1]));
    check("sub", &[a.clone(), b.clone()], |t| t[0].sub(&t[1]));
    check("mul", &[a.clone(), b.clone()], |t| t[0].mul(&t[1]));
    let pos = (b.0.iter().map(|v| v.abs() + 0.5).collect(), b.1.clone());
    check("div", &[a.clone(), pos], |t| t[0].div(&t[1]));
    let c = input(&[1, 3, 2, 1], 3);
    check("mul mixed broadcast", &[a, c], |t| t[0].mul(&t[1]));
}

#[test]
fn unary_maps() {
    // Keep inputs away from the kinks of relu/abs.
    let mut x = input(&[3, 4], 4);
    x.0.iter_mut().for_each(|v| *v += v.signum() * 0.1);
    check("relu", &[x.clone()], |t| t[0].relu());
    check("leaky", &[x.clone()], |t| t[0].leaky_relu(0.2));
    check("sigmoid", &[x.clone()], |t| t[0].sigmoid());
    check("abs", &[x.clone()], |t| t[0].abs());
    check("square", &[x.clone()], |t| t[0].square());
    check("scalar", &[x.clone()], |t| t[0].mul_scalar(-1.7).add_scalar(0.3));
    let pos = (x.0.iter().map(|v| v.abs() + 0.2).collect::<Vec<_>>(), x.1.clone());
    check("sqrt", &[pos.clone()], |t| t[0].sqrt());
    check("powf", &[pos], |t| t[0].powf(-0.5));
}

#[test]
fn reductions_and_shapes() {
    let x = input(&[2, 3, 4], 5);
    check("sum_dims", &[x.clone()], |t| t[0].sum_dims(1, 3));
    check("mean_dims", &[x.clone()], |t| t[0].mean_dims(1, 2));
    check("max_dims", &[x.clone()], |t| t[0].max_dims(2, 3));
    check("sum_all", &[x.clone()], |t| t[0].sum_all());
    check("reshape", &[x.clone()], |t| t[0].reshape(&[6, 4]));
    check("narrow", &[x.clone()], |t| t[0].narrow(1, 1, 2));
    let y = input(&[2, 2, 4], 6);
    check("cat", &[x, y], |t| Tensor::cat(&[&t[0], &t[1]], 1));
}

#[test]
fn dense_layers() {
    let x = input(&[3, 5], 7);
    let w = input(&[4, 5], 8);
    let b = input(&[4], 9);
    check("linear", &[x.clone(), w.clone(), b], |t| t[0].linear(&t[1], Some(&t[2])));
    check("linear no bias", &[x, w], |t| t[0].linear(&t[1], None));
}

#[test]
fn convolutions() {
    let x = input(&[2, 3, 7, 6], 10);
    let w = input(&[4, 3, 3, 3], 11);
    let b = input(&[4], 12);
    check("conv s1 p1", &[x.clone(), w.clone(), b.clone()], |t| t[0].conv2d(&t[1], Some(&t[2]), 1, 1));
    check("conv s2 p1", &[x.clone(), w.clone(), b], |t| t[0].conv2d(&t[1], Some(&t[2]), 2, 1));
    let w1 = input(&[5, 3, 1, 1], 13);
    check("conv pointwise", &[x.clone(), w1], |t| t[0].conv2d(&t[1], None, 1, 0));
    let w7 = input(&[1, 3, 7, 7], 14);
    check("conv 7x7 p3", &[x, w7], |t| t[0].conv2d(&t[1], None, 1, 3));
}

#[test]
fn pooling_and_resampling() {
    let x = input(&[1, 2, 6, 6], 15);
    check("max_pool", &[x.clone()], |t| t[0].max_pool2d(3, 2, 1));
    check("avg_pool", &[x.clone()], |t| t[0].avg_pool2d(2));
    check("upsample", &[x], |t| t[0].upsample_nearest2x());
}

#[test]
fn standardization() {
    let x = input(&[2, 3, 3, 3], 16);
    check("standardize batch", &[x.clone()], |t| t[0].channel_standardize(StatsPool::Batch, 1e-5));
    check("standardize instance", &[x], |t| t[0].channel_standardize(StatsPool::Instance, 1e-5));
}

#[test]
fn shared_leaf_accumulates() {
    let x = Tensor::leaf(vec![1.0, 2.0, 3.0], &[3]);
    let y = x.mul(&x).add(&x).sum_all();
    let g = y.backward();
    assert_eq!(g.get(&x).unwrap(), &[3.0, 5.0, 7.0]);
}

#[test]
fn no_grad_records_nothing() {
    let x = Tensor::leaf(vec![1.0, 2.0], &[2]);
    let _g = no_grad();
    let y = x.square().sum_all();
    assert!(!y.requires_grad());
}
