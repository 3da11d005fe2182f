use gfiqa_tensor::{StatsPool, Tensor};
use proptest::prelude::*;

fn tensor(shape: Vec<usize>) -> impl Strategy<Value = Tensor> {
    let n: usize = shape.iter().product();
    prop::collection::vec(-2.0..2.0f64, n).prop_map(move |v| Tensor::from_vec(v, &shape))
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

fn conv_case() -> impl Strategy<Value = (Tensor, Tensor, Tensor, usize, usize)> {
    (1usize..3, 1usize..4, 1usize..4, 4usize..9, prop::sample::select(vec![1usize, 3, 5]), 1usize..3).prop_flat_map(|(n, cin, cout, h, k, stride)| {
        (tensor(vec![n, cin, h, h]), tensor(vec![cout, cin, k, k]), tensor(vec![cout]), Just(stride), Just(k / 2))
    })
}

fn naive_conv(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Vec<f64> {
    let [n, cin, h, _] = x.shape().try_into().unwrap();
    let [cout, _, k, _] = w.shape().try_into().unwrap();
    let oh = (h + 2 * pad - k) / stride + 1;
    let (xd, wd) = (x.data(), w.data());
    let mut out = Vec::new();
    for s in 0..n {
        for o in 0..cout {
            for i in 0..oh {
                for j in 0..oh {
                    let mut acc = b.data()[o];
                    for c in 0..cin {
                        for u in 0..k {
                            for v in 0..k {
                                let y = (i * stride + u) as isize - pad as isize;
                                let xx = (j * stride + v) as isize - pad as isize;
                                if (0..h as isize).contains(&y) && (0..h as isize).contains(&xx) {
                                    acc += wd[((o * cin + c) * k + u) * k + v] * xd[((s * cin + c) * h + y as usize) * h + xx as usize];
                                }
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conv_matches_direct_loops((x, w, b, stride, pad) in conv_case()) {
        let y = x.conv2d(&w, Some(&b), stride, pad);
        prop_assert!(close(y.data(), &naive_conv(&x, &w, &b, stride, pad), 1e-10));
    }

    #[test]
    fn linear_matches_direct_loops((x, w) in (1usize..4, 1usize..6, 1usize..6).prop_flat_map(|(b, i, o)| (tensor(vec![b, i]), tensor(vec![o, i])))) {
        let y = x.linear(&w, None);
        let (b, i, o) = (x.shape()[0], x.shape()[1], w.shape()[0]);
        let (xd, wd) = (x.data(), w.data());
        let want: Vec<f64> = (0..b).flat_map(|s| (0..o).map(move |r| (0..i).map(|c| wd[r * i + c] * xd[s * i + c]).sum::<f64>())).collect();
        prop_assert!(close(y.data(), &want, 1e-12));
    }

    #[test]
    fn narrow_undoes_cat(a in tensor(vec![2, 3, 2]), b in tensor(vec![2, 1, 2])) {
        let c = Tensor::cat(&[&a, &b], 1);
        prop_assert_eq!(c.shape(), &[2, 4, 2]);
        prop_assert_eq!(c.narrow(1, 0, 3).to_vec(), a.to_vec());
        prop_assert_eq!(c.narrow(1, 3, 1).to_vec(), b.to_vec());
    }

    #[test]
    fn standardized_channels_have_zero_mean(x in tensor(vec![2, 3, 4, 4])) {
        for pool in [StatsPool::Batch, StatsPool::Instance] {
            let y = x.channel_standardize(pool, 0.0);
            let per_sample = y.mean_dims(2, 4).to_vec();
            if pool == StatsPool::Instance {
                prop_assert!(per_sample.iter().all(|m| m.abs() < 1e-10));
            } else {
                for c in 0..3 {
                    prop_assert!((per_sample[c] + per_sample[3 + c]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn pools_bound_the_input(x in tensor(vec![1, 2, 6, 6])) {
        let hi = x.data().iter().copied().fold(f64::MIN, f64::max);
        prop_assert!(x.max_pool2d(3, 2, 1).data().iter().all(|&v| v <= hi));
        let avg = x.avg_pool2d(2);
        prop_assert!((avg.sum_all().item() * 4.0 - x.sum_all().item()).abs() < 1e-10);
        let up = avg.upsample_nearest2x();
        prop_assert_eq!(up.shape(), x.shape());
        prop_assert!((up.sum_all().item() - x.sum_all().item()).abs() < 1e-10);
    }
}
