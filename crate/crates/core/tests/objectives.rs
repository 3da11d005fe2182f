use gfiqa_core::generative::StyleCodeSet;
use gfiqa_core::metrics::{average_ranks, plcc, rmse, score, srcc};
use gfiqa_core::objectives::{
    face_mask, loss_id, loss_l2, loss_percep, loss_quality, loss_reg, total_loss, FeatureExtractor, FlattenExtractor, LossTerms, LossWeights,
    RandomLinearExtractor, RegMode, StubIdentity, StubPerceptual,
};
use gfiqa_core::util::rng;
use gfiqa_core::Error;
use gfiqa_tensor::Tensor;
use proptest::prelude::*;
use rand::Rng;

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut r = rng(seed);
    let n = shape.iter().product();
    Tensor::from_vec((0..n).map(|_| r.random_range(-1.0..1.0)).collect(), shape)
}

fn per_sample_norm_mean(a: &[f64], b: &[f64], batch: usize) -> f64 {
    let len = a.len() / batch;
    (0..batch)
        .map(|s| (s * len..(s + 1) * len).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt())
        .sum::<f64>()
        / batch as f64
}

#[test]
fn l2_one_hot_difference() {
    let x = Tensor::zeros(&[1, 3, 4, 4]);
    let mut v = vec![0.0; 48];
    v[17] = 3.0;
    let y = Tensor::from_vec(v, &[1, 3, 4, 4]);
    assert_eq!(loss_l2(&x, &y, None).unwrap().item(), 3.0);
    assert_eq!(loss_l2(&x, &x, None).unwrap().item(), 0.0);
}

#[test]
fn l2_matches_scalar_loop() {
    let (x, y) = (random(&[3, 3, 8, 8], 1), random(&[3, 3, 8, 8], 2));
    let want = per_sample_norm_mean(x.data(), y.data(), 3);
    assert!((loss_l2(&x, &y, None).unwrap().item() - want).abs() < 1e-12);
    assert!(matches!(loss_l2(&x, &random(&[3, 3, 4, 4], 3), None), Err(Error::Shape { .. })));
}

#[test]
fn masked_l2_ignores_the_border() {
    let mask = face_mask(8, 0.5).unwrap();
    assert_eq!(mask.data().iter().sum::<f64>(), 16.0);
    let x = Tensor::zeros(&[1, 3, 8, 8]);
    let mut v = vec![0.0; 3 * 64];
    v[0] = 5.0;
    let y = Tensor::from_vec(v, &[1, 3, 8, 8]);
    assert_eq!(loss_l2(&x, &y, Some(&mask)).unwrap().item(), 0.0);
    assert!(face_mask(8, 0.0).is_err());
}

#[test]
fn perceptual_with_flatten_equals_l2() {
    let (x, y) = (random(&[2, 3, 8, 8], 4), random(&[2, 3, 8, 8], 5));
    let a = loss_percep(&x, &y, &FlattenExtractor, None).unwrap().item();
    let b = loss_l2(&x, &y, None).unwrap().item();
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn perceptual_with_random_linear_matches_loop() {
    let (x, y) = (random(&[2, 3, 4, 4], 6), random(&[2, 3, 4, 4], 7));
    let ex = RandomLinearExtractor::new(48, 10, 8);
    let w = ex.weight().data();
    let project = |t: &Tensor| -> Vec<f64> {
        (0..2)
            .flat_map(|s| (0..10).map(move |f| (0..48).map(|i| w[f * 48 + i] * t.data()[s * 48 + i]).sum::<f64>()))
            .collect()
    };
    let want = per_sample_norm_mean(&project(&x), &project(&y), 2);
    assert!((loss_percep(&x, &y, &ex, None).unwrap().item() - want).abs() < 1e-12);
}

struct Fixed(Vec<f64>, Vec<f64>);

impl FeatureExtractor for Fixed {
    fn extract(&self, images: &Tensor) -> gfiqa_core::Result<Tensor> {
        let v = if images.data()[0] == 0.0 { &self.0 } else { &self.1 };
        Ok(Tensor::from_vec(v.clone(), &[1, v.len()]))
    }
}

#[test]
fn identity_loss_cases() {
    let (x, y) = (Tensor::zeros(&[1, 3, 2, 2]), Tensor::from_vec(vec![1.0; 12], &[1, 3, 2, 2]));
    let same = Fixed(vec![0.6, 0.8], vec![0.6, 0.8]);
    let orthogonal = Fixed(vec![1.0, 0.0], vec![0.0, 1.0]);
    let opposite = Fixed(vec![0.6, 0.8], vec![-0.6, -0.8]);
    assert!(loss_id(&x, &y, &same).unwrap().item().abs() < 1e-15);
    assert_eq!(loss_id(&x, &y, &orthogonal).unwrap().item(), 1.0);
    assert!((loss_id(&x, &y, &opposite).unwrap().item() - 2.0).abs() < 1e-15);
}

#[test]
fn stub_extractors_are_deterministic_and_normalised() {
    let x = random(&[2, 3, 64, 64], 9);
    let id = StubIdentity::new(2).extract(&x).unwrap();
    assert_eq!(id.shape(), [2, StubIdentity::DIM]);
    for s in 0..2 {
        let n: f64 = id.data()[s * 64..(s + 1) * 64].iter().map(|v| v * v).sum();
        assert!((n - 1.0).abs() < 1e-9);
    }
    assert!(loss_id(&x, &x, &StubIdentity::new(2)).unwrap().item().abs() < 1e-9);
    let p1 = StubPerceptual::new(1).extract(&x).unwrap();
    let p2 = StubPerceptual::new(1).extract(&x).unwrap();
    assert_eq!(p1.data(), p2.data());
    assert_eq!(p1.shape(), [2, StubPerceptual::CHANNELS * 32 * 32]);
}

#[test]
fn regulariser_modes() {
    let offsets = Tensor::from_vec(vec![3.0, 0.0, 0.0, 4.0, 0.0, 0.0, 0.0, 0.0], &[2, 2, 2]);
    let codes = StyleCodeSet::new(offsets, vec![1.0, 1.0]).unwrap();
    // Per-sample norms 5 and 0.
    assert_eq!(loss_reg(&codes, RegMode::Offset).item(), 2.5);
    // Minus w̄: [2,-1,-1,3] and [-1,-1,-1,-1], norms √15 and 2.
    let want = (15f64.sqrt() + 2.0) / 2.0;
    assert!((loss_reg(&codes, RegMode::SubtractAverage).item() - want).abs() < 1e-12);
}

#[test]
fn regulariser_unit_offset() {
    let mut v = vec![0.0; 3 * 4];
    v[5] = 1.0;
    let codes = StyleCodeSet::new(Tensor::from_vec(v, &[1, 3, 4]), vec![0.3; 4]).unwrap();
    assert_eq!(loss_reg(&codes, RegMode::Offset).item(), 1.0);
    let zero = StyleCodeSet::new(Tensor::zeros(&[2, 3, 4]), vec![0.3; 4]).unwrap();
    assert_eq!(loss_reg(&zero, RegMode::Offset).item(), 0.0);
}

#[test]
fn quality_loss_batch_and_gradient() {
    let q = random(&[16], 20);
    let q_hat = random(&[16], 21);
    let want = q.data().iter().zip(q_hat.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / 16.0;
    assert!((loss_quality(&q, &q_hat).unwrap().item() - want).abs() < 1e-12);

    let p = Tensor::leaf(q_hat.to_vec(), &[16]);
    let g = loss_quality(&q, &p).unwrap().backward();
    let grad = g.get(&p).unwrap();
    for i in 0..16 {
        let h = 1e-6;
        let mut up = q_hat.to_vec();
        up[i] += h;
        let mut down = q_hat.to_vec();
        down[i] -= h;
        let f = |v: Vec<f64>| loss_quality(&q, &Tensor::from_vec(v, &[16])).unwrap().item();
        let numeric = (f(up) - f(down)) / (2.0 * h);
        assert!((grad[i] - numeric).abs() / numeric.abs().max(1e-7) < 1e-3);
    }
}

#[test]
fn losses_are_non_negative_and_id_is_bounded() {
    let ex = StubIdentity::new(3);
    for seed in 0..10 {
        let (x, y) = (random(&[2, 3, 16, 16], seed), random(&[2, 3, 16, 16], seed + 100));
        assert!(loss_l2(&x, &y, None).unwrap().item() >= 0.0);
        assert!(loss_percep(&x, &y, &FlattenExtractor, None).unwrap().item() >= 0.0);
        let id = loss_id(&x, &y, &ex).unwrap().item();
        assert!((0.0..=2.0).contains(&id));
    }
}

#[test]
fn total_matches_weighted_dot_product() {
    let mut r = rng(30);
    for _ in 0..50 {
        let c: [f64; 5] = std::array::from_fn(|_| r.random_range(0.0..3.0));
        let [l2, percep, id, reg, quality] = std::array::from_fn(|_| r.random_range(0.0..2.0));
        let w = LossWeights { l2, percep, id, reg, quality };
        let terms = LossTerms {
            l2: Some(Tensor::scalar(c[0])),
            percep: Some(Tensor::scalar(c[1])),
            id: Some(Tensor::scalar(c[2])),
            reg: Some(Tensor::scalar(c[3])),
            quality: Some(Tensor::scalar(c[4])),
        };
        let want: f64 = c.iter().zip(w.as_array()).map(|(a, b)| a * b).sum();
        let (t, b) = total_loss(&terms, &w);
        assert!((t.item() - want).abs() < 1e-12);
        assert!((b.total - want).abs() < 1e-12);
        assert!((total_loss(&terms, &w.scaled(2.0)).0.item() - 2.0 * want).abs() < 1e-12);
    }
}

#[test]
fn quality_is_mean_absolute_error() {
    let q = Tensor::from_vec(vec![0.2, 0.7], &[2]);
    let q_hat = Tensor::from_vec(vec![0.7, 0.2], &[2]);
    assert!((loss_quality(&q, &q_hat).unwrap().item() - 0.5).abs() < 1e-15);
}

#[test]
fn total_is_linear_in_terms_and_weights() {
    let terms = LossTerms {
        l2: Some(Tensor::scalar(1.0)),
        percep: Some(Tensor::scalar(2.0)),
        id: Some(Tensor::scalar(3.0)),
        reg: Some(Tensor::scalar(4.0)),
        quality: Some(Tensor::scalar(5.0)),
    };
    let ones = LossWeights { l2: 1.0, percep: 1.0, id: 1.0, reg: 1.0, quality: 1.0 };
    let (t, b) = total_loss(&terms, &ones);
    assert_eq!(t.item(), 15.0);
    assert_eq!(b.total, 15.0);
    assert_eq!(total_loss(&terms, &ones.scaled(2.0)).0.item(), 30.0);

    let w = LossWeights::default();
    let (t, b) = total_loss(&terms, &w);
    let want = 1.0 + 0.8 * 2.0 + 0.1 * 3.0 + 0.005 * 4.0 + 5.0;
    assert!((t.item() - want).abs() < 1e-12);
    assert_eq!(b.components(), [1.0, 2.0, 3.0, 4.0, 5.0]);

    let only_quality = LossTerms { quality: Some(Tensor::scalar(0.25)), ..Default::default() };
    assert_eq!(total_loss(&only_quality, &w).0.item(), 0.25);
    assert!(LossWeights { l2: -1.0, ..w }.validate().is_err());
    assert!(ones.scaled(0.0).validate().is_err());
}

#[test]
fn metric_trivial_cases() {
    let a = [1.0, 2.0, 3.0];
    assert!((srcc(&a, &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-15);
    assert!((srcc(&a, &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
    assert!((plcc(&a, &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
    assert!((plcc(&a, &[3.0, 5.0, 7.0]).unwrap() - 1.0).abs() < 1e-15);
    assert!((plcc(&a, &[-1.0, -2.0, -3.0]).unwrap() + 1.0).abs() < 1e-15);
    assert_eq!(rmse(&[0.0, 1.0], &[1.0, 0.0]).unwrap(), 1.0);
    assert_eq!(rmse(&a, &a).unwrap(), 0.0);
    assert_eq!(rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 12.5f64.sqrt());
    assert_eq!(average_ranks(&[5.0, 1.0, 5.0, 3.0]), [3.5, 1.0, 3.5, 2.0]);
    assert!(matches!(plcc(&[1.0], &[1.0]), Err(Error::UndefinedStatistic(_))));
    assert!(matches!(plcc(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::UndefinedStatistic(_))));
    assert!(matches!(plcc(&[1.0, 2.0], &[1.0]), Err(Error::InvalidArgument(_))));
    assert!(matches!(rmse(&[f64::NAN], &[1.0]), Err(Error::InvalidArgument(_))));
    let s = score(&[0.5, 0.5, 0.5], &a).unwrap();
    assert!(s.srcc.is_nan() && s.plcc.is_nan());
    assert!(s.rmse > 0.0);
}

proptest! {
    #[test]
    fn correlations_are_bounded_and_symmetric(pairs in prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64), 2..50)) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let (Ok(p), Ok(q)) = (plcc(&a, &b), plcc(&b, &a)) {
            prop_assert!((-1.0..=1.0).contains(&p));
            prop_assert!((p - q).abs() < 1e-12);
        }
        if let Ok(s) = srcc(&a, &b) {
            prop_assert!((-1.0..=1.0).contains(&s));
            let warped: Vec<f64> = a.iter().map(|v| v.powi(3) + 7.0).collect();
            prop_assert!((srcc(&warped, &b).unwrap() - s).abs() < 1e-12);
        }
    }

    #[test]
    fn plcc_is_positive_affine_invariant(pairs in prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64), 3..50), scale in 0.1..10.0f64, shift in -5.0..5.0f64) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let Ok(p) = plcc(&a, &b) {
            let a2: Vec<f64> = a.iter().map(|v| scale * v + shift).collect();
            prop_assert!((plcc(&a2, &b).unwrap() - p).abs() < 1e-9);
        }
    }

    #[test]
    fn rmse_is_translation_invariant(pairs in prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64), 1..50), shift in -5.0..5.0f64) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let a2: Vec<f64> = a.iter().map(|v| v + shift).collect();
        let b2: Vec<f64> = b.iter().map(|v| v + shift).collect();
        prop_assert!((rmse(&a, &b).unwrap() - rmse(&a2, &b2).unwrap()).abs() < 1e-9);
    }
}
