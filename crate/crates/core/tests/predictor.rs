use gfiqa_core::arch::ArchConfig;
use gfiqa_core::predictor::{spade_modulate, Fusion, Map2QualityBlock, Predictor, PredictorOptions, SPADE_EPS};
use gfiqa_core::util::rng;
use gfiqa_core::Error;
use gfiqa_tensor::{no_grad, ParamStore, StatsPool, Tensor};
use rand::Rng;

fn tiny() -> ArchConfig {
    ArchConfig {
        resolution: 32,
        code_dim: 4,
        channel_base: 32,
        channel_max: 8,
        encoder_blocks: [1, 1, 1, 1],
        encoder_width: 2,
    }
}

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut r = rng(seed);
    let n = shape.iter().product();
    Tensor::from_vec((0..n).map(|_| r.random_range(-1.0..1.0)).collect(), shape)
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Direct loop convolution over `[C, H, W]` with zero padding.
fn conv(x: &[f64], c: usize, h: usize, w: &[f64], bias: Option<&[f64]>, cout: usize, k: usize, stride: usize) -> Vec<f64> {
    let pad = k / 2;
    let oh = (h + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; cout * oh * oh];
    for o in 0..cout {
        for i in 0..oh {
            for j in 0..oh {
                let mut acc = bias.map_or(0.0, |b| b[o]);
                for ci in 0..c {
                    for u in 0..k {
                        for v in 0..k {
                            let (y, xx) = ((i * stride + u) as isize - pad as isize, (j * stride + v) as isize - pad as isize);
                            if y >= 0 && xx >= 0 && (y as usize) < h && (xx as usize) < h {
                                acc += w[((o * c + ci) * k + u) * k + v] * x[(ci * h + y as usize) * h + xx as usize];
                            }
                        }
                    }
                }
                out[(o * oh + i) * oh + j] = acc;
            }
        }
    }
    out
}

#[test]
fn block_doubles_channels_and_halves_side() {
    for attention in [true, false] {
        let mut ps = ParamStore::new(false);
        let block = Map2QualityBlock::new(&mut ps, &mut rng(1), "b", 6, attention);
        let y = block.forward(&ps, &random(&[2, 6, 8, 8], 2));
        assert_eq!(y.shape(), [2, 12, 4, 4]);
    }
}

#[test]
fn attention_block_matches_loop_oracle() {
    let (c, h) = (4, 8);
    let mut ps = ParamStore::new(false);
    let block = Map2QualityBlock::new(&mut ps, &mut rng(3), "b", c, true);
    let mut r = rng(4);
    let ids: Vec<_> = ps.ids().collect();
    for id in ids {
        ps.get_mut(id).iter_mut().for_each(|v| *v = r.random_range(-0.5..0.5));
    }
    let x = random(&[1, c, h, h], 5);
    let got = block.forward(&ps, &x).to_vec();

    let xs = x.data();
    let cbam = block.attention.as_ref().unwrap();
    let (w1, b1) = (ps.get(cbam.fc1.weight), ps.get(cbam.fc1.bias.unwrap()));
    let (w2, b2) = (ps.get(cbam.fc2.weight), ps.get(cbam.fc2.bias.unwrap()));
    let hidden = b1.len();
    let mlp = |v: &[f64]| -> Vec<f64> {
        let z: Vec<f64> = (0..hidden).map(|j| (b1[j] + (0..c).map(|i| w1[j * c + i] * v[i]).sum::<f64>()).max(0.0)).collect();
        (0..c).map(|i| b2[i] + (0..hidden).map(|j| w2[i * hidden + j] * z[j]).sum::<f64>()).collect()
    };
    let plane = |ch: usize| &xs[ch * h * h..(ch + 1) * h * h];
    let avg: Vec<f64> = (0..c).map(|ch| plane(ch).iter().sum::<f64>() / (h * h) as f64).collect();
    let max: Vec<f64> = (0..c).map(|ch| plane(ch).iter().copied().fold(f64::MIN, f64::max)).collect();
    let ca: Vec<f64> = mlp(&avg).iter().zip(mlp(&max)).map(|(a, b)| sigmoid(a + b)).collect();
    let x1: Vec<f64> = (0..c * h * h).map(|i| xs[i] * ca[i / (h * h)]).collect();
    let mut desc = vec![0.0; 2 * h * h];
    for p in 0..h * h {
        let vals: Vec<f64> = (0..c).map(|ch| x1[ch * h * h + p]).collect();
        desc[p] = vals.iter().sum::<f64>() / c as f64;
        desc[h * h + p] = vals.iter().copied().fold(f64::MIN, f64::max);
    }
    let sa = conv(&desc, 2, h, ps.get(cbam.spatial.weight), None, 1, 7, 1);
    let hsum: Vec<f64> = (0..c * h * h).map(|i| xs[i] + x1[i] * sigmoid(sa[i % (h * h)])).collect();
    let want = conv(&hsum, c, h, ps.get(block.conv.weight), Some(ps.get(block.conv.bias.unwrap())), 2 * c, 3, 2);

    assert_eq!(got.len(), want.len());
    for (a, b) in got.iter().zip(&want) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn constant_channel_standardizes_to_zero() {
    let x = Tensor::from_vec(vec![3.0; 2 * 2 * 3 * 3], &[2, 2, 3, 3]);
    let gamma = random(&[2, 2, 3, 3], 6);
    let beta = random(&[2, 2, 3, 3], 7);
    for pool in [StatsPool::Batch, StatsPool::Instance] {
        let y = spade_modulate(&x, &gamma, &beta, pool).unwrap();
        assert_eq!(y.data(), beta.data());
    }
}

#[test]
fn two_channel_modulation_by_hand() {
    // One sample, channel 0 = [1, 3], channel 1 = [0, 0]: μ = 2, σ = 1.
    let x = Tensor::from_vec(vec![1.0, 3.0, 0.0, 0.0], &[1, 2, 1, 2]);
    let gamma = Tensor::from_vec(vec![2.0, 2.0, 5.0, 5.0], &[1, 2, 1, 2]);
    let beta = Tensor::from_vec(vec![0.5, 0.5, -1.0, -1.0], &[1, 2, 1, 2]);
    let y = spade_modulate(&x, &gamma, &beta, StatsPool::Instance).unwrap();
    let s = 1.0 / (1.0 + SPADE_EPS);
    let want = [0.5 - 2.0 * s, 0.5 + 2.0 * s, -1.0, -1.0];
    for (a, b) in y.data().iter().zip(want) {
        assert!((a - b).abs() < 1e-15);
    }
    assert!(spade_modulate(&x, &gamma.reshape(&[1, 4, 1, 1]), &beta, StatsPool::Instance).is_err());
}

#[test]
fn reduction_with_identity_and_zero_weights() {
    let arch = tiny();
    let (fe, half) = (arch.fe_channels(), arch.fe_channels() / 2);
    let mut ps = ParamStore::new(false);
    let p = Predictor::new(&mut ps, &arch, PredictorOptions::default(), 1).unwrap();
    let reduce_w = ps.find("predictor.reduce.weight").unwrap();
    let reduce_b = ps.find("predictor.reduce.bias").unwrap();
    let f_e = random(&[2, fe, 1, 1], 8);

    *ps.get_mut(reduce_w) = (0..half * fe).map(|i| if i / fe == i % fe { 1.0 } else { 0.0 }).collect();
    let y = p.reduce_fe(&ps, &f_e).unwrap();
    assert_eq!(y.shape(), [2, half, 1, 1]);
    for s in 0..2 {
        assert_eq!(&y.data()[s * half..(s + 1) * half], &f_e.data()[s * fe..s * fe + half]);
    }

    ps.get_mut(reduce_w).fill(0.0);
    ps.get_mut(reduce_b).fill(0.25);
    assert!(p.reduce_fe(&ps, &f_e).unwrap().data().iter().all(|&v| v == 0.25));
}

#[test]
fn trace_is_consistent() {
    let arch = tiny();
    let mut ps = ParamStore::new(false);
    let p = Predictor::new(&mut ps, &arch, PredictorOptions::default(), 2).unwrap();
    let f_e = random(&[3, arch.fe_channels(), 1, 1], 9);
    let f_g = random(&[3, arch.fg_channels(), 32, 32], 10);
    let t = p.forward(&ps, &f_e, Some(&f_g), StatsPool::Batch).unwrap();
    let half = arch.fe_channels() / 2;
    let (reduced, modulated) = (t.reduced.unwrap(), t.modulated.unwrap());
    assert_eq!(t.refined.unwrap().shape(), reduced.shape());
    for s in 0..3 {
        let row = &t.concat.data()[s * 2 * half..(s + 1) * 2 * half];
        assert_eq!(&row[..half], &reduced.data()[s * half..(s + 1) * half]);
        assert_eq!(&row[half..], &modulated.data()[s * half..(s + 1) * half]);
    }
    assert_eq!(t.quality.shape(), [3]);
    assert!(t.quality.all_finite());
}

#[test]
fn referenceless_head_matches_loop_oracle() {
    let arch = ArchConfig::toy();
    let fe = arch.fe_channels();
    let mut ps = ParamStore::new(false);
    let opts = PredictorOptions { fusion: Fusion::None, attention: false };
    let p = Predictor::new(&mut ps, &arch, opts, 3).unwrap();
    let f_e = random(&[2, fe, 2, 2], 11);
    let got = p.predict_quality(&ps, &f_e, None, StatsPool::Batch).unwrap().to_vec();

    let layer = |name: &str, input: &[f64], act: bool| -> Vec<f64> {
        let w = ps.get(ps.find(&format!("predictor.{name}.weight")).unwrap());
        let b = ps.get(ps.find(&format!("predictor.{name}.bias")).unwrap());
        (0..b.len())
            .map(|o| {
                let z = b[o] + input.iter().enumerate().map(|(i, v)| w[o * input.len() + i] * v).sum::<f64>();
                if act && z < 0.0 { 0.2 * z } else { z }
            })
            .collect()
    };
    for s in 0..2 {
        let pooled: Vec<f64> = (0..fe).map(|ch| f_e.data()[(s * fe + ch) * 4..(s * fe + ch + 1) * 4].iter().sum::<f64>() / 4.0).collect();
        let want = layer("fc3", &layer("fc2", &layer("fc1", &pooled, true), true), false)[0];
        assert!((got[s] - want).abs() < 1e-12, "{} vs {want}", got[s]);
    }
    assert!(ps.find("predictor.reduce.weight").is_none());
}

#[test]
fn missing_or_misshapen_inputs() {
    let arch = tiny();
    let mut ps = ParamStore::new(false);
    let p = Predictor::new(&mut ps, &arch, PredictorOptions::default(), 4).unwrap();
    let f_e = random(&[1, arch.fe_channels(), 1, 1], 12);
    assert!(matches!(p.forward(&ps, &f_e, None, StatsPool::Batch), Err(Error::Config(_))));
    let bad_g = random(&[1, arch.fg_channels(), 16, 16], 13);
    assert!(matches!(p.forward(&ps, &f_e, Some(&bad_g), StatsPool::Batch), Err(Error::Shape { .. })));
    let bad_e = random(&[1, 3, 1, 1], 14);
    assert!(matches!(p.forward(&ps, &bad_e, None, StatsPool::Batch), Err(Error::Shape { .. })));
}

#[test]
fn predictor_gradients_match_finite_differences() {
    let arch = tiny();
    for opts in [
        PredictorOptions::default(),
        PredictorOptions { fusion: Fusion::Concat, attention: true },
        PredictorOptions { fusion: Fusion::Modulate, attention: false },
    ] {
        let mut ps = ParamStore::new(true);
        let p = Predictor::new(&mut ps, &arch, opts, 5).unwrap();
        let f_e = random(&[2, arch.fe_channels(), 1, 1], 15);
        let f_g = random(&[2, arch.fg_channels(), 32, 32], 16);
        let target = Tensor::from_vec(vec![0.3, 0.8], &[2]);
        let loss = |ps: &ParamStore| p.predict_quality(ps, &f_e, Some(&f_g), StatsPool::Batch).unwrap().sub(&target).square().sum_all();
        let grads = loss(&ps).backward();
        let mut r = rng(17);
        let ids: Vec<_> = ps.ids().collect();
        for id in ids {
            let j = r.random_range(0..ps.get(id).len());
            let analytic = grads.param(id).map_or(0.0, |g| g[j]);
            let orig = ps.get(id)[j];
            let h = 1e-5;
            let eval = |ps: &mut ParamStore, v: f64| {
                ps.get_mut(id)[j] = v;
                let _g = no_grad();
                loss(ps).item()
            };
            let numeric = (eval(&mut ps, orig + h) - eval(&mut ps, orig - h)) / (2.0 * h);
            ps.get_mut(id)[j] = orig;
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            assert!(rel < 1e-3, "{:?} {}[{j}]: {analytic:e} vs {numeric:e}", opts, ps.name(id));
        }
    }
}

#[test]
fn identity_modulation_standardizes_channels() {
    let arch = tiny();
    let half = arch.fe_channels() / 2;
    let mut ps = ParamStore::new(false);
    let p = Predictor::new(&mut ps, &arch, PredictorOptions::default(), 6).unwrap();
    for (name, fill) in [("gamma.weight", 0.0), ("gamma.bias", 1.0), ("beta.weight", 0.0), ("beta.bias", 0.0)] {
        let id = ps.find(&format!("predictor.{name}")).unwrap();
        ps.get_mut(id).fill(fill);
    }
    let reduced = random(&[1, half, 6, 6], 18);
    let refined = random(&[1, half, 6, 6], 19);
    let m = p.modulate(&ps, &reduced, &refined, StatsPool::Instance).unwrap();
    for ch in 0..half {
        let plane = &m.data()[ch * 36..(ch + 1) * 36];
        let mean = plane.iter().sum::<f64>() / 36.0;
        let var = plane.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 36.0;
        assert!(mean.abs() < 1e-4);
        assert!((var - 1.0).abs() < 1e-3);
    }
}

#[test]
fn repeated_prediction_is_bit_identical() {
    let arch = tiny();
    let mut ps = ParamStore::new(false);
    let p = Predictor::new(&mut ps, &arch, PredictorOptions::default(), 7).unwrap();
    let f_e = random(&[2, arch.fe_channels(), 1, 1], 20);
    let f_g = random(&[2, arch.fg_channels(), 32, 32], 21);
    let a = p.predict_quality(&ps, &f_e, Some(&f_g), StatsPool::Instance).unwrap();
    let b = p.predict_quality(&ps, &f_e, Some(&f_g), StatsPool::Instance).unwrap();
    assert_eq!(a.data(), b.data());
    for seed in 0..20 {
        let big = random(&[2, arch.fe_channels(), 1, 1], 100 + seed).mul_scalar(1e3);
        assert!(p.predict_quality(&ps, &big, Some(&f_g), StatsPool::Batch).unwrap().all_finite());
    }
}
