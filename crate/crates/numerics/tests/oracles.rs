use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sanlite_numerics::{bicubic_resize, NumericsError, Tape, Tensor};

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

/// Direct cross-correlation with zero padding.
fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
    let [n, cin, h, wd] = x.shape().try_into().unwrap();
    let [cout, _, kh, kw] = w.shape().try_into().unwrap();
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    let mut out = Tensor::zeros(vec![n, cout, oh, ow]);
    for bi in 0..n {
        for co in 0..cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b.data()[co];
                    for ci in 0..cin {
                        for ki in 0..kh {
                            for kj in 0..kw {
                                let iy = (oy * stride + ki) as isize - pad as isize;
                                let ix = (ox * stride + kj) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                let xv = x.data()[((bi * cin + ci) * h + iy as usize) * wd + ix as usize];
                                let wv = w.data()[((co * cin + ci) * kh + ki) * kw + kj];
                                acc += xv * wv;
                            }
                        }
                    }
                    out.data_mut()[((bi * cout + co) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    out
}

fn conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, stride: usize, pad: usize) -> sanlite_numerics::Result<Tensor<f64>> {
    let mut tape = Tape::new();
    let (xv, wv, bv) = (tape.constant(x.clone())?, tape.constant(w.clone())?, tape.constant(b.clone())?);
    let y = tape.conv2d(xv, wv, bv, stride, pad)?;
    Ok(tape.value(y).clone())
}

#[test]
fn conv_identity_kernel() {
    let x = Tensor::new(vec![1, 1, 3, 3], (1..=9).map(f64::from).collect()).unwrap();
    let w = Tensor::ones(vec![1, 1, 1, 1]);
    let b = Tensor::zeros(vec![1]);
    assert_eq!(conv(&x, &w, &b, 1, 0).unwrap(), x);
}

#[test]
fn conv_shape_arithmetic() {
    let x = Tensor::<f32>::zeros(vec![2, 16, 64, 64]);
    let w = Tensor::<f32>::zeros(vec![32, 16, 3, 3]);
    let b = Tensor::<f32>::zeros(vec![32]);
    let mut tape = Tape::new();
    let (x, w, b) = (tape.constant(x).unwrap(), tape.constant(w).unwrap(), tape.constant(b).unwrap());
    let y = tape.conv2d(x, w, b, 1, 1).unwrap();
    assert_eq!(tape.value(y).shape(), &[2, 32, 64, 64]);
}

#[test]
fn conv_matches_naive_oracle_5x5() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = random(&[1, 1, 5, 5], &mut rng);
    let w = random(&[1, 1, 3, 3], &mut rng);
    let b = Tensor::zeros(vec![1]);
    let got = conv(&x, &w, &b, 1, 0).unwrap();
    let want = naive_conv(&x, &w, &b, 1, 0);
    assert_eq!(got.shape(), &[1, 1, 3, 3]);
    assert!(got.max_abs_diff(&want) < 1e-6);
}

#[test]
fn conv_matches_naive_oracle_on_small_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for trial in 0..60 {
        let k = [1, 3, 5][trial % 3];
        let h = rng.random_range(k..=8);
        let w = rng.random_range(k..=8);
        let pad = rng.random_range(0..=k / 2);
        let stride = if (h + 2 * pad - k) % 2 == 0 && (w + 2 * pad - k) % 2 == 0 && trial % 2 == 0 { 2 } else { 1 };
        let (n, cin, cout) = (rng.random_range(1..3), rng.random_range(1..4), rng.random_range(1..4));
        let x = random(&[n, cin, h, w], &mut rng);
        let wt = random(&[cout, cin, k, k], &mut rng);
        let b = random(&[cout], &mut rng);
        let got = conv(&x, &wt, &b, stride, pad).unwrap();
        let want = naive_conv(&x, &wt, &b, stride, pad);
        assert_eq!(got.shape(), want.shape());
        assert!(got.max_abs_diff(&want) < 1e-6, "trial {trial}");
    }
}

#[test]
fn conv_rejects_bad_shapes() {
    let x = Tensor::<f64>::zeros(vec![1, 2, 8, 8]);
    let b = Tensor::zeros(vec![1]);
    assert!(matches!(conv(&x, &Tensor::zeros(vec![1, 3, 3, 3]), &b, 1, 1), Err(NumericsError::Shape { .. })));
    assert!(matches!(conv(&x, &Tensor::zeros(vec![1, 2, 2, 2]), &b, 1, 0), Err(NumericsError::Shape { .. })));
    assert!(matches!(
        conv(&x, &Tensor::zeros(vec![1, 2, 3, 3]), &b, 2, 1),
        Err(NumericsError::InexactOutput { .. })
    ));
}

fn pool(x: &Tensor<f64>) -> sanlite_numerics::Result<Tensor<f64>> {
    let mut tape = Tape::new();
    let v = tape.constant(x.clone())?;
    let y = tape.max_pool2(v)?;
    Ok(tape.value(y).clone())
}

#[test]
fn max_pool_basics() {
    let c = Tensor::full(vec![1, 2, 4, 4], 0.7);
    assert_eq!(pool(&c).unwrap(), Tensor::full(vec![1, 2, 2, 2], 0.7));
    let x = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(pool(&x).unwrap().data(), &[4.0]);
    assert!(pool(&Tensor::zeros(vec![1, 1, 3, 4])).is_err());
}

#[test]
fn max_pool_matches_window_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random(&[1, 1, 8, 8], &mut rng);
    let got = pool(&x).unwrap();
    for oy in 0..4 {
        for ox in 0..4 {
            let mut m = f64::NEG_INFINITY;
            for dy in 0..2 {
                for dx in 0..2 {
                    m = m.max(x.data()[(2 * oy + dy) * 8 + 2 * ox + dx]);
                }
            }
            assert_eq!(got.data()[oy * 4 + ox], m);
        }
    }
}

#[test]
fn max_pool_tie_routes_to_first() {
    let mut tape = Tape::<f64>::new();
    let x = tape.param(Tensor::full(vec![1, 1, 2, 2], 1.0)).unwrap();
    let y = tape.max_pool2(x).unwrap();
    let s = tape.sum(y).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap().data(), &[1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn relu_tanh_concat() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::new(vec![2], vec![-1.0, 2.0]).unwrap()).unwrap();
    let r = tape.relu(x).unwrap();
    assert_eq!(tape.value(r).data(), &[0.0, 2.0]);
    let z = tape.constant(Tensor::zeros(vec![1])).unwrap();
    let t = tape.tanh(z).unwrap();
    assert_eq!(tape.value(t).data(), &[0.0]);
    let a = tape.constant(Tensor::from_fn(vec![1, 3, 8, 8], |i| i as f64)).unwrap();
    let b = tape.constant(Tensor::from_fn(vec![1, 22, 8, 8], |i| -(i as f64))).unwrap();
    let c = tape.concat_channels(&[a, b]).unwrap();
    assert_eq!(tape.value(c).shape(), &[1, 25, 8, 8]);
    assert_eq!(&tape.value(c).data()[..192], tape.value(a).data());
    assert_eq!(&tape.value(c).data()[192..], tape.value(b).data());
    let bad = tape.constant(Tensor::zeros(vec![1, 1, 4, 8])).unwrap();
    assert!(tape.concat_channels(&[a, bad]).is_err());
}

fn bicubic_oracle(x: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    let kernel = |t: f64| {
        let a = -0.5;
        let t = t.abs();
        if t <= 1.0 {
            (a + 2.0) * t.powi(3) - (a + 3.0) * t.powi(2) + 1.0
        } else if t < 2.0 {
            a * t.powi(3) - 5.0 * a * t.powi(2) + 8.0 * a * t - 4.0 * a
        } else {
            0.0
        }
    };
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut out = Vec::new();
    for oy in 0..oh {
        for ox in 0..ow {
            let sy = (oy as f64 + 0.5) * h as f64 / oh as f64 - 0.5;
            let sx = (ox as f64 + 0.5) * w as f64 / ow as f64 - 0.5;
            let mut acc = 0.0;
            for iy in (sy.floor() as isize - 1)..=(sy.floor() as isize + 2) {
                for ix in (sx.floor() as isize - 1)..=(sx.floor() as isize + 2) {
                    let wgt = kernel(sy - iy as f64) * kernel(sx - ix as f64);
                    acc += wgt * x[clamp(iy, h) * w + clamp(ix, w)];
                }
            }
            out.push(acc);
        }
    }
    out
}

#[test]
fn bicubic_identity_and_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(&[1, 2, 5, 7], &mut rng);
    assert!(bicubic_resize(&x, 5, 7).unwrap().max_abs_diff(&x) < 1e-6);
    let c = Tensor::<f64>::full(vec![1, 1, 4, 4], 0.3);
    for (oh, ow) in [(1, 1), (3, 9), (16, 16), (64, 5)] {
        let y = bicubic_resize(&c, oh, ow).unwrap();
        assert!(y.data().iter().all(|v| (v - 0.3).abs() < 1e-12));
    }
}

#[test]
fn bicubic_ramp_matches_oracle() {
    let ramp: Vec<f64> = (0..16).map(|i| (i % 4) as f64 + 0.5 * (i / 4) as f64).collect();
    let x = Tensor::new(vec![1, 1, 4, 4], ramp.clone()).unwrap();
    let got = bicubic_resize(&x, 8, 8).unwrap();
    let want = bicubic_oracle(&ramp, 4, 4, 8, 8);
    for (a, b) in got.data().iter().zip(&want) {
        assert!((a - b).abs() < 1e-5);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let r = random(&[1, 1, 6, 5], &mut rng);
    let got = bicubic_resize(&r, 13, 3).unwrap();
    let want = bicubic_oracle(r.data(), 6, 5, 13, 3);
    for (a, b) in got.data().iter().zip(&want) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn frobenius_and_l1_match_scalar_oracles() {
    let mut tape = Tape::<f64>::new();
    let p = tape.constant(Tensor::full(vec![1, 1, 2, 2], 1.0)).unwrap();
    let z = tape.constant(Tensor::zeros(vec![1, 1, 2, 2])).unwrap();
    let l = tape.frobenius_sq_loss(p, z).unwrap();
    assert_eq!(tape.value(l).item(), 4.0);
    let same = tape.frobenius_sq_loss(p, p).unwrap();
    assert_eq!(tape.value(same).item(), 0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = random(&[3, 2, 4, 4], &mut rng);
    let b = random(&[3, 2, 4, 4], &mut rng);
    let (av, bv) = (tape.constant(a.clone()).unwrap(), tape.constant(b.clone()).unwrap());
    let f = tape.frobenius_sq_loss(av, bv).unwrap();
    let l1 = tape.l1_loss(av, bv).unwrap();
    let mut sq = 0.0;
    let mut abs = 0.0;
    for i in 0..a.len() {
        let d = a.data()[i] - b.data()[i];
        sq += d * d;
        abs += d.abs();
    }
    assert!((tape.value(f).item() - sq / 3.0).abs() < 1e-6);
    assert!((tape.value(l1).item() - abs / a.len() as f64).abs() < 1e-6);
    let other = tape.constant(Tensor::zeros(vec![3, 2, 4, 5])).unwrap();
    assert!(tape.frobenius_sq_loss(av, other).is_err());
}
