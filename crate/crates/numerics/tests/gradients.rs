use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sanlite_numerics::{grad_check, NumericsError, Tape, Tensor};

const TOL: f64 = 1e-4;

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

#[test]
fn sum_gives_ones() {
    let mut tape = Tape::<f64>::new();
    let x = tape.param(random(&[2, 3, 4], 0)).unwrap();
    let s = tape.sum(x).unwrap();
    tape.backward(s).unwrap();
    assert!(tape.grad(x).unwrap().data().iter().all(|&g| g == 1.0));
}

#[test]
fn quadratic_gives_two_x() {
    let x0 = random(&[1, 2, 3, 3], 1);
    let mut tape = Tape::<f64>::new();
    let x = tape.param(x0.clone()).unwrap();
    let z = tape.constant(Tensor::zeros(vec![1, 2, 3, 3])).unwrap();
    let l = tape.frobenius_sq_loss(x, z).unwrap();
    tape.backward(l).unwrap();
    for (g, v) in tape.grad(x).unwrap().data().iter().zip(x0.data()) {
        assert!((g - 2.0 * v).abs() < 1e-12);
    }
}

#[test]
fn two_backward_passes_double() {
    let mut tape = Tape::<f64>::new();
    let x = tape.param(random(&[1, 2, 6, 6], 2)).unwrap();
    let w = tape.param(random(&[3, 2, 3, 3], 3)).unwrap();
    let b = tape.param(random(&[3], 4)).unwrap();
    let y = tape.conv2d(x, w, b, 1, 1).unwrap();
    let y = tape.tanh(y).unwrap();
    let l = tape.sum(y).unwrap();
    tape.backward(l).unwrap();
    let once = tape.grad(w).unwrap().clone();
    tape.backward(l).unwrap();
    let twice = tape.grad(w).unwrap();
    for (a, b) in once.data().iter().zip(twice.data()) {
        assert_eq!(2.0 * a, *b);
    }
    tape.zero_grad();
    assert!(tape.grad(w).is_none());
}

#[test]
fn backward_needs_scalar() {
    let mut tape = Tape::<f64>::new();
    let x = tape.param(random(&[2, 2], 5)).unwrap();
    assert!(matches!(tape.backward(x), Err(NumericsError::NotScalar(_))));
}

#[test]
fn non_finite_values_are_errors() {
    let mut tape = Tape::<f64>::new();
    assert!(tape.leaf(Tensor::full(vec![2], f64::NAN), false).is_err());
    let x = tape.constant(Tensor::full(vec![2], 1e308)).unwrap();
    assert!(matches!(tape.scale(x, 10.0), Err(NumericsError::NonFinite { .. })));
}

#[test]
fn linear_map_is_exact() {
    let w = random(&[1, 5], 6);
    let err = grad_check(
        |t, v| {
            let b = t.constant(Tensor::zeros(vec![1]))?;
            let y = t.linear(v[0], v[1], b)?;
            t.sum(y)
        },
        &[random(&[2, 5], 7), w],
    )
    .unwrap();
    assert!(err < 1e-9, "{err}");
}

#[test]
fn conv_relu_chain() {
    let err = grad_check(
        |t, v| {
            let y = t.conv2d(v[0], v[1], v[2], 1, 1)?;
            let y = t.relu(y)?;
            let z = t.constant(Tensor::zeros(t.value(y).shape().to_vec()))?;
            t.frobenius_sq_loss(y, z)
        },
        &[random(&[2, 2, 5, 5], 0), random(&[3, 2, 3, 3], 10), random(&[3], 11)],
    )
    .unwrap();
    assert!(err < TOL, "{err}");
}

#[test]
fn strided_conv() {
    let err = grad_check(
        |t, v| {
            let y = t.conv2d(v[0], v[1], v[2], 2, 1)?;
            let y = t.tanh(y)?;
            t.sum(y)
        },
        &[random(&[1, 2, 7, 7], 12), random(&[2, 2, 3, 3], 13), random(&[2], 14)],
    )
    .unwrap();
    assert!(err < TOL, "{err}");
}

#[test]
fn tanh_chain() {
    let err = grad_check(
        |t, v| {
            let a = t.tanh(v[0])?;
            let b = t.scale(a, 1.7)?;
            let c = t.tanh(b)?;
            let d = t.add_scalar(c, 0.3)?;
            let e = t.tanh(d)?;
            t.sum(e)
        },
        &[random(&[3, 4], 15)],
    )
    .unwrap();
    assert!(err < TOL, "{err}");
}

#[test]
fn pooling_and_upsampling() {
    let err = grad_check(
        |t, v| {
            let a = t.max_pool2(v[0])?;
            let b = t.upsample_nearest2(a)?;
            let c = t.avg_pool2(b)?;
            let c = t.tanh(c)?;
            let d = t.scale(c, 3.0)?;
            let z = t.constant(Tensor::full(t.value(d).shape().to_vec(), 0.2))?;
            t.frobenius_sq_loss(d, z)
        },
        &[random(&[2, 2, 8, 8], 16)],
    )
    .unwrap();
    assert!(err < TOL, "{err}");
}

#[test]
fn concat_add_and_leaky() {
    let err = grad_check(
        |t, v| {
            let c = t.concat_channels(&[v[0], v[1]])?;
            let l = t.leaky_relu(c, 0.2)?;
            let s = t.add(l, v[2])?;
            let q = t.tanh(s)?;
            t.sum(q)
        },
        &[random(&[2, 1, 3, 3], 17), random(&[2, 2, 3, 3], 18), random(&[2, 3, 3, 3], 19)],
    )
    .unwrap();
    assert!(err < TOL, "{err}");
}

#[test]
fn pooled_linear_cross_entropy() {
    let err = grad_check(
        |t, v| {
            let p = t.global_avg_pool(v[0])?;
            let y = t.linear(p, v[1], v[2])?;
            t.softmax_cross_entropy(y, &[0, 3, 1])
        },
        &[random(&[3, 5, 4, 4], 20), random(&[4, 5], 21), random(&[4], 22)],
    )
    .unwrap();
    assert!(err < TOL, "{err}");
}

#[test]
fn l1_and_mse_losses() {
    let err = grad_check(
        |t, v| {
            let a = t.l1_loss(v[0], v[1])?;
            let b = t.mse_to_const(v[0], 1.0)?;
            let b = t.scale(b, 0.5)?;
            t.add(a, b)
        },
        &[random(&[2, 3, 4, 4], 23), random(&[2, 3, 4, 4], 24)],
    )
    .unwrap();
    assert!(err < TOL, "{err}");
}

#[test]
fn frobenius_against_learned_target() {
    let err = grad_check(
        |t, v| t.frobenius_sq_loss(v[0], v[1]),
        &[random(&[2, 3, 4, 4], 25), random(&[2, 3, 4, 4], 26)],
    )
    .unwrap();
    assert!(err < TOL, "{err}");
}
